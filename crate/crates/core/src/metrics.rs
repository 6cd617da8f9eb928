//! Agreement statistics and report tables.
//!
//! Kappas are computed from integer counts: with `n` cases, `agree`
//! matching cases and `S = Σ_c n_a(c)·n_b(c)`, `κ = (n·agree − S)/(n² − S)`.
//! When `S = n²` chance agreement is certain and kappa is undefined; it is
//! then reported as 1 for perfect agreement and 0 otherwise, or as `-` in
//! strict rendering.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::hash::Hash;

use crate::corpus::{self, ClassLabel, Corpus, Partition, SplitAssignment, ValueLabel};
use crate::error::{Error, Result};
use crate::numlex;
use crate::rational::Rational;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    pub n_cases: usize,
    pub degenerate: bool,
}

impl KappaResult {
    /// Three decimals, or `-` for a degenerate kappa under strict rendering.
    pub fn render(&self, strict: bool) -> String {
        if strict && self.degenerate {
            "-".to_string()
        } else {
            format!("{:.3}", self.kappa)
        }
    }
}

pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<KappaResult> {
    if a.len() != b.len() {
        return Err(Error::structural(format!("kappa over sequences of length {} and {}", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::structural("kappa over empty sequences"));
    }
    let n = a.len() as u128;
    let mut ca: HashMap<&T, u128> = HashMap::new();
    let mut cb: HashMap<&T, u128> = HashMap::new();
    let mut agree = 0u128;
    for (x, y) in a.iter().zip(b) {
        *ca.entry(x).or_default() += 1;
        *cb.entry(y).or_default() += 1;
        if x == y {
            agree += 1;
        }
    }
    let s: u128 = ca.iter().map(|(c, na)| na * cb.get(c).copied().unwrap_or(0)).sum();
    let nn = n * n;
    let p_o = agree as f64 / n as f64;
    let p_e = s as f64 / nn as f64;
    let degenerate = s == nn;
    let kappa = if degenerate {
        if agree == n {
            1.0
        } else {
            0.0
        }
    } else {
        (n as f64 * agree as f64 - s as f64) / (nn as f64 - s as f64)
    };
    Ok(KappaResult {
        kappa,
        p_o,
        p_e,
        n_cases: a.len(),
        degenerate,
    })
}

/// `[κ₀, κ₁, κᵥ]`: kappa of each class against the rest.
pub fn one_vs_rest_kappas(a: &[ClassLabel], b: &[ClassLabel]) -> Result<[KappaResult; 3]> {
    let k = |c: ClassLabel| {
        let ba: Vec<bool> = a.iter().map(|x| *x == c).collect();
        let bb: Vec<bool> = b.iter().map(|x| *x == c).collect();
        cohen_kappa(&ba, &bb)
    };
    Ok([k(ClassLabel::Zero)?, k(ClassLabel::One)?, k(ClassLabel::Other)?])
}

/// A hit count over a restricted set of cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Rate {
    pub hits: usize,
    pub total: usize,
}

impl Rate {
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    pub fn render(&self) -> String {
        self.value().map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        if hit {
            self.hits += 1;
        }
    }
}

/// Fraction of pairs with equal stated values, among pairs where at least
/// one side is stated.
pub fn exact_match_rate(pairs: &[(ValueLabel, ValueLabel)]) -> Rate {
    let mut r = Rate::default();
    for (a, b) in pairs {
        if a.is_stated() || b.is_stated() {
            r.add(a.is_stated() && a == b);
        }
    }
    r
}

/// What the engine produced for one slot of one response.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineOutput {
    pub class: ClassLabel,
    /// Choice of each identification member, `None` when the response has
    /// no numbers.
    pub member_choices: BTreeMap<String, Option<Rational>>,
    pub ensemble_choice: Option<Rational>,
}

impl EngineOutput {
    /// Final answer of the pipeline: the class for 0 and 1, otherwise the
    /// ensemble's value.
    pub fn final_value(&self) -> ValueLabel {
        match self.class {
            ClassLabel::Zero => ValueLabel::Stated(Rational::ZERO),
            ClassLabel::One => ValueLabel::Stated(Rational::ONE),
            ClassLabel::Other => self.ensemble_choice.map_or(ValueLabel::Absent, ValueLabel::Stated),
        }
    }
}

pub type EngineOutputs = BTreeMap<(String, String), EngineOutput>;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRow {
    pub prompt_id: String,
    pub responses: usize,
    pub slots: usize,
    pub irr_kappas: [KappaResult; 3],
    pub irr_p: Rate,
    pub engine_kappas: [KappaResult; 3],
    /// Pipeline value against resolved, over resolved-stated cases.
    pub engine_p: Rate,
    /// Identification accuracy per member, over resolved Other cases.
    pub member_p: BTreeMap<String, Rate>,
    pub ensemble_p: Rate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotRow {
    pub prompt_id: String,
    pub slot_id: String,
    pub n_other: usize,
    pub missing: usize,
    pub irr_p: Rate,
    pub member_p: BTreeMap<String, Rate>,
    pub ensemble_p: Rate,
}

impl SlotRow {
    pub fn bound(&self) -> Option<f64> {
        (self.n_other > 0).then(|| (self.n_other - self.missing) as f64 / self.n_other as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgreementReport {
    pub members: Vec<String>,
    /// Prompts in ascending id order, then the pooled `Total` row.
    pub prompts: Vec<PromptRow>,
    /// Slots in prompt then slot order, then the pooled `all` row.
    pub slots: Vec<SlotRow>,
}

#[derive(Default)]
struct Pool {
    r1: Vec<ClassLabel>,
    r2: Vec<ClassLabel>,
    resolved: Vec<ClassLabel>,
    engine: Vec<ClassLabel>,
    irr_p: Rate,
    engine_p: Rate,
    member_p: BTreeMap<String, Rate>,
    ensemble_p: Rate,
    responses: usize,
    slots: usize,
}

impl Pool {
    fn absorb(&mut self, o: &Pool) {
        self.r1.extend_from_slice(&o.r1);
        self.r2.extend_from_slice(&o.r2);
        self.resolved.extend_from_slice(&o.resolved);
        self.engine.extend_from_slice(&o.engine);
        for (mine, theirs) in [(&mut self.irr_p, o.irr_p), (&mut self.engine_p, o.engine_p), (&mut self.ensemble_p, o.ensemble_p)] {
            mine.hits += theirs.hits;
            mine.total += theirs.total;
        }
        for (k, v) in &o.member_p {
            let e = self.member_p.entry(k.clone()).or_default();
            e.hits += v.hits;
            e.total += v.total;
        }
        self.responses += o.responses;
        self.slots = self.slots.max(o.slots);
    }

    fn row(&self, prompt_id: &str) -> Result<PromptRow> {
        let empty = || one_vs_rest_kappas(&[ClassLabel::Zero], &[ClassLabel::Zero]);
        let (irr, eng) = if self.r1.is_empty() {
            (empty()?, empty()?)
        } else {
            (one_vs_rest_kappas(&self.r1, &self.r2)?, one_vs_rest_kappas(&self.engine, &self.resolved)?)
        };
        Ok(PromptRow {
            prompt_id: prompt_id.to_string(),
            responses: self.responses,
            slots: self.slots,
            irr_kappas: irr,
            irr_p: self.irr_p,
            engine_kappas: eng,
            engine_p: self.engine_p,
            member_p: self.member_p.clone(),
            ensemble_p: self.ensemble_p,
        })
    }
}

/// Builds the agreement report over the `partition` records of `corpus`.
pub fn build_report(
    corpus: &Corpus,
    split: &SplitAssignment,
    partition: Partition,
    members: &[String],
    outputs: &EngineOutputs,
) -> Result<AgreementReport> {
    let mut missing_ids = Vec::new();
    let mut per_prompt: BTreeMap<String, Pool> = BTreeMap::new();
    let mut slot_rows: BTreeMap<(String, usize), SlotRow> = BTreeMap::new();
    for record in corpus.records_in(split, partition) {
        let prompt = corpus.prompt_of(record);
        let pool = per_prompt.entry(prompt.prompt_id.clone()).or_default();
        pool.responses += 1;
        pool.slots = prompt.slots.len();
        let values = numlex::number_sequence(&record.text);
        for (si, (slot, labels)) in prompt.slots.iter().zip(&record.labels).enumerate() {
            let srow = slot_rows
                .entry((prompt.prompt_id.clone(), si))
                .or_insert_with(|| SlotRow {
                    prompt_id: prompt.prompt_id.clone(),
                    slot_id: slot.slot_id.clone(),
                    n_other: 0,
                    missing: 0,
                    irr_p: Rate::default(),
                    member_p: members.iter().map(|m| (m.clone(), Rate::default())).collect(),
                    ensemble_p: Rate::default(),
                });
            let key = (record.response_id.clone(), slot.slot_id.clone());
            let Some(out) = outputs.get(&key) else {
                missing_ids.push(format!("{}/{}", key.0, key.1));
                continue;
            };
            pool.r1.push(labels.rater1.class());
            pool.r2.push(labels.rater2.class());
            pool.resolved.push(labels.resolved.class());
            pool.engine.push(out.class);
            let irr = exact_match_rate(&[(labels.rater1.clone(), labels.rater2.clone())]);
            if irr.total > 0 {
                pool.irr_p.add(irr.hits == 1);
                srow.irr_p.add(irr.hits == 1);
            }
            if labels.resolved.is_stated() {
                pool.engine_p.add(out.final_value() == labels.resolved);
            }
            if labels.resolved.class() == ClassLabel::Other {
                let gold = labels.resolved.value();
                srow.n_other += 1;
                if !gold.is_some_and(|v| corpus::value_present(&values, &v)) {
                    srow.missing += 1;
                }
                for m in members {
                    let hit = out.member_choices.get(m).copied().flatten() == gold;
                    pool.member_p.entry(m.clone()).or_default().add(hit);
                    srow.member_p.entry(m.clone()).or_default().add(hit);
                }
                let hit = out.ensemble_choice == gold;
                pool.ensemble_p.add(hit);
                srow.ensemble_p.add(hit);
            }
        }
    }
    if !missing_ids.is_empty() {
        let shown: Vec<&str> = missing_ids.iter().take(10).map(String::as_str).collect();
        return Err(Error::data(format!(
            "engine outputs missing for {} cases: {}",
            missing_ids.len(),
            shown.join(", ")
        )));
    }
    let mut total = Pool::default();
    let mut prompts = Vec::new();
    for (id, pool) in &per_prompt {
        prompts.push(pool.row(id)?);
        total.absorb(pool);
    }
    total.slots = per_prompt.values().map(|p| p.slots).sum();
    prompts.push(total.row("Total")?);

    let mut slots: Vec<SlotRow> = slot_rows.into_values().collect();
    let mut all = SlotRow {
        prompt_id: "all".to_string(),
        slot_id: "all".to_string(),
        n_other: 0,
        missing: 0,
        irr_p: Rate::default(),
        member_p: members.iter().map(|m| (m.clone(), Rate::default())).collect(),
        ensemble_p: Rate::default(),
    };
    for s in &slots {
        all.n_other += s.n_other;
        all.missing += s.missing;
        all.irr_p.hits += s.irr_p.hits;
        all.irr_p.total += s.irr_p.total;
        for (m, r) in &s.member_p {
            let e = all.member_p.entry(m.clone()).or_default();
            e.hits += r.hits;
            e.total += r.total;
        }
        all.ensemble_p.hits += s.ensemble_p.hits;
        all.ensemble_p.total += s.ensemble_p.total;
    }
    slots.push(all);
    Ok(AgreementReport {
        members: members.to_vec(),
        prompts,
        slots,
    })
}

impl AgreementReport {
    pub fn total(&self) -> &PromptRow {
        self.prompts.last().expect("report always has a Total row")
    }

    fn prompt_table(&self, strict: bool) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header: Vec<String> = [
            "prompt", "N", "V", "irr_k0", "irr_k1", "irr_kv", "irr_p", "eng_k0", "eng_k1", "eng_kv", "eng_p",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend(self.members.iter().map(|m| format!("p_{m}")));
        header.push("p_ensemble".to_string());
        let rows = self
            .prompts
            .iter()
            .map(|r| {
                let mut row = vec![r.prompt_id.clone(), r.responses.to_string(), r.slots.to_string()];
                row.extend(r.irr_kappas.iter().map(|k| k.render(strict)));
                row.push(r.irr_p.render());
                row.extend(r.engine_kappas.iter().map(|k| k.render(strict)));
                row.push(r.engine_p.render());
                row.extend(self.members.iter().map(|m| r.member_p.get(m).copied().unwrap_or_default().render()));
                row.push(r.ensemble_p.render());
                row
            })
            .collect();
        (header, rows)
    }

    fn slot_table(&self) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header: Vec<String> = ["prompt", "slot", "N", "M", "bound", "irr_p"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        header.extend(self.members.iter().map(|m| format!("p_{m}")));
        header.push("p_ensemble".to_string());
        let rows = self
            .slots
            .iter()
            .map(|s| {
                let mut row = vec![
                    s.prompt_id.clone(),
                    s.slot_id.clone(),
                    s.n_other.to_string(),
                    s.missing.to_string(),
                    s.bound().map_or_else(|| "-".to_string(), |b| format!("{b:.3}")),
                    s.irr_p.render(),
                ];
                row.extend(self.members.iter().map(|m| s.member_p.get(m).copied().unwrap_or_default().render()));
                row.push(s.ensemble_p.render());
                row
            })
            .collect();
        (header, rows)
    }

    pub fn prompts_csv(&self, strict: bool) -> String {
        csv(self.prompt_table(strict))
    }

    pub fn slots_csv(&self) -> String {
        csv(self.slot_table())
    }

    pub fn render_text(&self, strict: bool) -> String {
        let mut out = aligned(self.prompt_table(strict));
        out.push('\n');
        out.push_str(&aligned(self.slot_table()));
        out
    }
}

fn csv((header, rows): (Vec<String>, Vec<Vec<String>>)) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

fn aligned((header, rows): (Vec<String>, Vec<Vec<String>>)) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for r in std::iter::once(&header).chain(&rows) {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| if i < 2 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// κ from a confusion matrix by the textbook formula.
    fn oracle(m: &[Vec<u64>]) -> f64 {
        let k = m.len();
        let n: u64 = m.iter().flatten().sum();
        let n = n as f64;
        let p_o: f64 = (0..k).map(|i| m[i][i] as f64).sum::<f64>() / n;
        let p_e: f64 = (0..k)
            .map(|i| {
                let row: u64 = m[i].iter().sum();
                let col: u64 = m.iter().map(|r| r[i]).sum();
                row as f64 * col as f64 / (n * n)
            })
            .sum();
        (p_o - p_e) / (1.0 - p_e)
    }

    fn expand(m: &[Vec<u64>]) -> (Vec<usize>, Vec<usize>) {
        let (mut a, mut b) = (Vec::new(), Vec::new());
        for (i, row) in m.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                for _ in 0..*c {
                    a.push(i);
                    b.push(j);
                }
            }
        }
        (a, b)
    }

    #[test]
    fn hand_examples() {
        let k = cohen_kappa(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert_eq!((k.p_o, k.p_e), (0.75, 0.5));
        assert!((k.kappa - 0.5).abs() < 1e-12);
        let k = cohen_kappa(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap();
        assert_eq!(k.kappa, 1.0);
        // p_o = p_e = 0.5
        let k = cohen_kappa(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(k.kappa, 0.0);
        assert!(cohen_kappa::<u8>(&[], &[]).is_err());
        assert!(cohen_kappa(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn degenerate_convention() {
        let z = vec![ClassLabel::Zero; 5];
        let ks = one_vs_rest_kappas(&z, &z).unwrap();
        for k in &ks {
            assert!(k.degenerate);
            assert_eq!(k.kappa, 1.0);
            assert_eq!(k.render(false), "1.000");
            assert_eq!(k.render(true), "-");
        }
    }

    #[test]
    fn confusion_matrices() {
        let mats: Vec<Vec<Vec<u64>>> = vec![
            vec![vec![20, 5], vec![10, 15]],
            vec![vec![45, 15], vec![25, 15]],
            vec![vec![25, 35], vec![5, 35]],
            vec![vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 9]],
            vec![vec![50, 0, 0], vec![0, 30, 0], vec![0, 0, 20]],
            vec![vec![0, 10], vec![10, 0]],
        ];
        for m in &mats {
            let (a, b) = expand(m);
            let k = cohen_kappa(&a, &b).unwrap();
            assert!((k.kappa - oracle(m)).abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn exact_match_examples() {
        let s = |n, d| ValueLabel::Stated(Rational::new(n, d).unwrap());
        let pairs = vec![
            (s(2, 1), s(2, 1)),
            (s(3, 1), s(5, 1)),
            (ValueLabel::Absent, s(7, 1)),
            (s(1, 2), "0.5".parse().unwrap()),
            (ValueLabel::Absent, ValueLabel::Absent),
        ];
        let r = exact_match_rate(&pairs);
        assert_eq!((r.hits, r.total), (2, 4));
        assert_eq!(r.value(), Some(0.5));
        assert_eq!(exact_match_rate(&[(ValueLabel::Absent, ValueLabel::Absent)]).value(), None);
    }

    fn class_seq() -> impl Strategy<Value = Vec<(ClassLabel, ClassLabel)>> {
        proptest::collection::vec((0usize..3, 0usize..3), 1..60).prop_map(|v| {
            v.into_iter()
                .map(|(a, b)| (ClassLabel::ALL[a], ClassLabel::ALL[b]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn kappa_symmetric_and_bounded(pairs in class_seq()) {
            let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let x = cohen_kappa(&a, &b).unwrap();
            let y = cohen_kappa(&b, &a).unwrap();
            prop_assert_eq!(x, y);
            prop_assert!((-1.0..=1.0).contains(&x.kappa));
            if !x.degenerate {
                prop_assert!((x.kappa - (x.p_o - x.p_e) / (1.0 - x.p_e)).abs() < 1e-12);
            }
            let s = cohen_kappa(&a, &a).unwrap();
            let distinct: std::collections::HashSet<_> = a.iter().collect();
            if distinct.len() >= 2 {
                prop_assert_eq!(s.kappa, 1.0);
            }
        }

        #[test]
        fn one_vs_rest_matches_hand_binarization(pairs in class_seq(), split in 0usize..60) {
            let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let cut = split.min(a.len());
            // pooling two "prompts" then computing equals computing on the pooled multiset
            let pooled_a: Vec<_> = a[..cut].iter().chain(&a[cut..]).copied().collect();
            let pooled_b: Vec<_> = b[..cut].iter().chain(&b[cut..]).copied().collect();
            let ks = one_vs_rest_kappas(&pooled_a, &pooled_b).unwrap();
            for (i, c) in ClassLabel::ALL.iter().enumerate() {
                let ba: Vec<u8> = a.iter().map(|x| u8::from(x == c)).collect();
                let bb: Vec<u8> = b.iter().map(|x| u8::from(x == c)).collect();
                prop_assert_eq!(ks[i], cohen_kappa(&ba, &bb).unwrap());
            }
        }

        #[test]
        fn exact_match_representation_invariant(vals in proptest::collection::vec((0i64..5, 1i64..4, 0i64..5, 1i64..4, 1i64..4), 1..20)) {
            let pairs: Vec<_> = vals.iter().map(|&(a, b, c, d, _)| {
                (ValueLabel::Stated(Rational::new(a, b).unwrap()), ValueLabel::Stated(Rational::new(c, d).unwrap()))
            }).collect();
            let scaled: Vec<_> = vals.iter().map(|&(a, b, c, d, k)| {
                (ValueLabel::Stated(Rational::new(a * k, b * k).unwrap()), ValueLabel::Stated(Rational::new(c * k, d * k).unwrap()))
            }).collect();
            prop_assert_eq!(exact_match_rate(&pairs), exact_match_rate(&scaled));
        }
    }
}
