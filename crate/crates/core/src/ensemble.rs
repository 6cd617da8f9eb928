//! Convex combinations of identifier scores, with weights fitted per slot to
//! maximize development-set exact-match accuracy.
//!
//! Accuracy is piecewise constant in the weights, so the line searches of
//! the direction-set method are exact: along a line the combined score of
//! every placeholder is affine, and the chosen value can only change where
//! a gold-valued and a non-gold placeholder cross. All crossings are swept
//! and the best open piece wins.
//!
//! # Weights file
//!
//! ```text
//! #valueid-weights v1 mode=per-slot
//! prompt_id,slot_id,model_id,alpha,dev_accuracy
//! p1,s1,context,0.5,0.97
//! ```
//!
//! `dev_accuracy` is empty when the slot had no development cases and the
//! weights fell back to uniform. Global fits use `*` for both ids.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::corpus;
use crate::error::{Error, Result};
use crate::identify::{select_value, TokenScores, ValueChoice};
use crate::numlex::MaskedText;
use crate::rational::Rational;

pub const WEIGHTS_HEADER: &str = "#valueid-weights v1";
pub const GLOBAL_ID: &str = "*";
pub const MAX_SWEEPS: usize = 20;
const GRID_STEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() {
            return Err(Error::structural("ensemble needs at least one member"));
        }
        if alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::data("ensemble weights must lie in [0,1]"));
        }
        let s: f64 = alphas.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!("ensemble weights sum to {s}, not 1")));
        }
        Ok(EnsembleWeights(alphas))
    }

    pub fn uniform(m: usize) -> Self {
        EnsembleWeights(vec![1.0 / m as f64; m])
    }

    pub fn vertex(m: usize, k: usize) -> Self {
        let mut a = vec![0.0; m];
        a[k] = 1.0;
        EnsembleWeights(a)
    }

    /// Clips negatives produced by rounding and renormalizes.
    fn project(raw: &[f64]) -> Self {
        let clipped: Vec<f64> = raw.iter().map(|a| a.max(0.0)).collect();
        let s: f64 = clipped.iter().sum();
        EnsembleWeights(clipped.iter().map(|a| a / s).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `P_j = Σ_i α_i p_ij`.
pub fn combine_scores(member_scores: &[&TokenScores], weights: &EnsembleWeights) -> Result<TokenScores> {
    if member_scores.len() != weights.len() {
        return Err(Error::structural(format!(
            "{} member score vectors for {} weights",
            member_scores.len(),
            weights.len()
        )));
    }
    let n = member_scores.first().map_or(0, |s| s.len());
    if member_scores.iter().any(|s| s.len() != n) {
        return Err(Error::structural("member score vectors differ in length"));
    }
    let mut out = vec![0.0; n];
    for (s, a) in member_scores.iter().zip(weights.as_slice()) {
        for (o, p) in out.iter_mut().zip(s.as_slice()) {
            *o += a * p;
        }
    }
    Ok(TokenScores::from_combined(out))
}

/// One development case: every member's scores and the gold value.
#[derive(Debug, Clone, PartialEq)]
pub struct DevCase {
    pub member_scores: Vec<TokenScores>,
    pub values: Vec<Rational>,
    pub gold: Rational,
}

struct Prepared {
    /// `m × n`, member-major.
    scores: Vec<Vec<f64>>,
    gold: Vec<bool>,
}

impl Prepared {
    fn combined(&self, alpha: &[f64], j: usize) -> f64 {
        self.scores.iter().zip(alpha).map(|(s, a)| a * s[j]).sum()
    }

    fn correct(&self, alpha: &[f64]) -> bool {
        let n = self.gold.len();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            let v = self.combined(alpha, j);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((j, v));
            }
        }
        best.is_some_and(|(j, _)| self.gold[j])
    }

    fn correct_at(&self, a: &[f64], b: &[f64], t: f64) -> bool {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.gold.len() {
            let v = a[j] + t * b[j];
            if best.is_none_or(|(_, x)| v > x) {
                best = Some((j, v));
            }
        }
        best.is_some_and(|(j, _)| self.gold[j])
    }
}

fn prepare(cases: &[DevCase], m: usize) -> Result<Vec<Prepared>> {
    cases
        .iter()
        .map(|c| {
            if c.member_scores.len() != m {
                return Err(Error::structural(format!(
                    "dev case has {} member score vectors, expected {m}",
                    c.member_scores.len()
                )));
            }
            if c.member_scores.iter().any(|s| s.len() != c.values.len()) {
                return Err(Error::structural("dev case scores do not match its values"));
            }
            Ok(Prepared {
                scores: c.member_scores.iter().map(|s| s.as_slice().to_vec()).collect(),
                gold: c.values.iter().map(|v| *v == c.gold).collect(),
            })
        })
        .collect()
}

fn hits(cases: &[Prepared], alpha: &[f64]) -> usize {
    cases.iter().filter(|c| c.correct(alpha)).count()
}

/// Feasible `t` range keeping `alpha + t·delta` on the simplex.
fn feasible(alpha: &[f64], delta: &[f64]) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for (a, d) in alpha.iter().zip(delta) {
        if *d > 1e-15 {
            lo = lo.max(-a / d);
            hi = hi.min((1.0 - a) / d);
        } else if *d < -1e-15 {
            lo = lo.max((1.0 - a) / d);
            hi = hi.min(-a / d);
        }
    }
    (lo.is_finite() && hi.is_finite() && hi - lo > 1e-12).then_some((lo.min(0.0), hi.max(0.0)))
}

/// Best open piece of the line through `alpha` along `delta`, if it beats
/// `current` hits. Returns the moved weights and their verified hits.
fn line_search(cases: &[Prepared], alpha: &[f64], delta: &[f64], current: usize) -> Option<(Vec<f64>, usize)> {
    let (lo, hi) = feasible(alpha, delta)?;
    let mut local: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = Vec::with_capacity(cases.len());
    let mut global = vec![lo, hi];
    for c in cases {
        let n = c.gold.len();
        let a: Vec<f64> = (0..n).map(|j| c.combined(alpha, j)).collect();
        let b: Vec<f64> = (0..n).map(|j| c.combined(delta, j)).collect();
        let mut bps = Vec::new();
        for g in (0..n).filter(|&j| c.gold[j]) {
            for k in (0..n).filter(|&j| !c.gold[j]) {
                let db = b[g] - b[k];
                if db.abs() > 1e-15 {
                    let t = (a[k] - a[g]) / db;
                    if t > lo && t < hi {
                        bps.push(t);
                    }
                }
            }
        }
        bps.sort_by(f64::total_cmp);
        bps.dedup();
        global.extend_from_slice(&bps);
        local.push((a, b, bps));
    }
    global.sort_by(f64::total_cmp);
    global.dedup();
    let pieces = global.len() - 1;
    let mut diff = vec![0i64; pieces + 1];
    for (c, (a, b, bps)) in cases.iter().zip(&local) {
        let mut edges = Vec::with_capacity(bps.len() + 2);
        edges.push(lo);
        edges.extend_from_slice(bps);
        edges.push(hi);
        for w in edges.windows(2) {
            if c.correct_at(a, b, 0.5 * (w[0] + w[1])) {
                let start = global.partition_point(|x| *x < w[0]);
                let end = global.partition_point(|x| *x < w[1]);
                diff[start] += 1;
                diff[end] -= 1;
            }
        }
    }
    let mut run = 0i64;
    let mut best: Option<(usize, i64)> = None;
    for (i, d) in diff.iter().take(pieces).enumerate() {
        run += d;
        if best.is_none_or(|(_, b)| run > b) {
            best = Some((i, run));
        }
    }
    let (i, count) = best?;
    if count as usize <= current {
        return None;
    }
    let t = 0.5 * (global[i] + global[i + 1]);
    let raw: Vec<f64> = alpha.iter().zip(delta).map(|(a, d)| a + t * d).collect();
    let moved = EnsembleWeights::project(&raw).0;
    let h = hits(cases, &moved);
    (h > current).then_some((moved, h))
}

/// Direction-set search over the free coordinates α₁..α_{m-1}; the last
/// weight absorbs the remainder.
fn powell(cases: &[Prepared], start: &[f64]) -> (Vec<f64>, usize) {
    let m = start.len();
    let mut alpha = start.to_vec();
    let mut h = hits(cases, &alpha);
    if m < 2 {
        return (alpha, h);
    }
    let mut dirs: Vec<Vec<f64>> = (0..m - 1)
        .map(|i| {
            let mut d = vec![0.0; m];
            d[i] = 1.0;
            d[m - 1] = -1.0;
            d
        })
        .collect();
    for _ in 0..MAX_SWEEPS {
        let sweep_start = alpha.clone();
        let sweep_hits = h;
        let mut biggest = (0usize, 0usize);
        for (k, d) in dirs.iter().enumerate() {
            if let Some((a, nh)) = line_search(cases, &alpha, d, h) {
                if nh - h > biggest.1 {
                    biggest = (k, nh - h);
                }
                alpha = a;
                h = nh;
            }
        }
        if h == sweep_hits {
            break;
        }
        let new_dir: Vec<f64> = alpha.iter().zip(&sweep_start).map(|(a, s)| a - s).collect();
        if new_dir.iter().any(|x| x.abs() > 1e-12) {
            if let Some((a, nh)) = line_search(cases, &alpha, &new_dir, h) {
                alpha = a;
                h = nh;
            }
            dirs.remove(biggest.0);
            dirs.push(new_dir);
        }
    }
    (alpha, h)
}

fn grid(m: usize) -> Vec<Vec<f64>> {
    let step = 1.0 / GRID_STEPS as f64;
    match m {
        2 => (0..=GRID_STEPS).map(|i| vec![i as f64 * step, 1.0 - i as f64 * step]).collect(),
        3 => {
            let mut out = Vec::new();
            for i in 0..=GRID_STEPS {
                for j in 0..=GRID_STEPS - i {
                    let (a, b) = (i as f64 * step, j as f64 * step);
                    out.push(vec![a, b, (1.0 - a - b).max(0.0)]);
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotFit {
    pub weights: EnsembleWeights,
    /// `None` when there were no development cases.
    pub dev_accuracy: Option<f64>,
    pub member_accuracies: Vec<f64>,
    pub n_dev: usize,
}

impl SlotFit {
    pub fn is_fallback(&self) -> bool {
        self.dev_accuracy.is_none()
    }
}

/// Fits the weights of one slot. The result is the best of the search
/// started at the centroid, the searches started at every vertex, the
/// vertices themselves and, for up to three members, a 0.01 grid; ties keep
/// the earliest candidate in that order.
pub fn fit_slot(cases: &[DevCase], m: usize) -> Result<SlotFit> {
    if m == 0 {
        return Err(Error::structural("ensemble needs at least one member"));
    }
    if cases.is_empty() {
        return Ok(SlotFit {
            weights: EnsembleWeights::uniform(m),
            dev_accuracy: None,
            member_accuracies: vec![],
            n_dev: 0,
        });
    }
    let prepared = prepare(cases, m)?;
    let n = cases.len() as f64;
    let vertices: Vec<Vec<f64>> = (0..m).map(|k| EnsembleWeights::vertex(m, k).0).collect();
    let mut best = powell(&prepared, &EnsembleWeights::uniform(m).0);
    let mut consider = |cand: (Vec<f64>, usize)| {
        if cand.1 > best.1 {
            best = cand;
        }
    };
    for v in &vertices {
        consider(powell(&prepared, v));
    }
    for v in &vertices {
        consider((v.clone(), hits(&prepared, v)));
    }
    for g in grid(m) {
        let h = hits(&prepared, &g);
        consider((g, h));
    }
    let member_accuracies = vertices.iter().map(|v| hits(&prepared, v) as f64 / n).collect();
    Ok(SlotFit {
        weights: EnsembleWeights::project(&best.0),
        dev_accuracy: Some(best.1 as f64 / n),
        member_accuracies,
        n_dev: cases.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitMode {
    PerSlot,
    Global,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedEnsemble {
    members: Vec<String>,
    mode: FitMode,
    slots: BTreeMap<(String, String), SlotFit>,
}

/// Fits weights for every `(prompt_id, slot_id)` key of `dev`. In global
/// mode all cases are pooled and one fit is stored under `("*", "*")`.
pub fn fit_weights(
    members: &[String],
    dev: &BTreeMap<(String, String), Vec<DevCase>>,
    mode: FitMode,
) -> Result<FittedEnsemble> {
    let m = members.len();
    let mut slots = BTreeMap::new();
    match mode {
        FitMode::PerSlot => {
            for (key, cases) in dev {
                slots.insert(key.clone(), fit_slot(cases, m)?);
            }
        }
        FitMode::Global => {
            let all: Vec<DevCase> = dev.values().flatten().cloned().collect();
            slots.insert((GLOBAL_ID.to_string(), GLOBAL_ID.to_string()), fit_slot(&all, m)?);
        }
    }
    Ok(FittedEnsemble {
        members: members.to_vec(),
        mode,
        slots,
    })
}

impl FittedEnsemble {
    pub fn members(&self) -> &[String] {
        &self.members
    }

    pub fn mode(&self) -> FitMode {
        self.mode
    }

    pub fn slots(&self) -> &BTreeMap<(String, String), SlotFit> {
        &self.slots
    }

    pub fn slot(&self, prompt_id: &str, slot_id: &str) -> Option<&SlotFit> {
        self.slots
            .get(&(prompt_id.to_string(), slot_id.to_string()))
            .or_else(|| self.slots.get(&(GLOBAL_ID.to_string(), GLOBAL_ID.to_string())))
    }

    pub fn render(&self) -> String {
        let mode = match self.mode {
            FitMode::PerSlot => "per-slot",
            FitMode::Global => "global",
        };
        let mut out = format!("{WEIGHTS_HEADER} mode={mode}\nprompt_id,slot_id,model_id,alpha,dev_accuracy\n");
        for ((p, s), fit) in &self.slots {
            let acc = fit.dev_accuracy.map(|a| a.to_string()).unwrap_or_default();
            for (id, a) in self.members.iter().zip(fit.weights.as_slice()) {
                let _ = writeln!(out, "{p},{s},{id},{a},{acc}");
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        corpus::write_file(path.as_ref(), &self.render())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(path, &corpus::read_file(path)?)
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let first = text.lines().next().unwrap_or("");
        let mode = match first.strip_prefix(WEIGHTS_HEADER).map(str::trim) {
            Some("mode=per-slot") => FitMode::PerSlot,
            Some("mode=global") => FitMode::Global,
            _ => return Err(Error::format(path, 1, "header", format!("expected `{WEIGHTS_HEADER} mode=...`"))),
        };
        let mut members: Vec<String> = Vec::new();
        let mut rows: BTreeMap<(String, String), (Vec<(String, f64)>, Option<f64>)> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let line_no = i + 1;
            if line.trim().is_empty() || (i == 1 && line.starts_with("prompt_id,")) {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::format(path, line_no, "row", "expected 5 comma-separated fields"));
            }
            let alpha: f64 = f[3]
                .parse()
                .map_err(|_| Error::format(path, line_no, "alpha", format!("`{}` is not a number", f[3])))?;
            let acc = if f[4].is_empty() {
                None
            } else {
                Some(f[4].parse::<f64>().map_err(|_| {
                    Error::format(path, line_no, "dev_accuracy", format!("`{}` is not a number", f[4]))
                })?)
            };
            if !members.iter().any(|m| m == f[2]) {
                members.push(f[2].to_string());
            }
            let e = rows.entry((f[0].to_string(), f[1].to_string())).or_default();
            e.0.push((f[2].to_string(), alpha));
            e.1 = acc;
        }
        let mut slots = BTreeMap::new();
        for (key, (alphas, acc)) in rows {
            let mut w = vec![0.0; members.len()];
            for (id, a) in alphas {
                let k = members.iter().position(|m| *m == id).unwrap_or(0);
                w[k] = a;
            }
            let weights = EnsembleWeights::new(w)
                .map_err(|e| Error::format(path, 0, "alpha", format!("slot {}/{}: {e}", key.0, key.1)))?;
            slots.insert(
                key,
                SlotFit {
                    weights,
                    dev_accuracy: acc,
                    member_accuracies: vec![],
                    n_dev: 0,
                },
            );
        }
        if slots.is_empty() {
            return Err(Error::format(path, 1, "rows", "no weights"));
        }
        Ok(FittedEnsemble { members, mode, slots })
    }
}

/// Combines the members' scores with the slot's weights and picks a value.
/// `None` means the response has no numbers.
pub fn ensemble_predict(
    fitted: &FittedEnsemble,
    member_scores: &[(&str, &TokenScores)],
    masked: &MaskedText,
    prompt_id: &str,
    slot_id: &str,
) -> Result<Option<ValueChoice>> {
    let fit = fitted
        .slot(prompt_id, slot_id)
        .ok_or_else(|| Error::data(format!("no ensemble weights for {prompt_id}/{slot_id}")))?;
    let ordered = fitted
        .members
        .iter()
        .map(|id| {
            member_scores
                .iter()
                .find(|(m, _)| m == id)
                .map(|(_, s)| *s)
                .ok_or_else(|| Error::data(format!("missing scores from member `{id}`")))
        })
        .collect::<Result<Vec<&TokenScores>>>()?;
    let combined = combine_scores(&ordered, &fit.weights)?;
    select_value(combined.as_slice(), masked)
}
