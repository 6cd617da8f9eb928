//! Prompts, double-scored responses, class labels, splits and missing-value
//! audits.
//!
//! # File formats
//!
//! Both files are line-delimited JSON preceded by a versioned header line.
//!
//! `prompts.jsonl`:
//!
//! ```text
//! #valueid-prompts v1
//! {"prompt_id":"p1","question":"...","slots":[{"slot_id":"s1","name":"chocolates","question":"How many bags of chocolates?"}],"constraint":{"coefficients":["7","3","5"],"total":"64"}}
//! ```
//!
//! `responses.jsonl`, one response per line; every slot of the prompt must
//! carry a label triple, where `""` means the rater left the value blank:
//!
//! ```text
//! #valueid-corpus v1
//! {"response_id":"r1","prompt_id":"p1","text":"...","labels":{"s1":{"rater1":"9","rater2":"9","resolved":"9"}}}
//! ```
//!
//! `split.csv` maps response ids to partitions:
//!
//! ```text
//! #valueid-split v1 seed=7
//! response_id,partition
//! r1,train
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numlex;
use crate::rational::Rational;
use crate::verify::LinearConstraint;

pub const PROMPTS_HEADER: &str = "#valueid-prompts v1";
pub const CORPUS_HEADER: &str = "#valueid-corpus v1";
pub const SPLIT_HEADER: &str = "#valueid-split v1";

pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub slot_id: String,
    /// Human-readable quantity name, e.g. "bags of lollipops".
    pub name: String,
    /// The per-slot question handed to the models.
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub prompt_id: String,
    pub question: String,
    pub slots: Vec<SlotSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<LinearConstraint>,
}

impl Prompt {
    pub fn slot_index(&self, slot_id: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.slot_id == slot_id)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        check_id(&self.prompt_id)?;
        if self.slots.is_empty() {
            return Err("prompt has no slots".into());
        }
        let mut seen = HashSet::new();
        for s in &self.slots {
            check_id(&s.slot_id)?;
            if !seen.insert(s.slot_id.as_str()) {
                return Err(format!("duplicate slot id `{}`", s.slot_id));
            }
        }
        if let Some(c) = &self.constraint {
            if c.len() != self.slots.len() {
                return Err(format!(
                    "constraint has {} coefficients for {} slots",
                    c.len(),
                    self.slots.len()
                ));
            }
        }
        Ok(())
    }
}

/// Identifiers end up in comma- and tab-separated files.
fn check_id(id: &str) -> std::result::Result<(), String> {
    if id.is_empty() {
        return Err("empty identifier".into());
    }
    if id.chars().any(|c| c.is_whitespace() || c == ',' || c == '"') {
        return Err(format!("identifier `{id}` contains whitespace, a comma or a quote"));
    }
    Ok(())
}

/// A rater's (or the engine's) answer for one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ValueLabel {
    #[default]
    Absent,
    Stated(Rational),
}

impl ValueLabel {
    pub fn class(&self) -> ClassLabel {
        derive_class_label(self)
    }

    pub fn value(&self) -> Option<Rational> {
        match self {
            ValueLabel::Absent => None,
            ValueLabel::Stated(v) => Some(*v),
        }
    }

    /// The value with the implicit-zero convention applied.
    pub fn value_or_zero(&self) -> Rational {
        self.value().unwrap_or(Rational::ZERO)
    }

    pub fn is_stated(&self) -> bool {
        matches!(self, ValueLabel::Stated(_))
    }
}

impl fmt::Display for ValueLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueLabel::Absent => Ok(()),
            ValueLabel::Stated(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for ValueLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.trim().is_empty() {
            Ok(ValueLabel::Absent)
        } else {
            s.parse().map(ValueLabel::Stated)
        }
    }
}

impl Serialize for ValueLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ValueLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassLabel {
    Zero,
    One,
    Other,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Zero, ClassLabel::One, ClassLabel::Other];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Zero => "zero",
            ClassLabel::One => "one",
            ClassLabel::Other => "other",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(ClassLabel::Zero),
            "one" => Ok(ClassLabel::One),
            "other" => Ok(ClassLabel::Other),
            _ => Err(Error::data(format!("unknown class `{s}`"))),
        }
    }
}

/// Absent and 0 are class Zero, 1 is One, anything else is Other.
pub fn derive_class_label(label: &ValueLabel) -> ClassLabel {
    match label {
        ValueLabel::Absent => ClassLabel::Zero,
        ValueLabel::Stated(v) if v.is_zero() => ClassLabel::Zero,
        ValueLabel::Stated(v) if *v == Rational::ONE => ClassLabel::One,
        ValueLabel::Stated(_) => ClassLabel::Other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelTriple {
    pub rater1: ValueLabel,
    pub rater2: ValueLabel,
    /// Adjudicated label; authoritative for training and evaluation.
    pub resolved: ValueLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseRecord {
    pub response_id: String,
    pub prompt_id: String,
    pub text: String,
    /// One triple per slot, in the prompt's slot order.
    pub labels: Vec<LabelTriple>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    response_id: String,
    prompt_id: String,
    text: String,
    labels: BTreeMap<String, LabelTriple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    prompts: Vec<Prompt>,
    records: Vec<ResponseRecord>,
    prompt_index: HashMap<String, usize>,
    record_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(prompts: Vec<Prompt>, records: Vec<ResponseRecord>) -> Result<Self> {
        let mut prompt_index = HashMap::new();
        for (i, p) in prompts.iter().enumerate() {
            p.validate()
                .map_err(|e| Error::data(format!("prompt `{}`: {e}", p.prompt_id)))?;
            if prompt_index.insert(p.prompt_id.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate prompt id `{}`", p.prompt_id)));
            }
        }
        let mut record_index = HashMap::new();
        for (i, r) in records.iter().enumerate() {
            check_id(&r.response_id).map_err(Error::Data)?;
            let p = prompt_index
                .get(&r.prompt_id)
                .map(|&k| &prompts[k])
                .ok_or_else(|| Error::data(format!("response `{}`: unknown prompt `{}`", r.response_id, r.prompt_id)))?;
            if r.labels.len() != p.slots.len() {
                return Err(Error::data(format!(
                    "response `{}` has {} label triples for {} slots",
                    r.response_id,
                    r.labels.len(),
                    p.slots.len()
                )));
            }
            if record_index.insert(r.response_id.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate response id `{}`", r.response_id)));
            }
        }
        Ok(Corpus {
            prompts,
            records,
            prompt_index,
            record_index,
        })
    }

    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn records(&self) -> &[ResponseRecord] {
        &self.records
    }

    pub fn prompt(&self, id: &str) -> Option<&Prompt> {
        self.prompt_index.get(id).map(|&i| &self.prompts[i])
    }

    pub fn record(&self, id: &str) -> Option<&ResponseRecord> {
        self.record_index.get(id).map(|&i| &self.records[i])
    }

    pub fn prompt_of(&self, record: &ResponseRecord) -> &Prompt {
        self.prompt(&record.prompt_id).expect("validated at construction")
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let prompts = load_prompts(dir.join(PROMPTS_FILE))?;
        let records = load_records(dir.join(RESPONSES_FILE), &prompts)?;
        Corpus::new(prompts, records)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_file(&dir.join(PROMPTS_FILE), &self.render_prompts())?;
        write_file(&dir.join(RESPONSES_FILE), &self.render_records()?)
    }

    pub fn render_prompts(&self) -> String {
        let mut out = String::from(PROMPTS_HEADER);
        out.push('\n');
        for p in &self.prompts {
            out.push_str(&serde_json::to_string(p).expect("prompt serializes"));
            out.push('\n');
        }
        out
    }

    pub fn render_records(&self) -> Result<String> {
        let mut out = String::from(CORPUS_HEADER);
        out.push('\n');
        for r in &self.records {
            let p = self.prompt_of(r);
            let line = RecordLine {
                response_id: r.response_id.clone(),
                prompt_id: r.prompt_id.clone(),
                text: r.text.clone(),
                labels: p
                    .slots
                    .iter()
                    .zip(&r.labels)
                    .map(|(s, l)| (s.slot_id.clone(), *l))
                    .collect(),
            };
            out.push_str(&serde_json::to_string(&line).map_err(|e| Error::Invariant(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Records belonging to `partition` under `split`, in corpus order.
    pub fn records_in<'a>(
        &'a self,
        split: &'a SplitAssignment,
        partition: Partition,
    ) -> impl Iterator<Item = &'a ResponseRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| split.partition_of(&r.response_id) == Some(partition))
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Yields `(1-based line number, line)` for every non-blank line after the
/// header, which must equal `header`.
pub(crate) fn data_lines<'a>(
    path: &'a Path,
    text: &'a str,
    header: &str,
) -> Result<impl Iterator<Item = (usize, &'a str)> + 'a> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == header => {}
        Some((_, first)) => {
            return Err(Error::format(path, 1, "header", format!("expected `{header}`, found `{first}`")))
        }
        None => return Err(Error::format(path, 1, "header", format!("empty file, expected `{header}`"))),
    }
    Ok(lines
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty()))
}

fn json_error(path: &Path, line: usize, e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|_| msg.contains("field"))
        .unwrap_or("record")
        .to_string();
    Error::format(path, line, field, msg)
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<Prompt>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let mut out: Vec<Prompt> = Vec::new();
    for (n, line) in data_lines(path, &text, PROMPTS_HEADER)? {
        let p: Prompt = serde_json::from_str(line).map_err(|e| json_error(path, n, e))?;
        p.validate().map_err(|m| Error::format(path, n, "slots", m))?;
        if out.iter().any(|q| q.prompt_id == p.prompt_id) {
            return Err(Error::format(path, n, "prompt_id", format!("duplicate prompt id `{}`", p.prompt_id)));
        }
        out.push(p);
    }
    Ok(out)
}

pub fn load_records(path: impl AsRef<Path>, prompts: &[Prompt]) -> Result<Vec<ResponseRecord>> {
    let path = path.as_ref();
    let text = read_file(path)?;
    let by_id: HashMap<&str, &Prompt> = prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in data_lines(path, &text, CORPUS_HEADER)? {
        let mut rec: RecordLine = serde_json::from_str(line).map_err(|e| json_error(path, n, e))?;
        check_id(&rec.response_id).map_err(|m| Error::format(path, n, "response_id", m))?;
        let prompt = by_id
            .get(rec.prompt_id.as_str())
            .ok_or_else(|| Error::format(path, n, "prompt_id", format!("unknown prompt `{}`", rec.prompt_id)))?;
        let mut labels = Vec::with_capacity(prompt.slots.len());
        for s in &prompt.slots {
            let triple = rec
                .labels
                .remove(&s.slot_id)
                .ok_or_else(|| Error::format(path, n, format!("labels.{}", s.slot_id), "missing slot label"))?;
            labels.push(triple);
        }
        if let Some(extra) = rec.labels.keys().next() {
            return Err(Error::format(path, n, format!("labels.{extra}"), "slot not defined by the prompt"));
        }
        if !seen.insert(rec.response_id.clone()) {
            return Err(Error::format(
                path,
                n,
                "response_id",
                format!("duplicate response id `{}`", rec.response_id),
            ));
        }
        out.push(ResponseRecord {
            response_id: rec.response_id,
            prompt_id: rec.prompt_id,
            text: rec.text,
            labels,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Dev,
    Test,
}

impl Partition {
    pub fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Dev => "dev",
            Partition::Test => "test",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Partition::Train),
            "dev" => Ok(Partition::Dev),
            "test" => Ok(Partition::Test),
            _ => Err(Error::data(format!("unknown partition `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    assignment: BTreeMap<String, Partition>,
}

impl SplitAssignment {
    pub fn partition_of(&self, response_id: &str) -> Option<Partition> {
        self.assignment.get(response_id).copied()
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Partition)> {
        self.assignment.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// (train, dev, test) sizes.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let mut s = (0, 0, 0);
        for p in self.assignment.values() {
            match p {
                Partition::Train => s.0 += 1,
                Partition::Dev => s.1 += 1,
                Partition::Test => s.2 += 1,
            }
        }
        s
    }

    pub fn ids(&self, partition: Partition) -> Vec<&str> {
        self.iter().filter(|(_, p)| *p == partition).map(|(k, _)| k).collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{SPLIT_HEADER} seed={}\nresponse_id,partition\n", self.seed);
        for (id, p) in &self.assignment {
            let _ = writeln!(out, "{id},{p}");
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.render())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = read_file(path)?;
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let seed = match lines.next() {
            Some((_, h)) if h.starts_with(SPLIT_HEADER) => h[SPLIT_HEADER.len()..]
                .trim()
                .strip_prefix("seed=")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::format(path, 1, "seed", "missing or invalid seed"))?,
            _ => return Err(Error::format(path, 1, "header", format!("expected `{SPLIT_HEADER} seed=<n>`"))),
        };
        match lines.next() {
            Some((_, "response_id,partition")) => {}
            _ => return Err(Error::format(path, 2, "header", "expected `response_id,partition`")),
        }
        let mut assignment = BTreeMap::new();
        for (n, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
            let (id, part) = line
                .split_once(',')
                .ok_or_else(|| Error::format(path, n, "partition", "expected `response_id,partition`"))?;
            let part = part.parse().map_err(|_| Error::format(path, n, "partition", format!("unknown partition `{part}`")))?;
            if assignment.insert(id.to_string(), part).is_some() {
                return Err(Error::format(path, n, "response_id", format!("duplicate response id `{id}`")));
            }
        }
        Ok(SplitAssignment { seed, assignment })
    }
}

/// Exact 70/15/15 sizes for `n` items. Leftover units go to the largest
/// fractional remainders, ties in train, dev, test order.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let shares = [70usize, 15, 15];
    let mut sizes = shares.map(|s| s * n / 100);
    let mut order = [0usize, 1, 2];
    order.sort_by_key(|&i| std::cmp::Reverse(shares[i] * n % 100));
    let leftover = n - sizes.iter().sum::<usize>();
    for &i in order.iter().take(leftover) {
        sizes[i] += 1;
    }
    (sizes[0], sizes[1], sizes[2])
}

fn split_key(seed: u64, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Partitions each prompt's responses 70/15/15 by a seeded hash of the
/// response id, so the result does not depend on record order.
pub fn split_corpus(corpus: &Corpus, seed: u64) -> Result<SplitAssignment> {
    if corpus.is_empty() {
        return Err(Error::structural("cannot split an empty corpus"));
    }
    let mut by_prompt: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for r in corpus.records() {
        by_prompt.entry(&r.prompt_id).or_default().push(&r.response_id);
    }
    let mut assignment = BTreeMap::new();
    for ids in by_prompt.values_mut() {
        let mut keyed: Vec<([u8; 32], &str)> = ids.iter().map(|id| (split_key(seed, id), *id)).collect();
        keyed.sort_unstable();
        let (train, dev, _) = split_sizes(keyed.len());
        for (i, (_, id)) in keyed.into_iter().enumerate() {
            let p = if i < train {
                Partition::Train
            } else if i < train + dev {
                Partition::Dev
            } else {
                Partition::Test
            };
            assignment.insert(id.to_string(), p);
        }
    }
    Ok(SplitAssignment { seed, assignment })
}

// ---------------------------------------------------------------------------
// Class distribution and audit
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDistributionRow {
    pub prompt_id: String,
    pub slots: usize,
    pub responses: usize,
    /// Counts of Zero, One, Other over the prompt's N×V slot cases.
    pub counts: [usize; 3],
}

impl ClassDistributionRow {
    pub fn cases(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Percentages of Zero, One, Other.
    pub fn percentages(&self) -> [f64; 3] {
        let n = self.cases().max(1) as f64;
        self.counts.map(|c| 100.0 * c as f64 / n)
    }
}

/// Resolved-label class mix per prompt.
pub fn class_distribution<'a>(
    corpus: &Corpus,
    records: impl IntoIterator<Item = &'a ResponseRecord>,
) -> Vec<ClassDistributionRow> {
    let mut rows: Vec<ClassDistributionRow> = corpus
        .prompts()
        .iter()
        .map(|p| ClassDistributionRow {
            prompt_id: p.prompt_id.clone(),
            slots: p.slots.len(),
            responses: 0,
            counts: [0; 3],
        })
        .collect();
    for r in records {
        let i = corpus.prompt_index[&r.prompt_id];
        rows[i].responses += 1;
        for l in &r.labels {
            rows[i].counts[l.resolved.class().index()] += 1;
        }
    }
    rows.retain(|r| r.responses > 0);
    rows
}

fn short_count(n: usize) -> String {
    if n >= 1000 && n % 1000 == 0 {
        format!("{}k", n / 1000)
    } else {
        n.to_string()
    }
}

pub fn render_class_distribution_csv(rows: &[ClassDistributionRow]) -> String {
    let mut out = String::from("prompt,V,N,zero,one,other\n");
    for r in rows {
        let [z, o, v] = r.percentages();
        let _ = writeln!(out, "{},{},{},{z:.1},{o:.1},{v:.1}", r.prompt_id, r.slots, r.responses);
    }
    out
}

pub fn render_class_distribution_text(rows: &[ClassDistributionRow]) -> String {
    let mut out = format!("{:<8} {:>3} {:>6} | {:>5} {:>5} {:>5}\n", "Prompt", "V", "N", "0", "1", "v");
    for r in rows {
        let [z, o, v] = r.percentages();
        let _ = writeln!(
            out,
            "{:<8} {:>3} {:>6} | {z:>5.1} {o:>5.1} {v:>5.1}",
            r.prompt_id,
            r.slots,
            short_count(r.responses)
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditRow {
    pub prompt_id: String,
    pub slot_id: String,
    /// Resolved labels of class Other.
    pub n_other: usize,
    /// Of those, how many resolved values never appear among the masked values.
    pub missing: usize,
}

impl AuditRow {
    /// Best identification accuracy any pipeline can reach on this slot.
    pub fn bound(&self) -> Option<f64> {
        (self.n_other > 0).then(|| (self.n_other - self.missing) as f64 / self.n_other as f64)
    }
}

/// True when the resolved value of `slot` is among the numbers of the text.
pub fn value_present(values: &[Rational], value: &Rational) -> bool {
    values.contains(value)
}

/// Per-slot count of Other-class resolved values that the preprocessing
/// cannot find in the response text.
pub fn audit_missing_values<'a>(
    corpus: &Corpus,
    records: impl IntoIterator<Item = &'a ResponseRecord>,
) -> Vec<AuditRow> {
    let mut rows: Vec<Vec<AuditRow>> = corpus
        .prompts()
        .iter()
        .map(|p| {
            p.slots
                .iter()
                .map(|s| AuditRow {
                    prompt_id: p.prompt_id.clone(),
                    slot_id: s.slot_id.clone(),
                    n_other: 0,
                    missing: 0,
                })
                .collect()
        })
        .collect();
    for r in records {
        let pi = corpus.prompt_index[&r.prompt_id];
        let mut values: Option<Vec<Rational>> = None;
        for (si, l) in r.labels.iter().enumerate() {
            if let ValueLabel::Stated(v) = l.resolved {
                if l.resolved.class() == ClassLabel::Other {
                    let vals = values.get_or_insert_with(|| numlex::number_sequence(&r.text));
                    rows[pi][si].n_other += 1;
                    if !value_present(vals, &v) {
                        rows[pi][si].missing += 1;
                    }
                }
            }
        }
    }
    rows.into_iter().flatten().collect()
}

pub fn render_audit_csv(rows: &[AuditRow]) -> String {
    let mut out = String::from("prompt_id,slot_id,N,M,bound\n");
    for r in rows {
        let bound = r.bound().map_or("-".to_string(), |b| format!("{b:.3}"));
        let _ = writeln!(out, "{},{},{},{},{bound}", r.prompt_id, r.slot_id, r.n_other, r.missing);
    }
    out
}
