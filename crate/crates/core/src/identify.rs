//! Value identification over masked responses: score every placeholder for
//! a slot and pick the value with the highest score.
//!
//! # Score files
//!
//! Externally computed scores are exchanged as tab-separated text. Each row
//! holds a response id, a slot id, a model id and the comma-separated
//! per-placeholder probabilities in placeholder order (empty when the
//! response has no numbers):
//!
//! ```text
//! #valueid-scores v1
//! r1	s1	electra	0.01,0.93,0.02
//! ```
//!
//! Producers working on subword tokens must pool to one probability per
//! placeholder themselves.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{self, ClassLabel, Corpus, ValueLabel};
use crate::error::{Error, Result};
use crate::features::{
    self, add_ngrams, magnitude_bucket, Example, FeatureSink, KeywordTable, LinearModel, ModelMeta,
    SparseWeights, Tok, TrainOptions,
};
use crate::numlex::{self, MaskedText};
use crate::rational::Rational;

pub const SCORES_HEADER: &str = "#valueid-scores v1";
const FORMAT_TAG: &str = "valueid-identifier v1";

/// Per-placeholder probabilities, aligned with [`MaskedText::values`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenScores(Vec<f64>);

impl TokenScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::data(format!("probability {bad} outside [0,1]")));
        }
        Ok(TokenScores(scores))
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

    pub(crate) fn from_combined(scores: Vec<f64>) -> Self {
        TokenScores(scores.into_iter().map(|p| p.clamp(0.0, 1.0)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueChoice {
    pub chosen: Rational,
    pub placeholder_index: usize,
    pub score: f64,
}

/// Why a record yields no identification targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NotStated,
    /// The resolved value is not among the detected numbers.
    ValueAbsent,
}

/// Label 1 for every placeholder whose value equals the resolved value,
/// coincidental matches included.
pub fn make_training_targets(masked: &MaskedText, resolved: &ValueLabel) -> Result<Vec<bool>, SkipReason> {
    let ValueLabel::Stated(v) = resolved else {
        return Err(SkipReason::NotStated);
    };
    let targets: Vec<bool> = masked.values().iter().map(|x| x == v).collect();
    if targets.iter().any(|t| *t) {
        Ok(targets)
    } else {
        Err(SkipReason::ValueAbsent)
    }
}

/// Argmax with smallest-index tie-break; `None` when there is nothing to
/// choose from.
pub fn select_value(scores: &[f64], masked: &MaskedText) -> Result<Option<ValueChoice>> {
    if scores.len() != masked.len() {
        return Err(Error::structural(format!(
            "{} scores for {} placeholders",
            scores.len(),
            masked.len()
        )));
    }
    let mut best: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        if best.is_none_or(|b| *s > scores[b]) {
            best = Some(i);
        }
    }
    Ok(best.map(|i| ValueChoice {
        chosen: masked.values()[i],
        placeholder_index: i,
        score: scores[i],
    }))
}

/// One slot of one response, as seen by an identifier.
#[derive(Debug, Clone, Copy)]
pub struct SlotCase<'a> {
    pub response_id: &'a str,
    pub slot_id: &'a str,
    pub slot_question: &'a str,
    pub masked: &'a MaskedText,
}

/// Anything that produces placeholder scores: trained models and imported
/// score tables alike.
pub trait TokenScorer: Sync {
    fn model_id(&self) -> &str;
    fn score(&self, case: &SlotCase<'_>) -> Result<TokenScores>;
}

/// Feature set of a baseline identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdentifierConfig {
    /// Surrounding tokens, placeholder position and magnitude.
    Context,
    /// Distance to the slot keywords and what lies in between.
    Proximity,
}

impl IdentifierConfig {
    pub fn default_model_id(self) -> &'static str {
        match self {
            IdentifierConfig::Context => "context",
            IdentifierConfig::Proximity => "proximity",
        }
    }
}

impl std::str::FromStr for IdentifierConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "context" => Ok(IdentifierConfig::Context),
            "proximity" => Ok(IdentifierConfig::Proximity),
            _ => Err(Error::data(format!("unknown identifier config `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IdentifierExample<'a> {
    pub slot_question: &'a str,
    pub masked: &'a MaskedText,
    pub resolved: &'a ValueLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifierModel {
    meta: ModelMeta,
    config: IdentifierConfig,
    keywords: KeywordTable,
    weights: LinearModel,
}

#[derive(Serialize, Deserialize)]
struct IdentifierArtifact {
    format: String,
    meta: ModelMeta,
    config: IdentifierConfig,
    keywords: KeywordTable,
    weights: SparseWeights,
}

fn norm(t: &Tok, kw: &HashSet<String>) -> String {
    match t {
        Tok::Word(w) if kw.contains(w) => "KW".to_string(),
        Tok::Word(w) => w.clone(),
        Tok::Num(_) | Tok::Mask(_) => "<m>".to_string(),
        Tok::Punct(c) => c.to_string(),
    }
}

fn ordinal(i: usize) -> &'static str {
    ["0", "1", "2", "3"].get(i).copied().unwrap_or("4+")
}

fn distance(d: usize) -> &'static str {
    ["0", "1", "2", "3", "4", "5", "6"].get(d).copied().unwrap_or("7+")
}

/// Features for every placeholder of `masked`, in placeholder order.
fn extract_all(
    dim: u32,
    config: IdentifierConfig,
    keywords: &KeywordTable,
    question: &str,
    masked: &MaskedText,
) -> Vec<Vec<u32>> {
    let kw = keywords.keywords(question);
    let toks = features::tokenize_masked(masked);
    let strs: Vec<String> = toks.iter().map(|t| norm(t, &kw)).collect();
    let at = |i: isize| -> &str {
        if i < 0 {
            "^"
        } else {
            strs.get(i as usize).map_or("$", String::as_str)
        }
    };
    let q = features::question_words(question);
    let q_refs: Vec<&str> = q.iter().map(String::as_str).collect();
    let kw_pos: Vec<usize> = (0..strs.len()).filter(|&i| strs[i] == "KW").collect();
    let n = masked.len();
    let values = masked.values();

    let mut out = Vec::with_capacity(n);
    for (pos, t) in toks.iter().enumerate() {
        let Tok::Mask(j) = *t else { continue };
        let v = &values[j];
        let mag = magnitude_bucket(v);
        let p = pos as isize;
        let mut sink = FeatureSink::new(dim);
        sink.add(&["bias"]);
        sink.add(&["mag", mag]);
        match config {
            IdentifierConfig::Context => {
                const OFF: [&str; 10] = ["c-5", "c-4", "c-3", "c-2", "c-1", "c+1", "c+2", "c+3", "c+4", "c+5"];
                for (k, d) in (-5isize..=-1).chain(1..=5).enumerate() {
                    sink.add(&[OFF[k], at(p + d)]);
                }
                sink.add(&["cL2", at(p - 2), at(p - 1)]);
                sink.add(&["cR2", at(p + 1), at(p + 2)]);
                sink.add(&["cR3", at(p + 1), at(p + 2), at(p + 3)]);
                sink.add(&["cLR", at(p - 1), at(p + 1)]);
                sink.add(&["ord", ordinal(j)]);
                if j + 1 == n {
                    sink.add(&["last"]);
                }
                sink.add(&["n", ordinal(n)]);
                sink.add(&["magR", mag, at(p + 1)]);
                add_ngrams(&mut sink, "q", &q_refs, 2);
            }
            IdentifierConfig::Proximity => {
                sink.add(&["l1", at(p - 1)]);
                sink.add(&["r1", at(p + 1)]);
                let right = kw_pos.iter().find(|&&k| k > pos).copied();
                let left = kw_pos.iter().rev().find(|&&k| k < pos).copied();
                match right {
                    Some(k) if k - pos <= 8 => {
                        sink.add(&["dR", distance(k - pos)]);
                        let between = &strs[pos + 1..k];
                        for b in between {
                            sink.add(&["btwR", b]);
                        }
                        let seq = between.join(" ");
                        sink.add(&["btwRseq", &seq]);
                        let masks = between.iter().filter(|b| *b == "<m>").count();
                        sink.add(&["mbR", ordinal(masks)]);
                    }
                    _ => sink.add(&["dR", "none"]),
                }
                match left {
                    Some(k) if pos - k <= 8 => {
                        sink.add(&["dL", distance(pos - k)]);
                        let seq = strs[k + 1..pos].join(" ");
                        sink.add(&["btwLseq", &seq]);
                    }
                    _ => sink.add(&["dL", "none"]),
                }
                if values.iter().filter(|x| *x == v).count() > 1 {
                    sink.add(&["dup"]);
                }
                sink.add(&["magL", mag, at(p - 1)]);
                add_ngrams(&mut sink, "q", &q_refs, 1);
            }
        }
        out.push(sink.finish());
    }
    out
}

impl IdentifierModel {
    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn config(&self) -> IdentifierConfig {
        self.config
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        features::save_json(
            path.as_ref(),
            &IdentifierArtifact {
                format: FORMAT_TAG.to_string(),
                meta: self.meta.clone(),
                config: self.config,
                keywords: self.keywords.clone(),
                weights: self.weights.to_sparse(),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let a: IdentifierArtifact = features::load_json(path)?;
        if a.format != FORMAT_TAG {
            return Err(Error::format(path, 1, "format", format!("expected `{FORMAT_TAG}`")));
        }
        let weights = LinearModel::from_sparse(&a.weights)?;
        if weights.classes() != 2 {
            return Err(Error::format(path, 1, "weights", "identifier needs 2 classes"));
        }
        Ok(IdentifierModel {
            meta: a.meta,
            config: a.config,
            keywords: a.keywords,
            weights,
        })
    }
}

pub fn score_tokens(model: &IdentifierModel, slot_question: &str, masked: &MaskedText) -> TokenScores {
    let feats = extract_all(model.weights.dim(), model.config, &model.keywords, slot_question, masked);
    TokenScores(feats.iter().map(|x| model.weights.probabilities(x)[1]).collect())
}

impl TokenScorer for IdentifierModel {
    fn model_id(&self) -> &str {
        &self.meta.model_id
    }

    fn score(&self, case: &SlotCase<'_>) -> Result<TokenScores> {
        Ok(score_tokens(self, case.slot_question, case.masked))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TargetPolicy {
    /// Drop records whose resolved value matches more than one placeholder.
    pub strict: bool,
}

pub fn train_baseline_identifier(
    train: &[IdentifierExample<'_>],
    dev: &[IdentifierExample<'_>],
    options: &TrainOptions,
    config: IdentifierConfig,
    model_id: &str,
    policy: TargetPolicy,
) -> Result<IdentifierModel> {
    let dim = options.dim();
    let usable = |e: &IdentifierExample<'_>| -> Option<Vec<bool>> {
        let t = make_training_targets(e.masked, e.resolved).ok()?;
        (!policy.strict || t.iter().filter(|x| **x).count() == 1).then_some(t)
    };
    let train_used: Vec<(&IdentifierExample<'_>, Vec<bool>)> =
        train.iter().filter_map(|e| usable(e).map(|t| (e, t))).collect();
    if train_used.is_empty() {
        return Err(Error::data("no usable identifier training records"));
    }
    let keywords = KeywordTable::from_questions(train_used.iter().map(|(e, _)| e.slot_question));
    let mut examples = Vec::new();
    for (e, targets) in &train_used {
        let feats = extract_all(dim, config, &keywords, e.slot_question, e.masked);
        for (x, t) in feats.into_iter().zip(targets) {
            examples.push(Example {
                features: x,
                label: usize::from(*t),
                weight: 1.0,
            });
        }
    }
    let eval_src: Vec<&IdentifierExample<'_>> = if dev.is_empty() {
        train_used.iter().map(|(e, _)| *e).collect()
    } else {
        dev.iter().filter(|e| e.resolved.class() == ClassLabel::Other).collect()
    };
    let eval: Vec<(Vec<Vec<u32>>, &MaskedText, Rational)> = eval_src
        .iter()
        .filter_map(|e| {
            let v = e.resolved.value()?;
            Some((extract_all(dim, config, &keywords, e.slot_question, e.masked), e.masked, v))
        })
        .collect();
    let (weights, score) = LinearModel::train(dim, 2, &examples, &options.sgd, |m| {
        if eval.is_empty() {
            return 0.0;
        }
        let hits = eval
            .iter()
            .filter(|(feats, masked, v)| {
                let s: Vec<f64> = feats.iter().map(|x| m.probabilities(x)[1]).collect();
                matches!(select_value(&s, masked), Ok(Some(c)) if c.chosen == *v)
            })
            .count();
        hits as f64 / eval.len() as f64
    });
    Ok(IdentifierModel {
        meta: ModelMeta {
            model_id: model_id.to_string(),
            corpus_id: options.corpus_id.clone(),
            seed: options.seed,
            dev_score: score,
        },
        config,
        keywords,
        weights,
    })
}

/// Imported scores keyed by `(response_id, slot_id, model_id)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    entries: BTreeMap<(String, String, String), TokenScores>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, response_id: &str, slot_id: &str, model_id: &str, scores: TokenScores) {
        self.entries
            .insert((response_id.to_string(), slot_id.to_string(), model_id.to_string()), scores);
    }

    /// Adds every row of `other`, replacing rows with the same key.
    pub fn merge(&mut self, other: ScoreTable) {
        self.entries.extend(other.entries);
    }

    pub fn get(&self, response_id: &str, slot_id: &str, model_id: &str) -> Option<&TokenScores> {
        self.entries
            .get(&(response_id.to_string(), slot_id.to_string(), model_id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn model_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&String> = self.entries.keys().map(|(_, _, m)| m).collect();
        ids.into_iter().cloned().collect()
    }

    pub fn member<'a>(&'a self, model_id: &'a str) -> ImportedScorer<'a> {
        ImportedScorer { table: self, model_id }
    }

    pub fn render(&self) -> String {
        let mut out = format!("{SCORES_HEADER}\n");
        for ((r, s, m), scores) in &self.entries {
            let probs: Vec<String> = scores.as_slice().iter().map(|p| p.to_string()).collect();
            let _ = writeln!(out, "{r}\t{s}\t{m}\t{}", probs.join(","));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        corpus::write_file(path.as_ref(), &self.render())
    }

    /// Checks every row against the masked responses of `corpus`.
    pub fn validate(&self, corpus: &Corpus) -> Result<()> {
        let mut cache: BTreeMap<&str, usize> = BTreeMap::new();
        for ((r, s, m), scores) in &self.entries {
            let record = corpus
                .record(r)
                .ok_or_else(|| Error::data(format!("score row for unknown response `{r}`")))?;
            if corpus.prompt_of(record).slot_index(s).is_none() {
                return Err(Error::data(format!("response `{r}`: unknown slot `{s}`")));
            }
            let n = *cache
                .entry(record.response_id.as_str())
                .or_insert_with(|| numlex::mask_text(&record.text).len());
            if n != scores.len() {
                return Err(Error::data(format!(
                    "response `{r}` slot `{s}` model `{m}`: {} scores for {n} masked values",
                    scores.len()
                )));
            }
        }
        Ok(())
    }
}

/// One model's column of a [`ScoreTable`].
#[derive(Debug, Clone, Copy)]
pub struct ImportedScorer<'a> {
    table: &'a ScoreTable,
    model_id: &'a str,
}

impl TokenScorer for ImportedScorer<'_> {
    fn model_id(&self) -> &str {
        self.model_id
    }

    fn score(&self, case: &SlotCase<'_>) -> Result<TokenScores> {
        let s = self
            .table
            .get(case.response_id, case.slot_id, self.model_id)
            .ok_or_else(|| {
                Error::data(format!(
                    "no scores from member `{}` for response `{}` slot `{}`",
                    self.model_id, case.response_id, case.slot_id
                ))
            })?;
        if s.len() != case.masked.len() {
            return Err(Error::data(format!(
                "response `{}`: {} scores for {} masked values",
                case.response_id,
                s.len(),
                case.masked.len()
            )));
        }
        Ok(s.clone())
    }
}

pub fn parse_scores(path: &Path, text: &str) -> Result<ScoreTable> {
    let mut table = ScoreTable::new();
    for (line, row) in corpus::data_lines(path, text, SCORES_HEADER)? {
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::format(path, line, "row", format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let probs = if fields[3].trim().is_empty() {
            Vec::new()
        } else {
            fields[3]
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::format(path, line, "probabilities", format!("`{p}`: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?
        };
        let scores = TokenScores::new(probs).map_err(|e| {
            Error::format(path, line, "probabilities", format!("response `{}`: {e}", fields[0]))
        })?;
        let key = (fields[0].to_string(), fields[1].to_string(), fields[2].to_string());
        if table.entries.insert(key, scores).is_some() {
            return Err(Error::format(path, line, "row", "duplicate (response, slot, model)"));
        }
    }
    Ok(table)
}

/// Reads a score file and validates it against `corpus`.
pub fn import_external_scores(path: impl AsRef<Path>, corpus: &Corpus) -> Result<ScoreTable> {
    let path = path.as_ref();
    let table = parse_scores(path, &corpus::read_file(path)?)?;
    table.validate(corpus)?;
    Ok(table)
}
