//! Tokenization, hashed sparse features and a small deterministic linear
//! learner shared by the baseline classifier and identifiers.

use std::collections::{BTreeMap, HashSet};
use std::hash::Hasher;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numlex::{self, MaskedText, MASK_TOKEN};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Word(String),
    Num(Rational),
    /// Placeholder with its index into the masked values.
    Mask(usize),
    Punct(char),
}

fn push_plain(text: &str, out: &mut Vec<Tok>) {
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(Tok::Word(std::mem::take(&mut word)));
        }
        if !c.is_whitespace() {
            out.push(Tok::Punct(c));
        }
    }
    if !word.is_empty() {
        out.push(Tok::Word(word));
    }
}

/// Words, punctuation and detected numbers of a raw response.
pub fn tokenize_response(text: &str) -> Vec<Tok> {
    let scanned = numlex::scan_numbers(text);
    let mut out = Vec::new();
    let mut pos = 0;
    for t in &scanned.tokens {
        push_plain(&text[pos..t.span.start], &mut out);
        out.push(Tok::Num(t.value));
        pos = t.annotation.map_or(t.span.end, |a| a.end);
    }
    push_plain(&text[pos..], &mut out);
    out
}

/// Tokens of a masked template; placeholders become [`Tok::Mask`].
pub fn tokenize_masked(masked: &MaskedText) -> Vec<Tok> {
    let template = masked.template();
    let mut out = Vec::new();
    let mut pos = 0;
    for (i, &off) in masked.placeholder_offsets().iter().enumerate() {
        push_plain(&template[pos..off], &mut out);
        out.push(Tok::Mask(i));
        pos = off + MASK_TOKEN.len();
    }
    push_plain(&template[pos..], &mut out);
    out
}

pub fn question_words(question: &str) -> Vec<String> {
    let mut toks = Vec::new();
    push_plain(question, &mut toks);
    toks.into_iter()
        .filter_map(|t| match t {
            Tok::Word(w) => Some(w),
            _ => None,
        })
        .collect()
}

/// Document frequencies of words over the distinct slot questions seen in
/// training. The rarest words of a question are its keywords: they name
/// what the slot is about ("lollipops") rather than the shared phrasing
/// ("how many bags of").
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    df: BTreeMap<String, u32>,
}

impl KeywordTable {
    pub fn from_questions<'a>(questions: impl IntoIterator<Item = &'a str>) -> Self {
        let distinct: HashSet<&str> = questions.into_iter().collect();
        let mut df = BTreeMap::new();
        for q in distinct {
            let words: HashSet<String> = question_words(q).into_iter().collect();
            for w in words {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        KeywordTable { df }
    }

    pub fn keywords(&self, question: &str) -> HashSet<String> {
        let words = question_words(question);
        let freq = |w: &String| self.df.get(w).copied().unwrap_or(0);
        let Some(min) = words.iter().map(freq).min() else {
            return HashSet::new();
        };
        words.into_iter().filter(|w| freq(w) == min).collect()
    }
}

/// Coarse class of a value as seen by the models.
pub fn value_class(v: &Rational) -> &'static str {
    if v.is_zero() {
        "#0"
    } else if *v == Rational::ONE {
        "#1"
    } else {
        "#v"
    }
}

pub fn magnitude_bucket(v: &Rational) -> &'static str {
    if !v.is_integer() {
        return "frac";
    }
    match v.numer() {
        n if n < 0 => "neg",
        0 => "0",
        1 => "1",
        2..=9 => "1d",
        10..=99 => "2d",
        100..=999 => "3d",
        _ => "big",
    }
}

/// Collects hashed feature indices; feature names are hashed part by part
/// without building strings.
#[derive(Debug)]
pub struct FeatureSink {
    dim: u32,
    pub indices: Vec<u32>,
}

impl FeatureSink {
    pub fn new(dim: u32) -> Self {
        FeatureSink {
            dim,
            indices: Vec::with_capacity(128),
        }
    }

    pub fn add(&mut self, parts: &[&str]) {
        let mut h = FnvHasher::default();
        for p in parts {
            h.write(p.as_bytes());
            h.write_u8(0x1f);
        }
        self.indices.push((h.finish() % u64::from(self.dim)) as u32);
    }

    pub fn finish(mut self) -> Vec<u32> {
        self.indices.sort_unstable();
        self.indices
    }
}

pub fn add_ngrams(sink: &mut FeatureSink, prefix: &str, toks: &[&str], max_n: usize) {
    for n in 1..=max_n {
        for w in toks.windows(n) {
            let mut parts = Vec::with_capacity(n + 2);
            parts.push(prefix);
            let n_str = match n {
                1 => "1",
                2 => "2",
                _ => "3",
            };
            parts.push(n_str);
            parts.extend_from_slice(w);
            sink.add(&parts);
        }
    }
}

/// Multinomial logistic regression over hashed binary features.
#[derive(Clone, PartialEq)]
pub struct LinearModel {
    dim: u32,
    classes: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 6,
            learning_rate: 0.2,
            l2: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Example {
    pub features: Vec<u32>,
    pub label: usize,
    pub weight: f64,
}

impl std::fmt::Debug for LinearModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let nonzero = self.weights.iter().filter(|w| **w != 0.0).count();
        f.debug_struct("LinearModel")
            .field("dim", &self.dim)
            .field("classes", &self.classes)
            .field("nonzero", &nonzero)
            .field("bias", &self.bias)
            .finish()
    }
}

impl LinearModel {
    pub fn zeros(dim: u32, classes: usize) -> Self {
        LinearModel {
            dim,
            classes,
            weights: vec![0.0; dim as usize * classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn logits(&self, features: &[u32]) -> Vec<f64> {
        let k = self.classes;
        let mut z = self.bias.clone();
        for &f in features {
            let row = &self.weights[f as usize * k..f as usize * k + k];
            for (zc, w) in z.iter_mut().zip(row) {
                *zc += w;
            }
        }
        z
    }

    pub fn probabilities(&self, features: &[u32]) -> Vec<f64> {
        softmax(&self.logits(features))
    }

    /// AdaGrad SGD. After each epoch `evaluate` scores the current weights;
    /// the best-scoring epoch (earliest on ties) is returned.
    pub fn train(
        dim: u32,
        classes: usize,
        examples: &[Example],
        config: &SgdConfig,
        mut evaluate: impl FnMut(&LinearModel) -> f64,
    ) -> (LinearModel, f64) {
        let k = classes;
        let mut model = LinearModel::zeros(dim, classes);
        let mut g2 = vec![0.0f64; model.weights.len()];
        let mut g2_bias = vec![0.0f64; k];
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut best: Option<(LinearModel, f64)> = None;
        let eps = 1e-8;
        for _ in 0..config.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                let ex = &examples[i];
                let p = model.probabilities(&ex.features);
                for c in 0..k {
                    let target = if c == ex.label { 1.0 } else { 0.0 };
                    let g = (p[c] - target) * ex.weight;
                    g2_bias[c] += g * g;
                    model.bias[c] -= config.learning_rate * g / (g2_bias[c].sqrt() + eps);
                    for &f in &ex.features {
                        let j = f as usize * k + c;
                        let gw = g + config.l2 * model.weights[j];
                        g2[j] += gw * gw;
                        model.weights[j] -= config.learning_rate * gw / (g2[j].sqrt() + eps);
                    }
                }
            }
            let score = evaluate(&model);
            if best.as_ref().is_none_or(|(_, s)| score > *s) {
                best = Some((model.clone(), score));
            }
        }
        best.unwrap_or_else(|| {
            let s = evaluate(&model);
            (model, s)
        })
    }

    pub fn to_sparse(&self) -> SparseWeights {
        let k = self.classes;
        let rows = (0..self.dim as usize)
            .filter_map(|f| {
                let row = &self.weights[f * k..f * k + k];
                row.iter().any(|w| *w != 0.0).then(|| (f as u32, row.to_vec()))
            })
            .collect();
        SparseWeights {
            dim: self.dim,
            classes: self.classes,
            bias: self.bias.clone(),
            rows,
        }
    }

    pub fn from_sparse(s: &SparseWeights) -> Result<Self> {
        let mut m = LinearModel::zeros(s.dim, s.classes);
        if s.bias.len() != s.classes {
            return Err(Error::data("bias length does not match class count"));
        }
        m.bias.clone_from(&s.bias);
        for (f, row) in &s.rows {
            if *f >= s.dim || row.len() != s.classes {
                return Err(Error::data(format!("bad weight row {f}")));
            }
            let k = s.classes;
            m.weights[*f as usize * k..*f as usize * k + k].copy_from_slice(row);
        }
        Ok(m)
    }
}

/// Serialized form of a [`LinearModel`]: only rows with a non-zero weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseWeights {
    pub dim: u32,
    pub classes: usize,
    pub bias: Vec<f64>,
    pub rows: Vec<(u32, Vec<f64>)>,
}

/// Provenance carried by every trained model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub model_id: String,
    pub corpus_id: String,
    pub seed: u64,
    /// Development-set score of the selected epoch.
    pub dev_score: f64,
}

/// Options shared by the baseline trainers.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub seed: u64,
    pub corpus_id: String,
    pub hash_bits: u32,
    pub sgd: SgdConfig,
}

impl TrainOptions {
    pub fn new(seed: u64) -> Self {
        TrainOptions {
            seed,
            corpus_id: String::new(),
            hash_bits: 20,
            sgd: SgdConfig { seed, ..SgdConfig::default() },
        }
    }

    pub fn dim(&self) -> u32 {
        1u32 << self.hash_bits.clamp(4, 26)
    }
}

pub(crate) fn save_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let text = serde_json::to_string(value).map_err(|e| Error::data(e.to_string()))?;
    crate::corpus::write_file(path, &text)
}

pub(crate) fn load_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = crate::corpus::read_file(path)?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.line(), "model", e.to_string()))
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = e.iter().sum();
    e.into_iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_tokens_collapse_numbers() {
        let toks = tokenize_response("9 bags of chocolates ($7 × 9 = $63), a bag");
        assert_eq!(toks[0], Tok::Num(9.into()));
        assert_eq!(toks[1], Tok::Word("bags".into()));
        assert!(toks.contains(&Tok::Punct('$')));
        assert!(toks.contains(&Tok::Num(63.into())));
        assert_eq!(toks.last(), Some(&Tok::Word("bag".into())));
    }

    #[test]
    fn masked_tokens_index_placeholders() {
        let m = numlex::mask_text("buy 2 or 3 cakes");
        let toks = tokenize_masked(&m);
        assert_eq!(toks[1], Tok::Mask(0));
        assert_eq!(toks[3], Tok::Mask(1));
    }

    #[test]
    fn keywords_are_rarest_words() {
        let qs = [
            "How many bags of chocolates?",
            "How many bags of lollipops?",
            "How many bags of gum sticks?",
        ];
        let table = KeywordTable::from_questions(qs);
        let kw = table.keywords(qs[2]);
        assert_eq!(kw, ["gum", "sticks"].iter().map(|s| s.to_string()).collect());
        assert_eq!(table.keywords("How many jars of jam?"), ["jars", "jam"].iter().map(|s| s.to_string()).collect());
        assert!(table.keywords("").is_empty());
    }

    #[test]
    fn learner_separates_trivial_data_deterministically() {
        let ex: Vec<Example> = (0..200)
            .map(|i| Example {
                features: vec![(i % 2) as u32, 7],
                label: i % 2,
                weight: 1.0,
            })
            .collect();
        let cfg = SgdConfig { seed: 3, ..Default::default() };
        let acc = |m: &LinearModel| {
            ex.iter()
                .filter(|e| {
                    let p = m.probabilities(&e.features);
                    (p[1] > p[0]) == (e.label == 1)
                })
                .count() as f64
                / ex.len() as f64
        };
        let (m1, a1) = LinearModel::train(16, 2, &ex, &cfg, acc);
        let (m2, _) = LinearModel::train(16, 2, &ex, &cfg, acc);
        assert_eq!(a1, 1.0);
        assert_eq!(m1, m2);
        assert_eq!(LinearModel::from_sparse(&m1.to_sparse()).unwrap(), m1);
    }

    #[test]
    fn softmax_normalizes() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[0] > 0.999);
    }
}
