//! Per-slot answer classification: does the response state 0, 1 or some
//! other value for the slot?
//!
//! The classifier input is `<cls>` + slot question + `<sep>` + response +
//! `<sep>`. Every `<` inside the question or response is doubled, so a
//! marker is a single `<` followed by `cls>` or `sep>` when the string is
//! read left to right, and the formatting is injective.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ClassLabel;
use crate::error::{Error, Result};
use crate::features::{
    self, add_ngrams, magnitude_bucket, value_class, Example, FeatureSink, KeywordTable, LinearModel,
    ModelMeta, SparseWeights, Tok, TrainOptions,
};

pub const CLS_MARKER: &str = "<cls>";
pub const SEP_MARKER: &str = "<sep>";
const FORMAT_TAG: &str = "valueid-classifier v1";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClassifierInput {
    formatted: String,
}

fn escape(s: &str) -> String {
    s.replace('<', "<<")
}

#[derive(Debug, PartialEq, Eq)]
enum Piece<'a> {
    Text(String),
    Marker(&'a str),
}

fn pieces(s: &str) -> Result<Vec<Piece<'static>>> {
    let mut out = Vec::new();
    let mut text = String::new();
    let mut rest = s;
    while let Some(c) = rest.chars().next() {
        if c != '<' {
            text.push(c);
            rest = &rest[c.len_utf8()..];
        } else if let Some(r) = rest.strip_prefix("<<") {
            text.push('<');
            rest = r;
        } else {
            let marker = [CLS_MARKER, SEP_MARKER]
                .into_iter()
                .find(|m| rest.starts_with(m))
                .ok_or_else(|| Error::structural("unescaped `<` in classifier input"))?;
            out.push(Piece::Text(std::mem::take(&mut text)));
            out.push(Piece::Marker(marker));
            rest = &rest[marker.len()..];
        }
    }
    out.push(Piece::Text(text));
    Ok(out)
}

impl ClassifierInput {
    pub fn as_str(&self) -> &str {
        &self.formatted
    }

    /// Recovers `(slot question, response)`.
    pub fn decode(&self) -> Result<(String, String)> {
        let p = pieces(&self.formatted)?;
        match p.as_slice() {
            [Piece::Text(a), Piece::Marker(CLS_MARKER), Piece::Text(q), Piece::Marker(SEP_MARKER), Piece::Text(r), Piece::Marker(SEP_MARKER), Piece::Text(z)]
                if a.is_empty() && z.is_empty() =>
            {
                Ok((q.clone(), r.clone()))
            }
            _ => Err(Error::structural("classifier input is not `<cls>Q<sep>R<sep>`")),
        }
    }

    /// Number of `<cls>` and `<sep>` markers, honoring the escaping.
    pub fn marker_counts(&self) -> (usize, usize) {
        let p = pieces(&self.formatted).unwrap_or_default();
        let count = |m: &str| p.iter().filter(|x| **x == Piece::Marker(m)).count();
        (count(CLS_MARKER), count(SEP_MARKER))
    }
}

impl std::fmt::Display for ClassifierInput {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.formatted)
    }
}

pub fn format_classifier_input(slot_question: &str, response: &str) -> ClassifierInput {
    ClassifierInput {
        formatted: format!(
            "{CLS_MARKER}{}{SEP_MARKER}{}{SEP_MARKER}",
            escape(slot_question),
            escape(response)
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub p_zero: f64,
    pub p_one: f64,
    pub p_other: f64,
}

impl ClassDistribution {
    /// Checks that the probabilities lie in [0,1] and sum to 1 within 1e-9.
    pub fn new(p_zero: f64, p_one: f64, p_other: f64) -> Result<Self> {
        let d = ClassDistribution { p_zero, p_one, p_other };
        let a = d.as_array();
        if a.iter().any(|p| !(0.0..=1.0).contains(p)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!("invalid class distribution {a:?}")));
        }
        Ok(d)
    }

    /// Normalizes non-negative weights; all-zero weights give the uniform
    /// distribution.
    pub fn from_weights(w: [f64; 3]) -> Result<Self> {
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::data("class weights must be finite and non-negative"));
        }
        let s: f64 = w.iter().sum();
        let [a, b, c] = if s > 0.0 { w.map(|x| x / s) } else { [1.0 / 3.0; 3] };
        Ok(ClassDistribution {
            p_zero: a,
            p_one: b,
            p_other: c,
        })
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.p_zero, self.p_one, self.p_other]
    }

    /// Most probable class; ties resolve in the order Zero, One, Other.
    pub fn argmax(&self) -> ClassLabel {
        let p = self.as_array();
        let mut best = 0;
        for i in 1..3 {
            if p[i] > p[best] {
                best = i;
            }
        }
        ClassLabel::ALL[best]
    }
}

/// Anything that maps a classifier input to a class posterior.
pub trait ClassScorer: Sync {
    fn predict(&self, input: &ClassifierInput) -> Result<ClassDistribution>;
}

/// One labeled training case.
#[derive(Debug, Clone, Copy)]
pub struct ClassExample<'a> {
    pub slot_question: &'a str,
    pub response: &'a str,
    pub label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    meta: ModelMeta,
    keywords: KeywordTable,
    weights: LinearModel,
}

#[derive(Serialize, Deserialize)]
struct ClassifierArtifact {
    format: String,
    meta: ModelMeta,
    keywords: KeywordTable,
    weights: SparseWeights,
}

fn tok_str(t: &Tok) -> String {
    match t {
        Tok::Word(w) => w.clone(),
        Tok::Num(v) => value_class(v).to_string(),
        Tok::Mask(_) => "<m>".to_string(),
        Tok::Punct(c) => c.to_string(),
    }
}

fn extract(dim: u32, keywords: &KeywordTable, question: &str, response: &str) -> Vec<u32> {
    let mut sink = FeatureSink::new(dim);
    sink.add(&["bias"]);
    let q = features::question_words(question);
    let q_refs: Vec<&str> = q.iter().map(String::as_str).collect();
    add_ngrams(&mut sink, "q", &q_refs, 3);

    let toks = features::tokenize_response(response);
    let strs: Vec<String> = toks.iter().map(tok_str).collect();
    let refs: Vec<&str> = strs.iter().map(String::as_str).collect();
    add_ngrams(&mut sink, "r", &refs, 3);

    let nums: Vec<_> = toks
        .iter()
        .filter_map(|t| match t {
            Tok::Num(v) => Some(*v),
            _ => None,
        })
        .collect();
    let count = match nums.len() {
        0 => "0",
        1 => "1",
        2 => "2",
        3 => "3",
        _ => "4+",
    };
    sink.add(&["nnum", count]);
    if nums.iter().any(|v| v.is_zero()) {
        sink.add(&["has0"]);
    }
    if nums.iter().any(|v| *v == crate::Rational::ONE) {
        sink.add(&["has1"]);
    }

    let kw: HashSet<String> = keywords.keywords(question);
    let mut found = false;
    for (i, t) in toks.iter().enumerate() {
        let Tok::Word(w) = t else { continue };
        if !kw.contains(w) {
            continue;
        }
        found = true;
        let at = |d: isize| -> &str {
            let j = i as isize + d;
            if j < 0 || j as usize >= refs.len() {
                "^"
            } else {
                refs[j as usize]
            }
        };
        for d in 1..=3isize {
            let tag = ["kL1", "kL2", "kL3"][d as usize - 1];
            sink.add(&[tag, at(-d)]);
        }
        sink.add(&["kL12", at(-2), at(-1)]);
        sink.add(&["kL123", at(-3), at(-2), at(-1)]);
        sink.add(&["kR1", at(1)]);
        sink.add(&["kR2", at(2)]);
        sink.add(&["kR12", at(1), at(2)]);
        for d in 1..=4usize {
            if let Some(Tok::Num(v)) = i.checked_sub(d).map(|j| &toks[j]) {
                sink.add(&["kNumL", value_class(v), magnitude_bucket(v)]);
                break;
            }
        }
        for d in 1..=3usize {
            if let Some(Tok::Num(v)) = toks.get(i + d) {
                sink.add(&["kNumR", value_class(v)]);
                break;
            }
        }
    }
    sink.add(&["kw", if found { "present" } else { "absent" }]);
    sink.finish()
}

impl ClassifierModel {
    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    fn features(&self, question: &str, response: &str) -> Vec<u32> {
        extract(self.weights.dim(), &self.keywords, question, response)
    }

    pub fn predict_pair(&self, slot_question: &str, response: &str) -> ClassDistribution {
        let p = self.weights.probabilities(&self.features(slot_question, response));
        ClassDistribution {
            p_zero: p[0],
            p_one: p[1],
            p_other: p[2],
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        features::save_json(
            path.as_ref(),
            &ClassifierArtifact {
                format: FORMAT_TAG.to_string(),
                meta: self.meta.clone(),
                keywords: self.keywords.clone(),
                weights: self.weights.to_sparse(),
            },
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let a: ClassifierArtifact = features::load_json(path)?;
        if a.format != FORMAT_TAG {
            return Err(Error::format(path, 1, "format", format!("expected `{FORMAT_TAG}`")));
        }
        let weights = LinearModel::from_sparse(&a.weights)?;
        if weights.classes() != 3 {
            return Err(Error::format(path, 1, "weights", "classifier needs 3 classes"));
        }
        Ok(ClassifierModel {
            meta: a.meta,
            keywords: a.keywords,
            weights,
        })
    }
}

impl ClassScorer for ClassifierModel {
    fn predict(&self, input: &ClassifierInput) -> Result<ClassDistribution> {
        predict_class(self, input)
    }
}

pub fn predict_class(model: &ClassifierModel, input: &ClassifierInput) -> Result<ClassDistribution> {
    let (q, r) = input.decode()?;
    Ok(model.predict_pair(&q, &r))
}

/// Mean per-class accuracy over the classes present in `cases`.
pub fn macro_accuracy(pairs: impl IntoIterator<Item = (ClassLabel, ClassLabel)>) -> f64 {
    let mut hit = [0usize; 3];
    let mut tot = [0usize; 3];
    for (gold, pred) in pairs {
        tot[gold.index()] += 1;
        if gold == pred {
            hit[gold.index()] += 1;
        }
    }
    let present: Vec<f64> = (0..3)
        .filter(|&c| tot[c] > 0)
        .map(|c| hit[c] as f64 / tot[c] as f64)
        .collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

pub fn train_baseline_classifier(
    train: &[ClassExample<'_>],
    dev: &[ClassExample<'_>],
    options: &TrainOptions,
) -> Result<ClassifierModel> {
    let mut counts = [0usize; 3];
    for e in train {
        counts[e.label.index()] += 1;
    }
    let present = counts.iter().filter(|c| **c > 0).count();
    if present < 2 {
        return Err(Error::data(format!(
            "classifier training needs at least two classes, found {present}"
        )));
    }
    let dim = options.dim();
    let keywords = KeywordTable::from_questions(train.iter().map(|e| e.slot_question));
    let n = train.len() as f64;
    let class_weight: Vec<f64> = counts
        .iter()
        .map(|&c| if c == 0 { 0.0 } else { n / (present as f64 * c as f64) })
        .collect();
    let examples: Vec<Example> = train
        .iter()
        .map(|e| Example {
            features: extract(dim, &keywords, e.slot_question, e.response),
            label: e.label.index(),
            weight: class_weight[e.label.index()],
        })
        .collect();
    let dev_x: Vec<(Vec<u32>, ClassLabel)> = dev
        .iter()
        .map(|e| (extract(dim, &keywords, e.slot_question, e.response), e.label))
        .collect();
    let train_eval: Vec<(Vec<u32>, ClassLabel)> = if dev_x.is_empty() {
        examples
            .iter()
            .map(|e| (e.features.clone(), ClassLabel::ALL[e.label]))
            .collect()
    } else {
        Vec::new()
    };
    let eval_set = if dev_x.is_empty() { &train_eval } else { &dev_x };
    let (weights, score) = LinearModel::train(dim, 3, &examples, &options.sgd, |m| {
        macro_accuracy(eval_set.iter().map(|(x, gold)| {
            let p = m.probabilities(x);
            let d = ClassDistribution {
                p_zero: p[0],
                p_one: p[1],
                p_other: p[2],
            };
            (*gold, d.argmax())
        }))
    });
    Ok(ClassifierModel {
        meta: ModelMeta {
            model_id: "classifier".to_string(),
            corpus_id: options.corpus_id.clone(),
            seed: options.seed,
            dev_score: score,
        },
        keywords,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn format_matches_marker_layout() {
        let f = format_classifier_input("How many bags of gum sticks?", "no gum");
        assert_eq!(f.as_str(), "<cls>How many bags of gum sticks?<sep>no gum<sep>");
        assert_eq!(format_classifier_input("", "").as_str(), "<cls><sep><sep>");
    }

    #[test]
    fn markers_in_text_are_escaped() {
        let f = format_classifier_input("a<sep>b", "<cls> x <<");
        assert_eq!(f.as_str(), "<cls>a<<sep>b<sep><<cls> x <<<<<sep>");
        assert_eq!(f.marker_counts(), (1, 2));
        assert_eq!(f.decode().unwrap(), ("a<sep>b".to_string(), "<cls> x <<".to_string()));
    }

    #[test]
    fn argmax_tie_break_order() {
        let d = ClassDistribution::from_weights([1.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.argmax(), ClassLabel::Zero);
        let d = ClassDistribution::from_weights([0.0, 1.0, 1.0]).unwrap();
        assert_eq!(d.argmax(), ClassLabel::One);
    }

    fn toy() -> Vec<(String, String, ClassLabel)> {
        let items = ["chocolates", "lollipops", "gum sticks", "toffees", "mints"];
        let mut out = Vec::new();
        for (i, it) in items.iter().enumerate() {
            let q = format!("How many bags of {it}?");
            for k in 0..12 {
                let other = items[(i + 1 + k % 4) % items.len()];
                let (r, l) = match k % 4 {
                    0 => (format!("{} bags of {it} and a bag of {other}", k + 2), ClassLabel::Other),
                    1 => (format!("a bag of {it} and {} bags of {other}", k + 2), ClassLabel::One),
                    2 => (format!("no {it}, {} bags of {other}", k + 3), ClassLabel::Zero),
                    _ => (format!("{} bags of {other}", k + 2), ClassLabel::Zero),
                };
                out.push((q.clone(), r, l));
            }
        }
        out
    }

    fn examples(data: &[(String, String, ClassLabel)]) -> Vec<ClassExample<'_>> {
        data.iter()
            .map(|(q, r, l)| ClassExample {
                slot_question: q,
                response: r,
                label: *l,
            })
            .collect()
    }

    #[test]
    fn trains_on_toy_data_and_predicts() {
        let data = toy();
        let ex = examples(&data);
        let opts = TrainOptions {
            hash_bits: 16,
            ..TrainOptions::new(5)
        };
        let m = train_baseline_classifier(&ex, &ex, &opts).unwrap();
        let lolly = "How many bags of lollipops?";
        let gum = "How many bags of gum sticks?";
        let p = predict_class(&m, &format_classifier_input(lolly, "a bag of lollipops")).unwrap();
        assert_eq!(p.argmax(), ClassLabel::One);
        let p = predict_class(&m, &format_classifier_input(gum, "no gum sticks")).unwrap();
        assert_eq!(p.argmax(), ClassLabel::Zero);
        assert!((p.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(m.meta().dev_score > 0.9);

        let again = train_baseline_classifier(&ex, &ex, &opts).unwrap();
        assert_eq!(m, again);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cls.json");
        m.save(&path).unwrap();
        assert_eq!(ClassifierModel::load(&path).unwrap(), m);
    }

    #[test]
    fn single_class_is_rejected() {
        let ex = [ClassExample {
            slot_question: "q",
            response: "no gum",
            label: ClassLabel::Zero,
        }];
        assert!(matches!(
            train_baseline_classifier(&ex, &[], &TrainOptions::new(1)),
            Err(Error::Data(_))
        ));
    }

    proptest! {
        #[test]
        fn formatting_is_injective(a in ".{0,12}", b in ".{0,12}", c in ".{0,12}", d in ".{0,12}") {
            let x = format_classifier_input(&a, &b);
            let y = format_classifier_input(&c, &d);
            prop_assert_eq!(x == y, (a.clone(), b.clone()) == (c, d));
            prop_assert_eq!(x.decode().unwrap(), (a, b));
            prop_assert_eq!(x.marker_counts(), (1, 2));
        }

        #[test]
        fn weights_normalize(w in proptest::array::uniform3(0.0f64..10.0)) {
            let d = ClassDistribution::from_weights(w).unwrap();
            prop_assert!((d.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
