//! End-to-end wiring: masking, training, scoring, ensembling and
//! evaluation over a split corpus.
//!
//! # Predictions file
//!
//! ```text
//! #valueid-predictions v1 members=context,proximity
//! response_id,slot_id,class,p_zero,p_one,p_other,ensemble,context,proximity
//! p1-r00001,s1,other,0.01,0.02,0.97,9,9,9
//! ```
//!
//! Value columns are canonical rationals, empty when the response has no
//! numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::classify::{self, ClassDistribution, ClassExample, ClassScorer, ClassifierModel};
use crate::corpus::{self, ClassLabel, Corpus, Partition, ResponseRecord, SplitAssignment};
use crate::ensemble::{self, DevCase, FitMode, FittedEnsemble};
use crate::error::{Error, Result};
use crate::features::TrainOptions;
use crate::identify::{
    self, IdentifierConfig, IdentifierExample, IdentifierModel, ScoreTable, SlotCase, TargetPolicy, TokenScorer,
};
use crate::metrics::{self, AgreementReport, EngineOutput, EngineOutputs};
use crate::numlex::{self, MaskedText};

pub const PREDICTIONS_HEADER: &str = "#valueid-predictions v1";

/// Content hash identifying a corpus in model metadata.
pub fn corpus_id(corpus: &Corpus) -> Result<String> {
    let mut h = Sha256::new();
    h.update(corpus.render_prompts());
    h.update(corpus.render_records()?);
    Ok(hex(&h.finalize())[..16].to_string())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Runs `f` on a pool of `workers` threads (0 = rayon's default).
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Masked text of every record, keyed by response id.
pub struct Masks(BTreeMap<String, MaskedText>);

impl Masks {
    pub fn build(corpus: &Corpus) -> Self {
        let v: Vec<(String, MaskedText)> = corpus
            .records()
            .par_iter()
            .map(|r| (r.response_id.clone(), numlex::mask_text(&r.text)))
            .collect();
        Masks(v.into_iter().collect())
    }

    pub fn get(&self, response_id: &str) -> &MaskedText {
        &self.0[response_id]
    }
}

pub fn class_examples<'a>(corpus: &'a Corpus, split: &'a SplitAssignment, partition: Partition) -> Vec<ClassExample<'a>> {
    corpus
        .records_in(split, partition)
        .flat_map(|r| {
            let p = corpus.prompt_of(r);
            p.slots.iter().zip(&r.labels).map(move |(s, l)| ClassExample {
                slot_question: &s.question,
                response: &r.text,
                label: l.resolved.class(),
            })
        })
        .collect()
}

/// Other-class cases of a partition; the identifier drops those whose value
/// is missing from the text.
pub fn identifier_examples<'a>(
    corpus: &'a Corpus,
    masks: &'a Masks,
    split: &'a SplitAssignment,
    partition: Partition,
) -> Vec<IdentifierExample<'a>> {
    corpus
        .records_in(split, partition)
        .flat_map(|r| {
            let p = corpus.prompt_of(r);
            let m = masks.get(&r.response_id);
            p.slots
                .iter()
                .zip(&r.labels)
                .filter(|(_, l)| l.resolved.class() == ClassLabel::Other)
                .map(move |(s, l)| IdentifierExample {
                    slot_question: &s.question,
                    masked: m,
                    resolved: &l.resolved,
                })
        })
        .collect()
}

pub fn train_classifier(corpus: &Corpus, split: &SplitAssignment, opts: &TrainOptions) -> Result<ClassifierModel> {
    let train = class_examples(corpus, split, Partition::Train);
    let dev = class_examples(corpus, split, Partition::Dev);
    classify::train_baseline_classifier(&train, &dev, opts)
}

pub fn train_identifier(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    opts: &TrainOptions,
    config: IdentifierConfig,
    model_id: &str,
    policy: TargetPolicy,
) -> Result<IdentifierModel> {
    let train = identifier_examples(corpus, masks, split, Partition::Train);
    let dev = identifier_examples(corpus, masks, split, Partition::Dev);
    identify::train_baseline_identifier(&train, &dev, opts, config, model_id, policy)
}

fn slot_cases<'a>(
    corpus: &'a Corpus,
    masks: &'a Masks,
    records: &[&'a ResponseRecord],
) -> Vec<SlotCase<'a>> {
    records
        .iter()
        .flat_map(|r| {
            let p = corpus.prompt_of(r);
            let m = masks.get(&r.response_id);
            p.slots.iter().map(move |s| SlotCase {
                response_id: &r.response_id,
                slot_id: &s.slot_id,
                slot_question: &s.question,
                masked: m,
            })
        })
        .collect()
}

/// Scores every slot of every `partition` record with each scorer.
pub fn score_partition(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    partition: Partition,
    scorers: &[&dyn TokenScorer],
) -> Result<ScoreTable> {
    let records: Vec<&ResponseRecord> = corpus.records_in(split, partition).collect();
    let cases = slot_cases(corpus, masks, &records);
    let mut table = ScoreTable::new();
    for s in scorers {
        let scored: Vec<_> = cases
            .par_iter()
            .map(|c| s.score(c).map(|x| (c.response_id, c.slot_id, x)))
            .collect::<Result<_>>()?;
        for (r, slot, x) in scored {
            table.insert(r, slot, s.model_id(), x);
        }
    }
    Ok(table)
}

/// Development cases per `(prompt_id, slot_id)`: resolved Other cases with
/// every member's scores. Every slot of every prompt gets an entry.
pub fn dev_cases(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    table: &ScoreTable,
    members: &[String],
) -> Result<BTreeMap<(String, String), Vec<DevCase>>> {
    let mut out: BTreeMap<(String, String), Vec<DevCase>> = BTreeMap::new();
    for p in corpus.prompts() {
        for s in &p.slots {
            out.insert((p.prompt_id.clone(), s.slot_id.clone()), Vec::new());
        }
    }
    for r in corpus.records_in(split, Partition::Dev) {
        let p = corpus.prompt_of(r);
        let m = masks.get(&r.response_id);
        for (s, l) in p.slots.iter().zip(&r.labels) {
            let Some(gold) = l.resolved.value().filter(|_| l.resolved.class() == ClassLabel::Other) else {
                continue;
            };
            let member_scores = members
                .iter()
                .map(|id| {
                    table.get(&r.response_id, &s.slot_id, id).cloned().ok_or_else(|| {
                        Error::data(format!("no dev scores from `{id}` for {}/{}", r.response_id, s.slot_id))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            out.entry((p.prompt_id.clone(), s.slot_id.clone())).or_default().push(DevCase {
                member_scores,
                values: m.values().to_vec(),
                gold,
            });
        }
    }
    Ok(out)
}

pub fn fit_ensemble(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    table: &ScoreTable,
    members: &[String],
    mode: FitMode,
) -> Result<FittedEnsemble> {
    let dev = dev_cases(corpus, masks, split, table, members)?;
    ensemble::fit_weights(members, &dev, mode)
}

/// Class posteriors and values for every slot of the `partition` records.
pub fn evaluate(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    partition: Partition,
    classifier: &dyn ClassScorer,
    table: &ScoreTable,
    fitted: &FittedEnsemble,
) -> Result<Predictions> {
    let records: Vec<&ResponseRecord> = corpus.records_in(split, partition).collect();
    let cases = slot_cases(corpus, masks, &records);
    let rows: Vec<PredictionRow> = cases
        .par_iter()
        .map(|c| {
            let r = corpus.record(c.response_id).expect("case from corpus");
            let dist = classifier.predict(&classify::format_classifier_input(c.slot_question, &r.text))?;
            let mut member_scores = Vec::with_capacity(fitted.members().len());
            for id in fitted.members() {
                let s = table.member(id).score(c)?;
                member_scores.push((id.clone(), s));
            }
            let mut member_choices = BTreeMap::new();
            for (id, s) in &member_scores {
                let choice = identify::select_value(s.as_slice(), c.masked)?.map(|x| x.chosen);
                member_choices.insert(id.clone(), choice);
            }
            let refs: Vec<(&str, &identify::TokenScores)> =
                member_scores.iter().map(|(id, s)| (id.as_str(), s)).collect();
            let ensemble_choice =
                ensemble::ensemble_predict(fitted, &refs, c.masked, &r.prompt_id, c.slot_id)?.map(|x| x.chosen);
            Ok(PredictionRow {
                response_id: c.response_id.to_string(),
                slot_id: c.slot_id.to_string(),
                distribution: dist,
                output: EngineOutput {
                    class: dist.argmax(),
                    member_choices,
                    ensemble_choice,
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok(Predictions {
        members: fitted.members().to_vec(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub response_id: String,
    pub slot_id: String,
    pub distribution: ClassDistribution,
    pub output: EngineOutput,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub members: Vec<String>,
    pub rows: Vec<PredictionRow>,
}

fn opt_value(v: &Option<crate::Rational>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Predictions {
    pub fn outputs(&self) -> EngineOutputs {
        self.rows
            .iter()
            .map(|r| ((r.response_id.clone(), r.slot_id.clone()), r.output.clone()))
            .collect()
    }

    pub fn render(&self) -> String {
        let mut out = format!("{PREDICTIONS_HEADER} members={}\n", self.members.join(","));
        out.push_str("response_id,slot_id,class,p_zero,p_one,p_other,ensemble");
        for m in &self.members {
            out.push(',');
            out.push_str(m);
        }
        out.push('\n');
        for r in &self.rows {
            let d = &r.distribution;
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                r.response_id,
                r.slot_id,
                r.output.class,
                d.p_zero,
                d.p_one,
                d.p_other,
                opt_value(&r.output.ensemble_choice)
            );
            for m in &self.members {
                out.push(',');
                out.push_str(&opt_value(r.output.member_choices.get(m).unwrap_or(&None)));
            }
            out.push('\n');
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
        let mut lines = text.lines().enumerate();
        let members: Vec<String> = match lines.next() {
            Some((_, h)) => match h.strip_prefix(PREDICTIONS_HEADER).map(str::trim) {
                Some(rest) => rest
                    .strip_prefix("members=")
                    .ok_or_else(|| Error::format(path, 1, "header", "missing members="))?
                    .split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect(),
                None => return Err(Error::format(path, 1, "header", format!("expected `{PREDICTIONS_HEADER}`"))),
            },
            None => return Err(Error::format(path, 1, "header", "empty file")),
        };
        let mut rows = Vec::new();
        for (i, line) in lines {
            let ln = i + 1;
            if line.trim().is_empty() || line.starts_with("response_id,") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 + members.len() {
                return Err(Error::format(path, ln, "row", format!("expected {} fields", 7 + members.len())));
            }
            let prob = |k: usize, name: &str| {
                f[k].parse::<f64>()
                    .map_err(|_| Error::format(path, ln, name, format!("`{}` is not a number", f[k])))
            };
            let value = |k: usize, name: &str| -> Result<Option<crate::Rational>> {
                if f[k].is_empty() {
                    Ok(None)
                } else {
                    f[k].parse()
                        .map(Some)
                        .map_err(|_| Error::format(path, ln, name, format!("`{}` is not a rational", f[k])))
                }
            };
            let class: ClassLabel = f[2].parse().map_err(|_| Error::format(path, ln, "class", f[2]))?;
            let distribution = ClassDistribution::new(prob(3, "p_zero")?, prob(4, "p_one")?, prob(5, "p_other")?)
                .map_err(|e| Error::format(path, ln, "p_zero", e.to_string()))?;
            let mut member_choices = BTreeMap::new();
            for (k, m) in members.iter().enumerate() {
                member_choices.insert(m.clone(), value(7 + k, m)?);
            }
            rows.push(PredictionRow {
                response_id: f[0].to_string(),
                slot_id: f[1].to_string(),
                distribution,
                output: EngineOutput {
                    class,
                    member_choices,
                    ensemble_choice: value(6, "ensemble")?,
                },
            });
        }
        Ok(Predictions { members, rows })
    }
}

/// Settings of a complete baseline run.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub seed: u64,
    pub hash_bits: u32,
    pub mode: FitMode,
    pub policy: TargetPolicy,
    pub workers: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            seed: 1,
            hash_bits: 20,
            mode: FitMode::PerSlot,
            policy: TargetPolicy::default(),
            workers: 0,
        }
    }
}

pub struct PipelineRun {
    pub classifier: ClassifierModel,
    pub identifiers: Vec<IdentifierModel>,
    pub fitted: FittedEnsemble,
    pub predictions: Predictions,
    pub report: AgreementReport,
}

/// Trains both baseline identifiers and the classifier, fits the ensemble
/// on the dev split and evaluates on the test split.
pub fn run_baseline(corpus: &Corpus, split: &SplitAssignment, opts: &PipelineOptions) -> Result<PipelineRun> {
    with_workers(opts.workers, || {
        let masks = Masks::build(corpus);
        let train_opts = |salt: u64| {
            let mut t = TrainOptions::new(opts.seed.wrapping_add(salt));
            t.hash_bits = opts.hash_bits;
            t.corpus_id = corpus_id(corpus).unwrap_or_default();
            t
        };
        let configs = [IdentifierConfig::Context, IdentifierConfig::Proximity];
        let trained: Vec<Result<IdentifierModel>> = configs
            .par_iter()
            .enumerate()
            .map(|(k, c)| {
                train_identifier(corpus, &masks, split, &train_opts(1 + k as u64), *c, c.default_model_id(), opts.policy)
            })
            .collect();
        let identifiers = trained.into_iter().collect::<Result<Vec<_>>>()?;
        let classifier = train_classifier(corpus, split, &train_opts(0))?;
        let scorers: Vec<&dyn TokenScorer> = identifiers.iter().map(|m| m as &dyn TokenScorer).collect();
        let members: Vec<String> = identifiers.iter().map(|m| m.meta().model_id.clone()).collect();
        let dev_table = score_partition(corpus, &masks, split, Partition::Dev, &scorers)?;
        let fitted = fit_ensemble(corpus, &masks, split, &dev_table, &members, opts.mode)?;
        let test_table = score_partition(corpus, &masks, split, Partition::Test, &scorers)?;
        let predictions = evaluate(corpus, &masks, split, Partition::Test, &classifier, &test_table, &fitted)?;
        let report = metrics::build_report(corpus, split, Partition::Test, &members, &predictions.outputs())?;
        Ok(PipelineRun {
            classifier,
            identifiers,
            fitted,
            predictions,
            report,
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syngen::{self, GeneratorConfig, SlotCounts};

    fn small_corpus() -> Corpus {
        let cfg = GeneratorConfig {
            seed: 11,
            prompts: 3,
            responses_per_prompt: 300,
            slots: SlotCounts::PerPrompt(vec![3, 1, 4]),
            ..GeneratorConfig::default()
        };
        syngen::generate_corpus(&cfg).unwrap().corpus().unwrap()
    }

    #[test]
    fn small_run_is_accurate_and_worker_independent() {
        let corpus = small_corpus();
        let split = corpus::split_corpus(&corpus, 3).unwrap();
        let opts = PipelineOptions {
            hash_bits: 18,
            workers: 1,
            ..PipelineOptions::default()
        };
        let one = run_baseline(&corpus, &split, &opts).unwrap();
        let total = one.report.total();
        assert!(total.ensemble_p.value().unwrap() > 0.9, "{}", one.report.render_text(false));
        let four = run_baseline(&corpus, &split, &PipelineOptions { workers: 4, ..opts }).unwrap();
        assert_eq!(one.predictions, four.predictions);
        assert_eq!(one.report, four.report);

        let text = one.predictions.render();
        let back = Predictions::parse(Path::new("p.csv"), &text).unwrap();
        assert_eq!(back.render(), text);
        assert_eq!(back.outputs(), one.predictions.outputs());
    }
}
