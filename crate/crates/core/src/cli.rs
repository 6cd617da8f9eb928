//! The `valueid` command line.
//!
//! Every subcommand that takes `--out` writes only inside that directory and
//! leaves a `<command>.manifest.json` there. Exit codes: 0 success, 1 usage,
//! 2 bad data or file format, 3 internal invariant violation.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};

use crate::classify::ClassifierModel;
use crate::corpus::{self, Corpus, Partition, SplitAssignment};
use crate::ensemble::{FitMode, FittedEnsemble};
use crate::error::{Error, Result};
use crate::features::TrainOptions;
use crate::identify::{self, IdentifierConfig, IdentifierModel, ScoreTable, TargetPolicy, TokenScorer};
use crate::manifest::RunManifest;
use crate::metrics;
use crate::numlex;
use crate::pipeline::{self, Masks, Predictions};
use crate::rational::Rational;
use crate::syngen::{self, GeneratorConfig};
use crate::verify::{self, LinearConstraint};

pub const SPLIT_FILE: &str = "split.tsv";
pub const CLASSIFIER_FILE: &str = "classifier.json";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const SCORES_FILE: &str = "scores.tsv";

#[derive(Debug, Parser)]
#[command(name = "valueid", version, about = "Numeric value identification for short math responses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Gen(GenArgs),
    /// Annotate every number in each line of a text file.
    Normalize(TextArgs),
    /// Replace every number in each line of a text file by a placeholder.
    Mask(TextArgs),
    /// Assign responses to train/dev/test.
    Split(SplitArgs),
    TrainClassifier(TrainClassifierArgs),
    TrainIdentifier(TrainIdentifierArgs),
    /// Validate an external score file against a corpus.
    ImportScores(ImportArgs),
    /// Fit convex ensemble weights on the dev split.
    FitEnsemble(FitArgs),
    /// Classify and identify values on one partition (test by default).
    Evaluate(EvaluateArgs),
    /// Agreement tables for a predictions file.
    Report(ReportArgs),
    /// Check extracted values against a prompt's linear constraint.
    Verify(VerifyArgs),
    /// Class mix and missing-value bounds of a corpus.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Generator config file (key = value lines); defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Separate seed for rater simulation.
    #[arg(long)]
    seed_raters: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TextArgs {
    /// Plain text file, one response per line.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Corpus directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed_split: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Data {
    /// Corpus directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    split: PathBuf,
}

#[derive(Debug, Args)]
struct TrainClassifierArgs {
    #[command(flatten)]
    data: Data,
    #[arg(long, default_value_t = 1)]
    seed_train: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(8..=26))]
    hash_bits: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainIdentifierArgs {
    #[command(flatten)]
    data: Data,
    #[arg(long, value_parser = ["context", "proximity"])]
    model: String,
    /// Defaults to the model name.
    #[arg(long)]
    model_id: Option<String>,
    /// Skip training cases whose value appears more than once.
    #[arg(long)]
    strict_targets: bool,
    #[arg(long, default_value_t = 1)]
    seed_train: u64,
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(8..=26))]
    hash_bits: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct Members {
    /// Trained identifier model (repeatable).
    #[arg(long = "identifier")]
    identifiers: Vec<PathBuf>,
    /// External score file (repeatable).
    #[arg(long)]
    scores: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: Data,
    #[command(flatten)]
    members: Members,
    /// Fit one weight vector per slot; `false` fits a single global vector.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    per_slot_ensemble: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    data: Data,
    #[command(flatten)]
    members: Members,
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "dev", "test"])]
    partition: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    data: Data,
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "dev", "test"])]
    partition: String,
    /// Render kappas with no variation in the gold labels as "-".
    #[arg(long)]
    strict_kappa: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["prompt", "constraint"]))]
#[command(group = clap::ArgGroup::new("action").required(true).args(["values", "enumerate"]))]
struct VerifyArgs {
    /// Corpus directory holding the prompt.
    #[arg(long = "in", default_value = ".")]
    input: PathBuf,
    #[arg(long)]
    prompt: Option<String>,
    /// Inline constraint `c1,c2,...:total`.
    #[arg(long)]
    constraint: Option<String>,
    /// Comma-separated extracted values.
    #[arg(long)]
    values: Option<String>,
    /// List every non-negative integer solution.
    #[arg(long)]
    enumerate: bool,
    /// Optional directory for the result and a manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Restrict to one partition of this split.
    #[arg(long, requires = "partition")]
    split: Option<PathBuf>,
    #[arg(long, requires = "split", value_parser = ["train", "dev", "test"])]
    partition: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I: IntoIterator<Item = String>>(argv: I) -> i32 {
    let argv: Vec<String> = argv.into_iter().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let args = argv.get(1..).unwrap_or_default();
    match execute(cli.command, args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Invariant(_) => 3,
        _ => 2,
    }
}

/// Output directory plus the manifest being assembled for it.
struct Run {
    out: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, argv: &[String], out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        Ok(Run {
            out: out.to_path_buf(),
            manifest: RunManifest::new(command, argv),
        })
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.manifest.input(path)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        corpus::write_file(&path, contents)?;
        self.manifest.output(&path)?;
        Ok(path)
    }

    fn record(&mut self, path: &Path) -> Result<()> {
        self.manifest.output(path)
    }

    fn finish(self) -> Result<()> {
        self.manifest.save(&self.out).map(|_| ())
    }
}

fn parse_partition(s: &str) -> Result<Partition> {
    s.parse()
}

fn load_data(run: &mut Run, data: &Data) -> Result<(Corpus, SplitAssignment)> {
    let corpus = Corpus::load(&data.input)?;
    let split = SplitAssignment::load(&data.split)?;
    run.input(&data.input)?;
    run.input(&data.split)?;
    Ok((corpus, split))
}

fn train_options(seed: u64, hash_bits: u32, corpus: &Corpus) -> Result<TrainOptions> {
    let mut opts = TrainOptions::new(seed);
    opts.hash_bits = hash_bits;
    opts.corpus_id = pipeline::corpus_id(corpus)?;
    Ok(opts)
}

/// Loaded ensemble members: trained identifiers and imported score tables.
struct LoadedMembers {
    identifiers: Vec<IdentifierModel>,
    imported: ScoreTable,
    ids: Vec<String>,
}

fn load_members(run: &mut Run, members: &Members, corpus: &Corpus) -> Result<LoadedMembers> {
    let mut identifiers = Vec::new();
    let mut ids: Vec<String> = Vec::new();
    for path in &members.identifiers {
        let m = IdentifierModel::load(path)?;
        run.input(path)?;
        ids.push(m.meta().model_id.clone());
        identifiers.push(m);
    }
    let mut imported = ScoreTable::new();
    for path in &members.scores {
        let t = identify::import_external_scores(path, corpus)?;
        run.input(path)?;
        ids.extend(t.model_ids());
        imported.merge(t);
    }
    let mut seen = std::collections::BTreeSet::new();
    for id in &ids {
        if !seen.insert(id) {
            return Err(Error::data(format!("ensemble member `{id}` given more than once")));
        }
    }
    if ids.is_empty() {
        return Err(Error::data("no ensemble members: pass --identifier and/or --scores"));
    }
    run.manifest.workers = Some(members.workers);
    Ok(LoadedMembers {
        identifiers,
        imported,
        ids,
    })
}

/// Scores of every member on `partition`, identifiers scored in parallel.
fn member_table(
    corpus: &Corpus,
    masks: &Masks,
    split: &SplitAssignment,
    partition: Partition,
    members: &LoadedMembers,
    wanted: &[String],
    workers: usize,
) -> Result<ScoreTable> {
    let scorers: Vec<&dyn TokenScorer> = members
        .identifiers
        .iter()
        .filter(|m| wanted.contains(&m.meta().model_id))
        .map(|m| m as &dyn TokenScorer)
        .collect();
    let mut table = pipeline::with_workers(workers, || {
        pipeline::score_partition(corpus, masks, split, partition, &scorers)
    })??;
    table.merge(members.imported.clone());
    Ok(table)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    Ok(corpus::read_file(path)?.lines().map(str::to_string).collect())
}

fn parse_values(path: &Path, s: &str) -> Result<Vec<Rational>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<Rational>()
                .map_err(|_| Error::format(path, 1, "values", format!("`{}` is not a number", v.trim())))
        })
        .collect()
}

fn parse_constraint(s: &str) -> Result<LinearConstraint> {
    let arg = Path::new("--constraint");
    let (coefs, total) = s
        .split_once(':')
        .ok_or_else(|| Error::format(arg, 1, "constraint", "expected `c1,c2,...:total`"))?;
    let total = total
        .trim()
        .parse::<Rational>()
        .map_err(|_| Error::format(arg, 1, "total", format!("`{total}` is not a number")))?;
    LinearConstraint::new(parse_values(arg, coefs)?, total)
}

fn execute(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::Gen(a) => gen(a, argv),
        Command::Normalize(a) => normalize(a, argv),
        Command::Mask(a) => mask(a, argv),
        Command::Split(a) => split(a, argv),
        Command::TrainClassifier(a) => train_classifier(a, argv),
        Command::TrainIdentifier(a) => train_identifier(a, argv),
        Command::ImportScores(a) => import_scores(a, argv),
        Command::FitEnsemble(a) => fit_ensemble(a, argv),
        Command::Evaluate(a) => evaluate(a, argv),
        Command::Report(a) => report(a, argv),
        Command::Verify(a) => verify_values(a, argv),
        Command::Audit(a) => audit(a, argv),
    }
}

fn gen(a: GenArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("gen", argv, &a.out)?;
    let mut cfg = match &a.config {
        Some(p) => {
            run.input(p)?;
            run.manifest.config = Some(p.clone());
            GeneratorConfig::load(p)?
        }
        None => GeneratorConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let mut generated = syngen::generate_corpus(&cfg)?;
    let rater_seed = a.seed_raters.unwrap_or(cfg.seed ^ syngen::RATER_SEED_SALT);
    if a.seed_raters.is_some() {
        generated.records = syngen::simulate_raters(&generated.records, cfg.rater_disagreement, rater_seed)?;
    }
    run.manifest.seeds.insert("gen".into(), cfg.seed);
    run.manifest.seeds.insert("raters".into(), rater_seed);
    let corpus = generated.corpus()?;
    let prompts = run.write(corpus::PROMPTS_FILE, &corpus.render_prompts())?;
    run.write(corpus::RESPONSES_FILE, &corpus.render_records()?)?;
    run.write("generator.cfg", &cfg.render())?;
    println!(
        "wrote {} prompts and {} responses to {} (expected missing values: {})",
        corpus.prompts().len(),
        corpus.len(),
        prompts.parent().unwrap_or(Path::new(".")).display(),
        generated.expected_missing()
    );
    run.finish()
}

fn normalize(a: TextArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("normalize", argv, &a.out)?;
    run.input(&a.input)?;
    let mut out = String::new();
    for line in read_lines(&a.input)? {
        out.push_str(&numlex::annotate(&numlex::scan_numbers(&line)));
        out.push('\n');
    }
    run.write("normalized.txt", &out)?;
    run.finish()
}

fn mask(a: TextArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("mask", argv, &a.out)?;
    run.input(&a.input)?;
    let mut out = String::new();
    for line in read_lines(&a.input)? {
        let m = numlex::mask_text(&line);
        let values: Vec<String> = m.values().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}\t{}", m.template(), values.join(","));
    }
    run.write("masked.tsv", &out)?;
    run.finish()
}

fn split(a: SplitArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("split", argv, &a.out)?;
    let corpus = Corpus::load(&a.input)?;
    run.input(&a.input)?;
    run.manifest.seeds.insert("split".into(), a.seed_split);
    let split = corpus::split_corpus(&corpus, a.seed_split)?;
    let (train, dev, test) = split.sizes();
    run.write(SPLIT_FILE, &split.render())?;
    println!("train {train}, dev {dev}, test {test}");
    run.finish()
}

fn train_classifier(a: TrainClassifierArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("train-classifier", argv, &a.out)?;
    let (corpus, split) = load_data(&mut run, &a.data)?;
    run.manifest.seeds.insert("train".into(), a.seed_train);
    let opts = train_options(a.seed_train, a.hash_bits, &corpus)?;
    let model = pipeline::train_classifier(&corpus, &split, &opts)?;
    let path = a.out.join(CLASSIFIER_FILE);
    model.save(&path)?;
    run.record(&path)?;
    println!("classifier dev macro accuracy {:.4}", model.meta().dev_score);
    run.finish()
}

fn train_identifier(a: TrainIdentifierArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("train-identifier", argv, &a.out)?;
    let (corpus, split) = load_data(&mut run, &a.data)?;
    run.manifest.seeds.insert("train".into(), a.seed_train);
    let config: IdentifierConfig = a.model.parse()?;
    let model_id = a.model_id.unwrap_or_else(|| config.default_model_id().to_string());
    if model_id.is_empty() || model_id.contains([',', '\t', '\n']) {
        return Err(Error::data(format!("model id `{model_id}` must be non-empty without commas or tabs")));
    }
    let opts = train_options(a.seed_train, a.hash_bits, &corpus)?;
    let masks = Masks::build(&corpus);
    let policy = TargetPolicy {
        strict: a.strict_targets,
    };
    let model = pipeline::train_identifier(&corpus, &masks, &split, &opts, config, &model_id, policy)?;
    let path = a.out.join(format!("{model_id}.identifier.json"));
    model.save(&path)?;
    run.record(&path)?;
    println!("identifier `{model_id}` dev exact match {:.4}", model.meta().dev_score);
    run.finish()
}

fn import_scores(a: ImportArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("import-scores", argv, &a.out)?;
    let corpus = Corpus::load(&a.input)?;
    run.input(&a.input)?;
    run.input(&a.scores)?;
    let table = identify::import_external_scores(&a.scores, &corpus)?;
    run.write(SCORES_FILE, &table.render())?;
    println!("{} score rows from models {}", table.len(), table.model_ids().join(","));
    run.finish()
}

fn fit_ensemble(a: FitArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("fit-ensemble", argv, &a.out)?;
    let (corpus, split) = load_data(&mut run, &a.data)?;
    let members = load_members(&mut run, &a.members, &corpus)?;
    let masks = Masks::build(&corpus);
    let table = member_table(&corpus, &masks, &split, Partition::Dev, &members, &members.ids, a.members.workers)?;
    let mode = if a.per_slot_ensemble { FitMode::PerSlot } else { FitMode::Global };
    let fitted = pipeline::fit_ensemble(&corpus, &masks, &split, &table, &members.ids, mode)?;
    run.write(WEIGHTS_FILE, &fitted.render())?;
    let fallbacks = fitted.slots().values().filter(|f| f.is_fallback()).count();
    println!(
        "fitted {} weight vectors over members {} ({fallbacks} uniform fallbacks)",
        fitted.slots().len(),
        members.ids.join(",")
    );
    run.finish()
}

fn evaluate(a: EvaluateArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("evaluate", argv, &a.out)?;
    let (corpus, split) = load_data(&mut run, &a.data)?;
    let partition = parse_partition(&a.partition)?;
    let classifier = ClassifierModel::load(&a.classifier)?;
    run.input(&a.classifier)?;
    let fitted = FittedEnsemble::load(&a.weights)?;
    run.input(&a.weights)?;
    let members = load_members(&mut run, &a.members, &corpus)?;
    if let Some(missing) = fitted.members().iter().find(|m| !members.ids.contains(m)) {
        return Err(Error::data(format!("weights name member `{missing}` that was not supplied")));
    }
    let masks = Masks::build(&corpus);
    let workers = a.members.workers;
    let table = member_table(&corpus, &masks, &split, partition, &members, fitted.members(), workers)?;
    let predictions = pipeline::with_workers(workers, || {
        pipeline::evaluate(&corpus, &masks, &split, partition, &classifier, &table, &fitted)
    })??;
    run.write(PREDICTIONS_FILE, &predictions.render())?;
    println!("{} slot predictions on {partition}", predictions.rows.len());
    run.finish()
}

fn report(a: ReportArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("report", argv, &a.out)?;
    let (corpus, split) = load_data(&mut run, &a.data)?;
    let partition = parse_partition(&a.partition)?;
    let predictions = Predictions::load(&a.predictions)?;
    run.input(&a.predictions)?;
    let report = metrics::build_report(&corpus, &split, partition, &predictions.members, &predictions.outputs())?;
    run.write("prompts.csv", &report.prompts_csv(a.strict_kappa))?;
    run.write("slots.csv", &report.slots_csv())?;
    let text = report.render_text(a.strict_kappa);
    run.write("report.txt", &text)?;
    print!("{text}");
    run.finish()
}

fn verify_values(a: VerifyArgs, argv: &[String]) -> Result<()> {
    let mut run = match &a.out {
        Some(out) => Some(Run::start("verify", argv, out)?),
        None => None,
    };
    let constraint = match (&a.prompt, &a.constraint) {
        (_, Some(c)) => parse_constraint(c)?,
        (Some(id), None) => {
            let prompts = corpus::load_prompts(a.input.join(corpus::PROMPTS_FILE))?;
            if let Some(r) = run.as_mut() {
                r.input(&a.input.join(corpus::PROMPTS_FILE))?;
            }
            let prompt = prompts
                .into_iter()
                .find(|p| &p.prompt_id == id)
                .ok_or_else(|| Error::data(format!("no prompt `{id}`")))?;
            prompt
                .constraint
                .ok_or_else(|| Error::data(format!("prompt `{id}` has no constraint")))?
        }
        (None, None) => return Err(Error::Invariant("clap group admitted no target".into())),
    };
    let mut text = String::new();
    if let Some(values) = &a.values {
        let values = parse_values(Path::new("--values"), values)?;
        let _ = writeln!(text, "{}", verify::check_solution(&values, &constraint)?);
    }
    if a.enumerate {
        let solutions = verify::enumerate_solutions(&constraint)?;
        let _ = writeln!(text, "{} solutions", solutions.len());
        for s in solutions {
            let row: Vec<String> = s.iter().map(u64::to_string).collect();
            let _ = writeln!(text, "{}", row.join(","));
        }
    }
    print!("{text}");
    match run {
        Some(mut r) => {
            r.write("verify.txt", &text)?;
            r.finish()
        }
        None => Ok(()),
    }
}

fn audit(a: AuditArgs, argv: &[String]) -> Result<()> {
    let mut run = Run::start("audit", argv, &a.out)?;
    let corpus = Corpus::load(&a.input)?;
    run.input(&a.input)?;
    let split = match &a.split {
        Some(p) => {
            run.input(p)?;
            Some(SplitAssignment::load(p)?)
        }
        None => None,
    };
    let records: Vec<&corpus::ResponseRecord> = match (&split, &a.partition) {
        (Some(s), Some(p)) => corpus.records_in(s, parse_partition(p)?).collect(),
        _ => corpus.records().iter().collect(),
    };
    let classes = corpus::class_distribution(&corpus, records.iter().copied());
    let rows = corpus::audit_missing_values(&corpus, records.iter().copied());
    run.write("classes.csv", &corpus::render_class_distribution_csv(&classes))?;
    let audit_csv = corpus::render_audit_csv(&rows);
    run.write("audit.csv", &audit_csv)?;
    print!("{}", corpus::render_class_distribution_text(&classes));
    let (n, m) = rows.iter().fold((0, 0), |(n, m), r| (n + r.n_other, m + r.missing));
    let bound = if n > 0 { format!("{:.3}", (n - m) as f64 / n as f64) } else { "-".into() };
    println!("other-class values {n}, missing {m}, bound {bound}");
    run.finish()
}
