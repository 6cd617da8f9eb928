//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line to the
//! real stdout (bypassing the test harness capture) and then asserts.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use valueid::corpus::{self, Corpus, LabelTriple, Partition, Prompt, ResponseRecord, SlotSpec, ValueLabel};
use valueid::ensemble::{self, DevCase};
use valueid::identify::{self, TokenScores};
use valueid::manifest::RunManifest;
use valueid::metrics::cohen_kappa;
use valueid::numlex::{self, MaskedText};
use valueid::pipeline::{self, PipelineOptions};
use valueid::syngen::{self, GeneratorConfig, SlotCounts};
use valueid::verify::{self, Diagnosis, LinearConstraint};
use valueid::Rational;

fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion:>2} {} {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {criterion} ({name}) failed: {detail}");
}

fn r(n: i64) -> Rational {
    Rational::integer(n)
}

fn candy() -> LinearConstraint {
    LinearConstraint::new(vec![r(7), r(3), r(5)], r(64)).unwrap()
}

#[test]
fn criterion_01_solution_count() {
    // Oracle: plain nested loops over each count's feasible range.
    let mut oracle = Vec::new();
    for a in 0..=64 / 7 {
        for b in 0..=64 / 3 {
            for c in 0..=64 / 5 {
                if 7 * a + 3 * b + 5 * c == 64 {
                    oracle.push(vec![a as u64, b as u64, c as u64]);
                }
            }
        }
    }
    assert_eq!(oracle.len(), 24);

    let t = Instant::now();
    let found = verify::enumerate_solutions(&candy()).unwrap();
    let elapsed = t.elapsed();
    let all_valid = found.iter().all(|s| {
        let v: Vec<Rational> = s.iter().map(|&x| r(x as i64)).collect();
        verify::check_solution(&v, &candy()).unwrap() == Diagnosis::Valid
    });
    let same: BTreeSet<_> = found.iter().cloned().collect();
    let pass = found.len() == 24 && all_valid && same == oracle.into_iter().collect() && elapsed < Duration::from_secs(1);
    verdict(
        1,
        "solution count",
        pass,
        &format!("{} solutions, all valid: {all_valid}, {elapsed:?}", found.len()),
    );
}

#[test]
fn criterion_02_over_by_twelve() {
    let d = verify::check_solution(&[r(9), r(1), r(2)], &candy()).unwrap();
    let spent = candy().evaluate(&[r(9), r(1), r(2)]).unwrap();
    let pass = d == Diagnosis::Over(r(12)) && spent == r(63 + 3 + 10) && d.to_string() == "Over(12)";
    verdict(2, "invalid solution diagnosis", pass, &format!("{d}, spent {spent}"));
}

fn one_slot_prompt() -> Prompt {
    Prompt {
        prompt_id: "p1".into(),
        question: "How many bags of chocolates did you buy?".into(),
        slots: vec![SlotSpec {
            slot_id: "s1".into(),
            name: "bags of chocolates".into(),
            question: "How many bags of chocolates?".into(),
        }],
        constraint: None,
    }
}

fn record(i: usize, text: &str, label: ValueLabel) -> ResponseRecord {
    ResponseRecord {
        response_id: format!("r{i:06}"),
        prompt_id: "p1".into(),
        text: text.into(),
        labels: vec![LabelTriple {
            rater1: label,
            rater2: label,
            resolved: label,
        }],
    }
}

#[test]
fn criterion_03_missing_value_bound() {
    let mut records = Vec::new();
    for i in 0..82 {
        let v = 2 + (i % 7) as i64;
        let text = if i < 69 {
            format!("I would buy {v} bags and keep the rest")
        } else {
            "I would buy a lot of bags".to_string()
        };
        records.push(record(i, &text, ValueLabel::Stated(r(v))));
    }
    // Zero and One cases never enter the bound.
    records.push(record(82, "none at all", ValueLabel::Absent));
    records.push(record(83, "just one bag", ValueLabel::Stated(r(1))));
    let corpus = Corpus::new(vec![one_slot_prompt()], records).unwrap();
    let rows = corpus::audit_missing_values(&corpus, corpus.records());
    let row = &rows[0];
    let bound = row.bound().unwrap();
    let pass = rows.len() == 1 && row.n_other == 82 && row.missing == 13 && (bound - 0.8415).abs() <= 0.0005;
    verdict(
        3,
        "audit bound",
        pass,
        &format!("N={} M={} bound={bound:.4}", row.n_other, row.missing),
    );
}

fn labels_from_matrix(m: &[&[u32]]) -> (Vec<usize>, Vec<usize>) {
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, row) in m.iter().enumerate() {
        for (j, &n) in row.iter().enumerate() {
            for _ in 0..n {
                a.push(i);
                b.push(j);
            }
        }
    }
    (a, b)
}

#[test]
fn criterion_04_kappa_oracle() {
    // (confusion matrix, kappa as an exact fraction); `None` marks p_e = 1.
    let cases: Vec<(Vec<&[u32]>, Option<(f64, f64)>)> = vec![
        (vec![&[20, 5], &[10, 15]], Some((2.0, 5.0))),
        (vec![&[25, 25], &[25, 25]], Some((0.0, 1.0))),
        (vec![&[50, 0], &[0, 50]], Some((1.0, 1.0))),
        (vec![&[45, 15], &[25, 15]], Some((3.0, 23.0))),
        (vec![&[10, 0], &[0, 0]], None),
        (vec![&[0, 7], &[3, 0]], Some((-21.0, 29.0))),
        (vec![&[1, 2], &[3, 4]], Some((-2.0, 23.0))),
        (vec![&[40, 9], &[6, 45]], Some((291.0, 416.0))),
        (vec![&[88, 10], &[14, 38]], Some((89.0, 139.0))),
        (vec![&[5, 5], &[5, 5]], Some((0.0, 1.0))),
        (vec![&[99, 1], &[0, 0]], Some((0.0, 1.0))),
        (vec![&[30, 0, 0], &[0, 30, 0], &[0, 0, 40]], Some((1.0, 1.0))),
        (vec![&[22, 7, 9], &[4, 13, 3], &[4, 10, 28]], Some((144.0, 329.0))),
        (vec![&[10, 10, 10], &[10, 10, 10], &[10, 10, 10]], Some((0.0, 1.0))),
        (vec![&[0, 0, 0], &[0, 17, 0], &[0, 0, 0]], None),
        (vec![&[8, 1, 1], &[2, 6, 2], &[0, 3, 7]], Some((11.0, 20.0))),
        (vec![&[60, 2, 3], &[1, 5, 0], &[4, 0, 25]], Some((3921.0, 4921.0))),
        (vec![&[1, 0, 0, 0], &[0, 2, 0, 0], &[0, 0, 3, 0], &[0, 0, 0, 4]], Some((1.0, 1.0))),
        (vec![&[5, 1, 0, 2], &[1, 6, 1, 0], &[0, 2, 7, 1], &[1, 0, 1, 8]], Some((76.0, 121.0))),
        (vec![&[3, 0], &[0, 97]], Some((1.0, 1.0))),
        (vec![&[12, 3, 0], &[2, 0, 4], &[1, 1, 9]], Some((35.0, 79.0))),
        (vec![&[0, 10], &[10, 0]], Some((-1.0, 1.0))),
    ];
    let mut failures = Vec::new();
    for (k, (m, expected)) in cases.iter().enumerate() {
        let (a, b) = labels_from_matrix(m);
        let got = cohen_kappa(&a, &b).unwrap();
        let ok = match expected {
            Some((num, den)) => {
                !got.degenerate && (got.kappa - num / den).abs() <= 1e-12 && got.render(true) == got.render(false)
            }
            None => got.degenerate && got.kappa == 1.0 && got.render(false) == "1.000" && got.render(true) == "-",
        };
        if !ok {
            failures.push(format!("matrix {k}: got {}", got.kappa));
        }
    }
    let pass = cases.len() >= 20 && failures.is_empty();
    verdict(
        4,
        "kappa oracle",
        pass,
        &format!("{} matrices, failures: {failures:?}", cases.len()),
    );
}

const LLAMA_RESPONSE: &str = "One possible way to spend a total of $64 using a combination of chocolates, \
lollipops, and gum sticks would be to purchase 9 bags of chocolates ($7 × 9 = $63), 1 bag of lollipops ($3), \
and 2 bags of gum sticks ($5 × 2 = $10). This combination would total $64.";

#[test]
fn criterion_05_masking_fidelity() {
    let masked = numlex::mask_text(LLAMA_RESPONSE);
    let expected: Vec<Rational> = [64, 9, 7, 9, 63, 1, 3, 2, 5, 2, 10, 64].map(r).to_vec();
    let placeholders = masked.template().matches("<mask>").count();
    let restored = numlex::unmask(&masked).unwrap();
    let round_trip = numlex::number_sequence(&restored) == expected;
    let pass = placeholders == 12 && masked.values() == expected.as_slice() && round_trip;
    let values: Vec<String> = masked.values().iter().map(|v| v.to_string()).collect();
    verdict(
        5,
        "masking fidelity",
        pass,
        &format!("{placeholders} placeholders [{}], round trip {round_trip}", values.join(",")),
    );
}

#[test]
fn criterion_06_written_number_round_trip() {
    let t = Instant::now();
    let failures: Vec<u32> = (0..=10_000u32)
        .filter(|&n| {
            let words = syngen::render_words(n).unwrap();
            numlex::parse_written(&words) != Some(r(n as i64))
        })
        .collect();
    let elapsed = t.elapsed();
    let pass = failures.is_empty() && elapsed < Duration::from_secs(5);
    verdict(
        6,
        "written number round trip",
        pass,
        &format!("{} failures over 0..=10000, {elapsed:?}", failures.len()),
    );
}

fn random_dev_set(rng: &mut ChaCha8Rng, m: usize) -> Vec<DevCase> {
    let n = rng.gen_range(15..60);
    (0..n)
        .map(|_| {
            let k = rng.gen_range(1..7);
            let values: Vec<Rational> = (0..k).map(|_| r(rng.gen_range(0..8))).collect();
            let gold = if rng.gen_bool(0.9) { values[rng.gen_range(0..k)] } else { r(99) };
            let member_scores = (0..m)
                .map(|_| TokenScores::new((0..k).map(|_| rng.gen::<f64>()).collect()).unwrap())
                .collect();
            DevCase {
                member_scores,
                values,
                gold,
            }
        })
        .collect()
}

/// Accuracy of the blended argmax (first maximum wins), computed directly.
fn oracle_accuracy(cases: &[DevCase], alpha: &[f64]) -> f64 {
    let hits = cases
        .iter()
        .filter(|c| {
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for i in 0..c.values.len() {
                let s: f64 = alpha.iter().zip(&c.member_scores).map(|(a, t)| a * t.as_slice()[i]).sum();
                if s > best_score {
                    best_score = s;
                    best = i;
                }
            }
            c.values[best] == c.gold
        })
        .count();
    hits as f64 / cases.len() as f64
}

fn grid_points(m: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    match m {
        2 => {
            for i in 0..=100 {
                out.push(vec![i as f64 / 100.0, (100 - i) as f64 / 100.0]);
            }
        }
        3 => {
            for i in 0..=100 {
                for j in 0..=100 - i {
                    out.push(vec![i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0]);
                }
            }
        }
        _ => unreachable!(),
    }
    out
}

#[test]
fn criterion_07_ensemble_dominance() {
    let mut rng = ChaCha8Rng::seed_from_u64(20231011);
    let mut summary = Vec::new();
    let mut pass = true;
    for m in [2usize, 3] {
        let grid = grid_points(m);
        let (mut dominated, mut grid_ok) = (0, 0);
        for _ in 0..100 {
            let cases = random_dev_set(&mut rng, m);
            let fit = ensemble::fit_slot(&cases, m).unwrap();
            let fitted = fit.dev_accuracy.unwrap();
            let recomputed = oracle_accuracy(&cases, fit.weights.as_slice());
            let best_member = (0..m)
                .map(|k| {
                    let mut v = vec![0.0; m];
                    v[k] = 1.0;
                    oracle_accuracy(&cases, &v)
                })
                .fold(0.0, f64::max);
            if (recomputed - fitted).abs() < 1e-12 && fitted >= best_member - 1e-12 {
                dominated += 1;
            }
            let best_grid = grid.iter().map(|a| oracle_accuracy(&cases, a)).fold(0.0, f64::max);
            if best_grid <= fitted + 1e-12 {
                grid_ok += 1;
            }
        }
        pass &= dominated == 100 && grid_ok == 100;
        summary.push(format!("m={m}: dominance {dominated}/100, grid never better {grid_ok}/100"));
    }
    verdict(7, "ensemble dominance", pass, &summary.join("; "));
}

#[test]
fn criterion_08_scale_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut changed = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(1..12);
        let values: Vec<Rational> = (0..k).map(|i| r(i as i64)).collect();
        let template = vec!["<mask>"; k].join(" and ");
        let masked = MaskedText::from_template(template, values).unwrap();
        let scores: Vec<f64> = (0..k).map(|_| rng.gen::<f64>()).collect();
        let c = 10f64.powf(rng.gen_range(-6.0..6.0));
        let scaled: Vec<f64> = scores.iter().map(|s| s * c).collect();
        let a = identify::select_value(&scores, &masked).unwrap().unwrap();
        let b = identify::select_value(&scaled, &masked).unwrap().unwrap();
        if a.placeholder_index != b.placeholder_index || a.chosen != b.chosen {
            changed += 1;
        }
    }
    verdict(8, "scale invariance", changed == 0, &format!("{changed}/1000 choices changed"));
}

const TABLE_ONE_MIX: [[f64; 3]; 7] = [
    [0.872, 0.026, 0.102],
    [0.594, 0.046, 0.360],
    [0.520, 0.000, 0.480],
    [0.249, 0.002, 0.749],
    [0.186, 0.005, 0.809],
    [0.653, 0.178, 0.168],
    [0.651, 0.022, 0.328],
];

fn desk_config(seed: u64, disagreement: f64) -> GeneratorConfig {
    GeneratorConfig {
        seed,
        prompts: 7,
        responses_per_prompt: 4000,
        slots: SlotCounts::PerPrompt(vec![9, 3, 1, 1, 1, 8, 12]),
        prompt_class_mix: TABLE_ONE_MIX.iter().enumerate().map(|(i, m)| (i + 1, *m)).collect(),
        rater_disagreement: disagreement,
        misspelling: 0.0,
        number_misspelling: 0.0,
        omission: 0.0,
        ..GeneratorConfig::default()
    }
}

#[test]
fn criterion_09_desk_scale_run() {
    let t = Instant::now();
    let corpus = syngen::generate_corpus(&desk_config(2024, 0.0)).unwrap().corpus().unwrap();
    let split = corpus::split_corpus(&corpus, 7).unwrap();
    let run = pipeline::run_baseline(&corpus, &split, &PipelineOptions::default()).unwrap();
    let total = run.report.total();
    let kappas: Vec<f64> = total.engine_kappas.iter().map(|k| k.kappa).collect();
    let p = total.ensemble_p.value().unwrap_or(0.0);
    let engine_p = total.engine_p.value().unwrap_or(0.0);

    let noisy = syngen::generate_corpus(&desk_config(2025, 0.1)).unwrap().corpus().unwrap();
    let noisy_split = corpus::split_corpus(&noisy, 7).unwrap();
    let noisy_run = pipeline::run_baseline(&noisy, &noisy_split, &PipelineOptions::default()).unwrap();
    let irr_p = noisy_run.report.total().irr_p.value().unwrap_or(0.0);
    let elapsed = t.elapsed();

    let pass = kappas.iter().all(|&k| k >= 0.95)
        && p >= 0.95
        && engine_p >= 0.95
        && (irr_p - 0.9).abs() <= 0.02
        && elapsed < Duration::from_secs(600);
    verdict(
        9,
        "desk-scale pipeline",
        pass,
        &format!(
            "{} responses; test k0={:.3} k1={:.3} kv={:.3}, ensemble p={p:.3}, engine p={engine_p:.3}; \
             IRR p at disagreement 0.1 = {irr_p:.3}; {elapsed:.1?}",
            corpus.len(),
            kappas[0],
            kappas[1],
            kappas[2]
        ),
    );
}

fn flat_corpus(n: usize) -> Corpus {
    let records = (0..n)
        .map(|i| record(i, &format!("I would buy {} bags", i % 9), ValueLabel::Stated(r((i % 9) as i64))))
        .collect();
    Corpus::new(vec![one_slot_prompt()], records).unwrap()
}

#[test]
fn criterion_10_split_exactness() {
    let mut pass = true;
    let mut detail = Vec::new();
    for n in [4000usize, 8000, 40000] {
        let corpus = flat_corpus(n);
        let a = corpus::split_corpus(&corpus, 42).unwrap();
        let b = corpus::split_corpus(&corpus, 42).unwrap();
        let c = corpus::split_corpus(&corpus, 43).unwrap();
        let sizes = a.sizes();
        let mut seen = BTreeSet::new();
        let mut disjoint = true;
        for part in [Partition::Train, Partition::Dev, Partition::Test] {
            for id in a.ids(part) {
                disjoint &= seen.insert(id.to_string());
            }
        }
        let covers = seen.len() == n && corpus.records().iter().all(|r| seen.contains(&r.response_id));
        let exact = sizes == (n * 70 / 100, n * 15 / 100, n * 15 / 100);
        let deterministic = a.render() == b.render() && a.render() != c.render();
        pass &= exact && disjoint && covers && deterministic;
        detail.push(format!("N={n} {sizes:?}"));
    }
    verdict(10, "split exactness", pass, &detail.join(", "));
}

fn bin(args: &[String]) {
    let out = Command::new(env!("CARGO_BIN_EXE_valueid")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn args(parts: &[&dyn AsRef<std::ffi::OsStr>]) -> Vec<String> {
    parts.iter().map(|p| p.as_ref().to_string_lossy().into_owned()).collect()
}

#[test]
fn criterion_11_replay_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| -> PathBuf { dir.path().join(name) };
    let cfg = d("gen.cfg");
    fs::write(&cfg, "prompts = 3\nresponses = 500\nslots = 4,1,6\nrater_disagreement = 0.1\n").unwrap();
    let corpus = d("corpus");
    let split = d("split").join("split.tsv");
    let ctx = d("ctx").join("context.identifier.json");
    let prox = d("prox").join("proximity.identifier.json");
    let cls = d("cls").join("classifier.json");
    let weights = d("ens").join("weights.csv");
    let preds = d("eval").join("predictions.csv");
    let data = |cmd: &str| args(&[&cmd, &"--in", &corpus, &"--split", &split]);
    let with = |mut v: Vec<String>, rest: &[&dyn AsRef<std::ffi::OsStr>]| {
        v.extend(args(rest));
        v
    };

    bin(&args(&[&"gen", &"--config", &cfg, &"--seed", &"5", &"--out", &corpus]));
    bin(&args(&[&"split", &"--in", &corpus, &"--seed-split", &"9", &"--out", &d("split")]));
    bin(&with(data("train-classifier"), &[&"--hash-bits", &"16", &"--out", &d("cls")]));
    bin(&with(data("train-identifier"), &[&"--model", &"context", &"--hash-bits", &"16", &"--out", &d("ctx")]));
    bin(&with(data("train-identifier"), &[&"--model", &"proximity", &"--hash-bits", &"16", &"--out", &d("prox")]));
    let members: [&dyn AsRef<std::ffi::OsStr>; 6] = [&"--identifier", &ctx, &"--identifier", &prox, &"--workers", &"2"];
    let mut fit = data("fit-ensemble");
    fit.extend(args(&members));
    bin(&with(fit, &[&"--out", &d("ens")]));
    let mut eval = data("evaluate");
    eval.extend(args(&members));
    bin(&with(eval, &[&"--classifier", &cls, &"--weights", &weights, &"--out", &d("eval")]));
    bin(&with(data("report"), &[&"--predictions", &preds, &"--out", &d("rep")]));

    let stages = [
        ("gen", "corpus"),
        ("split", "split"),
        ("train-classifier", "cls"),
        ("train-identifier", "ctx"),
        ("train-identifier", "prox"),
        ("fit-ensemble", "ens"),
        ("evaluate", "eval"),
        ("report", "rep"),
    ];
    let mut mismatches = Vec::new();
    let mut replays = 0;
    for (cmd, sub) in stages {
        let original = RunManifest::load(RunManifest::path_in(&d(sub), cmd)).unwrap();
        let worker_counts: Vec<Option<usize>> = if original.workers.is_some() {
            vec![Some(1), Some(4)]
        } else {
            vec![None]
        };
        for w in worker_counts {
            let out = d(&format!("replay-{sub}-{}", w.unwrap_or(0)));
            bin(&original.replay_argv(&out, w));
            replays += 1;
            let again = RunManifest::load(RunManifest::path_in(&out, cmd)).unwrap();
            if again.output_digests() != original.output_digests() || again.inputs != original.inputs {
                mismatches.push(format!("{cmd} ({sub}) workers {w:?}"));
            }
        }
    }
    // Chain the four-worker predictions into a fresh report as well.
    let chained = d("chained");
    bin(&with(data("report"), &[&"--predictions", &d("replay-eval-4").join("predictions.csv"), &"--out", &chained]));
    let same_report = fs::read(chained.join("prompts.csv")).unwrap() == fs::read(d("rep").join("prompts.csv")).unwrap()
        && fs::read(chained.join("slots.csv")).unwrap() == fs::read(d("rep").join("slots.csv")).unwrap();
    let pass = mismatches.is_empty() && same_report;
    verdict(
        11,
        "replay determinism",
        pass,
        &format!("{replays} stage replays, mismatches {mismatches:?}, chained report identical: {same_report}"),
    );
}
