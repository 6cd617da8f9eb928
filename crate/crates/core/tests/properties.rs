use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use valueid::classify::ClassDistribution;
use valueid::corpus::{self, ClassLabel, Corpus, LabelTriple, Partition, Prompt, ResponseRecord, SlotSpec, ValueLabel};
use valueid::features::TrainOptions;
use valueid::identify;
use valueid::metrics::{self, EngineOutput, EngineOutputs};
use valueid::numlex;
use valueid::pipeline::{self, Masks, Predictions};
use valueid::syngen::{self, GeneratorConfig, SlotCounts};
use valueid::Rational;

const FRAGMENTS: &[&str] = &[
    "nine", "twenty", "seven", "hundred", "thousand", "and", "a", "one", "point", "five", "sixty-four",
    "3/4", "6/8", "1,000", "$5", "12.5", "-3", "0", "bags", "of", "candy", "x", "=", "(", ")", ",", ".",
    "×", "ninty", "£4", "1/0", "[64]",
];

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::sample::select(FRAGMENTS), prop::bool::ANY), 0..24).prop_map(|parts| {
        let mut s = String::new();
        for (frag, glue) in parts {
            if !s.is_empty() && !glue {
                s.push(' ');
            }
            s.push_str(frag);
        }
        s
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn scanned_tokens_are_ordered_and_disjoint(t in text()) {
        let a = numlex::scan_numbers(&t);
        for w in a.tokens.windows(2) {
            prop_assert!(w[0].span.end <= w[1].span.start, "{t:?}: {:?}", a.tokens);
        }
        for tok in &a.tokens {
            prop_assert_eq!(&t[tok.span.start..tok.span.end], tok.surface.as_str());
        }
    }

    #[test]
    fn scaled_fractions_reduce(a in 0i64..500, b in 1i64..500, k in 1i64..20) {
        let t = format!("I got {}/{} of it", k * a, k * b);
        prop_assert_eq!(numlex::number_sequence(&t), vec![Rational::new(a, b).unwrap()]);
    }

    #[test]
    fn masking_preserves_values(t in text()) {
        let scanned = numlex::scan_numbers(&t);
        let masked = numlex::mask_values(&scanned);
        prop_assert_eq!(masked.template().matches("<mask>").count(), masked.len());
        let values = scanned.values();
        prop_assert_eq!(masked.values(), values.as_slice());
        let back = numlex::unmask(&masked).unwrap();
        prop_assert_eq!(numlex::number_sequence(&back), scanned.values());
    }

    #[test]
    fn annotate_is_idempotent(t in text()) {
        let once = numlex::annotate(&numlex::scan_numbers(&t));
        let twice = numlex::annotate(&numlex::scan_numbers(&once));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn render_words_round_trips_everywhere(n in 0u32..=999_999) {
        let words = syngen::render_words(n).unwrap();
        prop_assert_eq!(numlex::parse_written(&words), Some(Rational::integer(n as i64)));
    }

    #[test]
    fn single_placeholder_choice_is_forced(v in 0i64..40, gold in 0i64..40, s in 0.0f64..1.0) {
        let masked = numlex::mask_text(&format!("I would buy {v} of them"));
        let choice = identify::select_value(&[s], &masked).unwrap().unwrap();
        prop_assert_eq!(choice.chosen, Rational::integer(v));
        let bound_hit = corpus::value_present(masked.values(), &Rational::integer(gold));
        prop_assert_eq!(choice.chosen == Rational::integer(gold), bound_hit);
    }
}

fn single_slot_corpus(n: usize) -> Corpus {
    let prompt = Prompt {
        prompt_id: "p1".into(),
        question: "How many?".into(),
        slots: vec![SlotSpec {
            slot_id: "s1".into(),
            name: "bags".into(),
            question: "How many bags?".into(),
        }],
        constraint: None,
    };
    let records = (0..n)
        .map(|i| {
            let l = ValueLabel::Stated(Rational::integer((i % 5) as i64));
            ResponseRecord {
                response_id: format!("id-{i}"),
                prompt_id: "p1".into(),
                text: format!("{} bags", i % 5),
                labels: vec![LabelTriple {
                    rater1: l,
                    rater2: l,
                    resolved: l,
                }],
            }
        })
        .collect();
    Corpus::new(vec![prompt], records).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn splits_are_exact_disjoint_and_seeded(n in 1usize..1500, seed in 0u64..1000) {
        let c = single_slot_corpus(n);
        let a = corpus::split_corpus(&c, seed).unwrap();
        let (tr, dv, te) = a.sizes();
        prop_assert_eq!((tr, dv, te), corpus::split_sizes(n));
        prop_assert_eq!(tr + dv + te, n);
        let mut seen = BTreeSet::new();
        for p in [Partition::Train, Partition::Dev, Partition::Test] {
            for id in a.ids(p) {
                prop_assert!(seen.insert(id.to_string()));
            }
        }
        prop_assert_eq!(seen.len(), n);
        prop_assert_eq!(corpus::split_corpus(&c, seed).unwrap(), a);
    }

    #[test]
    fn generated_corpora_audit_and_round_trip(seed in 0u64..500, omission in 0.0f64..0.3, slots in 1usize..5) {
        let cfg = GeneratorConfig {
            seed,
            prompts: 2,
            responses_per_prompt: 60,
            slots: SlotCounts::PerPrompt(vec![slots, 1]),
            omission,
            rater_disagreement: 0.1,
            ..GeneratorConfig::default()
        };
        let g = syngen::generate_corpus(&cfg).unwrap();
        let c = g.corpus().unwrap();
        let dir = tempfile::tempdir().unwrap();
        c.save(dir.path()).unwrap();
        let back = Corpus::load(dir.path()).unwrap();
        prop_assert_eq!(back.render_records().unwrap(), c.render_records().unwrap());

        let rows = corpus::audit_missing_values(&c, c.records());
        let missing: usize = rows.iter().map(|r| r.missing).sum();
        prop_assert_eq!(missing, g.expected_missing());
        for r in &rows {
            if let Some(b) = r.bound() {
                prop_assert!((0.0..=1.0).contains(&b));
                prop_assert_eq!(b == 1.0, r.missing == 0);
            }
        }
        for row in corpus::class_distribution(&c, c.records()) {
            let rounded: f64 = row.percentages().iter().map(|p| (p * 10.0).round() / 10.0).sum();
            prop_assert!((rounded - 100.0).abs() <= 0.1 + 1e-9, "{rounded}");
        }
    }

    #[test]
    fn pooled_kappas_equal_kappas_of_pooled_labels(seed in 0u64..500, flip in 0.0f64..0.4) {
        let cfg = GeneratorConfig {
            seed,
            prompts: 3,
            responses_per_prompt: 80,
            slots: SlotCounts::PerPrompt(vec![2, 1, 3]),
            rater_disagreement: 0.2,
            ..GeneratorConfig::default()
        };
        let c = syngen::generate_corpus(&cfg).unwrap().corpus().unwrap();
        let split = corpus::split_corpus(&c, seed).unwrap();
        let mut outputs: EngineOutputs = BTreeMap::new();
        let (mut r1, mut r2, mut gold, mut engine) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (k, r) in c.records_in(&split, Partition::Test).enumerate() {
            for (s, l) in c.prompt_of(r).slots.iter().zip(&r.labels) {
                let mut class = l.resolved.class();
                if (k as f64 * 0.618).fract() < flip {
                    class = ClassLabel::from_index((class.index() + 1) % 3).unwrap();
                }
                r1.push(l.rater1.class());
                r2.push(l.rater2.class());
                gold.push(l.resolved.class());
                engine.push(class);
                outputs.insert(
                    (r.response_id.clone(), s.slot_id.clone()),
                    EngineOutput { class, member_choices: BTreeMap::new(), ensemble_choice: l.resolved.value() },
                );
            }
        }
        let report = metrics::build_report(&c, &split, Partition::Test, &[], &outputs).unwrap();
        let total = report.total();
        let irr = metrics::one_vs_rest_kappas(&r1, &r2).unwrap();
        let eng = metrics::one_vs_rest_kappas(&gold, &engine).unwrap();
        for i in 0..3 {
            prop_assert_eq!(total.irr_kappas[i].kappa, irr[i].kappa);
            prop_assert_eq!(total.engine_kappas[i].kappa, eng[i].kappa);
        }
    }
}

fn small_generated() -> Corpus {
    let cfg = GeneratorConfig {
        seed: 99,
        prompts: 2,
        responses_per_prompt: 150,
        slots: SlotCounts::PerPrompt(vec![3, 1]),
        ..GeneratorConfig::default()
    };
    syngen::generate_corpus(&cfg).unwrap().corpus().unwrap()
}

#[test]
fn training_and_fitting_are_reproducible() {
    let c = small_generated();
    let split = corpus::split_corpus(&c, 2).unwrap();
    let mut opts = TrainOptions::new(5);
    opts.hash_bits = 14;
    let dir = tempfile::tempdir().unwrap();
    let save = |name: &str, model: &valueid::classify::ClassifierModel| {
        let p = dir.path().join(name);
        model.save(&p).unwrap();
        std::fs::read(p).unwrap()
    };
    let a = pipeline::train_classifier(&c, &split, &opts).unwrap();
    let b = pipeline::train_classifier(&c, &split, &opts).unwrap();
    assert_eq!(save("a.json", &a), save("b.json", &b));

    let masks = Masks::build(&c);
    let ids: Vec<_> = [identify::IdentifierConfig::Context, identify::IdentifierConfig::Proximity]
        .into_iter()
        .map(|cfg| {
            pipeline::train_identifier(&c, &masks, &split, &opts, cfg, cfg.default_model_id(), Default::default())
                .unwrap()
        })
        .collect();
    let scorers: Vec<&dyn identify::TokenScorer> = ids.iter().map(|m| m as &dyn identify::TokenScorer).collect();
    let members: Vec<String> = ids.iter().map(|m| m.meta().model_id.clone()).collect();
    let table = pipeline::score_partition(&c, &masks, &split, Partition::Dev, &scorers).unwrap();
    let f1 = pipeline::fit_ensemble(&c, &masks, &split, &table, &members, valueid::ensemble::FitMode::PerSlot).unwrap();
    let f2 = pipeline::fit_ensemble(&c, &masks, &split, &table, &members, valueid::ensemble::FitMode::PerSlot).unwrap();
    assert_eq!(f1.render(), f2.render());

    // Report numbers come only from the persisted predictions.
    let test_table = pipeline::score_partition(&c, &masks, &split, Partition::Test, &scorers).unwrap();
    let preds = pipeline::evaluate(&c, &masks, &split, Partition::Test, &a, &test_table, &f1).unwrap();
    let path = dir.path().join("predictions.csv");
    preds.save(&path).unwrap();
    let loaded = Predictions::load(&path).unwrap();
    let direct = metrics::build_report(&c, &split, Partition::Test, &members, &preds.outputs()).unwrap();
    let persisted = metrics::build_report(&c, &split, Partition::Test, &members, &loaded.outputs()).unwrap();
    assert_eq!(direct.prompts_csv(false), persisted.prompts_csv(false));
    assert_eq!(direct.slots_csv(), persisted.slots_csv());
    for row in &loaded.rows {
        let d: ClassDistribution = row.distribution;
        assert!((d.as_array().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(d.argmax(), row.output.class);
    }
}
