use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use valueid_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn last_error() -> String {
    let p = valueid_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn mask_and_read_back() {
    let text = c("I bought 9 bags for $7 each, that is $63, and three-fourths of a pack.");
    let mut m: *mut ValueidMasked = ptr::null_mut();
    unsafe {
        assert_eq!(valueid_mask_text(text.as_ptr(), &mut m), ValueidStatus::Ok);
        let n = valueid_masked_len(m);
        let mut values = Vec::new();
        for i in 0..n {
            let (mut num, mut den) = (0, 0);
            assert_eq!(valueid_masked_value(m, i, &mut num, &mut den), ValueidStatus::Ok);
            values.push((num, den));
        }
        assert_eq!(&values[..3], &[(9, 1), (7, 1), (63, 1)]);

        let (mut num, mut den) = (0, 0);
        assert_eq!(valueid_masked_value(m, n, &mut num, &mut den), ValueidStatus::OutOfRange);
        assert!(last_error().contains(&format!("placeholder {n}")));

        let mut s = ptr::null_mut();
        assert_eq!(valueid_masked_template(m, &mut s), ValueidStatus::Ok);
        let template = CStr::from_ptr(s).to_str().unwrap().to_string();
        valueid_string_free(s);
        assert!(template.starts_with("I bought <mask> bags for $<mask> each"));

        assert_eq!(valueid_masked_unmask(m, &mut s), ValueidStatus::Ok);
        assert!(CStr::from_ptr(s).to_str().unwrap().contains("63"));
        valueid_string_free(s);
        valueid_masked_free(m);
        valueid_masked_free(ptr::null_mut());
        assert_eq!(valueid_masked_len(ptr::null()), 0);
    }
}

#[test]
fn null_and_utf8_arguments() {
    let mut m: *mut ValueidMasked = ptr::null_mut();
    unsafe {
        assert_eq!(valueid_mask_text(ptr::null(), &mut m), ValueidStatus::NullArgument);
        assert!(last_error().contains("text"));
        let bad = [0xffu8, 0xfe, 0];
        assert_eq!(valueid_mask_text(bad.as_ptr().cast(), &mut m), ValueidStatus::InvalidUtf8);
        let t = c("1");
        assert_eq!(valueid_mask_text(t.as_ptr(), ptr::null_mut()), ValueidStatus::NullArgument);
    }
}

#[test]
fn written_numbers() {
    let (mut num, mut den) = (0, 0);
    unsafe {
        assert_eq!(valueid_parse_written(c("sixty four").as_ptr(), &mut num, &mut den), ValueidStatus::Ok);
        assert_eq!((num, den), (64, 1));
        assert_eq!(
            valueid_parse_written(c("one hundred and five").as_ptr(), &mut num, &mut den),
            ValueidStatus::Ok
        );
        assert_eq!((num, den), (105, 1));
        assert_eq!(valueid_parse_written(c("banana").as_ptr(), &mut num, &mut den), ValueidStatus::Data);
    }
}

#[test]
fn constraint_checks() {
    let coefs = [7i64, 3, 5];
    let mut h: *mut ValueidConstraint = ptr::null_mut();
    unsafe {
        assert_eq!(valueid_constraint_new(coefs.as_ptr(), 3, 64, &mut h), ValueidStatus::Ok);
        let mut d = std::mem::zeroed::<ValueidDiagnosis>();
        let num = [9i64, 1, 2];
        let den = [1i64, 1, 1];
        assert_eq!(valueid_constraint_check(h, num.as_ptr(), den.as_ptr(), 3, &mut d), ValueidStatus::Ok);
        assert_eq!(d.kind, ValueidDiagnosisKind::Over);
        assert_eq!((d.amount_num, d.amount_den), (12, 1));

        let num = [2i64, 5, 7];
        assert_eq!(valueid_constraint_check(h, num.as_ptr(), den.as_ptr(), 3, &mut d), ValueidStatus::Ok);
        assert_eq!(d.kind, ValueidDiagnosisKind::Valid);

        let num = [1i64, 3, 2];
        let halves = [1i64, 2, 1];
        assert_eq!(valueid_constraint_check(h, num.as_ptr(), halves.as_ptr(), 3, &mut d), ValueidStatus::Ok);
        assert_eq!((d.kind, d.first_slot), (ValueidDiagnosisKind::NonInteger, 1));

        let zero = [1i64, 0, 1];
        assert_eq!(valueid_constraint_check(h, num.as_ptr(), zero.as_ptr(), 3, &mut d), ValueidStatus::Data);
        assert_eq!(valueid_constraint_check(h, num.as_ptr(), den.as_ptr(), 2, &mut d), ValueidStatus::Data);

        let mut count = 0usize;
        assert_eq!(valueid_constraint_count_solutions(h, &mut count), ValueidStatus::Ok);
        assert_eq!(count, 24);
        valueid_constraint_free(h);
    }
}

#[test]
fn kappa() {
    let a = [0i32, 0, 1, 1, 2, 2, 2, 0];
    let b = [0i32, 1, 1, 1, 2, 2, 0, 0];
    let mut k = ValueidKappa {
        kappa: 0.0,
        p_o: 0.0,
        p_e: 0.0,
        degenerate: false,
    };
    unsafe {
        assert_eq!(valueid_cohen_kappa(a.as_ptr(), b.as_ptr(), a.len(), &mut k), ValueidStatus::Ok);
        // p_o = 6/8, p_e = (3*3 + 2*3 + 3*2) / 64 = 21/64
        assert!((k.p_o - 0.75).abs() < 1e-15);
        assert!((k.kappa - (0.75 - 21.0 / 64.0) / (1.0 - 21.0 / 64.0)).abs() < 1e-12);
        assert!(!k.degenerate);
        assert_eq!(valueid_cohen_kappa(a.as_ptr(), b.as_ptr(), 0, &mut k), ValueidStatus::Data);
    }
}

fn exe_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn trained_models_through_handles() {
    use valueid::pipeline::{self, Masks};
    use valueid::syngen::{self, GeneratorConfig, SlotCounts};

    let dir = tempfile::tempdir().unwrap();
    let cfg = GeneratorConfig {
        prompts: 2,
        responses_per_prompt: 200,
        slots: SlotCounts::PerPrompt(vec![2, 1]),
        ..GeneratorConfig::default()
    };
    let corpus = syngen::generate_corpus(&cfg).unwrap().corpus().unwrap();
    let split = valueid::corpus::split_corpus(&corpus, 1).unwrap();
    let mut opts = valueid::features::TrainOptions::new(1);
    opts.hash_bits = 14;
    let out = dir.path();
    pipeline::train_classifier(&corpus, &split, &opts)
        .unwrap()
        .save(out.join("classifier.json"))
        .unwrap();
    let masks = Masks::build(&corpus);
    let config = valueid::identify::IdentifierConfig::Context;
    pipeline::train_identifier(&corpus, &masks, &split, &opts, config, "context", Default::default())
        .unwrap()
        .save(out.join("context.identifier.json"))
        .unwrap();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let question = c(&corpus.prompts()[0].slots[0].question);
    let record = corpus
        .records()
        .iter()
        .find(|r| r.prompt_id == corpus.prompts()[0].prompt_id && r.labels[0].resolved.class() == valueid::corpus::ClassLabel::Other)
        .unwrap();
    let text = c(&record.text);
    unsafe {
        let mut cls: *mut ValueidClassifier = ptr::null_mut();
        let path = c(&s(&out.join("classifier.json")));
        assert_eq!(valueid_classifier_load(path.as_ptr(), &mut cls), ValueidStatus::Ok);
        let mut probs = [0.0f64; 3];
        assert_eq!(
            valueid_classifier_predict(cls, question.as_ptr(), text.as_ptr(), probs.as_mut_ptr()),
            ValueidStatus::Ok
        );
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        valueid_classifier_free(cls);

        let mut id: *mut ValueidIdentifier = ptr::null_mut();
        let path = c(&s(&out.join("context.identifier.json")));
        assert_eq!(valueid_identifier_load(path.as_ptr(), &mut id), ValueidStatus::Ok);
        let mut choice = std::mem::zeroed::<ValueidChoice>();
        assert_eq!(
            valueid_identifier_select(id, question.as_ptr(), text.as_ptr(), &mut choice),
            ValueidStatus::Ok
        );
        assert!(choice.found);
        assert!(choice.value_den > 0);
        let none = c("no numbers here");
        assert_eq!(valueid_identifier_select(id, question.as_ptr(), none.as_ptr(), &mut choice), ValueidStatus::Ok);
        assert!(!choice.found);
        valueid_identifier_free(id);

        let missing = c(&s(&dir.path().join("nope.json")));
        assert_eq!(valueid_identifier_load(missing.as_ptr(), &mut id), ValueidStatus::Format);
        assert!(last_error().contains("nope.json"));
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "valueid.h"

int main(void) {
    int64_t coefs[3] = {7, 3, 5};
    int64_t num[3] = {9, 1, 2};
    int64_t den[3] = {1, 1, 1};
    ValueidConstraint *c = NULL;
    ValueidDiagnosis d;
    size_t count = 0;
    ValueidMasked *m = NULL;
    if (valueid_constraint_new(coefs, 3, 64, &c) != VALUEID_STATUS_OK) return 1;
    if (valueid_constraint_check(c, num, den, 3, &d) != VALUEID_STATUS_OK) return 2;
    if (d.kind != VALUEID_DIAGNOSIS_KIND_OVER || d.amount_num != 12) return 3;
    if (valueid_constraint_count_solutions(c, &count) != VALUEID_STATUS_OK || count != 24) return 4;
    valueid_constraint_free(c);
    if (valueid_mask_text("spend $64 on sixty four things", &m) != VALUEID_STATUS_OK) return 5;
    if (valueid_masked_len(m) != 2) return 6;
    valueid_masked_free(m);
    if (valueid_mask_text(NULL, &m) != VALUEID_STATUS_NULL_ARGUMENT) return 7;
    if (strstr(valueid_last_error(), "null") == NULL) return 8;
    printf("ok %s\n", valueid_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let header = std::fs::read_to_string(include.join("valueid.h")).unwrap();
    for f in ["valueid_mask_text", "valueid_constraint_check", "valueid_identifier_select", "valueid_last_error"] {
        assert!(header.contains(f), "{f} missing from header");
    }
    let lib = exe_dir().join("libvalueid_ffi.a");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() || !lib.is_file() {
        eprintln!("skipping C link check: compiler `{cc}` or {} unavailable", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let out = Command::new(&cc)
        .args(["-std=c11", "-Wall", "-Werror", "-o"])
        .arg(&exe)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "C program exited {:?}", run.status.code());
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok 0.1.0"));
}
