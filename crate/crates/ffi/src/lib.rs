//! C ABI over the `valueid` library.
//!
//! Every fallible function returns a [`ValueidStatus`]; on failure the
//! message is available from [`valueid_last_error`] on the same thread
//! until the next failing call. Handles are opaque and owned by the caller,
//! who releases each with its `_free` function. Strings returned by the
//! library are released with [`valueid_string_free`]. Rationals cross the
//! boundary as a numerator/denominator pair with a positive denominator.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use valueid::classify::ClassifierModel;
use valueid::identify::{self, IdentifierModel};
use valueid::metrics;
use valueid::numlex::{self, MaskedText};
use valueid::verify::{self, Diagnosis, LinearConstraint};
use valueid::{Error, Rational};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueidStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Input well-formed but unusable (length mismatch, empty input, ...).
    Data = 3,
    /// A file could not be read or parsed.
    Format = 4,
    Invariant = 5,
    OutOfRange = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueidDiagnosisKind {
    Valid = 0,
    Over = 1,
    Under = 2,
    NonInteger = 3,
    Negative = 4,
}

/// Result of checking values against a constraint. `amount` is set for
/// Over/Under; `first_slot` (0-based) for NonInteger/Negative.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueidDiagnosis {
    pub kind: ValueidDiagnosisKind,
    pub amount_num: i64,
    pub amount_den: i64,
    pub first_slot: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueidKappa {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
    /// Chance agreement was 1; `kappa` then follows the 1/0 convention.
    pub degenerate: bool,
}

/// Result of value identification for one slot.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueidChoice {
    /// False when the response holds no numbers; other fields are then zero.
    pub found: bool,
    pub placeholder_index: usize,
    pub value_num: i64,
    pub value_den: i64,
    pub score: f64,
}

/// Masked response text.
pub struct ValueidMasked(MaskedText);

/// Linear constraint over non-negative counts.
pub struct ValueidConstraint(LinearConstraint);

/// Trained zero/one/other classifier.
pub struct ValueidClassifier(ClassifierModel);

/// Trained value identifier.
pub struct ValueidIdentifier(IdentifierModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> ValueidStatus {
    match e {
        Error::Format { .. } | Error::Io { .. } => ValueidStatus::Format,
        Error::Invariant(_) => ValueidStatus::Invariant,
        Error::Overflow | Error::InvalidRational(_) => ValueidStatus::OutOfRange,
        _ => ValueidStatus::Data,
    }
}

fn fail(status: ValueidStatus, msg: impl Into<String>) -> ValueidStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> ValueidStatus) -> ValueidStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(ValueidStatus::Panic, "panic inside valueid"),
    }
}

fn lift(r: Result<(), Error>) -> ValueidStatus {
    match r {
        Ok(()) => ValueidStatus::Ok,
        Err(e) => fail(status_of(&e), e.to_string()),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ValueidStatus> {
    if p.is_null() {
        return Err(fail(ValueidStatus::NullArgument, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ValueidStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], ValueidStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(ValueidStatus::NullArgument, format!("`{name}` is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn null(name: &str) -> ValueidStatus {
    fail(ValueidStatus::NullArgument, format!("`{name}` is null"))
}

fn into_handle<T>(value: T, out: *mut *mut T) {
    unsafe { *out = Box::into_raw(Box::new(value)) };
}

unsafe fn free_handle<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

macro_rules! try_arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn valueid_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn valueid_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn valueid_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses space-separated number words ("sixty four") into a value.
///
/// # Safety
/// `words` must be a NUL-terminated string; `num` and `den` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_parse_written(words: *const c_char, num: *mut i64, den: *mut i64) -> ValueidStatus {
    guard(|| {
        let words = try_arg!(str_arg(words, "words"));
        if num.is_null() || den.is_null() {
            return null("num/den");
        }
        let parts: Vec<&str> = words.split_whitespace().collect();
        match numlex::parse_written(&parts) {
            Some(v) => {
                *num = v.numer();
                *den = v.denom();
                ValueidStatus::Ok
            }
            None => fail(ValueidStatus::Data, format!("`{words}` is not a written number")),
        }
    })
}

/// Masks every number in `text`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_mask_text(text: *const c_char, out: *mut *mut ValueidMasked) -> ValueidStatus {
    guard(|| {
        let text = try_arg!(str_arg(text, "text"));
        if out.is_null() {
            return null("out");
        }
        into_handle(ValueidMasked(numlex::mask_text(text)), out);
        ValueidStatus::Ok
    })
}

/// Number of placeholders; 0 for a null handle.
///
/// # Safety
/// `masked` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn valueid_masked_len(masked: *const ValueidMasked) -> usize {
    masked.as_ref().map_or(0, |m| m.0.len())
}

/// Value of placeholder `index`.
///
/// # Safety
/// `masked` must be a live handle; `num` and `den` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_masked_value(
    masked: *const ValueidMasked,
    index: usize,
    num: *mut i64,
    den: *mut i64,
) -> ValueidStatus {
    guard(|| {
        let Some(m) = masked.as_ref() else { return null("masked") };
        if num.is_null() || den.is_null() {
            return null("num/den");
        }
        match m.0.values().get(index) {
            Some(v) => {
                *num = v.numer();
                *den = v.denom();
                ValueidStatus::Ok
            }
            None => fail(
                ValueidStatus::OutOfRange,
                format!("placeholder {index} of {}", m.0.len()),
            ),
        }
    })
}

/// Masked template as a new string; free it with `valueid_string_free`.
///
/// # Safety
/// `masked` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_masked_template(masked: *const ValueidMasked, out: *mut *mut c_char) -> ValueidStatus {
    guard(|| {
        let Some(m) = masked.as_ref() else { return null("masked") };
        if out.is_null() {
            return null("out");
        }
        match CString::new(m.0.template()) {
            Ok(s) => {
                *out = s.into_raw();
                ValueidStatus::Ok
            }
            Err(_) => fail(ValueidStatus::Data, "template contains NUL"),
        }
    })
}

/// Original text with every placeholder restored; free with `valueid_string_free`.
///
/// # Safety
/// `masked` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_masked_unmask(masked: *const ValueidMasked, out: *mut *mut c_char) -> ValueidStatus {
    guard(|| {
        let Some(m) = masked.as_ref() else { return null("masked") };
        if out.is_null() {
            return null("out");
        }
        match numlex::unmask(&m.0).map(CString::new) {
            Ok(Ok(s)) => {
                *out = s.into_raw();
                ValueidStatus::Ok
            }
            Ok(Err(_)) => fail(ValueidStatus::Data, "text contains NUL"),
            Err(e) => lift(Err(e)),
        }
    })
}

/// # Safety
/// `masked` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn valueid_masked_free(masked: *mut ValueidMasked) {
    free_handle(masked);
}

/// Constraint `sum(coefficients[i] * x[i]) == total` with integer terms.
///
/// # Safety
/// `coefficients` must point to `len` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_constraint_new(
    coefficients: *const i64,
    len: usize,
    total: i64,
    out: *mut *mut ValueidConstraint,
) -> ValueidStatus {
    guard(|| {
        let coefs = try_arg!(slice_arg(coefficients, len, "coefficients"));
        if out.is_null() {
            return null("out");
        }
        let c = LinearConstraint::new(coefs.iter().map(|&c| Rational::integer(c)).collect(), Rational::integer(total));
        match c {
            Ok(c) => {
                into_handle(ValueidConstraint(c), out);
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// Checks `len` values given as numerator/denominator arrays.
///
/// # Safety
/// `constraint` must be a live handle, `num` and `den` point to `len`
/// values, and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_constraint_check(
    constraint: *const ValueidConstraint,
    num: *const i64,
    den: *const i64,
    len: usize,
    out: *mut ValueidDiagnosis,
) -> ValueidStatus {
    guard(|| {
        let Some(c) = constraint.as_ref() else { return null("constraint") };
        let nums = try_arg!(slice_arg(num, len, "num"));
        let dens = try_arg!(slice_arg(den, len, "den"));
        if out.is_null() {
            return null("out");
        }
        let values: Result<Vec<Rational>, Error> = nums.iter().zip(dens).map(|(&n, &d)| Rational::new(n, d)).collect();
        let d = match values.and_then(|v| verify::check_solution(&v, &c.0)) {
            Ok(d) => d,
            Err(e) => return lift(Err(e)),
        };
        let blank = ValueidDiagnosis {
            kind: ValueidDiagnosisKind::Valid,
            amount_num: 0,
            amount_den: 1,
            first_slot: 0,
        };
        *out = match d {
            Diagnosis::Valid => blank,
            Diagnosis::Over(a) => ValueidDiagnosis {
                kind: ValueidDiagnosisKind::Over,
                amount_num: a.numer(),
                amount_den: a.denom(),
                ..blank
            },
            Diagnosis::Under(a) => ValueidDiagnosis {
                kind: ValueidDiagnosisKind::Under,
                amount_num: a.numer(),
                amount_den: a.denom(),
                ..blank
            },
            Diagnosis::NonInteger(s) => ValueidDiagnosis {
                kind: ValueidDiagnosisKind::NonInteger,
                first_slot: s[0],
                ..blank
            },
            Diagnosis::Negative(s) => ValueidDiagnosis {
                kind: ValueidDiagnosisKind::Negative,
                first_slot: s[0],
                ..blank
            },
        };
        ValueidStatus::Ok
    })
}

/// Number of non-negative integer solutions.
///
/// # Safety
/// `constraint` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_constraint_count_solutions(
    constraint: *const ValueidConstraint,
    count: *mut usize,
) -> ValueidStatus {
    guard(|| {
        let Some(c) = constraint.as_ref() else { return null("constraint") };
        if count.is_null() {
            return null("count");
        }
        match verify::enumerate_solutions(&c.0) {
            Ok(s) => {
                *count = s.len();
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// # Safety
/// `constraint` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn valueid_constraint_free(constraint: *mut ValueidConstraint) {
    free_handle(constraint);
}

/// Cohen's kappa between two label sequences of length `len`.
///
/// # Safety
/// `a` and `b` must point to `len` labels and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_cohen_kappa(
    a: *const i32,
    b: *const i32,
    len: usize,
    out: *mut ValueidKappa,
) -> ValueidStatus {
    guard(|| {
        let a = try_arg!(slice_arg(a, len, "a"));
        let b = try_arg!(slice_arg(b, len, "b"));
        if out.is_null() {
            return null("out");
        }
        match metrics::cohen_kappa(a, b) {
            Ok(k) => {
                *out = ValueidKappa {
                    kappa: k.kappa,
                    p_o: k.p_o,
                    p_e: k.p_e,
                    degenerate: k.degenerate,
                };
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// Loads a classifier saved by `valueid train-classifier`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_classifier_load(path: *const c_char, out: *mut *mut ValueidClassifier) -> ValueidStatus {
    guard(|| {
        let path = try_arg!(str_arg(path, "path"));
        if out.is_null() {
            return null("out");
        }
        match ClassifierModel::load(Path::new(path)) {
            Ok(m) => {
                into_handle(ValueidClassifier(m), out);
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// Posterior of zero, one and other for one slot, written to `probs[0..3]`.
///
/// # Safety
/// `model` must be a live handle, the strings NUL-terminated and `probs`
/// point to three writable doubles.
#[no_mangle]
pub unsafe extern "C" fn valueid_classifier_predict(
    model: *const ValueidClassifier,
    slot_question: *const c_char,
    response: *const c_char,
    probs: *mut f64,
) -> ValueidStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        let q = try_arg!(str_arg(slot_question, "slot_question"));
        let r = try_arg!(str_arg(response, "response"));
        if probs.is_null() {
            return null("probs");
        }
        let d = m.0.predict_pair(q, r).as_array();
        std::slice::from_raw_parts_mut(probs, 3).copy_from_slice(&d);
        ValueidStatus::Ok
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn valueid_classifier_free(model: *mut ValueidClassifier) {
    free_handle(model);
}

/// Loads an identifier saved by `valueid train-identifier`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_identifier_load(path: *const c_char, out: *mut *mut ValueidIdentifier) -> ValueidStatus {
    guard(|| {
        let path = try_arg!(str_arg(path, "path"));
        if out.is_null() {
            return null("out");
        }
        match IdentifierModel::load(Path::new(path)) {
            Ok(m) => {
                into_handle(ValueidIdentifier(m), out);
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// Scores the numbers of `response` for one slot and picks the best.
///
/// # Safety
/// `model` must be a live handle, the strings NUL-terminated and `out`
/// writable.
#[no_mangle]
pub unsafe extern "C" fn valueid_identifier_select(
    model: *const ValueidIdentifier,
    slot_question: *const c_char,
    response: *const c_char,
    out: *mut ValueidChoice,
) -> ValueidStatus {
    guard(|| {
        let Some(m) = model.as_ref() else { return null("model") };
        let q = try_arg!(str_arg(slot_question, "slot_question"));
        let r = try_arg!(str_arg(response, "response"));
        if out.is_null() {
            return null("out");
        }
        let masked = numlex::mask_text(r);
        let scores = identify::score_tokens(&m.0, q, &masked);
        match identify::select_value(scores.as_slice(), &masked) {
            Ok(choice) => {
                *out = match choice {
                    Some(c) => ValueidChoice {
                        found: true,
                        placeholder_index: c.placeholder_index,
                        value_num: c.chosen.numer(),
                        value_den: c.chosen.denom(),
                        score: c.score,
                    },
                    None => ValueidChoice {
                        found: false,
                        placeholder_index: 0,
                        value_num: 0,
                        value_den: 0,
                        score: 0.0,
                    },
                };
                ValueidStatus::Ok
            }
            Err(e) => lift(Err(e)),
        }
    })
}

/// # Safety
/// `model` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn valueid_identifier_free(model: *mut ValueidIdentifier) {
    free_handle(model);
}
