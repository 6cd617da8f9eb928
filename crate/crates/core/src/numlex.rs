//! Detection, normalization and masking of numbers in free text.
//!
//! Three surface forms are recognized: decimal literals (`64`, `-2.5`,
//! `1,000`), fraction literals (`3/6`, with mixed numbers such as `1 1/2`)
//! and written numbers (`twenty-three`, `one hundred and five`,
//! `three point two five`). Written numbers are recognized by a small
//! finite-state machine over lowercase word tokens; see [`parse_written`].
//!
//! Two literals are part of the downstream data format and must not change:
//! the annotation notation `[=<canonical>]` inserted by [`annotate`] and the
//! placeholder [`MASK_TOKEN`] written by [`mask_values`].
//!
//! All offsets are byte offsets into the UTF-8 source.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::Rational;

/// Placeholder substituted for each detected number.
pub const MASK_TOKEN: &str = "<mask>";

/// Upper bound (inclusive) of the written-number grammar.
pub const WRITTEN_MAX: i64 = 999_999_999;

const MAX_PHRASE_WORDS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumberForm {
    Decimal,
    Fraction,
    Written,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NumberToken {
    pub span: Span,
    /// Exactly `source[span.start..span.end]`.
    pub surface: String,
    pub value: Rational,
    pub form: NumberForm,
    /// An existing ` [=...]` annotation directly following the surface.
    pub annotation: Option<Span>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScanDiagnostic {
    ZeroDenominator { span: Span, surface: String },
    OutOfRange { span: Span, surface: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedText {
    pub source: String,
    /// Non-overlapping, strictly increasing by start offset.
    pub tokens: Vec<NumberToken>,
    pub diagnostics: Vec<ScanDiagnostic>,
}

impl AnnotatedText {
    pub fn values(&self) -> Vec<Rational> {
        self.tokens.iter().map(|t| t.value).collect()
    }
}

// ---------------------------------------------------------------------------
// Written numbers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Lexeme {
    Zero,
    Unit(i64),
    Teen(i64),
    Tens(i64),
    Hundred,
    Scale(i64),
    And,
    Point,
}

/// True for words of the written-number vocabulary, in any case.
pub fn is_number_word(word: &str) -> bool {
    lexeme(&word.to_lowercase()).is_some()
}

fn lexeme(word: &str) -> Option<Lexeme> {
    use Lexeme::*;
    Some(match word {
        "zero" => Zero,
        "one" => Unit(1),
        "two" => Unit(2),
        "three" => Unit(3),
        "four" => Unit(4),
        "five" => Unit(5),
        "six" => Unit(6),
        "seven" => Unit(7),
        "eight" => Unit(8),
        "nine" => Unit(9),
        "ten" => Teen(10),
        "eleven" => Teen(11),
        "twelve" => Teen(12),
        "thirteen" => Teen(13),
        "fourteen" => Teen(14),
        "fifteen" => Teen(15),
        "sixteen" => Teen(16),
        "seventeen" => Teen(17),
        "eighteen" => Teen(18),
        "nineteen" => Teen(19),
        "twenty" => Tens(20),
        "thirty" => Tens(30),
        "forty" => Tens(40),
        "fifty" => Tens(50),
        "sixty" => Tens(60),
        "seventy" => Tens(70),
        "eighty" => Tens(80),
        "ninety" => Tens(90),
        "hundred" => Hundred,
        "thousand" => Scale(1_000),
        "million" => Scale(1_000_000),
        "and" => And,
        "point" => Point,
        _ => return None,
    })
}

/// Machine states. A unit that opens a group (`LeadUnit`) may be followed by
/// "hundred"; a unit that closes one (`TailUnit`) may not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Start,
    Zero,
    LeadUnit,
    TailUnit,
    Teen,
    Tens,
    Hundred,
    Scale,
    And,
    Point,
    Fraction,
}

impl State {
    fn accepting(self) -> bool {
        !matches!(self, State::Start | State::And | State::Point)
    }
}

#[derive(Debug, Clone)]
struct WrittenMachine {
    state: State,
    /// Sum of groups already closed by a scale word.
    total: i64,
    /// Current group, below one thousand.
    group: i64,
    /// Scale words must appear in strictly decreasing order.
    last_scale: i64,
    frac_numer: i64,
    frac_digits: u32,
}

impl WrittenMachine {
    fn new() -> Self {
        WrittenMachine {
            state: State::Start,
            total: 0,
            group: 0,
            last_scale: i64::MAX,
            frac_numer: 0,
            frac_digits: 0,
        }
    }

    /// Advances on one lexeme; `None` means the phrase is rejected.
    fn step(&mut self, lx: Lexeme) -> Option<()> {
        use Lexeme as L;
        use State as S;
        let next = match (self.state, lx) {
            (S::Start, L::Zero) => S::Zero,
            (S::Start | S::Scale, L::Unit(u)) => {
                self.group = u;
                S::LeadUnit
            }
            (S::Start | S::Scale | S::Hundred | S::And, L::Teen(t)) => {
                self.group += t;
                S::Teen
            }
            (S::Start | S::Scale | S::Hundred | S::And, L::Tens(t)) => {
                self.group += t;
                S::Tens
            }
            (S::Tens | S::Hundred | S::And, L::Unit(u)) => {
                self.group += u;
                S::TailUnit
            }
            (S::LeadUnit, L::Hundred) => {
                self.group *= 100;
                S::Hundred
            }
            (S::LeadUnit | S::TailUnit | S::Teen | S::Tens | S::Hundred, L::Scale(scale)) => {
                if scale >= self.last_scale || self.group == 0 {
                    return None;
                }
                self.total += self.group * scale;
                self.group = 0;
                self.last_scale = scale;
                S::Scale
            }
            (S::Hundred | S::Scale, L::And) => S::And,
            (s, L::Point) if s.accepting() && s != S::Fraction => S::Point,
            (S::Point | S::Fraction, L::Zero) => {
                self.push_digit(0)?;
                S::Fraction
            }
            (S::Point | S::Fraction, L::Unit(d)) => {
                self.push_digit(d)?;
                S::Fraction
            }
            _ => return None,
        };
        self.state = next;
        Some(())
    }

    fn push_digit(&mut self, d: i64) -> Option<()> {
        self.frac_numer = self.frac_numer.checked_mul(10)?.checked_add(d)?;
        self.frac_digits += 1;
        (self.frac_digits <= 15).then_some(())
    }

    fn value(&self) -> Option<Rational> {
        if !self.state.accepting() {
            return None;
        }
        let whole = self.total + self.group;
        if whole > WRITTEN_MAX {
            return None;
        }
        let whole = Rational::integer(whole);
        if self.frac_digits == 0 {
            return Some(whole);
        }
        let frac = Rational::new(self.frac_numer, 10i64.pow(self.frac_digits)).ok()?;
        whole.checked_add(&frac).ok()
    }
}

/// Parses a complete written-number phrase.
///
/// `words` must already be lowercased with hyphenated compounds split
/// (`["twenty", "three"]`). Returns `None` unless the whole sequence is a
/// valid number: cardinals up to [`WRITTEN_MAX`] built from units, teens,
/// tens, "hundred", "thousand" and "million", an optional "and" after
/// "hundred" or a scale word, and an optional "point" followed by digit
/// words. "a"/"an" and fraction words are outside the grammar.
pub fn parse_written<S: AsRef<str>>(words: &[S]) -> Option<Rational> {
    if words.is_empty() {
        return None;
    }
    let mut machine = WrittenMachine::new();
    for w in words {
        machine.step(lexeme(w.as_ref())?)?;
    }
    machine.value()
}

// ---------------------------------------------------------------------------
// Scanning
// ---------------------------------------------------------------------------

fn annotation_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r" ?\[=-?[0-9]+(?:/[0-9]+|\.[0-9]+)?\]").expect("valid regex"))
}

#[derive(Debug, Clone)]
struct Candidate {
    span: Span,
    value: Rational,
    form: NumberForm,
}

/// A sign counts only when attached to the digits and not following a word,
/// a digit or a closing bracket.
fn sign_allowed_after(prev: Option<char>) -> bool {
    match prev {
        None => true,
        Some(c) => c.is_whitespace() || matches!(c, '(' | '=' | '[' | '{' | ':' | ';' | ',' | '$' | '<' | '>'),
    }
}

fn digits_end(b: &[u8], mut j: usize) -> usize {
    while j < b.len() && b[j].is_ascii_digit() {
        j += 1;
    }
    j
}

struct DigitLexer<'a> {
    text: &'a str,
    regions: &'a [Span],
    candidates: Vec<Candidate>,
    diagnostics: Vec<ScanDiagnostic>,
}

impl<'a> DigitLexer<'a> {
    fn in_region(&self, pos: usize) -> Option<&Span> {
        self.regions.iter().find(|r| r.start <= pos && pos < r.end)
    }

    fn run(&mut self) {
        let b = self.text.as_bytes();
        let mut i = 0;
        while i < b.len() {
            if let Some(r) = self.in_region(i) {
                i = r.end;
                continue;
            }
            let starts_number = b[i].is_ascii_digit()
                || (b[i] == b'.'
                    && b.get(i + 1).is_some_and(u8::is_ascii_digit)
                    && !self.digit_before(i));
            if starts_number {
                i = self.lex_at(i);
            } else {
                i += 1;
            }
        }
    }

    /// Whether a digit precedes `pos`, looking through an annotation that
    /// ends there.
    fn digit_before(&self, pos: usize) -> bool {
        let p = self.regions.iter().find(|r| r.end == pos).map_or(pos, |r| r.start);
        p > 0 && self.text.as_bytes()[p - 1].is_ascii_digit()
    }

    fn prev_char(&self, pos: usize) -> Option<char> {
        self.text[..pos].chars().next_back()
    }

    /// Lexes the number starting at `i` and returns the position to resume at.
    fn lex_at(&mut self, i: usize) -> usize {
        let b = self.text.as_bytes();
        let mut start = i;
        let mut negative = false;
        if i > 0 && matches!(b[i - 1], b'-' | b'+') && sign_allowed_after(self.prev_char(i - 1)) {
            start = i - 1;
            negative = b[i - 1] == b'-';
        }

        let int_end = digits_end(b, i);
        let mut j = int_end;
        let mut grouped = false;
        if int_end > i && int_end - i <= 3 {
            while j + 3 < b.len()
                && b[j] == b','
                && b[j + 1..j + 4].iter().all(u8::is_ascii_digit)
                && !b.get(j + 4).is_some_and(u8::is_ascii_digit)
            {
                j += 4;
                grouped = true;
            }
        }
        let int_text: String = self.text[i..j].chars().filter(|c| *c != ',').collect();
        let mut frac_text = "";
        if b.get(j) == Some(&b'.') && b.get(j + 1).is_some_and(u8::is_ascii_digit) {
            let fe = digits_end(b, j + 1);
            frac_text = &self.text[j + 1..fe];
            j = fe;
        }
        let decimal_end = j;
        let plain_integer = !grouped && frac_text.is_empty() && int_end > i;

        if plain_integer && b.get(j) == Some(&b'/') && b.get(j + 1).is_some_and(u8::is_ascii_digit) {
            let den_end = digits_end(b, j + 1);
            let span = Span::new(start, den_end);
            let num = Rational::from_decimal_digits(&int_text, "");
            let den = Rational::from_decimal_digits(&self.text[j + 1..den_end], "");
            match (num, den) {
                (Ok(_), Ok(d)) if d.is_zero() => {
                    self.diagnostics.push(ScanDiagnostic::ZeroDenominator {
                        span,
                        surface: self.text[span.start..span.end].to_string(),
                    });
                }
                (Ok(n), Ok(d)) => match n.checked_div(&d) {
                    Ok(v) => self.push(span, if negative { neg(v) } else { v }, NumberForm::Fraction),
                    Err(_) => self.out_of_range(span),
                },
                _ => self.out_of_range(span),
            }
            return den_end;
        }

        if plain_integer {
            if let Some((span, value)) = self.mixed_tail(start, &int_text, int_end, negative) {
                self.push(span, value, NumberForm::Mixed);
                return span.end;
            }
        }

        let span = Span::new(start, decimal_end);
        match Rational::from_decimal_digits(&int_text, frac_text) {
            Ok(v) => self.push(span, if negative { neg(v) } else { v }, NumberForm::Decimal),
            Err(_) => self.out_of_range(span),
        }
        decimal_end
    }

    /// `W N/D` with a single space and a proper fraction.
    fn mixed_tail(&self, start: usize, whole: &str, j: usize, negative: bool) -> Option<(Span, Rational)> {
        let b = self.text.as_bytes();
        if b.get(j) != Some(&b' ') || !b.get(j + 1).is_some_and(u8::is_ascii_digit) {
            return None;
        }
        let num_end = digits_end(b, j + 1);
        if b.get(num_end) != Some(&b'/') || !b.get(num_end + 1).is_some_and(u8::is_ascii_digit) {
            return None;
        }
        let den_end = digits_end(b, num_end + 1);
        if b.get(den_end) == Some(&b'.') && b.get(den_end + 1).is_some_and(u8::is_ascii_digit) {
            return None;
        }
        let whole = Rational::from_decimal_digits(whole, "").ok()?;
        let num = Rational::from_decimal_digits(&self.text[j + 1..num_end], "").ok()?;
        let den = Rational::from_decimal_digits(&self.text[num_end + 1..den_end], "").ok()?;
        if den.is_zero() || num >= den {
            return None;
        }
        let value = whole.checked_add(&num.checked_div(&den).ok()?).ok()?;
        Some((Span::new(start, den_end), if negative { neg(value) } else { value }))
    }

    fn push(&mut self, span: Span, value: Rational, form: NumberForm) {
        self.candidates.push(Candidate { span, value, form });
    }

    fn out_of_range(&mut self, span: Span) {
        self.diagnostics.push(ScanDiagnostic::OutOfRange {
            span,
            surface: self.text[span.start..span.end].to_string(),
        });
    }
}

fn neg(v: Rational) -> Rational {
    Rational::ZERO.checked_sub(&v).expect("negation of a parsed value")
}

#[derive(Debug)]
struct Word<'a> {
    span: Span,
    lower: String,
    _text: &'a str,
}

fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_alphabetic() {
            start.get_or_insert(i);
        } else if let Some(s) = start.take() {
            out.push(Word {
                span: Span::new(s, i),
                lower: text[s..i].to_lowercase(),
                _text: &text[s..i],
            });
        }
    }
    if let Some(s) = start {
        out.push(Word {
            span: Span::new(s, text.len()),
            lower: text[s..].to_lowercase(),
            _text: &text[s..],
        });
    }
    out
}

/// Words of one phrase may be separated by whitespace or a single hyphen.
fn joins(text: &str, gap: Span) -> bool {
    let g = &text[gap.start..gap.end];
    !g.is_empty() && (g == "-" || g.chars().all(char::is_whitespace))
}

fn written_candidates(text: &str) -> Vec<Candidate> {
    let ws = words(text);
    let mut out = Vec::new();
    let mut i = 0;
    while i < ws.len() {
        if !matches!(lexeme(&ws[i].lower), Some(l) if !matches!(l, Lexeme::And | Lexeme::Point)) {
            i += 1;
            continue;
        }
        let mut phrase: Vec<&str> = vec![&ws[i].lower];
        let mut best: Option<(usize, Rational)> = parse_written(&phrase).map(|v| (i, v));
        let mut k = i + 1;
        while k < ws.len()
            && phrase.len() < MAX_PHRASE_WORDS
            && lexeme(&ws[k].lower).is_some()
            && joins(text, Span::new(ws[k - 1].span.end, ws[k].span.start))
        {
            phrase.push(&ws[k].lower);
            if let Some(v) = parse_written(&phrase) {
                best = Some((k, v));
            }
            k += 1;
        }
        match best {
            // A lone "one" is as ambiguous as "a"/"an" ("one possible way");
            // deciding whether it states the value 1 is left to the classifier.
            Some((last, _)) if last == i && ws[i].lower == "one" => i += 1,
            Some((last, value)) => {
                out.push(Candidate {
                    span: Span::new(ws[i].span.start, ws[last].span.end),
                    value,
                    form: NumberForm::Written,
                });
                i = last + 1;
            }
            None => i += 1,
        }
    }
    out
}

/// Finds every number in `text`.
///
/// Overlapping candidates are resolved left to right: the earliest start
/// wins and, among equal starts, the longest match. Existing ` [=...]`
/// annotations are never detected as numbers; one directly following a token
/// is recorded as that token's annotation.
pub fn scan_numbers(text: &str) -> AnnotatedText {
    let regions: Vec<Span> = annotation_regex()
        .find_iter(text)
        .map(|m| Span::new(m.start(), m.end()))
        .collect();

    let mut lexer = DigitLexer {
        text,
        regions: &regions,
        candidates: Vec::new(),
        diagnostics: Vec::new(),
    };
    lexer.run();
    let mut candidates = lexer.candidates;
    let diagnostics = lexer.diagnostics;
    candidates.extend(written_candidates(text));
    candidates.sort_by(|a, b| a.span.start.cmp(&b.span.start).then(b.span.len().cmp(&a.span.len())));

    let mut tokens: Vec<NumberToken> = Vec::new();
    for c in candidates {
        if regions.iter().any(|r| r.overlaps(&c.span)) {
            continue;
        }
        if tokens.last().is_some_and(|t| t.span.end > c.span.start) {
            continue;
        }
        let annotation = regions.iter().find(|r| r.start == c.span.end).copied();
        tokens.push(NumberToken {
            surface: text[c.span.start..c.span.end].to_string(),
            span: c.span,
            value: c.value,
            form: c.form,
            annotation,
        });
    }

    AnnotatedText {
        source: text.to_string(),
        tokens,
        diagnostics,
    }
}

/// Inserts ` [=<canonical>]` after every number, replacing any annotation
/// already attached to it.
pub fn annotate(annotated: &AnnotatedText) -> String {
    let src = &annotated.source;
    let mut out = String::with_capacity(src.len() + annotated.tokens.len() * 8);
    let mut pos = 0;
    for t in &annotated.tokens {
        out.push_str(&src[pos..t.span.end]);
        out.push_str(" [=");
        out.push_str(&t.value.to_string());
        out.push(']');
        pos = t.annotation.map_or(t.span.end, |a| a.end);
    }
    out.push_str(&src[pos..]);
    out
}

/// Text with each number replaced by [`MASK_TOKEN`], plus the masked values
/// in order of appearance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedText {
    template: String,
    values: Vec<Rational>,
    #[serde(skip)]
    offsets: Vec<usize>,
}

impl MaskedText {
    /// Builds a masked text from a template whose every [`MASK_TOKEN`]
    /// occurrence is a placeholder.
    pub fn from_template(template: impl Into<String>, values: Vec<Rational>) -> Result<Self> {
        let template = template.into();
        let offsets: Vec<usize> = template.match_indices(MASK_TOKEN).map(|(i, _)| i).collect();
        if offsets.len() != values.len() {
            return Err(Error::structural(format!(
                "template has {} placeholders but {} values were given",
                offsets.len(),
                values.len()
            )));
        }
        Ok(MaskedText {
            template,
            values,
            offsets,
        })
    }

    pub fn template(&self) -> &str {
        &self.template
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Byte offsets of the placeholders in [`Self::template`].
    pub fn placeholder_offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Replaces each number (together with its annotation, if any) with one
/// placeholder. Repeated values keep their multiplicity.
pub fn mask_values(annotated: &AnnotatedText) -> MaskedText {
    let src = &annotated.source;
    let mut template = String::with_capacity(src.len());
    let mut offsets = Vec::with_capacity(annotated.tokens.len());
    let mut pos = 0;
    for t in &annotated.tokens {
        template.push_str(&src[pos..t.span.start]);
        offsets.push(template.len());
        template.push_str(MASK_TOKEN);
        pos = t.annotation.map_or(t.span.end, |a| a.end);
    }
    template.push_str(&src[pos..]);
    MaskedText {
        template,
        values: annotated.values(),
        offsets,
    }
}

/// Substitutes the canonical rendering of each value back into its placeholder.
/// A space is inserted where a rendering would otherwise fuse with the
/// surrounding digits, so the result rescans to the same values.
pub fn unmask(masked: &MaskedText) -> Result<String> {
    if masked.offsets.len() != masked.values.len() {
        // Deserialized values skip offsets; recompute them from the template.
        let rebuilt = MaskedText::from_template(masked.template.clone(), masked.values.clone())?;
        return unmask(&rebuilt);
    }
    let mut out = String::with_capacity(masked.template.len());
    let mut pos = 0;
    for (&off, v) in masked.offsets.iter().zip(&masked.values) {
        if masked.template.get(off..off + MASK_TOKEN.len()) != Some(MASK_TOKEN) {
            return Err(Error::Invariant(format!("no placeholder at offset {off}")));
        }
        let between = &masked.template[pos..off];
        push_segment(&mut out, between);
        // Keep a rendered value from fusing with the digits before it.
        if out.ends_with(['.', '-', '+'])
            || out.trim_end_matches([' ', ',', '.', '/']).ends_with(|c: char| c.is_ascii_digit())
        {
            out.push(' ');
        }
        // A digit, one space and a fraction read as a mixed number.
        let b = out.as_bytes();
        if !v.is_integer() && b.len() >= 2 && b[b.len() - 1] == b' ' && b[b.len() - 2].is_ascii_digit() {
            out.push(' ');
        }
        out.push_str(&v.to_string());
        pos = off + MASK_TOKEN.len();
    }
    push_segment(&mut out, &masked.template[pos..]);
    Ok(out)
}

fn push_segment(out: &mut String, segment: &str) {
    if out.ends_with(|c: char| c.is_ascii_digit()) && segment.starts_with(|c: char| c.is_ascii_digit()) {
        out.push(' ');
    }
    out.push_str(segment);
}

/// Shorthand for `mask_values(&scan_numbers(text))`.
pub fn mask_text(text: &str) -> MaskedText {
    mask_values(&scan_numbers(text))
}

/// The sequence of values detected in `text`.
pub fn number_sequence(text: &str) -> Vec<Rational> {
    scan_numbers(text).values()
}
