//! Synthetic prompts and responses with known gold values.
//!
//! Prompts follow the candy-shop pattern: several kinds of items sold in
//! containers at fixed prices, and a total to spend. Responses are
//! assembled from labeled segments, so the placeholder that carries each
//! slot's answer is known without re-parsing; the assembled text is still
//! re-scanned as a cross-check.
//!
//! # Config file
//!
//! One `key = value` per line, `#` starts a comment:
//!
//! ```text
//! seed = 7
//! prompts = 7
//! responses = 4000
//! slots = 9,3,1,1,1,8,12      # per prompt, or a range such as 1-12
//! class_mix = 0.6,0.07,0.33   # zero, one, other
//! class_mix.3 = 0.52,0,0.48   # override for the third prompt
//! form_mix = 0.8,0.15,0.05    # digits, words, fractions
//! rater_disagreement = 0.1
//! misspelling = 0
//! number_misspelling = 0
//! distractor = 0.3
//! omission = 0
//! ```
//!
//! Class mixes may come from rounded percentage tables; a sum within 0.002
//! of 1 is accepted and renormalized.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{self, ClassLabel, Corpus, LabelTriple, Prompt, ResponseRecord, SlotSpec, ValueLabel};
use crate::error::{Error, Result};
use crate::numlex;
use crate::rational::{gcd, Rational};
use crate::verify::LinearConstraint;

pub const MAX_SLOTS: usize = 12;
pub const WORDS_MAX: u32 = 999_999;
/// Mixed into the generator seed to seed rater simulation when no separate
/// rater seed is given.
pub const RATER_SEED_SALT: u64 = 0x5eed_7a7e;

const UNITS: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

fn below_thousand(n: u32, out: &mut Vec<String>) {
    let (h, rest) = (n / 100, n % 100);
    if h > 0 {
        out.push(UNITS[h as usize].to_string());
        out.push("hundred".to_string());
    }
    if rest == 0 {
        return;
    }
    if rest < 20 {
        out.push(UNITS[rest as usize].to_string());
    } else {
        out.push(TENS[(rest / 10) as usize].to_string());
        if rest % 10 > 0 {
            out.push(UNITS[(rest % 10) as usize].to_string());
        }
    }
}

/// English words for `n`, without "and": 105 is `one hundred five`.
pub fn render_words(n: u32) -> Result<Vec<String>> {
    if n > WORDS_MAX {
        return Err(Error::data(format!("{n} is outside 0..={WORDS_MAX}")));
    }
    if n == 0 {
        return Ok(vec!["zero".to_string()]);
    }
    let mut out = Vec::new();
    if n >= 1000 {
        below_thousand(n / 1000, &mut out);
        out.push("thousand".to_string());
    }
    below_thousand(n % 1000, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SlotCounts {
    PerPrompt(Vec<usize>),
    Range(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub prompts: usize,
    pub responses_per_prompt: usize,
    pub slots: SlotCounts,
    /// Zero, One, Other.
    pub class_mix: [f64; 3],
    /// 1-based prompt index and its own class mix.
    pub prompt_class_mix: Vec<(usize, [f64; 3])>,
    /// Digits, words, fractions.
    pub form_mix: [f64; 3],
    pub rater_disagreement: f64,
    pub misspelling: f64,
    pub number_misspelling: f64,
    pub distractor: f64,
    pub omission: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 0,
            prompts: 7,
            responses_per_prompt: 4000,
            slots: SlotCounts::PerPrompt(vec![9, 3, 1, 1, 1, 8, 12]),
            class_mix: [0.6, 0.07, 0.33],
            prompt_class_mix: Vec::new(),
            form_mix: [0.8, 0.15, 0.05],
            rater_disagreement: 0.0,
            misspelling: 0.0,
            number_misspelling: 0.0,
            distractor: 0.3,
            omission: 0.0,
        }
    }
}

fn parse_list(v: &str) -> std::result::Result<Vec<f64>, String> {
    v.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}")))
        .collect()
}

fn parse_triple(v: &str) -> std::result::Result<[f64; 3], String> {
    let l = parse_list(v)?;
    <[f64; 3]>::try_from(l).map_err(|_| "expected three comma-separated numbers".to_string())
}

fn mix_ok(name: &str, m: &mut [f64; 3]) -> Result<()> {
    if m.iter().any(|x| !(0.0..=1.0).contains(x)) {
        return Err(Error::data(format!("{name}: fractions must lie in [0,1]")));
    }
    let s: f64 = m.iter().sum();
    if (s - 1.0).abs() > 0.002 {
        return Err(Error::data(format!("{name}: fractions sum to {s}, not 1")));
    }
    for x in m.iter_mut() {
        *x /= s;
    }
    Ok(())
}

impl GeneratorConfig {
    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut c = GeneratorConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ln = i + 1;
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::format(path, ln, "line", "expected `key = value`"))?;
            let bad = |m: String| Error::format(path, ln, key, m);
            let num = |v: &str| v.parse::<f64>().map_err(|e| bad(e.to_string()));
            let int = |v: &str| v.parse::<u64>().map_err(|e| bad(e.to_string()));
            match key {
                "seed" => c.seed = int(value)?,
                "prompts" => c.prompts = int(value)? as usize,
                "responses" => c.responses_per_prompt = int(value)? as usize,
                "slots" => {
                    c.slots = if let Some((a, b)) = value.split_once('-') {
                        SlotCounts::Range(int(a.trim())? as usize, int(b.trim())? as usize)
                    } else {
                        SlotCounts::PerPrompt(
                            value
                                .split(',')
                                .map(|x| int(x.trim()).map(|n| n as usize))
                                .collect::<Result<_>>()?,
                        )
                    }
                }
                "class_mix" => c.class_mix = parse_triple(value).map_err(bad)?,
                "form_mix" => c.form_mix = parse_triple(value).map_err(bad)?,
                "rater_disagreement" => c.rater_disagreement = num(value)?,
                "misspelling" => c.misspelling = num(value)?,
                "number_misspelling" => c.number_misspelling = num(value)?,
                "distractor" => c.distractor = num(value)?,
                "omission" => c.omission = num(value)?,
                k => match k.strip_prefix("class_mix.").map(str::parse::<usize>) {
                    Some(Ok(p)) if p >= 1 => c.prompt_class_mix.push((p, parse_triple(value).map_err(bad)?)),
                    _ => return Err(bad("unknown key".to_string())),
                },
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(path, &corpus::read_file(path)?)
    }

    pub fn render(&self) -> String {
        let triple = |m: &[f64; 3]| format!("{},{},{}", m[0], m[1], m[2]);
        let mut out = String::new();
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "prompts = {}", self.prompts);
        let _ = writeln!(out, "responses = {}", self.responses_per_prompt);
        let slots = match &self.slots {
            SlotCounts::PerPrompt(v) => v.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(","),
            SlotCounts::Range(a, b) => format!("{a}-{b}"),
        };
        let _ = writeln!(out, "slots = {slots}");
        let _ = writeln!(out, "class_mix = {}", triple(&self.class_mix));
        for (p, m) in &self.prompt_class_mix {
            let _ = writeln!(out, "class_mix.{p} = {}", triple(m));
        }
        let _ = writeln!(out, "form_mix = {}", triple(&self.form_mix));
        let _ = writeln!(out, "rater_disagreement = {}", self.rater_disagreement);
        let _ = writeln!(out, "misspelling = {}", self.misspelling);
        let _ = writeln!(out, "number_misspelling = {}", self.number_misspelling);
        let _ = writeln!(out, "distractor = {}", self.distractor);
        let _ = writeln!(out, "omission = {}", self.omission);
        out
    }

    pub fn validate(&mut self) -> Result<()> {
        if self.prompts == 0 || self.responses_per_prompt == 0 {
            return Err(Error::data("prompts and responses must be positive"));
        }
        match &self.slots {
            SlotCounts::PerPrompt(v) => {
                if v.len() != self.prompts {
                    return Err(Error::data(format!("{} slot counts for {} prompts", v.len(), self.prompts)));
                }
                if v.iter().any(|n| !(1..=MAX_SLOTS).contains(n)) {
                    return Err(Error::data(format!("slot counts must lie in 1..={MAX_SLOTS}")));
                }
            }
            SlotCounts::Range(a, b) => {
                if *a < 1 || a > b || *b > MAX_SLOTS {
                    return Err(Error::data(format!("slot range must lie within 1..={MAX_SLOTS}")));
                }
            }
        }
        mix_ok("class_mix", &mut self.class_mix)?;
        mix_ok("form_mix", &mut self.form_mix)?;
        for (p, m) in &mut self.prompt_class_mix {
            if *p > self.prompts {
                return Err(Error::data(format!("class_mix.{p}: there are only {} prompts", self.prompts)));
            }
            mix_ok(&format!("class_mix.{p}"), m)?;
        }
        for (name, r) in [
            ("rater_disagreement", self.rater_disagreement),
            ("misspelling", self.misspelling),
            ("number_misspelling", self.number_misspelling),
            ("distractor", self.distractor),
            ("omission", self.omission),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::data(format!("{name} must lie in [0,1]")));
            }
        }
        if self.rater_disagreement >= 1.0 {
            return Err(Error::data("rater_disagreement must be below 1"));
        }
        Ok(())
    }

    fn mix_for(&self, prompt: usize) -> [f64; 3] {
        self.prompt_class_mix
            .iter()
            .rev()
            .find(|(p, _)| *p == prompt + 1)
            .map_or(self.class_mix, |(_, m)| *m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlotTrace {
    pub gold: ValueLabel,
    /// Placeholders holding the answer's primary mention.
    pub answer_placeholders: Vec<usize>,
    /// The value was deliberately left out of the text.
    pub omitted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoldRecord {
    pub record: ResponseRecord,
    pub slots: Vec<SlotTrace>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    pub prompts: Vec<Prompt>,
    pub records: Vec<GoldRecord>,
}

impl GeneratedCorpus {
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::new(self.prompts.clone(), self.records.iter().map(|g| g.record.clone()).collect())
    }

    /// Other-class gold values that cannot be found among the numbers of
    /// their response.
    pub fn expected_missing(&self) -> usize {
        self.records
            .iter()
            .map(|g| {
                let values = numlex::number_sequence(&g.record.text);
                g.slots
                    .iter()
                    .filter(|s| s.gold.class() == ClassLabel::Other)
                    .filter(|s| !s.gold.value().is_some_and(|v| corpus::value_present(&values, &v)))
                    .count()
            })
            .sum()
    }

    pub fn omissions(&self) -> usize {
        self.records.iter().flat_map(|g| &g.slots).filter(|s| s.omitted).count()
    }
}

const CONTAINERS: [(&str, &str); 7] = [
    ("bags", "bag"),
    ("boxes", "box"),
    ("packs", "pack"),
    ("jars", "jar"),
    ("cartons", "carton"),
    ("tins", "tin"),
    ("crates", "crate"),
];

const ITEMS: [&str; 48] = [
    "chocolates", "lollipops", "gum sticks", "toffees", "mints", "caramels", "gumdrops", "pretzels", "cookies",
    "crackers", "muffins", "cupcakes", "brownies", "donuts", "bagels", "pencils", "erasers", "markers",
    "crayons", "notebooks", "stickers", "marbles", "balloons", "candles", "buttons", "ribbons", "beads",
    "shells", "stamps", "postcards", "magnets", "keychains", "bracelets", "apples", "oranges", "pears", "plums",
    "lemons", "peaches", "cherries", "grapes", "almonds", "peanuts", "walnuts", "raisins", "jelly beans",
    "rice cakes", "pickles",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

struct PromptPlan {
    prompt: Prompt,
    container: (&'static str, &'static str),
    items: Vec<&'static str>,
    prices: Vec<i64>,
    total: i64,
}

fn make_prompt(index: usize, slots: usize, item_cursor: &mut usize, rng: &mut ChaCha8Rng) -> Result<PromptPlan> {
    let container = CONTAINERS[index % CONTAINERS.len()];
    let items: Vec<&'static str> = (0..slots)
        .map(|k| ITEMS[(*item_cursor + k) % ITEMS.len()])
        .collect();
    *item_cursor += slots;
    let mut pool: Vec<i64> = (2..=15).collect();
    pool.shuffle(rng);
    let prices: Vec<i64> = pool[..slots].to_vec();
    let mut total = 0;
    while total == 0 {
        total = prices.iter().map(|c| c * rng.gen_range(0..=4)).sum();
    }
    let prompt_id = format!("p{}", index + 1);
    let (plural, single) = container;
    let price_text: Vec<String> = items
        .iter()
        .zip(&prices)
        .map(|(it, c)| format!("{} cost ${c} per {single}.", capitalize(it)))
        .collect();
    let question = if slots == 1 {
        format!("{} How many {plural} could you buy with exactly ${total}?", price_text[0])
    } else {
        format!(
            "A shop sells {slots} kinds of items in {plural}. {} Give one way to spend exactly ${total}.",
            price_text.join(" ")
        )
    };
    let slot_specs = items
        .iter()
        .enumerate()
        .map(|(k, it)| SlotSpec {
            slot_id: format!("s{}", k + 1),
            name: it.to_string(),
            question: format!("How many {plural} of {it}?"),
        })
        .collect();
    let constraint = LinearConstraint::new(
        prices.iter().map(|c| Rational::from(*c)).collect(),
        Rational::from(total),
    )?;
    Ok(PromptPlan {
        prompt: Prompt {
            prompt_id,
            question,
            slots: slot_specs,
            constraint: Some(constraint),
        },
        container,
        items,
        prices,
        total,
    })
}

/// Exact class counts for `n` cases by largest remainder, ties to the
/// lower class index.
fn allocate(n: usize, mix: [f64; 3]) -> [usize; 3] {
    let raw = mix.map(|m| m * n as f64);
    let mut counts = raw.map(|r| r.floor() as usize);
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| (raw[b] - raw[b].floor()).total_cmp(&(raw[a] - raw[a].floor())).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[c] += 1;
        left -= 1;
    }
    counts
}

#[derive(Debug, Clone)]
enum Seg {
    Text(String),
    Num {
        text: String,
        value: Rational,
        slot: Option<usize>,
        answer: bool,
    },
}

fn num(text: String, value: Rational, slot: Option<usize>, answer: bool) -> Seg {
    Seg::Num {
        text,
        value,
        slot,
        answer,
    }
}

fn text(s: impl Into<String>) -> Seg {
    Seg::Text(s.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Form {
    Digits,
    Words,
    Fraction,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    &xs[rng.gen_range(0..xs.len())]
}

fn pick_weighted(rng: &mut ChaCha8Rng, w: &[f64; 3]) -> usize {
    let r: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, x) in w.iter().enumerate() {
        acc += x;
        if r < acc {
            return i;
        }
    }
    w.iter().rposition(|x| *x > 0.0).unwrap_or(0)
}

fn words_text(n: u32, rng: &mut ChaCha8Rng) -> String {
    let w = render_words(n).expect("small value");
    if w.len() == 2 && TENS.contains(&w[0].as_str()) && rng.gen_bool(0.5) {
        format!("{}-{}", w[0], w[1])
    } else {
        w.join(" ")
    }
}

/// Renders a non-integer value `whole + k/den` in one of the fraction forms.
fn fraction_text(v: Rational, rng: &mut ChaCha8Rng) -> String {
    let (n, d) = (v.numer(), v.denom());
    let whole = v.floor();
    let mut forms = vec![format!("{n}/{d}"), format!("{}/{}", 2 * n, 2 * d)];
    if whole > 0 {
        forms.push(format!("{whole} {}/{d}", n - whole * d));
    }
    if d == 2 || d == 4 {
        forms.push(v.to_string());
    }
    pick(rng, &forms).clone()
}

struct SlotPlan {
    class: ClassLabel,
    stated_zero: bool,
    omit: bool,
    form: Form,
}

fn mention(
    plan: &PromptPlan,
    slot: usize,
    sp: &SlotPlan,
    value: Rational,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Seg> {
    let item = plan.items[slot];
    let (plural, single) = plan.container;
    let price = plan.prices[slot];
    let s = Some(slot);
    let mut segs = Vec::new();
    match sp.class {
        ClassLabel::Zero => match rng.gen_range(0..4) {
            0 => segs.extend([num("0".into(), Rational::ZERO, s, true), text(format!(" {plural} of {item}"))]),
            1 => segs.extend([num("zero".into(), Rational::ZERO, s, true), text(format!(" {plural} of {item}"))]),
            2 => segs.push(text(format!("no {item}"))),
            _ => segs.extend([text(format!("{item}: ")), num("0".into(), Rational::ZERO, s, true)]),
        },
        ClassLabel::One => {
            match rng.gen_range(0..4) {
                0 => segs.extend([num("1".into(), Rational::ONE, s, true), text(format!(" {single} of {item}"))]),
                1 => segs.push(text(format!("one {single} of {item}"))),
                2 => segs.push(text(format!("a {single} of {item}"))),
                _ => segs.extend([text(format!("{item}: ")), num("1".into(), Rational::ONE, s, true)]),
            }
            if rng.gen_bool(cfg.distractor) {
                segs.extend([text(" ($"), num(price.to_string(), price.into(), None, false), text(")")]);
            }
        }
        ClassLabel::Other => {
            let render = |x: i64, rng: &mut ChaCha8Rng| match sp.form {
                Form::Words => words_text(x as u32, rng),
                _ => x.to_string(),
            };
            let value_segs: Vec<Seg> = if sp.omit {
                let n = value.numer();
                let a = rng.gen_range(1..n);
                vec![
                    num(a.to_string(), a.into(), None, false),
                    text(" plus "),
                    num((n - a).to_string(), (n - a).into(), None, false),
                ]
            } else {
                let t = match sp.form {
                    Form::Fraction => fraction_text(value, rng),
                    _ => render(value.numer(), rng),
                };
                vec![num(t, value, s, true)]
            };
            match rng.gen_range(0..3) {
                0 => {
                    segs.extend(value_segs);
                    segs.push(text(format!(" {plural} of {item}")));
                }
                1 => {
                    segs.push(text(format!("{item}: ")));
                    segs.extend(value_segs);
                }
                _ => {
                    segs.extend(value_segs);
                    segs.push(text(format!(" {item}")));
                }
            }
            if value.is_integer() && !sp.omit && rng.gen_bool(cfg.distractor) {
                let v = value.numer();
                segs.extend([
                    text(" ($"),
                    num(price.to_string(), price.into(), None, false),
                    text(" × "),
                    num(v.to_string(), value, s, false),
                    text(" = $"),
                    num((price * v).to_string(), (price * v).into(), None, false),
                    text(")"),
                ]);
            }
        }
    }
    segs
}

fn frame(list: Vec<Seg>, total: i64, rng: &mut ChaCha8Rng) -> Vec<Seg> {
    if list.is_empty() {
        return vec![text(*pick(rng, &["I would not buy anything.", "I don't know.", "Nothing."]))];
    }
    let t = || num(total.to_string(), total.into(), None, false);
    let mut out = Vec::new();
    match rng.gen_range(0..7) {
        0 => {
            out.push(text("I would buy "));
            out.extend(list);
            out.push(text("."));
        }
        1 => {
            out.push(text("You could buy "));
            out.extend(list);
            out.push(text("."));
        }
        2 => {
            out.extend(list);
            out.push(text("."));
        }
        3 => {
            out.push(text("Buy "));
            out.extend(list);
            out.extend([text(" to spend $"), t(), text(".")]);
        }
        4 => {
            out.extend([text("To spend exactly $"), t(), text(" I would get ")]);
            out.extend(list);
            out.push(text("."));
        }
        5 => {
            out.push(text("My answer: "));
            out.extend(list);
            out.extend([text(". That is $"), t(), text(" in total.")]);
        }
        _ => {
            out.push(text("We can get "));
            out.extend(list);
        }
    }
    out
}

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() < 4 || !chars.iter().all(|c| c.is_ascii_alphabetic()) {
        return None;
    }
    let i = rng.gen_range(1..chars.len() - 1);
    let mut c = chars.clone();
    match rng.gen_range(0..3) {
        0 => c.swap(i, i + 1),
        1 => {
            c.remove(i);
        }
        _ => c.insert(i, chars[i]),
    }
    let out: String = c.into_iter().collect();
    (out != word && !numlex::is_number_word(&out)).then_some(out)
}

fn misspell_text(s: &str, rate: f64, rng: &mut ChaCha8Rng) -> String {
    if rate <= 0.0 {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 4);
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String, rng: &mut ChaCha8Rng| {
        if word.is_empty() {
            return;
        }
        let w = if !numlex::is_number_word(word) && rng.gen_bool(rate) {
            misspell(word, rng).unwrap_or_else(|| word.clone())
        } else {
            word.clone()
        };
        out.push_str(&w);
        word.clear();
    };
    for ch in s.chars() {
        if ch.is_alphabetic() {
            word.push(ch);
        } else {
            flush(&mut word, &mut out, rng);
            out.push(ch);
        }
    }
    flush(&mut word, &mut out, rng);
    out
}

fn other_value(form: Form, omit: bool, rng: &mut ChaCha8Rng) -> Rational {
    match form {
        Form::Fraction if !omit => loop {
            let d = *pick(rng, &[2i64, 3, 4]);
            let k = rng.gen_range(1..d);
            if gcd(k, d) != 1 {
                continue;
            }
            let whole = rng.gen_range(0..=5);
            return Rational::new(whole * d + k, d).expect("non-zero denominator");
        },
        _ => Rational::from(rng.gen_range(2..=30i64)),
    }
}

struct Assembled {
    text: String,
    traces: Vec<SlotTrace>,
}

fn assemble(plan: &PromptPlan, plans: &[SlotPlan], cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Assembled> {
    let v = plans.len();
    let mut gold = Vec::with_capacity(v);
    let mut pieces: Vec<(usize, Vec<Seg>)> = Vec::new();
    for (k, sp) in plans.iter().enumerate() {
        let (label, value) = match sp.class {
            ClassLabel::Zero if !sp.stated_zero => (ValueLabel::Absent, Rational::ZERO),
            ClassLabel::Zero => (ValueLabel::Stated(Rational::ZERO), Rational::ZERO),
            ClassLabel::One => (ValueLabel::Stated(Rational::ONE), Rational::ONE),
            ClassLabel::Other => {
                let x = other_value(sp.form, sp.omit, rng);
                (ValueLabel::Stated(x), x)
            }
        };
        if label.is_stated() {
            pieces.push((k, mention(plan, k, sp, value, cfg, rng)));
        }
        gold.push(label);
    }
    pieces.shuffle(rng);
    let mut list: Vec<Seg> = Vec::new();
    let n = pieces.len();
    for (i, (_, segs)) in pieces.into_iter().enumerate() {
        if i > 0 {
            list.push(text(match (n, i) {
                (2, _) => " and ",
                (_, i) if i == n - 1 => ", and ",
                _ => ", ",
            }));
        }
        list.extend(segs);
    }
    let segs = frame(list, plan.total, rng);

    let mut out = String::new();
    let mut expected: Vec<(Rational, Option<usize>, bool)> = Vec::new();
    for seg in segs {
        match seg {
            Seg::Text(t) => out.push_str(&misspell_text(&t, cfg.misspelling, rng)),
            Seg::Num { text, value, slot, answer } => {
                let wordy = text.chars().any(|c| c.is_alphabetic());
                if wordy && cfg.number_misspelling > 0.0 && rng.gen_bool(cfg.number_misspelling) {
                    let words: Vec<&str> = text.split([' ', '-']).collect();
                    let target = rng.gen_range(0..words.len());
                    if let Some(bad) = misspell(words[target], rng) {
                        out.push_str(&text.replacen(words[target], &bad, 1));
                        continue;
                    }
                }
                out.push_str(&text);
                expected.push((value, slot, answer));
            }
        }
    }
    let scanned = numlex::number_sequence(&out);
    let expected_values: Vec<Rational> = expected.iter().map(|e| e.0).collect();
    if cfg.number_misspelling == 0.0 && scanned != expected_values {
        return Err(Error::Invariant(format!(
            "generated text `{out}` scans as {scanned:?}, expected {expected_values:?}"
        )));
    }
    let traces = gold
        .into_iter()
        .enumerate()
        .map(|(k, g)| SlotTrace {
            gold: g,
            answer_placeholders: expected
                .iter()
                .enumerate()
                .filter(|(_, e)| e.1 == Some(k) && e.2)
                .map(|(i, _)| i)
                .collect(),
            omitted: plans[k].omit,
        })
        .collect();
    Ok(Assembled { text: out, traces })
}

pub fn generate_corpus(config: &GeneratorConfig) -> Result<GeneratedCorpus> {
    let mut cfg = config.clone();
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let counts: Vec<usize> = match &cfg.slots {
        SlotCounts::PerPrompt(v) => v.clone(),
        SlotCounts::Range(a, b) => (0..cfg.prompts).map(|_| rng.gen_range(*a..=*b)).collect(),
    };
    let mut cursor = 0;
    let mut prompts = Vec::new();
    let mut records = Vec::new();
    for (p, &v) in counts.iter().enumerate() {
        let plan = make_prompt(p, v, &mut cursor, &mut rng)?;
        let r = cfg.responses_per_prompt;
        let alloc = allocate(r * v, cfg.mix_for(p));
        let mut classes: Vec<ClassLabel> = ClassLabel::ALL
            .iter()
            .zip(alloc)
            .flat_map(|(c, n)| std::iter::repeat_n(*c, n))
            .collect();
        classes.shuffle(&mut rng);
        for j in 0..r {
            let plans: Vec<SlotPlan> = classes[j * v..(j + 1) * v]
                .iter()
                .map(|&class| {
                    let form = [Form::Digits, Form::Words, Form::Fraction][pick_weighted(&mut rng, &cfg.form_mix)];
                    let omit = class == ClassLabel::Other && form != Form::Fraction && rng.gen_bool(cfg.omission);
                    SlotPlan {
                        class,
                        stated_zero: rng.gen_bool(0.4),
                        omit,
                        form,
                    }
                })
                .collect();
            let mut attempt = assemble(&plan, &plans, &cfg, &mut rng)?;
            // An omitted value must not reappear by coincidence elsewhere.
            for _ in 0..20 {
                let values = numlex::number_sequence(&attempt.text);
                let clash = attempt.traces.iter().any(|t| {
                    t.omitted && t.gold.value().is_some_and(|x| corpus::value_present(&values, &x))
                });
                if !clash {
                    break;
                }
                attempt = assemble(&plan, &plans, &cfg, &mut rng)?;
            }
            let labels = attempt
                .traces
                .iter()
                .map(|t| LabelTriple {
                    rater1: t.gold.clone(),
                    rater2: t.gold.clone(),
                    resolved: t.gold.clone(),
                })
                .collect();
            records.push(GoldRecord {
                record: ResponseRecord {
                    response_id: format!("{}-r{:05}", plan.prompt.prompt_id, j + 1),
                    prompt_id: plan.prompt.prompt_id.clone(),
                    text: attempt.text,
                    labels,
                },
                slots: attempt.traces,
            });
        }
        prompts.push(plan.prompt);
    }
    let records = simulate_raters(&records, cfg.rater_disagreement, cfg.seed ^ RATER_SEED_SALT)?;
    Ok(GeneratedCorpus { prompts, records })
}

fn perturb(v: &Rational, rng: &mut ChaCha8Rng) -> ValueLabel {
    match rng.gen_range(0..3) {
        0 => ValueLabel::Absent,
        1 => ValueLabel::Stated(v.checked_add(&Rational::ONE).unwrap_or(*v)),
        _ => {
            let down = v.checked_sub(&Rational::ONE).unwrap_or(*v);
            if down.is_negative() {
                ValueLabel::Stated(v.checked_add(&Rational::ONE).unwrap_or(*v))
            } else {
                ValueLabel::Stated(down)
            }
        }
    }
}

/// Rater labels from gold: each stated gold value is, with probability
/// `rate`, replaced for one randomly chosen rater by a blank or a value one
/// away. Resolved labels always equal gold.
pub fn simulate_raters(gold: &[GoldRecord], rate: f64, seed: u64) -> Result<Vec<GoldRecord>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::data("rater disagreement rate must lie in [0,1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(gold
        .iter()
        .map(|g| {
            let mut g = g.clone();
            for (labels, trace) in g.record.labels.iter_mut().zip(&g.slots) {
                labels.rater1 = trace.gold.clone();
                labels.rater2 = trace.gold.clone();
                labels.resolved = trace.gold.clone();
                if let ValueLabel::Stated(v) = &trace.gold {
                    if rate > 0.0 && rng.gen_bool(rate) {
                        let bad = perturb(v, &mut rng);
                        if rng.gen_bool(0.5) {
                            labels.rater1 = bad;
                        } else {
                            labels.rater2 = bad;
                        }
                    }
                }
            }
            g
        })
        .collect())
}
