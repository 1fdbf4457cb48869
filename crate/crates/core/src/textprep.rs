//! Article text normalization.
//!
//! The pipeline turns raw article bodies into ASCII word tokens in a fixed
//! order: direct quotes are removed, British spellings are mapped to
//! American ones, non-ASCII characters are transliterated, punctuation
//! other than periods is dropped, sentence-final periods become the
//! standalone `PERIOD` token, bare numerals are removed while ordinals are
//! spelled out, and the first letter of every sentence is lower-cased.
//! Articles with fewer than ten words are discarded.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::lists;

/// Sentence-boundary sentinel token.
pub const PERIOD: &str = "PERIOD";

/// Articles with fewer words than this are discarded.
pub const MIN_WORDS: usize = 10;

const SPELLING_DEFAULT: &str = include_str!("../data/spelling_british_american.txt");
const ABBREVIATIONS_DEFAULT: &str = include_str!("../data/abbreviations.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawArticle {
    pub source_id: String,
    pub topic_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<String>,
}

impl RawArticle {
    pub fn validate(&self) -> Result<()> {
        if self.source_id.trim().is_empty() {
            return Err(Error::InvalidInput("article has an empty source_id".into()));
        }
        if self.topic_id.trim().is_empty() {
            return Err(Error::InvalidInput("article has an empty topic_id".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanArticle {
    pub source_id: String,
    pub topic_id: String,
    pub tokens: Vec<String>,
}

impl CleanArticle {
    /// Number of word tokens, not counting `PERIOD` sentinels.
    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.as_str() != PERIOD).count()
    }

    /// Space-joined token text. Normalizing this text again yields the same
    /// tokens.
    pub fn render(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Normalized {
    Clean(CleanArticle),
    Discard { words: usize },
}

impl Normalized {
    pub fn into_clean(self) -> Option<CleanArticle> {
        match self {
            Normalized::Clean(a) => Some(a),
            Normalized::Discard { .. } => None,
        }
    }
}

fn is_double_quote(c: char) -> bool {
    matches!(c, '"' | '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{00AB}' | '\u{00BB}' | '\u{2033}')
}

/// Removes every span enclosed in double quotes, quote marks included.
///
/// Quotes pair greedily left to right within a paragraph (a line). An
/// unmatched opening quote removes the rest of its paragraph only.
pub fn strip_direct_quotes(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if !is_double_quote(c) {
            out.push(c);
            continue;
        }
        // Inside a quote: skip until the closing quote or end of paragraph.
        loop {
            match chars.peek() {
                None => break,
                Some(&'\n') => break,
                Some(&q) if is_double_quote(q) => {
                    chars.next();
                    break;
                }
                Some(_) => {
                    chars.next();
                }
            }
        }
    }
    out
}

/// British → American spelling table, keyed by lower-case British form.
#[derive(Debug, Clone, Default)]
pub struct SpellingMap {
    map: BTreeMap<String, String>,
}

impl SpellingMap {
    pub fn bundled() -> Self {
        Self::parse(SPELLING_DEFAULT).expect("bundled spelling map is well-formed")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw = lists::parse_two_column(text, "spelling map")?;
        Ok(Self { map: raw.into_iter().map(|(k, v)| (k.to_lowercase(), v.to_lowercase())).collect() })
    }

    pub fn extend(&mut self, other: SpellingMap) {
        self.map.extend(other.map);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Looks up a word and reapplies its case pattern to the replacement.
    pub fn americanize(&self, word: &str) -> Option<String> {
        let lower = word.to_lowercase();
        let target = self.map.get(&lower)?;
        let letters: Vec<char> = word.chars().collect();
        let all_upper = letters.len() > 1 && letters.iter().all(|c| c.is_uppercase());
        if all_upper {
            Some(target.to_uppercase())
        } else if letters.first().is_some_and(|c| c.is_uppercase()) {
            let mut it = target.chars();
            Some(it.next().map(|f| f.to_uppercase().chain(it).collect()).unwrap_or_default())
        } else {
            Some(target.clone())
        }
    }

    /// Replaces whole-word matches in running text.
    pub fn apply(&self, text: &str) -> String {
        let mut out = String::with_capacity(text.len());
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut String| {
            if !word.is_empty() {
                match self.americanize(word) {
                    Some(rep) => out.push_str(&rep),
                    None => out.push_str(word),
                }
                word.clear();
            }
        };
        for c in text.chars() {
            if c.is_alphabetic() {
                word.push(c);
            } else {
                flush(&mut word, &mut out);
                out.push(c);
            }
        }
        flush(&mut word, &mut out);
        out
    }
}

fn special_ascii(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' | '\u{00AB}' | '\u{00BB}' => "\"",
        '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2015}' | '\u{2212}' => "-",
        '\u{2026}' => "...",
        '\u{00DF}' => "ss",
        '\u{00C6}' => "AE",
        '\u{00E6}' => "ae",
        '\u{0152}' => "OE",
        '\u{0153}' => "oe",
        '\u{00D8}' => "O",
        '\u{00F8}' => "o",
        '\u{0141}' => "L",
        '\u{0142}' => "l",
        '\u{0110}' => "D",
        '\u{0111}' => "d",
        '\u{00DE}' => "TH",
        '\u{00FE}' => "th",
        '\u{0131}' => "i",
        _ => return None,
    })
}

/// Replaces non-ASCII characters by their closest ASCII equivalent via
/// canonical decomposition; characters without one are dropped.
pub fn transliterate(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_ascii() {
            if c.is_ascii_control() && !c.is_ascii_whitespace() {
                continue;
            }
            out.push(c);
        } else if c.is_whitespace() {
            out.push(' ');
        } else if let Some(rep) = special_ascii(c) {
            out.push_str(rep);
        } else {
            for d in std::iter::once(c).nfkd() {
                if d.is_ascii() && !is_combining_mark(d) && !(d.is_ascii_control() && !d.is_ascii_whitespace()) {
                    out.push(d);
                }
            }
        }
    }
    out
}

/// Sentence and abbreviation rules used when splitting periods.
#[derive(Debug, Clone)]
pub struct Normalizer {
    spelling: SpellingMap,
    abbreviations: BTreeSet<String>,
    min_words: usize,
}

impl Default for Normalizer {
    fn default() -> Self {
        Self {
            spelling: SpellingMap::bundled(),
            abbreviations: lists::parse_one_column(ABBREVIATIONS_DEFAULT),
            min_words: MIN_WORDS,
        }
    }
}

const CLOSERS: &[char] = &[')', ']', '}', '\'', '"'];
const OPENERS: &[char] = &['(', '[', '{', '\'', '"'];

impl Normalizer {
    pub fn new(spelling: SpellingMap, abbreviations: BTreeSet<String>) -> Self {
        Self { spelling, abbreviations, min_words: MIN_WORDS }
    }

    /// Adds spelling pairs and abbreviations to the current tables.
    pub fn extended(mut self, spelling: SpellingMap, abbreviations: BTreeSet<String>) -> Self {
        self.spelling.extend(spelling);
        self.abbreviations.extend(abbreviations);
        self
    }

    pub fn with_min_words(mut self, min_words: usize) -> Self {
        self.min_words = min_words;
        self
    }

    pub fn spelling(&self) -> &SpellingMap {
        &self.spelling
    }

    /// Quote stripping followed by [`Normalizer::normalize`].
    pub fn prepare(&self, raw: &RawArticle) -> Result<Normalized> {
        let stripped = RawArticle { text: strip_direct_quotes(&raw.text), ..raw.clone() };
        self.normalize(&stripped)
    }

    /// Normalizes an article whose direct quotes were already stripped.
    pub fn normalize(&self, raw: &RawArticle) -> Result<Normalized> {
        raw.validate()?;
        let tokens = self.tokenize(&raw.text);
        let words = tokens.iter().filter(|t| t.as_str() != PERIOD).count();
        if words < self.min_words {
            return Ok(Normalized::Discard { words });
        }
        Ok(Normalized::Clean(CleanArticle {
            source_id: raw.source_id.clone(),
            topic_id: raw.topic_id.clone(),
            tokens,
        }))
    }

    /// Runs the normalization steps on bare text and returns the tokens.
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let american = self.spelling.apply(text);
        let ascii = transliterate(&american);
        let mut tokens = self.split_sentences(&ascii);
        tokens = rewrite_numerals(tokens);
        lowercase_sentence_starts(&mut tokens);
        tokens
    }

    fn is_abbreviation(&self, core: &str) -> bool {
        let core = core.trim_start_matches(|c: char| !c.is_ascii_alphanumeric());
        is_initialism(core) || self.abbreviations.contains(core.trim_end_matches('.'))
    }

    /// Removes punctuation, deletes abbreviation-internal periods and emits
    /// `PERIOD` for sentence-final ones.
    fn split_sentences(&self, text: &str) -> Vec<String> {
        let chunks: Vec<&str> = text.split_whitespace().collect();
        let mut tokens: Vec<String> = Vec::new();
        for (idx, chunk) in chunks.iter().enumerate() {
            let core = chunk.trim_end_matches(CLOSERS);
            let closing_quote = chunk[core.len()..].contains(['\'', '"']);
            let is_last = idx + 1 == chunks.len();
            let final_period = core.ends_with('.') && {
                if self.is_abbreviation(core) {
                    is_last
                } else {
                    is_last || closing_quote || starts_upper(chunks[idx + 1])
                }
            };
            for word in chunk_words(chunk) {
                if word == PERIOD {
                    push_period(&mut tokens);
                } else {
                    tokens.push(word);
                }
            }
            if final_period {
                push_period(&mut tokens);
            }
        }
        tokens
    }
}

fn push_period(tokens: &mut Vec<String>) {
    if tokens.last().is_some_and(|t| t != PERIOD) {
        tokens.push(PERIOD.to_string());
    }
}

fn starts_upper(chunk: &str) -> bool {
    chunk.trim_start_matches(OPENERS).chars().next().is_some_and(|c| c.is_ascii_uppercase())
}

/// `M.I.T.`, `U.S.`, `F.`: single letters each followed by a period.
fn is_initialism(core: &str) -> bool {
    let bytes = core.as_bytes();
    !bytes.is_empty()
        && bytes.len().is_multiple_of(2)
        && bytes.chunks(2).all(|p| p[0].is_ascii_alphabetic() && p[1] == b'.')
}

/// Words of one whitespace chunk: periods and apostrophes are deleted, any
/// other punctuation separates words.
fn chunk_words(chunk: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in chunk.chars() {
        if c.is_ascii_alphanumeric() {
            cur.push(c);
        } else if c == '.' || c == '\'' {
            continue;
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

fn rewrite_numerals(tokens: Vec<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    for tok in tokens {
        if tok.bytes().all(|b| b.is_ascii_digit()) {
            continue;
        }
        match ordinal_value(&tok).and_then(ordinal_words) {
            Some(words) => out.extend(words.split(' ').map(str::to_string)),
            None if ordinal_value(&tok).is_some() => {}
            None => out.push(tok),
        }
    }
    // Numeral removal can leave a sentence empty.
    let mut dedup: Vec<String> = Vec::with_capacity(out.len());
    for tok in out {
        if tok == PERIOD && dedup.last().is_none_or(|t| t == PERIOD) {
            continue;
        }
        dedup.push(tok);
    }
    dedup
}

fn ordinal_value(tok: &str) -> Option<u64> {
    let split = tok.find(|c: char| !c.is_ascii_digit())?;
    if split == 0 {
        return None;
    }
    let (digits, suffix) = tok.split_at(split);
    let suffix = suffix.to_ascii_lowercase();
    if !matches!(suffix.as_str(), "st" | "nd" | "rd" | "th") {
        return None;
    }
    digits.parse().ok()
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

/// English cardinal words for `n < 10^12`, space separated.
pub fn cardinal_words(n: u64) -> Option<String> {
    fn below_thousand(n: u64, out: &mut Vec<String>) {
        let (h, rest) = (n / 100, n % 100);
        if h > 0 {
            out.push(ONES[h as usize].into());
            out.push("hundred".into());
        }
        if rest >= 20 {
            out.push(TENS[(rest / 10) as usize].into());
            if rest % 10 > 0 {
                out.push(ONES[(rest % 10) as usize].into());
            }
        } else if rest > 0 {
            out.push(ONES[rest as usize].into());
        }
    }
    if n >= 1_000_000_000_000 {
        return None;
    }
    if n == 0 {
        return Some("zero".into());
    }
    let mut out = Vec::new();
    for (scale, name) in [(1_000_000_000, "billion"), (1_000_000, "million"), (1_000, "thousand")] {
        let chunk = (n / scale) % 1000;
        if chunk > 0 {
            below_thousand(chunk, &mut out);
            out.push(name.into());
        }
    }
    below_thousand(n % 1000, &mut out);
    Some(out.join(" "))
}

/// English ordinal words (`17` → `seventeenth`, `21` → `twenty first`).
pub fn ordinal_words(n: u64) -> Option<String> {
    let cardinal = cardinal_words(n)?;
    let (head, last) = match cardinal.rfind(' ') {
        Some(i) => (&cardinal[..=i], &cardinal[i + 1..]),
        None => ("", cardinal.as_str()),
    };
    let last = match last {
        "one" => "first".to_string(),
        "two" => "second".to_string(),
        "three" => "third".to_string(),
        "five" => "fifth".to_string(),
        "eight" => "eighth".to_string(),
        "nine" => "ninth".to_string(),
        "twelve" => "twelfth".to_string(),
        w if w.ends_with('y') => format!("{}ieth", &w[..w.len() - 1]),
        w => format!("{w}th"),
    };
    Some(format!("{head}{last}"))
}

/// Lower-cases the first letter of each sentence unless the sentence starts
/// with an all-caps token of two or more characters (an acronym).
fn lowercase_sentence_starts(tokens: &mut [String]) {
    let mut at_start = true;
    for tok in tokens.iter_mut() {
        if tok == PERIOD {
            at_start = true;
            continue;
        }
        if at_start {
            at_start = false;
            let acronym = tok.len() >= 2 && tok.chars().filter(|c| c.is_ascii_alphabetic()).all(|c| c.is_ascii_uppercase());
            if !acronym {
                if let Some(pos) = tok.find(|c: char| c.is_ascii_alphabetic()) {
                    let lowered = tok[pos..pos + 1].to_ascii_lowercase();
                    tok.replace_range(pos..pos + 1, &lowered);
                }
            }
        }
    }
}
