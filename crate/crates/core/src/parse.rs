//! Extraction of counts and coordinates from raw model text.
//!
//! Counts: number words are first rewritten as digits, then the first run of
//! ASCII digits is taken, starting after the first `Answer:` field when the
//! text has one. No match yields [`NO_ANSWER`]. Coordinates: every
//! well-formed `(a, b)` tuple in textual order; anything else that starts with
//! `(` is skipped.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::prompt::Approach;
use crate::scene::{GridCoord, GridDims};

/// Sentinel for "no number found".
pub const NO_ANSWER: i64 = -1;

const NUMBER_WORDS: [(&str, &str); 28] = [
    ("zero", "0"),
    ("one", "1"),
    ("two", "2"),
    ("three", "3"),
    ("four", "4"),
    ("five", "5"),
    ("six", "6"),
    ("seven", "7"),
    ("eight", "8"),
    ("nine", "9"),
    ("ten", "10"),
    ("eleven", "11"),
    ("twelve", "12"),
    ("thirteen", "13"),
    ("fourteen", "14"),
    ("fifteen", "15"),
    ("sixteen", "16"),
    ("seventeen", "17"),
    ("eighteen", "18"),
    ("nineteen", "19"),
    ("twenty", "20"),
    ("thirty", "30"),
    ("forty", "40"),
    ("fifty", "50"),
    ("sixty", "60"),
    ("seventy", "70"),
    ("eighty", "80"),
    ("ninety", "90"),
];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn number_word(word: &str) -> Option<&'static str> {
    if word.len() > 9 {
        return None;
    }
    NUMBER_WORDS.iter().find(|(w, _)| w.eq_ignore_ascii_case(word)).map(|(_, d)| *d)
}

/// Replaces standalone English number words (zero to twenty, and the tens up
/// to ninety) with digits. Matching is case-insensitive and whole-word.
pub fn normalize_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let word_len: usize = rest.chars().take_while(|c| is_word_char(*c)).map(char::len_utf8).sum();
        if word_len > 0 {
            let word = &rest[..word_len];
            out.push_str(number_word(word).unwrap_or(word));
            rest = &rest[word_len..];
        } else {
            let gap: usize = rest.chars().take_while(|c| !is_word_char(*c)).map(char::len_utf8).sum();
            out.push_str(&rest[..gap]);
            rest = &rest[gap..];
        }
    }
    out
}

/// First maximal run of ASCII digits, saturating at `i64::MAX`.
fn first_digit_run(text: &str) -> Option<i64> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let mut value: i64 = 0;
    for b in bytes[start..].iter().take_while(|b| b.is_ascii_digit()) {
        value = value.saturating_mul(10).saturating_add(i64::from(b - b'0'));
    }
    Some(value)
}

fn find_ignore_ascii_case(haystack: &str, needle: &str) -> Option<usize> {
    let (h, n) = (haystack.as_bytes(), needle.as_bytes());
    if n.len() > h.len() {
        return None;
    }
    (0..=h.len() - n.len()).find(|&i| h[i..i + n.len()].eq_ignore_ascii_case(n))
}

/// Predicted count, or [`NO_ANSWER`].
pub fn extract_count(text: &str) -> i64 {
    let normalized = normalize_numbers(text);
    let region = match find_ignore_ascii_case(&normalized, "answer:") {
        Some(pos) => &normalized[pos + "answer:".len()..],
        None => &normalized[..],
    };
    first_digit_run(region).unwrap_or(NO_ANSWER)
}

/// Count inside the first `<answer>...</answer>` element, or [`NO_ANSWER`].
pub fn extract_ltc_answer(text: &str) -> i64 {
    let Some(open) = find_ignore_ascii_case(text, "<answer>") else {
        return NO_ANSWER;
    };
    let inner_start = open + "<answer>".len();
    let Some(close) = find_ignore_ascii_case(&text[inner_start..], "</answer>") else {
        return NO_ANSWER;
    };
    first_digit_run(&normalize_numbers(&text[inner_start..inner_start + close])).unwrap_or(NO_ANSWER)
}

/// A parsed `(a, b)` tuple. Grid responses use `(row, col)`; real-image
/// responses use normalized `(x, y)` in `[0, 100]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordPair {
    pub a: f64,
    pub b: f64,
}

impl CoordPair {
    pub fn new(a: f64, b: f64) -> Self {
        CoordPair { a, b }
    }

    /// The grid cell this pair names, if it is integral and inside `dims`.
    pub fn as_cell(&self, dims: GridDims) -> Option<GridCoord> {
        let integral = |v: f64| v >= 0.0 && libm::trunc(v) == v;
        if !integral(self.a) || !integral(self.b) || self.a >= f64::from(dims.rows) || self.b >= f64::from(dims.cols) {
            return None;
        }
        Some(GridCoord::new(self.a as u8, self.b as u8))
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        if self.peek() == Some(b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    /// `-?digits(.digit)?`
    fn number(&mut self) -> Option<f64> {
        let negative = self.eat(b'-');
        let mut value = 0f64;
        let start = self.pos;
        while let Some(d @ b'0'..=b'9') = self.peek() {
            value = value * 10.0 + f64::from(d - b'0');
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        if self.peek() == Some(b'.') {
            match self.bytes.get(self.pos + 1) {
                Some(d @ b'0'..=b'9') => {
                    value += f64::from(d - b'0') / 10.0;
                    self.pos += 2;
                }
                _ => return None,
            }
        }
        Some(if negative { -value } else { value })
    }

    fn pair(&mut self) -> Option<CoordPair> {
        if !self.eat(b'(') {
            return None;
        }
        self.skip_ws();
        let a = self.number()?;
        self.skip_ws();
        if !self.eat(b',') {
            return None;
        }
        self.skip_ws();
        let b = self.number()?;
        self.skip_ws();
        if !self.eat(b')') {
            return None;
        }
        Some(CoordPair::new(a, b))
    }
}

/// All well-formed `(a, b)` tuples in textual order, duplicates kept.
pub fn extract_coords(text: &str) -> Vec<CoordPair> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while let Some(off) = bytes[i..].iter().position(|b| *b == b'(') {
        let start = i + off;
        let mut cur = Cursor { bytes, pos: start };
        match cur.pair() {
            Some(p) => {
                out.push(p);
                i = cur.pos;
            }
            None => i = start + 1,
        }
    }
    out
}

/// Structured view of one model response.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedResponse {
    pub raw: String,
    pub coords: Vec<CoordPair>,
    /// The stated count, or [`NO_ANSWER`].
    pub answer: i64,
    pub coord_count: usize,
}

impl ParsedResponse {
    /// Parses `text` with the answer rule of `approach`.
    pub fn parse(text: &str, approach: Approach) -> Self {
        let coords = extract_coords(text);
        let answer = match approach {
            Approach::Ltc => extract_ltc_answer(text),
            _ => extract_count(text),
        };
        ParsedResponse { raw: text.into(), coord_count: coords.len(), coords, answer }
    }

    /// Final predicted count under `approach`.
    pub fn prediction(&self, approach: Approach) -> i64 {
        match approach {
            Approach::CoordCount => derived_count(self),
            _ => self.answer,
        }
    }
}

/// Count implied by the emitted coordinates alone.
pub fn derived_count(parsed: &ParsedResponse) -> i64 {
    parsed.coords.len() as i64
}
