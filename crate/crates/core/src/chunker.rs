//! Deterministic phrase chunking.
//!
//! Captions are tokenized into word and punctuation tokens, each word is
//! classified against a [`ChunkLexicon`], and a left-to-right scan emits
//! non-overlapping noun phrases, named entities, verb groups and adjective
//! groups. Offsets are in Unicode scalar values (chars), not bytes.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetRecord;
use crate::error::{Error, Result};

const BUNDLED_LEXICON: &str = include_str!("../data/lexicon.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PhraseKind {
    NE,
    NP,
    VP,
    ADJ,
}

impl fmt::Display for PhraseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhraseKind::NE => "NE",
            PhraseKind::NP => "NP",
            PhraseKind::VP => "VP",
            PhraseKind::ADJ => "ADJ",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub kind: PhraseKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSet {
    pub phrases: Vec<PhraseSpan>,
    pub source_caption: String,
}

impl PhraseSet {
    /// Validates span invariants against `caption`.
    pub fn new(caption: impl Into<String>, phrases: Vec<PhraseSpan>) -> Result<Self> {
        let caption = caption.into();
        validate_spans(&caption, &phrases)?;
        Ok(PhraseSet {
            phrases,
            source_caption: caption,
        })
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Keeps the first `max_phrases` spans in span order.
    pub fn truncated(&self, max_phrases: usize) -> PhraseSet {
        PhraseSet {
            phrases: self.phrases.iter().take(max_phrases).cloned().collect(),
            source_caption: self.source_caption.clone(),
        }
    }
}

/// Word lists driving the chunking rules. All entries are lowercase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ChunkLexicon {
    pub verbs: HashSet<String>,
    pub adjectives: HashSet<String>,
    pub determiners: HashSet<String>,
    pub stopwords: HashSet<String>,
}

impl ChunkLexicon {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses the sectioned lexicon format: `[verbs]`, `[adjectives]`,
    /// `[determiners]` and `[stopwords]` headers followed by one token per
    /// line. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lex = ChunkLexicon::default();
        let mut section: Option<&mut HashSet<String>> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(match name {
                    "verbs" => &mut lex.verbs,
                    "adjectives" => &mut lex.adjectives,
                    "determiners" => &mut lex.determiners,
                    "stopwords" => &mut lex.stopwords,
                    other => {
                        return Err(Error::Lexicon {
                            line: n + 1,
                            reason: format!("unknown section [{other}]"),
                        })
                    }
                });
                continue;
            }
            if line.split_whitespace().count() != 1 {
                return Err(Error::Lexicon {
                    line: n + 1,
                    reason: format!("expected a single token, got {line:?}"),
                });
            }
            match section.as_deref_mut() {
                Some(set) => {
                    set.insert(line.to_lowercase());
                }
                None => {
                    return Err(Error::Lexicon {
                        line: n + 1,
                        reason: "token before any section header".into(),
                    })
                }
            }
        }
        Ok(lex)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Punct,
    Det,
    Stop,
    Verb,
    Adj,
    Cap,
    Noun,
}

#[derive(Debug)]
struct Token<'a> {
    text: &'a str,
    start: usize,
    end: usize,
    class: Class,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Splits into word tokens (alphanumerics with inner `'` or `-`) and single
/// punctuation tokens. Offsets are char indices.
fn tokenize(caption: &str) -> Vec<(&str, usize, usize)> {
    let chars: Vec<(usize, char)> = caption.char_indices().collect();
    let byte_at = |ci: usize| chars.get(ci).map_or(caption.len(), |&(b, _)| b);
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if c.is_whitespace() {
            i += 1;
        } else if is_word_char(c) {
            let start = i;
            i += 1;
            while i < chars.len() {
                let c = chars[i].1;
                let joiner = (c == '\'' || c == '-' || c == '\u{2019}')
                    && chars.get(i + 1).is_some_and(|&(_, n)| is_word_char(n));
                if is_word_char(c) || joiner {
                    i += 1;
                } else {
                    break;
                }
            }
            out.push((&caption[byte_at(start)..byte_at(i)], start, i));
        } else {
            out.push((&caption[byte_at(i)..byte_at(i + 1)], i, i + 1));
            i += 1;
        }
    }
    out
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

fn classify<'a>(raw: Vec<(&'a str, usize, usize)>, lex: &ChunkLexicon) -> Vec<Token<'a>> {
    let is_word = |t: &str| t.chars().next().is_some_and(is_word_char);
    let mut tokens = Vec::with_capacity(raw.len());
    for (idx, &(text, start, end)) in raw.iter().enumerate() {
        if !is_word(text) {
            tokens.push(Token { text, start, end, class: Class::Punct });
            continue;
        }
        let sentence_initial = match idx.checked_sub(1).map(|p| raw[p].0) {
            None => true,
            Some(prev) => matches!(prev, "." | "!" | "?"),
        };
        let next_capitalized = raw
            .get(idx + 1)
            .is_some_and(|&(n, _, _)| is_word(n) && is_capitalized(n));
        let lower = text.to_lowercase();
        let class = if lex.determiners.contains(&lower) {
            Class::Det
        } else if lex.stopwords.contains(&lower) {
            Class::Stop
        } else if lex.verbs.contains(&lower) {
            Class::Verb
        } else if lex.adjectives.contains(&lower) {
            Class::Adj
        } else if is_capitalized(text) && (!sentence_initial || next_capitalized) {
            Class::Cap
        } else {
            Class::Noun
        };
        tokens.push(Token { text, start, end, class });
    }
    tokens
}

/// Tries `DET? MOD (and MOD)* NOUN+` or `DET? NOUN+` at `i`. A verb-lexicon
/// word may serve as the first head noun right after a determiner or an
/// adjective ("the fight", "a big win"). Returns the exclusive end token.
fn match_noun_phrase(tokens: &[Token<'_>], i: usize) -> Option<usize> {
    let mut j = i;
    let mut after_det_or_adj = false;
    if tokens.get(j)?.class == Class::Det {
        j += 1;
        after_det_or_adj = true;
    }
    let mut has_mod = false;
    while let Some(t) = tokens.get(j) {
        match t.class {
            Class::Adj | Class::Cap => {
                after_det_or_adj = t.class == Class::Adj;
                has_mod = true;
                j += 1;
            }
            Class::Stop
                if has_mod
                    && t.text.eq_ignore_ascii_case("and")
                    && tokens
                        .get(j + 1)
                        .is_some_and(|n| matches!(n.class, Class::Adj | Class::Cap)) =>
            {
                j += 1;
            }
            _ => break,
        }
    }
    let head_start = j;
    while let Some(t) = tokens.get(j) {
        let verb_head = t.class == Class::Verb && j == head_start && after_det_or_adj;
        if t.class == Class::Noun || verb_head {
            j += 1;
        } else {
            break;
        }
    }
    (j > head_start).then_some(j)
}

fn run_of(tokens: &[Token<'_>], i: usize, class: Class) -> usize {
    let mut j = i;
    while tokens.get(j).is_some_and(|t| t.class == class) {
        j += 1;
    }
    j
}

/// Chunks `caption` into non-overlapping phrases. Falls back to the whole
/// (trimmed) caption as a single NP when no rule fires.
pub fn chunk(caption: &str, lexicon: &ChunkLexicon) -> Result<PhraseSet> {
    if caption.trim().is_empty() {
        return Err(Error::EmptyCaption);
    }
    let tokens = classify(tokenize(caption), lexicon);
    let chars: Vec<char> = caption.chars().collect();
    let span = |a: usize, b: usize, kind: PhraseKind| {
        let (start, end) = (tokens[a].start, tokens[b - 1].end);
        PhraseSpan {
            text: chars[start..end].iter().collect(),
            start,
            end,
            kind,
        }
    };

    let mut phrases = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        if let Some(end) = match_noun_phrase(&tokens, i) {
            phrases.push(span(i, end, PhraseKind::NP));
            i = end;
            continue;
        }
        let kind = match tokens[i].class {
            Class::Cap => PhraseKind::NE,
            Class::Verb => PhraseKind::VP,
            Class::Adj => PhraseKind::ADJ,
            _ => {
                i += 1;
                continue;
            }
        };
        let end = run_of(&tokens, i, tokens[i].class);
        phrases.push(span(i, end, kind));
        i = end;
    }

    if phrases.is_empty() {
        let start = chars.iter().position(|c| !c.is_whitespace()).unwrap_or(0);
        let end = chars.len() - chars.iter().rev().position(|c| !c.is_whitespace()).unwrap_or(0);
        phrases.push(PhraseSpan {
            text: chars[start..end].iter().collect(),
            start,
            end,
            kind: PhraseKind::NP,
        });
    }
    Ok(PhraseSet {
        phrases,
        source_caption: caption.to_string(),
    })
}

/// Checks bounds, ordering/non-overlap, and text agreement of `spans`.
pub fn validate_spans(caption: &str, spans: &[PhraseSpan]) -> Result<()> {
    let chars: Vec<char> = caption.chars().collect();
    let mut prev_end: Option<usize> = None;
    for s in spans {
        if s.start >= s.end || s.end > chars.len() {
            return Err(Error::SpanOutOfBounds {
                start: s.start,
                end: s.end,
                len: chars.len(),
            });
        }
        if let Some(prev_end) = prev_end {
            if s.start < prev_end {
                return Err(Error::OverlappingSpans {
                    start: s.start,
                    end: s.end,
                    prev_end,
                });
            }
        }
        let slice: String = chars[s.start..s.end].iter().collect();
        if slice != s.text {
            return Err(Error::SpanTextMismatch {
                start: s.start,
                end: s.end,
                text: s.text.clone(),
                slice,
            });
        }
        prev_end = Some(s.end);
    }
    Ok(())
}

/// Accepts externally chunked spans after validating them.
pub fn load_prechunked(record: &DatasetRecord) -> Result<PhraseSet> {
    PhraseSet::new(record.caption.clone(), record.phrases.clone())
}
