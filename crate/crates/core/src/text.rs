//! Deterministic text primitives: tokenization, stopwords, sentence
//! splitting and bag-of-words similarity.
//!
//! All offsets produced here count Unicode scalar values (Rust `char`s),
//! never bytes, so they line up with the character offsets used by
//! SQuAD-format files.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

/// A lowercase word with its character span in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub char_start: usize,
    pub char_end: usize,
}

impl Token {
    pub fn span(&self) -> Range<usize> {
        self.char_start..self.char_end
    }
}

/// Splits `text` into maximal runs of letters and digits, lowercased.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let mut start = 0;
    let mut pos = 0;
    for c in text.chars() {
        if c.is_alphanumeric() {
            if current.is_empty() {
                start = pos;
            }
            current.push(c);
        } else if !current.is_empty() {
            tokens.push(Token {
                surface: current.to_lowercase(),
                char_start: start,
                char_end: pos,
            });
            current.clear();
        }
        pos += 1;
    }
    if !current.is_empty() {
        tokens.push(Token {
            surface: current.to_lowercase(),
            char_start: start,
            char_end: pos,
        });
    }
    tokens
}

/// Lowercase token surfaces of `text`, in order.
pub fn token_strings(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.surface).collect()
}

/// Lowercases and collapses internal whitespace to single spaces.
pub fn normalize_term(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Number of `char`s in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice `text` by a character range. Out-of-range bounds are clamped.
pub fn char_slice(text: &str, range: Range<usize>) -> &str {
    let start = byte_offset(text, range.start);
    let end = byte_offset(text, range.end.max(range.start));
    &text[start..end]
}

/// Byte offset of the `char_idx`-th character, or `text.len()` past the end.
pub fn byte_offset(text: &str, char_idx: usize) -> usize {
    text.char_indices().nth(char_idx).map(|(b, _)| b).unwrap_or(text.len())
}

/// Character offset of the first occurrence of `needle` in `haystack`.
pub fn find_char_offset(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    haystack.find(needle).map(|b| haystack[..b].chars().count())
}

const DEFAULT_STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "also",
    "am",
    "among",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "either",
    "else",
    "ever",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "may",
    "me",
    "might",
    "more",
    "most",
    "must",
    "my",
    "myself",
    "neither",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "ought",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "s",
    "same",
    "shall",
    "she",
    "should",
    "so",
    "some",
    "such",
    "t",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "upon",
    "us",
    "very",
    "via",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "whether",
    "which",
    "while",
    "who",
    "whom",
    "whose",
    "why",
    "will",
    "with",
    "within",
    "without",
    "would",
    "yet",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

/// Set of lowercase function words excluded from content-word comparisons.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StopwordList {
    words: HashSet<String>,
}

impl Default for StopwordList {
    fn default() -> Self {
        Self {
            words: DEFAULT_STOPWORDS.iter().map(|w| w.to_string()).collect(),
        }
    }
}

impl StopwordList {
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// Parses the override format: one word per line, `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        Self::from_words(text.lines().map(|line| match line.find('#') {
            Some(i) => &line[..i],
            None => line,
        }))
    }

    pub fn from_file(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Tokens of `text` that are not stopwords, in source order.
pub fn content_words(text: &str, stopwords: &StopwordList) -> Vec<Token> {
    tokenize(text)
        .into_iter()
        .filter(|t| !stopwords.contains(&t.surface))
        .collect()
}

/// Jaccard index of two token collections treated as sets.
/// Two empty sets score 0.
pub fn jaccard<A, B>(a: &[A], b: &[B]) -> f64
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    let a: HashSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: HashSet<&str> = b.iter().map(AsRef::as_ref).collect();
    let union = a.union(&b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(&b).count() as f64 / union as f64
}

/// Cosine similarity of term-frequency vectors. Empty input scores 0.
pub fn cosine_tf<A, B>(a: &[A], b: &[B]) -> f64
where
    A: AsRef<str>,
    B: AsRef<str>,
{
    fn counts<S: AsRef<str>>(xs: &[S]) -> HashMap<&str, f64> {
        let mut m = HashMap::new();
        for x in xs {
            *m.entry(x.as_ref()).or_insert(0.0) += 1.0;
        }
        m
    }
    let ca = counts(a);
    let cb = counts(b);
    let dot: f64 = ca.iter().filter_map(|(k, v)| cb.get(k).map(|w| v * w)).sum();
    let na = ca.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb = cb.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Which bag-of-words similarity to use when comparing a question to a sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Jaccard,
    Cosine,
}

impl Similarity {
    pub fn score<A: AsRef<str>, B: AsRef<str>>(self, a: &[A], b: &[B]) -> f64 {
        match self {
            Similarity::Jaccard => jaccard(a, b),
            Similarity::Cosine => cosine_tf(a, b),
        }
    }
}

/// A sentence and its character range in the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub range: Range<usize>,
}

/// Splits on `.`, `?` or `!` followed by whitespace or end of input.
///
/// Each sentence is trimmed and its range covers exactly the trimmed text,
/// so whitespace between sentences belongs to no range.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut seg_start = 0;
    for i in 0..chars.len() {
        let terminal = matches!(chars[i], '.' | '?' | '!');
        let boundary = i + 1 == chars.len() || chars[i + 1].is_whitespace();
        if terminal && boundary {
            push_trimmed(&chars, seg_start..i + 1, &mut out);
            seg_start = i + 1;
        }
    }
    push_trimmed(&chars, seg_start..chars.len(), &mut out);
    out
}

fn push_trimmed(chars: &[char], range: Range<usize>, out: &mut Vec<Sentence>) {
    let mut start = range.start;
    let mut end = range.end;
    while start < end && chars[start].is_whitespace() {
        start += 1;
    }
    while end > start && chars[end - 1].is_whitespace() {
        end -= 1;
    }
    if start < end {
        out.push(Sentence {
            text: chars[start..end].iter().collect(),
            range: start..end,
        });
    }
}

/// Finds every start index where `needle` occurs as a contiguous run in `haystack`.
pub fn find_token_run<S: AsRef<str>, T: AsRef<str>>(haystack: &[S], needle: &[T]) -> Vec<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return Vec::new();
    }
    (0..=haystack.len() - needle.len())
        .filter(|&i| needle.iter().zip(&haystack[i..]).all(|(n, h)| n.as_ref() == h.as_ref()))
        .collect()
}
