//! Perturbed question generation: rewrites SQuAD-format questions with
//! synonyms, definitions or attribute relations taken from the graph.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::kg::{KnowledgeGraph, RelationKind, Triple};
use crate::squad::{AnswerSpan, QaItem, SquadFile};
use crate::text::{char_slice, find_token_run, split_sentences, token_strings, tokenize};

/// A graph subject found in a question, with its character range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub subject: String,
    pub range: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerturbError {
    #[error("expected a {expected} triple, got {found}")]
    WrongKind {
        expected: RelationKind,
        found: RelationKind,
    },
    #[error("mention {span:?} does not match subject {subject:?}")]
    MentionMismatch { span: String, subject: String },
}

/// Characters of the original question that a perturbation rewrote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplacedSpan {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

/// Provenance of one generated item, written to the sidecar file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRecord {
    pub new_id: String,
    pub source_id: String,
    pub kind: RelationKind,
    pub triple: Triple,
    pub replaced: ReplacedSpan,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenSummary {
    pub synonym: usize,
    pub definition: usize,
    pub attribute: usize,
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenConfig {
    pub max_per_question: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self { max_per_question: 2 }
    }
}

/// `source#kindN`, e.g. `fuji-1#attribute0`.
pub fn perturbed_id(source_id: &str, kind: RelationKind, ordinal: usize) -> String {
    format!("{source_id}#{kind}{ordinal}")
}

/// Inverse of [`perturbed_id`].
pub fn parse_perturbed_id(id: &str) -> Option<(&str, RelationKind, usize)> {
    let (source, tail) = id.rsplit_once('#')?;
    for kind in [RelationKind::Attribute, RelationKind::Synonym, RelationKind::Definition] {
        if let Some(n) = tail.strip_prefix(kind.as_str()) {
            if !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) {
                return Some((source, kind, n.parse().ok()?));
            }
        }
    }
    None
}

/// Whole-token, case-insensitive subject matches in a question. Overlaps
/// resolve longest first, then leftmost; the result is in question order.
pub fn find_entity_mentions(question: &str, kg: &KnowledgeGraph) -> Vec<Mention> {
    let tokens = tokenize(question);
    let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
    let mut matches = kg.subject_occurrences(&surfaces);
    matches.sort_by(|a, b| b.len.cmp(&a.len).then(a.start.cmp(&b.start)));
    let mut taken = vec![false; tokens.len()];
    let mut chosen = Vec::new();
    for m in matches {
        let span = m.start..m.start + m.len;
        if taken[span.clone()].iter().any(|&t| t) {
            continue;
        }
        taken[span.clone()].iter_mut().for_each(|t| *t = true);
        chosen.push((
            m.start,
            Mention {
                subject: m.subject.to_string(),
                range: tokens[span.start].char_start..tokens[span.end - 1].char_end,
            },
        ));
    }
    chosen.sort_by_key(|(start, _)| *start);
    chosen.into_iter().map(|(_, m)| m).collect()
}

fn capitalize_like(reference: &str, replacement: &str) -> String {
    let upper = reference.chars().next().is_some_and(char::is_uppercase);
    let mut chars = replacement.chars();
    match chars.next() {
        Some(c) if upper => c.to_uppercase().chain(chars).collect(),
        _ => replacement.to_string(),
    }
}

const ARTICLES: [&str; 3] = ["a", "an", "the"];

/// Replaces `range` (characters) of `question` with `replacement`.
///
/// When `absorb_article` is set and the replacement itself starts with an
/// article, a standalone article right before the span is dropped.
pub(crate) fn splice_mention(question: &str, range: Range<usize>, replacement: &str, absorb_article: bool) -> String {
    let chars: Vec<char> = question.chars().collect();
    let mut prefix: String = chars[..range.start].iter().collect();
    let suffix: String = chars[range.end..].iter().collect();
    let mut case_reference: String = chars[range.clone()].iter().collect();

    let starts_with_article = token_strings(replacement)
        .first()
        .is_some_and(|w| ARTICLES.contains(&w.as_str()));
    if absorb_article && starts_with_article {
        let trimmed = prefix.trim_end();
        let last_word_start = trimmed
            .char_indices()
            .rev()
            .find(|(_, c)| !c.is_alphanumeric())
            .map(|(i, c)| i + c.len_utf8())
            .unwrap_or(0);
        let last_word = &trimmed[last_word_start..];
        if ARTICLES.contains(&last_word.to_lowercase().as_str()) {
            case_reference = last_word.to_string();
            prefix = trimmed[..last_word_start].to_string();
        }
    }

    let replacement = capitalize_like(&case_reference, replacement);
    let mut out = String::new();
    let left = prefix.trim_end();
    out.push_str(left);
    if !left.is_empty() && left.len() != prefix.len() {
        out.push(' ');
    }
    out.push_str(&replacement);
    if suffix.starts_with(char::is_whitespace) {
        out.push(' ');
        out.push_str(suffix.trim_start());
    } else {
        out.push_str(&suffix);
    }
    out
}

fn check_mention(item: &QaItem, mention: &Mention, triple: &Triple) -> std::result::Result<(), PerturbError> {
    let span = char_slice(&item.question, mention.range.clone());
    if mention.subject != triple.subject || token_strings(span) != token_strings(&triple.subject) {
        return Err(PerturbError::MentionMismatch {
            span: span.to_string(),
            subject: triple.subject.clone(),
        });
    }
    Ok(())
}

fn replace_mention(
    item: &QaItem,
    mention: &Mention,
    triple: &Triple,
    ordinal: usize,
    expected: RelationKind,
) -> std::result::Result<QaItem, PerturbError> {
    if triple.kind() != expected {
        return Err(PerturbError::WrongKind {
            expected,
            found: triple.kind(),
        });
    }
    check_mention(item, mention, triple)?;
    let absorb = expected == RelationKind::Definition;
    Ok(QaItem {
        id: perturbed_id(&item.id, expected, ordinal),
        question: splice_mention(&item.question, mention.range.clone(), &triple.object, absorb),
        ..item.clone()
    })
}

/// Swaps the mention for its synonym. Context and answers are untouched.
pub fn perturb_synonym(
    item: &QaItem,
    mention: &Mention,
    triple: &Triple,
    ordinal: usize,
) -> std::result::Result<QaItem, PerturbError> {
    replace_mention(item, mention, triple, ordinal, RelationKind::Synonym)
}

/// Swaps the mention for its definition, absorbing a preceding article when
/// the definition begins with one.
pub fn perturb_definition(
    item: &QaItem,
    mention: &Mention,
    triple: &Triple,
    ordinal: usize,
) -> std::result::Result<QaItem, PerturbError> {
    replace_mention(item, mention, triple, ordinal, RelationKind::Definition)
}

/// Subjects in the gold answer texts, or failing that, in the context
/// sentences holding the gold answers. First occurrence order.
fn answer_subjects(item: &QaItem, kg: &KnowledgeGraph) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut from = |texts: Vec<String>| -> Vec<String> {
        let mut out = Vec::new();
        for text in texts {
            for (s, _) in kg.subjects_in_text(&token_strings(&text)) {
                if seen.insert(s.to_string()) {
                    out.push(s.to_string());
                }
            }
        }
        out
    };
    let in_answers = from(item.answers.iter().map(|a| a.text.clone()).collect());
    if !in_answers.is_empty() {
        return in_answers;
    }
    let sentences = split_sentences(&item.context);
    let answer_sentences = item
        .answers
        .iter()
        .filter_map(|a| usize::try_from(a.answer_start).ok())
        .filter_map(|start| sentences.iter().find(|s| s.range.contains(&start)))
        .map(|s| s.text.clone())
        .collect();
    from(answer_sentences)
}

fn what_prefix(question: &str) -> Option<usize> {
    let head = question.get(..4)?;
    let rest = &question[4..];
    (head.eq_ignore_ascii_case("what") && rest.starts_with(char::is_whitespace)).then_some(4)
}

/// Inserts the attribute word after a leading "what" and makes the triple's
/// object the gold answer. Returns `None` when the question does not fit the
/// template or the subject is not tied to the gold answer.
pub fn perturb_attribute(item: &QaItem, triple: &Triple, ordinal: usize) -> Option<QaItem> {
    if triple.kind() != RelationKind::Attribute {
        return None;
    }
    let cut = what_prefix(&item.question)?;
    if token_strings(&item.question).iter().any(|w| w == triple.label()) {
        return None;
    }
    let subject_tokens = token_strings(&triple.subject);
    let subject_in = |text: &str| !find_token_run(&token_strings(text), &subject_tokens).is_empty();
    let sentences = split_sentences(&item.context);
    let tied = item.answers.iter().any(|a| {
        subject_in(&a.text)
            || usize::try_from(a.answer_start)
                .ok()
                .and_then(|start| sentences.iter().find(|s| s.range.contains(&start)))
                .is_some_and(|s| subject_in(&s.text))
    });
    if !tied {
        return None;
    }

    let question = format!("{} {}{}", &item.question[..cut], triple.label(), &item.question[cut..]);
    let context_tokens = tokenize(&item.context);
    let surfaces: Vec<&str> = context_tokens.iter().map(|t| t.surface.as_str()).collect();
    let object_tokens = token_strings(&triple.object);
    let (answer, knowledge_required) = match find_token_run(&surfaces, &object_tokens).first() {
        Some(&i) => {
            let range = context_tokens[i].char_start..context_tokens[i + object_tokens.len() - 1].char_end;
            (
                AnswerSpan {
                    text: char_slice(&item.context, range.clone()).to_string(),
                    answer_start: range.start as i64,
                },
                false,
            )
        }
        None => (
            AnswerSpan {
                text: triple.object.clone(),
                answer_start: -1,
            },
            true,
        ),
    };
    Some(QaItem {
        id: perturbed_id(&item.id, RelationKind::Attribute, ordinal),
        question,
        answers: vec![answer],
        knowledge_required,
        ..item.clone()
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Generated {
    pub items: Vec<QaItem>,
    pub records: Vec<PerturbationRecord>,
    pub summary: GenSummary,
}

struct Candidate<'a> {
    triple: &'a Triple,
    mention: Option<Mention>,
    id: usize,
}

fn generate_for_item(item: &QaItem, kg: &KnowledgeGraph, config: GenConfig) -> Generated {
    let mut candidates = Vec::new();
    let mut seen_subjects = HashSet::new();
    for mention in find_entity_mentions(&item.question, kg) {
        if !seen_subjects.insert(mention.subject.clone()) {
            continue;
        }
        for t in kg.triples_for_subject(&mention.subject) {
            if t.kind() != RelationKind::Attribute {
                candidates.push(Candidate {
                    triple: t,
                    mention: Some(mention.clone()),
                    id: kg.triple_id(t).unwrap_or(usize::MAX),
                });
            }
        }
    }
    for subject in answer_subjects(item, kg) {
        for t in kg.triples_for_subject(&subject) {
            if t.kind() == RelationKind::Attribute {
                candidates.push(Candidate {
                    triple: t,
                    mention: None,
                    id: kg.triple_id(t).unwrap_or(usize::MAX),
                });
            }
        }
    }
    candidates.sort_by(|a, b| b.triple.weight.total_cmp(&a.triple.weight).then(a.id.cmp(&b.id)));

    let mut out = Generated::default();
    let mut questions = HashSet::new();
    for c in candidates {
        if out.items.len() >= config.max_per_question {
            break;
        }
        let ordinal = out.items.len();
        let produced = match (c.triple.kind(), &c.mention) {
            (RelationKind::Synonym, Some(m)) => perturb_synonym(item, m, c.triple, ordinal).ok(),
            (RelationKind::Definition, Some(m)) => perturb_definition(item, m, c.triple, ordinal).ok(),
            (RelationKind::Attribute, None) => perturb_attribute(item, c.triple, ordinal),
            _ => None,
        };
        let Some(new_item) = produced.filter(|n| questions.insert(n.question.clone())) else {
            out.summary.skipped += 1;
            continue;
        };
        let replaced = match &c.mention {
            Some(m) => ReplacedSpan {
                text: char_slice(&item.question, m.range.clone()).to_string(),
                char_start: m.range.start,
                char_end: m.range.end,
            },
            None => ReplacedSpan {
                text: item.question[..4].to_string(),
                char_start: 0,
                char_end: 4,
            },
        };
        match c.triple.kind() {
            RelationKind::Attribute => out.summary.attribute += 1,
            RelationKind::Synonym => out.summary.synonym += 1,
            RelationKind::Definition => out.summary.definition += 1,
        }
        out.records.push(PerturbationRecord {
            new_id: new_item.id.clone(),
            source_id: item.id.clone(),
            kind: c.triple.kind(),
            triple: c.triple.clone(),
            replaced,
        });
        out.items.push(new_item);
    }
    out
}

/// Perturbs every item, keeping at most `max_per_question` variants per
/// source, chosen by triple weight then graph insertion order. Output order
/// follows input order.
pub fn generate(items: &[QaItem], kg: &KnowledgeGraph, config: GenConfig) -> Generated {
    let parts: Vec<Generated> = items
        .par_iter()
        .map(|item| generate_for_item(item, kg, config))
        .collect();
    let mut out = Generated::default();
    for p in parts {
        out.items.extend(p.items);
        out.records.extend(p.records);
        out.summary.synonym += p.summary.synonym;
        out.summary.definition += p.summary.definition;
        out.summary.attribute += p.summary.attribute;
        out.summary.skipped += p.summary.skipped;
    }
    out
}

/// Reads `input`, writes the perturbed dataset to `output` and the
/// provenance records to `sidecar` as JSON Lines.
pub fn generate_dataset(
    input: impl AsRef<Path>,
    output: impl AsRef<Path>,
    sidecar: impl AsRef<Path>,
    kg: &KnowledgeGraph,
    config: GenConfig,
) -> Result<GenSummary> {
    let source = SquadFile::load(input)?;
    let generated = generate(&source.items(), kg, config);
    let dataset = SquadFile::from_items(&generated.items);
    dataset
        .validate()
        .map_err(|reason| crate::error::ParseError::new(output.as_ref(), 0, reason))?;
    dataset.save(output)?;
    write_sidecar(sidecar, &generated.records)?;
    Ok(generated.summary)
}

pub fn write_sidecar(path: impl AsRef<Path>, records: &[PerturbationRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).expect("record serializes");
        buf.write_all(b"\n").expect("write to vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_sidecar(path: impl AsRef<Path>) -> Result<Vec<PerturbationRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| crate::error::ParseError::new(path, i + 1, e.to_string()).into())
        })
        .collect()
}
