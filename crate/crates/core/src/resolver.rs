//! Knowledge-augmented answering.
//!
//! A question is first gated on whether it mentions any relation label of
//! the graph. Closed gate: the reader's top answer is returned untouched.
//! Open gate: the commonsense subject is located among the reader's
//! candidates (falling back to the sentence most similar to the question)
//! and the object of the first triple whose label the question mentions is
//! returned.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{find_entity_mentions, splice_mention};
use crate::kg::{KnowledgeGraph, RelationKind, Triple};
use crate::reader::{AnswerCandidate, Reader, ReaderError, DEFAULT_TOP_K};
use crate::text::{content_words, split_sentences, token_strings, Sentence, Similarity, StopwordList};

/// Longest relation label, in tokens, that can open the gate.
pub const MAX_LABEL_TOKENS: usize = 3;

#[derive(Debug, Clone)]
pub struct ResolverConfig {
    pub top_k: usize,
    pub resolve_synonyms: bool,
    pub similarity: Similarity,
    pub stopwords: StopwordList,
}

impl Default for ResolverConfig {
    fn default() -> Self {
        Self {
            top_k: DEFAULT_TOP_K,
            resolve_synonyms: false,
            similarity: Similarity::Jaccard,
            stopwords: StopwordList::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Knowledge,
    Reader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubjectSource {
    Candidate,
    Sentence,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    /// Relation labels found in the question, in question order.
    pub gate: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject_source: Option<SubjectSource>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub triple: Option<Triple>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_sentence: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rewritten_question: Option<String>,
    pub candidates_examined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedAnswer {
    pub text: String,
    pub origin: Origin,
    pub trace: Trace,
}

#[derive(Debug, Error)]
pub enum ResolveError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("{source} (gate: {gate:?})")]
    Reader {
        #[source]
        source: ReaderError,
        gate: Vec<String>,
    },
}

/// Relation labels of `kg` that occur in the question as a token n-gram
/// (n ≤ 3), in order of first occurrence.
pub fn question_relation_gate(question: &str, kg: &KnowledgeGraph) -> Vec<String> {
    let tokens = token_strings(question);
    let mut found = Vec::new();
    let mut seen = BTreeSet::new();
    for i in 0..tokens.len() {
        for n in 1..=MAX_LABEL_TOKENS.min(tokens.len() - i) {
            let gram = tokens[i..i + n].join(" ");
            if kg.has_label(&gram) && seen.insert(gram.clone()) {
                found.push(gram);
            }
        }
    }
    found
}

/// The context sentence most similar to the question over content words.
/// Ties go to the earlier sentence.
pub fn select_target_sentence(
    context: &str,
    question: &str,
    stopwords: &StopwordList,
    similarity: Similarity,
) -> Result<(Sentence, f64), ResolveError> {
    if context.trim().is_empty() {
        return Err(ResolveError::EmptyInput("context"));
    }
    let q: Vec<String> = content_words(question, stopwords)
        .into_iter()
        .map(|t| t.surface)
        .collect();
    let mut best: Option<(Sentence, f64)> = None;
    for s in split_sentences(context) {
        let words: Vec<String> = content_words(&s.text, stopwords)
            .into_iter()
            .map(|t| t.surface)
            .collect();
        let score = similarity.score(&q, &words);
        if best.as_ref().is_none_or(|(_, b)| score > *b) {
            best = Some((s, score));
        }
    }
    best.ok_or(ResolveError::EmptyInput("context"))
}

/// Which subject was found, where, and how many candidates were scanned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedSubject {
    pub subject: String,
    pub source: SubjectSource,
    pub candidates_examined: usize,
}

/// First graph subject in the candidates (highest score first), else in the
/// target sentence.
pub fn select_subject(
    candidates: &[AnswerCandidate],
    target_sentence: &str,
    kg: &KnowledgeGraph,
) -> Option<SelectedSubject> {
    let mut ordered: Vec<&AnswerCandidate> = candidates.iter().collect();
    ordered.sort_by(|a, b| b.score.total_cmp(&a.score));
    for (i, c) in ordered.iter().enumerate() {
        if let Some((s, _)) = kg.subjects_in_text(&token_strings(&c.text)).first() {
            return Some(SelectedSubject {
                subject: s.to_string(),
                source: SubjectSource::Candidate,
                candidates_examined: i + 1,
            });
        }
    }
    kg.subjects_in_text(&token_strings(target_sentence))
        .first()
        .map(|(s, _)| SelectedSubject {
            subject: s.to_string(),
            source: SubjectSource::Sentence,
            candidates_examined: ordered.len(),
        })
}

fn rewrite_synonyms(question: &str, gate: &[String], kg: &KnowledgeGraph) -> Option<String> {
    for mention in find_entity_mentions(question, kg) {
        let hit = kg
            .triples_for_subject(&mention.subject)
            .find(|t| t.kind() == RelationKind::Synonym && gate.iter().any(|g| g == t.label()));
        if let Some(t) = hit {
            return Some(splice_mention(question, mention.range, &t.object, false));
        }
    }
    None
}

fn reader_answer(candidates: &[AnswerCandidate]) -> String {
    candidates.first().map(|c| c.text.clone()).unwrap_or_default()
}

/// Answers one question. See the module documentation for the procedure.
pub fn resolve(
    context: &str,
    question: &str,
    kg: &KnowledgeGraph,
    reader: &mut dyn Reader,
    config: &ResolverConfig,
) -> Result<ResolvedAnswer, ResolveError> {
    if context.trim().is_empty() {
        return Err(ResolveError::EmptyInput("context"));
    }
    if question.trim().is_empty() {
        return Err(ResolveError::EmptyInput("question"));
    }
    let gate = question_relation_gate(question, kg);
    let mut trace = Trace {
        gate: gate.clone(),
        ..Default::default()
    };
    let mut read = |q: &str| {
        reader
            .read(context, q, config.top_k)
            .map_err(|source| ResolveError::Reader {
                source,
                gate: gate.clone(),
            })
    };

    if gate.is_empty() {
        let candidates = read(question)?;
        trace.candidates_examined = candidates.len().min(1);
        return Ok(ResolvedAnswer {
            text: reader_answer(&candidates),
            origin: Origin::Reader,
            trace,
        });
    }

    let reader_question = if config.resolve_synonyms {
        rewrite_synonyms(question, &gate, kg)
    } else {
        None
    };
    let candidates = read(reader_question.as_deref().unwrap_or(question))?;
    trace.rewritten_question = reader_question;
    let (sentence, _) = select_target_sentence(context, question, &config.stopwords, config.similarity)?;
    trace.target_sentence = Some(sentence.text.clone());

    if let Some(sel) = select_subject(&candidates, &sentence.text, kg) {
        trace.candidates_examined = sel.candidates_examined;
        trace.subject = Some(sel.subject.clone());
        trace.subject_source = Some(sel.source);
        for label in &gate {
            if let Some(t) = kg.triples_for_subject(&sel.subject).find(|t| t.label() == label) {
                trace.matched_label = Some(label.clone());
                trace.triple = Some(t.clone());
                return Ok(ResolvedAnswer {
                    text: t.object.clone(),
                    origin: Origin::Knowledge,
                    trace,
                });
            }
        }
    } else {
        trace.candidates_examined = candidates.len();
    }
    Ok(ResolvedAnswer {
        text: reader_answer(&candidates),
        origin: Origin::Reader,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Relation;
    use crate::reader::LexicalReader;

    const FUJI: &str = "The top of Mount Fuji is covered with snow.";

    fn graph() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for t in [
            Triple::new("snow", Relation::attribute("color"), "white"),
            Triple::new("snow", Relation::attribute("temperature"), "cold"),
            Triple::new("laptop", Relation::synonym("computing devices"), "notebook"),
        ] {
            kg.insert(t).unwrap();
        }
        kg.freeze();
        kg
    }

    fn cand(text: &str, score: f64) -> AnswerCandidate {
        AnswerCandidate {
            text: text.into(),
            char_start: 0,
            char_end: text.chars().count(),
            score,
        }
    }

    fn run(question: &str, kg: &KnowledgeGraph) -> ResolvedAnswer {
        resolve(
            FUJI,
            question,
            kg,
            &mut LexicalReader::default(),
            &ResolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn gate_examples() {
        let kg = graph();
        assert_eq!(
            question_relation_gate("What color does the top of Mount Fuji have?", &kg),
            ["color"]
        );
        assert!(question_relation_gate("What does the top of Mount Fuji have?", &kg).is_empty());
        assert_eq!(
            question_relation_gate("Is the temperature or the color higher?", &kg),
            ["temperature", "color"]
        );
        assert_eq!(
            question_relation_gate("Which computing devices are sold?", &kg),
            ["computing devices"]
        );
    }

    #[test]
    fn target_sentence_selection() {
        let sw = StopwordList::default();
        let (s, _) = select_target_sentence(FUJI, "What color?", &sw, Similarity::Jaccard).unwrap();
        assert_eq!(s.text, FUJI);
        let ctx = "Paris is large. The top of Mount Fuji is covered with snow.";
        let (s, score) =
            select_target_sentence(ctx, "What does the top of Mount Fuji have?", &sw, Similarity::Jaccard).unwrap();
        assert_eq!(s.text, FUJI);
        assert!(score > 0.0);
        let (s, score) = select_target_sentence(ctx, "Who won?", &sw, Similarity::Jaccard).unwrap();
        assert_eq!(s.text, "Paris is large.");
        assert_eq!(score, 0.0);
        assert!(select_target_sentence("", "q", &sw, Similarity::Jaccard).is_err());
    }

    #[test]
    fn subject_selection() {
        let mut kg = graph();
        let sel = select_subject(&[cand("snow", 0.9), cand("covered", 0.8)], FUJI, &kg).unwrap();
        assert_eq!(sel.subject, "snow");
        assert_eq!(sel.source, SubjectSource::Candidate);
        assert!(select_subject(&[cand("river", 1.0)], "A calm river.", &kg).is_none());
        let sel = select_subject(&[cand("covered", 0.9)], FUJI, &kg).unwrap();
        assert_eq!((sel.subject.as_str(), sel.source), ("snow", SubjectSource::Sentence));

        kg = KnowledgeGraph::new();
        kg.insert(Triple::new("snow", Relation::attribute("color"), "white"))
            .unwrap();
        kg.insert(Triple::new("grass", Relation::attribute("color"), "green"))
            .unwrap();
        let sel = select_subject(&[cand("snow", 0.4), cand("grass", 0.7)], "", &kg).unwrap();
        assert_eq!(sel.subject, "grass");
    }

    #[test]
    fn knowledge_answers_color() {
        let r = run("What color does the top of Mount Fuji have?", &graph());
        assert_eq!(r.text, "white");
        assert_eq!(r.origin, Origin::Knowledge);
        assert_eq!(r.trace.matched_label.as_deref(), Some("color"));
        assert_eq!(r.trace.subject.as_deref(), Some("snow"));
        assert_eq!(r.trace.subject_source, Some(SubjectSource::Candidate));
        assert!(r.trace.triple.is_some());
    }

    #[test]
    fn closed_gate_returns_reader_answer() {
        let r = run("What does the top of Mount Fuji have?", &graph());
        assert_eq!(r.text, "snow");
        assert_eq!(r.origin, Origin::Reader);
        assert!(r.trace.gate.is_empty());
    }

    #[test]
    fn knowledge_answers_temperature() {
        let r = run("What temperature does the top of Mount Fuji have?", &graph());
        assert_eq!((r.text.as_str(), r.origin), ("cold", Origin::Knowledge));
    }

    #[test]
    fn gate_open_without_matching_triple_falls_back() {
        let mut kg = KnowledgeGraph::new();
        kg.insert(Triple::new("snow", Relation::attribute("color"), "white"))
            .unwrap();
        kg.insert(Triple::new("tower", Relation::attribute("height"), "tall"))
            .unwrap();
        // "height" opens the gate, but snow has no height triple
        let r = run("What height does the top of Mount Fuji have?", &kg);
        assert_eq!((r.text.as_str(), r.origin), ("snow", Origin::Reader));
        assert_eq!(r.trace.gate, ["height"]);
        assert_eq!(r.trace.subject.as_deref(), Some("snow"));
    }

    #[test]
    fn synonym_rewrite_is_opt_in() {
        let kg = graph();
        let ctx = "Henry bought a laptop because he writes code for computing devices.";
        let q = "Which notebook did Henry buy for computing devices?";
        let off = resolve(ctx, q, &kg, &mut LexicalReader::default(), &ResolverConfig::default()).unwrap();
        assert!(off.trace.rewritten_question.is_none());
        let config = ResolverConfig {
            resolve_synonyms: true,
            ..Default::default()
        };
        let on = resolve(ctx, q, &kg, &mut LexicalReader::default(), &config).unwrap();
        assert_eq!(
            on.trace.rewritten_question.as_deref(),
            Some("Which laptop did Henry buy for computing devices?")
        );
    }

    struct Failing;
    impl Reader for Failing {
        fn read(&mut self, _: &str, _: &str, _: usize) -> Result<Vec<AnswerCandidate>, ReaderError> {
            Err(ReaderError::Crashed("boom".into()))
        }
    }

    #[test]
    fn reader_errors_carry_gate() {
        let kg = graph();
        let err = resolve(FUJI, "What color is it?", &kg, &mut Failing, &ResolverConfig::default()).unwrap_err();
        match err {
            ResolveError::Reader { gate, .. } => assert_eq!(gate, ["color"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            resolve(FUJI, "", &kg, &mut Failing, &ResolverConfig::default()),
            Err(ResolveError::EmptyInput("question"))
        ));
    }

    #[test]
    fn trace_serializes() {
        let r = run("What color does the top of Mount Fuji have?", &graph());
        let json = serde_json::to_string(&r.trace).unwrap();
        assert!(json.contains(r#""matched_label":"color""#), "{json}");
    }
}
