//! Knowledge graph construction from offline snapshots: a SQuAD-format
//! dataset (subject extraction), a related-term edge CSV, a term definition
//! TSV and a synonym/definition lexicon TSV.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::kg::{KnowledgeGraph, Relation, RelationKind, Triple};
use crate::squad::SquadFile;
use crate::text::{content_words, find_token_run, normalize_term, split_sentences, token_strings, StopwordList};

/// Term → definition text, standing in for the first paragraph of an
/// encyclopedia article or a dictionary gloss.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DefinitionSnapshot {
    defs: BTreeMap<String, String>,
}

impl DefinitionSnapshot {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a definition. The first definition seen for a term wins.
    pub fn insert(&mut self, term: &str, definition: &str) {
        let definition = definition.trim();
        if definition.is_empty() {
            return;
        }
        self.defs
            .entry(normalize_term(term))
            .or_insert_with(|| definition.to_string());
    }

    pub fn get(&self, term: &str) -> Option<&str> {
        self.defs.get(term).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.defs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    /// Reads `term <TAB> definition` lines. Blank lines and `#` comments are skipped.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut snap = Self::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((term, def)) = line.split_once('\t') else {
                return Err(ParseError::new(path, i + 1, "expected `term<TAB>definition`").into());
            };
            if term.trim().is_empty() {
                return Err(ParseError::new(path, i + 1, "field term: empty").into());
            }
            if def.trim().is_empty() {
                return Err(ParseError::new(path, i + 1, "field definition: empty").into());
            }
            snap.insert(term, def);
        }
        Ok(snap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelatedTermEdge {
    pub term_a: String,
    pub term_b: String,
    pub weight: f64,
}

/// Closed list of attribute words a derived relation may take.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeVocabulary {
    words: Vec<String>,
}

impl Default for AttributeVocabulary {
    fn default() -> Self {
        Self {
            words: [
                "color",
                "temperature",
                "size",
                "shape",
                "taste",
                "material",
                "weight",
                "height",
                "speed",
                "smell",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

impl AttributeVocabulary {
    /// Builds a vocabulary, rejecting empty lists and multi-word entries.
    pub fn new<I, S>(words: I) -> std::result::Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut out: Vec<String> = Vec::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if token_strings(&w) != [w.clone()] {
                return Err(format!("attribute word {w:?} is not a single token"));
            }
            if !out.contains(&w) {
                out.push(w);
            }
        }
        if out.is_empty() {
            return Err("attribute vocabulary is empty".into());
        }
        Ok(Self { words: out })
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.iter().any(|w| w == word)
    }

    fn rank(&self, word: &str) -> Option<usize> {
        self.words.iter().position(|w| w == word)
    }
}

/// Content words of questions and gold answers whose document frequency
/// (number of articles containing them) is at least `min_df`. Sorted by
/// descending frequency, then alphabetically.
pub fn extract_subjects(squad: &SquadFile, min_df: usize, stopwords: &StopwordList) -> Vec<String> {
    let min_df = min_df.max(1);
    let mut df: HashMap<String, usize> = HashMap::new();
    for article in &squad.data {
        let mut seen = HashSet::new();
        for qa in article.paragraphs.iter().flat_map(|p| &p.qas) {
            let texts = std::iter::once(qa.question.as_str()).chain(qa.answers.iter().map(|a| a.text.as_str()));
            for text in texts {
                for t in content_words(text, stopwords) {
                    seen.insert(t.surface);
                }
            }
        }
        for w in seen {
            *df.entry(w).or_insert(0) += 1;
        }
    }
    let mut subjects: Vec<(String, usize)> = df.into_iter().filter(|(_, n)| *n >= min_df).collect();
    subjects.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    subjects.into_iter().map(|(w, _)| w).collect()
}

pub fn extract_subjects_from_file(
    path: impl AsRef<Path>,
    min_df: usize,
    stopwords: &StopwordList,
) -> Result<Vec<String>> {
    Ok(extract_subjects(&SquadFile::load(path)?, min_df, stopwords))
}

#[derive(Deserialize)]
struct EdgeRow {
    term_a: String,
    term_b: String,
    weight: f64,
}

/// Reads a `term_a,term_b,weight` CSV and keeps normalized, deduplicated edges
/// whose `term_a` is a subject. With `subjects == None` every edge is kept.
pub fn ingest_related_terms(
    path: impl AsRef<Path>,
    subjects: Option<&HashSet<String>>,
) -> Result<Vec<RelatedTermEdge>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut edges: Vec<RelatedTermEdge> = Vec::new();
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let mut record = csv::StringRecord::new();
    while reader.read_record(&mut record).map_err(|e| csv_error(path, e))? {
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row: EdgeRow = record.deserialize(Some(&headers)).map_err(|e| csv_error(path, e))?;
        let term_a = normalize_term(&row.term_a);
        let term_b = normalize_term(&row.term_b);
        if !row.weight.is_finite() || row.weight < 0.0 {
            return Err(ParseError::new(
                path,
                line,
                format!("negative or non-finite weight for {term_a},{term_b}"),
            )
            .into());
        }
        if term_a.is_empty() || term_b.is_empty() || term_a == term_b {
            continue;
        }
        if subjects.is_some_and(|s| !s.contains(&term_a)) {
            continue;
        }
        match index.get(&(term_a.clone(), term_b.clone())) {
            Some(&i) => edges[i].weight = edges[i].weight.max(row.weight),
            None => {
                index.insert((term_a.clone(), term_b.clone()), edges.len());
                edges.push(RelatedTermEdge {
                    term_a,
                    term_b,
                    weight: row.weight,
                });
            }
        }
    }
    Ok(edges)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    ParseError::new(path, line, e.to_string()).into()
}

/// Names the attribute linking `subject` to `object`, if the definitions
/// support one.
///
/// The object's definition is scanned sentence by sentence; in sentences
/// that mention the subject, the earliest vocabulary word wins. If that
/// yields nothing, the vocabulary word shared by both definitions with the
/// highest combined count wins, ties broken by vocabulary order.
pub fn derive_attribute_relation(
    subject: &str,
    object: &str,
    defs: &DefinitionSnapshot,
    vocab: &AttributeVocabulary,
    stopwords: &StopwordList,
) -> Option<String> {
    let subject_tokens = token_strings(subject);
    let eligible = |w: &str| vocab.contains(w) && !stopwords.contains(w) && w != subject && w != object;

    let object_def = defs.get(object);
    if let Some(def) = object_def {
        for sentence in split_sentences(def) {
            let tokens = token_strings(&sentence.text);
            if find_token_run(&tokens, &subject_tokens).is_empty() {
                continue;
            }
            if let Some(w) = tokens.iter().find(|w| eligible(w)) {
                return Some(w.clone());
            }
        }
    }

    let (subject_def, object_def) = (defs.get(subject)?, object_def?);
    let count = |def: &str| {
        let mut m: HashMap<String, usize> = HashMap::new();
        for t in content_words(def, stopwords) {
            if eligible(&t.surface) {
                *m.entry(t.surface).or_insert(0) += 1;
            }
        }
        m
    };
    let a = count(subject_def);
    let b = count(object_def);
    a.iter()
        .filter_map(|(w, n)| b.get(w).map(|m| (w, n + m)))
        .min_by_key(|(w, n)| (std::cmp::Reverse(*n), vocab.rank(w)))
        .map(|(w, _)| w.clone())
}

/// Reads `head <TAB> kind <TAB> tail [<TAB> context]` rows where kind is
/// `synonym` or `definition`. Blank lines and `#` comments are skipped.
pub fn ingest_lexicon(path: impl AsRef<Path>) -> Result<Vec<Triple>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let provenance = path.display().to_string();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |field: &str, reason: String| -> Error {
            ParseError::new(path, i + 1, format!("field {field}: {reason}")).into()
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if !(3..=4).contains(&fields.len()) {
            return Err(err(
                "row",
                format!("expected 3 or 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let kind = match fields[1].trim().to_lowercase().as_str() {
            "synonym" => RelationKind::Synonym,
            "definition" => RelationKind::Definition,
            other => return Err(err("kind", format!("unknown relation kind {other:?}"))),
        };
        let head = normalize_term(fields[0]);
        let tail = normalize_term(fields[2]);
        if head.is_empty() {
            return Err(err("head", "empty".into()));
        }
        if tail.is_empty() {
            return Err(err("tail", "empty".into()));
        }
        if head == tail {
            return Err(err("tail", format!("equals head {head:?}")));
        }
        let context = fields.get(3).copied().unwrap_or("");
        let triple = Triple::new(&head, Relation::new(kind, context), &tail).with_provenance(provenance.clone());
        triple.validate().map_err(|e| err("head", e.to_string()))?;
        out.push(triple);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct BuildConfig {
    /// SQuAD-format dataset subjects are drawn from. Without it, edges are
    /// not filtered by subject.
    pub squad: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub definitions: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub min_df: usize,
    pub vocabulary: AttributeVocabulary,
    pub stopwords: StopwordList,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            squad: None,
            edges: None,
            definitions: None,
            lexicon: None,
            min_df: 3,
            vocabulary: AttributeVocabulary::default(),
            stopwords: StopwordList::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub attribute: usize,
    pub synonym: usize,
    pub definition: usize,
    pub dropped_edges: usize,
}

impl BuildReport {
    fn count(kg: &KnowledgeGraph, dropped_edges: usize) -> Self {
        let mut report = BuildReport {
            dropped_edges,
            ..Default::default()
        };
        for t in kg.triples() {
            match t.kind() {
                RelationKind::Attribute => report.attribute += 1,
                RelationKind::Synonym => report.synonym += 1,
                RelationKind::Definition => report.definition += 1,
            }
        }
        report
    }
}

/// Runs the full ingestion pipeline and returns a frozen graph.
pub fn build_graph(config: &BuildConfig) -> Result<(KnowledgeGraph, BuildReport)> {
    let subjects: Option<HashSet<String>> = match &config.squad {
        Some(path) => Some(
            extract_subjects_from_file(path, config.min_df, &config.stopwords)?
                .into_iter()
                .collect(),
        ),
        None => None,
    };
    let defs = match &config.definitions {
        Some(path) => DefinitionSnapshot::load(path)?,
        None => DefinitionSnapshot::new(),
    };
    let lexicon = match &config.lexicon {
        Some(path) => ingest_lexicon(path)?,
        None => Vec::new(),
    };

    let mut kg = KnowledgeGraph::new();
    let mut dropped = 0;
    if let Some(edge_path) = &config.edges {
        let edges = ingest_related_terms(edge_path, subjects.as_ref())?;
        let provenance = edge_path.display().to_string();
        let derived: Vec<Option<String>> = edges
            .par_iter()
            .map(|e| derive_attribute_relation(&e.term_a, &e.term_b, &defs, &config.vocabulary, &config.stopwords))
            .collect();
        for (edge, label) in edges.iter().zip(derived) {
            match label {
                Some(label) => {
                    let t = Triple::new(&edge.term_a, Relation::attribute(&label), &edge.term_b)
                        .with_provenance(provenance.clone())
                        .with_weight(edge.weight);
                    kg.insert(t)?;
                }
                None => {
                    log::debug!("no attribute relation for {} -> {}", edge.term_a, edge.term_b);
                    dropped += 1;
                }
            }
        }
    }
    for t in lexicon {
        kg.insert(t)?;
    }
    kg.freeze();
    let report = BuildReport::count(&kg, dropped);
    Ok((kg, report))
}
