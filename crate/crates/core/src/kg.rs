//! The commonsense knowledge graph: typed triples with subject and label
//! indexes, plus JSON Lines persistence.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::text::{normalize_term, token_strings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Attribute,
    Synonym,
    Definition,
}

impl RelationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationKind::Attribute => "attribute",
            RelationKind::Synonym => "synonym",
            RelationKind::Definition => "definition",
        }
    }
}

impl fmt::Display for RelationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Typed link between subject and object. For attributes the label is the
/// attribute word ("color"); for synonyms and definitions it is the context
/// in which the equivalence holds and may be empty.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub kind: RelationKind,
    pub label: String,
}

impl Relation {
    pub fn new(kind: RelationKind, label: &str) -> Self {
        Self {
            kind,
            label: normalize_term(label),
        }
    }

    pub fn attribute(label: &str) -> Self {
        Self::new(RelationKind::Attribute, label)
    }

    pub fn synonym(context: &str) -> Self {
        Self::new(RelationKind::Synonym, context)
    }

    pub fn definition(context: &str) -> Self {
        Self::new(RelationKind::Definition, context)
    }
}

/// One fact ⟨subject, relation, object⟩.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub subject: String,
    #[serde(flatten)]
    pub relation: Relation,
    pub object: String,
    pub provenance: String,
    pub weight: f64,
}

impl Triple {
    /// Builds a triple with normalized subject and object, weight 1 and no provenance.
    pub fn new(subject: &str, relation: Relation, object: &str) -> Self {
        Self {
            subject: normalize_term(subject),
            relation,
            object: normalize_term(object),
            provenance: String::new(),
            weight: 1.0,
        }
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into();
        self
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn kind(&self) -> RelationKind {
        self.relation.kind
    }

    pub fn label(&self) -> &str {
        &self.relation.label
    }

    fn key(&self) -> TripleKey {
        (
            self.subject.clone(),
            self.relation.kind,
            self.relation.label.clone(),
            self.object.clone(),
        )
    }

    fn reversed(&self) -> Triple {
        Triple {
            subject: self.object.clone(),
            relation: self.relation.clone(),
            object: self.subject.clone(),
            provenance: self.provenance.clone(),
            weight: self.weight,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidTriple(msg));
        for (name, value) in [
            ("subject", &self.subject),
            ("object", &self.object),
            ("label", &self.relation.label),
            ("provenance", &self.provenance),
        ] {
            if value.trim() != value {
                return invalid(format!("{name} {value:?} has surrounding whitespace"));
            }
        }
        if self.subject.is_empty() || self.object.is_empty() {
            return invalid("subject and object must be non-empty".into());
        }
        if self.subject == self.object {
            return invalid(format!("subject equals object ({:?})", self.subject));
        }
        if normalize_term(&self.subject) != self.subject
            || normalize_term(&self.object) != self.object
            || normalize_term(&self.relation.label) != self.relation.label
        {
            return invalid(format!(
                "({}, {}, {}) is not normalized",
                self.subject, self.relation.label, self.object
            ));
        }
        if token_strings(&self.subject).is_empty() {
            return invalid(format!("subject {:?} has no word characters", self.subject));
        }
        if self.relation.kind == RelationKind::Attribute && token_strings(&self.relation.label).len() != 1 {
            return invalid(format!(
                "attribute label {:?} must be a single word",
                self.relation.label
            ));
        }
        if !self.weight.is_finite() || self.weight < 0.0 {
            return invalid(format!("weight {} must be finite and >= 0", self.weight));
        }
        Ok(())
    }
}

type TripleKey = (String, RelationKind, String, String);

/// Where a graph subject occurs in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubjectMatch<'a> {
    pub subject: &'a str,
    /// Index of the first matching token.
    pub start: usize,
    /// Number of tokens matched.
    pub len: usize,
}

/// Deduplicated, insertion-ordered triple store.
///
/// Mutable while building; after [`KnowledgeGraph::freeze`] every insert is
/// rejected and the graph may be shared freely across threads.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    triples: Vec<Triple>,
    keys: HashMap<TripleKey, usize>,
    by_subject: HashMap<String, Vec<usize>>,
    by_label: HashMap<String, Vec<usize>>,
    // first token of a subject -> (subject tokens, subject)
    subject_tokens: HashMap<String, Vec<(Vec<String>, String)>>,
    frozen: bool,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.triples == other.triples
    }
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Inserts a triple, returning whether anything new was added.
    ///
    /// Synonyms are stored in both directions. A duplicate of an existing
    /// (subject, kind, label, object) keeps the larger weight.
    pub fn insert(&mut self, triple: Triple) -> Result<bool> {
        if self.frozen {
            return Err(Error::Frozen);
        }
        triple.validate()?;
        if triple.kind() == RelationKind::Synonym {
            let reverse = triple.reversed();
            let a = self.insert_one(triple);
            let b = self.insert_one(reverse);
            Ok(a || b)
        } else {
            Ok(self.insert_one(triple))
        }
    }

    fn insert_one(&mut self, triple: Triple) -> bool {
        let key = triple.key();
        if let Some(&id) = self.keys.get(&key) {
            let existing = &mut self.triples[id];
            if triple.weight > existing.weight {
                existing.weight = triple.weight;
            }
            return false;
        }
        let id = self.triples.len();
        self.keys.insert(key, id);
        if !self.by_subject.contains_key(&triple.subject) {
            let tokens = token_strings(&triple.subject);
            self.subject_tokens
                .entry(tokens[0].clone())
                .or_default()
                .push((tokens, triple.subject.clone()));
        }
        self.by_subject.entry(triple.subject.clone()).or_default().push(id);
        self.by_label.entry(triple.relation.label.clone()).or_default().push(id);
        self.triples.push(triple);
        true
    }

    /// Objects of all triples matching `(subject, label)`, in insertion order.
    pub fn lookup(&self, subject: &str, label: &str) -> Vec<&str> {
        self.triples_for_subject(subject)
            .filter(|t| t.label() == label)
            .map(|t| t.object.as_str())
            .collect()
    }

    pub fn triples_for_subject<'a>(&'a self, subject: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.by_subject
            .get(subject)
            .into_iter()
            .flatten()
            .map(move |&id| &self.triples[id])
    }

    pub fn triples_for_label<'a>(&'a self, label: &str) -> impl Iterator<Item = &'a Triple> + 'a {
        self.by_label
            .get(label)
            .into_iter()
            .flatten()
            .map(move |&id| &self.triples[id])
    }

    /// Insertion index of a triple, used as a stable tie-break.
    pub fn triple_id(&self, triple: &Triple) -> Option<usize> {
        self.keys.get(&triple.key()).copied()
    }

    pub fn has_subject(&self, subject: &str) -> bool {
        self.by_subject.contains_key(subject)
    }

    pub fn has_label(&self, label: &str) -> bool {
        self.by_label.contains_key(label)
    }

    pub fn subjects(&self) -> impl Iterator<Item = &str> {
        self.by_subject.keys().map(String::as_str)
    }

    pub fn relation_labels(&self) -> BTreeSet<&str> {
        self.by_label.keys().map(String::as_str).collect()
    }

    /// Every occurrence of every subject as a contiguous token run, ordered by
    /// start position then by length descending.
    pub fn subject_occurrences<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<SubjectMatch<'_>> {
        let mut found = Vec::new();
        for (start, token) in tokens.iter().enumerate() {
            let Some(candidates) = self.subject_tokens.get(token.as_ref()) else {
                continue;
            };
            for (seq, subject) in candidates {
                let end = start + seq.len();
                if end <= tokens.len() && seq.iter().zip(&tokens[start..end]).all(|(a, b)| a == b.as_ref()) {
                    found.push(SubjectMatch {
                        subject,
                        start,
                        len: seq.len(),
                    });
                }
            }
        }
        found.sort_by(|a, b| {
            a.start
                .cmp(&b.start)
                .then(b.len.cmp(&a.len))
                .then(a.subject.cmp(b.subject))
        });
        found
    }

    /// Each subject occurring in `tokens`, with the token index of its first
    /// occurrence. Ordered by position, then longer subjects first.
    pub fn subjects_in_text<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<(&str, usize)> {
        let mut seen = BTreeSet::new();
        self.subject_occurrences(tokens)
            .into_iter()
            .filter(|m| seen.insert(m.subject))
            .map(|m| (m.subject, m.start))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for t in &self.triples {
            serde_json::to_writer(&mut *w, t)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Loads a JSON Lines triple file. Blank lines are ignored.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, path)
    }

    pub fn parse_jsonl(text: &str, source: impl AsRef<Path>) -> Result<Self> {
        let mut kg = KnowledgeGraph::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: TripleRecord =
                serde_json::from_str(line).map_err(|e| ParseError::new(&source, i + 1, e.to_string()))?;
            let triple = Triple {
                subject: record.subject,
                relation: Relation {
                    kind: record.kind,
                    label: record.label,
                },
                object: record.object,
                provenance: record.provenance,
                weight: record.weight,
            };
            kg.insert(triple).map_err(|e| match e {
                Error::InvalidTriple(msg) => Error::Parse(ParseError::new(&source, i + 1, msg)),
                other => other,
            })?;
        }
        Ok(kg)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TripleRecord {
    subject: String,
    kind: RelationKind,
    #[serde(default)]
    label: String,
    object: String,
    #[serde(default)]
    provenance: String,
    #[serde(default = "default_weight")]
    weight: f64,
}

fn default_weight() -> f64 {
    1.0
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn fixture_graph() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        for t in [
            Triple::new("snow", Relation::attribute("color"), "white"),
            Triple::new("snow", Relation::attribute("temperature"), "cold"),
            Triple::new("laptop", Relation::synonym("computing devices"), "notebook"),
            Triple::new("decade", Relation::definition(""), "a period of ten years"),
            Triple::new("mount fuji", Relation::attribute("height"), "3776 metres"),
        ] {
            kg.insert(t).unwrap();
        }
        kg
    }

    #[test]
    fn lookup_attribute() {
        let kg = fixture_graph();
        assert_eq!(kg.lookup("snow", "color"), ["white"]);
        assert_eq!(kg.lookup("snow", "temperature"), ["cold"]);
        assert!(KnowledgeGraph::new().lookup("snow", "color").is_empty());
        assert!(kg.lookup("white", "color").is_empty());
    }

    #[test]
    fn duplicate_insert_is_noop() {
        let mut kg = KnowledgeGraph::new();
        let t = Triple::new("snow", Relation::attribute("color"), "white");
        assert!(kg.insert(t.clone()).unwrap());
        assert!(!kg.insert(t.clone().with_weight(3.0)).unwrap());
        assert_eq!(kg.len(), 1);
        assert_eq!(kg.triples()[0].weight, 3.0);
        assert!(!kg.insert(t.with_weight(0.5)).unwrap());
        assert_eq!(kg.triples()[0].weight, 3.0);
    }

    #[test]
    fn synonyms_are_symmetric() {
        let kg = fixture_graph();
        assert_eq!(kg.lookup("laptop", "computing devices"), ["notebook"]);
        assert_eq!(kg.lookup("notebook", "computing devices"), ["laptop"]);
    }

    #[test]
    fn invalid_triples_rejected() {
        let mut kg = KnowledgeGraph::new();
        for t in [
            Triple::new("snow", Relation::attribute("color"), "snow"),
            Triple::new("", Relation::attribute("color"), "white"),
            Triple::new("snow", Relation::attribute("color"), ""),
            Triple::new("snow", Relation::attribute("light color"), "white"),
            Triple::new("snow", Relation::attribute(""), "white"),
            Triple::new("snow", Relation::attribute("color"), "white").with_weight(-1.0),
            Triple::new("snow", Relation::attribute("color"), "white").with_weight(f64::NAN),
        ] {
            assert!(matches!(kg.insert(t), Err(Error::InvalidTriple(_))));
        }
        let raw = Triple {
            subject: "Snow".into(),
            relation: Relation::attribute("color"),
            object: "white".into(),
            provenance: String::new(),
            weight: 1.0,
        };
        assert!(kg.insert(raw).is_err());
        assert!(kg.is_empty());
    }

    #[test]
    fn frozen_graph_rejects_inserts() {
        let mut kg = fixture_graph();
        kg.freeze();
        let t = Triple::new("ice", Relation::attribute("color"), "blue");
        assert!(matches!(kg.insert(t), Err(Error::Frozen)));
    }

    #[test]
    fn subject_triples_in_order() {
        let kg = fixture_graph();
        let labels: Vec<_> = kg.triples_for_subject("snow").map(|t| t.label()).collect();
        assert_eq!(labels, ["color", "temperature"]);
        assert_eq!(kg.triples_for_subject("unknown").count(), 0);
        // only an object of a directed triple
        assert_eq!(kg.triples_for_subject("white").count(), 0);
    }

    #[test]
    fn subjects_found_in_text() {
        let kg = fixture_graph();
        let tokens = token_strings("covered with snow");
        assert_eq!(kg.subjects_in_text(&tokens), [("snow", 2)]);
        let empty: [&str; 0] = [];
        assert!(kg.subjects_in_text(&empty).is_empty());
        let tokens = token_strings("The top of Mount Fuji is covered with snow");
        assert_eq!(kg.subjects_in_text(&tokens), [("mount fuji", 3), ("snow", 8)]);
    }

    #[test]
    fn longer_subject_first_at_same_position() {
        let mut kg = fixture_graph();
        kg.insert(Triple::new("mount", Relation::attribute("size"), "big"))
            .unwrap();
        let tokens = token_strings("mount fuji");
        assert_eq!(kg.subjects_in_text(&tokens), [("mount fuji", 0), ("mount", 0)]);
    }

    #[test]
    fn label_universe() {
        let kg = fixture_graph();
        let labels: Vec<_> = kg.relation_labels().into_iter().collect();
        assert_eq!(labels, ["", "color", "computing devices", "height", "temperature"]);
        assert!(KnowledgeGraph::new().relation_labels().is_empty());
        let mut one = KnowledgeGraph::new();
        one.insert(Triple::new("snow", Relation::attribute("color"), "white"))
            .unwrap();
        assert_eq!(one.relation_labels().len(), 1);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kg.jsonl");
        let kg = fixture_graph();
        kg.save(&path).unwrap();
        let loaded = KnowledgeGraph::load(&path).unwrap();
        assert_eq!(loaded, kg);
        let first = fs::read_to_string(&path).unwrap().lines().next().map(str::to_owned);
        assert_eq!(
            first.as_deref(),
            Some(
                r#"{"subject":"snow","kind":"attribute","label":"color","object":"white","provenance":"","weight":1.0}"#
            )
        );
    }

    #[test]
    fn load_rejects_missing_object() {
        let text = "{\"subject\":\"snow\",\"kind\":\"attribute\",\"label\":\"color\",\"object\":\"white\"}\n\
                    {\"subject\":\"snow\",\"kind\":\"attribute\",\"label\":\"color\"}\n";
        match KnowledgeGraph::parse_jsonl(text, "g.jsonl") {
            Err(Error::Parse(e)) => {
                assert_eq!(e.line, 2);
                assert!(e.reason.contains("object"), "{}", e.reason);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn load_rejects_unknown_fields() {
        let text = r#"{"subject":"snow","kind":"attribute","label":"color","object":"white","extra":1}"#;
        assert!(matches!(
            KnowledgeGraph::parse_jsonl(text, "g.jsonl"),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn load_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        fs::write(&path, "").unwrap();
        assert!(KnowledgeGraph::load(&path).unwrap().is_empty());
    }

    fn check_indexes(kg: &KnowledgeGraph) -> std::result::Result<(), TestCaseError> {
        for (id, t) in kg.triples.iter().enumerate() {
            prop_assert!(kg.by_subject[&t.subject].contains(&id));
            prop_assert!(kg.by_label[t.label()].contains(&id));
        }
        let subject_total: usize = kg.by_subject.values().map(Vec::len).sum();
        let label_total: usize = kg.by_label.values().map(Vec::len).sum();
        prop_assert_eq!(subject_total, kg.len());
        prop_assert_eq!(label_total, kg.len());
        Ok(())
    }

    fn arb_triple() -> impl Strategy<Value = Triple> {
        let word = prop::sample::select(vec!["snow", "white", "ice", "cold", "sky", "blue", "mount fuji"]);
        let label = prop::sample::select(vec!["color", "temperature", "computing devices", ""]);
        (word.clone(), 0..3u8, label, word, 0u32..4).prop_map(|(s, k, l, o, w)| {
            let relation = match k {
                0 => Relation::attribute(if l.contains(' ') || l.is_empty() { "size" } else { l }),
                1 => Relation::synonym(l),
                _ => Relation::definition(l),
            };
            Triple::new(s, relation, o).with_weight(w as f64 * 0.5)
        })
    }

    proptest! {
        #[test]
        fn invariants_hold_after_inserts(triples in prop::collection::vec(arb_triple(), 0..30)) {
            let mut kg = KnowledgeGraph::new();
            for t in triples {
                let _ = kg.insert(t);
            }
            check_indexes(&kg)?;
            let keys: BTreeSet<_> = kg.triples.iter().map(Triple::key).collect();
            prop_assert_eq!(keys.len(), kg.len());
            for t in kg.triples() {
                if t.kind() == RelationKind::Synonym {
                    prop_assert!(kg.keys.contains_key(&t.reversed().key()));
                }
                let objects: Vec<&str> = kg.triples_for_subject(&t.subject).map(|x| x.object.as_str()).collect();
                for o in kg.lookup(&t.subject, t.label()) {
                    prop_assert!(objects.contains(&o));
                }
            }
            let text = {
                let mut buf = Vec::new();
                kg.write_jsonl(&mut buf).unwrap();
                String::from_utf8(buf).unwrap()
            };
            let loaded = KnowledgeGraph::parse_jsonl(&text, "mem").unwrap();
            prop_assert_eq!(loaded.triples(), kg.triples());
        }
    }
}
