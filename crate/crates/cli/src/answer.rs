//! Batch answering with a bounded worker pool, partial-progress manifests
//! and resumption.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use cskg_core::reader::{ExternalReader, LexicalReader, Reader, ReaderError};
use cskg_core::resolver::{resolve, ResolveError, ResolvedAnswer, ResolverConfig};
use cskg_core::{KnowledgeGraph, QaItem};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};

use crate::exit::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ReaderSpec {
    Lexical,
    Command(String),
}

impl ReaderSpec {
    pub fn parse(spec: &str) -> Self {
        match spec.trim() {
            "lexical" => ReaderSpec::Lexical,
            other => ReaderSpec::Command(other.to_string()),
        }
    }

    fn instantiate(&self, config: &ResolverConfig, timeout: Duration) -> Result<Box<dyn Reader>, ReaderError> {
        Ok(match self {
            ReaderSpec::Lexical => Box::new(LexicalReader::new(config.stopwords.clone(), config.similarity)),
            ReaderSpec::Command(cmd) => Box::new(ExternalReader::spawn(cmd, timeout)?),
        })
    }
}

pub struct AnswerJob<'a> {
    pub items: &'a [QaItem],
    pub kg: &'a KnowledgeGraph,
    pub resolver: &'a ResolverConfig,
    pub reader: ReaderSpec,
    pub timeout: Duration,
    pub workers: usize,
}

/// Result of a run: one slot per item, `None` where the item was not answered.
pub struct Outcome {
    pub answers: Vec<Option<ResolvedAnswer>>,
    pub failure: Option<(String, ResolveError)>,
}

/// Answers the items at `todo` (indices into `job.items`). Workers pull
/// items in index order and stop taking new ones after the first reader
/// failure. Each worker owns its reader.
pub fn run(job: &AnswerJob<'_>, todo: &[usize]) -> Outcome {
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let answers: Mutex<Vec<Option<ResolvedAnswer>>> = Mutex::new(vec![None; job.items.len()]);
    let failure: Mutex<Option<(usize, String, ResolveError)>> = Mutex::new(None);
    let record_failure = |pos: usize, id: &str, err: ResolveError| {
        stop.store(true, Ordering::SeqCst);
        let mut slot = failure.lock().unwrap();
        if slot.as_ref().is_none_or(|(p, _, _)| pos < *p) {
            *slot = Some((pos, id.to_string(), err));
        }
    };

    let workers = job.workers.clamp(1, todo.len().max(1));
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| {
                let mut reader: Option<Box<dyn Reader>> = None;
                loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let pos = next.fetch_add(1, Ordering::SeqCst);
                    let Some(&idx) = todo.get(pos) else { break };
                    let item = &job.items[idx];
                    if reader.is_none() {
                        match job.reader.instantiate(job.resolver, job.timeout) {
                            Ok(r) => reader = Some(r),
                            Err(source) => {
                                record_failure(
                                    pos,
                                    &item.id,
                                    ResolveError::Reader {
                                        source,
                                        gate: Vec::new(),
                                    },
                                );
                                break;
                            }
                        }
                    }
                    let r = reader.as_mut().expect("reader instantiated");
                    match resolve(&item.context, &item.question, job.kg, r.as_mut(), job.resolver) {
                        Ok(answer) => answers.lock().unwrap()[idx] = Some(answer),
                        Err(err) => {
                            record_failure(pos, &item.id, err);
                            break;
                        }
                    }
                }
            });
        }
    });

    Outcome {
        answers: answers.into_inner().unwrap(),
        failure: failure.into_inner().unwrap().map(|(_, id, e)| (id, e)),
    }
}

/// Predictions in dataset order, serialized as a JSON object.
pub struct OrderedPredictions<'a>(pub &'a [(String, String)]);

impl Serialize for OrderedPredictions<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub total: usize,
    pub completed: Vec<String>,
    pub failed_id: Option<String>,
    pub error: Option<String>,
}

pub fn manifest_path(predictions: &Path) -> PathBuf {
    let mut name = predictions.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    predictions.with_file_name(name)
}

#[derive(Debug, Serialize)]
struct TraceLine<'a> {
    id: &'a str,
    question: &'a str,
    #[serde(flatten)]
    answer: &'a ResolvedAnswer,
}

pub fn trace_line(item: &QaItem, answer: &ResolvedAnswer) -> String {
    serde_json::to_string(&TraceLine {
        id: &item.id,
        question: &item.question,
        answer,
    })
    .expect("trace serializes")
}

/// Trace lines of an earlier run, keyed by id.
pub fn read_traces(path: &Path) -> Result<HashMap<String, String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let id = value
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| CliError::Parse(format!("{}:{}: trace without id", path.display(), i + 1)))?;
        out.insert(id.to_string(), line.to_string());
    }
    Ok(out)
}

pub fn read_previous_predictions(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    Ok(cskg_core::eval::load_predictions(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use cskg_core::kg::Relation;
    use cskg_core::squad::AnswerSpan;
    use cskg_core::Triple;

    fn items(n: usize) -> Vec<QaItem> {
        (0..n)
            .map(|i| QaItem {
                id: format!("q{i}"),
                title: "t".into(),
                context: "The top of Mount Fuji is covered with snow.".into(),
                question: if i % 2 == 0 {
                    "What color does the top of Mount Fuji have?".into()
                } else {
                    "What covers the top of Mount Fuji?".into()
                },
                answers: vec![AnswerSpan {
                    text: "snow".into(),
                    answer_start: 38,
                }],
                knowledge_required: false,
                article: 0,
            })
            .collect()
    }

    fn graph() -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new();
        kg.insert(Triple::new("snow", Relation::attribute("color"), "white"))
            .unwrap();
        kg.freeze();
        kg
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let items = items(17);
        let kg = graph();
        let resolver = ResolverConfig::default();
        let todo: Vec<usize> = (0..items.len()).collect();
        let texts = |workers| {
            let job = AnswerJob {
                items: &items,
                kg: &kg,
                resolver: &resolver,
                reader: ReaderSpec::Lexical,
                timeout: Duration::from_secs(1),
                workers,
            };
            let out = run(&job, &todo);
            assert!(out.failure.is_none());
            out.answers.into_iter().map(|a| a.unwrap().text).collect::<Vec<_>>()
        };
        let one = texts(1);
        assert_eq!(one[0], "white");
        assert_eq!(one[1], "snow");
        assert_eq!(texts(4), one);
        assert_eq!(texts(64), one);
    }

    #[test]
    fn skipped_indices_stay_empty() {
        let items = items(4);
        let kg = graph();
        let resolver = ResolverConfig::default();
        let job = AnswerJob {
            items: &items,
            kg: &kg,
            resolver: &resolver,
            reader: ReaderSpec::Lexical,
            timeout: Duration::from_secs(1),
            workers: 2,
        };
        let out = run(&job, &[1, 3]);
        assert!(out.answers[0].is_none() && out.answers[2].is_none());
        assert!(out.answers[1].is_some() && out.answers[3].is_some());
    }

    #[test]
    fn unspawnable_reader_fails_first_item() {
        let items = items(3);
        let kg = graph();
        let resolver = ResolverConfig::default();
        let job = AnswerJob {
            items: &items,
            kg: &kg,
            resolver: &resolver,
            reader: ReaderSpec::parse("/nonexistent/reader"),
            timeout: Duration::from_secs(1),
            workers: 1,
        };
        let out = run(&job, &[0, 1, 2]);
        let (id, err) = out.failure.unwrap();
        assert_eq!(id, "q0");
        assert_eq!(CliError::from(err).code(), 3);
        assert!(out.answers.iter().all(Option::is_none));
    }

    #[test]
    fn ordered_predictions_keep_order() {
        let preds = vec![("b".to_string(), "1".to_string()), ("a".to_string(), "2".to_string())];
        assert_eq!(
            serde_json::to_string(&OrderedPredictions(&preds)).unwrap(),
            r#"{"b":"1","a":"2"}"#
        );
    }

    #[test]
    fn manifest_sits_next_to_predictions() {
        assert_eq!(
            manifest_path(Path::new("out/preds.json")),
            PathBuf::from("out/preds.json.manifest.json")
        );
    }
}
