//! Extractive readers: a deterministic lexical baseline and a client for
//! external readers that speak newline-delimited JSON over stdio.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{char_slice, content_words, find_char_offset, split_sentences, tokenize, Similarity, StopwordList};

pub const DEFAULT_TOP_K: usize = 20;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const PING_ID: &str = "__ping__";

/// An extractive answer. `text` equals the context slice
/// `[char_start, char_end)` counted in characters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerCandidate {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReaderRequest {
    pub id: String,
    pub question: String,
    pub context: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderResponse {
    pub id: String,
    pub answers: Vec<AnswerCandidate>,
}

#[derive(Debug, Error)]
pub enum ReaderError {
    #[error("empty {0}")]
    EmptyInput(&'static str),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("reader did not answer within {0:?}")]
    Timeout(Duration),
    #[error("reader process failed: {0}")]
    Crashed(String),
}

/// Anything that maps (context, question) to ranked answer candidates.
pub trait Reader {
    fn read(&mut self, context: &str, question: &str, top_k: usize) -> Result<Vec<AnswerCandidate>, ReaderError>;
}

/// Sentence-overlap baseline. See [`lexical_read`].
#[derive(Debug, Clone, Default)]
pub struct LexicalReader {
    pub stopwords: StopwordList,
    pub similarity: Similarity,
}

impl LexicalReader {
    pub fn new(stopwords: StopwordList, similarity: Similarity) -> Self {
        Self { stopwords, similarity }
    }
}

impl Reader for LexicalReader {
    fn read(&mut self, context: &str, question: &str, top_k: usize) -> Result<Vec<AnswerCandidate>, ReaderError> {
        lexical_read_with(context, question, top_k, &self.stopwords, self.similarity)
    }
}

/// [`lexical_read_with`] using Jaccard similarity.
pub fn lexical_read(
    context: &str,
    question: &str,
    top_k: usize,
    stopwords: &StopwordList,
) -> Result<Vec<AnswerCandidate>, ReaderError> {
    lexical_read_with(context, question, top_k, stopwords, Similarity::Jaccard)
}

/// Baseline reader.
///
/// Sentences are ranked by similarity between their content words and the
/// question's (earlier sentence wins ties). Candidates are the maximal runs
/// of consecutive tokens in the best sentence that are neither stopwords nor
/// question words; a run also breaks at punctuation other than `-` or `'`.
/// Each scores `sentence similarity + 0.001 * run length`; equal scores
/// favour the later run. If the best sentence yields nothing, the next
/// ranked sentence is tried, and as a last resort question words are
/// allowed in runs.
pub fn lexical_read_with(
    context: &str,
    question: &str,
    top_k: usize,
    stopwords: &StopwordList,
    similarity: Similarity,
) -> Result<Vec<AnswerCandidate>, ReaderError> {
    if context.trim().is_empty() {
        return Err(ReaderError::EmptyInput("context"));
    }
    if question.trim().is_empty() {
        return Err(ReaderError::EmptyInput("question"));
    }
    let top_k = top_k.max(1);
    let question_words: Vec<String> = content_words(question, stopwords)
        .into_iter()
        .map(|t| t.surface)
        .collect();
    let question_set: HashSet<&str> = question_words.iter().map(String::as_str).collect();

    let mut ranked: Vec<(usize, f64, crate::text::Sentence)> = split_sentences(context)
        .into_iter()
        .enumerate()
        .map(|(i, s)| {
            let words: Vec<String> = content_words(&s.text, stopwords)
                .into_iter()
                .map(|t| t.surface)
                .collect();
            (i, similarity.score(&question_words, &words), s)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    for exclude_question_words in [true, false] {
        for (_, score, sentence) in &ranked {
            let mut candidates = sentence_runs(context, sentence, stopwords, |w| {
                exclude_question_words && question_set.contains(w)
            })
            .into_iter()
            .map(|(start, end)| AnswerCandidate {
                text: char_slice(context, start..end).to_string(),
                char_start: start,
                char_end: end,
                score: score + 0.001 * run_len(context, start, end) as f64,
            })
            .collect::<Vec<_>>();
            if candidates.is_empty() {
                continue;
            }
            candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then(b.char_start.cmp(&a.char_start)));
            candidates.truncate(top_k);
            return Ok(candidates);
        }
    }
    Ok(Vec::new())
}

fn run_len(context: &str, start: usize, end: usize) -> usize {
    tokenize(char_slice(context, start..end)).len()
}

/// Character spans of candidate runs inside `sentence`, in context offsets.
fn sentence_runs(
    context: &str,
    sentence: &crate::text::Sentence,
    stopwords: &StopwordList,
    excluded: impl Fn(&str) -> bool,
) -> Vec<(usize, usize)> {
    let tokens = tokenize(&sentence.text);
    let offset = sentence.range.start;
    let mut runs = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    let mut prev_end = 0;
    for t in &tokens {
        let keep = !stopwords.contains(&t.surface) && !excluded(&t.surface);
        let gap = char_slice(&sentence.text, prev_end..t.char_start);
        let joined = gap
            .chars()
            .all(|c| c.is_whitespace() || c == '-' || c == '\'' || c == '’');
        match (&mut current, keep) {
            (Some((_, end)), true) if joined => *end = offset + t.char_end,
            (_, true) => {
                if let Some(run) = current.take() {
                    runs.push(run);
                }
                current = Some((offset + t.char_start, offset + t.char_end));
            }
            (_, false) => {
                if let Some(run) = current.take() {
                    runs.push(run);
                }
            }
        }
        prev_end = t.char_end;
    }
    if let Some(run) = current {
        runs.push(run);
    }
    debug_assert!(runs.iter().all(|&(s, e)| e <= crate::text::char_len(context) && s < e));
    runs
}

/// Checks a response against its request. Candidates whose text does not
/// match their offsets are moved to the first occurrence of the text in the
/// context, or dropped when the text is absent.
pub fn validate_response(request: &ReaderRequest, mut response: ReaderResponse) -> Result<ReaderResponse, ReaderError> {
    if response.id != request.id {
        return Err(ReaderError::Protocol(format!(
            "response id {:?} does not match request id {:?}",
            response.id, request.id
        )));
    }
    if response.answers.len() > request.top_k {
        return Err(ReaderError::Protocol(format!(
            "{} answers returned for top_k {}",
            response.answers.len(),
            request.top_k
        )));
    }
    let context = &request.context;
    response.answers.retain_mut(|a| {
        if !a.score.is_finite() {
            log::warn!("dropping candidate {:?} with non-finite score", a.text);
            return false;
        }
        if a.char_start < a.char_end && char_slice(context, a.char_start..a.char_end) == a.text {
            return true;
        }
        match find_char_offset(context, &a.text) {
            Some(start) => {
                log::debug!(
                    "repairing offsets of {:?}: {}..{} -> {}",
                    a.text,
                    a.char_start,
                    a.char_end,
                    start
                );
                a.char_start = start;
                a.char_end = start + a.text.chars().count();
                true
            }
            None => {
                log::warn!("dropping candidate {:?}: not found in context", a.text);
                false
            }
        }
    });
    if response.answers.windows(2).any(|w| w[0].score < w[1].score) {
        return Err(ReaderError::Protocol(
            "answers are not ordered by descending score".into(),
        ));
    }
    Ok(response)
}

/// A child process speaking the line protocol on stdin/stdout.
///
/// One request is in flight at a time. Dropping the handle closes the
/// child's stdin and kills it.
pub struct ExternalReader {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    next_id: u64,
    command: String,
}

impl ExternalReader {
    /// Spawns `command_line` (shell-style quoting) and waits for it to answer a ping.
    pub fn spawn(command_line: &str, timeout: Duration) -> Result<Self, ReaderError> {
        let argv = shlex::split(command_line)
            .filter(|a| !a.is_empty())
            .ok_or_else(|| ReaderError::Crashed(format!("cannot parse reader command {command_line:?}")))?;
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ReaderError::Crashed(format!("{}: {e}", argv[0])))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut reader = Self {
            child,
            stdin,
            lines: rx,
            timeout,
            next_id: 0,
            command: command_line.to_string(),
        };
        reader.ping()?;
        Ok(reader)
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    fn send_line(&mut self, line: &str) -> Result<(), ReaderError> {
        let stdin = self
            .stdin
            .as_mut()
            .ok_or_else(|| ReaderError::Crashed("stdin closed".into()))?;
        stdin
            .write_all(line.as_bytes())
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush())
            .map_err(|e| ReaderError::Crashed(format!("write failed: {e}")))
    }

    fn recv_line(&mut self) -> Result<String, ReaderError> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(ReaderError::Crashed(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(ReaderError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                let status = self.child.try_wait().ok().flatten();
                Err(ReaderError::Crashed(match status {
                    Some(s) => format!("reader exited ({s})"),
                    None => "reader closed its output".into(),
                }))
            }
        }
    }

    fn parse_response(line: &str) -> Result<ReaderResponse, ReaderError> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| ReaderError::Protocol(format!("malformed line {line:?}: {e}")))?;
        if let Some(err) = value.get("error") {
            return Err(ReaderError::Protocol(format!("reader reported error: {err}")));
        }
        serde_json::from_value(value).map_err(|e| ReaderError::Protocol(format!("bad response {line:?}: {e}")))
    }

    /// Health check: `{"id":"__ping__"}` must be answered with an empty answer list.
    pub fn ping(&mut self) -> Result<(), ReaderError> {
        self.send_line(r#"{"id":"__ping__"}"#)?;
        let line = self.recv_line()?;
        let response = Self::parse_response(&line)?;
        if response.id != PING_ID || !response.answers.is_empty() {
            return Err(ReaderError::Protocol(format!("unexpected ping reply {line:?}")));
        }
        Ok(())
    }

    /// Sends one request and returns the validated response.
    pub fn request(&mut self, request: &ReaderRequest) -> Result<ReaderResponse, ReaderError> {
        let line = serde_json::to_string(request).expect("request serializes");
        self.send_line(&line)?;
        let reply = self.recv_line()?;
        validate_response(request, Self::parse_response(&reply)?)
    }
}

/// Sends one request to a running external reader.
pub fn external_read(reader: &mut ExternalReader, request: &ReaderRequest) -> Result<ReaderResponse, ReaderError> {
    reader.request(request)
}

impl Reader for ExternalReader {
    fn read(&mut self, context: &str, question: &str, top_k: usize) -> Result<Vec<AnswerCandidate>, ReaderError> {
        if context.trim().is_empty() {
            return Err(ReaderError::EmptyInput("context"));
        }
        if question.trim().is_empty() {
            return Err(ReaderError::EmptyInput("question"));
        }
        self.next_id += 1;
        let request = ReaderRequest {
            id: format!("q{}", self.next_id),
            question: question.to_string(),
            context: context.to_string(),
            top_k: top_k.max(1),
        };
        Ok(self.request(&request)?.answers)
    }
}

impl std::fmt::Debug for ExternalReader {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalReader")
            .field("command", &self.command)
            .field("pid", &self.child.id())
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl Drop for ExternalReader {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FUJI: &str = "The top of Mount Fuji is covered with snow.";

    fn read(context: &str, question: &str, k: usize) -> Vec<AnswerCandidate> {
        lexical_read(context, question, k, &StopwordList::default()).unwrap()
    }

    #[test]
    fn fuji_top_candidate_is_snow() {
        let c = read(FUJI, "What does the top of Mount Fuji have?", 20);
        let texts: Vec<&str> = c.iter().map(|a| a.text.as_str()).collect();
        assert_eq!(texts, ["snow", "covered"]);
        // sentence jaccard: {top,mount,fuji} vs {top,mount,fuji,covered,snow} = 3/5
        assert!((c[0].score - (0.6 + 0.001)).abs() < 1e-12);
        assert_eq!((c[0].char_start, c[0].char_end), (38, 42));
    }

    #[test]
    fn color_question_still_reads_snow() {
        let c = read(FUJI, "What color does the top of Mount Fuji have?", 20);
        assert_eq!(c[0].text, "snow");
    }

    #[test]
    fn zero_overlap_uses_first_sentence() {
        let ctx = "Paris hosts the Louvre museum. Berlin has many old bridges.";
        let c = read(ctx, "Who painted Guernica?", 20);
        assert!(!c.is_empty());
        assert!(c.iter().all(|a| a.char_end <= 30));
        // "Paris hosts" and "Louvre museum" tie on length; the later run wins
        assert_eq!(c[0].text, "Louvre museum");
        assert!((c[0].score - 0.002).abs() < 1e-12);
    }

    #[test]
    fn top_k_limits_output() {
        let c = read(FUJI, "What does the top of Mount Fuji have?", 1);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn punctuation_breaks_runs() {
        let c = read("It is the color of fresh snow, chalk, and milk.", "What is fresh?", 20);
        let texts: Vec<&str> = c.iter().map(|a| a.text.as_str()).collect();
        assert!(texts.contains(&"chalk"), "{texts:?}");
        assert!(texts.contains(&"snow"), "{texts:?}");
    }

    #[test]
    fn falls_back_to_question_words() {
        let c = read("Snow.", "Snow?", 5);
        assert_eq!(c[0].text, "Snow");
    }

    #[test]
    fn empty_inputs() {
        let sw = StopwordList::default();
        assert!(matches!(
            lexical_read("", "q", 1, &sw),
            Err(ReaderError::EmptyInput("context"))
        ));
        assert!(matches!(
            lexical_read("c", " ", 1, &sw),
            Err(ReaderError::EmptyInput("question"))
        ));
    }

    #[test]
    fn wire_format_is_compact_and_ordered() {
        let req = ReaderRequest {
            id: "1".into(),
            question: "q".into(),
            context: "c".into(),
            top_k: 3,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"id":"1","question":"q","context":"c","top_k":3}"#
        );
        let resp = ReaderResponse {
            id: "1".into(),
            answers: vec![AnswerCandidate {
                text: "c".into(),
                char_start: 0,
                char_end: 1,
                score: 0.5,
            }],
        };
        assert_eq!(
            serde_json::to_string(&resp).unwrap(),
            r#"{"id":"1","answers":[{"text":"c","char_start":0,"char_end":1,"score":0.5}]}"#
        );
    }

    fn request() -> ReaderRequest {
        ReaderRequest {
            id: "r1".into(),
            question: "What does the top of Mount Fuji have?".into(),
            context: FUJI.into(),
            top_k: 5,
        }
    }

    fn cand(text: &str, start: usize, end: usize, score: f64) -> AnswerCandidate {
        AnswerCandidate {
            text: text.into(),
            char_start: start,
            char_end: end,
            score,
        }
    }

    #[test]
    fn validation_repairs_offsets() {
        let resp = ReaderResponse {
            id: "r1".into(),
            answers: vec![cand("snow", 0, 4, 0.9), cand("glacier", 3, 10, 0.5)],
        };
        let out = validate_response(&request(), resp).unwrap();
        assert_eq!(out.answers, [cand("snow", 38, 42, 0.9)]);
    }

    #[test]
    fn validation_rejects_wrong_id_and_order() {
        let resp = ReaderResponse {
            id: "other".into(),
            answers: vec![],
        };
        assert!(matches!(
            validate_response(&request(), resp),
            Err(ReaderError::Protocol(_))
        ));
        let resp = ReaderResponse {
            id: "r1".into(),
            answers: vec![cand("top", 4, 7, 0.1), cand("snow", 38, 42, 0.9)],
        };
        assert!(matches!(
            validate_response(&request(), resp),
            Err(ReaderError::Protocol(_))
        ));
    }

    proptest! {
        #[test]
        fn lexical_read_invariants(
            words in prop::collection::vec(prop::sample::select(vec![
                "the", "snow", "is", "white", "cold", "mount", "fuji", "of", "top", "river", ".", ",", "covered"
            ]), 1..40),
            q in prop::collection::vec(prop::sample::select(vec!["what", "snow", "top", "is", "river", "fuji"]), 1..6),
            k in 1usize..6,
        ) {
            let context = words.join(" ");
            let question = q.join(" ") + "?";
            let sw = StopwordList::default();
            prop_assume!(!context.trim().is_empty());
            let out = lexical_read(&context, &question, k, &sw).unwrap();
            prop_assert!(out.len() <= k);
            for a in &out {
                prop_assert_eq!(char_slice(&context, a.char_start..a.char_end), a.text.as_str());
                prop_assert!(a.score.is_finite());
            }
            for w in out.windows(2) {
                prop_assert!(w[0].score >= w[1].score);
            }
            let has_content = !content_words(&context, &sw).is_empty();
            prop_assert_eq!(!out.is_empty(), has_content);
            prop_assert_eq!(&out, &lexical_read(&context, &question, k, &sw).unwrap());
        }
    }
}
