//! Protocol-conformant reader process backed by the lexical baseline.
//!
//! Used to exercise the external reader client. The first argument picks a
//! behaviour: `lexical` (default), `wrong-id`, `bad-offset`, `error-line`,
//! `hang`, or `crash-after=N` (exit after answering N requests).

use std::io::{self, BufRead, Write};
use std::process;
use std::thread;
use std::time::Duration;

use cskg_core::reader::{lexical_read, ReaderRequest, ReaderResponse, PING_ID};
use cskg_core::text::StopwordList;
use serde_json::{json, Value};

#[derive(Clone, Copy, PartialEq)]
enum Mode {
    Lexical,
    WrongId,
    BadOffset,
    ErrorLine,
    Hang,
    CrashAfter(usize),
}

fn parse_mode(arg: Option<String>) -> Mode {
    match arg.as_deref() {
        None | Some("lexical") => Mode::Lexical,
        Some("wrong-id") => Mode::WrongId,
        Some("bad-offset") => Mode::BadOffset,
        Some("error-line") => Mode::ErrorLine,
        Some("hang") => Mode::Hang,
        Some(other) => match other.strip_prefix("crash-after=").and_then(|n| n.parse().ok()) {
            Some(n) => Mode::CrashAfter(n),
            None => {
                eprintln!("unknown mode {other:?}");
                process::exit(64);
            }
        },
    }
}

fn main() {
    let mode = parse_mode(std::env::args().nth(1));
    let stopwords = StopwordList::default();
    let stdin = io::stdin();
    let mut out = io::stdout().lock();
    let mut answered = 0;

    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                writeln!(out, "{}", json!({"id": null, "error": e.to_string()})).ok();
                out.flush().ok();
                continue;
            }
        };
        if value.get("id").and_then(Value::as_str) == Some(PING_ID) {
            writeln!(out, "{}", json!({"id": PING_ID, "answers": []})).ok();
            out.flush().ok();
            continue;
        }
        if let Mode::CrashAfter(n) = mode {
            if answered >= n {
                process::exit(101);
            }
        }
        let reply = match serde_json::from_value::<ReaderRequest>(value.clone()) {
            Err(e) => json!({"id": value.get("id"), "error": e.to_string()}),
            Ok(request) => match mode {
                Mode::Hang => loop {
                    thread::sleep(Duration::from_secs(3600));
                },
                Mode::ErrorLine => json!({"id": request.id, "error": "model unavailable"}),
                _ => match lexical_read(&request.context, &request.question, request.top_k, &stopwords) {
                    Err(e) => json!({"id": request.id, "error": e.to_string()}),
                    Ok(mut answers) => {
                        let mut id = request.id.clone();
                        if mode == Mode::WrongId {
                            id.push_str("-x");
                        }
                        if mode == Mode::BadOffset {
                            for a in &mut answers {
                                a.char_start += 1;
                                a.char_end += 1;
                            }
                        }
                        serde_json::to_value(ReaderResponse { id, answers }).expect("response serializes")
                    }
                },
            },
        };
        answered += 1;
        writeln!(out, "{reply}").ok();
        out.flush().ok();
    }
}
