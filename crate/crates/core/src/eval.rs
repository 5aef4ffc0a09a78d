//! SQuAD-style answer scoring: normalization, exact match, token F1 and
//! corpus aggregation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, ParseError};
use crate::squad::SquadFile;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no gold answers to compare against")]
    EmptyGolds,
    #[error("predictions for ids not in the dataset: {0:?}")]
    UnknownIds(Vec<String>),
    #[error(transparent)]
    Input(#[from] Error),
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            get_general_category(c),
            GeneralCategory::ConnectorPunctuation
                | GeneralCategory::DashPunctuation
                | GeneralCategory::OpenPunctuation
                | GeneralCategory::ClosePunctuation
                | GeneralCategory::InitialPunctuation
                | GeneralCategory::FinalPunctuation
                | GeneralCategory::OtherPunctuation
        )
}

/// Lowercases, strips punctuation, drops the articles "a", "an" and "the",
/// and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let without_punct: String = lowered.chars().filter(|&c| !is_punctuation(c)).collect();
    without_punct
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// 1 when the normalized prediction equals any normalized gold, else 0.
pub fn exact_match<S: AsRef<str>>(prediction: &str, golds: &[S]) -> Result<u8, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::EmptyGolds);
    }
    let pred = normalize_answer(prediction);
    Ok(golds.iter().any(|g| normalize_answer(g.as_ref()) == pred) as u8)
}

/// True/false positive and false negative token counts between a prediction
/// and one gold answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenOverlapCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl TokenOverlapCounts {
    pub fn between(prediction: &str, gold: &str) -> Self {
        let pred = normalize_answer(prediction);
        let gold = normalize_answer(gold);
        let pred: Vec<&str> = pred.split_whitespace().collect();
        let gold: Vec<&str> = gold.split_whitespace().collect();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for w in &gold {
            *counts.entry(w).or_insert(0) += 1;
        }
        let mut tp = 0;
        for w in &pred {
            if let Some(n) = counts.get_mut(w) {
                if *n > 0 {
                    *n -= 1;
                    tp += 1;
                }
            }
        }
        Self {
            tp,
            fp: pred.len() - tp,
            fn_: gold.len() - tp,
        }
    }

    /// `2TP / (2TP + FN + FP)`, with both-empty scoring 1 and one-empty 0.
    pub fn f1(&self) -> f64 {
        let pred_len = self.tp + self.fp;
        let gold_len = self.tp + self.fn_;
        if pred_len == 0 && gold_len == 0 {
            return 1.0;
        }
        if self.tp == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / (2 * self.tp + self.fn_ + self.fp) as f64
    }
}

pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    TokenOverlapCounts::between(prediction, gold).f1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub em: f64,
    pub f1: f64,
    pub best_gold: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(serialize_with = "three_decimals")]
    pub em_percent: f64,
    #[serde(serialize_with = "three_decimals")]
    pub f1_percent: f64,
    pub total: usize,
    /// Dataset ids with no prediction; they score 0.
    pub missing: Vec<String>,
    pub per_item: Vec<ItemScore>,
}

fn three_decimals<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round3(*v))
}

pub fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

/// Scores predictions against every question of a dataset.
///
/// Items without gold answers are scored against the empty string.
pub fn evaluate(predictions: &BTreeMap<String, String>, dataset: &SquadFile) -> Result<EvalReport, EvalError> {
    let items = dataset.items();
    let known: std::collections::HashSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    let unknown: Vec<String> = predictions
        .keys()
        .filter(|k| !known.contains(k.as_str()))
        .cloned()
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::UnknownIds(unknown));
    }

    let mut per_item = Vec::with_capacity(items.len());
    let mut missing = Vec::new();
    for item in &items {
        let mut golds: Vec<&str> = item.gold_texts();
        if golds.is_empty() {
            golds.push("");
        }
        let Some(pred) = predictions.get(&item.id) else {
            log::warn!("no prediction for {}", item.id);
            missing.push(item.id.clone());
            per_item.push(ItemScore {
                id: item.id.clone(),
                em: 0.0,
                f1: 0.0,
                best_gold: golds[0].to_string(),
            });
            continue;
        };
        let em = exact_match(pred, &golds)? as f64;
        let (best_gold, f1) =
            golds
                .iter()
                .map(|g| (*g, token_f1(pred, g)))
                .fold(
                    ("", f64::NEG_INFINITY),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        per_item.push(ItemScore {
            id: item.id.clone(),
            em,
            f1,
            best_gold: best_gold.to_string(),
        });
    }
    let n = per_item.len();
    let mean = |f: fn(&ItemScore) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_item.iter().map(f).sum::<f64>() / n as f64 * 100.0
        }
    };
    Ok(EvalReport {
        em_percent: mean(|s| s.em),
        f1_percent: mean(|s| s.f1),
        total: n,
        missing,
        per_item,
    })
}

/// Reads a predictions file: a JSON object mapping question id to answer text.
pub fn load_predictions(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>, Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| ParseError::new(path, e.line(), e.to_string()).into())
}
