//! SQuAD v1.1-format datasets: reading, validation and flattening into
//! [`QaItem`]s.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ParseError, Result};
use crate::text::{char_len, char_slice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquadFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub data: Vec<Article>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    #[serde(default)]
    pub title: String,
    pub paragraphs: Vec<Paragraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    pub context: String,
    pub qas: Vec<Qa>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Qa {
    pub id: String,
    pub question: String,
    #[serde(default)]
    pub answers: Vec<AnswerSpan>,
    /// Set on generated items whose gold answer does not occur in the context.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub knowledge_required: bool,
}

/// Gold answer. `answer_start` is a character offset into the context, or
/// −1 for a free-text answer that the passage does not contain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSpan {
    pub text: String,
    pub answer_start: i64,
}

/// A single question with its context, flattened out of the article tree.
#[derive(Debug, Clone, PartialEq)]
pub struct QaItem {
    pub id: String,
    pub title: String,
    pub context: String,
    pub question: String,
    pub answers: Vec<AnswerSpan>,
    pub knowledge_required: bool,
    /// Index of the source article, used to regroup items on output.
    pub article: usize,
}

impl QaItem {
    pub fn gold_texts(&self) -> Vec<&str> {
        self.answers.iter().map(|a| a.text.as_str()).collect()
    }
}

impl SquadFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Parses and validates a dataset.
    pub fn parse(text: &str, source: impl AsRef<Path>) -> Result<Self> {
        let file: SquadFile =
            serde_json::from_str(text).map_err(|e| ParseError::new(&source, e.line(), e.to_string()))?;
        file.validate().map_err(|reason| ParseError::new(&source, 0, reason))?;
        Ok(file)
    }

    /// Checks that ids are unique and that every located answer matches the
    /// context at its offset.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let mut ids = HashSet::new();
        for article in &self.data {
            for p in &article.paragraphs {
                let len = char_len(&p.context);
                for qa in &p.qas {
                    if !ids.insert(qa.id.as_str()) {
                        return Err(format!("duplicate question id {:?}", qa.id));
                    }
                    for a in &qa.answers {
                        if a.answer_start == -1 {
                            continue;
                        }
                        let start = usize::try_from(a.answer_start)
                            .map_err(|_| format!("question {:?}: negative answer_start {}", qa.id, a.answer_start))?;
                        let end = start + char_len(&a.text);
                        if end > len || char_slice(&p.context, start..end) != a.text {
                            return Err(format!(
                                "question {:?}: answer {:?} does not match context at offset {}",
                                qa.id, a.text, start
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn items(&self) -> Vec<QaItem> {
        let mut out = Vec::new();
        for (ai, article) in self.data.iter().enumerate() {
            for p in &article.paragraphs {
                for qa in &p.qas {
                    out.push(QaItem {
                        id: qa.id.clone(),
                        title: article.title.clone(),
                        context: p.context.clone(),
                        question: qa.question.clone(),
                        answers: qa.answers.clone(),
                        knowledge_required: qa.knowledge_required,
                        article: ai,
                    });
                }
            }
        }
        out
    }

    /// Rebuilds the article/paragraph tree. Consecutive items sharing an
    /// article index form one article; consecutive items sharing a context
    /// within it form one paragraph.
    pub fn from_items(items: &[QaItem]) -> Self {
        let mut data: Vec<(usize, Article)> = Vec::new();
        for item in items {
            let qa = Qa {
                id: item.id.clone(),
                question: item.question.clone(),
                answers: item.answers.clone(),
                knowledge_required: item.knowledge_required,
            };
            let same_article = data.last().is_some_and(|(ai, _)| *ai == item.article);
            if !same_article {
                data.push((
                    item.article,
                    Article {
                        title: item.title.clone(),
                        paragraphs: Vec::new(),
                    },
                ));
            }
            let article = &mut data.last_mut().expect("pushed above").1;
            match article.paragraphs.last_mut() {
                Some(p) if p.context == item.context => p.qas.push(qa),
                _ => article.paragraphs.push(Paragraph {
                    context: item.context.clone(),
                    qas: vec![qa],
                }),
            }
        }
        SquadFile {
            version: Some("1.1".into()),
            data: data.into_iter().map(|(_, a)| a).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
