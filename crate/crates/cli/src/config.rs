use std::fs;
use std::path::{Path, PathBuf};

use cskg_core::text::Similarity;
use serde::Deserialize;

use crate::exit::CliError;

/// Settings shared by all subcommands. Every field is optional; command-line
/// flags take precedence. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub squad: Option<PathBuf>,
    pub edges: Option<PathBuf>,
    pub definitions: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub graph: Option<PathBuf>,
    pub min_df: Option<usize>,
    pub vocabulary: Option<Vec<String>>,
    pub max_per_question: Option<usize>,
    pub top_k: Option<usize>,
    pub reader: Option<String>,
    pub timeout_secs: Option<f64>,
    pub resolve_synonyms: Option<bool>,
    pub similarity: Option<Similarity>,
    pub workers: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Parse(format!("{}:{}: {e}", path.display(), e.line())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut config.squad,
            &mut config.edges,
            &mut config.definitions,
            &mut config.lexicon,
            &mut config.stopwords,
            &mut config.graph,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn load_optional(path: Option<&Path>) -> Result<Self, CliError> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }
}

/// Flag value if given, else the config value, else an error naming the flag.
pub fn require<T: Clone>(flag: Option<T>, config: &Option<T>, name: &str) -> Result<T, CliError> {
    flag.or_else(|| config.clone())
        .ok_or_else(|| CliError::Parse(format!("missing --{name} (no value in config either)")))
}

pub fn positive(value: usize, name: &str) -> Result<usize, CliError> {
    if value == 0 {
        return Err(CliError::Parse(format!("{name} must be at least 1")));
    }
    Ok(value)
}

/// Fails with an I/O error naming the first path that does not exist.
pub fn ensure_exist<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<(), CliError> {
    for p in paths {
        if !p.exists() {
            return Err(CliError::Io(format!("{}: no such file", p.display())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"graph": "g.jsonl", "edges": "/abs/e.csv", "top_k": 3}"#).unwrap();
        let c = Config::load(&path).unwrap();
        assert_eq!(c.graph.unwrap(), dir.path().join("g.jsonl"));
        assert_eq!(c.edges.unwrap(), PathBuf::from("/abs/e.csv"));
        assert_eq!(c.top_k, Some(3));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, "{\n\"topk\": 3}").unwrap();
        let err = Config::load(&path).unwrap_err();
        assert_eq!(err.code(), 1);
        assert!(err.to_string().contains("cfg.json:2:"), "{err}");
    }

    #[test]
    fn flags_win() {
        let c = Config {
            top_k: Some(5),
            ..Default::default()
        };
        assert_eq!(require(Some(2), &c.top_k, "top-k").unwrap(), 2);
        assert_eq!(require(None, &c.top_k, "top-k").unwrap(), 5);
        assert!(require::<usize>(None, &None, "top-k").is_err());
    }
}
