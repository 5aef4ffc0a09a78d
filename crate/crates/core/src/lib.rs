//! Commonsense knowledge graph construction, perturbed question generation
//! and knowledge-augmented extractive question answering.
//!
//! The pipeline runs in four stages: [`builder::build_graph`] turns offline
//! snapshots into a [`KnowledgeGraph`], [`dataset::generate`] rewrites
//! SQuAD-format questions with graph facts, [`resolver::resolve`] answers
//! questions by combining a [`Reader`] with the graph, and
//! [`eval::evaluate`] scores predictions with exact match and token F1.

pub mod builder;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kg;
pub mod reader;
pub mod resolver;
pub mod squad;
pub mod text;

pub use builder::{build_graph, BuildConfig, BuildReport};
pub use dataset::{GenConfig, GenSummary, PerturbationRecord};
pub use error::{Error, ParseError, Result};
pub use eval::{evaluate, EvalError, EvalReport};
pub use kg::{KnowledgeGraph, Relation, RelationKind, Triple};
pub use reader::{AnswerCandidate, ExternalReader, LexicalReader, Reader, ReaderError};
pub use resolver::{resolve, Origin, ResolvedAnswer, ResolverConfig, Trace};
pub use squad::{QaItem, SquadFile};
pub use text::{Similarity, StopwordList};
