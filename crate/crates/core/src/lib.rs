//! Cross-lingual word embedding mappings: I/O, normalization and whitening
//! transforms, unsupervised seed induction, self-learning, and bilingual
//! lexicon induction evaluation.

pub mod dictionary;
pub mod embeddings;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod retrieval;
pub mod seed;
pub mod self_learning;
pub mod synth;
pub mod transforms;

pub use dictionary::{Dictionary, TestQuery};
pub use embeddings::EmbeddingSpace;
pub use error::{Error, Result};
pub use harness::{run_experiment, ConfigName, ExperimentReport, ModelConfig, SeedSource};
pub use retrieval::{BliReport, RetrievalMethod, SuccessClass};
pub use self_learning::{InductionMode, SelfLearnConfig};
pub use transforms::{ProjectionModel, StepKind};
