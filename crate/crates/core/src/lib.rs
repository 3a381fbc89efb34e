//! Scoring relational implication rules `p → q` over triple corpora.
//!
//! - [`corpus`]: ingestion, count indices, argument-reversal augmentation.
//! - [`setscore`]: DIRT, Cover and BInc.
//! - [`linkpred`]: MatrixFact, TransE, DistMult and Complex embeddings.
//! - [`trainer`]: negative sampling, losses, SGD and MRR.
//! - [`probscore`]: ProbE, ProbEL and ProbL.
//! - [`eval`]: AUC, precision–recall and directional accuracy.
//! - [`cli`]: the `relimp` command-line pipeline.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod linkpred;
pub mod probscore;
pub mod setscore;
pub mod trainer;

pub use corpus::{ArgumentId, Corpus, CorpusBuilder, RelationId, Triple, Tuple};
pub use error::{Error, Result};
pub use linkpred::{EmbeddingState, ModelKind, TransENorm};
pub use probscore::{Estimator, ProbModel};
pub use setscore::{FeatureRep, ImplicationRule, SetMeasure, SetScorer, WeightScheme};
pub use trainer::{LossKind, TrainConfig};
