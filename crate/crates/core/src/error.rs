use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("input contains no triples")]
    EmptyCorpus,

    #[error("corpus is already augmented with reversed relations")]
    AlreadyAugmented,

    #[error("reversed rule requires a corpus augmented with reversed relations")]
    NotAugmented,

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("relation id {0} is not observed in the corpus")]
    UnobservedRelation(u32),

    #[error("pair (relation {relation}, tuple {subject},{object}) is not observed; PMI undefined")]
    UnobservedPair {
        relation: u32,
        subject: u32,
        object: u32,
    },

    #[error("{what} id {id} out of range (size {size})")]
    OutOfRange {
        what: &'static str,
        id: u32,
        size: usize,
    },

    #[error("zero-norm embedding for relation {0}")]
    ZeroNorm(u32),

    #[error("embedding vocabulary ({state_relations} relations, {state_arguments} arguments) does not cover corpus ({corpus_relations}, {corpus_arguments})")]
    VocabularyMismatch {
        state_relations: usize,
        state_arguments: usize,
        corpus_relations: usize,
        corpus_arguments: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },

    #[error("conditional is undefined: conditioning event has zero probability")]
    UndefinedConditional,

    #[error("{0}")]
    EmptyInput(&'static str),

    #[error("AUC requires at least one positive and one negative example")]
    SingleClass,

    #[error("precision-recall curve requires at least one positive example")]
    NoPositives,

    #[error("invalid snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
