//! Generated adversarial flows: field dictionaries, token sequences,
//! per-field WGAN-GP generators and splicing into valid HTTP flows.

mod dict;
mod encode;
mod gan;
mod generate;
mod tokenize;

use std::path::PathBuf;

use thiserror::Error;

pub use dict::{
    build_dictionary, message_fields, FieldDictionary, FieldVocab, WordClass, WordEntry,
    DEFAULT_THRESHOLD, INFINITE_THRESHOLD, OOV, PAD,
};
pub use encode::{
    decode_field, decode_words, encode_field, inject_malicious, sample_mal_pos, MalPos,
    TokenSequence, DEFAULT_SEQ_LEN,
};
pub use gan::{argmax_ids, one_hot_sequence, train_field_gan, FieldGan, GanConfig, GanHistory};
pub use generate::{
    sample_and_decode, templates_from, FieldSelector, FlowTemplate, GafConfig, GafGenerator,
};
pub use tokenize::{is_delimiter, tokenize_content, DelimiterTemplate, DELIMITERS};

use crate::http::HttpError;
use crate::nn::NnError;

/// Source tag of corpora made of generated flows.
pub const GAF_SOURCE: &str = "gaf";

#[derive(Debug, Error)]
pub enum GafError {
    #[error("dictionary needs both a malicious and a benign corpus")]
    EmptyCorpus,
    #[error("no usable benign template (needs a valid request and response reaching a trained field)")]
    NoTemplates,
    #[error("flow {index} failed validation after {attempts} attempts")]
    ValidationFailed { index: usize, attempts: usize },
    #[error("word {word:?} is not in the malicious vocabulary of field {field}")]
    WordNotInMalDict { field: String, word: String },
    #[error("position {position} outside a sequence of length {len}")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("GAN for field {field} diverged at iteration {iteration}")]
    Diverged { field: String, iteration: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dictionary: {0}")]
    Dictionary(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Http(#[from] HttpError),
}
