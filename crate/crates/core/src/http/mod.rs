//! HTTP/1.x messages, flows and the corpus file format.

mod corpus;
mod flow;
mod message;
mod parse;
mod validate;

use thiserror::Error;

pub use corpus::{
    flow_from_record, flow_to_record, load_corpus, manifest_path, save_corpus, Corpus,
    CorpusError, LabelCounts, Manifest, CORPUS_FORMAT_VERSION,
};
pub use flow::{assemble_flows, Flow, FlowKey, Label, DEFAULT_IDLE_GAP_S};
pub use message::{Direction, Header, HttpMessage};
pub use parse::{
    parse_http_message, parse_http_message_with, serialize_message, ParseMode, ParseWarning,
};
pub use validate::{validate_message, ValidityReport, Violation};

pub(crate) use parse::{is_token, write_wire};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HttpError {
    #[error("empty message")]
    Empty,
    #[error("malformed start line at offset {offset}")]
    MalformedStartLine { offset: usize },
    #[error("malformed header at offset {offset}")]
    MalformedHeader { offset: usize },
    #[error("truncated message at offset {offset}")]
    TruncatedMessage { offset: usize },
    #[error("invalid message: {0}")]
    InvalidMessage(String),
    #[error("invalid flow: {0}")]
    InvalidFlow(String),
}
