//! Newline-delimited corpus files and their companion manifests.
//!
//! Each line of a corpus file is one JSON record:
//!
//! ```text
//! {"flow_id":"..","label":"benign","key":{"src_ip":"10.0.0.1","src_port":5000,
//!  "dst_ip":"10.0.0.2","dst_port":80,"transport":"TCP"},
//!  "messages":[{"direction":"request","ts_micros":1,"raw_b64":".."}]}
//! ```
//!
//! The manifest lives next to it at `<path>.manifest`.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::net::IpAddr;
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::flow::{Flow, FlowKey, Label};
use super::message::Direction;
use super::parse::{parse_http_message_with, ParseMode};

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("corpus format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("corrupt record at line {line}: {reason}")]
    CorruptRecord { line: usize, reason: String },
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error("duplicate flow id {0:?}")]
    DuplicateFlowId(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub malicious: usize,
    pub benign: usize,
    pub unlabeled: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.malicious + self.benign + self.unlabeled
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub source: String,
    pub counts: LabelCounts,
    /// Flows that contain responses but no request.
    pub response_only: usize,
}

impl Manifest {
    pub fn describe(source: &str, flows: &[Flow]) -> Self {
        let mut counts = LabelCounts::default();
        for f in flows {
            match f.label {
                Label::Malicious => counts.malicious += 1,
                Label::Benign => counts.benign += 1,
                Label::Unlabeled => counts.unlabeled += 1,
            }
        }
        Manifest {
            format_version: CORPUS_FORMAT_VERSION,
            source: source.to_string(),
            counts,
            response_only: flows.iter().filter(|f| f.is_response_only()).count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub flows: Vec<Flow>,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn new(source: &str, flows: Vec<Flow>) -> Self {
        let manifest = Manifest::describe(source, &flows);
        Corpus { flows, manifest }
    }

    pub fn of_label(&self, label: Label) -> impl Iterator<Item = &Flow> {
        self.flows.iter().filter(move |f| f.label == label)
    }
}

#[derive(Serialize, Deserialize)]
struct KeyRecord {
    src_ip: String,
    src_port: u16,
    dst_ip: String,
    dst_port: u16,
    transport: String,
}

#[derive(Serialize, Deserialize)]
struct MessageRecord {
    direction: Direction,
    ts_micros: i64,
    raw_b64: String,
}

#[derive(Serialize, Deserialize)]
struct FlowRecord {
    flow_id: String,
    label: Label,
    key: KeyRecord,
    messages: Vec<MessageRecord>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

/// One corpus record line, without the trailing newline.
pub fn flow_to_record(flow: &Flow) -> String {
    let rec = FlowRecord {
        flow_id: flow.flow_id.clone(),
        label: flow.label,
        key: KeyRecord {
            src_ip: flow.key.src_ip.to_string(),
            src_port: flow.key.src_port,
            dst_ip: flow.key.dst_ip.to_string(),
            dst_port: flow.key.dst_port,
            transport: FlowKey::TRANSPORT.to_string(),
        },
        messages: flow
            .messages
            .iter()
            .map(|m| MessageRecord {
                direction: m.direction,
                ts_micros: m.ts_micros,
                raw_b64: B64.encode(&m.raw),
            })
            .collect(),
    };
    serde_json::to_string(&rec).expect("record serialization is infallible")
}

/// Parses one corpus record line. Messages are parsed leniently; `raw` is
/// kept verbatim either way.
pub fn flow_from_record(line: &str, line_no: usize) -> Result<Flow, CorpusError> {
    let corrupt = |reason: String| CorpusError::CorruptRecord {
        line: line_no,
        reason,
    };
    let rec: FlowRecord = serde_json::from_str(line).map_err(|e| corrupt(e.to_string()))?;
    if rec.key.transport != FlowKey::TRANSPORT {
        return Err(corrupt(format!("transport {:?}", rec.key.transport)));
    }
    let ip = |s: &str| {
        s.parse::<IpAddr>()
            .map_err(|e| corrupt(format!("address {s:?}: {e}")))
    };
    let key = FlowKey::new(
        ip(&rec.key.src_ip)?,
        rec.key.src_port,
        ip(&rec.key.dst_ip)?,
        rec.key.dst_port,
    );
    let mut messages = Vec::with_capacity(rec.messages.len());
    for (i, m) in rec.messages.iter().enumerate() {
        let raw = B64
            .decode(m.raw_b64.as_bytes())
            .map_err(|e| corrupt(format!("message {i}: invalid base64: {e}")))?;
        let (msg, _) = parse_http_message_with(&raw, m.direction, m.ts_micros, ParseMode::Lenient)
            .map_err(|e| corrupt(format!("message {i}: {e}")))?;
        messages.push(msg);
    }
    Flow::new(rec.flow_id, key, rec.label, messages).map_err(|e| corrupt(e.to_string()))
}

pub fn load_corpus(path: &Path) -> Result<Corpus, CorpusError> {
    let mpath = manifest_path(path);
    let mtext = fs::read_to_string(&mpath).map_err(io_err(&mpath))?;
    let manifest: Manifest = serde_json::from_str(&mtext)
        .map_err(|e| CorpusError::ManifestMismatch(format!("unreadable manifest: {e}")))?;
    if manifest.format_version != CORPUS_FORMAT_VERSION {
        return Err(CorpusError::FormatVersionMismatch {
            found: manifest.format_version,
            expected: CORPUS_FORMAT_VERSION,
        });
    }

    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut flows = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let flow = flow_from_record(&line, i + 1)?;
        if !seen.insert(flow.flow_id.clone()) {
            return Err(CorpusError::DuplicateFlowId(flow.flow_id));
        }
        flows.push(flow);
    }

    let actual = Manifest::describe(&manifest.source, &flows);
    if actual != manifest {
        return Err(CorpusError::ManifestMismatch(format!(
            "manifest says {:?} ({} response-only), file has {:?} ({} response-only)",
            manifest.counts, manifest.response_only, actual.counts, actual.response_only
        )));
    }
    Ok(Corpus { flows, manifest })
}

/// Writes the records and a freshly computed manifest.
pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    for f in &corpus.flows {
        if !seen.insert(f.flow_id.as_str()) {
            return Err(CorpusError::DuplicateFlowId(f.flow_id.clone()));
        }
    }
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for f in &corpus.flows {
        writeln!(w, "{}", flow_to_record(f)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))?;

    let manifest = Manifest::describe(&corpus.manifest.source, &corpus.flows);
    let mpath = manifest_path(path);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization");
    fs::write(&mpath, text + "\n").map_err(io_err(&mpath))?;
    Ok(())
}
