//! Hierarchical flow features: packet-text images, packet statistics and
//! flow statistics, plus min-max normalization fit on training data.

mod dump;
mod scaler;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{write_wire, Flow, Header, HttpMessage, Label};

pub use dump::{sample_from_record, sample_to_record};
pub use scaler::{fit_scaler, Scaler};

pub const IMAGE_ROWS: usize = 20;
pub const IMAGE_COLS: usize = 40;
pub const IMAGE_BYTES: usize = IMAGE_ROWS * IMAGE_COLS;
pub const PKT_STAT_DIM: usize = 41;
pub const FLOW_STAT_DIM: usize = 64;
/// Header slots counted by the packet statistics; later headers are ignored.
pub const PKT_STAT_FIELDS: usize = 18;
/// Flows with more packets than this are discarded.
pub const MAX_FLOW_PACKETS: usize = 50;
/// Packets per sample fed to the packet-level network.
pub const PACKET_SLOTS: usize = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FeatureError {
    #[error("flow has no messages")]
    EmptyFlow,
    #[error("flow has {0} packets (limit {MAX_FLOW_PACKETS})")]
    TooManyPackets(usize),
    #[error("cannot fit a scaler on zero samples")]
    EmptyFit,
    #[error("corrupt feature record: {0}")]
    CorruptRecord(String),
}

/// Which header values to blank in addition to Host.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScrubConfig {
    pub cookie: bool,
    pub referer: bool,
}

/// Drops content that identifies a particular endpoint rather than the
/// behavior: the request-target becomes "/" and the Host value is emptied.
pub fn scrub_misleading(msg: &HttpMessage) -> HttpMessage {
    scrub_with(msg, ScrubConfig::default())
}

pub fn scrub_with(msg: &HttpMessage, config: ScrubConfig) -> HttpMessage {
    let mut out = msg.clone();
    if out.target.is_some() {
        out.target = Some(b"/".to_vec());
    }
    for h in &mut out.headers {
        if h.is("host") || (config.cookie && h.is("cookie")) || (config.referer && h.is("referer"))
        {
            h.value.clear();
        }
    }
    out.refresh_raw();
    out
}

/// A packet rendered as a 20x40 grayscale image, row-major, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct PktTextImage {
    pixels: Vec<f64>,
}

impl PktTextImage {
    pub fn zeros() -> Self {
        PktTextImage {
            pixels: vec![0.0; IMAGE_BYTES],
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_COLS + col]
    }

    /// The byte values the image was built from.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|p| (p * 255.0).round() as u8)
            .collect()
    }
}

/// Truncates or zero-pads `bytes` to 800 and fills the image row by row.
pub fn bytes_to_image(bytes: &[u8]) -> PktTextImage {
    let mut pixels = vec![0.0; IMAGE_BYTES];
    for (p, &b) in pixels.iter_mut().zip(bytes) {
        *p = f64::from(b) / 255.0;
    }
    PktTextImage { pixels }
}

/// Image of the message's wire form. The caller scrubs first.
pub fn packet_to_image(msg: &HttpMessage) -> PktTextImage {
    bytes_to_image(&write_wire(msg))
}

/// Per-packet statistics.
///
/// | index  | content                                             |
/// |--------|-----------------------------------------------------|
/// | 0      | packet type (1 request, 2 response)                 |
/// | 1      | request-target length, or reason phrase length      |
/// | 2      | protocol version, major * 10 + minor                |
/// | 3      | number of header lines                              |
/// | 4..22  | name lengths of the first 18 headers                |
/// | 22..40 | value lengths of the first 18 headers               |
/// | 40     | body length                                         |
#[derive(Debug, Clone, PartialEq)]
pub struct PktStatVector {
    values: Vec<f64>,
}

impl PktStatVector {
    pub fn zeros() -> Self {
        PktStatVector {
            values: vec![0.0; PKT_STAT_DIM],
        }
    }

    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        (values.len() == PKT_STAT_DIM).then_some(PktStatVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-flow statistics.
///
/// | index  | content                                              |
/// |--------|------------------------------------------------------|
/// | 0      | request count                                        |
/// | 1..6   | GET, POST, HEAD, OPTIONS, other methods              |
/// | 6      | response count                                       |
/// | 7..13  | 1XX, 2XX, 3XX, 4XX, 5XX and above, unparseable status |
/// | 13     | mean raw packet length                               |
/// | 14..64 | raw packet lengths in arrival order                  |
#[derive(Debug, Clone, PartialEq)]
pub struct FlowStatVector {
    values: Vec<f64>,
}

impl FlowStatVector {
    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        (values.len() == FLOW_STAT_DIM).then_some(FlowStatVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Statistics of a single packet, computed on the unscrubbed message.
pub fn packet_stats(msg: &HttpMessage) -> PktStatVector {
    let mut v = vec![0.0; PKT_STAT_DIM];
    if msg.is_request() {
        v[0] = 1.0;
        v[1] = msg.target.as_ref().map_or(0, Vec::len) as f64;
    } else {
        v[0] = 2.0;
        v[1] = msg.reason.as_ref().map_or(0, Vec::len) as f64;
    }
    v[2] = f64::from(msg.version_major) * 10.0 + f64::from(msg.version_minor);
    v[3] = msg.headers.len() as f64;
    for (i, Header { name, value }) in msg.headers.iter().take(PKT_STAT_FIELDS).enumerate() {
        v[4 + i] = name.len() as f64;
        v[4 + PKT_STAT_FIELDS + i] = value.len() as f64;
    }
    v[PKT_STAT_DIM - 1] = msg.body.len() as f64;
    PktStatVector { values: v }
}

/// Statistics of a whole flow of 1 to 50 packets.
pub fn flow_stats(flow: &Flow) -> Result<FlowStatVector, FeatureError> {
    let n = flow.messages.len();
    if n == 0 {
        return Err(FeatureError::EmptyFlow);
    }
    if n > MAX_FLOW_PACKETS {
        return Err(FeatureError::TooManyPackets(n));
    }
    let mut v = vec![0.0; FLOW_STAT_DIM];
    let mut total = 0.0;
    for (i, m) in flow.messages.iter().enumerate() {
        if m.is_request() {
            v[0] += 1.0;
            let method = m.method.as_deref().unwrap_or_default();
            let slot = if method.eq_ignore_ascii_case(b"GET") {
                1
            } else if method.eq_ignore_ascii_case(b"POST") {
                2
            } else if method.eq_ignore_ascii_case(b"HEAD") {
                3
            } else if method.eq_ignore_ascii_case(b"OPTIONS") {
                4
            } else {
                5
            };
            v[slot] += 1.0;
        } else {
            v[6] += 1.0;
            let slot = match m.status_code {
                Some(100..=199) => 7,
                Some(200..=299) => 8,
                Some(300..=399) => 9,
                Some(400..=499) => 10,
                Some(c) if c >= 500 => 11,
                _ => 12,
            };
            v[slot] += 1.0;
        }
        let len = m.raw.len() as f64;
        total += len;
        v[14 + i] = len;
    }
    v[13] = total / n as f64;
    Ok(FlowStatVector { values: v })
}

/// A featurized flow: the first two packets at packet level plus the
/// flow-level statistics. A missing second packet is all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub flow_id: String,
    pub label: Label,
    pub images: Vec<PktTextImage>,
    pub pkt_stats: Vec<PktStatVector>,
    pub flow_stat: FlowStatVector,
    /// Number of real (non-padding) packet slots.
    pub packets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    Empty,
    TooManyPackets(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Featurized {
    Sample(Sample),
    Discard(DiscardReason),
}

impl Featurized {
    pub fn sample(self) -> Option<Sample> {
        match self {
            Featurized::Sample(s) => Some(s),
            Featurized::Discard(_) => None,
        }
    }
}

pub fn featurize_flow(flow: &Flow) -> Featurized {
    featurize_flow_with(flow, ScrubConfig::default())
}

pub fn featurize_flow_with(flow: &Flow, scrub: ScrubConfig) -> Featurized {
    let flow_stat = match flow_stats(flow) {
        Ok(v) => v,
        Err(FeatureError::TooManyPackets(n)) => {
            return Featurized::Discard(DiscardReason::TooManyPackets(n))
        }
        Err(_) => return Featurized::Discard(DiscardReason::Empty),
    };
    let mut images = Vec::with_capacity(PACKET_SLOTS);
    let mut pkt_stats = Vec::with_capacity(PACKET_SLOTS);
    for slot in 0..PACKET_SLOTS {
        match flow.messages.get(slot) {
            Some(m) => {
                images.push(packet_to_image(&scrub_with(m, scrub)));
                pkt_stats.push(packet_stats(m));
            }
            None => {
                images.push(PktTextImage::zeros());
                pkt_stats.push(PktStatVector::zeros());
            }
        }
    }
    Featurized::Sample(Sample {
        flow_id: flow.flow_id.clone(),
        label: flow.label,
        images,
        pkt_stats,
        flow_stat,
        packets: flow.messages.len().min(PACKET_SLOTS),
    })
}
