use std::collections::BTreeMap;
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::message::{Direction, HttpMessage};
use super::HttpError;

/// TCP quintuple identifying a flow. The transport is always TCP, so it is
/// not stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub src_ip: IpAddr,
    pub src_port: u16,
    pub dst_ip: IpAddr,
    pub dst_port: u16,
}

impl FlowKey {
    pub const TRANSPORT: &'static str = "TCP";

    pub fn new(src_ip: IpAddr, src_port: u16, dst_ip: IpAddr, dst_port: u16) -> Self {
        FlowKey {
            src_ip,
            src_port,
            dst_ip,
            dst_port,
        }
    }

    pub fn reversed(&self) -> Self {
        FlowKey {
            src_ip: self.dst_ip,
            src_port: self.dst_port,
            dst_ip: self.src_ip,
            dst_port: self.src_port,
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{}>{}:{}/{}",
            self.src_ip,
            self.src_port,
            self.dst_ip,
            self.dst_port,
            Self::TRANSPORT
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Malicious,
    Benign,
    Unlabeled,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Malicious => "malicious",
            Label::Benign => "benign",
            Label::Unlabeled => "unlabeled",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "malicious" => Ok(Label::Malicious),
            "benign" => Ok(Label::Benign),
            "unlabeled" => Ok(Label::Unlabeled),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// A time-ordered sequence of messages sharing one client-oriented quintuple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Flow {
    pub flow_id: String,
    pub key: FlowKey,
    pub label: Label,
    pub messages: Vec<HttpMessage>,
}

impl Flow {
    /// Builds a flow, checking that it is non-empty and time-ordered.
    pub fn new(
        flow_id: impl Into<String>,
        key: FlowKey,
        label: Label,
        messages: Vec<HttpMessage>,
    ) -> Result<Self, HttpError> {
        let flow = Flow {
            flow_id: flow_id.into(),
            key,
            label,
            messages,
        };
        flow.check()?;
        Ok(flow)
    }

    pub fn check(&self) -> Result<(), HttpError> {
        if self.messages.is_empty() {
            return Err(HttpError::InvalidFlow(format!("flow {} is empty", self.flow_id)));
        }
        if self
            .messages
            .windows(2)
            .any(|w| w[1].ts_micros < w[0].ts_micros)
        {
            return Err(HttpError::InvalidFlow(format!(
                "flow {} has decreasing timestamps",
                self.flow_id
            )));
        }
        Ok(())
    }

    pub fn is_response_only(&self) -> bool {
        self.messages.iter().all(|m| m.direction == Direction::Response)
    }

    pub fn requests(&self) -> impl Iterator<Item = &HttpMessage> {
        self.messages.iter().filter(|m| m.is_request())
    }

    pub fn responses(&self) -> impl Iterator<Item = &HttpMessage> {
        self.messages.iter().filter(|m| !m.is_request())
    }
}

pub const DEFAULT_IDLE_GAP_S: f64 = 60.0;

/// Groups captured messages into flows.
///
/// Response keys are reversed so every flow is keyed client to server. Within
/// a key, messages are ordered by timestamp (ties by input order) and a gap
/// strictly longer than `idle_gap_s` starts a new flow. Output flows are
/// ordered by their first message.
pub fn assemble_flows(messages: Vec<(FlowKey, HttpMessage)>, idle_gap_s: f64) -> Vec<Flow> {
    let gap_micros = (idle_gap_s * 1e6).round() as i64;
    let mut by_key: BTreeMap<FlowKey, Vec<(usize, HttpMessage)>> = BTreeMap::new();
    for (index, (key, msg)) in messages.into_iter().enumerate() {
        let key = match msg.direction {
            Direction::Request => key,
            Direction::Response => key.reversed(),
        };
        by_key.entry(key).or_default().push((index, msg));
    }

    let mut flows: Vec<(i64, usize, Flow)> = Vec::new();
    for (key, mut msgs) in by_key {
        msgs.sort_by_key(|(index, m)| (m.ts_micros, *index));
        let mut segment = 0usize;
        let mut current: Vec<(usize, HttpMessage)> = Vec::new();
        let mut close = |current: &mut Vec<(usize, HttpMessage)>, segment: &mut usize| {
            let first_ts = current[0].1.ts_micros;
            let first_index = current[0].0;
            let flow_id = format!("{key}@{first_ts}#{segment}");
            let messages = current.drain(..).map(|(_, m)| m).collect();
            flows.push((
                first_ts,
                first_index,
                Flow {
                    flow_id,
                    key,
                    label: Label::Unlabeled,
                    messages,
                },
            ));
            *segment += 1;
        };
        for (index, msg) in msgs {
            if let Some((_, last)) = current.last() {
                if msg.ts_micros - last.ts_micros > gap_micros {
                    close(&mut current, &mut segment);
                }
            }
            current.push((index, msg));
        }
        if !current.is_empty() {
            close(&mut current, &mut segment);
        }
    }
    flows.sort_by_key(|(ts, index, _)| (*ts, *index));
    flows.into_iter().map(|(_, _, f)| f).collect()
}
