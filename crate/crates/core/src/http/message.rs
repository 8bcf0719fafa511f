use std::fmt;

use serde::{Deserialize, Serialize};

/// Which side of the conversation produced a message.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Request,
    Response,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Request => f.write_str("request"),
            Direction::Response => f.write_str("response"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Header {
    pub name: Vec<u8>,
    pub value: Vec<u8>,
}

impl Header {
    pub fn new(name: impl Into<Vec<u8>>, value: impl Into<Vec<u8>>) -> Self {
        Header {
            name: name.into(),
            value: value.into(),
        }
    }

    pub fn is(&self, name: &str) -> bool {
        self.name.eq_ignore_ascii_case(name.as_bytes())
    }
}

/// A single parsed HTTP/1.x message (one application-layer packet).
///
/// Requests carry `method` and `target`; responses carry `status_code` and
/// `reason`. `raw` holds the exact bytes the message was parsed from, or the
/// canonical serialization for constructed messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpMessage {
    pub direction: Direction,
    pub ts_micros: i64,
    pub method: Option<Vec<u8>>,
    pub target: Option<Vec<u8>>,
    pub version_major: u8,
    pub version_minor: u8,
    pub status_code: Option<u16>,
    pub reason: Option<Vec<u8>>,
    pub headers: Vec<Header>,
    pub body: Vec<u8>,
    pub raw: Vec<u8>,
}

impl HttpMessage {
    /// Builds an HTTP/1.1 request whose `raw` is its canonical wire form.
    pub fn request(
        method: impl Into<Vec<u8>>,
        target: impl Into<Vec<u8>>,
        headers: Vec<Header>,
        body: impl Into<Vec<u8>>,
        ts_micros: i64,
    ) -> Self {
        let mut msg = HttpMessage {
            direction: Direction::Request,
            ts_micros,
            method: Some(method.into()),
            target: Some(target.into()),
            version_major: 1,
            version_minor: 1,
            status_code: None,
            reason: None,
            headers,
            body: body.into(),
            raw: Vec::new(),
        };
        msg.refresh_raw();
        msg
    }

    /// Builds an HTTP/1.1 response whose `raw` is its canonical wire form.
    pub fn response(
        status_code: u16,
        reason: impl Into<Vec<u8>>,
        headers: Vec<Header>,
        body: impl Into<Vec<u8>>,
        ts_micros: i64,
    ) -> Self {
        let mut msg = HttpMessage {
            direction: Direction::Response,
            ts_micros,
            method: None,
            target: None,
            version_major: 1,
            version_minor: 1,
            status_code: Some(status_code),
            reason: Some(reason.into()),
            headers,
            body: body.into(),
            raw: Vec::new(),
        };
        msg.refresh_raw();
        msg
    }

    /// Replaces `raw` with the canonical serialization of the current fields.
    pub fn refresh_raw(&mut self) {
        self.raw = super::write_wire(self);
    }

    pub fn is_request(&self) -> bool {
        self.direction == Direction::Request
    }

    /// First header with the given name, compared case-insensitively.
    pub fn header(&self, name: &str) -> Option<&[u8]> {
        self.headers
            .iter()
            .find(|h| h.is(name))
            .map(|h| h.value.as_slice())
    }

    /// Field-wise equality that ignores `raw`.
    pub fn same_fields(&self, other: &HttpMessage) -> bool {
        self.direction == other.direction
            && self.ts_micros == other.ts_micros
            && self.method == other.method
            && self.target == other.target
            && self.version_major == other.version_major
            && self.version_minor == other.version_minor
            && self.status_code == other.status_code
            && self.reason == other.reason
            && self.headers == other.headers
            && self.body == other.body
    }
}
