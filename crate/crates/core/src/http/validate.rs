use std::fmt;

use super::message::{Direction, HttpMessage};
use super::parse::{content_length, header_value_ok, is_field_text_byte, is_target_byte, is_token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    BadVersion { major: u8, minor: u8 },
    MissingMethod,
    IllegalMethod,
    MissingTarget,
    IllegalTarget,
    UnexpectedStatusLine,
    MissingStatus,
    StatusOutOfRange(u16),
    IllegalReason,
    UnexpectedRequestLine,
    IllegalHeaderName { index: usize },
    IllegalHeaderValue { index: usize },
    ContentLengthMismatch { declared: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadVersion { major, minor } => {
                write!(f, "bad version digits {major}.{minor}")
            }
            Violation::MissingMethod => f.write_str("request without method"),
            Violation::IllegalMethod => f.write_str("method is not a token"),
            Violation::MissingTarget => f.write_str("request without target"),
            Violation::IllegalTarget => f.write_str("illegal request-target"),
            Violation::UnexpectedStatusLine => f.write_str("request carries status fields"),
            Violation::MissingStatus => f.write_str("response without status code"),
            Violation::StatusOutOfRange(_) => f.write_str("status out of range"),
            Violation::IllegalReason => f.write_str("illegal reason phrase"),
            Violation::UnexpectedRequestLine => f.write_str("response carries request fields"),
            Violation::IllegalHeaderName { index } => {
                write!(f, "illegal header name chars (header {index})")
            }
            Violation::IllegalHeaderValue { index } => {
                write!(f, "illegal header value (header {index})")
            }
            Violation::ContentLengthMismatch { declared, actual } => {
                write!(f, "content-length {declared} but body is {actual} bytes")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidityReport {
    pub violations: Vec<Violation>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks a message against the strict HTTP/1.x grammar. An empty report
/// means the message serializes and re-parses to an equal message.
pub fn validate_message(msg: &HttpMessage) -> ValidityReport {
    let mut v = Vec::new();
    if msg.version_major > 9 || msg.version_minor > 9 {
        v.push(Violation::BadVersion {
            major: msg.version_major,
            minor: msg.version_minor,
        });
    }
    match msg.direction {
        Direction::Request => {
            match &msg.method {
                None => v.push(Violation::MissingMethod),
                Some(m) if !is_token(m) => v.push(Violation::IllegalMethod),
                _ => {}
            }
            match &msg.target {
                None => v.push(Violation::MissingTarget),
                Some(t) if t.is_empty() || !t.iter().all(|&b| is_target_byte(b)) => {
                    v.push(Violation::IllegalTarget)
                }
                _ => {}
            }
            if msg.status_code.is_some() || msg.reason.is_some() {
                v.push(Violation::UnexpectedStatusLine);
            }
        }
        Direction::Response => {
            match msg.status_code {
                None => v.push(Violation::MissingStatus),
                Some(c) if !(100..=599).contains(&c) => v.push(Violation::StatusOutOfRange(c)),
                _ => {}
            }
            if let Some(r) = &msg.reason {
                if !r.iter().all(|&b| is_field_text_byte(b)) {
                    v.push(Violation::IllegalReason);
                }
            }
            if msg.method.is_some() || msg.target.is_some() {
                v.push(Violation::UnexpectedRequestLine);
            }
        }
    }
    for (index, h) in msg.headers.iter().enumerate() {
        if !is_token(&h.name) {
            v.push(Violation::IllegalHeaderName { index });
        }
        if !header_value_ok(&h.value) {
            v.push(Violation::IllegalHeaderValue { index });
        }
    }
    if let Some(declared) = content_length(&msg.headers) {
        if declared != msg.body.len() {
            v.push(Violation::ContentLengthMismatch {
                declared,
                actual: msg.body.len(),
            });
        }
    }
    ValidityReport { violations: v }
}
