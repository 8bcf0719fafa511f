//! Strict HTTP/1.x grammar with an opt-in lenient mode for dirty captures.

use std::fmt;

use super::message::{Direction, Header, HttpMessage};
use super::HttpError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    #[default]
    Strict,
    /// Accepts bare LF line endings and a status line without a reason
    /// phrase, recording a warning for each.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseWarning {
    BareLineFeed { offset: usize },
    MissingReason,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseWarning::BareLineFeed { offset } => {
                write!(f, "bare LF line ending at offset {offset}")
            }
            ParseWarning::MissingReason => f.write_str("status line has no reason phrase"),
        }
    }
}

pub(crate) fn is_token_byte(b: u8) -> bool {
    matches!(b,
        b'!' | b'#' | b'$' | b'%' | b'&' | b'\'' | b'*' | b'+' | b'-' | b'.'
        | b'^' | b'_' | b'`' | b'|' | b'~' | b'0'..=b'9' | b'a'..=b'z' | b'A'..=b'Z')
}

pub(crate) fn is_token(s: &[u8]) -> bool {
    !s.is_empty() && s.iter().all(|&b| is_token_byte(b))
}

/// Visible characters, SP, HTAB and obs-text.
pub(crate) fn is_field_text_byte(b: u8) -> bool {
    b == b'\t' || b == b' ' || (0x21..=0x7e).contains(&b) || b >= 0x80
}

pub(crate) fn is_target_byte(b: u8) -> bool {
    (0x21..=0x7e).contains(&b) || b >= 0x80
}

fn is_ows(b: u8) -> bool {
    b == b' ' || b == b'\t'
}

fn trim_ows(mut s: &[u8]) -> &[u8] {
    while let [first, rest @ ..] = s {
        if is_ows(*first) {
            s = rest;
        } else {
            break;
        }
    }
    while let [rest @ .., last] = s {
        if is_ows(*last) {
            s = rest;
        } else {
            break;
        }
    }
    s
}

struct Line {
    start: usize,
    end: usize,
    next: usize,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    mode: ParseMode,
    warnings: Vec<ParseWarning>,
}

impl<'a> Cursor<'a> {
    /// Next line terminated by CRLF (or bare LF in lenient mode).
    fn next_line(&mut self, bad_ending: impl Fn(usize) -> HttpError) -> Result<Line, HttpError> {
        let start = self.pos;
        let rel = self.buf[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or(HttpError::TruncatedMessage {
                offset: self.buf.len(),
            })?;
        let lf = start + rel;
        let end = if lf > start && self.buf[lf - 1] == b'\r' {
            lf - 1
        } else {
            match self.mode {
                ParseMode::Strict => return Err(bad_ending(start)),
                ParseMode::Lenient => {
                    self.warnings.push(ParseWarning::BareLineFeed { offset: lf });
                    lf
                }
            }
        };
        if self.buf[start..end].contains(&b'\r') {
            return Err(bad_ending(start));
        }
        self.pos = lf + 1;
        Ok(Line {
            start,
            end,
            next: lf + 1,
        })
    }
}

fn parse_version(v: &[u8]) -> Option<(u8, u8)> {
    match v {
        [b'H', b'T', b'T', b'P', b'/', major, b'.', minor]
            if major.is_ascii_digit() && minor.is_ascii_digit() =>
        {
            Some((major - b'0', minor - b'0'))
        }
        _ => None,
    }
}

/// Parses one complete HTTP/1.x message in strict mode.
pub fn parse_http_message(
    bytes: &[u8],
    direction: Direction,
    ts_micros: i64,
) -> Result<HttpMessage, HttpError> {
    parse_http_message_with(bytes, direction, ts_micros, ParseMode::Strict).map(|(m, _)| m)
}

/// Parses one complete HTTP/1.x message, returning any lenient-mode warnings.
///
/// Start-line errors report offset 0 (the start of the start line); header
/// errors report the offset of the offending header line.
pub fn parse_http_message_with(
    bytes: &[u8],
    direction: Direction,
    ts_micros: i64,
    mode: ParseMode,
) -> Result<(HttpMessage, Vec<ParseWarning>), HttpError> {
    if bytes.is_empty() {
        return Err(HttpError::Empty);
    }
    let mut cur = Cursor {
        buf: bytes,
        pos: 0,
        mode,
        warnings: Vec::new(),
    };
    let start_err = |_| HttpError::MalformedStartLine { offset: 0 };
    let line = cur.next_line(start_err)?;
    let start_line = &bytes[line.start..line.end];
    let malformed = HttpError::MalformedStartLine { offset: 0 };

    let mut msg = HttpMessage {
        direction,
        ts_micros,
        method: None,
        target: None,
        version_major: 0,
        version_minor: 0,
        status_code: None,
        reason: None,
        headers: Vec::new(),
        body: Vec::new(),
        raw: bytes.to_vec(),
    };

    match direction {
        Direction::Request => {
            let mut parts = start_line.split(|&b| b == b' ');
            let (method, target, version) = match (parts.next(), parts.next(), parts.next()) {
                (Some(m), Some(t), Some(v)) if parts.next().is_none() => (m, t, v),
                _ => return Err(malformed),
            };
            if !is_token(method) || target.is_empty() || !target.iter().all(|&b| is_target_byte(b))
            {
                return Err(malformed);
            }
            let (major, minor) = parse_version(version).ok_or(malformed.clone())?;
            msg.method = Some(method.to_vec());
            msg.target = Some(target.to_vec());
            msg.version_major = major;
            msg.version_minor = minor;
        }
        Direction::Response => {
            if start_line.len() < 12 || start_line[8] != b' ' {
                return Err(malformed);
            }
            let (major, minor) = parse_version(&start_line[..8]).ok_or(malformed.clone())?;
            let code = &start_line[9..12];
            if !code.iter().all(u8::is_ascii_digit) {
                return Err(malformed);
            }
            let status = code
                .iter()
                .fold(0u16, |acc, &d| acc * 10 + u16::from(d - b'0'));
            let reason = match start_line.get(12) {
                Some(b' ') => start_line[13..].to_vec(),
                Some(_) => return Err(malformed),
                None => match mode {
                    ParseMode::Strict => return Err(malformed),
                    ParseMode::Lenient => {
                        cur.warnings.push(ParseWarning::MissingReason);
                        Vec::new()
                    }
                },
            };
            if !reason.iter().all(|&b| is_field_text_byte(b)) {
                return Err(malformed);
            }
            msg.version_major = major;
            msg.version_minor = minor;
            msg.status_code = Some(status);
            msg.reason = Some(reason);
        }
    }

    loop {
        let header_err = |offset| HttpError::MalformedHeader { offset };
        let line = cur.next_line(header_err)?;
        if line.start == line.end {
            break;
        }
        let text = &bytes[line.start..line.end];
        let malformed = HttpError::MalformedHeader { offset: line.start };
        if is_ows(text[0]) {
            // obs-fold continuation lines are not supported
            return Err(malformed);
        }
        let colon = text.iter().position(|&b| b == b':').ok_or(malformed.clone())?;
        let name = &text[..colon];
        let name_ok = match mode {
            ParseMode::Strict => is_token(name),
            ParseMode::Lenient => !name.is_empty(),
        };
        if !name_ok {
            return Err(malformed);
        }
        let value = trim_ows(&text[colon + 1..]);
        if mode == ParseMode::Strict && !value.iter().all(|&b| is_field_text_byte(b)) {
            return Err(malformed);
        }
        msg.headers.push(Header::new(name, value));
        debug_assert!(line.next == cur.pos);
    }

    msg.body = bytes[cur.pos..].to_vec();
    if let Some(expected) = content_length(&msg.headers) {
        if msg.body.len() < expected {
            return Err(HttpError::TruncatedMessage {
                offset: bytes.len(),
            });
        }
    }
    Ok((msg, cur.warnings))
}

/// Declared Content-Length, when present and well-formed.
pub(crate) fn content_length(headers: &[Header]) -> Option<usize> {
    headers
        .iter()
        .find(|h| h.is("content-length"))
        .and_then(|h| std::str::from_utf8(&h.value).ok())
        .and_then(|s| s.trim().parse().ok())
}

/// Canonical wire form of a message. Never fails; callers that need the
/// round-trip guarantee go through [`serialize_message`].
pub(crate) fn write_wire(msg: &HttpMessage) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 + msg.body.len());
    let version = |out: &mut Vec<u8>| {
        out.extend_from_slice(b"HTTP/");
        out.extend_from_slice(msg.version_major.to_string().as_bytes());
        out.push(b'.');
        out.extend_from_slice(msg.version_minor.to_string().as_bytes());
    };
    match msg.direction {
        Direction::Request => {
            out.extend_from_slice(msg.method.as_deref().unwrap_or_default());
            out.push(b' ');
            out.extend_from_slice(msg.target.as_deref().unwrap_or_default());
            out.push(b' ');
            version(&mut out);
        }
        Direction::Response => {
            version(&mut out);
            out.push(b' ');
            out.extend_from_slice(format!("{:03}", msg.status_code.unwrap_or(0)).as_bytes());
            out.push(b' ');
            out.extend_from_slice(msg.reason.as_deref().unwrap_or_default());
        }
    }
    out.extend_from_slice(b"\r\n");
    for h in &msg.headers {
        out.extend_from_slice(&h.name);
        out.extend_from_slice(b": ");
        out.extend_from_slice(&h.value);
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(&msg.body);
    out
}

/// Serializes a message to its canonical HTTP/1.x wire form.
///
/// Fails with [`HttpError::InvalidMessage`] when the message could not be
/// parsed back into an equal message.
pub fn serialize_message(msg: &HttpMessage) -> Result<Vec<u8>, HttpError> {
    let invalid = |what: &str| Err(HttpError::InvalidMessage(what.to_string()));
    match msg.direction {
        Direction::Request => {
            match &msg.method {
                None => return invalid("request without method"),
                Some(m) if !is_token(m) => return invalid("method is not a token"),
                _ => {}
            }
            match &msg.target {
                None => return invalid("request without target"),
                Some(t) if t.is_empty() || !t.iter().all(|&b| is_target_byte(b)) => {
                    return invalid("illegal request-target")
                }
                _ => {}
            }
            if msg.status_code.is_some() || msg.reason.is_some() {
                return invalid("request with status line fields");
            }
        }
        Direction::Response => {
            match msg.status_code {
                None => return invalid("response without status code"),
                Some(c) if c > 999 => return invalid("status code wider than 3 digits"),
                _ => {}
            }
            if msg.method.is_some() || msg.target.is_some() {
                return invalid("response with request line fields");
            }
            if let Some(r) = &msg.reason {
                if !r.iter().all(|&b| is_field_text_byte(b)) {
                    return invalid("illegal reason phrase");
                }
            }
        }
    }
    if msg.version_major > 9 || msg.version_minor > 9 {
        return invalid("version digits out of range");
    }
    for h in &msg.headers {
        if !is_token(&h.name) {
            return invalid("header name is not a token");
        }
        if !header_value_ok(&h.value) {
            return invalid("illegal header value");
        }
    }
    if let Some(expected) = content_length(&msg.headers) {
        if msg.body.len() < expected {
            return invalid("body shorter than Content-Length");
        }
    }
    Ok(write_wire(msg))
}

pub(crate) fn header_value_ok(v: &[u8]) -> bool {
    v.iter().all(|&b| is_field_text_byte(b))
        && v.first().is_none_or(|&b| !is_ows(b))
        && v.last().is_none_or(|&b| !is_ows(b))
}
