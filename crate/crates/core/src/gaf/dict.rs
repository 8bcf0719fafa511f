//! Per-field word dictionaries split into malicious-only, shared and
//! benign-only vocabularies.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::tokenize::tokenize_content;
use super::GafError;
use crate::http::{Flow, HttpMessage};

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;
/// Default pruning threshold: words must occur more than this many times.
pub const DEFAULT_THRESHOLD: u64 = 5;
/// Threshold that prunes every word.
pub const INFINITE_THRESHOLD: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WordClass {
    Mal,
    Gray,
    Ben,
}

impl fmt::Display for WordClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WordClass::Mal => "mal",
            WordClass::Gray => "gray",
            WordClass::Ben => "ben",
        })
    }
}

impl FromStr for WordClass {
    type Err = GafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mal" => Ok(WordClass::Mal),
            "gray" => Ok(WordClass::Gray),
            "ben" => Ok(WordClass::Ben),
            other => Err(GafError::Dictionary(format!("unknown word class {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordEntry {
    pub id: u32,
    /// Combined occurrence count over both corpora.
    pub freq: u64,
    pub class: WordClass,
}

/// Vocabulary of one field. Ids start at 2, after PAD and OOV.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FieldVocab {
    words: BTreeMap<Vec<u8>, WordEntry>,
    by_id: Vec<Vec<u8>>,
}

impl FieldVocab {
    /// Builds a vocabulary from `(word, freq, class)` triples, assigning ids
    /// by descending frequency then byte-wise word order.
    fn from_counts(mut entries: Vec<(Vec<u8>, u64, WordClass)>) -> Self {
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut vocab = FieldVocab::default();
        for (i, (word, freq, class)) in entries.into_iter().enumerate() {
            vocab.words.insert(
                word.clone(),
                WordEntry {
                    id: i as u32 + 2,
                    freq,
                    class,
                },
            );
            vocab.by_id.push(word);
        }
        vocab
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    /// Width of a one-hot position: the words plus PAD and OOV.
    pub fn size(&self) -> usize {
        self.by_id.len() + 2
    }

    pub fn entry(&self, word: &[u8]) -> Option<&WordEntry> {
        self.words.get(word)
    }

    pub fn word(&self, id: u32) -> Option<&[u8]> {
        id.checked_sub(2)
            .and_then(|i| self.by_id.get(i as usize))
            .map(|w| w.as_slice())
    }

    /// Words of one class in id order.
    pub fn of_class(&self, class: WordClass) -> Vec<(&[u8], &WordEntry)> {
        self.by_id
            .iter()
            .map(|w| (w.as_slice(), &self.words[w]))
            .filter(|(_, e)| e.class == class)
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[u8], &WordEntry)> {
        self.by_id.iter().map(move |w| (w.as_slice(), &self.words[w]))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDictionary {
    pub threshold: u64,
    fields: BTreeMap<String, FieldVocab>,
}

/// The named fields of a message: a request start line is the field named
/// after its method holding the target, a response start line the field
/// named after its status code holding the reason, and every header the
/// field named after its lowercased name holding the value.
pub fn message_fields(msg: &HttpMessage) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::with_capacity(msg.headers.len() + 1);
    if msg.is_request() {
        if let (Some(m), Some(t)) = (&msg.method, &msg.target) {
            out.push((String::from_utf8_lossy(m).into_owned(), t.clone()));
        }
    } else if let Some(code) = msg.status_code {
        out.push((format!("{code:03}"), msg.reason.clone().unwrap_or_default()));
    }
    for h in &msg.headers {
        out.push((
            String::from_utf8_lossy(&h.name).to_ascii_lowercase(),
            h.value.clone(),
        ));
    }
    out
}

type Counts = BTreeMap<String, BTreeMap<Vec<u8>, u64>>;

fn count_words(flows: &[Flow]) -> Counts {
    flows
        .par_iter()
        .fold(Counts::new, |mut acc, flow| {
            for msg in &flow.messages {
                for (field, content) in message_fields(msg) {
                    let slot = acc.entry(field).or_default();
                    for w in tokenize_content(&content).0 {
                        *slot.entry(w).or_default() += 1;
                    }
                }
            }
            acc
        })
        .reduce(Counts::new, |mut a, b| {
            for (field, words) in b {
                let slot = a.entry(field).or_default();
                for (w, n) in words {
                    *slot.entry(w).or_default() += n;
                }
            }
            a
        })
}

/// Counts words per field in both corpora and keeps those whose combined
/// count exceeds `threshold`. Words seen only in malicious flows go to the
/// malicious vocabulary, words seen only in benign flows to the benign one,
/// and words seen in both to the shared (gray) one.
pub fn build_dictionary(
    malicious: &[Flow],
    benign: &[Flow],
    threshold: u64,
) -> Result<FieldDictionary, GafError> {
    if malicious.is_empty() || benign.is_empty() {
        return Err(GafError::EmptyCorpus);
    }
    let (mal, ben) = rayon::join(|| count_words(malicious), || count_words(benign));
    let field_names: std::collections::BTreeSet<&String> = mal.keys().chain(ben.keys()).collect();
    let empty = BTreeMap::new();
    let mut fields = BTreeMap::new();
    for field in field_names {
        let m = mal.get(field).unwrap_or(&empty);
        let b = ben.get(field).unwrap_or(&empty);
        let mut entries = Vec::new();
        for word in m.keys().chain(b.keys().filter(|w| !m.contains_key(*w))) {
            let (cm, cb) = (m.get(word).copied().unwrap_or(0), b.get(word).copied().unwrap_or(0));
            let total = cm.saturating_add(cb);
            if total <= threshold {
                continue;
            }
            let class = match (cm > 0, cb > 0) {
                (true, false) => WordClass::Mal,
                (false, true) => WordClass::Ben,
                _ => WordClass::Gray,
            };
            entries.push((word.clone(), total, class));
        }
        if !entries.is_empty() {
            fields.insert(field.clone(), FieldVocab::from_counts(entries));
        }
    }
    Ok(FieldDictionary { threshold, fields })
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x21..=0x7e).contains(&b) && b != b'%' && b != b'[' && b != b']' {
            s.push(b as char);
        } else {
            s.push_str(&format!("%{b:02X}"));
        }
    }
    s
}

fn unescape(s: &str) -> Result<Vec<u8>, GafError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s
                .get(i + 1..i + 3)
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| GafError::Dictionary(format!("bad escape in {s:?}")))?;
            out.push(hex);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Ok(out)
}

impl FieldDictionary {
    pub fn field(&self, name: &str) -> Option<&FieldVocab> {
        self.fields.get(name)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &FieldVocab)> {
        self.fields.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Id of `word` in `field`, or OOV.
    pub fn id_of(&self, field: &str, word: &[u8]) -> u32 {
        self.field(field)
            .and_then(|v| v.entry(word))
            .map_or(OOV, |e| e.id)
    }

    pub fn is_malicious_word(&self, field: &str, word: &[u8]) -> bool {
        self.field(field)
            .and_then(|v| v.entry(word))
            .is_some_and(|e| e.class == WordClass::Mal)
    }

    /// Text form: a `threshold=` line, then per field a `[name]` line
    /// followed by `word<TAB>id<TAB>freq<TAB>class` lines in id order.
    /// Words and field names are percent-escaped outside printable ASCII.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if self.threshold == INFINITE_THRESHOLD {
            s.push_str("threshold=inf\n");
        } else {
            s.push_str(&format!("threshold={}\n", self.threshold));
        }
        for (name, vocab) in &self.fields {
            s.push_str(&format!("[{}]\n", escape(name.as_bytes())));
            for (word, e) in vocab.iter() {
                s.push_str(&format!("{}\t{}\t{}\t{}\n", escape(word), e.id, e.freq, e.class));
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, GafError> {
        let bad = |line: usize, what: &str| GafError::Dictionary(format!("line {line}: {what}"));
        let mut lines = text.lines().enumerate();
        let threshold = match lines.next() {
            Some((_, "threshold=inf")) => INFINITE_THRESHOLD,
            Some((i, l)) => l
                .strip_prefix("threshold=")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| bad(i + 1, "expected threshold"))?,
            None => return Err(bad(1, "empty dictionary file")),
        };
        let mut fields = BTreeMap::new();
        let mut current: Option<(String, Vec<(Vec<u8>, WordEntry)>)> = None;
        let finish = |cur: Option<(String, Vec<(Vec<u8>, WordEntry)>)>,
                          fields: &mut BTreeMap<String, FieldVocab>|
         -> Result<(), GafError> {
            if let Some((name, entries)) = cur {
                let mut vocab = FieldVocab::default();
                for (k, (w, e)) in entries.into_iter().enumerate() {
                    if e.id as usize != k + 2 || vocab.words.contains_key(&w) {
                        return Err(GafError::Dictionary(format!(
                            "field {name}: ids must run 2, 3, ... without duplicates"
                        )));
                    }
                    vocab.words.insert(w.clone(), e);
                    vocab.by_id.push(w);
                }
                fields.insert(name, vocab);
            }
            Ok(())
        };
        for (i, line) in lines {
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                finish(current.take(), &mut fields)?;
                let name = String::from_utf8(unescape(name)?)
                    .map_err(|_| bad(i + 1, "field name is not UTF-8"))?;
                current = Some((name, Vec::new()));
                continue;
            }
            let parts: Vec<&str> = line.split('\t').collect();
            let [word, id, freq, class] = parts[..] else {
                return Err(bad(i + 1, "expected four tab-separated columns"));
            };
            let entry = WordEntry {
                id: id.parse().map_err(|_| bad(i + 1, "bad id"))?,
                freq: freq.parse().map_err(|_| bad(i + 1, "bad frequency"))?,
                class: class.parse()?,
            };
            let (_, entries) = current
                .as_mut()
                .ok_or_else(|| bad(i + 1, "word before any [field]"))?;
            entries.push((unescape(word)?, entry));
        }
        finish(current, &mut fields)?;
        Ok(FieldDictionary { threshold, fields })
    }

    /// Hex SHA-256 of the text form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_text().as_bytes()))
    }

    pub fn save(&self, path: &Path) -> Result<(), GafError> {
        fs::write(path, self.to_text()).map_err(|source| GafError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GafError> {
        let text = fs::read_to_string(path).map_err(|source| GafError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(&text)
    }
}
