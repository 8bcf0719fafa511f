//! Splitting field contents into words while keeping the separators.

/// Bytes that separate words inside a field content.
pub const DELIMITERS: &[u8] = b"?=&,;:/ ";

pub fn is_delimiter(b: u8) -> bool {
    DELIMITERS.contains(&b)
}

/// The literal separator runs around the words of one content: entry 0 is
/// before the first word, entry `i` between words `i-1` and `i`, the last
/// after the final word. Always one longer than the word list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelimiterTemplate {
    pub separators: Vec<Vec<u8>>,
}

impl DelimiterTemplate {
    pub fn words(&self) -> usize {
        self.separators.len() - 1
    }

    /// True when the content had no separator bytes at all.
    pub fn is_empty(&self) -> bool {
        self.separators.iter().all(|s| s.is_empty())
    }

    /// Joins `words` with this template. When the word count differs from
    /// the template, the leading and trailing runs are kept, surplus inner
    /// separators are dropped and missing ones repeat the last inner
    /// separator (or `&` when the template has none).
    pub fn rejoin<W: AsRef<[u8]>>(&self, words: &[W]) -> Vec<u8> {
        let n = self.separators.len();
        let inner = if n > 2 { &self.separators[1..n - 1] } else { &[] };
        let fallback: &[u8] = inner.last().map_or(b"&", |s| s.as_slice());
        let mut out = Vec::new();
        if words.is_empty() {
            out.extend_from_slice(&self.separators[0]);
            if n > 1 {
                out.extend_from_slice(&self.separators[n - 1]);
            }
            return out;
        }
        out.extend_from_slice(&self.separators[0]);
        for (i, w) in words.iter().enumerate() {
            if i > 0 {
                out.extend_from_slice(inner.get(i - 1).map_or(fallback, |s| s.as_slice()));
            }
            out.extend_from_slice(w.as_ref());
        }
        if n > 1 {
            out.extend_from_slice(&self.separators[n - 1]);
        }
        out
    }
}

/// Splits on [`DELIMITERS`], dropping empty words. Rejoining the words with
/// the returned template reproduces `content` exactly.
pub fn tokenize_content(content: &[u8]) -> (Vec<Vec<u8>>, DelimiterTemplate) {
    let mut words = Vec::new();
    let mut separators = vec![Vec::new()];
    let mut i = 0;
    while i < content.len() {
        if is_delimiter(content[i]) {
            separators.last_mut().unwrap().push(content[i]);
            i += 1;
        } else {
            let start = i;
            while i < content.len() && !is_delimiter(content[i]) {
                i += 1;
            }
            words.push(content[start..i].to_vec());
            separators.push(Vec::new());
        }
    }
    (words, DelimiterTemplate { separators })
}
