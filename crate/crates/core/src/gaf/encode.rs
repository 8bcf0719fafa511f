//! Fixed-length id sequences for field contents, and malicious-word
//! injection.

use rand::Rng;

use super::dict::{FieldDictionary, WordClass, OOV, PAD};
use super::tokenize::{tokenize_content, DelimiterTemplate};
use super::GafError;

/// Default number of word slots per field.
pub const DEFAULT_SEQ_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub field: String,
    pub ids: Vec<u32>,
    pub template: DelimiterTemplate,
}

/// Maps the words of `content` to ids (OOV when unknown), truncated or
/// PAD-filled to `len` slots.
pub fn encode_field(field: &str, content: &[u8], dict: &FieldDictionary, len: usize) -> TokenSequence {
    let (words, template) = tokenize_content(content);
    let mut ids: Vec<u32> = words.iter().take(len).map(|w| dict.id_of(field, w)).collect();
    ids.resize(len, PAD);
    TokenSequence {
        field: field.to_string(),
        ids,
        template,
    }
}

/// Words for `ids`, skipping PAD and OOV.
pub fn decode_words<'d>(field: &str, ids: &[u32], dict: &'d FieldDictionary) -> Vec<&'d [u8]> {
    let Some(vocab) = dict.field(field) else {
        return Vec::new();
    };
    ids.iter()
        .filter(|&&id| id != PAD && id != OOV)
        .filter_map(|&id| vocab.word(id))
        .collect()
}

pub fn decode_field(seq: &TokenSequence, dict: &FieldDictionary) -> Vec<u8> {
    seq.template.rejoin(&decode_words(&seq.field, &seq.ids, dict))
}

/// One malicious word placed at one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MalPos {
    pub position: usize,
    pub word: Vec<u8>,
}

/// Replaces the ids at each `mal_pos` slot with that word's id.
pub fn inject_malicious(
    seq: &TokenSequence,
    mal_pos: &[MalPos],
    dict: &FieldDictionary,
) -> Result<TokenSequence, GafError> {
    let mut out = seq.clone();
    for mp in mal_pos {
        if mp.position >= seq.ids.len() {
            return Err(GafError::PositionOutOfRange {
                position: mp.position,
                len: seq.ids.len(),
            });
        }
        if !dict.is_malicious_word(&seq.field, &mp.word) {
            return Err(GafError::WordNotInMalDict {
                field: seq.field.clone(),
                word: String::from_utf8_lossy(&mp.word).into_owned(),
            });
        }
        out.ids[mp.position] = dict.id_of(&seq.field, &mp.word);
    }
    Ok(out)
}

/// Draws `count` malicious words of `field` at distinct slots among the
/// first `words + 1` positions, so a word either replaces existing
/// content or directly follows it. Empty when the field has no malicious
/// vocabulary.
pub fn sample_mal_pos<R: Rng>(
    dict: &FieldDictionary,
    field: &str,
    words: usize,
    len: usize,
    count: usize,
    rng: &mut R,
) -> Vec<MalPos> {
    let Some(vocab) = dict.field(field) else {
        return Vec::new();
    };
    let mal = vocab.of_class(WordClass::Mal);
    if mal.is_empty() || len == 0 {
        return Vec::new();
    }
    let span = (words + 1).min(len);
    let positions = rand::seq::index::sample(rng, span, count.min(span));
    let mut out: Vec<MalPos> = positions
        .into_iter()
        .map(|position| MalPos {
            position,
            word: mal[rng.gen_range(0..mal.len())].0.to_vec(),
        })
        .collect();
    out.sort_by_key(|m| m.position);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaf::build_dictionary;
    use crate::http::{Flow, FlowKey, HttpMessage, Label};
    use proptest::prelude::*;
    use std::net::{IpAddr, Ipv4Addr};

    fn flow(targets: &[&str]) -> Flow {
        let ip = IpAddr::V4(Ipv4Addr::LOCALHOST);
        let msgs = targets
            .iter()
            .map(|t| HttpMessage::request("GET", *t, vec![], "", 0))
            .collect();
        Flow::new("f", FlowKey::new(ip, 1, ip, 2), Label::Unlabeled, msgs).unwrap()
    }

    fn dict() -> FieldDictionary {
        let mal = flow(&["/evil?cmd=run"; 6]);
        let ben = flow(&["/a/b/c/d?x=1&y=2&cmd=ok"; 6]);
        build_dictionary(&[mal], &[ben], 5).unwrap()
    }

    #[test]
    fn empty_content_is_all_pad() {
        let s = encode_field("GET", b"", &dict(), 8);
        assert_eq!(s.ids, vec![PAD; 8]);
        assert_eq!(decode_field(&s, &dict()), b"");
    }

    #[test]
    fn unknown_words_are_oov_and_long_content_truncates() {
        let d = dict();
        let s = encode_field("GET", b"/a/zzz/b", &d, 4);
        assert_eq!(s.ids[1], OOV);
        assert_eq!(s.ids[3], PAD);
        let s = encode_field("GET", b"/a/b/c/d/a/b/c", &d, 4);
        assert_eq!(s.ids, ["a", "b", "c", "d"].map(|w| d.id_of("GET", w.as_bytes())));
        assert_eq!(decode_field(&s, &d), b"/a/b/c/d");
    }

    #[test]
    fn injection_rules() {
        let d = dict();
        let s = encode_field("GET", b"/a/b", &d, 6);
        assert_eq!(inject_malicious(&s, &[], &d).unwrap(), s);
        let mp = [MalPos { position: 0, word: b"evil".to_vec() }];
        let once = inject_malicious(&s, &mp, &d).unwrap();
        assert_eq!(once.ids[0], d.id_of("GET", b"evil"));
        assert_eq!(once.ids[1..], s.ids[1..]);
        assert_eq!(inject_malicious(&once, &mp, &d).unwrap(), once);
        assert_eq!(decode_field(&once, &d), b"/evil/b");
        let far = [MalPos { position: 6, word: b"evil".to_vec() }];
        assert!(matches!(
            inject_malicious(&s, &far, &d),
            Err(GafError::PositionOutOfRange { position: 6, len: 6 })
        ));
        // "cmd" occurs in both corpora, so it is gray, not malicious
        let gray = [MalPos { position: 0, word: b"cmd".to_vec() }];
        assert!(matches!(
            inject_malicious(&s, &gray, &d),
            Err(GafError::WordNotInMalDict { .. })
        ));
    }

    #[test]
    fn sampled_positions_are_distinct_and_malicious() {
        let d = dict();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        for _ in 0..20 {
            let mp = sample_mal_pos(&d, "GET", 3, 32, 2, &mut rng);
            assert_eq!(mp.len(), 2);
            assert!(mp[0].position < mp[1].position && mp[1].position <= 3);
            assert!(mp.iter().all(|m| d.is_malicious_word("GET", &m.word)));
        }
        assert!(sample_mal_pos(&d, "POST", 3, 32, 1, &mut rng).is_empty());
    }

    proptest! {
        #[test]
        fn in_vocabulary_round_trip(
            picks in proptest::collection::vec(0usize..8, 0..=6),
            seps in proptest::collection::vec(proptest::sample::select(vec!["/", "?", "=", "&", "//"]), 7),
        ) {
            let vocab = ["a", "b", "c", "d", "x", "1", "y", "2"];
            let mut content = String::from(seps[0]);
            for (i, &p) in picks.iter().enumerate() {
                if i > 0 { content.push_str(seps[i]); }
                content.push_str(vocab[p]);
            }
            let d = dict();
            let s = encode_field("GET", content.as_bytes(), &d, 6);
            prop_assert_eq!(decode_field(&s, &d), content.into_bytes());
        }
    }
}
