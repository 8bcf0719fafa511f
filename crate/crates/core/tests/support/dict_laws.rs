//! Randomized dictionary-partition checks against independent word counts.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::net::{IpAddr, Ipv4Addr};

use hmcd::gaf::{build_dictionary, message_fields, tokenize_content, WordClass};
use hmcd::http::{Flow, FlowKey, Header, HttpMessage, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WORDS: [&str; 10] = ["a", "id", "cmd", "x1", "gate", "php", "img", "7f", "q", "run"];

fn random_flows(rng: &mut ChaCha8Rng, label: Label) -> Vec<Flow> {
    let ip = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1));
    let pick = |rng: &mut ChaCha8Rng, n: usize, sep: &str| -> String {
        (0..n).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(sep)
    };
    (0..rng.gen_range(1..12))
        .map(|i| {
            let n = rng.gen_range(1..6);
            let target = format!("/{}?{}", pick(rng, n, "/"), pick(rng, 2, "="));
            let k = rng.gen_range(1..3);
            let ua = pick(rng, k, " ");
            let req = HttpMessage::request("GET", target, vec![Header::new("User-Agent", ua)], "", 0);
            Flow::new(format!("f{i}"), FlowKey::new(ip, 1000 + i as u16, ip, 80), label, vec![req]).unwrap()
        })
        .collect()
}

type Counts = BTreeMap<(String, Vec<u8>), u64>;

fn count(flows: &[Flow]) -> Counts {
    let mut c = Counts::new();
    for f in flows {
        for m in &f.messages {
            for (field, content) in message_fields(m) {
                for w in tokenize_content(&content).0 {
                    *c.entry((field.clone(), w)).or_default() += 1;
                }
            }
        }
    }
    c
}

/// Builds dictionaries for `cases` random corpora and checks that the
/// malicious and benign sets are disjoint, the gray set is exactly the kept
/// words seen in both corpora, and every kept frequency exceeds `p`.
pub fn check_random_corpora(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let mal = random_flows(&mut rng, Label::Malicious);
        let ben = random_flows(&mut rng, Label::Benign);
        let p = rng.gen_range(0..8u64);
        let dict = build_dictionary(&mal, &ben, p).map_err(|e| e.to_string())?;
        let (cm, cb) = (count(&mal), count(&ben));
        let fail = |what: String| Err(format!("case {case} (p={p}): {what}"));
        let all_fields: BTreeSet<&String> = cm.keys().chain(cb.keys()).map(|(f, _)| f).collect();
        for field in all_fields {
            let classes = |class| -> BTreeSet<Vec<u8>> {
                dict.field(field)
                    .map(|v| v.of_class(class).iter().map(|(w, _)| w.to_vec()).collect())
                    .unwrap_or_default()
            };
            let (m, g, b) = (classes(WordClass::Mal), classes(WordClass::Gray), classes(WordClass::Ben));
            if !m.is_disjoint(&b) || !m.is_disjoint(&g) || !g.is_disjoint(&b) {
                return fail(format!("{field}: classes overlap"));
            }
            let get = |c: &Counts, w: &Vec<u8>| c.get(&(field.clone(), w.clone())).copied().unwrap_or(0);
            let words: BTreeSet<Vec<u8>> = cm
                .keys()
                .chain(cb.keys())
                .filter(|(f, _)| f == field)
                .map(|(_, w)| w.clone())
                .collect();
            let kept = |w: &Vec<u8>| get(&cm, w) + get(&cb, w) > p;
            let expect = |pred: &dyn Fn(&Vec<u8>) -> bool| -> BTreeSet<Vec<u8>> {
                words.iter().filter(|w| kept(w) && pred(w)).cloned().collect()
            };
            let gray = expect(&|w| get(&cm, w) > 0 && get(&cb, w) > 0);
            let mal_only = expect(&|w| get(&cb, w) == 0);
            let ben_only = expect(&|w| get(&cm, w) == 0);
            if g != gray || m != mal_only || b != ben_only {
                return fail(format!("{field}: partition differs from the counted oracle"));
            }
            if let Some(v) = dict.field(field) {
                for (w, e) in v.iter() {
                    if e.freq <= p || e.freq != get(&cm, &w.to_vec()) + get(&cb, &w.to_vec()) {
                        return fail(format!("{field}: word {w:?} kept with frequency {}", e.freq));
                    }
                }
            }
        }
    }
    Ok(cases)
}
