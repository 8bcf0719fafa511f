//! Deterministic synthetic traffic for demos and tests.
//!
//! Benign and malicious flows share the same shape (a request and its
//! response, sometimes a second exchange) and differ by a marker word in
//! the request target and the `User-Agent`, so a working detector can
//! separate them perfectly.

use std::net::{IpAddr, Ipv4Addr};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::http::{Flow, FlowKey, Header, HttpMessage, Label};

/// Marker word present in every malicious request target.
pub const MALICIOUS_MARKER: &str = "xmrig";

const PATHS: [&str; 6] = ["/index", "/news/list", "/api/v1/items", "/static/app", "/search", "/user/home"];
const PARAMS: [&str; 5] = ["page", "id", "q", "lang", "ref"];
const WORDS: [&str; 8] = ["alpha", "beta", "home", "view", "en", "42", "main", "top"];
const BENIGN_AGENTS: [&str; 3] = ["Mozilla/5.0", "curl/7.68.0", "okhttp/4.9"];
const MALICIOUS_AGENTS: [&str; 2] = ["Wget/1.20", "python-requests/2.25"];
const TYPES: [&str; 3] = ["text/html", "application/json", "text/plain"];

fn request<R: Rng>(rng: &mut R, malicious: bool, ts: i64) -> HttpMessage {
    let mut target = PATHS.choose(rng).unwrap().to_string();
    let mut pairs: Vec<String> = (0..rng.gen_range(1..=3))
        .map(|_| format!("{}={}", PARAMS.choose(rng).unwrap(), WORDS.choose(rng).unwrap()))
        .collect();
    if malicious {
        let at = rng.gen_range(0..=pairs.len());
        pairs.insert(at, format!("cmd={MALICIOUS_MARKER}"));
    }
    target.push('?');
    target.push_str(&pairs.join("&"));
    let agent = if malicious {
        MALICIOUS_AGENTS.choose(rng).unwrap()
    } else {
        BENIGN_AGENTS.choose(rng).unwrap()
    };
    let headers = vec![
        Header::new("Host", format!("h{}.example", rng.gen_range(1..6))),
        Header::new("User-Agent", *agent),
        Header::new("Accept", "*/*"),
    ];
    HttpMessage::request("GET", target.as_str(), headers, "", ts)
}

fn response<R: Rng>(rng: &mut R, ts: i64) -> HttpMessage {
    let body: String = (0..rng.gen_range(0..60))
        .map(|_| *WORDS.choose(rng).unwrap())
        .collect::<Vec<_>>()
        .join(" ");
    let headers = vec![
        Header::new("Server", "nginx"),
        Header::new("Content-Type", *TYPES.choose(rng).unwrap()),
        Header::new("Content-Length", body.len().to_string()),
    ];
    HttpMessage::response(200, "OK", headers, body.as_str(), ts)
}

/// `per_class` benign and `per_class` malicious flows, interleaved, with
/// distinct flow ids and keys.
pub fn separable_flows(per_class: usize, seed: u64) -> Vec<Flow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flows = Vec::with_capacity(2 * per_class);
    for i in 0..2 * per_class {
        let malicious = i % 2 == 1;
        let ts = i as i64 * 1_000_000;
        let mut messages = vec![request(&mut rng, malicious, ts), response(&mut rng, ts + 1000)];
        if rng.gen_bool(0.3) {
            messages.push(request(&mut rng, malicious, ts + 2000));
            messages.push(response(&mut rng, ts + 3000));
        }
        let n = i as u32;
        let key = FlowKey::new(
            IpAddr::V4(Ipv4Addr::from(0x0a00_0000 | (n & 0xffff))),
            1024 + (n % 60000) as u16,
            IpAddr::V4(Ipv4Addr::new(192, 0, 2, 1)),
            80,
        );
        let label = if malicious { Label::Malicious } else { Label::Benign };
        let id = format!("synth-{seed}-{i}");
        flows.push(Flow::new(id, key, label, messages).expect("timestamps increase"));
    }
    flows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::http::validate_message;

    #[test]
    fn flows_are_valid_balanced_and_deterministic() {
        let flows = separable_flows(20, 1);
        assert_eq!(flows.len(), 40);
        assert_eq!(flows.iter().filter(|f| f.label == Label::Malicious).count(), 20);
        for f in &flows {
            for m in &f.messages {
                assert!(validate_message(m).is_valid());
            }
            let target = String::from_utf8_lossy(f.messages[0].target.as_deref().unwrap()).into_owned();
            assert_eq!(target.contains(MALICIOUS_MARKER), f.label == Label::Malicious);
        }
        assert_eq!(flows, separable_flows(20, 1));
    }
}
