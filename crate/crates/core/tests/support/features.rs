//! Hand-computed feature fixtures and the packet-image oracle, shared by
//! the feature tests and the acceptance suite.
#![allow(dead_code)]

use std::net::{IpAddr, Ipv4Addr};

use hmcd::features::{flow_stats, packet_stats, packet_to_image, FLOW_STAT_DIM, IMAGE_COLS, IMAGE_ROWS, PKT_STAT_DIM};
use hmcd::http::{parse_http_message, Direction, Flow, FlowKey, HttpMessage, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn parse(raw: &[u8], ts: i64) -> HttpMessage {
    let dir = if raw.starts_with(b"HTTP/") { Direction::Response } else { Direction::Request };
    parse_http_message(raw, dir, ts).unwrap()
}

fn dense(len: usize, sparse: &[(usize, f64)]) -> Vec<f64> {
    let mut v = vec![0.0; len];
    for &(i, x) in sparse {
        v[i] = x;
    }
    v
}

/// Hand-computed Pkt-Stat vectors. Returns the number of fixtures checked.
pub fn packet_stats_fixtures() -> Result<usize, String> {
    let many: String = (0..19).map(|_| "A: b\r\n").collect();
    let many = format!("GET / HTTP/1.1\r\n{many}\r\n");
    let mut many_expected = vec![(0, 1.0), (1, 1.0), (2, 11.0), (3, 19.0)];
    many_expected.extend((4..40).map(|i| (i, 1.0)));
    let cases: Vec<(&[u8], Vec<(usize, f64)>)> = vec![
        (b"GET / HTTP/1.1\r\n\r\n", vec![(0, 1.0), (1, 1.0), (2, 11.0)]),
        (
            b"POST /up HTTP/1.0\r\nContent-Length: 5\r\n\r\nhello",
            vec![(0, 1.0), (1, 3.0), (2, 10.0), (3, 1.0), (4, 14.0), (22, 1.0), (40, 5.0)],
        ),
        (
            b"HTTP/1.1 200 OK\r\nServer: nginx\r\nContent-Length: 2\r\n\r\nhi",
            vec![(0, 2.0), (1, 2.0), (2, 11.0), (3, 2.0), (4, 6.0), (5, 14.0), (22, 5.0), (23, 1.0), (40, 2.0)],
        ),
        (
            b"HEAD /index.html HTTP/1.1\r\nHost: example.org\r\n\r\n",
            vec![(0, 1.0), (1, 11.0), (2, 11.0), (3, 1.0), (4, 4.0), (22, 11.0)],
        ),
        (
            b"HTTP/1.1 301 Moved Permanently\r\nLocation: /new\r\n\r\n",
            vec![(0, 2.0), (1, 17.0), (2, 11.0), (3, 1.0), (4, 8.0), (22, 4.0)],
        ),
        (
            b"GET /jk?c=2&p=f4Z24 HTTP/1.1\r\nHost: a.b\r\nUser-Agent: Wget/1.20\r\nAccept: */*\r\n\r\n",
            vec![(0, 1.0), (1, 15.0), (2, 11.0), (3, 3.0), (4, 4.0), (5, 10.0), (6, 6.0), (22, 3.0), (23, 9.0), (24, 3.0)],
        ),
        (
            b"HTTP/1.0 500 Internal Server Error\r\nContent-Length: 3\r\n\r\nerr",
            vec![(0, 2.0), (1, 21.0), (2, 10.0), (3, 1.0), (4, 14.0), (22, 1.0), (40, 3.0)],
        ),
        (many.as_bytes(), many_expected),
        (
            b"PUT /f HTTP/1.1\r\nContent-Length: 10\r\nContent-Type: text/plain\r\n\r\n0123456789",
            vec![(0, 1.0), (1, 2.0), (2, 11.0), (3, 2.0), (4, 14.0), (5, 12.0), (22, 2.0), (23, 10.0), (40, 10.0)],
        ),
        (b"HTTP/1.1 204 No Content\r\n\r\n", vec![(0, 2.0), (1, 10.0), (2, 11.0)]),
        (b"OPTIONS * HTTP/1.1\r\nX-Empty: \r\n\r\n", vec![(0, 1.0), (1, 1.0), (2, 11.0), (3, 1.0), (4, 7.0)]),
    ];
    let n = cases.len();
    for (raw, sparse) in cases {
        let got = packet_stats(&parse(raw, 0));
        if got.values() != dense(PKT_STAT_DIM, &sparse).as_slice() {
            return Err(format!("packet stats of {:?}: got {:?}", String::from_utf8_lossy(raw), got.values()));
        }
    }
    Ok(n)
}

const G: &[u8] = b"GET / HTTP/1.1\r\n\r\n"; // 18 bytes
const P: &[u8] = b"POST /up HTTP/1.0\r\nContent-Length: 5\r\n\r\nhello"; // 45
const H: &[u8] = b"HEAD / HTTP/1.1\r\n\r\n"; // 19
const O: &[u8] = b"OPTIONS * HTTP/1.1\r\n\r\n"; // 22
const D: &[u8] = b"DELETE /x HTTP/1.1\r\n\r\n"; // 22
const R100: &[u8] = b"HTTP/1.1 100 Continue\r\n\r\n"; // 25
const R200: &[u8] = b"HTTP/1.1 200 OK\r\n\r\n"; // 19
const R302: &[u8] = b"HTTP/1.1 302 Found\r\n\r\n"; // 22
const R404: &[u8] = b"HTTP/1.1 404 Not Found\r\n\r\n"; // 26
const R503: &[u8] = b"HTTP/1.1 503 Service Unavailable\r\n\r\n"; // 36
const R999: &[u8] = b"HTTP/1.1 999 X\r\n\r\n"; // 18

fn flow(raws: &[&[u8]]) -> Flow {
    let ip = IpAddr::V4(Ipv4Addr::new(10, 0, 0, 1));
    let messages = raws.iter().enumerate().map(|(i, r)| parse(r, i as i64)).collect();
    Flow::new("f", FlowKey::new(ip, 5000, ip, 80), Label::Benign, messages).unwrap()
}

/// Hand-computed Flow-Stat vectors. Returns the number of fixtures checked.
pub fn flow_stats_fixtures() -> Result<usize, String> {
    let lens: Vec<usize> = [G, P, H, O, D, R100, R200, R302, R404, R503, R999].iter().map(|r| r.len()).collect();
    if lens != [18, 45, 19, 22, 22, 25, 19, 22, 26, 36, 18] {
        return Err(format!("fixture lengths were miscounted: {lens:?}"));
    }
    let fifty = vec![G; 50];
    let mut fifty_expected = vec![(0, 50.0), (1, 50.0), (13, 18.0)];
    fifty_expected.extend((14..64).map(|i| (i, 18.0)));
    let cases: Vec<(Vec<&[u8]>, Vec<(usize, f64)>)> = vec![
        (vec![G], vec![(0, 1.0), (1, 1.0), (13, 18.0), (14, 18.0)]),
        (vec![G, R200], vec![(0, 1.0), (1, 1.0), (6, 1.0), (8, 1.0), (13, 18.5), (14, 18.0), (15, 19.0)]),
        (
            vec![P, R100, R200],
            vec![(0, 1.0), (2, 1.0), (6, 2.0), (7, 1.0), (8, 1.0), (13, 89.0 / 3.0), (14, 45.0), (15, 25.0), (16, 19.0)],
        ),
        (vec![H, R302], vec![(0, 1.0), (3, 1.0), (6, 1.0), (9, 1.0), (13, 20.5), (14, 19.0), (15, 22.0)]),
        (vec![O, R404], vec![(0, 1.0), (4, 1.0), (6, 1.0), (10, 1.0), (13, 24.0), (14, 22.0), (15, 26.0)]),
        (vec![D, R503], vec![(0, 1.0), (5, 1.0), (6, 1.0), (11, 1.0), (13, 29.0), (14, 22.0), (15, 36.0)]),
        (vec![R200], vec![(6, 1.0), (8, 1.0), (13, 19.0), (14, 19.0)]),
        (fifty, fifty_expected),
        (
            vec![G, G, R200, R404],
            vec![(0, 2.0), (1, 2.0), (6, 2.0), (8, 1.0), (10, 1.0), (13, 20.25), (14, 18.0), (15, 18.0), (16, 19.0), (17, 26.0)],
        ),
        (vec![R999], vec![(6, 1.0), (11, 1.0), (13, 18.0), (14, 18.0)]),
        (
            vec![G, P, H, O, D],
            vec![(0, 5.0), (1, 1.0), (2, 1.0), (3, 1.0), (4, 1.0), (5, 1.0), (13, 25.2), (14, 18.0), (15, 45.0), (16, 19.0), (17, 22.0), (18, 22.0)],
        ),
    ];
    let n = cases.len();
    for (i, (raws, sparse)) in cases.into_iter().enumerate() {
        let got = flow_stats(&flow(&raws)).map_err(|e| e.to_string())?;
        if got.values() != dense(FLOW_STAT_DIM, &sparse).as_slice() {
            return Err(format!("flow fixture {i}: got {:?}", got.values()));
        }
    }
    Ok(n)
}

fn visible(rng: &mut ChaCha8Rng, lo: usize, hi: usize) -> String {
    let n = rng.gen_range(lo..=hi);
    (0..n).map(|_| rng.gen_range(0x21u8..=0x7e) as char).collect()
}

fn token(rng: &mut ChaCha8Rng) -> String {
    const T: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-";
    let n = rng.gen_range(1..=12);
    (0..n).map(|_| T[rng.gen_range(0..T.len())] as char).collect()
}

/// Builds wire text directly so the oracle never goes through the crate's writer.
fn random_wire(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut s = if rng.gen_bool(0.5) {
        let method = ["GET", "POST", "HEAD", "PUT"][rng.gen_range(0..4)];
        format!("{method} /{} HTTP/1.{}\r\n", visible(rng, 0, 300), rng.gen_range(0..2))
    } else {
        format!("HTTP/1.1 {} {}\r\n", rng.gen_range(100..600), token(rng))
    };
    for _ in 0..rng.gen_range(0..25) {
        s.push_str(&format!("{}: {}\r\n", token(rng), visible(rng, 1, 60)));
    }
    let body = visible(rng, 0, 200);
    if !body.is_empty() {
        s.push_str(&format!("Content-Length: {}\r\n", body.len()));
    }
    s.push_str("\r\n");
    s.push_str(&body);
    s.into_bytes()
}

/// Compares packet images of `n` random messages with a row-by-row byte
/// fill of their wire bytes.
pub fn image_oracle(n: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let wire = random_wire(&mut rng);
        let img = packet_to_image(&parse(&wire, 0));
        for r in 0..IMAGE_ROWS {
            for c in 0..IMAGE_COLS {
                let k = r * IMAGE_COLS + c;
                let expected = wire.get(k).map_or(0.0, |&b| b as f64 / 255.0);
                if img.get(r, c) != expected {
                    return Err(format!("message {i}: pixel ({r}, {c}) is {} not {expected}", img.get(r, c)));
                }
            }
        }
    }
    Ok(n)
}
