//! HTTP-based malicious communication detection.
//!
//! The pipeline runs in five stages, one module each:
//!
//! * [`http`]: parse HTTP/1.x messages, assemble them into flows and read or
//!   write labeled corpora.
//! * [`features`]: turn a flow into packet-text images, per-packet statistics
//!   and per-flow statistics.
//! * [`nn`] and [`classifier`]: a small dense-tensor core and the hybrid
//!   CNN + LSTM + DNN flow classifier built on it.
//! * [`gaf`]: field dictionaries and per-field WGAN-GP generators that
//!   synthesize adversarial malicious flows for training-set enhancement.
//! * [`eval`]: confusion counts, macro-averaged metrics and experiment runs.

pub mod http;
pub mod features;
pub mod nn;
pub mod classifier;
pub mod eval;
pub mod gaf;
pub mod synth;
