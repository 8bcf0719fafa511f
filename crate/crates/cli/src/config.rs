//! Flat `key=value` run configuration. Resolution order: defaults, then the
//! config file, then command-line flags. `HMCD_SEED` only applies when
//! neither the file nor a flag sets a seed.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use hmcd::gaf::INFINITE_THRESHOLD;
use hmcd::http::ParseMode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown config key {key:?}")]
    UnknownKey { key: String },
    #[error("{key}={value} is out of bounds: {bounds}")]
    OutOfBounds {
        key: String,
        value: String,
        bounds: &'static str,
    },
    #[error("{path} line {line}: expected key=value")]
    Malformed { path: PathBuf, line: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub const KEYS: [(&str, &str); 14] = [
    ("epochs", "integer in 1..=10000"),
    ("batch", "integer in 1..=65536"),
    ("lr", "real in (0, 1]"),
    ("folds", "integer in 2..=100"),
    ("repeats", "integer in 1..=1000"),
    ("gaf_count", "integer in 0..=10000000"),
    ("p_threshold", "non-negative integer or \"inf\""),
    ("seq_len", "integer in 1..=4096"),
    ("lambda", "real in [0, 1e6]"),
    ("gan_iterations", "integer in 1..=1000000"),
    ("idle_gap_s", "real in (0, 86400]"),
    ("parse_mode", "\"strict\" or \"lenient\""),
    ("seed", "unsigned 64-bit integer"),
    ("jobs", "integer in 1..=1024"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub folds: usize,
    pub repeats: usize,
    pub gaf_count: usize,
    pub p_threshold: u64,
    pub seq_len: usize,
    pub lambda: f64,
    pub gan_iterations: usize,
    pub idle_gap_s: f64,
    pub parse_mode: ParseMode,
    pub seed: u64,
    pub jobs: usize,
    /// Keys set by the file, a flag or the environment.
    pub explicit: BTreeSet<String>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            epochs: 50,
            batch: 128,
            lr: 1e-3,
            folds: 5,
            repeats: 5,
            gaf_count: 0,
            p_threshold: hmcd::gaf::DEFAULT_THRESHOLD,
            seq_len: hmcd::gaf::DEFAULT_SEQ_LEN,
            lambda: 10.0,
            gan_iterations: 200,
            idle_gap_s: hmcd::http::DEFAULT_IDLE_GAP_S,
            parse_mode: ParseMode::Strict,
            seed: 0,
            jobs: 1,
            explicit: BTreeSet::new(),
        }
    }
}

fn int(key: &str, value: &str, lo: u64, hi: u64) -> Result<u64, ConfigError> {
    match value.parse::<u64>() {
        Ok(v) if (lo..=hi).contains(&v) => Ok(v),
        _ => Err(out_of_bounds(key, value)),
    }
}

fn real(key: &str, value: &str, ok: impl Fn(f64) -> bool) -> Result<f64, ConfigError> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() && ok(v) => Ok(v),
        _ => Err(out_of_bounds(key, value)),
    }
}

fn out_of_bounds(key: &str, value: &str) -> ConfigError {
    let bounds = KEYS.iter().find(|(k, _)| *k == key).map_or("", |(_, b)| b);
    ConfigError::OutOfBounds {
        key: key.into(),
        value: value.into(),
        bounds,
    }
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "epochs" => self.epochs = int(key, value, 1, 10_000)? as usize,
            "batch" => self.batch = int(key, value, 1, 65_536)? as usize,
            "lr" => self.lr = real(key, value, |v| v > 0.0 && v <= 1.0)?,
            "folds" => self.folds = int(key, value, 2, 100)? as usize,
            "repeats" => self.repeats = int(key, value, 1, 1000)? as usize,
            "gaf_count" => self.gaf_count = int(key, value, 0, 10_000_000)? as usize,
            "p_threshold" => {
                self.p_threshold = if value == "inf" {
                    INFINITE_THRESHOLD
                } else {
                    int(key, value, 0, u64::MAX - 1)?
                }
            }
            "seq_len" => self.seq_len = int(key, value, 1, 4096)? as usize,
            "lambda" => self.lambda = real(key, value, |v| (0.0..=1e6).contains(&v))?,
            "gan_iterations" => self.gan_iterations = int(key, value, 1, 1_000_000)? as usize,
            "idle_gap_s" => self.idle_gap_s = real(key, value, |v| v > 0.0 && v <= 86_400.0)?,
            "parse_mode" => {
                self.parse_mode = match value {
                    "strict" => ParseMode::Strict,
                    "lenient" => ParseMode::Lenient,
                    _ => return Err(out_of_bounds(key, value)),
                }
            }
            "seed" => self.seed = int(key, value, 0, u64::MAX)?,
            "jobs" => self.jobs = int(key, value, 1, 1024)? as usize,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }

    /// Applies a config file. Blank lines and lines starting with `#` are
    /// skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn resolve(
        file: Option<&Path>,
        flags: &[(&str, String)],
        env_seed: Option<&str>,
    ) -> Result<Self, ConfigError> {
        let mut s = Settings::default();
        if let Some(path) = file {
            s.apply_file(path)?;
        }
        for (key, value) in flags {
            s.set(key, value)?;
        }
        if !s.explicit.contains("seed") {
            if let Some(v) = env_seed {
                s.set("seed", v)?;
            }
        }
        Ok(s)
    }

    pub fn is_explicit(&self, key: &str) -> bool {
        self.explicit.contains(key)
    }

    /// Every key with its resolved value, in the config file syntax.
    pub fn to_map(&self) -> BTreeMap<String, String> {
        let p = if self.p_threshold == INFINITE_THRESHOLD {
            "inf".to_string()
        } else {
            self.p_threshold.to_string()
        };
        let mode = match self.parse_mode {
            ParseMode::Strict => "strict",
            ParseMode::Lenient => "lenient",
        };
        [
            ("epochs", self.epochs.to_string()),
            ("batch", self.batch.to_string()),
            ("lr", format!("{:?}", self.lr)),
            ("folds", self.folds.to_string()),
            ("repeats", self.repeats.to_string()),
            ("gaf_count", self.gaf_count.to_string()),
            ("p_threshold", p),
            ("seq_len", self.seq_len.to_string()),
            ("lambda", format!("{:?}", self.lambda)),
            ("gan_iterations", self.gan_iterations.to_string()),
            ("idle_gap_s", format!("{:?}", self.idle_gap_s)),
            ("parse_mode", mode.to_string()),
            ("seed", self.seed.to_string()),
            ("jobs", self.jobs.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = file("");
        let s = Settings::resolve(Some(f.path()), &[], None).unwrap();
        assert_eq!((s.epochs, s.batch, s.lr, s.folds, s.repeats), (50, 128, 1e-3, 5, 5));
        assert!(s.explicit.is_empty());
    }

    #[test]
    fn flags_win_over_file() {
        let f = file("# comment\nepochs=50\nlr = 0.01\n");
        let s = Settings::resolve(Some(f.path()), &[("epochs", "10".into())], None).unwrap();
        assert_eq!(s.epochs, 10);
        assert_eq!(s.lr, 0.01);
    }

    #[test]
    fn bounds_and_unknown_keys() {
        let f = file("folds=1\n");
        assert!(matches!(
            Settings::resolve(Some(f.path()), &[], None),
            Err(ConfigError::OutOfBounds { .. })
        ));
        let f = file("epoch=3\n");
        assert!(matches!(
            Settings::resolve(Some(f.path()), &[], None),
            Err(ConfigError::UnknownKey { .. })
        ));
        let f = file("epochs\n");
        assert!(matches!(
            Settings::resolve(Some(f.path()), &[], None),
            Err(ConfigError::Malformed { line: 1, .. })
        ));
        let mut s = Settings::default();
        assert!(s.set("lr", "0").is_err());
        assert!(s.set("lambda", "nan").is_err());
        assert!(s.set("parse_mode", "loose").is_err());
        s.set("p_threshold", "inf").unwrap();
        assert_eq!(s.to_map()["p_threshold"], "inf");
    }

    #[test]
    fn environment_seed_is_last_resort() {
        let s = Settings::resolve(None, &[], Some("9")).unwrap();
        assert_eq!(s.seed, 9);
        let s = Settings::resolve(None, &[("seed", "3".into())], Some("9")).unwrap();
        assert_eq!(s.seed, 3);
        let f = file("seed=4\n");
        assert_eq!(Settings::resolve(Some(f.path()), &[], Some("9")).unwrap().seed, 4);
    }

    #[test]
    fn resolved_map_reparses_to_same_settings() {
        let mut s = Settings::default();
        s.set("lr", "0.0003").unwrap();
        s.set("parse_mode", "lenient").unwrap();
        let text: String = s.to_map().iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        let f = file(&text);
        let back = Settings::resolve(Some(f.path()), &[], None).unwrap();
        assert_eq!(back.to_map(), s.to_map());
    }
}
