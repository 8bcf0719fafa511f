use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ClassifierError;
use crate::features::{FLOW_STAT_DIM, IMAGE_COLS, IMAGE_ROWS, PACKET_SLOTS, PKT_STAT_DIM};
use crate::nn::{glorot_uniform, ParamSet, Tensor, GATES};

/// Shape configuration of the hybrid network. [`HmcdArchitecture::default`]
/// is the production network; smaller instances exist for gradient checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HmcdArchitecture {
    pub image_rows: usize,
    pub image_cols: usize,
    pub kernels: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    pub pool: usize,
    pub pkt_stat_dim: usize,
    pub pkt_hidden: usize,
    pub lstm_hidden: usize,
    pub flow_stat_dim: usize,
    pub flow_hidden: usize,
    /// Widths of the head layers; the last must be 2.
    pub head: Vec<usize>,
    pub slots: usize,
}

impl Default for HmcdArchitecture {
    fn default() -> Self {
        HmcdArchitecture {
            image_rows: IMAGE_ROWS,
            image_cols: IMAGE_COLS,
            kernels: 2,
            kernel_rows: 2,
            kernel_cols: 8,
            pool: 2,
            pkt_stat_dim: PKT_STAT_DIM,
            pkt_hidden: 16,
            lstm_hidden: 16,
            flow_stat_dim: FLOW_STAT_DIM,
            flow_hidden: 16,
            head: vec![10, 8, 2],
            slots: PACKET_SLOTS,
        }
    }
}

impl HmcdArchitecture {
    /// A miniature network with every branch present, for gradient checks.
    pub fn tiny() -> Self {
        HmcdArchitecture {
            image_rows: 5,
            image_cols: 7,
            kernels: 2,
            kernel_rows: 2,
            kernel_cols: 3,
            pool: 2,
            pkt_stat_dim: 3,
            pkt_hidden: 4,
            lstm_hidden: 3,
            flow_stat_dim: 5,
            flow_hidden: 3,
            head: vec![4, 3, 2],
            slots: 2,
        }
    }

    pub fn conv_shape(&self) -> [usize; 3] {
        [
            self.kernels,
            self.image_rows + 1 - self.kernel_rows,
            self.image_cols + 1 - self.kernel_cols,
        ]
    }

    pub fn pool_shape(&self) -> [usize; 3] {
        let [k, h, w] = self.conv_shape();
        [k, h / self.pool, w / self.pool]
    }

    pub fn flat_dim(&self) -> usize {
        self.pool_shape().iter().product()
    }

    /// Width of one packet embedding fed to the LSTM.
    pub fn embed_dim(&self) -> usize {
        self.flat_dim() + self.pkt_hidden
    }

    pub fn head_input_dim(&self) -> usize {
        self.lstm_hidden + self.flow_hidden
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        let positive = [
            self.image_rows,
            self.image_cols,
            self.kernels,
            self.kernel_rows,
            self.kernel_cols,
            self.pool,
            self.pkt_stat_dim,
            self.pkt_hidden,
            self.lstm_hidden,
            self.flow_stat_dim,
            self.flow_hidden,
            self.slots,
        ];
        let fits = self.kernel_rows <= self.image_rows && self.kernel_cols <= self.image_cols;
        if positive.contains(&0)
            || !fits
            || self.pool_shape()[1] == 0
            || self.pool_shape()[2] == 0
            || self.head.last() != Some(&2)
            || self.head.contains(&0)
        {
            return Err(ClassifierError::ArchitectureMismatch(format!(
                "unusable architecture {self}"
            )));
        }
        Ok(())
    }

    /// Parameter names and shapes in canonical order, with Glorot fans.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize, usize)> {
        let (k, kr, kc) = (self.kernels, self.kernel_rows, self.kernel_cols);
        let mut out = vec![
            ("cnn.w".into(), vec![k, 1, kr, kc], kr * kc, k * kr * kc),
            ("cnn.b".into(), vec![k], 0, 0),
            (
                "pdnn.w".into(),
                vec![self.pkt_hidden, self.pkt_stat_dim],
                self.pkt_stat_dim,
                self.pkt_hidden,
            ),
            ("pdnn.b".into(), vec![self.pkt_hidden], 0, 0),
        ];
        let (h, x) = (self.lstm_hidden, self.embed_dim());
        for g in GATES {
            out.push((format!("lstm.w_{g}"), vec![h, h + x], h + x, h));
        }
        for g in GATES {
            out.push((format!("lstm.b_{g}"), vec![h], 0, 0));
        }
        out.push((
            "fdnn.w".into(),
            vec![self.flow_hidden, self.flow_stat_dim],
            self.flow_stat_dim,
            self.flow_hidden,
        ));
        out.push(("fdnn.b".into(), vec![self.flow_hidden], 0, 0));
        let mut width = self.head_input_dim();
        for (i, &n) in self.head.iter().enumerate() {
            out.push((format!("head.w{}", i + 1), vec![n, width], width, n));
            out.push((format!("head.b{}", i + 1), vec![n], 0, 0));
            width = n;
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.layout()
            .iter()
            .map(|(_, s, _, _)| s.iter().product::<usize>())
            .sum()
    }

    /// Glorot-uniform weights and zero biases, deterministic per seed.
    pub fn init_params(&self, seed: u64) -> Result<ParamSet, ClassifierError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let mut params = ParamSet::new();
        for (name, shape, fan_in, fan_out) in self.layout() {
            let t = if fan_in == 0 {
                Tensor::zeros(&shape)
            } else {
                glorot_uniform(&shape, fan_in, fan_out, &mut rng)
            };
            params.insert(name, t);
        }
        Ok(params)
    }

    /// Checks that `params` has exactly this architecture's layout.
    pub fn check_params(&self, params: &ParamSet) -> Result<(), ClassifierError> {
        let layout = self.layout();
        let matches = params.len() == layout.len()
            && layout
                .iter()
                .zip(params.iter())
                .all(|((n, s, _, _), (pn, t))| n == pn && t.shape() == s.as_slice());
        if !matches {
            return Err(ClassifierError::ArchitectureMismatch(format!(
                "parameters do not fit {self}"
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical description.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}

impl fmt::Display for HmcdArchitecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<String> = self.head.iter().map(|n| n.to_string()).collect();
        write!(
            f,
            "image={}x{};conv={}x{}x{};pool={};pkt={}->{};lstm={};flow={}->{};head={};slots={}",
            self.image_rows,
            self.image_cols,
            self.kernels,
            self.kernel_rows,
            self.kernel_cols,
            self.pool,
            self.pkt_stat_dim,
            self.pkt_hidden,
            self.lstm_hidden,
            self.flow_stat_dim,
            self.flow_hidden,
            head.join(","),
            self.slots
        )
    }
}

impl FromStr for HmcdArchitecture {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ClassifierError::ArchitectureMismatch(format!("cannot parse {s:?}"));
        let nums = |v: &str, sep: &str| -> Result<Vec<usize>, ClassifierError> {
            v.split(sep)
                .map(|n| n.parse().map_err(|_| bad()))
                .collect()
        };
        let mut fields = std::collections::HashMap::new();
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            fields.insert(k, v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(bad);
        let pair = |k: &str, sep: &str| -> Result<(usize, usize), ClassifierError> {
            match nums(get(k)?, sep)?[..] {
                [a, b] => Ok((a, b)),
                _ => Err(bad()),
            }
        };
        let (image_rows, image_cols) = pair("image", "x")?;
        let conv = nums(get("conv")?, "x")?;
        let [kernels, kernel_rows, kernel_cols] = conv[..] else {
            return Err(bad());
        };
        let (pkt_stat_dim, pkt_hidden) = pair("pkt", "->")?;
        let (flow_stat_dim, flow_hidden) = pair("flow", "->")?;
        let arch = HmcdArchitecture {
            image_rows,
            image_cols,
            kernels,
            kernel_rows,
            kernel_cols,
            pool: get("pool")?.parse().map_err(|_| bad())?,
            pkt_stat_dim,
            pkt_hidden,
            lstm_hidden: get("lstm")?.parse().map_err(|_| bad())?,
            flow_stat_dim,
            flow_hidden,
            head: nums(get("head")?, ",")?,
            slots: get("slots")?.parse().map_err(|_| bad())?,
        };
        if fields.len() != 8 {
            return Err(bad());
        }
        arch.validate()?;
        Ok(arch)
    }
}
