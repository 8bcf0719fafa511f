//! Forward and backward passes of the hybrid network.
//!
//! Per packet slot: image -> conv -> ReLU -> floor max-pool -> flatten,
//! concatenated with P-DNN(packet stats). The LSTM runs over the slot
//! embeddings in arrival order; its last hidden state joins F-DNN(flow
//! stats) and goes through the dense head to two logits
//! (benign, malicious).

use super::{ClassifierError, HmcdArchitecture};
use crate::features::{Sample, Scaler, IMAGE_COLS, IMAGE_ROWS};
use crate::http::Label;
use crate::nn::{
    conv2d, conv2d_backward, dense, dense_backward, dense_relu, lstm_step, lstm_step_backward,
    maxpool2d_backward, maxpool2d_floor, one_hot, relu_backward, relu_in_place,
    softmax_cross_entropy, softmax_cross_entropy_backward, LstmCache, LstmParams, ParamSet,
    PoolOutput, Tensor, GATES,
};
use crate::nn::gradcheck::{check_gradients, GradCheckReport, FD_STEP};
use crate::nn::{uniform_unit, NnError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const BENIGN: usize = 0;
pub const MALICIOUS: usize = 1;

/// Output index of a training label.
pub fn label_index(label: Label) -> Option<usize> {
    match label {
        Label::Benign => Some(BENIGN),
        Label::Malicious => Some(MALICIOUS),
        Label::Unlabeled => None,
    }
}

/// One normalized sample in network form.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// `[1, rows, cols]` per packet slot.
    pub images: Vec<Tensor>,
    pub pkt_stats: Vec<Vec<f64>>,
    pub flow_stat: Vec<f64>,
}

impl ModelInput {
    /// Converts an already-normalized sample.
    pub fn from_sample(sample: &Sample) -> Result<Self, ClassifierError> {
        let images = sample
            .images
            .iter()
            .map(|img| Tensor::new(vec![1, IMAGE_ROWS, IMAGE_COLS], img.pixels().to_vec()))
            .collect::<Result<_, _>>()?;
        Ok(ModelInput {
            images,
            pkt_stats: sample.pkt_stats.iter().map(|p| p.values().to_vec()).collect(),
            flow_stat: sample.flow_stat.values().to_vec(),
        })
    }

    /// Normalizes a raw sample with `scaler` and converts it.
    pub fn normalized(sample: &Sample, scaler: &Scaler) -> Result<Self, ClassifierError> {
        Self::from_sample(&scaler.apply(sample))
    }
}

struct PacketCache {
    conv_act: Tensor,
    pool: PoolOutput,
    pdnn_out: Vec<f64>,
    embed: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
pub struct ForwardCache {
    packets: Vec<PacketCache>,
    lstm: Vec<LstmCache>,
    fdnn_out: Vec<f64>,
    /// Input to each head layer.
    head_inputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn lstm_view(params: &ParamSet) -> Result<LstmParams<'_>, ClassifierError> {
    let w = |g: &str| params.require(&format!("lstm.w_{g}"));
    let b = |g: &str| params.require(&format!("lstm.b_{g}"));
    Ok(LstmParams {
        weights: [w("f")?, w("i")?, w("o")?, w("c")?],
        biases: [b("f")?, b("i")?, b("o")?, b("c")?],
    })
}

impl HmcdArchitecture {
    fn check_input(&self, input: &ModelInput) -> Result<(), ClassifierError> {
        let ok = input.images.len() == self.slots
            && input.pkt_stats.len() == self.slots
            && input
                .images
                .iter()
                .all(|t| t.shape() == [1, self.image_rows, self.image_cols])
            && input.pkt_stats.iter().all(|p| p.len() == self.pkt_stat_dim)
            && input.flow_stat.len() == self.flow_stat_dim;
        if !ok {
            return Err(ClassifierError::Nn(crate::nn::NnError::ShapeMismatch(format!(
                "input does not fit {self}"
            ))));
        }
        Ok(())
    }

    /// Returns `(benign, malicious)` probabilities and the cache.
    pub fn forward(
        &self,
        params: &ParamSet,
        input: &ModelInput,
    ) -> Result<ForwardCache, ClassifierError> {
        self.check_input(input)?;
        let (cnn_w, cnn_b) = (params.require("cnn.w")?, params.require("cnn.b")?);
        let (pdnn_w, pdnn_b) = (params.require("pdnn.w")?, params.require("pdnn.b")?);
        let lstm = lstm_view(params)?;

        let mut packets = Vec::with_capacity(self.slots);
        for (image, stats) in input.images.iter().zip(&input.pkt_stats) {
            let mut conv_act = conv2d(image, cnn_w, cnn_b, 1)?;
            relu_in_place(conv_act.data_mut());
            let pool = maxpool2d_floor(&conv_act, self.pool)?;
            let pdnn_out = dense_relu(stats, pdnn_w, pdnn_b)?;
            let mut embed = pool.output.data().to_vec();
            embed.extend_from_slice(&pdnn_out);
            packets.push(PacketCache {
                conv_act,
                pool,
                pdnn_out,
                embed,
            });
        }

        let mut h = vec![0.0; self.lstm_hidden];
        let mut c = vec![0.0; self.lstm_hidden];
        let mut lstm_caches = Vec::with_capacity(self.slots);
        for p in &packets {
            let (h2, c2, cache) = lstm_step(&p.embed, &h, &c, lstm)?;
            h = h2;
            c = c2;
            lstm_caches.push(cache);
        }

        let fdnn_out = dense_relu(
            &input.flow_stat,
            params.require("fdnn.w")?,
            params.require("fdnn.b")?,
        )?;
        let mut a = h;
        a.extend_from_slice(&fdnn_out);
        let mut head_inputs = Vec::with_capacity(self.head.len());
        for i in 1..=self.head.len() {
            let w = params.require(&format!("head.w{i}"))?;
            let b = params.require(&format!("head.b{i}"))?;
            let next = if i < self.head.len() {
                dense_relu(&a, w, b)?
            } else {
                dense(&a, w, b)?
            };
            head_inputs.push(std::mem::replace(&mut a, next));
        }
        let probs = crate::nn::softmax(&a);
        Ok(ForwardCache {
            packets,
            lstm: lstm_caches,
            fdnn_out,
            head_inputs,
            logits: a,
            probs,
        })
    }

    /// `(benign, malicious)` probabilities.
    pub fn predict_proba(
        &self,
        params: &ParamSet,
        input: &ModelInput,
    ) -> Result<[f64; 2], ClassifierError> {
        let probs = self.forward(params, input)?.probs;
        Ok([probs[BENIGN], probs[MALICIOUS]])
    }

    /// Cross-entropy loss against `target` and its gradient for every
    /// parameter.
    pub fn loss_and_grad(
        &self,
        params: &ParamSet,
        input: &ModelInput,
        target: usize,
    ) -> Result<(f64, ParamSet), ClassifierError> {
        let cache = self.forward(params, input)?;
        let y = one_hot(target, 2);
        let (loss, _) = softmax_cross_entropy(&cache.logits, &y)?;
        let d_logits = softmax_cross_entropy_backward(&cache.probs, &y);
        let grads = self.backward(params, input, &cache, &d_logits)?;
        Ok((loss, grads))
    }

    /// Backpropagates `d_logits` through the cached forward pass.
    pub fn backward(
        &self,
        params: &ParamSet,
        input: &ModelInput,
        cache: &ForwardCache,
        d_logits: &[f64],
    ) -> Result<ParamSet, ClassifierError> {
        if cache.packets.len() != self.slots || d_logits.len() != 2 {
            return Err(ClassifierError::Nn(crate::nn::NnError::GraphState(
                "backward without a matching forward pass".into(),
            )));
        }
        let mut grads = params.zeros_like();
        let mut put = |name: &str, t: Tensor| -> Result<(), ClassifierError> {
            let slot = grads.get_mut(name).ok_or_else(|| {
                crate::nn::NnError::GraphState(format!("no parameter {name}"))
            })?;
            slot.add_assign(&t);
            Ok(())
        };

        // head
        let mut d = d_logits.to_vec();
        for i in (1..=self.head.len()).rev() {
            let w = params.require(&format!("head.w{i}"))?;
            let a_in = &cache.head_inputs[i - 1];
            let g = dense_backward(a_in, w, &d)?;
            put(&format!("head.w{i}"), g.weights)?;
            put(&format!("head.b{i}"), g.bias)?;
            d = if i > 1 {
                relu_backward(a_in, &g.input)
            } else {
                g.input
            };
        }
        let d_fdnn = relu_backward(&cache.fdnn_out, &d[self.lstm_hidden..]);
        let g = dense_backward(&input.flow_stat, params.require("fdnn.w")?, &d_fdnn)?;
        put("fdnn.w", g.weights)?;
        put("fdnn.b", g.bias)?;

        // LSTM through time
        let lstm = lstm_view(params)?;
        let mut grad_h = d[..self.lstm_hidden].to_vec();
        let mut grad_c = vec![0.0; self.lstm_hidden];
        let mut d_embeds = vec![Vec::new(); self.slots];
        for t in (0..self.slots).rev() {
            let g = lstm_step_backward(&cache.lstm[t], lstm, &grad_h, &grad_c)?;
            let [wf, wi, wo, wc] = g.weights;
            let [bf, bi, bo, bc] = g.biases;
            for (gate, (w, b)) in GATES.iter().zip([(wf, bf), (wi, bi), (wo, bo), (wc, bc)]) {
                put(&format!("lstm.w_{gate}"), w)?;
                put(&format!("lstm.b_{gate}"), b)?;
            }
            d_embeds[t] = g.x;
            grad_h = g.h_prev;
            grad_c = g.c_prev;
        }

        // packet branches
        let flat = self.flat_dim();
        let cnn_w = params.require("cnn.w")?;
        let pdnn_w = params.require("pdnn.w")?;
        for (t, p) in cache.packets.iter().enumerate() {
            let d_embed = &d_embeds[t];
            let d_pdnn = relu_backward(&p.pdnn_out, &d_embed[flat..]);
            let g = dense_backward(&input.pkt_stats[t], pdnn_w, &d_pdnn)?;
            put("pdnn.w", g.weights)?;
            put("pdnn.b", g.bias)?;

            let d_pool = Tensor::new(self.pool_shape().to_vec(), d_embed[..flat].to_vec())?;
            let d_act = maxpool2d_backward(p.conv_act.shape(), &p.pool, &d_pool)?;
            let d_pre = Tensor::new(
                p.conv_act.shape().to_vec(),
                relu_backward(p.conv_act.data(), d_act.data()),
            )?;
            let g = conv2d_backward(&input.images[t], cnn_w, 1, &d_pre)?;
            put("cnn.w", g.kernels)?;
            put("cnn.b", g.bias)?;
        }
        Ok(grads)
    }
}

/// Gradient check of the whole network at random parameters and inputs.
/// Only practical at small shapes such as [`HmcdArchitecture::tiny`].
pub fn check_network(arch: &HmcdArchitecture, seed: u64) -> Result<GradCheckReport, ClassifierError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(arch, &mut rng)?;
    let input = random_input(arch, &mut rng);
    let target = (seed % 2) as usize;
    let (_, grads) = arch.loss_and_grad(&params, &input, target)?;
    let report = check_gradients(
        "hybrid",
        &params,
        &grads,
        |p| {
            arch.loss_and_grad(p, &input, target)
                .map(|(l, _)| l)
                .map_err(|e| NnError::GraphState(e.to_string()))
        },
        FD_STEP,
    )?;
    Ok(report)
}

fn random_input(arch: &HmcdArchitecture, rng: &mut ChaCha8Rng) -> ModelInput {
    ModelInput {
        images: (0..arch.slots)
            .map(|_| uniform_unit(&[1, arch.image_rows, arch.image_cols], rng))
            .collect(),
        pkt_stats: (0..arch.slots)
            .map(|_| uniform_unit(&[arch.pkt_stat_dim], rng).into_data())
            .collect(),
        flow_stat: uniform_unit(&[arch.flow_stat_dim], rng).into_data(),
    }
}

fn random_params(arch: &HmcdArchitecture, rng: &mut ChaCha8Rng) -> Result<ParamSet, ClassifierError> {
    let mut p = arch.init_params(0)?;
    for (_, t) in p.iter_mut() {
        *t = uniform_unit(t.shape(), rng);
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::DEFAULT_TOLERANCE;

    #[test]
    fn full_hybrid_gradient_check() {
        let arch = HmcdArchitecture::tiny();
        for seed in 0..3 {
            let report = check_network(&arch, seed).unwrap();
            assert!(report.passed(DEFAULT_TOLERANCE), "seed {seed}: {report:?}");
            assert_eq!(report.blocks.len(), arch.layout().len());
        }
    }

    #[test]
    fn zero_head_gives_even_odds() {
        let arch = HmcdArchitecture::default();
        let mut params = arch.init_params(3).unwrap();
        for name in ["head.w3", "head.b3"] {
            let t = params.get_mut(name).unwrap();
            *t = t.zeros_like();
        }
        let input = ModelInput {
            images: vec![Tensor::zeros(&[1, 20, 40]); 2],
            pkt_stats: vec![vec![0.0; 41]; 2],
            flow_stat: vec![0.0; 64],
        };
        assert_eq!(arch.predict_proba(&params, &input).unwrap(), [0.5, 0.5]);
    }

    #[test]
    fn probabilities_are_a_distribution() {
        let arch = HmcdArchitecture::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = arch.init_params(1).unwrap();
        for _ in 0..5 {
            let input = random_input(&arch, &mut rng);
            let [b, m] = arch.predict_proba(&params, &input).unwrap();
            assert!(b > 0.0 && b < 1.0 && m > 0.0 && m < 1.0);
            assert!((b + m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let arch = HmcdArchitecture::default();
        let params = arch.init_params(1).unwrap();
        let input = ModelInput {
            images: vec![Tensor::zeros(&[1, 20, 40])],
            pkt_stats: vec![vec![0.0; 41]],
            flow_stat: vec![0.0; 64],
        };
        assert!(arch.forward(&params, &input).is_err());
    }
}
