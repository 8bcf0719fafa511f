//! Per-field WGAN-GP over one-hot token sequences.
//!
//! Sequences are `[V, L]` maps (vocabulary by position). The critic is a
//! stack of same-padded 1-D convolutions and two dense layers with leaky
//! ReLU; the generator mirrors it from a noise vector and ends in a softmax
//! over the vocabulary at every position.
//!
//! The critic is piecewise linear, so within one activation pattern
//! `v . grad_x D(x)` equals the network evaluated at `v` with biases
//! removed and every leaky-ReLU slope frozen. The gradient-penalty
//! gradient with respect to the critic weights is therefore one backward
//! pass through that frozen tangent network, with `v = g / |g|`.

use log::debug;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::encode::TokenSequence;
use super::GafError;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{
    adam_update, conv1d_same, conv1d_same_backward, dense, dense_backward, glorot_uniform,
    leaky_relu_slope, softmax, AdamConfig, AdamState, NnError, ParamSet, Tensor,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GanConfig {
    /// Word slots per sequence (L).
    pub seq_len: usize,
    pub noise_dim: usize,
    /// Convolutions in each network, 1 to 7.
    pub conv_layers: usize,
    pub channels: usize,
    /// Odd convolution width.
    pub kernel: usize,
    pub hidden: usize,
    /// Gradient-penalty weight.
    pub lambda: f64,
    pub critic_steps: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Generator updates.
    pub iterations: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            seq_len: super::DEFAULT_SEQ_LEN,
            noise_dim: 64,
            conv_layers: 3,
            channels: 16,
            kernel: 5,
            hidden: 64,
            lambda: 10.0,
            critic_steps: 5,
            lr: 1e-4,
            beta1: 0.0,
            beta2: 0.9,
            batch_size: 16,
            iterations: 200,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), GafError> {
        let problem = if !(1..=7).contains(&self.conv_layers) {
            "conv layers must be between 1 and 7"
        } else if self.kernel.is_multiple_of(2) {
            "kernel width must be odd"
        } else if [self.seq_len, self.noise_dim, self.channels, self.hidden, self.batch_size, self.critic_steps]
            .contains(&0)
        {
            "sizes must be positive"
        } else if !(self.lambda >= 0.0 && self.lr > 0.0) {
            "lambda must be non-negative and the learning rate positive"
        } else {
            return Ok(());
        };
        Err(GafError::InvalidConfig(problem.into()))
    }

    fn describe(&self) -> String {
        format!(
            "seq_len={};noise_dim={};conv_layers={};channels={};kernel={};hidden={};lambda={:?};critic_steps={};lr={:?};beta1={:?};beta2={:?};batch_size={};iterations={}",
            self.seq_len, self.noise_dim, self.conv_layers, self.channels, self.kernel, self.hidden,
            self.lambda, self.critic_steps, self.lr, self.beta1, self.beta2, self.batch_size, self.iterations
        )
    }

    fn parse(s: &str) -> Result<Self, GafError> {
        let bad = || GafError::InvalidConfig(format!("cannot parse GAN config {s:?}"));
        let mut c = GanConfig::default();
        for part in s.split(';') {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            let int = || v.parse::<usize>().map_err(|_| bad());
            let real = || v.parse::<f64>().map_err(|_| bad());
            match k {
                "seq_len" => c.seq_len = int()?,
                "noise_dim" => c.noise_dim = int()?,
                "conv_layers" => c.conv_layers = int()?,
                "channels" => c.channels = int()?,
                "kernel" => c.kernel = int()?,
                "hidden" => c.hidden = int()?,
                "lambda" => c.lambda = real()?,
                "critic_steps" => c.critic_steps = int()?,
                "lr" => c.lr = real()?,
                "beta1" => c.beta1 = real()?,
                "beta2" => c.beta2 = real()?,
                "batch_size" => c.batch_size = int()?,
                "iterations" => c.iterations = int()?,
                _ => return Err(bad()),
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Conv1d { w: String, b: String },
    Dense { w: String, b: String },
    LeakyRelu,
    Reshape(Vec<usize>),
    /// Softmax over the first axis of a `[V, L]` map, per column.
    SoftmaxColumns,
}

#[derive(Debug, Clone, PartialEq)]
struct Net {
    layers: Vec<Layer>,
}

/// Per-layer inputs and frozen slopes of one forward pass.
struct Trace {
    inputs: Vec<Tensor>,
    slopes: Vec<Vec<f64>>,
    output: Tensor,
}

fn accumulate(grads: &mut ParamSet, name: &str, t: &Tensor, scale: f64) -> Result<(), NnError> {
    let slot = grads
        .get_mut(name)
        .ok_or_else(|| NnError::GraphState(format!("no parameter {name}")))?;
    for (a, b) in slot.data_mut().iter_mut().zip(t.data()) {
        *a += scale * b;
    }
    Ok(())
}

impl Net {
    /// With `frozen` slopes and `bias == false` this evaluates the tangent
    /// network of an earlier primal pass.
    fn forward(
        &self,
        p: &ParamSet,
        x: Tensor,
        bias: bool,
        frozen: Option<&[Vec<f64>]>,
    ) -> Result<Trace, NnError> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut slopes = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut layer_slopes = Vec::new();
            let next = match layer {
                Layer::Conv1d { w, b } => {
                    let b = if bias { Some(p.require(b)?) } else { None };
                    conv1d_same(&cur, p.require(w)?, b)?
                }
                Layer::Dense { w, b } => {
                    let w = p.require(w)?;
                    let b = if bias {
                        p.require(b)?.clone()
                    } else {
                        Tensor::zeros(&[w.shape()[0]])
                    };
                    Tensor::vector(dense(cur.data(), w, &b)?)
                }
                Layer::LeakyRelu => {
                    layer_slopes = match frozen {
                        Some(f) => f[i].clone(),
                        None => cur.data().iter().map(|&v| leaky_relu_slope(v)).collect(),
                    };
                    let data = cur.data().iter().zip(&layer_slopes).map(|(v, s)| v * s).collect();
                    Tensor::new(cur.shape().to_vec(), data)?
                }
                Layer::Reshape(shape) => cur.clone().reshape(shape)?,
                Layer::SoftmaxColumns => {
                    let (v, l) = (cur.shape()[0], cur.shape()[1]);
                    let mut out = vec![0.0; v * l];
                    let mut col = vec![0.0; v];
                    for j in 0..l {
                        for k in 0..v {
                            col[k] = cur.data()[k * l + j];
                        }
                        for (k, pk) in softmax(&col).into_iter().enumerate() {
                            out[k * l + j] = pk;
                        }
                    }
                    Tensor::new(vec![v, l], out)?
                }
            };
            inputs.push(std::mem::replace(&mut cur, next));
            slopes.push(layer_slopes);
        }
        Ok(Trace {
            inputs,
            slopes,
            output: cur,
        })
    }

    /// Backpropagates `dout`, adding `scale` times the parameter gradients
    /// into `grads` when given. Returns the input gradient.
    fn backward(
        &self,
        p: &ParamSet,
        trace: &Trace,
        dout: Tensor,
        mut grads: Option<&mut ParamSet>,
        scale: f64,
        bias_grads: bool,
    ) -> Result<Tensor, NnError> {
        let mut d = dout;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.inputs[i];
            d = match layer {
                Layer::Conv1d { w, b } => {
                    let g = conv1d_same_backward(input, p.require(w)?, &d)?;
                    if let Some(grads) = grads.as_deref_mut() {
                        accumulate(grads, w, &g.kernels, scale)?;
                        if bias_grads {
                            accumulate(grads, b, &g.bias, scale)?;
                        }
                    }
                    g.input
                }
                Layer::Dense { w, b } => {
                    let g = dense_backward(input.data(), p.require(w)?, d.data())?;
                    if let Some(grads) = grads.as_deref_mut() {
                        accumulate(grads, w, &g.weights, scale)?;
                        if bias_grads {
                            accumulate(grads, b, &g.bias, scale)?;
                        }
                    }
                    Tensor::new(input.shape().to_vec(), g.input)?
                }
                Layer::LeakyRelu => {
                    let data = d.data().iter().zip(&trace.slopes[i]).map(|(g, s)| g * s).collect();
                    Tensor::new(input.shape().to_vec(), data)?
                }
                Layer::Reshape(_) => d.reshape(input.shape())?,
                Layer::SoftmaxColumns => {
                    let out = trace.inputs.get(i + 1).unwrap_or(&trace.output);
                    let (v, l) = (out.shape()[0], out.shape()[1]);
                    let (y, g) = (out.data(), d.data());
                    let mut dx = vec![0.0; v * l];
                    for j in 0..l {
                        let dot: f64 = (0..v).map(|k| y[k * l + j] * g[k * l + j]).sum();
                        for k in 0..v {
                            dx[k * l + j] = y[k * l + j] * (g[k * l + j] - dot);
                        }
                    }
                    Tensor::new(vec![v, l], dx)?
                }
            };
        }
        Ok(d)
    }
}

fn critic_net(c: &GanConfig) -> Net {
    let mut layers = Vec::new();
    for i in 1..=c.conv_layers {
        layers.push(Layer::Conv1d {
            w: format!("d.conv{i}.w"),
            b: format!("d.conv{i}.b"),
        });
        layers.push(Layer::LeakyRelu);
    }
    layers.push(Layer::Reshape(vec![c.channels * c.seq_len]));
    layers.push(Layer::Dense {
        w: "d.dense1.w".into(),
        b: "d.dense1.b".into(),
    });
    layers.push(Layer::LeakyRelu);
    layers.push(Layer::Dense {
        w: "d.dense2.w".into(),
        b: "d.dense2.b".into(),
    });
    Net { layers }
}

fn generator_net(c: &GanConfig) -> Net {
    let mut layers = vec![
        Layer::Dense {
            w: "g.dense1.w".into(),
            b: "g.dense1.b".into(),
        },
        Layer::LeakyRelu,
        Layer::Dense {
            w: "g.dense2.w".into(),
            b: "g.dense2.b".into(),
        },
        Layer::LeakyRelu,
        Layer::Reshape(vec![c.channels, c.seq_len]),
    ];
    for i in 1..=c.conv_layers {
        layers.push(Layer::Conv1d {
            w: format!("g.conv{i}.w"),
            b: format!("g.conv{i}.b"),
        });
        if i < c.conv_layers {
            layers.push(Layer::LeakyRelu);
        }
    }
    layers.push(Layer::SoftmaxColumns);
    Net { layers }
}

/// Name, shape, fan-in and fan-out of every parameter.
fn layout(c: &GanConfig, vocab: usize) -> Vec<(String, Vec<usize>, usize, usize)> {
    let (ch, k, h, flat) = (c.channels, c.kernel, c.hidden, c.channels * c.seq_len);
    let mut out = Vec::new();
    let mut conv = |prefix: &str, i: usize, cin: usize, cout: usize| {
        out.push((format!("{prefix}.conv{i}.w"), vec![cout, cin, k], cin * k, cout * k));
        out.push((format!("{prefix}.conv{i}.b"), vec![cout], 0, 0));
    };
    for i in 1..=c.conv_layers {
        conv("d", i, if i == 1 { vocab } else { ch }, ch);
    }
    for i in 1..=c.conv_layers {
        conv("g", i, ch, if i == c.conv_layers { vocab } else { ch });
    }
    for (name, rows, cols) in [
        ("d.dense1", h, flat),
        ("d.dense2", 1, h),
        ("g.dense1", h, c.noise_dim),
        ("g.dense2", flat, h),
    ] {
        out.push((format!("{name}.w"), vec![rows, cols], cols, rows));
        out.push((format!("{name}.b"), vec![rows], 0, 0));
    }
    out
}

/// Per-iteration losses of a training run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GanHistory {
    /// Mean critic loss of each critic step.
    pub critic_loss: Vec<f64>,
    pub generator_loss: Vec<f64>,
}

/// Trained generator and critic for one field.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGan {
    pub field: String,
    pub vocab_size: usize,
    pub config: GanConfig,
    pub generator: ParamSet,
    pub critic: ParamSet,
    pub history: GanHistory,
}

/// One-hot `[V, L]` map of a sequence.
pub fn one_hot_sequence(ids: &[u32], vocab: usize) -> Tensor {
    let l = ids.len();
    let mut t = Tensor::zeros(&[vocab, l]);
    for (j, &id) in ids.iter().enumerate() {
        t.data_mut()[id as usize * l + j] = 1.0;
    }
    t
}

/// Per-position argmax of a `[V, L]` map; ties go to the lowest id.
pub fn argmax_ids(probs: &Tensor) -> Vec<u32> {
    let (v, l) = (probs.shape()[0], probs.shape()[1]);
    (0..l)
        .map(|j| {
            let mut best = 0;
            for k in 1..v {
                if probs.data()[k * l + j] > probs.data()[best * l + j] {
                    best = k;
                }
            }
            best as u32
        })
        .collect()
}

fn sum_ordered(parts: Vec<(f64, ParamSet)>, zero: &ParamSet) -> Result<(f64, ParamSet), NnError> {
    let mut total = zero.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        total.add_assign(g)?;
    }
    Ok((loss, total))
}

impl FieldGan {
    pub fn new(field: &str, vocab_size: usize, config: GanConfig, seed: u64) -> Result<Self, GafError> {
        config.validate()?;
        if vocab_size < 3 {
            return Err(GafError::InsufficientData(format!(
                "field {field} has no vocabulary"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(11);
        let (mut generator, mut critic) = (ParamSet::new(), ParamSet::new());
        for (name, shape, fan_in, fan_out) in layout(&config, vocab_size) {
            let t = if fan_in == 0 {
                Tensor::zeros(&shape)
            } else {
                glorot_uniform(&shape, fan_in, fan_out, &mut rng)
            };
            if name.starts_with("d.") {
                critic.insert(name, t);
            } else {
                generator.insert(name, t);
            }
        }
        Ok(FieldGan {
            field: field.to_string(),
            vocab_size,
            config,
            generator,
            critic,
            history: GanHistory::default(),
        })
    }

    pub fn critic_score(&self, x: &Tensor) -> Result<f64, GafError> {
        let t = critic_net(&self.config).forward(&self.critic, x.clone(), true, None)?;
        Ok(t.output.data()[0])
    }

    /// Generator output for noise `z`: per-position probabilities `[V, L]`.
    pub fn generate(&self, z: &[f64]) -> Result<Tensor, GafError> {
        let t = generator_net(&self.config).forward(&self.generator, Tensor::vector(z.to_vec()), true, None)?;
        Ok(t.output)
    }

    /// Gaussian noise vector drawn from `rng`.
    pub fn noise<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.config.noise_dim).map(|_| rng.sample(StandardNormal)).collect()
    }

    /// `lambda * (|grad_x D(x)| - 1)^2`.
    pub fn gradient_penalty(&self, x: &Tensor) -> Result<f64, GafError> {
        let net = critic_net(&self.config);
        let trace = net.forward(&self.critic, x.clone(), true, None)?;
        let g = net.backward(&self.critic, &trace, Tensor::vector(vec![1.0]), None, 0.0, false)?;
        let norm = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        Ok(self.config.lambda * (norm - 1.0).powi(2))
    }

    fn critic_sample(&self, net: &Net, real: &Tensor, fake: &Tensor, eps: f64) -> Result<(f64, ParamSet), NnError> {
        let p = &self.critic;
        let lambda = self.config.lambda;
        let mut grads = p.zeros_like();
        let one = || Tensor::vector(vec![1.0]);

        let tf = net.forward(p, fake.clone(), true, None)?;
        net.backward(p, &tf, one(), Some(&mut grads), 1.0, true)?;
        let tr = net.forward(p, real.clone(), true, None)?;
        net.backward(p, &tr, one(), Some(&mut grads), -1.0, true)?;

        let mixed: Vec<f64> = real.data().iter().zip(fake.data()).map(|(r, f)| eps * r + (1.0 - eps) * f).collect();
        let th = net.forward(p, Tensor::new(real.shape().to_vec(), mixed)?, true, None)?;
        let g = net.backward(p, &th, one(), None, 0.0, false)?;
        let norm = g.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && lambda > 0.0 {
            let v = Tensor::new(g.shape().to_vec(), g.data().iter().map(|x| x / norm).collect())?;
            let tangent = net.forward(p, v, false, Some(&th.slopes))?;
            net.backward(p, &tangent, one(), Some(&mut grads), 2.0 * lambda * (norm - 1.0), false)?;
        }
        let loss = tf.output.data()[0] - tr.output.data()[0] + lambda * (norm - 1.0).powi(2);
        Ok((loss, grads))
    }

    /// Mean critic loss `D(fake) - D(real) + penalty` over the batch and its
    /// gradient for the critic parameters.
    pub fn critic_batch(&self, real: &[Tensor], fake: &[Tensor], eps: &[f64]) -> Result<(f64, ParamSet), GafError> {
        if real.len() != fake.len() || real.len() != eps.len() || real.is_empty() {
            return Err(GafError::InvalidConfig("critic batch parts differ in size".into()));
        }
        let net = critic_net(&self.config);
        let parts: Vec<(f64, ParamSet)> = (0..real.len())
            .into_par_iter()
            .map(|i| self.critic_sample(&net, &real[i], &fake[i], eps[i]))
            .collect::<Result<_, _>>()?;
        let (loss, mut grads) = sum_ordered(parts, &self.critic)?;
        let n = real.len() as f64;
        grads.scale(1.0 / n);
        Ok((loss / n, grads))
    }

    /// Mean generator loss `-D(G(z))` and its gradient for the generator.
    pub fn generator_batch(&self, zs: &[Vec<f64>]) -> Result<(f64, ParamSet), GafError> {
        if zs.is_empty() {
            return Err(GafError::InvalidConfig("empty generator batch".into()));
        }
        let (gnet, dnet) = (generator_net(&self.config), critic_net(&self.config));
        let parts: Vec<(f64, ParamSet)> = zs
            .par_iter()
            .map(|z| -> Result<(f64, ParamSet), NnError> {
                let tg = gnet.forward(&self.generator, Tensor::vector(z.clone()), true, None)?;
                let td = dnet.forward(&self.critic, tg.output.clone(), true, None)?;
                let dx = dnet.backward(&self.critic, &td, Tensor::vector(vec![-1.0]), None, 0.0, false)?;
                let mut grads = self.generator.zeros_like();
                gnet.backward(&self.generator, &tg, dx, Some(&mut grads), 1.0, true)?;
                Ok((-td.output.data()[0], grads))
            })
            .collect::<Result<_, _>>()?;
        let (loss, mut grads) = sum_ordered(parts, &self.generator)?;
        let n = zs.len() as f64;
        grads.scale(1.0 / n);
        Ok((loss / n, grads))
    }

    /// Argmax ids of the generator output for `z`.
    pub fn sample_ids(&self, z: &[f64]) -> Result<Vec<u32>, GafError> {
        Ok(argmax_ids(&self.generate(z)?))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut c = Checkpoint::default();
        c.metadata.insert("kind".into(), "field-gan".into());
        c.metadata.insert("field".into(), self.field.clone());
        c.metadata.insert("vocab_size".into(), self.vocab_size.to_string());
        c.metadata.insert("config".into(), self.config.describe());
        for (name, t) in self.generator.iter().chain(self.critic.iter()) {
            c.tensors.insert(name, t.clone());
        }
        c
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self, GafError> {
        let meta = |k: &str| {
            c.metadata
                .get(k)
                .ok_or_else(|| GafError::InvalidConfig(format!("GAN checkpoint lacks {k}")))
        };
        if meta("kind")? != "field-gan" {
            return Err(GafError::InvalidConfig("not a field GAN checkpoint".into()));
        }
        let vocab_size: usize = meta("vocab_size")?
            .parse()
            .map_err(|_| GafError::InvalidConfig("bad vocab_size".into()))?;
        let mut gan = FieldGan::new(meta("field")?, vocab_size, GanConfig::parse(meta("config")?)?, 0)?;
        for set in [&mut gan.generator, &mut gan.critic] {
            for i in 0..set.len() {
                let name = set.names()[i].clone();
                let t = c.tensors.require(&name)?;
                if t.shape() != set.at(i).shape() {
                    return Err(GafError::InvalidConfig(format!("tensor {name} has the wrong shape")));
                }
                *set.at_mut(i) = t.clone();
            }
        }
        Ok(gan)
    }
}

/// Trains a field GAN on encoded sequences (the benign contents with
/// malicious words already injected).
pub fn train_field_gan(
    field: &str,
    sequences: &[TokenSequence],
    vocab_size: usize,
    config: &GanConfig,
    seed: u64,
) -> Result<FieldGan, GafError> {
    config.validate()?;
    if sequences.len() < config.batch_size {
        return Err(GafError::InsufficientData(format!(
            "{} sequences for field {field}, batch size {}",
            sequences.len(),
            config.batch_size
        )));
    }
    for s in sequences {
        if s.ids.len() != config.seq_len || s.ids.iter().any(|&id| id as usize >= vocab_size) {
            return Err(GafError::InvalidConfig(format!(
                "sequence does not fit field {field} (L={}, V={vocab_size})",
                config.seq_len
            )));
        }
    }
    let mut gan = FieldGan::new(field, vocab_size, config.clone(), seed)?;
    let real: Vec<Tensor> = sequences.iter().map(|s| one_hot_sequence(&s.ids, vocab_size)).collect();
    let adam = AdamConfig {
        lr: config.lr,
        beta1: config.beta1,
        beta2: config.beta2,
        ..AdamConfig::default()
    };
    let mut critic_opt = AdamState::new(&gan.critic, adam);
    let mut gen_opt = AdamState::new(&gan.generator, adam);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(12);
    let b = config.batch_size;
    let indices: Vec<usize> = (0..real.len()).collect();
    for it in 0..config.iterations {
        for _ in 0..config.critic_steps {
            let batch: Vec<Tensor> = indices.choose_multiple(&mut rng, b).map(|&i| real[i].clone()).collect();
            let zs: Vec<Vec<f64>> = (0..b).map(|_| gan.noise(&mut rng)).collect();
            let eps: Vec<f64> = (0..b).map(|_| rng.gen::<f64>()).collect();
            let fake: Vec<Tensor> = zs.par_iter().map(|z| gan.generate(z)).collect::<Result<_, _>>()?;
            let (loss, grads) = gan.critic_batch(&batch, &fake, &eps)?;
            if !loss.is_finite() {
                return Err(GafError::Diverged { field: field.to_string(), iteration: it });
            }
            gan.history.critic_loss.push(loss);
            adam_update(&mut gan.critic, &grads, &mut critic_opt)?;
        }
        let zs: Vec<Vec<f64>> = (0..b).map(|_| gan.noise(&mut rng)).collect();
        let (loss, grads) = gan.generator_batch(&zs)?;
        if !loss.is_finite() {
            return Err(GafError::Diverged { field: field.to_string(), iteration: it });
        }
        gan.history.generator_loss.push(loss);
        adam_update(&mut gan.generator, &grads, &mut gen_opt)?;
        if (it + 1) % 50 == 0 {
            debug!(
                "gan {field}: iteration {} critic {:.4} generator {loss:.4}",
                it + 1,
                gan.history.critic_loss.last().unwrap()
            );
        }
    }
    Ok(gan)
}
