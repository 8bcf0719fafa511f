//! Central-difference gradient checking.
//!
//! Every check treats layer inputs as parameters too, so one report covers
//! both the weight gradients and the gradient passed downstream. Fragment
//! losses are `sum(r * out)` for a fixed random `r`, which exercises every
//! output element with a distinct weight.

use rand::Rng;

use super::{
    conv1d_same, conv1d_same_backward, conv2d, conv2d_backward, dense, dense_backward,
    lstm_step, lstm_step_backward, maxpool2d_backward, maxpool2d_floor, relu_backward,
    relu_in_place, softmax_cross_entropy, softmax_cross_entropy_backward, uniform_unit, LstmParams,
    NnError, ParamSet, Tensor,
};

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor so that two vanishing gradients do not blow up the ratio.
pub const REL_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub fragment: String,
    pub blocks: Vec<BlockError>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().fold(0.0, |m, b| m.max(b.max_rel_error))
    }

    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_error() <= tolerance
    }
}

/// Compares `analytic` against central differences of `loss` around `params`.
pub fn check_gradients<F>(
    fragment: &str,
    params: &ParamSet,
    analytic: &ParamSet,
    mut loss: F,
    step: f64,
) -> Result<GradCheckReport, NnError>
where
    F: FnMut(&ParamSet) -> Result<f64, NnError>,
{
    if !params.same_layout(analytic) {
        return Err(NnError::ShapeMismatch(format!(
            "{fragment}: gradient layout differs from parameters"
        )));
    }
    let mut probe = params.clone();
    let mut blocks = Vec::with_capacity(params.len());
    for (b, name) in params.names().iter().enumerate() {
        let mut worst = 0.0f64;
        for k in 0..params.at(b).len() {
            let orig = params.at(b).data()[k];
            probe.at_mut(b).data_mut()[k] = orig + step;
            let up = loss(&probe)?;
            probe.at_mut(b).data_mut()[k] = orig - step;
            let down = loss(&probe)?;
            probe.at_mut(b).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic.at(b).data()[k], numeric));
        }
        blocks.push(BlockError {
            name: name.clone(),
            max_rel_error: worst,
        });
    }
    Ok(GradCheckReport {
        fragment: fragment.to_string(),
        blocks,
    })
}

fn weighted_sum(out: &[f64], r: &[f64]) -> f64 {
    out.iter().zip(r).map(|(a, b)| a * b).sum()
}

fn random_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

pub fn check_dense<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let mut p = ParamSet::new();
    p.insert("x", uniform_unit(&[7], rng));
    p.insert("w", uniform_unit(&[5, 7], rng));
    p.insert("b", uniform_unit(&[5], rng));
    let r = random_vec(5, rng);
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        let y = dense(p.require("x")?.data(), p.require("w")?, p.require("b")?)?;
        Ok(weighted_sum(&y, &r))
    };
    let g = dense_backward(p.require("x")?.data(), p.require("w")?, &r)?;
    let mut grads = ParamSet::new();
    grads.insert("x", Tensor::vector(g.input));
    grads.insert("w", g.weights);
    grads.insert("b", g.bias);
    check_gradients("dense", &p, &grads, f, FD_STEP)
}

pub fn check_conv2d<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let mut p = ParamSet::new();
    p.insert("x", uniform_unit(&[2, 5, 9], rng));
    p.insert("w", uniform_unit(&[3, 2, 2, 4], rng));
    p.insert("b", uniform_unit(&[3], rng));
    let r = random_vec(3 * 4 * 6, rng);
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        let y = conv2d(p.require("x")?, p.require("w")?, p.require("b")?, 1)?;
        Ok(weighted_sum(y.data(), &r))
    };
    let grad_out = Tensor::new(vec![3, 4, 6], r.clone())?;
    let g = conv2d_backward(p.require("x")?, p.require("w")?, 1, &grad_out)?;
    let mut grads = ParamSet::new();
    grads.insert("x", g.input);
    grads.insert("w", g.kernels);
    grads.insert("b", g.bias);
    check_gradients("conv2d", &p, &grads, f, FD_STEP)
}

/// conv -> ReLU -> floor max-pool, the image branch of the classifier.
pub fn check_conv_relu_pool<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let mut p = ParamSet::new();
    p.insert("x", uniform_unit(&[1, 6, 11], rng));
    p.insert("w", uniform_unit(&[2, 1, 2, 3], rng));
    p.insert("b", uniform_unit(&[2], rng));
    // conv output 2x5x9, pooled 2x2x4
    let r = random_vec(2 * 2 * 4, rng);
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        let mut y = conv2d(p.require("x")?, p.require("w")?, p.require("b")?, 1)?;
        relu_in_place(y.data_mut());
        let pooled = maxpool2d_floor(&y, 2)?;
        Ok(weighted_sum(pooled.output.data(), &r))
    };
    let mut y = conv2d(p.require("x")?, p.require("w")?, p.require("b")?, 1)?;
    relu_in_place(y.data_mut());
    let pooled = maxpool2d_floor(&y, 2)?;
    let d_act = maxpool2d_backward(y.shape(), &pooled, &Tensor::new(vec![2, 2, 4], r.clone())?)?;
    let d_pre = Tensor::new(y.shape().to_vec(), relu_backward(y.data(), d_act.data()))?;
    let g = conv2d_backward(p.require("x")?, p.require("w")?, 1, &d_pre)?;
    let mut grads = ParamSet::new();
    grads.insert("x", g.input);
    grads.insert("w", g.kernels);
    grads.insert("b", g.bias);
    check_gradients("conv-relu-pool", &p, &grads, f, FD_STEP)
}

pub fn check_conv1d<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let mut p = ParamSet::new();
    p.insert("x", uniform_unit(&[3, 8], rng));
    p.insert("w", uniform_unit(&[4, 3, 5], rng));
    p.insert("b", uniform_unit(&[4], rng));
    let r = random_vec(4 * 8, rng);
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        let y = conv1d_same(p.require("x")?, p.require("w")?, Some(p.require("b")?))?;
        Ok(weighted_sum(y.data(), &r))
    };
    let g = conv1d_same_backward(
        p.require("x")?,
        p.require("w")?,
        &Tensor::new(vec![4, 8], r.clone())?,
    )?;
    let mut grads = ParamSet::new();
    grads.insert("x", g.input);
    grads.insert("w", g.kernels);
    grads.insert("b", g.bias);
    check_gradients("conv1d", &p, &grads, f, FD_STEP)
}

const LSTM_NAMES: [&str; 8] = ["w_f", "w_i", "w_o", "w_c", "b_f", "b_i", "b_o", "b_c"];

fn lstm_view(p: &ParamSet) -> Result<LstmParams<'_>, NnError> {
    Ok(LstmParams {
        weights: [
            p.require("w_f")?,
            p.require("w_i")?,
            p.require("w_o")?,
            p.require("w_c")?,
        ],
        biases: [
            p.require("b_f")?,
            p.require("b_i")?,
            p.require("b_o")?,
            p.require("b_c")?,
        ],
    })
}

/// One LSTM step with loss on both the new hidden and cell state.
pub fn check_lstm<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let (hidden, input) = (4, 3);
    let mut p = ParamSet::new();
    p.insert("x", uniform_unit(&[input], rng));
    p.insert("h", uniform_unit(&[hidden], rng));
    p.insert("c", uniform_unit(&[hidden], rng));
    for name in &LSTM_NAMES[..4] {
        p.insert(*name, uniform_unit(&[hidden, hidden + input], rng));
    }
    for name in &LSTM_NAMES[4..] {
        p.insert(*name, uniform_unit(&[hidden], rng));
    }
    let rh = random_vec(hidden, rng);
    let rc = random_vec(hidden, rng);
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        let (h, c, _) = lstm_step(
            p.require("x")?.data(),
            p.require("h")?.data(),
            p.require("c")?.data(),
            lstm_view(p)?,
        )?;
        Ok(weighted_sum(&h, &rh) + weighted_sum(&c, &rc))
    };
    let (_, _, cache) = lstm_step(
        p.require("x")?.data(),
        p.require("h")?.data(),
        p.require("c")?.data(),
        lstm_view(&p)?,
    )?;
    let g = lstm_step_backward(&cache, lstm_view(&p)?, &rh, &rc)?;
    let mut grads = ParamSet::new();
    grads.insert("x", Tensor::vector(g.x));
    grads.insert("h", Tensor::vector(g.h_prev));
    grads.insert("c", Tensor::vector(g.c_prev));
    let [wf, wi, wo, wc] = g.weights;
    let [bf, bi, bo, bc] = g.biases;
    for (name, t) in LSTM_NAMES.iter().zip([wf, wi, wo, wc, bf, bi, bo, bc]) {
        grads.insert(*name, t);
    }
    check_gradients("lstm-step", &p, &grads, f, FD_STEP)
}

pub fn check_softmax_ce<R: Rng>(rng: &mut R) -> Result<GradCheckReport, NnError> {
    let mut p = ParamSet::new();
    p.insert("logits", uniform_unit(&[2], rng));
    let target = [0.0, 1.0];
    let f = |p: &ParamSet| -> Result<f64, NnError> {
        Ok(softmax_cross_entropy(p.require("logits")?.data(), &target)?.0)
    };
    let (_, probs) = softmax_cross_entropy(p.require("logits")?.data(), &target)?;
    let mut grads = ParamSet::new();
    grads.insert(
        "logits",
        Tensor::vector(softmax_cross_entropy_backward(&probs, &target)),
    );
    check_gradients("softmax-ce", &p, &grads, f, FD_STEP)
}

/// Runs every layer-level fragment check.
pub fn check_all_layers<R: Rng>(rng: &mut R) -> Result<Vec<GradCheckReport>, NnError> {
    Ok(vec![
        check_conv2d(rng)?,
        check_conv_relu_pool(rng)?,
        check_dense(rng)?,
        check_lstm(rng)?,
        check_softmax_ce(rng)?,
        check_conv1d(rng)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn every_layer_passes_on_several_seeds() {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for report in check_all_layers(&mut rng).unwrap() {
                assert!(
                    report.passed(DEFAULT_TOLERANCE),
                    "seed {seed}: {report:?}"
                );
            }
        }
    }

    #[test]
    fn wrong_gradient_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ParamSet::new();
        p.insert("x", uniform_unit(&[3], &mut rng));
        let mut bad = p.zeros_like();
        bad.at_mut(0).data_mut().copy_from_slice(&[1.0, 1.0, 1.0]);
        // true gradient of sum(x^2) is 2x
        let report = check_gradients(
            "square",
            &p,
            &bad,
            |p| Ok(p.at(0).data().iter().map(|v| v * v).sum()),
            FD_STEP,
        )
        .unwrap();
        assert!(!report.passed(DEFAULT_TOLERANCE));
    }
}
