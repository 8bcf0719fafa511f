//! Single LSTM step over the concatenation `[h_prev, x_t]`.
//!
//! ```text
//! f = sigmoid(W_f [h, x] + b_f)      forget gate
//! i = sigmoid(W_i [h, x] + b_i)      input gate
//! o = sigmoid(W_o [h, x] + b_o)      output gate
//! g = tanh(W_c [h, x] + b_c)         candidate state
//! c_t = f * c_prev + i * g
//! h_t = o * tanh(c_t)
//! ```

use super::layers::{matvec, sigmoid};
use super::{NnError, Tensor};

/// Gate order used by every array in this module.
pub const GATES: [&str; 4] = ["f", "i", "o", "c"];

/// Borrowed gate weights `[H, H + X]` and biases `[H]`, in [`GATES`] order.
#[derive(Clone, Copy)]
pub struct LstmParams<'a> {
    pub weights: [&'a Tensor; 4],
    pub biases: [&'a Tensor; 4],
}

impl LstmParams<'_> {
    pub fn hidden(&self) -> usize {
        self.biases[0].len()
    }

    fn check(&self, x_len: usize) -> Result<usize, NnError> {
        let h = self.hidden();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            w.expect_shape(&[h, h + x_len], "lstm gate weights")?;
            b.expect_shape(&[h], "lstm gate bias")?;
        }
        Ok(h)
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone)]
pub struct LstmCache {
    pub concat: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub f: Vec<f64>,
    pub i: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub fn lstm_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    params: LstmParams<'_>,
) -> Result<(Vec<f64>, Vec<f64>, LstmCache), NnError> {
    let hidden = params.check(x.len())?;
    if h_prev.len() != hidden || c_prev.len() != hidden {
        return Err(NnError::ShapeMismatch(format!(
            "lstm state of {}/{} for hidden size {hidden}",
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut concat = Vec::with_capacity(hidden + x.len());
    concat.extend_from_slice(h_prev);
    concat.extend_from_slice(x);
    let pre = |gate: usize| {
        matvec(
            params.weights[gate].data(),
            &concat,
            hidden,
            Some(params.biases[gate].data()),
        )
    };
    let f: Vec<f64> = pre(0).into_iter().map(sigmoid).collect();
    let i: Vec<f64> = pre(1).into_iter().map(sigmoid).collect();
    let o: Vec<f64> = pre(2).into_iter().map(sigmoid).collect();
    let g: Vec<f64> = pre(3).into_iter().map(f64::tanh).collect();
    let c: Vec<f64> = (0..hidden).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<f64> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();
    let cache = LstmCache {
        concat,
        c_prev: c_prev.to_vec(),
        f,
        i,
        o,
        g,
        c: c.clone(),
        tanh_c,
    };
    Ok((h, c, cache))
}

pub struct LstmGrads {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub weights: [Tensor; 4],
    pub biases: [Tensor; 4],
}

/// Backward through one step given gradients flowing into `h_t` and `c_t`.
pub fn lstm_step_backward(
    cache: &LstmCache,
    params: LstmParams<'_>,
    grad_h: &[f64],
    grad_c: &[f64],
) -> Result<LstmGrads, NnError> {
    let hidden = params.hidden();
    let width = cache.concat.len();
    if grad_h.len() != hidden || grad_c.len() != hidden || cache.f.len() != hidden {
        return Err(NnError::GraphState(format!(
            "lstm backward: gradients {}/{} for cached hidden size {}",
            grad_h.len(),
            grad_c.len(),
            cache.f.len()
        )));
    }
    params.check(width - hidden)?;

    let mut pre_grads = [
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
        vec![0.0; hidden],
    ];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (f, i, o, g, tc) = (cache.f[k], cache.i[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let d_o = grad_h[k] * tc;
        let dc = grad_c[k] + grad_h[k] * o * (1.0 - tc * tc);
        pre_grads[0][k] = dc * cache.c_prev[k] * f * (1.0 - f);
        pre_grads[1][k] = dc * g * i * (1.0 - i);
        pre_grads[2][k] = d_o * o * (1.0 - o);
        pre_grads[3][k] = dc * i * (1.0 - g * g);
        dc_prev[k] = dc * f;
    }

    let mut dconcat = vec![0.0; width];
    let mut dws = Vec::with_capacity(4);
    let mut dbs = Vec::with_capacity(4);
    for (gate, dpre) in pre_grads.iter().enumerate() {
        let w = params.weights[gate].data();
        let mut dw = vec![0.0; hidden * width];
        for (r, &d) in dpre.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &w[r * width..(r + 1) * width];
            let drow = &mut dw[r * width..(r + 1) * width];
            for j in 0..width {
                drow[j] = d * cache.concat[j];
                dconcat[j] += d * row[j];
            }
        }
        dws.push(Tensor::new(vec![hidden, width], dw)?);
        dbs.push(Tensor::vector(dpre.clone()));
    }
    let x = dconcat.split_off(hidden);
    Ok(LstmGrads {
        x,
        h_prev: dconcat,
        c_prev: dc_prev,
        weights: dws.try_into().expect("four gates"),
        biases: dbs.try_into().expect("four gates"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_params(h: usize, x: usize) -> (Vec<Tensor>, Vec<Tensor>) {
        (
            (0..4).map(|_| Tensor::zeros(&[h, h + x])).collect(),
            (0..4).map(|_| Tensor::zeros(&[h])).collect(),
        )
    }

    fn view<'a>(w: &'a [Tensor], b: &'a [Tensor]) -> LstmParams<'a> {
        LstmParams {
            weights: [&w[0], &w[1], &w[2], &w[3]],
            biases: [&b[0], &b[1], &b[2], &b[3]],
        }
    }

    #[test]
    fn zero_weights_give_half_gates_and_zero_state() {
        let (w, b) = zero_params(16, 5);
        let (h, c, cache) = lstm_step(&[0.3; 5], &[0.0; 16], &[0.0; 16], view(&w, &b)).unwrap();
        assert!(cache.f.iter().chain(&cache.i).chain(&cache.o).all(|&v| v == 0.5));
        assert!(c.iter().all(|&v| v == 0.0));
        assert!(h.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_step_matches_hand_calculation() {
        // hidden 1, input 1; concat = [h_prev, x] = [0.5, 2.0]
        let w = vec![
            Tensor::new(vec![1, 2], vec![0.1, 0.2]).unwrap(),
            Tensor::new(vec![1, 2], vec![-0.3, 0.4]).unwrap(),
            Tensor::new(vec![1, 2], vec![0.5, -0.6]).unwrap(),
            Tensor::new(vec![1, 2], vec![0.7, 0.8]).unwrap(),
        ];
        let b: Vec<Tensor> = [0.01, 0.02, 0.03, 0.04]
            .iter()
            .map(|&v| Tensor::vector(vec![v]))
            .collect();
        let (h, c, _) = lstm_step(&[2.0], &[0.5], &[-0.25], view(&w, &b)).unwrap();
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let f = sig(0.1 * 0.5 + 0.2 * 2.0 + 0.01);
        let i = sig(-0.3 * 0.5 + 0.4 * 2.0 + 0.02);
        let o = sig(0.5 * 0.5 - 0.6 * 2.0 + 0.03);
        let g = (0.7f64 * 0.5 + 0.8 * 2.0 + 0.04).tanh();
        let c_exp = f * -0.25 + i * g;
        assert!((c[0] - c_exp).abs() < 1e-15);
        assert!((h[0] - o * c_exp.tanh()).abs() < 1e-15);
    }

    #[test]
    fn repeated_zero_inputs_stay_bounded() {
        let w: Vec<Tensor> = (0..4).map(|_| Tensor::filled(&[3, 5], 0.9)).collect();
        let b: Vec<Tensor> = (0..4).map(|_| Tensor::filled(&[3], 0.5)).collect();
        let (mut h, mut c) = (vec![0.0; 3], vec![0.0; 3]);
        for _ in 0..200 {
            let (h2, c2, _) = lstm_step(&[0.0; 2], &h, &c, view(&w, &b)).unwrap();
            h = h2;
            c = c2;
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let (w, b) = zero_params(4, 3);
        assert!(matches!(
            lstm_step(&[0.0; 2], &[0.0; 4], &[0.0; 4], view(&w, &b)),
            Err(NnError::ShapeMismatch(_))
        ));
    }
}
