//! Convolution, pooling, dense and activation layers with their backward
//! passes. Every backward takes the forward inputs (or a cache) and the
//! gradient of the loss with respect to the forward output.

use super::{NnError, Tensor};

/// Valid-mode 2-D convolution (cross-correlation).
///
/// `input` is `[C, H, W]`, `kernels` `[K, C, fh, fw]`, `bias` `[K]`; the
/// output is `[K, (H - fh) / stride + 1, (W - fw) / stride + 1]`.
pub fn conv2d(
    input: &Tensor,
    kernels: &Tensor,
    bias: &Tensor,
    stride: usize,
) -> Result<Tensor, NnError> {
    let g = Conv2dGeometry::check(input, kernels, stride)?;
    bias.expect_shape(&[g.k], "conv2d bias")?;
    let (x, w) = (input.data(), kernels.data());
    let mut out = vec![0.0; g.k * g.oh * g.ow];
    for k in 0..g.k {
        let b = bias.data()[k];
        for i in 0..g.oh {
            for j in 0..g.ow {
                let mut acc = b;
                for c in 0..g.c {
                    for dx in 0..g.fh {
                        let row = &x[(c * g.h + stride * i + dx) * g.w + stride * j..];
                        let krow = &w[((k * g.c + c) * g.fh + dx) * g.fw..][..g.fw];
                        acc += krow.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                out[(k * g.oh + i) * g.ow + j] = acc;
            }
        }
    }
    Tensor::new(vec![g.k, g.oh, g.ow], out)
}

pub struct Conv2dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    grad_out: &Tensor,
) -> Result<Conv2dGrads, NnError> {
    let g = Conv2dGeometry::check(input, kernels, stride)?;
    if grad_out.shape() != [g.k, g.oh, g.ow] {
        return Err(NnError::GraphState(format!(
            "conv2d backward: gradient {:?} does not match output [{}, {}, {}]",
            grad_out.shape(),
            g.k,
            g.oh,
            g.ow
        )));
    }
    let (x, w, go) = (input.data(), kernels.data(), grad_out.data());
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; g.k];
    for k in 0..g.k {
        for i in 0..g.oh {
            for j in 0..g.ow {
                let gv = go[(k * g.oh + i) * g.ow + j];
                if gv == 0.0 {
                    continue;
                }
                db[k] += gv;
                for c in 0..g.c {
                    for ddx in 0..g.fh {
                        let xoff = (c * g.h + stride * i + ddx) * g.w + stride * j;
                        let woff = ((k * g.c + c) * g.fh + ddx) * g.fw;
                        for ddy in 0..g.fw {
                            dw[woff + ddy] += gv * x[xoff + ddy];
                            dx[xoff + ddy] += gv * w[woff + ddy];
                        }
                    }
                }
            }
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        kernels: Tensor::new(kernels.shape().to_vec(), dw)?,
        bias: Tensor::vector(db),
    })
}

struct Conv2dGeometry {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    fh: usize,
    fw: usize,
    oh: usize,
    ow: usize,
}

impl Conv2dGeometry {
    fn check(input: &Tensor, kernels: &Tensor, stride: usize) -> Result<Self, NnError> {
        input.expect_rank(3, "conv2d input")?;
        kernels.expect_rank(4, "conv2d kernels")?;
        let [c, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
        let ks = kernels.shape();
        let [k, kc, fh, fw] = [ks[0], ks[1], ks[2], ks[3]];
        if kc != c {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d: kernel channels {kc} vs input channels {c}"
            )));
        }
        if stride == 0 || fh > h || fw > w {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d: kernel {fh}x{fw} stride {stride} on {h}x{w} input"
            )));
        }
        Ok(Conv2dGeometry {
            c,
            h,
            w,
            k,
            fh,
            fw,
            oh: (h - fh) / stride + 1,
            ow: (w - fw) / stride + 1,
        })
    }
}

/// Max-pooling output plus the flat input index each cell was taken from.
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

/// Non-overlapping `f x f` max pooling. Rejects dimensions not divisible by `f`.
pub fn maxpool2d(input: &Tensor, f: usize) -> Result<PoolOutput, NnError> {
    input.expect_rank(3, "maxpool input")?;
    let (h, w) = (input.shape()[1], input.shape()[2]);
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(NnError::ShapeMismatch(format!(
            "maxpool: {h}x{w} not divisible by {f}"
        )));
    }
    maxpool2d_floor(input, f)
}

/// Non-overlapping `f x f` max pooling that drops trailing rows and columns
/// that do not fill a window (19 rows pool to 9).
pub fn maxpool2d_floor(input: &Tensor, f: usize) -> Result<PoolOutput, NnError> {
    input.expect_rank(3, "maxpool input")?;
    let [k, h, w] = [input.shape()[0], input.shape()[1], input.shape()[2]];
    if f == 0 || h < f || w < f {
        return Err(NnError::ShapeMismatch(format!(
            "maxpool: window {f} on {h}x{w}"
        )));
    }
    let (oh, ow) = (h / f, w / f);
    let x = input.data();
    let mut out = Vec::with_capacity(k * oh * ow);
    let mut argmax = Vec::with_capacity(k * oh * ow);
    for c in 0..k {
        for i in 0..oh {
            for j in 0..ow {
                let mut best = (f64::NEG_INFINITY, 0usize);
                for dx in 0..f {
                    for dy in 0..f {
                        let idx = (c * h + i * f + dx) * w + j * f + dy;
                        if x[idx] > best.0 {
                            best = (x[idx], idx);
                        }
                    }
                }
                out.push(best.0);
                argmax.push(best.1);
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::new(vec![k, oh, ow], out)?,
        argmax,
    })
}

/// Routes each output gradient back to the input cell that won its window.
pub fn maxpool2d_backward(
    input_shape: &[usize],
    pool: &PoolOutput,
    grad_out: &Tensor,
) -> Result<Tensor, NnError> {
    if grad_out.len() != pool.argmax.len() {
        return Err(NnError::GraphState(format!(
            "maxpool backward: {} gradients for {} pooled cells",
            grad_out.len(),
            pool.argmax.len()
        )));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in pool.argmax.iter().zip(grad_out.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// `W x + b` for `W` of shape `[out, in]`.
pub fn dense(input: &[f64], weights: &Tensor, bias: &Tensor) -> Result<Vec<f64>, NnError> {
    let (out, inp) = dense_dims(weights)?;
    bias.expect_shape(&[out], "dense bias")?;
    if input.len() != inp {
        return Err(NnError::ShapeMismatch(format!(
            "dense: input of {} for weights {:?}",
            input.len(),
            weights.shape()
        )));
    }
    Ok(matvec(weights.data(), input, out, Some(bias.data())))
}

pub fn dense_relu(input: &[f64], weights: &Tensor, bias: &Tensor) -> Result<Vec<f64>, NnError> {
    let mut y = dense(input, weights, bias)?;
    relu_in_place(&mut y);
    Ok(y)
}

pub struct DenseGrads {
    pub input: Vec<f64>,
    pub weights: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(
    input: &[f64],
    weights: &Tensor,
    grad_out: &[f64],
) -> Result<DenseGrads, NnError> {
    let (out, inp) = dense_dims(weights)?;
    if grad_out.len() != out || input.len() != inp {
        return Err(NnError::GraphState(format!(
            "dense backward: input {} / gradient {} for weights {:?}",
            input.len(),
            grad_out.len(),
            weights.shape()
        )));
    }
    let w = weights.data();
    let mut dx = vec![0.0; inp];
    let mut dw = vec![0.0; out * inp];
    for (o, &g) in grad_out.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[o * inp..(o + 1) * inp];
        let drow = &mut dw[o * inp..(o + 1) * inp];
        for i in 0..inp {
            drow[i] = g * input[i];
            dx[i] += g * row[i];
        }
    }
    Ok(DenseGrads {
        input: dx,
        weights: Tensor::new(weights.shape().to_vec(), dw)?,
        bias: Tensor::vector(grad_out.to_vec()),
    })
}

fn dense_dims(weights: &Tensor) -> Result<(usize, usize), NnError> {
    weights.expect_rank(2, "dense weights")?;
    Ok((weights.shape()[0], weights.shape()[1]))
}

pub(crate) fn matvec(w: &[f64], x: &[f64], out: usize, bias: Option<&[f64]>) -> Vec<f64> {
    let inp = x.len();
    (0..out)
        .map(|o| {
            let row = &w[o * inp..(o + 1) * inp];
            let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            dot + bias.map_or(0.0, |b| b[o])
        })
        .collect()
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_in_place(v: &mut [f64]) {
    for x in v {
        *x = relu(*x);
    }
}

/// Gradient through ReLU given the forward *output* (or pre-activation).
pub fn relu_backward(activated: &[f64], grad_out: &[f64]) -> Vec<f64> {
    activated
        .iter()
        .zip(grad_out)
        .map(|(&a, &g)| if a > 0.0 { g } else { 0.0 })
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const LEAKY_SLOPE: f64 = 0.2;

pub fn leaky_relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        LEAKY_SLOPE * x
    }
}

/// Local slope of the leaky ReLU at pre-activation `x`.
pub fn leaky_relu_slope(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        LEAKY_SLOPE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct quadruple sum, independent of the sliced implementation.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, s: usize) -> Tensor {
        let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (k, fh, fw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
        let (oh, ow) = ((h - fh) / s + 1, (wd - fw) / s + 1);
        let mut out = Tensor::zeros(&[k, oh, ow]);
        for kk in 0..k {
            for i in 0..oh {
                for j in 0..ow {
                    let mut acc = b.data()[kk];
                    for cc in 0..c {
                        for a in 0..fh {
                            for bb in 0..fw {
                                acc += x.data()[(cc * h + s * i + a) * wd + s * j + bb]
                                    * w.data()[((kk * c + cc) * fh + a) * fw + bb];
                            }
                        }
                    }
                    out.data_mut()[(kk * oh + i) * ow + j] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn identity_kernel() {
        let x = Tensor::new(vec![1, 2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let w = Tensor::filled(&[1, 1, 1, 1], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn all_ones_kernel_sums_window() {
        let x = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let w = Tensor::filled(&[1, 1, 2, 2], 1.0);
        let y = conv2d(&x, &w, &Tensor::zeros(&[1]), 1).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1]);
        assert_eq!(y.data(), &[10.0]);
    }

    #[test]
    fn packet_image_conv_shape() {
        let x = Tensor::zeros(&[1, 20, 40]);
        let w = Tensor::zeros(&[2, 1, 2, 8]);
        let y = conv2d(&x, &w, &Tensor::zeros(&[2]), 1).unwrap();
        assert_eq!(y.shape(), &[2, 19, 33]);
    }

    #[test]
    fn conv_rejects_oversized_kernel() {
        let x = Tensor::zeros(&[1, 2, 2]);
        let w = Tensor::zeros(&[1, 1, 3, 1]);
        assert!(matches!(
            conv2d(&x, &w, &Tensor::zeros(&[1]), 1),
            Err(NnError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn conv_matches_naive_oracle_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let c = rng.gen_range(1..4);
            let k = rng.gen_range(1..4);
            let fh = rng.gen_range(1..4);
            let fw = rng.gen_range(1..5);
            let s = rng.gen_range(1..3);
            let h = fh + rng.gen_range(0..6);
            let w = fw + rng.gen_range(0..6);
            let x = random(&mut rng, &[c, h, w]);
            let kern = random(&mut rng, &[k, c, fh, fw]);
            let b = random(&mut rng, &[k]);
            let fast = conv2d(&x, &kern, &b, s).unwrap();
            let slow = naive_conv(&x, &kern, &b, s);
            assert_eq!(fast.shape(), slow.shape());
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_basics() {
        let x = Tensor::new(vec![1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(maxpool2d(&x, 2).unwrap().output.data(), &[4.0]);
        let c = Tensor::filled(&[2, 4, 4], 3.5);
        assert!(maxpool2d(&c, 2).unwrap().output.data().iter().all(|&v| v == 3.5));
        assert!(maxpool2d(&Tensor::zeros(&[1, 3, 4]), 2).is_err());
        assert_eq!(
            maxpool2d_floor(&Tensor::zeros(&[2, 19, 33]), 2).unwrap().output.shape(),
            &[2, 9, 16]
        );
    }

    #[test]
    fn pool_matches_window_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random(&mut rng, &[1, 4, 4]);
        let y = maxpool2d(&x, 2).unwrap().output;
        for i in 0..2 {
            for j in 0..2 {
                let m = [(0, 0), (0, 1), (1, 0), (1, 1)]
                    .iter()
                    .map(|(a, b)| x.data()[(2 * i + a) * 4 + 2 * j + b])
                    .fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(y.data()[i * 2 + j], m);
            }
        }
    }

    #[test]
    fn dense_identity_relu_and_oracle() {
        let eye = Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]).unwrap();
        assert_eq!(dense(&[3., -4.], &eye, &Tensor::zeros(&[2])).unwrap(), vec![3., -4.]);
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.0), 2.0);
        assert_eq!(
            dense_relu(&[3., -4.], &eye, &Tensor::zeros(&[2])).unwrap(),
            vec![3., 0.]
        );

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w = random(&mut rng, &[5, 7]);
        let b = random(&mut rng, &[5]);
        let x: Vec<f64> = (0..7).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = dense(&x, &w, &b).unwrap();
        for o in 0..5 {
            let mut acc = b.data()[o];
            for i in 0..7 {
                acc += w.data()[o * 7 + i] * x[i];
            }
            assert!((y[o] - acc).abs() < 1e-12);
        }
        assert!(dense(&x[..6], &w, &b).is_err());
    }
}
