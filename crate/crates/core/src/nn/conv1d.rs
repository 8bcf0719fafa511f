//! Same-padded 1-D convolution over `[channels, length]` sequences, used by
//! the field generators and critics.

use super::{NnError, Tensor};

struct Geometry {
    cin: usize,
    len: usize,
    cout: usize,
    k: usize,
    pad: usize,
}

fn geometry(input: &Tensor, kernels: &Tensor) -> Result<Geometry, NnError> {
    input.expect_rank(2, "conv1d input")?;
    kernels.expect_rank(3, "conv1d kernels")?;
    let (cin, len) = (input.shape()[0], input.shape()[1]);
    let (cout, kin, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if kin != cin || k % 2 == 0 {
        return Err(NnError::ShapeMismatch(format!(
            "conv1d: kernels {:?} on input {:?} (odd width required)",
            kernels.shape(),
            input.shape()
        )));
    }
    Ok(Geometry {
        cin,
        len,
        cout,
        k,
        pad: k / 2,
    })
}

/// `input [Cin, L]`, `kernels [Cout, Cin, k]` with odd `k` -> `[Cout, L]`.
/// A missing bias is treated as zero.
pub fn conv1d_same(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
) -> Result<Tensor, NnError> {
    let g = geometry(input, kernels)?;
    if let Some(b) = bias {
        b.expect_shape(&[g.cout], "conv1d bias")?;
    }
    let (x, w) = (input.data(), kernels.data());
    let mut out = vec![0.0; g.cout * g.len];
    for o in 0..g.cout {
        let b = bias.map_or(0.0, |b| b.data()[o]);
        let orow = &mut out[o * g.len..(o + 1) * g.len];
        orow.iter_mut().for_each(|v| *v = b);
        for c in 0..g.cin {
            let xrow = &x[c * g.len..(c + 1) * g.len];
            let krow = &w[(o * g.cin + c) * g.k..][..g.k];
            for (t, &kv) in krow.iter().enumerate() {
                if kv == 0.0 {
                    continue;
                }
                // output position p reads input p + t - pad
                let lo = g.pad.saturating_sub(t);
                let hi = (g.len + g.pad).saturating_sub(t).min(g.len);
                for p in lo..hi {
                    orow[p] += kv * xrow[p + t - g.pad];
                }
            }
        }
    }
    Tensor::new(vec![g.cout, g.len], out)
}

pub struct Conv1dGrads {
    pub input: Tensor,
    pub kernels: Tensor,
    pub bias: Tensor,
}

pub fn conv1d_same_backward(
    input: &Tensor,
    kernels: &Tensor,
    grad_out: &Tensor,
) -> Result<Conv1dGrads, NnError> {
    let g = geometry(input, kernels)?;
    if grad_out.shape() != [g.cout, g.len] {
        return Err(NnError::GraphState(format!(
            "conv1d backward: gradient {:?} for output [{}, {}]",
            grad_out.shape(),
            g.cout,
            g.len
        )));
    }
    let (x, w, go) = (input.data(), kernels.data(), grad_out.data());
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; g.cout];
    for o in 0..g.cout {
        let grow = &go[o * g.len..(o + 1) * g.len];
        db[o] = grow.iter().sum();
        for c in 0..g.cin {
            let xrow = &x[c * g.len..(c + 1) * g.len];
            let koff = (o * g.cin + c) * g.k;
            for t in 0..g.k {
                let lo = g.pad.saturating_sub(t);
                let hi = (g.len + g.pad).saturating_sub(t).min(g.len);
                let kv = w[koff + t];
                let mut acc = 0.0;
                let dxrow = &mut dx[c * g.len..(c + 1) * g.len];
                for p in lo..hi {
                    let q = p + t - g.pad;
                    acc += grow[p] * xrow[q];
                    dxrow[q] += grow[p] * kv;
                }
                dw[koff + t] = acc;
            }
        }
    }
    Ok(Conv1dGrads {
        input: Tensor::new(input.shape().to_vec(), dx)?,
        kernels: Tensor::new(kernels.shape().to_vec(), dw)?,
        bias: Tensor::vector(db),
    })
}
