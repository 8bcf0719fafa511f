use super::NnError;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(logits)[k]`, evaluated as `ln sum_j exp(z_j - z_k)` with the
/// largest term split off into `ln_1p` so confident predictions keep their
/// tiny losses.
fn neg_log_prob(logits: &[f64], k: usize) -> f64 {
    let (top, m) = logits
        .iter()
        .enumerate()
        .map(|(j, z)| (j, z - logits[k]))
        .fold((0, f64::NEG_INFINITY), |best, c| if c.1 > best.1 { c } else { best });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, z)| (z - logits[k] - m).exp())
        .sum();
    m + rest.ln_1p()
}

/// Cross-entropy of softmax(`logits`) against a one-hot target.
/// Returns `(loss, probabilities)`.
pub fn softmax_cross_entropy(logits: &[f64], one_hot: &[f64]) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() != one_hot.len() || logits.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "softmax-ce: {} logits for a {}-way target",
            logits.len(),
            one_hot.len()
        )));
    }
    let loss = one_hot
        .iter()
        .enumerate()
        .filter(|&(_, &y)| y != 0.0)
        .map(|(k, y)| y * neg_log_prob(logits, k))
        .sum::<f64>();
    Ok((loss, softmax(logits)))
}

/// d loss / d logits = p - y.
pub fn softmax_cross_entropy_backward(probs: &[f64], one_hot: &[f64]) -> Vec<f64> {
    probs.iter().zip(one_hot).map(|(p, y)| p - y).collect()
}

pub fn one_hot(index: usize, width: usize) -> Vec<f64> {
    let mut v = vec![0.0; width];
    v[index] = 1.0;
    v
}
