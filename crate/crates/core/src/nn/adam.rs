use super::{NnError, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: ParamSet,
    pub v: ParamSet,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }
}

/// One bias-corrected adaptive-moment step.
pub fn adam_update(
    params: &mut ParamSet,
    grads: &ParamSet,
    state: &mut AdamState,
) -> Result<(), NnError> {
    if !params.same_layout(grads) || !params.same_layout(&state.m) {
        return Err(NnError::ShapeMismatch(
            "adam: parameters, gradients and moments differ in layout".into(),
        ));
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for idx in 0..params.len() {
        let g = grads.at(idx).data();
        let m = state.m.at_mut(idx).data_mut();
        for (mi, gi) in m.iter_mut().zip(g) {
            *mi = beta1 * *mi + (1.0 - beta1) * gi;
        }
        let v = state.v.at_mut(idx).data_mut();
        for (vi, gi) in v.iter_mut().zip(g) {
            *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
        }
        let (m, v) = (state.m.at(idx).data(), state.v.at(idx).data());
        let p = params.at_mut(idx).data_mut();
        for k in 0..p.len() {
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::vector(vec![v]));
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0);
        let mut state = AdamState::new(&p, AdamConfig::default());
        adam_update(&mut p, &scalar(1.0), &mut state).unwrap();
        let w = p.get("w").unwrap().data()[0];
        assert!((w + 1e-3).abs() < 1e-10, "{w}");
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_keeps_param_and_decays_moments() {
        let mut p = scalar(0.5);
        let mut state = AdamState::new(&p, AdamConfig::default());
        state.m = scalar(0.2);
        state.v = scalar(0.3);
        let before = state.clone();
        adam_update(&mut p, &scalar(0.0), &mut state).unwrap();
        assert!(p.get("w").unwrap().data()[0] < 0.5);
        let mut q = scalar(0.5);
        let mut fresh = AdamState::new(&q, AdamConfig::default());
        adam_update(&mut q, &scalar(0.0), &mut fresh).unwrap();
        assert_eq!(q.get("w").unwrap().data()[0], 0.5);
        assert!(state.m.at(0).data()[0] < before.m.at(0).data()[0]);
        assert!(state.v.at(0).data()[0] < before.v.at(0).data()[0]);
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut p = scalar(0.1);
            let mut s = AdamState::new(&p, AdamConfig::default());
            for k in 0..50 {
                adam_update(&mut p, &scalar((k as f64).sin()), &mut s).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn layout_mismatch() {
        let mut p = scalar(0.0);
        let mut s = AdamState::new(&p, AdamConfig::default());
        let mut g = ParamSet::new();
        g.insert("other", Tensor::vector(vec![1.0]));
        assert!(adam_update(&mut p, &g, &mut s).is_err());
    }
}
