use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::params::ParamStore;
use crate::{Error, Result};

/// First/second moment estimates plus the update counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub m: ParamStore,
    pub v: ParamStore,
    pub t: u64,
}

impl AdamWState {
    pub fn new(params: &ParamStore) -> Self {
        AdamWState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One AdamW update. Weight decay shrinks parameters directly
/// (`p ← p − lr·λ·p`) and never enters the moment estimates.
pub fn optimizer_step(params: &mut ParamStore, grads: &ParamStore, state: &mut AdamWState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    params.check_layout(grads)?;
    params.check_layout(&state.m)?;
    if let Some(t) = grads.tensors.iter().find(|t| t.data.iter().any(|g| !g.is_finite())) {
        return Err(Error::NonFiniteGradient(t.name.clone()));
    }
    let (b1, b2) = cfg.betas;
    state.t += 1;
    let bc1 = 1.0 - b1.powi(state.t as i32);
    let bc2 = 1.0 - b2.powi(state.t as i32);
    let decay = 1.0 - lr * cfg.weight_decay;
    for (((p, g), m), v) in params
        .tensors
        .iter_mut()
        .zip(&grads.tensors)
        .zip(&mut state.m.tensors)
        .zip(&mut state.v.tensors)
    {
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = b1 * m.data[i] + (1.0 - b1) * gi;
            v.data[i] = b2 * v.data[i] + (1.0 - b2) * gi * gi;
            let mhat = m.data[i] / bc1;
            let vhat = v.data[i] / bc2;
            p.data[i] = p.data[i] * decay - lr * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Tensor;

    fn scalar(x: f64) -> ParamStore {
        ParamStore::new(vec![Tensor::filled("x", &[1], x)])
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = ParamStore::new(vec![Tensor::filled("w", &[3], 0.7)]);
        let g = p.zeros_like();
        let mut s = AdamWState::new(&p);
        let before = p.clone();
        optimizer_step(&mut p, &g, &mut s, 0.1, &TrainConfig::default()).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = scalar(0.0);
        let g = scalar(1.0);
        let mut s = AdamWState::new(&p);
        optimizer_step(&mut p, &g, &mut s, 0.1, &TrainConfig::default()).unwrap();
        // bias-corrected moments are exactly 1 on the first step
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.tensors[0].data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn decay_only_scales_params() {
        let mut p = scalar(2.0);
        let g = scalar(0.0);
        let mut s = AdamWState::new(&p);
        let cfg = TrainConfig { weight_decay: 0.01, ..Default::default() };
        optimizer_step(&mut p, &g, &mut s, 0.5, &cfg).unwrap();
        assert!((p.tensors[0].data[0] - 2.0 * (1.0 - 0.5 * 0.01)).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_finite_gradients() {
        let mut p = scalar(0.0);
        let g = scalar(f64::NAN);
        let mut s = AdamWState::new(&p);
        assert!(matches!(
            optimizer_step(&mut p, &g, &mut s, 0.1, &TrainConfig::default()),
            Err(Error::NonFiniteGradient(_))
        ));
    }
}
