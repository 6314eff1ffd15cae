//! Adam with bias-corrected moment estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{MlpParams, NnError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("non-finite gradient entry at flat index {0}")]
    NonFiniteGradient(usize),
    #[error("invalid Adam hyperparameter: {0}")]
    InvalidHyperparameter(&'static str),
    #[error(transparent)]
    Shape(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(OptimError::InvalidHyperparameter("lr must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(OptimError::InvalidHyperparameter("beta1 must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(OptimError::InvalidHyperparameter("beta2 must be in [0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(OptimError::InvalidHyperparameter("eps must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: MlpParams,
    pub v: MlpParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: MlpParams::zeros_like(params),
            v: MlpParams::zeros_like(params),
            t: 0,
        }
    }
}

/// One Adam update of `params` in place. A rejected step leaves params and state untouched.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &MlpParams,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<(), OptimError> {
    params.same_shape(grads)?;
    params.same_shape(&state.m)?;
    if let Some(i) = grads.as_slice().iter().position(|g| !g.is_finite()) {
        return Err(OptimError::NonFiniteGradient(i));
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (cfg.beta1, cfg.beta2);

    let theta = params.as_mut_slice();
    let m = state.m.as_mut_slice();
    let v = state.v.as_mut_slice();
    for (((p, &g), mi), vi) in theta.iter_mut().zip(grads.as_slice()).zip(m).zip(v) {
        *mi = b1 * *mi + (1.0 - b1) * g;
        *vi = b2 * *vi + (1.0 - b2) * g * g;
        let m_hat = *mi / bias1;
        let v_hat = *vi / bias2;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_like() -> MlpParams {
        MlpParams::zeros(1, 1).unwrap()
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = crate::nn::xavier_init(1);
        let before = p.clone();
        let g = MlpParams::zeros_like(&p);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_with_unit_gradient() {
        let mut p = scalar_like();
        let mut g = MlpParams::zeros_like(&p);
        g.fill(1.0);
        let mut st = AdamState::new(&p);
        adam_step(&mut p, &g, &mut st, &AdamConfig::default()).unwrap();
        for &x in p.as_slice() {
            assert!((x - (-0.000_999_999_99)).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_side_effects() {
        let mut p = scalar_like();
        let mut g = MlpParams::zeros_like(&p);
        g.as_mut_slice()[3] = f64::INFINITY;
        let mut st = AdamState::new(&p);
        let before = p.clone();
        assert_eq!(
            adam_step(&mut p, &g, &mut st, &AdamConfig::default()),
            Err(OptimError::NonFiniteGradient(3))
        );
        assert_eq!(st.t, 0);
        assert_eq!(p, before);
    }

    #[test]
    fn validates_hyperparameters() {
        let bad = AdamConfig {
            beta2: 1.0,
            ..AdamConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(AdamConfig { lr: 0.0, ..AdamConfig::default() }.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
