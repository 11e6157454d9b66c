use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{MlpGrads, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    /// GAN defaults: first-moment decay 0.5.
    pub fn gan(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn standard(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::validation("Adam betas must lie in [0, 1)"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::validation("Adam eps must be > 0"));
        }
        Ok(())
    }
}

/// Bias-corrected Adam moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, tensor_sizes: &[usize]) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            t: 0,
            m: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![0.0; n]).collect(),
        })
    }

    pub fn for_params(config: AdamConfig, params: &MlpParams) -> Result<Self> {
        Self::new(config, &params.tensor_sizes())
    }

    /// One Adam step over matching parameter and gradient tensors.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension {
                context: "adam tensor count",
                expected: self.m.len(),
                got: params.len().min(grads.len()),
            });
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.m[k].len() || g.len() != self.m[k].len() {
                return Err(Error::Dimension {
                    context: "adam tensor size",
                    expected: self.m[k].len(),
                    got: p.len(),
                });
            }
        }
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powf(self.t as f64);
        let bc2 = 1.0 - beta2.powf(self.t as f64);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.m[k];
            let v = &mut self.v[k];
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                // zero-gradient entries are frozen even when momentum is non-zero
                if gi == 0.0 {
                    continue;
                }
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam step to every tensor of `params`.
pub fn adam_update(params: &mut MlpParams, grads: &MlpGrads, state: &mut AdamState) -> Result<()> {
    let g = grads.tensors();
    let mut p = params.tensors_mut();
    state.step(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut state = AdamState::new(AdamConfig::gan(0.1), &[1]).unwrap();
        let mut w = [1.0];
        state.step(&mut [&mut w[..]], &[&[2.0][..]]).unwrap();
        // m_hat = 2, v_hat = 4 at t = 1
        let expected = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((w[0] - expected).abs() < 1e-15);
        assert!((w[0] - 0.9).abs() < 1e-8);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_is_identity_from_fresh_state() {
        let mut state = AdamState::new(AdamConfig::standard(0.01), &[3]).unwrap();
        let mut w = [1.0, -2.0, 3.0];
        state.step(&mut [&mut w[..]], &[&[0.0, 0.0, 0.0][..]]).unwrap();
        assert_eq!(w, [1.0, -2.0, 3.0]);
        assert_eq!(state.t, 1);
    }

    #[test]
    fn zero_gradient_is_identity_for_warm_state() {
        let mut state = AdamState::new(AdamConfig::gan(0.01), &[2]).unwrap();
        let mut w = [0.3, -0.4];
        state.step(&mut [&mut w[..]], &[&[1.0, -2.0][..]]).unwrap();
        let before = w;
        state.step(&mut [&mut w[..]], &[&[0.0, 0.0][..]]).unwrap();
        assert_eq!(w, before);
    }

    #[test]
    fn two_steps_decrease_quadratic() {
        let mut state = AdamState::new(AdamConfig::standard(0.05), &[1]).unwrap();
        let mut w = [1.5];
        let f = |w: f64| w * w;
        let f0 = f(w[0]);
        for _ in 0..2 {
            let g = 2.0 * w[0];
            state.step(&mut [&mut w[..]], &[&[g][..]]).unwrap();
        }
        assert!(f(w[0]) < f0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(AdamState::new(AdamConfig { lr: 0.0, ..AdamConfig::gan(1.0) }, &[1]).is_err());
        assert!(AdamState::new(AdamConfig { beta1: 1.0, ..AdamConfig::gan(1.0) }, &[1]).is_err());
        assert!(AdamState::new(AdamConfig { eps: 0.0, ..AdamConfig::gan(1.0) }, &[1]).is_err());
    }
}
