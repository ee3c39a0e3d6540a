//! Adam with bias correction and per-group learning rates.

use crate::error::{Error, Result};
use crate::params::ParamSet;

#[derive(Debug, Clone)]
pub struct Adam {
    /// Learning rate for each parameter group, indexed by `Param::group`.
    pub lrs: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lrs: Vec<f64>) -> Self {
        Self {
            lrs,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// Applies one update to every parameter and clears the gradients.
    ///
    /// A non-finite gradient aborts before anything is modified.
    pub fn step(&self, params: &mut ParamSet) -> Result<()> {
        for p in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
            if p.group >= self.lrs.len() {
                return Err(Error::Invalid(format!(
                    "parameter {} is in group {} but only {} learning rates were given",
                    p.name,
                    p.group,
                    self.lrs.len()
                )));
            }
        }
        let t = params.bump_step() as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        for p in params.iter_mut() {
            let lr = self.lrs[p.group];
            let n = p.value.len();
            let (value, grad, m, v) = (
                p.value.data_mut(),
                p.grad.data_mut(),
                p.m.data_mut(),
                p.v.data_mut(),
            );
            for k in 0..n {
                let g = grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                value[k] -= lr * m_hat / (v_hat.sqrt() + eps);
                grad[k] = 0.0;
            }
        }
        Ok(())
    }
}
