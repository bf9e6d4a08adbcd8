//! Adam with bias correction, one moment pair per named tensor.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdamState {
    /// Number of completed steps.
    pub t: u64,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl AdamState {
    pub fn new() -> Self {
        Self::default()
    }

    /// One update. Every gradient name must match a parameter name and
    /// length; parameters without a gradient are left untouched and their
    /// moments do not decay.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        params: Vec<(&'static str, &mut [f64])>,
        grads: &[(&'static str, &[f64])],
    ) -> Result<()> {
        let mut params: BTreeMap<&str, &mut [f64]> = params.into_iter().collect();
        for (name, g) in grads {
            let p = params.get(name).ok_or_else(|| {
                Error::invariant(format!("gradient for unknown parameter {name}"))
            })?;
            if p.len() != g.len() {
                return Err(Error::LengthMismatch {
                    expected: p.len(),
                    actual: g.len(),
                });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - cfg.beta1.powi(t);
        let c2 = 1.0 - cfg.beta2.powi(t);
        for (name, g) in grads {
            let p = params.get_mut(name).expect("checked above");
            let m = self
                .m
                .entry((*name).to_owned())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v
                .entry((*name).to_owned())
                .or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}
