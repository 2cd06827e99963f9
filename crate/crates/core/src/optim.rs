//! SGD with classic momentum and a per-epoch cosine learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    /// Learning rate for the feature extractor.
    pub lr_backbone: f64,
    /// Learning rate for the classifier and the mask generator.
    pub lr_classifier_and_mask: f64,
    pub total_epochs: usize,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr_backbone: 0.003,
            lr_classifier_and_mask: 0.01,
            total_epochs: 20,
            momentum: 0.9,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_backbone > 0.0 && self.lr_classifier_and_mask > 0.0) {
            return Err(Error::param("learning rates must be > 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }
}

/// `base_lr · ½(1 + cos(π · epoch / total_epochs))`, reaching 0 at the end.
pub fn cosine_lr(epoch: usize, cfg: &SgdConfig, base_lr: f64) -> Result<f64> {
    if epoch > cfg.total_epochs {
        return Err(Error::param(format!(
            "epoch {epoch} beyond schedule of {} epochs",
            cfg.total_epochs
        )));
    }
    if cfg.total_epochs == 0 {
        return Ok(base_lr);
    }
    let t = epoch as f64 / cfg.total_epochs as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
}

/// `v ← μ·v + g; p ← p − lr·v`, in place.
pub fn sgd_step(
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    momentum: f64,
    velocity: &mut [f64],
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::dim(
            "sgd_step",
            format!(
                "params {} grads {} velocity {}",
                params.len(),
                grads.len(),
                velocity.len()
            ),
        ));
    }
    for ((p, &g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

/// Momentum buffers for a fixed list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, sizes: impl IntoIterator<Item = usize>) -> Self {
        Self {
            momentum,
            velocity: sizes.into_iter().map(|n| vec![0.0; n]).collect(),
        }
    }

    /// Update parameter `index` with its own learning rate.
    pub fn step(&mut self, index: usize, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        let len = self.velocity.len();
        let v = self.velocity.get_mut(index).ok_or(Error::Index {
            what: "optimizer slot",
            index,
            len,
        })?;
        sgd_step(params, grads, lr, self.momentum, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(epochs: usize) -> SgdConfig {
        SgdConfig {
            total_epochs: epochs,
            ..SgdConfig::default()
        }
    }

    #[test]
    fn cosine_endpoints() {
        let c = cfg(20);
        assert_eq!(cosine_lr(0, &c, 0.01).unwrap(), 0.01);
        assert!(cosine_lr(20, &c, 0.01).unwrap().abs() < 1e-18);
        assert!((cosine_lr(10, &c, 0.01).unwrap() - 0.005).abs() < 1e-15);
        assert!(cosine_lr(21, &c, 0.01).is_err());
    }

    #[test]
    fn cosine_is_non_increasing() {
        let c = cfg(37);
        let lrs: Vec<f64> = (0..=37).map(|e| cosine_lr(e, &c, 0.003).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn plain_step() {
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[2.0], 0.1, 0.0, &mut v).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = [1.5, -2.0];
        let mut v = [0.0, 0.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1, 0.9, &mut v).unwrap();
        assert_eq!(p, [1.5, -2.0]);
    }

    #[test]
    fn momentum_two_steps_unrolled() {
        let (lr, mu) = (0.1, 0.9);
        let (g1, g2) = (2.0, -1.0);
        let mut p = [1.0];
        let mut v = [0.0];
        sgd_step(&mut p, &[g1], lr, mu, &mut v).unwrap();
        sgd_step(&mut p, &[g2], lr, mu, &mut v).unwrap();
        // v1 = g1, p1 = 1 - lr g1; v2 = mu g1 + g2, p2 = p1 - lr v2
        let v2: f64 = mu * g1 + g2;
        let expect = 1.0 - lr * g1 - lr * v2;
        assert!((p[0] - expect).abs() < 1e-15);
        assert!((v[0] - v2).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = [1.0, 2.0];
        let mut v = [0.0, 0.0];
        assert!(sgd_step(&mut p, &[1.0], 0.1, 0.0, &mut v).is_err());
    }

    #[test]
    fn invalid_config() {
        let mut c = SgdConfig::default();
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        c.momentum = 0.9;
        c.lr_backbone = 0.0;
        assert!(c.validate().is_err());
    }
}
