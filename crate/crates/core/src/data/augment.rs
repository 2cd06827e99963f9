use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::TrainingView;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Weak noise scale, in units of the per-coordinate training std.
    pub weak_noise: f64,
    pub strong_noise: f64,
    /// Probability of zeroing each coordinate in the strong view.
    pub strong_dropout: f64,
    pub strong_scale_lo: f64,
    pub strong_scale_hi: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            weak_noise: 0.05,
            strong_noise: 0.2,
            strong_dropout: 0.3,
            strong_scale_lo: 0.8,
            strong_scale_hi: 1.2,
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.weak_noise >= 0.0 && self.strong_noise >= 0.0) {
            return Err(Error::param("augmentation noise scales must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.strong_dropout) {
            return Err(Error::param("strong_dropout must lie in [0, 1]"));
        }
        if !(self.strong_scale_lo <= self.strong_scale_hi) {
            return Err(Error::param("strong scale range is empty"));
        }
        Ok(())
    }
}

/// Weak and strong vector-space augmentations calibrated to the training
/// inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Augmenter {
    pub params: AugmentParams,
    /// Per-coordinate standard deviation of the training inputs.
    pub std: Vec<f64>,
}

impl Augmenter {
    pub fn new(params: AugmentParams, std: Vec<f64>) -> Result<Self> {
        params.validate()?;
        Ok(Self { params, std })
    }

    /// Fit the coordinate scales on every source point of the view.
    pub fn fit(view: &TrainingView, params: AugmentParams) -> Result<Self> {
        let d = view.input_dim;
        let mut n = 0usize;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for x in view.sources.iter().flat_map(|s| &s.unlabeled) {
            n += 1;
            for j in 0..d {
                let delta = x[j] - mean[j];
                mean[j] += delta / n as f64;
                m2[j] += delta * (x[j] - mean[j]);
            }
        }
        if n == 0 {
            return Err(Error::EmptyBatch("augmenter fit"));
        }
        Self::new(params, m2.iter().map(|v| (v / n as f64).sqrt()).collect())
    }

    pub fn weak(&self, x: &[f64], rng: &mut Rng) -> Vec<f64> {
        let k = self.params.weak_noise;
        x.iter()
            .zip(&self.std)
            .map(|(v, s)| v + k * s * rng.normal())
            .collect()
    }

    pub fn strong(&self, x: &[f64], rng: &mut Rng) -> Vec<f64> {
        let p = &self.params;
        let mut out: Vec<f64> = x
            .iter()
            .zip(&self.std)
            .map(|(v, s)| v + p.strong_noise * s * rng.normal())
            .collect();
        for v in &mut out {
            if rng.bernoulli(p.strong_dropout) {
                *v = 0.0;
            }
        }
        let scale = if p.strong_scale_lo < p.strong_scale_hi {
            rng.uniform(p.strong_scale_lo, p.strong_scale_hi)
        } else {
            p.strong_scale_lo
        };
        out.iter_mut().for_each(|v| *v *= scale);
        out
    }

    pub fn weak_rows<'a>(&self, rows: impl IntoIterator<Item = &'a Vec<f64>>, rng: &mut Rng) -> Vec<Vec<f64>> {
        rows.into_iter().map(|x| self.weak(x, rng)).collect()
    }

    pub fn strong_rows<'a>(&self, rows: impl IntoIterator<Item = &'a Vec<f64>>, rng: &mut Rng) -> Vec<Vec<f64>> {
        rows.into_iter().map(|x| self.strong(x, rng)).collect()
    }
}
