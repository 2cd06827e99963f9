use std::f64::consts::PI;

use crate::error::Result;
use crate::rng::Rng;

use super::{Domain, MultiDomainDataset, Sample, ShiftKind, ShiftSpec};

/// Per-domain transformation applied on top of the shared class clusters.
enum DomainShift {
    /// `x ↦ diag(scale) · R · x`, with `R` a product of plane rotations.
    Style {
        rotations: Vec<(usize, usize, f64)>,
        scale: Vec<f64>,
    },
    /// Offset added to the nuisance block.
    Background { offset: Vec<f64> },
    /// Student-t noise of the given scale on the signal block.
    Corruption { scale: f64 },
}

/// Coordinates `0..signal_dim` carry class information; the rest is nuisance.
fn signal_dim(spec: &ShiftSpec) -> usize {
    spec.input_dim.div_ceil(2)
}

fn draw_shift(spec: &ShiftSpec, rng: &mut Rng) -> DomainShift {
    let s = spec.shift_strength;
    let d = spec.input_dim;
    match spec.shift_kind {
        ShiftKind::Style => {
            let rotations = (0..d)
                .map(|_| {
                    let i = rng.index(d);
                    let mut j = rng.index(d - 1);
                    if j >= i {
                        j += 1;
                    }
                    (i, j, s * rng.uniform(-PI / 4.0, PI / 4.0))
                })
                .collect();
            let scale = (0..d).map(|_| (0.3 * s * rng.normal()).exp()).collect();
            DomainShift::Style { rotations, scale }
        }
        ShiftKind::Background => {
            let sig = signal_dim(spec);
            let offset = (0..d)
                .map(|j| if j < sig { 0.0 } else { 2.0 * s * rng.normal() })
                .collect();
            DomainShift::Background { offset }
        }
        ShiftKind::Corruption => DomainShift::Corruption {
            scale: s * rng.uniform(0.25, 1.0),
        },
    }
}

fn apply_shift(shift: &DomainShift, x: &mut [f64], sig: usize, rng: &mut Rng) {
    match shift {
        DomainShift::Style { rotations, scale } => {
            for &(i, j, theta) in rotations {
                let (c, s) = (theta.cos(), theta.sin());
                let (xi, xj) = (x[i], x[j]);
                x[i] = c * xi - s * xj;
                x[j] = s * xi + c * xj;
            }
            for (v, k) in x.iter_mut().zip(scale) {
                *v *= k;
            }
        }
        DomainShift::Background { offset } => {
            for (v, o) in x.iter_mut().zip(offset) {
                *v += o;
            }
        }
        DomainShift::Corruption { scale } => {
            if *scale > 0.0 {
                for v in &mut x[..sig] {
                    *v += scale * rng.student_t(3.0);
                }
            }
        }
    }
}

/// Build the benchmark described by `spec`.
///
/// Classes are unit-variance Gaussian clusters whose centers are shared by
/// all domains; each domain then applies its own shift. Domain order is
/// fixed and the last domain is the conventional target.
pub fn generate(spec: &ShiftSpec) -> Result<MultiDomainDataset> {
    spec.validate()?;
    let d = spec.input_dim;
    let sig = signal_dim(spec);
    let mut center_rng = Rng::stream(spec.seed, 0);
    let centers: Vec<Vec<f64>> = (0..spec.num_classes)
        .map(|_| {
            (0..d)
                .map(|j| {
                    if j < sig {
                        spec.class_separation * center_rng.normal()
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();

    let domains = (0..spec.num_domains)
        .map(|k| {
            let mut shift_rng = Rng::stream(spec.seed, 1 + k as u64);
            let shift = draw_shift(spec, &mut shift_rng);
            let mut rng = Rng::stream(spec.seed, 1000 + k as u64);
            let mut samples = Vec::new();
            for (c, center) in centers.iter().enumerate() {
                for _ in 0..spec.class_count(c) {
                    let mut x: Vec<f64> = center.iter().map(|m| m + rng.normal()).collect();
                    apply_shift(&shift, &mut x, sig, &mut rng);
                    samples.push(Sample { x, label: c });
                }
            }
            rng.shuffle(&mut samples);
            Domain {
                name: format!("{}-{k}", spec.shift_kind),
                samples,
            }
        })
        .collect();
    Ok(MultiDomainDataset {
        spec: spec.clone(),
        domains,
    })
}
