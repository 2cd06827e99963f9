//! Randomized property checks runnable outside the test harness.

use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::data::HiddenLabels;
use crate::error::Result;
use crate::gradcheck::{finite_diff_grad, max_relative_error};
use crate::model::{draw_latent_noise, ModelBundle, ModelConfig};
use crate::pipeline::{build_step_loss, pseudo_label, step_loss_value, PreparedDomain, PseudoLabelResult, TrainConfig};
use crate::rng::{gaussian, Rng};
use crate::tensor::Tensor;

use super::sweep::{mask_pair_for, pseudo_label_mask};
use super::{max_abs_minor, partition_features, pl_agreement, restricted_pseudo_label, verify_gradient_identity, Restriction};

/// Finite-difference comparison of one random step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepGradReport {
    /// Max relative error per component (backbone, classifier, encoder,
    /// decoder, g1, g2).
    pub components: Vec<(String, f64)>,
    /// Smallest |pre-activation| over all ReLUs at the base point.
    pub relu_margin: f64,
    pub accepted: usize,
}

impl StepGradReport {
    pub fn max_error(&self) -> f64 {
        self.components.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }
}

/// Small random model config: `D = 10`, `d = 8`, `C = 3`, latent 1 or 2.
pub fn small_config(rng: &mut Rng) -> ModelConfig {
    let mut mc = ModelConfig::new(10, 3);
    mc.feature_dim = 8;
    mc.hidden = vec![12];
    mc.latent_dim = Some(1 + rng.index(2));
    // finite differences see the path through I, so the backward pass must too
    mc.detach_domain_info = false;
    mc
}

fn random_prepared(mc: &ModelConfig, domains: usize, batch: usize, rng: &mut Rng) -> Result<Vec<PreparedDomain>> {
    (0..domains)
        .map(|k| {
            let draw = |rng: &mut Rng| gaussian(rng, &[batch, mc.input_dim], 1.0);
            let raw = draw(rng)?;
            Ok(PreparedDomain {
                domain_slot: k,
                domain_id: k,
                labels: (0..batch).map(|_| rng.index(mc.num_classes)).collect(),
                labeled_weak: Some(draw(rng)?),
                unlabeled_weak: draw(rng)?,
                unlabeled_strong: draw(rng)?,
                unlabeled_raw: raw,
                hidden: HiddenLabels::new((0..batch).map(|_| rng.index(mc.num_classes)).collect()),
                noise: draw_latent_noise(rng, mc.latent(), mc.epsilon_sq, mc.noise_mode)?,
            })
        })
        .collect()
}

/// Central-difference step for whole training steps. Many entries of the
/// step gradient are around 1e-7, where the roundoff of a smaller step would
/// dominate the relative error.
pub const STEP_FD_EPS: f64 = 1e-4;

/// Backward vs. central differences of `L_l + L_u` on a random two-domain
/// step with batch 4. Pseudo-labels are frozen at the base point, and a
/// low threshold makes every unlabeled point contribute.
pub fn check_step_gradients(seed: u64) -> Result<StepGradReport> {
    let mut rng = Rng::new(seed);
    let mc = small_config(&mut rng);
    let mut bundle = ModelBundle::init(&mc, 2, &mut rng)?;
    // nonzero biases keep dead units from feeding exact zeros into the next ReLU
    for p in bundle.params_mut() {
        for v in p.data_mut() {
            *v += rng.uniform(-0.2, 0.2);
        }
    }
    let prepared = random_prepared(&mc, 2, 4, &mut rng)?;
    let cfg = TrainConfig { tau: 0.2, ..TrainConfig::default() };

    let mut g = Graph::new();
    let model = bundle.bind(&mut g, true)?;
    let vars = build_step_loss(&mut g, &model, &prepared, &cfg, None)?;
    let frozen: Vec<PseudoLabelResult> = vars.domains.iter().map(|d| d.pl.clone()).collect();
    let total = vars.total.expect("labeled loss is always present");
    g.backward(total)?;
    let back = model.grads(&g);
    let relu_margin = g.relu_margin();

    let values: Vec<Tensor> = bundle.params().into_iter().map(|(_, _, t)| t.clone()).collect();
    let fd = finite_diff_grad(
        |p| step_loss_value(&bundle.with_params(p)?, &prepared, &cfg, Some(&frozen)),
        &values,
        STEP_FD_EPS,
    )?;
    let mut components: Vec<(String, f64)> = Vec::new();
    for ((name, _, _), (b, f)) in bundle.params().into_iter().zip(back.iter().zip(&fd)) {
        let comp = name.split('.').next().unwrap_or(&name).to_string();
        let err = max_relative_error(b, f.data());
        match components.iter_mut().find(|(c, _)| *c == comp) {
            Some((_, e)) => *e = e.max(err),
            None => components.push((comp, err)),
        }
    }
    Ok(StepGradReport {
        components,
        relu_margin,
        accepted: frozen.iter().map(|p| p.accepted.len()).sum(),
    })
}

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.into(), passed, detail }
}

/// Instances closer than this to a ReLU kink are redrawn.
pub const MIN_RELU_MARGIN: f64 = 1e-3;

/// Step gradients on `n` kink-free instances.
pub fn gradient_suite(n: usize, seed: u64) -> Result<(f64, usize)> {
    let (mut worst, mut redrawn, mut done) = (0.0f64, 0usize, 0usize);
    let mut s = seed;
    while done < n {
        let r = check_step_gradients(s)?;
        s += 1;
        if r.relu_margin < MIN_RELU_MARGIN {
            redrawn += 1;
            continue;
        }
        worst = worst.max(r.max_error());
        done += 1;
    }
    Ok((worst, redrawn))
}

/// Worst backward-vs-closed-form and backward-vs-FD discrepancies over `n`
/// random `C = 3`, `d = 8` instances.
pub fn identity_suite(n: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = Rng::new(seed);
    let (mut closed, mut fd) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let w = gaussian(&mut rng, &[3, 8], 1.0)?;
        let mut m = Tensor::zeros(&[3, 8]);
        for v in m.data_mut() {
            *v = rng.uniform(0.0, 1.0);
        }
        let f: Vec<f64> = (0..8).map(|_| rng.normal()).collect();
        let r = verify_gradient_identity(&w, &m, &f, rng.index(3))?;
        closed = closed.max(r.backward_vs_closed);
        fd = fd.max(r.backward_vs_fd.max(r.closed_vs_fd));
    }
    Ok((closed, fd))
}

/// Largest 2×2 minor of the pre-sigmoid mask over `n` random models and
/// batches.
pub fn low_rank_suite(n: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut worst = 0.0f64;
    for _ in 0..n {
        let mut mc = ModelConfig::new(6, 2 + rng.index(4));
        mc.feature_dim = 8 + 8 * rng.index(2);
        mc.hidden = vec![10];
        let bundle = ModelBundle::init(&mc, 1, &mut rng)?;
        let x = gaussian(&mut rng, &[5, 6], 1.0)?;
        let pair = mask_pair_for(&bundle, &x)?;
        let pre = pair.logits_ss.expect("low-rank masks expose their pre-sigmoid values");
        worst = worst.max(max_abs_minor(&pre)?);
    }
    Ok(worst)
}

/// With `G1` zeroed the mask is 0.5 everywhere; count batches whose masked
/// argmax differs from the unmasked one, and batches with identical
/// confidences.
pub fn degenerate_mask_suite(n: usize, seed: u64) -> Result<(usize, usize)> {
    let mut rng = Rng::new(seed);
    let (mut argmax_diff, mut conf_same) = (0, 0);
    for _ in 0..n {
        let mut mc = ModelConfig::new(6, 4);
        mc.feature_dim = 16;
        mc.hidden = vec![12];
        let mut bundle = ModelBundle::init(&mc, 1, &mut rng)?;
        bundle.g1.zero_();
        let x = gaussian(&mut rng, &[8, 6], 1.0)?;
        let mask = pseudo_label_mask(&bundle, &x)?;
        if mask.data().iter().any(|&v| v != 0.5) {
            argmax_diff += 1;
            continue;
        }
        // tau small enough to accept every row, so the labels are the argmax
        let tau = 1e-3;
        let masked = pseudo_label(&bundle, 0, &x, Some(&mask), tau, None)?;
        let plain = pseudo_label(&bundle, 0, &x, None, tau, None)?;
        if masked.accepted != plain.accepted || masked.labels != plain.labels {
            argmax_diff += 1;
        }
        if masked.confidences == plain.confidences {
            conf_same += 1;
        }
    }
    Ok((argmax_diff, conf_same))
}

/// Library-level invariants as a pass/fail table.
pub fn run_verify_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let (grad, redrawn) = gradient_suite(100, seed)?;
    out.push(check(
        "step gradients vs finite differences",
        grad < 1e-4,
        format!("max relative error {grad:.3e} over 100 instances ({redrawn} redrawn near a kink)"),
    ));

    let (closed, fd) = identity_suite(100, seed)?;
    out.push(check(
        "masked gradient identity",
        closed < 1e-9 && fd < 1e-5,
        format!("closed form {closed:.3e}, finite differences {fd:.3e}"),
    ));

    let minor = low_rank_suite(1000, seed)?;
    out.push(check("low-rank mask minors", minor < 1e-9, format!("max |minor| {minor:.3e}")));

    let (diff, same) = degenerate_mask_suite(50, seed)?;
    out.push(check(
        "uniform mask keeps argmax",
        diff == 0 && same == 0,
        format!("{diff} batches changed labels, {same} kept confidences"),
    ));

    let mut rng = Rng::new(seed);
    let mut partition_ok = true;
    for _ in 0..200 {
        let d = 1 + rng.index(16);
        let v: Vec<f64> = (0..d).map(|_| if rng.bernoulli(0.1) { 0.0 } else { rng.normal() }).collect();
        let p = partition_features(&v);
        let mut all: Vec<usize> = p.j_plus.iter().chain(&p.j_minus).copied().collect();
        all.sort_unstable();
        partition_ok &= all == (0..d).collect::<Vec<_>>() && p.j_plus.len() + p.j_minus.len() == d;
    }
    out.push(check("feature partition is exhaustive", partition_ok, "200 random v_f".into()));

    let mut mc = ModelConfig::new(6, 3);
    mc.feature_dim = 8;
    mc.hidden = vec![10];
    let bundle = ModelBundle::init(&mc, 1, &mut rng)?;
    let before = bundle.checksum();
    let x = gaussian(&mut rng, &[16, 6], 1.0)?;
    let pair = mask_pair_for(&bundle, &x)?;
    let full = pseudo_label(&bundle, 0, &x, Some(&pair.mask_ss), 0.4, None)?;
    let res = restricted_pseudo_label(&bundle, 0, &x, &pair, 0.4, None, Restriction::BySign)?;
    let sym = pl_agreement(&full, &res) == pl_agreement(&res, &full) && pl_agreement(&full, &full) == 1.0;
    out.push(check("agreement is symmetric", sym, String::new()));
    out.push(check(
        "diagnostics leave parameters unchanged",
        bundle.checksum() == before,
        format!("checksum {before:016x}"),
    ));
    Ok(out)
}
