//! Mask generation: domain vector → encoder/decoder (with optional noise)
//! → soft `C × d` mask that multiplies the classifier weights.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::{gaussian, Rng};
use crate::tensor::Tensor;

use super::{aggregate_domain_info, BoundModel, MaskVariant, ModelConfig, NoiseMode};

/// Pass `I` through the encoder/decoder pair, injecting `N(0, variance)`
/// noise at the latent code according to `mode`.
///
/// Zero variance draws nothing from `rng` and yields the noise-free vector.
pub fn encode_decode(
    g: &mut Graph,
    model: &BoundModel,
    info: Var,
    rng: &mut Rng,
    variance: f64,
    mode: NoiseMode,
) -> Result<Var> {
    let noise = draw_latent_noise(rng, model.config.latent(), variance, mode)?;
    encode_decode_with(g, model, info, noise.as_ref(), mode)
}

/// Latent noise for one domain vector, or `None` when no noise applies
/// (zero variance or [`NoiseMode::None`]).
pub fn draw_latent_noise(
    rng: &mut Rng,
    latent: usize,
    variance: f64,
    mode: NoiseMode,
) -> Result<Option<Tensor>> {
    if !(variance >= 0.0) {
        return Err(Error::param(format!("noise variance must be >= 0, got {variance}")));
    }
    if variance == 0.0 || mode == NoiseMode::None {
        return Ok(None);
    }
    Ok(Some(gaussian(rng, &[1, latent], variance)?))
}

/// [`encode_decode`] with pre-drawn noise; `None` is the noise-free path.
pub fn encode_decode_with(
    g: &mut Graph,
    model: &BoundModel,
    info: Var,
    noise: Option<&Tensor>,
    mode: NoiseMode,
) -> Result<Var> {
    let z = model.encode(g, info)?;
    let latent = g.value(z).dims2()?.1;
    let input = match (mode, noise) {
        (NoiseMode::None, _) | (NoiseMode::Add, None) => z,
        (NoiseMode::Concat, None) => {
            let zeros = g.constant(Tensor::zeros(&[1, latent]))?;
            g.concat_cols(&[z, zeros])?
        }
        (NoiseMode::Concat, Some(n)) => {
            let n = g.constant(n.clone())?;
            g.concat_cols(&[z, n])?
        }
        (NoiseMode::Add, Some(n)) => {
            let n = g.constant(n.clone())?;
            g.add(z, n)?
        }
    };
    model.decode(g, input)
}

/// Mask nodes for one domain vector.
#[derive(Debug, Clone, Copy)]
pub struct BuiltMask {
    pub mask: Var,
    /// Matrix before the sigmoid (`None` for [`MaskVariant::Off`]).
    pub pre_sigmoid: Option<Var>,
    /// `G1(I)`, `1 × C`.
    pub v_cls: Var,
    /// `G2(I)`, `1 × d`.
    pub v_f: Var,
}

/// Soft mask from a `1 × d` domain vector.
pub fn build_mask(
    g: &mut Graph,
    model: &BoundModel,
    info: Var,
    variant: MaskVariant,
) -> Result<BuiltMask> {
    let (c, d) = (model.config.num_classes, model.config.feature_dim);
    let v_cls = model.g1.forward(g, info)?;
    let v_f = model.g2.forward(g, info)?;
    let (mask, pre_sigmoid) = match variant {
        MaskVariant::LowRank => {
            let col = g.transpose(v_cls)?;
            let pre = g.matmul(col, v_f)?;
            (g.sigmoid(pre)?, Some(pre))
        }
        MaskVariant::GeneralMap => {
            let map = model
                .general_map
                .ok_or_else(|| Error::Contract("general_map variant without its layer".into()))?;
            let flat = map.forward(g, info)?;
            let pre = g.reshape(flat, &[c, d])?;
            (g.sigmoid(pre)?, Some(pre))
        }
        MaskVariant::Off => (g.constant(Tensor::ones(&[c, d]))?, None),
    };
    Ok(BuiltMask {
        mask,
        pre_sigmoid,
        v_cls,
        v_f,
    })
}

/// `W ⊙ M`.
pub fn modulate(g: &mut Graph, w: Var, m: Var) -> Result<Var> {
    g.mul(w, m)
}

/// Nodes for both branches of the mask generator.
#[derive(Debug, Clone, Copy)]
pub struct MaskPairVars {
    pub info: Var,
    pub info_ss: Var,
    pub info_lrn: Var,
    pub ss: BuiltMask,
    pub lrn: BuiltMask,
}

/// Plain values of both masks and the intermediate vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPair {
    pub info: Tensor,
    pub info_ss: Tensor,
    pub info_lrn: Tensor,
    /// `G1(I_ss)`.
    pub v_cls: Tensor,
    /// `G2(I_ss)`.
    pub v_f: Tensor,
    pub mask_ss: Tensor,
    pub mask_lrn: Tensor,
    /// Pre-sigmoid pseudo-labeling mask.
    pub logits_ss: Option<Tensor>,
}

impl MaskPairVars {
    pub fn values(&self, g: &Graph) -> Result<MaskPair> {
        let flat = |v: Var| -> Result<Tensor> {
            let t = g.value(v).clone();
            let n = t.len();
            t.reshape(&[n])
        };
        Ok(MaskPair {
            info: flat(self.info)?,
            info_ss: flat(self.info_ss)?,
            info_lrn: flat(self.info_lrn)?,
            v_cls: flat(self.ss.v_cls)?,
            v_f: flat(self.ss.v_f)?,
            mask_ss: g.value(self.ss.mask).clone(),
            mask_lrn: g.value(self.lrn.mask).clone(),
            logits_ss: self.ss.pre_sigmoid.map(|v| g.value(v).clone()),
        })
    }
}

/// Domain vector from the unlabeled features, then the noise-free
/// pseudo-labeling mask and the noise-injected learning mask.
pub fn make_mask_pair(
    g: &mut Graph,
    model: &BoundModel,
    unlabeled_features: Var,
    rng: &mut Rng,
    cfg: &ModelConfig,
) -> Result<MaskPairVars> {
    let noise = draw_latent_noise(rng, cfg.latent(), cfg.epsilon_sq, cfg.noise_mode)?;
    make_mask_pair_with(g, model, unlabeled_features, noise.as_ref(), cfg)
}

/// [`make_mask_pair`] with the learning-branch noise supplied.
pub fn make_mask_pair_with(
    g: &mut Graph,
    model: &BoundModel,
    unlabeled_features: Var,
    noise: Option<&Tensor>,
    cfg: &ModelConfig,
) -> Result<MaskPairVars> {
    let info = aggregate_domain_info(g, unlabeled_features, cfg.aggregation)?;
    let info = if cfg.detach_domain_info {
        g.detach(info)?
    } else {
        info
    };
    let info_ss = encode_decode_with(g, model, info, None, cfg.noise_mode)?;
    let info_lrn = encode_decode_with(g, model, info, noise, cfg.noise_mode)?;
    let ss = build_mask(g, model, info_ss, cfg.mask_variant)?;
    let lrn = build_mask(g, model, info_lrn, cfg.mask_variant)?;
    Ok(MaskPairVars {
        info,
        info_ss,
        info_lrn,
        ss,
        lrn,
    })
}
