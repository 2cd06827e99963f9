//! Learned components: feature extractor, domain-shared classifier and the
//! mask generator (encoder, decoder, two heads), plus mask construction.

mod aggregate;
mod checkpoint;
mod mask;

pub use aggregate::{aggregate_domain_info, aggregate_values, symmetric_eigen, Eigen};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use mask::{
    build_mask, draw_latent_noise, encode_decode, encode_decode_with, make_mask_pair,
    make_mask_pair_with, modulate, BuiltMask, MaskPair, MaskPairVars,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Decoder sees `[E(I); noise]`.
    Concat,
    /// Decoder sees `E(I) + noise`.
    Add,
    /// Decoder sees `E(I)`; the variance is ignored.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Mean,
    PrincipalEig,
    MeanEig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskVariant {
    /// `σ(G1(I) × G2(I))`.
    LowRank,
    /// `σ(reshape(A·I + b))` with a single affine map `d → C·d`.
    GeneralMap,
    /// All-ones mask.
    Off,
}

macro_rules! keyword_enum {
    ($ty:ty { $($variant:ident => $name:literal),+ $(,)? }) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $(Self::$variant => $name),+ };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().replace('-', "_").as_str() {
                    $($name => Ok(Self::$variant),)+
                    other => Err(Error::param(format!(
                        "unknown {} `{other}`", stringify!($ty)
                    ))),
                }
            }
        }
    };
}
pub(crate) use keyword_enum;

keyword_enum!(NoiseMode { Concat => "concat", Add => "add", None => "none" });
keyword_enum!(Aggregation { Mean => "mean", PrincipalEig => "principal_eig", MeanEig => "mean_eig" });
keyword_enum!(MaskVariant { LowRank => "low_rank", GeneralMap => "general_map", Off => "off" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    /// Encoder output width; `None` means `feature_dim / 8`.
    pub latent_dim: Option<usize>,
    pub hidden: Vec<usize>,
    pub epsilon_sq: f64,
    pub noise_mode: NoiseMode,
    pub aggregation: Aggregation,
    pub detach_domain_info: bool,
    pub mask_variant: MaskVariant,
    pub separate_classifiers: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            feature_dim: 32,
            num_classes,
            latent_dim: None,
            hidden: vec![64, 64],
            epsilon_sq: 1.0,
            noise_mode: NoiseMode::Concat,
            aggregation: Aggregation::Mean,
            detach_domain_info: true,
            mask_variant: MaskVariant::LowRank,
            separate_classifiers: false,
        }
    }

    pub fn latent(&self) -> usize {
        self.latent_dim.unwrap_or(self.feature_dim / 8)
    }

    /// Widths of the three encoder layers: halve per layer, never below `l`.
    pub fn encoder_widths(&self) -> [usize; 3] {
        let (d, l) = (self.feature_dim, self.latent());
        [(d / 2).max(l), (d / 4).max(l), l]
    }

    pub fn decoder_input(&self) -> usize {
        match self.noise_mode {
            NoiseMode::Concat => 2 * self.latent(),
            NoiseMode::Add | NoiseMode::None => self.latent(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 || self.feature_dim == 0 {
            return Err(Error::param("input_dim, feature_dim and num_classes must be positive"));
        }
        if self.latent_dim.is_none() && self.feature_dim % 8 != 0 {
            return Err(Error::param(format!(
                "feature_dim {} must be divisible by 8 for the default latent width",
                self.feature_dim
            )));
        }
        if self.latent() == 0 {
            return Err(Error::param("latent_dim must be >= 1"));
        }
        if self.feature_dim < 4 {
            return Err(Error::param("feature_dim must be >= 4"));
        }
        if !(self.epsilon_sq >= 0.0) {
            return Err(Error::param(format!("epsilon_sq must be >= 0, got {}", self.epsilon_sq)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::param("hidden widths must be positive"));
        }
        Ok(())
    }
}

/// Which learning rate a parameter trains with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Head,
}

/// Affine layer `x·W + b` with `W` stored input-major (`in × out`).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    /// Uniform in `±1/√fan_in`, zero bias.
    pub fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut weight = Tensor::zeros(&[fan_in, fan_out]);
        for w in weight.data_mut() {
            *w = rng.uniform(-bound, bound);
        }
        Self {
            weight,
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[1, fan_out]),
        }
    }

    pub fn zero_(&mut self) {
        self.weight.data_mut().fill(0.0);
        self.bias.data_mut().fill(0.0);
    }

    pub fn fan_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn fan_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Stack of affine layers, each followed by a ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn init(widths: &[usize], rng: &mut Rng) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Linear::init(w[0], w[1], rng)).collect(),
        }
    }

    pub fn zeros(widths: &[usize]) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Linear::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn last_mut(&mut self) -> &mut Linear {
        self.layers.last_mut().expect("mlp has at least one layer")
    }
}

/// All six learned components.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    /// Feature extractor `f: R^D → R^d`.
    pub backbone: Mlp,
    /// Domain-shared classifier(s), each `C × d`. One per source domain
    /// when `separate_classifiers` is set.
    pub classifiers: Vec<Tensor>,
    pub encoder: Mlp,
    pub decoder: Mlp,
    /// `G1: R^d → R^C`.
    pub g1: Linear,
    /// `G2: R^d → R^d`.
    pub g2: Linear,
    /// Only present for [`MaskVariant::GeneralMap`].
    pub general_map: Option<Linear>,
}

impl ModelBundle {
    fn backbone_widths(cfg: &ModelConfig) -> Vec<usize> {
        let mut w = vec![cfg.input_dim];
        w.extend(&cfg.hidden);
        w.push(cfg.feature_dim);
        w
    }

    fn classifier_count(cfg: &ModelConfig, num_domains: usize) -> usize {
        if cfg.separate_classifiers {
            num_domains.max(1)
        } else {
            1
        }
    }

    /// Seeded initialization. Components are drawn in a fixed order
    /// (backbone, classifiers, encoder, decoder, G1, G2, general map) so the
    /// backbone and classifier do not depend on the mask settings.
    pub fn init(cfg: &ModelConfig, num_domains: usize, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let (d, c) = (cfg.feature_dim, cfg.num_classes);
        let backbone = Mlp::init(&Self::backbone_widths(cfg), rng);
        let bound = 1.0 / (d as f64).sqrt();
        let classifiers = (0..Self::classifier_count(cfg, num_domains))
            .map(|_| {
                let mut w = Tensor::zeros(&[c, d]);
                for v in w.data_mut() {
                    *v = rng.uniform(-bound, bound);
                }
                w
            })
            .collect();
        let [e1, e2, e3] = cfg.encoder_widths();
        let encoder = Mlp::init(&[d, e1, e2, e3], rng);
        let decoder = Mlp::init(&[cfg.decoder_input(), d / 2, d], rng);
        let g1 = Linear::init(d, c, rng);
        let g2 = Linear::init(d, d, rng);
        let general_map =
            (cfg.mask_variant == MaskVariant::GeneralMap).then(|| Linear::init(d, c * d, rng));
        Ok(Self {
            config: cfg.clone(),
            backbone,
            classifiers,
            encoder,
            decoder,
            g1,
            g2,
            general_map,
        })
    }

    /// Same layout as [`ModelBundle::init`], all parameters zero.
    pub fn zeros(cfg: &ModelConfig, num_domains: usize) -> Result<Self> {
        cfg.validate()?;
        let (d, c) = (cfg.feature_dim, cfg.num_classes);
        let [e1, e2, e3] = cfg.encoder_widths();
        Ok(Self {
            config: cfg.clone(),
            backbone: Mlp::zeros(&Self::backbone_widths(cfg)),
            classifiers: (0..Self::classifier_count(cfg, num_domains))
                .map(|_| Tensor::zeros(&[c, d]))
                .collect(),
            encoder: Mlp::zeros(&[d, e1, e2, e3]),
            decoder: Mlp::zeros(&[cfg.decoder_input(), d / 2, d]),
            g1: Linear::zeros(d, c),
            g2: Linear::zeros(d, d),
            general_map: (cfg.mask_variant == MaskVariant::GeneralMap)
                .then(|| Linear::zeros(d, c * d)),
        })
    }

    /// Visit every parameter in canonical order with its name and group.
    pub fn visit_params<'a>(&'a self, mut f: impl FnMut(String, ParamGroup, &'a Tensor)) {
        use ParamGroup::*;
        for (i, l) in self.backbone.layers.iter().enumerate() {
            f(format!("backbone.{i}.weight"), Backbone, &l.weight);
            f(format!("backbone.{i}.bias"), Backbone, &l.bias);
        }
        for (i, w) in self.classifiers.iter().enumerate() {
            f(format!("classifier.{i}"), Head, w);
        }
        for (name, mlp) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (i, l) in mlp.layers.iter().enumerate() {
                f(format!("{name}.{i}.weight"), Head, &l.weight);
                f(format!("{name}.{i}.bias"), Head, &l.bias);
            }
        }
        f("g1.weight".into(), Head, &self.g1.weight);
        f("g1.bias".into(), Head, &self.g1.bias);
        f("g2.weight".into(), Head, &self.g2.weight);
        f("g2.bias".into(), Head, &self.g2.bias);
        if let Some(m) = &self.general_map {
            f("general_map.weight".into(), Head, &m.weight);
            f("general_map.bias".into(), Head, &m.bias);
        }
    }

    /// Mutable parameters in the same order as [`ModelBundle::visit_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.backbone.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.extend(self.classifiers.iter_mut());
        for l in self.encoder.layers.iter_mut().chain(self.decoder.layers.iter_mut()) {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.g1.weight);
        out.push(&mut self.g1.bias);
        out.push(&mut self.g2.weight);
        out.push(&mut self.g2.bias);
        if let Some(m) = &mut self.general_map {
            out.push(&mut m.weight);
            out.push(&mut m.bias);
        }
        out
    }

    /// Copy of `self` with parameter values taken from `values` (canonical
    /// order).
    pub fn with_params(&self, values: &[Tensor]) -> Result<ModelBundle> {
        let mut out = self.clone();
        let mut slots = out.params_mut();
        if slots.len() != values.len() {
            return Err(Error::dim(
                "with_params",
                format!("{} tensors for {} parameters", values.len(), slots.len()),
            ));
        }
        for (slot, v) in slots.iter_mut().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::dim(
                    "with_params",
                    format!("shape {:?} for parameter of shape {:?}", v.shape(), slot.shape()),
                ));
            }
            **slot = v.clone();
        }
        Ok(out)
    }

    pub fn params(&self) -> Vec<(String, ParamGroup, &Tensor)> {
        let mut out = Vec::new();
        self.visit_params(|n, g, t| out.push((n, g, t)));
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.params().iter().map(|(_, _, t)| t.len()).sum()
    }

    /// Order-sensitive checksum over all parameter bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        self.visit_params(|_, _, t| {
            for v in t.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        });
        h
    }

    /// Insert every parameter into `g`. With `trainable = false` they enter
    /// as constants.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Result<BoundModel> {
        let mut leaves = Vec::new();
        let mut put = |g: &mut Graph, t: &Tensor| -> Result<Var> {
            let v = g.leaf(t.clone().with_grad(trainable))?;
            leaves.push(v);
            Ok(v)
        };
        let bind_mlp = |g: &mut Graph, m: &Mlp, put: &mut dyn FnMut(&mut Graph, &Tensor) -> Result<Var>| {
            m.layers
                .iter()
                .map(|l| Ok(BoundLinear {
                    weight: put(g, &l.weight)?,
                    bias: put(g, &l.bias)?,
                }))
                .collect::<Result<Vec<_>>>()
        };
        let backbone = bind_mlp(g, &self.backbone, &mut put)?;
        let classifiers = self
            .classifiers
            .iter()
            .map(|w| put(g, w))
            .collect::<Result<Vec<_>>>()?;
        let encoder = bind_mlp(g, &self.encoder, &mut put)?;
        let decoder = bind_mlp(g, &self.decoder, &mut put)?;
        let g1 = BoundLinear {
            weight: put(g, &self.g1.weight)?,
            bias: put(g, &self.g1.bias)?,
        };
        let g2 = BoundLinear {
            weight: put(g, &self.g2.weight)?,
            bias: put(g, &self.g2.bias)?,
        };
        let general_map = match &self.general_map {
            Some(m) => Some(BoundLinear {
                weight: put(g, &m.weight)?,
                bias: put(g, &m.bias)?,
            }),
            None => None,
        };
        Ok(BoundModel {
            config: self.config.clone(),
            backbone,
            classifiers,
            encoder,
            decoder,
            g1,
            g2,
            general_map,
            leaves,
        })
    }

    /// Features for an `n × D` batch without recording gradients.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let layers = bind_layers(&mut g, &self.backbone)?;
        let xv = g.constant(x.clone())?;
        let f = mlp_forward(&mut g, &layers, xv, "feature extractor")?;
        Ok(g.value(f).clone())
    }

    /// Classifier used at inference: the shared `W`, or the mean of the
    /// per-domain classifiers when they are separate.
    pub fn inference_classifier(&self) -> Tensor {
        if self.classifiers.len() == 1 {
            return self.classifiers[0].clone();
        }
        let mut w = Tensor::zeros(self.classifiers[0].shape());
        let k = self.classifiers.len() as f64;
        for c in &self.classifiers {
            for (o, v) in w.data_mut().iter_mut().zip(c.data()) {
                *o += v;
            }
        }
        w.data_mut().iter_mut().for_each(|v| *v /= k);
        w
    }

    /// Classifier used for domain `k` during training.
    pub fn classifier_for(&self, domain_slot: usize) -> &Tensor {
        if self.classifiers.len() == 1 {
            &self.classifiers[0]
        } else {
            &self.classifiers[domain_slot]
        }
    }
}

fn bind_layers(g: &mut Graph, m: &Mlp) -> Result<Vec<BoundLinear>> {
    m.layers
        .iter()
        .map(|l| {
            Ok(BoundLinear {
                weight: g.constant(l.weight.clone())?,
                bias: g.constant(l.bias.clone())?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.matmul(x, self.weight)?;
        g.add_row(h, self.bias)
    }
}

fn mlp_forward(g: &mut Graph, layers: &[BoundLinear], x: Var, what: &'static str) -> Result<Var> {
    let want = g.value(layers[0].weight).shape()[0];
    let got = g.value(x).dims2()?.1;
    if want != got {
        return Err(Error::dim(what, format!("expected input width {want}, got {got}")));
    }
    let mut h = x;
    for l in layers {
        let z = l.forward(g, h)?;
        h = g.relu(z)?;
    }
    Ok(h)
}

/// A [`ModelBundle`] whose parameters live in a [`Graph`].
#[derive(Debug, Clone)]
pub struct BoundModel {
    pub config: ModelConfig,
    pub backbone: Vec<BoundLinear>,
    pub classifiers: Vec<Var>,
    pub encoder: Vec<BoundLinear>,
    pub decoder: Vec<BoundLinear>,
    pub g1: BoundLinear,
    pub g2: BoundLinear,
    pub general_map: Option<BoundLinear>,
    /// Parameter nodes in [`ModelBundle::visit_params`] order.
    pub leaves: Vec<Var>,
}

impl BoundModel {
    /// `f(x)` for an `n × D` batch.
    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        mlp_forward(g, &self.backbone, x, "feature extractor")
    }

    pub fn encode(&self, g: &mut Graph, i: Var) -> Result<Var> {
        mlp_forward(g, &self.encoder, i, "encoder")
    }

    pub fn decode(&self, g: &mut Graph, z: Var) -> Result<Var> {
        mlp_forward(g, &self.decoder, z, "decoder")
    }

    pub fn classifier_for(&self, domain_slot: usize) -> Var {
        if self.classifiers.len() == 1 {
            self.classifiers[0]
        } else {
            self.classifiers[domain_slot]
        }
    }

    /// Logits `F · Wᵀ` for `n × d` features and a `C × d` classifier.
    pub fn logits(&self, g: &mut Graph, features: Var, classifier: Var) -> Result<Var> {
        let wt = g.transpose(classifier)?;
        g.matmul(features, wt)
    }

    /// Gradients of all parameters after [`Graph::backward`], in canonical
    /// order.
    pub fn grads(&self, g: &Graph) -> Vec<Vec<f64>> {
        self.leaves
            .iter()
            .map(|&v| match g.grad(v) {
                Some(gr) => gr.to_vec(),
                None => vec![0.0; g.value(v).len()],
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ModelConfig {
        let mut c = ModelConfig::new(6, 3);
        c.feature_dim = 8;
        c.hidden = vec![10];
        c
    }

    #[test]
    fn default_widths() {
        let c = ModelConfig::new(20, 5);
        assert_eq!(c.latent(), 4);
        assert_eq!(c.encoder_widths(), [16, 8, 4]);
        assert_eq!(c.decoder_input(), 8);
        let mut overall = c.clone();
        overall.latent_dim = Some(16);
        assert_eq!(overall.encoder_widths(), [16, 16, 16]);
    }

    #[test]
    fn invalid_configs() {
        let mut c = ModelConfig::new(20, 5);
        c.feature_dim = 12;
        assert!(c.validate().is_err());
        c.latent_dim = Some(3);
        assert!(c.validate().is_ok());
        c.epsilon_sq = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn keyword_parsing() {
        assert_eq!("low-rank".parse::<MaskVariant>().unwrap(), MaskVariant::LowRank);
        assert_eq!("principal_eig".parse::<Aggregation>().unwrap(), Aggregation::PrincipalEig);
        assert_eq!(NoiseMode::Add.to_string(), "add");
        assert!("sideways".parse::<NoiseMode>().is_err());
    }

    #[test]
    fn param_order_matches_mut_order() {
        let mut rng = Rng::new(1);
        let mut cfg = small_cfg();
        cfg.mask_variant = MaskVariant::GeneralMap;
        cfg.separate_classifiers = true;
        let mut b = ModelBundle::init(&cfg, 3, &mut rng).unwrap();
        let shapes: Vec<Vec<usize>> = b.params().iter().map(|(_, _, t)| t.shape().to_vec()).collect();
        let shapes_mut: Vec<Vec<usize>> =
            b.params_mut().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, shapes_mut);
        assert_eq!(b.classifiers.len(), 3);
        let mut g = Graph::new();
        let bound = b.bind(&mut g, true).unwrap();
        assert_eq!(bound.leaves.len(), shapes.len());
    }

    #[test]
    fn zero_final_layer_gives_zero_features() {
        let mut rng = Rng::new(5);
        let mut b = ModelBundle::init(&small_cfg(), 1, &mut rng).unwrap();
        b.backbone.last_mut().zero_();
        let x = Tensor::from_rows(&[[1.0, -2.0, 0.5, 3.0, 0.1, 0.0]]).unwrap();
        let f = b.features(&x).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batched_features_match_single_rows() {
        let mut rng = Rng::new(11);
        let b = ModelBundle::init(&small_cfg(), 1, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| (0..6).map(|j| ((i * 6 + j) as f64 * 0.71).sin()).collect())
            .collect();
        let batch = b.features(&Tensor::from_rows(&rows).unwrap()).unwrap();
        for (i, r) in rows.iter().enumerate() {
            let single = b.features(&Tensor::from_rows(&[r]).unwrap()).unwrap();
            assert_eq!(single.data(), batch.row_slice(i));
        }
    }

    #[test]
    fn feature_width_mismatch() {
        let mut rng = Rng::new(11);
        let b = ModelBundle::init(&small_cfg(), 1, &mut rng).unwrap();
        let x = Tensor::zeros(&[2, 5]);
        assert!(matches!(b.features(&x), Err(Error::Dimension { .. })));
    }

    #[test]
    fn seeded_features_are_reproducible() {
        let x = Tensor::from_rows(&[[0.3, -0.2, 1.0, 0.0, 0.5, -1.5]]).unwrap();
        let a = ModelBundle::init(&small_cfg(), 1, &mut Rng::new(2024)).unwrap();
        let b = ModelBundle::init(&small_cfg(), 1, &mut Rng::new(2024)).unwrap();
        assert!(a.features(&x).unwrap().bit_eq(&b.features(&x).unwrap()));
        assert_eq!(a.checksum(), b.checksum());
        let c = ModelBundle::init(&small_cfg(), 1, &mut Rng::new(2025)).unwrap();
        assert_ne!(a.checksum(), c.checksum());
    }

    #[test]
    fn graph_and_eval_features_agree_bitwise() {
        let mut rng = Rng::new(3);
        let b = ModelBundle::init(&small_cfg(), 1, &mut rng).unwrap();
        let x = Tensor::from_rows(&[[0.1, 0.2, 0.3, -0.4, 0.5, 0.6], [1.0, 0.0, -1.0, 2.0, 0.0, 0.3]])
            .unwrap();
        let mut g = Graph::new();
        let bound = b.bind(&mut g, true).unwrap();
        let xv = g.constant(x.clone()).unwrap();
        let f = bound.features(&mut g, xv).unwrap();
        assert!(g.value(f).bit_eq(&b.features(&x).unwrap()));
    }

    #[test]
    fn mean_of_separate_classifiers() {
        let mut rng = Rng::new(8);
        let mut cfg = small_cfg();
        cfg.separate_classifiers = true;
        let b = ModelBundle::init(&cfg, 2, &mut rng).unwrap();
        let w = b.inference_classifier();
        for i in 0..w.len() {
            let m = (b.classifiers[0].data()[i] + b.classifiers[1].data()[i]) / 2.0;
            assert!((w.data()[i] - m).abs() < 1e-15);
        }
    }
}
