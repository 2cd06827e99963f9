//! Mask-free FixMatch written against the graph primitives only. It owns
//! its parameters, pseudo-labeling, optimizer and schedule, and shares with
//! the library just the sampling and augmentation streams.

use std::f64::consts::PI;

use dgwm::autodiff::{Graph, Var};
use dgwm::data::{sample_step_batches, Augmenter, TrainingView};
use dgwm::pipeline::{Streams, TrainConfig};
use dgwm::rng::Rng;
use dgwm::tensor::Tensor;

pub struct Reference {
    /// `(weight in × out, bias 1 × out)` per backbone layer.
    pub layers: Vec<(Tensor, Tensor)>,
    /// `C × d`.
    pub classifier: Tensor,
    velocity: Vec<Vec<f64>>,
}

fn uniform(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = rng.uniform(-bound, bound);
    }
    t
}

impl Reference {
    /// Same draws as the library initializer for the backbone and classifier.
    pub fn init(widths: &[usize], classes: usize, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, Streams::INIT);
        let layers: Vec<(Tensor, Tensor)> = widths
            .windows(2)
            .map(|w| (uniform(&mut rng, &[w[0], w[1]], 1.0 / (w[0] as f64).sqrt()), Tensor::zeros(&[1, w[1]])))
            .collect();
        let d = *widths.last().unwrap();
        let classifier = uniform(&mut rng, &[classes, d], 1.0 / (d as f64).sqrt());
        let velocity = layers
            .iter()
            .flat_map(|(w, b)| [w.len(), b.len()])
            .chain([classifier.len()])
            .map(|n| vec![0.0; n])
            .collect();
        Self { layers, classifier, velocity }
    }

    fn logits(&self, g: &mut Graph, leaves: &[Var], x: &Tensor) -> Var {
        let mut h = g.constant(x.clone()).unwrap();
        for l in 0..self.layers.len() {
            let z = g.matmul(h, leaves[2 * l]).unwrap();
            let z = g.add_row(z, leaves[2 * l + 1]).unwrap();
            h = g.relu(z).unwrap();
        }
        let wt = g.transpose(*leaves.last().unwrap()).unwrap();
        g.matmul(h, wt).unwrap()
    }

    /// Accepted indices and argmax labels with `max softmax >= tau`.
    fn pseudo_labels(logits: &Tensor, tau: f64) -> (Vec<usize>, Vec<usize>) {
        let (n, _) = logits.dims2().unwrap();
        let (mut idx, mut lab) = (Vec::new(), Vec::new());
        for i in 0..n {
            let p = super::softmax(logits.row_slice(i));
            let mut best = 0;
            for j in 1..p.len() {
                if p[j] > p[best] {
                    best = j;
                }
            }
            if p[best] >= tau {
                idx.push(i);
                lab.push(best);
            }
        }
        (idx, lab)
    }

    /// One update; returns the differentiated loss.
    fn step(&mut self, view: &TrainingView, aug: &Augmenter, cfg: &TrainConfig, streams: &mut Streams, lrs: (f64, f64)) -> f64 {
        let batches = sample_step_batches(view, cfg.batch, &mut streams.batch).unwrap();
        let mut g = Graph::new();
        let mut leaves = Vec::new();
        for (w, b) in &self.layers {
            leaves.push(g.leaf(w.clone().with_grad(true)).unwrap());
            leaves.push(g.leaf(b.clone().with_grad(true)).unwrap());
        }
        leaves.push(g.leaf(self.classifier.clone().with_grad(true)).unwrap());

        let mut total: Option<Var> = None;
        for sb in &batches {
            let b = &sb.batch;
            let labeled: Vec<Vec<f64>> = b.labeled.iter().map(|s| aug.weak(&s.x, &mut streams.augment)).collect();
            let weak = aug.weak_rows(&b.unlabeled, &mut streams.augment);
            let strong = aug.strong_rows(&b.unlabeled, &mut streams.augment);

            let zw = self.logits(&mut g, &leaves, &Tensor::from_rows(&weak).unwrap());
            let (idx, lab) = Self::pseudo_labels(g.value(zw), cfg.tau);

            let ll = (!labeled.is_empty()).then(|| {
                let z = self.logits(&mut g, &leaves, &Tensor::from_rows(&labeled).unwrap());
                let y: Vec<usize> = b.labeled.iter().map(|s| s.label).collect();
                g.cross_entropy_mean(z, &y).unwrap()
            });
            let lu = (!idx.is_empty()).then(|| {
                let rows: Vec<&[f64]> = idx.iter().map(|&i| strong[i].as_slice()).collect();
                let z = self.logits(&mut g, &leaves, &Tensor::from_rows(&rows).unwrap());
                g.cross_entropy_mean(z, &lab).unwrap()
            });
            let dom = match (ll, lu) {
                (Some(a), Some(b)) => Some(g.add(a, b).unwrap()),
                (a, b) => a.or(b),
            };
            total = match (total, dom) {
                (Some(a), Some(b)) => Some(g.add(a, b).unwrap()),
                (a, b) => a.or(b),
            };
        }
        let Some(total) = total else { return 0.0 };
        g.backward(total).unwrap();
        let loss = g.value(total).item();

        let mu = cfg.momentum;
        let mut slot = 0;
        let mut update = |p: &mut Tensor, v: Var, lr: f64, vel: &mut Vec<Vec<f64>>| {
            let grad = g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
            for ((x, gr), m) in p.data_mut().iter_mut().zip(&grad).zip(vel[slot].iter_mut()) {
                *m = mu * *m + gr;
                *x -= lr * *m;
            }
            slot += 1;
        };
        for (l, (w, b)) in self.layers.iter_mut().enumerate() {
            update(w, leaves[2 * l], lrs.0, &mut self.velocity);
            update(b, leaves[2 * l + 1], lrs.0, &mut self.velocity);
        }
        update(&mut self.classifier, *leaves.last().unwrap(), lrs.1, &mut self.velocity);
        loss
    }

    /// Train with `cfg`'s epochs and schedule; returns every step's loss.
    pub fn train(&mut self, view: &TrainingView, cfg: &TrainConfig) -> Vec<f64> {
        let aug = Augmenter::fit(view, cfg.augment).unwrap();
        let mut streams = Streams::new(cfg.seed);
        let cosine = |e: usize, base: f64| base * 0.5 * (1.0 + (PI * (e as f64 / cfg.epochs as f64)).cos());
        let mut losses = Vec::new();
        for e in 0..cfg.epochs {
            let lrs = (cosine(e, cfg.lr_backbone), cosine(e, cfg.lr_head));
            for _ in 0..cfg.steps_per_epoch {
                losses.push(self.step(view, &aug, cfg, &mut streams, lrs));
            }
        }
        losses
    }
}
