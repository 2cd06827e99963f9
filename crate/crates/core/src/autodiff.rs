//! Reverse-mode differentiation over an explicit computation record.
//!
//! Every operation evaluates eagerly and appends a node holding its value
//! and the information its backward rule needs. [`Graph::backward`] walks
//! the record in reverse and accumulates gradients into every node that
//! depends on a `requires_grad` leaf.

use crate::error::{Error, Result};
use crate::tensor::{self, gemm, gemm_nt, gemm_tn, log_sum_exp, sigmoid_scalar, Tensor};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    ConcatCols(Vec<Var>),
    MeanRows(Var),
    Reshape(Var),
    Sum(Var),
    SoftmaxRows(Var),
    CrossEntropyMean {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    EntropyMean {
        logits: Var,
        probs: Vec<f64>,
        log_probs: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation record for one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    relu_margin: f64,
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if cfg!(debug_assertions) && data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

impl Graph {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            relu_margin: f64::INFINITY,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest |input| seen by any ReLU so far. Finite-difference checks use
    /// this to stay away from the kink.
    pub fn relu_margin(&self) -> f64 {
        self.relu_margin
    }

    fn push(&mut self, op: &'static str, value: Tensor, kind: Op, requires_grad: bool) -> Result<Var> {
        check_finite(op, value.data())?;
        let mut value = value;
        value.requires_grad = requires_grad;
        value.grad = None;
        self.nodes.push(Node {
            value,
            op: kind,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Insert a tensor; its `requires_grad` flag decides whether it is a
    /// parameter or a constant.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        let rg = t.requires_grad;
        self.push("leaf", t, Op::Leaf, rg)
    }

    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push("constant", t, Op::Leaf, false)
    }

    /// Copy of `v` cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.value(a).dims2()?;
        let (k2, n) = self.value(b).dims2()?;
        if k != k2 {
            return Err(Error::dim("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let data = gemm(self.value(a).data(), self.value(b).data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Tensor::new(vec![m, n], data)?, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).transpose()?;
        let rg = self.rg(a);
        self.push("transpose", t, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("add", t, Op::Add(a, b), rg)
    }

    /// `x (m×n) + b` with `b` a length-n row broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (m, n) = self.value(x).dims2()?;
        if self.value(b).len() != n {
            return Err(Error::dim(
                "add_row",
                format!("{m}x{n} + {:?}", self.value(b).shape()),
            ));
        }
        let bd = self.value(b).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(n) {
            for (o, &bv) in row.iter_mut().zip(bd) {
                *o += bv;
            }
        }
        let rg = self.rg(x) || self.rg(b);
        self.push("add_row", Tensor::new(vec![m, n], data)?, Op::AddRow(x, b), rg)
    }

    /// Elementwise product of equal shapes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim("mul", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push("mul", t, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(ta.shape().to_vec(), ta.data().iter().map(|x| x * s).collect())?;
        let rg = self.rg(a);
        self.push("scale", t, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let mut margin = self.relu_margin;
        let data = ta
            .data()
            .iter()
            .map(|&x| {
                margin = margin.min(x.abs());
                x.max(0.0)
            })
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.relu_margin = margin;
        let rg = self.rg(a);
        self.push("relu", t, Op::Relu(a), rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let t = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|&x| sigmoid_scalar(x)).collect(),
        )?;
        let rg = self.rg(a);
        self.push("sigmoid", t, Op::Sigmoid(a), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat_cols", "no inputs"));
        }
        let rows = self.value(parts[0]).dims2()?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).dims2()?;
            if r != rows {
                return Err(Error::dim("concat_cols", format!("row count {r} != {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for i in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(
            "concat_cols",
            Tensor::new(vec![rows, total], data)?,
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    /// Column means of an n×d matrix, as a 1×d row.
    pub fn mean_rows(&mut self, a: Var) -> Result<Var> {
        let (n, d) = self.value(a).dims2()?;
        let src = self.value(a).data();
        let mut out = vec![0.0; d];
        for row in src.chunks(d) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let inv = n as f64;
        for o in &mut out {
            *o /= inv;
        }
        let rg = self.rg(a);
        self.push("mean_rows", Tensor::new(vec![1, d], out)?, Op::MeanRows(a), rg)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        self.push("reshape", t, Op::Reshape(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), rg)
    }

    /// Row-wise softmax of an n×C matrix.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (n, c) = self.value(a).dims2()?;
        let mut data = Vec::with_capacity(n * c);
        for i in 0..n {
            data.extend(tensor::softmax(self.value(a).row_slice(i)));
        }
        let rg = self.rg(a);
        self.push("softmax", Tensor::new(vec![n, c], data)?, Op::SoftmaxRows(a), rg)
    }

    /// Mean cross-entropy of n×C logits against class targets, as a scalar.
    pub fn cross_entropy_mean(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let (n, c) = self.value(logits).dims2()?;
        if targets.len() != n {
            return Err(Error::dim(
                "cross_entropy",
                format!("{n} rows but {} targets", targets.len()),
            ));
        }
        let mut total = 0.0;
        let mut probs = Vec::with_capacity(n * c);
        for (i, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(Error::Index {
                    what: "class target",
                    index: t,
                    len: c,
                });
            }
            let row = self.value(logits).row_slice(i);
            total += log_sum_exp(row) - row[t];
            probs.extend(tensor::softmax(row));
        }
        let rg = self.rg(logits);
        self.push(
            "cross_entropy",
            Tensor::scalar(total / n as f64),
            Op::CrossEntropyMean {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        )
    }

    /// Cross-entropy of a single logit vector.
    pub fn cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        self.cross_entropy_mean(logits, &[target])
    }

    /// Mean Shannon entropy of the row-wise softmax of n×C logits.
    pub fn entropy_mean(&mut self, logits: Var) -> Result<Var> {
        let (n, c) = self.value(logits).dims2()?;
        let mut probs = Vec::with_capacity(n * c);
        let mut log_probs = Vec::with_capacity(n * c);
        let mut total = 0.0;
        for i in 0..n {
            let row = self.value(logits).row_slice(i);
            let lse = log_sum_exp(row);
            for &z in row {
                let lp = z - lse;
                let p = lp.exp();
                total -= p * lp;
                probs.push(p);
                log_probs.push(lp);
            }
        }
        let rg = self.rg(logits);
        self.push(
            "entropy",
            Tensor::scalar(total / n as f64),
            Op::EntropyMean {
                logits,
                probs,
                log_probs,
            },
            rg,
        )
    }

    /// Accumulate d(loss)/d(node) into every node that requires gradients.
    /// Leaves that require gradients but are unreachable get zero gradients.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }

        for (node, g) in self.nodes.iter_mut().zip(grads) {
            if !node.requires_grad {
                node.value.grad = None;
                continue;
            }
            node.value.grad = match g {
                Some(g) => Some(g),
                None if matches!(node.op, Op::Leaf) => Some(vec![0.0; node.value.len()]),
                None => None,
            };
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let acc = |v: Var, delta: Vec<f64>, grads: &mut [Option<Vec<f64>>]| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => {
                    for (e, d) in existing.iter_mut().zip(delta) {
                        *e += d;
                    }
                }
                slot @ None => *slot = Some(delta),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).dims2()?;
                let (_, n) = self.value(*b).dims2()?;
                if self.rg(*a) {
                    acc(*a, gemm_nt(g, self.value(*b).data(), m, n, k), grads);
                }
                if self.rg(*b) {
                    acc(*b, gemm_tn(self.value(*a).data(), g, m, k, n), grads);
                }
            }
            Op::Transpose(a) => {
                let (r, c) = self.value(*a).dims2()?;
                acc(*a, tensor::transpose(g, c, r), grads);
            }
            Op::Add(a, b) => {
                acc(*a, g.to_vec(), grads);
                acc(*b, g.to_vec(), grads);
            }
            Op::AddRow(x, b) => {
                acc(*x, g.to_vec(), grads);
                if self.rg(*b) {
                    let n = self.value(*b).len();
                    let mut gb = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (o, &v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                    acc(*b, gb, grads);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let d = g.iter().zip(self.value(*b).data()).map(|(x, y)| x * y).collect();
                    acc(*a, d, grads);
                }
                if self.rg(*b) {
                    let d = g.iter().zip(self.value(*a).data()).map(|(x, y)| x * y).collect();
                    acc(*b, d, grads);
                }
            }
            Op::Scale(a, s) => acc(*a, g.iter().map(|x| x * s).collect(), grads),
            Op::Relu(a) => {
                let d = g
                    .iter()
                    .zip(self.value(*a).data())
                    .map(|(&gv, &x)| if x > 0.0 { gv } else { 0.0 })
                    .collect();
                acc(*a, d, grads);
            }
            Op::Sigmoid(a) => {
                let d = g
                    .iter()
                    .zip(node.value.data())
                    .map(|(&gv, &s)| gv * s * (1.0 - s))
                    .collect();
                acc(*a, d, grads);
            }
            Op::ConcatCols(parts) => {
                let (rows, total) = node.value.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).dims2()?.1;
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        acc(p, d, grads);
                    }
                    offset += w;
                }
            }
            Op::MeanRows(a) => {
                let (n, d) = self.value(*a).dims2()?;
                let inv = 1.0 / n as f64;
                let row: Vec<f64> = g.iter().map(|x| x * inv).collect();
                let mut out = Vec::with_capacity(n * d);
                for _ in 0..n {
                    out.extend_from_slice(&row);
                }
                acc(*a, out, grads);
            }
            Op::Reshape(a) => acc(*a, g.to_vec(), grads),
            Op::Sum(a) => acc(*a, vec![g[0]; self.value(*a).len()], grads),
            Op::SoftmaxRows(a) => {
                let (_, c) = node.value.dims2()?;
                let p = node.value.data();
                let mut d = Vec::with_capacity(p.len());
                for (prow, grow) in p.chunks(c).zip(g.chunks(c)) {
                    let dot: f64 = prow.iter().zip(grow).map(|(x, y)| x * y).sum();
                    d.extend(prow.iter().zip(grow).map(|(pv, gv)| pv * (gv - dot)));
                }
                acc(*a, d, grads);
            }
            Op::CrossEntropyMean {
                logits,
                targets,
                probs,
            } => {
                let (n, c) = self.value(*logits).dims2()?;
                let scale = g[0] / n as f64;
                let mut d = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    d[i * c + t] -= 1.0;
                }
                d.iter_mut().for_each(|v| *v *= scale);
                acc(*logits, d, grads);
            }
            Op::EntropyMean {
                logits,
                probs,
                log_probs,
            } => {
                let (n, c) = self.value(*logits).dims2()?;
                let scale = g[0] / n as f64;
                let mut d = Vec::with_capacity(n * c);
                for (prow, lrow) in probs.chunks(c).zip(log_probs.chunks(c)) {
                    let h: f64 = -prow.iter().zip(lrow).map(|(p, l)| p * l).sum::<f64>();
                    d.extend(
                        prow.iter()
                            .zip(lrow)
                            .map(|(p, l)| -p * (l + h) * scale),
                    );
                }
                acc(*logits, d, grads);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{finite_diff_grad, relative_error};

    fn param(shape: &[usize], data: Vec<f64>) -> Tensor {
        Tensor::new(shape.to_vec(), data).unwrap().with_grad(true)
    }

    #[test]
    fn sum_gives_all_ones_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(param(&[2, 3], vec![0.3; 6])).unwrap();
        let s = g.sum(w).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(w).unwrap(), &[1.0; 6]);
    }

    #[test]
    fn detached_branch_gets_no_gradient() {
        let mut g = Graph::new();
        let w = g.leaf(param(&[1, 3], vec![1.0, 2.0, 3.0])).unwrap();
        let d = g.detach(w).unwrap();
        let prod = g.mul(w, d).unwrap();
        let s = g.sum(prod).unwrap();
        g.backward(s).unwrap();
        // d(w * stopgrad(w))/dw = stopgrad(w)
        assert_eq!(g.grad(w).unwrap(), &[1.0, 2.0, 3.0]);
        assert!(g.grad(d).is_none());
    }

    #[test]
    fn unreachable_parameter_gets_zero_gradient() {
        let mut g = Graph::new();
        let a = g.leaf(param(&[1, 2], vec![1.0, 2.0])).unwrap();
        let b = g.leaf(param(&[1, 2], vec![3.0, 4.0])).unwrap();
        let s = g.sum(a).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(b).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut g = Graph::new();
        let a = g.leaf(param(&[1, 2], vec![1.0, 2.0])).unwrap();
        assert!(matches!(g.backward(a), Err(Error::Contract(_))));
    }

    #[test]
    fn cross_entropy_examples() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::row(vec![0.0, 0.0, 0.0])).unwrap();
        for t in 0..3 {
            let l = g.cross_entropy(z, t).unwrap();
            assert!((g.value(l).item() - 3f64.ln()).abs() < 1e-12);
        }
        let z = g.constant(Tensor::row(vec![1.0, 0.0])).unwrap();
        let l = g.cross_entropy(z, 0).unwrap();
        let expect = -sigmoid_scalar(1.0).ln();
        assert!((g.value(l).item() - expect).abs() < 1e-12);
        assert!((g.value(l).item() - 0.31326).abs() < 1e-5);

        let z = g.constant(Tensor::row(vec![800.0, 0.0, 0.0])).unwrap();
        let l = g.cross_entropy(z, 0).unwrap();
        assert!(g.value(l).item().abs() < 1e-300);

        assert!(matches!(g.cross_entropy(z, 3), Err(Error::Index { .. })));
    }

    #[test]
    fn entropy_example() {
        let mut g = Graph::new();
        let z = g.constant(Tensor::row(vec![4f64.ln(), 0.0])).unwrap();
        let h = g.entropy_mean(z).unwrap();
        let expect = -(0.8f64 * 0.8f64.ln() + 0.2 * 0.2f64.ln());
        assert!((g.value(h).item() - expect).abs() < 1e-12);
        assert!((g.value(h).item() - 0.50040).abs() < 1e-5);
    }

    #[cfg(debug_assertions)]
    #[test]
    fn non_finite_values_are_reported() {
        let mut g = Graph::new();
        let a = g.constant(Tensor::row(vec![f64::MAX, 1.0])).unwrap();
        assert!(matches!(g.scale(a, 10.0), Err(Error::NonFinite { op: "scale" })));
        assert!(matches!(
            g.constant(Tensor::row(vec![f64::NAN])),
            Err(Error::NonFinite { .. })
        ));
    }

    /// Each op's backward rule against central differences on a composite
    /// scalar function that routes through it.
    #[test]
    fn every_op_matches_finite_differences() {
        let a0 = param(&[3, 4], (0..12).map(|i| ((i * 7 % 5) as f64 - 2.1) * 0.3).collect());
        let b0 = param(&[4, 2], (0..8).map(|i| ((i * 3 % 7) as f64 - 3.3) * 0.2).collect());
        let c0 = param(&[1, 2], vec![0.4, -0.7]);

        let forward = |g: &mut Graph, ts: &[Tensor]| -> Result<Var> {
            let a = g.leaf(ts[0].clone())?;
            let b = g.leaf(ts[1].clone())?;
            let c = g.leaf(ts[2].clone())?;
            let ab = g.matmul(a, b)?; // 3x2
            let ab = g.add_row(ab, c)?;
            let r = g.relu(ab)?;
            let s = g.sigmoid(ab)?;
            let m = g.mul(r, s)?;
            let t = g.transpose(m)?; // 2x3
            let t = g.reshape(t, &[3, 2])?;
            let mixed = g.add(t, m)?;
            let mr = g.mean_rows(mixed)?; // 1x2
            let cat = g.concat_cols(&[mr, c])?; // 1x4
            let sc = g.scale(cat, 0.7)?;
            let sm = g.softmax_rows(sc)?;
            let ce = g.cross_entropy_mean(ab, &[0, 1, 1])?;
            let h = g.entropy_mean(sc)?;
            let s1 = g.sum(sm)?;
            let cs = g.sum(cat)?;
            let tot = g.add(ce, h)?;
            let tot = g.add(tot, cs)?;
            let sm_sel = g.mul(sm, sm)?;
            let s2 = g.sum(sm_sel)?;
            let tot = g.add(tot, s2)?;
            g.add(tot, s1)
        };

        let params = vec![a0, b0, c0];
        let mut g = Graph::new();
        let loss = forward(&mut g, &params).unwrap();
        assert!(g.relu_margin() > 1e-3, "test point too close to the relu kink");
        g.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> = (0..3)
            .map(|i| g.grad(Var(i)).unwrap().to_vec())
            .collect();

        let fd = finite_diff_grad(
            |ts| {
                let mut g = Graph::new();
                let l = forward(&mut g, ts)?;
                Ok(g.value(l).item())
            },
            &params,
            1e-5,
        )
        .unwrap();
        for (an, num) in analytic.iter().zip(&fd) {
            for (x, y) in an.iter().zip(num.data()) {
                assert!(relative_error(*x, *y) < 1e-6, "{x} vs {y}");
            }
        }
    }
}
