//! Recorded tape for reverse-mode differentiation over tensor operators.

use std::collections::HashMap;

use super::kernels::{self, ConvSpec};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(String),
    Embed { table: Var, tokens: Vec<usize> },
    Transpose(Var),
    ConcatRows(Vec<Var>),
    Stack(Vec<Var>),
    Reshape(Var),
    Conv { x: Var, w: Var, b: Var, spec: ConvSpec },
    Relu(Var),
    Add(Var, Var),
    MaxPool { x: Var, argmax: Vec<usize> },
    Linear { x: Var, w: Var, b: Var },
    SoftmaxCe { logits: Var, target: usize, probs: Vec<f64> },
    InfoNce { u: Var, v: Var, tau: f64, probs: Vec<f64> },
    WeightedSum(Vec<(Var, f64)>),
    Mean(Vec<Var>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// A single forward pass. Parameters are copied in by name from a
/// [`ParamStore`]; [`Graph::backward`] adds their gradients back into it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A constant with no gradient.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// The named parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        if let Some(&v) = self.params.get(name) {
            return Ok(v);
        }
        let value = store.value(name)?.clone();
        let v = self.push(value, Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Rows of `table` (`[words x dim]`) selected by `tokens`, giving `[s x dim]`.
    pub fn embed(&mut self, table: Var, tokens: &[usize]) -> Result<Var> {
        let value = embed_lookup(self.value(table), tokens)?;
        Ok(self.push(value, Op::Embed { table, tokens: tokens.to_vec() }))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        t.expect_rank(2, "transpose input")?;
        let (r, c) = (t.dim(0), t.dim(1));
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = t.values[i * c + j];
            }
        }
        Ok(self.push(Tensor { shape: vec![c, r], values: out }, Op::Transpose(x)))
    }

    /// Concatenates `[r_i x c]` matrices along the first axis.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to concatenate".into()))?;
        let cols = self.value(*first).shape.get(1).copied().unwrap_or(0);
        let mut rows = 0;
        let mut values = Vec::new();
        for &p in parts {
            let t = self.value(p);
            t.expect_rank(2, "concat part")?;
            if t.dim(1) != cols {
                return Err(Error::Shape(format!("concat of {} and {cols} columns", t.dim(1))));
            }
            rows += t.dim(0);
            values.extend_from_slice(&t.values);
        }
        Ok(self.push(Tensor { shape: vec![rows, cols], values }, Op::ConcatRows(parts.to_vec())))
    }

    /// Stacks equal-length vectors into a `[n x p]` matrix.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or_else(|| Error::Shape("nothing to stack".into()))?;
        let p = self.value(*first).len();
        let mut values = Vec::with_capacity(p * parts.len());
        for &v in parts {
            let t = self.value(v);
            if t.rank() != 1 || t.len() != p {
                return Err(Error::Shape(format!("stack of shape {:?} with length {p}", t.shape)));
            }
            values.extend_from_slice(&t.values);
        }
        Ok(self.push(Tensor { shape: vec![parts.len(), p], values }, Op::Stack(parts.to_vec())))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let value = Tensor::new(shape.to_vec(), t.values.clone())?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, spec: ConvSpec) -> Result<Var> {
        let (xt, wt, bt) = (self.value(x), self.value(w), self.value(b));
        spec.check(xt, wt, bt)?;
        let in_len = xt.dim(1);
        let out = kernels::conv1d_forward(&spec, &xt.values, in_len, &wt.values, &bt.values);
        let shape = vec![spec.out_channels, spec.out_len(in_len)];
        Ok(self.push(Tensor { shape, values: out }, Op::Conv { x, w, b, spec }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = relu(self.value(x));
        self.push(value, Op::Relu(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape != tb.shape {
            return Err(Error::Shape(format!("add of {:?} and {:?}", ta.shape, tb.shape)));
        }
        let values = ta.values.iter().zip(&tb.values).map(|(x, y)| x + y).collect();
        let shape = ta.shape.clone();
        Ok(self.push(Tensor { shape, values }, Op::Add(a, b)))
    }

    /// Per-channel maximum over time of a `[c x s]` tensor.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        let (value, argmax) = max_pool_with_argmax(self.value(x))?;
        Ok(self.push(value, Op::MaxPool { x, argmax }))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let value = linear(self.value(x), self.value(w), self.value(b))?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn softmax_cross_entropy(&mut self, logits: Var, target: usize) -> Result<Var> {
        let t = self.value(logits);
        check_ce(t, target)?;
        let (loss, probs) = kernels::softmax_ce_forward(&t.values, target);
        Ok(self.push(Tensor::scalar(loss), Op::SoftmaxCe { logits, target, probs }))
    }

    pub fn infonce(&mut self, u: Var, v: Var, tau: f64) -> Result<Var> {
        let (n, p) = check_infonce(self.value(u), self.value(v), tau)?;
        let (loss, probs) = kernels::infonce_forward(&self.value(u).values, &self.value(v).values, n, p, tau);
        Ok(self.push(Tensor::scalar(loss), Op::InfoNce { u, v, tau, probs }))
    }

    /// Mean of the pairwise InfoNCE losses over all unordered pairs of
    /// `reps` (each `[n x p]`).
    pub fn cross_scale(&mut self, reps: &[Var], tau: f64) -> Result<Var> {
        let h = reps.len();
        if h < 2 {
            return Err(Error::Domain(format!("cross-scale loss needs at least 2 scales, got {h}")));
        }
        let mut terms = Vec::with_capacity(h * (h - 1) / 2);
        for a in 0..h {
            for b in a + 1..h {
                terms.push(self.infonce(reps[a], reps[b], tau)?);
            }
        }
        self.mean(&terms)
    }

    /// `sum_i coef_i * x_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, c) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::Shape(format!("weighted sum of non-scalar {:?}", t.shape)));
            }
            total += c * t.values[0];
        }
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec())))
    }

    /// Arithmetic mean of scalar nodes, summed in order then divided.
    pub fn mean(&mut self, terms: &[Var]) -> Result<Var> {
        if terms.is_empty() {
            return Err(Error::Domain("mean of no terms".into()));
        }
        let mut total = 0.0;
        for &v in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::Shape(format!("mean of non-scalar {:?}", t.shape)));
            }
            total += t.values[0];
        }
        let value = total / terms.len() as f64;
        Ok(self.push(Tensor::scalar(value), Op::Mean(terms.to_vec())))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn gradients(&self, loss: Var) -> Result<Vec<Option<Vec<f64>>>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(grads)
    }

    /// Reverse pass from `loss`, accumulating parameter gradients into `store`.
    pub fn backward(&self, loss: Var, store: &mut ParamStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        for (node, g) in self.nodes.iter().zip(&grads) {
            if let (Op::Param(name), Some(g)) = (&node.op, g) {
                store.accumulate(name, g)?;
            }
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let zeros = |v: Var| vec![0.0; nodes[v.0].value.len()];
        macro_rules! acc {
            ($v:expr) => {{
                let v: Var = $v;
                grads[v.0].get_or_insert_with(|| zeros(v))
            }};
        }
        match &nodes[idx].op {
            Op::Input | Op::Param(_) => {}
            Op::Embed { table, tokens } => {
                let dim = nodes[table.0].value.dim(1);
                let gt = acc!(*table);
                for (pos, &tok) in tokens.iter().enumerate() {
                    for k in 0..dim {
                        gt[tok * dim + k] += g[pos * dim + k];
                    }
                }
            }
            Op::Transpose(x) => {
                let t = &nodes[x.0].value;
                let (r, c) = (t.dim(0), t.dim(1));
                let gx = acc!(*x);
                for i in 0..r {
                    for j in 0..c {
                        gx[i * c + j] += g[j * r + i];
                    }
                }
            }
            Op::ConcatRows(parts) | Op::Stack(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = nodes[p.0].value.len();
                    let gp = acc!(p);
                    for (a, b) in gp.iter_mut().zip(&g[off..off + n]) {
                        *a += b;
                    }
                    off += n;
                }
            }
            Op::Reshape(x) => {
                let gx = acc!(*x);
                for (a, b) in gx.iter_mut().zip(g) {
                    *a += b;
                }
            }
            Op::Conv { x, w, b, spec } => {
                let xt = &nodes[x.0].value;
                let in_len = xt.dim(1);
                let mut gx = grads[x.0].take().unwrap_or_else(|| zeros(*x));
                let mut gw = grads[w.0].take().unwrap_or_else(|| zeros(*w));
                let mut gb = grads[b.0].take().unwrap_or_else(|| zeros(*b));
                let needs_x = !matches!(nodes[x.0].op, Op::Input);
                kernels::conv1d_backward(
                    spec,
                    &xt.values,
                    in_len,
                    &nodes[w.0].value.values,
                    g,
                    needs_x.then_some(gx.as_mut_slice()),
                    Some(&mut gw),
                    Some(&mut gb),
                );
                grads[x.0] = Some(gx);
                grads[w.0] = Some(gw);
                grads[b.0] = Some(gb);
            }
            Op::Relu(x) => {
                let xv = &nodes[x.0].value.values;
                let gx = acc!(*x);
                for ((a, b), xi) in gx.iter_mut().zip(g).zip(xv) {
                    if *xi > 0.0 {
                        *a += b;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    let gv = acc!(v);
                    for (x, y) in gv.iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::MaxPool { x, argmax } => {
                let s = nodes[x.0].value.dim(1);
                let gx = acc!(*x);
                for (c, &t) in argmax.iter().enumerate() {
                    gx[c * s + t] += g[c];
                }
            }
            Op::Linear { x, w, b } => {
                let xv = &nodes[x.0].value.values;
                let wv = &nodes[w.0].value.values;
                let p = xv.len();
                {
                    let gb = acc!(*b);
                    for (a, y) in gb.iter_mut().zip(g) {
                        *a += y;
                    }
                }
                {
                    let gw = acc!(*w);
                    for (c, gc) in g.iter().enumerate() {
                        for (a, xi) in gw[c * p..(c + 1) * p].iter_mut().zip(xv) {
                            *a += gc * xi;
                        }
                    }
                }
                let gx = acc!(*x);
                for (c, gc) in g.iter().enumerate() {
                    for (a, wi) in gx.iter_mut().zip(&wv[c * p..(c + 1) * p]) {
                        *a += gc * wi;
                    }
                }
            }
            Op::SoftmaxCe { logits, target, probs } => {
                let gl = acc!(*logits);
                for (j, (a, pj)) in gl.iter_mut().zip(probs).enumerate() {
                    let y = if j == *target { 1.0 } else { 0.0 };
                    *a += g[0] * (pj - y);
                }
            }
            Op::InfoNce { u, v, tau, probs } => {
                let ut = &nodes[u.0].value;
                let (n, p) = (ut.dim(0), ut.dim(1));
                let mut gu = vec![0.0; n * p];
                let mut gv = vec![0.0; n * p];
                kernels::infonce_backward(
                    &ut.values,
                    &nodes[v.0].value.values,
                    n,
                    p,
                    *tau,
                    probs,
                    g[0],
                    &mut gu,
                    &mut gv,
                );
                for (target, delta) in [(*u, gu), (*v, gv)] {
                    for (a, d) in acc!(target).iter_mut().zip(&delta) {
                        *a += d;
                    }
                }
            }
            Op::WeightedSum(terms) => {
                for &(v, c) in terms {
                    acc!(v)[0] += c * g[0];
                }
            }
            Op::Mean(terms) => {
                let share = g[0] / terms.len() as f64;
                for &v in terms {
                    acc!(v)[0] += share;
                }
            }
        }
    }
}

pub fn embed_lookup(table: &Tensor, tokens: &[usize]) -> Result<Tensor> {
    table.expect_rank(2, "embedding table")?;
    let (words, dim) = (table.dim(0), table.dim(1));
    let mut values = Vec::with_capacity(tokens.len() * dim);
    for &t in tokens {
        if t >= words {
            return Err(Error::Index(format!("token {t} outside 0..{words}")));
        }
        values.extend_from_slice(table.row(t));
    }
    Ok(Tensor { shape: vec![tokens.len(), dim], values })
}

pub fn causal_dilated_conv1d(x: &Tensor, w: &Tensor, b: &Tensor, dilation: usize) -> Result<Tensor> {
    x.expect_rank(2, "conv input")?;
    w.expect_rank(3, "conv weights")?;
    let spec = ConvSpec::causal(w.dim(1), w.dim(0), w.dim(2), dilation);
    spec.check(x, w, b)?;
    let in_len = x.dim(1);
    let values = kernels::conv1d_forward(&spec, &x.values, in_len, &w.values, &b.values);
    Ok(Tensor { shape: vec![spec.out_channels, spec.out_len(in_len)], values })
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        values: x.values.iter().map(|v| v.max(0.0)).collect(),
    }
}

fn max_pool_with_argmax(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    x.expect_rank(2, "pool input")?;
    let s = x.dim(1);
    if s == 0 {
        return Err(Error::Shape("max pool over an empty axis".into()));
    }
    let mut out = Vec::with_capacity(x.dim(0));
    let mut arg = Vec::with_capacity(x.dim(0));
    for row in x.values.chunks(s) {
        let (i, m) = row
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
        out.push(m);
        arg.push(i);
    }
    Ok((Tensor::vector(out), arg))
}

pub fn global_max_pool(x: &Tensor) -> Result<Tensor> {
    max_pool_with_argmax(x).map(|(t, _)| t)
}

pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    x.expect_rank(1, "linear input")?;
    w.expect_rank(2, "linear weights")?;
    if w.dim(1) != x.len() || b.shape != [w.dim(0)] {
        return Err(Error::Shape(format!(
            "linear with x {:?}, W {:?}, b {:?}",
            x.shape, w.shape, b.shape
        )));
    }
    Ok(Tensor::vector(kernels::linear_forward(&x.values, &w.values, &b.values)))
}

fn check_ce(logits: &Tensor, target: usize) -> Result<()> {
    if logits.rank() != 1 || logits.len() < 2 {
        return Err(Error::Shape(format!("logits of shape {:?}", logits.shape)));
    }
    if target >= logits.len() {
        return Err(Error::Index(format!("target {target} outside 0..{}", logits.len())));
    }
    Ok(())
}

pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<f64> {
    check_ce(logits, target)?;
    Ok(kernels::softmax_ce_forward(&logits.values, target).0)
}

fn check_infonce(u: &Tensor, v: &Tensor, tau: f64) -> Result<(usize, usize)> {
    u.expect_rank(2, "InfoNCE anchors")?;
    if u.shape != v.shape {
        return Err(Error::Shape(format!("InfoNCE over {:?} and {:?}", u.shape, v.shape)));
    }
    if u.dim(0) < 2 {
        return Err(Error::Domain("InfoNCE needs at least 2 rows for negatives".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature {tau} must be positive")));
    }
    Ok((u.dim(0), u.dim(1)))
}

/// InfoNCE between two `[n x p]` representation matrices: row `i` of `u`
/// is matched against every row of `v`, with row `i` the positive.
pub fn infonce_pair_loss(u: &Tensor, v: &Tensor, tau: f64) -> Result<f64> {
    let (n, p) = check_infonce(u, v, tau)?;
    Ok(kernels::infonce_forward(&u.values, &v.values, n, p, tau).0)
}

/// The ratio form with raw similarities in place of exponentials. Not a
/// valid training loss: it is undefined whenever a ratio is non-positive,
/// in which case `NaN` or an infinity is returned.
pub fn infonce_pair_loss_raw_ratio(u: &Tensor, v: &Tensor, tau: f64) -> Result<f64> {
    let (n, p) = check_infonce(u, v, tau)?;
    let s = kernels::similarities(&u.values, &v.values, n, p, tau);
    let total: f64 = (0..n)
        .map(|i| {
            let row = &s[i * n..(i + 1) * n];
            -(row[i] / row.iter().sum::<f64>()).ln()
        })
        .sum();
    Ok(total / n as f64)
}

pub fn cross_scale_loss(reps: &[Tensor], tau: f64) -> Result<f64> {
    let h = reps.len();
    if h < 2 {
        return Err(Error::Domain(format!("cross-scale loss needs at least 2 scales, got {h}")));
    }
    let mut total = 0.0;
    for a in 0..h {
        for b in a + 1..h {
            total += infonce_pair_loss(&reps[a], &reps[b], tau)?;
        }
    }
    Ok(total / (h * (h - 1) / 2) as f64)
}
