//! Reverse-mode differentiation over a fixed operator set.
//!
//! A [`Graph`] records every operation applied to its variables; calling
//! [`Graph::backward`] on a scalar output accumulates gradients into all
//! registered parameters.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::tensor::{ParamSet, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// `w x (+ b)` with `w: [rows, cols]`, `x: [cols]`.
    Affine { w: Var, x: Var, b: Option<Var> },
    /// `wᵀ x` with `w: [rows, cols]`, `x: [rows]`.
    AffineT { w: Var, x: Var },
    Row { w: Var, index: usize },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Var, Var),
    Softmax { x: Var, tau: f64 },
    Mean(Vec<Var>),
    Nll { logits: Var, target: usize },
    Cosine(Var, Var),
    HalfSqDist(Var, Var),
    WeightedSum(Vec<(Var, f64)>),
}

struct Node<'p> {
    value: Cow<'p, [f64]>,
    shape: (usize, usize),
    op: Op,
}

/// Computation tape. Parameter values are borrowed, not copied.
pub struct Graph<'p> {
    nodes: Vec<Node<'p>>,
    params: BTreeMap<String, (Var, Vec<usize>)>,
    grads: Vec<Option<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Graph::new()
    }
}

fn dims(t: &Tensor) -> Result<(usize, usize)> {
    match *t.shape() {
        [n] => Ok((n, 1)),
        [r, c] => Ok((r, c)),
        ref s => Err(Error::Shape(format!("unsupported rank for shape {s:?}"))),
    }
}

fn sigmoid(x: f64) -> f64 {
    crate::classifier::sigmoid(x)
}

pub(crate) fn softmax_slice(x: &[f64], tau: f64) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| ((v - max) / tau).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::with_capacity(1024),
            params: BTreeMap::new(),
            grads: Vec::new(),
        }
    }

    fn push(&mut self, value: Vec<f64>, shape: (usize, usize), op: Op) -> Var {
        self.nodes.push(Node {
            value: Cow::Owned(value),
            shape,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn len_of(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Constant input (no gradient is reported for it).
    pub fn input(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(values, (n, 1), Op::Leaf)
    }

    /// Constant vector or matrix.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        let shape = dims(&t)?;
        let (_, data) = t.into_parts();
        Ok(self.push(data, shape, Op::Leaf))
    }

    /// Registers (once) a named parameter borrowed from `t`.
    pub fn param(&mut self, name: &str, t: &'p Tensor) -> Result<Var> {
        if let Some((v, _)) = self.params.get(name) {
            return Ok(*v);
        }
        let shape = dims(t)?;
        self.nodes.push(Node {
            value: Cow::Borrowed(t.data()),
            shape,
            op: Op::Leaf,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(name.to_owned(), (v, t.shape().to_vec()));
        Ok(v)
    }

    /// Looks up `name` in `set` and registers it.
    pub fn param_from(&mut self, set: &'p ParamSet, name: &str) -> Result<Var> {
        let t = set.get(name)?;
        self.param(name, t)
    }

    fn check_len(&self, a: Var, b: Var, what: &str) -> Result<usize> {
        let (la, lb) = (self.len_of(a), self.len_of(b));
        if la != lb {
            return Err(Error::Shape(format!("{what}: lengths {la} vs {lb}")));
        }
        Ok(la)
    }

    pub fn affine(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let (rows, cols) = self.nodes[w.0].shape;
        if self.len_of(x) != cols {
            return Err(Error::Shape(format!(
                "affine: weight [{rows}, {cols}] vs input {}",
                self.len_of(x)
            )));
        }
        if let Some(b) = b {
            if self.len_of(b) != rows {
                return Err(Error::Shape(format!(
                    "affine: bias {} vs rows {rows}",
                    self.len_of(b)
                )));
            }
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let mut out: Vec<f64> = match b {
            Some(b) => self.nodes[b.0].value.to_vec(),
            None => vec![0.0; rows],
        };
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wv[i * cols..(i + 1) * cols];
            *o += row.iter().zip(xv.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(self.push(out, (rows, 1), Op::Affine { w, x, b }))
    }

    pub fn affine_t(&mut self, w: Var, x: Var) -> Result<Var> {
        let (rows, cols) = self.nodes[w.0].shape;
        if self.len_of(x) != rows {
            return Err(Error::Shape(format!(
                "affine_t: weight [{rows}, {cols}] vs input {}",
                self.len_of(x)
            )));
        }
        let wv = &self.nodes[w.0].value;
        let xv = &self.nodes[x.0].value;
        let mut out = vec![0.0; cols];
        for (i, &xi) in xv.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, wij) in out.iter_mut().zip(&wv[i * cols..(i + 1) * cols]) {
                *o += xi * wij;
            }
        }
        Ok(self.push(out, (cols, 1), Op::AffineT { w, x }))
    }

    pub fn row(&mut self, w: Var, index: usize) -> Result<Var> {
        let (rows, cols) = self.nodes[w.0].shape;
        if index >= rows {
            return Err(Error::Shape(format!("row {index} out of {rows}")));
        }
        let out = self.nodes[w.0].value[index * cols..(index + 1) * cols].to_vec();
        Ok(self.push(out, (cols, 1), Op::Row { w, index }))
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let n = self.check_len(a, b, what)?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(out, (n, 1), op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.nodes[a.0].value.iter().map(|v| f(*v)).collect();
        let n = out.len();
        self.push(out, (n, 1), op)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        self.map(a, |v| 1.0 - v, Op::OneMinus(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.nodes[a.0].value.to_vec();
        out.extend_from_slice(&self.nodes[b.0].value);
        let n = out.len();
        self.push(out, (n, 1), Op::Concat(a, b))
    }

    pub fn softmax(&mut self, x: Var, tau: f64) -> Result<Var> {
        if !(tau > 0.0) {
            return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
        }
        let out = softmax_slice(&self.nodes[x.0].value, tau);
        let n = out.len();
        Ok(self.push(out, (n, 1), Op::Softmax { x, tau }))
    }

    /// Elementwise mean of equal-length vectors.
    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Shape("mean of zero vectors".into()))?;
        let n = self.len_of(first);
        let mut out = vec![0.0; n];
        for &x in xs {
            if self.len_of(x) != n {
                return Err(Error::Shape("mean: unequal lengths".into()));
            }
            for (o, v) in out.iter_mut().zip(self.nodes[x.0].value.iter()) {
                *o += v;
            }
        }
        let k = xs.len() as f64;
        for o in &mut out {
            *o /= k;
        }
        Ok(self.push(out, (n, 1), Op::Mean(xs.to_vec())))
    }

    /// `-ln softmax(logits)[target]`.
    pub fn nll(&mut self, logits: Var, target: usize) -> Result<Var> {
        let lv = &self.nodes[logits.0].value;
        if target >= lv.len() {
            return Err(Error::Shape(format!("target {target} out of {}", lv.len())));
        }
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let loss = lse - lv[target];
        Ok(self.push(vec![loss], (1, 1), Op::Nll { logits, target }))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_len(a, b, "cosine")?;
        let c = super::cosine_slices(&self.nodes[a.0].value, &self.nodes[b.0].value)?;
        Ok(self.push(vec![c], (1, 1), Op::Cosine(a, b)))
    }

    /// `½‖a − b‖²`.
    pub fn half_sq_dist(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check_len(a, b, "half_sq_dist")?;
        let d: f64 = self.nodes[a.0]
            .value
            .iter()
            .zip(self.nodes[b.0].value.iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(self.push(vec![0.5 * d], (1, 1), Op::HalfSqDist(a, b)))
    }

    /// `Σ wᵢ sᵢ` over scalar variables.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            if self.len_of(v) != 1 {
                return Err(Error::Shape("weighted_sum expects scalars".into()));
            }
            total += w * self.scalar(v);
        }
        Ok(self.push(vec![total], (1, 1), Op::WeightedSum(terms.to_vec())))
    }

    fn grad_buf(&mut self, v: Var) -> &mut Vec<f64> {
        let n = self.nodes[v.0].value.len();
        self.grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    /// Back-propagates from scalar `loss` (seed gradient 1).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.len_of(loss) != 1 {
            return Err(Error::Shape("backward expects a scalar output".into()));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            self.propagate(i, &op, &g);
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    fn propagate(&mut self, i: usize, op: &Op, g: &[f64]) {
        match *op {
            Op::Leaf => {}
            Op::Affine { w, x, b } => {
                let (rows, cols) = self.nodes[w.0].shape;
                let xv = self.nodes[x.0].value.to_vec();
                let gw = self.grad_buf(w);
                for r in 0..rows {
                    if g[r] == 0.0 {
                        continue;
                    }
                    for (gwij, xj) in gw[r * cols..(r + 1) * cols].iter_mut().zip(&xv) {
                        *gwij += g[r] * xj;
                    }
                }
                let mut gx = vec![0.0; cols];
                {
                    let wv = &self.nodes[w.0].value;
                    for r in 0..rows {
                        if g[r] == 0.0 {
                            continue;
                        }
                        for (gxj, wij) in gx.iter_mut().zip(&wv[r * cols..(r + 1) * cols]) {
                            *gxj += g[r] * wij;
                        }
                    }
                }
                add_into(self.grad_buf(x), &gx);
                if let Some(b) = b {
                    add_into(self.grad_buf(b), g);
                }
            }
            Op::AffineT { w, x } => {
                let (rows, cols) = self.nodes[w.0].shape;
                let xv = self.nodes[x.0].value.to_vec();
                let gw = self.grad_buf(w);
                for (r, &xr) in xv.iter().enumerate() {
                    if xr == 0.0 {
                        continue;
                    }
                    for (gwij, gj) in gw[r * cols..(r + 1) * cols].iter_mut().zip(g) {
                        *gwij += xr * gj;
                    }
                }
                let gx: Vec<f64> = {
                    let wv = &self.nodes[w.0].value;
                    (0..rows)
                        .map(|r| {
                            wv[r * cols..(r + 1) * cols]
                                .iter()
                                .zip(g)
                                .map(|(a, b)| a * b)
                                .sum()
                        })
                        .collect()
                };
                add_into(self.grad_buf(x), &gx);
            }
            Op::Row { w, index } => {
                let cols = self.nodes[w.0].shape.1;
                add_into(&mut self.grad_buf(w)[index * cols..(index + 1) * cols], g);
            }
            Op::Add(a, b) => {
                add_into(self.grad_buf(a), g);
                add_into(self.grad_buf(b), g);
            }
            Op::Sub(a, b) => {
                add_into(self.grad_buf(a), g);
                let gb = self.grad_buf(b);
                for (d, s) in gb.iter_mut().zip(g) {
                    *d -= s;
                }
            }
            Op::Mul(a, b) => {
                let av = self.nodes[a.0].value.to_vec();
                let bv = self.nodes[b.0].value.to_vec();
                let ga: Vec<f64> = g.iter().zip(&bv).map(|(g, b)| g * b).collect();
                let gb: Vec<f64> = g.iter().zip(&av).map(|(g, a)| g * a).collect();
                add_into(self.grad_buf(a), &ga);
                add_into(self.grad_buf(b), &gb);
            }
            Op::OneMinus(a) => {
                let ga = self.grad_buf(a);
                for (d, s) in ga.iter_mut().zip(g) {
                    *d -= s;
                }
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.to_vec();
                let ga: Vec<f64> = g.iter().zip(&y).map(|(g, y)| g * y * (1.0 - y)).collect();
                add_into(self.grad_buf(a), &ga);
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.to_vec();
                let ga: Vec<f64> = g.iter().zip(&y).map(|(g, y)| g * (1.0 - y * y)).collect();
                add_into(self.grad_buf(a), &ga);
            }
            Op::Concat(a, b) => {
                let na = self.len_of(a);
                add_into(self.grad_buf(a), &g[..na]);
                add_into(self.grad_buf(b), &g[na..]);
            }
            Op::Softmax { x, tau } => {
                let y = self.nodes[i].value.to_vec();
                let dot: f64 = g.iter().zip(&y).map(|(g, y)| g * y).sum();
                let gx: Vec<f64> = g
                    .iter()
                    .zip(&y)
                    .map(|(g, y)| y * (g - dot) / tau)
                    .collect();
                add_into(self.grad_buf(x), &gx);
            }
            Op::Mean(ref xs) => {
                let scale = 1.0 / xs.len() as f64;
                let gs: Vec<f64> = g.iter().map(|v| v * scale).collect();
                for &x in xs {
                    add_into(self.grad_buf(x), &gs);
                }
            }
            Op::Nll { logits, target } => {
                let mut p = softmax_slice(&self.nodes[logits.0].value, 1.0);
                p[target] -= 1.0;
                for v in &mut p {
                    *v *= g[0];
                }
                add_into(self.grad_buf(logits), &p);
            }
            Op::Cosine(a, b) => {
                let av = self.nodes[a.0].value.to_vec();
                let bv = self.nodes[b.0].value.to_vec();
                let c = self.nodes[i].value[0];
                let na = av.iter().map(|v| v * v).sum::<f64>().sqrt();
                let nb = bv.iter().map(|v| v * v).sum::<f64>().sqrt();
                let ga: Vec<f64> = av
                    .iter()
                    .zip(&bv)
                    .map(|(a, b)| g[0] * (b / (na * nb) - c * a / (na * na)))
                    .collect();
                let gb: Vec<f64> = av
                    .iter()
                    .zip(&bv)
                    .map(|(a, b)| g[0] * (a / (na * nb) - c * b / (nb * nb)))
                    .collect();
                add_into(self.grad_buf(a), &ga);
                add_into(self.grad_buf(b), &gb);
            }
            Op::HalfSqDist(a, b) => {
                let diff: Vec<f64> = self.nodes[a.0]
                    .value
                    .iter()
                    .zip(self.nodes[b.0].value.iter())
                    .map(|(x, y)| g[0] * (x - y))
                    .collect();
                add_into(self.grad_buf(a), &diff);
                let gb = self.grad_buf(b);
                for (d, s) in gb.iter_mut().zip(&diff) {
                    *d -= s;
                }
            }
            Op::WeightedSum(ref terms) => {
                for &(v, w) in terms {
                    self.grad_buf(v)[0] += w * g[0];
                }
            }
        }
    }

    /// Gradient of the last `backward` target with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Adds the gradients of all registered parameters into `acc`, scaled.
    /// Parameters unknown to `acc` are skipped.
    pub fn accumulate_param_grads(&self, acc: &mut ParamSet, scale: f64) {
        for (name, &(v, _)) in &self.params {
            let (Some(g), Some(dst)) = (self.grad(v), acc.get_mut(name)) else {
                continue;
            };
            for (d, s) in dst.data_mut().iter_mut().zip(g) {
                *d += scale * s;
            }
        }
    }

    /// Gradients of all registered parameters as a fresh set (zeros where unused).
    pub fn param_grads(&self) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, (v, shape)) in &self.params {
            let node = &self.nodes[v.0];
            let data = self
                .grad(*v)
                .map(<[f64]>::to_vec)
                .unwrap_or_else(|| vec![0.0; node.value.len()]);
            out.insert(name.clone(), Tensor::from_parts_unchecked(shape.clone(), data))
                .expect("parameter names are unique");
        }
        out
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
