//! Minimal differentiable-computation layer: tensors, a reverse-mode tape,
//! the GRU cell, temperature softmax, cosine similarity, Adam and
//! finite-difference gradient verification.

mod graph;
mod optim;
mod tensor;

pub use graph::{Graph, Var};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use tensor::{ParamSet, Tensor, CHECKPOINT_VERSION};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Half-width of the uniform initialization range.
pub const INIT_BOUND: f64 = 0.08;

/// Seeded generator for a named purpose; distinct streams never overlap.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Row-wise `softmax(logits / tau)`; the last axis is the row.
pub fn softmax_with_temperature(logits: &Tensor, tau: f64) -> Result<Tensor> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("temperature must be > 0, got {tau}")));
    }
    let width = *logits
        .shape()
        .last()
        .ok_or_else(|| Error::Shape("softmax of a scalar".into()))?;
    if width == 0 {
        return Err(Error::Shape("softmax over an empty axis".into()));
    }
    let data: Vec<f64> = logits
        .data()
        .chunks(width)
        .flat_map(|row| graph::softmax_slice(row, tau))
        .collect();
    Tensor::new(logits.shape().to_vec(), data)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("cosine: lengths {} vs {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine_similarity(a: &Tensor, b: &Tensor) -> Result<f64> {
    cosine_slices(a.data(), b.data())
}

/// Parameter names of a GRU cell under `prefix`.
pub const GRU_PARAMS: [&str; 9] = ["w_u", "u_u", "b_u", "w_r", "u_r", "b_r", "w_h", "u_h", "b_h"];

/// Registers the `2·3` weight matrices and three biases of a GRU cell.
pub fn init_gru<R: rand::Rng>(
    params: &mut ParamSet,
    prefix: &str,
    input_dim: usize,
    hidden_dim: usize,
    rng: &mut R,
) -> Result<()> {
    for gate in ["u", "r", "h"] {
        params.insert(
            format!("{prefix}.w_{gate}"),
            Tensor::uniform(&[hidden_dim, input_dim], INIT_BOUND, rng),
        )?;
        params.insert(
            format!("{prefix}.u_{gate}"),
            Tensor::uniform(&[hidden_dim, hidden_dim], INIT_BOUND, rng),
        )?;
        params.insert(
            format!("{prefix}.b_{gate}"),
            Tensor::uniform(&[hidden_dim], INIT_BOUND, rng),
        )?;
    }
    Ok(())
}

/// GRU cell variables registered on a graph.
#[derive(Debug, Clone, Copy)]
pub struct GruCell {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
}

impl GruCell {
    pub fn register<'p>(g: &mut Graph<'p>, params: &'p ParamSet, prefix: &str) -> Result<Self> {
        let mut w = Vec::with_capacity(3);
        let mut u = Vec::with_capacity(3);
        let mut b = Vec::with_capacity(3);
        for gate in ["u", "r", "h"] {
            w.push(g.param_from(params, &format!("{prefix}.w_{gate}"))?);
            u.push(g.param_from(params, &format!("{prefix}.u_{gate}"))?);
            b.push(g.param_from(params, &format!("{prefix}.b_{gate}"))?);
        }
        Ok(GruCell {
            w: [w[0], w[1], w[2]],
            u: [u[0], u[1], u[2]],
            b: [b[0], b[1], b[2]],
        })
    }

    /// `h' = (1 − u) ⊙ h + u ⊙ h̃` with update gate `u`, reset gate `r` and
    /// candidate `h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)`.
    pub fn step(&self, g: &mut Graph<'_>, h: Var, x: Var) -> Result<Var> {
        let gate = |g: &mut Graph<'_>, k: usize, h_in: Var| -> Result<Var> {
            let wx = g.affine(self.w[k], x, Some(self.b[k]))?;
            let uh = g.affine(self.u[k], h_in, None)?;
            g.add(wx, uh)
        };
        let u_pre = gate(g, 0, h)?;
        let u = g.sigmoid(u_pre);
        let r_pre = gate(g, 1, h)?;
        let r = g.sigmoid(r_pre);
        let rh = g.mul(r, h)?;
        let cand_pre = gate(g, 2, rh)?;
        let cand = g.tanh(cand_pre);
        let keep = g.one_minus(u);
        let old = g.mul(keep, h)?;
        let new = g.mul(u, cand)?;
        g.add(old, new)
    }
}

/// One GRU step outside of any training graph.
pub fn gru_step(params: &ParamSet, prefix: &str, h: &Tensor, x_emb: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let cell = GruCell::register(&mut g, params, prefix)?;
    let hidden = params.get(&format!("{prefix}.u_u"))?.shape()[0];
    if h.len() != hidden {
        return Err(Error::Shape(format!("hidden state {} vs cell {hidden}", h.len())));
    }
    let hv = g.input(h.data().to_vec());
    let xv = g.input(x_emb.data().to_vec());
    let out = cell.step(&mut g, hv, xv)?;
    Tensor::vector(g.value(out).to_vec())
}

/// Compares analytic gradients with central finite differences.
///
/// `loss_fn` returns the loss and its analytic gradient. The result is the
/// maximum over all coordinates of `|analytic − numeric| / max(1, |numeric|)`.
pub fn grad_check<F>(loss_fn: F, params: &ParamSet, eps: f64) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<(f64, ParamSet)>,
{
    if !(1e-6..=1e-3).contains(&eps) {
        return Err(Error::Config(format!("eps must be in [1e-6, 1e-3], got {eps}")));
    }
    let (_, analytic) = loss_fn(params)?;
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for (name, t) in params.iter() {
        let grad = analytic.get(name)?;
        for i in 0..t.len() {
            let orig = t.data()[i];
            probe.get_mut(name).expect("cloned set").data_mut()[i] = orig + eps;
            let (plus, _) = loss_fn(&probe)?;
            probe.get_mut(name).expect("cloned set").data_mut()[i] = orig - eps;
            let (minus, _) = loss_fn(&probe)?;
            probe.get_mut(name).expect("cloned set").data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (grad.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
