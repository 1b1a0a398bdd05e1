//! Loss composition for the four architectures and the per-example
//! generator objective used by training and gradient verification.

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
#[cfg(test)]
use super::config::ArchKind;
use super::model::{Net, StyleCode};
use crate::corpus::Label;
use crate::difcore::{Graph, ParamSet, Var};
use crate::error::{Error, Result};

/// Named loss values; `None` marks a part that was not computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub ae: Option<f64>,
    pub c: Option<f64>,
    pub z: Option<f64>,
    pub dz: Option<f64>,
    pub cos: Option<f64>,
    pub cosneg: Option<f64>,
}

impl LossParts {
    pub fn baseline(ae: f64, c: f64, z: f64) -> Self {
        LossParts {
            ae: Some(ae),
            c: Some(c),
            z: Some(z),
            ..LossParts::default()
        }
    }

    fn values(&self) -> [Option<f64>; 6] {
        [self.ae, self.c, self.z, self.dz, self.cos, self.cosneg]
    }

    pub fn all_finite(&self) -> bool {
        self.values().iter().flatten().all(|v| v.is_finite())
    }
}

impl std::fmt::Display for LossParts {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names = ["ae", "c", "z", "dz", "cos", "cosneg"];
        let mut first = true;
        for (name, v) in names.iter().zip(self.values()) {
            if let Some(v) = v {
                if !first {
                    f.write_str(", ")?;
                }
                write!(f, "L_{name}={v}")?;
                first = false;
            }
        }
        Ok(())
    }
}

/// Signed coefficients applied to each loss part in the generator objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub ae: f64,
    pub c: f64,
    pub z: f64,
    /// Coefficient of `L_Dz`; negative for the adversarial architectures.
    pub dz: f64,
    pub cos: f64,
    pub cosneg: f64,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig) -> Self {
        LossWeights {
            ae: 1.0,
            c: cfg.lambda_c,
            z: cfg.lambda_z,
            dz: if cfg.arch.uses_latent_discriminator() {
                -cfg.lambda_dz
            } else {
                0.0
            },
            cos: if cfg.arch.uses_cosine() { cfg.lambda_cos } else { 0.0 },
            cosneg: if cfg.arch.uses_cosine() { cfg.lambda_cosneg } else { 0.0 },
        }
    }

    pub fn zero() -> Self {
        LossWeights {
            ae: 0.0,
            c: 0.0,
            z: 0.0,
            dz: 0.0,
            cos: 0.0,
            cosneg: 0.0,
        }
    }

    fn needs_dz(&self) -> bool {
        self.dz != 0.0
    }

    fn needs_cos(&self) -> bool {
        self.cos != 0.0 || self.cosneg != 0.0
    }
}

/// Combines loss parts according to the architecture:
///
/// - baseline: `L_ae + λ_c L_c + λ_z L_z`
/// - disc: `baseline − λ_Dz L_Dz`
/// - sae: `baseline + λ_cos L_cos + λ_cos⁻ L_cos⁻`
/// - combo: `baseline − λ_Dz L_Dz + λ_cos L_cos + λ_cos⁻ L_cos⁻`
pub fn objective(cfg: &TrainConfig, parts: &LossParts) -> Result<f64> {
    let need = |v: Option<f64>, name: &str| {
        v.ok_or_else(|| Error::Config(format!("loss part {name} missing for arch {}", cfg.arch)))
    };
    let mut total =
        need(parts.ae, "L_ae")? + cfg.lambda_c * need(parts.c, "L_c")? + cfg.lambda_z * need(parts.z, "L_z")?;
    if cfg.arch.uses_latent_discriminator() {
        total -= cfg.lambda_dz * need(parts.dz, "L_Dz")?;
    }
    if cfg.arch.uses_cosine() {
        total += cfg.lambda_cos * need(parts.cos, "L_cos")?;
        total += cfg.lambda_cosneg * need(parts.cosneg, "L_cos-")?;
    }
    Ok(total)
}

/// A training example as token ids (tokens followed by EOS).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub ids: Vec<usize>,
    pub label: Label,
}

/// Builds the generator objective for one example and back-propagates it.
///
/// `noise` is added to the encoder mean (pass zeros for evaluation mode).
/// Returns the loss parts, the weighted objective value, and the graph holding
/// gradients for every model parameter.
pub fn generator_objective<'p>(
    params: &'p ParamSet,
    weights: &LossWeights,
    example: &Example,
    noise: &[f64],
    tau: f64,
) -> Result<(LossParts, f64, Graph<'p>)> {
    let mut g = Graph::new();
    let net = Net::register(&mut g, params)?;
    let code = StyleCode::new(example.label);
    let target = code.inverse();

    let inputs = net.embed_ids(&mut g, &example.ids)?;
    let z_mean = net.encode(&mut g, &inputs)?;
    if noise.len() != g.len_of(z_mean) {
        return Err(Error::Shape(format!(
            "noise has {} dims, latent {}",
            noise.len(),
            g.len_of(z_mean)
        )));
    }
    let eps = g.input(noise.to_vec());
    let z = g.add(z_mean, eps)?;

    let steps = example.ids.len();
    let mut terms: Vec<(Var, f64)> = Vec::new();
    let mut parts = LossParts::default();

    let ae = net.reconstruction(&mut g, z, code, &example.ids)?;
    parts.ae = Some(g.scalar(ae));
    terms.push((ae, weights.ae));

    // transfer direction: soft sentence under the inverse code
    let soft_bar = net.generate_soft(&mut g, z, target, tau, steps)?;
    let d_logits = net.style_logits_soft(&mut g, &soft_bar)?;
    let l_c = g.nll(d_logits, target.label().index())?;
    parts.c = Some(g.scalar(l_c));
    terms.push((l_c, weights.c));

    let emb_bar = net.embed_soft(&mut g, &soft_bar)?;
    let z_bar = net.encode(&mut g, &emb_bar)?;
    let l_z = g.half_sq_dist(z_bar, z)?;
    parts.z = Some(g.scalar(l_z));
    terms.push((l_z, weights.z));

    if weights.needs_dz() {
        let logits = net.latent_logits(&mut g, z)?;
        let l_dz = g.nll(logits, code.label().index())?;
        parts.dz = Some(g.scalar(l_dz));
        terms.push((l_dz, weights.dz));
    }

    if weights.needs_cos() {
        let soft_same = net.generate_soft(&mut g, z, code, tau, steps)?;
        let emb_same = net.embed_soft(&mut g, &soft_same)?;
        let z_same = net.encode(&mut g, &emb_same)?;
        let cos_same = g.cosine(z_same, z)?;
        let l_cos = g.one_minus(cos_same);
        parts.cos = Some(g.scalar(l_cos));
        terms.push((l_cos, weights.cos));

        let cos_bar = g.cosine(z_bar, z)?;
        let l_cosneg = g.one_minus(cos_bar);
        parts.cosneg = Some(g.scalar(l_cosneg));
        terms.push((l_cosneg, weights.cosneg));
    }

    let total = g.weighted_sum(&terms)?;
    let value = g.scalar(total);
    g.backward(total)?;
    Ok((parts, value, g))
}

/// `−ln q_{D_z}(c | z)` averaged over a batch of fixed latent vectors, with
/// gradients for the latent discriminator.
pub fn latent_discriminator_batch<'p>(
    params: &'p ParamSet,
    batch: &[(Vec<f64>, Label)],
) -> Result<(f64, Graph<'p>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut g = Graph::new();
    let net = Net::register(&mut g, params)?;
    let w = 1.0 / batch.len() as f64;
    let mut terms = Vec::with_capacity(batch.len());
    for (z, label) in batch {
        let zv = g.input(z.clone());
        let logits = net.latent_logits(&mut g, zv)?;
        terms.push((g.nll(logits, label.index())?, w));
    }
    let total = g.weighted_sum(&terms)?;
    let value = g.scalar(total);
    g.backward(total)?;
    Ok((value, g))
}

/// Style-discriminator NLL averaged over real (hard-token) examples.
pub fn style_discriminator_batch<'p>(
    params: &'p ParamSet,
    batch: &[&Example],
) -> Result<(f64, Graph<'p>)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let mut g = Graph::new();
    let net = Net::register(&mut g, params)?;
    let w = 1.0 / batch.len() as f64;
    let mut terms = Vec::with_capacity(batch.len());
    for ex in batch {
        let logits = net.style_logits_ids(&mut g, &ex.ids)?;
        terms.push((g.nll(logits, ex.label.index())?, w));
    }
    let total = g.weighted_sum(&terms)?;
    let value = g.scalar(total);
    g.backward(total)?;
    Ok((value, g))
}
