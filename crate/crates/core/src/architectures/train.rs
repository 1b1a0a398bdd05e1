use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::model::{
    sample_noise, StyleModel, GENERATOR_PARAMS, LATENT_DISC_PARAMS, STREAM_NOISE, STREAM_SHUFFLE,
    STYLE_DISC_PARAMS,
};
use super::objective::{
    generator_objective, latent_discriminator_batch, style_discriminator_batch, Example,
    LossParts, LossWeights,
};
use crate::corpus::{build_vocab, LabeledCorpus};
use crate::difcore::{adam_step, seeded_rng, AdamConfig, AdamState, Graph, ParamSet};
use crate::error::{Error, Result};

/// Mean losses over one training epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub tau: f64,
    pub parts: LossParts,
    pub objective: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

pub const TRAINING_LOG_HEADER: &str =
    "epoch,tau,loss_ae,loss_c,loss_z,loss_dz,loss_cos,loss_cosneg,objective";

impl TrainingLog {
    /// CSV with one row per epoch; parts an architecture does not use are empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRAINING_LOG_HEADER);
        out.push('\n');
        let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for e in &self.epochs {
            let p = &e.parts;
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.epoch,
                e.tau,
                cell(p.ae),
                cell(p.c),
                cell(p.z),
                cell(p.dz),
                cell(p.cos),
                cell(p.cosneg),
                e.objective
            );
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn taus(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.tau).collect()
    }
}

#[derive(Default)]
struct PartSums {
    sums: [f64; 6],
    seen: [bool; 6],
    objective: f64,
    n: usize,
}

impl PartSums {
    fn add(&mut self, p: &LossParts, objective: f64) {
        for (i, v) in [p.ae, p.c, p.z, p.dz, p.cos, p.cosneg].into_iter().enumerate() {
            if let Some(v) = v {
                self.sums[i] += v;
                self.seen[i] = true;
            }
        }
        self.objective += objective;
        self.n += 1;
    }

    fn mean(&self) -> (LossParts, f64) {
        let n = self.n.max(1) as f64;
        let m = |i: usize| self.seen[i].then(|| self.sums[i] / n);
        (
            LossParts {
                ae: m(0),
                c: m(1),
                z: m(2),
                dz: m(3),
                cos: m(4),
                cosneg: m(5),
            },
            self.objective / n,
        )
    }
}

pub(crate) fn examples_of(model: &StyleModel, corpus: &LabeledCorpus) -> Vec<Example> {
    corpus
        .items
        .iter()
        .map(|(s, l)| Example {
            ids: model.target_ids(s),
            label: *l,
        })
        .collect()
}

/// Optimizer state of the three parameter groups.
pub struct Optimizers {
    generator: AdamState,
    style_disc: AdamState,
    latent_disc: AdamState,
    gen_cfg: AdamConfig,
    disc_cfg: AdamConfig,
}

impl Optimizers {
    pub fn new(model: &StyleModel) -> Self {
        Optimizers {
            generator: AdamState::new(&model.params.filter_prefix(&GENERATOR_PARAMS)),
            style_disc: AdamState::new(&model.params.filter_prefix(&STYLE_DISC_PARAMS)),
            latent_disc: AdamState::new(&model.params.filter_prefix(&LATENT_DISC_PARAMS)),
            gen_cfg: AdamConfig::with_lr(model.config.lr),
            disc_cfg: AdamConfig::with_lr(model.config.disc_lr),
        }
    }
}

fn batch_grads<'p, I>(params: &ParamSet, graphs: I, scale: f64) -> ParamSet
where
    I: IntoIterator<Item = Graph<'p>>,
{
    let mut acc = params.zeros_like();
    for g in graphs {
        g.accumulate_param_grads(&mut acc, scale);
    }
    acc
}

/// One generator step on a batch; returns the per-example parts and objectives.
pub fn generator_step(
    model: &mut StyleModel,
    opt: &mut Optimizers,
    weights: &LossWeights,
    batch: &[(&Example, Vec<f64>)],
    tau: f64,
) -> Result<Vec<(LossParts, f64)>> {
    let scale = 1.0 / batch.len() as f64;
    let mut results = Vec::with_capacity(batch.len());
    let mut acc = model.params.filter_prefix(&GENERATOR_PARAMS).zeros_like();
    for (ex, noise) in batch {
        let (parts, value, g) = generator_objective(&model.params, weights, ex, noise, tau)?;
        g.accumulate_param_grads(&mut acc, scale);
        results.push((parts, value));
    }
    adam_step(&mut model.params, &acc, &mut opt.generator, &opt.gen_cfg)?;
    Ok(results)
}

/// One minimization step of the latent discriminator on fixed `(z, c)` pairs.
pub fn latent_discriminator_step(
    model: &mut StyleModel,
    opt: &mut Optimizers,
    batch: &[(Vec<f64>, crate::corpus::Label)],
) -> Result<f64> {
    let (loss, g) = latent_discriminator_batch(&model.params, batch)?;
    let grads = batch_grads(
        &model.params.filter_prefix(&LATENT_DISC_PARAMS),
        std::iter::once(g),
        1.0,
    );
    adam_step(&mut model.params, &grads, &mut opt.latent_disc, &opt.disc_cfg)?;
    Ok(loss)
}

fn style_discriminator_epoch(
    model: &mut StyleModel,
    opt: &mut Optimizers,
    examples: &[Example],
    order: &[usize],
) -> Result<f64> {
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(model.config.batch_size) {
        let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
        let (loss, g) = style_discriminator_batch(&model.params, &batch)?;
        let grads = batch_grads(
            &model.params.filter_prefix(&STYLE_DISC_PARAMS),
            std::iter::once(g),
            1.0,
        );
        adam_step(&mut model.params, &grads, &mut opt.style_disc, &opt.disc_cfg)?;
        total += loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

/// Trains a model from scratch; fully determined by `cfg.seed`.
pub fn train(corpus: &LabeledCorpus, cfg: &TrainConfig) -> Result<(StyleModel, TrainingLog)> {
    let mut log = TrainingLog::default();
    let model = train_into(corpus, cfg, &mut log)?;
    Ok((model, log))
}

/// As [`train`], appending to `log` as epochs complete so a diverged run
/// keeps the epochs it finished.
pub fn train_into(
    corpus: &LabeledCorpus,
    cfg: &TrainConfig,
    log: &mut TrainingLog,
) -> Result<StyleModel> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.require_both_labels()?;
    let vocab = build_vocab(corpus, cfg.vocab_max)?;
    let mut model = StyleModel::init(cfg.clone(), vocab)?;
    let examples = examples_of(&model, corpus);
    let weights = LossWeights::from_config(cfg);
    let mut opt = Optimizers::new(&model);
    let mut shuffle_rng = seeded_rng(cfg.seed, STREAM_SHUFFLE);
    let mut noise_rng = seeded_rng(cfg.seed, STREAM_NOISE);
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for _ in 0..cfg.d_pretrain_epochs {
        order.shuffle(&mut shuffle_rng);
        style_discriminator_epoch(&mut model, &mut opt, &examples, &order)?;
    }

    for epoch in 0..cfg.epochs {
        let tau = cfg.tau_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut sums = PartSums::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&Example, Vec<f64>)> = chunk
                .iter()
                .map(|&i| Ok((&examples[i], sample_noise(cfg.z_dim, cfg.sigma_z, &mut noise_rng)?)))
                .collect::<Result<_>>()?;

            if cfg.arch.uses_latent_discriminator() {
                let zs = batch
                    .iter()
                    .map(|(ex, noise)| {
                        let mut z = encode_ids(&model, &ex.ids)?;
                        for (v, n) in z.iter_mut().zip(noise) {
                            *v += n;
                        }
                        Ok((z, ex.label))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let loss = latent_discriminator_step(&mut model, &mut opt, &zs)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        parts: format!("latent discriminator loss {loss}"),
                    });
                }
            }

            let results = generator_step(&mut model, &mut opt, &weights, &batch, tau)?;
            for (parts, value) in &results {
                if !parts.all_finite() || !value.is_finite() {
                    return Err(Error::Divergence {
                        epoch: epoch + 1,
                        parts: parts.to_string(),
                    });
                }
                sums.add(parts, *value);
            }
            if !model.params.all_finite() {
                return Err(Error::Divergence {
                    epoch: epoch + 1,
                    parts: "non-finite parameters after update".into(),
                });
            }
        }
        order.shuffle(&mut shuffle_rng);
        style_discriminator_epoch(&mut model, &mut opt, &examples, &order)?;
        let (parts, objective) = sums.mean();
        log.epochs.push(EpochLog {
            epoch: epoch + 1,
            tau,
            parts,
            objective,
        });
    }
    Ok(model)
}

/// Evaluation-mode latent mean of an id sequence.
pub(crate) fn encode_ids(model: &StyleModel, ids: &[usize]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let net = super::model::Net::register(&mut g, &model.params)?;
    let inputs = net.embed_ids(&mut g, ids)?;
    let z = net.encode(&mut g, &inputs)?;
    Ok(g.value(z).to_vec())
}
