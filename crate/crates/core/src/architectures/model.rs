use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{ArchKind, TrainConfig};
use crate::corpus::{Label, Sentence, Vocab, BOS, EOS, NUM_SPECIALS};
use crate::difcore::{
    init_gru, seeded_rng, Graph, GruCell, ParamSet, Tensor, Var, CHECKPOINT_VERSION, INIT_BOUND,
};
use crate::error::{Error, Result};

/// Parameter-name prefixes of the encoder and generator.
pub const GENERATOR_PARAMS: [&str; 3] = ["emb", "enc.", "gen."];
/// Parameter-name prefix of the style discriminator over soft sentences.
pub const STYLE_DISC_PARAMS: [&str; 1] = ["d."];
/// Parameter-name prefix of the latent-style discriminator.
pub const LATENT_DISC_PARAMS: [&str; 1] = ["dz."];

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;
pub(crate) const STREAM_NOISE: u64 = 3;

/// One-hot binary style code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StyleCode(Label);

impl StyleCode {
    pub fn new(label: Label) -> Self {
        StyleCode(label)
    }

    pub fn label(self) -> Label {
        self.0
    }

    pub fn inverse(self) -> Self {
        StyleCode(self.0.flip())
    }

    pub fn one_hot(self) -> [f64; 2] {
        match self.0 {
            Label::Negative => [1.0, 0.0],
            Label::Positive => [0.0, 1.0],
        }
    }
}

impl From<Label> for StyleCode {
    fn from(l: Label) -> Self {
        StyleCode(l)
    }
}

/// Encoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector(pub Vec<f64>);

impl LatentVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Per-step token distributions of a soft generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftSentence {
    pub steps: Vec<Vec<f64>>,
}

impl SoftSentence {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// One-hot steps for a token id sequence.
    pub fn one_hot(ids: &[usize], vocab_size: usize) -> Self {
        SoftSentence {
            steps: ids
                .iter()
                .map(|&id| {
                    let mut v = vec![0.0; vocab_size];
                    v[id] = 1.0;
                    v
                })
                .collect(),
        }
    }
}

/// Trained (or freshly initialized) model: config, vocabulary and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StyleModel {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
}

/// Graph handles of every model parameter.
#[derive(Clone, Copy)]
pub(crate) struct Net {
    emb: Var,
    enc: GruCell,
    enc_zw: Var,
    enc_zb: Var,
    gen: GruCell,
    init_w: Var,
    init_b: Var,
    out_w: Var,
    out_b: Var,
    d_emb: Var,
    d_w: Var,
    d_b: Var,
    dz_w: Var,
    dz_b: Var,
    hidden: usize,
}

impl Net {
    pub(crate) fn register<'p>(g: &mut Graph<'p>, p: &'p ParamSet) -> Result<Net> {
        let hidden = p.get("enc.u_u")?.shape()[0];
        Ok(Net {
            emb: g.param_from(p, "emb")?,
            enc: GruCell::register(g, p, "enc")?,
            enc_zw: g.param_from(p, "enc.z.w")?,
            enc_zb: g.param_from(p, "enc.z.b")?,
            gen: GruCell::register(g, p, "gen")?,
            init_w: g.param_from(p, "gen.init.w")?,
            init_b: g.param_from(p, "gen.init.b")?,
            out_w: g.param_from(p, "gen.out.w")?,
            out_b: g.param_from(p, "gen.out.b")?,
            d_emb: g.param_from(p, "d.emb")?,
            d_w: g.param_from(p, "d.w")?,
            d_b: g.param_from(p, "d.b")?,
            dz_w: g.param_from(p, "dz.w")?,
            dz_b: g.param_from(p, "dz.b")?,
            hidden,
        })
    }

    /// Embeddings of hard token ids.
    pub(crate) fn embed_ids(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Vec<Var>> {
        ids.iter().map(|&id| g.row(self.emb, id)).collect()
    }

    /// Probability-weighted embedding averages of soft tokens.
    pub(crate) fn embed_soft(&self, g: &mut Graph<'_>, soft: &[Var]) -> Result<Vec<Var>> {
        soft.iter().map(|&p| g.affine_t(self.emb, p)).collect()
    }

    /// Final encoder state mapped to the latent mean.
    pub(crate) fn encode(&self, g: &mut Graph<'_>, inputs: &[Var]) -> Result<Var> {
        let mut h = g.input(vec![0.0; self.hidden]);
        for &x in inputs {
            h = self.enc.step(g, h, x)?;
        }
        g.affine(self.enc_zw, h, Some(self.enc_zb))
    }

    fn init_state(&self, g: &mut Graph<'_>, z: Var, code: StyleCode) -> Result<Var> {
        let c = g.input(code.one_hot().to_vec());
        let zc = g.concat(z, c);
        let pre = g.affine(self.init_w, zc, Some(self.init_b))?;
        Ok(g.tanh(pre))
    }

    /// Mean teacher-forced NLL of `target` (tokens followed by EOS).
    pub(crate) fn reconstruction(
        &self,
        g: &mut Graph<'_>,
        z: Var,
        code: StyleCode,
        target: &[usize],
    ) -> Result<Var> {
        let mut h = self.init_state(g, z, code)?;
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(target.len());
        for &tok in target {
            let x = g.row(self.emb, prev)?;
            h = self.gen.step(g, h, x)?;
            let logits = g.affine(self.out_w, h, Some(self.out_b))?;
            terms.push((g.nll(logits, tok)?, 1.0 / target.len() as f64));
            prev = tok;
        }
        g.weighted_sum(&terms)
    }

    /// Soft decoding for `steps` steps, feeding back weighted embeddings.
    pub(crate) fn generate_soft(
        &self,
        g: &mut Graph<'_>,
        z: Var,
        code: StyleCode,
        tau: f64,
        steps: usize,
    ) -> Result<Vec<Var>> {
        let mut h = self.init_state(g, z, code)?;
        let mut x = g.row(self.emb, BOS)?;
        let mut out = Vec::with_capacity(steps);
        for _ in 0..steps {
            h = self.gen.step(g, h, x)?;
            let logits = g.affine(self.out_w, h, Some(self.out_b))?;
            let p = g.softmax(logits, tau)?;
            x = g.affine_t(self.emb, p)?;
            out.push(p);
        }
        Ok(out)
    }

    /// Greedy decoding; returns raw ids up to (excluding) EOS.
    pub(crate) fn generate_greedy(
        &self,
        g: &mut Graph<'_>,
        z: Var,
        code: StyleCode,
        max_steps: usize,
    ) -> Result<Vec<usize>> {
        let mut h = self.init_state(g, z, code)?;
        let mut prev = BOS;
        let mut ids = Vec::new();
        for _ in 0..max_steps {
            let x = g.row(self.emb, prev)?;
            h = self.gen.step(g, h, x)?;
            let logits = g.affine(self.out_w, h, Some(self.out_b))?;
            let tok = argmax(g.value(logits));
            if tok == EOS {
                break;
            }
            ids.push(tok);
            prev = tok;
        }
        Ok(ids)
    }

    /// Style discriminator logits over soft (or one-hot) token distributions.
    pub(crate) fn style_logits_soft(&self, g: &mut Graph<'_>, soft: &[Var]) -> Result<Var> {
        let embs: Vec<Var> = soft
            .iter()
            .map(|&p| g.affine_t(self.d_emb, p))
            .collect::<Result<_>>()?;
        let pooled = g.mean(&embs)?;
        g.affine(self.d_w, pooled, Some(self.d_b))
    }

    /// Style discriminator logits over hard ids (same function as on one-hot input).
    pub(crate) fn style_logits_ids(&self, g: &mut Graph<'_>, ids: &[usize]) -> Result<Var> {
        let embs: Vec<Var> = ids
            .iter()
            .map(|&id| g.row(self.d_emb, id))
            .collect::<Result<_>>()?;
        let pooled = g.mean(&embs)?;
        g.affine(self.d_w, pooled, Some(self.d_b))
    }

    pub(crate) fn latent_logits(&self, g: &mut Graph<'_>, z: Var) -> Result<Var> {
        g.affine(self.dz_w, z, Some(self.dz_b))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    arch: ArchKind,
    config: TrainConfig,
    seed: u64,
    vocab: Vec<String>,
    tensors: ParamSet,
}

impl StyleModel {
    /// Seeded uniform(−0.08, 0.08) initialization of every parameter.
    pub fn init(config: TrainConfig, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed, STREAM_INIT);
        let (v, e, h, z) = (vocab.len(), config.embed_dim, config.hidden_dim, config.z_dim);
        let mut p = ParamSet::new();
        let add = |p: &mut ParamSet, name: &str, shape: &[usize], rng: &mut _| {
            p.insert(name, Tensor::uniform(shape, INIT_BOUND, rng))
        };
        add(&mut p, "emb", &[v, e], &mut rng)?;
        init_gru(&mut p, "enc", e, h, &mut rng)?;
        add(&mut p, "enc.z.w", &[z, h], &mut rng)?;
        add(&mut p, "enc.z.b", &[z], &mut rng)?;
        init_gru(&mut p, "gen", e, h, &mut rng)?;
        add(&mut p, "gen.init.w", &[h, z + 2], &mut rng)?;
        add(&mut p, "gen.init.b", &[h], &mut rng)?;
        add(&mut p, "gen.out.w", &[v, h], &mut rng)?;
        add(&mut p, "gen.out.b", &[v], &mut rng)?;
        add(&mut p, "d.emb", &[v, e], &mut rng)?;
        add(&mut p, "d.w", &[2, e], &mut rng)?;
        add(&mut p, "d.b", &[2], &mut rng)?;
        add(&mut p, "dz.w", &[2, z], &mut rng)?;
        add(&mut p, "dz.b", &[2], &mut rng)?;
        Ok(StyleModel {
            config,
            vocab,
            params: p,
        })
    }

    /// Token ids followed by EOS, truncated to fit `max_len` with BOS.
    pub fn target_ids(&self, x: &Sentence) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .vocab
            .ids(x)
            .into_iter()
            .take(self.config.max_len - 2)
            .collect();
        ids.push(EOS);
        ids
    }

    /// Evaluation-mode (noise-free) encoding.
    pub fn encode(&self, x: &Sentence) -> Result<LatentVector> {
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let inputs = net.embed_ids(&mut g, &self.target_ids(x))?;
        let z = net.encode(&mut g, &inputs)?;
        Ok(LatentVector(g.value(z).to_vec()))
    }

    /// Training-mode encoding: mean plus N(0, σ_z²) noise.
    pub fn encode_noisy<R: Rng>(&self, x: &Sentence, rng: &mut R) -> Result<LatentVector> {
        let mut z = self.encode(x)?;
        let noise = sample_noise(self.config.z_dim, self.config.sigma_z, rng)?;
        for (v, n) in z.0.iter_mut().zip(noise) {
            *v += n;
        }
        Ok(z)
    }

    fn check_latent(&self, z: &LatentVector) -> Result<()> {
        if z.0.len() != self.config.z_dim {
            return Err(Error::Shape(format!(
                "latent vector has {} dims, model expects {}",
                z.0.len(),
                self.config.z_dim
            )));
        }
        Ok(())
    }

    /// Soft generation for `max_len − 1` steps.
    pub fn generate_soft(&self, z: &LatentVector, c: StyleCode, tau: f64) -> Result<SoftSentence> {
        self.generate_soft_steps(z, c, tau, self.config.max_len - 1)
    }

    pub fn generate_soft_steps(
        &self,
        z: &LatentVector,
        c: StyleCode,
        tau: f64,
        steps: usize,
    ) -> Result<SoftSentence> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let zv = g.input(z.0.clone());
        let soft = net.generate_soft(&mut g, zv, c, tau, steps)?;
        Ok(SoftSentence {
            steps: soft.iter().map(|&p| g.value(p).to_vec()).collect(),
        })
    }

    /// Greedy decoding with special tokens stripped; an empty result becomes `[<unk>]`.
    pub fn generate_greedy(&self, z: &LatentVector, c: StyleCode) -> Result<Sentence> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let zv = g.input(z.0.clone());
        let ids = net.generate_greedy(&mut g, zv, c, self.config.max_len - 1)?;
        let tokens: Vec<String> = ids
            .into_iter()
            .filter(|&id| id >= NUM_SPECIALS)
            .filter_map(|id| self.vocab.token(id).map(str::to_owned))
            .collect();
        if tokens.is_empty() {
            return Sentence::from_tokens(["<unk>"]);
        }
        Sentence::from_tokens(tokens)
    }

    /// Mean per-token NLL of `x` under teacher forcing from `(z, c)`.
    pub fn reconstruction_loss(&self, x: &Sentence, z: &LatentVector, c: StyleCode) -> Result<f64> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let zv = g.input(z.0.clone());
        let loss = net.reconstruction(&mut g, zv, c, &self.target_ids(x))?;
        Ok(g.scalar(loss))
    }

    fn soft_vars(&self, g: &mut Graph<'_>, soft: &SoftSentence) -> Result<Vec<Var>> {
        if soft.is_empty() {
            return Err(Error::Shape("empty soft sentence".into()));
        }
        let v = self.vocab.len();
        soft.steps
            .iter()
            .map(|s| {
                if s.len() != v {
                    return Err(Error::Shape(format!("soft step of width {} vs vocab {v}", s.len())));
                }
                Ok(g.input(s.clone()))
            })
            .collect()
    }

    /// `−ln q_D(c | G̃)`.
    pub fn attribute_loss(&self, soft: &SoftSentence, c: StyleCode) -> Result<f64> {
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let steps = self.soft_vars(&mut g, soft)?;
        let logits = net.style_logits_soft(&mut g, &steps)?;
        let loss = g.nll(logits, c.label().index())?;
        Ok(g.scalar(loss))
    }

    /// `½‖E(G̃) − z‖²`.
    pub fn independence_loss(&self, soft: &SoftSentence, z: &LatentVector) -> Result<f64> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let steps = self.soft_vars(&mut g, soft)?;
        let inputs = net.embed_soft(&mut g, &steps)?;
        let re = net.encode(&mut g, &inputs)?;
        let zv = g.input(z.0.clone());
        let loss = g.half_sq_dist(re, zv)?;
        Ok(g.scalar(loss))
    }

    /// `−ln q_{D_z}(c | z)`.
    pub fn latent_style_discriminator_loss(&self, z: &LatentVector, c: StyleCode) -> Result<f64> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let zv = g.input(z.0.clone());
        let logits = net.latent_logits(&mut g, zv)?;
        let loss = g.nll(logits, c.label().index())?;
        Ok(g.scalar(loss))
    }

    /// Raw cosines `(cos(E(G̃(E(x), c)), E(x)), cos(E(G̃(E(x), c̄)), E(x)))` at evaluation time.
    pub fn cosine_pair(&self, x: &Sentence, c: StyleCode, tau: f64) -> Result<(f64, f64)> {
        let mut g = Graph::new();
        let net = Net::register(&mut g, &self.params)?;
        let ids = self.target_ids(x);
        let inputs = net.embed_ids(&mut g, &ids)?;
        let z = net.encode(&mut g, &inputs)?;
        let mut cos = [0.0; 2];
        for (slot, code) in cos.iter_mut().zip([c, c.inverse()]) {
            let soft = net.generate_soft(&mut g, z, code, tau, ids.len())?;
            let emb = net.embed_soft(&mut g, &soft)?;
            let re = net.encode(&mut g, &emb)?;
            let cos_var = g.cosine(re, z)?;
            *slot = g.scalar(cos_var);
        }
        Ok((cos[0], cos[1]))
    }

    /// `(1 − cos(E(G̃(E(x), c)), E(x)), 1 − cos(E(G̃(E(x), c̄)), E(x)))`.
    pub fn cosine_pair_loss(&self, x: &Sentence, c: StyleCode, tau: f64) -> Result<(f64, f64)> {
        let (a, b) = self.cosine_pair(x, c, tau)?;
        Ok((1.0 - a, 1.0 - b))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            version: CHECKPOINT_VERSION,
            arch: self.config.arch,
            config: self.config.clone(),
            seed: self.config.seed,
            vocab: self.vocab.words().to_vec(),
            tensors: self.params.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!("unsupported checkpoint version {}", file.version)));
        }
        if file.arch != file.config.arch {
            return Err(Error::Config("checkpoint arch disagrees with its config".into()));
        }
        let vocab = Vocab::from_tokens(file.vocab)?;
        let emb = file.tensors.get("emb")?;
        if emb.shape()[0] != vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "embedding has {} rows, vocabulary {} entries",
                emb.shape()[0],
                vocab.len()
            )));
        }
        Ok(StyleModel {
            config: file.config,
            vocab,
            params: file.tensors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        StyleModel::from_json(&text)
    }
}

pub(crate) fn sample_noise<R: Rng>(dim: usize, sigma: f64, rng: &mut R) -> Result<Vec<f64>> {
    if sigma == 0.0 {
        return Ok(vec![0.0; dim]);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    Ok((0..dim).map(|_| normal.sample(rng)).collect())
}
