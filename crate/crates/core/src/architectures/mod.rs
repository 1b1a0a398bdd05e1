//! The four style-transfer models: a GRU autoencoder with attribute and
//! independence losses (`baseline`), plus an adversarial latent
//! discriminator (`disc`), plus cosine re-encoding losses (`sae`), or both
//! (`combo`).

mod config;
mod model;
mod objective;
mod train;
mod transfer;

pub use config::{ArchKind, TrainConfig};
pub use model::{
    LatentVector, SoftSentence, StyleCode, StyleModel, GENERATOR_PARAMS, LATENT_DISC_PARAMS,
    STYLE_DISC_PARAMS,
};
pub use objective::{
    generator_objective, latent_discriminator_batch, objective, style_discriminator_batch,
    Example, LossParts, LossWeights,
};
pub use train::{
    generator_step, latent_discriminator_step, train, train_into, EpochLog, Optimizers,
    TrainingLog, TRAINING_LOG_HEADER,
};
pub use transfer::{transfer, TransferBatch, TransferRecord};

#[cfg(test)]
#[allow(clippy::approx_constant)] // oracles are stated to four decimals
mod tests {
    use super::model::Net;
    use super::*;
    use crate::corpus::{build_vocab, tokenize, Label, LabeledCorpus, Sentence, Vocab, EOS};
    use crate::difcore::{cosine_similarity, grad_check, seeded_rng, Graph, ParamSet, Tensor};
    use crate::error::Error;

    const LN2: f64 = std::f64::consts::LN_2;

    fn s(text: &str) -> Sentence {
        tokenize(text).unwrap()
    }

    /// Two sentences over a vocabulary of 8 (4 specials + 4 words).
    fn toy_corpus() -> LabeledCorpus {
        LabeledCorpus::new(vec![(s("a b c"), Label::Positive), (s("d c"), Label::Negative)])
    }

    fn toy_config(arch: ArchKind, seed: u64) -> TrainConfig {
        TrainConfig {
            embed_dim: 3,
            hidden_dim: 4,
            z_dim: 3,
            max_len: 6,
            batch_size: 2,
            seed,
            ..TrainConfig::new(arch)
        }
    }

    fn toy_model(arch: ArchKind, seed: u64) -> StyleModel {
        let vocab = build_vocab(&toy_corpus(), 100).unwrap();
        assert_eq!(vocab.len(), 8);
        let mut m = StyleModel::init(toy_config(arch, seed), vocab).unwrap();
        // wider than the default init so gradients are far from trivial
        let names: Vec<String> = m.params.names().cloned().collect();
        let mut rng = seeded_rng(seed, 99);
        for n in names {
            let t = m.params.get_mut(&n).unwrap();
            let shape = t.shape().to_vec();
            *t = Tensor::uniform(&shape, 0.5, &mut rng);
        }
        m
    }

    fn zero(m: &mut StyleModel, name: &str) {
        let t = m.params.get_mut(name).unwrap();
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }

    fn set(m: &mut StyleModel, name: &str, values: &[f64]) {
        let t = m.params.get_mut(name).unwrap();
        t.data_mut().copy_from_slice(values);
    }

    #[test]
    fn encode_zero_network_and_determinism() {
        let mut m = toy_model(ArchKind::Baseline, 0);
        let x = s("a b c");
        assert_eq!(m.encode(&x).unwrap(), m.encode(&x).unwrap());
        let names: Vec<String> = m.params.names().filter(|n| n.starts_with("enc.")).cloned().collect();
        for n in names {
            zero(&mut m, &n);
        }
        assert_eq!(m.encode(&x).unwrap().0, vec![0.0; 3]);
    }

    #[test]
    fn encode_noise_monte_carlo() {
        let m = toy_model(ArchKind::Baseline, 1);
        let x = s("a b c");
        let mean = m.encode(&x).unwrap();
        let mut rng = seeded_rng(5, 3);
        let n = 10_000;
        let mut acc = [0.0; 3];
        let first = m.encode_noisy(&x, &mut rng).unwrap();
        assert_ne!(first, m.encode_noisy(&x, &mut rng).unwrap());
        for _ in 0..n {
            let z = m.encode_noisy(&x, &mut rng).unwrap();
            for (a, v) in acc.iter_mut().zip(&z.0) {
                *a += v / n as f64;
            }
        }
        let bound = 3.0 * m.config.sigma_z / (n as f64).sqrt();
        for (a, e) in acc.iter().zip(&mean.0) {
            assert!((a - e).abs() <= bound, "{a} vs {e}");
        }
    }

    #[test]
    fn soft_generation_properties() {
        let m = toy_model(ArchKind::Baseline, 2);
        let z = m.encode(&s("a b")).unwrap();
        let c = StyleCode::new(Label::Positive);
        for tau in [0.1, 1.0, 3.0] {
            let soft = m.generate_soft(&z, c, tau).unwrap();
            assert_eq!(soft.len(), m.config.max_len - 1);
            for step in &soft.steps {
                assert!((step.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            assert_eq!(soft, m.generate_soft(&z, c, tau).unwrap());
        }
        // a peaked model: output logits scaled up
        let mut peaked = m.clone();
        for name in ["gen.out.w", "gen.out.b"] {
            peaked.params.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v *= 20.0);
        }
        let soft = peaked.generate_soft(&z, c, 0.01).unwrap();
        for step in &soft.steps {
            let max = step.iter().cloned().fold(0.0, f64::max);
            assert!(1.0 - max < 1e-3, "{step:?}");
        }
    }

    #[test]
    fn greedy_degenerate_and_stepwise_oracle() {
        let mut m = toy_model(ArchKind::Baseline, 3);
        let z = m.encode(&s("a b")).unwrap();
        let c = StyleCode::new(Label::Negative);
        let out = m.generate_greedy(&z, c).unwrap();
        assert_eq!(out, m.generate_greedy(&z, c).unwrap());

        // step-1 oracle: greedy's first raw id is the argmax of the first soft step
        let soft = m.generate_soft(&z, c, 1e-3).unwrap();
        let first = super::model::argmax(&soft.steps[0]);
        let mut g = Graph::new();
        let net = Net::register(&mut g, &m.params).unwrap();
        let zv = g.input(z.0.clone());
        let ids = net.generate_greedy(&mut g, zv, c, 1).unwrap();
        if first == EOS {
            assert!(ids.is_empty());
        } else {
            assert_eq!(ids, [first]);
        }

        let mut b = vec![0.0; m.vocab.len()];
        b[EOS] = 1e3;
        set(&mut m, "gen.out.b", &b);
        assert_eq!(m.generate_greedy(&z, c).unwrap(), s("<unk>"));
    }

    #[test]
    fn reconstruction_uniform_decoder() {
        let vocab = Vocab::from_tokens(Vec::<String>::new()).unwrap();
        assert_eq!(vocab.len(), 4);
        let mut m = StyleModel::init(TrainConfig::desk(ArchKind::Baseline), vocab).unwrap();
        zero(&mut m, "gen.out.w");
        zero(&mut m, "gen.out.b");
        let x = s("anything at all");
        let z = m.encode(&x).unwrap();
        let loss = m.reconstruction_loss(&x, &z, StyleCode::new(Label::Positive)).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn discriminator_loss_examples() {
        let mut m = toy_model(ArchKind::Disc, 4);
        let z = m.encode(&s("a b")).unwrap();
        let c = StyleCode::new(Label::Negative);
        let soft = m.generate_soft(&z, c, 0.5).unwrap();
        zero(&mut m, "d.w");
        zero(&mut m, "d.b");
        assert!((m.attribute_loss(&soft, c).unwrap() - LN2).abs() < 1e-12);
        set(&mut m, "d.b", &[0.0, 3f64.ln()]);
        assert!((m.attribute_loss(&soft, c).unwrap() - 4f64.ln()).abs() < 1e-12);
        set(&mut m, "d.b", &[800.0, 0.0]);
        assert!(m.attribute_loss(&soft, c).unwrap() < 1e-12);

        zero(&mut m, "dz.w");
        zero(&mut m, "dz.b");
        assert!((m.latent_style_discriminator_loss(&z, c).unwrap() - LN2).abs() < 1e-12);
        assert!((m.latent_style_discriminator_loss(&z, c).unwrap() - 0.6931).abs() < 1e-4);
        set(&mut m, "dz.b", &[800.0, 0.0]);
        assert!(m.latent_style_discriminator_loss(&z, c).unwrap() < 1e-12);
    }

    #[test]
    fn independence_loss_examples() {
        let mut cfg = toy_config(ArchKind::Baseline, 5);
        cfg.z_dim = 2;
        let vocab = build_vocab(&toy_corpus(), 100).unwrap();
        let mut m = StyleModel::init(cfg, vocab).unwrap();
        let soft = SoftSentence::one_hot(&[4, 5, EOS], m.vocab.len());
        zero(&mut m, "enc.z.w");
        zero(&mut m, "enc.z.b");
        let loss = m.independence_loss(&soft, &LatentVector(vec![1.0, 0.0])).unwrap();
        assert!((loss - 0.5).abs() < 1e-12);
        assert_eq!(m.independence_loss(&soft, &LatentVector(vec![0.0, 0.0])).unwrap(), 0.0);
        assert!(matches!(
            m.independence_loss(&soft, &LatentVector(vec![0.0; 3])),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn cosine_loss_forms() {
        let a = Tensor::vector(vec![1.0, 0.0]).unwrap();
        let b = Tensor::vector(vec![1.0, 1.0]).unwrap();
        let loss = 1.0 - cosine_similarity(&a, &b).unwrap();
        assert!((loss - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((loss - 0.2929).abs() < 1e-4);

        let m = toy_model(ArchKind::Sae, 6);
        let x = s("a b c");
        let c = StyleCode::new(Label::Positive);
        let (cs, cn) = m.cosine_pair(&x, c, 0.5).unwrap();
        let (ls, ln) = m.cosine_pair_loss(&x, c, 0.5).unwrap();
        assert!((ls - (1.0 - cs)).abs() < 1e-15 && (ln - (1.0 - cn)).abs() < 1e-15);
        assert!((0.0..=2.0).contains(&ls) && (0.0..=2.0).contains(&ln));

        let mut zeroed = m.clone();
        for n in ["enc.z.w", "enc.z.b"] {
            zero(&mut zeroed, n);
        }
        assert!(matches!(zeroed.cosine_pair(&x, c, 0.5), Err(Error::ZeroVector)));
    }

    fn toy_examples(m: &StyleModel) -> Vec<Example> {
        toy_corpus()
            .items
            .iter()
            .map(|(x, l)| Example {
                ids: m.target_ids(x),
                label: *l,
            })
            .collect()
    }

    #[test]
    fn every_objective_passes_grad_check() {
        for arch in ArchKind::ALL {
            for seed in 0..5 {
                let m = toy_model(arch, seed);
                let weights = LossWeights::from_config(&m.config);
                let examples = toy_examples(&m);
                let mut rng = seeded_rng(seed, 8);
                let noises: Vec<Vec<f64>> = examples
                    .iter()
                    .map(|_| super::model::sample_noise(3, 0.1, &mut rng).unwrap())
                    .collect();
                let f = |p: &ParamSet| {
                    let mut total = 0.0;
                    let mut grads = p.zeros_like();
                    for (ex, noise) in examples.iter().zip(&noises) {
                        let (_, v, g) = generator_objective(p, &weights, ex, noise, 0.7)?;
                        total += v / 2.0;
                        g.accumulate_param_grads(&mut grads, 0.5);
                    }
                    Ok((total, grads))
                };
                let err = grad_check(f, &m.params, 1e-5).unwrap();
                assert!(err < 1e-4, "{arch} seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn discriminator_objectives_pass_grad_check() {
        for seed in 0..5 {
            let m = toy_model(ArchKind::Combo, seed);
            let examples = toy_examples(&m);
            let refs: Vec<&Example> = examples.iter().collect();
            let f = |p: &ParamSet| {
                let (v, g) = style_discriminator_batch(p, &refs)?;
                Ok((v, g.param_grads()))
            };
            assert!(grad_check(f, &m.params, 1e-5).unwrap() < 1e-4);
            let zs = vec![(vec![0.3, -0.2, 0.9], Label::Positive), (vec![-0.5, 0.1, 0.0], Label::Negative)];
            let f = |p: &ParamSet| {
                let (v, g) = latent_discriminator_batch(p, &zs)?;
                Ok((v, g.param_grads()))
            };
            assert!(grad_check(f, &m.params, 1e-5).unwrap() < 1e-4);
        }
    }

    fn latent_batch(m: &StyleModel) -> Vec<(Vec<f64>, Label)> {
        toy_corpus()
            .items
            .iter()
            .map(|(x, l)| (m.encode(x).unwrap().0, *l))
            .collect()
    }

    fn mean_dz_loss(m: &StyleModel, batch: &[(Vec<f64>, Label)]) -> f64 {
        batch
            .iter()
            .map(|(z, l)| {
                m.latent_style_discriminator_loss(&LatentVector(z.clone()), StyleCode::new(*l))
                    .unwrap()
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    #[test]
    fn adversarial_direction() {
        for seed in 0..5 {
            let mut m = toy_model(ArchKind::Disc, seed);
            let mut opt = Optimizers::new(&m);
            // discriminator step on a frozen batch lowers L_Dz
            let frozen = latent_batch(&m);
            let before = mean_dz_loss(&m, &frozen);
            latent_discriminator_step(&mut m, &mut opt, &frozen).unwrap();
            assert!(mean_dz_loss(&m, &frozen) < before, "seed {seed}");

            // generator step on the −λ L_Dz term with D_z frozen does not lower it
            let weights = LossWeights {
                dz: -m.config.lambda_dz,
                ..LossWeights::zero()
            };
            let examples = toy_examples(&m);
            let zero_noise = vec![0.0; m.config.z_dim];
            let batch: Vec<(&Example, Vec<f64>)> =
                examples.iter().map(|e| (e, zero_noise.clone())).collect();
            let dz_before = m.params.filter_prefix(&LATENT_DISC_PARAMS);
            let l0 = mean_dz_loss(&m, &latent_batch(&m));
            generator_step(&mut m, &mut opt, &weights, &batch, 0.5).unwrap();
            assert_eq!(m.params.filter_prefix(&LATENT_DISC_PARAMS), dz_before);
            let l1 = mean_dz_loss(&m, &latent_batch(&m));
            assert!(l1 >= l0 - 1e-9, "seed {seed}: {l0} -> {l1}");
        }
    }

    #[test]
    fn sae_cosine_losses_decrease() {
        let mut m = toy_model(ArchKind::Sae, 7);
        let mut opt = Optimizers::new(&m);
        let weights = LossWeights {
            cos: 1.0,
            cosneg: 1.0,
            ..LossWeights::zero()
        };
        let examples = toy_examples(&m);
        let zero_noise = vec![0.0; m.config.z_dim];
        let batch: Vec<(&Example, Vec<f64>)> = examples.iter().map(|e| (e, zero_noise.clone())).collect();
        let total = |m: &StyleModel| -> f64 {
            toy_corpus()
                .items
                .iter()
                .map(|(x, l)| {
                    let (a, b) = m.cosine_pair_loss(x, StyleCode::new(*l), 0.5).unwrap();
                    a + b
                })
                .sum()
        };
        let start = total(&m);
        for _ in 0..50 {
            generator_step(&mut m, &mut opt, &weights, &batch, 0.5).unwrap();
        }
        let end = total(&m);
        assert!(end < start, "{start} -> {end}");
    }

    #[test]
    fn training_contracts() {
        let corpus = crate::corpus::synth_corpus(3, 20).unwrap();
        let mut cfg = TrainConfig::desk(ArchKind::Combo);
        cfg.epochs = 3;
        let (a, log) = train(&corpus, &cfg).unwrap();
        let (b, _) = train(&corpus, &cfg).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(log.epochs.len(), 3);
        let taus = log.taus();
        assert!(taus.windows(2).all(|w| w[1] <= w[0]) && taus.iter().all(|&t| t >= cfg.tau_min));
        let csv = log.to_csv();
        assert!(csv.starts_with(TRAINING_LOG_HEADER));
        assert_eq!(csv.lines().count(), 4);
        assert!(log.epochs.iter().all(|e| e.parts.dz.is_some() && e.parts.cos.is_some()));
        let restored = StyleModel::from_json(&a.to_json().unwrap()).unwrap();
        assert_eq!(restored, a);

        let mut base = cfg.clone();
        base.arch = ArchKind::Baseline;
        base.lambda_dz = 0.0;
        base.lambda_cos = 0.0;
        base.lambda_cosneg = 0.0;
        let (_, log) = train(&corpus, &base).unwrap();
        // inactive parts are empty CSV fields
        let row = log.to_csv().lines().nth(1).unwrap().to_string();
        assert_eq!(row.split(',').filter(|f| f.is_empty()).count(), 3);
    }

    #[test]
    fn training_rejects_bad_inputs() {
        let corpus = crate::corpus::synth_corpus(3, 20).unwrap();
        let mut cfg = TrainConfig::desk(ArchKind::Sae);
        cfg.lambda_cos = 0.0;
        assert!(matches!(train(&corpus, &cfg), Err(Error::Config(_))));
        let one_label = LabeledCorpus::new(vec![(s("a b"), Label::Positive)]);
        assert!(matches!(
            train(&one_label, &TrainConfig::desk(ArchKind::Sae)),
            Err(Error::DegenerateCorpus)
        ));
    }

    #[test]
    fn divergence_is_reported_with_partial_log() {
        let corpus = crate::corpus::synth_corpus(3, 20).unwrap();
        let mut cfg = TrainConfig::desk(ArchKind::Baseline);
        cfg.epochs = 5;
        cfg.lr = 1e305;
        let mut log = TrainingLog::default();
        match train_into(&corpus, &cfg, &mut log) {
            Err(Error::Divergence { epoch, .. }) => assert_eq!(log.epochs.len(), epoch - 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn transfer_contracts() {
        let corpus = crate::corpus::synth_corpus(4, 20).unwrap();
        let mut cfg = TrainConfig::desk(ArchKind::Baseline);
        cfg.epochs = 2;
        let (model, _) = train(&corpus, &cfg).unwrap();
        let batch = transfer(&model, &corpus).unwrap();
        assert_eq!(batch.len(), corpus.len());
        assert!(batch.records.iter().all(|r| r.target_code == r.source_code.inverse()));
        assert_eq!(batch, transfer(&model, &corpus).unwrap());
        let parsed = TransferBatch::parse_tsv(&batch.to_tsv()).unwrap();
        assert_eq!(parsed, batch);
        assert!(TransferBatch::parse_tsv("a\tb\n").is_err());
        assert!(TransferBatch::parse_tsv("a\tb\t2\n").is_err());
    }
}
