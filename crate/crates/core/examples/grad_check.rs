//! Finite-difference verification of every generator objective on a tiny model.

use styleval::architectures::{generator_objective, ArchKind, Example, LossWeights, StyleModel, TrainConfig};
use styleval::corpus::{build_vocab, tokenize, Label, LabeledCorpus};
use styleval::difcore::{grad_check, ParamSet};

fn main() -> styleval::Result<()> {
    let corpus = LabeledCorpus::new(vec![
        (tokenize("the food was great")?, Label::Positive),
        (tokenize("service was rude")?, Label::Negative),
    ]);
    let vocab = build_vocab(&corpus, 100)?;
    for arch in ArchKind::ALL {
        for seed in 0..5 {
            let cfg = TrainConfig {
                embed_dim: 4,
                hidden_dim: 5,
                z_dim: 3,
                seed,
                ..TrainConfig::new(arch)
            };
            let model = StyleModel::init(cfg, vocab.clone())?;
            let weights = LossWeights::from_config(&model.config);
            let examples: Vec<Example> = corpus
                .items
                .iter()
                .map(|(s, l)| Example { ids: model.target_ids(s), label: *l })
                .collect();
            let noise = [0.01, -0.02, 0.03];
            let loss = |p: &ParamSet| {
                let mut total = 0.0;
                let mut grads = p.zeros_like();
                for ex in &examples {
                    let (_, v, g) = generator_objective(p, &weights, ex, &noise, 0.5)?;
                    total += v;
                    g.accumulate_param_grads(&mut grads, 1.0);
                }
                Ok((total, grads))
            };
            let err = grad_check(loss, &model.params, 1e-5)?;
            println!("{arch:<8} seed {seed}: max relative error {err:.2e}");
        }
    }
    Ok(())
}
