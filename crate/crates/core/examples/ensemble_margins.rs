//! Retrain two architectures under five seeds, report mean ± std, check
//! whether their margins overlap and list the accuracy/BLEU Pareto front.
//!
//! `cargo run --release --example ensemble_margins -- [epochs]`

use styleval::architectures::{ArchKind, TrainConfig};
use styleval::classifier::train_classifier;
use styleval::corpus::{synth_corpus, synth_references};
use styleval::rigor::{margins_overlap, pareto_front, run_ensemble, EnsembleSpec};

fn main() -> styleval::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(15);
    let corpus = synth_corpus(1, 200)?;
    let test = synth_corpus(1001, 100)?;
    let refs = synth_references(&test);
    let clf = train_classifier(&synth_corpus(11, 200)?, 50, 0.1, 0)?;

    let mut ensembles = Vec::new();
    for arch in [ArchKind::Baseline, ArchKind::Sae] {
        let cfg = TrainConfig { epochs, ..TrainConfig::desk(arch) };
        let spec = EnsembleSpec { train: &corpus, eval: &test, refs: Some(&refs), classifier: &clf, config: &cfg };
        let outcome = run_ensemble(&spec, 5, 0, 1)?;
        print!("{}", outcome.ensemble.render());
        ensembles.push(outcome.ensemble);
    }

    let (a, b) = (&ensembles[0], &ensembles[1]);
    for metric in ["accuracy", "self_bleu"] {
        let (ma, mb) = (a.metric(metric).unwrap(), b.metric(metric).unwrap());
        let verdict = if margins_overlap(ma.margin(), mb.margin()) {
            "overlap: no claimed difference"
        } else {
            "separated"
        };
        println!("{metric}: {} {ma:.3} vs {} {mb:.3} -> {verdict}", a.arch, b.arch);
    }

    // every individual run as an (accuracy, self-BLEU) point
    let points: Vec<(f64, f64)> = ensembles
        .iter()
        .flat_map(|e| e.runs.iter().map(|r| (r.accuracy, r.self_bleu)))
        .collect();
    println!("pareto front over all runs: {:?}", pareto_front(&points));
    Ok(())
}
