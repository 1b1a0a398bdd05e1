//! Train each architecture on the synthetic corpus, transfer a held-out split
//! and score it.
//!
//! `cargo run --release --example train_architectures -- [epochs]`

use std::time::Instant;

use styleval::architectures::{train, transfer, ArchKind, TrainConfig};
use styleval::classifier::train_classifier;
use styleval::corpus::{synth_corpus, synth_references};
use styleval::metrics::evaluate_batch;

fn main() -> styleval::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(30);
    let corpus = synth_corpus(1, 200)?;
    let test = synth_corpus(1001, 100)?;
    let refs = synth_references(&test);
    let clf = train_classifier(&synth_corpus(11, 200)?, 50, 0.1, 0)?;

    for arch in ArchKind::ALL {
        let cfg = TrainConfig { epochs, ..TrainConfig::desk(arch) };
        let start = Instant::now();
        let (model, log) = train(&corpus, &cfg)?;
        let first = &log.epochs[0];
        let last = log.epochs.last().expect("at least one epoch");
        println!("== {arch} ({:.1}s)", start.elapsed().as_secs_f64());
        println!("   epoch 1:  {}", first.parts);
        println!("   epoch {}: {}", last.epoch, last.parts);
        let batch = transfer(&model, &test)?;
        let m = evaluate_batch(&batch, &clf, Some(&refs))?;
        println!(
            "   accuracy {:.2}  self-BLEU {:.2}  ref-BLEU {:.2}",
            m.accuracy,
            m.self_bleu,
            m.ref_bleu.unwrap_or(f64::NAN)
        );
        for r in batch.records.iter().take(2) {
            println!("   {}  =>  {}", r.input, r.output);
        }
    }
    Ok(())
}
