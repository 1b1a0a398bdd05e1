//! The duplicate-replacement audit: replacing wrong-style outputs by the
//! closest correct-style outputs of the same batch drives accuracy to 1.0
//! without building a better system.
//!
//! Writes `sweep.csv` to the current directory.

use styleval::architectures::{TransferBatch, TransferRecord};
use styleval::classifier::train_classifier;
use styleval::corpus::{synth_corpus, synth_references};
use styleval::manipulation::{manipulate, save_sweep, sweep};

fn main() -> styleval::Result<()> {
    let test = synth_corpus(1001, 100)?;
    let refs = synth_references(&test);
    let clf = train_classifier(&synth_corpus(11, 200)?, 50, 0.1, 0)?;

    // a stand-in system: gold rewrites, except every third input is copied
    let batch = TransferBatch::new(
        test.items
            .iter()
            .zip(&refs)
            .enumerate()
            .map(|(i, ((x, l), r))| {
                let out = if i % 3 == 0 { x.clone() } else { r.clone() };
                TransferRecord::new(x.clone(), *l, out)
            })
            .collect(),
    );

    let points = sweep(&batch, Some(&refs), &clf, &clf)?;
    println!("k  accuracy  self-BLEU  ref-BLEU");
    for p in &points {
        println!("{:<2} {:>8.3} {:>10.2} {:>9.2}", p.k, p.accuracy, p.self_bleu, p.ref_bleu.unwrap());
    }
    save_sweep(&points, "sweep.csv")?;

    let full = manipulate(&batch, &clf, 10)?;
    let changed = full
        .batch
        .records
        .iter()
        .zip(&batch.records)
        .find(|(a, b)| a.output != b.output)
        .expect("some record was replaced");
    println!("example replacement for {:?}: {} -> {}", changed.0.input.to_string(), changed.1.output, changed.0.output);
    println!("records left unreplaced: {:?}", full.unreplaced);
    Ok(())
}
