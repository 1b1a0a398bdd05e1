//! A system that returns its input unchanged scores perfect self-BLEU while
//! never changing the style.

use styleval::architectures::TransferBatch;
use styleval::classifier::{classifier_accuracy, train_classifier};
use styleval::corpus::synth_corpus;
use styleval::metrics::evaluate_batch;

fn main() -> styleval::Result<()> {
    let test = synth_corpus(1001, 100)?;
    let clf = train_classifier(&synth_corpus(11, 200)?, 50, 0.1, 0)?;
    println!("classifier held-out accuracy: {:.2}", classifier_accuracy(&clf, &test)?);
    let m = evaluate_batch(&TransferBatch::copy_inputs(&test), &clf, None)?;
    println!("copy-input system: self-BLEU {:.2}, transfer accuracy {:.2}", m.self_bleu, m.accuracy);
    Ok(())
}
