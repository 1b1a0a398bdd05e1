//! Train the logistic-regression style classifier on a synthetic corpus and
//! report held-out accuracy.

use styleval::classifier::{classifier_accuracy, train_classifier};
use styleval::corpus::synth_corpus;

fn main() -> styleval::Result<()> {
    let train = synth_corpus(11, 200)?;
    let held_out = synth_corpus(1001, 100)?;
    let clf = train_classifier(&train, 50, 0.1, 0)?;
    println!("train accuracy    {:.3}", classifier_accuracy(&clf, &train)?);
    println!("held-out accuracy {:.3}", classifier_accuracy(&clf, &held_out)?);
    for (s, label) in held_out.items.iter().take(4) {
        let (pred, p) = clf.predict(s);
        println!("{label:?} -> {pred:?} (p={p:.3}): {s}");
    }
    Ok(())
}
