//! Corpus BLEU and smoothed sentence BLEU on a few hand-checkable pairs.
//!
//! Run with `cargo run --example bleu`.

use styleval::corpus::tokenize;
use styleval::metrics::{corpus_bleu, modified_precision, sentence_bleu_smoothed};

fn main() -> styleval::Result<()> {
    let hyp = tokenize("the the the the the the the")?;
    let reference = tokenize("the cat is on the mat")?;
    let (clipped, total) = modified_precision(&[hyp], &[reference], 1)?;
    println!("clipped unigram precision: {clipped}/{total}");

    let short = [tokenize("a b c d e")?];
    let long = [tokenize("a b c d e f g h i j")?];
    let r = corpus_bleu(&short, &long)?;
    println!("half-length hypothesis: BP = {:.6}, BLEU = {:.4}", r.brevity_penalty, r.score);

    let hyps = [tokenize("the soup was great .")?, tokenize("staff were rude")?];
    let refs = [tokenize("the soup was great .")?, tokenize("staff were friendly")?];
    let r = corpus_bleu(&hyps, &refs)?;
    println!("corpus: p = {:?}, BLEU = {:.4}", r.precisions, r.score);

    for (h, r) in [("a b c d", "a b c e"), ("x", "y")] {
        let b = sentence_bleu_smoothed(&tokenize(h)?, &tokenize(r)?)?;
        println!("sentence_bleu_smoothed({h:?}, {r:?}) = {b:.4}");
    }
    Ok(())
}
