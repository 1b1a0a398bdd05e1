//! BLEU (corpus-level and smoothed sentence-level) and transfer accuracy.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::architectures::TransferBatch;
use crate::classifier::ClassifierModel;
use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 4;

/// Result of a BLEU computation on the 0–100 scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "BleuJson", from = "BleuJson")]
pub struct BleuReport {
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub score: f64,
}

#[derive(Serialize, Deserialize)]
struct BleuJson {
    p1: f64,
    p2: f64,
    p3: f64,
    p4: f64,
    bp: f64,
    score: f64,
}

impl From<BleuReport> for BleuJson {
    fn from(r: BleuReport) -> Self {
        let [p1, p2, p3, p4] = r.precisions;
        BleuJson {
            p1,
            p2,
            p3,
            p4,
            bp: r.brevity_penalty,
            score: r.score,
        }
    }
}

impl From<BleuJson> for BleuReport {
    fn from(j: BleuJson) -> Self {
        BleuReport {
            precisions: [j.p1, j.p2, j.p3, j.p4],
            brevity_penalty: j.bp,
            score: j.score,
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for gram in tokens.windows(n) {
            *counts.entry(gram).or_insert(0) += 1;
        }
    }
    counts
}

/// Clipped n-gram matches and total hypothesis n-grams for one pair.
fn pair_precision(hyp: &Sentence, reference: &Sentence, n: usize) -> (usize, usize) {
    let hyp_counts = ngram_counts(hyp.tokens(), n);
    let ref_counts = ngram_counts(reference.tokens(), n);
    let total = hyp.len().saturating_sub(n - 1);
    let clipped = hyp_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    (clipped, total)
}

fn check_alignment(hyps: &[Sentence], refs: &[Sentence]) -> Result<()> {
    if hyps.len() != refs.len() || hyps.is_empty() {
        return Err(Error::Alignment {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    Ok(())
}

/// Corpus-summed clipped matches and hypothesis n-gram totals for order `n`.
pub fn modified_precision(
    hyps: &[Sentence],
    refs: &[Sentence],
    n: usize,
) -> Result<(usize, usize)> {
    check_alignment(hyps, refs)?;
    if !(1..=MAX_ORDER).contains(&n) {
        return Err(Error::Config(format!("n-gram order must be 1..=4, got {n}")));
    }
    Ok(hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| pair_precision(h, r, n))
        .fold((0, 0), |(c, t), (pc, pt)| (c + pc, t + pt)))
}

/// Sufficient statistics for BLEU. Shards can be summed before finalizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub clipped: [usize; MAX_ORDER],
    pub total: [usize; MAX_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn from_pair(hyp: &Sentence, reference: &Sentence) -> Self {
        let mut stats = BleuStats {
            hyp_len: hyp.len(),
            ref_len: reference.len(),
            ..Default::default()
        };
        for n in 1..=MAX_ORDER {
            let (c, t) = pair_precision(hyp, reference, n);
            stats.clipped[n - 1] = c;
            stats.total[n - 1] = t;
        }
        stats
    }

    pub fn merge(mut self, other: &BleuStats) -> Self {
        for i in 0..MAX_ORDER {
            self.clipped[i] += other.clipped[i];
            self.total[i] += other.total[i];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
        self
    }

    fn brevity_penalty(&self) -> f64 {
        if self.hyp_len >= self.ref_len {
            1.0
        } else {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        }
    }

    fn report(&self, precisions: [f64; MAX_ORDER]) -> BleuReport {
        let bp = self.brevity_penalty();
        let score = if precisions.iter().any(|&p| p <= 0.0) {
            0.0
        } else {
            let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
            bp * log_mean.exp() * 100.0
        };
        BleuReport {
            precisions,
            brevity_penalty: bp,
            score,
        }
    }

    /// Unsmoothed BLEU. An order with no hypothesis n-grams has precision 0.
    pub fn finalize(&self) -> BleuReport {
        let mut p = [0.0; MAX_ORDER];
        for i in 0..MAX_ORDER {
            if self.total[i] > 0 {
                p[i] = self.clipped[i] as f64 / self.total[i] as f64;
            }
        }
        self.report(p)
    }

    /// Add-one smoothing on orders 2..=4 whose clipped count is zero.
    pub fn finalize_smoothed(&self) -> BleuReport {
        let mut p = [0.0; MAX_ORDER];
        for i in 0..MAX_ORDER {
            let (c, t) = (self.clipped[i] as f64, self.total[i] as f64);
            p[i] = if i > 0 && self.clipped[i] == 0 {
                (c + 1.0) / (t + 1.0)
            } else if t > 0.0 {
                c / t
            } else {
                0.0
            };
        }
        self.report(p)
    }
}

pub fn corpus_bleu(hyps: &[Sentence], refs: &[Sentence]) -> Result<BleuReport> {
    check_alignment(hyps, refs)?;
    if let Some(index) = hyps.iter().position(Sentence::is_empty) {
        return Err(Error::EmptyHypothesis { index });
    }
    let stats = hyps
        .iter()
        .zip(refs)
        .map(|(h, r)| BleuStats::from_pair(h, r))
        .fold(BleuStats::default(), |acc, s| acc.merge(&s));
    Ok(stats.finalize())
}

/// Sentence-level BLEU with add-one smoothing for n >= 2, on the 0–100 scale.
pub fn sentence_bleu_smoothed(hyp: &Sentence, reference: &Sentence) -> Result<f64> {
    if hyp.is_empty() {
        return Err(Error::EmptyHypothesis { index: 0 });
    }
    if reference.is_empty() {
        return Err(Error::EmptySentence);
    }
    Ok(BleuStats::from_pair(hyp, reference).finalize_smoothed().score)
}

/// Fraction of outputs the classifier assigns to the record's target code.
pub fn transfer_accuracy(batch: &TransferBatch, clf: &ClassifierModel) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = batch
        .records
        .iter()
        .filter(|r| clf.predict(&r.output).0 == r.target_code.label())
        .count();
    Ok(hits as f64 / batch.len() as f64)
}

/// BLEU of the batch outputs against their own inputs.
pub fn self_bleu(batch: &TransferBatch) -> Result<BleuReport> {
    let (inputs, outputs) = batch.inputs_outputs();
    corpus_bleu(&outputs, &inputs)
}

/// The three headline numbers of one evaluated batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub self_bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ref_bleu: Option<f64>,
}

/// Accuracy under `clf`, self-BLEU, and ref-BLEU when references are given.
pub fn evaluate_batch(
    batch: &TransferBatch,
    clf: &ClassifierModel,
    refs: Option<&[Sentence]>,
) -> Result<EvalMetrics> {
    let ref_bleu = match refs {
        Some(refs) => Some(corpus_bleu(&batch.outputs(), refs)?.score),
        None => None,
    };
    Ok(EvalMetrics {
        accuracy: transfer_accuracy(batch, clf)?,
        self_bleu: self_bleu(batch)?.score,
        ref_bleu,
    })
}
