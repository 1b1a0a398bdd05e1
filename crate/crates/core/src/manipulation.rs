//! The "delete, duplicate and conquer" audit: outputs the internal classifier
//! judges to have the wrong style are replaced, group by group, with verbatim
//! copies of correct-style outputs from the same batch. Reported accuracy
//! climbs while BLEU barely moves.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architectures::{StyleCode, TransferBatch};
use crate::classifier::ClassifierModel;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::metrics::{evaluate_batch, sentence_bleu_smoothed};

/// Default number of replacement groups.
pub const DEFAULT_GROUPS: usize = 10;

fn is_correct(clf: &ClassifierModel, output: &Sentence, target: StyleCode) -> bool {
    clf.predict(output).0 == target.label()
}

/// Indices of records whose output has the wrong style, in batch order,
/// split into `g` contiguous groups whose sizes differ by at most one
/// (larger groups first).
pub fn partition_wrong(
    batch: &TransferBatch,
    clf: &ClassifierModel,
    g: usize,
) -> Result<Vec<Vec<usize>>> {
    if g == 0 {
        return Err(Error::Config("number of groups must be >= 1".into()));
    }
    let wrong: Vec<usize> = batch
        .records
        .iter()
        .enumerate()
        .filter(|(_, r)| !is_correct(clf, &r.output, r.target_code))
        .map(|(i, _)| i)
        .collect();
    let (base, extra) = (wrong.len() / g, wrong.len() % g);
    let mut groups = Vec::with_capacity(g);
    let mut rest = wrong.as_slice();
    for i in 0..g {
        let size = base + usize::from(i < extra);
        let (head, tail) = rest.split_at(size);
        groups.push(head.to_vec());
        rest = tail;
    }
    Ok(groups)
}

/// Index of the candidate whose output has the highest smoothed sentence BLEU
/// against `input`; ties go to the lowest index.
///
/// `candidates` are `(output, its input)` pairs.
pub fn best_duplicate_index(input: &Sentence, candidates: &[(Sentence, Sentence)]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (output, _)) in candidates.iter().enumerate() {
        let score = sentence_bleu_smoothed(output, input)?;
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::NoCandidates)
}

/// The candidate output chosen by [`best_duplicate_index`].
pub fn best_duplicate(input: &Sentence, candidates: &[(Sentence, Sentence)]) -> Result<Sentence> {
    let i = best_duplicate_index(input, candidates)?;
    Ok(candidates[i].0.clone())
}

/// A manipulated batch together with records no candidate could replace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manipulated {
    pub batch: TransferBatch,
    pub unreplaced: Vec<usize>,
}

/// Correct-style `(output, input)` pairs of the original batch, per target code.
fn candidate_pools(batch: &TransferBatch, clf: &ClassifierModel) -> [Vec<(Sentence, Sentence)>; 2] {
    let mut pools: [Vec<(Sentence, Sentence)>; 2] = Default::default();
    for r in &batch.records {
        if is_correct(clf, &r.output, r.target_code) {
            pools[r.target_code.label().index()].push((r.output.clone(), r.input.clone()));
        }
    }
    pools
}

/// Replaces the outputs of the first `k` of `groups` wrong-style groups.
///
/// Candidates are drawn from the original batch only, so results for larger
/// `k` extend those for smaller `k` record by record.
pub fn manipulate_groups(
    batch: &TransferBatch,
    clf: &ClassifierModel,
    k: usize,
    groups: usize,
) -> Result<Manipulated> {
    if k > groups {
        return Err(Error::Config(format!("k = {k} exceeds the {groups} groups")));
    }
    let parts = partition_wrong(batch, clf, groups)?;
    let pools = candidate_pools(batch, clf);
    let targets: Vec<usize> = parts[..k].iter().flatten().copied().collect();
    let choices: Vec<(usize, Option<Sentence>)> = targets
        .par_iter()
        .map(|&i| {
            let r = &batch.records[i];
            let pool = &pools[r.target_code.label().index()];
            match best_duplicate(&r.input, pool) {
                Ok(s) => Ok((i, Some(s))),
                Err(Error::NoCandidates) => Ok((i, None)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut out = batch.clone();
    let mut unreplaced = Vec::new();
    for (i, choice) in choices {
        match choice {
            Some(s) => out.records[i].output = s,
            None => unreplaced.push(i),
        }
    }
    Ok(Manipulated {
        batch: out,
        unreplaced,
    })
}

/// [`manipulate_groups`] with the default ten groups.
pub fn manipulate(batch: &TransferBatch, clf: &ClassifierModel, k: usize) -> Result<Manipulated> {
    manipulate_groups(batch, clf, k, DEFAULT_GROUPS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    pub accuracy: f64,
    pub self_bleu: f64,
    pub ref_bleu: Option<f64>,
}

/// Metrics after replacing `k = 0..=groups` groups, measured with the external
/// classifier while replacement decisions use the internal one.
pub fn sweep_groups(
    batch: &TransferBatch,
    refs: Option<&[Sentence]>,
    internal: &ClassifierModel,
    external: &ClassifierModel,
    groups: usize,
) -> Result<Vec<SweepPoint>> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let full = manipulate_groups(batch, internal, groups, groups)?;
    let parts = partition_wrong(batch, internal, groups)?;
    let mut current = batch.clone();
    let mut points = Vec::with_capacity(groups + 1);
    for k in 0..=groups {
        if k > 0 {
            for &i in &parts[k - 1] {
                current.records[i].output = full.batch.records[i].output.clone();
            }
        }
        let m = evaluate_batch(&current, external, refs)?;
        points.push(SweepPoint {
            k,
            accuracy: m.accuracy,
            self_bleu: m.self_bleu,
            ref_bleu: m.ref_bleu,
        });
    }
    Ok(points)
}

/// The standard eleven-point sweep.
pub fn sweep(
    batch: &TransferBatch,
    refs: Option<&[Sentence]>,
    internal: &ClassifierModel,
    external: &ClassifierModel,
) -> Result<Vec<SweepPoint>> {
    sweep_groups(batch, refs, internal, external, DEFAULT_GROUPS)
}

pub const SWEEP_HEADER: &str = "k,accuracy,self_bleu,ref_bleu";

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = format!("{SWEEP_HEADER}\n");
    for p in points {
        let refb = p.ref_bleu.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", p.k, p.accuracy, p.self_bleu, refb);
    }
    out
}

pub fn save_sweep(points: &[SweepPoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, sweep_to_csv(points)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::architectures::TransferRecord;
    use crate::classifier::train_classifier;
    use crate::corpus::{synth_corpus, tokenize, Label};
    use proptest::prelude::*;

    fn s(text: &str) -> Sentence {
        tokenize(text).unwrap()
    }

    /// Classifier that calls anything containing "good" positive.
    fn keyword_clf() -> ClassifierModel {
        let mut c = ClassifierModel::zero();
        c.bias = -1.0;
        c.weights.insert("good".into(), 3.0);
        c
    }

    fn rec(input: &str, source: Label, output: &str) -> TransferRecord {
        TransferRecord::new(s(input), source, s(output))
    }

    #[test]
    fn partition_sizes() {
        let clf = keyword_clf();
        // source negative → target positive; output without "good" is wrong
        let mk = |n: usize| {
            TransferBatch::new((0..n).map(|i| rec(&format!("x{i}"), Label::Negative, "bad")).collect())
        };
        let g = partition_wrong(&mk(10), &clf, 10).unwrap();
        assert!(g.iter().all(|grp| grp.len() == 1));
        let g = partition_wrong(&mk(23), &clf, 10).unwrap();
        let sizes: Vec<usize> = g.iter().map(Vec::len).collect();
        assert_eq!(sizes, [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
        assert_eq!(g.concat(), (0..23).collect::<Vec<_>>());
        let ok = TransferBatch::new(vec![rec("x", Label::Negative, "good")]);
        assert!(partition_wrong(&ok, &clf, 10).unwrap().iter().all(Vec::is_empty));
        assert!(partition_wrong(&ok, &clf, 0).is_err());
    }

    #[test]
    fn best_duplicate_examples() {
        let input = s("a b c");
        let cands = vec![(s("a b c"), s("q")), (s("x y"), s("r"))];
        assert_eq!(best_duplicate(&input, &cands).unwrap(), s("a b c"));
        let tie = vec![(s("x y"), s("q")), (s("y x"), s("r"))];
        assert_eq!(best_duplicate_index(&input, &tie).unwrap(), 0);
        assert!(matches!(best_duplicate(&input, &[]), Err(Error::NoCandidates)));
    }

    #[test]
    fn best_duplicate_matches_brute_force() {
        let input = s("the food was great and the staff was friendly");
        let cands = vec![
            (s("the food was great"), s("i")),
            (s("the staff was friendly and the food was great"), s("j")),
            (s("the food was great and the staff was rude"), s("k")),
        ];
        let scores: Vec<f64> = cands
            .iter()
            .map(|(o, _)| sentence_bleu_smoothed(o, &input).unwrap())
            .collect();
        let brute = (0..3)
            .max_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(b.cmp(&a)))
            .unwrap();
        assert_eq!(best_duplicate_index(&input, &cands).unwrap(), brute);
        assert_eq!(brute, 2);
    }

    #[test]
    fn manipulate_contracts() {
        let clf = keyword_clf();
        let batch = TransferBatch::new(vec![
            rec("the cake", Label::Negative, "bad cake"),
            rec("the tea", Label::Negative, "good tea"),
            rec("the pie", Label::Negative, "awful pie"),
            rec("good soup", Label::Positive, "good soup"),
        ]);
        assert_eq!(manipulate(&batch, &clf, 0).unwrap().batch, batch);
        let m = manipulate(&batch, &clf, 10).unwrap();
        assert_eq!(m.unreplaced, [3]);
        assert_eq!(m.batch.records[0].output, s("good tea"));
        assert_eq!(m.batch.records[2].output, s("good tea"));
        // record 3 needs negative and has no candidates, but it is wrong: left as-is
        assert_eq!(m.batch.records[3].output, s("good soup"));
        assert!(manipulate(&batch, &clf, 11).is_err());
    }

    #[test]
    fn no_candidates_reported_not_fatal() {
        let clf = keyword_clf();
        let batch = TransferBatch::new(vec![rec("a", Label::Negative, "bad")]);
        let m = manipulate(&batch, &clf, 10).unwrap();
        assert_eq!(m.unreplaced, [0]);
        assert_eq!(m.batch, batch);
    }

    fn random_batch(seed: u64, n: usize, flips: &[bool]) -> TransferBatch {
        // outputs are the inputs themselves or their gold rewrites
        let corpus = synth_corpus(seed, n).unwrap();
        TransferBatch::new(
            corpus
                .items
                .iter()
                .zip(flips.iter().cycle())
                .map(|((x, l), &flip)| {
                    let out = if flip {
                        crate::corpus::synth_reference(x)
                    } else {
                        x.clone()
                    };
                    TransferRecord::new(x.clone(), *l, out)
                })
                .collect(),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn manipulation_invariants(seed in 0u64..1000, flips in prop::collection::vec(any::<bool>(), 1..12)) {
            let clf = train_classifier(&synth_corpus(11, 200).unwrap(), 30, 0.1, 0).unwrap();
            let batch = random_batch(seed, 40, &flips);
            let originals: Vec<&Sentence> = batch.records.iter().map(|r| &r.output).collect();
            let parts = partition_wrong(&batch, &clf, 10).unwrap();
            let mut prev_acc = -1.0;
            let mut prev: Option<TransferBatch> = None;
            for k in 0..=10 {
                let m = manipulate(&batch, &clf, k).unwrap();
                prop_assert_eq!(m.batch.len(), batch.len());
                for (a, b) in m.batch.records.iter().zip(&batch.records) {
                    prop_assert_eq!(&a.input, &b.input);
                    prop_assert_eq!(a.source_code, b.source_code);
                    prop_assert_eq!(a.target_code, b.target_code);
                    // duplicates only: every output already existed in the batch
                    prop_assert!(originals.contains(&&a.output));
                }
                let acc = crate::metrics::transfer_accuracy(&m.batch, &clf).unwrap();
                prop_assert!(acc >= prev_acc);
                prev_acc = acc;
                if let Some(p) = &prev {
                    let changed: Vec<usize> = (0..batch.len())
                        .filter(|&i| p.records[i] != m.batch.records[i])
                        .collect();
                    for i in changed {
                        prop_assert!(parts[k - 1].contains(&i));
                    }
                }
                if k == 10 && m.unreplaced.is_empty() {
                    prop_assert_eq!(acc, 1.0);
                }
                prev = Some(m.batch);
            }
        }
    }

    #[test]
    fn sweep_shape_and_identity() {
        let clf = train_classifier(&synth_corpus(11, 200).unwrap(), 30, 0.1, 0).unwrap();
        let batch = random_batch(3, 60, &[true, false, false]);
        let refs = crate::corpus::synth_references(&synth_corpus(3, 60).unwrap());
        let pts = sweep(&batch, Some(&refs), &clf, &clf).unwrap();
        assert_eq!(pts.len(), 11);
        let base = evaluate_batch(&batch, &clf, Some(&refs)).unwrap();
        assert_eq!(pts[0].accuracy, base.accuracy);
        assert_eq!(pts[0].self_bleu, base.self_bleu);
        assert_eq!(pts[0].ref_bleu, base.ref_bleu);
        assert!(pts.windows(2).all(|w| w[1].accuracy >= w[0].accuracy));
        assert_eq!(pts[10].accuracy, 1.0);
        let csv = sweep_to_csv(&pts);
        assert_eq!(csv.lines().count(), 12);
        assert!(csv.starts_with(SWEEP_HEADER));
        let no_refs = sweep_to_csv(&sweep(&batch, None, &clf, &clf).unwrap());
        assert!(no_refs.lines().nth(1).unwrap().ends_with(','));
    }
}
