//! Binary logistic-regression style classifier over unigram and bigram counts.
//!
//! The same model serves as the external evaluation classifier and as the
//! internal classifier used by the manipulation audit; the two differ only in
//! their training split and seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Label, LabeledCorpus, Sentence};
use crate::error::{Error, Result};

pub type Features = BTreeMap<String, f64>;

/// Unigram and adjacent-pair bigram counts; bigrams are joined with `_`.
pub fn featurize(s: &Sentence) -> Features {
    let mut feats = Features::new();
    let toks = s.tokens();
    for t in toks {
        *feats.entry(t.clone()).or_default() += 1.0;
    }
    for pair in toks.windows(2) {
        *feats.entry(format!("{}_{}", pair[0], pair[1])).or_default() += 1.0;
    }
    feats
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub bias: f64,
    pub weights: BTreeMap<String, f64>,
}

impl ClassifierModel {
    pub fn zero() -> Self {
        ClassifierModel {
            bias: 0.0,
            weights: BTreeMap::new(),
        }
    }

    fn logit(&self, feats: &Features) -> f64 {
        self.bias
            + feats
                .iter()
                .filter_map(|(f, c)| self.weights.get(f).map(|w| w * c))
                .sum::<f64>()
    }

    /// `(code, P(label = 1))`; probability 0.5 predicts label 1.
    pub fn predict(&self, s: &Sentence) -> (Label, f64) {
        let prob = sigmoid(self.logit(&featurize(s)));
        let code = if prob >= 0.5 {
            Label::Positive
        } else {
            Label::Negative
        };
        (code, prob)
    }

    /// Whether any unigram of `s` is part of the model's feature space.
    pub fn knows_any(&self, s: &Sentence) -> bool {
        s.tokens().iter().any(|t| self.weights.contains_key(t))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(self)?;
        fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Plain SGD on the logistic loss with seeded per-epoch shuffling.
pub fn train_classifier(
    corpus: &LabeledCorpus,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<ClassifierModel> {
    Ok(train_classifier_logged(corpus, epochs, lr, seed)?.0)
}

/// As [`train_classifier`], also returning the mean training loss of each epoch
/// as observed during the pass.
pub fn train_classifier_logged(
    corpus: &LabeledCorpus,
    epochs: usize,
    lr: f64,
    seed: u64,
) -> Result<(ClassifierModel, Vec<f64>)> {
    if epochs == 0 {
        return Err(Error::Config("classifier epochs must be >= 1".into()));
    }
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be > 0, got {lr}")));
    }
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    corpus.require_both_labels()?;

    let feats: Vec<(Features, f64)> = corpus
        .items
        .iter()
        .map(|(s, l)| (featurize(s), l.index() as f64))
        .collect();
    let mut model = ClassifierModel::zero();
    for (f, _) in &feats {
        for k in f.keys() {
            model.weights.entry(k.clone()).or_insert(0.0);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..feats.len()).collect();
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            let (f, y) = &feats[i];
            let p = sigmoid(model.logit(f));
            loss -= if *y > 0.5 {
                p.max(1e-300).ln()
            } else {
                (1.0 - p).max(1e-300).ln()
            };
            let g = y - p;
            model.bias += lr * g;
            for (k, c) in f {
                if let Some(w) = model.weights.get_mut(k) {
                    *w += lr * g * c;
                }
            }
        }
        losses.push(loss / feats.len() as f64);
    }
    Ok((model, losses))
}

/// Mean logistic loss of `model` on `corpus`.
pub fn log_loss(model: &ClassifierModel, corpus: &LabeledCorpus) -> f64 {
    let total: f64 = corpus
        .items
        .iter()
        .map(|(s, l)| {
            let p = model.predict(s).1;
            match l {
                Label::Positive => -p.max(1e-300).ln(),
                Label::Negative => -(1.0 - p).max(1e-300).ln(),
            }
        })
        .sum();
    total / corpus.len().max(1) as f64
}

pub fn classifier_accuracy(model: &ClassifierModel, corpus: &LabeledCorpus) -> Result<f64> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let hits = corpus
        .items
        .iter()
        .filter(|(s, l)| model.predict(s).0 == *l)
        .count();
    Ok(hits as f64 / corpus.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synth_corpus, tokenize};

    fn s(t: &str) -> Sentence {
        tokenize(t).unwrap()
    }

    #[test]
    fn featurize_examples() {
        let f = featurize(&s("good food"));
        assert_eq!(f.len(), 3);
        assert_eq!(f["good"], 1.0);
        assert_eq!(f["food"], 1.0);
        assert_eq!(f["good_food"], 1.0);
        let f = featurize(&s("a a a"));
        assert_eq!(f.len(), 2);
        assert_eq!(f["a"], 3.0);
        assert_eq!(f["a_a"], 2.0);
        let f = featurize(&s("x"));
        assert_eq!(f.len(), 1);
    }

    #[test]
    fn predict_examples() {
        let zero = ClassifierModel::zero();
        assert_eq!(zero.predict(&s("anything")), (Label::Positive, 0.5));
        let mut m = ClassifierModel::zero();
        m.weights.insert("good".into(), 5.0);
        let (code, p) = m.predict(&s("good"));
        assert_eq!(code, Label::Positive);
        assert!((p - 1.0 / (1.0 + (-5f64).exp())).abs() < 1e-12);
        assert!((p - 0.9933).abs() < 1e-4);
        let mut m = ClassifierModel::zero();
        m.weights.insert("bad".into(), -5.0);
        assert_eq!(m.predict(&s("bad")).0, Label::Negative);
    }

    #[test]
    fn train_contracts() {
        let c = synth_corpus(1, 40).unwrap();
        assert!(matches!(train_classifier(&c, 0, 0.1, 0), Err(Error::Config(_))));
        assert!(matches!(train_classifier(&c, 1, 0.0, 0), Err(Error::Config(_))));
        let single = LabeledCorpus::new(
            c.items
                .iter()
                .filter(|(_, l)| *l == Label::Positive)
                .cloned()
                .collect(),
        );
        assert!(matches!(
            train_classifier(&single, 5, 0.1, 0),
            Err(Error::DegenerateCorpus)
        ));
        let a = train_classifier(&c, 5, 0.1, 3).unwrap();
        let b = train_classifier(&c, 5, 0.1, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn separable_held_out_accuracy() {
        let train = synth_corpus(11, 200).unwrap();
        let test = synth_corpus(12, 100).unwrap();
        let m = train_classifier(&train, 50, 0.1, 0).unwrap();
        assert_eq!(classifier_accuracy(&m, &test).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_examples() {
        let c = synth_corpus(2, 20).unwrap();
        assert_eq!(classifier_accuracy(&ClassifierModel::zero(), &c).unwrap(), 0.5);
        let one = LabeledCorpus::new(vec![(s("good"), Label::Positive)]);
        assert_eq!(classifier_accuracy(&ClassifierModel::zero(), &one).unwrap(), 1.0);
        let empty = LabeledCorpus::new(vec![]);
        assert!(classifier_accuracy(&ClassifierModel::zero(), &empty).is_err());
    }

    #[test]
    fn epoch_loss_non_increasing() {
        let c = synth_corpus(5, 200).unwrap();
        let (_, losses) = train_classifier_logged(&c, 30, 0.1, 9).unwrap();
        for w in losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{losses:?}");
        }
    }

    #[test]
    fn label_flip_symmetry() {
        let c = synth_corpus(6, 60).unwrap();
        let flipped = LabeledCorpus::new(c.items.iter().map(|(s, l)| (s.clone(), l.flip())).collect());
        let m = train_classifier(&c, 10, 0.1, 4).unwrap();
        let mf = train_classifier(&flipped, 10, 0.1, 4).unwrap();
        for s in synth_corpus(7, 40).unwrap().sentences() {
            let p = m.predict(s).1;
            let pf = mf.predict(s).1;
            assert!((pf - (1.0 - p)).abs() < 1e-6);
        }
    }

    #[test]
    fn order_invariance_through_features() {
        let c = synth_corpus(8, 40).unwrap();
        let m = train_classifier(&c, 5, 0.1, 0).unwrap();
        // same unigram and bigram multisets, different order
        let a = s("the great the awful the");
        let b = s("the awful the great the");
        assert_eq!(featurize(&a), featurize(&b));
        assert_eq!(m.predict(&a).1, m.predict(&b).1);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let c = synth_corpus(1, 20).unwrap();
        let m = train_classifier(&c, 2, 0.1, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.json");
        m.save(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert!(v["bias"].is_number());
        assert!(v["weights"].is_object());
        assert_eq!(ClassifierModel::load(&path).unwrap(), m);
    }
}
