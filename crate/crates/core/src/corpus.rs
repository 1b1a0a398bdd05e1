//! Labeled text corpora: tokenization, TSV I/O, vocabularies and a seeded
//! synthetic sentiment corpus for desk-scale experiments.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const NUM_SPECIALS: usize = 4;

const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<unk>", "<bos>", "<eos>"];
const ISOLATED_PUNCT: [char; 6] = ['.', ',', '!', '?', ';', ':'];

/// A tokenized sentence. Tokens never contain whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Sentence(Vec<String>);

impl Sentence {
    /// Builds a sentence from already-split tokens.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        if tokens.is_empty() {
            return Err(Error::EmptySentence);
        }
        if tokens
            .iter()
            .any(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::Config(
                "tokens must be non-empty and whitespace-free".into(),
            ));
        }
        Ok(Sentence(tokens))
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

/// Lowercases, isolates `. , ! ? ; :` and splits on whitespace.
pub fn tokenize(text: &str) -> Result<Sentence> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ISOLATED_PUNCT.contains(&ch) {
            spaced.push(' ');
            spaced.push(ch);
            spaced.push(' ');
        } else {
            spaced.push(ch);
        }
    }
    let tokens: Vec<String> = spaced.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    Ok(Sentence(tokens))
}

/// Binary style label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub fn from_index(i: usize) -> Option<Self> {
        match i {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn flip(self) -> Self {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub items: Vec<(Sentence, Label)>,
}

impl LabeledCorpus {
    pub fn new(items: Vec<(Sentence, Label)>) -> Self {
        LabeledCorpus { items }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.items.iter().map(|(s, _)| s)
    }

    pub fn label_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for (_, l) in &self.items {
            counts[l.index()] += 1;
        }
        counts
    }

    /// Errors unless both labels are present.
    pub fn require_both_labels(&self) -> Result<()> {
        let [neg, pos] = self.label_counts();
        if neg == 0 || pos == 0 {
            return Err(Error::DegenerateCorpus);
        }
        Ok(())
    }

    /// Parses the `<label>\t<text>` TSV format.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let (label, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: line_no,
                message: "expected `<label>\\t<text>`".into(),
            })?;
            let label = match label.trim() {
                "0" => Label::Negative,
                "1" => Label::Positive,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("label must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let sentence = tokenize(body).map_err(|_| Error::Parse {
                line: line_no,
                message: "empty text".into(),
            })?;
            items.push((sentence, label));
        }
        if items.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(LabeledCorpus { items })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (s, l) in &self.items {
            out.push_str(&format!("{}\t{}\n", l.index(), s));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    /// Splits off the last `n_test` items as a test corpus.
    pub fn split_tail(&self, n_test: usize) -> (LabeledCorpus, LabeledCorpus) {
        let cut = self.items.len().saturating_sub(n_test);
        (
            LabeledCorpus::new(self.items[..cut].to_vec()),
            LabeledCorpus::new(self.items[cut..].to_vec()),
        )
    }
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabeledCorpus::parse_tsv(&text)
}

/// Reads one reference sentence per non-blank line.
pub fn load_references(path: impl AsRef<Path>) -> Result<Vec<Sentence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            tokenize(l).map_err(|_| Error::Parse {
                line: i + 1,
                message: "empty reference".into(),
            })
        })
        .collect()
}

pub fn save_references(refs: &[Sentence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for r in refs {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Token vocabulary with fixed special ids 0..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_of: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from non-special tokens, in id order starting at 4.
    pub fn from_tokens<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut token_of: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut id_of: HashMap<String, usize> = token_of
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        for tok in tokens {
            let tok = tok.into();
            if id_of.contains_key(&tok) {
                return Err(Error::Config(format!("duplicate vocabulary token {tok:?}")));
            }
            id_of.insert(tok.clone(), token_of.len());
            token_of.push(tok);
        }
        Ok(Vocab { token_of, id_of })
    }

    pub fn len(&self) -> usize {
        self.token_of.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.token_of.get(id).map(String::as_str)
    }

    /// Non-special tokens in id order.
    pub fn words(&self) -> &[String] {
        &self.token_of[NUM_SPECIALS..]
    }

    /// Token ids for `s` without BOS/EOS framing.
    pub fn ids(&self, s: &Sentence) -> Vec<usize> {
        s.tokens().iter().map(|t| self.id(t)).collect()
    }

    /// Inverse of [`encode_ids`]: stops at EOS, skips PAD/BOS, renders UNK as `<unk>`.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        let mut out = Vec::new();
        for &id in ids {
            match id {
                EOS => break,
                PAD | BOS => continue,
                _ => out.push(self.token(id).unwrap_or(SPECIAL_TOKENS[UNK]).to_owned()),
            }
        }
        out
    }
}

/// Keeps the `max_size - 4` most frequent tokens, ties broken lexicographically.
pub fn build_vocab(corpus: &LabeledCorpus, max_size: usize) -> Result<Vocab> {
    if max_size < NUM_SPECIALS + 1 {
        return Err(Error::Config(format!("max_size must be >= 5, got {max_size}")));
    }
    let mut freq: HashMap<&str, usize> = HashMap::new();
    for s in corpus.sentences() {
        for t in s.tokens() {
            *freq.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = freq
        .into_iter()
        .filter(|(t, _)| !SPECIAL_TOKENS.contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(max_size - NUM_SPECIALS);
    Vocab::from_tokens(ranked.into_iter().map(|(t, _)| t.to_owned()))
}

/// BOS + ids + EOS, truncated to `max_len` with EOS kept last, right-padded with PAD.
pub fn encode_ids(vocab: &Vocab, s: &Sentence, max_len: usize) -> Result<Vec<usize>> {
    if max_len < 2 {
        return Err(Error::Config(format!("max_len must be >= 2, got {max_len}")));
    }
    let mut ids = Vec::with_capacity(max_len);
    ids.push(BOS);
    ids.extend(vocab.ids(s).into_iter().take(max_len - 2));
    ids.push(EOS);
    ids.resize(max_len, PAD);
    Ok(ids)
}

const NOUNS: [&str; 10] = [
    "food", "service", "staff", "pizza", "coffee", "place", "waiter", "menu", "pasta", "burger",
];

/// Antonym pairs: (positive, negative).
const ADJECTIVES: [(&str, &str); 8] = [
    ("great", "terrible"),
    ("delicious", "awful"),
    ("friendly", "rude"),
    ("excellent", "horrible"),
    ("amazing", "bland"),
    ("fresh", "stale"),
    ("wonderful", "disgusting"),
    ("perfect", "mediocre"),
];

const TEMPLATES: [&[&str]; 3] = [
    &["the", "{noun}", "was", "{adj}", "."],
    &["the", "{noun}", "is", "{adj}", "!"],
    &["i", "thought", "the", "{noun}", "was", "really", "{adj}", "."],
];

/// Deterministic balanced sentiment corpus of template sentences.
///
/// Label-1 items draw their adjective from a positive lexicon and label-0 items
/// from a disjoint negative lexicon, so the two classes are linearly separable
/// on unigram features.
pub fn synth_corpus(seed: u64, n: usize) -> Result<LabeledCorpus> {
    if n < 20 || !n.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "synthetic corpus size must be even and >= 20, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = std::iter::repeat_n(Label::Negative, n / 2)
        .chain(std::iter::repeat_n(Label::Positive, n / 2))
        .collect();
    labels.shuffle(&mut rng);
    let items = labels
        .into_iter()
        .map(|label| {
            let template = TEMPLATES[rng.random_range(0..TEMPLATES.len())];
            let noun = NOUNS[rng.random_range(0..NOUNS.len())];
            let pair = ADJECTIVES[rng.random_range(0..ADJECTIVES.len())];
            let adj = match label {
                Label::Positive => pair.0,
                Label::Negative => pair.1,
            };
            let tokens = template.iter().map(|&t| match t {
                "{noun}" => noun,
                "{adj}" => adj,
                other => other,
            });
            (Sentence(tokens.map(str::to_owned).collect()), label)
        })
        .collect();
    Ok(LabeledCorpus { items })
}

/// Gold style rewrite of a synthetic sentence: every lexicon adjective is
/// swapped for its antonym, everything else is kept.
pub fn synth_reference(s: &Sentence) -> Sentence {
    let swapped = s
        .tokens()
        .iter()
        .map(|t| {
            ADJECTIVES
                .iter()
                .find_map(|&(p, n)| {
                    if t == p {
                        Some(n)
                    } else if t == n {
                        Some(p)
                    } else {
                        None
                    }
                })
                .map(str::to_owned)
                .unwrap_or_else(|| t.clone())
        })
        .collect();
    Sentence(swapped)
}

pub fn synth_references(corpus: &LabeledCorpus) -> Vec<Sentence> {
    corpus.sentences().map(synth_reference).collect()
}
