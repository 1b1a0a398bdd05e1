use std::fs;
use std::path::Path;

use super::model::{StyleCode, StyleModel};
use crate::corpus::{tokenize, Label, LabeledCorpus, Sentence};
use crate::error::{Error, Result};

/// One transferred sentence. `target_code` is always the inverse of `source_code`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransferRecord {
    pub input: Sentence,
    pub source_code: StyleCode,
    pub target_code: StyleCode,
    pub output: Sentence,
}

impl TransferRecord {
    pub fn new(input: Sentence, source: Label, output: Sentence) -> Self {
        let source_code = StyleCode::new(source);
        TransferRecord {
            input,
            source_code,
            target_code: source_code.inverse(),
            output,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferBatch {
    pub records: Vec<TransferRecord>,
}

impl TransferBatch {
    pub fn new(records: Vec<TransferRecord>) -> Self {
        TransferBatch { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn inputs_outputs(&self) -> (Vec<Sentence>, Vec<Sentence>) {
        self.records
            .iter()
            .map(|r| (r.input.clone(), r.output.clone()))
            .unzip()
    }

    pub fn outputs(&self) -> Vec<Sentence> {
        self.records.iter().map(|r| r.output.clone()).collect()
    }

    /// The degenerate system that copies every input unchanged.
    pub fn copy_inputs(corpus: &LabeledCorpus) -> Self {
        TransferBatch::new(
            corpus
                .items
                .iter()
                .map(|(s, l)| TransferRecord::new(s.clone(), *l, s.clone()))
                .collect(),
        )
    }

    /// Parses `<input>\t<output>\t<source_label>` lines.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: &str| Error::Parse {
                line: i + 1,
                message: message.into(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [input, output, label] = fields[..] else {
                return Err(bad("expected `<input>\\t<output>\\t<source_label>`"));
            };
            let label = match label.trim() {
                "0" => Label::Negative,
                "1" => Label::Positive,
                _ => return Err(bad("source label must be 0 or 1")),
            };
            let input = tokenize(input).map_err(|_| bad("empty input"))?;
            let output = tokenize(output).map_err(|_| bad("empty output"))?;
            records.push(TransferRecord::new(input, label, output));
        }
        if records.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(TransferBatch { records })
    }

    pub fn to_tsv(&self) -> String {
        self.records
            .iter()
            .map(|r| format!("{}\t{}\t{}\n", r.input, r.output, r.source_code.label().index()))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

/// Greedy transfer of every item to the opposite style, noise-free.
pub fn transfer(model: &StyleModel, corpus: &LabeledCorpus) -> Result<TransferBatch> {
    let records = corpus
        .items
        .iter()
        .map(|(x, label)| {
            let z = model.encode(x)?;
            let source = StyleCode::new(*label);
            let output = model.generate_greedy(&z, source.inverse())?;
            Ok(TransferRecord::new(x.clone(), *label, output))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferBatch { records })
}
