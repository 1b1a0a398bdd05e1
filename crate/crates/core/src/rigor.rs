//! Retrain statistics: mean ± one sample standard deviation per metric,
//! margin overlap, Pareto fronts, and the parallel ensemble runner.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::architectures::{train, transfer, ArchKind, StyleModel, TrainConfig, TrainingLog, TransferBatch};
use crate::classifier::ClassifierModel;
use crate::corpus::{LabeledCorpus, Sentence};
use crate::error::{Error, Result};
use crate::metrics::evaluate_batch;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin {
    pub lo: f64,
    pub hi: f64,
}

impl Margin {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Mean, sample standard deviation and the ±1 std margin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Aggregate {
    pub fn margin(&self) -> Margin {
        Margin {
            lo: self.lo,
            hi: self.hi,
        }
    }
}

impl std::fmt::Display for Aggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let p = f.precision().unwrap_or(3);
        write!(f, "{:.p$} ± {:.p$}", self.mean, self.std)
    }
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.len() < 2 {
        return Err(Error::InsufficientRuns { got: values.len() });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    Ok(Aggregate {
        mean,
        std,
        lo: mean - std,
        hi: mean + std,
    })
}

/// Closed-interval overlap: touching intervals overlap.
pub fn margins_overlap(a: Margin, b: Margin) -> bool {
    a.lo <= b.hi && b.lo <= a.hi
}

fn dominates(p: (f64, f64), q: (f64, f64)) -> bool {
    p.0 >= q.0 && p.1 >= q.1 && (p.0 > q.0 || p.1 > q.1)
}

/// Points not dominated by any other point, in input order. Duplicates are
/// all kept since neither strictly dominates the other.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    // sweep by accuracy descending; a point survives when no point with
    // accuracy >= its own has a strictly better (or tied-but-stronger) BLEU
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[b]
            .0
            .total_cmp(&points[a].0)
            .then(points[b].1.total_cmp(&points[a].1))
    });
    let mut keep = vec![false; points.len()];
    let mut best_bleu = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // a block of equal accuracy
        let acc = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == acc {
            j += 1;
        }
        let block_max = points[order[i]].1;
        for &idx in &order[i..j] {
            let b = points[idx].1;
            keep[idx] = b == block_max && b > best_bleu;
        }
        best_bleu = best_bleu.max(block_max);
        i = j;
    }
    points
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(p, _)| *p)
        .collect()
}

/// Reference O(n²) implementation of [`pareto_front`].
pub fn pareto_front_brute_force(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    points
        .iter()
        .filter(|&&q| !points.iter().any(|&p| dominates(p, q)))
        .copied()
        .collect()
}

/// Metrics of one from-scratch training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub arch: ArchKind,
    pub seed: u64,
    pub accuracy: f64,
    pub self_bleu: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ref_bleu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub seed: u64,
    pub error: String,
}

/// Aggregated retrains of one architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub arch: ArchKind,
    pub runs: Vec<EvalRecord>,
    pub aggregate: BTreeMap<String, Aggregate>,
    pub failures: Vec<RunFailure>,
}

impl Ensemble {
    /// Aggregates surviving runs; needs at least two of them, all of one arch.
    pub fn from_runs(arch: ArchKind, runs: Vec<EvalRecord>, failures: Vec<RunFailure>) -> Result<Self> {
        if runs.len() < 2 {
            return Err(Error::InsufficientRuns { got: runs.len() });
        }
        if let Some(r) = runs.iter().find(|r| r.arch != arch) {
            return Err(Error::Config(format!("run with seed {} is {}, not {arch}", r.seed, r.arch)));
        }
        let mut agg = BTreeMap::new();
        let col = |f: fn(&EvalRecord) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        agg.insert("accuracy".to_string(), aggregate(&col(|r| r.accuracy))?);
        agg.insert("self_bleu".to_string(), aggregate(&col(|r| r.self_bleu))?);
        let refs: Option<Vec<f64>> = runs.iter().map(|r| r.ref_bleu).collect();
        if let Some(refs) = refs {
            agg.insert("ref_bleu".to_string(), aggregate(&refs)?);
        }
        Ok(Ensemble {
            arch,
            runs,
            aggregate: agg,
            failures,
        })
    }

    pub fn metric(&self, name: &str) -> Option<&Aggregate> {
        self.aggregate.get(name)
    }

    /// One `metric: mean ± std` line per metric.
    pub fn render(&self) -> String {
        let mut out = format!(
            "{} ({} runs, {} failed; margins are mean ± 1 sample std)\n",
            self.arch,
            self.runs.len(),
            self.failures.len()
        );
        for (name, a) in &self.aggregate {
            out.push_str(&format!("  {name:<9} {a:.4}\n"));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything an ensemble needs besides the seeds.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleSpec<'a> {
    pub train: &'a LabeledCorpus,
    /// Corpus whose sentences are transferred and scored.
    pub eval: &'a LabeledCorpus,
    /// Gold rewrites aligned with `eval`.
    pub refs: Option<&'a [Sentence]>,
    pub classifier: &'a ClassifierModel,
    pub config: &'a TrainConfig,
}

/// Artifacts of one successful run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: EvalRecord,
    pub model: StyleModel,
    pub log: TrainingLog,
    pub batch: TransferBatch,
}

/// Train, transfer and evaluate with `seed`; reproducible from the seed alone.
pub fn run_single(spec: &EnsembleSpec<'_>, seed: u64) -> Result<RunOutput> {
    let cfg = TrainConfig {
        seed,
        ..spec.config.clone()
    };
    let (model, log) = train(spec.train, &cfg)?;
    let batch = transfer(&model, spec.eval)?;
    let m = evaluate_batch(&batch, spec.classifier, spec.refs)?;
    Ok(RunOutput {
        record: EvalRecord {
            arch: cfg.arch,
            seed,
            accuracy: m.accuracy,
            self_bleu: m.self_bleu,
            ref_bleu: m.ref_bleu,
        },
        model,
        log,
        batch,
    })
}

/// Completed ensemble with the per-run artifacts of surviving runs.
#[derive(Debug, Clone)]
pub struct EnsembleOutcome {
    pub ensemble: Ensemble,
    pub outputs: Vec<RunOutput>,
}

/// Runs seeds `seed_base..seed_base + n_runs` on up to `jobs` threads.
///
/// Diverged runs are recorded as failures; other errors abort.
pub fn run_ensemble(
    spec: &EnsembleSpec<'_>,
    n_runs: usize,
    seed_base: u64,
    jobs: usize,
) -> Result<EnsembleOutcome> {
    if n_runs < 2 {
        return Err(Error::InsufficientRuns { got: n_runs });
    }
    let seeds: Vec<u64> = (0..n_runs as u64).map(|i| seed_base + i).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let results: Vec<(u64, Result<RunOutput>)> =
        pool.install(|| seeds.par_iter().map(|&s| (s, run_single(spec, s))).collect());
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in results {
        match r {
            Ok(out) => outputs.push(out),
            Err(e @ Error::Divergence { .. }) => failures.push(RunFailure {
                seed,
                error: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let runs = outputs.iter().map(|o| o.record.clone()).collect();
    let ensemble = Ensemble::from_runs(spec.config.arch, runs, failures)?;
    Ok(EnsembleOutcome { ensemble, outputs })
}
