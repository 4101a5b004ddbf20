//! Nonparametric and Bayesian bootstrap of the whole analysis pipeline with
//! percentile intervals.
//!
//! Replicate `r` draws from `ChaCha8Rng::seed_from_u64(seed)` switched to
//! stream `r`, so its resample depends only on `(seed, r)`. Replicates run on
//! a rayon pool and are collected in replicate order; results do not depend on
//! the number of workers.

use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::DataFrame;
use crate::error::{ResiError, Result};
use crate::fit::ModelKind;
use crate::pipeline::{Evaluation, Pipeline};

/// Environment variable capping the number of bootstrap worker threads.
pub const THREADS_ENV: &str = "RESI_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootMethod {
    Nonparametric,
    Bayesian,
}

impl BootMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BootMethod::Nonparametric => "nonparametric",
            BootMethod::Bayesian => "Bayesian",
        }
    }
}

impl FromStr for BootMethod {
    type Err = ResiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonparametric" => Ok(BootMethod::Nonparametric),
            "bayes" | "bayesian" => Ok(BootMethod::Bayesian),
            other => Err(ResiError::InvalidArgument(format!("unknown bootstrap method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootSpec {
    pub method: BootMethod,
    pub nboot: usize,
    pub alphas: Vec<f64>,
    pub seed: u64,
    pub store_replicates: bool,
    /// Worker threads; `None` uses `RESI_THREADS` or all cores.
    pub threads: Option<usize>,
    /// Start nls refits at the original estimates rather than the user's start.
    pub restart_at_estimates: bool,
}

impl Default for BootSpec {
    fn default() -> Self {
        BootSpec {
            method: BootMethod::Nonparametric,
            nboot: 1000,
            alphas: vec![0.05],
            seed: 2024,
            store_replicates: false,
            threads: None,
            restart_at_estimates: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapResult {
    pub method: BootMethod,
    pub labels: Vec<String>,
    pub attempts: usize,
    pub successes: usize,
    pub alphas: Vec<f64>,
    /// `intervals[quantity][alpha]`.
    pub intervals: Vec<Vec<Interval>>,
    /// Successful replicates in replicate order, one row each.
    pub replicates: Option<Vec<Vec<f64>>>,
}

impl BootstrapResult {
    /// Intervals for new alpha levels from the stored replicates.
    pub fn reextract(&self, alphas: &[f64]) -> Result<Vec<Vec<Interval>>> {
        let reps = self.replicates.as_ref().ok_or(ResiError::ReplicatesNotStored)?;
        let alphas = normalize_alphas(alphas)?;
        intervals_from(reps, self.labels.len(), &alphas)
    }

    /// Writes stored replicates as CSV with the quantity labels as header.
    pub fn write_replicates_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let reps = self.replicates.as_ref().ok_or(ResiError::ReplicatesNotStored)?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.labels)?;
        for row in reps {
            w.write_record(row.iter().map(|v| format!("{v:?}")))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sorted, deduplicated alphas, each in (0, 1).
pub fn normalize_alphas(alphas: &[f64]) -> Result<Vec<f64>> {
    if alphas.is_empty() {
        return Err(ResiError::InvalidArgument("at least one alpha is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(ResiError::InvalidArgument(format!("alpha must lie in (0, 1), got {a}")));
    }
    let mut out = alphas.to_vec();
    out.sort_by(f64::total_cmp);
    out.dedup();
    Ok(out)
}

/// Linear-interpolation quantile of sorted data, order statistic `h = (B−1)p + 1`.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(q(α/2), q(1 − α/2))` of the replicates.
pub fn percentile_ci(replicates: &[f64], alpha: f64) -> Result<Interval> {
    if replicates.is_empty() {
        return Err(ResiError::InvalidArgument("no replicates".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ResiError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Interval {
        lo: quantile_sorted(&sorted, alpha / 2.0),
        hi: quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    })
}

fn intervals_from(reps: &[Vec<f64>], k: usize, alphas: &[f64]) -> Result<Vec<Vec<Interval>>> {
    (0..k)
        .map(|j| {
            let column: Vec<f64> = reps.iter().map(|row| row[j]).collect();
            alphas.iter().map(|&a| percentile_ci(&column, a)).collect()
        })
        .collect()
}

fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

/// Row indices of nonparametric replicate `replicate` over `n` rows.
pub fn resample_indices(seed: u64, replicate: usize, n: usize) -> Vec<usize> {
    let mut rng = replicate_rng(seed, replicate);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Flat-Dirichlet weights of Bayesian replicate `replicate`; they sum to one.
pub fn bayesian_weights(seed: u64, replicate: usize, n: usize) -> Vec<f64> {
    let mut rng = replicate_rng(seed, replicate);
    let draws: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|d| d / total).collect()
}

fn worker_count(spec: &BootSpec) -> usize {
    let available = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&v| v > 0);
    let wanted = spec.threads.unwrap_or(available);
    cap.map_or(wanted, |c| wanted.min(c)).max(1)
}

/// Runs the bootstrap on the complete cases of `data`.
///
/// Returns the evaluation on the original data alongside the replicate
/// summary. A replicate whose fit fails is counted and skipped.
pub fn run_bootstrap(pipeline: &Pipeline, data: &DataFrame, spec: &BootSpec) -> Result<(Evaluation, BootstrapResult)> {
    if spec.nboot == 0 {
        return Err(ResiError::InvalidArgument("nboot must be at least 1".into()));
    }
    let alphas = normalize_alphas(&spec.alphas)?;
    if spec.method == BootMethod::Bayesian && matches!(pipeline.full().model_kind(), ModelKind::Glm(_)) {
        return Err(ResiError::Unsupported(
            "the Bayesian bootstrap is available for lm and nls models only".into(),
        ));
    }

    let vars = pipeline.variables();
    let var_refs: Vec<&str> = vars.iter().map(String::as_str).collect();
    let complete = data.complete_rows(&var_refs)?;
    let cc = data.take_rows(&complete);
    let original = pipeline.evaluate(&cc, None)?;
    let labels = original.quantity_labels();
    let k = labels.len();

    let mut replicate_pipeline = pipeline.clone().with_levels(original.factor_levels.clone());
    if spec.restart_at_estimates {
        replicate_pipeline = replicate_pipeline.restarted_at(&original.model);
    }
    let n = cc.row_count();
    let run_one = |r: usize| -> Option<Vec<f64>> {
        let eval = match spec.method {
            BootMethod::Nonparametric => {
                let rows = cc.take_rows(&resample_indices(spec.seed, r, n));
                replicate_pipeline.evaluate(&rows, None)
            }
            BootMethod::Bayesian => {
                let w: Vec<f64> = bayesian_weights(spec.seed, r, n).iter().map(|v| v * n as f64).collect();
                replicate_pipeline.evaluate(&cc, Some(&w))
            }
        };
        let q = eval.ok()?.quantities();
        (q.len() == k && q.iter().all(|v| v.is_finite())).then_some(q)
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(spec))
        .build()
        .map_err(|e| ResiError::InvalidArgument(format!("cannot start worker threads: {e}")))?;
    let outcomes: Vec<Option<Vec<f64>>> = pool.install(|| (0..spec.nboot).into_par_iter().map(run_one).collect());
    let reps: Vec<Vec<f64>> = outcomes.into_iter().flatten().collect();
    if reps.is_empty() {
        return Err(ResiError::BootstrapFailed { attempts: spec.nboot });
    }
    let intervals = intervals_from(&reps, k, &alphas)?;
    let result = BootstrapResult {
        method: spec.method,
        labels,
        attempts: spec.nboot,
        successes: reps.len(),
        alphas,
        intervals,
        replicates: spec.store_replicates.then_some(reps),
    };
    Ok((original, result))
}
