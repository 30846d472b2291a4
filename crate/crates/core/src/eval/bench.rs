//! Benchmark suites: many (dataset, strategy, seed) fits, one trace file each.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::metrics::{ari, nmi};
use super::synth::{gen_gmm, niw_preset, Difficulty, GmmSpec, LabeledData};
use crate::error::{Error, Result};
use crate::init::SplitInitializer;
use crate::niw::NiwParams;
use crate::par::{self, Execution};
use crate::sampler::{fit_with, ModelState, SamplerConfig, TraceRow};
use crate::st::load_weights;

/// One trace line. The ground-truth columns are empty when no labels are known.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iter: usize,
    pub k_inferred: usize,
    pub log_posterior: f64,
    pub nmi: Option<f64>,
    pub ari: Option<f64>,
    pub k_mae: Option<f64>,
    pub elapsed_ms: f64,
    pub splits_accepted: usize,
    pub merges_accepted: usize,
}

/// Turns sampler callbacks into [`MetricsRow`]s.
#[derive(Debug, Default)]
pub struct TraceRecorder<'a> {
    truth: Option<&'a [usize]>,
    k_true: Option<usize>,
    pub rows: Vec<MetricsRow>,
}

impl<'a> TraceRecorder<'a> {
    pub fn new(truth: Option<&'a [usize]>) -> Self {
        let k_true = truth.map(|t| {
            let mut seen: Vec<usize> = t.to_vec();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        });
        Self { truth, k_true, rows: Vec::new() }
    }

    pub fn record(&mut self, row: &TraceRow, state: &ModelState) {
        let (nmi, ari) = match self.truth {
            Some(t) if t.len() == state.labels.len() => {
                (nmi(&state.labels, t).ok(), ari(&state.labels, t).ok())
            }
            _ => (None, None),
        };
        self.rows.push(MetricsRow {
            iter: row.iter,
            k_inferred: row.k,
            log_posterior: row.log_posterior,
            nmi,
            ari,
            k_mae: self.k_true.map(|k| (row.k as f64 - k as f64).abs()),
            elapsed_ms: row.elapsed_ms,
            splits_accepted: row.splits_accepted,
            merges_accepted: row.merges_accepted,
        });
    }
}

pub fn write_trace_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategySpec {
    Random,
    Kmeans,
    Splitnet,
}

impl StrategySpec {
    pub fn name(self) -> &'static str {
        match self {
            StrategySpec::Random => "random",
            StrategySpec::Kmeans => "kmeans",
            StrategySpec::Splitnet => "splitnet",
        }
    }
}

/// A generated data set in a suite. The component prior comes from
/// `difficulty`, with `kappa` overriding its κ.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchDataset {
    pub name: String,
    pub k: usize,
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_alpha_dir")]
    pub alpha_dir: f64,
    #[serde(default = "default_difficulty")]
    pub difficulty: String,
    pub kappa: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Draw a fresh data set for every repeat instead of reusing one.
    #[serde(default)]
    pub vary_data: bool,
}

fn default_alpha_dir() -> f64 {
    10.0
}

fn default_difficulty() -> String {
    "easy".into()
}

impl BenchDataset {
    pub fn spec(&self, seed_offset: u64) -> Result<GmmSpec> {
        let difficulty: Difficulty = self.difficulty.parse()?;
        let kappa = self.kappa.unwrap_or(difficulty.kappa());
        if kappa.is_nan() || kappa <= 0.0 {
            return Err(Error::InvalidConfig(format!("dataset {}: kappa must be positive", self.name)));
        }
        Ok(GmmSpec {
            k: self.k,
            d: self.d,
            n: self.n,
            alpha_dir: self.alpha_dir,
            niw: niw_preset(self.d, kappa),
            seed: self.seed.wrapping_add(seed_offset),
        })
    }
}

/// Suite file contents (TOML).
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchSuite {
    #[serde(default = "default_iters")]
    pub iters: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    /// Sampler seeds; defaults to `0..repeats`.
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_split_period")]
    pub split_period: usize,
    #[serde(default = "default_true")]
    pub merge: bool,
    #[serde(default = "default_one")]
    pub initial_k: usize,
    /// Sampler threads per run.
    #[serde(default = "default_one")]
    pub threads: usize,
    /// Runs executed concurrently.
    #[serde(default = "default_one")]
    pub workers: usize,
    pub prior_kappa: Option<f64>,
    pub prior_nu: Option<f64>,
    #[serde(default = "default_unit")]
    pub prior_psi_scale: f64,
    pub strategies: Vec<StrategySpec>,
    pub splitnet_weights: Option<PathBuf>,
    #[serde(rename = "dataset")]
    pub datasets: Vec<BenchDataset>,
}

fn default_iters() -> usize {
    200
}
fn default_repeats() -> usize {
    10
}
fn default_alpha() -> f64 {
    1.0
}
fn default_unit() -> f64 {
    1.0
}
fn default_split_period() -> usize {
    2
}
fn default_true() -> bool {
    true
}
fn default_one() -> usize {
    1
}

impl BenchSuite {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let suite: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        suite.validate()?;
        Ok(suite)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.repeats as u64).collect())
    }

    fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() || self.datasets.is_empty() {
            return Err(Error::InvalidConfig("suite needs at least one strategy and one dataset".into()));
        }
        if self.seeds().is_empty() {
            return Err(Error::InvalidConfig("suite has no seeds".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        if self.strategies.contains(&StrategySpec::Splitnet) && self.splitnet_weights.is_none() {
            return Err(Error::InvalidConfig("strategy splitnet needs splitnet_weights".into()));
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("dataset names must be unique".into()));
        }
        for d in &self.datasets {
            d.spec(0)?.validate()?;
        }
        Ok(())
    }
}

/// Final state of one run. `error` is set when the fit failed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub trace_file: String,
    pub final_k: Option<usize>,
    pub final_nmi: Option<f64>,
    pub final_ari: Option<f64>,
    pub final_log_posterior: Option<f64>,
    pub splits_accepted: Option<usize>,
    pub elapsed_ms: Option<f64>,
    pub error: Option<String>,
}

/// Medians of the final-iteration values per (dataset, strategy).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub strategy: String,
    pub runs: usize,
    pub failures: usize,
    pub median_nmi: Option<f64>,
    pub median_ari: Option<f64>,
    pub median_k: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub runs: Vec<RunSummary>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

impl BenchReport {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn aggregate(&self) -> Vec<AggregateRow> {
        let mut groups: BTreeMap<(&str, &str), Vec<&RunSummary>> = BTreeMap::new();
        for r in &self.runs {
            groups.entry((&r.dataset, &r.strategy)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((dataset, strategy), runs)| AggregateRow {
                dataset: dataset.to_string(),
                strategy: strategy.to_string(),
                runs: runs.len(),
                failures: runs.iter().filter(|r| r.error.is_some()).count(),
                median_nmi: median(runs.iter().filter_map(|r| r.final_nmi).collect()),
                median_ari: median(runs.iter().filter_map(|r| r.final_ari).collect()),
                median_k: median(runs.iter().filter_map(|r| r.final_k.map(|k| k as f64)).collect()),
            })
            .collect()
    }
}

struct Job {
    dataset: usize,
    strategy: StrategySpec,
    seed: u64,
}

/// Runs every (dataset, strategy, seed) combination of the suite and writes
/// `traces/<dataset>_<strategy>_seed<seed>.csv`, `summary.csv` and
/// `aggregate.csv` under `out_dir`. A failed fit is recorded in its summary
/// row and does not stop the suite.
pub fn run_benchmark(suite: &BenchSuite, out_dir: &Path) -> Result<BenchReport> {
    suite.validate()?;
    let trace_dir = out_dir.join("traces");
    fs::create_dir_all(&trace_dir)?;

    let splitnet = match &suite.splitnet_weights {
        Some(p) if suite.strategies.contains(&StrategySpec::Splitnet) => Some(Arc::new(load_weights(p)?)),
        _ => None,
    };
    let seeds = suite.seeds();
    let shared: Vec<Option<LabeledData>> = suite
        .datasets
        .iter()
        .map(|d| if d.vary_data { Ok(None) } else { gen_gmm(&d.spec(0)?).map(Some) })
        .collect::<Result<_>>()?;

    let mut jobs = Vec::new();
    for dataset in 0..suite.datasets.len() {
        for &strategy in &suite.strategies {
            for &seed in &seeds {
                jobs.push(Job { dataset, strategy, seed });
            }
        }
    }

    let run_one = |i: usize| -> RunSummary {
        let job = &jobs[i];
        let ds = &suite.datasets[job.dataset];
        let file = format!("{}_{}_seed{}.csv", ds.name, job.strategy.name(), job.seed);
        let mut summary = RunSummary {
            dataset: ds.name.clone(),
            strategy: job.strategy.name().to_string(),
            seed: job.seed,
            trace_file: file.clone(),
            final_k: None,
            final_nmi: None,
            final_ari: None,
            final_log_posterior: None,
            splits_accepted: None,
            elapsed_ms: None,
            error: None,
        };
        let strategy = match job.strategy {
            StrategySpec::Random => SplitInitializer::Random,
            StrategySpec::Kmeans => SplitInitializer::kmeans(),
            StrategySpec::Splitnet => SplitInitializer::SplitNet(splitnet.clone().expect("weights loaded")),
        };
        let result = (|| -> Result<Vec<MetricsRow>> {
            let fresh;
            let data = match &shared[job.dataset] {
                Some(d) => d,
                None => {
                    fresh = gen_gmm(&ds.spec(job.seed)?)?;
                    &fresh
                }
            };
            let prior = NiwParams::weak_from_data(
                &data.points,
                suite.prior_kappa,
                suite.prior_nu,
                suite.prior_psi_scale,
            )?;
            let config = SamplerConfig {
                iters: suite.iters,
                split_period: suite.split_period,
                merge_enabled: suite.merge,
                initial_k: suite.initial_k,
                rng_seed: job.seed,
                threads: suite.threads,
                strategy,
            };
            let mut rec = TraceRecorder::new(Some(&data.labels));
            fit_with(&data.points, suite.alpha, prior, config, |row, state| rec.record(row, state))?;
            write_trace_csv(&trace_dir.join(&file), &rec.rows)?;
            Ok(rec.rows)
        })();
        match result {
            Ok(rows) => {
                if let Some(last) = rows.last() {
                    summary.final_k = Some(last.k_inferred);
                    summary.final_nmi = last.nmi;
                    summary.final_ari = last.ari;
                    summary.final_log_posterior = Some(last.log_posterior);
                    summary.elapsed_ms = Some(last.elapsed_ms);
                }
                summary.splits_accepted = Some(rows.iter().map(|r| r.splits_accepted).sum());
            }
            Err(e) => {
                log::warn!("{} {} seed {} failed: {e}", ds.name, job.strategy.name(), job.seed);
                summary.error = Some(e.to_string());
            }
        }
        summary
    };

    let runs = par::with_threads(suite.workers, || {
        par::map_range(Execution::for_threads(suite.workers), jobs.len(), run_one)
    });
    let report = BenchReport { runs };

    let mut w = csv::Writer::from_path(out_dir.join("summary.csv"))?;
    for r in &report.runs {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out_dir.join("aggregate.csv"))?;
    for r in report.aggregate() {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(report)
}
