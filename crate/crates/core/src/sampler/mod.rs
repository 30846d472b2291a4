//! Subcluster split/merge sampler for the DP Gaussian mixture.
//!
//! Every instantiated cluster carries two auxiliary subclusters. A restricted
//! Gibbs sweep updates weights, parameters and labels without changing K;
//! every `split_period` sweeps each cluster is proposed for a split into its
//! subclusters and random disjoint pairs are proposed for merging.

mod gibbs;
mod moves;

pub use moves::split_log_hastings;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::log_posterior;
use crate::init::{SplitInitializer, SubAssignment};
use crate::niw::{niw_posterior, sample_niw, GaussianParams, NiwParams, SuffStats};
use crate::par::{self, Execution};

/// The two auxiliary components attached to a cluster; index 0 is the left
/// subcluster, index 1 the right one.
#[derive(Clone, Debug)]
pub struct SubclusterPair {
    pub params: [GaussianParams; 2],
    pub weights: [f64; 2],
    pub stats: [SuffStats; 2],
}

#[derive(Clone, Debug)]
pub struct Cluster {
    pub params: GaussianParams,
    pub stats: SuffStats,
    pub sub: SubclusterPair,
}

impl Cluster {
    pub fn len(&self) -> usize {
        self.stats.m
    }

    pub fn is_empty(&self) -> bool {
        self.stats.m == 0
    }
}

/// Full sampler state: clusters, weights and both label layers.
#[derive(Clone, Debug)]
pub struct ModelState {
    pub clusters: Vec<Cluster>,
    /// Weights of the instantiated clusters, normalized to sum to one.
    pub weights: Vec<f64>,
    pub labels: Vec<usize>,
    /// Subcluster side per point: `false` left, `true` right.
    pub sublabels: Vec<bool>,
    pub alpha: f64,
    pub prior: NiwParams,
}

impl ModelState {
    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    /// Point indices of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Builds a state from explicit labels and sublabels; labels must use
    /// every index in `0..K`. Parameters and weights are drawn from their
    /// conditionals given the partition.
    pub fn from_partition<R: Rng + ?Sized>(
        data: &Dataset,
        labels: Vec<usize>,
        sublabels: Vec<bool>,
        alpha: f64,
        prior: NiwParams,
        rng: &mut R,
    ) -> Result<Self> {
        if labels.len() != data.n() || sublabels.len() != data.n() {
            return Err(Error::InvalidData("label vectors must have one entry per point".into()));
        }
        if prior.dim() != data.dim() {
            return Err(Error::DimensionMismatch { expected: data.dim(), got: prior.dim() });
        }
        let k = labels.iter().max().map_or(0, |m| m + 1);
        let sub_stats = gather_sub_stats(data, &labels, &sublabels, k);
        if let Some(empty) = sub_stats.iter().position(|s| s[0].m + s[1].m == 0) {
            return Err(Error::InvalidData(format!("cluster {empty} has no points")));
        }
        let mut clusters = Vec::with_capacity(k);
        for (idx, [left, right]) in sub_stats.into_iter().enumerate() {
            let stats = &left + &right;
            let cluster = new_cluster(&prior, alpha, stats, [left, right], rng)
                .map_err(|e| e.context(format!("cluster {idx}")))?;
            clusters.push(cluster);
        }
        let weights = sample_weights(&clusters, alpha, rng)?;
        Ok(Self { clusters, weights, labels, sublabels, alpha, prior })
    }

    /// Checks counts, label ranges and sufficient statistics against the data.
    pub fn check_invariants(&self, data: &Dataset) -> std::result::Result<(), String> {
        if self.labels.len() != data.n() || self.sublabels.len() != data.n() {
            return Err("label length differs from point count".into());
        }
        if self.weights.len() != self.k() {
            return Err("weight count differs from K".into());
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= self.k()) {
            return Err(format!("label {l} does not index a live cluster"));
        }
        let total: usize = self.clusters.iter().map(Cluster::len).sum();
        if total != data.n() {
            return Err(format!("cluster counts sum to {total}, expected {}", data.n()));
        }
        let fresh = gather_sub_stats(data, &self.labels, &self.sublabels, self.k());
        for (k, (c, [l, r])) in self.clusters.iter().zip(&fresh).enumerate() {
            if c.stats.m == 0 {
                return Err(format!("cluster {k} is empty"));
            }
            if c.sub.stats[0].m != l.m || c.sub.stats[1].m != r.m {
                return Err(format!("cluster {k}: subcluster counts do not match sublabels"));
            }
            if c.stats.m != l.m + r.m {
                return Err(format!("cluster {k}: count differs from its subclusters"));
            }
            let scale = c.stats.sum_xxt.amax().max(1.0);
            let drift = (&c.stats.sum_xxt - (&l.sum_xxt + &r.sum_xxt)).amax();
            if drift > 1e-8 * scale {
                return Err(format!("cluster {k}: stale sufficient statistics"));
            }
            let w = c.sub.weights;
            if !(w[0] > 0.0 && w[1] > 0.0 && ((w[0] + w[1]) - 1.0).abs() < 1e-9) {
                return Err(format!("cluster {k}: subcluster weights {w:?} not on the simplex"));
            }
        }
        Ok(())
    }
}

/// Per-cluster `[left, right]` statistics recomputed from the labels.
pub(crate) fn gather_sub_stats(
    data: &Dataset,
    labels: &[usize],
    sublabels: &[bool],
    k: usize,
) -> Vec<[SuffStats; 2]> {
    let d = data.dim();
    let mut out: Vec<[SuffStats; 2]> = (0..k).map(|_| [SuffStats::zeros(d), SuffStats::zeros(d)]).collect();
    for ((x, &l), &s) in data.rows().zip(labels).zip(sublabels) {
        out[l][s as usize].push(x);
    }
    out
}

/// Draws a symmetric-Dirichlet-style vector from Gamma(shape_i, 1) variates.
pub(crate) fn sample_dirichlet<R: Rng + ?Sized>(shapes: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut draws = shapes
        .iter()
        .map(|&a| {
            Gamma::new(a, 1.0)
                .map(|g| g.sample(rng))
                .map_err(|e| Error::InvalidParams(format!("gamma({a}): {e}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|v| *v /= total);
    } else {
        // every draw underflowed; fall back to the largest shape
        let best = shapes.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map_or(0, |(i, _)| i);
        draws.iter_mut().enumerate().for_each(|(i, v)| *v = (i == best) as u8 as f64);
    }
    Ok(draws)
}

/// π ~ Dir(N₁, …, N_K, α); the remainder mass is dropped and the first K
/// entries renormalized.
pub(crate) fn sample_weights<R: Rng + ?Sized>(
    clusters: &[Cluster],
    alpha: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut shapes: Vec<f64> = clusters.iter().map(|c| c.len() as f64).collect();
    shapes.push(alpha);
    let mut w = sample_dirichlet(&shapes, rng)?;
    w.pop();
    let total: f64 = w.iter().sum();
    if total > 0.0 {
        w.iter_mut().for_each(|v| *v /= total);
    } else {
        let uniform = 1.0 / w.len() as f64;
        w.iter_mut().for_each(|v| *v = uniform);
    }
    Ok(w)
}

/// Subcluster weights π̄ ~ Dir(N_l + α/2, N_r + α/2), kept strictly inside the simplex.
pub(crate) fn sample_sub_weights<R: Rng + ?Sized>(
    stats: &[SuffStats; 2],
    alpha: f64,
    rng: &mut R,
) -> Result<[f64; 2]> {
    let w = sample_dirichlet(&[stats[0].m as f64 + alpha / 2.0, stats[1].m as f64 + alpha / 2.0], rng)?;
    let left = w[0].clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    Ok([left, 1.0 - left])
}

pub(crate) fn sample_posterior<R: Rng + ?Sized>(
    prior: &NiwParams,
    stats: &SuffStats,
    rng: &mut R,
) -> Result<GaussianParams> {
    sample_niw(&niw_posterior(prior, stats), rng)
}

pub(crate) fn new_cluster<R: Rng + ?Sized>(
    prior: &NiwParams,
    alpha: f64,
    stats: SuffStats,
    sub_stats: [SuffStats; 2],
    rng: &mut R,
) -> Result<Cluster> {
    let params = sample_posterior(prior, &stats, rng)?;
    let sub_params =
        [sample_posterior(prior, &sub_stats[0], rng)?, sample_posterior(prior, &sub_stats[1], rng)?];
    let weights = sample_sub_weights(&sub_stats, alpha, rng)?;
    Ok(Cluster { params, stats, sub: SubclusterPair { params: sub_params, weights, stats: sub_stats } })
}

/// Sampler settings.
#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub iters: usize,
    /// Sweeps between split/merge rounds.
    pub split_period: usize,
    pub merge_enabled: bool,
    pub initial_k: usize,
    pub rng_seed: u64,
    pub threads: usize,
    pub strategy: SplitInitializer,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iters: 100,
            split_period: 2,
            merge_enabled: true,
            initial_k: 1,
            rng_seed: 0,
            threads: 1,
            strategy: SplitInitializer::Random,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.split_period == 0 {
            return Err(Error::InvalidConfig("split_period must be at least 1".into()));
        }
        if self.initial_k == 0 {
            return Err(Error::InvalidConfig("initial_k must be at least 1".into()));
        }
        if self.threads == 0 {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// One row of the per-iteration trace.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub k: usize,
    pub log_posterior: f64,
    /// Milliseconds since the start of `fit`.
    pub elapsed_ms: f64,
    pub splits_proposed: usize,
    pub splits_accepted: usize,
    pub merges_proposed: usize,
    pub merges_accepted: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationTrace {
    pub rows: Vec<TraceRow>,
}

/// Mutable sampler context: the main RNG stream, the step counter that keys
/// per-chunk streams, and the subcluster initializer.
#[derive(Debug)]
pub struct Sampler {
    config: SamplerConfig,
    exec: Execution,
    rng: ChaCha8Rng,
    step: u64,
}

impl Sampler {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            exec: Execution::for_threads(config.threads),
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            step: 0,
            config,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Overrides how per-point sweeps run; results are identical either way.
    pub fn set_execution(&mut self, exec: Execution) {
        self.exec = exec;
    }

    fn next_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    /// Seed for one initializer call, combined with the cluster's content hash.
    fn init_key(&mut self) -> u64 {
        let step = self.next_step();
        par::splitmix64(self.config.rng_seed ^ par::splitmix64(step))
    }

    /// Random labels over `initial_k` clusters; subclusters from the strategy.
    pub fn init_state(&mut self, data: &Dataset, alpha: f64, prior: NiwParams) -> Result<ModelState> {
        let (n, d) = (data.n(), data.dim());
        if n < 2 || d == 0 {
            return Err(Error::InvalidData(format!("need N >= 2 and D >= 1, got {n}x{d}")));
        }
        if prior.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: prior.dim() });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha must be positive, got {alpha}")));
        }
        if n < self.config.initial_k {
            return Err(Error::InvalidConfig(format!(
                "initial_k = {} exceeds N = {n}",
                self.config.initial_k
            )));
        }
        self.config.strategy.check_dim(d)?;

        let k0 = self.config.initial_k;
        let mut labels: Vec<usize> = (0..n).map(|_| self.rng.random_range(0..k0)).collect();
        let mut seen = vec![usize::MAX; k0];
        let mut next = 0;
        for l in &mut labels {
            if seen[*l] == usize::MAX {
                seen[*l] = next;
                next += 1;
            }
        }
        // relabel by first appearance so empty initial clusters vanish
        labels.iter_mut().for_each(|l| *l = seen[*l]);

        let mut sublabels = vec![false; n];
        let mut members = vec![Vec::new(); next];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        for idx in &members {
            let assignment = self.initial_split(data, idx)?;
            for (&i, &b) in idx.iter().zip(&assignment.bits) {
                sublabels[i] = b;
            }
        }
        ModelState::from_partition(data, labels, sublabels, alpha, prior, &mut self.rng)
    }

    fn initial_split(&mut self, data: &Dataset, members: &[usize]) -> Result<SubAssignment> {
        let key = self.init_key();
        self.config.strategy.assign(&data.select(members), key)
    }

    /// Runs `iters` sweeps with split/merge rounds every `split_period` sweeps.
    pub fn run(
        &mut self,
        state: &mut ModelState,
        data: &Dataset,
        mut on_iter: impl FnMut(&TraceRow, &ModelState),
    ) -> Result<IterationTrace> {
        let start = Instant::now();
        let mut trace = IterationTrace::default();
        for t in 1..=self.config.iters {
            self.restricted_gibbs_iteration(state, data).map_err(|e| e.context(format!("iteration {t}")))?;
            let mut row = TraceRow {
                iter: t,
                k: 0,
                log_posterior: 0.0,
                elapsed_ms: 0.0,
                splits_proposed: 0,
                splits_accepted: 0,
                merges_proposed: 0,
                merges_accepted: 0,
            };
            if t % self.config.split_period == 0 {
                row.splits_proposed = state.k();
                let split = self.split_round(state, data).map_err(|e| e.context(format!("iteration {t}")))?;
                row.splits_accepted = split.len();
                if self.config.merge_enabled {
                    // clusters born in this round are not merge candidates
                    let born: Vec<usize> = split.iter().flat_map(|&(a, b)| [a, b]).collect();
                    let outcome =
                        self.merge_round(state, &born).map_err(|e| e.context(format!("iteration {t}")))?;
                    row.merges_proposed = outcome.proposed;
                    row.merges_accepted = outcome.accepted.len();
                }
            }
            row.k = state.k();
            row.log_posterior = log_posterior(state).map_err(|e| e.context(format!("iteration {t}")))?;
            row.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
            on_iter(&row, state);
            trace.rows.push(row);
        }
        Ok(trace)
    }
}

/// Initializes and runs the sampler.
pub fn fit(
    data: &Dataset,
    alpha: f64,
    prior: NiwParams,
    config: SamplerConfig,
) -> Result<(ModelState, IterationTrace)> {
    fit_with(data, alpha, prior, config, |_, _| {})
}

/// [`fit`] with a callback after every iteration.
pub fn fit_with(
    data: &Dataset,
    alpha: f64,
    prior: NiwParams,
    config: SamplerConfig,
    on_iter: impl FnMut(&TraceRow, &ModelState) + Send,
) -> Result<(ModelState, IterationTrace)> {
    let threads = config.threads;
    par::with_threads(threads, move || {
        let mut sampler = Sampler::new(config)?;
        let mut state = sampler.init_state(data, alpha, prior)?;
        let trace = sampler.run(&mut state, data, on_iter)?;
        Ok((state, trace))
    })
}
