//! Scoring split initializers on generated two-component pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::metrics::best_swap_accuracy;
use super::synth::{gen_split_pair, Difficulty};
use crate::error::Result;
use crate::init::SplitInitializer;
use crate::niw::SuffStats;
use crate::sampler::split_log_hastings;

/// One (pair, strategy) result.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitEvalRow {
    pub pair: usize,
    pub strategy: String,
    pub n: usize,
    pub accuracy: f64,
    /// Log Hastings ratio of the partition the strategy produced.
    pub log_h: f64,
}

/// Generates `pairs` splittable pairs at `difficulty` and runs every
/// strategy on each. The generator prior also serves as the prior for the
/// Hastings ratio.
pub fn eval_split(
    difficulty: Difficulty,
    dim: usize,
    pairs: usize,
    n_max: usize,
    alpha: f64,
    strategies: &[SplitInitializer],
    seed: u64,
) -> Result<Vec<SplitEvalRow>> {
    for s in strategies {
        s.check_dim(dim)?;
    }
    let niw = difficulty.niw(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(pairs * strategies.len());
    for pair in 0..pairs {
        let data = gen_split_pair(&niw, 1.0, n_max, &niw, alpha, &mut rng)?;
        let truth: Vec<bool> = data.labels.iter().map(|&l| l == 1).collect();
        let whole = SuffStats::from_rows(dim, data.points.rows());
        for (s_idx, strategy) in strategies.iter().enumerate() {
            let key = seed ^ ((pair as u64) << 8 | s_idx as u64);
            let assignment = strategy.assign(&data.points, key)?;
            let mut sides = [SuffStats::zeros(dim), SuffStats::zeros(dim)];
            for (x, &b) in data.points.rows().zip(&assignment.bits) {
                sides[b as usize].push(x);
            }
            let log_h = split_log_hastings(&whole, &sides[0], &sides[1], alpha, &niw)?;
            rows.push(SplitEvalRow {
                pair,
                strategy: strategy.name().to_string(),
                n: data.points.n(),
                accuracy: best_swap_accuracy(&assignment.bits, &truth),
                log_h,
            });
        }
    }
    Ok(rows)
}
