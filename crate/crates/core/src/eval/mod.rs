//! Synthetic data, clustering scores, the collapsed log posterior and
//! benchmark orchestration.

mod bench;
mod metrics;
mod split_eval;
mod synth;

pub use bench::{
    read_trace_csv, run_benchmark, write_trace_csv, BenchDataset, BenchReport, BenchSuite, MetricsRow,
    RunSummary, StrategySpec, TraceRecorder,
};
pub use metrics::{ari, best_swap_accuracy, nmi};
pub use split_eval::{eval_split, SplitEvalRow};
pub use synth::{gen_gmm, gen_split_pair, niw_preset, Difficulty, GmmSpec, LabeledData};

use statrs::function::gamma::ln_gamma;

use crate::error::Result;
use crate::niw::log_marginal_likelihood;
use crate::sampler::ModelState;

/// Collapsed partition posterior, up to a constant:
///
/// `K log α + Σₖ [log Γ(Nₖ) + log f(xₖ)] + log Γ(α) − log Γ(α + N)`
///
/// Depends only on the partition, the prior and α.
pub fn log_posterior(state: &ModelState) -> Result<f64> {
    let alpha = state.alpha;
    let mut total = 0.0;
    let mut n = 0usize;
    let mut k = 0usize;
    for c in &state.clusters {
        if c.stats.m == 0 {
            continue;
        }
        k += 1;
        n += c.stats.m;
        total += ln_gamma(c.stats.m as f64) + log_marginal_likelihood(&state.prior, &c.stats)?;
    }
    Ok(k as f64 * alpha.ln() + total + ln_gamma(alpha) - ln_gamma(alpha + n as f64))
}
