use rand::seq::SliceRandom;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use super::gibbs::compact;
use super::{new_cluster, sample_posterior, Cluster, ModelState, Sampler, SubclusterPair};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::niw::{log_marginal_likelihood, NiwParams, SuffStats};

/// Log Hastings ratio for splitting `parent` into `left` and `right`:
///
/// `log α + log Γ(N_l) + log f(x_l) + log Γ(N_r) + log f(x_r) − log Γ(N) − log f(x)`
///
/// The two sides enter through a single commutative sum, so swapping them
/// returns the identical value.
pub fn split_log_hastings(
    parent: &SuffStats,
    left: &SuffStats,
    right: &SuffStats,
    alpha: f64,
    prior: &NiwParams,
) -> Result<f64> {
    if left.m == 0 || right.m == 0 {
        return Err(Error::EmptySubcluster);
    }
    let side =
        |s: &SuffStats| -> Result<f64> { Ok(ln_gamma(s.m as f64) + log_marginal_likelihood(prior, s)?) };
    let whole = ln_gamma(parent.m as f64) + log_marginal_likelihood(prior, parent)?;
    Ok(alpha.ln() + (side(left)? + side(right)?) - whole)
}

/// Result of one round of merge proposals.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MergeOutcome {
    pub proposed: usize,
    /// Accepted pairs as cluster indices before the round was applied.
    pub accepted: Vec<(usize, usize)>,
}

impl Sampler {
    /// Proposes splitting every cluster along its current subclusters and
    /// applies the accepted ones. Returns the indices (before the round) of
    /// the clusters that were split.
    pub fn propose_splits(&mut self, state: &mut ModelState, data: &Dataset) -> Result<Vec<usize>> {
        Ok(self.split_round(state, data)?.into_iter().map(|(k, _)| k).collect())
    }

    /// Like [`Sampler::propose_splits`] but returns `(kept_index, new_index)`
    /// for each accepted split.
    pub(crate) fn split_round(
        &mut self,
        state: &mut ModelState,
        data: &Dataset,
    ) -> Result<Vec<(usize, usize)>> {
        let mut accepted = Vec::new();
        for (k, c) in state.clusters.iter().enumerate() {
            let log_h = match split_log_hastings(
                &c.stats,
                &c.sub.stats[0],
                &c.sub.stats[1],
                state.alpha,
                &state.prior,
            ) {
                Ok(v) => v,
                Err(Error::EmptySubcluster) => continue,
                Err(e) => return Err(e.context(format!("split of cluster {k}"))),
            };
            let u: f64 = self.rng.random();
            if u.ln() < log_h {
                accepted.push(k);
            }
        }
        if accepted.is_empty() {
            return Ok(Vec::new());
        }

        let members = state.members();
        let mut out = Vec::with_capacity(accepted.len());
        for k in accepted {
            let new_index = state.k();
            let parent_weight = state.weights[k];
            let sub_weights = state.clusters[k].sub.weights;
            let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
                members[k].iter().partition(|&&i| !state.sublabels[i]);
            for &i in &right_idx {
                state.labels[i] = new_index;
            }
            let left = self
                .split_child(state, data, &left_idx)
                .map_err(|e| e.context(format!("split of cluster {k}")))?;
            let right = self
                .split_child(state, data, &right_idx)
                .map_err(|e| e.context(format!("split of cluster {k}")))?;
            state.clusters[k] = left;
            state.clusters.push(right);
            state.weights[k] = parent_weight * sub_weights[0];
            state.weights.push(parent_weight * sub_weights[1]);
            out.push((k, new_index));
        }
        Ok(out)
    }

    /// Builds a cluster from a former subcluster, with fresh subclusters from
    /// the configured initializer.
    fn split_child(&mut self, state: &mut ModelState, data: &Dataset, idx: &[usize]) -> Result<Cluster> {
        let points = data.select(idx);
        let key = self.init_key();
        let assignment = self.config.strategy.assign(&points, key)?;
        let d = data.dim();
        let mut sub_stats = [SuffStats::zeros(d), SuffStats::zeros(d)];
        for ((&i, &side), x) in idx.iter().zip(&assignment.bits).zip(points.rows()) {
            state.sublabels[i] = side;
            sub_stats[side as usize].push(x);
        }
        let stats = &sub_stats[0] + &sub_stats[1];
        new_cluster(&state.prior, state.alpha, stats, sub_stats, &mut self.rng)
    }

    /// One round of random disjoint merge proposals over all clusters.
    pub fn propose_merges(&mut self, state: &mut ModelState) -> Result<Vec<(usize, usize)>> {
        Ok(self.merge_round(state, &[])?.accepted)
    }

    /// Merge round that leaves the clusters in `exclude` out of the pairing.
    pub(crate) fn merge_round(&mut self, state: &mut ModelState, exclude: &[usize]) -> Result<MergeOutcome> {
        let mut candidates: Vec<usize> = (0..state.k()).filter(|k| !exclude.contains(k)).collect();
        if candidates.len() < 2 {
            return Ok(MergeOutcome::default());
        }
        candidates.shuffle(&mut self.rng);
        let mut outcome = MergeOutcome::default();
        for pair in candidates.chunks_exact(2) {
            let (i, j) = (pair[0].min(pair[1]), pair[0].max(pair[1]));
            outcome.proposed += 1;
            let (a, b) = (&state.clusters[i].stats, &state.clusters[j].stats);
            let merged = a + b;
            let log_h = split_log_hastings(&merged, a, b, state.alpha, &state.prior)
                .map_err(|e| e.context(format!("merge of clusters {i} and {j}")))?;
            let u: f64 = self.rng.random();
            if u.ln() < -log_h {
                outcome.accepted.push((i, j));
            }
        }
        if outcome.accepted.is_empty() {
            return Ok(outcome);
        }

        self.apply_merges(state, &outcome.accepted)?;
        Ok(outcome)
    }

    /// Merges cluster `j` into cluster `i` unconditionally. The merged
    /// cluster's subclusters are the two former clusters.
    pub fn merge_pair(&mut self, state: &mut ModelState, i: usize, j: usize) -> Result<()> {
        if i == j || i >= state.k() || j >= state.k() {
            return Err(Error::InvalidParams(format!("cannot merge clusters {i} and {j} of {}", state.k())));
        }
        self.apply_merges(state, &[(i.min(j), i.max(j))])
    }

    /// Applies disjoint merges `(i, j)` with `i < j`: former cluster i becomes
    /// the left subcluster, j the right, and j's slot is removed.
    fn apply_merges(&mut self, state: &mut ModelState, pairs: &[(usize, usize)]) -> Result<()> {
        let mut target: Vec<Option<(usize, bool)>> = vec![None; state.k()];
        let mut keep = vec![true; state.k()];
        for &(i, j) in pairs {
            target[i] = Some((i, false));
            target[j] = Some((i, true));
            self.merge_into(state, i, j).map_err(|e| e.context(format!("merge of clusters {i} and {j}")))?;
            keep[j] = false;
        }
        for (l, s) in state.labels.iter_mut().zip(state.sublabels.iter_mut()) {
            if let Some((to, side)) = target[*l] {
                *l = to;
                *s = side;
            }
        }
        compact(state, &keep);
        Ok(())
    }

    fn merge_into(&mut self, state: &mut ModelState, i: usize, j: usize) -> Result<()> {
        let absorbed = state.clusters[j].clone();
        let kept = &state.clusters[i];
        let stats = &kept.stats + &absorbed.stats;
        let n = stats.m as f64;
        let sub = SubclusterPair {
            params: [kept.params.clone(), absorbed.params.clone()],
            weights: [kept.len() as f64 / n, absorbed.len() as f64 / n],
            stats: [kept.stats.clone(), absorbed.stats.clone()],
        };
        let params = sample_posterior(&state.prior, &stats, &mut self.rng)?;
        state.clusters[i] = Cluster { params, stats, sub };
        state.weights[i] += state.weights[j];
        Ok(())
    }
}
