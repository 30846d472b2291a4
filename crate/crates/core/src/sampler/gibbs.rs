use rand::Rng;

use super::{sample_posterior, sample_sub_weights, sample_weights, ModelState, Sampler};
use crate::data::Dataset;
use crate::error::Result;
use crate::niw::{GaussianDensity, SuffStats};
use crate::par::{self, CHUNK};

/// Everything the per-point sweep reads: log weights and cached densities.
struct SweepModel {
    log_w: Vec<f64>,
    dens: Vec<GaussianDensity>,
    sub_log_w: Vec<[f64; 2]>,
    sub_dens: Vec<[GaussianDensity; 2]>,
}

impl SweepModel {
    #[inline]
    fn sample_label(&self, x: &[f64], scratch: &mut [f64], u: f64) -> usize {
        let k = self.log_w.len();
        if k == 1 {
            return 0;
        }
        let mut max = f64::NEG_INFINITY;
        for (j, s) in scratch.iter_mut().enumerate() {
            *s = self.log_w[j] + self.dens[j].log_pdf(x);
            max = max.max(*s);
        }
        let mut total = 0.0;
        for s in scratch.iter_mut() {
            *s = (*s - max).exp();
            total += *s;
        }
        let target = u * total;
        let mut acc = 0.0;
        for (j, s) in scratch.iter().enumerate() {
            acc += s;
            if acc > target {
                return j;
            }
        }
        k - 1
    }

    #[inline]
    fn sample_side(&self, k: usize, x: &[f64], u: f64) -> bool {
        let left = self.sub_log_w[k][0] + self.sub_dens[k][0].log_pdf(x);
        let right = self.sub_log_w[k][1] + self.sub_dens[k][1].log_pdf(x);
        // P(right) = 1 / (1 + exp(left − right))
        let p_right = 1.0 / (1.0 + (left - right).exp());
        u < p_right
    }
}

impl Sampler {
    /// One restricted Gibbs sweep. K can only shrink here (clusters left
    /// without points are dropped); new clusters come only from splits.
    pub fn restricted_gibbs_iteration(&mut self, state: &mut ModelState, data: &Dataset) -> Result<()> {
        let alpha = state.alpha;
        let k = state.k();

        // parameters given the current partition
        state.weights = sample_weights(&state.clusters, alpha, &mut self.rng)?;
        for (idx, c) in state.clusters.iter_mut().enumerate() {
            let ctx = |e: crate::Error| e.context(format!("cluster {idx}"));
            c.params = sample_posterior(&state.prior, &c.stats, &mut self.rng).map_err(ctx)?;
            c.sub.weights = sample_sub_weights(&c.sub.stats, alpha, &mut self.rng)?;
            for s in 0..2 {
                c.sub.params[s] =
                    sample_posterior(&state.prior, &c.sub.stats[s], &mut self.rng).map_err(ctx)?;
            }
        }

        let model = {
            let mut dens = Vec::with_capacity(k);
            let mut sub_dens = Vec::with_capacity(k);
            for (idx, c) in state.clusters.iter().enumerate() {
                let ctx = |e: crate::Error| e.context(format!("cluster {idx}"));
                dens.push(GaussianDensity::new(&c.params).map_err(ctx)?);
                sub_dens.push([
                    GaussianDensity::new(&c.sub.params[0]).map_err(ctx)?,
                    GaussianDensity::new(&c.sub.params[1]).map_err(ctx)?,
                ]);
            }
            SweepModel {
                log_w: state.weights.iter().map(|w| w.ln()).collect(),
                dens,
                sub_log_w: state.clusters.iter().map(|c| c.sub.weights.map(f64::ln)).collect(),
                sub_dens,
            }
        };

        // labels and sublabels, chunk-parallel over points
        let step = self.next_step();
        let seed = self.config.rng_seed;
        let d = data.dim();
        let chunk_stats = par::map_chunks_mut(
            self.exec,
            &mut state.labels,
            &mut state.sublabels,
            CHUNK,
            |chunk, offset, labels, sides| {
                let mut rng = par::stream_rng(seed, step, chunk as u64);
                let mut stats: Vec<[SuffStats; 2]> =
                    (0..k).map(|_| [SuffStats::zeros(d), SuffStats::zeros(d)]).collect();
                let mut scratch = vec![0.0; k];
                for (i, (label, side)) in labels.iter_mut().zip(sides.iter_mut()).enumerate() {
                    let x = data.row(offset + i);
                    let z = model.sample_label(x, &mut scratch, rng.random());
                    let s = model.sample_side(z, x, rng.random());
                    *label = z;
                    *side = s;
                    stats[z][s as usize].push(x);
                }
                stats
            },
        );

        let mut sub_stats: Vec<[SuffStats; 2]> =
            (0..k).map(|_| [SuffStats::zeros(d), SuffStats::zeros(d)]).collect();
        for chunk in &chunk_stats {
            for (acc, part) in sub_stats.iter_mut().zip(chunk) {
                acc[0] += &part[0];
                acc[1] += &part[1];
            }
        }
        for (c, [l, r]) in state.clusters.iter_mut().zip(sub_stats) {
            c.stats = &l + &r;
            c.sub.stats = [l, r];
        }

        let keep: Vec<bool> = state.clusters.iter().map(|c| !c.is_empty()).collect();
        if keep.iter().any(|k| !k) {
            compact(state, &keep);
        }

        self.revive_empty_subclusters(state, data)
    }

    /// A cluster whose subcluster lost all its points gets a fresh partition
    /// from the configured initializer; π̄ and θ̄ are then drawn given the new
    /// partition. One-point clusters stay as they are.
    fn revive_empty_subclusters(&mut self, state: &mut ModelState, data: &Dataset) -> Result<()> {
        let stuck: Vec<usize> = state
            .clusters
            .iter()
            .enumerate()
            .filter(|(_, c)| c.len() >= 2 && (c.sub.stats[0].is_empty() || c.sub.stats[1].is_empty()))
            .map(|(i, _)| i)
            .collect();
        if stuck.is_empty() {
            return Ok(());
        }
        let members = state.members();
        let d = data.dim();
        for idx in stuck {
            let key = self.init_key();
            let assignment = self.config.strategy.assign(&data.select(&members[idx]), key)?;
            let mut stats = [SuffStats::zeros(d), SuffStats::zeros(d)];
            for (&i, &side) in members[idx].iter().zip(&assignment.bits) {
                state.sublabels[i] = side;
                stats[side as usize].push(data.row(i));
            }
            let c = &mut state.clusters[idx];
            c.sub.weights = sample_sub_weights(&stats, state.alpha, &mut self.rng)?;
            for (params, s) in c.sub.params.iter_mut().zip(&stats) {
                *params = sample_posterior(&state.prior, s, &mut self.rng)
                    .map_err(|e| e.context(format!("cluster {idx}")))?;
            }
            c.sub.stats = stats;
        }
        Ok(())
    }
}

/// Drops clusters whose `keep` flag is false and relabels the survivors in order.
pub(crate) fn compact(state: &mut ModelState, keep: &[bool]) {
    let mut remap = vec![usize::MAX; keep.len()];
    let mut next = 0;
    for (old, &k) in keep.iter().enumerate() {
        if k {
            remap[old] = next;
            next += 1;
        }
    }
    let mut flags = keep.iter();
    state.clusters.retain(|_| *flags.next().unwrap());
    let mut flags = keep.iter();
    state.weights.retain(|_| *flags.next().unwrap());
    let total: f64 = state.weights.iter().sum();
    if total > 0.0 {
        state.weights.iter_mut().for_each(|w| *w /= total);
    }
    for l in &mut state.labels {
        *l = remap[*l];
        debug_assert!(*l != usize::MAX, "label points at a removed cluster");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SplitInitializer;
    use crate::niw::NiwParams;
    use crate::sampler::tests::two_blobs;
    use crate::sampler::SamplerConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn agreement(a: &[usize], truth: &[usize]) -> f64 {
        let same = a.iter().zip(truth).filter(|(x, y)| x == y).count() as f64 / a.len() as f64;
        same.max(1.0 - same)
    }

    #[test]
    fn sweep_keeps_separated_labels() {
        let (data, truth) = two_blobs(100, 500, 10.0);
        let prior = NiwParams::weak_from_data(&data, None, None, 1.0).unwrap();
        let mut good = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sub: Vec<bool> = (0..1000).map(|_| rng.random()).collect();
            let mut state =
                ModelState::from_partition(&data, truth.clone(), sub, 1.0, prior.clone(), &mut rng).unwrap();
            let mut s = Sampler::new(SamplerConfig { rng_seed: seed, ..Default::default() }).unwrap();
            s.restricted_gibbs_iteration(&mut state, &data).unwrap();
            if state.k() == 2 && agreement(&state.labels, &truth) >= 0.99 {
                good += 1;
            }
            state.check_invariants(&data).unwrap();
        }
        assert!(good >= 95, "{good}/100");
    }

    #[test]
    fn single_cluster_labels_fixed_sublabels_move() {
        let (data, _) = two_blobs(7, 100, 4.0);
        let prior = NiwParams::weak_from_data(&data, None, None, 1.0).unwrap();
        let mut s = Sampler::new(SamplerConfig { rng_seed: 1, ..Default::default() }).unwrap();
        let mut state = s.init_state(&data, 1.0, prior).unwrap();
        let before = state.sublabels.clone();
        s.restricted_gibbs_iteration(&mut state, &data).unwrap();
        assert!(state.labels.iter().all(|&l| l == 0));
        assert_ne!(state.sublabels, before);
        assert_eq!(state.clusters[0].len(), 200);
    }

    #[test]
    fn sweeps_conserve_points_and_never_grow() {
        let (data, _) = two_blobs(8, 300, 3.0);
        let prior = NiwParams::weak_from_data(&data, None, None, 1.0).unwrap();
        let cfg = SamplerConfig {
            initial_k: 6,
            rng_seed: 2,
            strategy: SplitInitializer::kmeans(),
            ..Default::default()
        };
        let mut s = Sampler::new(cfg).unwrap();
        let mut state = s.init_state(&data, 1.0, prior).unwrap();
        let mut k = state.k();
        for _ in 0..15 {
            s.restricted_gibbs_iteration(&mut state, &data).unwrap();
            assert!(state.k() <= k);
            k = state.k();
            state.check_invariants(&data).unwrap();
        }
    }

    #[test]
    fn empty_subcluster_is_revived() {
        let (data, truth) = two_blobs(9, 100, 8.0);
        let prior = NiwParams::weak_from_data(&data, None, None, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // every point on the left side: the right subclusters start empty
        let mut state =
            ModelState::from_partition(&data, truth, vec![false; 200], 1.0, prior, &mut rng).unwrap();
        let mut s = Sampler::new(SamplerConfig::default()).unwrap();
        for _ in 0..3 {
            s.restricted_gibbs_iteration(&mut state, &data).unwrap();
            state.check_invariants(&data).unwrap();
        }
    }
}
