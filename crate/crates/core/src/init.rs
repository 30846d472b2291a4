//! Subcluster initialization strategies.
//!
//! Each strategy turns the points of one cluster into a two-way partition
//! that seeds the cluster's pair of subclusters.

use std::cmp::Ordering;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::par::splitmix64;
use crate::st::{set_transformer_forward, StWeights};

/// Per-point side of a two-way partition: `false` is the left subcluster,
/// `true` the right one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubAssignment {
    pub bits: Vec<bool>,
}

impl SubAssignment {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Number of points on the right side.
    pub fn count_right(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn both_sides_nonempty(&self) -> bool {
        let r = self.count_right();
        r > 0 && r < self.bits.len()
    }
}

/// Fair coin per point.
pub fn init_random<R: Rng + ?Sized>(n_points: usize, rng: &mut R) -> SubAssignment {
    SubAssignment { bits: (0..n_points).map(|_| rng.random::<bool>()).collect() }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KMeansConfig {
    pub max_iters: usize,
    /// Stop once inertia improves by less than this fraction.
    pub rel_tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { max_iters: 100, rel_tol: 1e-6 }
    }
}

/// 2-means with k-means++ seeding and default settings.
pub fn init_kmeans2<R: Rng + ?Sized>(points: &Dataset, rng: &mut R) -> Result<SubAssignment> {
    kmeans2(points, &KMeansConfig::default(), rng)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
}

/// Lloyd's algorithm with K=2.
///
/// Runs on the points sorted lexicographically, so seeding draws and centroid
/// sums do not depend on the input row order; the result is mapped back to
/// the caller's order.
pub fn kmeans2<R: Rng + ?Sized>(
    points: &Dataset,
    config: &KMeansConfig,
    rng: &mut R,
) -> Result<SubAssignment> {
    let n = points.n();
    if n < 2 {
        return Err(Error::DegenerateCluster);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp(points.row(a), points.row(b)));
    let sorted = points.select(&order);
    if lex_cmp(sorted.row(0), sorted.row(n - 1)).is_eq() {
        return Err(Error::DegenerateCluster);
    }

    // k-means++: uniform first center, D²-weighted second
    let first = rng.random_range(0..n);
    let mut centers = [sorted.row(first).to_vec(), Vec::new()];
    let d2: Vec<f64> = sorted.rows().map(|x| sq_dist(x, &centers[0])).collect();
    let total: f64 = d2.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut second = n - 1;
    for (i, w) in d2.iter().enumerate() {
        acc += w;
        if acc > target && *w > 0.0 {
            second = i;
            break;
        }
    }
    if d2[second] == 0.0 {
        second = d2.iter().rposition(|w| *w > 0.0).expect("two distinct points");
    }
    centers[1] = sorted.row(second).to_vec();

    let mut side = vec![false; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..config.max_iters {
        let mut inertia = 0.0;
        for (i, x) in sorted.rows().enumerate() {
            let (d0, d1) = (sq_dist(x, &centers[0]), sq_dist(x, &centers[1]));
            side[i] = d1 < d0;
            inertia += d0.min(d1);
        }
        repair_empty_side(&sorted, &mut side, &centers);

        let d = sorted.dim();
        let mut sums = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (x, &s) in sorted.rows().zip(&side) {
            let c = s as usize;
            counts[c] += 1;
            for (acc, v) in sums[c].iter_mut().zip(x) {
                *acc += v;
            }
        }
        for c in 0..2 {
            centers[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
        }

        let improved = prev_inertia - inertia;
        prev_inertia = inertia;
        if improved.is_finite() && improved <= config.rel_tol * inertia {
            break;
        }
    }

    let mut bits = vec![false; n];
    for (pos, &orig) in order.iter().enumerate() {
        bits[orig] = side[pos];
    }
    Ok(SubAssignment { bits })
}

/// Moves the point farthest from the occupied center onto an empty side.
fn repair_empty_side(points: &Dataset, side: &mut [bool], centers: &[Vec<f64>; 2]) {
    let right = side.iter().filter(|s| **s).count();
    if right > 0 && right < side.len() {
        return;
    }
    let occupied = (right > 0) as usize;
    let far = points
        .rows()
        .enumerate()
        .max_by(|a, b| sq_dist(a.1, &centers[occupied]).total_cmp(&sq_dist(b.1, &centers[occupied])))
        .map(|(i, _)| i)
        .unwrap_or(0);
    side[far] = !side[far];
}

/// Per-dimension standardization `(x − mean)/std`, std floored at 1e-8.
pub fn standardize(points: &Dataset) -> DMatrix<f32> {
    let (n, d) = (points.n(), points.dim());
    let mean = points.mean();
    let mut var = vec![0.0; d];
    for row in points.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n.max(1) as f64).sqrt().max(1e-8)).collect();
    DMatrix::from_fn(n, d, |i, j| ((points.row(i)[j] - mean[j]) / std[j]) as f32)
}

/// SplitNet partition: standardize, run the set transformer, threshold
/// sigmoid(logit) at 0.5. An all-one-side result is repaired by flipping the
/// point whose logit leans furthest toward the empty side.
pub fn init_splitnet(points: &Dataset, weights: &StWeights) -> Result<SubAssignment> {
    if points.dim() != weights.meta.input_dim {
        return Err(Error::DimensionMismatch { expected: weights.meta.input_dim, got: points.dim() });
    }
    let logits = set_transformer_forward(&standardize(points), weights)?;
    let mut bits: Vec<bool> = logits.iter().map(|&l| l >= 0.0).collect();
    let assignment = SubAssignment { bits: bits.clone() };
    if bits.len() >= 2 && !assignment.both_sides_nonempty() {
        let all_right = bits[0];
        let pick = logits
            .iter()
            .enumerate()
            .reduce(|best, cur| {
                let better = if all_right { cur.1 < best.1 } else { cur.1 > best.1 };
                if better {
                    cur
                } else {
                    best
                }
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        bits[pick] = !bits[pick];
    }
    Ok(SubAssignment { bits })
}

/// Order-independent hash of a point set's contents.
pub fn content_hash(points: &Dataset) -> u64 {
    points.rows().fold(0u64, |acc, row| {
        let h = row.iter().fold(0x51_7C_C1_B7_27_22_0A_95u64, |h, v| splitmix64(h ^ v.to_bits()));
        acc.wrapping_add(h)
    })
}

/// The pluggable subcluster initializer used by the sampler.
#[derive(Clone, Debug)]
pub enum SplitInitializer {
    Random,
    KMeans2(KMeansConfig),
    SplitNet(Arc<StWeights>),
}

impl SplitInitializer {
    pub fn kmeans() -> Self {
        SplitInitializer::KMeans2(KMeansConfig::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            SplitInitializer::Random => "random",
            SplitInitializer::KMeans2(_) => "kmeans",
            SplitInitializer::SplitNet(_) => "splitnet",
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match self {
            SplitInitializer::SplitNet(w) if w.meta.input_dim != d => {
                Err(Error::DimensionMismatch { expected: w.meta.input_dim, got: d })
            }
            _ => Ok(()),
        }
    }

    /// Partitions `points`. The RNG is keyed by `seed` and the content hash of
    /// the points, so a permuted copy of the same cluster gets the same draws.
    /// Degenerate clusters fall back to the random strategy.
    pub fn assign(&self, points: &Dataset, seed: u64) -> Result<SubAssignment> {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ content_hash(points)));
        match self {
            SplitInitializer::Random => Ok(init_random(points.n(), &mut rng)),
            SplitInitializer::KMeans2(cfg) => match kmeans2(points, cfg, &mut rng) {
                Err(Error::DegenerateCluster) => Ok(init_random(points.n(), &mut rng)),
                other => other,
            },
            SplitInitializer::SplitNet(w) => {
                if points.n() < 2 {
                    Ok(init_random(points.n(), &mut rng))
                } else {
                    init_splitnet(points, w)
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::st::StMeta;
    use rand_distr::StandardNormal;

    fn blobs(rng: &mut ChaCha8Rng, per: usize, offset: f64) -> (Dataset, Vec<bool>) {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for side in [false, true] {
            let cx = if side { offset } else { -offset };
            for _ in 0..per {
                let x: f64 = rng.sample(StandardNormal);
                let y: f64 = rng.sample(StandardNormal);
                rows.push(vec![cx + x, y]);
                truth.push(side);
            }
        }
        (Dataset::from_rows(&rows).unwrap(), truth)
    }

    fn best_swap_accuracy(a: &[bool], b: &[bool]) -> f64 {
        let same = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64;
        same.max(1.0 - same)
    }

    #[test]
    fn random_lengths_and_determinism() {
        let a = init_random(1, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a.len(), 1);
        let big = init_random(10_000, &mut ChaCha8Rng::seed_from_u64(3));
        let frac = big.count_right() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
        assert_eq!(big, init_random(10_000, &mut ChaCha8Rng::seed_from_u64(3)));
    }

    #[test]
    fn kmeans_recovers_separated_blobs() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (data, truth) = blobs(&mut rng, 100, 10.0);
            let a = init_kmeans2(&data, &mut rng).unwrap();
            assert_eq!(best_swap_accuracy(&a.bits, &truth), 1.0, "seed {seed}");
        }
    }

    #[test]
    fn kmeans_two_distinct_points() {
        let data = Dataset::from_rows(&[vec![0.0, 1.0], vec![3.0, -1.0]]).unwrap();
        let a = init_kmeans2(&data, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(a.both_sides_nonempty());
    }

    #[test]
    fn kmeans_identical_points_degenerate() {
        let data = Dataset::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        assert!(matches!(
            init_kmeans2(&data, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(Error::DegenerateCluster)
        ));
        let fallback = SplitInitializer::kmeans().assign(&data, 3).unwrap();
        assert_eq!(fallback.len(), 5);
    }

    #[test]
    fn kmeans_is_scale_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (data, _) = blobs(&mut rng, 60, 1.0);
        for c in [8.0, 3.7] {
            let scaled =
                Dataset::from_flat(data.as_flat().iter().map(|v| v * c).collect(), data.n(), data.dim())
                    .unwrap();
            let a = init_kmeans2(&data, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            let b = init_kmeans2(&scaled, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
            assert_eq!(a, b, "scale {c}");
        }
    }

    #[test]
    fn kmeans_is_permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (data, _) = blobs(&mut rng, 50, 0.8);
        let perm: Vec<usize> = (0..100).map(|i| (i * 37) % 100).collect();
        let permuted = data.select(&perm);
        let init = SplitInitializer::kmeans();
        let a = init.assign(&data, 99).unwrap();
        let b = init.assign(&permuted, 99).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(b.bits[i], a.bits[p]);
        }
        assert!(a.both_sides_nonempty());
    }

    fn toy_weights(seed: u64) -> StWeights {
        let meta = StMeta { input_dim: 2, hidden_dim: 8, heads: 2, inducing: 4, layers: 2, seeds: 2 };
        StWeights::random(meta, &mut ChaCha8Rng::seed_from_u64(seed), 1.0).unwrap()
    }

    #[test]
    fn splitnet_is_permutation_equivariant_and_nonempty() {
        let w = toy_weights(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (data, _) = blobs(&mut rng, 30, 3.0);
        let perm: Vec<usize> = (0..60).rev().collect();
        let a = init_splitnet(&data, &w).unwrap();
        let b = init_splitnet(&data.select(&perm), &w).unwrap();
        for (i, &p) in perm.iter().enumerate() {
            assert_eq!(b.bits[i], a.bits[p]);
        }
        assert!(a.both_sides_nonempty());
        assert_eq!(a, init_splitnet(&data, &w).unwrap());
    }

    #[test]
    fn splitnet_flip_rule_restores_both_sides() {
        // a net whose output bias dominates puts every point on one side
        let w = toy_weights(3);
        let mut tensors = w.tensors().clone();
        tensors.get_mut("dec.out.b").unwrap().data[0] = 1e4;
        let w = StWeights::from_tensors(w.meta, tensors).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (data, _) = blobs(&mut rng, 10, 1.0);
        let a = init_splitnet(&data, &w).unwrap();
        assert_eq!(a.count_right(), 19);
    }

    #[test]
    fn splitnet_handles_constant_column() {
        let w = toy_weights(5);
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, 4.0]).collect();
        let data = Dataset::from_rows(&rows).unwrap();
        let a = init_splitnet(&data, &w).unwrap();
        assert_eq!(a.len(), 10);
        assert!(standardize(&data).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn splitnet_rejects_dimension_mismatch() {
        let w = toy_weights(6);
        let data = Dataset::from_rows(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 2.0]]).unwrap();
        assert!(matches!(init_splitnet(&data, &w), Err(Error::DimensionMismatch { .. })));
        assert!(SplitInitializer::SplitNet(Arc::new(w)).check_dim(3).is_err());
    }

    #[test]
    fn content_hash_ignores_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (data, _) = blobs(&mut rng, 10, 1.0);
        let perm: Vec<usize> = (0..20).rev().collect();
        assert_eq!(content_hash(&data), content_hash(&data.select(&perm)));
        assert_ne!(content_hash(&data), content_hash(&data.select(&perm[..19])));
    }
}
