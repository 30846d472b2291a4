#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use subsplit::{Dataset, NiwParams, SuffStats};

/// `n` draws from N(mean, I).
pub fn blob<R: Rng>(rng: &mut R, n: usize, mean: &[f64]) -> Vec<Vec<f64>> {
    (0..n).map(|_| mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect()).collect()
}

/// Two unit blobs at ±offset on the first axis; labels 0 then 1.
pub fn two_blobs<R: Rng>(rng: &mut R, per: usize, offset: f64, d: usize) -> (Dataset, Vec<usize>) {
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    a[0] = -offset;
    b[0] = offset;
    let mut rows = blob(rng, per, &a);
    rows.extend(blob(rng, per, &b));
    let labels = (0..2 * per).map(|i| i / per).collect();
    (Dataset::from_rows(&rows).unwrap(), labels)
}

/// μ₀ = data mean, κ = 1, ν = D + 2, Ψ = I.
pub fn unit_prior(data: &Dataset) -> NiwParams {
    let d = data.dim();
    NiwParams::isotropic(data.mean(), 1.0, 1.0, d as f64 + 2.0).unwrap()
}

pub fn stats_where(data: &Dataset, keep: impl Fn(usize) -> bool) -> SuffStats {
    let mut s = SuffStats::zeros(data.dim());
    for (i, x) in data.rows().enumerate() {
        if keep(i) {
            s.push(x);
        }
    }
    s
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
