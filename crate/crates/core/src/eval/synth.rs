//! Synthetic Gaussian mixtures.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::niw::{sample_niw, GaussianParams, NiwParams, SuffStats};
use crate::sampler::{sample_dirichlet, split_log_hastings};

/// Recipe for a finite Gaussian mixture sample.
#[derive(Clone, Debug)]
pub struct GmmSpec {
    pub k: usize,
    pub d: usize,
    pub n: usize,
    /// Symmetric Dirichlet parameter of the mixing weights.
    pub alpha_dir: f64,
    /// Prior the component parameters are drawn from.
    pub niw: NiwParams,
    pub seed: u64,
}

impl GmmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.d == 0 {
            return Err(Error::InvalidParams("k and d must be at least 1".into()));
        }
        if self.n < self.k {
            return Err(Error::InvalidParams(format!("n = {} is smaller than k = {}", self.n, self.k)));
        }
        if !(self.alpha_dir > 0.0 && self.alpha_dir.is_finite()) {
            return Err(Error::InvalidParams(format!("alpha_dir must be positive, got {}", self.alpha_dir)));
        }
        if self.niw.dim() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: self.niw.dim() });
        }
        Ok(())
    }
}

/// Points with their ground-truth component labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    pub points: Dataset,
    pub labels: Vec<usize>,
}

/// Preset generator priors. Component means are spread with covariance
/// `E[Σ]/κ`, so a smaller κ gives better separated components.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub fn kappa(self) -> f64 {
        match self {
            Difficulty::Easy => 0.005,
            Difficulty::Medium => 0.05,
            Difficulty::Hard => 0.2,
        }
    }

    /// Zero-mean prior with `E[Σ] = I` and the preset κ.
    pub fn niw(self, d: usize) -> NiwParams {
        niw_preset(d, self.kappa())
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(Error::InvalidConfig(format!("unknown difficulty {other:?}"))),
        }
    }
}

/// Zero-mean NIW with ν = D + 8 and Ψ scaled so that `E[Σ] = I`.
pub fn niw_preset(d: usize, kappa: f64) -> NiwParams {
    let nu = d as f64 + 8.0;
    NiwParams::isotropic(vec![0.0; d], kappa, nu - d as f64 - 1.0, nu).expect("preset prior is valid")
}

/// Counts ⌈pⱼ·n⌉ (at least 1), with any overshoot removed one point at a
/// time from the currently largest component.
fn component_counts(p: &[f64], n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = p.iter().map(|&pj| ((pj * n as f64).ceil() as usize).max(1)).collect();
    let mut total: usize = counts.iter().sum();
    while total > n {
        let (j, _) = counts.iter().enumerate().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0))).unwrap();
        counts[j] -= 1;
        total -= 1;
    }
    // rounding can only overshoot, but keep the total exact regardless
    if total < n {
        let (j, _) = counts.iter().enumerate().max_by_key(|(_, &c)| c).unwrap();
        counts[j] += n - total;
    }
    counts
}

fn draw_points<R: Rng + ?Sized>(
    params: &GaussianParams,
    count: usize,
    rng: &mut R,
    out: &mut Vec<f64>,
) -> Result<()> {
    let d = params.dim();
    let chol = params
        .sigma
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NumericalFailure("sampled covariance is not positive definite".into()))?;
    let l = chol.l();
    let mut z = nalgebra::DVector::zeros(d);
    for _ in 0..count {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        let x = &params.mu + &l * &z;
        out.extend(x.iter());
    }
    Ok(())
}

fn gen_blocks<R: Rng + ?Sized>(niw: &NiwParams, counts: &[usize], rng: &mut R) -> Result<LabeledData> {
    let d = niw.dim();
    let mut flat = Vec::with_capacity(counts.iter().sum::<usize>() * d);
    let n: usize = counts.iter().sum();
    let mut labels = Vec::with_capacity(n);
    for (j, &c) in counts.iter().enumerate() {
        let params = sample_niw(niw, rng)?;
        draw_points(&params, c, rng, &mut flat)?;
        labels.extend(std::iter::repeat_n(j, c));
    }
    Ok(LabeledData { points: Dataset::from_flat(flat, n, d)?, labels })
}

/// Samples a mixture: weights from a symmetric Dirichlet, component
/// parameters from the NIW, then each component's points in turn. Labels
/// come out as consecutive blocks.
pub fn gen_gmm(spec: &GmmSpec) -> Result<LabeledData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let p = sample_dirichlet(&vec![spec.alpha_dir; spec.k], &mut rng)?;
    let counts = component_counts(&p, spec.n);
    gen_blocks(&spec.niw, &counts, &mut rng)
}

const SPLIT_PAIR_ATTEMPTS: usize = 100;

/// Draws two-component data sets until the ground-truth split has a log
/// Hastings ratio above 1 under `prior_for_h` and `alpha`.
pub fn gen_split_pair<R: Rng + ?Sized>(
    niw: &NiwParams,
    alpha_dir: f64,
    n_max: usize,
    prior_for_h: &NiwParams,
    alpha: f64,
    rng: &mut R,
) -> Result<LabeledData> {
    split_pair_with_attempts(niw, alpha_dir, n_max, prior_for_h, alpha, rng).map(|(pair, _)| pair)
}

fn split_pair_with_attempts<R: Rng + ?Sized>(
    niw: &NiwParams,
    alpha_dir: f64,
    n_max: usize,
    prior_for_h: &NiwParams,
    alpha: f64,
    rng: &mut R,
) -> Result<(LabeledData, usize)> {
    if n_max < 4 {
        return Err(Error::InvalidParams(format!("n_max must be at least 4, got {n_max}")));
    }
    if prior_for_h.dim() != niw.dim() {
        return Err(Error::DimensionMismatch { expected: niw.dim(), got: prior_for_h.dim() });
    }
    for attempt in 1..=SPLIT_PAIR_ATTEMPTS {
        let p = sample_dirichlet(&[alpha_dir, alpha_dir], rng)?;
        let counts: Vec<usize> = p.iter().map(|&pi| ((pi * n_max as f64).ceil() as usize).max(1)).collect();
        let pair = gen_blocks(niw, &counts, rng)?;
        let (n0, d) = (counts[0], niw.dim());
        let left = SuffStats::from_rows(d, pair.points.rows().take(n0));
        let right = SuffStats::from_rows(d, pair.points.rows().skip(n0));
        let whole = &left + &right;
        if split_log_hastings(&whole, &left, &right, alpha, prior_for_h)? > 1.0 {
            return Ok((pair, attempt));
        }
    }
    Err(Error::UnsplittablePrior { attempts: SPLIT_PAIR_ATTEMPTS })
}
