//! Conjugate Normal–Inverse-Wishart math for Gaussian clusters.
//!
//! Everything here works from [`SuffStats`] (count, Σx, Σxxᵀ), so adding or
//! removing a point from a cluster is O(D²) and the marginal likelihood of a
//! point set never has to revisit the points themselves.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};

/// NIW hyperparameters `(μ₀, κ, Ψ, ν)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NiwParams {
    pub mu0: DVector<f64>,
    pub kappa: f64,
    pub psi: DMatrix<f64>,
    pub nu: f64,
}

impl NiwParams {
    /// Validates and builds a parameter set.
    pub fn new(mu0: DVector<f64>, kappa: f64, psi: DMatrix<f64>, nu: f64) -> Result<Self> {
        let d = mu0.len();
        if d == 0 {
            return Err(Error::InvalidParams("dimension must be at least 1".into()));
        }
        if psi.nrows() != d || psi.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: psi.nrows() });
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("kappa must be positive, got {kappa}")));
        }
        if !(nu > d as f64 - 1.0 && nu.is_finite()) {
            return Err(Error::InvalidParams(format!("nu must exceed D-1 = {}, got {nu}", d - 1)));
        }
        let scale = psi.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..d {
            for j in 0..i {
                if (psi[(i, j)] - psi[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidParams("psi is not symmetric".into()));
                }
            }
        }
        if psi.clone().cholesky().is_none() {
            return Err(Error::InvalidParams("psi is not positive definite".into()));
        }
        Ok(Self { mu0, kappa, psi, nu })
    }

    /// Isotropic prior `(μ₀, κ, s·I, ν)`.
    pub fn isotropic(mu0: Vec<f64>, kappa: f64, psi_scale: f64, nu: f64) -> Result<Self> {
        let d = mu0.len();
        Self::new(DVector::from_vec(mu0), kappa, DMatrix::identity(d, d) * psi_scale, nu)
    }

    /// Data-driven weak prior: μ₀ = data mean, κ = 1, ν = D+3 and
    /// Ψ = cov·(ν−D−1), so that E[Σ] equals the data covariance.
    /// `psi_scale` multiplies Ψ; `kappa`/`nu` override the defaults when given.
    pub fn weak_from_data(
        data: &Dataset,
        kappa: Option<f64>,
        nu: Option<f64>,
        psi_scale: f64,
    ) -> Result<Self> {
        let d = data.dim();
        let nu = nu.unwrap_or(d as f64 + 3.0);
        let kappa = kappa.unwrap_or(1.0);
        let mut cov = DMatrix::from_row_slice(d, d, &data.covariance());
        // a flat direction in the data would make Ψ singular
        let floor = 1e-6 * (cov.trace() / d as f64).max(1e-12);
        for i in 0..d {
            cov[(i, i)] = cov[(i, i)].max(floor);
        }
        let dof_scale = (nu - d as f64 - 1.0).max(1e-3);
        Self::new(DVector::from_vec(data.mean()), kappa, cov * (dof_scale * psi_scale), nu)
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }
}

/// Count, sum and sum of outer products of a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    pub m: usize,
    pub sum_x: DVector<f64>,
    pub sum_xxt: DMatrix<f64>,
}

impl SuffStats {
    pub fn zeros(d: usize) -> Self {
        Self { m: 0, sum_x: DVector::zeros(d), sum_xxt: DMatrix::zeros(d, d) }
    }

    pub fn dim(&self) -> usize {
        self.sum_x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    #[inline]
    pub fn push(&mut self, x: &[f64]) {
        let d = x.len();
        debug_assert_eq!(d, self.dim());
        self.m += 1;
        let sum = self.sum_x.as_mut_slice();
        for (s, v) in sum.iter_mut().zip(x) {
            *s += v;
        }
        // column-major storage: entry (a, b) lives at b*d + a
        let outer = self.sum_xxt.as_mut_slice();
        for b in 0..d {
            let xb = x[b];
            let col = &mut outer[b * d..(b + 1) * d];
            for (o, xa) in col.iter_mut().zip(x) {
                *o += xa * xb;
            }
        }
    }

    pub fn from_rows<'a>(d: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut stats = Self::zeros(d);
        for row in rows {
            stats.push(row);
        }
        stats
    }

    pub fn mean(&self) -> Option<DVector<f64>> {
        (self.m > 0).then(|| &self.sum_x / self.m as f64)
    }

    /// Centered scatter matrix `S = Σxxᵀ − m·x̄x̄ᵀ`, symmetrized.
    pub fn scatter(&self) -> DMatrix<f64> {
        let d = self.dim();
        if self.m == 0 {
            return DMatrix::zeros(d, d);
        }
        let s = &self.sum_xxt - (&self.sum_x * self.sum_x.transpose()) / self.m as f64;
        symmetrize(s)
    }
}

impl Add for &SuffStats {
    type Output = SuffStats;

    fn add(self, rhs: &SuffStats) -> SuffStats {
        SuffStats {
            m: self.m + rhs.m,
            sum_x: &self.sum_x + &rhs.sum_x,
            sum_xxt: &self.sum_xxt + &rhs.sum_xxt,
        }
    }
}

impl AddAssign<&SuffStats> for SuffStats {
    fn add_assign(&mut self, rhs: &SuffStats) {
        self.m += rhs.m;
        self.sum_x += &rhs.sum_x;
        self.sum_xxt += &rhs.sum_xxt;
    }
}

/// Mean and covariance of one Gaussian component.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// A Gaussian with its Cholesky factor cached, for repeated density evaluation.
#[derive(Clone, Debug)]
pub struct GaussianDensity {
    mu: Vec<f64>,
    /// Lower Cholesky factor, row-major.
    chol: Vec<f64>,
    log_norm: f64,
}

impl GaussianDensity {
    pub fn new(params: &GaussianParams) -> Result<Self> {
        let d = params.dim();
        let chol = params
            .sigma
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?;
        let l = chol.l();
        let mut rows = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..=i {
                rows[i * d + j] = l[(i, j)];
            }
        }
        let log_det: f64 = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        Ok(Self {
            mu: params.mu.as_slice().to_vec(),
            chol: rows,
            log_norm: -0.5 * (d as f64 * (2.0 * PI).ln() + log_det),
        })
    }

    #[inline]
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.mu.len();
        // forward substitution L y = x − μ, accumulating |y|² on the fly
        let mut y = [0.0f64; 16];
        let mut heap;
        let y: &mut [f64] = if d <= 16 {
            &mut y[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut quad = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i + 1];
            let mut acc = x[i] - self.mu[i];
            for j in 0..i {
                acc -= row[j] * y[j];
            }
            let yi = acc / row[i];
            y[i] = yi;
            quad += yi * yi;
        }
        self.log_norm - 0.5 * quad
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Cholesky with a single jitter retry of `1e-10·trace/D` on the diagonal.
fn cholesky_with_jitter(m: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let d = m.nrows();
    let jitter = 1e-10 * m.trace().abs() / d as f64;
    let mut shifted = m.clone();
    for i in 0..d {
        shifted[(i, i)] += jitter;
    }
    shifted.cholesky()
}

fn log_det_chol(c: &Cholesky<f64, Dyn>) -> f64 {
    let l = c.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Multivariate log-Gamma `log Γ_D(a)`.
pub fn ln_multi_gamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    df * (df - 1.0) / 4.0 * PI.ln() + (0..d).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>()
}

pub fn suffstats_from_points(points: &Dataset) -> Result<SuffStats> {
    // Dataset construction already rejects non-finite entries
    Ok(SuffStats::from_rows(points.dim(), points.rows()))
}

/// Conjugate NIW update given the sufficient statistics of the observed points.
pub fn niw_posterior(prior: &NiwParams, stats: &SuffStats) -> NiwParams {
    if stats.m == 0 {
        return prior.clone();
    }
    let m = stats.m as f64;
    let mean = &stats.sum_x / m;
    let kappa_m = prior.kappa + m;
    let mu_m = (&prior.mu0 * prior.kappa + &mean * m) / kappa_m;
    let diff = &mean - &prior.mu0;
    let psi_m = &prior.psi + stats.scatter() + (&diff * diff.transpose()) * (prior.kappa * m / kappa_m);
    NiwParams { mu0: mu_m, kappa: kappa_m, psi: symmetrize(psi_m), nu: prior.nu + m }
}

/// Log marginal likelihood of a point set under the NIW prior, Gaussian
/// parameters integrated out.
pub fn log_marginal_likelihood(prior: &NiwParams, stats: &SuffStats) -> Result<f64> {
    if stats.m == 0 {
        return Ok(0.0);
    }
    let d = prior.dim();
    let post = niw_posterior(prior, stats);
    let prior_chol = cholesky_with_jitter(&prior.psi)
        .ok_or_else(|| Error::NumericalFailure("prior psi is not positive definite".into()))?;
    let post_chol = cholesky_with_jitter(&post.psi).ok_or_else(|| {
        Error::NumericalFailure(format!("posterior psi not positive definite ({} points)", stats.m))
    })?;
    let m = stats.m as f64;
    let df = d as f64;
    Ok(-(m * df / 2.0) * PI.ln() + ln_multi_gamma(d, post.nu / 2.0) - ln_multi_gamma(d, prior.nu / 2.0)
        + (prior.nu / 2.0) * log_det_chol(&prior_chol)
        - (post.nu / 2.0) * log_det_chol(&post_chol)
        + (df / 2.0) * (prior.kappa.ln() - post.kappa.ln()))
}

/// Draws `(μ, Σ)` from NIW: Σ by Bartlett decomposition of Wishart(Ψ⁻¹, ν)
/// followed by inversion, then μ ~ N(μ₀, Σ/κ).
pub fn sample_niw<R: Rng + ?Sized>(params: &NiwParams, rng: &mut R) -> Result<GaussianParams> {
    let d = params.dim();
    if params.nu.is_nan() || params.nu <= d as f64 - 1.0 {
        return Err(Error::InvalidParams(format!("nu = {} must exceed D-1 = {}", params.nu, d as f64 - 1.0)));
    }
    let psi_chol = cholesky_with_jitter(&params.psi)
        .ok_or_else(|| Error::NumericalFailure("psi is not positive definite".into()))?;

    // Bartlett factor A with A Aᵀ ~ Wishart(I, ν)
    let mut a = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        let dof = params.nu - i as f64;
        let chi2 =
            ChiSquared::new(dof).map_err(|e| Error::InvalidParams(format!("chi-squared({dof}): {e}")))?;
        a[(i, i)] = chi2.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    // With Ψ = L Lᵀ, Wishart(Ψ⁻¹) = L⁻ᵀ A Aᵀ L⁻¹, so Σ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ.
    let a_inv = a
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::NumericalFailure("singular Bartlett factor".into()))?;
    let root = psi_chol.l() * a_inv.transpose();
    let sigma = symmetrize(&root * root.transpose());

    let z = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
    let mu = &params.mu0 + (&root * z) / params.kappa.sqrt();
    Ok(GaussianParams { mu, sigma })
}

pub fn log_gaussian_pdf(x: &[f64], params: &GaussianParams) -> Result<f64> {
    if x.len() != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: x.len() });
    }
    Ok(GaussianDensity::new(params)?.log_pdf(x))
}
