//! Ground-truth densities for the symmetric Gaussian mixture.
//!
//! Each draw is `s mu + N(0, Sigma)` with a fair sign `s`, so the mean of `n`
//! draws is the binomial mixture
//! `sum_k C(n,k) 2^{-n} N(a; ((2k - n)/n) mu, Sigma / n)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{LN_2, PI};

use crate::correction::estimate_kappa;
use crate::error::{Error, Result};
use crate::linalg::{check_dim, cholesky, log_det_from_chol};
use crate::model::{Cgf, MixtureParams};
use crate::spa::{model_error_bound, ErrorBudget};

/// `log sum exp` of a slice; `-inf` for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Exact law of the mean of `n` mixture draws.
#[derive(Debug, Clone)]
pub struct ExactMeanDensity {
    pub params: MixtureParams,
    pub n: u64,
    pub log_binom_weights: Vec<f64>,
    pub sigma_over_n_chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl ExactMeanDensity {
    pub fn new(params: &MixtureParams, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("n must be at least 1".into()));
        }
        let nf = n as f64;
        let lg_n = ln_gamma(nf + 1.0);
        let mut w: Vec<f64> = (0..=n)
            .map(|k| {
                let k = k as f64;
                lg_n - ln_gamma(k + 1.0) - ln_gamma(nf - k + 1.0) - nf * LN_2
            })
            .collect();
        let total = log_sum_exp(&w);
        w.iter_mut().for_each(|v| *v -= total);
        let sigma_n = params.sigma() / nf;
        let chol = cholesky(&sigma_n)
            .ok_or_else(|| Error::ModelDomain("Sigma / n is not positive definite".into()))?;
        let d = params.d() as f64;
        let log_norm = -0.5 * d * (2.0 * PI).ln() - 0.5 * log_det_from_chol(&chol);
        Ok(Self { params: params.clone(), n, log_binom_weights: w, sigma_over_n_chol: chol, log_norm })
    }

    pub fn log_density(&self, a: &DVector<f64>) -> Result<f64> {
        check_dim(self.params.d(), a.len())?;
        let nf = self.n as f64;
        let sinv_mu = self.params.sigma_inv_mu();
        let q = self.params.mu_sigma_inv_mu();
        // (a - c mu)^T Sigma^{-1} (a - c mu) = A - 2 c B + c^2 q
        let big_a = a.dot(&self.sigma_over_n_chol.solve(a)) / nf;
        let big_b = a.dot(sinv_mu);
        let terms: Vec<f64> = self
            .log_binom_weights
            .iter()
            .enumerate()
            .map(|(k, lw)| {
                let c = (2.0 * k as f64 - nf) / nf;
                let quad = (big_a - 2.0 * c * big_b + c * c * q).max(0.0);
                lw + self.log_norm - 0.5 * nf * quad
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }

    pub fn density(&self, a: &DVector<f64>) -> Result<f64> {
        Ok(self.log_density(a)?.exp())
    }
}

pub fn exact_mean_density(params: &MixtureParams, n: u64, a: &DVector<f64>) -> Result<f64> {
    ExactMeanDensity::new(params, n)?.density(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    Scott,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOracleConfig {
    pub samples: usize,
    pub seed: u64,
    pub bandwidth: Bandwidth,
    pub bootstrap_resamples: usize,
}

impl Default for McOracleConfig {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0, bandwidth: Bandwidth::Scott, bootstrap_resamples: 200 }
    }
}

/// Number of independent generator streams; fixed so results do not depend
/// on the thread count.
const MC_STREAMS: usize = 16;

/// Monte Carlo density of the sample mean at `a`: simulates `samples` means of
/// `n` independent draws and evaluates a product Gaussian kernel estimate.
///
/// Returns `(estimate, bootstrap standard error)`. Only `d <= 4` is accepted;
/// pointwise kernel estimates degrade quickly with dimension.
pub fn mc_density(params: &MixtureParams, n: u64, a: &DVector<f64>, cfg: &McOracleConfig) -> Result<(f64, f64)> {
    let d = params.d();
    check_dim(d, a.len())?;
    if d > 4 {
        return Err(Error::Precondition("mc_density supports d <= 4".into()));
    }
    if cfg.samples < 10_000 {
        return Err(Error::Precondition("mc_density needs at least 10^4 samples".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let chol = cholesky(params.sigma()).ok_or(Error::LeftDomain)?;
    let l: DMatrix<f64> = chol.l();
    let mu = params.mu();
    let per = cfg.samples.div_ceil(MC_STREAMS);
    let chunks: Vec<Vec<DVector<f64>>> = (0..MC_STREAMS)
        .into_par_iter()
        .map(|stream| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream as u64);
            let count = per.min(cfg.samples.saturating_sub(stream * per));
            (0..count)
                .map(|_| {
                    let mut sum = DVector::zeros(d);
                    for _ in 0..n {
                        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        sum += mu * sign + &l * z;
                    }
                    sum / n as f64
                })
                .collect()
        })
        .collect();
    let means: Vec<DVector<f64>> = chunks.into_iter().flatten().collect();
    let m = means.len() as f64;

    let h: Vec<f64> = match cfg.bandwidth {
        Bandwidth::Fixed(h) if h > 0.0 => vec![h; d],
        Bandwidth::Fixed(h) => return Err(Error::InvalidArgument(format!("bandwidth must be positive, got {h}"))),
        Bandwidth::Scott => (0..d)
            .map(|j| {
                let mean = means.iter().map(|x| x[j]).sum::<f64>() / m;
                let var = means.iter().map(|x| (x[j] - mean).powi(2)).sum::<f64>() / (m - 1.0);
                var.sqrt() * m.powf(-1.0 / (d as f64 + 4.0))
            })
            .collect(),
    };
    let log_norm: f64 = h.iter().map(|hj| -(hj * (2.0 * PI).sqrt()).ln()).sum();
    let contrib: Vec<f64> = means
        .iter()
        .map(|x| {
            let q: f64 = (0..d).map(|j| ((a[j] - x[j]) / h[j]).powi(2)).sum();
            (log_norm - 0.5 * q).exp()
        })
        .collect();
    let estimate = contrib.iter().sum::<f64>() / m;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(MC_STREAMS as u64);
    let b = cfg.bootstrap_resamples.max(2);
    let boots: Vec<f64> = (0..b)
        .map(|_| (0..contrib.len()).map(|_| contrib[rng.gen_range(0..contrib.len())]).sum::<f64>() / m)
        .collect();
    let bm = boots.iter().sum::<f64>() / b as f64;
    let stderr = (boots.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (b as f64 - 1.0)).sqrt();
    Ok((estimate, stderr))
}

/// Local CLT comparison at `x` for a standardized model.
#[derive(Debug, Clone, Serialize)]
pub struct CltRatio {
    /// density of `sqrt(n) * mean` at `x` over the standard Gaussian density
    pub ratio: f64,
    /// `C_3(a) ||x||^3 / sqrt(n) + budget.total`
    pub bound: f64,
    pub exponent_term: f64,
    pub budget: ErrorBudget,
}

/// `exact_mean_density(x / sqrt n) / (n^{d/2} gamma_d(x))` and the two
/// factors bounding its deviation from one.
pub fn clt_ratio(params: &MixtureParams, n: u64, x: &DVector<f64>) -> Result<CltRatio> {
    check_dim(params.d(), x.len())?;
    if !params.is_standardized(1e-10) {
        return Err(Error::Precondition("clt_ratio needs E X X^T = I; standardize the model first".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = params.d() as f64;
    let nf = n as f64;
    let a = x / nf.sqrt();
    let log_exact = ExactMeanDensity::new(params, n)?.log_density(&a)?;
    let log_gauss = -0.5 * d * (2.0 * PI).ln() - 0.5 * x.norm_squared();
    let ratio = (log_exact - 0.5 * d * nf.ln() - log_gauss).exp();

    let c3 = params.c3_ball(2.0 * a.norm())?;
    let exponent_term = c3 * x.norm().powi(3) / nf.sqrt();
    let kappa = estimate_kappa(params, &[a.clone() * 2.0, DVector::zeros(params.d())], n)?;
    let budget = model_error_bound(params, n, 2.0 * a.norm(), kappa)?;
    Ok(CltRatio { ratio, bound: exponent_term + budget.total, exponent_term, budget })
}
