//! Saddlepoint density, the non-asymptotic error budget and its tail terms.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{E, LN_2, PI};

use crate::error::{Error, Result};
use crate::model::Cgf;
use crate::saddle::SaddlePoint;

/// Radius of the local ball, in units of `(d/n)^{1/2}`.
pub const LOCAL_RADIUS: f64 = 2.5;

/// Below this exponent `exp` underflows to zero in f64.
const EXP_UNDERFLOW: f64 = -745.0;

/// Saddlepoint density of the sample mean at the saddle's query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpaEstimate {
    pub log_density: f64,
    /// Zero when `underflow` is set.
    pub density: f64,
    /// `(d/2) log(n / 2 pi) - (1/2) log det H`
    pub log_prefactor: f64,
    /// `-n phi*(a)`
    pub exponent: f64,
    pub n: u64,
    pub d: usize,
    pub underflow: bool,
}

/// `(n/2pi)^{d/2} det(H)^{-1/2} exp(-n phi*(a))`, i.e. the exact density with
/// the correction factor `I(a)` set to one.
pub fn spa_density(saddle: &SaddlePoint, n: u64) -> Result<SpaEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let d = saddle.dim();
    let nf = n as f64;
    let log_prefactor = 0.5 * d as f64 * (nf / (2.0 * PI)).ln() - 0.5 * saddle.log_det_h;
    let exponent = -nf * saddle.phi_star;
    let log_density = log_prefactor + exponent;
    let underflow = exponent < EXP_UNDERFLOW || log_density < EXP_UNDERFLOW;
    let density = if underflow { 0.0 } else { log_density.exp() };
    Ok(SpaEstimate { log_density, density, log_prefactor, exponent, n, d, underflow })
}

/// Terms of the multiplicative-error bound for `|I(a) - 1|`.
///
/// Each term is reported without the absolute constant hidden in the bound;
/// see [`ErrorBudget::CONSTANT_NOTE`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// `d^2 / n`
    pub eps: f64,
    pub c3: f64,
    pub c4: f64,
    pub kappa: f64,
    pub r_const: f64,
    /// `exp(40 c4 eps^2) (c3^2 + c4) eps`
    pub term_main: f64,
    /// `exp(-d)`
    pub term_exp: f64,
    /// `(e eps / kappa^2)^{d/2}`
    pub term_tail: f64,
    pub total: f64,
    /// Set when `eps > 0.25`, outside the small-eps regime the bound is stated for.
    pub large_eps: bool,
}

impl ErrorBudget {
    pub const CONSTANT_NOTE: &'static str = "each term holds up to an unknown absolute constant (x C)";
}

pub fn error_bound(d: usize, n: u64, c3: f64, c4: f64, kappa: f64) -> Result<ErrorBudget> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("d and n must be at least 1".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let df = d as f64;
    let eps = df * df / n as f64;
    let term_main = (40.0 * c4 * eps * eps).exp() * (c3 * c3 + c4) * eps;
    let term_exp = (-df).exp();
    let term_tail = (E * eps / (kappa * kappa)).powf(0.5 * df);
    Ok(ErrorBudget {
        eps,
        c3,
        c4,
        kappa,
        r_const: LOCAL_RADIUS,
        term_main,
        term_exp,
        term_tail,
        total: term_main + term_exp + term_tail,
        large_eps: eps > 0.25,
    })
}

/// Error budget with `c3`, `c4` taken from the model on the region
/// `||tau|| <= tau_radius`, `||t|| < 2.5 (d/n)^{1/2}`.
pub fn model_error_bound(model: &dyn Cgf, n: u64, tau_radius: f64, kappa: f64) -> Result<ErrorBudget> {
    let d = model.dim();
    let t_radius = LOCAL_RADIUS * (d as f64 / n.max(1) as f64).sqrt();
    let c3 = model.c3_sup(tau_radius, t_radius);
    let c4 = model.c4_sup(tau_radius, t_radius);
    error_bound(d, n, c3, c4, kappa)
}

/// Endpoint bounds of the two tail integrals outside the local ball:
/// `(exp(-d) / sqrt d, (e d^2 / (n kappa^2))^{d/2})`.
pub fn tail_bound_terms(d: usize, n: u64, kappa: f64) -> Result<(f64, f64)> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidArgument("d and n must be at least 1".into()));
    }
    if !(kappa > 0.0) {
        return Err(Error::InvalidArgument(format!("kappa must be positive, got {kappa}")));
    }
    let df = d as f64;
    let first = (-df).exp() / df.sqrt();
    let second = (E * df * df / (n as f64 * kappa * kappa)).powf(0.5 * df);
    Ok((first, second))
}

/// `log |S^{d-1}| = log 2 + (d/2) log pi - log Gamma(d/2)`.
pub fn log_sphere_area(d: usize) -> f64 {
    let h = 0.5 * d as f64;
    LN_2 + h * PI.ln() - ln_gamma(h)
}

/// Area of the unit sphere in R^d, `2 pi^{d/2} / Gamma(d/2)`.
pub fn sphere_area(d: usize) -> f64 {
    log_sphere_area(d).exp()
}

/// `log(Gamma(d) / Gamma(d/2))`, checked against the duplication form
/// `(d-1) log 2 + log Gamma((d+1)/2) - (1/2) log pi` to relative 1e-10.
pub fn log_gamma_ratio(d: usize) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    let df = d as f64;
    let direct = ln_gamma(df) - ln_gamma(0.5 * df);
    let dup = (df - 1.0) * LN_2 + ln_gamma(0.5 * (df + 1.0)) - 0.5 * PI.ln();
    if (direct - dup).abs() > 1e-10 * direct.abs().max(1.0) {
        return Err(Error::ModelDomain(format!(
            "Gamma duplication check failed at d={d}: {direct} vs {dup}"
        )));
    }
    Ok(direct)
}

/// `Gamma(d) / Gamma(d/2)`; overflows to infinity for d beyond ~340.
pub fn gamma_ratio(d: usize) -> Result<f64> {
    Ok(log_gamma_ratio(d)?.exp())
}
