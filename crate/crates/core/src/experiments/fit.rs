use serde::Serialize;

use super::ResultRecord;
use crate::error::{Error, Result};

/// Least-squares line through `(log x, log y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XKey {
    /// `d^2 / n`
    Eps,
    InvN,
    D2,
}

impl XKey {
    pub fn value(&self, r: &ResultRecord) -> f64 {
        match self {
            XKey::Eps => r.eps,
            XKey::InvN => 1.0 / r.n as f64,
            XKey::D2 => (r.d * r.d) as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YKey {
    RelErr,
    IMinusOne,
}

impl YKey {
    pub fn value(&self, r: &ResultRecord) -> Option<f64> {
        match self {
            YKey::RelErr => r.rel_err,
            YKey::IMinusOne => r.i_minus_one,
        }
    }
}

/// Fits `log(rel_err)` against `log(x_key)` over the rows accepted by `filter`.
pub fn fit_slope(records: &[ResultRecord], x_key: XKey, filter: impl Fn(&ResultRecord) -> bool) -> Result<SlopeFit> {
    fit_slope_by(records, x_key, YKey::RelErr, filter)
}

pub fn fit_slope_by(
    records: &[ResultRecord],
    x_key: XKey,
    y_key: YKey,
    filter: impl Fn(&ResultRecord) -> bool,
) -> Result<SlopeFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter(|r| r.is_ok() && filter(r))
        .filter_map(|r| y_key.value(r).map(|y| (x_key.value(r), y)))
        .unzip();
    fit_power_law(&xs, &ys)
}

/// Ordinary least squares of `log y` on `log x`.
///
/// Refuses fewer than four points, non-positive values, and x ranges
/// narrower than half a decade.
pub fn fit_power_law(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument("x and y lengths differ".into()));
    }
    let points = xs.len();
    if points < 4 {
        return Err(Error::InvalidArgument(format!("slope fit needs at least 4 points, got {points}")));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("slope fit needs finite positive values".into()));
    }
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if (hi / lo).log10() < 0.5 {
        return Err(Error::InvalidArgument(format!(
            "x range [{lo:e}, {hi:e}] spans less than half a decade"
        )));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = points as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r_squared, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(f: impl Fn(f64) -> f64) -> Vec<ResultRecord> {
        [100u64, 200, 400, 800, 1600, 3200]
            .iter()
            .map(|n| {
                let eps = 4.0 / *n as f64;
                ResultRecord { d: 2, n: *n, eps, rel_err: Some(f(eps)), ..ResultRecord::empty(2, *n) }
            })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_slope(&rows(|e| 0.7 * e), XKey::Eps, |_| true).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 0.7f64.ln()).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        let fit = fit_slope(&rows(|e| 3.0 * e.powf(1.5)), XKey::Eps, |_| true).unwrap();
        assert!((fit.slope - 1.5).abs() < 1e-12);
        let fit = fit_slope(&rows(|e| 0.7 * e), XKey::InvN, |_| true).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refusals() {
        assert!(fit_slope(&rows(|e| e), XKey::Eps, |r| r.n <= 400).is_err());
        assert!(fit_power_law(&[1.0, 1.1, 1.2, 1.3], &[1.0, 2.0, 3.0, 4.0]).is_err());
        assert!(fit_power_law(&[1.0, 10.0, 100.0, 1000.0], &[1.0, 0.0, 3.0, 4.0]).is_err());
        assert!(fit_slope(&rows(|e| e), XKey::D2, |_| true).is_err());
    }
}
