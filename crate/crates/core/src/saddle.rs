//! Saddle-point equation `grad phi(tau) = a`, the Legendre transform and
//! its diagnostics.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, cholesky, log_det_from_chol, sym_norm};
use crate::model::Cgf;

pub const DEFAULT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    FixedPoint,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Iteration cap for the fixed-point fallback, which converges linearly.
    pub max_fixed_point_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: 100, max_halvings: 30, max_fixed_point_iter: 2000 }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// Solution of the saddle-point equation at a query point.
#[derive(Debug, Clone)]
pub struct SaddlePoint {
    pub a: DVector<f64>,
    pub tau: DVector<f64>,
    pub phi_star: f64,
    pub hessian_chol: Cholesky<f64, Dyn>,
    pub log_det_h: f64,
    /// `||grad phi(tau) - a||`
    pub residual: f64,
    pub iterations: usize,
    pub method: SolveMethod,
}

impl SaddlePoint {
    pub fn dim(&self) -> usize {
        self.tau.len()
    }

    /// `H(tau)` rebuilt from the stored factor.
    pub fn hessian(&self) -> DMatrix<f64> {
        let l = self.hessian_chol.l();
        &l * l.transpose()
    }

    /// Whether `||tau|| <= 2 ||a||`, the ball where existence is guaranteed.
    pub fn within_existence_ball(&self) -> bool {
        self.tau.norm() <= 2.0 * self.a.norm() * (1.0 + 1e-12) + 1e-300
    }
}

fn validate(model: &dyn Cgf, a: &DVector<f64>, tol: f64) -> Result<()> {
    check_dim(model.dim(), a.len())?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("query point is not finite".into()));
    }
    Ok(())
}

fn finish(
    model: &dyn Cgf,
    a: &DVector<f64>,
    tau: DVector<f64>,
    residual: f64,
    iterations: usize,
    method: SolveMethod,
) -> Result<SaddlePoint> {
    let h = model.hessian(&tau).map_err(|_| Error::LeftDomain)?;
    let chol = cholesky(&h).ok_or(Error::LeftDomain)?;
    let log_det_h = log_det_from_chol(&chol);
    let phi_star = tau.dot(a) - model.cgf_real(&tau)?;
    Ok(SaddlePoint {
        a: a.clone(),
        tau,
        phi_star,
        hessian_chol: chol,
        log_det_h,
        residual,
        iterations,
        method,
    })
}

/// Solves `grad phi(tau) = a` by damped Newton from `tau_0 = a`, falling back
/// to the fixed-point map `tau <- (int_0^1 H(lambda tau) d lambda)^{-1} (a - grad phi(0))`
/// when Newton stagnates.
pub fn solve_saddle(model: &dyn Cgf, a: &DVector<f64>, opts: &SolverOptions) -> Result<SaddlePoint> {
    validate(model, a, opts.tol)?;
    let mut tau = a.clone();
    let mut g = model.grad(&tau)? - a;
    let mut res = g.norm();
    for iter in 0..opts.max_iter {
        if res <= opts.tol {
            return finish(model, a, tau, res, iter, SolveMethod::Newton);
        }
        let h = model.hessian(&tau).map_err(|_| Error::LeftDomain)?;
        let chol = cholesky(&h).ok_or(Error::LeftDomain)?;
        let step = chol.solve(&g);
        let merit = 0.5 * res * res;
        let mut accepted = None;
        let mut s = 1.0;
        for _ in 0..=opts.max_halvings {
            let cand = &tau - &step * s;
            if let Ok(gc) = model.grad(&cand) {
                let gc = gc - a;
                let rc = gc.norm();
                if rc.is_finite() && 0.5 * rc * rc <= (1.0 - 1e-4 * s) * merit {
                    accepted = Some((cand, gc, rc));
                    break;
                }
            }
            s *= 0.5;
        }
        match accepted {
            Some((t, gc, rc)) => {
                tau = t;
                g = gc;
                res = rc;
            }
            None => {
                return solve_fixed_point_from(model, a, tau, opts, iter);
            }
        }
    }
    if res <= opts.tol {
        return finish(model, a, tau, res, opts.max_iter, SolveMethod::Newton);
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, residual: res })
}

/// Solves the saddle equation with the fixed-point map alone, starting at `tau_0 = a`.
pub fn solve_fixed_point(model: &dyn Cgf, a: &DVector<f64>, opts: &SolverOptions) -> Result<SaddlePoint> {
    validate(model, a, opts.tol)?;
    solve_fixed_point_from(model, a, a.clone(), opts, 0)
}

fn solve_fixed_point_from(
    model: &dyn Cgf,
    a: &DVector<f64>,
    mut tau: DVector<f64>,
    opts: &SolverOptions,
    start_iter: usize,
) -> Result<SaddlePoint> {
    let rhs = a - model.grad(&DVector::zeros(model.dim()))?;
    let mut res = (model.grad(&tau)? - a).norm();
    let mut iter = start_iter;
    let mut damping = 1.0;
    while iter < start_iter + opts.max_fixed_point_iter {
        if res <= opts.tol {
            return finish(model, a, tau, res, iter, SolveMethod::FixedPoint);
        }
        let secant = model.secant_hessian(&tau)?;
        let chol = cholesky(&secant).ok_or(Error::LeftDomain)?;
        let mapped = chol.solve(&rhs);
        let cand = &tau * (1.0 - damping) + mapped * damping;
        let rc = (model.grad(&cand)? - a).norm();
        iter += 1;
        if !rc.is_finite() || rc > 2.0 * res {
            damping *= 0.5;
            if damping < 1e-6 {
                break;
            }
            continue;
        }
        tau = cand;
        res = rc;
    }
    if res <= opts.tol {
        return finish(model, a, tau, res, iter, SolveMethod::FixedPoint);
    }
    Err(Error::NonConvergence { iterations: iter, residual: res })
}

/// `phi*(a) = <tau, a> - phi(tau)` at a solved saddle point.
pub fn legendre(model: &dyn Cgf, saddle: &SaddlePoint) -> Result<f64> {
    Ok(saddle.tau.dot(&saddle.a) - model.cgf_real(&saddle.tau)?)
}

/// `C_3(a) = sup_{||tau|| <= 2||a||} ||nabla^3 phi(tau)||`.
pub fn c3_ball(model: &dyn Cgf, a: &DVector<f64>) -> Result<f64> {
    check_dim(model.dim(), a.len())?;
    model.c3_ball(2.0 * a.norm())
}

/// `B(tau) = int_0^1 (1 - lambda) nabla^3 phi(lambda tau)[tau] d lambda`
/// in the equivalent form `int_0^1 H(lambda tau) d lambda - H(0)`.
pub fn fixed_point_matrix(model: &dyn Cgf, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
    Ok(model.secant_hessian(tau)? - model.hessian(&DVector::zeros(model.dim()))?)
}

/// Spectral norm of [`fixed_point_matrix`].
pub fn fixed_point_matrix_norm(model: &dyn Cgf, tau: &DVector<f64>) -> Result<f64> {
    Ok(sym_norm(&fixed_point_matrix(model, tau)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreGapReport {
    /// `|phi*(a) - ||a||^2 / 2|`
    pub gap: f64,
    pub c3_ball: f64,
    /// `C_3(a) ||a||^3`, without the absolute constant.
    pub bound: f64,
    /// `2 ||a|| C_3(a) <= 1`
    pub admissible: bool,
}

/// Compares the Legendre transform to its quadratic approximation. Requires a
/// standardized model (`grad phi(0) = 0`, `H(0) = I`).
pub fn legendre_gap_report(model: &dyn Cgf, a: &DVector<f64>, opts: &SolverOptions) -> Result<LegendreGapReport> {
    check_dim(model.dim(), a.len())?;
    let d = model.dim();
    let zero = DVector::zeros(d);
    let h0 = model.hessian(&zero)?;
    let off = (h0 - DMatrix::<f64>::identity(d, d)).abs().max();
    let g0 = model.grad(&zero)?.norm();
    if off > 1e-10 || g0 > 1e-10 {
        return Err(Error::Precondition(format!(
            "model is not standardized (|H(0) - I| = {off:e}, |grad(0)| = {g0:e})"
        )));
    }
    let saddle = solve_saddle(model, a, opts)?;
    let r = a.norm();
    let gap = (saddle.phi_star - 0.5 * r * r).abs();
    let c3 = c3_ball(model, a)?;
    Ok(LegendreGapReport { gap, c3_ball: c3, bound: c3 * r.powi(3), admissible: 2.0 * r * c3 <= 1.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::MixtureParams;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn scalar() -> MixtureParams {
        MixtureParams::isotropic(v(&[1.0]), 1.0).unwrap()
    }

    #[test]
    fn origin_is_trivial() {
        let m = MixtureParams::isotropic(v(&[0.5, -0.2, 0.1]), 1.1).unwrap();
        let s = solve_saddle(&m, &DVector::zeros(3), &SolverOptions::default()).unwrap();
        assert_eq!(s.tau, DVector::zeros(3));
        assert_eq!(s.phi_star, 0.0);
        assert_eq!(s.residual, 0.0);
        assert_eq!(legendre(&m, &s).unwrap(), 0.0);
    }

    #[test]
    fn pure_gaussian_closed_form() {
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 0.8]);
        let m = MixtureParams::new(DVector::zeros(2), sigma.clone()).unwrap();
        let a = v(&[0.7, -1.3]);
        let s = solve_saddle(&m, &a, &SolverOptions::default()).unwrap();
        let tau = sigma.clone().try_inverse().unwrap() * &a;
        assert!((&s.tau - &tau).norm() < 1e-13);
        assert!((s.phi_star - 0.5 * a.dot(&tau)).abs() < 1e-13);
        assert_eq!(s.method, SolveMethod::Newton);
    }

    #[test]
    fn scalar_mixture_matches_bisection_oracle() {
        // tau + tanh(tau) = 1/2, 40-digit bisection
        let s = solve_saddle(&scalar(), &v(&[0.5]), &SolverOptions::default()).unwrap();
        assert!((s.tau[0] - 0.252_620_043_159_862_6).abs() < 1e-14);
        assert!(s.residual < 1e-12);
        assert!((legendre(&scalar(), &s).unwrap() - 0.062_826_852_348_593_14).abs() < 1e-14);
        assert!((s.phi_star - 0.062_826_852_348_593_14).abs() < 1e-14);
    }

    #[test]
    fn stored_factor_reproduces_hessian() {
        let m = MixtureParams::new(v(&[0.8, -0.3]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7])).unwrap();
        let s = solve_saddle(&m, &v(&[1.5, -0.4]), &SolverOptions::default()).unwrap();
        let h = m.hessian(&s.tau).unwrap();
        assert!((s.hessian() - &h).abs().max() <= 1e-12 * h.abs().max());
        assert!((s.log_det_h - h.determinant().ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_point_agrees_with_newton() {
        let m = MixtureParams::isotropic(v(&[1.0]), 1.0).unwrap().standardized().unwrap().params;
        let a = v(&[0.2]);
        let opts = SolverOptions::default();
        let n = solve_saddle(&m, &a, &opts).unwrap();
        let f = solve_fixed_point(&m, &a, &opts).unwrap();
        assert_eq!(f.method, SolveMethod::FixedPoint);
        assert!((n.tau[0] - f.tau[0]).abs() < 1e-11);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let opts = SolverOptions { max_iter: 1, ..SolverOptions::default() };
        let err = solve_saddle(&scalar(), &v(&[3.0]), &opts).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
        assert!(solve_saddle(&scalar(), &v(&[1.0]), &SolverOptions::with_tol(0.0)).is_err());
        assert!(solve_saddle(&scalar(), &v(&[f64::NAN]), &SolverOptions::default()).is_err());
    }

    #[test]
    fn far_query_points_converge() {
        let m = MixtureParams::isotropic(v(&[3.0, 0.0]), 0.2).unwrap();
        for a in [v(&[50.0, 1.0]), v(&[-4.0, 0.01]), v(&[0.001, -7.0])] {
            let s = solve_saddle(&m, &a, &SolverOptions::default()).unwrap();
            assert!(s.residual <= 1e-12, "{a:?}: {}", s.residual);
        }
    }

    #[test]
    fn c3_ball_examples() {
        let pure = MixtureParams::isotropic(DVector::zeros(2), 1.0).unwrap();
        assert_eq!(c3_ball(&pure, &v(&[0.3, 0.1])).unwrap(), 0.0);
        let c = c3_ball(&scalar(), &v(&[0.05])).unwrap();
        assert!((c - 0.197_355_843_509_065_1).abs() < 1e-14);
        let m = MixtureParams::isotropic(v(&[0.6, 0.0]), 1.0).unwrap();
        let c = c3_ball(&m, &v(&[5.0, 0.0])).unwrap();
        assert!((c - 0.769_800_358_919_501 * 0.216).abs() < 1e-14);
    }

    #[test]
    fn gap_report() {
        let m = MixtureParams::isotropic(v(&[1.0]), 1.0).unwrap().standardized().unwrap().params;
        let opts = SolverOptions::default();
        let r = legendre_gap_report(&m, &v(&[0.0]), &opts).unwrap();
        assert_eq!((r.gap, r.bound, r.admissible), (0.0, 0.0, true));
        let r = legendre_gap_report(&m, &v(&[0.1]), &opts).unwrap();
        assert!(r.admissible);
        assert!(r.gap <= r.c3_ball * 1e-3, "{r:?}");

        let pure = MixtureParams::isotropic(DVector::zeros(3), 1.0).unwrap();
        let r = legendre_gap_report(&pure, &v(&[0.4, -1.0, 2.0]), &opts).unwrap();
        assert!(r.gap < 1e-14);

        let raw = MixtureParams::isotropic(v(&[1.0]), 1.0).unwrap();
        assert!(matches!(legendre_gap_report(&raw, &v(&[0.1]), &opts), Err(Error::Precondition(_))));
    }
}
