use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::f64::consts::LN_2;

use super::{Cgf, ComplexCgfValue};
use crate::error::{Error, Result};
use crate::linalg::{check_dim, cholesky, eig_range, quad_form, sym_inv_sqrt};

/// Symmetric two-component Gaussian mixture `1/2 N(mu, Sigma) + 1/2 N(-mu, Sigma)`.
#[derive(Debug, Clone)]
pub struct MixtureParams {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    sigma_inv_mu: DVector<f64>,
    /// `<mu, Sigma^{-1} mu>`
    mu_sigma_inv_mu: f64,
    sigma_eig: (f64, f64),
    domain_radius: Option<f64>,
}

/// A mixture rewritten in coordinates where `E X X^T = I`.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub params: MixtureParams,
    /// `W = (Sigma + mu mu^T)^{-1/2}`; the standardized draw is `W X`.
    pub transform: DMatrix<f64>,
}

impl MixtureParams {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
        }
        if mu.iter().chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite model parameter".into()));
        }
        let asym = (&sigma - sigma.transpose()).abs().max();
        if asym > 1e-12 * sigma.abs().max().max(1.0) {
            return Err(Error::InvalidArgument(format!("sigma is not symmetric (|S - S^T| = {asym:e})")));
        }
        let chol = cholesky(&sigma)
            .ok_or_else(|| Error::InvalidArgument("sigma is not positive definite".into()))?;
        let sigma_inv_mu = chol.solve(&mu);
        let mu_sigma_inv_mu = mu.dot(&sigma_inv_mu);
        let sigma_eig = eig_range(&sigma);
        Ok(Self { mu, sigma, sigma_inv_mu, mu_sigma_inv_mu, sigma_eig, domain_radius: None })
    }

    /// Isotropic model `Sigma = s^2 I` with the given mean offset.
    pub fn isotropic(mu: DVector<f64>, scale: f64) -> Result<Self> {
        let d = mu.len();
        Self::new(mu, DMatrix::identity(d, d) * (scale * scale))
    }

    /// Rewrites the model in standardized coordinates `X' = W X` with
    /// `W = (Sigma + mu mu^T)^{-1/2}`, so `E X' X'^T = I`.
    pub fn standardized(&self) -> Result<Standardized> {
        let second_moment = &self.sigma + &self.mu * self.mu.transpose();
        let w = sym_inv_sqrt(&second_moment)?;
        let mu = &w * &self.mu;
        let sigma = &w * &self.sigma * &w;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let mut params = Self::new(mu, sigma)?;
        params.domain_radius = self.domain_radius;
        Ok(Standardized { params, transform: w })
    }

    pub fn with_domain_radius(mut self, radius: f64) -> Self {
        self.domain_radius = Some(radius);
        self
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn mu_norm(&self) -> f64 {
        self.mu.norm()
    }

    /// `<mu, Sigma^{-1} mu>`.
    pub fn mu_sigma_inv_mu(&self) -> f64 {
        self.mu_sigma_inv_mu
    }

    pub fn sigma_inv_mu(&self) -> &DVector<f64> {
        &self.sigma_inv_mu
    }

    /// Smallest and largest eigenvalue of Sigma.
    pub fn sigma_eigen_range(&self) -> (f64, f64) {
        self.sigma_eig
    }

    /// `mu = 0`: the model is exactly Gaussian.
    pub fn is_pure_gaussian(&self) -> bool {
        self.mu.iter().all(|v| *v == 0.0)
    }

    /// True when `Sigma + mu mu^T = I` to `tol`.
    pub fn is_standardized(&self, tol: f64) -> bool {
        let d = self.d();
        let m = &self.sigma + &self.mu * self.mu.transpose() - DMatrix::<f64>::identity(d, d);
        m.abs().max() <= tol
    }

    fn alpha_beta(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<(f64, f64)> {
        check_dim(self.d(), tau.len())?;
        check_dim(self.d(), t.len())?;
        Ok((self.mu.dot(tau), self.mu.dot(t)))
    }

    /// `|phi(tau + i t) / phi(tau)|`, bounded above by `exp(-<t, Sigma t>/2)`.
    pub fn ratio_magnitude(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        let (alpha, beta) = self.alpha_beta(tau, t)?;
        // (cosh 2a + cos 2b) / (2 cosh^2 a) rewritten without overflow.
        let th = alpha.tanh();
        let (sb, cb) = beta.sin_cos();
        let under = cb * cb + th * th * sb * sb;
        Ok((-0.5 * quad_form(&self.sigma, t)).exp() * under.sqrt())
    }

    /// Principal phase of `phi(tau + i t)`: `<tau, Sigma t> + Arg(cosh a cos b + i sinh a sin b)`.
    pub fn phase_arg(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<f64> {
        let (alpha, beta) = self.alpha_beta(tau, t)?;
        let lin = tau.dot(&(&self.sigma * t));
        let (sb, cb) = beta.sin_cos();
        let y = alpha.tanh() * sb;
        if cb == 0.0 && y == 0.0 {
            return Err(Error::BranchFailure { alpha, beta });
        }
        Ok(lin + y.atan2(cb))
    }

    /// `||H(tau)^{-1/2} mu||` as a function of `alpha = <mu, tau>` only.
    fn scaled_mu_norm(&self, alpha: f64) -> f64 {
        let q = self.mu_sigma_inv_mu;
        let s = sech2(alpha);
        (q / (1.0 + s * q)).sqrt()
    }

    fn local_sup(&self, tau_radius: f64, t_radius: f64, kernel: fn(f64, f64) -> f64, power: i32) -> f64 {
        if self.is_pure_gaussian() {
            return 0.0;
        }
        let a_max = self.mu_norm() * tau_radius.max(0.0);
        let f = |alpha: f64, u: f64| {
            let m = self.scaled_mu_norm(alpha);
            kernel(alpha, u * m * t_radius.max(0.0)) * m.powi(power)
        };
        grid_sup(&f, a_max, 1.0)
    }
}

impl Cgf for MixtureParams {
    fn dim(&self) -> usize {
        self.d()
    }

    fn cgf_real(&self, tau: &DVector<f64>) -> Result<f64> {
        check_dim(self.d(), tau.len())?;
        Ok(0.5 * quad_form(&self.sigma, tau) + logcosh(self.mu.dot(tau)))
    }

    fn cgf_complex(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<ComplexCgfValue> {
        let (alpha, beta) = self.alpha_beta(tau, t)?;
        let lc = logcosh_complex(alpha, beta)?;
        let re = 0.5 * (quad_form(&self.sigma, tau) - quad_form(&self.sigma, t)) + lc.re;
        let im = tau.dot(&(&self.sigma * t)) + lc.im;
        Ok(ComplexCgfValue { re, im })
    }

    fn grad(&self, tau: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.d(), tau.len())?;
        let alpha = self.mu.dot(tau);
        Ok(&self.sigma * tau + &self.mu * alpha.tanh())
    }

    fn hessian(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.d(), tau.len())?;
        let s = sech2(self.mu.dot(tau));
        let h = &self.sigma + &self.mu * self.mu.transpose() * s;
        let h = (&h + h.transpose()) * 0.5;
        if cholesky(&h).is_none() {
            return Err(Error::ModelDomain("Hessian failed Cholesky factorization".into()));
        }
        Ok(h)
    }

    fn c3_sup(&self, tau_radius: f64, t_radius: f64) -> f64 {
        self.local_sup(tau_radius, t_radius, c3_kernel, 3)
    }

    fn c4_sup(&self, tau_radius: f64, t_radius: f64) -> f64 {
        self.local_sup(tau_radius, t_radius, c4_kernel, 4)
    }

    fn domain_radius(&self) -> Option<f64> {
        self.domain_radius
    }

    fn gaussian_envelope(&self) -> Option<DMatrix<f64>> {
        Some(self.sigma.clone())
    }

    fn log_ratio(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<Complex64> {
        let (alpha, beta) = self.alpha_beta(tau, t)?;
        let (sb, cb) = beta.sin_cos();
        // cosh(a + ib) / cosh(a) = cos b + i tanh(a) sin b
        let factor = Complex64::new(cb, alpha.tanh() * sb);
        let gauss = Complex64::new(-0.5 * quad_form(&self.sigma, t), tau.dot(&(&self.sigma * t)));
        Ok(gauss + factor.ln())
    }

    fn secant_hessian(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.d(), tau.len())?;
        let alpha = self.mu.dot(tau);
        // int_0^1 sech^2(lambda alpha) d lambda = tanh(alpha) / alpha
        let w = if alpha.abs() < 1e-8 { 1.0 - alpha * alpha / 3.0 } else { alpha.tanh() / alpha };
        Ok(&self.sigma + &self.mu * self.mu.transpose() * w)
    }

    fn third_derivative_norm(&self, tau: &DVector<f64>) -> Result<f64> {
        check_dim(self.d(), tau.len())?;
        let alpha = self.mu.dot(tau);
        Ok(2.0 * sech2(alpha) * alpha.tanh().abs() * self.mu_norm().powi(3))
    }

    fn c3_ball(&self, radius: f64) -> Result<f64> {
        // 2 sech^2 x tanh x increases on [0, atanh(1/sqrt 3)] and decreases after.
        let peak = (1.0 / 3f64.sqrt()).atanh();
        let a = (radius.max(0.0) * self.mu_norm()).min(peak);
        Ok(2.0 * sech2(a) * a.tanh() * self.mu_norm().powi(3))
    }
}

fn sech2(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    4.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Overflow-free `log cosh x = |x| + log((1 + e^{-2|x|}) / 2)`.
pub fn logcosh(x: f64) -> f64 {
    let ax = x.abs();
    ax + (-2.0 * ax).exp().ln_1p() - LN_2
}

/// Principal `Log cosh(alpha + i beta)`.
///
/// The modulus uses `|cosh w|^2 = cosh^2 a (cos^2 b + tanh^2 a sin^2 b)`; the
/// argument is `atan2(tanh a sin b, cos b)`, which has the sign of
/// `Arg(cosh a cos b + i sinh a sin b)` since `cosh a > 0`.
pub fn logcosh_complex(alpha: f64, beta: f64) -> Result<Complex64> {
    let th = alpha.tanh();
    let (sb, cb) = beta.sin_cos();
    let y = th * sb;
    if cb == 0.0 && y == 0.0 {
        return Err(Error::BranchFailure { alpha, beta });
    }
    let re = logcosh(alpha) + 0.5 * (cb * cb + y * y).ln();
    Ok(Complex64::new(re, y.atan2(cb)))
}

/// `(sech^2 w, tanh w)` for complex `w`, evaluated through `e^{-2w}` on the
/// right half-plane and reflected otherwise.
pub fn sech2_tanh(w: Complex64) -> (Complex64, Complex64) {
    let (w, sign) = if w.re >= 0.0 { (w, 1.0) } else { (-w, -1.0) };
    let e = (-2.0 * w).exp();
    let one = Complex64::new(1.0, 0.0);
    let tanh = (one - e) / (one + e);
    let sech2 = 4.0 * e / ((one + e) * (one + e));
    (sech2, tanh * sign)
}

/// `|2 Re[sech^2 w tanh w]|`, `w = alpha + i beta`.
pub fn c3_kernel(alpha: f64, beta: f64) -> f64 {
    let (s2, th) = sech2_tanh(Complex64::new(alpha, beta));
    (2.0 * (s2 * th).re).abs()
}

/// `|2 Re[sech^2 w (1 - 3 sech^2 w)]|`, `w = alpha + i beta`.
pub fn c4_kernel(alpha: f64, beta: f64) -> f64 {
    let (s2, _) = sech2_tanh(Complex64::new(alpha, beta));
    (2.0 * (s2 * (1.0 - 3.0 * s2)).re).abs()
}

const GRID_NODES: usize = 401;

/// Sup of `f` over `[-a_max, a_max] x [-u_max, u_max]`: grid search then
/// golden-section refinement around the best node, one coordinate at a time.
fn grid_sup(f: &dyn Fn(f64, f64) -> f64, a_max: f64, u_max: f64) -> f64 {
    let node = |k: usize, r: f64| -r + 2.0 * r * k as f64 / (GRID_NODES - 1) as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 0..GRID_NODES {
        let a = node(i, a_max);
        for j in 0..GRID_NODES {
            let u = node(j, u_max);
            let v = f(a, u);
            if v > best.0 {
                best = (v, a, u);
            }
        }
    }
    let (mut v, mut a, mut u) = best;
    let ha = 2.0 * a_max / (GRID_NODES - 1) as f64;
    let hu = 2.0 * u_max / (GRID_NODES - 1) as f64;
    if ha > 0.0 {
        let lo = (a - ha).max(-a_max);
        let hi = (a + ha).min(a_max);
        let (x, fx) = golden_max(|x| f(x, u), lo, hi);
        if fx > v {
            v = fx;
            a = x;
        }
    }
    if hu > 0.0 {
        let lo = (u - hu).max(-u_max);
        let hi = (u + hu).min(u_max);
        let (y, fy) = golden_max(|y| f(a, y), lo, hi);
        if fy > v {
            v = fy;
            u = y;
        }
    }
    let _ = u;
    v
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..80 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(mu: f64, sigma: f64) -> MixtureParams {
        MixtureParams::new(DVector::from_element(1, mu), DMatrix::from_element(1, 1, sigma)).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn cgf_real_examples() {
        let m = MixtureParams::isotropic(v(&[0.3, -0.2, 0.5]), 1.3).unwrap();
        assert_eq!(m.cgf_real(&DVector::zeros(3)).unwrap(), 0.0);
        assert!((scalar(0.0, 1.0).cgf_real(&v(&[2.0])).unwrap() - 2.0).abs() < 1e-15);
        let x = scalar(1.0, 1.0).cgf_real(&v(&[1.0])).unwrap();
        assert!((x - 0.933_780_830_483_027_2).abs() < 1e-15);
    }

    #[test]
    fn cgf_real_does_not_overflow() {
        let m = scalar(1.0, 1.0);
        let x = m.cgf_real(&v(&[800.0])).unwrap();
        let expected = 0.5 * 800.0 * 800.0 + 800.0 - LN_2;
        assert!((x - expected).abs() < 1e-9 * expected);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let m = scalar(1.0, 1.0);
        assert!(matches!(m.cgf_real(&v(&[1.0, 2.0])), Err(Error::DimensionMismatch { .. })));
        assert!(m.cgf_complex(&v(&[1.0]), &v(&[1.0, 0.0])).is_err());
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(MixtureParams::new(v(&[1.0, 0.0]), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).is_err());
        assert!(MixtureParams::new(v(&[1.0, 0.0]), DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0])).is_err());
    }

    #[test]
    fn cgf_complex_examples() {
        let m = scalar(1.0, 1.0);
        let z = m.cgf_complex(&v(&[1.0]), &v(&[0.0])).unwrap();
        assert_eq!(z.im, 0.0);
        assert!((z.re - m.cgf_real(&v(&[1.0])).unwrap()).abs() < 1e-15);

        let z = m.cgf_complex(&v(&[0.0]), &v(&[1.2])).unwrap();
        assert_eq!(z.im, 0.0);

        // 40-digit reference values
        let z = m.cgf_complex(&v(&[1.0]), &v(&[0.3])).unwrap();
        assert!((z.re - 0.870_097_428_496_092_8).abs() < 1e-14);
        assert!((z.im - 0.531_369_758_693_282_9).abs() < 1e-14);
    }

    #[test]
    fn logcosh_near_zero_of_cosh() {
        // cos(pi/2) is 6e-17 in f64, so the branch stays defined with a huge negative modulus
        let z = logcosh_complex(0.0, std::f64::consts::FRAC_PI_2).unwrap();
        assert!(z.re < -35.0);
        assert_eq!(z.im, 0.0);
        let z = logcosh_complex(1e-3, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((z.im - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn grad_examples() {
        let m = MixtureParams::isotropic(v(&[1.0, 0.0]), 1.0).unwrap();
        assert_eq!(m.grad(&DVector::zeros(2)).unwrap(), DVector::zeros(2));
        let g = m.grad(&v(&[1.0, 1.0])).unwrap();
        assert!((g[0] - (1.0 + 0.761_594_155_955_764_9)).abs() < 1e-15);
        assert!((g[1] - 1.0).abs() < 1e-15);
        let pure = MixtureParams::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap();
        let tau = v(&[0.3, -0.7]);
        assert!((pure.grad(&tau).unwrap() - pure.sigma() * &tau).norm() < 1e-15);
    }

    #[test]
    fn hessian_examples() {
        let m = MixtureParams::isotropic(v(&[1.0, 2.0]), 1.0).unwrap();
        let h0 = m.hessian(&DVector::zeros(2)).unwrap();
        let expected = DMatrix::identity(2, 2) + m.mu() * m.mu().transpose();
        assert!((h0 - expected).abs().max() < 1e-15);
        let h = scalar(1.0, 1.0).hessian(&v(&[1.0])).unwrap();
        assert!((h[(0, 0)] - 1.419_974_341_614_026).abs() < 1e-14);
        let pure = scalar(0.0, 3.0);
        assert_eq!(pure.hessian(&v(&[5.0])).unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn ratio_magnitude_examples() {
        let m = scalar(1.0, 1.0);
        assert_eq!(m.ratio_magnitude(&v(&[0.7]), &v(&[0.0])).unwrap(), 1.0);
        let r = m.ratio_magnitude(&v(&[0.0]), &v(&[std::f64::consts::FRAC_PI_2])).unwrap();
        assert!(r.abs() < 1e-15);
        let pure = MixtureParams::isotropic(DVector::zeros(2), 1.5).unwrap();
        let t = v(&[0.4, -0.1]);
        let r = pure.ratio_magnitude(&v(&[1.0, 1.0]), &t).unwrap();
        assert!((r - (-0.5 * 2.25 * t.norm_squared()).exp()).abs() < 1e-15);
    }

    #[test]
    fn phase_arg_examples() {
        let m = scalar(1.0, 1.0);
        assert_eq!(m.phase_arg(&v(&[0.4]), &v(&[0.0])).unwrap(), 0.0);
        assert_eq!(m.phase_arg(&v(&[0.0]), &v(&[1.2])).unwrap(), 0.0);
        let p = m.phase_arg(&v(&[1.0]), &v(&[0.3])).unwrap();
        assert!((p - 0.531_369_758_693_282_9).abs() < 1e-14);
    }

    #[test]
    fn kernels() {
        // max of 2 sech^2 x tanh x is 4 / (3 sqrt 3) at tanh x = 1/sqrt 3
        let peak = (1.0 / 3f64.sqrt()).atanh();
        assert!((c3_kernel(peak, 0.0) - 0.769_800_358_919_501).abs() < 1e-14);
        assert_eq!(c3_kernel(0.0, 0.0), 0.0);
        assert!((c4_kernel(0.0, 0.0) - 4.0).abs() < 1e-14);
        // real-axis kernels agree with the real derivatives of log cosh
        for x in [-3.0, -0.4, 0.2, 1.1, 25.0] {
            let s = 1.0 / f64::cosh(x).powi(2);
            assert!((c3_kernel(x, 0.0) - (2.0 * s * x.tanh()).abs()).abs() < 1e-14);
            assert!((c4_kernel(x, 0.0) - (2.0 * s * (1.0 - 3.0 * s)).abs()).abs() < 1e-14);
        }
    }

    #[test]
    fn c3_c4_sup_examples() {
        let pure = MixtureParams::isotropic(DVector::zeros(3), 1.0).unwrap();
        assert_eq!(pure.c3_sup(1.0, 0.1), 0.0);
        assert_eq!(pure.c4_sup(1.0, 0.1), 0.0);

        // tau fixed at zero, t = 0: third-derivative kernel vanishes, fourth is 4 m^4
        let m = scalar(1.0, 1.0);
        assert_eq!(m.c3_sup(0.0, 0.0), 0.0);
        let m0 = (1.0f64 / 2.0).sqrt();
        assert!((m.c4_sup(0.0, 0.0) - 4.0 * m0.powi(4)).abs() < 1e-14);

        // a wide tau range reaches the kernel's global maximum (scaled by m(alpha)^3)
        let c3 = m.c3_sup(5.0, 0.0);
        let peak = (1.0 / 3f64.sqrt()).atanh();
        let brute = (0..=200_000)
            .map(|k| {
                let a = 5.0 * k as f64 / 200_000.0;
                let s = 1.0 / a.cosh().powi(2);
                2.0 * s * a.tanh() * (1.0 / (1.0 + s)).powf(1.5)
            })
            .fold(0.0, f64::max);
        assert!(c3 >= brute - 1e-12 && c3 <= brute + 1e-9, "c3={c3} brute={brute}");
        assert!(c3 < 0.769_800_358_919_501 && peak > 0.0);
        // sup over alpha of the unscaled fourth kernel is 4 at the origin
        assert!(m.c4_sup(3.0, 0.0) <= 4.0 * m0.powi(4) + 1e-12);
    }

    #[test]
    fn standardization() {
        let m = MixtureParams::new(v(&[0.8, -0.3]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7])).unwrap();
        let s = m.standardized().unwrap();
        assert!(s.params.is_standardized(1e-12));
        assert!(!m.is_standardized(1e-12));
        let h0 = s.params.hessian(&DVector::zeros(2)).unwrap();
        assert!((h0 - DMatrix::<f64>::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn secant_hessian_matches_quadrature() {
        let m = MixtureParams::new(v(&[0.8, -0.3]), DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 0.7])).unwrap();
        let tau = v(&[0.9, 1.4]);
        let closed = m.secant_hessian(&tau).unwrap();
        let (nodes, weights) = crate::quad::gauss_legendre_on(40, 0.0, 1.0);
        let mut acc = DMatrix::zeros(2, 2);
        for (l, w) in nodes.iter().zip(&weights) {
            acc += m.hessian(&(&tau * *l)).unwrap() * *w;
        }
        assert!((closed - acc).abs().max() < 1e-13);
        // grad(tau) = secant_hessian(tau) tau since grad(0) = 0
        let g = m.grad(&tau).unwrap();
        assert!((m.secant_hessian(&tau).unwrap() * &tau - g).norm() < 1e-14);
    }

    #[test]
    fn c3_ball_closed_form() {
        let m = scalar(1.0, 1.0);
        let c = m.c3_ball(0.1).unwrap();
        assert!((c - 0.197_355_843_509_065_1).abs() < 1e-14);
        let big = m.c3_ball(10.0).unwrap();
        assert!((big - 0.769_800_358_919_501).abs() < 1e-14);
    }
}
