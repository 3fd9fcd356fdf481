//! Cumulant generating function contract and the symmetric Gaussian mixture.

mod file;
mod mixture;

pub use file::{parse_model_file, MuSpec, ModelTemplate, SigmaSpec};
pub use mixture::{
    c3_kernel, c4_kernel, logcosh, logcosh_complex, sech2_tanh, MixtureParams, Standardized,
};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::{check_dim, symmetrize};
use crate::quad::gauss_legendre_on;

/// Value of the complexified cgf, `log|phi| + i Arg phi`.
///
/// The real part is even in `t` and the imaginary part is odd.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexCgfValue {
    pub re: f64,
    pub im: f64,
}

impl ComplexCgfValue {
    pub fn as_complex(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

/// Capabilities every model must provide to the saddlepoint machinery.
///
/// `tau` is a real point of the declared domain; `t` is the imaginary
/// displacement (unscaled), so `cgf_complex(tau, t)` evaluates `phi(tau + i t)`.
pub trait Cgf: Send + Sync {
    fn dim(&self) -> usize;
    fn cgf_real(&self, tau: &DVector<f64>) -> Result<f64>;
    fn cgf_complex(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<ComplexCgfValue>;
    fn grad(&self, tau: &DVector<f64>) -> Result<DVector<f64>>;
    fn hessian(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>>;

    /// Sup of the third-derivative norm of the odd part over the local region
    /// `||tau|| <= tau_radius`, `||t|| < t_radius` (t in H^{-1/2}-scaled coordinates).
    fn c3_sup(&self, tau_radius: f64, t_radius: f64) -> f64;
    /// As [`Cgf::c3_sup`] for the fourth derivative of the even part.
    fn c4_sup(&self, tau_radius: f64, t_radius: f64) -> f64;

    /// Radius of the declared real domain V_d, if the model fixes one.
    fn domain_radius(&self) -> Option<f64> {
        None
    }

    /// A matrix `S` with `|phi(tau + i t) / phi(tau)| <= exp(-<t, S t> / 2)` for all
    /// `tau` and `t`, when the model has one.
    fn gaussian_envelope(&self) -> Option<DMatrix<f64>> {
        None
    }

    /// `phi(tau + i t) - phi(tau)` on any branch; only `exp` of this is used.
    fn log_ratio(&self, tau: &DVector<f64>, t: &DVector<f64>) -> Result<Complex64> {
        let z = self.cgf_complex(tau, t)?;
        Ok(Complex64::new(z.re - self.cgf_real(tau)?, z.im))
    }

    /// `int_0^1 H(lambda tau) d lambda`, so that `grad(tau) = grad(0) + secant_hessian(tau) tau`.
    fn secant_hessian(&self, tau: &DVector<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.dim(), tau.len())?;
        let (nodes, weights) = gauss_legendre_on(16, 0.0, 1.0);
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for (l, w) in nodes.iter().zip(&weights) {
            acc += self.hessian(&(tau * *l))? * *w;
        }
        Ok(symmetrize(&acc))
    }

    /// Operator norm of the real third-derivative tensor at `tau`.
    ///
    /// The default is a finite-difference estimate over coordinate and
    /// diagonal directions, so it is a lower estimate of the true norm.
    fn third_derivative_norm(&self, tau: &DVector<f64>) -> Result<f64> {
        let d = self.dim();
        check_dim(d, tau.len())?;
        let h = 1e-4;
        let mut dirs: Vec<DVector<f64>> = (0..d)
            .map(|i| DVector::from_fn(d, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        dirs.push(DVector::from_element(d, 1.0 / (d as f64).sqrt()));
        let mut best: f64 = 0.0;
        for u in &dirs {
            let hp = self.hessian(&(tau + u * h))?;
            let hm = self.hessian(&(tau - u * h))?;
            let v = (u.dot(&(&hp * u)) - u.dot(&(&hm * u))) / (2.0 * h);
            best = best.max(v.abs());
        }
        Ok(best)
    }

    /// `sup_{||tau|| <= radius} ||nabla^3 phi(tau)||`.
    ///
    /// Default: maximum of [`Cgf::third_derivative_norm`] over a radial grid
    /// along the coordinate axes.
    fn c3_ball(&self, radius: f64) -> Result<f64> {
        let d = self.dim();
        let mut best: f64 = self.third_derivative_norm(&DVector::zeros(d))?;
        if radius <= 0.0 {
            return Ok(best);
        }
        for i in 0..d {
            for k in 1..=20 {
                let r = radius * k as f64 / 20.0;
                for s in [-1.0, 1.0] {
                    let tau = DVector::from_fn(d, |j, _| if i == j { s * r } else { 0.0 });
                    best = best.max(self.third_derivative_norm(&tau)?);
                }
            }
        }
        Ok(best)
    }
}
