//! The correction factor `I(a)` that turns the saddlepoint density into the
//! exact one, and sampled checks of the decay and phase conditions it relies on.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{check_dim, eig_range, sym_inv_sqrt};
use crate::model::Cgf;
use crate::quad::{gauss_legendre, pairwise_sum};
use crate::saddle::SaddlePoint;
use crate::spa::{tail_bound_terms, LOCAL_RADIUS};

/// Largest `kappa` the assumption checker will report.
pub const KAPPA_CAP: f64 = 1e3;

/// Integrand magnitude below which the integration box stops growing.
const NEGLIGIBLE: f64 = 1e-16;

/// Largest refinement disagreement accepted by [`correction_integral`].
pub const REFINEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadRule {
    Trapezoid,
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadSpec {
    /// Nodes per panel and axis; at least 16.
    pub nodes_per_axis: usize,
    /// Radius of the guaranteed integration ball, in units of `(d/n)^{1/2}`.
    pub trunc_radius: f64,
    pub rule: QuadRule,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self { nodes_per_axis: 16, trunc_radius: LOCAL_RADIUS, rule: QuadRule::GaussLegendre }
    }
}

impl QuadSpec {
    fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 16 {
            return Err(Error::InvalidArgument(format!(
                "nodes_per_axis must be at least 16, got {}",
                self.nodes_per_axis
            )));
        }
        if !(self.trunc_radius >= LOCAL_RADIUS) {
            return Err(Error::InvalidArgument(format!(
                "trunc_radius must be at least {LOCAL_RADIUS}, got {}",
                self.trunc_radius
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionResult {
    #[serde(serialize_with = "ser_complex")]
    pub i_value: Complex64,
    /// `|I(a) - 1|`
    pub abs_err_from_one: f64,
    /// Bound on the integrand mass left outside the integration box.
    pub tail_estimate: f64,
    pub nodes_used: usize,
    /// `|I_h - I_{h/2}|` between the two finest panel widths.
    pub refinement_diff: f64,
    /// Half-width of the integration box in scaled `t` coordinates.
    pub box_half_width: f64,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeTuple;
    let mut t = s.serialize_tuple(2)?;
    t.serialize_element(&z.re)?;
    t.serialize_element(&z.im)?;
    t.end()
}

/// Scaled local coordinates at a saddle point: `s = H^{-1/2} t`.
#[derive(Debug, Clone)]
pub struct LocalFrame {
    pub h_inv_sqrt: DMatrix<f64>,
}

impl LocalFrame {
    pub fn new(saddle: &SaddlePoint) -> Result<Self> {
        Ok(Self { h_inv_sqrt: sym_inv_sqrt(&saddle.hessian())? })
    }

    pub fn unscale(&self, t: &DVector<f64>) -> DVector<f64> {
        &self.h_inv_sqrt * t
    }
}

/// `G_a(t) = -phi(tau + i H^{-1/2} t) + phi(tau) + i <H^{-1/2} t, a>` on the
/// principal branch.
pub fn g_function(model: &dyn Cgf, saddle: &SaddlePoint, t: &DVector<f64>) -> Result<Complex64> {
    check_dim(model.dim(), t.len())?;
    let frame = LocalFrame::new(saddle)?;
    g_in_frame(model, saddle, &frame, t)
}

fn g_in_frame(model: &dyn Cgf, saddle: &SaddlePoint, frame: &LocalFrame, t: &DVector<f64>) -> Result<Complex64> {
    let s = frame.unscale(t);
    let z = model.cgf_complex(&saddle.tau, &s)?;
    let base = model.cgf_real(&saddle.tau)?;
    Ok(Complex64::new(base - z.re, s.dot(&saddle.a) - z.im))
}

struct Integrand<'a> {
    model: &'a dyn Cgf,
    saddle: &'a SaddlePoint,
    frame: LocalFrame,
    n: f64,
    log_norm: f64,
    ball: f64,
}

impl Integrand<'_> {
    /// `(n/2pi)^{d/2} [phi(tau + i s)/phi(tau)]^n e^{-i n <s, a>}`, `s = H^{-1/2} t`.
    fn eval(&self, t: &DVector<f64>) -> Result<Complex64> {
        let s = self.frame.unscale(t);
        let lr = self.model.log_ratio(&self.saddle.tau, &s)?;
        if !lr.re.is_finite() {
            if lr.re == f64::NEG_INFINITY {
                if t.norm() <= self.ball {
                    return Err(Error::AssumptionViolation(format!(
                        "mgf vanishes inside the local ball at |t| = {}",
                        t.norm()
                    )));
                }
                return Ok(Complex64::new(0.0, 0.0));
            }
            return Err(Error::Quadrature(format!("non-finite integrand at |t| = {}", t.norm())));
        }
        let expo = Complex64::new(self.n * lr.re + self.log_norm, self.n * (lr.im - s.dot(&self.saddle.a)));
        Ok(expo.exp())
    }
}

/// One-axis rule over `[-half, half]` with panels of width `panel`.
fn axis_rule(rule: QuadRule, nodes: usize, half: f64, panel: f64) -> (Vec<f64>, Vec<f64>) {
    let panels = ((half / panel).round() as usize).max(1);
    let width = half / panels as f64;
    match rule {
        QuadRule::GaussLegendre => {
            let (x, w) = gauss_legendre(nodes);
            let mut xs = Vec::with_capacity(2 * panels * nodes);
            let mut ws = Vec::with_capacity(2 * panels * nodes);
            for p in 0..2 * panels {
                let lo = -half + p as f64 * width;
                let mid = lo + 0.5 * width;
                for (xi, wi) in x.iter().zip(&w) {
                    xs.push(mid + 0.5 * width * xi);
                    ws.push(0.5 * width * wi);
                }
            }
            // mirror exactly so the odd part cancels
            let m = xs.len();
            for i in 0..m / 2 {
                xs[m - 1 - i] = -xs[i];
            }
            (xs, ws)
        }
        QuadRule::Trapezoid => {
            let steps = panels * nodes;
            let h = half / steps as f64;
            let xs: Vec<f64> = (0..=2 * steps).map(|k| (k as f64 - steps as f64) * h).collect();
            let ws: Vec<f64> = (0..=2 * steps)
                .map(|k| if k == 0 || k == 2 * steps { 0.5 * h } else { h })
                .collect();
            (xs, ws)
        }
    }
}

fn tensor_integrate(f: &Integrand<'_>, d: usize, xs: &[f64], ws: &[f64]) -> Result<Complex64> {
    let m = xs.len();
    let outer: Vec<Complex64> = (0..m)
        .into_par_iter()
        .map(|i| -> Result<Complex64> {
            let mut vals = Vec::with_capacity(m.pow(d as u32 - 1));
            let mut idx = vec![0usize; d - 1];
            loop {
                let mut t = DVector::zeros(d);
                t[0] = xs[i];
                let mut w = ws[i];
                for (k, j) in idx.iter().enumerate() {
                    t[k + 1] = xs[*j];
                    w *= ws[*j];
                }
                vals.push(f.eval(&t)? * w);
                // odometer over the remaining axes
                let mut k = 0;
                loop {
                    if k == d - 1 {
                        return Ok(pairwise_sum(&vals));
                    }
                    idx[k] += 1;
                    if idx[k] < m {
                        break;
                    }
                    idx[k] = 0;
                    k += 1;
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairwise_sum(&outer))
}

/// Largest integrand magnitude on the faces of the box `[-half, half]^d`.
fn boundary_max(f: &Integrand<'_>, d: usize, half: f64) -> Result<f64> {
    let k: usize = 33;
    let grid: Vec<f64> = (0..k).map(|i| -half + 2.0 * half * i as f64 / (k - 1) as f64).collect();
    let mut best: f64 = 0.0;
    let count = k.pow(d as u32 - 1);
    for axis in 0..d {
        for sign in [-1.0, 1.0] {
            for flat in 0..count {
                let mut t = DVector::zeros(d);
                let mut rest = flat;
                for j in 0..d {
                    if j == axis {
                        t[j] = sign * half;
                    } else {
                        t[j] = grid[rest % k];
                        rest /= k;
                    }
                }
                best = best.max(f.eval(&t)?.norm());
            }
        }
    }
    Ok(best)
}

/// Computes `I(a) = (n/2pi)^{d/2} int [phi(tau + i H^{-1/2} t)/phi(tau)]^n e^{-i n <H^{-1/2} t, a>} dt`
/// by tensor-product quadrature (d <= 3).
///
/// The box starts at the local ball and grows by one panel width
/// `(d/n)^{1/2}` until the integrand on its faces is below 1e-16; the result
/// is accepted when halving the panel width changes it by at most 1e-6.
pub fn correction_integral(model: &dyn Cgf, saddle: &SaddlePoint, n: u64, spec: &QuadSpec) -> Result<CorrectionResult> {
    spec.validate()?;
    let d = model.dim();
    check_dim(d, saddle.dim())?;
    if d > 3 {
        return Err(Error::Precondition(format!("correction_integral supports d <= 3, got {d}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let nf = n as f64;
    let scale = (d as f64 / nf).sqrt();
    let ball = spec.trunc_radius * scale;
    let frame = LocalFrame::new(saddle)?;
    let f = Integrand {
        model,
        saddle,
        frame,
        n: nf,
        log_norm: 0.5 * d as f64 * (nf / (2.0 * PI)).ln(),
        ball,
    };

    let panel = scale;
    let mut half = (ball / panel).ceil() * panel;
    let mut grow = 0;
    while boundary_max(&f, d, half)? > NEGLIGIBLE {
        half += panel;
        grow += 1;
        if grow > 400 {
            return Err(Error::Quadrature("integrand does not decay; box growth capped".into()));
        }
    }

    let (xs, ws) = axis_rule(spec.rule, spec.nodes_per_axis, half, panel);
    let coarse = tensor_integrate(&f, d, &xs, &ws)?;
    let (xs, ws) = axis_rule(spec.rule, spec.nodes_per_axis, half, 0.5 * panel);
    let fine = tensor_integrate(&f, d, &xs, &ws)?;
    let refinement_diff = (fine - coarse).norm();
    if refinement_diff > REFINEMENT_TOL {
        return Err(Error::Quadrature(format!(
            "refinement disagreement {refinement_diff:e} exceeds {REFINEMENT_TOL:e}"
        )));
    }
    let tail_estimate = truncated_mass_bound(model, &f.frame, d, n, half)?;
    Ok(CorrectionResult {
        i_value: fine,
        abs_err_from_one: (fine - 1.0).norm(),
        tail_estimate,
        nodes_used: xs.len().pow(d as u32),
        refinement_diff,
        box_half_width: half,
    })
}

/// Mass of the integrand outside `[-half, half]^d`. With a Gaussian envelope
/// `S` the integrand is bounded by `(n/2pi)^{d/2} exp(-n lambda ||t||^2 / 2)`,
/// `lambda = lambda_min(H^{-1/2} S H^{-1/2})`, whose mass outside the inscribed
/// ball is `lambda^{-d/2} P(chi2_d > n lambda half^2)`. Otherwise the endpoint
/// tail bounds are reported with `kappa = 1`.
fn truncated_mass_bound(model: &dyn Cgf, frame: &LocalFrame, d: usize, n: u64, half: f64) -> Result<f64> {
    match model.gaussian_envelope() {
        Some(s) => {
            let scaled = &frame.h_inv_sqrt * s * &frame.h_inv_sqrt;
            let (lambda, _) = eig_range(&scaled);
            let chi = ChiSquared::new(d as f64).map_err(|e| Error::Quadrature(e.to_string()))?;
            Ok(lambda.powf(-0.5 * d as f64) * chi.sf(n as f64 * lambda * half * half))
        }
        None => {
            let (a, b) = tail_bound_terms(d, n, 1.0)?;
            Ok(a + b)
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    /// Largest validated decay exponent, capped at [`KAPPA_CAP`].
    pub kappa_est: f64,
    pub kappa_capped: bool,
    /// `min (pi - |Arg phi|)` over the local ball.
    pub delta_arg: f64,
    /// `min |phi(tau + i H^{-1/2} t)| / |phi(tau)|` over the local ball.
    pub delta_mod: f64,
    /// Samples outside the ball violating the decay bound with `kappa_est`.
    pub magnitude_violations: usize,
    /// Samples outside the ball where `exp(-(d/n)^{1/2} ||t||)` alone fails.
    pub exp_branch_violations: usize,
    pub samples: usize,
    /// Sampled `||t||` range outside the ball.
    pub t_min: f64,
    pub t_max: f64,
}

/// Far-field radius of the log-spaced sample set.
const FAR_FIELD: f64 = 1e3;

/// Samples the decay condition on `||t|| >= 2.5 (d/n)^{1/2}` and the phase and
/// modulus margins inside that ball, in `H^{-1/2}`-scaled coordinates.
///
/// Outside the ball, `t` is drawn uniformly in radius on `[2.5, 50] (d/n)^{1/2}`
/// plus a log-spaced set reaching `||t|| = 10^3`; inside, uniformly in the ball.
pub fn check_assumptions(
    model: &dyn Cgf,
    tau_samples: &[DVector<f64>],
    n: u64,
    sample_count: usize,
    seed: u64,
) -> Result<AssumptionReport> {
    let d = model.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let scale = (d as f64 / n as f64).sqrt();
    let inner = LOCAL_RADIUS * scale;
    let outer = 50.0 * scale;
    let far_steps = 24usize;

    struct Far {
        norm: f64,
        log_ratio: f64,
    }
    let per_tau: Vec<(Vec<Far>, f64, f64, usize)> = tau_samples
        .par_iter()
        .enumerate()
        .map(|(idx, tau)| -> Result<(Vec<Far>, f64, f64, usize)> {
            check_dim(d, tau.len())?;
            let h = model.hessian(tau)?;
            let hs = sym_inv_sqrt(&h)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(idx as u64);
            let dir = |rng: &mut ChaCha8Rng| {
                let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let norm = v.norm();
                v / norm
            };
            let mut far = Vec::with_capacity(sample_count + far_steps + 1);
            for _ in 0..sample_count {
                let r = rng.gen_range(inner..=outer);
                let t = dir(&mut rng) * r;
                far.push(Far { norm: r, log_ratio: model.log_ratio(tau, &(&hs * &t))?.re });
            }
            for k in 0..=far_steps {
                let r = outer * (FAR_FIELD / outer).powf(k as f64 / far_steps as f64);
                let t = dir(&mut rng) * r;
                far.push(Far { norm: r, log_ratio: model.log_ratio(tau, &(&hs * &t))?.re });
            }
            let mut delta_arg = f64::INFINITY;
            let mut delta_mod = f64::INFINITY;
            for _ in 0..sample_count {
                let r = inner * rng.gen::<f64>().powf(1.0 / d as f64);
                let t = dir(&mut rng) * r;
                let s = &hs * &t;
                let z = model.cgf_complex(tau, &s)?;
                let arg = z.im.sin().atan2(z.im.cos());
                delta_arg = delta_arg.min(PI - arg.abs());
                delta_mod = delta_mod.min(model.log_ratio(tau, &s)?.re.exp());
            }
            Ok((far, delta_arg, delta_mod, 2 * sample_count + far_steps + 1))
        })
        .collect::<Result<Vec<_>>>()?;

    let far: Vec<&Far> = per_tau.iter().flat_map(|p| p.0.iter()).collect();
    let exp_ok = |f: &Far| f.log_ratio <= -scale * f.norm + 1e-12 * f.norm.max(1.0);
    let poly_ok = |f: &Far, kappa: f64| f.log_ratio <= -(kappa / (d as f64).sqrt()) * f.norm.ln_1p() + 1e-12;
    let holds = |kappa: f64| far.iter().all(|f| exp_ok(f) || poly_ok(f, kappa));

    let (kappa_est, kappa_capped) = if holds(KAPPA_CAP) {
        (KAPPA_CAP, true)
    } else if !holds(0.0) {
        (0.0, false)
    } else {
        let (mut lo, mut hi) = (0.0, KAPPA_CAP);
        while hi - lo > 1e-3 * hi.max(1e-12) {
            let mid = 0.5 * (lo + hi);
            if holds(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo, false)
    };
    let magnitude_violations = far.iter().filter(|f| !(exp_ok(f) || poly_ok(f, kappa_est))).count();
    let exp_branch_violations = far.iter().filter(|f| !exp_ok(f)).count();
    Ok(AssumptionReport {
        kappa_est,
        kappa_capped,
        delta_arg: per_tau.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        delta_mod: per_tau.iter().map(|p| p.2).fold(f64::INFINITY, f64::min),
        magnitude_violations,
        exp_branch_violations,
        samples: per_tau.iter().map(|p| p.3).sum(),
        t_min: inner,
        t_max: FAR_FIELD.max(outer),
    })
}

/// Conservative `kappa` for the error budget from a small fixed-seed sample.
pub fn estimate_kappa(model: &dyn Cgf, tau_samples: &[DVector<f64>], n: u64) -> Result<f64> {
    let report = check_assumptions(model, tau_samples, n, 256, 0)?;
    if report.kappa_est > 0.0 {
        Ok(report.kappa_est)
    } else {
        Err(Error::AssumptionViolation("no kappa > 0 satisfies the decay condition on the sample".into()))
    }
}
