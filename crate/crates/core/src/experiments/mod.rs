//! Parameter sweeps over `(d, n, a)` with CSV and manifest outputs.

mod fit;
mod io;

pub use fit::{fit_power_law, fit_slope, fit_slope_by, SlopeFit, XKey, YKey};
pub use io::{
    assumptions_to_csv, emit_plot_data, plot_table, read_plot_data, results_from_csv, results_to_csv,
    sha256_hex, write_outputs, Manifest, ManifestEntry, PlotKind, ASSUMPTIONS_HEADER, CSV_HEADER,
};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::correction::{check_assumptions, correction_integral, estimate_kappa, AssumptionReport, QuadSpec};
use crate::error::{Error, Result};
use crate::model::{parse_model_file, Cgf, MixtureParams, ModelTemplate};
use crate::oracle::{clt_ratio, ExactMeanDensity};
use crate::saddle::{solve_saddle, SolverOptions};
use crate::spa::{model_error_bound, spa_density};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    ErrorScaling,
    CorrectionStudy,
    CltStudy,
    Assumptions,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::ErrorScaling => "error_scaling",
            Mode::CorrectionStudy => "correction_study",
            Mode::CltStudy => "clt_study",
            Mode::Assumptions => "assumptions",
        }
    }

    pub fn plot_kind(&self) -> Option<PlotKind> {
        match self {
            Mode::ErrorScaling => Some(PlotKind::ErrorScaling),
            Mode::CorrectionStudy => Some(PlotKind::Correction),
            Mode::CltStudy => Some(PlotKind::Clt),
            Mode::Assumptions => None,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "error_scaling" => Ok(Mode::ErrorScaling),
            "correction_study" | "correction" => Ok(Mode::CorrectionStudy),
            "clt_study" | "clt" => Ok(Mode::CltStudy),
            "assumptions" => Ok(Mode::Assumptions),
            other => Err(Error::Parse(format!("unknown mode '{other}'"))),
        }
    }
}

/// Query points: explicit vectors, or `directions` seeded unit directions on
/// each radius in `shells` (radius 0 contributes the origin once).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum APoints {
    Explicit { points: Vec<Vec<f64>> },
    Shells { shells: Vec<f64>, directions: usize },
}

impl Default for APoints {
    fn default() -> Self {
        APoints::Shells { shells: vec![0.0, 0.3], directions: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(ModelTemplate),
}

impl Serialize for ModelTemplate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("ModelTemplate", 4)?;
        st.serialize_field("d", &self.d)?;
        st.serialize_field("mu", &format!("{:?}", self.mu))?;
        st.serialize_field("sigma", &format!("{:?}", self.sigma))?;
        st.serialize_field("standardize", &self.standardize)?;
        st.end()
    }
}

fn default_d_grid() -> Vec<usize> {
    vec![1, 2, 4, 8]
}

fn default_n_grid() -> Vec<u64> {
    vec![100, 200, 400, 800, 1600, 3200, 6400]
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

fn default_samples() -> usize {
    2000
}

/// Sweep description, read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub model: ModelRef,
    pub mode: Mode,
    #[serde(default = "default_d_grid")]
    pub d_grid: Vec<usize>,
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<u64>,
    #[serde(default)]
    pub a_points: APoints,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Fill `wall_ms`; off by default so outputs are byte-reproducible.
    #[serde(default)]
    pub timing: bool,
    #[serde(default)]
    pub quad_nodes: Option<usize>,
    #[serde(default)]
    pub tol: Option<f64>,
    /// Samples per tau for the assumption checker.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a spec file; a relative model path is resolved against the spec's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let mut spec = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let ModelRef::Path(p) = &spec.model {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    spec.model = ModelRef::Path(dir.join(p));
                }
            }
        }
        Ok(spec)
    }

    pub fn template(&self) -> Result<ModelTemplate> {
        match &self.model {
            ModelRef::Path(p) => parse_model_file(p),
            ModelRef::Inline(t) => Ok(t.clone()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_grid.is_empty() || self.n_grid.is_empty() {
            return Err(Error::InvalidArgument("d_grid and n_grid must be nonempty".into()));
        }
        if self.d_grid.contains(&0) || self.n_grid.contains(&0) {
            return Err(Error::InvalidArgument("grid values must be positive".into()));
        }
        if self.mode == Mode::CorrectionStudy && self.d_grid.iter().any(|d| *d > 3) {
            return Err(Error::InvalidArgument("correction_study supports d <= 3".into()));
        }
        match &self.a_points {
            APoints::Explicit { points } if points.is_empty() => {
                Err(Error::InvalidArgument("a_points must be nonempty".into()))
            }
            APoints::Shells { shells, directions } if shells.is_empty() || *directions == 0 => {
                Err(Error::InvalidArgument("shells and directions must be nonempty".into()))
            }
            _ => Ok(()),
        }
    }

    fn solver(&self) -> SolverOptions {
        self.tol.map(SolverOptions::with_tol).unwrap_or_default()
    }

    fn quad(&self) -> QuadSpec {
        let mut q = QuadSpec::default();
        if let Some(k) = self.quad_nodes {
            q.nodes_per_axis = k;
        }
        q
    }

    /// Query points in dimension `d`, deterministic in `(seed, d)`.
    pub fn points_for(&self, d: usize) -> Result<Vec<DVector<f64>>> {
        match &self.a_points {
            APoints::Explicit { points } => points
                .iter()
                .filter(|p| p.len() == d)
                .map(|p| Ok(DVector::from_column_slice(p)))
                .collect(),
            APoints::Shells { shells, directions } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(d as u64);
                let dirs: Vec<DVector<f64>> = (0..*directions)
                    .map(|k| {
                        if d == 1 {
                            DVector::from_element(1, if k % 2 == 0 { 1.0 } else { -1.0 })
                        } else {
                            let v = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
                            let norm: f64 = v.norm();
                            v / norm
                        }
                    })
                    .collect();
                let mut out: Vec<DVector<f64>> = Vec::new();
                for r in shells {
                    if *r == 0.0 {
                        out.push(DVector::zeros(d));
                        continue;
                    }
                    for u in &dirs {
                        let p = u * *r;
                        if !out.contains(&p) {
                            out.push(p);
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// One `(d, n, a)` row of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub d: usize,
    pub n: u64,
    pub a_norm: f64,
    pub rho_spa: Option<f64>,
    pub rho_exact: Option<f64>,
    /// `|rho_spa / rho_exact - 1|`
    pub rel_err: Option<f64>,
    /// `|I(a) - 1|` from the quadrature
    pub i_minus_one: Option<f64>,
    pub eps: f64,
    pub bound_total: Option<f64>,
    pub wall_ms: Option<f64>,
    pub status: String,
}

impl ResultRecord {
    pub fn empty(d: usize, n: u64) -> Self {
        Self {
            d,
            n,
            a_norm: 0.0,
            rho_spa: None,
            rho_exact: None,
            rel_err: None,
            i_minus_one: None,
            eps: (d * d) as f64 / n as f64,
            bound_total: None,
            wall_ms: None,
            status: "ok".into(),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone)]
pub struct AssumptionRow {
    pub d: usize,
    pub n: u64,
    pub report: std::result::Result<AssumptionReport, String>,
}

struct Task {
    d: usize,
    n: u64,
    a: DVector<f64>,
    index: usize,
}

struct Context {
    models: BTreeMap<usize, std::result::Result<MixtureParams, String>>,
    kappas: BTreeMap<(usize, u64), std::result::Result<f64, String>>,
    tau_radius: BTreeMap<usize, f64>,
}

fn build_tasks(spec: &ExperimentSpec) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for &d in &spec.d_grid {
        let points = spec.points_for(d)?;
        for &n in &spec.n_grid {
            for a in &points {
                tasks.push(Task { d, n, a: a.clone(), index: tasks.len() });
            }
        }
    }
    Ok(tasks)
}

fn build_context(spec: &ExperimentSpec, tasks: &[Task], standardize: bool) -> Result<Context> {
    let template = spec.template()?;
    let mut models = BTreeMap::new();
    let mut tau_radius = BTreeMap::new();
    for &d in &spec.d_grid {
        let a_max = spec.points_for(d)?.iter().map(|a| a.norm()).fold(0.0, f64::max);
        // V_d: ball of radius 2 ||a_max||
        tau_radius.insert(d, 2.0 * a_max);
        let model = template.instantiate(Some(d)).and_then(|m| {
            let m = if standardize && !m.is_standardized(1e-10) { m.standardized()?.params } else { m };
            Ok(m.with_domain_radius(2.0 * a_max))
        });
        models.insert(d, model.map_err(|e| e.to_string()));
    }
    let keys: Vec<(usize, u64)> = spec.d_grid.iter().flat_map(|d| spec.n_grid.iter().map(move |n| (*d, *n))).collect();
    let kappas: BTreeMap<(usize, u64), std::result::Result<f64, String>> = keys
        .par_iter()
        .map(|&(d, n)| {
            let res = match &models[&d] {
                Ok(m) => {
                    let mut taus = vec![DVector::zeros(d)];
                    for t in tasks.iter().filter(|t| t.d == d && t.n == n) {
                        if let Ok(s) = solve_saddle(m, &t.a, &spec.solver()) {
                            taus.push(s.tau);
                        }
                    }
                    estimate_kappa(m, &taus, n).map_err(|e| e.to_string())
                }
                Err(e) => Err(e.clone()),
            };
            ((d, n), res)
        })
        .collect();
    Ok(Context { models, kappas, tau_radius })
}

fn finish_rows(mut rows: Vec<(usize, ResultRecord)>, timing: bool) -> Vec<ResultRecord> {
    rows.sort_by(|(ia, a), (ib, b)| {
        (a.d, a.n)
            .cmp(&(b.d, b.n))
            .then(a.a_norm.total_cmp(&b.a_norm))
            .then(ia.cmp(ib))
    });
    rows.into_iter()
        .map(|(_, mut r)| {
            if !timing {
                r.wall_ms = None;
            }
            r
        })
        .collect()
}

fn run_rows(
    spec: &ExperimentSpec,
    standardize: bool,
    row: impl Fn(&Context, &MixtureParams, &Task, &mut ResultRecord) -> Result<()> + Sync,
) -> Result<Vec<ResultRecord>> {
    spec.validate()?;
    let tasks = build_tasks(spec)?;
    let ctx = build_context(spec, &tasks, standardize)?;
    let rows: Vec<(usize, ResultRecord)> = tasks
        .par_iter()
        .map(|task| {
            let start = Instant::now();
            let mut rec = ResultRecord::empty(task.d, task.n);
            rec.a_norm = task.a.norm();
            let outcome = match &ctx.models[&task.d] {
                Ok(m) => row(&ctx, m, task, &mut rec),
                Err(e) => Err(Error::ModelDomain(e.clone())),
            };
            if let Err(e) = outcome {
                rec.status = format!("error: {e}");
            }
            rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
            (task.index, rec)
        })
        .collect();
    Ok(finish_rows(rows, spec.timing))
}

fn fill_spa_row(spec: &ExperimentSpec, ctx: &Context, m: &MixtureParams, task: &Task, rec: &mut ResultRecord) -> Result<f64> {
    let saddle = solve_saddle(m, &task.a, &spec.solver())?;
    let est = spa_density(&saddle, task.n)?;
    let log_exact = ExactMeanDensity::new(m, task.n)?.log_density(&task.a)?;
    rec.rho_spa = Some(est.density);
    rec.rho_exact = Some(log_exact.exp());
    rec.rel_err = Some((est.log_density - log_exact).exp_m1().abs());
    let kappa = ctx.kappas[&(task.d, task.n)].clone().map_err(Error::AssumptionViolation)?;
    let budget = model_error_bound(m, task.n, ctx.tau_radius[&task.d], kappa)?;
    rec.bound_total = Some(budget.total);
    Ok(log_exact - est.log_density)
}

/// SPA against the exact oracle on every `(d, n, a)`.
pub fn run_error_scaling(spec: &ExperimentSpec) -> Result<Vec<ResultRecord>> {
    run_rows(spec, false, |ctx, m, task, rec| fill_spa_row(spec, ctx, m, task, rec).map(|_| ()))
}

/// Adds `|I(a) - 1|` from the quadrature (d <= 3) and checks it against the
/// oracle ratio `rho_exact / rho_spa`.
pub fn run_correction_study(spec: &ExperimentSpec) -> Result<Vec<ResultRecord>> {
    if spec.d_grid.iter().any(|d| *d > 3) {
        return Err(Error::InvalidArgument("correction_study supports d <= 3".into()));
    }
    let quad = spec.quad();
    run_rows(spec, false, |ctx, m, task, rec| {
        let log_ratio = fill_spa_row(spec, ctx, m, task, rec)?;
        let saddle = solve_saddle(m, &task.a, &spec.solver())?;
        let c = correction_integral(m, &saddle, task.n, &quad)?;
        rec.i_minus_one = Some(c.abs_err_from_one);
        let gap = (log_ratio.exp() - c.i_value.re).abs();
        if gap > 1e-6 {
            rec.status = format!("inconsistent: |rho_exact/rho_spa - I| = {gap:e}");
        }
        Ok(())
    })
}

/// Local CLT rows: `a_norm = ||x||`, `rho_spa` holds the Gaussian reference
/// density of the mean, `rel_err = |ratio - 1|`, `bound_total` the CLT bound.
pub fn run_clt_study(spec: &ExperimentSpec) -> Result<Vec<ResultRecord>> {
    run_rows(spec, true, |_, m, task, rec| {
        let r = clt_ratio(m, task.n, &task.a)?;
        let nf = task.n as f64;
        let d = task.d as f64;
        let gauss = (0.5 * d * nf.ln() - 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * task.a.norm_squared()).exp();
        rec.rho_spa = Some(gauss);
        rec.rho_exact = Some(r.ratio * gauss);
        rec.rel_err = Some((r.ratio - 1.0).abs());
        rec.bound_total = Some(r.bound);
        Ok(())
    })
}

/// Assumption checks per `(d, n)`, sampling at the saddle points of the query grid.
pub fn run_assumptions(spec: &ExperimentSpec) -> Result<Vec<AssumptionRow>> {
    spec.validate()?;
    let template = spec.template()?;
    let mut rows = Vec::new();
    for &d in &spec.d_grid {
        let model = template.instantiate(Some(d));
        let points = spec.points_for(d)?;
        for &n in &spec.n_grid {
            let report = model.as_ref().map_err(|e| e.to_string()).and_then(|m| {
                let mut taus = vec![DVector::zeros(d)];
                for a in &points {
                    taus.push(solve_saddle(m, a, &spec.solver()).map_err(|e| e.to_string())?.tau);
                }
                check_assumptions(m as &dyn Cgf, &taus, n, spec.samples, spec.seed).map_err(|e| e.to_string())
            });
            rows.push(AssumptionRow { d, n, report });
        }
    }
    Ok(rows)
}

/// Summary of a completed sweep.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub records: Vec<ResultRecord>,
    pub assumptions: Vec<AssumptionRow>,
    pub files: Vec<PathBuf>,
}

/// Runs the spec's mode and writes its CSV, plot table and manifest under `output_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<SweepOutput> {
    let mode = spec.mode;
    let (records, assumptions) = match mode {
        Mode::ErrorScaling => (run_error_scaling(spec)?, vec![]),
        Mode::CorrectionStudy => (run_correction_study(spec)?, vec![]),
        Mode::CltStudy => (run_clt_study(spec)?, vec![]),
        Mode::Assumptions => (vec![], run_assumptions(spec)?),
    };
    let mut files = Vec::new();
    let failures;
    let rows;
    if mode == Mode::Assumptions {
        files.push(("assumptions.csv".to_string(), assumptions_to_csv(&assumptions)));
        failures = assumptions.iter().filter(|r| r.report.is_err()).count();
        rows = assumptions.len();
    } else {
        files.push((format!("{}.csv", mode.name()), results_to_csv(&records)));
        if let Some(kind) = mode.plot_kind() {
            files.push((format!("{}_plot.dat", mode.name()), plot_table(&records, kind)));
        }
        failures = records.iter().filter(|r| !r.is_ok()).count();
        rows = records.len();
    }
    let written = write_outputs(&spec.output_dir, &files, mode.name(), spec, rows, failures)?;
    Ok(SweepOutput { records, assumptions, files: written })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mode: Mode, mu: &str) -> ExperimentSpec {
        let text = format!(
            "mode = \"{}\"\nd_grid = [1, 2]\nn_grid = [100, 200]\n[model]\nmu = \"{mu}\"\nsigma = \"identity\"\n",
            mode.name()
        );
        ExperimentSpec::from_toml(&text).unwrap()
    }

    #[test]
    fn parses_defaults() {
        let s = spec(Mode::ErrorScaling, "unit*1.0");
        assert_eq!(s.a_points, APoints::default());
        assert_eq!(s.seed, 0);
        assert!(!s.timing);
        let pts = s.points_for(3).unwrap();
        assert_eq!(pts.len(), 5);
        assert!(pts.iter().skip(1).all(|p| (p.norm() - 0.3).abs() < 1e-15));
        assert_eq!(s.points_for(1).unwrap().len(), 3);
    }

    #[test]
    fn gaussian_sweep_is_exact() {
        let rows = run_error_scaling(&spec(Mode::ErrorScaling, "zero")).unwrap();
        assert!(!rows.is_empty());
        for r in &rows {
            assert!(r.is_ok(), "{}", r.status);
            assert!(r.rel_err.unwrap() <= 1e-10);
            assert_eq!(r.eps, (r.d * r.d) as f64 / r.n as f64);
            assert!(r.wall_ms.is_none());
        }
    }

    #[test]
    fn rows_sorted() {
        let rows = run_error_scaling(&spec(Mode::ErrorScaling, "unit*1.0")).unwrap();
        for w in rows.windows(2) {
            assert!((w[0].d, w[0].n) <= (w[1].d, w[1].n));
            if (w[0].d, w[0].n) == (w[1].d, w[1].n) {
                assert!(w[0].a_norm <= w[1].a_norm);
            }
        }
    }

    #[test]
    fn correction_study_rejects_large_d() {
        let mut s = spec(Mode::CorrectionStudy, "unit*1.0");
        s.d_grid = vec![4];
        assert!(run_correction_study(&s).is_err());
    }

    #[test]
    fn mode_names() {
        for m in [Mode::ErrorScaling, Mode::CorrectionStudy, Mode::CltStudy, Mode::Assumptions] {
            assert_eq!(m.name().parse::<Mode>().unwrap(), m);
        }
        assert!("nope".parse::<Mode>().is_err());
    }
}
