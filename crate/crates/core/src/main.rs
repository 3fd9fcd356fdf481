use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use nalgebra::DVector;
use serde_json::{json, Value};

use hdspa::correction::{check_assumptions, correction_integral, estimate_kappa, QuadSpec};
use hdspa::experiments::{run_experiment, ExperimentSpec, Mode};
use hdspa::model::{parse_model_file, MixtureParams};
use hdspa::oracle::{clt_ratio, exact_mean_density};
use hdspa::saddle::{legendre_gap_report, solve_saddle, SaddlePoint, SolverOptions, DEFAULT_TOL};
use hdspa::spa::{model_error_bound, spa_density};

#[derive(Parser, Debug)]
#[command(name = "hdspa", version, about = "Saddlepoint densities of the sample mean for the symmetric Gaussian mixture")]
struct Cli {
    /// Model file (TOML)
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Directory for output files; JSON goes to stdout when absent
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, global = true)]
    quad_nodes: Option<usize>,
    /// Dimension for models without a fixed one
    #[arg(long, global = true)]
    d: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// SPA density of the mean at one point, with the exact value and error budget
    Eval {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long)]
        n: u64,
    },
    /// Saddle point and Legendre transform at one point
    Solve {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
    },
    /// Correction integral I(a) by quadrature (d <= 3)
    Correction {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        a: Vec<f64>,
        #[arg(long)]
        n: u64,
    },
    /// Sample the decay and phase conditions at the saddle points of the given points
    VerifyAssumptions {
        #[arg(long)]
        n: u64,
        /// Query points separated by ';', coordinates by ','
        #[arg(long, allow_hyphen_values = true)]
        a: Option<String>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
    },
    /// Run a parameter sweep described by a spec file
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        mode: Option<Mode>,
    },
    /// Local CLT ratio at x for the standardized model
    Clt {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long)]
        n: u64,
    },
}

fn load_model(cli: &Cli) -> Result<MixtureParams> {
    let path = cli.model.as_ref().context("--model is required for this command")?;
    let template = parse_model_file(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(template.instantiate(cli.d)?)
}

fn point(model: &MixtureParams, coords: &[f64]) -> Result<DVector<f64>> {
    if coords.len() != model.d() {
        bail!("point has {} coordinates, model dimension is {}", coords.len(), model.d());
    }
    Ok(DVector::from_column_slice(coords))
}

fn saddle_json(s: &SaddlePoint) -> Value {
    json!({
        "a": s.a.as_slice(),
        "tau": s.tau.as_slice(),
        "phi_star": s.phi_star,
        "log_det_h": s.log_det_h,
        "residual": s.residual,
        "iterations": s.iterations,
        "method": format!("{:?}", s.method).to_lowercase(),
        "within_existence_ball": s.within_existence_ball(),
    })
}

fn emit(out: Option<&Path>, name: &str, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let path = dir.join(format!("{name}.json"));
            std::fs::write(&path, text + "\n")?;
            eprintln!("wrote {}", path.display());
        }
        None => print_stdout(&text)?,
    }
    Ok(())
}

fn print_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        other => Ok(other?),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let opts = SolverOptions::with_tol(cli.tol);
    let out = cli.out.as_deref();
    match &cli.command {
        Command::Eval { a, n } => {
            let model = load_model(cli)?;
            let a = point(&model, a)?;
            let saddle = solve_saddle(&model, &a, &opts)?;
            let spa = spa_density(&saddle, *n)?;
            let exact = exact_mean_density(&model, *n, &a)?;
            let tau_radius = 2.0 * a.norm();
            let kappa = estimate_kappa(&model, &[DVector::zeros(model.d()), saddle.tau.clone()], *n)?;
            let budget = model_error_bound(&model, *n, tau_radius, kappa)?;
            emit(
                out,
                "eval",
                &json!({
                    "saddle": saddle_json(&saddle),
                    "spa": spa,
                    "exact": exact,
                    "rel_err": (spa.density / exact - 1.0).abs(),
                    "budget": budget,
                }),
            )
        }
        Command::Solve { a } => {
            let model = load_model(cli)?;
            let a = point(&model, a)?;
            let saddle = solve_saddle(&model, &a, &opts)?;
            let gap = if model.is_standardized(1e-10) { Some(legendre_gap_report(&model, &a, &opts)?) } else { None };
            emit(out, "solve", &json!({ "saddle": saddle_json(&saddle), "legendre_gap": gap }))
        }
        Command::Correction { a, n } => {
            let model = load_model(cli)?;
            let a = point(&model, a)?;
            let saddle = solve_saddle(&model, &a, &opts)?;
            let mut quad = QuadSpec::default();
            if let Some(k) = cli.quad_nodes {
                quad.nodes_per_axis = k;
            }
            let res = correction_integral(&model, &saddle, *n, &quad)?;
            emit(out, "correction", &json!({ "saddle": saddle_json(&saddle), "n": n, "correction": res }))
        }
        Command::VerifyAssumptions { n, a, samples } => {
            let model = load_model(cli)?;
            let mut taus = vec![DVector::zeros(model.d())];
            if let Some(text) = a {
                for chunk in text.split(';').filter(|c| !c.trim().is_empty()) {
                    let coords = chunk
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .with_context(|| format!("bad point '{chunk}'"))?;
                    taus.push(solve_saddle(&model, &point(&model, &coords)?, &opts)?.tau);
                }
            }
            let report = check_assumptions(&model, &taus, *n, *samples, cli.seed.unwrap_or(0))?;
            emit(out, "assumptions", &json!({ "d": model.d(), "n": n, "report": report }))
        }
        Command::Experiment { spec, mode } => {
            let mut spec_value = ExperimentSpec::from_file(spec).with_context(|| format!("reading {}", spec.display()))?;
            if let Some(m) = mode {
                spec_value.mode = *m;
            }
            if let Some(s) = cli.seed {
                spec_value.seed = s;
            }
            if let Some(dir) = &cli.out {
                spec_value.output_dir = dir.clone();
            }
            if let Some(k) = cli.quad_nodes {
                spec_value.quad_nodes = Some(k);
            }
            if cli.tol != DEFAULT_TOL {
                spec_value.tol = Some(cli.tol);
            }
            let res = run_experiment(&spec_value)?;
            let failures = res.records.iter().filter(|r| !r.is_ok()).count()
                + res.assumptions.iter().filter(|r| r.report.is_err()).count();
            let summary = json!({
                "mode": spec_value.mode.name(),
                "rows": res.records.len() + res.assumptions.len(),
                "failures": failures,
                "files": res.files,
            });
            print_stdout(&serde_json::to_string_pretty(&summary)?)?;
            Ok(())
        }
        Command::Clt { x, n } => {
            let model = load_model(cli)?;
            let model = if model.is_standardized(1e-10) { model } else { model.standardized()?.params };
            let x = point(&model, x)?;
            let r = clt_ratio(&model, *n, &x)?;
            emit(out, "clt", &json!({ "x": x.as_slice(), "n": n, "clt": r }))
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
