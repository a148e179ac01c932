//! The `symflow` command-line harness.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::{Holes, System};
use crate::error::{Error, Result};
use crate::escape_flow::{
    discretize, escape_rate_flow_on, flow_hole, monte_carlo_survival, step_roof_flow_survivor, FlowEscapeResult,
    McEstimate,
};
use crate::gibbs::{build_transfer, certify_gibbs, gamma};
use crate::open_system::{escape_rate_discrete_with, validate_nested, ItemStatus};
use crate::suspension::{
    build_suspension_sft, certify_suspension_gibbs, mu_tilde, verify_invariance, StepRoof, SuspensionCylinders,
    SuspensionMeasure,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

/// Column order of flow result tables.
pub const FLOW_COLUMNS: [&str; 12] = [
    "n",
    "delta",
    "m",
    "R_lower",
    "R_upper",
    "hole_measure",
    "nu_slab_measure",
    "ratio_lo",
    "ratio_hi",
    "gamma",
    "mc_estimate",
    "mc_stderr",
];

#[derive(Debug, Parser)]
#[command(
    name = "symflow",
    version,
    about = "Escape rates for open subshifts and suspension semi-flows"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Pressure of the potential.
    Pressure,
    /// Observed Gibbs constants of the equilibrium state.
    GibbsCertify,
    /// Discrete escape rates through each hole.
    EscapeDiscrete,
    /// Check the nested condition on the hole range.
    ValidateNested,
    /// Export both discretized suspensions.
    BuildSuspension,
    /// Consistency and Gibbs checks for the suspension measures.
    VerifyInvariance,
    /// Flow escape-rate intervals through each hole.
    EscapeFlow,
    /// Flow ratio intervals along the nested hole sequence.
    TheoremA,
    /// Monte Carlo survival of the flow against the operator value.
    MonteCarlo,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pressure => "pressure",
            Command::GibbsCertify => "gibbs-certify",
            Command::EscapeDiscrete => "escape-discrete",
            Command::ValidateNested => "validate-nested",
            Command::BuildSuspension => "build-suspension",
            Command::VerifyInvariance => "verify-invariance",
            Command::EscapeFlow => "escape-flow",
            Command::TheoremA => "theorem-a",
            Command::MonteCarlo => "monte-carlo",
        }
    }
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_VALIDATION,
    }
}

/// Parses arguments, runs the command and returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VALIDATION,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Output of one command: artifacts to write and whether all checks passed.
struct Output {
    files: Vec<(String, String)>,
    passed: bool,
}

impl Output {
    fn one(name: &str, body: String) -> Self {
        Output {
            files: vec![(name.to_string(), body)],
            passed: true,
        }
    }
}

/// Runs a command; `Ok(false)` means the run completed but a check failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("missing `--config <path>`".into()))?;
    if let Some(j) = cli.jobs {
        // A second initialisation in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let started = Instant::now();
    let raw = std::fs::read(config_path)?;
    let sys = System::load(config_path)?;
    let loaded = started.elapsed();
    log(cli, &format!("loaded {}", config_path.display()));
    let out = compute(cli, &sys)?;
    let computed = started.elapsed();
    std::fs::create_dir_all(&cli.out)?;
    let mut artifacts = Vec::new();
    for (name, body) in &out.files {
        let path = cli.out.join(name);
        std::fs::write(&path, body)?;
        log(cli, &format!("wrote {}", path.display()));
        artifacts.push(json!({
            "path": name,
            "sha256": hex(&Sha256::digest(body.as_bytes())),
        }));
    }
    let manifest = json!({
        "tool": "symflow",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cli.command.name(),
        "config": config_path.display().to_string(),
        "config_sha256": hex(&Sha256::digest(&raw)),
        "artifacts": artifacts,
        "checks_passed": out.passed,
        "timings_ms": {
            "load": loaded.as_secs_f64() * 1e3,
            "compute": (computed - loaded).as_secs_f64() * 1e3,
            "total": started.elapsed().as_secs_f64() * 1e3,
        },
    });
    write_json(&cli.out.join("manifest.json"), &manifest)?;
    Ok(out.passed)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn log(cli: &Cli, msg: &str) {
    if cli.verbose {
        eprintln!("symflow: {msg}");
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    std::fs::write(path, to_json(v)?)?;
    Ok(())
}

fn to_json(v: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

/// Reals keep 17 significant digits.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_real(x: Option<f64>) -> String {
    x.map(real).unwrap_or_default()
}

fn csv(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn flow_row(r: &FlowEscapeResult, mc: Option<&McEstimate>) -> Vec<String> {
    vec![
        r.n.to_string(),
        real(r.params.delta),
        r.params.m.to_string(),
        real(r.r_lower),
        real(r.r_upper),
        real(r.hole_measure),
        real(r.nu_slab_measure),
        real(r.ratio_lo),
        real(r.ratio_hi),
        real(r.gamma),
        opt_real(mc.map(|m| m.estimate)),
        opt_real(mc.map(|m| m.stderr)),
    ]
}

fn compute(cli: &Cli, sys: &System) -> Result<Output> {
    let mu = &sys.measure;
    match cli.command {
        Command::Pressure => {
            let t = build_transfer(&sys.matrix, &sys.potential)?;
            let (rr, lr) = t.residuals();
            Ok(Output::one(
                "pressure.json",
                to_json(&json!({
                    "pressure": t.eigenvalue().ln(),
                    "eigenvalue": t.eigenvalue(),
                    "residuals": [rr, lr],
                }))?,
            ))
        }
        Command::GibbsCertify => {
            let c = certify_gibbs(mu, sys.config.checks.gibbs_n_max)?;
            Ok(Output::one(
                "gibbs.json",
                to_json(&json!({
                    "n_max": c.n_max,
                    "c1_observed": c.c1_observed,
                    "c2_observed": c.c2_observed,
                    "per_length": c.per_length,
                }))?,
            ))
        }
        Command::EscapeDiscrete => {
            let holes = sys.holes()?;
            let g = match sys.config.target {
                Some(_) => Some(gamma(&sys.target()?, mu.potential(), mu.pressure())?),
                None => None,
            };
            let mut rows = Vec::new();
            for h in holes.holes() {
                log(cli, &format!("hole depth {}", h.depth()));
                let e = escape_rate_discrete_with(mu, h, 0)?;
                let m = h.measure(mu);
                rows.push(vec![
                    h.depth().to_string(),
                    h.word_strings().join(" "),
                    real(m),
                    real(e.rate),
                    real(e.open_eigenvalue),
                    real(e.rate / m),
                    opt_real(g),
                ]);
            }
            Ok(Output::one(
                "escape_discrete.csv",
                csv(
                    &[
                        "n",
                        "words",
                        "hole_measure",
                        "rate",
                        "open_eigenvalue",
                        "ratio",
                        "gamma",
                    ],
                    &rows,
                )?,
            ))
        }
        Command::ValidateNested => {
            let Holes::Nested(seq) = sys.holes()? else {
                return Err(Error::Config("`holes` must be a range for validate-nested".into()));
            };
            let report = validate_nested(&seq, mu)?;
            let items: Vec<_> = report
                .items
                .iter()
                .enumerate()
                .map(|(i, s)| match s {
                    ItemStatus::Pass => json!({"item": i + 1, "status": "pass"}),
                    ItemStatus::NotApplicable => json!({"item": i + 1, "status": "not applicable"}),
                    ItemStatus::Fail { n, detail } => {
                        json!({"item": i + 1, "status": "fail", "n": n, "detail": detail})
                    }
                })
                .collect();
            let body = to_json(&json!({
                "n_min": seq.n_min,
                "n_max": seq.n_range().end(),
                "c": seq.c,
                "rho": seq.rho,
                "kappa": seq.kappa,
                "items": items,
            }))?;
            let mut out = Output::one("nested.json", body);
            out.passed = report.all_pass();
            Ok(out)
        }
        Command::BuildSuspension | Command::VerifyInvariance => {
            let f = sys.roof()?;
            let params = sys.discretization()?;
            let hole_depth = match sys.config.holes {
                Some(_) => sys.holes()?.holes().iter().map(|h| h.depth()).max().unwrap_or(1),
                None => 1,
            };
            let d = discretize(mu, &f, params, hole_depth)?;
            if cli.command == Command::BuildSuspension {
                let info = |nu: &SuspensionMeasure| {
                    let s = nu.sft();
                    json!({"states": s.len(), "period": s.period(), "block_depth": s.depth(), "roof_integral": nu.roof_integral()})
                };
                return Ok(Output {
                    files: vec![
                        ("suspension_upper.json".into(), to_json(&d.upper.export())?),
                        ("suspension_lower.json".into(), to_json(&d.lower.export())?),
                        (
                            "suspension.json".into(),
                            to_json(&json!({"params": params, "upper": info(&d.upper), "lower": info(&d.lower)}))?,
                        ),
                    ],
                    passed: true,
                });
            }
            let len = sys.config.checks.invariance_len;
            let mut passed = true;
            let mut reports = serde_json::Map::new();
            for (name, nu) in [("upper", &d.upper), ("lower", &d.lower)] {
                log(cli, &format!("checking {name} tower"));
                let inv = verify_invariance(nu, len);
                let gibbs = certify_suspension_gibbs(nu, len);
                passed &= inv.passed() && gibbs.c1_observed > 0.0 && gibbs.c2_observed.is_finite();
                reports.insert(name.into(), json!({"invariance": inv, "gibbs": gibbs}));
            }
            let mut out = Output::one("invariance.json", to_json(&reports)?);
            out.passed = passed;
            Ok(out)
        }
        Command::EscapeFlow | Command::TheoremA => {
            let f = sys.roof()?;
            let params = sys.discretization()?;
            let target = sys.target()?;
            let holes = sys.holes()?;
            if cli.command == Command::TheoremA && !matches!(holes, Holes::Nested(_)) {
                return Err(Error::Config("`holes` must be a range for theorem-a".into()));
            }
            let results = holes
                .holes()
                .into_iter()
                .map(|h| {
                    log(cli, &format!("flow rates, hole depth {}", h.depth()));
                    let d = discretize(mu, &f, params, h.depth())?;
                    escape_rate_flow_on(mu, &f, h, &target, &d)
                })
                .collect::<Result<Vec<_>>>()?;
            let rows: Vec<_> = results.iter().map(|r| flow_row(r, None)).collect();
            let name = if cli.command == Command::TheoremA {
                "theorem_a.csv"
            } else {
                "escape_flow.csv"
            };
            Ok(Output::one(name, csv(&FLOW_COLUMNS, &rows)?))
        }
        Command::MonteCarlo => {
            let f = sys.roof()?;
            let params = sys.discretization()?;
            let target = sys.target()?;
            let mc = sys.monte_carlo()?;
            let mut rows = Vec::new();
            let mut details = Vec::new();
            for h in sys.holes()?.holes() {
                log(cli, &format!("monte carlo, hole depth {}", h.depth()));
                let d = discretize(mu, &f, params, h.depth())?;
                let r = escape_rate_flow_on(mu, &f, h, &target, &d)?;
                let est = monte_carlo_survival(mu, f.function(), h, mc.t, mc.samples, mc.seed)?;
                // The operator value is exact when the roof is itself a step
                // roof on the delta grid.
                let exact = match StepRoof::from_function(f.function(), params.delta) {
                    Ok(step) => {
                        let depth = h.depth().max(mu.depth()).max(step.depth());
                        let nu = mu_tilde(mu, &build_suspension_sft(&sys.matrix, &step, depth)?)?;
                        Some(step_roof_flow_survivor(&nu, &flow_hole(h, nu.sft())?, mc.t))
                    }
                    Err(_) => None,
                };
                details.push(json!({
                    "n": h.depth(),
                    "t": mc.t,
                    "samples": est.samples,
                    "survivors": est.survivors,
                    "estimate": est.estimate,
                    "stderr": est.stderr,
                    "operator": exact,
                }));
                rows.push(flow_row(&r, Some(&est)));
            }
            Ok(Output {
                files: vec![
                    ("monte_carlo.csv".into(), csv(&FLOW_COLUMNS, &rows)?),
                    (
                        "monte_carlo.json".into(),
                        to_json(&json!({"seed": mc.seed, "runs": details}))?,
                    ),
                ],
                passed: true,
            })
        }
    }
}
