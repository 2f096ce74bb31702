//! Command-line front end. One invocation merges a TOML or JSON parameter
//! file with command-line flags, runs the requested solve or check, and
//! writes CSV and JSON artifacts plus a run manifest into a per-command
//! directory under the output root.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver failure,
//! 3 certification failure. The manifest is written even when the run fails,
//! with the error recorded. Manifests carry wall-clock timestamps; every
//! other output is byte-deterministic for a fixed configuration and seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::bvp::{minimize_limit, LimitProblem, PairSidecar, SolutionPair, StageStats};
use crate::error::SolverError;
use crate::ivp::{ivp_solve, perron_construct, shoot_decaying, IvpSpec, Trajectory, TrajectoryStatus};
use crate::lambda::{minimize_lambda, sweep_entry, LambdaParams, SweepEntry, SweepReport};
use crate::mesh::{fmt_f64, Profile};
use crate::verify::{certify_pair, CertifyOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CERTIFY: i32 = 3;

const OUTPUT_ENV: &str = "PLAP_OUTPUT_DIR";
const DEFAULT_OUTPUT_ROOT: &str = "runs";

#[derive(Parser, Debug)]
#[command(
    name = "plap",
    version,
    about = "Coupled p-Laplacian pairs: solve, sweep, integrate, certify",
    after_help = "Parameter precedence: command-line flags override the \
--config file, which overrides built-in defaults. The output root comes \
from --output-dir, then the config file, then $PLAP_OUTPUT_DIR, then \
\"runs\". Every run writes manifest.json next to its artifacts."
)]
struct Cli {
    /// TOML or JSON parameter file; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root directory for run artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    output_dir: Option<PathBuf>,

    /// Echoed into the manifest; consumed only by randomized workloads.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the whole-line limit pair and write profiles plus a sidecar.
    SolveLimit(SolveLimitArgs),
    /// Solve the two-component problem at one coupling strength.
    SolveLambda(SolveLambdaArgs),
    /// Solve a nondecreasing list of couplings and write the trend report.
    SweepLambda(SweepLambdaArgs),
    /// Initial-value utilities for the scalar decay equation.
    #[command(subcommand)]
    Ode(OdeCommand),
    /// Run the certification checks on a fresh or stored pair.
    Certify(CertifyArgs),
}

#[derive(Subcommand, Debug)]
enum OdeCommand {
    /// Integrate from given initial data and report the outcome class.
    Solve(OdeSolveArgs),
    /// Find the initial height whose trajectory decays instead of blowing up.
    Shoot(OdeShootArgs),
    /// Build the monotone-iteration solution between barrier and ceiling.
    Perron(OdePerronArgs),
}

#[derive(Args, Debug, Default)]
struct SolveLimitArgs {
    /// Exponent p > 1.
    #[arg(long)]
    p: Option<f64>,
    /// Half-width of the symmetric domain [-R, R].
    #[arg(long = "R")]
    r: Option<f64>,
    /// Node count, odd and at least 11.
    #[arg(long)]
    n: Option<usize>,
    /// Convergence tolerance on the projected gradient.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SolveLambdaArgs {
    #[arg(long)]
    p: Option<f64>,
    /// Self-interaction weight of the first component.
    #[arg(long)]
    alpha: Option<f64>,
    /// Self-interaction weight of the second component.
    #[arg(long)]
    beta: Option<f64>,
    /// Coupling strength, nonnegative.
    #[arg(long = "Lambda", allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// Left endpoint.
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Right endpoint.
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct SweepLambdaArgs {
    /// Comma-separated nondecreasing coupling strengths.
    #[arg(long = "Lambdas", value_delimiter = ',', allow_negative_numbers = true)]
    lambdas: Option<Vec<f64>>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    b: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Left edge of the rescaled comparison window.
    #[arg(long, allow_negative_numbers = true)]
    window_lo: Option<f64>,
    /// Right edge of the rescaled comparison window.
    #[arg(long, allow_negative_numbers = true)]
    window_hi: Option<f64>,
    /// Sample count on the comparison window.
    #[arg(long)]
    points: Option<usize>,
    /// Half-width of the reference limit solve.
    #[arg(long = "ref-R")]
    ref_r: Option<f64>,
    /// Node count of the reference limit solve.
    #[arg(long)]
    ref_n: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct OdeSolveArgs {
    #[arg(long)]
    p: Option<f64>,
    /// Left end of the integration window, nonnegative.
    #[arg(long)]
    x0: Option<f64>,
    /// Initial value.
    #[arg(long, allow_negative_numbers = true)]
    y0: Option<f64>,
    /// Initial slope.
    #[arg(long, allow_negative_numbers = true)]
    y1: Option<f64>,
    /// Right end of the integration window.
    #[arg(long)]
    xmax: Option<f64>,
    /// Base step size.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct OdeShootArgs {
    #[arg(long)]
    p: Option<f64>,
    /// Fixed negative initial slope.
    #[arg(long, allow_negative_numbers = true)]
    y1: Option<f64>,
    /// Horizon used to classify a trajectory as decaying.
    #[arg(long = "x-far")]
    x_far: Option<f64>,
    /// Lower edge of the initial-height bracket.
    #[arg(long)]
    bracket_lo: Option<f64>,
    /// Upper edge of the initial-height bracket.
    #[arg(long)]
    bracket_hi: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug, Default)]
struct OdePerronArgs {
    #[arg(long)]
    p: Option<f64>,
    /// Right endpoint of the construction interval [0, R].
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args, Debug, Default)]
struct CertifyArgs {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long = "R")]
    r: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// Stored pair profiles; requires --sidecar.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
    /// Stored pair scalars; requires --csv.
    #[arg(long, value_name = "FILE")]
    sidecar: Option<PathBuf>,
    /// Comma-separated check-name prefixes; omits every other check.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
}

/// Parameter file. Each section mirrors one command's flags; unknown keys
/// are rejected so typos fail loudly.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    format_version: Option<u32>,
    output_dir: Option<PathBuf>,
    seed: Option<u64>,
    limit: LimitSection,
    lambda: LambdaSection,
    sweep: SweepSection,
    ode: OdeSection,
    certify: CertifySection,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LimitSection {
    p: Option<f64>,
    #[serde(alias = "R")]
    r: Option<f64>,
    n: Option<usize>,
    tol: Option<f64>,
    eps_schedule: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LambdaSection {
    p: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    #[serde(alias = "Lambda")]
    lambda: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    n: Option<usize>,
    tol: Option<f64>,
    eps_schedule: Option<Vec<f64>>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SweepSection {
    #[serde(alias = "Lambdas")]
    lambdas: Option<Vec<f64>>,
    p: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    a: Option<f64>,
    b: Option<f64>,
    n: Option<usize>,
    tol: Option<f64>,
    window: Option<[f64; 2]>,
    points: Option<usize>,
    #[serde(alias = "ref_R")]
    ref_r: Option<f64>,
    ref_n: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct OdeSection {
    p: Option<f64>,
    x0: Option<f64>,
    y0: Option<f64>,
    y1: Option<f64>,
    xmax: Option<f64>,
    step: Option<f64>,
    tol: Option<f64>,
    x_far: Option<f64>,
    bracket: Option<[f64; 2]>,
    #[serde(alias = "R")]
    r: Option<f64>,
    n: Option<usize>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CertifySection {
    p: Option<f64>,
    #[serde(alias = "R")]
    r: Option<f64>,
    n: Option<usize>,
    csv: Option<PathBuf>,
    sidecar: Option<PathBuf>,
    checks: Option<Vec<String>>,
}

#[derive(Serialize)]
struct StageEcho {
    eps: f64,
    iterations: usize,
}

#[derive(Serialize)]
struct CertCounts {
    passed: usize,
    failed: usize,
}

/// Written into every run directory, success or failure. The timestamps are
/// the only nondeterministic fields any command produces.
#[derive(Serialize)]
struct RunManifest {
    format_version: u32,
    tool_version: String,
    command: String,
    config: serde_json::Value,
    started_unix: f64,
    finished_unix: f64,
    stages: Vec<StageEcho>,
    certification: Option<CertCounts>,
    error: Option<String>,
}

#[derive(Serialize)]
struct LambdaResult {
    format_version: u32,
    p: f64,
    alpha: f64,
    beta: f64,
    #[serde(rename = "Lambda")]
    lambda: f64,
    a: f64,
    b: f64,
    n: usize,
    lambda1: f64,
    lambda2: f64,
    #[serde(rename = "T_Lambda")]
    t_lambda: f64,
    #[serde(rename = "T_drift")]
    t_drift: f64,
}

#[derive(Serialize)]
struct OdeSolveResult {
    format_version: u32,
    status: &'static str,
    status_code: u8,
    nodes: usize,
    x_end: f64,
    y_end: f64,
    dy_end: f64,
}

#[derive(Serialize)]
struct OdeShootResult {
    format_version: u32,
    y0_star: f64,
    status: &'static str,
    status_code: u8,
    x_end: f64,
    y_end: f64,
}

#[derive(Serialize)]
struct PerronResult {
    format_version: u32,
    p: f64,
    #[serde(rename = "R")]
    r: f64,
    n: usize,
    sweeps: usize,
}

type Failure = (i32, String);

pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Entry point with injectable argv, for tests.
pub fn run_from<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    dispatch(cli)
}

fn dispatch(cli: Cli) -> i32 {
    let file_cfg = match load_file_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let output_root = cli
        .output_dir
        .clone()
        .or_else(|| file_cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT));
    let seed = cli.seed.or(file_cfg.seed);
    match cli.command {
        Command::SolveLimit(a) => run_solve_limit(a, &file_cfg, &output_root, seed),
        Command::SolveLambda(a) => run_solve_lambda(a, &file_cfg, &output_root, seed),
        Command::SweepLambda(a) => run_sweep_lambda(a, &file_cfg, &output_root, seed),
        Command::Ode(OdeCommand::Solve(a)) => run_ode_solve(a, &file_cfg, &output_root, seed),
        Command::Ode(OdeCommand::Shoot(a)) => run_ode_shoot(a, &file_cfg, &output_root, seed),
        Command::Ode(OdeCommand::Perron(a)) => run_ode_perron(a, &file_cfg, &output_root, seed),
        Command::Certify(a) => run_certify(a, &file_cfg, &output_root, seed),
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, String> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    let is_json = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("json"))
        .unwrap_or(false);
    let cfg: FileConfig = if is_json {
        serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))?
    } else {
        match toml::from_str(&text) {
            Ok(c) => c,
            // Extension-free JSON is accepted as a fallback.
            Err(toml_err) => serde_json::from_str(&text)
                .map_err(|_| format!("config {}: {toml_err}", path.display()))?,
        }
    };
    if let Some(v) = cfg.format_version {
        if v != 1 {
            return Err(format!(
                "config {}: unsupported format_version {v}, expected 1",
                path.display()
            ));
        }
    }
    Ok(cfg)
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

fn now_unix() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn prepare_dir(root: &Path, command: &str) -> Result<PathBuf, String> {
    let dir = root.join(command);
    fs::create_dir_all(&dir)
        .map_err(|e| format!("cannot create output directory {}: {e}", dir.display()))?;
    Ok(dir)
}

fn exit_for(err: &SolverError) -> i32 {
    match err {
        SolverError::InvalidInput(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

fn cfg_err(e: SolverError) -> Failure {
    (EXIT_CONFIG, e.to_string())
}

fn solver_err(e: SolverError) -> Failure {
    (exit_for(&e), e.to_string())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| (EXIT_SOLVER, format!("encode {}: {e}", path.display())))?;
    fs::write(path, text + "\n")
        .map_err(|e| (EXIT_SOLVER, format!("write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| (EXIT_SOLVER, format!("write {}: {e}", path.display())))
}

/// Records the outcome in the manifest and returns the process exit code.
fn finish(
    dir: &Path,
    command: &str,
    config: serde_json::Value,
    started: f64,
    stages: Vec<StageEcho>,
    certification: Option<CertCounts>,
    outcome: Result<i32, Failure>,
) -> i32 {
    let (code, error) = match outcome {
        Ok(c) => (c, None),
        Err((c, msg)) => {
            eprintln!("error: {msg}");
            (c, Some(msg))
        }
    };
    let manifest = RunManifest {
        format_version: 1,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        config,
        started_unix: started,
        finished_unix: now_unix(),
        stages,
        certification,
        error,
    };
    let path = dir.join("manifest.json");
    match serde_json::to_string_pretty(&manifest) {
        Ok(text) => {
            if let Err(e) = fs::write(&path, text + "\n") {
                eprintln!("error: manifest write failed: {e}");
                return if code == EXIT_OK { EXIT_SOLVER } else { code };
            }
        }
        Err(e) => {
            eprintln!("error: manifest encode failed: {e}");
            return if code == EXIT_OK { EXIT_SOLVER } else { code };
        }
    }
    code
}

fn stage_echo(stages: &[StageStats]) -> Vec<StageEcho> {
    stages
        .iter()
        .map(|s| StageEcho {
            eps: s.eps,
            iterations: s.iterations,
        })
        .collect()
}

fn status_name(s: TrajectoryStatus) -> &'static str {
    match s {
        TrajectoryStatus::ReachedXmax => "reached_xmax",
        TrajectoryStatus::IdenticallyZero => "identically_zero",
        TrajectoryStatus::BlowUpDetected => "blow_up_detected",
        TrajectoryStatus::SignClassifiedNegative => "sign_classified_negative",
    }
}

fn trajectory_tail(traj: &Trajectory) -> (f64, f64, f64) {
    let k = traj.nodes.len() - 1;
    (traj.nodes[k], traj.y[k], traj.dy[k])
}

fn run_solve_limit(args: SolveLimitArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.limit;
    let mut prob = LimitProblem::new(
        pick(args.p, sect.p, 2.0),
        pick(args.r, sect.r, 8.0),
        pick(args.n, sect.n, 801),
    );
    if let Some(t) = args.tol.or(sect.tol) {
        prob.tol = t;
    }
    if let Some(s) = sect.eps_schedule.clone() {
        prob.eps_schedule = s;
    }
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "solve-limit",
        "output_dir": root,
        "seed": seed,
        "limit": {
            "p": prob.p, "R": prob.r, "n": prob.n,
            "tol": prob.tol, "eps_schedule": prob.eps_schedule,
        },
    });
    let dir = match prepare_dir(root, "solve-limit") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let mut stages_echo = Vec::new();
    let outcome = (|| {
        prob.validate().map_err(cfg_err)?;
        let (pair, stages) = minimize_limit(&prob).map_err(solver_err)?;
        stages_echo = stage_echo(&stages);
        pair.write_csv(dir.join("pair.csv")).map_err(solver_err)?;
        pair.write_sidecar(dir.join("pair.json")).map_err(solver_err)?;
        println!(
            "solve-limit: energy {:.12e}, residual {:.3e}, conserved level {:.6e}",
            pair.energy, pair.grad_norm, pair.t_inf
        );
        println!("wrote {}", dir.join("pair.csv").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "solve-limit", echo, started, stages_echo, None, outcome)
}

fn run_solve_lambda(args: SolveLambdaArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.lambda;
    let mut prm = LambdaParams::new(
        pick(args.p, sect.p, 2.0),
        pick(args.alpha, sect.alpha, 1.0),
        pick(args.beta, sect.beta, 1.0),
        pick(args.lambda, sect.lambda, 1000.0),
        pick(args.a, sect.a, -1.0),
        pick(args.b, sect.b, 1.0),
        pick(args.n, sect.n, 801),
    );
    if let Some(t) = args.tol.or(sect.tol) {
        prm.tol = t;
    }
    if let Some(s) = sect.eps_schedule.clone() {
        prm.eps_schedule = s;
    }
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "solve-lambda",
        "output_dir": root,
        "seed": seed,
        "lambda": {
            "p": prm.p, "alpha": prm.alpha, "beta": prm.beta, "Lambda": prm.lambda,
            "a": prm.a, "b": prm.b, "n": prm.n,
            "tol": prm.tol, "eps_schedule": prm.eps_schedule,
        },
    });
    let dir = match prepare_dir(root, "solve-lambda") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let mut stages_echo = Vec::new();
    let outcome = (|| {
        prm.validate().map_err(cfg_err)?;
        let (sol, stages) = minimize_lambda(&prm).map_err(solver_err)?;
        stages_echo = stage_echo(&stages);
        write_text(&dir.join("pair.csv"), &profile_pair_csv(&sol.u, &sol.v, "u", "v"))?;
        let result = LambdaResult {
            format_version: 1,
            p: prm.p,
            alpha: prm.alpha,
            beta: prm.beta,
            lambda: prm.lambda,
            a: prm.a,
            b: prm.b,
            n: prm.n,
            lambda1: sol.lambda1,
            lambda2: sol.lambda2,
            t_lambda: sol.t_lambda,
            t_drift: sol.t_drift,
        };
        write_json(&dir.join("solution.json"), &result)?;
        println!(
            "solve-lambda: multipliers {:.6e} / {:.6e}, conserved level {:.6e} (drift {:.3e})",
            sol.lambda1, sol.lambda2, sol.t_lambda, sol.t_drift
        );
        println!("wrote {}", dir.join("solution.json").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "solve-lambda", echo, started, stages_echo, None, outcome)
}

fn run_sweep_lambda(args: SweepLambdaArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.sweep;
    let lambdas = pick(
        args.lambdas.clone(),
        sect.lambdas.clone(),
        vec![100.0, 1000.0, 10000.0],
    );
    let mut template = LambdaParams::new(
        pick(args.p, sect.p, 2.0),
        pick(args.alpha, sect.alpha, 1.0),
        pick(args.beta, sect.beta, 1.0),
        lambdas.first().copied().unwrap_or(0.0),
        pick(args.a, sect.a, -1.0),
        pick(args.b, sect.b, 1.0),
        pick(args.n, sect.n, 801),
    );
    if let Some(t) = args.tol.or(sect.tol) {
        template.tol = t;
    }
    let window = (
        pick(args.window_lo, sect.window.map(|w| w[0]), -2.0),
        pick(args.window_hi, sect.window.map(|w| w[1]), 2.0),
    );
    let points = pick(args.points, sect.points, 401);
    let ref_r = pick(args.ref_r, sect.ref_r, 8.0);
    let ref_n = pick(args.ref_n, sect.ref_n, 801);
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "sweep-lambda",
        "output_dir": root,
        "seed": seed,
        "sweep": {
            "Lambdas": lambdas,
            "p": template.p, "alpha": template.alpha, "beta": template.beta,
            "a": template.a, "b": template.b, "n": template.n, "tol": template.tol,
            "window": [window.0, window.1], "points": points,
            "ref_R": ref_r, "ref_n": ref_n,
        },
    });
    let dir = match prepare_dir(root, "sweep-lambda") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let mut stages_echo = Vec::new();
    let mut entries: Vec<SweepEntry> = Vec::new();
    let outcome = (|| {
        if lambdas.is_empty() {
            return Err((EXIT_CONFIG, "coupling list is empty".to_string()));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err((
                EXIT_CONFIG,
                "coupling list must be nondecreasing".to_string(),
            ));
        }
        for &lam in &lambdas {
            let mut probe = template.clone();
            probe.lambda = lam;
            probe.validate().map_err(cfg_err)?;
        }
        if !(window.1 > window.0) {
            return Err((
                EXIT_CONFIG,
                "comparison window needs window_hi > window_lo".to_string(),
            ));
        }
        let ref_prob = LimitProblem::new(template.p, ref_r, ref_n);
        ref_prob.validate().map_err(cfg_err)?;
        let (reference, ref_stages) = minimize_limit(&ref_prob).map_err(solver_err)?;
        stages_echo = stage_echo(&ref_stages);
        for &lam in &lambdas {
            match sweep_entry(&template, lam, &reference, window, points) {
                Ok((entry, blow, stages)) => {
                    stages_echo.extend(stage_echo(&stages));
                    let csv = profile_pair_csv(
                        &blow.rescaled_u,
                        &blow.rescaled_v,
                        "u_rescaled",
                        "v_rescaled",
                    );
                    write_text(
                        &dir.join(format!("rescaled_Lambda_{}.csv", fmt_compact(lam))),
                        &csv,
                    )?;
                    println!(
                        "Lambda {:>12}: interface {:+.6e}, height {:.6e}, invariant {:.6e}, distance {:.6e}",
                        fmt_compact(lam),
                        entry.x_cross,
                        entry.m_cross,
                        entry.scale_invariant,
                        entry.rescaled_distance
                    );
                    entries.push(entry);
                    let report = SweepReport {
                        format_version: 1,
                        entries: entries.clone(),
                    };
                    write_json(&dir.join("sweep.json"), &report)?;
                }
                Err(e) => {
                    // Completed entries stay on disk; the failure is recorded
                    // in the manifest and the exit code is a solver failure.
                    return Err((
                        EXIT_SOLVER,
                        format!("sweep entry Lambda = {} failed: {e}", fmt_compact(lam)),
                    ));
                }
            }
        }
        println!("wrote {}", dir.join("sweep.json").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "sweep-lambda", echo, started, stages_echo, None, outcome)
}

fn run_ode_solve(args: OdeSolveArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.ode;
    let spec = IvpSpec {
        p: pick(args.p, sect.p, 2.0),
        x0: pick(args.x0, sect.x0, 0.0),
        y0: pick(args.y0, sect.y0, 1.0),
        y1: pick(args.y1, sect.y1, 0.0),
        x_max: pick(args.xmax, sect.xmax, 2.0),
        step: pick(args.step, sect.step, 1e-2),
        tol: pick(args.tol, sect.tol, 1e-10),
    };
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "ode-solve",
        "output_dir": root,
        "seed": seed,
        "ode": {
            "p": spec.p, "x0": spec.x0, "y0": spec.y0, "y1": spec.y1,
            "xmax": spec.x_max, "step": spec.step, "tol": spec.tol,
        },
    });
    let dir = match prepare_dir(root, "ode-solve") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let outcome = (|| {
        spec.validate().map_err(cfg_err)?;
        let traj = ivp_solve(&spec).map_err(solver_err)?;
        traj.write_csv(&dir.join("trajectory.csv")).map_err(solver_err)?;
        let (x_end, y_end, dy_end) = trajectory_tail(&traj);
        let result = OdeSolveResult {
            format_version: 1,
            status: status_name(traj.status),
            status_code: traj.status.code(),
            nodes: traj.nodes.len(),
            x_end,
            y_end,
            dy_end,
        };
        write_json(&dir.join("result.json"), &result)?;
        println!("ode solve: status {}", status_name(traj.status));
        println!("wrote {}", dir.join("trajectory.csv").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "ode-solve", echo, started, Vec::new(), None, outcome)
}

fn run_ode_shoot(args: OdeShootArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.ode;
    let p = pick(args.p, sect.p, 2.0);
    let y1 = pick(args.y1, sect.y1, -2.0);
    let x_far = pick(args.x_far, sect.x_far, 10.0);
    let bracket = (
        pick(args.bracket_lo, sect.bracket.map(|b| b[0]), 1e-3),
        pick(args.bracket_hi, sect.bracket.map(|b| b[1]), 1e3),
    );
    let tol = pick(args.tol, sect.tol, 1e-10);
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "ode-shoot",
        "output_dir": root,
        "seed": seed,
        "ode": {
            "p": p, "y1": y1, "x_far": x_far,
            "bracket": [bracket.0, bracket.1], "tol": tol,
        },
    });
    let dir = match prepare_dir(root, "ode-shoot") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let outcome = (|| {
        if !(p > 1.0) {
            return Err((EXIT_CONFIG, format!("p must exceed 1, got {p}")));
        }
        if !(y1 < 0.0) {
            return Err((
                EXIT_CONFIG,
                format!("shooting slope y1 must be negative, got {y1}"),
            ));
        }
        if !(x_far > 0.0) {
            return Err((EXIT_CONFIG, format!("x_far must be positive, got {x_far}")));
        }
        if !(bracket.0 > 0.0 && bracket.1 > bracket.0) {
            return Err((
                EXIT_CONFIG,
                format!(
                    "bracket needs 0 < lo < hi, got [{}, {}]",
                    bracket.0, bracket.1
                ),
            ));
        }
        if !(tol > 0.0) {
            return Err((EXIT_CONFIG, format!("tol must be positive, got {tol}")));
        }
        let (y0_star, traj) = shoot_decaying(p, y1, x_far, bracket, tol).map_err(solver_err)?;
        traj.write_csv(&dir.join("trajectory.csv")).map_err(solver_err)?;
        let (x_end, y_end, _) = trajectory_tail(&traj);
        let result = OdeShootResult {
            format_version: 1,
            y0_star,
            status: status_name(traj.status),
            status_code: traj.status.code(),
            x_end,
            y_end,
        };
        write_json(&dir.join("result.json"), &result)?;
        println!("ode shoot: y0* = {:.12e}", y0_star);
        println!("wrote {}", dir.join("result.json").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "ode-shoot", echo, started, Vec::new(), None, outcome)
}

fn run_ode_perron(args: OdePerronArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.ode;
    let p = pick(args.p, sect.p, 2.0);
    let r = pick(args.r, sect.r, 4.0);
    let n = pick(args.n, sect.n, 801);
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "ode-perron",
        "output_dir": root,
        "seed": seed,
        "ode": { "p": p, "R": r, "n": n },
    });
    let dir = match prepare_dir(root, "ode-perron") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let outcome = (|| {
        let (w, sweeps) = perron_construct(p, r, n).map_err(solver_err)?;
        write_text(&dir.join("profile.csv"), &profile_csv(&w, "w"))?;
        let result = PerronResult {
            format_version: 1,
            p,
            r,
            n,
            sweeps,
        };
        write_json(&dir.join("result.json"), &result)?;
        println!("ode perron: {sweeps} monotone sweeps");
        println!("wrote {}", dir.join("profile.csv").display());
        Ok(EXIT_OK)
    })();
    finish(&dir, "ode-perron", echo, started, Vec::new(), None, outcome)
}

const CHECK_NAMES: [&str; 12] = [
    "first_integral",
    "symmetry",
    "monotonicity",
    "asymptote",
    "intercepts",
    "decay_fit",
    "decay_envelope",
    "limits",
    "kernel_gap",
    "kernel_alignment",
    "kernel_residual",
    "gradient",
];

fn run_certify(args: CertifyArgs, cfg: &FileConfig, root: &Path, seed: Option<u64>) -> i32 {
    let sect = &cfg.certify;
    let p = pick(args.p, sect.p, 2.0);
    let r = pick(args.r, sect.r, 8.0);
    let n = pick(args.n, sect.n, 801);
    let csv = args.csv.clone().or_else(|| sect.csv.clone());
    let sidecar = args.sidecar.clone().or_else(|| sect.sidecar.clone());
    let checks = args.checks.clone().or_else(|| sect.checks.clone());
    let from_files = csv.is_some() || sidecar.is_some();
    let echo = serde_json::json!({
        "format_version": 1,
        "command": "certify",
        "output_dir": root,
        "seed": seed,
        "certify": {
            "p": p, "R": r, "n": n,
            "csv": csv, "sidecar": sidecar, "checks": checks,
        },
    });
    let dir = match prepare_dir(root, "certify") {
        Ok(d) => d,
        Err(msg) => {
            eprintln!("error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let started = now_unix();
    let mut stages_echo = Vec::new();
    let mut counts = None;
    let outcome = (|| {
        if let Some(list) = &checks {
            for want in list {
                if !CHECK_NAMES.iter().any(|name| name.starts_with(want.as_str())) {
                    return Err((EXIT_CONFIG, format!("unknown check name: {want}")));
                }
            }
        }
        let pair = if from_files {
            let (Some(csv_path), Some(sidecar_path)) = (&csv, &sidecar) else {
                return Err((
                    EXIT_CONFIG,
                    "--csv and --sidecar must be given together".to_string(),
                ));
            };
            let text = fs::read_to_string(csv_path)
                .map_err(|e| (EXIT_CONFIG, format!("cannot read {}: {e}", csv_path.display())))?;
            let (u, v) = SolutionPair::profiles_from_csv(&text).map_err(cfg_err)?;
            let sc_text = fs::read_to_string(sidecar_path).map_err(|e| {
                (
                    EXIT_CONFIG,
                    format!("cannot read {}: {e}", sidecar_path.display()),
                )
            })?;
            let sc: PairSidecar = serde_json::from_str(&sc_text).map_err(|e| {
                (
                    EXIT_CONFIG,
                    format!("sidecar {}: {e}", sidecar_path.display()),
                )
            })?;
            SolutionPair::assemble(u, v, &sc).map_err(cfg_err)?
        } else {
            let prob = LimitProblem::new(p, r, n);
            prob.validate().map_err(cfg_err)?;
            let (pair, stages) = minimize_limit(&prob).map_err(solver_err)?;
            stages_echo = stage_echo(&stages);
            pair.write_csv(dir.join("pair.csv")).map_err(solver_err)?;
            pair.write_sidecar(dir.join("pair.json")).map_err(solver_err)?;
            pair
        };
        let opts = CertifyOptions {
            only: checks.clone(),
            ..CertifyOptions::default()
        };
        let cert = certify_pair(&pair, &opts).map_err(solver_err)?;
        counts = Some(CertCounts {
            passed: cert.passed,
            failed: cert.failed,
        });
        let text = cert.to_json().map_err(solver_err)?;
        write_text(&dir.join("certification.json"), &(text + "\n"))?;
        for entry in &cert.checks {
            println!(
                "{:<18} {}  ({:.3e} vs {:.3e})",
                entry.name,
                if entry.pass { "pass" } else { "FAIL" },
                entry.value,
                entry.threshold
            );
        }
        if !cert.all_pass() {
            let names: Vec<&str> = cert
                .checks
                .iter()
                .filter(|c| !c.pass)
                .map(|c| c.name)
                .collect();
            return Err((
                EXIT_CERTIFY,
                format!("certification failed: {}", names.join(", ")),
            ));
        }
        println!("certification passed ({} checks)", cert.passed);
        Ok(EXIT_OK)
    })();
    finish(&dir, "certify", echo, started, stages_echo, counts, outcome)
}

/// Shortest decimal form for file names and logs; falls back to the exact
/// 17-digit form only when the value is not an integer.
fn fmt_compact(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn profile_csv(profile: &Profile, label: &str) -> String {
    let mut out = format!("x,{label}\n");
    for i in 0..profile.grid.n {
        out.push_str(&fmt_f64(profile.grid.x(i)));
        out.push(',');
        out.push_str(&fmt_f64(profile.values[i]));
        out.push('\n');
    }
    out
}

fn profile_pair_csv(first: &Profile, second: &Profile, la: &str, lb: &str) -> String {
    let mut out = format!("x,{la},{lb}\n");
    for i in 0..first.grid.n {
        out.push_str(&fmt_f64(first.grid.x(i)));
        out.push(',');
        out.push_str(&fmt_f64(first.values[i]));
        out.push(',');
        out.push_str(&fmt_f64(second.values[i]));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_parse_with_literal_capital_names() {
        let cli = Cli::try_parse_from([
            "plap",
            "solve-lambda",
            "--p",
            "2",
            "--alpha",
            "1",
            "--beta",
            "1",
            "--Lambda",
            "1000",
            "--a",
            "-1",
            "--b",
            "1",
            "--n",
            "801",
        ])
        .unwrap();
        match cli.command {
            Command::SolveLambda(args) => {
                assert_eq!(args.lambda, Some(1000.0));
                assert_eq!(args.a, Some(-1.0));
            }
            other => panic!("parsed into {other:?}"),
        }
    }

    #[test]
    fn lambda_list_splits_on_commas() {
        let cli = Cli::try_parse_from([
            "plap",
            "sweep-lambda",
            "--Lambdas",
            "100,1000,10000",
        ])
        .unwrap();
        match cli.command {
            Command::SweepLambda(args) => {
                assert_eq!(args.lambdas, Some(vec![100.0, 1000.0, 10000.0]));
            }
            other => panic!("parsed into {other:?}"),
        }
    }

    #[test]
    fn config_file_accepts_both_formats_and_integer_floats() {
        let toml_text = "format_version = 1\n[limit]\np = 3\nR = 6.5\nn = 301\n";
        let cfg: FileConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(cfg.limit.p, Some(3.0));
        assert_eq!(cfg.limit.r, Some(6.5));
        assert_eq!(cfg.limit.n, Some(301));

        let json_text = r#"{"lambda": {"Lambda": 500, "n": 101}}"#;
        let cfg: FileConfig = serde_json::from_str(json_text).unwrap();
        assert_eq!(cfg.lambda.lambda, Some(500.0));
        assert_eq!(cfg.lambda.n, Some(101));
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let err = toml::from_str::<FileConfig>("[limit]\npp = 2\n");
        assert!(err.is_err());
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        assert_eq!(pick(Some(1), Some(2), 3), 1);
        assert_eq!(pick(None, Some(2), 3), 2);
        assert_eq!(pick::<i32>(None, None, 3), 3);
    }

    #[test]
    fn invalid_input_maps_to_the_config_exit_code() {
        assert_eq!(exit_for(&SolverError::invalid_input("x")), EXIT_CONFIG);
        assert_eq!(
            exit_for(&SolverError::NoCrossing("no sign change".into())),
            EXIT_SOLVER
        );
    }

    #[test]
    fn status_names_are_snake_case() {
        assert_eq!(status_name(TrajectoryStatus::IdenticallyZero), "identically_zero");
        assert_eq!(status_name(TrajectoryStatus::ReachedXmax), "reached_xmax");
    }

    #[test]
    fn compact_formats_drop_trailing_zeros_for_file_names() {
        assert_eq!(fmt_compact(100.0), "100");
        assert_eq!(fmt_compact(10000.0), "10000");
        assert_eq!(fmt_compact(0.5), "0.5");
    }
}
