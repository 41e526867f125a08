//! `switchlyap` command-line front end.
//!
//! Exit codes: 0 success, 1 a check failed (corpus mismatch, uncertified V),
//! 2 bad input.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use switchlyap::corpus::{corpus, run_corpus, CorpusParams};
use switchlyap::linear::{center_manifold_approx, LinearError};
use switchlyap::model::ModelError;
use switchlyap::report::{analyze, AnalysisError, AnalysisParams};
use switchlyap::signals::{classify, parse_signal_spec, SignalError, SwitchingSignal};
use switchlyap::sim::{integrate_with, omega_estimate, v_monotone_check, IntegrateOptions, SimError, DEFAULT_ETA, DEFAULT_RHO};
use switchlyap::SwitchedSystem;

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{0}")]
    Input(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Analysis(_) => 1,
            _ => 2,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "switchlyap", version, about = "Stability analysis of switched systems with a common weak Lyapunov function")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Membership tolerance on defect values.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Highest Lie-derivative order used for M_i.
    #[arg(long, global = true)]
    kmax: Option<usize>,
    /// Sample count per level set / sphere.
    #[arg(long, global = true)]
    mesh: Option<usize>,
    /// Connectivity radius of the ε-graph (default: 3× mean sample spacing).
    #[arg(long, global = true)]
    eps: Option<f64>,
    /// Sampling radius.
    #[arg(long, global = true)]
    radius: Option<f64>,
    /// Comma-separated level values of V.
    #[arg(long, global = true, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Machine-readable output on stdout.
    #[arg(long, global = true)]
    json: bool,
}

impl Global {
    fn analysis(&self) -> AnalysisParams {
        let mut p = AnalysisParams::default();
        if let Some(v) = self.tol {
            p.tol = v;
        }
        if let Some(v) = self.kmax {
            p.kmax = v;
        }
        if let Some(v) = self.mesh {
            p.mesh = v;
        }
        if let Some(v) = self.radius {
            p.radius = v;
        }
        if let Some(v) = &self.levels {
            p.levels = v.clone();
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        p.eps = self.eps.or(p.eps);
        p
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyse a system file and print the JSON report.
    Analyze { system: PathBuf },
    /// Simulate one run and report V-monotonicity and the ω-limit estimate.
    Simulate(SimulateArgs),
    /// Run the built-in example corpus.
    Corpus(CorpusArgs),
    /// Polynomial centre-manifold approximation of one mode.
    ApproxCm {
        system: PathBuf,
        /// 1-based mode index.
        #[arg(long, default_value_t = 1)]
        mode: usize,
        #[arg(long, default_value_t = 3)]
        order: u32,
    },
}

#[derive(Args, Debug)]
struct SimulateArgs {
    system: PathBuf,
    /// Signal spec (`dwell:delta=0.5`, `regular:delta=1`, `chaotic:tau=1,shrink=0.5`,
    /// `constant:mode=1`, `periodic:period=2`, `quadrant`) or a signal JSON file.
    #[arg(long)]
    signal: String,
    /// Comma-separated initial state.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x0: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    h: f64,
    #[arg(long = "t-end", default_value_t = 100.0)]
    t_end: f64,
    /// Keep every n-th step.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// Tail fraction used for the ω-limit estimate.
    #[arg(long, default_value_t = DEFAULT_RHO)]
    rho: f64,
    /// Convergence threshold on ‖x(T)‖.
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Window length and minimum dwell used to classify the signal.
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Print the trajectory CSV on stdout instead of the summary.
    #[arg(long)]
    csv: bool,
    /// Skip the step-halving error estimate.
    #[arg(long)]
    no_error_estimate: bool,
}

#[derive(Args, Debug)]
struct CorpusArgs {
    /// Case name or alias (`example-3`).
    #[arg(long)]
    filter: Option<String>,
    /// Check facts only, skip simulations.
    #[arg(long)]
    no_sim: bool,
    /// List the cases and exit.
    #[arg(long)]
    list: bool,
    /// Write each case's system file into this directory and exit.
    #[arg(long)]
    export: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(|source| CliError::Io { path, source })
}

fn load_system(path: &Path) -> Result<SwitchedSystem, CliError> {
    Ok(SwitchedSystem::from_json(&read(path)?)?)
}

fn pretty(v: &impl serde::Serialize) -> String {
    serde_json::to_string_pretty(v).expect("serialisable") + "\n"
}

fn cmd_analyze(g: &Global, system: &Path) -> Result<u8, CliError> {
    let sys = load_system(system)?;
    let report = analyze(&sys, &g.analysis())?;
    let text = report.to_json() + "\n";
    if let Some(dir) = &g.out {
        write(dir, "report.json", &text)?;
    }
    print!("{text}");
    Ok(0)
}

fn load_signal(spec: &str, p: usize, horizon: f64, seed: u64) -> Result<SwitchingSignal, CliError> {
    let path = Path::new(spec);
    if spec.ends_with(".json") && path.exists() {
        Ok(SwitchingSignal::from_json(&read(path)?)?)
    } else {
        Ok(parse_signal_spec(spec, p, horizon, seed)?)
    }
}

fn cmd_simulate(g: &Global, a: &SimulateArgs) -> Result<u8, CliError> {
    let sys = load_system(&a.system)?;
    let x0 = if a.x0.is_empty() { vec![0.0; sys.dim()] } else { a.x0.clone() };
    if x0.len() != sys.dim() {
        return Err(CliError::Input(format!("x0 has {} entries, system dimension is {}", x0.len(), sys.dim())));
    }
    let p = g.analysis();
    let sig = load_signal(&a.signal, sys.num_modes(), a.t_end, p.seed)?;
    let opts = IntegrateOptions { stride: a.stride.max(1), error_estimate: !a.no_error_estimate };
    let traj = integrate_with(&sys, &sig, &x0, a.h, a.t_end, opts)?;
    let omega = omega_estimate(&traj, &[], a.rho, a.eta);
    let monotone = v_monotone_check(&traj, None);
    let class = classify(&sig, sys.num_modes(), a.tau, a.delta);
    let summary = json!({
        "tool": "switchlyap",
        "version": switchlyap::report::VERSION,
        "signal": a.signal,
        "signal_class": class.class(),
        "signal_report": class,
        "x0": x0,
        "h": a.h,
        "t_end": a.t_end,
        "steps": traj.steps,
        "diverged": traj.diverged,
        "error_estimate": traj.error_estimate,
        "final_state": traj.final_state(),
        "v_initial": traj.v[0],
        "v_final": traj.v.last(),
        "monotone": monotone,
        "omega": omega,
    });
    let csv = traj.to_csv();
    let text = pretty(&summary);
    if let Some(dir) = &g.out {
        write(dir, "trajectory.csv", &csv)?;
        write(dir, "summary.json", &text)?;
    }
    if a.csv {
        print!("{csv}");
    } else {
        print!("{text}");
    }
    Ok(0)
}

fn cmd_corpus(g: &Global, a: &CorpusArgs) -> Result<u8, CliError> {
    let cases = corpus();
    if let Some(dir) = &a.export {
        for c in &cases {
            write(dir, &format!("{}.json", c.name), &pretty(&c.system))?;
        }
        return Ok(0);
    }
    if a.list {
        for c in &cases {
            println!("{:<24} {:<12} {}", c.name, c.aliases.join(","), c.description);
        }
        return Ok(0);
    }
    if let Some(f) = &a.filter {
        if !cases.iter().any(|c| c.matches(f)) {
            return Err(CliError::Input(format!("no corpus case matches `{f}`")));
        }
    }
    let params = CorpusParams {
        base: g.analysis(),
        radius: g.radius,
        levels: g.levels.clone(),
        mesh: g.mesh,
        run_scenarios: !a.no_sim,
    };
    let report = run_corpus(a.filter.as_deref(), &params);
    let text = pretty(&report);
    if let Some(dir) = &g.out {
        write(dir, "corpus.json", &text)?;
    }
    if g.json {
        print!("{text}");
    } else {
        print!("{}", report.table());
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}

fn cmd_approx_cm(system: &Path, mode: usize, order: u32, g: &Global) -> Result<u8, CliError> {
    let sys = load_system(system)?;
    if mode == 0 || mode > sys.num_modes() {
        return Err(CliError::Input(format!("mode {mode} out of range 1..={}", sys.num_modes())));
    }
    let cm = center_manifold_approx(&sys.mode(mode - 1).field, order)?;
    let text = pretty(&cm);
    if let Some(dir) = &g.out {
        write(dir, "centre_manifold.json", &text)?;
    }
    print!("{text}");
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Analyze { system } => cmd_analyze(g, system),
        Command::Simulate(a) => cmd_simulate(g, a),
        Command::Corpus(a) => cmd_corpus(g, a),
        Command::ApproxCm { system, mode, order } => cmd_approx_cm(system, *mode, *order, g),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Analysis(AnalysisError::Certification { report, .. }) = &e {
                eprintln!("{}", pretty(report.as_ref()));
            }
            ExitCode::from(e.exit_code())
        }
    }
}
