use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ndro_core::experiment::{generate_instance, run_experiment, ExperimentConfig};
use ndro_core::fw::{run_fw, run_fw_iterations, FwConfig};
use ndro_core::saddle::{regularize, run_saddle, FixedX, SaddleResult, SaddleSummary};
use ndro_core::{Error, MinVarInstance, MinVarProblem, MomentState, NdroProblem, SaddleConfig, Termination};

const EXPERIMENT_SCHEMA: &str = "\
EXPERIMENT CONFIG (JSON, every field optional):
  seed             u64          2024
  n                usize >= 2   25
  n_samples        usize >= 1   2 n
  rho_list         [f64 >= 0]   [0.1, 0.5, 1.0]
  alpha_list       [f64 >= 0]   [0.0]     explicit (a/2)||x||^2 weights
  k_iterations     usize        75        budget K; K+1 rows per cell
  epsilon          f64 > 0      1e-3
  delta            f64 >= 0     0
  support          \"ellipsoid\" | \"unconstrained\"
  norm             \"l2\" | \"linf\"
  cond_cap         f64 >= 1     10        condition-number cap of M
  dual_eval_iters  usize        75        fixed-x FW iterations per dual value
  out_dir          path         \"out\"
  jobs             usize >= 1   1

OUTPUT: one CSV per (rho, alpha) cell named cell_rho{rho}_alpha{alpha}.csv with header
  k,gamma,gap_est,primal_value,dual_value,primal_subopt,duality_gap,time_ms
and summary.json {cells: [{rho, alpha, iterations, certificate, final_primal, final_dual, status, ...}]}.";

const SOLVE_SCHEMA: &str = "\
SOLVE CONFIG (JSON) for run-fw, run-saddle and eval-dual. Exactly one instance source:
  instance         inline instance {n, N, samples, rho, m?, norm?, support?, feasible_x?, reg_alpha?, b_sigma?}
  instance_path    path to an instance JSON (as written by gen-data)
  generate         experiment config used to generate the instance (first rho/alpha of the lists)
Solver fields:
  epsilon          f64 > 0      1e-3
  delta            f64 >= 0     0
  k_override       usize        replaces the budget K(eps)
  iteration_cap    usize        stop uncertified after this iteration
  regularize       bool         add (eps/b_x^2)||x||^2; defaults to true when reg_alpha = 0
  x                [f64]        fixed portfolio for run-fw / eval-dual (default uniform)
  iterations       usize        75, fixed-x FW iterations for eval-dual

INSTANCE support: {\"type\": \"ellipsoid\", \"m\": [[..]]} | {\"type\": \"unconstrained\"};
feasible_x: {\"type\": \"simplex\"} | {\"type\": \"return_floor\", \"alpha_bar\": f64}.

OUTPUT: run-saddle writes trace.csv (k,gamma,gap_est,primal_value,dual_value,time_ms) and
summary.json {x_eps, certificate, epsilon, iterations, certified}; run-fw writes trace.csv
(k,gamma,gap_est,risk_value,time_ms) and summary.json; eval-dual writes a JSON report.";

const EXIT_CODES: &str = "EXIT CODES: 0 success, 2 configuration or usage error, 3 solver failure.";

#[derive(Parser)]
#[command(
    name = "ndro",
    version,
    about = "Frank-Wolfe and saddle-point solvers for distributionally robust min-variance portfolios"
)]
#[command(after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded random instance and write it as JSON.
    #[command(after_help = format!("{EXPERIMENT_SCHEMA}\n\n{EXIT_CODES}"))]
    GenData(Common),
    /// Maximize F(x, .) over the ambiguity set for a fixed portfolio.
    #[command(after_help = format!("{SOLVE_SCHEMA}\n\n{EXIT_CODES}"))]
    RunFw(Common),
    /// Run the max-min saddle algorithm.
    #[command(after_help = format!("{SOLVE_SCHEMA}\n\n{EXIT_CODES}"))]
    RunSaddle(Common),
    /// Evaluate the dual function sup_P F(x, P) for a fixed portfolio.
    #[command(after_help = format!("{SOLVE_SCHEMA}\n\n{EXIT_CODES}"))]
    EvalDual(Common),
    /// Run a (rho, alpha) convergence sweep.
    #[command(after_help = format!("{EXPERIMENT_SCHEMA}\n\n{EXIT_CODES}"))]
    Experiment(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the generator dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Output file (gen-data, eval-dual) or directory (others).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Solver(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Shape(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::Infeasible(_)
            | Error::Unbounded(_)
            | Error::Json(_) => CliError::Config(e.to_string()),
            _ => CliError::Solver(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SolveConfig {
    instance: Option<MinVarInstance>,
    instance_path: Option<PathBuf>,
    generate: Option<ExperimentConfig>,
    epsilon: Option<f64>,
    delta: f64,
    k_override: Option<usize>,
    iteration_cap: Option<usize>,
    regularize: Option<bool>,
    x: Option<Vec<f64>>,
    iterations: Option<usize>,
}

impl SolveConfig {
    fn epsilon(&self) -> f64 {
        self.epsilon.unwrap_or(1e-3)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let res = match cli.command {
        Command::GenData(c) => gen_data(&c),
        Command::RunFw(c) => cmd_run_fw(&c),
        Command::RunSaddle(c) => cmd_run_saddle(&c),
        Command::EvalDual(c) => cmd_eval_dual(&c),
        Command::Experiment(c) => cmd_experiment(&c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Config(m) => eprintln!("config error: {m}"),
                CliError::Solver(m) => eprintln!("solver failure: {m}"),
            }
            ExitCode::from(e.code())
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(Error::from)?;
    }
    let mut f = fs::File::create(path).map_err(Error::from)?;
    serde_json::to_writer_pretty(&mut f, value).map_err(Error::from)?;
    writeln!(f).map_err(Error::from)?;
    Ok(())
}

fn write_with<F>(path: &Path, body: F) -> CliResult<()>
where
    F: FnOnce(&mut std::io::BufWriter<fs::File>) -> ndro_core::Result<()>,
{
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(Error::from)?);
    body(&mut w)?;
    w.flush().map_err(Error::from)?;
    Ok(())
}

fn experiment_config(c: &Common) -> CliResult<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, c);
    if let Some(j) = c.jobs {
        cfg.jobs = j;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, c: &Common) {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(n) = c.n {
        cfg.n = n;
    }
}

fn gen_data(c: &Common) -> CliResult<()> {
    let cfg = experiment_config(c)?;
    let inst = generate_instance(&cfg)?;
    match &c.out {
        Some(p) => write_json(p, &inst),
        None => {
            println!("{}", serde_json::to_string_pretty(&inst).map_err(Error::from)?);
            Ok(())
        }
    }
}

fn solve_config(c: &Common) -> CliResult<(SolveConfig, MinVarInstance)> {
    let path = c
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config <path> is required".into()))?;
    let mut cfg: SolveConfig = read_json(path)?;
    let sources = [
        cfg.instance.is_some(),
        cfg.instance_path.is_some(),
        cfg.generate.is_some(),
    ];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(CliError::Config(
            "exactly one of instance, instance_path, generate must be given".into(),
        ));
    }
    if cfg.generate.is_none() && (c.seed.is_some() || c.n.is_some()) {
        return Err(CliError::Config("--seed/--n only apply to a generated instance".into()));
    }
    let inst = if let Some(i) = cfg.instance.take() {
        i
    } else if let Some(p) = &cfg.instance_path {
        let p = if p.is_relative() {
            path.parent().unwrap_or(Path::new("")).join(p)
        } else {
            p.clone()
        };
        read_json(&p)?
    } else {
        let g = cfg.generate.as_mut().expect("one source present");
        apply_overrides(g, c);
        generate_instance(g)?
    };
    if !(cfg.epsilon() > 0.0) || !(cfg.delta >= 0.0) {
        return Err(CliError::Config("need epsilon > 0 and delta >= 0".into()));
    }
    Ok((cfg, inst))
}

fn out_dir(c: &Common) -> CliResult<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn portfolio(cfg: &SolveConfig, inst: &MinVarInstance) -> CliResult<Vec<f64>> {
    let n = inst.n();
    match &cfg.x {
        Some(x) if x.len() != n => Err(CliError::Config(format!("x has length {}, expected {n}", x.len()))),
        Some(x) => Ok(x.clone()),
        None => Ok(vec![1.0 / n as f64; n]),
    }
}

fn saddle_config(cfg: &SolveConfig) -> SaddleConfig {
    SaddleConfig {
        k_override: cfg.k_override,
        iteration_cap: cfg.iteration_cap,
        ..SaddleConfig::new(cfg.epsilon(), cfg.delta)
    }
}

#[derive(Serialize)]
struct SaddleReport {
    #[serde(flatten)]
    summary: SaddleSummary,
    termination: Termination,
    budget_k: usize,
    threshold: f64,
    regularized: bool,
}

fn cmd_run_saddle(c: &Common) -> CliResult<()> {
    let (cfg, inst) = solve_config(c)?;
    let dir = out_dir(c)?;
    // Without an explicit strong-convexity term the smoothness bound needs the
    // epsilon-regularized objective.
    let reg = cfg.regularize.unwrap_or(inst.reg_alpha == 0.0);
    let problem = MinVarProblem::new(inst)?;
    let start = problem.nominal_state();
    let sc = saddle_config(&cfg);
    let report = |res: &SaddleResult<MomentState>| SaddleReport {
        summary: res.summary(),
        termination: res.termination,
        budget_k: res.budget_k,
        threshold: res.threshold,
        regularized: reg,
    };
    let (res, rep) = if reg {
        let b_x = problem.x_bound();
        let wrapped = regularize(problem, cfg.epsilon(), b_x)?;
        let res = run_saddle(&wrapped, start, &sc)?;
        let rep = report(&res);
        (res, rep)
    } else {
        let res = run_saddle(&problem, start, &sc)?;
        let rep = report(&res);
        (res, rep)
    };
    write_with(&dir.join("trace.csv"), |w| res.write_csv(w))?;
    write_json(&dir.join("summary.json"), &rep)?;
    eprintln!(
        "{} iterations, certificate {:e}, {:?}",
        rep.summary.iterations, rep.summary.certificate, rep.termination
    );
    Ok(())
}

#[derive(Serialize)]
struct FwReport {
    x: Vec<f64>,
    best_value: f64,
    certificate: f64,
    iterations: usize,
    certified: bool,
    termination: Termination,
    smoothness_c: f64,
}

fn cmd_run_fw(c: &Common) -> CliResult<()> {
    let (cfg, inst) = solve_config(c)?;
    let dir = out_dir(c)?;
    let x = portfolio(&cfg, &inst)?;
    let problem = MinVarProblem::new(inst)?;
    let smoothness_c = problem.constants()?.c2;
    let fc = FwConfig {
        smoothness_c,
        oracle_delta: cfg.delta,
        epsilon: cfg.epsilon(),
        k_override: cfg.k_override,
    };
    let fixed = FixedX {
        problem: &problem,
        x: &x,
    };
    let trace = run_fw(&fixed, problem.nominal_state(), &fc)?;
    write_with(&dir.join("trace.csv"), |w| trace.write_csv(w))?;
    let rep = FwReport {
        best_value: trace.best_value(),
        certificate: trace.records.last().map_or(f64::NAN, |r| r.gap_est),
        iterations: trace.records.len(),
        certified: trace.certified(),
        termination: trace.termination,
        smoothness_c,
        x,
    };
    write_json(&dir.join("summary.json"), &rep)?;
    eprintln!("{} iterations, best value {:e}", rep.iterations, rep.best_value);
    Ok(())
}

#[derive(Serialize)]
struct DualReport {
    x: Vec<f64>,
    /// Best value seen along the fixed-x run (lower estimate of the supremum).
    dual_value: f64,
    /// Smallest `value + gap` along the run (upper bound on the supremum).
    dual_upper: f64,
    nominal_value: f64,
    iterations: usize,
}

fn cmd_eval_dual(c: &Common) -> CliResult<()> {
    let (cfg, inst) = solve_config(c)?;
    let x = portfolio(&cfg, &inst)?;
    let problem = MinVarProblem::new(inst)?;
    let start = problem.nominal_state();
    let iterations = cfg.iterations.unwrap_or(75);
    let fixed = FixedX {
        problem: &problem,
        x: &x,
    };
    let trace = run_fw_iterations(&fixed, start.clone(), iterations)?;
    let rep = DualReport {
        dual_value: trace.best_value(),
        dual_upper: trace
            .records
            .iter()
            .map(|r| r.risk_value + r.gap_est)
            .fold(f64::INFINITY, f64::min),
        nominal_value: problem.f_value(&x, &start)?,
        iterations: trace.records.len(),
        x,
    };
    match &c.out {
        Some(p) => write_json(p, &rep)?,
        None => println!("{}", serde_json::to_string_pretty(&rep).map_err(Error::from)?),
    }
    Ok(())
}

fn cmd_experiment(c: &Common) -> CliResult<()> {
    let mut cfg = experiment_config(c)?;
    if let Some(o) = &c.out {
        cfg.out_dir = o.clone();
    }
    let (summary, _) = run_experiment(&cfg)?;
    let failed = summary.cells.iter().filter(|c| c.status != "ok").count();
    for cell in &summary.cells {
        eprintln!("rho={} alpha={}: {} ({})", cell.rho, cell.alpha, cell.status, cell.csv);
    }
    if failed > 0 {
        return Err(CliError::Solver(format!(
            "{failed} of {} cells failed",
            summary.cells.len()
        )));
    }
    Ok(())
}
