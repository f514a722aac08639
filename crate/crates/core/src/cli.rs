//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 cost guard
//! (infinite expected cost, budget or level cap), 4 an experiment finished
//! but missed one of its tolerances.

use crate::analysis::{tune_rate_worknorm, write_csv, CsvRow};
use crate::error::MccoError;
use crate::exec::{ExecOptions, DEFAULT_BUDGET};
use crate::experiments::{self, Check};
use crate::mlmc_gradient::{mlmc_gradient_estimate, GradientMode};
use crate::mlmc_value::{default_rates, mlmc_value_estimate, MlmcConfig};
use crate::optimizer::{adam_run, projected_sgd, AdamConfig, GradientSample, SgdConfig};
use crate::problem::{MccoProblem, Vector};
use crate::problems::{bermudan_surrogate, default_decision, exact_value, ProblemDescriptor};
use crate::randomness::RngStream;
use crate::saa::{saa_estimate, SaaConfig};
use crate::schedules::{saa_schedule, truncation_schedule, ProblemConstants, ScheduleMode};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "mcco", version, about = "Nested conditional-expectation estimation and optimization")]
pub struct Cli {
    /// Worker threads for tree-level parallelism.
    #[arg(long, global = true, env = "MCCO_THREADS")]
    pub threads: Option<usize>,
    /// Maximum scenario paths per estimator call.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate F(x) with SAA or MLMC.
    Estimate(EstimateArgs),
    /// Estimate the gradient of F at x with MLMC.
    Gradient(EstimateArgs),
    /// Run projected SGD or Adam from a JSON configuration.
    Optimize(OptimizeArgs),
    /// Run a reference experiment and check it against its tolerances.
    Experiment(ExperimentArgs),
    /// Print sample sizes or truncation points for a target accuracy.
    Schedule(ScheduleArgs),
    /// Pick a common level rate by work-normalized second moment.
    TuneRates(TuneArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Saa,
    Mlmc,
    MlmcGrad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Coupled,
    Independent,
}

/// Fully resolved estimator run, embedded in every report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemDescriptor,
    pub estimator: EstimatorKind,
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    #[serde(default)]
    pub n1: Option<usize>,
    /// SAA branching factors n_1..n_T.
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
    /// Truncation points; absent means untruncated.
    #[serde(default)]
    pub truncations: Option<Vec<u32>>,
    #[serde(default)]
    pub gradient_mode: GradientMode,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// Problem descriptor: a JSON file or an inline JSON object.
    #[arg(long)]
    pub problem: Option<String>,
    /// Run configuration JSON, or a previous report to replay.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    #[arg(long)]
    pub n1: Option<usize>,
    /// SAA branching factors, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub rates: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', conflicts_with = "untruncated")]
    pub truncations: Option<Vec<u32>>,
    #[arg(long)]
    pub untruncated: bool,
    /// Decision vector, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; `.json` writes the full report, anything else a CSV row.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Trajectory CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Synthetic,
    Bermudan,
    Bandits,
    Slopes,
}

#[derive(Args, Debug)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub name: ExperimentName,
    /// JSON overrides for the experiment configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n1: Option<usize>,
    #[arg(long)]
    pub truncation: Option<u32>,
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long, default_value = "mcco-out")]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScheduleEstimator {
    Saa,
    Mlmc,
}

#[derive(Args, Debug)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long)]
    pub constants: PathBuf,
    #[arg(long, value_enum)]
    pub estimator: ScheduleEstimator,
    #[arg(long)]
    pub smooth: bool,
    /// Failure probability for high-probability schedules.
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Problem descriptor: a JSON file or an inline JSON object.
    #[arg(long, required_unless_present = "surrogate")]
    pub problem: Option<String>,
    /// Tune on the cheap Bermudan stand-in instead of a problem file.
    #[arg(long, conflicts_with = "problem")]
    pub surrogate: bool,
    /// Rates as a list or `lo:hi:step`.
    #[arg(long, default_value = "0.51:0.70:0.01")]
    pub grid: String,
    #[arg(long, default_value_t = 100_000)]
    pub reps: usize,
    #[arg(long)]
    pub truncation: Option<u32>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Mcco(MccoError),
    Input(String),
    Tolerance(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Mcco(e) if !e.is_validation() => 3,
            CliError::Mcco(_) | CliError::Input(_) => 2,
            CliError::Tolerance(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Mcco(e) => write!(f, "{e}"),
            CliError::Input(s) => write!(f, "{s}"),
            CliError::Tolerance(s) => write!(f, "tolerance missed: {s}"),
        }
    }
}

impl From<MccoError> for CliError {
    fn from(e: MccoError) -> Self {
        CliError::Mcco(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let exec = ExecOptions {
        threads: cli.threads,
        budget: cli.budget.unwrap_or(DEFAULT_BUDGET),
    };
    match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, None, &exec),
        Command::Gradient(a) => cmd_estimate(a, Some(EstimatorKind::MlmcGrad), &exec),
        Command::Optimize(a) => cmd_optimize(a, &exec),
        Command::Experiment(a) => cmd_experiment(a, &exec),
        Command::Schedule(a) => cmd_schedule(a),
        Command::TuneRates(a) => cmd_tune(a, &exec),
    }
}

fn read_problem(arg: &str) -> CliResult<ProblemDescriptor> {
    let text = if arg.trim_start().starts_with('{') { arg.to_string() } else { read(Path::new(arg))? };
    Ok(ProblemDescriptor::from_json(&text)?)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Input(format!("{what}: {e}")))
}

/// Prints to stdout, ignoring a closed pipe.
fn emit(v: &Value) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{}", pretty(v));
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values serialize")
}

fn csv_string(f: impl FnOnce(&mut Vec<u8>) -> crate::Result<()>) -> CliResult<String> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    String::from_utf8(buf).map_err(|e| CliError::Input(e.to_string()))
}

fn envelope(seed: u64, config: Value, result: Value) -> Value {
    json!({ "version": VERSION, "seed": seed, "config": config, "result": result })
}

/// Loads a run configuration from a config or report file; reports keep
/// theirs under `"config"`.
pub fn load_run_config(text: &str) -> CliResult<RunConfig> {
    let v: Value = parse_json(text, "config")?;
    let inner = match v.get("config") {
        Some(c) if v.get("result").is_some() => c.clone(),
        _ => v,
    };
    serde_json::from_value(inner).map_err(|e| CliError::Input(format!("config: {e}")))
}

fn resolve(a: &EstimateArgs, forced: Option<EstimatorKind>) -> CliResult<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => Some(load_run_config(&read(p)?)?),
        None => None,
    };
    let problem = match (&a.problem, &cfg) {
        (Some(p), _) => read_problem(p)?,
        (None, Some(c)) => c.problem.clone(),
        (None, None) => return Err(CliError::Input("either --problem or --config is required".into())),
    };
    let estimator = forced
        .or(a.estimator)
        .or(cfg.as_ref().map(|c| c.estimator))
        .ok_or_else(|| CliError::Input("--estimator is required".into()))?;
    let mut c = cfg.take().unwrap_or(RunConfig {
        problem: problem.clone(),
        estimator,
        x: None,
        n1: None,
        n: None,
        rates: None,
        truncations: None,
        gradient_mode: GradientMode::Coupled,
        seed: 0,
    });
    c.problem = problem;
    c.estimator = estimator;
    if a.x.is_some() {
        c.x = a.x.clone();
    }
    if a.n1.is_some() {
        c.n1 = a.n1;
    }
    if a.n.is_some() {
        c.n = a.n.clone();
    }
    if a.rates.is_some() {
        c.rates = a.rates.clone();
    }
    if a.truncations.is_some() {
        c.truncations = a.truncations.clone();
    }
    if a.untruncated {
        c.truncations = None;
    }
    if let Some(m) = a.mode {
        c.gradient_mode = match m {
            ModeArg::Coupled => GradientMode::Coupled,
            ModeArg::Independent => GradientMode::Independent,
        };
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    Ok(c)
}

fn decision(cfg_x: &Option<Vec<f64>>, problem: &ProblemDescriptor, p: &MccoProblem) -> CliResult<Vector> {
    let x = match cfg_x {
        Some(v) => Vector::from_column_slice(v),
        None => default_decision(&problem.params)?,
    };
    if x.len() != p.decision_dim() {
        return Err(CliError::Input(format!(
            "decision has {} entries, problem expects {}",
            x.len(),
            p.decision_dim()
        )));
    }
    Ok(x)
}

fn mlmc_config_of(c: &mut RunConfig, p: &MccoProblem) -> CliResult<MlmcConfig> {
    let n1 = c.n1.ok_or_else(|| CliError::Input("--n1 is required for MLMC".into()))?;
    let rates = c
        .rates
        .get_or_insert_with(|| default_rates(p.stages(), p.is_differentiable()))
        .clone();
    if rates.len() + 1 != p.stages() {
        return Err(CliError::Input(format!(
            "{} rates given for a {}-stage problem (need T-1)",
            rates.len(),
            p.stages()
        )));
    }
    Ok(match &c.truncations {
        Some(m) => MlmcConfig::truncated(n1, &rates, m)?,
        None => MlmcConfig::untruncated(n1, &rates)?,
    })
}

/// Runs one estimator configuration and returns the JSON result and an
/// optional CSV row.
pub fn execute(c: &mut RunConfig, exec: &ExecOptions) -> CliResult<(Value, Option<CsvRow>)> {
    let p = c.problem.build()?;
    let x = decision(&c.x, &c.problem, &p)?;
    c.x = Some(x.iter().copied().collect());
    let stream = RngStream::new(c.seed);
    let start = Instant::now();
    match c.estimator {
        EstimatorKind::Saa => {
            let n = match (&c.n, c.n1) {
                (Some(n), _) => n.clone(),
                (None, Some(k)) => vec![k; p.stages()],
                (None, None) => return Err(CliError::Input("SAA needs --n or --n1".into())),
            };
            c.n = Some(n.clone());
            let r = saa_estimate(&p, &x, &SaaConfig::new(n)?, &stream, exec)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let row = CsvRow::from_report("saa", c.seed, &r, ms);
            Ok((report_json(&r, exact_value(&c.problem.params, &x)?), Some(row)))
        }
        EstimatorKind::Mlmc => {
            let config = mlmc_config_of(c, &p)?;
            let r = mlmc_value_estimate(&p, &x, &config, &stream, exec)?;
            let ms = start.elapsed().as_secs_f64() * 1e3;
            let row = CsvRow::from_report("mlmc", c.seed, &r, ms);
            Ok((report_json(&r, exact_value(&c.problem.params, &x)?), Some(row)))
        }
        EstimatorKind::MlmcGrad => {
            let config = mlmc_config_of(c, &p)?;
            let r = mlmc_gradient_estimate(&p, &x, &config, &stream, exec, c.gradient_mode)?;
            let v = json!({
                "gradient": r.gradient.as_slice(),
                "stderr": r.stderr().as_slice(),
                "value": r.value(),
                "scenario_count": r.scenario_count,
                "expected_cost": r.expected_cost,
                "wall_ms": start.elapsed().as_secs_f64() * 1e3,
            });
            Ok((v, None))
        }
    }
}

fn report_json(r: &crate::EstimateReport, exact: Option<f64>) -> Value {
    let (lo, hi) = r.ci();
    json!({
        "estimate": r.value,
        "stderr": r.stderr(),
        "ci": [lo, hi],
        "n1": r.tree_values.len(),
        "scenario_count": r.scenario_count,
        "expected_cost": r.expected_cost,
        "exact": exact,
    })
}

fn cmd_estimate(a: &EstimateArgs, forced: Option<EstimatorKind>, exec: &ExecOptions) -> CliResult<()> {
    let mut c = resolve(a, forced)?;
    let (result, row) = execute(&mut c, exec)?;
    let seed = c.seed;
    let report = envelope(seed, serde_json::to_value(&c).expect("config serializes"), result);
    if let Some(out) = &a.out {
        if out.extension().is_some_and(|e| e == "json") || row.is_none() {
            write(out, &pretty(&report))?;
        } else if let Some(row) = row {
            write(out, &csv_string(|b| write_csv(b, &[row]))?)?;
        }
    }
    emit(&report);
    Ok(())
}

/// Configuration for `optimize`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub problem: ProblemDescriptor,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    pub n1: usize,
    #[serde(default)]
    pub rates: Option<Vec<f64>>,
    #[serde(default)]
    pub truncations: Option<Vec<u32>>,
    #[serde(default)]
    pub gradient_mode: GradientMode,
    #[serde(default)]
    pub seed: u64,
    pub method: Method,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sgd(SgdConfig),
    Adam(AdamConfig),
}

#[derive(Serialize)]
struct TrajectoryRow {
    iteration: usize,
    scenarios: u64,
    x: String,
}

fn cmd_optimize(a: &OptimizeArgs, exec: &ExecOptions) -> CliResult<()> {
    let mut cfg: OptimizeConfig = parse_json(&read(&a.config)?, "optimize config")?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let p = cfg.problem.build()?;
    let x0 = decision(&cfg.x0, &cfg.problem, &p)?;
    cfg.x0 = Some(x0.iter().copied().collect());
    let mut run = RunConfig {
        problem: cfg.problem.clone(),
        estimator: EstimatorKind::MlmcGrad,
        x: None,
        n1: Some(cfg.n1),
        n: None,
        rates: cfg.rates.clone(),
        truncations: cfg.truncations.clone(),
        gradient_mode: cfg.gradient_mode,
        seed: cfg.seed,
    };
    let mlmc = mlmc_config_of(&mut run, &p)?;
    cfg.rates = run.rates;
    let mode = cfg.gradient_mode;
    let grad = |x: &Vector, s: &RngStream| -> crate::Result<GradientSample> {
        let g = mlmc_gradient_estimate(&p, x, &mlmc, s, exec, mode)?;
        Ok(GradientSample {
            gradient: g.gradient,
            scenarios: g.scenario_count,
        })
    };
    let stream = RngStream::new(cfg.seed);
    let (trajectory, cumulative, result) = match &cfg.method {
        Method::Sgd(s) => {
            let r = projected_sgd(&p, &x0, s, grad, &stream)?;
            let mut traj = r.trajectory.clone();
            traj.push(r.last.clone());
            let cum = r.cumulative_scenarios.clone();
            let v = json!({
                "output": r.output.as_slice(),
                "output_index": r.output_index,
                "last": r.last.as_slice(),
                "scenario_count": r.scenario_count,
            });
            (traj, cum, v)
        }
        Method::Adam(c) => {
            let r = adam_run(&p, &x0, c, grad, &stream)?;
            let v = json!({ "last": r.last().as_slice(), "scenario_count": r.scenario_count });
            (r.trajectory, r.cumulative_scenarios, v)
        }
    };
    let report = envelope(cfg.seed, serde_json::to_value(&cfg).expect("config serializes"), result);
    if let Some(out) = &a.out {
        let rows: Vec<TrajectoryRow> = trajectory
            .iter()
            .enumerate()
            .map(|(k, x)| TrajectoryRow {
                iteration: k,
                scenarios: if k == 0 { 0 } else { cumulative[k - 1] },
                x: x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" "),
            })
            .collect();
        write(out, &serialize_csv(&rows)?)?;
    }
    emit(&report);
    Ok(())
}

fn serialize_csv<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Input(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::Input(e.to_string()))
}

fn overrides<T>(base: T, path: &Option<PathBuf>) -> CliResult<T>
where
    T: Serialize + for<'de> Deserialize<'de>,
{
    let Some(p) = path else { return Ok(base) };
    let mut v = serde_json::to_value(&base).expect("config serializes");
    let patch: Value = parse_json(&read(p)?, "experiment overrides")?;
    let (Value::Object(dst), Value::Object(src)) = (&mut v, patch) else {
        return Err(CliError::Input("experiment overrides must be a JSON object".into()));
    };
    for (k, val) in src {
        if !dst.contains_key(&k) {
            return Err(CliError::Input(format!("unknown override `{k}`")));
        }
        dst.insert(k, val);
    }
    serde_json::from_value(v).map_err(|e| CliError::Input(format!("experiment overrides: {e}")))
}

#[derive(Serialize)]
struct SlopeRow<'a> {
    estimator: &'a str,
    cost: f64,
    mse: f64,
}

#[derive(Serialize)]
struct BanditRow {
    seed: u64,
    iteration: usize,
    scenarios: u64,
    theta1: f64,
    theta2: f64,
    lambda: f64,
}

fn cmd_experiment(a: &ExperimentArgs, exec: &ExecOptions) -> CliResult<()> {
    let name = format!("{:?}", a.name).to_lowercase();
    let start = Instant::now();
    let (config, result, checks, csv, seed) = match a.name {
        ExperimentName::Synthetic => {
            let mut c = overrides(experiments::SyntheticConfig::default(), &a.config)?;
            c.n1 = a.n1.unwrap_or(c.n1);
            c.seed = a.seed.unwrap_or(c.seed);
            let o = experiments::run_synthetic(&c, exec)?;
            let row = CsvRow {
                run_id: "synthetic".into(),
                seed: c.seed,
                n1: c.n1,
                estimate: o.estimate,
                stderr: o.stderr,
                ci_low: o.ci.0,
                ci_high: o.ci.1,
                scenarios: (o.empirical_cost_per_tree * c.n1 as f64).round() as u64,
                expected_cost: o.cost_per_tree * c.n1 as f64,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            let checks = o.checks(&c);
            let csv = csv_string(|b| write_csv(b, &[row]))?;
            (to_value(&c), to_value(&o), checks, csv, c.seed)
        }
        ExperimentName::Bermudan => {
            let mut c = overrides(experiments::BermudanConfig::default(), &a.config)?;
            c.n1 = a.n1.unwrap_or(c.n1);
            c.truncation = a.truncation.unwrap_or(c.truncation);
            c.rate = a.rate.unwrap_or(c.rate);
            c.seed = a.seed.unwrap_or(c.seed);
            let r = experiments::run_bermudan(&c, exec)?;
            let row = CsvRow::from_report("bermudan", c.seed, &r, start.elapsed().as_secs_f64() * 1e3);
            let csv = csv_string(|b| write_csv(b, std::slice::from_ref(&row)))?;
            (to_value(&c), report_json(&r, None), experiments::bermudan_checks(&r), csv, c.seed)
        }
        ExperimentName::Slopes => {
            let mut c = overrides(experiments::SlopesConfig::default(), &a.config)?;
            c.replications = a.reps.unwrap_or(c.replications);
            c.seed = a.seed.unwrap_or(c.seed);
            let s = experiments::run_slopes(&c, exec)?;
            let rows: Vec<SlopeRow> = s
                .iter()
                .flat_map(|x| {
                    x.costs.iter().zip(&x.mses).map(|(&cost, &mse)| SlopeRow {
                        estimator: &x.estimator,
                        cost,
                        mse,
                    })
                })
                .collect();
            let csv = serialize_csv(&rows)?;
            (to_value(&c), to_value(&s), experiments::slope_checks(&s), csv, c.seed)
        }
        ExperimentName::Bandits => {
            let mut c = overrides(experiments::BanditExperimentConfig::default(), &a.config)?;
            c.n1 = a.n1.unwrap_or(c.n1);
            c.iterations = a.iterations.unwrap_or(c.iterations);
            if let Some(s) = a.seed {
                c.seeds = vec![s];
            }
            let o = experiments::run_bandits(&c, exec)?;
            let rows: Vec<BanditRow> = o
                .runs
                .iter()
                .flat_map(|r| {
                    r.trajectory.iter().enumerate().map(move |(k, x)| BanditRow {
                        seed: r.seed,
                        iteration: k,
                        scenarios: if k == 0 { 0 } else { r.cumulative_scenarios[k - 1] },
                        theta1: x[0],
                        theta2: x[1],
                        lambda: x[2],
                    })
                })
                .collect();
            let csv = serialize_csv(&rows)?;
            let result = json!({ "oracle": o.oracle, "mean_final": o.mean_final });
            let seed = c.seeds[0];
            (to_value(&c), result, o.checks(), csv, seed)
        }
    };
    let passed = checks.iter().all(|c| c.passed);
    let mut summary = envelope(seed, config, result);
    summary["checks"] = to_value(&checks);
    summary["passed"] = json!(passed);
    summary["wall_ms"] = json!(start.elapsed().as_secs_f64() * 1e3);
    write(&a.out_dir.join(format!("{name}.csv")), &csv)?;
    write(&a.out_dir.join(format!("{name}_summary.json")), &pretty(&summary))?;
    emit(&summary);
    if passed {
        Ok(())
    } else {
        let failed: Vec<&Check> = checks.iter().filter(|c| !c.passed).collect();
        Err(CliError::Tolerance(
            failed
                .iter()
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; "),
        ))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

fn cmd_schedule(a: &ScheduleArgs) -> CliResult<()> {
    let constants: ProblemConstants = parse_json(&read(&a.constants)?, "constants")?;
    let mode = match a.beta {
        Some(beta) => ScheduleMode::HighProb { beta },
        None => ScheduleMode::Mse,
    };
    let result = match a.estimator {
        ScheduleEstimator::Saa => json!({ "n": saa_schedule(a.epsilon, &constants, a.smooth, mode)? }),
        ScheduleEstimator::Mlmc => to_value(&truncation_schedule(a.epsilon, &constants, a.smooth, mode)?),
    };
    let config = json!({
        "epsilon": a.epsilon,
        "estimator": format!("{:?}", a.estimator).to_lowercase(),
        "smooth": a.smooth,
        "mode": mode,
        "constants": constants,
    });
    emit(&json!({ "version": VERSION, "config": config, "result": result }));
    Ok(())
}

/// Parses `0.51,0.55` or `lo:hi:step` into a rate grid.
pub fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Input(format!("bad rate grid `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let v: Vec<f64> = parts
            .iter()
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad())?;
        let (lo, hi, step) = (v[0], v[1], v[2]);
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|i| ((lo + i as f64 * step) * 1e10).round() / 1e10).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect()
}

fn cmd_tune(a: &TuneArgs, exec: &ExecOptions) -> CliResult<()> {
    let grid = parse_grid(&a.grid)?;
    let (p, x, problem_json) = if a.surrogate {
        let p = bermudan_surrogate(0.05, 4)?;
        (p, Vector::zeros(1), json!("bermudan_surrogate"))
    } else {
        let d = read_problem(a.problem.as_deref().expect("clap enforces --problem"))?;
        let p = d.build()?;
        let x = decision(&a.x, &d, &p)?;
        (p, x, to_value(&d))
    };
    let t = tune_rate_worknorm(&p, &x, &grid, a.reps, a.truncation, &RngStream::new(a.seed), exec)?;
    let config = json!({
        "problem": problem_json,
        "x": x.as_slice(),
        "grid": grid,
        "reps": a.reps,
        "truncation": a.truncation,
    });
    let report = envelope(a.seed, config, to_value(&t));
    if let Some(out) = &a.out {
        write(out, &pretty(&report))?;
    }
    emit(&report);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0.51:0.70:0.01").unwrap();
        assert_eq!(g.len(), 20);
        assert_eq!(g[0], 0.51);
        assert_eq!(g[19], 0.7);
        assert_eq!(parse_grid("0.55,0.6").unwrap(), vec![0.55, 0.6]);
        assert!(parse_grid("a:b:c").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Mcco(MccoError::InvalidParams("x".into())).exit_code(), 2);
        assert_eq!(CliError::Mcco(MccoError::InfiniteCost { stage: 1, rate: 0.4 }).exit_code(), 3);
        assert_eq!(CliError::Tolerance("x".into()).exit_code(), 4);
        assert_eq!(run_from(["mcco", "no-such-command"]), 2);
    }

    #[test]
    fn report_replays_its_config() {
        let mut c = RunConfig {
            problem: ProblemDescriptor::from_json(r#"{"kind": "synthetic"}"#).unwrap(),
            estimator: EstimatorKind::Mlmc,
            x: None,
            n1: Some(500),
            n: None,
            rates: None,
            truncations: Some(vec![4, 4]),
            gradient_mode: GradientMode::Coupled,
            seed: 11,
        };
        let exec = ExecOptions::default();
        let (first, _) = execute(&mut c, &exec).unwrap();
        let report = envelope(c.seed, serde_json::to_value(&c).unwrap(), first.clone());
        let mut again = load_run_config(&report.to_string()).unwrap();
        assert_eq!(again, c);
        let (second, _) = execute(&mut again, &exec).unwrap();
        assert_eq!(first["estimate"], second["estimate"]);
    }
}
