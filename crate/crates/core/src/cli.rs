//! Command-line front end.
//!
//! Every command resolves a typed config from (defaults, `--config` JSON, flags), with
//! flags taking precedence, runs, and echoes the resolved config to `<out>/config.json`.
//! Outputs are written only after the command has succeeded.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{self, DatasetName, DatasetSpec, Format, SampleSet};
use crate::drift::{self, BridgeModel, Direction};
use crate::error::Error;
use crate::gaussian::{mse_experiment, MseConfig, MseTable, SlopeFit};
use crate::metrics::{self, append_ledger, LedgerRow, Metric};
use crate::rng::derive_seed_path;
use crate::sde::{self, SimConfig};
use crate::sinkhorn::{self, SolverConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_NOT_CONVERGED: i32 = 5;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "SINKHORN_BRIDGE_THREADS";

/// Why a command failed; each variant has its own exit code.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Io(String),
    Numerical(String),
    NotConverged(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Numerical(_) => EXIT_NUMERICAL,
            Failure::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Io(m) | Failure::Numerical(m) | Failure::NotConverged(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Io { .. } | Error::Parse { .. } | Error::RaggedRow { .. } | Error::NonFiniteInput { .. } | Error::Json(_) => {
                Failure::Io(msg)
            }
            Error::SinkhornNonFinite { .. }
            | Error::NonFiniteState { .. }
            | Error::DegeneratePlan(_)
            | Error::NotPositiveDefinite(_) => Failure::Numerical(msg),
            Error::Invalid(_)
            | Error::DimensionMismatch { .. }
            | Error::UnknownDataset(_)
            | Error::UnknownMetric(_)
            | Error::SingularTime(_)
            | Error::IndexOutOfRange { .. } => Failure::Config(msg),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Debug, Parser)]
#[command(name = "sinkhorn-bridge", version, about = "Schrödinger bridges from samples via Sinkhorn potentials")]
pub struct Cli {
    /// JSON file with command parameters; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the entropic OT problem and write potentials plus the forward bridge model.
    Fit(FitArgs),
    /// Simulate the bridge SDE from initial points.
    Simulate(SimulateArgs),
    /// Drift-MSE experiment against the closed-form Gaussian bridge.
    GaussianBench(BenchArgs),
    /// Compare a generated sample with a reference sample.
    Eval(EvalArgs),
    /// Regenerate the data behind one of the bundled figures.
    Demo(DemoArgs),
}

fn parse_tau(s: &str) -> std::result::Result<f64, String> {
    let t: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if t > 0.0 && t < 1.0 {
        Ok(t)
    } else {
        Err(format!("tau must lie strictly inside (0, 1), got {t}"))
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Source samples: a CSV/JSON path or `name:n:seed[:noise[:dim]]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Target samples: a CSV/JSON path or `name:n:seed[:noise[:dim]]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub check_every: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Bridge model JSON written by `fit`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Use the Föllmer bridge from the origin to `--target` instead of a fitted model.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub follmer: bool,
    /// Target samples for `--follmer`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    /// Initial points: a CSV/JSON path.
    #[arg(long, conflicts_with = "dataset")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Initial points drawn from `name:n:seed[:noise[:dim]]`.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", rename = "init")]
    pub dataset: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long, value_parser = parse_tau)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Number of trajectories; initial points are cycled to this count.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Also write every intermediate state to `trajectories.csv`.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub trajectories: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_tau)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_grid: Option<Vec<f64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_mc: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Generated samples: a path or dataset spec.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generated: Option<String>,
    /// Reference samples: a path or dataset spec.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    /// Comma-separated subset of `bw-uvp,energy-distance,w2-1d`.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct DemoArgs {
    /// One of `toy-bridges`, `gaussian-mse`, `mixture-uvp`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Shrink every size so the demo finishes in seconds.
    #[arg(long)]
    #[serde(skip_serializing_if = "is_false")]
    pub quick: bool,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Resolved `fit` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub source: String,
    pub target: String,
    pub eps: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub check_every: usize,
    pub out: PathBuf,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            source: String::new(),
            target: String::new(),
            eps: 0.1,
            tol: SolverConfig::DEFAULT_TOL,
            max_iter: SolverConfig::DEFAULT_MAX_ITER,
            check_every: SolverConfig::DEFAULT_CHECK_EVERY,
            out: default_out(),
        }
    }
}

/// Resolved `simulate` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub model: Option<PathBuf>,
    pub follmer: bool,
    pub target: Option<String>,
    pub init: Option<String>,
    pub eps: Option<f64>,
    pub tau: f64,
    pub steps: usize,
    pub count: Option<usize>,
    pub seed: u64,
    pub trajectories: bool,
    pub out: PathBuf,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: None,
            follmer: false,
            target: None,
            init: None,
            eps: None,
            tau: 0.9,
            steps: 50,
            count: None,
            seed: 0,
            trajectories: false,
            out: default_out(),
        }
    }
}

/// Resolved `gaussian-bench` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub dims: Vec<usize>,
    pub eps: f64,
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub trials: usize,
    pub n_mc: usize,
    pub tol: f64,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let std = MseConfig::standard(3, 0);
        Self {
            dims: vec![3],
            eps: std.eps,
            n_grid: std.n_grid,
            tau_grid: std.tau_grid,
            trials: std.trials,
            n_mc: std.n_mc,
            tol: std.tol,
            seed: 0,
            out: default_out(),
        }
    }
}

impl BenchConfig {
    fn experiment(&self, dim: usize) -> MseConfig {
        MseConfig {
            dim,
            eps: self.eps,
            n_grid: self.n_grid.clone(),
            tau_grid: self.tau_grid.clone(),
            trials: self.trials,
            n_mc: self.n_mc,
            seed: self.seed,
            tol: self.tol,
        }
    }
}

/// Resolved `eval` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub generated: String,
    pub reference: String,
    pub metrics: Vec<String>,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            generated: String::new(),
            reference: String::new(),
            metrics: vec![Metric::BwUvp.to_string(), Metric::EnergyDistance.to_string()],
            seed: 0,
            out: default_out(),
        }
    }
}

/// Resolved `demo` parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoConfig {
    pub name: String,
    pub seed: u64,
    pub quick: bool,
    pub out: PathBuf,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            seed: 0,
            quick: false,
            out: default_out(),
        }
    }
}

/// Overlay `flags` (already stripped of unset values) on the config file and defaults.
pub fn resolve<C: DeserializeOwned + Serialize>(config_file: Option<&Path>, flags: &impl Serialize) -> CliResult<C> {
    let mut merged = match config_file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Io(format!("cannot read config {p:?}: {e}")))?;
            serde_json::from_str::<Value>(&text).map_err(|e| Failure::Config(format!("config {p:?}: {e}")))?
        }
        None => json!({}),
    };
    let overrides = serde_json::to_value(flags).map_err(|e| Failure::Config(e.to_string()))?;
    match (merged.as_object_mut(), overrides) {
        (Some(base), Value::Object(top)) => base.extend(top),
        _ => return Err(Failure::Config("config file must contain a JSON object".into())),
    }
    serde_json::from_value(merged).map_err(|e| Failure::Config(e.to_string()))
}

/// A sample set from a path or, when the first `:`-field names a dataset, a generator spec.
pub fn load_samples(source: &str) -> crate::Result<SampleSet> {
    let head = source.split(':').next().unwrap_or_default();
    if source.contains(':') && head.parse::<DatasetName>().is_ok() {
        return data::generate(&DatasetSpec::parse(source)?);
    }
    let path = Path::new(source);
    data::read_samples(path, Format::from_path(path))
}

fn require(field: &str, value: &str) -> CliResult<()> {
    if value.is_empty() {
        Err(Failure::Config(format!("missing required parameter `{field}`")))
    } else {
        Ok(())
    }
}

fn create_out(out: &Path) -> CliResult<()> {
    fs::create_dir_all(out).map_err(|e| Failure::Io(format!("cannot create {out:?}: {e}")))
}

fn echo_config(out: &Path, cfg: &impl Serialize) -> CliResult<()> {
    Ok(crate::write_json(cfg, out.join("config.json"))?)
}

/// Parse arguments, run the command and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("error: {}", f.message());
            f.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let cfg = cli.config.as_deref();
    match &cli.command {
        Command::Fit(a) => cmd_fit(&resolve(cfg, a)?),
        Command::Simulate(a) => cmd_simulate(&resolve(cfg, a)?),
        Command::GaussianBench(a) => cmd_gaussian_bench(&resolve(cfg, a)?),
        Command::Eval(a) => cmd_eval(&resolve(cfg, a)?),
        Command::Demo(a) => cmd_demo(&resolve(cfg, a)?),
    }
}

/// Fit potentials; writes `potentials.json`, `bridge-model.json` and `config.json`.
pub fn cmd_fit(cfg: &FitConfig) -> CliResult<()> {
    require("source", &cfg.source)?;
    require("target", &cfg.target)?;
    let solver = SolverConfig::new(cfg.eps)
        .tol(cfg.tol)
        .max_iter(cfg.max_iter)
        .check_every(cfg.check_every);
    solver.validate()?;
    let source = load_samples(&cfg.source)?;
    let target = load_samples(&cfg.target)?;
    let pair = sinkhorn::fit(&source, &target, &solver)?;
    let dual = sinkhorn::dual_objective(&source, &target, &pair)?;
    println!("iterations: {}", pair.iterations);
    println!("marginal_error: {:e}", pair.marginal_error);
    println!("dual_objective: {dual:?}");
    if !pair.converged {
        return Err(Failure::NotConverged(format!(
            "sinkhorn did not reach tol {:e} within {} iterations (marginal error {:e})",
            cfg.tol, pair.iterations, pair.marginal_error
        )));
    }
    let model = drift::from_potentials(&pair, &source, &target, Direction::Forward)?;
    create_out(&cfg.out)?;
    pair.save(cfg.out.join("potentials.json"))?;
    model.save(cfg.out.join("bridge-model.json"))?;
    echo_config(&cfg.out, cfg)
}

/// Simulate; writes `endpoints.csv`, optionally `trajectories.csv`, and `config.json`.
pub fn cmd_simulate(cfg: &SimulateConfig) -> CliResult<()> {
    let model = match (&cfg.model, cfg.follmer) {
        (Some(_), true) => return Err(Failure::Config("--model and --follmer are exclusive".into())),
        (None, false) => return Err(Failure::Config("either --model or --follmer is required".into())),
        (Some(path), false) => {
            let m = BridgeModel::load(path)?;
            if let Some(eps) = cfg.eps {
                if eps != m.eps() {
                    return Err(Failure::Config(format!("--eps {eps} differs from the model's {}", m.eps())));
                }
            }
            m
        }
        (None, true) => {
            let target = cfg
                .target
                .as_deref()
                .ok_or_else(|| Failure::Config("--follmer needs --target".into()))?;
            drift::follmer_model(&load_samples(target)?, cfg.eps.unwrap_or(1.0))?
        }
    };
    let init = match (&cfg.init, cfg.follmer) {
        (Some(src), _) => load_samples(src)?,
        (None, true) => SampleSet::new(ndarray::Array2::zeros((1, model.dim())))?,
        (None, false) => return Err(Failure::Config("--init or --dataset is required".into())),
    };
    let count = cfg.count.unwrap_or(if cfg.init.is_none() { 1000 } else { init.len() });
    let init = if count == init.len() { init } else { init.cycled(count)? };
    let sim = SimConfig::new(cfg.tau, cfg.steps, model.eps(), cfg.seed).keep_paths(cfg.trajectories);
    let batch = sde::simulate(&model, &init, &sim)?;

    create_out(&cfg.out)?;
    data::write_samples(&sde::endpoints(&batch)?, cfg.out.join("endpoints.csv"), Format::Csv)?;
    if cfg.trajectories {
        batch.write_csv(cfg.out.join("trajectories.csv"))?;
    }
    let resolved = SimulateConfig {
        eps: Some(model.eps()),
        count: Some(count),
        ..cfg.clone()
    };
    echo_config(&cfg.out, &resolved)
}

fn write_bench(table: &MseTable, dir: &Path) -> CliResult<Vec<SlopeFit>> {
    create_out(dir)?;
    table.write_csv(dir.join("mse.csv"))?;
    table.write_summary_csv(dir.join("mse_summary.csv"))?;
    let slopes = table.slopes();
    crate::write_json(&slopes, dir.join("slopes.json"))?;
    Ok(slopes)
}

/// Run the MSE experiment per dimension; writes `d{dim}/{mse.csv, mse_summary.csv,
/// slopes.json}`, a combined `slopes.json` and `config.json`.
pub fn cmd_gaussian_bench(cfg: &BenchConfig) -> CliResult<()> {
    if cfg.dims.is_empty() {
        return Err(Failure::Config("dims must not be empty".into()));
    }
    for &d in &cfg.dims {
        cfg.experiment(d).validate()?;
    }
    let mut all = serde_json::Map::new();
    for &d in &cfg.dims {
        let table = mse_experiment(&cfg.experiment(d))?;
        let slopes = write_bench(&table, &cfg.out.join(format!("d{d}")))?;
        for s in &slopes {
            println!("d={d} tau={} slope={:.3}", s.tau, s.slope);
        }
        all.insert(format!("d{d}"), serde_json::to_value(&slopes).map_err(Error::from)?);
    }
    crate::write_json(&Value::Object(all), cfg.out.join("slopes.json"))?;
    echo_config(&cfg.out, cfg)
}

/// Evaluate metrics; appends rows to `<out>/metrics.csv`.
pub fn cmd_eval(cfg: &EvalConfig) -> CliResult<()> {
    require("generated", &cfg.generated)?;
    require("reference", &cfg.reference)?;
    let metrics: Vec<Metric> = cfg
        .metrics
        .iter()
        .map(|m| m.parse())
        .collect::<crate::Result<_>>()?;
    if metrics.is_empty() {
        return Err(Failure::Config("no metrics requested".into()));
    }
    let generated = load_samples(&cfg.generated)?;
    let reference = load_samples(&cfg.reference)?;
    let params = json!({
        "generated": cfg.generated,
        "reference": cfg.reference,
        "n_generated": generated.len(),
        "n_reference": reference.len(),
    });
    let rows = metrics
        .iter()
        .map(|m| {
            let v = m.evaluate(&generated, &reference, cfg.seed)?;
            println!("{m}: {v:?}");
            Ok(LedgerRow::new(m.as_str(), v, &params, cfg.seed))
        })
        .collect::<crate::Result<Vec<_>>>()?;
    create_out(&cfg.out)?;
    append_ledger(cfg.out.join("metrics.csv"), &rows)?;
    echo_config(&cfg.out, cfg)
}

/// Run one of the bundled demos.
pub fn cmd_demo(cfg: &DemoConfig) -> CliResult<()> {
    match cfg.name.as_str() {
        "toy-bridges" => demo_toy_bridges(cfg)?,
        "gaussian-mse" => demo_gaussian_mse(cfg)?,
        "mixture-uvp" => demo_mixture_uvp(cfg)?,
        "" => return Err(Failure::Config("missing demo name".into())),
        other => {
            return Err(Failure::Config(format!(
                "unknown demo `{other}` (expected toy-bridges, gaussian-mse or mixture-uvp)"
            )))
        }
    }
    echo_config(&cfg.out, cfg)
}

/// Source → target pairings shown by `toy-bridges`.
pub const TOY_PAIRINGS: [(DatasetName, DatasetName); 3] = [
    (DatasetName::Gaussian, DatasetName::Moons),
    (DatasetName::Moons, DatasetName::Circles),
    (DatasetName::Gaussian, DatasetName::Checkerboard),
];

/// Snapshot times of `toy-bridges`; with τ = 0.9 and 180 steps each lies on the grid.
pub const TOY_SNAPSHOTS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 0.9];
const TOY_STEPS: usize = 180;

fn demo_toy_bridges(cfg: &DemoConfig) -> CliResult<()> {
    let (n, count) = if cfg.quick { (200, 100) } else { (2000, 1000) };
    let eps = 0.1;
    let tau = 0.9;
    for (k, (src, tgt)) in TOY_PAIRINGS.iter().enumerate() {
        let seed = |role: u64| derive_seed_path(cfg.seed, &[k as u64, role]);
        let source = data::generate(&DatasetSpec::new(*src, n, seed(0)))?;
        let target = data::generate(&DatasetSpec::new(*tgt, n, seed(1)))?;
        let pair = sinkhorn::fit(&source, &target, &SolverConfig::new(eps))?;
        if !pair.converged {
            return Err(Failure::NotConverged(format!("{src} -> {tgt}: marginal error {:e}", pair.marginal_error)));
        }
        let model = drift::from_potentials(&pair, &source, &target, Direction::Forward)?;
        // Out-of-sample starting points.
        let init = data::generate(&DatasetSpec::new(*src, count, seed(2)))?;
        let batch = sde::simulate(&model, &init, &SimConfig::new(tau, TOY_STEPS, eps, seed(3)))?;

        let dir = cfg.out.join(format!("{src}-to-{tgt}"));
        create_out(&dir)?;
        data::write_samples(&target, dir.join("target.csv"), Format::Csv)?;
        for &t in &TOY_SNAPSHOTS {
            let step = (t / tau * TOY_STEPS as f64).round() as usize;
            let snap = batch.snapshot(step).expect("paths are kept");
            data::write_samples(&SampleSet::new(snap)?, dir.join(format!("t{t:.2}.csv")), Format::Csv)?;
        }
        println!("{src} -> {tgt}: {} sinkhorn iterations", pair.iterations);
    }
    Ok(())
}

fn demo_gaussian_mse(cfg: &DemoConfig) -> CliResult<()> {
    let mut bench = BenchConfig {
        seed: cfg.seed,
        out: cfg.out.clone(),
        ..BenchConfig::default()
    };
    if cfg.quick {
        bench.dims = vec![1];
        bench.n_grid = vec![64, 128, 256];
        bench.trials = 3;
        bench.n_mc = 1000;
    }
    for &d in &bench.dims {
        let table = mse_experiment(&bench.experiment(d))?;
        let slopes = write_bench(&table, &cfg.out.join(format!("d{d}")))?;
        for s in &slopes {
            println!("d={d} tau={} slope={:.3}", s.tau, s.slope);
        }
    }
    Ok(())
}

/// Parameters of one mixture-sampling trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureTrial {
    pub n_fit: usize,
    pub eps: f64,
    pub tau: f64,
    pub steps: usize,
    pub count: usize,
    pub seed: u64,
}

/// Standard Gaussian → 8-mode planar mixture: fit on `n_fit` pairs, simulate `count`
/// fresh starts, and score against `count` fresh mixture draws by BW-UVP.
pub fn mixture_trial(p: &MixtureTrial) -> crate::Result<f64> {
    let seed = |role: u64| derive_seed_path(p.seed, &[role]);
    let source = data::generate(&DatasetSpec::new(DatasetName::Gaussian, p.n_fit, seed(0)))?;
    let target = data::generate(&DatasetSpec::new(DatasetName::GaussianMixture, p.n_fit, seed(1)))?;
    let pair = sinkhorn::fit(&source, &target, &SolverConfig::new(p.eps))?;
    let model = drift::from_potentials(&pair, &source, &target, Direction::Forward)?;
    let init = data::generate(&DatasetSpec::new(DatasetName::Gaussian, p.count, seed(2)))?;
    let sim = SimConfig::new(p.tau, p.steps, p.eps, seed(3)).keep_paths(false);
    let generated = sde::endpoints(&sde::simulate(&model, &init, &sim)?)?;
    let reference = data::generate(&DatasetSpec::new(DatasetName::GaussianMixture, p.count, seed(4)))?;
    metrics::bw_uvp(&generated, &reference)
}

fn demo_mixture_uvp(cfg: &DemoConfig) -> CliResult<()> {
    let (n_fit, steps, count, trials) = if cfg.quick { (256, 20, 1000, 2) } else { (4096, 100, 10_000, 5) };
    create_out(&cfg.out)?;
    let mut values = Vec::with_capacity(trials);
    let mut rows = Vec::with_capacity(trials);
    for trial in 0..trials {
        let p = MixtureTrial {
            n_fit,
            eps: 1.0,
            tau: 0.99,
            steps,
            count,
            seed: derive_seed_path(cfg.seed, &[trial as u64]),
        };
        let v = mixture_trial(&p)?;
        println!("trial {trial}: bw-uvp {v:.4}");
        let params = serde_json::to_value(&p).map_err(Error::from)?;
        rows.push(LedgerRow::new(Metric::BwUvp.as_str(), v, &params, p.seed));
        values.push(v);
    }
    let mc = metrics::mc_mean(&values);
    let std = mc.std_error * (values.len() as f64).sqrt();
    append_ledger(cfg.out.join("metrics.csv"), &rows)?;
    crate::write_json(
        &json!({"metric": "bw-uvp", "trials": trials, "mean": mc.value, "std": std}),
        cfg.out.join("summary.json"),
    )?;
    println!("bw-uvp: {:.4} ± {:.4} over {trials} trials", mc.value, std);
    Ok(())
}
