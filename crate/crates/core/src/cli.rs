//! Config-driven commands: `train`, `run` and `matrix`.
//!
//! A run configuration is one JSON document; every field except
//! `schema_version` has a default, and unknown keys are rejected. All
//! randomness is derived from the root seed through named sub-streams
//! (`workload`, `bandwidth`, `predictor-init`, `predictor-data`,
//! `predictor-eval`, `predictor-train`, `bandit`, `random`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    aggregate, average_reports, compare, AllCloud, AllEdge, ComparisonTable, GreedyLeastCost, MetricsError,
    RandomPolicy, RunReport, Trace,
};
use crate::predictor::{
    evaluate, train, PredictorConfig, PredictorError, PreferencePredictor, TrainConfig, TrainingReport,
};
use crate::rng::derive_seed;
use crate::scheduler::{Ablation, BanditConfig, CdioPolicy, Policy, RppPolicy};
use crate::simulator::{
    annotate_preferences, generate_tasks, labeled_windows, simulate, BandwidthMode, ClusterConfig, DeploymentVersion,
    Scenario, SimError, WorkloadSpec, WorldParams,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<PredictorError> for CliError {
    fn from(e: PredictorError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorSection {
    #[serde(default)]
    pub model: PredictorConfig,
    #[serde(default = "default_training")]
    pub training: TrainConfig,
    /// Size of the synthetic workload labeled for training.
    #[serde(default = "default_train_tasks")]
    pub train_tasks: usize,
    /// Size of the independent held-out workload.
    #[serde(default = "default_eval_tasks")]
    pub eval_tasks: usize,
    /// Pre-trained weights; when absent the predictor is trained in-process.
    #[serde(default)]
    pub weights: Option<PathBuf>,
}

fn default_training() -> TrainConfig {
    TrainConfig {
        epochs: 30,
        ..TrainConfig::default()
    }
}
fn default_train_tasks() -> usize {
    4000
}
fn default_eval_tasks() -> usize {
    500
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            model: PredictorConfig::default(),
            training: default_training(),
            train_tasks: default_train_tasks(),
            eval_tasks: default_eval_tasks(),
            weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    #[serde(default = "default_policies")]
    pub policies: Vec<String>,
    #[serde(default = "default_versions")]
    pub versions: Vec<DeploymentVersion>,
    #[serde(default = "default_modes")]
    pub bw_modes: Vec<BandwidthMode>,
    /// Number of seeds per cell; cell seeds derive from the root seed.
    #[serde(default = "default_seeds")]
    pub seeds: usize,
    #[serde(default = "default_baseline")]
    pub baseline: String,
}

fn default_policies() -> Vec<String> {
    ["cdio", "all_edge", "all_cloud", "random", "greedy"]
        .map(String::from)
        .to_vec()
}
fn default_versions() -> Vec<DeploymentVersion> {
    DeploymentVersion::ALL.to_vec()
}
fn default_modes() -> Vec<BandwidthMode> {
    vec![BandwidthMode::Stable, BandwidthMode::Fluctuating]
}
fn default_seeds() -> usize {
    5
}
fn default_baseline() -> String {
    "all_cloud".into()
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            policies: default_policies(),
            versions: default_versions(),
            bw_modes: default_modes(),
            seeds: default_seeds(),
            baseline: default_baseline(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_version")]
    pub version: DeploymentVersion,
    #[serde(default)]
    pub world: WorldParams,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub scheduler: BanditConfig,
    #[serde(default)]
    pub predictor: PredictorSection,
    /// Used when `policy` is `cdio`.
    #[serde(default = "default_ablation")]
    pub ablation: Ablation,
    #[serde(default = "default_policy")]
    pub policy: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub matrix: MatrixConfig,
}

fn default_version() -> DeploymentVersion {
    DeploymentVersion::V1
}
fn default_ablation() -> Ablation {
    Ablation::Both
}
fn default_policy() -> String {
    "cdio".into()
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

pub const POLICY_NAMES: [&str; 7] = [
    "cdio",
    "cdio_rpp",
    "cdio_cdco",
    "all_edge",
    "all_cloud",
    "random",
    "greedy",
];

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str(&format!("{{\"schema_version\": {SCHEMA_VERSION}}}")).expect("defaults parse")
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.world.validate()?;
        self.workload.validate()?;
        self.cluster.build(self.version)?;
        self.scheduler.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for p in std::iter::once(&self.policy).chain(&self.matrix.policies) {
            if !POLICY_NAMES.contains(&p.as_str()) {
                return Err(CliError::Config(format!("unknown policy {p}")));
            }
        }
        if !POLICY_NAMES.contains(&self.matrix.baseline.as_str()) {
            return Err(CliError::Config(format!("unknown baseline {}", self.matrix.baseline)));
        }
        if let Some(w) = &self.predictor.weights {
            if !w.is_file() {
                return Err(CliError::Config(format!("weights file {} does not exist", w.display())));
            }
        }
        if self.predictor.train_tasks == 0 || self.predictor.eval_tasks == 0 {
            return Err(CliError::Config(
                "predictor train_tasks and eval_tasks must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn scenario(&self, version: DeploymentVersion, mode: BandwidthMode) -> Scenario {
        let mut world = self.world;
        world.bandwidth.mode = mode;
        Scenario {
            version,
            cluster: self.cluster,
            world,
            bandit: self.scheduler,
        }
    }

    fn policy_needs_predictor(&self, name: &str) -> bool {
        match name {
            "cdio" => self.ablation != Ablation::Cdco,
            "cdio_rpp" => true,
            _ => false,
        }
    }
}

/// Builds a policy by name. `cdio` follows `ablation`.
pub fn make_policy(
    name: &str,
    ablation: Ablation,
    scenario: &Scenario,
    delay_range: (f64, f64),
    seed: u64,
) -> Result<Box<dyn Policy>> {
    let servers = scenario.cluster.build(scenario.version)?;
    let bandit = |a: Ablation| -> Result<Box<dyn Policy>> {
        Ok(Box::new(
            CdioPolicy::new(
                scenario.bandit,
                a,
                &servers,
                &scenario.world,
                delay_range,
                derive_seed(seed, "bandit"),
            )
            .map_err(|e| CliError::Config(e.to_string()))?,
        ))
    };
    match (name, ablation) {
        ("cdio", Ablation::Rpp) | ("cdio_rpp", _) => Ok(Box::new(RppPolicy)),
        ("cdio", a) => bandit(a),
        ("cdio_cdco", _) => bandit(Ablation::Cdco),
        ("all_edge", _) => Ok(Box::new(AllEdge)),
        ("all_cloud", _) => Ok(Box::new(AllCloud)),
        ("random", _) => Ok(Box::new(RandomPolicy::new(derive_seed(seed, "random")))),
        ("greedy", _) => Ok(Box::new(GreedyLeastCost {
            phi: scenario.bandit.phi,
        })),
        _ => Err(CliError::Config(format!("unknown policy {name}"))),
    }
}

/// Result of in-process predictor training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub version: DeploymentVersion,
    pub train_windows: usize,
    pub eval_windows: usize,
    pub positive_fraction: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: f64,
    pub heldout_loss: f64,
}

/// Trains on a labeled synthetic workload and scores an independent one.
pub fn train_predictor(
    cfg: &RunConfig,
    version: DeploymentVersion,
    seed: u64,
) -> Result<(PreferencePredictor, TrainingReport, TrainSummary)> {
    let scenario = cfg.scenario(version, cfg.world.bandwidth.mode);
    let max_delay = cfg.workload.delay_req_range.1;
    let seq = cfg.predictor.model.seq_len;
    let spec = |n: usize| WorkloadSpec {
        n_tasks: n,
        ..cfg.workload
    };
    let train_tasks = generate_tasks(&spec(cfg.predictor.train_tasks), derive_seed(seed, "predictor-data"))?.tasks;
    let eval_tasks = generate_tasks(&spec(cfg.predictor.eval_tasks), derive_seed(seed, "predictor-eval"))?.tasks;
    let train_set = labeled_windows(&train_tasks, &scenario, seq, max_delay)?;
    let eval_set = labeled_windows(&eval_tasks, &scenario, seq, max_delay)?;

    let mut predictor = PreferencePredictor::new(cfg.predictor.model, derive_seed(seed, "predictor-init"))?;
    let tc = TrainConfig {
        seed: derive_seed(seed, "predictor-train"),
        ..cfg.predictor.training
    };
    let report = train(&mut predictor, &train_set, &tc)?;
    let (heldout_loss, heldout_accuracy) = evaluate(&predictor, &eval_set)?;
    let summary = TrainSummary {
        version,
        train_windows: train_set.len(),
        eval_windows: eval_set.len(),
        positive_fraction: train_set.iter().map(|w| w.label).sum::<f64>() / train_set.len() as f64,
        train_accuracy: report.final_accuracy,
        heldout_accuracy,
        heldout_loss,
    };
    Ok((predictor, report, summary))
}

fn obtain_predictor(cfg: &RunConfig, version: DeploymentVersion) -> Result<PreferencePredictor> {
    match &cfg.predictor.weights {
        Some(path) => Ok(PreferencePredictor::load(path)?),
        None => Ok(train_predictor(cfg, version, cfg.seed)?.0),
    }
}

/// One simulation of `policy` under `(version, mode)` with workload and
/// bandwidth drawn from `seed`.
pub fn run_once(
    cfg: &RunConfig,
    policy: &str,
    version: DeploymentVersion,
    mode: BandwidthMode,
    seed: u64,
    predictor: Option<&PreferencePredictor>,
) -> Result<Trace> {
    let scenario = cfg.scenario(version, mode);
    let delay_range = cfg.workload.delay_req_range;
    let mut tasks = generate_tasks(&cfg.workload, seed)?.tasks;
    if cfg.policy_needs_predictor(policy) {
        let p = predictor.ok_or_else(|| CliError::Config(format!("policy {policy} needs a predictor")))?;
        tasks = annotate_preferences(&tasks, p, delay_range.1)?;
    }
    let mut pol = make_policy(policy, cfg.ablation, &scenario, delay_range, seed)?;
    Ok(simulate(
        pol.as_mut(),
        &scenario,
        &tasks,
        derive_seed(seed, "bandwidth"),
    )?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn create(path: &Path) -> Result<fs::File> {
    Ok(fs::File::create(path)?)
}

/// Writes `weights.json`, `training.csv` and `train_summary.json`.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    fs::create_dir_all(&cfg.out_dir)?;
    let (predictor, report, summary) = train_predictor(cfg, cfg.version, cfg.seed)?;
    predictor.save(&cfg.out_dir.join("weights.json"))?;
    report.write_csv(create(&cfg.out_dir.join("training.csv"))?)?;
    write_json(&cfg.out_dir.join("train_summary.json"), &summary)?;
    Ok(summary)
}

/// Writes `trace.csv`, `slots.csv` and `report.json`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunReport> {
    fs::create_dir_all(&cfg.out_dir)?;
    let predictor = if cfg.policy_needs_predictor(&cfg.policy) {
        Some(obtain_predictor(cfg, cfg.version)?)
    } else {
        None
    };
    let trace = run_once(
        cfg,
        &cfg.policy,
        cfg.version,
        cfg.world.bandwidth.mode,
        cfg.seed,
        predictor.as_ref(),
    )?;
    let report = aggregate(&trace)?;
    trace.write_rows_csv(create(&cfg.out_dir.join("trace.csv"))?)?;
    trace.write_slots_csv(create(&cfg.out_dir.join("slots.csv"))?)?;
    write_json(&cfg.out_dir.join("report.json"), &report)?;
    Ok(report)
}

/// Seeds of the matrix cells, derived from the root seed.
pub fn matrix_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.matrix.seeds)
        .map(|i| derive_seed(cfg.seed, &format!("matrix/{i}")))
        .collect()
}

/// Every (version, mode, policy, seed) cell; returns per-seed reports in a
/// fixed order: version, mode, policy, seed.
pub fn run_matrix_reports(cfg: &RunConfig) -> Result<Vec<RunReport>> {
    let m = &cfg.matrix;
    if m.policies.is_empty() || m.versions.is_empty() || m.bw_modes.is_empty() || m.seeds == 0 {
        return Err(CliError::Config(
            "matrix needs at least one policy, version, mode and seed".into(),
        ));
    }
    let needs_predictor = m.policies.iter().any(|p| cfg.policy_needs_predictor(p));
    let predictors: Vec<Option<PreferencePredictor>> = m
        .versions
        .par_iter()
        .map(|&v| needs_predictor.then(|| obtain_predictor(cfg, v)).transpose())
        .collect::<Result<_>>()?;
    let seeds = matrix_seeds(cfg);
    let mut cells = Vec::new();
    for (vi, &v) in m.versions.iter().enumerate() {
        for &mode in &m.bw_modes {
            for p in &m.policies {
                for &s in &seeds {
                    cells.push((vi, v, mode, p.as_str(), s));
                }
            }
        }
    }
    cells
        .par_iter()
        .map(|&(vi, v, mode, p, s)| {
            let trace = run_once(cfg, p, v, mode, s, predictors[vi].as_ref())?;
            Ok(aggregate(&trace)?)
        })
        .collect()
}

/// Seed-averaged comparison of every scenario against `matrix.baseline`.
pub fn matrix_table(cfg: &RunConfig, reports: &[RunReport]) -> Result<ComparisonTable> {
    let mut table = ComparisonTable::default();
    let per_cell = cfg.matrix.seeds;
    let per_scenario = per_cell * cfg.matrix.policies.len();
    for scenario in reports.chunks(per_scenario) {
        let averaged = scenario
            .chunks(per_cell)
            .map(average_reports)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        table.extend(compare(&averaged, &cfg.matrix.baseline)?);
    }
    Ok(table)
}

/// Writes `comparison.csv`, `comparison_deltas.csv` and `reports.json`.
pub fn cmd_matrix(cfg: &RunConfig) -> Result<ComparisonTable> {
    if !cfg.matrix.policies.contains(&cfg.matrix.baseline) {
        return Err(CliError::Config(format!(
            "baseline {} is not among the matrix policies",
            cfg.matrix.baseline
        )));
    }
    fs::create_dir_all(&cfg.out_dir)?;
    let reports = run_matrix_reports(cfg)?;
    let table = matrix_table(cfg, &reports)?;
    table.write_csv(create(&cfg.out_dir.join("comparison.csv"))?)?;
    table.write_deltas_csv(create(&cfg.out_dir.join("comparison_deltas.csv"))?)?;
    write_json(&cfg.out_dir.join("reports.json"), &reports)?;
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AblationArg {
    Rpp,
    Cdco,
    Both,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Rpp => Ablation::Rpp,
            AblationArg::Cdco => Ablation::Cdco,
            AblationArg::Both => Ablation::Both,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cdio", about = "Edge-cloud inference scheduling simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub ablation: Option<AblationArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Train the preference predictor and save its weights.
    Train,
    /// Simulate one policy and write its trace and report.
    Run,
    /// Run every policy, version and bandwidth mode; write the comparison.
    Matrix,
}

/// Applies command-line overrides on top of the configuration file.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if let Some(a) = cli.ablation {
        cfg.ablation = a.into();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the parsed command and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let outcome = resolve_config(cli).and_then(|cfg| match cli.command {
        Command::Train => cmd_train(&cfg).map(|s| {
            println!(
                "held-out accuracy {:.4} (train {:.4})",
                s.heldout_accuracy, s.train_accuracy
            );
        }),
        Command::Run => cmd_run(&cfg).map(|r| {
            println!(
                "{} {} {}: acc_sr {:.4} delay_sr {:.4} avg_acc {:.2} objective {:.3}",
                r.policy,
                r.version.as_str(),
                r.bw_mode.as_str(),
                r.acc_success_rate,
                r.delay_success_rate,
                r.avg_accuracy,
                r.objective
            );
        }),
        Command::Matrix => cmd_matrix(&cfg).map(|t| {
            println!("{} comparison rows written to {}", t.rows.len(), cfg.out_dir.display());
        }),
    });
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
