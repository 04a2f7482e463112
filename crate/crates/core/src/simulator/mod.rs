//! The slotted edge-cloud world: model catalog, servers, WAN bandwidth,
//! delay and accuracy models, and per-slot accounting of compute, bandwidth
//! and energy.

mod engine;
mod workload;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::Preference;
use crate::scheduler::{AllocationScheme, EnergyBreakdown, SchedulerError, SlotOutcome, Task, TaskOutcome};

pub use engine::{annotate_preferences, labeled_windows, simulate, task_features, Scenario};
pub use workload::{
    generate_tasks, generate_workload, synthetic_frame, FrameSizeModel, Workload, WorkloadItem, WorkloadSpec,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error(transparent)]
    Predictor(#[from] crate::predictor::PredictorError),
    #[error(transparent)]
    Complexity(#[from] crate::complexity::ComplexityError),
}

pub type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub params_millions: f64,
    pub map50: f64,
    /// GFLOP per inference.
    pub gflops: f64,
}

impl ModelSpec {
    fn new(name: &str, params_millions: f64, map50: f64, gflops: f64) -> Self {
        Self {
            name: name.into(),
            params_millions,
            map50,
            gflops,
        }
    }
}

/// The six detector variants with their parameter counts, mAP50 and GFLOPs.
pub fn model_catalog() -> Vec<ModelSpec> {
    vec![
        ModelSpec::new("yolov5s", 7.2, 56.8, 16.5),
        ModelSpec::new("yolov5l", 46.5, 67.3, 109.1),
        ModelSpec::new("yolov5x", 86.7, 68.9, 205.7),
        ModelSpec::new("yolov5s6", 12.6, 63.7, 16.8),
        ModelSpec::new("yolov5l6", 76.8, 71.3, 111.4),
        ModelSpec::new("yolov5x6", 140.7, 72.7, 209.8),
    ]
}

pub fn model(name: &str) -> Option<ModelSpec> {
    model_catalog().into_iter().find(|m| m.name == name)
}

/// An (edge model, cloud model) deployment pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DeploymentVersion {
    V1,
    V2,
    V3,
    V4,
}

impl DeploymentVersion {
    pub const ALL: [DeploymentVersion; 4] = [Self::V1, Self::V2, Self::V3, Self::V4];

    pub fn edge_model(self) -> ModelSpec {
        let name = match self {
            Self::V1 | Self::V2 => "yolov5s",
            Self::V3 | Self::V4 => "yolov5s6",
        };
        model(name).expect("catalog entry")
    }

    pub fn cloud_model(self) -> ModelSpec {
        let name = match self {
            Self::V1 => "yolov5l",
            Self::V2 => "yolov5x",
            Self::V3 => "yolov5l6",
            Self::V4 => "yolov5x6",
        };
        model(name).expect("catalog entry")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::V1 => "V1",
            Self::V2 => "V2",
            Self::V3 => "V3",
            Self::V4 => "V4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Cloud,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Edge => "edge",
            Tier::Cloud => "cloud",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: usize,
    pub tier: Tier,
    pub fp16_tflops: f64,
    pub work_power_w: f64,
    pub idle_power_w: f64,
    pub tx_power_w: f64,
    pub model: ModelSpec,
    pub max_concurrency: usize,
}

/// Hardware and power of every server in one tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierConfig {
    pub fp16_tflops: f64,
    pub work_power_w: f64,
    pub idle_power_w: f64,
    pub tx_power_w: f64,
    pub max_concurrency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterConfig {
    #[serde(default = "default_n_edge")]
    pub n_edge: usize,
    #[serde(default = "default_edge_tier")]
    pub edge: TierConfig,
    #[serde(default = "default_cloud_tier")]
    pub cloud: TierConfig,
}

fn default_n_edge() -> usize {
    4
}
fn default_edge_tier() -> TierConfig {
    TierConfig {
        fp16_tflops: 21.0,
        work_power_w: 15.0,
        idle_power_w: 5.0,
        tx_power_w: 2.0,
        max_concurrency: 1,
    }
}
fn default_cloud_tier() -> TierConfig {
    TierConfig {
        fp16_tflops: 312.0,
        work_power_w: 300.0,
        idle_power_w: 60.0,
        tx_power_w: 10.0,
        max_concurrency: 1,
    }
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n_edge: default_n_edge(),
            edge: default_edge_tier(),
            cloud: default_cloud_tier(),
        }
    }
}

impl ClusterConfig {
    /// Edge servers take ids `0..n_edge`; the cloud is the last id.
    pub fn build(&self, version: DeploymentVersion) -> Result<Vec<ServerSpec>> {
        if self.n_edge == 0 {
            return Err(SimError::Config("at least one edge server is required".into()));
        }
        for (name, t) in [("edge", &self.edge), ("cloud", &self.cloud)] {
            let powers = [t.work_power_w, t.idle_power_w, t.tx_power_w];
            if !(t.fp16_tflops > 0.0) || powers.iter().any(|p| !(*p >= 0.0)) || t.max_concurrency == 0 {
                return Err(SimError::Config(format!("invalid {name} tier {t:?}")));
            }
        }
        if self.cloud.fp16_tflops <= self.edge.fp16_tflops {
            return Err(SimError::Config("cloud throughput must exceed edge throughput".into()));
        }
        let server = |id, tier, t: &TierConfig, model| ServerSpec {
            id,
            tier,
            fp16_tflops: t.fp16_tflops,
            work_power_w: t.work_power_w,
            idle_power_w: t.idle_power_w,
            tx_power_w: t.tx_power_w,
            model,
            max_concurrency: t.max_concurrency,
        };
        let mut out: Vec<ServerSpec> = (0..self.n_edge)
            .map(|i| server(i, Tier::Edge, &self.edge, version.edge_model()))
            .collect();
        out.push(server(self.n_edge, Tier::Cloud, &self.cloud, version.cloud_model()));
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthMode {
    Stable,
    Fluctuating,
}

impl BandwidthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BandwidthMode::Stable => "stable",
            BandwidthMode::Fluctuating => "fluctuating",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandwidthConfig {
    #[serde(default = "default_mode")]
    pub mode: BandwidthMode,
    #[serde(default = "default_base_mbps")]
    pub base_mbps: f64,
    #[serde(default = "default_fluctuation")]
    pub fluctuation_frac: f64,
}

fn default_mode() -> BandwidthMode {
    BandwidthMode::Stable
}
fn default_base_mbps() -> f64 {
    300.0
}
fn default_fluctuation() -> f64 {
    0.2
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            base_mbps: default_base_mbps(),
            fluctuation_frac: default_fluctuation(),
        }
    }
}

/// WAN bandwidth per slot. Fluctuating samples are uniform in
/// `base * [1 - frac, 1 + frac]` and depend only on `(seed, slot)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandwidthModel {
    pub config: BandwidthConfig,
    pub seed: u64,
}

impl BandwidthModel {
    pub fn new(config: BandwidthConfig, seed: u64) -> Result<Self> {
        if !(config.base_mbps > 0.0 && config.base_mbps.is_finite()) || !(0.0..1.0).contains(&config.fluctuation_frac) {
            return Err(SimError::Config(format!("invalid bandwidth config {config:?}")));
        }
        Ok(Self { config, seed })
    }

    pub fn sample(&self, slot: usize) -> f64 {
        let c = &self.config;
        match c.mode {
            BandwidthMode::Stable => c.base_mbps,
            BandwidthMode::Fluctuating if c.fluctuation_frac == 0.0 => c.base_mbps,
            BandwidthMode::Fluctuating => {
                let mut rng = crate::rng::stream(self.seed, &format!("bandwidth/{slot}"));
                let lo = c.base_mbps * (1.0 - c.fluctuation_frac);
                let hi = c.base_mbps * (1.0 + c.fluctuation_frac);
                rng.gen_range(lo..=hi)
            }
        }
    }
}

/// Timing, accuracy and network constants of the simulated world.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldParams {
    #[serde(default = "default_slot")]
    pub slot_len_s: f64,
    /// Charged once per task by policies that run the predictor.
    #[serde(default = "default_preproc")]
    pub preproc_s: f64,
    /// mAP points lost at scaled complexity 1.
    #[serde(default = "default_penalty")]
    pub accuracy_penalty: f64,
    /// Edge access-link bandwidth as a multiple of the WAN base bandwidth.
    #[serde(default = "default_local_factor")]
    pub local_link_factor: f64,
    /// Whether an escalated task's delay includes its failed first attempt.
    #[serde(default = "default_true")]
    pub count_failed_slot: bool,
    #[serde(default)]
    pub bandwidth: BandwidthConfig,
}

fn default_slot() -> f64 {
    0.1
}
fn default_preproc() -> f64 {
    0.014
}
fn default_penalty() -> f64 {
    10.0
}
fn default_local_factor() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}

impl Default for WorldParams {
    fn default() -> Self {
        Self {
            slot_len_s: default_slot(),
            preproc_s: default_preproc(),
            accuracy_penalty: default_penalty(),
            local_link_factor: default_local_factor(),
            count_failed_slot: true,
            bandwidth: BandwidthConfig::default(),
        }
    }
}

impl WorldParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v > 0.0 && v.is_finite();
        if !pos(self.slot_len_s)
            || !pos(self.local_link_factor)
            || !(self.preproc_s >= 0.0)
            || !(self.accuracy_penalty >= 0.0)
        {
            return Err(SimError::Config(format!("invalid world parameters {self:?}")));
        }
        BandwidthModel::new(self.bandwidth, 0).map(|_| ())
    }

    pub fn local_link_mbps(&self) -> f64 {
        self.bandwidth.base_mbps * self.local_link_factor
    }
}

/// Seconds per task when `count` tasks share the server: the model's FLOPs
/// over the server's throughput, slowed down linearly beyond `max_concurrency`.
pub fn inference_delay(server: &ServerSpec, count: usize) -> f64 {
    let count = count.max(1);
    let base = server.model.gflops / 1000.0 / server.fp16_tflops;
    base * count as f64 / count.min(server.max_concurrency) as f64
}

pub fn transmission_delay(data_mbit: f64, bandwidth_mbps: f64) -> Result<f64> {
    if !(bandwidth_mbps > 0.0) {
        return Err(SimError::Domain(format!("bandwidth {bandwidth_mbps} must be positive")));
    }
    Ok(data_mbit / bandwidth_mbps)
}

/// Per-task share of the link serving `server` when `count` tasks use it.
pub fn link_share_mbps(server: &ServerSpec, count: usize, wan_mbps: f64, world: &WorldParams) -> f64 {
    let link = match server.tier {
        Tier::Cloud => wan_mbps,
        Tier::Edge => world.local_link_mbps(),
    };
    link / count.max(1) as f64
}

/// Pre-processing plus transmission plus inference.
pub fn end_to_end_delay(task: &Task, server: &ServerSpec, link_mbps: f64, load: usize, preproc_s: f64) -> Result<f64> {
    Ok(preproc_s + transmission_delay(task.data_size, link_mbps)? + inference_delay(server, load))
}

/// Table mAP minus a penalty linear in the task's scaled complexity.
pub fn realized_accuracy(task: &Task, server: &ServerSpec, penalty: f64) -> f64 {
    (server.model.map50 - penalty * task.complexity).clamp(0.0, 100.0)
}

/// A task as submitted to one slot: `offset_s` is the delay accrued before
/// transmission starts (pre-processing, or a failed earlier attempt).
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task: Task,
    pub offset_s: f64,
}

/// Realizes one slot. Every task on a server shares its link and compute
/// fairly; all tasks start at the slot boundary.
pub fn slot_outcome(
    scheme: &AllocationScheme,
    jobs: &[Job],
    servers: &[ServerSpec],
    world: &WorldParams,
    wan_mbps: f64,
) -> Result<SlotOutcome> {
    if scheme.len() != jobs.len() {
        return Err(SchedulerError::Mismatch(format!("{} assignments for {} jobs", scheme.len(), jobs.len())).into());
    }
    for a in scheme.assignments() {
        if a.server >= servers.len() {
            return Err(SchedulerError::NoServer(format!("server {} does not exist", a.server)).into());
        }
    }
    let load = scheme.loads(servers.len());
    let mut bits_on = vec![0.0; servers.len()];
    let mut tasks = Vec::with_capacity(jobs.len());
    for job in jobs {
        let server = scheme
            .server_of(job.task.id)
            .ok_or_else(|| SchedulerError::Mismatch(format!("task {} not in scheme", job.task.id)))?;
        let s = &servers[server];
        let n = load[server];
        let inf = inference_delay(s, n);
        let tx = transmission_delay(job.task.data_size, link_share_mbps(s, n, wan_mbps, world))?;
        bits_on[server] += job.task.data_size;
        tasks.push(TaskOutcome {
            task_id: job.task.id,
            server,
            accuracy: realized_accuracy(&job.task, s, world.accuracy_penalty),
            delay: job.offset_s + tx + inf,
            compute_tflop: s.fp16_tflops * inf,
            bandwidth_mbps: match s.tier {
                Tier::Cloud => job.task.data_size / world.slot_len_s,
                Tier::Edge => 0.0,
            },
            energy_j: 0.0,
        });
    }

    let mut energy = EnergyBreakdown::default();
    let mut work_on = vec![0.0; servers.len()];
    let mut tx_on = vec![0.0; servers.len()];
    for s in servers {
        let busy = if load[s.id] > 0 {
            inference_delay(s, load[s.id])
        } else {
            0.0
        };
        let link = match s.tier {
            Tier::Cloud => wan_mbps,
            Tier::Edge => world.local_link_mbps(),
        };
        work_on[s.id] = s.work_power_w * busy;
        tx_on[s.id] = s.tx_power_w * bits_on[s.id] / link;
        energy.work_j += work_on[s.id];
        energy.tx_j += tx_on[s.id];
        energy.idle_j += s.idle_power_w * (world.slot_len_s - busy).max(0.0);
    }
    for (t, job) in tasks.iter_mut().zip(jobs) {
        let n = load[t.server] as f64;
        let bits = bits_on[t.server];
        t.energy_j = work_on[t.server] / n + tx_on[t.server] * job.task.data_size / bits;
    }
    Ok(SlotOutcome {
        slot: scheme.slot,
        compute_tflop: tasks.iter().map(|t| t.compute_tflop).sum(),
        bandwidth_mbps: tasks.iter().map(|t| t.bandwidth_mbps).sum(),
        tasks,
        energy,
        wan_mbps,
    })
}

/// Ground-truth preference: compute-preferring iff the edge model misses
/// the accuracy requirement, the cloud model meets it, and an uncontended
/// cloud round trip leaves at least 20% of the delay budget.
pub fn preference_label(task: &Task, servers: &[ServerSpec], world: &WorldParams) -> Result<Preference> {
    let cloud = &servers[crate::scheduler::cloud_id(servers)?];
    let edge = servers.iter().find(|s| s.tier == Tier::Edge).expect("edge checked");
    let edge_misses = realized_accuracy(task, edge, world.accuracy_penalty) < task.accuracy_req;
    let cloud_meets = realized_accuracy(task, cloud, world.accuracy_penalty) >= task.accuracy_req;
    let rtt = end_to_end_delay(task, cloud, world.bandwidth.base_mbps, 1, world.preproc_s)?;
    Ok(if edge_misses && cloud_meets && rtt <= 0.8 * task.delay_req {
        Preference::ComputePreferring
    } else {
        Preference::BandwidthPreferring
    })
}
