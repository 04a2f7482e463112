use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    preference_label, slot_outcome, BandwidthModel, ClusterConfig, DeploymentVersion, Job, Result, SimError, Tier,
    WorldParams,
};
use crate::metrics::{SlotRecord, Trace, TraceRow};
use crate::predictor::{
    make_feature, predict_preference, window_ending_at, windows_from_sequence, FeatureVector, LabeledWindow,
    PreferencePredictor,
};
use crate::scheduler::{
    feasible, AllocationScheme, Assignment, BanditConfig, Policy, RegretTracker, SlotContext, Task,
};

/// Everything about a run except the workload and the policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub version: DeploymentVersion,
    pub cluster: ClusterConfig,
    pub world: WorldParams,
    pub bandit: BanditConfig,
}

impl Scenario {
    pub fn new(version: DeploymentVersion) -> Self {
        Self {
            version,
            cluster: ClusterConfig::default(),
            world: WorldParams::default(),
            bandit: BanditConfig::default(),
        }
    }
}

/// Feature vectors in task order; the time feature is the arrival index
/// normalized over the workload.
pub fn task_features(tasks: &[Task], max_delay_req: f64) -> Result<Vec<FeatureVector>> {
    let denom = tasks.len().saturating_sub(1).max(1) as f64;
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| Ok(make_feature(t, t.complexity, i as f64 / denom, max_delay_req)?))
        .collect()
}

/// Copies of `tasks` carrying the predictor's preference, each judged from
/// the window of tasks ending at it.
pub fn annotate_preferences(tasks: &[Task], predictor: &PreferencePredictor, max_delay_req: f64) -> Result<Vec<Task>> {
    let features = task_features(tasks, max_delay_req)?;
    tasks
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let w = window_ending_at(&features, i, predictor.seq_len());
            Ok(t.clone().with_preference(predict_preference(predictor, &w)?))
        })
        .collect()
}

/// Windows labeled with the ground-truth preference rule.
pub fn labeled_windows(
    tasks: &[Task],
    scenario: &Scenario,
    seq_len: usize,
    max_delay_req: f64,
) -> Result<Vec<LabeledWindow>> {
    let servers = scenario.cluster.build(scenario.version)?;
    let features = task_features(tasks, max_delay_req)?;
    let labels = tasks
        .iter()
        .map(|t| preference_label(t, &servers, &scenario.world))
        .collect::<Result<Vec<_>>>()?;
    Ok(windows_from_sequence(&features, &labels, seq_len))
}

/// Runs `policy` over `tasks` slot by slot until every task has a final
/// result. Escalated tasks are re-run on the cloud in the following slot.
pub fn simulate(policy: &mut dyn Policy, scenario: &Scenario, tasks: &[Task], bandwidth_seed: u64) -> Result<Trace> {
    if tasks.is_empty() {
        return Err(SimError::Config("empty workload".into()));
    }
    scenario.world.validate()?;
    let world = &scenario.world;
    let servers = scenario.cluster.build(scenario.version)?;
    let cloud = crate::scheduler::cloud_id(&servers)?;
    let bandwidth = BandwidthModel::new(world.bandwidth, bandwidth_seed)?;
    let uses_predictor = policy.uses_predictor();
    if uses_predictor {
        if let Some(t) = tasks.iter().find(|t| t.predicted_pref.is_none()) {
            return Err(crate::scheduler::SchedulerError::MissingPreference(t.id).into());
        }
    }
    let preproc = if uses_predictor { world.preproc_s } else { 0.0 };
    let phi = scenario.bandit.phi;

    let mut arrivals: BTreeMap<usize, Vec<Task>> = BTreeMap::new();
    for t in tasks {
        arrivals.entry(t.arrival_slot).or_default().push(t.clone());
    }
    let horizon = arrivals.keys().next_back().map_or(0, |s| s + 1);

    let mut regret = RegretTracker::new(scenario.bandit.alpha, scenario.bandit.beta, None);
    let mut rows = Vec::with_capacity(tasks.len());
    let mut slots = Vec::new();
    let mut pending: Vec<Job> = Vec::new();
    let mut slot = 0;
    while slot < horizon || !pending.is_empty() {
        let fresh = arrivals.remove(&slot).unwrap_or_default();
        let forced = AllocationScheme::new(
            slot,
            pending
                .iter()
                .map(|j| Assignment {
                    task_id: j.task.id,
                    server: cloud,
                })
                .collect(),
        )?;
        let base_load = forced.loads(servers.len());
        let ctx = SlotContext {
            slot,
            servers: &servers,
            world,
            base_load: &base_load,
        };
        let chosen = policy.select(&ctx, &fresh)?;
        if chosen.len() != fresh.len() || fresh.iter().any(|t| chosen.server_of(t.id).is_none()) {
            return Err(crate::scheduler::SchedulerError::Mismatch(format!(
                "policy placed {} of {} tasks in slot {slot}",
                chosen.len(),
                fresh.len()
            ))
            .into());
        }
        let scheme = forced.merged(&chosen)?;
        let escalated_ids: Vec<usize> = pending.iter().map(|j| j.task.id).collect();
        let mut jobs = std::mem::take(&mut pending);
        jobs.extend(fresh.into_iter().map(|task| Job {
            task,
            offset_s: preproc,
        }));

        let wan = bandwidth.sample(slot);
        let outcome = slot_outcome(&scheme, &jobs, &servers, world, wan)?;
        let slot_tasks: Vec<Task> = jobs.iter().map(|j| j.task.clone()).collect();
        let feedback = policy.feedback(&slot_tasks, &scheme, &outcome)?;
        let (reward, reg) = regret.push(outcome.cost(phi));

        for (job, o) in jobs.iter().zip(&outcome.tasks) {
            let is_retry = escalated_ids.contains(&job.task.id);
            let escalate =
                !is_retry && servers[o.server].tier == Tier::Edge && feedback.escalate.contains(&job.task.id);
            rows.push(TraceRow {
                slot,
                task_id: job.task.id,
                attempt: u32::from(is_retry),
                server: o.server,
                tier: servers[o.server].tier,
                predicted_pref: job.task.predicted_pref,
                accuracy_req: job.task.accuracy_req,
                delay_req: job.task.delay_req,
                complexity: job.task.complexity,
                accuracy: o.accuracy,
                delay_s: o.delay,
                feasible: feasible(&job.task, o.accuracy, o.delay),
                final_attempt: !escalate,
                compute_tflop: o.compute_tflop,
                bandwidth_mbps: o.bandwidth_mbps,
                energy_j: o.energy_j,
            });
            if escalate {
                let offset = if world.count_failed_slot {
                    o.delay.max(world.slot_len_s)
                } else {
                    preproc
                };
                pending.push(Job {
                    task: job.task.clone(),
                    offset_s: offset,
                });
            }
        }
        slots.push(SlotRecord {
            slot,
            tasks: outcome.tasks.len(),
            wan_mbps: wan,
            compute_tflop: outcome.compute_tflop,
            bandwidth_mbps: outcome.bandwidth_mbps,
            energy_work_j: outcome.energy.work_j,
            energy_idle_j: outcome.energy.idle_j,
            energy_tx_j: outcome.energy.tx_j,
            reward,
            regret: reg,
        });
        slot += 1;
    }
    Ok(Trace {
        policy: policy.name(),
        version: scenario.version,
        bw_mode: world.bandwidth.mode,
        phi,
        rows,
        slots,
    })
}
