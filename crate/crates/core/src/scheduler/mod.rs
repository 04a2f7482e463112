//! Cross-domain allocation: the slot objective `mean(U_t + phi * B_t)`, its
//! feasibility constraints, super-arm rewards, approximate regret, the
//! preference-guided initial placement, and the policy interface used by the
//! simulator.

pub mod bandit;
pub mod stationary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::Preference;
use crate::simulator::{ServerSpec, Tier, WorldParams};

pub use bandit::{
    class_id, Ablation, ArmStats, BanditConfig, BanditState, CdioPolicy, ClassRequest, ColdStart, RppPolicy,
};
pub use stationary::{run_stationary, ArmSpec, StationaryInstance, StationaryRun};

#[derive(Debug, Error, PartialEq)]
pub enum SchedulerError {
    #[error("empty history")]
    EmptyHistory,
    #[error("no server available: {0}")]
    NoServer(String),
    #[error("outcome does not match scheme: {0}")]
    Mismatch(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("invalid scheduler config: {0}")]
    InvalidConfig(String),
    #[error("task {0} has no predicted preference")]
    MissingPreference(usize),
}

pub type Result<T> = std::result::Result<T, SchedulerError>;

/// One inference request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub arrival_slot: usize,
    /// Megabits transmitted to the serving node.
    pub data_size: f64,
    /// mAP points.
    pub accuracy_req: f64,
    /// Seconds.
    pub delay_req: f64,
    /// Scaled to `[0, 1]` over the workload.
    pub complexity: f64,
    pub predicted_pref: Option<Preference>,
}

impl Task {
    pub fn new(
        id: usize,
        arrival_slot: usize,
        data_size: f64,
        accuracy_req: f64,
        delay_req: f64,
        complexity: f64,
    ) -> Result<Self> {
        if !(0.0..=100.0).contains(&accuracy_req) {
            return Err(SchedulerError::InvalidTask(format!(
                "task {id}: accuracy requirement {accuracy_req} outside [0, 100]"
            )));
        }
        if !(delay_req > 0.0 && delay_req.is_finite()) {
            return Err(SchedulerError::InvalidTask(format!(
                "task {id}: delay requirement {delay_req} must be positive"
            )));
        }
        if !(data_size > 0.0 && data_size.is_finite()) {
            return Err(SchedulerError::InvalidTask(format!(
                "task {id}: data size {data_size} must be positive"
            )));
        }
        if !(0.0..=1.0).contains(&complexity) {
            return Err(SchedulerError::InvalidTask(format!(
                "task {id}: complexity {complexity} outside [0, 1]"
            )));
        }
        Ok(Self {
            id,
            arrival_slot,
            data_size,
            accuracy_req,
            delay_req,
            complexity,
            predicted_pref: None,
        })
    }

    pub fn with_preference(mut self, pref: Preference) -> Self {
        self.predicted_pref = Some(pref);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub task_id: usize,
    pub server: usize,
}

/// A super arm: exactly one server per task for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationScheme {
    pub slot: usize,
    assignments: Vec<Assignment>,
}

impl AllocationScheme {
    /// Rejects duplicate task ids, so every task has exactly one server.
    pub fn new(slot: usize, assignments: Vec<Assignment>) -> Result<Self> {
        let mut ids: Vec<usize> = assignments.iter().map(|a| a.task_id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(SchedulerError::Mismatch(format!("task {} assigned twice", w[0])));
        }
        Ok(Self { slot, assignments })
    }

    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn server_of(&self, task_id: usize) -> Option<usize> {
        self.assignments.iter().find(|a| a.task_id == task_id).map(|a| a.server)
    }

    /// Tasks per server, indexed by server id.
    pub fn loads(&self, n_servers: usize) -> Vec<usize> {
        let mut l = vec![0; n_servers];
        for a in &self.assignments {
            l[a.server] += 1;
        }
        l
    }

    /// Appends `other`'s assignments; fails if any task appears in both.
    pub fn merged(mut self, other: &AllocationScheme) -> Result<Self> {
        self.assignments.extend_from_slice(&other.assignments);
        Self::new(self.slot, self.assignments)
    }
}

/// Realized result of one task in one slot, with its attributed share of the
/// slot's consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: usize,
    pub server: usize,
    pub accuracy: f64,
    pub delay: f64,
    /// TFLOP.
    pub compute_tflop: f64,
    /// Contribution to the slot's B_t, Mbit/s.
    pub bandwidth_mbps: f64,
    /// Work plus transmission energy, joules. Idle energy is not per task.
    pub energy_j: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub work_j: f64,
    pub idle_j: f64,
    pub tx_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.work_j + self.idle_j + self.tx_j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotOutcome {
    pub slot: usize,
    pub tasks: Vec<TaskOutcome>,
    /// U_t, TFLOP.
    pub compute_tflop: f64,
    /// B_t, Mbit/s averaged over the slot.
    pub bandwidth_mbps: f64,
    pub energy: EnergyBreakdown,
    pub wan_mbps: f64,
}

impl SlotOutcome {
    /// A slot carrying only totals, for objective arithmetic.
    pub fn totals(slot: usize, compute_tflop: f64, bandwidth_mbps: f64) -> Self {
        Self {
            slot,
            tasks: Vec::new(),
            compute_tflop,
            bandwidth_mbps,
            energy: EnergyBreakdown::default(),
            wan_mbps: 0.0,
        }
    }

    pub fn cost(&self, phi: f64) -> f64 {
        slot_cost(self.compute_tflop, self.bandwidth_mbps, phi)
    }

    pub fn task(&self, task_id: usize) -> Option<&TaskOutcome> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

pub fn slot_cost(compute_tflop: f64, bandwidth_mbps: f64, phi: f64) -> f64 {
    compute_tflop + phi * bandwidth_mbps
}

/// `(1/T) * sum_t (U_t + phi * B_t)`.
pub fn objective(history: &[SlotOutcome], phi: f64) -> Result<f64> {
    if history.is_empty() {
        return Err(SchedulerError::EmptyHistory);
    }
    Ok(history.iter().map(|s| s.cost(phi)).sum::<f64>() / history.len() as f64)
}

/// Time-averaged super-arm reward, the negated objective.
pub fn reward(history: &[SlotOutcome], phi: f64) -> Result<f64> {
    objective(history, phi).map(|o| -o)
}

/// Closed inequalities: meeting a requirement exactly counts as met.
pub fn feasible(task: &Task, accuracy: f64, delay: f64) -> bool {
    accuracy >= task.accuracy_req && delay <= task.delay_req
}

/// `T * alpha * beta * r_max - sum_t R(S_t)`.
pub fn approximate_regret(alpha: f64, beta: f64, r_max: f64, rewards: &[f64]) -> f64 {
    rewards.len() as f64 * alpha * beta * r_max - rewards.iter().sum::<f64>()
}

/// Incremental approximate regret. `R(S_t)` is the running time-averaged
/// reward after slot `t`; `R_max` is either fixed (oracle) or the best
/// running reward seen so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTracker {
    alpha: f64,
    beta: f64,
    oracle: Option<f64>,
    cost_sum: f64,
    reward_sum: f64,
    best: f64,
    trace: Vec<f64>,
    rewards: Vec<f64>,
}

impl RegretTracker {
    pub fn new(alpha: f64, beta: f64, oracle: Option<f64>) -> Self {
        Self {
            alpha,
            beta,
            oracle,
            cost_sum: 0.0,
            reward_sum: 0.0,
            best: f64::NEG_INFINITY,
            trace: Vec::new(),
            rewards: Vec::new(),
        }
    }

    /// Records one slot's cost; returns `(R(S_t), Reg(t))`.
    pub fn push(&mut self, slot_cost: f64) -> (f64, f64) {
        self.cost_sum += slot_cost;
        let t = self.rewards.len() + 1;
        let r = -self.cost_sum / t as f64;
        self.reward_sum += r;
        self.best = self.best.max(r);
        self.rewards.push(r);
        let r_max = self.oracle.unwrap_or(self.best);
        let reg = t as f64 * self.alpha * self.beta * r_max - self.reward_sum;
        self.trace.push(reg);
        (r, reg)
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn trace(&self) -> &[f64] {
        &self.trace
    }
}

/// Id of the single cloud server; also checks that at least one edge exists.
pub fn cloud_id(servers: &[ServerSpec]) -> Result<usize> {
    let clouds: Vec<usize> = servers.iter().filter(|s| s.tier == Tier::Cloud).map(|s| s.id).collect();
    if clouds.len() != 1 {
        return Err(SchedulerError::NoServer(format!(
            "expected one cloud server, found {}",
            clouds.len()
        )));
    }
    if !servers.iter().any(|s| s.tier == Tier::Edge) {
        return Err(SchedulerError::NoServer("no edge server".into()));
    }
    Ok(clouds[0])
}

/// Least-loaded edge server, lowest id on ties.
pub fn least_loaded_edge(servers: &[ServerSpec], load: &[usize]) -> Option<usize> {
    servers
        .iter()
        .filter(|s| s.tier == Tier::Edge)
        .min_by_key(|s| (load[s.id], s.id))
        .map(|s| s.id)
}

/// Bandwidth-preferring tasks go to the least-loaded edge (load counted as
/// tasks are placed, on top of `base_load`), compute-preferring ones to the
/// cloud. Tasks are placed in the given order.
pub fn initial_placement(
    slot: usize,
    tasks: &[Task],
    servers: &[ServerSpec],
    base_load: &[usize],
) -> Result<AllocationScheme> {
    let cloud = cloud_id(servers)?;
    let mut load = base_load.to_vec();
    load.resize(servers.len(), 0);
    let mut out = Vec::with_capacity(tasks.len());
    for t in tasks {
        let server = match t.predicted_pref {
            Some(Preference::ComputePreferring) => cloud,
            Some(Preference::BandwidthPreferring) => least_loaded_edge(servers, &load).expect("edge existence checked"),
            None => return Err(SchedulerError::MissingPreference(t.id)),
        };
        load[server] += 1;
        out.push(Assignment { task_id: t.id, server });
    }
    AllocationScheme::new(slot, out)
}

/// What a policy sees when placing one slot's arrivals.
#[derive(Debug, Clone, Copy)]
pub struct SlotContext<'a> {
    pub slot: usize,
    pub servers: &'a [ServerSpec],
    pub world: &'a WorldParams,
    /// Tasks already placed this slot (escalations), per server.
    pub base_load: &'a [usize],
}

/// Decision made after observing a slot.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Feedback {
    /// Tasks to re-run on the cloud in the next slot.
    pub escalate: Vec<usize>,
}

/// A placement policy driven slot by slot by the simulator.
pub trait Policy: Send {
    fn name(&self) -> String;

    /// Whether tasks must carry a predicted preference (and pay the
    /// prediction pre-processing delay).
    fn uses_predictor(&self) -> bool {
        false
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme>;

    /// Observes the slot. `tasks` covers every task in `scheme`.
    fn feedback(&mut self, _tasks: &[Task], _scheme: &AllocationScheme, _outcome: &SlotOutcome) -> Result<Feedback> {
        Ok(Feedback::default())
    }
}

/// Checks that `outcome` reports exactly the tasks of `scheme` on the same servers.
pub fn check_outcome(scheme: &AllocationScheme, outcome: &SlotOutcome) -> Result<()> {
    if scheme.len() != outcome.tasks.len() {
        return Err(SchedulerError::Mismatch(format!(
            "{} assignments vs {} outcomes",
            scheme.len(),
            outcome.tasks.len()
        )));
    }
    for o in &outcome.tasks {
        match scheme.server_of(o.task_id) {
            Some(s) if s == o.server => {}
            _ => {
                return Err(SchedulerError::Mismatch(format!(
                    "task {} outcome on server {} not in scheme",
                    o.task_id, o.server
                )))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ClusterConfig, DeploymentVersion};

    fn servers() -> Vec<ServerSpec> {
        ClusterConfig::default().build(DeploymentVersion::V1).unwrap()
    }

    fn task(id: usize, pref: Preference) -> Task {
        Task::new(id, 0, 0.4, 60.0, 0.3, 0.5).unwrap().with_preference(pref)
    }

    #[test]
    fn objective_examples() {
        let h = [SlotOutcome::totals(0, 10.0, 5.0)];
        assert_eq!(objective(&h, 1.0).unwrap(), 15.0);
        assert_eq!(reward(&h, 1.0).unwrap(), -15.0);
        let h = [SlotOutcome::totals(0, 4.0, 2.0), SlotOutcome::totals(1, 6.0, 4.0)];
        assert_eq!(objective(&h, 0.5).unwrap(), 6.5);
        assert_eq!(objective(&h, 0.0).unwrap(), 5.0);
        assert_eq!(objective(&[], 1.0), Err(SchedulerError::EmptyHistory));
        assert_eq!(reward(&[SlotOutcome::totals(0, 0.0, 0.0)], 1.0).unwrap(), 0.0);
    }

    #[test]
    fn feasibility_boundaries() {
        let mut t = Task::new(0, 0, 1.0, 60.0, 0.4, 0.0).unwrap();
        assert!(feasible(&t, 63.0, 0.3));
        assert!(feasible(&t, 60.0, 0.4));
        assert!(!feasible(&t, 55.0, 0.0));
        t.delay_req = 0.2;
        assert!(!feasible(&t, 90.0, 0.21));
    }

    #[test]
    fn regret_examples() {
        assert_eq!(approximate_regret(1.0, 1.0, -10.0, &[-10.0; 5]), 0.0);
        let r = approximate_regret(0.9, 0.9, -10.0, &[-10.0; 10]);
        assert!((r - 19.0).abs() < 1e-12);
    }

    #[test]
    fn tracker_with_optimal_play_has_zero_regret() {
        let mut tr = RegretTracker::new(1.0, 1.0, Some(-7.0));
        for _ in 0..50 {
            let (_, reg) = tr.push(7.0);
            assert_eq!(reg, 0.0);
        }
        let mut tr = RegretTracker::new(0.9, 0.9, None);
        tr.push(10.0);
        let (r, reg) = tr.push(20.0);
        assert_eq!(r, -15.0);
        // best running reward is -10; rewards -10, -15.
        assert!((reg - (2.0 * 0.81 * -10.0 + 25.0)).abs() < 1e-12);
    }

    #[test]
    fn task_validation() {
        assert!(Task::new(0, 0, 1.0, 101.0, 0.3, 0.0).is_err());
        assert!(Task::new(0, 0, 1.0, 60.0, 0.0, 0.0).is_err());
        assert!(Task::new(0, 0, 0.0, 60.0, 0.3, 0.0).is_err());
        assert!(Task::new(0, 0, 1.0, 60.0, 0.3, 1.5).is_err());
    }

    #[test]
    fn scheme_rejects_duplicates() {
        let a = Assignment { task_id: 1, server: 0 };
        assert!(AllocationScheme::new(0, vec![a, a]).is_err());
        let s = AllocationScheme::new(0, vec![a, Assignment { task_id: 2, server: 4 }]).unwrap();
        assert_eq!(s.loads(5), vec![1, 0, 0, 0, 1]);
        assert_eq!(s.server_of(2), Some(4));
    }

    #[test]
    fn initial_placement_examples() {
        let srv = servers();
        let cloud = cloud_id(&srv).unwrap();
        let s = initial_placement(0, &[task(0, Preference::BandwidthPreferring)], &srv, &[0; 5]).unwrap();
        assert_eq!(srv[s.server_of(0).unwrap()].tier, Tier::Edge);
        let s = initial_placement(0, &[task(0, Preference::ComputePreferring)], &srv, &[0; 5]).unwrap();
        assert_eq!(s.server_of(0), Some(cloud));
        let two = [
            task(0, Preference::BandwidthPreferring),
            task(1, Preference::BandwidthPreferring),
        ];
        let s = initial_placement(0, &two, &srv, &[0; 5]).unwrap();
        assert_eq!((s.server_of(0), s.server_of(1)), (Some(0), Some(1)));
        let s = initial_placement(0, &two, &srv, &[1, 0, 1, 1, 0]).unwrap();
        assert_eq!((s.server_of(0), s.server_of(1)), (Some(1), Some(0)));
    }

    #[test]
    fn initial_placement_errors() {
        let srv = servers();
        let no_pref = Task::new(3, 0, 1.0, 60.0, 0.3, 0.0).unwrap();
        assert_eq!(
            initial_placement(0, &[no_pref], &srv, &[0; 5]),
            Err(SchedulerError::MissingPreference(3))
        );
        let edges_only: Vec<ServerSpec> = srv.iter().filter(|s| s.tier == Tier::Edge).cloned().collect();
        assert!(matches!(
            initial_placement(0, &[task(0, Preference::ComputePreferring)], &edges_only, &[0; 4]),
            Err(SchedulerError::NoServer(_))
        ));
    }

    #[test]
    fn outcome_mismatch_detected() {
        let s = AllocationScheme::new(0, vec![Assignment { task_id: 1, server: 0 }]).unwrap();
        let mut o = SlotOutcome::totals(0, 0.0, 0.0);
        assert!(check_outcome(&s, &o).is_err());
        o.tasks.push(TaskOutcome {
            task_id: 1,
            server: 2,
            accuracy: 0.0,
            delay: 0.0,
            compute_tflop: 0.0,
            bandwidth_mbps: 0.0,
            energy_j: 0.0,
        });
        assert!(check_outcome(&s, &o).is_err());
        o.tasks[0].server = 0;
        assert!(check_outcome(&s, &o).is_ok());
    }
}
