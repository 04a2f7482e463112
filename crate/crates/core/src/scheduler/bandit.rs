//! Combinatorial UCB over (task class, server) base arms.
//!
//! A super arm is one server per task. Each task is scored independently from
//! the statistics of its class: the lower confidence bound of the mean
//! per-task cost, restricted to servers whose empirical feasibility rate
//! clears a threshold (all played servers when none does). Unplayed arms are
//! tried before any scoring.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    check_outcome, cloud_id, feasible, initial_placement, least_loaded_edge, AllocationScheme, Assignment, Feedback,
    Policy, RegretTracker, Result, SchedulerError, SlotContext, SlotOutcome, Task,
};
use crate::predictor::Preference;
use crate::simulator::{ServerSpec, Tier, WorldParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditConfig {
    /// Weight of bandwidth against compute in the slot cost.
    #[serde(default = "one")]
    pub phi: f64,
    #[serde(default = "point_nine")]
    pub alpha: f64,
    #[serde(default = "point_nine")]
    pub beta: f64,
    /// Numerator constant of the confidence radius `sqrt(c ln T / n)`.
    #[serde(default = "exploration")]
    pub exploration: f64,
    /// Minimum empirical feasibility rate for a played server to be considered.
    #[serde(default = "half")]
    pub feasibility_threshold: f64,
}

fn one() -> f64 {
    1.0
}
fn point_nine() -> f64 {
    0.9
}
fn exploration() -> f64 {
    1.5
}
fn half() -> f64 {
    0.5
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            phi: one(),
            alpha: point_nine(),
            beta: point_nine(),
            exploration: exploration(),
            feasibility_threshold: half(),
        }
    }
}

impl BanditConfig {
    /// `alpha` and `beta` must lie in `(0, 1]`; 1 is allowed for exact-regret checks.
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.alpha) || !unit(self.beta) {
            return Err(SchedulerError::InvalidConfig(format!(
                "alpha {} and beta {} must lie in (0, 1]",
                self.alpha, self.beta
            )));
        }
        if !(self.phi >= 0.0 && self.phi.is_finite()) {
            return Err(SchedulerError::InvalidConfig(format!(
                "phi {} must be non-negative",
                self.phi
            )));
        }
        if !(self.exploration >= 0.0) || !(0.0..=1.0).contains(&self.feasibility_threshold) {
            return Err(SchedulerError::InvalidConfig(
                "exploration must be >= 0 and feasibility_threshold in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub plays: u64,
    pub mean_cost: f64,
    pub feasible_rate: f64,
}

pub type ArmKey = (u32, usize);

/// One task's request to the selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassRequest {
    pub task_id: usize,
    pub class: u32,
    /// Tier of the preference-guided arm: the least-loaded edge or the cloud.
    pub preferred: Option<Tier>,
}

/// How unplayed arms without a preferred tier are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColdStart {
    LowestId,
    Random,
}

#[derive(Debug, Clone)]
pub struct BanditState {
    config: BanditConfig,
    arms: BTreeMap<ArmKey, ArmStats>,
    rounds: u64,
    cost_scale: f64,
    regret: RegretTracker,
}

impl BanditState {
    pub fn new(config: BanditConfig) -> Result<Self> {
        Self::with_oracle(config, None)
    }

    /// Regret is measured against `r_max` instead of the best running reward.
    pub fn with_oracle(config: BanditConfig, r_max: Option<f64>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            arms: BTreeMap::new(),
            rounds: 0,
            cost_scale: 0.0,
            regret: RegretTracker::new(config.alpha, config.beta, r_max),
        })
    }

    pub fn config(&self) -> &BanditConfig {
        &self.config
    }

    pub fn arm(&self, class: u32, server: usize) -> ArmStats {
        self.arms.get(&(class, server)).copied().unwrap_or_default()
    }

    pub fn arms(&self) -> impl Iterator<Item = (&ArmKey, &ArmStats)> {
        self.arms.iter()
    }

    /// Completed rounds.
    pub fn rounds(&self) -> u64 {
        self.rounds
    }

    pub fn regret(&self) -> &RegretTracker {
        &self.regret
    }

    fn radius(&self, plays: u64) -> f64 {
        let t = (self.rounds + 1) as f64;
        (self.config.exploration * t.ln() / plays as f64).sqrt()
    }

    /// Lower and upper confidence bounds on the mean cost of a played arm.
    pub fn cost_bounds(&self, class: u32, server: usize) -> Option<(f64, f64)> {
        let a = self.arm(class, server);
        if a.plays == 0 {
            return None;
        }
        let w = self.cost_scale * self.radius(a.plays);
        Some((a.mean_cost - w, a.mean_cost + w))
    }

    #[allow(clippy::too_many_arguments)]
    fn choose(
        &self,
        req: &ClassRequest,
        tiers: &[Tier],
        load: &[usize],
        claimed: &mut BTreeSet<ArmKey>,
        cold: ColdStart,
        rng: &mut ChaCha8Rng,
    ) -> usize {
        let class = req.class;
        let servers: Vec<usize> = (0..tiers.len()).collect();
        let preferred = match req.preferred {
            Some(Tier::Cloud) => tiers.iter().position(|t| *t == Tier::Cloud),
            Some(Tier::Edge) => servers
                .iter()
                .filter(|&&s| tiers[s] == Tier::Edge)
                .min_by_key(|&&s| (load[s], s))
                .copied(),
            None => None,
        };
        if let Some(p) = preferred {
            if self.arm(class, p).plays == 0 {
                claimed.insert((class, p));
                return p;
            }
        }
        let unplayed: Vec<usize> = servers
            .iter()
            .copied()
            .filter(|&s| self.arm(class, s).plays == 0)
            .collect();
        let fresh: Vec<usize> = unplayed
            .iter()
            .copied()
            .filter(|&s| !claimed.contains(&(class, s)))
            .collect();
        let pick_cold = |pool: &[usize], rng: &mut ChaCha8Rng| match cold {
            ColdStart::LowestId => pool[0],
            ColdStart::Random => *pool.choose(rng).expect("non-empty pool"),
        };
        if !fresh.is_empty() {
            let s = pick_cold(&fresh, rng);
            claimed.insert((class, s));
            return s;
        }
        let played: Vec<usize> = servers
            .iter()
            .copied()
            .filter(|&s| self.arm(class, s).plays > 0)
            .collect();
        if played.is_empty() {
            return pick_cold(&unplayed, rng);
        }

        let scored: Vec<(usize, f64, f64, f64)> = played
            .iter()
            .map(|&s| {
                let a = self.arm(class, s);
                let r = self.radius(a.plays);
                let w = self.cost_scale * r;
                (s, a.mean_cost - w, a.mean_cost + w, a.feasible_rate)
            })
            .collect();
        let screened: Vec<_> = scored
            .iter()
            .copied()
            .filter(|x| x.3 >= self.config.feasibility_threshold)
            .collect();
        let pool = if screened.is_empty() { scored } else { screened };
        let best = pool
            .iter()
            .copied()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("non-empty pool");
        pool.iter()
            .filter(|x| tiers[x.0] == tiers[best.0] && x.1 <= best.2)
            .min_by_key(|x| (load[x.0], x.0))
            .map(|x| x.0)
            .expect("best is in its own equivalence set")
    }

    /// One server per request, in request order. `base_load` counts tasks
    /// already placed this slot; placements made here add to it.
    pub fn select_super_arm(
        &self,
        slot: usize,
        requests: &[ClassRequest],
        tiers: &[Tier],
        base_load: &[usize],
        cold: ColdStart,
        rng: &mut ChaCha8Rng,
    ) -> Result<AllocationScheme> {
        if tiers.is_empty() {
            return Err(SchedulerError::NoServer("empty server set".into()));
        }
        let mut load = base_load.to_vec();
        load.resize(tiers.len(), 0);
        let mut claimed = BTreeSet::new();
        let mut out = Vec::with_capacity(requests.len());
        for req in requests {
            let s = self.choose(req, tiers, &load, &mut claimed, cold, rng);
            load[s] += 1;
            out.push(Assignment {
                task_id: req.task_id,
                server: s,
            });
        }
        AllocationScheme::new(slot, out)
    }

    /// Records one per-task observation on a base arm.
    pub fn update(&mut self, class: u32, server: usize, cost: f64, was_feasible: bool) {
        let a = self.arms.entry((class, server)).or_default();
        a.plays += 1;
        let n = a.plays as f64;
        a.mean_cost += (cost - a.mean_cost) / n;
        a.feasible_rate += (f64::from(u8::from(was_feasible)) - a.feasible_rate) / n;
        self.cost_scale = self.cost_scale.max(cost.abs());
    }

    /// Closes a round with its slot cost; returns `(R(S_t), Reg(T))`.
    pub fn end_round(&mut self, slot_cost: f64) -> (f64, f64) {
        self.rounds += 1;
        self.regret.push(slot_cost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Preference-guided initial placement only.
    Rpp,
    /// Bandit allocation without preference prediction.
    Cdco,
    /// Prediction, bandit allocation and escalation.
    Both,
}

impl Ablation {
    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::Rpp => "rpp",
            Ablation::Cdco => "cdco",
            Ablation::Both => "both",
        }
    }
}

/// Class id from (preference, complexity tercile, delay tercile). Tasks with
/// no preference get their own block of nine classes.
pub fn class_id(pref: Option<Preference>, complexity_tercile: u32, delay_tercile: u32) -> u32 {
    let p = match pref {
        Some(Preference::BandwidthPreferring) => 0,
        Some(Preference::ComputePreferring) => 1,
        None => 2,
    };
    p * 9 + complexity_tercile.min(2) * 3 + delay_tercile.min(2)
}

fn tercile(value: f64, lo: f64, hi: f64) -> u32 {
    if hi <= lo {
        return 0;
    }
    let f = (value - lo) / (hi - lo);
    if f < 1.0 / 3.0 {
        0
    } else if f < 2.0 / 3.0 {
        1
    } else {
        2
    }
}

/// The bandit-driven policy: `Both` uses predicted preferences for class
/// membership and cold start, `Cdco` ignores them and starts at random.
/// Infeasible edge tasks that the cloud could fix are escalated; the retry's cost
/// is charged to the edge arm that was first chosen.
#[derive(Debug, Clone)]
pub struct CdioPolicy {
    state: BanditState,
    ablation: Ablation,
    tiers: Vec<Tier>,
    map50: Vec<f64>,
    cloud: usize,
    delay_range: (f64, f64),
    count_failed_slot: bool,
    rng: ChaCha8Rng,
    /// Escalated tasks whose arm update waits for the retry: task id to
    /// (class, first server, first-attempt cost).
    awaiting: HashMap<usize, (u32, usize, f64)>,
}

impl CdioPolicy {
    pub fn new(
        config: BanditConfig,
        ablation: Ablation,
        servers: &[ServerSpec],
        world: &WorldParams,
        delay_range: (f64, f64),
        seed: u64,
    ) -> Result<Self> {
        if ablation == Ablation::Rpp {
            return Err(SchedulerError::InvalidConfig(
                "the rpp ablation has no bandit; use RppPolicy".into(),
            ));
        }
        let cloud = cloud_id(servers)?;
        Ok(Self {
            state: BanditState::new(config)?,
            ablation,
            tiers: servers.iter().map(|s| s.tier).collect(),
            map50: servers.iter().map(|s| s.model.map50).collect(),
            cloud,
            delay_range,
            count_failed_slot: world.count_failed_slot,
            rng: ChaCha8Rng::seed_from_u64(seed),
            awaiting: HashMap::new(),
        })
    }

    pub fn state(&self) -> &BanditState {
        &self.state
    }

    fn pref(&self, task: &Task) -> Option<Preference> {
        match self.ablation {
            Ablation::Both => task.predicted_pref,
            _ => None,
        }
    }

    pub fn class_of(&self, task: &Task) -> u32 {
        class_id(
            self.pref(task),
            tercile(task.complexity, 0.0, 1.0),
            tercile(task.delay_req, self.delay_range.0, self.delay_range.1),
        )
    }

    /// Whether re-running an infeasible edge result on the cloud can help.
    fn escalatable(&self, task: &Task, server: usize, accuracy: f64, delay: f64) -> bool {
        if self.tiers[server] != Tier::Edge || feasible(task, accuracy, delay) {
            return false;
        }
        let gain = self.map50[self.cloud] - self.map50[server];
        let accuracy_fixable = accuracy + gain >= task.accuracy_req;
        let delay_fixable = !self.count_failed_slot || delay < task.delay_req;
        accuracy_fixable && delay_fixable
    }
}

impl Policy for CdioPolicy {
    fn name(&self) -> String {
        match self.ablation {
            Ablation::Both => "cdio".into(),
            other => format!("cdio_{}", other.as_str()),
        }
    }

    fn uses_predictor(&self) -> bool {
        self.ablation == Ablation::Both
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        let mut requests = Vec::with_capacity(tasks.len());
        for t in tasks {
            let preferred = match self.pref(t) {
                Some(Preference::ComputePreferring) => Some(Tier::Cloud),
                Some(Preference::BandwidthPreferring) => Some(Tier::Edge),
                None if self.ablation == Ablation::Both => return Err(SchedulerError::MissingPreference(t.id)),
                None => None,
            };
            requests.push(ClassRequest {
                task_id: t.id,
                class: self.class_of(t),
                preferred,
            });
        }
        let cold = if self.ablation == Ablation::Both {
            ColdStart::LowestId
        } else {
            ColdStart::Random
        };
        self.state
            .select_super_arm(ctx.slot, &requests, &self.tiers, ctx.base_load, cold, &mut self.rng)
    }

    fn feedback(&mut self, tasks: &[Task], scheme: &AllocationScheme, outcome: &SlotOutcome) -> Result<Feedback> {
        check_outcome(scheme, outcome)?;
        let by_id: HashMap<usize, &Task> = tasks.iter().map(|t| (t.id, t)).collect();
        let phi = self.state.config.phi;
        let mut escalate = Vec::new();
        for o in &outcome.tasks {
            let task = by_id
                .get(&o.task_id)
                .ok_or_else(|| SchedulerError::Mismatch(format!("unknown task {}", o.task_id)))?;
            let cost = o.compute_tflop + phi * o.bandwidth_mbps;
            if let Some((class, server, first)) = self.awaiting.remove(&o.task_id) {
                // The retry's cost belongs to the arm that needed rescuing.
                self.state.update(class, server, first + cost, false);
            } else if self.escalatable(task, o.server, o.accuracy, o.delay) {
                self.awaiting.insert(o.task_id, (self.class_of(task), o.server, cost));
                escalate.push(o.task_id);
            } else {
                self.state
                    .update(self.class_of(task), o.server, cost, feasible(task, o.accuracy, o.delay));
            }
        }
        self.state.end_round(outcome.cost(phi));
        escalate.sort_unstable();
        Ok(Feedback { escalate })
    }
}

/// Preference-guided placement with no learning and no escalation.
#[derive(Debug, Clone, Default)]
pub struct RppPolicy;

impl Policy for RppPolicy {
    fn name(&self) -> String {
        "cdio_rpp".into()
    }

    fn uses_predictor(&self) -> bool {
        true
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        initial_placement(ctx.slot, tasks, ctx.servers, ctx.base_load)
    }
}

/// Least-loaded edge given `load`; exposed for policies that mirror the
/// initial placement rule.
pub fn preferred_server(servers: &[ServerSpec], load: &[usize], pref: Preference) -> Result<usize> {
    match pref {
        Preference::ComputePreferring => cloud_id(servers),
        Preference::BandwidthPreferring => {
            least_loaded_edge(servers, load).ok_or_else(|| SchedulerError::NoServer("no edge server".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{ClusterConfig, DeploymentVersion};

    fn tiers2() -> Vec<Tier> {
        vec![Tier::Edge, Tier::Cloud]
    }

    #[test]
    fn dominated_arm_is_not_selected() {
        let mut st = BanditState::new(BanditConfig::default()).unwrap();
        for _ in 0..200 {
            st.update(0, 0, 5.0, true);
            st.update(0, 1, 50.0, true);
            st.end_round(55.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let req = [ClassRequest {
            task_id: 0,
            class: 0,
            preferred: None,
        }];
        let s = st
            .select_super_arm(0, &req, &tiers2(), &[0, 0], ColdStart::LowestId, &mut rng)
            .unwrap();
        assert_eq!(s.server_of(0), Some(0));
    }

    #[test]
    fn infeasible_cheap_arm_is_screened_out() {
        let mut st = BanditState::new(BanditConfig::default()).unwrap();
        for _ in 0..500 {
            st.update(0, 0, 1.0, false);
            st.update(0, 1, 4.0, true);
            st.end_round(5.0);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let req = [ClassRequest {
            task_id: 0,
            class: 0,
            preferred: None,
        }];
        let s = st
            .select_super_arm(0, &req, &tiers2(), &[0, 0], ColdStart::LowestId, &mut rng)
            .unwrap();
        assert_eq!(s.server_of(0), Some(1));
    }

    #[test]
    fn unplayed_arms_are_explored_once_per_round() {
        let st = BanditState::new(BanditConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let reqs: Vec<ClassRequest> = (0..3)
            .map(|i| ClassRequest {
                task_id: i,
                class: 7,
                preferred: None,
            })
            .collect();
        let s = st
            .select_super_arm(
                0,
                &reqs,
                &[Tier::Edge, Tier::Edge, Tier::Cloud],
                &[0; 3],
                ColdStart::LowestId,
                &mut rng,
            )
            .unwrap();
        assert_eq!(
            s.assignments().iter().map(|a| a.server).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn updates_track_means() {
        let mut st = BanditState::new(BanditConfig::default()).unwrap();
        st.update(3, 1, 2.0, true);
        st.update(3, 1, 4.0, false);
        let a = st.arm(3, 1);
        assert_eq!(a.plays, 2);
        assert_eq!(a.mean_cost, 3.0);
        assert_eq!(a.feasible_rate, 0.5);
        assert_eq!(st.arm(3, 0).plays, 0);
    }

    #[test]
    fn config_validation() {
        let bad = BanditConfig {
            alpha: 0.0,
            ..BanditConfig::default()
        };
        assert!(BanditState::new(bad).is_err());
        let bad = BanditConfig {
            beta: 1.2,
            ..BanditConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<BanditConfig>("{\"gamma\": 1}").is_err());
        assert_eq!(
            serde_json::from_str::<BanditConfig>("{}").unwrap(),
            BanditConfig::default()
        );
    }

    #[test]
    fn class_ids_are_distinct() {
        let mut seen = BTreeSet::new();
        for p in [
            None,
            Some(Preference::BandwidthPreferring),
            Some(Preference::ComputePreferring),
        ] {
            for c in 0..3 {
                for d in 0..3 {
                    assert!(seen.insert(class_id(p, c, d)));
                }
            }
        }
        assert_eq!(seen.len(), 27);
        assert_eq!(tercile(0.2, 0.2, 0.6), 0);
        assert_eq!(tercile(0.45, 0.2, 0.6), 1);
        assert_eq!(tercile(0.6, 0.2, 0.6), 2);
    }

    #[test]
    fn cold_start_matches_initial_placement() {
        let servers = ClusterConfig::default().build(DeploymentVersion::V1).unwrap();
        let world = WorldParams::default();
        let mut p = CdioPolicy::new(BanditConfig::default(), Ablation::Both, &servers, &world, (0.2, 0.6), 1).unwrap();
        let tasks: Vec<Task> = (0..12)
            .map(|i| {
                let pref = if i % 3 == 0 {
                    Preference::ComputePreferring
                } else {
                    Preference::BandwidthPreferring
                };
                Task::new(i, 0, 0.4, 60.0, 0.2 + 0.03 * i as f64, (i as f64 / 12.0).min(1.0))
                    .unwrap()
                    .with_preference(pref)
            })
            .collect();
        let ctx = SlotContext {
            slot: 0,
            servers: &servers,
            world: &world,
            base_load: &[0; 5],
        };
        let chosen = p.select(&ctx, &tasks).unwrap();
        let expected = initial_placement(0, &tasks, &servers, &[0; 5]).unwrap();
        assert_eq!(chosen, expected);
    }

    #[test]
    fn rpp_ablation_is_rejected_by_bandit_policy() {
        let servers = ClusterConfig::default().build(DeploymentVersion::V1).unwrap();
        assert!(CdioPolicy::new(
            BanditConfig::default(),
            Ablation::Rpp,
            &servers,
            &WorldParams::default(),
            (0.2, 0.6),
            0
        )
        .is_err());
    }
}
