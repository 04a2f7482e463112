//! Stationary synthetic instances for checking the bandit in isolation:
//! every task is its own class, and each (task, server) arm has a fixed mean
//! cost with bounded uniform noise and a fixed feasibility probability.

use rand::Rng;

use super::bandit::{BanditConfig, BanditState, ClassRequest, ColdStart};
use super::{Result, SchedulerError};
use crate::rng::stream;
use crate::simulator::Tier;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmSpec {
    pub mean_cost: f64,
    pub p_feasible: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryInstance {
    pub tiers: Vec<Tier>,
    /// `arms[task][server]`.
    pub arms: Vec<Vec<ArmSpec>>,
    /// Half-width of the uniform cost noise.
    pub noise: f64,
}

impl StationaryInstance {
    /// Three tasks on one edge and one cloud server. Task 1's edge arm is
    /// cheap but rarely feasible, so the cheapest feasible scheme costs 7.
    pub fn three_by_two() -> Self {
        let arm = |mean_cost, p_feasible| ArmSpec { mean_cost, p_feasible };
        Self {
            tiers: vec![Tier::Edge, Tier::Cloud],
            arms: vec![
                vec![arm(1.0, 0.9), arm(3.0, 0.95)],
                vec![arm(1.0, 0.1), arm(4.0, 0.9)],
                vec![arm(2.0, 0.9), arm(3.0, 0.9)],
            ],
            noise: 0.5,
        }
    }

    pub fn tasks(&self) -> usize {
        self.arms.len()
    }

    /// Expected slot cost of a scheme given as one server per task.
    pub fn expected_cost(&self, scheme: &[usize]) -> f64 {
        scheme.iter().enumerate().map(|(t, &s)| self.arms[t][s].mean_cost).sum()
    }

    fn validate(&self) -> Result<()> {
        let n = self.tiers.len();
        let ok = n > 0
            && !self.arms.is_empty()
            && self.noise >= 0.0
            && self.arms.iter().all(|row| {
                row.len() == n
                    && row
                        .iter()
                        .all(|a| a.mean_cost.is_finite() && (0.0..=1.0).contains(&a.p_feasible))
            });
        if ok {
            Ok(())
        } else {
            Err(SchedulerError::InvalidConfig("malformed stationary instance".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryRun {
    /// Chosen scheme per round.
    pub schemes: Vec<Vec<usize>>,
    /// Expected cost of each round's scheme.
    pub expected_costs: Vec<f64>,
    /// `Reg(t)` after each round.
    pub regret: Vec<f64>,
}

/// Plays the bandit for `rounds` rounds with noisy per-task feedback. Regret
/// uses `r_max` when given, otherwise the best running reward.
pub fn run_stationary(
    instance: &StationaryInstance,
    config: BanditConfig,
    r_max: Option<f64>,
    rounds: usize,
    seed: u64,
) -> Result<StationaryRun> {
    instance.validate()?;
    let mut state = BanditState::with_oracle(config, r_max)?;
    let mut select_rng = stream(seed, "stationary/select");
    let mut env_rng = stream(seed, "stationary/env");
    let requests: Vec<ClassRequest> = (0..instance.tasks())
        .map(|t| ClassRequest {
            task_id: t,
            class: t as u32,
            preferred: None,
        })
        .collect();
    let zero_load = vec![0; instance.tiers.len()];
    let mut run = StationaryRun {
        schemes: Vec::with_capacity(rounds),
        expected_costs: Vec::with_capacity(rounds),
        regret: Vec::with_capacity(rounds),
    };
    for round in 0..rounds {
        let scheme = state.select_super_arm(
            round,
            &requests,
            &instance.tiers,
            &zero_load,
            ColdStart::LowestId,
            &mut select_rng,
        )?;
        let servers: Vec<usize> = (0..instance.tasks())
            .map(|t| scheme.server_of(t).expect("one per task"))
            .collect();
        let mut slot_cost = 0.0;
        for (t, &s) in servers.iter().enumerate() {
            let arm = instance.arms[t][s];
            let cost = arm.mean_cost + instance.noise * env_rng.gen_range(-1.0..=1.0);
            let ok = env_rng.gen_bool(arm.p_feasible);
            state.update(t as u32, s, cost, ok);
            slot_cost += cost;
        }
        let (_, reg) = state.end_round(slot_cost);
        run.expected_costs.push(instance.expected_cost(&servers));
        run.schemes.push(servers);
        run.regret.push(reg);
    }
    Ok(run)
}
