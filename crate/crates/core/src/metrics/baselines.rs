//! Non-learning reference policies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::scheduler::{cloud_id, AllocationScheme, Assignment, Policy, Result, SlotContext, Task};
use crate::simulator::{inference_delay, link_share_mbps, ServerSpec, Tier, WorldParams};

/// Every task on the cloud.
#[derive(Debug, Clone, Default)]
pub struct AllCloud;

impl Policy for AllCloud {
    fn name(&self) -> String {
        "all_cloud".into()
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        let cloud = cloud_id(ctx.servers)?;
        AllocationScheme::new(
            ctx.slot,
            tasks
                .iter()
                .map(|t| Assignment {
                    task_id: t.id,
                    server: cloud,
                })
                .collect(),
        )
    }
}

/// Edge servers in turn, restarting at the lowest id each slot.
#[derive(Debug, Clone, Default)]
pub struct AllEdge;

impl Policy for AllEdge {
    fn name(&self) -> String {
        "all_edge".into()
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        cloud_id(ctx.servers)?;
        let edges: Vec<usize> = ctx
            .servers
            .iter()
            .filter(|s| s.tier == Tier::Edge)
            .map(|s| s.id)
            .collect();
        AllocationScheme::new(
            ctx.slot,
            tasks
                .iter()
                .enumerate()
                .map(|(i, t)| Assignment {
                    task_id: t.id,
                    server: edges[i % edges.len()],
                })
                .collect(),
        )
    }
}

/// Uniformly random server per task.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomPolicy {
    fn name(&self) -> String {
        "random".into()
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        cloud_id(ctx.servers)?;
        let n = ctx.servers.len();
        AllocationScheme::new(
            ctx.slot,
            tasks
                .iter()
                .map(|t| Assignment {
                    task_id: t.id,
                    server: self.rng.gen_range(0..n),
                })
                .collect(),
        )
    }
}

/// What a task would see on a server already holding `load` other tasks,
/// at the nominal WAN bandwidth and with no complexity penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MyopicEstimate {
    pub delay_s: f64,
    pub compute_tflop: f64,
    pub bandwidth_mbps: f64,
    pub accuracy: f64,
}

impl MyopicEstimate {
    pub fn cost(&self, phi: f64) -> f64 {
        self.compute_tflop + phi * self.bandwidth_mbps
    }

    pub fn feasible(&self, task: &Task) -> bool {
        self.accuracy >= task.accuracy_req && self.delay_s <= task.delay_req
    }
}

pub fn myopic_estimate(task: &Task, server: &ServerSpec, load: usize, world: &WorldParams) -> MyopicEstimate {
    let n = load + 1;
    let inf = inference_delay(server, n);
    let link = link_share_mbps(server, n, world.bandwidth.base_mbps, world);
    MyopicEstimate {
        delay_s: task.data_size / link + inf,
        compute_tflop: server.fp16_tflops * inf,
        bandwidth_mbps: match server.tier {
            Tier::Cloud => task.data_size / world.slot_len_s,
            Tier::Edge => 0.0,
        },
        accuracy: server.model.map50,
    }
}

/// Cheapest server whose estimate meets both requirements, else the
/// cheapest server. Ties go to the lowest id.
pub fn greedy_choice(task: &Task, servers: &[ServerSpec], load: &[usize], world: &WorldParams, phi: f64) -> usize {
    let est: Vec<(usize, MyopicEstimate)> = servers
        .iter()
        .map(|s| (s.id, myopic_estimate(task, s, load[s.id], world)))
        .collect();
    let cheapest = |it: &mut dyn Iterator<Item = &(usize, MyopicEstimate)>| {
        it.min_by(|a, b| a.1.cost(phi).total_cmp(&b.1.cost(phi)).then(a.0.cmp(&b.0)))
            .map(|x| x.0)
    };
    cheapest(&mut est.iter().filter(|(_, e)| e.feasible(task)))
        .or_else(|| cheapest(&mut est.iter()))
        .expect("at least one server")
}

/// Tasks in arrival order, each to the myopically cheapest feasible server
/// given the load placed so far in the slot.
#[derive(Debug, Clone)]
pub struct GreedyLeastCost {
    pub phi: f64,
}

impl Policy for GreedyLeastCost {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn select(&mut self, ctx: &SlotContext<'_>, tasks: &[Task]) -> Result<AllocationScheme> {
        cloud_id(ctx.servers)?;
        let mut load = ctx.base_load.to_vec();
        load.resize(ctx.servers.len(), 0);
        let mut out = Vec::with_capacity(tasks.len());
        for t in tasks {
            let s = greedy_choice(t, ctx.servers, &load, ctx.world, self.phi);
            load[s] += 1;
            out.push(Assignment {
                task_id: t.id,
                server: s,
            });
        }
        AllocationScheme::new(ctx.slot, out)
    }
}

/// All-edge, all-cloud, random and greedy, in that order.
pub fn baseline_policies(seed: u64, phi: f64) -> Vec<Box<dyn Policy>> {
    vec![
        Box::new(AllEdge),
        Box::new(AllCloud),
        Box::new(RandomPolicy::new(seed)),
        Box::new(GreedyLeastCost { phi }),
    ]
}
