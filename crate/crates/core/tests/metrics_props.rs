use cdio::metrics::{aggregate, compare, greedy_choice, myopic_estimate, RunReport, SlotRecord, Trace, TraceRow};
use cdio::scheduler::Task;
use cdio::simulator::{BandwidthMode, ClusterConfig, DeploymentVersion, Tier, WorldParams};
use proptest::prelude::*;

fn row(task_id: usize, slot: usize, acc: f64, req: f64, delay: f64, dreq: f64) -> TraceRow {
    TraceRow {
        slot,
        task_id,
        attempt: 0,
        server: task_id % 5,
        tier: if task_id % 5 == 4 { Tier::Cloud } else { Tier::Edge },
        predicted_pref: None,
        accuracy_req: req,
        delay_req: dreq,
        complexity: 0.5,
        accuracy: acc,
        delay_s: delay,
        feasible: acc >= req && delay <= dreq,
        final_attempt: true,
        compute_tflop: 1.0,
        bandwidth_mbps: 2.0,
        energy_j: 3.0,
    }
}

fn slot(slot: usize, u: f64, b: f64, e: f64) -> SlotRecord {
    SlotRecord {
        slot,
        tasks: 1,
        wan_mbps: 300.0,
        compute_tflop: u,
        bandwidth_mbps: b,
        energy_work_j: e,
        energy_idle_j: e / 2.0,
        energy_tx_j: e / 4.0,
        reward: -(u + b),
        regret: slot as f64,
    }
}

fn trace(rows: Vec<TraceRow>, slots: Vec<SlotRecord>) -> Trace {
    Trace {
        policy: "p".into(),
        version: DeploymentVersion::V2,
        bw_mode: BandwidthMode::Fluctuating,
        phi: 0.7,
        rows,
        slots,
    }
}

type RowSpec = (f64, f64, f64, f64);

fn rows_strategy() -> impl Strategy<Value = Vec<RowSpec>> {
    proptest::collection::vec((40.0f64..80.0, 50.0f64..80.0, 0.0f64..1.0, 0.1f64..1.0), 1..40)
}

fn slots_strategy() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    proptest::collection::vec((0.0f64..100.0, 0.0f64..50.0, 0.0f64..500.0), 1..10)
}

fn build(rows: &[RowSpec], slots: &[(f64, f64, f64)]) -> Trace {
    trace(
        rows.iter()
            .enumerate()
            .map(|(i, r)| row(i, i % slots.len(), r.0, r.1, r.2, r.3))
            .collect(),
        slots.iter().enumerate().map(|(i, s)| slot(i, s.0, s.1, s.2)).collect(),
    )
}

fn close(a: &RunReport, b: &RunReport) -> bool {
    let pairs = [
        (a.avg_accuracy, b.avg_accuracy),
        (a.acc_success_rate, b.acc_success_rate),
        (a.delay_success_rate, b.delay_success_rate),
        (a.avg_delay_ms, b.avg_delay_ms),
        (a.compute_tflop_total, b.compute_tflop_total),
        (a.bandwidth_mbps_avg, b.bandwidth_mbps_avg),
        (a.energy_j_total, b.energy_j_total),
        (a.objective, b.objective),
    ];
    pairs.iter().all(|(x, y)| (x - y).abs() <= 1e-9 * (1.0 + x.abs()))
}

proptest! {
    #[test]
    fn aggregate_is_permutation_invariant(
        rows in rows_strategy(),
        slots in slots_strategy(),
        rot in 0usize..40,
    ) {
        let t = build(&rows, &slots);
        let mut shuffled = t.clone();
        shuffled.rows.reverse();
        let k = rot % shuffled.rows.len();
        shuffled.rows.rotate_left(k);
        shuffled.slots.reverse();
        let (a, b) = (aggregate(&t).unwrap(), aggregate(&shuffled).unwrap());
        // Sorting before summation makes the result bit-identical.
        prop_assert_eq!(&a, &b);
        prop_assert!(close(&a, &b));
    }

    #[test]
    fn one_flip_moves_rates_by_one_over_n(rows in rows_strategy(), which in 0usize..40) {
        let slots = [(1.0, 1.0, 1.0)];
        let t = build(&rows, &slots);
        let n = t.rows.len() as f64;
        let i = which % t.rows.len();
        let mut flipped = t.clone();
        let r = &mut flipped.rows[i];
        r.accuracy = if r.accuracy >= r.accuracy_req { r.accuracy_req - 1.0 } else { r.accuracy_req };
        r.feasible = r.accuracy >= r.accuracy_req && r.delay_s <= r.delay_req;
        let (a, b) = (aggregate(&t).unwrap(), aggregate(&flipped).unwrap());
        prop_assert!(((a.acc_success_rate - b.acc_success_rate).abs() - 1.0 / n).abs() < 1e-12);
        prop_assert_eq!(a.delay_success_rate, b.delay_success_rate);
    }

    #[test]
    fn rates_and_totals_stay_in_range(rows in rows_strategy(), slots in slots_strategy()) {
        let r = aggregate(&build(&rows, &slots)).unwrap();
        for rate in [r.acc_success_rate, r.delay_success_rate, r.success_rate] {
            prop_assert!((0.0..=1.0).contains(&rate));
        }
        prop_assert!(r.success_rate <= r.acc_success_rate.min(r.delay_success_rate));
        prop_assert!((0.0..=100.0).contains(&r.avg_accuracy));
        prop_assert!(r.compute_tflop_total >= 0.0 && r.energy_j_total >= 0.0);
    }

    #[test]
    fn energy_components_are_conserved(rows in rows_strategy(), slots in slots_strategy()) {
        let r = aggregate(&build(&rows, &slots)).unwrap();
        let parts = r.energy_work_j + r.energy_idle_j + r.energy_tx_j;
        prop_assert!((r.energy_j_total - parts).abs() <= 1e-9 * (1.0 + parts));
        let by_slot: f64 = slots.iter().map(|s| s.2 * 1.75).sum();
        prop_assert!((r.energy_j_total - by_slot).abs() <= 1e-9 * (1.0 + by_slot));
    }

    #[test]
    fn deltas_are_antisymmetric(
        a_rows in rows_strategy(),
        b_rows in rows_strategy(),
        a_slots in slots_strategy(),
        b_slots in slots_strategy(),
    ) {
        let mut a = aggregate(&build(&a_rows, &a_slots)).unwrap();
        let mut b = aggregate(&build(&b_rows, &b_slots)).unwrap();
        a.policy = "a".into();
        b.policy = "b".into();
        let ab = compare(&[a.clone(), b.clone()], "b").unwrap();
        let ba = compare(&[b, a], "a").unwrap();
        let d_ab = ab.deltas.iter().find(|d| d.policy == "a").unwrap();
        let d_ba = ba.deltas.iter().find(|d| d.policy == "b").unwrap();
        for i in 0..7 {
            prop_assert_eq!(d_ab.diff[i], -d_ba.diff[i]);
        }
    }

    #[test]
    fn greedy_matches_exhaustive_per_task_search(
        size in 0.05f64..1.5,
        acc_req in 50.0f64..80.0,
        delay_req in 0.05f64..1.0,
        load in proptest::collection::vec(0usize..6, 5),
        phi in 0.0f64..4.0,
        version in 0usize..4,
    ) {
        let v = DeploymentVersion::ALL[version];
        let servers = ClusterConfig::default().build(v).unwrap();
        let world = WorldParams::default();
        let task = Task::new(0, 0, size, acc_req, delay_req, 0.3).unwrap();
        // Rank every server by (infeasible, cost, id) and take the first.
        let best = servers
            .iter()
            .map(|s| {
                let e = myopic_estimate(&task, s, load[s.id], &world);
                (!e.feasible(&task), e.cost(phi), s.id)
            })
            .min_by(|x, y| x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)))
            .unwrap()
            .2;
        prop_assert_eq!(greedy_choice(&task, &servers, &load, &world, phi), best);
    }
}
