//! The bandit on a stationary three-task, two-server instance, checked
//! against exhaustive enumeration of all eight schemes.

use cdio::scheduler::{run_stationary, BanditConfig, StationaryInstance};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = StationaryInstance::three_by_two();
    let threshold = BanditConfig::default().feasibility_threshold;
    let mut best = (vec![], f64::INFINITY);
    for code in 0..8usize {
        let scheme: Vec<usize> = (0..3).map(|t| (code >> t) & 1).collect();
        let ok = scheme
            .iter()
            .enumerate()
            .all(|(t, &s)| inst.arms[t][s].p_feasible >= threshold);
        let cost = inst.expected_cost(&scheme);
        println!(
            "scheme {scheme:?}: expected cost {cost:.1}{}",
            if ok { "" } else { "  (infeasible)" }
        );
        if ok && cost < best.1 {
            best = (scheme, cost);
        }
    }
    println!("optimum {:?} at {:.1}", best.0, best.1);

    let run = run_stationary(&inst, BanditConfig::default(), Some(-best.1), 2000, 3)?;
    for window in [0..100, 100..500, 500..1000, 1000..2000] {
        let n = window.len() as f64;
        let mean = run.expected_costs[window.clone()].iter().sum::<f64>() / n;
        println!(
            "rounds {:>4}..{:<4}: mean expected cost {mean:.3}",
            window.start, window.end
        );
    }
    println!(
        "final scheme {:?}, Reg(T)/T {:.4}",
        run.schemes.last().unwrap(),
        run.regret[1999] / 2000.0
    );
    Ok(())
}
