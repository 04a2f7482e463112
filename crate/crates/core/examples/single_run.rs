//! One simulation of the full policy on the default cluster, written out as
//! trace CSVs and a JSON report.

use cdio::cli::{cmd_run, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.workload.n_tasks = 3000;
    cfg.predictor.train_tasks = 2000;
    cfg.predictor.training.epochs = 15;
    cfg.out_dir = std::env::temp_dir().join("cdio-single-run");
    let r = cmd_run(&cfg)?;
    println!("policy {} on {} / {}", r.policy, r.version.as_str(), r.bw_mode.as_str());
    println!("tasks {} over {} slots, {} retries", r.n_tasks, r.n_slots, r.retries);
    println!(
        "accuracy success {:.3}, delay success {:.3}",
        r.acc_success_rate, r.delay_success_rate
    );
    println!("mean mAP {:.2}, mean delay {:.1} ms", r.avg_accuracy, r.avg_delay_ms);
    println!(
        "compute {:.1} TFLOP, bandwidth {:.2} Mbps per slot, energy {:.0} J (work {:.0}, idle {:.0}, tx {:.0})",
        r.compute_tflop_total, r.bandwidth_mbps_avg, r.energy_j_total, r.energy_work_j, r.energy_idle_j, r.energy_tx_j
    );
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}
