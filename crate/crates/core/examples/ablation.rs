//! Preference prediction alone, bandit allocation alone, and both together
//! on the same workload.

use cdio::cli::{run_once, train_predictor, RunConfig};
use cdio::metrics::aggregate;
use cdio::scheduler::Ablation;
use cdio::simulator::{BandwidthMode, DeploymentVersion};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.workload.n_tasks = 4000;
    cfg.predictor.train_tasks = 2000;
    cfg.predictor.training.epochs = 15;
    let v = DeploymentVersion::V1;
    let (predictor, _, _) = train_predictor(&cfg, v, 1)?;
    println!(
        "{:<10} {:>9} {:>8} {:>8} {:>10} {:>9} {:>8}",
        "variant", "objective", "acc_sr", "mAP", "delay ms", "energy J", "retries"
    );
    for ablation in [Ablation::Rpp, Ablation::Cdco, Ablation::Both] {
        cfg.ablation = ablation;
        let trace = run_once(&cfg, "cdio", v, BandwidthMode::Stable, 11, Some(&predictor))?;
        let r = aggregate(&trace)?;
        println!(
            "{:<10} {:>9.1} {:>8.3} {:>8.2} {:>10.1} {:>9.0} {:>8}",
            ablation.as_str(),
            r.objective,
            r.acc_success_rate,
            r.avg_accuracy,
            r.avg_delay_ms,
            r.energy_j_total,
            r.retries
        );
    }
    Ok(())
}
