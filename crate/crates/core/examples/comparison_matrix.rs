//! A reduced policy matrix averaged over seeds, compared against all-cloud.

use cdio::cli::{matrix_table, run_matrix_reports, RunConfig};
use cdio::simulator::{BandwidthMode, DeploymentVersion};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.workload.n_tasks = 3000;
    cfg.predictor.train_tasks = 2000;
    cfg.predictor.training.epochs = 15;
    cfg.matrix.versions = vec![DeploymentVersion::V1, DeploymentVersion::V4];
    cfg.matrix.bw_modes = vec![BandwidthMode::Stable];
    cfg.matrix.seeds = 2;
    let reports = run_matrix_reports(&cfg)?;
    let table = matrix_table(&cfg, &reports)?;
    table.write_csv(std::io::stdout())?;
    println!();
    for d in table.deltas.iter().filter(|d| d.policy != d.baseline) {
        let pct = |i: usize| d.pct[i].map_or("n/a".to_string(), |p| format!("{p:+.1}%"));
        println!(
            "{} {}: compute {}, bandwidth {}, energy {} vs {}",
            d.version.as_str(),
            d.policy,
            pct(4),
            pct(5),
            pct(6),
            d.baseline
        );
    }
    Ok(())
}
