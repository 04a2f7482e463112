//! Stable versus fluctuating WAN bandwidth: the sampled envelope and its
//! effect on delay for bandwidth-hungry and edge-heavy policies.

use cdio::cli::{run_once, RunConfig};
use cdio::metrics::aggregate;
use cdio::simulator::{BandwidthConfig, BandwidthMode, BandwidthModel, DeploymentVersion};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fluct = BandwidthModel::new(
        BandwidthConfig {
            mode: BandwidthMode::Fluctuating,
            ..BandwidthConfig::default()
        },
        5,
    )?;
    let samples: Vec<f64> = (0..1000).map(|t| fluct.sample(t)).collect();
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    println!("fluctuating WAN over 1000 slots: min {lo:.1} Mbps, max {hi:.1} Mbps");

    let mut cfg = RunConfig::default();
    cfg.workload.n_tasks = 3000;
    for policy in ["all_cloud", "greedy", "cdio_cdco"] {
        for mode in [BandwidthMode::Stable, BandwidthMode::Fluctuating] {
            let r = aggregate(&run_once(&cfg, policy, DeploymentVersion::V2, mode, 9, None)?)?;
            println!(
                "{policy:<10} {:<12} delay success {:.3}, mean delay {:.1} ms",
                mode.as_str(),
                r.delay_success_rate,
                r.avg_delay_ms
            );
        }
    }
    Ok(())
}
