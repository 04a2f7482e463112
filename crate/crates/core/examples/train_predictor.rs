//! Trains the preference LSTM on simulator-labeled windows and reports
//! held-out skill, then round-trips the weights through JSON.

use cdio::cli::{train_predictor, RunConfig};
use cdio::predictor::PreferencePredictor;
use cdio::simulator::DeploymentVersion;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.predictor.train_tasks = 2000;
    cfg.predictor.training.epochs = 15;
    let (predictor, report, summary) = train_predictor(&cfg, DeploymentVersion::V1, 7)?;
    for (i, e) in report.epochs.iter().enumerate().step_by(3) {
        println!("epoch {i:>3}: loss {:.4} accuracy {:.4}", e.loss, e.accuracy);
    }
    println!(
        "{} training windows ({:.1}% compute-preferring), held-out accuracy {:.4}, loss {:.4}",
        summary.train_windows,
        100.0 * summary.positive_fraction,
        summary.heldout_accuracy,
        summary.heldout_loss
    );

    let restored = PreferencePredictor::from_json(&predictor.to_json())?;
    assert_eq!(restored, predictor);
    println!("weights survive a JSON round trip bit for bit");
    Ok(())
}
