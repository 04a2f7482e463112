//! Resource-preference prediction.
//!
//! Each task becomes a four-component feature vector (time, complexity,
//! accuracy requirement, delay requirement). A window of the most recent
//! feature vectors runs through a stacked LSTM whose final output feeds a
//! sigmoid head; the result is the probability that the newest task prefers
//! compute (cloud) over bandwidth (edge).

mod lstm;
mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheduler::Task;

pub use lstm::{lstm_step, LstmLayer, LstmState, PredictorConfig, PreferencePredictor};
pub use train::{
    evaluate, loss_and_gradient, separable_dataset, train, EpochStats, Optimizer, TrainConfig, TrainingReport,
};

pub const FEATURE_DIM: usize = 4;

/// Clamp applied to predictions before taking logarithms in [`bce_loss`].
pub const BCE_EPSILON: f64 = 1e-7;

/// Gate indices into [`LstmLayer::weights`] and [`LstmLayer::bias`].
pub mod gate {
    pub const FORGET: usize = super::lstm::FORGET;
    pub const INPUT: usize = super::lstm::INPUT;
    pub const CELL: usize = super::lstm::CELL;
    pub const OUTPUT: usize = super::lstm::OUTPUT;
}

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("invalid training input: {0}")]
    InvalidInput(String),
    #[error("weights file: {0}")]
    Io(#[from] std::io::Error),
    #[error("weights format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, PredictorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    BandwidthPreferring,
    ComputePreferring,
}

impl Preference {
    pub fn as_label(self) -> f64 {
        match self {
            Preference::BandwidthPreferring => 0.0,
            Preference::ComputePreferring => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Preference::BandwidthPreferring => "bandwidth",
            Preference::ComputePreferring => "compute",
        }
    }
}

/// Scaled task features, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub time: f64,
    pub complexity: f64,
    pub accuracy: f64,
    pub delay: f64,
}

impl FeatureVector {
    pub const ZERO: FeatureVector = FeatureVector {
        time: 0.0,
        complexity: 0.0,
        accuracy: 0.0,
        delay: 0.0,
    };

    pub fn to_array(self) -> [f64; FEATURE_DIM] {
        [self.time, self.complexity, self.accuracy, self.delay]
    }
}

/// Builds the feature vector of a task. The four components are kept side by
/// side, not summed: accuracy is scaled by `1/100`, delay by `1/max_delay_req`.
pub fn make_feature(task: &Task, complexity_scaled: f64, t_index: f64, max_delay_req: f64) -> Result<FeatureVector> {
    let finite = [
        complexity_scaled,
        t_index,
        max_delay_req,
        task.accuracy_req,
        task.delay_req,
    ];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(PredictorError::Range(format!(
            "non-finite feature input for task {}",
            task.id
        )));
    }
    if !(0.0..=1.0).contains(&complexity_scaled) {
        return Err(PredictorError::Range(format!(
            "scaled complexity {complexity_scaled} outside [0, 1]"
        )));
    }
    if max_delay_req <= 0.0 {
        return Err(PredictorError::Range(format!(
            "max delay requirement {max_delay_req} must be positive"
        )));
    }
    Ok(FeatureVector {
        time: t_index.clamp(0.0, 1.0),
        complexity: complexity_scaled,
        accuracy: (task.accuracy_req / 100.0).clamp(0.0, 1.0),
        delay: (task.delay_req / max_delay_req).clamp(0.0, 1.0),
    })
}

/// Mean binary cross-entropy. Predictions are clamped to
/// `[BCE_EPSILON, 1 - BCE_EPSILON]`; anything outside `[0, 1]` is rejected.
pub fn bce_loss(labels: &[f64], predictions: &[f64]) -> Result<f64> {
    if labels.is_empty() || labels.len() != predictions.len() {
        return Err(PredictorError::Shape(format!(
            "{} labels vs {} predictions",
            labels.len(),
            predictions.len()
        )));
    }
    let mut total = 0.0;
    for (&g, &p) in labels.iter().zip(predictions) {
        if g != 0.0 && g != 1.0 {
            return Err(PredictorError::Domain(format!("label {g} is not 0 or 1")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(PredictorError::Domain(format!("prediction {p} outside [0, 1]")));
        }
        let p = p.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        total += g * p.ln() + (1.0 - g) * (1.0 - p).ln();
    }
    Ok((-total / labels.len() as f64).max(0.0))
}

/// Threshold at 0.5; an exact 0.5 resolves to compute-preferring.
pub fn preference_from_probability(prob: f64) -> Preference {
    if prob >= 0.5 {
        Preference::ComputePreferring
    } else {
        Preference::BandwidthPreferring
    }
}

pub fn predict_preference(predictor: &PreferencePredictor, window: &[FeatureVector]) -> Result<Preference> {
    predictor.forward(window).map(preference_from_probability)
}

/// A run of consecutive feature vectors, labeled with the preference of the
/// newest (last) task: 1 = compute-preferring, 0 = bandwidth-preferring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub sequence: Vec<FeatureVector>,
    pub label: f64,
}

/// Slides a `seq_len` window over `features` (already in arrival order).
/// Windows that would start before the first task are front-padded with zero
/// vectors, so there is one window per task.
pub fn windows_from_sequence(features: &[FeatureVector], labels: &[Preference], seq_len: usize) -> Vec<LabeledWindow> {
    assert_eq!(features.len(), labels.len());
    (0..features.len())
        .map(|i| LabeledWindow {
            sequence: window_ending_at(features, i, seq_len),
            label: labels[i].as_label(),
        })
        .collect()
}

/// The `seq_len` vectors ending at index `end` (inclusive), zero-padded.
pub fn window_ending_at(features: &[FeatureVector], end: usize, seq_len: usize) -> Vec<FeatureVector> {
    let start = (end + 1).saturating_sub(seq_len);
    let mut w = vec![FeatureVector::ZERO; seq_len - (end + 1 - start)];
    w.extend_from_slice(&features[start..=end]);
    w
}

const WEIGHTS_FORMAT: &str = "cdio-lstm-weights";
const WEIGHTS_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateTensors {
    forget: Vec<f64>,
    input: Vec<f64>,
    cell: Vec<f64>,
    output: Vec<f64>,
}

impl GateTensors {
    fn from_array(a: &[Vec<f64>; 4]) -> Self {
        Self {
            forget: a[0].clone(),
            input: a[1].clone(),
            cell: a[2].clone(),
            output: a[3].clone(),
        }
    }

    fn into_array(self) -> [Vec<f64>; 4] {
        [self.forget, self.input, self.cell, self.output]
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDocument {
    input_size: usize,
    hidden_size: usize,
    /// Row-major `hidden x (hidden + input)` per gate.
    weights: GateTensors,
    biases: GateTensors,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDocument {
    format: String,
    format_version: u32,
    seq_len: usize,
    layers: Vec<LayerDocument>,
    head_weights: Vec<f64>,
    head_bias: f64,
}

impl PreferencePredictor {
    pub fn to_json(&self) -> String {
        let doc = WeightsDocument {
            format: WEIGHTS_FORMAT.into(),
            format_version: WEIGHTS_VERSION,
            seq_len: self.seq_len(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDocument {
                    input_size: l.input_size(),
                    hidden_size: l.hidden_size(),
                    weights: GateTensors::from_array(&l.weights),
                    biases: GateTensors::from_array(&l.biases),
                })
                .collect(),
            head_weights: self.head_w.clone(),
            head_bias: self.head_b[0],
        };
        serde_json::to_string_pretty(&doc).expect("weights serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: WeightsDocument = serde_json::from_str(text).map_err(|e| PredictorError::Format(e.to_string()))?;
        if doc.format != WEIGHTS_FORMAT || doc.format_version != WEIGHTS_VERSION {
            return Err(PredictorError::Format(format!(
                "unsupported weights document {} v{}",
                doc.format, doc.format_version
            )));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for l in doc.layers {
            let mut layer = LstmLayer::zeros(l.hidden_size, l.input_size);
            layer.weights = l.weights.into_array();
            layer.biases = l.biases.into_array();
            layers.push(layer);
        }
        Self::from_parts(layers, doc.head_weights, doc.head_bias, doc.seq_len)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(acc: f64, delay: f64) -> Task {
        Task::new(0, 0, 1.0, acc, delay, 0.0).unwrap()
    }

    #[test]
    fn feature_examples() {
        let f = make_feature(&task(80.0, 0.2), 0.5, 0.0, 0.6).unwrap();
        assert_eq!(f.time, 0.0);
        assert_eq!(f.complexity, 0.5);
        assert!((f.accuracy - 0.8).abs() < 1e-15);
        assert!((f.delay - 1.0 / 3.0).abs() < 1e-15);

        let f = make_feature(&task(50.0, 0.6), 0.0, 1.0, 0.6).unwrap();
        assert_eq!(f.to_array(), [1.0, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn feature_rejects_bad_inputs() {
        assert!(matches!(
            make_feature(&task(60.0, 0.3), f64::NAN, 0.0, 0.6),
            Err(PredictorError::Range(_))
        ));
        assert!(make_feature(&task(60.0, 0.3), 1.5, 0.0, 0.6).is_err());
        assert!(make_feature(&task(60.0, 0.3), 0.5, f64::INFINITY, 0.6).is_err());
        assert!(make_feature(&task(60.0, 0.3), 0.5, 0.0, 0.0).is_err());
    }

    #[test]
    fn requirement_ranges_map_into_expected_box() {
        for i in 0..=30 {
            let a = 50.0 + i as f64;
            for j in 0..=8 {
                let d = 0.2 + 0.05 * j as f64;
                let f = make_feature(&task(a, d), 0.3, 0.5, 0.6).unwrap();
                assert!((0.5..=0.8 + 1e-12).contains(&f.accuracy));
                assert!((1.0 / 3.0 - 1e-12..=1.0 + 1e-12).contains(&f.delay));
            }
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[1.0], &[0.5]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        let eps = BCE_EPSILON;
        assert!(bce_loss(&[1.0, 0.0], &[1.0 - eps, eps]).unwrap() < 1e-6);
        // -(ln 0.9 + ln 0.8 + ln 0.7) / 3
        let expected = -((0.9f64).ln() + (0.8f64).ln() + (0.7f64).ln()) / 3.0;
        let got = bce_loss(&[1.0, 1.0, 0.0], &[0.9, 0.8, 0.3]).unwrap();
        assert!((got - expected).abs() < 1e-15);
        assert!((got - 0.228_393_9).abs() < 1e-6);
    }

    #[test]
    fn bce_clamps_exact_extremes_and_rejects_garbage() {
        let v = bce_loss(&[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(v.is_finite() && (0.0..1e-6).contains(&v));
        let v = bce_loss(&[1.0], &[0.0]).unwrap();
        assert!((v - (-(BCE_EPSILON).ln())).abs() < 1e-9);
        assert!(matches!(bce_loss(&[1.0], &[1.2]), Err(PredictorError::Domain(_))));
        assert!(matches!(bce_loss(&[0.5], &[0.2]), Err(PredictorError::Domain(_))));
        assert!(matches!(bce_loss(&[], &[]), Err(PredictorError::Shape(_))));
        assert!(matches!(bce_loss(&[1.0], &[0.2, 0.3]), Err(PredictorError::Shape(_))));
    }

    #[test]
    fn threshold_and_tie_break() {
        assert_eq!(preference_from_probability(0.91), Preference::ComputePreferring);
        assert_eq!(preference_from_probability(0.12), Preference::BandwidthPreferring);
        assert_eq!(preference_from_probability(0.5), Preference::ComputePreferring);
    }

    #[test]
    fn zero_predictor_predicts_compute_everywhere() {
        let p = PreferencePredictor::zeros(PredictorConfig::default()).unwrap();
        let w = vec![
            FeatureVector {
                time: 0.3,
                complexity: 0.9,
                accuracy: 0.6,
                delay: 0.4
            };
            8
        ];
        assert_eq!(p.forward(&w).unwrap(), 0.5);
        assert_eq!(predict_preference(&p, &w).unwrap(), Preference::ComputePreferring);
    }

    #[test]
    fn windows_are_front_padded() {
        let feats: Vec<FeatureVector> = (0..3)
            .map(|i| FeatureVector {
                time: i as f64,
                ..FeatureVector::ZERO
            })
            .collect();
        let w = window_ending_at(&feats, 1, 4);
        assert_eq!(w.len(), 4);
        assert_eq!(w[0], FeatureVector::ZERO);
        assert_eq!(w[1], FeatureVector::ZERO);
        assert_eq!(w[2].time, 0.0);
        assert_eq!(w[3].time, 1.0);
        let w = window_ending_at(&feats, 2, 2);
        assert_eq!((w[0].time, w[1].time), (1.0, 2.0));
    }

    #[test]
    fn weights_round_trip_through_json() {
        let p = PreferencePredictor::new(PredictorConfig::default(), 7).unwrap();
        let back = PreferencePredictor::from_json(&p.to_json()).unwrap();
        assert_eq!(p, back);
        assert!(PreferencePredictor::from_json("{\"format\":\"x\"}").is_err());
    }
}
