use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    bce_loss, preference_from_probability, FeatureVector, LabeledWindow, PredictorError, Preference,
    PreferencePredictor, Result, BCE_EPSILON,
};

/// Parameter update rule. Both apply after global-norm clipping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// `w -= lr * g`.
    Sgd,
    /// Bias-corrected first and second moments, beta1 0.9, beta2 0.999.
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_optimizer")]
    pub optimizer: Optimizer,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    /// Global L2 norm bound on each minibatch gradient.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Seeds the per-epoch shuffle.
    #[serde(default)]
    pub seed: u64,
}

fn default_optimizer() -> Optimizer {
    Optimizer::Adam
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    0.005
}
fn default_batch() -> usize {
    16
}
fn default_clip() -> f64 {
    5.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: default_optimizer(),
            epochs: default_epochs(),
            lr: default_lr(),
            batch_size: default_batch(),
            clip_norm: default_clip(),
            seed: 0,
        }
    }
}

/// Running means over the epoch's minibatches, each measured before its update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub final_loss: f64,
    pub final_accuracy: f64,
}

impl TrainingReport {
    /// CSV with header `epoch,loss,accuracy`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| PredictorError::Io(std::io::Error::other(e));
        w.write_record(["epoch", "loss", "accuracy"]).map_err(io)?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.loss.to_string(), e.accuracy.to_string()])
                .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean BCE over `windows` and its gradient, flattened in
/// `PreferencePredictor::flat_parameters` order.
pub fn loss_and_gradient(predictor: &PreferencePredictor, windows: &[LabeledWindow]) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = batch_gradient(predictor, windows.iter())?;
    Ok((loss, grad.flat_parameters()))
}

fn batch_gradient<'a>(
    predictor: &PreferencePredictor,
    windows: impl ExactSizeIterator<Item = &'a LabeledWindow>,
) -> Result<(f64, PreferencePredictor)> {
    let (loss, _, grad) = batch_pass(predictor, windows)?;
    Ok((loss, grad))
}

/// Mean loss, number of correctly classified windows and mean gradient.
fn batch_pass<'a>(
    predictor: &PreferencePredictor,
    windows: impl ExactSizeIterator<Item = &'a LabeledWindow>,
) -> Result<(f64, usize, PreferencePredictor)> {
    let n = windows.len();
    if n == 0 {
        return Err(PredictorError::InvalidInput("empty batch".into()));
    }
    let mut grad = predictor.zeros_like();
    let mut loss = 0.0;
    let mut correct = 0;
    for w in windows {
        predictor.check_window(&w.sequence)?;
        let trace = predictor.forward_trace(&w.sequence);
        if (preference_from_probability(trace.prob) == Preference::ComputePreferring) == (w.label == 1.0) {
            correct += 1;
        }
        let p = trace.prob.clamp(BCE_EPSILON, 1.0 - BCE_EPSILON);
        loss -= w.label * p.ln() + (1.0 - w.label) * (1.0 - p).ln();
        // d(BCE)/dz for a sigmoid output is p - g; the clamp region has zero slope.
        let dz = if trace.prob == p {
            (trace.prob - w.label) / n as f64
        } else {
            0.0
        };
        predictor.backward(&trace, dz, &mut grad);
    }
    Ok((loss / n as f64, correct, grad))
}

/// Mean loss and thresholded accuracy of `predictor` on `windows`.
pub fn evaluate(predictor: &PreferencePredictor, windows: &[LabeledWindow]) -> Result<(f64, f64)> {
    if windows.is_empty() {
        return Err(PredictorError::InvalidInput("empty evaluation set".into()));
    }
    let mut probs = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    let mut correct = 0usize;
    for w in windows {
        let p = predictor.forward(&w.sequence)?;
        let predicted = preference_from_probability(p) == Preference::ComputePreferring;
        if predicted == (w.label == 1.0) {
            correct += 1;
        }
        probs.push(p);
        labels.push(w.label);
    }
    Ok((bce_loss(&labels, &probs)?, correct as f64 / windows.len() as f64))
}

struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn apply<'a>(&mut self, params: impl Iterator<Item = &'a mut f64>, grads: impl Iterator<Item = f64>, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in params.zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
            *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
        }
    }
}

/// Minibatch gradient descent with global-norm clipping. Deterministic in
/// (initial parameters, dataset, config).
pub fn train(
    predictor: &mut PreferencePredictor,
    dataset: &[LabeledWindow],
    config: &TrainConfig,
) -> Result<TrainingReport> {
    if dataset.is_empty() {
        return Err(PredictorError::InvalidInput("empty dataset".into()));
    }
    if !(config.lr > 0.0 && config.lr.is_finite()) || config.batch_size == 0 || config.clip_norm <= 0.0 {
        return Err(PredictorError::InvalidInput(format!("bad training config {config:?}")));
    }
    for w in dataset {
        predictor.check_window(&w.sequence)?;
        if w.label != 0.0 && w.label != 1.0 {
            return Err(PredictorError::InvalidInput(format!("label {}", w.label)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(predictor.parameter_count());
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0;
        for chunk in order.chunks(config.batch_size) {
            let (loss, correct, mut grad) = batch_pass(predictor, chunk.iter().map(|&i| &dataset[i]))?;
            epoch_loss += loss * chunk.len() as f64;
            epoch_correct += correct;
            if !loss.is_finite() {
                return Err(PredictorError::Divergence { epoch, loss });
            }
            let norm = grad
                .tensors()
                .iter()
                .flat_map(|t| t.iter())
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(PredictorError::Divergence { epoch, loss: norm });
            }
            let scale = if norm > config.clip_norm {
                config.clip_norm / norm
            } else {
                1.0
            };
            let params = predictor.tensors_mut().into_iter().flat_map(|t| t.iter_mut());
            let grads = grad.tensors_mut().into_iter().flat_map(|t| t.iter().copied());
            match config.optimizer {
                Optimizer::Sgd => {
                    let step = config.lr * scale;
                    params.zip(grads).for_each(|(p, g)| *p -= step * g);
                }
                Optimizer::Adam => adam.apply(params, grads.map(|g| g * scale), config.lr),
            }
        }
        let loss = epoch_loss / dataset.len() as f64;
        let accuracy = epoch_correct as f64 / dataset.len() as f64;
        log::debug!("epoch {epoch}: loss {loss:.5} accuracy {accuracy:.4}");
        epochs.push(EpochStats { epoch, loss, accuracy });
    }
    let (final_loss, final_accuracy) = evaluate(predictor, dataset)?;
    Ok(TrainingReport {
        epochs,
        final_loss,
        final_accuracy,
    })
}

/// Windows of i.i.d. uniform features; label is 1 iff the newest task's
/// accuracy feature exceeds 0.65.
pub fn separable_dataset(n: usize, seq_len: usize, seed: u64) -> Vec<LabeledWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let sequence: Vec<FeatureVector> = (0..seq_len)
                .map(|_| FeatureVector {
                    time: rng.gen(),
                    complexity: rng.gen(),
                    accuracy: rng.gen(),
                    delay: rng.gen(),
                })
                .collect();
            let label = if sequence[seq_len - 1].accuracy > 0.65 {
                1.0
            } else {
                0.0
            };
            LabeledWindow { sequence, label }
        })
        .collect()
}
