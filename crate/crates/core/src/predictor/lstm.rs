use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureVector, PredictorError, Result, FEATURE_DIM};

pub(crate) const FORGET: usize = 0;
pub(crate) const INPUT: usize = 1;
pub(crate) const CELL: usize = 2;
pub(crate) const OUTPUT: usize = 3;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM layer. Each gate has a `hidden x (hidden + input)` weight matrix,
/// row-major, whose columns are laid out as `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    hidden: usize,
    input: usize,
    pub(crate) weights: [Vec<f64>; 4],
    pub(crate) biases: [Vec<f64>; 4],
}

impl LstmLayer {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        let w = vec![0.0; hidden * (hidden + input)];
        let b = vec![0.0; hidden];
        Self {
            hidden,
            input,
            weights: [w.clone(), w.clone(), w.clone(), w],
            biases: [b.clone(), b.clone(), b.clone(), b],
        }
    }

    /// Uniform weights in `[-scale, scale]`; forget-gate bias starts at 1.
    pub fn random(hidden: usize, input: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut layer = Self::zeros(hidden, input);
        for g in 0..4 {
            for w in layer.weights[g].iter_mut() {
                *w = rng.gen_range(-scale..=scale);
            }
            for b in layer.biases[g].iter_mut() {
                *b = rng.gen_range(-scale..=scale);
            }
        }
        layer.biases[FORGET].iter_mut().for_each(|b| *b = 1.0);
        layer
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn input_size(&self) -> usize {
        self.input
    }

    /// Weight matrix of one gate (forget, input, candidate, output).
    pub fn weights(&self, gate: usize) -> &[f64] {
        &self.weights[gate]
    }

    pub fn weights_mut(&mut self, gate: usize) -> &mut [f64] {
        &mut self.weights[gate]
    }

    pub fn bias(&self, gate: usize) -> &[f64] {
        &self.biases[gate]
    }

    pub fn bias_mut(&mut self, gate: usize) -> &mut [f64] {
        &mut self.biases[gate]
    }

    fn validate(&self) -> Result<()> {
        let cols = self.hidden + self.input;
        for g in 0..4 {
            if self.weights[g].len() != self.hidden * cols || self.biases[g].len() != self.hidden {
                return Err(PredictorError::Shape(format!(
                    "gate {g} tensors do not match hidden={} input={}",
                    self.hidden, self.input
                )));
            }
        }
        Ok(())
    }

    fn pre_activation(&self, gate: usize, concat: &[f64], out: &mut [f64]) {
        let cols = concat.len();
        let w = &self.weights[gate];
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            *o = self.biases[gate][i] + row.iter().zip(concat).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// Output and cell state of a layer after a step.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub q: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self {
            h: vec![0.0; hidden],
            q: vec![0.0; hidden],
        }
    }
}

/// Intermediate values of one step, kept for backpropagation.
#[derive(Debug, Clone)]
struct StepCache {
    concat: Vec<f64>,
    forget: Vec<f64>,
    input: Vec<f64>,
    candidate: Vec<f64>,
    output: Vec<f64>,
    q_prev: Vec<f64>,
    tanh_q: Vec<f64>,
}

fn step_cached(layer: &LstmLayer, state: &LstmState, x: &[f64]) -> (LstmState, StepCache) {
    let h = layer.hidden;
    let mut concat = Vec::with_capacity(h + x.len());
    concat.extend_from_slice(&state.h);
    concat.extend_from_slice(x);

    let mut f = vec![0.0; h];
    let mut v = vec![0.0; h];
    let mut c = vec![0.0; h];
    let mut o = vec![0.0; h];
    layer.pre_activation(FORGET, &concat, &mut f);
    layer.pre_activation(INPUT, &concat, &mut v);
    layer.pre_activation(CELL, &concat, &mut c);
    layer.pre_activation(OUTPUT, &concat, &mut o);
    f.iter_mut().for_each(|z| *z = sigmoid(*z));
    v.iter_mut().for_each(|z| *z = sigmoid(*z));
    c.iter_mut().for_each(|z| *z = z.tanh());
    o.iter_mut().for_each(|z| *z = sigmoid(*z));

    let q: Vec<f64> = (0..h).map(|i| f[i] * state.q[i] + v[i] * c[i]).collect();
    let tanh_q: Vec<f64> = q.iter().map(|z| z.tanh()).collect();
    let h_next: Vec<f64> = (0..h).map(|i| o[i] * tanh_q[i]).collect();
    (
        LstmState { h: h_next, q },
        StepCache {
            concat,
            forget: f,
            input: v,
            candidate: c,
            output: o,
            q_prev: state.q.clone(),
            tanh_q,
        },
    )
}

/// A single LSTM step: gates, cell update `Q' = f*Q + v*Q~`, output `h' = o*tanh(Q')`.
pub fn lstm_step(layer: &LstmLayer, state: &LstmState, x: &[f64]) -> Result<LstmState> {
    layer.validate()?;
    if x.len() != layer.input {
        return Err(PredictorError::Shape(format!(
            "input of length {} for layer expecting {}",
            x.len(),
            layer.input
        )));
    }
    if state.h.len() != layer.hidden || state.q.len() != layer.hidden {
        return Err(PredictorError::Shape(format!(
            "state of size ({}, {}) for hidden size {}",
            state.h.len(),
            state.q.len(),
            layer.hidden
        )));
    }
    Ok(step_cached(layer, state, x).0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_seq_len")]
    pub seq_len: usize,
}

fn default_layers() -> usize {
    2
}
fn default_hidden() -> usize {
    16
}
fn default_seq_len() -> usize {
    8
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            layers: default_layers(),
            hidden: default_hidden(),
            seq_len: default_seq_len(),
        }
    }
}

/// Stacked LSTM followed by an affine head and a sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePredictor {
    pub(crate) layers: Vec<LstmLayer>,
    pub(crate) head_w: Vec<f64>,
    pub(crate) head_b: Vec<f64>,
    seq_len: usize,
}

/// Forward-pass record for one window.
pub(crate) struct ForwardTrace {
    caches: Vec<Vec<StepCache>>,
    last_h: Vec<f64>,
    pub(crate) prob: f64,
}

impl PreferencePredictor {
    pub const INIT_SCALE: f64 = 0.1;

    pub fn new(config: PredictorConfig, seed: u64) -> Result<Self> {
        Self::check_config(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(config.layers);
        let mut input = FEATURE_DIM;
        for _ in 0..config.layers {
            layers.push(LstmLayer::random(config.hidden, input, Self::INIT_SCALE, &mut rng));
            input = config.hidden;
        }
        let head_w = (0..config.hidden)
            .map(|_| rng.gen_range(-Self::INIT_SCALE..=Self::INIT_SCALE))
            .collect();
        Ok(Self {
            layers,
            head_w,
            head_b: vec![0.0],
            seq_len: config.seq_len,
        })
    }

    /// All parameters zero; every prediction is exactly 0.5.
    pub fn zeros(config: PredictorConfig) -> Result<Self> {
        Self::check_config(&config)?;
        let mut input = FEATURE_DIM;
        let layers = (0..config.layers)
            .map(|_| {
                let l = LstmLayer::zeros(config.hidden, input);
                input = config.hidden;
                l
            })
            .collect();
        Ok(Self {
            layers,
            head_w: vec![0.0; config.hidden],
            head_b: vec![0.0],
            seq_len: config.seq_len,
        })
    }

    /// Assembles a predictor from explicit layers and head parameters.
    pub fn from_parts(layers: Vec<LstmLayer>, head_w: Vec<f64>, head_b: f64, seq_len: usize) -> Result<Self> {
        let p = Self {
            layers,
            head_w,
            head_b: vec![head_b],
            seq_len,
        };
        p.validate()?;
        Ok(p)
    }

    fn check_config(config: &PredictorConfig) -> Result<()> {
        if config.layers == 0 || config.hidden == 0 || config.seq_len == 0 {
            return Err(PredictorError::Shape(format!(
                "layers, hidden and seq_len must be positive: {config:?}"
            )));
        }
        Ok(())
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.seq_len == 0 {
            return Err(PredictorError::Shape("predictor needs a layer and seq_len > 0".into()));
        }
        let mut input = FEATURE_DIM;
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate()?;
            if layer.input != input {
                return Err(PredictorError::Shape(format!(
                    "layer {k} expects input {} but receives {input}",
                    layer.input
                )));
            }
            input = layer.hidden;
        }
        if self.head_w.len() != input || self.head_b.len() != 1 {
            return Err(PredictorError::Shape("head does not match last hidden size".into()));
        }
        if !self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite())) {
            return Err(PredictorError::Shape("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn layers(&self) -> &[LstmLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LstmLayer] {
        &mut self.layers
    }

    pub fn head(&self) -> (&[f64], f64) {
        (&self.head_w, self.head_b[0])
    }

    pub fn head_mut(&mut self) -> (&mut [f64], &mut f64) {
        (&mut self.head_w, &mut self.head_b[0])
    }

    pub fn hidden_size(&self) -> usize {
        self.head_w.len()
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Every parameter tensor in a fixed order: per layer the four gate
    /// weights then the four gate biases, then head weights and head bias.
    pub(crate) fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() * 8 + 2);
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.biases.iter());
        }
        out.push(&self.head_w);
        out.push(&self.head_b);
        out
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Vec<f64>> {
        let mut out = Vec::with_capacity(self.layers.len() * 8 + 2);
        for l in &mut self.layers {
            out.extend(l.weights.iter_mut());
            out.extend(l.biases.iter_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    /// Flattened copy of every parameter, in `tensors()` order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    pub fn set_flat_parameters(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.parameter_count() {
            return Err(PredictorError::Shape(format!(
                "{} values for {} parameters",
                values.len(),
                self.parameter_count()
            )));
        }
        let mut it = values.iter();
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v = *it.next().expect("length checked");
            }
        }
        Ok(())
    }

    pub(crate) fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
        z
    }

    pub(crate) fn check_window(&self, window: &[FeatureVector]) -> Result<()> {
        if window.len() != self.seq_len {
            return Err(PredictorError::Shape(format!(
                "window of length {} for seq_len {}",
                window.len(),
                self.seq_len
            )));
        }
        Ok(())
    }

    /// Probability that the last task of `window` is compute-preferring.
    pub fn forward(&self, window: &[FeatureVector]) -> Result<f64> {
        self.check_window(window)?;
        Ok(self.forward_trace(window).prob)
    }

    pub(crate) fn forward_trace(&self, window: &[FeatureVector]) -> ForwardTrace {
        let mut inputs: Vec<Vec<f64>> = window.iter().map(|f| f.to_array().to_vec()).collect();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut state = LstmState::zeros(layer.hidden);
            let mut layer_caches = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let (next, cache) = step_cached(layer, &state, x);
                outputs.push(next.h.clone());
                layer_caches.push(cache);
                state = next;
            }
            caches.push(layer_caches);
            inputs = outputs;
        }
        let last_h = inputs.pop().expect("window is non-empty");
        let z = self.head_b[0] + self.head_w.iter().zip(&last_h).map(|(w, h)| w * h).sum::<f64>();
        ForwardTrace {
            caches,
            last_h,
            prob: sigmoid(z),
        }
    }

    /// Accumulates into `grad` the gradient of the BCE loss of one window
    /// with respect to every parameter, given `dloss_dz` at the head logit.
    #[allow(clippy::needless_range_loop)]
    pub(crate) fn backward(&self, trace: &ForwardTrace, dloss_dz: f64, grad: &mut Self) {
        for (g, h) in grad.head_w.iter_mut().zip(&trace.last_h) {
            *g += dloss_dz * h;
        }
        grad.head_b[0] += dloss_dz;

        let steps = trace.caches[0].len();
        let top_hidden = self.head_w.len();
        // Gradient flowing into each time step's output of the current layer.
        let mut dh_from_above = vec![vec![0.0; top_hidden]; steps];
        for (dh, w) in dh_from_above[steps - 1].iter_mut().zip(&self.head_w) {
            *dh = dloss_dz * w;
        }

        for (k, layer) in self.layers.iter().enumerate().rev() {
            let h = layer.hidden;
            let cols = h + layer.input;
            let caches = &trace.caches[k];
            let gl = &mut grad.layers[k];
            let mut dh_next = vec![0.0; h];
            let mut dq_next = vec![0.0; h];
            let mut dx_all = vec![vec![0.0; layer.input]; steps];
            let mut acts = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
            for t in (0..steps).rev() {
                let c = &caches[t];
                for i in 0..h {
                    let dh = dh_from_above[t][i] + dh_next[i];
                    let d_out = dh * c.tanh_q[i];
                    let dq = dq_next[i] + dh * c.output[i] * (1.0 - c.tanh_q[i] * c.tanh_q[i]);
                    let d_forget = dq * c.q_prev[i];
                    let d_input = dq * c.candidate[i];
                    let d_cand = dq * c.input[i];
                    dq_next[i] = dq * c.forget[i];
                    acts[FORGET][i] = d_forget * c.forget[i] * (1.0 - c.forget[i]);
                    acts[INPUT][i] = d_input * c.input[i] * (1.0 - c.input[i]);
                    acts[CELL][i] = d_cand * (1.0 - c.candidate[i] * c.candidate[i]);
                    acts[OUTPUT][i] = d_out * c.output[i] * (1.0 - c.output[i]);
                }
                let mut dconcat = vec![0.0; cols];
                for g in 0..4 {
                    let w = &layer.weights[g];
                    let gw = &mut gl.weights[g];
                    for i in 0..h {
                        let a = acts[g][i];
                        if a == 0.0 {
                            continue;
                        }
                        gl.biases[g][i] += a;
                        let row = i * cols;
                        for j in 0..cols {
                            gw[row + j] += a * c.concat[j];
                            dconcat[j] += a * w[row + j];
                        }
                    }
                }
                dh_next.copy_from_slice(&dconcat[..h]);
                dx_all[t].copy_from_slice(&dconcat[h..]);
            }
            dh_from_above = dx_all;
        }
    }
}
