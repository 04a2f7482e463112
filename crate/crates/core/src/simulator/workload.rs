use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Result, SimError};
use crate::complexity::{default_complexity, Frame, MinMaxScaler};
use crate::scheduler::Task;

/// Encoded frame size: `width * height * bits_per_pixel * compression_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSizeModel {
    pub width: usize,
    pub height: usize,
    pub bits_per_pixel: f64,
    pub compression_ratio: f64,
}

impl Default for FrameSizeModel {
    fn default() -> Self {
        Self {
            width: 960,
            height: 540,
            bits_per_pixel: 8.0,
            compression_ratio: 0.1,
        }
    }
}

impl FrameSizeModel {
    pub fn megabits(&self) -> f64 {
        (self.width * self.height) as f64 * self.bits_per_pixel * self.compression_ratio / 1e6
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    #[serde(default = "default_n_tasks")]
    pub n_tasks: usize,
    /// Arrivals are uniform over `0..horizon_slots`.
    #[serde(default = "default_horizon")]
    pub horizon_slots: usize,
    #[serde(default = "default_acc_range")]
    pub acc_req_range: (f64, f64),
    #[serde(default = "default_delay_range")]
    pub delay_req_range: (f64, f64),
    /// Side of the synthetic analysis frame; must be a power of two.
    #[serde(default = "default_side")]
    pub frame_side: usize,
    /// Share of frames that are a single flat value.
    #[serde(default = "default_constant_fraction")]
    pub constant_fraction: f64,
    #[serde(default)]
    pub frame_size: FrameSizeModel,
}

fn default_n_tasks() -> usize {
    10_000
}
fn default_horizon() -> usize {
    60
}
fn default_acc_range() -> (f64, f64) {
    (50.0, 80.0)
}
fn default_delay_range() -> (f64, f64) {
    (0.2, 0.6)
}
fn default_side() -> usize {
    32
}
fn default_constant_fraction() -> f64 {
    0.1
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            n_tasks: default_n_tasks(),
            horizon_slots: default_horizon(),
            acc_req_range: default_acc_range(),
            delay_req_range: default_delay_range(),
            frame_side: default_side(),
            constant_fraction: default_constant_fraction(),
            frame_size: FrameSizeModel::default(),
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.acc_req_range;
        let (d0, d1) = self.delay_req_range;
        if !(a0 <= a1) || a0 < 0.0 || a1 > 100.0 {
            return Err(SimError::Config(format!(
                "accuracy range {:?} is invalid",
                self.acc_req_range
            )));
        }
        if !(d0 <= d1) || d0 <= 0.0 {
            return Err(SimError::Config(format!(
                "delay range {:?} is invalid",
                self.delay_req_range
            )));
        }
        if self.horizon_slots == 0 {
            return Err(SimError::Config("horizon_slots must be positive".into()));
        }
        if !self.frame_side.is_power_of_two() || self.frame_side < 2 {
            return Err(SimError::Config(format!(
                "frame side {} must be a power of two",
                self.frame_side
            )));
        }
        if !(0.0..=1.0).contains(&self.constant_fraction) || !(self.frame_size.megabits() > 0.0) {
            return Err(SimError::Config("invalid constant fraction or frame size".into()));
        }
        Ok(())
    }
}

/// A mix of flat frames and blends `(1 - r) * ramp + r * noise`, with
/// `r = sqrt(u)` so that textured frames dominate.
pub fn synthetic_frame(side: usize, constant_fraction: f64, rng: &mut ChaCha8Rng) -> Frame {
    if rng.gen::<f64>() < constant_fraction {
        return Frame::constant(side, rng.gen_range(-1.0..=1.0)).expect("valid side");
    }
    let r = rng.gen::<f64>().sqrt();
    let theta = rng.gen_range(0.0..std::f64::consts::TAU);
    let (sin, cos) = theta.sin_cos();
    let norm = (side - 1).max(1) as f64;
    let mut noise = || rng.gen_range(-1.0..=1.0);
    Frame::from_fn(side, |row, col| {
        let x = 2.0 * col as f64 / norm - 1.0;
        let y = 2.0 * row as f64 / norm - 1.0;
        let ramp = (cos * x + sin * y) / std::f64::consts::SQRT_2;
        ((1.0 - r) * ramp + r * noise()).clamp(-1.0, 1.0)
    })
    .expect("values are clamped")
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadItem {
    pub task: Task,
    pub frame: Frame,
}

/// Tasks in arrival order (ids `0..n` follow that order) plus the raw
/// complexities and the scaler that mapped them onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub tasks: Vec<Task>,
    pub raw_complexity: Vec<f64>,
    pub scaler: MinMaxScaler,
}

struct Draw {
    slot: usize,
    acc: f64,
    delay: f64,
    raw: f64,
    frame: Option<Frame>,
}

fn draw_all(spec: &WorkloadSpec, seed: u64, keep_frames: bool) -> Result<(Vec<Draw>, MinMaxScaler)> {
    spec.validate()?;
    if spec.n_tasks == 0 {
        return Err(SimError::Config("workload has no tasks".into()));
    }
    let mut rng = crate::rng::stream(seed, "workload");
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let mut draws = Vec::with_capacity(spec.n_tasks);
    for _ in 0..spec.n_tasks {
        let slot = rng.gen_range(0..spec.horizon_slots);
        let acc = uniform(&mut rng, spec.acc_req_range);
        let delay = uniform(&mut rng, spec.delay_req_range);
        let frame = synthetic_frame(spec.frame_side, spec.constant_fraction, &mut rng);
        let raw = default_complexity(&frame)?.total;
        draws.push(Draw {
            slot,
            acc,
            delay,
            raw,
            frame: keep_frames.then_some(frame),
        });
    }
    // Stable sort keeps draw order within a slot.
    draws.sort_by_key(|d| d.slot);
    let raws: Vec<f64> = draws.iter().map(|d| d.raw).collect();
    let scaler = MinMaxScaler::fit(&raws).expect("non-empty");
    Ok((draws, scaler))
}

fn to_task(id: usize, d: &Draw, spec: &WorkloadSpec, scaler: &MinMaxScaler) -> Result<Task> {
    Ok(Task::new(
        id,
        d.slot,
        spec.frame_size.megabits(),
        d.acc,
        d.delay,
        scaler.transform(d.raw),
    )?)
}

/// Tasks only; frames are dropped after their complexity is measured.
pub fn generate_tasks(spec: &WorkloadSpec, seed: u64) -> Result<Workload> {
    let (draws, scaler) = draw_all(spec, seed, false)?;
    log::debug!("complexity scaling: min {} max {}", scaler.min, scaler.max);
    let tasks = draws
        .iter()
        .enumerate()
        .map(|(i, d)| to_task(i, d, spec, &scaler))
        .collect::<Result<Vec<_>>>()?;
    Ok(Workload {
        tasks,
        raw_complexity: draws.iter().map(|d| d.raw).collect(),
        scaler,
    })
}

/// Tasks paired with their frames. Same tasks as [`generate_tasks`].
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Vec<WorkloadItem>> {
    let (draws, scaler) = draw_all(spec, seed, true)?;
    draws
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let task = to_task(i, &d, spec, &scaler)?;
            Ok(WorkloadItem {
                task,
                frame: d.frame.expect("frames kept"),
            })
        })
        .collect()
}
