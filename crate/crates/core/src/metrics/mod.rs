//! Trace aggregation and cross-policy comparison.
//!
//! Per-task quantities (accuracy, success rates, delay) are unweighted means
//! over each task's final attempt. Consumption (compute, bandwidth, energy)
//! comes from slot totals, so retries and idle power are included.

mod baselines;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::predictor::Preference;
use crate::simulator::{BandwidthMode, DeploymentVersion, Tier};

pub use baselines::{
    baseline_policies, greedy_choice, myopic_estimate, AllCloud, AllEdge, GreedyLeastCost, MyopicEstimate, RandomPolicy,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace has no final task rows")]
    EmptyTrace,
    #[error("reports are not comparable: {0}")]
    Incomparable(String),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// One task attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub slot: usize,
    pub task_id: usize,
    /// 0 for the first placement, 1 for a cloud re-run.
    pub attempt: u32,
    pub server: usize,
    pub tier: Tier,
    pub predicted_pref: Option<Preference>,
    pub accuracy_req: f64,
    pub delay_req: f64,
    pub complexity: f64,
    pub accuracy: f64,
    pub delay_s: f64,
    pub feasible: bool,
    pub final_attempt: bool,
    pub compute_tflop: f64,
    pub bandwidth_mbps: f64,
    pub energy_j: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: usize,
    pub tasks: usize,
    pub wan_mbps: f64,
    pub compute_tflop: f64,
    pub bandwidth_mbps: f64,
    pub energy_work_j: f64,
    pub energy_idle_j: f64,
    pub energy_tx_j: f64,
    /// Running time-averaged reward after this slot.
    pub reward: f64,
    pub regret: f64,
}

impl SlotRecord {
    pub fn energy_j(&self) -> f64 {
        self.energy_work_j + self.energy_idle_j + self.energy_tx_j
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub policy: String,
    pub version: DeploymentVersion,
    pub bw_mode: BandwidthMode,
    pub phi: f64,
    pub rows: Vec<TraceRow>,
    pub slots: Vec<SlotRecord>,
}

impl Trace {
    pub fn write_rows_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_slots_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for s in &self.slots {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub policy: String,
    pub version: DeploymentVersion,
    pub bw_mode: BandwidthMode,
    pub n_tasks: usize,
    pub n_slots: usize,
    pub avg_accuracy: f64,
    pub acc_success_rate: f64,
    pub delay_success_rate: f64,
    /// Both requirements met.
    pub success_rate: f64,
    pub avg_delay_ms: f64,
    pub compute_tflop_total: f64,
    pub bandwidth_mbps_avg: f64,
    pub energy_j_total: f64,
    pub energy_work_j: f64,
    pub energy_idle_j: f64,
    pub energy_tx_j: f64,
    /// Mean slot cost `U_t + phi * B_t`.
    pub objective: f64,
    pub retries: usize,
    pub regret_trace: Vec<f64>,
}

/// Rows and slots are sorted before summation, so the result does not
/// depend on their order in the trace.
pub fn aggregate(trace: &Trace) -> Result<RunReport> {
    let mut finals: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.final_attempt).collect();
    if finals.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    finals.sort_by_key(|r| (r.task_id, r.attempt, r.slot));
    let mut slots: Vec<&SlotRecord> = trace.slots.iter().collect();
    slots.sort_by_key(|s| s.slot);

    let n = finals.len() as f64;
    let acc_ok = finals.iter().filter(|r| r.accuracy >= r.accuracy_req).count();
    let delay_ok = finals.iter().filter(|r| r.delay_s <= r.delay_req).count();
    let both_ok = finals.iter().filter(|r| r.feasible).count();
    let n_slots = slots.len().max(1) as f64;
    let sum = |f: &dyn Fn(&SlotRecord) -> f64| slots.iter().map(|s| f(s)).sum::<f64>();
    let compute = sum(&|s| s.compute_tflop);
    let bandwidth = sum(&|s| s.bandwidth_mbps);
    let work = sum(&|s| s.energy_work_j);
    let idle = sum(&|s| s.energy_idle_j);
    let tx = sum(&|s| s.energy_tx_j);
    Ok(RunReport {
        policy: trace.policy.clone(),
        version: trace.version,
        bw_mode: trace.bw_mode,
        n_tasks: finals.len(),
        n_slots: slots.len(),
        avg_accuracy: finals.iter().map(|r| r.accuracy).sum::<f64>() / n,
        acc_success_rate: acc_ok as f64 / n,
        delay_success_rate: delay_ok as f64 / n,
        success_rate: both_ok as f64 / n,
        avg_delay_ms: 1000.0 * finals.iter().map(|r| r.delay_s).sum::<f64>() / n,
        compute_tflop_total: compute,
        bandwidth_mbps_avg: bandwidth / n_slots,
        energy_j_total: work + idle + tx,
        energy_work_j: work,
        energy_idle_j: idle,
        energy_tx_j: tx,
        objective: (compute + trace.phi * bandwidth) / n_slots,
        retries: trace.rows.iter().filter(|r| r.attempt > 0).count(),
        regret_trace: slots.iter().map(|s| s.regret).collect(),
    })
}

/// Field-wise mean of reports for the same scenario and policy (e.g. across
/// seeds). Counts are averaged and rounded; regret traces are averaged over
/// their common prefix.
pub fn average_reports(reports: &[RunReport]) -> Result<RunReport> {
    let first = reports.first().ok_or(MetricsError::EmptyTrace)?;
    if reports
        .iter()
        .any(|r| r.policy != first.policy || r.version != first.version || r.bw_mode != first.bw_mode)
    {
        return Err(MetricsError::Incomparable(
            "averaging mixes policies or scenarios".into(),
        ));
    }
    let k = reports.len() as f64;
    let mean = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
    let count = |f: fn(&RunReport) -> usize| (reports.iter().map(|r| f(r) as f64).sum::<f64>() / k).round() as usize;
    let len = reports.iter().map(|r| r.regret_trace.len()).min().unwrap_or(0);
    Ok(RunReport {
        policy: first.policy.clone(),
        version: first.version,
        bw_mode: first.bw_mode,
        n_tasks: count(|r| r.n_tasks),
        n_slots: count(|r| r.n_slots),
        avg_accuracy: mean(|r| r.avg_accuracy),
        acc_success_rate: mean(|r| r.acc_success_rate),
        delay_success_rate: mean(|r| r.delay_success_rate),
        success_rate: mean(|r| r.success_rate),
        avg_delay_ms: mean(|r| r.avg_delay_ms),
        compute_tflop_total: mean(|r| r.compute_tflop_total),
        bandwidth_mbps_avg: mean(|r| r.bandwidth_mbps_avg),
        energy_j_total: mean(|r| r.energy_j_total),
        energy_work_j: mean(|r| r.energy_work_j),
        energy_idle_j: mean(|r| r.energy_idle_j),
        energy_tx_j: mean(|r| r.energy_tx_j),
        objective: mean(|r| r.objective),
        retries: count(|r| r.retries),
        regret_trace: (0..len)
            .map(|i| reports.iter().map(|r| r.regret_trace[i]).sum::<f64>() / k)
            .collect(),
    })
}

/// One comparison line; field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub version: DeploymentVersion,
    pub bw_mode: BandwidthMode,
    pub avg_acc: f64,
    pub acc_sr: f64,
    pub delay_sr: f64,
    pub avg_delay_ms: f64,
    pub compute_tflop: f64,
    pub bw_mbps: f64,
    pub energy_j: f64,
}

impl ComparisonRow {
    pub const METRICS: [&'static str; 7] = [
        "avg_acc",
        "acc_sr",
        "delay_sr",
        "avg_delay_ms",
        "compute_tflop",
        "bw_mbps",
        "energy_j",
    ];

    pub fn from_report(r: &RunReport) -> Self {
        Self {
            policy: r.policy.clone(),
            version: r.version,
            bw_mode: r.bw_mode,
            avg_acc: r.avg_accuracy,
            acc_sr: r.acc_success_rate,
            delay_sr: r.delay_success_rate,
            avg_delay_ms: r.avg_delay_ms,
            compute_tflop: r.compute_tflop_total,
            bw_mbps: r.bandwidth_mbps_avg,
            energy_j: r.energy_j_total,
        }
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.avg_acc,
            self.acc_sr,
            self.delay_sr,
            self.avg_delay_ms,
            self.compute_tflop,
            self.bw_mbps,
            self.energy_j,
        ]
    }
}

/// Differences of one row against the baseline row of its scenario:
/// `diff = subject - baseline`, `pct = 100 * diff / baseline` (absent when
/// the baseline value is 0).
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub policy: String,
    pub baseline: String,
    pub version: DeploymentVersion,
    pub bw_mode: BandwidthMode,
    pub diff: [f64; 7],
    pub pct: [Option<f64>; 7],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub deltas: Vec<DeltaRow>,
}

fn delta(subject: &ComparisonRow, base: &ComparisonRow) -> DeltaRow {
    let s = subject.values();
    let b = base.values();
    let mut diff = [0.0; 7];
    let mut pct = [None; 7];
    for i in 0..7 {
        diff[i] = s[i] - b[i];
        pct[i] = (b[i] != 0.0).then(|| 100.0 * diff[i] / b[i]);
    }
    DeltaRow {
        policy: subject.policy.clone(),
        baseline: base.policy.clone(),
        version: subject.version,
        bw_mode: subject.bw_mode,
        diff,
        pct,
    }
}

/// Absolute values plus deltas against the report of `baseline_policy`.
/// All reports must share one deployment version and bandwidth mode.
pub fn compare(reports: &[RunReport], baseline_policy: &str) -> Result<ComparisonTable> {
    if reports.len() < 2 {
        return Err(MetricsError::Incomparable("need at least two reports".into()));
    }
    let (v, m) = (reports[0].version, reports[0].bw_mode);
    if let Some(r) = reports.iter().find(|r| r.version != v || r.bw_mode != m) {
        return Err(MetricsError::Incomparable(format!(
            "{} runs {} / {} but {} runs {} / {}",
            reports[0].policy,
            v.as_str(),
            m.as_str(),
            r.policy,
            r.version.as_str(),
            r.bw_mode.as_str()
        )));
    }
    let base = reports
        .iter()
        .find(|r| r.policy == baseline_policy)
        .ok_or_else(|| MetricsError::Incomparable(format!("baseline {baseline_policy} missing")))?;
    let base_row = ComparisonRow::from_report(base);
    let rows: Vec<ComparisonRow> = reports.iter().map(ComparisonRow::from_report).collect();
    let deltas = rows.iter().map(|r| delta(r, &base_row)).collect();
    Ok(ComparisonTable { rows, deltas })
}

impl ComparisonTable {
    pub fn extend(&mut self, other: ComparisonTable) {
        self.rows.extend(other.rows);
        self.deltas.extend(other.deltas);
    }

    /// Columns: policy, version, bw_mode, avg_acc, acc_sr, delay_sr,
    /// avg_delay_ms, compute_tflop, bw_mbps, energy_j.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.rows.is_empty() {
            let mut header = vec!["policy", "version", "bw_mode"];
            header.extend(ComparisonRow::METRICS);
            w.write_record(header)?;
        }
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Columns: policy, baseline, version, bw_mode, then `<metric>_diff` and
    /// `<metric>_pct` for each metric in comparison order.
    pub fn write_deltas_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["policy", "baseline", "version", "bw_mode"].map(String::from).to_vec();
        for m in ComparisonRow::METRICS {
            header.push(format!("{m}_diff"));
            header.push(format!("{m}_pct"));
        }
        w.write_record(&header)?;
        for d in &self.deltas {
            let mut rec = vec![
                d.policy.clone(),
                d.baseline.clone(),
                d.version.as_str().to_string(),
                d.bw_mode.as_str().to_string(),
            ];
            for i in 0..7 {
                rec.push(d.diff[i].to_string());
                rec.push(d.pct[i].map(|p| p.to_string()).unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
