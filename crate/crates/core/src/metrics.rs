//! Rate, reconstruction error, codec cost, transmission energy and empirical
//! entropy of a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netsim::{EventKind, EventRecord};
use crate::sources::CorrelatedPair;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("{0} needs at least one observation")]
    Empty(&'static str),
}

/// Counts abstract unit operations (table probes, comparisons, GF(2) row
/// operations) performed by one codec invocation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CostMeter {
    ops: u64,
    wall: Duration,
}

impl CostMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tick(&mut self) {
        self.ops += 1;
    }

    pub fn add(&mut self, ops: u64) {
        self.ops += ops;
    }

    pub fn ops(&self) -> u64 {
        self.ops
    }

    pub fn simulated_us(&self, cost_per_op_us: u32) -> u64 {
        self.ops * u64::from(cost_per_op_us)
    }

    /// Wall-clock time spent inside [`CostMeter::time`]; diagnostics only.
    pub fn wall_clock(&self) -> Duration {
        self.wall
    }

    pub fn time<T>(&mut self, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.wall += start.elapsed();
        out
    }
}

/// Count, sum and sum of squares; merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&self, other: &RunningStats) -> RunningStats {
        RunningStats {
            count: self.count + other.count,
            sum: self.sum + other.sum,
            sum_sq: self.sum_sq + other.sum_sq,
        }
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> Option<f64> {
        let mean = self.mean()?;
        let var = self.sum_sq / self.count as f64 - mean * mean;
        Some(var.max(0.0).sqrt())
    }
}

/// Mean and population standard deviation of `decoded - original`.
pub fn error_stats(pairs: &[(i64, i64)]) -> Result<(f64, f64), MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty("error_stats"));
    }
    let mut stats = RunningStats::default();
    for &(original, decoded) in pairs {
        stats.push((decoded - original) as f64);
    }
    Ok((stats.mean().unwrap(), stats.std_dev().unwrap()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    pub nanojoules_per_bit: f64,
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            nanojoules_per_bit: 430.0,
        }
    }
}

impl EnergyModel {
    pub fn energy_nj(&self, total_bits: u64) -> f64 {
        total_bits as f64 * self.nanojoules_per_bit
    }
}

/// Radio energy in joules for `total_bits` transmitted bits.
pub fn transmission_energy(total_bits: u64, model: &EnergyModel) -> f64 {
    model.energy_nj(total_bits) * 1e-9
}

/// Mean coded length over every sensor transmission in the log.
pub fn avg_bits(log: &[EventRecord]) -> Result<f64, MetricsError> {
    let mut stats = RunningStats::default();
    for rec in log.iter().filter(|r| r.event == EventKind::Transmit) {
        stats.push(f64::from(rec.length.unwrap_or(0)));
    }
    stats.mean().ok_or(MetricsError::Empty("avg_bits"))
}

/// Per-run accumulator behind a [`MetricsReport`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsAccumulator {
    pub bits: RunningStats,
    pub error: RunningStats,
    pub encode_us: RunningStats,
    pub decode_us: RunningStats,
    pub decode_failures: u64,
    pub overflow: u64,
}

impl MetricsAccumulator {
    pub fn from_log(log: &[EventRecord]) -> Self {
        let mut acc = Self::default();
        for rec in log {
            match rec.event {
                EventKind::Transmit => {
                    acc.bits.push(f64::from(rec.length.unwrap_or(0)));
                    acc.encode_us.push(f64::from(rec.latency.unwrap_or(0)));
                }
                EventKind::Decode => {
                    if let (Some(orig), Some(dec)) = (rec.original_data, rec.decode_data) {
                        acc.error.push(f64::from(dec) - f64::from(orig));
                    }
                    acc.decode_us.push(f64::from(rec.decode_latency.unwrap_or(0)));
                    acc.overflow = acc.overflow.max(u64::from(rec.overflow.unwrap_or(0)));
                }
                EventKind::DecodeError => acc.decode_failures += 1,
                EventKind::Broadcast | EventKind::Drop => {}
            }
        }
        acc
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            bits: self.bits.merge(&other.bits),
            error: self.error.merge(&other.error),
            encode_us: self.encode_us.merge(&other.encode_us),
            decode_us: self.decode_us.merge(&other.decode_us),
            decode_failures: self.decode_failures + other.decode_failures,
            overflow: self.overflow.max(other.overflow),
        }
    }

    pub fn report(&self, codec: &str, energy: &EnergyModel) -> MetricsReport {
        let total_bits = self.bits.sum as u64;
        MetricsReport {
            codec: codec.to_string(),
            sample_count: self.bits.count,
            total_bits,
            avg_bits: self.bits.mean().unwrap_or(0.0),
            error_mean: self.error.mean().unwrap_or(0.0),
            error_std: self.error.std_dev().unwrap_or(0.0),
            encode_mean_us: self.encode_us.mean().unwrap_or(0.0),
            encode_std_us: self.encode_us.std_dev().unwrap_or(0.0),
            decode_mean_us: self.decode_us.mean().unwrap_or(0.0),
            decode_std_us: self.decode_us.std_dev().unwrap_or(0.0),
            energy_nj: energy.energy_nj(total_bits),
            energy_j: transmission_energy(total_bits, energy),
            decode_failures: self.decode_failures,
            overflow: self.overflow,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub codec: String,
    pub sample_count: u64,
    pub total_bits: u64,
    pub avg_bits: f64,
    pub error_mean: f64,
    pub error_std: f64,
    pub encode_mean_us: f64,
    pub encode_std_us: f64,
    pub decode_mean_us: f64,
    pub decode_std_us: f64,
    pub energy_nj: f64,
    pub energy_j: f64,
    pub decode_failures: u64,
    pub overflow: u64,
}

const TABLE_HEADER: [&str; 9] = [
    "Code",
    "Code Avg Bits",
    "Error mu",
    "Error sigma",
    "Encode mu",
    "Encode sigma",
    "Decode mu",
    "Decode sigma",
    "Energy [J]",
];

/// A row of a comparison table: either a report or the reason the run
/// failed.
pub type ReportRow = Result<MetricsReport, (String, String)>;

fn row_cells(row: &ReportRow) -> Vec<String> {
    match row {
        Ok(r) => vec![
            r.codec.clone(),
            format!("{:.4}", r.avg_bits),
            format!("{:.4}", r.error_mean),
            format!("{:.4}", r.error_std),
            format!("{:.4}", r.encode_mean_us),
            format!("{:.4}", r.encode_std_us),
            format!("{:.4}", r.decode_mean_us),
            format!("{:.4}", r.decode_std_us),
            format!("{:.6e}", r.energy_j),
        ],
        Err((codec, reason)) => {
            let mut cells = vec![codec.clone(), format!("failed: {reason}")];
            cells.resize(TABLE_HEADER.len(), String::new());
            cells
        }
    }
}

/// Aligned text table with one row per codec.
pub fn render_table(rows: &[ReportRow]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(row_cells).collect();
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    for cells in &body {
        // failure text spans the remaining columns
        if cells.len() == widths.len() && !cells[1].starts_with("failed") {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.len());
            }
        } else {
            widths[0] = widths[0].max(cells[0].len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[String]| {
        let mut text = String::new();
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(text, "{:<w$}", c, w = widths[0]);
            } else {
                let _ = write!(text, "  {:>w$}", c, w = widths[i]);
            }
        }
        out.push_str(text.trim_end());
        out.push('\n');
    };
    line(&mut out, &TABLE_HEADER.map(String::from));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    line(&mut out, &rule);
    for (row, cells) in rows.iter().zip(&body) {
        match row {
            Ok(_) => line(&mut out, cells),
            Err(_) => {
                let _ = writeln!(out, "{:<w$}  {}", cells[0], cells[1], w = widths[0]);
            }
        }
    }
    out
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "codec",
        "sample_count",
        "total_bits",
        "avg_bits",
        "error_mean",
        "error_std",
        "encode_mean_us",
        "encode_std_us",
        "decode_mean_us",
        "decode_std_us",
        "energy_nj",
        "energy_j",
        "decode_failures",
        "overflow",
        "failure",
    ])
    .expect("in-memory write");
    for row in rows {
        let record: Vec<String> = match row {
            Ok(r) => vec![
                r.codec.clone(),
                r.sample_count.to_string(),
                r.total_bits.to_string(),
                r.avg_bits.to_string(),
                r.error_mean.to_string(),
                r.error_std.to_string(),
                r.encode_mean_us.to_string(),
                r.encode_std_us.to_string(),
                r.decode_mean_us.to_string(),
                r.decode_std_us.to_string(),
                r.energy_nj.to_string(),
                r.energy_j.to_string(),
                r.decode_failures.to_string(),
                r.overflow.to_string(),
                String::new(),
            ],
            Err((codec, reason)) => {
                let mut v = vec![codec.clone()];
                v.resize(14, String::new());
                v.push(reason.clone());
                v
            }
        };
        w.write_record(&record).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn render_json(rows: &[ReportRow]) -> String {
    let values: Vec<serde_json::Value> = rows
        .iter()
        .map(|row| match row {
            Ok(r) => serde_json::to_value(r).expect("plain struct"),
            Err((codec, reason)) => serde_json::json!({ "codec": codec, "error": reason }),
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&values).expect("plain values");
    s.push('\n');
    s
}

/// Plug-in entropies of a correlated pair stream next to an achieved rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub h_x: f64,
    pub h_y: f64,
    pub h_xy: f64,
    pub h_y_given_x: f64,
    /// Bits per sample pair actually spent.
    pub achieved: f64,
}

impl EntropyReport {
    /// Separate-coding reference `H(X) + H(Y)`.
    pub fn separate_rate(&self) -> f64 {
        self.h_x + self.h_y
    }

    /// The achieved rate sits between the joint entropy and separate coding.
    pub fn within_slepian_wolf_chain(&self) -> bool {
        self.h_xy <= self.achieved && self.achieved <= self.separate_rate()
    }
}

fn plugin_entropy<K: Ord>(counts: &BTreeMap<K, u64>, total: u64) -> f64 {
    let total = total as f64;
    counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum()
}

pub fn entropy_report(pairs: &[CorrelatedPair], achieved_bits: f64) -> Result<EntropyReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::Empty("entropy_report"));
    }
    let mut hx = BTreeMap::new();
    let mut hy = BTreeMap::new();
    let mut hxy = BTreeMap::new();
    for p in pairs {
        *hx.entry(p.x).or_insert(0u64) += 1;
        *hy.entry(p.y).or_insert(0u64) += 1;
        *hxy.entry((p.x, p.y)).or_insert(0u64) += 1;
    }
    let n = pairs.len() as u64;
    let h_x = plugin_entropy(&hx, n);
    let h_y = plugin_entropy(&hy, n);
    let h_xy = plugin_entropy(&hxy, n);
    Ok(EntropyReport {
        h_x,
        h_y,
        h_xy,
        h_y_given_x: (h_xy - h_x).max(0.0),
        achieved: achieved_bits,
    })
}
