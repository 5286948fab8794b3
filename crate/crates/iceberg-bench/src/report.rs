//! The benchmark report and its serialized forms: a JSON document carrying
//! everything a run measured, and a CSV projection of the per-thread
//! throughput table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Nearest-rank latency percentiles in nanoseconds. `max` is exact over
/// every operation even when the quantiles come from a sampled subset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: u64,
    pub p95: u64,
    pub p99: u64,
    pub p999: u64,
    pub p9999: u64,
    pub max: u64,
}

/// Nearest-rank percentiles over raw samples: the q-quantile of n sorted
/// values is the one at rank ⌈q·n⌉ (1-based). Sorts in place.
pub fn percentiles(samples: &mut [u64]) -> Percentiles {
    samples.sort_unstable();
    let pick = |q: f64| {
        if samples.is_empty() {
            return 0;
        }
        let rank = (q * samples.len() as f64).ceil() as usize;
        samples[rank.clamp(1, samples.len()) - 1]
    };
    Percentiles {
        p50: pick(0.50),
        p95: pick(0.95),
        p99: pick(0.99),
        p999: pick(0.999),
        p9999: pick(0.9999),
        max: samples.last().copied().unwrap_or(0),
    }
}

/// Aggregate throughput (operations per second) at one thread count, by
/// operation class. Classes a workload does not exercise stay 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub threads: usize,
    pub insert: f64,
    pub positive: f64,
    pub negative: f64,
    pub remove: f64,
}

/// One step of the fill sweep: throughput and footprint measured right
/// after reaching `fill_percent` of capacity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub fill_percent: u32,
    pub insert_ops_per_sec: f64,
    pub footprint_bytes: u64,
    /// Resident key-value bytes over total footprint.
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub workload: String,
    /// One row per thread configuration, ascending.
    pub rows: Vec<ThroughputRow>,
    /// Latency percentiles per op class, from the highest thread count run.
    pub latency_ns: BTreeMap<String, Percentiles>,
    /// Fractions of resident entries per level, ground truth from a scan.
    pub level_distribution: Option<[f64; 3]>,
    /// Resident key-value bytes over footprint at the end of the run.
    pub space_efficiency: Option<f64>,
    /// Fill-sweep measurements (space-sweep runs only).
    pub sweep: Vec<SweepPoint>,
    /// Named facts about the run: key counts, generations, store counts.
    pub counters: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown format {other:?} (expected csv or json)")),
        }
    }
}

/// Serialize the report: CSV projects the throughput table (one row per
/// thread configuration) — or the fill sweep, for runs that only produce
/// sweep points — while JSON carries the whole structure. Deterministic
/// for a given report.
pub fn emit_report(report: &BenchReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Csv if report.rows.is_empty() && !report.sweep.is_empty() => {
            let mut out = String::from("fill_percent,insert_ops_per_sec,footprint_bytes,efficiency\n");
            for p in &report.sweep {
                out.push_str(&format!(
                    "{},{:.1},{},{:.4}\n",
                    p.fill_percent, p.insert_ops_per_sec, p.footprint_bytes, p.efficiency
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Csv => {
            let mut out = String::from("threads,insert,positive,negative,remove\n");
            for row in &report.rows {
                out.push_str(&format!(
                    "{},{:.1},{:.1},{:.1},{:.1}\n",
                    row.threads, row.insert, row.positive, row.negative, row.remove
                ));
            }
            out.into_bytes()
        }
        ReportFormat::Json => {
            let mut bytes =
                serde_json::to_vec_pretty(report).expect("report serialization cannot fail");
            bytes.push(b'\n');
            bytes
        }
    }
}
