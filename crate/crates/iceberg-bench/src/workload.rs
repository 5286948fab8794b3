//! Workload runners: a four-phase microbenchmark swept over thread counts,
//! YCSB-style mixed read/write runs with a growing table, a fill sweep for
//! space efficiency, and a level-distribution census.
//!
//! Key sequences are pure functions of (spec, seed): two runs with the same
//! spec touch identical keys in identical per-thread orders. Input
//! generation is never inside a timed section.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use iceberg_ht::table::SLOTS_PER_BLOCK;
use iceberg_ht::{Table, TableConfig, TableError};

use crate::report::{percentiles, BenchReport, Percentiles, SweepPoint, ThroughputRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkloadKind {
    Micro,
    YcsbA,
    YcsbB,
    YcsbC,
    SpaceSweep,
    Dist,
}

impl WorkloadKind {
    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Micro => "micro",
            WorkloadKind::YcsbA => "ycsb-a",
            WorkloadKind::YcsbB => "ycsb-b",
            WorkloadKind::YcsbC => "ycsb-c",
            WorkloadKind::SpaceSweep => "space-sweep",
            WorkloadKind::Dist => "dist",
        }
    }
}

impl std::str::FromStr for WorkloadKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "micro" => Ok(WorkloadKind::Micro),
            "ycsb-a" | "a" => Ok(WorkloadKind::YcsbA),
            "ycsb-b" | "b" => Ok(WorkloadKind::YcsbB),
            "ycsb-c" | "c" => Ok(WorkloadKind::YcsbC),
            "space-sweep" | "space" => Ok(WorkloadKind::SpaceSweep),
            "dist" => Ok(WorkloadKind::Dist),
            other => Err(format!("unknown workload {other:?}")),
        }
    }
}

/// Where a run keeps its table.
#[derive(Debug, Clone, Default)]
pub enum Backend {
    #[default]
    Shadow,
    /// Persist under this directory (one subdirectory per table built).
    File(PathBuf),
}

#[derive(Debug, Clone)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// The table is created with the smallest power-of-two block count
    /// whose primary levels hold at least this many slots.
    pub target_slots: u64,
    /// Fraction of primary capacity the fill phases reach.
    pub fill_fraction: f64,
    /// Maximum worker threads; sweeps use powers of two up to this.
    pub threads: usize,
    pub seed: u64,
    pub value_bytes: u32,
    pub key_bytes: u32,
    pub backend: Backend,
}

impl Default for WorkloadSpec {
    fn default() -> WorkloadSpec {
        WorkloadSpec {
            kind: WorkloadKind::Micro,
            target_slots: 1 << 20,
            fill_fraction: 0.95,
            threads: 16,
            seed: 0x1CE,
            value_bytes: 8,
            key_bytes: 8,
            backend: Backend::Shadow,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid workload: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl WorkloadSpec {
    fn validate(&self, expected: &[WorkloadKind]) -> Result<(), WorkloadError> {
        let bad = |msg: String| Err(WorkloadError::InvalidSpec(msg));
        if !expected.contains(&self.kind) {
            return bad(format!("kind {} does not fit this runner", self.kind.name()));
        }
        if !(self.fill_fraction > 0.0 && self.fill_fraction <= 1.0) {
            return bad(format!("fill fraction {} outside (0, 1]", self.fill_fraction));
        }
        if self.threads == 0 || self.threads > 1024 {
            return bad(format!("thread count {} outside 1..=1024", self.threads));
        }
        if self.target_slots < 2 * SLOTS_PER_BLOCK || self.target_slots > 1 << 32 {
            return bad(format!("target slot count {} unsupported", self.target_slots));
        }
        if self.key_bytes != 8 || self.value_bytes != 8 {
            return bad("only the native 8-byte key and value width is implemented".into());
        }
        Ok(())
    }

    fn log_blocks(&self) -> u32 {
        let blocks = self.target_slots.div_ceil(SLOTS_PER_BLOCK).next_power_of_two().max(2);
        blocks.trailing_zeros()
    }

    /// Build this spec's table; `label` keeps file-backed tables from
    /// different sweep configurations apart.
    fn build_table(&self, resize_threshold: f64, label: &str) -> Result<Table, WorkloadError> {
        let config = TableConfig {
            log_initial_blocks: self.log_blocks(),
            resize_threshold,
            hash_seed: self.seed,
        };
        let table = match &self.backend {
            Backend::Shadow => Table::new(config)?,
            Backend::File(dir) => {
                let sub = dir.join(label);
                std::fs::create_dir_all(&sub)
                    .map_err(|e| WorkloadError::InvalidSpec(format!("{}: {e}", sub.display())))?;
                Table::create_file(&sub, config)?
            }
        };
        Ok(table)
    }
}

/// The workload's key universe: a stateless bijective scramble, so any
/// index's key can be computed anywhere without sharing buffers, and keys
/// at distinct indices never collide.
fn key_at(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Value stored for a key. The top bit stays clear, so it can never be the
/// reserved free-slot sentinel.
fn value_of(key: u64) -> u64 {
    (key ^ 0x5DEE_CE66_D154_33C5) >> 1
}

/// Per-thread latency capture: a running exact maximum over every op, plus
/// strided samples into a preallocated buffer for the quantiles.
struct Recorder {
    samples: Vec<u64>,
    stride: usize,
    countdown: usize,
    max: u64,
}

/// Samples kept per op class across all threads; enough for a stable
/// nearest-rank p99.99.
const SAMPLE_BUDGET: usize = 1 << 22;

impl Recorder {
    fn new(expected_ops: usize, thread_count: usize) -> Recorder {
        let cap = (SAMPLE_BUDGET / thread_count.max(1)).max(1);
        let stride = expected_ops.div_ceil(cap).max(1);
        Recorder {
            samples: Vec::with_capacity(expected_ops.div_ceil(stride)),
            stride,
            countdown: 0,
            max: 0,
        }
    }

    #[inline]
    fn record(&mut self, nanos: u64) {
        self.max = self.max.max(nanos);
        if self.countdown == 0 {
            self.samples.push(nanos);
            self.countdown = self.stride - 1;
        } else {
            self.countdown -= 1;
        }
    }

    fn merge(parts: Vec<Recorder>) -> Percentiles {
        let mut all = Vec::new();
        let mut max = 0;
        for part in parts {
            all.extend(part.samples);
            max = max.max(part.max);
        }
        let mut p = percentiles(&mut all);
        p.max = max;
        p
    }
}

/// Split `keys` into `threads` nearly-equal contiguous slices.
fn slices(keys: &[u64], threads: usize) -> Vec<&[u64]> {
    let per = keys.len().div_ceil(threads.max(1)).max(1);
    keys.chunks(per).collect()
}

/// Run one timed phase: every thread applies `op` to its slice, recording
/// per-op latency. Returns (ops/sec, merged percentiles).
fn drive<F>(keys: &[u64], threads: usize, op: F) -> (f64, Percentiles)
where
    F: Fn(u64) + Sync,
{
    let start = Instant::now();
    let parts: Vec<Recorder> = std::thread::scope(|s| {
        let handles: Vec<_> = slices(keys, threads)
            .into_iter()
            .map(|chunk| {
                let op = &op;
                s.spawn(move || {
                    let mut rec = Recorder::new(chunk.len(), threads);
                    for &k in chunk {
                        let t0 = Instant::now();
                        op(k);
                        rec.record(t0.elapsed().as_nanos() as u64);
                    }
                    rec
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let wall = start.elapsed().as_secs_f64();
    (keys.len() as f64 / wall, Recorder::merge(parts))
}

fn ops_per_sec(ops: usize, wall_secs: f64) -> f64 {
    if ops == 0 {
        0.0
    } else {
        ops as f64 / wall_secs
    }
}

/// Thread counts a sweep visits, capped by the requested maximum.
fn thread_sweep(max: usize) -> Vec<usize> {
    [1usize, 2, 4, 8, 16].into_iter().filter(|&t| t <= max).collect()
}

/// Four-phase microbenchmark per thread count: fill to the target fraction,
/// query everything resident, query fresh (almost surely absent) keys, then
/// delete down to half. Percentiles, level distribution, and space
/// efficiency are reported from the highest thread count.
pub fn run_micro(spec: &WorkloadSpec) -> Result<BenchReport, WorkloadError> {
    spec.validate(&[WorkloadKind::Micro])?;
    let mut report = BenchReport { workload: spec.kind.name().into(), ..Default::default() };

    // Generated once, outside every timed section.
    let blocks = 1u64 << spec.log_blocks();
    let capacity = blocks * SLOTS_PER_BLOCK;
    let n = (spec.fill_fraction * capacity as f64) as usize;
    let keys: Vec<u64> = (0..n as u64).map(|i| key_at(spec.seed, i)).collect();
    let fresh: Vec<u64> = (0..n as u64).map(|i| key_at(!spec.seed, i)).collect();

    for threads in thread_sweep(spec.threads) {
        // A fresh table per configuration keeps the phases identical.
        let table = spec.build_table(1.0, &format!("micro-t{threads}"))?;

        let (insert, lat_insert) =
            drive(&keys, threads, |k| match table.insert(k, value_of(k)) {
                Ok(_) => {}
                Err(e) => panic!("insert({k:#x}) failed: {e}"),
            });
        let distribution = table.level_distribution();
        let efficiency =
            (n as u64 * 16) as f64 / table.footprint_bytes() as f64;

        let (positive, lat_positive) = drive(&keys, threads, |k| {
            assert!(table.get(k).is_some(), "resident key {k:#x} missing");
        });
        let (negative, lat_negative) = drive(&fresh, threads, |k| {
            let _ = table.get(k);
        });
        let half = &keys[..n / 2];
        let (remove, lat_remove) = drive(half, threads, |k| {
            assert!(table.remove(k).expect("remove failed"), "key {k:#x} was not resident");
        });

        report.rows.push(ThroughputRow { threads, insert, positive, negative, remove });
        report.latency_ns.insert("insert".into(), lat_insert);
        report.latency_ns.insert("positive".into(), lat_positive);
        report.latency_ns.insert("negative".into(), lat_negative);
        report.latency_ns.insert("remove".into(), lat_remove);
        report.level_distribution = Some([distribution.0, distribution.1, distribution.2]);
        report.space_efficiency = Some(efficiency);
    }

    report.counters.insert("keys".into(), n as u64);
    report.counters.insert("capacity".into(), capacity);
    report.counters.insert("blocks".into(), blocks);
    Ok(report)
}

/// YCSB-style run: load 4× the target slot count (forcing doublings), then
/// a mixed phase whose size and read/write split follow the workload
/// letter. Reads draw ranks from a Zipf(0.99) over the loaded keys; writes
/// insert previously untouched keys.
pub fn run_ycsb(spec: &WorkloadSpec) -> Result<BenchReport, WorkloadError> {
    spec.validate(&[WorkloadKind::YcsbA, WorkloadKind::YcsbB, WorkloadKind::YcsbC])?;
    let (ops_multiplier, write_pct) = match spec.kind {
        WorkloadKind::YcsbA => (2, 50u32),
        WorkloadKind::YcsbB => (20, 5),
        _ => (1, 0),
    };
    let mut report = BenchReport { workload: spec.kind.name().into(), ..Default::default() };
    let table = spec.build_table(0.85, "ycsb")?;

    // Load phase, untimed per-op: bulk insert 4× target_slots fresh keys.
    let loaded = 4 * spec.target_slots;
    let load_keys: Vec<u64> = (0..loaded).map(|i| key_at(spec.seed, i)).collect();
    let load_start = Instant::now();
    std::thread::scope(|s| {
        for chunk in slices(&load_keys, spec.threads) {
            let table = &table;
            s.spawn(move || {
                for &k in chunk {
                    table.insert(k, value_of(k)).expect("load insert failed");
                }
            });
        }
    });
    let load_secs = load_start.elapsed().as_secs_f64();
    drop(load_keys);
    report.counters.insert("loaded_keys".into(), loaded);
    report.counters.insert("generation_after_load".into(), table.generation());
    report.counters.insert("load_ops_per_sec".into(), (loaded as f64 / load_secs) as u64);

    // Run phase: every thread owns a disjoint op range and a disjoint pool
    // of fresh keys, so the touched key sequence is deterministic per
    // thread regardless of scheduling.
    let run_ops = (ops_multiplier * loaded) as usize;
    let stores_before = table.durable_store().store_count();
    let per_thread = run_ops.div_ceil(spec.threads);
    let writes_done = AtomicU64::new(0);
    let reads_done = AtomicU64::new(0);
    let run_start = Instant::now();
    let recorders: Vec<(Recorder, Recorder)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..spec.threads)
            .map(|tid| {
                let table = &table;
                let writes_done = &writes_done;
                let reads_done = &reads_done;
                s.spawn(move || {
                    let ops_here = per_thread.min(run_ops - (tid * per_thread).min(run_ops));
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(spec.seed ^ (tid as u64).wrapping_mul(0xD6E8));
                    let zipf = Zipf::new(loaded, 0.99).expect("zipf parameters");
                    let mut write_rec = Recorder::new(ops_here, spec.threads);
                    let mut read_rec = Recorder::new(ops_here, spec.threads);
                    let (mut writes, mut reads) = (0u64, 0u64);
                    for j in 0..ops_here {
                        if write_pct > 0 && rng.gen_ratio(write_pct, 100) {
                            let k = key_at(spec.seed, loaded + (tid * per_thread + j) as u64);
                            let t0 = Instant::now();
                            table.insert(k, value_of(k)).expect("run insert failed");
                            write_rec.record(t0.elapsed().as_nanos() as u64);
                            writes += 1;
                        } else {
                            let rank = zipf.sample(&mut rng) as u64;
                            let k = key_at(spec.seed, rank - 1);
                            let t0 = Instant::now();
                            let got = table.get(k);
                            read_rec.record(t0.elapsed().as_nanos() as u64);
                            assert!(got.is_some(), "loaded key {k:#x} missing");
                            reads += 1;
                        }
                    }
                    writes_done.fetch_add(writes, Ordering::Relaxed);
                    reads_done.fetch_add(reads, Ordering::Relaxed);
                    (write_rec, read_rec)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let run_secs = run_start.elapsed().as_secs_f64();

    let writes = writes_done.into_inner();
    let reads = reads_done.into_inner();
    let (write_recs, read_recs): (Vec<_>, Vec<_>) = recorders.into_iter().unzip();
    if writes > 0 {
        report.latency_ns.insert("insert".into(), Recorder::merge(write_recs));
    }
    if reads > 0 {
        report.latency_ns.insert("read".into(), Recorder::merge(read_recs));
    }
    report.rows.push(ThroughputRow {
        threads: spec.threads,
        insert: ops_per_sec(writes as usize, run_secs),
        positive: ops_per_sec(reads as usize, run_secs),
        negative: 0.0,
        remove: 0.0,
    });
    let distribution = table.level_distribution();
    report.level_distribution = Some([distribution.0, distribution.1, distribution.2]);
    report.space_efficiency =
        Some((table.len() * 16) as f64 / table.footprint_bytes() as f64);
    report.counters.insert("run_ops".into(), writes + reads);
    report.counters.insert("run_writes".into(), writes);
    report.counters.insert("run_reads".into(), reads);
    report
        .counters
        .insert("run_stores".into(), table.durable_store().store_count() - stores_before);
    report.counters.insert("generation_final".into(), table.generation());
    report.counters.insert("final_len".into(), table.len());
    Ok(report)
}

/// Fill a fixed-size table from empty to `fill_fraction` in 5% steps,
/// recording instantaneous insert throughput and space efficiency at each.
pub fn run_space_sweep(spec: &WorkloadSpec) -> Result<BenchReport, WorkloadError> {
    spec.validate(&[WorkloadKind::SpaceSweep])?;
    let mut report = BenchReport { workload: spec.kind.name().into(), ..Default::default() };
    let table = spec.build_table(1.0, "sweep")?;
    let capacity = table.capacity();

    let top_percent = (spec.fill_fraction * 100.0).round() as u32;
    let keys: Vec<u64> =
        (0..(capacity * top_percent as u64).div_ceil(100)).map(|i| key_at(spec.seed, i)).collect();

    let mut inserted = 0usize;
    let mut step = 5u32;
    while step <= top_percent {
        let goal = (capacity * step as u64 / 100) as usize;
        let slice = &keys[inserted..goal];
        let t0 = Instant::now();
        for &k in slice {
            table.insert(k, value_of(k)).expect("sweep insert failed");
        }
        let wall = t0.elapsed().as_secs_f64();
        inserted = goal;
        report.sweep.push(SweepPoint {
            fill_percent: step,
            insert_ops_per_sec: ops_per_sec(slice.len(), wall),
            footprint_bytes: table.footprint_bytes(),
            efficiency: (inserted as u64 * 16) as f64 / table.footprint_bytes() as f64,
        });
        step += 5;
    }

    let distribution = table.level_distribution();
    report.level_distribution = Some([distribution.0, distribution.1, distribution.2]);
    report.space_efficiency = report.sweep.last().map(|p| p.efficiency);
    report.counters.insert("capacity".into(), capacity);
    report.counters.insert("blocks".into(), table.block_count());
    report.counters.insert("keys".into(), inserted as u64);
    Ok(report)
}

/// Fill to the target fraction and report where the entries actually live.
pub fn run_dist(spec: &WorkloadSpec) -> Result<BenchReport, WorkloadError> {
    spec.validate(&[WorkloadKind::Dist])?;
    let mut report = BenchReport { workload: spec.kind.name().into(), ..Default::default() };
    let table = spec.build_table(1.0, "dist")?;
    let capacity = table.capacity();
    let n = (spec.fill_fraction * capacity as f64) as u64;

    let keys: Vec<u64> = (0..n).map(|i| key_at(spec.seed, i)).collect();
    std::thread::scope(|s| {
        for chunk in slices(&keys, spec.threads) {
            let table = &table;
            s.spawn(move || {
                for &k in chunk {
                    table.insert(k, value_of(k)).expect("fill insert failed");
                }
            });
        }
    });

    let distribution = table.level_distribution();
    report.level_distribution = Some([distribution.0, distribution.1, distribution.2]);
    report.space_efficiency = Some((n * 16) as f64 / table.footprint_bytes() as f64);
    report.counters.insert("keys".into(), n);
    report.counters.insert("capacity".into(), capacity);
    report.counters.insert("blocks".into(), table.block_count());
    Ok(report)
}
