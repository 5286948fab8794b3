//! The release gate: eleven checks covering placement statistics, space
//! efficiency, differential correctness, stability, crash consistency,
//! flush accounting, the three balls-and-bins bounds, concurrency, and the
//! metadata false-positive rate. One verdict line prints per check (visible
//! under `--nocapture`); the test fails if any check fails.
//!
//! Tolerances are pinned next to each check. Statistical bands are wide
//! enough for seed-to-seed variation but tight enough to catch a broken
//! placement policy or a skewed hash.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use iceberg_bench::{run_dist, run_space_sweep, WorkloadKind, WorkloadSpec};
use iceberg_ht::oracle::{
    concurrent_stress, crash_sweep, differential_test, generate_trace, Skew, StressSpec,
    TraceSpec,
};
use iceberg_ht::sim::{capacity_for, simulate_frontyard, simulate_p2c, simulate_split, SimConfig};
use iceberg_ht::{Level, Table, TableConfig, Tearing};
use statrs::distribution::{Binomial, Discrete};

/// Injective key stream: distinct indices give distinct keys, so exact
/// membership assertions need no dedup bookkeeping.
fn keys(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add((index + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn value_for(key: u64) -> u64 {
    key.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1
}

// --- 1 -------------------------------------------------------------------

/// A 2^14-block table filled to 95% of capacity, no resizing: the front
/// yard should hold roughly 91% of keys, level 2 most of the rest, and
/// level 3 a trace. Bands are ±2 points around the expected split.
fn level_distribution_at_scale() -> String {
    let started = Instant::now();
    let spec = WorkloadSpec {
        kind: WorkloadKind::Dist,
        target_slots: (1 << 14) * 72,
        threads: 1,
        seed: 0xACC1,
        ..WorkloadSpec::default()
    };
    let report = run_dist(&spec).expect("dist run failed");
    assert_eq!(report.counters["blocks"], 1 << 14);
    let [l1, l2, l3] = report.level_distribution.expect("distribution missing");
    assert!((0.892..=0.932).contains(&l1), "level-1 fraction {l1:.4} outside [0.892, 0.932]");
    assert!((0.067..=0.107).contains(&l2), "level-2 fraction {l2:.4} outside [0.067, 0.107]");
    assert!(l3 <= 0.0005, "level-3 fraction {l3:.6} above 0.05%");
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(30), "took {elapsed:.1?}, budget 30s");
    format!("L1 {:.2}% / L2 {:.2}% / L3 {:.4}%", l1 * 100.0, l2 * 100.0, l3 * 100.0)
}

// --- 2 -------------------------------------------------------------------

/// The fill sweep's final point (95% full) must keep resident key-value
/// bytes at 85% or more of the whole footprint, volatile mirrors included.
fn space_efficiency_at_full_fill() -> String {
    let spec = WorkloadSpec {
        kind: WorkloadKind::SpaceSweep,
        target_slots: 1 << 18,
        threads: 1,
        seed: 0xACC2,
        ..WorkloadSpec::default()
    };
    let report = run_space_sweep(&spec).expect("sweep failed");
    let last = report.sweep.last().expect("no sweep points");
    assert_eq!(last.fill_percent, 95);
    assert!(last.efficiency >= 0.85, "efficiency {:.4} below 0.85", last.efficiency);
    format!("{:.1}% of footprint is data at 95% fill", last.efficiency * 100.0)
}

// --- 3 -------------------------------------------------------------------

/// Five million-op traces against the reference map: grow-heavy, steady,
/// then drain-heavy segments with reopens sprinkled through. Each seed must
/// fold at least once, and a fold can only follow a doubling, so both
/// resize directions are witnessed. Zero divergences allowed.
fn differential_traces() -> String {
    let started = Instant::now();
    let config = TableConfig { log_initial_blocks: 6, ..TableConfig::default() };
    let mut total_shrinks = 0;
    for seed in (0..5).map(|i| 0xD1F0 + i) {
        let segments = [
            TraceSpec {
                seed,
                ops: 350_000,
                key_space: 30_000,
                weights: (6, 1, 3),
                maintenance_every: 25_000,
                reopens: true,
                ..TraceSpec::default()
            },
            TraceSpec {
                seed: seed ^ 0x10,
                ops: 300_000,
                key_space: 30_000,
                weights: (3, 3, 4),
                maintenance_every: 30_000,
                reopens: true,
                ..TraceSpec::default()
            },
            TraceSpec {
                seed: seed ^ 0x20,
                ops: 350_000,
                key_space: 30_000,
                weights: (1, 6, 3),
                maintenance_every: 20_000,
                ..TraceSpec::default()
            },
        ];
        let outcome = differential_test(&segments, config)
            .unwrap_or_else(|d| panic!("seed {seed:#x}: {d}"));
        assert_eq!(outcome.ops_run, 1_000_000);
        assert!(outcome.shrinks >= 1, "seed {seed:#x} never folded, so resizes went untested");
        total_shrinks += outcome.shrinks;
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(120), "took {elapsed:.1?}, budget 2min");
    format!("5 seeds x 10^6 ops, {total_shrinks} folds, zero divergences")
}

// --- 4 -------------------------------------------------------------------

/// 10^5 keys: the (level, block, slot) a key gets at insert time must be
/// exactly where a lookup finds it later, through unrelated inserts,
/// removals, and in-place updates — as long as no resize runs.
fn locations_are_stable() -> String {
    let config =
        TableConfig { log_initial_blocks: 11, resize_threshold: 1.0, hash_seed: 0x57AB };
    let table = Table::new(config).expect("table creation");
    let n = 100_000u64;

    let mut recorded = Vec::with_capacity(n as usize);
    for i in 0..n {
        let k = keys(0x4ACC, i);
        table.insert(k, value_for(k)).expect("insert");
        let (_, loc) = table.get_located(k).expect("just inserted");
        recorded.push((k, loc));
    }
    // Unrelated churn: 30k strangers in, 20k back out, plus in-place
    // updates of every 7th resident.
    for i in n..n + 30_000 {
        table.insert(keys(0x4ACC, i), 9).expect("stranger insert");
    }
    for i in n..n + 20_000 {
        assert!(table.remove(keys(0x4ACC, i)).expect("stranger remove"));
    }
    for (k, _) in recorded.iter().step_by(7) {
        table.insert(*k, value_for(*k) ^ 0xFF).expect("update");
    }

    assert_eq!(table.generation(), 0, "the no-resize precondition broke");
    let mut violations = 0;
    for (k, loc) in &recorded {
        let (_, now) = table.get_located(*k).expect("resident vanished");
        if now != *loc {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} of {n} keys moved");
    format!("{n} keys kept their slot through churn")
}

// --- 5 -------------------------------------------------------------------

/// Crash at every durable event of a 1000-op trace that grows, drains, and
/// folds; recover; require exactly the acknowledged operations — under both
/// the all-or-nothing and the torn-line crash models.
fn crash_point_sweep() -> String {
    let started = Instant::now();
    let config = TableConfig { log_initial_blocks: 2, ..TableConfig::default() };
    let segments = [
        TraceSpec {
            seed: 0xC5,
            ops: 500,
            key_space: 600,
            weights: (8, 1, 1),
            maintenance_every: 100,
            ..TraceSpec::default()
        },
        TraceSpec {
            seed: 0xC5 ^ 0x10,
            ops: 300,
            key_space: 600,
            weights: (1, 8, 1),
            maintenance_every: 60,
            ..TraceSpec::default()
        },
        TraceSpec {
            seed: 0xC5 ^ 0x20,
            ops: 200,
            key_space: 300,
            weights: (5, 2, 3),
            maintenance_every: 50,
            ..TraceSpec::default()
        },
    ];

    // Coverage pre-check: the trace must actually cross a doubling, or the
    // sweep would say nothing about resize crash safety.
    {
        let probe = Table::new(config).expect("probe table");
        let mut peak = 0;
        for op in segments.iter().flat_map(generate_trace) {
            op.apply_to(&probe).expect("probe replay");
            peak = peak.max(probe.generation());
        }
        assert!(peak >= 1, "trace never doubled; widen its key space");
    }

    let mut detail = Vec::new();
    for tearing in [Tearing::DropAll, Tearing::WordSubset] {
        let outcome = crash_sweep(&segments, config, tearing)
            .unwrap_or_else(|d| panic!("{tearing:?}: {d}"));
        assert_eq!(outcome.ops, 1000);
        assert!(outcome.crash_points > 2000, "suspiciously few durable events");
        detail.push(format!("{tearing:?}: {} crash points", outcome.crash_points));
    }
    let elapsed = started.elapsed();
    assert!(elapsed < Duration::from_secs(300), "took {elapsed:.1?}, budget 5min");
    detail.join(", ")
}

// --- 6 -------------------------------------------------------------------

/// Every level-1 and level-2 insert must be acknowledged by exactly one
/// flush+fence: the slot write is self-certifying, so no ordering fence is
/// needed between value and key.
fn one_flush_per_insert() -> String {
    let config = TableConfig { log_initial_blocks: 4, resize_threshold: 1.0, hash_seed: 0x6AB };
    let table = Table::new(config).expect("table creation");
    let store = table.durable_store();

    // A nearly empty 16-block table places everything in level 1.
    let mut l1_seen = 0;
    for i in 0..200 {
        let k = keys(0x66AA, i);
        let before = store.flush_count();
        table.insert(k, value_for(k)).expect("insert");
        let flushes = store.flush_count() - before;
        let (_, loc) = table.get_located(k).expect("present");
        assert_eq!(loc.level, Level::L1, "unexpectedly crowded block");
        assert_eq!(flushes, 1, "level-1 insert of {k:#x} took {flushes} flushes");
        l1_seen += 1;
    }

    // Saturate one front-yard block so further keys aimed at it spill to
    // level 2, then count their flushes.
    let m = table.block_count();
    let mut i = 1_000_000;
    let mut l2_seen = 0;
    while l2_seen < 8 {
        let k = keys(0x66AA, i);
        i += 1;
        if table.hashes(k).block0(m) != 0 {
            continue;
        }
        let before = store.flush_count();
        table.insert(k, value_for(k)).expect("insert");
        let flushes = store.flush_count() - before;
        let (_, loc) = table.get_located(k).expect("present");
        if loc.level == Level::L2 {
            assert_eq!(flushes, 1, "level-2 insert of {k:#x} took {flushes} flushes");
            l2_seen += 1;
        } else {
            assert_eq!(loc.level, Level::L1);
            assert_eq!(flushes, 1, "level-1 insert of {k:#x} took {flushes} flushes");
        }
    }
    format!("{l1_seen} level-1 and {l2_seen} level-2 inserts, one flush each")
}

// --- 7 -------------------------------------------------------------------

/// Front-yard overflow against the analytic oracle: throwing 60·2^14 balls
/// into 2^14 bins of capacity 64, the expected overflow per bin is
/// E[(X-64)+] for X ~ Binomial(60·2^14, 2^-14). Each seed must land within
/// ±15% of that, and raising the slack parameter must never increase
/// overflow.
fn frontyard_overflow_oracle() -> String {
    let bins = 1u64 << 14;
    let balls = 60 * bins;
    let binomial = Binomial::new(1.0 / bins as f64, balls).expect("binomial parameters");
    let expected: f64 =
        (65..=260).map(|k| (k - 64) as f64 * binomial.pmf(k)).sum::<f64>() / 60.0;
    assert!(expected > 0.0);

    let mut worst_rel = 0.0f64;
    for seed in 0..5 {
        let stats = simulate_frontyard(&SimConfig {
            bins,
            capacity: 64,
            target_balls: balls,
            churn_steps: 0,
            seed: 0x7A00 + seed,
        });
        let rel = (stats.overflow_fraction - expected).abs() / expected;
        assert!(
            rel <= 0.15,
            "seed {seed}: overflow {:.5} vs oracle {expected:.5} ({:.1}% off)",
            stats.overflow_fraction,
            rel * 100.0
        );
        worst_rel = worst_rel.max(rel);
    }

    let mut last = f64::INFINITY;
    for slack in [0u32, 2, 4, 6] {
        let stats = simulate_frontyard(&SimConfig {
            bins: 1 << 13,
            capacity: capacity_for(16, slack),
            target_balls: 16 << 13,
            churn_steps: 0,
            seed: 0x7B00,
        });
        assert!(
            stats.overflow_fraction <= last + 1e-12,
            "overflow rose from {last:.6} when slack reached {slack}"
        );
        last = stats.overflow_fraction;
    }
    format!("oracle {:.4}, worst seed {:.1}% off, slack monotone", expected, worst_rel * 100.0)
}

// --- 8 -------------------------------------------------------------------

/// Two-choice placement at 90% average fill across 2^16 bins: ten seeds of
/// ten million delete+reinsert steps may never push any bin past 8 — the
/// bound the level-2 block size is built on.
fn two_choice_bound() -> String {
    let bins = 1u64 << 16;
    let mut worst = 0;
    for seed in 0..10 {
        let stats = simulate_p2c(&SimConfig {
            bins,
            capacity: 0,
            target_balls: bins * 9 / 10,
            churn_steps: 10_000_000,
            seed: 0x8000 + seed,
        });
        assert!(stats.max_load <= 8, "seed {seed}: max load {}", stats.max_load);
        worst = worst.max(stats.max_load);
    }
    format!("10 seeds x 10^7 churn steps, max load ever seen: {worst}")
}

// --- 9 -------------------------------------------------------------------

/// Repeated bin splitting from 2^10 to 2^18 bins (each split re-derives
/// placements from the next hash bit) must also keep every bin at 8 or
/// fewer through fill, churn, and every split.
fn split_bound() -> String {
    let balls = 1u64 << 16;
    let mut worst = 0;
    let mut final_bins = 0;
    for seed in 0..10 {
        let stats = simulate_split(&SimConfig {
            bins: 1 << 10,
            capacity: 0,
            target_balls: balls,
            churn_steps: balls,
            seed: 0x9000 + seed,
        });
        assert!(stats.max_load <= 8, "seed {seed}: max load {}", stats.max_load);
        assert!(stats.final_bins >= 1 << 17, "only reached {} bins", stats.final_bins);
        assert_eq!(stats.final_balls, balls, "split run lost balls");
        worst = worst.max(stats.max_load);
        final_bins = stats.final_bins;
    }
    format!("2^10 -> {final_bins} bins, max load ever seen: {worst}")
}

// --- 10 ------------------------------------------------------------------

/// Eight threads, disjoint and shared key modes, 10^5 ops per thread with
/// concurrent maintenance, under a 60s watchdog. The 8-vs-1 thread insert
/// scaling ratio is asserted only when the host actually has 8 cores.
fn concurrent_stress_and_scaling() -> String {
    let config = TableConfig { log_initial_blocks: 4, ..TableConfig::default() };
    for (disjoint, skew) in [(true, Skew::Uniform), (false, Skew::Zipf(0.9))] {
        let spec = StressSpec {
            threads: 8,
            ops_per_thread: 100_000,
            key_space: if disjoint { 4096 } else { 16384 },
            disjoint,
            skew,
            seed: 0xA10,
            maintenance: true,
            watchdog_secs: 60,
        };
        let outcome = concurrent_stress(&spec, config)
            .unwrap_or_else(|d| panic!("disjoint={disjoint}: {d}"));
        assert_eq!(outcome.total_ops, 800_000);
    }

    let fill_throughput = |threads: u64| -> f64 {
        let table = Table::new(TableConfig {
            log_initial_blocks: 12,
            resize_threshold: 1.0,
            hash_seed: 0xA77,
        })
        .expect("table creation");
        let per_thread = 200_000 / threads;
        let started = Instant::now();
        std::thread::scope(|scope| {
            for t in 0..threads {
                let table = &table;
                scope.spawn(move || {
                    for i in t * per_thread..(t + 1) * per_thread {
                        table.insert(keys(0xF111, i), 3).expect("insert");
                    }
                });
            }
        });
        (per_thread * threads) as f64 / started.elapsed().as_secs_f64()
    };
    let single = fill_throughput(1);
    let eight = fill_throughput(8);
    let ratio = eight / single;
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    if cores >= 8 {
        assert!(ratio >= 4.0, "8-thread inserts only {ratio:.2}x single-thread on {cores} cores");
        format!("both modes clean; scaling {ratio:.2}x on {cores} cores")
    } else {
        format!("both modes clean; scaling check skipped ({cores} cores, measured {ratio:.2}x)")
    }
}

// --- 11 ------------------------------------------------------------------

/// Negative lookups against a completely full front-yard block: the 8-bit
/// fingerprints take 254 usable values, so a miss should read an actual
/// slot only 64/254 ≈ 0.252 times per query on average (±20%).
fn negative_probe_rate() -> String {
    let config = TableConfig { log_initial_blocks: 1, resize_threshold: 1.0, hash_seed: 0xB11 };
    let table = Table::new(config).expect("table creation");
    let m = table.block_count();

    let mut placed = 0u32;
    let mut i = 0u64;
    while placed < 64 {
        let k = keys(0x1111, i);
        i += 1;
        if table.hashes(k).block0(m) != 0 {
            continue;
        }
        table.insert(k, value_for(k)).expect("insert");
        let (_, loc) = table.get_located(k).expect("present");
        assert_eq!((loc.level, loc.block), (Level::L1, 0), "block 0 should absorb all 64");
        placed += 1;
    }

    let queries = 1_000_000u64;
    let mut asked = 0u64;
    let mut slot_reads = 0u64;
    let mut j = 0u64;
    while asked < queries {
        let k = keys(0x2222, j);
        j += 1;
        if table.hashes(k).block0(m) != 0 {
            continue;
        }
        let (hit, stats) = table.probe_stats(k);
        assert_eq!(hit, None, "key stream accidentally collided with a resident");
        slot_reads += stats.l1_slot_reads as u64;
        asked += 1;
    }
    let mean = slot_reads as f64 / queries as f64;
    let expected = 64.0 / 254.0;
    let rel = (mean - expected).abs() / expected;
    assert!(
        rel <= 0.20,
        "mean level-1 slot reads per miss {mean:.4} vs expected {expected:.4} ({:.1}% off)",
        rel * 100.0
    );
    format!("{mean:.4} slot reads per miss vs analytic {expected:.4} ({:.1}% off)", rel * 100.0)
}

// --------------------------------------------------------------------------

/// (number, name, check). A check panics on failure and returns its
/// measured values on success.
type Criterion = (u32, &'static str, fn() -> String);

#[test]
fn acceptance_gate() {
    let criteria: &[Criterion] = &[
        (1, "level distribution at a 95%-full 2^14-block table", level_distribution_at_scale),
        (2, "space efficiency at 95% fill", space_efficiency_at_full_fill),
        (3, "million-op differential traces with doubling and fold", differential_traces),
        (4, "key locations hold still absent resize", locations_are_stable),
        (5, "exhaustive crash-point sweep, both tearing modes", crash_point_sweep),
        (6, "one flush acknowledges a level-1 or level-2 insert", one_flush_per_insert),
        (7, "front-yard overflow matches the binomial-tail oracle", frontyard_overflow_oracle),
        (8, "two-choice max load stays at most 8 under churn", two_choice_bound),
        (9, "splitting from 2^10 to 2^18 bins keeps max load at most 8", split_bound),
        (10, "eight-thread stress, shared and disjoint, plus scaling", concurrent_stress_and_scaling),
        (11, "false-positive probe rate on a full level-1 block", negative_probe_rate),
    ];

    let mut failures = Vec::new();
    for (number, name, run) in criteria {
        let started = Instant::now();
        match catch_unwind(AssertUnwindSafe(run)) {
            Ok(detail) => {
                println!("[PASS] {number:>2}. {name} — {detail} ({:.1?})", started.elapsed());
            }
            Err(payload) => {
                let message = payload
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| payload.downcast_ref::<&str>().copied())
                    .unwrap_or("(non-string panic)");
                println!("[FAIL] {number:>2}. {name} — {message}");
                failures.push(format!("{number}. {name}: {message}"));
            }
        }
    }
    assert!(failures.is_empty(), "acceptance failures:\n{}", failures.join("\n"));
}
