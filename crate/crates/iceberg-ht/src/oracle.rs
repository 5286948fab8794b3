//! Randomized differential and crash-injection harnesses.
//!
//! A `BTreeMap` is the reference for sequential semantics: traces are
//! replayed against both maps and any disagreement — per-op result or final
//! content — is reported as a [`Divergence`]. The crash sweep replays one
//! trace many times, freezing durability at every store/flush event in turn
//! and recovering the frozen image; the concurrent harness checks per-key
//! sequential behavior (disjoint ranges) or written-value membership at
//! quiescence (shared keys) under thread contention.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Mutex};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::region::Tearing;
use crate::table::{InsertOutcome, Table, TableConfig, TableError};
use crate::INVALID;

/// One step of a generated workload.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Insert(u64, u64),
    Remove(u64),
    Get(u64),
    /// Fold the table into half its blocks (no-op when it would not fit).
    Shrink,
    /// Drain any in-progress lazy migration.
    FinishMigration,
    /// Simulated power loss followed by recovery.
    Reopen,
}

/// Key-draw distribution over the key space.
#[derive(Clone, Copy, Debug)]
pub enum Skew {
    Uniform,
    /// Zipf with the given exponent; small exponents ≈ uniform, ~1.0 gives
    /// the classic hot-key shape.
    Zipf(f64),
}

/// Deterministic recipe for a trace segment: (spec, seed) fully determine
/// the op sequence.
#[derive(Clone, Debug)]
pub struct TraceSpec {
    pub seed: u64,
    pub ops: usize,
    pub key_space: u64,
    pub skew: Skew,
    /// Relative draw weights for insert / remove / get.
    pub weights: (u32, u32, u32),
    /// Expected ops between maintenance events (0 disables them).
    pub maintenance_every: usize,
    /// Whether maintenance may include crash + reopen.
    pub reopens: bool,
}

impl Default for TraceSpec {
    fn default() -> TraceSpec {
        TraceSpec {
            seed: 0,
            ops: 10_000,
            key_space: 4096,
            skew: Skew::Uniform,
            weights: (5, 2, 3),
            maintenance_every: 0,
            reopens: false,
        }
    }
}

/// First point where the table disagreed with the reference.
#[derive(Debug)]
pub struct Divergence {
    /// Index into the flattened op sequence (or the op in flight for crash
    /// sweeps).
    pub step: usize,
    pub detail: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "divergence at op {}: {}", self.step, self.detail)
    }
}

impl std::error::Error for Divergence {}

fn diverge<T>(step: usize, detail: String) -> Result<T, Divergence> {
    Err(Divergence { step, detail })
}

/// Expand a spec into its op sequence.
pub fn generate_trace(spec: &TraceSpec) -> Vec<Op> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zipf = match spec.skew {
        Skew::Zipf(s) => Some(Zipf::new(spec.key_space, s).expect("bad zipf parameters")),
        Skew::Uniform => None,
    };
    let key = |rng: &mut ChaCha8Rng| -> u64 {
        // An occasional reserved key exercises the side slot.
        if rng.gen_ratio(1, 500) {
            return INVALID;
        }
        match &zipf {
            Some(z) => z.sample(rng) as u64 - 1,
            None => rng.gen_range(0..spec.key_space),
        }
    };
    let mut menu = vec![Op::Shrink, Op::FinishMigration];
    if spec.reopens {
        menu.push(Op::Reopen);
        menu.push(Op::Reopen);
    }
    let (wi, wr, wg) = spec.weights;
    let total = wi + wr + wg;
    assert!(total > 0, "all op weights are zero");
    (0..spec.ops)
        .map(|_| {
            if spec.maintenance_every > 0 && rng.gen_ratio(1, spec.maintenance_every as u32) {
                return menu[rng.gen_range(0..menu.len())];
            }
            let roll = rng.gen_range(0..total);
            if roll < wi {
                Op::Insert(key(&mut rng), rng.gen_range(0..u64::MAX))
            } else if roll < wi + wr {
                Op::Remove(key(&mut rng))
            } else {
                Op::Get(key(&mut rng))
            }
        })
        .collect()
}

/// What a differential run did, for callers that assert on coverage.
#[derive(Debug, Clone, Copy)]
pub struct TraceOutcome {
    pub ops_run: usize,
    pub final_len: u64,
    pub generation: u64,
    /// Shrinks that actually folded the table (refusals excluded).
    pub shrinks: usize,
    pub reopens: usize,
}

/// Snapshot the table's full content (side slot included) as a map.
pub fn table_content(table: &Table) -> BTreeMap<u64, u64> {
    let mut out = BTreeMap::new();
    table.for_each_entry(|k, v| {
        out.insert(k, v);
    });
    out
}

fn first_diff(got: &BTreeMap<u64, u64>, want: &BTreeMap<u64, u64>) -> Option<String> {
    for (k, v) in want {
        match got.get(k) {
            None => return Some(format!("key {k:#x} missing (want value {v:#x})")),
            Some(g) if g != v => {
                return Some(format!("key {k:#x}: value {g:#x}, want {v:#x}"))
            }
            _ => {}
        }
    }
    got.iter()
        .find(|(k, _)| !want.contains_key(k))
        .map(|(k, v)| format!("spurious key {k:#x} (value {v:#x})"))
}

/// Replay trace segments sequentially on one table, checking every op
/// result against the reference map and the full content at every reopen
/// and at the end.
pub fn differential_test(
    segments: &[TraceSpec],
    config: TableConfig,
) -> Result<TraceOutcome, Divergence> {
    let mut table = match Table::new(config) {
        Ok(t) => t,
        Err(e) => return diverge(0, format!("table creation failed: {e}")),
    };
    let mut oracle: BTreeMap<u64, u64> = BTreeMap::new();
    let mut outcome =
        TraceOutcome { ops_run: 0, final_len: 0, generation: 0, shrinks: 0, reopens: 0 };
    let mut step = 0usize;
    for spec in segments {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xD1FF_BEEF);
        for op in generate_trace(spec) {
            match op {
                Op::Insert(k, v) => {
                    let want = if oracle.contains_key(&k) {
                        InsertOutcome::Updated
                    } else {
                        InsertOutcome::Inserted
                    };
                    match table.insert(k, v) {
                        Ok(got) if got == want => {
                            oracle.insert(k, v);
                        }
                        Ok(got) => {
                            return diverge(
                                step,
                                format!("insert({k:#x}) returned {got:?}, want {want:?}"),
                            )
                        }
                        Err(e) => return diverge(step, format!("insert({k:#x}) failed: {e}")),
                    }
                }
                Op::Remove(k) => {
                    let want = oracle.remove(&k).is_some();
                    match table.remove(k) {
                        Ok(got) if got == want => {}
                        Ok(got) => {
                            return diverge(
                                step,
                                format!("remove({k:#x}) returned {got}, want {want}"),
                            )
                        }
                        Err(e) => return diverge(step, format!("remove({k:#x}) failed: {e}")),
                    }
                }
                Op::Get(k) => {
                    let want = oracle.get(&k).copied();
                    let got = table.get(k);
                    if got != want {
                        return diverge(
                            step,
                            format!("get({k:#x}) returned {got:?}, want {want:?}"),
                        );
                    }
                }
                Op::Shrink => match table.shrink() {
                    Ok(()) => {
                        outcome.shrinks += 1;
                        if let Err(e) = table.verify_integrity() {
                            return diverge(step, format!("integrity after shrink: {e}"));
                        }
                    }
                    Err(TableError::AtMinimumSize | TableError::ShrinkWouldOverflow) => {}
                    Err(e) => return diverge(step, format!("shrink failed: {e}")),
                },
                Op::FinishMigration => {
                    if let Err(e) = table.finish_migration() {
                        return diverge(step, format!("finish_migration failed: {e}"));
                    }
                }
                Op::Reopen => {
                    let tearing =
                        if rng.gen() { Tearing::WordSubset } else { Tearing::DropAll };
                    let crashed = match table.durable_store().crash(tearing, rng.gen()) {
                        Ok(c) => c,
                        Err(e) => return diverge(step, format!("crash failed: {e}")),
                    };
                    table = match Table::recover(crashed, &config) {
                        Ok(t) => t,
                        Err(e) => return diverge(step, format!("recovery failed: {e}")),
                    };
                    outcome.reopens += 1;
                    if let Err(e) = table.verify_integrity() {
                        return diverge(step, format!("integrity after reopen: {e}"));
                    }
                    if let Some(d) = first_diff(&table_content(&table), &oracle) {
                        return diverge(step, format!("content after reopen: {d}"));
                    }
                }
            }
            step += 1;
        }
    }
    if table.len() != oracle.len() as u64 {
        return diverge(
            step,
            format!("final len {} != reference {}", table.len(), oracle.len()),
        );
    }
    if let Some(d) = first_diff(&table_content(&table), &oracle) {
        return diverge(step, format!("final content: {d}"));
    }
    if let Err(e) = table.verify_integrity() {
        return diverge(step, format!("final integrity: {e}"));
    }
    outcome.ops_run = step;
    outcome.final_len = table.len();
    outcome.generation = table.generation();
    Ok(outcome)
}

impl Op {
    /// Mirror this op onto the reference map.
    pub fn fold_into(self, oracle: &mut BTreeMap<u64, u64>) {
        match self {
            Op::Insert(k, v) => {
                oracle.insert(k, v);
            }
            Op::Remove(k) => {
                oracle.remove(&k);
            }
            Op::Get(_) | Op::Shrink | Op::FinishMigration | Op::Reopen => {}
        }
    }

    /// Mirror this op onto the table, treating shrink refusals as no-ops.
    /// `Reopen` is not an in-process table operation and must be handled by
    /// the caller.
    pub fn apply_to(self, table: &Table) -> Result<(), TableError> {
        match self {
            Op::Insert(k, v) => table.insert(k, v).map(|_| ()),
            Op::Remove(k) => table.remove(k).map(|_| ()),
            Op::Get(k) => {
                table.get(k);
                Ok(())
            }
            Op::Shrink => match table.shrink() {
                Err(TableError::AtMinimumSize | TableError::ShrinkWouldOverflow) => Ok(()),
                r => r,
            },
            Op::FinishMigration => table.finish_migration(),
            Op::Reopen => unreachable!("reopen is handled by the driver"),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOutcome {
    /// Number of distinct crash points exercised.
    pub crash_points: u64,
    pub ops: usize,
    /// Generation the reference replay ended at (resize coverage witness).
    pub final_generation: u64,
}

/// Exhaustive crash-point sweep: replay the trace once per durable event,
/// freeze durability at that event, crash with `tearing`, recover, and
/// require the recovered content to be the reference state just before or
/// just after the op in flight. Covers every store, flush, and bulk fill the
/// trace performs, including those inside resizes and lazy migration.
pub fn crash_sweep(
    segments: &[TraceSpec],
    config: TableConfig,
    tearing: Tearing,
) -> Result<SweepOutcome, Divergence> {
    assert!(
        segments.iter().all(|s| !s.reopens),
        "crash sweeps drive recovery themselves"
    );
    let ops: Vec<Op> = segments.iter().flat_map(generate_trace).collect();

    // Reference pass: learn the event at which each op was acknowledged.
    // The fuse never alters live behavior, so these numbers hold for every
    // fused replay below.
    let table = match Table::new(config) {
        Ok(t) => t,
        Err(e) => return diverge(0, format!("table creation failed: {e}")),
    };
    let e_start = table.durable_store().event_now();
    let mut ack_event = Vec::with_capacity(ops.len());
    for (i, &op) in ops.iter().enumerate() {
        if let Err(e) = op.apply_to(&table) {
            return diverge(i, format!("reference replay failed: {e}"));
        }
        ack_event.push(table.durable_store().event_now());
    }
    let e_end = table.durable_store().event_now();
    let final_generation = table.generation();
    drop(table);

    let mut oracle: BTreeMap<u64, u64> = BTreeMap::new();
    let mut acked = 0usize; // ops fully durable at the current fuse
    let mut crash_points = 0u64;
    for fuse in e_start..=e_end {
        while acked < ops.len() && ack_event[acked] <= fuse {
            ops[acked].fold_into(&mut oracle);
            acked += 1;
        }
        let t = match Table::new(config) {
            Ok(t) => t,
            Err(e) => return diverge(acked, format!("replay creation failed: {e}")),
        };
        t.durable_store().set_fuse(fuse);
        // Ops past the one in flight can leave no durable trace; skip them.
        for &op in &ops[..(acked + 1).min(ops.len())] {
            if let Err(e) = op.apply_to(&t) {
                return diverge(acked, format!("fused replay failed: {e}"));
            }
        }
        let crashed = match t.durable_store().crash(tearing, 0x5EED ^ fuse) {
            Ok(c) => c,
            Err(e) => return diverge(acked, format!("crash at event {fuse} failed: {e}")),
        };
        drop(t);
        let r = match Table::recover(crashed, &config) {
            Ok(r) => r,
            Err(e) => return diverge(acked, format!("recovery at event {fuse} failed: {e}")),
        };
        if let Err(e) = r.verify_integrity() {
            return diverge(acked, format!("integrity at event {fuse}: {e}"));
        }
        let got = table_content(&r);
        let ok = got == oracle || {
            // The op in flight may have become durable before its
            // acknowledgment flush.
            if acked < ops.len() {
                let mut next = oracle.clone();
                ops[acked].fold_into(&mut next);
                got == next
            } else {
                false
            }
        };
        if !ok {
            let d = first_diff(&got, &oracle).unwrap_or_else(|| "?".into());
            return diverge(
                acked,
                format!(
                    "crash at event {fuse} ({tearing:?}): recovered content is neither \
                     pre- nor post-state of the op in flight; vs pre-state: {d}"
                ),
            );
        }
        crash_points += 1;
    }
    Ok(SweepOutcome { crash_points, ops: ops.len(), final_generation })
}

/// Shape of a concurrent stress run.
#[derive(Clone, Debug)]
pub struct StressSpec {
    pub threads: usize,
    pub ops_per_thread: usize,
    /// Keys per thread (disjoint mode) or total shared keys.
    pub key_space: u64,
    /// Each thread owns a private key range and checks itself against a
    /// sequential reference; otherwise all threads share the key space and
    /// the check is written-value membership at quiescence.
    pub disjoint: bool,
    pub skew: Skew,
    pub seed: u64,
    /// Thread 0 sprinkles grow/shrink/finish-migration calls through its run.
    pub maintenance: bool,
    pub watchdog_secs: u64,
}

impl Default for StressSpec {
    fn default() -> StressSpec {
        StressSpec {
            threads: 4,
            ops_per_thread: 10_000,
            key_space: 1024,
            disjoint: true,
            skew: Skew::Uniform,
            seed: 0,
            maintenance: true,
            watchdog_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StressOutcome {
    pub total_ops: usize,
    pub final_len: u64,
    pub generation: u64,
}

/// Run `spec.threads` workers over one shared table and check the outcome.
/// Aborts the process if the run wedges past the watchdog deadline — a
/// deadlock is not a reportable verdict.
pub fn concurrent_stress(
    spec: &StressSpec,
    config: TableConfig,
) -> Result<StressOutcome, Divergence> {
    assert!(spec.threads >= 1);
    let table = match Table::new(config) {
        Ok(t) => t,
        Err(e) => return diverge(0, format!("table creation failed: {e}")),
    };
    let stop = AtomicBool::new(false);
    let failure: Mutex<Option<Divergence>> = Mutex::new(None);
    let report = |step: usize, detail: String| {
        let mut slot = failure.lock().unwrap();
        if slot.is_none() {
            *slot = Some(Divergence { step, detail });
        }
        stop.store(true, Ordering::Relaxed);
    };

    let (done_tx, done_rx) = mpsc::channel::<()>();
    let deadline = Duration::from_secs(spec.watchdog_secs);
    let watchdog = std::thread::spawn(move || {
        if let Err(mpsc::RecvTimeoutError::Timeout) = done_rx.recv_timeout(deadline) {
            eprintln!("concurrent_stress: watchdog expired after {deadline:?}; aborting");
            std::process::abort();
        }
    });

    // Per-thread output: the final reference map (disjoint) or the log of
    // every write issued (shared).
    let mut thread_oracles: Vec<BTreeMap<u64, u64>> = Vec::new();
    let mut write_logs: Vec<Vec<(u64, u64)>> = Vec::new();
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..spec.threads)
            .map(|tid| {
                let table = &table;
                let stop = &stop;
                let report = &report;
                s.spawn(move || worker(spec, tid, table, stop, report))
            })
            .collect();
        for h in handles {
            let (oracle, log) = h.join().expect("stress worker panicked");
            thread_oracles.push(oracle);
            write_logs.push(log);
        }
    });
    let _ = done_tx.send(());
    let _ = watchdog.join();

    if let Some(d) = failure.into_inner().unwrap() {
        return Err(d);
    }
    if let Err(e) = table.verify_integrity() {
        return diverge(0, format!("final integrity: {e}"));
    }
    let content = table_content(&table);
    if spec.disjoint {
        let expect: u64 = thread_oracles.iter().map(|o| o.len() as u64).sum();
        if table.len() != expect {
            return diverge(0, format!("final len {} != sum of oracles {expect}", table.len()));
        }
        for oracle in &thread_oracles {
            if let Some(d) = first_diff(&content, oracle) {
                // first_diff checks want ⊆ got and got ⊆ want; here each
                // oracle is only a subset, so check membership directly.
                if oracle.iter().any(|(k, v)| content.get(k) != Some(v)) {
                    return diverge(0, format!("disjoint content: {d}"));
                }
            }
        }
    } else {
        let mut written: HashMap<u64, HashSet<u64>> = HashMap::new();
        for log in &write_logs {
            for &(k, v) in log {
                written.entry(k).or_default().insert(v);
            }
        }
        for (&k, &v) in &content {
            if !written.get(&k).is_some_and(|set| set.contains(&v)) {
                return diverge(
                    0,
                    format!("key {k:#x} holds {v:#x}, which no thread ever wrote"),
                );
            }
        }
    }
    Ok(StressOutcome {
        total_ops: spec.threads * spec.ops_per_thread,
        final_len: table.len(),
        generation: table.generation(),
    })
}

fn worker(
    spec: &StressSpec,
    tid: usize,
    table: &Table,
    stop: &AtomicBool,
    report: &impl Fn(usize, String),
) -> (BTreeMap<u64, u64>, Vec<(u64, u64)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(1 + tid as u64));
    let zipf = match spec.skew {
        Skew::Zipf(s) => Some(Zipf::new(spec.key_space, s).expect("bad zipf parameters")),
        Skew::Uniform => None,
    };
    let base = if spec.disjoint { tid as u64 * spec.key_space } else { 0 };
    let mut oracle: BTreeMap<u64, u64> = BTreeMap::new();
    let mut log: Vec<(u64, u64)> = Vec::new();
    for i in 0..spec.ops_per_thread {
        if stop.load(Ordering::Relaxed) {
            break;
        }
        if spec.maintenance && tid == 0 && i > 0 && i % 2048 == 0 {
            let r = match (i / 2048) % 3 {
                0 => table.maybe_grow().map(|_| ()),
                1 => table.finish_migration(),
                _ => match table.shrink() {
                    Err(TableError::AtMinimumSize | TableError::ShrinkWouldOverflow) => Ok(()),
                    r => r,
                },
            };
            if let Err(e) = r {
                report(i, format!("thread {tid}: maintenance failed: {e}"));
                break;
            }
            continue;
        }
        let mut k = match &zipf {
            Some(z) => z.sample(&mut rng) as u64 - 1,
            None => rng.gen_range(0..spec.key_space),
        };
        if !spec.disjoint && rng.gen_ratio(1, 256) {
            k = INVALID; // shared-mode threads may fight over the side slot
        } else {
            k += base;
        }
        let roll = rng.gen_range(0..10u32);
        if spec.disjoint {
            // Private range: every result must match the thread's own
            // sequential reference.
            if roll < 5 {
                let v = rng.gen_range(0..u64::MAX);
                let want = if oracle.contains_key(&k) {
                    InsertOutcome::Updated
                } else {
                    InsertOutcome::Inserted
                };
                match table.insert(k, v) {
                    Ok(got) if got == want => {
                        oracle.insert(k, v);
                    }
                    Ok(got) => {
                        report(i, format!("thread {tid}: insert({k:#x}) {got:?}, want {want:?}"));
                        break;
                    }
                    Err(e) => {
                        report(i, format!("thread {tid}: insert({k:#x}) failed: {e}"));
                        break;
                    }
                }
            } else if roll < 7 {
                let want = oracle.remove(&k).is_some();
                match table.remove(k) {
                    Ok(got) if got == want => {}
                    Ok(got) => {
                        report(i, format!("thread {tid}: remove({k:#x}) {got}, want {want}"));
                        break;
                    }
                    Err(e) => {
                        report(i, format!("thread {tid}: remove({k:#x}) failed: {e}"));
                        break;
                    }
                }
            } else {
                let want = oracle.get(&k).copied();
                let got = table.get(k);
                if got != want {
                    report(i, format!("thread {tid}: get({k:#x}) {got:?}, want {want:?}"));
                    break;
                }
            }
        } else {
            // Shared range: values are tagged so any readable value can be
            // traced back to the thread and step that wrote it.
            if roll < 5 {
                let v = ((tid as u64) << 48) | i as u64;
                log.push((k, v));
                if let Err(e) = table.insert(k, v) {
                    report(i, format!("thread {tid}: insert({k:#x}) failed: {e}"));
                    break;
                }
            } else if roll < 7 {
                if let Err(e) = table.remove(k) {
                    report(i, format!("thread {tid}: remove({k:#x}) failed: {e}"));
                    break;
                }
            } else if let Some(v) = table.get(k) {
                if (v >> 48) as usize >= spec.threads || (v & 0xFFFF_FFFF_FFFF) as usize >= spec.ops_per_thread {
                    report(i, format!("thread {tid}: get({k:#x}) returned untagged {v:#x}"));
                    break;
                }
            }
        }
    }
    (oracle, log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(log_blocks: u32) -> TableConfig {
        TableConfig { log_initial_blocks: log_blocks, resize_threshold: 0.85, hash_seed: 0xACE }
    }

    #[test]
    fn traces_are_deterministic() {
        let spec = TraceSpec { ops: 2000, maintenance_every: 100, reopens: true, ..TraceSpec::default() };
        assert_eq!(generate_trace(&spec), generate_trace(&spec));
        let other = TraceSpec { seed: 1, ..spec };
        assert_ne!(generate_trace(&spec), generate_trace(&other));
    }

    #[test]
    fn empty_trace_passes() {
        let spec = TraceSpec { ops: 0, ..TraceSpec::default() };
        let out = differential_test(&[spec], config(2)).unwrap();
        assert_eq!(out.ops_run, 0);
        assert_eq!(out.final_len, 0);
    }

    #[test]
    fn mixed_trace_with_maintenance_and_reopens_passes() {
        let spec = TraceSpec {
            seed: 42,
            ops: 6000,
            key_space: 700,
            maintenance_every: 400,
            reopens: true,
            ..TraceSpec::default()
        };
        let out = differential_test(&[spec], config(2)).unwrap();
        assert!(out.generation > 0, "trace was sized to force a doubling");
        assert!(out.reopens > 0);
    }

    #[test]
    fn zipf_trace_passes() {
        let spec = TraceSpec {
            seed: 9,
            ops: 5000,
            key_space: 2000,
            skew: Skew::Zipf(0.99),
            maintenance_every: 700,
            ..TraceSpec::default()
        };
        differential_test(&[spec], config(3)).unwrap();
    }

    #[test]
    fn phased_segments_share_one_table() {
        let grow = TraceSpec { seed: 1, ops: 3000, key_space: 800, weights: (8, 1, 1), ..TraceSpec::default() };
        let drain = TraceSpec { seed: 2, ops: 3000, key_space: 800, weights: (1, 8, 1), ..TraceSpec::default() };
        let fold = TraceSpec { seed: 3, ops: 500, key_space: 800, maintenance_every: 50, ..TraceSpec::default() };
        let out = differential_test(&[grow, drain, fold], config(2)).unwrap();
        assert!(out.generation > 0);
        assert!(out.shrinks > 0, "drained table should accept at least one fold");
    }

    #[test]
    fn small_crash_sweep_passes_both_tearing_modes() {
        // Three segments so the sweep crosses a doubling (with lazy block
        // moves), a drain, and a successful fold back down.
        let segments = [
            TraceSpec { seed: 5, ops: 230, key_space: 512, weights: (8, 1, 1), ..TraceSpec::default() },
            TraceSpec { seed: 6, ops: 80, key_space: 512, weights: (1, 8, 1), ..TraceSpec::default() },
            TraceSpec { seed: 7, ops: 40, key_space: 512, maintenance_every: 10, ..TraceSpec::default() },
        ];
        let a = crash_sweep(&segments, config(1), Tearing::DropAll).unwrap();
        assert!(a.crash_points > 300, "fuse should sweep every durable event");
        assert!(a.final_generation > 0, "trace was sized to cross a doubling");
        crash_sweep(&segments, config(1), Tearing::WordSubset).unwrap();
    }

    #[test]
    fn stress_disjoint_small() {
        let spec = StressSpec {
            threads: 4,
            ops_per_thread: 4000,
            key_space: 512,
            disjoint: true,
            seed: 11,
            ..StressSpec::default()
        };
        let out = concurrent_stress(&spec, config(2)).unwrap();
        assert_eq!(out.total_ops, 16_000);
    }

    #[test]
    fn stress_shared_small() {
        let spec = StressSpec {
            threads: 4,
            ops_per_thread: 4000,
            key_space: 96,
            disjoint: false,
            skew: Skew::Zipf(0.8),
            seed: 12,
            ..StressSpec::default()
        };
        concurrent_stress(&spec, config(2)).unwrap();
    }

    #[test]
    fn divergence_reports_are_actionable() {
        // A reference map that drops one insert must be caught at the next
        // get of that key — simulate by corrupting the oracle path: run a
        // legitimate trace against a table, then ask for a key that was
        // never inserted via a hand-built divergence.
        let d = Divergence { step: 7, detail: "get(0x2a) returned None, want Some(1)".into() };
        let shown = format!("{d}");
        assert!(shown.contains("op 7"));
        assert!(shown.contains("0x2a"));
    }
}
