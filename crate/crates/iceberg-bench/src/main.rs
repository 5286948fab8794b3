//! Command-line front end: benchmark subcommands over the workload runners,
//! simulator and fuzzing verdicts over the library's harnesses, and an
//! integrity check for file-backed tables. Reports go to stdout (or --out);
//! diagnostics go to stderr; exit code 0 means every check passed.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use iceberg_bench::{
    emit_report, run_dist, run_micro, run_space_sweep, run_ycsb, Backend, BenchReport,
    ReportFormat, WorkloadKind, WorkloadSpec,
};
use iceberg_ht::oracle::{crash_sweep, differential_test, TraceSpec};
use iceberg_ht::sim::{capacity_for, simulate_frontyard, simulate_p2c, simulate_split, SimConfig};
use iceberg_ht::{Table, TableConfig, Tearing};

#[derive(Parser)]
#[command(
    name = "iceberg-bench",
    about = "Benchmark and validation harness for the iceberg hash table",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Table capacity target in slots (blocks round up to a power of two).
    #[arg(long, global = true)]
    slots: Option<u64>,
    /// Maximum worker threads; sweeps use powers of two up to this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for every generated key sequence and simulator run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Fill fraction for fill-bound workloads, in (0, 1].
    #[arg(long, global = true)]
    fill: Option<f64>,
    /// YCSB variant for the ycsb subcommand: a, b, or c.
    #[arg(long, global = true)]
    workload: Option<String>,
    /// Report encoding: csv or json.
    #[arg(long, global = true, value_parser = ReportFormat::from_str)]
    format: Option<ReportFormat>,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Table storage: "shadow" (in-memory) or "file" (needs table_dir=DIR
    /// in the --config file).
    #[arg(long, global = true)]
    backend: Option<String>,
    /// fuzz: also sweep a crash at every durable event of a trace this long.
    #[arg(long, global = true)]
    crash_points: Option<u64>,
    /// key=value file with the same keys as the flags (flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Four-phase microbenchmark (insert, hit, miss, delete) over a thread sweep
    Micro,
    /// Load 4x the slot target, then run a YCSB-style mix
    Ycsb,
    /// Fill a fixed table in 5% steps, reporting space efficiency
    Space,
    /// Level-distribution census at the fill target
    Dist,
    /// Balls-and-bins simulators with their invariant checks
    Sim,
    /// Differential trace check against a reference map (crash sweeps with --crash-points)
    Fuzz,
    /// Open a file-backed table and verify its integrity
    RecoverCheck,
}

/// Everything a subcommand needs, after merging defaults, the --config
/// file, and the flags (flags win).
struct Settings {
    spec: WorkloadSpec,
    format: ReportFormat,
    out: Option<PathBuf>,
    table_dir: Option<PathBuf>,
    crash_points: u64,
    ops: usize,
    workload: Option<String>,
}

fn parse_config_file(path: &PathBuf) -> Result<BTreeMap<String, String>, String> {
    let text =
        std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("{}:{}: expected key=value", path.display(), lineno + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>, String>
where
    T::Err: std::fmt::Display,
{
    match map.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|e| format!("config {key}: {e}")),
    }
}

fn resolve(cli: &Cli) -> Result<Settings, String> {
    let file = match &cli.config {
        Some(path) => parse_config_file(path)?,
        None => BTreeMap::new(),
    };
    let mut spec = WorkloadSpec::default();
    spec.target_slots = cli.slots.or(parsed(&file, "slots")?).unwrap_or(spec.target_slots);
    spec.threads = cli.threads.or(parsed(&file, "threads")?).unwrap_or(spec.threads);
    spec.seed = cli.seed.or(parsed(&file, "seed")?).unwrap_or(spec.seed);
    spec.fill_fraction = cli.fill.or(parsed(&file, "fill")?).unwrap_or(spec.fill_fraction);

    let table_dir: Option<PathBuf> = file.get("table_dir").map(PathBuf::from);
    let backend = cli.backend.clone().or_else(|| file.get("backend").cloned());
    spec.backend = match backend.as_deref() {
        None | Some("shadow") => Backend::Shadow,
        Some("file") => Backend::File(table_dir.clone().ok_or_else(|| {
            "backend file needs table_dir=DIR in the --config file".to_string()
        })?),
        Some(other) => return Err(format!("unknown backend {other:?}")),
    };

    let format = match cli.format {
        Some(f) => f,
        None => match file.get("format") {
            Some(raw) => ReportFormat::from_str(raw)?,
            None => ReportFormat::Json,
        },
    };
    Ok(Settings {
        spec,
        format,
        out: cli.out.clone(),
        table_dir,
        crash_points: cli.crash_points.or(parsed(&file, "crash_points")?).unwrap_or(0),
        ops: parsed(&file, "ops")?.unwrap_or(100_000),
        workload: cli.workload.clone().or_else(|| file.get("workload").cloned()),
    })
}

fn write_out(bytes: &[u8], out: &Option<PathBuf>) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(|e| e.to_string())
        }
    }
}

/// Structural checks that make the exit code a verdict, not just a timer.
fn structural_verdict(kind: WorkloadKind, report: &BenchReport) -> Result<(), String> {
    if let Some([l1, l2, l3]) = report.level_distribution {
        let sum = l1 + l2 + l3;
        if !(0.999..=1.001).contains(&sum) {
            return Err(format!("level distribution sums to {sum}, not 1"));
        }
    }
    match kind {
        WorkloadKind::Micro => {
            for row in &report.rows {
                for (class, v) in [
                    ("insert", row.insert),
                    ("positive", row.positive),
                    ("negative", row.negative),
                    ("remove", row.remove),
                ] {
                    if v <= 0.0 {
                        return Err(format!("{class} throughput at {} threads is 0", row.threads));
                    }
                }
            }
        }
        WorkloadKind::YcsbA | WorkloadKind::YcsbB => {
            let after_load = report.counters["generation_after_load"];
            let final_gen = report.counters["generation_final"];
            if after_load < 2 {
                return Err(format!("load phase reached generation {after_load}, want >= 2"));
            }
            if final_gen <= after_load {
                return Err("run phase never doubled the table".into());
            }
        }
        WorkloadKind::YcsbC => {
            if report.counters["run_stores"] != 0 {
                return Err(format!(
                    "a read-only run wrote {} region words",
                    report.counters["run_stores"]
                ));
            }
        }
        WorkloadKind::SpaceSweep => {
            let points = &report.sweep;
            if points.is_empty() {
                return Err("sweep produced no points".into());
            }
            for pair in points.windows(2) {
                if pair[1].footprint_bytes < pair[0].footprint_bytes {
                    return Err("footprint shrank between increments".into());
                }
            }
            let last = points.last().unwrap();
            if last.fill_percent >= 95 && last.efficiency < 0.85 {
                return Err(format!("efficiency {:.3} at full fill, want >= 0.85", last.efficiency));
            }
        }
        WorkloadKind::Dist => {}
    }
    Ok(())
}

fn run_workload(kind: WorkloadKind, settings: &Settings) -> Result<(), String> {
    let spec = WorkloadSpec { kind, ..settings.spec.clone() };
    let runner = match kind {
        WorkloadKind::Micro => run_micro,
        WorkloadKind::YcsbA | WorkloadKind::YcsbB | WorkloadKind::YcsbC => run_ycsb,
        WorkloadKind::SpaceSweep => run_space_sweep,
        WorkloadKind::Dist => run_dist,
    };
    let report = runner(&spec).map_err(|e| e.to_string())?;
    write_out(&emit_report(&report, settings.format), &settings.out)?;
    structural_verdict(kind, &report)
}

/// Run the three simulators at desk scale and hold them to their bounds:
/// slack monotonicity up front, max load 8 behind, conservation on splits.
fn run_sim(settings: &Settings) -> Result<(), String> {
    let seed = settings.spec.seed;
    let mut lines = Vec::new();

    let bins = 1u64 << 12;
    let mut last = f64::INFINITY;
    for slack in [0u32, 2, 4, 6] {
        let stats = simulate_frontyard(&SimConfig {
            bins,
            capacity: capacity_for(16, slack),
            target_balls: 16 * bins,
            churn_steps: 4 * bins,
            seed,
        });
        lines.push(format!(
            "frontyard slack={slack} capacity={} overflow_fraction={:.6}",
            capacity_for(16, slack),
            stats.overflow_fraction
        ));
        if stats.overflow_fraction > last + 1e-12 {
            return Err(format!("overflow grew when slack rose to {slack}"));
        }
        last = stats.overflow_fraction;
    }

    let p2c_bins = 1u64 << 14;
    let p2c = simulate_p2c(&SimConfig {
        bins: p2c_bins,
        capacity: 0,
        target_balls: p2c_bins * 9 / 10,
        churn_steps: 1_000_000,
        seed,
    });
    lines.push(format!("p2c max_load={}", p2c.max_load));
    if p2c.max_load > 8 {
        return Err(format!("two-choice max load {} exceeds 8", p2c.max_load));
    }

    let balls = 1u64 << 15;
    let split = simulate_split(&SimConfig {
        bins: 1 << 10,
        capacity: 0,
        target_balls: balls,
        churn_steps: balls,
        seed,
    });
    lines.push(format!(
        "split final_bins={} max_load={} balls={}",
        split.final_bins, split.max_load, split.final_balls
    ));
    if split.max_load > 8 {
        return Err(format!("split max load {} exceeds 8", split.max_load));
    }
    if split.final_balls != balls {
        return Err("split run lost balls".into());
    }

    write_out((lines.join("\n") + "\n").as_bytes(), &settings.out)
}

/// Differential fuzzing: grow, drain, and steady segments (reopens
/// included) against the reference map, then an optional exhaustive
/// crash-point sweep in both tearing modes.
fn run_fuzz(settings: &Settings) -> Result<(), String> {
    let seed = settings.spec.seed;
    let ops = settings.ops;
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let segments = [
        TraceSpec {
            seed,
            ops: ops / 2,
            key_space: (ops as u64 / 8).max(256),
            weights: (6, 2, 2),
            maintenance_every: (ops / 8).max(16),
            reopens: true,
            ..Default::default()
        },
        TraceSpec {
            seed: seed ^ 1,
            ops: ops / 4,
            key_space: (ops as u64 / 8).max(256),
            weights: (1, 7, 2),
            maintenance_every: (ops / 16).max(16),
            reopens: true,
            ..Default::default()
        },
        TraceSpec {
            seed: seed ^ 2,
            ops: ops / 4,
            key_space: (ops as u64 / 16).max(256),
            weights: (4, 3, 3),
            maintenance_every: (ops / 8).max(16),
            ..Default::default()
        },
    ];
    let outcome = differential_test(&segments, config).map_err(|d| d.to_string())?;
    let mut lines = vec![format!(
        "differential ops={} final_len={} generation={} shrinks={} reopens={}",
        outcome.ops_run, outcome.final_len, outcome.generation, outcome.shrinks, outcome.reopens
    )];

    if settings.crash_points > 0 {
        // Mostly inserts over a key space wider than the initial doubling
        // threshold, so a default-size sweep crosses at least one resize.
        let sweep_segments = [TraceSpec {
            seed: seed ^ 3,
            ops: settings.crash_points as usize,
            key_space: (2 * settings.crash_points).max(64),
            weights: (8, 1, 1),
            maintenance_every: (settings.crash_points as usize / 10).max(8),
            ..Default::default()
        }];
        for tearing in [Tearing::DropAll, Tearing::WordSubset] {
            let sweep = crash_sweep(&sweep_segments, config, tearing)
                .map_err(|d| format!("{tearing:?}: {d}"))?;
            lines.push(format!(
                "crash_sweep tearing={tearing:?} crash_points={} ops={} generation={}",
                sweep.crash_points, sweep.ops, sweep.final_generation
            ));
        }
    }
    write_out((lines.join("\n") + "\n").as_bytes(), &settings.out)
}

/// Open a file-backed table (running recovery if it was not closed
/// cleanly) and verify every structural invariant.
fn run_recover_check(settings: &Settings) -> Result<(), String> {
    let dir = settings
        .table_dir
        .clone()
        .ok_or_else(|| "recover-check needs table_dir=DIR in the --config file".to_string())?;
    let table = Table::open_file(&dir, &TableConfig::default()).map_err(|e| e.to_string())?;
    table.verify_integrity().map_err(|e| format!("integrity: {e}"))?;
    let line = format!(
        "recovered len={} generation={} blocks={}\n",
        table.len(),
        table.generation(),
        table.block_count()
    );
    write_out(line.as_bytes(), &settings.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let settings = match resolve(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("iceberg-bench: {e}");
            return ExitCode::FAILURE;
        }
    };
    let result = match cli.command {
        Cmd::Micro => run_workload(WorkloadKind::Micro, &settings),
        Cmd::Ycsb => match ycsb_kind(&settings) {
            Ok(kind) => run_workload(kind, &settings),
            Err(e) => Err(e),
        },
        Cmd::Space => run_workload(WorkloadKind::SpaceSweep, &settings),
        Cmd::Dist => run_workload(WorkloadKind::Dist, &settings),
        Cmd::Sim => run_sim(&settings),
        Cmd::Fuzz => run_fuzz(&settings),
        Cmd::RecoverCheck => run_recover_check(&settings),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iceberg-bench: {e}");
            ExitCode::FAILURE
        }
    }
}

fn ycsb_kind(settings: &Settings) -> Result<WorkloadKind, String> {
    let raw = settings.workload.as_deref().unwrap_or("a");
    match WorkloadKind::from_str(raw)? {
        k @ (WorkloadKind::YcsbA | WorkloadKind::YcsbB | WorkloadKind::YcsbC) => Ok(k),
        other => Err(format!("--workload {} is not a ycsb variant", other.name())),
    }
}
