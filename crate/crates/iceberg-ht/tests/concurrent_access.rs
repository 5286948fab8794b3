//! Multi-threaded behavior over one shared table: the stress harness at
//! eight threads, plus a directed reader/writer interleaving across growth.

use std::sync::atomic::{AtomicBool, Ordering};
use std::thread;

use iceberg_ht::oracle::{concurrent_stress, Skew, StressSpec};
use iceberg_ht::{Table, TableConfig};

fn value_for(k: u64) -> u64 {
    k.wrapping_mul(0x2545_F491_4F6C_DD1D) | 1
}

#[test]
fn eight_threads_on_disjoint_keys_with_maintenance() {
    let spec = StressSpec {
        threads: 8,
        ops_per_thread: 20_000,
        key_space: 2_048,
        disjoint: true,
        skew: Skew::Uniform,
        seed: 0x8D15,
        maintenance: true,
        watchdog_secs: 120,
    };
    let config = TableConfig { log_initial_blocks: 4, ..Default::default() };
    let outcome = concurrent_stress(&spec, config).unwrap();
    assert_eq!(outcome.total_ops, 160_000);
}

#[test]
fn eight_threads_on_shared_hot_keys() {
    let spec = StressSpec {
        threads: 8,
        ops_per_thread: 15_000,
        key_space: 512,
        disjoint: false,
        skew: Skew::Zipf(1.0),
        seed: 0x5A5A,
        maintenance: true,
        watchdog_secs: 120,
    };
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    concurrent_stress(&spec, config).unwrap();
}

#[test]
fn readers_see_exact_values_throughout_growth() {
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let table = Table::new(config).unwrap();
    let residents: Vec<u64> = (1..=1_500u64).collect();
    for &k in &residents {
        table.insert(k, value_for(k)).unwrap();
    }

    let done = AtomicBool::new(false);
    thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| {
                while !done.load(Ordering::Relaxed) {
                    for &k in &residents {
                        assert_eq!(
                            table.get(k),
                            Some(value_for(k)),
                            "reader saw a wrong value for key {k}"
                        );
                    }
                }
            });
        }
        s.spawn(|| {
            // Push the table through several doublings while readers run.
            for k in 10_000..13_000u64 {
                table.insert(k, value_for(k)).unwrap();
                if k % 512 == 0 {
                    table.finish_migration().unwrap();
                }
            }
            done.store(true, Ordering::Relaxed);
        });
    });

    table.finish_migration().unwrap();
    table.verify_integrity().unwrap();
    assert!(table.generation() >= 4, "the writer was supposed to force doublings");
    for &k in &residents {
        assert_eq!(table.get(k), Some(value_for(k)));
    }
}
