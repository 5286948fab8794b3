//! The file backend: create, mutate, close, reopen; survival without a
//! clean close; and the corruption checks at open.

use std::fs::{self, OpenOptions};

use iceberg_ht::{RegionError, Table, TableConfig, TableError, Tearing};

fn value_for(k: u64) -> u64 {
    k.wrapping_mul(0xA076_1D64_78BD_642F) | 1
}

#[test]
fn clean_close_then_reopen_restores_everything() {
    let dir = tempfile::tempdir().unwrap();
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let table = Table::create_file(dir.path(), config).unwrap();
    for k in 1..=500u64 {
        table.insert(k, value_for(k)).unwrap();
    }
    for k in (1..=500u64).step_by(5) {
        assert!(table.remove(k).unwrap());
    }
    let expected_len = table.len();
    table.close().unwrap();

    let reopened = Table::open_file(dir.path(), &config).unwrap();
    assert_eq!(reopened.len(), expected_len);
    for k in 1..=500u64 {
        let want = if k % 5 == 1 { None } else { Some(value_for(k)) };
        assert_eq!(reopened.get(k), want, "key {k} after reopen");
    }
    reopened.verify_integrity().unwrap();
}

#[test]
fn dropping_without_close_loses_nothing() {
    // Every operation writes through before acknowledging; close only adds
    // an fsync. An exit without close must still leave a readable table.
    let dir = tempfile::tempdir().unwrap();
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    {
        let table = Table::create_file(dir.path(), config).unwrap();
        for k in 1..=300u64 {
            table.insert(k, value_for(k)).unwrap();
        }
    }
    let reopened = Table::open_file(dir.path(), &config).unwrap();
    assert_eq!(reopened.len(), 300);
    for k in 1..=300u64 {
        assert_eq!(reopened.get(k), Some(value_for(k)));
    }
}

#[test]
fn growth_and_folds_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let table = Table::create_file(dir.path(), config).unwrap();
    for k in 1..=400u64 {
        table.insert(k, value_for(k)).unwrap();
    }
    assert!(table.generation() >= 1);
    for k in 41..=400u64 {
        assert!(table.remove(k).unwrap());
    }
    while table.shrink().is_ok() {}
    let folded_blocks = table.block_count();
    table.close().unwrap();

    let reopened = Table::open_file(dir.path(), &config).unwrap();
    assert_eq!(reopened.block_count(), folded_blocks);
    assert_eq!(reopened.len(), 40);
    for k in 1..=40u64 {
        assert_eq!(reopened.get(k), Some(value_for(k)));
    }
    reopened.verify_integrity().unwrap();
}

#[test]
fn corrupted_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let table = Table::create_file(dir.path(), config).unwrap();
    table.insert(7, 7).unwrap();
    table.close().unwrap();

    let meta = dir.path().join("meta.bin");
    let mut bytes = fs::read(&meta).unwrap();
    bytes[..8].copy_from_slice(&0xDEAD_BEEFu64.to_le_bytes());
    fs::write(&meta, &bytes).unwrap();

    match Table::open_file(dir.path(), &config) {
        Err(TableError::Region(RegionError::BadMagic { .. })) => {}
        r => panic!("open with a corrupt magic returned {:?}", r.map(|_| ())),
    }
}

#[test]
fn truncated_region_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = TableConfig { log_initial_blocks: 2, ..Default::default() };
    let table = Table::create_file(dir.path(), config).unwrap();
    table.insert(7, 7).unwrap();
    table.close().unwrap();

    let l1 = dir.path().join("level1.bin");
    let len = fs::metadata(&l1).unwrap().len();
    OpenOptions::new().write(true).open(&l1).unwrap().set_len(len - 64).unwrap();

    match Table::open_file(dir.path(), &config) {
        Err(TableError::Region(RegionError::WrongLength { .. })) => {}
        r => panic!("open with a truncated region returned {:?}", r.map(|_| ())),
    }
}

#[test]
fn crash_injection_requires_the_shadow_backend() {
    let dir = tempfile::tempdir().unwrap();
    let table = Table::create_file(dir.path(), TableConfig::default()).unwrap();
    match table.durable_store().crash(Tearing::DropAll, 0) {
        Err(RegionError::CrashUnsupported) => {}
        r => panic!("crash on the file backend returned {:?}", r.map(|_| ())),
    }
}
