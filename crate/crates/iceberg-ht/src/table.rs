//! The three-level concurrent map.
//!
//! A key hashes to at most four candidate locations: one 64-slot level-1
//! block (single choice), two 8-slot level-2 blocks (the emptier wins), and
//! one level-3 overflow chain. Placement prefers the lowest level with room,
//! and a key never moves once placed (absent a resize).
//!
//! Locking: mutations of a key serialize on the level-1 block lock for
//! h0 mod m — a bit stolen from metadata byte 0 — held for the whole
//! operation even when the key lands in level 2 or 3. Level-2 slots are
//! claimed with a metadata byte compare-exchange because two different
//! level-1 locks can route to the same level-2 block. Level-3 buckets carry
//! their own byte locks. Lookups are lock-free on levels 1–2: they snapshot a
//! metadata block, then validate each candidate's full key through a 16-byte
//! atomic slot read, so a stale snapshot can only cost an extra probe, never
//! a wrong answer.
//!
//! Every operation runs under the distributed reader-writer lock in read
//! mode; grow and shrink take it in write mode. During an incomplete lazy
//! migration, mutations first guarantee that the blocks they touch have been
//! moved (see the resize module) and lookups probe old-then-new locations.

use std::sync::atomic::{AtomicU64, AtomicU8, Ordering};
use std::sync::{Mutex, OnceLock};

use crate::hash::HashTriple;
use crate::metadata::{
    self, empty_mask_l1, empty_mask_l2, match_mask_l1, match_mask_l2, select_nth, EMPTY,
    L1_LOCK_BIT, L1_SLOTS, L2_SLOTS,
};
use crate::region::{
    DurableStore, RegionError, L1_BLOCK_BYTES, L2_BLOCK_BYTES, NODE_BYTES, SIDE_OFF,
};
use crate::rwlock::{DistRwLock, ReadGuard, ShardedCounter};
use crate::INVALID;

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("value {0:#x} is reserved as the free-slot sentinel")]
    ReservedValue(u64),
    #[error("level-3 arena exhausted")]
    ArenaExhausted,
    #[error("lower half cannot absorb the upper half's keys")]
    ShrinkWouldOverflow,
    #[error("table is already at its initial size")]
    AtMinimumSize,
    #[error(transparent)]
    Region(#[from] RegionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Inserted,
    Updated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    L1,
    L2,
    L3,
    /// The dedicated slot for the key equal to the INVALID sentinel.
    Side,
}

/// Where a key physically lives. For L3 the "slot" is the arena node index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Location {
    pub level: Level,
    pub block: u64,
    pub slot: u32,
}

/// Data-slot reads performed by one lookup, per level. Metadata probes are
/// not counted; these measure how often a fingerprint collision (or a hit)
/// forced a 16-byte slot read.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ProbeStats {
    pub l1_slot_reads: u32,
    pub l2_slot_reads: u32,
    pub l3_node_reads: u32,
}

#[derive(Debug, Clone, Copy)]
pub struct TableConfig {
    /// Initial block count per level is 2^log_initial_blocks.
    pub log_initial_blocks: u32,
    /// Load factor that triggers a doubling, in (0, 1].
    pub resize_threshold: f64,
    pub hash_seed: u64,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig { log_initial_blocks: 10, resize_threshold: 0.85, hash_seed: 0x01CE_BE56 }
    }
}

impl TableConfig {
    fn validate(&self) {
        assert!(self.log_initial_blocks >= 1, "need at least two blocks");
        assert!(self.log_initial_blocks < 40, "unreasonable initial size");
        assert!(
            self.resize_threshold > 0.0 && self.resize_threshold <= 1.0,
            "resize threshold must lie in (0, 1]"
        );
    }
}

/// Slots per block across both primary levels.
pub const SLOTS_PER_BLOCK: u64 = (L1_SLOTS + L2_SLOTS) as u64;

/// Growable atomic byte array with the same doubling-chunk scheme as the
/// durable regions: established bytes never move, so lock-free readers stay
/// valid across an in-place grow. Blocks never straddle chunks because the
/// base length is a multiple of every block size used.
pub(crate) struct ChunkedBytes {
    base: usize,
    chunks: Vec<OnceLock<Box<[AtomicU8]>>>,
    len: AtomicU64,
}

const MAX_CHUNKS: usize = 48;

impl ChunkedBytes {
    pub(crate) fn new(base: usize) -> ChunkedBytes {
        let chunks: Vec<OnceLock<Box<[AtomicU8]>>> =
            (0..MAX_CHUNKS).map(|_| OnceLock::new()).collect();
        chunks[0].get_or_init(|| (0..base).map(|_| AtomicU8::new(0)).collect());
        ChunkedBytes { base, chunks, len: AtomicU64::new(base as u64) }
    }

    pub(crate) fn len(&self) -> usize {
        self.len.load(Ordering::Acquire) as usize
    }

    #[inline]
    fn locate(&self, idx: usize) -> (usize, usize) {
        if idx < self.base {
            (0, idx)
        } else {
            let q = idx / self.base;
            let k = (usize::BITS - 1 - q.leading_zeros()) as usize;
            (k + 1, idx - (self.base << k))
        }
    }

    #[inline]
    pub(crate) fn at(&self, idx: usize) -> &AtomicU8 {
        debug_assert!(idx < self.len());
        let (chunk, rel) = self.locate(idx);
        &self.chunks[chunk].get().expect("byte chunk not allocated")[rel]
    }

    /// Contiguous view of [off, off+len); the range must not straddle chunks.
    #[inline]
    pub(crate) fn slice(&self, off: usize, len: usize) -> &[AtomicU8] {
        debug_assert!(off + len <= self.len());
        let (chunk, rel) = self.locate(off);
        let buf = self.chunks[chunk].get().expect("byte chunk not allocated");
        debug_assert!(rel + len <= buf.len(), "slice straddles a chunk boundary");
        &buf[rel..rel + len]
    }

    /// Exclusive-phase only (resize holds the write lock).
    pub(crate) fn grow_to(&self, new_len: usize) {
        let mut covered = self.base;
        let mut chunk = 0;
        while covered < new_len {
            chunk += 1;
            let size = self.base << (chunk - 1);
            self.chunks[chunk].get_or_init(|| (0..size).map(|_| AtomicU8::new(0)).collect());
            covered += size;
        }
        assert_eq!(covered, new_len.max(self.base));
        self.len.store(new_len as u64, Ordering::Release);
    }

    pub(crate) fn shrink_to(&self, new_len: usize) {
        assert!(new_len <= self.len() && new_len >= self.base);
        self.len.store(new_len as u64, Ordering::Release);
    }

    pub(crate) fn fill(&self, off: usize, len: usize, byte: u8) {
        for i in off..off + len {
            self.at(i).store(byte, Ordering::Release);
        }
    }
}

pub(crate) struct ArenaAlloc {
    pub(crate) free: Vec<u64>,
    pub(crate) bump: u64,
}

// Moved-flag states, one byte per old block per level during a migration.
pub(crate) const UNMOVED: u8 = 0;
pub(crate) const IN_FLIGHT: u8 = 1;
pub(crate) const MOVED: u8 = 2;

pub struct Table {
    pub(crate) store: DurableStore,
    pub(crate) threshold: f64,
    pub(crate) seed: u64,
    pub(crate) initial_blocks: u64,

    /// Published block count per level. Changes only under the write lock.
    pub(crate) m: AtomicU64,
    pub(crate) generation: AtomicU64,
    pub(crate) arena_nodes: AtomicU64,

    pub(crate) lv1_meta: ChunkedBytes,
    pub(crate) lv2_meta: ChunkedBytes,
    pub(crate) lv3_locks: ChunkedBytes,

    /// Per-old-block migration flags for levels 1..3 of the current
    /// generation, plus the count of blocks not yet MOVED per level.
    pub(crate) moved_flags: [ChunkedBytes; 3],
    pub(crate) unmoved: [AtomicU64; 3],

    pub(crate) count: ShardedCounter,
    pub(crate) arena_alloc: Mutex<ArenaAlloc>,
    pub(crate) resize_lock: DistRwLock,
}

impl Table {
    /// Empty table over an in-memory store.
    pub fn new(config: TableConfig) -> Result<Table, TableError> {
        config.validate();
        let m = 1u64 << config.log_initial_blocks;
        let store = DurableStore::new_shadow(m, config.hash_seed);
        Ok(Self::fresh_volatile(store, config.resize_threshold))
    }

    /// Empty table persisted under `dir`.
    pub fn create_file(dir: &std::path::Path, config: TableConfig) -> Result<Table, TableError> {
        config.validate();
        let m = 1u64 << config.log_initial_blocks;
        let store = DurableStore::create_file(dir, m, config.hash_seed)?;
        Ok(Self::fresh_volatile(store, config.resize_threshold))
    }

    /// Volatile state for a store known to hold no keys. The chunked arrays
    /// are based at the table's *initial* size so a later shrink back toward
    /// it stays within their floor, then grown to the current block count.
    pub(crate) fn fresh_volatile(store: DurableStore, threshold: f64) -> Table {
        let meta = store.global_meta().expect("fresh store has a valid header");
        let m = meta.block_count();
        let m0 = meta.initial_blocks;
        let grown = |base: usize, now: usize| {
            let arr = ChunkedBytes::new(base);
            if now > base {
                arr.grow_to(now);
            }
            arr
        };
        Table {
            store,
            threshold,
            seed: meta.hash_seed,
            initial_blocks: m0,
            m: AtomicU64::new(m),
            generation: AtomicU64::new(meta.generation),
            arena_nodes: AtomicU64::new(meta.arena_nodes),
            lv1_meta: grown((m0 * L1_SLOTS as u64) as usize, (m * L1_SLOTS as u64) as usize),
            lv2_meta: grown((m0 * L2_SLOTS as u64) as usize, (m * L2_SLOTS as u64) as usize),
            lv3_locks: grown(m0 as usize, m as usize),
            moved_flags: [
                ChunkedBytes::new(m0 as usize),
                ChunkedBytes::new(m0 as usize),
                ChunkedBytes::new(m0 as usize),
            ],
            unmoved: [AtomicU64::new(0), AtomicU64::new(0), AtomicU64::new(0)],
            count: ShardedCounter::new(),
            arena_alloc: Mutex::new(ArenaAlloc { free: Vec::new(), bump: 0 }),
            resize_lock: DistRwLock::new(),
        }
    }

    pub fn hashes(&self, key: u64) -> HashTriple {
        HashTriple::new(key, self.seed)
    }

    pub fn block_count(&self) -> u64 {
        self.m.load(Ordering::Acquire)
    }

    pub fn generation(&self) -> u64 {
        self.generation.load(Ordering::Acquire)
    }

    /// Primary slots across levels 1 and 2.
    pub fn capacity(&self) -> u64 {
        self.block_count() * SLOTS_PER_BLOCK
    }

    pub fn len(&self) -> u64 {
        self.count.sum().max(0) as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn load_factor(&self) -> f64 {
        self.len() as f64 / self.capacity() as f64
    }

    /// Total memory the table occupies: every durable region plus the
    /// volatile index arrays (fingerprint mirrors, block locks, migration
    /// flags). Fixed-size oddments (counters, locks) are not counted.
    pub fn footprint_bytes(&self) -> u64 {
        let s = &self.store;
        let durable =
            s.meta.len() + s.level1.len() + s.level2.len() + s.heads.len() + s.arena.len();
        let volatile = self.lv1_meta.len()
            + self.lv2_meta.len()
            + self.lv3_locks.len()
            + self.moved_flags.iter().map(|f| f.len()).sum::<usize>();
        (durable + volatile) as u64
    }

    /// Shared instrumentation access (flush counts, crash injection).
    pub fn durable_store(&self) -> &DurableStore {
        &self.store
    }

    /// Close cleanly: everything acknowledged is already flushed, so this
    /// only syncs backing files.
    pub fn close(self) -> Result<(), TableError> {
        self.store.sync_files()?;
        Ok(())
    }

    // ------------------------------------------------------------------
    // Region addressing
    // ------------------------------------------------------------------

    #[inline]
    pub(crate) fn l1_slot_off(block: u64, slot: u32) -> usize {
        block as usize * L1_BLOCK_BYTES + slot as usize * 16
    }

    #[inline]
    pub(crate) fn l2_slot_off(block: u64, slot: u32) -> usize {
        block as usize * L2_BLOCK_BYTES + slot as usize * 16
    }

    #[inline]
    pub(crate) fn node_pair_off(node: u64) -> usize {
        node as usize * NODE_BYTES
    }

    #[inline]
    pub(crate) fn node_next_off(node: u64) -> usize {
        node as usize * NODE_BYTES + 16
    }

    #[inline]
    pub(crate) fn head_off(bucket: u64) -> usize {
        bucket as usize * 8
    }

    // ------------------------------------------------------------------
    // Locks
    // ------------------------------------------------------------------

    /// Acquire the level-1 block lock: bit 7 of the block's metadata byte 0.
    pub(crate) fn lock_l1(&self, block: u64) -> L1Guard<'_> {
        let byte = self.lv1_meta.at(block as usize * L1_SLOTS);
        loop {
            let prev = byte.fetch_or(L1_LOCK_BIT, Ordering::AcqRel);
            if prev & L1_LOCK_BIT == 0 {
                return L1Guard { byte };
            }
            std::thread::yield_now();
        }
    }

    pub(crate) fn lock_bucket(&self, bucket: u64) -> BucketGuard<'_> {
        let byte = self.lv3_locks.at(bucket as usize);
        loop {
            if byte.compare_exchange(0, 1, Ordering::AcqRel, Ordering::Acquire).is_ok() {
                return BucketGuard { byte };
            }
            std::thread::yield_now();
        }
    }

    // ------------------------------------------------------------------
    // Metadata access
    // ------------------------------------------------------------------

    pub(crate) fn l1_snapshot(&self, block: u64) -> [u8; L1_SLOTS] {
        metadata::snapshot_l1(self.lv1_meta.slice(block as usize * L1_SLOTS, L1_SLOTS))
    }

    pub(crate) fn l2_snapshot(&self, block: u64) -> [u8; L2_SLOTS] {
        metadata::snapshot_l2(self.lv2_meta.slice(block as usize * L2_SLOTS, L2_SLOTS))
    }

    /// Match mask for a level-1 snapshot: slot 0 stores the 7-bit fingerprint
    /// derived from the top seven hash bits, which is exactly the full
    /// fingerprint halved (with the EMPTY remap floored at 1).
    #[inline]
    pub(crate) fn l1_match(snap: &[u8; L1_SLOTS], fp: u8) -> u64 {
        let mut mask = match_mask_l1(snap, fp) & !1;
        if snap[0] & 0x7F == (fp >> 1).max(1) {
            mask |= 1;
        }
        mask
    }

    /// Write a slot's metadata byte. Slot 0 keeps the lock bit and takes the
    /// narrowed fingerprint; `fp == EMPTY` clears.
    pub(crate) fn set_l1_meta(&self, block: u64, slot: u32, fp: u8) {
        let byte = self.lv1_meta.at(block as usize * L1_SLOTS + slot as usize);
        if slot == 0 {
            let narrow = if fp == EMPTY { 0 } else { (fp >> 1).max(1) };
            let old = byte.load(Ordering::Relaxed);
            byte.store((old & L1_LOCK_BIT) | narrow, Ordering::Release);
        } else {
            byte.store(fp, Ordering::Release);
        }
    }

    pub(crate) fn set_l2_meta(&self, block: u64, slot: u32, fp: u8) {
        self.lv2_meta.at(block as usize * L2_SLOTS + slot as usize).store(fp, Ordering::Release);
    }

    pub(crate) fn claim_l2_slot(&self, block: u64, slot: u32, fp: u8) -> bool {
        self.lv2_meta
            .at(block as usize * L2_SLOTS + slot as usize)
            .compare_exchange(EMPTY, fp, Ordering::AcqRel, Ordering::Acquire)
            .is_ok()
    }

    // ------------------------------------------------------------------
    // Migration context
    // ------------------------------------------------------------------

    /// Whether any level still has unmoved blocks from the last doubling.
    #[inline]
    pub(crate) fn migrating(&self) -> bool {
        self.unmoved.iter().any(|c| c.load(Ordering::Acquire) != 0)
    }

    // ------------------------------------------------------------------
    // Lookup
    // ------------------------------------------------------------------

    pub fn get(&self, key: u64) -> Option<u64> {
        self.lookup(key).0.map(|(v, _)| v)
    }

    /// Value plus physical location, for stability checks.
    pub fn get_located(&self, key: u64) -> Option<(u64, Location)> {
        self.lookup(key).0
    }

    /// Value plus the data-slot read counts the lookup performed.
    pub fn probe_stats(&self, key: u64) -> (Option<u64>, ProbeStats) {
        let (hit, stats) = self.lookup(key);
        (hit.map(|(v, _)| v), stats)
    }

    fn lookup(&self, key: u64) -> (Option<(u64, Location)>, ProbeStats) {
        let _g = self.resize_lock.read();
        let mut stats = ProbeStats::default();
        if key == INVALID {
            let (present, value) = self.store.meta.load_pair(SIDE_OFF);
            let hit = (present == 1 && value != INVALID)
                .then_some((value, Location { level: Level::Side, block: 0, slot: 0 }));
            return (hit, stats);
        }
        let t = self.hashes(key);
        let m = self.block_count();
        let old_m = if self.migrating() { m / 2 } else { m };

        // Level 1: the old block first during a migration, then the new.
        let b1 = t.block0(m);
        let b1_old = t.block0(old_m);
        for b in dedup2(b1_old, b1) {
            if let Some(hit) = self.probe_l1(b, key, t.f0, &mut stats) {
                return (Some(hit), stats);
            }
        }

        // Level 2: primary then secondary, old candidates before new. Dedup
        // is per (block, tag): one block can be a secondary candidate under
        // the old generation and a primary under the new, and a migrated
        // stay-key is retagged, so both tags must be tried there.
        let mut l2 = [(u64::MAX, 0u8); 4];
        let mut n = 0;
        for probe in [
            (t.block1(old_m), t.f1),
            (t.block2(old_m), t.f2),
            (t.block1(m), t.f1),
            (t.block2(m), t.f2),
        ] {
            if !l2[..n].contains(&probe) {
                l2[n] = probe;
                n += 1;
                if let Some(hit) = self.probe_l2(probe.0, key, probe.1, &mut stats) {
                    return (Some(hit), stats);
                }
            }
        }

        // Level 3: lockless emptiness check, then a scan under the bucket
        // lock.
        for bucket in dedup2(b1_old, b1) {
            if self.store.heads.load_word(Self::head_off(bucket)) == INVALID {
                continue;
            }
            let _bg = self.lock_bucket(bucket);
            if let Some(hit) = self.scan_bucket(bucket, key, &mut stats) {
                return (Some(hit), stats);
            }
        }
        (None, stats)
    }

    fn probe_l1(
        &self,
        block: u64,
        key: u64,
        fp: u8,
        stats: &mut ProbeStats,
    ) -> Option<(u64, Location)> {
        let snap = self.l1_snapshot(block);
        let mut mask = Self::l1_match(&snap, fp);
        while mask != 0 {
            let slot = mask.trailing_zeros();
            mask &= mask - 1;
            stats.l1_slot_reads += 1;
            let (k, v) = self.store.level1.load_pair(Self::l1_slot_off(block, slot));
            if k == key && v != INVALID {
                return Some((v, Location { level: Level::L1, block, slot }));
            }
        }
        None
    }

    fn probe_l2(
        &self,
        block: u64,
        key: u64,
        fp: u8,
        stats: &mut ProbeStats,
    ) -> Option<(u64, Location)> {
        let snap = self.l2_snapshot(block);
        let mut mask = match_mask_l2(&snap, fp);
        while mask != 0 {
            let slot = mask.trailing_zeros();
            mask &= mask - 1;
            stats.l2_slot_reads += 1;
            let (k, v) = self.store.level2.load_pair(Self::l2_slot_off(block, slot));
            if k == key && v != INVALID {
                return Some((v, Location { level: Level::L2, block, slot }));
            }
        }
        None
    }

    /// Caller holds the bucket lock.
    fn scan_bucket(
        &self,
        bucket: u64,
        key: u64,
        stats: &mut ProbeStats,
    ) -> Option<(u64, Location)> {
        let cap = self.arena_nodes.load(Ordering::Acquire);
        let mut node = self.store.heads.load_word(Self::head_off(bucket));
        while node < cap {
            stats.l3_node_reads += 1;
            let (k, v) = self.store.arena.load_pair(Self::node_pair_off(node));
            if k == key && v != INVALID {
                return Some((v, Location { level: Level::L3, block: bucket, slot: node as u32 }));
            }
            node = self.store.arena.load_word(Self::node_next_off(node));
        }
        None
    }

    // ------------------------------------------------------------------
    // Insert
    // ------------------------------------------------------------------

    pub fn insert(&self, key: u64, value: u64) -> Result<InsertOutcome, TableError> {
        if value == INVALID {
            return Err(TableError::ReservedValue(value));
        }
        let _g = self.mutation_guard()?;
        if key == INVALID {
            return self.side_insert(value);
        }
        let t = self.hashes(key);
        let m = self.block_count();
        let b1 = t.block0(m);
        if self.unmoved[0].load(Ordering::Acquire) != 0 {
            self.ensure_moved(0, b1)?;
        }
        let _lock = self.lock_l1(b1);

        let (c1, c2) = (t.block1(m), t.block2(m));
        if let Some(loc) = self.locate_for_mutation(key, &t, b1, c1, c2)? {
            self.overwrite(loc, key, value)?;
            return Ok(InsertOutcome::Updated);
        }

        // Level 1: first empty slot by ascending index.
        let snap = self.l1_snapshot(b1);
        let empties = empty_mask_l1(&snap);
        if empties != 0 {
            let slot = select_nth(empties, 0);
            let off = Self::l1_slot_off(b1, slot);
            self.store.level1.store_pair(off, key, value);
            self.store.level1.flush(off, 16)?;
            self.set_l1_meta(b1, slot, t.f0);
            self.count.add(1);
            return Ok(InsertOutcome::Inserted);
        }

        // Level 2: the block with more empty slots, ties to the primary.
        loop {
            let s1 = self.l2_snapshot(c1);
            let s2 = self.l2_snapshot(c2);
            let (e1, e2) = (empty_mask_l2(&s1), empty_mask_l2(&s2));
            if e1 == 0 && e2 == 0 {
                break;
            }
            let (block, mask, fp) = if e2.count_ones() > e1.count_ones() {
                (c2, e2, t.f2)
            } else {
                // More empties in the primary, or a tie (including c1 == c2):
                // the primary wins. e1 can't be zero here, since e1 >= e2 and
                // not both are zero.
                (c1, e1, t.f1)
            };
            let slot = select_nth(mask, 0);
            if self.claim_l2_slot(block, slot, fp) {
                let off = Self::l2_slot_off(block, slot);
                self.store.level2.store_pair(off, key, value);
                self.store.level2.flush(off, 16)?;
                self.count.add(1);
                return Ok(InsertOutcome::Inserted);
            }
            // Lost the slot race to another level-1 lock; re-evaluate.
            std::hint::spin_loop();
        }

        // Level 3: prepend under the bucket lock.
        self.insert_l3(b1, key, value)?;
        self.count.add(1);
        Ok(InsertOutcome::Inserted)
    }

    /// Caller holds the level-1 block lock for the key's bucket.
    pub(crate) fn insert_l3(&self, bucket: u64, key: u64, value: u64) -> Result<(), TableError> {
        if self.unmoved[2].load(Ordering::Acquire) != 0 {
            self.ensure_moved(2, bucket)?;
        }
        let _bg = self.lock_bucket(bucket);
        let node = self.alloc_node()?;
        let head = self.store.heads.load_word(Self::head_off(bucket));
        self.store.arena.store_pair(Self::node_pair_off(node), key, value);
        self.store.arena.store_word(Self::node_next_off(node), head);
        self.store.arena.flush(Self::node_pair_off(node), NODE_BYTES)?;
        // The node becomes reachable only once the head is durable.
        self.store.heads.store_word(Self::head_off(bucket), node);
        self.store.heads.flush(Self::head_off(bucket), 8)?;
        Ok(())
    }

    fn alloc_node(&self) -> Result<u64, TableError> {
        let mut alloc = self.arena_alloc.lock().unwrap();
        if let Some(n) = alloc.free.pop() {
            return Ok(n);
        }
        if alloc.bump < self.arena_nodes.load(Ordering::Acquire) {
            let n = alloc.bump;
            alloc.bump += 1;
            return Ok(n);
        }
        Err(TableError::ArenaExhausted)
    }

    /// Find the key for an update/remove. The caller holds the level-1 lock;
    /// level-2 and level-3 old blocks are moved on demand so only
    /// current-generation locations need probing.
    fn locate_for_mutation(
        &self,
        key: u64,
        t: &HashTriple,
        b1: u64,
        c1: u64,
        c2: u64,
    ) -> Result<Option<Location>, TableError> {
        let mut stats = ProbeStats::default();
        if let Some((_, loc)) = self.probe_l1(b1, key, t.f0, &mut stats) {
            return Ok(Some(loc));
        }
        if self.unmoved[1].load(Ordering::Acquire) != 0 {
            self.ensure_moved(1, c1)?;
            self.ensure_moved(1, c2)?;
        }
        if let Some((_, loc)) = self.probe_l2(c1, key, t.f1, &mut stats) {
            return Ok(Some(loc));
        }
        if c1 != c2 {
            if let Some((_, loc)) = self.probe_l2(c2, key, t.f2, &mut stats) {
                return Ok(Some(loc));
            }
        }
        if self.unmoved[2].load(Ordering::Acquire) != 0 {
            self.ensure_moved(2, b1)?;
        }
        if self.store.heads.load_word(Self::head_off(b1)) != INVALID {
            let _bg = self.lock_bucket(b1);
            if let Some((_, loc)) = self.scan_bucket(b1, key, &mut stats) {
                return Ok(Some(loc));
            }
        }
        Ok(None)
    }

    /// In-place value update; the location keeps serving reads throughout.
    fn overwrite(&self, loc: Location, key: u64, value: u64) -> Result<(), TableError> {
        match loc.level {
            Level::L1 => {
                let off = Self::l1_slot_off(loc.block, loc.slot);
                self.store.level1.store_pair(off, key, value);
                self.store.level1.flush(off, 16)?;
            }
            Level::L2 => {
                let off = Self::l2_slot_off(loc.block, loc.slot);
                self.store.level2.store_pair(off, key, value);
                self.store.level2.flush(off, 16)?;
            }
            Level::L3 => {
                let _bg = self.lock_bucket(loc.block);
                let off = Self::node_pair_off(loc.slot as u64);
                self.store.arena.store_pair(off, key, value);
                self.store.arena.flush(off, 16)?;
            }
            Level::Side => unreachable!("side slot updates never route here"),
        }
        Ok(())
    }

    // ------------------------------------------------------------------
    // Remove
    // ------------------------------------------------------------------

    pub fn remove(&self, key: u64) -> Result<bool, TableError> {
        let _g = self.mutation_guard()?;
        if key == INVALID {
            return self.side_remove();
        }
        let t = self.hashes(key);
        let m = self.block_count();
        let b1 = t.block0(m);
        if self.unmoved[0].load(Ordering::Acquire) != 0 {
            self.ensure_moved(0, b1)?;
        }
        let _lock = self.lock_l1(b1);
        let (c1, c2) = (t.block1(m), t.block2(m));
        let Some(loc) = self.locate_for_mutation(key, &t, b1, c1, c2)? else {
            return Ok(false);
        };
        match loc.level {
            Level::L1 => {
                // Invalidate the slot first; the metadata byte clears after,
                // so a racing reader sees a fingerprint pointing at an
                // invalid pair and skips it.
                let off = Self::l1_slot_off(loc.block, loc.slot);
                self.store.level1.store_pair(off, INVALID, INVALID);
                self.store.level1.flush(off, 16)?;
                self.set_l1_meta(loc.block, loc.slot, EMPTY);
            }
            Level::L2 => {
                let off = Self::l2_slot_off(loc.block, loc.slot);
                self.store.level2.store_pair(off, INVALID, INVALID);
                self.store.level2.flush(off, 16)?;
                self.set_l2_meta(loc.block, loc.slot, EMPTY);
            }
            Level::L3 => {
                let _bg = self.lock_bucket(loc.block);
                self.unlink_node(loc.block, loc.slot as u64)?;
            }
            Level::Side => unreachable!("side removes never route here"),
        }
        self.count.add(-1);
        Ok(true)
    }

    /// Unlink `node` from its bucket chain and recycle it. One durable word
    /// write: the predecessor's next (or the head). The node's contents stay
    /// in place but become unreachable, which recovery treats as free. Caller
    /// holds the bucket lock.
    fn unlink_node(&self, bucket: u64, node: u64) -> Result<(), TableError> {
        let next = self.store.arena.load_word(Self::node_next_off(node));
        let head = self.store.heads.load_word(Self::head_off(bucket));
        if head == node {
            self.store.heads.store_word(Self::head_off(bucket), next);
            self.store.heads.flush(Self::head_off(bucket), 8)?;
        } else {
            let cap = self.arena_nodes.load(Ordering::Acquire);
            let mut prev = head;
            loop {
                assert!(prev < cap, "node {node} not on bucket {bucket}'s chain");
                let p_next = self.store.arena.load_word(Self::node_next_off(prev));
                if p_next == node {
                    self.store.arena.store_word(Self::node_next_off(prev), next);
                    self.store.arena.flush(Self::node_next_off(prev), 8)?;
                    break;
                }
                prev = p_next;
            }
        }
        self.arena_alloc.lock().unwrap().free.push(node);
        Ok(())
    }

    // ------------------------------------------------------------------
    // Side slot: the one key equal to the INVALID sentinel
    // ------------------------------------------------------------------

    fn side_insert(&self, value: u64) -> Result<InsertOutcome, TableError> {
        loop {
            let cur = self.store.meta.load_pair(SIDE_OFF);
            if self.store.meta.compare_exchange_pair(SIDE_OFF, cur, (1, value)).is_ok() {
                self.store.meta.flush(SIDE_OFF, 16)?;
                return Ok(if cur.0 == 0 {
                    self.count.add(1);
                    InsertOutcome::Inserted
                } else {
                    InsertOutcome::Updated
                });
            }
        }
    }

    fn side_remove(&self) -> Result<bool, TableError> {
        loop {
            let cur = self.store.meta.load_pair(SIDE_OFF);
            if cur.0 == 0 {
                return Ok(false);
            }
            if self.store.meta.compare_exchange_pair(SIDE_OFF, cur, (0, INVALID)).is_ok() {
                self.store.meta.flush(SIDE_OFF, 16)?;
                self.count.add(-1);
                return Ok(true);
            }
        }
    }

    // ------------------------------------------------------------------
    // Guards
    // ------------------------------------------------------------------

    /// Read guard for a mutation, growing first if the table is at its
    /// threshold. The write lock is only taken when a recheck under it still
    /// sees the threshold crossed.
    fn mutation_guard(&self) -> Result<ReadGuard<'_>, TableError> {
        let mut g = self.resize_lock.read();
        while self.load_factor() >= self.threshold {
            drop(g);
            {
                let _w = self.resize_lock.write();
                if self.load_factor() >= self.threshold {
                    self.grow_locked()?;
                }
            }
            g = self.resize_lock.read();
        }
        Ok(g)
    }

    /// Double the table if the load factor has reached the threshold,
    /// rechecking under the write lock. Returns whether a doubling ran.
    pub fn maybe_grow(&self) -> Result<bool, TableError> {
        if self.load_factor() < self.threshold {
            return Ok(false);
        }
        let _w = self.resize_lock.write();
        if self.load_factor() < self.threshold {
            return Ok(false);
        }
        self.grow_locked()?;
        Ok(true)
    }

    // ------------------------------------------------------------------
    // Whole-table scans (quiescent)
    // ------------------------------------------------------------------

    /// Visit every present (key, value) pair. Takes the write lock, so it is
    /// exact but exclusive.
    pub fn for_each_entry(&self, mut f: impl FnMut(u64, u64)) {
        let _w = self.resize_lock.write();
        self.scan_entries(|k, v, _| f(k, v));
    }

    /// Fractions of keys per level (level 1, 2, 3), or zeros when empty.
    /// The side slot is outside the level structure and not counted.
    pub fn level_distribution(&self) -> (f64, f64, f64) {
        let _w = self.resize_lock.write();
        let mut counts = [0u64; 3];
        self.scan_entries(|_, _, level| match level {
            Level::L1 => counts[0] += 1,
            Level::L2 => counts[1] += 1,
            Level::L3 => counts[2] += 1,
            Level::Side => {}
        });
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return (0.0, 0.0, 0.0);
        }
        let t = total as f64;
        (counts[0] as f64 / t, counts[1] as f64 / t, counts[2] as f64 / t)
    }

    /// Caller holds the write lock (or is otherwise exclusive).
    pub(crate) fn scan_entries(&self, mut f: impl FnMut(u64, u64, Level)) {
        let m = self.block_count();
        for block in 0..m {
            for slot in 0..L1_SLOTS as u32 {
                let (k, v) = self.store.level1.load_pair(Self::l1_slot_off(block, slot));
                if k != INVALID && v != INVALID {
                    f(k, v, Level::L1);
                }
            }
        }
        for block in 0..m {
            for slot in 0..L2_SLOTS as u32 {
                let (k, v) = self.store.level2.load_pair(Self::l2_slot_off(block, slot));
                if k != INVALID && v != INVALID {
                    f(k, v, Level::L2);
                }
            }
        }
        let cap = self.arena_nodes.load(Ordering::Acquire);
        for bucket in 0..m {
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node < cap {
                let (k, v) = self.store.arena.load_pair(Self::node_pair_off(node));
                if k != INVALID && v != INVALID {
                    f(k, v, Level::L3);
                }
                node = self.store.arena.load_word(Self::node_next_off(node));
            }
        }
        let (present, value) = self.store.meta.load_pair(SIDE_OFF);
        if present == 1 && value != INVALID {
            f(INVALID, value, Level::Side);
        }
    }

    /// Quiescent structural check: metadata coherence, candidate placement,
    /// uniqueness, and count agreement. Returns the first violation found.
    pub fn verify_integrity(&self) -> Result<(), String> {
        let _w = self.resize_lock.write();
        let m = self.block_count();
        let migrating = self.migrating();
        let old_m = if migrating { m / 2 } else { m };
        let mut seen = std::collections::HashMap::new();
        let mut total = 0u64;

        let mut check_unique = |k: u64, where_: String| -> Result<(), String> {
            if let Some(prev) = seen.insert(k, where_.clone()) {
                return Err(format!("key {k:#x} at both {prev} and {where_}"));
            }
            Ok(())
        };

        for block in 0..m {
            for slot in 0..L1_SLOTS as u32 {
                let (k, v) = self.store.level1.load_pair(Self::l1_slot_off(block, slot));
                let meta = self.lv1_meta.at((block * L1_SLOTS as u64) as usize + slot as usize)
                    .load(Ordering::Acquire);
                let meta = if slot == 0 { meta & 0x7F } else { meta };
                let occupied = k != INVALID && v != INVALID;
                if occupied != (meta != EMPTY) {
                    return Err(format!(
                        "level1 block {block} slot {slot}: occupied={occupied} but meta={meta:#x}"
                    ));
                }
                if occupied {
                    let t = self.hashes(k);
                    let want = if slot == 0 { (t.f0 >> 1).max(1) } else { t.f0 };
                    if meta != want {
                        return Err(format!(
                            "level1 block {block} slot {slot}: meta {meta:#x} != fingerprint {want:#x}"
                        ));
                    }
                    if t.block0(m) != block && t.block0(old_m) != block {
                        return Err(format!("key {k:#x} in wrong level1 block {block}"));
                    }
                    check_unique(k, format!("L1 {block}/{slot}"))?;
                    total += 1;
                }
            }
        }
        for block in 0..m {
            for slot in 0..L2_SLOTS as u32 {
                let (k, v) = self.store.level2.load_pair(Self::l2_slot_off(block, slot));
                let meta = self.lv2_meta.at((block * L2_SLOTS as u64) as usize + slot as usize)
                    .load(Ordering::Acquire);
                let occupied = k != INVALID && v != INVALID;
                if occupied != (meta != EMPTY) {
                    return Err(format!(
                        "level2 block {block} slot {slot}: occupied={occupied} but meta={meta:#x}"
                    ));
                }
                if occupied {
                    let t = self.hashes(k);
                    let candidates = [t.block1(m), t.block2(m), t.block1(old_m), t.block2(old_m)];
                    if !candidates.contains(&block) {
                        return Err(format!("key {k:#x} in wrong level2 block {block}"));
                    }
                    let tags: &[u8] = if t.block1(m) == block || t.block1(old_m) == block {
                        if t.block2(m) == block || t.block2(old_m) == block {
                            &[t.f1, t.f2]
                        } else {
                            &[t.f1]
                        }
                    } else {
                        &[t.f2]
                    };
                    if !tags.contains(&meta) {
                        return Err(format!(
                            "level2 block {block} slot {slot}: meta {meta:#x} not in {tags:?}"
                        ));
                    }
                    check_unique(k, format!("L2 {block}/{slot}"))?;
                    total += 1;
                }
            }
        }
        let cap = self.arena_nodes.load(Ordering::Acquire);
        let mut reachable = std::collections::HashSet::new();
        for bucket in 0..m {
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID {
                if node >= cap {
                    return Err(format!("bucket {bucket} links to out-of-range node {node}"));
                }
                if !reachable.insert(node) {
                    return Err(format!("node {node} linked twice"));
                }
                let (k, v) = self.store.arena.load_pair(Self::node_pair_off(node));
                if k == INVALID || v == INVALID {
                    return Err(format!("reachable node {node} holds an invalid pair"));
                }
                let t = self.hashes(k);
                if t.block0(m) != bucket && t.block0(old_m) != bucket {
                    return Err(format!("key {k:#x} in wrong bucket {bucket}"));
                }
                check_unique(k, format!("L3 {bucket}/{node}"))?;
                total += 1;
                node = self.store.arena.load_word(Self::node_next_off(node));
            }
        }
        {
            let alloc = self.arena_alloc.lock().unwrap();
            for &n in &alloc.free {
                if reachable.contains(&n) {
                    return Err(format!("node {n} both free and reachable"));
                }
                if n >= alloc.bump {
                    return Err(format!("free node {n} beyond bump {}", alloc.bump));
                }
            }
            if reachable.len() + alloc.free.len() != alloc.bump as usize {
                return Err(format!(
                    "arena leak: {} reachable + {} free != {} allocated",
                    reachable.len(),
                    alloc.free.len(),
                    alloc.bump
                ));
            }
        }
        let (present, value) = self.store.meta.load_pair(SIDE_OFF);
        if present == 1 && value != INVALID {
            total += 1;
        }
        if total != self.len() {
            return Err(format!("count {} but scan found {total}", self.len()));
        }
        Ok(())
    }
}

/// Pair of block indices with the duplicate collapsed.
#[inline]
fn dedup2(a: u64, b: u64) -> impl Iterator<Item = u64> {
    std::iter::once(a).chain((a != b).then_some(b))
}

pub(crate) struct L1Guard<'a> {
    byte: &'a AtomicU8,
}

impl Drop for L1Guard<'_> {
    fn drop(&mut self) {
        self.byte.fetch_and(!L1_LOCK_BIT, Ordering::Release);
    }
}

pub(crate) struct BucketGuard<'a> {
    byte: &'a AtomicU8,
}

impl Drop for BucketGuard<'_> {
    fn drop(&mut self) {
        self.byte.store(0, Ordering::Release);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(log_blocks: u32) -> Table {
        Table::new(TableConfig {
            log_initial_blocks: log_blocks,
            resize_threshold: 0.85,
            hash_seed: 0xDEC0DE,
        })
        .unwrap()
    }

    /// Smallest key (scanning upward from `start`) whose hash triple
    /// satisfies the predicate.
    fn key_where(t: &Table, start: u64, pred: impl Fn(&HashTriple) -> bool) -> u64 {
        (start..start + 5_000_000).find(|&k| pred(&t.hashes(k))).expect("no key found")
    }

    #[test]
    fn new_table_dimensions() {
        let t = table(4);
        assert_eq!(t.block_count(), 16);
        assert_eq!(t.capacity(), 1152);
        assert_eq!(t.len(), 0);
        assert_eq!(t.get(42), None);
        assert_eq!(t.level_distribution(), (0.0, 0.0, 0.0));
        assert_eq!(t.load_factor(), 0.0);
    }

    #[test]
    fn insert_get_update() {
        let t = table(4);
        assert_eq!(t.insert(1, 2).unwrap(), InsertOutcome::Inserted);
        assert_eq!(t.get(1), Some(2));
        let (_, loc) = t.get_located(1).unwrap();
        assert_eq!(loc.level, Level::L1);

        assert_eq!(t.insert(1, 3).unwrap(), InsertOutcome::Updated);
        assert_eq!(t.get(1), Some(3));
        let (_, loc2) = t.get_located(1).unwrap();
        assert_eq!(loc, loc2);
        assert_eq!(t.len(), 1);
        t.verify_integrity().unwrap();
    }

    #[test]
    fn remove_and_reinsert() {
        let t = table(4);
        t.insert(7, 70).unwrap();
        assert!(t.remove(7).unwrap());
        assert_eq!(t.get(7), None);
        assert!(!t.remove(7).unwrap());
        assert_eq!(t.len(), 0);
        t.insert(7, 71).unwrap();
        assert_eq!(t.get(7), Some(71));
        t.verify_integrity().unwrap();
    }

    #[test]
    fn reserved_value_rejected() {
        let t = table(4);
        assert!(matches!(t.insert(1, INVALID), Err(TableError::ReservedValue(_))));
        assert_eq!(t.len(), 0);
    }

    #[test]
    fn side_slot_handles_the_invalid_key() {
        let t = table(4);
        assert_eq!(t.get(INVALID), None);
        assert_eq!(t.insert(INVALID, 9).unwrap(), InsertOutcome::Inserted);
        assert_eq!(t.get(INVALID), Some(9));
        assert_eq!(t.insert(INVALID, 10).unwrap(), InsertOutcome::Updated);
        assert_eq!(t.get(INVALID), Some(10));
        assert_eq!(t.len(), 1);
        assert!(t.remove(INVALID).unwrap());
        assert_eq!(t.get(INVALID), None);
        assert!(!t.remove(INVALID).unwrap());
        assert_eq!(t.len(), 0);
        t.verify_integrity().unwrap();
    }

    #[test]
    fn stability_until_removed() {
        let t = table(5);
        let keys: Vec<u64> = (0..800).collect();
        for &k in &keys {
            t.insert(k, k + 1).unwrap();
        }
        let locs: Vec<_> = keys.iter().map(|&k| t.get_located(k).unwrap().1).collect();
        // Interleave updates and unrelated removes; locations must not move.
        for &k in keys.iter().step_by(3) {
            t.insert(k, k + 2).unwrap();
        }
        for &k in keys.iter().skip(1).step_by(7) {
            t.remove(k).unwrap();
        }
        for (&k, &loc) in keys.iter().zip(&locs) {
            if let Some((_, now)) = t.get_located(k) {
                assert_eq!(loc, now, "key {k} moved");
            }
        }
        t.verify_integrity().unwrap();
    }

    #[test]
    fn full_l1_block_overflows_to_level2() {
        let t = table(2);
        let m = t.block_count();
        let target = 0u64;
        let mut keys = Vec::new();
        let mut start = 0;
        for _ in 0..(L1_SLOTS + 3) {
            let k = key_where(&t, start, |h| h.block0(m) == target);
            start = k + 1;
            keys.push(k);
        }
        for &k in &keys {
            t.insert(k, 1).unwrap();
        }
        let mut by_level = [0u32; 3];
        for &k in &keys {
            match t.get_located(k).unwrap().1.level {
                Level::L1 => by_level[0] += 1,
                Level::L2 => by_level[1] += 1,
                Level::L3 => by_level[2] += 1,
                Level::Side => unreachable!(),
            }
        }
        assert_eq!(by_level[0], L1_SLOTS as u32);
        assert_eq!(by_level[1], 3);
        t.verify_integrity().unwrap();
    }

    #[test]
    fn emptier_level2_block_wins_and_ties_go_primary() {
        let t = table(2);
        let m = t.block_count();
        // A key whose two level-2 candidates differ.
        let k = key_where(&t, 0, |h| h.block1(m) != h.block2(m));
        let h = t.hashes(k);
        let (c1, c2) = (h.block1(m), h.block2(m));

        // Fill the level-1 block of k so the insert spills to level 2, then
        // pre-load the primary candidate with two level-2 keys so the
        // secondary is emptier.
        let mut start = k + 1;
        let mut fill_l1 = Vec::new();
        for _ in 0..L1_SLOTS {
            let kk = key_where(&t, start, |hh| hh.block0(m) == h.block0(m));
            start = kk + 1;
            fill_l1.push(kk);
        }
        for &kk in &fill_l1 {
            t.insert(kk, 0).unwrap();
        }
        // Occupy two slots of c1 directly through another key stream whose
        // level-1 block differs but whose level-2 primary is c1.
        let mut occupied = 0;
        let mut probe = start;
        while occupied < 2 {
            let kk = key_where(&t, probe, |hh| {
                hh.block0(m) == h.block0(m) && hh.block1(m) == c1 && hh.block2(m) == c1
            });
            probe = kk + 1;
            t.insert(kk, 0).unwrap();
            if t.get_located(kk).unwrap().1.level == Level::L2 {
                occupied += 1;
            }
        }

        t.insert(k, 5).unwrap();
        let loc = t.get_located(k).unwrap().1;
        assert_eq!(loc.level, Level::L2);
        assert_eq!(loc.block, c2, "secondary had more empties");

        // Tie case: a fresh key whose candidates are both untouched blocks.
        let k2 = key_where(&t, probe, |hh| {
            hh.block0(m) == h.block0(m)
                && hh.block1(m) != hh.block2(m)
                && hh.block1(m) != c1
                && hh.block1(m) != c2
                && hh.block2(m) != c1
                && hh.block2(m) != c2
        });
        t.insert(k2, 6).unwrap();
        let loc2 = t.get_located(k2).unwrap().1;
        assert_eq!(loc2.level, Level::L2);
        assert_eq!(loc2.block, t.hashes(k2).block1(m), "tie goes to the primary");
        t.verify_integrity().unwrap();
    }

    #[test]
    fn level3_prepends_and_unlinks() {
        let t = table(1);
        let m = t.block_count();
        let target = 1u64;
        // Overflow both level-2 candidates for a stream of same-bucket keys.
        // With m=2 every level-2 block has 8 slots; drive enough keys at one
        // level-1 block to exhaust level 1 and both candidates.
        let mut keys = Vec::new();
        let mut start = 0;
        while keys.len() < L1_SLOTS + 2 * L2_SLOTS + 3 {
            let k = key_where(&t, start, |h| h.block0(m) == target);
            start = k + 1;
            keys.push(k);
        }
        for &k in &keys {
            t.insert(k, k).unwrap();
        }
        let l3: Vec<u64> = keys
            .iter()
            .copied()
            .filter(|&k| t.get_located(k).unwrap().1.level == Level::L3)
            .collect();
        assert!(!l3.is_empty(), "no key overflowed to level 3");
        for &k in &l3 {
            assert_eq!(t.get(k), Some(k));
        }
        // Remove a middle chain node and the head; chain stays consistent.
        let victim = l3[l3.len() / 2];
        assert!(t.remove(victim).unwrap());
        assert_eq!(t.get(victim), None);
        for &k in &l3 {
            if k != victim {
                assert_eq!(t.get(k), Some(k), "chain broke at {k}");
            }
        }
        t.verify_integrity().unwrap();

        // Freed node is reused by the next overflow insert.
        let k_new = key_where(&t, start, |h| h.block0(m) == target);
        t.insert(k_new, 77).unwrap();
        t.verify_integrity().unwrap();
    }

    #[test]
    fn load_factor_arithmetic() {
        let t = table(4);
        for k in 0..576u64 {
            t.insert(k, 1).unwrap();
        }
        assert_eq!(t.len(), 576);
        assert!((t.load_factor() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn removing_everything_leaves_clean_metadata() {
        let t = table(3);
        let n = 400u64;
        for k in 0..n {
            t.insert(k, k).unwrap();
        }
        for k in 0..n {
            assert!(t.remove(k).unwrap());
        }
        assert_eq!(t.len(), 0);
        let m = t.block_count();
        for i in 0..(m as usize * L1_SLOTS) {
            assert_eq!(t.lv1_meta.at(i).load(Ordering::Relaxed) & 0x7F, EMPTY);
        }
        for i in 0..(m as usize * L2_SLOTS) {
            assert_eq!(t.lv2_meta.at(i).load(Ordering::Relaxed), EMPTY);
        }
        for b in 0..m {
            assert_eq!(t.store.heads.load_word(Table::head_off(b)), INVALID);
        }
        t.scan_entries(|_, _, _| panic!("table should be empty"));
        t.verify_integrity().unwrap();
    }

    #[test]
    fn insert_writes_one_slot_and_one_flush() {
        let t = table(4);
        for k in 0..200u64 {
            let stores = t.store.store_count();
            let flushes = t.store.flush_count();
            t.insert(k, k).unwrap();
            let loc = t.get_located(k).unwrap().1;
            if matches!(loc.level, Level::L1 | Level::L2) {
                assert_eq!(t.store.store_count() - stores, 1, "key {k}: extra slot writes");
                assert_eq!(t.store.flush_count() - flushes, 1, "key {k}: extra flushes");
            }
        }
    }

    #[test]
    fn negative_lookups_rarely_touch_data() {
        let t = table(6);
        for k in 0..2000u64 {
            t.insert(k, k).unwrap();
        }
        let mut reads = 0u64;
        let queries = 4000u64;
        for k in 0..queries {
            let (hit, stats) = t.probe_stats(1_000_000 + k);
            assert_eq!(hit, None);
            reads += (stats.l1_slot_reads + stats.l2_slot_reads + stats.l3_node_reads) as u64;
        }
        // ~2000 occupied slots over 64 blocks ≈ 31 per block; expected
        // fingerprint collisions per negative query ≈ 31/254 + a small
        // level-2 term. Anything near one read per query means the
        // metadata filter is broken.
        assert!(
            (reads as f64) / (queries as f64) < 0.5,
            "negative lookups read {reads} slots over {queries} queries"
        );
    }

    #[test]
    fn differential_against_reference_map() {
        use rand::{Rng, SeedableRng};
        let t = table(3);
        let mut oracle = std::collections::BTreeMap::new();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..6000 {
            let k = rng.gen_range(0..500u64);
            match rng.gen_range(0..10) {
                0..=4 => {
                    let v = rng.gen_range(0..u64::MAX - 1);
                    let out = t.insert(k, v).unwrap();
                    let prev = oracle.insert(k, v);
                    assert_eq!(out == InsertOutcome::Updated, prev.is_some());
                }
                5..=7 => {
                    assert_eq!(t.get(k), oracle.get(&k).copied(), "get({k})");
                }
                _ => {
                    assert_eq!(t.remove(k).unwrap(), oracle.remove(&k).is_some());
                }
            }
        }
        assert_eq!(t.len(), oracle.len() as u64);
        for (&k, &v) in &oracle {
            assert_eq!(t.get(k), Some(v));
        }
        t.verify_integrity().unwrap();
    }
}
