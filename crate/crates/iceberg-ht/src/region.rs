//! Durable-region emulation with persistent-memory semantics: 8-byte store
//! atomicity, 64-byte-line durability, explicit writeback + fence, and crash
//! injection.
//!
//! Every region keeps two images. `live` is the working image the table reads
//! and writes through 16-byte atomic units (so a concurrent reader never sees
//! a torn key/value pair). `durable` is what survives a crash: it advances
//! only when `flush` copies a live line across. Unfenced stores are also
//! recorded per line as 8-byte words, and `crash` in word-subset mode persists
//! a seeded-random subset of them — modeling a CPU that may write back any
//! prefix-free selection of outstanding stores, tearing a 16-byte pair into
//! halves.
//!
//! An event fuse supports exhaustive crash sweeps: replay a trace with the
//! fuse set to N and durable state freezes at event N while the live image
//! (and the event counter) keep going, so one deterministic rerun per N
//! explores every crash point.
//!
//! Growth is in place: each region is a chain of doubling chunks, so extending
//! never moves existing bytes and readers keep working during a grow. The
//! file backend maps `flush` to positioned writes into one file per region;
//! crash injection is only available on the in-memory shadow backend.

use portable_atomic::AtomicU128;
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Durability granule.
pub const LINE: usize = 64;
/// Bytes per key-value slot.
pub const SLOT_BYTES: usize = 16;
/// Bytes per level-1 block (64 slots).
pub const L1_BLOCK_BYTES: usize = 64 * SLOT_BYTES;
/// Bytes per level-2 block (8 slots).
pub const L2_BLOCK_BYTES: usize = 8 * SLOT_BYTES;
/// Bytes per level-3 node: key, value, next, pad.
pub const NODE_BYTES: usize = 32;
/// Format tag at offset 0 of the meta region; last byte is the version.
pub const MAGIC: u64 = u64::from_le_bytes(*b"ICEHT\0v1");

/// Word pattern of a free slot half. Never a legal key or value.
pub const INVALID: u64 = u64::MAX;

// Meta-region word offsets. The first line is the persistent header; the
// second line holds the side slot that stores the one key equal to INVALID.
pub const META_LEN: usize = 2 * LINE;
pub const MAGIC_OFF: usize = 0;
pub const BLOCKS_OFF: usize = 8;
pub const GEN_OFF: usize = 16;
pub const ARENA_OFF: usize = 24;
pub const SEED_OFF: usize = 32;
pub const SIDE_OFF: usize = 64; // unit: lo = present flag, hi = value

const MAX_CHUNKS: usize = 48;
const LOG_SHARDS: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum RegionError {
    #[error("simulated flush failure")]
    FlushFailed,
    #[error("meta region magic {found:#018x} does not match {MAGIC:#018x}")]
    BadMagic { found: u64 },
    #[error("{region} file is {got} bytes, expected {expected}")]
    WrongLength { region: &'static str, expected: u64, got: u64 },
    #[error("crash injection requires the in-memory shadow backend")]
    CrashUnsupported,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How a crash treats unfenced stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tearing {
    /// Every unfenced store is lost.
    DropAll,
    /// A seeded-random subset of logged 8-byte words persists, applied in
    /// store order per line; a 16-byte pair store may tear in half.
    WordSubset,
}

/// Persistent header, one line at the start of the meta region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlobalMeta {
    pub initial_blocks: u64,
    pub generation: u64,
    pub arena_nodes: u64,
    pub hash_seed: u64,
}

impl GlobalMeta {
    pub fn block_count(&self) -> u64 {
        self.initial_blocks << self.generation
    }
}

/// Arena sizing rule: an eighth of a slot-block's worth of overflow nodes per
/// block, with a small floor so tiny tables still have chain room.
pub fn arena_nodes_for(blocks: u64) -> u64 {
    (blocks / 8).max(64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubRegion {
    pub offset: u64,
    pub len: u64,
}

/// Byte layout of the five sub-regions, packed in a fixed order. A pure
/// function of the header, so recovery can re-derive it from durable state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionLayout {
    pub meta: SubRegion,
    pub level1: SubRegion,
    pub level2: SubRegion,
    pub heads: SubRegion,
    pub arena: SubRegion,
}

impl RegionLayout {
    pub fn compute(meta: &GlobalMeta) -> RegionLayout {
        let m = meta.block_count();
        let meta_r = SubRegion { offset: 0, len: META_LEN as u64 };
        let lv1 = SubRegion { offset: meta_r.offset + meta_r.len, len: m * L1_BLOCK_BYTES as u64 };
        let lv2 = SubRegion { offset: lv1.offset + lv1.len, len: m * L2_BLOCK_BYTES as u64 };
        let heads = SubRegion { offset: lv2.offset + lv2.len, len: (m * 8).max(LINE as u64) };
        let arena =
            SubRegion { offset: heads.offset + heads.len, len: meta.arena_nodes * NODE_BYTES as u64 };
        RegionLayout { meta: meta_r, level1: lv1, level2: lv2, heads, arena }
    }

    pub fn total_len(&self) -> u64 {
        self.arena.offset + self.arena.len
    }
}

/// Shared instrumentation: a global event sequence (stores, flushes, fills),
/// the crash fuse, and operation counters.
pub struct RegionCtx {
    seq: AtomicU64,
    fuse: AtomicU64,
    stores: AtomicU64,
    flushes: AtomicU64,
    fills: AtomicU64,
    flush_failures: AtomicU64,
}

impl RegionCtx {
    fn new() -> Arc<RegionCtx> {
        Arc::new(RegionCtx {
            seq: AtomicU64::new(0),
            fuse: AtomicU64::new(u64::MAX),
            stores: AtomicU64::new(0),
            flushes: AtomicU64::new(0),
            fills: AtomicU64::new(0),
            flush_failures: AtomicU64::new(0),
        })
    }

    /// Claim the next event number and report whether it lands before the
    /// fuse. Counting never stops; durable effects do.
    fn tick(&self) -> bool {
        self.seq.fetch_add(1, Ordering::Relaxed) < self.fuse.load(Ordering::Relaxed)
    }

    /// Whether the fuse has already tripped (without claiming an event).
    fn fused(&self) -> bool {
        self.seq.load(Ordering::Relaxed) >= self.fuse.load(Ordering::Relaxed)
    }
}

/// Growable array of 16-byte atomic units: one base chunk plus doubling
/// extension chunks, so established units never move. Shrink retires chunks
/// logically; their allocations are reused on the next grow (chunk sizes are
/// a pure function of position).
struct Chunked128 {
    base_units: usize,
    chunks: Vec<OnceLock<Box<[AtomicU128]>>>,
    active: AtomicUsize,
}

impl Chunked128 {
    fn new(base_units: usize, fill: u128) -> Chunked128 {
        let chunks: Vec<OnceLock<Box<[AtomicU128]>>> =
            (0..MAX_CHUNKS).map(|_| OnceLock::new()).collect();
        chunks[0].get_or_init(|| (0..base_units).map(|_| AtomicU128::new(fill)).collect());
        Chunked128 { base_units, chunks, active: AtomicUsize::new(1) }
    }

    fn chunk_units(&self, chunk: usize) -> usize {
        if chunk == 0 {
            self.base_units
        } else {
            self.base_units << (chunk - 1)
        }
    }

    #[inline]
    fn locate(&self, unit: usize) -> (usize, usize) {
        if unit < self.base_units {
            (0, unit)
        } else {
            let q = unit / self.base_units;
            let k = (usize::BITS - 1 - q.leading_zeros()) as usize;
            (k + 1, unit - (self.base_units << k))
        }
    }

    #[inline]
    fn unit(&self, idx: usize) -> &AtomicU128 {
        let (chunk, rel) = self.locate(idx);
        debug_assert!(chunk < self.active.load(Ordering::Relaxed));
        &self.chunks[chunk].get().expect("chunk not allocated")[rel]
    }

    fn grow_to_units(&self, units: usize) {
        let mut active = self.active.load(Ordering::Relaxed);
        while self.base_units << (active - 1) < units {
            let size = self.chunk_units(active);
            self.chunks[active].get_or_init(|| (0..size).map(|_| AtomicU128::new(0)).collect());
            active += 1;
        }
        assert_eq!(self.base_units << (active - 1), units.max(self.base_units));
        self.active.store(active, Ordering::Release);
    }

    fn shrink_to_units(&self, units: usize) {
        let mut active = self.active.load(Ordering::Relaxed);
        while active > 1 && self.base_units << (active - 2) >= units {
            active -= 1;
        }
        assert_eq!(self.base_units << (active - 1), units.max(self.base_units));
        self.active.store(active, Ordering::Release);
    }
}

/// Same chunk geometry for the durable image, in 8-byte words. Only touched
/// under a line's log lock, by crash/recover (exclusive), or during setup.
struct Chunked64 {
    base_words: usize,
    chunks: Vec<OnceLock<Box<[AtomicU64]>>>,
}

impl Chunked64 {
    fn new(base_words: usize, fill: u64) -> Chunked64 {
        let chunks: Vec<OnceLock<Box<[AtomicU64]>>> =
            (0..MAX_CHUNKS).map(|_| OnceLock::new()).collect();
        chunks[0].get_or_init(|| (0..base_words).map(|_| AtomicU64::new(fill)).collect());
        Chunked64 { base_words, chunks }
    }

    #[inline]
    fn locate(&self, word: usize) -> (usize, usize) {
        if word < self.base_words {
            (0, word)
        } else {
            let q = word / self.base_words;
            let k = (usize::BITS - 1 - q.leading_zeros()) as usize;
            (k + 1, word - (self.base_words << k))
        }
    }

    fn ensure_chunks_for(&self, words: usize) {
        let mut chunk = 0;
        let mut covered = self.base_words;
        loop {
            let size = if chunk == 0 { self.base_words } else { self.base_words << (chunk - 1) };
            self.chunks[chunk].get_or_init(|| (0..size).map(|_| AtomicU64::new(0)).collect());
            if covered >= words {
                return;
            }
            chunk += 1;
            covered = self.base_words << chunk;
        }
    }

    #[inline]
    fn word(&self, idx: usize) -> &AtomicU64 {
        let (chunk, rel) = self.locate(idx);
        &self.chunks[chunk].get().expect("durable chunk not allocated")[rel]
    }
}

type LineEntries = Vec<(usize, u64)>;

/// Unfenced-store log, sharded by line so distinct lines flush concurrently.
struct LineLog {
    shards: Vec<Mutex<HashMap<usize, LineEntries>>>,
}

impl LineLog {
    fn new() -> LineLog {
        LineLog { shards: (0..LOG_SHARDS).map(|_| Mutex::new(HashMap::new())).collect() }
    }

    fn append(&self, line: usize, word_off: usize, value: u64) {
        let mut shard = self.shards[line % LOG_SHARDS].lock().unwrap();
        shard.entry(line).or_default().push((word_off, value));
    }

    fn lines_snapshot(&self) -> Vec<(usize, LineEntries)> {
        let mut out = Vec::new();
        for shard in &self.shards {
            let shard = shard.lock().unwrap();
            for (&line, entries) in shard.iter() {
                out.push((line, entries.clone()));
            }
        }
        out.sort_by_key(|&(line, _)| line);
        out
    }
}

/// One named sub-region: a live image of 16-byte atomic units, a durable
/// image, the unfenced-store log, and (file backend) a backing file.
pub struct Region {
    name: &'static str,
    ctx: Arc<RegionCtx>,
    live: Chunked128,
    durable: Chunked64,
    log: LineLog,
    len: AtomicUsize,
    file: Option<File>,
}

impl Region {
    fn new(
        name: &'static str,
        len: usize,
        fill: u8,
        ctx: Arc<RegionCtx>,
        file: Option<File>,
    ) -> Region {
        assert!(len > 0 && len.is_multiple_of(LINE), "{name}: region length {len} not line-aligned");
        let fill128 = u128::from_le_bytes([fill; 16]);
        let fill64 = u64::from_le_bytes([fill; 8]);
        Region {
            name,
            ctx,
            live: Chunked128::new(len / 16, fill128),
            durable: Chunked64::new(len / 8, fill64),
            log: LineLog::new(),
            len: AtomicUsize::new(len),
            file,
        }
    }

    pub fn len(&self) -> usize {
        self.len.load(Ordering::Acquire)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    fn check(&self, off: usize, len: usize, align: usize) {
        assert!(
            off.is_multiple_of(align),
            "{}: offset {off} not {align}-byte aligned",
            self.name
        );
        assert!(
            off + len <= self.len(),
            "{}: access [{off}, {}) out of bounds (len {})",
            self.name,
            off + len,
            self.len()
        );
    }

    /// 16-byte atomic load: (low word, high word).
    #[inline]
    pub fn load_pair(&self, off: usize) -> (u64, u64) {
        self.check(off, 16, 16);
        let v = self.live.unit(off / 16).load(Ordering::Acquire);
        (v as u64, (v >> 64) as u64)
    }

    /// 8-byte load.
    #[inline]
    pub fn load_word(&self, off: usize) -> u64 {
        self.check(off, 8, 8);
        let v = self.live.unit(off / 16).load(Ordering::Acquire);
        if off.is_multiple_of(16) {
            v as u64
        } else {
            (v >> 64) as u64
        }
    }

    /// 16-byte store, atomic for live readers, logged as two 8-byte words a
    /// crash may tear apart. The caller must own the unit (slot claim, block
    /// lock, or an exclusive phase); concurrent stores to one unit race.
    pub fn store_pair(&self, off: usize, lo: u64, hi: u64) {
        self.check(off, 16, 16);
        let armed = self.ctx.tick();
        self.ctx.stores.fetch_add(1, Ordering::Relaxed);
        self.live.unit(off / 16).store((lo as u128) | ((hi as u128) << 64), Ordering::Release);
        if armed {
            let line = off / LINE;
            self.log.append(line, off, lo);
            self.log.append(line, off + 8, hi);
        }
    }

    /// 8-byte store into one half of a unit; the other half is preserved via
    /// compare-exchange, so concurrent stores to the sibling word are safe.
    pub fn store_word(&self, off: usize, value: u64) {
        self.check(off, 8, 8);
        let armed = self.ctx.tick();
        self.ctx.stores.fetch_add(1, Ordering::Relaxed);
        let unit = self.live.unit(off / 16);
        let mut cur = unit.load(Ordering::Relaxed);
        loop {
            let next = if off.is_multiple_of(16) {
                (cur & !0xFFFF_FFFF_FFFF_FFFF) | value as u128
            } else {
                (cur & 0xFFFF_FFFF_FFFF_FFFF) | ((value as u128) << 64)
            };
            match unit.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => break,
                Err(now) => cur = now,
            }
        }
        if armed {
            self.log.append(off / LINE, off, value);
        }
    }

    /// 16-byte compare-exchange. On success the new words are logged like a
    /// pair store. Failure returns the current pair.
    pub fn compare_exchange_pair(
        &self,
        off: usize,
        current: (u64, u64),
        new: (u64, u64),
    ) -> Result<(), (u64, u64)> {
        self.check(off, 16, 16);
        let cur = (current.0 as u128) | ((current.1 as u128) << 64);
        let next = (new.0 as u128) | ((new.1 as u128) << 64);
        match self.live.unit(off / 16).compare_exchange(
            cur,
            next,
            Ordering::AcqRel,
            Ordering::Acquire,
        ) {
            Ok(_) => {
                let armed = self.ctx.tick();
                self.ctx.stores.fetch_add(1, Ordering::Relaxed);
                if armed {
                    let line = off / LINE;
                    self.log.append(line, off, new.0);
                    self.log.append(line, off + 8, new.1);
                }
                Ok(())
            }
            Err(now) => Err((now as u64, (now >> 64) as u64)),
        }
    }

    /// Writeback + fence for the lines covering [off, off+len): copies the
    /// live lines into the durable image and clears their logs. Only after
    /// this returns may the caller acknowledge an operation.
    pub fn flush(&self, off: usize, len: usize) -> Result<(), RegionError> {
        assert!(off + len <= self.len(), "{}: flush out of bounds", self.name);
        let armed = self.ctx.tick();
        self.ctx.flushes.fetch_add(1, Ordering::Relaxed);
        if self
            .ctx
            .flush_failures
            .fetch_update(Ordering::Relaxed, Ordering::Relaxed, |n| n.checked_sub(1))
            .is_ok()
        {
            return Err(RegionError::FlushFailed);
        }
        if !armed {
            return Ok(());
        }
        let first = off / LINE;
        let last = (off + len - 1) / LINE;
        for line in first..=last {
            let mut shard = self.log.shards[line % LOG_SHARDS].lock().unwrap();
            shard.remove(&line);
            self.copy_line_to_durable(line)?;
        }
        Ok(())
    }

    /// One line, live → durable (+ file). Caller holds the line's log lock or
    /// is in an exclusive phase.
    fn copy_line_to_durable(&self, line: usize) -> Result<(), RegionError> {
        let base = line * LINE;
        let mut bytes = [0u8; LINE];
        for u in 0..LINE / 16 {
            let v = self.live.unit(base / 16 + u).load(Ordering::Acquire);
            bytes[u * 16..u * 16 + 16].copy_from_slice(&v.to_le_bytes());
        }
        for w in 0..LINE / 8 {
            let word = u64::from_le_bytes(bytes[w * 8..w * 8 + 8].try_into().unwrap());
            self.durable.word(base / 8 + w).store(word, Ordering::Relaxed);
        }
        if let Some(file) = &self.file {
            use std::os::unix::fs::FileExt;
            file.write_at(&bytes, base as u64)?;
        }
        Ok(())
    }

    /// Bulk initialize + persist [off, off+len) with a fill byte: one event,
    /// used when a resize claims fresh space. Exclusive-phase only.
    pub fn fill_and_flush(&self, off: usize, len: usize, fill: u8) -> Result<(), RegionError> {
        self.check(off, len, 16);
        assert!(len.is_multiple_of(LINE) && off.is_multiple_of(LINE), "{}: fill not line-aligned", self.name);
        let armed = self.ctx.tick();
        self.ctx.fills.fetch_add(1, Ordering::Relaxed);
        let unit_fill = u128::from_le_bytes([fill; 16]);
        for u in off / 16..(off + len) / 16 {
            self.live.unit(u).store(unit_fill, Ordering::Release);
        }
        if !armed {
            return Ok(());
        }
        for line in off / LINE..(off + len) / LINE {
            let mut shard = self.log.shards[line % LOG_SHARDS].lock().unwrap();
            shard.remove(&line);
            self.copy_line_to_durable(line)?;
        }
        Ok(())
    }

    /// Extend the live and durable images in place. New space is
    /// uninitialized until `fill_and_flush`. Exclusive-phase only.
    pub fn grow_to(&self, new_len: usize) {
        let old = self.len();
        assert!(new_len.is_multiple_of(LINE), "{}: bad grow target", self.name);
        assert!(
            new_len >= old || self.ctx.fused(),
            "{}: grow would shorten the region",
            self.name
        );
        if new_len <= old {
            // Only reachable past the fuse, when an earlier shrink skipped
            // its truncation; the longer image already covers the target.
            return;
        }
        self.live.grow_to_units(new_len / 16);
        self.durable.ensure_chunks_for(new_len / 8);
        self.len.store(new_len, Ordering::Release);
    }

    /// Drop the tail of the region. Exclusive-phase only.
    pub fn shrink_to(&self, new_len: usize) -> Result<(), RegionError> {
        let old = self.len();
        assert!(new_len <= old && new_len.is_multiple_of(LINE), "{}: bad shrink target", self.name);
        if new_len == old {
            return Ok(());
        }
        if self.ctx.fused() {
            // Truncation is irreversible, and program order puts it after the
            // header flush that shrank the layout. Once the fuse marks the
            // crash point, that flush never became durable, so the truncation
            // must not happen either — otherwise the crash image would be
            // shorter than its own header implies.
            return Ok(());
        }
        for (line, _) in self.log.lines_snapshot() {
            if line * LINE >= new_len {
                self.log.shards[line % LOG_SHARDS].lock().unwrap().remove(&line);
            }
        }
        self.live.shrink_to_units(new_len / 16);
        self.len.store(new_len, Ordering::Release);
        if let Some(file) = &self.file {
            file.set_len(new_len as u64)?;
        }
        Ok(())
    }

    /// Durable-image word, for tests and crash materialization.
    pub fn durable_word(&self, off: usize) -> u64 {
        assert!(off.is_multiple_of(8) && off + 8 <= self.len());
        self.durable.word(off / 8).load(Ordering::Relaxed)
    }

    /// Whether [off, off+8) has an unfenced store outstanding.
    pub fn is_word_dirty(&self, off: usize) -> bool {
        let line = off / LINE;
        let shard = self.log.shards[line % LOG_SHARDS].lock().unwrap();
        shard.get(&line).is_some_and(|entries| entries.iter().any(|&(o, _)| o == off))
    }

    /// Rebuild this region's live image as it would look after a crash:
    /// durable content plus, in word-subset mode, a random subset of logged
    /// words applied in store order. Returns the post-crash byte image.
    fn materialize_crash(&self, tearing: Tearing, rng: &mut ChaCha8Rng) -> Vec<u8> {
        let len = self.len();
        let mut bytes = vec![0u8; len];
        for w in 0..len / 8 {
            let v = self.durable.word(w).load(Ordering::Relaxed);
            bytes[w * 8..w * 8 + 8].copy_from_slice(&v.to_le_bytes());
        }
        if tearing == Tearing::WordSubset {
            for (_, entries) in self.log.lines_snapshot() {
                for (word_off, value) in entries {
                    if word_off + 8 <= len && rng.gen::<bool>() {
                        bytes[word_off..word_off + 8].copy_from_slice(&value.to_le_bytes());
                    }
                }
            }
        }
        bytes
    }
}

/// The five sub-regions plus shared instrumentation. `Shadow` keeps the
/// durable image in memory and supports crash injection; `File` additionally
/// writes flushed lines to one file per region under a directory.
pub struct DurableStore {
    pub meta: Region,
    pub level1: Region,
    pub level2: Region,
    pub heads: Region,
    pub arena: Region,
    ctx: Arc<RegionCtx>,
    file_backed: bool,
}

pub const REGION_FILES: [&str; 5] =
    ["meta.bin", "level1.bin", "level2.bin", "heads.bin", "arena.bin"];

impl DurableStore {
    /// Fresh in-memory store: header persisted, all data INVALID-filled and
    /// flushed, so event 0 is already a consistent crash point.
    pub fn new_shadow(initial_blocks: u64, hash_seed: u64) -> DurableStore {
        Self::build(initial_blocks, hash_seed, None).expect("shadow create cannot fail")
    }

    /// Fresh file-backed store under `dir` (created if needed).
    pub fn create_file(dir: &Path, initial_blocks: u64, hash_seed: u64) -> Result<DurableStore, RegionError> {
        std::fs::create_dir_all(dir)?;
        Self::build(initial_blocks, hash_seed, Some(dir))
    }

    fn build(
        initial_blocks: u64,
        hash_seed: u64,
        dir: Option<&Path>,
    ) -> Result<DurableStore, RegionError> {
        // Power-of-two block counts make every resize an exact doubling of
        // each sub-region, which the chunked growth scheme relies on.
        assert!(
            initial_blocks.is_power_of_two() && initial_blocks >= 2,
            "initial block count must be a power of two, at least 2"
        );
        let meta = GlobalMeta {
            initial_blocks,
            generation: 0,
            arena_nodes: arena_nodes_for(initial_blocks),
            hash_seed,
        };
        let layout = RegionLayout::compute(&meta);
        let ctx = RegionCtx::new();
        let open = |name: &str| -> Result<Option<File>, RegionError> {
            match dir {
                None => Ok(None),
                Some(d) => Ok(Some(
                    OpenOptions::new().read(true).write(true).create(true).truncate(true).open(d.join(name))?,
                )),
            }
        };
        let store = DurableStore {
            meta: Region::new("meta", META_LEN, 0, Arc::clone(&ctx), open(REGION_FILES[0])?),
            level1: Region::new(
                "level1",
                layout.level1.len as usize,
                0xFF,
                Arc::clone(&ctx),
                open(REGION_FILES[1])?,
            ),
            level2: Region::new(
                "level2",
                layout.level2.len as usize,
                0xFF,
                Arc::clone(&ctx),
                open(REGION_FILES[2])?,
            ),
            heads: Region::new(
                "heads",
                layout.heads.len as usize,
                0xFF,
                Arc::clone(&ctx),
                open(REGION_FILES[3])?,
            ),
            arena: Region::new(
                "arena",
                layout.arena.len as usize,
                0xFF,
                Arc::clone(&ctx),
                open(REGION_FILES[4])?,
            ),
            ctx,
            file_backed: dir.is_some(),
        };
        store.meta.store_pair(MAGIC_OFF, MAGIC, initial_blocks);
        store.meta.store_pair(GEN_OFF, 0, meta.arena_nodes);
        store.meta.store_pair(SEED_OFF, hash_seed, 0);
        store.meta.store_pair(48, 0, 0);
        store.meta.store_pair(SIDE_OFF, 0, INVALID);
        store.meta.store_pair(80, 0, 0);
        store.meta.store_pair(96, 0, 0);
        store.meta.store_pair(112, 0, 0);
        store.meta.flush(0, META_LEN)?;
        for r in [&store.level1, &store.level2, &store.heads, &store.arena] {
            r.fill_and_flush(0, r.len(), 0xFF)?;
        }
        store.sync_files()?;
        Ok(store)
    }

    /// Open an existing file-backed store, validating the header and every
    /// region length against the layout it implies.
    pub fn open_file(dir: &Path) -> Result<DurableStore, RegionError> {
        use std::os::unix::fs::FileExt;
        let meta_file =
            OpenOptions::new().read(true).write(true).open(dir.join(REGION_FILES[0]))?;
        let mut header = [0u8; META_LEN];
        meta_file.read_exact_at(&mut header, 0)?;
        let word = |i: usize| u64::from_le_bytes(header[i..i + 8].try_into().unwrap());
        if word(MAGIC_OFF) != MAGIC {
            return Err(RegionError::BadMagic { found: word(MAGIC_OFF) });
        }
        let meta = GlobalMeta {
            initial_blocks: word(BLOCKS_OFF),
            generation: word(GEN_OFF),
            arena_nodes: word(ARENA_OFF),
            hash_seed: word(SEED_OFF),
        };
        let layout = RegionLayout::compute(&meta);
        let ctx = RegionCtx::new();
        let load_region = |name: &'static str,
                           file_name: &str,
                           len: u64,
                           ctx: Arc<RegionCtx>|
         -> Result<Region, RegionError> {
            let file = OpenOptions::new().read(true).write(true).open(dir.join(file_name))?;
            let got = file.metadata()?.len();
            if got != len {
                return Err(RegionError::WrongLength { region: name, expected: len, got });
            }
            let region = Region::new(name, len as usize, 0, ctx, None);
            let mut buf = vec![0u8; len as usize];
            file.read_exact_at(&mut buf, 0)?;
            for u in 0..buf.len() / 16 {
                let v = u128::from_le_bytes(buf[u * 16..u * 16 + 16].try_into().unwrap());
                region.live.unit(u).store(v, Ordering::Relaxed);
            }
            for w in 0..buf.len() / 8 {
                let v = u64::from_le_bytes(buf[w * 8..w * 8 + 8].try_into().unwrap());
                region.durable.word(w).store(v, Ordering::Relaxed);
            }
            Ok(Region { file: Some(file), ..region })
        };
        let store = DurableStore {
            meta: load_region("meta", REGION_FILES[0], META_LEN as u64, Arc::clone(&ctx))?,
            level1: load_region("level1", REGION_FILES[1], layout.level1.len, Arc::clone(&ctx))?,
            level2: load_region("level2", REGION_FILES[2], layout.level2.len, Arc::clone(&ctx))?,
            heads: load_region("heads", REGION_FILES[3], layout.heads.len, Arc::clone(&ctx))?,
            arena: load_region("arena", REGION_FILES[4], layout.arena.len, Arc::clone(&ctx))?,
            ctx,
            file_backed: true,
        };
        Ok(store)
    }

    /// Header as currently live.
    pub fn global_meta(&self) -> Result<GlobalMeta, RegionError> {
        let magic = self.meta.load_word(MAGIC_OFF);
        if magic != MAGIC {
            return Err(RegionError::BadMagic { found: magic });
        }
        Ok(GlobalMeta {
            initial_blocks: self.meta.load_word(BLOCKS_OFF),
            generation: self.meta.load_word(GEN_OFF),
            arena_nodes: self.meta.load_word(ARENA_OFF),
            hash_seed: self.meta.load_word(SEED_OFF),
        })
    }

    /// Simulate power loss: a new shadow store whose live image is the
    /// durable one plus torn words per the tearing mode. Non-destructive, so
    /// one run can be crashed at many points. Shadow backend only.
    pub fn crash(&self, tearing: Tearing, seed: u64) -> Result<DurableStore, RegionError> {
        if self.file_backed {
            return Err(RegionError::CrashUnsupported);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meta_bytes = self.meta.materialize_crash(tearing, &mut rng);
        let word = |i: usize| u64::from_le_bytes(meta_bytes[i..i + 8].try_into().unwrap());
        if word(MAGIC_OFF) != MAGIC {
            return Err(RegionError::BadMagic { found: word(MAGIC_OFF) });
        }
        let meta = GlobalMeta {
            initial_blocks: word(BLOCKS_OFF),
            generation: word(GEN_OFF),
            arena_nodes: word(ARENA_OFF),
            hash_seed: word(SEED_OFF),
        };
        let layout = RegionLayout::compute(&meta);
        let ctx = RegionCtx::new();
        let rebuild = |name: &'static str,
                       src: &Region,
                       len: u64,
                       bytes: Vec<u8>,
                       ctx: Arc<RegionCtx>|
         -> Region {
            // The durable image can extend past the post-crash layout (a grow
            // that died before publishing its header) — truncate. It can
            // never be shorter: space is persisted before the header is.
            assert!(
                bytes.len() >= len as usize,
                "{name}: durable image shorter than its header implies"
            );
            let _ = src;
            let region = Region::new(name, len as usize, 0, ctx, None);
            for u in 0..len as usize / 16 {
                let v = u128::from_le_bytes(bytes[u * 16..u * 16 + 16].try_into().unwrap());
                region.live.unit(u).store(v, Ordering::Relaxed);
                region.durable.word(u * 2).store(v as u64, Ordering::Relaxed);
                region.durable.word(u * 2 + 1).store((v >> 64) as u64, Ordering::Relaxed);
            }
            region
        };
        Ok(DurableStore {
            meta: rebuild("meta", &self.meta, META_LEN as u64, meta_bytes, Arc::clone(&ctx)),
            level1: rebuild(
                "level1",
                &self.level1,
                layout.level1.len,
                self.level1.materialize_crash(tearing, &mut rng),
                Arc::clone(&ctx),
            ),
            level2: rebuild(
                "level2",
                &self.level2,
                layout.level2.len,
                self.level2.materialize_crash(tearing, &mut rng),
                Arc::clone(&ctx),
            ),
            heads: rebuild(
                "heads",
                &self.heads,
                layout.heads.len,
                self.heads.materialize_crash(tearing, &mut rng),
                Arc::clone(&ctx),
            ),
            arena: rebuild(
                "arena",
                &self.arena,
                layout.arena.len,
                self.arena.materialize_crash(tearing, &mut rng),
                Arc::clone(&ctx),
            ),
            ctx,
            file_backed: false,
        })
    }

    /// fsync all backing files; no-op on the shadow backend.
    pub fn sync_files(&self) -> Result<(), RegionError> {
        for r in [&self.meta, &self.level1, &self.level2, &self.heads, &self.arena] {
            if let Some(f) = &r.file {
                f.sync_all()?;
            }
        }
        Ok(())
    }

    pub fn is_file_backed(&self) -> bool {
        self.file_backed
    }

    pub fn event_now(&self) -> u64 {
        self.ctx.seq.load(Ordering::Relaxed)
    }

    /// Freeze durable state at event `n`: stores and flushes numbered ≥ n
    /// update only the live image. Counting continues, so replays align.
    pub fn set_fuse(&self, n: u64) {
        self.ctx.fuse.store(n, Ordering::Relaxed);
    }

    pub fn clear_fuse(&self) {
        self.ctx.fuse.store(u64::MAX, Ordering::Relaxed);
    }

    pub fn flush_count(&self) -> u64 {
        self.ctx.flushes.load(Ordering::Relaxed)
    }

    pub fn store_count(&self) -> u64 {
        self.ctx.stores.load(Ordering::Relaxed)
    }

    /// Make the next `n` flush calls fail, to exercise error propagation.
    pub fn inject_flush_failures(&self, n: u64) {
        self.ctx.flush_failures.store(n, Ordering::Relaxed);
    }
}
