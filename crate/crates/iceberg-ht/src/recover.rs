//! Rebuilding a table from a durable image.
//!
//! Recovery trusts nothing but the header and the slot contents. A pair
//! survives only if both halves are valid — a torn write leaves one half at
//! the sentinel, which reads as a free slot. The first occurrence of a key
//! wins, wherever the scan meets it: a correctly-placed first copy keeps its
//! slot, a stranded first copy (wrong block after an interrupted migration)
//! is re-placed through the normal cascade, and every later copy of the same
//! key is erased — an interrupted move can leave a key in both its old and
//! new homes, always with equal values. Chain structure is rebuilt from
//! scratch, so a torn link word can strand garbage but never resurrect a
//! deleted key as reachable.
//!
//! Recovering an already-recovered image is a no-op: every pair is then
//! correctly placed and unique, and the chain rebuild reproduces node
//! indices and link order exactly.

use std::path::Path;

use crate::metadata::{L1_SLOTS, L2_SLOTS};
use crate::region::{DurableStore, RegionLayout, SIDE_OFF};
use crate::table::{Table, TableConfig, TableError};
use crate::INVALID;

impl Table {
    /// Reconstruct a table over `store`'s durable image, repairing any
    /// damage a crash left behind. Runtime knobs (threshold) come from
    /// `config`; identity (seed, sizes) comes from the stored header.
    pub fn recover(store: DurableStore, config: &TableConfig) -> Result<Table, TableError> {
        let meta = store.global_meta()?;
        let m = meta.block_count();
        let layout = RegionLayout::compute(&meta);
        let table = Self::fresh_volatile(store, config.resize_threshold);

        // The image may be longer than the layout (a crash between a region
        // grow and the header flip, or before a post-shrink truncate); the
        // header governs, so scan and flush by layout lengths only.
        let mut seen = std::collections::HashSet::new();
        let mut count = 0u64;
        let mut replay: Vec<(u64, u64)> = Vec::new();

        // Level 1: keep the first correctly-placed occurrence of each key.
        for block in 0..m {
            for slot in 0..L1_SLOTS as u32 {
                let off = Self::l1_slot_off(block, slot);
                let (k, v) = table.store.level1.load_pair(off);
                if k == INVALID || v == INVALID {
                    if (k, v) != (INVALID, INVALID) {
                        table.store.level1.store_pair(off, INVALID, INVALID);
                    }
                    continue;
                }
                let t = table.hashes(k);
                if t.block0(m) == block && seen.insert(k) {
                    table.set_l1_meta(block, slot, t.f0);
                    count += 1;
                } else {
                    // A misplaced pair claims its key too: an interrupted
                    // move can leave the same key both here and (scanned
                    // later) at its post-resize home, with equal values —
                    // whichever the scan meets first is the one copy kept.
                    if t.block0(m) != block && seen.insert(k) {
                        replay.push((k, v));
                    }
                    table.store.level1.store_pair(off, INVALID, INVALID);
                }
            }
        }

        // Level 2, same policy; the tag is re-derived from the key's current
        // role at the block it sits in.
        for block in 0..m {
            for slot in 0..L2_SLOTS as u32 {
                let off = Self::l2_slot_off(block, slot);
                let (k, v) = table.store.level2.load_pair(off);
                if k == INVALID || v == INVALID {
                    if (k, v) != (INVALID, INVALID) {
                        table.store.level2.store_pair(off, INVALID, INVALID);
                    }
                    continue;
                }
                let t = table.hashes(k);
                let tag = if t.block1(m) == block {
                    Some(t.f1)
                } else if t.block2(m) == block {
                    Some(t.f2)
                } else {
                    None
                };
                match tag {
                    Some(fp) if seen.insert(k) => {
                        table.set_l2_meta(block, slot, fp);
                        count += 1;
                    }
                    _ => {
                        if tag.is_none() && seen.insert(k) {
                            replay.push((k, v));
                        }
                        table.store.level2.store_pair(off, INVALID, INVALID);
                    }
                }
            }
        }

        // Overflow chains: walk defensively (bounds and a visited set cut
        // torn links and cycles), harvest the pairs, then rebuild the chains
        // from nothing. Reversal before re-placement preserves chain order,
        // which is what makes recovery idempotent.
        let cap = meta.arena_nodes;
        let mut visited = std::collections::HashSet::new();
        for bucket in 0..m {
            let mut chain: Vec<(u64, u64)> = Vec::new();
            let mut node = table.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID && node < cap && visited.insert(node) {
                let (k, v) = table.store.arena.load_pair(Self::node_pair_off(node));
                if k != INVALID && v != INVALID && !seen.contains(&k) {
                    seen.insert(k);
                    chain.push((k, v));
                }
                node = table.store.arena.load_word(Self::node_next_off(node));
            }
            replay.extend(chain.into_iter().rev());
        }
        table.store.heads.fill_and_flush(0, layout.heads.len as usize, 0xFF)?;
        {
            let mut alloc = table.arena_alloc.lock().unwrap();
            alloc.bump = 0;
            alloc.free.clear();
        }

        for (k, v) in replay {
            table.place_down(k, v, m)?;
            count += 1;
        }

        // Side slot: half-written states normalize to absent.
        let (present, value) = table.store.meta.load_pair(SIDE_OFF);
        if present == 1 && value != INVALID {
            count += 1;
        } else if (present, value) != (0, INVALID) {
            table.store.meta.store_pair(SIDE_OFF, 0, INVALID);
        }

        table.store.meta.flush(0, layout.meta.len as usize)?;
        table.store.level1.flush(0, layout.level1.len as usize)?;
        table.store.level2.flush(0, layout.level2.len as usize)?;
        table.store.arena.flush(0, layout.arena.len as usize)?;
        table.store.sync_files()?;
        table.count.add(count as i64);
        Ok(table)
    }

    /// Open a file-backed table, recovering whatever state the files hold.
    pub fn open_file(dir: &Path, config: &TableConfig) -> Result<Table, TableError> {
        Self::recover(DurableStore::open_file(dir)?, config)
    }
}
