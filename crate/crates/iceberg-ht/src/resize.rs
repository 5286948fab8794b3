//! Growing, shrinking, and the lazy migration that follows a doubling.
//!
//! `grow` runs under the exclusive lock but moves no keys: it extends the
//! regions, persists the new header, and marks every old block unmoved.
//! Key movement is deferred to `ensure_moved`, which mutating operations
//! call for each block they are about to touch; the first caller claims the
//! block's flag and relocates its keys, everyone else waits for the flag.
//! Lookups never wait — they probe old and new candidate locations until the
//! per-level unmoved counters drain to zero.
//!
//! Movement is crash-ordered the same way inserts are: a key's new location
//! is flushed before its old slot is erased, so a crash can duplicate a key
//! but never lose one; recovery collapses duplicates.
//!
//! `shrink` is fully offline: it first simulates the entire move of the
//! upper half into the lower half and refuses (leaving the table untouched)
//! unless everything fits, so a positive answer is a guarantee, not a bet.

use std::sync::atomic::Ordering;

use crate::metadata::{empty_mask_l1, empty_mask_l2, select_nth, EMPTY, L1_SLOTS, L2_SLOTS};
use crate::region::{arena_nodes_for, GlobalMeta, Region, RegionLayout, ARENA_OFF, GEN_OFF, L2_BLOCK_BYTES, NODE_BYTES};
use crate::table::{Table, TableError, IN_FLIGHT, MOVED, UNMOVED};
use crate::INVALID;

impl Table {
    /// Double the table. Caller holds the write lock. Any unfinished
    /// migration from the previous doubling is drained first, so at most one
    /// generation is ever in flight.
    pub(crate) fn grow_locked(&self) -> Result<(), TableError> {
        self.finish_migration_locked()?;
        let m_old = self.block_count();
        let m_new = m_old * 2;
        let gen_new = self.generation() + 1;
        // Monotone max: a recovered header may carry a larger arena than the
        // formula asks for, and the arena never shrinks on grow.
        let nodes_new = arena_nodes_for(m_new).max(self.arena_nodes.load(Ordering::Acquire));
        let target = GlobalMeta {
            initial_blocks: self.initial_blocks,
            generation: gen_new,
            arena_nodes: nodes_new,
            hash_seed: self.seed,
        };
        debug_assert_eq!(target.block_count(), m_new);
        let layout = RegionLayout::compute(&target);

        // Durable space first, every extended range INVALID-filled and
        // flushed, so the header flip below can never expose stale bytes to
        // recovery.
        let grow_fill = |r: &Region, new_len: u64| -> Result<(), TableError> {
            let old_len = r.len();
            if new_len as usize > old_len {
                r.grow_to(new_len as usize);
                r.fill_and_flush(old_len, new_len as usize - old_len, 0xFF)?;
            }
            Ok(())
        };
        grow_fill(&self.store.level1, layout.level1.len)?;
        grow_fill(&self.store.level2, layout.level2.len)?;
        grow_fill(&self.store.heads, layout.heads.len)?;
        grow_fill(&self.store.arena, layout.arena.len)?;

        // Header: arena size, then the generation flip that makes the new
        // layout authoritative. A crash between the two flushes recovers at
        // the old block count with a roomier arena, which is consistent.
        self.store.meta.store_word(ARENA_OFF, nodes_new);
        self.store.meta.flush(ARENA_OFF, 8)?;
        self.store.meta.store_word(GEN_OFF, gen_new);
        self.store.meta.flush(GEN_OFF, 8)?;

        // Volatile mirrors: fresh metadata for the new halves (explicitly
        // zeroed — chunks may be recycled from an earlier shrink), migration
        // flags armed for every old block.
        self.lv1_meta.grow_to((m_new * L1_SLOTS as u64) as usize);
        self.lv1_meta.fill((m_old * L1_SLOTS as u64) as usize, (m_old * L1_SLOTS as u64) as usize, 0);
        self.lv2_meta.grow_to((m_new * L2_SLOTS as u64) as usize);
        self.lv2_meta.fill((m_old * L2_SLOTS as u64) as usize, (m_old * L2_SLOTS as u64) as usize, 0);
        self.lv3_locks.grow_to(m_new as usize);
        self.lv3_locks.fill(m_old as usize, m_old as usize, 0);
        for lvl in 0..3 {
            let flags = &self.moved_flags[lvl];
            if flags.len() < m_old as usize {
                flags.grow_to(m_old as usize);
            }
            flags.fill(0, m_old as usize, UNMOVED);
            self.unmoved[lvl].store(m_old, Ordering::Release);
        }
        self.arena_nodes.store(nodes_new, Ordering::Release);
        self.generation.store(gen_new, Ordering::Release);
        self.m.store(m_new, Ordering::Release);
        Ok(())
    }

    /// Move every block that is still pending. Takes the write lock.
    pub fn finish_migration(&self) -> Result<(), TableError> {
        let _w = self.resize_lock.write();
        self.finish_migration_locked()
    }

    pub(crate) fn finish_migration_locked(&self) -> Result<(), TableError> {
        if !self.migrating() {
            return Ok(());
        }
        let m_old = self.block_count() / 2;
        // Back to front so level-2 spills land in already-final chains; any
        // order would be correct, this one avoids re-entrant flag waits.
        for lvl in [2, 1, 0] {
            if self.unmoved[lvl].load(Ordering::Acquire) == 0 {
                continue;
            }
            for b in 0..m_old {
                self.ensure_moved(lvl, b)?;
            }
        }
        debug_assert!(!self.migrating());
        Ok(())
    }

    /// Guarantee that `block`'s old-generation content has been relocated.
    /// `block` may be an index under the current block count; it is reduced
    /// to the old block it shadows. Callers must not hold the level-1 lock
    /// of the block being ensured at level 0 (they call this first), and the
    /// per-level flag order (2 after 1, locks after flags) keeps the waits
    /// acyclic.
    pub(crate) fn ensure_moved(&self, level: usize, block: u64) -> Result<(), TableError> {
        if self.unmoved[level].load(Ordering::Acquire) == 0 {
            return Ok(());
        }
        let m_old = self.block_count() / 2;
        let old = block % m_old;
        let flag = self.moved_flags[level].at(old as usize);
        loop {
            if flag.load(Ordering::Acquire) == MOVED {
                return Ok(());
            }
            match flag.compare_exchange(UNMOVED, IN_FLIGHT, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => {
                    let moved = match level {
                        0 => self.move_l1_block(old, m_old),
                        1 => self.move_l2_block(old, m_old),
                        _ => self.move_l3_bucket(old, m_old),
                    };
                    return match moved {
                        Ok(()) => {
                            flag.store(MOVED, Ordering::Release);
                            self.unmoved[level].fetch_sub(1, Ordering::AcqRel);
                            Ok(())
                        }
                        Err(e) => {
                            // Partial moves are safe (copy-before-erase);
                            // rearm so a later caller finishes the job.
                            flag.store(UNMOVED, Ordering::Release);
                            Err(e)
                        }
                    };
                }
                Err(MOVED) => return Ok(()),
                Err(_) => std::thread::yield_now(),
            }
        }
    }

    /// Relocate the keys of old level-1 block `old` that rehash into the new
    /// upper half. The destination block is fresh this generation and only
    /// this mover touches it (mutators of either child block wait on the
    /// flag first), so movers pack it from slot 0 and plain metadata writes
    /// are safe. Two flushes per block: one for the packed copies, one for
    /// the erased sources.
    fn move_l1_block(&self, old: u64, m_old: u64) -> Result<(), TableError> {
        let m_new = m_old * 2;
        let hi = old + m_old;
        let mut movers: Vec<(u32, u64, u64, u8)> = Vec::new();
        for slot in 0..L1_SLOTS as u32 {
            let (k, v) = self.store.level1.load_pair(Self::l1_slot_off(old, slot));
            if k == INVALID || v == INVALID {
                continue;
            }
            let t = self.hashes(k);
            if t.block0(m_new) == hi {
                movers.push((slot, k, v, t.f0));
            } else {
                debug_assert_eq!(t.block0(m_new), old);
            }
        }
        if movers.is_empty() {
            return Ok(());
        }
        for (i, &(_, k, v, fp)) in movers.iter().enumerate() {
            self.store.level1.store_pair(Self::l1_slot_off(hi, i as u32), k, v);
            self.set_l1_meta(hi, i as u32, fp);
        }
        self.store.level1.flush(Self::l1_slot_off(hi, 0), movers.len() * 16)?;
        // Copies are durable; now the sources may go. A crash in between
        // leaves duplicates for recovery to collapse, never a lost key.
        for &(slot, _, _, _) in &movers {
            self.store.level1.store_pair(Self::l1_slot_off(old, slot), INVALID, INVALID);
            self.set_l1_meta(old, slot, EMPTY);
        }
        self.store.level1.flush(Self::l1_slot_off(old, 0), L1_SLOTS * 16)?;
        Ok(())
    }

    /// Re-home the keys of old level-2 block `old`. Keys whose new candidate
    /// set still contains the block merely get their tag rewritten (their
    /// primary/secondary role can flip when the other hash stream moves);
    /// the rest are placed by the normal two-choice rule in the grown table,
    /// spilling to level 3 when both candidates are full.
    fn move_l2_block(&self, old: u64, m_old: u64) -> Result<(), TableError> {
        let m_new = m_old * 2;
        for slot in 0..L2_SLOTS as u32 {
            let src = Self::l2_slot_off(old, slot);
            let (k, v) = self.store.level2.load_pair(src);
            if k == INVALID || v == INVALID {
                continue;
            }
            let t = self.hashes(k);
            if t.block1(m_new) == old {
                self.set_l2_meta(old, slot, t.f1);
                continue;
            }
            if t.block2(m_new) == old {
                self.set_l2_meta(old, slot, t.f2);
                continue;
            }
            self.place_moved_l2(
                k,
                v,
                (t.block1(m_new), t.f1),
                (t.block2(m_new), t.f2),
                t.block0(m_new),
            )?;
            self.store.level2.store_pair(src, INVALID, INVALID);
            self.set_l2_meta(old, slot, EMPTY);
        }
        self.store.level2.flush(old as usize * L2_BLOCK_BYTES, L2_BLOCK_BYTES)?;
        Ok(())
    }

    /// Two-choice placement for a migrating level-2 key. The candidates are
    /// live blocks taking concurrent inserts, so slots are claimed by
    /// compare-exchange and the choice re-evaluated on a lost race. Each
    /// candidate is the block index paired with the key's fingerprint there.
    fn place_moved_l2(
        &self,
        k: u64,
        v: u64,
        (c1, f1): (u64, u8),
        (c2, f2): (u64, u8),
        bucket: u64,
    ) -> Result<(), TableError> {
        loop {
            let s1 = self.l2_snapshot(c1);
            let s2 = self.l2_snapshot(c2);
            let (e1, e2) = (empty_mask_l2(&s1), empty_mask_l2(&s2));
            if e1 == 0 && e2 == 0 {
                break;
            }
            let (block, mask, fp) = if e2.count_ones() > e1.count_ones() {
                (c2, e2, f2)
            } else {
                (c1, e1, f1)
            };
            let slot = select_nth(mask, 0);
            if self.claim_l2_slot(block, slot, fp) {
                let off = Self::l2_slot_off(block, slot);
                self.store.level2.store_pair(off, k, v);
                self.store.level2.flush(off, 16)?;
                return Ok(());
            }
            std::hint::spin_loop();
        }
        self.insert_l3(bucket, k, v)
    }

    /// Split old bucket `old`'s chain between itself and its new sibling,
    /// front to back, one durable word per relink. Nodes keep their arena
    /// slots; only link words move. Every write leaves the whole suffix
    /// reachable from at least one head, and each write is flushed before
    /// the next is issued, so every crash point is a clean prefix.
    fn move_l3_bucket(&self, old: u64, m_old: u64) -> Result<(), TableError> {
        let m_new = m_old * 2;
        let hi = old + m_old;
        let _low = self.lock_bucket(old);
        let _high = self.lock_bucket(hi);

        // A chain tail is either a head cell or a node's next word.
        #[derive(Clone, Copy)]
        enum Tail {
            Head(usize),
            Next(usize),
        }
        let link = |tail: Tail, target: u64| -> Result<(), TableError> {
            match tail {
                Tail::Head(off) => {
                    if self.store.heads.load_word(off) != target {
                        self.store.heads.store_word(off, target);
                        self.store.heads.flush(off, 8)?;
                    }
                }
                Tail::Next(off) => {
                    if self.store.arena.load_word(off) != target {
                        self.store.arena.store_word(off, target);
                        self.store.arena.flush(off, 8)?;
                    }
                }
            }
            Ok(())
        };

        let mut tails = [Tail::Head(Self::head_off(old)), Tail::Head(Self::head_off(hi))];
        let cap = self.arena_nodes.load(Ordering::Acquire);
        let mut cursor = self.store.heads.load_word(Self::head_off(old));
        while cursor != INVALID {
            assert!(cursor < cap, "bucket {old} chain links out of range");
            let next = self.store.arena.load_word(Self::node_next_off(cursor));
            let (k, v) = self.store.arena.load_pair(Self::node_pair_off(cursor));
            debug_assert!(k != INVALID && v != INVALID, "dead node on a live chain");
            let side = (self.hashes(k).block0(m_new) == hi) as usize;
            link(tails[side], cursor)?;
            tails[side] = Tail::Next(Self::node_next_off(cursor));
            cursor = next;
        }
        link(tails[0], INVALID)?;
        link(tails[1], INVALID)?;
        Ok(())
    }

    /// Halve the table, folding the upper half of every level into the
    /// lower. Runs fully offline under the write lock. The entire move is
    /// simulated first and the call refuses — leaving the table unchanged —
    /// if the lower half cannot absorb every key.
    pub fn shrink(&self) -> Result<(), TableError> {
        let _w = self.resize_lock.write();
        self.finish_migration_locked()?;
        let m_old = self.block_count();
        let m_new = m_old / 2;
        if m_new < self.initial_blocks {
            return Err(TableError::AtMinimumSize);
        }
        let nodes_old = self.arena_nodes.load(Ordering::Acquire);
        let nodes_new = arena_nodes_for(m_new);

        // Collect the upper half's keys in the exact order the move will
        // process them, then simulate.
        let mut u1: Vec<(u64, u32, u64, u64)> = Vec::new(); // block, slot, k, v
        for block in m_new..m_old {
            for slot in 0..L1_SLOTS as u32 {
                let (k, v) = self.store.level1.load_pair(Self::l1_slot_off(block, slot));
                if k != INVALID && v != INVALID {
                    u1.push((block, slot, k, v));
                }
            }
        }
        let mut u2: Vec<(u64, u32, u64, u64)> = Vec::new();
        for block in m_new..m_old {
            for slot in 0..L2_SLOTS as u32 {
                let (k, v) = self.store.level2.load_pair(Self::l2_slot_off(block, slot));
                if k != INVALID && v != INVALID {
                    u2.push((block, slot, k, v));
                }
            }
        }
        let mut u3: Vec<(u64, u64, u64)> = Vec::new(); // bucket, k, v
        let mut lower_l3 = 0u64;
        for bucket in 0..m_old {
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID {
                if bucket >= m_new {
                    let (k, v) = self.store.arena.load_pair(Self::node_pair_off(node));
                    u3.push((bucket, k, v));
                } else {
                    lower_l3 += 1;
                }
                node = self.store.arena.load_word(Self::node_next_off(node));
            }
        }

        self.simulate_fold(m_new, &u1, &u2, &u3, lower_l3, nodes_old, nodes_new)?;

        // The real pass, mirroring the simulation step for step.
        for &(block, slot, k, v) in &u1 {
            self.place_down(k, v, m_new)?;
            self.store.level1.store_pair(Self::l1_slot_off(block, slot), INVALID, INVALID);
            self.set_l1_meta(block, slot, EMPTY);
        }
        if !u1.is_empty() {
            let off = Self::l1_slot_off(m_new, 0);
            self.store.level1.flush(off, (m_old - m_new) as usize * L1_SLOTS * 16)?;
        }
        for &(block, slot, k, v) in &u2 {
            self.place_down(k, v, m_new)?;
            self.store.level2.store_pair(Self::l2_slot_off(block, slot), INVALID, INVALID);
            self.set_l2_meta(block, slot, EMPTY);
        }
        if !u2.is_empty() {
            let off = Self::l2_slot_off(m_new, 0);
            self.store.level2.flush(off, (m_old - m_new) as usize * L2_BLOCK_BYTES)?;
        }
        // Upper chains: pop each head in turn. The key is re-placed (its
        // copy flushed) before the pop, so every crash point keeps it.
        for &(bucket, k, v) in &u3 {
            let node = self.store.heads.load_word(Self::head_off(bucket));
            debug_assert!(node != INVALID);
            debug_assert_eq!(self.store.arena.load_pair(Self::node_pair_off(node)), (k, v));
            self.place_down(k, v, m_new)?;
            let next = self.store.arena.load_word(Self::node_next_off(node));
            self.store.heads.store_word(Self::head_off(bucket), next);
            self.store.heads.flush(Self::head_off(bucket), 8)?;
            self.arena_alloc.lock().unwrap().free.push(node);
        }

        self.compact_arena(m_new, nodes_new)?;

        // Header flip: arena size first, generation second, exactly as in
        // grow; only then may the durable regions be cut, so a crash never
        // sees an image shorter than its header implies.
        let target = GlobalMeta {
            initial_blocks: self.initial_blocks,
            generation: self.generation() - 1,
            arena_nodes: nodes_new,
            hash_seed: self.seed,
        };
        let layout = RegionLayout::compute(&target);
        self.store.meta.store_word(ARENA_OFF, nodes_new);
        self.store.meta.flush(ARENA_OFF, 8)?;
        self.store.meta.store_word(GEN_OFF, target.generation);
        self.store.meta.flush(GEN_OFF, 8)?;
        self.store.level1.shrink_to(layout.level1.len as usize)?;
        self.store.level2.shrink_to(layout.level2.len as usize)?;
        self.store.heads.shrink_to(layout.heads.len as usize)?;
        self.store.arena.shrink_to(layout.arena.len as usize)?;

        self.lv1_meta.shrink_to((m_new * L1_SLOTS as u64) as usize);
        self.lv2_meta.shrink_to((m_new * L2_SLOTS as u64) as usize);
        self.lv3_locks.shrink_to(m_new as usize);
        self.arena_nodes.store(nodes_new, Ordering::Release);
        self.generation.store(target.generation, Ordering::Release);
        self.m.store(m_new, Ordering::Release);
        Ok(())
    }

    /// Dry-run of the fold: replays the exact greedy choices `place_down`
    /// will make against counters only. Errors instead of touching anything
    /// when the lower half (or the arena, transiently or finally) can't
    /// take the load.
    #[allow(clippy::too_many_arguments)]
    fn simulate_fold(
        &self,
        m_new: u64,
        u1: &[(u64, u32, u64, u64)],
        u2: &[(u64, u32, u64, u64)],
        u3: &[(u64, u64, u64)],
        lower_l3: u64,
        nodes_old: u64,
        nodes_new: u64,
    ) -> Result<(), TableError> {
        struct Sim {
            l1_free: Vec<u32>,
            l2_free: Vec<u32>,
            spills: u64,
        }
        let mut sim = Sim {
            l1_free: (0..m_new).map(|b| empty_mask_l1(&self.l1_snapshot(b)).count_ones()).collect(),
            l2_free: (0..m_new).map(|b| empty_mask_l2(&self.l2_snapshot(b)).count_ones()).collect(),
            spills: 0,
        };
        let place = |s: &mut Sim, k: u64| {
            let t = self.hashes(k);
            let b1 = t.block0(m_new) as usize;
            if s.l1_free[b1] > 0 {
                s.l1_free[b1] -= 1;
                return;
            }
            let (c1, c2) = (t.block1(m_new) as usize, t.block2(m_new) as usize);
            let pick = if s.l2_free[c2] > s.l2_free[c1] { c2 } else { c1 };
            if s.l2_free[pick] > 0 {
                s.l2_free[pick] -= 1;
                return;
            }
            s.spills += 1;
        };
        let mut peak = lower_l3 + u3.len() as u64; // live nodes before any move
        for &(_, _, k, _) in u1 {
            place(&mut sim, k);
        }
        for &(_, _, k, _) in u2 {
            place(&mut sim, k);
        }
        peak += sim.spills; // upper-phase spills allocate before any U3 frees
        let mut live = peak;
        for &(_, k, _) in u3 {
            let before = sim.spills;
            place(&mut sim, k);
            if sim.spills > before {
                live += 1; // copy allocated…
                peak = peak.max(live);
            }
            live -= 1; // …then the popped source node is freed
        }
        let final_l3 = lower_l3 + sim.spills;
        if final_l3 > nodes_new || peak > nodes_old {
            return Err(TableError::ShrinkWouldOverflow);
        }
        Ok(())
    }

    /// Place one key by the normal cascade under `m_new` blocks, assuming
    /// exclusive access: no locks, no claim races. Shared by the shrink fold
    /// and recovery replay.
    pub(crate) fn place_down(&self, k: u64, v: u64, m_new: u64) -> Result<(), TableError> {
        let t = self.hashes(k);
        let b1 = t.block0(m_new);
        let empties = empty_mask_l1(&self.l1_snapshot(b1));
        if empties != 0 {
            let slot = select_nth(empties, 0);
            let off = Self::l1_slot_off(b1, slot);
            self.store.level1.store_pair(off, k, v);
            self.store.level1.flush(off, 16)?;
            self.set_l1_meta(b1, slot, t.f0);
            return Ok(());
        }
        let (c1, c2) = (t.block1(m_new), t.block2(m_new));
        let (e1, e2) = (
            empty_mask_l2(&self.l2_snapshot(c1)),
            empty_mask_l2(&self.l2_snapshot(c2)),
        );
        if e1 != 0 || e2 != 0 {
            let (block, mask, fp) = if e2.count_ones() > e1.count_ones() {
                (c2, e2, t.f2)
            } else {
                (c1, e1, t.f1)
            };
            let slot = select_nth(mask, 0);
            let claimed = self.claim_l2_slot(block, slot, fp);
            debug_assert!(claimed, "offline claim cannot race");
            let off = Self::l2_slot_off(block, slot);
            self.store.level2.store_pair(off, k, v);
            self.store.level2.flush(off, 16)?;
            return Ok(());
        }
        self.insert_l3(b1, k, v)
    }

    /// Relocate live nodes with indices beyond the shrunk arena into free
    /// low slots, then rebuild the allocator over the smaller range. The
    /// copy is flushed before the relink, so a crash mid-compaction only
    /// leaves an unreachable duplicate.
    fn compact_arena(&self, m_new: u64, nodes_new: u64) -> Result<(), TableError> {
        let mut live: Vec<u64> = Vec::new();
        for bucket in 0..m_new {
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID {
                live.push(node);
                node = self.store.arena.load_word(Self::node_next_off(node));
            }
        }
        let live_set: std::collections::HashSet<u64> = live.iter().copied().collect();
        let mut low_free: Vec<u64> =
            (0..nodes_new).filter(|n| !live_set.contains(n)).rev().collect();

        for bucket in 0..m_new {
            let mut prev: Option<u64> = None;
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID {
                let next = self.store.arena.load_word(Self::node_next_off(node));
                if node >= nodes_new {
                    let dest = low_free.pop().expect("fold simulation guaranteed room");
                    let (k, v) = self.store.arena.load_pair(Self::node_pair_off(node));
                    self.store.arena.store_pair(Self::node_pair_off(dest), k, v);
                    self.store.arena.store_word(Self::node_next_off(dest), next);
                    self.store.arena.flush(Self::node_pair_off(dest), NODE_BYTES)?;
                    match prev {
                        None => {
                            self.store.heads.store_word(Self::head_off(bucket), dest);
                            self.store.heads.flush(Self::head_off(bucket), 8)?;
                        }
                        Some(p) => {
                            self.store.arena.store_word(Self::node_next_off(p), dest);
                            self.store.arena.flush(Self::node_next_off(p), 8)?;
                        }
                    }
                    prev = Some(dest);
                } else {
                    prev = Some(node);
                }
                node = next;
            }
        }

        // Rebuild the allocator over the shrunk range.
        let mut reachable = std::collections::HashSet::new();
        for bucket in 0..m_new {
            let mut node = self.store.heads.load_word(Self::head_off(bucket));
            while node != INVALID {
                debug_assert!(node < nodes_new);
                reachable.insert(node);
                node = self.store.arena.load_word(Self::node_next_off(node));
            }
        }
        let mut alloc = self.arena_alloc.lock().unwrap();
        alloc.bump = nodes_new;
        alloc.free = (0..nodes_new).filter(|n| !reachable.contains(n)).rev().collect();
        Ok(())
    }
}
