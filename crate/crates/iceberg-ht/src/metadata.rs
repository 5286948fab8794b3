//! Fingerprint metadata blocks and the mask operations behind every probe.
//!
//! A level-1 block is 64 fingerprint bytes (one cache line); bit 7 of byte 0
//! doubles as the block lock, so slot 0 carries only a 7-bit fingerprint and
//! matches on the low 7 bits of both operands. A level-2 block is 8 plain
//! fingerprint bytes. The scalar byte loop is the normative semantics; the
//! word-at-a-time path is property-tested against it.

use std::sync::atomic::{AtomicU8, Ordering};

/// Metadata byte of a free slot. Never produced by fingerprint derivation.
pub const EMPTY: u8 = 0x00;
/// Lock bit stolen from byte 0 of a level-1 metadata block.
pub const L1_LOCK_BIT: u8 = 0x80;
/// Slots per level-1 block.
pub const L1_SLOTS: usize = 64;
/// Slots per level-2 block.
pub const L2_SLOTS: usize = 8;

/// Top 8 bits of the hash (top 7 with `slot0_narrow`), remapping 0x00 to 0x01
/// so EMPTY is never a real fingerprint.
#[inline]
pub fn derive_fingerprint(hash: u64, slot0_narrow: bool) -> u8 {
    let fp = if slot0_narrow { (hash >> 57) as u8 } else { (hash >> 56) as u8 };
    if fp == EMPTY {
        0x01
    } else {
        fp
    }
}

const LOW7: u8 = 0x7F;


/// Per-byte equality of an 8-byte word against a broadcast byte, as a mask
/// with bit i set when byte i matches. Exact: the gather multiply assigns
/// each source bit a distinct power of two, so no carries occur.
#[inline]
fn byte_eq_mask(word: u64, broadcast: u64) -> u64 {
    let x = word ^ broadcast;
    // 0x80 in each byte of x that is zero. The add stays inside each byte
    // (a 7-bit value plus 0x7F cannot carry out), unlike the subtract-based
    // variant whose borrows leak into neighboring bytes.
    const LOW7: u64 = 0x7F7F_7F7F_7F7F_7F7F;
    let zeros = !(((x & LOW7) + LOW7) | x | LOW7);
    ((zeros >> 7).wrapping_mul(0x0102_0408_1020_4080)) >> 56
}

#[inline]
fn broadcast(b: u8) -> u64 {
    u64::from(b) * 0x0101_0101_0101_0101
}

/// Bit i set ⇔ byte i equals `fp`. Level-1 slot 0 compares the low 7 bits of
/// both operands and never matches the empty pattern.
#[inline]
pub fn match_mask_l1(block: &[u8; L1_SLOTS], fp: u8) -> u64 {
    debug_assert_ne!(fp, EMPTY);
    let bc = broadcast(fp);
    let mut mask = 0u64;
    for w in 0..8 {
        let word = u64::from_le_bytes(block[w * 8..w * 8 + 8].try_into().unwrap());
        mask |= byte_eq_mask(word, bc) << (w * 8);
    }
    mask &= !1;
    if fp & LOW7 != 0 && block[0] & LOW7 == fp & LOW7 {
        mask |= 1;
    }
    mask
}

/// Bit i set ⇔ slot i is free (level-1 slot 0: low 7 bits zero).
#[inline]
pub fn empty_mask_l1(block: &[u8; L1_SLOTS]) -> u64 {
    let mut mask = 0u64;
    for w in 0..8 {
        let word = u64::from_le_bytes(block[w * 8..w * 8 + 8].try_into().unwrap());
        mask |= byte_eq_mask(word, 0) << (w * 8);
    }
    mask &= !1;
    if block[0] & LOW7 == EMPTY {
        mask |= 1;
    }
    mask
}

/// Bit i set ⇔ byte i equals `fp`, over the low 8 bits of the mask.
#[inline]
pub fn match_mask_l2(block: &[u8; L2_SLOTS], fp: u8) -> u64 {
    debug_assert_ne!(fp, EMPTY);
    byte_eq_mask(u64::from_le_bytes(*block), broadcast(fp))
}

/// Bit i set ⇔ slot i is free, over the low 8 bits of the mask.
#[inline]
pub fn empty_mask_l2(block: &[u8; L2_SLOTS]) -> u64 {
    byte_eq_mask(u64::from_le_bytes(*block), 0)
}

/// Position of the (i+1)-th set bit of `mask`, counting from bit 0.
/// `i < popcount(mask)` is the caller's responsibility.
#[inline]
pub fn select_nth(mask: u64, i: u32) -> u32 {
    debug_assert!(i < mask.count_ones(), "select_nth past the last set bit");
    let mut m = mask;
    for _ in 0..i {
        m &= m - 1;
    }
    m.trailing_zeros()
}

/// Occupied-slot count of a level-1 block.
#[inline]
pub fn occupancy_l1(block: &[u8; L1_SLOTS]) -> u32 {
    L1_SLOTS as u32 - empty_mask_l1(block).count_ones()
}

/// Occupied-slot count of a level-2 block.
#[inline]
pub fn occupancy_l2(block: &[u8; L2_SLOTS]) -> u32 {
    L2_SLOTS as u32 - empty_mask_l2(block).count_ones()
}

/// Relaxed snapshot of a level-1 metadata block. May interleave with
/// concurrent mutations; callers validate candidates against slot data.
#[inline]
pub fn snapshot_l1(bytes: &[AtomicU8]) -> [u8; L1_SLOTS] {
    let mut out = [0u8; L1_SLOTS];
    for (o, a) in out.iter_mut().zip(bytes) {
        *o = a.load(Ordering::Acquire);
    }
    out
}

/// Relaxed snapshot of a level-2 metadata block.
#[inline]
pub fn snapshot_l2(bytes: &[AtomicU8]) -> [u8; L2_SLOTS] {
    let mut out = [0u8; L2_SLOTS];
    for (o, a) in out.iter_mut().zip(bytes) {
        *o = a.load(Ordering::Acquire);
    }
    out
}
