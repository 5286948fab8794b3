//! Read-mostly synchronization: a reader-writer lock whose readers touch only
//! a per-thread counter shard, and a sharded element counter on the same
//! thread-to-shard assignment.
//!
//! Readers pay one fetch_add on their own cache line plus one flag load;
//! writers raise the flag and drain every shard. Fairness is writer-preferring
//! so a resize can't starve behind a read stream.

use std::cell::Cell;
use std::sync::atomic::{AtomicBool, AtomicI64, AtomicU32, AtomicUsize, Ordering};

const SHARDS: usize = 32;

#[repr(align(128))]
struct PaddedU32(AtomicU32);

#[repr(align(128))]
struct PaddedI64(AtomicI64);

static NEXT_SHARD: AtomicUsize = AtomicUsize::new(0);

thread_local! {
    static MY_SHARD: Cell<usize> = const { Cell::new(usize::MAX) };
}

/// Shard index for the current thread, assigned round-robin on first use.
fn my_shard() -> usize {
    MY_SHARD.with(|s| {
        let v = s.get();
        if v != usize::MAX {
            return v;
        }
        let v = NEXT_SHARD.fetch_add(1, Ordering::Relaxed) % SHARDS;
        s.set(v);
        v
    })
}

pub struct DistRwLock {
    readers: [PaddedU32; SHARDS],
    writer: AtomicBool,
}

impl Default for DistRwLock {
    fn default() -> Self {
        Self::new()
    }
}

impl DistRwLock {
    pub fn new() -> Self {
        DistRwLock {
            readers: std::array::from_fn(|_| PaddedU32(AtomicU32::new(0))),
            writer: AtomicBool::new(false),
        }
    }

    pub fn read(&self) -> ReadGuard<'_> {
        let shard = my_shard();
        loop {
            self.readers[shard].0.fetch_add(1, Ordering::SeqCst);
            if !self.writer.load(Ordering::SeqCst) {
                return ReadGuard { lock: self, shard };
            }
            // A writer got in first: back out and wait it off.
            self.readers[shard].0.fetch_sub(1, Ordering::SeqCst);
            while self.writer.load(Ordering::SeqCst) {
                std::thread::yield_now();
            }
        }
    }

    pub fn write(&self) -> WriteGuard<'_> {
        while self
            .writer
            .compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst)
            .is_err()
        {
            std::thread::yield_now();
        }
        for shard in &self.readers {
            while shard.0.load(Ordering::SeqCst) != 0 {
                std::thread::yield_now();
            }
        }
        WriteGuard { lock: self }
    }

    /// Upgrade-by-retry entry point: release the caller's read guard first,
    /// then take write; the caller re-checks its trigger condition under the
    /// write guard because another thread may have acted in the gap.
    pub fn write_after(&self, read: ReadGuard<'_>) -> WriteGuard<'_> {
        drop(read);
        self.write()
    }
}

pub struct ReadGuard<'a> {
    lock: &'a DistRwLock,
    shard: usize,
}

impl Drop for ReadGuard<'_> {
    fn drop(&mut self) {
        self.lock.readers[self.shard].0.fetch_sub(1, Ordering::SeqCst);
    }
}

pub struct WriteGuard<'a> {
    lock: &'a DistRwLock,
}

impl Drop for WriteGuard<'_> {
    fn drop(&mut self) {
        self.lock.writer.store(false, Ordering::SeqCst);
    }
}

/// Element counter sharded on the same per-thread assignment as the lock.
pub struct ShardedCounter {
    shards: [PaddedI64; SHARDS],
}

impl Default for ShardedCounter {
    fn default() -> Self {
        Self::new()
    }
}

impl ShardedCounter {
    pub fn new() -> Self {
        ShardedCounter { shards: std::array::from_fn(|_| PaddedI64(AtomicI64::new(0))) }
    }

    #[inline]
    pub fn add(&self, delta: i64) {
        self.shards[my_shard()].0.fetch_add(delta, Ordering::Relaxed);
    }

    /// Sum over shards. Exact when quiescent, a close estimate under churn.
    pub fn sum(&self) -> i64 {
        self.shards.iter().map(|s| s.0.load(Ordering::Relaxed)).sum()
    }

    /// Collapse to a known value. Only sound while the caller holds exclusive
    /// access (a write guard or single-threaded setup).
    pub fn reset(&self, value: i64) {
        for s in &self.shards {
            s.0.store(0, Ordering::Relaxed);
        }
        self.shards[0].0.store(value, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU64;
    use std::sync::Arc;

    #[test]
    fn writer_excludes_readers() {
        let lock = Arc::new(DistRwLock::new());
        let value = Arc::new(AtomicU64::new(0));
        let mut handles = Vec::new();

        for _ in 0..4 {
            let lock = Arc::clone(&lock);
            let value = Arc::clone(&value);
            handles.push(std::thread::spawn(move || {
                for _ in 0..200 {
                    let _g = lock.read();
                    // Writers bump by 2 and restore; readers must never see
                    // the intermediate odd value.
                    assert_eq!(value.load(Ordering::SeqCst) % 2, 0);
                }
            }));
        }
        for _ in 0..2 {
            let lock = Arc::clone(&lock);
            let value = Arc::clone(&value);
            handles.push(std::thread::spawn(move || {
                for _ in 0..100 {
                    let _g = lock.write();
                    value.fetch_add(1, Ordering::SeqCst);
                    std::thread::yield_now();
                    value.fetch_add(1, Ordering::SeqCst);
                }
            }));
        }
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(value.load(Ordering::SeqCst), 2 * 2 * 100);
    }

    #[test]
    fn writers_exclude_each_other() {
        let lock = Arc::new(DistRwLock::new());
        let value = Arc::new(AtomicU64::new(0));
        let handles: Vec<_> = (0..4)
            .map(|_| {
                let lock = Arc::clone(&lock);
                let value = Arc::clone(&value);
                std::thread::spawn(move || {
                    for _ in 0..250 {
                        let _g = lock.write();
                        let v = value.load(Ordering::SeqCst);
                        std::thread::yield_now();
                        value.store(v + 1, Ordering::SeqCst);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(value.load(Ordering::SeqCst), 1000);
    }

    #[test]
    fn upgrade_reacquires() {
        let lock = DistRwLock::new();
        let r = lock.read();
        let w = lock.write_after(r);
        drop(w);
        let _r2 = lock.read();
    }

    #[test]
    fn counter_sums_across_threads() {
        let c = Arc::new(ShardedCounter::new());
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let c = Arc::clone(&c);
                std::thread::spawn(move || {
                    for _ in 0..1000 {
                        c.add(2);
                        c.add(-1);
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(c.sum(), 8 * 1000);
        c.reset(7);
        assert_eq!(c.sum(), 7);
    }
}
