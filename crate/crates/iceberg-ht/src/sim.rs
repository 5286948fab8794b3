//! Balls-and-bins simulators for the load-balancing behavior behind the
//! level sizing: single-choice bins with a fixed capacity and an overflow
//! pool (level 1's shape), two-choice placement (level 2's shape), and
//! two-choice placement under repeated bin doubling (the resize rule).
//!
//! All runs are deterministic in (config, seed). Churn follows a phased
//! model: fill to the target ball count, then alternate a uniformly random
//! deletion with a fresh insertion so the population holds steady. A deleted
//! ball simply vacates its residence — overflow balls never move back into
//! bins, mirroring how the table never re-promotes keys.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Parameters for one simulation run.
#[derive(Clone, Copy, Debug)]
pub struct SimConfig {
    pub bins: u64,
    /// Slots per bin. Only single-choice runs enforce it; two-choice bins
    /// are unbounded (the point is to observe the max).
    pub capacity: u32,
    /// Balls present when the fill phase ends.
    pub target_balls: u64,
    /// Delete+insert pairs after the fill phase.
    pub churn_steps: u64,
    pub seed: u64,
}

/// Bin capacity for an average fill `h` with slack parameter `j`:
/// `h + j·√(h+1) + 1`, rounded up.
pub fn capacity_for(avg_fill: u32, slack: u32) -> u32 {
    let h = avg_fill as f64;
    (h + slack as f64 * (h + 1.0).sqrt() + 1.0).ceil() as u32
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimStats {
    pub final_balls: u64,
    /// Overflow-pool occupancy when the run ended.
    pub overflow_now: u64,
    /// Largest overflow-pool occupancy at any point.
    pub overflow_peak: u64,
    /// `overflow_now / final_balls` (0 when empty).
    pub overflow_fraction: f64,
    /// Largest single-bin load at any point.
    pub max_load: u32,
    /// Bins by final load: `histogram[l]` = number of bins holding `l`.
    pub histogram: Vec<u64>,
    /// Bin count when the run ended (changes only under the split rule).
    pub final_bins: u64,
}

fn finish(loads: &[u32], balls: u64, overflow: u64, peak: u64, max_load: u32) -> SimStats {
    let mut histogram = vec![0u64; loads.iter().copied().max().unwrap_or(0) as usize + 1];
    for &l in loads {
        histogram[l as usize] += 1;
    }
    SimStats {
        final_balls: balls,
        overflow_now: overflow,
        overflow_peak: peak,
        overflow_fraction: if balls == 0 { 0.0 } else { overflow as f64 / balls as f64 },
        max_load,
        histogram,
        final_bins: loads.len() as u64,
    }
}

/// Marker for a ball that landed in the overflow pool.
const OVERFLOW: u64 = u64::MAX;

/// Single-choice placement into `bins` bins of fixed `capacity`; a ball
/// whose bin is full goes to the overflow pool and stays there.
pub fn simulate_frontyard(cfg: &SimConfig) -> SimStats {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loads = vec![0u32; cfg.bins as usize];
    let mut balls: Vec<u64> = Vec::with_capacity(cfg.target_balls as usize);
    let mut overflow = 0u64;
    let mut peak = 0u64;
    let mut max_load = 0u32;

    let mut insert = |rng: &mut ChaCha8Rng,
                      loads: &mut Vec<u32>,
                      balls: &mut Vec<u64>,
                      overflow: &mut u64| {
        let bin = rng.gen_range(0..cfg.bins);
        if loads[bin as usize] < cfg.capacity {
            loads[bin as usize] += 1;
            max_load = max_load.max(loads[bin as usize]);
            balls.push(bin);
        } else {
            *overflow += 1;
            balls.push(OVERFLOW);
        }
    };
    for _ in 0..cfg.target_balls {
        insert(&mut rng, &mut loads, &mut balls, &mut overflow);
        peak = peak.max(overflow);
    }
    for _ in 0..cfg.churn_steps {
        let victim = balls.swap_remove(rng.gen_range(0..balls.len() as u64) as usize);
        if victim == OVERFLOW {
            overflow -= 1;
        } else {
            loads[victim as usize] -= 1;
        }
        insert(&mut rng, &mut loads, &mut balls, &mut overflow);
        peak = peak.max(overflow);
    }
    finish(&loads, balls.len() as u64, overflow, peak, max_load)
}

/// Two-choice placement (emptier bin wins, ties to the first draw) with
/// unbounded bins, tracking the running maximum load.
pub fn simulate_p2c(cfg: &SimConfig) -> SimStats {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut loads = vec![0u32; cfg.bins as usize];
    let mut balls: Vec<u64> = Vec::with_capacity(cfg.target_balls as usize);
    let mut max_load = 0u32;

    let mut insert = |rng: &mut ChaCha8Rng, loads: &mut Vec<u32>, balls: &mut Vec<u64>| {
        let a = rng.gen_range(0..cfg.bins);
        let b = rng.gen_range(0..cfg.bins);
        let bin = if loads[b as usize] < loads[a as usize] { b } else { a };
        loads[bin as usize] += 1;
        max_load = max_load.max(loads[bin as usize]);
        balls.push(bin);
    };
    for _ in 0..cfg.target_balls {
        insert(&mut rng, &mut loads, &mut balls);
    }
    for _ in 0..cfg.churn_steps {
        let victim = balls.swap_remove(rng.gen_range(0..balls.len() as u64) as usize);
        loads[victim as usize] -= 1;
        insert(&mut rng, &mut loads, &mut balls);
    }
    finish(&loads, balls.len() as u64, 0, 0, max_load)
}

/// Two-choice insertion with the doubling rule: whenever the ball count
/// exceeds a quarter of the bin count, every bin splits in two and each
/// ball moves to the bin its own hash selects among the doubled range.
/// `bins` is the starting count and must be a power of two; `capacity` and
/// `churn_steps` are unused (insertion-only by design).
pub fn simulate_split(cfg: &SimConfig) -> SimStats {
    assert!(cfg.bins.is_power_of_two(), "split rule needs power-of-two bins");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut bins = cfg.bins;
    let mut loads = vec![0u32; bins as usize];
    // Each ball keeps the hash that placed it, so a split re-derives its
    // new bin from the next hash bit.
    let mut hashes: Vec<u64> = Vec::with_capacity(cfg.target_balls as usize);
    let mut max_load = 0u32;

    for _ in 0..cfg.target_balls {
        let (h1, h2) = (rng.gen::<u64>(), rng.gen::<u64>());
        let (a, b) = ((h1 % bins) as usize, (h2 % bins) as usize);
        let (bin, h) = if loads[b] < loads[a] { (b, h2) } else { (a, h1) };
        loads[bin] += 1;
        max_load = max_load.max(loads[bin]);
        hashes.push(h);

        if hashes.len() as u64 > bins / 4 {
            bins *= 2;
            loads = vec![0u32; bins as usize];
            for &h in &hashes {
                loads[(h % bins) as usize] += 1;
            }
            let split_max = loads.iter().copied().max().unwrap_or(0);
            max_load = max_load.max(split_max);
            debug_assert_eq!(
                loads.iter().map(|&l| l as u64).sum::<u64>(),
                hashes.len() as u64,
                "split must conserve balls"
            );
        }
    }
    finish(&loads, hashes.len() as u64, 0, 0, max_load)
}
