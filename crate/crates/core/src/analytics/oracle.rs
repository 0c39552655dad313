//! Brute-force urn simulations used to cross-check the closed forms.
//!
//! These deliberately avoid the cache models and the mapping function: slots
//! are plain integers and placements are drawn directly from the PRNG.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "lowercase")]
pub enum Experiment {
    /// Prime `k_prime` distinct entries, then access a fresh target once.
    Catch { k_prime: u64, scheme: Scheme },
    /// Access a generalized eviction set of `g_size` members spread evenly
    /// over the ways, then check whether the target was evicted.
    Evict { g_size: u64, scheme: Scheme },
    /// Prime `k` addresses one at a time, re-accessing each conflict victim
    /// until it is cached again, and count the conflicts.
    Conflicts { k: u64, scheme: Scheme },
}

/// Monte Carlo estimate with a 95% interval.
///
/// Probabilities use the Wilson interval; counts use the normal interval
/// on the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
    pub trials: u64,
    /// Standard deviation of a single trial.
    pub std_dev: f64,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At 0 or n successes the bound is exactly 0 or 1; rounding can leave
    // it a hair inside.
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

const Z95: f64 = 1.959_963_984_540_054;
const CHUNKS: u64 = 64;

/// Run `trials` independent urn trials for a cache of `n` entries in `w`
/// ways. Results depend only on the arguments, not on the thread count.
pub fn monte_carlo_oracle(
    experiment: Experiment,
    n: u64,
    w: u64,
    trials: u64,
    seed: u64,
) -> Result<Estimate, AnalyticsError> {
    if w == 0 || !n.is_multiple_of(w) || n > 1 << 16 {
        return Err(AnalyticsError::Params(format!(
            "urn needs w > 0, w | N and N <= 65536; got N = {n}, w = {w}"
        )));
    }
    match experiment {
        Experiment::Catch { k_prime: s, .. } | Experiment::Conflicts { k: s, .. } if s > n => {
            return Err(AnalyticsError::TooLarge { size: s, n });
        }
        Experiment::Conflicts { k, .. } if k == n => return Err(AnalyticsError::Divergent { k }),
        _ => {}
    }
    let per_chunk = trials.div_ceil(CHUNKS);
    let samples: Vec<f64> = (0..CHUNKS)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c);
            let start = c * per_chunk;
            let end = ((c + 1) * per_chunk).min(trials);
            (start..end)
                .map(|_| trial(experiment, n as usize, w as usize, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    let count = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / count;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1.0).max(1.0);
    let (lo, hi) = match experiment {
        Experiment::Conflicts { .. } => {
            let half = Z95 * (var / count).sqrt();
            (mean - half, mean + half)
        }
        _ => wilson_interval(
            samples.iter().filter(|&&x| x > 0.5).count() as u64,
            trials,
            Z95,
        ),
    };
    Ok(Estimate {
        estimate: mean,
        lo,
        hi,
        trials,
        std_dev: var.sqrt(),
    })
}

fn trial(experiment: Experiment, n: usize, w: usize, rng: &mut ChaCha8Rng) -> f64 {
    let lines = n / w;
    match experiment {
        Experiment::Catch { k_prime, scheme } => {
            let mut tainted = vec![false; n];
            for e in sample(rng, n, k_prime as usize) {
                tainted[e] = true;
            }
            let hit = match scheme {
                Scheme::Clepsydra => {
                    (0..w).all(|way| tainted[way * lines + rng.random_range(0..lines)])
                }
                Scheme::ScatterCache => {
                    let way = rng.random_range(0..w);
                    tainted[way * lines + rng.random_range(0..lines)]
                }
            };
            hit as u8 as f64
        }
        Experiment::Evict { g_size, scheme } => {
            // Member j collides with the target in way j mod w and, when
            // accessed, lands in a uniformly chosen way of its own set.
            let lands_on_target = |rng: &mut ChaCha8Rng, way: usize| rng.random_range(0..w) == way;
            let evicted = match scheme {
                Scheme::Clepsydra => {
                    let mut covered = vec![false; w];
                    for j in 0..g_size as usize {
                        let way = j % w;
                        if lands_on_target(rng, way) {
                            covered[way] = true;
                        }
                    }
                    covered.iter().all(|&c| c)
                }
                Scheme::ScatterCache => {
                    let target_way = rng.random_range(0..w);
                    let mut hit = false;
                    for j in 0..g_size as usize {
                        if j % w == target_way && lands_on_target(rng, target_way) {
                            hit = true;
                        }
                    }
                    hit
                }
            };
            evicted as u8 as f64
        }
        Experiment::Conflicts { k, scheme } => {
            let mut occupied = vec![false; n];
            let mut conflicts = 0u64;
            for _ in 0..k {
                // Each attempt is a fresh placement of the incoming (or
                // re-accessed) address; the occupancy is unchanged by a
                // conflict since one line leaves and one arrives.
                loop {
                    let placed = match scheme {
                        Scheme::Clepsydra => {
                            let set: Vec<usize> = (0..w)
                                .map(|way| way * lines + rng.random_range(0..lines))
                                .collect();
                            let free: Vec<usize> =
                                set.iter().copied().filter(|&e| !occupied[e]).collect();
                            if free.is_empty() {
                                None
                            } else {
                                Some(free[rng.random_range(0..free.len())])
                            }
                        }
                        Scheme::ScatterCache => {
                            let e = rng.random_range(0..w) * lines + rng.random_range(0..lines);
                            (!occupied[e]).then_some(e)
                        }
                    };
                    match placed {
                        Some(e) => {
                            occupied[e] = true;
                            break;
                        }
                        None => conflicts += 1,
                    }
                }
            }
            conflicts as f64
        }
    }
}
