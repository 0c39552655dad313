//! Closed-form security estimates for randomized caches with and without
//! TTL decay.
//!
//! The catching probability `p_c` is the chance that one access to the
//! target address evicts a member of a primed set of `k'` addresses. The
//! eviction probability `p_e` is the chance that accessing a generalized
//! eviction set `G` evicts the target. Profiling cost combines both with an
//! access-time model.
//!
//! The ScatterCache-like laws are not derived here from first principles;
//! they are the laws that reproduce the published comparison tables and the
//! 0.45 s profiling estimate, and they are cross-checked by the urn
//! simulations in [`oracle`].

pub mod oracle;
mod tables;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

pub use oracle::{monte_carlo_oracle, wilson_interval, Estimate, Experiment};
pub use tables::{profiling_summary, table1, table2, ProfilingRow, SizeRow, PAPER_GOALS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("probability goal {0} must lie strictly between 0 and 1")]
    BadGoal(f64),
    #[error("set size {size} exceeds the {n} cache entries")]
    TooLarge { size: u64, n: u64 },
    #[error("goal {goal} cannot be reached under the {law:?} law")]
    Unreachable { goal: f64, law: Law },
    #[error("expected conflict count diverges at k = {k} (catching probability is 1)")]
    Divergent { k: u64 },
    #[error("catching probability at k = {k} is zero; the eviction set can never be built")]
    ZeroCatch { k: u64 },
    #[error("invalid parameters: {0}")]
    Params(String),
}

/// Cache and timing parameters of the analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityParams {
    /// Total entries.
    pub n: u64,
    /// Ways.
    pub w: u64,
    pub t_hit_ns: f64,
    pub t_miss_ns: f64,
}

impl SecurityParams {
    pub fn new(n: u64, w: u64) -> Result<Self, AnalyticsError> {
        let p = SecurityParams {
            n,
            w,
            t_hit_ns: 10.0,
            t_miss_ns: 20.0,
        };
        p.validate()?;
        Ok(p)
    }

    /// 8 MiB, 16-way (131,072 entries), 10 ns hits, 20 ns misses.
    pub fn reference() -> Self {
        SecurityParams {
            n: 131_072,
            w: 16,
            t_hit_ns: 10.0,
            t_miss_ns: 20.0,
        }
    }

    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.w == 0 || self.w > self.n {
            return Err(AnalyticsError::Params(format!(
                "need 0 < w <= N, got w = {}, N = {}",
                self.w, self.n
            )));
        }
        if !(self.t_hit_ns < self.t_miss_ns) {
            return Err(AnalyticsError::Params(format!(
                "need t_hit < t_miss, got {} and {}",
                self.t_hit_ns, self.t_miss_ns
            )));
        }
        Ok(())
    }
}

/// Which cache design a law or cost model describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Clepsydra,
    #[serde(rename = "scattercache")]
    ScatterCache,
}

impl Scheme {
    pub fn catch_law(self) -> Law {
        match self {
            Scheme::Clepsydra => Law::ClepsydraCatch,
            Scheme::ScatterCache => Law::ScatterCatch,
        }
    }

    pub fn evict_law(self) -> Law {
        match self {
            Scheme::Clepsydra => Law::ClepsydraEvict,
            Scheme::ScatterCache => Law::ScatterEvict,
        }
    }
}

/// A probability law, monotone non-decreasing in its set-size argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Law {
    ClepsydraCatch,
    ScatterCatch,
    ClepsydraEvict,
    ScatterEvict,
    /// `1 - (1 - 1/w^2)^|G|`: each member collides in an independently
    /// chosen way. Kept for comparison; the tables use [`Law::ScatterEvict`].
    ScatterEvictBinomial,
}

impl Law {
    pub fn probability(self, size: u64, p: &SecurityParams) -> f64 {
        match self {
            Law::ClepsydraCatch => p_catch_clepsydra(size, p),
            Law::ScatterCatch => p_catch_scattercache(size, p),
            Law::ClepsydraEvict => p_evict_clepsydra(size, p),
            Law::ScatterEvict => p_evict_scattercache(size, p),
            Law::ScatterEvictBinomial => {
                let w = p.w as f64;
                1.0 - (1.0 - 1.0 / (w * w)).powf(size as f64)
            }
        }
    }

    fn is_catch(self) -> bool {
        matches!(self, Law::ClepsydraCatch | Law::ScatterCatch)
    }
}

/// `ln C(n, k)` via log-gamma.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Probability that the target's dynamic set is entirely occupied by `k'`
/// randomly placed, non-conflicting lines: `C(k', w) / C(N, w)`.
pub fn p_catch_clepsydra(k_prime: u64, p: &SecurityParams) -> f64 {
    if k_prime < p.w {
        return 0.0;
    }
    if k_prime >= p.n {
        return 1.0;
    }
    (ln_choose(k_prime, p.w) - ln_choose(p.n, p.w)).exp()
}

/// Random-way replacement hits a primed line with probability `k'/N`.
pub fn p_catch_scattercache(k_prime: u64, p: &SecurityParams) -> f64 {
    (k_prime.min(p.n) as f64) / p.n as f64
}

/// Every way of the target's dynamic set must be taken by one of the
/// `|G|/w` members colliding in that way: `(1 - (1 - 1/w)^(|G|/w))^w`.
pub fn p_evict_clepsydra(g_size: u64, p: &SecurityParams) -> f64 {
    let w = p.w as f64;
    (1.0 - (1.0 - 1.0 / w).powf(g_size as f64 / w)).powf(w)
}

/// The target sits in one way; one of the `|G|/w` members colliding there
/// must replace it: `1 - (1 - 1/w)^(|G|/w)`.
pub fn p_evict_scattercache(g_size: u64, p: &SecurityParams) -> f64 {
    let w = p.w as f64;
    1.0 - (1.0 - 1.0 / w).powf(g_size as f64 / w)
}

/// Smallest set size whose probability under `law` reaches `p_goal`.
pub fn min_set_size_for(p_goal: f64, law: Law, p: &SecurityParams) -> Result<u64, AnalyticsError> {
    if !(p_goal > 0.0 && p_goal < 1.0) {
        return Err(AnalyticsError::BadGoal(p_goal));
    }
    let hi = if law.is_catch() {
        p.n
    } else {
        let mut hi = p.w.max(1);
        while law.probability(hi, p) < p_goal {
            if hi > (1 << 48) {
                return Err(AnalyticsError::Unreachable { goal: p_goal, law });
            }
            hi *= 2;
        }
        hi
    };
    if law.probability(hi, p) < p_goal {
        return Err(AnalyticsError::Unreachable { goal: p_goal, law });
    }
    let mut lo = 0u64;
    let mut hi = hi;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if law.probability(mid, p) >= p_goal {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// `sum_i sum_j p_c(i)^j = sum_i p_c(i) / (1 - p_c(i))` over the `k`
/// incremental priming steps.
pub fn expected_conflicts(k: u64, p: &SecurityParams) -> Result<f64, AnalyticsError> {
    expected_conflicts_for(k, p, Scheme::Clepsydra)
}

pub fn expected_conflicts_for(
    k: u64,
    p: &SecurityParams,
    scheme: Scheme,
) -> Result<f64, AnalyticsError> {
    if k > p.n {
        return Err(AnalyticsError::TooLarge { size: k, n: p.n });
    }
    let law = scheme.catch_law();
    let mut sum = 0.0;
    for i in 1..=k {
        let pc = law.probability(i, p);
        if pc >= 1.0 {
            return Err(AnalyticsError::Divergent { k: i });
        }
        sum += pc / (1.0 - pc);
    }
    Ok(sum)
}

/// Variance of the total conflict count when each step's count is geometric.
pub fn conflict_count_variance(
    k: u64,
    p: &SecurityParams,
    scheme: Scheme,
) -> Result<f64, AnalyticsError> {
    if k > p.n {
        return Err(AnalyticsError::TooLarge { size: k, n: p.n });
    }
    let law = scheme.catch_law();
    let mut var = 0.0;
    for i in 1..=k {
        let pc = law.probability(i, p);
        if pc >= 1.0 {
            return Err(AnalyticsError::Divergent { k: i });
        }
        var += pc / ((1.0 - pc) * (1.0 - pc));
    }
    Ok(var)
}

/// Time in ns for one round of incremental priming up to `k` addresses.
///
/// Clepsydra: every new address costs a miss, and each expected conflict
/// costs a re-access of the `i - 1` addresses already primed plus a miss.
/// ScatterCache: `k` misses; no rate recovery is needed after conflicts.
pub fn t_profiling_iteration(
    k: u64,
    p: &SecurityParams,
    scheme: Scheme,
) -> Result<f64, AnalyticsError> {
    if k > p.n {
        return Err(AnalyticsError::TooLarge { size: k, n: p.n });
    }
    match scheme {
        Scheme::ScatterCache => Ok(k as f64 * p.t_miss_ns),
        Scheme::Clepsydra => {
            let mut total = 0.0;
            for i in 1..=k {
                let pc = p_catch_clepsydra(i, p);
                if pc >= 1.0 {
                    return Err(AnalyticsError::Divergent { k: i });
                }
                let reaccess = (i - 1) as f64 * p.t_hit_ns + p.t_miss_ns;
                total += p.t_miss_ns + pc / (1.0 - pc) * reaccess;
            }
            Ok(total)
        }
    }
}

/// Seconds to build an eviction set reaching `p_e_goal` when priming to `k`:
/// `|G| / p_c(k) * t_pp(k)`.
pub fn t_construct_g(
    p_e_goal: f64,
    k: u64,
    p: &SecurityParams,
    scheme: Scheme,
) -> Result<f64, AnalyticsError> {
    let g = min_set_size_for(p_e_goal, scheme.evict_law(), p)?;
    let pc = scheme.catch_law().probability(k, p);
    if pc <= 0.0 {
        return Err(AnalyticsError::ZeroCatch { k });
    }
    let t_pp = t_profiling_iteration(k, p, scheme)?;
    Ok(g as f64 / pc * t_pp * 1e-9)
}

/// Number of addresses filling `fraction` of the cache, rounded to nearest.
pub fn fill_to_k(fraction: f64, n: u64) -> u64 {
    (fraction * n as f64).round() as u64
}
