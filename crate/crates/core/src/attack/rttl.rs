//! Timing-only estimation of when the decay rate jumped.
//!
//! A conflict makes every entry decay at once and shortens the decay
//! period, so an attacker re-probing a set of its own cached lines sees a
//! burst of misses. Each probe round with at least `min_burst` unexpected
//! misses is reported as "conflict suspected".

use serde::{Deserialize, Serialize};

use super::{AttackerModel, Session};
use crate::cache::EvictionCause;
use crate::simkit::{Machine, TraceRecord};
use crate::ttl::Nanos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RttlConfig {
    pub probe_interval_ns: Nanos,
    pub rounds: usize,
    pub min_burst: usize,
    /// Accesses issued by some other process; `noise_per_round` of them run
    /// before each round's idle interval, cycling through the list.
    pub noise: Vec<TraceRecord>,
    pub noise_per_round: usize,
}

impl Default for RttlConfig {
    fn default() -> Self {
        RttlConfig {
            probe_interval_ns: 50_000,
            rounds: 200,
            min_burst: 1,
            noise: Vec::new(),
            noise_per_round: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RttlEstimate {
    pub misses_per_round: Vec<usize>,
    /// End of every round flagged by the estimator.
    pub estimated: Vec<Nanos>,
    /// End of every round during which a conflict really happened.
    pub truth: Vec<Nanos>,
    pub precision: f64,
    pub recall: f64,
    /// Rounds in which every probe missed.
    pub all_missed_rounds: usize,
}

pub fn estimate_rttl(
    machine: &mut Machine,
    attacker: AttackerModel,
    probe_set: &[u64],
    cfg: &RttlConfig,
) -> RttlEstimate {
    let mut est = RttlEstimate::default();
    {
        let mut sess = Session::new(machine, attacker, Nanos::MAX);
        for &a in probe_set {
            let _ = sess.touch(a);
        }
    }
    machine.cache_mut().take_evictions();
    let mut noise = cfg.noise.iter().cycle();
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for _ in 0..cfg.rounds {
        if !cfg.noise.is_empty() {
            for r in noise.by_ref().take(cfg.noise_per_round) {
                machine.access(r.addr, r.op);
            }
        }
        machine.idle(cfg.probe_interval_ns);
        let mut misses = 0;
        {
            let mut sess = Session::new(machine, attacker, Nanos::MAX);
            for &a in probe_set {
                misses += sess.touch(a).map(|o| o.miss as usize).unwrap_or(0);
            }
        }
        // Ground truth, invisible to the estimator.
        let conflicted = machine
            .cache_mut()
            .take_evictions()
            .iter()
            .any(|r| r.cause == EvictionCause::Conflict);
        let flagged = misses >= cfg.min_burst.max(1);
        let now = machine.now();
        if flagged {
            est.estimated.push(now);
        }
        if conflicted {
            est.truth.push(now);
        }
        match (flagged, conflicted) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
        if !probe_set.is_empty() && misses == probe_set.len() {
            est.all_missed_rounds += 1;
        }
        est.misses_per_round.push(misses);
    }
    est.precision = if tp + fp == 0 {
        1.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    est.recall = if tp + fn_ == 0 {
        1.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    est
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{build_cache, CacheConfig, ModelKind};
    use crate::geometry::CacheGeometry;
    use crate::simkit::{gen_workload, WorkloadKind, WorkloadSpec};
    use crate::ttl::TtlConfig;

    fn machine(ttl: TtlConfig) -> Machine {
        let mut cfg =
            CacheConfig::new(ModelKind::Clepsydra, CacheGeometry::new(4, 64, 64).unwrap());
        cfg.ttl = ttl;
        Machine::new(build_cache(&cfg, 5).unwrap(), 0)
    }

    fn probe_set() -> Vec<u64> {
        (0..32u64).map(|i| (1 << 40) + i * 0x1_0040).collect()
    }

    #[test]
    fn quiet_cache_shows_no_bursts() {
        // TTLs of at least 16 and probes well within 16 periods: nothing
        // can expire between probes.
        let ttl = TtlConfig {
            ttl_min: 16,
            ..TtlConfig::default()
        };
        let mut m = machine(ttl);
        let cfg = RttlConfig {
            probe_interval_ns: 100_000,
            rounds: 100,
            ..Default::default()
        };
        let est = estimate_rttl(&mut m, AttackerModel::timing_only(), &probe_set(), &cfg);
        assert!(est.estimated.is_empty(), "{:?}", est.misses_per_round);
        assert!(est.truth.is_empty());
    }

    #[test]
    fn conflict_storm_is_noticed() {
        let mut m = machine(TtlConfig::default());
        let flood = gen_workload(
            &WorkloadSpec {
                kind: WorkloadKind::DosFlood,
                accesses: 100_000,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        let cfg = RttlConfig {
            probe_interval_ns: 20_000,
            rounds: 50,
            noise: flood,
            noise_per_round: 400,
            ..Default::default()
        };
        let est = estimate_rttl(&mut m, AttackerModel::timing_only(), &probe_set(), &cfg);
        assert!(!est.truth.is_empty());
        assert!(est.recall > 0.0);
    }

    #[test]
    fn probing_slower_than_the_lifetime_always_misses() {
        let ttl = TtlConfig {
            ttl_min: 1,
            ttl_max: 4,
            period_base_ns: 1_000,
            period_min_ns: 100,
            period_max_ns: 1_000,
            period_increment_ns: 10,
            conflict_divisor: 4.0,
        };
        let mut m = machine(ttl);
        let cfg = RttlConfig {
            probe_interval_ns: 10 * ttl.max_lifetime_ns(),
            rounds: 20,
            ..Default::default()
        };
        let est = estimate_rttl(&mut m, AttackerModel::timing_only(), &probe_set(), &cfg);
        assert_eq!(est.all_missed_rounds, 20);
    }
}
