//! Evict+Time and denial-of-service scenarios.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{AttackError, ATTACKER_BASE};
use crate::cache::{build_cache, AccessOp, CacheConfig, CacheModel};
use crate::simkit::{Machine, TraceRecord};
use crate::ttl::{DecayCause, Nanos, PeriodSample};

const VICTIM_BASE: u64 = 0x4000_0000;
const NOISE_BASE: u64 = 0x8000_0000;
const FLOOD_BASE: u64 = 0x100_0000_0000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvictTimeConfig {
    pub cache: CacheConfig,
    /// Timed victim runs per arm.
    pub samples: usize,
    /// Lines the victim touches in the secret-dependent cache set.
    pub victim_lines: usize,
    /// Extra lines per run drawn from a small pool, so run times vary.
    pub noise_lines: usize,
    pub seed: u64,
}

impl Default for EvictTimeConfig {
    fn default() -> Self {
        EvictTimeConfig {
            cache: CacheConfig::default(),
            samples: 500,
            victim_lines: 4,
            noise_lines: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvictTimeResult {
    /// Victim run times without attacker eviction.
    pub control: Vec<Nanos>,
    /// Victim run times after the attacker evicted the monitored set.
    pub attacked: Vec<Nanos>,
    pub mean_diff_ns: f64,
    /// Welch's t statistic of attacked minus control.
    pub t_stat: f64,
    /// Two-sided p-value of the Welch test.
    pub p_value: f64,
}

/// Welch's unequal-variance t-test; returns `(t, two-sided p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> (f64, f64) {
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    if a.len() < 2 || b.len() < 2 {
        return (0.0, 1.0);
    }
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    if se2 == 0.0 {
        return if ma == mb {
            (0.0, 1.0)
        } else {
            ((ma - mb).signum() * f64::INFINITY, 0.0)
        };
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (t, 2.0 * (1.0 - dist.cdf(t.abs())))
}

/// Evict+Time against a victim whose accesses to one cache set depend on a
/// secret bit. The attacker evicts the set it believes the secret lines
/// use, computed from plain index bits.
pub fn evict_time_experiment(
    cfg: &EvictTimeConfig,
    secret_bit: bool,
) -> Result<EvictTimeResult, AttackError> {
    let g = cfg.cache.geometry;
    let line = g.line_size as u64;
    let set_stride = (g.lines_per_way * g.line_size) as u64;
    let sets = g.lines_per_way as u64;
    let monitored = 5 % sets;
    let secret_set = if secret_bit {
        monitored
    } else {
        (monitored + 1) % sets
    };
    let victim: Vec<u64> = (1..=cfg.victim_lines as u64)
        .map(|j| VICTIM_BASE + secret_set * line + j * set_stride)
        .collect();
    let evict: Vec<u64> = (0..g.ways as u64)
        .map(|j| ATTACKER_BASE + monitored * line + j * set_stride)
        .collect();
    let pool: Vec<u64> = (0..)
        .map(|i: u64| NOISE_BASE + i * 7 * line)
        .filter(|a| (a / line) % sets != monitored)
        .take(8 * cfg.noise_lines.max(1))
        .collect();

    let mut m = Machine::new(build_cache(&cfg.cache, cfg.seed)?, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed);
    let run =
        |m: &mut Machine, trace: &[u64]| trace.iter().map(|&a| m.read(a).latency_ns).sum::<Nanos>();
    let mut control = Vec::with_capacity(cfg.samples);
    let mut attacked = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        for attack in [false, true] {
            let mut trace = victim.clone();
            if cfg.noise_lines > 0 {
                trace.extend(pool.choose_multiple(&mut rng, cfg.noise_lines).copied());
            }
            run(&mut m, &trace);
            if attack {
                for &a in &evict {
                    m.read(a);
                }
            }
            let t = run(&mut m, &trace);
            if attack {
                attacked.push(t)
            } else {
                control.push(t)
            }
            m.cache_mut().take_evictions();
        }
    }
    let af: Vec<f64> = attacked.iter().map(|&x| x as f64).collect();
    let cf: Vec<f64> = control.iter().map(|&x| x as f64).collect();
    let (t_stat, p_value) = welch_t_test(&af, &cf);
    let mean = |x: &[f64]| {
        if x.is_empty() {
            0.0
        } else {
            x.iter().sum::<f64>() / x.len() as f64
        }
    };
    Ok(EvictTimeResult {
        mean_diff_ns: mean(&af) - mean(&cf),
        control,
        attacked,
        t_stat,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DosConfig {
    pub cache: CacheConfig,
    /// Flooding accesses per benign access.
    pub flood_rate: f64,
    pub seed: u64,
}

impl Default for DosConfig {
    fn default() -> Self {
        DosConfig {
            cache: CacheConfig::default(),
            flood_rate: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DosStats {
    pub benign_accesses: u64,
    pub flood_accesses: u64,
    pub baseline_miss_rate: f64,
    pub flood_miss_rate: f64,
    /// Decay-period statistics of the flooded run (decaying caches only).
    pub min_period_ns: Option<Nanos>,
    pub final_period_ns: Option<Nanos>,
    /// Fraction of decay events that left the period at its minimum.
    pub at_min_fraction: Option<f64>,
    /// Period averaged over the virtual time of the flooded run.
    pub mean_period_ns: Option<f64>,
}

/// Benign miss rate with and without a flooding attacker that touches
/// `flood_rate` fresh lines per benign access.
pub fn dos_scenario(cfg: &DosConfig, benign: &[TraceRecord]) -> Result<DosStats, AttackError> {
    if !(cfg.flood_rate >= 0.0) {
        return Err(AttackError::Params(format!(
            "flood rate must be non-negative, got {}",
            cfg.flood_rate
        )));
    }
    let mut cache_cfg = cfg.cache.clone();
    cache_cfg.record_periods = true;
    let miss_rate = |misses: u64| {
        if benign.is_empty() {
            0.0
        } else {
            misses as f64 / benign.len() as f64
        }
    };

    let mut base = Machine::new(build_cache(&cache_cfg, cfg.seed)?, 0);
    let mut base_misses = 0;
    for r in benign {
        base_misses += !base.access(r.addr, r.op).is_hit() as u64;
        base.cache_mut().take_evictions();
    }

    let mut m = Machine::new(build_cache(&cache_cfg, cfg.seed)?, 0);
    let line = cache_cfg.geometry.line_size as u64;
    let (mut misses, mut flood, mut credit) = (0u64, 0u64, 0.0);
    for r in benign {
        misses += !m.access(r.addr, r.op).is_hit() as u64;
        credit += cfg.flood_rate;
        while credit >= 1.0 {
            m.access(FLOOD_BASE + flood * line, AccessOp::Read);
            flood += 1;
            credit -= 1.0;
        }
        m.cache_mut().take_evictions();
    }

    let cache: &dyn CacheModel = m.cache();
    let p_min = cache_cfg.ttl.period_min_ns;
    let (min_period_ns, at_min_fraction) = match cache.period_history() {
        Some(h) if !h.is_empty() => (
            h.iter().map(|s| s.period).min(),
            Some(h.iter().filter(|s| s.period == p_min).count() as f64 / h.len() as f64),
        ),
        Some(_) => (cache.ttl_state().map(|s| s.current_period), Some(0.0)),
        None => (None, None),
    };
    let mean_period_ns = cache.period_history().map(|h| {
        let end = m.now();
        let mut prev = (0, cache_cfg.ttl.period_base_ns);
        let mut weighted = 0.0;
        for s in h.iter().chain(std::iter::once(&PeriodSample {
            at: end,
            period: 0,
            cause: DecayCause::Periodic,
        })) {
            weighted += (s.at.saturating_sub(prev.0)) as f64 * prev.1 as f64;
            prev = (s.at, s.period);
        }
        if end == 0 {
            cache_cfg.ttl.period_base_ns as f64
        } else {
            weighted / end as f64
        }
    });
    debug_assert!(cache.period_history().is_none_or(|h| h
        .iter()
        .all(|s| s.cause == DecayCause::Periodic || s.period >= p_min)));
    Ok(DosStats {
        benign_accesses: benign.len() as u64,
        flood_accesses: flood,
        baseline_miss_rate: miss_rate(base_misses),
        flood_miss_rate: miss_rate(misses),
        min_period_ns,
        final_period_ns: cache.ttl_state().map(|s| s.current_period),
        at_min_fraction,
        mean_period_ns,
    })
}
