use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cache::{AccessOutcome, EvictionCause, EvictionRecord, ModelKind};
use crate::ttl::Nanos;

/// Power-of-two histogram of entry lifetimes in ns. Bucket 0 holds zero;
/// bucket `b > 0` holds `[2^(b-1), 2^b)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LifetimeHistogram {
    pub buckets: Vec<u64>,
    pub count: u64,
    pub max_ns: Nanos,
    pub sum_ns: u128,
}

impl LifetimeHistogram {
    pub fn bucket_of(ns: Nanos) -> usize {
        (u64::BITS - ns.leading_zeros()) as usize
    }

    /// Inclusive lower and exclusive upper bound of a bucket.
    pub fn bucket_bounds(b: usize) -> (Nanos, Nanos) {
        match b {
            0 => (0, 1),
            64 => (1 << 63, u64::MAX),
            _ => (1 << (b - 1), 1 << b),
        }
    }

    pub fn record(&mut self, ns: Nanos) {
        let b = Self::bucket_of(ns);
        if self.buckets.len() <= b {
            self.buckets.resize(b + 1, 0);
        }
        self.buckets[b] += 1;
        self.count += 1;
        self.max_ns = self.max_ns.max(ns);
        self.sum_ns += ns as u128;
    }

    pub fn mean_ns(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum_ns as f64 / self.count as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub model: ModelKind,
    pub accesses: u64,
    pub hits: u64,
    pub misses: u64,
    /// Every miss installs a line.
    pub installs: u64,
    pub conflict_evictions: u64,
    pub time_evictions: u64,
    pub invalidations: u64,
    /// Dirty lines written back: conflict victims, expiries and the final drain.
    pub writebacks: u64,
    /// Lines still cached at the end of the run; excluded from the lifetime
    /// histogram.
    pub unevicted: u64,
    pub final_ns: Nanos,
    pub clock_period_ns: f64,
    pub total_cycles: f64,
    pub miss_latency_sum_ns: u64,
    pub avg_miss_latency_ns: f64,
    pub miss_rate: f64,
    pub writebacks_per_cycle: f64,
    pub lifetimes: LifetimeHistogram,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("eviction accounting broken: {0}")]
pub struct AccountingError(pub String);

impl RunStats {
    pub fn new(model: ModelKind, clock_period_ns: f64) -> Self {
        RunStats {
            model,
            accesses: 0,
            hits: 0,
            misses: 0,
            installs: 0,
            conflict_evictions: 0,
            time_evictions: 0,
            invalidations: 0,
            writebacks: 0,
            unevicted: 0,
            final_ns: 0,
            clock_period_ns,
            total_cycles: 0.0,
            miss_latency_sum_ns: 0,
            avg_miss_latency_ns: 0.0,
            miss_rate: 0.0,
            writebacks_per_cycle: 0.0,
            lifetimes: LifetimeHistogram::default(),
        }
    }

    pub fn observe_access(&mut self, out: &AccessOutcome) {
        self.accesses += 1;
        if out.is_hit() {
            self.hits += 1;
        } else {
            self.misses += 1;
            self.installs += 1;
            self.miss_latency_sum_ns += out.latency_ns;
        }
    }

    pub fn observe_eviction(&mut self, rec: &EvictionRecord) {
        match rec.cause {
            EvictionCause::Conflict => self.conflict_evictions += 1,
            EvictionCause::Expired => self.time_evictions += 1,
            EvictionCause::Invalidated => self.invalidations += 1,
            EvictionCause::Drain => self.unevicted += 1,
        }
        if rec.dirty {
            self.writebacks += 1;
        }
        if rec.cause != EvictionCause::Drain {
            self.lifetimes.record(rec.lifetime_ns);
        }
    }

    /// Fill in the derived rates once the run is over.
    pub fn finish(&mut self, final_ns: Nanos) {
        self.final_ns = final_ns;
        self.total_cycles = final_ns as f64 / self.clock_period_ns;
        self.miss_rate = ratio(self.misses as f64, self.accesses as f64);
        self.avg_miss_latency_ns = ratio(self.miss_latency_sum_ns as f64, self.misses as f64);
        self.writebacks_per_cycle = ratio(self.writebacks as f64, self.total_cycles);
    }

    /// Every installed line leaves exactly once: by conflict, expiry,
    /// invalidation or the final drain. Only valid for runs on a cache
    /// that started empty and was drained at the end.
    pub fn check_accounting(&self) -> Result<(), AccountingError> {
        if self.hits + self.misses != self.accesses {
            return Err(AccountingError(format!(
                "hits {} + misses {} != accesses {}",
                self.hits, self.misses, self.accesses
            )));
        }
        let left =
            self.conflict_evictions + self.time_evictions + self.invalidations + self.unevicted;
        if left != self.installs {
            return Err(AccountingError(format!(
                "installs {} != conflict {} + expired {} + invalidated {} + live at end {}",
                self.installs,
                self.conflict_evictions,
                self.time_evictions,
                self.invalidations,
                self.unevicted
            )));
        }
        Ok(())
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub const RUNSTATS_SCHEMA: &str = "# schema: clepsydra-runstats v1";
pub const RUNSTATS_HEADER: &str = "label,model,accesses,hits,misses,installs,conflict_evictions,time_evictions,\
invalidations,writebacks,unevicted,final_ns,total_cycles,avg_miss_latency_ns,miss_rate,writebacks_per_cycle,\
lifetime_count,lifetime_mean_ns,lifetime_max_ns";

/// One CSV row per run, preceded by the schema comment and the header.
pub fn runstats_csv(rows: &[(String, RunStats)]) -> String {
    let mut s = format!("{RUNSTATS_SCHEMA}\n{RUNSTATS_HEADER}\n");
    for (label, r) in rows {
        let _ = writeln!(
            s,
            "{label},{},{},{},{},{},{},{},{},{},{},{},{:.1},{:.6},{:.6},{:.9},{},{:.3},{}",
            r.model,
            r.accesses,
            r.hits,
            r.misses,
            r.installs,
            r.conflict_evictions,
            r.time_evictions,
            r.invalidations,
            r.writebacks,
            r.unevicted,
            r.final_ns,
            r.total_cycles,
            r.avg_miss_latency_ns,
            r.miss_rate,
            r.writebacks_per_cycle,
            r.lifetimes.count,
            r.lifetimes.mean_ns(),
            r.lifetimes.max_ns,
        );
    }
    s
}

pub fn runstats_text(r: &RunStats) -> String {
    format!(
        "model              {}\n\
         accesses           {}\n\
         hits / misses      {} / {}\n\
         miss rate          {:.4}\n\
         avg miss latency   {:.2} ns\n\
         conflict evictions {}\n\
         time evictions     {}\n\
         writebacks         {} ({:.3e} per cycle)\n\
         lines at end       {}\n\
         virtual time       {} ns ({:.0} cycles)\n\
         lifetime           mean {:.0} ns, max {} ns over {} evictions\n",
        r.model,
        r.accesses,
        r.hits,
        r.misses,
        r.miss_rate,
        r.avg_miss_latency_ns,
        r.conflict_evictions,
        r.time_evictions,
        r.writebacks,
        r.writebacks_per_cycle,
        r.unevicted,
        r.final_ns,
        r.total_cycles,
        r.lifetimes.mean_ns(),
        r.lifetimes.max_ns,
        r.lifetimes.count,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("observed lifetime {observed} ns exceeds the bound of {bound} ns")]
pub struct LifetimeBoundViolation {
    pub observed: Nanos,
    pub bound: Nanos,
}

/// Lifetime histogram as CSV. With `bound` set, fails if any evicted entry
/// outlived it.
pub fn lifetime_report(
    stats: &RunStats,
    bound: Option<Nanos>,
) -> Result<String, LifetimeBoundViolation> {
    let h = &stats.lifetimes;
    if let Some(bound) = bound {
        if h.count > 0 && h.max_ns > bound {
            return Err(LifetimeBoundViolation {
                observed: h.max_ns,
                bound,
            });
        }
    }
    let mut s = String::from("# schema: clepsydra-lifetime v1\n");
    let _ = writeln!(
        s,
        "# evicted {} unevicted {} max_ns {}",
        h.count, stats.unevicted, h.max_ns
    );
    s.push_str("bucket_lo_ns,bucket_hi_ns,count\n");
    for (b, &c) in h.buckets.iter().enumerate() {
        if c > 0 {
            let (lo, hi) = LifetimeHistogram::bucket_bounds(b);
            let _ = writeln!(s, "{lo},{hi},{c}");
        }
    }
    Ok(s)
}
