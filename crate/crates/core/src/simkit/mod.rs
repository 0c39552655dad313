//! Virtual clock, traces, workloads and run statistics.
//!
//! Time only moves forward: each access is issued at the current clock,
//! then the clock advances by the access latency plus the configured gap.
//! Decay events scheduled in between fire, in order, before the next access.

mod stats;
mod trace;
mod workload;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use stats::{
    lifetime_report, runstats_csv, runstats_text, AccountingError, LifetimeBoundViolation,
    LifetimeHistogram, RunStats, RUNSTATS_HEADER, RUNSTATS_SCHEMA,
};
pub use trace::{format_trace, parse_trace, read_trace, TraceError, TraceRecord};
pub use workload::{gen_workload, WorkloadError, WorkloadKind, WorkloadSpec};

use crate::cache::{AccessOp, AccessOutcome, CacheModel, EvictionRecord};
use crate::ttl::Nanos;

/// 2 GHz core clock.
pub const CLOCK_PERIOD_NS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Idle time inserted after every access.
    pub gap_ns: Nanos,
    pub clock_period_ns: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            gap_ns: 0,
            clock_period_ns: CLOCK_PERIOD_NS,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("empty trace")]
    EmptyTrace,
    #[error("invalid run configuration: {0}")]
    Config(String),
}

/// A cache plus the virtual clock driving it.
pub struct Machine {
    cache: Box<dyn CacheModel>,
    now: Nanos,
    gap_ns: Nanos,
}

impl Machine {
    pub fn new(cache: Box<dyn CacheModel>, gap_ns: Nanos) -> Self {
        Machine {
            cache,
            now: 0,
            gap_ns,
        }
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn access(&mut self, addr: u64, op: AccessOp) -> AccessOutcome {
        let out = self.cache.access(addr, op, self.now);
        self.now += out.latency_ns + self.gap_ns;
        out
    }

    pub fn read(&mut self, addr: u64) -> AccessOutcome {
        self.access(addr, AccessOp::Read)
    }

    /// Let `dt` ns pass without accesses.
    pub fn idle(&mut self, dt: Nanos) {
        self.now = self.now.saturating_add(dt);
        self.cache.advance_to(self.now);
    }

    pub fn cache(&self) -> &dyn CacheModel {
        self.cache.as_ref()
    }

    pub fn cache_mut(&mut self) -> &mut dyn CacheModel {
        self.cache.as_mut()
    }

    pub fn into_cache(self) -> Box<dyn CacheModel> {
        self.cache
    }
}

/// Replays traces on a [`Machine`] and keeps [`RunStats`].
pub struct Simulator {
    machine: Machine,
    stats: RunStats,
}

impl Simulator {
    pub fn new(cache: Box<dyn CacheModel>, cfg: &RunConfig) -> Result<Self, RunError> {
        if !(cfg.clock_period_ns > 0.0) {
            return Err(RunError::Config(format!(
                "clock period must be positive, got {}",
                cfg.clock_period_ns
            )));
        }
        let stats = RunStats::new(cache.kind(), cfg.clock_period_ns);
        Ok(Simulator {
            machine: Machine::new(cache, cfg.gap_ns),
            stats,
        })
    }

    pub fn replay(&mut self, trace: &[TraceRecord]) {
        for r in trace {
            let out = self.machine.access(r.addr, r.op);
            self.stats.observe_access(&out);
            self.absorb_evictions();
        }
    }

    fn absorb_evictions(&mut self) {
        for rec in self.machine.cache_mut().take_evictions() {
            self.stats.observe_eviction(&rec);
        }
    }

    /// Forget the statistics gathered so far (e.g. after a warm-up pass).
    /// Lines cached now will count as unevicted or evicted later but not as
    /// installs, so [`RunStats::check_accounting`] no longer applies.
    pub fn reset_stats(&mut self) {
        self.absorb_evictions();
        self.stats = RunStats::new(self.stats.model, self.stats.clock_period_ns);
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn machine_mut(&mut self) -> &mut Machine {
        &mut self.machine
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Fire outstanding decay events, drain the cache and return the final
    /// statistics together with the lines that were still cached.
    pub fn finish(mut self) -> (RunStats, Vec<EvictionRecord>) {
        let now = self.machine.now();
        self.machine.cache_mut().advance_to(now);
        self.absorb_evictions();
        let drained = self.machine.cache_mut().drain(now);
        self.machine.cache_mut().take_evictions();
        for rec in &drained {
            self.stats.observe_eviction(rec);
        }
        self.stats.finish(now);
        (self.stats, drained)
    }
}

/// Replay `trace` on a fresh cache and return its statistics.
pub fn run_trace(
    cache: Box<dyn CacheModel>,
    trace: &[TraceRecord],
    cfg: &RunConfig,
) -> Result<RunStats, RunError> {
    if trace.is_empty() {
        return Err(RunError::EmptyTrace);
    }
    let mut sim = Simulator::new(cache, cfg)?;
    sim.replay(trace);
    Ok(sim.finish().0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cache::{build_cache, CacheConfig, ModelKind};
    use crate::geometry::CacheGeometry;

    fn small(model: ModelKind) -> Box<dyn CacheModel> {
        build_cache(
            &CacheConfig::new(model, CacheGeometry::new(4, 64, 64).unwrap()),
            1,
        )
        .unwrap()
    }

    #[test]
    fn single_cold_read() {
        for m in ModelKind::ALL {
            let s = run_trace(small(m), &[TraceRecord::read(0x40)], &RunConfig::default()).unwrap();
            assert_eq!((s.accesses, s.misses, s.miss_rate), (1, 1, 1.0));
            assert_eq!(s.final_ns, 20);
            assert_eq!(s.total_cycles, 40.0);
            s.check_accounting().unwrap();
        }
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(matches!(
            run_trace(small(ModelKind::Classic), &[], &RunConfig::default()),
            Err(RunError::EmptyTrace)
        ));
    }

    #[test]
    fn loop_smaller_than_cache_stops_missing() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::Loop,
            footprint: 100,
            iterations: 1,
            ..Default::default()
        };
        let pass = gen_workload(&spec, 0).unwrap();
        let mut sim = Simulator::new(small(ModelKind::Classic), &RunConfig::default()).unwrap();
        sim.replay(&pass);
        sim.reset_stats();
        for _ in 0..5 {
            sim.replay(&pass);
        }
        assert_eq!(sim.stats().misses, 0);
    }

    #[test]
    fn gap_advances_clock() {
        let cfg = RunConfig {
            gap_ns: 100,
            ..Default::default()
        };
        let t = [TraceRecord::read(0x40), TraceRecord::read(0x40)];
        let s = run_trace(small(ModelKind::Classic), &t, &cfg).unwrap();
        assert_eq!(s.final_ns, 20 + 100 + 10 + 100);
        assert_eq!(s.avg_miss_latency_ns, 20.0);
    }

    #[test]
    fn dirty_lines_are_written_back_exactly_once() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::Random,
            accesses: 5_000,
            footprint: 600,
            write_ratio: 0.5,
            ..Default::default()
        };
        let trace = gen_workload(&spec, 2).unwrap();
        for m in ModelKind::ALL {
            let s = run_trace(small(m), &trace, &RunConfig::default()).unwrap();
            s.check_accounting().unwrap();
            assert!(s.writebacks > 0);
            assert!(s.writebacks <= s.installs);
        }
    }

    #[test]
    fn reproducible() {
        let trace = gen_workload(
            &WorkloadSpec {
                accesses: 20_000,
                footprint: 128,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let a = run_trace(small(ModelKind::Clepsydra), &trace, &RunConfig::default()).unwrap();
        let b = run_trace(small(ModelKind::Clepsydra), &trace, &RunConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
