use super::{
    AccessKind, AccessOp, AccessOutcome, CacheError, CacheModel, ClassicCache, DynamicSet,
    EvictionKind, EvictionRecord, Latencies, ModelKind,
};
use crate::geometry::CacheGeometry;
use crate::ttl::{Nanos, PeriodSample, TtlSchedulerState};

/// Private write-through L1 (classic, LRU) in front of another cache.
///
/// Reads that hit the L1 never reach the inner cache. Writes always go
/// through, so dirty state lives only in the inner cache.
pub struct L1Filtered {
    l1: ClassicCache,
    l1_hit_ns: Nanos,
    inner: Box<dyn CacheModel>,
}

impl L1Filtered {
    pub fn new(
        geometry: CacheGeometry,
        l1_hit_ns: Nanos,
        inner: Box<dyn CacheModel>,
    ) -> Result<Self, CacheError> {
        Ok(L1Filtered {
            l1: ClassicCache::new(geometry, Latencies::default())?,
            l1_hit_ns,
            inner,
        })
    }
}

impl CacheModel for L1Filtered {
    fn kind(&self) -> ModelKind {
        self.inner.kind()
    }

    fn geometry(&self) -> &CacheGeometry {
        self.inner.geometry()
    }

    fn latencies(&self) -> &Latencies {
        self.inner.latencies()
    }

    fn access(&mut self, addr: u64, op: AccessOp, now: Nanos) -> AccessOutcome {
        if op == AccessOp::Read && self.l1.contains(addr) {
            self.l1.access(addr, op, now);
            self.inner.advance_to(now);
            return AccessOutcome {
                kind: AccessKind::Hit,
                eviction: EvictionKind::None,
                victim_addr: None,
                writeback: false,
                latency_ns: self.l1_hit_ns,
            };
        }
        let out = self.inner.access(addr, op, now);
        self.l1.access(addr, AccessOp::Read, now);
        self.l1.take_evictions();
        out
    }

    fn advance_to(&mut self, now: Nanos) {
        self.inner.advance_to(now);
    }

    fn contains(&self, addr: u64) -> bool {
        self.inner.contains(addr)
    }

    fn occupancy(&self) -> usize {
        self.inner.occupancy()
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.inner.resident_lines()
    }

    fn invalidate(&mut self, addr: u64, now: Nanos) -> Option<EvictionRecord> {
        self.l1.invalidate(addr, now);
        self.l1.take_evictions();
        self.inner.invalidate(addr, now)
    }

    fn drain(&mut self, now: Nanos) -> Vec<EvictionRecord> {
        self.l1.drain(now);
        self.l1.take_evictions();
        self.inner.drain(now)
    }

    fn take_evictions(&mut self) -> Vec<EvictionRecord> {
        self.inner.take_evictions()
    }

    fn dynamic_set(&self, addr: u64) -> Result<DynamicSet, CacheError> {
        self.inner.dynamic_set(addr)
    }

    fn occupant(&self, way: usize, index: usize) -> Option<u64> {
        self.inner.occupant(way, index)
    }

    fn ttl_state(&self) -> Option<TtlSchedulerState> {
        self.inner.ttl_state()
    }

    fn period_history(&self) -> Option<&[PeriodSample]> {
        self.inner.period_history()
    }
}
