use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::store::RandStore;
use super::{
    AccessKind, AccessOp, AccessOutcome, CacheError, CacheModel, DynamicSet, EvictionCause,
    EvictionKind, EvictionRecord, Latencies, ModelKind,
};
use crate::geometry::CacheGeometry;
use crate::randomizer::IndexMapper;
use crate::ttl::Nanos;

/// Randomized mapping with random-way replacement.
///
/// A miss always replaces the entry in a uniformly chosen way of the dynamic
/// set, even if other ways have empty entries.
#[derive(Debug)]
pub struct RandomizedCache {
    store: RandStore,
    latency: Latencies,
    rng: ChaCha8Rng,
}

impl RandomizedCache {
    pub fn new(mapper: Box<dyn IndexMapper>, latency: Latencies, rng: ChaCha8Rng) -> Self {
        RandomizedCache {
            store: RandStore::new(mapper),
            latency,
            rng,
        }
    }
}

impl CacheModel for RandomizedCache {
    fn kind(&self) -> ModelKind {
        ModelKind::Randomized
    }

    fn geometry(&self) -> &CacheGeometry {
        self.store.geometry()
    }

    fn latencies(&self) -> &Latencies {
        &self.latency
    }

    fn access(&mut self, addr: u64, op: AccessOp, now: Nanos) -> AccessOutcome {
        let mapped = self.store.locate(addr);
        let write = op == AccessOp::Write;
        if let Some(slot) = self.store.find(&mapped) {
            let l = &mut self.store.lines[slot];
            l.dirty |= write;
            l.touched_at = now;
            return AccessOutcome {
                kind: AccessKind::Hit,
                eviction: EvictionKind::None,
                victim_addr: None,
                writeback: false,
                latency_ns: self.latency.t_hit_ns,
            };
        }
        let mi = mapped[self.rng.random_range(0..mapped.len())];
        let slot = self.store.slot(mi.way, mi.index);
        let mut out = AccessOutcome {
            kind: AccessKind::Miss,
            eviction: EvictionKind::None,
            victim_addr: None,
            writeback: false,
            latency_ns: self.latency.t_miss_ns,
        };
        if self.store.lines[slot].valid {
            let rec = self.store.evict(slot, EvictionCause::Conflict, now);
            out.eviction = EvictionKind::Conflict;
            out.victim_addr = Some(rec.addr);
            if rec.dirty {
                out.writeback = true;
                out.latency_ns += self.latency.writeback_penalty_ns;
            }
        }
        self.store.install(slot, &mi, addr, write, 0, now);
        out
    }

    fn contains(&self, addr: u64) -> bool {
        self.store.contains(addr)
    }

    fn occupancy(&self) -> usize {
        self.store.occupied
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.store.resident_lines()
    }

    fn invalidate(&mut self, addr: u64, now: Nanos) -> Option<EvictionRecord> {
        self.store.invalidate(addr, now)
    }

    fn drain(&mut self, now: Nanos) -> Vec<EvictionRecord> {
        self.store.drain(now)
    }

    fn take_evictions(&mut self) -> Vec<EvictionRecord> {
        std::mem::take(&mut self.store.log)
    }

    fn dynamic_set(&self, addr: u64) -> Result<DynamicSet, CacheError> {
        Ok(self.store.dynamic_set(addr))
    }

    fn occupant(&self, way: usize, index: usize) -> Option<u64> {
        self.store.occupant(way, index)
    }
}
