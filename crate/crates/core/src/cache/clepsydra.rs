use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::store::RandStore;
use super::{
    AccessKind, AccessOp, AccessOutcome, CacheError, CacheModel, DynamicSet, EvictionCause,
    EvictionKind, EvictionRecord, Latencies, ModelKind, WritebackRecord,
};
use crate::geometry::CacheGeometry;
use crate::randomizer::IndexMapper;
use crate::ttl::{
    draw_ttl, DecayTarget, Nanos, PeriodSample, TtlConfig, TtlScheduler, TtlSchedulerState,
};

impl RandStore {
    /// Invalidate every valid entry whose TTL is zero.
    fn flush_expired(&mut self, now: Nanos) -> Vec<WritebackRecord> {
        let mut out = Vec::new();
        let Some(due) = self.expiry.remove(&self.epoch) else {
            return out;
        };
        for slot in due {
            let l = &self.lines[slot];
            if l.valid && l.expires_at == self.epoch {
                let rec = self.evict(slot, EvictionCause::Expired, now);
                if rec.dirty {
                    out.push(WritebackRecord {
                        addr: rec.addr,
                        at: now,
                    });
                }
            }
        }
        out
    }
}

impl DecayTarget for RandStore {
    fn decay_tick(&mut self, now: Nanos) {
        self.epoch += 1;
        self.flush_expired(now);
    }

    fn occupied(&self) -> usize {
        self.occupied
    }
}

/// Randomized cache whose entries decay.
///
/// Invariant: an entry is occupied exactly when its TTL is positive.
#[derive(Debug)]
pub struct ClepsydraCache {
    store: RandStore,
    sched: TtlScheduler,
    latency: Latencies,
    rng: ChaCha8Rng,
}

impl ClepsydraCache {
    pub fn new(
        mapper: Box<dyn IndexMapper>,
        ttl: TtlConfig,
        latency: Latencies,
        rng: ChaCha8Rng,
    ) -> Result<Self, CacheError> {
        Ok(ClepsydraCache {
            store: RandStore::new(mapper),
            sched: TtlScheduler::new(ttl)?,
            latency,
            rng,
        })
    }

    pub fn with_period_history(mut self) -> Self {
        self.sched = self.sched.with_history();
        self
    }

    pub fn scheduler(&self) -> &TtlScheduler {
        &self.sched
    }

    /// Invalidate entries whose TTL reached zero and return the writebacks
    /// they cause. Decay events call this after every decrement, so between
    /// events it finds nothing.
    pub fn flush_expired(&mut self, now: Nanos) -> Vec<WritebackRecord> {
        self.store.flush_expired(now)
    }

    /// Remaining TTL of the line holding `addr`, if cached.
    pub fn ttl_of(&self, addr: u64) -> Option<u32> {
        let slot = self.store.find(&self.store.locate(addr))?;
        Some(self.store.ttl(slot))
    }

    /// Fire one periodic decay event right now, regardless of the schedule.
    pub fn force_decay_event(&mut self, now: Nanos) {
        self.sched.on_decay_event(&mut self.store, now);
    }
}

impl CacheModel for ClepsydraCache {
    fn kind(&self) -> ModelKind {
        ModelKind::Clepsydra
    }

    fn geometry(&self) -> &CacheGeometry {
        self.store.geometry()
    }

    fn latencies(&self) -> &Latencies {
        &self.latency
    }

    fn access(&mut self, addr: u64, op: AccessOp, now: Nanos) -> AccessOutcome {
        self.advance_to(now);
        let mapped = self.store.locate(addr);
        let write = op == AccessOp::Write;
        if let Some(slot) = self.store.find(&mapped) {
            let ttl = draw_ttl(&mut self.rng, self.sched.config());
            self.store.set_ttl(slot, ttl);
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
        let mut out = AccessOutcome {
            kind: AccessKind::Miss,
            eviction: EvictionKind::None,
            victim_addr: None,
            writeback: false,
            latency_ns: self.latency.t_miss_ns,
        };
        let free: Vec<usize> = (0..mapped.len())
            .filter(|&i| !self.store.lines[self.store.slot(mapped[i].way, mapped[i].index)].valid)
            .collect();
        let pick = if free.is_empty() {
            let pick = self.rng.random_range(0..mapped.len());
            let slot = self.store.slot(mapped[pick].way, mapped[pick].index);
            let rec = self.store.evict(slot, EvictionCause::Conflict, now);
            out.eviction = EvictionKind::Conflict;
            out.victim_addr = Some(rec.addr);
            if rec.dirty {
                out.writeback = true;
                out.latency_ns += self.latency.writeback_penalty_ns;
            }
            // The forced decay event runs before the new line is installed.
            self.sched.on_conflict(&mut self.store, now);
            pick
        } else {
            free[self.rng.random_range(0..free.len())]
        };
        let mi = mapped[pick];
        let slot = self.store.slot(mi.way, mi.index);
        let ttl = draw_ttl(&mut self.rng, self.sched.config());
        self.store.install(slot, &mi, addr, write, ttl, now);
        out
    }

    fn advance_to(&mut self, now: Nanos) {
        self.sched.advance(&mut self.store, now);
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

    fn ttl_state(&self) -> Option<TtlSchedulerState> {
        Some(*self.sched.state())
    }

    fn period_history(&self) -> Option<&[PeriodSample]> {
        self.sched.history()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randomizer::{PrinceMapper, RandKey};
    use rand::SeedableRng;

    fn cache(ways: usize, lines: usize, ttl: TtlConfig, seed: u64) -> ClepsydraCache {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let key = RandKey::generate(&mut rng, ways);
        let g = CacheGeometry::new(ways, lines, 64).unwrap();
        ClepsydraCache::new(
            Box::new(PrinceMapper::new(&key, g).unwrap()),
            ttl,
            Latencies::default(),
            rng,
        )
        .unwrap()
    }

    #[test]
    fn flush_on_empty_cache_is_empty() {
        let mut c = cache(4, 16, TtlConfig::default(), 0);
        assert!(c.flush_expired(0).is_empty());
        c.force_decay_event(10);
        assert_eq!(c.occupancy(), 0);
    }

    #[test]
    fn dirty_entry_with_ttl_one_writes_back_on_next_event() {
        let ttl = TtlConfig {
            ttl_min: 1,
            ttl_max: 1,
            ..TtlConfig::default()
        };
        let mut c = cache(4, 16, ttl, 1);
        c.access(0x7000, AccessOp::Write, 0);
        assert_eq!(c.ttl_of(0x7000), Some(1));
        c.force_decay_event(50);
        assert!(!c.contains(0x7000));
        let log = c.take_evictions();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].addr, 0x7000);
        assert_eq!(log[0].cause, EvictionCause::Expired);
        assert!(log[0].dirty);
        assert_eq!(log[0].lifetime_ns, 50);
    }

    #[test]
    fn hit_redraws_ttl() {
        let ttl = TtlConfig {
            ttl_min: 3,
            ttl_max: 3,
            ..TtlConfig::default()
        };
        let mut c = cache(2, 16, ttl, 2);
        c.access(0x40, AccessOp::Read, 0);
        c.force_decay_event(1);
        c.force_decay_event(2);
        assert_eq!(c.ttl_of(0x40), Some(1));
        assert!(c.access(0x40, AccessOp::Read, 3).is_hit());
        assert_eq!(c.ttl_of(0x40), Some(3));
    }

    #[test]
    fn prefers_empty_entries() {
        // One line per way: W addresses fit without any conflict.
        let mut c = cache(4, 1, TtlConfig::default(), 3);
        for i in 0..4u64 {
            let o = c.access(0x1000 * (i + 1), AccessOp::Read, i);
            assert_eq!(o.eviction, EvictionKind::None);
        }
        assert_eq!(c.occupancy(), 4);
        let o = c.access(0x9000, AccessOp::Write, 10);
        assert_eq!(o.eviction, EvictionKind::Conflict);
        assert!(!o.writeback);
        assert_eq!(c.ttl_state().unwrap().conflicts_seen, 1);
        assert_eq!(c.ttl_state().unwrap().current_period, 195_000 / 4);
    }

    #[test]
    fn dirty_conflict_victim_adds_penalty() {
        let mut c = cache(1, 1, TtlConfig::default(), 4);
        c.access(0x1000, AccessOp::Write, 0);
        let o = c.access(0x2000, AccessOp::Read, 1);
        assert!(o.writeback);
        assert_eq!(o.victim_addr, Some(0x1000));
        assert_eq!(o.latency_ns, 40);
    }

    #[test]
    fn occupancy_tracks_ttl() {
        let mut c = cache(4, 64, TtlConfig::default(), 5);
        for i in 0..200u64 {
            c.access(i * 0x40, AccessOp::Read, i * 20);
        }
        let mut now = 4000;
        while c.occupancy() > 0 {
            c.force_decay_event(now);
            now += 100;
            for (slot, l) in c.store.lines.iter().enumerate() {
                assert_eq!(l.valid, c.store.ttl(slot) > 0);
            }
        }
    }
}
