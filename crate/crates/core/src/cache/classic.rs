use super::{
    AccessKind, AccessOp, AccessOutcome, CacheError, CacheModel, DynamicSet, EvictionCause,
    EvictionKind, EvictionRecord, Latencies, ModelKind,
};
use crate::geometry::CacheGeometry;
use crate::ttl::Nanos;

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    valid: bool,
    dirty: bool,
    tag: u64,
    lru: u64,
    addr: u64,
    touched_at: Nanos,
}

/// Set-associative cache with plain index bits and LRU replacement.
#[derive(Debug, Clone)]
pub struct ClassicCache {
    geometry: CacheGeometry,
    latency: Latencies,
    lines: Vec<Line>,
    stamp: u64,
    occupied: usize,
    log: Vec<EvictionRecord>,
}

impl ClassicCache {
    pub fn new(geometry: CacheGeometry, latency: Latencies) -> Result<Self, CacheError> {
        geometry.validate()?;
        Ok(ClassicCache {
            geometry,
            latency,
            lines: vec![Line::default(); geometry.entries()],
            stamp: 0,
            occupied: 0,
            log: Vec::new(),
        })
    }

    pub fn set_index(&self, addr: u64) -> usize {
        ((addr >> self.geometry.offset_bits()) as usize) & (self.geometry.lines_per_way - 1)
    }

    fn tag(&self, addr: u64) -> u64 {
        addr.checked_shr(self.geometry.offset_bits() + self.geometry.index_bits())
            .unwrap_or(0)
    }

    fn set_range(&self, set: usize) -> std::ops::Range<usize> {
        let w = self.geometry.ways;
        set * w..(set + 1) * w
    }

    fn find(&self, addr: u64) -> Option<usize> {
        let tag = self.tag(addr);
        self.set_range(self.set_index(addr))
            .find(|&s| self.lines[s].valid && self.lines[s].tag == tag)
    }

    fn reconstruct(&self, slot: usize) -> u64 {
        let set = slot / self.geometry.ways;
        let l = &self.lines[slot];
        let shift = self.geometry.offset_bits() + self.geometry.index_bits();
        let addr =
            l.tag.checked_shl(shift).unwrap_or(0) | ((set as u64) << self.geometry.offset_bits());
        assert_eq!(
            addr, l.addr,
            "tag/index reconstruction disagrees in slot {slot}"
        );
        addr
    }

    fn evict(&mut self, slot: usize, cause: EvictionCause, now: Nanos) -> EvictionRecord {
        let addr = self.reconstruct(slot);
        let l = &mut self.lines[slot];
        let rec = EvictionRecord {
            addr,
            cause,
            dirty: l.dirty,
            at: now,
            lifetime_ns: now.saturating_sub(l.touched_at),
        };
        *l = Line::default();
        self.occupied -= 1;
        self.log.push(rec);
        rec
    }
}

impl CacheModel for ClassicCache {
    fn kind(&self) -> ModelKind {
        ModelKind::Classic
    }

    fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    fn latencies(&self) -> &Latencies {
        &self.latency
    }

    fn access(&mut self, addr: u64, op: AccessOp, now: Nanos) -> AccessOutcome {
        self.stamp += 1;
        let write = op == AccessOp::Write;
        if let Some(slot) = self.find(addr) {
            let l = &mut self.lines[slot];
            l.lru = self.stamp;
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
        let range = self.set_range(self.set_index(addr));
        let slot = match range.clone().find(|&s| !self.lines[s].valid) {
            Some(s) => s,
            None => range.min_by_key(|&s| self.lines[s].lru).expect("ways > 0"),
        };
        let mut out = AccessOutcome {
            kind: AccessKind::Miss,
            eviction: EvictionKind::None,
            victim_addr: None,
            writeback: false,
            latency_ns: self.latency.t_miss_ns,
        };
        if self.lines[slot].valid {
            let rec = self.evict(slot, EvictionCause::Conflict, now);
            out.eviction = EvictionKind::Conflict;
            out.victim_addr = Some(rec.addr);
            if rec.dirty {
                out.writeback = true;
                out.latency_ns += self.latency.writeback_penalty_ns;
            }
        }
        self.lines[slot] = Line {
            valid: true,
            dirty: write,
            tag: self.tag(addr),
            lru: self.stamp,
            addr: self.geometry.line_address(addr),
            touched_at: now,
        };
        self.occupied += 1;
        out
    }

    fn contains(&self, addr: u64) -> bool {
        self.find(addr).is_some()
    }

    fn occupancy(&self) -> usize {
        self.occupied
    }

    fn resident_lines(&self) -> Vec<u64> {
        self.lines
            .iter()
            .filter(|l| l.valid)
            .map(|l| l.addr)
            .collect()
    }

    fn invalidate(&mut self, addr: u64, now: Nanos) -> Option<EvictionRecord> {
        let slot = self.find(addr)?;
        Some(self.evict(slot, EvictionCause::Invalidated, now))
    }

    fn drain(&mut self, now: Nanos) -> Vec<EvictionRecord> {
        let mut out = Vec::with_capacity(self.occupied);
        for slot in 0..self.lines.len() {
            if self.lines[slot].valid {
                out.push(self.evict(slot, EvictionCause::Drain, now));
            }
        }
        out
    }

    fn take_evictions(&mut self) -> Vec<EvictionRecord> {
        std::mem::take(&mut self.log)
    }

    fn dynamic_set(&self, _addr: u64) -> Result<DynamicSet, CacheError> {
        Err(CacheError::NotRandomized(ModelKind::Classic))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cache() -> ClassicCache {
        ClassicCache::new(CacheGeometry::new(2, 4, 64).unwrap(), Latencies::default()).unwrap()
    }

    // Addresses with the same set index in a 4-set, 64 B-line cache.
    fn congruent(i: u64) -> u64 {
        i * 4 * 64
    }

    #[test]
    fn evicts_least_recently_used() {
        let mut c = cache();
        c.access(congruent(1), AccessOp::Read, 0);
        c.access(congruent(2), AccessOp::Read, 1);
        c.access(congruent(1), AccessOp::Read, 2);
        let o = c.access(congruent(3), AccessOp::Read, 3);
        assert_eq!(o.eviction, EvictionKind::Conflict);
        assert_eq!(o.victim_addr, Some(congruent(2)));
        assert!(c.contains(congruent(1)));
    }

    #[test]
    fn dirty_victim_costs_writeback() {
        let mut c = cache();
        c.access(congruent(1), AccessOp::Write, 0);
        c.access(congruent(2), AccessOp::Read, 1);
        let o = c.access(congruent(3), AccessOp::Read, 2);
        assert!(o.writeback);
        assert_eq!(o.latency_ns, 40);
    }

    #[test]
    fn other_sets_are_independent() {
        let mut c = cache();
        for i in 0..4u64 {
            c.access(i * 64, AccessOp::Read, i);
        }
        assert_eq!(c.occupancy(), 4);
        assert!(c.take_evictions().is_empty());
    }

    #[test]
    fn drain_reports_every_line() {
        let mut c = cache();
        c.access(0x40, AccessOp::Write, 0);
        c.access(0x80, AccessOp::Read, 0);
        let drained = c.drain(100);
        assert_eq!(drained.len(), 2);
        assert_eq!(drained.iter().filter(|r| r.dirty).count(), 1);
        assert_eq!(c.occupancy(), 0);
    }
}
