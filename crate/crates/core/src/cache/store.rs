use std::collections::HashMap;

use super::{DynamicSet, EvictionCause, EvictionRecord};
use crate::geometry::CacheGeometry;
use crate::randomizer::{IndexMapper, MappedIndex};
use crate::ttl::Nanos;

#[derive(Debug, Clone, Copy, Default)]
pub(super) struct Line {
    pub valid: bool,
    pub dirty: bool,
    pub tag: u64,
    /// Decay epoch at which the line expires (Clepsydra only). The TTL
    /// counter is `expires_at - epoch`; storing the deadline lets a decay
    /// event touch only the lines that actually expire.
    pub expires_at: u64,
    /// Installing address, kept for cross-checking reconstruction.
    pub addr: u64,
    pub touched_at: Nanos,
}

/// Entry array addressed by (way, index) through an [`IndexMapper`].
#[derive(Debug)]
pub(super) struct RandStore {
    pub mapper: Box<dyn IndexMapper>,
    pub lines: Vec<Line>,
    pub occupied: usize,
    pub log: Vec<EvictionRecord>,
    /// Decay events seen so far.
    pub epoch: u64,
    /// Slots keyed by expiry epoch. Entries go stale when a line is hit or
    /// evicted early; they are checked against `expires_at` when due.
    pub expiry: HashMap<u64, Vec<usize>>,
}

impl RandStore {
    pub fn new(mapper: Box<dyn IndexMapper>) -> Self {
        let n = mapper.geometry().entries();
        RandStore {
            mapper,
            lines: vec![Line::default(); n],
            occupied: 0,
            log: Vec::new(),
            epoch: 0,
            expiry: HashMap::new(),
        }
    }

    pub fn geometry(&self) -> &CacheGeometry {
        self.mapper.geometry()
    }

    #[inline]
    pub fn slot(&self, way: usize, index: usize) -> usize {
        way * self.geometry().lines_per_way + index
    }

    pub fn locate(&self, addr: u64) -> Vec<MappedIndex> {
        (0..self.geometry().ways)
            .map(|w| self.mapper.map(addr, w))
            .collect()
    }

    pub fn dynamic_set(&self, addr: u64) -> DynamicSet {
        DynamicSet {
            indices: self.locate(addr).iter().map(|m| (m.way, m.index)).collect(),
        }
    }

    /// Slot holding the address described by `mapped`, if cached.
    pub fn find(&self, mapped: &[MappedIndex]) -> Option<usize> {
        mapped.iter().find_map(|m| {
            let s = self.slot(m.way, m.index);
            let l = &self.lines[s];
            (l.valid && l.tag == m.out_tag).then_some(s)
        })
    }

    pub fn contains(&self, addr: u64) -> bool {
        self.find(&self.locate(addr)).is_some()
    }

    pub fn occupant(&self, way: usize, index: usize) -> Option<u64> {
        let g = self.geometry();
        if way >= g.ways || index >= g.lines_per_way {
            return None;
        }
        let s = self.slot(way, index);
        self.lines[s].valid.then(|| self.reconstruct(s))
    }

    /// Address stored in `slot`, recovered by inverting the mapping.
    pub fn reconstruct(&self, slot: usize) -> u64 {
        let lpw = self.geometry().lines_per_way;
        let l = &self.lines[slot];
        let addr = self.mapper.unmap(&MappedIndex {
            way: slot / lpw,
            index: slot % lpw,
            out_tag: l.tag,
        });
        assert_eq!(
            addr, l.addr,
            "inverse mapping disagrees with bookkeeping in slot {slot}"
        );
        addr
    }

    pub fn evict(&mut self, slot: usize, cause: EvictionCause, now: Nanos) -> EvictionRecord {
        debug_assert!(self.lines[slot].valid);
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

    /// Fill an empty slot. A `ttl` of zero means the line never decays.
    pub fn install(
        &mut self,
        slot: usize,
        mi: &MappedIndex,
        addr: u64,
        dirty: bool,
        ttl: u32,
        now: Nanos,
    ) {
        let addr = self.mapper.geometry().line_address(addr);
        let l = &mut self.lines[slot];
        debug_assert!(!l.valid);
        *l = Line {
            valid: true,
            dirty,
            tag: mi.out_tag,
            expires_at: u64::MAX,
            addr,
            touched_at: now,
        };
        self.occupied += 1;
        if ttl > 0 {
            self.set_ttl(slot, ttl);
        }
    }

    pub fn set_ttl(&mut self, slot: usize, ttl: u32) {
        let at = self.epoch + ttl as u64;
        self.lines[slot].expires_at = at;
        self.expiry.entry(at).or_default().push(slot);
    }

    /// Remaining TTL of a slot; zero for empty slots.
    pub fn ttl(&self, slot: usize) -> u32 {
        let l = &self.lines[slot];
        if l.valid {
            (l.expires_at - self.epoch).min(u32::MAX as u64) as u32
        } else {
            0
        }
    }

    pub fn resident_lines(&self) -> Vec<u64> {
        self.lines
            .iter()
            .filter(|l| l.valid)
            .map(|l| l.addr)
            .collect()
    }

    pub fn invalidate(&mut self, addr: u64, now: Nanos) -> Option<EvictionRecord> {
        let slot = self.find(&self.locate(addr))?;
        Some(self.evict(slot, EvictionCause::Invalidated, now))
    }

    pub fn drain(&mut self, now: Nanos) -> Vec<EvictionRecord> {
        let mut out = Vec::with_capacity(self.occupied);
        for slot in 0..self.lines.len() {
            if self.lines[slot].valid {
                out.push(self.evict(slot, EvictionCause::Drain, now));
            }
        }
        out
    }
}
