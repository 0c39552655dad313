//! Cache organizations behind one access interface.
//!
//! * [`ClassicCache`]: set-associative with LRU replacement.
//! * [`RandomizedCache`]: per-way keyed index randomization with random-way
//!   replacement (ScatterCache-like).
//! * [`ClepsydraCache`]: randomized mapping, per-entry TTL decay driven by a
//!   [`TtlScheduler`](crate::ttl::TtlScheduler), and placement that prefers
//!   empty entries of the dynamic set.
//!
//! Only tags and bookkeeping are modeled; there is no data payload.

mod classic;
mod clepsydra;
mod filter;
mod randomized;
mod store;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{CacheGeometry, GeometryError};
use crate::randomizer::{PrinceMapper, RandKey};
use crate::ttl::{Nanos, PeriodSample, TtlConfig, TtlConfigError, TtlSchedulerState};

pub use classic::ClassicCache;
pub use clepsydra::ClepsydraCache;
pub use filter::L1Filtered;
pub use randomized::RandomizedCache;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Classic,
    Randomized,
    Clepsydra,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::Classic,
        ModelKind::Randomized,
        ModelKind::Clepsydra,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Classic => "classic",
            ModelKind::Randomized => "randomized",
            ModelKind::Clepsydra => "clepsydra",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CacheError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "classic" => Ok(ModelKind::Classic),
            "randomized" | "scattercache" => Ok(ModelKind::Randomized),
            "clepsydra" => Ok(ModelKind::Clepsydra),
            other => Err(CacheError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CacheError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ttl(#[from] TtlConfigError),
    #[error("unknown cache model `{0}`")]
    UnknownModel(String),
    #[error("dynamic sets only exist for randomized models, not `{0}`")]
    NotRandomized(ModelKind),
    #[error("latencies must satisfy t_hit < t_miss, got {t_hit} ns and {t_miss} ns")]
    Latency { t_hit: Nanos, t_miss: Nanos },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessOp {
    #[serde(rename = "R")]
    Read,
    #[serde(rename = "W")]
    Write,
}

impl AccessOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AccessOp::Read => "R",
            AccessOp::Write => "W",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessKind {
    Hit,
    Miss,
}

/// What an access displaced.
///
/// Accesses only ever report `None` or `Conflict`: decay is processed exactly
/// at its scheduled events, so expiries show up as [`EvictionRecord`]s with
/// cause [`EvictionCause::Expired`] rather than on the access that follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionKind {
    None,
    Conflict,
    TimeExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessOutcome {
    pub kind: AccessKind,
    pub eviction: EvictionKind,
    pub victim_addr: Option<u64>,
    pub writeback: bool,
    pub latency_ns: Nanos,
}

impl AccessOutcome {
    pub fn is_hit(&self) -> bool {
        self.kind == AccessKind::Hit
    }

    pub fn is_conflict(&self) -> bool {
        self.eviction == EvictionKind::Conflict
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvictionCause {
    Conflict,
    Expired,
    /// Explicit invalidation of one line (flush).
    Invalidated,
    /// End-of-run drain.
    Drain,
}

/// One line leaving the cache.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvictionRecord {
    /// Line address, reconstructed from the stored tag and location.
    pub addr: u64,
    pub cause: EvictionCause,
    pub dirty: bool,
    pub at: Nanos,
    /// Time since install or last hit.
    pub lifetime_ns: Nanos,
}

/// Writeback of a dirty line to the next level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WritebackRecord {
    pub addr: u64,
    pub at: Nanos,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Latencies {
    pub t_hit_ns: Nanos,
    pub t_miss_ns: Nanos,
    pub writeback_penalty_ns: Nanos,
}

impl Default for Latencies {
    fn default() -> Self {
        Latencies {
            t_hit_ns: 10,
            t_miss_ns: 20,
            writeback_penalty_ns: 20,
        }
    }
}

impl Latencies {
    pub fn validate(&self) -> Result<(), CacheError> {
        if self.t_hit_ns >= self.t_miss_ns {
            return Err(CacheError::Latency {
                t_hit: self.t_hit_ns,
                t_miss: self.t_miss_ns,
            });
        }
        Ok(())
    }
}

/// The W entries, one per way, an address may occupy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DynamicSet {
    pub indices: Vec<(usize, usize)>,
}

impl DynamicSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Number of (way, index) entries shared with `other`.
    pub fn overlap(&self, other: &DynamicSet) -> usize {
        self.indices
            .iter()
            .zip(&other.indices)
            .filter(|(a, b)| a == b)
            .count()
    }
}

/// Common interface of all cache organizations.
///
/// `now` must be non-decreasing across calls on one instance.
pub trait CacheModel: Send {
    fn kind(&self) -> ModelKind;

    fn geometry(&self) -> &CacheGeometry;

    fn latencies(&self) -> &Latencies;

    fn access(&mut self, addr: u64, op: AccessOp, now: Nanos) -> AccessOutcome;

    /// Process time-driven state changes up to `now`.
    fn advance_to(&mut self, _now: Nanos) {}

    /// Ground truth: is the line holding `addr` cached?
    fn contains(&self, addr: u64) -> bool;

    fn occupancy(&self) -> usize;

    /// Line addresses currently cached, in storage order.
    fn resident_lines(&self) -> Vec<u64>;

    /// Remove one line if present (clflush-like).
    fn invalidate(&mut self, addr: u64, now: Nanos) -> Option<EvictionRecord>;

    /// Evict everything, e.g. at the end of a run.
    fn drain(&mut self, now: Nanos) -> Vec<EvictionRecord>;

    /// Evictions since the last call.
    fn take_evictions(&mut self) -> Vec<EvictionRecord>;

    fn dynamic_set(&self, addr: u64) -> Result<DynamicSet, CacheError>;

    /// Ground truth: line address held by entry `(way, index)` of a
    /// randomized cache. `None` if empty or out of range, and always `None`
    /// for the classic model.
    fn occupant(&self, _way: usize, _index: usize) -> Option<u64> {
        None
    }

    fn ttl_state(&self) -> Option<TtlSchedulerState> {
        None
    }

    fn period_history(&self) -> Option<&[PeriodSample]> {
        None
    }
}

/// Everything needed to build a cache instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub model: ModelKind,
    pub geometry: CacheGeometry,
    pub ttl: TtlConfig,
    pub latency: Latencies,
    /// Optional private L1 in front of the modeled cache.
    pub l1: Option<L1Config>,
    /// Keep the full decay-period time series (Clepsydra only).
    pub record_periods: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct L1Config {
    pub geometry: CacheGeometry,
    pub t_hit_ns: Nanos,
}

impl Default for CacheConfig {
    fn default() -> Self {
        CacheConfig {
            model: ModelKind::Clepsydra,
            geometry: CacheGeometry::reference_llc(),
            ttl: TtlConfig::default(),
            latency: Latencies::default(),
            l1: None,
            record_periods: false,
        }
    }
}

impl CacheConfig {
    pub fn new(model: ModelKind, geometry: CacheGeometry) -> Self {
        CacheConfig {
            model,
            geometry,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CacheError> {
        self.geometry.validate()?;
        self.latency.validate()?;
        if self.model == ModelKind::Clepsydra {
            self.ttl.validate()?;
        }
        if let Some(l1) = &self.l1 {
            l1.geometry.validate()?;
        }
        Ok(())
    }
}

/// Build a cache. All randomness (key, replacement, TTL draws) derives from
/// `seed`.
pub fn build_cache(cfg: &CacheConfig, seed: u64) -> Result<Box<dyn CacheModel>, CacheError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let llc: Box<dyn CacheModel> = match cfg.model {
        ModelKind::Classic => Box::new(ClassicCache::new(cfg.geometry, cfg.latency)?),
        ModelKind::Randomized => {
            let key = RandKey::generate(&mut rng, cfg.geometry.ways);
            let mapper = PrinceMapper::new(&key, cfg.geometry)?;
            Box::new(RandomizedCache::new(Box::new(mapper), cfg.latency, rng))
        }
        ModelKind::Clepsydra => {
            let key = RandKey::generate(&mut rng, cfg.geometry.ways);
            let mapper = PrinceMapper::new(&key, cfg.geometry)?;
            let mut c = ClepsydraCache::new(Box::new(mapper), cfg.ttl, cfg.latency, rng)?;
            if cfg.record_periods {
                c = c.with_period_history();
            }
            Box::new(c)
        }
    };
    Ok(match &cfg.l1 {
        Some(l1) => Box::new(L1Filtered::new(l1.geometry, l1.t_hit_ns, llc)?),
        None => llc,
    })
}
