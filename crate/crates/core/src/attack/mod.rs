//! Attacker procedures against any [`CacheModel`](crate::cache::CacheModel).
//!
//! Attacker logic touches the cache only through [`Session::touch`], which
//! reveals the access latency and, for the conflict-aware attacker, whether
//! the access caused a conflict eviction. Everything else the harness does
//! with the cache (flushing the victim's line, reading eviction logs,
//! checking dynamic sets) is ground-truth bookkeeping the attacker never sees.

mod ppp;
mod rttl;
mod scenarios;

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ppp::{
    attack_phase, build_ppp_eviction_set, coin_flip_victim, measure_eviction_rate, prime_prune,
    required_g_size, CandidatePolicy, DetectionStats, PppConfig,
};
pub use rttl::{estimate_rttl, RttlConfig, RttlEstimate};
pub use scenarios::{
    dos_scenario, evict_time_experiment, welch_t_test, DosConfig, DosStats, EvictTimeConfig,
    EvictTimeResult,
};

use crate::analytics::AnalyticsError;
use crate::cache::CacheError;
use crate::simkit::Machine;
use crate::ttl::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    /// Learns whether each of its own accesses caused a conflict eviction.
    ConflictAware,
    /// Sees latencies only.
    TimingOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerModel {
    pub oracle: OracleKind,
    /// Latencies at or above this count as misses.
    pub t_threshold_ns: Nanos,
}

impl Default for AttackerModel {
    fn default() -> Self {
        AttackerModel {
            oracle: OracleKind::ConflictAware,
            t_threshold_ns: 15,
        }
    }
}

impl AttackerModel {
    pub fn timing_only() -> Self {
        AttackerModel {
            oracle: OracleKind::TimingOnly,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProfilingResult {
    /// Priming set, in insertion order.
    pub k: Vec<u64>,
    /// Members of `k` that hit in the attacker's latest probe of `k`.
    pub k_prime: Vec<u64>,
    /// Generalized eviction set, in discovery order.
    pub g: Vec<u64>,
    pub accesses_made: u64,
    pub virtual_time_spent: Nanos,
    /// Conflicts (conflict-aware) or unexpected misses (timing-only) that
    /// triggered a prune.
    pub conflicts_caught: u64,
    /// Victim triggers issued.
    pub iterations: u64,
    /// Ground truth per member of `g`: was it evicted by the victim's access?
    pub g_truth: Vec<bool>,
    /// Ground truth: triggers whose victim access caused a conflict.
    pub victim_conflicts: u64,
}

impl ProfilingResult {
    pub fn true_positives(&self) -> usize {
        self.g_truth.iter().filter(|&&t| t).count()
    }

    pub fn true_positive_rate(&self) -> f64 {
        if self.g.is_empty() {
            0.0
        } else {
            self.true_positives() as f64 / self.g.len() as f64
        }
    }
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("virtual-time budget of {budget_ns} ns exhausted after {} ns", partial.virtual_time_spent)]
    BudgetExceeded {
        budget_ns: Nanos,
        partial: Box<ProfilingResult>,
    },
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("invalid attack parameters: {0}")]
    Params(String),
}

impl AttackError {
    /// The profiling state reached before the budget ran out, if that is
    /// why the attack stopped.
    pub fn partial(&self) -> Option<&ProfilingResult> {
        match self {
            AttackError::BudgetExceeded { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

/// What the attacker learns from one of its accesses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub latency_ns: Nanos,
    pub miss: bool,
    /// `None` for the timing-only attacker.
    pub conflict: Option<bool>,
}

/// Budget ran out; the caller attaches its partial result.
#[derive(Debug)]
pub(crate) struct OutOfBudget;

/// The attacker's window onto the machine.
pub struct Session<'m> {
    machine: &'m mut Machine,
    attacker: AttackerModel,
    start: Nanos,
    budget_ns: Nanos,
    accesses: u64,
}

impl<'m> Session<'m> {
    pub fn new(machine: &'m mut Machine, attacker: AttackerModel, budget_ns: Nanos) -> Self {
        let start = machine.now();
        Session {
            machine,
            attacker,
            start,
            budget_ns,
            accesses: 0,
        }
    }

    pub(crate) fn touch(&mut self, addr: u64) -> Result<Observation, OutOfBudget> {
        let out = self.machine.read(addr);
        self.accesses += 1;
        let obs = Observation {
            latency_ns: out.latency_ns,
            miss: out.latency_ns >= self.attacker.t_threshold_ns,
            conflict: (self.attacker.oracle == OracleKind::ConflictAware)
                .then(|| out.is_conflict()),
        };
        self.check()?;
        Ok(obs)
    }

    pub(crate) fn check(&self) -> Result<(), OutOfBudget> {
        if self.elapsed() > self.budget_ns {
            Err(OutOfBudget)
        } else {
            Ok(())
        }
    }

    pub fn elapsed(&self) -> Nanos {
        self.machine.now() - self.start
    }

    pub fn accesses(&self) -> u64 {
        self.accesses
    }

    /// Harness-side access to the machine, for ground truth and for the
    /// victim.
    pub(crate) fn machine(&mut self) -> &mut Machine {
        self.machine
    }
}

/// Fresh, never-reused attacker lines, disjoint from the victim's region.
pub struct AddressPool {
    rng: ChaCha8Rng,
    used: HashSet<u64>,
    base: u64,
    line_size: u64,
}

/// Attacker addresses live at and above this address; victims below it.
pub const ATTACKER_BASE: u64 = 1 << 40;

impl AddressPool {
    pub fn new(seed: u64, line_size: u64) -> Self {
        AddressPool {
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: HashSet::new(),
            base: ATTACKER_BASE,
            line_size,
        }
    }

    pub fn fresh(&mut self) -> u64 {
        loop {
            let line = self.rng.random_range(0..1u64 << 30);
            if self.used.insert(line) {
                return self.base + line * self.line_size;
            }
        }
    }
}
