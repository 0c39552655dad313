//! Prime+Prune+Probe: incremental priming, eviction-set construction and the
//! Prime+Probe attack that uses the resulting set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AddressPool, AttackError, AttackerModel, OutOfBudget, ProfilingResult, Session};
use crate::analytics::{min_set_size_for, Law, SecurityParams};
use crate::cache::ModelKind;
use crate::geometry::CacheGeometry;
use crate::simkit::{Machine, TraceRecord};
use crate::ttl::Nanos;

/// Which missing probe addresses become eviction-set candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidatePolicy {
    /// Only the first miss; later misses may be caused by the probe itself.
    FirstMiss,
    /// Every miss. Against decaying caches the attacker cannot tell a
    /// victim-induced eviction from an expiry, so it has to keep them all.
    AllMisses,
}

impl CandidatePolicy {
    pub fn for_model(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Clepsydra => CandidatePolicy::AllMisses,
            _ => CandidatePolicy::FirstMiss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PppConfig {
    /// Size of the priming set `k`; 0 picks 5% of the cache entries.
    pub priming_size: usize,
    pub budget_ns: Nanos,
    /// Upper bound on consecutive re-access passes after one conflict.
    pub max_prune_passes: usize,
    /// Timing-only attacker: re-probe `k` after this many additions.
    pub reprobe_every: usize,
    /// Defaults to [`CandidatePolicy::for_model`].
    pub policy: Option<CandidatePolicy>,
    pub max_iterations: u64,
    /// Seeds the attacker's address choices.
    pub pool_seed: u64,
}

impl Default for PppConfig {
    fn default() -> Self {
        PppConfig {
            priming_size: 0,
            budget_ns: 1_000_000_000,
            max_prune_passes: 32,
            reprobe_every: 16,
            policy: None,
            max_iterations: u64::MAX,
            pool_seed: 0,
        }
    }
}

impl PppConfig {
    pub fn priming_size_for(&self, geometry: &CacheGeometry) -> usize {
        match self.priming_size {
            0 => (geometry.entries() / 20).max(1),
            n => n,
        }
    }
}

/// `|G|` needed for eviction probability `p_e_goal`: the associativity for
/// a classic cache, otherwise the smallest set allowed by the matching law.
pub fn required_g_size(
    kind: ModelKind,
    geometry: &CacheGeometry,
    p_e_goal: f64,
) -> Result<usize, AttackError> {
    let law = match kind {
        ModelKind::Classic => return Ok(geometry.ways),
        ModelKind::Randomized => Law::ScatterEvict,
        ModelKind::Clepsydra => Law::ClepsydraEvict,
    };
    let p = SecurityParams::new(geometry.entries() as u64, geometry.ways as u64)?;
    Ok(min_set_size_for(p_e_goal, law, &p)? as usize)
}

struct Profiler<'m> {
    sess: Session<'m>,
    pool: AddressPool,
    cfg: PppConfig,
    res: ProfilingResult,
}

impl<'m> Profiler<'m> {
    fn new(machine: &'m mut Machine, attacker: AttackerModel, cfg: PppConfig) -> Self {
        let line = machine.cache().geometry().line_size as u64;
        Profiler {
            sess: Session::new(machine, attacker, cfg.budget_ns),
            pool: AddressPool::new(cfg.pool_seed, line),
            cfg,
            res: ProfilingResult::default(),
        }
    }

    fn timing_only(&self) -> bool {
        self.sess.attacker.oracle == super::OracleKind::TimingOnly
    }

    fn touch(&mut self, addr: u64) -> Result<super::Observation, OutOfBudget> {
        // The cache's eviction log is ground truth; keep it from growing.
        let o = self.sess.touch(addr);
        self.sess.machine().cache_mut().take_evictions();
        o
    }

    /// Re-access all of `k` once. Returns the number of suspicious events:
    /// conflicts for the conflict-aware attacker, misses otherwise.
    fn pass(&mut self) -> Result<u64, OutOfBudget> {
        let mut events = 0;
        let mut hits = Vec::with_capacity(self.res.k.len());
        for i in 0..self.res.k.len() {
            let a = self.res.k[i];
            let o = self.touch(a)?;
            if !o.miss {
                hits.push(a);
            }
            events += match o.conflict {
                Some(c) => c as u64,
                None => o.miss as u64,
            };
        }
        self.res.k_prime = hits;
        Ok(events)
    }

    fn prune(&mut self) -> Result<(), OutOfBudget> {
        for _ in 0..self.cfg.max_prune_passes {
            let e = self.pass()?;
            self.res.conflicts_caught += e;
            if e == 0 {
                break;
            }
        }
        Ok(())
    }

    fn top_up(&mut self, target: usize) -> Result<(), OutOfBudget> {
        let mut since_probe = 0;
        while self.res.k.len() < target {
            let a = self.pool.fresh();
            let o = self.touch(a)?;
            self.res.k.push(a);
            match o.conflict {
                Some(true) => {
                    self.res.conflicts_caught += 1;
                    self.prune()?;
                }
                Some(false) => {}
                None => {
                    since_probe += 1;
                    if since_probe >= self.cfg.reprobe_every.max(1) {
                        since_probe = 0;
                        let e = self.pass()?;
                        if e > 0 {
                            self.res.conflicts_caught += e;
                            self.prune()?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn flush_own_lines(&mut self) {
        let m = self.sess.machine();
        let now = m.now();
        for &a in self.res.k.iter().chain(&self.res.g) {
            m.cache_mut().invalidate(a, now);
        }
        m.cache_mut().take_evictions();
        self.res.k.clear();
        self.res.k_prime.clear();
    }

    fn finish(mut self) -> ProfilingResult {
        self.res.accesses_made = self.sess.accesses();
        self.res.virtual_time_spent = self.sess.elapsed();
        self.res
    }

    fn fail(self) -> AttackError {
        let budget_ns = self.cfg.budget_ns;
        AttackError::BudgetExceeded {
            budget_ns,
            partial: Box::new(self.finish()),
        }
    }
}

/// Grow a priming set to `target_size` addresses, re-accessing the whole
/// set after every observed conflict until a pass is conflict-free.
pub fn prime_prune(
    machine: &mut Machine,
    target_size: usize,
    attacker: AttackerModel,
    cfg: &PppConfig,
) -> Result<ProfilingResult, AttackError> {
    let mut p = Profiler::new(machine, attacker, *cfg);
    if target_size == 0 {
        return Ok(p.finish());
    }
    let run = |p: &mut Profiler| -> Result<(), OutOfBudget> {
        p.top_up(target_size)?;
        p.prune()
    };
    match run(&mut p) {
        Ok(()) => Ok(p.finish()),
        Err(OutOfBudget) => Err(p.fail()),
    }
}

/// Build a generalized eviction set for `target` reaching `p_e_goal`.
///
/// Each iteration primes a fresh `k`, flushes the victim's line, lets the victim
/// access `target` once, probes `k` and moves the missing addresses
/// (per the candidate policy) to `G`.
pub fn build_ppp_eviction_set(
    machine: &mut Machine,
    target: u64,
    p_e_goal: f64,
    attacker: AttackerModel,
    cfg: &PppConfig,
) -> Result<ProfilingResult, AttackError> {
    if !(0.0..1.0).contains(&p_e_goal) {
        return Err(AttackError::Params(format!(
            "eviction goal must lie in [0, 1), got {p_e_goal}"
        )));
    }
    let kind = machine.cache().kind();
    let geometry = *machine.cache().geometry();
    let mut p = Profiler::new(machine, attacker, *cfg);
    if p_e_goal == 0.0 {
        return Ok(p.finish());
    }
    let g_goal = required_g_size(kind, &geometry, p_e_goal)?;
    let policy = cfg.policy.unwrap_or(CandidatePolicy::for_model(kind));
    let target = geometry.line_address(target);
    let priming = cfg.priming_size_for(&geometry);

    let run = |p: &mut Profiler| -> Result<(), OutOfBudget> {
        while p.res.g.len() < g_goal && p.res.iterations < p.cfg.max_iterations {
            // A priming set that survived one trigger without a collision
            // would survive every later one too, so each iteration starts
            // over with fresh addresses and none of the old ones cached.
            p.flush_own_lines();
            p.top_up(priming)?;
            if p.timing_only() {
                p.prune()?;
            }

            // Victim: its line is flushed, then it accesses the target once.
            let m = p.sess.machine();
            let now = m.now();
            m.cache_mut().invalidate(target, now);
            let out = m.read(target);
            m.cache_mut().take_evictions();
            p.sess.check()?;
            let evicted = if out.is_conflict() {
                out.victim_addr
            } else {
                None
            };
            p.res.iterations += 1;
            p.res.victim_conflicts += evicted.is_some() as u64;

            let mut missing = Vec::new();
            let mut conflict_seen = false;
            for i in 0..p.res.k.len() {
                let o = p.touch(p.res.k[i])?;
                conflict_seen |= o.conflict == Some(true);
                if o.miss {
                    missing.push(i);
                    if policy == CandidatePolicy::FirstMiss {
                        break;
                    }
                }
            }
            for &i in missing.iter().rev() {
                let a = p.res.k.remove(i);
                p.res.g.push(a);
                p.res.g_truth.push(Some(a) == evicted);
            }
            if conflict_seen {
                p.res.conflicts_caught += 1;
                p.prune()?;
            }
        }
        Ok(())
    };
    match run(&mut p) {
        Ok(()) => Ok(p.finish()),
        Err(OutOfBudget) => Err(p.fail()),
    }
}

/// Fraction of trials in which accessing all of `g` evicts a freshly cached
/// `target`. The cache is flushed before every trial.
pub fn measure_eviction_rate(machine: &mut Machine, g: &[u64], target: u64, trials: usize) -> f64 {
    if trials == 0 {
        return 0.0;
    }
    let mut evicted = 0;
    for _ in 0..trials {
        let now = machine.now();
        machine.cache_mut().drain(now);
        machine.read(target);
        for &a in g {
            machine.read(a);
        }
        if !machine.cache().contains(target) {
            evicted += 1;
        }
        machine.cache_mut().take_evictions();
    }
    evicted as f64 / trials as f64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectionStats {
    pub runs: u64,
    /// Runs in which the victim accessed the target.
    pub positives: u64,
    pub true_positives: u64,
    pub false_positives: u64,
    pub tpr: f64,
    pub fpr: f64,
}

/// Prime with `g`, run each victim trace, probe `g`; a probe miss means
/// "the victim accessed the target". The target line and the attacker's own
/// lines are flushed before every run, so each run places `g` afresh.
pub fn attack_phase(
    machine: &mut Machine,
    g: &[u64],
    target: u64,
    victim_runs: &[Vec<TraceRecord>],
    attacker: AttackerModel,
) -> DetectionStats {
    const MAX_PRIME_PASSES: usize = 8;
    let geometry = *machine.cache().geometry();
    let target = geometry.line_address(target);
    let mut st = DetectionStats::default();
    for run in victim_runs {
        let accessed = run.iter().any(|r| geometry.line_address(r.addr) == target);
        let now = machine.now();
        machine.cache_mut().invalidate(target, now);
        // Without this, members knocked out of the target's entries drift to
        // other ways and stay there.
        for &a in g {
            machine.cache_mut().invalidate(a, now);
        }
        machine.cache_mut().take_evictions();

        let mut sess = Session::new(machine, attacker, Nanos::MAX);
        for _ in 0..MAX_PRIME_PASSES {
            let mut all_hit = true;
            for &a in g {
                all_hit &= !sess.touch(a).expect("unbounded budget").miss;
            }
            if all_hit {
                break;
            }
        }
        for r in run {
            sess.machine().access(r.addr, r.op);
        }
        let mut detected = false;
        for &a in g {
            detected |= sess.touch(a).expect("unbounded budget").miss;
        }
        machine.cache_mut().take_evictions();

        st.runs += 1;
        st.positives += accessed as u64;
        match (accessed, detected) {
            (true, true) => st.true_positives += 1,
            (false, true) => st.false_positives += 1,
            _ => {}
        }
    }
    let negatives = st.runs - st.positives;
    st.tpr = if st.positives == 0 {
        0.0
    } else {
        st.true_positives as f64 / st.positives as f64
    };
    st.fpr = if negatives == 0 {
        0.0
    } else {
        st.false_positives as f64 / negatives as f64
    };
    st
}

/// Single-access victim runs: each one accesses `target` with probability
/// one half, and does nothing otherwise.
pub fn coin_flip_victim(target: u64, runs: usize, seed: u64) -> Vec<Vec<TraceRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs)
        .map(|_| {
            if rng.random_bool(0.5) {
                vec![TraceRecord::read(target)]
            } else {
                Vec::new()
            }
        })
        .collect()
}
