//! Per-entry time-to-live draws and the global decay-event scheduler.
//!
//! Decay happens in discrete events. Every event decrements the TTL of all
//! occupied entries by one. The spacing between events (the period) is the
//! reciprocal of the reduction rate: it grows by a constant after each quiet
//! event and is divided by `conflict_divisor` whenever a conflict forces an
//! immediate event, which produces the sawtooth ("shark fin") rate profile.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual time in nanoseconds.
pub type Nanos = u64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TtlConfigError {
    #[error("ttl_min ({min}) must be positive and not exceed ttl_max ({max})")]
    TtlRange { min: u32, max: u32 },
    #[error("periods must satisfy 0 < min ({min}) <= base ({base}) <= max ({max})")]
    PeriodOrder { min: Nanos, base: Nanos, max: Nanos },
    #[error("period increment must be positive")]
    ZeroIncrement,
    #[error("conflict divisor must be at least 1, got {0}")]
    Divisor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TtlConfig {
    pub ttl_min: u32,
    pub ttl_max: u32,
    pub period_base_ns: Nanos,
    pub period_min_ns: Nanos,
    pub period_max_ns: Nanos,
    pub period_increment_ns: Nanos,
    pub conflict_divisor: f64,
}

impl Default for TtlConfig {
    /// TTLs in [1, 256] and a 195 us maximum period: an untouched entry
    /// lives at most about 50 ms.
    fn default() -> Self {
        TtlConfig {
            ttl_min: 1,
            ttl_max: 256,
            period_base_ns: 195_000,
            period_min_ns: 100,
            period_max_ns: 195_000,
            period_increment_ns: 1_000,
            conflict_divisor: 4.0,
        }
    }
}

impl TtlConfig {
    /// A schedule whose periodic events never fire within any practical run
    /// and whose TTLs cannot be exhausted by conflict-triggered events.
    pub fn no_decay() -> Self {
        const FAR: Nanos = 1 << 60;
        TtlConfig {
            ttl_min: u32::MAX / 2,
            ttl_max: u32::MAX / 2,
            period_base_ns: FAR,
            period_min_ns: FAR,
            period_max_ns: FAR,
            period_increment_ns: 1,
            conflict_divisor: 4.0,
        }
    }

    pub fn validate(&self) -> Result<(), TtlConfigError> {
        if self.ttl_min == 0 || self.ttl_min > self.ttl_max {
            return Err(TtlConfigError::TtlRange {
                min: self.ttl_min,
                max: self.ttl_max,
            });
        }
        if self.period_min_ns == 0
            || self.period_min_ns > self.period_base_ns
            || self.period_base_ns > self.period_max_ns
        {
            return Err(TtlConfigError::PeriodOrder {
                min: self.period_min_ns,
                base: self.period_base_ns,
                max: self.period_max_ns,
            });
        }
        if self.period_increment_ns == 0 {
            return Err(TtlConfigError::ZeroIncrement);
        }
        if !(self.conflict_divisor >= 1.0) {
            return Err(TtlConfigError::Divisor(self.conflict_divisor));
        }
        Ok(())
    }

    /// Longest time an entry can stay cached without being hit.
    pub fn max_lifetime_ns(&self) -> Nanos {
        (self.ttl_max as Nanos).saturating_mul(self.period_max_ns)
    }
}

/// Uniform TTL in `[ttl_min, ttl_max]`.
pub fn draw_ttl<R: Rng + ?Sized>(rng: &mut R, cfg: &TtlConfig) -> u32 {
    rng.random_range(cfg.ttl_min..=cfg.ttl_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TtlSchedulerState {
    pub current_period: Nanos,
    pub next_event_at: Nanos,
    pub events_fired: u64,
    pub conflicts_seen: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecayCause {
    Periodic,
    Conflict,
}

/// Period in force after an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodSample {
    pub at: Nanos,
    pub period: Nanos,
    pub cause: DecayCause,
}

/// Storage that decay events act on.
pub trait DecayTarget {
    /// Decrement every occupied TTL and invalidate the ones reaching zero.
    fn decay_tick(&mut self, now: Nanos);

    fn occupied(&self) -> usize;
}

#[derive(Debug, Clone)]
pub struct TtlScheduler {
    cfg: TtlConfig,
    state: TtlSchedulerState,
    history: Option<Vec<PeriodSample>>,
}

impl TtlScheduler {
    pub fn new(cfg: TtlConfig) -> Result<Self, TtlConfigError> {
        cfg.validate()?;
        Ok(TtlScheduler {
            cfg,
            state: TtlSchedulerState {
                current_period: cfg.period_base_ns,
                next_event_at: cfg.period_base_ns,
                events_fired: 0,
                conflicts_seen: 0,
            },
            history: None,
        })
    }

    /// Record the period after every event.
    pub fn with_history(mut self) -> Self {
        self.history = Some(Vec::new());
        self
    }

    pub fn config(&self) -> &TtlConfig {
        &self.cfg
    }

    pub fn state(&self) -> &TtlSchedulerState {
        &self.state
    }

    pub fn history(&self) -> Option<&[PeriodSample]> {
        self.history.as_deref()
    }

    fn record(&mut self, at: Nanos, cause: DecayCause) {
        if let Some(h) = self.history.as_mut() {
            h.push(PeriodSample {
                at,
                period: self.state.current_period,
                cause,
            });
        }
    }

    fn tick<T: DecayTarget + ?Sized>(target: &mut T, now: Nanos) {
        if target.occupied() > 0 {
            target.decay_tick(now);
        }
    }

    /// Periodic event: decay, lengthen the period, schedule the next event.
    pub fn on_decay_event<T: DecayTarget + ?Sized>(&mut self, target: &mut T, now: Nanos) -> Nanos {
        Self::tick(target, now);
        self.state.events_fired += 1;
        self.state.current_period = self
            .state
            .current_period
            .saturating_add(self.cfg.period_increment_ns)
            .min(self.cfg.period_max_ns);
        self.state.next_event_at = now.saturating_add(self.state.current_period);
        self.record(now, DecayCause::Periodic);
        self.state.next_event_at
    }

    /// A conflict eviction happened: decay immediately and shorten the period.
    pub fn on_conflict<T: DecayTarget + ?Sized>(&mut self, target: &mut T, now: Nanos) {
        Self::tick(target, now);
        self.state.events_fired += 1;
        self.state.conflicts_seen += 1;
        let divided =
            (self.state.current_period as f64 / self.cfg.conflict_divisor).floor() as Nanos;
        self.state.current_period = divided.max(self.cfg.period_min_ns);
        self.state.next_event_at = now.saturating_add(self.state.current_period);
        self.record(now, DecayCause::Conflict);
    }

    /// Fire every periodic event scheduled at or before `now`.
    pub fn advance<T: DecayTarget + ?Sized>(&mut self, target: &mut T, now: Nanos) {
        while self.state.next_event_at <= now {
            let at = self.state.next_event_at;
            self.on_decay_event(target, at);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error(
    "period series breaks the sawtooth shape at sample {index}: {prev} ns -> {next} ns ({cause:?})"
)]
pub struct SharkFinViolation {
    pub index: usize,
    pub prev: Nanos,
    pub next: Nanos,
    pub cause: DecayCause,
}

/// Between conflicts the period never shrinks; a conflict always shrinks it
/// unless it is already at `period_min`.
pub fn check_shark_fin(
    history: &[PeriodSample],
    initial_period: Nanos,
    period_min: Nanos,
) -> Result<(), SharkFinViolation> {
    let mut prev = initial_period;
    for (index, s) in history.iter().enumerate() {
        let ok = match s.cause {
            DecayCause::Periodic => s.period >= prev,
            DecayCause::Conflict => {
                s.period < prev || (prev == period_min && s.period == period_min)
            }
        };
        if !ok {
            return Err(SharkFinViolation {
                index,
                prev,
                next: s.period,
                cause: s.cause,
            });
        }
        prev = s.period;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Plain vector of TTL counters; zero means empty.
    #[derive(Default)]
    struct Counters {
        ttl: Vec<u32>,
        expired: Vec<(usize, Nanos)>,
    }

    impl DecayTarget for Counters {
        fn decay_tick(&mut self, now: Nanos) {
            for (i, t) in self.ttl.iter_mut().enumerate() {
                if *t > 0 {
                    *t -= 1;
                    if *t == 0 {
                        self.expired.push((i, now));
                    }
                }
            }
        }

        fn occupied(&self) -> usize {
            self.ttl.iter().filter(|&&t| t > 0).count()
        }
    }

    fn cfg() -> TtlConfig {
        TtlConfig::default()
    }

    #[test]
    fn default_lifetime_is_about_fifty_ms() {
        let c = cfg();
        c.validate().unwrap();
        assert_eq!(c.max_lifetime_ns(), 256 * 195_000);
        assert!((c.max_lifetime_ns() as f64 - 50e6).abs() < 0.01 * 50e6);
    }

    #[test]
    fn rejects_invalid_configs() {
        let mut c = cfg();
        c.ttl_min = 300;
        assert!(matches!(c.validate(), Err(TtlConfigError::TtlRange { .. })));
        let mut c = cfg();
        c.period_min_ns = 200_000;
        assert!(matches!(
            c.validate(),
            Err(TtlConfigError::PeriodOrder { .. })
        ));
        let mut c = cfg();
        c.period_increment_ns = 0;
        assert_eq!(c.validate(), Err(TtlConfigError::ZeroIncrement));
        let mut c = cfg();
        c.conflict_divisor = 0.5;
        assert!(matches!(c.validate(), Err(TtlConfigError::Divisor(_))));
        TtlConfig::no_decay().validate().unwrap();
    }

    #[test]
    fn draw_degenerate_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = TtlConfig {
            ttl_min: 5,
            ttl_max: 5,
            ..cfg()
        };
        assert!((0..1000).all(|_| draw_ttl(&mut rng, &c) == 5));
    }

    #[test]
    fn draw_mean_and_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = cfg();
        let n = 100_000;
        let mut sum = 0u64;
        for _ in 0..n {
            let t = draw_ttl(&mut rng, &c);
            assert!((1..=256).contains(&t));
            sum += t as u64;
        }
        let mean = sum as f64 / n as f64;
        assert!((mean - 128.5).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn empty_target_only_grows_period() {
        let c = TtlConfig {
            period_base_ns: 10_000,
            ..cfg()
        };
        let mut s = TtlScheduler::new(c).unwrap();
        let mut t = Counters::default();
        let next = s.on_decay_event(&mut t, 10_000);
        assert_eq!(s.state().current_period, 11_000);
        assert_eq!(next, 21_000);
        // clamp at the maximum
        let c = cfg();
        let mut s = TtlScheduler::new(c).unwrap();
        s.on_decay_event(&mut t, c.period_base_ns);
        assert_eq!(s.state().current_period, c.period_max_ns);
    }

    #[test]
    fn entry_expires_on_third_event() {
        let mut s = TtlScheduler::new(cfg()).unwrap();
        let mut t = Counters {
            ttl: vec![3, 0],
            ..Default::default()
        };
        let mut now = s.state().next_event_at;
        for _ in 0..2 {
            now = s.on_decay_event(&mut t, now);
            assert!(t.expired.is_empty());
        }
        s.on_decay_event(&mut t, now);
        assert_eq!(t.expired, vec![(0, now)]);
    }

    #[test]
    fn conflict_quarters_the_period() {
        let c = cfg();
        let mut s = TtlScheduler::new(c).unwrap();
        let mut t = Counters {
            ttl: vec![10],
            ..Default::default()
        };
        s.on_conflict(&mut t, 5);
        assert_eq!(s.state().current_period, c.period_max_ns / 4);
        assert_eq!(s.state().next_event_at, 5 + c.period_max_ns / 4);
        assert_eq!(t.ttl[0], 9, "conflict fires a decay event");
        assert_eq!(s.state().conflicts_seen, 1);
    }

    #[test]
    fn conflict_at_min_period_stays() {
        let c = TtlConfig {
            period_base_ns: 100,
            ..cfg()
        };
        let mut s = TtlScheduler::new(c).unwrap();
        s.on_conflict(&mut Counters::default(), 0);
        assert_eq!(s.state().current_period, 100);
    }

    #[test]
    fn conflict_burst_closed_form() {
        let c = cfg();
        for burst in 0..8u32 {
            let mut s = TtlScheduler::new(c).unwrap();
            for i in 0..burst {
                s.on_conflict(&mut Counters::default(), i as Nanos);
            }
            let expected = (c.period_max_ns / 4u64.pow(burst)).max(c.period_min_ns);
            assert_eq!(s.state().current_period, expected, "burst {burst}");
        }
    }

    #[test]
    fn repeated_conflicts_converge_to_min_and_quiet_returns_to_max() {
        let c = cfg();
        let mut s = TtlScheduler::new(c).unwrap().with_history();
        let mut t = Counters::default();
        let mut now = 0;
        for _ in 0..20 {
            s.on_conflict(&mut t, now);
            now += 50;
        }
        assert_eq!(s.state().current_period, c.period_min_ns);
        let mut events = 0;
        while s.state().current_period < c.period_max_ns {
            now = s.state().next_event_at;
            s.advance(&mut t, now);
            events += 1;
        }
        assert_eq!(s.state().current_period, c.period_max_ns);
        assert_eq!(
            events,
            (c.period_max_ns - c.period_min_ns).div_ceil(c.period_increment_ns)
        );
        check_shark_fin(s.history().unwrap(), c.period_base_ns, c.period_min_ns).unwrap();
    }

    #[test]
    fn advance_fires_all_due_events_in_order() {
        let c = TtlConfig {
            period_base_ns: 1_000,
            period_min_ns: 100,
            period_increment_ns: 1_000,
            ..cfg()
        };
        let mut s = TtlScheduler::new(c).unwrap().with_history();
        s.advance(&mut Counters::default(), 10_000);
        let at: Vec<Nanos> = s.history().unwrap().iter().map(|p| p.at).collect();
        assert_eq!(at, vec![1_000, 3_000, 6_000, 10_000]);
        assert_eq!(s.state().next_event_at, 15_000);
    }

    #[test]
    fn shark_fin_checker_flags_violations() {
        let h = [
            PeriodSample {
                at: 1,
                period: 1000,
                cause: DecayCause::Periodic,
            },
            PeriodSample {
                at: 2,
                period: 900,
                cause: DecayCause::Periodic,
            },
        ];
        assert!(check_shark_fin(&h, 1000, 100).is_err());
        let h = [PeriodSample {
            at: 1,
            period: 1000,
            cause: DecayCause::Conflict,
        }];
        assert!(check_shark_fin(&h, 1000, 100).is_err());
        let h = [PeriodSample {
            at: 1,
            period: 100,
            cause: DecayCause::Conflict,
        }];
        assert!(check_shark_fin(&h, 100, 100).is_ok());
    }
}
