use clepsydra::cache::{ClepsydraCache, Latencies};
use clepsydra::randomizer::{PrinceMapper, RandKey};
use clepsydra::simkit::{gen_workload, lifetime_report, run_trace, RunConfig, WorkloadKind, WorkloadSpec};
use clepsydra::ttl::{check_shark_fin, draw_ttl, DecayCause, DecayTarget, TtlScheduler};
use clepsydra::{build_cache, AccessOp, CacheConfig, CacheGeometry, CacheModel, ModelKind, Nanos, TtlConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn ttl_draws_are_uniform_on_the_default_range() {
    let cfg = TtlConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 256_000;
    let mut hist = [0u64; 257];
    let mut sum = 0u64;
    for _ in 0..n {
        let t = draw_ttl(&mut rng, &cfg);
        assert!((1..=256).contains(&t));
        hist[t as usize] += 1;
        sum += t as u64;
    }
    let mean = sum as f64 / n as f64;
    assert!((mean - 128.5).abs() < 1.0, "mean {mean}");
    let e = n as f64 / 256.0;
    let stat: f64 = hist[1..].iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
    let p = ChiSquared::new(255.0).unwrap().sf(stat);
    assert!(p > 0.01, "chi2 {stat:.0}, p {p:.4}");
}

/// Bare counters standing in for cache entries.
struct Counters(Vec<u32>);

impl DecayTarget for Counters {
    fn decay_tick(&mut self, _now: Nanos) {
        for t in self.0.iter_mut().filter(|t| **t > 0) {
            *t -= 1;
        }
    }

    fn occupied(&self) -> usize {
        self.0.iter().filter(|&&t| t > 0).count()
    }
}

#[test]
fn conflicts_drive_the_period_to_its_floor_and_quiet_restores_it() {
    let cfg = TtlConfig::default();
    let mut s = TtlScheduler::new(cfg).unwrap().with_history();
    let mut target = Counters(vec![u32::MAX; 16]);
    let mut now = 0;
    for _ in 0..10 {
        now += 10;
        s.on_conflict(&mut target, now);
    }
    assert_eq!(s.state().current_period, cfg.period_min_ns);
    // Quiet: the period climbs by one increment per event until it is capped.
    s.advance(&mut target, now + 60_000_000);
    assert_eq!(s.state().current_period, cfg.period_max_ns);
    let h = s.history().unwrap();
    check_shark_fin(h, cfg.period_base_ns, cfg.period_min_ns).unwrap();
    let periodic = h.iter().filter(|p| p.cause == DecayCause::Periodic).count();
    let climb = ((cfg.period_max_ns - cfg.period_min_ns) / cfg.period_increment_ns) as usize;
    assert!(periodic > climb, "{periodic} quiet events, climb needs {climb}");
}

fn clepsydra_cache(ways: usize, lines: usize, seed: u64) -> ClepsydraCache {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = RandKey::generate(&mut rng, ways);
    let mapper = PrinceMapper::new(&key, CacheGeometry::new(ways, lines, 64).unwrap()).unwrap();
    ClepsydraCache::new(Box::new(mapper), TtlConfig::default(), Latencies::default(), rng).unwrap()
}

#[test]
fn each_event_takes_exactly_one_from_every_ttl() {
    let mut c = clepsydra_cache(8, 64, 2);
    let lines: Vec<u64> = (0..200u64).map(|i| 0x40_0000 + i * 64).collect();
    for &a in &lines {
        c.access(a, AccessOp::Read, 0);
    }
    c.take_evictions();
    let mut ttl: Vec<Option<u32>> = lines.iter().map(|&a| c.ttl_of(a)).collect();
    let longest = ttl.iter().flatten().copied().max().unwrap();
    for ev in 1..=longest as u64 {
        c.force_decay_event(ev);
        for (i, &a) in lines.iter().enumerate() {
            let now = c.ttl_of(a);
            let expect = ttl[i].and_then(|t| (t > 1).then(|| t - 1));
            assert_eq!(now, expect, "line {i} after event {ev}");
            ttl[i] = now;
        }
    }
    assert_eq!(c.occupancy(), 0);
}

#[test]
fn recorded_period_series_is_a_sawtooth() {
    let mut cfg = CacheConfig::new(ModelKind::Clepsydra, CacheGeometry::new(8, 256, 64).unwrap());
    cfg.record_periods = true;
    let mut cache = build_cache(&cfg, 3).unwrap();
    let spec = WorkloadSpec {
        accesses: 100_000,
        footprint: 1024,
        ..WorkloadSpec::of(WorkloadKind::Mixed)
    };
    let mut now = 0;
    for r in gen_workload(&spec, 4).unwrap() {
        now += cache.access(r.addr, r.op, now).latency_ns + 50;
    }
    let h = cache.period_history().unwrap();
    assert!(h.iter().any(|p| p.cause == DecayCause::Conflict));
    assert!(h.iter().any(|p| p.cause == DecayCause::Periodic));
    check_shark_fin(h, cfg.ttl.period_base_ns, cfg.ttl.period_min_ns).unwrap();
}

#[test]
fn nothing_outlives_ttl_max_times_period_max() {
    let cfg = CacheConfig::new(ModelKind::Clepsydra, CacheGeometry::new(8, 256, 64).unwrap());
    let bound = cfg.ttl.max_lifetime_ns();
    // Sparse accesses, so entries mostly leave by decay.
    let spec = WorkloadSpec {
        accesses: 20_000,
        footprint: 4096,
        ..WorkloadSpec::of(WorkloadKind::Random)
    };
    let run = RunConfig {
        gap_ns: 20_000,
        ..Default::default()
    };
    let stats = run_trace(build_cache(&cfg, 5).unwrap(), &gen_workload(&spec, 6).unwrap(), &run).unwrap();
    assert!(stats.time_evictions > 1000);
    assert!(stats.lifetimes.max_ns <= bound);
    lifetime_report(&stats, Some(bound)).unwrap();
}

#[test]
fn a_hit_restarts_the_lifetime_clock() {
    let mut c = clepsydra_cache(4, 64, 7);
    let ttl = TtlConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut now = 0;
    let mut longest_stay = 0;
    for n in 0..200u64 {
        let a = 0x9000 + n * 64;
        let installed = now;
        let mut last_touch = now;
        c.access(a, AccessOp::Read, now);
        // Keep touching the line until decay takes it.
        let rec = loop {
            now += rng.random_range(1..ttl.period_max_ns);
            c.advance_to(now);
            if let Some(r) = c.take_evictions().into_iter().find(|r| r.addr == a) {
                break r;
            }
            assert!(c.access(a, AccessOp::Read, now).is_hit());
            last_touch = now;
        };
        assert_eq!(rec.lifetime_ns, rec.at - last_touch);
        assert!(rec.lifetime_ns <= ttl.max_lifetime_ns());
        longest_stay = longest_stay.max(rec.at - installed);
    }
    // Kept alive by hits, a line can stay cached past the bound.
    assert!(longest_stay > ttl.max_lifetime_ns(), "{longest_stay}");
}
