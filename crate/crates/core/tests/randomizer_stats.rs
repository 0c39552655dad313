use clepsydra::randomizer::{prince_core, IndexMapper, MappedIndex, Prince, PrinceMapper, RandKey};
use clepsydra::{build_cache, CacheConfig, CacheGeometry, ModelKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn mapper(ways: usize, lines: usize, seed: u64) -> PrinceMapper {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = RandKey::generate(&mut rng, ways);
    PrinceMapper::new(&key, CacheGeometry::new(ways, lines, 64).unwrap()).unwrap()
}

fn chi_square_p(stat: f64, df: f64) -> f64 {
    ChiSquared::new(df).unwrap().sf(stat)
}

#[test]
fn cipher_is_a_bijection() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for rounds in [1, 3, 11] {
        let c = Prince::new(rng.random(), rounds);
        for _ in 0..100_000 {
            let x: u64 = rng.random();
            assert_eq!(c.decrypt(c.encrypt(x)), x, "rounds {rounds}");
        }
    }
}

#[test]
fn avalanche_flips_half_the_bits() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for rounds in [3, 11] {
        let n = 20_000;
        let mut total = 0u64;
        for _ in 0..n {
            let (x, k): (u64, u128) = (rng.random(), rng.random());
            let bit = 1u64 << rng.random_range(0..64);
            total += (prince_core(x, k, rounds) ^ prince_core(x ^ bit, k, rounds)).count_ones() as u64;
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 32.0).abs() < 1.0, "rounds {rounds}: mean distance {mean}");
    }
}

#[test]
fn golden_vector() {
    assert_eq!(prince_core(0, 0, 3), 0xcaf7_7927_9e0a_8b67);
}

#[test]
fn per_way_indices_are_uniform() {
    let m = mapper(8, 64, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 1_000_000;
    let mut hist = vec![[0u64; 64]; 8];
    for _ in 0..n {
        let a: u64 = rng.random::<u64>() & !63;
        for (w, h) in hist.iter_mut().enumerate() {
            h[m.map(a, w).index] += 1;
        }
    }
    let expected = n as f64 / 64.0;
    for (w, h) in hist.iter().enumerate() {
        let stat: f64 = h.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let p = chi_square_p(stat, 63.0);
        assert!(p > 0.01, "way {w}: chi2 {stat:.1}, p {p:.4}");
    }
}

#[test]
fn ways_are_pairwise_independent() {
    let m = mapper(4, 64, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 1_000_000u64;
    for (a, b) in [(0, 1), (1, 2), (0, 3)] {
        let mut table = vec![[0u64; 64]; 64];
        for _ in 0..n {
            let x: u64 = rng.random::<u64>() & !63;
            table[m.map(x, a).index][m.map(x, b).index] += 1;
        }
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
        let cols: Vec<f64> = (0..64)
            .map(|j| table.iter().map(|r| r[j]).sum::<u64>() as f64)
            .collect();
        let mut stat = 0.0;
        for i in 0..64 {
            for j in 0..64 {
                let e = rows[i] * cols[j] / n as f64;
                stat += (table[i][j] as f64 - e).powi(2) / e;
            }
        }
        let p = chi_square_p(stat, 63.0 * 63.0);
        assert!(p > 0.01, "ways {a},{b}: chi2 {stat:.0}, p {p:.4}");
    }
}

#[test]
fn same_address_collides_across_ways_at_chance_rate() {
    // Over many keys, index agreement between two ways of one address.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (keys, per_key, lines) = (200u64, 1000, 64usize);
    let mut same = 0u64;
    for k in 0..keys {
        let m = mapper(2, lines, 1000 + k);
        for _ in 0..per_key {
            let a: u64 = rng.random::<u64>() & !63;
            same += (m.map(a, 0).index == m.map(a, 1).index) as u64;
        }
    }
    let trials = keys as f64 * per_key as f64;
    let p = 1.0 / lines as f64;
    let sd = (p * (1.0 - p) / trials).sqrt();
    let got = same as f64 / trials;
    assert!((got - p).abs() < 3.0 * sd, "agreement {got}, expected {p}");
}

#[test]
fn unmap_inverts_map() {
    let m = mapper(8, 1024, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100_000 {
        let a: u64 = rng.random::<u64>() & !63;
        let w = rng.random_range(0..8);
        assert_eq!(m.unmap(&m.map(a, w)), a);
    }
}

#[test]
fn distinct_locations_never_share_an_address() {
    let m = mapper(2, 16, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut seen = std::collections::HashMap::new();
    for _ in 0..20_000 {
        let mi = MappedIndex {
            way: rng.random_range(0..2),
            index: rng.random_range(0..16),
            out_tag: rng.random_range(0..1 << 10),
        };
        let a = m.unmap(&mi);
        if let Some(prev) = seen.insert((mi.way, a), mi) {
            assert_eq!(prev, mi);
        }
    }
}

#[test]
fn dynamic_set_overlap_matches_closed_form() {
    let (ways, lines) = (8usize, 64usize);
    let cache = build_cache(
        &CacheConfig::new(ModelKind::Randomized, CacheGeometry::new(ways, lines, 64).unwrap()),
        12,
    )
    .unwrap();
    let target = cache.dynamic_set(0xdead_bec0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let n = 100_000;
    let hits = (0..n)
        .filter(|_| {
            let a = rng.random::<u64>() & !63;
            cache.dynamic_set(a).unwrap().overlap(&target) > 0
        })
        .count();
    let p = 1.0 - (1.0 - 1.0 / lines as f64).powi(ways as i32);
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    let got = hits as f64 / n as f64;
    assert!((got - p).abs() < 3.0 * sd, "overlap {got:.4}, closed form {p:.4}");
}

#[test]
fn dirty_evictions_reconstruct_the_installed_address() {
    use clepsydra::cache::EvictionCause;
    use clepsydra::AccessOp;
    use std::collections::HashSet;

    for model in [ModelKind::Randomized, ModelKind::Clepsydra] {
        let mut cache = build_cache(
            &CacheConfig::new(model, CacheGeometry::new(4, 64, 64).unwrap()),
            14,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut cached = HashSet::new();
        let mut written_back = 0;
        for t in 0..10_000u64 {
            let a = rng.random_range(0..2048u64) * 64;
            let out = cache.access(a, AccessOp::Write, t * 100);
            for rec in cache.take_evictions() {
                assert!(cached.remove(&rec.addr), "{model}: evicted unknown {:#x}", rec.addr);
                assert!(rec.dirty);
                assert_ne!(rec.cause, EvictionCause::Invalidated);
                written_back += 1;
            }
            if !out.is_hit() {
                assert!(cached.insert(a));
            }
        }
        assert!(written_back > 1000, "{model}: only {written_back} evictions");
    }
}
