use std::path::PathBuf;

use crate::config::{Config, SEED_ENV};
use crate::run;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("clepsydra-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn cli(args: &[&str]) -> i32 {
    run(std::iter::once("clepsydra").chain(args.iter().copied()))
}

const SMALL: &str = r#"{"cache": {"model": "randomized", "geometry": {"ways": 4, "lines_per_way": 64}},
                        "workload": {"accesses": 2000, "footprint": 256}}"#;

fn small_config(name: &str) -> PathBuf {
    let p = scratch(name);
    std::fs::write(&p, SMALL).unwrap();
    p
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(cli(&["--help"]), 0);
    assert_eq!(cli(&["--version"]), 0);
    assert_eq!(cli(&["attack", "--help"]), 0);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(cli(&[]), 1);
    assert_eq!(cli(&["analyze", "--table", "3"]), 1);
    assert_eq!(cli(&["simulate", "--frobnicate"]), 1);
    assert_eq!(cli(&["--jobs", "0", "analyze", "--table", "1"]), 1);
    assert_eq!(cli(&["simulate", "--model", "classic", "--compare"]), 1);

    let missing = scratch("no-such-config.json");
    assert_eq!(cli(&["simulate", "--config", missing.to_str().unwrap()]), 1);
    let typo = scratch("typo.json");
    std::fs::write(&typo, r#"{"cahce": {}}"#).unwrap();
    assert_eq!(cli(&["simulate", "--config", typo.to_str().unwrap()]), 1);
}

#[test]
fn bad_traces_are_usage_errors() {
    let cfg = small_config("bad-traces.json");
    let empty = scratch("empty.trace");
    std::fs::write(&empty, "").unwrap();
    let garbage = scratch("garbage.trace");
    std::fs::write(&garbage, "R 0x40\nfetch 12\n").unwrap();
    for t in [&empty, &garbage] {
        let code = cli(&["simulate", "--config", cfg.to_str().unwrap(), "--trace", t.to_str().unwrap()]);
        assert_eq!(code, 1, "{}", t.display());
    }
}

#[test]
fn exhausted_budget_exits_2_but_still_reports() {
    let cfg = small_config("budget.json");
    let out = scratch("budget.csv");
    let code = cli(&[
        "attack", "--mode", "ppp", "--cache", "clepsydra", "--config", cfg.to_str().unwrap(),
        "--budget-ns", "1000", "--trials", "2", "--seed", "1", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3, "{csv}");
}

#[test]
fn analyze_writes_a_labelled_table() {
    let out = scratch("table2.csv");
    assert_eq!(cli(&["analyze", "--table", "2", "--out", out.to_str().unwrap()]), 0);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("# schema: "), "{csv}");
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("goal,"));
    assert_eq!(rows.len(), 5);
    assert!(rows[4].ends_with(",1425,743"), "{}", rows[4]);
}

#[test]
fn generated_traces_replay() {
    let cfg = small_config("replay.json");
    let (trace, a, b) = (scratch("replay.trace"), scratch("replay-a.csv"), scratch("replay-b.csv"));
    let c = cfg.to_str().unwrap();
    assert_eq!(cli(&["gen-trace", "--config", c, "--seed", "4", "--out", trace.to_str().unwrap()]), 0);
    assert_eq!(
        cli(&["simulate", "--config", c, "--seed", "4", "--trace", trace.to_str().unwrap(), "--out", a.to_str().unwrap()]),
        0
    );
    // Without a trace the same workload is generated from the same seed.
    assert_eq!(cli(&["simulate", "--config", c, "--seed", "4", "--out", b.to_str().unwrap()]), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn seed_flag_beats_environment_beats_config() {
    let mut c = Config { seed: 7, ..Default::default() };
    std::env::remove_var(SEED_ENV);
    c.resolve_seed(None).unwrap();
    assert_eq!(c.seed, 7);

    std::env::set_var(SEED_ENV, " 11 ");
    c.resolve_seed(None).unwrap();
    assert_eq!(c.seed, 11);
    c.resolve_seed(Some(13)).unwrap();
    assert_eq!(c.seed, 13);

    std::env::set_var(SEED_ENV, "eleven");
    assert!(c.resolve_seed(None).is_err());
    assert!(c.resolve_seed(Some(1)).is_ok());
    std::env::remove_var(SEED_ENV);
}
