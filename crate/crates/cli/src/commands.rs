use std::fmt::Write as _;

use clepsydra::analytics::{
    expected_conflicts_for, min_set_size_for, monte_carlo_oracle, profiling_summary, table1,
    table2, Experiment, Scheme, SecurityParams, PAPER_GOALS,
};
use clepsydra::attack::{
    attack_phase, build_ppp_eviction_set, coin_flip_victim, dos_scenario, evict_time_experiment,
    measure_eviction_rate, required_g_size, AttackError, DosConfig, EvictTimeConfig, OracleKind,
    ProfilingResult,
};
use clepsydra::simkit::{
    format_trace, gen_workload, lifetime_report, read_trace, runstats_csv, runstats_text,
    Machine, RunStats, Simulator, TraceError, TraceRecord, WorkloadKind,
};
use clepsydra::ttl::DecayCause;
use clepsydra::{build_cache, CacheConfig, ModelKind};
use rayon::prelude::*;

use crate::config::Config;
use crate::{
    emit, AnalyzeArgs, AttackArgs, AttackMode, CliError, GenTraceArgs, McArgs, McExperiment,
    SchemeArg, SimulateArgs, Table,
};

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn load(common: &crate::Common) -> Result<Config, CliError> {
    let mut cfg = Config::load(common.config.as_deref())?;
    cfg.resolve_seed(common.seed)?;
    cfg.cache.validate().map_err(usage)?;
    Ok(cfg)
}

fn machine(cache: &CacheConfig, gap_ns: u64, seed: u64) -> Result<Machine, CliError> {
    Ok(Machine::new(build_cache(cache, seed).map_err(usage)?, gap_ns))
}

pub fn simulate(a: &SimulateArgs) -> Result<(), CliError> {
    let mut cfg = load(&a.common)?;
    if let Some(m) = a.model {
        cfg.cache.model = m.into();
    }
    let trace = match &a.trace {
        Some(path) => read_trace(path).map_err(|e| match e {
            TraceError::Parse { .. } => usage(format!("{}: {e}", path.display())),
            TraceError::Io { .. } => usage(e),
        })?,
        None => gen_workload(&cfg.workload, cfg.seed).map_err(usage)?,
    };
    if trace.is_empty() {
        return Err(CliError::Usage("empty trace".into()));
    }
    let models: Vec<ModelKind> = if a.compare {
        ModelKind::ALL.to_vec()
    } else {
        vec![cfg.cache.model]
    };
    let want_periods = cfg.output.periods.is_some();
    if a.compare && (want_periods || cfg.output.lifetimes.is_some()) {
        return Err(CliError::Usage(
            "lifetime and period outputs need a single model, not --compare".into(),
        ));
    }

    let runs: Vec<(RunStats, Option<String>)> = models
        .par_iter()
        .map(|&model| {
            let mut cache = cfg.cache.clone();
            cache.model = model;
            cache.record_periods |= want_periods;
            let m = machine(&cache, cfg.run.gap_ns, cfg.seed)?;
            let mut sim = Simulator::new(m.into_cache(), &cfg.run).map_err(usage)?;
            sim.replay(&trace);
            let periods = sim.machine().cache().period_history().map(period_csv);
            Ok((sim.finish().0, periods))
        })
        .collect::<Result<_, CliError>>()?;

    for (stats, _) in &runs {
        stats.check_accounting().map_err(runtime)?;
    }
    if let Some(path) = &cfg.output.periods {
        let csv = runs[0].1.clone().unwrap_or_else(|| period_csv(&[]));
        emit(Some(path), &csv)?;
    }
    let (first, _) = &runs[0];
    let bound = (a.check_lifetime && first.model == ModelKind::Clepsydra)
        .then(|| cfg.cache.ttl.max_lifetime_ns());
    let report = lifetime_report(first, bound).map_err(runtime);
    if let (Some(path), Ok(text)) = (&cfg.output.lifetimes, &report) {
        emit(Some(path), text)?;
    }
    report?;

    let out = if a.text {
        runs.iter().map(|(s, _)| runstats_text(s)).collect::<Vec<_>>().join("\n")
    } else {
        let rows: Vec<(String, RunStats)> = runs
            .into_iter()
            .map(|(s, _)| (format!("seed{}", cfg.seed), s))
            .collect();
        runstats_csv(&rows)
    };
    if let Some(path) = &cfg.output.stats {
        emit(Some(path), &out)?;
    }
    emit(a.common.out.as_deref(), &out)
}

fn period_csv(history: &[clepsydra::ttl::PeriodSample]) -> String {
    let mut s = String::from("# schema: clepsydra-periods v1\nat_ns,period_ns,cause\n");
    for p in history {
        let cause = match p.cause {
            DecayCause::Periodic => "periodic",
            DecayCause::Conflict => "conflict",
        };
        let _ = writeln!(s, "{},{},{cause}", p.at, p.period);
    }
    s
}

pub fn attack(a: &AttackArgs) -> Result<(), CliError> {
    let mut cfg = load(&a.common)?;
    if let Some(m) = a.cache {
        cfg.cache.model = m.into();
    }
    let at = &mut cfg.attacker;
    if let Some(b) = a.budget_ns {
        at.ppp.budget_ns = b;
    }
    if let Some(p) = a.p_e {
        if !(0.0..1.0).contains(&p) {
            return Err(CliError::Usage(format!("--p-e must lie in [0, 1), got {p}")));
        }
        at.p_e_goal = p;
    }
    if let Some(k) = a.priming {
        at.ppp.priming_size = k;
    }
    if a.timing_only {
        at.model.oracle = OracleKind::TimingOnly;
    }
    match a.mode {
        AttackMode::Ppp => attack_ppp(&cfg, a),
        AttackMode::Pp => attack_pp(&cfg, a),
        AttackMode::EvictTime => attack_evict_time(&cfg, a),
        AttackMode::Dos => attack_dos(&cfg, a),
    }
}

fn oracle_name(o: OracleKind) -> &'static str {
    match o {
        OracleKind::ConflictAware => "conflict-aware",
        OracleKind::TimingOnly => "timing-only",
    }
}

/// One eviction-set build; `Err` only for failures other than the budget.
fn build_set(cfg: &Config, seed: u64) -> Result<(Machine, ProfilingResult, bool), CliError> {
    let mut m = machine(&cfg.cache, cfg.run.gap_ns, seed)?;
    let at = &cfg.attacker;
    let mut ppp = at.ppp;
    ppp.pool_seed = seed;
    match build_ppp_eviction_set(&mut m, at.target, at.p_e_goal, at.model, &ppp) {
        Ok(r) => Ok((m, r, true)),
        Err(AttackError::BudgetExceeded { partial, .. }) => Ok((m, *partial, false)),
        Err(e) => Err(runtime(e)),
    }
}

fn status(done: bool) -> &'static str {
    if done {
        "complete"
    } else {
        "budget-exceeded"
    }
}

fn attack_ppp(cfg: &Config, a: &AttackArgs) -> Result<(), CliError> {
    let trials = a.trials.unwrap_or(1);
    let goal = required_g_size(cfg.cache.model, &cfg.cache.geometry, cfg.attacker.p_e_goal)
        .map_err(usage)?;
    let rows: Vec<(u64, ProfilingResult, bool, Option<f64>)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let seed = cfg.seed.wrapping_add(t);
            let (mut m, r, done) = build_set(cfg, seed)?;
            let rate = (done && cfg.attacker.eviction_trials > 0).then(|| {
                measure_eviction_rate(
                    &mut m,
                    &r.g,
                    cfg.attacker.target,
                    cfg.attacker.eviction_trials,
                )
            });
            Ok((seed, r, done, rate))
        })
        .collect::<Result<_, CliError>>()?;

    let mut s = String::from(
        "# schema: clepsydra-ppp v1\n\
         trial,seed,model,oracle,status,g_goal,g_size,true_positives,tp_rate,iterations,\
         victim_conflicts,accesses,virtual_time_ns,eviction_rate\n",
    );
    for (t, (seed, r, done, rate)) in rows.iter().enumerate() {
        let _ = writeln!(
            s,
            "{t},{seed},{},{},{},{goal},{},{},{:.6},{},{},{},{},{}",
            cfg.cache.model,
            oracle_name(cfg.attacker.model.oracle),
            status(*done),
            r.g.len(),
            r.true_positives(),
            r.true_positive_rate(),
            r.iterations,
            r.victim_conflicts,
            r.accesses_made,
            r.virtual_time_spent,
            rate.map(|x| format!("{x:.4}")).unwrap_or_default(),
        );
    }
    emit(a.common.out.as_deref(), &s)?;
    let failed = rows.iter().filter(|r| !r.2).count();
    if failed > 0 {
        return Err(CliError::Runtime(format!(
            "{failed} of {trials} runs exhausted the {} ns budget",
            cfg.attacker.ppp.budget_ns
        )));
    }
    Ok(())
}

fn attack_pp(cfg: &Config, a: &AttackArgs) -> Result<(), CliError> {
    let runs = a.trials.unwrap_or(200);
    let (mut m, r, done) = build_set(cfg, cfg.seed)?;
    let victim = coin_flip_victim(cfg.attacker.target, runs, cfg.seed);
    let d = attack_phase(&mut m, &r.g, cfg.attacker.target, &victim, cfg.attacker.model);
    let mut s = String::from(
        "# schema: clepsydra-pp v1\n\
         model,oracle,status,g_size,runs,positives,true_positives,false_positives,tpr,fpr\n",
    );
    let _ = writeln!(
        s,
        "{},{},{},{},{},{},{},{},{:.4},{:.4}",
        cfg.cache.model,
        oracle_name(cfg.attacker.model.oracle),
        status(done),
        r.g.len(),
        d.runs,
        d.positives,
        d.true_positives,
        d.false_positives,
        d.tpr,
        d.fpr
    );
    emit(a.common.out.as_deref(), &s)?;
    if !done {
        return Err(CliError::Runtime(format!(
            "eviction set incomplete: budget of {} ns exhausted",
            cfg.attacker.ppp.budget_ns
        )));
    }
    Ok(())
}

fn attack_evict_time(cfg: &Config, a: &AttackArgs) -> Result<(), CliError> {
    let et = EvictTimeConfig {
        cache: cfg.cache.clone(),
        samples: a.trials.unwrap_or(500),
        seed: cfg.seed,
        ..Default::default()
    };
    let results: Vec<_> = [false, true]
        .into_par_iter()
        .map(|bit| evict_time_experiment(&et, bit).map(|r| (bit, r)))
        .collect::<Result<_, _>>()
        .map_err(runtime)?;
    let mut s = String::from(
        "# schema: clepsydra-evict-time v1\n\
         model,secret,samples,control_mean_ns,attacked_mean_ns,mean_diff_ns,t_stat,p_value\n",
    );
    for (bit, r) in results {
        let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len().max(1) as f64;
        let _ = writeln!(
            s,
            "{},{},{},{:.3},{:.3},{:.3},{:.4},{:.6e}",
            cfg.cache.model,
            bit as u8,
            et.samples,
            mean(&r.control),
            mean(&r.attacked),
            r.mean_diff_ns,
            r.t_stat,
            r.p_value
        );
    }
    emit(a.common.out.as_deref(), &s)
}

fn attack_dos(cfg: &Config, a: &AttackArgs) -> Result<(), CliError> {
    let benign = gen_workload(&cfg.workload, cfg.seed).map_err(usage)?;
    let dc = DosConfig {
        cache: cfg.cache.clone(),
        flood_rate: a.flood_rate.unwrap_or(1.0),
        seed: cfg.seed,
    };
    let d = dos_scenario(&dc, &benign).map_err(|e| match e {
        AttackError::Params(_) => usage(e),
        e => runtime(e),
    })?;
    let opt = |x: Option<u64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut s = String::from(
        "# schema: clepsydra-dos v1\n\
         model,flood_rate,benign_accesses,flood_accesses,baseline_miss_rate,flood_miss_rate,\
         min_period_ns,final_period_ns,at_min_fraction,mean_period_ns\n",
    );
    let _ = writeln!(
        s,
        "{},{},{},{},{:.6},{:.6},{},{},{},{}",
        cfg.cache.model,
        dc.flood_rate,
        d.benign_accesses,
        d.flood_accesses,
        d.baseline_miss_rate,
        d.flood_miss_rate,
        opt(d.min_period_ns),
        opt(d.final_period_ns),
        d.at_min_fraction.map(|f| format!("{f:.4}")).unwrap_or_default(),
        d.mean_period_ns.map(|f| format!("{f:.1}")).unwrap_or_default()
    );
    emit(a.common.out.as_deref(), &s)
}

pub fn analyze(a: &AnalyzeArgs) -> Result<(), CliError> {
    let cfg = Config::load(a.config.as_deref())?;
    let mut p = cfg.analysis;
    if let Some(n) = a.n {
        p.n = n;
    }
    if let Some(w) = a.ways {
        p.w = w;
    }
    p.validate().map_err(usage)?;
    let out = match a.table {
        Table::One | Table::Two => {
            let (name, what, rows) = match a.table {
                Table::One => ("table1", "k_prime", table1(&p, &PAPER_GOALS)),
                _ => ("table2", "g_size", table2(&p, &PAPER_GOALS)),
            };
            let rows = rows.map_err(runtime)?;
            if a.text {
                let mut s = format!(
                    "{what} for N = {}, w = {}\n{:>8}  {:>12}  {:>12}\n",
                    p.n, p.w, "goal", "clepsydra", "scattercache"
                );
                for r in &rows {
                    let _ = writeln!(s, "{:>8}  {:>12}  {:>12}", r.goal, r.clepsydra, r.scattercache);
                }
                s
            } else {
                let mut s = format!(
                    "# schema: clepsydra-{name} v1\n# N={} w={}\ngoal,clepsydra_{what},scattercache_{what}\n",
                    p.n, p.w
                );
                for r in &rows {
                    let _ = writeln!(s, "{},{},{}", r.goal, r.clepsydra, r.scattercache);
                }
                s
            }
        }
        Table::Profiling => {
            let rows = profiling_summary(&p, a.p_e).map_err(runtime)?;
            if a.text {
                let mut s = format!(
                    "profiling cost for N = {}, w = {}, p_e = {}\n{:>12}  {:>5}  {:>8}  {:>6}  {:>10}  {:>14}  {:>14}\n",
                    p.n, p.w, a.p_e, "scheme", "fill", "k", "|G|", "p_catch", "t_pp (ns)", "t_G (s)"
                );
                for r in &rows {
                    let _ = writeln!(
                        s,
                        "{:>12}  {:>5}  {:>8}  {:>6}  {:>10.3e}  {:>14.1}  {:>14.4}",
                        scheme_name(r.scheme),
                        r.fill,
                        r.k,
                        r.g_size,
                        r.p_catch,
                        r.t_pp_ns,
                        r.t_construct_s
                    );
                }
                s
            } else {
                let mut s = format!(
                    "# schema: clepsydra-profiling v1\n# N={} w={}\n\
                     scheme,p_e_goal,fill,k,g_size,p_catch,t_pp_ns,t_construct_s\n",
                    p.n, p.w
                );
                for r in &rows {
                    let _ = writeln!(
                        s,
                        "{},{},{},{},{},{:.6e},{:.1},{:.4}",
                        scheme_name(r.scheme),
                        r.p_e_goal,
                        r.fill,
                        r.k,
                        r.g_size,
                        r.p_catch,
                        r.t_pp_ns,
                        r.t_construct_s
                    );
                }
                s
            }
        }
    };
    emit(a.out.as_deref(), &out)
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Clepsydra => "clepsydra",
        Scheme::ScatterCache => "scattercache",
    }
}

pub fn mc(a: &McArgs) -> Result<(), CliError> {
    let mut cfg = Config::default();
    cfg.resolve_seed(a.seed)?;
    let scheme = match a.scheme {
        SchemeArg::Clepsydra => Scheme::Clepsydra,
        SchemeArg::Scattercache => Scheme::ScatterCache,
    };
    let p = SecurityParams::new(a.n, a.ways).map_err(usage)?;
    let (name, exp, closed) = match a.experiment {
        McExperiment::Catch => {
            let k = a.size.unwrap_or(a.n * 3 / 4);
            let e = Experiment::Catch { k_prime: k, scheme };
            ("catch", e, scheme.catch_law().probability(k, &p))
        }
        McExperiment::Evict => {
            let g = match a.size {
                Some(g) => g,
                None => min_set_size_for(0.5, scheme.evict_law(), &p).map_err(usage)?,
            };
            let e = Experiment::Evict { g_size: g, scheme };
            ("evict", e, scheme.evict_law().probability(g, &p))
        }
        McExperiment::Conflicts => {
            let k = a.size.unwrap_or(a.n / 2);
            let e = Experiment::Conflicts { k, scheme };
            // The i-th of k lines meets i - 1 primed ones.
            let closed = expected_conflicts_for(k.saturating_sub(1), &p, scheme).map_err(usage)?;
            ("conflicts", e, closed)
        }
    };
    let size = match exp {
        Experiment::Catch { k_prime, .. } => k_prime,
        Experiment::Evict { g_size, .. } => g_size,
        Experiment::Conflicts { k, .. } => k,
    };
    let est = monte_carlo_oracle(exp, a.n, a.ways, a.trials, cfg.seed).map_err(usage)?;
    let mut s = String::from(
        "# schema: clepsydra-mc v1\n\
         experiment,scheme,n,w,size,trials,seed,estimate,ci_lo,ci_hi,closed_form,inside\n",
    );
    let _ = writeln!(
        s,
        "{name},{},{},{},{size},{},{},{:.6},{:.6},{:.6},{:.6},{}",
        scheme_name(scheme),
        a.n,
        a.ways,
        est.trials,
        cfg.seed,
        est.estimate,
        est.lo,
        est.hi,
        closed,
        est.contains(closed)
    );
    emit(a.out.as_deref(), &s)
}

pub fn gen_trace(a: &GenTraceArgs) -> Result<(), CliError> {
    let cfg = load(&a.common)?;
    let mut spec = cfg.workload.clone();
    if let Some(k) = &a.kind {
        spec.kind = k.parse::<WorkloadKind>().map_err(usage)?;
    }
    if let Some(n) = a.accesses {
        spec.accesses = n;
    }
    if let Some(f) = a.footprint {
        spec.footprint = f;
    }
    if let Some(w) = a.write_ratio {
        spec.write_ratio = w;
    }
    let trace: Vec<TraceRecord> = gen_workload(&spec, cfg.seed).map_err(usage)?;
    let mut s = format!(
        "# clepsydra trace v1: kind={} seed={} records={}\n",
        spec.kind,
        cfg.seed,
        trace.len()
    );
    s.push_str(&format_trace(&trace));
    emit(a.common.out.as_deref(), &s)
}
