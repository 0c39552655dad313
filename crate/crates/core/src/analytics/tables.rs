use serde::{Deserialize, Serialize};

use super::{
    fill_to_k, min_set_size_for, t_construct_g, t_profiling_iteration, AnalyticsError, Scheme,
    SecurityParams,
};

/// Probability goals of the published comparison tables.
pub const PAPER_GOALS: [f64; 4] = [0.01, 0.5, 0.9, 0.95];

/// One row of a set-size table: the smallest set reaching `goal` per scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub goal: f64,
    pub clepsydra: u64,
    pub scattercache: u64,
}

/// Priming-set sizes `k'` reaching each catching probability.
pub fn table1(p: &SecurityParams, goals: &[f64]) -> Result<Vec<SizeRow>, AnalyticsError> {
    size_table(p, goals, |s| s.catch_law())
}

/// Generalized eviction-set sizes `|G|` reaching each eviction probability.
pub fn table2(p: &SecurityParams, goals: &[f64]) -> Result<Vec<SizeRow>, AnalyticsError> {
    size_table(p, goals, |s| s.evict_law())
}

fn size_table(
    p: &SecurityParams,
    goals: &[f64],
    law: impl Fn(Scheme) -> super::Law,
) -> Result<Vec<SizeRow>, AnalyticsError> {
    p.validate()?;
    goals
        .iter()
        .map(|&goal| {
            Ok(SizeRow {
                goal,
                clepsydra: min_set_size_for(goal, law(Scheme::Clepsydra), p)?,
                scattercache: min_set_size_for(goal, law(Scheme::ScatterCache), p)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfilingRow {
    pub scheme: Scheme,
    pub p_e_goal: f64,
    pub fill: f64,
    pub k: u64,
    pub g_size: u64,
    pub p_catch: f64,
    pub t_pp_ns: f64,
    pub t_construct_s: f64,
}

/// Eviction-set construction time at the fills discussed for each design:
/// Clepsydra at 70% and 50%, ScatterCache at 1%.
pub fn profiling_summary(
    p: &SecurityParams,
    p_e_goal: f64,
) -> Result<Vec<ProfilingRow>, AnalyticsError> {
    p.validate()?;
    [
        (Scheme::Clepsydra, 0.7),
        (Scheme::Clepsydra, 0.5),
        (Scheme::ScatterCache, 0.01),
    ]
    .into_iter()
    .map(|(scheme, fill)| {
        let k = fill_to_k(fill, p.n);
        Ok(ProfilingRow {
            scheme,
            p_e_goal,
            fill,
            k,
            g_size: min_set_size_for(p_e_goal, scheme.evict_law(), p)?,
            p_catch: scheme.catch_law().probability(k, p),
            t_pp_ns: t_profiling_iteration(k, p, scheme)?,
            t_construct_s: t_construct_g(p_e_goal, k, p, scheme)?,
        })
    })
    .collect()
}
