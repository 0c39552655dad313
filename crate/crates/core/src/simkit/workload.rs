use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::trace::TraceRecord;
use crate::cache::AccessOp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadKind {
    /// Cycle over `footprint` consecutive lines `iterations` times.
    Loop,
    /// Uniform accesses over `footprint` lines.
    Random,
    /// Zipf-distributed accesses over `footprint` lines (rank 1 hottest).
    Zipf,
    /// Every access touches a line never seen before.
    DosFlood,
    /// A Zipf hot set interleaved with a cyclic stream four times its size
    /// and uniform noise over sixteen times its size.
    Mixed,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 5] = [
        WorkloadKind::Loop,
        WorkloadKind::Random,
        WorkloadKind::Zipf,
        WorkloadKind::DosFlood,
        WorkloadKind::Mixed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadKind::Loop => "loop",
            WorkloadKind::Random => "random",
            WorkloadKind::Zipf => "zipf",
            WorkloadKind::DosFlood => "dos-flood",
            WorkloadKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("unknown workload kind {0:?} (expected loop, random, zipf, dos-flood or mixed)")]
    UnknownKind(String),
    #[error("invalid workload parameters: {0}")]
    Params(String),
}

impl FromStr for WorkloadKind {
    type Err = WorkloadError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| WorkloadError::UnknownKind(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    /// Records to generate (ignored by `loop`, which emits
    /// `footprint * iterations`).
    pub accesses: usize,
    /// Distinct lines in the working set.
    pub footprint: usize,
    pub iterations: usize,
    pub zipf_s: f64,
    /// Fraction of writes, drawn independently per record.
    pub write_ratio: f64,
    pub base: u64,
    pub line_size: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        WorkloadSpec {
            kind: WorkloadKind::Mixed,
            accesses: 400_000,
            footprint: 8_192,
            iterations: 1,
            zipf_s: 1.0,
            write_ratio: 0.3,
            base: 0x1000_0000,
            line_size: 64,
        }
    }
}

impl WorkloadSpec {
    pub fn of(kind: WorkloadKind) -> Self {
        WorkloadSpec {
            kind,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |m: &str| Err(WorkloadError::Params(m.to_string()));
        if self.footprint == 0 && self.kind != WorkloadKind::DosFlood {
            return bad("footprint must be positive");
        }
        if !(0.0..=1.0).contains(&self.write_ratio) {
            return bad("write_ratio must lie in [0, 1]");
        }
        if matches!(self.kind, WorkloadKind::Zipf | WorkloadKind::Mixed) && !(self.zipf_s >= 0.0) {
            return bad("zipf_s must be non-negative");
        }
        if self.line_size == 0 || !self.line_size.is_power_of_two() {
            return bad("line_size must be a power of two");
        }
        Ok(())
    }

    fn line(&self, i: u64) -> u64 {
        self.base.wrapping_add(i.wrapping_mul(self.line_size))
    }
}

/// Deterministic trace for `(spec, seed)`.
pub fn gen_workload(spec: &WorkloadSpec, seed: u64) -> Result<Vec<TraceRecord>, WorkloadError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fp = spec.footprint as u64;
    let zipf =
        || Zipf::new(fp as f64, spec.zipf_s).map_err(|e| WorkloadError::Params(e.to_string()));
    let lines: Vec<u64> = match spec.kind {
        WorkloadKind::Loop => (0..spec.iterations).flat_map(|_| 0..fp).collect(),
        WorkloadKind::Random => (0..spec.accesses)
            .map(|_| rng.random_range(0..fp))
            .collect(),
        WorkloadKind::Zipf => {
            let z = zipf()?;
            (0..spec.accesses)
                .map(|_| z.sample(&mut rng) as u64 - 1)
                .collect()
        }
        WorkloadKind::DosFlood => (0..spec.accesses as u64).collect(),
        WorkloadKind::Mixed => {
            let z = zipf()?;
            let stream_len = 4 * fp;
            let noise_len = 16 * fp;
            let mut cursor = 0u64;
            (0..spec.accesses)
                .map(|_| {
                    let u: f64 = rng.random();
                    if u < 0.6 {
                        z.sample(&mut rng) as u64 - 1
                    } else if u < 0.85 {
                        cursor = (cursor + 1) % stream_len;
                        fp + cursor
                    } else {
                        fp + stream_len + rng.random_range(0..noise_len)
                    }
                })
                .collect()
        }
    };
    Ok(lines
        .into_iter()
        .map(|l| {
            let op = if spec.write_ratio > 0.0 && rng.random_bool(spec.write_ratio) {
                AccessOp::Write
            } else {
                AccessOp::Read
            };
            TraceRecord {
                op,
                addr: spec.line(l),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn loop_cycles() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::Loop,
            footprint: 10,
            iterations: 3,
            write_ratio: 0.0,
            ..Default::default()
        };
        let t = gen_workload(&spec, 0).unwrap();
        assert_eq!(t.len(), 30);
        for (i, r) in t.iter().enumerate() {
            assert_eq!(r.addr, spec.base + (i as u64 % 10) * 64);
            assert_eq!(r.op, AccessOp::Read);
        }
    }

    #[test]
    fn same_seed_same_trace() {
        for kind in WorkloadKind::ALL {
            let spec = WorkloadSpec {
                kind,
                accesses: 2_000,
                footprint: 100,
                ..Default::default()
            };
            assert_eq!(
                gen_workload(&spec, 9).unwrap(),
                gen_workload(&spec, 9).unwrap(),
                "{kind}"
            );
        }
        let spec = WorkloadSpec {
            accesses: 2_000,
            ..Default::default()
        };
        assert_ne!(
            gen_workload(&spec, 1).unwrap(),
            gen_workload(&spec, 2).unwrap()
        );
    }

    #[test]
    fn flood_never_repeats() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::DosFlood,
            accesses: 5_000,
            ..Default::default()
        };
        let t = gen_workload(&spec, 3).unwrap();
        assert_eq!(
            t.iter().map(|r| r.addr).collect::<HashSet<_>>().len(),
            5_000
        );
    }

    #[test]
    fn write_ratio_respected() {
        let spec = WorkloadSpec {
            kind: WorkloadKind::Random,
            accesses: 20_000,
            write_ratio: 0.25,
            ..Default::default()
        };
        let w = gen_workload(&spec, 4)
            .unwrap()
            .iter()
            .filter(|r| r.op == AccessOp::Write)
            .count();
        assert!((w as f64 / 20_000.0 - 0.25).abs() < 0.02);
    }

    #[test]
    fn unknown_kind_and_bad_params() {
        assert_eq!(
            "mixed".parse::<WorkloadKind>().unwrap(),
            WorkloadKind::Mixed
        );
        assert!(matches!(
            "stride".parse::<WorkloadKind>(),
            Err(WorkloadError::UnknownKind(_))
        ));
        let spec = WorkloadSpec {
            write_ratio: 1.5,
            ..Default::default()
        };
        assert!(gen_workload(&spec, 0).is_err());
        let spec = WorkloadSpec {
            footprint: 0,
            ..Default::default()
        };
        assert!(gen_workload(&spec, 0).is_err());
    }
}
