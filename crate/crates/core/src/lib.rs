// Parameter checks are written `!(x >= lo)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod attack;
pub mod cache;
pub mod geometry;
pub mod randomizer;
pub mod simkit;
pub mod ttl;

pub use cache::{build_cache, AccessOp, AccessOutcome, CacheConfig, CacheModel, ModelKind};
pub use geometry::{CacheGeometry, GeometryError};
pub use ttl::{Nanos, TtlConfig};
