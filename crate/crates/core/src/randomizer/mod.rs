//! Keyed, invertible per-way index randomization.

mod mapping;
pub mod prince;

pub use mapping::{
    map_address, unmap_address, IndexMapper, MappedIndex, PrinceMapper, RandKey,
    INDEX_BIT_POSITIONS, MAX_INDEX_BITS,
};
pub use prince::{prince_core, Prince};
