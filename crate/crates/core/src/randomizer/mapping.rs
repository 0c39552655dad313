use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prince::{Prince, RANDOMIZER_ROUNDS};
use crate::geometry::{CacheGeometry, GeometryError};

/// Ciphertext bit positions the cache index is gathered from, in order.
///
/// The first sixteen positions each sit in a different S-box nibble; the
/// second sixteen revisit the nibbles at a different bit.
pub const INDEX_BIT_POSITIONS: [u8; 32] = [
    0, 21, 42, 63, 16, 37, 58, 15, 32, 53, 10, 31, 48, 5, 26, 47, //
    2, 23, 40, 61, 18, 39, 56, 13, 34, 55, 8, 29, 50, 7, 24, 45,
];

pub const MAX_INDEX_BITS: u32 = INDEX_BIT_POSITIONS.len() as u32;

/// Secret material for the randomized mapping.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandKey {
    pub core_key: u128,
    pub way_secrets: Vec<u64>,
}

impl RandKey {
    pub fn generate<R: Rng + ?Sized>(rng: &mut R, ways: usize) -> Self {
        RandKey {
            core_key: rng.random(),
            way_secrets: (0..ways).map(|_| rng.random()).collect(),
        }
    }
}

impl fmt::Debug for RandKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RandKey")
            .field("ways", &self.way_secrets.len())
            .finish_non_exhaustive()
    }
}

/// Location of an address in one way plus the ciphertext bits that are not
/// implied by the location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MappedIndex {
    pub way: usize,
    pub index: usize,
    pub out_tag: u64,
}

/// A per-way, keyed, invertible address-to-index mapping.
pub trait IndexMapper: fmt::Debug + Send + Sync {
    fn geometry(&self) -> &CacheGeometry;

    fn map(&self, addr: u64, way: usize) -> MappedIndex;

    /// Line address (offset bits zero) that `map` sent to `mi`.
    fn unmap(&self, mi: &MappedIndex) -> u64;
}

/// Index mapping built on reduced-round PRINCE with a way-specific input
/// tweak.
#[derive(Debug, Clone)]
pub struct PrinceMapper {
    geometry: CacheGeometry,
    cipher: Prince,
    way_secrets: Vec<u64>,
    // Index bit positions sorted ascending, for tag compression.
    sorted_positions: Vec<u8>,
}

impl PrinceMapper {
    pub fn new(key: &RandKey, geometry: CacheGeometry) -> Result<Self, GeometryError> {
        Self::with_rounds(key, geometry, RANDOMIZER_ROUNDS)
    }

    pub fn with_rounds(
        key: &RandKey,
        geometry: CacheGeometry,
        rounds: u32,
    ) -> Result<Self, GeometryError> {
        geometry.validate()?;
        assert_eq!(
            key.way_secrets.len(),
            geometry.ways,
            "one way secret per way"
        );
        let mut sorted_positions = INDEX_BIT_POSITIONS[..geometry.index_bits() as usize].to_vec();
        sorted_positions.sort_unstable();
        Ok(PrinceMapper {
            geometry,
            cipher: Prince::new(key.core_key, rounds),
            way_secrets: key.way_secrets.clone(),
            sorted_positions,
        })
    }

    fn index_positions(&self) -> &[u8] {
        &INDEX_BIT_POSITIONS[..self.geometry.index_bits() as usize]
    }
}

impl IndexMapper for PrinceMapper {
    fn geometry(&self) -> &CacheGeometry {
        &self.geometry
    }

    fn map(&self, addr: u64, way: usize) -> MappedIndex {
        let input = self.geometry.line_address(addr) ^ self.way_secrets[way];
        let ct = self.cipher.encrypt(input);
        let mut index = 0usize;
        for (i, &pos) in self.index_positions().iter().enumerate() {
            index |= (((ct >> pos) & 1) as usize) << i;
        }
        // Squeeze out the index bits, highest position first.
        let mut out_tag = ct;
        for &pos in self.sorted_positions.iter().rev() {
            let low = out_tag & ((1u64 << pos) - 1);
            out_tag = low | (out_tag.checked_shr(pos as u32 + 1).unwrap_or(0) << pos);
        }
        MappedIndex {
            way,
            index,
            out_tag,
        }
    }

    fn unmap(&self, mi: &MappedIndex) -> u64 {
        // Reopen the gaps, lowest position first, then drop the index bits in.
        let mut ct = mi.out_tag;
        for &pos in &self.sorted_positions {
            let low = ct & ((1u64 << pos) - 1);
            ct = low | (ct >> pos).checked_shl(pos as u32 + 1).unwrap_or(0);
        }
        for (i, &pos) in self.index_positions().iter().enumerate() {
            ct |= (((mi.index >> i) & 1) as u64) << pos;
        }
        self.cipher.decrypt(ct) ^ self.way_secrets[mi.way]
    }
}

pub fn map_address(
    addr: u64,
    way: usize,
    key: &RandKey,
    geometry: &CacheGeometry,
) -> Result<MappedIndex, GeometryError> {
    Ok(PrinceMapper::new(key, *geometry)?.map(addr, way))
}

pub fn unmap_address(
    mi: &MappedIndex,
    key: &RandKey,
    geometry: &CacheGeometry,
) -> Result<u64, GeometryError> {
    Ok(PrinceMapper::new(key, *geometry)?.unmap(mi))
}
