use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("cache needs at least one way")]
    NoWays,
    #[error("lines per way must be a power of two, got {0}")]
    LinesNotPowerOfTwo(usize),
    #[error("line size must be a power of two of at least 8 bytes, got {0}")]
    BadLineSize(usize),
    #[error("{0} index bits exceed the supported maximum of {max}", max = crate::randomizer::MAX_INDEX_BITS)]
    TooManyIndexBits(u32),
    #[error("capacity {bytes} B is not divisible into {ways} ways of {line_size} B lines")]
    BadCapacity {
        bytes: usize,
        ways: usize,
        line_size: usize,
    },
}

/// Shape of a cache: `ways` ways of `lines_per_way` lines each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheGeometry {
    pub ways: usize,
    pub lines_per_way: usize,
    #[serde(default = "default_line_size")]
    pub line_size: usize,
}

fn default_line_size() -> usize {
    64
}

impl CacheGeometry {
    pub fn new(ways: usize, lines_per_way: usize, line_size: usize) -> Result<Self, GeometryError> {
        let g = CacheGeometry {
            ways,
            lines_per_way,
            line_size,
        };
        g.validate()?;
        Ok(g)
    }

    /// Geometry from total capacity in bytes.
    pub fn with_capacity(
        bytes: usize,
        ways: usize,
        line_size: usize,
    ) -> Result<Self, GeometryError> {
        if ways == 0 {
            return Err(GeometryError::NoWays);
        }
        if line_size == 0 || !bytes.is_multiple_of(ways * line_size) {
            return Err(GeometryError::BadCapacity {
                bytes,
                ways,
                line_size,
            });
        }
        Self::new(ways, bytes / (ways * line_size), line_size)
    }

    /// 1 MiB, 8-way last-level cache with 64 B lines.
    pub fn reference_llc() -> Self {
        CacheGeometry {
            ways: 8,
            lines_per_way: 2048,
            line_size: 64,
        }
    }

    /// 8 MiB, 16-way cache (131,072 entries) used for the security estimates.
    pub fn analysis_8mib() -> Self {
        CacheGeometry {
            ways: 16,
            lines_per_way: 8192,
            line_size: 64,
        }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.ways == 0 {
            return Err(GeometryError::NoWays);
        }
        if !self.lines_per_way.is_power_of_two() {
            return Err(GeometryError::LinesNotPowerOfTwo(self.lines_per_way));
        }
        if self.line_size < 8 || !self.line_size.is_power_of_two() {
            return Err(GeometryError::BadLineSize(self.line_size));
        }
        if self.index_bits() > crate::randomizer::MAX_INDEX_BITS {
            return Err(GeometryError::TooManyIndexBits(self.index_bits()));
        }
        Ok(())
    }

    pub fn entries(&self) -> usize {
        self.ways * self.lines_per_way
    }

    pub fn capacity_bytes(&self) -> usize {
        self.entries() * self.line_size
    }

    pub fn index_bits(&self) -> u32 {
        self.lines_per_way.trailing_zeros()
    }

    pub fn offset_bits(&self) -> u32 {
        self.line_size.trailing_zeros()
    }

    pub fn offset_mask(&self) -> u64 {
        (self.line_size as u64) - 1
    }

    /// Address with its offset bits cleared.
    pub fn line_address(&self, addr: u64) -> u64 {
        addr & !self.offset_mask()
    }
}

impl Default for CacheGeometry {
    fn default() -> Self {
        Self::reference_llc()
    }
}
