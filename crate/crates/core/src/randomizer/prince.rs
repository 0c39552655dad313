//! Round-configurable PRINCE block cipher.
//!
//! With 11 rounds (five forward rounds, the middle layer, five backward
//! rounds) this is the standard PRINCE cipher and reproduces the published
//! test vectors. Fewer rounds keep the same reflection structure: the
//! forward half takes `(rounds - 1) / 2` rounds and the backward half the
//! remainder, so three rounds means one forward round, the middle layer and
//! one backward round, all wrapped in the k0/k1 whitening.

const SBOX: [u8; 16] = [
    0xb, 0xf, 0x3, 0x2, 0xa, 0xc, 0x9, 0x1, 0x6, 0x7, 0x8, 0x0, 0xe, 0x5, 0xd, 0x4,
];
const SBOX_INV: [u8; 16] = [
    0xb, 0x7, 0x3, 0x2, 0xf, 0xd, 0x8, 0x9, 0xa, 0x6, 0x4, 0x0, 0x5, 0xe, 0xc, 0x1,
];

const RC: [u64; 12] = [
    0x0000000000000000,
    0x13198a2e03707344,
    0xa4093822299f31d0,
    0x082efa98ec4e6c89,
    0x452821e638d01377,
    0xbe5466cf34e90c6c,
    0x7ef84f78fd955cb1,
    0x85840851f1ac43aa,
    0xc882d32f25323c54,
    0x64a51195e0e3610d,
    0xd3b5a399ca0c2399,
    0xc0ac29b7c97c50dd,
];

/// Number of rounds of the full cipher.
pub const FULL_ROUNDS: u32 = 11;

/// Round count used for address randomization.
pub const RANDOMIZER_ROUNDS: u32 = 3;

// Nibble i (0 = most significant) of the output of ShiftRows comes from
// nibble SHIFT_ROWS[i] of the input.
const SHIFT_ROWS: [usize; 16] = [0, 5, 10, 15, 4, 9, 14, 3, 8, 13, 2, 7, 12, 1, 6, 11];

/// Lookup tables for the M' layer, one per 16-bit chunk and byte half.
struct MPrimeTables {
    // [chunk][byte (0 = high)][value] -> 16-bit contribution
    t: [[[u16; 256]; 2]; 4],
}

impl MPrimeTables {
    fn build() -> Self {
        let hat0 = hat_matrix(0);
        let hat1 = hat_matrix(1);
        let mut t = [[[0u16; 256]; 2]; 4];
        for (chunk, table) in t.iter_mut().enumerate() {
            let m = if chunk == 0 || chunk == 3 {
                &hat0
            } else {
                &hat1
            };
            for (half, row) in table.iter_mut().enumerate() {
                for (v, slot) in row.iter_mut().enumerate() {
                    let input = (v as u16) << if half == 0 { 8 } else { 0 };
                    *slot = apply_hat(m, input);
                }
            }
        }
        MPrimeTables { t }
    }

    #[inline]
    fn apply(&self, x: u64) -> u64 {
        let mut out = 0u64;
        for chunk in 0..4 {
            let shift = 48 - 16 * chunk;
            let c = (x >> shift) as u16;
            let y = self.t[chunk][0][(c >> 8) as usize] ^ self.t[chunk][1][(c & 0xff) as usize];
            out |= (y as u64) << shift;
        }
        out
    }
}

// Row i, column j of the 16x16 matrix M^(offset). Bit 0 is the most
// significant bit of the chunk. Built from the 4x4 blocks M_0..M_3 where M_k
// is the identity with the k-th diagonal entry cleared.
fn hat_matrix(offset: usize) -> [u16; 16] {
    let mut rows = [0u16; 16];
    for (i, row) in rows.iter_mut().enumerate() {
        let (block_row, r) = (i / 4, i % 4);
        for block_col in 0..4 {
            let k = (block_row + block_col + offset) % 4;
            if r != k {
                let j = block_col * 4 + r;
                *row |= 1 << (15 - j);
            }
        }
    }
    rows
}

fn apply_hat(rows: &[u16; 16], x: u16) -> u16 {
    let mut out = 0u16;
    for (i, row) in rows.iter().enumerate() {
        if (row & x).count_ones() & 1 == 1 {
            out |= 1 << (15 - i);
        }
    }
    out
}

fn tables() -> &'static MPrimeTables {
    use std::sync::OnceLock;
    static TABLES: OnceLock<MPrimeTables> = OnceLock::new();
    TABLES.get_or_init(MPrimeTables::build)
}

#[inline]
fn sub_nibbles(x: u64, sbox: &[u8; 16]) -> u64 {
    let mut out = 0u64;
    for i in 0..16 {
        let s = i * 4;
        out |= (sbox[((x >> s) & 0xf) as usize] as u64) << s;
    }
    out
}

#[inline]
fn nibble(x: u64, i: usize) -> u64 {
    (x >> (60 - 4 * i)) & 0xf
}

#[inline]
fn shift_rows(x: u64) -> u64 {
    let mut out = 0u64;
    for (i, &src) in SHIFT_ROWS.iter().enumerate() {
        out |= nibble(x, src) << (60 - 4 * i);
    }
    out
}

#[inline]
fn shift_rows_inv(x: u64) -> u64 {
    let mut out = 0u64;
    for (i, &src) in SHIFT_ROWS.iter().enumerate() {
        out |= nibble(x, i) << (60 - 4 * src);
    }
    out
}

/// PRINCE with a 128-bit key `k0 || k1` and a configurable round count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prince {
    k0: u64,
    k0_prime: u64,
    k1: u64,
    forward: usize,
    backward: usize,
}

impl Prince {
    /// `key` is `k0 || k1` with k0 in the high 64 bits. Panics if
    /// `rounds` is zero or exceeds [`FULL_ROUNDS`].
    pub fn new(key: u128, rounds: u32) -> Self {
        assert!(
            (1..=FULL_ROUNDS).contains(&rounds),
            "PRINCE round count must be in 1..=11, got {rounds}"
        );
        let k0 = (key >> 64) as u64;
        let k1 = key as u64;
        let forward = ((rounds - 1) / 2) as usize;
        let backward = (rounds - 1) as usize - forward;
        Prince {
            k0,
            k0_prime: k0.rotate_right(1) ^ (k0 >> 63),
            k1,
            forward,
            backward,
        }
    }

    pub fn encrypt(&self, block: u64) -> u64 {
        let t = tables();
        let mut x = block ^ self.k0 ^ self.k1 ^ RC[0];
        for rc in &RC[1..=self.forward] {
            x = sub_nibbles(x, &SBOX);
            x = shift_rows(t.apply(x));
            x ^= rc ^ self.k1;
        }
        x = sub_nibbles(x, &SBOX);
        x = t.apply(x);
        x = sub_nibbles(x, &SBOX_INV);
        for rc in &RC[11 - self.backward..11] {
            x ^= rc ^ self.k1;
            x = t.apply(shift_rows_inv(x));
            x = sub_nibbles(x, &SBOX_INV);
        }
        x ^ RC[11] ^ self.k1 ^ self.k0_prime
    }

    pub fn decrypt(&self, block: u64) -> u64 {
        let t = tables();
        let mut x = block ^ self.k0_prime ^ self.k1 ^ RC[11];
        for rc in RC[11 - self.backward..11].iter().rev() {
            x = sub_nibbles(x, &SBOX);
            x = shift_rows(t.apply(x));
            x ^= rc ^ self.k1;
        }
        x = sub_nibbles(x, &SBOX);
        x = t.apply(x);
        x = sub_nibbles(x, &SBOX_INV);
        for rc in RC[1..=self.forward].iter().rev() {
            x ^= rc ^ self.k1;
            x = t.apply(shift_rows_inv(x));
            x = sub_nibbles(x, &SBOX_INV);
        }
        x ^ RC[0] ^ self.k1 ^ self.k0
    }
}

/// One-shot encryption of `block` under `key` with `rounds` rounds.
pub fn prince_core(block: u64, key: u128, rounds: u32) -> u64 {
    Prince::new(key, rounds).encrypt(block)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(k0: u64, k1: u64) -> u128 {
        ((k0 as u128) << 64) | k1 as u128
    }

    // Test vectors published with the cipher.
    #[test]
    fn full_prince_vectors() {
        let cases = [
            (
                0x0000000000000000,
                0x0000000000000000,
                0x0000000000000000,
                0x818665aa0d02dfda,
            ),
            (
                0xffffffffffffffff,
                0x0000000000000000,
                0x0000000000000000,
                0x604ae6ca03c20ada,
            ),
            (
                0x0000000000000000,
                0xffffffffffffffff,
                0x0000000000000000,
                0x9fb51935fc3df524,
            ),
            (
                0x0000000000000000,
                0x0000000000000000,
                0xffffffffffffffff,
                0x78a54cbe737bb7ef,
            ),
            (
                0x0123456789abcdef,
                0x0000000000000000,
                0xfedcba9876543210,
                0xae25ad3ca8fa9ccf,
            ),
        ];
        for (pt, k0, k1, ct) in cases {
            let p = Prince::new(key(k0, k1), FULL_ROUNDS);
            assert_eq!(p.encrypt(pt), ct, "pt={pt:016x} k0={k0:016x} k1={k1:016x}");
            assert_eq!(p.decrypt(ct), pt);
        }
    }

    #[test]
    fn m_prime_is_an_involution() {
        let t = tables();
        for x in [
            0u64,
            1,
            0xdead_beef_0123_4567,
            u64::MAX,
            0x8000_0000_0000_0001,
        ] {
            assert_eq!(t.apply(t.apply(x)), x);
        }
    }

    #[test]
    fn shift_rows_round_trip() {
        let x = 0x0123_4567_89ab_cdef;
        assert_eq!(shift_rows_inv(shift_rows(x)), x);
        assert_ne!(shift_rows(x), x);
    }

    #[test]
    fn three_round_golden_vector() {
        assert_eq!(prince_core(0, 0, 3), 0xcaf7_7927_9e0a_8b67);
    }

    #[test]
    fn every_round_count_round_trips() {
        let k = key(0x0f1e_2d3c_4b5a_6978, 0x8796_a5b4_c3d2_e1f0);
        for rounds in 1..=FULL_ROUNDS {
            let p = Prince::new(k, rounds);
            for x in [0u64, 7, 0x1234_5678_9abc_def0, u64::MAX] {
                assert_eq!(p.decrypt(p.encrypt(x)), x, "rounds={rounds}");
            }
        }
    }

    #[test]
    #[should_panic]
    fn zero_rounds_rejected() {
        let _ = Prince::new(0, 0);
    }
}
