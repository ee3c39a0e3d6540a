//! Splittable seeding.
//!
//! Each stochastic draw site derives its own stream from the run seed and a
//! path of labels, so adding or reordering draws at one site never shifts the
//! numbers seen by another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// A node in a deterministic tree of seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree(splitmix64(seed))
    }

    pub fn child(self, label: &str) -> Self {
        SeedTree(splitmix64(self.0 ^ fnv1a(label.as_bytes())))
    }

    pub fn index(self, i: u64) -> Self {
        SeedTree(splitmix64(self.0.wrapping_add(splitmix64(i ^ 0xA076_1D64_78BD_642F))))
    }

    pub fn rng(self) -> Rng {
        Rng::seed_from_u64(self.0)
    }
}

/// Uniform draw strictly inside (0, 1).
pub fn open_unit(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

pub fn standard_normal(rng: &mut impl RngCore, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized buffer")
}

/// Standard Gumbel noise, `-ln(-ln U)`.
pub fn gumbel(rng: &mut impl RngCore, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| -(-open_unit(rng).ln()).ln())
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized buffer")
}
