//! Vectors and affine maps over F2.
//!
//! A point of F2^k is a `u32` bitmask: bit `i` holds coordinate `i + 1`.
//! This is the same little-endian convention used for cube vertices, so a
//! vertex index of `{0,1}^k` and a point of F2^k are interchangeable.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 24;

#[inline]
pub fn popcount(v: u32) -> u32 {
    v.count_ones()
}

/// Bits of `v` as a 0/1 list of length `k`, coordinate 1 first.
pub fn to_bits(v: u32, k: usize) -> Vec<u8> {
    (0..k).map(|i| ((v >> i) & 1) as u8).collect()
}

pub fn from_bits(bits: &[u8]) -> Result<u32> {
    if bits.len() > MAX_DIM {
        return Err(Error::invalid(format!(
            "vector of length {} exceeds the supported dimension {MAX_DIM}",
            bits.len()
        )));
    }
    let mut v = 0u32;
    for (i, &b) in bits.iter().enumerate() {
        match b {
            0 => {}
            1 => v |= 1 << i,
            _ => return Err(Error::invalid(format!("bit value {b} is not 0 or 1"))),
        }
    }
    Ok(v)
}

/// An affine map `v -> translation + M v` on F2^k, stored by the images of
/// the standard basis vectors.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AffineMap {
    pub dim: usize,
    pub columns: Vec<u32>,
    pub translation: u32,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        AffineMap {
            dim,
            columns: (0..dim).map(|i| 1 << i).collect(),
            translation: 0,
        }
    }

    pub fn translation(dim: usize, by: u32) -> Self {
        AffineMap {
            translation: by,
            ..AffineMap::identity(dim)
        }
    }

    /// `v[target] += v[source]`, coordinates zero-based.
    pub fn transvection(dim: usize, target: usize, source: usize) -> Self {
        let mut m = AffineMap::identity(dim);
        m.columns[source] |= 1 << target;
        m
    }

    pub fn swap(dim: usize, a: usize, b: usize) -> Self {
        let mut m = AffineMap::identity(dim);
        m.columns.swap(a, b);
        m
    }

    /// Coordinate `i` of the input becomes coordinate `i + 1 (mod dim)`.
    pub fn cyclic_shift(dim: usize) -> Self {
        AffineMap {
            dim,
            columns: (0..dim).map(|i| 1 << ((i + 1) % dim)).collect(),
            translation: 0,
        }
    }

    #[inline]
    pub fn apply(&self, v: u32) -> u32 {
        let mut out = self.translation;
        let mut rest = v;
        while rest != 0 {
            let i = rest.trailing_zeros() as usize;
            out ^= self.columns[i];
            rest &= rest - 1;
        }
        out
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &AffineMap) -> AffineMap {
        let lin = |v: u32| self.apply(v) ^ self.translation;
        AffineMap {
            dim: self.dim,
            columns: other.columns.iter().map(|&c| lin(c)).collect(),
            translation: self.apply(other.translation),
        }
    }

    pub fn rank(&self) -> usize {
        rank(&self.columns)
    }

    pub fn is_invertible(&self) -> bool {
        self.rank() == self.dim
    }

    pub fn inverse(&self) -> Result<AffineMap> {
        if !self.is_invertible() {
            return Err(Error::NotInvertible);
        }
        let perm = self.as_permutation();
        let mut inv = vec![0u32; perm.len()];
        for (v, &w) in perm.iter().enumerate() {
            inv[w as usize] = v as u32;
        }
        let translation = inv[0];
        let columns = (0..self.dim).map(|i| inv[1 << i] ^ translation).collect();
        Ok(AffineMap {
            dim: self.dim,
            columns,
            translation,
        })
    }

    /// Images of all points of F2^dim, in index order.
    pub fn as_permutation(&self) -> Vec<u32> {
        (0..1u32 << self.dim).map(|v| self.apply(v)).collect()
    }

    pub fn random_invertible<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> AffineMap {
        let full = if dim == 0 { 0 } else { (1u32 << dim) - 1 };
        loop {
            let m = AffineMap {
                dim,
                columns: (0..dim).map(|_| rng.gen::<u32>() & full).collect(),
                translation: rng.gen::<u32>() & full,
            };
            if m.is_invertible() {
                return m;
            }
        }
    }
}

pub fn rank(vectors: &[u32]) -> usize {
    let mut basis: Vec<u32> = Vec::new();
    for &v in vectors {
        let mut x = v;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis.len()
}

/// The standard generating set of Aff(F2^k) used for exchangeability checks:
/// basis translations, the transvection `v1 += v2` and the cyclic shift.
pub fn affine_generators(dim: usize) -> Vec<(String, AffineMap)> {
    let mut gens: Vec<(String, AffineMap)> = (0..dim)
        .map(|i| {
            (
                format!("translate(e{})", i + 1),
                AffineMap::translation(dim, 1 << i),
            )
        })
        .collect();
    if dim >= 2 {
        gens.push((
            "transvection(v1 += v2)".to_string(),
            AffineMap::transvection(dim, 0, 1),
        ));
        gens.push(("cyclic_shift".to_string(), AffineMap::cyclic_shift(dim)));
    }
    gens
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bits_round_trip() {
        assert_eq!(from_bits(&[1, 0, 1]).unwrap(), 0b101);
        assert_eq!(to_bits(0b101, 3), vec![1, 0, 1]);
        assert!(from_bits(&[2]).is_err());
    }

    #[test]
    fn transvection_adds_source_into_target() {
        let t = AffineMap::transvection(2, 0, 1);
        // (v1, v2) = (0, 1) -> (1, 1)
        assert_eq!(t.apply(0b10), 0b11);
        assert_eq!(t.apply(0b01), 0b01);
    }

    #[test]
    fn inverse_and_compose() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 1..=4 {
            for _ in 0..20 {
                let a = AffineMap::random_invertible(dim, &mut rng);
                let inv = a.inverse().unwrap();
                assert_eq!(a.compose(&inv), AffineMap::identity(dim));
                assert_eq!(inv.compose(&a), AffineMap::identity(dim));
            }
        }
        let singular = AffineMap {
            dim: 2,
            columns: vec![1, 1],
            translation: 0,
        };
        assert_eq!(singular.inverse(), Err(Error::NotInvertible));
    }

    #[test]
    fn cyclic_shift_moves_coordinates() {
        let s = AffineMap::cyclic_shift(3);
        assert_eq!(s.apply(0b001), 0b010);
        assert_eq!(s.apply(0b100), 0b001);
    }
}
