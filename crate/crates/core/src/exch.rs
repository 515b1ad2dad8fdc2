//! Exchangeability and independence tests for distributions of label tuples
//! indexed by the vertices of a window `{0,1}^k = F2^k`.

use serde::Serialize;

use crate::cubes::{all_cubes, CubeMorphism};
use crate::error::{Error, Result};
use crate::f2::{affine_generators, popcount, AffineMap};
use crate::group2::FilteredGroup;
use crate::measures::{tv_distance, Distance, FiniteDistribution, Weights};

/// A face of `{0,1}^k`: coordinates in `free` vary, the others are fixed to
/// the corresponding bits of `fixed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Face {
    pub k: usize,
    pub free: u32,
    pub fixed: u32,
}

impl Face {
    pub fn new(k: usize, free: u32, fixed: u32) -> Result<Self> {
        let full = ((1u64 << k) - 1) as u32;
        if free & !full != 0 || fixed & !full != 0 {
            return Err(Error::invalid(format!("face does not fit in {{0,1}}^{k}")));
        }
        if free & fixed != 0 {
            return Err(Error::invalid("fixed bits overlap the free coordinates"));
        }
        Ok(Face { k, free, fixed })
    }

    pub fn dim(&self) -> usize {
        popcount(self.free) as usize
    }

    pub fn contains(&self, v: u32) -> bool {
        v & !self.free == self.fixed
    }

    /// Vertices in the order of the face's own coordinates.
    pub fn vertices(&self) -> Vec<u32> {
        let bits: Vec<u32> = (0..self.k as u32).filter(|i| self.free >> i & 1 == 1).collect();
        (0..1u32 << bits.len())
            .map(|u| {
                bits.iter()
                    .enumerate()
                    .fold(self.fixed, |v, (j, &b)| v | ((u >> j & 1) << b))
            })
            .collect()
    }

    /// Disjoint vertex sets and disjoint free coordinates.
    pub fn independent_of(&self, other: &Face) -> bool {
        let both_fixed = !self.free & !other.free;
        self.free & other.free == 0 && (self.fixed ^ other.fixed) & both_fixed != 0
    }

    pub fn all(k: usize) -> Vec<Face> {
        let n = 1u32 << k;
        (0..n)
            .flat_map(|free| {
                (0..n)
                    .filter(move |fixed| fixed & free == 0)
                    .map(move |fixed| Face { k, free, fixed })
            })
            .collect()
    }
}

/// A distribution whose outcome positions are the vertices of `{0,1}^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowDistribution {
    k: usize,
    dist: FiniteDistribution,
}

impl WindowDistribution {
    /// The window size is read off the arity, which must be a power of two.
    pub fn new(dist: FiniteDistribution) -> Result<Self> {
        let arity = dist.arity();
        if !arity.is_power_of_two() {
            return Err(Error::invalid(format!(
                "arity {arity} is not the vertex count of a window"
            )));
        }
        Ok(WindowDistribution {
            k: arity.trailing_zeros() as usize,
            dist,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn distribution(&self) -> &FiniteDistribution {
        &self.dist
    }
}

/// The uniform measure on `C^k(Z)`, labels being the group elements.
pub fn uniform_cube_measure(z: &FilteredGroup, k: usize) -> Result<WindowDistribution> {
    let alphabet: Vec<String> = z.elements().map(|x| x.label()).collect();
    let outcomes: Vec<Vec<u32>> = all_cubes(z, k)
        .iter()
        .map(|q| q.values.iter().map(|x| z.encode(x) as u32).collect())
        .collect();
    WindowDistribution::new(FiniteDistribution::uniform(1 << k, alphabet, &outcomes)?)
}

/// `y_i = x_{σ(i)}`.
pub fn pushforward_by_vertex_map(d: &WindowDistribution, sigma: &[u32]) -> Result<FiniteDistribution> {
    let positions: Vec<usize> = sigma.iter().map(|&v| v as usize).collect();
    d.dist.project(&positions)
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub generator: String,
    pub tv: Distance,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExchReport {
    pub pass: bool,
    /// Set when the input was estimated and a tolerance was used.
    pub statistical: bool,
    pub checked: usize,
    pub witnesses: Vec<Witness>,
}

/// TV tolerance for estimated inputs.
pub fn statistical_threshold(samples: u64) -> f64 {
    4.0 / (samples.max(1) as f64).sqrt()
}

fn sample_count(d: &FiniteDistribution) -> Option<u64> {
    match d.weights() {
        Weights::Exact(_) => None,
        Weights::Estimated { samples, .. } => Some(*samples),
    }
}

fn require_exact(d: &FiniteDistribution) -> Result<()> {
    if !d.is_exact() {
        return Err(Error::invalid("this check needs an exact distribution"));
    }
    Ok(())
}

/// Invariance under translations by basis vectors, the transvection
/// `v1 += v2` and the cyclic coordinate shift, which generate Aff(F2^k).
/// Estimated inputs pass a generator when its TV is at most `4/√N`.
pub fn check_affine_exchangeable(d: &WindowDistribution) -> Result<ExchReport> {
    let samples = sample_count(&d.dist);
    let gens = affine_generators(d.k);
    let mut witnesses = Vec::new();
    for (name, t) in &gens {
        let moved = pushforward_by_vertex_map(d, &t.as_permutation())?;
        let tv = tv_distance(&moved, &d.dist)?;
        let ok = match samples {
            None => tv.is_zero(),
            Some(n) => tv.as_f64() <= statistical_threshold(n),
        };
        if !ok {
            witnesses.push(Witness {
                generator: name.clone(),
                tv,
            });
        }
    }
    Ok(ExchReport {
        pass: witnesses.is_empty(),
        statistical: samples.is_some(),
        checked: gens.len(),
        witnesses,
    })
}

/// Invariance under one affine map, exactly.
pub fn is_invariant_under(d: &WindowDistribution, t: &AffineMap) -> Result<bool> {
    Ok(pushforward_by_vertex_map(d, &t.as_permutation())? == d.dist)
}

/// Projections along every injective morphism `{0,1}^m -> {0,1}^k` agree.
pub fn check_cubic_exchangeable(d: &WindowDistribution, m: usize) -> Result<ExchReport> {
    require_exact(&d.dist)?;
    if m > d.k {
        return Err(Error::OutOfRange {
            what: "m",
            value: m as i64,
            range: format!("[0, {}]", d.k),
        });
    }
    let morphisms = CubeMorphism::injective(m, d.k);
    let project = |phi: &CubeMorphism| {
        let sigma: Vec<u32> = (0..1usize << m).map(|u| phi.apply(u) as u32).collect();
        pushforward_by_vertex_map(d, &sigma)
    };
    let reference = project(&morphisms[0])?;
    let mut witnesses = Vec::new();
    for phi in &morphisms[1..] {
        let tv = tv_distance(&project(phi)?, &reference)?;
        if !tv.is_zero() {
            let name = phi.coords.iter().map(|c| c.to_string()).collect::<Vec<_>>();
            witnesses.push(Witness {
                generator: format!("({})", name.join(", ")),
                tv,
            });
        }
    }
    Ok(ExchReport {
        pass: witnesses.is_empty(),
        statistical: false,
        checked: morphisms.len(),
        witnesses,
    })
}

/// For every pair of independent faces, the joint marginal is the product
/// of the two marginals.
pub fn check_independence_property(d: &WindowDistribution) -> Result<ExchReport> {
    require_exact(&d.dist)?;
    let faces = Face::all(d.k);
    let mut witnesses = Vec::new();
    let mut checked = 0;
    for (i, f1) in faces.iter().enumerate() {
        for f2 in &faces[i + 1..] {
            if !f1.independent_of(f2) {
                continue;
            }
            checked += 1;
            let v1 = f1.vertices();
            let v2 = f2.vertices();
            let joint: Vec<u32> = v1.iter().chain(&v2).copied().collect();
            let joint = pushforward_by_vertex_map(d, &joint)?;
            let product = pushforward_by_vertex_map(d, &v1)?.product(&pushforward_by_vertex_map(d, &v2)?)?;
            let tv = tv_distance(&joint, &product)?;
            if !tv.is_zero() {
                witnesses.push(Witness {
                    generator: format!(
                        "faces (free {:#b}, fixed {:#b}) and (free {:#b}, fixed {:#b})",
                        f1.free, f1.fixed, f2.free, f2.fixed
                    ),
                    tv,
                });
            }
        }
    }
    Ok(ExchReport {
        pass: witnesses.is_empty(),
        statistical: false,
        checked,
        witnesses,
    })
}
