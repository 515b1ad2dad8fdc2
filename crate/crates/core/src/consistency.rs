//! Consistency subgroups: the value tuples `(f(L'_1), …, f(L'_m))` reachable
//! by morphisms `f: D_1(F2^(s-1)) -> Z`, with membership decided by an
//! echelon form over `Z/2^E`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::f2::popcount;
use crate::group2::{FilteredGroup, GroupElement};
use crate::measures::LinearFormSystem;
use crate::poly::ell_for;

#[derive(Debug, Clone)]
struct Row {
    vec: Vec<u64>,
    combo: Vec<u64>,
}

#[derive(Debug, Clone)]
struct Pivot {
    col: usize,
    val: u32,
    row: Row,
}

/// The subgroup of `Z^m` of tuples consistent with a form system.
#[derive(Debug, Clone)]
pub struct ConsistencySubgroup {
    group: FilteredGroup,
    forms: LinearFormSystem,
    /// `(subset S, level generator g)` for each generator tuple.
    sources: Vec<(usize, GroupElement)>,
    generators: Vec<Vec<GroupElement>>,
    exp: u32,
    pivots: Vec<Pivot>,
}

/// Outcome of a membership query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Membership {
    pub member: bool,
    /// Coefficients `z_S` (by subset bitmask) of a morphism realizing the
    /// tuple, when it is a member.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<Vec<GroupElement>>,
    /// What is left after reducing by the echelon rows, when it is not.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<Vec<u64>>,
}

fn inverse_mod_pow2(u: u64, exp: u32) -> u64 {
    // Newton iteration; u is odd
    let mut x: u64 = 1;
    for _ in 0..7 {
        x = x.wrapping_mul(2u64.wrapping_sub(u.wrapping_mul(x)));
    }
    x & mask(exp)
}

#[inline]
fn mask(exp: u32) -> u64 {
    if exp >= 64 {
        u64::MAX
    } else {
        (1u64 << exp) - 1
    }
}

impl Row {
    fn scale(&mut self, t: u64, m: u64) {
        for x in self.vec.iter_mut().chain(self.combo.iter_mut()) {
            *x = x.wrapping_mul(t) & m;
        }
    }

    fn sub_multiple(&mut self, t: u64, other: &Row, m: u64) {
        for (x, y) in self.vec.iter_mut().zip(&other.vec) {
            *x = x.wrapping_sub(t.wrapping_mul(*y)) & m;
        }
        for (x, y) in self.combo.iter_mut().zip(&other.combo) {
            *x = x.wrapping_sub(t.wrapping_mul(*y)) & m;
        }
    }

    fn is_zero(&self) -> bool {
        self.vec.iter().all(|&x| x == 0)
    }
}

fn echelon(rows: Vec<Row>, exp: u32) -> Vec<Pivot> {
    let m = mask(exp);
    let ncols = rows.first().map_or(0, |r| r.vec.len());
    let mut pool: Vec<Row> = rows.into_iter().filter(|r| !r.is_zero()).collect();
    let mut pivots = Vec::new();
    for col in 0..ncols {
        let best = pool
            .iter()
            .enumerate()
            .filter(|(_, r)| r.vec[col] != 0)
            .min_by_key(|(_, r)| r.vec[col].trailing_zeros())
            .map(|(i, _)| i);
        let Some(i) = best else { continue };
        let mut p = pool.remove(i);
        let x = p.vec[col];
        let val = x.trailing_zeros();
        p.scale(inverse_mod_pow2(x >> val, exp), m);
        for r in pool.iter_mut() {
            let y = r.vec[col];
            if y != 0 {
                r.sub_multiple(y >> val, &p, m);
            }
        }
        let mut sat = p.clone();
        sat.scale(1u64 << (exp - val), m);
        pool.retain(|r| !r.is_zero());
        if !sat.is_zero() {
            pool.push(sat);
        }
        pivots.push(Pivot { col, val, row: p });
    }
    for i in 0..pivots.len() {
        let (col, val) = (pivots[i].col, pivots[i].val);
        let p = pivots[i].row.clone();
        for q in pivots[..i].iter_mut() {
            let t = q.row.vec[col] >> val;
            if t != 0 {
                q.row.sub_multiple(t, &p, m);
            }
        }
    }
    pivots
}

impl ConsistencySubgroup {
    pub fn group(&self) -> &FilteredGroup {
        &self.group
    }

    pub fn forms(&self) -> &LinearFormSystem {
        &self.forms
    }

    /// Images of the monomials `g·∏_{i∈S} v[i]`.
    pub fn generators(&self) -> &[Vec<GroupElement>] {
        &self.generators
    }

    /// Echelon rows in the embedding `Z/q_j -> Z/2^E`, `x -> x·2^E/q_j`,
    /// with tuple entry `i`, coordinate `j` at column `i·rank + j`.
    pub fn reduced_rows(&self) -> Vec<Vec<u64>> {
        self.pivots.iter().map(|p| p.row.vec.clone()).collect()
    }

    pub fn exponent(&self) -> u32 {
        self.exp
    }

    fn embed(&self, tuple: &[GroupElement]) -> Vec<u64> {
        embed_tuple(&self.group, self.exp, tuple)
    }

    pub fn membership(&self, tuple: &[GroupElement]) -> Result<Membership> {
        if tuple.len() != self.forms.len() {
            return Err(Error::invalid(format!(
                "tuple has {} entries for {} forms",
                tuple.len(),
                self.forms.len()
            )));
        }
        if let Some(x) = tuple.iter().find(|x| !self.group.contains(x)) {
            return Err(Error::invalid(format!("{x} is not an element of {}", self.group)));
        }
        let m = mask(self.exp);
        let mut rest = Row {
            vec: self.embed(tuple),
            combo: vec![0; self.generators.len()],
        };
        let mut combo = vec![0u64; self.generators.len()];
        for p in &self.pivots {
            let y = rest.vec[p.col];
            if y % (1u64 << p.val) != 0 {
                break;
            }
            let t = y >> p.val;
            rest.sub_multiple(t, &p.row, m);
            for (c, d) in combo.iter_mut().zip(&p.row.combo) {
                *c = c.wrapping_add(t.wrapping_mul(*d)) & m;
            }
        }
        if !rest.is_zero() {
            return Ok(Membership {
                member: false,
                certificate: None,
                residual: Some(rest.vec),
            });
        }
        let z = &self.group;
        let mut coeffs = vec![z.zero(); 1 << self.forms.k()];
        for ((s, g), &c) in self.sources.iter().zip(&combo) {
            let term = z.scale(g, c as i64);
            z.add_assign(&mut coeffs[*s], &term);
        }
        Ok(Membership {
            member: true,
            certificate: Some(coeffs),
            residual: None,
        })
    }

    pub fn contains(&self, tuple: &[GroupElement]) -> Result<bool> {
        Ok(self.membership(tuple)?.member)
    }
}

fn embed_tuple(z: &FilteredGroup, exp: u32, tuple: &[GroupElement]) -> Vec<u64> {
    tuple
        .iter()
        .flat_map(|x| {
            x.0.iter()
                .zip(z.moduli())
                .map(move |(&r, &q)| r << (exp - q.trailing_zeros()))
        })
        .collect()
}

/// The consistency subgroup of the forms `L'` (in F2^(s-1)) with values in
/// a 2-homogeneous `Z`.
pub fn consistent_subgroup(lprime: &LinearFormSystem, z: &FilteredGroup) -> Result<ConsistencySubgroup> {
    if !z.is_two_homogeneous() || z.moduli().iter().any(|q| !q.is_power_of_two()) {
        return Err(Error::NotTwoHomogeneous);
    }
    let exp = z.moduli().iter().map(|q| q.trailing_zeros()).max().unwrap_or(0);
    let k = lprime.k();
    let mut sources = Vec::new();
    let mut generators: Vec<Vec<GroupElement>> = Vec::new();
    for s in 0..1usize << k {
        for g in z.level_generators(popcount(s as u32) as usize) {
            let tuple = lprime
                .forms()
                .iter()
                .map(|&l| if l as usize & s == s { g.clone() } else { z.zero() })
                .collect();
            sources.push((s, g));
            generators.push(tuple);
        }
    }
    let count = generators.len();
    let rows = generators
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut combo = vec![0; count];
            combo[i] = 1;
            Row {
                vec: embed_tuple(z, exp, t),
                combo,
            }
        })
        .collect();
    let pivots = echelon(rows, exp);
    Ok(ConsistencySubgroup {
        group: z.clone(),
        forms: lprime.clone(),
        sources,
        generators,
        exp,
        pivots,
    })
}

/// Strips the leading 1 from each affine form.
pub fn drop_affine_coordinate(forms: &LinearFormSystem) -> Result<LinearFormSystem> {
    if forms.k() == 0 {
        return Err(Error::invalid("affine forms need at least one coordinate"));
    }
    if let Some(i) = forms.forms().iter().position(|&l| l & 1 == 0) {
        return Err(Error::NotAffine(i));
    }
    LinearFormSystem::new(forms.k() - 1, forms.forms().iter().map(|&l| l >> 1).collect())
}

/// The target `Z_{k,ℓ(k,r)} ≅ Z/2^(r+1)` for `(k, r)`-consistency.
pub fn consistency_target(k: u32, r: u32) -> Result<FilteredGroup> {
    let ell = ell_for(k, r)?;
    FilteredGroup::canonical(k as usize, ell as usize)
}

/// Whether `b` (residues mod `2^(r+1)`, i.e. values `b_i / 2^(r+1)`) is
/// `(k, r)`-consistent with the affine forms `L`.
pub fn is_consistent(b: &[u64], forms: &LinearFormSystem, k: u32, r: u32) -> Result<Membership> {
    let z = consistency_target(k, r)?;
    let q = z.moduli()[0];
    if let Some(&x) = b.iter().find(|&&x| x >= q) {
        return Err(Error::OutOfRange {
            what: "value",
            value: x as i64,
            range: format!("[0, {})", q),
        });
    }
    let lprime = drop_affine_coordinate(forms)?;
    let h = consistent_subgroup(&lprime, &z)?;
    let tuple: Vec<GroupElement> = b.iter().map(|&x| GroupElement(vec![x])).collect();
    h.membership(&tuple)
}
