//! Host–Kra cube groups `C^k(Z)`.
//!
//! A cube is a map `{0,1}^k -> Z`. Vertices are little-endian bitmasks (bit
//! `i - 1` of the index is `v[i]`). Every cube has a unique expansion
//! `q(v) = Σ_S z_S ∏_{i∈S} v[i]` with `z_S ∈ Z_(|S|)`, and that coefficient
//! form is what sampling and counting work with.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::f2::{popcount, MAX_DIM};
use crate::group2::{FilteredGroup, GroupElement};

/// Coefficients `z_S`, indexed by subset bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "CoeffsJson", into = "CoeffsJson")]
pub struct CubeCoeffs {
    pub k: usize,
    pub coeffs: Vec<GroupElement>,
}

#[derive(Serialize, Deserialize)]
struct CoeffsJson {
    k: usize,
    coeffs: BTreeMap<String, GroupElement>,
}

impl From<CubeCoeffs> for CoeffsJson {
    fn from(c: CubeCoeffs) -> Self {
        CoeffsJson {
            k: c.k,
            coeffs: c
                .coeffs
                .into_iter()
                .enumerate()
                .map(|(s, z)| (s.to_string(), z))
                .collect(),
        }
    }
}

impl TryFrom<CoeffsJson> for CubeCoeffs {
    type Error = Error;

    fn try_from(raw: CoeffsJson) -> Result<Self> {
        check_dim(raw.k)?;
        let mut slots: Vec<Option<GroupElement>> = vec![None; 1 << raw.k];
        for (key, z) in raw.coeffs {
            let s: usize = key
                .parse()
                .map_err(|_| Error::invalid(format!("subset key {key:?} is not an integer")))?;
            let slot = slots
                .get_mut(s)
                .ok_or_else(|| Error::invalid(format!("subset {s} does not fit in k = {}", raw.k)))?;
            *slot = Some(z);
        }
        let coeffs = slots
            .into_iter()
            .enumerate()
            .map(|(s, z)| z.ok_or_else(|| Error::invalid(format!("missing coefficient for subset {s}"))))
            .collect::<Result<_>>()?;
        Ok(CubeCoeffs { k: raw.k, coeffs })
    }
}

/// A vertex table `{0,1}^k -> Z`; membership in the cube group is checked
/// separately.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CubePoint {
    pub k: usize,
    pub values: Vec<GroupElement>,
}

impl CubePoint {
    pub fn constant(k: usize, g: GroupElement) -> Self {
        CubePoint {
            k,
            values: vec![g; 1 << k],
        }
    }
}

/// A corner: a vertex table with exactly one missing value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corner {
    pub k: usize,
    pub values: Vec<Option<GroupElement>>,
}

impl Corner {
    pub fn from_cube(q: &CubePoint, missing: usize) -> Self {
        let mut values: Vec<_> = q.values.iter().cloned().map(Some).collect();
        values[missing] = None;
        Corner { k: q.k, values }
    }

    pub fn missing(&self) -> Result<usize> {
        if self.values.len() != 1 << self.k {
            return Err(Error::InvalidCorner(format!(
                "expected {} vertices, got {}",
                1usize << self.k,
                self.values.len()
            )));
        }
        let holes: Vec<usize> = (0..self.values.len())
            .filter(|&v| self.values[v].is_none())
            .collect();
        match holes.as_slice() {
            [w] => Ok(*w),
            _ => Err(Error::InvalidCorner(format!(
                "expected exactly one missing vertex, found {}",
                holes.len()
            ))),
        }
    }

    fn filled(&self, w: usize, g: GroupElement) -> CubePoint {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(v, x)| if v == w { g.clone() } else { x.clone().unwrap() })
            .collect();
        CubePoint { k: self.k, values }
    }
}

fn check_dim(k: usize) -> Result<()> {
    if k > MAX_DIM {
        return Err(Error::OutOfRange {
            what: "cube dimension",
            value: k as i64,
            range: format!("[0, {MAX_DIM}]"),
        });
    }
    Ok(())
}

/// `q(v) = Σ_{S ⊆ supp(v)} z_S`.
pub fn evaluate(z: &FilteredGroup, c: &CubeCoeffs) -> CubePoint {
    let mut values = c.coeffs.clone();
    for i in 0..c.k {
        let bit = 1 << i;
        for v in 0..values.len() {
            if v & bit != 0 {
                let (lo, hi) = values.split_at_mut(v);
                z.add_assign(&mut hi[0], &lo[v ^ bit]);
            }
        }
    }
    CubePoint { k: c.k, values }
}

/// Möbius inversion of [`evaluate`]. The result need not satisfy the level
/// constraints; see [`coeffs_are_valid`].
pub fn coeffs_from_cube(z: &FilteredGroup, q: &CubePoint) -> CubeCoeffs {
    let mut coeffs = q.values.clone();
    mobius_in_place(z, &mut coeffs, q.k, usize::MAX);
    CubeCoeffs { k: q.k, coeffs }
}

/// Successive differences along the bits of `dirs`.
fn mobius_in_place(z: &FilteredGroup, table: &mut [GroupElement], k: usize, dirs: usize) {
    for i in 0..k {
        let bit = 1 << i;
        if dirs & bit == 0 {
            continue;
        }
        for v in 0..table.len() {
            if v & bit != 0 {
                let (lo, hi) = table.split_at_mut(v);
                z.sub_assign(&mut hi[0], &lo[v ^ bit]);
            }
        }
    }
}

pub fn coeffs_are_valid(z: &FilteredGroup, c: &CubeCoeffs) -> bool {
    c.coeffs
        .iter()
        .enumerate()
        .all(|(s, g)| z.in_level(g, popcount(s as u32) as usize))
}

/// Alternating sum of `q` over the face with free coordinates `free` and the
/// remaining coordinates fixed to `fixed`. The vertex `fixed | free` carries
/// sign `+`.
pub fn face_sum(z: &FilteredGroup, q: &CubePoint, free: usize, fixed: usize) -> GroupElement {
    let fixed = fixed & !free;
    let s = popcount(free as u32);
    let mut acc = z.zero();
    let mut t = free;
    loop {
        let v = fixed | t;
        if (s - popcount(t as u32)) % 2 == 0 {
            z.add_assign(&mut acc, &q.values[v]);
        } else {
            z.sub_assign(&mut acc, &q.values[v]);
        }
        if t == 0 {
            break;
        }
        t = (t - 1) & free;
    }
    acc
}

/// Membership in `C^k(Z)`: every face of dimension `s` has alternating sum
/// in `Z_(s)`.
pub fn is_cube(z: &FilteredGroup, q: &CubePoint) -> bool {
    failing_face(z, q, None).is_none()
}

/// Membership via the coefficient route.
pub fn is_cube_by_coeffs(z: &FilteredGroup, q: &CubePoint) -> bool {
    coeffs_are_valid(z, &coeffs_from_cube(z, q))
}

/// First face `(free, fixed)` whose alternating sum leaves its level,
/// optionally ignoring faces that contain vertex `skip`.
pub fn failing_face(z: &FilteredGroup, q: &CubePoint, skip: Option<usize>) -> Option<(usize, usize)> {
    let n = q.values.len();
    for free in 0..n {
        let level = popcount(free as u32) as usize;
        let mut diffs = q.values.clone();
        mobius_in_place(z, &mut diffs, q.k, free);
        for fixed in 0..n {
            if fixed & free != 0 {
                continue;
            }
            if let Some(w) = skip {
                if w & !free == fixed {
                    continue;
                }
            }
            if !z.in_level(&diffs[fixed | free], level) {
                return Some((free, fixed));
            }
        }
    }
    None
}

/// Completes a corner of dimension `k > degree(Z)` with its unique missing
/// value.
pub fn complete_corner(z: &FilteredGroup, corner: &Corner) -> Result<CubePoint> {
    let w = corner.missing()?;
    let k = corner.k;
    let probe = corner.filled(w, z.zero());
    if let Some((free, fixed)) = failing_face(z, &probe, Some(w)) {
        return Err(Error::InvalidCorner(format!(
            "face with free coordinates {free:#b} and fixed bits {fixed:#b} is not a cube"
        )));
    }
    let degree = z.effective_degree();
    if k <= degree {
        return Err(Error::NonUniqueCompletion {
            dimension: k,
            degree,
            completions: count_completions(z, corner)?,
        });
    }
    let value = forced_value(z, corner)?;
    let q = corner.filled(w, value);
    if !is_cube(z, &q) {
        return Err(Error::InvalidCorner(
            "the forced value does not complete a cube".into(),
        ));
    }
    Ok(q)
}

/// The value at the missing vertex forced by `σ_k(q) = 0`, without checking
/// any other face.
pub fn forced_value(z: &FilteredGroup, corner: &Corner) -> Result<GroupElement> {
    let w = corner.missing()?;
    // (-1)^{|w|} q(w) = -Σ_{v≠w} (-1)^{|v|} q(v)
    let mut rest = z.zero();
    for (v, x) in corner.values.iter().enumerate() {
        if let Some(x) = x {
            if popcount(v as u32) % 2 == 0 {
                z.add_assign(&mut rest, x);
            } else {
                z.sub_assign(&mut rest, x);
            }
        }
    }
    Ok(if popcount(w as u32) % 2 == 0 {
        z.neg(&rest)
    } else {
        rest
    })
}

/// Number of values at the missing vertex that complete the corner.
pub fn count_completions(z: &FilteredGroup, corner: &Corner) -> Result<usize> {
    let w = corner.missing()?;
    Ok(z
        .elements()
        .filter(|g| is_cube(z, &corner.filled(w, g.clone())))
        .count())
}

/// `|C^n(Z)| = ∏_s |Z_(s)|^{C(n,s)}`.
pub fn cube_count(z: &FilteredGroup, n: usize) -> BigUint {
    let mut total = BigUint::from(1u32);
    let mut binom = BigUint::from(1u32);
    for s in 0..=n {
        total *= BigUint::from(z.level_order(s)).pow(
            u32::try_from(&binom).expect("binomial coefficient exceeds u32"),
        );
        binom = binom * BigUint::from(n - s) / BigUint::from(s + 1);
    }
    total
}

/// A Haar-random element of `C^k(Z)`: independent uniform coefficients.
pub fn sample_cube<R: Rng + ?Sized>(z: &FilteredGroup, k: usize, rng: &mut R) -> CubeCoeffs {
    let coeffs = (0..1usize << k)
        .map(|s| sample_level(z, popcount(s as u32) as usize, rng))
        .collect();
    CubeCoeffs { k, coeffs }
}

pub fn sample_level<R: Rng + ?Sized>(z: &FilteredGroup, level: usize, rng: &mut R) -> GroupElement {
    GroupElement(
        z.moduli()
            .iter()
            .enumerate()
            .map(|(j, &q)| {
                let c = z.level_multiplier(level, j);
                if c == q {
                    0
                } else {
                    rng.gen_range(0..q / c) * c
                }
            })
            .collect(),
    )
}

/// Calls `f` on every coefficient vector of `C^k(Z)`.
pub fn for_each_coeffs(z: &FilteredGroup, k: usize, f: impl FnMut(&CubeCoeffs)) {
    odometer(z, k, 0, f)
}

/// Like [`for_each_coeffs`] with `z_∅ = 0`.
pub fn for_each_based_coeffs(z: &FilteredGroup, k: usize, f: impl FnMut(&CubeCoeffs)) {
    odometer(z, k, 1, f)
}

fn odometer(z: &FilteredGroup, k: usize, first: usize, mut f: impl FnMut(&CubeCoeffs)) {
    let slots = 1usize << k;
    let levels: Vec<Vec<GroupElement>> = (0..=k)
        .map(|s| z.level_members_unchecked(s).collect())
        .collect();
    let pick = |s: usize| &levels[popcount(s as u32) as usize];
    let mut idx = vec![0usize; slots];
    let mut c = CubeCoeffs {
        k,
        coeffs: (0..slots).map(|s| pick(s)[0].clone()).collect(),
    };
    loop {
        f(&c);
        let mut s = first;
        loop {
            if s == slots {
                return;
            }
            idx[s] += 1;
            if idx[s] < pick(s).len() {
                c.coeffs[s] = pick(s)[idx[s]].clone();
                break;
            }
            idx[s] = 0;
            c.coeffs[s] = pick(s)[0].clone();
            s += 1;
        }
    }
}

/// All of `C^k(Z)` as vertex tables, via the coefficient parametrization.
pub fn all_cubes(z: &FilteredGroup, k: usize) -> Vec<CubePoint> {
    let mut out = Vec::new();
    for_each_coeffs(z, k, |c| out.push(evaluate(z, c)));
    out
}

/// All vertex tables passing the face constraints, found by backtracking
/// over vertex values without using coefficients. Faces are checked as soon
/// as their top vertex is assigned.
pub fn enumerate_cubes_by_faces(z: &FilteredGroup, k: usize) -> Vec<CubePoint> {
    let elements: Vec<GroupElement> = z.elements().collect();
    let mut table = CubePoint {
        k,
        values: vec![z.zero(); 1 << k],
    };
    let mut out = Vec::new();
    fill_vertex(z, &elements, &mut table, 0, &mut out);
    out
}

fn fill_vertex(
    z: &FilteredGroup,
    elements: &[GroupElement],
    table: &mut CubePoint,
    v: usize,
    out: &mut Vec<CubePoint>,
) {
    if v == table.values.len() {
        out.push(table.clone());
        return;
    }
    'candidates: for g in elements {
        table.values[v] = g.clone();
        let mut free = v;
        loop {
            if free != 0 {
                let s = popcount(free as u32) as usize;
                if !z.in_level(&face_sum(z, table, free, v & !free), s) {
                    continue 'candidates;
                }
            }
            if free == 0 {
                break;
            }
            free = (free - 1) & v;
        }
        fill_vertex(z, elements, table, v + 1, out);
    }
}

/// One output coordinate of a discrete-cube morphism `{0,1}^m -> {0,1}^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MorphCoord {
    Zero,
    One,
    /// `v[i]`, zero-based.
    Var(usize),
    /// `1 - v[i]`, zero-based.
    NegVar(usize),
}

impl MorphCoord {
    #[inline]
    fn eval(self, u: usize) -> usize {
        match self {
            MorphCoord::Zero => 0,
            MorphCoord::One => 1,
            MorphCoord::Var(i) => (u >> i) & 1,
            MorphCoord::NegVar(i) => 1 ^ ((u >> i) & 1),
        }
    }
}

impl fmt::Display for MorphCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MorphCoord::Zero => write!(f, "0"),
            MorphCoord::One => write!(f, "1"),
            MorphCoord::Var(i) => write!(f, "v{}", i + 1),
            MorphCoord::NegVar(i) => write!(f, "1-v{}", i + 1),
        }
    }
}

impl FromStr for MorphCoord {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::MalformedMorphism(format!("cannot parse coordinate {s:?}"));
        let var = |t: &str| -> Result<usize> {
            let i: usize = t.strip_prefix('v').ok_or_else(bad)?.parse().map_err(|_| bad())?;
            i.checked_sub(1).ok_or_else(bad)
        };
        match s.trim() {
            "0" => Ok(MorphCoord::Zero),
            "1" => Ok(MorphCoord::One),
            t if t.starts_with("1-") => Ok(MorphCoord::NegVar(var(&t[2..])?)),
            t => Ok(MorphCoord::Var(var(t)?)),
        }
    }
}

impl TryFrom<String> for MorphCoord {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<MorphCoord> for String {
    fn from(c: MorphCoord) -> String {
        c.to_string()
    }
}

/// A discrete-cube morphism `{0,1}^m -> {0,1}^k`, one descriptor per output
/// coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubeMorphism {
    pub m: usize,
    pub coords: Vec<MorphCoord>,
}

impl CubeMorphism {
    pub fn new(m: usize, coords: Vec<MorphCoord>) -> Result<Self> {
        check_dim(m)?;
        check_dim(coords.len())?;
        for c in &coords {
            if let MorphCoord::Var(i) | MorphCoord::NegVar(i) = *c {
                if i >= m {
                    return Err(Error::MalformedMorphism(format!(
                        "coordinate {c} refers to a variable outside {{0,1}}^{m}"
                    )));
                }
            }
        }
        Ok(CubeMorphism { m, coords })
    }

    pub fn identity(k: usize) -> Self {
        CubeMorphism {
            m: k,
            coords: (0..k).map(MorphCoord::Var).collect(),
        }
    }

    pub fn target_dim(&self) -> usize {
        self.coords.len()
    }

    #[inline]
    pub fn apply(&self, u: usize) -> usize {
        self.coords
            .iter()
            .enumerate()
            .fold(0, |acc, (i, c)| acc | (c.eval(u) << i))
    }

    /// Injective iff every input variable occurs in some coordinate.
    pub fn is_injective(&self) -> bool {
        (0..self.m).all(|i| {
            self.coords
                .iter()
                .any(|c| matches!(c, MorphCoord::Var(j) | MorphCoord::NegVar(j) if *j == i))
        })
    }

    /// Every morphism `{0,1}^m -> {0,1}^k`.
    pub fn all(m: usize, k: usize) -> Vec<CubeMorphism> {
        let choices: Vec<MorphCoord> = [MorphCoord::Zero, MorphCoord::One]
            .into_iter()
            .chain((0..m).flat_map(|i| [MorphCoord::Var(i), MorphCoord::NegVar(i)]))
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; k];
        loop {
            out.push(CubeMorphism {
                m,
                coords: idx.iter().map(|&i| choices[i]).collect(),
            });
            let mut pos = 0;
            loop {
                if pos == k {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] < choices.len() {
                    break;
                }
                idx[pos] = 0;
                pos += 1;
            }
        }
    }

    pub fn injective(m: usize, k: usize) -> Vec<CubeMorphism> {
        CubeMorphism::all(m, k)
            .into_iter()
            .filter(CubeMorphism::is_injective)
            .collect()
    }
}

/// `q ∘ φ`.
pub fn restrict(q: &CubePoint, phi: &CubeMorphism) -> Result<CubePoint> {
    if phi.target_dim() != q.k {
        return Err(Error::MalformedMorphism(format!(
            "morphism lands in {{0,1}}^{} but the cube has dimension {}",
            phi.target_dim(),
            q.k
        )));
    }
    let values = (0..1usize << phi.m)
        .map(|u| q.values[phi.apply(u)].clone())
        .collect();
    Ok(CubePoint { k: phi.m, values })
}
