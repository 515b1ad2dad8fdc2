//! Finite filtered abelian groups `Z = ∏ Z/q_j` whose filtration levels are
//! products of cyclic subgroups `c[i][j]·Z/q_j`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An element of `∏ Z/q_j`, one reduced residue per coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupElement(pub Vec<u64>);

impl GroupElement {
    pub fn zero(len: usize) -> Self {
        GroupElement(vec![0; len])
    }

    pub fn residues(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&r| r == 0)
    }

    /// Residues joined by `:`; the label used when group elements are
    /// themselves outcomes of a distribution.
    pub fn label(&self) -> String {
        if self.0.is_empty() {
            return "0".to_string();
        }
        self.0
            .iter()
            .map(|r| r.to_string())
            .collect::<Vec<_>>()
            .join(":")
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({})", self.label())
    }
}

/// A finite abelian group with a non-increasing filtration
/// `Z = Z_(0) = Z_(1) ⊇ Z_(2) ⊇ … ⊇ Z_(degree+1) = {0}`.
///
/// Level `i` is stored as the per-coordinate multipliers `c[i][j]`, so that
/// `Z_(i) = ∏_j c[i][j]·Z/q_j`. Levels above `degree + 1` are trivial.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "GroupSpec", into = "RawGroup")]
pub struct FilteredGroup {
    moduli: Vec<u64>,
    degree: usize,
    multipliers: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawGroup {
    moduli: Vec<u64>,
    degree: usize,
    multipliers: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, Deserialize)]
struct CanonicalSpec {
    k: usize,
    ell: usize,
}

#[derive(Debug, Clone, Deserialize)]
struct HTruncSpec {
    k: usize,
    widths: Vec<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GroupSpec {
    Canonical { canonical: CanonicalSpec },
    HTrunc { h_trunc: HTruncSpec },
    Explicit(RawGroup),
}

impl TryFrom<GroupSpec> for FilteredGroup {
    type Error = Error;

    fn try_from(spec: GroupSpec) -> Result<Self> {
        match spec {
            GroupSpec::Canonical { canonical } => {
                FilteredGroup::canonical(canonical.k, canonical.ell)
            }
            GroupSpec::HTrunc { h_trunc } => {
                FilteredGroup::h_truncation(h_trunc.k, &h_trunc.widths)
            }
            GroupSpec::Explicit(raw) => FilteredGroup::new(raw.moduli, raw.degree, raw.multipliers),
        }
    }
}

impl From<FilteredGroup> for RawGroup {
    fn from(g: FilteredGroup) -> Self {
        RawGroup {
            moduli: g.moduli,
            degree: g.degree,
            multipliers: g.multipliers,
        }
    }
}

fn is_prime_power(q: u64) -> bool {
    if q < 2 {
        return false;
    }
    let mut p = 2;
    while p * p <= q {
        if q % p == 0 {
            let mut r = q;
            while r % p == 0 {
                r /= p;
            }
            return r == 1;
        }
        p += 1;
    }
    true
}

impl FilteredGroup {
    /// Builds a filtered group from moduli and the multiplier matrix for
    /// levels `0..=degree+1`.
    pub fn new(moduli: Vec<u64>, degree: usize, multipliers: Vec<Vec<u64>>) -> Result<Self> {
        if let Some(q) = moduli.iter().find(|&&q| !is_prime_power(q)) {
            return Err(Error::InvalidGroup(format!("modulus {q} is not a prime power")));
        }
        if multipliers.len() != degree + 2 {
            return Err(Error::InvalidGroup(format!(
                "expected {} filtration levels for degree {degree}, got {}",
                degree + 2,
                multipliers.len()
            )));
        }
        for (i, row) in multipliers.iter().enumerate() {
            if row.len() != moduli.len() {
                return Err(Error::InvalidGroup(format!(
                    "level {i} has {} multipliers for {} coordinates",
                    row.len(),
                    moduli.len()
                )));
            }
            for (j, (&c, &q)) in row.iter().zip(&moduli).enumerate() {
                if c == 0 || q % c != 0 {
                    return Err(Error::InvalidGroup(format!(
                        "multiplier {c} at level {i}, coordinate {j} does not divide {q}"
                    )));
                }
                if i <= 1 && c != 1 {
                    return Err(Error::InvalidGroup(format!(
                        "level {i} must be the whole group (coordinate {j} has multiplier {c})"
                    )));
                }
                if i > 0 && c % multipliers[i - 1][j] != 0 {
                    return Err(Error::InvalidGroup(format!(
                        "level {i} is not contained in level {} at coordinate {j}",
                        i - 1
                    )));
                }
                if i == degree + 1 && c != q {
                    return Err(Error::InvalidGroup(format!(
                        "level {i} = degree + 1 must be trivial (coordinate {j})"
                    )));
                }
            }
        }
        Ok(FilteredGroup {
            moduli,
            degree,
            multipliers,
        })
    }

    pub fn trivial() -> Self {
        FilteredGroup {
            moduli: Vec::new(),
            degree: 0,
            multipliers: vec![Vec::new(), Vec::new()],
        }
    }

    /// `D_d(Z/q)`: every level up to `d` is the whole group.
    pub fn cyclic_standard(q: u64, degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidGroup(
                "a nontrivial group needs degree at least 1".into(),
            ));
        }
        let mut multipliers = vec![vec![1]; degree + 1];
        multipliers.push(vec![q]);
        FilteredGroup::new(vec![q], degree, multipliers)
    }

    /// The canonical 2-homogeneous block `Z_{k,ℓ}`: a cyclic group of order
    /// `2^(k-ℓ+1)` with levels `Z` for `i ≤ ℓ` and `2^(i-ℓ)·Z` above.
    pub fn canonical(k: usize, ell: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::OutOfRange {
                what: "k",
                value: 0,
                range: "[1, ∞)".into(),
            });
        }
        if ell < 1 || ell > k {
            return Err(Error::OutOfRange {
                what: "ell",
                value: ell as i64,
                range: format!("[1, {k}]"),
            });
        }
        let exp = (k - ell + 1) as u32;
        if exp > 62 {
            return Err(Error::InvalidGroup(format!("order 2^{exp} is too large")));
        }
        let q = 1u64 << exp;
        let multipliers = (0..=k + 1)
            .map(|i| {
                let c = if i <= ell { 1 } else { 1u64 << (i - ell).min(exp as usize) };
                vec![c.min(q)]
            })
            .collect();
        FilteredGroup::new(vec![q], k, multipliers)
    }

    /// The degree-`k`, finite-width truncation `∏_ℓ Z_{k,ℓ}^{w_ℓ}` of the
    /// universal 2-homogeneous group.
    pub fn h_truncation(k: usize, widths: &[usize]) -> Result<Self> {
        if k == 0 {
            return Err(Error::OutOfRange {
                what: "k",
                value: 0,
                range: "[1, ∞)".into(),
            });
        }
        if widths.len() != k {
            return Err(Error::invalid(format!(
                "h_trunc with k = {k} needs {k} widths, got {}",
                widths.len()
            )));
        }
        let mut out = FilteredGroup::trivial();
        for (idx, &w) in widths.iter().enumerate() {
            let block = FilteredGroup::canonical(k, idx + 1)?;
            for _ in 0..w {
                out = out.product(&block);
            }
        }
        Ok(out)
    }

    pub fn moduli(&self) -> &[u64] {
        &self.moduli
    }

    pub fn rank(&self) -> usize {
        self.moduli.len()
    }

    /// The stored degree (levels above `degree` are trivial).
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Least `d` with `Z_(d+1)` trivial.
    pub fn effective_degree(&self) -> usize {
        (0..=self.degree)
            .find(|&d| self.level_order(d + 1) == 1)
            .unwrap_or(self.degree)
    }

    pub fn multipliers(&self) -> &[Vec<u64>] {
        &self.multipliers
    }

    /// `c[i][j]`, with the trivial tail for `i > degree + 1`.
    #[inline]
    pub fn level_multiplier(&self, level: usize, coord: usize) -> u64 {
        let i = level.min(self.degree + 1);
        self.multipliers[i][coord]
    }

    pub fn order(&self) -> u64 {
        self.moduli.iter().product()
    }

    pub fn level_order(&self, level: usize) -> u64 {
        (0..self.rank())
            .map(|j| self.moduli[j] / self.level_multiplier(level, j))
            .product()
    }

    pub fn zero(&self) -> GroupElement {
        GroupElement::zero(self.rank())
    }

    pub fn element(&self, residues: &[i64]) -> Result<GroupElement> {
        if residues.len() != self.rank() {
            return Err(Error::invalid(format!(
                "element has {} residues, group has {} coordinates",
                residues.len(),
                self.rank()
            )));
        }
        Ok(GroupElement(
            residues
                .iter()
                .zip(&self.moduli)
                .map(|(&r, &q)| r.rem_euclid(q as i64) as u64)
                .collect(),
        ))
    }

    pub fn contains(&self, x: &GroupElement) -> bool {
        x.len() == self.rank() && x.0.iter().zip(&self.moduli).all(|(&r, &q)| r < q)
    }

    #[inline]
    pub fn add(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let mut out = a.clone();
        self.add_assign(&mut out, b);
        out
    }

    #[inline]
    pub fn add_assign(&self, a: &mut GroupElement, b: &GroupElement) {
        for ((x, &y), &q) in a.0.iter_mut().zip(&b.0).zip(&self.moduli) {
            *x = (*x + y) % q;
        }
    }

    #[inline]
    pub fn sub_assign(&self, a: &mut GroupElement, b: &GroupElement) {
        for ((x, &y), &q) in a.0.iter_mut().zip(&b.0).zip(&self.moduli) {
            *x = (*x + q - y) % q;
        }
    }

    #[inline]
    pub fn sub(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let mut out = a.clone();
        self.sub_assign(&mut out, b);
        out
    }

    pub fn neg(&self, a: &GroupElement) -> GroupElement {
        self.sub(&self.zero(), a)
    }

    pub fn scale(&self, a: &GroupElement, n: i64) -> GroupElement {
        GroupElement(
            a.0.iter()
                .zip(&self.moduli)
                .map(|(&x, &q)| ((x as i128 * n as i128).rem_euclid(q as i128)) as u64)
                .collect(),
        )
    }

    #[inline]
    pub fn in_level(&self, x: &GroupElement, level: usize) -> bool {
        x.0.iter()
            .enumerate()
            .all(|(j, &r)| r % self.level_multiplier(level, j) == 0)
    }

    /// Index of `x` in mixed radix, first coordinate fastest.
    #[inline]
    pub fn encode(&self, x: &GroupElement) -> usize {
        let mut idx = 0usize;
        for (&r, &q) in x.0.iter().zip(&self.moduli).rev() {
            idx = idx * q as usize + r as usize;
        }
        idx
    }

    pub fn decode(&self, mut idx: usize) -> GroupElement {
        GroupElement(
            self.moduli
                .iter()
                .map(|&q| {
                    let r = idx % q as usize;
                    idx /= q as usize;
                    r as u64
                })
                .collect(),
        )
    }

    /// All elements in encoding order.
    pub fn elements(&self) -> impl Iterator<Item = GroupElement> + '_ {
        (0..self.order() as usize).map(move |i| self.decode(i))
    }

    /// Every element of `Z_(level)` exactly once.
    pub fn level_members(&self, level: usize) -> Result<LevelMembers<'_>> {
        if level > self.degree + 1 {
            return Err(Error::OutOfRange {
                what: "level",
                value: level as i64,
                range: format!("[0, {}]", self.degree + 1),
            });
        }
        Ok(self.level_members_unchecked(level))
    }

    pub(crate) fn level_members_unchecked(&self, level: usize) -> LevelMembers<'_> {
        let steps = (0..self.rank())
            .map(|j| self.level_multiplier(level, j))
            .collect();
        LevelMembers {
            group: self,
            steps,
            next: Some(self.zero()),
        }
    }

    /// One generator per nontrivial cyclic factor of `Z_(level)`.
    pub fn level_generators(&self, level: usize) -> Vec<GroupElement> {
        (0..self.rank())
            .filter_map(|j| {
                let c = self.level_multiplier(level, j);
                (c < self.moduli[j]).then(|| {
                    let mut g = self.zero();
                    g.0[j] = c;
                    g
                })
            })
            .collect()
    }

    /// Direct product with the level-wise product filtration.
    pub fn product(&self, other: &FilteredGroup) -> FilteredGroup {
        let degree = self.degree.max(other.degree);
        let mut moduli = self.moduli.clone();
        moduli.extend_from_slice(&other.moduli);
        let multipliers = (0..=degree + 1)
            .map(|i| {
                let mut row: Vec<u64> =
                    (0..self.rank()).map(|j| self.level_multiplier(i, j)).collect();
                row.extend((0..other.rank()).map(|j| other.level_multiplier(i, j)));
                row
            })
            .collect();
        FilteredGroup {
            moduli,
            degree,
            multipliers,
        }
    }

    /// `Z / Z_(j)` with the induced filtration and degree `j - 1`.
    pub fn quotient_by_level(&self, j: usize) -> Result<FilteredGroup> {
        Ok(self.quotient_map(j)?.target)
    }

    pub fn quotient_map(&self, j: usize) -> Result<QuotientMap> {
        if j < 1 || j > self.degree + 1 {
            return Err(Error::OutOfRange {
                what: "j",
                value: j as i64,
                range: format!("[1, {}]", self.degree + 1),
            });
        }
        let kept: Vec<usize> = (0..self.rank())
            .filter(|&c| self.level_multiplier(j, c) > 1)
            .collect();
        let moduli: Vec<u64> = kept.iter().map(|&c| self.level_multiplier(j, c)).collect();
        let multipliers = (0..=j)
            .map(|i| kept.iter().map(|&c| self.level_multiplier(i.min(j), c)).collect())
            .collect();
        let target = FilteredGroup {
            moduli,
            degree: j - 1,
            multipliers,
        };
        Ok(QuotientMap { target, kept })
    }

    /// `2g ∈ Z_(i+1)` for every `g ∈ Z_(i)` and every level `i`.
    pub fn is_two_homogeneous(&self) -> bool {
        (0..=self.degree + 1).all(|i| {
            (0..self.rank()).all(|j| {
                let q = self.moduli[j];
                let doubled = (2 * self.level_multiplier(i, j)) % q;
                doubled % self.level_multiplier(i + 1, j) == 0
            })
        })
    }
}

impl fmt::Display for FilteredGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.moduli.is_empty() {
            return write!(f, "{{0}}");
        }
        let factors: Vec<String> = self.moduli.iter().map(|q| format!("Z/{q}")).collect();
        write!(f, "{} (degree {})", factors.join(" x "), self.degree)
    }
}

/// The canonical projection `Z -> Z / Z_(j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotientMap {
    pub target: FilteredGroup,
    kept: Vec<usize>,
}

impl QuotientMap {
    pub fn apply(&self, x: &GroupElement) -> GroupElement {
        GroupElement(
            self.kept
                .iter()
                .zip(self.target.moduli())
                .map(|(&c, &q)| x.0[c] % q)
                .collect(),
        )
    }
}

pub struct LevelMembers<'a> {
    group: &'a FilteredGroup,
    steps: Vec<u64>,
    next: Option<GroupElement>,
}

impl Iterator for LevelMembers<'_> {
    type Item = GroupElement;

    fn next(&mut self) -> Option<GroupElement> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for (j, r) in succ.0.iter_mut().enumerate() {
            *r += self.steps[j];
            if *r < self.group.moduli[j] {
                carried = false;
                break;
            }
            *r = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}
