//! Non-classical polynomials `F2^n -> (1/2^D)Z/Z`, stored as residues mod
//! `2^D` in vertex order.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::f2::{popcount, MAX_DIM};
use crate::group2::FilteredGroup;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "PolyJson", into = "PolyJson")]
pub struct NonClassicalPoly {
    n: usize,
    denom: u32,
    table: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct PolyJson {
    n: usize,
    #[serde(rename = "D")]
    denom: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    table: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<BTreeMap<String, u64>>,
}

impl TryFrom<PolyJson> for NonClassicalPoly {
    type Error = Error;

    fn try_from(raw: PolyJson) -> Result<Self> {
        match (raw.table, raw.coeffs) {
            (Some(table), None) => NonClassicalPoly::new(raw.n, raw.denom, table),
            (None, Some(map)) => {
                if raw.n > MAX_DIM {
                    return Err(Error::invalid(format!("arity {} is too large", raw.n)));
                }
                let mut coeffs = vec![0u64; 1 << raw.n];
                for (key, w) in map {
                    let s: usize = key
                        .parse()
                        .ok()
                        .filter(|&s| s < coeffs.len())
                        .ok_or_else(|| Error::invalid(format!("bad subset key {key:?}")))?;
                    coeffs[s] = w;
                }
                NonClassicalPoly::from_coeffs(raw.n, raw.denom, coeffs)
            }
            _ => Err(Error::invalid("polynomial needs exactly one of \"table\" or \"coeffs\"")),
        }
    }
}

impl From<NonClassicalPoly> for PolyJson {
    fn from(p: NonClassicalPoly) -> Self {
        PolyJson {
            n: p.n,
            denom: p.denom,
            table: Some(p.table),
            coeffs: None,
        }
    }
}

impl NonClassicalPoly {
    pub fn new(n: usize, denom: u32, table: Vec<u64>) -> Result<Self> {
        if n > MAX_DIM {
            return Err(Error::invalid(format!("arity {n} is too large")));
        }
        if denom > 62 {
            return Err(Error::invalid(format!("denominator 2^{denom} is too large")));
        }
        if table.len() != 1 << n {
            return Err(Error::invalid(format!(
                "table has {} entries, expected 2^{n}",
                table.len()
            )));
        }
        let modulus = 1u64 << denom;
        if let Some(x) = table.iter().find(|&&x| x >= modulus) {
            return Err(Error::invalid(format!("residue {x} is not reduced mod 2^{denom}")));
        }
        Ok(NonClassicalPoly { n, denom, table })
    }

    /// From Taylor coefficients `w_S` (indexed by subset bitmask):
    /// `P(v) = Σ_{S ⊆ supp(v)} w_S`.
    pub fn from_coeffs(n: usize, denom: u32, coeffs: Vec<u64>) -> Result<Self> {
        let modulus = 1u64 << denom.min(62);
        let mut table: Vec<u64> = coeffs.into_iter().map(|w| w % modulus).collect();
        if table.len() != 1 << n {
            return Err(Error::invalid(format!(
                "{} coefficients, expected 2^{n}",
                table.len()
            )));
        }
        for i in 0..n {
            for v in 0..table.len() {
                if v >> i & 1 == 1 {
                    table[v] = (table[v] + table[v ^ (1 << i)]) % modulus;
                }
            }
        }
        NonClassicalPoly::new(n, denom, table)
    }

    pub fn zero(n: usize, denom: u32) -> Self {
        NonClassicalPoly {
            n,
            denom,
            table: vec![0; 1 << n],
        }
    }

    /// `value · ∏_{i∈S} v[i]`.
    pub fn monomial(n: usize, denom: u32, subset: usize, value: u64) -> Result<Self> {
        let mut coeffs = vec![0; 1 << n];
        *coeffs
            .get_mut(subset)
            .ok_or_else(|| Error::invalid(format!("subset {subset} exceeds arity {n}")))? = value;
        NonClassicalPoly::from_coeffs(n, denom, coeffs)
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn denominator_exponent(&self) -> u32 {
        self.denom
    }

    pub fn table(&self) -> &[u64] {
        &self.table
    }

    fn modulus(&self) -> u64 {
        1 << self.denom
    }

    #[inline]
    pub fn eval(&self, x: u32) -> u64 {
        self.table[x as usize]
    }

    pub fn is_zero(&self) -> bool {
        self.table.iter().all(|&x| x == 0)
    }

    pub fn coeffs(&self) -> Vec<u64> {
        let m = self.modulus();
        let mut c = self.table.clone();
        for i in 0..self.n {
            for v in 0..c.len() {
                if v >> i & 1 == 1 {
                    c[v] = (c[v] + m - c[v ^ (1 << i)]) % m;
                }
            }
        }
        c
    }

    /// `P - P(0)`.
    pub fn normalized(&self) -> Self {
        let m = self.modulus();
        let base = self.table[0];
        NonClassicalPoly {
            table: self.table.iter().map(|&x| (x + m - base) % m).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_space(other)?;
        let m = self.modulus();
        Ok(NonClassicalPoly {
            table: self
                .table
                .iter()
                .zip(&other.table)
                .map(|(&a, &b)| (a + b) % m)
                .collect(),
            ..self.clone()
        })
    }

    pub fn neg(&self) -> Self {
        let m = self.modulus();
        NonClassicalPoly {
            table: self.table.iter().map(|&x| (m - x) % m).collect(),
            ..self.clone()
        }
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.n != other.n || self.denom != other.denom {
            return Err(Error::MismatchedSpace(format!(
                "(n={}, D={}) vs (n={}, D={})",
                self.n, self.denom, other.n, other.denom
            )));
        }
        Ok(())
    }

    /// `x -> P(x + h) - P(x)`.
    pub fn derivative(&self, h: u32) -> Self {
        let m = self.modulus();
        let table = (0..self.table.len())
            .map(|x| (self.table[x ^ h as usize] + m - self.table[x]) % m)
            .collect();
        NonClassicalPoly {
            table,
            ..self.clone()
        }
    }

    /// Least `d` with every `(d+1)`-fold derivative along basis directions
    /// identically zero.
    pub fn degree(&self) -> usize {
        let mut frontier: HashSet<Vec<u64>> = HashSet::new();
        if !self.is_zero() {
            frontier.insert(self.table.clone());
        }
        let mut steps = 0usize;
        while !frontier.is_empty() {
            let mut next = HashSet::new();
            for t in &frontier {
                let p = NonClassicalPoly {
                    table: t.clone(),
                    ..self.clone()
                };
                for i in 0..self.n {
                    let dp = p.derivative(1 << i);
                    if !dp.is_zero() {
                        next.insert(dp.table);
                    }
                }
            }
            frontier = next;
            steps += 1;
        }
        steps.saturating_sub(1)
    }

    /// Least `j` with every value of `P - P(0)` in `(1/2^j)Z/Z`.
    pub fn image_exponent(&self) -> u32 {
        self.normalized()
            .table
            .iter()
            .filter(|&&x| x != 0)
            .map(|&x| self.denom - x.trailing_zeros())
            .max()
            .unwrap_or(0)
    }

    /// Depth under a given offset: least `r ≥ 0` with image in
    /// `(1/2^(r+offset))Z/Z`.
    pub fn depth_with_offset(&self, offset: u32) -> u32 {
        self.image_exponent().saturating_sub(offset)
    }

    /// Depth under the calibrated convention.
    pub fn depth(&self) -> Result<u32> {
        Ok(self.depth_with_offset(calibration()?.offset))
    }

    /// Whether `P`, with values embedded through `Z/2^e -> (1/2^D)Z/Z`, is a
    /// morphism `D_1(F2^n) -> Z` for a cyclic 2-group `Z` of order `2^e`.
    pub fn is_morphism_into(&self, z: &FilteredGroup) -> Result<bool> {
        let e = cyclic_two_exponent(z)?;
        if e > self.denom {
            return Err(Error::IncompatibleDenominators {
                target: e,
                table: self.denom,
            });
        }
        let scale = 1u64 << (self.denom - e);
        if self.table.iter().any(|&x| x % scale != 0) {
            return Ok(false);
        }
        Ok(self.coeffs().iter().enumerate().all(|(s, &w)| {
            let level = popcount(s as u32) as usize;
            e == 0 || (w / scale) % z.level_multiplier(level, 0) == 0
        }))
    }
}

/// `e` with `Z ≅ Z/2^e`, for single-factor (or trivial) 2-groups.
pub(crate) fn cyclic_two_exponent(z: &FilteredGroup) -> Result<u32> {
    match z.moduli() {
        [] => Ok(0),
        [q] if q.is_power_of_two() => Ok(q.trailing_zeros()),
        _ => Err(Error::invalid(format!(
            "target must be a cyclic 2-group, got {z}"
        ))),
    }
}

/// All tables on `F2^n` with values mod `2^D` and `P(0) = 0`.
pub fn all_normalized(n: usize, denom: u32) -> impl Iterator<Item = NonClassicalPoly> {
    let m = 1u64 << denom;
    let free = (1usize << n) - 1;
    let total = m.pow(free as u32);
    (0..total).map(move |mut code| {
        let mut table = vec![0u64; 1 << n];
        for slot in table.iter_mut().skip(1) {
            *slot = code % m;
            code /= m;
        }
        NonClassicalPoly { n, denom, table }
    })
}

/// One row of the calibrated `(k, r) -> ℓ` table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub k: u32,
    pub r: u32,
    pub ell: u32,
    /// Size of the common polynomial/morphism set, per arity `n = 1, 2`.
    pub set_sizes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedOffset {
    pub offset: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthCalibration {
    pub offset: u32,
    pub entries: Vec<CalibrationEntry>,
    pub rejected: Vec<RejectedOffset>,
}

impl DepthCalibration {
    pub fn ell(&self, k: u32, r: u32) -> Result<u32> {
        self.entries
            .iter()
            .find(|e| e.k == k && e.r == r)
            .map(|e| e.ell)
            .ok_or(Error::Uncalibrated { k, r })
    }
}

pub const CALIBRATION_MAX_K: u32 = 3;
const CALIBRATION_ARITIES: [usize; 2] = [1, 2];
const CANDIDATE_OFFSETS: [u32; 2] = [0, 1];

/// Finds the depth offset under which, for every `k ≤ 3` and every depth
/// `r` attained by degree-`≤ k` polynomials, the set
/// `{P : deg P ≤ k, depth P ≤ r, P(0) = 0}` on `F2^n` (`n = 1, 2`) equals the
/// morphism set into a single `Z_{k,ℓ}`, and returns the resulting pairing.
pub fn calibrate_depth_convention() -> Result<DepthCalibration> {
    let mut rejected = Vec::new();
    for offset in CANDIDATE_OFFSETS {
        match pairing_for_offset(offset) {
            Ok(entries) => {
                return Ok(DepthCalibration {
                    offset,
                    entries,
                    rejected,
                })
            }
            Err(reason) => rejected.push(RejectedOffset { offset, reason }),
        }
    }
    Err(Error::NoConsistentConvention(
        rejected
            .iter()
            .map(|r| format!("offset {}: {}", r.offset, r.reason))
            .collect::<Vec<_>>()
            .join("; "),
    ))
}

fn pairing_for_offset(offset: u32) -> std::result::Result<Vec<CalibrationEntry>, String> {
    let mut entries = Vec::new();
    for k in 1..=CALIBRATION_MAX_K {
        let denom = k + 1;
        let targets: Vec<FilteredGroup> = (1..=k as usize)
            .map(|ell| FilteredGroup::canonical(k as usize, ell).expect("valid canonical group"))
            .collect();
        // per arity: (degree ≤ k, depth) of each table, and morphism flags per ℓ
        let mut rows = Vec::new();
        for n in CALIBRATION_ARITIES {
            let polys: Vec<_> = all_normalized(n, denom)
                .map(|p| {
                    let low = p.degree() <= k as usize;
                    let depth = p.depth_with_offset(offset);
                    let homs: Vec<bool> = targets
                        .iter()
                        .map(|z| p.is_morphism_into(z).expect("denominators fit"))
                        .collect();
                    (low, depth, homs)
                })
                .collect();
            rows.push(polys);
        }
        let depths: BTreeSet<u32> = rows
            .iter()
            .flatten()
            .filter(|(low, _, _)| *low)
            .map(|(_, d, _)| *d)
            .collect();
        for r in depths {
            let matching: Vec<u32> = (1..=k)
                .filter(|&ell| {
                    rows.iter().flatten().all(|(low, d, homs)| {
                        (*low && *d <= r) == homs[ell as usize - 1]
                    })
                })
                .collect();
            match matching.as_slice() {
                [ell] => entries.push(CalibrationEntry {
                    k,
                    r,
                    ell: *ell,
                    set_sizes: rows
                        .iter()
                        .map(|ps| ps.iter().filter(|(low, d, _)| *low && *d <= r).count())
                        .collect(),
                }),
                [] => {
                    return Err(format!(
                        "no Z_{{{k},l}} has morphism set equal to degree <= {k}, depth <= {r}"
                    ))
                }
                many => return Err(format!("(k={k}, r={r}) matches several l: {many:?}")),
            }
        }
    }
    Ok(entries)
}

static CALIBRATION: OnceLock<Result<DepthCalibration>> = OnceLock::new();

/// The cached result of [`calibrate_depth_convention`].
pub fn calibration() -> Result<&'static DepthCalibration> {
    CALIBRATION
        .get_or_init(calibrate_depth_convention)
        .as_ref()
        .map_err(Clone::clone)
}

/// `ℓ(k, r)` from the calibrated table.
pub fn ell_for(k: u32, r: u32) -> Result<u32> {
    calibration()?.ell(k, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(n: usize, denom: u32, table: &[u64]) -> NonClassicalPoly {
        NonClassicalPoly::new(n, denom, table.to_vec()).unwrap()
    }

    /// Degree by differencing along every direction of F2^n.
    fn degree_all_directions(poly: &NonClassicalPoly) -> usize {
        let mut frontier = vec![poly.clone()];
        if poly.is_zero() {
            return 0;
        }
        let mut steps = 0;
        while !frontier.is_empty() {
            let mut next: Vec<NonClassicalPoly> = Vec::new();
            for q in &frontier {
                for h in 1..1u32 << poly.arity() {
                    let d = q.derivative(h);
                    if !d.is_zero() && !next.contains(&d) {
                        next.push(d);
                    }
                }
            }
            frontier = next;
            steps += 1;
        }
        steps - 1
    }

    #[test]
    fn derivative_examples() {
        let half = p(1, 1, &[0, 1]);
        assert!(half.derivative(0).is_zero());
        assert_eq!(half.derivative(1).table(), &[1, 1]);
    }

    #[test]
    fn degree_examples() {
        assert_eq!(p(2, 3, &[5, 5, 5, 5]).degree(), 0);
        assert_eq!(NonClassicalPoly::zero(2, 3).degree(), 0);
        assert_eq!(p(2, 1, &[0, 0, 0, 1]).degree(), 2);
        let quarter = p(1, 2, &[0, 1]);
        assert_eq!(quarter.degree(), degree_all_directions(&quarter));
        assert_eq!(quarter.degree(), 2);
        assert_eq!(p(1, 1, &[0, 1]).degree(), 1);
    }

    #[test]
    fn basis_directions_match_all_directions() {
        for n in 1..=2 {
            for denom in 1..=3 {
                for poly in all_normalized(n, denom) {
                    assert_eq!(poly.degree(), degree_all_directions(&poly), "{poly:?}");
                }
            }
        }
        for poly in all_normalized(3, 1) {
            assert_eq!(poly.degree(), degree_all_directions(&poly));
        }
    }

    #[test]
    fn depth_examples() {
        let cal = calibration().unwrap();
        let half = p(1, 1, &[0, 1]);
        let quarter = p(1, 2, &[0, 1]);
        assert_eq!(NonClassicalPoly::zero(2, 2).depth().unwrap(), 0);
        assert_eq!(half.depth().unwrap(), 0);
        assert_eq!(quarter.depth().unwrap(), half.depth().unwrap() + 1);
        assert_eq!(cal.offset, 1);
    }

    #[test]
    fn morphism_examples() {
        let z11 = FilteredGroup::canonical(1, 1).unwrap();
        let z21 = FilteredGroup::canonical(2, 1).unwrap();
        assert!(NonClassicalPoly::zero(2, 2).is_morphism_into(&z21).unwrap());
        assert!(NonClassicalPoly::zero(2, 2).is_morphism_into(&z11).unwrap());
        assert!(p(1, 1, &[0, 1]).is_morphism_into(&z11).unwrap());
        assert!(!p(2, 1, &[0, 0, 0, 1]).is_morphism_into(&z11).unwrap());
        assert!(!p(1, 2, &[0, 1]).is_morphism_into(&z11).unwrap());
        assert!(p(1, 2, &[0, 1]).is_morphism_into(&z21).unwrap());
        assert_eq!(
            p(1, 1, &[0, 1]).is_morphism_into(&z21),
            Err(Error::IncompatibleDenominators { target: 2, table: 1 })
        );
        assert!(p(1, 2, &[0, 1])
            .is_morphism_into(&FilteredGroup::cyclic_standard(3, 1).unwrap())
            .is_err());
    }

    /// Morphism check against images of all cubes of `D_1(F2^n)`, which are
    /// the affine images of `{0,1}^k`.
    #[test]
    fn coefficient_check_matches_cube_images() {
        use crate::cubes::{is_cube, CubePoint};
        use crate::group2::GroupElement;
        let z11 = FilteredGroup::canonical(1, 1).unwrap();
        let z21 = FilteredGroup::canonical(2, 1).unwrap();
        let z22 = FilteredGroup::canonical(2, 2).unwrap();
        for z in [&z11, &z21, &z22] {
            let e = z.moduli()[0].trailing_zeros();
            for poly in all_normalized(2, e) {
                let mut all_cubes_ok = true;
                for k in 0..=3usize {
                    // a cube of D_1(F2^2) is v -> x0 + Σ v_i x_i
                    for pts in 0..1usize << (2 * (k + 1)) {
                        let x: Vec<u32> = (0..=k).map(|i| ((pts >> (2 * i)) & 3) as u32).collect();
                        let values = (0..1usize << k)
                            .map(|v| {
                                let mut at = x[0];
                                for i in 0..k {
                                    if v >> i & 1 == 1 {
                                        at ^= x[i + 1];
                                    }
                                }
                                GroupElement(vec![poly.eval(at)])
                            })
                            .collect();
                        if !is_cube(z, &CubePoint { k, values }) {
                            all_cubes_ok = false;
                        }
                    }
                }
                assert_eq!(poly.is_morphism_into(z).unwrap(), all_cubes_ok, "{poly:?} into {z}");
            }
        }
    }

    #[test]
    fn calibration_is_total_and_consistent() {
        let cal = calibrate_depth_convention().unwrap();
        assert_eq!(cal.offset, 1);
        assert_eq!(cal.rejected.len(), 1);
        assert_eq!(cal.rejected[0].offset, 0);
        assert_eq!(cal.ell(1, 0).unwrap(), 1);
        for k in 1..=3 {
            assert_eq!(cal.ell(k, 0).unwrap(), k);
            let rs: Vec<u32> = cal.entries.iter().filter(|e| e.k == k).map(|e| e.r).collect();
            assert_eq!(rs, (0..k).collect::<Vec<_>>());
            for e in cal.entries.iter().filter(|e| e.k == k) {
                assert_eq!(e.ell, k - e.r);
            }
        }
        assert_eq!(cal.ell(4, 0), Err(Error::Uncalibrated { k: 4, r: 0 }));
    }

    /// Every degree-≤k polynomial vanishing at 0 is a morphism into Z_{k,1}.
    #[test]
    fn low_degree_polys_land_in_z_k1() {
        for k in 1..=3usize {
            let z = FilteredGroup::canonical(k, 1).unwrap();
            for n in 1..=2 {
                for poly in all_normalized(n, k as u32) {
                    if poly.degree() <= k {
                        assert!(poly.is_morphism_into(&z).unwrap(), "{poly:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn json_forms() {
        let poly: NonClassicalPoly =
            serde_json::from_str(r#"{"n":2,"D":2,"table":[0,1,1,2]}"#).unwrap();
        assert_eq!(poly.coeffs(), vec![0, 1, 1, 0]);
        let same: NonClassicalPoly =
            serde_json::from_str(r#"{"n":2,"D":2,"coeffs":{"1":1,"2":1}}"#).unwrap();
        assert_eq!(poly, same);
        assert_eq!(
            serde_json::to_string(&poly).unwrap(),
            r#"{"n":2,"D":2,"table":[0,1,1,2]}"#
        );
        assert!(serde_json::from_str::<NonClassicalPoly>(r#"{"n":1,"D":1,"table":[0,2]}"#).is_err());
    }

    fn arb_poly(n: usize, denom: u32) -> impl Strategy<Value = NonClassicalPoly> {
        proptest::collection::vec(0..1u64 << denom, 1 << n)
            .prop_map(move |t| NonClassicalPoly::new(n, denom, t).unwrap())
    }

    proptest! {
        #[test]
        fn derivatives_commute(
            poly in arb_poly(3, 3),
            h in 0u32..8,
            g in 0u32..8,
        ) {
            prop_assert_eq!(poly.derivative(h).derivative(g), poly.derivative(g).derivative(h));
        }

        #[test]
        fn derivative_is_linear(
            a in arb_poly(3, 2),
            b in arb_poly(3, 2),
            h in 0u32..8,
        ) {
            prop_assert_eq!(
                a.add(&b).unwrap().derivative(h),
                a.derivative(h).add(&b.derivative(h)).unwrap()
            );
        }

        #[test]
        fn derivative_lowers_degree(poly in arb_poly(3, 3), h in 1u32..8) {
            let d = poly.derivative(h);
            if !poly.is_zero() && !d.is_zero() {
                prop_assert!(d.degree() < poly.degree());
            }
        }

        #[test]
        fn coeffs_round_trip(poly in arb_poly(4, 3)) {
            let back = NonClassicalPoly::from_coeffs(4, 3, poly.coeffs()).unwrap();
            prop_assert_eq!(back, poly);
        }
    }
}
