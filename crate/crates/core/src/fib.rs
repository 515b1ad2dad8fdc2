//! Maps between finite group nilspaces: morphism, cube-surjectivity and
//! fibration checks, and exhaustive enumeration of morphisms.
//!
//! A map `φ: X -> Y` is a morphism when it sends cubes to cubes. The check
//! used here is the derivative form: for `x ∈ X` and nonzero `h_1, …, h_s`
//! with `h_j ∈ X_(l_j)`, the iterated difference `∂_{h_1}⋯∂_{h_s} φ(x)` must
//! lie in `Y_(l_1 + … + l_s)`. Each such condition is the top alternating sum
//! of the cube `x + Σ_j h_j ∏_{i∈B_j} v[i]` (disjoint blocks `|B_j| = l_j`),
//! so a failure always comes with a witness cube.

use std::collections::{BTreeMap, HashMap, HashSet};

use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::check_budget;
use crate::cubes::{cube_count, for_each_coeffs, evaluate, CubePoint};
use crate::error::{Error, Result};
use crate::group2::{FilteredGroup, GroupElement, QuotientMap};

/// A map between the underlying sets of two filtered groups, stored densely
/// in the domain's encoding order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "MapJson", into = "MapJson")]
pub struct GroupNilspaceMap {
    domain: FilteredGroup,
    codomain: FilteredGroup,
    table: Vec<GroupElement>,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    domain: FilteredGroup,
    codomain: FilteredGroup,
    table: BTreeMap<String, GroupElement>,
}

impl From<GroupNilspaceMap> for MapJson {
    fn from(m: GroupNilspaceMap) -> Self {
        let table = m
            .domain
            .elements()
            .zip(m.table)
            .map(|(x, y)| (x.label(), y))
            .collect();
        MapJson {
            domain: m.domain,
            codomain: m.codomain,
            table,
        }
    }
}

impl TryFrom<MapJson> for GroupNilspaceMap {
    type Error = Error;

    fn try_from(raw: MapJson) -> Result<Self> {
        let mut table = raw.table;
        let values = raw
            .domain
            .elements()
            .map(|x| {
                table
                    .remove(&x.label())
                    .ok_or_else(|| Error::invalid(format!("map has no value at {}", x.label())))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(key) = table.keys().next() {
            return Err(Error::invalid(format!("{key:?} is not an element of the domain")));
        }
        GroupNilspaceMap::new(raw.domain, raw.codomain, values)
    }
}

impl GroupNilspaceMap {
    pub fn new(domain: FilteredGroup, codomain: FilteredGroup, table: Vec<GroupElement>) -> Result<Self> {
        if table.len() as u64 != domain.order() {
            return Err(Error::invalid(format!(
                "table has {} entries for a domain of order {}",
                table.len(),
                domain.order()
            )));
        }
        if let Some(y) = table.iter().find(|y| !codomain.contains(y)) {
            return Err(Error::invalid(format!("{y} is not an element of {codomain}")));
        }
        Ok(GroupNilspaceMap {
            domain,
            codomain,
            table,
        })
    }

    pub fn from_fn(domain: &FilteredGroup, codomain: &FilteredGroup, f: impl Fn(&GroupElement) -> GroupElement) -> Result<Self> {
        let table = domain.elements().map(|x| f(&x)).collect();
        GroupNilspaceMap::new(domain.clone(), codomain.clone(), table)
    }

    pub fn identity(z: &FilteredGroup) -> Self {
        GroupNilspaceMap {
            domain: z.clone(),
            codomain: z.clone(),
            table: z.elements().collect(),
        }
    }

    pub fn constant(domain: &FilteredGroup, codomain: &FilteredGroup, y: GroupElement) -> Result<Self> {
        GroupNilspaceMap::new(domain.clone(), codomain.clone(), vec![y; domain.order() as usize])
    }

    pub fn from_quotient(domain: &FilteredGroup, q: &QuotientMap) -> Self {
        GroupNilspaceMap {
            domain: domain.clone(),
            codomain: q.target.clone(),
            table: domain.elements().map(|x| q.apply(&x)).collect(),
        }
    }

    pub fn domain(&self) -> &FilteredGroup {
        &self.domain
    }

    pub fn codomain(&self) -> &FilteredGroup {
        &self.codomain
    }

    pub fn table(&self) -> &[GroupElement] {
        &self.table
    }

    pub fn apply(&self, x: &GroupElement) -> &GroupElement {
        &self.table[self.domain.encode(x)]
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &GroupNilspaceMap) -> Result<GroupNilspaceMap> {
        if self.codomain != next.domain {
            return Err(Error::MismatchedSpace(format!(
                "cannot compose into {} from {}",
                next.domain, self.codomain
            )));
        }
        let table = self.table.iter().map(|y| next.apply(y).clone()).collect();
        GroupNilspaceMap::new(self.domain.clone(), next.codomain.clone(), table)
    }

    pub fn is_surjective(&self) -> bool {
        let mut seen = vec![false; self.codomain.order() as usize];
        for y in &self.table {
            seen[self.codomain.encode(y)] = true;
        }
        seen.into_iter().all(|b| b)
    }

    pub fn compose_cube(&self, q: &CubePoint) -> CubePoint {
        CubePoint {
            k: q.k,
            values: q.values.iter().map(|x| self.apply(x).clone()).collect(),
        }
    }
}

/// Highest level containing a nonzero `h`.
fn level_of(z: &FilteredGroup, h: &GroupElement) -> usize {
    let mut l = 0;
    while l <= z.degree() && z.in_level(h, l + 1) {
        l += 1;
    }
    l
}

/// One derivative condition: `Σ_x c_x φ(x) ∈ Y_(level)`.
#[derive(Debug, Clone)]
struct Constraint {
    terms: Vec<(usize, i64)>,
    level: usize,
    base: usize,
    steps: Vec<(usize, usize)>,
}

/// Derivative conditions up to cube dimension `nmax`, deduplicated.
struct ConstraintSet {
    constraints: Vec<Constraint>,
}

impl ConstraintSet {
    fn build(domain: &FilteredGroup, codomain: &FilteredGroup, nmax: usize, budget: u64) -> Result<Self> {
        let cap = codomain.effective_degree() + 1;
        let order = domain.order() as usize;
        let elements: Vec<GroupElement> = domain.elements().collect();
        let levels: Vec<usize> = elements.iter().map(|h| level_of(domain, h)).collect();
        let smax = cap.min(nmax);
        let mut estimate: u128 = 0;
        let mut binom: u128 = 1;
        for s in 1..=smax {
            binom = binom * (order as u128 + s as u128 - 2) / s as u128;
            estimate += binom * order as u128;
        }
        check_budget(estimate, budget)?;
        let mut seen: HashMap<Vec<(usize, i64)>, usize> = HashMap::new();
        let mut constraints: Vec<Constraint> = Vec::new();
        let mut hs: Vec<usize> = Vec::new();
        for s in 1..=smax {
            hs.clear();
            hs.resize(s, 1);
            if order < 2 {
                break;
            }
            loop {
                let total: usize = hs.iter().map(|&h| levels[h]).sum();
                let level = total.min(cap);
                if level <= nmax {
                    for base in 0..order {
                        let mut coeff: BTreeMap<usize, i64> = BTreeMap::new();
                        for t in 0..1usize << s {
                            let mut p = elements[base].clone();
                            for (j, &h) in hs.iter().enumerate() {
                                if t >> j & 1 == 1 {
                                    domain.add_assign(&mut p, &elements[h]);
                                }
                            }
                            let sign = if (s - t.count_ones() as usize) % 2 == 0 { 1 } else { -1 };
                            *coeff.entry(domain.encode(&p)).or_default() += sign;
                        }
                        let terms: Vec<(usize, i64)> = coeff.into_iter().filter(|&(_, c)| c != 0).collect();
                        if terms.is_empty() {
                            continue;
                        }
                        let steps = hs.iter().map(|&h| (h, levels[h])).collect();
                        match seen.get(&terms) {
                            Some(&i) => {
                                if constraints[i].level < level {
                                    constraints[i].level = level;
                                    constraints[i].base = base;
                                    constraints[i].steps = steps;
                                }
                            }
                            None => {
                                seen.insert(terms.clone(), constraints.len());
                                constraints.push(Constraint {
                                    terms,
                                    level,
                                    base,
                                    steps,
                                });
                            }
                        }
                    }
                }
                // next non-decreasing tuple over 1..order
                let mut j = s;
                let mut done = true;
                while j > 0 {
                    j -= 1;
                    if hs[j] + 1 < order {
                        let v = hs[j] + 1;
                        for h in hs[j..].iter_mut() {
                            *h = v;
                        }
                        done = false;
                        break;
                    }
                }
                if done {
                    break;
                }
            }
        }
        Ok(ConstraintSet { constraints })
    }

    fn holds(c: &Constraint, codomain: &FilteredGroup, values: &[GroupElement]) -> bool {
        let mut acc = codomain.zero();
        for &(x, k) in &c.terms {
            codomain.add_assign(&mut acc, &codomain.scale(&values[x], k));
        }
        codomain.in_level(&acc, c.level)
    }

    /// The cube whose top alternating sum is the constraint.
    fn witness(c: &Constraint, domain: &FilteredGroup) -> CubePoint {
        let mut remaining = c.level;
        let mut widths: Vec<usize> = Vec::new();
        for (j, &(_, l)) in c.steps.iter().enumerate() {
            let later = c.steps.len() - j - 1;
            let w = l.min(remaining - later).max(1);
            widths.push(w);
            remaining -= w;
        }
        let k: usize = widths.iter().sum();
        let base = domain.decode(c.base);
        let mut values = Vec::with_capacity(1 << k);
        for v in 0..1usize << k {
            let mut p = base.clone();
            let mut offset = 0;
            for (&(h, _), &w) in c.steps.iter().zip(&widths) {
                let block = ((1usize << w) - 1) << offset;
                if v & block == block {
                    domain.add_assign(&mut p, &domain.decode(h));
                }
                offset += w;
            }
            values.push(p);
        }
        CubePoint { k, values }
    }
}

/// Outcome of a morphism check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MorphismReport {
    pub morphism: bool,
    pub nmax: usize,
    /// `nmax` reaches `degree(Y) + 1`, so the verdict holds in every
    /// dimension.
    pub complete: bool,
    pub constraints: usize,
    /// A domain cube whose image is not a cube.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<CubePoint>,
}

pub fn default_nmax(domain: &FilteredGroup, codomain: &FilteredGroup) -> usize {
    domain.effective_degree().max(codomain.effective_degree()) + 1
}

pub fn check_morphism(phi: &GroupNilspaceMap, nmax: usize, budget: u64) -> Result<MorphismReport> {
    if nmax == 0 {
        return Err(Error::OutOfRange {
            what: "nmax",
            value: 0,
            range: "[1, ∞)".into(),
        });
    }
    let set = ConstraintSet::build(&phi.domain, &phi.codomain, nmax, budget)?;
    let failing = set
        .constraints
        .iter()
        .find(|c| !ConstraintSet::holds(c, &phi.codomain, &phi.table));
    Ok(MorphismReport {
        morphism: failing.is_none(),
        nmax,
        complete: nmax > phi.codomain.effective_degree(),
        constraints: set.constraints.len(),
        witness: failing.map(|c| ConstraintSet::witness(c, &phi.domain)),
    })
}

pub fn is_morphism(phi: &GroupNilspaceMap, nmax: usize) -> Result<bool> {
    Ok(check_morphism(phi, nmax, crate::DEFAULT_BUDGET)?.morphism)
}

/// All morphisms `X -> Y`, by backtracking over values in encoding order
/// with each derivative condition checked once its last point is assigned.
/// Translating a morphism by a constant gives a morphism, so the search
/// fixes `φ(0) = 0` and adds constants at the end. `budget` bounds the
/// number of search nodes.
pub fn enumerate_morphisms(x: &FilteredGroup, y: &FilteredGroup, budget: u64) -> Result<Vec<GroupNilspaceMap>> {
    let set = ConstraintSet::build(x, y, default_nmax(x, y), budget)?;
    let order = x.order() as usize;
    let mut by_last: Vec<Vec<&Constraint>> = vec![Vec::new(); order];
    for c in &set.constraints {
        let last = c.terms.iter().map(|&(i, _)| i).max().unwrap_or(0);
        by_last[last].push(c);
    }
    let ys: Vec<GroupElement> = y.elements().collect();
    let mut values = vec![y.zero(); order];
    let mut based: Vec<Vec<GroupElement>> = Vec::new();
    let mut nodes: u64 = 0;
    fn search(
        i: usize,
        values: &mut Vec<GroupElement>,
        ys: &[GroupElement],
        y: &FilteredGroup,
        by_last: &[Vec<&Constraint>],
        out: &mut Vec<Vec<GroupElement>>,
        nodes: &mut u64,
        budget: u64,
    ) -> Result<()> {
        if i == values.len() {
            out.push(values.clone());
            return Ok(());
        }
        for v in ys {
            *nodes += 1;
            if *nodes > budget {
                return Err(Error::BudgetExceeded {
                    needed: format!("more than {budget} search nodes"),
                    budget,
                });
            }
            values[i] = v.clone();
            if by_last[i].iter().all(|c| ConstraintSet::holds(c, y, values)) {
                search(i + 1, values, ys, y, by_last, out, nodes, budget)?;
            }
        }
        Ok(())
    }
    if order > 0 && by_last[0].iter().all(|c| ConstraintSet::holds(c, y, &values)) {
        search(1, &mut values, &ys, y, &by_last, &mut based, &mut nodes, budget)?;
    }
    let mut out = Vec::with_capacity(based.len() * ys.len());
    for c in &ys {
        for t in &based {
            let table = t.iter().map(|v| y.add(v, c)).collect();
            out.push(GroupNilspaceMap {
                domain: x.clone(),
                codomain: y.clone(),
                table,
            });
        }
    }
    out.sort_by(|a, b| a.table.cmp(&b.table));
    Ok(out)
}

/// Image count of `φ^⟦n⟧` against `|C^n(Y)|`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DimensionCount {
    pub n: usize,
    /// `None` when `|C^n(X)| < |C^n(Y)|` settles the question by size.
    pub image: Option<u64>,
    pub cubes: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurjectivityReport {
    pub surjective: bool,
    pub nmax: usize,
    pub counts: Vec<DimensionCount>,
}

/// Cube tables of a fixed domain, cached across many maps.
pub struct CubeSurjectivity {
    domain: FilteredGroup,
    codomain: FilteredGroup,
    nmax: usize,
    tables: Vec<Option<Vec<u32>>>,
}

impl CubeSurjectivity {
    /// Precomputes `C^n(X)` for `n ≤ nmax` as encoded vertex tables, unless
    /// `|C^n(X)| < |C^n(Y)|`.
    pub fn new(domain: &FilteredGroup, codomain: &FilteredGroup, nmax: usize, budget: u64) -> Result<Self> {
        let mut tables = Vec::new();
        for n in 0..=nmax {
            let here = cube_count(domain, n);
            if here < cube_count(codomain, n) {
                tables.push(None);
                break;
            }
            let needed = here.to_u128().unwrap_or(u128::MAX).saturating_mul(1 << n);
            check_budget(needed, budget)?;
            let mut t = Vec::with_capacity(needed as usize);
            for_each_coeffs(domain, n, |c| {
                t.extend(evaluate(domain, c).values.iter().map(|x| domain.encode(x) as u32));
            });
            tables.push(Some(t));
        }
        Ok(CubeSurjectivity {
            domain: domain.clone(),
            codomain: codomain.clone(),
            nmax,
            tables,
        })
    }

    pub fn check(&self, phi: &GroupNilspaceMap) -> Result<SurjectivityReport> {
        if phi.domain != self.domain || phi.codomain != self.codomain {
            return Err(Error::MismatchedSpace("map does not match the cached spaces".into()));
        }
        let ord = self.codomain.order() as u128;
        let image_of: Vec<u128> = phi.table.iter().map(|y| self.codomain.encode(y) as u128).collect();
        let mut counts = Vec::new();
        for (n, table) in self.tables.iter().enumerate() {
            let cubes = cube_count(&self.codomain, n);
            let Some(table) = table else {
                counts.push(DimensionCount {
                    n,
                    image: None,
                    cubes: cubes.to_string(),
                });
                return Ok(SurjectivityReport {
                    surjective: false,
                    nmax: self.nmax,
                    counts,
                });
            };
            let width = 1usize << n;
            if ord.checked_pow(width as u32).is_none() {
                return Err(Error::BudgetExceeded {
                    needed: format!("{ord}^{width} image keys"),
                    budget: u64::MAX,
                });
            }
            let mut seen: HashSet<u128> = HashSet::new();
            for q in table.chunks_exact(width) {
                let key = q.iter().rev().fold(0u128, |acc, &x| acc * ord + image_of[x as usize]);
                seen.insert(key);
            }
            let image = seen.len() as u64;
            let ok = cubes == image.into();
            counts.push(DimensionCount {
                n,
                image: Some(image),
                cubes: cubes.to_string(),
            });
            if !ok {
                return Ok(SurjectivityReport {
                    surjective: false,
                    nmax: self.nmax,
                    counts,
                });
            }
        }
        Ok(SurjectivityReport {
            surjective: true,
            nmax: self.nmax,
            counts,
        })
    }
}

/// Cube-surjectivity of a morphism for `n ≤ nmax`.
pub fn check_cube_surjective(phi: &GroupNilspaceMap, nmax: usize, budget: u64) -> Result<SurjectivityReport> {
    if !check_morphism(phi, default_nmax(&phi.domain, &phi.codomain), budget)?.morphism {
        return Err(Error::NotAMorphism);
    }
    CubeSurjectivity::new(&phi.domain, &phi.codomain, nmax, budget)?.check(phi)
}

pub fn is_cube_surjective(phi: &GroupNilspaceMap, nmax: usize) -> Result<bool> {
    Ok(check_cube_surjective(phi, nmax, crate::DEFAULT_BUDGET)?.surjective)
}

/// A corner-lifting failure: at dimension `n`, the corner completed in `X`
/// by `completion` has an image completion `target` with no preimage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LiftFailure {
    pub n: usize,
    pub completion: GroupElement,
    pub target: GroupElement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FibrationReport {
    pub fibration: bool,
    pub nmax: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<LiftFailure>,
}

/// Corner lifting for a morphism. The completions of an `n`-corner in `X`
/// form a coset `x0 + X_(n)`, and those of its image form `φ(x0) + Y_(n)`,
/// so lifting holds at `n` iff `φ(x0 + X_(n)) ⊇ φ(x0) + Y_(n)` for every
/// `x0`. Above `max(degree) + 1` both cosets are points.
pub fn check_fibration(phi: &GroupNilspaceMap, budget: u64) -> Result<FibrationReport> {
    let (x, y) = (&phi.domain, &phi.codomain);
    let nmax = default_nmax(x, y);
    if !check_morphism(phi, nmax, budget)?.morphism {
        return Err(Error::NotAMorphism);
    }
    check_budget(x.order() as u128 * x.order() as u128 * (nmax as u128 + 1), budget)?;
    for n in 0..=nmax {
        let xs: Vec<GroupElement> = x.level_members_unchecked(n).collect();
        let ys: Vec<GroupElement> = y.level_members_unchecked(n).collect();
        for x0 in x.elements() {
            let hit: HashSet<&GroupElement> = xs.iter().map(|h| phi.apply(&x.add(&x0, h))).collect();
            let fx0 = phi.apply(&x0);
            for g in &ys {
                let target = y.add(fx0, g);
                if !hit.contains(&target) {
                    return Ok(FibrationReport {
                        fibration: false,
                        nmax,
                        failure: Some(LiftFailure {
                            n,
                            completion: x0,
                            target,
                        }),
                    });
                }
            }
        }
    }
    Ok(FibrationReport {
        fibration: true,
        nmax,
        failure: None,
    })
}

pub fn is_fibration(phi: &GroupNilspaceMap) -> Result<bool> {
    Ok(check_fibration(phi, crate::DEFAULT_BUDGET)?.fibration)
}

/// A fibration onto `z` from a truncation `∏_ℓ Z_{k,ℓ}^{w_ℓ}`.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationFibration {
    pub k: usize,
    pub widths: Vec<usize>,
    /// Source coordinate feeding each target coordinate.
    pub coordinates: Vec<usize>,
    pub map: GroupNilspaceMap,
}

/// Searches truncations of degree `k` with widths up to `max_width` and
/// order up to `max_order` for a map onto `z` of the form
/// `x -> (x[σ(j)] mod q_j)_j` that is a fibration.
pub fn find_truncation_fibration(
    z: &FilteredGroup,
    k: usize,
    max_width: usize,
    max_order: u64,
) -> Result<Option<TruncationFibration>> {
    let mut widths = vec![0usize; k];
    loop {
        let mut j = 0;
        while j < k {
            widths[j] += 1;
            if widths[j] <= max_width {
                break;
            }
            widths[j] = 0;
            j += 1;
        }
        if j == k {
            return Ok(None);
        }
        let source = FilteredGroup::h_truncation(k, &widths)?;
        if source.order() > max_order || source.order() < z.order() {
            continue;
        }
        if let Some(found) = search_selections(&source, z)? {
            return Ok(Some(TruncationFibration {
                k,
                widths: widths.clone(),
                coordinates: found.0,
                map: found.1,
            }));
        }
    }
}

fn search_selections(source: &FilteredGroup, z: &FilteredGroup) -> Result<Option<(Vec<usize>, GroupNilspaceMap)>> {
    let options: Vec<Vec<usize>> = z
        .moduli()
        .iter()
        .map(|&q| {
            (0..source.rank())
                .filter(|&c| source.moduli()[c] % q == 0)
                .collect()
        })
        .collect();
    if options.iter().any(|o| o.is_empty()) {
        return Ok(None);
    }
    let mut pick = vec![0usize; options.len()];
    loop {
        let sigma: Vec<usize> = pick.iter().zip(&options).map(|(&i, o)| o[i]).collect();
        let map = GroupNilspaceMap::from_fn(source, z, |x| {
            GroupElement(sigma.iter().zip(z.moduli()).map(|(&c, &q)| x.0[c] % q).collect())
        })?;
        if check_morphism(&map, default_nmax(source, z), crate::DEFAULT_BUDGET)?.morphism
            && is_fibration(&map)?
        {
            return Ok(Some((sigma, map)));
        }
        let mut j = 0;
        loop {
            if j == pick.len() {
                return Ok(None);
            }
            pick[j] += 1;
            if pick[j] < options[j].len() {
                break;
            }
            pick[j] = 0;
            j += 1;
        }
    }
}
