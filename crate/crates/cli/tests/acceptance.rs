use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cubelab::consistency::is_consistent;
use cubelab::cubes::{all_cubes, cube_count, CubeMorphism};
use cubelab::exch::{check_affine_exchangeable, check_independence_property, uniform_cube_measure, Face, WindowDistribution};
use cubelab::f2::{affine_generators, AffineMap};
use cubelab::fib::{default_nmax, enumerate_morphisms, is_fibration, is_morphism, CubeSurjectivity, GroupNilspaceMap};
use cubelab::measures::{
    affine_relabel_invariance, sample_measure, tv_distance, zeta_marginal, EnumOptions, FiniteDistribution,
    FunctionTable, LimitObject, LinearFormSystem, Mode,
};
use cubelab::poly::{all_normalized, calibrate_depth_convention, NonClassicalPoly};
use cubelab::{FilteredGroup, GroupElement};

const BUDGET: u64 = 1 << 40;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn corpus() -> Vec<(&'static str, FilteredGroup)> {
    let d1 = |q| FilteredGroup::cyclic_standard(q, 1).unwrap();
    let z = |k, l| FilteredGroup::canonical(k, l).unwrap();
    vec![
        ("D1(Z2)", d1(2)),
        ("D1(Z4)", d1(4)),
        ("D1(Z3)", d1(3)),
        ("Z[2,1]", z(2, 1)),
        ("Z[2,2]", z(2, 2)),
        ("Z[3,1]", z(3, 1)),
        ("Z[2,1]xZ[2,2]", z(2, 1).product(&z(2, 2))),
    ]
}

fn opts() -> EnumOptions {
    EnumOptions { budget: BUDGET, jobs: 1 }
}

fn ratio(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

fn submasks(mask: u32) -> Vec<u32> {
    let mut out = Vec::new();
    let mut s = mask;
    loop {
        out.push(s);
        if s == 0 {
            return out;
        }
        s = (s - 1) & mask;
    }
}

fn level_size(z: &FilteredGroup, level: usize) -> u64 {
    z.elements().filter(|x| z.in_level(x, level)).count() as u64
}

fn binomial(n: usize, k: usize) -> u32 {
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64) as u32
}

fn encoded(z: &FilteredGroup, values: &[GroupElement]) -> Vec<usize> {
    values.iter().map(|x| z.encode(x)).collect()
}

/// Vertex tables whose alternating sum over every face of dimension `d`
/// lies in `Z_(d)`, by backtracking in vertex order.
fn cubes_by_face_sums(z: &FilteredGroup, n: usize) -> BTreeSet<Vec<usize>> {
    let elems: Vec<GroupElement> = z.elements().collect();
    let verts = 1u32 << n;
    let mut by_top: Vec<Vec<(u32, u32)>> = vec![Vec::new(); verts as usize];
    for free in 0..verts {
        for fixed in 0..verts {
            if free & fixed == 0 {
                by_top[(free | fixed) as usize].push((free, fixed));
            }
        }
    }
    let face_ok = |table: &[usize], free: u32, fixed: u32| {
        let mut sum = z.zero();
        for sub in submasks(free) {
            let x = &elems[table[(fixed | sub) as usize]];
            if (free.count_ones() - sub.count_ones()) % 2 == 0 {
                z.add_assign(&mut sum, x);
            } else {
                z.sub_assign(&mut sum, x);
            }
        }
        z.in_level(&sum, free.count_ones() as usize)
    };
    fn go(
        v: usize,
        table: &mut Vec<usize>,
        order: usize,
        by_top: &[Vec<(u32, u32)>],
        ok: &dyn Fn(&[usize], u32, u32) -> bool,
        out: &mut BTreeSet<Vec<usize>>,
    ) {
        if v == table.len() {
            out.insert(table.clone());
            return;
        }
        for e in 0..order {
            table[v] = e;
            if by_top[v].iter().all(|&(free, fixed)| ok(table, free, fixed)) {
                go(v + 1, table, order, by_top, ok, out);
            }
        }
    }
    let mut out = BTreeSet::new();
    let mut table = vec![0; verts as usize];
    go(0, &mut table, elems.len(), &by_top, &face_ok, &mut out);
    out
}

fn criterion_1() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, z) in corpus() {
        for n in 0..=3 {
            let by_coeffs: BTreeSet<Vec<usize>> = all_cubes(&z, n).iter().map(|q| encoded(&z, &q.values)).collect();
            let by_faces = cubes_by_face_sums(&z, n);
            let formula: BigUint = (0..=n)
                .map(|s| BigUint::from(level_size(&z, s)).pow(binomial(n, s)))
                .product();
            let ok = by_coeffs == by_faces
                && BigUint::from(by_faces.len()) == formula
                && cube_count(&z, n) == formula;
            if !ok {
                pass = false;
                notes.push(format!("{name} n={n}: {} vs {} vs {formula}", by_coeffs.len(), by_faces.len()));
            }
        }
    }
    let d1 = cube_count(&FilteredGroup::cyclic_standard(2, 1).unwrap(), 2);
    let z21 = cube_count(&FilteredGroup::canonical(2, 1).unwrap(), 2);
    pass &= d1 == BigUint::from(8u32) && z21 == BigUint::from(128u32);
    notes.push(format!("|C2(D1(Z2))|={d1} |C2(Z[2,1])|={z21}"));
    verdict(pass, notes.join("; "))
}

fn criterion_2() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, z) in corpus() {
        let order = z.order() as usize;
        let tables: Vec<Vec<Vec<usize>>> = (0..=3)
            .map(|n| all_cubes(&z, n).iter().map(|q| encoded(&z, &q.values)).collect())
            .collect();
        let c1: BTreeSet<Vec<usize>> = tables[1].iter().cloned().collect();
        let pairs: BTreeSet<Vec<usize>> = (0..order).flat_map(|a| (0..order).map(move |b| vec![a, b])).collect();
        if c1 != pairs {
            pass = false;
            notes.push(format!("{name}: C1 != Z^2"));
        }
        let mut morphisms = 0;
        for n in 1..=3 {
            for m in 1..=n {
                let target: BTreeSet<usize> = tables[m]
                    .iter()
                    .map(|t| t.iter().rev().fold(0, |acc, &x| acc * order + x))
                    .collect();
                for phi in CubeMorphism::injective(m, n) {
                    morphisms += 1;
                    let map: Vec<usize> = (0..1usize << m).map(|u| phi.apply(u)).collect();
                    let mut keys: Vec<usize> = tables[n]
                        .iter()
                        .map(|t| map.iter().rev().fold(0, |acc, &v| acc * order + t[v]))
                        .collect();
                    keys.sort_unstable();
                    let per = tables[n].len();
                    let cm = tables[m].len();
                    let mut runs = Vec::new();
                    for chunk in keys.chunk_by(|a, b| a == b) {
                        runs.push((chunk[0], chunk.len()));
                    }
                    let uniform = runs.len() == cm
                        && runs.iter().all(|&(key, c)| target.contains(&key) && c * cm == per);
                    if !uniform {
                        pass = false;
                        notes.push(format!("{name}: restriction {m}->{n} not uniform"));
                    }
                }
            }
        }
        if name == "D1(Z2)" {
            notes.push(format!("{morphisms} injective morphisms per group"));
        }
    }
    verdict(pass, notes.join("; "))
}

fn two_homogeneous_by_elements(z: &FilteredGroup) -> bool {
    (0..=z.degree() + 1).all(|i| {
        z.elements()
            .filter(|g| z.in_level(g, i))
            .all(|g| z.in_level(&z.scale(&g, 2), i + 1))
    })
}

fn invariant_under_generators(d: &WindowDistribution) -> bool {
    let w = d.distribution().exact_weights().unwrap();
    affine_generators(2).iter().all(|(_, t)| {
        let perm: Vec<usize> = (0..4).map(|v| t.apply(v) as usize).collect();
        w.iter().all(|(x, p)| {
            let y: Vec<u32> = perm.iter().map(|&v| x[v]).collect();
            w.get(&y) == Some(p)
        })
    })
}

fn criterion_3() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (name, z) in corpus() {
        let d = uniform_cube_measure(&z, 2).unwrap();
        let report = check_affine_exchangeable(&d).unwrap();
        let homogeneous = two_homogeneous_by_elements(&z);
        let oracle = invariant_under_generators(&d);
        pass &= report.pass == homogeneous && oracle == homogeneous;
        if name == "D1(Z3)" {
            let witness = report.witnesses.iter().find(|w| w.generator.starts_with("transvection"));
            pass &= !report.pass && witness.is_some();
            if let Some(w) = witness {
                notes.push(format!("D1(Z3) fails, witness {} tv={}", w.generator, w.tv));
            }
        }
        notes.push(format!("{name}:{}", if report.pass { "pass" } else { "fail" }));
    }
    verdict(pass, notes.join(" "))
}

/// Average over cubes of the product kernel, built outcome by outcome.
fn zeta_by_cubes(z: &FilteredGroup, kernel: &[Vec<BigRational>], k: usize) -> BTreeMap<Vec<u32>, BigRational> {
    let cubes = all_cubes(z, k);
    let weight = ratio(1, cubes.len() as i64);
    let mut out: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
    for q in &cubes {
        let mut partial: Vec<(Vec<u32>, BigRational)> = vec![(Vec::new(), weight.clone())];
        for x in &q.values {
            let row = &kernel[z.encode(x)];
            partial = partial
                .into_iter()
                .flat_map(|(t, p)| {
                    row.iter().enumerate().filter(|(_, c)| !c.is_zero()).map(move |(b, c)| {
                        let mut t = t.clone();
                        t.push(b as u32);
                        (t, &p * c)
                    })
                })
                .collect();
        }
        for (t, p) in partial {
            *out.entry(t).or_insert_with(BigRational::zero) += p;
        }
    }
    out
}

fn same_weights(d: &FiniteDistribution, w: &BTreeMap<Vec<u32>, BigRational>) -> bool {
    let lib: BTreeMap<Vec<u32>, BigRational> = d
        .exact_weights()
        .unwrap()
        .iter()
        .filter(|(_, p)| !p.is_zero())
        .map(|(t, p)| (t.clone(), p.clone()))
        .collect();
    let want: BTreeMap<Vec<u32>, BigRational> =
        w.iter().filter(|(_, p)| !p.is_zero()).map(|(t, p)| (t.clone(), p.clone())).collect();
    lib == want
}

fn criterion_4() -> Verdict {
    let bin = || vec!["0".to_string(), "1".to_string()];
    let d1z2 = FilteredGroup::cyclic_standard(2, 1).unwrap();
    let z21 = FilteredGroup::canonical(2, 1).unwrap();
    let limits: Vec<(&str, FilteredGroup, Vec<Vec<BigRational>>, Vec<String>)> = vec![
        ("identity on D1(Z2)", d1z2.clone(), vec![vec![ratio(1, 1), ratio(0, 1)], vec![ratio(0, 1), ratio(1, 1)]], bin()),
        (
            "Dirac x mod 2 on Z[2,1]",
            z21.clone(),
            (0..4).map(|x| if x % 2 == 0 { vec![ratio(1, 1), ratio(0, 1)] } else { vec![ratio(0, 1), ratio(1, 1)] }).collect(),
            bin(),
        ),
        (
            "identity on Z[2,1]",
            z21.clone(),
            (0..4).map(|x| (0..4).map(|b| ratio((x == b) as i64, 1)).collect()).collect(),
            (0..4).map(|b| b.to_string()).collect(),
        ),
        ("kernel on D1(Z2)", d1z2, vec![vec![ratio(1, 3), ratio(2, 3)], vec![ratio(3, 4), ratio(1, 4)]], bin()),
        (
            "kernel on Z[2,1]",
            z21,
            (0..4).map(|x| vec![ratio(x + 1, 5), ratio(4 - x, 5)]).collect(),
            bin(),
        ),
        (
            "Dirac middle bit on Z[3,1]",
            FilteredGroup::canonical(3, 1).unwrap(),
            (0..8).map(|x| if (x >> 1) % 2 == 0 { vec![ratio(1, 1), ratio(0, 1)] } else { vec![ratio(0, 1), ratio(1, 1)] }).collect(),
            bin(),
        ),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, z, kernel, alphabet) in limits {
        let lim = LimitObject::new(z.clone(), alphabet, kernel.clone()).unwrap();
        for k in [2, 3] {
            let d = zeta_marginal(&lim, &LinearFormSystem::full(k).unwrap(), Mode::Exact, &opts()).unwrap();
            let oracle_ok = same_weights(&d, &zeta_by_cubes(&z, &kernel, k));
            let mut pairs = 0;
            let mut factor_ok = true;
            let faces = Face::all(k);
            for a in &faces {
                for b in faces.iter().filter(|b| a.independent_of(b)) {
                    pairs += 1;
                    let pa: Vec<usize> = a.vertices().iter().map(|&v| v as usize).collect();
                    let pb: Vec<usize> = b.vertices().iter().map(|&v| v as usize).collect();
                    let joint = d.project(&[pa.clone(), pb.clone()].concat()).unwrap();
                    let split = d.project(&pa).unwrap().product(&d.project(&pb).unwrap()).unwrap();
                    factor_ok &= tv_distance(&joint, &split).unwrap().is_zero();
                }
            }
            let lib_ok = check_independence_property(&WindowDistribution::new(d).unwrap()).unwrap().pass;
            if !(oracle_ok && factor_ok && lib_ok) {
                pass = false;
                notes.push(format!("{name} k={k}: oracle={oracle_ok} factor={factor_ok} lib={lib_ok}"));
            } else if name.starts_with("kernel on Z") {
                notes.push(format!("{pairs} independent face pairs at k={k}"));
            }
        }
    }
    notes.insert(0, "6 limit objects".into());
    verdict(pass, notes.join("; "))
}

/// Law of `(f(a0 + Σ_i L_i a_{i+1}))_L` over all `(a0, .., ak)`.
fn mu_by_enumeration(f: &FunctionTable, forms: &[u32], k: usize) -> BTreeMap<Vec<u32>, BigRational> {
    let n = f.n();
    let mask = (1usize << n) - 1;
    let total = 1usize << (n * (k + 1));
    let mut counts: BTreeMap<Vec<u32>, i64> = BTreeMap::new();
    for code in 0..total {
        let a: Vec<usize> = (0..=k).map(|j| (code >> (n * j)) & mask).collect();
        let t = forms
            .iter()
            .map(|&l| {
                let pt = (0..k).filter(|i| l >> i & 1 == 1).fold(a[0], |acc, i| acc ^ a[i + 1]);
                f.values()[pt]
            })
            .collect();
        *counts.entry(t).or_default() += 1;
    }
    counts.into_iter().map(|(t, c)| (t, ratio(c, total as i64))).collect()
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut notes = Vec::new();
    let mut checks = 0;
    for fixture in 0..20 {
        let n = rng.gen_range(1..=4);
        let letters = rng.gen_range(2..=3);
        let alphabet: Vec<String> = (0..letters).map(|b| format!("b{b}")).collect();
        let values: Vec<u32> = (0..1 << n).map(|_| rng.gen_range(0..letters as u32)).collect();
        let f = FunctionTable::new(n, alphabet, values).unwrap();
        let k = rng.gen_range(1..=2);
        let m = rng.gen_range(1..=4.min(1 << k));
        let forms: Vec<u32> = rand::seq::index::sample(&mut rng, 1 << k, m)
            .into_iter()
            .map(|i| i as u32)
            .collect();
        let sys = LinearFormSystem::new(k, forms.clone()).unwrap();
        let base = sample_measure(&f, &sys, Mode::Exact, &opts()).unwrap();
        let oracle = mu_by_enumeration(&f, &forms, k);
        let mut ok = same_weights(&base, &oracle);
        for k2 in k + 1..=k + 2 {
            let wide = sample_measure(&f, &sys.embed(k2).unwrap(), Mode::Exact, &opts()).unwrap();
            ok &= tv_distance(&base, &wide).unwrap().is_zero();
            checks += 1;
        }
        for _ in 0..10 {
            let t = AffineMap::random_invertible(k, &mut rng);
            ok &= affine_relabel_invariance(&f, &sys, &t, &opts()).unwrap();
            ok &= mu_by_enumeration(&f, sys.transform(&t).unwrap().forms(), k) == oracle;
            checks += 1;
        }
        if !ok {
            pass = false;
            notes.push(format!("fixture {fixture} (n={n}, k={k}, forms {forms:?}) differs"));
        }
    }
    notes.insert(0, format!("20 fixtures, {checks} equalities"));
    verdict(pass, notes.join("; "))
}

/// `deg P ≤ k` iff every `(k+1)`-fold derivative vanishes.
fn degree_at_most(p: &NonClassicalPoly, k: usize) -> bool {
    let n = p.arity();
    let q = 1u64 << p.denominator_exponent();
    let size = 1usize << n;
    let mut tables = vec![p.table().to_vec()];
    for _ in 0..=k {
        tables = tables
            .iter()
            .flat_map(|t| {
                (0..size).map(move |h| (0..size).map(|x| (t[x ^ h] + q - t[x]) % q).collect::<Vec<u64>>())
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
    }
    tables.iter().all(|t| t.iter().all(|&v| v == 0))
}

fn criterion_6() -> Verdict {
    let cal = match calibrate_depth_convention() {
        Ok(c) => c,
        Err(e) => return verdict(false, e.to_string()),
    };
    let mut pass = cal.offset == 1;
    let mut notes = vec![format!("offset {}", cal.offset)];
    for k in 1..=3u32 {
        let rs: Vec<u32> = cal.entries.iter().filter(|e| e.k == k).map(|e| e.r).collect();
        pass &= !rs.is_empty() && rs == (0..rs.len() as u32).collect::<Vec<_>>();
    }
    let mut table = Vec::new();
    for e in &cal.entries {
        let (k, r, ell) = (e.k as usize, e.r, e.ell as usize);
        table.push(format!("({k},{r})->{ell}"));
        let target = FilteredGroup::canonical(k, ell).unwrap();
        for n in 1..=2usize {
            let polys: BTreeSet<Vec<u64>> = all_normalized(n, k as u32 + 1)
                .filter(|p| degree_at_most(p, k) && p.depth().unwrap() <= r)
                .map(|p| p.table().to_vec())
                .collect();
            let domain = (1..n).fold(FilteredGroup::cyclic_standard(2, 1).unwrap(), |g, _| {
                g.product(&FilteredGroup::cyclic_standard(2, 1).unwrap())
            });
            let scale = 1u64 << (k as u32 - r);
            let homs: BTreeSet<Vec<u64>> = enumerate_morphisms(&domain, &target, BUDGET)
                .unwrap()
                .iter()
                .filter(|phi| phi.table()[0].is_zero())
                .map(|phi| phi.table().iter().map(|y| y.residues()[0] * scale).collect())
                .collect();
            let ok = polys == homs && e.set_sizes[n - 1] == polys.len();
            if !ok {
                pass = false;
                notes.push(format!("(k={k}, r={r}) n={n}: {} polynomials vs {} morphisms", polys.len(), homs.len()));
            }
        }
    }
    notes.push(table.join(" "));
    verdict(pass, notes.join("; "))
}

/// Tuples `(P(L(x)))_L` over normalized `(k, r)`-polynomials on F2^n and
/// points `x ∈ (F2^n)^s`.
fn consistency_by_search(forms: &[u32], s: usize, k: u32, r: u32, n: usize) -> BTreeSet<Vec<u64>> {
    let polys: Vec<NonClassicalPoly> = all_normalized(n, r + 1)
        .filter(|p| p.degree() <= k as usize && p.depth().unwrap() <= r)
        .collect();
    let mut out = BTreeSet::new();
    for p in &polys {
        for code in 0..1usize << (n * s) {
            let x: Vec<u32> = (0..s).map(|j| ((code >> (n * j)) & ((1 << n) - 1)) as u32).collect();
            out.insert(
                forms
                    .iter()
                    .map(|&l| p.eval((0..s).filter(|j| l >> j & 1 == 1).fold(0, |a, j| a ^ x[j])))
                    .collect(),
            );
        }
    }
    out
}

fn criterion_7() -> Verdict {
    let mut pass = true;
    let (mut systems, mut tuples, mut short_mismatch, mut long_mismatch) = (0, 0, 0, 0);
    let mut notes = Vec::new();
    for (k, r) in [(1u32, 0u32), (2, 0), (2, 1)] {
        let q = 1u64 << (r + 1);
        for s in 1..=3usize {
            let all: Vec<u32> = (0..1u32 << (s - 1)).map(|j| 1 | j << 1).collect();
            let reach = consistency_by_search(&all, s, k, r, s);
            let short = consistency_by_search(&all, s, k, r, s - 1);
            let long = (s <= 2).then(|| consistency_by_search(&all, s, k, r, s + 1));
            if let Some(long) = &long {
                long_mismatch += (long != &reach) as usize;
            }
            for subset in 1..1u32 << all.len() {
                let idx: Vec<usize> = (0..all.len()).filter(|i| subset >> i & 1 == 1).collect();
                let forms: Vec<u32> = idx.iter().map(|&i| all[i]).collect();
                let sys = LinearFormSystem::new(s, forms.clone()).unwrap();
                let project =
                    |set: &BTreeSet<Vec<u64>>| -> BTreeSet<Vec<u64>> { set.iter().map(|t| idx.iter().map(|&i| t[i]).collect()).collect() };
                let (want, want_short) = (project(&reach), project(&short));
                systems += 1;
                let m = forms.len() as u32;
                for code in 0..q.pow(m) {
                    let t: Vec<u64> = (0..m).map(|i| code / q.pow(i) % q).collect();
                    tuples += 1;
                    let member = is_consistent(&t, &sys, k, r).unwrap().member;
                    if member != want.contains(&t) {
                        pass = false;
                        notes.push(format!("(k={k}, r={r}) forms {forms:?} tuple {t:?}"));
                    }
                    short_mismatch += (member != want_short.contains(&t)) as usize;
                }
            }
        }
    }
    notes.insert(
        0,
        format!(
            "{systems} systems, {tuples} tuples; search on F2^(s-1) disagrees on {short_mismatch}, F2^(s+1) changes {long_mismatch} reach sets"
        ),
    );
    verdict(pass && long_mismatch == 0, notes.join("; "))
}

fn criterion_8() -> Verdict {
    let groups = corpus();
    let (mut maps, mut surjective, mut counterexamples, mut converse, mut degree_drop) = (0, 0, 0, 0, 0);
    for (_, x) in &groups {
        for (_, y) in &groups {
            let phis = enumerate_morphisms(x, y, BUDGET).unwrap();
            let nmax = default_nmax(x, y).min(3);
            let cs = CubeSurjectivity::new(x, y, nmax, BUDGET).unwrap();
            for phi in &phis {
                maps += 1;
                let s = cs.check(phi).unwrap().surjective;
                let f = is_fibration(phi).unwrap();
                surjective += s as usize;
                counterexamples += (s && !f) as usize;
                converse += (f && !s) as usize;
                degree_drop += (s && y.effective_degree() > x.effective_degree()) as usize;
            }
        }
    }
    let d1 = FilteredGroup::cyclic_standard(2, 1).unwrap();
    let z21 = FilteredGroup::canonical(2, 1).unwrap();
    let (small, big) = (cube_count(&d1, 3), cube_count(&z21, 3));
    let cs = CubeSurjectivity::new(&d1, &z21, 3, BUDGET).unwrap();
    let obstructed = enumerate_morphisms(&d1, &z21, BUDGET)
        .unwrap()
        .iter()
        .all(|phi| !cs.check(phi).unwrap().surjective);
    let pass = counterexamples == 0 && degree_drop == 0 && small < big && obstructed;
    verdict(
        pass,
        format!(
            "{maps} morphisms over 49 pairs, {surjective} cube-surjective, {counterexamples} non-fibrations among them, {converse} fibrations not cube-surjective; |C3(D1(Z2))|={small} < |C3(Z[2,1])|={big}, no cube-surjective map: {obstructed}"
        ),
    )
}

fn criterion_9() -> Verdict {
    let z = FilteredGroup::canonical(2, 1).unwrap();
    let bin = vec!["0".to_string(), "1".to_string()];
    let lim = LimitObject::dirac(z.clone(), bin.clone(), |x| (x % 2) as u32).unwrap();
    let sys = LinearFormSystem::full(2).unwrap();
    let zeta = zeta_marginal(&lim, &sys, Mode::Exact, &opts()).unwrap();
    let seed = 1;
    let mut tvs = Vec::new();
    let mut morphisms = true;
    for n in [4usize, 8, 12] {
        let wrapped: Vec<u64> = (0..1u32 << n).map(|v| (v.count_ones() % 4) as u64).collect();
        morphisms &= NonClassicalPoly::new(n, 2, wrapped.clone()).unwrap().is_morphism_into(&z).unwrap();
        if n == 4 {
            let cube = (0..n).fold(FilteredGroup::trivial(), |g, _| g.product(&FilteredGroup::cyclic_standard(2, 1).unwrap()));
            let phi = GroupNilspaceMap::from_fn(&cube, &z, |x| {
                let w: u64 = x.residues().iter().sum();
                GroupElement(vec![w % 4])
            })
            .unwrap();
            morphisms &= is_morphism(&phi, default_nmax(&cube, &z)).unwrap();
        }
        let f = FunctionTable::from_fn(n, bin.clone(), |v| v.count_ones() % 4 % 2).unwrap();
        let mode = Mode::MonteCarlo { samples: 100_000, seed };
        let mu = sample_measure(&f, &sys, mode, &opts()).unwrap();
        tvs.push(tv_distance(&mu, &zeta).unwrap().as_f64());
    }
    let exact: Vec<String> = [4usize, 8]
        .iter()
        .map(|&n| {
            let f = FunctionTable::from_fn(n, bin.clone(), |v| v.count_ones() % 4 % 2).unwrap();
            let mu = sample_measure(&f, &sys, Mode::Exact, &opts()).unwrap();
            format!("n={n}: {}", tv_distance(&mu, &zeta).unwrap())
        })
        .collect();
    let monotone = tvs.windows(2).all(|w| w[1] <= w[0]);
    let pass = morphisms && monotone && tvs[2] <= 0.05;
    verdict(
        pass,
        format!(
            "TV at n=4,8,12: {:.5} {:.5} {:.5} (seed {seed}, N=1e5); non-increasing={monotone}; exact TV {}; f_n morphisms={morphisms}",
            tvs[0],
            tvs[1],
            tvs[2],
            exact.join(", ")
        ),
    )
}

fn criterion_10() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let runs: Vec<Vec<&str>> = vec![
        vec!["sample-measure", "--function", "id_f.json", "--forms", "full1.json"],
        vec!["sample-measure", "--function", "xor_f.json", "--forms", "full2.json", "--mode", "mc", "--seed", "7", "--samples", "20000"],
        vec!["--jobs", "4", "sample-measure", "--function", "xor_f.json", "--forms", "pair2.json", "--mode", "mc", "--seed", "7"],
        vec!["sample-measure", "--function", "const_f.json", "--forms", "full2.json", "--csv"],
        vec!["zeta", "--limit", "lim_id_d1z2.json", "--forms", "full2.json"],
        vec!["zeta", "--limit", "lim_id_d1z2.json", "--forms", "full2.json", "--mode", "mc", "--seed", "3", "--samples", "5000"],
        vec!["converge", "--function", "id_f.json", "xor_f.json", "--forms", "full1.json", "pair2.json", "--limit", "lim_id_d1z2.json"],
        vec!["exch", "--group", "d1z3.json", "--window", "2"],
        vec!["exch", "--group", "z21.json", "--window", "3", "--check", "cubic", "--m", "2"],
        vec!["consistency", "--forms", "full2.json", "--k", "1", "--r", "0", "--tuple", "0,0,0,1", "--lift"],
        vec!["fib", "--domain", "z21.json", "--codomain", "z11.json", "--map", "map_z21_z11.json"],
        vec!["fib", "--domain", "d1z2.json", "--codomain", "z21.json"],
        vec!["calibrate"],
        vec!["cube-count", "--group", "z21.json", "--n", "3"],
        vec!["complete-corner", "--group", "d1z2.json", "--corner", "corner_d1z2.json"],
    ];
    let run = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_cubelab"))
            .args(args)
            .current_dir(&dir)
            .env_remove("CUBELAB_BUDGET")
            .output()
            .unwrap()
    };
    let mut bad = Vec::new();
    let mut subcommands = BTreeSet::new();
    for args in &runs {
        let (a, b) = (run(args), run(args));
        subcommands.insert(args.iter().find(|a| !a.starts_with('-') && a.parse::<u32>().is_err()).copied());
        if !a.status.success() || a.stdout != b.stdout || a.stdout.is_empty() {
            bad.push(args.join(" "));
        }
    }
    let pass = bad.is_empty() && subcommands.len() == 9;
    verdict(
        pass,
        format!("{} invocations over {} subcommands; differing: {bad:?}", runs.len(), subcommands.len()),
    )
}

fn main() {
    let criteria: Vec<(&str, u64, fn() -> Verdict)> = vec![
        ("cube-group bijection and counting", 10, criterion_1),
        ("ergodicity and restriction consistency", 30, criterion_2),
        ("affine exchangeability iff 2-homogeneity", 5, criterion_3),
        ("independence property of limit marginals", 60, criterion_4),
        ("ambient dimension and affine relabel invariance", 30, criterion_5),
        ("depth convention calibration", 60, criterion_6),
        ("consistency subgroup equals exhaustive search", 120, criterion_7),
        ("cube-surjective morphisms are fibrations", 300, criterion_8),
        ("limit-domain convergence demo", 120, criterion_9),
        ("CLI determinism", 60, criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let in_time = took <= Duration::from_secs(limit);
        let pass = v.pass && in_time;
        failed += !pass as usize;
        println!(
            "{} {:>2} {name} [{:.1}s / {limit}s]: {}",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            took.as_secs_f64(),
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
