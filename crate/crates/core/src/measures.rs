//! Finite distributions over label tuples, sampling measures of functions
//! on F2^n against linear-form systems, and marginals of limit objects.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::check_budget;
use crate::cubes::{cube_count, sample_cube};
use crate::error::{Error, Result};
use crate::f2::{from_bits, to_bits, AffineMap, MAX_DIM};
use crate::group2::{FilteredGroup, GroupElement};

/// An ordered set of distinct linear forms in F2^k, each a bitmask.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FormsJson", into = "FormsJson")]
pub struct LinearFormSystem {
    k: usize,
    forms: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct FormsJson {
    k: usize,
    forms: Vec<Vec<u8>>,
}

impl TryFrom<FormsJson> for LinearFormSystem {
    type Error = Error;
    fn try_from(raw: FormsJson) -> Result<Self> {
        let forms = raw
            .forms
            .iter()
            .map(|bits| {
                if bits.len() != raw.k {
                    return Err(Error::invalid(format!(
                        "form {bits:?} does not have length k = {}",
                        raw.k
                    )));
                }
                from_bits(bits)
            })
            .collect::<Result<_>>()?;
        LinearFormSystem::new(raw.k, forms)
    }
}

impl From<LinearFormSystem> for FormsJson {
    fn from(s: LinearFormSystem) -> Self {
        FormsJson {
            k: s.k,
            forms: s.forms.iter().map(|&f| to_bits(f, s.k)).collect(),
        }
    }
}

impl LinearFormSystem {
    pub fn new(k: usize, forms: Vec<u32>) -> Result<Self> {
        if k > MAX_DIM {
            return Err(Error::OutOfRange {
                what: "k",
                value: k as i64,
                range: format!("[0, {MAX_DIM}]"),
            });
        }
        for (i, &f) in forms.iter().enumerate() {
            if (f as u64) >> k != 0 {
                return Err(Error::invalid(format!("form {f:#b} does not fit in {k} bits")));
            }
            if forms[..i].contains(&f) {
                return Err(Error::invalid(format!("form {f:#b} is repeated")));
            }
        }
        Ok(LinearFormSystem { k, forms })
    }

    /// All of F2^k in index order.
    pub fn full(k: usize) -> Result<Self> {
        LinearFormSystem::new(k, (0..1u32 << k).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn forms(&self) -> &[u32] {
        &self.forms
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    /// The same forms viewed in F2^k' for `k' ≥ k`.
    pub fn embed(&self, k: usize) -> Result<Self> {
        if k < self.k {
            return Err(Error::invalid(format!("cannot embed F2^{} into F2^{k}", self.k)));
        }
        LinearFormSystem::new(k, self.forms.clone())
    }

    /// `{T(L)}` in the same order.
    pub fn transform(&self, t: &AffineMap) -> Result<Self> {
        if t.dim != self.k {
            return Err(Error::invalid(format!(
                "map acts on F2^{} but forms live in F2^{}",
                t.dim, self.k
            )));
        }
        if !t.is_invertible() {
            return Err(Error::NotInvertible);
        }
        LinearFormSystem::new(self.k, self.forms.iter().map(|&f| t.apply(f)).collect())
    }

    /// Prefixes every form with a leading 1, landing in F2^(k+1).
    pub fn lift_to_affine(&self) -> Self {
        LinearFormSystem {
            k: self.k + 1,
            forms: self.forms.iter().map(|&f| 1 | (f << 1)).collect(),
        }
    }
}

/// `f: F2^n -> B`, stored as indices into the alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "TableJson", into = "TableJson")]
pub struct FunctionTable {
    n: usize,
    alphabet: Vec<String>,
    values: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    n: usize,
    alphabet: Vec<String>,
    values: Vec<u32>,
}

impl TryFrom<TableJson> for FunctionTable {
    type Error = Error;
    fn try_from(raw: TableJson) -> Result<Self> {
        FunctionTable::new(raw.n, raw.alphabet, raw.values)
    }
}

impl From<FunctionTable> for TableJson {
    fn from(f: FunctionTable) -> Self {
        TableJson {
            n: f.n,
            alphabet: f.alphabet,
            values: f.values,
        }
    }
}

fn check_alphabet(alphabet: &[String]) -> Result<()> {
    if alphabet.is_empty() {
        return Err(Error::invalid("alphabet is empty"));
    }
    for (i, b) in alphabet.iter().enumerate() {
        if b.contains(',') {
            return Err(Error::invalid(format!("label {b:?} contains ','")));
        }
        if alphabet[..i].contains(b) {
            return Err(Error::invalid(format!("label {b:?} is repeated")));
        }
    }
    Ok(())
}

impl FunctionTable {
    pub fn new(n: usize, alphabet: Vec<String>, values: Vec<u32>) -> Result<Self> {
        if n > MAX_DIM {
            return Err(Error::invalid(format!("arity {n} is too large")));
        }
        check_alphabet(&alphabet)?;
        if values.len() != 1 << n {
            return Err(Error::invalid(format!(
                "{} values for a function on F2^{n}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v as usize >= alphabet.len()) {
            return Err(Error::invalid(format!("label index {v} is out of range")));
        }
        Ok(FunctionTable { n, alphabet, values })
    }

    pub fn from_fn(n: usize, alphabet: Vec<String>, f: impl Fn(u32) -> u32) -> Result<Self> {
        FunctionTable::new(n, alphabet, (0..1u32 << n).map(f).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    /// The same function on F2^(n+1), ignoring the new last coordinate.
    pub fn lift(&self) -> FunctionTable {
        let mask = (1u32 << self.n) - 1;
        FunctionTable {
            n: self.n + 1,
            alphabet: self.alphabet.clone(),
            values: (0..1u32 << (self.n + 1))
                .map(|x| self.values[(x & mask) as usize])
                .collect(),
        }
    }
}

/// Exact or Monte Carlo evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Mode {
    Exact,
    MonteCarlo { samples: u64, seed: u64 },
}

/// Enumeration budget (iterations) and shard count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnumOptions {
    pub budget: u64,
    pub jobs: usize,
}

impl Default for EnumOptions {
    fn default() -> Self {
        EnumOptions {
            budget: crate::DEFAULT_BUDGET,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Weights {
    Exact(BTreeMap<Vec<u32>, BigRational>),
    Estimated {
        probs: BTreeMap<Vec<u32>, f64>,
        samples: u64,
        seed: u64,
    },
}

/// A distribution over tuples of `arity` labels from `alphabet`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistJson", into = "DistJson")]
pub struct FiniteDistribution {
    arity: usize,
    alphabet: Vec<String>,
    weights: Weights,
}

#[derive(Serialize, Deserialize)]
struct DistJson {
    mode: String,
    arity: usize,
    alphabet: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    outcomes: BTreeMap<String, serde_json::Value>,
}

impl From<FiniteDistribution> for DistJson {
    fn from(d: FiniteDistribution) -> Self {
        let key = |t: &[u32]| d.outcome_key(t);
        match &d.weights {
            Weights::Exact(w) => DistJson {
                mode: "exact".into(),
                arity: d.arity,
                alphabet: d.alphabet.clone(),
                samples: None,
                seed: None,
                outcomes: w
                    .iter()
                    .map(|(t, p)| (key(t), serde_json::Value::String(p.to_string())))
                    .collect(),
            },
            Weights::Estimated {
                probs,
                samples,
                seed,
            } => DistJson {
                mode: "estimated".into(),
                arity: d.arity,
                alphabet: d.alphabet.clone(),
                samples: Some(*samples),
                seed: Some(*seed),
                outcomes: probs
                    .iter()
                    .map(|(t, &p)| (key(t), serde_json::json!(p)))
                    .collect(),
            },
        }
    }
}

impl TryFrom<DistJson> for FiniteDistribution {
    type Error = Error;
    fn try_from(raw: DistJson) -> Result<Self> {
        check_alphabet(&raw.alphabet)?;
        let index: HashMap<&str, u32> = raw
            .alphabet
            .iter()
            .enumerate()
            .map(|(i, b)| (b.as_str(), i as u32))
            .collect();
        let parse_key = |k: &str| -> Result<Vec<u32>> {
            let parts: Vec<&str> = if raw.arity == 0 && k.is_empty() {
                Vec::new()
            } else {
                k.split(',').collect()
            };
            if parts.len() != raw.arity {
                return Err(Error::invalid(format!("outcome {k:?} does not have arity {}", raw.arity)));
            }
            parts
                .iter()
                .map(|p| {
                    index
                        .get(p)
                        .copied()
                        .ok_or_else(|| Error::invalid(format!("unknown label {p:?}")))
                })
                .collect()
        };
        match raw.mode.as_str() {
            "exact" => {
                let mut w = BTreeMap::new();
                for (k, v) in &raw.outcomes {
                    let text = match v {
                        serde_json::Value::String(s) => s.clone(),
                        serde_json::Value::Number(n) if n.is_u64() => n.to_string(),
                        _ => return Err(Error::invalid(format!("probability for {k:?} must be a rational string"))),
                    };
                    let p: BigRational = text
                        .parse()
                        .map_err(|_| Error::invalid(format!("cannot parse {text:?} as a rational")))?;
                    w.insert(parse_key(k)?, p);
                }
                FiniteDistribution::exact(raw.arity, raw.alphabet.clone(), w)
            }
            "estimated" => {
                let mut probs = BTreeMap::new();
                for (k, v) in &raw.outcomes {
                    let p = v
                        .as_f64()
                        .ok_or_else(|| Error::invalid(format!("probability for {k:?} must be a number")))?;
                    probs.insert(parse_key(k)?, p);
                }
                FiniteDistribution::estimated(
                    raw.arity,
                    raw.alphabet.clone(),
                    probs,
                    raw.samples.unwrap_or(0),
                    raw.seed.unwrap_or(0),
                )
            }
            m => Err(Error::invalid(format!("unknown distribution mode {m:?}"))),
        }
    }
}

impl FiniteDistribution {
    /// Zero-weight outcomes are dropped; weights must be non-negative and sum
    /// to exactly 1.
    pub fn exact(
        arity: usize,
        alphabet: Vec<String>,
        weights: BTreeMap<Vec<u32>, BigRational>,
    ) -> Result<Self> {
        check_alphabet(&alphabet)?;
        let mut total = BigRational::zero();
        for (t, p) in &weights {
            check_outcome(t, arity, alphabet.len())?;
            if p.is_negative() {
                return Err(Error::invalid(format!("negative probability {p}")));
            }
            total += p;
        }
        if !total.is_one() {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let weights = weights.into_iter().filter(|(_, p)| !p.is_zero()).collect();
        Ok(FiniteDistribution {
            arity,
            alphabet,
            weights: Weights::Exact(weights),
        })
    }

    pub fn estimated(
        arity: usize,
        alphabet: Vec<String>,
        probs: BTreeMap<Vec<u32>, f64>,
        samples: u64,
        seed: u64,
    ) -> Result<Self> {
        check_alphabet(&alphabet)?;
        let mut total = 0.0;
        for (t, &p) in &probs {
            check_outcome(t, arity, alphabet.len())?;
            if !(p >= 0.0) {
                return Err(Error::invalid(format!("invalid probability {p}")));
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        let probs = probs.into_iter().filter(|(_, p)| *p > 0.0).collect();
        Ok(FiniteDistribution {
            arity,
            alphabet,
            weights: Weights::Estimated {
                probs,
                samples,
                seed,
            },
        })
    }

    pub fn dirac(alphabet: Vec<String>, outcome: Vec<u32>) -> Result<Self> {
        let arity = outcome.len();
        FiniteDistribution::exact(
            arity,
            alphabet,
            BTreeMap::from([(outcome, BigRational::one())]),
        )
    }

    /// Uniform over the given outcomes (duplicates count with multiplicity).
    pub fn uniform(arity: usize, alphabet: Vec<String>, outcomes: &[Vec<u32>]) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::invalid("uniform distribution over no outcomes"));
        }
        let unit = BigRational::new(BigInt::one(), BigInt::from(outcomes.len()));
        let mut w: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
        for t in outcomes {
            *w.entry(t.clone()).or_insert_with(BigRational::zero) += &unit;
        }
        FiniteDistribution::exact(arity, alphabet, w)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn weights(&self) -> &Weights {
        &self.weights
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.weights, Weights::Exact(_))
    }

    pub fn exact_weights(&self) -> Option<&BTreeMap<Vec<u32>, BigRational>> {
        match &self.weights {
            Weights::Exact(w) => Some(w),
            Weights::Estimated { .. } => None,
        }
    }

    /// Probabilities as floats (exact weights are converted).
    pub fn float_weights(&self) -> BTreeMap<Vec<u32>, f64> {
        match &self.weights {
            Weights::Exact(w) => w
                .iter()
                .map(|(t, p)| (t.clone(), p.to_f64().unwrap_or(f64::NAN)))
                .collect(),
            Weights::Estimated { probs, .. } => probs.clone(),
        }
    }

    pub fn support(&self) -> Vec<Vec<u32>> {
        match &self.weights {
            Weights::Exact(w) => w.keys().cloned().collect(),
            Weights::Estimated { probs, .. } => probs.keys().cloned().collect(),
        }
    }

    pub fn prob(&self, outcome: &[u32]) -> BigRational {
        self.exact_weights()
            .and_then(|w| w.get(outcome).cloned())
            .unwrap_or_else(BigRational::zero)
    }

    /// Labels joined by `,`.
    pub fn outcome_key(&self, t: &[u32]) -> String {
        t.iter()
            .map(|&i| self.alphabet[i as usize].as_str())
            .collect::<Vec<_>>()
            .join(",")
    }

    /// Distribution of `(t[pos[0]], t[pos[1]], …)`.
    pub fn project(&self, positions: &[usize]) -> Result<Self> {
        if let Some(&p) = positions.iter().find(|&&p| p >= self.arity) {
            return Err(Error::invalid(format!("position {p} exceeds arity {}", self.arity)));
        }
        let pick = |t: &Vec<u32>| positions.iter().map(|&p| t[p]).collect::<Vec<u32>>();
        let weights = match &self.weights {
            Weights::Exact(w) => {
                let mut out: BTreeMap<Vec<u32>, BigRational> = BTreeMap::new();
                for (t, p) in w {
                    *out.entry(pick(t)).or_insert_with(BigRational::zero) += p;
                }
                Weights::Exact(out)
            }
            Weights::Estimated {
                probs,
                samples,
                seed,
            } => {
                let mut out: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                for (t, p) in probs {
                    *out.entry(pick(t)).or_insert(0.0) += p;
                }
                Weights::Estimated {
                    probs: out,
                    samples: *samples,
                    seed: *seed,
                }
            }
        };
        Ok(FiniteDistribution {
            arity: positions.len(),
            alphabet: self.alphabet.clone(),
            weights,
        })
    }

    /// Independent product; tuples are concatenated. Both must be exact.
    pub fn product(&self, other: &Self) -> Result<Self> {
        if self.alphabet != other.alphabet {
            return Err(Error::MismatchedSpace("alphabets differ".into()));
        }
        let (a, b) = match (self.exact_weights(), other.exact_weights()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::invalid("product needs exact distributions")),
        };
        let mut out = BTreeMap::new();
        for (s, p) in a {
            for (t, q) in b {
                let mut st = s.clone();
                st.extend_from_slice(t);
                out.insert(st, p * q);
            }
        }
        Ok(FiniteDistribution {
            arity: self.arity + other.arity,
            alphabet: self.alphabet.clone(),
            weights: Weights::Exact(out),
        })
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if self.arity != other.arity {
            return Err(Error::MismatchedSpace(format!(
                "arity {} vs {}",
                self.arity, other.arity
            )));
        }
        if self.alphabet != other.alphabet {
            return Err(Error::MismatchedSpace(format!(
                "alphabet {:?} vs {:?}",
                self.alphabet, other.alphabet
            )));
        }
        Ok(())
    }
}

fn check_outcome(t: &[u32], arity: usize, letters: usize) -> Result<()> {
    if t.len() != arity {
        return Err(Error::invalid(format!("outcome {t:?} does not have arity {arity}")));
    }
    if let Some(i) = t.iter().find(|&&i| i as usize >= letters) {
        return Err(Error::invalid(format!("label index {i} is out of range")));
    }
    Ok(())
}

/// A total-variation distance, exact when both inputs are exact.
#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    Exact(BigRational),
    Float { value: f64, coerced: bool },
}

impl Distance {
    pub fn as_f64(&self) -> f64 {
        match self {
            Distance::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Distance::Float { value, .. } => *value,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Distance::Exact(r) => r.is_zero(),
            Distance::Float { value, .. } => *value == 0.0,
        }
    }

    pub fn coerced(&self) -> bool {
        matches!(self, Distance::Float { coerced: true, .. })
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distance::Exact(r) => write!(f, "{r}"),
            Distance::Float { value, .. } => write!(f, "{value}"),
        }
    }
}

/// Exact distances serialize as rational strings, float ones as numbers.
impl Serialize for Distance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Distance::Exact(r) => s.serialize_str(&r.to_string()),
            Distance::Float { value, .. } => s.serialize_f64(*value),
        }
    }
}

/// `(1/2) Σ |p - q|`.
pub fn tv_distance(a: &FiniteDistribution, b: &FiniteDistribution) -> Result<Distance> {
    a.same_space(b)?;
    if let (Some(wa), Some(wb)) = (a.exact_weights(), b.exact_weights()) {
        let mut total = BigRational::zero();
        for (t, p) in wa {
            match wb.get(t) {
                Some(q) => total += (p - q).abs(),
                None => total += p,
            }
        }
        for (t, q) in wb {
            if !wa.contains_key(t) {
                total += q;
            }
        }
        return Ok(Distance::Exact(total / BigRational::from_integer(2.into())));
    }
    let (fa, fb) = (a.float_weights(), b.float_weights());
    let mut total = 0.0;
    for (t, p) in &fa {
        total += (p - fb.get(t).copied().unwrap_or(0.0)).abs();
    }
    for (t, q) in &fb {
        if !fa.contains_key(t) {
            total += q;
        }
    }
    Ok(Distance::Float {
        value: total / 2.0,
        coerced: a.is_exact() || b.is_exact(),
    })
}

/// Shards `0..total` into `jobs` contiguous ranges.
fn shard_ranges(total: u64, jobs: usize) -> Vec<(u64, u64)> {
    let jobs = jobs.max(1) as u64;
    let base = total / jobs;
    let extra = total % jobs;
    let mut start = 0;
    (0..jobs)
        .map(|s| {
            let len = base + u64::from(s < extra);
            let r = (start, start + len);
            start += len;
            r
        })
        .collect()
}

fn shard_rng(seed: u64, shard: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard as u64);
    rng
}

/// Counts keyed by the base-`b` encoding of an outcome tuple.
enum Tally {
    Dense(Vec<u64>),
    Sparse(HashMap<u128, u64>),
}

const DENSE_LIMIT: u128 = 1 << 16;

impl Tally {
    fn new(space: u128) -> Self {
        if space <= DENSE_LIMIT {
            Tally::Dense(vec![0; space as usize])
        } else {
            Tally::Sparse(HashMap::new())
        }
    }

    #[inline]
    fn add(&mut self, key: u128, n: u64) {
        match self {
            Tally::Dense(v) => v[key as usize] += n,
            Tally::Sparse(m) => *m.entry(key).or_insert(0) += n,
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        match other {
            Tally::Dense(v) => {
                for (k, n) in v.into_iter().enumerate() {
                    if n > 0 {
                        self.add(k as u128, n);
                    }
                }
            }
            Tally::Sparse(m) => {
                for (k, n) in m {
                    self.add(k, n);
                }
            }
        }
        self
    }

    fn entries(self) -> Vec<(u128, u64)> {
        match self {
            Tally::Dense(v) => v
                .into_iter()
                .enumerate()
                .filter(|(_, n)| *n > 0)
                .map(|(k, n)| (k as u128, n))
                .collect(),
            Tally::Sparse(m) => m.into_iter().collect(),
        }
    }
}

fn outcome_space(letters: usize, arity: usize) -> Result<u128> {
    (letters as u128)
        .checked_pow(arity as u32)
        .ok_or_else(|| Error::invalid("outcome space is too large to index"))
}

fn decode_outcome(mut key: u128, letters: usize, arity: usize) -> Vec<u32> {
    (0..arity)
        .map(|_| {
            let d = (key % letters as u128) as u32;
            key /= letters as u128;
            d
        })
        .collect()
}

fn exact_from_counts(
    arity: usize,
    alphabet: Vec<String>,
    counts: Vec<(u128, u64)>,
    total: &BigUint,
) -> Result<FiniteDistribution> {
    let letters = alphabet.len();
    let denom = BigInt::from(total.clone());
    let w = counts
        .into_iter()
        .map(|(k, n)| {
            (
                decode_outcome(k, letters, arity),
                BigRational::new(BigInt::from(n), denom.clone()),
            )
        })
        .collect();
    FiniteDistribution::exact(arity, alphabet, w)
}

fn estimated_from_counts(
    arity: usize,
    alphabet: Vec<String>,
    counts: Vec<(u128, u64)>,
    samples: u64,
    seed: u64,
) -> Result<FiniteDistribution> {
    let letters = alphabet.len();
    let probs = counts
        .into_iter()
        .map(|(k, n)| (decode_outcome(k, letters, arity), n as f64 / samples as f64))
        .collect();
    FiniteDistribution::estimated(arity, alphabet, probs, samples, seed)
}

/// The sampling measure: the law of `(f(A(L)))_{L∈𝓛}` for a uniform affine
/// map `A(v) = a_0 + Σ v_i a_i` from F2^k to F2^n.
pub fn sample_measure(
    f: &FunctionTable,
    system: &LinearFormSystem,
    mode: Mode,
    opts: &EnumOptions,
) -> Result<FiniteDistribution> {
    if system.is_empty() {
        return Err(Error::EmptyFormSystem);
    }
    let n = f.n;
    let k = system.k;
    let m = system.len();
    let letters = f.alphabet.len();
    let space = outcome_space(letters, m)?;
    let mask = if n == 0 { 0 } else { (1u64 << n) - 1 };
    let supports: Vec<Vec<usize>> = system
        .forms
        .iter()
        .map(|&l| (0..k).filter(|i| l >> i & 1 == 1).map(|i| i + 1).collect())
        .collect();
    let key_of = |a: &[u32]| -> u128 {
        let mut key = 0u128;
        for s in supports.iter().rev() {
            let mut x = a[0];
            for &i in s {
                x ^= a[i];
            }
            key = key * letters as u128 + f.values[x as usize] as u128;
        }
        key
    };
    match mode {
        Mode::Exact => {
            let bits = n as u128 * (k as u128 + 1);
            if bits >= 128 {
                return Err(Error::BudgetExceeded {
                    needed: format!("2^{bits}"),
                    budget: opts.budget,
                });
            }
            let total = 1u128 << bits;
            check_budget(total, opts.budget)?;
            let total = total as u64;
            let tallies: Vec<Tally> = shard_ranges(total, opts.jobs)
                .into_par_iter()
                .map(|(lo, hi)| {
                    let mut tally = Tally::new(space);
                    let mut a = vec![0u32; k + 1];
                    for code in lo..hi {
                        for (i, slot) in a.iter_mut().enumerate() {
                            *slot = ((code >> (n * i)) & mask) as u32;
                        }
                        tally.add(key_of(&a), 1);
                    }
                    tally
                })
                .collect();
            let merged = tallies
                .into_iter()
                .reduce(Tally::merge)
                .unwrap_or_else(|| Tally::new(space));
            exact_from_counts(m, f.alphabet.clone(), merged.entries(), &BigUint::from(total))
        }
        Mode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("Monte Carlo needs at least one sample"));
            }
            let tallies: Vec<Tally> = shard_ranges(samples, opts.jobs)
                .into_par_iter()
                .enumerate()
                .map(|(shard, (lo, hi))| {
                    let mut rng = shard_rng(seed, shard);
                    let mut tally = Tally::new(space);
                    let mut a = vec![0u32; k + 1];
                    for _ in lo..hi {
                        for slot in a.iter_mut() {
                            *slot = (rng.gen::<u64>() & mask) as u32;
                        }
                        tally.add(key_of(&a), 1);
                    }
                    tally
                })
                .collect();
            let merged = tallies
                .into_iter()
                .reduce(Tally::merge)
                .unwrap_or_else(|| Tally::new(space));
            estimated_from_counts(m, f.alphabet.clone(), merged.entries(), samples, seed)
        }
    }
}

/// A 2-homogeneous filtered group with a label distribution `m(x)` at each
/// element, stored by element encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LimitJson", into = "LimitJson")]
pub struct LimitObject {
    group: FilteredGroup,
    alphabet: Vec<String>,
    m: Vec<Vec<BigRational>>,
}

#[derive(Serialize, Deserialize)]
struct LimitJson {
    group: FilteredGroup,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alphabet: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<BTreeMap<String, BTreeMap<String, String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dirac: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    identity: Option<bool>,
}

impl From<LimitObject> for LimitJson {
    fn from(lim: LimitObject) -> Self {
        let kernel = lim
            .group
            .elements()
            .zip(&lim.m)
            .map(|(x, row)| {
                let cells = row
                    .iter()
                    .zip(&lim.alphabet)
                    .filter(|(p, _)| !p.is_zero())
                    .map(|(p, b)| (b.clone(), p.to_string()))
                    .collect();
                (x.label(), cells)
            })
            .collect();
        LimitJson {
            group: lim.group,
            alphabet: Some(lim.alphabet),
            kernel: Some(kernel),
            dirac: None,
            identity: None,
        }
    }
}

impl TryFrom<LimitJson> for LimitObject {
    type Error = Error;
    fn try_from(raw: LimitJson) -> Result<Self> {
        let group = raw.group;
        let labels: Vec<String> = group.elements().map(|x| x.label()).collect();
        let lookup_elements = |keys: Vec<&String>| -> Result<()> {
            for key in keys {
                if !labels.contains(key) {
                    return Err(Error::invalid(format!("{key:?} is not an element label")));
                }
            }
            Ok(())
        };
        match (raw.kernel, raw.dirac, raw.identity) {
            (None, None, Some(true)) => LimitObject::identity(group),
            (Some(kernel), None, None) => {
                let alphabet = raw
                    .alphabet
                    .ok_or_else(|| Error::invalid("a kernel limit object needs an alphabet"))?;
                lookup_elements(kernel.keys().collect())?;
                let m = labels
                    .iter()
                    .map(|x| {
                        let row = kernel
                            .get(x)
                            .ok_or_else(|| Error::invalid(format!("no distribution for element {x}")))?;
                        let mut out = vec![BigRational::zero(); alphabet.len()];
                        for (b, p) in row {
                            let i = alphabet
                                .iter()
                                .position(|a| a == b)
                                .ok_or_else(|| Error::invalid(format!("unknown label {b:?}")))?;
                            out[i] = p
                                .parse()
                                .map_err(|_| Error::invalid(format!("cannot parse {p:?} as a rational")))?;
                        }
                        Ok(out)
                    })
                    .collect::<Result<_>>()?;
                LimitObject::new(group, alphabet, m)
            }
            (None, Some(dirac), None) => {
                let alphabet = raw
                    .alphabet
                    .ok_or_else(|| Error::invalid("a Dirac limit object needs an alphabet"))?;
                lookup_elements(dirac.keys().collect())?;
                let choice = labels
                    .iter()
                    .map(|x| {
                        let b = dirac
                            .get(x)
                            .ok_or_else(|| Error::invalid(format!("no label for element {x}")))?;
                        alphabet
                            .iter()
                            .position(|a| a == b)
                            .map(|i| i as u32)
                            .ok_or_else(|| Error::invalid(format!("unknown label {b:?}")))
                    })
                    .collect::<Result<Vec<u32>>>()?;
                LimitObject::dirac(group, alphabet, |x| choice[x])
            }
            _ => Err(Error::invalid(
                "limit object needs exactly one of \"kernel\", \"dirac\" or \"identity\": true",
            )),
        }
    }
}

impl LimitObject {
    pub fn new(group: FilteredGroup, alphabet: Vec<String>, m: Vec<Vec<BigRational>>) -> Result<Self> {
        if !group.is_two_homogeneous() {
            return Err(Error::NotTwoHomogeneous);
        }
        check_alphabet(&alphabet)?;
        if m.len() as u64 != group.order() {
            return Err(Error::invalid(format!(
                "{} label distributions for a group of order {}",
                m.len(),
                group.order()
            )));
        }
        for (x, row) in m.iter().enumerate() {
            if row.len() != alphabet.len() || row.iter().any(Signed::is_negative) {
                return Err(Error::invalid(format!("m({x}) is not a distribution on the alphabet")));
            }
            let total: BigRational = row.iter().sum();
            if !total.is_one() {
                return Err(Error::invalid(format!("m({x}) sums to {total}")));
            }
        }
        Ok(LimitObject { group, alphabet, m })
    }

    /// `m(x)` a point mass at `label(encoding of x)`.
    pub fn dirac(group: FilteredGroup, alphabet: Vec<String>, label: impl Fn(usize) -> u32) -> Result<Self> {
        let letters = alphabet.len();
        let m = (0..group.order() as usize)
            .map(|x| {
                let mut row = vec![BigRational::zero(); letters];
                if let Some(cell) = row.get_mut(label(x) as usize) {
                    *cell = BigRational::one();
                }
                row
            })
            .collect();
        LimitObject::new(group, alphabet, m)
    }

    /// Labels are the group elements themselves.
    pub fn identity(group: FilteredGroup) -> Result<Self> {
        let alphabet = group.elements().map(|x| x.label()).collect();
        LimitObject::dirac(group, alphabet, |x| x as u32)
    }

    pub fn constant(group: FilteredGroup, alphabet: Vec<String>, lambda: Vec<BigRational>) -> Result<Self> {
        let m = vec![lambda; group.order() as usize];
        LimitObject::new(group, alphabet, m)
    }

    pub fn group(&self) -> &FilteredGroup {
        &self.group
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn kernel(&self, x: &GroupElement) -> &[BigRational] {
        &self.m[self.group.encode(x)]
    }

    pub fn is_dirac(&self) -> bool {
        self.m.iter().all(|row| row.iter().any(One::is_one))
    }

    /// For Dirac kernels, the label index at each element encoding.
    pub fn dirac_labels(&self) -> Option<Vec<u32>> {
        self.m
            .iter()
            .map(|row| row.iter().position(One::is_one).map(|i| i as u32))
            .collect()
    }
}

/// `q(L) = Σ_{S ⊆ L} z_S` for each form, as element encodings.
fn form_values(z: &FilteredGroup, coeffs: &[GroupElement], forms: &[u32], scratch: &mut GroupElement, out: &mut [u32]) {
    for (slot, &l) in out.iter_mut().zip(forms) {
        scratch.0.iter_mut().for_each(|r| *r = 0);
        let mut s = l;
        loop {
            z.add_assign(scratch, &coeffs[s as usize]);
            if s == 0 {
                break;
            }
            s = (s - 1) & l;
        }
        *slot = z.encode(scratch) as u32;
    }
}

/// The marginal on `𝓛` of the limit measure: the average over uniform cubes
/// `q ∈ C^k(Z)` of `⊗_{L∈𝓛} m(q(L))`.
pub fn zeta_marginal(
    lim: &LimitObject,
    system: &LinearFormSystem,
    mode: Mode,
    opts: &EnumOptions,
) -> Result<FiniteDistribution> {
    if system.is_empty() {
        return Err(Error::EmptyFormSystem);
    }
    let z = &lim.group;
    if !z.is_two_homogeneous() {
        return Err(Error::NotTwoHomogeneous);
    }
    let k = system.k;
    let arity = system.len();
    let letters = lim.alphabet.len();
    match mode {
        Mode::Exact => {
            let cubes = cube_count(z, k);
            let work = &cubes * BigUint::from(arity);
            let work = work.to_u128().unwrap_or(u128::MAX);
            check_budget(work, opts.budget)?;
            let tuples = exact_form_value_counts(z, k, system.forms(), opts.jobs);
            exact_mixture(lim, arity, tuples, &cubes)
        }
        Mode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::invalid("Monte Carlo needs at least one sample"));
            }
            let space = outcome_space(letters, arity)?;
            let cdfs: Vec<Vec<f64>> = lim
                .m
                .iter()
                .map(|row| {
                    let mut acc = 0.0;
                    row.iter()
                        .map(|p| {
                            acc += p.to_f64().unwrap_or(0.0);
                            acc
                        })
                        .collect()
                })
                .collect();
            let tallies: Vec<Tally> = shard_ranges(samples, opts.jobs)
                .into_par_iter()
                .enumerate()
                .map(|(shard, (lo, hi))| {
                    let mut rng = shard_rng(seed, shard);
                    let mut tally = Tally::new(space);
                    let mut scratch = z.zero();
                    let mut xs = vec![0u32; arity];
                    for _ in lo..hi {
                        let c = sample_cube(z, k, &mut rng);
                        form_values(z, &c.coeffs, system.forms(), &mut scratch, &mut xs);
                        let mut key = 0u128;
                        for &x in xs.iter().rev() {
                            let cdf = &cdfs[x as usize];
                            let u: f64 = rng.gen();
                            let b = cdf.iter().position(|&c| u < c).unwrap_or_else(|| {
                                cdf.iter().rposition(|_| true).unwrap_or(0)
                            });
                            key = key * letters as u128 + b as u128;
                        }
                        tally.add(key, 1);
                    }
                    tally
                })
                .collect();
            let merged = tallies
                .into_iter()
                .reduce(Tally::merge)
                .unwrap_or_else(|| Tally::new(space));
            estimated_from_counts(arity, lim.alphabet.clone(), merged.entries(), samples, seed)
        }
    }
}

/// How often each tuple `(q(L))_L` of element encodings occurs as `q` ranges
/// over `C^k(Z)`.
fn exact_form_value_counts(z: &FilteredGroup, k: usize, forms: &[u32], jobs: usize) -> Vec<(Vec<u32>, u64)> {
    // Enumerate with z_∅ = 0, then translate by every constant.
    let mut based: HashMap<Vec<u32>, u64> = HashMap::new();
    let mut scratch = z.zero();
    let mut xs = vec![0u32; forms.len()];
    crate::cubes::for_each_based_coeffs(z, k, |c| {
        form_values(z, &c.coeffs, forms, &mut scratch, &mut xs);
        *based.entry(xs.clone()).or_insert(0) += 1;
    });
    let based: Vec<(Vec<GroupElement>, u64)> = based
        .into_iter()
        .map(|(t, n)| (t.iter().map(|&x| z.decode(x as usize)).collect(), n))
        .collect();
    let constants: Vec<GroupElement> = z.elements().collect();
    let chunk = constants.len().div_ceil(jobs.max(1)).max(1);
    let maps: Vec<BTreeMap<Vec<u32>, u64>> = constants
        .par_chunks(chunk)
        .map(|part| {
            let mut counts = BTreeMap::new();
            for g in part {
                for (t, n) in &based {
                    let key = t.iter().map(|x| z.encode(&z.add(x, g)) as u32).collect();
                    *counts.entry(key).or_insert(0) += n;
                }
            }
            counts
        })
        .collect();
    let mut merged: BTreeMap<Vec<u32>, u64> = BTreeMap::new();
    for m in maps {
        for (t, n) in m {
            *merged.entry(t).or_insert(0) += n;
        }
    }
    merged.into_iter().collect()
}

fn exact_mixture(
    lim: &LimitObject,
    arity: usize,
    tuples: Vec<(Vec<u32>, u64)>,
    cubes: &BigUint,
) -> Result<FiniteDistribution> {
    // Put every kernel row over a common denominator so the accumulation is
    // integer arithmetic.
    let mut common = BigInt::one();
    for row in &lim.m {
        for p in row {
            common = common.lcm(p.denom());
        }
    }
    let rows: Vec<Vec<(u32, BigInt)>> = lim
        .m
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, p)| !p.is_zero())
                .map(|(b, p)| (b as u32, p.numer() * (&common / p.denom())))
                .collect()
        })
        .collect();
    let mut acc: BTreeMap<Vec<u32>, BigInt> = BTreeMap::new();
    for (xs, count) in tuples {
        let mut partial: Vec<(Vec<u32>, BigInt)> = vec![(Vec::with_capacity(arity), BigInt::from(count))];
        for &x in &xs {
            let row = &rows[x as usize];
            partial = partial
                .into_iter()
                .flat_map(|(t, w)| {
                    row.iter().map(move |(b, p)| {
                        let mut t2 = t.clone();
                        t2.push(*b);
                        (t2, &w * p)
                    })
                })
                .collect();
        }
        for (t, w) in partial {
            *acc.entry(t).or_insert_with(BigInt::zero) += w;
        }
    }
    let denom = BigInt::from(cubes.clone()) * num_traits::pow(common, arity);
    let w = acc
        .into_iter()
        .map(|(t, n)| (t, BigRational::new(n, denom.clone())))
        .collect();
    FiniteDistribution::exact(arity, lim.alphabet.clone(), w)
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceEntry {
    pub from: usize,
    pub to: usize,
    pub tv: Distance,
}

#[derive(Debug, Clone, Serialize)]
pub struct SystemReport {
    pub system: LinearFormSystem,
    pub consecutive: Vec<DistanceEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<Distance>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub arities: Vec<usize>,
    pub systems: Vec<SystemReport>,
    pub coerced_to_float: bool,
}

/// Distances between the sampling measures of consecutive functions, and
/// against the limit marginal when a limit object is given.
pub fn convergence_report(
    fs: &[FunctionTable],
    systems: &[LinearFormSystem],
    mode: Mode,
    reference: Option<(&LimitObject, Mode)>,
    opts: &EnumOptions,
) -> Result<ConvergenceReport> {
    let mut coerced = false;
    let mut reports = Vec::new();
    for system in systems {
        let measures = fs
            .iter()
            .map(|f| sample_measure(f, system, mode, opts))
            .collect::<Result<Vec<_>>>()?;
        let consecutive = measures
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let tv = tv_distance(&w[0], &w[1])?;
                coerced |= tv.coerced();
                Ok(DistanceEntry { from: i, to: i + 1, tv })
            })
            .collect::<Result<Vec<_>>>()?;
        let reference = match reference {
            Some((lim, ref_mode)) => {
                let zeta = zeta_marginal(lim, system, ref_mode, opts)?;
                Some(
                    measures
                        .iter()
                        .map(|mu| {
                            let tv = tv_distance(mu, &zeta)?;
                            coerced |= tv.coerced();
                            Ok(tv)
                        })
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            None => None,
        };
        reports.push(SystemReport {
            system: system.clone(),
            consecutive,
            reference,
        });
    }
    Ok(ConvergenceReport {
        arities: fs.iter().map(|f| f.n).collect(),
        systems: reports,
        coerced_to_float: coerced,
    })
}

/// Whether the exact sampling measure of `f` on `T(𝓛)` equals the one on
/// `𝓛`, with outcomes matched form by form.
pub fn affine_relabel_invariance(
    f: &FunctionTable,
    system: &LinearFormSystem,
    t: &AffineMap,
    opts: &EnumOptions,
) -> Result<bool> {
    let moved = system.transform(t)?;
    let a = sample_measure(f, system, Mode::Exact, opts)?;
    let b = sample_measure(f, &moved, Mode::Exact, opts)?;
    Ok(a == b)
}
