//! Filter-based Mathias conditions with symbolic upper parts.

pub mod anchor;
pub mod oscillation;

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::ProductCondition;
use crate::requirements::Probe;

/// Default cap on the number of candidates any numeric query may inspect.
pub const SEARCH_BOUND: u64 = 1 << 20;

pub fn default_bound() -> u64 {
    SEARCH_BOUND
}

/// A periodic infinite subset of ω.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// `{ n : n ≡ residue mod modulus }`.
    Residue { modulus: u64, residue: u64 },
    /// `{ n : n ≢ residue mod modulus }`.
    AvoidResidue { modulus: u64, residue: u64 },
}

impl Generator {
    pub fn new_residue(modulus: u64, residue: u64) -> Result<Self> {
        if modulus == 0 || residue >= modulus {
            return Err(Error::Input(format!("bad residue class {residue} mod {modulus}")));
        }
        Ok(Generator::Residue { modulus, residue })
    }

    pub fn new_avoid(modulus: u64, residue: u64) -> Result<Self> {
        if modulus < 2 || residue >= modulus {
            return Err(Error::Input(format!("bad excluded class {residue} mod {modulus}")));
        }
        Ok(Generator::AvoidResidue { modulus, residue })
    }

    pub fn evens() -> Self {
        Generator::Residue { modulus: 2, residue: 0 }
    }

    pub fn member(&self, n: u64) -> bool {
        match *self {
            Generator::Residue { modulus, residue } => n % modulus == residue,
            Generator::AvoidResidue { modulus, residue } => n % modulus != residue,
        }
    }

    pub fn period(&self) -> u64 {
        match *self {
            Generator::Residue { modulus, .. } | Generator::AvoidResidue { modulus, .. } => modulus,
        }
    }

    /// Least member strictly above `n`.
    pub fn next_above(&self, n: u64) -> u64 {
        (n + 1..).find(|&m| self.member(m)).expect("generators are infinite")
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Residue { modulus, residue } => write!(f, "={residue} mod {modulus}"),
            Generator::AvoidResidue { modulus, residue } => write!(f, "!={residue} mod {modulus}"),
        }
    }
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Common period of a set of generators, or a capability error past `bound`.
pub fn common_period<'a, I: IntoIterator<Item = &'a Generator>>(gens: I, bound: u64) -> Result<u64> {
    let mut l = 1u64;
    for g in gens {
        let p = g.period();
        l = (l / gcd(l, p))
            .checked_mul(p)
            .filter(|&l| l <= bound)
            .ok_or_else(|| Error::Capability(format!("generator period exceeds the search bound {bound}")))?;
    }
    Ok(l)
}

/// A filter on ω: everything containing a cofinite piece of a finite
/// intersection of its generators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterRep {
    pub id: String,
    pub generators: BTreeSet<Generator>,
    /// Position in an inclusion-ordered family; larger ranks are larger filters.
    pub rank: u32,
}

impl FilterRep {
    pub fn new(id: impl Into<String>, generators: impl IntoIterator<Item = Generator>, rank: u32) -> Result<Self> {
        let f = FilterRep {
            id: id.into(),
            generators: generators.into_iter().collect(),
            rank,
        };
        f.validate(SEARCH_BOUND)?;
        Ok(f)
    }

    pub fn cofinite() -> Self {
        FilterRep {
            id: "cofinite".into(),
            generators: BTreeSet::new(),
            rank: 0,
        }
    }

    /// The intersection of all generators is infinite, which gives the
    /// finite-intersection property for every subfamily.
    pub fn validate(&self, bound: u64) -> Result<()> {
        let period = common_period(&self.generators, bound)?;
        if (0..period).any(|n| self.generators.iter().all(|g| g.member(n))) {
            Ok(())
        } else {
            Err(Error::Input(format!("filter `{}` has an empty intersection of generators", self.id)))
        }
    }

    pub fn contains(&self, term: &UpperPartTerm) -> bool {
        term.generators.is_subset(&self.generators)
    }

    pub fn top_term(&self) -> UpperPartTerm {
        UpperPartTerm::cofinite(&self.id, 0)
    }
}

/// Checks that the filters are linearly ordered by inclusion, consistently
/// with their ranks.
pub fn check_linear(filters: &[FilterRep]) -> Result<()> {
    let mut sorted: Vec<&FilterRep> = filters.iter().collect();
    sorted.sort_by_key(|f| f.rank);
    for w in sorted.windows(2) {
        if w[0].rank == w[1].rank && w[0].generators != w[1].generators {
            return Err(Error::Input(format!("`{}` and `{}` share a rank but differ", w[0].id, w[1].id)));
        }
        if !w[0].generators.is_subset(&w[1].generators) {
            return Err(Error::Input(format!(
                "`{}` is not included in `{}`",
                w[0].id, w[1].id
            )));
        }
    }
    Ok(())
}

/// `(⋂ generators) ∩ [floor, ∞) \ excluded`, tagged with the filter it lives in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UpperPartTerm {
    pub filter: String,
    pub generators: BTreeSet<Generator>,
    pub floor: u64,
    pub excluded: BTreeSet<u64>,
}

impl UpperPartTerm {
    pub fn cofinite(filter: &str, floor: u64) -> Self {
        UpperPartTerm {
            filter: filter.into(),
            generators: BTreeSet::new(),
            floor,
            excluded: BTreeSet::new(),
        }
    }

    pub fn contains(&self, n: u64) -> bool {
        n >= self.floor && !self.excluded.contains(&n) && self.generators.iter().all(|g| g.member(n))
    }

    /// Least element of the denotation at or above `n`.
    pub fn next_at_or_above(&self, n: u64, bound: u64) -> Result<u64> {
        let start = n.max(self.floor);
        (start..start.saturating_add(bound))
            .find(|&m| self.contains(m))
            .ok_or_else(|| Error::SearchBound {
                bound,
                context: format!("no element of {self} at or above {n}"),
            })
    }

    /// Least element of the denotation strictly above `n`.
    pub fn next(&self, n: u64, bound: u64) -> Result<u64> {
        self.next_at_or_above(n + 1, bound)
    }

    pub fn min(&self, bound: u64) -> Result<u64> {
        self.next_at_or_above(0, bound)
    }

    /// Same denotation, with exclusions below the floor dropped.
    pub fn canonical(mut self) -> Self {
        let floor = self.floor;
        self.excluded.retain(|&e| e >= floor);
        self
    }

    pub fn raise_floor(&self, floor: u64) -> Self {
        let mut out = self.clone();
        out.floor = out.floor.max(floor);
        out.canonical()
    }

    pub fn exclude(&self, n: u64) -> Self {
        let mut out = self.clone();
        if n >= out.floor {
            out.excluded.insert(n);
        }
        out
    }

    pub fn intersect(&self, other: &UpperPartTerm, filter: &str) -> Self {
        UpperPartTerm {
            filter: filter.into(),
            generators: self.generators.union(&other.generators).copied().collect(),
            floor: self.floor.max(other.floor),
            excluded: self.excluded.union(&other.excluded).copied().collect(),
        }
        .canonical()
    }

    pub fn with_generator(&self, g: Generator) -> Self {
        let mut out = self.clone();
        out.generators.insert(g);
        out
    }

    /// Exact inclusion of denotations. Periodicity past the largest
    /// constant makes a finite scan decisive.
    pub fn subset_of(&self, other: &UpperPartTerm, bound: u64) -> Result<bool> {
        let symbolic = other.generators.is_subset(&self.generators)
            && self.floor >= other.floor
            && other
                .excluded
                .iter()
                .all(|e| self.excluded.contains(e) || !self.contains(*e));
        if symbolic {
            return Ok(true);
        }
        let period = common_period(self.generators.iter().chain(&other.generators), bound)?;
        let horizon = [
            self.floor,
            other.floor,
            self.excluded.last().map_or(0, |e| e + 1),
            other.excluded.last().map_or(0, |e| e + 1),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let end = horizon
            .checked_add(period)
            .filter(|&e| e - self.floor.min(e) <= bound)
            .ok_or_else(|| Error::Capability(format!("inclusion of {self} in {other} needs more than {bound} samples")))?;
        Ok((self.floor..end).all(|n| !self.contains(n) || other.contains(n)))
    }
}

impl fmt::Display for UpperPartTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, ∞)", self.floor)?;
        for g in &self.generators {
            write!(f, " ∩ {g}")?;
        }
        if !self.excluded.is_empty() {
            write!(f, " \\ {:?}", self.excluded)?;
        }
        Ok(())
    }
}

/// A Mathias condition `(s, A)` with `min A > max s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MathiasCondition {
    pub stem: Vec<u64>,
    pub upper: UpperPartTerm,
}

impl MathiasCondition {
    pub fn top(filter: &str) -> Self {
        MathiasCondition {
            stem: Vec::new(),
            upper: UpperPartTerm::cofinite(filter, 0),
        }
    }

    pub fn new(stem: Vec<u64>, upper: UpperPartTerm, bound: u64) -> Result<Self> {
        let c = MathiasCondition { stem, upper };
        c.validate(bound)?;
        Ok(c)
    }

    pub fn max_stem(&self) -> Option<u64> {
        self.stem.last().copied()
    }

    pub fn is_trivial(&self) -> bool {
        self.stem.is_empty() && self.upper.generators.is_empty() && self.upper.floor == 0 && self.upper.excluded.is_empty()
    }

    /// Stem strictly increasing and the upper part strictly above it.
    pub fn validate(&self, bound: u64) -> Result<()> {
        if self.stem.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Input(format!("stem {:?} is not increasing", self.stem)));
        }
        if let Some(m) = self.max_stem() {
            let least = self.upper.min(bound)?;
            if least <= m {
                return Err(Error::Input(format!(
                    "upper part starts at {least}, not above the stem maximum {m}"
                )));
            }
        }
        Ok(())
    }

    /// Appends `x` and lifts the floor past it.
    pub fn push(&self, x: u64) -> Result<Self> {
        if self.max_stem().is_some_and(|m| x <= m) || !self.upper.contains(x) {
            return Err(Error::Contract(format!("{x} cannot extend the stem {:?}", self.stem)));
        }
        let mut stem = self.stem.clone();
        stem.push(x);
        Ok(MathiasCondition {
            stem,
            upper: self.upper.raise_floor(x + 1),
        })
    }

    /// Whether `x` is decided to lie in the generic real.
    pub fn decides(&self, x: u64) -> Option<bool> {
        if self.stem.contains(&x) {
            Some(true)
        } else if self.max_stem().is_some_and(|m| x < m) || !self.upper.contains(x) {
            Some(false)
        } else {
            None
        }
    }

    /// Least point still free to join the stem.
    pub fn first_free(&self, bound: u64) -> Result<u64> {
        self.upper.min(bound)
    }
}

impl fmt::Display for MathiasCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:?}, {})", self.stem, self.upper)
    }
}

/// `c2 ≤ c1`.
pub fn mathias_leq(c2: &MathiasCondition, c1: &MathiasCondition, bound: u64) -> Result<bool> {
    if c2.stem.len() < c1.stem.len() || c2.stem[..c1.stem.len()] != c1.stem[..] {
        return Ok(false);
    }
    if c2.stem[c1.stem.len()..].iter().any(|&x| !c1.upper.contains(x)) {
        return Ok(false);
    }
    c2.upper.subset_of(&c1.upper, bound)
}

pub type MathiasProduct = ProductCondition<MathiasCondition>;

/// Coordinatewise `≤` over the union of supports.
pub fn product_leq(p2: &MathiasProduct, p1: &MathiasProduct, filters: &dyn Fn(usize) -> String, bound: u64) -> Result<bool> {
    for i in p1.parts.keys().chain(p2.parts.keys()) {
        let top = MathiasCondition::top(&filters(*i));
        if !mathias_leq(&p2.at(*i, &top), &p1.at(*i, &top), bound)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Gives every support coordinate the intersection of all support upper
/// parts, lifted above every stem.
pub fn uniformize(p: &MathiasProduct) -> Result<MathiasProduct> {
    let mut parts = p.parts.values();
    let Some(first) = parts.next() else {
        return Ok(p.clone());
    };
    if let Some(other) = p.parts.values().find(|c| c.upper.filter != first.upper.filter) {
        return Err(Error::Input(format!(
            "cannot uniformize across filters `{}` and `{}`",
            first.upper.filter, other.upper.filter
        )));
    }
    let mut upper = first.upper.clone();
    for c in parts {
        upper = upper.intersect(&c.upper, &first.upper.filter);
    }
    let top = p.parts.values().filter_map(MathiasCondition::max_stem).max();
    if let Some(m) = top {
        upper = upper.raise_floor(m + 1);
    }
    let mut out = p.clone();
    for c in out.parts.values_mut() {
        c.upper = upper.clone();
    }
    Ok(out)
}

pub fn is_uniform(p: &MathiasProduct) -> bool {
    let mut it = p.parts.values().map(|c| &c.upper);
    match it.next() {
        None => true,
        Some(u) => it.all(|v| v == u),
    }
}

/// Lifts every support floor above every support stem, leaving generators
/// alone so each coordinate stays in its own filter.
pub fn lift_floors(p: &MathiasProduct) -> MathiasProduct {
    let top = p.parts.values().filter_map(MathiasCondition::max_stem).max();
    let mut out = p.clone();
    if let Some(m) = top {
        for c in out.parts.values_mut() {
            c.upper = c.upper.raise_floor(m + 1);
        }
    }
    out
}

/// Dense sets for Mathias forcing, as stem-extending refiners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MathiasRefiner {
    /// Appends the least available point.
    LeastPoint,
    /// Appends 1 to `max_points` points, skipping up to `max_skip` candidates
    /// before each, and may shrink the upper part by a generator of the filter.
    Seeded {
        seed: u64,
        max_points: usize,
        max_skip: usize,
        shrink: bool,
    },
}

impl MathiasRefiner {
    pub fn label(&self, n: usize) -> String {
        match self {
            MathiasRefiner::LeastPoint => format!("least-point@{n}"),
            MathiasRefiner::Seeded {
                seed,
                max_points,
                max_skip,
                shrink,
            } => format!("seeded:{seed}:{max_points}:{max_skip}:{shrink}@{n}"),
        }
    }

    /// The refiner's output at round `n` on coordinate `coord`. Always adds
    /// at least one point.
    pub fn apply(&self, n: usize, coord: usize, c: &MathiasCondition, filter: &FilterRep, bound: u64) -> Result<MathiasCondition> {
        match self {
            MathiasRefiner::LeastPoint => c.push(c.first_free(bound)?),
            MathiasRefiner::Seeded {
                seed,
                max_points,
                max_skip,
                shrink,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(((n as u64) << 16) | coord as u64);
                let mut out = c.clone();
                if *shrink && !filter.generators.is_empty() && rng.random_bool(0.5) {
                    let gens: Vec<&Generator> = filter.generators.iter().collect();
                    let g = *gens[rng.random_range(0..gens.len())];
                    out.upper = out.upper.with_generator(g);
                }
                let count = rng.random_range(1..=(*max_points).max(1));
                for _ in 0..count {
                    let mut x = out.first_free(bound)?;
                    for _ in 0..rng.random_range(0..=*max_skip) {
                        x = out.upper.next(x, bound)?;
                    }
                    out = out.push(x)?;
                }
                Ok(out)
            }
        }
    }
}

/// Answers "x ∈ r_coord" from a product condition. Coordinates outside the
/// support read from `fresh`.
pub struct MathiasView<'a> {
    pub cond: &'a MathiasProduct,
    pub fresh: &'a [MathiasCondition],
}

impl Probe for MathiasView<'_> {
    fn read(&self, coord: usize, pos: usize) -> Option<bool> {
        self.cond
            .get(coord)
            .or_else(|| self.fresh.get(coord))
            .and_then(|c| c.decides(pos as u64))
    }
}

/// Sorted intersection of finitely many increasing sequences.
pub fn intersect_all(reals: &[&[u64]]) -> Vec<u64> {
    let Some((first, rest)) = reals.split_first() else {
        return Vec::new();
    };
    first
        .iter()
        .copied()
        .filter(|x| rest.iter().all(|r| r.binary_search(x).is_ok()))
        .collect()
}

/// Least element of an increasing sequence strictly above `x`.
pub fn successor(real: &[u64], x: u64) -> Option<u64> {
    let k = real.partition_point(|&y| y <= x);
    real.get(k).copied()
}

#[cfg(test)]
mod tests {
    use super::*;

    const B: u64 = SEARCH_BOUND;

    fn cof(floor: u64) -> UpperPartTerm {
        UpperPartTerm::cofinite("cofinite", floor)
    }

    #[test]
    fn term_next_examples() {
        let mut u = cof(0);
        u.excluded = [4, 5].into();
        assert_eq!(u.next(3, B).unwrap(), 6);
        let evens = cof(0).with_generator(Generator::evens());
        assert_eq!(evens.next(7, B).unwrap(), 8);
        let sixes = evens.with_generator(Generator::new_residue(3, 0).unwrap());
        assert_eq!(sixes.next(0, B).unwrap(), 6);
    }

    #[test]
    fn empty_terms_hit_the_bound() {
        let odd = Generator::new_residue(2, 1).unwrap();
        let t = cof(0).with_generator(Generator::evens()).with_generator(odd);
        assert!(matches!(t.next(0, 1000), Err(Error::SearchBound { .. })));
    }

    #[test]
    fn leq_examples() {
        let c1 = MathiasCondition::new(vec![2], cof(3), B).unwrap();
        assert!(mathias_leq(&c1, &c1, B).unwrap());
        let c2 = MathiasCondition::new(vec![2, 5], cof(6), B).unwrap();
        assert!(mathias_leq(&c2, &c1, B).unwrap());
        let c3 = MathiasCondition::new(vec![1], cof(3), B).unwrap();
        let c0 = MathiasCondition::new(vec![], cof(3), B).unwrap();
        assert!(!mathias_leq(&c3, &c0, B).unwrap());
    }

    #[test]
    fn inclusion_beyond_the_symbolic_check() {
        let mut wide = cof(3);
        wide.excluded = [4].into();
        let evens6 = cof(6).with_generator(Generator::evens());
        assert!(evens6.subset_of(&wide, B).unwrap());
        let evens2 = cof(2).with_generator(Generator::evens());
        assert!(!evens2.subset_of(&wide, B).unwrap());
        let avoid = cof(0).with_generator(Generator::new_avoid(3, 0).unwrap());
        let ones = cof(0).with_generator(Generator::new_residue(3, 1).unwrap());
        assert!(ones.subset_of(&avoid, B).unwrap());
        assert!(!avoid.subset_of(&ones, B).unwrap());
    }

    #[test]
    fn huge_periods_are_a_capability_error() {
        let a = cof(0).with_generator(Generator::new_residue(1 << 19, 0).unwrap());
        let b = cof(0).with_generator(Generator::new_residue((1 << 19) + 1, 0).unwrap());
        assert!(matches!(a.subset_of(&b, B), Err(Error::Capability(_))));
    }

    #[test]
    fn conditions_keep_the_upper_part_above_the_stem() {
        assert!(MathiasCondition::new(vec![2, 5], cof(5), B).is_err());
        assert!(MathiasCondition::new(vec![5, 2], cof(9), B).is_err());
        let c = MathiasCondition::new(vec![2], cof(3), B).unwrap();
        assert!(c.push(2).is_err());
        assert_eq!(c.push(7).unwrap().upper.floor, 8);
    }

    #[test]
    fn uniformize_examples() {
        let one = MathiasProduct::from_parts(2, [(0, MathiasCondition::new(vec![1], cof(3), B).unwrap())]);
        assert_eq!(uniformize(&one).unwrap(), one);
        let two = MathiasProduct::from_parts(
            2,
            [
                (0, MathiasCondition::new(vec![1], cof(3), B).unwrap()),
                (1, MathiasCondition::new(vec![], cof(7), B).unwrap()),
            ],
        );
        let u = uniformize(&two).unwrap();
        assert!(is_uniform(&u));
        assert!(u.parts.values().all(|c| c.upper.floor >= 7));
        assert_eq!(uniformize(&MathiasProduct::top(3)).unwrap(), MathiasProduct::top(3));
        let mut mixed = two.clone();
        mixed.parts.get_mut(&1).unwrap().upper.filter = "evens".into();
        assert!(matches!(uniformize(&mixed), Err(Error::Input(_))));
    }

    #[test]
    fn filters_validate_and_order() {
        assert!(FilterRep::new("bad", [Generator::evens(), Generator::new_residue(2, 1).unwrap()], 1).is_err());
        let evens = FilterRep::new("evens", [Generator::evens()], 1).unwrap();
        let sixes = FilterRep::new("sixes", [Generator::evens(), Generator::new_residue(3, 0).unwrap()], 2).unwrap();
        assert!(check_linear(&[FilterRep::cofinite(), evens.clone(), sixes.clone()]).is_ok());
        let thirds = FilterRep::new("thirds", [Generator::new_residue(3, 0).unwrap()], 1).unwrap();
        assert!(check_linear(&[evens, thirds]).is_err());
    }

    #[test]
    fn refiners_extend_and_stay_below() {
        let f = FilterRep::new("evens", [Generator::evens()], 1).unwrap();
        let start = MathiasCondition::top("evens");
        let r = MathiasRefiner::Seeded {
            seed: 4,
            max_points: 3,
            max_skip: 2,
            shrink: true,
        };
        let mut c = start;
        for n in 0..30 {
            let next = r.apply(n, 0, &c, &f, B).unwrap();
            assert!(next.stem.len() > c.stem.len());
            assert!(mathias_leq(&next, &c, B).unwrap());
            next.validate(B).unwrap();
            assert!(f.contains(&next.upper));
            c = next;
        }
        let least = MathiasRefiner::LeastPoint.apply(0, 0, &MathiasCondition::top("x"), &f, B).unwrap();
        assert_eq!(least.stem, vec![0]);
    }

    #[test]
    fn intersections_and_successors() {
        assert_eq!(intersect_all(&[&[1, 3, 5, 9], &[3, 4, 9]]), vec![3, 9]);
        assert_eq!(successor(&[1, 3, 5], 3), Some(5));
        assert_eq!(successor(&[1, 3, 5], 5), None);
    }
}
