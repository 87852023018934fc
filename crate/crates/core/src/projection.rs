//! Projections between posets.
//!
//! A projection here carries its constructive content: besides the map itself
//! it can produce, for `q` and `p <= map(q)`, some `q' <= q` with
//! `map(q') <= p`. Engines only ever consume the projection property through
//! [`Projection::refine_below`].
//!
//! Finite posets and finite Boolean algebras live here too; they exist so the
//! projection axioms and the name-table construction can be checked by brute
//! force on toy instances.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::{GeneratedFilter, Poset};

pub trait Projection {
    type Source: Poset;
    type Target: Poset;

    fn source(&self) -> &Self::Source;
    fn target(&self) -> &Self::Target;

    fn map(&self, q: &<Self::Source as Poset>::Cond) -> <Self::Target as Poset>::Cond;

    /// Some `q' <= q` with `map(q') <= p`. Only meaningful when `p <= map(q)`.
    fn refine_below(
        &self,
        q: &<Self::Source as Poset>::Cond,
        p: &<Self::Target as Poset>::Cond,
    ) -> <Self::Source as Poset>::Cond;

    /// `(q2, p2)` is below `(q1, p1)` in the weak tagged order.
    fn tagged_weak_below(
        &self,
        q2: &<Self::Source as Poset>::Cond,
        p2: &<Self::Target as Poset>::Cond,
        q1: &<Self::Source as Poset>::Cond,
        p1: &<Self::Target as Poset>::Cond,
    ) -> bool {
        let t = self.target();
        (q2 == q1 && t.leq(p2, p1)) || self.tagged_strong_below(q2, q1, p1)
    }

    /// The second alternative of the tagged order; the tag of the lower pair
    /// plays no role.
    fn tagged_strong_below(
        &self,
        q2: &<Self::Source as Poset>::Cond,
        q1: &<Self::Source as Poset>::Cond,
        p1: &<Self::Target as Poset>::Cond,
    ) -> bool {
        self.source().leq(q2, q1) && self.target().leq(&self.map(q2), p1)
    }
}

/// Push a descending chain through a projection. The images of a filter's
/// chain again form a chain; this is checked.
pub fn induced_generic<Pr: Projection>(
    pi: &Pr,
    h: &GeneratedFilter<<Pr::Source as Poset>::Cond>,
) -> Result<GeneratedFilter<<Pr::Target as Poset>::Cond>> {
    let images: Vec<_> = h.chain.iter().map(|q| pi.map(q)).collect();
    let out = GeneratedFilter {
        chain: images,
        scheduled: h.scheduled.clone(),
    };
    if !out.is_descending(pi.target()) {
        return Err(Error::Contract(
            "projection images of a descending chain are not descending".into(),
        ));
    }
    Ok(out)
}

/// An explicitly enumerated finite poset. Conditions are indices.
#[derive(Clone, PartialEq, Eq)]
pub struct FinitePoset {
    labels: Vec<String>,
    below: Vec<Vec<bool>>,
    top: usize,
}

impl fmt::Debug for FinitePoset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinitePoset")
            .field("size", &self.labels.len())
            .field("top", &self.labels[self.top])
            .finish()
    }
}

pub const ENUMERATION_LIMIT: usize = 4096;

impl FinitePoset {
    /// Builds and verifies the partial-order axioms on every pair and triple.
    pub fn new<F>(labels: Vec<String>, leq: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> bool,
    {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Input("empty poset".into()));
        }
        if n > ENUMERATION_LIMIT {
            return Err(Error::Capability(format!(
                "poset of size {n} exceeds enumeration limit {ENUMERATION_LIMIT}"
            )));
        }
        let below: Vec<Vec<bool>> = (0..n).map(|a| (0..n).map(|b| leq(a, b)).collect()).collect();
        for a in 0..n {
            if !below[a][a] {
                return Err(Error::Contract(format!("not reflexive at {}", labels[a])));
            }
            for b in 0..n {
                if a != b && below[a][b] && below[b][a] {
                    return Err(Error::Contract(format!(
                        "not antisymmetric: {} and {}",
                        labels[a], labels[b]
                    )));
                }
                if below[a][b] {
                    for c in 0..n {
                        if below[b][c] && !below[a][c] {
                            return Err(Error::Contract(format!(
                                "not transitive: {} {} {}",
                                labels[a], labels[b], labels[c]
                            )));
                        }
                    }
                }
            }
        }
        let top = (0..n)
            .find(|&t| (0..n).all(|a| below[a][t]))
            .ok_or_else(|| Error::Contract("no largest element".into()))?;
        Ok(FinitePoset { labels, below, top })
    }

    /// Enumerates an arbitrary poset from an explicit list of its conditions.
    pub fn enumerate<P: Poset>(poset: &P, elements: &[P::Cond]) -> Result<Self>
    where
        P::Cond: fmt::Debug,
    {
        let labels = elements.iter().map(|e| format!("{e:?}")).collect();
        FinitePoset::new(labels, |a, b| poset.leq(&elements[a], &elements[b]))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, a: usize) -> &str {
        &self.labels[a]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn top_index(&self) -> usize {
        self.top
    }
}

impl Poset for FinitePoset {
    type Cond = usize;

    fn top(&self) -> usize {
        self.top
    }

    fn leq(&self, a: &usize, b: &usize) -> bool {
        self.below[*a][*b]
    }

    fn compatible(&self, a: &usize, b: &usize) -> Option<bool> {
        Some((0..self.len()).any(|c| self.below[c][*a] && self.below[c][*b]))
    }
}

/// A map between finite posets, with `refine_below` choosing the first
/// witness in enumeration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FiniteProjection {
    pub source: FinitePoset,
    pub target: FinitePoset,
    pub map: Vec<usize>,
}

impl FiniteProjection {
    pub fn new(source: FinitePoset, target: FinitePoset, map: Vec<usize>) -> Result<Self> {
        if map.len() != source.len() || map.iter().any(|&p| p >= target.len()) {
            return Err(Error::Input("map is not a total function into the target".into()));
        }
        Ok(FiniteProjection { source, target, map })
    }

    pub fn identity(poset: FinitePoset) -> Self {
        let map = (0..poset.len()).collect();
        FiniteProjection {
            source: poset.clone(),
            target: poset,
            map,
        }
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &FiniteProjection, inner: &FiniteProjection) -> Result<Self> {
        if inner.target != outer.source {
            return Err(Error::Input("composition of mismatched projections".into()));
        }
        let map = inner.map.iter().map(|&p| outer.map[p]).collect();
        FiniteProjection::new(inner.source.clone(), outer.target.clone(), map)
    }
}

impl Projection for FiniteProjection {
    type Source = FinitePoset;
    type Target = FinitePoset;

    fn source(&self) -> &FinitePoset {
        &self.source
    }

    fn target(&self) -> &FinitePoset {
        &self.target
    }

    fn map(&self, q: &usize) -> usize {
        self.map[*q]
    }

    fn refine_below(&self, q: &usize, p: &usize) -> usize {
        (0..self.source.len())
            .find(|&r| self.source.leq(&r, q) && self.target.leq(&self.map[r], p))
            .unwrap_or(*q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxiomViolation {
    TopNotPreserved { image: String },
    OrderNotPreserved { lower: String, upper: String },
    ConeNotDense { q: String, p: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomVerdict {
    pub violations: Vec<AxiomViolation>,
    /// Source conditions skipped because their image is the zero element.
    pub vacuous: Vec<String>,
}

impl AxiomVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_top_violation(&self) -> bool {
        self.violations
            .iter()
            .any(|v| matches!(v, AxiomViolation::TopNotPreserved { .. }))
    }
}

/// Brute-force check of top preservation, order preservation and cone density.
pub fn check_projection_axioms(pi: &FiniteProjection) -> AxiomVerdict {
    check_map_axioms(&pi.source, &pi.target, |q| Some(pi.map[q]))
}

/// Shared checker: `map` returns `None` for source conditions whose image lies
/// outside the target (reported as vacuous rather than as violations).
fn check_map_axioms<F>(source: &FinitePoset, target: &FinitePoset, map: F) -> AxiomVerdict
where
    F: Fn(usize) -> Option<usize>,
{
    let mut verdict = AxiomVerdict::default();
    match map(source.top_index()) {
        Some(img) if img == target.top_index() => {}
        Some(img) => verdict.violations.push(AxiomViolation::TopNotPreserved {
            image: target.label(img).to_string(),
        }),
        None => verdict.violations.push(AxiomViolation::TopNotPreserved {
            image: "zero".into(),
        }),
    }
    for a in 0..source.len() {
        for b in 0..source.len() {
            if !source.leq(&a, &b) {
                continue;
            }
            match (map(a), map(b)) {
                (Some(x), Some(y)) if target.leq(&x, &y) => {}
                (None, _) => {}
                _ => verdict.violations.push(AxiomViolation::OrderNotPreserved {
                    lower: source.label(a).to_string(),
                    upper: source.label(b).to_string(),
                }),
            }
        }
    }
    for q in 0..source.len() {
        let Some(img) = map(q) else {
            verdict.vacuous.push(source.label(q).to_string());
            continue;
        };
        for p in 0..target.len() {
            if !target.leq(&p, &img) {
                continue;
            }
            let dense = (0..source.len())
                .any(|r| source.leq(&r, &q) && map(r).is_some_and(|x| target.leq(&x, &p)));
            if !dense {
                verdict.violations.push(AxiomViolation::ConeNotDense {
                    q: source.label(q).to_string(),
                    p: target.label(p).to_string(),
                });
            }
        }
    }
    verdict
}

/// The finite Boolean algebra of subsets of `atoms` atoms, elements as bitmasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BooleanAlgebra {
    atoms: u32,
}

impl BooleanAlgebra {
    /// At most 2^6 elements; the axioms are verified exhaustively.
    pub fn new(atoms: u32) -> Result<Self> {
        if atoms > 6 {
            return Err(Error::Capability(format!("{atoms} atoms exceeds the finite-scale bound")));
        }
        let b = BooleanAlgebra { atoms };
        b.verify()?;
        Ok(b)
    }

    pub fn size(&self) -> usize {
        1 << self.atoms
    }

    pub fn atoms(&self) -> u32 {
        self.atoms
    }

    pub fn zero(&self) -> u32 {
        0
    }

    pub fn one(&self) -> u32 {
        (1u32 << self.atoms) - 1
    }

    pub fn meet(&self, a: u32, b: u32) -> u32 {
        a & b
    }

    pub fn join(&self, a: u32, b: u32) -> u32 {
        a | b
    }

    pub fn complement(&self, a: u32) -> u32 {
        !a & self.one()
    }

    pub fn leq(&self, a: u32, b: u32) -> bool {
        a & b == a
    }

    pub fn elements(&self) -> impl Iterator<Item = u32> {
        0..(1u32 << self.atoms)
    }

    fn verify(&self) -> Result<()> {
        let els: Vec<u32> = self.elements().collect();
        for &a in &els {
            if self.join(a, self.complement(a)) != self.one()
                || self.meet(a, self.complement(a)) != self.zero()
                || self.meet(a, self.one()) != a
                || self.join(a, self.zero()) != a
            {
                return Err(Error::Contract(format!("complement/bounds fail at {a:b}")));
            }
            for &b in &els {
                if self.meet(a, b) != self.meet(b, a) || self.join(a, self.meet(a, b)) != a {
                    return Err(Error::Contract(format!("lattice law fails at {a:b},{b:b}")));
                }
                for &c in &els {
                    if self.meet(a, self.join(b, c))
                        != self.join(self.meet(a, b), self.meet(a, c))
                    {
                        return Err(Error::Contract("distributivity fails".into()));
                    }
                }
            }
        }
        Ok(())
    }

    fn label(&self, a: u32) -> String {
        format!("{:0width$b}", a, width = self.atoms.max(1) as usize)
    }

    /// The nonzero elements below `p0`, as a forcing poset.
    pub fn cone(&self, p0: u32) -> Result<(FinitePoset, Vec<u32>)> {
        if p0 == 0 {
            return Err(Error::Input("cone below zero is empty".into()));
        }
        let members: Vec<u32> = self.elements().filter(|&e| e != 0 && self.leq(e, p0)).collect();
        let labels = members.iter().map(|&e| self.label(e)).collect();
        let poset = FinitePoset::new(labels, |a, b| self.leq(members[a], members[b]))?;
        Ok((poset, members))
    }

    pub fn forcing_poset(&self) -> Result<(FinitePoset, Vec<u32>)> {
        self.cone(self.one())
    }
}

/// For each condition `q` of a finite poset, the set of algebra elements `q`
/// forces into the generic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenericNameTable {
    pub rows: Vec<BTreeSet<u32>>,
}

impl GenericNameTable {
    pub fn validate(&self, q: &FinitePoset, b: &BooleanAlgebra) -> Result<()> {
        if self.rows.len() != q.len() {
            return Err(Error::Input("table must have one row per condition".into()));
        }
        let top = q.top_index();
        if !self.rows[top].contains(&b.one()) {
            return Err(Error::Contract("top does not force one".into()));
        }
        for (qi, row) in self.rows.iter().enumerate() {
            for &x in row {
                if x >= b.size() as u32 {
                    return Err(Error::Input(format!("element {x} outside the algebra")));
                }
                for y in b.elements() {
                    if b.leq(x, y) && !row.contains(&y) {
                        return Err(Error::Contract(format!(
                            "row {} not upward closed at {x:b} <= {y:b}",
                            q.label(qi)
                        )));
                    }
                }
                for &y in row {
                    if !row.contains(&b.meet(x, y)) {
                        return Err(Error::Contract(format!(
                            "row {} not closed under meets at {x:b}, {y:b}",
                            q.label(qi)
                        )));
                    }
                }
            }
        }
        for a in 0..q.len() {
            for c in 0..q.len() {
                if q.leq(&a, &c) && !self.rows[c].is_subset(&self.rows[a]) {
                    return Err(Error::Contract(format!(
                        "monotonicity fails: {} <= {} but forces less",
                        q.label(a),
                        q.label(c)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A map from a finite poset into a finite Boolean algebra, read as landing
/// in the cone below `p0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NameProjection {
    pub source: FinitePoset,
    pub algebra: BooleanAlgebra,
    pub p0: u32,
    pub images: Vec<u32>,
}

impl NameProjection {
    pub fn check(&self) -> Result<AxiomVerdict> {
        let (cone, members) = self.algebra.cone(self.p0)?;
        let index: BTreeMap<u32, usize> = members.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        Ok(check_map_axioms(&self.source, &cone, |q| index.get(&self.images[q]).copied()))
    }

    pub fn to_finite(&self) -> Result<FiniteProjection> {
        let (cone, members) = self.algebra.cone(self.p0)?;
        let map = self
            .images
            .iter()
            .map(|img| {
                members.iter().position(|e| e == img).ok_or_else(|| {
                    Error::Input(format!("image {img:b} lies outside the cone"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        FiniteProjection::new(self.source.clone(), cone, map)
    }
}

/// Meet of the forced set, row by row. `p0` is the image of the top condition.
pub fn projection_from_name_table(
    q: &FinitePoset,
    b: &BooleanAlgebra,
    table: &GenericNameTable,
) -> Result<(u32, NameProjection)> {
    table.validate(q, b)?;
    let images: Vec<u32> = table
        .rows
        .iter()
        .map(|row| row.iter().fold(b.one(), |acc, &x| b.meet(acc, x)))
        .collect();
    let p0 = images[q.top_index()];
    Ok((
        p0,
        NameProjection {
            source: q.clone(),
            algebra: *b,
            p0,
            images,
        },
    ))
}

/// An order isomorphism from the cone below `p0` of one algebra onto another
/// algebra, given as a table on elements.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeIsomorphism {
    pub domain: BooleanAlgebra,
    pub p0: u32,
    pub codomain: BooleanAlgebra,
    pub table: BTreeMap<u32, u32>,
}

impl ConeIsomorphism {
    pub fn verify(&self) -> Result<()> {
        let cone: Vec<u32> = self.domain.elements().filter(|&e| self.domain.leq(e, self.p0)).collect();
        if cone.len() != self.codomain.size() {
            return Err(Error::Contract("cone and codomain differ in size".into()));
        }
        let mut seen = BTreeSet::new();
        for &e in &cone {
            let img = *self
                .table
                .get(&e)
                .ok_or_else(|| Error::Contract(format!("no image for {e:b}")))?;
            if img >= self.codomain.size() as u32 || !seen.insert(img) {
                return Err(Error::Contract("table is not a bijection".into()));
            }
        }
        for &a in &cone {
            for &c in &cone {
                if self.domain.leq(a, c) != self.codomain.leq(self.table[&a], self.table[&c]) {
                    return Err(Error::Contract(format!(
                        "order not preserved and reflected at {a:b}, {c:b}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `f ∘ pi'`: turns a projection into a cone into one onto the full codomain.
pub fn cone_compose(pi_prime: &NameProjection, f: &ConeIsomorphism) -> Result<FiniteProjection> {
    if f.domain != pi_prime.algebra || f.p0 != pi_prime.p0 {
        return Err(Error::Input("isomorphism does not start at the projection's cone".into()));
    }
    f.verify()?;
    let (target, members) = f.codomain.forcing_poset()?;
    let map = pi_prime
        .images
        .iter()
        .map(|img| {
            let out = f.table.get(img).copied().unwrap_or(0);
            members
                .iter()
                .position(|&e| e == out)
                .ok_or_else(|| Error::Input(format!("image {img:b} maps to zero")))
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteProjection::new(pi_prime.source.clone(), target, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_point() -> FinitePoset {
        // top, q1, q2 with q1, q2 incomparable
        FinitePoset::new(vec!["top".into(), "q1".into(), "q2".into()], |a, b| a == b || b == 0)
            .unwrap()
    }

    #[test]
    fn poset_axioms_are_enforced() {
        let bad = FinitePoset::new(vec!["a".into(), "b".into()], |_, _| true);
        assert!(matches!(bad, Err(Error::Contract(_))));
        let no_top = FinitePoset::new(vec!["a".into(), "b".into()], |a, b| a == b);
        assert!(matches!(no_top, Err(Error::Contract(_))));
    }

    #[test]
    fn identity_has_no_violations() {
        let v = check_projection_axioms(&FiniteProjection::identity(three_point()));
        assert!(v.passed());
    }

    #[test]
    fn constant_map_breaks_top() {
        let p = three_point();
        let pi = FiniteProjection::new(p.clone(), p, vec![1, 1, 1]).unwrap();
        let v = check_projection_axioms(&pi);
        assert!(v.has_top_violation());
    }

    #[test]
    fn boolean_algebra_sizes() {
        for n in 0..=4 {
            let b = BooleanAlgebra::new(n).unwrap();
            assert_eq!(b.elements().count(), 1 << n);
        }
        assert!(matches!(BooleanAlgebra::new(9), Err(Error::Capability(_))));
    }

    fn two_atom_table() -> (FinitePoset, BooleanAlgebra, GenericNameTable) {
        let q = three_point();
        let b = BooleanAlgebra::new(2).unwrap();
        let (a, na, one) = (0b01, 0b10, 0b11);
        let table = GenericNameTable {
            rows: vec![
                BTreeSet::from([one]),
                BTreeSet::from([one, a]),
                BTreeSet::from([one, na]),
            ],
        };
        (q, b, table)
    }

    #[test]
    fn name_table_two_atoms() {
        let (q, b, table) = two_atom_table();
        let (p0, pi) = projection_from_name_table(&q, &b, &table).unwrap();
        assert_eq!(p0, b.one());
        assert_eq!(pi.images, vec![0b11, 0b01, 0b10]);
        assert!(pi.check().unwrap().passed());
    }

    #[test]
    fn name_table_only_one_forced() {
        let q = three_point();
        let b = BooleanAlgebra::new(1).unwrap();
        let table = GenericNameTable {
            rows: vec![BTreeSet::from([1]); 3],
        };
        let (p0, pi) = projection_from_name_table(&q, &b, &table).unwrap();
        assert_eq!(p0, b.one());
        assert_eq!(pi.images[q.top_index()], b.one());
    }

    #[test]
    fn name_table_forcing_zero_is_vacuous() {
        let q = three_point();
        let b = BooleanAlgebra::new(1).unwrap();
        let table = GenericNameTable {
            rows: vec![
                BTreeSet::from([1]),
                BTreeSet::from([0, 1]),
                BTreeSet::from([1]),
            ],
        };
        let (_, pi) = projection_from_name_table(&q, &b, &table).unwrap();
        assert_eq!(pi.images[1], 0);
        let v = pi.check().unwrap();
        assert_eq!(v.vacuous, vec!["q1".to_string()]);
    }

    #[test]
    fn non_monotone_table_is_rejected() {
        let (q, b, mut table) = two_atom_table();
        table.rows[0].insert(0b01);
        let err = projection_from_name_table(&q, &b, &table).unwrap_err();
        match err {
            Error::Contract(msg) => assert!(msg.contains("monotonicity"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cone_compose_trivial_cone() {
        let (q, b, table) = two_atom_table();
        let (_, pi) = projection_from_name_table(&q, &b, &table).unwrap();
        let f = ConeIsomorphism {
            domain: b,
            p0: b.one(),
            codomain: b,
            table: b.elements().map(|e| (e, e)).collect(),
        };
        let composed = cone_compose(&pi, &f).unwrap();
        assert_eq!(composed, pi.to_finite().unwrap());
    }

    #[test]
    fn cone_compose_rejects_order_reversal() {
        let (q, b, table) = two_atom_table();
        let (_, pi) = projection_from_name_table(&q, &b, &table).unwrap();
        let f = ConeIsomorphism {
            domain: b,
            p0: b.one(),
            codomain: b,
            table: b.elements().map(|e| (e, b.complement(e))).collect(),
        };
        assert!(matches!(cone_compose(&pi, &f), Err(Error::Contract(_))));
    }

    #[test]
    fn induced_generic_through_identity() {
        let p = three_point();
        let pi = FiniteProjection::identity(p);
        let h = GeneratedFilter::new(vec![0, 1]);
        assert_eq!(induced_generic(&pi, &h).unwrap().chain, vec![0, 1]);
        let top_only = GeneratedFilter::new(vec![0]);
        assert_eq!(induced_generic(&pi, &top_only).unwrap().chain, vec![0]);
    }
}
