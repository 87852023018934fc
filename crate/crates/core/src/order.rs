//! Index sets, the poset contract, finite-support products and refiners.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coordinates are identified with positions `0..len` of a fixed enumeration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    labels: Vec<String>,
}

impl IndexSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        let distinct: BTreeSet<&String> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::Input("index labels must be distinct".into()));
        }
        Ok(IndexSet { labels })
    }

    /// `{0, 1, ..., n-1}` labelled by their decimal names.
    pub fn range(n: usize) -> Self {
        IndexSet {
            labels: (0..n).map(|i| i.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels.get(i).map(String::as_str)
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn all(&self) -> Coords {
        (0..self.len()).collect()
    }

    pub fn contains_all(&self, coords: &Coords) -> bool {
        coords.iter().all(|&c| c < self.len())
    }
}

/// A finite set of coordinates.
pub type Coords = BTreeSet<usize>;

pub fn coords<I: IntoIterator<Item = usize>>(it: I) -> Coords {
    it.into_iter().collect()
}

/// Decidable partial order with a largest element.
pub trait Poset {
    type Cond: Clone + Eq + fmt::Debug;

    fn top(&self) -> Self::Cond;

    /// `a` is at least as strong as `b`.
    fn leq(&self, a: &Self::Cond, b: &Self::Cond) -> bool;

    /// Existence of a common extension. Instances that cannot decide this
    /// return `None`.
    fn compatible(&self, _a: &Self::Cond, _b: &Self::Cond) -> Option<bool> {
        None
    }

    fn is_top(&self, a: &Self::Cond) -> bool {
        self.leq(&self.top(), a)
    }
}

/// A condition in a finite-support product. Coordinates outside `parts`
/// denote the factor's top element.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProductCondition<C> {
    pub width: usize,
    pub parts: BTreeMap<usize, C>,
}

impl<C: Clone> ProductCondition<C> {
    pub fn top(width: usize) -> Self {
        ProductCondition {
            width,
            parts: BTreeMap::new(),
        }
    }

    pub fn from_parts<I: IntoIterator<Item = (usize, C)>>(width: usize, parts: I) -> Self {
        ProductCondition {
            width,
            parts: parts.into_iter().collect(),
        }
    }

    pub fn support(&self) -> Coords {
        self.parts.keys().copied().collect()
    }

    pub fn get(&self, i: usize) -> Option<&C> {
        self.parts.get(&i)
    }

    /// Component at `i`, with `top` filled in outside the support.
    pub fn at(&self, i: usize, top: &C) -> C {
        self.parts.get(&i).cloned().unwrap_or_else(|| top.clone())
    }

    pub fn set(&mut self, i: usize, c: C) {
        self.parts.insert(i, c);
    }

    pub fn restrict(&self, j: &Coords) -> Self {
        ProductCondition {
            width: self.width,
            parts: self
                .parts
                .iter()
                .filter(|(i, _)| j.contains(i))
                .map(|(i, c)| (*i, c.clone()))
                .collect(),
        }
    }

    fn check_width(&self, other: &Self) -> Result<()> {
        if self.width != other.width {
            return Err(Error::Input(format!(
                "index set mismatch: width {} vs {}",
                self.width, other.width
            )));
        }
        Ok(())
    }
}

/// The finite-support product of copies of one factor poset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductPoset<P> {
    pub width: usize,
    pub factor: P,
}

impl<P: Poset> ProductPoset<P> {
    pub fn new(width: usize, factor: P) -> Self {
        ProductPoset { width, factor }
    }

    fn coordinate_leq(
        &self,
        a: &ProductCondition<P::Cond>,
        b: &ProductCondition<P::Cond>,
        i: usize,
    ) -> bool {
        let top = self.factor.top();
        let x = a.get(i).unwrap_or(&top);
        let y = b.get(i).unwrap_or(&top);
        self.factor.leq(x, y)
    }

    fn coordinate_eq(
        &self,
        a: &ProductCondition<P::Cond>,
        b: &ProductCondition<P::Cond>,
        i: usize,
    ) -> bool {
        self.coordinate_leq(a, b, i) && self.coordinate_leq(b, a, i)
    }

    fn touched(&self, a: &ProductCondition<P::Cond>, b: &ProductCondition<P::Cond>) -> Coords {
        a.parts.keys().chain(b.parts.keys()).copied().collect()
    }

    /// `p` is a J-extension of `q`: stronger, and unchanged outside `j`.
    pub fn leq_j(
        &self,
        p: &ProductCondition<P::Cond>,
        q: &ProductCondition<P::Cond>,
        j: &Coords,
    ) -> Result<bool> {
        p.check_width(q)?;
        if p.width != self.width {
            return Err(Error::Input("condition width differs from product".into()));
        }
        Ok(self.leq(p, q)
            && self
                .touched(p, q)
                .into_iter()
                .filter(|i| !j.contains(i))
                .all(|i| self.coordinate_eq(p, q, i)))
    }

    /// Agrees with `a` on `j` and with `b` elsewhere.
    pub fn splice(
        &self,
        a: &ProductCondition<P::Cond>,
        b: &ProductCondition<P::Cond>,
        j: &Coords,
    ) -> Result<ProductCondition<P::Cond>> {
        a.check_width(b)?;
        let mut parts = BTreeMap::new();
        for (i, c) in &a.parts {
            if j.contains(i) {
                parts.insert(*i, c.clone());
            }
        }
        for (i, c) in &b.parts {
            if !j.contains(i) {
                parts.insert(*i, c.clone());
            }
        }
        Ok(ProductCondition {
            width: a.width,
            parts,
        })
    }
}

impl<P: Poset> Poset for ProductPoset<P> {
    type Cond = ProductCondition<P::Cond>;

    fn top(&self) -> Self::Cond {
        ProductCondition::top(self.width)
    }

    fn leq(&self, a: &Self::Cond, b: &Self::Cond) -> bool {
        a.width == b.width
            && self
                .touched(a, b)
                .into_iter()
                .all(|i| self.coordinate_leq(a, b, i))
    }

    fn compatible(&self, a: &Self::Cond, b: &Self::Cond) -> Option<bool> {
        let top = self.factor.top();
        let mut all = true;
        for i in self.touched(a, b) {
            let x = a.get(i).unwrap_or(&top);
            let y = b.get(i).unwrap_or(&top);
            all &= self.factor.compatible(x, y)?;
        }
        Some(all)
    }
}

/// Finite stand-in for a dense open set: the only capability ever used is
/// "find an extension inside D below a given condition".
#[derive(Clone)]
pub struct DenseRefiner<C> {
    pub description: String,
    refine: Arc<dyn Fn(&C) -> C + Send + Sync>,
}

impl<C> DenseRefiner<C> {
    pub fn new<F>(description: impl Into<String>, f: F) -> Self
    where
        F: Fn(&C) -> C + Send + Sync + 'static,
    {
        DenseRefiner {
            description: description.into(),
            refine: Arc::new(f),
        }
    }

    pub fn identity() -> Self
    where
        C: Clone,
    {
        DenseRefiner::new("identity", |c: &C| c.clone())
    }

    pub fn refine(&self, c: &C) -> C {
        (self.refine)(c)
    }

    /// Refines and checks the result is below the argument.
    pub fn refine_checked<P: Poset<Cond = C>>(&self, poset: &P, c: &C) -> Result<C> {
        let r = self.refine(c);
        if !poset.leq(&r, c) {
            return Err(Error::Contract(format!(
                "refiner `{}` returned a condition not below its argument",
                self.description
            )));
        }
        Ok(r)
    }
}

impl<C> fmt::Debug for DenseRefiner<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseRefiner")
            .field("description", &self.description)
            .finish()
    }
}

/// A descending chain plus the record of where each refiner was scheduled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedFilter<C> {
    pub chain: Vec<C>,
    pub scheduled: BTreeMap<String, usize>,
}

impl<C: Clone> GeneratedFilter<C> {
    pub fn new(chain: Vec<C>) -> Self {
        GeneratedFilter {
            chain,
            scheduled: BTreeMap::new(),
        }
    }

    pub fn schedule(&mut self, description: impl Into<String>, position: usize) {
        self.scheduled.insert(description.into(), position);
    }

    pub fn is_descending<P: Poset<Cond = C>>(&self, poset: &P) -> bool {
        self.chain.windows(2).all(|w| poset.leq(&w[1], &w[0]))
    }

    /// Whether the chain reaches below `refine(c')` for the element `c'` at which
    /// the refiner was scheduled.
    pub fn meets<P: Poset<Cond = C>>(&self, poset: &P, refiner: &DenseRefiner<C>) -> Result<bool> {
        if self.chain.is_empty() {
            return Ok(false);
        }
        let at = *self.scheduled.get(&refiner.description).ok_or_else(|| {
            Error::Query(format!("refiner `{}` never scheduled", refiner.description))
        })?;
        let anchor = self
            .chain
            .get(at)
            .ok_or_else(|| Error::Query(format!("scheduled position {at} beyond chain")))?;
        let target = refiner.refine(anchor);
        Ok(self.chain[at..].iter().any(|c| poset.leq(c, &target)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohen::{Cohen, CohenPoset};

    fn cp(width: usize, parts: &[(usize, &str)]) -> ProductCondition<Cohen> {
        ProductCondition::from_parts(width, parts.iter().map(|(i, s)| (*i, Cohen::parse(s).unwrap())))
    }

    #[test]
    fn leq_j_examples() {
        let prod = ProductPoset::new(2, CohenPoset);
        let q = cp(2, &[(0, "1"), (1, "0")]);
        assert!(prod.leq_j(&q, &q, &Coords::new()).unwrap());
        let p0 = cp(2, &[(0, "10"), (1, "0")]);
        assert!(prod.leq_j(&p0, &q, &coords([0])).unwrap());
        let p1 = cp(2, &[(0, "1"), (1, "01")]);
        assert!(!prod.leq_j(&p1, &q, &coords([0])).unwrap());
        let other = cp(3, &[]);
        assert!(matches!(prod.leq_j(&other, &q, &Coords::new()), Err(Error::Input(_))));
    }

    #[test]
    fn leq_j_treats_missing_and_empty_alike() {
        let prod = ProductPoset::new(2, CohenPoset);
        let a = cp(2, &[(0, "1"), (1, "")]);
        let b = cp(2, &[(0, "")]);
        assert!(prod.leq_j(&a, &b, &coords([0])).unwrap());
    }

    #[test]
    fn splice_examples() {
        let prod = ProductPoset::new(2, CohenPoset);
        let a = cp(2, &[(0, "01")]);
        let b = cp(2, &[(0, "1"), (1, "0")]);
        assert_eq!(prod.splice(&a, &a, &coords([1])).unwrap(), a);
        assert_eq!(prod.splice(&a, &b, &Coords::new()).unwrap(), b);
        assert_eq!(
            prod.splice(&a, &b, &coords([0])).unwrap(),
            cp(2, &[(0, "01"), (1, "0")])
        );
    }

    #[test]
    fn meets_examples() {
        let empty: GeneratedFilter<Cohen> = GeneratedFilter::new(vec![]);
        assert!(!empty.meets(&CohenPoset, &DenseRefiner::identity()).unwrap());

        let mut top = GeneratedFilter::new(vec![Cohen::top()]);
        top.schedule("identity", 0);
        assert!(top.meets(&CohenPoset, &DenseRefiner::identity()).unwrap());

        let append = DenseRefiner::new("append-11", |c: &Cohen| c.extended(&[true, true]));
        assert!(matches!(top.meets(&CohenPoset, &append), Err(Error::Query(_))));

        let chain = vec![
            Cohen::top(),
            Cohen::parse("0").unwrap(),
            Cohen::parse("01").unwrap(),
            Cohen::parse("0111").unwrap(),
        ];
        let mut f = GeneratedFilter::new(chain);
        f.schedule("append-11", 2);
        assert!(f.meets(&CohenPoset, &append).unwrap());
        f.schedule("append-11", 3);
        assert!(!f.meets(&CohenPoset, &append).unwrap());
    }
}
