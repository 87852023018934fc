//! Tagged conditions and the three strengthening orders.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cohen::{CohenProduct, ProductProjection};
use crate::error::{Error, Result};
use crate::order::{Coords, Poset};
use crate::projection::Projection;

type WorkOf<Pr> = <<Pr as Projection>::Source as Poset>::Cond;
type TagOf<Pr> = <<Pr as Projection>::Target as Poset>::Cond;

/// A working part together with a tag below its image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tagged<W, T> {
    pub working: W,
    pub tag: T,
}

impl<W, T> Tagged<W, T> {
    /// Checked constructor: the tag must lie below the image of the working part.
    pub fn new<Pr>(pi: &Pr, working: W, tag: T) -> Result<Self>
    where
        Pr: Projection,
        Pr::Source: Poset<Cond = W>,
        Pr::Target: Poset<Cond = T>,
    {
        let t = Tagged { working, tag };
        validate(pi, &t)?;
        Ok(t)
    }
}

/// The tag paired with the full image of the working part.
pub fn exact<Pr: Projection>(pi: &Pr, working: WorkOf<Pr>) -> Tagged<WorkOf<Pr>, TagOf<Pr>> {
    let tag = pi.map(&working);
    Tagged { working, tag }
}

pub fn is_valid<Pr: Projection>(pi: &Pr, t: &Tagged<WorkOf<Pr>, TagOf<Pr>>) -> bool {
    pi.target().leq(&t.tag, &pi.map(&t.working))
}

fn validate<Pr: Projection>(pi: &Pr, t: &Tagged<WorkOf<Pr>, TagOf<Pr>>) -> Result<()> {
    if is_valid(pi, t) {
        Ok(())
    } else {
        Err(Error::Input(format!(
            "invalid tagged pair: tag {:?} is not below the image of {:?}",
            t.tag, t.working
        )))
    }
}

/// `t2 ◁ t1`.
pub fn weak_below<Pr: Projection>(
    pi: &Pr,
    t2: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
    t1: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
) -> Result<bool> {
    validate(pi, t2)?;
    validate(pi, t1)?;
    Ok(pi.tagged_weak_below(&t2.working, &t2.tag, &t1.working, &t1.tag))
}

/// `t2 ◁* t1`.
pub fn strong_below<Pr: Projection>(
    pi: &Pr,
    t2: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
    t1: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
) -> Result<bool> {
    validate(pi, t2)?;
    validate(pi, t1)?;
    Ok(pi.tagged_strong_below(&t2.working, &t1.working, &t1.tag))
}

pub type ProductTagged = Tagged<CohenProduct, CohenProduct>;

/// `t2 ◁ t1` and the strong relation holds on the restrictions to `j`.
pub fn strong_below_on(
    pi: &ProductProjection,
    t2: &ProductTagged,
    t1: &ProductTagged,
    j: &Coords,
) -> Result<bool> {
    if j.iter().any(|&i| i >= pi.width()) {
        return Err(Error::Input(format!("{j:?} is not a subset of the index set")));
    }
    if t2.working.width != pi.width() || t1.working.width != pi.width() {
        return Err(Error::Input("tagged conditions over a different index set".into()));
    }
    Ok(weak_below(pi, t2, t1)? && pi.strong_below_on(&t2.working, &t1.working, &t1.tag, j))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbsorptionVerdict {
    /// `t3 ◁ t2` and `t2 ◁* t1`.
    pub weak_then_strong: bool,
    /// `t3 ◁* t2` and `t2 ◁ t1`.
    pub strong_then_weak: bool,
    pub conclusion: bool,
}

impl AbsorptionVerdict {
    pub fn counterexample(&self) -> bool {
        (self.weak_then_strong || self.strong_then_weak) && !self.conclusion
    }
}

/// A weak step on either side of a strong step still yields a strong step
/// from `t3` to `t1`.
pub fn check_star_absorption<Pr: Projection>(
    pi: &Pr,
    t3: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
    t2: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
    t1: &Tagged<WorkOf<Pr>, TagOf<Pr>>,
) -> Result<AbsorptionVerdict> {
    let w32 = weak_below(pi, t3, t2)?;
    let s32 = strong_below(pi, t3, t2)?;
    let w21 = weak_below(pi, t2, t1)?;
    let s21 = strong_below(pi, t2, t1)?;
    Ok(AbsorptionVerdict {
        weak_then_strong: w32 && s21,
        strong_then_weak: s32 && w21,
        conclusion: strong_below(pi, t3, t1)?,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterVerdict {
    /// Indices `n` with no later `m` whose working image lies below tag `n`.
    pub violations: Vec<usize>,
    /// For each checked `n`, the least witness `m`.
    pub witnesses: Vec<(usize, usize)>,
}

impl FilterVerdict {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Along a descending sequence with strong steps at `stars`, every tag is
/// eventually dominated by the image of a working part. Indices within `gap`
/// of the end are left unchecked.
pub fn check_projected_filter<Pr: Projection>(
    pi: &Pr,
    seq: &[Tagged<WorkOf<Pr>, TagOf<Pr>>],
    stars: &BTreeSet<usize>,
    gap: usize,
) -> Result<FilterVerdict> {
    for t in seq {
        validate(pi, t)?;
    }
    for k in 0..seq.len().saturating_sub(1) {
        if !weak_below(pi, &seq[k + 1], &seq[k])? {
            return Err(Error::Input(format!("sequence not descending at {k}")));
        }
        if stars.contains(&k) && !strong_below(pi, &seq[k + 1], &seq[k])? {
            return Err(Error::Input(format!("claimed strong step at {k} does not hold")));
        }
    }
    let images: Vec<_> = seq.iter().map(|t| pi.map(&t.working)).collect();
    let mut verdict = FilterVerdict::default();
    for n in 0..seq.len().saturating_sub(gap) {
        match (n..seq.len()).find(|&m| pi.target().leq(&images[m], &seq[n].tag)) {
            Some(m) => verdict.witnesses.push((n, m)),
            None => verdict.violations.push(n),
        }
    }
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohen::{Cohen, CohenProjection};
    use crate::order::coords;

    fn c(s: &str) -> Cohen {
        Cohen::parse(s).unwrap()
    }

    fn t(w: &str, p: &str) -> Tagged<Cohen, Cohen> {
        Tagged::new(&CohenProjection::Identity, c(w), c(p)).unwrap()
    }

    const ID: CohenProjection = CohenProjection::Identity;

    #[test]
    fn weak_order_examples() {
        let a = t("1", "10");
        assert!(weak_below(&ID, &a, &a).unwrap());
        assert!(weak_below(&ID, &t("10", "10"), &t("1", "1")).unwrap());
        assert!(!weak_below(&ID, &t("11", "11"), &t("1", "10")).unwrap());
    }

    #[test]
    fn strong_order_examples() {
        let top = t("", "");
        assert!(strong_below(&ID, &t("01", "011"), &top).unwrap());
        let exact_tag = t("1", "1");
        assert!(strong_below(&ID, &exact_tag, &exact_tag).unwrap());
        let strict = t("1", "10");
        assert!(!strong_below(&ID, &strict, &strict).unwrap());
    }

    #[test]
    fn invalid_pair_is_an_input_error() {
        assert!(matches!(
            Tagged::new(&ID, c("10"), c("11")),
            Err(Error::Input(_))
        ));
        let bad = Tagged { working: c("10"), tag: c("11") };
        let ok = t("", "");
        assert!(matches!(check_star_absorption(&ID, &bad, &ok, &ok), Err(Error::Input(_))));
    }

    fn pt(w: &[(usize, &str)], p: &[(usize, &str)]) -> ProductTagged {
        ProductTagged {
            working: CohenProduct::from_parts(2, w.iter().map(|(i, s)| (*i, c(s)))),
            tag: CohenProduct::from_parts(2, p.iter().map(|(i, s)| (*i, c(s)))),
        }
    }

    #[test]
    fn strong_on_examples() {
        let pi = ProductProjection::uniform(2, ID);
        let t1 = pt(&[(0, "1"), (1, "0")], &[(0, "1"), (1, "01")]);
        let t2 = pt(&[(0, "10"), (1, "0")], &[(0, "10"), (1, "01")]);
        assert_eq!(
            strong_below_on(&pi, &t2, &t1, &Coords::new()).unwrap(),
            weak_below(&pi, &t2, &t1).unwrap()
        );
        assert!(strong_below_on(&pi, &t2, &t1, &coords([0])).unwrap());
        // column 1 keeps its strictly stronger tag, so the strong relation fails there
        assert!(!strong_below_on(&pi, &t2, &t1, &coords([0, 1])).unwrap());
        assert!(strong_below_on(&pi, &t2, &t1, &coords([5])).is_err());
    }

    #[test]
    fn absorption_on_equal_exact_triple() {
        let a = t("01", "01");
        let v = check_star_absorption(&ID, &a, &a, &a).unwrap();
        assert!(v.conclusion && !v.counterexample());
    }

    #[test]
    fn projected_filter_examples() {
        let a = t("01", "01");
        let seq = vec![a.clone(), a.clone(), a];
        let v = check_projected_filter(&ID, &seq, &coords([0, 1]), 0).unwrap();
        assert!(v.passed());
        assert_eq!(v.witnesses[0], (0, 0));

        // strong steps up to index 2, then the tag alone keeps growing
        let seq = vec![
            t("", ""),
            t("1", "1"),
            t("10", "10"),
            t("101", "101"),
            t("101", "1011"),
            t("101", "10110"),
            t("101", "101101"),
        ];
        let v = check_projected_filter(&ID, &seq, &coords([0, 1, 2]), 2).unwrap();
        assert_eq!(v.violations, vec![4]);

        let unordered = vec![t("1", "1"), t("0", "0")];
        assert!(check_projected_filter(&ID, &unordered, &BTreeSet::new(), 0).is_err());
    }
}
