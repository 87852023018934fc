//! Cohen conditions, column tags, obstacle families and the secret stream.

pub mod obstacle;
pub mod pair;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::order::{Coords, DenseRefiner, Poset, ProductCondition, ProductPoset};
use crate::projection::Projection;
use crate::requirements::Probe;

/// A finite binary string, ordered by end-extension. Longer is stronger.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cohen(Vec<bool>);

impl Cohen {
    pub fn top() -> Self {
        Cohen(Vec::new())
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Cohen(bits)
    }

    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Input(format!("not a bit: {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Cohen)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn bit(&self, k: usize) -> Option<bool> {
        self.0.get(k).copied()
    }

    pub fn extended(&self, more: &[bool]) -> Self {
        let mut v = self.0.clone();
        v.extend_from_slice(more);
        Cohen(v)
    }

    pub fn push(&mut self, b: bool) {
        self.0.push(b);
    }

    /// Pads with 0s up to `len`; never shortens.
    pub fn padded(&self, len: usize) -> Self {
        let mut v = self.0.clone();
        if v.len() < len {
            v.resize(len, false);
        }
        Cohen(v)
    }

    pub fn prefix(&self, len: usize) -> Self {
        Cohen(self.0[..len.min(self.0.len())].to_vec())
    }

    /// `self` end-extends `other`.
    pub fn extends(&self, other: &Cohen) -> bool {
        self.0.starts_with(&other.0)
    }
}

impl fmt::Display for Cohen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for Cohen {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{self}\"")
    }
}

impl FromStr for Cohen {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Cohen::parse(s)
    }
}

impl Serialize for Cohen {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Cohen {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Cohen::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CohenPoset;

impl Poset for CohenPoset {
    type Cond = Cohen;

    fn top(&self) -> Cohen {
        Cohen::top()
    }

    fn leq(&self, a: &Cohen, b: &Cohen) -> bool {
        a.extends(b)
    }

    fn compatible(&self, a: &Cohen, b: &Cohen) -> Option<bool> {
        Some(a.extends(b) || b.extends(a))
    }
}

/// Every condition of length at most `depth`, shortest first.
pub fn cohen_up_to(depth: usize) -> Vec<Cohen> {
    let mut out = vec![Cohen::top()];
    let mut layer = vec![Cohen::top()];
    for _ in 0..depth {
        let next: Vec<Cohen> = layer
            .iter()
            .flat_map(|c| [c.extended(&[false]), c.extended(&[true])])
            .collect();
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Projections from Cohen forcing to Cohen forcing shipped with the engines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CohenProjection {
    #[default]
    Identity,
    /// Reads off the bits at even positions.
    EvenBits,
}

impl Projection for CohenProjection {
    type Source = CohenPoset;
    type Target = CohenPoset;

    fn source(&self) -> &CohenPoset {
        &CohenPoset
    }

    fn target(&self) -> &CohenPoset {
        &CohenPoset
    }

    fn map(&self, q: &Cohen) -> Cohen {
        match self {
            CohenProjection::Identity => q.clone(),
            CohenProjection::EvenBits => {
                Cohen(q.0.iter().step_by(2).copied().collect())
            }
        }
    }

    fn refine_below(&self, q: &Cohen, p: &Cohen) -> Cohen {
        match self {
            CohenProjection::Identity => {
                if p.extends(q) {
                    p.clone()
                } else {
                    q.clone()
                }
            }
            CohenProjection::EvenBits => {
                let target = q.len().max((2 * p.len()).saturating_sub(1));
                let mut bits = q.0.clone();
                while bits.len() < target {
                    let k = bits.len();
                    bits.push(k % 2 == 0 && p.0[k / 2]);
                }
                Cohen(bits)
            }
        }
    }
}

impl CohenProjection {
    /// Extends `q` so that its image has bit `bit` at position `pos`,
    /// padding the image with 0s before it. `None` if the image is already
    /// that long.
    pub fn force_bit(&self, q: &Cohen, pos: usize, bit: bool) -> Option<Cohen> {
        let img = self.map(q);
        if img.len() > pos {
            return None;
        }
        let mut target = img.padded(pos);
        target.push(bit);
        Some(self.refine_below(q, &target))
    }

    /// Extends `q` until its image reaches length `len`, padding with 0s.
    pub fn reach(&self, q: &Cohen, len: usize) -> Cohen {
        let img = self.map(q);
        if img.len() >= len {
            return q.clone();
        }
        self.refine_below(q, &img.padded(len))
    }
}

/// Serializable recipe for a schedule of Cohen refiners, one per round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CohenRefiner {
    /// Appends the same bits every round.
    Append { bits: Cohen },
    /// Appends between 1 and `max_len` pseudo-random bits, fixed per round.
    Seeded { seed: u64, max_len: usize },
}

impl CohenRefiner {
    pub fn append(bits: &str) -> Result<Self> {
        Ok(CohenRefiner::Append {
            bits: Cohen::parse(bits)?,
        })
    }

    /// The bits appended in round `n` on coordinate `coord`.
    pub fn suffix(&self, n: usize, coord: usize) -> Cohen {
        match self {
            CohenRefiner::Append { bits } => bits.clone(),
            CohenRefiner::Seeded { seed, max_len } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(((n as u64) << 16) | coord as u64);
                let len = 1 + (rng.next_u32() as usize) % (*max_len).max(1);
                Cohen((0..len).map(|_| rng.next_u32() & 1 == 1).collect())
            }
        }
    }

    pub fn label(&self, n: usize) -> String {
        match self {
            CohenRefiner::Append { bits } => format!("append:{bits}@{n}"),
            CohenRefiner::Seeded { seed, max_len } => format!("seeded:{seed}:{max_len}@{n}"),
        }
    }

    pub fn at(&self, n: usize) -> DenseRefiner<Cohen> {
        let suffix = self.suffix(n, 0);
        DenseRefiner::new(self.label(n), move |c: &Cohen| c.extended(suffix.bits()))
    }

    /// The refiner acting on every coordinate of `a` in a product.
    pub fn on_product(&self, n: usize, a: &Coords) -> DenseRefiner<CohenProduct> {
        let me = self.clone();
        let a = a.clone();
        let label = format!("{}{a:?}", self.label(n));
        DenseRefiner::new(label, move |q: &CohenProduct| {
            let mut out = q.clone();
            for &i in &a {
                out.set(i, q.at(i, &Cohen::top()).extended(me.suffix(n, i).bits()));
            }
            out
        })
    }
}

pub type CohenProduct = ProductCondition<Cohen>;

/// The coordinatewise projection on a finite-support product of Cohen
/// posets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProductProjection {
    pub factors: Vec<CohenProjection>,
    poset: ProductPoset<CohenPoset>,
}

impl ProductProjection {
    pub fn new(factors: Vec<CohenProjection>) -> Self {
        let poset = ProductPoset::new(factors.len(), CohenPoset);
        ProductProjection { factors, poset }
    }

    pub fn uniform(width: usize, pi: CohenProjection) -> Self {
        ProductProjection::new(vec![pi; width])
    }

    pub fn width(&self) -> usize {
        self.factors.len()
    }

    pub fn poset(&self) -> &ProductPoset<CohenPoset> {
        &self.poset
    }

    pub fn factor(&self, i: usize) -> CohenProjection {
        self.factors[i]
    }

    /// Image of a single column.
    pub fn column(&self, q: &CohenProduct, i: usize) -> Cohen {
        self.factors[i].map(&q.at(i, &Cohen::top()))
    }

    /// `refine_below` acting only on the coordinates in `j`.
    pub fn refine_below_on(&self, q: &CohenProduct, p: &CohenProduct, j: &Coords) -> CohenProduct {
        let mut out = q.clone();
        for &i in j {
            let qi = q.at(i, &Cohen::top());
            let pi = p.at(i, &Cohen::top());
            let r = self.factors[i].refine_below(&qi, &pi);
            if !r.is_empty() {
                out.set(i, r);
            }
        }
        out
    }

    /// Image restricted to `j`.
    pub fn map_on(&self, q: &CohenProduct, j: &Coords) -> CohenProduct {
        let mut out = CohenProduct::top(q.width);
        for &i in j {
            let c = self.column(q, i);
            if !c.is_empty() {
                out.set(i, c);
            }
        }
        out
    }

    fn column_weak_below(&self, i: usize, q2: &CohenProduct, p2: &CohenProduct, q1: &CohenProduct, p1: &CohenProduct) -> bool {
        let t = Cohen::top();
        let (a2, b2, a1, b1) = (q2.at(i, &t), p2.at(i, &t), q1.at(i, &t), p1.at(i, &t));
        (a2 == a1 && b2.extends(&b1)) || self.column_strong_below(i, q2, q1, p1)
    }

    fn column_strong_below(&self, i: usize, q2: &CohenProduct, q1: &CohenProduct, p1: &CohenProduct) -> bool {
        let t = Cohen::top();
        let a2 = q2.at(i, &t);
        a2.extends(&q1.at(i, &t)) && self.factors[i].map(&a2).extends(&p1.at(i, &t))
    }

    /// The strong relation on the coordinates of `j` alone.
    pub fn strong_below_on(&self, q2: &CohenProduct, q1: &CohenProduct, p1: &CohenProduct, j: &Coords) -> bool {
        j.iter().all(|&i| self.column_strong_below(i, q2, q1, p1))
    }

    fn touched(&self, conds: &[&CohenProduct]) -> Coords {
        conds.iter().flat_map(|c| c.parts.keys().copied()).collect()
    }
}

impl Projection for ProductProjection {
    type Source = ProductPoset<CohenPoset>;
    type Target = ProductPoset<CohenPoset>;

    fn source(&self) -> &Self::Source {
        &self.poset
    }

    fn target(&self) -> &Self::Target {
        &self.poset
    }

    fn map(&self, q: &CohenProduct) -> CohenProduct {
        let all: Coords = q.parts.keys().copied().collect();
        self.map_on(q, &all)
    }

    fn refine_below(&self, q: &CohenProduct, p: &CohenProduct) -> CohenProduct {
        let all = self.touched(&[q, p]);
        self.refine_below_on(q, p, &all)
    }

    fn tagged_weak_below(&self, q2: &CohenProduct, p2: &CohenProduct, q1: &CohenProduct, p1: &CohenProduct) -> bool {
        q2.width == q1.width
            && self
                .touched(&[q2, p2, q1, p1])
                .into_iter()
                .all(|i| self.column_weak_below(i, q2, p2, q1, p1))
    }

    fn tagged_strong_below(&self, q2: &CohenProduct, q1: &CohenProduct, p1: &CohenProduct) -> bool {
        q2.width == q1.width && self.strong_below_on(q2, q1, p1, &self.touched(&[q2, q1, p1]))
    }
}

/// What a working part decides about the projected generic columns.
pub struct CohenView<'a> {
    pub pi: &'a ProductProjection,
    pub working: &'a CohenProduct,
}

impl Probe for CohenView<'_> {
    fn read(&self, coord: usize, pos: usize) -> Option<bool> {
        if coord >= self.pi.width() {
            return None;
        }
        self.pi.column(self.working, coord).bit(pos)
    }
}

/// Extensions of `q` touching only `shared`, each fixing the image of one
/// shared column past `depth` with a constant bit.
pub fn shared_extensions(pi: &ProductProjection, q: &CohenProduct, shared: &Coords, depth: usize) -> Vec<CohenProduct> {
    let mut out = Vec::new();
    for &c in shared {
        for b in [false, true] {
            let img = pi.column(q, c);
            let mut target = img.clone();
            while target.len() < depth.max(img.len()) + 2 {
                target.push(b);
            }
            let mut ext = q.clone();
            ext.set(c, pi.factor(c).refine_below(&q.at(c, &Cohen::top()), &target));
            out.push(ext);
        }
    }
    out
}

pub fn max_len(tag: &CohenProduct, cols: &Coords) -> usize {
    cols.iter()
        .filter_map(|i| tag.get(*i))
        .map(Cohen::len)
        .max()
        .unwrap_or(0)
}

/// All support columns have equal length.
pub fn is_uniform(tag: &CohenProduct) -> bool {
    let mut lens = tag.parts.values().map(Cohen::len);
    match lens.next() {
        None => true,
        Some(first) => lens.all(|l| l == first),
    }
}

/// Pads every support column with 0s to the longest support column.
pub fn pad_uniform(tag: &CohenProduct) -> CohenProduct {
    let len = max_len(tag, &tag.support());
    let mut out = tag.clone();
    for c in out.parts.values_mut() {
        *c = c.padded(len);
    }
    out
}

/// Pads the columns in `cols` (support or not) to `len`.
pub fn pad_columns(tag: &CohenProduct, cols: &Coords, len: usize) -> CohenProduct {
    let mut out = tag.clone();
    for &i in cols {
        let c = tag.at(i, &Cohen::top()).padded(len);
        if !c.is_empty() {
            out.set(i, c);
        }
    }
    out
}

/// Pads every column of the index set to the longest column.
pub fn pad_full(tag: &CohenProduct) -> CohenProduct {
    let all: Coords = (0..tag.width).collect();
    let len = max_len(tag, &all);
    pad_columns(tag, &all, len)
}

/// Rows where every column of `b` has a 1.
pub fn all_one_rows(tag: &CohenProduct, b: &Coords) -> Vec<usize> {
    let len = b
        .iter()
        .map(|i| tag.get(*i).map_or(0, Cohen::len))
        .min()
        .unwrap_or(0);
    (0..len)
        .filter(|&k| b.iter().all(|i| tag.get(*i).and_then(|c| c.bit(k)) == Some(true)))
        .collect()
}

/// Finite minimal obstacles on `0..width`. A set belongs to the family they
/// define iff it contains none of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleFamily {
    pub width: usize,
    pub obstacles: Vec<Coords>,
}

impl ObstacleFamily {
    pub fn new(width: usize, obstacles: Vec<Coords>) -> Result<Self> {
        for (k, b) in obstacles.iter().enumerate() {
            if b.is_empty() {
                return Err(Error::Input("obstacles must be nonempty".into()));
            }
            if b.iter().any(|&i| i >= width) {
                return Err(Error::Input(format!("obstacle {b:?} outside the index set")));
            }
            for c in &obstacles[k + 1..] {
                if b.is_subset(c) || c.is_subset(b) {
                    return Err(Error::Input(format!(
                        "obstacles {b:?} and {c:?} are comparable"
                    )));
                }
            }
        }
        Ok(ObstacleFamily { width, obstacles })
    }

    pub fn admits(&self, s: &Coords) -> bool {
        !self.obstacles.iter().any(|b| b.is_subset(s))
    }

    pub fn contains_obstacle(&self, b: &Coords) -> bool {
        self.obstacles.contains(b)
    }
}

/// `r` adds no all-1 row across any obstacle's columns.
pub fn noncoding_extends(r: &CohenProduct, p: &CohenProduct, family: &ObstacleFamily) -> Result<bool> {
    if !ProductPoset::new(r.width, CohenPoset).leq(r, p) {
        return Err(Error::Input("r does not extend p".into()));
    }
    for b in &family.obstacles {
        let old: BTreeSet<usize> = all_one_rows(p, b).into_iter().collect();
        if all_one_rows(r, b).iter().any(|k| !old.contains(k)) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Where the secret bits come from. Only the source is ever stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZSource {
    /// Explicit bits, most significant first.
    Bits(String),
    /// Hex digits, each expanded to four bits.
    Hex(String),
    Seed(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretStream {
    pub source: ZSource,
    #[serde(skip)]
    prefix: Option<Vec<bool>>,
}

impl SecretStream {
    pub fn new(source: ZSource) -> Result<Self> {
        let prefix = match &source {
            ZSource::Bits(s) => Some(Cohen::parse(s)?.0),
            ZSource::Hex(h) => {
                let mut bits = Vec::with_capacity(4 * h.len());
                for ch in h.chars() {
                    let d = ch
                        .to_digit(16)
                        .ok_or_else(|| Error::Input(format!("not a hex digit: {ch:?}")))?;
                    bits.extend((0..4).rev().map(|s| (d >> s) & 1 == 1));
                }
                Some(bits)
            }
            ZSource::Seed(_) => None,
        };
        Ok(SecretStream { source, prefix })
    }

    pub fn bits(s: &str) -> Result<Self> {
        SecretStream::new(ZSource::Bits(s.into()))
    }

    pub fn seeded(seed: u64) -> Self {
        SecretStream {
            source: ZSource::Seed(seed),
            prefix: None,
        }
    }

    /// Parses `seed:<n>`, `bits:<01...>` or a bare hex prefix.
    pub fn parse(text: &str) -> Result<Self> {
        if let Some(n) = text.strip_prefix("seed:") {
            let seed = n
                .parse()
                .map_err(|_| Error::Input(format!("bad seed {n:?}")))?;
            return Ok(SecretStream::seeded(seed));
        }
        if let Some(b) = text.strip_prefix("bits:") {
            return SecretStream::bits(b);
        }
        SecretStream::new(ZSource::Hex(text.trim_start_matches("0x").into()))
    }

    /// Reattaches the expanded prefix after deserialization.
    pub fn rehydrate(&mut self) -> Result<()> {
        *self = SecretStream::new(self.source.clone())?;
        Ok(())
    }

    /// Number of available bits; `None` for unbounded streams.
    pub fn available(&self) -> Option<usize> {
        self.prefix.as_ref().map(Vec::len)
    }

    pub fn require(&self, n: usize) -> Result<()> {
        match self.available() {
            Some(m) if m < n => Err(Error::Input(format!(
                "secret stream has {m} bits but {n} are needed"
            ))),
            _ => Ok(()),
        }
    }

    pub fn bit(&self, n: usize) -> bool {
        match (&self.source, &self.prefix) {
            (ZSource::Seed(seed), _) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_word_pos((n / 32) as u128);
                (rng.next_u32() >> (n % 32)) & 1 == 1
            }
            (_, Some(p)) => p.get(n).copied().unwrap_or(false),
            (_, None) => SecretStream::new(self.source.clone())
                .map(|s| s.bit(n))
                .unwrap_or(false),
        }
    }

    pub fn take(&self, n: usize) -> Vec<bool> {
        (0..n).map(|k| self.bit(k)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::coords;

    pub(crate) fn c(s: &str) -> Cohen {
        Cohen::parse(s).unwrap()
    }

    fn tag(cols: &[(usize, &str)], width: usize) -> CohenProduct {
        CohenProduct::from_parts(width, cols.iter().map(|(i, s)| (*i, c(s))))
    }

    #[test]
    fn serde_as_bit_string() {
        let x = c("0110");
        let s = serde_json::to_string(&x).unwrap();
        assert_eq!(s, "\"0110\"");
        assert_eq!(serde_json::from_str::<Cohen>(&s).unwrap(), x);
        assert!(serde_json::from_str::<Cohen>("\"012\"").is_err());
    }

    #[test]
    fn even_bits_refine_hits_target() {
        let pi = CohenProjection::EvenBits;
        for q in cohen_up_to(5) {
            let img = pi.map(&q);
            for ext in cohen_up_to(3) {
                let p = img.extended(ext.bits());
                let r = pi.refine_below(&q, &p);
                assert!(r.extends(&q));
                assert!(pi.map(&r).extends(&p), "{q:?} {p:?} {r:?}");
            }
        }
    }

    #[test]
    fn force_bit_sets_the_image_bit() {
        for pi in [CohenProjection::Identity, CohenProjection::EvenBits] {
            let q = c("1");
            let r = pi.force_bit(&q, 3, true).unwrap();
            assert_eq!(pi.map(&r).bit(3), Some(true));
            assert!(r.extends(&q));
            assert!(pi.force_bit(&r, 0, false).is_none());
        }
    }

    #[test]
    fn pad_uniform_examples() {
        let u = tag(&[(0, "10"), (1, "01")], 2);
        assert_eq!(pad_uniform(&u), u);
        assert_eq!(pad_uniform(&tag(&[(0, "1"), (1, "10")], 2)), tag(&[(0, "10"), (1, "10")], 2));
        let empty = CohenProduct::top(3);
        assert_eq!(pad_uniform(&empty), empty);
    }

    #[test]
    fn noncoding_examples() {
        let fam = ObstacleFamily::new(2, vec![coords([0, 1])]).unwrap();
        let p = tag(&[(0, "10"), (1, "10")], 2);
        assert!(noncoding_extends(&p, &p, &fam).unwrap());
        let r = tag(&[(0, "1010"), (1, "1001")], 2);
        assert!(noncoding_extends(&r, &p, &fam).unwrap());
        let bad = tag(&[(0, "101"), (1, "101")], 2);
        assert!(!noncoding_extends(&bad, &p, &fam).unwrap());
        assert!(matches!(noncoding_extends(&p, &r, &fam), Err(Error::Input(_))));
    }

    #[test]
    fn obstacle_family_is_an_antichain() {
        assert!(ObstacleFamily::new(3, vec![coords([0, 1]), coords([0])]).is_err());
        let fam = ObstacleFamily::new(3, vec![coords([0, 1]), coords([1, 2])]).unwrap();
        assert!(fam.admits(&coords([0, 2])));
        assert!(!fam.admits(&coords([0, 1, 2])));
    }

    #[test]
    fn secret_stream_sources() {
        assert_eq!(SecretStream::parse("a").unwrap().take(4), vec![true, false, true, false]);
        assert_eq!(SecretStream::parse("bits:011").unwrap().take(3), vec![false, true, true]);
        let s = SecretStream::parse("seed:7").unwrap();
        assert_eq!(s.take(100), SecretStream::seeded(7).take(100));
        assert_ne!(s.take(64), SecretStream::seeded(8).take(64));
        assert!(SecretStream::bits("01").unwrap().require(3).is_err());
    }
}
