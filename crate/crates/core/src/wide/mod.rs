//! Wide posets: every condition carries an indexed maximal antichain below
//! it. Information is stored by choosing which member a column extends.

pub mod retrace;

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::cohen::{cohen_up_to, Cohen, CohenPoset};
use crate::error::{Error, Result};
use crate::order::{Coords, Poset};

/// A poset with an antichain `W(p)` below each `p`, indexed by the naturals.
pub trait WidePoset: Poset {
    fn member(&self, p: &Self::Cond, k: &BigUint) -> Self::Cond;
}

/// A Cohen antichain given by a prefix code: `W(p)[k] = p·code(k)`.
pub trait CohenAntichain: WidePoset<Cond = Cohen> {
    fn code(&self, k: &BigUint) -> Vec<bool>;

    /// Reads a code word off `stream` starting at `from`. `None` when the
    /// stream ends before the word does.
    fn read(&self, stream: &[bool], from: usize) -> Option<(BigUint, usize)>;

    /// The index of the member of `W(p)` that `stream` passes through.
    fn locate(&self, p: &Cohen, stream: &Cohen) -> Result<Option<BigUint>> {
        if !stream.extends(p) {
            return Err(Error::MalformedCoding(format!(
                "stream does not pass through {p}"
            )));
        }
        Ok(self.read(stream.bits(), p.len()).map(|(k, _)| k))
    }
}

/// `W(p) = { p·0^k·1 }`.
#[derive(Debug, Clone, Copy, Default)]
pub struct UnaryCohen;

/// `W(p) = { p·γ(k+1) }` with the Elias gamma code.
#[derive(Debug, Clone, Copy, Default)]
pub struct GammaCohen;

macro_rules! cohen_poset {
    ($t:ty) => {
        impl Poset for $t {
            type Cond = Cohen;
            fn top(&self) -> Cohen {
                Cohen::top()
            }
            fn leq(&self, p: &Cohen, q: &Cohen) -> bool {
                CohenPoset.leq(p, q)
            }
            fn compatible(&self, p: &Cohen, q: &Cohen) -> Option<bool> {
                CohenPoset.compatible(p, q)
            }
        }

        impl WidePoset for $t {
            fn member(&self, p: &Cohen, k: &BigUint) -> Cohen {
                p.extended(&self.code(k))
            }
        }
    };
}

cohen_poset!(UnaryCohen);
cohen_poset!(GammaCohen);

/// Largest unary index materialized.
pub const UNARY_LIMIT: u64 = 1 << 16;

impl CohenAntichain for UnaryCohen {
    fn code(&self, k: &BigUint) -> Vec<bool> {
        let k = k
            .to_u64()
            .filter(|&k| k <= UNARY_LIMIT)
            .expect("unary antichain index beyond the materialization limit");
        let mut out = vec![false; k as usize];
        out.push(true);
        out
    }

    fn read(&self, stream: &[bool], from: usize) -> Option<(BigUint, usize)> {
        let rest = stream.get(from..)?;
        let k = rest.iter().position(|&b| b)?;
        Some((BigUint::from(k), k + 1))
    }
}

pub fn gamma(m: &BigUint) -> Vec<bool> {
    assert!(!m.is_zero(), "gamma code starts at 1");
    let len = m.bits() as usize;
    let mut out = vec![false; len - 1];
    out.extend((0..len).rev().map(|b| m.bit(b as u64)));
    out
}

/// Parses one gamma word; returns the value and the number of bits used.
pub fn read_gamma(stream: &[bool], from: usize) -> Option<(BigUint, usize)> {
    let rest = stream.get(from..)?;
    let zeros = rest.iter().position(|&b| b)?;
    let body = rest.get(zeros..2 * zeros + 1)?;
    let mut m = BigUint::zero();
    for &b in body {
        m <<= 1u8;
        if b {
            m += 1u8;
        }
    }
    Some((m, 2 * zeros + 1))
}

impl CohenAntichain for GammaCohen {
    fn code(&self, k: &BigUint) -> Vec<bool> {
        gamma(&(k + 1u8))
    }

    fn read(&self, stream: &[bool], from: usize) -> Option<(BigUint, usize)> {
        read_gamma(stream, from).map(|(m, used)| (m - 1u8, used))
    }
}

/// Unary-coded antichains as the default Cohen wide instance.
pub fn cohen_as_wide() -> UnaryCohen {
    UnaryCohen
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideCheck {
    /// Pairs of member indices that are compatible.
    pub compatible_members: Vec<(u64, u64)>,
    /// Extensions of `p` compatible with no member.
    pub uncovered: Vec<Cohen>,
    pub members_checked: usize,
}

impl WideCheck {
    pub fn passed(&self) -> bool {
        self.compatible_members.is_empty() && self.uncovered.is_empty()
    }
}

/// Exhaustively checks antichain and maximality below `p` for every
/// extension of at most `depth` extra bits.
pub fn check_wide<W: CohenAntichain>(w: &W, p: &Cohen, depth: usize) -> WideCheck {
    let mut members = Vec::new();
    let mut k = 0u64;
    loop {
        let m = w.member(p, &BigUint::from(k));
        if m.len() > p.len() + 2 * depth + 1 {
            break;
        }
        members.push(m);
        k += 1;
    }
    let mut out = WideCheck {
        members_checked: members.len(),
        ..WideCheck::default()
    };
    for (a, ma) in members.iter().enumerate() {
        if !w.leq(ma, p) || ma == p {
            out.compatible_members.push((a as u64, a as u64));
        }
        for (b, mb) in members.iter().enumerate().skip(a + 1) {
            if w.compatible(ma, mb) == Some(true) {
                out.compatible_members.push((a as u64, b as u64));
            }
        }
    }
    for tail in cohen_up_to(depth) {
        let s = p.extended(tail.bits());
        if !members.iter().any(|m| w.compatible(&s, m) == Some(true)) {
            out.uncovered.push(s);
        }
    }
    out
}

/// Reserved antichain indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Marker {
    Sharp,
    Flat,
    Natural,
}

impl Marker {
    pub fn index(self) -> u8 {
        match self {
            Marker::Sharp => 0,
            Marker::Flat => 1,
            Marker::Natural => 2,
        }
    }
}

/// Lengths of conditions keyed by coordinate. Every coded condition is a
/// prefix of its column, so a length pins it down.
pub type Fragment = BTreeMap<usize, usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Marker { marker: Marker },
    Step {
        b0: Coords,
        b1: Coords,
        z: bool,
        #[serde(with = "fragment_pairs")]
        fragment: Fragment,
    },
    Fragment {
        #[serde(with = "fragment_pairs")]
        fragment: Fragment,
    },
}

/// Fragments as `[coordinate, length]` pairs; integer map keys do not
/// survive the buffering that tagged enums do.
mod fragment_pairs {
    use super::Fragment;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(f: &Fragment, s: S) -> Result<S::Ok, S::Error> {
        f.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fragment, D::Error> {
        Ok(Vec::<(usize, usize)>::deserialize(d)?.into_iter().collect())
    }
}

struct BitWriter(Vec<bool>);

impl BitWriter {
    fn num(&mut self, v: usize) {
        self.0.extend(gamma(&BigUint::from(v + 1)));
    }

    /// Strictly increasing sequence: count, then first element and gaps.
    fn increasing<I: ExactSizeIterator<Item = usize>>(&mut self, it: I) {
        self.num(it.len());
        let mut prev: Option<usize> = None;
        for v in it {
            match prev {
                None => self.num(v),
                Some(p) => self.num(v - p - 1),
            }
            prev = Some(v);
        }
    }

    fn fragment(&mut self, f: &Fragment) {
        self.increasing(f.keys().copied());
        for &len in f.values() {
            self.num(len);
        }
    }
}

struct BitReader<'a> {
    bits: &'a [bool],
    at: usize,
}

impl BitReader<'_> {
    fn num(&mut self) -> Option<usize> {
        let (m, used) = read_gamma(self.bits, self.at)?;
        self.at += used;
        (m - 1u8).to_usize()
    }

    fn bit(&mut self) -> Option<bool> {
        let b = *self.bits.get(self.at)?;
        self.at += 1;
        Some(b)
    }

    fn increasing(&mut self) -> Option<Vec<usize>> {
        let n = self.num()?;
        if n > self.bits.len() {
            return None;
        }
        let mut out: Vec<usize> = Vec::with_capacity(n);
        for k in 0..n {
            let v = self.num()?;
            out.push(if k == 0 { v } else { out[k - 1].checked_add(v)?.checked_add(1)? });
        }
        Some(out)
    }

    fn fragment(&mut self) -> Option<Fragment> {
        let keys = self.increasing()?;
        let mut f = Fragment::new();
        for k in keys {
            f.insert(k, self.num()?);
        }
        Some(f)
    }
}

/// Payload to antichain index. Markers take 0, 1 and 2; everything else is
/// 3 plus the natural whose binary form is `1` followed by the payload bits,
/// minus one.
pub fn encode(payload: &Payload) -> BigUint {
    let mut w = BitWriter(Vec::new());
    match payload {
        Payload::Marker { marker } => return BigUint::from(marker.index()),
        Payload::Step { b0, b1, z, fragment } => {
            w.0.push(false);
            w.increasing(b0.iter().copied());
            w.increasing(b1.iter().copied());
            w.0.push(*z);
            w.fragment(fragment);
        }
        Payload::Fragment { fragment } => {
            w.0.push(true);
            w.fragment(fragment);
        }
    }
    let mut n = BigUint::one();
    for b in w.0 {
        n <<= 1u8;
        if b {
            n += 1u8;
        }
    }
    n + 2u8
}

/// Antichain index to payload; `None` for indices no payload encodes to.
pub fn decode(index: &BigUint) -> Option<Payload> {
    if let Some(small) = index.to_u8().filter(|&k| k < 3) {
        let marker = [Marker::Sharp, Marker::Flat, Marker::Natural][small as usize];
        return Some(Payload::Marker { marker });
    }
    let n: BigUint = index - 2u8;
    let len = n.bits() as usize;
    let bits: Vec<bool> = (0..len - 1).rev().map(|b| n.bit(b as u64)).collect();
    let mut r = BitReader { bits: &bits, at: 0 };
    let kind = r.bit()?;
    let payload = if kind {
        Payload::Fragment {
            fragment: r.fragment()?,
        }
    } else {
        let b0 = r.increasing()?.into_iter().collect();
        let b1 = r.increasing()?.into_iter().collect();
        let z = r.bit()?;
        Payload::Step {
            b0,
            b1,
            z,
            fragment: r.fragment()?,
        }
    };
    (r.at == bits.len()).then_some(payload)
}

/// The first `n` elements of `0..width` outside `a`.
pub fn side_sets(n: usize, a: &Coords, width: usize) -> Coords {
    (0..width).filter(|i| !a.contains(i)).take(n).collect()
}
