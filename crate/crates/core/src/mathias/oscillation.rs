//! Two generics coding a stream through which of them moves first after
//! each shared point.

use serde::{Deserialize, Serialize};

use super::{default_bound, intersect_all, mathias_leq, successor, FilterRep, MathiasCondition, MathiasRefiner};
use crate::cohen::{SecretStream, ZSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OscParams {
    pub filter: FilterRep,
    /// Dense sets met by the first generic; round `n` uses entry `n mod len`.
    pub refiners_p: Vec<MathiasRefiner>,
    pub refiners_q: Vec<MathiasRefiner>,
    pub z: ZSource,
    pub rounds: usize,
    #[serde(default = "default_bound")]
    pub search_bound: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    P,
    Q,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OscRound {
    pub coding_point: u64,
    pub bit: bool,
    pub first: Side,
    /// Conditions after the round.
    pub p: MathiasCondition,
    pub q: MathiasCondition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OscTrace {
    pub start: MathiasCondition,
    pub rounds: Vec<OscRound>,
}

impl OscTrace {
    pub fn last(&self) -> (&MathiasCondition, &MathiasCondition) {
        match self.rounds.last() {
            Some(r) => (&r.p, &r.q),
            None => (&self.start, &self.start),
        }
    }

    pub fn coding_points(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| r.coding_point).collect()
    }
}

fn pick(refiners: &[MathiasRefiner], n: usize) -> Result<&MathiasRefiner> {
    if refiners.is_empty() {
        return Err(Error::Input("empty refiner schedule".into()));
    }
    Ok(&refiners[n % refiners.len()])
}

fn advance(r: &MathiasRefiner, n: usize, side: usize, c: &MathiasCondition, f: &FilterRep, bound: u64) -> Result<MathiasCondition> {
    let out = r.apply(n, side, c, f, bound)?;
    if out.stem.len() <= c.stem.len() || !mathias_leq(&out, c, bound)? || !f.contains(&out.upper) {
        return Err(Error::Contract(format!("refiner {} broke its contract at round {n}", r.label(n))));
    }
    out.validate(bound)?;
    Ok(out)
}

pub fn construct(params: &OscParams) -> Result<OscTrace> {
    let bound = params.search_bound;
    let f = &params.filter;
    let z = SecretStream::new(params.z.clone())?;
    z.require(params.rounds)?;
    let start = MathiasCondition {
        stem: Vec::new(),
        upper: super::UpperPartTerm {
            filter: f.id.clone(),
            generators: f.generators.clone(),
            floor: 0,
            excluded: Default::default(),
        },
    };
    let (mut p, mut q) = (start.clone(), start.clone());
    let mut rounds = Vec::with_capacity(params.rounds);
    for n in 0..params.rounds {
        let x = p.upper.intersect(&q.upper, &f.id).min(bound)?;
        let (p1, q1) = (p.push(x)?, q.push(x)?);
        let bit = z.bit(n);
        let (rp, rq) = (pick(&params.refiners_p, n)?, pick(&params.refiners_q, n)?);
        let (np, nq) = if !bit {
            let np = advance(rp, n, 0, &p1, f, bound)?;
            let lifted = MathiasCondition {
                upper: q1.upper.raise_floor(np.max_stem().unwrap_or(0) + 1),
                ..q1
            };
            (np, advance(rq, n, 1, &lifted, f, bound)?)
        } else {
            let nq = advance(rq, n, 1, &q1, f, bound)?;
            let lifted = MathiasCondition {
                upper: p1.upper.raise_floor(nq.max_stem().unwrap_or(0) + 1),
                ..p1
            };
            (advance(rp, n, 0, &lifted, f, bound)?, nq)
        };
        p = np;
        q = nq;
        rounds.push(OscRound {
            coding_point: x,
            bit,
            first: if bit { Side::Q } else { Side::P },
            p: p.clone(),
            q: q.clone(),
        });
    }
    Ok(OscTrace { start, rounds })
}

/// Reads one bit per shared point: 0 when `r_g` moves on first.
pub fn osc_decode(r_g: &[u64], r_h: &[u64]) -> Result<Vec<bool>> {
    let mut out = Vec::new();
    for x in intersect_all(&[r_g, r_h]) {
        match (successor(r_g, x), successor(r_h, x)) {
            (Some(a), Some(b)) if a == b => {
                return Err(Error::MalformedCoding(format!("both reals continue with {a} after {x}")))
            }
            (Some(a), Some(b)) => out.push(a > b),
            _ => break,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OscAudit {
    pub purity: bool,
    pub invariant: bool,
    pub decoded: Vec<bool>,
    pub roundtrip: bool,
}

impl OscAudit {
    pub fn passed(&self) -> bool {
        self.purity && self.invariant && self.roundtrip
    }
}

pub fn audit(trace: &OscTrace, params: &OscParams) -> Result<OscAudit> {
    let bound = params.search_bound;
    let (p, q) = trace.last();
    let purity = intersect_all(&[&p.stem, &q.stem]) == trace.coding_points();
    let mut invariant = true;
    let mut prev = (&trace.start, &trace.start);
    for r in &trace.rounds {
        invariant &= r.p.validate(bound).is_ok()
            && r.q.validate(bound).is_ok()
            && mathias_leq(&r.p, prev.0, bound)?
            && mathias_leq(&r.q, prev.1, bound)?;
        prev = (&r.p, &r.q);
    }
    let decoded = osc_decode(&p.stem, &q.stem)?;
    let z = SecretStream::new(params.z.clone())?;
    let expected: Vec<bool> = (0..trace.rounds.len()).map(|n| z.bit(n)).collect();
    Ok(OscAudit {
        purity,
        invariant,
        roundtrip: decoded == expected,
        decoded,
    })
}
