//! Two-column coding: two descending tagged sequences whose tag columns
//! carry a 1 in the same row only right before a secret bit.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cohen::{Cohen, CohenPoset, CohenProjection, CohenRefiner, SecretStream, ZSource};
use crate::error::{Error, Result};
use crate::order::GeneratedFilter;
use crate::projection::Projection;
use crate::tagged::{self, Tagged};

pub type CohenTagged = Tagged<Cohen, Cohen>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairParams {
    pub projections: [CohenProjection; 2],
    pub refiners: [CohenRefiner; 2],
    pub z: ZSource,
    pub rounds: usize,
}

/// Intermediate conditions of one round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairRound {
    pub refiners: [String; 2],
    /// Side 1 after catching up with its tag; the first refiner's input.
    pub caught_up1: Cohen,
    /// Side 1 after its refiner.
    pub first1: CohenTagged,
    /// Side 2's tag padded to the new length of side 1.
    pub padded2: Cohen,
    /// Side 2 after catching up; the second refiner's input.
    pub first2: CohenTagged,
    /// Side 2 after its refiner.
    pub second2: CohenTagged,
    /// Side 1 after catching up with the padded tag of side 2.
    pub second1: CohenTagged,
    pub signal_row: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTrace {
    pub sides: [Vec<CohenTagged>; 2],
    pub rounds: Vec<PairRound>,
}

impl PairTrace {
    pub fn final_columns(&self) -> (Cohen, Cohen) {
        (
            self.sides[0].last().expect("nonempty").tag.clone(),
            self.sides[1].last().expect("nonempty").tag.clone(),
        )
    }

    /// The working parts of one side, intermediates included, with every
    /// refiner scheduled at its input.
    pub fn filter(&self, side: usize) -> GeneratedFilter<Cohen> {
        let mut f = GeneratedFilter::new(vec![self.sides[side][0].working.clone()]);
        for r in &self.rounds {
            if side == 0 {
                f.chain.push(r.caught_up1.clone());
                f.schedule(r.refiners[0].clone(), f.chain.len() - 1);
                f.chain.push(r.first1.working.clone());
                f.chain.push(r.second1.working.clone());
            } else {
                f.chain.push(r.first2.working.clone());
                f.schedule(r.refiners[1].clone(), f.chain.len() - 1);
                f.chain.push(r.second2.working.clone());
            }
        }
        f
    }
}

fn exact(pi: CohenProjection, q: Cohen) -> CohenTagged {
    tagged::exact(&pi, q)
}

pub fn construct(params: &PairParams) -> Result<PairTrace> {
    let z = SecretStream::new(params.z.clone())?;
    z.require(params.rounds)?;
    let [pi1, pi2] = params.projections;
    let start = Tagged {
        working: Cohen::top(),
        tag: Cohen::top(),
    };
    let mut sides = [vec![start.clone()], vec![start]];
    let mut rounds = Vec::with_capacity(params.rounds);
    for n in 0..params.rounds {
        let (t1, t2) = (sides[0][n].clone(), sides[1][n].clone());
        let d1 = params.refiners[0].at(n);
        let d2 = params.refiners[1].at(n);

        let caught_up1 = pi1.refine_below(&t1.working, &t1.tag);
        let first1 = exact(pi1, d1.refine_checked(&CohenPoset, &caught_up1)?);

        let padded2 = t2.tag.padded(first1.tag.len());
        let first2 = exact(pi2, pi2.refine_below(&t2.working, &padded2));

        let second2 = exact(pi2, d2.refine_checked(&CohenPoset, &first2.working)?);
        let target1 = first1.tag.padded(second2.tag.len());
        let second1 = exact(pi1, pi1.refine_below(&first1.working, &target1));

        let len = second1.tag.len().max(second2.tag.len());
        let row = [true, z.bit(n)];
        let next1 = Tagged {
            working: second1.working.clone(),
            tag: second1.tag.padded(len).extended(&row),
        };
        let next2 = Tagged {
            working: second2.working.clone(),
            tag: second2.tag.padded(len).extended(&row),
        };
        for (pi, t) in [(pi1, &next1), (pi2, &next2)] {
            if !tagged::is_valid(&pi, t) {
                return Err(Error::Contract(format!("round {n} produced an invalid tagged pair")));
            }
        }
        sides[0].push(next1);
        sides[1].push(next2);
        rounds.push(PairRound {
            refiners: [d1.description.clone(), d2.description.clone()],
            caught_up1,
            first1,
            padded2,
            first2,
            second2,
            second1,
            signal_row: len,
        });
    }
    Ok(PairTrace { sides, rounds })
}

/// Reads signal/bit row pairs off two columns. A row of two 1s is a signal;
/// the row after it is a bit row and is never itself read as a signal.
pub fn decode(col1: &Cohen, col2: &Cohen) -> Result<Vec<bool>> {
    let len = col1.len().min(col2.len());
    let mut out = Vec::new();
    let mut k = 0;
    while k < len {
        if col1.bit(k) == Some(true) && col2.bit(k) == Some(true) {
            if k + 1 >= len {
                break;
            }
            let (a, b) = (col1.bit(k + 1), col2.bit(k + 1));
            if a != b {
                return Err(Error::MalformedCoding(format!(
                    "columns disagree on the bit row {}",
                    k + 1
                )));
            }
            out.push(a.expect("in range"));
            k += 2;
        } else {
            k += 1;
        }
    }
    Ok(out)
}

/// Rows where both columns carry a 1, split into signal rows and the bit rows
/// consumed after them.
pub fn coding_rows(col1: &Cohen, col2: &Cohen) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let len = col1.len().min(col2.len());
    let (mut signals, mut bits) = (BTreeSet::new(), BTreeSet::new());
    let mut k = 0;
    while k < len {
        if col1.bit(k) == Some(true) && col2.bit(k) == Some(true) {
            signals.insert(k);
            if k + 1 < len && col1.bit(k + 1) == Some(true) && col2.bit(k + 1) == Some(true) {
                bits.insert(k + 1);
            }
            k += 2;
        } else {
            k += 1;
        }
    }
    (signals, bits)
}

/// Everything that must hold of a two-column trace, as a list of failures.
pub fn audit(params: &PairParams, trace: &PairTrace) -> Vec<String> {
    let mut problems = Vec::new();
    let [pi1, pi2] = params.projections;
    for n in 0..trace.rounds.len() {
        let (a, b) = (&trace.sides[0][n + 1], &trace.sides[1][n + 1]);
        if a.tag.len() != b.tag.len() {
            problems.push(format!("round {n}: tag lengths differ"));
        }
        for (side, pi, next, prev) in [
            (1, pi1, a, &trace.sides[0][n]),
            (2, pi2, b, &trace.sides[1][n]),
        ] {
            if !tagged::is_valid(&pi, next) {
                problems.push(format!("round {n}: side {side} tag not below its image"));
            }
            if !pi.tagged_strong_below(&next.working, &prev.working, &prev.tag) {
                problems.push(format!("round {n}: side {side} step is not strong"));
            }
        }
    }
    let (c1, c2) = trace.final_columns();
    let recorded: BTreeSet<usize> = trace.rounds.iter().map(|r| r.signal_row).collect();
    let (signals, _) = coding_rows(&c1, &c2);
    if signals != recorded {
        problems.push(format!(
            "signal rows {signals:?} differ from the recorded rows {recorded:?}"
        ));
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> Cohen {
        Cohen::parse(s).unwrap()
    }

    fn params(z: &str, rounds: usize) -> PairParams {
        PairParams {
            projections: [CohenProjection::Identity; 2],
            refiners: [
                CohenRefiner::append("01").unwrap(),
                CohenRefiner::append("1").unwrap(),
            ],
            z: ZSource::Bits(z.into()),
            rounds,
        }
    }

    #[test]
    fn zero_rounds_is_trivial() {
        let t = construct(&params("", 0)).unwrap();
        assert_eq!(t.sides[0], vec![Tagged { working: c(""), tag: c("") }]);
        assert_eq!(t.sides[1].len(), 1);
    }

    #[test]
    fn one_round_by_hand() {
        let t = construct(&params("1", 1)).unwrap();
        let (c1, c2) = t.final_columns();
        assert_eq!((c1.to_string(), c2.to_string()), ("01011".into(), "00111".into()));
        let t = construct(&params("0", 1)).unwrap();
        let (c1, c2) = t.final_columns();
        assert_eq!((c1.to_string(), c2.to_string()), ("01010".into(), "00110".into()));
    }

    #[test]
    fn decode_examples() {
        assert!(decode(&c("00"), &c("00")).unwrap().is_empty());
        assert_eq!(decode(&c("01011"), &c("01001")).unwrap(), vec![false]);
        assert!(matches!(
            decode(&c("10"), &c("11")),
            Err(Error::MalformedCoding(_))
        ));
    }

    #[test]
    fn roundtrip_and_audit() {
        let p = params("101", 3);
        let t = construct(&p).unwrap();
        let (c1, c2) = t.final_columns();
        assert_eq!(decode(&c1, &c2).unwrap(), vec![true, false, true]);
        assert!(audit(&p, &t).is_empty());
    }

    #[test]
    fn even_bits_projection_roundtrip() {
        let mut p = params("0110", 4);
        p.projections = [CohenProjection::EvenBits, CohenProjection::Identity];
        p.refiners[0] = CohenRefiner::Seeded { seed: 3, max_len: 5 };
        let t = construct(&p).unwrap();
        let (c1, c2) = t.final_columns();
        assert_eq!(decode(&c1, &c2).unwrap(), vec![false, true, true, false]);
        assert!(audit(&p, &t).is_empty());
    }

    #[test]
    fn working_parts_meet_their_refiners() {
        let p = params("11", 2);
        let t = construct(&p).unwrap();
        for side in 0..2 {
            let f = t.filter(side);
            assert!(f.is_descending(&CohenPoset));
            for n in 0..2 {
                assert!(f.meets(&CohenPoset, &p.refiners[side].at(n)).unwrap());
            }
        }
    }
}
