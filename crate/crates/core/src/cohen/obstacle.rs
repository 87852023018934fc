//! Obstacle coding on a product of Cohen-adding posets: every obstacle's
//! columns carry an all-1 row only right before one of its secret bits.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::cohen::{
    all_one_rows, is_uniform, max_len, noncoding_extends, pad_columns, pad_full, shared_extensions,
    Cohen, CohenProduct, CohenProjection, CohenRefiner, CohenView, ObstacleFamily,
    ProductProjection, SecretStream, ZSource,
};
use crate::error::{Error, Result};
use crate::order::{Coords, DenseRefiner, GeneratedFilter};
use crate::requirements::{
    AuditSubject, Atom, Membership, MembershipRecord, OracleLog, OracleViolation, Probe,
    ProbeRecord, refusal, RhoContext, RhoRecord, Schedule, ScriptedOracle, Task,
};
use crate::tagged::{self, ProductTagged, Tagged};

/// Strengthens the working part inside `a` until it meets `d`, re-tags the
/// columns of `a` with their new images and pads every column to a common
/// length. Returns the result and the refiner's input.
pub fn extend_within(
    pi: &ProductProjection,
    t: &ProductTagged,
    a: &Coords,
    d: &DenseRefiner<CohenProduct>,
) -> Result<(ProductTagged, CohenProduct)> {
    let tag = pad_full(&t.tag);
    let caught_up = pi.refine_below_on(&t.working, &tag, a);
    let refined = d.refine(&caught_up);
    if !pi.poset().leq_j(&refined, &caught_up, a)? {
        return Err(Error::Contract(format!(
            "refiner `{}` left the coordinates {a:?}",
            d.description
        )));
    }
    let mut new_tag = tag;
    for &i in a {
        let img = pi.column(&refined, i);
        if !img.is_empty() {
            new_tag.set(i, img);
        }
    }
    Ok((
        Tagged {
            working: refined,
            tag: pad_full(&new_tag),
        },
        caught_up,
    ))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleParams {
    pub family: ObstacleFamily,
    pub projections: Vec<CohenProjection>,
    pub refiners: BTreeMap<String, CohenRefiner>,
    pub oracle: ScriptedOracle,
    pub schedule: Schedule,
    pub z: ZSource,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Relation {
    Weak,
    StrongOn { j: Coords },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NameCase {
    /// The name already lies in the shared model.
    InModel,
    /// The two statements were decided in opposite ways.
    Opposite,
    /// Decided the same way; spliced and re-decided.
    Spliced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodingEvent {
    pub obstacle: Coords,
    pub occurrence: usize,
    pub signal_row: usize,
    pub bit: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleStep {
    pub task: Task,
    pub relation: Relation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coding: Option<CodingEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub case: Option<NameCase>,
    /// The refiner met at this step and the condition it was applied to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refined: Option<(String, CohenProduct)>,
    /// Working part at which `ρ` was chosen.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_anchor: Option<CohenProduct>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleTrace {
    pub seq: Vec<ProductTagged>,
    pub steps: Vec<ObstacleStep>,
    pub oracle_log: OracleLog,
}

fn coordinate_refiner(params: &ObstacleParams, id: &str, n: usize, a: &Coords) -> Result<DenseRefiner<CohenProduct>> {
    params
        .refiners
        .get(id)
        .map(|r| r.on_product(n, a))
        .ok_or_else(|| Error::Input(format!("unknown refiner `{id}`")))
}

/// Appends a 0 to the working part on each coordinate of `touch`.
pub(crate) fn membership_refiner(touch: &Coords) -> DenseRefiner<CohenProduct> {
    let touch = touch.clone();
    DenseRefiner::new(format!("membership{touch:?}"), move |q: &CohenProduct| {
        let mut out = q.clone();
        for &i in &touch {
            out.set(i, q.at(i, &Cohen::top()).extended(&[false]));
        }
        out
    })
}

/// Forces the projected bit at `atom`'s position so the atom's verdict is
/// `want`, unless the working part already decides it.
pub(crate) fn force_atom(pi: &ProductProjection, q: &CohenProduct, atom: &Atom, want: bool) -> CohenProduct {
    let c = atom.coord;
    let bit = if want { atom.yes_bit } else { !atom.yes_bit };
    match pi.factor(c).force_bit(&q.at(c, &Cohen::top()), atom.pos, bit) {
        Some(r) => {
            let mut out = q.clone();
            out.set(c, r);
            out
        }
        None => q.clone(),
    }
}

pub(crate) fn changed_coords(before: &CohenProduct, after: &CohenProduct) -> Coords {
    let t = Cohen::top();
    before
        .parts
        .keys()
        .chain(after.parts.keys())
        .copied()
        .filter(|&i| before.at(i, &t) != after.at(i, &t))
        .collect()
}

struct Run<'a> {
    params: &'a ObstacleParams,
    pi: ProductProjection,
    log: OracleLog,
}

impl Run<'_> {
    fn probe(&self, q: &CohenProduct, atom: &Atom) -> Option<bool> {
        let view = CohenView {
            pi: &self.pi,
            working: q,
        };
        self.params.oracle.decide(&view, atom)
    }

    /// Logs the verdicts that the step's final working part carries forward.
    fn log_verdicts(&mut self, step: usize, q: &CohenProduct, atoms: &[Atom]) {
        for atom in atoms {
            let verdict = self.probe(q, atom);
            self.log.probes.push(ProbeRecord {
                step,
                atom: *atom,
                verdict,
            });
        }
    }

    fn refuse(&self, step: usize, q: &CohenProduct, atom: &Atom, detail: &str) -> Error {
        let view = CohenView { pi: &self.pi, working: q };
        Error::Oracle(refusal(&self.params.oracle, &view, atom, step, detail))
    }

    fn refused(step: usize, detail: String) -> Error {
        Error::Oracle(OracleViolation::Refused {
            step: Some(step),
            detail,
        })
    }

    fn names(
        &mut self,
        n: usize,
        t: &ProductTagged,
        a: &Coords,
        a1: &Coords,
        sigma: &str,
        tau: &str,
    ) -> Result<(ProductTagged, ObstacleStep)> {
        let oracle = &self.params.oracle;
        let (verdict, touch) = oracle.membership(sigma, a, a1)?;
        let mut step = ObstacleStep {
            task: Task::SeparateNames {
                a0: a.clone(),
                a1: a1.clone(),
                sigma: sigma.into(),
                tau: tau.into(),
            },
            relation: Relation::StrongOn { j: a.clone() },
            coding: None,
            case: None,
            refined: None,
            rho_anchor: None,
        };
        let decide_membership = membership_refiner(&touch);
        let caught_up = self.pi.refine_below_on(&t.working, &pad_full(&t.tag), a);
        let changed = changed_coords(&caught_up, &decide_membership.refine(&caught_up));
        self.log.memberships.push(MembershipRecord {
            step: n,
            name: sigma.into(),
            domain: a.clone(),
            changed: changed.clone(),
        });
        if !changed.is_subset(a) {
            return Err(Error::Oracle(OracleViolation::Domain {
                step: n,
                coords: changed.difference(a).copied().collect(),
            }));
        }
        let (first, input) = extend_within(&self.pi, t, a, &decide_membership)?;
        step.refined = Some((decide_membership.description.clone(), input));
        if verdict == Membership::InModel {
            step.case = Some(NameCase::InModel);
            return Ok((first, step));
        }

        let shared: Coords = a.intersection(a1).copied().collect();
        let image = |q: &CohenProduct, i: usize| self.pi.column(q, i).len();
        let mut ctx = RhoContext {
            a0: a.clone(),
            a1: a1.clone(),
            ..RhoContext::default()
        };
        for i in a.union(a1) {
            let tag_len = first.tag.get(*i).map_or(0, Cohen::len);
            ctx.first_free.insert(*i, image(&first.working, *i).max(tag_len));
            ctx.tag_end.insert(*i, tag_len);
            if image(&first.working, *i) > 0 {
                ctx.decided.insert(*i, 0);
            }
        }
        let rho = oracle
            .rho_for(sigma, &ctx)
            .map_err(|e| match e {
                Error::Oracle(v) => Error::Oracle(v.at_step(n)),
                other => other,
            })?;
        self.log.rhos.push(RhoRecord {
            step: n,
            shared: shared.clone(),
            rho,
        });
        step.rho_anchor = Some(first.working.clone());

        let sigma_yes = oracle.sigma_yes(sigma)?;
        let tau_yes = oracle.sigma_yes(tau).unwrap_or(true);
        let pi = self.pi.clone();
        let (sigma_atom, tau_atom) = (rho.sigma, rho.tau);
        let tau_want = oracle.scripts.get(sigma).map_or(tau_yes, |s| s.tau_yes);
        let a_clone = a.clone();
        let decide_both = DenseRefiner::new(format!("decide-rho@{n}"), move |q: &CohenProduct| {
            let q = force_atom(&pi, q, &sigma_atom, sigma_yes);
            if a_clone.contains(&tau_atom.coord) {
                force_atom(&pi, &q, &tau_atom, tau_want)
            } else {
                q
            }
        });
        let (second, _) = extend_within(&self.pi, &first, a, &decide_both)?;
        let vs = self.probe(&second.working, &sigma_atom);
        let vt = self.probe(&second.working, &tau_atom);
        let (Some(vs), Some(vt)) = (vs, vt) else {
            return Err(Run::refused(n, "the statements about rho stay undecided".into()));
        };
        if vs != vt {
            step.case = Some(NameCase::Opposite);
            self.log_verdicts(n, &second.working, &[sigma_atom, tau_atom]);
            return Ok((second, step));
        }

        let spliced = self.pi.poset().splice(&second.working, &first.working, a1)?;
        if self.probe(&spliced, &sigma_atom).is_some() {
            return Err(Error::Oracle(OracleViolation::RhoContract {
                step: n,
                atom: sigma_atom,
            }));
        }
        let finished = force_atom(&self.pi, &spliced, &sigma_atom, !vt);
        if self.probe(&finished, &sigma_atom) != Some(!vt) {
            return Err(self.refuse(n, &finished, &sigma_atom, "cannot decide rho in sigma against tau"));
        }
        let mut tag = second.tag.clone();
        for &i in a {
            let img = self.pi.column(&finished, i);
            if img.is_empty() {
                tag.parts.remove(&i);
            } else {
                tag.set(i, img);
            }
        }
        step.case = Some(NameCase::Spliced);
        self.log_verdicts(n, &finished, &[sigma_atom, tau_atom]);
        Ok((
            Tagged {
                working: finished,
                tag: pad_full(&tag),
            },
            step,
        ))
    }
}

pub fn construct(params: &ObstacleParams) -> Result<ObstacleTrace> {
    let width = params.family.width;
    if params.projections.len() != width {
        return Err(Error::Input("one projection per coordinate is required".into()));
    }
    params.schedule.require(params.steps)?;
    let z = SecretStream::new(params.z.clone())?;
    let mut run = Run {
        params,
        pi: ProductProjection::new(params.projections.clone()),
        log: OracleLog::default(),
    };
    let mut seq = vec![Tagged {
        working: CohenProduct::top(width),
        tag: CohenProduct::top(width),
    }];
    let mut steps = Vec::with_capacity(params.steps);
    for n in 0..params.steps {
        let task = params.schedule.task(n).expect("schedule length checked");
        task.validate(&params.family)?;
        let t = seq[n].clone();
        let occurrence = params.schedule.occurrence(n);
        let (next, record) = match &task {
            Task::MeetDense { a, refiner } => {
                let d = coordinate_refiner(params, refiner, occurrence, a)?;
                let (next, input) = extend_within(&run.pi, &t, a, &d)?;
                let record = ObstacleStep {
                    task: task.clone(),
                    relation: Relation::StrongOn { j: a.clone() },
                    coding: None,
                    case: None,
                    refined: Some((d.description.clone(), input)),
                    rho_anchor: None,
                };
                (next, record)
            }
            Task::Obstacle { b } => {
                z.require(occurrence + 1)?;
                let bit = z.bit(occurrence);
                let row = max_len(&t.tag, b);
                let mut tag = pad_columns(&t.tag, b, row);
                for &i in b {
                    tag.set(i, tag.at(i, &Cohen::top()).extended(&[true, bit]));
                }
                let next = Tagged {
                    working: t.working.clone(),
                    tag: pad_full(&tag),
                };
                let record = ObstacleStep {
                    task: task.clone(),
                    relation: Relation::Weak,
                    coding: Some(CodingEvent {
                        obstacle: b.clone(),
                        occurrence,
                        signal_row: row,
                        bit,
                    }),
                    case: None,
                    refined: None,
                    rho_anchor: None,
                };
                (next, record)
            }
            Task::SeparateNames {
                a0,
                a1,
                sigma,
                tau,
            } => run.names(n, &t, a0, a1, sigma, tau)?,
            Task::Wide { .. } => {
                return Err(Error::Input("wide tasks need the wide engine".into()));
            }
        };
        if !tagged::is_valid(&run.pi, &next) {
            return Err(Error::Contract(format!("step {n} produced an invalid tagged pair")));
        }
        seq.push(next);
        steps.push(record);
    }
    Ok(ObstacleTrace {
        seq,
        steps,
        oracle_log: run.log,
    })
}

/// Reads signal/bit row pairs off the columns of one obstacle.
pub fn decode(columns: &BTreeMap<usize, Cohen>, obstacle: &Coords, family: &ObstacleFamily) -> Result<Vec<bool>> {
    if !family.contains_obstacle(obstacle) {
        return Err(Error::Input(format!("{obstacle:?} is not an obstacle")));
    }
    let cols: Vec<Cohen> = obstacle
        .iter()
        .map(|i| columns.get(i).cloned().unwrap_or_default())
        .collect();
    decode_rows(&cols)
}

/// Signal/bit pair scan across any number of columns.
pub fn decode_rows(cols: &[Cohen]) -> Result<Vec<bool>> {
    let len = cols.iter().map(Cohen::len).min().unwrap_or(0);
    let all_one = |k: usize| cols.iter().all(|c| c.bit(k) == Some(true));
    let mut out = Vec::new();
    let mut k = 0;
    while k < len {
        if !all_one(k) {
            k += 1;
            continue;
        }
        if k + 1 >= len {
            break;
        }
        let first = cols[0].bit(k + 1);
        if cols.iter().any(|c| c.bit(k + 1) != first) {
            return Err(Error::MalformedCoding(format!(
                "columns disagree on the bit row {}",
                k + 1
            )));
        }
        out.push(first.expect("in range"));
        k += 2;
    }
    Ok(out)
}

impl ObstacleTrace {
    pub fn final_tag(&self) -> &CohenProduct {
        &self.seq.last().expect("nonempty").tag
    }

    pub fn columns(&self) -> BTreeMap<usize, Cohen> {
        self.final_tag().parts.clone()
    }

    /// The secret bits each obstacle's steps coded, in order.
    pub fn expected_bits(&self) -> BTreeMap<Coords, Vec<bool>> {
        let mut out: BTreeMap<Coords, Vec<bool>> = BTreeMap::new();
        for s in &self.steps {
            if let Some(c) = &s.coding {
                out.entry(c.obstacle.clone()).or_default().push(c.bit);
            }
        }
        out
    }

    /// Indices of the steps whose relation is strong on coordinate `i`.
    pub fn stars_at(&self, i: usize) -> BTreeSet<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| matches!(&s.relation, Relation::StrongOn { j } if j.contains(&i)))
            .map(|(n, _)| n)
            .collect()
    }

    /// The working parts with every refiner scheduled at its input.
    pub fn filter(&self) -> GeneratedFilter<CohenProduct> {
        let mut f = GeneratedFilter::new(Vec::new());
        for (n, s) in self.steps.iter().enumerate() {
            f.chain.push(self.seq[n].working.clone());
            if let Some((label, input)) = &s.refined {
                f.chain.push(input.clone());
                f.schedule(label.clone(), f.chain.len() - 1);
            }
        }
        f.chain.push(self.seq.last().expect("nonempty").working.clone());
        f
    }
}

/// Failures of the coding discipline: decoding, the exact placement of all-1
/// rows, noncoding extensions and uniformity.
pub fn audit_coding(params: &ObstacleParams, trace: &ObstacleTrace) -> Vec<String> {
    let mut problems = Vec::new();
    let cols = trace.columns();
    let expected = trace.expected_bits();
    for b in &params.family.obstacles {
        let want = expected.get(b).cloned().unwrap_or_default();
        match decode(&cols, b, &params.family) {
            Ok(got) if got == want => {}
            Ok(got) => problems.push(format!("obstacle {b:?} decodes to {got:?}, expected {want:?}")),
            Err(e) => problems.push(format!("obstacle {b:?}: {e}")),
        }
        let mut allowed = BTreeSet::new();
        for s in &trace.steps {
            if let Some(c) = s.coding.as_ref().filter(|c| &c.obstacle == b) {
                allowed.insert(c.signal_row);
                if c.bit {
                    allowed.insert(c.signal_row + 1);
                }
            }
        }
        let seen: BTreeSet<usize> = all_one_rows(trace.final_tag(), b).into_iter().collect();
        if seen != allowed {
            problems.push(format!(
                "obstacle {b:?} has all-1 rows {seen:?}, expected {allowed:?}"
            ));
        }
    }
    for (n, s) in trace.steps.iter().enumerate() {
        let (prev, next) = (&trace.seq[n].tag, &trace.seq[n + 1].tag);
        if !is_uniform(next) {
            problems.push(format!("step {n}: tag is not uniform"));
        }
        if s.coding.is_none() {
            match noncoding_extends(next, prev, &params.family) {
                Ok(true) => {}
                Ok(false) => problems.push(format!("step {n}: tag extension codes a row")),
                Err(e) => problems.push(format!("step {n}: {e}")),
            }
        }
    }
    problems
}

/// Recomputes every recorded step relation.
pub fn audit_orders(params: &ObstacleParams, trace: &ObstacleTrace) -> Vec<String> {
    let pi = ProductProjection::new(params.projections.clone());
    let mut problems = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        let (prev, next) = (&trace.seq[n], &trace.seq[n + 1]);
        let ok = match &s.relation {
            Relation::Weak => tagged::weak_below(&pi, next, prev),
            Relation::StrongOn { j } => tagged::strong_below_on(&pi, next, prev, j),
        };
        match ok {
            Ok(true) => {}
            Ok(false) => problems.push(format!("step {n}: recorded {:?} does not hold", s.relation)),
            Err(e) => problems.push(format!("step {n}: {e}")),
        }
    }
    problems
}

/// Read access to a chain of product conditions for the oracle audit.
pub struct ChainAudit<'a> {
    pub pi: ProductProjection,
    pub seq: &'a [ProductTagged],
    /// Working part at which each step chose its `ρ`.
    pub anchors: BTreeMap<usize, &'a CohenProduct>,
}

impl<'a> ChainAudit<'a> {
    pub fn of_obstacle_trace(params: &ObstacleParams, trace: &'a ObstacleTrace) -> Self {
        ChainAudit {
            pi: ProductProjection::new(params.projections.clone()),
            seq: &trace.seq,
            anchors: trace
                .steps
                .iter()
                .enumerate()
                .filter_map(|(n, s)| s.rho_anchor.as_ref().map(|a| (n, a)))
                .collect(),
        }
    }
}

impl AuditSubject for ChainAudit<'_> {
    fn chain_len(&self) -> usize {
        self.seq.len()
    }

    fn view(&self, index: usize) -> Box<dyn Probe + '_> {
        Box::new(CohenView {
            pi: &self.pi,
            working: &self.seq[index].working,
        })
    }

    fn shared_extensions(&self, record: &RhoRecord) -> Vec<Box<dyn Probe + '_>> {
        let Some(anchor) = self.anchors.get(&record.step) else {
            return Vec::new();
        };
        let pi = &self.pi;
        shared_extensions(pi, anchor, &record.shared, record.rho.sigma.pos)
            .into_iter()
            .map(|w| Box::new(OwnedView { pi, working: w }) as Box<dyn Probe + '_>)
            .collect()
    }
}

/// A view that owns its working part.
pub struct OwnedView<'a> {
    pub pi: &'a ProductProjection,
    pub working: CohenProduct,
}

impl Probe for OwnedView<'_> {
    fn read(&self, coord: usize, pos: usize) -> Option<bool> {
        CohenView {
            pi: self.pi,
            working: &self.working,
        }
        .read(coord, pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order::coords;
    use crate::requirements::{Corruption, NameScript, TauMode};

    fn c(s: &str) -> Cohen {
        Cohen::parse(s).unwrap()
    }

    fn prod(width: usize, cols: &[(usize, &str)]) -> CohenProduct {
        CohenProduct::from_parts(width, cols.iter().map(|(i, s)| (*i, c(s))))
    }

    fn params(family: ObstacleFamily, tasks: Vec<Task>, z: &str) -> ObstacleParams {
        let width = family.width;
        ObstacleParams {
            family,
            projections: vec![CohenProjection::Identity; width],
            refiners: BTreeMap::from([
                ("one".to_string(), CohenRefiner::append("1").unwrap()),
                ("mix".to_string(), CohenRefiner::Seeded { seed: 5, max_len: 4 }),
            ]),
            oracle: ScriptedOracle::new("plain"),
            steps: tasks.len(),
            schedule: Schedule::explicit(tasks),
            z: ZSource::Bits(z.into()),
        }
    }

    #[test]
    fn extend_within_nothing_only_pads() {
        let pi = ProductProjection::uniform(2, CohenProjection::Identity);
        let t = Tagged {
            working: prod(2, &[(0, "1"), (1, "0")]),
            tag: prod(2, &[(0, "1"), (1, "011")]),
        };
        let (out, _) = extend_within(&pi, &t, &Coords::new(), &DenseRefiner::identity()).unwrap();
        assert_eq!(out.working, t.working);
        assert_eq!(out.tag, crate::cohen::pad_uniform(&t.tag));
    }

    #[test]
    fn extend_within_one_column() {
        let pi = ProductProjection::uniform(2, CohenProjection::Identity);
        let fam = ObstacleFamily::new(2, vec![coords([0, 1])]).unwrap();
        let t = Tagged {
            working: prod(2, &[(0, "1"), (1, "1")]),
            tag: prod(2, &[(0, "1"), (1, "1")]),
        };
        let d = CohenRefiner::append("1").unwrap().on_product(0, &coords([0]));
        let (out, _) = extend_within(&pi, &t, &coords([0]), &d).unwrap();
        assert_eq!(out.tag, prod(2, &[(0, "11"), (1, "10")]));
        assert!(noncoding_extends(&out.tag, &t.tag, &fam).unwrap());
        assert!(tagged::strong_below_on(&pi, &out, &t, &coords([0])).unwrap());
    }

    #[test]
    fn extend_within_rejects_escaping_refiners() {
        let pi = ProductProjection::uniform(2, CohenProjection::Identity);
        let t = Tagged {
            working: CohenProduct::top(2),
            tag: CohenProduct::top(2),
        };
        let d = CohenRefiner::append("1").unwrap().on_product(0, &coords([1]));
        assert!(matches!(
            extend_within(&pi, &t, &coords([0]), &d),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn zero_steps_is_trivial() {
        let fam = ObstacleFamily::new(2, vec![coords([0, 1])]).unwrap();
        let t = construct(&params(fam, vec![], "")).unwrap();
        assert_eq!(t.seq.len(), 1);
        assert!(t.steps.is_empty());
    }

    #[test]
    fn obstacle_steps_by_hand() {
        let fam = ObstacleFamily::new(3, vec![coords([0, 1]), coords([1, 2])]).unwrap();
        let b01 = Task::Obstacle { b: coords([0, 1]) };
        let b12 = Task::Obstacle { b: coords([1, 2]) };
        let p = params(fam.clone(), vec![b01.clone(), b12, b01], "10");
        let t = construct(&p).unwrap();
        assert_eq!(t.final_tag(), &prod(3, &[(0, "110010"), (1, "111110"), (2, "001100")]));
        let cols = t.columns();
        assert_eq!(decode(&cols, &coords([0, 1]), &fam).unwrap(), vec![true, false]);
        assert_eq!(decode(&cols, &coords([1, 2]), &fam).unwrap(), vec![true]);
        assert!(audit_coding(&p, &t).is_empty());
        assert!(audit_orders(&p, &t).is_empty());
    }

    #[test]
    fn dense_singletons_never_code() {
        let fam = ObstacleFamily::new(3, vec![coords([0, 1]), coords([1, 2])]).unwrap();
        let tasks: Vec<Task> = (0..30)
            .map(|n| Task::MeetDense {
                a: coords([n % 3]),
                refiner: "mix".into(),
            })
            .collect();
        let p = params(fam.clone(), tasks, "");
        let t = construct(&p).unwrap();
        for b in &fam.obstacles {
            assert!(all_one_rows(t.final_tag(), b).is_empty());
        }
        assert!(audit_coding(&p, &t).is_empty());
        assert!(audit_orders(&p, &t).is_empty());
        let f = t.filter();
        assert!(f.is_descending(&crate::order::ProductPoset::new(3, crate::cohen::CohenPoset)));
    }

    #[test]
    fn decode_rejects_non_obstacles_and_disagreement() {
        let fam = ObstacleFamily::new(2, vec![coords([0, 1])]).unwrap();
        let cols = BTreeMap::from([(0, c("10")), (1, c("11"))]);
        assert!(matches!(decode(&cols, &coords([0]), &fam), Err(Error::Input(_))));
        assert!(matches!(decode(&cols, &coords([0, 1]), &fam), Err(Error::MalformedCoding(_))));
        let trunc = BTreeMap::from([(0, c("0011")), (1, c("0111"))]);
        assert_eq!(decode(&trunc, &coords([0, 1]), &fam).unwrap(), vec![true]);
        let trunc = BTreeMap::from([(0, c("001")), (1, c("011"))]);
        assert!(decode(&trunc, &coords([0, 1]), &fam).unwrap().is_empty());
    }

    fn names_params(tau: TauMode, membership: Membership, sigma_yes: bool, tau_yes: bool, corruption: Corruption) -> ObstacleParams {
        let fam = ObstacleFamily::new(3, vec![coords([0, 1])]).unwrap();
        let tasks = vec![
            Task::MeetDense { a: coords([0, 2]), refiner: "mix".into() },
            Task::MeetDense { a: coords([1, 2]), refiner: "mix".into() },
            Task::SeparateNames {
                a0: coords([0, 2]),
                a1: coords([1, 2]),
                sigma: "s".into(),
                tau: "t".into(),
            },
            Task::Obstacle { b: coords([0, 1]) },
        ];
        let mut p = params(fam, tasks, "1");
        p.oracle = ScriptedOracle::new("names")
            .with("s", NameScript { membership, tau, tau_yes, sigma_yes })
            .with("t", NameScript { membership, tau, tau_yes, sigma_yes })
            .corrupted(corruption);
        p
    }

    #[test]
    fn name_cases() {
        use Membership::*;
        let cases = [
            (InModel, true, true, NameCase::InModel),
            (NotInModel, true, false, NameCase::Opposite),
            (NotInModel, true, true, NameCase::Spliced),
        ];
        for (m, sy, ty, want) in cases {
            let p = names_params(TauMode::Shared, m, sy, ty, Corruption::None);
            let t = construct(&p).unwrap();
            assert_eq!(t.steps[2].case, Some(want));
            assert!(audit_coding(&p, &t).is_empty(), "{want:?}");
            assert!(audit_orders(&p, &t).is_empty(), "{want:?}");
            let subject = ChainAudit::of_obstacle_trace(&p, &t);
            let v = crate::requirements::oracle_audit(&t.oracle_log, &p.oracle, &subject);
            assert!(v.passed(), "{want:?} {v:?}");
        }
    }

    #[test]
    fn corrupted_oracles_are_caught() {
        let p = names_params(TauMode::Shared, Membership::NotInModel, true, true, Corruption::ExtendOutsideDomain);
        assert!(matches!(construct(&p), Err(Error::Oracle(OracleViolation::Domain { .. }))));
        let p = names_params(TauMode::Shared, Membership::NotInModel, true, true, Corruption::RhoInsideJ);
        assert!(matches!(construct(&p), Err(Error::Oracle(OracleViolation::RhoContract { .. }))));
    }
}
