//! Obstacle coding over products of filter-based Mathias forcings. Each
//! obstacle has an anchor coordinate, and a bit is read from whether the
//! anchor's real moves past a shared point before the others do.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{
    check_linear, default_bound, intersect_all, is_uniform, lift_floors, mathias_leq, successor,
    uniformize, FilterRep, MathiasCondition, MathiasProduct, MathiasRefiner, MathiasView, UpperPartTerm,
};
use crate::cohen::obstacle::NameCase;
use crate::cohen::{ObstacleFamily, SecretStream, ZSource};
use crate::error::{Error, Result};
use crate::order::{coords, Coords};
use crate::requirements::{
    Atom, AuditSubject, Membership, MembershipRecord, OracleLog, OracleViolation, Probe, ProbeRecord, refusal, RhoContext,
    RhoRecord, Schedule, ScriptedOracle, Task,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorMode {
    /// One filter; every step ends with all support coordinates sharing an upper part.
    Uniform,
    /// A linearly ordered family of filters; floors are lifted above all
    /// stems but upper parts stay in their own filters.
    PerFilter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchoredObstacle {
    pub b: Coords,
    pub anchor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorParams {
    pub mode: AnchorMode,
    pub width: usize,
    pub filters: Vec<FilterRep>,
    /// Filter id per coordinate.
    pub coord_filters: Vec<String>,
    pub obstacles: Vec<AnchoredObstacle>,
    pub refiners: BTreeMap<String, MathiasRefiner>,
    pub oracle: ScriptedOracle,
    pub schedule: Schedule,
    pub z: ZSource,
    pub steps: usize,
    #[serde(default = "default_bound")]
    pub search_bound: u64,
}

impl AnchorParams {
    pub fn family(&self) -> Result<ObstacleFamily> {
        ObstacleFamily::new(self.width, self.obstacles.iter().map(|o| o.b.clone()).collect())
    }

    fn filter_table(&self) -> Result<BTreeMap<String, FilterRep>> {
        let mut table = BTreeMap::new();
        for f in &self.filters {
            f.validate(self.search_bound)?;
            if table.insert(f.id.clone(), f.clone()).is_some() {
                return Err(Error::Input(format!("filter `{}` declared twice", f.id)));
            }
        }
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        let table = self.filter_table()?;
        if self.coord_filters.len() != self.width {
            return Err(Error::Input("one filter per coordinate is required".into()));
        }
        if let Some(id) = self.coord_filters.iter().find(|id| !table.contains_key(*id)) {
            return Err(Error::Input(format!("unknown filter `{id}`")));
        }
        match self.mode {
            AnchorMode::Uniform => {
                if self.coord_filters.iter().collect::<BTreeSet<_>>().len() > 1 {
                    return Err(Error::Input("uniform mode needs a single filter".into()));
                }
            }
            AnchorMode::PerFilter => check_linear(&self.filters)?,
        }
        let family = self.family()?;
        for o in &self.obstacles {
            if !o.b.contains(&o.anchor) || o.b.len() < 2 {
                return Err(Error::Input(format!(
                    "obstacle {:?} needs its anchor {} and at least one other coordinate",
                    o.b, o.anchor
                )));
            }
        }
        self.schedule.require(self.steps)?;
        for n in 0..self.steps {
            let t = self.schedule.task(n).ok_or_else(|| Error::Input(format!("no task at step {n}")))?;
            t.validate(&family)?;
            if let Task::MeetDense { refiner, .. } = &t {
                if !self.refiners.contains_key(refiner) {
                    return Err(Error::Input(format!("unknown refiner `{refiner}`")));
                }
            }
            if matches!(t, Task::Wide { .. }) {
                return Err(Error::Input("wide tasks need the wide engine".into()));
            }
        }
        Ok(())
    }

    /// Each coordinate's starting condition: empty stem, its filter's base set.
    pub fn fresh(&self) -> Result<Vec<MathiasCondition>> {
        let table = self.filter_table()?;
        self.coord_filters
            .iter()
            .map(|id| {
                let f = table.get(id).ok_or_else(|| Error::Input(format!("unknown filter `{id}`")))?;
                Ok(MathiasCondition {
                    stem: Vec::new(),
                    upper: UpperPartTerm {
                        filter: f.id.clone(),
                        generators: f.generators.clone(),
                        floor: 0,
                        excluded: BTreeSet::new(),
                    },
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnchorCase {
    Dense,
    Coding {
        obstacle: usize,
        counter: usize,
        point: u64,
        bit: bool,
    },
    Names {
        case: NameCase,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraneous {
    pub obstacle: usize,
    pub point: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorStep {
    pub task: Task,
    pub case: AnchorCase,
    /// Coordinates that entered the support at this step.
    pub first_mentions: Coords,
    pub extraneous: Vec<Extraneous>,
    pub rho_anchor: Option<MathiasProduct>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorTrace {
    pub seq: Vec<MathiasProduct>,
    pub steps: Vec<AnchorStep>,
    pub oracle_log: OracleLog,
}

impl AnchorTrace {
    pub fn last(&self) -> &MathiasProduct {
        self.seq.last().expect("the chain starts with the top condition")
    }

    /// Final stems, one per coordinate.
    pub fn reals(&self, width: usize) -> Vec<Vec<u64>> {
        let last = self.last();
        (0..width).map(|i| last.get(i).map(|c| c.stem.clone()).unwrap_or_default()).collect()
    }

    pub fn extraneous_for(&self, obstacle: usize) -> BTreeSet<u64> {
        self.steps
            .iter()
            .flat_map(|s| &s.extraneous)
            .filter(|e| e.obstacle == obstacle)
            .map(|e| e.point)
            .collect()
    }

    pub fn coding_bits(&self, obstacle: usize) -> Vec<bool> {
        self.steps
            .iter()
            .filter_map(|s| match s.case {
                AnchorCase::Coding { obstacle: o, bit, .. } if o == obstacle => Some(bit),
                _ => None,
            })
            .collect()
    }

    pub fn case_counts(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for s in &self.steps {
            let key = match &s.case {
                AnchorCase::Dense => "dense".to_string(),
                AnchorCase::Coding { .. } => "coding".to_string(),
                AnchorCase::Names { case } => format!("names-{}", serde_json::to_value(case).unwrap_or_default().as_str().unwrap_or("?")),
            };
            *out.entry(key).or_insert(0) += 1;
        }
        out
    }
}

struct Run<'a> {
    params: &'a AnchorParams,
    filters: BTreeMap<String, FilterRep>,
    fresh: Vec<MathiasCondition>,
    z: SecretStream,
    log: OracleLog,
    counters: Vec<usize>,
}

impl Run<'_> {
    fn bound(&self) -> u64 {
        self.params.search_bound
    }

    fn at(&self, p: &MathiasProduct, i: usize) -> MathiasCondition {
        p.at(i, &self.fresh[i])
    }

    fn filter_of(&self, i: usize) -> &FilterRep {
        &self.filters[&self.params.coord_filters[i]]
    }

    fn normalize(&self, p: &MathiasProduct) -> Result<MathiasProduct> {
        match self.params.mode {
            AnchorMode::Uniform => uniformize(p),
            AnchorMode::PerFilter => Ok(lift_floors(p)),
        }
    }

    fn probe(&self, p: &MathiasProduct, atom: &Atom) -> Option<bool> {
        let view = MathiasView { cond: p, fresh: &self.fresh };
        self.params.oracle.decide(&view, atom)
    }

    /// Makes `atom` come out `want`, if it is still open.
    fn force(&self, p: &MathiasProduct, atom: &Atom, want: bool) -> Result<MathiasProduct> {
        if self.probe(p, atom).is_some() {
            return Ok(p.clone());
        }
        let c = self.at(p, atom.coord);
        let x = atom.pos as u64;
        let inside = want == atom.yes_bit;
        let next = if inside {
            c.push(x)?
        } else {
            MathiasCondition {
                upper: c.upper.exclude(x),
                ..c
            }
        };
        let mut out = p.clone();
        out.set(atom.coord, next);
        Ok(out)
    }

    fn log_verdicts(&mut self, n: usize, p: &MathiasProduct, atoms: &[Atom]) {
        for a in atoms {
            let verdict = self.probe(p, a);
            self.log.probes.push(ProbeRecord {
                step: n,
                atom: *a,
                verdict,
            });
        }
    }

    fn refuse(&self, n: usize, p: &MathiasProduct, atom: &Atom, detail: &str) -> Error {
        let view = MathiasView { cond: p, fresh: &self.fresh };
        Error::Oracle(refusal(&self.params.oracle, &view, atom, n, detail))
    }

    fn refused(n: usize, detail: String) -> Error {
        Error::Oracle(OracleViolation::Refused { step: Some(n), detail })
    }

    fn dense(&self, n: usize, p: &MathiasProduct, a: &Coords, refiner: &str) -> Result<MathiasProduct> {
        let r = &self.params.refiners[refiner];
        let mut out = p.clone();
        for &i in a {
            let before = self.at(p, i);
            let after = r.apply(n, i, &before, self.filter_of(i), self.bound())?;
            if !mathias_leq(&after, &before, self.bound())? || !self.filter_of(i).contains(&after.upper) {
                return Err(Error::Contract(format!("refiner `{refiner}` left coordinate {i} at step {n}")));
            }
            out.set(i, after);
        }
        self.normalize(&out)
    }

    fn code(&mut self, p: &MathiasProduct, idx: usize) -> Result<(MathiasProduct, AnchorCase)> {
        let ob = &self.params.obstacles[idx];
        let counter = self.counters[idx];
        self.counters[idx] += 1;
        let bit = self.z.bit(counter);
        let bound = self.bound();
        let largest = ob
            .b
            .iter()
            .map(|&i| self.filter_of(i))
            .max_by_key(|f| f.rank)
            .expect("obstacles are nonempty");
        let mut term: Option<UpperPartTerm> = None;
        for &i in &ob.b {
            let u = self.at(p, i).upper;
            term = Some(match term {
                None => u,
                Some(t) => t.intersect(&u, &largest.id),
            });
        }
        let term = term.expect("obstacles are nonempty");
        let above = ob.b.iter().filter_map(|&i| self.at(p, i).max_stem()).max().map_or(0, |m| m + 1);
        let point = term.next_at_or_above(above, bound)?;
        let mut q = p.clone();
        for &i in &ob.b {
            q.set(i, self.at(&q, i).push(point)?);
        }
        let others: Vec<usize> = ob.b.iter().copied().filter(|&i| i != ob.anchor).collect();
        if !bit {
            let a = self.at(&q, ob.anchor);
            let b = a.first_free(bound)?;
            q.set(ob.anchor, a.push(b)?);
            for &o in &others {
                let c = self.at(&q, o);
                let x = c.upper.next_at_or_above(b + 1, bound)?;
                q.set(o, c.push(x)?);
            }
        } else {
            let mut top = 0;
            for &o in &others {
                let c = self.at(&q, o);
                let x = c.first_free(bound)?;
                top = top.max(x);
                q.set(o, c.push(x)?);
            }
            let a = self.at(&q, ob.anchor);
            let x = a.upper.next_at_or_above(top + 1, bound)?;
            q.set(ob.anchor, a.push(x)?);
        }
        Ok((
            self.normalize(&q)?,
            AnchorCase::Coding {
                obstacle: idx,
                counter,
                point,
                bit,
            },
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn names(
        &mut self,
        n: usize,
        p: &MathiasProduct,
        a0: &Coords,
        a1: &Coords,
        sigma: &str,
        step: &mut AnchorStep,
    ) -> Result<(MathiasProduct, NameCase)> {
        let oracle = &self.params.oracle;
        let bound = self.bound();
        let (verdict, touch) = oracle.membership(sigma, a0, a1)?;
        let mut decided = p.clone();
        for &i in &touch {
            if i < self.params.width {
                let c = self.at(&decided, i);
                decided.set(i, c.push(c.first_free(bound)?)?);
            }
        }
        let changed: Coords = touch.iter().copied().filter(|&i| decided.get(i) != p.get(i)).collect();
        self.log.memberships.push(MembershipRecord {
            step: n,
            name: sigma.into(),
            domain: a0.clone(),
            changed: changed.clone(),
        });
        if !changed.is_subset(a0) {
            return Err(Error::Oracle(OracleViolation::Domain {
                step: n,
                coords: changed.difference(a0).copied().collect(),
            }));
        }
        let q = self.normalize(&decided)?;
        if verdict == Membership::InModel {
            return Ok((q, NameCase::InModel));
        }

        let shared: Coords = a0.intersection(a1).copied().collect();
        let mut ctx = RhoContext {
            a0: a0.clone(),
            a1: a1.clone(),
            ..RhoContext::default()
        };
        for &i in a0.union(a1) {
            let c = self.at(&q, i);
            ctx.first_free.insert(i, c.first_free(bound)? as usize);
            if let Some(&x) = c.stem.first() {
                ctx.decided.insert(i, x as usize);
            }
        }
        let rho = oracle.rho_for(sigma, &ctx).map_err(|e| match e {
            Error::Oracle(v) => Error::Oracle(v.at_step(n)),
            other => other,
        })?;
        self.log.rhos.push(RhoRecord { step: n, shared, rho });
        step.rho_anchor = Some(q.clone());

        let script = oracle.scripts.get(sigma).ok_or_else(|| Error::Input(format!("no script for `{sigma}`")))?;
        let (sigma_yes, tau_want) = (script.sigma_yes, script.tau_yes);
        let (s_atom, t_atom) = (rho.sigma, rho.tau);
        let mut q1 = self.force(&q, &s_atom, sigma_yes)?;
        if a0.contains(&t_atom.coord) {
            q1 = self.force(&q1, &t_atom, tau_want)?;
        }
        let q1 = self.normalize(&q1)?;
        let Some(vs) = self.probe(&q1, &s_atom) else {
            return Err(Run::refused(n, "rho in sigma stays undecided".into()));
        };
        let vt = self.probe(&q1, &t_atom);
        if vt != Some(vs) {
            let q2 = self.normalize(&self.force(&q1, &t_atom, !vs)?)?;
            if self.probe(&q2, &t_atom) != Some(!vs) {
                return Err(self.refuse(n, &q2, &t_atom, "cannot decide rho in tau against sigma"));
            }
            self.log_verdicts(n, &q2, &[s_atom, t_atom]);
            return Ok((q2, NameCase::Opposite));
        }

        let own: Coords = a0.difference(a1).copied().collect();
        let mut spliced = q1.clone();
        for i in 0..self.params.width {
            if own.contains(&i) {
                match q.get(i) {
                    Some(c) => spliced.set(i, c.clone()),
                    None => {
                        spliced.parts.remove(&i);
                    }
                }
            }
        }
        if self.probe(&spliced, &s_atom).is_some() {
            return Err(Error::Oracle(OracleViolation::RhoContract { step: n, atom: s_atom }));
        }
        let finished = self.normalize(&self.force(&spliced, &s_atom, !vs)?)?;
        if self.probe(&finished, &s_atom) != Some(!vs) {
            return Err(self.refuse(n, &finished, &s_atom, "cannot decide rho in sigma against tau"));
        }
        self.log_verdicts(n, &finished, &[s_atom, t_atom]);
        Ok((finished, NameCase::Spliced))
    }
}

fn common_points(p: &MathiasProduct, b: &Coords) -> BTreeSet<u64> {
    let stems: Vec<&[u64]> = b
        .iter()
        .map(|&i| p.get(i).map_or(&[][..], |c| c.stem.as_slice()))
        .collect();
    intersect_all(&stems).into_iter().collect()
}

pub fn construct(params: &AnchorParams) -> Result<AnchorTrace> {
    params.validate()?;
    let mut run = Run {
        params,
        filters: params.filter_table()?,
        fresh: params.fresh()?,
        z: SecretStream::new(params.z.clone())?,
        log: OracleLog::default(),
        counters: vec![0; params.obstacles.len()],
    };
    let mut p = MathiasProduct::top(params.width);
    let mut seq = vec![p.clone()];
    let mut steps = Vec::with_capacity(params.steps);
    for n in 0..params.steps {
        let task = params.schedule.task(n).expect("validated");
        let mut step = AnchorStep {
            task: task.clone(),
            case: AnchorCase::Dense,
            first_mentions: Coords::new(),
            extraneous: Vec::new(),
            rho_anchor: None,
        };
        let next = match &task {
            Task::MeetDense { a, refiner } => run.dense(n, &p, a, refiner)?,
            Task::Obstacle { b } => {
                let idx = params.obstacles.iter().position(|o| &o.b == b).expect("validated");
                let (next, case) = run.code(&p, idx)?;
                step.case = case;
                next
            }
            Task::SeparateNames { a0, a1, sigma, .. } => {
                let (next, case) = run.names(n, &p, a0, a1, sigma, &mut step)?;
                step.case = AnchorCase::Names { case };
                next
            }
            Task::Wide { .. } => unreachable!("rejected by validation"),
        };
        step.first_mentions = next.support().difference(&p.support()).copied().collect();
        for (idx, ob) in params.obstacles.iter().enumerate() {
            let before = common_points(&p, &ob.b);
            let coded = match step.case {
                AnchorCase::Coding { obstacle, point, .. } if obstacle == idx => Some(point),
                _ => None,
            };
            for x in common_points(&next, &ob.b).difference(&before) {
                if Some(*x) != coded {
                    step.extraneous.push(Extraneous { obstacle: idx, point: *x });
                }
            }
        }
        p = next;
        seq.push(p.clone());
        steps.push(step);
    }
    Ok(AnchorTrace {
        seq,
        steps,
        oracle_log: run.log,
    })
}

/// Reads one bit per shared point of the obstacle's reals, skipping the
/// declared extraneous points.
pub fn decode(reals: &BTreeMap<usize, Vec<u64>>, anchor: usize, extraneous: &BTreeSet<u64>) -> Result<Vec<bool>> {
    decode_with(reals, anchor, extraneous, 0)
}

/// Decoding without an extraneous-point record: unreadable points among
/// the first `|B|` shared points are dropped, so the output agrees with the
/// coded bits after a bounded prefix.
pub fn decode_trace_free(reals: &BTreeMap<usize, Vec<u64>>, anchor: usize) -> Result<Vec<bool>> {
    decode_with(reals, anchor, &BTreeSet::new(), reals.len())
}

fn decode_with(reals: &BTreeMap<usize, Vec<u64>>, anchor: usize, skip: &BTreeSet<u64>, tolerance: usize) -> Result<Vec<bool>> {
    let own = reals
        .get(&anchor)
        .ok_or_else(|| Error::Input(format!("no real for the anchor {anchor}")))?;
    if reals.len() < 2 {
        return Err(Error::Input("decoding needs the anchor and at least one other real".into()));
    }
    let all: Vec<&[u64]> = reals.values().map(Vec::as_slice).collect();
    let mut out = Vec::new();
    for (seen, x) in intersect_all(&all).into_iter().filter(|x| !skip.contains(x)).enumerate() {
        let Some(a) = successor(own, x) else { break };
        let mut rest = Vec::with_capacity(reals.len() - 1);
        for (_, r) in reals.iter().filter(|(i, _)| **i != anchor) {
            match successor(r, x) {
                Some(y) => rest.push(y),
                None => return Ok(out),
            }
        }
        if rest.iter().all(|&y| a < y) {
            out.push(false);
        } else if rest.iter().all(|&y| a > y) {
            out.push(true);
        } else if seen >= tolerance {
            return Err(Error::MalformedCoding(format!(
                "after {x} the anchor continues with {a} against {rest:?}"
            )));
        }
    }
    Ok(out)
}

pub fn obstacle_reals(trace: &AnchorTrace, b: &Coords) -> BTreeMap<usize, Vec<u64>> {
    let last = trace.last();
    b.iter().map(|&i| (i, last.get(i).map(|c| c.stem.clone()).unwrap_or_default())).collect()
}

/// Every structural check on a finished trace; returns the failures.
pub fn audit(params: &AnchorParams, trace: &AnchorTrace) -> Result<Vec<String>> {
    let mut fails = audit_orders(params, trace)?;
    fails.extend(audit_coding(params, trace));
    Ok(fails)
}

/// Definition of conditions, filter membership, uniformity and descent.
pub fn audit_orders(params: &AnchorParams, trace: &AnchorTrace) -> Result<Vec<String>> {
    let bound = params.search_bound;
    let fresh = params.fresh()?;
    let table = params.filter_table()?;
    let mut fails = Vec::new();
    for (n, p) in trace.seq.iter().enumerate() {
        for (i, c) in &p.parts {
            if let Err(e) = c.validate(bound) {
                fails.push(format!("condition {n}, coordinate {i}: {e}"));
            }
            if !table[&params.coord_filters[*i]].contains(&c.upper) {
                fails.push(format!("condition {n}, coordinate {i}: upper part leaves its filter"));
            }
        }
        if params.mode == AnchorMode::Uniform && !is_uniform(p) {
            fails.push(format!("condition {n} is not uniform"));
        }
        if n > 0 {
            let below = p.parts.keys().chain(trace.seq[n - 1].parts.keys()).try_fold(true, |ok, &i| {
                let (lo, hi) = (p.at(i, &fresh[i]), trace.seq[n - 1].at(i, &fresh[i]));
                Ok::<_, Error>(ok && mathias_leq(&lo, &hi, bound)?)
            })?;
            if !below {
                fails.push(format!("condition {n} is not below its predecessor"));
            }
        }
    }
    Ok(fails)
}

/// Coding points above the stems, extraneous points only at first mentions,
/// and exact decoding.
pub fn audit_coding(params: &AnchorParams, trace: &AnchorTrace) -> Vec<String> {
    let mut fails = Vec::new();
    if trace.seq.len() != trace.steps.len() + 1 {
        fails.push("chain and step records differ in length".to_string());
        return fails;
    }
    for (n, s) in trace.steps.iter().enumerate() {
        if let AnchorCase::Coding { obstacle, point, .. } = s.case {
            let prev = &trace.seq[n];
            let top = params.obstacles[obstacle]
                .b
                .iter()
                .filter_map(|&i| prev.get(i).and_then(MathiasCondition::max_stem))
                .max();
            if top.is_some_and(|m| point <= m) {
                fails.push(format!("step {n}: coding point {point} not above the obstacle's stems"));
            }
        }
        for e in &s.extraneous {
            if s.first_mentions.is_disjoint(&params.obstacles[e.obstacle].b) {
                fails.push(format!(
                    "step {n}: extraneous point {} for obstacle {} without a first mention",
                    e.point, e.obstacle
                ));
            }
        }
    }
    for (idx, ob) in params.obstacles.iter().enumerate() {
        let skip = trace.extraneous_for(idx);
        if skip.len() > ob.b.len() {
            fails.push(format!("obstacle {idx}: {} extraneous points", skip.len()));
        }
        let mut scanned = BTreeSet::new();
        for n in 0..trace.steps.len() {
            let before = common_points(&trace.seq[n], &ob.b);
            for x in common_points(&trace.seq[n + 1], &ob.b).difference(&before) {
                let coded = matches!(trace.steps[n].case, AnchorCase::Coding { obstacle, point, .. } if obstacle == idx && point == *x);
                if !coded {
                    scanned.insert(*x);
                }
            }
        }
        if scanned != skip {
            fails.push(format!("obstacle {idx}: recorded extraneous points {skip:?}, found {scanned:?}"));
        }
        let want = trace.coding_bits(idx);
        match decode(&obstacle_reals(trace, &ob.b), ob.anchor, &skip) {
            Ok(got) if got == want => {}
            Ok(got) => fails.push(format!("obstacle {idx}: decoded {got:?}, coded {want:?}")),
            Err(e) => fails.push(format!("obstacle {idx}: {e}")),
        }
    }
    fails
}

/// The chain as the oracle audit sees it.
pub struct MathiasChain<'a> {
    pub seq: &'a [MathiasProduct],
    pub anchors: BTreeMap<usize, &'a MathiasProduct>,
    pub fresh: Vec<MathiasCondition>,
    pub bound: u64,
}

impl<'a> MathiasChain<'a> {
    pub fn of_trace(params: &AnchorParams, trace: &'a AnchorTrace) -> Result<Self> {
        Ok(MathiasChain {
            seq: &trace.seq,
            anchors: trace
                .steps
                .iter()
                .enumerate()
                .filter_map(|(n, s)| s.rho_anchor.as_ref().map(|a| (n, a)))
                .collect(),
            fresh: params.fresh()?,
            bound: params.search_bound,
        })
    }
}

struct OwnedMathiasView {
    cond: MathiasProduct,
    fresh: Vec<MathiasCondition>,
}

impl Probe for OwnedMathiasView {
    fn read(&self, coord: usize, pos: usize) -> Option<bool> {
        MathiasView {
            cond: &self.cond,
            fresh: &self.fresh,
        }
        .read(coord, pos)
    }
}

impl AuditSubject for MathiasChain<'_> {
    fn chain_len(&self) -> usize {
        self.seq.len()
    }

    fn view(&self, index: usize) -> Box<dyn Probe + '_> {
        Box::new(MathiasView {
            cond: &self.seq[index],
            fresh: &self.fresh,
        })
    }

    fn shared_extensions(&self, record: &RhoRecord) -> Vec<Box<dyn Probe + '_>> {
        let Some(anchor) = self.anchors.get(&record.step) else {
            return Vec::new();
        };
        let mut out: Vec<Box<dyn Probe + '_>> = Vec::new();
        for &i in &record.shared {
            let c = anchor.at(i, &self.fresh[i]);
            let Ok(x) = c.first_free(self.bound) else { continue };
            let mut grown = (*anchor).clone();
            if let Ok(pushed) = c.push(x) {
                grown.set(i, pushed);
            }
            let mut shrunk = (*anchor).clone();
            shrunk.set(
                i,
                MathiasCondition {
                    upper: c.upper.exclude(x),
                    ..c.clone()
                },
            );
            for cond in [grown, shrunk] {
                out.push(Box::new(OwnedMathiasView {
                    cond,
                    fresh: self.fresh.clone(),
                }));
            }
        }
        out
    }
}

/// Two coordinates: a cofinite one and one carrying `filter`, with a single
/// obstacle coded `rounds` times.
pub fn cohen_mathias_demo(z: ZSource, rounds: usize, filter: FilterRep) -> Result<(AnchorParams, AnchorTrace)> {
    let cof = FilterRep::cofinite();
    let filters = if filter.id == cof.id {
        vec![cof.clone()]
    } else {
        vec![cof.clone(), filter.clone()]
    };
    let mut tasks = Vec::with_capacity(3 * rounds);
    for _ in 0..rounds {
        tasks.push(Task::MeetDense {
            a: coords([0]),
            refiner: "least".into(),
        });
        tasks.push(Task::MeetDense {
            a: coords([1]),
            refiner: "least".into(),
        });
        tasks.push(Task::Obstacle { b: coords([0, 1]) });
    }
    let params = AnchorParams {
        mode: AnchorMode::PerFilter,
        width: 2,
        filters,
        coord_filters: vec![cof.id, filter.id],
        obstacles: vec![AnchoredObstacle {
            b: coords([0, 1]),
            anchor: 0,
        }],
        refiners: [("least".to_string(), MathiasRefiner::LeastPoint)].into(),
        oracle: ScriptedOracle::new("none"),
        steps: tasks.len(),
        schedule: Schedule::explicit(tasks),
        z,
        search_bound: default_bound(),
    };
    let trace = construct(&params)?;
    Ok((params, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathias::{Generator, SEARCH_BOUND};
    use crate::requirements::{oracle_audit, Corruption, NameScript, TauMode};

    fn dense(a: &[usize], r: &str) -> Task {
        Task::MeetDense {
            a: coords(a.iter().copied()),
            refiner: r.into(),
        }
    }

    fn ob(b: &[usize]) -> Task {
        Task::Obstacle { b: coords(b.iter().copied()) }
    }

    fn params(mode: AnchorMode, width: usize, obstacles: Vec<(Vec<usize>, usize)>, tasks: Vec<Task>, z: &str) -> AnchorParams {
        AnchorParams {
            mode,
            width,
            filters: vec![FilterRep::cofinite()],
            coord_filters: vec!["cofinite".into(); width],
            obstacles: obstacles
                .into_iter()
                .map(|(b, anchor)| AnchoredObstacle { b: coords(b), anchor })
                .collect(),
            refiners: [
                ("least".to_string(), MathiasRefiner::LeastPoint),
                (
                    "mix".to_string(),
                    MathiasRefiner::Seeded {
                        seed: 5,
                        max_points: 2,
                        max_skip: 3,
                        shrink: true,
                    },
                ),
            ]
            .into(),
            oracle: ScriptedOracle::new("none"),
            steps: tasks.len(),
            schedule: Schedule::explicit(tasks),
            z: ZSource::Bits(z.into()),
            search_bound: SEARCH_BOUND,
        }
    }

    fn check(p: &AnchorParams) -> AnchorTrace {
        let t = construct(p).unwrap();
        let fails = audit(p, &t).unwrap();
        assert!(fails.is_empty(), "{fails:?}");
        t
    }

    #[test]
    fn zero_steps_are_trivial() {
        for mode in [AnchorMode::Uniform, AnchorMode::PerFilter] {
            let t = check(&params(mode, 3, vec![(vec![0, 1], 0)], vec![], ""));
            assert_eq!(t.last(), &MathiasProduct::top(3));
        }
    }

    #[test]
    fn two_codings_hand_checked() {
        let p = params(AnchorMode::Uniform, 3, vec![(vec![0, 1], 0)], vec![ob(&[0, 1]), ob(&[0, 1])], "01");
        let t = check(&p);
        let r = t.reals(3);
        let shared = intersect_all(&[&r[0], &r[1]]);
        assert_eq!(shared.len(), 2);
        assert!(successor(&r[0], shared[0]) < successor(&r[1], shared[0]));
        assert!(successor(&r[0], shared[1]) > successor(&r[1], shared[1]));
        assert_eq!(decode(&obstacle_reals(&t, &coords([0, 1])), 0, &BTreeSet::new()).unwrap(), vec![false, true]);
    }

    #[test]
    fn decode_example() {
        let reals: BTreeMap<usize, Vec<u64>> = [(0, vec![3, 4, 9]), (1, vec![3, 6, 9, 11])].into();
        assert_eq!(decode(&reals, 0, &BTreeSet::new()).unwrap(), vec![false]);
        let mixed: BTreeMap<usize, Vec<u64>> = [(0, vec![3, 5]), (1, vec![3, 4]), (2, vec![3, 6])].into();
        assert!(matches!(decode(&mixed, 0, &BTreeSet::new()), Err(Error::MalformedCoding(_))));
    }

    #[test]
    fn dense_only_extraneous_points_need_first_mentions() {
        let tasks = vec![dense(&[0], "least"), dense(&[1], "least"), dense(&[2], "least"), dense(&[0, 2], "mix"), dense(&[1, 2], "mix")];
        let p = params(AnchorMode::Uniform, 3, vec![(vec![0, 1], 0)], tasks, "");
        let t = check(&p);
        let ex = &t.steps[1].extraneous;
        assert_eq!(ex, &vec![Extraneous { obstacle: 0, point: 0 }]);
        assert!(t.steps[3..].iter().all(|s| s.extraneous.is_empty()));
    }

    #[test]
    fn extraneous_points_are_skipped() {
        let mut tasks = vec![dense(&[0], "least"), dense(&[1], "least")];
        for _ in 0..6 {
            tasks.extend([ob(&[0, 1]), dense(&[0, 2], "mix"), dense(&[1, 2], "mix")]);
        }
        let p = params(AnchorMode::Uniform, 3, vec![(vec![0, 1], 0)], tasks, "011010");
        let t = check(&p);
        let skip = t.extraneous_for(0);
        assert_eq!(skip, [0].into());
        let reals = obstacle_reals(&t, &coords([0, 1]));
        assert_eq!(decode(&reals, 0, &skip).unwrap(), t.coding_bits(0));
        let free = decode_trace_free(&reals, 0).unwrap();
        let want = t.coding_bits(0);
        assert!(free.len() >= want.len() && free.len() - want.len() <= 2);
        assert_eq!(free[free.len() - want.len()..], want[..]);
    }

    #[test]
    fn overlapping_obstacles_roundtrip() {
        let obstacles = vec![(vec![0, 1], 1), (vec![1, 2], 2), (vec![0, 2, 3], 0)];
        let reg = vec![
            ob(&[0, 1]),
            dense(&[0, 2], "mix"),
            ob(&[1, 2]),
            dense(&[1, 3], "mix"),
            ob(&[0, 2, 3]),
            dense(&[0], "least"),
        ];
        for mode in [AnchorMode::Uniform, AnchorMode::PerFilter] {
            let mut p = params(mode, 4, obstacles.clone(), vec![], "");
            p.schedule = Schedule::round_robin(reg.clone(), reg.len(), 3).unwrap();
            p.steps = 60;
            p.z = ZSource::Seed(8);
            let t = check(&p);
            for idx in 0..3 {
                assert!(t.coding_bits(idx).len() >= 9);
            }
        }
    }

    #[test]
    fn per_filter_codes_on_the_larger_filter() {
        let evens = FilterRep::new("evens", [Generator::evens()], 1).unwrap();
        let mut p = params(AnchorMode::PerFilter, 2, vec![(vec![0, 1], 0)], vec![], "");
        p.filters.push(evens);
        p.coord_filters[1] = "evens".into();
        let tasks = vec![dense(&[0], "mix"), dense(&[1], "mix"), ob(&[0, 1]), dense(&[0], "mix"), ob(&[0, 1])];
        p.steps = tasks.len();
        p.schedule = Schedule::explicit(tasks);
        p.z = ZSource::Bits("10".into());
        let t = check(&p);
        for (n, s) in t.steps.iter().enumerate() {
            if let AnchorCase::Coding { point, .. } = s.case {
                assert_eq!(point % 2, 0);
                let prev = &t.seq[n];
                assert!(prev.parts.values().all(|c| c.max_stem().is_none_or(|m| point > m)));
            }
        }
    }

    #[test]
    fn uniform_rejects_mixed_filters_and_per_filter_needs_a_chain() {
        let mut p = params(AnchorMode::Uniform, 2, vec![(vec![0, 1], 0)], vec![], "");
        p.filters.push(FilterRep::new("evens", [Generator::evens()], 1).unwrap());
        p.coord_filters[1] = "evens".into();
        assert!(matches!(construct(&p), Err(Error::Input(_))));
        p.mode = AnchorMode::PerFilter;
        p.filters.push(FilterRep::new("thirds", [Generator::new_residue(3, 0).unwrap()], 2).unwrap());
        assert!(matches!(construct(&p), Err(Error::Input(_))));
    }

    #[test]
    fn modes_agree_on_a_single_cofinite_filter() {
        let mut tasks = Vec::new();
        for _ in 0..8 {
            tasks.extend([dense(&[0, 2], "mix"), ob(&[0, 1]), dense(&[1], "mix")]);
        }
        let u = params(AnchorMode::Uniform, 3, vec![(vec![0, 1], 1)], tasks, "10110010");
        let f = AnchorParams {
            mode: AnchorMode::PerFilter,
            ..u.clone()
        };
        let (tu, tf) = (check(&u), check(&f));
        let b = coords([0, 1]);
        let du = decode(&obstacle_reals(&tu, &b), 1, &tu.extraneous_for(0)).unwrap();
        let df = decode(&obstacle_reals(&tf, &b), 1, &tf.extraneous_for(0)).unwrap();
        assert_eq!(du, df);
        assert_eq!(du.len(), 8);
    }

    #[test]
    fn demo_roundtrips() {
        let evens = FilterRep::new("evens", [Generator::evens()], 1).unwrap();
        let (_, t) = cohen_mathias_demo(ZSource::Bits("1".into()), 1, evens.clone()).unwrap();
        let reals = obstacle_reals(&t, &coords([0, 1]));
        assert_eq!(decode(&reals, 0, &t.extraneous_for(0)).unwrap(), vec![true]);
        let (p, t) = cohen_mathias_demo(ZSource::Seed(3), 20, evens.clone()).unwrap();
        assert!(audit(&p, &t).unwrap().is_empty());
        let z = SecretStream::seeded(3);
        let want: Vec<bool> = (0..20).map(|k| z.bit(k)).collect();
        assert_eq!(decode(&obstacle_reals(&t, &coords([0, 1])), 0, &t.extraneous_for(0)).unwrap(), want);
        let (_, t) = cohen_mathias_demo(ZSource::Bits(String::new()), 0, evens).unwrap();
        assert!(decode(&obstacle_reals(&t, &coords([0, 1])), 0, &BTreeSet::new()).unwrap().is_empty());
    }

    fn names_params(membership: Membership, tau: TauMode, sigma_yes: bool, tau_yes: bool, corruption: Corruption) -> AnchorParams {
        let tasks = vec![
            dense(&[0, 2], "mix"),
            dense(&[1, 2], "mix"),
            Task::SeparateNames {
                a0: coords([0, 2]),
                a1: coords([1, 2]),
                sigma: "s".into(),
                tau: "t".into(),
            },
            ob(&[0, 1]),
            dense(&[0, 2], "mix"),
        ];
        let mut p = params(AnchorMode::Uniform, 3, vec![(vec![0, 1], 0)], tasks, "1");
        let script = NameScript {
            membership,
            tau,
            tau_yes,
            sigma_yes,
        };
        p.oracle = ScriptedOracle::new("names")
            .with("s", script.clone())
            .with("t", script)
            .corrupted(corruption);
        p
    }

    #[test]
    fn name_cases() {
        use Membership::*;
        let cases = [
            (InModel, TauMode::Shared, true, true, NameCase::InModel),
            (NotInModel, TauMode::Shared, true, false, NameCase::Opposite),
            (NotInModel, TauMode::Shared, true, true, NameCase::Spliced),
            (NotInModel, TauMode::DecidedNow, true, true, NameCase::Spliced),
            (NotInModel, TauMode::DecidedNow, false, true, NameCase::Opposite),
            (NotInModel, TauMode::FreeLater, true, true, NameCase::Spliced),
        ];
        for mode in [AnchorMode::Uniform, AnchorMode::PerFilter] {
            for (m, tau, sy, ty, want) in cases {
                let mut p = names_params(m, tau, sy, ty, Corruption::None);
                p.mode = mode;
                let t = check(&p);
                assert_eq!(t.steps[2].case, AnchorCase::Names { case: want }, "{tau:?} {sy} {ty}");
                let subject = MathiasChain::of_trace(&p, &t).unwrap();
                let v = oracle_audit(&t.oracle_log, &p.oracle, &subject);
                assert!(v.passed(), "{want:?} {v:?}");
            }
        }
    }

    #[test]
    fn corrupted_oracles_are_caught() {
        let p = names_params(Membership::NotInModel, TauMode::Shared, true, true, Corruption::ExtendOutsideDomain);
        assert!(matches!(construct(&p), Err(Error::Oracle(OracleViolation::Domain { .. }))));
        let p = names_params(Membership::NotInModel, TauMode::Shared, true, true, Corruption::RhoInsideJ);
        assert!(matches!(construct(&p), Err(Error::Oracle(OracleViolation::RhoContract { .. }))));
    }
}
