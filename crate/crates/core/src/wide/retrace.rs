//! The wide construction: every step serves a dense set and a pair of names,
//! and codes the next secret bit into antichain choices below a coding
//! point. The decoder retraces those choices from the tag columns alone.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};

use crate::cohen::obstacle::{changed_coords, force_atom, membership_refiner, ChainAudit, Relation};
use crate::cohen::{
    Cohen, CohenProduct, CohenProjection, CohenRefiner, CohenView, ObstacleFamily,
    ProductProjection, SecretStream, ZSource,
};
use crate::error::{Error, Result};
use crate::order::{Coords, GeneratedFilter};
use crate::requirements::{
    Atom, Membership, MembershipRecord, OracleLog, OracleViolation, ProbeRecord, refusal, RhoContext,
    RhoRecord, Schedule, ScriptedOracle, Task,
};
use crate::tagged::{self, ProductTagged, Tagged};
use crate::wide::{encode, side_sets, CohenAntichain, Fragment, GammaCohen, Marker, Payload, WidePoset};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideParams {
    pub family: ObstacleFamily,
    pub projections: Vec<CohenProjection>,
    pub refiners: BTreeMap<String, CohenRefiner>,
    pub oracle: ScriptedOracle,
    pub schedule: Schedule,
    pub z: ZSource,
    pub steps: usize,
}

/// Which branch a step took.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WideCase {
    /// `σ` lies in the shared model; codes ♯.
    InModel,
    /// `ρ ∈ τ` already decided; `ρ ∈ σ` decided the other way, codes ♯.
    TauDecided,
    /// `ρ ∉ τ` forced below the ♭ commitment; the fragment goes on the other side.
    TauSeparated,
    /// The ♭ commitment pins `ρ ∈ τ`; `ρ ∉ σ` forced instead, codes ♮.
    TauPinned,
}

/// One recorded link `lower R upper` of the chain behind a step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub lower: ProductTagged,
    pub upper: ProductTagged,
    pub relation: Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideStep {
    pub task: Task,
    pub case: WideCase,
    pub b0: Coords,
    pub b1: Coords,
    pub coding_point: CohenProduct,
    pub payload: Payload,
    pub links: Vec<Link>,
    /// Label of the refiner met and the condition it was applied to.
    pub refined: (String, CohenProduct),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_anchor: Option<CohenProduct>,
}

/// What a decoder needs to start retracing one obstacle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bootstrap {
    pub obstacle: Coords,
    pub start: usize,
    pub b0: Coords,
    pub b1: Coords,
    pub z_prefix: Vec<bool>,
    pub tags: BTreeMap<usize, Cohen>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideTrace {
    pub seq: Vec<ProductTagged>,
    pub steps: Vec<WideStep>,
    pub oracle_log: OracleLog,
    pub bootstraps: Vec<Bootstrap>,
}

const W: GammaCohen = GammaCohen;

fn served(task: &Task) -> Result<(&Coords, &Coords)> {
    match task {
        Task::Wide { a0, a1, .. } => Ok((a0, a1)),
        other => Err(Error::Input(format!("the wide engine cannot serve {other:?}"))),
    }
}

/// `p` with the columns in `j` replaced by the image of `q`.
fn retag(pi: &ProductProjection, p: &CohenProduct, q: &CohenProduct, j: &Coords) -> CohenProduct {
    let mut out = p.clone();
    for &i in j {
        let img = pi.column(q, i);
        if img.is_empty() {
            out.parts.remove(&i);
        } else {
            out.set(i, img);
        }
    }
    out
}

fn lengths(p: &CohenProduct, cols: &Coords) -> Fragment {
    cols.iter().map(|&i| (i, p.get(i).map_or(0, Cohen::len))).collect()
}

/// `p` with each column in `cols` moved to its antichain member for `payload`.
fn code_below(p: &CohenProduct, cols: &Coords, payload: &Payload) -> CohenProduct {
    let k = encode(payload);
    let mut out = p.clone();
    for &i in cols {
        out.set(i, W.member(&p.at(i, &Cohen::top()), &k));
    }
    out
}

fn marker(m: Marker) -> Payload {
    Payload::Marker { marker: m }
}

struct Run<'a> {
    params: &'a WideParams,
    pi: ProductProjection,
    z: SecretStream,
    log: OracleLog,
}

impl Run<'_> {
    fn decide(&self, q: &CohenProduct, atom: &Atom) -> Option<bool> {
        let view = CohenView {
            pi: &self.pi,
            working: q,
        };
        self.params.oracle.decide(&view, atom)
    }

    /// Forces `atom` to `want` and insists the oracle agrees.
    fn force(&self, n: usize, q: &CohenProduct, atom: &Atom, want: bool, what: &str) -> Result<CohenProduct> {
        let out = force_atom(&self.pi, q, atom, want);
        if self.decide(&out, atom) != Some(want) {
            let view = CohenView { pi: &self.pi, working: &out };
            return Err(Error::Oracle(refusal(&self.params.oracle, &view, atom, n, &format!("cannot decide {what}"))));
        }
        Ok(out)
    }

    fn step(&mut self, n: usize, t: &ProductTagged) -> Result<(ProductTagged, WideStep)> {
        let params = self.params;
        let width = params.family.width;
        let task = params.schedule.task(n).expect("schedule length checked");
        task.validate(&params.family)?;
        let Task::Wide {
            a0,
            a1,
            refiner,
            sigma,
            ..
        } = &task
        else {
            return Err(served(&task).unwrap_err());
        };
        let next = params.schedule.task(n + 1).expect("schedule length checked");
        let (na0, na1) = served(&next)?;
        let (b0, b1) = (side_sets(n, a0, width), side_sets(n, a1, width));
        let (nb0, nb1) = (side_sets(n + 1, na0, width), side_sets(n + 1, na1, width));
        let (q, p) = (&t.working, &t.tag);
        let poset = self.pi.poset().clone();

        // q̄: catch up on A0, meet the dense set, settle membership of σ.
        let d = params
            .refiners
            .get(refiner)
            .ok_or_else(|| Error::Input(format!("unknown refiner `{refiner}`")))?
            .on_product(params.schedule.occurrence(n), a0);
        let caught_up = self.pi.refine_below_on(q, p, a0);
        let met = d.refine(&caught_up);
        if !poset.leq_j(&met, &caught_up, a0)? {
            return Err(Error::Contract(format!("refiner `{}` left {a0:?}", d.description)));
        }
        let (verdict, touch) = params.oracle.membership(sigma, a0, a1)?;
        let qbar = membership_refiner(&touch).refine(&met);
        let changed = changed_coords(&met, &qbar);
        self.log.memberships.push(MembershipRecord {
            step: n,
            name: sigma.clone(),
            domain: a0.clone(),
            changed: changed.clone(),
        });
        if !changed.is_subset(a0) {
            return Err(Error::Oracle(OracleViolation::Domain {
                step: n,
                coords: changed.difference(a0).copied().collect(),
            }));
        }

        let start = t.clone();
        let tagged = |working: &CohenProduct, tag: &CohenProduct| Tagged {
            working: working.clone(),
            tag: tag.clone(),
        };
        let strong = |j: &Coords| Relation::StrongOn { j: j.clone() };
        let mut rho_anchor = None;
        let mut atoms = Vec::new();

        let (case, q1, coding_point, mut links) = if verdict == Membership::InModel {
            let pbar = retag(&self.pi, p, &qbar, a0);
            let c = code_below(&pbar, &b0, &marker(Marker::Sharp));
            let links = vec![Link {
                lower: tagged(&qbar, &pbar),
                upper: start.clone(),
                relation: strong(a0),
            }];
            (WideCase::InModel, qbar.clone(), c, links)
        } else {
            let mut ctx = RhoContext {
                a0: a0.clone(),
                a1: a1.clone(),
                steer: b0.clone(),
                ..RhoContext::default()
            };
            for &i in a0.union(a1) {
                let img = self.pi.column(&qbar, i).len();
                let tag_len = p.get(i).map_or(0, Cohen::len);
                ctx.first_free.insert(i, img.max(tag_len));
                if img > 0 {
                    ctx.decided.insert(i, 0);
                }
            }
            for &i in &b0 {
                ctx.tag_end.insert(i, p.get(i).map_or(0, Cohen::len));
            }
            let rho = params.oracle.rho_for(sigma, &ctx).map_err(|e| match e {
                Error::Oracle(v) => Error::Oracle(v.at_step(n)),
                other => other,
            })?;
            self.log.rhos.push(RhoRecord {
                step: n,
                shared: a0.intersection(a1).copied().collect(),
                rho,
            });
            rho_anchor = Some(qbar.clone());
            atoms = vec![rho.sigma, rho.tau];
            if self.decide(&qbar, &rho.sigma).is_some() {
                return Err(Error::Oracle(OracleViolation::RhoContract {
                    step: n,
                    atom: rho.sigma,
                }));
            }

            if let Some(vt) = self.decide(&qbar, &rho.tau) {
                let q1 = self.force(n, &qbar, &rho.sigma, !vt, "rho in sigma")?;
                let pbar = retag(&self.pi, p, &q1, a0);
                let c = code_below(&pbar, &b0, &marker(Marker::Sharp));
                let links = vec![Link {
                    lower: tagged(&q1, &pbar),
                    upper: start.clone(),
                    relation: strong(a0),
                }];
                (WideCase::TauDecided, q1, c, links)
            } else {
                let q_in = self.force(n, &qbar, &rho.sigma, true, "rho in sigma")?;
                let p_in = retag(&self.pi, p, &q_in, a0);
                let flat = code_below(&p_in, &b0, &marker(Marker::Flat));
                let fragment = Payload::Fragment {
                    fragment: lengths(&p_in, &b1),
                };
                let committed = code_below(&flat, &b0, &fragment);
                let first = Link {
                    lower: tagged(&q_in, &committed),
                    upper: start.clone(),
                    relation: strong(a0),
                };

                let candidate = self.pi.refine_below_on(&q_in, &committed, a1);
                let candidate = force_atom(&self.pi, &candidate, &rho.tau, false);
                if self.decide(&candidate, &rho.tau) == Some(false) {
                    let q_star = candidate;
                    let p_star = retag(&self.pi, &committed, &q_star, a1);
                    let fragment = Payload::Fragment {
                        fragment: lengths(&p_star, &b0),
                    };
                    let c = code_below(&p_star, &b1, &fragment);
                    let links = vec![
                        first,
                        Link {
                            lower: tagged(&q_star, &p_star),
                            upper: tagged(&q_in, &committed),
                            relation: strong(a1),
                        },
                    ];
                    (WideCase::TauSeparated, q_star, c, links)
                } else {
                    let own: Coords = a0.difference(a1).copied().collect();
                    let shared: Coords = a0.intersection(a1).copied().collect();
                    let q_mix = poset.splice(&qbar, &q_in, &own)?;
                    let p_mix = retag(&self.pi, &committed, &qbar, &own);
                    let settled = self.pi.refine_below_on(&q_mix, &p_mix, &shared);
                    if self.decide(&settled, &rho.sigma).is_some() {
                        return Err(Error::Oracle(OracleViolation::RhoContract {
                            step: n,
                            atom: rho.sigma,
                        }));
                    }
                    let q1 = self.force(n, &settled, &rho.sigma, false, "rho outside sigma")?;
                    let p3 = retag(&self.pi, &p_mix, &q1, a0);
                    let c = code_below(&p3, &b0, &marker(Marker::Natural));
                    let links = vec![
                        Link {
                            lower: tagged(&q_mix, &p_mix),
                            upper: start.clone(),
                            relation: strong(a0),
                        },
                        Link {
                            lower: tagged(&q1, &p3),
                            upper: tagged(&q_mix, &p_mix),
                            relation: strong(a0),
                        },
                    ];
                    (WideCase::TauPinned, q1, c, links)
                }
            }
        };

        self.z.require(n + 1)?;
        let payload = Payload::Step {
            b0: nb0.clone(),
            b1: nb1,
            z: self.z.bit(n),
            fragment: lengths(&coding_point, &nb0),
        };
        let tag = code_below(&coding_point, &b0, &payload);
        let result = tagged(&q1, &tag);
        let last = links.last().expect("every case records a link").lower.tag.clone();
        links.push(Link {
            lower: result.clone(),
            upper: tagged(&q1, &last),
            relation: Relation::Weak,
        });

        if case == WideCase::TauSeparated {
            let committed = &links[0].lower.tag;
            for &i in &b0 {
                let seen = W.locate(&committed.at(i, &Cohen::top()), &tag.at(i, &Cohen::top()))?;
                if seen == Some(BigUint::from(Marker::Natural.index())) {
                    return Err(Error::Abort(format!(
                        "step {n}: column {i} reads the natural marker below its commitment"
                    )));
                }
            }
        }

        for atom in atoms {
            let verdict = self.decide(&q1, &atom);
            self.log.probes.push(ProbeRecord { step: n, atom, verdict });
        }
        if !tagged::is_valid(&self.pi, &result) {
            return Err(Error::Contract(format!("step {n} produced an invalid tagged pair")));
        }
        let step = WideStep {
            task: task.clone(),
            case,
            b0,
            b1,
            coding_point,
            payload,
            links,
            refined: (d.description.clone(), caught_up),
            rho_anchor,
        };
        Ok((result, step))
    }
}

pub fn construct(params: &WideParams) -> Result<WideTrace> {
    let width = params.family.width;
    if params.projections.len() != width {
        return Err(Error::Input("one projection per coordinate is required".into()));
    }
    if params.steps > 0 {
        params.schedule.require(params.steps + 1)?;
    }
    let mut run = Run {
        params,
        pi: ProductProjection::new(params.projections.clone()),
        z: SecretStream::new(params.z.clone())?,
        log: OracleLog::default(),
    };
    let mut seq = vec![Tagged {
        working: CohenProduct::top(width),
        tag: CohenProduct::top(width),
    }];
    let mut steps = Vec::with_capacity(params.steps);
    for n in 0..params.steps {
        let (next, record) = run.step(n, &seq[n])?;
        seq.push(next);
        steps.push(record);
    }
    let bootstraps = params
        .family
        .obstacles
        .iter()
        .filter_map(|b| bootstrap_for(params, &seq, &steps, &run.z, b))
        .collect();
    Ok(WideTrace {
        seq,
        steps,
        oracle_log: run.log,
        bootstraps,
    })
}

/// Whether step `m` keeps `b` inside both served sets plus side sets.
fn covers(step: &WideStep, b: &Coords) -> bool {
    let Ok((a0, a1)) = served(&step.task) else {
        return false;
    };
    b.iter().all(|i| a0.contains(i) || step.b0.contains(i))
        && b.iter().all(|i| a1.contains(i) || step.b1.contains(i))
}

/// The least start from which every later step covers `b`.
pub fn earliest_start(steps: &[WideStep], b: &Coords) -> usize {
    steps.iter().rposition(|s| !covers(s, b)).map_or(0, |m| m + 1)
}

/// Bootstrap for `b` at `start`, which may be any index up to the trace length.
pub fn bootstrap_at(trace_seq: &[ProductTagged], steps: &[WideStep], z: &SecretStream, b: &Coords, start: usize) -> Option<Bootstrap> {
    if start >= steps.len() {
        return None;
    }
    let s = &steps[start];
    let tag = &trace_seq[start].tag;
    Some(Bootstrap {
        obstacle: b.clone(),
        start,
        b0: s.b0.clone(),
        b1: s.b1.clone(),
        z_prefix: z.take(start),
        tags: s
            .b0
            .iter()
            .map(|&i| (i, tag.at(i, &Cohen::top())))
            .collect(),
    })
}

fn bootstrap_for(params: &WideParams, seq: &[ProductTagged], steps: &[WideStep], z: &SecretStream, b: &Coords) -> Option<Bootstrap> {
    let _ = params;
    bootstrap_at(seq, steps, z, b, earliest_start(steps, b))
}

impl WideTrace {
    pub fn columns(&self) -> BTreeMap<usize, Cohen> {
        self.seq.last().expect("nonempty").tag.parts.clone()
    }

    pub fn bootstrap(&self, b: &Coords) -> Option<&Bootstrap> {
        self.bootstraps.iter().find(|x| &x.obstacle == b)
    }

    pub fn case_counts(&self) -> BTreeMap<WideCase, usize> {
        let mut out = BTreeMap::new();
        for s in &self.steps {
            *out.entry(s.case).or_insert(0) += 1;
        }
        out
    }

    /// Indices of the steps whose overall relation is strong on coordinate `i`.
    pub fn stars_at(&self, i: usize) -> std::collections::BTreeSet<usize> {
        self.steps
            .iter()
            .enumerate()
            .filter(|(_, s)| served(&s.task).is_ok_and(|(a0, _)| a0.contains(&i)))
            .map(|(n, _)| n)
            .collect()
    }

    pub fn filter(&self) -> GeneratedFilter<CohenProduct> {
        let mut f = GeneratedFilter::new(Vec::new());
        for (n, s) in self.steps.iter().enumerate() {
            f.chain.push(self.seq[n].working.clone());
            f.chain.push(s.refined.1.clone());
            f.schedule(s.refined.0.clone(), f.chain.len() - 1);
        }
        f.chain.push(self.seq.last().expect("nonempty").working.clone());
        f
    }

    pub fn audit_subject(&self, params: &WideParams) -> ChainAudit<'_> {
        ChainAudit {
            pi: ProductProjection::new(params.projections.clone()),
            seq: &self.seq,
            anchors: self
                .steps
                .iter()
                .enumerate()
                .filter_map(|(n, s)| s.rho_anchor.as_ref().map(|a| (n, a)))
                .collect(),
        }
    }
}

/// Recomputes the overall step relation `◁*_{A0}` and every recorded link.
pub fn audit_orders(params: &WideParams, trace: &WideTrace) -> Vec<String> {
    let pi = ProductProjection::new(params.projections.clone());
    let check = |lower: &ProductTagged, upper: &ProductTagged, r: &Relation| match r {
        Relation::Weak => tagged::weak_below(&pi, lower, upper),
        Relation::StrongOn { j } => tagged::strong_below_on(&pi, lower, upper, j),
    };
    let mut problems = Vec::new();
    for (n, s) in trace.steps.iter().enumerate() {
        let Ok((a0, _)) = served(&s.task) else {
            problems.push(format!("step {n}: not a wide task"));
            continue;
        };
        let overall = Relation::StrongOn { j: a0.clone() };
        match check(&trace.seq[n + 1], &trace.seq[n], &overall) {
            Ok(true) => {}
            Ok(false) => problems.push(format!("step {n}: the step is not strong on {a0:?}")),
            Err(e) => problems.push(format!("step {n}: {e}")),
        }
        if s.links.first().map(|l| &l.upper) != Some(&trace.seq[n])
            || s.links.last().map(|l| &l.lower) != Some(&trace.seq[n + 1])
        {
            problems.push(format!("step {n}: recorded chain does not join the sequence"));
        }
        for (k, l) in s.links.iter().enumerate() {
            match check(&l.lower, &l.upper, &l.relation) {
                Ok(true) => {}
                Ok(false) => problems.push(format!("step {n}: link {k} fails {:?}", l.relation)),
                Err(e) => problems.push(format!("step {n}: link {k}: {e}")),
            }
        }
    }
    problems
}

/// Re-derives every tag from its coding point and payload, and checks the
/// payload against the schedule and the secret stream.
pub fn audit_coding(params: &WideParams, trace: &WideTrace) -> Vec<String> {
    let width = params.family.width;
    let mut problems = Vec::new();
    let z = match SecretStream::new(params.z.clone()) {
        Ok(z) => z,
        Err(e) => return vec![e.to_string()],
    };
    for (n, s) in trace.steps.iter().enumerate() {
        let Some(Task::Wide { a0: na0, a1: na1, .. }) = params.schedule.task(n + 1) else {
            problems.push(format!("step {n}: no lookahead task"));
            continue;
        };
        let expected = Payload::Step {
            b0: side_sets(n + 1, &na0, width),
            b1: side_sets(n + 1, &na1, width),
            z: z.bit(n),
            fragment: lengths(&s.coding_point, &side_sets(n + 1, &na0, width)),
        };
        if s.payload != expected {
            problems.push(format!("step {n}: payload differs from the schedule and stream"));
        }
        if code_below(&s.coding_point, &s.b0, &s.payload) != trace.seq[n + 1].tag {
            problems.push(format!("step {n}: tag is not determined by the coding point"));
        }
    }
    let cols = trace.columns();
    for b in &params.family.obstacles {
        let Some(boot) = trace.bootstrap(b) else { continue };
        let want = z.take(trace.steps.len())[boot.start..].to_vec();
        match decode(&cols, b, &params.family, boot) {
            Ok(got) if got == want => {}
            Ok(got) => problems.push(format!("obstacle {b:?} retraces to {got:?}, expected {want:?}")),
            Err(e) => problems.push(format!("obstacle {b:?}: {e}")),
        }
    }
    problems
}

fn column<'a>(streams: &'a BTreeMap<usize, Cohen>, i: usize) -> Result<&'a Cohen> {
    streams
        .get(&i)
        .ok_or_else(|| Error::Input(format!("no stream for column {i}")))
}

fn malformed(n: usize, what: impl std::fmt::Display) -> Error {
    Error::MalformedCoding(format!("step {n}: {what}"))
}

/// Reads the antichain member below the first `len` bits of a stream.
fn probe(stream: &Cohen, len: usize, n: usize) -> Result<Option<(BigUint, usize)>> {
    if len > stream.len() {
        return Err(malformed(n, "coded condition runs past its column"));
    }
    Ok(W.read(stream.bits(), len))
}

fn payload_at(stream: &Cohen, len: usize, n: usize) -> Result<Option<(Payload, usize)>> {
    let Some((k, used)) = probe(stream, len, n)? else {
        return Ok(None);
    };
    let payload = crate::wide::decode(&k).ok_or_else(|| malformed(n, "antichain index is not a payload"))?;
    Ok(Some((payload, used)))
}

/// Recovers `z(start), z(start+1), …` from the columns of `obstacle`.
pub fn decode(
    streams: &BTreeMap<usize, Cohen>,
    obstacle: &Coords,
    family: &ObstacleFamily,
    boot: &Bootstrap,
) -> Result<Vec<bool>> {
    if !family.contains_obstacle(obstacle) {
        return Err(Error::Input(format!("{obstacle:?} is not an obstacle")));
    }
    if &boot.obstacle != obstacle {
        return Err(Error::Input("bootstrap belongs to another obstacle".into()));
    }
    let mut lens: BTreeMap<usize, usize> = BTreeMap::new();
    for (&i, tag) in &boot.tags {
        if obstacle.contains(&i) {
            if !column(streams, i)?.extends(tag) {
                return Err(Error::MalformedCoding(format!("bootstrap tag {i} is not on its column")));
            }
            lens.insert(i, tag.len());
        }
    }
    let (mut b0, mut b1) = (boot.b0.clone(), boot.b1.clone());
    let mut out = Vec::new();
    let mut n = boot.start;
    loop {
        let mine: Coords = obstacle.intersection(&b0).copied().collect();
        let Some(&i) = mine.iter().next() else {
            return Err(Error::BootstrapTooEarly(format!(
                "step {n}: no column of {obstacle:?} carries the coding"
            )));
        };
        let si = column(streams, i)?;
        let Some((first, used)) = payload_at(si, lens[&i], n)? else {
            break;
        };
        // Lengths of c_n on the obstacle's part of B0_n.
        let coded: BTreeMap<usize, usize> = match first {
            Payload::Marker { marker: Marker::Sharp } => mine.iter().map(|&k| (k, lens[&k] + used)).collect(),
            Payload::Marker { marker: Marker::Flat } => {
                let Some((inner, used2)) = payload_at(si, lens[&i] + used, n)? else {
                    break;
                };
                let Payload::Fragment { fragment: before } = inner else {
                    return Err(malformed(n, "flat marker without a fragment"));
                };
                let mut committed: BTreeMap<usize, usize> =
                    mine.iter().map(|&k| (k, lens[&k] + used + used2)).collect();
                for &j in obstacle.intersection(&b1) {
                    if !b0.contains(&j) {
                        let len = *before.get(&j).ok_or_else(|| malformed(n, "fragment misses a column"))?;
                        committed.insert(j, len);
                    }
                }
                let Some((k3, used3)) = probe(si, committed[&i], n)? else {
                    break;
                };
                if k3 == BigUint::from(Marker::Natural.index()) {
                    mine.iter().map(|&k| (k, committed[&k] + used3)).collect()
                } else {
                    let Some(&j) = obstacle.intersection(&b1).next() else {
                        return Err(Error::BootstrapTooEarly(format!(
                            "step {n}: no column of {obstacle:?} carries the fragment"
                        )));
                    };
                    let Some((inner, used4)) = payload_at(column(streams, j)?, committed[&j], n)? else {
                        break;
                    };
                    let Payload::Fragment { fragment: star } = inner else {
                        return Err(malformed(n, "expected the fragment on the other side"));
                    };
                    let mut c = BTreeMap::new();
                    for &k in &mine {
                        let len = *star.get(&k).ok_or_else(|| malformed(n, "fragment misses a column"))?;
                        c.insert(k, if b1.contains(&k) { len + used4 } else { len });
                    }
                    c
                }
            }
            _ => return Err(malformed(n, "expected a marker")),
        };
        let Some((step, used5)) = payload_at(si, coded[&i], n)? else {
            break;
        };
        let Payload::Step {
            b0: nb0,
            b1: nb1,
            z,
            fragment,
        } = step
        else {
            return Err(malformed(n, "expected a step payload"));
        };
        out.push(z);
        let mut next = BTreeMap::new();
        for &k in obstacle.intersection(&nb0) {
            let kept = fragment.get(&k).copied();
            if let Some(&c) = coded.get(&k) {
                if kept.is_some_and(|len| len != c) {
                    return Err(malformed(n, "fragment disagrees with the coding point"));
                }
                next.insert(k, c + used5);
            } else {
                next.insert(k, kept.ok_or_else(|| malformed(n, "fragment misses a column"))?);
            }
        }
        lens = next;
        b0 = nb0;
        b1 = nb1;
        n += 1;
    }
    Ok(out)
}
