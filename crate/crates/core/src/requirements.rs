//! Task schedules with bounded-gap recurrence and the scripted decision
//! oracle that stands in for forcing-name decisions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohen::ObstacleFamily;
use crate::error::{Error, Result};
use crate::order::Coords;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Task {
    MeetDense {
        a: Coords,
        refiner: String,
    },
    Obstacle {
        b: Coords,
    },
    SeparateNames {
        a0: Coords,
        a1: Coords,
        sigma: String,
        tau: String,
    },
    /// Everything the wide construction handles in one step.
    Wide {
        a0: Coords,
        a1: Coords,
        refiner: String,
        sigma: String,
        tau: String,
    },
}

impl Task {
    /// Checks the task against the obstacle family.
    pub fn validate(&self, family: &ObstacleFamily) -> Result<()> {
        let check_a = |a: &Coords| {
            if a.iter().any(|&i| i >= family.width) {
                return Err(Error::Input(format!("{a:?} leaves the index set")));
            }
            if !family.admits(a) {
                return Err(Error::Input(format!("{a:?} contains an obstacle")));
            }
            Ok(())
        };
        match self {
            Task::MeetDense { a, .. } => check_a(a),
            Task::Obstacle { b } => {
                if family.contains_obstacle(b) {
                    Ok(())
                } else {
                    Err(Error::Input(format!("{b:?} is not an obstacle")))
                }
            }
            Task::SeparateNames { a0, a1, .. } | Task::Wide { a0, a1, .. } => {
                check_a(a0)?;
                check_a(a1)
            }
        }
    }
}

/// A deterministic task sequence; `task(n)` never runs earlier steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// Blocks of the registry, each block a seeded permutation.
    RoundRobin {
        registry: Vec<Task>,
        gap: usize,
        seed: u64,
    },
    Explicit {
        tasks: Vec<Task>,
    },
}

impl Schedule {
    pub fn round_robin(registry: Vec<Task>, gap: usize, seed: u64) -> Result<Self> {
        if registry.is_empty() {
            return Err(Error::Input("empty registry".into()));
        }
        let distinct: BTreeSet<&Task> = registry.iter().collect();
        if distinct.len() != registry.len() {
            return Err(Error::Input("registry entries must be distinct".into()));
        }
        if gap < registry.len() {
            return Err(Error::InfeasibleGap {
                gap,
                size: registry.len(),
            });
        }
        Ok(Schedule::RoundRobin {
            registry,
            gap,
            seed,
        })
    }

    pub fn explicit(tasks: Vec<Task>) -> Self {
        Schedule::Explicit { tasks }
    }

    fn block_order(registry: &[Task], gap: usize, seed: u64, block: usize) -> Vec<usize> {
        let r = registry.len();
        let mut order: Vec<usize> = (0..r).collect();
        // independent shuffles keep every gap below 2r; otherwise reuse one
        let salt = if gap + 1 >= 2 * r { block as u64 } else { 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        order.shuffle(&mut rng);
        order
    }

    pub fn task(&self, n: usize) -> Option<Task> {
        match self {
            Schedule::RoundRobin {
                registry,
                gap,
                seed,
            } => {
                let r = registry.len();
                let order = Schedule::block_order(registry, *gap, *seed, n / r);
                Some(registry[order[n % r]].clone())
            }
            Schedule::Explicit { tasks } => tasks.get(n).cloned(),
        }
    }

    /// Number of earlier steps serving the same task.
    pub fn occurrence(&self, n: usize) -> usize {
        match self {
            Schedule::RoundRobin { registry, .. } => n / registry.len(),
            Schedule::Explicit { tasks } => {
                let t = &tasks[n];
                tasks[..n].iter().filter(|x| *x == t).count()
            }
        }
    }

    pub fn len_hint(&self) -> Option<usize> {
        match self {
            Schedule::RoundRobin { .. } => None,
            Schedule::Explicit { tasks } => Some(tasks.len()),
        }
    }

    pub fn require(&self, steps: usize) -> Result<()> {
        match self.len_hint() {
            Some(len) if len < steps => Err(Error::Input(format!(
                "explicit schedule has {len} tasks but {steps} steps were requested"
            ))),
            _ => Ok(()),
        }
    }

    pub fn gap(&self) -> Option<usize> {
        match self {
            Schedule::RoundRobin { gap, .. } => Some(*gap),
            Schedule::Explicit { .. } => None,
        }
    }

    pub fn registry(&self) -> Vec<Task> {
        match self {
            Schedule::RoundRobin { registry, .. } => registry.clone(),
            Schedule::Explicit { tasks } => {
                let set: BTreeSet<Task> = tasks.iter().cloned().collect();
                set.into_iter().collect()
            }
        }
    }

    /// Largest distance between consecutive occurrences (and from the start)
    /// of each registered task within the first `steps` steps. Tasks that never
    /// occur report `steps + 1`.
    pub fn max_gap(&self, steps: usize) -> BTreeMap<Task, usize> {
        let mut last: BTreeMap<Task, Option<usize>> =
            self.registry().into_iter().map(|t| (t, None)).collect();
        let mut worst: BTreeMap<Task, usize> = last.keys().map(|t| (t.clone(), 0)).collect();
        for n in 0..steps {
            let Some(t) = self.task(n) else { break };
            let prev = last.get(&t).copied().flatten();
            let d = match prev {
                Some(p) => n - p,
                None => n + 1,
            };
            let w = worst.entry(t.clone()).or_insert(0);
            *w = (*w).max(d);
            last.insert(t, Some(n));
        }
        for (t, l) in &last {
            let tail = match l {
                Some(p) => steps - p,
                None => steps + 1,
            };
            let w = worst.get_mut(t).expect("registered");
            *w = (*w).max(tail);
        }
        worst
    }
}

/// A statement about one bit of one generic column: holds iff the bit at
/// `pos` of column `coord` equals `yes_bit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Atom {
    pub coord: usize,
    pub pos: usize,
    pub yes_bit: bool,
}

/// Read access to whatever a condition decides about the generic.
pub trait Probe {
    /// The decided value at `(coord, pos)`, if any.
    fn read(&self, coord: usize, pos: usize) -> Option<bool>;
}

impl Atom {
    pub fn eval(&self, view: &dyn Probe) -> Option<bool> {
        view.read(self.coord, self.pos).map(|b| b == self.yes_bit)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Membership {
    InModel,
    NotInModel,
}

/// How the name `ρ` relates to `τ` at the moment it is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauMode {
    /// Decidable by strengthening a coordinate both sides share.
    Shared,
    /// Already decided by the anchor.
    DecidedNow,
    /// Still open, and can later be decided either way.
    FreeLater,
    /// Open, but pinned by whatever the tag codes next on a steering column.
    PinnedByTag,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameScript {
    pub membership: Membership,
    pub tau: TauMode,
    /// Verdict on `ρ ∈ τ` requested when the engine decides it freely.
    pub tau_yes: bool,
    /// Verdict on `ρ ∈ σ` requested when the engine decides it freely.
    pub sigma_yes: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Corruption {
    #[default]
    None,
    /// Answers flip once a condition decides more than the probed bit.
    FlipOnStronger,
    /// Picks `ρ` on a coordinate of the shared domain.
    RhoInsideJ,
    /// Membership decisions strengthen a coordinate outside the domain.
    ExtendOutsideDomain,
}

/// What the engine tells the oracle when asking for `ρ`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RhoContext {
    pub a0: Coords,
    pub a1: Coords,
    pub steer: Coords,
    /// Least undecided position per coordinate.
    pub first_free: BTreeMap<usize, usize>,
    /// Some decided position per coordinate, where one exists.
    pub decided: BTreeMap<usize, usize>,
    /// Length of the current tag column, where the engine has tags.
    pub tag_end: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rho {
    pub sigma: Atom,
    pub tau: Atom,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptedOracle {
    pub id: String,
    pub scripts: BTreeMap<String, NameScript>,
    #[serde(default)]
    pub corruption: Corruption,
}

impl ScriptedOracle {
    pub fn new(id: impl Into<String>) -> Self {
        ScriptedOracle {
            id: id.into(),
            scripts: BTreeMap::new(),
            corruption: Corruption::None,
        }
    }

    pub fn with(mut self, name: impl Into<String>, script: NameScript) -> Self {
        self.scripts.insert(name.into(), script);
        self
    }

    pub fn corrupted(mut self, corruption: Corruption) -> Self {
        self.corruption = corruption;
        self
    }

    fn script(&self, name: &str) -> Result<&NameScript> {
        self.scripts
            .get(name)
            .ok_or_else(|| Error::Input(format!("no script for name `{name}`")))
    }

    /// Whether the name lands in the shared model, and which coordinates the
    /// deciding extension strengthens. A name on `a0 ⊆ a1` is always in.
    pub fn membership(&self, name: &str, a0: &Coords, a1: &Coords) -> Result<(Membership, Coords)> {
        let script = self.script(name)?;
        let verdict = if a0.is_subset(a1) {
            Membership::InModel
        } else {
            script.membership
        };
        let mut touch: Coords = a0.iter().next().copied().into_iter().collect();
        if self.corruption == Corruption::ExtendOutsideDomain {
            if let Some(out) = (0..).find(|i| !a0.contains(i)) {
                touch.insert(out);
            }
        }
        Ok((verdict, touch))
    }

    pub fn rho_for(&self, name: &str, ctx: &RhoContext) -> Result<Rho> {
        let script = self.script(name)?;
        let shared: Coords = ctx.a0.intersection(&ctx.a1).copied().collect();
        let refuse = |what: &str| {
            Error::Oracle(OracleViolation::Refused {
                step: None,
                detail: format!("{} cannot supply {what} for `{name}`", self.id),
            })
        };
        let sigma_coord = if self.corruption == Corruption::RhoInsideJ {
            shared.iter().next().or_else(|| ctx.a0.iter().next()).copied()
        } else {
            ctx.a0.difference(&ctx.a1).next().copied()
        }
        .ok_or_else(|| refuse("a coordinate for rho in sigma"))?;
        let free = |c: usize| ctx.first_free.get(&c).copied().unwrap_or(0);
        let sigma = Atom {
            coord: sigma_coord,
            pos: free(sigma_coord),
            yes_bit: true,
        };
        let tau = match script.tau {
            TauMode::Shared => {
                let c = *shared.iter().next().ok_or_else(|| refuse("a shared coordinate"))?;
                Atom {
                    coord: c,
                    pos: free(c),
                    yes_bit: script.tau_yes,
                }
            }
            TauMode::DecidedNow => {
                let (c, pos) = ctx
                    .a1
                    .iter()
                    .find_map(|c| ctx.decided.get(c).map(|p| (*c, *p)))
                    .ok_or_else(|| refuse("a decided statement"))?;
                Atom {
                    coord: c,
                    pos,
                    yes_bit: script.tau_yes,
                }
            }
            TauMode::FreeLater => {
                let c = shared
                    .iter()
                    .chain(ctx.a1.iter().filter(|c| !ctx.a0.contains(c) && !ctx.steer.contains(c)))
                    .next()
                    .copied()
                    .ok_or_else(|| refuse("an open statement"))?;
                let tag = ctx.tag_end.get(&c).copied().unwrap_or(0);
                Atom {
                    coord: c,
                    pos: free(c).max(tag),
                    yes_bit: script.tau_yes,
                }
            }
            TauMode::PinnedByTag => {
                let c = *ctx
                    .a1
                    .intersection(&ctx.steer)
                    .next()
                    .ok_or_else(|| refuse("a steering coordinate"))?;
                Atom {
                    coord: c,
                    pos: ctx.tag_end.get(&c).copied().unwrap_or(0),
                    yes_bit: false,
                }
            }
        };
        Ok(Rho { sigma, tau })
    }

    /// The oracle's answer on an atomic statement at a condition.
    pub fn decide(&self, view: &dyn Probe, atom: &Atom) -> Option<bool> {
        let v = atom.eval(view)?;
        if self.corruption == Corruption::FlipOnStronger
            && view.read(atom.coord, atom.pos + 1).is_some()
        {
            return Some(!v);
        }
        Some(v)
    }

    pub fn sigma_yes(&self, name: &str) -> Result<bool> {
        Ok(self.script(name)?.sigma_yes)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "kebab-case")]
pub enum OracleViolation {
    /// A decided statement changed its verdict at a stronger condition.
    Monotonicity {
        step: usize,
        atom: Atom,
        first: bool,
        later_step: usize,
    },
    /// Some extension inside the shared domain decides `ρ ∈ σ`.
    RhoContract { step: usize, atom: Atom },
    /// A deciding extension changed coordinates outside its domain.
    Domain { step: usize, coords: Coords },
    /// The oracle could not provide a decision the construction needs.
    Refused { step: Option<usize>, detail: String },
}

impl OracleViolation {
    pub fn class(&self) -> &'static str {
        match self {
            OracleViolation::Monotonicity { .. } => "monotonicity",
            OracleViolation::RhoContract { .. } => "rho-contract",
            OracleViolation::Domain { .. } => "domain",
            OracleViolation::Refused { .. } => "refused",
        }
    }

    pub fn at_step(self, step: usize) -> Self {
        match self {
            OracleViolation::Refused { detail, .. } => OracleViolation::Refused {
                step: Some(step),
                detail,
            },
            other => other,
        }
    }
}

impl fmt::Display for OracleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleViolation::Monotonicity {
                step,
                atom,
                first,
                later_step,
            } => write!(
                f,
                "monotonicity: {atom:?} answered {first} at step {step} but not at step {later_step}"
            ),
            OracleViolation::RhoContract { step, atom } => {
                write!(f, "rho contract: {atom:?} decided by a shared-domain extension at step {step}")
            }
            OracleViolation::Domain { step, coords } => {
                write!(f, "domain: step {step} strengthened {coords:?} outside its domain")
            }
            OracleViolation::Refused { step, detail } => match step {
                Some(s) => write!(f, "refused at step {s}: {detail}"),
                None => write!(f, "refused: {detail}"),
            },
        }
    }
}

/// Only the bits up to `atom` on its coordinate: the weakest part of a
/// view that still decides the atom.
struct UpTo<'a> {
    inner: &'a dyn Probe,
    atom: Atom,
}

impl Probe for UpTo<'_> {
    fn read(&self, coord: usize, pos: usize) -> Option<bool> {
        if coord == self.atom.coord && pos > self.atom.pos {
            None
        } else {
            self.inner.read(coord, pos)
        }
    }
}

/// Classifies an oracle that failed to confirm a verdict forced at `view`.
/// If its answer there differs from its answer at the weakest part of the
/// view deciding the atom, the verdict flipped on a stronger condition.
pub fn refusal(oracle: &ScriptedOracle, view: &dyn Probe, atom: &Atom, step: usize, detail: &str) -> OracleViolation {
    let weaker = UpTo { inner: view, atom: *atom };
    match (oracle.decide(&weaker, atom), oracle.decide(view, atom)) {
        (Some(first), Some(later)) if first != later => OracleViolation::Monotonicity {
            step,
            atom: *atom,
            first,
            later_step: step,
        },
        _ => OracleViolation::Refused {
            step: Some(step),
            detail: detail.to_string(),
        },
    }
}

/// Probes recorded while an engine ran.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleLog {
    pub probes: Vec<ProbeRecord>,
    pub rhos: Vec<RhoRecord>,
    pub memberships: Vec<MembershipRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub step: usize,
    pub atom: Atom,
    pub verdict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RhoRecord {
    pub step: usize,
    pub shared: Coords,
    pub rho: Rho,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MembershipRecord {
    pub step: usize,
    pub name: String,
    pub domain: Coords,
    /// Coordinates whose working part changed in the deciding extension.
    pub changed: Coords,
}

/// Engine-specific access the audit needs.
pub trait AuditSubject {
    /// Number of working parts in the chain; index `s + 1` is the working
    /// part after step `s`.
    fn chain_len(&self) -> usize;
    fn view(&self, index: usize) -> Box<dyn Probe + '_>;
    /// Extensions of the step's anchor that only touch `shared`.
    fn shared_extensions(&self, record: &RhoRecord) -> Vec<Box<dyn Probe + '_>>;
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditVerdict {
    pub probes_checked: usize,
    pub first_violation: Option<OracleViolation>,
}

impl AuditVerdict {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Checks monotonicity, the `ρ` contract and extension domains over every
/// recorded probe, reporting the earliest violation.
pub fn oracle_audit(log: &OracleLog, oracle: &ScriptedOracle, subject: &dyn AuditSubject) -> AuditVerdict {
    let mut found: Vec<(usize, OracleViolation)> = Vec::new();
    for m in &log.memberships {
        let outside: Coords = m.changed.difference(&m.domain).copied().collect();
        if !outside.is_empty() {
            found.push((
                m.step,
                OracleViolation::Domain {
                    step: m.step,
                    coords: outside,
                },
            ));
        }
    }
    for r in &log.rhos {
        for ext in subject.shared_extensions(r) {
            if oracle.decide(ext.as_ref(), &r.rho.sigma).is_some() {
                found.push((
                    r.step,
                    OracleViolation::RhoContract {
                        step: r.step,
                        atom: r.rho.sigma,
                    },
                ));
                break;
            }
        }
    }
    for p in &log.probes {
        let Some(first) = p.verdict else { continue };
        for later in (p.step + 1)..subject.chain_len() {
            let view = subject.view(later);
            if let Some(v) = oracle.decide(view.as_ref(), &p.atom) {
                if v != first {
                    found.push((
                        later,
                        OracleViolation::Monotonicity {
                            step: p.step,
                            atom: p.atom,
                            first,
                            later_step: later,
                        },
                    ));
                    break;
                }
            }
        }
    }
    found.sort_by_key(|(s, _)| *s);
    AuditVerdict {
        probes_checked: log.probes.len(),
        first_violation: found.into_iter().next().map(|(_, v)| v),
    }
}
