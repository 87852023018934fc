//! Ready-made engine configurations and the shipped oracle scripts.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohen::obstacle::ObstacleParams;
use crate::cohen::pair::PairParams;
use crate::cohen::{cohen_up_to, Cohen, CohenPoset, CohenProjection, CohenRefiner, ObstacleFamily, ZSource};
use crate::error::{Error, Result};
use crate::mathias::anchor::{AnchorMode, AnchorParams, AnchoredObstacle};
use crate::mathias::oscillation::OscParams;
use crate::mathias::{default_bound, FilterRep, Generator, MathiasRefiner};
use crate::order::{coords, Coords};
use crate::projection::{
    cone_compose, projection_from_name_table, BooleanAlgebra, ConeIsomorphism, FinitePoset,
    FiniteProjection, GenericNameTable, Projection,
};
use crate::requirements::{Corruption, Membership, NameScript, Schedule, ScriptedOracle, TauMode, Task};
use crate::wide::retrace::WideParams;

/// Obstacle family as read from a file. Anchors default to each obstacle's
/// least coordinate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObstacleFile {
    pub width: usize,
    pub obstacles: Vec<Coords>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filters: Option<Vec<FilterRep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord_filters: Option<Vec<String>>,
}

impl ObstacleFile {
    pub fn new(width: usize, obstacles: Vec<Coords>) -> Self {
        ObstacleFile {
            width,
            obstacles,
            anchors: None,
            filters: None,
            coord_filters: None,
        }
    }

    pub fn family(&self) -> Result<ObstacleFamily> {
        ObstacleFamily::new(self.width, self.obstacles.clone())
    }

    pub fn anchored(&self) -> Result<Vec<AnchoredObstacle>> {
        self.obstacles
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let anchor = match &self.anchors {
                    Some(a) => *a
                        .get(k)
                        .ok_or_else(|| Error::Input(format!("no anchor for obstacle {k}")))?,
                    None => *b.iter().next().ok_or_else(|| Error::Input("empty obstacle".into()))?,
                };
                Ok(AnchoredObstacle { b: b.clone(), anchor })
            })
            .collect()
    }
}

/// Knobs shared by every preset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Preset {
    pub steps: usize,
    pub z: ZSource,
    pub seed: u64,
    pub gap: Option<usize>,
    pub obstacles: Option<ObstacleFile>,
}

fn script(membership: Membership, tau: TauMode, sigma_yes: bool, tau_yes: bool) -> NameScript {
    NameScript {
        membership,
        tau,
        tau_yes,
        sigma_yes,
    }
}

/// Every name script shipped with the crate.
pub fn shipped_oracle() -> ScriptedOracle {
    use Membership::*;
    ScriptedOracle::new("shipped")
        .with("in-model", script(InModel, TauMode::Shared, true, true))
        .with("shared-same", script(NotInModel, TauMode::Shared, true, true))
        .with("shared-opposite", script(NotInModel, TauMode::Shared, true, false))
        .with("decided", script(NotInModel, TauMode::DecidedNow, true, true))
        .with("open", script(NotInModel, TauMode::FreeLater, true, true))
        .with("pinned", script(NotInModel, TauMode::PinnedByTag, true, true))
}

pub fn corrupted_oracles() -> Vec<ScriptedOracle> {
    [Corruption::FlipOnStronger, Corruption::RhoInsideJ, Corruption::ExtendOutsideDomain]
        .into_iter()
        .map(|c| shipped_oracle().corrupted(c))
        .collect()
}

/// Inclusion-maximal subsets of the index set containing no obstacle.
pub fn maximal_admissible(family: &ObstacleFamily) -> Result<Vec<Coords>> {
    if family.width > 16 {
        return Err(Error::Capability("maximal admissible sets are enumerated only up to 16 coordinates".into()));
    }
    let admissible: Vec<u32> = (0u32..1 << family.width)
        .filter(|&m| family.admits(&mask_coords(m)))
        .collect();
    Ok(admissible
        .iter()
        .filter(|&&m| !admissible.iter().any(|&n| n != m && n & m == m))
        .map(|&m| mask_coords(m))
        .collect())
}

fn mask_coords(m: u32) -> Coords {
    coords((0..32).filter(|i| m >> i & 1 == 1))
}

/// Ordered pairs of maximal admissible sets differing both ways.
fn crossing_pairs(maximal: &[Coords]) -> Vec<(Coords, Coords)> {
    let mut out = Vec::new();
    for a in maximal {
        for b in maximal {
            if !a.is_subset(b) && !b.is_subset(a) {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

fn round_robin(registry: Vec<Task>, preset: &Preset) -> Result<Schedule> {
    let gap = preset.gap.unwrap_or(registry.len());
    Schedule::round_robin(registry, gap, preset.seed)
}

fn names_tasks(maximal: &[Coords], scripts: &[&str]) -> Vec<Task> {
    let mut out = Vec::new();
    for (k, (a0, a1)) in crossing_pairs(maximal).into_iter().enumerate() {
        let shared = !a0.is_disjoint(&a1);
        let pool: Vec<&&str> = scripts.iter().filter(|s| shared || !s.starts_with("shared") && **s != "in-model").collect();
        if pool.is_empty() {
            continue;
        }
        out.push(Task::SeparateNames {
            a0,
            a1,
            sigma: pool[k % pool.len()].to_string(),
            tau: "t".into(),
        });
    }
    out
}

pub fn pair(preset: &Preset) -> PairParams {
    PairParams {
        projections: [CohenProjection::Identity, CohenProjection::EvenBits],
        refiners: [
            CohenRefiner::Seeded {
                seed: preset.seed,
                max_len: 3,
            },
            CohenRefiner::Seeded {
                seed: preset.seed ^ 0x5555,
                max_len: 4,
            },
        ],
        z: preset.z.clone(),
        rounds: preset.steps,
    }
}

fn default_obstacles(width: usize, obstacles: &[&[usize]]) -> ObstacleFile {
    ObstacleFile::new(width, obstacles.iter().map(|b| coords(b.iter().copied())).collect())
}

pub fn obstacle(preset: &Preset) -> Result<ObstacleParams> {
    let file = preset
        .obstacles
        .clone()
        .unwrap_or_else(|| default_obstacles(5, &[&[0, 1], &[1, 2], &[2, 3, 4]]));
    let family = file.family()?;
    let maximal = maximal_admissible(&family)?;
    let mut registry: Vec<Task> = family.obstacles.iter().map(|b| Task::Obstacle { b: b.clone() }).collect();
    registry.extend(maximal.iter().map(|a| Task::MeetDense {
        a: a.clone(),
        refiner: "mix".into(),
    }));
    registry.extend(names_tasks(&maximal, &["in-model", "shared-same", "shared-opposite", "open"]));
    Ok(ObstacleParams {
        projections: vec![CohenProjection::Identity; family.width],
        family,
        refiners: BTreeMap::from([(
            "mix".to_string(),
            CohenRefiner::Seeded {
                seed: preset.seed,
                max_len: 3,
            },
        )]),
        oracle: shipped_oracle(),
        schedule: round_robin(registry, preset)?,
        z: preset.z.clone(),
        steps: preset.steps,
    })
}

/// The wide engine looks one task ahead, so its schedule is an explicit
/// cycle through the four branches over crossing pairs.
pub fn wide(preset: &Preset) -> Result<WideParams> {
    let file = preset.obstacles.clone().unwrap_or_else(|| default_obstacles(3, &[&[0, 1]]));
    let family = file.family()?;
    let pairs: Vec<(Coords, Coords)> = crossing_pairs(&maximal_admissible(&family)?)
        .into_iter()
        .filter(|(a, b)| !a.is_disjoint(b))
        .collect();
    if pairs.is_empty() {
        return Err(Error::Input("the wide preset needs two overlapping maximal sets".into()));
    }
    let names = ["in-model", "open", "decided", "pinned"];
    let tasks = (0..=preset.steps)
        .map(|n| {
            let (a0, a1) = pairs[(n / 4) % pairs.len()].clone();
            Task::Wide {
                a0,
                a1,
                refiner: "mix".into(),
                sigma: names[n % 4].into(),
                tau: "t".into(),
            }
        })
        .collect();
    Ok(WideParams {
        projections: vec![CohenProjection::Identity; family.width],
        family,
        refiners: BTreeMap::from([(
            "mix".to_string(),
            CohenRefiner::Seeded {
                seed: preset.seed,
                max_len: 3,
            },
        )]),
        oracle: shipped_oracle(),
        schedule: Schedule::explicit(tasks),
        z: preset.z.clone(),
        steps: preset.steps,
    })
}

pub fn oscillation(preset: &Preset) -> OscParams {
    OscParams {
        filter: FilterRep::new("evens", [Generator::evens()], 1).expect("the evens filter is valid"),
        refiners_p: vec![
            MathiasRefiner::Seeded {
                seed: preset.seed,
                max_points: 3,
                max_skip: 2,
                shrink: true,
            },
            MathiasRefiner::LeastPoint,
        ],
        refiners_q: vec![MathiasRefiner::Seeded {
            seed: preset.seed ^ 0x5555,
            max_points: 2,
            max_skip: 3,
            shrink: false,
        }],
        z: preset.z.clone(),
        rounds: preset.steps,
        search_bound: default_bound(),
    }
}

/// The filter chain used when no filters are supplied.
pub fn filter_chain() -> Vec<FilterRep> {
    vec![
        FilterRep::cofinite(),
        FilterRep::new("evens", [Generator::evens()], 1).expect("valid"),
        FilterRep::new("sixes", [Generator::evens(), Generator::Residue { modulus: 3, residue: 0 }], 2).expect("valid"),
    ]
}

pub fn anchored(preset: &Preset, mode: AnchorMode) -> Result<AnchorParams> {
    let file = preset.obstacles.clone().unwrap_or_else(|| default_obstacles(4, &[&[0, 1], &[1, 2, 3]]));
    let family = file.family()?;
    let maximal = maximal_admissible(&family)?;
    let (filters, coord_filters) = match (mode, &file.filters, &file.coord_filters) {
        (_, Some(f), Some(c)) => (f.clone(), c.clone()),
        (AnchorMode::Uniform, _, _) => (vec![FilterRep::cofinite()], vec!["cofinite".to_string(); family.width]),
        (AnchorMode::PerFilter, _, _) => {
            let chain = filter_chain();
            let ids = (0..family.width).map(|i| chain[i % chain.len()].id.clone()).collect();
            (chain, ids)
        }
    };
    let mut registry: Vec<Task> = family.obstacles.iter().map(|b| Task::Obstacle { b: b.clone() }).collect();
    registry.extend(maximal.iter().map(|a| Task::MeetDense {
        a: a.clone(),
        refiner: "mix".into(),
    }));
    registry.extend(names_tasks(&maximal, &["in-model", "shared-same", "shared-opposite", "open"]));
    Ok(AnchorParams {
        mode,
        width: family.width,
        filters,
        coord_filters,
        obstacles: file.anchored()?,
        refiners: BTreeMap::from([(
            "mix".to_string(),
            MathiasRefiner::Seeded {
                seed: preset.seed,
                max_points: 1,
                max_skip: 2,
                shrink: true,
            },
        )]),
        oracle: shipped_oracle(),
        schedule: round_robin(registry, preset)?,
        z: preset.z.clone(),
        steps: preset.steps,
        search_bound: default_bound(),
    })
}

/// Truncated Cohen projections and a few small maps between finite posets,
/// each small enough for exhaustive axiom checks.
pub fn finite_projections() -> Result<Vec<(String, FiniteProjection)>> {
    let mut out = Vec::new();
    let cohen = |depth: usize| -> Result<(FinitePoset, Vec<Cohen>)> {
        let els = cohen_up_to(depth);
        Ok((FinitePoset::enumerate(&CohenPoset, &els)?, els))
    };
    for depth in 0..=3 {
        let (q, _) = cohen(depth)?;
        out.push((format!("cohen-identity-{depth}"), FiniteProjection::identity(q)));
    }
    for (qd, pd) in [(1, 1), (3, 2), (5, 3)] {
        let (q, qe) = cohen(qd)?;
        let (p, pe) = cohen(pd)?;
        let map = qe
            .iter()
            .map(|c| {
                let img = CohenProjection::EvenBits.map(c);
                pe.iter().position(|e| *e == img).ok_or_else(|| Error::Input("image outside the target".into()))
            })
            .collect::<Result<Vec<_>>>()?;
        out.push((format!("cohen-even-bits-{qd}-{pd}"), FiniteProjection::new(q, p, map)?));
    }
    for (n, table) in scripted_name_tables(6, 11).into_iter().enumerate() {
        let (_, pi) = projection_from_name_table(&table.source, &table.algebra, &table.table)?;
        let iso = cone_isomorphism(&pi.algebra, pi.p0)?;
        out.push((format!("name-table-{n}-composed"), cone_compose(&pi, &iso)?));
    }
    Ok(out)
}

/// A name for the generic of a smaller algebra, read off an atom map.
#[derive(Debug, Clone)]
pub struct ScriptedTable {
    pub source: FinitePoset,
    pub source_elements: Vec<u32>,
    pub algebra: BooleanAlgebra,
    pub table: GenericNameTable,
}

/// Tables over the forcing poset of a 2 to 4 atom algebra naming the
/// generic of a 1 to 3 atom algebra through a random atom map. When the map
/// misses atoms the name lives below a proper `p0`.
pub fn scripted_name_tables(count: usize, seed: u64) -> Vec<ScriptedTable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=4u32);
            let m = rng.random_range(1..=3u32);
            let atoms: Vec<u32> = (0..n).map(|_| rng.random_range(0..m)).collect();
            let big = BooleanAlgebra::new(n).expect("small algebra");
            let small = BooleanAlgebra::new(m).expect("small algebra");
            let (source, source_elements) = big.forcing_poset().expect("nonempty");
            let image = |q: u32| (0..n).filter(|a| q >> a & 1 == 1).fold(0u32, |acc, a| acc | 1 << atoms[a as usize]);
            let rows = source_elements
                .iter()
                .map(|&q| small.elements().filter(|&y| small.leq(image(q), y)).collect())
                .collect();
            ScriptedTable {
                source,
                source_elements,
                algebra: small,
                table: GenericNameTable { rows },
            }
        })
        .collect()
}

/// Collapses the cone below `p0` onto the algebra on `p0`'s atoms.
pub fn cone_isomorphism(domain: &BooleanAlgebra, p0: u32) -> Result<ConeIsomorphism> {
    let atoms: Vec<u32> = (0..domain.atoms()).filter(|a| p0 >> a & 1 == 1).collect();
    let codomain = BooleanAlgebra::new(atoms.len() as u32)?;
    let table = domain
        .elements()
        .filter(|&e| domain.leq(e, p0))
        .map(|e| {
            let packed = atoms
                .iter()
                .enumerate()
                .fold(0u32, |acc, (k, &a)| if e >> a & 1 == 1 { acc | 1 << k } else { acc });
            (e, packed)
        })
        .collect();
    Ok(ConeIsomorphism {
        domain: *domain,
        p0,
        codomain,
        table,
    })
}
