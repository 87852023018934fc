//! Self-contained trace documents: parameters plus the full run, with
//! replay, decoding and verification.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cohen::obstacle::{self, ChainAudit, ObstacleParams, ObstacleTrace};
use crate::cohen::pair::{self, PairParams, PairTrace};
use crate::cohen::{Cohen, SecretStream, ZSource};
use crate::error::{Error, Result};
use crate::instances::{self, Preset};
use crate::mathias::anchor::{self, AnchorMode, AnchorParams, AnchorTrace, MathiasChain};
use crate::mathias::oscillation::{self, OscParams, OscTrace};
use crate::order::Coords;
use crate::requirements::{oracle_audit, ScriptedOracle};
use crate::wide::retrace::{self, WideParams, WideTrace};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineId {
    /// Two Cohen columns, coded by shared signal rows.
    Pair,
    /// Finite-support Cohen product with an obstacle family.
    Obstacle,
    /// Tags read through a maximal antichain, decodable from a bootstrap.
    Wide,
    /// Two Mathias reals coding by who moves first.
    Oscillation,
    /// Mathias product over one filter with anchored obstacles.
    Anchored,
    /// Mathias product over a chain of filters.
    AnchoredFilters,
}

impl EngineId {
    pub const ALL: [EngineId; 6] = [
        EngineId::Pair,
        EngineId::Obstacle,
        EngineId::Wide,
        EngineId::Oscillation,
        EngineId::Anchored,
        EngineId::AnchoredFilters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EngineId::Pair => "pair",
            EngineId::Obstacle => "obstacle",
            EngineId::Wide => "wide",
            EngineId::Oscillation => "oscillation",
            EngineId::Anchored => "anchored",
            EngineId::AnchoredFilters => "anchored-filters",
        }
    }
}

impl fmt::Display for EngineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EngineId::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Input(format!("unknown engine `{s}`")))
    }
}

/// A finished run of any engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Run {
    Pair(PairParams, PairTrace),
    Obstacle(ObstacleParams, ObstacleTrace),
    Wide(WideParams, WideTrace),
    Oscillation(OscParams, OscTrace),
    Anchored(AnchorParams, AnchorTrace),
}

/// Parameters of any engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunParams {
    Pair(PairParams),
    Obstacle(ObstacleParams),
    Wide(WideParams),
    Oscillation(OscParams),
    Anchored(AnchorParams),
}

impl RunParams {
    pub fn engine(&self) -> EngineId {
        match self {
            RunParams::Pair(_) => EngineId::Pair,
            RunParams::Obstacle(_) => EngineId::Obstacle,
            RunParams::Wide(_) => EngineId::Wide,
            RunParams::Oscillation(_) => EngineId::Oscillation,
            RunParams::Anchored(p) => match p.mode {
                AnchorMode::Uniform => EngineId::Anchored,
                AnchorMode::PerFilter => EngineId::AnchoredFilters,
            },
        }
    }

    /// The shipped configuration of `engine` for the given knobs.
    pub fn preset(engine: EngineId, preset: &Preset) -> Result<Self> {
        Ok(match engine {
            EngineId::Pair => RunParams::Pair(instances::pair(preset)),
            EngineId::Obstacle => RunParams::Obstacle(instances::obstacle(preset)?),
            EngineId::Wide => RunParams::Wide(instances::wide(preset)?),
            EngineId::Oscillation => RunParams::Oscillation(instances::oscillation(preset)),
            EngineId::Anchored => RunParams::Anchored(instances::anchored(preset, AnchorMode::Uniform)?),
            EngineId::AnchoredFilters => RunParams::Anchored(instances::anchored(preset, AnchorMode::PerFilter)?),
        })
    }

    pub fn construct(&self) -> Result<Run> {
        Ok(match self {
            RunParams::Pair(p) => Run::Pair(p.clone(), pair::construct(p)?),
            RunParams::Obstacle(p) => Run::Obstacle(p.clone(), obstacle::construct(p)?),
            RunParams::Wide(p) => Run::Wide(p.clone(), retrace::construct(p)?),
            RunParams::Oscillation(p) => Run::Oscillation(p.clone(), oscillation::construct(p)?),
            RunParams::Anchored(p) => Run::Anchored(p.clone(), anchor::construct(p)?),
        })
    }

    fn to_value(&self) -> Result<Value> {
        Ok(match self {
            RunParams::Pair(p) => serde_json::to_value(p)?,
            RunParams::Obstacle(p) => serde_json::to_value(p)?,
            RunParams::Wide(p) => serde_json::to_value(p)?,
            RunParams::Oscillation(p) => serde_json::to_value(p)?,
            RunParams::Anchored(p) => serde_json::to_value(p)?,
        })
    }

    fn from_value(engine: EngineId, v: Value) -> Result<Self> {
        Ok(match engine {
            EngineId::Pair => RunParams::Pair(from_value(v)?),
            EngineId::Obstacle => RunParams::Obstacle(from_value(v)?),
            EngineId::Wide => RunParams::Wide(from_value(v)?),
            EngineId::Oscillation => RunParams::Oscillation(from_value(v)?),
            EngineId::Anchored | EngineId::AnchoredFilters => {
                let p: AnchorParams = from_value(v)?;
                let want = if engine == EngineId::Anchored {
                    AnchorMode::Uniform
                } else {
                    AnchorMode::PerFilter
                };
                if p.mode != want {
                    return Err(Error::Format(format!("engine `{engine}` with mode {:?}", p.mode)));
                }
                RunParams::Anchored(p)
            }
        })
    }

    pub fn z(&self) -> &ZSource {
        match self {
            RunParams::Pair(p) => &p.z,
            RunParams::Obstacle(p) => &p.z,
            RunParams::Wide(p) => &p.z,
            RunParams::Oscillation(p) => &p.z,
            RunParams::Anchored(p) => &p.z,
        }
    }
}

/// Goes through text so that integer map keys, stored as strings, parse.
fn from_value<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_str(&v.to_string()).map_err(|e| Error::Format(e.to_string()))
}

impl Run {
    pub fn params(&self) -> RunParams {
        match self {
            Run::Pair(p, _) => RunParams::Pair(p.clone()),
            Run::Obstacle(p, _) => RunParams::Obstacle(p.clone()),
            Run::Wide(p, _) => RunParams::Wide(p.clone()),
            Run::Oscillation(p, _) => RunParams::Oscillation(p.clone()),
            Run::Anchored(p, _) => RunParams::Anchored(p.clone()),
        }
    }

    pub fn engine(&self) -> EngineId {
        self.params().engine()
    }

    fn body(&self) -> Result<Value> {
        Ok(match self {
            Run::Pair(_, t) => serde_json::to_value(t)?,
            Run::Obstacle(_, t) => serde_json::to_value(t)?,
            Run::Wide(_, t) => serde_json::to_value(t)?,
            Run::Oscillation(_, t) => serde_json::to_value(t)?,
            Run::Anchored(_, t) => serde_json::to_value(t)?,
        })
    }

    pub fn document(&self) -> Result<TraceDocument> {
        Ok(TraceDocument {
            format_version: FORMAT_VERSION,
            engine: self.engine(),
            params: self.params().to_value()?,
            body: self.body()?,
        })
    }
}

/// On-disk form. Objects serialize with sorted keys, so equal documents
/// are equal byte strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceDocument {
    pub format_version: u32,
    pub engine: EngineId,
    pub params: Value,
    pub body: Value,
}

impl TraceDocument {
    pub fn parse(text: &str) -> Result<Self> {
        let doc: TraceDocument = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if doc.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {}", doc.format_version)));
        }
        Ok(doc)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&serde_json::to_value(self)?)?;
        s.push('\n');
        Ok(s)
    }

    pub fn run(&self) -> Result<Run> {
        let params = RunParams::from_value(self.engine, self.params.clone())?;
        let body = self.body.clone();
        Ok(match params {
            RunParams::Pair(p) => Run::Pair(p, from_value(body)?),
            RunParams::Obstacle(p) => Run::Obstacle(p, from_value(body)?),
            RunParams::Wide(p) => Run::Wide(p, from_value(body)?),
            RunParams::Oscillation(p) => Run::Oscillation(p, from_value(body)?),
            RunParams::Anchored(p) => Run::Anchored(p, from_value(body)?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Coding,
    Orders,
    Oracle,
    /// Rebuilding the run from its parameters reproduces the recorded body.
    Replay,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Coding, Suite::Orders, Suite::Oracle, Suite::Replay];
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Report {
    pub failures: BTreeMap<Suite, Vec<String>>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.failures.values().all(Vec::is_empty)
    }
}

fn oracle_failures(log: &crate::requirements::OracleLog, oracle: &ScriptedOracle, subject: &dyn crate::requirements::AuditSubject) -> Vec<String> {
    let v = oracle_audit(log, oracle, subject);
    v.first_violation.map(|e| vec![e.to_string()]).unwrap_or_default()
}

fn expected_bits(z: &ZSource, range: std::ops::Range<usize>) -> Result<Vec<bool>> {
    let s = SecretStream::new(z.clone())?;
    Ok(range.map(|k| s.bit(k)).collect())
}

fn guard<T>(r: std::thread::Result<T>, what: &str) -> std::result::Result<T, String> {
    r.map_err(|_| format!("{what} check crashed on inconsistent trace data"))
}

fn run_suite(run: &Run, suite: Suite) -> Result<Vec<String>> {
    let out = match (run, suite) {
        (_, Suite::Replay) => {
            let again = run.params().construct()?;
            if again.document()? == run.document()? {
                Vec::new()
            } else {
                vec!["replaying the parameters gives a different run".into()]
            }
        }
        (Run::Pair(p, t), Suite::Coding) => {
            let (c1, c2) = t.final_columns();
            let mut f = pair::audit(p, t).into_iter().filter(|m| m.contains("signal")).collect::<Vec<_>>();
            match pair::decode(&c1, &c2) {
                Ok(bits) if bits == expected_bits(&p.z, 0..t.rounds.len())? => {}
                Ok(bits) => f.push(format!("decoded {} bits that differ from the stream", bits.len())),
                Err(e) => f.push(e.to_string()),
            }
            f
        }
        (Run::Pair(p, t), Suite::Orders) => pair::audit(p, t).into_iter().filter(|m| !m.contains("signal")).collect(),
        (Run::Pair(..), Suite::Oracle) | (Run::Oscillation(..), Suite::Oracle) => Vec::new(),
        (Run::Obstacle(p, t), Suite::Coding) => obstacle::audit_coding(p, t),
        (Run::Obstacle(p, t), Suite::Orders) => obstacle::audit_orders(p, t),
        (Run::Obstacle(p, t), Suite::Oracle) => oracle_failures(&t.oracle_log, &p.oracle, &ChainAudit::of_obstacle_trace(p, t)),
        (Run::Wide(p, t), Suite::Coding) => retrace::audit_coding(p, t),
        (Run::Wide(p, t), Suite::Orders) => retrace::audit_orders(p, t),
        (Run::Wide(p, t), Suite::Oracle) => oracle_failures(&t.oracle_log, &p.oracle, &t.audit_subject(p)),
        (Run::Oscillation(p, t), Suite::Coding) => {
            let a = oscillation::audit(t, p)?;
            let mut f = Vec::new();
            if !a.purity {
                f.push("the reals share points other than the coding points".into());
            }
            if !a.roundtrip {
                f.push("decoding disagrees with the stream".into());
            }
            f
        }
        (Run::Oscillation(p, t), Suite::Orders) => {
            if oscillation::audit(t, p)?.invariant {
                Vec::new()
            } else {
                vec!["a round is not a valid strengthening".into()]
            }
        }
        (Run::Anchored(p, t), Suite::Coding) => anchor::audit_coding(p, t),
        (Run::Anchored(p, t), Suite::Orders) => anchor::audit_orders(p, t)?,
        (Run::Anchored(p, t), Suite::Oracle) => oracle_failures(&t.oracle_log, &p.oracle, &MathiasChain::of_trace(p, t)?),
    };
    Ok(out)
}

/// Runs the requested suites. Errors while checking count as failures.
pub fn verify(run: &Run, suites: &[Suite]) -> Report {
    let mut report = Report::default();
    for &s in suites {
        let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run_suite(run, s)));
        let failures = match guard(r, &format!("{s:?}")) {
            Ok(Ok(f)) => f,
            Ok(Err(e)) => vec![e.to_string()],
            Err(msg) => vec![msg],
        };
        report.failures.insert(s, failures);
    }
    report
}

/// Bits recovered from the trace body, with the bits the stream says
/// should come out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    pub bits: Vec<bool>,
    pub expected: Vec<bool>,
    /// Index of the first decoded bit in the stream.
    pub offset: usize,
}

impl Decoded {
    pub fn matches(&self) -> bool {
        self.bits == self.expected
    }
}

pub fn parse_coords(s: &str) -> Result<Coords> {
    let inner = s.trim().trim_start_matches(['{', '[']).trim_end_matches(['}', ']']);
    inner
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().map_err(|_| Error::Input(format!("bad coordinate `{t}`"))))
        .collect()
}

fn cols_of(map: BTreeMap<usize, Cohen>, b: &Coords) -> BTreeMap<usize, Cohen> {
    map.into_iter().filter(|(i, _)| b.contains(i)).collect()
}

pub fn decode(run: &Run, obstacle: Option<&Coords>) -> Result<Decoded> {
    let need = || obstacle.ok_or_else(|| Error::Input("this engine needs --obstacle".into()));
    match run {
        Run::Pair(p, t) => {
            let (c1, c2) = t.final_columns();
            let bits = pair::decode(&c1, &c2)?;
            Ok(Decoded {
                expected: expected_bits(&p.z, 0..bits.len().max(t.rounds.len()))?,
                bits,
                offset: 0,
            })
        }
        Run::Oscillation(p, t) => {
            let (a, b) = t.last();
            let bits = oscillation::osc_decode(&a.stem, &b.stem)?;
            Ok(Decoded {
                expected: expected_bits(&p.z, 0..bits.len().max(t.rounds.len()))?,
                bits,
                offset: 0,
            })
        }
        Run::Obstacle(p, t) => {
            let b = need()?;
            let bits = obstacle::decode(&cols_of(t.columns(), b), b, &p.family)?;
            let count = t.expected_bits().get(b).map_or(0, Vec::len);
            Ok(Decoded {
                expected: expected_bits(&p.z, 0..count)?,
                bits,
                offset: 0,
            })
        }
        Run::Wide(p, t) => {
            let b = need()?;
            let boot = t
                .bootstrap(b)
                .ok_or_else(|| Error::BootstrapTooEarly(format!("no bootstrap for {b:?}")))?;
            let bits = retrace::decode(&cols_of(t.columns(), b), b, &p.family, boot)?;
            Ok(Decoded {
                expected: expected_bits(&p.z, boot.start..t.steps.len())?,
                bits,
                offset: boot.start,
            })
        }
        Run::Anchored(p, t) => {
            let b = need()?;
            let idx = p
                .obstacles
                .iter()
                .position(|o| &o.b == b)
                .ok_or_else(|| Error::Input(format!("{b:?} is not an obstacle")))?;
            let reals = anchor::obstacle_reals(t, b);
            let bits = anchor::decode(&reals, p.obstacles[idx].anchor, &t.extraneous_for(idx))?;
            let count = t
                .steps
                .iter()
                .filter(|s| matches!(s.case, anchor::AnchorCase::Coding { obstacle, .. } if obstacle == idx))
                .count();
            Ok(Decoded {
                expected: expected_bits(&p.z, 0..count)?,
                bits,
                offset: 0,
            })
        }
    }
}

/// Obstacles a run can be decoded on, in declaration order.
pub fn obstacles(run: &Run) -> Vec<Coords> {
    match run {
        Run::Pair(..) | Run::Oscillation(..) => Vec::new(),
        Run::Obstacle(p, _) => p.family.obstacles.clone(),
        Run::Wide(p, _) => p.family.obstacles.clone(),
        Run::Anchored(p, _) => p.obstacles.iter().map(|o| o.b.clone()).collect(),
    }
}

pub fn bits_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn unique<T: Ord + Clone>(items: &[T]) -> BTreeSet<T> {
    items.iter().cloned().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{self, Preset};

    fn preset(steps: usize) -> Preset {
        Preset {
            steps,
            z: ZSource::Seed(7),
            seed: 3,
            gap: None,
            obstacles: None,
        }
    }

    fn all_runs(steps: usize) -> Vec<Run> {
        let p = preset(steps);
        [
            RunParams::Pair(instances::pair(&p)),
            RunParams::Obstacle(instances::obstacle(&p).unwrap()),
            RunParams::Wide(instances::wide(&p).unwrap()),
            RunParams::Oscillation(instances::oscillation(&p)),
            RunParams::Anchored(instances::anchored(&p, AnchorMode::Uniform).unwrap()),
            RunParams::Anchored(instances::anchored(&p, AnchorMode::PerFilter).unwrap()),
        ]
        .into_iter()
        .map(|r| r.construct().unwrap())
        .collect()
    }

    #[test]
    fn every_preset_verifies_and_roundtrips() {
        for run in all_runs(40) {
            let doc = run.document().unwrap();
            let text = doc.to_text().unwrap();
            let back = TraceDocument::parse(&text).unwrap();
            assert_eq!(back.to_text().unwrap(), text);
            let run2 = back.run().unwrap();
            assert_eq!(run2, run);
            let report = verify(&run2, &Suite::ALL);
            assert!(report.passed(), "{}: {:?}", run.engine(), report.failures);
            let obs = obstacles(&run);
            if obs.is_empty() {
                assert!(decode(&run, None).unwrap().matches());
            }
            for b in obs {
                let d = decode(&run, Some(&b)).unwrap();
                assert!(d.matches(), "{} {b:?}", run.engine());
            }
        }
    }

    #[test]
    fn stream_is_stored_as_its_source() {
        let run = RunParams::Pair(instances::pair(&preset(5))).construct().unwrap();
        let text = run.document().unwrap().to_text().unwrap();
        assert!(text.contains("\"Seed\": 7") || text.contains("\"seed\": 7"), "{text}");
    }

    #[test]
    fn engine_names_parse() {
        for e in EngineId::ALL {
            assert_eq!(e.name().parse::<EngineId>().unwrap(), e);
        }
        assert!("nope".parse::<EngineId>().is_err());
        assert_eq!(parse_coords("{0, 1}").unwrap(), crate::order::coords([0, 1]));
        assert_eq!(parse_coords("2,3").unwrap(), crate::order::coords([2, 3]));
    }

    #[test]
    fn wrong_versions_are_rejected() {
        let run = RunParams::Pair(instances::pair(&preset(2))).construct().unwrap();
        let mut doc = run.document().unwrap();
        doc.format_version = 99;
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(TraceDocument::parse(&text), Err(Error::Format(_))));
    }
}
