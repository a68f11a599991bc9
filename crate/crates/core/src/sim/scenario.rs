//! Scenario documents: schema, dotted-key overrides and validation.
//!
//! Scenarios are TOML. Physical quantities carry their unit in the key name
//! (`dt_s`, `w_gamma_rad_s`, ...). Node ids in `graph.edges` and
//! `drones[].id` are 1-based.
//!
//! ```toml
//! name = "example"
//! seed = 7
//! speed_m_s = 8.0
//! sync_threshold_m = 1.0          # optional
//!
//! [integration]
//! dt_s = 0.01
//! t_end_s = 600.0
//! telemetry_every_ticks = 1       # optional
//!
//! [oscillation]
//! w_gamma_rad_s = 0.6
//! k_a = 1.35                      # or "fit"
//! amplitude_cap_m = 10.0          # optional, defaults to v / w_gamma
//! tau_a_s = 8.0                   # optional, defaults to 5 / w_gamma
//!
//! [consensus]
//! k_u = 0.16
//! r_m = 60.0
//! tau_h = "auto"                  # or a number
//! comm_delay_ticks = 0            # optional
//!
//! [guidance]                      # optional
//! k_e_per_s = 1.0
//! k_n = 1.0
//! omega_max_rad_s = 1.5
//!
//! [graph]
//! edges = [[1, 2]]
//!
//! [wind]                          # optional, plant-only disturbance
//! velocity_m_s = [0.0, 3.5]
//!
//! [initial_sampling]              # optional, for drones without an initial parameter
//! path_parameter_range_m = [0.0, 60.0]
//!
//! [[drones]]
//! id = 1
//! path = { origin_m = [0.0, 0.0], heading_rad = 0.0 }
//! initial_path_parameter_m = 0.0  # or initial_position_m = [x, y]
//! initial_offset_m = 0.0          # optional lateral offset, with initial_path_parameter_m
//! initial_heading_rad = "auto"    # or a number
//! ```

use std::fmt;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer};
use serde::Deserialize;
use thiserror::Error;

use crate::consensus::{auto_tau_h, Saturation};
use crate::controller::ControllerGains;
use crate::graph::Graph;
use crate::gvf::GvfGains;
use crate::oscillation::{epsilon, fit_ka, OscillationConfig};
use crate::path::StraightLinePath;

/// Number of samples used when `k_a = "fit"`.
pub const FIT_SAMPLES: usize = 200;

/// A value that is either given explicitly or derived (`"auto"`).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

/// `k_a`: a number, or `"fit"` to calibrate it at start-up.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KaSetting {
    Fit,
    Value(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumberOrWord {
    Number(f64),
    Word(String),
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(deserializer)? {
            NumberOrWord::Number(v) => Ok(AutoOr::Value(v)),
            NumberOrWord::Word(w) if w == "auto" => Ok(AutoOr::Auto),
            NumberOrWord::Word(w) => Err(de::Error::custom(format!("expected a number or \"auto\", got \"{w}\""))),
        }
    }
}

impl<'de> Deserialize<'de> for KaSetting {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match NumberOrWord::deserialize(deserializer)? {
            NumberOrWord::Number(v) => Ok(KaSetting::Value(v)),
            NumberOrWord::Word(w) if w == "fit" => Ok(KaSetting::Fit),
            NumberOrWord::Word(w) => Err(de::Error::custom(format!("expected a number or \"fit\", got \"{w}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub speed_m_s: f64,
    #[serde(default = "default_sync_threshold")]
    pub sync_threshold_m: f64,
    pub integration: IntegrationSection,
    pub oscillation: OscillationSection,
    pub consensus: ConsensusSection,
    #[serde(default)]
    pub guidance: GuidanceSection,
    #[serde(default)]
    pub graph: GraphSection,
    #[serde(default)]
    pub wind: Option<WindSection>,
    #[serde(default)]
    pub initial_sampling: Option<SamplingSection>,
    pub drones: Vec<DroneSpec>,
}

fn default_sync_threshold() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    #[serde(default = "default_dt")]
    pub dt_s: f64,
    pub t_end_s: f64,
    #[serde(default = "default_every")]
    pub telemetry_every_ticks: usize,
}

fn default_dt() -> f64 {
    0.01
}

fn default_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OscillationSection {
    pub w_gamma_rad_s: f64,
    pub k_a: KaSetting,
    #[serde(default)]
    pub amplitude_cap_m: Option<f64>,
    #[serde(default)]
    pub tau_a_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsensusSection {
    pub k_u: f64,
    pub r_m: f64,
    #[serde(default)]
    pub tau_h: AutoOr,
    #[serde(default)]
    pub comm_delay_ticks: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceSection {
    #[serde(default = "one")]
    pub k_e_per_s: f64,
    #[serde(default = "one")]
    pub k_n: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max_rad_s: f64,
}

fn one() -> f64 {
    1.0
}

fn default_omega_max() -> f64 {
    1.5
}

impl Default for GuidanceSection {
    fn default() -> Self {
        Self {
            k_e_per_s: 1.0,
            k_n: 1.0,
            omega_max_rad_s: default_omega_max(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSection {
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindSection {
    pub velocity_m_s: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub path_parameter_range_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub origin_m: [f64; 2],
    pub heading_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub id: usize,
    pub path: PathSpec,
    #[serde(default)]
    pub speed_m_s: Option<f64>,
    #[serde(default)]
    pub initial_position_m: Option<[f64; 2]>,
    #[serde(default)]
    pub initial_path_parameter_m: Option<f64>,
    #[serde(default)]
    pub initial_offset_m: Option<f64>,
    #[serde(default)]
    pub initial_heading_rad: AutoOr,
    #[serde(default)]
    pub k_e_per_s: Option<f64>,
    #[serde(default)]
    pub k_n: Option<f64>,
}

/// Stand-alone graph document: `nodes = 3` and `edges = [[1, 2], [2, 3]]`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphFile {
    nodes: usize,
    #[serde(default)]
    edges: Vec<[usize; 2]>,
}

/// Parses a graph document with 1-based node ids.
pub fn parse_graph_file(text: &str) -> Result<Graph, ScenarioError> {
    let file: GraphFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
    let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
    Graph::from_one_based(file.nodes, &edges).map_err(|e| ScenarioError::Parse(e.to_string()))
}

/// Errors raised while reading a scenario document.
#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("bad override `{0}`: {1}")]
    Override(String, String),
}

/// One `key=value` override in dotted-key form, e.g. `integration.dt_s=0.5`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Override {
    pub key: String,
    pub value: String,
}

impl Override {
    pub fn parse(spec: &str) -> Result<Self, ScenarioError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| ScenarioError::Override(spec.to_owned(), "expected key=value".into()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ScenarioError::Override(spec.to_owned(), "empty key".into()));
        }
        Ok(Self {
            key: key.to_owned(),
            value: value.trim().to_owned(),
        })
    }

    /// The value as a TOML literal, falling back to a bare string.
    fn toml_value(&self) -> toml::Value {
        toml::from_str::<toml::Table>(&format!("v = {}", self.value))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(self.value.clone()))
    }

    fn apply(&self, root: &mut toml::Table) -> Result<(), ScenarioError> {
        let err = |msg: String| ScenarioError::Override(format!("{}={}", self.key, self.value), msg);
        let parts: Vec<&str> = self.key.split('.').collect();
        let (last, parents) = parts.split_last().expect("non-empty key");
        let mut cursor: &mut toml::Value = root
            .entry(parents.first().copied().unwrap_or(last).to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        if parents.is_empty() {
            *cursor = self.toml_value();
            return Ok(());
        }
        for part in &parents[1..] {
            cursor = match cursor {
                toml::Value::Table(t) => t
                    .entry((*part).to_owned())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new())),
                toml::Value::Array(a) => {
                    let idx: usize = part.parse().map_err(|_| err(format!("`{part}` is not an array index")))?;
                    let len = a.len();
                    a.get_mut(idx).ok_or_else(|| err(format!("index {idx} out of range (len {len})")))?
                }
                _ => return Err(err(format!("`{part}` is not inside a table"))),
            };
        }
        match cursor {
            toml::Value::Table(t) => {
                t.insert((*last).to_owned(), self.toml_value());
            }
            toml::Value::Array(a) => {
                let idx: usize = last.parse().map_err(|_| err(format!("`{last}` is not an array index")))?;
                let len = a.len();
                *a.get_mut(idx).ok_or_else(|| err(format!("index {idx} out of range (len {len})")))? = self.toml_value();
            }
            _ => return Err(err("target is not a table or array".into())),
        }
        Ok(())
    }
}

impl fmt::Display for Override {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.key, self.value)
    }
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        Self::from_toml_str_with_overrides(text, &[])
    }

    /// Parses a document and applies `overrides` to it before deserialising.
    pub fn from_toml_str_with_overrides(text: &str, overrides: &[Override]) -> Result<Self, ScenarioError> {
        let mut doc: toml::Table = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        for o in overrides {
            o.apply(&mut doc)?;
        }
        doc.try_into().map_err(|e: toml::de::Error| ScenarioError::Parse(e.to_string()))
    }

    /// Every violated constraint, empty when the scenario can run.
    pub fn validate(&self) -> Vec<Violation> {
        match self.resolve() {
            Ok(_) => Vec::new(),
            Err(v) => v,
        }
    }

    /// Checks the scenario and turns it into ready-to-run parameters.
    pub fn resolve(&self) -> Result<ResolvedScenario, Vec<Violation>> {
        let mut violations = Vec::new();
        let positive = |name: &str, value: f64, violations: &mut Vec<Violation>| {
            if !(value > 0.0 && value.is_finite()) {
                violations.push(Violation::NotPositive {
                    field: name.to_owned(),
                    value,
                });
            }
        };

        let n = self.drones.len();
        if n == 0 {
            violations.push(Violation::NoDrones);
        }
        let speed = self.speed_m_s;
        positive("speed_m_s", speed, &mut violations);
        positive("sync_threshold_m", self.sync_threshold_m, &mut violations);
        positive("integration.dt_s", self.integration.dt_s, &mut violations);
        positive("integration.t_end_s", self.integration.t_end_s, &mut violations);
        if self.integration.telemetry_every_ticks == 0 {
            violations.push(Violation::NotPositive {
                field: "integration.telemetry_every_ticks".into(),
                value: 0.0,
            });
        }
        let w = self.oscillation.w_gamma_rad_s;
        positive("oscillation.w_gamma_rad_s", w, &mut violations);
        positive("consensus.k_u", self.consensus.k_u, &mut violations);
        positive("consensus.r_m", self.consensus.r_m, &mut violations);
        positive("guidance.k_e_per_s", self.guidance.k_e_per_s, &mut violations);
        positive("guidance.k_n", self.guidance.k_n, &mut violations);
        positive("guidance.omega_max_rad_s", self.guidance.omega_max_rad_s, &mut violations);

        // ids must be exactly 1..=N
        let mut ids: Vec<usize> = self.drones.iter().map(|d| d.id).collect();
        ids.sort_unstable();
        if ids != (1..=n).collect::<Vec<_>>() {
            violations.push(Violation::DroneIds { ids });
        }

        for d in &self.drones {
            if let Some(s) = d.speed_m_s {
                if s != speed {
                    violations.push(Violation::SpeedMismatch { id: d.id, speed: s, common: speed });
                }
            }
            if let Some(k) = d.k_e_per_s {
                positive(&format!("drones[{}].k_e_per_s", d.id), k, &mut violations);
            }
            if let Some(k) = d.k_n {
                positive(&format!("drones[{}].k_n", d.id), k, &mut violations);
            }
            if d.initial_position_m.is_some() && (d.initial_path_parameter_m.is_some() || d.initial_offset_m.is_some()) {
                violations.push(Violation::AmbiguousInitialCondition { id: d.id });
            }
            if d.initial_position_m.is_none() && d.initial_path_parameter_m.is_none() && self.initial_sampling.is_none() {
                violations.push(Violation::MissingInitialCondition { id: d.id });
            }
        }
        if let Some(s) = &self.initial_sampling {
            let [lo, hi] = s.path_parameter_range_m;
            if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
                violations.push(Violation::BadSamplingRange { lo, hi });
            }
        }

        let graph = if n > 0 {
            let edges: Vec<(usize, usize)> = self.graph.edges.iter().map(|e| (e[0], e[1])).collect();
            match Graph::from_one_based(n, &edges) {
                Ok(g) => {
                    for problem in g.check_tree().problems() {
                        violations.push(Violation::Topology(problem));
                    }
                    Some(g)
                }
                Err(e) => {
                    violations.push(Violation::Topology(e.to_string()));
                    None
                }
            }
        } else {
            None
        };

        let base_ok = speed > 0.0 && w > 0.0 && speed.is_finite() && w.is_finite();
        let k_a = match self.oscillation.k_a {
            KaSetting::Value(k) => {
                if !(k > 1.0 && k.is_finite()) {
                    violations.push(Violation::KaTooSmall { k_a: k });
                }
                k
            }
            KaSetting::Fit if base_ok => match fit_ka(speed, w, FIT_SAMPLES) {
                Ok(fit) => fit.k_a,
                Err(e) => {
                    violations.push(Violation::Other(e.to_string()));
                    f64::NAN
                }
            },
            KaSetting::Fit => f64::NAN,
        };

        let max_amplitude = speed / w;
        let cap = self.oscillation.amplitude_cap_m.unwrap_or(max_amplitude);
        if base_ok && !(cap >= 0.0 && cap <= max_amplitude * (1.0 + 1e-12)) {
            violations.push(Violation::AmplitudeCapInfeasible { cap, max: max_amplitude });
        }
        let tau_a = self.oscillation.tau_a_s.unwrap_or(5.0 / w);
        if self.oscillation.tau_a_s.is_some() {
            positive("oscillation.tau_a_s", tau_a, &mut violations);
        }

        let auto_tau = if base_ok && k_a > 1.0 && self.consensus.k_u > 0.0 {
            epsilon(speed, k_a).ok().map(|eps| auto_tau_h(speed, eps, self.consensus.k_u))
        } else {
            None
        };
        let tau_h = match (self.consensus.tau_h, auto_tau) {
            (AutoOr::Auto, Some(t)) => t,
            (AutoOr::Auto, None) => f64::NAN,
            (AutoOr::Value(t), limit) => {
                if !(t > 0.0 && t.is_finite()) {
                    violations.push(Violation::NotPositive {
                        field: "consensus.tau_h".into(),
                        value: t,
                    });
                } else if let Some(limit) = limit {
                    if t > limit * (1.0 + 1e-12) {
                        violations.push(Violation::TauHTooLarge { tau_h: t, limit });
                    }
                }
                t
            }
        };

        let dt = self.integration.dt_s;
        if base_ok && dt > 0.0 && dt >= 0.1 / w {
            violations.push(Violation::TimeStepTooLarge { dt, limit: 0.1 / w });
        }

        if !violations.is_empty() {
            return Err(violations);
        }

        let oscillation = OscillationConfig::new(speed, w, k_a)
            .and_then(|c| c.with_amplitude_cap(cap.min(max_amplitude)))
            .and_then(|c| c.with_tau_a(tau_a))
            .map_err(|e| vec![Violation::Other(e.to_string())])?;
        let saturation = Saturation::new(tau_h, self.consensus.r_m).map_err(|e| vec![Violation::Other(e.to_string())])?;

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut drones: Vec<&DroneSpec> = self.drones.iter().collect();
        drones.sort_by_key(|d| d.id);
        let drones = drones
            .into_iter()
            .map(|d| {
                let path = StraightLinePath::new(Vector2::new(d.path.origin_m[0], d.path.origin_m[1]), d.path.heading_rad);
                let position = match (d.initial_position_m, d.initial_path_parameter_m) {
                    (Some([x, y]), _) => Vector2::new(x, y),
                    (None, Some(x)) => offset_point(&path, x, d.initial_offset_m.unwrap_or(0.0)),
                    (None, None) => {
                        let [lo, hi] = self.initial_sampling.as_ref().expect("checked above").path_parameter_range_m;
                        let x = if lo == hi { lo } else { rng.gen_range(lo..hi) };
                        offset_point(&path, x, d.initial_offset_m.unwrap_or(0.0))
                    }
                };
                ResolvedDrone {
                    path,
                    position,
                    heading: match d.initial_heading_rad {
                        AutoOr::Auto => None,
                        AutoOr::Value(h) => Some(h),
                    },
                    gvf: GvfGains {
                        k_e: d.k_e_per_s.unwrap_or(self.guidance.k_e_per_s),
                    },
                    controller: ControllerGains {
                        k_n: d.k_n.unwrap_or(self.guidance.k_n),
                        omega_max: self.guidance.omega_max_rad_s,
                    },
                }
            })
            .collect();

        let wind = self
            .wind
            .as_ref()
            .map(|w| Vector2::new(w.velocity_m_s[0], w.velocity_m_s[1]))
            .unwrap_or_else(Vector2::zeros);

        Ok(ResolvedScenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            seed: self.seed,
            graph: graph.expect("graph present when there are no violations"),
            oscillation,
            saturation,
            k_u: self.consensus.k_u,
            comm_delay_ticks: self.consensus.comm_delay_ticks,
            dt,
            steps: (self.integration.t_end_s / dt).round() as usize,
            telemetry_every: self.integration.telemetry_every_ticks,
            sync_threshold: self.sync_threshold_m,
            wind,
            drones,
        })
    }
}

fn offset_point(path: &StraightLinePath, x: f64, offset: f64) -> Vector2<f64> {
    use crate::path::ParametricPath;
    path.point_at(x) + path.gradient(&Vector2::zeros()) * offset
}

/// One violated scenario constraint.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("scenario has no drones")]
    NoDrones,
    #[error("{field} must be positive, got {value}")]
    NotPositive { field: String, value: f64 },
    #[error("drone ids must be 1..=N without gaps or repeats, got {ids:?}")]
    DroneIds { ids: Vec<usize> },
    #[error("drone {id} has speed {speed} m/s but all drones must share {common} m/s")]
    SpeedMismatch { id: usize, speed: f64, common: f64 },
    #[error("drone {id}: give either initial_position_m or initial_path_parameter_m/initial_offset_m, not both")]
    AmbiguousInitialCondition { id: usize },
    #[error("drone {id} has no initial condition and no [initial_sampling] range is configured")]
    MissingInitialCondition { id: usize },
    #[error("initial sampling range [{lo}, {hi}] is empty or not finite")]
    BadSamplingRange { lo: f64, hi: f64 },
    #[error("{0}")]
    Topology(String),
    #[error("k_A must exceed 1, got {k_a}")]
    KaTooSmall { k_a: f64 },
    #[error("amplitude cap {cap} m exceeds the feasible maximum v/w_gamma = {max} m")]
    AmplitudeCapInfeasible { cap: f64, max: f64 },
    #[error("tau_h = {tau_h} exceeds (v - epsilon)/k_u = {limit}")]
    TauHTooLarge { tau_h: f64, limit: f64 },
    #[error("time step {dt} s must be below 0.1/w_gamma = {limit} s")]
    TimeStepTooLarge { dt: f64, limit: f64 },
    #[error("{0}")]
    Other(String),
}

/// A drone with everything resolved to concrete numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDrone {
    pub path: StraightLinePath,
    pub position: Vector2<f64>,
    /// `None` means aligned with the field at t = 0.
    pub heading: Option<f64>,
    pub gvf: GvfGains,
    pub controller: ControllerGains,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScenario {
    pub name: String,
    pub seed: u64,
    pub graph: Graph,
    pub oscillation: OscillationConfig,
    pub saturation: Saturation,
    pub k_u: f64,
    pub comm_delay_ticks: usize,
    pub dt: f64,
    pub steps: usize,
    pub telemetry_every: usize,
    pub sync_threshold: f64,
    pub wind: Vector2<f64>,
    pub drones: Vec<ResolvedDrone>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        speed_m_s = 8.0
        [integration]
        t_end_s = 10.0
        [oscillation]
        w_gamma_rad_s = 0.6
        k_a = 1.35
        [consensus]
        k_u = 0.16
        r_m = 50.0
        [graph]
        edges = [[1, 2], [2, 3]]
        [[drones]]
        id = 1
        path = { origin_m = [0.0, 0.0], heading_rad = 0.0 }
        initial_path_parameter_m = 0.0
        [[drones]]
        id = 2
        path = { origin_m = [0.0, 30.0], heading_rad = 0.0 }
        initial_path_parameter_m = 5.0
        [[drones]]
        id = 3
        path = { origin_m = [0.0, 60.0], heading_rad = 0.0 }
        initial_position_m = [2.0, 70.0]
        initial_heading_rad = 0.5
    "#;

    #[test]
    fn minimal_scenario_resolves() {
        let s = Scenario::from_toml_str(MINIMAL).unwrap();
        assert_eq!(s.validate(), vec![]);
        let r = s.resolve().unwrap();
        assert_eq!(r.steps, 1000);
        assert_eq!(r.graph.edge_count(), 2);
        let eps = epsilon(8.0, 1.35).unwrap();
        assert!((r.saturation.tau_h() - (8.0 - eps) / 0.16).abs() < 1e-12);
        assert!((r.oscillation.amplitude_cap - 8.0 / 0.6).abs() < 1e-12);
        assert_eq!(r.drones[1].position, Vector2::new(5.0, 30.0));
        assert_eq!(r.drones[2].position, Vector2::new(2.0, 70.0));
        assert_eq!(r.drones[2].heading, Some(0.5));
        assert_eq!(r.drones[0].heading, None);
    }

    #[test]
    fn overrides_are_applied_before_validation() {
        let o = [Override::parse("integration.dt_s=0.5").unwrap()];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        assert_eq!(s.integration.dt_s, 0.5);
        assert!(matches!(s.validate().as_slice(), [Violation::TimeStepTooLarge { .. }]));

        let o = [
            Override::parse("drones.1.initial_path_parameter_m = 12.5").unwrap(),
            Override::parse("consensus.tau_h=3").unwrap(),
            Override::parse("oscillation.k_a=fit").unwrap(),
            Override::parse("name=renamed").unwrap(),
        ];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        assert_eq!(s.drones[1].initial_path_parameter_m, Some(12.5));
        assert_eq!(s.consensus.tau_h, AutoOr::Value(3.0));
        assert_eq!(s.oscillation.k_a, KaSetting::Fit);
        assert_eq!(s.name.as_deref(), Some("renamed"));

        assert!(Override::parse("novalue").is_err());
        assert!(Scenario::from_toml_str_with_overrides(MINIMAL, &[Override::parse("drones.9.id=1").unwrap()]).is_err());
    }

    #[test]
    fn triangle_is_rejected() {
        let o = [Override::parse("graph.edges=[[1,2],[2,3],[3,1]]").unwrap()];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        assert_eq!(s.validate(), vec![Violation::Topology("graph contains a cycle".into())]);
        assert_eq!(s.validate()[0].to_string(), "graph contains a cycle");
    }

    #[test]
    fn infeasible_amplitude_cap_is_rejected() {
        let o = [Override::parse(&format!("oscillation.amplitude_cap_m={}", 2.0 * 8.0 / 0.6)).unwrap()];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        assert!(matches!(s.validate().as_slice(), [Violation::AmplitudeCapInfeasible { .. }]));
    }

    #[test]
    fn every_violation_is_reported() {
        let o = [
            Override::parse("integration.dt_s=1.0").unwrap(),
            Override::parse("oscillation.k_a=0.9").unwrap(),
            Override::parse("graph.edges=[[1,2]]").unwrap(),
            Override::parse("drones.0.speed_m_s=9.0").unwrap(),
        ];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        let v = s.validate();
        assert!(v.iter().any(|v| matches!(v, Violation::TimeStepTooLarge { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::KaTooSmall { .. })));
        assert!(v.iter().any(|v| matches!(v, Violation::SpeedMismatch { id: 1, .. })));
        assert!(v.iter().any(|v| v.to_string().starts_with("graph is disconnected")));
    }

    #[test]
    fn explicit_tau_h_above_limit_is_rejected() {
        let o = [Override::parse("consensus.tau_h=1000.0").unwrap()];
        let s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        assert!(matches!(s.validate().as_slice(), [Violation::TauHTooLarge { .. }]));
    }

    #[test]
    fn sampled_initial_parameters_depend_on_seed_only() {
        let o = [
            Override::parse("initial_sampling.path_parameter_range_m=[0.0, 50.0]").unwrap(),
            Override::parse("seed=3").unwrap(),
        ];
        let mut s = Scenario::from_toml_str_with_overrides(MINIMAL, &o).unwrap();
        s.drones[1].initial_path_parameter_m = None;
        let a = s.resolve().unwrap();
        let b = s.resolve().unwrap();
        assert_eq!(a.drones[1].position, b.drones[1].position);
        assert!((0.0..50.0).contains(&a.drones[1].position.x));
        s.seed = 4;
        assert_ne!(s.resolve().unwrap().drones[1].position, a.drones[1].position);
    }

    #[test]
    fn unknown_fields_and_bad_words_fail_to_parse() {
        assert!(Scenario::from_toml_str(&(MINIMAL.to_owned() + "\nbogus = 1\n")).is_err());
        let o = [Override::parse("consensus.tau_h=\"sometimes\"").unwrap()];
        assert!(Scenario::from_toml_str_with_overrides(MINIMAL, &o).is_err());
    }

    #[test]
    fn graph_file_parses() {
        let g = parse_graph_file("nodes = 3\nedges = [[1, 2], [2, 3]]\n").unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert!(parse_graph_file("nodes = 2\nedges = [[1, 3]]\n").is_err());
        assert!(parse_graph_file("edges = []\n").is_err());
    }

    #[test]
    fn single_drone_needs_no_edges() {
        let text = r#"
            speed_m_s = 16.0
            [integration]
            t_end_s = 1.0
            [oscillation]
            w_gamma_rad_s = 0.6
            k_a = 1.35
            [consensus]
            k_u = 0.06
            r_m = 50.0
            [[drones]]
            id = 1
            path = { origin_m = [0.0, 0.0], heading_rad = 0.0 }
            initial_path_parameter_m = 0.0
        "#;
        let s = Scenario::from_toml_str(text).unwrap();
        assert_eq!(s.validate(), vec![]);
    }
}
