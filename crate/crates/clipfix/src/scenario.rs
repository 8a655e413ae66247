//! Flat typed key-value scenario files describing one experiment.
//!
//! Format: one `key = value` pair per line, `#` comments, blank lines
//! ignored. An `include = <path>` line (relative to the including file)
//! splices in another file at that position; later keys override earlier
//! ones, so presets can be included and then partially overridden.
//! Unknown keys are rejected.

use crate::contact::{ClipModel, PushShape};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Malformed { path: PathBuf, line: usize },
    #[error("include depth exceeds {MAX_INCLUDE_DEPTH} (cycle?) at {path}")]
    IncludeDepth { path: PathBuf },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("missing required key `{0}`")]
    MissingKey(String),
    #[error("key `{key}`: invalid value `{value}` ({expected})")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
}

/// What kind of experiment a scenario describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Indicator comparison sweep: patterns x configs x seeds.
    Compare,
    /// Single iteration with a full per-tick trace.
    Trace,
    /// Fixture board with naive or adaptive parameter sampling.
    Board,
    /// Per-tick latency measurement.
    Bench,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "compare" => Some(Self::Compare),
            "trace" => Some(Self::Trace),
            "board" => Some(Self::Board),
            "bench" => Some(Self::Bench),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Compare => "compare",
            Self::Trace => "trace",
            Self::Board => "board",
            Self::Bench => "bench",
        }
    }
}

/// Fully resolved scenario with defaults applied.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ExperimentKind,
    pub seeds: u64,
    pub noise_sigma: f64,
    pub sensor_bias: f64,
    /// Push patterns for `compare`, or the single pattern for `trace`.
    pub patterns: Vec<PushShape>,
    /// Clip stiffness scale presets for `compare`.
    pub config_scales: Vec<f64>,
    pub clip: ClipModel,
    pub contact_push: f64,
    pub t_push_ms: f64,
    pub f_push_max: f64,
    pub approach_z: f64,
    pub hold_after_detach: bool,
    pub f_c_threshold: f64,
    /// Hidden fixture offsets for `board`, in metres, in board order.
    pub fixture_offsets: Vec<f64>,
    pub adaptive: bool,
    pub max_iterations: u64,
    pub z_min: f64,
    pub z_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    /// Tick count for `bench`.
    pub bench_ticks: u64,
    /// Normalized text the scenario hash is computed over.
    pub canonical_text: String,
}

fn read_pairs(
    path: &Path,
    depth: usize,
    out: &mut Vec<(String, String)>,
) -> Result<(), ScenarioError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(ScenarioError::IncludeDepth {
            path: path.to_path_buf(),
        });
    }
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ScenarioError::Malformed {
                path: path.to_path_buf(),
                line: lineno + 1,
            });
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key == "include" {
            let inc = path.parent().unwrap_or(Path::new(".")).join(&value);
            read_pairs(&inc, depth + 1, out)?;
        } else {
            out.push((key, value));
        }
    }
    Ok(())
}

/// Key-value pool with typed extraction; leftovers are unknown keys.
struct KvMap(HashMap<String, String>);

impl KvMap {
    fn take(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }

    fn f64(&mut self, key: &str, default: f64) -> Result<f64, ScenarioError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ScenarioError::BadValue {
                key: key.into(),
                value: v,
                expected: "a number",
            }),
        }
    }

    fn u64(&mut self, key: &str, default: u64) -> Result<u64, ScenarioError> {
        match self.take(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| ScenarioError::BadValue {
                key: key.into(),
                value: v,
                expected: "a non-negative integer",
            }),
        }
    }

    fn bool(&mut self, key: &str, default: bool) -> Result<bool, ScenarioError> {
        match self.take(key).as_deref() {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(ScenarioError::BadValue {
                key: key.into(),
                value: v.into(),
                expected: "true or false",
            }),
        }
    }

    fn f64_list(&mut self, key: &str, default: &[f64]) -> Result<Vec<f64>, ScenarioError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ScenarioError::BadValue {
                    key: key.into(),
                    value: v,
                    expected: "a comma-separated list of numbers",
                }),
        }
    }
}

impl Scenario {
    /// Load and resolve a scenario file.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let mut pairs = Vec::new();
        read_pairs(path, 0, &mut pairs)?;
        Self::from_pairs(pairs)
    }

    fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self, ScenarioError> {
        let mut map = KvMap(pairs.iter().cloned().collect());

        let kind_raw = map
            .take("experiment")
            .ok_or_else(|| ScenarioError::MissingKey("experiment".into()))?;
        let kind = ExperimentKind::parse(&kind_raw).ok_or_else(|| ScenarioError::BadValue {
            key: "experiment".into(),
            value: kind_raw,
            expected: "compare, trace, board or bench",
        })?;

        let patterns = match map.take("patterns") {
            None => vec![PushShape::Linear],
            Some(v) => v
                .split(',')
                .map(|s| PushShape::parse(s.trim()))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| ScenarioError::BadValue {
                    key: "patterns".into(),
                    value: v,
                    expected: "a comma-separated list of constant, linear, log, exp",
                })?,
        };

        let base = ClipModel::default();
        let clip = ClipModel {
            k_clip: map.f64("k_clip", base.k_clip)?,
            h_max: map.f64("h_max", base.h_max)?,
            x_contact: map.f64("x_contact", base.x_contact)?,
            x_in: map.f64("x_in", base.x_in)?,
            x_rear: map.f64("x_rear", base.x_rear)?,
            mu: map.f64("friction_mu", base.mu)?,
            psi: map.f64("wall_psi", base.psi)?,
            k_rear: map.f64("k_rear", base.k_rear)?,
        };

        let fixture_offsets_mm = map.f64_list("fixture_offsets_mm", &[-10.0, 3.0, 5.0, 0.0])?;
        let scenario = Self {
            kind,
            seeds: map.u64("seeds", 30)?,
            noise_sigma: map.f64("noise_sigma", 0.05)?,
            sensor_bias: map.f64("sensor_bias", 0.0)?,
            patterns,
            config_scales: map.f64_list("config_scales", &[1.0, 1.25, 1.5])?,
            clip,
            contact_push: map.f64("contact_push", 6.0)?,
            t_push_ms: map.f64("t_push_ms", 3000.0)?,
            f_push_max: map.f64("f_push_max", 20.0)?,
            approach_z: map.f64("approach_z_mm", 0.0)? * 1e-3,
            hold_after_detach: map.bool("hold_after_detach", false)?,
            f_c_threshold: map.f64("f_c_threshold", 3.0)?,
            fixture_offsets: fixture_offsets_mm.iter().map(|v| v * 1e-3).collect(),
            adaptive: map.bool("adaptive", true)?,
            max_iterations: map.u64("max_iterations", 15)?,
            z_min: map.f64("z_min_mm", -15.0)? * 1e-3,
            z_max: map.f64("z_max_mm", 15.0)? * 1e-3,
            f_min: map.f64("f_min", 5.0)?,
            f_max: map.f64("f_max", 25.0)?,
            bench_ticks: map.u64("bench_ticks", 1_000_000)?,
            canonical_text: canonicalize(&pairs),
        };

        if let Some(key) = map.0.keys().next() {
            return Err(ScenarioError::UnknownKey(key.clone()));
        }
        scenario
            .clip
            .validate()
            .map_err(|e| ScenarioError::BadValue {
                key: "clip geometry".into(),
                value: format!("{e}"),
                expected: "a consistent clip model",
            })?;
        Ok(scenario)
    }
}

/// Normalized `key = value` text with includes resolved, for hashing into
/// run manifests.
fn canonicalize(pairs: &[(String, String)]) -> String {
    // later duplicates win, so keep only the last occurrence of each key
    let mut last: HashMap<&str, &str> = HashMap::new();
    for (k, v) in pairs {
        last.insert(k, v);
    }
    let mut keys: Vec<&&str> = last.keys().collect();
    keys.sort();
    let mut out = String::new();
    for k in keys {
        let _ = writeln!(out, "{} = {}", k, last[*k]);
    }
    out
}
