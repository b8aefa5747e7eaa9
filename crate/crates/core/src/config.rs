//! Scenario documents.
//!
//! A scenario is a JSON object with `schema: 1`, a `mode` naming the experiment,
//! and one optional section per experiment kind. Unknown fields are rejected and
//! errors carry the JSON path of the offending field. Scalar fields can be
//! overridden with dotted `key=value` pairs before the document is typed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::simlab::{LipSettings, S2sConfig, SimError, WalkConfig};
use crate::template::DEFAULT_U_LEFT_STAR;

pub const SCENARIO_SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("override `{0}`: expected key=value")]
    OverrideSyntax(String),
    #[error("override `{key}`: {message}")]
    OverridePath { key: String, message: String },
    #[error("model file {0} does not exist")]
    MissingModel(PathBuf),
    #[error(transparent)]
    Invalid(#[from] SimError),
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError::Schema {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Orbit,
    S2s,
    Walk,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Orbit => "orbit",
            Mode::S2s => "s2s",
            Mode::Walk => "walk",
        }
    }
}

/// Orbit report settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OrbitSettings {
    pub lip: LipSettings,
    pub velocities_x: Vec<f64>,
    pub velocities_y: Vec<f64>,
    pub u_left_star: f64,
    /// Samples per step in the phase-portrait traces.
    pub samples: usize,
}

impl Default for OrbitSettings {
    fn default() -> Self {
        Self {
            lip: LipSettings::default(),
            velocities_x: vec![0.0, 0.15, 0.25, 0.3],
            velocities_y: vec![0.0],
            u_left_star: DEFAULT_U_LEFT_STAR,
            samples: 50,
        }
    }
}

/// Episode-level checks; every present threshold must hold for the run to pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Assertions {
    /// Largest allowed relative error of a segment's mean forward velocity.
    pub max_velocity_error: Option<f64>,
    /// Steps dropped at the start of each segment before averaging.
    pub transient_steps: usize,
    /// Required relative drop of the final-window frontal error against the same
    /// episode run without adaptation.
    pub min_error_reduction: Option<f64>,
    pub error_window: usize,
    pub max_period2: Option<f64>,
    pub max_com_height_deviation: Option<f64>,
    pub max_touchdown_error: Option<f64>,
}

impl Default for Assertions {
    fn default() -> Self {
        Self {
            max_velocity_error: None,
            transient_steps: 3,
            min_error_reduction: None,
            error_window: 100,
            max_period2: None,
            max_com_height_deviation: None,
            max_touchdown_error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: u32,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Overrides every seed in the document when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Robot model file for walking; the bundled biped when absent. Relative paths
    /// resolve against the scenario file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    /// Output directory; the command line takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub orbit: OrbitSettings,
    #[serde(default)]
    pub s2s: S2sConfig,
    #[serde(default)]
    pub walk: WalkConfig,
    #[serde(default)]
    pub assertions: Assertions,
}

impl ScenarioConfig {
    pub fn new(mode: Mode) -> Self {
        Self {
            schema: SCENARIO_SCHEMA,
            mode,
            name: None,
            seed: None,
            model: None,
            output: None,
            orbit: OrbitSettings::default(),
            s2s: S2sConfig::default(),
            walk: WalkConfig::default(),
            assertions: Assertions::default(),
        }
    }

    /// Parses and type-checks a document after applying `overrides`.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| schema("$", e.to_string()))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self, ConfigError> {
        let config: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            schema(
                if path == "." { "$".to_string() } else { path },
                e.into_inner().to_string(),
            )
        })?;
        if config.schema != SCENARIO_SCHEMA {
            return Err(schema(
                "schema",
                format!("unsupported schema {}, expected {SCENARIO_SCHEMA}", config.schema),
            ));
        }
        Ok(config.with_seed_applied())
    }

    fn with_seed_applied(mut self) -> Self {
        if let Some(seed) = self.seed {
            self.s2s.seed = seed;
            self.s2s.adaptation.seed = seed;
            self.walk.adaptation.seed = seed;
        }
        self
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("scenario serialises");
        text.push('\n');
        text
    }

    /// Semantic checks for the selected mode; `base_dir` resolves the model path.
    pub fn validate(&self, base_dir: &Path) -> Result<(), ConfigError> {
        match self.mode {
            Mode::Orbit => {
                self.orbit.lip.params().map_err(SimError::from)?;
                let v = self.orbit.velocities_x.iter().chain(&self.orbit.velocities_y);
                if !v.clone().all(|x| x.is_finite()) || !self.orbit.u_left_star.is_finite() {
                    return Err(schema("orbit", "velocities and u_left_star must be finite"));
                }
                if self.orbit.samples < 2 {
                    return Err(schema("orbit.samples", "need at least 2 samples per step"));
                }
            }
            Mode::S2s => self.s2s.validate()?,
            Mode::Walk => {
                self.walk.validate()?;
                if let Some(path) = self.model_path(base_dir) {
                    if !path.is_file() {
                        return Err(ConfigError::MissingModel(path));
                    }
                }
            }
        }
        let a = &self.assertions;
        let thresholds = [
            a.max_velocity_error,
            a.min_error_reduction,
            a.max_period2,
            a.max_com_height_deviation,
            a.max_touchdown_error,
        ];
        if !thresholds.iter().flatten().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(schema("assertions", "thresholds must be finite and non-negative"));
        }
        if a.error_window == 0 {
            return Err(schema("assertions.error_window", "must be at least 1"));
        }
        Ok(())
    }

    pub fn model_path(&self, base_dir: &Path) -> Option<PathBuf> {
        self.model
            .as_ref()
            .map(|m| if m.is_absolute() { m.clone() } else { base_dir.join(m) })
    }
}

/// Applies one `dotted.key=value` override. The value is read as JSON when it
/// parses as JSON and as a plain string otherwise; missing object keys are created,
/// numeric segments index arrays.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::OverrideSyntax(assignment.to_string()))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(ConfigError::OverrideSyntax(assignment.to_string()));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let fail = |message: String| ConfigError::OverridePath {
        key: key.to_string(),
        message,
    };
    let segments: Vec<&str> = key.split('.').collect();
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string())
                    .or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize = seg
                    .parse()
                    .map_err(|_| fail(format!("`{seg}` is not an array index")))?;
                let len = items.len();
                let slot = items
                    .get_mut(idx)
                    .ok_or_else(|| fail(format!("index {idx} out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(fail(format!("`{}` is not an object or array", segments[..i].join(".")))),
        };
    }
    unreachable!("loop returns on the last segment")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::MismatchModel;

    #[test]
    fn minimal_document_takes_defaults() {
        let c = ScenarioConfig::parse(r#"{"schema":1,"mode":"s2s"}"#, &[]).unwrap();
        assert_eq!(c.s2s, S2sConfig::default());
        assert_eq!(c.mode, Mode::S2s);
        c.validate(Path::new(".")).unwrap();
    }

    #[test]
    fn unknown_field_reports_its_path() {
        let err = ScenarioConfig::parse(r#"{"schema":1,"mode":"s2s","s2s":{"lip":{"zz":1}}}"#, &[]).unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "s2s.lip.zz"),
            other => panic!("{other:?}"),
        }
        let err = ScenarioConfig::parse(
            r#"{"schema":1,"mode":"s2s","s2s":{"schedule":[{"v_x":"a","steps":1}]}}"#,
            &[],
        )
        .unwrap_err();
        match err {
            ConfigError::Schema { path, .. } => assert_eq!(path, "s2s.schedule[0].v_x"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_schema_is_rejected() {
        assert!(matches!(
            ScenarioConfig::parse(r#"{"schema":2,"mode":"orbit"}"#, &[]),
            Err(ConfigError::Schema { .. })
        ));
        assert!(ScenarioConfig::parse(r#"{"schema":1,"mode":"fly"}"#, &[]).is_err());
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = ScenarioConfig::parse(
            r#"{"schema":1,"mode":"s2s"}"#,
            &[
                "s2s.lip.z0=0.9".into(),
                "s2s.frontal_mismatch={\"mode\":\"height_offset\",\"delta_z\":-0.1}".into(),
                "s2s.adaptation.enabled=true".into(),
                "name=run one".into(),
                "seed=9".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.s2s.lip.z0, 0.9);
        assert_eq!(c.s2s.frontal_mismatch, MismatchModel::HeightOffset { delta_z: -0.1 });
        assert!(c.s2s.adaptation.enabled);
        assert_eq!(c.name.as_deref(), Some("run one"));
        assert_eq!(c.s2s.adaptation.seed, 9);
    }

    #[test]
    fn override_into_arrays_and_errors() {
        let mut v: Value = serde_json::from_str(r#"{"a":[{"b":1},{"b":2}]}"#).unwrap();
        apply_override(&mut v, "a.1.b=5").unwrap();
        assert_eq!(v["a"][1]["b"], 5);
        assert!(matches!(
            apply_override(&mut v, "a.7.b=5"),
            Err(ConfigError::OverridePath { .. })
        ));
        assert!(matches!(
            apply_override(&mut v, "a.x=5"),
            Err(ConfigError::OverridePath { .. })
        ));
        assert!(matches!(
            apply_override(&mut v, "a.0.b.c=5"),
            Err(ConfigError::OverridePath { .. })
        ));
        assert!(matches!(
            apply_override(&mut v, "novalue"),
            Err(ConfigError::OverrideSyntax(_))
        ));
        assert!(matches!(
            apply_override(&mut v, "a..b=1"),
            Err(ConfigError::OverrideSyntax(_))
        ));
    }

    #[test]
    fn round_trips_through_json() {
        let mut c = ScenarioConfig::new(Mode::Walk);
        c.name = Some("walk".into());
        let back = ScenarioConfig::parse(&c.to_json(), &[]).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn missing_model_file_is_reported() {
        let mut c = ScenarioConfig::new(Mode::Walk);
        c.model = Some("no/such/model.json".into());
        assert!(matches!(
            c.validate(Path::new("/nonexistent")),
            Err(ConfigError::MissingModel(_))
        ));
    }
}
