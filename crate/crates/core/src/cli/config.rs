//! JSON run configuration with a strict schema.
//!
//! | key | default |
//! |---|---|
//! | `projection.m_modes` | 0 |
//! | `time_grid.steps` | 1000 |
//! | `semilinear.g` | `"zero"` |
//! | `semilinear.L` | 0 |
//! | `semilinear.g_amplitude` | 0.1 |
//! | `semilinear.tol` | 1e-8 |
//! | `semilinear.max_iter` | 50 |
//! | `semilinear.relaxation` | 1.0 |
//! | `seed` | 0 |
//!
//! Relative file paths are resolved against the directory of the config file.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linops::{EpsGrid, ProjectionSubspace};
use crate::semilinear::{CollocationMap, Drift, IterationSettings, Nonlinearity, Source};
use crate::spectral::{ControlOperator, HeatModel};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config schema error at key `{key}`: {message}")]
    Schema { key: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn schema(key: &str, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            key: key.to_string(),
            message: message.into(),
        }
    }

    /// The offending key for schema errors.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n_modes: usize,
    pub horizon: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlKind {
    Distributed,
    Lumped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub kind: ControlKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha2: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectionConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m_modes: Option<usize>,
    /// JSON list of spanning vectors, each of length `n_modes`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub basis_file: Option<PathBuf>,
}

/// A state given as mode coefficients or a preset name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StateSpec {
    Coefficients(Vec<f64>),
    Preset(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatesConfig {
    pub y0: StateSpec,
    pub yf: StateSpec,
}

fn default_steps() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridConfig {
    #[serde(default = "default_steps")]
    pub steps: usize,
}

impl Default for TimeGridConfig {
    fn default() -> Self {
        Self { steps: default_steps() }
    }
}

fn default_g() -> String {
    "zero".into()
}
fn default_amplitude() -> f64 {
    0.1
}
fn default_tol() -> f64 {
    IterationSettings::default().tol
}
fn default_max_iter() -> usize {
    IterationSettings::default().max_iter
}
fn default_relaxation() -> f64 {
    IterationSettings::default().relaxation
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemilinearConfig {
    pub f: String,
    #[serde(default = "default_g")]
    pub g: String,
    #[serde(rename = "L", default)]
    pub lipschitz: f64,
    #[serde(default = "default_amplitude")]
    pub g_amplitude: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub control: ControlConfig,
    #[serde(default)]
    pub projection: ProjectionConfig,
    pub epsilons: Vec<f64>,
    pub states: StatesConfig,
    #[serde(default)]
    pub time_grid: TimeGridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semilinear: Option<SemilinearConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
    /// Optional Gramian override: JSON list of rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gramian_file: Option<PathBuf>,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn classify(err: serde_json::Error) -> ConfigError {
    use serde_json::error::Category;
    let message = err.to_string();
    match err.classify() {
        Category::Data => {
            let key = message
                .split('`')
                .nth(1)
                .filter(|_| message.starts_with("unknown field") || message.starts_with("missing field"))
                .unwrap_or("<document>")
                .to_string();
            ConfigError::Schema { key, message }
        }
        _ => ConfigError::Parse {
            line: err.line(),
            column: err.column(),
            message,
        },
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(classify)?;
    cfg.validate()?;
    Ok(cfg)
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn positive(key: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::schema(key, format!("must be positive and finite, got {x}")))
    }
}

impl RunConfig {
    /// Reads, parses and validates a config file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let mut cfg = parse_config(&read(path)?)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(dir) if p.is_relative() => dir.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.model.n_modes;
        if n == 0 {
            return Err(ConfigError::schema("model.n_modes", "must be at least 1"));
        }
        positive("model.horizon", self.model.horizon)?;
        self.control_operator()?;
        match (&self.projection.m_modes, &self.projection.basis_file) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::schema(
                    "projection",
                    "give either m_modes or basis_file, not both",
                ))
            }
            (Some(m), None) if *m > n => {
                return Err(ConfigError::schema(
                    "projection.m_modes",
                    format!("{m} exceeds n_modes = {n}"),
                ))
            }
            _ => {}
        }
        if self.epsilons.is_empty() {
            return Err(ConfigError::schema("epsilons", "must list at least one value"));
        }
        for e in &self.epsilons {
            positive("epsilons", *e)?;
        }
        let mut sorted = self.epsilons.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConfigError::schema("epsilons", "values must be distinct"));
        }
        check_state("states.y0", &self.states.y0, n, false)?;
        check_state("states.yf", &self.states.yf, n, true)?;
        if self.time_grid.steps < 2 {
            return Err(ConfigError::schema("time_grid.steps", "must be at least 2"));
        }
        if let Some(s) = &self.semilinear {
            if Drift::from_name(&s.f).is_none() {
                return Err(ConfigError::schema(
                    "semilinear.f",
                    format!("unknown drift `{}`; known: {}", s.f, Drift::NAMES.join(", ")),
                ));
            }
            if Source::from_name(&s.g).is_none() {
                return Err(ConfigError::schema(
                    "semilinear.g",
                    format!("unknown source `{}`; known: {}", s.g, Source::NAMES.join(", ")),
                ));
            }
            if !(s.lipschitz >= 0.0 && s.lipschitz.is_finite()) {
                return Err(ConfigError::schema("semilinear.L", "must be nonnegative"));
            }
            if !(s.g_amplitude >= 0.0 && s.g_amplitude.is_finite()) {
                return Err(ConfigError::schema("semilinear.g_amplitude", "must be nonnegative"));
            }
            positive("semilinear.tol", s.tol)?;
            if s.max_iter == 0 {
                return Err(ConfigError::schema("semilinear.max_iter", "must be at least 1"));
            }
            if !(s.relaxation > 0.0 && s.relaxation <= 1.0) {
                return Err(ConfigError::schema("semilinear.relaxation", "must lie in (0, 1]"));
            }
        }
        Ok(())
    }

    /// The ε values in decreasing order.
    pub fn eps_grid(&self) -> EpsGrid {
        let mut v = self.epsilons.clone();
        v.sort_by(|a, b| b.total_cmp(a));
        EpsGrid::new(v).expect("validated epsilons")
    }

    pub fn model(&self) -> HeatModel {
        HeatModel::new(self.model.n_modes).expect("validated n_modes")
    }

    pub fn control_operator(&self) -> Result<ControlOperator, ConfigError> {
        let c = &self.control;
        let need = |key: &str, v: Option<f64>| {
            v.ok_or_else(|| ConfigError::schema(&format!("control.{key}"), "required for this control kind"))
        };
        let forbid = |key: &str, v: Option<f64>| match v {
            Some(_) => Err(ConfigError::schema(
                &format!("control.{key}"),
                "not used by this control kind",
            )),
            None => Ok(()),
        };
        let op = match c.kind {
            ControlKind::Distributed => {
                forbid("alpha1", c.alpha1)?;
                forbid("alpha2", c.alpha2)?;
                ControlOperator::Distributed {
                    a: need("a", c.a)?,
                    b: need("b", c.b)?,
                }
            }
            ControlKind::Lumped => {
                forbid("a", c.a)?;
                forbid("b", c.b)?;
                ControlOperator::Lumped {
                    alpha1: need("alpha1", c.alpha1)?,
                    alpha2: need("alpha2", c.alpha2)?,
                }
            }
        };
        op.validate()
            .map_err(|e| ConfigError::schema("control", e.to_string()))?;
        Ok(op)
    }

    pub fn projection(&self) -> Result<ProjectionSubspace, ConfigError> {
        let n = self.model.n_modes;
        match &self.projection.basis_file {
            None => ProjectionSubspace::leading_modes(n, self.projection.m_modes.unwrap_or(0))
                .map_err(|e| ConfigError::schema("projection.m_modes", e.to_string())),
            Some(path) => {
                let path = self.resolve(path);
                let vectors: Vec<Vec<f64>> = serde_json::from_str(&read(&path)?)
                    .map_err(|e| ConfigError::schema("projection.basis_file", e.to_string()))?;
                let vectors = vectors
                    .into_iter()
                    .map(|v| {
                        if v.len() == n {
                            Ok(DVector::from_vec(v))
                        } else {
                            Err(ConfigError::schema(
                                "projection.basis_file",
                                format!("basis vector of length {} for n_modes = {n}", v.len()),
                            ))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                ProjectionSubspace::from_spanning(&vectors)
                    .map_err(|e| ConfigError::schema("projection.basis_file", e.to_string()))
            }
        }
    }

    /// Initial state in mode coordinates.
    pub fn y0(&self) -> DVector<f64> {
        state_vector(&self.states.y0, self.model.n_modes).expect("validated y0")
    }

    /// Target state, or `None` for the `free-endpoint` preset.
    pub fn yf(&self) -> Option<DVector<f64>> {
        state_vector(&self.states.yf, self.model.n_modes)
    }

    pub fn nonlinearity(&self) -> Option<Nonlinearity> {
        self.semilinear.as_ref().map(|s| {
            Nonlinearity::from_registry(&s.f, s.lipschitz, &s.g, s.g_amplitude).expect("validated registry names")
        })
    }

    pub fn iteration(&self) -> Option<IterationSettings> {
        self.semilinear.as_ref().map(|s| IterationSettings {
            tol: s.tol,
            max_iter: s.max_iter,
            relaxation: s.relaxation,
        })
    }

    /// Raw Gramian override, if configured.
    pub fn gramian_override(&self) -> Result<Option<DMatrix<f64>>, ConfigError> {
        let Some(path) = &self.gramian_file else {
            return Ok(None);
        };
        let n = self.model.n_modes;
        let rows: Vec<Vec<f64>> = serde_json::from_str(&read(&self.resolve(path))?)
            .map_err(|e| ConfigError::schema("gramian_file", e.to_string()))?;
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(ConfigError::schema(
                "gramian_file",
                format!("expected a {n} x {n} matrix"),
            ));
        }
        Ok(Some(DMatrix::from_fn(n, n, |i, j| rows[i][j])))
    }
}

enum Preset {
    Zero,
    Mode(usize),
    Bump { center: f64, width: f64 },
    FreeEndpoint,
}

fn parse_preset(s: &str) -> Option<Preset> {
    let s = s.trim();
    if s == "zero" {
        return Some(Preset::Zero);
    }
    if s == "free-endpoint" {
        return Some(Preset::FreeEndpoint);
    }
    if let Some(k) = s.strip_prefix("mode-") {
        return k.parse().ok().map(Preset::Mode);
    }
    let args = s.strip_prefix("gaussian-bump(")?.strip_suffix(')')?;
    let mut parts = args.split(',').map(|p| p.trim().parse::<f64>());
    let (center, width) = (parts.next()?.ok()?, parts.next()?.ok()?);
    if parts.next().is_some() {
        return None;
    }
    Some(Preset::Bump { center, width })
}

fn check_state(key: &str, spec: &StateSpec, n: usize, allow_free: bool) -> Result<(), ConfigError> {
    match spec {
        StateSpec::Coefficients(c) => {
            if c.len() > n {
                return Err(ConfigError::schema(
                    key,
                    format!("{} coefficients for n_modes = {n}", c.len()),
                ));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::schema(key, "coefficients must be finite"));
            }
        }
        StateSpec::Preset(p) => match parse_preset(p) {
            None => {
                return Err(ConfigError::schema(
                    key,
                    format!(
                        "unknown preset `{p}`; known: zero, mode-k, gaussian-bump(c,w){}",
                        if allow_free { ", free-endpoint" } else { "" }
                    ),
                ))
            }
            Some(Preset::Mode(k)) if k == 0 || k > n => {
                return Err(ConfigError::schema(key, format!("mode-{k} outside 1..={n}")))
            }
            Some(Preset::Bump { center, width })
                if !(center.is_finite() && width > 0.0 && width.is_finite()) =>
            {
                return Err(ConfigError::schema(key, "gaussian-bump needs finite c and w > 0"))
            }
            Some(Preset::FreeEndpoint) if !allow_free => {
                return Err(ConfigError::schema(key, "free-endpoint is only valid for yf"))
            }
            _ => {}
        },
    }
    Ok(())
}

/// Coefficients of a validated state; `None` for `free-endpoint`.
/// Coefficient lists shorter than `n` are zero-padded.
fn state_vector(spec: &StateSpec, n: usize) -> Option<DVector<f64>> {
    match spec {
        StateSpec::Coefficients(c) => Some(DVector::from_fn(n, |i, _| c.get(i).copied().unwrap_or(0.0))),
        StateSpec::Preset(p) => match parse_preset(p)? {
            Preset::Zero => Some(DVector::zeros(n)),
            Preset::Mode(k) => {
                let mut v = DVector::zeros(n);
                v[k - 1] = 1.0;
                Some(v)
            }
            Preset::Bump { center, width } => {
                let colloc = CollocationMap::new(n, 64 * n.max(16)).expect("valid collocation");
                let w = DVector::from_vec(
                    colloc
                        .nodes()
                        .into_iter()
                        .map(|th| (-(th - center).powi(2) / (2.0 * width * width)).exp())
                        .collect(),
                );
                colloc.to_modes(&w).ok()
            }
            Preset::FreeEndpoint => None,
        },
    }
}
