//! Run configuration: a single JSON document, optionally patched by
//! `--set path=value` overrides, parsed with field-path error reporting.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cmat_core::adiabatic::omega0_from_balancing;
use cmat_core::{AdiabaticFactors, CmatError, CqedParams, PulseSchedule, SimConfig, SweepSpec};
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Debug)]
pub enum ConfigError {
    Io { path: PathBuf, source: std::io::Error },
    Syntax { path: PathBuf, source: serde_json::Error },
    Field { path: String, message: String },
    Override(String),
    Missing(&'static str),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Syntax { path, source } => write!(f, "{} is not valid JSON: {source}", path.display()),
            ConfigError::Field { path, message } => write!(f, "config field `{path}`: {message}"),
            ConfigError::Override(msg) => write!(f, "bad --set override: {msg}"),
            ConfigError::Missing(section) => write!(f, "config field `{section}` is required for this command"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field_error(prefix: &str, e: CmatError) -> ConfigError {
    match e {
        CmatError::InvalidParameter { name, reason } => {
            ConfigError::Field { path: format!("{prefix}.{name}"), message: reason }
        }
        other => ConfigError::Field { path: prefix.to_string(), message: other.to_string() },
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Units {
    /// Rates in units of `gamma`, times in units of `1/gamma`.
    #[default]
    Gamma,
    /// Raw rates and times; normalized by `gamma` on load.
    Absolute,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub g: f64,
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Alternative to `kappa`: `kappa = g^2 / (2 gamma C)`.
    #[serde(default)]
    pub cooperativity: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Omitted: chosen by the photon-loss balancing condition.
    #[serde(default)]
    pub omega0: Option<f64>,
    pub tau: f64,
    #[serde(default)]
    pub halfwidth: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: Units,
    #[serde(default)]
    pub params: Option<ParamsConfig>,
    #[serde(default)]
    pub pulse: Option<PulseConfig>,
    #[serde(default)]
    pub factors: AdiabaticFactors,
    #[serde(default)]
    pub sim: SimConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Omega0Source {
    Config,
    Balancing,
}

impl Omega0Source {
    pub fn label(self) -> &'static str {
        match self {
            Omega0Source::Config => "config",
            Omega0Source::Balancing => "balancing",
        }
    }
}

impl RunConfig {
    /// Rates in units of `gamma` (or raw when `gamma = 0` in gamma units).
    pub fn params(&self) -> Result<CqedParams, ConfigError> {
        let raw = self.params.as_ref().ok_or(ConfigError::Missing("params"))?;
        let gamma = match (self.units, raw.gamma) {
            (Units::Gamma, g) => g.unwrap_or(1.0),
            (Units::Absolute, Some(g)) => g,
            (Units::Absolute, None) => {
                return Err(ConfigError::Field {
                    path: "params.gamma".into(),
                    message: "required with absolute units".into(),
                })
            }
        };
        let kappa = match (raw.kappa, raw.cooperativity) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Field {
                    path: "params.cooperativity".into(),
                    message: "give either kappa or cooperativity, not both".into(),
                })
            }
            (Some(k), None) => k,
            (None, Some(c)) => {
                if !(c.is_finite() && c > 0.0) {
                    return Err(ConfigError::Field {
                        path: "params.cooperativity".into(),
                        message: format!("must be finite and > 0, got {c}"),
                    });
                }
                if !(gamma > 0.0) {
                    return Err(ConfigError::Field {
                        path: "params.gamma".into(),
                        message: "cooperativity needs gamma > 0".into(),
                    });
                }
                raw.g * raw.g / (2.0 * gamma * c)
            }
            (None, None) => return Err(ConfigError::Missing("params.kappa")),
        };
        let p = match self.units {
            Units::Gamma => CqedParams::new(raw.g, kappa, gamma),
            Units::Absolute => {
                CqedParams::new(raw.g, kappa, gamma).and_then(|_| CqedParams::from_absolute(raw.g, kappa, gamma))
            }
        };
        p.map_err(|e| field_error("params", e))
    }

    /// Pulse schedule in the same units as [`RunConfig::params`].
    pub fn pulse(&self, p: &CqedParams) -> Result<(PulseSchedule, Omega0Source), ConfigError> {
        let raw = self.pulse.as_ref().ok_or(ConfigError::Missing("pulse"))?;
        let scale = match self.units {
            Units::Gamma => 1.0,
            // validated > 0 by params()
            Units::Absolute => self.params.as_ref().and_then(|r| r.gamma).unwrap_or(1.0),
        };
        let tau = raw.tau * scale;
        let (omega0, source) = match raw.omega0 {
            Some(w) => (w / scale, Omega0Source::Config),
            None => {
                let w = omega0_from_balancing(p, tau).map_err(|e| ConfigError::Field {
                    path: "pulse.omega0".into(),
                    message: format!("omitted, but the balancing value is unavailable: {e}"),
                })?;
                (w, Omega0Source::Balancing)
            }
        };
        let s = match raw.halfwidth {
            Some(h) => PulseSchedule::with_halfwidth(omega0, tau, h),
            None => PulseSchedule::new(omega0, tau),
        };
        Ok((s.map_err(|e| field_error("pulse", e))?, source))
    }

    pub fn sweep(&self) -> Result<&SweepSpec, ConfigError> {
        self.sweep.as_ref().ok_or(ConfigError::Missing("sweep"))
    }
}

/// Sets `path` (dot-separated) in `doc` to `value`, creating objects along
/// the way. The value is read as JSON, or as a string if that fails.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(format!("`{assignment}` is not of the form path=value")))?;
    if path.is_empty() || path.split('.').any(str::is_empty) {
        return Err(ConfigError::Override(format!("`{path}` is not a valid field path")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = doc;
    let keys: Vec<&str> = path.split('.').collect();
    for (k, key) in keys.iter().enumerate() {
        if !node.is_object() {
            return Err(ConfigError::Override(format!("`{}` is not an object", keys[..k].join("."))));
        }
        let map = node.as_object_mut().expect("checked above");
        if k == keys.len() - 1 {
            map.insert((*key).to_string(), value);
            return Ok(());
        }
        node = map.entry((*key).to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    unreachable!("path has at least one key")
}

pub fn parse(doc: Value) -> Result<RunConfig, ConfigError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        ConfigError::Field { path, message: e.into_inner().to_string() }
    })
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let mut doc = match path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
            serde_json::from_str(&text).map_err(|source| ConfigError::Syntax { path: path.to_path_buf(), source })?
        }
        None => Value::Object(Map::new()),
    };
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    parse(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn field_path_names_nested_error() {
        let err = parse(json!({"sim": {"rel_tol": "tight"}})).unwrap_err();
        assert!(err.to_string().contains("sim.rel_tol"), "{err}");
        let err = parse(json!({"factors": {"f_cp": 2.0}})).unwrap_err();
        assert!(err.to_string().contains("factors") && err.to_string().contains("f_cp"), "{err}");
    }

    #[test]
    fn negative_gamma_is_reported_with_path() {
        let cfg = parse(json!({"params": {"g": 1.0, "kappa": 0.1, "gamma": -1.0}})).unwrap();
        let err = cfg.params().unwrap_err();
        assert!(err.to_string().contains("params.gamma"), "{err}");
    }

    #[test]
    fn cooperativity_sets_kappa() {
        let cfg = parse(json!({"params": {"g": 50.0, "cooperativity": 200.0}})).unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.g(), p.kappa(), p.gamma()), (50.0, 6.25, 1.0));
    }

    #[test]
    fn absolute_units_are_normalized() {
        let cfg = parse(json!({
            "units": "absolute",
            "params": {"g": 100.0, "kappa": 12.5, "gamma": 2.0},
            "pulse": {"omega0": 10.0, "tau": 0.5}
        }))
        .unwrap();
        let p = cfg.params().unwrap();
        assert_eq!((p.g(), p.kappa(), p.gamma()), (50.0, 6.25, 1.0));
        let (s, src) = cfg.pulse(&p).unwrap();
        assert_eq!((s.omega0(), s.tau(), src), (5.0, 1.0, Omega0Source::Config));
    }

    #[test]
    fn omitted_omega0_uses_balancing() {
        let cfg = parse(json!({"params": {"g": 50.0, "cooperativity": 200.0}, "pulse": {"tau": 1.0}})).unwrap();
        let p = cfg.params().unwrap();
        let (s, src) = cfg.pulse(&p).unwrap();
        assert_eq!(src, Omega0Source::Balancing);
        assert!((s.omega0() * s.omega0() - 2.0 * 200f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn overrides_patch_nested_fields() {
        let mut doc = json!({"params": {"g": 1.0}});
        apply_override(&mut doc, "params.kappa=0.25").unwrap();
        apply_override(&mut doc, "units=absolute").unwrap();
        apply_override(&mut doc, "sim.rel_tol=1e-10").unwrap();
        assert_eq!(doc, json!({"params": {"g": 1.0, "kappa": 0.25}, "units": "absolute", "sim": {"rel_tol": 1e-10}}));
        assert!(apply_override(&mut doc, "params.g.x=1").is_err());
        assert!(apply_override(&mut doc, "noequals").is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = parse(json!({"params": {"g": 1.0, "kapa": 0.1}})).unwrap_err();
        assert!(err.to_string().contains("params"), "{err}");
    }
}
