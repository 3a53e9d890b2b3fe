//! Experiment configuration: one TOML file per run, validated into the
//! library types. Only scalar tolerances can be overridden from the command
//! line, and every override is folded into the config hash.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ifs::{validate_system, Grid, IfsSystem, MapSpec, Potential, PotentialKind, SymbolicSpace};
use crate::ldp::{check_betas, CheckSettings, DEFAULT_BETAS};
use crate::thermo::{EigenMethod, ThermoSettings};
use crate::tropical::{SubactionMethod, TropicalSettings};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemBlock,
    pub potential: PotentialBlock,
    pub grid: GridBlock,
    pub symbolic: Option<SymbolicBlock>,
    #[serde(default)]
    pub schedule: ScheduleBlock,
    #[serde(default)]
    pub tolerances: ToleranceBlock,
    #[serde(default)]
    pub ldp: LdpBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    pub maps: Vec<MapSpec>,
    pub weights: Vec<f64>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialBlock {
    Constant { values: Vec<f64>, lip_bound: Option<f64> },
    Affine { intercepts: Vec<f64>, slopes: Vec<f64>, lip_bound: Option<f64> },
    Tabulated { table: Vec<Vec<f64>>, lip_bound: Option<f64> },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub n_points: usize,
    /// above this many nodes the closure is stored by columns
    pub dense_limit: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolicBlock {
    pub depth: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleBlock {
    pub betas: Vec<f64>,
    /// `β` used by the `thermo` command when `--beta` is absent
    pub thermo_beta: Option<f64>,
    pub eigen_method: EigenMethodName,
    pub subaction: SubactionMethod,
}

impl Default for ScheduleBlock {
    fn default() -> Self {
        Self {
            betas: DEFAULT_BETAS.to_vec(),
            thermo_beta: None,
            eigen_method: EigenMethodName::Power,
            subaction: SubactionMethod::Policy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigenMethodName {
    Power,
    Discounted,
}

impl From<EigenMethodName> for EigenMethod {
    fn from(m: EigenMethodName) -> Self {
        match m {
            EigenMethodName::Power => EigenMethod::Power,
            EigenMethodName::Discounted => EigenMethod::Discounted,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ToleranceBlock {
    pub eigen: f64,
    pub eigen_max_iter: usize,
    pub gibbs: f64,
    pub gibbs_max_iter: usize,
    pub aubry: Option<f64>,
    pub calibration: Option<f64>,
    pub ldp: f64,
    pub v: f64,
    pub slack: f64,
}

impl Default for ToleranceBlock {
    fn default() -> Self {
        let t = ThermoSettings::default();
        let c = CheckSettings::default();
        Self {
            eigen: t.eigen_tol,
            eigen_max_iter: t.eigen_max_iter,
            gibbs: t.gibbs_tol,
            gibbs_max_iter: t.gibbs_max_iter,
            aubry: None,
            calibration: None,
            ldp: c.tol_ldp,
            v: c.tol_v,
            slack: c.slack,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdpBlock {
    pub burn_in: Option<usize>,
    pub centers: Option<Vec<f64>>,
    pub radius: Option<f64>,
    /// defaults to true exactly for place-dependent potentials
    pub conditional: Option<bool>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

/// A parsed, overridden and validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub sha256: String,
    pub sys: IfsSystem,
    pub potential: Potential,
    pub grid: Grid,
    pub symbolic: Option<SymbolicSpace>,
    pub betas: Vec<f64>,
    pub thermo: ThermoSettings,
    pub eigen_method: EigenMethod,
    pub tropical: TropicalSettings,
    pub checks: CheckSettings,
}

impl Experiment {
    pub fn wants(&self, f: Format) -> bool {
        self.config.output.formats.contains(&f)
    }
}

/// Applies one `KEY=VAL` override to the `[tolerances]` table. Keys may be
/// written bare or as `tolerances.KEY`.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, val) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::Parse(format!("override '{spec}' is not KEY=VAL")))?;
    let key = key.trim();
    let key = key.strip_prefix("tolerances.").unwrap_or(key);
    let val = val.trim();
    let value = match key {
        "eigen_max_iter" | "gibbs_max_iter" => val
            .parse::<i64>()
            .map(toml::Value::Integer)
            .map_err(|e| ConfigError::Parse(format!("override {key}: {e}")))?,
        "eigen" | "gibbs" | "aubry" | "calibration" | "ldp" | "v" | "slack" => val
            .parse::<f64>()
            .map(toml::Value::Float)
            .map_err(|e| ConfigError::Parse(format!("override {key}: {e}")))?,
        _ => return Err(ConfigError::Parse(format!("unknown override key '{key}'"))),
    };
    let tol = doc
        .entry("tolerances")
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match tol {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(ConfigError::Parse("'tolerances' must be a table".into())),
    }
}

/// Hash of the raw config bytes followed by each override on its own line.
pub fn config_hash(raw: &[u8], overrides: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(raw);
    for o in overrides {
        h.update(b"\n--tol-override ");
        h.update(o.as_bytes());
    }
    hex::encode(h.finalize())
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Experiment, ConfigError> {
    let raw = std::fs::read(path)
        .map_err(|e| ConfigError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let text = String::from_utf8(raw.clone()).map_err(|e| ConfigError::Parse(e.to_string()))?;
    // parse first so syntax and schema errors keep their line numbers
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let config = if overrides.is_empty() {
        config
    } else {
        let mut doc: toml::Table =
            toml::from_str(&text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?
    };
    build(config, config_hash(&raw, overrides))
}

pub fn build(config: ExperimentConfig, sha256: String) -> Result<Experiment, ConfigError> {
    let invalid = |m: String| ConfigError::Validation(m);
    let s = &config.system;
    let sys = IfsSystem::from_parts_unchecked(s.maps.clone(), s.weights.clone(), s.gamma);
    let report = validate_system(&sys);
    if !report.is_valid() {
        return Err(invalid(report.to_string()));
    }
    let (kind, lip) = match &config.potential {
        PotentialBlock::Constant { values, lip_bound } => {
            (PotentialKind::ConstantPerMap { values: values.clone() }, *lip_bound)
        }
        PotentialBlock::Affine { intercepts, slopes, lip_bound } => (
            PotentialKind::AffinePerMap { intercepts: intercepts.clone(), slopes: slopes.clone() },
            *lip_bound,
        ),
        PotentialBlock::Tabulated { table, lip_bound } => {
            (PotentialKind::Tabulated { table: table.clone() }, *lip_bound)
        }
    };
    let potential = match lip {
        Some(l) => Potential::with_declared_lip(kind, l),
        None => Potential::new(kind),
    }
    .map_err(|e| invalid(e.to_string()))?;
    potential.check_arity(&sys).map_err(|e| invalid(e.to_string()))?;
    let grid = Grid::new(config.grid.n_points).map_err(|e| invalid(e.to_string()))?;
    let symbolic = config
        .symbolic
        .as_ref()
        .map(|b| SymbolicSpace::new(sys.n_maps(), b.depth))
        .transpose()
        .map_err(|e| invalid(e.to_string()))?;
    check_betas(&config.schedule.betas).map_err(|e| invalid(e.to_string()))?;
    if let Some(b) = config.schedule.thermo_beta {
        if !(b.is_finite() && b > 0.0) {
            return Err(invalid(format!("thermo_beta = {b} must be positive")));
        }
    }

    let t = &config.tolerances;
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("tolerance {name} = {v} must be positive")))
        }
    };
    positive("eigen", t.eigen)?;
    positive("gibbs", t.gibbs)?;
    positive("ldp", t.ldp)?;
    positive("v", t.v)?;
    if let Some(a) = t.aubry {
        positive("aubry", a)?;
    }
    if let Some(c) = t.calibration {
        positive("calibration", c)?;
    }
    if !(t.slack.is_finite() && t.slack >= 0.0) {
        return Err(invalid(format!("tolerance slack = {} must be non-negative", t.slack)));
    }

    let thermo = ThermoSettings {
        eigen_tol: t.eigen,
        eigen_max_iter: t.eigen_max_iter,
        gibbs_tol: t.gibbs,
        gibbs_max_iter: t.gibbs_max_iter,
    };
    let mut tropical = TropicalSettings {
        method: config.schedule.subaction,
        aubry_tol: t.aubry,
        calibration_tol: t.calibration,
        ..TropicalSettings::default()
    };
    if let Some(d) = config.grid.dense_limit {
        tropical.dense_limit = d;
    }
    let defaults = CheckSettings::default();
    let l = &config.ldp;
    let checks = CheckSettings {
        tol_ldp: t.ldp,
        tol_v: t.v,
        slack: t.slack,
        burn_in: l.burn_in.unwrap_or(defaults.burn_in),
        centers: l.centers.clone().unwrap_or(defaults.centers),
        radius: l.radius.unwrap_or(defaults.radius),
        conditional: l.conditional.unwrap_or(!potential.is_constant_per_map()),
    };
    if checks.centers.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(invalid("ball centers must lie in [0, 1]".into()));
    }
    Ok(Experiment {
        betas: config.schedule.betas.clone(),
        eigen_method: config.schedule.eigen_method.into(),
        sys,
        potential,
        grid,
        symbolic,
        thermo,
        tropical,
        checks,
        sha256,
        config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const S1: &str = r#"
[system]
maps = [{ slope = 0.5, offset = 0.0 }, { slope = 0.5, offset = 0.5 }]
weights = [0.5, 0.5]
gamma = 0.5

[potential]
kind = "constant"
values = [0.0, -1.0]

[grid]
n_points = 33
"#;

    fn parse(text: &str) -> Result<Experiment, ConfigError> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        build(c, String::new())
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let e = parse(S1).unwrap();
        assert_eq!(e.sys, IfsSystem::binary());
        assert_eq!(e.betas, DEFAULT_BETAS.to_vec());
        assert!(!e.checks.conditional);
        assert_eq!(e.thermo, ThermoSettings::default());
        assert!(e.wants(Format::Csv) && e.wants(Format::Json));
    }

    #[test]
    fn unknown_keys_are_parse_errors_with_lines() {
        let bad = S1.replace("gamma = 0.5", "gamma = 0.5\ncolour = 1");
        match parse(&bad) {
            Err(ConfigError::Parse(m)) => assert!(m.contains("line") && m.contains("colour"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad = S1.replace("kind = \"constant\"", "kind = \"constant\"\nslopes = [1.0, 1.0]");
        assert!(matches!(parse(&bad), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn validation_names_the_map() {
        let bad = S1.replace("{ slope = 0.5, offset = 0.5 }", "{ slope = 1.1, offset = 0.0 }");
        match parse(&bad) {
            Err(ConfigError::Validation(m)) => assert!(m.contains("map 1"), "{m}"),
            other => panic!("{other:?}"),
        }
        let bad = S1.replace("values = [0.0, -1.0]", "values = [0.0]");
        assert!(matches!(parse(&bad), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn overrides_change_tolerances_and_hash() {
        let mut doc: toml::Table = toml::from_str(S1).unwrap();
        apply_override(&mut doc, "tolerances.ldp=0.2").unwrap();
        apply_override(&mut doc, "eigen_max_iter=5").unwrap();
        let c: ExperimentConfig = toml::Value::Table(doc).try_into().unwrap();
        assert_eq!(c.tolerances.ldp, 0.2);
        assert_eq!(c.tolerances.eigen_max_iter, 5);
        let mut doc: toml::Table = toml::from_str(S1).unwrap();
        assert!(apply_override(&mut doc, "grid.n_points=3").is_err());
        assert!(apply_override(&mut doc, "ldp").is_err());
        assert_ne!(config_hash(b"x", &[]), config_hash(b"x", &["ldp=0.2".into()]));
        assert_eq!(config_hash(b"x", &[]).len(), 64);
    }

    #[test]
    fn place_dependent_potentials_are_conditional() {
        let text = S1.replace(
            "kind = \"constant\"\nvalues = [0.0, -1.0]",
            "kind = \"affine\"\nintercepts = [0.0, -1.0]\nslopes = [-1.0, 1.0]",
        );
        let e = parse(&text).unwrap();
        assert!(e.checks.conditional);
        assert_eq!(e.potential.lip_bound(), 1.0);
    }
}
