//! Run configuration: TOML files layered over a named preset, plus dotted
//! `key=value` overrides, resolved into a validated [`RunConfig`].
//!
//! Every value that differs from the preset is recorded in [`Provenance`].
//! Unknown keys anywhere in the tree are rejected.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::energy::{default_leaflet_distance, ModelParams};
use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::integrators::{IntegratorConfig, StoppingCriterion};
use crate::io::SnapshotFormat;
use crate::scenarios::{preset, EllipsoidSpec, ExperimentPreset, ShapeLabel};

/// Model constants as written in a config file. `D` defaults to `2ε/3` and
/// `A0` to `β` when omitted, so overriding `epsilon` or `beta` carries them along.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub epsilon: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "dA0")]
    pub da0: f64,
    #[serde(rename = "A0", default, skip_serializing_if = "Option::is_none")]
    pub a0: Option<f64>,
}

impl ParamsConfig {
    pub fn from_params(p: &ModelParams) -> Self {
        ParamsConfig {
            epsilon: p.epsilon,
            kappa: p.kappa,
            kappa_bar: p.kappa_bar,
            c: p.c,
            d: (p.d != default_leaflet_distance(p.epsilon)).then_some(p.d),
            m1: p.m1,
            m2: p.m2,
            alpha: p.alpha,
            beta: p.beta,
            da0: p.da0,
            a0: (p.a0 != p.beta).then_some(p.a0),
        }
    }

    pub fn resolve(&self) -> ModelParams {
        ModelParams {
            epsilon: self.epsilon,
            kappa: self.kappa,
            kappa_bar: self.kappa_bar,
            c: self.c,
            d: self.d.unwrap_or_else(|| default_leaflet_distance(self.epsilon)),
            m1: self.m1,
            m2: self.m2,
            alpha: self.alpha,
            beta: self.beta,
            da0: self.da0,
            a0: self.a0.unwrap_or(self.beta),
        }
    }
}

/// Initial ellipsoid; `epsilon` follows the model's interface width unless given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub center: [f64; 3],
    pub divisors: [f64; 3],
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

impl InitConfig {
    pub fn from_spec(spec: &EllipsoidSpec, model_epsilon: f64) -> Self {
        InitConfig {
            center: spec.center,
            divisors: spec.divisors,
            offset: spec.offset,
            epsilon: (spec.epsilon != model_epsilon).then_some(spec.epsilon),
        }
    }

    pub fn resolve(&self, model_epsilon: f64) -> EllipsoidSpec {
        EllipsoidSpec {
            center: self.center,
            divisors: self.divisors,
            offset: self.offset,
            epsilon: self.epsilon.unwrap_or(model_epsilon),
        }
    }
}

fn default_snapshot_every() -> usize {
    10_000
}

fn default_diag_every() -> usize {
    100
}

fn default_checkpoint_every() -> usize {
    10_000
}

fn default_formats() -> Vec<SnapshotFormat> {
    vec![SnapshotFormat::Raw, SnapshotFormat::Vti]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    #[serde(default = "default_diag_every")]
    pub diag_every: usize,
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
    #[serde(default = "default_formats")]
    pub formats: Vec<SnapshotFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: None,
            snapshot_every: default_snapshot_every(),
            diag_every: default_diag_every(),
            checkpoint_every: default_checkpoint_every(),
            formats: default_formats(),
        }
    }
}

fn default_stopping() -> StoppingCriterion {
    StoppingCriterion::new(200_000)
}

/// Targets that may be replaced by the measured value of the initial field.
pub const DERIVABLE_TARGETS: [&str; 3] = ["alpha", "beta", "dA0"];

/// A fully resolved run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_shape: Option<ShapeLabel>,
    pub domain: GridSpec,
    pub params: ParamsConfig,
    pub init: InitConfig,
    pub integrator: IntegratorConfig,
    #[serde(default = "default_stopping")]
    pub stopping: StoppingCriterion,
    #[serde(default)]
    pub output: OutputConfig,
    /// Replace these targets by `V`, `A` or `ΔA` of the initial field before running.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub derive_targets: Vec<String>,
    /// Apply 2/3-rule truncation to every spectral derivative.
    #[serde(default)]
    pub dealias: bool,
}

impl RunConfig {
    pub fn from_preset(p: &ExperimentPreset) -> Self {
        RunConfig {
            preset: Some(p.name.clone()),
            expected_shape: Some(p.expected_shape),
            domain: p.domain,
            params: ParamsConfig::from_params(&p.params),
            init: InitConfig::from_spec(&p.init, p.params.epsilon),
            integrator: p.integrator,
            stopping: default_stopping(),
            output: OutputConfig::default(),
            derive_targets: Vec::new(),
            dealias: false,
        }
    }

    pub fn model_params(&self) -> ModelParams {
        self.params.resolve()
    }

    pub fn initial_spec(&self) -> EllipsoidSpec {
        self.init.resolve(self.params.epsilon)
    }

    /// Check every invariant, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        self.domain.validate().map_err(|e| Error::config("domain", e.to_string()))?;
        if let Some((name, reason)) = self.model_params().invalid_field() {
            return Err(Error::config(format!("params.{name}"), reason));
        }
        self.initial_spec().validate(&self.domain)?;
        self.integrator.validate().map_err(|e| Error::config("integrator", e.to_string()))?;
        self.stopping.validate()?;
        for (key, v) in [
            ("output.snapshot_every", self.output.snapshot_every),
            ("output.diag_every", self.output.diag_every),
            ("output.checkpoint_every", self.output.checkpoint_every),
        ] {
            if v == 0 {
                return Err(Error::config(key, "cadence must be >= 1"));
            }
        }
        let mut seen = BTreeSet::new();
        for t in &self.derive_targets {
            if !DERIVABLE_TARGETS.contains(&t.as_str()) {
                return Err(Error::config("derive_targets", format!("`{t}` is not one of alpha, beta, dA0")));
            }
            if !seen.insert(t) {
                return Err(Error::config("derive_targets", format!("`{t}` listed twice")));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes to TOML")
    }
}

/// Where an override came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OverrideSource {
    Config,
    Cli,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub key: String,
    pub value: String,
    pub source: OverrideSource,
}

/// How a [`RunConfig`] was assembled.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub preset: Option<String>,
    pub config_file: Option<PathBuf>,
    pub overrides: Vec<Override>,
}

/// Builder that layers a preset, a config file and command-line overrides.
#[derive(Debug, Default)]
pub struct ConfigLoader {
    preset: Option<String>,
    file: Option<(PathBuf, Table)>,
    cli: Vec<(String, Value)>,
}

impl ConfigLoader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn preset(mut self, name: impl Into<String>) -> Self {
        self.preset = Some(name.into());
        self
    }

    pub fn file(mut self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let table = parse_table(&text).map_err(|reason| Error::config(path.display().to_string(), reason))?;
        self.file = Some((path.to_path_buf(), table));
        Ok(self)
    }

    pub fn file_text(mut self, name: &str, text: &str) -> Result<Self> {
        let table = parse_table(text).map_err(|reason| Error::config(name, reason))?;
        self.file = Some((PathBuf::from(name), table));
        Ok(self)
    }

    /// Dotted-path override with a typed value.
    pub fn set_value(mut self, key: &str, value: Value) -> Self {
        self.cli.push((key.to_owned(), value));
        self
    }

    /// `key=value`, where the value is read as a TOML literal and falls back to a bare string.
    pub fn set(self, assignment: &str) -> Result<Self> {
        let (key, raw) = assignment.split_once('=').ok_or_else(|| Error::config(assignment, "expected key=value"))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(Error::config(assignment, "empty key"));
        }
        Ok(self.set_value(key, parse_literal(raw.trim())))
    }

    /// Cubic grid override: `n` samples per axis, same box.
    pub fn grid(self, n: usize) -> Self {
        let v = Value::Integer(n as i64);
        self.set_value("domain.nx", v.clone()).set_value("domain.ny", v.clone()).set_value("domain.nz", v)
    }

    pub fn load(self) -> Result<(RunConfig, Provenance)> {
        let mut file_table = self.file.as_ref().map(|(_, t)| t.clone()).unwrap_or_default();
        let file_preset = match file_table.remove("preset") {
            Some(Value::String(s)) => Some(s),
            Some(_) => return Err(Error::config("preset", "must be a string")),
            None => None,
        };
        let preset_name = self.preset.clone().or(file_preset);

        let mut tree = match &preset_name {
            Some(name) => {
                let p = preset(name)?;
                toml::Table::try_from(RunConfig::from_preset(&p)).expect("preset serializes to a TOML table")
            }
            None => Table::new(),
        };
        let mut prov = Provenance {
            preset: preset_name.as_ref().map(|n| preset(n).map(|p| p.name)).transpose()?,
            config_file: self.file.as_ref().map(|(p, _)| p.clone()),
            overrides: Vec::new(),
        };
        if let Some(name) = &prov.preset {
            tree.insert("preset".into(), Value::String(name.clone()));
        }

        if let Some(Value::Integer(n)) = file_table.remove("grid") {
            for axis in ["nx", "ny", "nz"] {
                file_table_insert(&mut file_table, &format!("domain.{axis}"), Value::Integer(n))?;
            }
        } else if file_table.contains_key("grid") {
            return Err(Error::config("grid", "must be an integer"));
        }
        let mut leaves = Vec::new();
        collect_leaves("", &Value::Table(file_table), &mut leaves);
        for (key, value) in leaves {
            apply(&mut tree, &key, value.clone())?;
            prov.overrides.push(Override { key, value: value.to_string(), source: OverrideSource::Config });
        }
        for (key, value) in self.cli {
            apply(&mut tree, &key, value.clone())?;
            prov.overrides.push(Override { key, value: value.to_string(), source: OverrideSource::Cli });
        }

        let cfg: RunConfig = serde_path_to_error::deserialize(Value::Table(tree)).map_err(|e| {
            let key = e.path().to_string();
            Error::config(if key == "." { String::new() } else { key }, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok((cfg, prov))
    }
}

fn parse_table(text: &str) -> std::result::Result<Table, String> {
    text.parse::<Table>().map_err(|e| e.to_string())
}

fn parse_literal(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_owned())),
        Err(_) => Value::String(raw.to_owned()),
    }
}

fn collect_leaves(prefix: &str, value: &Value, out: &mut Vec<(String, Value)>) {
    match value {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                collect_leaves(&key, v, out);
            }
        }
        leaf => out.push((prefix.to_owned(), leaf.clone())),
    }
}

fn file_table_insert(t: &mut Table, key: &str, value: Value) -> Result<()> {
    apply(t, key, value)
}

/// Set a dotted path, creating intermediate tables.
fn apply(tree: &mut Table, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    let mut node = tree;
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::config(key, "empty path segment"));
        }
        if i + 1 == parts.len() {
            node.insert((*part).to_owned(), value);
            return Ok(());
        }
        let entry = node.entry((*part).to_owned()).or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => return Err(Error::config(key, format!("`{part}` is not a table"))),
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::Scheme;

    #[test]
    fn preset_resolves_to_catalog_values() {
        let (cfg, prov) = ConfigLoader::new().preset("discocyte").load().unwrap();
        let p = preset("discocyte").unwrap();
        assert_eq!(cfg.model_params(), p.params);
        assert_eq!(cfg.initial_spec(), p.init);
        assert_eq!(cfg.domain, p.domain);
        assert_eq!(cfg.integrator, p.integrator);
        assert!(prov.overrides.is_empty());
        assert_eq!(prov.preset.as_deref(), Some("discocyte"));
    }

    #[test]
    fn file_override_is_recorded() {
        let text = "preset = \"gourd\"\n[params]\ndA0 = 0.2\n";
        let (cfg, prov) = ConfigLoader::new().file_text("over.toml", text).unwrap().load().unwrap();
        assert_eq!(cfg.params.da0, 0.2);
        assert_eq!(cfg.params.beta, 0.2390);
        assert_eq!(prov.overrides.len(), 1);
        assert_eq!(prov.overrides[0].key, "params.dA0");
        assert_eq!(prov.overrides[0].source, OverrideSource::Config);
    }

    #[test]
    fn negative_penalty_is_a_config_error() {
        let err = ConfigLoader::new().preset("discocyte").set("params.M1=-1").unwrap().load().unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "params.M1"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let err = ConfigLoader::new().preset("torus").set("params.gamma=1").unwrap().load().unwrap_err();
        match err {
            Error::Config { key, reason } => {
                assert!(key.starts_with("params"), "{key}");
                assert!(reason.contains("gamma"), "{reason}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = ConfigLoader::new().file_text("x.toml", "preset = \"torus\"\ncolour = 3\n").unwrap().load();
        assert!(matches!(err, Err(Error::Config { .. })));
    }

    #[test]
    fn epsilon_override_carries_leaflet_distance_and_init_width() {
        let (cfg, _) =
            ConfigLoader::new().preset("discocyte").grid(32).set("params.epsilon=0.06").unwrap().load().unwrap();
        let p = cfg.model_params();
        assert_eq!(cfg.domain.nx, 32);
        assert_eq!(cfg.domain.lx, 1.0);
        assert!((p.d - 0.04).abs() < 1e-15);
        assert_eq!(cfg.initial_spec().epsilon, 0.06);
        assert_eq!(p.a0, p.beta);
    }

    #[test]
    fn inline_scenario_without_preset() {
        let text = r#"
            [domain]
            nx = 8
            ny = 8
            nz = 8
            lx = 1.0
            ly = 1.0
            lz = 1.0
            [params]
            epsilon = 0.1
            kappa = 1.0
            kappa_bar = 1.4
            C = 0.0
            M1 = 1e3
            M2 = 1e3
            alpha = 0.1
            beta = 0.5
            dA0 = 0.1
            [init]
            center = [0.5, 0.5, 0.5]
            divisors = [0.1, 0.1, 0.1]
            offset = 0.3
            [integrator]
            scheme = "fully_implicit"
            dt = 1e-6
            [stopping]
            max_steps = 10
        "#;
        let (cfg, prov) = ConfigLoader::new().file_text("inline.toml", text).unwrap().load().unwrap();
        assert_eq!(cfg.integrator.scheme, Scheme::FullyImplicit);
        assert_eq!(cfg.integrator.picard_tol, 1e-10);
        assert_eq!(cfg.output.diag_every, 100);
        assert!(cfg.preset.is_none());
        assert!(prov.preset.is_none());
    }

    #[test]
    fn missing_required_section_names_it() {
        let err = ConfigLoader::new().file_text("x.toml", "[stopping]\nmax_steps = 3\n").unwrap().load().unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }

    #[test]
    fn resolved_config_roundtrips_through_toml() {
        let (cfg, _) =
            ConfigLoader::new().preset("nested").set("integrator.scheme=\"backward_euler\"").unwrap().load().unwrap();
        let (again, _) = ConfigLoader::new().file_text("resolved.toml", &cfg.to_toml()).unwrap().load().unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn bare_strings_are_accepted_for_set() {
        let (cfg, _) =
            ConfigLoader::new().preset("torus").set("integrator.scheme=fully_implicit").unwrap().load().unwrap();
        assert_eq!(cfg.integrator.scheme, Scheme::FullyImplicit);
        assert!(ConfigLoader::new().set("novalue").is_err());
    }

    #[test]
    fn zero_cadence_and_bad_derive_targets_fail() {
        assert!(ConfigLoader::new().preset("torus").set("output.diag_every=0").unwrap().load().is_err());
        assert!(ConfigLoader::new().preset("torus").set("derive_targets=[\"kappa\"]").unwrap().load().is_err());
        let (cfg, _) = ConfigLoader::new().preset("torus").set("derive_targets=[\"dA0\"]").unwrap().load().unwrap();
        assert_eq!(cfg.derive_targets, vec!["dA0".to_string()]);
    }
}
