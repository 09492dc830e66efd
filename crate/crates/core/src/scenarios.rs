//! Initial conditions and the catalog of named experiments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, ModelParams};
use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D};
use crate::integrators::{IntegratorConfig, Scheme};

/// `u0 = tanh((R − Σ (x_i − c_i)²/d_i) / (√2 ε))`
///
/// The divisors `d_i` are used as given; they are not semi-axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EllipsoidSpec {
    pub center: [f64; 3],
    pub divisors: [f64; 3],
    /// Offset `R` subtracted from the quadratic form.
    pub offset: f64,
    pub epsilon: f64,
}

impl EllipsoidSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<()> {
        if self.divisors.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::config("init.divisors", "must be positive"));
        }
        if !(self.offset > 0.0) {
            return Err(Error::config("init.offset", "must be positive"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("init.epsilon", "must be positive"));
        }
        for (c, l) in self.center.iter().zip(grid.lengths()) {
            if !(*c >= 0.0 && *c <= l) {
                return Err(Error::config("init.center", format!("{c} lies outside [0, {l}]")));
            }
        }
        Ok(())
    }

    /// Value of the quadratic form at a point.
    pub fn quadratic(&self, x: [f64; 3]) -> f64 {
        (0..3).map(|i| (x[i] - self.center[i]).powi(2) / self.divisors[i]).sum()
    }

    pub fn value_at(&self, x: [f64; 3]) -> f64 {
        ((self.offset - self.quadratic(x)) / (std::f64::consts::SQRT_2 * self.epsilon)).tanh()
    }
}

pub fn tanh_ellipsoid(spec: &EllipsoidSpec, grid: &GridSpec) -> Result<ScalarField3D> {
    spec.validate(grid)?;
    Ok(ScalarField3D::from_fn(*grid, |x, y, z| spec.value_at([x, y, z])))
}

/// `(V, A, ΔA)` of a field, to be used as `(α, β, ΔA0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstraints {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "dA0")]
    pub da0: f64,
}

pub fn derive_constraints(model: &EnergyModel, phi_0: &ScalarField3D) -> DerivedConstraints {
    let m = model.measures(phi_0);
    DerivedConstraints { alpha: m.volume, beta: m.area, da0: m.area_difference }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeLabel {
    Discocyte,
    Torus,
    Biconcave,
    EarlyGourd,
    ElongatedGourd,
    Gourd,
    Cylinder,
    TwoSphere,
    Chain,
    ThreeArmed,
    FourArmed,
    SixArmed,
    Nested,
}

impl fmt::Display for ShapeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPreset {
    pub name: String,
    /// Experiment number, with Table-style suffix for the gourd family (`3a`…`3e`).
    pub experiment: String,
    pub domain: GridSpec,
    pub params: ModelParams,
    pub init: EllipsoidSpec,
    pub integrator: IntegratorConfig,
    pub expected_shape: ShapeLabel,
    /// Targets deliberately moved away from the initial configuration.
    pub varied: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl ExperimentPreset {
    pub fn initial_field(&self) -> Result<ScalarField3D> {
        tanh_ellipsoid(&self.init, &self.domain)
    }

    pub fn energy_model(&self) -> Result<EnergyModel> {
        EnergyModel::new(self.domain, self.params)
    }
}

impl FromStr for ShapeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::config("expected_shape", format!("unknown shape `{s}`")))
    }
}

const SQ: fn(f64) -> f64 = |x| x * x;

struct Row {
    name: &'static str,
    experiment: &'static str,
    epsilon: f64,
    dt: f64,
    alpha: f64,
    beta: f64,
    da0: f64,
    divisors: [f64; 3],
    offset: f64,
    shape: ShapeLabel,
    varied: bool,
    note: Option<&'static str>,
}

fn unit_preset(r: Row) -> ExperimentPreset {
    let domain = GridSpec::cubic(64, 1.0).expect("valid grid");
    let params = ModelParams::new(r.epsilon, 1.0, 1.4, 0.0, 1e5, 1e4, r.alpha, r.beta, r.da0);
    ExperimentPreset {
        name: r.name.into(),
        experiment: r.experiment.into(),
        domain,
        params,
        init: EllipsoidSpec { center: [0.5; 3], divisors: r.divisors, offset: r.offset, epsilon: r.epsilon },
        integrator: IntegratorConfig::new(Scheme::SemiImplicit, r.dt),
        expected_shape: r.shape,
        varied: r.varied,
        note: r.note.map(str::to_owned),
    }
}

/// The 13 named experiments, in catalog order.
pub fn catalog() -> Vec<ExperimentPreset> {
    let flat = [SQ(0.2), SQ(0.2), SQ(0.35)];
    let ball = [SQ(0.35); 3];
    let gourd = |name, experiment, beta, da0, shape| Row {
        name,
        experiment,
        epsilon: 0.05,
        dt: 5e-7,
        alpha: 0.0077,
        beta,
        da0,
        divisors: flat,
        offset: 0.5,
        shape,
        varied: true,
        note: None,
    };
    let mut out: Vec<ExperimentPreset> = vec![
        Row {
            name: "discocyte",
            experiment: "1",
            epsilon: 0.04,
            dt: 5e-7,
            alpha: 0.0289,
            beta: 0.4880,
            da0: 0.1090,
            divisors: [0.5, 0.5, 0.1],
            offset: 0.35,
            shape: ShapeLabel::Discocyte,
            varied: false,
            note: None,
        },
        Row {
            name: "torus",
            experiment: "2",
            epsilon: 0.03,
            dt: 2e-7,
            alpha: 0.0652,
            beta: 0.9092,
            da0: 0.2839,
            divisors: ball,
            offset: 0.6,
            shape: ShapeLabel::Torus,
            varied: false,
            note: None,
        },
        gourd("biconcave", "3a", 0.1992, 0.1614, ShapeLabel::Biconcave),
        gourd("early_gourd", "3b", 0.2068, 0.1676, ShapeLabel::EarlyGourd),
        gourd("elongated_gourd", "3c", 0.2390, 0.1906, ShapeLabel::ElongatedGourd),
        gourd("gourd", "3d", 0.2390, 0.2253, ShapeLabel::Gourd),
        gourd("cylinder", "3e", 0.2390, 0.2426, ShapeLabel::Cylinder),
        Row {
            name: "two_sphere",
            experiment: "4",
            epsilon: 0.02,
            dt: 2e-7,
            alpha: 0.0074,
            beta: 0.1969,
            da0: 0.0711,
            divisors: flat,
            offset: 0.5,
            shape: ShapeLabel::TwoSphere,
            varied: false,
            note: Some("initial condition taken as the flattened ellipsoid of the gourd family"),
        },
        Row {
            name: "chain",
            experiment: "5",
            epsilon: 0.02,
            dt: 5e-7,
            alpha: 0.0074,
            beta: 0.2328,
            da0: 0.0958,
            divisors: flat,
            offset: 0.5,
            shape: ShapeLabel::Chain,
            varied: false,
            note: None,
        },
        Row {
            name: "three_armed",
            experiment: "6",
            epsilon: 0.02,
            dt: 1e-7,
            alpha: 0.0226,
            beta: 0.4489,
            da0: 0.1520,
            divisors: ball,
            offset: 0.5,
            shape: ShapeLabel::ThreeArmed,
            varied: false,
            note: None,
        },
        Row {
            name: "four_armed",
            experiment: "7",
            epsilon: 0.02,
            dt: 2e-7,
            alpha: 0.0097,
            beta: 0.2550,
            da0: 0.1146,
            divisors: [SQ(0.35), SQ(0.35), SQ(0.15)],
            offset: 0.5,
            shape: ShapeLabel::FourArmed,
            varied: false,
            note: None,
        },
        Row {
            name: "six_armed",
            experiment: "8",
            epsilon: 0.02,
            dt: 1e-7,
            alpha: 0.0529,
            beta: 0.7911,
            da0: 0.1766,
            divisors: ball,
            offset: 0.6,
            shape: ShapeLabel::SixArmed,
            varied: false,
            note: Some("same initial ellipsoid as the torus experiment but a different volume target"),
        },
    ]
    .into_iter()
    .map(unit_preset)
    .collect();

    let mut params = ModelParams::new(0.03, 1.0, 1.4, 0.0, 1e4, 1e4, 0.2693, 2.8347, 0.3939);
    params.a0 = params.beta;
    out.push(ExperimentPreset {
        name: "nested".into(),
        experiment: "9".into(),
        domain: GridSpec::cubic(100, 2.0).expect("valid grid"),
        params,
        init: EllipsoidSpec { center: [1.0; 3], divisors: [0.16; 3], offset: 1.0, epsilon: 0.03 },
        integrator: IntegratorConfig::new(Scheme::SemiImplicit, 5e-7),
        expected_shape: ShapeLabel::Nested,
        varied: false,
        note: None,
    });
    out
}

pub fn preset_names() -> Vec<String> {
    catalog().into_iter().map(|p| p.name).collect()
}

/// Look up a preset by name or experiment number (`"1"`, `"3e"`, …).
pub fn preset(name: &str) -> Result<ExperimentPreset> {
    let key = name.trim().to_ascii_lowercase().replace('-', "_");
    catalog()
        .into_iter()
        .find(|p| p.name == key || p.experiment == key)
        .ok_or_else(|| Error::UnknownPreset(name.to_owned()))
}
