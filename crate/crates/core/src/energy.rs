//! Diffuse-interface membrane energy: bending, area-difference elasticity
//! and the volume/area penalties, together with their variational
//! derivatives.
//!
//! All functionals are evaluated on the discrete grid with spectral
//! derivatives and pointwise products. Every gradient-type integral is
//! written through the spectral Laplacian (`∫|∇φ|² = -∫φΔφ`), so each
//! discrete functional is exactly consistent with its discrete derivative.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D};
use crate::spectral::Spectral;

/// Physical and penalty constants of the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Interface width ε.
    pub epsilon: f64,
    /// Bending modulus κ.
    pub kappa: f64,
    /// Area-difference elasticity modulus κ̄.
    pub kappa_bar: f64,
    /// Spontaneous-curvature parameter, √2 times the spontaneous curvature.
    #[serde(rename = "C")]
    pub c: f64,
    /// Leaflet separation.
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "M1")]
    pub m1: f64,
    #[serde(rename = "M2")]
    pub m2: f64,
    /// Volume target.
    pub alpha: f64,
    /// Area target.
    pub beta: f64,
    /// Relaxed area difference.
    #[serde(rename = "dA0")]
    pub da0: f64,
    /// Reference area in the area-difference prefactor.
    #[serde(rename = "A0")]
    pub a0: f64,
}

impl ModelParams {
    /// Parameters with the conventional defaults `D = 2ε/3` and `A0 = β`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        epsilon: f64,
        kappa: f64,
        kappa_bar: f64,
        c: f64,
        m1: f64,
        m2: f64,
        alpha: f64,
        beta: f64,
        da0: f64,
    ) -> Self {
        ModelParams {
            epsilon,
            kappa,
            kappa_bar,
            c,
            d: default_leaflet_distance(epsilon),
            m1,
            m2,
            alpha,
            beta,
            da0,
            a0: beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.invalid_field() {
            Some((name, reason)) => Err(Error::InvalidParams(format!("{name} {reason}"))),
            None => Ok(()),
        }
    }

    /// The first parameter violating its invariant, with the reason.
    pub fn invalid_field(&self) -> Option<(&'static str, String)> {
        let named = [
            ("epsilon", self.epsilon),
            ("kappa", self.kappa),
            ("kappa_bar", self.kappa_bar),
            ("C", self.c),
            ("D", self.d),
            ("M1", self.m1),
            ("M2", self.m2),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("dA0", self.da0),
            ("A0", self.a0),
        ];
        if let Some((name, v)) = named.iter().find(|(_, v)| !v.is_finite()) {
            return Some((name, format!("= {v} must be finite")));
        }
        for (name, v) in [("epsilon", self.epsilon), ("D", self.d), ("A0", self.a0)] {
            if v <= 0.0 {
                return Some((name, format!("= {v} must be > 0")));
            }
        }
        for (name, v) in [("M1", self.m1), ("M2", self.m2), ("kappa", self.kappa), ("kappa_bar", self.kappa_bar)] {
            if v < 0.0 {
                return Some((name, format!("= {v} must be >= 0")));
            }
        }
        None
    }

    /// Prefactor `(κ̄/2)·π/(A0·D²)` of the area-difference energy.
    pub fn ade_prefactor(&self) -> f64 {
        0.5 * self.kappa_bar * PI / (self.a0 * self.d * self.d)
    }
}

/// Leaflet separation used when none is given: two thirds of the interface width.
pub fn default_leaflet_distance(epsilon: f64) -> f64 {
    2.0 * epsilon / 3.0
}

/// `A = (3√2/4)·B`
pub const AREA_FROM_GL: f64 = 3.0 * SQRT_2 / 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "G")]
    pub g: f64,
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
    #[serde(rename = "E_M")]
    pub e_m: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "A")]
    pub a: f64,
    #[serde(rename = "dA")]
    pub d_a: f64,
}

/// Per-term split of `δE_M/δφ`.
#[derive(Debug, Clone)]
pub struct VariationalTerms {
    pub bending: ScalarField3D,
    pub ade: ScalarField3D,
    pub volume: ScalarField3D,
    pub area: ScalarField3D,
}

impl VariationalTerms {
    pub fn total(&self) -> ScalarField3D {
        let vals = self
            .bending
            .values()
            .iter()
            .zip(self.ade.values())
            .zip(self.volume.values())
            .zip(self.area.values())
            .map(|(((w, g), t1), t2)| w + g + t1 + t2)
            .collect();
        ScalarField3D::from_values(*self.bending.grid(), vals).expect("same grid")
    }
}

/// Global scalars shared by the energy and its derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalMeasures {
    pub volume: f64,
    pub gl: f64,
    pub area: f64,
    pub area_difference: f64,
}

/// The energy functional bound to one grid.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    spectral: Spectral,
    params: ModelParams,
}

impl EnergyModel {
    pub fn new(grid: GridSpec, params: ModelParams) -> Result<Self> {
        Self::with_spectral(Spectral::new(grid)?, params)
    }

    pub fn with_spectral(spectral: Spectral, params: ModelParams) -> Result<Self> {
        params.validate()?;
        Ok(EnergyModel { spectral, params })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Same grid and transforms, different constants.
    pub fn with_params(&self, params: ModelParams) -> Result<Self> {
        Self::with_spectral(self.spectral.clone(), params)
    }

    pub fn spectral(&self) -> &Spectral {
        &self.spectral
    }

    pub fn grid(&self) -> &GridSpec {
        self.spectral.grid()
    }

    fn new_field(&self, values: Vec<f64>) -> ScalarField3D {
        ScalarField3D::from_values(*self.grid(), values).expect("length matches grid")
    }

    /// `f = εΔφ − (1/ε)(φ²−1)φ`
    pub fn f_of(&self, phi: &ScalarField3D) -> ScalarField3D {
        let lap = self.spectral.laplacian(phi);
        self.f_with_lap(phi, &lap)
    }

    pub fn f_with_lap(&self, phi: &ScalarField3D, lap: &ScalarField3D) -> ScalarField3D {
        let eps = self.params.epsilon;
        self.new_field(
            phi.values().iter().zip(lap.values()).map(|(&p, &l)| eps * l - (p * p - 1.0) * p / eps).collect(),
        )
    }

    /// `f_c = εΔφ − (1/ε)(φ²−1)(φ+Cε)`
    pub fn f_c_of(&self, phi: &ScalarField3D) -> ScalarField3D {
        let lap = self.spectral.laplacian(phi);
        self.f_c_with_lap(phi, &lap)
    }

    pub fn f_c_with_lap(&self, phi: &ScalarField3D, lap: &ScalarField3D) -> ScalarField3D {
        let eps = self.params.epsilon;
        let ce = self.params.c * eps;
        self.new_field(
            phi.values().iter().zip(lap.values()).map(|(&p, &l)| eps * l - (p * p - 1.0) * (p + ce) / eps).collect(),
        )
    }

    /// Bending energy `W = (κ/2ε)∫f_c²`.
    pub fn bending_energy(&self, phi: &ScalarField3D) -> f64 {
        let fc = self.f_c_of(phi);
        self.bending_from_fc(&fc)
    }

    fn bending_from_fc(&self, fc: &ScalarField3D) -> f64 {
        0.5 * self.params.kappa / self.params.epsilon * fc.dot(fc)
    }

    /// `V = ∫(φ+1)/2`
    pub fn volume(&self, phi: &ScalarField3D) -> f64 {
        volume(phi)
    }

    /// Ginzburg–Landau functional `B` and the area `A = (3√2/4)B`.
    pub fn gl_and_area(&self, phi: &ScalarField3D) -> (f64, f64) {
        let lap = self.spectral.laplacian(phi);
        let b = self.gl_with_lap(phi, &lap);
        (b, AREA_FROM_GL * b)
    }

    fn gl_with_lap(&self, phi: &ScalarField3D, lap: &ScalarField3D) -> f64 {
        let eps = self.params.epsilon;
        let s: f64 = phi
            .values()
            .iter()
            .zip(lap.values())
            .map(|(&p, &l)| {
                let w = p * p - 1.0;
                -0.5 * eps * p * l + w * w / (4.0 * eps)
            })
            .sum();
        s * self.grid().cell_volume()
    }

    /// Area difference `ΔA = −(3D/4)∫((1−φ²)Δφ + φ(1−φ²)²/ε²)`.
    pub fn area_difference(&self, phi: &ScalarField3D) -> f64 {
        let lap = self.spectral.laplacian(phi);
        self.area_difference_with_lap(phi, &lap)
    }

    pub fn area_difference_with_lap(&self, phi: &ScalarField3D, lap: &ScalarField3D) -> f64 {
        let inv_eps2 = 1.0 / (self.params.epsilon * self.params.epsilon);
        let s: f64 = phi
            .values()
            .iter()
            .zip(lap.values())
            .map(|(&p, &l)| {
                let w = 1.0 - p * p;
                w * l + inv_eps2 * p * w * w
            })
            .sum();
        -0.75 * self.params.d * s * self.grid().cell_volume()
    }

    /// `G = (κ̄/2)·π/(A0 D²)·(ΔA − ΔA0)²`
    pub fn ade_energy(&self, phi: &ScalarField3D) -> f64 {
        self.ade_from_area_difference(self.area_difference(phi))
    }

    pub fn ade_from_area_difference(&self, d_a: f64) -> f64 {
        let dev = d_a - self.params.da0;
        self.params.ade_prefactor() * dev * dev
    }

    /// `(T1, T2) = (M1(V−α)², M2(A−β)²)`
    pub fn penalties(&self, phi: &ScalarField3D) -> (f64, f64) {
        let (_, a) = self.gl_and_area(phi);
        self.penalties_from(volume(phi), a)
    }

    pub fn penalties_from(&self, v: f64, a: f64) -> (f64, f64) {
        let p = &self.params;
        (p.m1 * (v - p.alpha).powi(2), p.m2 * (a - p.beta).powi(2))
    }

    /// V, B, A and ΔA from a precomputed Laplacian.
    pub fn measures_with_lap(&self, phi: &ScalarField3D, lap: &ScalarField3D) -> GlobalMeasures {
        let gl = self.gl_with_lap(phi, lap);
        GlobalMeasures {
            volume: volume(phi),
            gl,
            area: AREA_FROM_GL * gl,
            area_difference: self.area_difference_with_lap(phi, lap),
        }
    }

    pub fn measures(&self, phi: &ScalarField3D) -> GlobalMeasures {
        let lap = self.spectral.laplacian(phi);
        self.measures_with_lap(phi, &lap)
    }

    /// Every energy component from one Laplacian evaluation.
    pub fn total_energy(&self, phi: &ScalarField3D) -> EnergyBreakdown {
        let lap = self.spectral.laplacian(phi);
        let fc = self.f_c_with_lap(phi, &lap);
        let m = self.measures_with_lap(phi, &lap);
        let w = self.bending_from_fc(&fc);
        let g = self.ade_from_area_difference(m.area_difference);
        let (t1, t2) = self.penalties_from(m.volume, m.area);
        EnergyBreakdown { w, g, t1, t2, e_m: w + g + t1 + t2, v: m.volume, a: m.area, d_a: m.area_difference }
    }

    /// `E_M` alone.
    pub fn energy(&self, phi: &ScalarField3D) -> f64 {
        self.total_energy(phi).e_m
    }

    /// `g = Δf_c − (1/ε²)(3φ²+2Cεφ−1)f_c`, so that `δW/δφ = κg`.
    pub fn g_of(&self, phi: &ScalarField3D, fc: &ScalarField3D) -> ScalarField3D {
        let eps = self.params.epsilon;
        let ce2 = 2.0 * self.params.c * eps;
        let lap_fc = self.spectral.laplacian(fc);
        self.new_field(
            phi.values()
                .iter()
                .zip(fc.values())
                .zip(lap_fc.values())
                .map(|((&p, &f), &lf)| lf - (3.0 * p * p + ce2 * p - 1.0) * f / (eps * eps))
                .collect(),
        )
    }

    /// `δG/δφ = −(3κ̄π/(4A0D))(ΔA−ΔA0)(−2φΔφ − Δ(φ²) + (1−6φ²+5φ⁴)/ε²)`
    pub fn ade_derivative(&self, phi: &ScalarField3D, lap: &ScalarField3D, d_a: f64) -> ScalarField3D {
        let p = &self.params;
        let coef = -3.0 * p.kappa_bar * PI / (4.0 * p.a0 * p.d) * (d_a - p.da0);
        if coef == 0.0 {
            return ScalarField3D::zeros(*self.grid());
        }
        let inv_eps2 = 1.0 / (p.epsilon * p.epsilon);
        let lap_sq = self.spectral.laplacian(&phi.map(|v| v * v));
        self.new_field(
            phi.values()
                .iter()
                .zip(lap.values())
                .zip(lap_sq.values())
                .map(|((&u, &l), &lsq)| {
                    let u2 = u * u;
                    coef * (-2.0 * u * l - lsq + inv_eps2 * (1.0 - 6.0 * u2 + 5.0 * u2 * u2))
                })
                .collect(),
        )
    }

    /// Each of `δW/δφ`, `δG/δφ`, `δT1/δφ`, `δT2/δφ` separately.
    pub fn variational_terms(&self, phi: &ScalarField3D) -> VariationalTerms {
        let p = &self.params;
        let lap = self.spectral.laplacian(phi);
        let fc = self.f_c_with_lap(phi, &lap);
        let m = self.measures_with_lap(phi, &lap);

        let bending = self.g_of(phi, &fc).scale(p.kappa);
        let ade = self.ade_derivative(phi, &lap, m.area_difference);
        let volume = ScalarField3D::constant(*self.grid(), p.m1 * (m.volume - p.alpha));
        let area_coef = -1.5 * SQRT_2 * p.m2 * (m.area - p.beta);
        let area = self.f_with_lap(phi, &lap).scale(area_coef);
        VariationalTerms { bending, ade, volume, area }
    }

    /// Full `δE_M/δφ`.
    pub fn variational_derivative(&self, phi: &ScalarField3D) -> ScalarField3D {
        self.variational_terms(phi).total()
    }
}

/// `V = ∫(φ+1)/2`
pub fn volume(phi: &ScalarField3D) -> f64 {
    let s: f64 = phi.values().iter().map(|p| 0.5 * (p + 1.0)).sum();
    s * phi.grid().cell_volume()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::new(0.1, 1.0, 1.4, 0.0, 1e5, 1e4, 0.0, 0.5, 0.0)
    }

    fn model(n: usize, p: ModelParams) -> EnergyModel {
        EnergyModel::new(GridSpec::cubic(n, 1.0).unwrap(), p).unwrap()
    }

    #[test]
    fn defaults_follow_epsilon_and_beta() {
        let p = ModelParams::new(0.03, 1.0, 1.4, 0.0, 1e5, 1e4, 0.1, 0.7, 0.2);
        assert!((p.d - 0.02).abs() < 1e-15);
        assert_eq!(p.a0, 0.7);
    }

    #[test]
    fn validation_rejects_negative_penalty() {
        let mut p = params();
        p.m1 = -1.0;
        let err = p.validate().unwrap_err().to_string();
        assert!(err.contains("M1"), "{err}");
        let mut p = params();
        p.epsilon = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn f_and_f_c_pointwise_values() {
        let m = model(8, params());
        let g = *m.grid();
        for c in [1.0, 0.0, -1.0] {
            assert!(m.f_of(&ScalarField3D::constant(g, c)).max_abs() < 1e-12);
        }
        let half = ScalarField3D::constant(g, 0.5);
        let f = m.f_of(&half);
        assert!(f.values().iter().all(|v| (v - 3.75).abs() < 1e-12));

        let mut p = params();
        p.c = 1.0;
        let mc = model(8, p);
        let fc = mc.f_c_of(&half);
        assert!(fc.values().iter().all(|v| (v - 4.5).abs() < 1e-12));
        let root = ScalarField3D::constant(g, -p.c * p.epsilon);
        assert!(mc.f_c_of(&root).max_abs() < 1e-12);
    }

    #[test]
    fn f_c_reduces_to_f_without_spontaneous_curvature() {
        let m = model(8, params());
        let phi = ScalarField3D::from_fn(*m.grid(), |x, y, z| 0.7 * (2.0 * PI * x).sin() * (2.0 * PI * (y + z)).cos());
        assert!(m.f_of(&phi).max_abs_diff(&m.f_c_of(&phi)) < 1e-14);
    }

    #[test]
    fn uniform_phases_carry_no_interface_energy() {
        let m = model(8, params());
        for c in [1.0, -1.0] {
            let phi = ScalarField3D::constant(*m.grid(), c);
            assert_eq!(m.bending_energy(&phi), 0.0);
            assert_eq!(m.gl_and_area(&phi), (0.0, 0.0));
            assert_eq!(m.area_difference(&phi), 0.0);
        }
        assert_eq!(m.area_difference(&ScalarField3D::zeros(*m.grid())), 0.0);
        assert!((m.volume(&ScalarField3D::constant(*m.grid(), 1.0)) - 1.0).abs() < 1e-14);
        assert_eq!(m.volume(&ScalarField3D::constant(*m.grid(), -1.0)), 0.0);
    }

    #[test]
    fn ade_energy_closed_form() {
        let mut p = params();
        p.kappa_bar = 1.4;
        p.a0 = 0.5;
        p.d = 0.04 / 3.0;
        p.da0 = 0.1;
        let m = model(8, p);
        let phi = ScalarField3D::constant(*m.grid(), 1.0);
        let expected = 0.7 * PI / (0.5 * p.d * p.d) * 0.01;
        assert!((m.ade_energy(&phi) - expected).abs() < 1e-12 * expected);

        p.kappa_bar = 0.0;
        assert_eq!(model(8, p).ade_energy(&phi), 0.0);
    }

    #[test]
    fn ade_vanishes_at_relaxed_difference() {
        let mut p = params();
        let phi = ScalarField3D::from_fn(GridSpec::cubic(8, 1.0).unwrap(), |x, _, _| (2.0 * PI * x).cos());
        p.da0 = model(8, p).area_difference(&phi);
        assert_eq!(model(8, p).ade_energy(&phi), 0.0);
    }

    #[test]
    fn penalty_arithmetic() {
        let mut p = params();
        p.m1 = 1e5;
        p.alpha = 0.49;
        let m = model(8, p);
        let phi = ScalarField3D::zeros(*m.grid());
        // V(0) = 0.5
        let (t1, _) = m.penalties(&phi);
        assert!((t1 - 10.0).abs() < 1e-8);
    }

    #[test]
    fn breakdown_sums_exactly() {
        let mut p = params();
        p.alpha = 0.3;
        p.beta = 0.2;
        p.da0 = 0.05;
        let m = model(8, p);
        let phi = ScalarField3D::from_fn(*m.grid(), |x, y, _| (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        let e = m.total_energy(&phi);
        assert_eq!(e.e_m, e.w + e.g + e.t1 + e.t2);
        assert!(e.w >= 0.0 && e.g >= 0.0 && e.t1 >= 0.0 && e.t2 >= 0.0);
    }

    #[test]
    fn uniform_state_with_matching_targets_has_zero_energy() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let mut p = ModelParams::new(0.1, 1.0, 1.4, 0.0, 1e5, 1e4, g.domain_volume(), 0.0, 0.0);
        p.a0 = 1.0;
        let m = EnergyModel::new(g, p).unwrap();
        let e = m.total_energy(&ScalarField3D::constant(g, 1.0));
        assert_eq!(e.e_m, 0.0);
    }

    #[test]
    fn derivative_vanishes_without_moduli_at_targets() {
        let mut p = params();
        p.kappa = 0.0;
        p.kappa_bar = 0.0;
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let phi = ScalarField3D::from_fn(g, |x, _, z| 0.5 * (2.0 * PI * x).sin() + 0.2 * (2.0 * PI * z).cos());
        let probe = model(8, p);
        let meas = probe.measures(&phi);
        p.alpha = meas.volume;
        p.beta = meas.area;
        let m = model(8, p);
        assert!(m.variational_derivative(&phi).max_abs() < 1e-12);
    }

    #[test]
    fn derivative_vanishes_at_symmetric_point() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let phi = ScalarField3D::zeros(g);
        let mut p = params();
        let probe = model(8, p);
        let meas = probe.measures(&phi);
        p.alpha = meas.volume;
        p.beta = meas.area;
        p.da0 = 0.0;
        assert!(model(8, p).variational_derivative(&phi).max_abs() < 1e-12);
    }
}
