//! Time stepping for the gradient flow `φ_t = −δE_M/δφ`.
//!
//! Four schemes are provided: explicit forward Euler, the linearly implicit
//! scheme that treats the stiff `εΔ² + (2/ε)Δ` part of the bending force
//! implicitly, the symmetric fully implicit scheme with an exact discrete
//! energy law, and backward Euler. The two nonlinear implicit schemes are
//! solved by a fixed-point iteration preconditioned with the same
//! constant-coefficient operator, inverted in Fourier space.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyBreakdown, EnergyModel, ModelParams};
use crate::error::{Error, Result};
use crate::field::ScalarField3D;
use crate::spectral::{Spectral, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ForwardEuler,
    SemiImplicit,
    FullyImplicit,
    BackwardEuler,
}

impl Scheme {
    pub const ALL: [Scheme; 4] =
        [Scheme::ForwardEuler, Scheme::SemiImplicit, Scheme::FullyImplicit, Scheme::BackwardEuler];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::ForwardEuler => "forward_euler",
            Scheme::SemiImplicit => "semi_implicit",
            Scheme::FullyImplicit => "fully_implicit",
            Scheme::BackwardEuler => "backward_euler",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_").to_ascii_lowercase();
        Scheme::ALL
            .into_iter()
            .find(|sch| sch.name() == norm)
            .ok_or_else(|| Error::config("scheme", format!("unknown scheme `{s}`")))
    }
}

fn default_picard_tol() -> f64 {
    1e-10
}

fn default_picard_max_iters() -> usize {
    200
}

fn default_anderson_depth() -> usize {
    8
}

fn default_energy_slack() -> f64 {
    1e-8
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub dt: f64,
    /// L∞ bound on the last fixed-point update.
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_max_iters")]
    pub picard_max_iters: usize,
    /// History length of Anderson mixing for the fixed-point solve; 0 gives plain Picard.
    #[serde(default = "default_anderson_depth")]
    pub anderson_depth: usize,
    /// Relative slack for the backward Euler energy inequality.
    #[serde(default = "default_energy_slack")]
    pub energy_slack: f64,
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, dt: f64) -> Self {
        IntegratorConfig {
            scheme,
            dt,
            picard_tol: default_picard_tol(),
            picard_max_iters: default_picard_max_iters(),
            anderson_depth: default_anderson_depth(),
            energy_slack: default_energy_slack(),
        }
    }

    pub fn with_picard_tol(mut self, tol: f64) -> Self {
        self.picard_tol = tol;
        self
    }

    pub fn with_anderson_depth(mut self, depth: usize) -> Self {
        self.anderson_depth = depth;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidIntegrator(format!("dt = {} must be > 0", self.dt)));
        }
        if !(self.picard_tol > 0.0) {
            return Err(Error::InvalidIntegrator("picard_tol must be > 0".into()));
        }
        if self.picard_max_iters == 0 {
            return Err(Error::InvalidIntegrator("picard_max_iters must be >= 1".into()));
        }
        if !(self.energy_slack >= 0.0) {
            return Err(Error::InvalidIntegrator("energy_slack must be >= 0".into()));
        }
        Ok(())
    }
}

fn default_rate_tol() -> f64 {
    1e-2
}

fn default_energy_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoppingCriterion {
    pub max_steps: usize,
    /// Threshold on `‖φ_{n+1} − φ_n‖_∞ / Δt`.
    #[serde(default = "default_rate_tol")]
    pub rate_tol: f64,
    /// Threshold on `|E_M(φ_{n+1}) − E_M(φ_n)| / (Δt · max(E_M, 1))`.
    #[serde(default = "default_energy_tol")]
    pub energy_tol: f64,
}

impl StoppingCriterion {
    pub fn new(max_steps: usize) -> Self {
        StoppingCriterion { max_steps, rate_tol: default_rate_tol(), energy_tol: default_energy_tol() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::config("stopping.max_steps", "must be >= 1"));
        }
        if !(self.rate_tol > 0.0) || !(self.energy_tol > 0.0) {
            return Err(Error::config("stopping", "thresholds must be > 0"));
        }
        Ok(())
    }
}

/// Sufficient condition `Δt·κ < ε³` for a positive implicit symbol at every wavenumber.
pub fn check_semi_implicit_admissible(params: &ModelParams, dt: f64) -> Result<()> {
    let eps3 = params.epsilon.powi(3);
    if dt * params.kappa >= eps3 {
        return Err(Error::NonPositiveSymbol { min_symbol: 1.0 - dt * params.kappa / eps3 });
    }
    Ok(())
}

/// Coefficients `(a, b, c)` of `I + θΔtκ(εΔ² + (2/ε)Δ)` in the form `a + bΔ + cΔ²`.
fn stiff_operator(params: &ModelParams, dt: f64, theta: f64) -> (f64, f64, f64) {
    let s = theta * dt * params.kappa;
    (1.0, 2.0 * s / params.epsilon, s * params.epsilon)
}

fn field_of(model: &EnergyModel, values: Vec<f64>) -> ScalarField3D {
    ScalarField3D::from_values(*model.grid(), values).expect("length matches grid")
}

fn ensure_finite(f: ScalarField3D, step: usize) -> Result<ScalarField3D> {
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::NonFinite { step })
    }
}

/// `φ_{n+1} = φ_n − Δt·δE_M/δφ(φ_n)`
pub fn step_forward_euler(model: &EnergyModel, phi: &ScalarField3D, dt: f64) -> Result<ScalarField3D> {
    let mu = model.variational_derivative(phi);
    ensure_finite(phi.add_scaled(-dt, &mu), 0)
}

/// Solve for `u` from `û = (φ̂ − Δt(−|k|²Q̂ + P̂) + extra) / symbol`, where
/// `extra` is `θΔtκ(ε|k|⁴ − (2/ε)|k|²)·η̂` when `eta_hat` is given.
struct LinearAssembly<'a> {
    spectral: &'a Spectral,
    phi_hat: &'a [C64],
    dt: f64,
    op: (f64, f64, f64),
}

impl LinearAssembly<'_> {
    fn solve(&self, lap_arg: &[f64], pointwise: &[f64], eta_hat: Option<&[C64]>) -> Result<Vec<f64>> {
        let sp = self.spectral;
        let q_hat = sp.forward(lap_arg);
        let p_hat = sp.forward(pointwise);
        let (a, b, c) = self.op;
        let mut out = Vec::with_capacity(q_hat.len());
        let mut min_symbol = f64::INFINITY;
        for (idx, &k2) in sp.k_squared().iter().enumerate() {
            let symbol = Spectral::operator_symbol(a, b, c, k2);
            min_symbol = min_symbol.min(symbol);
            let mut r = self.phi_hat[idx] - (q_hat[idx] * (-k2) + p_hat[idx]) * self.dt;
            if let Some(eta) = eta_hat {
                r += eta[idx] * (symbol - 1.0);
            }
            out.push(r / symbol);
        }
        if min_symbol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::NonPositiveSymbol { min_symbol });
        }
        Ok(sp.inverse(out))
    }
}

/// Linearly implicit step: stiff linear bending part at `n+1`, everything else at `n`.
pub fn step_semi_implicit(model: &EnergyModel, phi: &ScalarField3D, dt: f64) -> Result<ScalarField3D> {
    let p = model.params();
    let sp = model.spectral();
    let eps = p.epsilon;
    let ce = p.c * eps;
    let inv_eps2 = 1.0 / (eps * eps);
    let inv_eps3 = inv_eps2 / eps;

    let phi_hat = sp.forward(phi.values());
    let mut lap_hat = phi_hat.clone();
    sp.scale_radial(&mut lap_hat, |k2| -k2);
    let lap = field_of(model, sp.inverse(lap_hat));
    let m = model.measures_with_lap(phi, &lap);

    let h_coef = -3.0 * p.kappa_bar * PI / (4.0 * p.a0 * p.d) * (m.area_difference - p.da0);
    let t1 = p.m1 * (m.volume - p.alpha);
    let t2_coef = -1.5 * SQRT_2 * p.m2 * (m.area - p.beta);

    let n = phi.len();
    let mut lap_arg = Vec::with_capacity(n);
    let mut pointwise = Vec::with_capacity(n);
    for (&u, &l) in phi.values().iter().zip(lap.values()) {
        let u2 = u * u;
        // κ[−(1/ε)Δφ³ − CΔφ²] − h_coef·Δ(φ²)
        lap_arg.push(-p.kappa * (u2 * u / eps + p.c * u2) - h_coef * u2);
        let bend = -3.0 / eps * u2 * l - 2.0 * p.c * u * l
            + inv_eps3 * (3.0 * u2 + 2.0 * ce * u - 1.0) * (u2 - 1.0) * (u + ce);
        let ade = h_coef * (-2.0 * u * l + inv_eps2 * (1.0 - 6.0 * u2 + 5.0 * u2 * u2));
        let f = eps * l - (u2 - 1.0) * u / eps;
        pointwise.push(p.kappa * bend + ade + t1 + t2_coef * f);
    }

    let asm = LinearAssembly { spectral: sp, phi_hat: &phi_hat, dt, op: stiff_operator(p, dt, 1.0) };
    let next = field_of(model, asm.solve(&lap_arg, &pointwise, None)?);
    ensure_finite(next, 0)
}

/// Two-argument forms `f(φ,η)`, `g(φ,η)`, `h(φ,η)` used by the fully implicit scheme.
#[derive(Debug, Clone)]
pub struct SymmetricTerms {
    pub f: ScalarField3D,
    pub g: ScalarField3D,
    pub h: ScalarField3D,
}

/// Evaluate the symmetric two-argument nonlinearities directly (diagnostic path).
pub fn symmetric_nonlinearities(model: &EnergyModel, phi: &ScalarField3D, eta: &ScalarField3D) -> SymmetricTerms {
    let p = model.params();
    let sp = model.spectral();
    let eps = p.epsilon;
    let ce = p.c * eps;
    let inv_eps2 = 1.0 / (eps * eps);

    let lap_phi = sp.laplacian(phi);
    let lap_eta = sp.laplacian(eta);
    let sum = phi.add(eta);
    let lap_sum = lap_phi.add(&lap_eta);

    let f = field_of(
        model,
        sum.values()
            .iter()
            .zip(lap_sum.values())
            .zip(phi.values().iter().zip(eta.values()))
            .map(|((&s, &ls), (&a, &b))| 0.5 * eps * ls - (a * a + b * b - 2.0) * s / (4.0 * eps))
            .collect(),
    );

    let fc_sum = model.f_c_with_lap(phi, &lap_phi).add(&model.f_c_with_lap(eta, &lap_eta));
    let lap_fc_sum = sp.laplacian(&fc_sum);
    let g = field_of(
        model,
        phi.values()
            .iter()
            .zip(eta.values())
            .zip(fc_sum.values().iter().zip(lap_fc_sum.values()))
            .map(|((&a, &b), (&s, &ls))| 0.5 * ls - 0.5 * inv_eps2 * (a * a + a * b + b * b + ce * (a + b) - 1.0) * s)
            .collect(),
    );

    let da_sum = model.area_difference_with_lap(phi, &lap_phi) + model.area_difference_with_lap(eta, &lap_eta);
    let coef = -3.0 * p.kappa_bar * PI / (8.0 * p.a0 * p.d) * (da_sum - 2.0 * p.da0);
    let sq_sum = phi.zip_map(eta, |a, b| a * a + b * b);
    let lap_sq = sp.laplacian(&sq_sum);
    let h = field_of(
        model,
        (0..phi.len())
            .map(|i| {
                let (a, b) = (phi.values()[i], eta.values()[i]);
                let (la, lb) = (lap_phi.values()[i], lap_eta.values()[i]);
                let (a2, b2) = (a * a, b * b);
                let poly = 1.0 - 2.0 * a2 - 2.0 * b2 - 2.0 * a * b + 2.0 * a2 * a2 + 2.0 * b2 * b2 + a2 * b2;
                coef * (-a * la - b * lb - 0.5 * lap_sq.values()[i] + inv_eps2 * poly)
            })
            .collect(),
    );
    SymmetricTerms { f, g, h }
}

/// Quantities of `φ_n` reused by every fixed-point sweep.
struct Frozen {
    phi_hat: Vec<C64>,
    lap: ScalarField3D,
    fc: ScalarField3D,
    volume: f64,
    area: f64,
    area_difference: f64,
}

impl Frozen {
    fn new(model: &EnergyModel, phi: &ScalarField3D) -> Self {
        let sp = model.spectral();
        let phi_hat = sp.forward(phi.values());
        let mut lap_hat = phi_hat.clone();
        sp.scale_radial(&mut lap_hat, |k2| -k2);
        let lap = field_of(model, sp.inverse(lap_hat));
        let fc = model.f_c_with_lap(phi, &lap);
        let m = model.measures_with_lap(phi, &lap);
        Frozen { phi_hat, lap, fc, volume: m.volume, area: m.area, area_difference: m.area_difference }
    }
}

/// One sweep of the preconditioned fixed-point map for the symmetric scheme.
fn fully_implicit_sweep(
    model: &EnergyModel,
    phi: &ScalarField3D,
    frozen: &Frozen,
    eta: &ScalarField3D,
    dt: f64,
) -> Result<ScalarField3D> {
    let p = model.params();
    let sp = model.spectral();
    let eps = p.epsilon;
    let ce = p.c * eps;
    let inv_eps2 = 1.0 / (eps * eps);

    let eta_hat = sp.forward(eta.values());
    let mut lap_hat = eta_hat.clone();
    sp.scale_radial(&mut lap_hat, |k2| -k2);
    let lap_eta = field_of(model, sp.inverse(lap_hat));
    let fc_eta = model.f_c_with_lap(eta, &lap_eta);
    let m = model.measures_with_lap(eta, &lap_eta);

    let h_coef =
        -3.0 * p.kappa_bar * PI / (8.0 * p.a0 * p.d) * (frozen.area_difference + m.area_difference - 2.0 * p.da0);
    let t1 = 0.5 * p.m1 * (frozen.volume + m.volume - 2.0 * p.alpha);
    let t2_coef = -0.75 * SQRT_2 * p.m2 * (frozen.area + m.area - 2.0 * p.beta);

    let n = phi.len();
    let mut lap_arg = Vec::with_capacity(n);
    let mut pointwise = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = (phi.values()[i], eta.values()[i]);
        let (la, lb) = (frozen.lap.values()[i], lap_eta.values()[i]);
        let s = frozen.fc.values()[i] + fc_eta.values()[i];
        let (a2, b2) = (a * a, b * b);
        // κ·½ΔS − h_coef·½Δ(φ²+η²)
        lap_arg.push(0.5 * p.kappa * s - 0.5 * h_coef * (a2 + b2));
        let g_rest = -0.5 * inv_eps2 * (a2 + a * b + b2 + ce * (a + b) - 1.0) * s;
        let poly = 1.0 - 2.0 * a2 - 2.0 * b2 - 2.0 * a * b + 2.0 * a2 * a2 + 2.0 * b2 * b2 + a2 * b2;
        let h_rest = h_coef * (-a * la - b * lb + inv_eps2 * poly);
        let f = 0.5 * eps * (la + lb) - (a2 + b2 - 2.0) * (a + b) / (4.0 * eps);
        pointwise.push(p.kappa * g_rest + h_rest + t1 + t2_coef * f);
    }

    let asm = LinearAssembly { spectral: sp, phi_hat: &frozen.phi_hat, dt, op: stiff_operator(p, dt, 0.5) };
    Ok(field_of(model, asm.solve(&lap_arg, &pointwise, Some(&eta_hat))?))
}

/// One sweep of the preconditioned fixed-point map for backward Euler.
fn backward_euler_sweep(model: &EnergyModel, frozen: &Frozen, eta: &ScalarField3D, dt: f64) -> Result<ScalarField3D> {
    let p = model.params();
    let sp = model.spectral();
    let eps = p.epsilon;
    let ce = p.c * eps;
    let inv_eps2 = 1.0 / (eps * eps);

    let eta_hat = sp.forward(eta.values());
    let mut lap_hat = eta_hat.clone();
    sp.scale_radial(&mut lap_hat, |k2| -k2);
    let lap_eta = field_of(model, sp.inverse(lap_hat));
    let fc_eta = model.f_c_with_lap(eta, &lap_eta);
    let m = model.measures_with_lap(eta, &lap_eta);

    let h_coef = -3.0 * p.kappa_bar * PI / (4.0 * p.a0 * p.d) * (m.area_difference - p.da0);
    let t1 = p.m1 * (m.volume - p.alpha);
    let t2_coef = -1.5 * SQRT_2 * p.m2 * (m.area - p.beta);

    let n = eta.len();
    let mut lap_arg = Vec::with_capacity(n);
    let mut pointwise = Vec::with_capacity(n);
    for i in 0..n {
        let b = eta.values()[i];
        let lb = lap_eta.values()[i];
        let fc = fc_eta.values()[i];
        let b2 = b * b;
        lap_arg.push(p.kappa * fc - h_coef * b2);
        let g_rest = -inv_eps2 * (3.0 * b2 + 2.0 * ce * b - 1.0) * fc;
        let h_rest = h_coef * (-2.0 * b * lb + inv_eps2 * (1.0 - 6.0 * b2 + 5.0 * b2 * b2));
        let f = eps * lb - (b2 - 1.0) * b / eps;
        pointwise.push(p.kappa * g_rest + h_rest + t1 + t2_coef * f);
    }

    let asm = LinearAssembly { spectral: sp, phi_hat: &frozen.phi_hat, dt, op: stiff_operator(p, dt, 1.0) };
    Ok(field_of(model, asm.solve(&lap_arg, &pointwise, Some(&eta_hat))?))
}

/// Outcome of an implicit step.
#[derive(Debug, Clone)]
pub struct ImplicitStep {
    pub field: ScalarField3D,
    pub iterations: usize,
    pub last_update: f64,
}

fn picard(
    model: &EnergyModel,
    phi: &ScalarField3D,
    cfg: &IntegratorConfig,
    sweep: impl Fn(&ScalarField3D) -> Result<ScalarField3D>,
) -> Result<ImplicitStep> {
    let mut eta = match step_semi_implicit(model, phi, cfg.dt) {
        Ok(start) => start,
        Err(Error::NonPositiveSymbol { .. }) | Err(Error::NonFinite { .. }) => phi.clone(),
        Err(e) => return Err(e),
    };
    let mut mixer = Anderson::new(cfg.anderson_depth);
    let mut last_update = f64::INFINITY;
    for it in 1..=cfg.picard_max_iters {
        let next = sweep(&eta)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: 0 });
        }
        last_update = next.max_abs_diff(&eta);
        if last_update <= cfg.picard_tol {
            return Ok(ImplicitStep { field: next, iterations: it, last_update });
        }
        eta = mixer.mix(&eta, next);
    }
    Err(Error::PicardDiverged { iters: cfg.picard_max_iters, tol: cfg.picard_tol, last_update })
}

/// Anderson mixing for `x = G(x)`: the next iterate combines the recent
/// `G` values so that the linearised residual is minimal in the least-squares sense.
struct Anderson {
    depth: usize,
    prev: Option<(Vec<f64>, Vec<f64>)>,
    d_res: Vec<Vec<f64>>,
    d_val: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson { depth, prev: None, d_res: Vec::new(), d_val: Vec::new() }
    }

    fn mix(&mut self, x: &ScalarField3D, g: ScalarField3D) -> ScalarField3D {
        if self.depth == 0 {
            return g;
        }
        let res: Vec<f64> = g.values().iter().zip(x.values()).map(|(a, b)| a - b).collect();
        if let Some((res_prev, g_prev)) = self.prev.take() {
            self.d_res.push(res.iter().zip(&res_prev).map(|(a, b)| a - b).collect());
            self.d_val.push(g.values().iter().zip(&g_prev).map(|(a, b)| a - b).collect());
            if self.d_res.len() > self.depth {
                self.d_res.remove(0);
                self.d_val.remove(0);
            }
        }
        self.prev = Some((res.clone(), g.values().to_vec()));
        let m = self.d_res.len();
        if m == 0 {
            return g;
        }
        // Normal equations with a small ridge; the columns are nearly dependent late in the solve.
        let mut a = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        for i in 0..m {
            for j in 0..=i {
                let v = dot(&self.d_res[i], &self.d_res[j]);
                a[i * m + j] = v;
                a[j * m + i] = v;
            }
            rhs[i] = dot(&self.d_res[i], &res);
        }
        let trace: f64 = (0..m).map(|i| a[i * m + i]).sum();
        for i in 0..m {
            a[i * m + i] += 1e-12 * trace / m as f64;
        }
        let Some(gamma) = solve_dense(a, rhs, m) else {
            self.d_res.clear();
            self.d_val.clear();
            return g;
        };
        let mut out = g.into_values();
        for (col, &c) in self.d_val.iter().zip(&gamma) {
            for (o, d) in out.iter_mut().zip(col) {
                *o -= c * d;
            }
        }
        ScalarField3D::from_values(*x.grid(), out).expect("same grid")
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on a small dense system.
fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Option<Vec<f64>> {
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))?;
        if !(a[piv * n + col].abs() > 0.0) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            b.swap(col, piv);
        }
        for row in col + 1..n {
            let f = a[row * n + col] / a[col * n + col];
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row * n + k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row * n + row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Symmetric fully implicit step with an exact discrete energy law.
pub fn step_fully_implicit(model: &EnergyModel, phi: &ScalarField3D, cfg: &IntegratorConfig) -> Result<ImplicitStep> {
    let frozen = Frozen::new(model, phi);
    picard(model, phi, cfg, |eta| fully_implicit_sweep(model, phi, &frozen, eta, cfg.dt))
}

/// Backward Euler step, accepted only if it satisfies the modified-energy inequality.
pub fn step_backward_euler(model: &EnergyModel, phi: &ScalarField3D, cfg: &IntegratorConfig) -> Result<ImplicitStep> {
    let frozen = Frozen::new(model, phi);
    let step = picard(model, phi, cfg, |eta| backward_euler_sweep(model, &frozen, eta, cfg.dt))?;
    let e0 = model.energy(phi);
    let e1 = model.energy(&step.field);
    let diff = step.field.sub(phi);
    let lhs = e1 - e0 + diff.dot(&diff) / (2.0 * cfg.dt);
    let slack = cfg.energy_slack * e0.max(1.0);
    if lhs > slack {
        return Err(Error::EnergyInequalityViolated { excess: lhs });
    }
    Ok(step)
}

/// Advance one step with the configured scheme.
pub fn step(model: &EnergyModel, phi: &ScalarField3D, cfg: &IntegratorConfig) -> Result<ScalarField3D> {
    match cfg.scheme {
        Scheme::ForwardEuler => step_forward_euler(model, phi, cfg.dt),
        Scheme::SemiImplicit => step_semi_implicit(model, phi, cfg.dt),
        Scheme::FullyImplicit => step_fully_implicit(model, phi, cfg).map(|s| s.field),
        Scheme::BackwardEuler => step_backward_euler(model, phi, cfg).map(|s| s.field),
    }
}

/// One line of the run history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    #[serde(flatten)]
    pub energy: EnergyBreakdown,
    /// `‖φ_n − φ_{n−1}‖_∞ / Δt` of the step that produced this state; 0 at the start.
    pub rate: f64,
}

impl DiagnosticsRow {
    pub const HEADER: &'static str = "step,time,E_M,W,G,T1,T2,V,A,dA,rate";

    pub fn new(step: usize, dt: f64, energy: EnergyBreakdown, rate: f64) -> Self {
        DiagnosticsRow { step, time: step as f64 * dt, energy, rate }
    }

    /// Comma-separated record with 17 significant digits.
    pub fn to_csv(&self) -> String {
        let e = &self.energy;
        let nums = [self.time, e.e_m, e.w, e.g, e.t1, e.t2, e.v, e.a, e.d_a, self.rate];
        let mut out = self.step.to_string();
        for v in nums {
            out.push(',');
            out.push_str(&format!("{v:.16e}"));
        }
        out
    }

    pub fn from_csv(line: &str) -> Option<Self> {
        let parts: Vec<&str> = line.trim().split(',').collect();
        if parts.len() != 11 {
            return None;
        }
        let step = parts[0].parse().ok()?;
        let v: Vec<f64> = parts[1..].iter().map(|s| s.parse().ok()).collect::<Option<_>>()?;
        Some(DiagnosticsRow {
            step,
            time: v[0],
            energy: EnergyBreakdown { e_m: v[1], w: v[2], g: v[3], t1: v[4], t2: v[5], v: v[6], a: v[7], d_a: v[8] },
            rate: v[9],
        })
    }
}

/// Callbacks invoked by [`run_to_steady_state`].
pub trait RunObserver {
    /// Called with every recorded diagnostics row and the state it describes.
    fn on_diagnostics(&mut self, _row: &DiagnosticsRow, _phi: &ScalarField3D) -> Result<()> {
        Ok(())
    }

    /// Called after every completed step.
    fn on_step(&mut self, _step: usize, _phi: &ScalarField3D) -> Result<()> {
        Ok(())
    }
}

impl RunObserver for () {}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub field: ScalarField3D,
    pub history: Vec<DiagnosticsRow>,
    /// Index of the last completed step.
    pub steps: usize,
    pub converged: bool,
    pub max_steps_reached: bool,
}

/// Run options beyond the integrator itself.
#[derive(Debug, Clone, Copy)]
pub struct RunPlan {
    pub integrator: IntegratorConfig,
    pub stopping: StoppingCriterion,
    /// Record a diagnostics row every this many steps.
    pub diag_every: usize,
    /// Step index of `phi_0` (non-zero when resuming).
    pub start_step: usize,
    /// Emit a row for `phi_0`; off when continuing a run whose history already has it.
    pub record_initial: bool,
}

impl RunPlan {
    pub fn new(integrator: IntegratorConfig, stopping: StoppingCriterion) -> Self {
        RunPlan { integrator, stopping, diag_every: 100, start_step: 0, record_initial: true }
    }
}

/// Step until the displacement rate and the energy rate both fall below
/// their thresholds, or until `max_steps` (absolute step index) is reached.
///
/// A row is recorded at the start, at every multiple of `diag_every`, and at
/// the final step.
pub fn run_to_steady_state(
    model: &EnergyModel,
    phi_0: &ScalarField3D,
    plan: &RunPlan,
    observer: &mut dyn RunObserver,
) -> Result<RunOutcome> {
    let cfg = plan.integrator;
    cfg.validate()?;
    plan.stopping.validate()?;
    if plan.diag_every == 0 {
        return Err(Error::config("diag_every", "must be >= 1"));
    }
    if cfg.scheme == Scheme::SemiImplicit {
        check_semi_implicit_admissible(model.params(), cfg.dt)?;
    }
    let dt = cfg.dt;
    let mut phi = phi_0.clone();
    let mut n = plan.start_step;
    let mut history = Vec::new();

    if plan.record_initial {
        let first = DiagnosticsRow::new(n, dt, model.total_energy(&phi), 0.0);
        observer.on_diagnostics(&first, &phi)?;
        history.push(first);
    }

    let mut converged = false;
    let mut last_rate = 0.0;
    while n < plan.stopping.max_steps {
        let next = step(model, &phi, &cfg).map_err(|e| match e {
            Error::NonFinite { .. } => Error::NonFinite { step: n + 1 },
            other => other,
        })?;
        let rate = next.max_abs_diff(&phi) / dt;
        if rate <= plan.stopping.rate_tol {
            let e0 = model.energy(&phi);
            let e1 = model.energy(&next);
            converged = (e1 - e0).abs() / (dt * e0.max(1.0)) <= plan.stopping.energy_tol;
        }
        phi = next;
        n += 1;
        last_rate = rate;
        observer.on_step(n, &phi)?;
        if n.is_multiple_of(plan.diag_every) || converged {
            let row = DiagnosticsRow::new(n, dt, model.total_energy(&phi), rate);
            observer.on_diagnostics(&row, &phi)?;
            history.push(row);
        }
        if converged {
            break;
        }
    }
    let at_start = n == plan.start_step && !plan.record_initial;
    if !at_start && history.last().map(|r| r.step) != Some(n) {
        let row = DiagnosticsRow::new(n, dt, model.total_energy(&phi), last_rate);
        observer.on_diagnostics(&row, &phi)?;
        history.push(row);
    }
    Ok(RunOutcome { field: phi, history, steps: n, converged, max_steps_reached: !converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridSpec;

    fn smooth(g: GridSpec, amp: f64) -> ScalarField3D {
        let w = 2.0 * PI;
        ScalarField3D::from_fn(g, move |x, y, z| {
            amp * ((w * x).sin() * (w * y).cos() + 0.5 * (w * (x + z)).cos() - 0.3 * (2.0 * w * y).sin())
        })
    }

    fn model(g: GridSpec) -> EnergyModel {
        let p = ModelParams::new(0.2, 1.0, 1.4, 0.0, 50.0, 20.0, 0.4, 0.9, 0.05);
        EnergyModel::new(g, p).unwrap()
    }

    #[test]
    fn scheme_names_roundtrip() {
        for s in Scheme::ALL {
            assert_eq!(s.name().parse::<Scheme>().unwrap(), s);
        }
        assert_eq!("semi-implicit".parse::<Scheme>().unwrap(), Scheme::SemiImplicit);
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn forward_euler_increment_is_linear_in_dt() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let m = model(g);
        let phi = smooth(g, 0.6);
        let a = step_forward_euler(&m, &phi, 1e-6).unwrap().sub(&phi);
        let b = step_forward_euler(&m, &phi, 2e-6).unwrap().sub(&phi);
        assert!(b.max_abs_diff(&a.scale(2.0)) <= 1e-12 * b.max_abs());
    }

    #[test]
    fn semi_implicit_without_bending_is_forward_euler() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let mut p = *model(g).params();
        p.kappa = 0.0;
        let m = EnergyModel::new(g, p).unwrap();
        let phi = smooth(g, 0.6);
        let a = step_semi_implicit(&m, &phi, 1e-4).unwrap();
        let b = step_forward_euler(&m, &phi, 1e-4).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn semi_implicit_and_forward_euler_differ_at_second_order() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let m = model(g);
        let phi = smooth(g, 0.6);
        let gap = |dt: f64| {
            let a = step_semi_implicit(&m, &phi, dt).unwrap();
            let b = step_forward_euler(&m, &phi, dt).unwrap();
            a.max_abs_diff(&b)
        };
        let ratio = gap(1e-7) / gap(5e-8);
        assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
    }

    #[test]
    fn admissibility_threshold() {
        let p = ModelParams::new(0.02, 1.0, 1.4, 0.0, 1e5, 1e4, 0.0, 1.0, 0.0);
        assert!(check_semi_implicit_admissible(&p, 2e-7).is_ok());
        assert!(matches!(check_semi_implicit_admissible(&p, 1e-5), Err(Error::NonPositiveSymbol { .. })));
    }

    #[test]
    fn symmetric_terms_reduce_on_diagonal() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let m = model(g);
        let phi = smooth(g, 0.7);
        let sym = symmetric_nonlinearities(&m, &phi, &phi);
        let f = m.f_of(&phi);
        let fc = m.f_c_of(&phi);
        let gg = m.g_of(&phi, &fc);
        assert!(sym.f.max_abs_diff(&f) <= 1e-12 * f.max_abs());
        assert!(sym.g.max_abs_diff(&gg) <= 1e-12 * gg.max_abs());
        let lap = m.spectral().laplacian(&phi);
        let h = m.ade_derivative(&phi, &lap, m.area_difference(&phi));
        assert!(sym.h.max_abs_diff(&h) <= 1e-12 * h.max_abs().max(1e-300));
    }

    #[test]
    fn stationary_state_is_a_fixed_point() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let phi = ScalarField3D::constant(g, 1.0);
        let mut p = ModelParams::new(0.2, 1.0, 1.4, 0.0, 50.0, 20.0, 1.0, 0.0, 0.0);
        p.a0 = 1.0;
        let m = EnergyModel::new(g, p).unwrap();
        let cfg = IntegratorConfig::new(Scheme::FullyImplicit, 1e-4).with_picard_tol(1e-12);
        let s = step_fully_implicit(&m, &phi, &cfg).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(s.field.max_abs_diff(&phi) < 1e-14);
        let s = step_backward_euler(&m, &phi, &cfg).unwrap();
        assert!(s.field.max_abs_diff(&phi) < 1e-14);
    }

    #[test]
    fn history_length_matches_cadence() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let m = model(g);
        let phi = smooth(g, 0.5);
        let mut plan = RunPlan::new(IntegratorConfig::new(Scheme::SemiImplicit, 1e-6), StoppingCriterion::new(25));
        plan.stopping.rate_tol = 1e-300;
        plan.diag_every = 10;
        let out = run_to_steady_state(&m, &phi, &plan, &mut ()).unwrap();
        assert_eq!(out.steps, 25);
        assert_eq!(out.history.len(), 25_usize.div_ceil(10) + 1);
        assert!(out.max_steps_reached && !out.converged);
        let steps: Vec<usize> = out.history.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
    }

    #[test]
    fn stationary_run_converges_after_one_step() {
        let g = GridSpec::cubic(8, 1.0).unwrap();
        let mut p = ModelParams::new(0.2, 1.0, 1.4, 0.0, 50.0, 20.0, 1.0, 0.0, 0.0);
        p.a0 = 1.0;
        let m = EnergyModel::new(g, p).unwrap();
        let plan = RunPlan::new(IntegratorConfig::new(Scheme::SemiImplicit, 1e-4), StoppingCriterion::new(100));
        let out = run_to_steady_state(&m, &ScalarField3D::constant(g, 1.0), &plan, &mut ()).unwrap();
        assert!(out.converged);
        assert_eq!(out.steps, 1);
        assert_eq!(out.history.len(), 2);
    }

    #[test]
    fn csv_row_roundtrip() {
        let e = EnergyBreakdown { w: 1.0, g: 0.1, t1: 0.2, t2: 0.3, e_m: 1.6, v: 0.03, a: 0.5, d_a: 0.1 };
        let row = DiagnosticsRow::new(300, 5e-7, e, 0.25);
        let back = DiagnosticsRow::from_csv(&row.to_csv()).unwrap();
        assert_eq!(back, row);
    }
}
