//! Independent checks: finite-difference gradients, sharp-interface sphere
//! references, discrete energy-law residuals, penalty sweeps and shape probes.

use std::collections::VecDeque;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::energy::{EnergyModel, ModelParams};
use crate::error::Result;
use crate::field::{GridSpec, ScalarField3D};
use crate::integrators::{run_to_steady_state, RunPlan};

/// Which piece of `E_M` a gradient check targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnergyTerm {
    W,
    G,
    T1,
    T2,
    Total,
}

impl EnergyTerm {
    pub const ALL: [EnergyTerm; 5] = [EnergyTerm::W, EnergyTerm::G, EnergyTerm::T1, EnergyTerm::T2, EnergyTerm::Total];

    pub fn name(self) -> &'static str {
        match self {
            EnergyTerm::W => "W",
            EnergyTerm::G => "G",
            EnergyTerm::T1 => "T1",
            EnergyTerm::T2 => "T2",
            EnergyTerm::Total => "E_M",
        }
    }

    pub fn evaluate(self, model: &EnergyModel, phi: &ScalarField3D) -> f64 {
        match self {
            EnergyTerm::W => model.bending_energy(phi),
            EnergyTerm::G => model.ade_energy(phi),
            EnergyTerm::T1 => model.penalties(phi).0,
            EnergyTerm::T2 => model.penalties(phi).1,
            EnergyTerm::Total => model.energy(phi),
        }
    }

    pub fn derivative(self, model: &EnergyModel, phi: &ScalarField3D) -> ScalarField3D {
        let terms = model.variational_terms(phi);
        match self {
            EnergyTerm::W => terms.bending,
            EnergyTerm::G => terms.ade,
            EnergyTerm::T1 => terms.volume,
            EnergyTerm::T2 => terms.area,
            EnergyTerm::Total => terms.total(),
        }
    }
}

/// Central difference `(F(φ+δψ) − F(φ−δψ)) / 2δ` of an arbitrary functional.
pub fn fd_directional(
    functional: impl Fn(&ScalarField3D) -> f64,
    phi: &ScalarField3D,
    psi: &ScalarField3D,
    delta: f64,
) -> f64 {
    let plus = functional(&phi.add_scaled(delta, psi));
    let minus = functional(&phi.add_scaled(-delta, psi));
    (plus - minus) / (2.0 * delta)
}

/// `(E_M(φ+δψ) − E_M(φ−δψ)) / 2δ`
pub fn fd_directional_derivative(model: &EnergyModel, phi: &ScalarField3D, psi: &ScalarField3D, delta: f64) -> f64 {
    central_differences(model, phi, psi, delta).total
}

/// Central differences of every energy term along one direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TermDifferences {
    pub w: f64,
    pub g: f64,
    pub t1: f64,
    pub t2: f64,
    pub total: f64,
}

impl TermDifferences {
    pub fn get(&self, term: EnergyTerm) -> f64 {
        match term {
            EnergyTerm::W => self.w,
            EnergyTerm::G => self.g,
            EnergyTerm::T1 => self.t1,
            EnergyTerm::T2 => self.t2,
            EnergyTerm::Total => self.total,
        }
    }
}

/// `(F(φ+δψ) − F(φ−δψ)) / 2δ` for each term, with the difference of the two
/// evaluations expanded algebraically at every grid point.
///
/// Subtracting two separately evaluated energies loses about `|F|·1e-16/δ`
/// to cancellation, which swamps directions nearly orthogonal to the gradient.
/// Writing each integrand's `(+) − (−)` and `(+) + (−)` pieces in closed form
/// keeps the result accurate relative to the derivative itself. This is an
/// independent evaluation of the functionals, not a call into the energy model.
pub fn central_differences(
    model: &EnergyModel,
    phi: &ScalarField3D,
    psi: &ScalarField3D,
    delta: f64,
) -> TermDifferences {
    let p = model.params();
    let spectral = model.spectral();
    let (eps, ce) = (p.epsilon, p.c * p.epsilon);
    let cell = phi.grid().cell_volume();
    let lap_a = spectral.laplacian(phi);
    let lap_s = spectral.laplacian(psi).scale(delta);

    // Accumulate (difference, sum) pairs of the integrals of each integrand.
    let mut acc = [0.0_f64; 7];
    for (((&a, &ps), &la), &ls) in phi.values().iter().zip(psi.values()).zip(lap_a.values()).zip(lap_s.values()) {
        let s = delta * ps;
        let (a2, s2) = (a * a, s * s);

        // shifted cubic (u² − 1)(u + Cε) = u³ + Cεu² − u − Cε
        let dp = 2.0 * s * (3.0 * a2 + s2) + 4.0 * ce * a * s - 2.0 * s;
        let sp = 2.0 * a * a2 + 6.0 * a * s2 + 2.0 * ce * (a2 + s2) - 2.0 * a - 2.0 * ce;
        let df = 2.0 * eps * ls - dp / eps;
        let sf = 2.0 * eps * la - sp / eps;
        acc[0] += df * sf;

        // volume
        acc[1] += s;
        acc[2] += a + 1.0;

        // Ginzburg-Landau: −(ε/2)uΔu + (1/4ε)(u² − 1)²
        let q = a2 + s2 - 1.0;
        acc[3] += -eps * (a * ls + s * la) + 8.0 * a * s * q / (4.0 * eps);
        acc[4] += -eps * (a * la + s * ls) + 2.0 * (q * q + 4.0 * a2 * s2) / (4.0 * eps);

        // area difference integrand (1 − u²)Δu + u(1 − u²)²/ε², with u(1−u²)² = u − 2u³ + u⁵
        let (dq, sq) = (-4.0 * a * s, 2.0 * (1.0 - a2 - s2));
        let a4 = a2 * a2;
        let dr =
            2.0 * s - 2.0 * (6.0 * a2 * s + 2.0 * s * s2) + (10.0 * a4 * s + 20.0 * a2 * s * s2 + 2.0 * s2 * s2 * s);
        let sr =
            2.0 * a - 2.0 * (2.0 * a * a2 + 6.0 * a * s2) + (2.0 * a4 * a + 20.0 * a * a2 * s2 + 10.0 * a * s2 * s2);
        acc[5] += dq * la + sq * ls + dr / (eps * eps);
        acc[6] += sq * la + dq * ls + sr / (eps * eps);
    }
    let acc = acc.map(|v| v * cell);
    let area_factor = 3.0 * std::f64::consts::SQRT_2 / 4.0;
    let da_factor = -0.75 * p.d;

    let w = p.kappa / (2.0 * eps) * acc[0];
    let (dv, sv) = (acc[1], acc[2]);
    let t1 = p.m1 * dv * (sv - 2.0 * p.alpha);
    let (d_area, s_area) = (area_factor * acc[3], area_factor * acc[4]);
    let t2 = p.m2 * d_area * (s_area - 2.0 * p.beta);
    let (d_da, s_da) = (da_factor * acc[5], da_factor * acc[6]);
    let g = p.kappa_bar / 2.0 * PI / (p.a0 * p.d * p.d) * d_da * (s_da - 2.0 * p.da0);

    let scale = 1.0 / (2.0 * delta);
    let (w, g, t1, t2) = (w * scale, g * scale, t1 * scale, t2 * scale);
    TermDifferences { w, g, t1, t2, total: w + g + t1 + t2 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub term: EnergyTerm,
    pub finite_difference: f64,
    pub inner_product: f64,
    pub relative_error: f64,
}

/// Compare a term's directional finite difference against `∫ δF/δφ · ψ`.
pub fn gradient_check(
    model: &EnergyModel,
    term: EnergyTerm,
    phi: &ScalarField3D,
    psi: &ScalarField3D,
    delta: f64,
) -> GradientCheck {
    let fd = central_differences(model, phi, psi, delta).get(term);
    let ip = term.derivative(model, phi).dot(psi);
    let scale = fd.abs().max(ip.abs());
    let relative_error = if scale == 0.0 { 0.0 } else { (fd - ip).abs() / scale };
    GradientCheck { term, finite_difference: fd, inner_product: ip, relative_error }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereReference {
    pub volume: f64,
    pub area: f64,
    pub area_difference: f64,
}

/// Sharp-interface `((4/3)πr³, 4πr², 8πDr)`.
pub fn sphere_reference(r: f64, params: &ModelParams) -> SphereReference {
    SphereReference {
        volume: 4.0 / 3.0 * PI * r.powi(3),
        area: 4.0 * PI * r * r,
        area_difference: 8.0 * PI * params.d * r,
    }
}

/// `tanh((r − |x − c|) / (√2 ε))`, the equilibrium profile wrapped around a sphere.
pub fn tanh_sphere(grid: &GridSpec, center: [f64; 3], r: f64, epsilon: f64) -> ScalarField3D {
    let s = std::f64::consts::SQRT_2 * epsilon;
    ScalarField3D::from_fn(*grid, |x, y, z| {
        let d = ((x - center[0]).powi(2) + (y - center[1]).powi(2) + (z - center[2]).powi(2)).sqrt();
        ((r - d) / s).tanh()
    })
}

/// Lemma-style residual `E(φ₁) − E(φ₀) + (1/Δt)∫(φ₁−φ₀)²`; zero for the symmetric scheme.
pub fn energy_law_residual(model: &EnergyModel, phi_n: &ScalarField3D, phi_np1: &ScalarField3D, dt: f64) -> f64 {
    dissipation_balance(model, phi_n, phi_np1, dt, 1.0)
}

/// `E(φ₁) − E(φ₀) + (1/2Δt)∫(φ₁−φ₀)²`; nonpositive for a minimizing backward Euler step.
pub fn backward_euler_residual(model: &EnergyModel, phi_n: &ScalarField3D, phi_np1: &ScalarField3D, dt: f64) -> f64 {
    dissipation_balance(model, phi_n, phi_np1, dt, 0.5)
}

fn dissipation_balance(model: &EnergyModel, a: &ScalarField3D, b: &ScalarField3D, dt: f64, weight: f64) -> f64 {
    let diff = b.sub(a);
    model.energy(b) - model.energy(a) + weight / dt * diff.dot(&diff)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySweepRow {
    pub m: f64,
    pub volume_violation: f64,
    pub area_violation: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Relax `φ₀` to steady state with `M₁ = M₂ = M` for each entry of `m_list`.
pub fn penalty_sweep(
    model: &EnergyModel,
    phi_0: &ScalarField3D,
    m_list: &[f64],
    plan: &RunPlan,
) -> Result<Vec<PenaltySweepRow>> {
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let params = ModelParams { m1: m, m2: m, ..*model.params() };
        let swept = model.with_params(params)?;
        let outcome = run_to_steady_state(&swept, phi_0, plan, &mut ())?;
        let measures = swept.measures(&outcome.field);
        rows.push(PenaltySweepRow {
            m,
            volume_violation: (measures.volume - params.alpha).abs(),
            area_violation: (measures.area - params.beta).abs(),
            steps: outcome.steps,
            converged: outcome.converged,
        });
    }
    Ok(rows)
}

/// A named point, in physical coordinates, at which the sign of `φ` is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub name: String,
    pub point: [f64; 3],
}

impl Probe {
    pub fn new(name: impl Into<String>, point: [f64; 3]) -> Self {
        Probe { name: name.into(), point }
    }
}

/// Box center, points on the three axes at a quarter of the box from the center,
/// and the equatorial mid-radius points at an eighth of the box.
pub fn default_probes(grid: &GridSpec) -> Vec<Probe> {
    let c = [grid.lx / 2.0, grid.ly / 2.0, grid.lz / 2.0];
    let mut probes = vec![Probe::new("center", c)];
    for (axis, name) in ["x", "y", "z"].iter().enumerate() {
        let mut p = c;
        p[axis] += grid.lengths()[axis] / 4.0;
        probes.push(Probe::new(format!("axis_{name}"), p));
    }
    for (axis, name) in ["x", "y"].iter().enumerate() {
        let mut p = c;
        p[axis] += grid.lengths()[axis] / 8.0;
        probes.push(Probe::new(format!("mid_{name}"), p));
    }
    probes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReading {
    pub name: String,
    pub value: f64,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEvidence {
    pub probes: Vec<ProbeReading>,
    pub positive_components: usize,
    pub negative_components: usize,
    /// Number of grid planes along each axis that intersect `{φ > 0}`.
    pub positive_extent: [usize; 3],
    /// Length along each axis of the set where the plane-wise maximum of `φ` is positive,
    /// with zero crossings located by linear interpolation.
    pub positive_span: [f64; 3],
}

impl ShapeEvidence {
    pub fn probe(&self, name: &str) -> Option<&ProbeReading> {
        self.probes.iter().find(|p| p.name == name)
    }

    /// Bounding-box extent along z relative to the wider of the x and y extents.
    pub fn z_aspect_ratio(&self) -> f64 {
        let [sx, sy, sz] = self.positive_span;
        let lateral = sx.max(sy);
        if lateral == 0.0 {
            0.0
        } else {
            sz / lateral
        }
    }

    /// Centre outside, mid-radius inside, a single inside region.
    pub fn looks_like_discocyte(&self) -> bool {
        let center_out = self.probe("center").is_some_and(|p| !p.positive);
        let rim_in = self.probe("mid_x").is_some_and(|p| p.positive) && self.probe("mid_y").is_some_and(|p| p.positive);
        center_out && rim_in && self.positive_components == 1
    }

    /// Centre outside, one inside region, and the outside connected through the hole.
    pub fn looks_like_torus(&self) -> bool {
        self.probe("center").is_some_and(|p| !p.positive)
            && self.positive_components == 1
            && self.negative_components == 1
    }
}

/// Sample `φ` at the nearest grid node to each probe (periodic wrap) and
/// count 6-connected periodic components of `{φ > 0}` and `{φ < 0}`.
pub fn shape_probe(field: &ScalarField3D, probes: &[Probe]) -> ShapeEvidence {
    let grid = field.grid();
    let readings = probes
        .iter()
        .map(|p| {
            let [hx, hy, hz] = grid.spacing();
            let idx = |x: f64, h: f64, n: usize| ((x / h).round() as i64).rem_euclid(n as i64) as usize;
            let value =
                field.at(idx(p.point[0], hx, grid.nx), idx(p.point[1], hy, grid.ny), idx(p.point[2], hz, grid.nz));
            ProbeReading { name: p.name.clone(), value, positive: value > 0.0 }
        })
        .collect();
    ShapeEvidence {
        probes: readings,
        positive_components: count_components(field, |v| v > 0.0),
        negative_components: count_components(field, |v| v < 0.0),
        positive_extent: positive_extent(field),
        positive_span: positive_span(field),
    }
}

fn count_components(field: &ScalarField3D, member: impl Fn(f64) -> bool) -> usize {
    let grid = field.grid();
    let [nx, ny, nz] = grid.dims();
    let values = field.values();
    let mut seen = vec![false; values.len()];
    let mut queue = VecDeque::new();
    let mut components = 0;
    for start in 0..values.len() {
        if seen[start] || !member(values[start]) {
            continue;
        }
        components += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let (i, j, k) = grid.unravel(idx);
            let neighbours = [
                grid.index((i + 1) % nx, j, k),
                grid.index((i + nx - 1) % nx, j, k),
                grid.index(i, (j + 1) % ny, k),
                grid.index(i, (j + ny - 1) % ny, k),
                grid.index(i, j, (k + 1) % nz),
                grid.index(i, j, (k + nz - 1) % nz),
            ];
            for n in neighbours {
                if !seen[n] && member(values[n]) {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
    }
    components
}

fn positive_extent(field: &ScalarField3D) -> [usize; 3] {
    let grid = field.grid();
    let mut hit = [vec![false; grid.nx], vec![false; grid.ny], vec![false; grid.nz]];
    for (idx, &v) in field.values().iter().enumerate() {
        if v > 0.0 {
            let (i, j, k) = grid.unravel(idx);
            hit[0][i] = true;
            hit[1][j] = true;
            hit[2][k] = true;
        }
    }
    hit.map(|h| h.iter().filter(|&&b| b).count())
}

fn positive_span(field: &ScalarField3D) -> [f64; 3] {
    let grid = field.grid();
    let dims = grid.dims();
    let h = grid.spacing();
    let mut profiles = dims.map(|n| vec![f64::NEG_INFINITY; n]);
    for (idx, &v) in field.values().iter().enumerate() {
        let (i, j, k) = grid.unravel(idx);
        for (axis, at) in [i, j, k].into_iter().enumerate() {
            let slot = &mut profiles[axis][at];
            *slot = slot.max(v);
        }
    }
    let mut span = [0.0; 3];
    for axis in 0..3 {
        let p = &profiles[axis];
        let n = p.len();
        for i in 0..n {
            if p[i] <= 0.0 {
                continue;
            }
            // Each positive slice owns half of the gap to each neighbour, cut at the interpolated crossing.
            for j in [(i + 1) % n, (i + n - 1) % n] {
                span[axis] += if p[j] > 0.0 { 0.5 * h[axis] } else { h[axis] * p[i] / (p[i] - p[j]) };
            }
        }
    }
    span
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> GridSpec {
        GridSpec::cubic(n, 1.0).unwrap()
    }

    #[test]
    fn fd_of_zero_direction_is_zero() {
        let g = grid(8);
        let model = EnergyModel::new(g, ModelParams::new(0.1, 1.0, 1.4, 0.0, 1e3, 1e3, 0.1, 0.5, 0.05)).unwrap();
        let phi = ScalarField3D::from_fn(g, |x, y, _| 0.3 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
        assert_eq!(fd_directional_derivative(&model, &phi, &ScalarField3D::zeros(g), 1e-5), 0.0);
    }

    #[test]
    fn fd_of_quadratic_is_exact() {
        let g = grid(8);
        let phi = ScalarField3D::from_fn(g, |x, _, _| x);
        let psi = ScalarField3D::constant(g, 1.0);
        let d = fd_directional(|u| u.dot(u), &phi, &psi, 0.1);
        assert!((d - 2.0 * phi.dot(&psi)).abs() < 1e-12);
    }

    #[test]
    fn expanded_differences_match_direct_evaluation() {
        let g = grid(8);
        let mut p = ModelParams::new(0.15, 1.3, 1.4, 0.7, 1e3, 2e3, 0.3, 0.6, 0.05);
        p.a0 = 0.8;
        let model = EnergyModel::new(g, p).unwrap();
        let phi = ScalarField3D::from_fn(g, |x, y, z| {
            0.6 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos() + 0.2 * (2.0 * PI * z).cos()
        });
        let psi =
            ScalarField3D::from_fn(g, |x, y, z| 0.3 + (2.0 * PI * (x + 2.0 * z)).cos() - 0.5 * (4.0 * PI * y).sin());
        let delta = 1e-2;
        let d = central_differences(&model, &phi, &psi, delta);
        for term in EnergyTerm::ALL {
            let naive = fd_directional(|u| term.evaluate(&model, u), &phi, &psi, delta);
            let expanded = d.get(term);
            assert!((naive - expanded).abs() <= 1e-9 * naive.abs().max(1.0), "{term:?}: {naive} vs {expanded}");
        }
    }

    #[test]
    fn sphere_reference_values_and_scaling() {
        let mut p = ModelParams::new(0.04, 1.0, 1.4, 0.0, 1e5, 1e4, 0.0, 1.0, 0.0);
        p.d = 0.04 * 2.0 / 3.0;
        let s = sphere_reference(0.25, &p);
        assert!((s.area_difference - 0.16755).abs() < 1e-5);
        let t = sphere_reference(0.5, &p);
        assert!((t.volume / s.volume - 8.0).abs() < 1e-12);
        assert!((t.area / s.area - 4.0).abs() < 1e-12);
        assert!((t.area_difference / s.area_difference - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_states_have_zero_residual() {
        let g = grid(8);
        let model = EnergyModel::new(g, ModelParams::new(0.1, 1.0, 1.4, 0.0, 1e3, 1e3, 0.1, 0.5, 0.05)).unwrap();
        let phi = tanh_sphere(&g, [0.5; 3], 0.3, 0.1);
        assert_eq!(energy_law_residual(&model, &phi, &phi, 1e-6), 0.0);
        assert_eq!(backward_euler_residual(&model, &phi, &phi, 1e-6), 0.0);
    }

    #[test]
    fn uniform_interior_has_one_positive_component() {
        let g = grid(8);
        let ev = shape_probe(&ScalarField3D::constant(g, 1.0), &default_probes(&g));
        assert_eq!((ev.positive_components, ev.negative_components), (1, 0));
        assert!(ev.probes.iter().all(|p| p.positive));
        assert_eq!(ev.positive_extent, [8, 8, 8]);
        assert_eq!(ev.positive_span, [1.0; 3]);
    }

    #[test]
    fn span_resolves_sub_grid_lengths() {
        let g = grid(32);
        let h = 1.0 / 32.0;
        let prolate = ScalarField3D::from_fn(g, |x, y, z| {
            let q = ((x - 0.5) / 0.15).powi(2) + ((y - 0.5) / 0.15).powi(2) + ((z - 0.5) / 0.21).powi(2);
            ((1.0 - q.sqrt()) * 0.15 / 0.03).tanh()
        });
        let ev = shape_probe(&prolate, &[]);
        assert!((ev.positive_span[0] - 0.30).abs() < h / 4.0, "{:?}", ev.positive_span);
        assert!((ev.positive_span[2] - 0.42).abs() < h / 4.0, "{:?}", ev.positive_span);
        assert!((ev.z_aspect_ratio() - 1.4).abs() < 0.05);
    }

    #[test]
    fn ball_and_wrapping_slab_components() {
        let g = grid(16);
        let ball = tanh_sphere(&g, [0.5; 3], 0.2, 0.03);
        let ev = shape_probe(&ball, &default_probes(&g));
        assert_eq!((ev.positive_components, ev.negative_components), (1, 1));
        assert!(ev.probe("center").unwrap().positive);
        assert!(!ev.probe("axis_z").unwrap().positive);

        // two slabs joined across the periodic boundary form one component
        let slab = ScalarField3D::from_fn(g, |x, _, _| if !(0.2..0.8).contains(&x) { 1.0 } else { -1.0 });
        let ev = shape_probe(&slab, &[]);
        assert_eq!((ev.positive_components, ev.negative_components), (1, 1));
    }

    #[test]
    fn torus_signature() {
        let g = grid(32);
        let (big, small) = (0.25, 0.1);
        let torus = ScalarField3D::from_fn(g, |x, y, z| {
            let rho = ((x - 0.5).powi(2) + (y - 0.5).powi(2)).sqrt();
            let d = ((rho - big).powi(2) + (z - 0.5).powi(2)).sqrt();
            ((small - d) / 0.03).tanh()
        });
        let ev = shape_probe(&torus, &default_probes(&g));
        assert!(ev.looks_like_torus());
        assert!(ev.z_aspect_ratio() < 0.5);
    }

    #[test]
    fn two_balls_are_two_components() {
        let g = grid(16);
        let a = tanh_sphere(&g, [0.25, 0.5, 0.5], 0.1, 0.02);
        let b = tanh_sphere(&g, [0.75, 0.5, 0.5], 0.1, 0.02);
        let both = a.zip_map(&b, f64::max);
        assert_eq!(shape_probe(&both, &[]).positive_components, 2);
    }
}
