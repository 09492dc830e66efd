//! Fourier collocation on the periodic box.
//!
//! Transforms are real-to-complex along x and complex-to-complex along y and
//! z. The half spectrum is stored x-fastest with `nx/2 + 1` modes along x.
//! Forward transforms are unnormalized; inverse transforms divide by the
//! number of samples so that `inverse(forward(f)) == f`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{GridSpec, ScalarField3D};

pub type C64 = Complex<f64>;

/// Signed wavenumbers `2π m / L` for an axis with `n` samples, in FFT order.
///
/// The Nyquist mode `m = n/2` is kept once with a positive sign.
pub fn axis_wavenumbers(n: usize, l: f64) -> Vec<f64> {
    (0..n)
        .map(|m| {
            let signed = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
            2.0 * PI * signed / l
        })
        .collect()
}

/// Per-axis wavenumbers `(kx, ky, kz)` of the full (not halved) spectrum.
pub fn wavenumber_grids(grid: &GridSpec) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    (axis_wavenumbers(grid.nx, grid.lx), axis_wavenumbers(grid.ny, grid.ly), axis_wavenumbers(grid.nz, grid.lz))
}

/// Planned transforms and wavenumber tables for one grid.
///
/// Cheap to share by reference; every operation takes `&self` and allocates
/// its own work buffers, so one instance may serve several threads.
#[derive(Clone)]
pub struct Spectral {
    grid: GridSpec,
    nxh: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
    fft_z: Arc<dyn Fft<f64>>,
    ifft_z: Arc<dyn Fft<f64>>,
    kx: Vec<f64>,
    ky: Vec<f64>,
    kz: Vec<f64>,
    k2: Vec<f64>,
    keep: Option<Vec<bool>>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("grid", &self.grid).field("dealias", &self.keep.is_some()).finish()
    }
}

impl Spectral {
    pub fn new(grid: GridSpec) -> Result<Self> {
        grid.validate()?;
        let mut real_planner = RealFftPlanner::<f64>::new();
        let mut planner = FftPlanner::<f64>::new();
        let nxh = grid.nx / 2 + 1;
        let kx: Vec<f64> = axis_wavenumbers(grid.nx, grid.lx)[..nxh].to_vec();
        let ky = axis_wavenumbers(grid.ny, grid.ly);
        let kz = axis_wavenumbers(grid.nz, grid.lz);
        let mut k2 = Vec::with_capacity(nxh * grid.ny * grid.nz);
        for &z in &kz {
            for &y in &ky {
                for &x in &kx {
                    k2.push(x * x + y * y + z * z);
                }
            }
        }
        Ok(Spectral {
            grid,
            nxh,
            r2c: real_planner.plan_fft_forward(grid.nx),
            c2r: real_planner.plan_fft_inverse(grid.nx),
            fft_y: planner.plan_fft_forward(grid.ny),
            ifft_y: planner.plan_fft_inverse(grid.ny),
            fft_z: planner.plan_fft_forward(grid.nz),
            ifft_z: planner.plan_fft_inverse(grid.nz),
            kx,
            ky,
            kz,
            k2,
            keep: None,
        })
    }

    /// Enable 2/3-rule truncation: every forward transform zeroes modes with
    /// `|m| > n/3` on any axis.
    pub fn with_dealiasing(mut self, enabled: bool) -> Self {
        self.keep = enabled.then(|| {
            let [nx, ny, nz] = self.grid.dims();
            let signed = |m: usize, n: usize| if m <= n / 2 { m } else { n - m };
            let mut keep = Vec::with_capacity(self.k2.len());
            for iz in 0..nz {
                for iy in 0..ny {
                    for ix in 0..self.nxh {
                        keep.push(3 * signed(ix, nx) <= nx && 3 * signed(iy, ny) <= ny && 3 * signed(iz, nz) <= nz);
                    }
                }
            }
            keep
        });
        self
    }

    pub fn dealiasing(&self) -> bool {
        self.keep.is_some()
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// `|k|²` for every stored mode, in half-spectrum order.
    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    pub fn spectrum_len(&self) -> usize {
        self.k2.len()
    }

    fn check(&self, f: &ScalarField3D) {
        assert_eq!(f.grid(), &self.grid, "field grid does not match the spectral context");
    }

    /// Unnormalized forward transform to the half spectrum.
    pub fn forward(&self, values: &[f64]) -> Vec<C64> {
        let [nx, ny, nz] = self.grid.dims();
        let nxh = self.nxh;
        assert_eq!(values.len(), nx * ny * nz);
        let mut spec = vec![C64::new(0.0, 0.0); nxh * ny * nz];

        let r2c = &self.r2c;
        spec.par_chunks_mut(nxh * ny).zip(values.par_chunks(nx * ny)).for_each(|(plane, rows)| {
            let mut input = r2c.make_input_vec();
            let mut scratch = r2c.make_scratch_vec();
            for (out, row) in plane.chunks_mut(nxh).zip(rows.chunks(nx)) {
                input.copy_from_slice(row);
                r2c.process_with_scratch(&mut input, out, &mut scratch).expect("buffer sizes come from the plan");
            }
        });

        self.transform_yz(&mut spec, &self.fft_y, &self.fft_z);
        if let Some(keep) = &self.keep {
            for (c, &k) in spec.iter_mut().zip(keep) {
                if !k {
                    *c = C64::new(0.0, 0.0);
                }
            }
        }
        spec
    }

    /// Normalized inverse transform from the half spectrum.
    pub fn inverse(&self, mut spec: Vec<C64>) -> Vec<f64> {
        let [nx, ny, nz] = self.grid.dims();
        let nxh = self.nxh;
        assert_eq!(spec.len(), nxh * ny * nz);
        self.transform_yz(&mut spec, &self.ifft_y, &self.ifft_z);

        let norm = 1.0 / (nx * ny * nz) as f64;
        let c2r = &self.c2r;
        let mut out = vec![0.0; nx * ny * nz];
        out.par_chunks_mut(nx * ny).zip(spec.par_chunks_mut(nxh * ny)).for_each(|(rows, plane)| {
            let mut scratch = c2r.make_scratch_vec();
            for (row, line) in rows.chunks_mut(nx).zip(plane.chunks_mut(nxh)) {
                // DC and Nyquist bins of a real signal are real; drop round-off.
                line[0].im = 0.0;
                line[nxh - 1].im = 0.0;
                c2r.process_with_scratch(line, row, &mut scratch).expect("buffer sizes come from the plan");
                for v in row.iter_mut() {
                    *v *= norm;
                }
            }
        });
        out
    }

    fn transform_yz(&self, spec: &mut [C64], fy: &Arc<dyn Fft<f64>>, fz: &Arc<dyn Fft<f64>>) {
        let [_, ny, nz] = self.grid.dims();
        let nxh = self.nxh;
        let plane = nxh * ny;

        spec.par_chunks_mut(plane).for_each(|slab| {
            let mut line = vec![C64::new(0.0, 0.0); ny];
            let mut scratch = vec![C64::new(0.0, 0.0); fy.get_inplace_scratch_len()];
            for ix in 0..nxh {
                for (iy, c) in line.iter_mut().enumerate() {
                    *c = slab[ix + nxh * iy];
                }
                fy.process_with_scratch(&mut line, &mut scratch);
                for (iy, c) in line.iter().enumerate() {
                    slab[ix + nxh * iy] = *c;
                }
            }
        });

        let mut columns = vec![C64::new(0.0, 0.0); plane * nz];
        for (iz, slab) in spec.chunks(plane).enumerate() {
            for (col, c) in slab.iter().enumerate() {
                columns[col * nz + iz] = *c;
            }
        }
        columns.par_chunks_mut(nz).for_each_init(
            || vec![C64::new(0.0, 0.0); fz.get_inplace_scratch_len()],
            |scratch, col| fz.process_with_scratch(col, scratch),
        );
        for (iz, slab) in spec.chunks_mut(plane).enumerate() {
            for (col, c) in slab.iter_mut().enumerate() {
                *c = columns[col * nz + iz];
            }
        }
    }

    /// Multiply each mode by a real symbol of `|k|²` and transform back.
    pub fn apply_radial(&self, f: &ScalarField3D, symbol: impl Fn(f64) -> f64 + Sync) -> ScalarField3D {
        self.check(f);
        let mut spec = self.forward(f.values());
        self.scale_radial(&mut spec, symbol);
        self.field(self.inverse(spec))
    }

    pub fn scale_radial(&self, spec: &mut [C64], symbol: impl Fn(f64) -> f64 + Sync) {
        spec.par_iter_mut().zip(self.k2.par_iter()).for_each(|(c, &k2)| *c *= symbol(k2));
    }

    fn field(&self, values: Vec<f64>) -> ScalarField3D {
        ScalarField3D::from_values(self.grid, values).expect("length matches grid")
    }

    /// Spectral Laplacian: multiplier `-|k|²`.
    pub fn laplacian(&self, f: &ScalarField3D) -> ScalarField3D {
        self.apply_radial(f, |k2| -k2)
    }

    /// Spectral bi-Laplacian: multiplier `|k|⁴`.
    pub fn biharmonic(&self, f: &ScalarField3D) -> ScalarField3D {
        self.apply_radial(f, |k2| k2 * k2)
    }

    /// Spectral partial derivatives along x, y and z.
    ///
    /// The Nyquist mode of the differentiated axis is dropped: its derivative
    /// vanishes at every grid point of a real field.
    pub fn gradient(&self, f: &ScalarField3D) -> [ScalarField3D; 3] {
        self.check(f);
        let spec = self.forward(f.values());
        let [nx, ny, nz] = self.grid.dims();
        let nxh = self.nxh;
        let mut out: Vec<ScalarField3D> = Vec::with_capacity(3);
        for axis in 0..3 {
            let mut d = spec.clone();
            for iz in 0..nz {
                for iy in 0..ny {
                    for ix in 0..nxh {
                        let (m, n, k) = match axis {
                            0 => (ix, nx, self.kx[ix]),
                            1 => (iy, ny, self.ky[iy]),
                            _ => (iz, nz, self.kz[iz]),
                        };
                        let kk = if m == n / 2 { 0.0 } else { k };
                        let idx = ix + nxh * (iy + ny * iz);
                        d[idx] *= C64::new(0.0, kk);
                    }
                }
            }
            out.push(self.field(self.inverse(d)));
        }
        let [dx, dy, dz]: [ScalarField3D; 3] = out.try_into().expect("three axes");
        [dx, dy, dz]
    }

    /// Pointwise `|∇f|²` with spectrally computed partial derivatives.
    pub fn grad_sq(&self, f: &ScalarField3D) -> ScalarField3D {
        let [dx, dy, dz] = self.gradient(f);
        let values =
            dx.values().iter().zip(dy.values()).zip(dz.values()).map(|((a, b), c)| a * a + b * b + c * c).collect();
        self.field(values)
    }

    /// Symbol of `a·I + b·Δ + c·Δ²` at `|k|²`.
    #[inline]
    pub fn operator_symbol(a: f64, b: f64, c: f64, k2: f64) -> f64 {
        a - b * k2 + c * k2 * k2
    }

    /// Smallest symbol of `a·I + b·Δ + c·Δ²` over the resolved modes.
    pub fn min_operator_symbol(&self, a: f64, b: f64, c: f64) -> f64 {
        self.k2.iter().map(|&k2| Self::operator_symbol(a, b, c, k2)).fold(f64::INFINITY, f64::min)
    }

    /// Apply `a·I + b·Δ + c·Δ²`.
    pub fn apply_operator(&self, u: &ScalarField3D, a: f64, b: f64, c: f64) -> ScalarField3D {
        self.apply_radial(u, |k2| Self::operator_symbol(a, b, c, k2))
    }

    /// Solve `(a·I + b·Δ + c·Δ²) u = rhs` mode by mode.
    pub fn implicit_solve(&self, rhs: &ScalarField3D, a: f64, b: f64, c: f64) -> Result<ScalarField3D> {
        self.check(rhs);
        let mut spec = self.forward(rhs.values());
        self.solve_in_place(&mut spec, a, b, c)?;
        Ok(self.field(self.inverse(spec)))
    }

    /// Divide a spectrum by the operator symbol, failing if any symbol is not positive.
    pub fn solve_in_place(&self, spec: &mut [C64], a: f64, b: f64, c: f64) -> Result<()> {
        let min_symbol = self.min_operator_symbol(a, b, c);
        if min_symbol.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::NonPositiveSymbol { min_symbol });
        }
        self.scale_radial(spec, |k2| 1.0 / Self::operator_symbol(a, b, c, k2));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::integrate;

    fn unit(n: usize) -> GridSpec {
        GridSpec::cubic(n, 1.0).unwrap()
    }

    fn rel_err(a: &ScalarField3D, b: &ScalarField3D) -> f64 {
        a.max_abs_diff(b) / b.max_abs().max(1e-300)
    }

    #[test]
    fn wavenumbers_follow_signed_aliasing() {
        let k: Vec<f64> = axis_wavenumbers(4, 1.0).iter().map(|k| k / (2.0 * PI)).collect();
        assert_eq!(k, vec![0.0, 1.0, 2.0, -1.0]);
        let k: Vec<f64> = axis_wavenumbers(4, 2.0).iter().map(|k| k / (2.0 * PI)).collect();
        assert_eq!(k, vec![0.0, 0.5, 1.0, -0.5]);
        let (kx, ky, kz) = wavenumber_grids(&unit(64));
        for k in [kx, ky, kz] {
            let max = k.iter().fold(0.0_f64, |m, v| m.max(v.abs())) / (2.0 * PI);
            assert!((max - 32.0).abs() < 1e-12);
            assert_eq!(k.iter().filter(|v| (v.abs() / (2.0 * PI) - 32.0).abs() < 1e-9).count(), 1);
        }
    }

    #[test]
    fn forward_inverse_is_identity() {
        let g = GridSpec::new(8, 6, 4, 1.0, 2.0, 0.5).unwrap();
        let sp = Spectral::new(g).unwrap();
        let f = ScalarField3D::from_fn(g, |x, y, z| (x * 3.1).sin() + y * y * z - (z * 7.0).cos());
        let back = sp.inverse(sp.forward(f.values()));
        let back = ScalarField3D::from_values(g, back).unwrap();
        assert!(f.max_abs_diff(&back) < 1e-13);
    }

    #[test]
    fn laplacian_of_constant_vanishes() {
        let g = unit(8);
        let sp = Spectral::new(g).unwrap();
        let c = ScalarField3D::constant(g, 3.7);
        assert!(sp.laplacian(&c).max_abs() < 1e-12);
        assert!(sp.biharmonic(&c).max_abs() < 1e-12);
        assert!(sp.grad_sq(&c).max_abs() < 1e-20);
    }

    #[test]
    fn laplacian_of_sine_on_scaled_box() {
        let g = GridSpec::new(16, 8, 8, 2.5, 1.0, 1.0).unwrap();
        let sp = Spectral::new(g).unwrap();
        let w = 2.0 * PI / 2.5;
        let f = ScalarField3D::from_fn(g, |x, _, _| (w * x).sin());
        assert!(rel_err(&sp.laplacian(&f), &f.scale(-w * w)) < 1e-12);
    }

    #[test]
    fn mixed_mode_eigenvalue() {
        let g = unit(16);
        let sp = Spectral::new(g).unwrap();
        let f = ScalarField3D::from_fn(g, |x, y, _| (2.0 * PI * x).sin() * (4.0 * PI * y).cos());
        let expected = f.scale(-(4.0 * PI * PI + 16.0 * PI * PI));
        assert!(rel_err(&sp.laplacian(&f), &expected) < 1e-12);
    }

    #[test]
    fn grad_sq_of_sine() {
        let g = unit(16);
        let sp = Spectral::new(g).unwrap();
        let w = 2.0 * PI;
        let f = ScalarField3D::from_fn(g, |x, _, _| (w * x).sin());
        let expected = ScalarField3D::from_fn(g, |x, _, _| w * w * (w * x).cos().powi(2));
        assert!(rel_err(&sp.grad_sq(&f), &expected) < 1e-12);
    }

    #[test]
    fn implicit_solve_inverts_eigenfunction() {
        let g = unit(8);
        let sp = Spectral::new(g).unwrap();
        let w = 2.0 * PI;
        let s = ScalarField3D::from_fn(g, |x, _, _| (w * x).sin());
        let identity = sp.implicit_solve(&s, 1.0, 0.0, 0.0).unwrap();
        assert!(identity.max_abs_diff(&s) < 1e-14);
        let rhs = s.scale(1.0 + w * w);
        let u = sp.implicit_solve(&rhs, 1.0, -1.0, 0.0).unwrap();
        assert!(u.max_abs_diff(&s) < 1e-13);
    }

    #[test]
    fn implicit_solve_rejects_nonpositive_symbol() {
        let g = unit(8);
        let sp = Spectral::new(g).unwrap();
        let f = ScalarField3D::constant(g, 1.0);
        // symbol at k = 0 is a = 0
        assert!(matches!(sp.implicit_solve(&f, 0.0, -1.0, 0.0), Err(Error::NonPositiveSymbol { .. })));
        // symbol 1 - k² goes negative at the first nonzero mode
        assert!(matches!(sp.implicit_solve(&f, 1.0, 1.0, 0.0), Err(Error::NonPositiveSymbol { .. })));
    }

    #[test]
    fn integral_of_laplacian_vanishes() {
        let g = unit(8);
        let sp = Spectral::new(g).unwrap();
        let f = ScalarField3D::from_fn(g, |x, y, z| (x * y + z).exp().sin());
        assert!(integrate(&sp.laplacian(&f)).abs() <= 1e-10 * f.max_abs());
    }

    #[test]
    fn dealiasing_truncates_high_modes() {
        let g = unit(12);
        let sp = Spectral::new(g).unwrap().with_dealiasing(true);
        let low = ScalarField3D::from_fn(g, |x, _, _| (4.0 * PI * x).cos());
        let high = ScalarField3D::from_fn(g, |x, _, _| (10.0 * PI * x).cos());
        assert!(sp.apply_radial(&low, |_| 1.0).max_abs_diff(&low) < 1e-13);
        assert!(sp.apply_radial(&high, |_| 1.0).max_abs() < 1e-13);
    }
}
