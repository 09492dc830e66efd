//! Uniform periodic grids and real scalar fields sampled on them.
//!
//! Samples are stored x-fastest: the value at `(i, j, k)` lives at
//! `i + nx * (j + ny * k)`, and grid point `i` sits at `x = i * lx / nx`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub lx: f64,
    pub ly: f64,
    pub lz: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, lx: f64, ly: f64, lz: f64) -> Result<Self> {
        let grid = GridSpec { nx, ny, nz, lx, ly, lz };
        grid.validate()?;
        Ok(grid)
    }

    /// `n`³ samples on the cube `[0, l]³`.
    pub fn cubic(n: usize, l: f64) -> Result<Self> {
        Self::new(n, n, n, l, l, l)
    }

    pub fn validate(&self) -> Result<()> {
        for (axis, n) in [("nx", self.nx), ("ny", self.ny), ("nz", self.nz)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::InvalidGrid(format!("{axis} = {n} must be even and at least 4")));
            }
        }
        for (axis, l) in [("lx", self.lx), ("ly", self.ly), ("lz", self.lz)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::InvalidGrid(format!("{axis} = {l} must be positive")));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn lengths(&self) -> [f64; 3] {
        [self.lx, self.ly, self.lz]
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self) -> [f64; 3] {
        [self.lx / self.nx as f64, self.ly / self.ny as f64, self.lz / self.nz as f64]
    }

    pub fn cell_volume(&self) -> f64 {
        let [hx, hy, hz] = self.spacing();
        hx * hy * hz
    }

    pub fn domain_volume(&self) -> f64 {
        self.lx * self.ly * self.lz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn unravel(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    #[inline]
    pub fn coords(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let [hx, hy, hz] = self.spacing();
        [i as f64 * hx, j as f64 * hy, k as f64 * hz]
    }

    /// Same box with `n` samples per axis.
    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Self::new(n, n, n, self.lx, self.ly, self.lz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField3D {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField3D {
    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        ScalarField3D { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(ScalarField3D { grid, values })
    }

    /// Sample `f(x, y, z)` at every grid point.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.nz {
            for j in 0..grid.ny {
                for i in 0..grid.nx {
                    let [x, y, z] = grid.coords(i, j, k);
                    values.push(f(x, y, z));
                }
            }
        }
        ScalarField3D { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.grid.index(i, j, k)]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField3D { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        ScalarField3D { grid: self.grid, values }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self + s * other`
    pub fn add_scaled(&self, s: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + s * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// Trapezoidal quadrature over the periodic box.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    /// Discrete L² inner product `∫ self · other dx`.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        let s: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        s * self.grid.cell_volume()
    }
}

/// `∫_Ω f dx`; the rectangle rule is spectrally accurate for smooth periodic integrands.
pub fn integrate(f: &ScalarField3D) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_volume()
}
