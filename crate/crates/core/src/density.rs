//! Uniform grids, cell-averaged densities and the scalar functionals on them.
//! All integrals use the midpoint rule on cell averages.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::ksum;
use crate::params::ModelParams;
use crate::potential::Potential;
use crate::transport;

pub const MIN_CELLS: usize = 8;

/// Uniform cell-centered grid on a box in one or two dimensions.
/// 2D values are stored row-major with the first axis slowest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    lo: [f64; 2],
    hi: [f64; 2],
    n: [usize; 2],
}

impl Grid {
    pub fn new_1d(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::checked(1, [lo, 0.0], [hi, 1.0], [n, 1])
    }

    pub fn new_2d(lo: [f64; 2], hi: [f64; 2], n: [usize; 2]) -> Result<Self> {
        Self::checked(2, lo, hi, n)
    }

    /// Per-axis constructor used by file readers.
    pub fn new(lo: &[f64], hi: &[f64], n: &[usize]) -> Result<Self> {
        match (lo.len(), hi.len(), n.len()) {
            (1, 1, 1) => Self::new_1d(lo[0], hi[0], n[0]),
            (2, 2, 2) => Self::new_2d([lo[0], lo[1]], [hi[0], hi[1]], [n[0], n[1]]),
            _ => Err(Error::param("grid must have 1 or 2 axes with matching bounds")),
        }
    }

    fn checked(dim: usize, lo: [f64; 2], hi: [f64; 2], n: [usize; 2]) -> Result<Self> {
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite() && lo[a] < hi[a]) {
                return Err(Error::param("grid bounds must be finite with lo < hi"));
            }
            if n[a] < MIN_CELLS {
                return Err(Error::param(alloc::format!("grid needs at least {MIN_CELLS} cells per axis")));
            }
        }
        Ok(Grid { dim, lo, hi, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn lo(&self) -> &[f64] {
        &self.lo[..self.dim]
    }
    pub fn hi(&self) -> &[f64] {
        &self.hi[..self.dim]
    }
    pub fn n(&self) -> &[usize] {
        &self.n[..self.dim]
    }
    pub fn dx(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / self.n[axis] as f64
    }
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.dx(a)).product()
    }
    pub fn len(&self) -> usize {
        self.n[..self.dim].iter().product()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// Center of cell `i` along `axis`.
    #[inline]
    pub fn center(&self, axis: usize, i: usize) -> f64 {
        self.lo[axis] + (i as f64 + 0.5) * self.dx(axis)
    }
    /// Cell center for flat index `idx`; unused components are 0.
    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.center(0, idx), 0.0]
        } else {
            [self.center(0, idx / self.n[1]), self.center(1, idx % self.n[1])]
        }
    }
    /// All cell centers as points of length `dim`.
    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
    /// Ψ at every cell center.
    pub fn sample_potential(&self, psi: &Potential) -> Result<Vec<f64>> {
        if psi.dim() != self.dim {
            return Err(Error::param("potential and grid dimensions differ"));
        }
        Ok((0..self.len()).map(|i| psi.eval(&self.point(i)[..self.dim])).collect())
    }
}

/// Nonnegative cell averages of a density on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    grid: Grid,
    values: Vec<f64>,
}

impl GridDensity {
    /// Takes values as given (no normalization); they must be finite and ≥ 0.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("density values must be finite and nonnegative"));
        }
        Ok(GridDensity { grid, values })
    }

    /// Samples `f` at cell centers and normalizes to unit mass.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(grid: Grid, f: F) -> Result<Self> {
        let values = (0..grid.len()).map(|i| f(&grid.point(i)[..grid.dim()])).collect();
        Self::from_values(grid, values)?.normalized()
    }

    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / (grid.len() as f64 * grid.cell_volume());
        GridDensity { grid, values: vec![v; grid.len()] }
    }

    /// Isotropic Gaussian restricted to the grid and renormalized.
    pub fn gaussian(grid: Grid, mean: &[f64], std: f64) -> Result<Self> {
        if mean.len() != grid.dim() || !(std > 0.0) {
            return Err(Error::param("gaussian needs a mean per axis and positive std"));
        }
        Self::from_fn(grid, |y| {
            let r2: f64 = y.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
            (-0.5 * r2 / (std * std)).exp()
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    /// Callers must keep values finite and nonnegative.
    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn normalized(mut self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::param("density has zero or non-finite mass"));
        }
        if m != 1.0 {
            for v in &mut self.values {
                *v /= m;
            }
        }
        Ok(self)
    }

    fn same_grid(&self, other: &GridDensity) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    pub fn mass(&self) -> f64 {
        ksum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> [f64; 2] {
        let vol = self.grid.cell_volume();
        let mut m = [0.0; 2];
        for a in 0..self.grid.dim() {
            m[a] = ksum(self.values.iter().enumerate().map(|(i, v)| v * self.grid.point(i)[a])) * vol;
        }
        m
    }

    pub fn second_moment(&self) -> f64 {
        let vol = self.grid.cell_volume();
        ksum(self.values.iter().enumerate().map(|(i, v)| {
            let p = self.grid.point(i);
            v * (p[0] * p[0] + p[1] * p[1])
        })) * vol
    }

    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) || !p.is_finite() {
            return Err(Error::Domain("lp_norm"));
        }
        let s = if p == 2.0 {
            ksum(self.values.iter().map(|v| v * v))
        } else {
            ksum(self.values.iter().map(|v| v.powf(p)))
        };
        Ok((s * self.grid.cell_volume()).powf(1.0 / p))
    }

    /// `(λ ∫ρ ln ρ, η/(m-1) ∫ρ^m)`, with `0 ln 0 = 0`.
    pub fn internal_energy_terms(&self, p: &ModelParams) -> (f64, f64) {
        let vol = self.grid.cell_volume();
        let h = ksum(self.values.iter().map(|&s| if s > 0.0 { s * s.ln() } else { 0.0 }));
        let q = ksum(self.values.iter().map(|&s| p.pow_m(s)));
        (p.lambda * h * vol, p.eta / (p.m - 1.0) * q * vol)
    }

    /// `∫Ψρ` at cell centers.
    pub fn potential_energy(&self, psi: &Potential) -> Result<f64> {
        let pv = self.grid.sample_potential(psi)?;
        Ok(self.potential_energy_sampled(&pv))
    }

    pub(crate) fn potential_energy_sampled(&self, psi_values: &[f64]) -> f64 {
        ksum(self.values.iter().zip(psi_values).map(|(v, p)| v * p)) * self.grid.cell_volume()
    }

    /// `J(ρ) = ∫Ψρ + λ∫ρ ln ρ + η/(m-1) ∫ρ^m`.
    pub fn j_functional(&self, psi: &Potential, p: &ModelParams) -> Result<f64> {
        let pv = self.grid.sample_potential(psi)?;
        Ok(self.j_functional_sampled(&pv, p))
    }

    /// J with Ψ already sampled at cell centers.
    pub fn j_functional_sampled(&self, psi_values: &[f64], p: &ModelParams) -> f64 {
        let (h, q) = self.internal_energy_terms(p);
        self.potential_energy_sampled(psi_values) + h + q
    }

    /// `∫ρ ln(ρ/σ)`; +∞ if σ vanishes where ρ does not.
    pub fn kl_divergence(&self, sigma: &GridDensity) -> Result<f64> {
        self.same_grid(sigma)?;
        let mut inf = false;
        let s = ksum(self.values.iter().zip(&sigma.values).map(|(&r, &s)| {
            if r <= 0.0 {
                0.0
            } else if s <= 0.0 {
                inf = true;
                0.0
            } else {
                r * (r / s).ln()
            }
        }));
        Ok(if inf { f64::INFINITY } else { s * self.grid.cell_volume() })
    }

    /// Exact in 1D; debiased Sinkhorn (ε annealed to dx²) in 2D.
    pub fn w2_distance(&self, sigma: &GridDensity) -> Result<f64> {
        self.same_grid(sigma)?;
        if self.grid.dim() == 1 {
            Ok(transport::w2_1d(&self.values, &sigma.values, self.grid.lo[0], self.grid.dx(0)))
        } else {
            Ok(transport::sinkhorn_w2(self, sigma, &transport::SinkhornConfig::for_grid(&self.grid))?
                .distance)
        }
    }
}
