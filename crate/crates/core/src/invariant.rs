//! Stationary density `ρ_∞ = U(·; C*)` with `U(y; C) = h⁻¹(C - Ψ(y))` and
//! `∫U(·; C*) = 1`, and the η → 0 comparison with the Gibbs density.

use alloc::vec::Vec;

use crate::density::{Grid, GridDensity};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::ksum;
use crate::params::ModelParams;
use crate::potential::Potential;
use crate::special::h_inverse;

const C_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantResult {
    pub c_star: f64,
    pub rho_inf: GridDensity,
    /// `|M(C*) - 1|` before renormalization.
    pub mass_residual: f64,
    /// Sup over {ρ_∞ > 1e-12} of `|λ ln ρ + (ηm/(m-1)) ρ^(m-1) + Ψ - (ηm/(m-1) + C*)|`.
    pub identity_residual: f64,
    /// The theory predicts C* > 0 on ℝ^d; truncation can flip the sign.
    pub c_star_positive: bool,
    pub iterations: usize,
    /// Upper bound on the mass of `U(·; C*)` outside the grid box, from
    /// `U ≤ exp(-(Ψ - (ηm/(m-1) + C*))/λ)` integrated over a box three times wider.
    pub truncation_bound: f64,
}

/// `U(y; C)` for a potential value `Ψ(y)`.
#[inline]
pub fn stationary_profile(psi_value: f64, c: f64, p: &ModelParams) -> Result<f64> {
    h_inverse(c - psi_value, p)
}

/// `U(y; C) = h⁻¹(C - Ψ(y))`.
pub fn u_of_c(y: &[f64], c: f64, psi: &Potential, p: &ModelParams) -> Result<f64> {
    if y.len() != psi.dim() {
        return Err(Error::param("point dimension differs from the potential"));
    }
    stationary_profile(psi.eval(y), c, p)
}

fn total_mass(psi_values: &[f64], c: f64, p: &ModelParams, vol: f64) -> Result<(f64, f64)> {
    let mut u = Vec::with_capacity(psi_values.len());
    let mut du = Vec::with_capacity(psi_values.len());
    for &v in psi_values {
        let z = stationary_profile(v, c, p)?;
        u.push(z);
        // dU/dC = 1/h'(U) = U / (λ + ηm U^(m-1)).
        du.push(z / (p.lambda + p.eta * p.m * p.pow_m1(z)));
    }
    Ok((ksum(u) * vol, ksum(du) * vol))
}

/// Solves `M(C) = 1` by safeguarded Newton inside an auto-expanded bracket.
pub fn find_cstar(psi: &Potential, p: &ModelParams, grid: &Grid) -> Result<InvariantResult> {
    if p.theorem_mode {
        p.check_theorem_hypotheses()?;
    }
    let pv = grid.sample_potential(psi)?;
    let vol = grid.cell_volume();
    let mass = |c: f64| total_mass(&pv, c, p, vol);
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while mass(lo)?.0 > 1.0 {
        lo *= 2.0;
        if lo < -C_LIMIT {
            return Err(Error::param("no C with M(C) < 1 in [-1e6, 1e6]; enlarge the grid"));
        }
    }
    while mass(hi)?.0 < 1.0 {
        hi *= 2.0;
        if hi > C_LIMIT {
            return Err(Error::param("no C with M(C) > 1 in [-1e6, 1e6]; check the parameters"));
        }
    }
    let mut c = 0.5 * (lo + hi);
    let mut iterations = 0;
    let mut m = mass(c)?;
    while iterations < 300 {
        iterations += 1;
        let r = m.0 - 1.0;
        if r.abs() <= 1e-13 {
            break;
        }
        if r < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let newton = c - r / m.1;
        let next = if newton > lo && newton < hi && m.1 > 0.0 { newton } else { 0.5 * (lo + hi) };
        if next == c || hi - lo <= 4.0 * f64::EPSILON * c.abs().max(1.0) {
            break;
        }
        c = next;
        m = mass(c)?;
    }
    let mass_residual = (m.0 - 1.0).abs();
    if !(mass_residual <= 1e-10) {
        return Err(Error::NoConvergence { iterations, residual: mass_residual });
    }
    // U > 0 everywhere; cells whose value underflows are held at the smallest
    // normal so that KL against ρ_∞ stays finite.
    let values: Vec<f64> =
        pv.iter().map(|&v| Ok(stationary_profile(v, c, p)?.max(f64::MIN_POSITIVE))).collect::<Result<_>>()?;
    let rho = GridDensity::from_values(*grid, values)?.normalized()?;
    let k = p.eta * p.m / (p.m - 1.0);
    let mut identity_residual = 0.0f64;
    for (&r, &v) in rho.values().iter().zip(&pv) {
        if r > 1e-12 {
            let lhs = p.lambda * r.ln() + k * p.pow_m1(r) + v;
            identity_residual = identity_residual.max((lhs - (k + c)).abs());
        }
    }
    Ok(InvariantResult {
        c_star: c,
        rho_inf: rho,
        mass_residual,
        identity_residual,
        c_star_positive: c > 0.0,
        iterations,
        truncation_bound: truncation_bound(psi, grid, (k + c) / p.lambda, p.lambda),
    })
}

// ∫ outside the box of exp(shift - Ψ/λ), by midpoint quadrature on a box three times wider.
fn truncation_bound(psi: &Potential, grid: &Grid, shift: f64, lambda: f64) -> f64 {
    let d = grid.dim();
    let mut lo = [0.0; 2];
    let mut hi = [0.0; 2];
    let mut n = [1usize; 2];
    for a in 0..d {
        let w = grid.hi()[a] - grid.lo()[a];
        lo[a] = grid.lo()[a] - w;
        hi[a] = grid.hi()[a] + w;
        n[a] = 3 * grid.n()[a];
    }
    let inside = |y: &[f64]| (0..d).all(|a| y[a] >= grid.lo()[a] && y[a] <= grid.hi()[a]);
    let mut terms = Vec::new();
    let vol = grid.cell_volume();
    for i in 0..n[0] {
        for j in 0..n[1] {
            let y = [
                lo[0] + (i as f64 + 0.5) * (hi[0] - lo[0]) / n[0] as f64,
                lo[1] + (j as f64 + 0.5) * (hi[1] - lo[1]) / n[1] as f64,
            ];
            if !inside(&y[..d]) {
                terms.push((shift - psi.eval(&y[..d]) / lambda).exp() * vol);
            }
        }
    }
    ksum(terms)
}

/// `e^{-Ψ/λ} / Z` on the grid.
pub fn gibbs_density(psi: &Potential, lambda: f64, grid: &Grid) -> Result<GridDensity> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda must be positive"));
    }
    let pv = grid.sample_potential(psi)?;
    let min = pv.iter().copied().fold(f64::INFINITY, f64::min);
    GridDensity::from_values(*grid, pv.iter().map(|v| (-(v - min) / lambda).exp().max(f64::MIN_POSITIVE)).collect())?
        .normalized()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GibbsLimitReport {
    pub etas: Vec<f64>,
    pub kl: Vec<f64>,
}

impl GibbsLimitReport {
    pub fn decreasing(&self) -> bool {
        self.kl.windows(2).all(|w| w[1] < w[0])
    }
}

/// `KL(ρ_∞(η) ‖ Gibbs)` for each η, expected to decrease as η ↓ 0.
pub fn gibbs_limit_check(
    psi: &Potential,
    lambda: f64,
    m: f64,
    grid: &Grid,
    etas: &[f64],
) -> Result<GibbsLimitReport> {
    let gibbs = gibbs_density(psi, lambda, grid)?;
    let mut kl = Vec::with_capacity(etas.len());
    for &eta in etas {
        let p = ModelParams::new(lambda, eta, m)?;
        kl.push(find_cstar(psi, &p, grid)?.rho_inf.kl_divergence(&gibbs)?);
    }
    Ok(GibbsLimitReport { etas: etas.to_vec(), kl })
}
