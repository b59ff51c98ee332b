//! Minimizing movement: `ρⁿ ∈ argmin_ν W2²(ν, ρⁿ⁻¹)/(2τ) + J(ν)` over grid densities.
//!
//! 1D: Newton on the masses moved across cell edges. W2² and its first
//! variation (the Kantorovich potential) are exact for piecewise-constant
//! densities, and its Hessian in edge fluxes is tridiagonal, so each Newton
//! step costs a handful of O(n) transport sweeps. Cells whose marginal cost sits
//! above the multiplier get the extra curvature of a log-mass step, so Newton
//! never asks a thin cell for more than it holds; the update is flux-consistent
//! with a fraction-to-boundary Armijo search on Θ.
//! 2D: mirror descent on cell masses with the debiased Sinkhorn gradient.
//! In both cases the returned step never has Θ above Θ(μ) = J(μ).

use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Grid, GridDensity};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::{ksum, solve_tridiagonal};
use crate::params::ModelParams;
use crate::potential::{audit_assumptions, AuditConfig, Potential};
use crate::transport::{monotone_map_1d, ot_1d, sinkhorn_divergence_2d, SinkhornConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JkoConfig {
    pub tau: f64,
    pub inner_iters: usize,
    /// Final Sinkhorn ε (2D only); `None` uses dx².
    pub entropic_eps: Option<f64>,
    /// Relative Θ tolerance at which the inner solver stops.
    pub descent_tol: f64,
    /// `A = sup (ΔΨ)⁺`, used by theorem mode; audited over the grid box when absent.
    pub laplacian_bound: Option<f64>,
}

impl JkoConfig {
    pub fn new(tau: f64) -> Self {
        JkoConfig { tau, inner_iters: 200, entropic_eps: None, descent_tol: 1e-12, laplacian_bound: None }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau must be positive"));
        }
        if self.inner_iters == 0 || !(self.descent_tol > 0.0) {
            return Err(Error::param("inner_iters and descent_tol must be positive"));
        }
        Ok(())
    }

    /// Rejects τ ≥ 1/((m-1)A).
    pub fn check_theorem(&self, a: f64, p: &ModelParams) -> Result<()> {
        let limit = 1.0 / ((p.m - 1.0) * a);
        if a > 0.0 && !(self.tau < limit) {
            return Err(Error::Hypothesis(alloc::format!(
                "tau = {} must be below 1/((m-1)A) = {limit}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JkoStep {
    pub density: GridDensity,
    pub theta: f64,
    pub j: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the inner solution did not beat μ and μ was returned instead.
    pub fell_back: bool,
    /// Discrete velocity `(x - T(x))/τ` at cell centers, T the map to μ (1D only; NaN off support).
    pub velocity: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JkoTrajectory {
    pub tau: f64,
    pub densities: Vec<GridDensity>,
    pub thetas: Vec<f64>,
    pub j_values: Vec<f64>,
    /// Steps whose inner solver stopped before reaching the tolerance.
    pub warnings: Vec<usize>,
    pub iterations: Vec<usize>,
}

impl JkoTrajectory {
    /// Piecewise-constant interpolant `ρ̄_τ(t) = ρⁿ` for t ∈ ((n-1)τ, nτ].
    pub fn at_time(&self, t: f64) -> &GridDensity {
        let n = (t / self.tau - 1e-9).ceil().max(0.0) as usize;
        &self.densities[n.min(self.densities.len() - 1)]
    }

    /// `‖ρⁿ‖_m^m ≤ (1 - τ(m-1)A)^(-n) ‖ρ⁰‖_m^m` up to `1 + slack`.
    pub fn lm_bound_holds(&self, a: f64, m: f64, slack: f64) -> bool {
        let base = 1.0 - self.tau * (m - 1.0) * a;
        if !(base > 0.0) {
            return true;
        }
        let l0 = self.densities[0].lp_norm(m).unwrap_or(f64::NAN).powf(m);
        self.densities.iter().enumerate().all(|(n, d)| {
            d.lp_norm(m).unwrap_or(f64::NAN).powf(m) <= base.powf(-(n as f64)) * l0 * (1.0 + slack)
        })
    }
}

/// `Θ(ν) = W2²(ν, μ)/(2τ) + J(ν)`.
pub fn theta_objective(
    nu: &GridDensity,
    mu: &GridDensity,
    tau: f64,
    psi: &Potential,
    p: &ModelParams,
) -> Result<f64> {
    if nu.grid() != mu.grid() {
        return Err(Error::GridMismatch);
    }
    let w = nu.w2_distance(mu)?;
    Ok(w * w / (2.0 * tau) + nu.j_functional(psi, p)?)
}

struct Problem1d<'a> {
    mu: &'a [f64],
    psi: &'a [f64],
    p: ModelParams,
    tau: f64,
    lo: f64,
    dx: f64,
}

impl Problem1d<'_> {
    fn j(&self, nu: &[f64]) -> f64 {
        let p = &self.p;
        ksum(nu.iter().zip(self.psi).map(|(&v, &s)| s * v + p.energy_density(v))) * self.dx
    }

    fn theta(&self, nu: &[f64]) -> f64 {
        ot_1d(nu, self.mu, self.lo, self.dx, false).w2_sq / (2.0 * self.tau) + self.j(nu)
    }
}

fn step_1d(mu: &GridDensity, cfg: &JkoConfig, psi_cells: &[f64], p: &ModelParams) -> Result<JkoStep> {
    let g = mu.grid();
    let n = g.n()[0];
    let prob = Problem1d { mu: mu.values(), psi: psi_cells, p: *p, tau: cfg.tau, lo: g.lo()[0], dx: g.dx(0) };
    let dx = prob.dx;
    // Cells this far below the peak carry no resolvable mass and stay frozen.
    let floor = 1e-200 * prob.mu.iter().copied().fold(0.0, f64::max);
    let mut active = vec![false; n - 1];
    let mut nu = prob.mu.to_vec();
    let theta_mu = prob.theta(&nu);
    let mut theta = theta_mu;
    let mut trial = vec![0.0; n];
    let (mut step, mut gcell, mut damp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut sub, mut diag, mut sup, mut dir) = (vec![0.0; n - 1], vec![0.0; n - 1], vec![0.0; n - 1], vec![0.0; n - 1]);
    let mut grad = vec![0.0; n - 1];
    let (mut wgrad, mut pert) = (vec![0.0; n - 1], vec![0.0; n - 1]);
    let (mut hdiag, mut hup, mut hlo) = (vec![0.0; n - 1], vec![0.0; n - 1], vec![0.0; n - 1]);
    let mut converged = false;
    let mut iterations = 0;
    let inv2t = 1.0 / (2.0 * cfg.tau);
    while iterations < cfg.inner_iters {
        iterations += 1;
        for k in 0..n - 1 {
            active[k] = nu[k] > floor && nu[k + 1] > floor;
        }
        let ot = ot_1d(&nu, prob.mu, prob.lo, dx, true);
        for k in 0..n - 1 {
            wgrad[k] = if active[k] { (ot.potential_avg[k + 1] - ot.potential_avg[k]) * inv2t } else { 0.0 };
            grad[k] = if active[k] {
                wgrad[k] + psi_cells[k + 1] - psi_cells[k] + p.energy_derivative(nu[k + 1])
                    - p.energy_derivative(nu[k])
            } else {
                0.0
            };
        }
        // Curvature a Newton step in log-mass adds for cells whose marginal cost
        // exceeds the multiplier: it keeps a cell from being asked to shed more
        // than its mass, and vanishes at the minimizer.
        let mut wsum = 0.0;
        let mut msum = 0.0;
        for i in 0..n {
            if nu[i] > floor {
                gcell[i] = ot.potential_avg[i] * inv2t + psi_cells[i] + p.energy_derivative(nu[i]);
                wsum += nu[i] * gcell[i];
                msum += nu[i];
            }
        }
        let mult = wsum / msum;
        for i in 0..n {
            damp[i] = if nu[i] > floor { (gcell[i] - mult).max(0.0) / (nu[i] * dx) } else { 0.0 };
        }
        // The transport Hessian in edge fluxes is tridiagonal: F_k only moves the
        // quantiles inside cells k and k+1. Columns are differenced three at a time.
        for c in 0..3 {
            pert.iter_mut().for_each(|e| *e = 0.0);
            let mut any = false;
            for k in (c..n - 1).step_by(3) {
                if active[k] {
                    pert[k] = 1e-7 * nu[k].min(nu[k + 1]) * dx;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            for i in 0..n {
                let left = if i > 0 { pert[i - 1] } else { 0.0 };
                let right = if i + 1 < n { pert[i] } else { 0.0 };
                trial[i] = nu[i] + (left - right) / dx;
            }
            let otp = ot_1d(&trial, prob.mu, prob.lo, dx, true);
            let wg = |j: usize| (otp.potential_avg[j + 1] - otp.potential_avg[j]) * inv2t - wgrad[j];
            for k in (c..n - 1).step_by(3) {
                if !active[k] {
                    continue;
                }
                let e = pert[k];
                hdiag[k] = wg(k) / e;
                if k > 0 {
                    hup[k - 1] = wg(k - 1) / e;
                }
                if k + 2 < n {
                    hlo[k] = wg(k + 1) / e;
                }
            }
        }
        sub.iter_mut().chain(sup.iter_mut()).for_each(|v| *v = 0.0);
        for k in 0..n - 1 {
            if !active[k] {
                diag[k] = 1.0;
                continue;
            }
            let (a, b) = (nu[k], nu[k + 1]);
            diag[k] = hdiag[k] + (p.energy_second_derivative(a) + p.energy_second_derivative(b)) / dx + damp[k] + damp[k + 1];
            if k + 2 < n && active[k + 1] {
                let off = 0.5 * (hup[k] + hlo[k]) - p.energy_second_derivative(b) / dx - damp[k + 1];
                sup[k] = off;
                sub[k + 1] = off;
            }
        }
        dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
        let mut ok = diag.iter().all(|d| *d > 0.0) && solve_tridiagonal(&sub, &diag, &sup, &mut dir);
        ok = ok && ksum(dir.iter().zip(&grad).map(|(d, g)| d * g)) < 0.0;
        if !ok {
            // Linearized transport metric ∫ f²/ν, always positive definite.
            sub.iter_mut().chain(sup.iter_mut()).for_each(|v| *v = 0.0);
            for k in 0..n - 1 {
                if !active[k] {
                    diag[k] = 1.0;
                    continue;
                }
                let (a, b) = (nu[k], nu[k + 1]);
                diag[k] = inv2t * 2.0 * dx / 3.0 * (1.0 / a + 1.0 / b)
                    + (p.energy_second_derivative(a) + p.energy_second_derivative(b)) / dx
                    + damp[k]
                    + damp[k + 1];
                if k + 2 < n && active[k + 1] {
                    let off = inv2t * dx / (3.0 * b) - p.energy_second_derivative(b) / dx - damp[k + 1];
                    sup[k] = off;
                    sub[k + 1] = off;
                }
            }
            dir.iter_mut().zip(&grad).for_each(|(d, g)| *d = -g);
            if !solve_tridiagonal(&sub, &diag, &sup, &mut dir) {
                break;
            }
        }
        let decrement = -ksum(dir.iter().zip(&grad).map(|(d, g)| d * g));
        if !(decrement > 0.0) || 0.5 * decrement <= cfg.descent_tol * (1.0 + theta.abs()) {
            converged = decrement.is_finite();
            break;
        }
        let mut alpha_max = f64::INFINITY;
        for i in 0..n {
            let left = if i > 0 { dir[i - 1] } else { 0.0 };
            let right = if i + 1 < n { dir[i] } else { 0.0 };
            step[i] = (left - right) / dx;
            if step[i] < 0.0 && nu[i] > 0.0 {
                alpha_max = alpha_max.min(nu[i] / -step[i]);
            }
        }
        let mut alpha = (0.99 * alpha_max).min(1.0);
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = (nu[i] + alpha * step[i]).max(0.0);
            }
            let th = prob.theta(&trial);
            if th <= theta - 1e-4 * alpha * decrement {
                theta = th;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Θ cannot be lowered along the Newton direction at working precision.
            converged = 0.5 * decrement <= 1e3 * cfg.descent_tol * (1.0 + theta.abs());
            break;
        }
        nu.copy_from_slice(&trial);
    }
    if !theta.is_finite() {
        return Err(Error::NoConvergence { iterations, residual: theta });
    }
    let fell_back = !(theta <= theta_mu);
    let (density, theta) = if fell_back {
        (mu.clone(), theta_mu)
    } else {
        (GridDensity::from_values(*g, nu)?, theta)
    };
    let map = monotone_map_1d(density.values(), mu.values(), prob.lo, dx);
    let velocity = map.iter().enumerate().map(|(i, t)| (g.center(0, i) - t) / cfg.tau).collect();
    let j = prob.j(density.values());
    Ok(JkoStep { density, theta, j, iterations, converged, fell_back, velocity: Some(velocity) })
}

fn step_2d(mu: &GridDensity, cfg: &JkoConfig, psi_cells: &[f64], p: &ModelParams) -> Result<JkoStep> {
    let g = *mu.grid();
    let vol = g.cell_volume();
    let mut sk = SinkhornConfig::for_grid(&g);
    if let Some(e) = cfg.entropic_eps {
        sk.eps_end = e;
        sk.eps_start = sk.eps_start.max(e);
    }
    let j_of = |d: &GridDensity| d.j_functional_sampled(psi_cells, p);
    let eval = |nu: &GridDensity| -> Result<(f64, Vec<f64>)> {
        let (w, fgrad) = sinkhorn_divergence_2d(nu, mu, &sk)?;
        let th = w.divergence.max(0.0) / (2.0 * cfg.tau) + j_of(nu);
        let grad = nu
            .values()
            .iter()
            .zip(&fgrad)
            .zip(psi_cells)
            .map(|((&v, &f), &s)| if v > 0.0 { f / (2.0 * cfg.tau) + s + p.energy_derivative(v) } else { 0.0 })
            .collect();
        Ok((th, grad))
    };
    let theta_mu = j_of(mu);
    let mut nu = mu.clone();
    let (mut theta, mut grad) = eval(&nu)?;
    let mut step = 0.5 / p.lambda.max(1e-3);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.inner_iters {
        iterations += 1;
        let mut accepted = false;
        for _ in 0..30 {
            // Multiplicative update on cell masses, renormalized.
            let mean: f64 = ksum(nu.values().iter().zip(&grad).map(|(v, g)| v * g)) * vol;
            let vals: Vec<f64> = nu
                .values()
                .iter()
                .zip(&grad)
                .map(|(&v, &gr)| if v > 0.0 { v * (-step * (gr - mean)).exp() } else { 0.0 })
                .collect();
            let cand = GridDensity::from_values(g, vals)?.normalized()?;
            let (th, gr) = eval(&cand)?;
            if th < theta {
                let rel = (theta - th) / (1.0 + theta.abs());
                nu = cand;
                theta = th;
                grad = gr;
                accepted = true;
                step *= 1.5;
                if rel <= cfg.descent_tol {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !accepted || converged {
            converged = converged || !accepted;
            break;
        }
    }
    let fell_back = !(theta <= theta_mu);
    let (density, theta) = if fell_back { (mu.clone(), theta_mu) } else { (nu, theta) };
    let j = j_of(&density);
    Ok(JkoStep { density, theta, j, iterations, converged, fell_back, velocity: None })
}

/// One minimizing-movement step from `mu`.
pub fn jko_step(mu: &GridDensity, cfg: &JkoConfig, psi: &Potential, p: &ModelParams) -> Result<JkoStep> {
    cfg.validate()?;
    let psi_cells = mu.grid().sample_potential(psi)?;
    if mu.grid().dim() == 1 {
        step_1d(mu, cfg, &psi_cells, p)
    } else {
        step_2d(mu, cfg, &psi_cells, p)
    }
}

fn audited_a(psi: &Potential, grid: &Grid) -> Result<f64> {
    let r = audit_assumptions(psi, grid.lo(), grid.hi(), &AuditConfig::default())?;
    Ok(r.laplacian_plus_a)
}

/// Iterates [`jko_step`] `steps` times.
pub fn jko_run(
    rho0: GridDensity,
    steps: usize,
    cfg: &JkoConfig,
    psi: &Potential,
    p: &ModelParams,
) -> Result<JkoTrajectory> {
    cfg.validate()?;
    if steps == 0 {
        return Err(Error::param("jko_run needs at least one step"));
    }
    if p.theorem_mode {
        p.check_theorem_hypotheses()?;
        let a = match cfg.laplacian_bound {
            Some(a) => a,
            None => audited_a(psi, rho0.grid())?,
        };
        cfg.check_theorem(a, p)?;
    }
    let psi_cells = rho0.grid().sample_potential(psi)?;
    let j0 = rho0.j_functional_sampled(&psi_cells, p);
    let mut traj = JkoTrajectory {
        tau: cfg.tau,
        densities: vec![rho0],
        thetas: vec![j0],
        j_values: vec![j0],
        warnings: Vec::new(),
        iterations: vec![0],
    };
    for n in 1..=steps {
        let mu = traj.densities.last().expect("trajectory is never empty");
        let s = if mu.grid().dim() == 1 {
            step_1d(mu, cfg, &psi_cells, p)?
        } else {
            step_2d(mu, cfg, &psi_cells, p)?
        };
        if !s.theta.is_finite() {
            return Err(Error::NoConvergence { iterations: s.iterations, residual: s.theta });
        }
        if !s.converged {
            traj.warnings.push(n);
        }
        traj.thetas.push(s.theta);
        traj.j_values.push(s.j);
        traj.iterations.push(s.iterations);
        traj.densities.push(s.density);
    }
    Ok(traj)
}
