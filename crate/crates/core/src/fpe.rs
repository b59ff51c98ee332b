//! Explicit finite-volume solver for `∂t u = div(u∇Ψ + ∇(λu + ηu^m))` on a
//! box with no-flux walls.
//!
//! The default flux upwinds the mass on the sign of the discrete velocity
//! `v = -∇ξ`, `ξ = Ψ + F'(u)`, with minmod-limited edge values. It conserves
//! mass, keeps `u ≥ 0` under the step bound, dissipates the discrete J, and
//! holds the grid restriction of ρ_∞ fixed (ξ is constant there).

use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Grid, GridDensity};
use crate::diagnostics::{DiagnosticRow, DiagnosticsSeries};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::ksum;
use crate::params::ModelParams;
use crate::potential::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FluxScheme {
    /// Upwinding on the velocity of the chemical potential ξ = Ψ + F'(u).
    #[default]
    WellBalanced,
    /// Upwinded drift `-∇Ψ` plus centered differences of `L_F(u) = λu + ηu^m`.
    UpwindCentral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpeConfig {
    pub scheme: FluxScheme,
    /// Minmod edge reconstruction (well-balanced scheme only).
    pub second_order: bool,
    pub safety: f64,
}

impl Default for FpeConfig {
    fn default() -> Self {
        FpeConfig { scheme: FluxScheme::WellBalanced, second_order: true, safety: 0.4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpeState {
    pub t: f64,
    pub rho: GridDensity,
    pub step_count: usize,
    pub dt_last: f64,
    /// Mass removed by clipping negative roundoff, summed over all steps.
    pub clipped_mass: f64,
}

impl FpeState {
    pub fn new(rho: GridDensity) -> Self {
        FpeState { t: 0.0, rho, step_count: 0, dt_last: 0.0, clipped_mass: 0.0 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    len: usize,
    stride: usize,
    dx: f64,
}

/// Solver bound to a grid, potential and parameters. Owns scratch buffers.
#[derive(Debug, Clone)]
pub struct FpeSolver {
    grid: Grid,
    params: ModelParams,
    psi: Potential,
    cfg: FpeConfig,
    psi_cells: Vec<f64>,
    axes: Vec<(Axis, Vec<usize>)>,
    // Analytic ∂Ψ/∂x_a at interior faces, per axis, indexed line-major.
    face_grad: Vec<Vec<f64>>,
    max_grad: f64,
    reference: Option<GridDensity>,
    xi: Vec<f64>,
    rate: Vec<f64>,
    slope: Vec<f64>,
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a > 0.0 {
        a.min(b)
    } else {
        a.max(b)
    }
}

impl FpeSolver {
    pub fn new(grid: Grid, psi: Potential, params: ModelParams, cfg: FpeConfig) -> Result<Self> {
        if params.theorem_mode {
            params.check_theorem_hypotheses()?;
        }
        if !(cfg.safety > 0.0 && cfg.safety <= 1.0) {
            return Err(Error::param("safety must lie in (0, 1]"));
        }
        let psi_cells = grid.sample_potential(&psi)?;
        let d = grid.dim();
        let mut axes = Vec::new();
        let mut face_grad = Vec::new();
        let mut max_grad = 0.0f64;
        for a in 0..d {
            let (stride, starts): (usize, Vec<usize>) = if d == 1 {
                (1, vec![0])
            } else if a == 0 {
                (grid.n()[1], (0..grid.n()[1]).collect())
            } else {
                (1, (0..grid.n()[0]).map(|i| i * grid.n()[1]).collect())
            };
            let ax = Axis { len: grid.n()[a], stride, dx: grid.dx(a) };
            let mut fg = Vec::with_capacity(starts.len() * (ax.len - 1));
            let mut g = [0.0; 2];
            for &s in &starts {
                for k in 0..ax.len - 1 {
                    let mut p = grid.point(s + k * stride);
                    p[a] += 0.5 * ax.dx;
                    psi.grad(&p[..d], &mut g[..d]);
                    fg.push(g[a]);
                    max_grad = max_grad.max(g[a].abs());
                }
            }
            axes.push((ax, starts));
            face_grad.push(fg);
        }
        let len = grid.len();
        Ok(FpeSolver {
            grid,
            params,
            psi,
            cfg,
            psi_cells,
            axes,
            face_grad,
            max_grad,
            reference: None,
            xi: vec![0.0; len],
            rate: vec![0.0; len],
            slope: vec![0.0; len],
        })
    }

    /// Density against which diagnostics report KL (normally ρ_∞).
    pub fn with_reference(mut self, reference: GridDensity) -> Result<Self> {
        if reference.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        self.reference = Some(reference);
        Ok(self)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn psi_cells(&self) -> &[f64] {
        &self.psi_cells
    }

    fn min_dx(&self) -> f64 {
        self.axes.iter().map(|(a, _)| a.dx).fold(f64::INFINITY, f64::min)
    }

    /// `safety · dx²/(2d(λ + ηm max u^(m-1)))`, and `safety · dx/max|∇Ψ|` for the
    /// upwind-central flux.
    fn base_bound(&self, u: &[f64]) -> f64 {
        let p = &self.params;
        let umax = u.iter().copied().fold(0.0, f64::max);
        let dx = self.min_dx();
        let d = self.grid.dim() as f64;
        let diff = p.lambda + p.eta * p.m * p.pow_m1(umax);
        let dt_diff = if diff > 0.0 { dx * dx / (2.0 * d * diff) } else { f64::INFINITY };
        // The well-balanced flux carries its own advective bound.
        let dt_adv = match self.cfg.scheme {
            FluxScheme::UpwindCentral => dx / (self.max_grad + 1e-12),
            FluxScheme::WellBalanced => f64::INFINITY,
        };
        self.cfg.safety * dt_diff.min(dt_adv)
    }

    // Fills `rate` with du/dt and returns the positivity-preserving step bound.
    fn compute_rate(&mut self, u: &[f64]) -> f64 {
        self.rate.iter_mut().for_each(|r| *r = 0.0);
        match self.cfg.scheme {
            FluxScheme::WellBalanced => self.rate_well_balanced(u),
            FluxScheme::UpwindCentral => {
                self.rate_upwind_central(u);
                f64::INFINITY
            }
        }
    }

    fn rate_well_balanced(&mut self, u: &[f64]) -> f64 {
        let p = self.params;
        let umax = u.iter().copied().fold(0.0, f64::max);
        let floor = (1e-30 * umax).max(f64::MIN_POSITIVE);
        let k = if p.m > 1.0 { p.eta * p.m / (p.m - 1.0) } else { 0.0 };
        for ((x, &v), &ps) in self.xi.iter_mut().zip(u).zip(&self.psi_cells) {
            let s = v.max(floor);
            *x = ps + p.lambda * s.ln() + k * p.pow_m1(s);
        }
        let mut inv_dt = 0.0;
        for (ax, starts) in &self.axes {
            let (len, st, dx) = (ax.len, ax.stride, ax.dx);
            let mut amax = 0.0f64;
            for &s0 in starts {
                if self.cfg.second_order {
                    self.slope[s0] = 0.0;
                    self.slope[s0 + (len - 1) * st] = 0.0;
                    for k in 1..len - 1 {
                        let i = s0 + k * st;
                        self.slope[i] = minmod(u[i + st] - u[i], u[i] - u[i - st]);
                    }
                }
                for k in 0..len - 1 {
                    let i = s0 + k * st;
                    let j = i + st;
                    let v = -(self.xi[j] - self.xi[i]) / dx;
                    // Only faces draining a cell above the floor limit the step;
                    // sub-floor overshoot is removed by the mass-preserving clip.
                    if (if v > 0.0 { u[i] } else { u[j] }) > floor {
                        amax = amax.max(v.abs());
                    }
                    let flux = if v > 0.0 {
                        let ue = if self.cfg.second_order { u[i] + 0.5 * self.slope[i] } else { u[i] };
                        v * ue
                    } else {
                        let uw = if self.cfg.second_order { u[j] - 0.5 * self.slope[j] } else { u[j] };
                        v * uw
                    };
                    self.rate[i] -= flux / dx;
                    self.rate[j] += flux / dx;
                }
            }
            // Outflow per axis is at most 2·amax·u/dx (edge values ≤ 2u).
            let factor = if self.cfg.second_order { 2.0 } else { 1.0 };
            inv_dt += factor * amax / dx;
        }
        if inv_dt > 0.0 {
            0.9 / inv_dt
        } else {
            f64::INFINITY
        }
    }

    fn rate_upwind_central(&mut self, u: &[f64]) {
        let p = self.params;
        for (a, (ax, starts)) in self.axes.iter().enumerate() {
            let (len, st, dx) = (ax.len, ax.stride, ax.dx);
            for (l, &s0) in starts.iter().enumerate() {
                for k in 0..len - 1 {
                    let i = s0 + k * st;
                    let j = i + st;
                    let vel = -self.face_grad[a][l * (len - 1) + k];
                    let adv = if vel > 0.0 { vel * u[i] } else { vel * u[j] };
                    let flux = adv - (p.l_f(u[j]) - p.l_f(u[i])) / dx;
                    self.rate[i] -= flux / dx;
                    self.rate[j] += flux / dx;
                }
            }
        }
    }

    /// Largest stable step for `state`.
    pub fn cfl_dt(&mut self, state: &FpeState) -> f64 {
        let pos = self.compute_rate(state.rho.values());
        self.base_bound(state.rho.values()).min(pos)
    }

    /// One explicit step of size `dt`; fails if `dt` exceeds [`Self::cfl_dt`].
    pub fn step(&mut self, state: &FpeState, dt: f64) -> Result<FpeState> {
        let mut next = state.clone();
        self.advance(&mut next, dt, true)?;
        Ok(next)
    }

    // Advances by `dt` (strict) or by min(dt, bound) (adaptive); returns the step taken.
    fn advance(&mut self, state: &mut FpeState, dt: f64, strict: bool) -> Result<f64> {
        let pos = self.compute_rate(state.rho.values());
        let bound = self.base_bound(state.rho.values()).min(pos);
        let dt = if strict {
            if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
                return Err(Error::StepTooLarge { dt, bound });
            }
            dt
        } else {
            dt.min(bound)
        };
        let vol = self.grid.cell_volume();
        let u = state.rho.values_mut();
        let mut neg = 0.0;
        for (i, (x, r)) in u.iter_mut().zip(&self.rate).enumerate() {
            *x += dt * r;
            if !x.is_finite() {
                return Err(Error::BlowUp { step: state.step_count + 1, index: i });
            }
            if *x < 0.0 {
                neg -= *x;
            }
        }
        if neg > 0.0 {
            let before = ksum(u.iter().copied());
            u.iter_mut().for_each(|x| *x = x.max(0.0));
            let after = ksum(u.iter().copied());
            let s = before / after;
            u.iter_mut().for_each(|x| *x *= s);
            state.clipped_mass += neg * vol;
        }
        state.t += dt;
        state.step_count += 1;
        state.dt_last = dt;
        Ok(dt)
    }

    /// Advances adaptively until `state.t == t_end` (the last step is shortened).
    pub fn run_until(&mut self, state: &mut FpeState, t_end: f64) -> Result<()> {
        while state.t < t_end {
            let remaining = t_end - state.t;
            self.advance(state, remaining, false)?;
            if t_end - state.t <= 1e-13 * t_end.max(1.0) {
                state.t = t_end;
            }
        }
        Ok(())
    }

    /// Runs to `t_end`, sampling diagnostics every `sample_every` steps and at the end.
    pub fn run(&mut self, rho0: GridDensity, t_end: f64, sample_every: usize) -> Result<(FpeState, DiagnosticsSeries)> {
        if rho0.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let every = sample_every.max(1);
        let mut state = FpeState::new(rho0);
        let mut rows = vec![self.diagnostics(&state)];
        while state.t < t_end {
            let remaining = t_end - state.t;
            self.advance(&mut state, remaining, false)?;
            if t_end - state.t <= 1e-13 * t_end.max(1.0) {
                state.t = t_end;
            }
            if state.step_count % every == 0 || state.t >= t_end {
                rows.push(self.diagnostics(&state));
            }
        }
        Ok((state, rows))
    }

    pub fn diagnostics(&self, state: &FpeState) -> DiagnosticRow {
        let rho = &state.rho;
        let p = &self.params;
        DiagnosticRow {
            t: state.t,
            j: rho.j_functional_sampled(&self.psi_cells, p),
            lm_norm: rho.lp_norm(p.m).unwrap_or(f64::NAN),
            kl: self.reference.as_ref().and_then(|r| rho.kl_divergence(r).ok()),
            w2_ref: None,
            dissipation: Some(self.dissipation(rho)),
            mass: rho.mass(),
            min_value: rho.min_value(),
            theta: None,
        }
    }

    /// `∫|v|²ρ` with `v = -(∇Ψ + λ∇ρ/ρ + η∇ρ^m/ρ)` by centered differences
    /// (one-sided at walls) on cells with ρ > 1e-12·max ρ.
    pub fn dissipation(&self, rho: &GridDensity) -> f64 {
        let u = rho.values();
        let p = &self.params;
        let floor = 1e-12 * rho.max_value();
        let d = self.grid.dim();
        let mut g = [0.0; 2];
        let mut terms = Vec::with_capacity(u.len());
        for idx in 0..u.len() {
            let r = u[idx];
            if r <= floor {
                continue;
            }
            let pt = self.grid.point(idx);
            self.psi.grad(&pt[..d], &mut g[..d]);
            let mut v2 = 0.0;
            for (a, (ax, _)) in self.axes.iter().enumerate() {
                let k = if d == 1 { idx } else if a == 0 { idx / self.grid.n()[1] } else { idx % self.grid.n()[1] };
                let (lo, hi, h) = if k == 0 {
                    (idx, idx + ax.stride, ax.dx)
                } else if k == ax.len - 1 {
                    (idx - ax.stride, idx, ax.dx)
                } else {
                    (idx - ax.stride, idx + ax.stride, 2.0 * ax.dx)
                };
                let grad_rho = (u[hi] - u[lo]) / h;
                let grad_pm = (p.pow_m(u[hi]) - p.pow_m(u[lo])) / h;
                let v = g[a] + (p.lambda * grad_rho + p.eta * grad_pm) / r;
                v2 += v * v;
            }
            terms.push(v2 * r);
        }
        ksum(terms) * self.grid.cell_volume()
    }
}

/// One step with a freshly built solver.
pub fn step(state: &FpeState, psi: &Potential, params: &ModelParams, dt: f64) -> Result<FpeState> {
    FpeSolver::new(*state.rho.grid(), psi.clone(), *params, FpeConfig::default())?.step(state, dt)
}

pub fn cfl_dt(state: &FpeState, psi: &Potential, params: &ModelParams) -> Result<f64> {
    Ok(FpeSolver::new(*state.rho.grid(), psi.clone(), *params, FpeConfig::default())?.cfl_dt(state))
}

pub fn run(
    rho0: GridDensity,
    psi: &Potential,
    params: &ModelParams,
    t_end: f64,
    sample_every: usize,
) -> Result<(FpeState, DiagnosticsSeries)> {
    FpeSolver::new(*rho0.grid(), psi.clone(), *params, FpeConfig::default())?.run(rho0, t_end, sample_every)
}

/// Runs two initial densities with a shared step size; returns `(t, W2)` every `sample_every` steps.
pub fn stability_pair(
    a: GridDensity,
    b: GridDensity,
    psi: &Potential,
    params: &ModelParams,
    t_end: f64,
    sample_every: usize,
) -> Result<Vec<(f64, f64)>> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    let mut sa = FpeSolver::new(*a.grid(), psi.clone(), *params, FpeConfig::default())?;
    let mut sb = sa.clone();
    let every = sample_every.max(1);
    let mut xa = FpeState::new(a);
    let mut xb = FpeState::new(b);
    let mut out = vec![(0.0, xa.rho.w2_distance(&xb.rho)?)];
    while xa.t < t_end {
        let dt = sa.cfl_dt(&xa).min(sb.cfl_dt(&xb)).min(t_end - xa.t);
        xa = sa.step(&xa, dt)?;
        xb = sb.step(&xb, dt)?;
        if t_end - xa.t <= 1e-13 * t_end.max(1.0) {
            xa.t = t_end;
        }
        if xa.step_count % every == 0 || xa.t >= t_end {
            out.push((xa.t, xa.rho.w2_distance(&xb.rho)?));
        }
    }
    Ok(out)
}
