//! Quadratic-cost optimal transport between grid densities: exact in 1D by
//! quantile coupling, debiased entropic (Sinkhorn) in 2D.

use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Grid, GridDensity};
use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::ksum;

/// Double-double accumulator; tail cells carry masses far below one ulp of the total.
#[derive(Debug, Clone, Copy)]
struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

    fn add(self, x: f64) -> Dd {
        let s = self.hi + x;
        let bb = s - self.hi;
        let e = (self.hi - (s - bb)) + (x - bb);
        let lo = self.lo + e;
        let hi = s + lo;
        Dd { hi, lo: lo - (hi - s) }
    }

    fn diff(self, o: Dd) -> f64 {
        (self.hi - o.hi) + (self.lo - o.lo)
    }
}

/// Cumulative sums of `nu` (rescaled to the total of `mu`) and `mu` at the cell
/// edges, kept from both ends so that gaps in either tail are resolved relative
/// to the tail mass rather than to the total.
struct Cums {
    nus: Vec<f64>,
    fwd: [Vec<Dd>; 2],
    bwd: [Vec<Dd>; 2],
    half: f64,
    total: f64,
}

/// An edge of `nu` (0) or `mu` (1).
#[derive(Clone, Copy)]
struct Edge(usize, usize);

impl Cums {
    fn new(nu: &[f64], mu: &[f64]) -> Self {
        let sm = ksum(mu.iter().copied());
        let r = sm / ksum(nu.iter().copied());
        let nus: Vec<f64> = nu.iter().map(|v| v * r).collect();
        let fwd = |v: &[f64]| {
            let mut c = Vec::with_capacity(v.len() + 1);
            let mut s = Dd::ZERO;
            c.push(s);
            for &x in v {
                s = s.add(x);
                c.push(s);
            }
            c
        };
        let bwd = |v: &[f64]| {
            let mut c = vec![Dd::ZERO; v.len() + 1];
            let mut s = Dd::ZERO;
            for (i, &x) in v.iter().enumerate().rev() {
                s = s.add(x);
                c[i] = s;
            }
            c
        };
        Cums { fwd: [fwd(&nus), fwd(mu)], bwd: [bwd(&nus), bwd(mu)], nus, half: 0.5 * sm, total: sm }
    }

    /// Cumulative mass at `a` minus that at `b`.
    fn gap(&self, a: Edge, b: Edge) -> f64 {
        let (fa, fb) = (self.fwd[a.0][a.1], self.fwd[b.0][b.1]);
        if fa.hi.max(fb.hi) <= self.half {
            fa.diff(fb)
        } else {
            self.bwd[b.0][b.1].diff(self.bwd[a.0][a.1])
        }
    }
}

/// Square root after clipping roundoff negatives; NaN passes through.
fn sqrt_nonneg(v: f64) -> f64 {
    if v < 0.0 { 0.0 } else { v.sqrt() }
}

/// Exact W2 between piecewise-constant 1D densities on the same grid.
pub fn w2_1d(nu: &[f64], mu: &[f64], lo: f64, dx: f64) -> f64 {
    sqrt_nonneg(ot_1d(nu, mu, lo, dx, false).w2_sq)
}

/// Exact W2 between the empirical measure of `sorted` (ascending samples, equal
/// weights) and a piecewise-constant 1D density. Samples may lie off the grid.
pub fn w2_empirical_1d(sorted: &[f64], rho: &[f64], lo: f64, dx: f64) -> f64 {
    let total = ksum(rho.iter().copied());
    // Support is read off the normalized masses: subnormal values can vanish here.
    let masses: Vec<f64> = rho.iter().map(|v| v / total).collect();
    let (Some(first), Some(last)) = (masses.iter().position(|&v| v > 0.0), masses.iter().rposition(|&v| v > 0.0)) else {
        return f64::NAN;
    };
    if sorted.is_empty() {
        return f64::NAN;
    }
    let w = 1.0 / sorted.len() as f64;
    let mut terms = Vec::with_capacity(sorted.len() + rho.len());
    let (mut k, mut ck, mut s) = (first, 0.0, 0.0);
    for (i, &y) in sorted.iter().enumerate() {
        let s_end = if i + 1 == sorted.len() { 1.0 } else { (i + 1) as f64 * w };
        loop {
            while k < last && (masses[k] == 0.0 || ck + masses[k] <= s) {
                ck += masses[k];
                k += 1;
            }
            let cell_end = if k == last { f64::INFINITY } else { ck + masses[k] };
            let b = s_end.min(cell_end);
            let q = |t: f64| lo + k as f64 * dx + (dx * (t - ck) / masses[k]).clamp(0.0, dx);
            let (da, db) = (y - q(s), y - q(b));
            terms.push((b - s) * (da * da + da * db + db * db) / 3.0);
            s = b;
            if b >= s_end {
                break;
            }
        }
    }
    sqrt_nonneg(ksum(terms))
}

/// Transport terms between `nu` (first marginal) and `mu`.
#[derive(Debug, Clone)]
pub struct Ot1d {
    pub w2_sq: f64,
    /// Cell averages of the Kantorovich potential φ of `nu`, with
    /// φ' = 2(x - T(x)), T the monotone map pushing `nu` to `mu`, φ(lo) = 0.
    /// Empty unless requested.
    pub potential_avg: Vec<f64>,
}

/// Sweeps the cells of `nu`, splitting at the cumulative-mass knots of `mu`.
/// Both quantile functions are affine on every piece, so each piece is integrated exactly.
pub fn ot_1d(nu: &[f64], mu: &[f64], lo: f64, dx: f64, with_potential: bool) -> Ot1d {
    let n = nu.len();
    debug_assert_eq!(n, mu.len());
    let c = Cums::new(nu, mu);
    let nus = &c.nus;
    let inv_mass = 1.0 / (c.total * dx);
    let mut pot = if with_potential { vec![0.0; n] } else { Vec::new() };
    let mut w2 = 0.0;
    let mut phi = 0.0;
    // The cursor stays on the support of μ.
    let kfirst = mu.iter().position(|&v| v > 0.0).unwrap_or(0);
    let klast = mu.iter().rposition(|&v| v > 0.0).unwrap_or(n - 1);
    let mut k = kfirst;
    let qmu = |k: usize, s: Edge| {
        let off = if mu[k] > 0.0 { (dx * c.gap(s, Edge(1, k)) / mu[k]).clamp(0.0, dx) } else { dx };
        lo + k as f64 * dx + off
    };
    for i in 0..n {
        let xi = lo + i as f64 * dx;
        let mut integral = 0.0;
        if !(nus[i] > 0.0) {
            while k < klast && c.gap(Edge(1, k + 1), Edge(0, i)) <= 0.0 {
                k += 1;
            }
            let t = qmu(k, Edge(0, i));
            let (da, db) = (xi - t, xi + dx - t);
            if with_potential {
                integral = phi * dx + 2.0 * dx * dx * (da / 3.0 + db / 6.0);
                pot[i] = integral / dx;
            }
            phi += dx * (da + db);
            continue;
        }
        let dens = nus[i] * inv_mass;
        let mut s = Edge(0, i);
        let mut x = xi;
        loop {
            while k < klast && c.gap(Edge(1, k + 1), s) <= 0.0 {
                k += 1;
            }
            let (s_next, x_next, last) = if k == klast || c.gap(Edge(1, k + 1), Edge(0, i + 1)) >= 0.0 {
                (Edge(0, i + 1), xi + dx, true)
            } else {
                let into = dx * c.gap(Edge(1, k + 1), Edge(0, i)) / nus[i];
                (Edge(1, k + 1), (xi + into).min(xi + dx), false)
            };
            let ta = qmu(k, s);
            let tb = if last { qmu(k, s_next) } else { lo + (k + 1) as f64 * dx };
            let (da, db) = (x - ta, x_next - tb);
            let len = x_next - x;
            w2 += dens * len * (da * da + da * db + db * db) / 3.0;
            if with_potential {
                integral += phi * len + 2.0 * len * len * (da / 3.0 + db / 6.0);
            }
            phi += len * (da + db);
            if last {
                break;
            }
            s = s_next;
            x = x_next;
            k += 1;
        }
        if with_potential {
            pot[i] = integral / dx;
        }
    }
    Ot1d { w2_sq: w2, potential_avg: pot }
}

/// Monotone map T(x) pushing `nu` to `mu`, evaluated at the cell centers of `nu`
/// (NaN where `nu` vanishes).
pub fn monotone_map_1d(nu: &[f64], mu: &[f64], lo: f64, dx: f64) -> Vec<f64> {
    let n = nu.len();
    let c = Cums::new(nu, mu);
    let klast = mu.iter().rposition(|&v| v > 0.0).unwrap_or(n - 1);
    let mut k = mu.iter().position(|&v| v > 0.0).unwrap_or(0);
    (0..n)
        .map(|i| {
            let h = 0.5 * c.nus[i];
            if !(h > 0.0) {
                return f64::NAN;
            }
            while k < klast && c.gap(Edge(1, k + 1), Edge(0, i)) - h <= 0.0 {
                k += 1;
            }
            lo + k as f64 * dx + (dx * (c.gap(Edge(0, i), Edge(1, k)) + h) / mu[k]).clamp(0.0, dx)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub eps_start: f64,
    pub eps_end: f64,
    pub max_iter: usize,
    /// L1 marginal violation accepted at the final ε.
    pub tol: f64,
}

impl SinkhornConfig {
    /// ε annealed from 10·dx² to dx², dx the coarsest spacing.
    pub fn for_grid(g: &Grid) -> Self {
        let dx = (0..g.dim()).map(|a| g.dx(a)).fold(0.0, f64::max);
        SinkhornConfig { eps_start: 10.0 * dx * dx, eps_end: dx * dx, max_iter: 5000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornW2 {
    pub distance: f64,
    /// Debiased divergence S_ε(a, b); `distance = sqrt(max(S_ε, 0))`.
    pub divergence: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub marginal_violation: f64,
}

/// Log-domain c-transforms for the squared distance on a 2D product grid.
struct Softmin {
    n: [usize; 2],
    // -(x_i - x_j)^2 per axis, unscaled.
    neg_c: [Vec<f64>; 2],
    tmp: Vec<f64>,
    row: Vec<f64>,
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl Softmin {
    fn new(g: &Grid) -> Self {
        let n = [g.n()[0], g.n()[1]];
        let axis = |a: usize| {
            let mut c = vec![0.0; n[a] * n[a]];
            for i in 0..n[a] {
                for j in 0..n[a] {
                    let d = (i as f64 - j as f64) * g.dx(a);
                    c[i * n[a] + j] = -d * d;
                }
            }
            c
        };
        let mx = n[0].max(n[1]);
        Softmin { n, neg_c: [axis(0), axis(1)], tmp: vec![0.0; n[0] * n[1]], row: vec![0.0; mx] }
    }

    /// out_i = -ε LSE_j(h_j - |x_i - x_j|²/ε).
    fn apply(&mut self, eps: f64, h: &[f64], out: &mut [f64]) {
        let [n0, n1] = self.n;
        let inv = 1.0 / eps;
        for j0 in 0..n0 {
            for i1 in 0..n1 {
                for j1 in 0..n1 {
                    self.row[j1] = h[j0 * n1 + j1] + self.neg_c[1][i1 * n1 + j1] * inv;
                }
                self.tmp[j0 * n1 + i1] = lse(&self.row[..n1]);
            }
        }
        for i0 in 0..n0 {
            for i1 in 0..n1 {
                for j0 in 0..n0 {
                    self.row[j0] = self.tmp[j0 * n1 + i1] + self.neg_c[0][i0 * n0 + j0] * inv;
                }
                out[i0 * n1 + i1] = -eps * lse(&self.row[..n0]);
            }
        }
    }
}

fn log_weights(a: &[f64]) -> Vec<f64> {
    a.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect()
}

fn violation(a: &[f64], f: &[f64], f_new: &[f64], eps: f64) -> f64 {
    a.iter()
        .zip(f.iter().zip(f_new))
        .map(|(&ai, (&x, &y))| if ai > 0.0 { ai * ((x - y) / eps).exp_m1().abs() } else { 0.0 })
        .sum()
}

/// Entropic OT cost and dual potentials; `b = None` solves the symmetric problem for `a`.
struct DualSolution {
    cost: f64,
    f: Vec<f64>,
    iterations: usize,
    violation: f64,
}

fn solve(sm: &mut Softmin, a: &[f64], b: Option<&[f64]>, cfg: &SinkhornConfig) -> Result<DualSolution> {
    let la = log_weights(a);
    let lb = b.map(log_weights);
    let len = a.len();
    let mut f = vec![0.0; len];
    let mut g = vec![0.0; len];
    let mut h = vec![0.0; len];
    let mut f_new = vec![0.0; len];
    let mut iterations = 0;
    let mut eps = cfg.eps_start.max(cfg.eps_end);
    let mut viol;
    loop {
        let final_level = eps <= cfg.eps_end * (1.0 + 1e-12);
        let tol = if final_level { cfg.tol } else { cfg.tol.max(1e-3) };
        viol = f64::INFINITY;
        for _ in 0..cfg.max_iter {
            iterations += 1;
            match &lb {
                Some(lb) => {
                    for j in 0..len {
                        h[j] = g[j] / eps + lb[j];
                    }
                    sm.apply(eps, &h, &mut f_new);
                    viol = violation(a, &f, &f_new, eps);
                    f.copy_from_slice(&f_new);
                    for i in 0..len {
                        h[i] = f[i] / eps + la[i];
                    }
                    sm.apply(eps, &h, &mut g);
                }
                None => {
                    for i in 0..len {
                        h[i] = f[i] / eps + la[i];
                    }
                    sm.apply(eps, &h, &mut f_new);
                    viol = violation(a, &f, &f_new, eps);
                    for i in 0..len {
                        f[i] = 0.5 * (f[i] + f_new[i]);
                    }
                }
            }
            if viol <= tol {
                break;
            }
        }
        if final_level {
            break;
        }
        eps = (eps * 0.5).max(cfg.eps_end);
    }
    if !(viol <= cfg.tol) {
        return Err(Error::NoConvergence { iterations, residual: viol });
    }
    let dot = |w: &[f64], p: &[f64]| -> f64 {
        w.iter().zip(p).filter(|(x, _)| **x > 0.0).map(|(x, y)| x * y).sum()
    };
    let cost = match b {
        Some(b) => dot(a, &f) + dot(b, &g),
        None => 2.0 * dot(a, &f),
    };
    Ok(DualSolution { cost, f, iterations, violation: viol })
}

fn masses(d: &GridDensity) -> Vec<f64> {
    let s: f64 = d.values().iter().sum();
    d.values().iter().map(|v| v / s).collect()
}

/// Debiased Sinkhorn divergence between 2D grid densities together with its
/// first variation in `a` (per cell, defined up to a constant).
pub fn sinkhorn_divergence_2d(
    a: &GridDensity,
    b: &GridDensity,
    cfg: &SinkhornConfig,
) -> Result<(SinkhornW2, Vec<f64>)> {
    if a.grid() != b.grid() {
        return Err(Error::GridMismatch);
    }
    if a.grid().dim() != 2 {
        return Err(Error::param("sinkhorn_divergence_2d needs a 2D grid"));
    }
    let (ma, mb) = (masses(a), masses(b));
    let mut sm = Softmin::new(a.grid());
    let ab = solve(&mut sm, &ma, Some(&mb), cfg)?;
    let aa = solve(&mut sm, &ma, None, cfg)?;
    let bb = solve(&mut sm, &mb, None, cfg)?;
    let s = ab.cost - 0.5 * (aa.cost + bb.cost);
    let grad = ab.f.iter().zip(&aa.f).map(|(x, y)| x - y).collect();
    Ok((
        SinkhornW2 {
            distance: sqrt_nonneg(s),
            divergence: s,
            epsilon: cfg.eps_end,
            iterations: ab.iterations + aa.iterations + bb.iterations,
            marginal_violation: ab.violation.max(aa.violation).max(bb.violation),
        },
        grad,
    ))
}

pub fn sinkhorn_w2(a: &GridDensity, b: &GridDensity, cfg: &SinkhornConfig) -> Result<SinkhornW2> {
    Ok(sinkhorn_divergence_2d(a, b, cfg)?.0)
}
