//! Interacting particles for `dY = -∇Ψ dt + sqrt(2λ + 2η ρ̂(Y)^(m-1)) dB`,
//! Euler–Maruyama in time, with a Gaussian KDE standing in for the law of `Y`.
//!
//! Randomness is counter-based: the normals of particle `i` at step `k` come from
//! ChaCha8 stream `i` at a word offset fixed by `k`, so results do not depend on
//! the order (or thread) in which particles are updated.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::density::{Grid, GridDensity};
use crate::diagnostics::{DiagnosticRow, DiagnosticsSeries};
use crate::error::{Error, Result};
use crate::fpe::{FpeSolver, FpeState};
#[allow(unused_imports)]
use crate::math::Float;
use crate::math::ksum;
use crate::params::ModelParams;
use crate::potential::Potential;
use crate::transport;

pub const MIN_PARTICLES: usize = 100;

/// Words reserved per particle per step; a step draws at most a few dozen.
const WORDS_PER_STEP: u128 = 1 << 16;
/// Stream used for initial sampling, disjoint from every particle stream.
const INIT_STREAM: u64 = u64::MAX;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    /// Row-major `n × dim`.
    positions: Vec<f64>,
    pub seed: u64,
    pub time: f64,
    /// Steps taken; selects the random stream offset.
    pub step: u64,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dim == 1 || dim == 2) || positions.len() % dim != 0 {
            return Err(Error::param("positions must be n × dim with dim 1 or 2"));
        }
        if positions.len() / dim < MIN_PARTICLES {
            return Err(Error::param(alloc::format!("need at least {MIN_PARTICLES} particles")));
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: 0, index: i / dim });
        }
        Ok(ParticleEnsemble { dim, positions, seed, time: 0.0, step: 0 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    /// Per-axis sample mean.
    pub fn mean(&self) -> [f64; 2] {
        let mut m = [0.0; 2];
        let n = self.len() as f64;
        for (a, ma) in m.iter_mut().enumerate().take(self.dim) {
            *ma = ksum(self.axis(a)) / n;
        }
        m
    }

    /// Per-axis sample standard deviation (n - 1 normalization).
    pub fn std(&self) -> [f64; 2] {
        let mean = self.mean();
        let mut s = [0.0; 2];
        let n = self.len() as f64;
        for (a, sa) in s.iter_mut().enumerate().take(self.dim) {
            *sa = (ksum(self.axis(a).map(|x| (x - mean[a]) * (x - mean[a]))) / (n - 1.0)).sqrt();
        }
        s
    }

    fn axis(&self, a: usize) -> impl Iterator<Item = f64> + '_ {
        self.positions.iter().skip(a).step_by(self.dim).copied()
    }

    /// Ascending positions of a 1D ensemble.
    pub fn sorted_1d(&self) -> Vec<f64> {
        let mut v = self.positions.clone();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Fresh generator for (`seed`, `stream`) positioned at `step`.
fn stream_rng(seed: u64, stream: u64, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(step as u128 * WORDS_PER_STEP);
    rng
}

/// Draws `n` particles from a grid density, uniform within each cell. In 2D the
/// first-axis row is drawn from the marginal, then the column from that row.
pub fn sample_from_density(rho: &GridDensity, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n < MIN_PARTICLES {
        return Err(Error::param(alloc::format!("need at least {MIN_PARTICLES} particles")));
    }
    let g = rho.grid();
    let v = rho.values();
    let cdf = |w: &[f64]| {
        let mut c = Vec::with_capacity(w.len());
        let mut s = 0.0;
        for &x in w {
            s += x;
            c.push(s);
        }
        c
    };
    // Smallest index whose cumulative weight exceeds u·total, skipping empty cells.
    let pick = |c: &[f64], u: f64| {
        let total = *c.last().unwrap();
        let i = c.partition_point(|&x| x <= u * total).min(c.len() - 1);
        let mut j = i;
        while j > 0 && c[j] == c[j - 1] {
            j -= 1;
        }
        if j == 0 && c[0] == 0.0 { i } else { j }
    };
    let mut rng = stream_rng(seed, INIT_STREAM, 0);
    let mut pos = Vec::with_capacity(n * g.dim());
    if g.dim() == 1 {
        let c = cdf(v);
        for _ in 0..n {
            let k = pick(&c, rng.random::<f64>());
            pos.push(g.lo()[0] + (k as f64 + rng.random::<f64>()) * g.dx(0));
        }
    } else {
        let (n0, n1) = (g.n()[0], g.n()[1]);
        let rows: Vec<f64> = (0..n0).map(|r| ksum(v[r * n1..(r + 1) * n1].iter().copied())).collect();
        let rc = cdf(&rows);
        let cols: Vec<Vec<f64>> = (0..n0).map(|r| cdf(&v[r * n1..(r + 1) * n1])).collect();
        for _ in 0..n {
            let r = pick(&rc, rng.random::<f64>());
            let k = pick(&cols[r], rng.random::<f64>());
            pos.push(g.lo()[0] + (r as f64 + rng.random::<f64>()) * g.dx(0));
            pos.push(g.lo()[1] + (k as f64 + rng.random::<f64>()) * g.dx(1));
        }
    }
    ParticleEnsemble::new(g.dim(), pos, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `1.06 σ̂ n^(-1/5)` per axis.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KdeMethod {
    /// Direct below `direct_limit` particles, binned above.
    Auto,
    Direct,
    /// Linear binning on a lattice of spacing h/8, Gaussian smoothing truncated
    /// at 5h, linear interpolation back to the particles.
    Binned,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdeConfig {
    pub bandwidth: Bandwidth,
    pub method: KdeMethod,
    pub direct_limit: usize,
    /// Used when the sample variance vanishes on an axis.
    pub fallback_bandwidth: Option<f64>,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig { bandwidth: Bandwidth::Silverman, method: KdeMethod::Auto, direct_limit: 1000, fallback_bandwidth: None }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::param("fixed bandwidth must be positive"));
            }
        }
        if let Some(h) = self.fallback_bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::param("fallback bandwidth must be positive"));
            }
        }
        Ok(())
    }

    /// Per-axis bandwidth for `ens`.
    pub fn bandwidths(&self, ens: &ParticleEnsemble) -> Result<[f64; 2]> {
        self.validate()?;
        let mut h = [1.0; 2];
        match self.bandwidth {
            Bandwidth::Fixed(v) => h[..ens.dim].fill(v),
            Bandwidth::Silverman => {
                let s = ens.std();
                let f = 1.06 * (ens.len() as f64).powf(-0.2);
                for a in 0..ens.dim {
                    h[a] = if s[a] > 0.0 {
                        f * s[a]
                    } else {
                        self.fallback_bandwidth
                            .ok_or_else(|| Error::param("zero sample variance and no fallback bandwidth"))?
                    };
                }
            }
        }
        Ok(h)
    }
}

#[cfg(feature = "parallel")]
fn map_range<T: Send, F: Fn(usize) -> T + Sync + Send>(n: usize, f: F) -> Vec<T> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_range<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Gaussian KDE (product kernel in 2D) at each particle, self included.
pub fn kde_at_particles(ens: &ParticleEnsemble, cfg: &KdeConfig) -> Result<Vec<f64>> {
    let h = cfg.bandwidths(ens)?;
    let direct = match cfg.method {
        KdeMethod::Direct => true,
        KdeMethod::Binned => false,
        KdeMethod::Auto => ens.len() <= cfg.direct_limit,
    };
    Ok(if direct { kde_direct(ens, h) } else { kde_binned(ens, h) })
}

fn kde_direct(ens: &ParticleEnsemble, h: [f64; 2]) -> Vec<f64> {
    let n = ens.len();
    let d = ens.dim;
    let x = &ens.positions;
    let inv = [1.0 / h[0], 1.0 / h[1]];
    let norm = (0..d).map(|a| INV_SQRT_2PI * inv[a]).product::<f64>() / n as f64;
    map_range(n, |i| {
        let xi = &x[i * d..(i + 1) * d];
        let mut s = 0.0;
        for j in 0..n {
            let mut q = 0.0;
            for a in 0..d {
                let z = (xi[a] - x[j * d + a]) * inv[a];
                q += z * z;
            }
            s += (-0.5 * q).exp();
        }
        s * norm
    })
}

/// Lattice over one axis: origin, spacing, size.
struct Lattice {
    lo: f64,
    delta: f64,
    len: usize,
}

impl Lattice {
    /// Left node and weight on the right node.
    fn locate(&self, x: f64) -> (usize, f64) {
        let t = (x - self.lo) / self.delta;
        let i = (t.floor() as usize).min(self.len - 2);
        (i, (t - i as f64).clamp(0.0, 1.0))
    }
}

fn kde_binned(ens: &ParticleEnsemble, h: [f64; 2]) -> Vec<f64> {
    let d = ens.dim;
    let n = ens.len();
    let x = &ens.positions;
    // Cap the lattice so an outlier cannot blow up memory; spacing grows instead.
    let cap = if d == 1 { 1 << 20 } else { 1 << 11 };
    let lat: Vec<Lattice> = (0..d)
        .map(|a| {
            let (mn, mx) = ens.axis(a).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), v| (l.min(v), u.max(v)));
            let lo = mn - 5.0 * h[a];
            let span = mx + 5.0 * h[a] - lo;
            let delta = (0.125 * h[a]).max(span / (cap - 2) as f64);
            Lattice { lo, delta, len: (span / delta).ceil() as usize + 2 }
        })
        .collect();
    let len1 = if d == 2 { lat[1].len } else { 1 };
    let mut bins = vec![0.0; lat[0].len * len1];
    for i in 0..n {
        let (i0, w0) = lat[0].locate(x[i * d]);
        if d == 1 {
            bins[i0] += 1.0 - w0;
            bins[i0 + 1] += w0;
        } else {
            let (i1, w1) = lat[1].locate(x[i * d + 1]);
            bins[i0 * len1 + i1] += (1.0 - w0) * (1.0 - w1);
            bins[i0 * len1 + i1 + 1] += (1.0 - w0) * w1;
            bins[(i0 + 1) * len1 + i1] += w0 * (1.0 - w1);
            bins[(i0 + 1) * len1 + i1 + 1] += w0 * w1;
        }
    }
    // Separable smoothing, one axis at a time.
    for (a, l) in lat.iter().enumerate() {
        let r = (5.0 * h[a] / l.delta).ceil() as usize;
        let taps: Vec<f64> = (0..=r)
            .map(|k| {
                let z = k as f64 * l.delta / h[a];
                INV_SQRT_2PI / h[a] * (-0.5 * z * z).exp()
            })
            .collect();
        let (stride, count, lines) = if a == 0 { (len1, l.len, len1) } else { (1, l.len, lat[0].len) };
        let mut out = vec![0.0; bins.len()];
        for line in 0..lines {
            let base = if a == 0 { line } else { line * len1 };
            for i in 0..count {
                let b = bins[base + i * stride];
                if b == 0.0 {
                    continue;
                }
                let (from, to) = (i.saturating_sub(r), (i + r).min(count - 1));
                for j in from..=to {
                    out[base + j * stride] += b * taps[i.abs_diff(j)];
                }
            }
        }
        bins = out;
    }
    let inv_n = 1.0 / n as f64;
    map_range(n, |i| {
        let (i0, w0) = lat[0].locate(x[i * d]);
        let v = if d == 1 {
            (1.0 - w0) * bins[i0] + w0 * bins[i0 + 1]
        } else {
            let (i1, w1) = lat[1].locate(x[i * d + 1]);
            let at = |p: usize, q: usize| bins[p * len1 + q];
            (1.0 - w0) * ((1.0 - w1) * at(i0, i1) + w1 * at(i0, i1 + 1))
                + w0 * ((1.0 - w1) * at(i0 + 1, i1) + w1 * at(i0 + 1, i1 + 1))
        };
        v.max(0.0) * inv_n
    })
}

/// One Euler–Maruyama step with the KDE frozen at the start of the step.
/// The noise amplitude is never below `sqrt(2λ)`.
pub fn em_step(
    ens: &ParticleEnsemble,
    psi: &Potential,
    params: &ModelParams,
    cfg: &KdeConfig,
    dt: f64,
) -> Result<ParticleEnsemble> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt must be positive"));
    }
    if psi.dim() != ens.dim {
        return Err(Error::param("potential and ensemble dimensions differ"));
    }
    let d = ens.dim;
    let n = ens.len();
    let rho_hat = if params.eta > 0.0 { Some(kde_at_particles(ens, cfg)?) } else { None };
    let x = &ens.positions;
    let sdt = dt.sqrt();
    let rows: Vec<[f64; 2]> = map_range(n, |i| {
        let xi = &x[i * d..(i + 1) * d];
        let mut g = [0.0; 2];
        psi.grad(xi, &mut g[..d]);
        let dif = params.diffusivity(rho_hat.as_ref().map_or(0.0, |r| r[i]));
        let amp = (2.0 * dif).sqrt() * sdt;
        let mut rng = stream_rng(ens.seed, i as u64, ens.step);
        let mut out = [0.0; 2];
        for a in 0..d {
            let xi_a: f64 = rng.sample(StandardNormal);
            out[a] = xi[a] - g[a] * dt + amp * xi_a;
        }
        out
    });
    let mut positions = Vec::with_capacity(n * d);
    for (i, r) in rows.iter().enumerate() {
        if r[..d].iter().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: ens.step as usize + 1, index: i });
        }
        positions.extend_from_slice(&r[..d]);
    }
    Ok(ParticleEnsemble { dim: d, positions, seed: ens.seed, time: ens.time + dt, step: ens.step + 1 })
}

/// Normalized histogram on `grid`. Particles outside the box are counted into
/// the nearest edge cell; their number is returned alongside.
pub fn histogram(ens: &ParticleEnsemble, grid: &Grid) -> Result<(GridDensity, usize)> {
    if grid.dim() != ens.dim {
        return Err(Error::GridMismatch);
    }
    let d = ens.dim;
    let mut counts = vec![0.0; grid.len()];
    let mut outside = 0;
    for i in 0..ens.len() {
        let p = ens.particle(i);
        let mut idx = 0;
        let mut out = false;
        for a in 0..d {
            let t = ((p[a] - grid.lo()[a]) / grid.dx(a)).floor();
            let na = grid.n()[a];
            out |= t < 0.0 || t >= na as f64;
            let k = t.clamp(0.0, (na - 1) as f64) as usize;
            idx = idx * na + k;
        }
        outside += out as usize;
        counts[idx] += 1.0;
    }
    Ok((GridDensity::from_values(*grid, counts)?.normalized()?, outside))
}

/// W2 between the ensemble and a grid density: exact in 1D, Sinkhorn between
/// the histogram and `rho` in 2D.
pub fn w2_to_density(ens: &ParticleEnsemble, rho: &GridDensity) -> Result<f64> {
    let g = rho.grid();
    if g.dim() != ens.dim {
        return Err(Error::GridMismatch);
    }
    if g.dim() == 1 {
        Ok(transport::w2_empirical_1d(&ens.sorted_1d(), rho.values(), g.lo()[0], g.dx(0)))
    } else {
        histogram(ens, g)?.0.w2_distance(rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRunConfig {
    pub n: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub kde: KdeConfig,
    /// Diagnostics every this many steps, and at the end.
    pub sample_every: usize,
}

impl ParticleRunConfig {
    /// Number of steps; `t_end/dt` must be an integer up to rounding.
    pub fn steps(&self) -> Result<u64> {
        if !(self.dt > 0.0 && self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::param("need dt > 0 and finite t_end ≥ 0"));
        }
        let r = self.t_end / self.dt;
        let k = r.round();
        if (r - k).abs() > 1e-9 * r.max(1.0) {
            return Err(Error::param("t_end must be a whole number of steps"));
        }
        Ok(k as u64)
    }
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub ensemble: ParticleEnsemble,
    pub diagnostics: DiagnosticsSeries,
    /// Particles outside the grid box at each diagnostic sample.
    pub outside: Vec<usize>,
    /// Histogram at the final time.
    pub histogram: GridDensity,
}

/// Samples `rho0`, iterates [`em_step`], and records on the grid of `rho0`: the
/// histogram's J, L^m norm, KL to `reference` (histogram floored at 1e-12), and
/// W2 to the FPE solution advanced alongside when `fpe` is given.
pub fn run_particles(
    rho0: &GridDensity,
    psi: &Potential,
    params: &ModelParams,
    cfg: &ParticleRunConfig,
    mut fpe: Option<&mut FpeSolver>,
    reference: Option<&GridDensity>,
) -> Result<ParticleRun> {
    let steps = cfg.steps()?;
    let grid = *rho0.grid();
    let mut kde = cfg.kde;
    if kde.fallback_bandwidth.is_none() {
        kde.fallback_bandwidth = Some(grid.dx(0));
    }
    let psi_cells = grid.sample_potential(psi)?;
    let mut fpe_state = match fpe.as_deref() {
        Some(s) if s.grid() != &grid => return Err(Error::GridMismatch),
        Some(_) => Some(FpeState::new(rho0.clone())),
        None => None,
    };
    let mut ens = sample_from_density(rho0, cfg.n, cfg.seed)?;
    let mut rows = Vec::new();
    let mut outside = Vec::new();
    let every = cfg.sample_every.max(1) as u64;
    let mut record = |ens: &ParticleEnsemble, fpe: &mut Option<&mut FpeSolver>, st: &mut Option<FpeState>| -> Result<GridDensity> {
        let (hist, out) = histogram(ens, &grid)?;
        let w2_ref = match (fpe.as_deref_mut(), st.as_mut()) {
            (Some(solver), Some(s)) => {
                solver.run_until(s, ens.time)?;
                Some(w2_to_density(ens, &s.rho)?)
            }
            _ => None,
        };
        let kl = match reference {
            Some(r) => {
                let floored: Vec<f64> = hist.values().iter().map(|v| v.max(1e-12)).collect();
                Some(GridDensity::from_values(grid, floored)?.normalized()?.kl_divergence(r)?)
            }
            None => None,
        };
        rows.push(DiagnosticRow {
            t: ens.time,
            j: hist.j_functional_sampled(&psi_cells, params),
            lm_norm: hist.lp_norm(params.m)?,
            kl,
            w2_ref,
            dissipation: None,
            mass: hist.mass(),
            min_value: hist.min_value(),
            theta: None,
        });
        outside.push(out);
        Ok(hist)
    };
    let mut hist = record(&ens, &mut fpe, &mut fpe_state)?;
    for k in 1..=steps {
        ens = em_step(&ens, psi, params, &kde, cfg.dt)?;
        // Pin the clock to k·dt so sample times do not drift.
        ens.time = k as f64 * cfg.dt;
        if k % every == 0 || k == steps {
            hist = record(&ens, &mut fpe, &mut fpe_state)?;
        }
    }
    Ok(ParticleRun { ensemble: ens, diagnostics: rows, outside, histogram: hist })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EscapeStats {
    /// Mean first time a particle is on the far side of the threshold; particles
    /// that never cross count as `t_max`.
    pub mean_time: f64,
    pub escaped: usize,
    pub n: usize,
}

/// 1D first-passage experiment: all particles start at `start` and escape when
/// they first cross `threshold`. The KDE couples them, so a crowded well runs hotter.
#[allow(clippy::too_many_arguments)]
pub fn escape_time(
    psi: &Potential,
    params: &ModelParams,
    kde: &KdeConfig,
    start: f64,
    threshold: f64,
    n: usize,
    dt: f64,
    t_max: f64,
    seed: u64,
) -> Result<EscapeStats> {
    if psi.dim() != 1 || start == threshold {
        return Err(Error::param("escape_time needs a 1D potential and start ≠ threshold"));
    }
    let side = (start - threshold).signum();
    let mut ens = ParticleEnsemble::new(1, vec![start; n], seed)?;
    let mut cfg = *kde;
    if cfg.fallback_bandwidth.is_none() {
        cfg.fallback_bandwidth = Some(0.05);
    }
    let mut hit: Vec<Option<f64>> = vec![None; n];
    let steps = (t_max / dt).ceil() as u64;
    for _ in 0..steps {
        ens = em_step(&ens, psi, params, &cfg, dt)?;
        for (i, h) in hit.iter_mut().enumerate() {
            if h.is_none() && (ens.positions[i] - threshold) * side <= 0.0 {
                *h = Some(ens.time);
            }
        }
        if hit.iter().all(Option::is_some) {
            break;
        }
    }
    let escaped = hit.iter().filter(|h| h.is_some()).count();
    let mean_time = ksum(hit.iter().map(|h| h.unwrap_or(t_max))) / n as f64;
    Ok(EscapeStats { mean_time, escaped, n })
}
