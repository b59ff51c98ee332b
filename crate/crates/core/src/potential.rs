//! Objective Ψ: catalog potentials with quadratic tails and a probe-based
//! auditor for the growth constants the convergence theory relies on.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// Analytic bounds valid beyond the taper radius.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TailBounds {
    /// Upper bound of `|∇Ψ(y)| / (1 + |y|)` in the tails.
    pub growth_k: Option<f64>,
    /// Upper bound of `ΔΨ` in the tails.
    pub laplacian: Option<f64>,
}

/// A user-supplied objective. Implementations must be pure and return Ψ ≥ 0.
pub trait PotentialFn: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64], out: &mut [f64]);
    fn laplacian(&self, y: &[f64]) -> f64;
    /// Radius beyond which Ψ is (at most) quadratic.
    fn taper_radius(&self) -> f64;
    fn name(&self) -> &str;
    fn tail_bounds(&self) -> TailBounds {
        TailBounds::default()
    }
}

/// Shared, immutable handle to a potential.
#[derive(Clone)]
pub struct Potential(Arc<dyn PotentialFn>);

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({}, d={})", self.0.name(), self.0.dim())
    }
}

impl Potential {
    pub fn new<P: PotentialFn + 'static>(p: P) -> Self {
        Potential(Arc::new(p))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    pub fn taper_radius(&self) -> f64 {
        self.0.taper_radius()
    }

    pub fn tail_bounds(&self) -> TailBounds {
        self.0.tail_bounds()
    }

    #[inline]
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.0.value(y)
    }

    #[inline]
    pub fn grad(&self, y: &[f64], out: &mut [f64]) {
        self.0.gradient(y, out)
    }

    #[inline]
    pub fn laplacian(&self, y: &[f64]) -> f64 {
        self.0.laplacian(y)
    }

    /// 1D shorthand; `dim()` must be 1.
    #[inline]
    pub fn eval1(&self, y: f64) -> f64 {
        self.0.value(&[y])
    }

    /// 1D shorthand; `dim()` must be 1.
    #[inline]
    pub fn grad1(&self, y: f64) -> f64 {
        let mut g = [0.0];
        self.0.gradient(&[y], &mut g);
        g[0]
    }
}

#[derive(Debug, Clone)]
struct Quadratic {
    center: Vec<f64>,
    curvature: f64,
}

impl PotentialFn for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn value(&self, y: &[f64]) -> f64 {
        let r2: f64 = y.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
        0.5 * self.curvature * r2
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        for ((o, a), c) in out.iter_mut().zip(y).zip(&self.center) {
            *o = self.curvature * (a - c);
        }
    }
    fn laplacian(&self, _y: &[f64]) -> f64 {
        self.curvature * self.center.len() as f64
    }
    fn taper_radius(&self) -> f64 {
        1.0 + self.center.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
    fn name(&self) -> &str {
        "quadratic"
    }
    fn tail_bounds(&self) -> TailBounds {
        // |κ(y - c)| ≤ κ(1+|y|) whenever |c| ≤ 1; otherwise κ|c| bounds the excess.
        let c = self.center.iter().map(|c| c * c).sum::<f64>().sqrt();
        TailBounds {
            growth_k: Some(self.curvature * c.max(1.0)),
            laplacian: Some(self.curvature * self.center.len() as f64),
        }
    }
}

/// `(κ/2)|y - center|²`.
pub fn make_quadratic(center: &[f64], curvature: f64) -> Result<Potential> {
    if !(curvature > 0.0 && curvature.is_finite()) {
        return Err(Error::param("curvature must be positive"));
    }
    if center.is_empty() || center.len() > 2 || center.iter().any(|c| !c.is_finite()) {
        return Err(Error::param("quadratic center must be a finite point in 1 or 2 dimensions"));
    }
    Ok(Potential::new(Quadratic { center: center.to_vec(), curvature }))
}

/// 1D quartic well with linear tilt inside |y| ≤ r, continued by its
/// second-order Taylor polynomial at ±r, then shifted so that min Ψ = 0.
#[derive(Debug, Clone, Copy)]
struct TaperedWell {
    s: f64,
    asym: f64,
    r: f64,
    shift: f64,
}

impl TaperedWell {
    fn new(s: f64, asym: f64, r: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) || !asym.is_finite() {
            return Err(Error::param("well_sep must be positive and depth_asymmetry finite"));
        }
        if !(r > s && r.is_finite()) {
            return Err(Error::param("taper_radius must exceed well_sep"));
        }
        let mut w = TaperedWell { s, asym, r, shift: 0.0 };
        w.shift = -w.raw_minimum();
        Ok(w)
    }

    fn core(&self, y: f64) -> f64 {
        let s2 = self.s * self.s;
        let q = y * y - s2;
        q * q / (s2 * s2) + self.asym * y
    }

    fn core_d1(&self, y: f64) -> f64 {
        let s2 = self.s * self.s;
        4.0 * y * (y * y - s2) / (s2 * s2) + self.asym
    }

    fn core_d2(&self, y: f64) -> f64 {
        let s2 = self.s * self.s;
        (12.0 * y * y - 4.0 * s2) / (s2 * s2)
    }

    // (Ψ, Ψ', Ψ'') before the shift.
    fn raw(&self, y: f64) -> (f64, f64, f64) {
        if y.abs() <= self.r {
            (self.core(y), self.core_d1(y), self.core_d2(y))
        } else {
            let a = if y > 0.0 { self.r } else { -self.r };
            let t = y - a;
            let (c0, c1, c2) = (self.core(a), self.core_d1(a), self.core_d2(a));
            (c0 + c1 * t + 0.5 * c2 * t * t, c1 + c2 * t, c2)
        }
    }

    fn raw_minimum(&self) -> f64 {
        let n = 4000;
        let mut best = (f64::INFINITY, 0.0);
        for i in 0..=n {
            let y = -self.r + 2.0 * self.r * i as f64 / n as f64;
            let v = self.core(y);
            if v < best.0 {
                best = (v, y);
            }
        }
        let mut y = best.1;
        for _ in 0..50 {
            let d2 = self.core_d2(y);
            if d2 <= 0.0 {
                break;
            }
            let dy = self.core_d1(y) / d2;
            let yn = (y - dy).clamp(-self.r, self.r);
            if (yn - y).abs() < 1e-16 * (1.0 + y.abs()) {
                y = yn;
                break;
            }
            y = yn;
        }
        let mut m = best.0.min(self.core(y));
        // A steep tilt can pull a tail vertex below the core minimum.
        for a in [self.r, -self.r] {
            let (c0, c1, c2) = (self.core(a), self.core_d1(a), self.core_d2(a));
            let t = -c1 / c2;
            if (a > 0.0 && t > 0.0) || (a < 0.0 && t < 0.0) {
                m = m.min(c0 + c1 * t + 0.5 * c2 * t * t);
            }
        }
        m
    }

    fn value(&self, y: f64) -> f64 {
        (self.raw(y).0 + self.shift).max(0.0)
    }

    fn tail_bounds(&self) -> (f64, f64) {
        let mut k = 0.0f64;
        for a in [self.r, -self.r] {
            let (g, b) = (self.core_d1(a).abs(), self.core_d2(a));
            // |g + b t| / (1 + r + t) is bounded by its values at t = 0 and t → ∞.
            k = k.max(g / (1.0 + self.r)).max(b);
        }
        (k, self.core_d2(self.r))
    }
}

#[derive(Debug, Clone, Copy)]
struct DoubleWell1d(TaperedWell);

impl PotentialFn for DoubleWell1d {
    fn dim(&self) -> usize {
        1
    }
    fn value(&self, y: &[f64]) -> f64 {
        self.0.value(y[0])
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        out[0] = self.0.raw(y[0]).1;
    }
    fn laplacian(&self, y: &[f64]) -> f64 {
        self.0.raw(y[0]).2
    }
    fn taper_radius(&self) -> f64 {
        self.0.r
    }
    fn name(&self) -> &str {
        "double_well"
    }
    fn tail_bounds(&self) -> TailBounds {
        let (k, a) = self.0.tail_bounds();
        TailBounds { growth_k: Some(k), laplacian: Some(a) }
    }
}

/// Tilted double well: core `(y² - s²)²/s⁴ + asym·y`, quadratic beyond |y| = taper_radius.
pub fn make_tapered_double_well(
    well_sep: f64,
    depth_asymmetry: f64,
    taper_radius: f64,
) -> Result<Potential> {
    Ok(Potential::new(DoubleWell1d(TaperedWell::new(well_sep, depth_asymmetry, taper_radius)?)))
}

/// `w(y₁) + w(y₂) + (c/2)(y₁ - y₂)²` with `w` the tapered well; the coupling
/// favors the two diagonal wells.
#[derive(Debug, Clone, Copy)]
struct EggCarton {
    w: TaperedWell,
    coupling: f64,
}

impl PotentialFn for EggCarton {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, y: &[f64]) -> f64 {
        let d = y[0] - y[1];
        self.w.value(y[0]) + self.w.value(y[1]) + 0.5 * self.coupling * d * d
    }
    fn gradient(&self, y: &[f64], out: &mut [f64]) {
        let d = y[0] - y[1];
        out[0] = self.w.raw(y[0]).1 + self.coupling * d;
        out[1] = self.w.raw(y[1]).1 - self.coupling * d;
    }
    fn laplacian(&self, y: &[f64]) -> f64 {
        self.w.raw(y[0]).2 + self.w.raw(y[1]).2 + 2.0 * self.coupling
    }
    fn taper_radius(&self) -> f64 {
        self.w.r * core::f64::consts::SQRT_2
    }
    fn name(&self) -> &str {
        "egg_carton"
    }
    fn tail_bounds(&self) -> TailBounds {
        let (_, a) = self.w.tail_bounds();
        // w'' is maximal on the tails, so this bounds ΔΨ everywhere.
        TailBounds { growth_k: None, laplacian: Some(2.0 * a + 2.0 * self.coupling) }
    }
}

/// Two-dimensional two-well landscape; see [`make_tapered_double_well`].
pub fn make_egg_carton(
    well_sep: f64,
    depth_asymmetry: f64,
    taper_radius: f64,
    coupling: f64,
) -> Result<Potential> {
    if !(coupling >= 0.0 && coupling.is_finite()) {
        return Err(Error::param("coupling must be nonnegative"));
    }
    Ok(Potential::new(EggCarton {
        w: TaperedWell::new(well_sep, depth_asymmetry, taper_radius)?,
        coupling,
    }))
}

/// Named catalog entry with its numeric parameters, as read from run configs.
pub fn from_catalog(name: &str, args: &[(String, f64)]) -> Result<Potential> {
    let get = |key: &str, default: f64| -> f64 {
        args.iter().find(|(k, _)| k == key).map(|(_, v)| *v).unwrap_or(default)
    };
    let known: &[&str] = match name {
        "quadratic" => &["curvature", "center", "center_x", "center_y", "dim"],
        "double_well" => &["well_sep", "depth_asymmetry", "taper_radius"],
        "egg_carton" => &["well_sep", "depth_asymmetry", "taper_radius", "coupling"],
        _ => return Err(Error::param(alloc::format!("unknown potential `{name}`"))),
    };
    if let Some((k, _)) = args.iter().find(|(k, _)| !known.contains(&k.as_str())) {
        return Err(Error::param(alloc::format!("unknown parameter `{k}` for potential `{name}`")));
    }
    match name {
        "quadratic" => {
            let dim = get("dim", 1.0);
            let c = get("center", 0.0);
            if dim == 2.0 {
                make_quadratic(&[get("center_x", c), get("center_y", c)], get("curvature", 1.0))
            } else if dim == 1.0 {
                make_quadratic(&[get("center_x", c)], get("curvature", 1.0))
            } else {
                Err(Error::param("quadratic dim must be 1 or 2"))
            }
        }
        "double_well" => make_tapered_double_well(
            get("well_sep", 1.0),
            get("depth_asymmetry", 0.0),
            get("taper_radius", 3.0),
        ),
        _ => make_egg_carton(
            get("well_sep", 1.0),
            get("depth_asymmetry", 0.0),
            get("taper_radius", 3.0),
            get("coupling", 0.5),
        ),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditConfig {
    /// λ entering the logarithmic growth threshold `(λ(d+2) + δ) ln|y|`.
    pub lambda: f64,
    pub delta: f64,
    pub n_probe: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig { lambda: 0.5, delta: 0.1, n_probe: 4096 }
    }
}

/// Constants certified on probes (and by analytic tails where available).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    /// `max(growth_k, gradient_lipschitz)`: serves both the linear-growth
    /// bound and the Lipschitz constant of ∇Ψ.
    pub lipschitz_k: f64,
    /// `sup |∇Ψ(y)| / (1 + |y|)`.
    pub growth_k: f64,
    /// `sup ‖∇²Ψ‖`.
    pub gradient_lipschitz: f64,
    /// `A = sup (ΔΨ)⁺`.
    pub laplacian_plus_a: f64,
    pub log_growth_ok: bool,
    pub log_growth_r: f64,
    pub log_growth_delta: f64,
    pub radial_monotone_ok: bool,
    pub radial_r: f64,
    pub min_value: f64,
    pub n_probe: usize,
}

impl AssumptionReport {
    pub fn all_ok(&self) -> bool {
        self.log_growth_ok
            && self.radial_monotone_ok
            && self.lipschitz_k.is_finite()
            && self.laplacian_plus_a.is_finite()
            && self.min_value >= -1e-12
    }
}

fn probes(lo: &[f64], hi: &[f64], n: usize) -> Vec<Vec<f64>> {
    match lo.len() {
        1 => (0..n)
            .map(|i| vec![lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / n as f64])
            .collect(),
        _ => {
            let k = ((n as f64).sqrt().ceil() as usize).max(2);
            let mut out = Vec::with_capacity(k * k);
            for i in 0..k {
                for j in 0..k {
                    out.push(vec![
                        lo[0] + (hi[0] - lo[0]) * (i as f64 + 0.5) / k as f64,
                        lo[1] + (hi[1] - lo[1]) * (j as f64 + 0.5) / k as f64,
                    ]);
                }
            }
            out
        }
    }
}

fn norm(y: &[f64]) -> f64 {
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Probe-based audit over the box `[lo, hi]`.
pub fn audit_assumptions(
    p: &Potential,
    lo: &[f64],
    hi: &[f64],
    cfg: &AuditConfig,
) -> Result<AssumptionReport> {
    let d = p.dim();
    if lo.len() != d || hi.len() != d || lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
        return Err(Error::param("audit box must match the potential dimension"));
    }
    let pts = probes(lo, hi, cfg.n_probe.max(1000));
    let half = lo.iter().zip(hi).map(|(a, b)| a.abs().min(b.abs())).fold(f64::INFINITY, f64::min);
    let tails = p.tail_bounds();
    let mut g = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gm = vec![0.0; d];
    let mut growth = 0.0f64;
    let mut lip = 0.0f64;
    let mut a_plus = 0.0f64;
    let mut min_value = f64::INFINITY;
    let thresh = cfg.lambda * (d as f64 + 2.0) + cfg.delta;
    let mut log_r = 1.0f64;
    let mut radial_r = 0.0f64;
    for y in &pts {
        let r = norm(y);
        let v = p.eval(y);
        min_value = min_value.min(v);
        p.grad(y, &mut g);
        growth = growth.max(norm(&g) / (1.0 + r));
        a_plus = a_plus.max(p.laplacian(y));
        if d == 1 {
            lip = lip.max(p.laplacian(y).abs());
        } else {
            // Hessian by central differences of the gradient; spectral norm of the 2x2 block.
            let h = 1e-5;
            let mut hess = [[0.0; 2]; 2];
            for k in 0..2 {
                let mut yp = y.clone();
                let mut ym = y.clone();
                yp[k] += h;
                ym[k] -= h;
                p.grad(&yp, &mut gp);
                p.grad(&ym, &mut gm);
                for l in 0..2 {
                    hess[l][k] = (gp[l] - gm[l]) / (2.0 * h);
                }
            }
            let (a, b, c) = (hess[0][0], 0.5 * (hess[0][1] + hess[1][0]), hess[1][1]);
            let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            lip = lip.max((0.5 * (a + c)).abs() + disc);
        }
        if r >= 1.0 && v < thresh * r.ln() {
            log_r = log_r.max(r * (1.0 + 1e-12));
        }
        if r > 0.0 {
            for k in [1.1, 2.0, 10.0] {
                let ky: Vec<f64> = y.iter().map(|c| c * k).collect();
                if p.eval(&ky) < v - 1e-12 * (1.0 + v) {
                    radial_r = radial_r.max(r * (1.0 + 1e-12));
                }
            }
        }
    }
    if let Some(k) = tails.growth_k {
        growth = growth.max(k);
    }
    if let Some(a) = tails.laplacian {
        a_plus = a_plus.max(a);
        if d == 1 {
            lip = lip.max(a.abs());
        }
    }
    Ok(AssumptionReport {
        lipschitz_k: growth.max(lip),
        growth_k: growth,
        gradient_lipschitz: lip,
        laplacian_plus_a: a_plus.max(0.0),
        log_growth_ok: log_r < 0.9 * half,
        log_growth_r: log_r,
        log_growth_delta: cfg.delta,
        radial_monotone_ok: radial_r < 0.9 * half,
        radial_r,
        min_value,
        n_probe: pts.len(),
    })
}
