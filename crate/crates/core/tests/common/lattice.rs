//! Brute-force reference for an 8-cell minimizing-movement step: every point
//! of a simplex lattice, then pairwise mass exchanges on shrinking scales.
//! Θ is recomputed here from scratch (all-knot quantile merge for W2).

use dlangevin_core::jko::{jko_step, JkoConfig};
use dlangevin_core::potential::make_tapered_double_well;
use dlangevin_core::{Grid, GridDensity, ModelParams, Potential};

pub const N: usize = 8;


pub struct Oracle {
    pub mu: [f64; N],
    psi: [f64; N],
    lo: f64,
    pub dx: f64,
    tau: f64,
    p: ModelParams,
}

impl Oracle {
    /// Quantile of a cell-mass vector at level s; masses sum to one.
    fn quantile(&self, m: &[f64; N], cum: &[f64; N + 1], s: f64) -> f64 {
        let mut k = cum.partition_point(|&c| c <= s).saturating_sub(1).min(N - 1);
        while m[k] == 0.0 && k > 0 {
            k -= 1;
        }
        let off = if m[k] > 0.0 { ((s - cum[k]) / m[k]).clamp(0.0, 1.0) } else { 1.0 };
        self.lo + (k as f64 + off) * self.dx
    }

    pub fn w2_sq(&self, a: &[f64; N]) -> f64 {
        let cum = |m: &[f64; N]| {
            let mut c = [0.0; N + 1];
            for i in 0..N {
                c[i + 1] = c[i] + m[i];
            }
            c
        };
        let (ca, cb) = (cum(a), cum(&self.mu));
        let mut knots: Vec<f64> = ca.iter().chain(cb.iter()).map(|v| v.clamp(0.0, 1.0)).collect();
        knots.push(1.0);
        knots.sort_by(f64::total_cmp);
        knots.dedup();
        let mut total = 0.0;
        for w in knots.windows(2) {
            let (s0, s1) = (w[0], w[1]);
            if s1 <= s0 {
                continue;
            }
            // Both quantiles are affine between knots: Simpson is exact.
            let d = |s: f64| self.quantile(a, &ca, s) - self.quantile(&self.mu, &cb, s);
            let mid = 0.5 * (s0 + s1);
            let e = 1e-15;
            let (d0, dm, d1) = (d(s0 + e), d(mid), d(s1 - e));
            total += (s1 - s0) * (d0 * d0 + 4.0 * dm * dm + d1 * d1) / 6.0;
        }
        total
    }

    /// Θ for cell masses `m` (summing to one).
    pub fn theta(&self, m: &[f64; N]) -> f64 {
        let mut j = 0.0;
        for i in 0..N {
            let r = m[i] / self.dx;
            let ent = if r > 0.0 { r * r.ln() } else { 0.0 };
            j += (self.psi[i] * r + self.p.lambda * ent + self.p.eta / (self.p.m - 1.0) * r.powf(self.p.m)) * self.dx;
        }
        self.w2_sq(m) / (2.0 * self.tau) + j
    }

    pub fn lattice_min(&self, k: usize) -> ([f64; N], f64) {
        let mut best = ([0.0; N], f64::INFINITY);
        let mut parts = [0usize; N];
        fn rec(o: &Oracle, k: usize, i: usize, left: usize, parts: &mut [usize; N], best: &mut ([f64; N], f64)) {
            if i == N - 1 {
                parts[i] = left;
                let mut m = [0.0; N];
                for j in 0..N {
                    m[j] = parts[j] as f64 / k as f64;
                }
                let t = o.theta(&m);
                if t < best.1 {
                    *best = (m, t);
                }
                return;
            }
            for c in 0..=left {
                parts[i] = c;
                rec(o, k, i + 1, left - c, parts, best);
            }
        }
        rec(self, k, 0, k, &mut parts, &mut best);
        best
    }

    /// Moves `h` of mass between every ordered pair while Θ improves, halving `h`.
    pub fn refine(&self, mut m: [f64; N], mut t: f64, mut h: f64) -> ([f64; N], f64) {
        while h > 1e-9 {
            let mut improved = true;
            while improved {
                improved = false;
                for i in 0..N {
                    for j in 0..N {
                        if i == j || m[i] < h {
                            continue;
                        }
                        let mut c = m;
                        c[i] -= h;
                        c[j] += h;
                        let tc = self.theta(&c);
                        if tc < t {
                            m = c;
                            t = tc;
                            improved = true;
                        }
                    }
                }
            }
            h *= 0.5;
        }
        (m, t)
    }
}

pub fn setup(tau: f64, mu_center: f64) -> (Oracle, GridDensity, Potential, ModelParams) {
    let g = Grid::new_1d(-2.0, 2.0, N).unwrap();
    let psi = make_tapered_double_well(1.0, 0.2, 1.8).unwrap();
    let p = ModelParams::new(0.5, 0.5, 2.0).unwrap();
    let mu = GridDensity::gaussian(g, &[mu_center], 0.6).unwrap();
    let dx = g.dx(0);
    let mut o = Oracle { mu: [0.0; N], psi: [0.0; N], lo: -2.0, dx, tau, p };
    for i in 0..N {
        o.mu[i] = mu.values()[i] * dx;
        o.psi[i] = psi.eval1(g.center(0, i));
    }
    (o, mu, psi, p)
}

/// `(Θ recomputed at our step, Θ reported by the step, lattice minimum)`.
pub fn compare_step(tau: f64, mu_center: f64) -> (f64, f64, f64) {
    let (o, mu, psi, p) = setup(tau, mu_center);
    let (m0, t0) = o.lattice_min(20);
    let (_, t_star) = o.refine(m0, t0, 0.025);
    let step = jko_step(&mu, &JkoConfig::new(tau), &psi, &p).unwrap();
    let mut m = [0.0; N];
    for i in 0..N {
        m[i] = step.density.values()[i] * o.dx;
    }
    (o.theta(&m), step.theta, t_star)
}
