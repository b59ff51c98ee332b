//! Randomized check of the doubling inequalities for the energy density
//! `F(s) = λ s ln s + η s^m/(m-1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::params::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DoublingReport {
    /// `C = max(1/(1 - ln 2), 2^m - 1)`.
    pub constant: f64,
    pub pairs: usize,
    /// Largest `F(x+y) - C(1 + F(x) + F(y))`; ≤ 0 when the inequality holds.
    pub max_slack_f: f64,
    /// Largest `(x+y)^m / ((2^m - 1)(x^m + y^m))`; ≤ 1 when the inequality holds.
    pub max_ratio_pow: f64,
    pub violations: usize,
}

impl DoublingReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

pub fn doubling_constant(m: f64) -> f64 {
    (1.0 / (1.0 - core::f64::consts::LN_2)).max(2f64.powf(m) - 1.0)
}

/// Checks both inequalities on `samples` pairs drawn log-uniformly from
/// [1e-12, 1e6]² (plus the corner cases with a zero coordinate).
pub fn doubling_check(p: &ModelParams, samples: usize, seed: u64) -> Result<DoublingReport> {
    if p.lambda > core::f64::consts::E / 2.0 {
        return Err(Error::Hypothesis("doubling constant requires lambda <= e/2".into()));
    }
    let c = doubling_constant(p.m);
    let cp = 2f64.powf(p.m) - 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (1e-12f64.ln(), 1e6f64.ln());
    let draw = |rng: &mut ChaCha8Rng| (lo + (hi - lo) * rng.random::<f64>()).exp();
    let mut rep = DoublingReport {
        constant: c,
        pairs: 0,
        max_slack_f: f64::NEG_INFINITY,
        max_ratio_pow: 0.0,
        violations: 0,
    };
    let check = |x: f64, y: f64, rep: &mut DoublingReport| {
        let lhs = p.energy_density(x + y);
        let rhs = c * (1.0 + p.energy_density(x) + p.energy_density(y));
        let slack = lhs - rhs;
        let tol = 1e-12 * lhs.abs().max(rhs.abs()).max(1.0);
        let ratio = if x + y > 0.0 {
            (x + y).powf(p.m) / (cp * (x.powf(p.m) + y.powf(p.m)))
        } else {
            0.0
        };
        if slack > tol || ratio > 1.0 + 1e-12 {
            rep.violations += 1;
        }
        rep.max_slack_f = rep.max_slack_f.max(slack);
        rep.max_ratio_pow = rep.max_ratio_pow.max(ratio);
        rep.pairs += 1;
    };
    check(0.0, 0.0, &mut rep);
    check(0.0, 1.0, &mut rep);
    check(1.0, 0.0, &mut rep);
    for _ in 3..samples.max(3) {
        let x = draw(&mut rng);
        let y = draw(&mut rng);
        check(x, y, &mut rep);
    }
    Ok(rep)
}
