//! Principal Lambert branch W₀ and the stationary-profile function
//! `h(z) = λ ln z + (ηm/(m-1)) (z^(m-1) - 1)` with its inverse.

use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;
use crate::params::ModelParams;

const MAX_ITER: usize = 64;
/// Largest |ln x| for which x and x·ln-scale products stay representable.
const LOG_SAFE: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct W0Result {
    pub value: f64,
    pub iterations: usize,
    /// `|w e^w - x| / x`.
    pub residual: f64,
}

/// Principal branch W₀ on [0, ∞).
pub fn w0(x: f64) -> Result<W0Result> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain("w0"));
    }
    if x == 0.0 {
        return Ok(W0Result { value: 0.0, iterations: 0, residual: 0.0 });
    }
    if x <= core::f64::consts::E {
        Ok(w0_direct(x))
    } else {
        Ok(w0_from_log(x.ln()))
    }
}

/// W₀(e^l) without forming e^l; valid for every finite l.
pub fn w0_exp(l: f64) -> Result<W0Result> {
    if !l.is_finite() {
        return Err(Error::Domain("w0_exp"));
    }
    if l <= 1.0 {
        if l < -LOG_SAFE {
            // W₀(x) = x - x² + O(x³), and x² underflows.
            let x = l.exp();
            return Ok(W0Result { value: x, iterations: 0, residual: x });
        }
        return Ok(w0_direct(l.exp()));
    }
    Ok(w0_from_log(l))
}

// Halley on w e^w - x, seeded by ln(1+x).
fn w0_direct(x: f64) -> W0Result {
    let mut w = x.ln_1p();
    let mut it = 0;
    while it < MAX_ITER {
        it += 1;
        let ew = w.exp();
        let f = w * ew - x;
        if f == 0.0 {
            break;
        }
        let w1 = w + 1.0;
        let dw = f / (ew * w1 - (w + 2.0) * f / (2.0 * w1));
        w -= dw;
        if dw.abs() <= 2.0 * f64::EPSILON * w.abs() {
            break;
        }
    }
    let residual = ((w * w.exp() - x) / x).abs();
    W0Result { value: w, iterations: it, residual }
}

// Halley on g(w) = w + ln w - l for l = ln x > 1, seeded by l - ln l.
fn w0_from_log(l: f64) -> W0Result {
    let mut w = l - l.ln();
    let mut it = 0;
    while it < MAX_ITER {
        it += 1;
        let g = w + w.ln() - l;
        if g == 0.0 {
            break;
        }
        let g1 = 1.0 + 1.0 / w;
        let g2 = -1.0 / (w * w);
        let dw = g / (g1 - g * g2 / (2.0 * g1));
        w -= dw;
        if dw.abs() <= 2.0 * f64::EPSILON * w {
            break;
        }
    }
    let residual = if l < LOG_SAFE {
        let x = l.exp();
        ((w * w.exp() - x) / x).abs()
    } else {
        (w + w.ln() - l).exp_m1().abs()
    };
    W0Result { value: w, iterations: it, residual }
}

/// Upper bound `ln((x + c) / (1 + ln c)) ≥ W₀(x)`, valid for x > 0, c > 1/e.
pub fn w0_upper_bound(x: f64, c: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) || !(c > (-1.0f64).exp() && c.is_finite()) {
        return Err(Error::Domain("w0_upper_bound"));
    }
    // ln c + ln(1 + x/c) - ln(1 + ln c): exact at the c = 1, x → 0 contact point.
    let lc = c.ln();
    Ok(lc + (x / c).ln_1p() - lc.ln_1p())
}

/// `h(z) = λ ln z + (ηm/(m-1)) (z^(m-1) - 1)`; strictly increasing, h(1) = 0.
pub fn h_eval(z: f64, p: &ModelParams) -> Result<f64> {
    if !(z > 0.0) || z.is_nan() {
        return Err(Error::Domain("h_eval"));
    }
    Ok(h_unchecked(z, p))
}

#[inline]
fn h_unchecked(z: f64, p: &ModelParams) -> f64 {
    let k = p.eta * p.m / (p.m - 1.0);
    let pw = if p.m == 2.0 { z - 1.0 } else { ((p.m - 1.0) * z.ln()).exp_m1() };
    p.lambda * z.ln() + k * pw
}

#[inline]
fn h_prime(z: f64, p: &ModelParams) -> f64 {
    p.lambda / z + p.eta * p.m * p.pow_m1(z) / z
}

/// The unique z > 0 with h(z) = r.
///
/// Uses the Lambert closed form `z^(m-1) = (λ/(ηm)) W₀((ηm/λ) e^a)`,
/// `a = ((m-1)/λ)(r + ηm/(m-1))`, while the argument is representable, and a
/// bracketed solve in ln z otherwise. Returns 0 only when the root underflows.
pub fn h_inverse(r: f64, p: &ModelParams) -> Result<f64> {
    if !r.is_finite() {
        return Err(Error::Domain("h_inverse"));
    }
    if !(p.lambda > 0.0) {
        return Err(Error::Domain("h_inverse (lambda = 0)"));
    }
    if p.eta == 0.0 {
        return Ok((r / p.lambda).exp());
    }
    let k = p.eta * p.m / (p.m - 1.0);
    let kappa = p.eta * p.m / p.lambda;
    let a = (p.m - 1.0) / p.lambda * (r + k);
    let l = kappa.ln() + a;
    let z = if l.abs() <= LOG_SAFE {
        let q = w0_exp(l)?.value / kappa;
        if p.m == 2.0 {
            q
        } else {
            q.powf(1.0 / (p.m - 1.0))
        }
    } else {
        h_inverse_log_domain(r, p)
    };
    if !(z > 0.0) || !z.is_finite() {
        return Ok(z.max(0.0));
    }
    // One Newton polish against h itself.
    let f = h_unchecked(z, p) - r;
    let z1 = z - f / h_prime(z, p);
    if z1 > 0.0 && (h_unchecked(z1, p) - r).abs() < f.abs() {
        Ok(z1)
    } else {
        Ok(z)
    }
}

// Bisection on t = ln z for φ(t) = λ t + (ηm/(m-1))(e^((m-1)t) - 1) - r, increasing in t.
fn h_inverse_log_domain(r: f64, p: &ModelParams) -> f64 {
    let k = p.eta * p.m / (p.m - 1.0);
    let phi = |t: f64| p.lambda * t + k * ((p.m - 1.0) * t).exp_m1() - r;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    let mut step = 1.0;
    while phi(lo) > 0.0 {
        step *= 2.0;
        lo -= step;
    }
    step = 1.0;
    while phi(hi) < 0.0 {
        step *= 2.0;
        hi += step;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent oracle: bisection on y e^y = x.
    fn w0_bisect(x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, x.max(1.0));
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if mid * mid.exp() < x {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn params(l: f64, e: f64, m: f64) -> ModelParams {
        ModelParams::new(l, e, m).unwrap()
    }

    #[test]
    fn w0_fixed_points() {
        assert_eq!(w0(0.0).unwrap().value, 0.0);
        assert!((w0(core::f64::consts::E).unwrap().value - 1.0).abs() < 1e-15);
        let w = w0(1.0).unwrap().value;
        assert!((w - w0_bisect(1.0)).abs() < 1e-14);
        assert!((w - 0.567_143_290_409_783_8).abs() < 1e-15);
    }

    #[test]
    fn w0_rejects_bad_input() {
        assert!(w0(-1e-3).is_err());
        assert!(w0(f64::NAN).is_err());
        assert!(w0(f64::INFINITY).is_err());
    }

    #[test]
    fn w0_agrees_with_bisection() {
        for &x in &[1e-10, 1e-3, 0.3, 2.0, 10.0, 1e3, 1e8, 1e15] {
            let w = w0(x).unwrap().value;
            let o = w0_bisect(x);
            assert!((w - o).abs() <= 1e-13 * o.max(1e-300) + 1e-300, "x={x}");
        }
    }

    #[test]
    fn w0_exp_matches_w0() {
        for &l in &[-50.0, -2.0, 0.0, 0.7, 1.0, 3.0, 40.0, 600.0] {
            let a = w0_exp(l).unwrap().value;
            let b = w0(f64::exp(l)).unwrap().value;
            assert!((a - b).abs() <= 4e-16 * b.max(1e-300), "l={l}: {a} vs {b}");
        }
        let big = w0_exp(1e5).unwrap();
        assert!((big.value + big.value.ln() - 1e5).abs() < 1e-10);
    }

    #[test]
    fn upper_bound_examples() {
        assert!((w0_upper_bound(1.0, 1.0).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(w0_upper_bound(1.0, 1.0).unwrap() > w0(1.0).unwrap().value);
        let e = core::f64::consts::E;
        assert!((w0_upper_bound(e, 1.0).unwrap() - (e + 1.0).ln()).abs() < 1e-15);
        assert!(w0_upper_bound(1e-6, 1.0).unwrap() >= w0_bisect(1e-6));
        assert!(w0_upper_bound(1.0, 0.3).is_err());
        assert!(w0_upper_bound(0.0, 1.0).is_err());
    }

    #[test]
    fn h_examples() {
        let p = params(1.0, 1.0, 2.0);
        let e = core::f64::consts::E;
        assert_eq!(h_eval(1.0, &p).unwrap(), 0.0);
        assert!((h_eval(e, &p).unwrap() - (1.0 + 2.0 * (e - 1.0))).abs() < 1e-14);
        let v = h_eval(1e-8, &p).unwrap();
        assert!((v - (1e-8f64.ln() - 2.0 * (1.0 - 1e-8))).abs() < 1e-12);
        assert!(h_eval(0.0, &p).is_err());
        assert!(h_eval(-1.0, &p).is_err());
    }

    #[test]
    fn h_inverse_examples() {
        let p = params(1.0, 1.0, 2.0);
        assert!((h_inverse(0.0, &p).unwrap() - 1.0).abs() < 1e-15);
        let e = core::f64::consts::E;
        assert!((h_inverse(1.0 + 2.0 * (e - 1.0), &p).unwrap() - e).abs() < 1e-9);
        for &z in &[1e-4, 0.5, 1.0, 10.0] {
            let back = h_inverse(h_eval(z, &p).unwrap(), &p).unwrap();
            assert!((back - z).abs() <= 1e-10 * z);
        }
        assert!(h_inverse(f64::NAN, &p).is_err());
    }

    #[test]
    fn h_inverse_far_tails() {
        let p = params(0.5, 0.5, 3.0);
        // Deep tail: root is e^(r/λ) to leading order.
        let z = h_inverse(-300.0, &p).unwrap();
        assert!(z > 0.0);
        let rel = (h_eval(z, &p).unwrap() + 300.0).abs() / 300.0;
        assert!(rel < 1e-12);
        // Below the smallest normal the root underflows to zero.
        assert_eq!(h_inverse(-400.0, &p).unwrap(), 0.0);
        let z = h_inverse(1e5, &p).unwrap();
        assert!((h_eval(z, &p).unwrap() - 1e5).abs() < 1e-10 * 1e5);
        let z = h_inverse(-1e4, &p).unwrap();
        assert!(z == 0.0 || (h_eval(z, &p).unwrap() + 1e4).abs() < 1e-8 * 1e4);
    }

    #[test]
    fn h_inverse_pure_entropy() {
        let p = params(0.5, 0.0, 2.0);
        assert!((h_inverse(0.5, &p).unwrap() - 1f64.exp()).abs() < 1e-15);
    }
}
