use crate::error::{Error, Result};
#[allow(unused_imports)]
use crate::math::Float;

/// Temperature parameters (λ, η, m): the noise is `sqrt(2λ + 2η ρ^(m-1))`.
///
/// `eta = 0` gives plain Langevin dynamics with Gibbs equilibrium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    pub eta: f64,
    pub m: f64,
    /// When set, constructors and solvers reject settings outside the
    /// hypotheses of the convergence theory (λ < e/2, η > 0).
    pub theorem_mode: bool,
}

impl ModelParams {
    pub fn new(lambda: f64, eta: f64, m: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param("lambda must be positive and finite"));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::param("eta must be nonnegative and finite"));
        }
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::param("m must be finite and > 1"));
        }
        Ok(ModelParams { lambda, eta, m, theorem_mode: false })
    }

    /// Zero temperature: pure gradient descent, used only to validate drift handling.
    pub fn noiseless(m: f64) -> Self {
        ModelParams { lambda: 0.0, eta: 0.0, m, theorem_mode: false }
    }

    pub fn with_theorem_mode(mut self) -> Result<Self> {
        self.theorem_mode = true;
        self.check_theorem_hypotheses()?;
        Ok(self)
    }

    pub fn check_theorem_hypotheses(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < core::f64::consts::E / 2.0) {
            return Err(Error::Hypothesis(alloc::format!(
                "lambda = {} must lie in (0, e/2)",
                self.lambda
            )));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Hypothesis("eta must be positive".into()));
        }
        if !(self.m > 1.0) {
            return Err(Error::Hypothesis("m must exceed 1".into()));
        }
        Ok(())
    }

    /// `s^(m-1)` with an exact path for m = 2.
    #[inline]
    pub fn pow_m1(&self, s: f64) -> f64 {
        if self.m == 2.0 {
            s
        } else if s <= 0.0 {
            0.0
        } else {
            s.powf(self.m - 1.0)
        }
    }

    /// `s^m` with an exact path for m = 2.
    #[inline]
    pub fn pow_m(&self, s: f64) -> f64 {
        if self.m == 2.0 {
            s * s
        } else if s <= 0.0 {
            0.0
        } else {
            s.powf(self.m)
        }
    }

    /// Pressure `L_F(s) = λ s + η s^m`.
    #[inline]
    pub fn l_f(&self, s: f64) -> f64 {
        self.lambda * s + self.eta * self.pow_m(s)
    }

    /// Energy density `F(s) = λ s ln s + η s^m / (m-1)`, with F(0) = 0.
    #[inline]
    pub fn energy_density(&self, s: f64) -> f64 {
        let ent = if s > 0.0 { self.lambda * s * s.ln() } else { 0.0 };
        ent + self.eta * self.pow_m(s) / (self.m - 1.0)
    }

    /// `F'(s) = λ (ln s + 1) + η m s^(m-1) / (m-1)` for s > 0.
    #[inline]
    pub fn energy_derivative(&self, s: f64) -> f64 {
        self.lambda * (s.ln() + 1.0) + self.eta * self.m * self.pow_m1(s) / (self.m - 1.0)
    }

    /// `F''(s) = λ / s + η m s^(m-2)` for s > 0.
    #[inline]
    pub fn energy_second_derivative(&self, s: f64) -> f64 {
        self.lambda / s + self.eta * self.m * self.pow_m1(s) / s
    }

    /// Local diffusion coefficient `λ + η ρ^(m-1)` (half the squared noise amplitude).
    #[inline]
    pub fn diffusivity(&self, rho: f64) -> f64 {
        self.lambda + self.eta * self.pow_m1(rho.max(0.0))
    }
}
