//! Scale functions of `X_t = x + (r - σ²/2) t + σ B_t`.
//!
//! With `γ = -2r/σ²` and `C = 1/(r + σ²/2)` the first scale function is
//!
//! ```text
//! W(x) = C (e^x - e^{γx}),            x >= 0
//! Z(x) = 1 + r ∫_0^x W(y) dy = (e^{γx} - γ e^x) / (1 - γ)
//! ```
//!
//! `1` and `γ` are the two roots of `ψ(θ) = r` for the Laplace exponent
//! `ψ(θ) = (r - σ²/2)θ + σ²θ²/2`, which is why both exponentials appear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

/// Above this argument `W` and `Z` are evaluated through their logarithms.
pub const LOG_STABLE_THRESHOLD: f64 = 500.0;

/// `-2r/σ²`, strictly negative for valid parameters.
pub fn gamma(params: &ModelParams) -> f64 {
    -2.0 * params.r / (params.sigma * params.sigma)
}

/// `1/(r + σ²/2)`.
pub fn c_const(params: &ModelParams) -> f64 {
    1.0 / (params.r + 0.5 * params.sigma * params.sigma)
}

pub fn scale_w(params: &ModelParams, x: f64) -> Result<f64> {
    let sf = ScaleFunctions::new(params);
    sf.checked(x).map(|x| sf.w(x))
}

/// `(W'(x), W''(x))`.
pub fn scale_w_derivs(params: &ModelParams, x: f64) -> Result<(f64, f64)> {
    let sf = ScaleFunctions::new(params);
    let x = sf.checked(x)?;
    Ok((sf.w1(x), sf.w2(x)))
}

pub fn scale_z(params: &ModelParams, x: f64) -> Result<f64> {
    let sf = ScaleFunctions::new(params);
    sf.checked(x).map(|x| sf.z(x))
}

/// `λ(d, r) = W'(d)/W(d)`.
pub fn lambda_c(params: &ModelParams, d: f64) -> Result<f64> {
    let sf = ScaleFunctions::new(params);
    sf.checked_positive(d).map(|d| sf.lambda(d))
}

/// `Δ(d, r) = (σ²/2)[W'(d) - W''(d)/λ(d, r)]`.
pub fn delta_c(params: &ModelParams, d: f64) -> Result<f64> {
    let sf = ScaleFunctions::new(params);
    sf.checked_positive(d).map(|d| sf.delta(d))
}

/// Values of `W`, `W'`, `W''`, `Z`, `Z'` at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleEval {
    pub w: f64,
    pub w1: f64,
    pub w2: f64,
    pub z: f64,
    pub z1: f64,
}

/// Scale functions for one parameter set.
///
/// The coefficients are cached; evaluation methods take the argument
/// unchecked and are meant for hot paths. Use the free functions of this
/// module for validated single evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleFunctions {
    r: f64,
    half_sigma2: f64,
    gamma: f64,
    c_const: f64,
}

impl ScaleFunctions {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_gamma(params, gamma(params))
    }

    /// Scale functions built with an arbitrary exponent in place of `γ`.
    ///
    /// Only the exponent changes; `C`, `r` and `σ` keep their model values.
    /// Used to confirm that the verification checks detect a wrong model.
    pub fn with_gamma(params: &ModelParams, gamma: f64) -> Self {
        Self {
            r: params.r,
            half_sigma2: 0.5 * params.sigma * params.sigma,
            gamma,
            c_const: c_const(params),
        }
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c_const(&self) -> f64 {
        self.c_const
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn half_sigma2(&self) -> f64 {
        self.half_sigma2
    }

    fn checked(&self, x: f64) -> Result<f64> {
        if x >= 0.0 {
            Ok(x)
        } else {
            Err(Error::NegativeArgument(x))
        }
    }

    fn checked_positive(&self, d: f64) -> Result<f64> {
        if d > 0.0 {
            Ok(d)
        } else {
            Err(Error::NonPositiveArgument(d))
        }
    }

    pub fn w(&self, x: f64) -> f64 {
        if x > LOG_STABLE_THRESHOLD {
            return self.ln_w(x).exp();
        }
        // e^x·(1 - e^{(γ-1)x}) avoids cancellation near zero.
        self.c_const * x.exp() * -((self.gamma - 1.0) * x).exp_m1()
    }

    pub fn w1(&self, x: f64) -> f64 {
        self.c_const * (x.exp() - self.gamma * (self.gamma * x).exp())
    }

    pub fn w2(&self, x: f64) -> f64 {
        self.c_const * (x.exp() - self.gamma * self.gamma * (self.gamma * x).exp())
    }

    pub fn z(&self, x: f64) -> f64 {
        if x > LOG_STABLE_THRESHOLD {
            return self.ln_z(x).exp();
        }
        ((self.gamma * x).exp() - self.gamma * x.exp()) / (1.0 - self.gamma)
    }

    /// `Z'(x)`, differentiated directly from the closed form of `Z`.
    pub fn z1(&self, x: f64) -> f64 {
        self.gamma * x.exp() * ((self.gamma - 1.0) * x).exp_m1() / (1.0 - self.gamma)
    }

    pub fn eval(&self, x: f64) -> ScaleEval {
        ScaleEval {
            w: self.w(x),
            w1: self.w1(x),
            w2: self.w2(x),
            z: self.z(x),
            z1: self.z1(x),
        }
    }

    /// `ln W(x)`; `-inf` at `x = 0`.
    pub fn ln_w(&self, x: f64) -> f64 {
        if x == 0.0 {
            return f64::NEG_INFINITY;
        }
        let tail = ((self.gamma - 1.0) * x).exp();
        self.c_const.ln() + x + (-tail).ln_1p()
    }

    pub fn ln_z(&self, x: f64) -> f64 {
        let tail = ((self.gamma - 1.0) * x).exp();
        x + (tail - self.gamma).ln() - (1.0 - self.gamma).ln()
    }

    /// `W(x)/W(y)` for `x >= 0`, `y > 0`, through log-differences when
    /// either argument is large.
    pub fn w_ratio(&self, x: f64, y: f64) -> f64 {
        if x.max(y) > LOG_STABLE_THRESHOLD {
            (self.ln_w(x) - self.ln_w(y)).exp()
        } else {
            self.w(x) / self.w(y)
        }
    }

    /// `λ(d) = W'(d)/W(d) = (1 - γ e^{(γ-1)d}) / (1 - e^{(γ-1)d})`.
    pub fn lambda(&self, d: f64) -> f64 {
        let k = (self.gamma - 1.0) * d;
        (1.0 - self.gamma * k.exp()) / -k.exp_m1()
    }

    /// `1 - λ(d) = -(1 - γ) q / (1 - q)` with `q = e^{(γ-1)d}`, free of the
    /// cancellation in `1 - λ` once `λ` rounds to 1.
    pub fn one_minus_lambda(&self, d: f64) -> f64 {
        let k = (self.gamma - 1.0) * d;
        (self.gamma - 1.0) * k.exp() / -k.exp_m1()
    }

    /// `Δ(d) = (σ²/2)(W'(d) - W''(d)/λ(d))`, evaluated in the reduced form
    /// `(1 - γ) e^{γd} / (1 - γ e^{(γ-1)d})`.
    pub fn delta(&self, d: f64) -> f64 {
        let q = ((self.gamma - 1.0) * d).exp();
        (1.0 - self.gamma) * (self.gamma * d).exp() / (1.0 - self.gamma * q)
    }

    /// `Δ(d)` straight from its definition. Loses all accuracy once
    /// `λ(d)` rounds to 1; kept as a cross-check.
    pub fn delta_from_definition(&self, d: f64) -> f64 {
        self.half_sigma2 * (self.w1(d) - self.w2(d) / self.lambda(d))
    }

    /// `(r - σ²/2) f' + (σ²/2) f'' - r f` applied to `W` at `x`.
    pub fn w_generator_residual(&self, x: f64) -> f64 {
        let drift = self.r - self.half_sigma2;
        drift * self.w1(x) + self.half_sigma2 * self.w2(x) - self.r * self.w(x)
    }

    /// Same operator applied to `Z`, using `Z'' = r W'`.
    pub fn z_generator_residual(&self, x: f64) -> f64 {
        let drift = self.r - self.half_sigma2;
        drift * self.z1(x) + self.half_sigma2 * self.r * self.w1(x) - self.r * self.z(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> ModelParams {
        // γ = -1, C = 1: W = 2 sinh, Z = cosh.
        ModelParams::new(0.5, 1.0, 100.0, 2f64.ln()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn gamma_and_c() {
        assert_eq!(gamma(&unit()), -1.0);
        assert_eq!(c_const(&unit()), 1.0);
        let p = ModelParams::new(0.1, 0.2, 100.0, 0.1).unwrap();
        assert!(close(gamma(&p), -5.0, 1e-14));
        assert!(close(c_const(&p), 1.0 / 0.12, 1e-14));
    }

    #[test]
    fn w_is_twice_sinh_for_unit_params() {
        let p = unit();
        for &x in &[0.0, 1e-9, 0.1, 0.5, 1.0, 3.0, 10.0] {
            assert!(close(scale_w(&p, x).unwrap(), 2.0 * f64::sinh(x), 1e-14), "x={x}");
        }
        assert!(close(scale_w(&p, 2f64.ln()).unwrap(), 1.5, 1e-15));
        assert_eq!(scale_w(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn w_derivatives_for_unit_params() {
        let p = unit();
        let c = 2f64.ln();
        let (w1, w2) = scale_w_derivs(&p, c).unwrap();
        assert!(close(w1, 2.0 * c.cosh(), 1e-15));
        assert!(close(w2, 2.0 * c.sinh(), 1e-14));
        let q = ModelParams::new(0.1, 0.2, 100.0, 0.1).unwrap();
        let (w1, _) = scale_w_derivs(&q, 0.0).unwrap();
        assert!(close(w1, c_const(&q) * (1.0 - gamma(&q)), 1e-15));
    }

    #[test]
    fn w1_matches_central_difference() {
        let p = ModelParams::new(0.1, 0.2, 100.0, 0.1).unwrap();
        let h = 1e-5;
        for &x in &[0.01, 0.1, 0.5, 1.0, 2.0] {
            let fd = (scale_w(&p, x + h).unwrap() - scale_w(&p, x - h).unwrap()) / (2.0 * h);
            let (w1, _) = scale_w_derivs(&p, x).unwrap();
            assert!(close(fd, w1, 1e-8), "x={x}: fd={fd} w1={w1}");
        }
    }

    #[test]
    fn z_is_cosh_for_unit_params() {
        let p = unit();
        for &x in &[0.0, 0.3, 1.0, 4.0] {
            assert!(close(scale_z(&p, x).unwrap(), x.cosh(), 1e-14));
        }
        assert_eq!(scale_z(&p, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        let p = unit();
        assert!(matches!(scale_w(&p, -1e-3), Err(Error::NegativeArgument(_))));
        assert!(scale_w_derivs(&p, -1.0).is_err());
        assert!(scale_z(&p, -1.0).is_err());
        assert!(matches!(lambda_c(&p, 0.0), Err(Error::NonPositiveArgument(_))));
        assert!(delta_c(&p, -0.5).is_err());
    }

    #[test]
    fn lambda_and_delta_for_unit_params() {
        let p = unit();
        let d = 2f64.ln();
        assert!(close(lambda_c(&p, d).unwrap(), 5.0 / 3.0, 1e-15));
        assert!(close(delta_c(&p, d).unwrap(), 0.8, 1e-14));
        for &d in &[0.05, 0.7, 2.0] {
            assert!(close(lambda_c(&p, d).unwrap(), 1.0 / d.tanh(), 1e-14));
            assert!(close(delta_c(&p, d).unwrap(), 1.0 / d.cosh(), 1e-13));
        }
    }

    #[test]
    fn z1_equals_r_w() {
        let p = ModelParams::new(0.07, 0.35, 100.0, 0.1).unwrap();
        let sf = ScaleFunctions::new(&p);
        for i in 0..50 {
            let x = i as f64 * 0.1;
            let e = sf.eval(x);
            assert!(close(e.z1, p.r * e.w, 1e-14), "x={x}");
        }
    }

    #[test]
    fn log_stabilized_branch_agrees_and_extends() {
        let p = ModelParams::new(0.1, 0.3, 100.0, 0.1).unwrap();
        let sf = ScaleFunctions::new(&p);
        let x = 400.0;
        assert!(close(sf.ln_w(x).exp(), sf.w(x), 1e-12));
        assert!(close(sf.ln_z(x).exp(), sf.z(x), 1e-12));
        // Beyond e^709 the values overflow but their ratios stay finite.
        let ratio = sf.w_ratio(800.0, 801.0);
        assert!(close(ratio, (-1.0f64).exp(), 1e-12));
        assert!(sf.lambda(800.0).is_finite());
        assert!(sf.delta(800.0).is_finite());
        assert!(close(sf.delta(501.0), (1.0 - sf.gamma()) * (sf.gamma() * 501.0).exp(), 1e-9));
        assert!(sf.one_minus_lambda(800.0).is_finite());
    }

    #[test]
    fn reduced_delta_matches_definition() {
        let p = ModelParams::new(0.1, 0.2, 100.0, 0.3).unwrap();
        let sf = ScaleFunctions::new(&p);
        for &d in &[0.01, 0.1, 0.18, 0.5, 1.0] {
            assert!(close(sf.delta(d), sf.delta_from_definition(d), 1e-10), "d={d}");
            assert!(close(sf.one_minus_lambda(d), 1.0 - sf.lambda(d), 1e-10), "d={d}");
        }
    }

    #[test]
    fn generator_annihilates_w_and_z() {
        let p = ModelParams::new(0.1, 0.2, 100.0, 0.1).unwrap();
        let sf = ScaleFunctions::new(&p);
        for i in 0..100 {
            let x = i as f64 * 0.05;
            let scale = sf.w1(x).abs() + sf.w(x).abs();
            assert!(sf.w_generator_residual(x).abs() <= 1e-12 * scale);
            assert!(sf.z_generator_residual(x).abs() <= 1e-12 * (sf.z(x) + scale));
        }
    }
}
