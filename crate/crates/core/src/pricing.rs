//! Optimal exercise barrier and closed-form value function.
//!
//! Below `x̄ < a* + c` the holder exercises at the fixed log-barrier `a*`
//! (unless the drawdown fires first, which it cannot before `x̄` grows past
//! `a* + c`). Above that, the drawdown barrier `x̄ - c` sits above `a*` and the
//! option simply runs until the drawdown epoch. Once `x̄ >= log K + c` the
//! payoff at the drawdown epoch is zero and the option is worth its
//! immediate payoff.
//!
//! ```text
//! ContinuationLowMax:   V = V1 + V2 (V3 + V4 V5)
//! ContinuationHighMax:  V = V6 + V7 V8
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{MarketState, ModelParams};
use crate::scale_fn::ScaleFunctions;

/// Rounding allowance on the geometry checks of the individual components,
/// so that boundary points computed as `x̄ - c` are accepted.
const GEOMETRY_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `x̄ - x >= c`: the contract has already terminated.
    DrawdownTriggered,
    /// `x <= a*` with `x̄ < a* + c`: exercise now.
    StoppedAtBarrier,
    /// `a* < x`, `x̄ < a* + c`.
    ContinuationLowMax,
    /// `a* + c <= x̄ < log K + c`.
    ContinuationHighMax,
    /// `x̄ >= log K + c`: nothing left to collect at the drawdown epoch.
    ExhaustedMax,
}

impl Regime {
    pub const ALL: [Regime; 5] = [
        Regime::DrawdownTriggered,
        Regime::StoppedAtBarrier,
        Regime::ContinuationLowMax,
        Regime::ContinuationHighMax,
        Regime::ExhaustedMax,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::DrawdownTriggered => "drawdown_triggered",
            Regime::StoppedAtBarrier => "stopped_at_barrier",
            Regime::ContinuationLowMax => "continuation_low_max",
            Regime::ContinuationHighMax => "continuation_high_max",
            Regime::ExhaustedMax => "exhausted_max",
        }
    }

    pub fn is_continuation(&self) -> bool {
        matches!(
            self,
            Regime::ContinuationLowMax | Regime::ContinuationHighMax
        )
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Value-function components of whichever branch applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Components {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v4: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v5: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v6: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v7: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v8: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceBreakdown {
    pub value: f64,
    pub regime: Regime,
    pub a_star: f64,
    pub components: Components,
}

/// `(K - e^x)^+`.
pub fn payoff(params: &ModelParams, x: f64) -> f64 {
    (params.strike_k - x.exp()).max(0.0)
}

/// The optimal exercise log-barrier
/// `a* = log K + (W(c)/W'(c)) · log(γ(e^{γc} - e^c) / ((1-γ)e^c))`.
pub fn optimal_barrier(params: &ModelParams) -> f64 {
    barrier_from_scale(params, &ScaleFunctions::new(params))
}

fn barrier_from_scale(params: &ModelParams, sf: &ScaleFunctions) -> f64 {
    let g = sf.gamma();
    let c = params.c;
    // γ(e^{γc} - e^c)/((1-γ)e^c) = (-γ/(1-γ)) · (1 - e^{(γ-1)c}) ∈ (0, 1)
    let ln_base = (-g).ln() - (1.0 - g).ln() + (-((g - 1.0) * c).exp_m1()).ln();
    params.log_strike() + ln_base / sf.lambda(c)
}

pub fn classify_regime(params: &ModelParams, state: &MarketState) -> Result<Regime> {
    Pricer::new(params)?.classify(state)
}

pub fn price(params: &ModelParams, state: &MarketState) -> Result<PriceBreakdown> {
    Pricer::new(params)?.price(state)
}

/// Closed-form pricer for one parameter set.
///
/// Caches `a*`, `λ(c)`, `Δ(c)`, `W(c)`, `Z(c)` and `V5`. The barrier and the
/// scale-function exponent can be overridden to build deliberately wrong
/// pricers for power checks.
#[derive(Debug, Clone, Copy)]
pub struct Pricer {
    params: ModelParams,
    sf: ScaleFunctions,
    barrier: f64,
    lambda: f64,
    delta: f64,
    w_c: f64,
    z_c: f64,
    v5: f64,
}

impl Pricer {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let sf = ScaleFunctions::new(params);
        Ok(Self::assemble(params, sf, barrier_from_scale(params, &sf)))
    }

    /// Prices with an arbitrary exercise barrier in place of `a*`.
    pub fn with_barrier(params: &ModelParams, barrier: f64) -> Result<Self> {
        params.validate()?;
        if !barrier.is_finite() {
            return Err(Error::InvalidParams(format!("barrier must be finite, got {barrier}")));
        }
        Ok(Self::assemble(params, ScaleFunctions::new(params), barrier))
    }

    /// Builds every ingredient, barrier included, from scale functions with
    /// exponent `gamma` instead of `-2r/σ²`.
    pub fn with_gamma(params: &ModelParams, gamma: f64) -> Result<Self> {
        params.validate()?;
        if !(gamma.is_finite() && gamma < 0.0) {
            return Err(Error::InvalidParams(format!("gamma must be < 0, got {gamma}")));
        }
        let sf = ScaleFunctions::with_gamma(params, gamma);
        Ok(Self::assemble(params, sf, barrier_from_scale(params, &sf)))
    }

    /// Replaces the cached `Z(c)` used by `V3` and `V6`.
    pub fn with_z_at_c(mut self, z_c: f64) -> Self {
        self.z_c = z_c;
        self
    }

    fn assemble(params: &ModelParams, sf: ScaleFunctions, barrier: f64) -> Self {
        let c = params.c;
        let mut pricer = Self {
            params: *params,
            sf,
            barrier,
            lambda: sf.lambda(c),
            delta: sf.delta(c),
            w_c: sf.w(c),
            z_c: sf.z(c),
            v5: 0.0,
        };
        pricer.v5 = pricer.v5_value();
        pricer
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn scale(&self) -> &ScaleFunctions {
        &self.sf
    }

    /// The exercise barrier in use (`a*` unless overridden).
    pub fn barrier(&self) -> f64 {
        self.barrier
    }

    pub fn lambda_c(&self) -> f64 {
        self.lambda
    }

    pub fn delta_c(&self) -> f64 {
        self.delta
    }

    /// Boundary ties: `x̄ - x = c` is `DrawdownTriggered`, `x = a*` is
    /// `StoppedAtBarrier`, `x̄ = a* + c` is `ContinuationHighMax` and
    /// `x̄ = log K + c` is `ExhaustedMax`.
    pub fn classify(&self, state: &MarketState) -> Result<Regime> {
        state.validate()?;
        let c = self.params.c;
        let regime = if state.x_bar - state.x >= c {
            Regime::DrawdownTriggered
        } else if state.x_bar >= self.params.log_strike() + c {
            Regime::ExhaustedMax
        } else if state.x_bar >= self.barrier + c {
            Regime::ContinuationHighMax
        } else if state.x <= self.barrier {
            Regime::StoppedAtBarrier
        } else {
            Regime::ContinuationLowMax
        };
        Ok(regime)
    }

    pub fn price(&self, state: &MarketState) -> Result<PriceBreakdown> {
        let regime = self.classify(state)?;
        let (value, components) = match regime {
            Regime::DrawdownTriggered | Regime::StoppedAtBarrier | Regime::ExhaustedMax => {
                (payoff(&self.params, state.x), Components::default())
            }
            Regime::ContinuationLowMax => {
                let (v1, v2) = (self.v1_raw(state), self.v2_raw(state));
                let (v3, v4) = (self.v3_raw(state.x_bar), self.v4_raw(state.x_bar));
                let v5 = self.v5;
                let comps = Components {
                    v1: Some(v1),
                    v2: Some(v2),
                    v3: Some(v3),
                    v4: Some(v4),
                    v5: Some(v5),
                    ..Components::default()
                };
                (v1 + v2 * (v3 + v4 * v5), comps)
            }
            Regime::ContinuationHighMax => {
                let (v6, v7, v8) = (self.v6_raw(state), self.v7_raw(state), self.v8_raw(state.x_bar));
                let comps = Components {
                    v6: Some(v6),
                    v7: Some(v7),
                    v8: Some(v8),
                    ..Components::default()
                };
                (v6 + v7 * v8, comps)
            }
        };
        Ok(PriceBreakdown {
            value,
            regime,
            a_star: self.barrier,
            components,
        })
    }

    /// Price only; panics never, errors on states outside the domain.
    pub fn value(&self, state: &MarketState) -> Result<f64> {
        self.price(state).map(|b| b.value)
    }

    /// Convenience for finite-difference stencils: `value` at `(x, x̄)`.
    pub fn value_at(&self, x: f64, x_bar: f64) -> Result<f64> {
        self.value(&MarketState { x, x_bar })
    }

    fn check_low_max_x_bar(&self, component: &'static str, x_bar: f64) -> Result<()> {
        let a = self.barrier;
        if a - GEOMETRY_SLACK <= x_bar && x_bar < a + self.params.c {
            Ok(())
        } else {
            Err(Error::Geometry {
                component,
                reason: format!("need a* <= x_bar < a* + c (a* = {a}, x_bar = {x_bar})"),
            })
        }
    }

    fn check_low_max(&self, component: &'static str, state: &MarketState) -> Result<()> {
        state.validate()?;
        self.check_low_max_x_bar(component, state.x_bar)?;
        if state.x < self.barrier - GEOMETRY_SLACK {
            return Err(Error::Geometry {
                component,
                reason: format!("need x >= a* (a* = {}, x = {})", self.barrier, state.x),
            });
        }
        Ok(())
    }

    fn check_high_max_x_bar(&self, component: &'static str, x_bar: f64) -> Result<()> {
        let c = self.params.c;
        let upper = self.params.log_strike() + c;
        if self.barrier + c - GEOMETRY_SLACK <= x_bar && x_bar < upper {
            Ok(())
        } else {
            Err(Error::Geometry {
                component,
                reason: format!(
                    "need a* + c <= x_bar < log K + c (a* + c = {}, log K + c = {upper}, x_bar = {x_bar})",
                    self.barrier + c
                ),
            })
        }
    }

    fn check_high_max(&self, component: &'static str, state: &MarketState) -> Result<()> {
        state.validate()?;
        self.check_high_max_x_bar(component, state.x_bar)?;
        if state.x_bar - state.x > self.params.c + GEOMETRY_SLACK {
            return Err(Error::Geometry {
                component,
                reason: format!("need x >= x_bar - c (drawdown {})", state.drawdown()),
            });
        }
        Ok(())
    }

    fn exercise_gain(&self) -> f64 {
        self.params.strike_k - self.barrier.exp()
    }

    /// Discounted payoff collected at `a*` before `x̄` is revisited.
    pub fn v1(&self, state: &MarketState) -> Result<f64> {
        self.check_low_max("V1", state)?;
        Ok(self.v1_raw(state))
    }

    /// Laplace transform of the time to revisit `x̄` before hitting `a*`.
    pub fn v2(&self, state: &MarketState) -> Result<f64> {
        self.check_low_max("V2", state)?;
        Ok(self.v2_raw(state))
    }

    pub fn v3(&self, x_bar: f64) -> Result<f64> {
        self.check_low_max_x_bar("V3", x_bar)?;
        Ok(self.v3_raw(x_bar))
    }

    pub fn v4(&self, x_bar: f64) -> Result<f64> {
        self.check_low_max_x_bar("V4", x_bar)?;
        Ok(self.v4_raw(x_bar))
    }

    /// Value at `(a* + c, a* + c)` of running until the drawdown epoch.
    pub fn v5(&self) -> f64 {
        self.v5
    }

    pub fn v6(&self, state: &MarketState) -> Result<f64> {
        self.check_high_max("V6", state)?;
        Ok(self.v6_raw(state))
    }

    pub fn v7(&self, state: &MarketState) -> Result<f64> {
        self.check_high_max("V7", state)?;
        Ok(self.v7_raw(state))
    }

    pub fn v8(&self, x_bar: f64) -> Result<f64> {
        self.check_high_max_x_bar("V8", x_bar)?;
        Ok(self.v8_raw(x_bar))
    }

    fn v1_raw(&self, state: &MarketState) -> f64 {
        let a = self.barrier;
        let (u, m) = (state.x - a, state.x_bar - a);
        if m == 0.0 {
            return 0.0;
        }
        self.exercise_gain() * (self.sf.z(u) - self.sf.z(m) * self.sf.w_ratio(u, m))
    }

    fn v2_raw(&self, state: &MarketState) -> f64 {
        let a = self.barrier;
        let m = state.x_bar - a;
        if m == 0.0 {
            return 1.0;
        }
        self.sf.w_ratio(state.x - a, m)
    }

    fn v3_raw(&self, x_bar: f64) -> f64 {
        let m = x_bar - self.barrier;
        self.exercise_gain() * (self.sf.z(m) - self.z_c * self.sf.w_ratio(m, self.params.c))
    }

    fn v4_raw(&self, x_bar: f64) -> f64 {
        self.sf.w_ratio(x_bar - self.barrier, self.params.c)
    }

    fn v5_value(&self) -> f64 {
        let (k, a, lam) = (self.params.strike_k, self.barrier, self.lambda);
        let tail = (-lam * (self.params.log_strike() - a)).exp();
        let one_minus = self.sf.one_minus_lambda(self.params.c);
        self.delta * (k * (1.0 - tail / one_minus) + lam * a.exp() / one_minus)
    }

    fn v6_raw(&self, state: &MarketState) -> f64 {
        let c = self.params.c;
        let y = state.x + c - state.x_bar;
        let gain = self.params.strike_k - (state.x_bar - c).exp();
        gain * (self.sf.z(y) - self.z_c * self.sf.w_ratio(y, c))
    }

    fn v7_raw(&self, state: &MarketState) -> f64 {
        let c = self.params.c;
        self.sf.w_ratio(state.x + c - state.x_bar, c)
    }

    fn v8_raw(&self, x_bar: f64) -> f64 {
        let (k, c) = (self.params.strike_k, self.params.c);
        let decay = (self.lambda * (x_bar - self.params.log_strike() - c)).exp();
        self.delta * k - x_bar.exp() + k * decay * (c.exp() - self.delta)
    }

    /// `W(c)`, cached.
    pub fn w_c(&self) -> f64 {
        self.w_c
    }

    /// `Z(c)`, cached.
    pub fn z_c(&self) -> f64 {
        self.z_c
    }
}
