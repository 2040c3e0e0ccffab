use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drawdown thresholds below this are rejected: `λ(c, r)` diverges as
/// `c -> 0` and the contract degenerates to immediate termination.
pub const MIN_LOG_DRAWDOWN: f64 = 1e-6;

/// Market and contract constants.
///
/// `c` is the log drawdown level: the option terminates once
/// `x̄_t - x_t >= c`, i.e. once the relative drawdown reaches `e^c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub r: f64,
    pub sigma: f64,
    pub strike_k: f64,
    pub c: f64,
}

impl ModelParams {
    pub fn new(r: f64, sigma: f64, strike_k: f64, c: f64) -> Result<Self> {
        let params = Self {
            r,
            sigma,
            strike_k,
            c,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from the relative drawdown level `e^c` rather than `c`.
    pub fn with_drawdown_ratio(r: f64, sigma: f64, strike_k: f64, ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 1.0) {
            return Err(Error::InvalidParams(format!(
                "drawdown ratio e^c must be finite and > 1, got {ratio}"
            )));
        }
        Self::new(r, sigma, strike_k, ratio.ln())
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParams(format!(
                    "{name} must be finite and > 0, got {v}"
                )))
            }
        };
        check("r", self.r)?;
        check("sigma", self.sigma)?;
        check("strike K", self.strike_k)?;
        check("c", self.c)?;
        if self.c < MIN_LOG_DRAWDOWN {
            return Err(Error::InvalidParams(format!(
                "c must be >= {MIN_LOG_DRAWDOWN}, got {}",
                self.c
            )));
        }
        Ok(())
    }

    /// Figure-1 calibration: `r = 0.1`, `σ = 0.2`, `e^c = 1.2`, `K = 100`.
    pub fn figure1() -> Self {
        Self {
            r: 0.1,
            sigma: 0.2,
            strike_k: 100.0,
            c: 1.2f64.ln(),
        }
    }

    pub fn log_strike(&self) -> f64 {
        self.strike_k.ln()
    }

    pub fn drift(&self) -> f64 {
        self.r - 0.5 * self.sigma * self.sigma
    }
}

/// Current log-price `x` and running log-maximum `x_bar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    pub x: f64,
    pub x_bar: f64,
}

impl MarketState {
    pub fn new(x: f64, x_bar: f64) -> Result<Self> {
        let state = Self { x, x_bar };
        state.validate()?;
        Ok(state)
    }

    /// Builds a state from the spot `S_0` and historical maximum `S̄_0`.
    pub fn from_prices(spot: f64, running_max: f64) -> Result<Self> {
        if !(spot > 0.0 && running_max > 0.0) {
            return Err(Error::InvalidParams(format!(
                "prices must be > 0, got spot {spot} and running max {running_max}"
            )));
        }
        Self::new(spot.ln(), running_max.ln())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x.is_finite() && self.x_bar.is_finite()) || self.x > self.x_bar {
            return Err(Error::InvalidState {
                x: self.x,
                x_bar: self.x_bar,
            });
        }
        Ok(())
    }

    pub fn drawdown(&self) -> f64 {
        self.x_bar - self.x
    }
}
