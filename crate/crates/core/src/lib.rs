//! Pricing engine for the perpetual American put whose life is capped by the
//! first drawdown of the underlying beyond a fixed relative level.
//!
//! The log-price follows `X_t = x + (r - σ²/2) t + σ B_t`. The contract is
//! terminated the first time `max(x̄, sup X) - X_t >= c`; the holder may
//! exercise earlier. The crate is organised as
//!
//! - [`scale_fn`]: closed-form scale functions `W`, `Z` of the drifted
//!   Brownian motion and the derived quantities `γ`, `C`, `λ`, `Δ`;
//! - [`pricing`]: the optimal log-barrier `a*` and the regime-dispatched
//!   value function;
//! - [`mc`]: an independent Monte Carlo estimator under arbitrary barrier
//!   policies;
//! - [`verification`]: numerical certification (HJB residuals, smooth paste,
//!   normal reflection, identities, Monte Carlo agreement).

pub mod error;
pub mod mc;
pub mod params;
pub mod pricing;
pub mod scale_fn;
pub mod verification;

pub use error::{Error, Result};
pub use mc::{mc_price, McConfig, McEstimate, Policy};
pub use params::{MarketState, ModelParams};
pub use pricing::{price, PriceBreakdown, Pricer, Regime};
pub use scale_fn::ScaleFunctions;
