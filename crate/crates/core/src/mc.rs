//! Monte Carlo estimator of the capped put under a barrier exercise policy.
//!
//! Log-prices are simulated exactly at grid times `k·dt` (Gaussian
//! increments with mean `(r - σ²/2)dt` and variance `σ²dt`). The running
//! maximum and both stopping rules are monitored on the grid only, so the
//! drawdown is detected late and the estimate is biased upwards by
//! `O(σ√dt)`.
//!
//! Each path owns a ChaCha8 stream selected by its index, so a path depends
//! only on `(base_seed, path_index)`. Paths are reduced in fixed-size blocks
//! whose partial statistics are merged in index order; the result does not
//! depend on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{MarketState, ModelParams};
use crate::pricing::optimal_barrier;

const BLOCK: u64 = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub n_paths: u64,
    pub dt: f64,
    pub t_max: f64,
    pub base_seed: u64,
}

impl McConfig {
    pub fn new(n_paths: u64, dt: f64, t_max: f64, base_seed: u64) -> Result<Self> {
        let cfg = Self {
            n_paths,
            dt,
            t_max,
            base_seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Horizon chosen so that `e^{-r t_max} K < rel_tol · K`.
    pub fn with_discount_tolerance(
        params: &ModelParams,
        n_paths: u64,
        dt: f64,
        rel_tol: f64,
        base_seed: u64,
    ) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(Error::InvalidMcConfig(format!(
                "discount tolerance must lie in (0, 1), got {rel_tol}"
            )));
        }
        // One extra step keeps the bound strict after rounding to the grid.
        let t_max = -rel_tol.ln() / params.r + dt;
        Self::new(n_paths, dt, t_max, base_seed)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths == 0 {
            return Err(Error::InvalidMcConfig("n_paths must be positive".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidMcConfig(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidMcConfig(format!(
                "t_max must be > 0, got {}",
                self.t_max
            )));
        }
        if self.horizon_steps() > u32::MAX as u64 {
            return Err(Error::InvalidMcConfig("t_max / dt exceeds 2^32 steps".into()));
        }
        Ok(())
    }

    /// Number of grid steps before truncation, `ceil(t_max / dt)`.
    pub fn horizon_steps(&self) -> u64 {
        (self.t_max / self.dt).ceil() as u64
    }

    /// `e^{-r T} K` for the effective horizon `T = horizon_steps · dt`.
    pub fn truncation_bound(&self, params: &ModelParams) -> f64 {
        (-params.r * self.horizon_steps() as f64 * self.dt).exp() * params.strike_k
    }
}

/// Exercise rule simulated alongside the drawdown cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "barrier", rename_all = "snake_case")]
pub enum Policy {
    /// Exercise the first time `x_t <= a`.
    FixedBarrier(f64),
    /// Exercise only at the moving barrier `x̄_t - c`, i.e. hold until the
    /// drawdown epoch.
    DrawdownOnly,
}

impl Policy {
    /// The optimal rule: fixed barrier at `a*`.
    pub fn optimal(params: &ModelParams) -> Self {
        Policy::FixedBarrier(optimal_barrier(params))
    }

    fn barrier(&self) -> f64 {
        match *self {
            Policy::FixedBarrier(a) => a,
            Policy::DrawdownOnly => f64::NEG_INFINITY,
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            Policy::FixedBarrier(a) => format!("fixed log-barrier a = {a:.17e}"),
            Policy::DrawdownOnly => "moving barrier x_bar - c (drawdown only)".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Barrier,
    Drawdown,
    HorizonTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopOutcome {
    pub time: f64,
    pub x: f64,
    pub reason: StopReason,
}

impl StopOutcome {
    pub fn discounted_payoff(&self, params: &ModelParams) -> f64 {
        (-params.r * self.time).exp() * (params.strike_k - self.x.exp()).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`; absent for a single path.
    pub stderr: Option<f64>,
    pub n_effective: u64,
    pub n_truncated: u64,
    pub truncation_bound: f64,
    pub dt: f64,
    pub t_max: f64,
    pub base_seed: u64,
    pub policy: String,
}

/// Per-path standard normal stream.
pub struct PathRng(ChaCha8Rng);

impl PathRng {
    pub fn new(base_seed: u64, path_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(path_index);
        Self(rng)
    }

    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.0.sample(StandardNormal)
    }
}

/// The first `n` log-price increments of path `path_index`.
pub fn path_increments(params: &ModelParams, cfg: &McConfig, path_index: u64, n: usize) -> Vec<f64> {
    let (mu, sd) = step_moments(params, cfg.dt);
    let mut rng = PathRng::new(cfg.base_seed, path_index);
    (0..n).map(|_| mu + sd * rng.normal()).collect()
}

fn step_moments(params: &ModelParams, dt: f64) -> (f64, f64) {
    (params.drift() * dt, params.sigma * dt.sqrt())
}

/// One monitoring rule attached to a driving path: a barrier observed every
/// `stride` fine steps with its own horizon.
#[derive(Debug, Clone, Copy)]
struct Observer {
    stride: u64,
    barrier: f64,
    horizon: u64,
}

/// Runs one fine-grid path and reports the stop of every observer.
///
/// Observers with stride `s` see the path at times `k·s·dt`; their increments
/// are sums of `s` fine Gaussian increments, hence exact at the coarse grid.
fn drive_path(
    params: &ModelParams,
    state: &MarketState,
    dt: f64,
    base_seed: u64,
    path_index: u64,
    observers: &[Observer],
    out: &mut [StopOutcome],
) {
    let c = params.c;
    let mut live = 0usize;
    let mut maxima = [0.0f64; 16];
    let mut alive = [false; 16];
    debug_assert!(observers.len() <= 16);
    for (i, ob) in observers.iter().enumerate() {
        if state.x_bar - state.x >= c {
            out[i] = StopOutcome { time: 0.0, x: state.x, reason: StopReason::Drawdown };
        } else if state.x <= ob.barrier {
            out[i] = StopOutcome { time: 0.0, x: state.x, reason: StopReason::Barrier };
        } else {
            maxima[i] = state.x_bar;
            alive[i] = true;
            live += 1;
        }
    }
    if live == 0 {
        return;
    }

    let (mu, sd) = step_moments(params, dt);
    let mut rng = PathRng::new(base_seed, path_index);
    let mut x = state.x;
    let mut step = 0u64;

    if let [ob] = observers {
        // Single observer on the fine grid: the hot path of `mc_price`.
        let (barrier, horizon) = (ob.barrier, ob.horizon);
        let mut m = maxima[0];
        assert_eq!(ob.stride, 1);
        loop {
            step += 1;
            x += mu + sd * rng.normal();
            m = m.max(x);
            let reason = if m - x >= c {
                StopReason::Drawdown
            } else if x <= barrier {
                StopReason::Barrier
            } else if step >= horizon {
                StopReason::HorizonTruncated
            } else {
                continue;
            };
            out[0] = StopOutcome { time: step as f64 * dt, x, reason };
            return;
        }
    }

    let mut due = [0u64; 16];
    for (d, ob) in due.iter_mut().zip(observers) {
        *d = ob.stride;
    }
    while live > 0 {
        step += 1;
        x += mu + sd * rng.normal();
        for (i, ob) in observers.iter().enumerate() {
            if !alive[i] || step != due[i] {
                continue;
            }
            due[i] += ob.stride;
            maxima[i] = maxima[i].max(x);
            let reason = if maxima[i] - x >= c {
                StopReason::Drawdown
            } else if x <= ob.barrier {
                StopReason::Barrier
            } else if step >= ob.horizon {
                StopReason::HorizonTruncated
            } else {
                continue;
            };
            out[i] = StopOutcome { time: step as f64 * dt, x, reason };
            alive[i] = false;
            live -= 1;
        }
    }
}

/// First grid time at which the policy barrier or the drawdown cap fires.
pub fn simulate_stop(
    params: &ModelParams,
    state: &MarketState,
    policy: Policy,
    cfg: &McConfig,
    path_index: u64,
) -> StopOutcome {
    let ob = Observer { stride: 1, barrier: policy.barrier(), horizon: cfg.horizon_steps() };
    let mut out = [StopOutcome { time: 0.0, x: state.x, reason: StopReason::Drawdown }];
    drive_path(params, state, cfg.dt, cfg.base_seed, path_index, &[ob], &mut out);
    out[0]
}

/// Mean/variance accumulator merged with Chan's update.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
    truncated: u64,
}

impl Moments {
    fn from_values(values: &[f64], truncated: u64) -> Self {
        let n = values.len() as u64;
        if n == 0 {
            return Self::default();
        }
        let mean = neumaier_sum(values.iter().copied()) / n as f64;
        let m2 = neumaier_sum(values.iter().map(|v| (v - mean) * (v - mean)));
        Self { n, mean, m2, truncated }
    }

    fn merge(self, other: Self) -> Self {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let mean = self.mean + delta * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64) / n as f64;
        Self { n, mean, m2, truncated: self.truncated + other.truncated }
    }

    fn stderr(&self) -> Option<f64> {
        (self.n > 1).then(|| (self.m2 / (self.n - 1) as f64).sqrt() / (self.n as f64).sqrt())
    }
}

fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Simulates all paths against every observer and reduces per observer.
fn run_observers(
    params: &ModelParams,
    state: &MarketState,
    cfg: &McConfig,
    observers: &[Observer],
) -> Vec<Moments> {
    let n_blocks = cfg.n_paths.div_ceil(BLOCK);
    let k = observers.len();
    let blocks: Vec<Vec<Moments>> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK;
            let end = (start + BLOCK).min(cfg.n_paths);
            let len = (end - start) as usize;
            let mut values = vec![Vec::with_capacity(len); k];
            let mut truncated = vec![0u64; k];
            let mut out = vec![StopOutcome { time: 0.0, x: state.x, reason: StopReason::Drawdown }; k];
            for path in start..end {
                drive_path(params, state, cfg.dt, cfg.base_seed, path, observers, &mut out);
                for (i, o) in out.iter().enumerate() {
                    values[i].push(o.discounted_payoff(params));
                    truncated[i] += (o.reason == StopReason::HorizonTruncated) as u64;
                }
            }
            values
                .iter()
                .zip(&truncated)
                .map(|(v, &t)| Moments::from_values(v, t))
                .collect()
        })
        .collect();
    (0..k)
        .map(|i| blocks.iter().fold(Moments::default(), |acc, b| acc.merge(b[i])))
        .collect()
}

fn estimate(params: &ModelParams, cfg: &McConfig, dt: f64, t_max: f64, policy: Policy, m: Moments) -> McEstimate {
    McEstimate {
        mean: m.mean,
        stderr: m.stderr(),
        n_effective: m.n,
        n_truncated: m.truncated,
        truncation_bound: (-params.r * t_max).exp() * params.strike_k,
        dt,
        t_max,
        base_seed: cfg.base_seed,
        policy: policy.describe(),
    }
}

fn check_inputs(params: &ModelParams, state: &MarketState, cfg: &McConfig) -> Result<()> {
    params.validate()?;
    state.validate()?;
    cfg.validate()
}

/// Monte Carlo value of `E[e^{-rτ}(K - e^{X_τ})^+]` for the policy stop `τ`
/// capped by the drawdown epoch. Truncated paths keep their discounted
/// payoff at `t_max`.
pub fn mc_price(params: &ModelParams, state: &MarketState, policy: Policy, cfg: &McConfig) -> Result<McEstimate> {
    check_inputs(params, state, cfg)?;
    let ob = Observer { stride: 1, barrier: policy.barrier(), horizon: cfg.horizon_steps() };
    let m = run_observers(params, state, cfg, &[ob])[0];
    let horizon = cfg.horizon_steps() as f64 * cfg.dt;
    Ok(estimate(params, cfg, cfg.dt, horizon, policy, m))
}

/// Estimates on the grids `dt·s` for each stride `s`, all driven by the same
/// fine Brownian paths. Stride 1 reproduces [`mc_price`] exactly.
pub fn mc_price_coupled(
    params: &ModelParams,
    state: &MarketState,
    policy: Policy,
    cfg: &McConfig,
    strides: &[u64],
) -> Result<Vec<McEstimate>> {
    check_inputs(params, state, cfg)?;
    if strides.is_empty() || strides.len() > 16 || strides.contains(&0) {
        return Err(Error::InvalidGrid("need 1 to 16 positive strides".into()));
    }
    let observers: Vec<Observer> = strides
        .iter()
        .map(|&s| {
            let coarse = cfg.dt * s as f64;
            let steps = (cfg.t_max / coarse).ceil() as u64;
            Observer { stride: s, barrier: policy.barrier(), horizon: steps * s }
        })
        .collect();
    let moments = run_observers(params, state, cfg, &observers);
    Ok(observers
        .iter()
        .zip(moments)
        .map(|(ob, m)| {
            let t_max = ob.horizon as f64 * cfg.dt;
            estimate(params, cfg, cfg.dt * ob.stride as f64, t_max, policy, m)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierSearch {
    pub best_barrier: f64,
    /// `(barrier, estimate)` in grid order.
    pub value_curve: Vec<(f64, McEstimate)>,
}

/// Grid argmax of the Monte Carlo value over fixed exercise barriers.
///
/// All candidates see the same paths (common random numbers), so
/// differences along the curve are far less noisy than each estimate.
pub fn barrier_search(
    params: &ModelParams,
    state: &MarketState,
    cfg: &McConfig,
    grid: &[f64],
) -> Result<BarrierSearch> {
    check_inputs(params, state, cfg)?;
    if grid.is_empty() {
        return Err(Error::InvalidGrid("barrier grid is empty".into()));
    }
    let upper = state.x.min(params.log_strike());
    if let Some(bad) = grid.iter().find(|&&a| !(a < upper)) {
        return Err(Error::InvalidGrid(format!(
            "candidate barrier {bad} is not below min(x, log K) = {upper}"
        )));
    }
    let horizon = cfg.horizon_steps();
    let t_max = horizon as f64 * cfg.dt;
    let mut value_curve = Vec::with_capacity(grid.len());
    for chunk in grid.chunks(16) {
        let observers: Vec<Observer> = chunk
            .iter()
            .map(|&a| Observer { stride: 1, barrier: a, horizon })
            .collect();
        let moments = run_observers(params, state, cfg, &observers);
        for (&a, m) in chunk.iter().zip(moments) {
            value_curve.push((a, estimate(params, cfg, cfg.dt, t_max, Policy::FixedBarrier(a), m)));
        }
    }
    let best_barrier = value_curve
        .iter()
        .fold(None::<(f64, f64)>, |best, (a, e)| match best {
            Some((_, v)) if v >= e.mean => best,
            _ => Some((*a, e.mean)),
        })
        .map(|(a, _)| a)
        .expect("grid is non-empty");
    Ok(BarrierSearch { best_barrier, value_curve })
}
