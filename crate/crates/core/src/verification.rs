//! Numerical certification of the closed-form value function.
//!
//! Each check returns a [`CheckReport`]. Composite checks carry their
//! sub-checks in `parts`; their own residual is then the worst
//! `residual / tolerance` ratio over the parts and their tolerance is 1.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{mc_price_coupled, McConfig, McEstimate, Policy};
use crate::params::{MarketState, ModelParams};
use crate::pricing::{payoff, Pricer, Regime};
use crate::scale_fn::ScaleFunctions;

/// Central-difference step of the HJB check.
pub const HJB_STEP: f64 = 1e-4;
/// Steps of the convergence-order study.
pub const HJB_ORDER_STEPS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];
/// Allowed deviation of the observed central-difference order from 2.
pub const HJB_ORDER_TOL: f64 = 0.25;
/// Minimum distance of an HJB stencil centre to any regime boundary, in steps.
pub const BOUNDARY_STEPS: f64 = 3.0;
/// Largest initial step of the smooth-paste Richardson tableau.
pub const PASTE_STEP: f64 = 4e-3;
pub const PASTE_LEVELS: usize = 5;
/// One-sided step in `x̄` for the normal-reflection check.
pub const REFLECTION_STEP: f64 = 1e-5;
/// Straddle half-width for the continuity check.
pub const CONTINUITY_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check_name: String,
    pub max_abs_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub sample_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parts: Vec<CheckReport>,
}

impl CheckReport {
    /// A leaf report. A NaN residual never passes.
    pub fn new(name: impl Into<String>, max_abs_residual: f64, tolerance: f64, sample_points: usize) -> Self {
        Self {
            check_name: name.into(),
            max_abs_residual,
            tolerance,
            passed: max_abs_residual <= tolerance,
            sample_points,
            parts: Vec::new(),
        }
    }

    /// A report that passes iff every part passes.
    pub fn combine(name: impl Into<String>, parts: Vec<CheckReport>) -> Self {
        let ratio = parts
            .iter()
            .map(CheckReport::ratio)
            .fold(0.0_f64, |acc, r| if r.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(r) });
        let sample_points = parts.iter().map(|p| p.sample_points).sum();
        let mut report = Self::new(name, ratio, 1.0, sample_points);
        report.passed = parts.iter().all(|p| p.passed);
        report.parts = parts;
        report
    }

    fn ratio(&self) -> f64 {
        if self.max_abs_residual == 0.0 {
            0.0
        } else {
            self.max_abs_residual / self.tolerance
        }
    }

    /// Looks up a part by name, depth first.
    pub fn part(&self, name: &str) -> Option<&CheckReport> {
        self.parts
            .iter()
            .find_map(|p| if p.check_name == name { Some(p) } else { p.part(name) })
    }
}

fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values
        .into_iter()
        .fold(0.0_f64, |acc, v| if v.is_nan() || acc.is_nan() { f64::NAN } else { acc.max(v.abs()) })
}

fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n && n > 1 { hi } else { lo + step * i as f64 })
}

/// Interior midpoints `lo + (i + 1/2)(hi - lo)/n`.
fn midpoints(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = (hi - lo) / n as f64;
    (0..n).map(move |i| lo + step * (i as f64 + 0.5))
}

/// Evaluation points for the HJB check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HjbGrid {
    pub points: Vec<MarketState>,
    pub h: f64,
}

impl HjbGrid {
    /// `n_x_bar × n_x` points in each continuation regime plus `n_x_bar`
    /// stopping-region points, all at least `margin` from every boundary.
    pub fn interior(pricer: &Pricer, n_x_bar: usize, n_x: usize, h: f64, margin: f64) -> Result<Self> {
        if n_x_bar == 0 || n_x == 0 || !(h > 0.0) || !(margin >= BOUNDARY_STEPS * h) {
            return Err(Error::InvalidGrid(format!(
                "need n_x_bar, n_x > 0 and margin >= {BOUNDARY_STEPS} h (h = {h}, margin = {margin})"
            )));
        }
        let p = pricer.params();
        let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
        let mut points = Vec::new();
        let low_max_bars: Vec<f64> = midpoints(a + 2.0 * margin, a + c - margin, n_x_bar).collect();
        for &xb in &low_max_bars {
            points.extend(midpoints(a + margin, xb - margin, n_x).map(|x| MarketState { x, x_bar: xb }));
            let lo = (xb - c + margin).max(a - c);
            points.push(MarketState { x: 0.5 * (lo + a - margin), x_bar: xb });
        }
        if a + c + margin < lk + c - margin {
            for xb in midpoints(a + c + margin, lk + c - margin, n_x_bar) {
                points.extend(midpoints(xb - c + margin, xb - margin, n_x).map(|x| MarketState { x, x_bar: xb }));
            }
        }
        Ok(Self { points, h })
    }
}

/// Distance from `state` to the nearest boundary of its regime, along the
/// directions the HJB stencil moves.
fn hjb_boundary_distance(pricer: &Pricer, state: &MarketState, regime: Regime) -> Option<f64> {
    let p = pricer.params();
    let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
    let (x, xb) = (state.x, state.x_bar);
    match regime {
        Regime::ContinuationLowMax => Some((x - a).min(xb - x).min(a + c - xb)),
        Regime::ContinuationHighMax => Some((x - (xb - c)).min(xb - x).min(xb - (a + c)).min(lk + c - xb)),
        Regime::StoppedAtBarrier => Some((a - x).min(x - (xb - c))),
        _ => None,
    }
}

fn generator_fd(pricer: &Pricer, state: &MarketState, h: f64) -> Result<f64> {
    let p = pricer.params();
    let half_s2 = 0.5 * p.sigma * p.sigma;
    let v0 = pricer.value(state)?;
    let vp = pricer.value_at(state.x + h, state.x_bar)?;
    let vm = pricer.value_at(state.x - h, state.x_bar)?;
    let first = (vp - vm) / (2.0 * h);
    let second = (vp - 2.0 * v0 + vm) / (h * h);
    Ok(p.drift() * first + half_s2 * second - p.r * v0)
}

/// Generator of `K - e^x` minus `r (K - e^x)`, evaluated symbolically.
fn stopping_generator(params: &ModelParams, x: f64) -> f64 {
    let half_s2 = 0.5 * params.sigma * params.sigma;
    let ex = x.exp();
    params.drift() * -ex + half_s2 * -ex - params.r * (params.strike_k - ex)
}

/// `(r - σ²/2) V_x + (σ²/2) V_xx - r V` on the grid.
///
/// Continuation points use central differences and must vanish to
/// `1e-6·K`. Stopping-region points use the payoff's generator, which must
/// be `-rK <= 1e-8·K`. Continuation points far enough from the boundaries
/// also feed a convergence-order study over [`HJB_ORDER_STEPS`].
pub fn check_hjb(pricer: &Pricer, grid: &HjbGrid) -> Result<CheckReport> {
    let p = pricer.params();
    let k = p.strike_k;
    let h = grid.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidGrid(format!("FD step must be > 0, got {h}")));
    }
    let mut continuation = Vec::new();
    let mut order_points = Vec::new();
    let mut stopping = Vec::new();
    for state in &grid.points {
        let regime = pricer.classify(state)?;
        let dist = hjb_boundary_distance(pricer, state, regime).ok_or_else(|| {
            Error::InvalidGrid(format!("point ({}, {}) lies in regime {regime}", state.x, state.x_bar))
        })?;
        if dist < BOUNDARY_STEPS * h {
            return Err(Error::InvalidGrid(format!(
                "point ({}, {}) is {dist:.3e} from a boundary of {regime}, need >= {}",
                state.x,
                state.x_bar,
                BOUNDARY_STEPS * h
            )));
        }
        if regime == Regime::StoppedAtBarrier {
            stopping.push(stopping_generator(p, state.x));
        } else {
            continuation.push(generator_fd(pricer, state, h)?);
            if dist >= BOUNDARY_STEPS * HJB_ORDER_STEPS[0] {
                order_points.push(*state);
            }
        }
    }
    if continuation.is_empty() {
        return Err(Error::InvalidGrid("no continuation points in the HJB grid".into()));
    }

    let mut parts = vec![CheckReport::new("hjb_continuation", max_abs(continuation.iter().copied()), 1e-6 * k, continuation.len())];
    if !stopping.is_empty() {
        let worst = stopping.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        parts.push(CheckReport::new("hjb_stopping_sign", worst.max(0.0), 1e-8 * k, stopping.len()));
        let exact = max_abs(stopping.iter().map(|g| g + p.r * k));
        parts.push(CheckReport::new("hjb_stopping_exact", exact, 1e-12 * k, stopping.len()));
    }
    if !order_points.is_empty() {
        let orders = hjb_observed_orders(pricer, &order_points)?;
        let deviation = max_abs(orders.iter().map(|o| o - 2.0));
        parts.push(CheckReport::new("hjb_fd_order", deviation, HJB_ORDER_TOL, order_points.len()));
    }
    Ok(CheckReport::combine("hjb", parts))
}

/// Observed orders `log2(R(h)/R(h/2))` of the continuation residual over
/// [`HJB_ORDER_STEPS`].
pub fn hjb_observed_orders(pricer: &Pricer, points: &[MarketState]) -> Result<[f64; 2]> {
    let mut maxima = [0.0; 3];
    for (m, &step) in maxima.iter_mut().zip(HJB_ORDER_STEPS.iter()) {
        let residuals = points.iter().map(|s| generator_fd(pricer, s, step)).collect::<Result<Vec<_>>>()?;
        *m = max_abs(residuals);
    }
    Ok([(maxima[0] / maxima[1]).log2(), (maxima[1] / maxima[2]).log2()])
}

/// Low-max value `V1 + V2 (V3 + V4 V5)` at `x = a`, evaluated from the
/// components rather than through the regime dispatch.
fn low_max_formula_at_barrier(pricer: &Pricer, x_bar: f64) -> Result<f64> {
    let state = MarketState { x: pricer.barrier(), x_bar };
    let (v1, v2) = (pricer.v1(&state)?, pricer.v2(&state)?);
    Ok(v1 + v2 * (pricer.v3(x_bar)? + pricer.v4(x_bar)? * pricer.v5()))
}

/// Richardson limit of the forward difference quotient of `f` at 0 with
/// steps `h0 / 2^j`.
pub fn richardson_forward(f: impl Fn(f64) -> Result<f64>, h0: f64, levels: usize) -> Result<f64> {
    let f0 = f(0.0)?;
    let mut row: Vec<f64> = Vec::with_capacity(levels);
    for j in 0..levels {
        let h = h0 / f64::powi(2.0, j as i32);
        // The forward quotient has error c1 h + c2 h² + ..., so column m
        // eliminates the h^m term.
        let mut next = vec![(f(h)? - f0) / h];
        for m in 1..=j {
            let w = f64::powi(2.0, m as i32);
            next.push((w * next[m - 1] - row[m - 1]) / (w - 1.0));
        }
        row = next;
    }
    row.last().copied().ok_or_else(|| Error::InvalidGrid("Richardson needs levels > 0".into()))
}

fn check_paste_grid(pricer: &Pricer, x_bar_grid: &[f64]) -> Result<()> {
    let (a, c) = (pricer.barrier(), pricer.params().c);
    if x_bar_grid.is_empty() {
        return Err(Error::InvalidGrid("x_bar grid is empty".into()));
    }
    if let Some(xb) = x_bar_grid.iter().find(|&&xb| !(a < xb && xb < a + c)) {
        return Err(Error::InvalidGrid(format!("x_bar = {xb} is outside (a, a + c) = ({a}, {})", a + c)));
    }
    Ok(())
}

/// `x̄` points evenly inside `(a, a + c)`.
pub fn low_max_x_bar_grid(pricer: &Pricer, n: usize) -> Vec<f64> {
    let (a, c) = (pricer.barrier(), pricer.params().c);
    midpoints(a, a + c, n).collect()
}

/// Value match `V(a, x̄) = K - e^a` and contact `∂V/∂x (a+, x̄) = -e^a`.
pub fn check_smooth_paste(pricer: &Pricer, x_bar_grid: &[f64]) -> Result<CheckReport> {
    check_paste_grid(pricer, x_bar_grid)?;
    let k = pricer.params().strike_k;
    let a = pricer.barrier();
    let gain = k - a.exp();
    let mut value_res = Vec::with_capacity(x_bar_grid.len());
    let mut slope_res = Vec::with_capacity(x_bar_grid.len());
    for &xb in x_bar_grid {
        let v_a = low_max_formula_at_barrier(pricer, xb)?;
        value_res.push(v_a - gain);
        let h0 = PASTE_STEP.min(xb - a);
        let slope = richardson_forward(
            |h| if h == 0.0 { Ok(v_a) } else { pricer.value_at(a + h, xb) },
            h0,
            PASTE_LEVELS,
        )?;
        slope_res.push((slope + a.exp()) / a.exp());
    }
    let parts = vec![
        CheckReport::new("paste_value", max_abs(value_res), 1e-10 * k, x_bar_grid.len()),
        CheckReport::new("paste_derivative", max_abs(slope_res), 1e-6, x_bar_grid.len()),
    ];
    Ok(CheckReport::combine("smooth_paste", parts))
}

/// `x̄` points inside both continuation regimes, `n` per regime, each far
/// enough from the regime edges for the one-sided step.
pub fn reflection_x_bar_grid(pricer: &Pricer, n: usize) -> Vec<f64> {
    let p = pricer.params();
    let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
    let pad = 10.0 * REFLECTION_STEP;
    let mut grid: Vec<f64> = midpoints(a + pad, a + c - pad, n).collect();
    if a + c + pad < lk + c - pad {
        grid.extend(midpoints(a + c + pad, lk + c - pad, n));
    }
    grid
}

/// `|∂V/∂x̄|` at `x = x̄` by a forward difference in `x̄`.
pub fn check_normal_reflection(pricer: &Pricer, x_bar_grid: &[f64]) -> Result<CheckReport> {
    if x_bar_grid.is_empty() {
        return Err(Error::InvalidGrid("x_bar grid is empty".into()));
    }
    let h = REFLECTION_STEP;
    let mut low = Vec::new();
    let mut high = Vec::new();
    for &xb in x_bar_grid {
        let here = MarketState { x: xb, x_bar: xb };
        let regime = pricer.classify(&here)?;
        let moved = pricer.classify(&MarketState { x: xb, x_bar: xb + h })?;
        if !regime.is_continuation() || moved != regime {
            return Err(Error::InvalidGrid(format!(
                "x_bar = {xb}: the reflection stencil must stay inside one continuation regime"
            )));
        }
        let d = (pricer.value_at(xb, xb + h)? - pricer.value(&here)?) / h;
        match regime {
            Regime::ContinuationLowMax => low.push(d),
            _ => high.push(d),
        }
    }
    let tol = 1e-4 * pricer.params().strike_k;
    let mut parts = Vec::new();
    if !low.is_empty() {
        parts.push(CheckReport::new("reflection_low_max", max_abs(low.iter().copied()), tol, low.len()));
    }
    if !high.is_empty() {
        parts.push(CheckReport::new("reflection_high_max", max_abs(high.iter().copied()), tol, high.len()));
    }
    Ok(CheckReport::combine("normal_reflection", parts))
}

/// Pricer with `Z(c)` replaced by the misprint `(e^γ c - γ e^c)/(1-γ)`.
///
/// A wrong barrier or a wrong `γ` still prices some admissible strategy in
/// some Black-Scholes model, so reflection survives them. This pricer is
/// internally inconsistent and must fail the reflection check.
pub fn misprinted_z_pricer(params: &ModelParams) -> Result<Pricer> {
    let pricer = Pricer::new(params)?;
    let g = pricer.scale().gamma();
    let c = params.c;
    Ok(pricer.with_z_at_c((g.exp() * c - g * c.exp()) / (1.0 - g)))
}

/// `n³` parameter sets over `r ∈ [0.01, 0.3]`, `σ ∈ [0.05, 0.6]`,
/// `c ∈ [0.05, 2]`, all with `K = strike_k`.
pub fn identity_grid(n: usize, strike_k: f64) -> Result<Vec<ModelParams>> {
    if n == 0 {
        return Err(Error::InvalidGrid("identity grid needs n > 0".into()));
    }
    let mut grid = Vec::with_capacity(n * n * n);
    for r in linspace(0.01, 0.3, n) {
        for sigma in linspace(0.05, 0.6, n) {
            for c in linspace(0.05, 2.0, n) {
                grid.push(ModelParams::new(r, sigma, strike_k, c)?);
            }
        }
    }
    Ok(grid)
}

/// Scale-function identities at `d = c`, residuals divided by `e^c`:
/// `λΔ/(1-λ) = -e^c`, `Z'(c) = rW(c)`, `W'(c)/W(c) = λ(c)`,
/// `(1-γ) Z(c) = e^{γc} - γe^c`, `W(0) = 0`, `Z(0) = 1`, and agreement of
/// the reduced `Δ(c)` with `(σ²/2)(W' - W''/λ)`.
pub fn check_identities(params_grid: &[ModelParams]) -> Result<CheckReport> {
    if params_grid.is_empty() {
        return Err(Error::InvalidGrid("parameter grid is empty".into()));
    }
    let mut res: [Vec<f64>; 7] = Default::default();
    for p in params_grid {
        p.validate()?;
        let sf = ScaleFunctions::new(p);
        let c = p.c;
        let ec = c.exp();
        let g = sf.gamma();
        let (lambda, delta) = (sf.lambda(c), sf.delta(c));
        res[0].push((lambda * delta / sf.one_minus_lambda(c) + ec) / ec);
        res[6].push((delta - sf.delta_from_definition(c)) / ec);
        res[1].push((sf.z1(c) - p.r * sf.w(c)) / ec);
        res[2].push((sf.w1(c) / sf.w(c) - lambda) / ec);
        res[3].push((sf.z(c) * (1.0 - g) - ((g * c).exp() - g * ec)) / ec);
        res[4].push(sf.w(0.0));
        res[5].push(sf.z(0.0) - 1.0);
    }
    let names = [
        "lambda_delta_identity",
        "z_prime_equals_r_w",
        "w_log_derivative_equals_lambda",
        "z_closed_form",
        "w_at_zero",
        "z_at_zero",
        "delta_definition",
    ];
    let n = params_grid.len();
    let parts = names
        .iter()
        .zip(res)
        .map(|(name, r)| CheckReport::new(*name, max_abs(r), 1e-10, n))
        .collect();
    Ok(CheckReport::combine("identities", parts))
}

/// `ψ(θ) = (r - σ²/2)θ + σ²θ²/2`, the Laplace exponent of the log-price.
pub fn laplace_exponent(params: &ModelParams, theta: f64) -> f64 {
    params.drift() * theta + 0.5 * params.sigma * params.sigma * theta * theta
}

/// `∫_0^∞ e^{-θx} W(x) dx = 1/(ψ(θ) - r)` for each `θ > 1`.
///
/// The integral is truncated at `L` with `C e^{-(θ-1)L}/(θ-1) <= tail_bound`
/// (`W(x) <= C e^x`) and evaluated by double-exponential quadrature.
pub fn check_laplace_transform(params: &ModelParams, thetas: &[f64], tail_bound: f64) -> Result<CheckReport> {
    params.validate()?;
    if thetas.is_empty() || !(tail_bound > 0.0) {
        return Err(Error::InvalidGrid("need at least one theta and a positive tail bound".into()));
    }
    if let Some(t) = thetas.iter().find(|&&t| !(t > 1.0 && t.is_finite())) {
        return Err(Error::InvalidGrid(format!("theta = {t} is not above the root 1 of ψ(θ) = r")));
    }
    let sf = ScaleFunctions::new(params);
    let mut errors = Vec::with_capacity(thetas.len());
    let mut tails = Vec::with_capacity(thetas.len());
    for &theta in thetas {
        let excess = theta - 1.0;
        // Aim a decade under the bound so rounding cannot reach it.
        let upper = ((10.0 * sf.c_const() / (excess * tail_bound)).ln() / excess).max(1.0);
        let tail = sf.c_const() * (-excess * upper).exp() / excess;
        let out = quadrature::double_exponential::integrate(|x| (-theta * x).exp() * sf.w(x), 0.0, upper, 1e-13);
        errors.push(out.integral - 1.0 / (laplace_exponent(params, theta) - params.r));
        tails.push(tail);
    }
    let parts = vec![
        CheckReport::new("laplace_transform", max_abs(errors), 1e-6, thetas.len()),
        CheckReport::new("laplace_tail_bound", max_abs(tails), tail_bound, thetas.len()),
    ];
    Ok(CheckReport::combine("laplace", parts))
}

/// `(L - r) W = 0` and `(L - r) Z = 0` from analytic derivatives, relative
/// to the sum of the magnitudes of the three terms.
pub fn check_generators(params: &ModelParams, xs: &[f64]) -> Result<CheckReport> {
    params.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidGrid("generator grid is empty".into()));
    }
    if let Some(x) = xs.iter().find(|&&x| !(x >= 0.0 && x <= crate::scale_fn::LOG_STABLE_THRESHOLD)) {
        return Err(Error::InvalidGrid(format!("generator grid point {x} outside [0, 500]")));
    }
    let sf = ScaleFunctions::new(params);
    let (r, mu, hs2) = (params.r, params.drift(), sf.half_sigma2());
    let w_res = xs.iter().map(|&x| {
        let scale = (r * sf.w(x)).abs() + (mu * sf.w1(x)).abs() + (hs2 * sf.w2(x)).abs();
        sf.w_generator_residual(x) / scale
    });
    let w_res: Vec<f64> = w_res.collect();
    let z_res: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let scale = (r * sf.z(x)).abs() + (mu * sf.z1(x)).abs() + (hs2 * r * sf.w1(x)).abs();
            sf.z_generator_residual(x) / scale
        })
        .collect();
    let parts = vec![
        CheckReport::new("w_generator", max_abs(w_res), 1e-10, xs.len()),
        CheckReport::new("z_generator", max_abs(z_res), 1e-10, xs.len()),
    ];
    Ok(CheckReport::combine("generators", parts))
}

/// `n` evenly spaced points on `[0, 10]`.
pub fn generator_grid(n: usize) -> Vec<f64> {
    linspace(0.0, 10.0, n).collect()
}

/// Extrapolated one-sided limits `2f(±ε) - f(±2ε)`, differenced.
fn jump(f: impl Fn(f64) -> Result<f64>, eps: f64) -> Result<f64> {
    let right = 2.0 * f(eps)? - f(2.0 * eps)?;
    let left = 2.0 * f(-eps)? - f(-2.0 * eps)?;
    Ok(right - left)
}

/// Price jumps across `x̄ = a + c`, `x̄ = log K + c`, `x = x̄ - c` and
/// `x = a`, each straddled at half-width `eps`. Tolerance `1e-8·K`.
pub fn check_continuity(pricer: &Pricer, eps: f64, n: usize) -> Result<CheckReport> {
    if !(eps > 0.0) || n == 0 {
        return Err(Error::InvalidGrid("need eps > 0 and n > 0".into()));
    }
    let p = pricer.params();
    let (a, c, lk, k) = (pricer.barrier(), p.c, p.log_strike(), p.strike_k);
    let pad = 4.0 * eps;
    let tol = 1e-8 * k;

    let across_bar = |b: f64| -> Result<Vec<f64>> {
        midpoints(b - c + pad, b - pad, n)
            .map(|x| jump(|e| pricer.value_at(x, b + e), eps))
            .collect()
    };
    let high_low = across_bar(a + c)?;
    let exhausted = across_bar(lk + c)?;
    let drawdown: Vec<f64> = midpoints(a + c + pad, lk + c - pad, n)
        .map(|xb| jump(|e| pricer.value_at(xb - c + e, xb), eps))
        .collect::<Result<_>>()?;
    let barrier: Vec<f64> = midpoints(a + pad, a + c - pad, n)
        .map(|xb| jump(|e| pricer.value_at(a + e, xb), eps))
        .collect::<Result<_>>()?;

    let parts = vec![
        CheckReport::new("continuity_x_bar_at_a_plus_c", max_abs(high_low), tol, n),
        CheckReport::new("continuity_x_bar_at_log_k_plus_c", max_abs(exhausted), tol, n),
        CheckReport::new("continuity_x_at_x_bar_minus_c", max_abs(drawdown), tol, n),
        CheckReport::new("continuity_x_at_a", max_abs(barrier), tol, n),
    ];
    Ok(CheckReport::combine("continuity", parts))
}

/// `V >= payoff - 1e-10·K` and `0 <= V <= K` on an `n × n` grid with
/// `x̄ ∈ [a - c, log K + 2c]`, `x ∈ [x̄ - 2c, x̄]`.
pub fn check_domination(pricer: &Pricer, n: usize) -> Result<CheckReport> {
    if n < 2 {
        return Err(Error::InvalidGrid("domination grid needs n >= 2".into()));
    }
    let p = pricer.params();
    let (a, c, lk, k) = (pricer.barrier(), p.c, p.log_strike(), p.strike_k);
    let mut below_payoff = 0.0_f64;
    let mut negative = 0.0_f64;
    let mut above_k = 0.0_f64;
    let mut count = 0;
    for xb in linspace(a - c, lk + 2.0 * c, n) {
        for x in linspace(xb - 2.0 * c, xb, n) {
            let v = pricer.value_at(x, xb)?;
            below_payoff = below_payoff.max(payoff(p, x) - v);
            negative = negative.max(-v);
            above_k = above_k.max(v - k);
            count += 1;
        }
    }
    let tol = 1e-10 * k;
    let parts = vec![
        CheckReport::new("price_dominates_payoff", below_payoff.max(0.0), tol, count),
        CheckReport::new("price_nonnegative", negative.max(0.0), tol, count),
        CheckReport::new("price_at_most_strike", above_k.max(0.0), tol, count),
    ];
    Ok(CheckReport::combine("domination", parts))
}

/// `V(y, x̄) - V(x, x̄) <= e^x - e^y` for random `y < x < log K`,
/// `x <= x̄`, drawn from a seeded stream.
pub fn check_increment_bound(pricer: &Pricer, n_pairs: usize, seed: u64) -> Result<CheckReport> {
    if n_pairs == 0 {
        return Err(Error::InvalidGrid("need at least one pair".into()));
    }
    let p = pricer.params();
    let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    let mut drawn = 0;
    while drawn < n_pairs {
        let xb = rng.random_range(a - c..lk + 2.0 * c);
        let hi = xb.min(lk);
        let (u, v) = (rng.random_range(xb - 2.0 * c..hi), rng.random_range(xb - 2.0 * c..hi));
        if u == v {
            continue;
        }
        let (y, x) = (u.min(v), u.max(v));
        let excess = pricer.value_at(y, xb)? - pricer.value_at(x, xb)? - (x.exp() - y.exp());
        worst = worst.max(excess);
        drawn += 1;
    }
    Ok(CheckReport::new("increment_bound", worst.max(0.0), 1e-10 * p.strike_k, n_pairs))
}

/// One state in the middle of each regime, in [`Regime::ALL`] order.
pub fn representative_states(pricer: &Pricer) -> Vec<(Regime, MarketState)> {
    let p = pricer.params();
    let (a, c, lk) = (pricer.barrier(), p.c, p.log_strike());
    let low_bar = a + 0.5 * c;
    let high_bar = 0.5 * (a + c + lk + c);
    let exhausted_bar = lk + 1.5 * c;
    vec![
        (Regime::DrawdownTriggered, MarketState { x: low_bar - 1.5 * c, x_bar: low_bar }),
        (Regime::StoppedAtBarrier, MarketState { x: a - 0.25 * c, x_bar: low_bar }),
        (Regime::ContinuationLowMax, MarketState { x: 0.5 * (a + low_bar), x_bar: low_bar }),
        (Regime::ContinuationHighMax, MarketState { x: high_bar - 0.5 * c, x_bar: high_bar }),
        (Regime::ExhaustedMax, MarketState { x: exhausted_bar - 0.5 * c, x_bar: exhausted_bar }),
    ]
}

/// Closed form against Monte Carlo for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McComparison {
    pub state: MarketState,
    pub regime: Regime,
    pub closed_form: f64,
    /// Estimates for each requested stride, finest first.
    pub estimates: Vec<McEstimate>,
    /// `3·stderr + truncation_bound` of the finest estimate.
    pub allowance: f64,
}

impl McComparison {
    pub fn finest(&self) -> &McEstimate {
        &self.estimates[0]
    }

    pub fn abs_error(&self) -> f64 {
        (self.closed_form - self.finest().mean).abs()
    }

    /// `|closed form - MC|` for each stride, in stride order.
    pub fn errors(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| (self.closed_form - e.mean).abs()).collect()
    }

    /// Going from the coarsest grid to the finest, the coupled estimates move
    /// in one direction, starting on the side of the closed form they move
    /// away from. Overshooting the closed form by at most `allowance` is
    /// sampling noise rather than a reversal.
    pub fn converges_monotonically(&self) -> bool {
        let means: Vec<f64> = self.estimates.iter().rev().map(|e| e.mean).collect();
        let (Some(&coarse), Some(&fine)) = (means.first(), means.last()) else {
            return true;
        };
        if coarse == fine {
            return means.iter().all(|&m| m == coarse);
        }
        let dir = (fine - coarse).signum();
        let steps_agree = means.windows(2).all(|w| (w[1] - w[0]) * dir >= 0.0);
        let starts_behind = (self.closed_form - coarse) * dir >= 0.0;
        let overshoot = (fine - self.closed_form) * dir;
        steps_agree && starts_behind && overshoot <= self.allowance
    }
}

/// Monte Carlo of the pricer's own barrier policy at each state, on the
/// grids `cfg.dt · s` for the given strides (first stride should be 1).
pub fn compare_with_mc(
    pricer: &Pricer,
    states: &[MarketState],
    cfg: &McConfig,
    strides: &[u64],
) -> Result<Vec<McComparison>> {
    let p = pricer.params();
    let policy = Policy::FixedBarrier(pricer.barrier());
    states
        .iter()
        .map(|state| {
            let breakdown = pricer.price(state)?;
            let estimates = mc_price_coupled(p, state, policy, cfg, strides)?;
            let fine = &estimates[0];
            let allowance = 3.0 * fine.stderr.unwrap_or(0.0) + fine.truncation_bound;
            Ok(McComparison {
                state: *state,
                regime: breakdown.regime,
                closed_form: breakdown.value,
                estimates,
                allowance,
            })
        })
        .collect()
}

pub fn mc_report(comparisons: &[McComparison]) -> CheckReport {
    let parts = comparisons
        .iter()
        .map(|cmp| CheckReport::new(format!("mc_{}", cmp.regime.as_str()), cmp.abs_error(), cmp.allowance, 1))
        .collect();
    CheckReport::combine("mc_agreement", parts)
}

/// `|closed form - MC| <= 3·stderr + truncation bound` at every state.
pub fn check_against_mc(pricer: &Pricer, states: &[MarketState], cfg: &McConfig) -> Result<CheckReport> {
    if states.is_empty() {
        return Err(Error::InvalidGrid("no states".into()));
    }
    Ok(mc_report(&compare_with_mc(pricer, states, cfg, &[1])?))
}

/// Deterministic checks at their default grids; the ordering is stable.
pub fn run_suite(pricer: &Pricer) -> Result<Vec<CheckReport>> {
    let p = pricer.params();
    let mut identity_params = identity_grid(6, p.strike_k)?;
    identity_params.push(*p);
    Ok(vec![
        check_identities(&identity_params)?,
        check_laplace_transform(p, &[1.5, 2.0, 3.0, 5.0, 10.0], 1e-9)?,
        check_generators(p, &generator_grid(100))?,
        check_smooth_paste(pricer, &low_max_x_bar_grid(pricer, 8))?,
        check_hjb(pricer, &HjbGrid::interior(pricer, 10, 12, HJB_STEP, 4e-3)?)?,
        check_normal_reflection(pricer, &reflection_x_bar_grid(pricer, 25))?,
        check_continuity(pricer, CONTINUITY_EPS, 8)?,
        check_domination(pricer, 100)?,
        check_increment_bound(pricer, 1000, 2024)?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig1() -> Pricer {
        Pricer::new(&ModelParams::figure1()).unwrap()
    }

    #[test]
    fn report_invariant() {
        assert!(CheckReport::new("a", 1.0, 1.0, 1).passed);
        assert!(!CheckReport::new("a", 1.0 + 1e-12, 1.0, 1).passed);
        assert!(!CheckReport::new("a", f64::NAN, 1.0, 1).passed);
        let both = CheckReport::combine("b", vec![CheckReport::new("x", 0.5, 1.0, 2), CheckReport::new("y", 3.0, 2.0, 3)]);
        assert!(!both.passed);
        assert_eq!(both.sample_points, 5);
        assert!((both.max_abs_residual - 1.5).abs() < 1e-15);
        assert_eq!(both.passed, both.max_abs_residual <= both.tolerance);
    }

    #[test]
    fn richardson_recovers_exp_slope() {
        let d = richardson_forward(|h| Ok((1.0 + h).exp()), 1e-2, 5).unwrap();
        assert!((d - 1f64.exp()).abs() < 1e-10, "{d}");
    }

    #[test]
    fn suite_passes_at_figure1() {
        for report in run_suite(&fig1()).unwrap() {
            assert!(report.passed, "{report:#?}");
        }
    }

    #[test]
    fn hjb_grid_is_large_and_rejects_boundaries() {
        let pricer = fig1();
        let grid = HjbGrid::interior(&pricer, 10, 12, HJB_STEP, 4e-3).unwrap();
        let report = check_hjb(&pricer, &grid).unwrap();
        assert!(report.part("hjb_continuation").unwrap().sample_points >= 200);
        let a = pricer.barrier();
        let bad = HjbGrid { points: vec![MarketState { x: a + HJB_STEP, x_bar: a + 0.1 }], h: HJB_STEP };
        assert!(matches!(check_hjb(&pricer, &bad), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn perturbed_barrier_fails_paste_only_in_slope() {
        let p = ModelParams::figure1();
        let wrong = Pricer::with_barrier(&p, fig1().barrier() + 0.01).unwrap();
        let report = check_smooth_paste(&wrong, &low_max_x_bar_grid(&wrong, 8)).unwrap();
        assert!(report.part("paste_value").unwrap().passed);
        assert!(!report.part("paste_derivative").unwrap().passed);
    }

    #[test]
    fn misprinted_z_fails_reflection() {
        let wrong = misprinted_z_pricer(&ModelParams::figure1()).unwrap();
        let report = check_normal_reflection(&wrong, &reflection_x_bar_grid(&wrong, 25)).unwrap();
        assert!(!report.passed, "{report:#?}");
    }

    #[test]
    fn unit_parameter_identity_example() {
        // γ = -1: λΔ/(1-λ) = -2 at c = log 2.
        let p = ModelParams::new(0.5, 1.0, 100.0, 2f64.ln()).unwrap();
        let report = check_identities(&[p]).unwrap();
        assert!(report.passed, "{report:#?}");
    }

    #[test]
    fn laplace_rejects_small_theta() {
        let p = ModelParams::figure1();
        assert!(check_laplace_transform(&p, &[1.0], 1e-9).is_err());
        assert!(check_laplace_transform(&p, &[1.5, 4.0], 1e-9).unwrap().passed);
    }

    #[test]
    fn representative_states_cover_regimes() {
        let pricer = fig1();
        let states = representative_states(&pricer);
        let regimes: Vec<Regime> = states.iter().map(|(r, s)| {
            assert_eq!(pricer.classify(s).unwrap(), *r);
            *r
        }).collect();
        assert_eq!(regimes, Regime::ALL.to_vec());
    }

    #[test]
    fn mc_agreement_trivial_regimes_are_exact() {
        let pricer = fig1();
        let states: Vec<MarketState> = representative_states(&pricer)
            .into_iter()
            .filter(|(r, _)| !r.is_continuation())
            .map(|(_, s)| s)
            .collect();
        let cfg = McConfig::new(64, 1e-3, 5.0, 3).unwrap();
        let cmp = compare_with_mc(&pricer, &states, &cfg, &[1]).unwrap();
        for c in &cmp {
            assert_eq!(c.finest().mean, c.closed_form, "{:?}", c.regime);
        }
        assert!(mc_report(&cmp).passed);
    }
    fn comparison(closed_form: f64, means_finest_first: &[f64], allowance: f64) -> McComparison {
        let estimates = means_finest_first
            .iter()
            .map(|&mean| McEstimate {
                mean,
                stderr: Some(allowance / 3.0),
                n_effective: 1000,
                n_truncated: 0,
                truncation_bound: 0.0,
                dt: 1e-4,
                t_max: 1.0,
                base_seed: 0,
                policy: String::new(),
            })
            .collect();
        McComparison {
            state: MarketState::from_prices(100.0, 100.0).unwrap(),
            regime: Regime::ContinuationLowMax,
            closed_form,
            estimates,
            allowance,
        }
    }

    #[test]
    fn monotone_convergence_rule() {
        assert!(comparison(1.0, &[1.01, 1.02, 1.04], 0.001).converges_monotonically());
        assert!(comparison(1.0, &[0.995, 1.0, 1.01], 0.01).converges_monotonically());
        assert!(!comparison(1.0, &[0.98, 1.0, 1.01], 0.01).converges_monotonically());
        assert!(!comparison(1.0, &[1.02, 1.01, 1.04], 0.01).converges_monotonically());
        assert!(!comparison(1.0, &[1.04, 1.02, 1.01], 0.01).converges_monotonically());
        assert!(comparison(1.0, &[1.0, 1.0, 1.0], 0.0).converges_monotonically());
    }
}
