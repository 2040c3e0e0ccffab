use std::path::{Path, PathBuf};
use std::process::ExitCode;

use capput::mc::{mc_price_coupled, McConfig, McEstimate, Policy};
use capput::pricing::payoff;
use capput::verification::{self, representative_states, CheckReport, McComparison};
use capput::{MarketState, ModelParams, PriceBreakdown, Pricer};
use serde::Serialize;

use crate::args::{BarrierArgs, Format, McArgs, ModelArgs, OutputArgs, PriceArgs, SimArgs, StateArgs, SweepArgs, VerifyArgs};
use crate::config::FileConfig;
use crate::error::{invalid, CliResult};
use crate::output::{full, full_opt, write_csv, write_json};

/// Spot and running maximum for the axes a figure preset leaves fixed.
pub const FIGURE_STATE: (f64, f64) = (100.0, 100.0);

pub const SWEEP_COLUMNS: [&str; 10] = ["x", "xbar", "r", "sigma", "c", "K", "a_star", "exp_a_star", "regime", "price"];

const DEFAULT_R: f64 = 0.1;
const DEFAULT_SIGMA: f64 = 0.2;
const DEFAULT_STRIKE: f64 = 100.0;
const DEFAULT_DRAWDOWN: f64 = 1.2;
const DEFAULT_PATHS: u64 = 200_000;
const DEFAULT_DT: f64 = 1e-4;
const DEFAULT_SEED: u64 = 42;
const DISCOUNT_TOLERANCE: f64 = 1e-4;

fn load_config(model: &ModelArgs) -> CliResult<FileConfig> {
    FileConfig::load_optional(model.config.as_deref())
}

fn resolve_model(m: &ModelArgs, f: &FileConfig) -> CliResult<ModelParams> {
    let r = m.r.or(f.r).unwrap_or(DEFAULT_R);
    let sigma = m.sigma.or(f.sigma).unwrap_or(DEFAULT_SIGMA);
    let strike = m.strike.or(f.strike).unwrap_or(DEFAULT_STRIKE);
    let drawdown = m.drawdown.or(f.drawdown).unwrap_or(DEFAULT_DRAWDOWN);
    Ok(ModelParams::with_drawdown_ratio(r, sigma, strike, drawdown)?)
}

fn resolve_state(s: &StateArgs, f: &FileConfig) -> CliResult<Option<MarketState>> {
    match (s.x.or(f.x), s.xbar.or(f.xbar)) {
        (Some(x), Some(xbar)) => Ok(Some(MarketState::from_prices(x, xbar)?)),
        (None, None) => Ok(None),
        _ => Err(invalid("a state needs both --x and --xbar")),
    }
}

fn require_state(s: &StateArgs, f: &FileConfig) -> CliResult<MarketState> {
    resolve_state(s, f)?.ok_or_else(|| invalid("this command needs a state: pass --x and --xbar (prices)"))
}

fn resolve_sim(s: &SimArgs, f: &FileConfig, params: &ModelParams) -> CliResult<McConfig> {
    let paths = s.paths.or(f.paths).unwrap_or(DEFAULT_PATHS);
    let dt = s.dt.or(f.dt).unwrap_or(DEFAULT_DT);
    let seed = s.seed.or(f.seed).unwrap_or(DEFAULT_SEED);
    Ok(match s.tmax.or(f.tmax) {
        Some(t_max) => McConfig::new(paths, dt, t_max, seed)?,
        None => McConfig::with_discount_tolerance(params, paths, dt, DISCOUNT_TOLERANCE, seed)?,
    })
}

fn resolve_output(o: &OutputArgs, f: &FileConfig, default: Format) -> (Option<PathBuf>, Format) {
    (o.out.clone().or_else(|| f.out.clone()), o.format.or(f.format).unwrap_or(default))
}

#[derive(Debug, Serialize)]
struct RunInfo {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    params: ParamsInfo,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc: Option<McConfig>,
}

#[derive(Debug, Serialize)]
struct ParamsInfo {
    r: f64,
    sigma: f64,
    strike_k: f64,
    c: f64,
    drawdown_ratio: f64,
}

impl RunInfo {
    fn new(command: &'static str, p: &ModelParams, mc: Option<McConfig>) -> Self {
        Self {
            tool: "capput",
            version: env!("CARGO_PKG_VERSION"),
            command,
            params: ParamsInfo {
                r: p.r,
                sigma: p.sigma,
                strike_k: p.strike_k,
                c: p.c,
                drawdown_ratio: p.c.exp(),
            },
            mc,
        }
    }

    fn header(&self) -> Vec<String> {
        let p = &self.params;
        let mut lines = vec![
            format!("{} {} {}", self.tool, self.version, self.command),
            format!(
                "r={} sigma={} K={} c={} drawdown_ratio={}",
                full(p.r),
                full(p.sigma),
                full(p.strike_k),
                full(p.c),
                full(p.drawdown_ratio)
            ),
        ];
        if let Some(mc) = &self.mc {
            lines.push(format!(
                "paths={} dt={} t_max={} seed={}",
                mc.n_paths,
                full(mc.dt),
                full(mc.t_max),
                mc.base_seed
            ));
        }
        lines
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub x: f64,
    pub xbar: f64,
    pub r: f64,
    pub sigma: f64,
    pub c: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub a_star: f64,
    pub exp_a_star: f64,
    pub regime: &'static str,
    pub price: f64,
}

impl SweepRow {
    fn new(pricer: &Pricer, state: &MarketState, b: &PriceBreakdown) -> Self {
        let p = pricer.params();
        Self {
            x: state.x,
            xbar: state.x_bar,
            r: p.r,
            sigma: p.sigma,
            c: p.c,
            k: p.strike_k,
            a_star: b.a_star,
            exp_a_star: b.a_star.exp(),
            regime: b.regime.as_str(),
            price: b.value,
        }
    }

    fn record(&self) -> Vec<String> {
        let mut rec: Vec<String> = [self.x, self.xbar, self.r, self.sigma, self.c, self.k, self.a_star, self.exp_a_star]
            .iter()
            .map(|&v| full(v))
            .collect();
        rec.push(self.regime.to_string());
        rec.push(full(self.price));
        rec
    }
}

fn write_rows(out: Option<&Path>, format: Format, run: &RunInfo, notes: &[String], rows: &[SweepRow]) -> CliResult<()> {
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                run: &'a RunInfo,
                rows: &'a [SweepRow],
            }
            write_json(out, &Doc { run, rows })
        }
        Format::Csv => {
            let mut header = run.header();
            header.extend(notes.iter().cloned());
            let records: Vec<Vec<String>> = rows.iter().map(SweepRow::record).collect();
            write_csv(out, &header, &SWEEP_COLUMNS, &records)
        }
    }
}

pub fn price(args: &PriceArgs) -> CliResult<ExitCode> {
    let file = load_config(&args.model)?;
    let params = resolve_model(&args.model, &file)?;
    let state = require_state(&args.state, &file)?;
    let (out, format) = resolve_output(&args.output, &file, Format::Json);
    let pricer = Pricer::new(&params)?;
    let breakdown = pricer.price(&state)?;
    let run = RunInfo::new("price", &params, None);
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                run: &'a RunInfo,
                state: MarketState,
                spot: f64,
                running_max: f64,
                payoff: f64,
                breakdown: &'a PriceBreakdown,
            }
            write_json(
                out.as_deref(),
                &Doc {
                    run: &run,
                    state,
                    spot: state.x.exp(),
                    running_max: state.x_bar.exp(),
                    payoff: payoff(&params, state.x),
                    breakdown: &breakdown,
                },
            )?;
        }
        Format::Csv => {
            let row = SweepRow::new(&pricer, &state, &breakdown);
            write_rows(out.as_deref(), format, &run, &[], &[row])?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn barrier(args: &BarrierArgs) -> CliResult<ExitCode> {
    let file = load_config(&args.model)?;
    let params = resolve_model(&args.model, &file)?;
    let (out, format) = resolve_output(&args.output, &file, Format::Json);
    let pricer = Pricer::new(&params)?;
    #[derive(Serialize)]
    struct Doc {
        a_star: f64,
        exp_a_star: f64,
        lambda_c: f64,
        delta_c: f64,
        w_c: f64,
        z_c: f64,
        v5: f64,
    }
    let doc = Doc {
        a_star: pricer.barrier(),
        exp_a_star: pricer.barrier().exp(),
        lambda_c: pricer.lambda_c(),
        delta_c: pricer.delta_c(),
        w_c: pricer.w_c(),
        z_c: pricer.z_c(),
        v5: pricer.v5(),
    };
    let run = RunInfo::new("barrier", &params, None);
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Wrapped<'a> {
                run: &'a RunInfo,
                #[serde(flatten)]
                doc: &'a Doc,
            }
            write_json(out.as_deref(), &Wrapped { run: &run, doc: &doc })?;
        }
        Format::Csv => {
            let values = [doc.a_star, doc.exp_a_star, doc.lambda_c, doc.delta_c, doc.w_c, doc.z_c, doc.v5];
            let columns = ["a_star", "exp_a_star", "lambda_c", "delta_c", "w_c", "z_c", "v5"];
            write_csv(out.as_deref(), &run.header(), &columns, &[values.iter().map(|&v| full(v)).collect()])?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Inclusive grid `LO:HI:N`. `N = 1` requires `LO = HI`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub const fn new(lo: f64, hi: f64, n: usize) -> Self {
        Self { lo, hi, n }
    }

    pub fn point(v: f64) -> Self {
        Self::new(v, v, 1)
    }

    pub fn parse(name: &str, spec: &str) -> CliResult<Self> {
        let parts: Vec<&str> = spec.split(':').collect();
        let bad = || invalid(format!("{name}: expected LO:HI:N, got {spec:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
        let grid = Self::new(lo, hi, n);
        grid.validate(name)?;
        Ok(grid)
    }

    pub fn validate(&self, name: &str) -> CliResult<()> {
        let ok = self.lo.is_finite()
            && self.hi.is_finite()
            && self.n >= 1
            && if self.n == 1 { self.lo == self.hi } else { self.lo < self.hi };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!(
                "{name}: degenerate grid {}:{}:{} (need N >= 1, LO < HI, or LO = HI when N = 1)",
                self.lo, self.hi, self.n
            )))
        }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n)
            .map(|i| if i + 1 == self.n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

/// Axes of a sweep. Spot and running maximum are prices.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxes {
    pub x: Option<Grid>,
    pub xbar: Option<Grid>,
    pub r: Option<Grid>,
    pub sigma: Option<Grid>,
}

impl SweepAxes {
    pub fn figure(n: u8) -> Self {
        match n {
            1 => Self { x: Some(Grid::new(75.0, 100.0, 251)), xbar: None, r: None, sigma: None },
            2 => Self {
                x: Some(Grid::new(50.0, 130.0, 81)),
                xbar: Some(Grid::new(50.0, 130.0, 81)),
                r: None,
                sigma: None,
            },
            _ => Self {
                x: None,
                xbar: None,
                r: Some(Grid::new(0.01, 0.2, 20)),
                sigma: Some(Grid::new(0.1, 0.5, 41)),
            },
        }
    }
}

pub fn sweep(args: &SweepArgs) -> CliResult<ExitCode> {
    let file = load_config(&args.model)?;
    let params = resolve_model(&args.model, &file)?;
    let (out, format) = resolve_output(&args.output, &file, Format::Csv);
    let figure = args.figure.or(file.figure);
    if let Some(n) = figure {
        if !(1..=4).contains(&n) {
            return Err(invalid(format!("--figure must be 1-4, got {n}")));
        }
    }
    let mut axes = figure.map(SweepAxes::figure).unwrap_or(SweepAxes { x: None, xbar: None, r: None, sigma: None });
    let parse = |name: &str, flag: &Option<String>, cfg: &Option<String>| -> CliResult<Option<Grid>> {
        flag.as_ref().or(cfg.as_ref()).map(|s| Grid::parse(name, s)).transpose()
    };
    if let Some(g) = parse("--x-grid", &args.x_grid, &file.x_grid)? {
        axes.x = Some(g);
    }
    if let Some(g) = parse("--xbar-grid", &args.xbar_grid, &file.xbar_grid)? {
        axes.xbar = Some(g);
    }
    if let Some(g) = parse("--r-grid", &args.r_grid, &file.r_grid)? {
        axes.r = Some(g);
    }
    if let Some(g) = parse("--sigma-grid", &args.sigma_grid, &file.sigma_grid)? {
        axes.sigma = Some(g);
    }
    if axes.x.is_none() && axes.xbar.is_none() && axes.r.is_none() && axes.sigma.is_none() {
        return Err(invalid("sweep needs --figure or at least one of --x-grid, --xbar-grid, --r-grid, --sigma-grid"));
    }
    for (name, g) in [("--x-grid", axes.x), ("--xbar-grid", axes.xbar)] {
        if let Some(g) = g {
            if !(g.lo > 0.0) {
                return Err(invalid(format!("{name}: prices must be positive")));
            }
        }
    }

    // A swept axis needs no fixed coordinate; presets fall back to FIGURE_STATE.
    let fixed = |value: Option<f64>, swept: bool, preset: f64, flag: &str| -> CliResult<f64> {
        match (value, swept, figure) {
            (_, true, _) => Ok(f64::NAN),
            (Some(v), false, _) if v > 0.0 && v.is_finite() => Ok(v),
            (Some(v), false, _) => Err(invalid(format!("{flag} must be a positive price, got {v}"))),
            (None, false, Some(_)) => Ok(preset),
            (None, false, None) => Err(invalid(format!("{flag} is required unless its axis is swept"))),
        }
    };
    let spot = fixed(args.state.x.or(file.x), axes.x.is_some(), FIGURE_STATE.0, "--x")?;
    let running_max = fixed(args.state.xbar.or(file.xbar), axes.xbar.is_some(), FIGURE_STATE.1, "--xbar")?;
    let rows = sweep_rows(&params, &axes, spot, running_max)?;
    if rows.is_empty() {
        return Err(invalid("the sweep grid has no points with x <= xbar"));
    }
    let notes = vec![
        format!(
            "axes: x={:?} xbar={:?} r={:?} sigma={:?}",
            axes.x.map(|g| (g.lo, g.hi, g.n)),
            axes.xbar.map(|g| (g.lo, g.hi, g.n)),
            axes.r.map(|g| (g.lo, g.hi, g.n)),
            axes.sigma.map(|g| (g.lo, g.hi, g.n))
        ),
        "x and xbar are log-prices; grid points with x > xbar are omitted".to_string(),
    ];
    let run = RunInfo::new("sweep", &params, None);
    write_rows(out.as_deref(), format, &run, &notes, &rows)?;
    Ok(ExitCode::SUCCESS)
}

/// Rows in `r`, `σ`, `x̄`, `x` order; fixed axes take the model's values
/// or the given prices.
pub fn sweep_rows(params: &ModelParams, axes: &SweepAxes, spot: f64, running_max: f64) -> CliResult<Vec<SweepRow>> {
    let rs = axes.r.unwrap_or(Grid::point(params.r)).values();
    let sigmas = axes.sigma.unwrap_or(Grid::point(params.sigma)).values();
    let xbars = axes.xbar.unwrap_or(Grid::point(running_max)).values();
    let xs = axes.x.unwrap_or(Grid::point(spot)).values();
    let mut rows = Vec::new();
    for &r in &rs {
        for &sigma in &sigmas {
            let p = ModelParams::new(r, sigma, params.strike_k, params.c)?;
            let pricer = Pricer::new(&p)?;
            for &mb in &xbars {
                for &s in &xs {
                    if s > mb {
                        continue;
                    }
                    let state = MarketState::from_prices(s, mb)?;
                    let b = pricer.price(&state)?;
                    rows.push(SweepRow::new(&pricer, &state, &b));
                }
            }
        }
    }
    Ok(rows)
}

fn flatten_reports(prefix: &str, reports: &[CheckReport], rows: &mut Vec<Vec<String>>) {
    for r in reports {
        let name = if prefix.is_empty() { r.check_name.clone() } else { format!("{prefix}/{}", r.check_name) };
        rows.push(vec![
            name.clone(),
            full(r.max_abs_residual),
            full(r.tolerance),
            r.passed.to_string(),
            r.sample_points.to_string(),
        ]);
        flatten_reports(&name, &r.parts, rows);
    }
}

pub fn verify(args: &VerifyArgs) -> CliResult<ExitCode> {
    let file = load_config(&args.model)?;
    let params = resolve_model(&args.model, &file)?;
    let (out, format) = resolve_output(&args.output, &file, Format::Json);
    let shift = args.perturb_astar.or(file.perturb_astar);
    let with_mc = args.with_mc || file.with_mc.unwrap_or(false);
    let optimal = Pricer::new(&params)?;
    let pricer = match shift {
        Some(d) if !d.is_finite() => return Err(invalid("--perturb-astar must be finite")),
        Some(d) => Pricer::with_barrier(&params, optimal.barrier() + d)?,
        None => optimal,
    };
    let mut checks = verification::run_suite(&pricer)?;
    let mc_cfg = with_mc.then(|| resolve_sim(&args.sim, &file, &params)).transpose()?;
    let mut comparisons: Option<Vec<McComparison>> = None;
    if let Some(cfg) = &mc_cfg {
        let states: Vec<MarketState> = representative_states(&pricer).into_iter().map(|(_, s)| s).collect();
        let cmp = verification::compare_with_mc(&pricer, &states, cfg, &[1])?;
        checks.push(verification::mc_report(&cmp));
        comparisons = Some(cmp);
    }
    let passed = checks.iter().all(|c| c.passed);
    let run = RunInfo::new("verify", &params, mc_cfg);
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                run: &'a RunInfo,
                a_star: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                a_star_shift: Option<f64>,
                passed: bool,
                checks: &'a [CheckReport],
                #[serde(skip_serializing_if = "Option::is_none")]
                mc: Option<&'a [McComparison]>,
            }
            write_json(
                out.as_deref(),
                &Doc {
                    run: &run,
                    a_star: pricer.barrier(),
                    a_star_shift: shift,
                    passed,
                    checks: &checks,
                    mc: comparisons.as_deref(),
                },
            )?;
        }
        Format::Csv => {
            let mut header = run.header();
            header.push(format!("barrier={} shift={}", full(pricer.barrier()), full_opt(shift)));
            let mut rows = Vec::new();
            flatten_reports("", &checks, &mut rows);
            write_csv(
                out.as_deref(),
                &header,
                &["check_name", "max_abs_residual", "tolerance", "passed", "sample_points"],
                &rows,
            )?;
        }
    }
    for c in checks.iter().filter(|c| !c.passed) {
        eprintln!("FAILED {}: residual {:e} > tolerance {:e}", c.check_name, c.max_abs_residual, c.tolerance);
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Debug, Serialize)]
struct StrideResult {
    stride: u64,
    estimate: McEstimate,
    z_score: Option<f64>,
}

/// `(mc - closed form) / stderr`; absent without a standard error, zero
/// when both the difference and the error vanish.
pub fn z_score(mean: f64, stderr: Option<f64>, closed_form: f64) -> Option<f64> {
    let diff = mean - closed_form;
    match stderr {
        Some(se) if se > 0.0 => Some(diff / se),
        Some(_) if diff == 0.0 => Some(0.0),
        _ => None,
    }
}

pub fn mc(args: &McArgs) -> CliResult<ExitCode> {
    let file = load_config(&args.model)?;
    let params = resolve_model(&args.model, &file)?;
    let state = require_state(&args.state, &file)?;
    let cfg = resolve_sim(&args.sim, &file, &params)?;
    let (out, format) = resolve_output(&args.output, &file, Format::Json);
    let strides = args.strides.clone().or_else(|| file.strides.clone()).unwrap_or_else(|| vec![1]);
    let exercise_at = args.exercise_at.or(file.exercise_at);
    let drawdown_only = args.drawdown_only || file.drawdown_only.unwrap_or(false);

    let (policy, closed_form) = if drawdown_only {
        (Policy::DrawdownOnly, None)
    } else {
        let pricer = match exercise_at {
            Some(price) if !(price > 0.0) => return Err(invalid("--exercise-at must be a positive price")),
            Some(price) => Pricer::with_barrier(&params, price.ln())?,
            None => Pricer::new(&params)?,
        };
        (Policy::FixedBarrier(pricer.barrier()), Some(pricer.price(&state)?))
    };
    let estimates = mc_price_coupled(&params, &state, policy, &cfg, &strides)?;

    let mut warnings = Vec::new();
    if cfg.n_paths == 1 {
        warnings.push("n_paths = 1: standard error undefined, z-score absent".to_string());
    }
    let results: Vec<StrideResult> = strides
        .iter()
        .zip(estimates)
        .map(|(&stride, estimate)| {
            let z = closed_form.as_ref().and_then(|b| z_score(estimate.mean, estimate.stderr, b.value));
            StrideResult { stride, estimate, z_score: z }
        })
        .collect();
    for w in &warnings {
        eprintln!("warning: {w}");
    }

    let run = RunInfo::new("mc", &params, Some(cfg));
    match format {
        Format::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                run: &'a RunInfo,
                state: MarketState,
                policy: Policy,
                #[serde(skip_serializing_if = "Option::is_none")]
                closed_form: Option<&'a PriceBreakdown>,
                results: &'a [StrideResult],
                warnings: &'a [String],
            }
            write_json(
                out.as_deref(),
                &Doc {
                    run: &run,
                    state,
                    policy,
                    closed_form: closed_form.as_ref(),
                    results: &results,
                    warnings: &warnings,
                },
            )?;
        }
        Format::Csv => {
            let mut header = run.header();
            header.push(format!("state x={} xbar={} policy={}", full(state.x), full(state.x_bar), policy.describe()));
            header.extend(warnings.iter().map(|w| format!("warning: {w}")));
            let cf = closed_form.as_ref().map(|b| b.value);
            let rows = results
                .iter()
                .map(|s| {
                    let e = &s.estimate;
                    vec![
                        s.stride.to_string(),
                        full(e.dt),
                        full(e.t_max),
                        e.n_effective.to_string(),
                        full(e.mean),
                        full_opt(e.stderr),
                        full_opt(s.z_score),
                        full_opt(cf),
                        e.n_truncated.to_string(),
                        full(e.truncation_bound),
                    ]
                })
                .collect::<Vec<_>>();
            write_csv(
                out.as_deref(),
                &header,
                &["stride", "dt", "t_max", "n_paths", "mean", "stderr", "z_score", "closed_form", "n_truncated", "truncation_bound"],
                &rows,
            )?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
