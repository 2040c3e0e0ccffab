//! Exit-gate criteria. Prints one PASS/FAIL line per criterion, followed by
//! indented diagnostics, and exits non-zero if any criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use capput::mc::{barrier_search, McConfig};
use capput::verification::{
    check_continuity, check_domination, check_generators, check_hjb, check_identities, check_increment_bound,
    check_laplace_transform, check_normal_reflection, check_smooth_paste, compare_with_mc, generator_grid,
    identity_grid, low_max_x_bar_grid, mc_report, reflection_x_bar_grid, representative_states, CheckReport, HjbGrid,
    CONTINUITY_EPS, HJB_STEP,
};
use capput::{MarketState, ModelParams, Pricer, Regime};

const BIN: &str = env!("CARGO_BIN_EXE_capput");

const MC_PATHS: u64 = 200_000;
const MC_DT: f64 = 1e-4;
const MC_DISCOUNT_TOL: f64 = 1e-4;
const MC_SEED: u64 = 20_240_601;
const MC_STRIDES: [u64; 3] = [1, 2, 4];
const MC_BUDGET: Duration = Duration::from_secs(300);
const SEARCH_OFFSETS: [f64; 7] = [-0.1, -0.05, -0.02, 0.0, 0.02, 0.05, 0.1];

struct Outcome {
    passed: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(passed: bool, summary: impl Into<String>) -> Self {
        Self { passed, summary: summary.into(), details: Vec::new() }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

fn fig1() -> (ModelParams, Pricer) {
    let p = ModelParams::figure1();
    (p, Pricer::new(&p).unwrap())
}

fn describe(report: &CheckReport) -> Vec<String> {
    report
        .parts
        .iter()
        .map(|p| {
            format!(
                "{:<40} residual {:.3e}  tolerance {:.1e}  n = {:<6} {}",
                p.check_name,
                p.max_abs_residual,
                p.tolerance,
                p.sample_points,
                if p.passed { "ok" } else { "FAILED" }
            )
        })
        .collect()
}

fn with_parts(mut outcome: Outcome, report: &CheckReport) -> Outcome {
    outcome.details.extend(describe(report));
    outcome
}

fn identity_suite() -> Outcome {
    let start = Instant::now();
    let grid = identity_grid(11, 100.0).unwrap();
    let report = check_identities(&grid).unwrap();
    let elapsed = start.elapsed();
    let passed = report.passed && elapsed < Duration::from_secs(1);
    with_parts(
        Outcome::new(passed, format!("{} parameter sets, {:.1} ms", grid.len(), elapsed.as_secs_f64() * 1e3)),
        &report,
    )
}

fn laplace_transform() -> Outcome {
    let (p, _) = fig1();
    let start = Instant::now();
    let report = check_laplace_transform(&p, &[1.5, 2.0, 3.0, 5.0, 10.0], 1e-9).unwrap();
    let elapsed = start.elapsed();
    let passed = report.passed && elapsed < Duration::from_secs(1);
    with_parts(Outcome::new(passed, format!("5 values of theta, {:.1} ms", elapsed.as_secs_f64() * 1e3)), &report)
}

fn generator_identities() -> Outcome {
    let (p, _) = fig1();
    let report = check_generators(&p, &generator_grid(100)).unwrap();
    with_parts(Outcome::new(report.passed, "100 points on [0, 10]"), &report)
}

fn run_verify(extra: &[&str], out: &Path) -> (Option<i32>, serde_json::Value) {
    let run = Command::new(BIN)
        .arg("verify")
        .args(extra)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run capput verify");
    let doc = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    (run.status.code(), doc)
}

fn check_passed(doc: &serde_json::Value, name: &str) -> Option<bool> {
    doc["checks"]
        .as_array()?
        .iter()
        .find(|c| c["check_name"] == name)
        .and_then(|c| c["passed"].as_bool())
}

fn smooth_paste() -> Outcome {
    let (_, pricer) = fig1();
    let report = check_smooth_paste(&pricer, &low_max_x_bar_grid(&pricer, 8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (code, doc) = run_verify(&["--perturb-astar", "0.01"], &dir.path().join("perturbed.json"));
    let perturbed_paste = check_passed(&doc, "smooth_paste");
    let passed = report.passed && code == Some(1) && perturbed_paste == Some(false);
    with_parts(
        Outcome::new(passed, format!("a* = {:.9}, perturbed run exit {:?}", pricer.barrier(), code)),
        &report,
    )
    .detail(format!("perturbed a* + 0.01: smooth_paste passed = {perturbed_paste:?}"))
}

fn hjb_residual() -> Outcome {
    let (p, pricer) = fig1();
    let grid = HjbGrid::interior(&pricer, 10, 12, HJB_STEP, 4e-3).unwrap();
    let mut low = 0;
    let mut high = 0;
    for s in &grid.points {
        match pricer.classify(s).unwrap() {
            Regime::ContinuationLowMax => low += 1,
            Regime::ContinuationHighMax => high += 1,
            _ => {}
        }
    }
    let report = check_hjb(&pricer, &grid).unwrap();
    let required = ["hjb_continuation", "hjb_stopping_sign", "hjb_stopping_exact"];
    let required_pass = required.iter().all(|n| report.part(n).map_or(false, |r| r.passed));
    let passed = required_pass && low + high >= 200 && low > 0 && high > 0;
    let order = report.part("hjb_fd_order").map(|r| r.passed);
    with_parts(
        Outcome::new(passed, format!("{low} low-max + {high} high-max points, -rK = {:.3e}", -p.r * p.strike_k)),
        &report,
    )
    .detail(format!("central-difference order within 0.25 of 2: {order:?}"))
}

fn normal_reflection() -> Outcome {
    let (_, pricer) = fig1();
    let report = check_normal_reflection(&pricer, &reflection_x_bar_grid(&pricer, 25)).unwrap();
    let both = report.part("reflection_low_max").is_some() && report.part("reflection_high_max").is_some();
    let passed = report.passed && report.sample_points >= 50 && both;
    with_parts(Outcome::new(passed, format!("{} points", report.sample_points)), &report)
}

fn regime_continuity() -> Outcome {
    let (_, pricer) = fig1();
    let report = check_continuity(&pricer, CONTINUITY_EPS, 8).unwrap();
    with_parts(Outcome::new(report.passed, format!("eps = {CONTINUITY_EPS:e}")), &report)
}

fn mc_config(p: &ModelParams) -> McConfig {
    McConfig::with_discount_tolerance(p, MC_PATHS, MC_DT, MC_DISCOUNT_TOL, MC_SEED).unwrap()
}

fn mc_agreement() -> Outcome {
    let (p, pricer) = fig1();
    let cfg = mc_config(&p);
    let states: Vec<MarketState> = representative_states(&pricer).into_iter().map(|(_, s)| s).collect();
    let start = Instant::now();
    let comparisons = compare_with_mc(&pricer, &states, &cfg, &MC_STRIDES).unwrap();
    let elapsed = start.elapsed();
    let report = mc_report(&comparisons);
    let mut monotone = true;
    let mut outcome = Outcome::new(false, "");
    for cmp in &comparisons {
        let errs = cmp.errors();
        let ok = cmp.converges_monotonically();
        monotone &= ok;
        let e = cmp.finest();
        outcome = outcome.detail(format!(
            "{:<22} closed {:.6}  mc {:.6} (se {:.2e})  |diff| {:.3e} vs allowance {:.3e} {}  |diff| at dt 4e-4, 2e-4: {:.3e} {:.3e} {}",
            cmp.regime.as_str(),
            cmp.closed_form,
            e.mean,
            e.stderr.unwrap_or(0.0),
            cmp.abs_error(),
            cmp.allowance,
            if cmp.abs_error() <= cmp.allowance { "ok" } else { "FAILED" },
            errs[2],
            errs[1],
            if ok { "monotone" } else { "NOT monotone" },
        ));
        if let [fine, mid, _] = cmp.estimates.as_slice() {
            // Diagnostic only: discrete-monitoring bias scales like sqrt(dt).
            let extrapolated = fine.mean - (mid.mean - fine.mean) / (2f64.sqrt() - 1.0);
            if cmp.regime.is_continuation() {
                outcome = outcome.detail(format!("{:<22} sqrt(dt) extrapolation {:.6}", "", extrapolated));
            }
        }
    }
    let in_budget = elapsed <= MC_BUDGET;
    outcome.passed = report.passed && monotone && in_budget;
    outcome.summary = format!(
        "{} paths, dt {MC_DT:e}, t_max {:.2}, truncation bound {:.2e}, {:.1} s (budget {} s)",
        cfg.n_paths,
        cfg.t_max,
        cfg.truncation_bound(&p),
        elapsed.as_secs_f64(),
        MC_BUDGET.as_secs()
    );
    outcome
}

fn barrier_optimality() -> Outcome {
    let (p, pricer) = fig1();
    let cfg = mc_config(&p);
    let a = pricer.barrier();
    let grid: Vec<f64> = SEARCH_OFFSETS.iter().map(|d| a + d).collect();
    let state = MarketState::from_prices(100.0, 100.0).unwrap();
    let search = barrier_search(&p, &state, &cfg, &grid).unwrap();
    let best = grid.iter().position(|&g| g == search.best_barrier).unwrap();
    let centre = SEARCH_OFFSETS.iter().position(|&d| d == 0.0).unwrap();
    let passed = best.abs_diff(centre) <= 1;
    let mut outcome = Outcome::new(
        passed,
        format!("argmax at a* {:+.2} (grid index {best}, a* at {centre})", SEARCH_OFFSETS[best]),
    );
    for (offset, (_, e)) in SEARCH_OFFSETS.iter().zip(&search.value_curve) {
        outcome = outcome.detail(format!("a* {offset:+.2}: {:.6} (se {:.2e})", e.mean, e.stderr.unwrap_or(0.0)));
    }
    outcome
}

fn figure3_reproduction() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("fig3a.csv"), dir.path().join("fig3b.csv")];
    for path in &paths {
        let status = Command::new(BIN).args(["sweep", "--figure", "3", "--out"]).arg(path).status().unwrap();
        if !status.success() {
            return Outcome::new(false, format!("sweep exited with {status}"));
        }
    }
    let bytes: Vec<Vec<u8>> = paths.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let identical = bytes[0] == bytes[1];

    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes[0].as_slice());
    let headers = reader.headers().unwrap().clone();
    let expected = ["x", "xbar", "r", "sigma", "c", "K", "a_star", "exp_a_star", "regime", "price"];
    let header_ok = headers.iter().eq(expected.iter().copied());
    let mut rows: Vec<(f64, f64, f64)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.unwrap();
        let num = |i: usize| rec[i].parse::<f64>().unwrap();
        rows.push((num(2), num(3), num(7)));
    }
    let mut rs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut sigmas: Vec<f64> = rows.iter().map(|r| r.1).collect();
    rs.dedup();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    sigmas.sort_by(f64::total_cmp);
    sigmas.dedup();
    let barrier = |r: f64, s: f64| rows.iter().find(|row| row.0 == r && row.1 == s).map(|row| row.2).unwrap();
    let mut r_violations = 0;
    let mut sigma_violations = 0;
    for &s in &sigmas {
        for w in rs.windows(2) {
            if barrier(w[1], s) < barrier(w[0], s) {
                r_violations += 1;
            }
        }
    }
    for &r in &rs {
        for w in sigmas.windows(2) {
            if barrier(r, w[1]) > barrier(r, w[0]) {
                sigma_violations += 1;
            }
        }
    }
    let passed = identical && header_ok && r_violations == 0 && sigma_violations == 0 && rows.len() == rs.len() * sigmas.len();
    Outcome::new(passed, format!("{} x {} grid, {} rows", rs.len(), sigmas.len(), rows.len()))
        .detail(format!("bit-identical across runs: {identical}, header ok: {header_ok}"))
        .detail(format!("violations: increasing r {r_violations}, increasing sigma {sigma_violations}"))
}

fn domination_and_bounds() -> Outcome {
    let (_, pricer) = fig1();
    let dom = check_domination(&pricer, 100).unwrap();
    let inc = check_increment_bound(&pricer, 1000, 7).unwrap();
    let passed = dom.passed && inc.passed;
    let mut outcome = with_parts(Outcome::new(passed, "10^4 grid points, 10^3 random pairs"), &dom);
    outcome = outcome.detail(format!(
        "{:<40} residual {:.3e}  tolerance {:.1e}  n = {}",
        inc.check_name, inc.max_abs_residual, inc.tolerance, inc.sample_points
    ));
    outcome
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("identity suite", identity_suite),
        ("Laplace transform of W", laplace_transform),
        ("generator identities for W and Z", generator_identities),
        ("smooth paste at a*", smooth_paste),
        ("HJB residual", hjb_residual),
        ("normal reflection", normal_reflection),
        ("regime continuity", regime_continuity),
        ("Monte Carlo agreement", mc_agreement),
        ("barrier optimality by MC search", barrier_optimality),
        ("figure-3 barrier sweep", figure3_reproduction),
        ("domination and bounds", domination_and_bounds),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = run();
        if !outcome.passed {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<34} {}  {}",
            i + 1,
            name,
            if outcome.passed { "PASS" } else { "FAIL" },
            outcome.summary
        );
        for line in &outcome.details {
            println!("    {line}");
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
