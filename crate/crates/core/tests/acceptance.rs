//! Acceptance criteria. Each test prints one `criterion N: PASS|FAIL` line to stderr
//! (uncaptured) before asserting.

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use o2bp::bessel::{besq_transition_cdf, bessel_hitting_zero_cdf};
use o2bp::integrator::{correlated_increments, drift_implicit_step, implicit_root, truncated_step, Simulator};
use o2bp::montecarlo::{
    hitting_probability, hitting_times, importance_estimate, martingale_drift_test, stationary_report,
    stationary_sample, ImportanceMode, MartingaleConfig, MartingaleFunctional, StationaryConfig, StationaryReport,
    StationarySamples, TestFunctional,
};
use o2bp::regime::*;
use o2bp::rng::PathRng;
use o2bp::stats::ks_test_unsorted;
use o2bp::{EnsembleConfig, EventSpec, HitTarget, O2bpParams, PathState, StartSpec, StepConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Tolerances and sizes.
const CLASSIFIER_MAX_SECONDS: f64 = 1.0;
const STATIONARY_KS: f64 = 0.02;
const STATIONARY_COUNT: usize = 10_000;
const STATIONARY_PATHS: usize = 5_000;
const BETA_GAMMA_MAX_CORR: f64 = 0.05;
const CORNER_HIT_MIN: f64 = 0.95;
const CORNER_AVOID_MAX: f64 = 0.01;
const HIT_PATHS: usize = 1_000;
const EDGE_TOLERANCE: f64 = 0.02;
const EDGE_PATHS: usize = 10_000;
const COUPLING_SEEDS: u64 = 100;
const COUPLING_REL: f64 = 1e-12;
const REDUCTION_KS: f64 = 0.02;
const REDUCTION_PATHS: usize = 10_000;
const MARTINGALE_PATHS: usize = 100_000;
const MARTINGALE_SE: f64 = 3.0;
const SIGN_DRAWS: usize = 1_000;
const IMPORTANCE_PATHS: usize = 100_000;
const IMPORTANCE_SE: f64 = 3.0;
const MEAN_SE: f64 = 3.0;

fn report(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    // Direct write: the test harness only captures the print macros.
    let _ = writeln!(std::io::stderr(), "criterion {n}: {status} {detail}");
}

fn prm(alpha: f64, beta: f64, gamma: f64, delta: f64, rho: f64) -> O2bpParams {
    O2bpParams::new(alpha, beta, gamma, delta, rho)
}

fn point(x: f64, y: f64) -> StartSpec {
    StartSpec::Point { x, y }
}

fn ensemble(n_paths: usize, seed: u64, horizon: f64, start: StartSpec) -> EnsembleConfig {
    EnsembleConfig::new(n_paths, seed, horizon, start)
}

fn corner(status: CornerStatus, witness: Option<ConditionTag>) -> CornerVerdict {
    CornerVerdict { status, witness }
}

#[test]
fn criterion_01_classifier_table() {
    let started = Instant::now();
    let avoided = CornerStatus::AvoidedGuaranteed;
    let mut failures = Vec::new();
    let mut cases = 0;
    let mut check = |label: &str, ok: bool| {
        cases += 1;
        if !ok {
            failures.push(label.to_string());
        }
    };

    check("quadratic boundary", quadratic_nonneg(1.0, -2.0, 1.0));
    check("quadratic negative", !quadratic_nonneg(1.0, -3.0, 1.0));
    check("quadratic zero diagonal", quadratic_nonneg(0.0, 1.0, 0.0));

    check("C1 holds", check_c1(&prm(0.3, 0.5, 0.5, 0.3, 0.0)));
    check("C1 negative beta", !check_c1(&prm(0.3, -0.1, 0.5, 0.3, 0.0)));
    check("C1 rho too large", !check_c1(&prm(0.1, 0.0, 0.0, 0.1, 0.5)));

    check("C3 at (1,1)", check_c3_at(&prm(1.0, -1.0, 1.0, 1.0, 0.0), 1.0, 1.0));
    check("C3 boundary", check_c3_at(&prm(0.5, -0.5, 0.5, 0.5, 0.0), 1.0, 1.0));
    check("C3 infeasible", !check_c3_at(&prm(0.1, -1.0, -1.0, 0.1, 0.0), 1.0, 1.0));

    check("search closed form", search_c3(&prm(1.0, -1.0, 1.0, 1.0, 0.0)) == Some((1.0, 1.0)));
    let p = prm(0.3, 0.5, 0.5, 0.3, 0.0);
    check("search finds witness", search_c3(&p).is_some_and(|(l, m)| check_c3_at(&p, l, m)));
    check("search absent", search_c3(&prm(0.1, -5.0, -5.0, 0.1, 0.9)).is_none());
    let p = prm(0.5, 0.5, -0.5, 0.5, 0.0);
    check("antisymmetric sufficient condition", check_cor4_2(&p) && search_c3(&p).is_some());
    let p = prm(0.75, -0.5, -0.5, 0.75, 0.0);
    check("negative symmetric sufficient condition", check_cor4_2(&p) && search_c3(&p).is_some());

    check("corner C2a", corner_verdict(&prm(0.6, 0.2, -3.0, 0.6, 0.0)) == corner(avoided, Some(ConditionTag::C2a)));
    check(
        "corner hit",
        corner_verdict(&prm(0.25, 0.0, 0.0, 0.25, 1.0))
            == corner(CornerStatus::HitsAlmostSurely, Some(ConditionTag::Prop5_4)),
    );
    check("corner unknown", corner_verdict(&prm(0.25, -1.0, -1.0, 0.25, 0.0)) == corner(CornerStatus::Unknown, None));

    let e = existence_class(&prm(1.0, 0.5, 0.5, 1.0, 0.0)).unwrap();
    check(
        "existence full quadrant",
        e.kind == ExistenceKind::UniqueInFullQuadrant && e.basis == Some(TheoremTag::Thm5_1_3),
    );
    let e = existence_class(&prm(0.25, -0.5, -0.5, 0.25, 0.5)).unwrap();
    check("existence none", e.kind == ExistenceKind::NoSolution && e.basis == Some(TheoremTag::Thm5_3_2));
    let e = existence_class(&prm(0.3, -0.4, -0.3, 0.4, -1.0)).unwrap();
    check("existence degenerate", e.kind == ExistenceKind::DegenerateLineSystem);
    check("existence rejects invalid", existence_class(&prm(-1.0, 0.0, 0.0, 1.0, 0.0)).is_err());

    let (x, y) = edge_verdicts(&prm(1.0, -0.2, -0.2, 1.0, 0.0));
    check("edges avoided", x.status == EdgeStatus::Avoided && y.status == EdgeStatus::Avoided);
    check("x edge hit", edge_verdicts(&prm(0.25, -1.0, 0.0, 1.0, 0.0)).0.status == EdgeStatus::HitAS);
    check("x edge unknown", edge_verdicts(&prm(0.25, 1.0, 0.0, 1.0, 0.0)).0.status == EdgeStatus::Unknown);

    let law = |a, b, c, d| StationaryLaw { a, b, c, d };
    check(
        "stationary law",
        stationary_law(&prm(1.0, -1.0, 1.0, 1.0, 0.0).with_drift(1.0, 2.0)) == Ok(law(3.0, 3.0, 3.0, 1.0)),
    );
    check(
        "stationary decoupled",
        stationary_law(&prm(1.0, 0.0, 0.0, 1.0, 0.0).with_drift(1.0, 1.0)) == Ok(law(3.0, 3.0, 2.0, 2.0)),
    );
    check("stationary absent", stationary_law(&prm(1.0, 1.0, 1.0, 1.0, 0.5).with_drift(1.0, 1.0)).is_err());

    check("coefficient zero", supermartingale_coefficient(&prm(1.0, 0.0, 0.0, 1.0, 0.0)) == 0.0);
    check("coefficient strict", supermartingale_coefficient(&prm(1.0, 0.0, 0.0, 1.0, -0.5)) == -0.5);
    check("coefficient full", supermartingale_coefficient(&prm(1.0, 1.0, 1.0, 1.0, 1.0)) == -1.0);

    // Full report for the drifted skew-symmetric example.
    let r = classify(&prm(1.0, -1.0, 1.0, 1.0, 0.0).with_drift(1.0, 2.0)).unwrap();
    check("report stationary", r.stationary_law == Some(law(3.0, 3.0, 3.0, 1.0)));
    check("report corner", r.corner.status == avoided && r.corner.witness.is_some_and(|w| witness_holds(&r.params, w)));
    check(
        "report existence",
        r.existence.kind == ExistenceKind::UniqueInPuncturedQuadrant && r.existence.basis == Some(TheoremTag::Thm5_2),
    );
    check("report Cor4_3 holds", check_cor4_3(&r.params));

    let elapsed = started.elapsed().as_secs_f64();
    let pass = failures.is_empty() && elapsed < CLASSIFIER_MAX_SECONDS;
    report(1, pass, &format!("({cases} cases, {elapsed:.3}s, failures: {failures:?})"));
    assert!(pass);
}

fn stationary_params() -> O2bpParams {
    prm(1.0, -1.0, 1.0, 1.0, 0.0).with_drift(1.0, 2.0)
}

fn stationary_config() -> (EnsembleConfig, StationaryConfig) {
    let mut cfg = ensemble(STATIONARY_PATHS, 20_250_101, 1.0, StartSpec::StationaryDraw);
    cfg.step.dt = 1e-3;
    let sc = StationaryConfig { burn_in: 5.0, spacing: 0.5, count: STATIONARY_COUNT, force: false };
    (cfg, sc)
}

fn stationary_run() -> &'static (StationarySamples, StationaryReport) {
    static RUN: OnceLock<(StationarySamples, StationaryReport)> = OnceLock::new();
    RUN.get_or_init(|| {
        let (cfg, sc) = stationary_config();
        let samples = stationary_sample(&stationary_params(), &cfg, &sc).unwrap();
        let report = stationary_report(&samples).unwrap();
        (samples, report)
    })
}

#[test]
fn criterion_02_stationary_product_law() {
    let (samples, r) = stationary_run();
    let pass = samples.samples.len() == STATIONARY_COUNT
        && r.ks_x.statistic <= STATIONARY_KS
        && r.ks_y.statistic <= STATIONARY_KS
        && r.mean_x.within(1.0, MEAN_SE)
        && r.mean_y.within(3.0, MEAN_SE);
    report(
        2,
        pass,
        &format!(
            "(KS x {:.4}, KS y {:.4}, mean x {:.4} +/- {:.4}, mean y {:.4} +/- {:.4})",
            r.ks_x.statistic, r.ks_y.statistic, r.mean_x.mean, r.mean_x.se, r.mean_y.mean, r.mean_y.se
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_03_beta_gamma_transform() {
    let (_, r) = stationary_run();
    let pass = r.ks_w.statistic <= STATIONARY_KS
        && r.ks_z.statistic <= STATIONARY_KS
        && r.corr_wz.abs() <= BETA_GAMMA_MAX_CORR;
    report(3, pass, &format!("(KS w {:.4}, KS z {:.4}, corr {:.4})", r.ks_w.statistic, r.ks_z.statistic, r.corr_wz));
    assert!(pass);
}

#[test]
fn criterion_04_corner_hit_positive_case() {
    let p = prm(0.25, 0.0, 0.0, 0.25, 1.0);
    let mut cfg = ensemble(HIT_PATHS, 404, 20.0, point(0.1, 0.1));
    cfg.events.corner = 1e-3;
    let h = hitting_probability(&p, &cfg, HitTarget::Corner).unwrap();
    // With rho = 1 both coordinates follow one Bessel path of dimension 1.5 from 0.1.
    let exact = bessel_hitting_zero_cdf(0.1, 1.5, 20.0).unwrap();
    let pass = h.frequency >= CORNER_HIT_MIN;
    report(
        4,
        pass,
        &format!(
            "(frequency {:.3} +/- {:.3}, required >= {CORNER_HIT_MIN}, exact hitting probability {exact:.4})",
            h.frequency, h.ci_halfwidth
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_05_corner_avoidance() {
    let p = prm(0.3, 0.5, 0.5, 0.3, 0.0);
    let mut cfg = ensemble(HIT_PATHS, 505, 20.0, point(0.1, 0.1));
    cfg.events.corner = 1e-4;
    let h = hitting_probability(&p, &cfg, HitTarget::Corner).unwrap();
    let pass = h.frequency <= CORNER_AVOID_MAX;
    report(5, pass, &format!("(frequency {:.4})", h.frequency));
    assert!(pass);
}

#[test]
fn criterion_06_edge_hitting_oracle() {
    let p = prm(0.25, 0.0, 0.0, 1.0, 0.0);
    let mut cfg = ensemble(EDGE_PATHS, 606, 10.0, point(1.0, 1.0));
    cfg.step.dt = 1e-3;
    cfg.events.x_edge = 1e-3;
    let events = hitting_times(&p, &cfg, Some(HitTarget::XEdge)).unwrap();
    let mut pass = true;
    let mut detail = String::new();
    for t in [1.0, 5.0, 10.0] {
        let f = events.iter().filter(|e| e.x_edge_time.is_some_and(|s| s <= t)).count() as f64 / events.len() as f64;
        let exact = bessel_hitting_zero_cdf(1.0, 1.5, t).unwrap();
        pass &= (f - exact).abs() <= EDGE_TOLERANCE;
        detail.push_str(&format!(" T={t}: {f:.4} vs {exact:.4};"));
    }
    report(6, pass, &format!("({})", detail.trim()));
    assert!(pass);
}

fn random_params(rng: &mut ChaCha8Rng, beta: (f64, f64), gamma: (f64, f64)) -> O2bpParams {
    prm(
        rng.random_range(0.1..2.0),
        rng.random_range(beta.0..=beta.1),
        rng.random_range(gamma.0..=gamma.1),
        rng.random_range(0.1..2.0),
        rng.random_range(-1.0..=1.0),
    )
}

#[test]
fn criterion_07_coupling_invariants() {
    let cfg = StepConfig::with_dt(1e-3);
    let steps = 2_000;
    let (mut dominance, mut monotone, mut scaling) = (true, true, true);
    let levels = [1u32, 2, 5, 10, 100, 1000, 100_000];
    for seed in 0..COUPLING_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = PathState::new(rng.random_range(0.01..2.0), rng.random_range(0.01..2.0));

        // (a) X dominates the Bessel path driven by the same increments when beta >= 0.
        let p = random_params(&mut rng, (0.0, 2.0), (-2.0, 2.0)).with_drift(rng.random_range(0.0..1.0), 0.0);
        let (mut s, mut u) = (start, start.x);
        for _ in 0..steps {
            let (db, dc) = correlated_increments(p.rho, cfg.dt, &mut rng);
            s = drift_implicit_step(s, &p, db, dc, &cfg);
            u = implicit_root(u + db - p.theta * cfg.dt, p.alpha * cfg.dt);
            dominance &= s.x >= u * (1.0 - COUPLING_REL);
        }

        // (b) Truncated paths are nonincreasing in n for beta, gamma <= 0.
        let p = random_params(&mut rng, (-2.0, 0.0), (-2.0, 0.0));
        let mut states = vec![start; levels.len()];
        for _ in 0..steps {
            let (db, dc) = correlated_increments(p.rho, cfg.dt, &mut rng);
            for (st, &n) in states.iter_mut().zip(&levels) {
                *st = truncated_step(*st, &p, db, dc, n, cfg.dt);
            }
            for w in states.windows(2) {
                let positive = w[1].x > 0.0 && w[1].y > 0.0;
                monotone &=
                    !positive || (w[1].x <= w[0].x * (1.0 + COUPLING_REL) && w[1].y <= w[0].y * (1.0 + COUPLING_REL));
            }
        }

        // (c) One step commutes with Brownian rescaling.
        let p = random_params(&mut rng, (-2.0, 2.0), (-2.0, 2.0));
        let c: f64 = rng.random_range(0.1..10.0);
        let scaled_cfg = StepConfig::with_dt(cfg.dt / (c * c));
        let mut s = start;
        for _ in 0..steps {
            let (db, dc) = correlated_increments(p.rho, cfg.dt, &mut rng);
            let next = drift_implicit_step(s, &p, db, dc, &cfg);
            let small = drift_implicit_step(PathState::new(s.x / c, s.y / c), &p, db / c, dc / c, &scaled_cfg);
            scaling &= (next.x / c - small.x).abs() <= COUPLING_REL * small.x
                && (next.y / c - small.y).abs() <= COUPLING_REL * small.y;
            s = next;
        }
    }
    let pass = dominance && monotone && scaling;
    report(
        7,
        pass,
        &format!("(dominance {dominance}, monotone in n {monotone}, scaling {scaling}; {COUPLING_SEEDS} seeds)"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_bessel_reduction() {
    let mut pass = true;
    let mut detail = String::new();
    for alpha in [0.25, 0.75] {
        let p = prm(alpha, 0.0, 0.0, 1.0, 0.0);
        let sim =
            Simulator::new(p, StepConfig::with_dt(1e-3), EventSpec { bridge: false, ..EventSpec::default() }).unwrap();
        let terminal: Vec<f64> = (0..REDUCTION_PATHS as u64)
            .map(|i| sim.run(PathState::new(1.0, 1.0), 1.0, &mut PathRng::primary(808, i), |_, _, _| true).unwrap().0.x)
            .collect();
        let d = p.x_dimension();
        let ks = ks_test_unsorted(&terminal, |x| besq_transition_cdf(1.0, d, 1.0, x * x)).unwrap();
        pass &= ks.statistic <= REDUCTION_KS;
        detail.push_str(&format!(" d={d}: KS {:.4};", ks.statistic));
    }
    report(8, pass, &format!("({})", detail.trim()));
    assert!(pass);
}

// Dyadic draws keep every product below exact in binary floating point.
fn dyadic(rng: &mut ChaCha8Rng, lo: i32, hi: i32) -> f64 {
    f64::from(rng.random_range(lo..=hi)) / 64.0
}

#[test]
fn criterion_09_martingale_diagnostics() {
    let times = vec![0.5, 1.0, 2.0];
    let run = |p: O2bpParams, f, seed| {
        let mut cfg = ensemble(MARTINGALE_PATHS, seed, 2.0, point(1.0, 1.0));
        cfg.step.dt = 1e-3;
        martingale_drift_test(&p, &cfg, &MartingaleConfig { functional: f, times: times.clone(), box_k: 100.0 })
            .unwrap()
    };
    let strict = run(prm(1.0, 0.0, 0.0, 1.0, -0.5), MartingaleFunctional::PowerProduct, 901);
    let equality = run(prm(1.0, 0.0, 0.0, 1.0, 0.0), MartingaleFunctional::PowerProduct, 902);
    let log = run(prm(0.5, 1.0, 1.0, 0.5, 0.0), MartingaleFunctional::LogCombo, 903);
    let strict_ok = strict.nonincreasing_within(MARTINGALE_SE);
    let equality_ok = equality.constant_within(MARTINGALE_SE);
    let log_ok = log.constant_within(MARTINGALE_SE);

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut sign_ok = true;
    let mut drawn = 0;
    let mut equalities = 0;
    while drawn < SIGN_DRAWS {
        let (alpha, delta) = (dyadic(&mut rng, 33, 192), dyadic(&mut rng, 33, 192));
        let (a1, d1) = (2.0 * alpha - 1.0, 2.0 * delta - 1.0);
        let rho = dyadic(&mut rng, -63, 64);
        let gamma = dyadic(&mut rng, -128, 128);
        // Every other draw sits on the boundary of the third inequality.
        let beta = if drawn % 2 == 0 { (rho * a1 * d1 - gamma * d1) / a1 } else { dyadic(&mut rng, -128, 128) };
        let p = prm(alpha, beta, gamma, delta, rho);
        // Feasibility in multiplied-out form, exact for these draws.
        let slack = beta * a1 + gamma * d1 - rho * a1 * d1;
        if slack < 0.0 || p.validate().is_err() || beta * 64.0 != (beta * 64.0).round() {
            continue;
        }
        drawn += 1;
        let k = supermartingale_coefficient(&p);
        equalities += (slack == 0.0) as usize;
        sign_ok &= k <= 0.0 && ((k == 0.0) == (slack == 0.0)) && supermartingale_conditions(&p).is_ok();
    }

    let pass = strict_ok && equality_ok && log_ok && sign_ok;
    let fmt = |r: &o2bp::montecarlo::MartingaleReport| {
        r.means.iter().map(|m| format!("{:.4}+/-{:.4}", m.mean, m.se)).collect::<Vec<_>>().join(" ")
    };
    report(
        9,
        pass,
        &format!(
            "(strict [{}] from {}; equality [{}]; log [{}]; sign {sign_ok} over {drawn} draws, {equalities} on the boundary)",
            fmt(&strict),
            strict.initial,
            fmt(&equality),
            fmt(&log)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_importance_sampling() {
    let mut pass = true;
    let mut detail = String::new();
    let cases = [
        (ImportanceMode::Prop81, prm(1.0, 0.4, 0.0, 1.0, 0.0), 1001),
        (ImportanceMode::Prop82, prm(1.0, 0.4, -0.3, 1.0, 0.0), 1002),
    ];
    for (mode, p, seed) in cases {
        let mut cfg = ensemble(IMPORTANCE_PATHS, seed, 1.0, point(1.0, 1.0));
        cfg.step.dt = 1e-3;
        let r = importance_estimate(&p, &cfg, mode, TestFunctional::ExpNegSum).unwrap();
        let ok = r.consistent_within(IMPORTANCE_SE) && r.weight.within(1.0, IMPORTANCE_SE);
        pass &= ok;
        detail.push_str(&format!(
            " {mode:?}: direct {:.5}+/-{:.5}, weighted {:.5}+/-{:.5}, weight {:.4}+/-{:.4};",
            r.direct.mean, r.direct.se, r.weighted.mean, r.weighted.se, r.weight.mean, r.weight.se
        ));
    }
    report(10, pass, &format!("({})", detail.trim()));
    assert!(pass);
}

fn stationary_csv(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let (cfg, sc) = stationary_config();
    let samples = pool.install(|| stationary_sample(&stationary_params(), &cfg, &sc).unwrap());
    let mut out = b"x,y\n".to_vec();
    for (x, y) in samples.samples {
        writeln!(out, "{x},{y}").unwrap();
    }
    out
}

fn hitting_csv(threads: usize) -> Vec<u8> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
    let mut cfg = ensemble(HIT_PATHS, 505, 20.0, point(0.1, 0.1));
    cfg.events.corner = 1e-4;
    let events = pool.install(|| hitting_times(&prm(0.3, 0.5, 0.5, 0.3, 0.0), &cfg, None).unwrap());
    let mut out = b"path_id,event,time\n".to_vec();
    for (i, e) in events.iter().enumerate() {
        for (name, t) in [("corner", e.corner_time), ("x_edge", e.x_edge_time), ("y_edge", e.y_edge_time)] {
            if let Some(t) = t {
                writeln!(out, "{i},{name},{t}").unwrap();
            }
        }
    }
    out
}

#[test]
fn criterion_11_determinism() {
    let stationary_same = stationary_csv(1) == stationary_csv(4);
    let hitting_same = hitting_csv(1) == hitting_csv(3);
    let pass = stationary_same && hitting_same;
    report(
        11,
        pass,
        &format!("(stationary samples identical {stationary_same}, hitting events identical {hitting_same})"),
    );
    assert!(pass);
}
