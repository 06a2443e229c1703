//! Ensemble experiments: boundary hitting, stationary sampling, martingale
//! diagnostics and change-of-measure estimators.
//!
//! Paths run in parallel but every path draws from its own streams keyed by
//! `(seed, path_index)` and results are folded in index order, so outputs do
//! not depend on the thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::integrator::{
    correlated_increments, drift_implicit_step, step, EventSpec, Events, PathState, Simulator, StepConfig,
};
use crate::params::O2bpParams;
use crate::regime::{stationary_law, supermartingale_conditions, StationaryLaw};
use crate::rng::{PathRng, Role};
use crate::stats::{
    beta_gamma_transform, correlation, gamma_sample, ks_test_unsorted, BetaLaw, Estimate, GammaLaw, KsResult,
};

pub const DEFAULT_BURN_IN: f64 = 5.0;
pub const DEFAULT_SPACING: f64 = 0.5;
pub const DEFAULT_BOX: f64 = 100.0;
/// Martingale paths refine the grid step to at most this multiple of `min(x, y)^2`.
pub const MARTINGALE_REFINE: f64 = 0.001;

/// Where paths start.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StartSpec {
    Point {
        x: f64,
        y: f64,
    },
    /// The mean `(a/c, b/d)` of the stationary law.
    StationaryMean,
    /// An independent draw from the stationary law per path.
    StationaryDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub step: StepConfig,
    pub horizon: f64,
    pub start: StartSpec,
    #[serde(default)]
    pub events: EventSpec,
}

impl EnsembleConfig {
    pub fn new(n_paths: usize, seed: u64, horizon: f64, start: StartSpec) -> Self {
        Self { n_paths, seed, step: StepConfig::default(), horizon, start, events: EventSpec::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.n_paths >= 1, InvalidConfig, "n_paths must be >= 1");
        ensure!(
            self.horizon > 0.0 && self.horizon.is_finite(),
            InvalidConfig,
            "horizon must be > 0 (got {})",
            self.horizon
        );
        self.step.validate()?;
        self.events.validate()?;
        if let StartSpec::Point { x, y } = self.start {
            ensure!(
                x >= 0.0 && y >= 0.0 && x.is_finite() && y.is_finite(),
                InvalidConfig,
                "start ({x}, {y}) is outside the quadrant"
            );
        }
        Ok(())
    }
}

/// Initial state of one path, drawing from `rng.start` for a stationary draw.
pub fn start_state(p: &O2bpParams, start: StartSpec, rng: &mut PathRng) -> Result<PathState> {
    let law =
        || stationary_law(p).map_err(|e| Error::Precondition(format!("stationary start needs a stationary law: {e}")));
    Ok(match start {
        StartSpec::Point { x, y } => PathState::new(x, y),
        StartSpec::StationaryMean => {
            let (x, y) = law()?.mean();
            PathState::new(x, y)
        }
        StartSpec::StationaryDraw => {
            let law = law()?;
            let x = gamma_sample(law.x_law(), &mut rng.start);
            let y = gamma_sample(law.y_law(), &mut rng.start);
            PathState::new(x, y)
        }
    })
}

/// Runs `f(path_index)` over all paths in parallel, returning results in index order.
fn map_paths<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

fn quiet(events: &EventSpec) -> EventSpec {
    EventSpec { bridge: false, ..*events }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitTarget {
    Corner,
    XEdge,
    YEdge,
}

impl HitTarget {
    pub fn time(self, ev: &Events) -> Option<f64> {
        match self {
            Self::Corner => ev.corner_time,
            Self::XEdge => ev.x_edge_time,
            Self::YEdge => ev.y_edge_time,
        }
    }

    pub fn threshold(self, spec: &EventSpec) -> f64 {
        match self {
            Self::Corner => spec.corner,
            Self::XEdge => spec.x_edge,
            Self::YEdge => spec.y_edge,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Corner => "corner",
            Self::XEdge => "x_edge",
            Self::YEdge => "y_edge",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub target: HitTarget,
    pub frequency: f64,
    /// Normal-approximation 95% half-width `1.96 sqrt(f (1 - f) / n)`.
    pub ci_halfwidth: f64,
    pub threshold: f64,
    pub horizon: f64,
    pub hits: usize,
    pub n_paths: usize,
}

impl HittingEstimate {
    pub fn from_events(events: &[Events], target: HitTarget, cfg: &EnsembleConfig) -> Self {
        let n = events.len();
        let hits = events.iter().filter(|e| target.time(e).is_some_and(|t| t <= cfg.horizon)).count();
        let f = hits as f64 / n as f64;
        Self {
            target,
            frequency: f,
            ci_halfwidth: 1.96 * (f * (1.0 - f) / n as f64).sqrt(),
            threshold: target.threshold(&cfg.events),
            horizon: cfg.horizon,
            hits,
            n_paths: n,
        }
    }
}

/// Event times of every path. With `stop_on`, a path stops once that event has fired.
pub fn hitting_times(p: &O2bpParams, cfg: &EnsembleConfig, stop_on: Option<HitTarget>) -> Result<Vec<Events>> {
    cfg.validate()?;
    let sim = Simulator::new(*p, cfg.step, cfg.events)?;
    map_paths(cfg.n_paths, |i| {
        let mut rng = PathRng::primary(cfg.seed, i);
        let start = start_state(p, cfg.start, &mut rng)?;
        let (_, ev) = sim.run(start, cfg.horizon, &mut rng, |_, _, ev| match stop_on {
            Some(target) => target.time(ev).is_none(),
            None => !ev.all_fired(),
        })?;
        Ok(ev)
    })
}

pub fn hitting_probability(p: &O2bpParams, cfg: &EnsembleConfig, target: HitTarget) -> Result<HittingEstimate> {
    let events = hitting_times(p, cfg, Some(target))?;
    Ok(HittingEstimate::from_events(&events, target, cfg))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationaryConfig {
    pub burn_in: f64,
    pub spacing: f64,
    pub count: usize,
    /// Sample even when no stationary law is known (exploratory runs).
    #[serde(default)]
    pub force: bool,
}

impl Default for StationaryConfig {
    fn default() -> Self {
        Self { burn_in: DEFAULT_BURN_IN, spacing: DEFAULT_SPACING, count: 10_000, force: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarySamples {
    /// Pooled `(x, y)` samples, grouped by path in index order.
    pub samples: Vec<(f64, f64)>,
    pub per_path: usize,
    pub law: Option<StationaryLaw>,
}

fn grid_index(t: f64, dt: f64, what: &str) -> Result<usize> {
    let k = (t / dt).round();
    ensure!((k * dt - t).abs() <= 1e-9 * t.max(1.0), InvalidConfig, "{what} {t} is not a multiple of dt = {dt}");
    Ok(k as usize)
}

/// Samples at `burn_in + j spacing`, `j = 0..ceil(count / n_paths)`, from every path,
/// pooled and truncated to `count`. `cfg.horizon` is not used.
pub fn stationary_sample(p: &O2bpParams, cfg: &EnsembleConfig, sc: &StationaryConfig) -> Result<StationarySamples> {
    cfg.validate()?;
    ensure!(sc.burn_in > 0.0 && sc.spacing > 0.0, InvalidConfig, "burn_in and spacing must be > 0");
    ensure!(sc.count >= 1, InvalidConfig, "count must be >= 1");
    let law = match stationary_law(p) {
        Ok(law) => Some(law),
        Err(e) if !sc.force => {
            return Err(Error::Precondition(format!("no stationary law: {e}")));
        }
        Err(_) => None,
    };
    let per_path = sc.count.div_ceil(cfg.n_paths);
    let dt = cfg.step.dt;
    let first = grid_index(sc.burn_in, dt, "burn_in")?;
    let gap = grid_index(sc.spacing, dt, "spacing")?;
    ensure!(first >= 1 && gap >= 1, InvalidConfig, "burn_in and spacing must be at least dt");
    let last = first + gap * (per_path - 1);
    let sim = Simulator::new(*p, cfg.step, quiet(&cfg.events))?;
    let per_path_samples = map_paths(cfg.n_paths, |i| {
        let mut rng = PathRng::primary(cfg.seed, i);
        let start = start_state(p, cfg.start, &mut rng)?;
        let mut out = Vec::with_capacity(per_path);
        sim.run(start, last as f64 * dt, &mut rng, |k, s, _| {
            if k >= first && (k - first) % gap == 0 {
                out.push((s.x, s.y));
            }
            true
        })?;
        Ok(out)
    })?;
    let mut samples: Vec<(f64, f64)> = per_path_samples.into_iter().flatten().collect();
    samples.truncate(sc.count);
    Ok(StationarySamples { samples, per_path, law })
}

/// Goodness of fit of pooled samples against the product law and its beta-gamma transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryReport {
    pub ks_x: KsResult,
    pub ks_y: KsResult,
    pub ks_w: KsResult,
    pub ks_z: KsResult,
    /// Standard errors from per-path means, since samples on one path are correlated.
    pub mean_x: Estimate,
    pub mean_y: Estimate,
    pub corr_wz: f64,
    pub law: StationaryLaw,
}

fn clustered_mean(values: &[f64], per_path: usize) -> Estimate {
    let clusters: Vec<f64> = values.chunks(per_path).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    let mut e = Estimate::from_values(&clusters);
    e.mean = values.iter().sum::<f64>() / values.len() as f64;
    e.n = values.len();
    e
}

pub fn stationary_report(s: &StationarySamples) -> Result<StationaryReport> {
    let law = s.law.ok_or_else(|| Error::Precondition("no stationary law to test against".into()))?;
    let xs: Vec<f64> = s.samples.iter().map(|v| v.0).collect();
    let ys: Vec<f64> = s.samples.iter().map(|v| v.1).collect();
    let (xl, yl) = (law.x_law(), law.y_law());
    let mut ws = Vec::with_capacity(xs.len());
    let mut zs = Vec::with_capacity(xs.len());
    for &(x, y) in &s.samples {
        let (w, z) = beta_gamma_transform(x, y, law.c, law.d)?;
        ws.push(w);
        zs.push(z);
    }
    let beta = BetaLaw { a: law.a, b: law.b };
    let zl = GammaLaw { shape: law.a + law.b, rate: 1.0 };
    Ok(StationaryReport {
        ks_x: ks_test_unsorted(&xs, |x| xl.cdf_total(x))?,
        ks_y: ks_test_unsorted(&ys, |y| yl.cdf_total(y))?,
        ks_w: ks_test_unsorted(&ws, |w| beta.cdf(w))?,
        ks_z: ks_test_unsorted(&zs, |z| zl.cdf_total(z))?,
        mean_x: clustered_mean(&xs, s.per_path),
        mean_y: clustered_mean(&ys, s.per_path),
        corr_wz: correlation(&ws, &zs),
        law,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleFunctional {
    /// `X^(1-2 alpha) Y^(1-2 delta)`.
    PowerProduct,
    /// `gamma ln X - beta ln Y`.
    LogCombo,
}

impl MartingaleFunctional {
    pub fn eval(self, p: &O2bpParams, x: f64, y: f64) -> f64 {
        match self {
            Self::PowerProduct => x.powf(1.0 - 2.0 * p.alpha) * y.powf(1.0 - 2.0 * p.delta),
            Self::LogCombo => p.gamma * x.ln() - p.beta * y.ln(),
        }
    }

    /// Checks the parameter conditions, naming the first one that fails.
    pub fn check(self, p: &O2bpParams) -> Result<()> {
        match self {
            Self::PowerProduct => supermartingale_conditions(p).map_err(Error::Precondition),
            Self::LogCombo => {
                ensure!(p.alpha == 0.5, Precondition, "alpha = 1/2 fails (alpha = {})", p.alpha);
                ensure!(p.delta == 0.5, Precondition, "delta = 1/2 fails (delta = {})", p.delta);
                let bg = p.beta * p.gamma;
                ensure!(p.rho * bg < bg.abs(), Precondition, "rho*beta*gamma < |beta*gamma| fails");
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleConfig {
    pub functional: MartingaleFunctional,
    pub times: Vec<f64>,
    /// Paths stop on leaving `[1/K, K]^2`.
    #[serde(default = "default_box")]
    pub box_k: f64,
}

fn default_box() -> f64 {
    DEFAULT_BOX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub functional: MartingaleFunctional,
    /// Value of the functional at the start point.
    pub initial: f64,
    pub times: Vec<f64>,
    pub means: Vec<Estimate>,
    /// Fraction of paths stopped at the box by the last time.
    pub stopped_fraction: f64,
}

impl MartingaleReport {
    /// Each mean is at most the previous one (the initial value first) plus `k` combined SE.
    pub fn nonincreasing_within(&self, k: f64) -> bool {
        let mut prev = Estimate { mean: self.initial, se: 0.0, n: 0 };
        for m in &self.means {
            if m.mean > prev.mean + k * m.se.hypot(prev.se) {
                return false;
            }
            prev = *m;
        }
        true
    }

    /// Every mean is within `k` SE of the initial value.
    pub fn constant_within(&self, k: f64) -> bool {
        self.means.iter().all(|m| m.within(self.initial, k))
    }
}

/// Means of the box-stopped functional at the requested times.
pub fn martingale_drift_test(p: &O2bpParams, cfg: &EnsembleConfig, mc: &MartingaleConfig) -> Result<MartingaleReport> {
    cfg.validate()?;
    mc.functional.check(p)?;
    ensure!(mc.box_k > 1.0, InvalidConfig, "box size K must be > 1 (got {})", mc.box_k);
    ensure!(!mc.times.is_empty(), InvalidConfig, "at least one time is required");
    ensure!(
        mc.times.windows(2).all(|w| w[0] < w[1]) && mc.times[0] > 0.0,
        InvalidConfig,
        "times must be positive and increasing"
    );
    let StartSpec::Point { x: x0, y: y0 } = cfg.start else {
        return Err(Error::InvalidConfig("martingale diagnostics need a point start".into()));
    };
    let (lo, hi) = (1.0 / mc.box_k, mc.box_k);
    let inside = |x: f64, y: f64| x > lo && x < hi && y > lo && y < hi;
    ensure!(inside(x0, y0), InvalidConfig, "start ({x0}, {y0}) must lie strictly inside [1/K, K]^2");
    let dt = cfg.step.dt;
    let idx: Vec<usize> = mc.times.iter().map(|&t| grid_index(t, dt, "time")).collect::<Result<_>>()?;
    let last = *idx.last().expect("nonempty");
    Simulator::new(*p, cfg.step, quiet(&cfg.events))?;
    let f = mc.functional;

    let per_path = map_paths(cfg.n_paths, |i| {
        let mut rng = PathRng::primary(cfg.seed, i);
        let mut values = Vec::with_capacity(idx.len());
        let mut stopped = None;
        let mut s = PathState::new(x0, y0);
        'grid: for k in 1..=last {
            let mut left = dt;
            while left > 0.0 {
                let h = left.min(MARTINGALE_REFINE * s.x.min(s.y).powi(2));
                let h = if h >= left * (1.0 - 1e-9) { left } else { h };
                let (db, dc) = correlated_increments(p.rho, h, &mut rng.increments);
                s = step(s, p, db, dc, &cfg.step, h);
                left -= h;
                if !inside(s.x, s.y) {
                    stopped = Some(f.eval(p, s.x.clamp(lo, hi), s.y.clamp(lo, hi)));
                    break 'grid;
                }
            }
            if idx.get(values.len()) == Some(&k) {
                values.push(f.eval(p, s.x, s.y));
            }
        }
        let was_stopped = stopped.is_some();
        if let Some(v) = stopped {
            values.resize(idx.len(), v);
        }
        Ok((values, was_stopped))
    })?;

    let means = (0..idx.len())
        .map(|j| Estimate::from_values(&per_path.iter().map(|(v, _)| v[j]).collect::<Vec<_>>()))
        .collect();
    let stopped = per_path.iter().filter(|(_, s)| *s).count();
    Ok(MartingaleReport {
        functional: f,
        initial: f.eval(p, x0, y0),
        times: mc.times.clone(),
        means,
        stopped_fraction: stopped as f64 / cfg.n_paths as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMode {
    /// `gamma = 0`, `delta >= 1/2`: weight in `beta` only.
    Prop81,
    /// `|beta| <= delta - 1/2`, `|gamma| <= alpha - 1/2`.
    Prop82,
}

/// Bounded test functions of the terminal state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestFunctional {
    /// `exp(-x - y)`.
    ExpNegSum,
    /// `1 / (1 + x + y)`.
    InvOnePlusSum,
}

impl TestFunctional {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Self::ExpNegSum => (-x - y).exp(),
            Self::InvOnePlusSum => 1.0 / (1.0 + x + y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub mode: ImportanceMode,
    pub functional: TestFunctional,
    /// `E f(X_T, Y_T)` from the coupled scheme.
    pub direct: Estimate,
    /// `E f(U_T, V_T) Z_T` from independent Bessel paths.
    pub weighted: Estimate,
    pub weight: Estimate,
}

impl ImportanceReport {
    pub fn consistent_within(&self, k: f64) -> bool {
        self.direct.agrees_with(&self.weighted, k)
    }
}

fn importance_preconditions(p: &O2bpParams, mode: ImportanceMode, start: StartSpec) -> Result<(f64, f64)> {
    ensure!(p.rho == 0.0, Precondition, "rho = 0 fails (rho = {})", p.rho);
    ensure!(!p.has_drift(), Precondition, "the change of measure covers theta = eta = 0 only");
    let StartSpec::Point { x, y } = start else {
        return Err(Error::InvalidConfig("importance sampling needs a point start".into()));
    };
    match mode {
        ImportanceMode::Prop81 => {
            ensure!(p.gamma == 0.0, Precondition, "gamma = 0 fails (gamma = {})", p.gamma);
            ensure!(p.delta >= 0.5, Precondition, "delta >= 1/2 fails (delta = {})", p.delta);
            ensure!(y > 0.0, Precondition, "y > 0 fails (y = {y})");
        }
        ImportanceMode::Prop82 => {
            ensure!(p.beta.abs() <= p.delta - 0.5, Precondition, "|beta| <= delta - 1/2 fails");
            ensure!(p.gamma.abs() <= p.alpha - 0.5, Precondition, "|gamma| <= alpha - 1/2 fails");
            ensure!(x > 0.0 && y > 0.0, Precondition, "x > 0 and y > 0 fail ({x}, {y})");
        }
    }
    Ok((x, y))
}

/// Direct and change-of-measure estimates of `E f(X_T, Y_T)` at `T = cfg.horizon`.
///
/// The reference pair `(U, V)` runs the same scheme with the cross terms removed.
/// The weight is `exp{beta sum dB/V + gamma sum dC/U - beta^2/2 sum dt/V^2 - gamma^2/2 sum dt/U^2}`
/// with left-point sums over the reference driving increments.
pub fn importance_estimate(
    p: &O2bpParams,
    cfg: &EnsembleConfig,
    mode: ImportanceMode,
    f: TestFunctional,
) -> Result<ImportanceReport> {
    cfg.validate()?;
    p.validate()?;
    let (x0, y0) = importance_preconditions(p, mode, cfg.start)?;
    let sim = Simulator::new(*p, cfg.step, quiet(&cfg.events))?;
    let reference = p.decoupled();
    let dt = cfg.step.dt;
    let n_steps = sim.steps_for(cfg.horizon);

    let rows = map_paths(cfg.n_paths, |i| {
        let mut rng = PathRng::primary(cfg.seed, i);
        let (end, _) = sim.run(PathState::new(x0, y0), cfg.horizon, &mut rng, |_, _, _| true)?;
        let direct = f.eval(end.x, end.y);

        let mut rrng = PathRng::new(cfg.seed, i, Role::Reference);
        let mut s = PathState::new(x0, y0);
        let mut log_z = 0.0;
        for k in 1..=n_steps {
            let h = if k == n_steps { cfg.horizon - (k - 1) as f64 * dt } else { dt };
            let (db, dc) = correlated_increments(0.0, h, &mut rrng.increments);
            log_z += p.beta * db / s.y + p.gamma * dc / s.x
                - 0.5 * p.beta * p.beta * h / (s.y * s.y)
                - 0.5 * p.gamma * p.gamma * h / (s.x * s.x);
            s = drift_implicit_step(s, &reference, db, dc, &StepConfig { dt: h, ..cfg.step });
        }
        let z = log_z.exp();
        Ok((direct, f.eval(s.x, s.y) * z, z))
    })?;

    let col = |j: usize| -> Vec<f64> {
        rows.iter()
            .map(|r| match j {
                0 => r.0,
                1 => r.1,
                _ => r.2,
            })
            .collect()
    };
    Ok(ImportanceReport {
        mode,
        functional: f,
        direct: Estimate::from_values(&col(0)),
        weighted: Estimate::from_values(&col(1)),
        weight: Estimate::from_values(&col(2)),
    })
}

/// A per-path statistic folded over the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Reducer {
    /// Means and variances of `x` and `y` at the given times.
    Moments { checkpoints: Vec<f64> },
    /// How many paths fired each event proxy.
    EventCounts,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub x: Estimate,
    pub y: Estimate,
    pub var_x: f64,
    pub var_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCounts {
    pub corner: usize,
    pub x_edge: usize,
    pub y_edge: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub n_paths: usize,
    pub seed: u64,
    pub horizon: f64,
    pub moments: Option<Vec<MomentRow>>,
    pub event_counts: Option<EventCounts>,
}

/// Simulates the ensemble and folds the requested reducers in path-index order.
pub fn run_ensemble(p: &O2bpParams, cfg: &EnsembleConfig, reducers: &[Reducer]) -> Result<EnsembleSummary> {
    cfg.validate()?;
    let dt = cfg.step.dt;
    let mut checkpoints: Vec<f64> = Vec::new();
    for r in reducers {
        if let Reducer::Moments { checkpoints: c } = r {
            checkpoints.extend(c);
        }
    }
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup();
    ensure!(
        checkpoints.iter().all(|&t| t > 0.0 && t <= cfg.horizon),
        InvalidConfig,
        "checkpoints must lie in (0, horizon]"
    );
    let sim = Simulator::new(*p, cfg.step, cfg.events)?;
    let n_steps = sim.steps_for(cfg.horizon);
    let idx: Vec<usize> = checkpoints
        .iter()
        .map(|&t| if t == cfg.horizon { Ok(n_steps) } else { grid_index(t, dt, "checkpoint") })
        .collect::<Result<_>>()?;

    let per_path = map_paths(cfg.n_paths, |i| {
        let mut rng = PathRng::primary(cfg.seed, i);
        let start = start_state(p, cfg.start, &mut rng)?;
        let mut states = Vec::with_capacity(idx.len());
        let (_, ev) = sim.run(start, cfg.horizon, &mut rng, |k, s, _| {
            while idx.get(states.len()) == Some(&k) {
                states.push((s.x, s.y));
            }
            true
        })?;
        Ok((states, ev))
    })?;

    let moments = reducers.iter().any(|r| matches!(r, Reducer::Moments { .. })).then(|| {
        checkpoints
            .iter()
            .enumerate()
            .map(|(j, &t)| {
                let xs: Vec<f64> = per_path.iter().map(|(s, _)| s[j].0).collect();
                let ys: Vec<f64> = per_path.iter().map(|(s, _)| s[j].1).collect();
                let (x, y) = (Estimate::from_values(&xs), Estimate::from_values(&ys));
                let n = xs.len() as f64;
                MomentRow { t, x, y, var_x: x.se * x.se * n, var_y: y.se * y.se * n }
            })
            .collect()
    });
    let event_counts = reducers.iter().any(|r| matches!(r, Reducer::EventCounts)).then(|| {
        let count = |t: HitTarget| per_path.iter().filter(|(_, e)| t.time(e).is_some()).count();
        EventCounts {
            corner: count(HitTarget::Corner),
            x_edge: count(HitTarget::XEdge),
            y_edge: count(HitTarget::YEdge),
        }
    });
    Ok(EnsembleSummary { n_paths: cfg.n_paths, seed: cfg.seed, horizon: cfg.horizon, moments, event_counts })
}
