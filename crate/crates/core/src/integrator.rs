//! Positivity-preserving time stepping for the coupled system
//! `dX = dB + (alpha/X + beta/Y - theta) dt`, `dY = dC + (gamma/X + delta/Y - eta) dt`.
//!
//! Own singular terms are implicit (a scalar quadratic per coordinate), cross
//! terms are explicit with the other coordinate clamped below by `cross_floor * sqrt(dt)`.
//! Measuring the floor in units of `sqrt(dt)` keeps each step exactly
//! equivariant under Brownian rescaling.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bessel::bridge_hit_probability;
use crate::error::{ensure, Result};
use crate::params::O2bpParams;
use crate::rng::PathRng;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_CROSS_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DriftImplicit,
    /// Cross terms use the bounded Lipschitz approximation `h_n` of `1/x`.
    Truncated {
        n: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepConfig {
    pub dt: f64,
    /// Clamp for the other coordinate in cross terms, in units of `sqrt(dt)`.
    #[serde(default = "default_cross_floor")]
    pub cross_floor: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
}

fn default_cross_floor() -> f64 {
    DEFAULT_CROSS_FLOOR
}

fn default_scheme() -> Scheme {
    Scheme::DriftImplicit
}

impl Default for StepConfig {
    fn default() -> Self {
        Self { dt: DEFAULT_DT, cross_floor: DEFAULT_CROSS_FLOOR, scheme: Scheme::DriftImplicit }
    }
}

impl StepConfig {
    pub fn with_dt(dt: f64) -> Self {
        Self { dt, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(self.dt > 0.0 && self.dt.is_finite(), InvalidConfig, "dt must be > 0 (got {})", self.dt);
        ensure!(self.cross_floor > 0.0, InvalidConfig, "cross_floor must be > 0 (got {})", self.cross_floor);
        if let Scheme::Truncated { n } = self.scheme {
            ensure!(n >= 1, InvalidConfig, "truncation level n must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathState {
    pub x: f64,
    pub y: f64,
    pub t: f64,
}

impl PathState {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, t: 0.0 }
    }
}

/// Gaussian increments with variance `dt` each and covariance `rho dt`.
/// Always consumes two normals so streams stay aligned across `rho`.
pub fn correlated_increments<R: Rng + ?Sized>(rho: f64, dt: f64, rng: &mut R) -> (f64, f64) {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    let sd = dt.sqrt();
    (sd * z1, sd * (rho * z1 + (1.0 - rho * rho).sqrt() * z2))
}

/// Positive root of `z^2 - q z - a = 0` for `a > 0`, evaluated without cancellation.
/// The result is kept at or above `f64::MIN_POSITIVE` against underflow.
pub fn implicit_root(q: f64, a: f64) -> f64 {
    let h = q.hypot(2.0 * a.sqrt());
    let root = if q >= 0.0 { 0.5 * q + 0.5 * h } else { a / (0.5 * h - 0.5 * q) };
    root.max(f64::MIN_POSITIVE)
}

/// One drift-implicit step.
pub fn drift_implicit_step(s: PathState, p: &O2bpParams, db: f64, dc: f64, cfg: &StepConfig) -> PathState {
    let dt = cfg.dt;
    let floor = cfg.cross_floor * dt.sqrt();
    let qx = s.x + db + p.beta * dt / s.y.max(floor) - p.theta * dt;
    let qy = s.y + dc + p.gamma * dt / s.x.max(floor) - p.eta * dt;
    PathState { x: implicit_root(qx, p.alpha * dt), y: implicit_root(qy, p.delta * dt), t: s.t + dt }
}

/// `(1 - 1/n)/x` on `[1/n, inf)` and `n - 1` below.
pub fn h_n(x: f64, n: u32) -> f64 {
    let nf = f64::from(n);
    if x >= 1.0 / nf {
        (1.0 - 1.0 / nf) / x
    } else {
        nf - 1.0
    }
}

/// One step of the truncated system: own singular terms exact and implicit,
/// cross terms `beta h_n(y)` and `gamma h_n(x)` explicit. For `beta, gamma <= 0`
/// paths are pointwise nonincreasing in `n`.
pub fn truncated_step(s: PathState, p: &O2bpParams, db: f64, dc: f64, n: u32, dt: f64) -> PathState {
    let qx = s.x + db + p.beta * dt * h_n(s.y, n) - p.theta * dt;
    let qy = s.y + dc + p.gamma * dt * h_n(s.x, n) - p.eta * dt;
    PathState { x: implicit_root(qx, p.alpha * dt), y: implicit_root(qy, p.delta * dt), t: s.t + dt }
}

/// Step with whichever scheme `cfg` selects, over a step of length `dt`.
pub fn step(s: PathState, p: &O2bpParams, db: f64, dc: f64, cfg: &StepConfig, dt: f64) -> PathState {
    match cfg.scheme {
        Scheme::DriftImplicit => drift_implicit_step(s, p, db, dc, &StepConfig { dt, ..*cfg }),
        Scheme::Truncated { n } => truncated_step(s, p, db, dc, n, dt),
    }
}

/// Thresholds for the boundary proxies. With `bridge` set, an event also fires
/// when a uniform draw falls below the Bessel-bridge probability of touching the
/// boundary between grid points, using the decoupled dimensions `2 alpha + 1` and
/// `2 delta + 1`; the corner uses the smaller of the two edge probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub x_edge: f64,
    pub y_edge: f64,
    pub corner: f64,
    #[serde(default = "default_bridge")]
    pub bridge: bool,
}

fn default_bridge() -> bool {
    true
}

impl Default for EventSpec {
    fn default() -> Self {
        Self { x_edge: 1e-4, y_edge: 1e-4, corner: 1e-3, bridge: true }
    }
}

impl EventSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.x_edge >= 0.0 && self.y_edge >= 0.0 && self.corner >= 0.0,
            InvalidConfig,
            "event thresholds must be >= 0"
        );
        Ok(())
    }
}

/// First times each proxy fired; `None` means not by the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Events {
    pub corner_time: Option<f64>,
    pub x_edge_time: Option<f64>,
    pub y_edge_time: Option<f64>,
}

impl Events {
    pub fn all_fired(&self) -> bool {
        self.corner_time.is_some() && self.x_edge_time.is_some() && self.y_edge_time.is_some()
    }
}

/// Runs one path of the system, reporting states and events to an observer.
#[derive(Debug, Clone, Copy)]
pub struct Simulator {
    pub params: O2bpParams,
    pub step: StepConfig,
    pub events: EventSpec,
}

impl Simulator {
    pub fn new(params: O2bpParams, step: StepConfig, events: EventSpec) -> Result<Self> {
        params.validate()?;
        step.validate()?;
        events.validate()?;
        Ok(Self { params, step, events })
    }

    /// Number of steps to reach `horizon`; the last one is shortened if needed.
    pub fn steps_for(&self, horizon: f64) -> usize {
        ((horizon / self.step.dt) * (1.0 - 1e-12)).ceil() as usize
    }

    /// Iterates to `horizon`. `observe(k, state, events)` is called after each step `k >= 1`;
    /// returning `false` stops the path early.
    pub fn run<F>(
        &self,
        start: PathState,
        horizon: f64,
        rng: &mut PathRng,
        mut observe: F,
    ) -> Result<(PathState, Events)>
    where
        F: FnMut(usize, &PathState, &Events) -> bool,
    {
        ensure!(
            start.x >= 0.0 && start.y >= 0.0 && start.x.is_finite() && start.y.is_finite(),
            InvalidInput,
            "start ({}, {}) is outside the quadrant",
            start.x,
            start.y
        );
        ensure!(horizon > 0.0 && horizon.is_finite(), InvalidInput, "horizon must be > 0 (got {horizon})");
        let p = &self.params;
        let spec = &self.events;
        let (dx, dy) = (p.x_dimension(), p.y_dimension());
        let dt = self.step.dt;
        let n = self.steps_for(horizon);
        let mut s = PathState { t: 0.0, ..start };
        let mut ev = Events::default();
        for k in 1..=n {
            let t_next = if k == n { horizon } else { k as f64 * dt };
            let h = t_next - s.t;
            let (db, dc) = correlated_increments(p.rho, h, &mut rng.increments);
            let mut next = step(s, p, db, dc, &self.step, h);
            next.t = t_next;
            let (px, py) = if spec.bridge {
                (bridge_hit_probability(dx, s.x, next.x, h), bridge_hit_probability(dy, s.y, next.y, h))
            } else {
                (0.0, 0.0)
            };
            let u: f64 = if spec.bridge { rng.events.random() } else { 1.0 };
            if ev.x_edge_time.is_none() && (next.x <= spec.x_edge || u < px) {
                ev.x_edge_time = Some(t_next);
            }
            if ev.y_edge_time.is_none() && (next.y <= spec.y_edge || u < py) {
                ev.y_edge_time = Some(t_next);
            }
            if ev.corner_time.is_none() && (next.x + next.y <= spec.corner || u < px.min(py)) {
                ev.corner_time = Some(t_next);
            }
            s = next;
            if !observe(k, &s, &ev) {
                break;
            }
        }
        Ok((s, ev))
    }
}

/// A simulated trajectory, recorded every `stride` steps plus the final state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub states: Vec<PathState>,
    pub events: Events,
}

impl Path {
    pub fn terminal(&self) -> PathState {
        *self.states.last().expect("path always holds its start state")
    }

    /// CSV with header `t,x,y`, reals in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y")?;
        for s in &self.states {
            writeln!(w, "{},{},{}", s.t, s.x, s.y)?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
pub fn simulate_path(
    p: &O2bpParams,
    start: PathState,
    horizon: f64,
    cfg: &StepConfig,
    events: &EventSpec,
    stride: usize,
    rng: &mut PathRng,
) -> Result<Path> {
    ensure!(stride >= 1, InvalidConfig, "stride must be >= 1");
    let sim = Simulator::new(*p, *cfg, *events)?;
    let n = sim.steps_for(horizon.max(0.0));
    let mut states = vec![PathState { t: 0.0, ..start }];
    let (_, events) = sim.run(start, horizon, rng, |k, s, _| {
        if k % stride == 0 || k == n {
            states.push(*s);
        }
        true
    })?;
    Ok(Path { states, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bessel::besq_transition_cdf;
    use crate::stats::ks_test_unsorted;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn prm(alpha: f64, beta: f64, gamma: f64, delta: f64, rho: f64) -> O2bpParams {
        O2bpParams::new(alpha, beta, gamma, delta, rho)
    }

    #[test]
    fn increments_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (db, dc) = correlated_increments(1.0, 0.01, &mut rng);
        assert_eq!(db, dc);
        let n = 1_000_000;
        for (rho, dt, tol) in [(0.0, 1.0, 3.0 / 1000.0), (0.5, 1.0, 0.005)] {
            let mut cov = 0.0;
            for _ in 0..n {
                let (a, b) = correlated_increments(rho, dt, &mut rng);
                cov += a * b;
            }
            cov /= n as f64;
            assert!((cov - rho * dt).abs() <= tol, "rho {rho}: cov {cov}");
        }
    }

    #[test]
    fn implicit_step_example() {
        let p = prm(0.5, 0.0, 0.0, 1.0, 0.0);
        let s = drift_implicit_step(PathState::new(1.0, 1.0), &p, -0.05, 0.0, &StepConfig::with_dt(0.01));
        let expected = (0.95 + (0.9025f64 + 0.02).sqrt()) / 2.0;
        assert!((s.x - expected).abs() < 1e-15);
        assert!((s.x - 0.955235).abs() < 1e-6);
        assert_eq!(s.t, 0.01);
        let tiny = drift_implicit_step(PathState::new(1.0, 1.0), &p, 0.0, 0.0, &StepConfig::with_dt(1e-14));
        assert!((tiny.x - 1.0).abs() < 1e-13);
    }

    #[test]
    fn h_n_examples() {
        for n in [1, 2, 10, 1000] {
            let at = 1.0 / f64::from(n);
            assert!((h_n(at, n) - (f64::from(n) - 1.0)).abs() < 1e-9);
            assert!((h_n(at - 1e-12, n) - (f64::from(n) - 1.0)).abs() < 1e-9);
        }
        assert!((h_n(1.0, 10) - 0.9).abs() < 1e-15);
        assert!((h_n(1.0, 100) - 0.99).abs() < 1e-15);
        assert_eq!(h_n(-3.0, 1), 0.0);
        assert_eq!(h_n(5.0, 1), 0.0);
    }

    #[test]
    fn truncated_level_one_decouples() {
        let p = prm(0.7, -2.0, -3.0, 0.4, 0.0);
        let d = p.decoupled();
        let s = PathState::new(0.3, 0.2);
        assert_eq!(
            truncated_step(s, &p, 0.01, -0.02, 1, 1e-3),
            drift_implicit_step(s, &d, 0.01, -0.02, &StepConfig::with_dt(1e-3))
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = prm(1.0, 0.0, 0.0, 1.0, 0.0);
        let mut rng = PathRng::primary(1, 0);
        let cfg = StepConfig::default();
        let ev = EventSpec::default();
        assert!(simulate_path(&p, PathState::new(-1.0, 1.0), 1.0, &cfg, &ev, 1, &mut rng).is_err());
        assert!(simulate_path(&p, PathState::new(1.0, 1.0), 0.0, &cfg, &ev, 1, &mut rng).is_err());
        assert!(simulate_path(&p, PathState::new(1.0, 1.0), 1.0, &StepConfig::with_dt(0.0), &ev, 1, &mut rng).is_err());
    }

    #[test]
    fn path_recording_and_horizon() {
        let p = prm(1.0, 0.0, 0.0, 1.0, 0.0);
        let mut rng = PathRng::primary(3, 0);
        let path = simulate_path(
            &p,
            PathState::new(1.0, 1.0),
            0.0105,
            &StepConfig::with_dt(1e-3),
            &EventSpec::default(),
            5,
            &mut rng,
        )
        .unwrap();
        let times: Vec<f64> = path.states.iter().map(|s| s.t).collect();
        assert_eq!(times.len(), 4);
        assert_eq!(times[0], 0.0);
        assert_eq!(*times.last().unwrap(), 0.0105);
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,x,y\n0,1,1\n"));
        assert_eq!(path.events, Events::default());
    }

    #[test]
    fn bessel_reduction_terminal_law() {
        let p = prm(0.75, 0.0, 0.0, 1.0, 0.0);
        let cfg = StepConfig::with_dt(1e-3);
        let n = 10_000u64;
        let sim = Simulator::new(p, cfg, EventSpec::default()).unwrap();
        let scheme: Vec<f64> = (0..n)
            .map(|i| sim.run(PathState::new(1.0, 1.0), 1.0, &mut PathRng::primary(21, i), |_, _, _| true).unwrap().0.x)
            .collect();
        let ks = ks_test_unsorted(&scheme, |x| besq_transition_cdf(1.0, p.x_dimension(), 1.0, x * x)).unwrap();
        assert!(ks.statistic <= 0.02, "{ks:?}");
    }

    proptest! {
        #[test]
        fn implicit_step_is_positive(
            x in 0.0f64..1e6, y in 0.0f64..1e6,
            db in -1e150f64..1e150, dc in -1e150f64..1e150,
            alpha in 1e-6f64..10.0, delta in 1e-6f64..10.0,
            beta in -1e3f64..1e3, gamma in -1e3f64..1e3,
            dt in 1e-9f64..1.0,
        ) {
            let p = prm(alpha, beta, gamma, delta, 0.0).with_drift(5.0, 5.0);
            let s = drift_implicit_step(PathState::new(x, y), &p, db, dc, &StepConfig::with_dt(dt));
            prop_assert!(s.x > 0.0 && s.y > 0.0);
        }

        #[test]
        fn implicit_step_scaling(
            x in 0.01f64..10.0, y in 0.01f64..10.0, db in -1.0f64..1.0, dc in -1.0f64..1.0,
            c in 0.1f64..10.0, alpha in 0.05f64..3.0, delta in 0.05f64..3.0,
            beta in -2.0f64..2.0, gamma in -2.0f64..2.0, rho in -1.0f64..1.0,
        ) {
            let p = prm(alpha, beta, gamma, delta, rho);
            let dt = 1e-3;
            let a = drift_implicit_step(PathState::new(x, y), &p, db, dc, &StepConfig::with_dt(dt));
            let b = drift_implicit_step(PathState::new(x / c, y / c), &p, db / c, dc / c, &StepConfig::with_dt(dt / (c * c)));
            prop_assert!(((a.x / c) - b.x).abs() <= 1e-12 * b.x);
            prop_assert!(((a.y / c) - b.y).abs() <= 1e-12 * b.y);
        }
    }
}
