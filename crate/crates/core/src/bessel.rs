//! One-dimensional Bessel and squared-Bessel reference processes.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::stats::{gamma_p, gamma_q, gamma_sample, special::bessel_i, GammaLaw};

/// Above this value of `x0 x1 / dt` the bridge hitting probability is below `1e-17`.
const BRIDGE_Z_CUTOFF: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesselSpec {
    pub dimension: f64,
    pub start: f64,
}

impl BesselSpec {
    pub fn new(dimension: f64, start: f64) -> Result<Self> {
        ensure!(dimension > 1.0, InvalidParams, "Bessel dimension must be > 1 (got {dimension})");
        ensure!(start >= 0.0 && start.is_finite(), InvalidParams, "Bessel start must be >= 0 (got {start})");
        Ok(Self { dimension, start })
    }

    /// Dimension `2 alpha + 1` of the process driven by `alpha / x` alone.
    pub fn from_alpha(alpha: f64, start: f64) -> Result<Self> {
        Self::new(2.0 * alpha + 1.0, start)
    }

    pub fn boundary(&self) -> BoundaryClass {
        classify_dimension(self.dimension)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundaryClass {
    /// `d >= 2`: zero is never reached.
    Polar,
    /// `1 < d < 2`: zero is reached and left immediately.
    InstantaneouslyReflecting,
}

fn classify_dimension(d: f64) -> BoundaryClass {
    if d >= 2.0 {
        BoundaryClass::Polar
    } else {
        BoundaryClass::InstantaneouslyReflecting
    }
}

pub fn boundary_class(d: f64) -> Result<BoundaryClass> {
    ensure!(d > 1.0, InvalidParams, "Bessel dimension must be > 1 (got {d})");
    Ok(classify_dimension(d))
}

/// Exact draw of a squared Bessel process of dimension `d` at time `t` from `x0`.
///
/// Poisson mixture of gammas: `N ~ Poisson(x0 / 2t)`, then `2t Gamma(d/2 + N, 1)`.
///
/// # Panics
/// If `x0 < 0`, `d <= 0` or `t <= 0`.
pub fn besq_exact_transition<R: Rng + ?Sized>(x0: f64, d: f64, t: f64, rng: &mut R) -> f64 {
    assert!(x0 >= 0.0 && d > 0.0 && t > 0.0, "besq_exact_transition: need x0 >= 0, d > 0, t > 0");
    let lambda = x0 / (2.0 * t);
    let n = if lambda > 0.0 { Poisson::new(lambda).expect("finite positive Poisson mean").sample(rng) } else { 0.0 };
    let law = GammaLaw { shape: 0.5 * d + n, rate: 1.0 };
    2.0 * t * gamma_sample(law, rng)
}

/// `P(X_t <= v)` for the squared Bessel process of [`besq_exact_transition`],
/// summing the Poisson mixture until the remaining weight is below `1e-15`.
pub fn besq_transition_cdf(x0: f64, d: f64, t: f64, v: f64) -> f64 {
    if v <= 0.0 {
        return 0.0;
    }
    let lambda = x0 / (2.0 * t);
    let mut weight = (-lambda).exp();
    let mut total_weight = 0.0;
    let mut cdf = 0.0;
    let mut n = 0u32;
    while 1.0 - total_weight > 1e-15 || f64::from(n) <= lambda {
        cdf += weight * gamma_p(0.5 * d + f64::from(n), v / (2.0 * t));
        total_weight += weight;
        n += 1;
        weight *= lambda / f64::from(n);
        if n > 10_000 {
            break;
        }
    }
    cdf.clamp(0.0, 1.0)
}

/// `P(tau_0 <= T)` for a Bessel process of dimension `d` in `(1, 2)` started at `r`.
///
/// The absorption time of the squared process has the law `r^2 / (2 G)` with
/// `G ~ Gamma(1 - d/2, 1)`, which gives `Q(1 - d/2, r^2 / 2T)`.
pub fn bessel_hitting_zero_cdf(r: f64, d: f64, horizon: f64) -> Result<f64> {
    ensure!(d > 1.0 && d < 2.0, InvalidParams, "hitting law needs 1 < d < 2 (got {d})");
    ensure!(r > 0.0 && r.is_finite(), InvalidParams, "start must be > 0 (got {r})");
    ensure!(horizon > 0.0, InvalidParams, "horizon must be > 0 (got {horizon})");
    if horizon.is_infinite() {
        return Ok(1.0);
    }
    Ok(gamma_q(1.0 - 0.5 * d, r * r / (2.0 * horizon)))
}

/// Density of the dimension-`d` Bessel law against the dimension-2 law on one path:
/// `(R_t / r)^((d-2)/2) exp(-((d-2)^2 / 8) int_0^t ds / R_s^2)`, with `r = path[0]`
/// and the integral taken by the trapezoid rule on a uniform grid of step `dt`.
pub fn bessel_density_weight(path: &[f64], dt: f64, d: f64) -> Result<f64> {
    ensure!(d >= 2.0, InvalidParams, "density weight needs d >= 2 (got {d})");
    ensure!(dt > 0.0, InvalidParams, "dt must be > 0 (got {dt})");
    ensure!(!path.is_empty(), InvalidInput, "path is empty");
    ensure!(path.iter().all(|&r| r > 0.0), InvalidInput, "path values must be > 0");
    let nu = 0.5 * (d - 2.0);
    if nu == 0.0 {
        return Ok(1.0);
    }
    let inv_sq: Vec<f64> = path.iter().map(|r| 1.0 / (r * r)).collect();
    let integral = inv_sq.windows(2).map(|w| 0.5 * dt * (w[0] + w[1])).sum::<f64>();
    let r0 = path[0];
    let rt = path[path.len() - 1];
    Ok((rt / r0).powf(nu) * (-0.5 * nu * nu * integral).exp())
}

/// Probability that a dimension-`d` Bessel bridge from `x0` to `x1` over `dt` touches zero.
///
/// With `nu = |d/2 - 1|` and `z = x0 x1 / dt` this is `1 - I_nu(z) / I_{-nu}(z)`,
/// the ratio of the killed to the reflected transition density. Zero for `d >= 2`.
pub fn bridge_hit_probability(d: f64, x0: f64, x1: f64, dt: f64) -> f64 {
    if d >= 2.0 {
        return 0.0;
    }
    if x0 <= 0.0 || x1 <= 0.0 {
        return 1.0;
    }
    let z = x0 * x1 / dt;
    if z >= BRIDGE_Z_CUTOFF {
        return 0.0;
    }
    let nu = (0.5 * d - 1.0).abs();
    (1.0 - bessel_i(nu, z) / bessel_i(-nu, z)).clamp(0.0, 1.0)
}
