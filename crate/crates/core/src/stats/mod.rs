//! Distributions, special functions and goodness-of-fit tests used by the
//! verification experiments.

pub mod special;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
pub use special::{beta_inc, gamma_p, gamma_q, ln_gamma};

/// Gamma law with shape `a` and rate `c`: density `c^a / Gamma(a) x^(a-1) e^(-c x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    pub shape: f64,
    pub rate: f64,
}

impl GammaLaw {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        ensure!(shape > 0.0 && shape.is_finite(), InvalidInput, "gamma shape must be > 0 (got {shape})");
        ensure!(rate > 0.0 && rate.is_finite(), InvalidInput, "gamma rate must be > 0 (got {rate})");
        Ok(Self { shape, rate })
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn variance(&self) -> f64 {
        self.shape / (self.rate * self.rate)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x == 0.0 {
            return match self.shape {
                a if a < 1.0 => f64::INFINITY,
                1.0 => self.rate,
                _ => 0.0,
            };
        }
        let (a, c) = (self.shape, self.rate);
        (a * c.ln() - ln_gamma(a) + (a - 1.0) * x.ln() - c * x).exp()
    }

    /// `P(a, c x)`; negative arguments are rejected.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        ensure!(x >= 0.0, InvalidInput, "gamma cdf argument must be >= 0 (got {x})");
        Ok(gamma_p(self.shape, self.rate * x))
    }

    /// CDF extended by zero to the negative half-line, for use as a KS reference.
    pub fn cdf_total(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            gamma_p(self.shape, self.rate * x)
        }
    }

    /// `(1 - i lambda / c)^(-a)` on the principal branch.
    pub fn characteristic(&self, lambda: f64) -> Complex64 {
        let base = Complex64::new(1.0, -lambda / self.rate);
        (-self.shape * base.ln()).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gamma_sample(*self, rng)
    }
}

pub fn gamma_cdf(x: f64, law: GammaLaw) -> Result<f64> {
    law.cdf(x)
}

pub fn gamma_characteristic(lambda: f64, law: GammaLaw) -> Complex64 {
    law.characteristic(lambda)
}

/// Draw from `law`. Backed by `rand_distr::Gamma` (scale `1 / rate`).
pub fn gamma_sample<R: Rng + ?Sized>(law: GammaLaw, rng: &mut R) -> f64 {
    let dist = rand_distr::Gamma::new(law.shape, 1.0 / law.rate).expect("validated gamma law");
    dist.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaLaw {
    pub a: f64,
    pub b: f64,
}

impl BetaLaw {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        ensure!(a > 0.0 && b > 0.0, InvalidInput, "beta parameters must be > 0 (got {a}, {b})");
        Ok(Self { a, b })
    }

    pub fn mean(&self) -> f64 {
        self.a / (self.a + self.b)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let (a, b) = (self.a, self.b);
        (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        beta_inc(self.a, self.b, x.clamp(0.0, 1.0))
    }
}

/// `(w, z) = (c x / (c x + d y), c x + d y)`.
pub fn beta_gamma_transform(x: f64, y: f64, c: f64, d: f64) -> Result<(f64, f64)> {
    ensure!(x >= 0.0 && y >= 0.0, InvalidInput, "beta-gamma transform needs x, y >= 0");
    ensure!(c > 0.0 && d > 0.0, InvalidInput, "beta-gamma transform needs c, d > 0");
    let z = c * x + d * y;
    ensure!(z > 0.0, InvalidInput, "beta-gamma transform undefined at c x + d y = 0");
    Ok((c * x / z, z))
}

/// Inverse of [`beta_gamma_transform`].
pub fn beta_gamma_inverse(w: f64, z: f64, c: f64, d: f64) -> (f64, f64) {
    (w * z / c, (1.0 - w) * z / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// One-sample Kolmogorov-Smirnov test against `cdf`. `samples` must be sorted
/// ascending and hold at least 8 values.
pub fn ks_test<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let n = samples.len();
    ensure!(n >= 8, InvalidInput, "KS test needs at least 8 samples (got {n})");
    ensure!(samples.windows(2).all(|w| w[0] <= w[1]), InvalidInput, "KS test input must be sorted ascending");
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / nf - f;
        let below = f - i as f64 / nf;
        d = d.max(above).max(below);
    }
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(nf.sqrt() * d), n })
}

/// Sorts a copy of `samples` and runs [`ks_test`].
pub fn ks_test_unsorted<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<KsResult> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    ks_test(&sorted, cdf)
}

/// Two-sample KS distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    ensure!(!a.is_empty() && !b.is_empty(), InvalidInput, "two-sample KS needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// Asymptotic Kolmogorov survival function `2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 t^2)`,
/// truncated at 100 terms.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * t * t).exp();
        sum += if k as u32 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Upper tail of the chi-square law with `k` degrees of freedom.
pub fn chi_square_sf(x: f64, k: f64) -> f64 {
    gamma_q(0.5 * k, 0.5 * x)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error of i.i.d. values.
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let (mean, var) = mean_variance(values);
        let se = if n > 1 { (var / n as f64).sqrt() } else { f64::NAN };
        Self { mean, se, n }
    }

    /// `|self - other| <= k * sqrt(se_1^2 + se_2^2)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.se.hypot(other.se)
    }

    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Sample mean and unbiased variance, accumulated in slice order.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &v) in values.iter().enumerate() {
        let delta = v - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (v - mean);
    }
    let n = values.len();
    let var = if n > 1 { m2 / (n - 1) as f64 } else { 0.0 };
    (mean, var)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ma, va) = mean_variance(a);
    let (mb, vb) = mean_variance(b);
    let n = a.len() as f64;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1.0);
    cov / (va * vb).sqrt()
}
