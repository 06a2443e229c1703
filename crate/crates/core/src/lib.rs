//! Simulation and analysis of oblique two-dimensional Bessel processes: a pair of
//! correlated Brownian motions kept in the closed quadrant by `1/x`-type drifts.
//!
//! [`regime`] classifies parameter sets in closed form, [`integrator`] steps
//! paths, and [`montecarlo`] runs reproducible ensembles on top of it.

pub mod bessel;
pub mod error;
pub mod integrator;
pub mod montecarlo;
pub mod params;
pub mod regime;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use integrator::{EventSpec, Events, Path, PathState, Scheme, StepConfig};
pub use montecarlo::{EnsembleConfig, HitTarget, StartSpec};
pub use params::O2bpParams;
pub use regime::{classify, RegimeReport};
