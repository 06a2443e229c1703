//! Subcommands that run one experiment and write CSV data plus a JSON summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use o2bp::integrator::simulate_path;
use o2bp::montecarlo::{
    hitting_times, importance_estimate, martingale_drift_test, start_state, stationary_report, stationary_sample,
    HittingEstimate, MartingaleConfig, MartingaleFunctional,
};
use o2bp::regime::supermartingale_coefficient;
use o2bp::rng::PathRng;
use o2bp::{classify as classify_params, Events, Path as SamplePath};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::{Metadata, RunConfig};
use crate::CliError;

/// One pass/fail comparison against a configured tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.to_string(), value, limit, pass: value <= limit }
    }

    fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self { name: name.to_string(), value, limit, pass: value >= limit }
    }

    /// `|value - target| / se` against `k`.
    fn within_se(name: &str, value: f64, target: f64, se: f64, k: f64) -> Self {
        let z = if se > 0.0 {
            (value - target).abs() / se
        } else if value == target {
            0.0
        } else {
            f64::INFINITY
        };
        Self::at_most(name, z, k)
    }

    fn flag(name: &str, pass: bool) -> Self {
        Self { name: name.to_string(), value: f64::from(u8::from(pass)), limit: 1.0, pass }
    }
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    metadata: &'a Metadata,
    result: T,
    checks: &'a [Check],
    pass: bool,
}

pub struct Output {
    dir: std::path::PathBuf,
    metadata: Metadata,
}

impl Output {
    pub fn new(command: &str, config: &RunConfig, dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), metadata: Metadata::new(command, config) })
    }

    /// A CSV file whose first line is the metadata block.
    pub fn csv(&self, name: &str, header: &str) -> Result<BufWriter<File>, CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        w.write_all(self.metadata.csv_header().as_bytes())?;
        writeln!(w, "{header}")?;
        Ok(w)
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = BufWriter::new(File::create(self.dir.join(name))?);
        serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    /// Writes `summary.json` and returns whether every check passed.
    pub fn summary<T: Serialize>(&self, result: T, checks: &[Check]) -> Result<bool, CliError> {
        let pass = checks.iter().all(|c| c.pass);
        self.json("summary.json", &Summary { metadata: &self.metadata, result, checks, pass })?;
        for c in checks.iter().filter(|c| !c.pass) {
            eprintln!("check failed: {} = {} (limit {})", c.name, c.value, c.limit);
        }
        Ok(pass)
    }
}

pub fn classify(c: &RunConfig) -> Result<bool, CliError> {
    let report = classify_params(&c.params)?;
    println!("{}", serde_json::to_string_pretty(&report).map_err(std::io::Error::from)?);
    Ok(true)
}

#[derive(Serialize)]
struct PathEvents {
    path_id: u64,
    #[serde(flatten)]
    events: Events,
}

pub fn simulate(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    c.ensemble.validate()?;
    let e = &c.ensemble;
    let paths: Vec<SamplePath> = (0..e.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = PathRng::primary(e.seed, i);
            let start = start_state(&c.params, e.start, &mut rng)?;
            simulate_path(&c.params, start, e.horizon, &e.step, &e.events, c.simulate.stride, &mut rng)
        })
        .collect::<o2bp::Result<_>>()?;
    let out = Output::new("simulate", c, dir)?;
    let mut w = out.csv("paths.csv", "path_id,t,x,y")?;
    for (i, path) in paths.iter().enumerate() {
        for s in &path.states {
            writeln!(w, "{i},{},{},{}", s.t, s.x, s.y)?;
        }
    }
    w.flush()?;
    let events: Vec<PathEvents> =
        paths.iter().enumerate().map(|(i, p)| PathEvents { path_id: i as u64, events: p.events }).collect();
    out.json("events.json", &events)?;
    let terminal: Vec<Value> = paths
        .iter()
        .map(|p| {
            let s = p.terminal();
            serde_json::json!({ "t": s.t, "x": s.x, "y": s.y })
        })
        .collect();
    out.summary(serde_json::json!({ "n_paths": paths.len(), "terminal": terminal }), &[])
}

pub fn hitting(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    let which = c.hitting.which;
    let events = hitting_times(&c.params, &c.ensemble, Some(which))?;
    let est = HittingEstimate::from_events(&events, which, &c.ensemble);
    let out = Output::new("hitting", c, dir)?;
    let mut w = out.csv("events.csv", "path_id,event,time")?;
    for (i, ev) in events.iter().enumerate() {
        for (name, t) in [("corner", ev.corner_time), ("x_edge", ev.x_edge_time), ("y_edge", ev.y_edge_time)] {
            if let Some(t) = t {
                writeln!(w, "{i},{name},{t}")?;
            }
        }
    }
    w.flush()?;
    let tol = &c.tolerances;
    let mut checks = Vec::new();
    if let Some(lo) = tol.hit_min {
        checks.push(Check::at_least("frequency_min", est.frequency, lo));
    }
    if let Some(hi) = tol.hit_max {
        checks.push(Check::at_most("frequency_max", est.frequency, hi));
    }
    out.summary(est, &checks)
}

pub fn stationary(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    let samples = stationary_sample(&c.params, &c.ensemble, &c.stationary)?;
    let out = Output::new("stationary", c, dir)?;
    let mut w = out.csv("samples.csv", "x,y")?;
    for (x, y) in &samples.samples {
        writeln!(w, "{x},{y}")?;
    }
    w.flush()?;
    if samples.law.is_none() {
        return out.summary(serde_json::json!({ "law": null, "count": samples.samples.len() }), &[]);
    }
    let r = stationary_report(&samples)?;
    let tol = &c.tolerances;
    let (mx, my) = r.law.mean();
    let checks = [
        Check::at_most("ks_x", r.ks_x.statistic, tol.ks_max),
        Check::at_most("ks_y", r.ks_y.statistic, tol.ks_max),
        Check::at_most("ks_w", r.ks_w.statistic, tol.ks_max),
        Check::at_most("ks_z", r.ks_z.statistic, tol.ks_max),
        Check::at_most("corr_wz", r.corr_wz.abs(), tol.corr_max),
        Check::within_se("mean_x", r.mean_x.mean, mx, r.mean_x.se, tol.se_multiple),
        Check::within_se("mean_y", r.mean_y.mean, my, r.mean_y.se, tol.se_multiple),
    ];
    out.summary(r, &checks)
}

pub fn martingale(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    let m = &c.martingale;
    let mc = MartingaleConfig { functional: m.functional, times: m.times.clone(), box_k: m.box_k };
    let r = martingale_drift_test(&c.params, &c.ensemble, &mc)?;
    let out = Output::new("martingale", c, dir)?;
    let mut w = out.csv("means.csv", "t,mean,se")?;
    for (t, e) in r.times.iter().zip(&r.means) {
        writeln!(w, "{t},{},{}", e.mean, e.se)?;
    }
    w.flush()?;
    let k = c.tolerances.se_multiple;
    let strict = m.functional == MartingaleFunctional::PowerProduct && supermartingale_coefficient(&c.params) < 0.0;
    let check = if strict {
        Check::flag("nonincreasing", r.nonincreasing_within(k))
    } else {
        Check::flag("constant", r.constant_within(k))
    };
    out.summary(r, &[check])
}

pub fn importance(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    let s = &c.importance;
    let r = importance_estimate(&c.params, &c.ensemble, s.mode, s.functional)?;
    let out = Output::new("importance", c, dir)?;
    let k = c.tolerances.se_multiple;
    let checks = [
        Check::within_se("weighted_vs_direct", r.weighted.mean, r.direct.mean, r.direct.se.hypot(r.weighted.se), k),
        Check::within_se("mean_weight", r.weight.mean, 1.0, r.weight.se, k),
    ];
    out.summary(r, &checks)
}
