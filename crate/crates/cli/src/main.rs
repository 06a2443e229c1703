//! `o2bp`: regime classification, path simulation and Monte Carlo checks for
//! oblique two-dimensional Bessel processes.
//!
//! Exit codes: 0 when every configured check passes, 1 when a tolerance check
//! fails, 2 on invalid input.

mod commands;
mod config;
mod phase;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use o2bp::montecarlo::{ImportanceMode, MartingaleFunctional, TestFunctional};
use o2bp::{HitTarget, StartSpec};
use serde::de::DeserializeOwned;

use config::{fallback_seed, Axis, AxisSpec, PhaseCell, PhaseSettings, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Core(#[from] o2bp::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Parser)]
#[command(name = "o2bp", version, about = "Oblique two-dimensional Bessel processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the regime report for one parameter set as JSON.
    Classify {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Simulate paths and write `paths.csv` and `events.json`.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Record every n-th grid point.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Estimate a boundary-hitting frequency; writes `events.csv`.
    Hitting {
        #[command(flatten)]
        run: RunArgs,
        /// corner, x_edge or y_edge.
        #[arg(long, value_parser = parse_enum::<HitTarget>)]
        which: Option<HitTarget>,
        /// Proximity threshold of the chosen target.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Sample the long-run law and test it against the gamma product law; writes `samples.csv`.
    Stationary {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        burn_in: Option<f64>,
        #[arg(long)]
        spacing: Option<f64>,
        /// Pooled sample count.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Box-stopped means of a (super)martingale functional; writes `means.csv`.
    Martingale {
        #[command(flatten)]
        run: RunArgs,
        /// power_product or log_combo.
        #[arg(long, value_parser = parse_enum::<MartingaleFunctional>)]
        functional: Option<MartingaleFunctional>,
        /// Comma-separated observation times.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Paths stop on leaving `[1/K, K]^2`.
        #[arg(long)]
        box_k: Option<f64>,
    },
    /// Compare direct and change-of-measure estimates of `E f(X_T, Y_T)`.
    Importance {
        #[command(flatten)]
        run: RunArgs,
        /// prop81 or prop82.
        #[arg(long, value_parser = parse_enum::<ImportanceMode>)]
        mode: Option<ImportanceMode>,
        /// exp_neg_sum or inv_one_plus_sum.
        #[arg(long, value_parser = parse_enum::<TestFunctional>)]
        functional: Option<TestFunctional>,
    },
    /// Tabulate verdicts or hitting frequencies over a grid of one or two parameters.
    Phase {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = parse_enum::<Axis>)]
        x_axis: Option<Axis>,
        /// `lo,hi`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x_range: Option<Vec<f64>>,
        #[arg(long)]
        x_steps: Option<usize>,
        #[arg(long, value_parser = parse_enum::<Axis>)]
        y_axis: Option<Axis>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        y_range: Option<Vec<f64>>,
        #[arg(long)]
        y_steps: Option<usize>,
        /// existence, corner, x_edge, y_edge, stationary, skew or hitting.
        #[arg(long, value_parser = parse_enum::<PhaseCell>)]
        cell: Option<PhaseCell>,
        /// Target for `--cell hitting`.
        #[arg(long, value_parser = parse_enum::<HitTarget>)]
        which: Option<HitTarget>,
        #[arg(long)]
        threshold: Option<f64>,
    },
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    gamma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    eta: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// `x,y`, `stationary_mean` or `stationary_draw`.
    #[arg(long, value_parser = parse_start)]
    start: Option<StartSpec>,
    /// Run config, or any output of a previous run (its metadata block is reused).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "o2bp-out")]
    out: PathBuf,
    /// Worker threads; affects wall time only.
    #[arg(long)]
    threads: Option<usize>,
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_start(s: &str) -> Result<StartSpec, String> {
    match s {
        "stationary_mean" => Ok(StartSpec::StationaryMean),
        "stationary_draw" => Ok(StartSpec::StationaryDraw),
        _ => {
            let (x, y) = s.split_once(',').ok_or("expected x,y, stationary_mean or stationary_draw")?;
            let x = x.trim().parse::<f64>().map_err(|e| e.to_string())?;
            let y = y.trim().parse::<f64>().map_err(|e| e.to_string())?;
            Ok(StartSpec::Point { x, y })
        }
    }
}

impl ParamArgs {
    fn apply(&self, c: &mut RunConfig) {
        let p = &mut c.params;
        let pairs = [
            (self.alpha, &mut p.alpha),
            (self.beta, &mut p.beta),
            (self.gamma, &mut p.gamma),
            (self.delta, &mut p.delta),
            (self.rho, &mut p.rho),
            (self.theta, &mut p.theta),
            (self.eta, &mut p.eta),
        ];
        for (flag, slot) in pairs {
            if let Some(v) = flag {
                *slot = v;
            }
        }
    }
}

/// Config file or defaults, then flags on top.
fn base_config(command: &str, config: Option<&PathBuf>) -> Result<RunConfig, CliError> {
    match config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::defaults(command, fallback_seed()?)),
    }
}

impl RunArgs {
    fn resolve(&self, command: &str) -> Result<RunConfig, CliError> {
        let mut c = base_config(command, self.config.as_ref())?;
        self.params.apply(&mut c);
        let e = &mut c.ensemble;
        if let Some(v) = self.dt {
            e.step.dt = v;
        }
        if let Some(v) = self.paths {
            e.n_paths = v;
        }
        if let Some(v) = self.seed {
            e.seed = v;
        }
        if let Some(v) = self.horizon {
            e.horizon = v;
        }
        if let Some(v) = self.start {
            e.start = v;
        }
        Ok(c)
    }

    fn install_threads(&self) -> Result<(), CliError> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(CliError::Input("--threads must be >= 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
        }
        Ok(())
    }
}

/// Sets the proximity threshold of the configured hitting target.
fn set_threshold(c: &mut RunConfig, threshold: f64) {
    let ev = &mut c.ensemble.events;
    match c.hitting.which {
        HitTarget::Corner => ev.corner = threshold,
        HitTarget::XEdge => ev.x_edge = threshold,
        HitTarget::YEdge => ev.y_edge = threshold,
    }
}

fn axis(
    axis: Option<Axis>,
    range: Option<Vec<f64>>,
    steps: Option<usize>,
    prev: Option<AxisSpec>,
) -> Result<Option<AxisSpec>, CliError> {
    let Some(axis) = axis.or(prev.map(|a| a.axis)) else {
        return Ok(None);
    };
    let (lo, hi) = match (range, prev) {
        (Some(r), _) if r.len() == 2 => (r[0], r[1]),
        (Some(r), _) => return Err(CliError::Input(format!("axis range must be lo,hi (got {} values)", r.len()))),
        (None, Some(a)) => (a.lo, a.hi),
        (None, None) => (-1.0, 1.0),
    };
    let steps = steps.or(prev.map(|a| a.steps)).unwrap_or(21);
    Ok(Some(AxisSpec { axis, lo, hi, steps }))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Classify { params, config } => {
            let mut c = base_config("classify", config.as_ref())?;
            params.apply(&mut c);
            commands::classify(&c)
        }
        Command::Simulate { run, stride } => {
            run.install_threads()?;
            let mut c = run.resolve("simulate")?;
            if let Some(s) = stride {
                c.simulate.stride = s;
            }
            commands::simulate(&c, &run.out)
        }
        Command::Hitting { run, which, threshold } => {
            run.install_threads()?;
            let mut c = run.resolve("hitting")?;
            if let Some(w) = which {
                c.hitting.which = w;
            }
            if let Some(t) = threshold {
                set_threshold(&mut c, t);
            }
            commands::hitting(&c, &run.out)
        }
        Command::Stationary { run, burn_in, spacing, count } => {
            run.install_threads()?;
            let mut c = run.resolve("stationary")?;
            let s = &mut c.stationary;
            s.burn_in = burn_in.unwrap_or(s.burn_in);
            s.spacing = spacing.unwrap_or(s.spacing);
            s.count = count.unwrap_or(s.count);
            commands::stationary(&c, &run.out)
        }
        Command::Martingale { run, functional, times, box_k } => {
            run.install_threads()?;
            let mut c = run.resolve("martingale")?;
            let m = &mut c.martingale;
            m.functional = functional.unwrap_or(m.functional);
            if let Some(t) = times {
                m.times = t;
            }
            m.box_k = box_k.unwrap_or(m.box_k);
            commands::martingale(&c, &run.out)
        }
        Command::Importance { run, mode, functional } => {
            run.install_threads()?;
            let mut c = run.resolve("importance")?;
            let s = &mut c.importance;
            s.mode = mode.unwrap_or(s.mode);
            s.functional = functional.unwrap_or(s.functional);
            commands::importance(&c, &run.out)
        }
        Command::Phase { run, x_axis, x_range, x_steps, y_axis, y_range, y_steps, cell, which, threshold } => {
            run.install_threads()?;
            let mut c = run.resolve("phase")?;
            if let Some(w) = which {
                c.hitting.which = w;
            }
            if let Some(t) = threshold {
                set_threshold(&mut c, t);
            }
            let prev = c.phase;
            let x = axis(x_axis, x_range, x_steps, prev.map(|p| p.x))?
                .ok_or_else(|| CliError::Input("phase needs --x-axis".into()))?;
            let y = axis(y_axis, y_range, y_steps, prev.and_then(|p| p.y))?;
            let cell = cell.or(prev.map(|p| p.cell)).unwrap_or(PhaseCell::Existence);
            c.phase = Some(PhaseSettings { x, y, cell });
            phase::phase(&c, &run.out)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
