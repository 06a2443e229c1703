//! Phase diagrams: a matrix of regime verdicts or hitting frequencies over a grid
//! of one or two parameters.

use std::io::Write;
use std::path::Path;

use o2bp::montecarlo::hitting_probability;
use o2bp::regime::{
    corner_verdict, edge_verdicts, existence_class, skew_residual, stationary_law, StationaryObstruction, SKEW_TOLERANCE,
};
use o2bp::O2bpParams;

use crate::commands::Output;
use crate::config::{PhaseCell, RunConfig};
use crate::CliError;

/// Most cells a Monte Carlo grid may have.
pub const MAX_MC_CELLS: usize = 10_000;

fn verdict(p: &O2bpParams, cell: PhaseCell) -> String {
    if p.validate().is_err() {
        return "Invalid".into();
    }
    match cell {
        PhaseCell::Existence => existence_class(p).map_or_else(|_| "Invalid".into(), |e| format!("{:?}", e.kind)),
        PhaseCell::Corner => format!("{:?}", corner_verdict(p).status),
        PhaseCell::XEdge => format!("{:?}", edge_verdicts(p).0.status),
        PhaseCell::YEdge => format!("{:?}", edge_verdicts(p).1.status),
        PhaseCell::Stationary => match stationary_law(p) {
            Ok(_) => "Exists".into(),
            Err(StationaryObstruction::SkewSymmetryViolated { .. }) => "SkewSymmetryViolated".into(),
            Err(o) => format!("{o:?}"),
        },
        PhaseCell::Skew => if skew_residual(p).abs() <= SKEW_TOLERANCE { "Holds" } else { "Violated" }.into(),
        PhaseCell::Hitting => unreachable!("hitting cells are simulated"),
    }
}

pub fn phase(c: &RunConfig, dir: &Path) -> Result<bool, CliError> {
    let ph = c.phase.expect("phase settings resolved");
    let (nx, ny) = (ph.x.steps, ph.y.map_or(1, |y| y.steps));
    if nx == 0 || ny == 0 {
        return Err(CliError::Input("phase axes need at least one step".into()));
    }
    if ph.cell == PhaseCell::Hitting {
        c.ensemble.validate()?;
        if nx * ny > MAX_MC_CELLS {
            return Err(CliError::Input(format!(
                "Monte Carlo grids are limited to {MAX_MC_CELLS} cells (got {})",
                nx * ny
            )));
        }
    }

    let mut rows = Vec::with_capacity(ny);
    for j in 0..ny {
        let mut row = Vec::with_capacity(nx);
        for i in 0..nx {
            let mut p = c.params;
            ph.x.axis.set(&mut p, ph.x.value(i));
            if let Some(y) = ph.y {
                y.axis.set(&mut p, y.value(j));
            }
            row.push(if ph.cell == PhaseCell::Hitting {
                if p.validate().is_err() {
                    "Invalid".to_string()
                } else {
                    let mut e = c.ensemble;
                    e.seed = e.seed.wrapping_add((j * nx + i) as u64);
                    hitting_probability(&p, &e, c.hitting.which)?.frequency.to_string()
                }
            } else {
                verdict(&p, ph.cell)
            });
        }
        rows.push(row);
    }

    let out = Output::new("phase", c, dir)?;
    let corner = match ph.y {
        Some(y) => format!("{}\\{}", y.axis.name(), ph.x.axis.name()),
        None => ph.x.axis.name().to_string(),
    };
    let header: Vec<String> = std::iter::once(corner).chain((0..nx).map(|i| ph.x.value(i).to_string())).collect();
    let mut w = out.csv("phase.csv", &header.join(","))?;
    for (j, row) in rows.iter().enumerate() {
        let label = ph.y.map_or_else(|| "value".to_string(), |y| y.value(j).to_string());
        writeln!(w, "{label},{}", row.join(","))?;
    }
    w.flush()?;
    Ok(true)
}
