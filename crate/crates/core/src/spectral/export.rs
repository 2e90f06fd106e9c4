use super::grid::TraceGrid;
use super::phase::PhaseGrid;
use crate::geometry::Side;
use crate::{Error, Result};
use std::io::{BufRead, Write};

fn io(e: std::io::Error) -> Error {
    Error::InvalidParameter(format!("i/o failed: {e}"))
}

/// One row per trace cell: representative point and velocity, `mu` weight, mass and
/// density.
pub fn write_trace_csv<W: Write>(grid: &TraceGrid, side: Side, masses: &[f64], out: &mut W) -> Result<()> {
    if masses.len() != grid.n_cells(side) {
        return Err(Error::GridMismatch("trace field does not match the grid".into()));
    }
    writeln!(out, "cell,x,y,z,vx,vy,vz,weight,mass,density").map_err(io)?;
    for (c, m) in masses.iter().enumerate() {
        let (x, v) = grid.representative(side, c);
        let w = grid.mu_weight(side, c);
        writeln!(out, "{c},{},{},{},{},{},{},{w},{m},{}", x.0[0], x.0[1], x.0[2], v.0[0], v.0[1], v.0[2], m / w)
            .map_err(io)?;
    }
    Ok(())
}

/// One row per phase cell: centroid, mean velocity, `dx (x) m` weight, mass and density.
pub fn write_phase_csv<W: Write>(phase: &PhaseGrid, masses: &[f64], out: &mut W) -> Result<()> {
    if masses.len() != phase.len() {
        return Err(Error::GridMismatch("phase field does not match the grid".into()));
    }
    writeln!(out, "cell,x,y,z,vx,vy,vz,weight,mass,density").map_err(io)?;
    for (c, m) in masses.iter().enumerate() {
        let (x, dir, speed) = phase.cell_center(c);
        let v = dir * speed;
        let w = phase.weight(c);
        writeln!(out, "{c},{},{},{},{},{},{},{w},{m},{}", x.0[0], x.0[1], x.0[2], v.0[0], v.0[1], v.0[2], m / w)
            .map_err(io)?;
    }
    Ok(())
}

/// Reads the mass column written by [`write_phase_csv`] and checks it against `phase`.
pub fn read_phase_masses<R: BufRead>(phase: &PhaseGrid, input: R) -> Result<Vec<f64>> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::GridMismatch("empty density file".into()))?.map_err(io)?;
    let cols: Vec<&str> = header.split(',').collect();
    let (ic, im) = match (cols.iter().position(|c| *c == "cell"), cols.iter().position(|c| *c == "mass")) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::GridMismatch("density file needs cell and mass columns".into())),
    };
    let mut out = vec![f64::NAN; phase.len()];
    for (k, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::GridMismatch(format!("malformed density row {}", k + 2));
        let c: usize = f.get(ic).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let m: f64 = f.get(im).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if c >= out.len() {
            return Err(Error::GridMismatch(format!("cell {c} outside a grid of {}", out.len())));
        }
        out[c] = m;
    }
    if out.iter().any(|m| m.is_nan()) {
        return Err(Error::GridMismatch("density file does not cover the phase grid".into()));
    }
    Ok(out)
}
