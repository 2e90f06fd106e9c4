use super::assemble::{BoundaryMatrix, Lines, TransferOperator};
use super::grid::TraceGrid;
use super::operator::TraceOperator;
use super::phase::PhaseGrid;
use crate::geometry::{Direction, Side, Vector};
use crate::{Error, Result};
use rayon::prelude::*;

/// Phase-grid cell masses of `Psi = Xi_0 u`, evaluated by footpoint lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantDensity {
    /// Cell masses normalised to total one.
    pub masses: Vec<f64>,
    /// Total mass before normalisation.
    pub raw_mass: f64,
    /// Fraction of node weight whose footpoint landed in a sliver and was moved.
    pub redirected: f64,
}

/// Density of an incoming trace vector at `(z, v)`, `z` on the boundary with `v`
/// pointing inward. Returns the density and whether the lookup was redirected.
pub fn incoming_density(grid: &TraceGrid, u: &[f64], z: Vector, v: Vector) -> Option<(f64, bool)> {
    let bin = grid.locate_bin(v.norm())?;
    let (site, moved) = grid.site_on_side_by_patch(grid.locate_patch(z), grid.locate_dir(v), Side::Incoming)?;
    let cell = grid.slot(Side::Incoming, site) * grid.n_bins() + bin;
    Some((u[cell] / grid.mu_weight(Side::Incoming, cell), moved))
}

/// Footpoint `x - t_-(x, omega) omega` of an interior or outgoing boundary point.
pub fn footpoint(grid: &TraceGrid, x: Vector, omega: Vector) -> Result<Vector> {
    let t = grid.domain().exit_time(x, omega, Direction::Backward)?;
    Ok(x - omega * t)
}

/// `Psi = Xi_0 u` on the phase grid: each quadrature node `(x, omega)` takes the density
/// of `u` at its footpoint; speeds are integrated per trace bin.
pub fn build_invariant_density(phase: &PhaseGrid, u: &[f64]) -> Result<InvariantDensity> {
    let grid = phase.trace();
    let nb = grid.n_bins();
    if u.len() != grid.n_minus() {
        return Err(Error::GridMismatch(format!("trace vector of length {} for {} incoming cells", u.len(), grid.n_minus())));
    }
    let nv = phase.n_vel();
    let per_box: Vec<(Vec<f64>, f64, f64)> = phase
        .boxes
        .par_iter()
        .map(|bx| {
            let mut out = vec![0.0; nv];
            let (mut moved, mut total) = (0.0, 0.0);
            for &(x, wx) in &bx.nodes {
                for (j, cell) in grid.dirs.iter().enumerate() {
                    for &(omega, a) in &cell.subs {
                        let z = footpoint(grid, x, omega)?;
                        let Some((site, m)) = grid.site_on_side_by_patch(grid.locate_patch(z), j, Side::Incoming) else {
                            continue;
                        };
                        total += wx * a;
                        if m {
                            moved += wx * a;
                        }
                        let slot = grid.slot(Side::Incoming, site);
                        let mu = grid.site_mu(Side::Incoming, site);
                        for b in 0..nb {
                            let dens = u[slot * nb + b] / (mu * grid.bin_moment[b]);
                            out[phase.vel_of(j, b)] += wx * a * grid.bins[b].mass * dens;
                        }
                    }
                }
            }
            Ok((out, moved, total))
        })
        .collect::<Result<_>>()?;
    let total: f64 = per_box.iter().map(|p| p.2).sum();
    let redirected = per_box.iter().map(|p| p.1).sum::<f64>() / total.max(f64::MIN_POSITIVE);
    let mut masses: Vec<f64> = per_box.into_iter().flat_map(|p| p.0).collect();
    let raw_mass: f64 = masses.iter().sum();
    if !(raw_mass > 0.0) || !raw_mass.is_finite() {
        return Err(Error::DivergentMass);
    }
    masses.iter_mut().for_each(|m| *m /= raw_mass);
    Ok(InvariantDensity { masses, raw_mass, redirected })
}

/// `int_{Gamma_-} u tau_+ dmu` with the cell-averaged exit time, and the bound
/// `D int u |v|^{-1} dmu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LiftMass {
    pub value: f64,
    pub bound: f64,
}

pub fn lift_mass(grid: &TraceGrid, m0: &TransferOperator, u: &[f64]) -> LiftMass {
    let nb = grid.n_bins();
    let (mut value, mut bound) = (0.0, 0.0);
    for (c, &x) in u.iter().enumerate() {
        let inv = grid.inverse_speed(c % nb);
        value += x * m0.mean_chord[c / nb] * inv;
        bound += x * inv;
    }
    LiftMass { value, bound: grid.domain().diameter() * bound }
}

/// Outgoing trace of `Xi_0 u` by footpoint lookup: cell masses on `Gamma_+`.
pub fn outgoing_trace(grid: &TraceGrid, u: &[f64]) -> Result<Vec<f64>> {
    let nb = grid.n_bins();
    let per_site: Vec<Vec<f64>> = grid
        .plus_sites()
        .par_iter()
        .map(|&site| {
            let mut out = vec![0.0; nb];
            for s in grid.samples(Side::Outgoing, site) {
                let z = footpoint(grid, s.x, s.omega)?;
                let j = grid.site_parts(site).1;
                let Some((src, _)) = grid.site_on_side_by_patch(grid.locate_patch(z), j, Side::Incoming) else {
                    continue;
                };
                let slot = grid.slot(Side::Incoming, src);
                let mu = grid.site_mu(Side::Incoming, src);
                for (b, o) in out.iter_mut().enumerate() {
                    *o += s.w * u[slot * nb + b] / mu;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per_site.into_iter().flatten().collect())
}

/// `||Psi|_{Gamma_-} - H (Psi|_{Gamma_+})||_1 / ||Psi|_{Gamma_-}||_1` for `Psi = Xi_0 u`.
pub fn boundary_residual(grid: &TraceGrid, h: &BoundaryMatrix, u: &[f64]) -> Result<f64> {
    let plus = outgoing_trace(grid, u)?;
    let back = h.apply(&plus);
    let num: f64 = back.iter().zip(u).map(|(a, b)| (a - b).abs()).sum();
    Ok(num / u.iter().map(|x| x.abs()).sum::<f64>())
}

/// Running Cesaro mean (trapezoidal in time) of a trajectory of cell masses sampled
/// at equal steps, and its `L^1` distance to `mass * psi`, together with the
/// instantaneous distance.
#[derive(Clone, Debug, PartialEq)]
pub struct CesaroSeries {
    pub instantaneous: Vec<f64>,
    pub cesaro: Vec<f64>,
}

pub fn cesaro_defect(trajectory: &[Vec<f64>], psi: &[f64]) -> Result<CesaroSeries> {
    let mut acc = vec![0.0; psi.len()];
    let (mut inst, mut ces) = (Vec::new(), Vec::new());
    for (k, f) in trajectory.iter().enumerate() {
        if f.len() != psi.len() {
            return Err(Error::GridMismatch("trajectory and invariant density differ in length".into()));
        }
        let mass: f64 = f.iter().sum();
        let d = |g: &[f64]| g.iter().zip(psi).map(|(a, p)| (a - mass * p).abs()).sum::<f64>();
        inst.push(d(f));
        if k == 0 {
            ces.push(d(f));
            continue;
        }
        acc.iter_mut().zip(trajectory[k - 1].iter().zip(f)).for_each(|(a, (p, q))| *a += 0.5 * (p + q));
        let mean: Vec<f64> = acc.iter().map(|a| a / k as f64).collect();
        ces.push(d(&mean));
    }
    Ok(CesaroSeries { instantaneous: inst, cesaro: ces })
}

/// `int h dx (x) m` on the phase grid against `int_{Gamma_+} dmu int_0^{tau_-} h(x - s v, v) ds`
/// on the trace grid, for a test function `h(x, v)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityCheck {
    pub phase: f64,
    pub trace: f64,
    pub relative_error: f64,
}

pub fn integration_identity(phase: &PhaseGrid, h: &(dyn Fn(Vector, Vector) -> f64 + Sync)) -> Result<IdentityCheck> {
    let grid = phase.trace();
    let rule = crate::vmeasure::quadrature::gauss_legendre(8, 0.0, 1.0);
    let pv: f64 = phase
        .boxes
        .par_iter()
        .map(|bx| {
            let mut s = 0.0;
            for &(x, wx) in &bx.nodes {
                for cell in &grid.dirs {
                    for &(o, a) in &cell.subs {
                        for bin in &grid.bins {
                            for &(r, w) in &bin.nodes {
                                s += wx * a * w * h(x, o * r);
                            }
                        }
                    }
                }
            }
            s
        })
        .sum();
    let tv: f64 = grid
        .plus_sites()
        .par_iter()
        .map(|&site| {
            let mut s = 0.0;
            for smp in grid.samples(Side::Outgoing, site) {
                let len = grid.domain().exit_time(smp.x, smp.omega, Direction::Backward)?;
                for bin in &grid.bins {
                    for &(r, w) in &bin.nodes {
                        let v = smp.omega * r;
                        let line: f64 = rule.iter().map(|&(t, g)| g * h(smp.x - smp.omega * (t * len), v)).sum();
                        s += smp.w * w * line * len;
                    }
                }
            }
            Ok(s)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .sum();
    Ok(IdentityCheck { phase: pv, trace: tv, relative_error: (pv - tv).abs() / pv.abs() })
}

/// `int_{Gamma_+} G_0 f dmu` for a field of phase cell masses, integrating the piecewise
/// constant density exactly along each backward chord.
pub fn outgoing_integral(phase: &PhaseGrid, masses: &[f64]) -> Result<f64> {
    let grid = phase.trace();
    let dens = phase.densities(masses);
    let parts: Vec<f64> = grid
        .plus_sites()
        .par_iter()
        .map(|&site| {
            let j = grid.site_parts(site).1;
            let mut s = 0.0;
            for smp in grid.samples(Side::Outgoing, site) {
                let len = grid.domain().exit_time(smp.x, smp.omega, Direction::Backward)?;
                for (bx, a, b) in phase.crossings(smp.x, -smp.omega, len) {
                    for (bi, bin) in grid.bins.iter().enumerate() {
                        let c = phase.cell(bx, phase.vel_of(j, bi));
                        s += smp.w * bin.mass * dens[c] * (b - a);
                    }
                }
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;
    Ok(parts.iter().sum())
}

/// Mass `sum_lines w * (bin mass)` check that every incoming part is fully transported.
pub fn transported_fraction(grid: &TraceGrid, lines: &Lines) -> f64 {
    let moved: f64 = lines.lines.iter().map(|l| l.w).sum();
    let total: f64 = grid.minus_sites().iter().map(|&s| grid.site_mu(Side::Incoming, s)).sum();
    moved / total
}
