use super::assemble::{BoundaryMatrix, Lines, TransferOperator};
use super::operator::TraceOperator;
use super::phase::PhaseGrid;
use crate::geometry::{Direction, Side};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolventOptions {
    /// Series stops once the increment's norm is below `tol * ||f||`.
    pub tol: f64,
    /// Terms after which convergence is reported as slow.
    pub slow_terms: usize,
    pub max_terms: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions { tol: 1e-10, slow_terms: 10_000, max_terms: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResolventResult {
    /// Phase cell masses of `R(lambda) f`.
    pub masses: Vec<f64>,
    pub terms: usize,
    /// More than `slow_terms` terms were needed.
    pub slow: bool,
    /// Norm of the first neglected increment.
    pub tail: f64,
}

/// `R(lambda) = R_lambda + sum_n Xi_lambda H (M_lambda H)^n G_lambda` on phase cell masses.
pub struct Resolvent<'a> {
    phase: &'a PhaseGrid,
    h: &'a BoundaryMatrix,
    lines: &'a Lines,
    m_lambda: TransferOperator,
    col_mass: Vec<f64>,
    lambda: f64,
}

fn occupation(mass: f64, lambda: f64, rho: f64, a: f64, b: f64) -> f64 {
    mass * ((-lambda * a / rho).exp() - (-lambda * b / rho).exp()) / lambda
}

impl<'a> Resolvent<'a> {
    pub fn new(phase: &'a PhaseGrid, h: &'a BoundaryMatrix, lines: &'a Lines, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        let grid = phase.trace();
        let m_lambda = TransferOperator::from_lines(grid, lines, lambda)?;
        let mut col_mass = vec![0.0; grid.minus_sites().len()];
        for l in &lines.lines {
            col_mass[grid.slot(Side::Incoming, l.from)] += l.w;
        }
        Ok(Resolvent { phase, h, lines, m_lambda, col_mass, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Free flight from the phase grid: occupation masses `R_lambda f` and the
    /// damped exit flux `G_lambda f` on `Gamma_+`.
    pub fn free_flight(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (phase, grid, lam) = (self.phase, self.phase.trace(), self.lambda);
        if f.len() != phase.len() {
            return Err(Error::GridMismatch(format!("field of length {} on a grid of {}", f.len(), phase.len())));
        }
        let nv = phase.n_vel();
        let nb = grid.n_bins();
        let mut dir_w = vec![0.0; phase.n_dir()];
        for (j, c) in grid.dirs.iter().enumerate() {
            dir_w[phase.dir_group(j)] += c.weight;
        }
        let mut speed_m = vec![0.0; phase.n_speed()];
        for (b, bin) in grid.bins.iter().enumerate() {
            speed_m[phase.speed_group(b)] += bin.mass;
        }
        let parts: Vec<(Vec<f64>, Vec<f64>)> = phase
            .boxes
            .par_iter()
            .enumerate()
            .map(|(bi, bx)| {
                let mut occ = vec![0.0; phase.len()];
                let mut flux = vec![0.0; grid.n_plus()];
                let fb = &f[bi * nv..(bi + 1) * nv];
                if fb.iter().all(|x| *x == 0.0) {
                    return Ok((occ, flux));
                }
                for &(x, wx) in &bx.ray_nodes {
                    let fx = wx / bx.volume;
                    for (j, cell) in grid.dirs.iter().enumerate() {
                        let dg = phase.dir_group(j);
                        for &(omega, a) in &cell.subs {
                            let fo = fx * a / dir_w[dg];
                            let len = grid.domain().exit_time(x, omega, Direction::Forward)?;
                            let segs = phase.crossings(x, omega, len);
                            let exit = grid.site_on_side_by_patch(grid.locate_patch(x + omega * len), j, Side::Outgoing);
                            for (b, bin) in grid.bins.iter().enumerate() {
                                let sg = phase.speed_group(b);
                                let fv = fb[dg * phase.n_speed() + sg];
                                if fv == 0.0 {
                                    continue;
                                }
                                for &(r, w) in &bin.nodes {
                                    let m = fv * fo * w / speed_m[sg];
                                    for &(k, s0, s1) in &segs {
                                        occ[phase.cell(k, phase.vel_of(j, b))] += occupation(m, lam, r, s0, s1);
                                    }
                                    if let Some((site, _)) = exit {
                                        flux[grid.slot(Side::Outgoing, site) * nb + b] += m * (-lam * len / r).exp();
                                    }
                                }
                            }
                        }
                    }
                }
                Ok((occ, flux))
            })
            .collect::<Result<_>>()?;
        let mut occ = vec![0.0; phase.len()];
        let mut flux = vec![0.0; grid.n_plus()];
        for (o, g) in parts {
            occ.iter_mut().zip(&o).for_each(|(a, b)| *a += b);
            flux.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((occ, flux))
    }

    /// `Xi_lambda u`: occupation masses of the flights starting from incoming cells.
    pub fn lift(&self, u: &[f64]) -> Vec<f64> {
        let (phase, grid, lam) = (self.phase, self.phase.trace(), self.lambda);
        let nb = grid.n_bins();
        let chunk = 2048;
        let parts: Vec<Vec<f64>> = self
            .lines
            .lines
            .par_chunks(chunk)
            .map(|ls| {
                let mut occ = vec![0.0; phase.len()];
                for l in ls {
                    let c = grid.slot(Side::Incoming, l.from);
                    let frac = l.w / self.col_mass[c];
                    let j = grid.site_parts(l.from).1;
                    let segs = phase.crossings(l.z, l.omega, l.chord);
                    for (b, bin) in grid.bins.iter().enumerate() {
                        let ub = u[c * nb + b];
                        if ub == 0.0 {
                            continue;
                        }
                        let vel = phase.vel_of(j, b);
                        let norm = grid.bin_moment[b];
                        for &(r, w) in &bin.nodes {
                            let m = ub * frac * w * r / norm;
                            for &(k, s0, s1) in &segs {
                                occ[phase.cell(k, vel)] += occupation(m, lam, r, s0, s1);
                            }
                        }
                    }
                }
                occ
            })
            .collect();
        let mut occ = vec![0.0; phase.len()];
        for p in parts {
            occ.iter_mut().zip(&p).for_each(|(a, b)| *a += b);
        }
        occ
    }

    pub fn apply(&self, f: &[f64], opts: &ResolventOptions) -> Result<ResolventResult> {
        let norm_f: f64 = f.iter().map(|x| x.abs()).sum();
        let (mut out, mut v) = self.free_flight(f)?;
        let mut acc = vec![0.0; self.h.rows()];
        let mut w = vec![0.0; self.h.rows()];
        let mut terms = 0;
        let mut tail = v.iter().map(|x| x.abs()).sum::<f64>();
        while tail > opts.tol * norm_f && terms < opts.max_terms {
            self.h.apply_into(&v, &mut w);
            acc.iter_mut().zip(&w).for_each(|(a, b)| *a += b);
            self.m_lambda.apply_into(&w, &mut v);
            terms += 1;
            tail = v.iter().map(|x| x.abs()).sum();
        }
        let lifted = self.lift(&acc);
        out.iter_mut().zip(&lifted).for_each(|(a, b)| *a += b);
        Ok(ResolventResult { masses: out, terms, slow: terms > opts.slow_terms, tail })
    }
}
