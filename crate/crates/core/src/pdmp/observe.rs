use super::{simulate_to, ParticleEnsemble, SimOptions};
use crate::boundary::{DiffuseSampler, PartlyDiffuseBoundary};
use crate::geometry::Domain;
use crate::spectral::PhaseGrid;
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Histogram of an ensemble on a phase grid, in units of total mass.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMasses {
    pub masses: Vec<f64>,
    /// Mass outside every cell (speed outside the grid or frozen at the wall).
    pub unlocated: f64,
}

impl EmpiricalMasses {
    /// Masses divided by the `dx (x) m` cell weights.
    pub fn densities(&self, phase: &PhaseGrid) -> Vec<f64> {
        phase.densities(&self.masses)
    }
}

pub fn empirical_masses(ens: &ParticleEnsemble, phase: &PhaseGrid) -> EmpiricalMasses {
    let w = 1.0 / ens.len().max(1) as f64;
    let cells: Vec<Option<usize>> = ens
        .particles
        .par_iter()
        .map(|p| phase.locate(p.position(ens.t), p.v))
        .collect();
    let mut masses = vec![0.0; phase.len()];
    let mut unlocated = 0.0;
    for c in cells {
        match c {
            Some(c) => masses[c] += w,
            None => unlocated += w,
        }
    }
    EmpiricalMasses { masses, unlocated }
}

/// `sum |a - b|` over cells, for cell masses on the same grid.
pub fn l1_distance(phase: &PhaseGrid, a: &[f64], b: &[f64]) -> Result<f64> {
    phase.l1_distance(a, b)
}

/// Fraction of live particles in `F = {eps <= |v| <= m, dist(x, boundary) >= eps}`.
pub fn mass_in_f(ens: &ParticleEnsemble, domain: &Domain, eps: f64, m: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < m) {
        return Err(Error::InvalidParameter(format!("need 0 < eps < M, got {eps} and {m}")));
    }
    let n = ens
        .particles
        .par_iter()
        .filter(|p| {
            let s = p.v.norm();
            !p.frozen && s >= eps && s <= m && domain.distance_to_boundary(p.position(ens.t)) >= eps
        })
        .count();
    Ok(n as f64 / ens.len().max(1) as f64)
}

/// Fraction of live particles with `|v| >= eps`.
pub fn mass_highspeed(ens: &ParticleEnsemble, eps: f64) -> Result<f64> {
    if !(eps >= 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be nonnegative, got {eps}")));
    }
    let n = ens.particles.iter().filter(|p| !p.frozen && p.v.norm() >= eps).count();
    Ok(n as f64 / ens.len().max(1) as f64)
}

/// Mean and standard deviation of `sum |X_c / n - p_c|` for `X` multinomial(`n`, `p`),
/// in the normal approximation.
pub fn multinomial_l1_floor(p: &[f64], n: usize) -> (f64, f64) {
    let n = n as f64;
    let mean = p.iter().map(|q| (2.0 * q * (1.0 - q) / (std::f64::consts::PI * n)).sqrt()).sum();
    let var: f64 = p.iter().map(|q| q * (1.0 - q)).sum::<f64>() * (1.0 - 2.0 / std::f64::consts::PI) / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub eps: f64,
    pub m: f64,
    pub grid_id: String,
    pub seed: u64,
    pub particles: usize,
}

/// Observables sampled along a run. Distances are `None` without an invariant density.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub l1_to_invariant: Vec<Option<f64>>,
    pub cesaro_l1: Vec<Option<f64>>,
    pub mass_f: Vec<f64>,
    pub mass_highspeed: Vec<f64>,
    pub frozen_fraction: Vec<f64>,
    pub meta: SeriesMeta,
}

fn cell(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v}"))
}

impl ObservableSeries {
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        writeln!(out, "t,l1_to_invariant,cesaro_l1,mass_F,mass_highspeed,frozen_fraction")?;
        for i in 0..self.times.len() {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[i],
                cell(self.l1_to_invariant[i]),
                cell(self.cesaro_l1[i]),
                self.mass_f[i],
                self.mass_highspeed[i],
                self.frozen_fraction[i]
            )?;
        }
        Ok(())
    }
}

/// What to record at each sample time. The Cesaro column is the time average of the
/// sampled histograms since the first sample time, by the trapezoidal rule.
pub struct ObserveSpec<'a> {
    pub times: Vec<f64>,
    pub eps: f64,
    pub m: f64,
    /// Phase grid and invariant cell masses.
    pub invariant: Option<(&'a PhaseGrid, &'a [f64])>,
    pub grid_id: String,
}

pub fn observe(
    ens: &mut ParticleEnsemble,
    domain: &Domain,
    boundary: &PartlyDiffuseBoundary,
    sampler: &DiffuseSampler,
    spec: &ObserveSpec<'_>,
    opts: &SimOptions,
) -> Result<ObservableSeries> {
    if spec.times.windows(2).any(|w| w[1] < w[0]) || spec.times.first().is_some_and(|t| *t < ens.t) {
        return Err(Error::InvalidParameter("sample times must be nondecreasing and not before the clock".into()));
    }
    let mut s = ObservableSeries {
        times: Vec::new(),
        l1_to_invariant: Vec::new(),
        cesaro_l1: Vec::new(),
        mass_f: Vec::new(),
        mass_highspeed: Vec::new(),
        frozen_fraction: Vec::new(),
        meta: SeriesMeta {
            eps: spec.eps,
            m: spec.m,
            grid_id: spec.grid_id.clone(),
            seed: ens.seed,
            particles: ens.len(),
        },
    };
    let mut integral: Option<Vec<f64>> = None;
    let mut last: Option<(f64, Vec<f64>)> = None;
    for &t in &spec.times {
        simulate_to(ens, domain, boundary, sampler, t, opts)?;
        s.times.push(t);
        s.mass_f.push(mass_in_f(ens, domain, spec.eps, spec.m)?);
        s.mass_highspeed.push(mass_highspeed(ens, spec.eps)?);
        s.frozen_fraction.push(ens.frozen_fraction());
        if let Some((phase, psi)) = spec.invariant {
            let e = empirical_masses(ens, phase);
            s.l1_to_invariant.push(Some(phase.l1_distance(&e.masses, psi)? + e.unlocated));
            let acc = integral.get_or_insert_with(|| vec![0.0; phase.len()]);
            let m: Vec<f64> = match &last {
                None => e.masses.clone(),
                Some((t_prev, prev)) => {
                    let dt = t - t_prev;
                    acc.iter_mut().zip(prev.iter().zip(&e.masses)).for_each(|(a, (p, q))| *a += 0.5 * dt * (p + q));
                    let span = t - spec.times[0];
                    if span > 0.0 { acc.iter().map(|a| a / span).collect() } else { e.masses.clone() }
                }
            };
            let off: f64 = 1.0 - m.iter().sum::<f64>();
            s.cesaro_l1.push(Some(phase.l1_distance(&m, psi)? + off.max(0.0)));
            last = Some((t, e.masses));
        } else {
            s.l1_to_invariant.push(None);
            s.cesaro_l1.push(None);
        }
    }
    Ok(s)
}
