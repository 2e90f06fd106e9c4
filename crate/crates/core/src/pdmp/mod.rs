//! Event-driven simulation of the transport semigroup as a piecewise deterministic
//! Markov process: free flight between wall hits, velocity jumps drawn from `H` at
//! each hit.

mod observe;

pub use observe::{
    empirical_masses, l1_distance, mass_highspeed, mass_in_f, multinomial_l1_floor, observe, EmpiricalMasses,
    ObservableSeries, ObserveSpec, SeriesMeta,
};

use crate::boundary::{DiffuseSampler, PartlyDiffuseBoundary};
use crate::geometry::{project_to_boundary, Direction, Domain, Vector};
use crate::spectral::PhaseGrid;
use crate::vmeasure::{uniform_direction, RadialPart, RadialTable, VelocityMeasure};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One particle: position and velocity at its last event, and the absolute time of
/// its next wall hit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub x: Vector,
    pub v: Vector,
    pub t_last: f64,
    pub next_hit_time: f64,
    pub event_count: u64,
    pub frozen: bool,
}

impl Particle {
    pub fn position(&self, t: f64) -> Vector {
        if self.frozen {
            self.x
        } else {
            self.x + self.v * (t - self.t_last)
        }
    }
}

/// `N` particles of equal weight `1/N` sharing a clock.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    pub particles: Vec<Particle>,
    pub t: f64,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Current `(x, v)` of every particle.
    pub fn states(&self) -> impl Iterator<Item = (Vector, Vector)> + '_ {
        self.particles.iter().map(move |p| (p.position(self.t), p.v))
    }

    pub fn frozen_fraction(&self) -> f64 {
        self.particles.iter().filter(|p| p.frozen).count() as f64 / self.len().max(1) as f64
    }

    pub fn total_events(&self) -> u64 {
        self.particles.iter().map(|p| p.event_count).sum()
    }
}

/// RNG stream for `(seed, particle, event)`; events own disjoint blocks of the stream.
pub fn event_rng(seed: u64, particle: usize, event: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(particle as u64);
    r.set_word_pos((event as u128) << 24);
    r
}

#[derive(Clone, Copy, Debug)]
pub enum InitialLaw<'a> {
    /// Normalised `dx (x) m(dv)`.
    Uniform,
    /// Piecewise uniform density given by phase cell masses.
    Phase { grid: &'a PhaseGrid, masses: &'a [f64] },
    PointMass { x: Vector, v: Vector },
}

enum SpeedLaw {
    Lebesgue { lo: f64, hi: f64, d: i32 },
    Table(RadialTable),
}

impl SpeedLaw {
    fn new(measure: &VelocityMeasure, lo: f64, hi: f64) -> Result<Self> {
        Ok(match measure.radial() {
            RadialPart::Lebesgue { rho_min, rho_max } => {
                SpeedLaw::Lebesgue { lo: lo.max(*rho_min), hi: hi.min(*rho_max), d: measure.dimension() as i32 }
            }
            _ => SpeedLaw::Table(RadialTable::from_measure(measure, lo, hi, 4096, |_| 1.0)?),
        })
    }

    fn sample(&self, u: f64) -> f64 {
        match self {
            SpeedLaw::Lebesgue { lo, hi, d } => (lo.powi(*d) + u * (hi.powi(*d) - lo.powi(*d))).powf(1.0 / *d as f64),
            SpeedLaw::Table(t) => t.sample(u),
        }
    }
}

fn uniform_point<R: Rng>(domain: &Domain, lo: Vector, hi: Vector, rng: &mut R) -> Option<Vector> {
    for _ in 0..100_000 {
        let mut x = Vector::default();
        for k in 0..domain.dimension() {
            x.0[k] = lo.0[k] + rng.random::<f64>() * (hi.0[k] - lo.0[k]);
        }
        if domain.contains(x) {
            return Some(x);
        }
    }
    None
}

fn start(domain: &Domain, x: Vector, v: Vector) -> Result<Particle> {
    let t = domain.exit_time(x, v, Direction::Forward)?;
    Ok(Particle { x, v, t_last: 0.0, next_hit_time: t, event_count: 0, frozen: false })
}

/// `n` i.i.d. particles from `law`, particle `i` drawing from its own stream.
pub fn init_ensemble(
    domain: &Domain,
    measure: &VelocityMeasure,
    n: usize,
    law: InitialLaw<'_>,
    seed: u64,
) -> Result<ParticleEnsemble> {
    let d = domain.dimension();
    let particles: Vec<Particle> = match law {
        InitialLaw::PointMass { x, v } => {
            if !domain.contains(x) && domain.level(x).abs() > domain.tol_boundary() {
                return Err(Error::UnsupportedInitialLaw("point mass outside the domain".into()));
            }
            if v.norm() == 0.0 {
                return Err(Error::UnsupportedInitialLaw("point mass at zero velocity".into()));
            }
            let p = start(domain, x, v)?;
            vec![p; n]
        }
        InitialLaw::Uniform => {
            let speeds = SpeedLaw::new(measure, 0.0, f64::INFINITY)?;
            let (lo, hi) = domain.bounds();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = event_rng(seed, i, 0);
                    let x = uniform_point(domain, lo, hi, &mut rng)
                        .ok_or_else(|| Error::UnsupportedInitialLaw("domain too thin for rejection".into()))?;
                    let v = uniform_direction(d, &mut rng) * speeds.sample(rng.random());
                    start(domain, x, v)
                })
                .collect::<Result<_>>()?
        }
        InitialLaw::Phase { grid, masses } => {
            if masses.len() != grid.len() {
                return Err(Error::GridMismatch("initial masses do not match the phase grid".into()));
            }
            if masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
                return Err(Error::UnsupportedInitialLaw("negative or non-finite cell mass".into()));
            }
            let mut cum = vec![0.0];
            for m in masses {
                cum.push(cum.last().unwrap() + m);
            }
            let total = *cum.last().unwrap();
            if !(total > 0.0) {
                return Err(Error::UnsupportedInitialLaw("initial density has no mass".into()));
            }
            let trace = grid.trace();
            let mut dir_members = vec![Vec::new(); grid.n_dir()];
            for j in 0..trace.n_dirs() {
                dir_members[grid.dir_group(j)].push(j);
            }
            let mut speed_span = vec![(f64::INFINITY, 0.0f64); grid.n_speed()];
            for (b, bin) in trace.bins.iter().enumerate() {
                let s = &mut speed_span[grid.speed_group(b)];
                *s = (s.0.min(bin.lo), s.1.max(bin.hi));
            }
            let speed_laws =
                speed_span.iter().map(|&(lo, hi)| SpeedLaw::new(measure, lo, hi)).collect::<Result<Vec<_>>>()?;
            let h = grid.box_size();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut rng = event_rng(seed, i, 0);
                    let u = rng.random::<f64>() * total;
                    let c = cum.partition_point(|&s| s <= u).clamp(1, masses.len()) - 1;
                    let (bx, vel) = (c / grid.n_vel(), c % grid.n_vel());
                    let (dg, sg) = grid.vel_parts(vel);
                    let corner = grid.boxes[bx].nodes[0].0;
                    let lo = grid.box_corner(bx);
                    let hi = lo + Vector::new3(h, h, if d == 3 { h } else { 0.0 });
                    let x = uniform_point(domain, lo, hi, &mut rng).unwrap_or(corner);
                    let members = &dir_members[dg];
                    let j = members[(rng.random::<f64>() * members.len() as f64) as usize % members.len()];
                    let omega = trace.direction_in_cell(j, rng.random(), rng.random());
                    let v = omega * speed_laws[sg].sample(rng.random());
                    start(domain, x, v)
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(ParticleEnsemble { particles, t: 0.0, seed })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimOptions {
    /// Post-collision velocities with `|v.n| <= graze |v|` are redrawn.
    pub graze: f64,
    /// Particles slower than this after a hit are frozen.
    pub freeze_speed: f64,
    /// Events allowed per unit of simulated time (at least `min_events` per call).
    pub max_event_rate: f64,
    pub min_events: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { graze: 1e-9, freeze_speed: 1e-6, max_event_rate: 1e5, min_events: 10_000 }
    }
}

/// Counts for one call of [`simulate_to`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SimReport {
    pub events: u64,
    pub newly_frozen: usize,
    pub budget_exceeded: usize,
}

const MAX_REDRAWS: usize = 64;

fn advance(
    p: &mut Particle,
    index: usize,
    seed: u64,
    domain: &Domain,
    boundary: &PartlyDiffuseBoundary,
    sampler: &DiffuseSampler,
    t_end: f64,
    budget: u64,
    opts: &SimOptions,
) -> Result<(u64, bool, bool)> {
    let mut events = 0u64;
    while !p.frozen && p.next_hit_time <= t_end {
        if events >= budget {
            p.x = p.position(p.next_hit_time);
            p.t_last = p.next_hit_time;
            p.frozen = true;
            return Ok((events, true, true));
        }
        let x = project_to_boundary(domain, p.x + p.v * (p.next_hit_time - p.t_last))?;
        let n = domain.normal(x)?;
        p.event_count += 1;
        events += 1;
        let mut rng = event_rng(seed, index, p.event_count);
        let mut v = p.v;
        for _ in 0..MAX_REDRAWS {
            v = boundary.sample_post_collision(sampler, x, n, p.v, opts.graze, &mut rng)?.0;
            if -v.dot(&n) > opts.graze * v.norm() || v.norm() < opts.freeze_speed {
                break;
            }
        }
        p.x = x;
        p.t_last = p.next_hit_time;
        p.v = v;
        if v.norm() < opts.freeze_speed {
            p.frozen = true;
            return Ok((events, true, false));
        }
        p.next_hit_time = p.t_last + domain.exit_time(x, v, Direction::Forward)?;
    }
    Ok((events, false, false))
}

/// Advances every particle to `t_end`: free flight between hits, a draw from
/// `P(x, v', .)` at each hit.
pub fn simulate_to(
    ens: &mut ParticleEnsemble,
    domain: &Domain,
    boundary: &PartlyDiffuseBoundary,
    sampler: &DiffuseSampler,
    t_end: f64,
    opts: &SimOptions,
) -> Result<SimReport> {
    if !(t_end >= ens.t) {
        return Err(Error::InvalidParameter(format!("t_end {t_end} before the clock {}", ens.t)));
    }
    let budget = opts.min_events.max((opts.max_event_rate * (t_end - ens.t)).ceil() as u64);
    let seed = ens.seed;
    let out: Vec<(u64, bool, bool)> = ens
        .particles
        .par_iter_mut()
        .enumerate()
        .map(|(i, p)| advance(p, i, seed, domain, boundary, sampler, t_end, budget, opts))
        .collect::<Result<_>>()?;
    ens.t = t_end;
    let mut r = SimReport::default();
    for (e, f, b) in out {
        r.events += e;
        r.newly_frozen += f as usize;
        r.budget_exceeded += b as usize;
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{AlphaField, DiffuseKernel, ReflectionLaw};

    fn specular_disk() -> (Domain, VelocityMeasure, PartlyDiffuseBoundary, DiffuseSampler) {
        let d = Domain::unit_disk();
        let m = VelocityMeasure::single_speed(2, 1.0, 1.0).unwrap();
        let k = DiffuseKernel::maxwell(&VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap(), 1.0).unwrap();
        let s = DiffuseSampler::new(&k).unwrap();
        let h = PartlyDiffuseBoundary::new(AlphaField::constant(1.0), ReflectionLaw::Specular, k).unwrap();
        (d, m, h, s)
    }

    #[test]
    fn specular_chords_have_equal_length() {
        let (d, m, h, s) = specular_disk();
        let x = Vector::new2(0.3, -0.2);
        let v = Vector::new2(0.6, 0.8);
        let mut e = init_ensemble(&d, &m, 1, InitialLaw::PointMass { x, v }, 1).unwrap();
        let mut hits = Vec::new();
        for k in 1..=101 {
            let t = e.particles[0].next_hit_time;
            simulate_to(&mut e, &d, &h, &s, t, &SimOptions::default()).unwrap();
            assert_eq!(e.particles[0].event_count, k);
            hits.push(e.particles[0].x);
        }
        let c = hits.last().unwrap().normalized().dot(&e.particles[0].v).abs();
        for w in hits.windows(2) {
            assert!(((w[1] - w[0]).norm() - 2.0 * c).abs() < 1e-9);
        }
    }

    #[test]
    fn point_mass_and_count() {
        let (d, m, h, s) = specular_disk();
        let x = Vector::new2(0.1, 0.0);
        let v = Vector::new2(0.0, 1.0);
        let mut e = init_ensemble(&d, &m, 50, InitialLaw::PointMass { x, v }, 2).unwrap();
        assert!(e.particles.iter().all(|p| *p == e.particles[0]));
        simulate_to(&mut e, &d, &h, &s, 25.0, &SimOptions::default()).unwrap();
        assert_eq!(e.len(), 50);
        assert!(simulate_to(&mut e, &d, &h, &s, 1.0, &SimOptions::default()).is_err());
    }

    #[test]
    fn uniform_start_fills_the_disk() {
        let d = Domain::unit_disk();
        let m = VelocityMeasure::lebesgue_annulus(2, 0.5, 1.0).unwrap();
        let e = init_ensemble(&d, &m, 4000, InitialLaw::Uniform, 9).unwrap();
        assert!(e.states().all(|(x, v)| d.contains(x) && (0.5..=1.0).contains(&v.norm())));
        let inner = e.states().filter(|(x, _)| x.norm() < 0.5).count() as f64 / 4000.0;
        assert!((inner - 0.25).abs() < 3.0 * (0.25f64 * 0.75 / 4000.0).sqrt());
    }

    #[test]
    fn streams_are_independent_of_thread_count() {
        let d = Domain::unit_disk();
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        let k = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let s = DiffuseSampler::new(&k).unwrap();
        let h = PartlyDiffuseBoundary::new(AlphaField::constant(0.5), ReflectionLaw::Specular, k).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut e = init_ensemble(&d, &m, 200, InitialLaw::Uniform, 11).unwrap();
                simulate_to(&mut e, &d, &h, &s, 10.0, &SimOptions::default()).unwrap();
                e
            })
        };
        assert_eq!(run(1), run(3));
    }
}
