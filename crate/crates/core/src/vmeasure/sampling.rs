use super::{direction_quadrature, RadialPart, VelocityMeasure};
use crate::geometry::Vector;
use crate::{Error, Result};
use rand::Rng;
use std::f64::consts::TAU;

/// Uniform direction on the unit sphere.
pub fn uniform_direction<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vector {
    if d == 2 {
        Vector::polar(TAU * rng.random::<f64>())
    } else {
        Vector::spherical(2.0 * rng.random::<f64>() - 1.0, TAU * rng.random::<f64>())
    }
}

/// Direction with density proportional to `omega.axis` on `{omega.axis > 0}`.
pub fn cosine_law_direction<R: Rng + ?Sized>(axis: Vector, d: usize, rng: &mut R) -> Vector {
    let u: f64 = rng.random();
    if d == 2 {
        let s = 2.0 * u - 1.0;
        let c = (1.0 - s * s).max(0.0).sqrt();
        let t = Vector::new2(-axis.y(), axis.x());
        axis * c + t * s
    } else {
        let c = u.sqrt();
        let s = (1.0 - u).max(0.0).sqrt();
        let phi = TAU * rng.random::<f64>();
        let t = crate::geometry::tangent_frame_3(axis);
        axis * c + t.0 * (s * phi.cos()) + t.1 * (s * phi.sin())
    }
}

/// Piecewise-uniform inverse CDF of a radial law.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialTable {
    edges: Vec<f64>,
    cum: Vec<f64>,
    atoms: bool,
}

impl RadialTable {
    /// Law `weight(rho) m0(drho)` on `[lo, hi]`, tabulated on `cells` cells.
    pub fn from_measure(
        measure: &VelocityMeasure,
        lo: f64,
        hi: f64,
        cells: usize,
        weight: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if let RadialPart::Atoms(a) = measure.radial() {
            let pts: Vec<(f64, f64)> = a
                .iter()
                .filter(|p| p.0 >= lo && p.0 <= hi)
                .map(|&(r, m)| (r, m * weight(r)))
                .collect();
            let mut cum = vec![0.0];
            for p in &pts {
                cum.push(cum.last().unwrap() + p.1);
            }
            let t = RadialTable { edges: pts.iter().map(|p| p.0).collect(), cum, atoms: true };
            return t.checked();
        }
        let (a, b) = measure.speed_range();
        let (lo, hi) = (lo.max(a), hi.min(b));
        let edges = log_or_uniform_edges(lo, hi, cells);
        let mut cum = vec![0.0];
        for e in edges.windows(2) {
            let m: f64 = measure.radial_nodes(e[0], e[1], 8).iter().map(|&(r, w)| w * weight(r)).sum();
            cum.push(cum.last().unwrap() + m);
        }
        RadialTable { edges, cum, atoms: false }.checked()
    }

    /// Law with density `f(rho) drho` on the given cell edges.
    pub fn from_density(edges: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let rule = super::quadrature::gauss_legendre(8, 0.0, 1.0);
        let mut cum = vec![0.0];
        for e in edges.windows(2) {
            let h = e[1] - e[0];
            let m: f64 = rule.iter().map(|&(s, w)| w * h * f(e[0] + s * h)).sum();
            cum.push(cum.last().unwrap() + m);
        }
        RadialTable { edges, cum, atoms: false }.checked()
    }

    fn checked(self) -> Result<Self> {
        let t = *self.cum.last().unwrap_or(&0.0);
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::ZeroMass);
        }
        Ok(self)
    }

    pub fn total(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Inverse CDF at `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> f64 {
        let target = u * self.total();
        let k = self.cum.partition_point(|&c| c <= target).clamp(1, self.cum.len() - 1) - 1;
        if self.atoms {
            return self.edges[k];
        }
        let (c0, c1) = (self.cum[k], self.cum[k + 1]);
        let s = if c1 > c0 { ((target - c0) / (c1 - c0)).clamp(0.0, 1.0) } else { 0.5 };
        self.edges[k] + s * (self.edges[k + 1] - self.edges[k])
    }

    /// Tabulated CDF at `rho`.
    pub fn cdf(&self, rho: f64) -> f64 {
        if self.atoms {
            let k = self.edges.partition_point(|&e| e <= rho);
            return self.cum[k] / self.total();
        }
        if rho <= self.edges[0] {
            return 0.0;
        }
        let k = self.edges.partition_point(|&e| e <= rho);
        if k >= self.edges.len() {
            return 1.0;
        }
        let s = (rho - self.edges[k - 1]) / (self.edges[k] - self.edges[k - 1]);
        (self.cum[k - 1] + s * (self.cum[k] - self.cum[k - 1])) / self.total()
    }
}

pub(crate) fn log_or_uniform_edges(lo: f64, hi: f64, cells: usize) -> Vec<f64> {
    if lo > 0.0 && hi / lo > 4.0 {
        (0..=cells).map(|k| lo * (hi / lo).powf(k as f64 / cells as f64)).collect()
    } else {
        (0..=cells).map(|k| lo + (hi - lo) * k as f64 / cells as f64).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SamplerStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Proposals where the envelope was exceeded by the target.
    pub violations: u64,
}

impl SamplerStats {
    pub fn acceptance(&self) -> f64 {
        self.accepted as f64 / self.proposals.max(1) as f64
    }
}

#[derive(Clone, Debug)]
struct EnvelopeCell {
    lo: f64,
    hi: f64,
    atom: bool,
    radial_max: f64,
    g_max: f64,
}

/// Rejection sampler for the law `g(v) m(dv) / int g dm`.
pub struct VelocitySampler<G> {
    measure: VelocityMeasure,
    g: G,
    cells: Vec<EnvelopeCell>,
    cum: Vec<f64>,
    normalization: f64,
    max_attempts: usize,
}

impl<G: Fn(Vector) -> f64> VelocitySampler<G> {
    pub fn new(measure: &VelocityMeasure, g: G, cells: usize) -> Result<Self> {
        let d = measure.dimension();
        let probe_dirs = direction_quadrature(d, 64);
        let quad = measure.quadrature(64, if d == 2 { 512 } else { 64 });
        let normalization = measure.integrate(&quad, &g);
        if !(normalization > 0.0 && normalization.is_finite()) {
            return Err(Error::ZeroMass);
        }
        let ranges: Vec<(f64, f64, bool)> = match measure.radial() {
            RadialPart::Atoms(a) => a.iter().map(|p| (p.0, p.0, true)).collect(),
            _ => {
                let (a, b) = measure.speed_range();
                log_or_uniform_edges(a, b, cells).windows(2).map(|e| (e[0], e[1], false)).collect()
            }
        };
        let mut out = Vec::new();
        let mut cum = vec![0.0];
        for (lo, hi, atom) in ranges {
            let probes: Vec<f64> = if atom { vec![lo] } else { (0..5).map(|k| lo + (hi - lo) * k as f64 / 4.0).collect() };
            let mut g_max: f64 = 0.0;
            for &r in &probes {
                for (o, _) in &probe_dirs {
                    g_max = g_max.max(g(*o * r));
                }
            }
            g_max *= 1.25;
            let (mass, radial_max) = if atom {
                let m = match measure.radial() {
                    RadialPart::Atoms(a) => a.iter().find(|p| p.0 == lo).map(|p| p.1).unwrap_or(0.0),
                    _ => 0.0,
                };
                (m, 1.0)
            } else {
                let m: f64 = measure.radial_nodes(lo, hi, 8).iter().map(|p| p.1).sum();
                let wm = probes.iter().map(|&r| measure.radial_density(r)).fold(0.0, f64::max) * 1.25;
                (m, wm)
            };
            cum.push(cum.last().unwrap() + mass * g_max);
            out.push(EnvelopeCell { lo, hi, atom, radial_max, g_max });
        }
        Ok(VelocitySampler { measure: measure.clone(), g, cells: out, cum, normalization, max_attempts: 100_000 })
    }

    /// `int g dm` by quadrature.
    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    /// Mass of the dominating envelope; `acceptance * envelope_mass` estimates the normalisation.
    pub fn envelope_mass(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, stats: &mut SamplerStats) -> Result<Vector> {
        let d = self.measure.dimension();
        let lebesgue = matches!(self.measure.radial(), RadialPart::Lebesgue { .. });
        for _ in 0..self.max_attempts {
            stats.proposals += 1;
            let t = rng.random::<f64>() * self.envelope_mass();
            let k = self.cum.partition_point(|&c| c <= t).clamp(1, self.cum.len() - 1) - 1;
            let c = &self.cells[k];
            let u: f64 = rng.random();
            let (rho, radial_ok) = if c.atom {
                (c.lo, 1.0)
            } else if lebesgue {
                let p = d as i32;
                ((c.lo.powi(p) + u * (c.hi.powi(p) - c.lo.powi(p))).powf(1.0 / p as f64), 1.0)
            } else {
                let r = c.lo + u * (c.hi - c.lo);
                let ratio = self.measure.radial_density(r) / c.radial_max;
                (r, ratio)
            };
            let v = uniform_direction(d, rng) * rho;
            let ratio = radial_ok * (self.g)(v) / c.g_max;
            if ratio > 1.0 || radial_ok > 1.0 {
                stats.violations += 1;
            }
            if rng.random::<f64>() < ratio {
                stats.accepted += 1;
                return Ok(v);
            }
        }
        Err(Error::SamplerFailure { attempts: self.max_attempts })
    }
}
