//! Orthogonally invariant velocity measures `m(dv) = m0(drho) x sigma(domega) / |S^(d-1)|`.

pub mod quadrature;
mod sampling;

pub use sampling::{
    cosine_law_direction, uniform_direction, RadialTable, SamplerStats, VelocitySampler,
};

use crate::geometry::Vector;
use crate::{Error, Result};
use quadrature::gauss_legendre;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

/// Surface area `|S^(d-1)|` of the unit sphere in R^d.
pub fn sphere_area(d: usize) -> f64 {
    match d {
        0 => 0.0,
        1 => 2.0,
        2 => 2.0 * PI,
        _ => 2.0 * PI / (d as f64 - 2.0) * sphere_area(d - 2),
    }
}

/// `(1/|S^(d-1)|) int_{omega.n > 0} omega.n sigma(d omega)`.
pub fn half_cosine_moment(d: usize) -> f64 {
    sphere_area(d - 1) / ((d as f64 - 1.0) * sphere_area(d))
}

pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Radial part `m0` of the velocity measure.
#[derive(Clone)]
pub enum RadialPart {
    /// `w(rho) = |S^(d-1)| rho^(d-1)` on `[rho_min, rho_max]`: Lebesgue measure on a shell.
    Lebesgue { rho_min: f64, rho_max: f64 },
    /// A user density `w(rho)` on `[rho_min, rho_max]`.
    Density { rho_min: f64, rho_max: f64, w: RadialFn },
    /// Finitely many speeds `(rho_k, mass_k)`.
    Atoms(Vec<(f64, f64)>),
}

impl fmt::Debug for RadialPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialPart::Lebesgue { rho_min, rho_max } => write!(f, "Lebesgue[{rho_min}, {rho_max}]"),
            RadialPart::Density { rho_min, rho_max, .. } => write!(f, "Density[{rho_min}, {rho_max}]"),
            RadialPart::Atoms(a) => write!(f, "Atoms({a:?})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    Uniform,
    Log,
}

/// A speed interval of the radial grid with its own radial quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeedBin {
    pub lo: f64,
    pub hi: f64,
    /// `m0` mass of the bin.
    pub mass: f64,
    /// `m0`-weighted mean speed.
    pub mean: f64,
    /// Nodes `(rho, m0 weight)` inside the bin.
    pub nodes: Vec<(f64, f64)>,
}

impl SpeedBin {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().map(|&(r, w)| w * f(r)).sum()
    }

    pub fn contains(&self, rho: f64) -> bool {
        rho >= self.lo && rho <= self.hi
    }
}

/// Tensor quadrature: speeds carry `m0` weights, directions carry normalised sphere
/// weights summing to one.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityQuadrature {
    pub speeds: Vec<(f64, f64)>,
    pub directions: Vec<(Vector, f64)>,
}

impl VelocityQuadrature {
    /// Tensor cells `(velocity, weight)`.
    pub fn cells(&self) -> impl Iterator<Item = (Vector, f64)> + '_ {
        self.speeds
            .iter()
            .flat_map(move |&(r, w)| self.directions.iter().map(move |&(o, a)| (o * r, w * a)))
    }

    pub fn total_weight(&self) -> f64 {
        self.cells().map(|c| c.1).sum()
    }
}

/// Direction nodes with normalised weights: uniform angles in d = 2, Gauss-Legendre
/// in `cos theta` times uniform azimuth in d = 3.
pub fn direction_quadrature(d: usize, n: usize) -> Vec<(Vector, f64)> {
    match d {
        2 => (0..n)
            .map(|k| (Vector::polar(std::f64::consts::TAU * (k as f64 + 0.5) / n as f64), 1.0 / n as f64))
            .collect(),
        3 => {
            let polar = gauss_legendre(n.div_ceil(2).max(1), -1.0, 1.0);
            let mut out = Vec::with_capacity(polar.len() * n);
            for &(z, w) in &polar {
                for j in 0..n {
                    let phi = std::f64::consts::TAU * (j as f64 + 0.5) / n as f64;
                    out.push((Vector::spherical(z, phi), 0.5 * w / n as f64));
                }
            }
            out
        }
        _ => panic!("direction quadrature only for d = 2, 3"),
    }
}

/// An orthogonally invariant velocity measure in dimension 2 or 3.
#[derive(Clone, Debug)]
pub struct VelocityMeasure {
    dim: usize,
    radial: RadialPart,
}

impl VelocityMeasure {
    pub fn new(dim: usize, radial: RadialPart) -> Result<Self> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParameter(format!("dimension {dim} not in {{2, 3}}")));
        }
        match &radial {
            RadialPart::Lebesgue { rho_min, rho_max } | RadialPart::Density { rho_min, rho_max, .. } => {
                if !(*rho_min >= 0.0 && rho_max > rho_min && rho_max.is_finite()) {
                    return Err(Error::InvalidParameter("need 0 <= rho_min < rho_max < inf".into()));
                }
            }
            RadialPart::Atoms(a) => {
                if a.is_empty() || a.iter().any(|&(r, m)| !(r > 0.0 && m > 0.0)) {
                    return Err(Error::InvalidParameter("atoms need positive speeds and masses".into()));
                }
            }
        }
        Ok(VelocityMeasure { dim, radial })
    }

    pub fn lebesgue_annulus(dim: usize, rho_min: f64, rho_max: f64) -> Result<Self> {
        Self::new(dim, RadialPart::Lebesgue { rho_min, rho_max })
    }

    pub fn single_speed(dim: usize, rho: f64, mass: f64) -> Result<Self> {
        Self::new(dim, RadialPart::Atoms(vec![(rho, mass)]))
    }

    pub fn multigroup(dim: usize, groups: Vec<(f64, f64)>) -> Result<Self> {
        let mut g = groups;
        g.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self::new(dim, RadialPart::Atoms(g))
    }

    /// The restriction to `|v| >= floor`.
    pub fn with_speed_floor(&self, floor: f64) -> Result<Self> {
        let radial = match &self.radial {
            RadialPart::Lebesgue { rho_min, rho_max } => {
                RadialPart::Lebesgue { rho_min: rho_min.max(floor), rho_max: *rho_max }
            }
            RadialPart::Density { rho_min, rho_max, w } => {
                RadialPart::Density { rho_min: rho_min.max(floor), rho_max: *rho_max, w: w.clone() }
            }
            RadialPart::Atoms(a) => RadialPart::Atoms(a.iter().filter(|p| p.0 >= floor).copied().collect()),
        };
        Self::new(self.dim, radial)
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    pub fn radial(&self) -> &RadialPart {
        &self.radial
    }

    pub fn is_atomic(&self) -> bool {
        matches!(self.radial, RadialPart::Atoms(_))
    }

    /// Smallest and largest speed of the support.
    pub fn speed_range(&self) -> (f64, f64) {
        match &self.radial {
            RadialPart::Lebesgue { rho_min, rho_max } | RadialPart::Density { rho_min, rho_max, .. } => {
                (*rho_min, *rho_max)
            }
            RadialPart::Atoms(a) => (a[0].0, a[a.len() - 1].0),
        }
    }

    /// Radial density `w(rho)`; zero for atomic measures.
    pub fn radial_density(&self, rho: f64) -> f64 {
        match &self.radial {
            RadialPart::Lebesgue { rho_min, rho_max } => {
                if rho >= *rho_min && rho <= *rho_max {
                    sphere_area(self.dim) * rho.powi(self.dim as i32 - 1)
                } else {
                    0.0
                }
            }
            RadialPart::Density { rho_min, rho_max, w } => {
                if rho >= *rho_min && rho <= *rho_max {
                    w(rho)
                } else {
                    0.0
                }
            }
            RadialPart::Atoms(_) => 0.0,
        }
    }

    /// Radial nodes `(rho, m0 weight)` on `[lo, hi]` intersected with the support,
    /// `order` Gauss-Legendre points per decade.
    pub fn radial_nodes(&self, lo: f64, hi: f64, order: usize) -> Vec<(f64, f64)> {
        match &self.radial {
            RadialPart::Atoms(a) => a.iter().filter(|p| p.0 >= lo && p.0 <= hi).copied().collect(),
            _ => {
                let (a, b) = self.speed_range();
                let (lo, hi) = (lo.max(a), hi.min(b));
                if !(hi > lo) {
                    return Vec::new();
                }
                let mut out = Vec::new();
                for (p, q) in radial_panels(lo, hi) {
                    for (r, w) in gauss_legendre(order, p, q) {
                        out.push((r, w * self.radial_density(r)));
                    }
                }
                out
            }
        }
    }

    /// `int_[lo,hi] f(rho) m0(drho)` with 64 Gauss-Legendre points per decade.
    pub fn integrate_radial(&self, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
        self.radial_nodes(lo, hi, 64).iter().map(|&(r, w)| w * f(r)).sum()
    }

    /// Total mass `m(V)`.
    pub fn total_mass(&self) -> f64 {
        match &self.radial {
            RadialPart::Atoms(a) => a.iter().map(|p| p.1).sum(),
            RadialPart::Lebesgue { rho_min, rho_max } => {
                let d = self.dim as i32;
                sphere_area(self.dim) * (rho_max.powi(d) - rho_min.powi(d)) / d as f64
            }
            _ => self.integrate_radial(|_| 1.0, 0.0, f64::INFINITY),
        }
    }

    /// `int |v| m(dv)`.
    pub fn first_moment(&self) -> f64 {
        self.integrate_radial(|r| r, 0.0, f64::INFINITY)
    }

    /// Quadrature with `order` radial points per decade and `n_dir` direction nodes.
    pub fn quadrature(&self, order: usize, n_dir: usize) -> VelocityQuadrature {
        VelocityQuadrature {
            speeds: self.radial_nodes(0.0, f64::INFINITY, order),
            directions: direction_quadrature(self.dim, n_dir),
        }
    }

    /// `int psi dm` through the polar decomposition.
    pub fn integrate(&self, quad: &VelocityQuadrature, psi: impl Fn(Vector) -> f64) -> f64 {
        quad.cells().map(|(v, w)| w * psi(v)).sum()
    }

    /// Splits the support into `n` speed bins (atoms: one bin per atom).
    pub fn speed_bins(&self, n: usize, spacing: Spacing, order: usize) -> Vec<SpeedBin> {
        match &self.radial {
            RadialPart::Atoms(a) => a
                .iter()
                .map(|&(r, m)| SpeedBin { lo: r, hi: r, mass: m, mean: r, nodes: vec![(r, m)] })
                .collect(),
            _ => {
                let (a, b) = self.speed_range();
                let edges: Vec<f64> = match spacing {
                    Spacing::Log if a > 0.0 => (0..=n).map(|k| a * (b / a).powf(k as f64 / n as f64)).collect(),
                    _ => (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect(),
                };
                edges
                    .windows(2)
                    .map(|e| {
                        let nodes = self.radial_nodes(e[0], e[1], order);
                        let mass: f64 = nodes.iter().map(|p| p.1).sum();
                        let mean = nodes.iter().map(|p| p.0 * p.1).sum::<f64>() / mass;
                        SpeedBin { lo: e[0], hi: e[1], mass, mean, nodes }
                    })
                    .collect()
            }
        }
    }

    /// `mu_x` weight `int_cell |v.n| m(dv)` of a tensor cell given by a speed bin and
    /// normalised direction nodes.
    pub fn mu_weight(&self, n: Vector, bin: &SpeedBin, directions: &[(Vector, f64)]) -> f64 {
        let radial = bin.integrate(|r| r);
        radial * directions.iter().map(|(o, a)| a * o.dot(&n).abs()).sum::<f64>()
    }

    /// Total `mu_x` mass of the half space `Gamma_-(x)` (equal to that of `Gamma_+(x)`).
    pub fn half_space_mu_mass(&self) -> f64 {
        self.first_moment() * half_cosine_moment(self.dim)
    }
}

fn radial_panels(lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut a = lo;
    if a == 0.0 {
        a = hi * 1e-8;
        out.push((0.0, a));
    }
    let decades = (hi / a).log10().ceil().max(1.0) as usize;
    let r = (hi / a).powf(1.0 / decades as f64);
    for k in 0..decades {
        let p = a * r.powi(k as i32);
        let q = if k + 1 == decades { hi } else { a * r.powi(k as i32 + 1) };
        out.push((p, q));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-15);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((half_cosine_moment(2) - 1.0 / PI).abs() < 1e-15);
        assert!((half_cosine_moment(3) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lebesgue_disk_integrals() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.0, 1.0).unwrap();
        let q = m.quadrature(64, 16);
        assert!((m.integrate(&q, |_| 1.0) - PI).abs() < 1e-8);
        assert!((m.integrate(&q, |v| v.norm()) - 2.0 * PI / 3.0).abs() < 1e-8);
        assert!((q.total_weight() - m.total_mass()).abs() < 1e-10 * PI);
    }

    #[test]
    fn single_speed_second_moment_in_three_dimensions() {
        let m = VelocityMeasure::single_speed(3, 1.0, 2.5).unwrap();
        let q = m.quadrature(8, 8);
        assert!((m.integrate(&q, |v| v.x() * v.x()) - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn mu_weights() {
        let m = VelocityMeasure::single_speed(2, 1.0, 3.0).unwrap();
        let bins = m.speed_bins(4, Spacing::Uniform, 8);
        let n = Vector::new2(1.0, 0.0);
        let grazing = [(Vector::new2(0.0, 1.0), 0.5)];
        assert_eq!(m.mu_weight(n, &bins[0], &grazing), 0.0);
        let dirs = direction_quadrature(2, 4096);
        let incoming: Vec<_> = dirs.iter().copied().filter(|(o, _)| o.dot(&n) < 0.0).collect();
        let total = m.mu_weight(n, &bins[0], &incoming);
        assert!((total - 3.0 / PI).abs() < 1e-6);
        assert!((m.half_space_mu_mass() - 3.0 / PI).abs() < 1e-14);
        let fast = VelocityMeasure::single_speed(2, 2.0, 3.0).unwrap();
        let fb = fast.speed_bins(1, Spacing::Uniform, 8);
        assert!((fast.mu_weight(n, &fb[0], &incoming) - 2.0 * total).abs() < 1e-14);
    }

    #[test]
    fn speed_bins_cover_the_mass() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        for sp in [Spacing::Uniform, Spacing::Log] {
            let bins = m.speed_bins(16, sp, 16);
            let s: f64 = bins.iter().map(|b| b.mass).sum();
            assert!((s - m.total_mass()).abs() < 1e-10 * s);
            assert!(bins.iter().all(|b| b.mean > b.lo && b.mean < b.hi));
        }
    }
}
