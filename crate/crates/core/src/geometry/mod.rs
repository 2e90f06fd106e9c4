//! Exact ray/boundary geometry of smooth bounded domains in R^2 and R^3.

mod chart;
mod gradients;
mod vector;

pub use chart::{BoundaryChart, Curve};
pub use gradients::{
    degenerate_direction_measure, det_rank_one_update, fd_grad_tau_omega, fd_grad_tau_x,
    grad_tau_omega, grad_tau_x, polar_jacobian, project_to_boundary, DegenerateEstimate,
    GRAD_OMEGA_SIGN,
};
pub use vector::Vector;

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Radial Fourier description of a planar star-shaped domain:
/// `r(t) = r0 + sum_k cos[k] cos((k+1)t) + sin[k] sin((k+1)t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarShape {
    pub r0: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl StarShape {
    pub fn radius(&self, t: f64) -> f64 {
        let mut r = self.r0;
        for (k, c) in self.cos.iter().enumerate() {
            r += c * ((k + 1) as f64 * t).cos();
        }
        for (k, s) in self.sin.iter().enumerate() {
            r += s * ((k + 1) as f64 * t).sin();
        }
        r
    }

    pub fn radius_derivative(&self, t: f64) -> f64 {
        let mut r = 0.0;
        for (k, c) in self.cos.iter().enumerate() {
            let f = (k + 1) as f64;
            r -= f * c * (f * t).sin();
        }
        for (k, s) in self.sin.iter().enumerate() {
            let f = (k + 1) as f64;
            r += f * s * (f * t).cos();
        }
        r
    }

    fn amplitude(&self) -> f64 {
        self.cos.iter().chain(self.sin.iter()).map(|c| c.abs()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DomainKind {
    Disk { radius: f64 },
    Ball { radius: f64 },
    Ellipse { a: f64, b: f64 },
    Annulus { inner: f64, outer: f64 },
    Star(StarShape),
}

/// Numerical tolerances of the geometry layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryTolerances {
    /// Boundary membership `|phi| <= boundary * D`.
    pub boundary: f64,
    /// Grazing threshold on the cosine `|v.n|/|v|`.
    pub graze: f64,
    /// Minimal admissible level-function gradient norm.
    pub gradient: f64,
    /// Bracketing steps per diameter.
    pub bracket_steps: usize,
}

impl Default for GeometryTolerances {
    fn default() -> Self {
        GeometryTolerances {
            boundary: 1e-12,
            graze: 1e-9,
            gradient: 1e-10,
            bracket_steps: 256,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Incoming,
    Outgoing,
    Grazing,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhasePoint {
    pub x: Vector,
    pub v: Vector,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub x: Vector,
    pub v: Vector,
    pub side: Side,
}

/// A bounded domain `{phi < 0}` with an analytic level function.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    kind: DomainKind,
    dim: usize,
    diameter: f64,
    tol: GeometryTolerances,
}

impl Domain {
    pub fn new(kind: DomainKind) -> Result<Self> {
        Self::with_tolerances(kind, GeometryTolerances::default())
    }

    pub fn with_tolerances(kind: DomainKind, tol: GeometryTolerances) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        let (dim, diameter) = match &kind {
            DomainKind::Disk { radius } | DomainKind::Ball { radius } => {
                if !(*radius > 0.0) {
                    return bad("radius must be positive");
                }
                let d = if matches!(kind, DomainKind::Disk { .. }) { 2 } else { 3 };
                (d, 2.0 * radius)
            }
            DomainKind::Ellipse { a, b } => {
                if !(*a > 0.0 && *b > 0.0) {
                    return bad("semi-axes must be positive");
                }
                (2, 2.0 * a.max(*b))
            }
            DomainKind::Annulus { inner, outer } => {
                if !(*inner > 0.0 && outer > inner) {
                    return bad("annulus needs 0 < inner < outer");
                }
                (2, 2.0 * outer)
            }
            DomainKind::Star(s) => {
                let amp = s.amplitude();
                if !(s.r0 > 0.0) || amp >= s.r0 {
                    return bad("star shape needs r0 > sum of |coefficients|");
                }
                (2, 2.0 * (s.r0 + amp))
            }
        };
        if !(tol.graze > 0.0 && tol.boundary > 0.0 && tol.bracket_steps >= 8) {
            return bad("geometry tolerances must be positive");
        }
        Ok(Domain { kind, dim, diameter, tol })
    }

    pub fn unit_disk() -> Self {
        Domain::new(DomainKind::Disk { radius: 1.0 }).expect("unit disk")
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dim
    }

    /// Upper bound `D` on the diameter.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn tolerances(&self) -> &GeometryTolerances {
        &self.tol
    }

    pub fn tol_boundary(&self) -> f64 {
        self.tol.boundary * self.diameter
    }

    pub fn level(&self, x: Vector) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius: r } | DomainKind::Ball { radius: r } => (x.norm2() - r * r) / (2.0 * r),
            DomainKind::Ellipse { a, b } => {
                0.5 * a.min(*b) * (x.x() * x.x() / (a * a) + x.y() * x.y() / (b * b) - 1.0)
            }
            DomainKind::Annulus { inner, outer } => {
                let s = x.norm();
                (s - inner) * (s - outer) / (outer - inner)
            }
            DomainKind::Star(st) => x.norm() - st.radius(x.angle()),
        }
    }

    pub fn level_gradient(&self, x: Vector) -> Vector {
        match &self.kind {
            DomainKind::Disk { radius: r } | DomainKind::Ball { radius: r } => x / *r,
            DomainKind::Ellipse { a, b } => {
                let m = a.min(*b);
                Vector::new2(m * x.x() / (a * a), m * x.y() / (b * b))
            }
            DomainKind::Annulus { inner, outer } => {
                let s = x.norm();
                if s == 0.0 {
                    return Vector::ZERO;
                }
                x * ((2.0 * s - inner - outer) / ((outer - inner) * s))
            }
            DomainKind::Star(st) => {
                let s2 = x.norm2();
                if s2 == 0.0 {
                    return Vector::ZERO;
                }
                let s = s2.sqrt();
                let dr = st.radius_derivative(x.angle());
                x / s - Vector::new2(-x.y(), x.x()) * (dr / s2)
            }
        }
    }

    pub fn contains(&self, x: Vector) -> bool {
        self.level(x) < 0.0
    }

    /// Outward unit normal at a boundary point.
    pub fn normal(&self, x: Vector) -> Result<Vector> {
        let g = self.level_gradient(x);
        let n = g.norm();
        if !(n >= self.tol.gradient) {
            return Err(Error::DegenerateGradient { x: x.0, norm: n });
        }
        Ok(g / n)
    }

    /// Classification of `(x, v)` by the sign of `v.n(x)` with the grazing threshold.
    pub fn classify(&self, x: Vector, v: Vector) -> Result<Side> {
        let n = self.normal(x)?;
        Ok(side_of(v.dot(&n), v.norm(), self.tol.graze))
    }

    pub fn boundary_point(&self, x: Vector, v: Vector) -> Result<BoundaryPoint> {
        Ok(BoundaryPoint { x, v, side: self.classify(x, v)? })
    }

    /// Lebesgue measure of the domain.
    pub fn volume(&self) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius } => PI * radius * radius,
            DomainKind::Ball { radius } => 4.0 / 3.0 * PI * radius.powi(3),
            DomainKind::Ellipse { a, b } => PI * a * b,
            DomainKind::Annulus { inner, outer } => PI * (outer * outer - inner * inner),
            DomainKind::Star(st) => {
                let n = 1024;
                (0..n)
                    .map(|k| {
                        let r = st.radius(TAU * k as f64 / n as f64);
                        0.5 * r * r
                    })
                    .sum::<f64>()
                    * TAU
                    / n as f64
            }
        }
    }

    /// Axis-aligned bounding box `(lo, hi)`.
    pub fn bounds(&self) -> (Vector, Vector) {
        let h = match &self.kind {
            DomainKind::Disk { radius } => Vector::new2(*radius, *radius),
            DomainKind::Ball { radius } => Vector::new3(*radius, *radius, *radius),
            DomainKind::Ellipse { a, b } => Vector::new2(*a, *b),
            DomainKind::Annulus { outer, .. } => Vector::new2(*outer, *outer),
            DomainKind::Star(st) => {
                let r = st.r0 + st.amplitude();
                Vector::new2(r, r)
            }
        };
        (-h, h)
    }

    /// Boundary parametrisations, one per connected component.
    pub fn charts(&self) -> Vec<BoundaryChart> {
        match &self.kind {
            DomainKind::Disk { radius } => vec![BoundaryChart::Curve(Curve::circle(*radius, false))],
            DomainKind::Ball { radius } => vec![BoundaryChart::Sphere { radius: *radius }],
            DomainKind::Ellipse { a, b } => vec![BoundaryChart::Curve(Curve::ellipse(*a, *b))],
            DomainKind::Annulus { inner, outer } => vec![
                BoundaryChart::Curve(Curve::circle(*outer, false)),
                BoundaryChart::Curve(Curve::circle(*inner, true)),
            ],
            DomainKind::Star(st) => vec![BoundaryChart::Curve(Curve::star(st.clone()))],
        }
    }

    /// Index of the boundary component nearest to a boundary point.
    pub fn component_of(&self, x: Vector) -> usize {
        match &self.kind {
            DomainKind::Annulus { inner, outer } => {
                let s = x.norm();
                usize::from((s - inner).abs() < (s - outer).abs())
            }
            _ => 0,
        }
    }

    /// Orthonormal basis of the tangent space at a boundary point.
    pub fn tangent_frame(&self, x: Vector) -> Result<Vec<Vector>> {
        let n = self.normal(x)?;
        Ok(tangent_frame_of(n, self.dim))
    }

    /// Euclidean distance from an interior point to the boundary.
    pub fn distance_to_boundary(&self, x: Vector) -> f64 {
        match &self.kind {
            DomainKind::Disk { radius } | DomainKind::Ball { radius } => radius - x.norm(),
            DomainKind::Annulus { inner, outer } => {
                let s = x.norm();
                (s - inner).min(outer - s)
            }
            _ => self.distance_by_rays(x),
        }
    }

    fn distance_by_rays(&self, x: Vector) -> f64 {
        let exit = |a: f64| self.exit_time(x, Vector::polar(a), Direction::Forward).unwrap_or(0.0);
        let n = 64;
        let h = TAU / n as f64;
        let (mut best_a, mut best) = (0.0, f64::INFINITY);
        for k in 0..n {
            let a = k as f64 * h;
            let t = exit(a);
            if t < best {
                best = t;
                best_a = a;
            }
        }
        let (mut lo, mut hi) = (best_a - h, best_a + h);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let a1 = hi - g * (hi - lo);
            let a2 = lo + g * (hi - lo);
            if exit(a1) < exit(a2) {
                hi = a2;
            } else {
                lo = a1;
            }
        }
        best.min(exit(0.5 * (lo + hi)))
    }

    /// `t_+` (forward) or `t_-` (backward) exit time of `(x, v)`.
    pub fn exit_time(&self, x: Vector, v: Vector, dir: Direction) -> Result<f64> {
        let v = match dir {
            Direction::Forward => v,
            Direction::Backward => -v,
        };
        if v.norm2() == 0.0 {
            return Err(Error::ZeroVelocity);
        }
        match &self.kind {
            DomainKind::Disk { radius } | DomainKind::Ball { radius } => {
                Ok(circle_exit(x, v, *radius))
            }
            DomainKind::Ellipse { a, b } => {
                let xs = Vector::new2(x.x() / a, x.y() / b);
                let vs = Vector::new2(v.x() / a, v.y() / b);
                Ok(circle_exit(xs, vs, 1.0))
            }
            DomainKind::Annulus { inner, outer } => {
                let t_out = circle_exit(x, v, *outer);
                Ok(match circle_entry(x, v, *inner, self.tol.boundary * self.diameter) {
                    Some(t) => t.min(t_out),
                    None => t_out,
                })
            }
            DomainKind::Star(_) => self.exit_time_bracketed(x, v, Direction::Forward),
        }
    }

    /// Exit time by sampling the level function along the ray and refining the first
    /// sign change; valid for every domain kind.
    pub fn exit_time_bracketed(&self, x: Vector, v: Vector, dir: Direction) -> Result<f64> {
        let v = match dir {
            Direction::Forward => v,
            Direction::Backward => -v,
        };
        let speed = v.norm();
        if speed == 0.0 {
            return Err(Error::ZeroVelocity);
        }
        let f = |t: f64| self.level(x + v * t);
        let tol = self.tol_boundary();
        let f0 = f(0.0);
        if f0.abs() <= tol && self.level_gradient(x).dot(&v) > 0.0 {
            return Ok(0.0);
        }
        let h = self.diameter / (self.tol.bracket_steps as f64 * speed);
        let t_max = 1.05 * self.diameter / speed + h;
        let mut ta = 0.0;
        let mut tb = None;
        let mut t = h * 2f64.powi(-24);
        while t < t_max {
            if f(t) > 0.0 {
                tb = Some(t);
                break;
            }
            ta = t;
            t = if t < h { 2.0 * t } else { t + h };
        }
        let Some(mut tb) = tb else {
            return Err(Error::NoExit { x: x.0 });
        };
        let mut t = 0.5 * (ta + tb);
        for _ in 0..200 {
            let ft = f(t);
            if ft.abs() <= 0.25 * tol {
                break;
            }
            if ft > 0.0 {
                tb = t;
            } else {
                ta = t;
            }
            let d = self.level_gradient(x + v * t).dot(&v);
            let newton = if d != 0.0 { t - ft / d } else { f64::NAN };
            t = if newton > ta && newton < tb { newton } else { 0.5 * (ta + tb) };
            if tb - ta <= f64::EPSILON * tb {
                break;
            }
        }
        Ok(t)
    }

    /// `xi(x, v) = (x - tau_-(x, v) v, v)` for an outgoing boundary point.
    pub fn ballistic_flow(&self, b: &BoundaryPoint) -> Result<BoundaryPoint> {
        if b.side != Side::Outgoing {
            return Err(Error::NotOutgoing);
        }
        let t = self.exit_time(b.x, b.v, Direction::Backward)?;
        let z = b.x - b.v * t;
        let side = self.classify(z, b.v)?;
        let out = BoundaryPoint { x: z, v: b.v, side };
        if side == Side::Grazing {
            let n = self.normal(z)?;
            return Err(Error::GrazingEndpoint { cosine: (n.dot(&b.v) / b.v.norm()).abs() });
        }
        Ok(out)
    }

    /// `xi^{-1}(x, v) = (x + tau_+(x, v) v, v)` for an incoming boundary point.
    pub fn ballistic_flow_inv(&self, b: &BoundaryPoint) -> Result<BoundaryPoint> {
        if b.side != Side::Incoming {
            return Err(Error::InvalidParameter("ballistic_flow_inv needs an incoming point".into()));
        }
        let t = self.exit_time(b.x, b.v, Direction::Forward)?;
        let z = b.x + b.v * t;
        let side = self.classify(z, b.v)?;
        if side == Side::Grazing {
            let n = self.normal(z)?;
            return Err(Error::GrazingEndpoint { cosine: (n.dot(&b.v) / b.v.norm()).abs() });
        }
        Ok(BoundaryPoint { x: z, v: b.v, side })
    }
}

pub(crate) fn side_of(vn: f64, speed: f64, graze: f64) -> Side {
    if vn > graze * speed {
        Side::Outgoing
    } else if vn < -graze * speed {
        Side::Incoming
    } else {
        Side::Grazing
    }
}

pub(crate) fn tangent_frame_of(n: Vector, dim: usize) -> Vec<Vector> {
    if dim == 2 {
        return vec![Vector::new2(-n.y(), n.x())];
    }
    let (t1, t2) = tangent_frame_3(n);
    vec![t1, t2]
}

/// Orthonormal pair completing a unit vector in R^3 to a right-handed basis.
pub fn tangent_frame_3(n: Vector) -> (Vector, Vector) {
    let axis = {
        let a = n.0.map(f64::abs);
        if a[0] <= a[1] && a[0] <= a[2] {
            Vector::new3(1.0, 0.0, 0.0)
        } else if a[1] <= a[2] {
            Vector::new3(0.0, 1.0, 0.0)
        } else {
            Vector::new3(0.0, 0.0, 1.0)
        }
    };
    let t1 = (axis - n * axis.dot(&n)).normalized();
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Larger root of `|x + t v| = r`, clamped at zero.
fn circle_exit(x: Vector, v: Vector, r: f64) -> f64 {
    let a = v.norm2();
    let b = x.dot(&v);
    let c = x.norm2() - r * r;
    let disc = (b * b - a * c).max(0.0);
    let t = if b < 0.0 { (-b + disc.sqrt()) / a } else { -c / (b + disc.sqrt()) };
    if t.is_finite() {
        t.max(0.0)
    } else {
        0.0
    }
}

/// Entry time of the ray into the disk of radius `r`, if it enters going forward.
fn circle_entry(x: Vector, v: Vector, r: f64, slack: f64) -> Option<f64> {
    let a = v.norm2();
    let b = x.dot(&v);
    if b >= 0.0 {
        return None;
    }
    let c = x.norm2() - r * r;
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let t = c / (-b + disc.sqrt());
    if t >= -slack / a.sqrt() {
        Some(t.max(0.0))
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ellipse() -> Domain {
        Domain::new(DomainKind::Ellipse { a: 2.0, b: 1.0 }).unwrap()
    }

    fn annulus() -> Domain {
        Domain::new(DomainKind::Annulus { inner: 0.5, outer: 1.0 }).unwrap()
    }

    #[test]
    fn normals_on_axis_points() {
        let n = Domain::unit_disk().normal(Vector::new2(1.0, 0.0)).unwrap();
        assert!((n - Vector::new2(1.0, 0.0)).norm() < 1e-15);
        let n = annulus().normal(Vector::new2(0.5, 0.0)).unwrap();
        assert!((n - Vector::new2(-1.0, 0.0)).norm() < 1e-15);
        let n = ellipse().normal(Vector::new2(2.0, 0.0)).unwrap();
        assert!((n - Vector::new2(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn degenerate_gradient_is_rejected() {
        let err = annulus().normal(Vector::new2(0.75, 0.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGradient { .. }));
    }

    #[test]
    fn disk_exit_times() {
        let d = Domain::unit_disk();
        let f = d.exit_time(Vector::ZERO, Vector::new2(1.0, 0.0), Direction::Forward).unwrap();
        assert!((f - 1.0).abs() < 1e-15);
        let b = d.exit_time(Vector::new2(1.0, 0.0), Vector::new2(1.0, 0.0), Direction::Backward).unwrap();
        assert!((b - 2.0).abs() < 1e-15);
        assert_eq!(d.exit_time(Vector::ZERO, Vector::ZERO, Direction::Forward), Err(Error::ZeroVelocity));
    }

    #[test]
    fn analytic_and_bracketed_exit_times_agree() {
        let star = Domain::new(DomainKind::Star(StarShape { r0: 1.0, cos: vec![0.0, 0.1], sin: vec![0.0, 0.0, 0.05] })).unwrap();
        for dom in [Domain::unit_disk(), ellipse(), annulus(), star] {
            for k in 0..200 {
                let a = 0.37 * k as f64;
                let x = match dom.kind() {
                    DomainKind::Annulus { .. } => Vector::polar(1.3 * a) * (0.55 + 0.4 * (0.5 + 0.5 * (2.1 * a).sin())),
                    _ => Vector::polar(1.3 * a) * (0.45 * (0.5 + 0.5 * (2.1 * a).sin())),
                };
                let v = Vector::polar(a) * (0.3 + k as f64 * 0.01);
                let t = dom.exit_time(x, v, Direction::Forward).unwrap();
                let tb = dom.exit_time_bracketed(x, v, Direction::Forward).unwrap();
                assert!((t - tb).abs() < 1e-10 * dom.diameter(), "{:?} {t} {tb}", dom.kind());
                assert!(dom.level(x + v * t).abs() <= dom.tol_boundary());
            }
        }
    }

    #[test]
    fn annulus_rays_stop_at_inner_circle() {
        let d = annulus();
        let t = d.exit_time(Vector::new2(0.9, 0.0), Vector::new2(-1.0, 0.0), Direction::Forward).unwrap();
        assert!((t - 0.4).abs() < 1e-14);
        let t = d.exit_time(Vector::new2(0.5, 0.0), Vector::new2(1.0, 0.0), Direction::Forward).unwrap();
        assert!((t - 0.5).abs() < 1e-14);
        let t = d.exit_time(Vector::new2(0.5, 0.0), Vector::new2(-1.0, 0.0), Direction::Forward).unwrap();
        assert!(t.abs() < 1e-14);
    }

    #[test]
    fn ballistic_flow_diameter_and_inverse() {
        let d = Domain::unit_disk();
        let b = d.boundary_point(Vector::new2(1.0, 0.0), Vector::new2(1.0, 0.0)).unwrap();
        let s = d.ballistic_flow(&b).unwrap();
        assert!((s.x - Vector::new2(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(s.side, Side::Incoming);
        let back = d.ballistic_flow_inv(&s).unwrap();
        assert!((back.x - b.x).norm() < 1e-14);
        assert_eq!(d.ballistic_flow(&s), Err(Error::NotOutgoing));
    }

    #[test]
    fn volumes_and_distances() {
        let star = Domain::new(DomainKind::Star(StarShape { r0: 1.0, cos: vec![0.2], sin: vec![] })).unwrap();
        assert!((star.volume() - PI * (1.0 + 0.5 * 0.04)).abs() < 1e-12);
        let e = ellipse();
        assert!((e.distance_to_boundary(Vector::ZERO) - 1.0).abs() < 1e-9);
        assert!((e.distance_to_boundary(Vector::new2(1.5, 0.0)) - 0.5).abs() < 1e-6);
        assert!((annulus().distance_to_boundary(Vector::new2(0.0, 0.6)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn tangent_frames_are_orthonormal() {
        let b = Domain::new(DomainKind::Ball { radius: 1.0 }).unwrap();
        for x in [Vector::new3(0.0, 0.0, 1.0), Vector::new3(0.6, 0.0, 0.8), Vector::new3(0.48, 0.64, 0.6)] {
            let n = b.normal(x).unwrap();
            let f = b.tangent_frame(x).unwrap();
            assert_eq!(f.len(), 2);
            for t in &f {
                assert!(t.dot(&n).abs() < 1e-14);
                assert!((t.norm() - 1.0).abs() < 1e-14);
            }
            assert!(f[0].dot(&f[1]).abs() < 1e-14);
        }
    }
}
