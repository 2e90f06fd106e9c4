use super::{Direction, Domain, Vector};
use crate::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Sign of the closed-form `grad_omega tau_-`, calibrated against finite differences
/// of the unit-disk chord `tau_- = 2 x.omega`.
pub const GRAD_OMEGA_SIGN: f64 = -1.0;

struct Foot {
    tau: f64,
    n: Vector,
    cos: f64,
}

fn foot(domain: &Domain, x: Vector, omega: Vector) -> Result<Foot> {
    let tau = domain.exit_time(x, omega, Direction::Backward)?;
    let n = domain.normal(x - omega * tau)?;
    let cos = omega.dot(&n);
    if cos.abs() < domain.tolerances().graze {
        return Err(Error::GrazingEndpoint { cosine: cos.abs() });
    }
    Ok(Foot { tau, n, cos })
}

/// Directional derivative of `tau_-(., omega)` at a boundary point along a tangent `h`.
pub fn grad_tau_x(domain: &Domain, x: Vector, omega: Vector, h: Vector) -> Result<f64> {
    let f = foot(domain, x, omega)?;
    Ok(h.dot(&f.n) / f.cos)
}

/// Directional derivative of `tau_-(x, .)` on the unit sphere along `h` with `h.omega = 0`.
pub fn grad_tau_omega(domain: &Domain, x: Vector, omega: Vector, h: Vector) -> Result<f64> {
    let f = foot(domain, x, omega)?;
    Ok(GRAD_OMEGA_SIGN * f.tau * h.dot(&f.n) / f.cos)
}

/// Central finite difference of `tau_-` along a tangent perturbation of `x` that is
/// projected back onto the boundary.
pub fn fd_grad_tau_x(domain: &Domain, x: Vector, omega: Vector, h: Vector, step: f64) -> Result<f64> {
    let tau = |s: f64| -> Result<f64> {
        let p = project_to_boundary(domain, x + h * s)?;
        domain.exit_time(p, omega, Direction::Backward)
    };
    Ok((tau(step)? - tau(-step)?) / (2.0 * step))
}

/// Central finite difference of `tau_-` along the great circle through `omega` with tangent `h`.
pub fn fd_grad_tau_omega(domain: &Domain, x: Vector, omega: Vector, h: Vector, step: f64) -> Result<f64> {
    let tau = |s: f64| {
        let (sn, cs) = s.sin_cos();
        domain.exit_time(x, omega * cs + h * sn, Direction::Backward)
    };
    Ok((tau(step)? - tau(-step)?) / (2.0 * step))
}

/// Newton projection along the level-function gradient.
pub fn project_to_boundary(domain: &Domain, mut x: Vector) -> Result<Vector> {
    for _ in 0..50 {
        let f = domain.level(x);
        if f.abs() <= 0.25 * domain.tol_boundary() {
            return Ok(x);
        }
        let g = domain.level_gradient(x);
        let g2 = g.norm2();
        if g2 < domain.tolerances().gradient.powi(2) {
            return Err(Error::DegenerateGradient { x: x.0, norm: g2.sqrt() });
        }
        x -= g * (f / g2);
    }
    Ok(x)
}

/// `det(c Id + a u^T) = c^(d-1) (c + a.u)`, with `c + a.u` summed in compensated
/// arithmetic.
pub fn det_rank_one_update(c: f64, a: &[f64], u: &[f64]) -> f64 {
    assert_eq!(a.len(), u.len(), "dimension mismatch");
    let (mut s, mut err) = (c, 0.0);
    for (p, q) in a.iter().zip(u) {
        let prod = p * q;
        let prod_err = p.mul_add(*q, -prod);
        let t = s + prod;
        let z = t - s;
        err += (s - (t - z)) + (prod - z) + prod_err;
        s = t;
    }
    c.powi(a.len() as i32 - 1) * (s + err)
}

/// Determinant of the polar-coordinate Gram matrix at a unit vector,
/// `prod_{j=2}^{d-1} sin^(j-1) theta_j`, with `sin theta_j = |omega_{1..j}| / |omega_{1..j+1}|`.
pub fn polar_jacobian(omega: &[f64]) -> f64 {
    let d = omega.len();
    let mut partial = Vec::with_capacity(d + 1);
    let mut s = 0.0;
    partial.push(0.0);
    for w in omega {
        s += w * w;
        partial.push(s.sqrt());
    }
    let mut det = 1.0;
    for j in 2..d {
        let r = if partial[j + 1] > 0.0 { partial[j] / partial[j + 1] } else { 0.0 };
        det *= r.powi(j as i32 - 1);
    }
    det
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DegenerateEstimate {
    pub estimate: f64,
    pub std_error: f64,
    /// `eps * pi^(d-2)`.
    pub bound: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of the surface measure of the directions in the incoming
/// half-sphere whose polar Jacobian is at most `eps`.
pub fn degenerate_direction_measure(d: usize, eps: f64, samples: usize, seed: u64) -> DegenerateEstimate {
    assert!(d >= 2, "dimension must be at least 2");
    let half_area = crate::vmeasure::sphere_area(d) / 2.0;
    let bound = eps * std::f64::consts::PI.powi(d as i32 - 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    let mut w = vec![0.0; d];
    for _ in 0..samples {
        for c in w.iter_mut() {
            *c = StandardNormal.sample(&mut rng);
        }
        let n = w.iter().map(|c| c * c).sum::<f64>().sqrt();
        w.iter_mut().for_each(|c| *c /= n);
        w[d - 1] = w[d - 1].abs();
        if polar_jacobian(&w) <= eps {
            hits += 1;
        }
    }
    let p = hits as f64 / samples.max(1) as f64;
    DegenerateEstimate {
        estimate: half_area * p,
        std_error: half_area * (p * (1.0 - p) / samples.max(1) as f64).sqrt(),
        bound,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn disk_gradients_match_chord_oracle() {
        let d = Domain::unit_disk();
        let x = Vector::new2(1.0, 0.0);
        for beta in [-1.2, -0.4, 0.0, 0.3, 1.1] {
            let (s, c) = f64::sin_cos(beta);
            let om = Vector::new2(c, s);
            let gx = grad_tau_x(&d, x, om, Vector::new2(0.0, 1.0)).unwrap();
            assert!((gx - 2.0 * s).abs() < 1e-12);
            let go = grad_tau_omega(&d, x, om, Vector::new2(-s, c)).unwrap();
            assert!((go + 2.0 * s).abs() < 1e-12, "sign calibration");
            let fd = fd_grad_tau_omega(&d, x, om, Vector::new2(-s, c), 1e-5).unwrap();
            assert!((go - fd).abs() < 1e-8);
        }
    }

    #[test]
    fn rank_one_hand_cases() {
        assert_eq!(det_rank_one_update(2.0, &[1.0, 0.0], &[0.0, 1.0]), 4.0);
        assert_eq!(det_rank_one_update(3.0, &[1.0, 0.0, 0.0], &[0.0, 2.0, 5.0]), 27.0);
    }

    #[test]
    fn polar_jacobian_in_three_dimensions() {
        let t: f64 = 0.7;
        let w = [t.sin() * 0.3f64.cos(), t.sin() * 0.3f64.sin(), t.cos()];
        assert!((polar_jacobian(&w) - t.sin()).abs() < 1e-14);
        assert_eq!(polar_jacobian(&[0.6, 0.8]), 1.0);
    }

    #[test]
    fn degenerate_measure_two_and_three_dimensions() {
        assert_eq!(degenerate_direction_measure(2, 0.5, 1000, 1).estimate, 0.0);
        let e = degenerate_direction_measure(3, 0.2, 200_000, 7);
        let exact = 2.0 * PI * (1.0 - (1.0 - 0.04f64).sqrt());
        assert!((e.estimate - exact).abs() < 4.0 * e.std_error);
        assert!(e.estimate <= e.bound);
    }
}
