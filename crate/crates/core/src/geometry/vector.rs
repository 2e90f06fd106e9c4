use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub, SubAssign};

/// A point or direction in R^2 or R^3. Planar vectors keep a zero third component.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vector(pub [f64; 3]);

impl Vector {
    pub const ZERO: Vector = Vector([0.0; 3]);

    pub const fn new2(x: f64, y: f64) -> Self {
        Vector([x, y, 0.0])
    }

    pub const fn new3(x: f64, y: f64, z: f64) -> Self {
        Vector([x, y, z])
    }

    /// Builds a vector from the first `d` entries of a slice.
    pub fn from_slice(s: &[f64]) -> Self {
        let mut c = [0.0; 3];
        c[..s.len().min(3)].copy_from_slice(&s[..s.len().min(3)]);
        Vector(c)
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn z(&self) -> f64 {
        self.0[2]
    }

    pub fn dot(&self, o: &Vector) -> f64 {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    pub fn normalized(&self) -> Vector {
        *self / self.norm()
    }

    pub fn cross(&self, o: &Vector) -> Vector {
        let [a, b, c] = self.0;
        let [x, y, z] = o.0;
        Vector([b * z - c * y, c * x - a * z, a * y - b * x])
    }

    /// Polar angle of the planar part in `[0, 2pi)`.
    pub fn angle(&self) -> f64 {
        let a = self.0[1].atan2(self.0[0]);
        if a < 0.0 {
            a + std::f64::consts::TAU
        } else {
            a
        }
    }

    /// Unit planar vector at angle `a`.
    pub fn polar(a: f64) -> Vector {
        let (s, c) = a.sin_cos();
        Vector::new2(c, s)
    }

    /// Unit vector in R^3 from `cos` of the polar angle and the azimuth.
    pub fn spherical(cos_theta: f64, phi: f64) -> Vector {
        let s = (1.0 - cos_theta * cos_theta).max(0.0).sqrt();
        let (sp, cp) = phi.sin_cos();
        Vector::new3(s * cp, s * sp, cos_theta)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl Add for Vector {
    type Output = Vector;
    fn add(self, o: Vector) -> Vector {
        Vector([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vector {
    type Output = Vector;
    fn sub(self, o: Vector) -> Vector {
        Vector([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl AddAssign for Vector {
    fn add_assign(&mut self, o: Vector) {
        *self = *self + o;
    }
}

impl SubAssign for Vector {
    fn sub_assign(&mut self, o: Vector) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vector {
    type Output = Vector;
    fn mul(self, s: f64) -> Vector {
        Vector([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

impl Mul<Vector> for f64 {
    type Output = Vector;
    fn mul(self, v: Vector) -> Vector {
        v * self
    }
}

impl Div<f64> for Vector {
    type Output = Vector;
    fn div(self, s: f64) -> Vector {
        Vector([self.0[0] / s, self.0[1] / s, self.0[2] / s])
    }
}

impl Neg for Vector {
    type Output = Vector;
    fn neg(self) -> Vector {
        Vector([-self.0[0], -self.0[1], -self.0[2]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = Vector::new2(1.0, 2.0);
        let b = Vector::new2(3.0, -1.0);
        assert_eq!(a + b, Vector::new2(4.0, 1.0));
        assert_eq!(a.dot(&b), 1.0);
        assert_eq!(Vector::new3(1.0, 0.0, 0.0).cross(&Vector::new3(0.0, 1.0, 0.0)), Vector::new3(0.0, 0.0, 1.0));
        assert!((Vector::polar(1.0).angle() - 1.0).abs() < 1e-15);
        assert!((Vector::new2(0.0, -1.0).angle() - 1.5 * std::f64::consts::PI).abs() < 1e-15);
    }
}
