use super::{StarShape, Vector};
use crate::vmeasure::quadrature::gauss_legendre;
use std::f64::consts::TAU;

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    Circle(f64),
    Ellipse(f64, f64),
    Star(StarShape),
}

/// A closed boundary curve parametrised by `t` in `[0, 2pi)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Curve {
    shape: Shape,
    inward: bool,
}

/// Parametrisation of one connected boundary component.
#[derive(Clone, Debug, PartialEq)]
pub enum BoundaryChart {
    Curve(Curve),
    Sphere { radius: f64 },
}

impl Curve {
    pub fn circle(r: f64, inward: bool) -> Self {
        Curve { shape: Shape::Circle(r), inward }
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Curve { shape: Shape::Ellipse(a, b), inward: false }
    }

    pub fn star(s: StarShape) -> Self {
        Curve { shape: Shape::Star(s), inward: false }
    }

    /// Whether the outward normal of the domain points toward the curve's inside.
    pub fn inward(&self) -> bool {
        self.inward
    }

    pub fn point(&self, t: f64) -> Vector {
        match &self.shape {
            Shape::Circle(r) => Vector::polar(t) * *r,
            Shape::Ellipse(a, b) => Vector::new2(a * t.cos(), b * t.sin()),
            Shape::Star(s) => Vector::polar(t) * s.radius(t),
        }
    }

    pub fn velocity(&self, t: f64) -> Vector {
        match &self.shape {
            Shape::Circle(r) => Vector::new2(-t.sin(), t.cos()) * *r,
            Shape::Ellipse(a, b) => Vector::new2(-a * t.sin(), b * t.cos()),
            Shape::Star(s) => {
                Vector::polar(t) * s.radius_derivative(t) + Vector::new2(-t.sin(), t.cos()) * s.radius(t)
            }
        }
    }

    /// Parameter of a point on (or near) the curve, in `[0, 2pi)`.
    pub fn param_of(&self, x: Vector) -> f64 {
        let t = match &self.shape {
            Shape::Ellipse(a, b) => (x.y() / b).atan2(x.x() / a),
            _ => x.y().atan2(x.x()),
        };
        if t < 0.0 {
            t + TAU
        } else if t >= TAU {
            t - TAU
        } else {
            t
        }
    }

    pub fn arc_length(&self, t0: f64, t1: f64) -> f64 {
        if let Shape::Circle(r) = self.shape {
            return r * (t1 - t0);
        }
        let panels = ((t1 - t0).abs() / TAU * 64.0).ceil().max(1.0) as usize;
        let h = (t1 - t0) / panels as f64;
        let rule = gauss_legendre(12, 0.0, 1.0);
        (0..panels)
            .map(|k| {
                rule.iter()
                    .map(|&(s, w)| w * self.velocity(t0 + (k as f64 + s) * h).norm())
                    .sum::<f64>()
                    * h
            })
            .sum()
    }

    pub fn length(&self) -> f64 {
        self.arc_length(0.0, TAU)
    }

    /// Parameters `t_0 = 0 < ... < t_n = 2pi` splitting the curve into equal arc lengths.
    pub fn partition(&self, n: usize) -> Vec<f64> {
        if let Shape::Circle(_) = self.shape {
            return (0..=n).map(|k| TAU * k as f64 / n as f64).collect();
        }
        let fine = 64 * n.max(16);
        let h = TAU / fine as f64;
        let mut cum = vec![0.0];
        for k in 0..fine {
            let s = cum[k] + self.arc_length(k as f64 * h, (k + 1) as f64 * h);
            cum.push(s);
        }
        let total = cum[fine];
        let mut out = vec![0.0];
        let mut j = 0;
        for k in 1..n {
            let target = total * k as f64 / n as f64;
            while cum[j + 1] < target {
                j += 1;
            }
            let mut t = j as f64 * h + h * (target - cum[j]) / (cum[j + 1] - cum[j]);
            for _ in 0..3 {
                let err = cum[j] + self.arc_length(j as f64 * h, t) - target;
                t -= err / self.velocity(t).norm();
            }
            out.push(t);
        }
        out.push(TAU);
        out
    }
}
