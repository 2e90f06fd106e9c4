//! Stochastic partly diffuse boundary operators `H = alpha R + (1 - alpha) K`.

mod kernel;
mod predicates;

pub use kernel::{
    radial_integral, CustomKernelFn, DiffuseKernel, DiffuseSampler, KernelSpec, ThetaField,
    DEFAULT_SPEED_FLOOR,
};
pub use predicates::{
    additional_condition_radial, diffuseness_probe, hypothesis_checks, oscillation_predicate,
    sample_betas, sweeping_divergence_probe, trend_verdict, DiffusenessReport, DivergenceReport, HypothesisReport,
    OscillationReport, Verdict,
};

use crate::geometry::{Domain, Vector};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

pub type ReflectionFn = Arc<dyn Fn(Vector, Vector, Vector) -> Vector + Send + Sync>;

/// Deterministic reflection law `V(x, .)` mapping outgoing to incoming velocities.
#[derive(Clone)]
pub enum ReflectionLaw {
    Specular,
    BounceBack,
    /// `V(x, n, v)`; must preserve speed and map outgoing to incoming.
    Custom(ReflectionFn),
}

impl fmt::Debug for ReflectionLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReflectionLaw::Specular => write!(f, "Specular"),
            ReflectionLaw::BounceBack => write!(f, "BounceBack"),
            ReflectionLaw::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ReflectionLaw {
    /// Reflected velocity at a point with outward normal `n`.
    pub fn apply(&self, x: Vector, n: Vector, v: Vector) -> Vector {
        match self {
            ReflectionLaw::Specular => v - n * (2.0 * v.dot(&n)),
            ReflectionLaw::BounceBack => -v,
            ReflectionLaw::Custom(f) => f(x, n, v),
        }
    }

    pub fn reflect(&self, domain: &Domain, x: Vector, v: Vector) -> Result<Vector> {
        let n = domain.normal(x)?;
        if v.dot(&n) <= 0.0 {
            return Err(Error::NotOutgoing);
        }
        Ok(self.apply(x, n, v))
    }
}

/// Accommodation field `alpha(x)` on the boundary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaField {
    Constant { value: f64 },
    /// `upper` on `{x_2 >= 0}`, `lower` elsewhere.
    TwoPatch { upper: f64, lower: f64 },
    /// Piecewise constant in the polar angle of `x` on equal sectors.
    Tabulated { values: Vec<f64> },
}

impl AlphaField {
    pub fn constant(value: f64) -> Self {
        AlphaField::Constant { value }
    }

    pub fn at(&self, x: Vector) -> f64 {
        match self {
            AlphaField::Constant { value } => *value,
            AlphaField::TwoPatch { upper, lower } => {
                if x.y() >= 0.0 {
                    *upper
                } else {
                    *lower
                }
            }
            AlphaField::Tabulated { values } => {
                let k = (x.angle() / std::f64::consts::TAU * values.len() as f64) as usize;
                values[k.min(values.len() - 1)]
            }
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            AlphaField::Constant { value } => vec![*value],
            AlphaField::TwoPatch { upper, lower } => vec![*upper, *lower],
            AlphaField::Tabulated { values } => values.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.values();
        if v.is_empty() || v.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::InvalidParameter("alpha values must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// `(inf beta, sup beta)` for `beta = 1 - alpha`.
    pub fn beta_range(&self) -> (f64, f64) {
        let v = self.values();
        let lo = v.iter().fold(f64::INFINITY, |m, a| m.min(1.0 - a));
        let hi = v.iter().fold(f64::NEG_INFINITY, |m, a| m.max(1.0 - a));
        (lo, hi)
    }

    pub fn sup(&self) -> f64 {
        self.values().into_iter().fold(0.0, f64::max)
    }
}

/// `H = alpha R + (1 - alpha) K`.
#[derive(Clone, Debug)]
pub struct PartlyDiffuseBoundary {
    pub alpha: AlphaField,
    pub reflection: ReflectionLaw,
    pub kernel: DiffuseKernel,
}

/// Which branch produced a post-collision velocity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Reflected,
    Diffuse,
}

impl PartlyDiffuseBoundary {
    pub fn new(alpha: AlphaField, reflection: ReflectionLaw, kernel: DiffuseKernel) -> Result<Self> {
        alpha.validate()?;
        Ok(PartlyDiffuseBoundary { alpha, reflection, kernel })
    }

    /// Total mass of the post-collision law at `(x, v')`: `alpha + (1 - alpha) int k dmu_x`.
    pub fn post_collision_mass(&self, x: Vector, n: Vector, v_out: Vector) -> f64 {
        let a = self.alpha.at(x);
        a + (1.0 - a) * self.kernel.column_mass(x, n, v_out)
    }

    /// Draws from `P(x, v', .) = alpha delta_{V(x, v')} + (1 - alpha) k mu_x`, redrawing
    /// grazing diffuse outputs.
    pub fn sample_post_collision<R: Rng + ?Sized>(
        &self,
        sampler: &DiffuseSampler,
        x: Vector,
        n: Vector,
        v_out: Vector,
        graze: f64,
        rng: &mut R,
    ) -> Result<(Vector, Branch)> {
        if rng.random::<f64>() < self.alpha.at(x) {
            return Ok((self.reflection.apply(x, n, v_out), Branch::Reflected));
        }
        let patch = self.kernel.patch_of(x);
        const MAX_ATTEMPTS: usize = 64;
        for _ in 0..MAX_ATTEMPTS {
            let v = sampler.sample(patch, n, rng);
            let s = v.norm();
            if s == 0.0 || -v.dot(&n) > graze * s {
                return Ok((v, Branch::Diffuse));
            }
        }
        Err(Error::SamplerFailure { attempts: MAX_ATTEMPTS })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmeasure::VelocityMeasure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reflections() {
        let n = Vector::new2(1.0, 0.0);
        let x = Vector::new2(1.0, 0.0);
        assert_eq!(ReflectionLaw::Specular.apply(x, n, Vector::new2(1.0, 1.0)), Vector::new2(-1.0, 1.0));
        assert_eq!(ReflectionLaw::BounceBack.apply(x, n, Vector::new2(0.3, 1.0)), Vector::new2(-0.3, -1.0));
        let d = Domain::unit_disk();
        assert_eq!(ReflectionLaw::Specular.reflect(&d, x, Vector::new2(-1.0, 0.0)), Err(Error::NotOutgoing));
    }

    #[test]
    fn alpha_fields() {
        let a = AlphaField::TwoPatch { upper: 0.1, lower: 0.9 };
        assert_eq!(a.at(Vector::new2(0.0, 1.0)), 0.1);
        assert_eq!(a.at(Vector::new2(0.0, -1.0)), 0.9);
        let (lo, hi) = a.beta_range();
        assert!((lo - 0.1).abs() < 1e-15 && (hi - 0.9).abs() < 1e-15);
        assert!(AlphaField::constant(1.5).validate().is_err());
        let t = AlphaField::Tabulated { values: vec![0.0, 0.5, 1.0, 0.25] };
        assert_eq!(t.at(Vector::new2(-1.0, -0.1)), 1.0);
    }

    #[test]
    fn pure_reflection_branch() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        let k = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let h = PartlyDiffuseBoundary::new(AlphaField::constant(1.0), ReflectionLaw::Specular, k.clone()).unwrap();
        let s = DiffuseSampler::new(&k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = Vector::new2(1.0, 0.0);
        for _ in 0..100 {
            let (v, b) = h.sample_post_collision(&s, n, n, Vector::new2(1.0, 2.0), 1e-9, &mut rng).unwrap();
            assert_eq!(b, Branch::Reflected);
            assert_eq!(v, Vector::new2(-1.0, 2.0));
        }
        assert!((h.post_collision_mass(n, n, n) - 1.0).abs() < 1e-12);
    }
}
