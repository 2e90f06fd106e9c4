use crate::geometry::Vector;
use crate::vmeasure::quadrature::gauss_legendre;
use crate::vmeasure::{cosine_law_direction, half_cosine_moment, RadialPart, RadialTable, VelocityMeasure};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

/// Wall temperature field of the Maxwell kernel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ThetaField {
    Constant { theta: f64 },
    /// `upper` on `{x_2 >= 0}`, `lower` elsewhere.
    TwoPatch { upper: f64, lower: f64 },
}

impl ThetaField {
    fn values(&self) -> Vec<f64> {
        match self {
            ThetaField::Constant { theta } => vec![*theta],
            ThetaField::TwoPatch { upper, lower } => vec![*upper, *lower],
        }
    }
}

/// Built-in radial kernel families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `k = M(v)/gamma(x)` with the wall Maxwellian at temperature `theta(x)`.
    Maxwell { theta: ThetaField },
    /// `k = c |v|^-p log^-q(e + 1/|v|) 1_{|v| <= 1}`.
    HeavyLowSpeed { p: f64, q: f64 },
    /// `k = c f(|v|)` with `f` piecewise linear through `(speeds, values)`.
    Tabulated { speeds: Vec<f64>, values: Vec<f64> },
}

pub type CustomKernelFn = Arc<dyn Fn(Vector, Vector, Vector) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Base {
    Radial(KernelSpec),
    Custom(CustomKernelFn),
}

/// Diffuse boundary kernel `k(x, v, v')`, `v` incoming and `v'` outgoing.
#[derive(Clone)]
pub struct DiffuseKernel {
    base: Base,
    measure: VelocityMeasure,
    truncation: Option<f64>,
    cutoff: Option<f64>,
    /// Multiplicative constant per kernel patch (normalisation and renormalisation).
    scale: Vec<f64>,
    floor: f64,
}

impl fmt::Debug for DiffuseKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.base {
            Base::Radial(s) => format!("{s:?}"),
            Base::Custom(_) => "Custom".to_string(),
        };
        f.debug_struct("DiffuseKernel")
            .field("kind", &kind)
            .field("truncation", &self.truncation)
            .field("cutoff", &self.cutoff)
            .field("scale", &self.scale)
            .finish()
    }
}

/// Speed below which tabulated diffuse sampling reports the remaining mass as a tail.
pub const DEFAULT_SPEED_FLOOR: f64 = 1e-6;

/// `int_lo^hi f(rho) m0(drho)`, robust to `log`-type singularities at zero speed.
pub fn radial_integral(measure: &VelocityMeasure, f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    if let RadialPart::Atoms(a) = measure.radial() {
        return a.iter().filter(|p| p.0 >= lo && p.0 <= hi).map(|&(r, m)| m * f(r)).sum();
    }
    let (a, b) = measure.speed_range();
    let (lo, hi) = (lo.max(a), hi.min(b));
    if !(hi > lo) {
        return 0.0;
    }
    let split = 1e-3_f64;
    let mut total = 0.0;
    if lo < split {
        let top = hi.min(split);
        let s = |r: f64| if r <= 0.0 { 0.0 } else { 1.0 / (E + 1.0 / r).ln() };
        let (s0, s1) = (s(lo), s(top));
        let panels = 24;
        let h = (s1 - s0) / panels as f64;
        let rule = gauss_legendre(16, 0.0, 1.0);
        for k in 0..panels {
            for &(t, w) in &rule {
                let sv = s0 + (k as f64 + t) * h;
                let r = 1.0 / ((1.0 / sv).exp() - E);
                if r > 0.0 && r.is_finite() {
                    let jac = r * (1.0 + E * r) / (sv * sv);
                    let term = jac * f(r) * measure.radial_density(r);
                    if term.is_finite() {
                        total += w * h * term;
                    }
                }
            }
        }
    }
    if hi > split {
        total += measure
            .radial_nodes(lo.max(split), hi, 64)
            .iter()
            .map(|&(r, w)| w * f(r))
            .sum::<f64>();
    }
    total
}

impl DiffuseKernel {
    /// Builds a built-in kernel normalised against `measure`.
    pub fn new(spec: KernelSpec, measure: &VelocityMeasure) -> Result<Self> {
        match &spec {
            KernelSpec::Maxwell { theta } => {
                if theta.values().iter().any(|t| !(*t > 0.0)) {
                    return Err(Error::InvalidParameter("theta must be positive".into()));
                }
            }
            KernelSpec::HeavyLowSpeed { p, q } => {
                if !(p.is_finite() && *q > 0.0) {
                    return Err(Error::InvalidParameter("heavy kernel needs finite p and q > 0".into()));
                }
            }
            KernelSpec::Tabulated { speeds, values } => {
                if speeds.len() < 2
                    || speeds.len() != values.len()
                    || speeds.windows(2).any(|w| w[1] <= w[0])
                    || values.iter().any(|v| *v < 0.0)
                {
                    return Err(Error::InvalidParameter(
                        "tabulated kernel needs increasing speeds and nonnegative values".into(),
                    ));
                }
            }
        }
        let patches = match &spec {
            KernelSpec::Maxwell { theta } => theta.values().len(),
            _ => 1,
        };
        let mut k = DiffuseKernel {
            base: Base::Radial(spec),
            measure: measure.clone(),
            truncation: None,
            cutoff: None,
            scale: vec![1.0; patches],
            floor: DEFAULT_SPEED_FLOOR,
        };
        for p in 0..patches {
            let mass = k.radial_column_mass(p);
            if !(mass > 0.0 && mass.is_finite()) {
                return Err(Error::ZeroMass);
            }
            k.scale[p] = 1.0 / mass;
        }
        Ok(k)
    }

    pub fn maxwell(measure: &VelocityMeasure, theta: f64) -> Result<Self> {
        Self::new(KernelSpec::Maxwell { theta: ThetaField::Constant { theta } }, measure)
    }

    pub fn heavy_low_speed(measure: &VelocityMeasure, p: f64, q: f64) -> Result<Self> {
        Self::new(KernelSpec::HeavyLowSpeed { p, q }, measure)
    }

    /// Arbitrary nonnegative kernel; not normalised, evaluated by quadrature only.
    pub fn custom(measure: &VelocityMeasure, f: CustomKernelFn) -> Self {
        DiffuseKernel {
            base: Base::Custom(f),
            measure: measure.clone(),
            truncation: None,
            cutoff: None,
            scale: vec![1.0],
            floor: DEFAULT_SPEED_FLOOR,
        }
    }

    pub fn spec(&self) -> Option<&KernelSpec> {
        match &self.base {
            Base::Radial(s) => Some(s),
            Base::Custom(_) => None,
        }
    }

    pub fn measure(&self) -> &VelocityMeasure {
        &self.measure
    }

    /// Kernels independent of `v'` and of the direction of `v`.
    pub fn is_radial(&self) -> bool {
        matches!(self.base, Base::Radial(_))
    }

    pub fn speed_floor(&self) -> f64 {
        self.floor
    }

    pub fn with_speed_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn patch_count(&self) -> usize {
        self.scale.len()
    }

    /// Kernel patch containing the boundary point `x`.
    pub fn patch_of(&self, x: Vector) -> usize {
        if self.scale.len() == 2 && x.y() < 0.0 {
            1
        } else {
            0
        }
    }

    /// `gamma` of the Maxwell kernel on each patch.
    pub fn maxwell_gamma(&self) -> Option<Vec<f64>> {
        match &self.base {
            Base::Radial(KernelSpec::Maxwell { .. }) if self.truncation.is_none() && self.cutoff.is_none() => {
                Some(self.scale.iter().map(|s| 1.0 / s).collect())
            }
            _ => None,
        }
    }

    fn profile(&self, patch: usize, rho: f64) -> f64 {
        let Base::Radial(spec) = &self.base else { return 0.0 };
        let d = self.measure.dimension() as f64;
        match spec {
            KernelSpec::Maxwell { theta } => {
                let t = theta.values()[patch];
                (2.0 * PI * t).powf(-0.5 * d) * (-rho * rho / (2.0 * t)).exp()
            }
            KernelSpec::HeavyLowSpeed { p, q } => {
                if rho > 0.0 && rho <= 1.0 {
                    rho.powf(-p) * (E + 1.0 / rho).ln().powf(-q)
                } else {
                    0.0
                }
            }
            KernelSpec::Tabulated { speeds, values } => {
                if rho < speeds[0] || rho > speeds[speeds.len() - 1] {
                    return 0.0;
                }
                let k = speeds.partition_point(|&s| s <= rho).clamp(1, speeds.len() - 1);
                let t = (rho - speeds[k - 1]) / (speeds[k] - speeds[k - 1]);
                values[k - 1] + t * (values[k] - values[k - 1])
            }
        }
    }

    /// `k` on a patch as a function of the incoming speed (radial kernels).
    pub fn radial_value(&self, patch: usize, rho: f64) -> f64 {
        let mut k = self.scale[patch] * self.profile(patch, rho);
        if let Some(m) = self.truncation {
            k = if rho <= m { k.min(m) } else { 0.0 };
        }
        if let Some(c) = self.cutoff {
            if rho <= c {
                k = 0.0;
            }
        }
        k
    }

    /// `k(x, v, v')`.
    pub fn value(&self, x: Vector, v: Vector, v_out: Vector) -> f64 {
        match &self.base {
            Base::Radial(_) => self.radial_value(self.patch_of(x), v.norm()),
            Base::Custom(f) => {
                let mut k = f(x, v, v_out);
                if let Some(m) = self.truncation {
                    k = if v.norm() <= m { k.min(m) } else { 0.0 };
                }
                if let Some(c) = self.cutoff {
                    if v.norm() <= c {
                        k = 0.0;
                    }
                }
                k * self.scale[0]
            }
        }
    }

    fn radial_column_mass(&self, patch: usize) -> f64 {
        half_cosine_moment(self.measure.dimension()) * self.radial_moment(patch, 1, 0.0, f64::INFINITY)
    }

    /// `int_lo^hi k(rho) rho^a m0(drho)` on a patch.
    pub fn radial_moment(&self, patch: usize, a: i32, lo: f64, hi: f64) -> f64 {
        if let (Base::Radial(KernelSpec::HeavyLowSpeed { p, q }), RadialPart::Lebesgue { rho_min, rho_max }, None) =
            (&self.base, self.measure.radial(), self.truncation)
        {
            let lo = lo.max(*rho_min).max(self.cutoff.unwrap_or(0.0));
            let hi = hi.min(*rho_max).min(1.0);
            if !(hi > lo) {
                return 0.0;
            }
            let split = 1e-3_f64.min(hi);
            let mut total = 0.0;
            if lo < split {
                let d = self.measure.dimension() as f64;
                let e = d - p + a as f64;
                let area = crate::vmeasure::sphere_area(self.measure.dimension());
                let s_of = |r: f64| if r <= 0.0 { 0.0 } else { 1.0 / (E + 1.0 / r).ln() };
                let (s0, s1) = (s_of(lo), s_of(split));
                let panels = 32;
                let h = (s1 - s0) / panels as f64;
                let rule = gauss_legendre(16, 0.0, 1.0);
                for k in 0..panels {
                    for &(t, w) in &rule {
                        let sv = s0 + (k as f64 + t) * h;
                        let ln_r = -1.0 / sv - (-E * (-1.0 / sv).exp()).ln_1p();
                        let r = ln_r.exp();
                        total += w * h * area * (e * ln_r).exp() * (1.0 + E * r) * sv.powf(q - 2.0);
                    }
                }
                total *= self.scale[patch];
            }
            if hi > split {
                total += radial_integral(&self.measure, |r| self.radial_value(patch, r) * r.powi(a), split.max(lo), hi);
            }
            return total;
        }
        radial_integral(&self.measure, |r| self.radial_value(patch, r) * r.powi(a), lo, hi)
    }

    /// `int_{Gamma_-(x)} k(x, v, v') mu_x(dv)`.
    pub fn column_mass(&self, x: Vector, n: Vector, v_out: Vector) -> f64 {
        match &self.base {
            Base::Radial(_) => self.radial_column_mass(self.patch_of(x)),
            Base::Custom(_) => {
                let q = self.measure.quadrature(32, if self.measure.dimension() == 2 { 256 } else { 32 });
                q.cells()
                    .filter(|(v, _)| v.dot(&n) < 0.0)
                    .map(|(v, w)| w * v.dot(&n).abs() * self.value(x, v, v_out))
                    .sum()
            }
        }
    }

    /// `K_m`: `k_m = min(k, m 1_{|v| <= m})`.
    pub fn truncate(&self, m: f64) -> Result<Self> {
        if !(m >= 1.0) {
            return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
        }
        let mut k = self.clone();
        k.truncation = Some(self.truncation.map_or(m, |t| t.min(m)));
        Ok(k)
    }

    /// `K_n`: removes speeds `|v| <= 1/n` and renormalises; returns `beta_n` per patch.
    pub fn lowspeed_renormalize(&self, n: f64) -> Result<(Vec<f64>, Self)> {
        if !(n >= 1.0) {
            return Err(Error::InvalidParameter("renormalisation level must be >= 1".into()));
        }
        let mut k = self.clone();
        k.cutoff = Some(self.cutoff.map_or(1.0 / n, |c| c.max(1.0 / n)));
        let mut betas = Vec::new();
        for p in 0..k.scale.len() {
            let beta = match &k.base {
                Base::Radial(_) => k.radial_column_mass(p),
                Base::Custom(_) => {
                    let (lo, hi) = k.measure.speed_range();
                    let x = Vector::new2(1.0, 0.0);
                    let n = Vector::new2(1.0, 0.0);
                    k.column_mass(x, n, Vector::new2(0.5 * (lo + hi), 0.0))
                }
            };
            if beta < 1e-12 {
                return Err(Error::BetaZero { beta });
            }
            k.scale[p] /= beta;
            betas.push(beta);
        }
        Ok((betas, k))
    }

    /// Radial law of the diffuse output on a patch: a table above the speed floor and the
    /// mass below it.
    pub fn radial_law(&self, patch: usize) -> Result<(RadialTable, f64)> {
        if !self.is_radial() {
            return Err(Error::InvalidParameter("sampling needs a radial kernel".into()));
        }
        let (lo, hi) = self.measure.speed_range();
        let lo = lo.max(self.floor).max(self.cutoff.unwrap_or(0.0));
        let hi = match self.base {
            Base::Radial(KernelSpec::HeavyLowSpeed { .. }) => hi.min(1.0),
            _ => hi,
        };
        let hi = self.truncation.map_or(hi, |m| hi.min(m));
        let w = |r: f64| self.radial_value(patch, r) * r;
        let table = RadialTable::from_measure(&self.measure, lo, hi, 4096, w)?;
        let tail = self.radial_moment(patch, 1, 0.0, lo);
        Ok((table, tail))
    }
}

/// Pre-tabulated sampler for the diffuse branch of a radial kernel.
#[derive(Clone, Debug)]
pub struct DiffuseSampler {
    laws: Vec<(RadialTable, f64)>,
    floor: f64,
    dim: usize,
}

impl DiffuseSampler {
    pub fn new(kernel: &DiffuseKernel) -> Result<Self> {
        let laws = (0..kernel.patch_count()).map(|p| kernel.radial_law(p)).collect::<Result<Vec<_>>>()?;
        Ok(DiffuseSampler { laws, floor: kernel.floor, dim: kernel.measure.dimension() })
    }

    /// Fraction of the diffuse output below the speed floor on a patch.
    pub fn tail_fraction(&self, patch: usize) -> f64 {
        let (t, tail) = &self.laws[patch];
        tail / (tail + t.total())
    }

    /// Draws an incoming velocity at a boundary point with outward normal `n`.
    pub fn sample<R: Rng + ?Sized>(&self, patch: usize, n: Vector, rng: &mut R) -> Vector {
        let (table, tail) = &self.laws[patch];
        let u: f64 = rng.random::<f64>() * (table.total() + tail);
        let rho = if u < *tail {
            self.floor * rng.random::<f64>()
        } else {
            table.sample(rng.random())
        };
        cosine_law_direction(-n, self.dim, rng) * rho
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maxwell_gamma_full_plane() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.0, 40.0).unwrap();
        let k = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let g = k.maxwell_gamma().unwrap()[0];
        assert!((g - 1.0 / (2.0 * PI).sqrt()).abs() < 1e-10);
        let n = Vector::new2(1.0, 0.0);
        let x = Vector::new2(1.0, 0.0);
        assert!((k.column_mass(x, n, Vector::new2(1.0, 0.0)) - 1.0).abs() < 1e-10);
        let v = Vector::new2(-0.3, 0.2);
        assert_eq!(k.value(x, v, Vector::new2(1.0, 0.0)), k.value(x, v, Vector::new2(0.2, 3.0)));
    }

    #[test]
    fn heavy_kernel_normalisation_is_finite() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.0, 4.0).unwrap();
        let k = DiffuseKernel::heavy_low_speed(&m, 3.0, 2.0).unwrap();
        let n = Vector::new2(1.0, 0.0);
        assert!((k.column_mass(n, n, n) - 1.0).abs() < 1e-10);
        // d/drho [1/log(e + 1/rho)] = 1/(rho (1 + e rho) log^2(e + 1/rho))
        let f = |r: f64| {
            let l = (E + 1.0 / r).ln();
            1.0 / (r * (1.0 + E * r) * l * l) / (2.0 * PI * r)
        };
        let exact = 1.0 / (E + 1.0).ln() - 1.0 / (E + 1e100).ln();
        assert!((radial_integral(&m, f, 1e-100, 1.0) - exact).abs() < 1e-12);
        let c = k.radial_value(0, 0.5) / (0.5f64.powi(-3) * (E + 2.0).ln().powi(-2));
        // int_0^1 2 pi rho^-1 log^-2(e + 1/rho) drho = 2 pi int (1 + e rho(s)) ds over (0, 1/log(e + 1)]
        let m1 = k.radial_moment(0, 1, 0.0, 1.0) / c;
        let oracle = 2.0 * PI * crate::vmeasure::quadrature::integrate_panels(
            |s| 1.0 + E / ((1.0 / s).exp() - E),
            1e-9,
            1.0 / (E + 1.0).ln(),
            200,
            16,
        );
        assert!((m1 - oracle).abs() < 1e-8 * oracle, "{m1} {oracle}");
    }

    #[test]
    fn truncation_and_renormalisation() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        let k = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let n = Vector::new2(1.0, 0.0);
        let km = k.truncate(1.0).unwrap();
        assert!(km.column_mass(n, n, n) < 1.0);
        for r in [0.1, 0.5, 1.5] {
            assert!(km.radial_value(0, r) <= k.radial_value(0, r));
        }
        let (b, kn) = k.lowspeed_renormalize(2.0).unwrap();
        assert!(b[0] < 1.0 && b[0] > 0.5);
        assert!((kn.column_mass(n, n, n) - 1.0).abs() < 1e-10);
        let (b, _) = k.lowspeed_renormalize(20.0).unwrap();
        assert!((b[0] - 1.0).abs() < 1e-12);
    }
}
