use super::{DiffuseKernel, PartlyDiffuseBoundary, ReflectionLaw};
use crate::geometry::{BoundaryChart, Direction, Domain, Vector};
use crate::vmeasure::{direction_quadrature, half_cosine_moment, uniform_direction};
use crate::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub beta_inf: f64,
    pub beta_sup: f64,
    pub oscillation: f64,
    /// `(1 + osc beta)^2 - sup beta^2`, an upper bound for `r_ess((M0 H)^2)`.
    pub bound: f64,
    /// `1 + sup beta - sqrt(1 + sup beta^2)`.
    pub threshold: f64,
    /// `inf beta > threshold`.
    pub predicate: bool,
}

/// Oscillation criterion on tabulated values of `beta = 1 - alpha`.
pub fn oscillation_predicate(betas: &[f64]) -> OscillationReport {
    let beta_inf = betas.iter().copied().fold(f64::INFINITY, f64::min);
    let beta_sup = betas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let oscillation = beta_sup - beta_inf;
    let bound = (1.0 + oscillation).powi(2) - beta_sup * beta_sup;
    let threshold = 1.0 + beta_sup - (1.0 + beta_sup * beta_sup).sqrt();
    OscillationReport { beta_inf, beta_sup, oscillation, bound, threshold, predicate: beta_inf > threshold }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl Verdict {
    /// Name used for the additional condition.
    pub fn finiteness(&self) -> &'static str {
        match self {
            Verdict::Convergent => "finite",
            Verdict::Divergent => "divergent",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

/// Divergent if the last value at least doubles the one two refinements earlier or the
/// last three increments are positive and non-shrinking, convergent if the last two
/// values agree to `1e-4` relative.
pub fn trend_verdict(values: &[f64]) -> Verdict {
    let n = values.len();
    if n < 2 || values.iter().any(|v| !v.is_finite()) {
        return if values.iter().any(|v| v.is_infinite()) { Verdict::Divergent } else { Verdict::Inconclusive };
    }
    let last = values[n - 1];
    if n >= 3 && last >= 2.0 * values[n - 3] && last > 0.0 {
        return Verdict::Divergent;
    }
    if n >= 4 {
        let d: Vec<f64> = values[n - 4..].windows(2).map(|w| w[1] - w[0]).collect();
        if d[0] > 1e-3 * last.abs() && d[1] >= d[0] && d[2] >= d[1] {
            return Verdict::Divergent;
        }
    }
    if (last - values[n - 2]).abs() <= 1e-4 * last.abs() {
        return Verdict::Convergent;
    }
    Verdict::Inconclusive
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub floors: Vec<f64>,
    pub values: Vec<f64>,
    pub verdict: Verdict,
}

/// `(1/|S|) int_{Gamma_-(x)} t_+(x, omega) |omega.n| sigma(d omega)`.
fn angular_exit_factor(domain: &Domain, x: Vector, n: Vector) -> Result<f64> {
    let dirs = direction_quadrature(domain.dimension(), if domain.dimension() == 2 { 2048 } else { 64 });
    let mut s = 0.0;
    for (o, a) in dirs {
        let c = o.dot(&n);
        if c < 0.0 {
            s += a * (-c) * domain.exit_time(x, o, Direction::Forward)?;
        }
    }
    Ok(s)
}

/// Trend of `int_{Gamma_-(x), |v| >= 2^-j} k(x, v, v') tau_+(x, v) mu_x(dv)` over the levels `j`.
pub fn sweeping_divergence_probe(
    kernel: &DiffuseKernel,
    domain: &Domain,
    x: Vector,
    v_out: Vector,
    levels: &[u32],
) -> Result<DivergenceReport> {
    let n = domain.normal(x)?;
    let floors: Vec<f64> = levels.iter().map(|&j| 2f64.powi(-(j as i32))).collect();
    let values = if kernel.is_radial() {
        let a = angular_exit_factor(domain, x, n)?;
        let p = kernel.patch_of(x);
        floors
            .iter()
            .map(|&f| a * kernel.radial_moment(p, 0, f, f64::INFINITY))
            .collect()
    } else {
        let dirs = direction_quadrature(domain.dimension(), if domain.dimension() == 2 { 512 } else { 32 });
        let mut vals = Vec::new();
        for &f in &floors {
            let nodes = kernel.measure().radial_nodes(f, f64::INFINITY, 32);
            let mut s = 0.0;
            for (o, a) in &dirs {
                let c = o.dot(&n);
                if c >= 0.0 {
                    continue;
                }
                let t = domain.exit_time(x, *o, Direction::Forward)?;
                for &(r, w) in &nodes {
                    s += w * a * (-c) * t * kernel.value(x, *o * r, v_out);
                }
            }
            vals.push(s);
        }
        vals
    };
    let verdict = trend_verdict(&values);
    Ok(DivergenceReport { floors, values, verdict })
}

/// Trend of `int k |v|^-1 dmu_x` (range of `K` in the weighted trace space) for a radial kernel.
pub fn additional_condition_radial(kernel: &DiffuseKernel, patch: usize, levels: &[u32]) -> DivergenceReport {
    let h = half_cosine_moment(kernel.measure().dimension());
    let floors: Vec<f64> = levels.iter().map(|&j| 2f64.powi(-(j as i32))).collect();
    let values: Vec<f64> = floors
        .iter()
        .map(|&f| h * kernel.radial_moment(patch, 0, f, f64::INFINITY))
        .collect();
    let verdict = trend_verdict(&values);
    DivergenceReport { floors, values, verdict }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusenessReport {
    pub probes: usize,
    pub wld_fraction: f64,
    pub sld_fraction: f64,
    pub positivity_rate: f64,
    pub wld: bool,
    pub sld: bool,
    /// Kernel positive on every sampled pair (the irreducibility criterion).
    pub positive: bool,
}

fn random_boundary_point<R: Rng>(domain: &Domain, rng: &mut R) -> Vector {
    let charts = domain.charts();
    let c = &charts[rng.random_range(0..charts.len())];
    match c {
        BoundaryChart::Curve(curve) => curve.point(std::f64::consts::TAU * rng.random::<f64>()),
        BoundaryChart::Sphere { radius } => uniform_direction(3, rng) * *radius,
    }
}

fn half_space_velocity<R: Rng>(n: Vector, sign: f64, lo: f64, hi: f64, d: usize, rng: &mut R) -> Vector {
    loop {
        let o = uniform_direction(d, rng);
        if sign * o.dot(&n) > 0.05 {
            return o * (lo + (hi - lo) * rng.random::<f64>());
        }
    }
}

fn ball_sample<R: Rng>(center: Vector, radius: f64, d: usize, rng: &mut R) -> Vector {
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center + uniform_direction(d, rng) * r
}

/// Searches for WLD/SLD balls at random `(x, v'_0)` and records the positivity rate of `k`.
pub fn diffuseness_probe(kernel: &DiffuseKernel, domain: &Domain, probes: usize, seed: u64) -> Result<DiffusenessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domain.dimension();
    let (lo, hi) = kernel.measure().speed_range();
    let lo = lo.max(1e-3 * hi);
    let deltas = [0.1, 0.05, 0.02, 0.01];
    let pairs = 32;
    let (mut wld_hits, mut sld_hits, mut pos, mut tot) = (0usize, 0usize, 0usize, 0usize);
    let in_support = |v: Vector| {
        let s = v.norm();
        s >= lo && s <= hi
    };
    for _ in 0..probes {
        let x = random_boundary_point(domain, &mut rng);
        let n = domain.normal(x)?;
        let vp0 = half_space_velocity(n, 1.0, lo, hi, d, &mut rng);
        for _ in 0..pairs {
            let v = half_space_velocity(n, -1.0, lo, hi, d, &mut rng);
            let vp = half_space_velocity(n, 1.0, lo, hi, d, &mut rng);
            tot += 1;
            if kernel.value(x, v, vp) > 0.0 {
                pos += 1;
            }
        }
        let candidates: Vec<Vector> = (0..24).map(|_| half_space_velocity(n, -1.0, lo, hi, d, &mut rng)).collect();
        let (mut wld, mut sld) = (false, false);
        'search: for &delta in &deltas {
            let radius = delta * hi;
            for &v0 in &candidates {
                let (mut all_pos, mut all_big, mut tested) = (true, true, 0);
                for _ in 0..4 * pairs {
                    let v = ball_sample(v0, radius, d, &mut rng);
                    let vp = ball_sample(vp0, radius, d, &mut rng);
                    if v.dot(&n) >= 0.0 || vp.dot(&n) <= 0.0 || !in_support(v) || !in_support(vp) {
                        continue;
                    }
                    tested += 1;
                    let k = kernel.value(x, v, vp);
                    all_pos &= k > 0.0;
                    all_big &= k >= delta;
                    if tested == pairs {
                        break;
                    }
                }
                if tested == 0 {
                    continue;
                }
                wld |= all_pos;
                sld |= all_big;
                if sld {
                    break 'search;
                }
            }
        }
        wld_hits += usize::from(wld);
        sld_hits += usize::from(sld);
    }
    let p = probes.max(1) as f64;
    Ok(DiffusenessReport {
        probes,
        wld_fraction: wld_hits as f64 / p,
        sld_fraction: sld_hits as f64 / p,
        positivity_rate: pos as f64 / tot.max(1) as f64,
        wld: wld_hits == probes,
        sld: sld_hits == probes,
        positive: pos == tot,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// Range of `K` inside the `|v|^-1`-weighted trace space.
    pub range_k_weighted: Verdict,
    /// Reflection preserves speed, hence the weighted trace spaces.
    pub reflection_preserves_speed: bool,
    pub oscillation: OscillationReport,
}

/// Runtime checks of the standing regularity assumptions on `H`.
pub fn hypothesis_checks(h: &PartlyDiffuseBoundary, domain: &Domain, levels: &[u32]) -> Result<HypothesisReport> {
    let range = if h.kernel.is_radial() {
        let verdicts: Vec<Verdict> = (0..h.kernel.patch_count())
            .map(|p| additional_condition_radial(&h.kernel, p, levels).verdict)
            .collect();
        if verdicts.contains(&Verdict::Divergent) {
            Verdict::Divergent
        } else if verdicts.iter().all(|v| *v == Verdict::Convergent) {
            Verdict::Convergent
        } else {
            Verdict::Inconclusive
        }
    } else {
        Verdict::Inconclusive
    };
    let preserves = match &h.reflection {
        ReflectionLaw::Specular | ReflectionLaw::BounceBack => true,
        ReflectionLaw::Custom(f) => {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut ok = true;
            for _ in 0..256 {
                let x = random_boundary_point(domain, &mut rng);
                let n = domain.normal(x)?;
                let v = half_space_velocity(n, 1.0, 0.1, 1.0, domain.dimension(), &mut rng);
                let w = f(x, n, v);
                ok &= (w.norm() - v.norm()).abs() <= 1e-12 * v.norm() && w.dot(&n) <= 0.0;
            }
            ok
        }
    };
    let betas = sample_betas(h, domain, 512);
    Ok(HypothesisReport { range_k_weighted: range, reflection_preserves_speed: preserves, oscillation: oscillation_predicate(&betas) })
}

/// `beta = 1 - alpha` on an equally spaced boundary sample.
pub fn sample_betas(h: &PartlyDiffuseBoundary, domain: &Domain, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for c in domain.charts() {
        match c {
            BoundaryChart::Curve(curve) => {
                for k in 0..n {
                    let x = curve.point(std::f64::consts::TAU * (k as f64 + 0.5) / n as f64);
                    out.push(1.0 - h.alpha.at(x));
                }
            }
            BoundaryChart::Sphere { radius } => {
                for (o, _) in direction_quadrature(3, 32) {
                    out.push(1.0 - h.alpha.at(o * radius));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{AlphaField, KernelSpec};
    use crate::vmeasure::VelocityMeasure;
    use std::sync::Arc;

    #[test]
    fn oscillation_cases() {
        let r = oscillation_predicate(&[0.3, 0.3]);
        assert!(r.predicate && (r.bound - 0.91).abs() < 1e-15);
        let r = oscillation_predicate(&[1.0]);
        assert!(r.predicate && r.bound.abs() < 1e-15);
        let r = oscillation_predicate(&[0.1, 0.5, 0.9]);
        assert!(!r.predicate && (r.threshold - 0.5546).abs() < 1e-4);
    }

    #[test]
    fn verdict_rules() {
        assert_eq!(trend_verdict(&[1.0, 2.0, 4.0]), Verdict::Divergent);
        assert_eq!(trend_verdict(&[1.0, 1.5, 1.50001]), Verdict::Convergent);
        assert_eq!(trend_verdict(&[1.0, 1.2, 1.3]), Verdict::Inconclusive);
        assert_eq!(trend_verdict(&[1.0, 1.5, 2.0, 2.5]), Verdict::Divergent);
        assert_eq!(trend_verdict(&[1.0, 1.5, 1.75, 1.875]), Verdict::Inconclusive);
    }

    #[test]
    fn divergence_probe_on_disk() {
        let disk = Domain::unit_disk();
        let x = Vector::new2(1.0, 0.0);
        let levels: Vec<u32> = (1..=12).map(|j| 4 * j).collect();
        let m = VelocityMeasure::lebesgue_annulus(2, 0.0, 4.0).unwrap();
        let heavy = DiffuseKernel::heavy_low_speed(&m, 3.0, 2.0).unwrap();
        let r = sweeping_divergence_probe(&heavy, &disk, x, x, &levels).unwrap();
        assert_eq!(r.verdict, Verdict::Divergent);
        let maxwell = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let r = sweeping_divergence_probe(&maxwell, &disk, x, x, &levels).unwrap();
        assert_eq!(r.verdict, Verdict::Convergent);
        let single = VelocityMeasure::single_speed(2, 1.0, 1.0).unwrap();
        let k = DiffuseKernel::new(KernelSpec::Tabulated { speeds: vec![0.5, 1.5], values: vec![1.0, 1.0] }, &single).unwrap();
        let r = sweeping_divergence_probe(&k, &disk, x, x, &levels).unwrap();
        assert_eq!(r.verdict, Verdict::Convergent);
    }

    #[test]
    fn diffuseness() {
        let disk = Domain::unit_disk();
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        let k = DiffuseKernel::maxwell(&m, 1.0).unwrap();
        let r = diffuseness_probe(&k, &disk, 40, 1).unwrap();
        assert!(r.wld && r.sld && r.positive);
        let half = DiffuseKernel::custom(&m, Arc::new(|_, _, vp: Vector| if vp.y() > 0.0 { 0.0 } else { 1.0 }));
        let r = diffuseness_probe(&half, &disk, 200, 2).unwrap();
        assert!(!r.wld && r.wld_fraction > 0.3 && r.wld_fraction < 0.7);
        let unit = VelocityMeasure::lebesgue_annulus(2, 0.0, 1.0).unwrap();
        let heavy = DiffuseKernel::heavy_low_speed(&unit, 3.0, 2.0).unwrap();
        assert_eq!(diffuseness_probe(&heavy, &disk, 40, 3).unwrap().positivity_rate, 1.0);
    }

    #[test]
    fn hypothesis_report() {
        let disk = Domain::unit_disk();
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        let h = PartlyDiffuseBoundary::new(
            AlphaField::TwoPatch { upper: 0.1, lower: 0.9 },
            ReflectionLaw::Specular,
            DiffuseKernel::maxwell(&m, 1.0).unwrap(),
        )
        .unwrap();
        let r = hypothesis_checks(&h, &disk, &[2, 4, 6, 8]).unwrap();
        assert_eq!(r.range_k_weighted, Verdict::Convergent);
        assert!(r.reflection_preserves_speed);
        assert!(!r.oscillation.predicate);
    }
}
