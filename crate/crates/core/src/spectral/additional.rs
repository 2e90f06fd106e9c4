use super::assemble::{BoundaryMatrix, TransferOperator};
use super::eigen::{leading_eigenpair, PowerOptions};
use super::grid::{GridSpec, TraceGrid};
use super::operator::Composed;
use crate::boundary::{trend_verdict, DiffuseKernel, PartlyDiffuseBoundary, Verdict};
use crate::geometry::Domain;
use crate::vmeasure::Spacing;
use crate::{Error, Result};
use serde::Serialize;

/// `int_{Gamma_+} phi |v|^-1 dmu_+` for cell masses `phi` on `Gamma_+`.
pub fn inverse_speed_integral(grid: &TraceGrid, phi: &[f64]) -> f64 {
    let nb = grid.n_bins();
    phi.iter().enumerate().map(|(c, p)| p * grid.inverse_speed(c % nb)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdditionalCondition {
    pub floors: Vec<f64>,
    /// `int phi |v|^-1 dmu_+` with `phi` of unit mass, per floor.
    pub values: Vec<f64>,
    pub verdict: Verdict,
}

/// Grid used at speed floor `floor`: log-spaced speeds, at least two cells per octave.
pub fn floor_grid_spec(spec: &GridSpec, rho_max: f64, floor: f64) -> GridSpec {
    let octaves = (rho_max / floor).log2().ceil().max(1.0) as usize;
    GridSpec { speed_cells: spec.speed_cells.max(2 * octaves), speed_spacing: Spacing::Log, ..spec.clone() }
}

/// Recomputes the fixed point of `M0 H` with the velocity measure restricted to
/// `|v| >= 2^-j` for each level `j` and applies the trend rules to `int phi |v|^-1`.
pub fn additional_condition(
    domain: &Domain,
    boundary: &PartlyDiffuseBoundary,
    spec: &GridSpec,
    levels: &[u32],
    opts: &PowerOptions,
) -> Result<AdditionalCondition> {
    let measure = boundary.kernel.measure();
    let (rho_min, rho_max) = measure.speed_range();
    let mut floors = Vec::new();
    let mut values = Vec::new();
    for &j in levels {
        let floor = 2f64.powi(-(j as i32));
        if floor >= rho_max {
            return Err(Error::InvalidParameter(format!("speed floor {floor} above the support")));
        }
        let m = measure.with_speed_floor(floor)?;
        let kernel = match boundary.kernel.spec() {
            Some(k) => DiffuseKernel::new(k.clone(), &m)?,
            None => boundary.kernel.clone(),
        };
        let h = PartlyDiffuseBoundary::new(boundary.alpha.clone(), boundary.reflection.clone(), kernel)?;
        let grid = TraceGrid::new(domain, &m, &floor_grid_spec(spec, rho_max, floor.max(rho_min)))?;
        let m0 = TransferOperator::m0(&grid)?;
        let hm = BoundaryMatrix::new(&grid, &h)?;
        let r = leading_eigenpair(&Composed::new(&m0, &hm)?, opts)?;
        floors.push(floor);
        values.push(inverse_speed_integral(&grid, &r.phi));
    }
    let verdict = trend_verdict(&values);
    Ok(AdditionalCondition { floors, values, verdict })
}
