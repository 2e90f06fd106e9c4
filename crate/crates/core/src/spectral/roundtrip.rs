use super::grid::TraceGrid;
use super::operator::TraceOperator;
use crate::geometry::Side;
use crate::{Error, Result};

/// Wasserstein-1 distance between two profiles of equal mass on points of a circle of
/// length `period`, `positions` increasing in `[0, period)`.
pub fn circular_w1(positions: &[f64], period: f64, a: &[f64], b: &[f64]) -> f64 {
    let n = positions.len();
    if n < 2 {
        return 0.0;
    }
    let mut cum = Vec::with_capacity(n);
    let mut gaps = Vec::with_capacity(n);
    let mut f = 0.0;
    for k in 0..n {
        f += a[k] - b[k];
        cum.push(f);
        let next = if k + 1 < n { positions[k + 1] } else { positions[0] + period };
        gaps.push(next - positions[k]);
    }
    // weighted median of the cumulative differences
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| cum[i].total_cmp(&cum[j]));
    let half = 0.5 * gaps.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut shift = cum[order[n - 1]];
    for &i in &order {
        acc += gaps[i];
        if acc >= half {
            shift = cum[i];
            break;
        }
    }
    cum.iter().zip(&gaps).map(|(c, g)| (c - shift).abs() * g).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoundTrip {
    /// Largest per-class distance, as a fraction of the perimeter per unit mass.
    pub worst: f64,
    /// Mass-weighted mean of the same.
    pub mean: f64,
}

/// Compares `op f` with `f` class by class: for every `(direction, speed bin)` the
/// boundary profiles of both are normalised and their circular `W1` distance taken.
/// Planar domains with a connected boundary only.
pub fn round_trip_distance(grid: &TraceGrid, op: &dyn TraceOperator, f: &[f64]) -> Result<RoundTrip> {
    if grid.domain().dimension() != 2 || grid.patches.iter().any(|p| p.component != 0) {
        return Err(Error::InvalidParameter("round trip check needs a planar domain with one boundary curve".into()));
    }
    if op.rows() != grid.n_plus() || op.cols() != grid.n_plus() || f.len() != grid.n_plus() {
        return Err(Error::GridMismatch("round trip operator must act on Gamma_+".into()));
    }
    let g = op.apply(f);
    let (np, nd, nb) = (grid.patches.len(), grid.n_dirs(), grid.n_bins());
    let mut positions = Vec::with_capacity(np);
    let mut s = 0.0;
    for p in &grid.patches {
        positions.push(s + 0.5 * p.area);
        s += p.area;
    }
    let period = s;
    let positions: Vec<f64> = positions.iter().map(|x| x / period).collect();
    let mut a = vec![vec![0.0; np]; nd * nb];
    let mut b = vec![vec![0.0; np]; nd * nb];
    for c in 0..grid.n_plus() {
        let (p, j) = grid.site_parts(grid.cell_site(Side::Outgoing, c));
        let class = j * nb + c % nb;
        a[class][p] += f[c];
        b[class][p] += g[c];
    }
    let total: f64 = f.iter().sum();
    let (mut worst, mut mean) = (0.0f64, 0.0);
    for (x, y) in a.iter().zip(&b) {
        let (mx, my): (f64, f64) = (x.iter().sum(), y.iter().sum());
        if mx <= 1e-14 * total || my <= 0.0 {
            continue;
        }
        let xn: Vec<f64> = x.iter().map(|v| v / mx).collect();
        let yn: Vec<f64> = y.iter().map(|v| v / my).collect();
        let d = circular_w1(&positions, 1.0, &xn, &yn);
        worst = worst.max(d);
        mean += d * mx / total;
    }
    Ok(RoundTrip { worst, mean })
}
