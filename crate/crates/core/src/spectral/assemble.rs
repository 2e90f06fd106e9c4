use super::grid::{Piece, TraceGrid};
use super::operator::{SparseMatrix, TraceOperator};
use crate::boundary::{PartlyDiffuseBoundary, ReflectionLaw};
use crate::geometry::{BoundaryChart, Curve, Direction, Side, Vector};
use crate::vmeasure::SpeedBin;
use crate::{Error, Result};
use rayon::prelude::*;
use std::ops::Range;

/// Tolerated fraction of `mu`-mass whose flow image finds no outgoing cell.
pub const LOST_MASS_TOL: f64 = 1e-6;

/// Ballistic transfer `M_lambda` from `Gamma_-` cells to `Gamma_+` cells.
///
/// Entries are stored per site (the flow fixes the velocity) and replicated over
/// speed bins; for `lambda > 0` each entry carries a per-bin damping factor
/// `e^{-lambda tau}` averaged over the bin's radial nodes.
#[derive(Clone, Debug)]
pub struct TransferOperator {
    n_bins: usize,
    n_plus: usize,
    n_minus: usize,
    row_ptr: Vec<usize>,
    col: Vec<usize>,
    frac: Vec<f64>,
    damp: Vec<f64>,
    lambda: f64,
    /// `mu`-weighted mean chord length per `Gamma_-` slot.
    pub mean_chord: Vec<f64>,
    /// Fraction of `mu`-mass deposited into a neighbouring cell after landing in a
    /// grazing-excluded sliver.
    pub redirected: f64,
    /// Fraction of `mu`-mass whose image found no outgoing cell.
    pub lost: f64,
}

/// A bundle of characteristics from an incoming site part to an outgoing one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Position-and-direction `mu`-weight carried.
    pub w: f64,
    /// Entry point and direction of a representative characteristic.
    pub z: Vector,
    pub omega: Vector,
    pub chord: f64,
}

/// Characteristics of the incoming grid with their landing sites, plus the
/// redirected and lost `mu`-fractions.
#[derive(Clone, Debug, Default)]
pub struct Lines {
    pub lines: Vec<Line>,
    pub redirected: f64,
    pub lost: f64,
}

fn s_inverse(curve: &Curve, perp: Vector, pc: &Piece, s: f64) -> f64 {
    let (mut lo, mut hi) = (pc.t0, pc.t1);
    let up = pc.s1 > pc.s0;
    for _ in 0..56 {
        let m = 0.5 * (lo + hi);
        if (perp.dot(&curve.point(m)) < s) == up {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

/// Exact transfer in line coordinates: for a fixed direction `mu = ds`, and the flow
/// preserves `s`, so incoming and outgoing pieces exchange the measure of their
/// overlap in `s`, paired in order along each line.
fn lines_2d(grid: &TraceGrid) -> Lines {
    let curves: Vec<Curve> = grid
        .domain()
        .charts()
        .into_iter()
        .filter_map(|c| match c {
            BoundaryChart::Curve(cv) => Some(cv),
            BoundaryChart::Sphere { .. } => None,
        })
        .collect();
    let nd = grid.n_dirs();
    let per_dir: Vec<(Vec<Line>, f64)> = grid
        .pieces()
        .par_iter()
        .map(|pieces| {
            let mut out = Vec::new();
            let mut lost = 0.0;
            let Some(first) = pieces.first() else { return (out, lost) };
            let omega = first.omega;
            let a = first.weight;
            let perp = Vector::new2(-omega.y(), omega.x());
            let mut cuts: Vec<f64> = pieces.iter().flat_map(|p| [p.s0, p.s1]).collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-14);
            let mut order: Vec<usize> = (0..pieces.len()).collect();
            order.sort_by(|&i, &k| pieces[i].s_range().0.total_cmp(&pieces[k].s_range().0));
            let mut start = 0;
            for w in cuts.windows(2) {
                let (sa, sb) = (w[0], w[1]);
                let sm = 0.5 * (sa + sb);
                while start < order.len() && pieces[order[start]].s_range().1 <= sa {
                    start += 1;
                }
                let mut hits: Vec<(f64, usize, Vector)> = order[start..]
                    .iter()
                    .take_while(|&&i| pieces[i].s_range().0 < sm)
                    .filter(|&&i| {
                        let (lo, hi) = pieces[i].s_range();
                        lo < sm && sm < hi
                    })
                    .map(|&i| {
                        let pc = &pieces[i];
                        let curve = &curves[grid.patches[pc.site / nd].component];
                        let x = curve.point(s_inverse(curve, perp, pc, sm));
                        (omega.dot(&x), i, x)
                    })
                    .collect();
                hits.sort_by(|x, y| x.0.total_cmp(&y.0));
                let mut k = 0;
                while k < hits.len() {
                    let pin = &pieces[hits[k].1];
                    if pin.side != Side::Incoming {
                        k += 1;
                        continue;
                    }
                    match hits.get(k + 1).filter(|h| pieces[h.1].side == Side::Outgoing) {
                        Some(h) => {
                            out.push(Line {
                                from: pin.site,
                                to: pieces[h.1].site,
                                w: a * (sb - sa),
                                z: hits[k].2,
                                omega,
                                chord: h.0 - hits[k].0,
                            });
                            k += 2;
                        }
                        None => {
                            lost += a * (sb - sa);
                            k += 1;
                        }
                    }
                }
            }
            (out, lost)
        })
        .collect();
    let total: f64 = grid.minus_sites().iter().map(|&s| grid.site_mu(Side::Incoming, s)).sum();
    let lost = per_dir.iter().map(|p| p.1).sum::<f64>() / total;
    Lines { lines: per_dir.into_iter().flat_map(|p| p.0).collect(), redirected: 0.0, lost }
}

/// Sub-sample deposition through the ballistic flow.
fn lines_sampled(grid: &TraceGrid) -> Result<Lines> {
    let dom = grid.domain();
    let per_site: Vec<(Vec<Line>, f64, f64)> = grid
        .minus_sites()
        .par_iter()
        .map(|&site| {
            let (_, j) = grid.site_parts(site);
            let mut out = Vec::new();
            let (mut moved, mut lost) = (0.0, 0.0);
            for s in grid.samples(Side::Incoming, site) {
                let l = dom.exit_time(s.x, s.omega, Direction::Forward)?;
                let z = s.x + s.omega * l;
                match grid.site_on_side_by_patch(grid.locate_patch(z), j, Side::Outgoing) {
                    Some((t, m)) => {
                        if m {
                            moved += s.w;
                        }
                        out.push(Line { from: site, to: t, w: s.w, z: s.x, omega: s.omega, chord: l });
                    }
                    None => lost += s.w,
                }
            }
            Ok((out, moved, lost))
        })
        .collect::<Result<_>>()?;
    let total: f64 = grid.minus_sites().iter().map(|&s| grid.site_mu(Side::Incoming, s)).sum();
    Ok(Lines {
        redirected: per_site.iter().map(|p| p.1).sum::<f64>() / total,
        lost: per_site.iter().map(|p| p.2).sum::<f64>() / total,
        lines: per_site.into_iter().flat_map(|p| p.0).collect(),
    })
}

impl Lines {
    /// Exact line transfer in d = 2, sub-sample deposition in d = 3.
    pub fn new(grid: &TraceGrid) -> Result<Self> {
        let lines = if grid.pieces().is_empty() { lines_sampled(grid)? } else { lines_2d(grid) };
        if lines.lost > LOST_MASS_TOL {
            return Err(Error::LostMass { fraction: lines.lost });
        }
        Ok(lines)
    }
}

impl TransferOperator {
    /// `M_0` from freshly traced characteristics.
    pub fn m0(grid: &TraceGrid) -> Result<Self> {
        Self::from_lines(grid, &Lines::new(grid)?, 0.0)
    }

    /// `M_lambda` with damping `e^{-lambda tau_+}` for `lambda > 0`.
    pub fn m_lambda(grid: &TraceGrid, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("lambda must be positive, got {lambda}")));
        }
        Self::from_lines(grid, &Lines::new(grid)?, lambda)
    }

    pub fn from_lines(grid: &TraceGrid, lines: &Lines, lambda: f64) -> Result<Self> {
        let nb = grid.n_bins();
        let n_rows = grid.plus_sites().len();
        let n_cols = grid.minus_sites().len();
        let mut col_mass = vec![0.0; n_cols];
        for l in &lines.lines {
            col_mass[grid.slot(Side::Incoming, l.from)] += l.w;
        }
        let mut mean_chord = vec![0.0; n_cols];
        let mut triplets: Vec<(usize, usize, f64, f64)> = lines
            .lines
            .iter()
            .map(|l| {
                let c = grid.slot(Side::Incoming, l.from);
                let f = l.w / col_mass[c];
                mean_chord[c] += f * l.chord;
                (grid.slot(Side::Outgoing, l.to), c, f, l.chord)
            })
            .collect();
        triplets.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        if lambda == 0.0 {
            let mut merged: Vec<(usize, usize, f64, f64)> = Vec::with_capacity(triplets.len());
            for t in triplets {
                match merged.last_mut() {
                    Some(m) if m.0 == t.0 && m.1 == t.1 => m.2 += t.2,
                    _ => merged.push(t),
                }
            }
            triplets = merged;
        }
        let mut row_ptr = vec![0; n_rows + 1];
        for t in &triplets {
            row_ptr[t.0 + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let damp = if lambda > 0.0 {
            triplets.iter().flat_map(|t| grid.bins.iter().map(move |b| damping(b, lambda, t.3))).collect()
        } else {
            Vec::new()
        };
        Ok(TransferOperator {
            n_bins: nb,
            n_plus: n_rows * nb,
            n_minus: n_cols * nb,
            row_ptr,
            col: triplets.iter().map(|t| t.1).collect(),
            frac: triplets.iter().map(|t| t.2).collect(),
            damp,
            lambda,
            mean_chord,
            redirected: lines.redirected,
            lost: lines.lost,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn factor(&self, e: usize, b: usize) -> f64 {
        if self.damp.is_empty() {
            self.frac[e]
        } else {
            self.frac[e] * self.damp[e * self.n_bins + b]
        }
    }
}

impl TraceOperator for TransferOperator {
    fn rows(&self) -> usize {
        self.n_plus
    }

    fn cols(&self) -> usize {
        self.n_minus
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let nb = self.n_bins;
        y.par_chunks_mut(nb * 64).enumerate().for_each(|(k, chunk)| {
            for (i, row) in chunk.chunks_mut(nb).enumerate() {
                let r = k * 64 + i;
                row.iter_mut().for_each(|v| *v = 0.0);
                for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                    let c = self.col[e];
                    for (b, yb) in row.iter_mut().enumerate() {
                        *yb += self.factor(e, b) * x[c * nb + b];
                    }
                }
            }
        });
    }

    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        let nb = self.n_bins;
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..self.row_ptr.len() - 1 {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col[e];
                for b in 0..nb {
                    y[c * nb + b] += self.factor(e, b) * x[r * nb + b];
                }
            }
        }
    }

    fn for_each_entry(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        let nb = self.n_bins;
        for r in 0..self.row_ptr.len() - 1 {
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                for b in 0..nb {
                    f(r * nb + b, self.col[e] * nb + b, self.factor(e, b));
                }
            }
        }
    }

    fn nnz(&self) -> usize {
        self.frac.len() * self.n_bins
    }
}

/// `mu`-average of `e^{-lambda chord / rho}` over a speed bin.
pub fn damping(bin: &SpeedBin, lambda: f64, chord: f64) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for &(r, w) in &bin.nodes {
        num += w * r * (-lambda * chord / r).exp();
        den += w * r;
    }
    num / den
}

#[derive(Clone, Debug)]
enum DiffuseBlock {
    /// Outgoing-independent profile over the patch's `Gamma_-` cells.
    Separable(Vec<f64>),
    /// Row-major `minus x plus` block.
    Dense(Vec<f64>),
}

/// Matrix of `H = alpha R + (1 - alpha) K` from `Gamma_+` cells to `Gamma_-` cells.
#[derive(Clone, Debug)]
pub struct BoundaryMatrix {
    n_plus: usize,
    n_minus: usize,
    alpha: Vec<f64>,
    reflection: SparseMatrix,
    plus_ranges: Vec<Range<usize>>,
    minus_ranges: Vec<Range<usize>>,
    diffuse: Vec<DiffuseBlock>,
    /// Fraction of reflected `mu`-mass moved off a grazing sliver.
    pub redirected: f64,
    /// Largest deviation of a raw diffuse column mass from one before renormalisation.
    pub diffuse_deficit: f64,
}

/// Upper limit on stored dense diffuse entries.
pub const DENSE_LIMIT: usize = 50_000_000;

fn patch_ranges(grid: &TraceGrid, side: Side) -> Vec<Range<usize>> {
    let nb = grid.n_bins();
    let sites = grid.sites(side);
    let mut out = vec![0..0; grid.patches.len()];
    for (slot, &s) in sites.iter().enumerate() {
        let p = grid.site_parts(s).0;
        let r = &mut out[p];
        if ExactSizeIterator::len(r) == 0 {
            *r = slot * nb..(slot + 1) * nb;
        } else {
            r.end = (slot + 1) * nb;
        }
    }
    out
}

impl BoundaryMatrix {
    pub fn new(grid: &TraceGrid, h: &PartlyDiffuseBoundary) -> Result<Self> {
        let nb = grid.n_bins();
        let n_plus = grid.n_plus();
        let n_minus = grid.n_minus();
        let speed_preserving = matches!(h.reflection, ReflectionLaw::Specular | ReflectionLaw::BounceBack);
        let per_site: Vec<(Vec<(usize, usize, f64)>, f64)> = grid
            .plus_sites()
            .par_iter()
            .enumerate()
            .map(|(slot, &site)| {
                let (p, _) = grid.site_parts(site);
                let samples = grid.samples(Side::Outgoing, site);
                let total: f64 = samples.iter().map(|s| s.w).sum();
                let mut trip = Vec::new();
                let mut moved = 0.0;
                let bins: Vec<usize> = if speed_preserving { vec![0] } else { (0..nb).collect() };
                for &b in &bins {
                    let rho = grid.bins[b].mean;
                    for s in samples {
                        let v = h.reflection.apply(s.x, s.n, s.omega * rho);
                        let j = grid.locate_dir(v);
                        let bo = if speed_preserving {
                            b
                        } else {
                            grid.locate_bin(v.norm()).unwrap_or_else(|| nearest_bin(grid, v.norm()))
                        };
                        let Some((t, m)) = grid.site_on_side_by_dir(p, j, Side::Incoming) else { continue };
                        if m {
                            moved += s.w / total;
                        }
                        if speed_preserving {
                            for bb in 0..nb {
                                trip.push((grid.slot(Side::Incoming, t) * nb + bb, slot * nb + bb, s.w));
                            }
                        } else {
                            trip.push((grid.slot(Side::Incoming, t) * nb + bo, slot * nb + b, s.w));
                        }
                    }
                }
                if !speed_preserving {
                    moved /= nb as f64;
                }
                (trip, moved * grid.site_mu(Side::Outgoing, site))
            })
            .collect();
        let mu_total: f64 = grid.plus_sites().iter().map(|&s| grid.site_mu(Side::Outgoing, s)).sum();
        let redirected = per_site.iter().map(|p| p.1).sum::<f64>() / mu_total;
        let triplets: Vec<(usize, usize, f64)> = per_site.into_iter().flat_map(|p| p.0).collect();
        let mut reflection = SparseMatrix::from_triplets(n_minus, n_plus, &triplets)?;
        reflection.normalize_columns();

        let plus_ranges = patch_ranges(grid, Side::Outgoing);
        let minus_ranges = patch_ranges(grid, Side::Incoming);
        let mut alpha = vec![0.0; n_plus];
        for (p, r) in plus_ranges.iter().enumerate() {
            let a = h.alpha.at(grid.patches[p].center);
            alpha[r.clone()].iter_mut().for_each(|v| *v = a);
        }
        let kernel = &h.kernel;
        let mut diffuse = Vec::with_capacity(grid.patches.len());
        let mut deficit = 0.0f64;
        if kernel.is_radial() {
            for (p, r) in minus_ranges.iter().enumerate() {
                let kp = kernel.patch_of(grid.patches[p].center);
                let kbin: Vec<f64> = grid.bins.iter().map(|b| kernel.radial_moment(kp, 1, b.lo, b.hi)).collect();
                let mut prof: Vec<f64> = r.clone().map(|c| grid.site_mu(Side::Incoming, grid.cell_site(Side::Incoming, c)) * kbin[c % nb]).collect();
                let s: f64 = prof.iter().sum();
                if r.is_empty() {
                    diffuse.push(DiffuseBlock::Separable(prof));
                    continue;
                }
                if !(s > 0.0) {
                    return Err(Error::ZeroMass);
                }
                let area: f64 = grid.patches[p].area;
                deficit = deficit.max((s / area - 1.0).abs());
                prof.iter_mut().for_each(|v| *v /= s);
                diffuse.push(DiffuseBlock::Separable(prof));
            }
        } else {
            let size: usize = plus_ranges.iter().zip(&minus_ranges).map(|(a, b)| a.len() * b.len()).sum();
            if size > DENSE_LIMIT {
                return Err(Error::InvalidParameter(format!("dense diffuse blocks need {size} entries")));
            }
            let blocks: Vec<(DiffuseBlock, f64)> = (0..grid.patches.len())
                .into_par_iter()
                .map(|p| {
                    let (pr, mr) = (plus_ranges[p].clone(), minus_ranges[p].clone());
                    let x = grid.patches[p].center;
                    let mut block = vec![0.0; pr.len() * mr.len()];
                    let mut dev = 0.0f64;
                    for (ci, c) in pr.clone().enumerate() {
                        let (_, vout) = grid.representative(Side::Outgoing, c);
                        let mut s = 0.0;
                        for (mi, m) in mr.clone().enumerate() {
                            let (_, vin) = grid.representative(Side::Incoming, m);
                            let w = kernel.value(x, vin, vout) * grid.mu_weight(Side::Incoming, m);
                            block[mi * pr.len() + ci] = w;
                            s += w;
                        }
                        let area = grid.patches[p].area;
                        dev = dev.max((s / area - 1.0).abs());
                        if s > 0.0 {
                            for mi in 0..mr.len() {
                                block[mi * pr.len() + ci] /= s;
                            }
                        }
                    }
                    (DiffuseBlock::Dense(block), dev)
                })
                .collect();
            for (b, d) in blocks {
                deficit = deficit.max(d);
                diffuse.push(b);
            }
        }
        Ok(BoundaryMatrix { n_plus, n_minus, alpha, reflection, plus_ranges, minus_ranges, diffuse, redirected, diffuse_deficit: deficit })
    }

    pub fn reflection(&self) -> &SparseMatrix {
        &self.reflection
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

fn nearest_bin(grid: &TraceGrid, rho: f64) -> usize {
    (0..grid.n_bins())
        .min_by(|&a, &b| (grid.bins[a].mean - rho).abs().total_cmp(&(grid.bins[b].mean - rho).abs()))
        .unwrap_or(0)
}

impl TraceOperator for BoundaryMatrix {
    fn rows(&self) -> usize {
        self.n_minus
    }

    fn cols(&self) -> usize {
        self.n_plus
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let ax: Vec<f64> = x.iter().zip(&self.alpha).map(|(v, a)| v * a).collect();
        self.reflection.apply_into(&ax, y);
        for (p, block) in self.diffuse.iter().enumerate() {
            let (pr, mr) = (self.plus_ranges[p].clone(), self.minus_ranges[p].clone());
            match block {
                DiffuseBlock::Separable(prof) => {
                    let t: f64 = pr.map(|c| (1.0 - self.alpha[c]) * x[c]).sum();
                    if t != 0.0 {
                        for (m, w) in mr.zip(prof) {
                            y[m] += t * w;
                        }
                    }
                }
                DiffuseBlock::Dense(b) => {
                    let n = pr.len();
                    for (mi, m) in mr.enumerate() {
                        y[m] += pr.clone().enumerate().map(|(ci, c)| b[mi * n + ci] * (1.0 - self.alpha[c]) * x[c]).sum::<f64>();
                    }
                }
            }
        }
    }

    fn apply_transpose_into(&self, x: &[f64], y: &mut [f64]) {
        self.reflection.apply_transpose_into(x, y);
        y.iter_mut().zip(&self.alpha).for_each(|(v, a)| *v *= a);
        for (p, block) in self.diffuse.iter().enumerate() {
            let (pr, mr) = (self.plus_ranges[p].clone(), self.minus_ranges[p].clone());
            match block {
                DiffuseBlock::Separable(prof) => {
                    let t: f64 = mr.zip(prof).map(|(m, w)| x[m] * w).sum();
                    for c in pr {
                        y[c] += (1.0 - self.alpha[c]) * t;
                    }
                }
                DiffuseBlock::Dense(b) => {
                    let n = pr.len();
                    for (ci, c) in pr.enumerate() {
                        let t: f64 = mr.clone().enumerate().map(|(mi, m)| b[mi * n + ci] * x[m]).sum();
                        y[c] += (1.0 - self.alpha[c]) * t;
                    }
                }
            }
        }
    }

    fn for_each_entry(&self, f: &mut dyn FnMut(usize, usize, f64)) {
        self.reflection.for_each_entry(&mut |r, c, v| {
            if self.alpha[c] > 0.0 {
                f(r, c, v * self.alpha[c])
            }
        });
        for (p, block) in self.diffuse.iter().enumerate() {
            let (pr, mr) = (self.plus_ranges[p].clone(), self.minus_ranges[p].clone());
            let n = pr.len();
            for (ci, c) in pr.enumerate() {
                let a = 1.0 - self.alpha[c];
                if a == 0.0 {
                    continue;
                }
                for (mi, m) in mr.clone().enumerate() {
                    let w = match block {
                        DiffuseBlock::Separable(prof) => prof[mi],
                        DiffuseBlock::Dense(b) => b[mi * n + ci],
                    };
                    if w > 0.0 {
                        f(m, c, a * w);
                    }
                }
            }
        }
    }

    fn nnz(&self) -> usize {
        let refl = if self.alpha.iter().any(|a| *a > 0.0) { self.reflection.nnz() } else { 0 };
        let diff: usize = self
            .plus_ranges
            .iter()
            .zip(&self.minus_ranges)
            .map(|(a, b)| if a.clone().any(|c| self.alpha[c] < 1.0) { a.len() * b.len() } else { 0 })
            .sum();
        refl + diff
    }
}
