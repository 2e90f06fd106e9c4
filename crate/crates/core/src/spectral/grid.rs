use crate::geometry::{BoundaryChart, Curve, Domain, Side, Vector};
use crate::vmeasure::{Spacing, SpeedBin, VelocityMeasure};
use crate::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// Resolution of a trace grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Patches per boundary component (d = 2) or on the sphere (d = 3).
    pub boundary_cells: usize,
    pub speed_cells: usize,
    /// Direction cells (d = 2: angles; d = 3: azimuths, with half as many polar bands).
    pub angle_cells: usize,
    /// Sub-samples per cell and parameter dimension.
    pub q: usize,
    pub speed_spacing: Spacing,
    /// Offset of the direction lattice as a fraction of a cell.
    pub angle_offset: f64,
    /// Radial Gauss-Legendre nodes per speed bin.
    pub speed_order: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            boundary_cells: 128,
            speed_cells: 16,
            angle_cells: 64,
            q: 4,
            speed_spacing: Spacing::Uniform,
            angle_offset: 0.125,
            speed_order: 8,
        }
    }
}

impl GridSpec {
    /// Doubles every resolution factor.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            boundary_cells: 2 * self.boundary_cells,
            speed_cells: 2 * self.speed_cells,
            angle_cells: 2 * self.angle_cells,
            ..self.clone()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubPoint {
    pub x: Vector,
    pub n: Vector,
    /// Surface measure carried by the sub-sample.
    pub w: f64,
}

/// A boundary cell with its sub-sample quadrature.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub component: usize,
    pub center: Vector,
    pub normal: Vector,
    pub area: f64,
    pub subs: Vec<SubPoint>,
}

/// A direction cell with normalised sphere weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DirCell {
    pub center: Vector,
    pub weight: f64,
    pub subs: Vec<(Vector, f64)>,
}

/// A `(x, omega)` sub-sample of a site: position, normal, direction and
/// weight `pi * sigma/|S| * |omega.n|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SiteSample {
    pub x: Vector,
    pub n: Vector,
    pub omega: Vector,
    pub w: f64,
}

/// A maximal arc of one patch on which a fixed sample direction keeps the sign of
/// `omega.n` (d = 2). `s` is the line coordinate `omega_perp . x`, monotone along
/// the piece, and `weight * |s1 - s0|` its `mu`-measure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece {
    pub site: usize,
    pub side: Side,
    pub t0: f64,
    pub t1: f64,
    pub s0: f64,
    pub s1: f64,
    pub weight: f64,
    pub omega: Vector,
}

impl Piece {
    pub fn mu(&self) -> f64 {
        self.weight * (self.s1 - self.s0).abs()
    }

    pub fn s_range(&self) -> (f64, f64) {
        (self.s0.min(self.s1), self.s0.max(self.s1))
    }
}

/// The part of a site lying on one side of the grazing set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SitePart {
    pub samples: Vec<SiteSample>,
    pub mu: f64,
    pub slot: Option<usize>,
    /// `mu`-weighted mean direction.
    pub direction: Vector,
}

#[derive(Clone, Debug, PartialEq)]
enum PatchLayout {
    Curves { breaks: Vec<Vec<f64>>, first: Vec<usize> },
    Sphere { radius: f64, nz: usize, nphi: usize },
}

#[derive(Clone, Debug, PartialEq)]
enum DirLayout {
    Circle { n: usize, offset: f64 },
    Sphere { nz: usize, nphi: usize, offset: f64 },
}

/// Discretisation of `Gamma_+` and `Gamma_-`: boundary patches x direction cells x speed bins.
///
/// A site is a `(patch, direction)` pair. Its outgoing and incoming parts are split
/// exactly at the grazing set (d = 2, per sample direction) or by sub-sample signs
/// (d = 3); each part with positive measure is a cell on its side. Cells on a side
/// are indexed by `slot * n_bins + bin`, slots ordered by site.
#[derive(Clone, Debug)]
pub struct TraceGrid {
    domain: Domain,
    measure: VelocityMeasure,
    spec: GridSpec,
    pub patches: Vec<Patch>,
    pub dirs: Vec<DirCell>,
    pub bins: Vec<SpeedBin>,
    /// `int_bin rho m0(drho)`.
    pub bin_moment: Vec<f64>,
    patch_layout: PatchLayout,
    dir_layout: DirLayout,
    plus: Vec<SitePart>,
    minus: Vec<SitePart>,
    plus_sites: Vec<usize>,
    minus_sites: Vec<usize>,
    pieces: Vec<Vec<Piece>>,
}

fn centers(lo: f64, hi: f64, q: usize) -> impl Iterator<Item = f64> {
    (0..q).map(move |k| lo + (hi - lo) * (k as f64 + 0.5) / q as f64)
}

fn curve_normal(curve: &Curve, t: f64) -> Vector {
    let v = curve.velocity(t);
    let n = Vector::new2(v.y(), -v.x()).normalized();
    if curve.inward() {
        -n
    } else {
        n
    }
}

/// Pieces of every patch for one sample direction.
fn pieces_for(
    curves: &[Curve],
    breaks: &[Vec<f64>],
    first: &[usize],
    nd: usize,
    j: usize,
    omega: Vector,
    weight: f64,
) -> Vec<Piece> {
    let perp = Vector::new2(-omega.y(), omega.x());
    let mut out = Vec::new();
    const PROBES: usize = 16;
    for (c, curve) in curves.iter().enumerate() {
        let g = |t: f64| omega.dot(&curve_normal(curve, t));
        let b = &breaks[c];
        for k in 0..b.len() - 1 {
            let (t0, t1) = (b[k], b[k + 1]);
            let mut cuts = vec![t0];
            let mut prev = (t0, g(t0));
            for i in 1..=PROBES {
                let t = t0 + (t1 - t0) * i as f64 / PROBES as f64;
                let gt = g(t);
                if prev.1 * gt < 0.0 {
                    let (mut lo, mut hi) = (prev.0, t);
                    for _ in 0..60 {
                        let m = 0.5 * (lo + hi);
                        if g(m) * prev.1 > 0.0 {
                            lo = m;
                        } else {
                            hi = m;
                        }
                    }
                    cuts.push(0.5 * (lo + hi));
                }
                prev = (t, gt);
            }
            cuts.push(t1);
            for w in cuts.windows(2) {
                let (a, e) = (w[0], w[1]);
                let sign = g(0.5 * (a + e));
                let (s0, s1) = (perp.dot(&curve.point(a)), perp.dot(&curve.point(e)));
                if sign == 0.0 || (s1 - s0).abs() <= 1e-15 {
                    continue;
                }
                let side = if sign > 0.0 { Side::Outgoing } else { Side::Incoming };
                out.push(Piece { site: (first[c] + k) * nd + j, side, t0: a, t1: e, s0, s1, weight, omega });
            }
        }
    }
    out
}

impl TraceGrid {
    pub fn new(domain: &Domain, measure: &VelocityMeasure, spec: &GridSpec) -> Result<Self> {
        if domain.dimension() != measure.dimension() {
            return Err(Error::GridMismatch("domain and velocity measure dimensions differ".into()));
        }
        if spec.boundary_cells < 4 || spec.angle_cells < 4 || !spec.angle_cells.is_multiple_of(2) || spec.q == 0 || spec.speed_cells == 0 {
            return Err(Error::InvalidParameter(
                "grid needs >= 4 boundary cells, an even number (>= 4) of angle cells, q >= 1".into(),
            ));
        }
        let q = spec.q;
        let (patches, patch_layout) = build_patches(domain, spec.boundary_cells, q)?;
        let (dirs, dir_layout) = build_dirs(domain.dimension(), spec.angle_cells, spec.angle_offset, q);
        let bins = measure.speed_bins(spec.speed_cells, spec.speed_spacing, spec.speed_order);
        let bin_moment = bins.iter().map(|b| b.integrate(|r| r)).collect();
        let nd = dirs.len();
        let n_sites = patches.len() * nd;
        let mut plus = vec![SitePart::default(); n_sites];
        let mut minus = vec![SitePart::default(); n_sites];
        let mut pieces = Vec::new();
        match &patch_layout {
            PatchLayout::Curves { breaks, first } => {
                let curves: Vec<Curve> = domain
                    .charts()
                    .into_iter()
                    .map(|c| match c {
                        BoundaryChart::Curve(cv) => cv,
                        BoundaryChart::Sphere { .. } => unreachable!(),
                    })
                    .collect();
                let samples: Vec<(usize, Vector, f64)> = dirs
                    .iter()
                    .enumerate()
                    .flat_map(|(j, d)| d.subs.iter().map(move |&(o, a)| (j, o, a)))
                    .collect();
                pieces = samples
                    .par_iter()
                    .map(|&(j, o, a)| pieces_for(&curves, breaks, first, nd, j, o, a))
                    .collect();
                for list in &pieces {
                    for pc in list {
                        let part = match pc.side {
                            Side::Outgoing => &mut plus[pc.site],
                            _ => &mut minus[pc.site],
                        };
                        let curve = &curves[patches[pc.site / nd].component];
                        let perp = Vector::new2(-pc.omega.y(), pc.omega.x());
                        let h = (pc.t1 - pc.t0) / q as f64;
                        let mut s_prev = pc.s0;
                        for i in 0..q {
                            let t_hi = if i + 1 == q { pc.t1 } else { pc.t0 + (i + 1) as f64 * h };
                            let s_hi = if i + 1 == q { pc.s1 } else { perp.dot(&curve.point(t_hi)) };
                            let t = pc.t0 + (i as f64 + 0.5) * h;
                            let w = pc.weight * (s_hi - s_prev).abs();
                            s_prev = s_hi;
                            part.samples.push(SiteSample { x: curve.point(t), n: curve_normal(curve, t), omega: pc.omega, w });
                        }
                        part.mu += pc.mu();
                    }
                }
            }
            PatchLayout::Sphere { .. } => {
                let parts: Vec<(Vec<SiteSample>, Vec<SiteSample>)> = (0..n_sites)
                    .into_par_iter()
                    .map(|site| {
                        let (p, j) = (site / nd, site % nd);
                        let (mut out, mut inc) = (Vec::new(), Vec::new());
                        for sp in &patches[p].subs {
                            for &(o, a) in &dirs[j].subs {
                                let c = o.dot(&sp.n);
                                let smp = SiteSample { x: sp.x, n: sp.n, omega: o, w: sp.w * a * c.abs() };
                                if c > 0.0 {
                                    out.push(smp);
                                } else if c < 0.0 {
                                    inc.push(smp);
                                }
                            }
                        }
                        (out, inc)
                    })
                    .collect();
                for (site, (o, i)) in parts.into_iter().enumerate() {
                    plus[site].mu = o.iter().map(|s| s.w).sum();
                    plus[site].samples = o;
                    minus[site].mu = i.iter().map(|s| s.w).sum();
                    minus[site].samples = i;
                }
            }
        }
        let slots = |parts: &mut [SitePart]| {
            let mut list = Vec::new();
            for (site, part) in parts.iter_mut().enumerate() {
                if part.mu > 0.0 {
                    part.slot = Some(list.len());
                    list.push(site);
                    let d = part.samples.iter().fold(Vector::ZERO, |acc, s| acc + s.omega * s.w);
                    part.direction = if d.norm() > 0.0 { d.normalized() } else { dirs[site % nd].center };
                }
            }
            list
        };
        let plus_sites = slots(&mut plus);
        let minus_sites = slots(&mut minus);
        Ok(TraceGrid {
            domain: domain.clone(),
            measure: measure.clone(),
            spec: spec.clone(),
            patches,
            dirs,
            bins,
            bin_moment,
            patch_layout,
            dir_layout,
            plus,
            minus,
            plus_sites,
            minus_sites,
            pieces,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn measure(&self) -> &VelocityMeasure {
        &self.measure
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn n_dirs(&self) -> usize {
        self.dirs.len()
    }

    pub fn n_sites(&self) -> usize {
        self.plus.len()
    }

    /// Sites with an outgoing part, in slot order.
    pub fn plus_sites(&self) -> &[usize] {
        &self.plus_sites
    }

    /// Sites with an incoming part, in slot order.
    pub fn minus_sites(&self) -> &[usize] {
        &self.minus_sites
    }

    pub fn sites(&self, side: Side) -> &[usize] {
        match side {
            Side::Outgoing => &self.plus_sites,
            _ => &self.minus_sites,
        }
    }

    pub fn n_plus(&self) -> usize {
        self.plus_sites.len() * self.bins.len()
    }

    pub fn n_minus(&self) -> usize {
        self.minus_sites.len() * self.bins.len()
    }

    pub fn n_cells(&self, side: Side) -> usize {
        self.sites(side).len() * self.bins.len()
    }

    pub fn site(&self, patch: usize, dir: usize) -> usize {
        patch * self.dirs.len() + dir
    }

    pub fn site_parts(&self, site: usize) -> (usize, usize) {
        (site / self.dirs.len(), site % self.dirs.len())
    }

    pub fn part(&self, side: Side, site: usize) -> &SitePart {
        match side {
            Side::Outgoing => &self.plus[site],
            _ => &self.minus[site],
        }
    }

    pub fn has(&self, side: Side, site: usize) -> bool {
        self.part(side, site).slot.is_some()
    }

    /// Slot of a site part; panics if the part is empty.
    pub fn slot(&self, side: Side, site: usize) -> usize {
        self.part(side, site).slot.expect("empty site part")
    }

    pub fn samples(&self, side: Side, site: usize) -> &[SiteSample] {
        &self.part(side, site).samples
    }

    /// Position-and-direction part of the `mu`-weight of a site part.
    pub fn site_mu(&self, side: Side, site: usize) -> f64 {
        self.part(side, site).mu
    }

    /// Pieces per sample direction (empty in d = 3).
    pub fn pieces(&self) -> &[Vec<Piece>] {
        &self.pieces
    }

    /// Site of a cell index on a side.
    pub fn cell_site(&self, side: Side, cell: usize) -> usize {
        self.sites(side)[cell / self.bins.len()]
    }

    /// `mu`-weight of a cell on a side.
    pub fn mu_weight(&self, side: Side, cell: usize) -> f64 {
        self.site_mu(side, self.cell_site(side, cell)) * self.bin_moment[cell % self.bins.len()]
    }

    pub fn mu_weights(&self, side: Side) -> Vec<f64> {
        (0..self.n_cells(side)).map(|c| self.mu_weight(side, c)).collect()
    }

    /// Representative `(x_c, v_c)` of a cell: patch centre and the mean direction of the part.
    pub fn representative(&self, side: Side, cell: usize) -> (Vector, Vector) {
        let site = self.cell_site(side, cell);
        let b = &self.bins[cell % self.bins.len()];
        (self.patches[site / self.dirs.len()].center, self.part(side, site).direction * b.mean)
    }

    /// `int_bin m0 / int_bin rho m0`: mu-average of `1/|v|` over a bin.
    pub fn inverse_speed(&self, bin: usize) -> f64 {
        self.bins[bin].mass / self.bin_moment[bin]
    }

    pub fn locate_patch(&self, x: Vector) -> usize {
        match &self.patch_layout {
            PatchLayout::Curves { breaks, first } => {
                let c = self.domain.component_of(x);
                let BoundaryChart::Curve(curve) = &self.domain.charts()[c] else { unreachable!() };
                let t = curve.param_of(x);
                let b = &breaks[c];
                let k = b.partition_point(|&s| s <= t).clamp(1, b.len() - 1) - 1;
                first[c] + k
            }
            PatchLayout::Sphere { radius, nz, nphi } => {
                let z = (x.z() / radius).clamp(-1.0, 1.0);
                let iz = (((z + 1.0) * 0.5 * *nz as f64) as usize).min(nz - 1);
                let ip = ((x.angle() / TAU * *nphi as f64) as usize).min(nphi - 1);
                iz * nphi + ip
            }
        }
    }

    /// Direction cells as `(polar bands, azimuths)`; `(1, n)` in d = 2.
    pub fn dir_shape(&self) -> (usize, usize) {
        match &self.dir_layout {
            DirLayout::Circle { n, .. } => (1, *n),
            DirLayout::Sphere { nz, nphi, .. } => (*nz, *nphi),
        }
    }

    /// Maps `(u1, u2)` in the unit square to a direction of cell `j`, uniformly in its
    /// surface measure.
    pub fn direction_in_cell(&self, j: usize, u1: f64, u2: f64) -> Vector {
        match &self.dir_layout {
            DirLayout::Circle { n, offset } => Vector::polar((j as f64 + offset + u1) * TAU / *n as f64),
            DirLayout::Sphere { nz, nphi, offset } => {
                let (iz, ip) = (j / nphi, j % nphi);
                let z = -1.0 + 2.0 * (iz as f64 + u2) / *nz as f64;
                Vector::spherical(z, (ip as f64 + offset + u1) * TAU / *nphi as f64)
            }
        }
    }

    pub fn locate_dir(&self, omega: Vector) -> usize {
        match &self.dir_layout {
            DirLayout::Circle { n, offset } => {
                let a = omega.angle() / TAU * *n as f64 - offset;
                (a.floor() as i64).rem_euclid(*n as i64) as usize
            }
            DirLayout::Sphere { nz, nphi, offset } => {
                let z = (omega.z() / omega.norm()).clamp(-1.0, 1.0);
                let iz = (((z + 1.0) * 0.5 * *nz as f64) as usize).min(nz - 1);
                let a = omega.angle() / TAU * *nphi as f64 - offset;
                let ip = (a.floor() as i64).rem_euclid(*nphi as i64) as usize;
                iz * nphi + ip
            }
        }
    }

    pub fn locate_bin(&self, rho: f64) -> Option<usize> {
        if self.measure.is_atomic() {
            return self
                .bins
                .iter()
                .position(|b| (b.mean - rho).abs() <= 1e-9 * b.mean.max(1.0));
        }
        let k = self.bins.partition_point(|b| b.hi < rho);
        if k < self.bins.len() && rho >= self.bins[k].lo {
            Some(k)
        } else {
            None
        }
    }

    /// Patches of the same component ordered by distance along the component from `p`.
    pub fn patch_neighbours(&self, p: usize) -> Vec<usize> {
        match &self.patch_layout {
            PatchLayout::Curves { breaks, first } => {
                let c = self.patches[p].component;
                let n = breaks[c].len() - 1;
                let k = p - first[c];
                let mut out = Vec::with_capacity(n);
                for s in 1..=n / 2 {
                    out.push(first[c] + (k + s) % n);
                    out.push(first[c] + (k + n - s) % n);
                }
                out
            }
            PatchLayout::Sphere { .. } => {
                let c = self.patches[p].center;
                let mut idx: Vec<usize> = (0..self.patches.len()).filter(|&i| i != p).collect();
                idx.sort_by(|&a, &b| {
                    (self.patches[a].center - c).norm2().total_cmp(&(self.patches[b].center - c).norm2())
                });
                idx
            }
        }
    }

    /// Direction cells ordered by angular distance from `j`.
    pub fn dir_neighbours(&self, j: usize) -> Vec<usize> {
        let c = self.dirs[j].center;
        let mut idx: Vec<usize> = (0..self.dirs.len()).filter(|&i| i != j).collect();
        idx.sort_by(|&a, &b| self.dirs[b].center.dot(&c).total_cmp(&self.dirs[a].center.dot(&c)).then(a.cmp(&b)));
        idx
    }

    /// Site for `(patch, dir)` with a part on `side`, moving along the boundary if the
    /// direct site has none. Returns the site and whether it was redirected.
    pub fn site_on_side_by_patch(&self, p: usize, j: usize, side: Side) -> Option<(usize, bool)> {
        let s = self.site(p, j);
        if self.has(side, s) {
            return Some((s, false));
        }
        self.patch_neighbours(p)
            .into_iter()
            .map(|q| self.site(q, j))
            .find(|&s| self.has(side, s))
            .map(|s| (s, true))
    }

    /// Site for `(patch, dir)` with a part on `side`, moving to neighbouring directions.
    pub fn site_on_side_by_dir(&self, p: usize, j: usize, side: Side) -> Option<(usize, bool)> {
        let s = self.site(p, j);
        if self.has(side, s) {
            return Some((s, false));
        }
        self.dir_neighbours(j)
            .into_iter()
            .map(|k| self.site(p, k))
            .find(|&s| self.has(side, s))
            .map(|s| (s, true))
    }
}

fn build_patches(domain: &Domain, n: usize, q: usize) -> Result<(Vec<Patch>, PatchLayout)> {
    let charts = domain.charts();
    let mut patches = Vec::new();
    if let [BoundaryChart::Sphere { radius }] = charts.as_slice() {
        let r = *radius;
        let nz = ((n as f64 / 2.0).sqrt().round() as usize).max(2);
        let nphi = 2 * nz;
        for iz in 0..nz {
            let (z0, z1) = (-1.0 + 2.0 * iz as f64 / nz as f64, -1.0 + 2.0 * (iz + 1) as f64 / nz as f64);
            for ip in 0..nphi {
                let (p0, p1) = (TAU * ip as f64 / nphi as f64, TAU * (ip + 1) as f64 / nphi as f64);
                let area = r * r * (z1 - z0) * (p1 - p0);
                let mut subs = Vec::new();
                for z in centers(z0, z1, q) {
                    for ph in centers(p0, p1, q) {
                        let nrm = Vector::spherical(z, ph);
                        subs.push(SubPoint { x: nrm * r, n: nrm, w: area / (q * q) as f64 });
                    }
                }
                let c = Vector::spherical(0.5 * (z0 + z1), 0.5 * (p0 + p1));
                patches.push(Patch { component: 0, center: c * r, normal: c, area, subs });
            }
        }
        return Ok((patches, PatchLayout::Sphere { radius: r, nz, nphi }));
    }
    let lengths: Vec<f64> = charts
        .iter()
        .map(|c| match c {
            BoundaryChart::Curve(cv) => cv.length(),
            BoundaryChart::Sphere { .. } => 0.0,
        })
        .collect();
    let lmax = lengths.iter().copied().fold(0.0, f64::max);
    let (mut breaks, mut first) = (Vec::new(), Vec::new());
    for (ci, chart) in charts.iter().enumerate() {
        let BoundaryChart::Curve(curve) = chart else { unreachable!() };
        let nc = (((n as f64) * lengths[ci] / lmax).round() as usize).max(8);
        let nc = nc + nc % 2;
        let b = curve.partition(nc);
        first.push(patches.len());
        for k in 0..nc {
            let (t0, t1) = (b[k], b[k + 1]);
            let mut subs = Vec::new();
            let h = (t1 - t0) / q as f64;
            for s in 0..q {
                let (a, c) = (t0 + s as f64 * h, t0 + (s + 1) as f64 * h);
                let t = 0.5 * (a + c);
                let x = curve.point(t);
                subs.push(SubPoint { x, n: domain.normal(x)?, w: curve.arc_length(a, c) });
            }
            let area = subs.iter().map(|s| s.w).sum();
            let center = curve.point(0.5 * (t0 + t1));
            patches.push(Patch { component: ci, center, normal: domain.normal(center)?, area, subs });
        }
        breaks.push(b);
    }
    Ok((patches, PatchLayout::Curves { breaks, first }))
}

fn build_dirs(d: usize, n: usize, offset: f64, q: usize) -> (Vec<DirCell>, DirLayout) {
    if d == 2 {
        let h = TAU / n as f64;
        let cells = (0..n)
            .map(|j| {
                let lo = (j as f64 + offset) * h;
                DirCell {
                    center: Vector::polar(lo + 0.5 * h),
                    weight: 1.0 / n as f64,
                    subs: centers(lo, lo + h, q).map(|a| (Vector::polar(a), 1.0 / (n * q) as f64)).collect(),
                }
            })
            .collect();
        return (cells, DirLayout::Circle { n, offset });
    }
    let nphi = n;
    let nz = (n / 2).max(2);
    let h = TAU / nphi as f64;
    let mut cells = Vec::new();
    for iz in 0..nz {
        let (z0, z1) = (-1.0 + 2.0 * iz as f64 / nz as f64, -1.0 + 2.0 * (iz + 1) as f64 / nz as f64);
        for ip in 0..nphi {
            let lo = (ip as f64 + offset) * h;
            let w = 1.0 / (nz * nphi) as f64;
            let mut subs = Vec::new();
            for z in centers(z0, z1, q) {
                for a in centers(lo, lo + h, q) {
                    subs.push((Vector::spherical(z, a), w / (q * q) as f64));
                }
            }
            cells.push(DirCell { center: Vector::spherical(0.5 * (z0 + z1), lo + 0.5 * h), weight: w, subs });
        }
    }
    (cells, DirLayout::Sphere { nz, nphi, offset })
}
