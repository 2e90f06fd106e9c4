use super::grid::TraceGrid;
use crate::geometry::{Domain, DomainKind, Vector};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Resolution of a phase grid; velocity cells are unions of trace-grid cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseSpec {
    /// Boxes per axis over the bounding box.
    pub boxes: usize,
    /// Must divide the trace grid's angle cells.
    pub angle_cells: usize,
    /// Must divide the trace grid's speed cells.
    pub speed_cells: usize,
    /// Quadrature nodes per box and axis.
    pub nodes: usize,
    /// Ray starting points per box and axis for the resolvent.
    pub ray_nodes: usize,
}

impl Default for PhaseSpec {
    fn default() -> Self {
        PhaseSpec { boxes: 8, angle_cells: 8, speed_cells: 8, nodes: 6, ray_nodes: 6 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpaceBox {
    pub index: [usize; 3],
    /// Lebesgue measure of the box inside the domain.
    pub volume: f64,
    /// Interior nodes with weights summing to `volume`.
    pub nodes: Vec<(Vector, f64)>,
    pub ray_nodes: Vec<(Vector, f64)>,
}

/// Cells `box x direction group x speed group` over `Omega x V` with `dx (x) m` weights.
///
/// Fields on the grid are stored as cell masses indexed by
/// `box * n_vel + dir_group * n_speed + speed_group`.
#[derive(Clone, Debug)]
pub struct PhaseGrid {
    trace: Arc<TraceGrid>,
    spec: PhaseSpec,
    lo: Vector,
    h: f64,
    nbox: usize,
    pub boxes: Vec<SpaceBox>,
    lookup: Vec<Option<usize>>,
    dir_map: Vec<usize>,
    bin_map: Vec<usize>,
    n_dir: usize,
    n_speed: usize,
    vel_weight: Vec<f64>,
}

fn circle_antiderivative(x: f64, r: f64) -> f64 {
    let f = (r * r - x * x).max(0.0).sqrt();
    0.5 * (x * f + r * r * (x / r).clamp(-1.0, 1.0).asin())
}

/// Area of `[x0, x1] x [y0, y1]` inside the disk of radius `r` at the origin.
pub fn disk_rect_area(r: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
    let (a, b) = (x0.max(-r), x1.min(r));
    if !(b > a) {
        return 0.0;
    }
    let mut cuts = vec![a, b];
    for y in [y0, y1] {
        if y.abs() < r {
            let c = (r * r - y * y).sqrt();
            cuts.extend([-c, c]);
        }
    }
    cuts.retain(|c| *c >= a && *c <= b);
    cuts.sort_by(f64::total_cmp);
    let f = |x: f64| (r * r - x * x).max(0.0).sqrt();
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (p, q) = (w[0], w[1]);
        if q <= p {
            continue;
        }
        let m = 0.5 * (p + q);
        let (top_is_y, bot_is_y) = (y1 < f(m), y0 > -f(m));
        let top = if top_is_y { y1 } else { f(m) };
        let bot = if bot_is_y { y0 } else { -f(m) };
        if top <= bot {
            continue;
        }
        let arc = circle_antiderivative(q, r) - circle_antiderivative(p, r);
        let upper = if top_is_y { y1 * (q - p) } else { arc };
        let lower = if bot_is_y { y0 * (q - p) } else { -arc };
        area += upper - lower;
    }
    area
}

fn box_volume(domain: &Domain, lo: Vector, h: f64) -> f64 {
    let (x0, y0) = (lo.x(), lo.y());
    let (x1, y1) = (x0 + h, y0 + h);
    match domain.kind() {
        DomainKind::Disk { radius } => disk_rect_area(*radius, x0, x1, y0, y1),
        DomainKind::Ellipse { a, b } => a * b * disk_rect_area(1.0, x0 / a, x1 / a, y0 / b, y1 / b),
        DomainKind::Annulus { inner, outer } => {
            disk_rect_area(*outer, x0, x1, y0, y1) - disk_rect_area(*inner, x0, x1, y0, y1)
        }
        _ => {
            let d = domain.dimension();
            let n: usize = if d == 2 { 64 } else { 24 };
            let mut inside = 0usize;
            for_each_subcenter(lo, h, n, d, |x| {
                if domain.contains(x) {
                    inside += 1;
                }
            });
            h.powi(d as i32) * inside as f64 / n.pow(d as u32) as f64
        }
    }
}

fn for_each_subcenter(lo: Vector, h: f64, n: usize, d: usize, mut f: impl FnMut(Vector)) {
    let step = h / n as f64;
    let nz = if d == 3 { n } else { 1 };
    for k in 0..nz {
        for j in 0..n {
            for i in 0..n {
                let mut x = lo + Vector::new2((i as f64 + 0.5) * step, (j as f64 + 0.5) * step);
                if d == 3 {
                    x.0[2] = lo.z() + (k as f64 + 0.5) * step;
                }
                f(x);
            }
        }
    }
}

fn interior_nodes(domain: &Domain, lo: Vector, h: f64, n: usize, volume: f64) -> Vec<(Vector, f64)> {
    let d = domain.dimension();
    let mut pts = Vec::new();
    let mut m = n;
    while pts.is_empty() && m <= 64 * n.max(1) {
        for_each_subcenter(lo, h, m, d, |x| {
            if domain.contains(x) {
                pts.push(x);
            }
        });
        if m > n && !pts.is_empty() {
            let c = pts.iter().fold(Vector::ZERO, |a, p| a + *p) / pts.len() as f64;
            pts = vec![if domain.contains(c) { c } else { pts[pts.len() / 2] }];
        }
        m *= 2;
    }
    let w = volume / pts.len().max(1) as f64;
    pts.into_iter().map(|x| (x, w)).collect()
}

impl PhaseGrid {
    pub fn new(trace: Arc<TraceGrid>, spec: &PhaseSpec) -> Result<Self> {
        let domain = trace.domain();
        let d = domain.dimension();
        let (nz, nphi) = trace.dir_shape();
        let nb = trace.n_bins();
        let atomic = trace.measure().is_atomic();
        let n_speed = if atomic { nb } else { spec.speed_cells };
        if spec.boxes == 0 || spec.nodes == 0 || spec.ray_nodes == 0 || spec.angle_cells == 0 || n_speed == 0 {
            return Err(Error::InvalidParameter("phase grid resolutions must be positive".into()));
        }
        if !nphi.is_multiple_of(spec.angle_cells) || !nb.is_multiple_of(n_speed) {
            return Err(Error::GridMismatch(format!(
                "phase cells ({} angles, {} speeds) must group trace cells ({nphi} angles, {nb} speeds)",
                spec.angle_cells, n_speed
            )));
        }
        let kp = nphi / spec.angle_cells;
        let nz_phase = if d == 2 { 1 } else { (spec.angle_cells / 2).max(1) };
        if nz % nz_phase != 0 {
            return Err(Error::GridMismatch("polar bands do not nest".into()));
        }
        let kz = nz / nz_phase;
        let dir_map: Vec<usize> = (0..nz * nphi)
            .map(|t| {
                let (iz, ip) = (t / nphi, t % nphi);
                (iz / kz) * spec.angle_cells + ip / kp
            })
            .collect();
        let n_dir = nz_phase * spec.angle_cells;
        let kb = nb / n_speed;
        let bin_map: Vec<usize> = (0..nb).map(|b| b / kb).collect();
        let mut dir_w = vec![0.0; n_dir];
        for (t, cell) in trace.dirs.iter().enumerate() {
            dir_w[dir_map[t]] += cell.weight;
        }
        let mut speed_w = vec![0.0; n_speed];
        for (b, bin) in trace.bins.iter().enumerate() {
            speed_w[bin_map[b]] += bin.mass;
        }
        let vel_weight = dir_w.iter().flat_map(|a| speed_w.iter().map(move |m| a * m)).collect();

        let (blo, bhi) = domain.bounds();
        let ext = (0..d).map(|i| bhi[i] - blo[i]).fold(0.0, f64::max);
        let pad = 1e-9 * ext;
        let h = (ext + 2.0 * pad) / spec.boxes as f64;
        let mut lo = blo - Vector::new3(pad, pad, if d == 3 { pad } else { 0.0 });
        if d == 2 {
            lo.0[2] = 0.0;
        }
        let nbox = spec.boxes;
        let total = nbox.pow(d as u32);
        let mut boxes = Vec::new();
        let mut lookup = vec![None; total];
        for flat in 0..total {
            let idx = [flat % nbox, (flat / nbox) % nbox, flat / (nbox * nbox)];
            let mut corner = lo + Vector::new2(idx[0] as f64 * h, idx[1] as f64 * h);
            if d == 3 {
                corner.0[2] = lo.z() + idx[2] as f64 * h;
            }
            let volume = box_volume(domain, corner, h);
            if volume <= 0.0 {
                continue;
            }
            let nodes = interior_nodes(domain, corner, h, spec.nodes, volume);
            let ray_nodes = interior_nodes(domain, corner, h, spec.ray_nodes, volume);
            lookup[flat] = Some(boxes.len());
            boxes.push(SpaceBox { index: idx, volume, nodes, ray_nodes });
        }
        Ok(PhaseGrid { trace, spec: spec.clone(), lo, h, nbox, boxes, lookup, dir_map, bin_map, n_dir, n_speed, vel_weight })
    }

    pub fn trace(&self) -> &TraceGrid {
        &self.trace
    }

    pub fn spec(&self) -> &PhaseSpec {
        &self.spec
    }

    pub fn box_size(&self) -> f64 {
        self.h
    }

    pub fn n_vel(&self) -> usize {
        self.n_dir * self.n_speed
    }

    pub fn n_dir(&self) -> usize {
        self.n_dir
    }

    pub fn n_speed(&self) -> usize {
        self.n_speed
    }

    pub fn len(&self) -> usize {
        self.boxes.len() * self.n_vel()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    /// Direction group and speed group of a velocity cell.
    pub fn vel_parts(&self, vel: usize) -> (usize, usize) {
        (vel / self.n_speed, vel % self.n_speed)
    }

    pub fn dir_group(&self, trace_dir: usize) -> usize {
        self.dir_map[trace_dir]
    }

    pub fn speed_group(&self, bin: usize) -> usize {
        self.bin_map[bin]
    }

    /// Phase velocity cell of a trace `(direction, bin)` pair.
    pub fn vel_of(&self, trace_dir: usize, bin: usize) -> usize {
        self.dir_map[trace_dir] * self.n_speed + self.bin_map[bin]
    }

    pub fn cell(&self, box_idx: usize, vel: usize) -> usize {
        box_idx * self.n_vel() + vel
    }

    /// `dx (x) m` weight of a cell.
    pub fn weight(&self, cell: usize) -> f64 {
        let nv = self.n_vel();
        self.boxes[cell / nv].volume * self.vel_weight[cell % nv]
    }

    pub fn weights(&self) -> Vec<f64> {
        (0..self.len()).map(|c| self.weight(c)).collect()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights().iter().sum()
    }

    /// Lower corner of a box.
    pub fn box_corner(&self, b: usize) -> Vector {
        let idx = self.boxes[b].index;
        let mut c = self.lo + Vector::new2(idx[0] as f64 * self.h, idx[1] as f64 * self.h);
        if self.trace.domain().dimension() == 3 {
            c.0[2] = self.lo.z() + idx[2] as f64 * self.h;
        }
        c
    }

    pub fn locate_box(&self, x: Vector) -> Option<usize> {
        let d = self.trace.domain().dimension();
        let mut flat = 0;
        let mut stride = 1;
        for i in 0..d {
            let k = ((x[i] - self.lo[i]) / self.h).floor();
            if k < 0.0 || k >= self.nbox as f64 {
                return None;
            }
            flat += k as usize * stride;
            stride *= self.nbox;
        }
        self.lookup[flat]
    }

    /// Cell containing `(x, v)`, if `x` lies in a box meeting the domain and `|v|` in
    /// the speed range.
    pub fn locate(&self, x: Vector, v: Vector) -> Option<usize> {
        let b = self.locate_box(x)?;
        let rho = v.norm();
        if rho == 0.0 {
            return None;
        }
        let bin = self.trace.locate_bin(rho)?;
        Some(self.cell(b, self.vel_of(self.trace.locate_dir(v), bin)))
    }

    /// Centre of a cell: centroid of the box inside the domain, mean direction and
    /// mean speed of the group.
    pub fn cell_center(&self, cell: usize) -> (Vector, Vector, f64) {
        let nv = self.n_vel();
        let bx = &self.boxes[cell / nv];
        let w: f64 = bx.nodes.iter().map(|n| n.1).sum();
        let x = bx.nodes.iter().fold(Vector::ZERO, |a, n| a + n.0 * (n.1 / w));
        let vel = cell % nv;
        let (dg, sg) = (vel / self.n_speed, vel % self.n_speed);
        let dir = self
            .trace
            .dirs
            .iter()
            .enumerate()
            .filter(|(t, _)| self.dir_map[*t] == dg)
            .fold(Vector::ZERO, |a, (_, c)| a + c.center * c.weight);
        let (mut m, mut mr) = (0.0, 0.0);
        for (b, bin) in self.trace.bins.iter().enumerate() {
            if self.bin_map[b] == sg {
                m += bin.mass;
                mr += bin.mass * bin.mean;
            }
        }
        (x, dir.normalized(), mr / m)
    }

    /// Segments `(box, s_a, s_b)` of the ray `z + s omega`, `0 <= s <= len`.
    pub fn crossings(&self, z: Vector, omega: Vector, len: f64) -> Vec<(usize, f64, f64)> {
        let d = self.trace.domain().dimension();
        let mut ts = vec![0.0, len];
        for i in 0..d {
            if omega[i].abs() < 1e-300 {
                continue;
            }
            let (a, b) = ((z[i] - self.lo[i]) / self.h, (z[i] + omega[i] * len - self.lo[i]) / self.h);
            let (k0, k1) = (a.min(b).ceil() as i64, a.max(b).floor() as i64);
            for k in k0..=k1 {
                let t = (self.lo[i] + k as f64 * self.h - z[i]) / omega[i];
                if t > 0.0 && t < len {
                    ts.push(t);
                }
            }
        }
        ts.sort_by(f64::total_cmp);
        let mut out: Vec<(usize, f64, f64)> = Vec::with_capacity(ts.len());
        for w in ts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            let m = z + omega * (0.5 * (w[0] + w[1]));
            let b = self.locate_box(m).or_else(|| self.nearest_box(m));
            if let Some(b) = b {
                match out.last_mut() {
                    Some(last) if last.0 == b => last.2 = w[1],
                    _ => out.push((b, w[0], w[1])),
                }
            }
        }
        out
    }

    fn nearest_box(&self, x: Vector) -> Option<usize> {
        let center = |b: &SpaceBox| {
            let mut c = self.lo;
            for i in 0..self.trace.domain().dimension() {
                c.0[i] += (b.index[i] as f64 + 0.5) * self.h;
            }
            c
        };
        (0..self.boxes.len()).min_by(|&a, &b| (center(&self.boxes[a]) - x).norm2().total_cmp(&(center(&self.boxes[b]) - x).norm2()))
    }

    /// `sum |a - b|` over cells: the `L^1` distance of two fields given as cell masses.
    pub fn l1_distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.len() || b.len() != self.len() {
            return Err(Error::GridMismatch(format!("fields of length {} and {} on a grid of {}", a.len(), b.len(), self.len())));
        }
        Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
    }

    /// Cell masses to densities.
    pub fn densities(&self, masses: &[f64]) -> Vec<f64> {
        masses.iter().enumerate().map(|(c, m)| m / self.weight(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::GridSpec;
    use crate::vmeasure::VelocityMeasure;
    use std::f64::consts::PI;

    #[test]
    fn exact_box_areas() {
        assert!((disk_rect_area(1.0, -2.0, 2.0, -2.0, 2.0) - PI).abs() < 1e-14);
        assert!((disk_rect_area(1.0, 0.0, 2.0, 0.0, 2.0) - PI / 4.0).abs() < 1e-14);
        assert!((disk_rect_area(1.0, -0.5, 0.5, -0.5, 0.5) - 1.0).abs() < 1e-14);
        let expect = 2.0 * circle_antiderivative(0.75f64.sqrt(), 1.0) - 0.5 * 2.0 * 0.75f64.sqrt();
        assert!((disk_rect_area(1.0, -1.0, 1.0, 0.5, 1.0) - expect).abs() < 1e-14);
        let mut tot = 0.0;
        let n = 7;
        for i in 0..n {
            for j in 0..n {
                let h = 2.4 / n as f64;
                tot += disk_rect_area(1.0, -1.2 + i as f64 * h, -1.2 + (i + 1) as f64 * h, -1.2 + j as f64 * h, -1.2 + (j + 1) as f64 * h);
            }
        }
        assert!((tot - PI).abs() < 1e-13);
    }

    #[test]
    fn phase_weights_and_lookup() {
        let m = VelocityMeasure::lebesgue_annulus(2, 0.05, 4.0).unwrap();
        for dom in [Domain::unit_disk(), Domain::new(DomainKind::Annulus { inner: 0.4, outer: 1.0 }).unwrap()] {
            let spec = GridSpec { boundary_cells: 32, speed_cells: 8, angle_cells: 16, ..GridSpec::default() };
            let tg = Arc::new(TraceGrid::new(&dom, &m, &spec).unwrap());
            let pg = PhaseGrid::new(tg, &PhaseSpec { angle_cells: 4, speed_cells: 4, ..PhaseSpec::default() }).unwrap();
            let exact = dom.volume() * m.total_mass();
            assert!((pg.total_weight() - exact).abs() < 1e-10 * exact);
            for (k, b) in pg.boxes.iter().enumerate() {
                let w: f64 = b.nodes.iter().map(|n| n.1).sum();
                assert!((w - b.volume).abs() < 1e-12);
                for n in &b.nodes {
                    assert_eq!(pg.locate_box(n.0), Some(k));
                    assert!(dom.contains(n.0));
                }
            }
            let c = pg.locate(Vector::new2(0.7, 0.1), Vector::new2(0.0, 2.0)).unwrap();
            let (_, dir, speed) = pg.cell_center(c);
            assert!(dir.y() > 0.7 && (1.0..=3.0).contains(&speed));
            let segs = pg.crossings(Vector::new2(-0.99, 0.0), Vector::new2(1.0, 0.0), 1.98);
            let len: f64 = segs.iter().map(|s| s.2 - s.1).sum();
            assert!((len - 1.98).abs() < 1e-12);
        }
    }
}
