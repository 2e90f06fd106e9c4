//! The four subcommands.

use crate::artifacts::OutDir;
use crate::config::{Axis, Initial, ScenarioConfig};
use collisionless::boundary::*;
use collisionless::geometry::*;
use collisionless::pdmp::*;
use collisionless::spectral::*;
use collisionless::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Outcome classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
pub enum Failure {
    Check(String),
    Config(String),
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Check(_) => 1,
            Failure::Config(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Check(m) => write!(f, "check failed: {m}"),
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::GridMismatch(_) | Error::UnsupportedInitialLaw(_) => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Numerical(format!("i/o: {e}"))
    }
}

pub type Outcome = Result<(), Failure>;

pub struct Context {
    pub cfg: ScenarioConfig,
    pub config_text: String,
    pub config_dir: PathBuf,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
}

impl Context {
    fn out_dir(&self) -> Result<OutDir, Failure> {
        Ok(OutDir::create(&self.out)?)
    }

    fn finish<S: Serialize>(&self, out: OutDir, command: &str, summary: &S) -> Outcome {
        out.finish(command, &self.config_text, self.seed, self.threads, &self.cfg.tolerances, summary)?;
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }
}

struct Pipeline {
    grid: Arc<TraceGrid>,
    m0: TransferOperator,
    h: BoundaryMatrix,
}

fn assemble(domain: &Domain, cfg: &ScenarioConfig, spec: &GridSpec, boundary: &PartlyDiffuseBoundary) -> Result<Pipeline, Failure> {
    let grid = Arc::new(TraceGrid::new(domain, &cfg.measure()?, spec)?);
    let m0 = TransferOperator::m0(&grid)?;
    let h = BoundaryMatrix::new(&grid, boundary)?;
    Ok(Pipeline { grid, m0, h })
}

fn levels(cfg: &ScenarioConfig) -> Vec<u32> {
    (1..=cfg.grids.levels).collect()
}

/// Maxwellian temperature when the invariant density is known in closed form.
fn maxwell_theta(boundary: &PartlyDiffuseBoundary) -> Option<f64> {
    match boundary.kernel.spec()? {
        KernelSpec::Maxwell { theta: ThetaField::Constant { theta } } => Some(*theta),
        _ => None,
    }
}

/// Largest relative cell error of `psi` against the normalised Maxwellian at `theta`.
fn maxwellian_sup_error(phase: &PhaseGrid, psi: &[f64], theta: f64) -> f64 {
    let grid = phase.trace();
    let mut group = vec![0.0; phase.n_speed()];
    for (b, bin) in grid.bins.iter().enumerate() {
        group[phase.speed_group(b)] += bin.nodes.iter().map(|(r, w)| w * (-r * r / (2.0 * theta)).exp()).sum::<f64>();
    }
    let mut dir_w = vec![0.0; phase.n_dir()];
    for (t, cell) in grid.dirs.iter().enumerate() {
        dir_w[phase.dir_group(t)] += cell.weight;
    }
    let nv = phase.n_vel();
    let exact: Vec<f64> = (0..phase.len())
        .map(|c| {
            let (dg, sg) = phase.vel_parts(c % nv);
            phase.boxes[c / nv].volume * dir_w[dg] * group[sg]
        })
        .collect();
    let total: f64 = exact.iter().sum();
    exact.iter().zip(psi).filter(|(e, _)| **e > 0.0).map(|(e, p)| (p - e / total).abs() / (e / total)).fold(0.0, f64::max)
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    pass: bool,
    value: f64,
    tolerance: f64,
    note: String,
}

fn check(name: &'static str, value: f64, tolerance: f64, note: impl Into<String>) -> Check {
    Check { name, pass: value <= tolerance, value, tolerance, note: note.into() }
}

#[derive(Serialize)]
struct ValidateReport {
    all_pass: bool,
    checks: Vec<Check>,
}

fn random_interior(domain: &Domain, rng: &mut ChaCha8Rng) -> Vector {
    let (lo, hi) = domain.bounds();
    loop {
        let mut x = Vector::default();
        for k in 0..domain.dimension() {
            x.0[k] = lo[k] + rng.random::<f64>() * (hi[k] - lo[k]);
        }
        if domain.contains(x) {
            return x;
        }
    }
}

fn random_direction(d: usize, rng: &mut ChaCha8Rng) -> Vector {
    if d == 2 {
        return Vector::polar(rng.random::<f64>() * std::f64::consts::TAU);
    }
    let z = 2.0 * rng.random::<f64>() - 1.0;
    let r = (1.0 - z * z).sqrt();
    let p = rng.random::<f64>() * std::f64::consts::TAU;
    Vector::new3(r * p.cos(), r * p.sin(), z)
}

pub fn validate(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let domain = cfg.domain()?;
    let boundary = cfg.boundary()?;
    let d = domain.dimension();
    let diam = domain.diameter();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut checks = Vec::new();

    let mut landing: f64 = 0.0;
    for _ in 0..200 {
        let x = random_interior(&domain, &mut rng);
        let v = random_direction(d, &mut rng);
        let t = domain.exit_time(x, v, Direction::Forward)?;
        landing = landing.max(domain.distance_to_boundary(x + v * t) / diam);
    }
    checks.push(check("exit points on the boundary", landing, 1e-9, "relative to the diameter, 200 rays"));

    if d == 2 {
        let mut worst: f64 = 0.0;
        let mut done = 0;
        while done < 100 {
            let x0 = random_interior(&domain, &mut rng);
            let omega = random_direction(2, &mut rng);
            let t = domain.exit_time(x0, omega, Direction::Forward)?;
            let x = project_to_boundary(&domain, x0 + omega * t)?;
            let n = domain.normal(x)?;
            let back = domain.exit_time(x, omega, Direction::Backward)?;
            let nf = domain.normal(x - omega * back)?;
            if omega.dot(&n) < 0.1 || omega.dot(&nf) > -0.1 {
                continue;
            }
            let hx = Vector::new2(-n.y(), n.x());
            let ho = Vector::new2(-omega.y(), omega.x());
            let pairs = [
                (grad_tau_x(&domain, x, omega, hx)?, fd_grad_tau_x(&domain, x, omega, hx, 1e-5)?),
                (grad_tau_omega(&domain, x, omega, ho)?, fd_grad_tau_omega(&domain, x, omega, ho, 1e-5)?),
            ];
            for (g, f) in pairs {
                worst = worst.max((g - f).abs() / f.abs().max(1e-12));
            }
            done += 1;
        }
        checks.push(check("travel-time gradients", worst, 1e-5, "closed form against central differences, 100 configurations"));
    }

    let p = assemble(&domain, cfg, &cfg.grids.trace_spec(), &boundary)?;
    let phase = PhaseGrid::new(p.grid.clone(), &cfg.grids.phase)?;
    let one = integration_identity(&phase, &|_, _| 1.0)?;
    checks.push(check("integration identity, h = 1", one.relative_error, 1e-3, ""));
    let speed = integration_identity(&phase, &|_, v: Vector| v.norm())?;
    checks.push(check("integration identity, h = |v|", speed.relative_error, 1e-3, ""));

    checks.push(check("M0 column sums", p.m0.stochastic_defect(), 1e-12, format!("{} entries", p.m0.nnz())));
    checks.push(check("H column sums", p.h.stochastic_defect(), 1e-12, format!("{} entries", p.h.nnz())));
    let a = Composed::new(&p.m0, &p.h)?;
    checks.push(check("M0 H column sums", a.stochastic_defect(), 1e-10, ""));
    let mut mass: f64 = 0.0;
    for _ in 0..20 {
        let f: Vec<f64> = (0..p.grid.n_plus()).map(|_| rng.random::<f64>()).collect();
        let (x, y): (f64, f64) = (f.iter().sum(), a.apply(&f).iter().sum());
        mass = mass.max((x - y).abs() / x);
    }
    checks.push(check("discrete mass preservation", mass, 1e-10, "20 random vectors"));

    let osc = oscillation_predicate(&sample_betas(&boundary, &domain, 256));
    checks.push(Check {
        name: "oscillation predicate",
        pass: true,
        value: osc.bound,
        tolerance: 1.0,
        note: format!("predicate {}; sufficient condition only", osc.predicate),
    });
    let hyp = hypothesis_checks(&boundary, &domain, &levels(cfg))?;
    checks.push(Check {
        name: "reflection preserves speed",
        pass: hyp.reflection_preserves_speed,
        value: f64::from(u8::from(!hyp.reflection_preserves_speed)),
        tolerance: 0.0,
        note: format!("range of K in the weighted trace space: {}", hyp.range_k_weighted.finiteness()),
    });

    let report = ValidateReport { all_pass: checks.iter().all(|c| c.pass), checks };
    let mut out = ctx.out_dir()?;
    out.write_json("validate.json", &report)?;
    let failed: Vec<&str> = report.checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
    ctx.finish(out, "validate", &report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Check(failed.join(", ")))
    }
}

#[derive(Serialize)]
struct EigenSummary {
    lambda_max: f64,
    residual: f64,
    iterations: usize,
    method: EigenMethod,
    subdominant_modulus: f64,
}

#[derive(Serialize)]
struct PsiSummary {
    raw_mass: f64,
    redirected: f64,
    boundary_residual: f64,
    maxwellian_sup_error: Option<f64>,
}

#[derive(Serialize)]
struct SpectralSummary {
    /// Operators above `outputs.max_operator_nnz`.
    operators_skipped: Vec<String>,
    plus_cells: usize,
    minus_cells: usize,
    phase_cells: usize,
    eigen: Option<EigenSummary>,
    eigen_failure: Option<String>,
    oscillation: OscillationReport,
    additional_condition: Option<AdditionalCondition>,
    additional_condition_verdict: Option<&'static str>,
    psi: Option<PsiSummary>,
    note: Option<String>,
    diagnostics: Vec<String>,
}

pub fn spectral(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let domain = cfg.domain()?;
    let boundary = cfg.boundary()?;
    let spec = cfg.grids.trace_spec();
    let p = assemble(&domain, cfg, &spec, &boundary)?;
    let phase = PhaseGrid::new(p.grid.clone(), &cfg.grids.phase)?;
    let mut out = ctx.out_dir()?;
    let mut skipped = Vec::new();
    if cfg.outputs.operators {
        let ops: [(&str, &dyn TraceOperator); 2] = [("m0.coo", &p.m0), ("h.coo", &p.h)];
        for (name, op) in ops {
            if op.nnz() > cfg.outputs.max_operator_nnz {
                skipped.push(format!("{name} ({} entries)", op.nnz()));
                continue;
            }
            out.write(name, |b| write_coo(op, b, usize::MAX).map(|_| ()).map_err(std::io::Error::other))?;
        }
    }
    let mut summary = SpectralSummary {
        operators_skipped: skipped,
        plus_cells: p.grid.n_plus(),
        minus_cells: p.grid.n_minus(),
        phase_cells: phase.len(),
        eigen: None,
        eigen_failure: None,
        oscillation: oscillation_predicate(&sample_betas(&boundary, &domain, 256)),
        additional_condition: None,
        additional_condition_verdict: None,
        psi: None,
        note: None,
        diagnostics: Vec::new(),
    };
    let a = Composed::new(&p.m0, &p.h)?;
    let eig = match leading_eigenpair(&a, &cfg.tolerances.power) {
        Ok(e) => e,
        Err(e) => {
            summary.eigen_failure = Some(e.to_string());
            out.write_json("summary.json", &summary)?;
            ctx.finish(out, "spectral", &summary)?;
            return Err(Failure::Numerical(e.to_string()));
        }
    };
    let sub = subdominant_modulus(&a, &eig.phi, 200, ctx.seed);
    if eig.method == EigenMethod::Cesaro {
        summary.diagnostics.push("power iteration did not converge; fixed point taken from Cesaro averages".into());
    }
    if sub >= 1.0 - 1e-6 {
        summary.diagnostics.push(format!(
            "no spectral gap (second modulus {sub:.9}): the fixed point need not be unique and iterates need not converge"
        ));
    }
    summary.eigen = Some(EigenSummary {
        lambda_max: eig.lambda,
        residual: eig.residual,
        iterations: eig.iterations,
        method: eig.method,
        subdominant_modulus: sub,
    });
    out.write("phi.csv", |b| write_trace_csv(&p.grid, Side::Outgoing, &eig.phi, b).map_err(std::io::Error::other))?;
    let ac = additional_condition(&domain, &boundary, &spec, &levels(cfg), &cfg.tolerances.power)?;
    summary.additional_condition_verdict = Some(ac.verdict.finiteness());
    if ac.verdict == Verdict::Convergent {
        let u = p.h.apply(&eig.phi);
        let psi = build_invariant_density(&phase, &u)?;
        out.write("psi.csv", |b| write_phase_csv(&phase, &psi.masses, b).map_err(std::io::Error::other))?;
        summary.psi = Some(PsiSummary {
            raw_mass: psi.raw_mass,
            redirected: psi.redirected,
            boundary_residual: boundary_residual(&p.grid, &p.h, &u)?,
            maxwellian_sup_error: maxwell_theta(&boundary).map(|t| maxwellian_sup_error(&phase, &psi.masses, t)),
        });
    } else {
        summary.note = Some("no invariant density certificate".into());
    }
    summary.additional_condition = Some(ac);
    out.write_json("summary.json", &summary)?;
    ctx.finish(out, "spectral", &summary)
}

#[derive(Serialize)]
struct SimulateSummary {
    particles: usize,
    seed: u64,
    t_end: f64,
    events: u64,
    final_l1_to_invariant: Option<f64>,
    final_cesaro_l1: Option<f64>,
    final_mass_f: f64,
    final_mass_highspeed: f64,
    final_frozen_fraction: f64,
    /// No sample rises above its predecessor by more than three standard errors.
    mass_highspeed_decreasing: bool,
}

fn read_invariant(ctx: &Context, phase: &PhaseGrid) -> Result<Option<Vec<f64>>, Failure> {
    let Some(p) = &ctx.cfg.run.invariant else { return Ok(None) };
    let path = ctx.resolve(p);
    let file = File::open(&path).map_err(|e| Failure::Config(format!("missing invariant density {}: {e}", path.display())))?;
    let masses = read_phase_masses(phase, BufReader::new(file))
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(Some(masses))
}

fn phase_id(spec: &PhaseSpec) -> String {
    format!("{}x{}x{}", spec.boxes, spec.angle_cells, spec.speed_cells)
}

pub fn simulate(ctx: &Context) -> Outcome {
    let cfg = &ctx.cfg;
    let domain = cfg.domain()?;
    let measure = cfg.measure()?;
    let boundary = cfg.boundary()?;
    let sampler = DiffuseSampler::new(&boundary.kernel)?;
    let grid = Arc::new(TraceGrid::new(&domain, &measure, &cfg.grids.trace_spec())?);
    let phase = PhaseGrid::new(grid, &cfg.grids.phase)?;
    let psi = read_invariant(ctx, &phase)?;
    let law = match (cfg.run.initial, &psi) {
        (Initial::Invariant, Some(m)) => InitialLaw::Phase { grid: &phase, masses: m },
        _ => InitialLaw::Uniform,
    };
    let mut ens = init_ensemble(&domain, &measure, cfg.run.particles, law, ctx.seed)?;
    let spec = ObserveSpec {
        times: cfg.run.times(),
        eps: cfg.run.eps,
        m: cfg.run.m,
        invariant: psi.as_deref().map(|m| (&phase, m)),
        grid_id: phase_id(&cfg.grids.phase),
    };
    let series = observe(&mut ens, &domain, &boundary, &sampler, &spec, &cfg.tolerances.simulation)?;
    let mut out = ctx.out_dir()?;
    out.write("series.csv", |b| series.write_csv(b))?;
    let emp = empirical_masses(&ens, &phase);
    out.write("final_density.csv", |b| write_phase_csv(&phase, &emp.masses, b).map_err(std::io::Error::other))?;
    let hs = &series.mass_highspeed;
    let summary = SimulateSummary {
        particles: ens.len(),
        seed: ctx.seed,
        t_end: ens.t,
        events: ens.total_events(),
        final_l1_to_invariant: series.l1_to_invariant.last().copied().flatten(),
        final_cesaro_l1: series.cesaro_l1.last().copied().flatten(),
        final_mass_f: *series.mass_f.last().unwrap_or(&f64::NAN),
        final_mass_highspeed: *hs.last().unwrap_or(&f64::NAN),
        final_frozen_fraction: ens.frozen_fraction(),
        mass_highspeed_decreasing: hs.windows(2).all(|w| w[1] - w[0] <= 3.0 * (2.0 * w[0] * (1.0 - w[0]) / ens.len() as f64).sqrt()),
    };
    out.write_json("summary.json", &summary)?;
    ctx.finish(out, "simulate", &summary)
}

#[derive(Serialize)]
struct SweepSummary {
    axis: Axis,
    values: Vec<f64>,
    rows: usize,
    /// Least-squares slope of `log l1` against `log N` on the particle axis.
    loglog_slope: Option<f64>,
}

fn csv_f(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v}"))
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn sweep(ctx: &Context, axis: Option<Axis>, values: Option<Vec<f64>>) -> Outcome {
    let cfg = &ctx.cfg;
    let axis = axis
        .or(cfg.sweep.as_ref().map(|s| s.axis))
        .ok_or_else(|| Failure::Config("no sweep axis: pass --axis or set sweep.axis".into()))?;
    let values = values
        .or(cfg.sweep.as_ref().map(|s| s.values.clone()))
        .filter(|v| !v.is_empty())
        .ok_or_else(|| Failure::Config("no sweep values: pass --values or set sweep.values".into()))?;
    let domain = cfg.domain()?;
    let mut csv = Vec::new();
    let mut loglog = None;
    match axis {
        Axis::Refinement => {
            writeln!(csv, "refinement,plus_cells,lambda_max,residual,identity_error,additional_value,verdict,maxwellian_sup_error")?;
            let boundary = cfg.boundary()?;
            for &v in &values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(Failure::Config(format!("refinement levels must be nonnegative integers, got {v}")));
                }
                let spec = (0..v as u32).fold(cfg.grids.trace.clone(), |g, _| g.refined());
                let p = assemble(&domain, cfg, &spec, &boundary)?;
                let phase = PhaseGrid::new(p.grid.clone(), &cfg.grids.phase)?;
                let eig = leading_eigenpair(&Composed::new(&p.m0, &p.h)?, &cfg.tolerances.power)?;
                let id = integration_identity(&phase, &|_, _| 1.0)?;
                let ac = additional_condition(&domain, &boundary, &spec, &levels(cfg), &cfg.tolerances.power)?;
                let sup = match (ac.verdict, maxwell_theta(&boundary)) {
                    (Verdict::Convergent, Some(t)) => {
                        let psi = build_invariant_density(&phase, &p.h.apply(&eig.phi))?;
                        Some(maxwellian_sup_error(&phase, &psi.masses, t))
                    }
                    _ => None,
                };
                writeln!(
                    csv,
                    "{v},{},{},{},{},{},{},{}",
                    p.grid.n_plus(),
                    eig.lambda,
                    eig.residual,
                    id.relative_error,
                    ac.values.last().copied().unwrap_or(f64::NAN),
                    ac.verdict.finiteness(),
                    csv_f(sup)
                )?;
            }
        }
        Axis::Particles => {
            writeln!(csv, "particles,l1_to_invariant,noise_floor")?;
            let boundary = cfg.boundary()?;
            let measure = cfg.measure()?;
            let p = assemble(&domain, cfg, &cfg.grids.trace_spec(), &boundary)?;
            let phase = PhaseGrid::new(p.grid.clone(), &cfg.grids.phase)?;
            let eig = leading_eigenpair(&Composed::new(&p.m0, &p.h)?, &cfg.tolerances.power)?;
            let psi = build_invariant_density(&phase, &p.h.apply(&eig.phi))?.masses;
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for &v in &values {
                if v < 1.0 || v.fract() != 0.0 {
                    return Err(Failure::Config(format!("particle counts must be positive integers, got {v}")));
                }
                let n = v as usize;
                let ens = init_ensemble(&domain, &measure, n, InitialLaw::Phase { grid: &phase, masses: &psi }, ctx.seed)?;
                let emp = empirical_masses(&ens, &phase);
                let l1 = phase.l1_distance(&emp.masses, &psi)? + emp.unlocated;
                writeln!(csv, "{n},{l1},{}", multinomial_l1_floor(&psi, n).0)?;
                xs.push(v.ln());
                ys.push(l1.ln());
            }
            if xs.len() >= 2 {
                loglog = Some(slope(&xs, &ys));
            }
        }
        Axis::P => {
            writeln!(csv, "p,q,radial_value,radial_verdict,oracle")?;
            // the radial integral is cheap, so go far below the grid floors
            let deep: Vec<u32> = (1..=levels(cfg).len().max(40) as u32).collect();
            let q = match &cfg.boundary.kernel {
                KernelSpec::HeavyLowSpeed { q, .. } => *q,
                _ => 2.0,
            };
            for &v in &values {
                let b = cfg.boundary_with(cfg.boundary.alpha.clone(), KernelSpec::HeavyLowSpeed { p: v, q })?;
                let r = additional_condition_radial(&b.kernel, 0, &deep);
                // int_0 rho^(d-1-p) log^-q(1/rho) drho is finite iff p < d or p = d and q > 1
                let d = domain.dimension() as f64;
                let oracle = if v < d || (v == d && q > 1.0) { "finite" } else { "divergent" };
                writeln!(csv, "{v},{q},{},{},{oracle}", r.values.last().copied().unwrap_or(f64::NAN), r.verdict.finiteness())?;
            }
        }
        Axis::Alpha => {
            writeln!(csv, "alpha,lambda_max,residual,iterations,subdominant_modulus,oscillation_bound,oscillation_predicate,failure")?;
            for &v in &values {
                let b = cfg.boundary_with(AlphaField::constant(v), cfg.boundary.kernel.clone())?;
                let p = assemble(&domain, cfg, &cfg.grids.trace_spec(), &b)?;
                let a = Composed::new(&p.m0, &p.h)?;
                let osc = oscillation_predicate(&sample_betas(&b, &domain, 256));
                match leading_eigenpair(&a, &cfg.tolerances.power) {
                    Ok(e) => {
                        let sub = subdominant_modulus(&a, &e.phi, 200, ctx.seed);
                        writeln!(csv, "{v},{},{},{},{sub},{},{},", e.lambda, e.residual, e.iterations, osc.bound, osc.predicate)?;
                    }
                    Err(e) => writeln!(csv, "{v},,,,,{},{},\"{e}\"", osc.bound, osc.predicate)?,
                }
            }
        }
    }
    let mut out = ctx.out_dir()?;
    out.write("sweep.csv", |b| b.write_all(&csv))?;
    let summary = SweepSummary { axis, rows: values.len(), values, loglog_slope: loglog };
    out.write_json("summary.json", &summary)?;
    ctx.finish(out, "sweep-study", &summary)
}
