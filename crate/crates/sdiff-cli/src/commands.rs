//! One function per subcommand.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use num_complex::Complex64;
use sdiff::accumulation::AccumulationSolver;
use sdiff::asymptotic2d::{model3_field_2d, solve_model3_2d, SteadyField2D};
use sdiff::asymptotic3d::{model3_field_3d, solve_model3_3d, SteadyField3D};
use sdiff::geometry::{validate, BoundaryModel, DomainGeometry, ProblemSpec, ValidatedSpec};
use sdiff::greens::{build_interaction_matrix, Green, GreenMode};
use sdiff::oracle::{
    compare, fd_solve_with_source, observed_order, radial_exact_disk, radial_exact_sphere, ErrorReport, GridField,
    RadialParams, RadialSolution,
};
use sdiff::pdeode::{
    coupling_matrix, hopf_sweep, integrate_kuramoto, integrate_reduced, linear_stability, KuramotoParams, OscState,
    QsModel,
};
use sdiff::ripening::evolve;

use crate::output::{csv, Sink};
use crate::params::{
    AccumParams, GreensParams, KuramotoFile, OracleParams, QsParams, RipenParams, SteadyParams,
};
use crate::{CliError, CliResult, Command, Finished, Job};

pub fn dispatch(job: &Job) -> CliResult<Finished> {
    match job.command {
        Command::Greens => greens(job),
        Command::Steady2d => steady2d(job),
        Command::Steady3d => steady3d(job),
        Command::Ripen => ripen(job),
        Command::Accum => accum(job),
        Command::Qs => qs(job),
        Command::Kuramoto => kuramoto(job),
        Command::Oracle => oracle(job),
        Command::Compare => compare_eps(job),
    }
}

fn input<E: std::fmt::Display>(what: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Input(format!("{what}: {e}"))
}

fn parse_params<T: DeserializeOwned + Serialize>(job: &Job) -> CliResult<(T, Value)> {
    let p: T = serde_json::from_value(job.params.clone()).map_err(input("invalid params"))?;
    let resolved = serde_json::to_value(&p).map_err(input("params"))?;
    Ok((p, resolved))
}

fn problem_spec(v: &Value) -> CliResult<ProblemSpec> {
    serde_json::from_value(v.clone()).map_err(input("invalid spec"))
}

fn load_spec(job: &Job) -> CliResult<Option<ValidatedSpec>> {
    let Some(v) = &job.spec else { return Ok(None) };
    let spec = validate(&problem_spec(v)?)?;
    for w in &spec.warnings {
        eprintln!("warning: {w}");
    }
    Ok(Some(spec))
}

fn require_spec(job: &Job) -> CliResult<ValidatedSpec> {
    load_spec(job)?.ok_or_else(|| CliError::Usage(format!("{} needs --spec", job.command.name())))
}

fn finished(spec: Option<&ValidatedSpec>, params: Value, sink: Sink) -> CliResult<Finished> {
    Ok(Finished {
        spec: spec.map(|s| s.spec.clone()),
        params,
        outputs: sink.finish()?,
    })
}

/// Cell-centred `n x n` lattice over the bounding box, restricted to the
/// domain. 3D domains are sampled on the `z = 0` slice.
fn lattice(geom: &DomainGeometry, n: usize) -> Vec<Vec<f64>> {
    let (lo, hi) = match *geom {
        DomainGeometry::Disk2D { radius } => ([-radius; 2], [radius; 2]),
        DomainGeometry::Rect2D { l1, l2 } => ([0.0; 2], [l1, l2]),
        DomainGeometry::Sphere3D { r0 } => ([-r0; 2], [r0; 2]),
    };
    let at = |k: usize, i: usize| lo[k] + (hi[k] - lo[k]) * (i as f64 + 0.5) / n as f64;
    let mut pts = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let mut x = vec![at(0, i), at(1, j)];
            if geom.dim() == 3 {
                x.push(0.0);
            }
            if geom.contains(&x) {
                pts.push(x);
            }
        }
    }
    pts
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    if dim == 3 {
        vec!["x", "y", "z"]
    } else {
        vec!["x", "y"]
    }
}

/// Sample `f` on the lattice, skipping points where only the inner
/// expansion applies.
fn sample<F>(geom: &DomainGeometry, n: usize, f: F, sink: &mut Sink, series: &str) -> CliResult<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> sdiff::Result<f64>,
{
    let mut rows = Vec::new();
    for x in lattice(geom, n) {
        match f(&x) {
            Ok(u) => {
                sink.plot(series, x[0], Some(x[1]), u);
                let mut row = x;
                row.push(u);
                rows.push(row);
            }
            Err(sdiff::Error::UseInner { .. }) | Err(sdiff::Error::Singularity) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

fn green_mode(spec: &ValidatedSpec) -> GreenMode {
    if spec.gamma0 > 0.0 {
        GreenMode::Helmholtz { gamma: spec.gamma0 }
    } else {
        GreenMode::Laplace
    }
}

fn domain_centre(geom: &DomainGeometry) -> Vec<f64> {
    match *geom {
        DomainGeometry::Disk2D { .. } => vec![0.0; 2],
        DomainGeometry::Rect2D { l1, l2 } => vec![0.5 * l1, 0.5 * l2],
        DomainGeometry::Sphere3D { .. } => vec![0.0; 3],
    }
}

fn greens(job: &Job) -> CliResult<Finished> {
    let spec = require_spec(job)?;
    let (p, resolved): (GreensParams, _) = parse_params(job)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let mode = green_mode(&spec);
    let m = build_interaction_matrix(&spec, mode)?;
    #[derive(Serialize)]
    struct Interaction {
        mode: GreenMode,
        n: usize,
        entries: Vec<Vec<f64>>,
        asymmetry: f64,
    }
    sink.json(
        "interaction.json",
        &Interaction {
            mode,
            n: m.n,
            entries: (0..m.n).map(|i| (0..m.n).map(|j| m.entries[(i, j)]).collect()).collect(),
            asymmetry: m.asymmetry(),
        },
    )?;
    let source = p
        .source
        .clone()
        .or_else(|| spec.compartments.first().map(|c| c.center.clone()))
        .unwrap_or_else(|| domain_centre(&spec.geometry));
    if !spec.geometry.contains(&source) {
        return Err(CliError::Input(format!("source {source:?} is not inside the domain")));
    }
    let g = Green::new(&spec.geometry, spec.d, mode)?;
    let mut rows = Vec::new();
    for x in lattice(&spec.geometry, job.grid) {
        match g.eval(&x, &source) {
            Ok(e) => {
                sink.plot("G", x[0], Some(x[1]), e.value);
                let mut row = x;
                row.push(e.value);
                row.push(e.regular_part);
                rows.push(row);
            }
            Err(sdiff::Error::Singularity) => {}
            Err(e) => return Err(e.into()),
        }
    }
    let mut header = coord_header(spec.geometry.dim());
    header.extend(["value", "regular_part"]);
    sink.text("green_field.csv", &csv(&header, &rows))?;
    finished(Some(&spec), resolved, sink)
}

fn has_model3(spec: &ValidatedSpec) -> bool {
    spec.compartments
        .iter()
        .any(|c| matches!(c.model, BoundaryModel::ModelIII { .. }))
}

fn steady2d(job: &Job) -> CliResult<Finished> {
    let spec = require_spec(job)?;
    let (p, resolved): (SteadyParams, _) = parse_params(job)?;
    let newton = p.newton().map_err(CliError::Input)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let field = if has_model3(&spec) {
        let roots = solve_model3_2d(&spec, &p.seeds, newton)?;
        sink.json("roots.json", &roots)?;
        model3_field_2d(&spec, &roots[0])?
    } else {
        SteadyField2D::solve(&spec)?
    };
    sink.json("coefficients.json", &field.coefficients)?;
    let rows = sample(&spec.geometry, job.grid, |x| field.outer(x), &mut sink, "u")?;
    sink.text("field.csv", &csv(&["x", "y", "u"], &rows))?;
    finished(Some(&spec), resolved, sink)
}

fn steady3d(job: &Job) -> CliResult<Finished> {
    let spec = require_spec(job)?;
    let (p, resolved): (SteadyParams, _) = parse_params(job)?;
    let newton = p.newton().map_err(CliError::Input)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let field = if has_model3(&spec) {
        let roots = solve_model3_3d(&spec, &p.seeds, newton)?;
        sink.json("roots.json", &roots)?;
        model3_field_3d(&spec, &roots[0])?
    } else {
        SteadyField3D::solve(&spec)?
    };
    sink.json("coefficients.json", &field.coefficients)?;
    let rows = sample(&spec.geometry, job.grid, |x| field.outer(x), &mut sink, "u")?;
    sink.text("field.csv", &csv(&["x", "y", "z", "u"], &rows))?;
    finished(Some(&spec), resolved, sink)
}

fn ripen(job: &Job) -> CliResult<Finished> {
    let (p, resolved): (RipenParams, _) = parse_params(job)?;
    let (rp, state) = p.resolve().map_err(CliError::Input)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let traj = evolve(&state, &rp, p.t_end, p.control)?;
    sink.text("trajectory.csv", &traj.to_csv())?;
    for pt in &traj.points {
        for (j, l) in pt.ell.iter().enumerate() {
            sink.plot(&format!("ell_{}", j + 1), pt.tau, None, *l);
        }
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        nu: f64,
        final_radii: &'a [f64],
        tau_end: f64,
        survivors: Vec<usize>,
        extinctions: &'a [(usize, f64)],
        max_drift: f64,
    }
    sink.json(
        "summary.json",
        &Summary {
            nu: rp.nu,
            final_radii: &traj.final_state.ell,
            tau_end: traj.final_state.tau,
            survivors: traj.final_state.active(),
            extinctions: &traj.extinctions,
            max_drift: traj.max_drift,
        },
    )?;
    finished(None, resolved, sink)
}

fn accum(job: &Job) -> CliResult<Finished> {
    let spec = require_spec(job)?;
    let (p, resolved): (AccumParams, _) = parse_params(job)?;
    let ic = p.initial.resolve(&job.base)?;
    let dim = spec.geometry.dim();
    if let Some(x) = p.points.iter().find(|x| x.len() != dim) {
        return Err(CliError::Input(format!("point {x:?} does not have {dim} coordinates")));
    }
    let solver = AccumulationSolver::new(&spec, &ic)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let mut times = Vec::with_capacity(p.points.len());
    let mut rows = Vec::with_capacity(p.points.len());
    for x in &p.points {
        let t = solver.time_at(x)?;
        sink.plot("T", x[0], x.get(1).copied(), t.t);
        let mut row = x.clone();
        row.push(t.t);
        rows.push(row);
        times.push(t);
    }
    let mut header = coord_header(dim);
    header.push("T");
    sink.text("accumulation.csv", &csv(&header, &rows))?;
    sink.json("accumulation.json", &times)?;
    finished(Some(&spec), resolved, sink)
}

fn qs(job: &Job) -> CliResult<Finished> {
    let spec = load_spec(job)?;
    let (p, resolved): (QsParams, _) = parse_params(job)?;
    p.check().map_err(CliError::Input)?;
    let make = |d0: f64| -> sdiff::Result<QsModel> {
        let m = match &spec {
            Some(s) => QsModel::new(s, d0)?,
            None => p.selkov.model(d0)?,
        };
        match &p.volumes {
            Some(v) => m.with_volumes(v.clone()),
            None => Ok(m),
        }
    };
    let model = make(p.d0)?;
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let fp = model.fixed_point(&model.initial_state(p.ubar0))?;
    let stab = linear_stability(&fp, &model, 1e-8)?;
    for w in &stab.warnings {
        eprintln!("warning: {w}");
    }
    #[derive(Serialize)]
    struct StabilityOut<'a> {
        d0: f64,
        ubar: f64,
        w: &'a [Vec<f64>],
        eigenvalues: Vec<[f64; 2]>,
        max_re: f64,
        hopf: bool,
        warnings: &'a [String],
    }
    let pairs = |s: &sdiff::pdeode::Stability| s.eigenvalues.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>();
    sink.json(
        "stability.json",
        &StabilityOut {
            d0: p.d0,
            ubar: fp.ubar,
            w: &fp.w,
            eigenvalues: pairs(&stab),
            max_re: stab.max_re,
            hopf: stab.hopf,
            warnings: &stab.warnings,
        },
    )?;
    let mut init = fp.clone();
    if let Some(w) = init.w.first_mut().and_then(|w| w.first_mut()) {
        *w *= 1.0 + p.perturbation;
    }
    let traj = integrate_reduced(&init, &model, p.t_end, &p.integrator)?;
    for a in &traj.advisories {
        eprintln!("advisory: {a}");
    }
    sink.text("trajectory.csv", &traj.to_csv())?;
    for s in &traj.states {
        sink.plot("ubar", s.t, None, s.ubar);
        for (j, w) in s.w.iter().enumerate() {
            for (a, v) in w.iter().enumerate() {
                sink.plot(&format!("w_{}_{a}", j + 1), s.t, None, *v);
            }
        }
    }
    if let Some(g) = &p.hopf_grid {
        let grid = g.points().map_err(CliError::Input)?;
        let seed = make(grid[0])?.initial_state(p.ubar0);
        let found = hopf_sweep(make, &seed, &grid, g.tol)?;
        #[derive(Serialize)]
        struct Bracket {
            d0_lo: f64,
            d0_hi: f64,
            hopf: bool,
            eigenvalues: Vec<[f64; 2]>,
        }
        let out: Vec<Bracket> = found
            .iter()
            .map(|b| Bracket {
                d0_lo: b.d0_lo,
                d0_hi: b.d0_hi,
                hopf: b.stability.hopf,
                eigenvalues: pairs(&b.stability),
            })
            .collect();
        sink.json("hopf.json", &out)?;
    }
    finished(spec.as_ref(), resolved, sink)
}

fn kuramoto(job: &Job) -> CliResult<Finished> {
    let spec = load_spec(job)?;
    let (p, resolved): (KuramotoFile, _) = parse_params(job)?;
    let n = match (&spec, p.n) {
        (Some(s), Some(n)) if n != s.n() => {
            return Err(CliError::Input(format!("params give N = {n} but the spec has {}", s.n())))
        }
        (Some(s), _) => s.n(),
        (None, Some(n)) => n,
        (None, None) => return Err(CliError::Input("params need n when no spec is given".into())),
    };
    p.check(n).map_err(CliError::Input)?;
    let w = match &spec {
        Some(s) => Some(coupling_matrix(s, p.d0.unwrap_or(1.0))?.w),
        None => None,
    };
    let init = OscState {
        theta: p.phases(n),
        z: Complex64::new(p.z0[0], p.z0[1]),
        omega: p.density.sample(n),
    };
    let kp = KuramotoParams {
        kappa_hat: p.kappa_hat,
        alpha: p.alpha,
        gamma0: p.gamma0,
        omega0: p.omega0,
    };
    let run = integrate_kuramoto(&init, &kp, w.as_ref(), p.t_end, &p.integrator)?;
    for a in &run.advisories {
        eprintln!("advisory: {a}");
    }
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    sink.text("kuramoto.csv", &run.to_csv())?;
    for s in &run.samples {
        sink.plot("coherence", s.t, None, s.coherence);
        sink.plot("environment", s.t, None, s.environment);
    }
    #[derive(Serialize)]
    struct Final<'a> {
        theta: &'a [f64],
        omega: &'a [f64],
        z: [f64; 2],
        coherence: f64,
        steps: usize,
        advisories: &'a [String],
    }
    sink.json(
        "final_state.json",
        &Final {
            theta: &run.last.theta,
            omega: &run.last.omega,
            z: [run.last.z.re, run.last.z.im],
            coherence: run.samples.last().map_or(f64::NAN, |s| s.coherence),
            steps: run.steps,
            advisories: &run.advisories,
        },
    )?;
    finished(spec.as_ref(), resolved, sink)
}

/// Closed-form solution when the spec has one compartment at the centre.
fn radial(spec: &ValidatedSpec) -> Option<RadialSolution> {
    let rp = RadialParams::from_spec(spec).ok()?;
    match spec.geometry.dim() {
        2 => radial_exact_disk(&rp).ok(),
        _ => radial_exact_sphere(&rp).ok(),
    }
}

enum Asymptotic {
    Two(Box<SteadyField2D>),
    Three(Box<SteadyField3D>),
}

impl Asymptotic {
    fn solve(spec: &ValidatedSpec) -> sdiff::Result<Self> {
        Ok(match spec.geometry.dim() {
            2 => Asymptotic::Two(Box::new(SteadyField2D::solve(spec)?)),
            _ => Asymptotic::Three(Box::new(SteadyField3D::solve(spec)?)),
        })
    }

    fn outer(&self, x: &[f64]) -> sdiff::Result<f64> {
        match self {
            Asymptotic::Two(f) => f.outer(x),
            Asymptotic::Three(f) => f.outer(x),
        }
    }
}

fn min_ell(spec: &ValidatedSpec) -> f64 {
    spec.compartments.iter().map(|c| c.ell).fold(f64::INFINITY, f64::min)
}

fn fd_grid(spec: &ValidatedSpec, h: Option<f64>, p: &OracleParams) -> CliResult<GridField> {
    let opts = p.fd().map_err(CliError::Input)?;
    let h = match h {
        Some(h) => h,
        None if spec.n() > 0 => spec.epsilon * min_ell(spec) / p.cells_per_radius,
        None => spec.geometry.length_scale() / 100.0,
    };
    let i0 = spec.i0;
    Ok(fd_solve_with_source(spec, h, &|_| i0, &opts)?)
}

/// `n` radii between the compartment surface and the outer boundary.
fn radii(spec: &ValidatedSpec, n: usize) -> Vec<f64> {
    let r_in = spec.epsilon * spec.compartments[0].ell;
    let r_out = match spec.geometry {
        DomainGeometry::Disk2D { radius } => radius,
        DomainGeometry::Sphere3D { r0 } => r0,
        DomainGeometry::Rect2D { l1, l2 } => 0.5 * l1.min(l2),
    };
    (0..n).map(|i| r_in + (r_out - r_in) * (i as f64 + 0.5) / n as f64).collect()
}

fn on_axis(dim: usize, r: f64) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    x[0] = r;
    x
}

fn oracle(job: &Job) -> CliResult<Finished> {
    let spec = require_spec(job)?;
    let (p, resolved): (OracleParams, _) = parse_params(job)?;
    let dim = spec.geometry.dim();
    let asym = Asymptotic::solve(&spec)?;
    let exact = radial(&spec);
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let report = if dim == 2 {
        let grid = fd_grid(&spec, job.h, &p)?;
        sink.text("grid.csv", &grid.to_csv())?;
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = grid.get(i, j);
                if v.is_finite() {
                    let c = grid.center(i, j);
                    sink.plot("u_fd", c[0], Some(c[1]), v);
                }
            }
        }
        let probes = p.probes.clone().unwrap_or_else(|| lattice(&spec.geometry, job.grid));
        compare(|x| asym.outer(x), |x| grid.value(x), &probes, Some(&spec))?
    } else {
        let exact = exact.as_ref().ok_or_else(|| {
            sdiff::Error::Unsupported("the 3D oracle needs a ball with one compartment at the centre".into())
        })?;
        let probes = p
            .probes
            .clone()
            .unwrap_or_else(|| radii(&spec, job.grid).into_iter().map(|r| on_axis(3, r)).collect());
        compare(|x| asym.outer(x), |x| exact.eval(x), &probes, Some(&spec))?
    };
    sink.json("error_report.json", &report)?;
    if let Some(exact) = &exact {
        let mut rows = Vec::new();
        for r in radii(&spec, job.grid) {
            let x = on_axis(dim, r);
            let u_asym = asym.outer(&x).unwrap_or(f64::NAN);
            let u = exact.u(r)?;
            sink.plot("u_exact", r, None, u);
            rows.push(vec![r, u, u_asym]);
        }
        sink.text("radial.csv", &csv(&["r", "u_exact", "u_asymptotic"], &rows))?;
    }
    finished(Some(&spec), resolved, sink)
}

fn compare_eps(job: &Job) -> CliResult<Finished> {
    let base = job.spec.as_ref().ok_or_else(|| CliError::Usage("compare needs --spec".into()))?;
    let (p, resolved): (OracleParams, _) = parse_params(job)?;
    let eps0 = problem_spec(base)?.epsilon;
    let epsilons = job.epsilons.clone().unwrap_or_else(|| vec![eps0, eps0 / 2.0, eps0 / 4.0]);
    let mut specs = Vec::with_capacity(epsilons.len());
    for &e in &epsilons {
        let mut v = base.clone();
        v["epsilon"] = Value::from(e);
        specs.push(validate(&problem_spec(&v)?)?);
    }
    // A common probe set: clear of every compartment at the largest epsilon.
    let eps_max = epsilons.iter().copied().fold(0.0, f64::max);
    let first = &specs[0];
    let clear = |x: &[f64]| {
        first.compartments.iter().all(|c| {
            let d: f64 = x.iter().zip(&c.center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            d > eps_max * (c.ell + 1.0) * (1.0 + 1e-9)
        })
    };
    let probes: Vec<Vec<f64>> = p
        .probes
        .clone()
        .unwrap_or_else(|| lattice(&first.geometry, job.grid))
        .into_iter()
        .filter(|x| clear(x))
        .collect();
    let mut reports: Vec<ErrorReport> = Vec::new();
    for spec in &specs {
        let asym = Asymptotic::solve(spec)?;
        let rep = match radial(spec) {
            Some(exact) => compare(|x| asym.outer(x), |x| exact.eval(x), &probes, Some(spec))?,
            None if spec.geometry.dim() == 2 => {
                let grid = fd_grid(spec, job.h, &p)?;
                compare(|x| asym.outer(x), |x| grid.value(x), &probes, Some(spec))?
            }
            None => {
                return Err(sdiff::Error::Unsupported(
                    "3D comparison needs a ball with one compartment at the centre".into(),
                )
                .into())
            }
        };
        reports.push(rep);
    }
    let max_abs: Vec<f64> = reports.iter().map(|r| r.max_abs).collect();
    let order = if epsilons.len() >= 2 && max_abs.iter().all(|e| *e > 0.0) {
        Some(observed_order(&epsilons, &max_abs)?)
    } else {
        None
    };
    let mut sink = Sink::new(&job.out, job.emit_plot_data);
    let rows: Vec<Vec<f64>> = specs
        .iter()
        .zip(&reports)
        .map(|(s, r)| vec![s.epsilon, s.nu, r.max_abs, r.max_rel, r.mean_abs, r.mean_rel, r.probes.len() as f64])
        .collect();
    for r in &rows {
        sink.plot("max_abs", r[0], None, r[2]);
        sink.plot("max_rel", r[0], None, r[3]);
    }
    sink.text(
        "compare.csv",
        &csv(&["epsilon", "nu", "max_abs", "max_rel", "mean_abs", "mean_rel", "probes"], &rows),
    )?;
    #[derive(Serialize)]
    struct Comparison<'a> {
        epsilons: &'a [f64],
        order: Option<f64>,
        reports: &'a [ErrorReport],
    }
    sink.json(
        "compare.json",
        &Comparison {
            epsilons: &epsilons,
            order,
            reports: &reports,
        },
    )?;
    finished(Some(first), resolved, sink)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_stays_inside() {
        let disk = DomainGeometry::Disk2D { radius: 1.0 };
        let pts = lattice(&disk, 41);
        assert!(pts.iter().all(|x| disk.contains(x)));
        assert!(pts.iter().any(|x| x[0] == 0.0 && x[1] == 0.0));
        let ball = lattice(&DomainGeometry::Sphere3D { r0: 2.0 }, 10);
        assert!(ball.iter().all(|x| x.len() == 3 && x[2] == 0.0));
        assert_eq!(lattice(&DomainGeometry::Rect2D { l1: 2.0, l2: 1.0 }, 7).len(), 49);
    }
}
