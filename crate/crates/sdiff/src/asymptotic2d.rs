//! Matched-asymptotic steady states in 2D.
//!
//! Each compartment contributes a log-strength `A_j`. The outer field is
//! `u = -2 pi nu D sum A_k G(x, x_k)`, plus the far-field constant `u_inf`
//! when there is no bulk degradation, and the inner field around compartment
//! `j` is `U_j(rho) = Phi_j + nu A_j ln(rho / ell_j)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, BoundaryModel, CompartmentSpec, ValidatedSpec};
use crate::greens::{interaction_matrix_with, Green, GreenMode, InteractionMatrix};
use crate::kinetics::{Kinetics, KineticsSpec};
use crate::linalg::{rel_residual, Factored};
use crate::special::{bessel_i, interface_F};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients2D {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub u_inf: Option<f64>,
    #[serde(rename = "Psi")]
    pub psi: Vec<f64>,
    pub c0: Vec<f64>,
    pub nu: f64,
    /// Relative residual of the linear solve.
    pub residual: f64,
    pub cond: f64,
}

impl Coefficients2D {
    /// `Phi_j = c_{j,0} + nu A_j Psi_j`, the inner value at `rho = ell_j`.
    pub fn phi(&self, j: usize) -> f64 {
        if self.psi[j].is_infinite() {
            return self.c0[j];
        }
        self.c0[j] + self.nu * self.a[j] * self.psi[j]
    }
}

/// Interface constants `(c_{j,0}, Psi_j)` of a model I or II compartment.
fn interface_constants(comp: &CompartmentSpec, d: f64) -> Result<(f64, f64)> {
    match &comp.model {
        BoundaryModel::ModelI { c0 } => Ok((*c0, robin_psi(comp, d))),
        BoundaryModel::ModelII { .. } => {
            let m2 = model2_constants_2d(comp, d)?;
            Ok((m2.c0, m2.psi))
        }
        BoundaryModel::ModelIII { .. } => Err(Error::Unsupported(
            "model III compartments need solve_model3_2d".into(),
        )),
    }
}

pub(crate) fn robin_psi(comp: &CompartmentSpec, d: f64) -> f64 {
    match comp.kappa {
        None => 0.0,
        Some(k) if k == 0.0 => f64::INFINITY,
        Some(k) => d / (k * comp.ell),
    }
}

/// Linear map from boundary values to strengths, `A = L c + l0`, plus the
/// far-field weights `s` with `u_inf = s . c` when `gamma0 = 0`.
struct StrengthMap {
    l: DMatrix<f64>,
    offset: DVector<f64>,
    s: Option<DVector<f64>>,
    cond: f64,
    system: DMatrix<f64>,
}

fn strength_map(spec: &ValidatedSpec, m: &InteractionMatrix, psi: &[f64]) -> Result<StrengthMap> {
    let n = spec.n();
    let nu = spec.nu;
    let mut sys = DMatrix::identity(n, n) + m.entries.scale(2.0 * PI * spec.d * nu);
    for j in 0..n {
        if psi[j].is_infinite() {
            // inert compartment: A_j = 0
            sys.row_mut(j).fill(0.0);
            sys[(j, j)] = 1.0;
        } else {
            sys[(j, j)] += nu * psi[j];
        }
    }
    let f = Factored::new(sys.clone())?;
    let inv = f.inverse();
    let inert: Vec<bool> = psi.iter().map(|p| p.is_infinite()).collect();
    let mut mask = DMatrix::identity(n, n);
    for j in 0..n {
        if inert[j] {
            mask[(j, j)] = 0.0;
        }
    }
    let shift = spec.source_shift();
    if spec.gamma0 > 0.0 {
        let l = -(&inv * &mask);
        let offset = &inv * (&mask * DVector::from_element(n, shift));
        Ok(StrengthMap {
            l,
            offset,
            s: None,
            cond: f.cond,
            system: sys,
        })
    } else {
        // A = inv (u_inf 1 - c) on the active rows, with sum A = 0
        let ones = &mask * DVector::from_element(n, 1.0);
        let inv_m = &inv * &mask;
        let w = inv_m.transpose() * DVector::from_element(n, 1.0);
        let total = ones.dot(&w);
        if total.abs() < 1e-300 {
            return Err(Error::Degenerate(
                "no absorbing compartment fixes the far-field constant".into(),
            ));
        }
        let s = w / total;
        let l = &inv * (&ones * s.transpose()) - &inv_m;
        Ok(StrengthMap {
            l,
            offset: DVector::zeros(n),
            s: Some(s),
            cond: f.cond,
            system: sys,
        })
    }
}

/// Steady 2D field for model I and II compartments.
#[derive(Debug, Clone)]
pub struct SteadyField2D {
    pub coefficients: Coefficients2D,
    pub spec: ValidatedSpec,
    pub matrix: InteractionMatrix,
    green: Green,
}

fn check_2d(spec: &ValidatedSpec) -> Result<()> {
    if spec.geometry.dim() != 2 {
        return Err(Error::Unsupported("2D solver needs a 2D geometry".into()));
    }
    Ok(())
}

fn green_for(spec: &ValidatedSpec) -> Result<Green> {
    let mode = if spec.gamma0 > 0.0 {
        GreenMode::Helmholtz { gamma: spec.gamma0 }
    } else {
        GreenMode::Laplace
    };
    Green::new(&spec.geometry, spec.d, mode)
}

fn solve_with(spec: &ValidatedSpec, green: &Green, m: &InteractionMatrix) -> Result<Coefficients2D> {
    let n = spec.n();
    let mut c0 = Vec::with_capacity(n);
    let mut psi = Vec::with_capacity(n);
    for comp in &spec.compartments {
        let (c, p) = interface_constants(comp, green.d())?;
        c0.push(c);
        psi.push(p);
    }
    let map = strength_map(spec, m, &psi)?;
    let c = DVector::from_column_slice(&c0);
    let a = &map.l * &c + &map.offset;
    let u_inf = map.s.as_ref().map(|s| s.dot(&c));
    // residual of the defining system
    let shift = spec.source_shift();
    let rhs = DVector::from_fn(n, |j, _| {
        if psi[j].is_infinite() {
            0.0
        } else {
            u_inf.unwrap_or(0.0) - (c0[j] - shift)
        }
    });
    let residual = rel_residual(&map.system, &a, &rhs);
    Ok(Coefficients2D {
        a: a.iter().copied().collect(),
        u_inf,
        psi,
        c0,
        nu: spec.nu,
        residual,
        cond: map.cond,
    })
}

/// Strength coefficients for model I (and model II) compartments.
pub fn solve_model1_2d(spec: &ValidatedSpec) -> Result<Coefficients2D> {
    Ok(SteadyField2D::solve(spec)?.coefficients)
}

impl SteadyField2D {
    pub fn solve(spec: &ValidatedSpec) -> Result<Self> {
        check_2d(spec)?;
        let green = green_for(spec)?;
        let matrix = interaction_matrix_with(&green, spec)?;
        let coefficients = solve_with(spec, &green, &matrix)?;
        Ok(SteadyField2D {
            coefficients,
            spec: spec.clone(),
            matrix,
            green,
        })
    }

    pub fn green(&self) -> &Green {
        &self.green
    }

    /// Outer field at `x`, at least `2 epsilon` from every centre.
    pub fn outer(&self, x: &[f64]) -> Result<f64> {
        eval_outer_2d(self, x)
    }

    pub fn inner(&self, j: usize, rho: f64) -> Result<f64> {
        eval_inner_2d(self, j, rho)
    }
}

pub(crate) fn outer_sum(
    green: &Green,
    spec: &ValidatedSpec,
    a: &[f64],
    x: &[f64],
) -> Result<f64> {
    let mut s = 0.0;
    for (k, comp) in spec.compartments.iter().enumerate() {
        if a[k] != 0.0 {
            s += a[k] * green.value(x, &comp.center)?;
        }
    }
    Ok(s)
}

fn check_outer_point(spec: &ValidatedSpec, x: &[f64]) -> Result<()> {
    for (k, comp) in spec.compartments.iter().enumerate() {
        let r = dist(x, &comp.center);
        if r < 2.0 * spec.epsilon {
            return Err(Error::UseInner {
                index: k,
                distance: r,
            });
        }
    }
    Ok(())
}

pub fn eval_outer_2d(field: &SteadyField2D, x: &[f64]) -> Result<f64> {
    let spec = &field.spec;
    check_outer_point(spec, x)?;
    let co = &field.coefficients;
    let base = co.u_inf.unwrap_or(0.0) + spec.source_shift();
    let s = outer_sum(&field.green, spec, &co.a, x)?;
    Ok(base - 2.0 * PI * co.nu * spec.d * s)
}

pub fn eval_inner_2d(field: &SteadyField2D, j: usize, rho: f64) -> Result<f64> {
    let comp = field
        .spec
        .compartments
        .get(j)
        .ok_or_else(|| Error::Domain(format!("no compartment {j}")))?;
    if !(rho >= comp.ell) {
        return Err(Error::Domain(format!(
            "inner radius {rho} lies inside the compartment (ell = {})",
            comp.ell
        )));
    }
    let co = &field.coefficients;
    Ok(co.phi(j) + co.nu * co.a[j] * (rho / comp.ell).ln())
}

/// Interface data of a semipermeable (model II) disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model2Constants2D {
    pub c0: f64,
    pub psi: f64,
    pub beta: f64,
    pub f: f64,
    pub dbar: f64,
    pub ell: f64,
    pub d: f64,
}

impl Model2Constants2D {
    /// `Phibar = nu A D / (Dbar F(beta ell))`.
    pub fn phibar(&self, nu: f64, a: f64) -> f64 {
        nu * a * self.d / (self.dbar * self.f)
    }

    /// Interior profile `V(rho) = c0 + Phibar I0(beta rho) / I0(beta ell)`.
    pub fn profile(&self, nu: f64, a: f64, rho: f64) -> Result<f64> {
        if !(0.0..=self.ell).contains(&rho) {
            return Err(Error::Domain(format!(
                "interior radius {rho} outside [0, {}]",
                self.ell
            )));
        }
        let ratio = bessel_i(0, self.beta * rho)? / bessel_i(0, self.beta * self.ell)?;
        Ok(self.c0 + self.phibar(nu, a) * ratio)
    }
}

pub fn model2_constants_2d(comp: &CompartmentSpec, d: f64) -> Result<Model2Constants2D> {
    let BoundaryModel::ModelII {
        dbar,
        gammabar,
        ibar,
    } = comp.model
    else {
        return Err(Error::Unsupported("compartment is not model II".into()));
    };
    if !(gammabar > 0.0) {
        return Err(Error::Unsupported(
            "model II needs gammabar > 0 for an interior steady state".into(),
        ));
    }
    let beta = (gammabar / dbar).sqrt();
    let f = interface_F(beta * comp.ell);
    let robin = match comp.kappa {
        None => 0.0,
        Some(k) => d / (k * comp.ell),
    };
    Ok(Model2Constants2D {
        c0: ibar / gammabar,
        psi: robin + d / (dbar * f),
        beta,
        f,
        dbar,
        ell: comp.ell,
        d,
    })
}

/// Steady number of particles inside model II compartment `j`.
pub fn receptor_count(field: &SteadyField2D, j: usize) -> Result<f64> {
    let comp = &field.spec.compartments[j];
    let BoundaryModel::ModelII {
        gammabar, ibar, ..
    } = comp.model
    else {
        return Err(Error::Unsupported("receptor count needs a model II compartment".into()));
    };
    let eps = field.spec.epsilon;
    let co = &field.coefficients;
    Ok(PI * eps * eps * comp.ell * comp.ell * ibar / gammabar
        + 2.0 * PI * co.nu * field.spec.d * co.a[j] * eps * eps / gammabar)
}

/// A steady state of the model III system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model3Root {
    /// Concentrations `w_j` per compartment.
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    pub u_inf: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton settings shared by the 2D and 3D model III solvers.
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub max_iter: usize,
    pub tol: f64,
    pub dedupe: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 100,
            tol: 1e-11,
            dedupe: 1e-6,
        }
    }
}

pub(crate) fn model3_kinetics(spec: &ValidatedSpec) -> Result<Vec<KineticsSpec>> {
    spec.compartments
        .iter()
        .map(|c| match &c.model {
            BoundaryModel::ModelIII { kinetics, .. } => Ok(kinetics.clone()),
            _ => Err(Error::Unsupported(
                "every compartment must be model III".into(),
            )),
        })
        .collect()
}

/// Starting points: the spec's `w0`, each isolated-kinetics root, then the
/// caller's guesses.
pub(crate) fn model3_seeds(
    spec: &ValidatedSpec,
    kin: &[KineticsSpec],
    guesses: &[Vec<Vec<f64>>],
) -> Vec<Vec<Vec<f64>>> {
    let mut seeds = Vec::new();
    seeds.push(
        spec.compartments
            .iter()
            .map(|c| match &c.model {
                BoundaryModel::ModelIII { w0, .. } => w0.clone(),
                _ => Vec::new(),
            })
            .collect(),
    );
    let per: Vec<Vec<Vec<f64>>> = kin.iter().map(|k| k.seeds()).collect();
    let count = per.iter().map(|s| s.len()).min().unwrap_or(0);
    for i in 0..count {
        seeds.push(per.iter().map(|s| s[i].clone()).collect());
    }
    seeds.extend(guesses.iter().cloned());
    seeds
}

/// Damped Newton on `F(w) = f(w_j) + coupling`, where the coupling is
/// `(L c + l0)_j` on species 0 with `c_j = w_{j,0}`. Returns the solution and
/// iteration count.
pub(crate) fn newton_coupled(
    kin: &[KineticsSpec],
    coupling: &DMatrix<f64>,
    offset: &DVector<f64>,
    start: &[Vec<f64>],
    opts: NewtonOptions,
) -> Result<(Vec<Vec<f64>>, f64, usize)> {
    let n = kin.len();
    let sizes: Vec<usize> = kin.iter().map(|k| k.species()).collect();
    let starts: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s;
            Some(o)
        })
        .collect();
    let dim: usize = sizes.iter().sum();
    for (j, w) in start.iter().enumerate() {
        if w.len() != sizes[j] {
            return Err(Error::Domain(format!(
                "initial guess for compartment {} has {} species, expected {}",
                j + 1,
                w.len(),
                sizes[j]
            )));
        }
    }
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let mut f = DVector::zeros(dim);
        let c = DVector::from_fn(n, |j, _| x[starts[j]]);
        let cpl = coupling * &c + offset;
        for j in 0..n {
            let r = kin[j].rate_vec(&x.as_slice()[starts[j]..starts[j] + sizes[j]]);
            for (a, v) in r.iter().enumerate() {
                f[starts[j] + a] = *v;
            }
            f[starts[j]] += cpl[j];
        }
        f
    };
    let jacobian = |x: &DVector<f64>| -> DMatrix<f64> {
        let mut jm = DMatrix::zeros(dim, dim);
        for j in 0..n {
            let jj = kin[j].jacobian(&x.as_slice()[starts[j]..starts[j] + sizes[j]]);
            jm.view_mut((starts[j], starts[j]), (sizes[j], sizes[j]))
                .copy_from(&jj);
            for k in 0..n {
                jm[(starts[j], starts[k])] += coupling[(j, k)];
            }
        }
        jm
    };
    let mut x = DVector::from_iterator(dim, start.iter().flatten().copied());
    let mut f = residual(&x);
    let mut fn0 = f.amax();
    let mut history = vec![fn0];
    for it in 0..opts.max_iter {
        if fn0 <= opts.tol {
            return Ok((unflatten(&x, &starts, &sizes), fn0, it));
        }
        let jm = jacobian(&x);
        let step = match jm.clone().lu().solve(&(-&f)) {
            Some(s) if s.iter().all(|v| v.is_finite()) => s,
            _ => break,
        };
        let mut t = 1.0;
        loop {
            let xn = &x + &step * t;
            let fnew = residual(&xn);
            let nn = fnew.amax();
            if nn.is_finite() && (nn < fn0 * (1.0 - 1e-4 * t) || t < 1e-4) {
                x = xn;
                f = fnew;
                fn0 = nn;
                break;
            }
            t *= 0.5;
        }
        history.push(fn0);
        if step.amax() * t <= 1e-15 * x.amax().max(1.0) && fn0 <= opts.tol * 100.0 {
            return Ok((unflatten(&x, &starts, &sizes), fn0, it + 1));
        }
    }
    if fn0 <= opts.tol {
        return Ok((unflatten(&x, &starts, &sizes), fn0, opts.max_iter));
    }
    Err(Error::Convergence {
        iterations: history.len() - 1,
        last_residual: fn0,
        history,
    })
}

fn unflatten(x: &DVector<f64>, starts: &[usize], sizes: &[usize]) -> Vec<Vec<f64>> {
    starts
        .iter()
        .zip(sizes)
        .map(|(&s, &n)| x.as_slice()[s..s + n].to_vec())
        .collect()
}

pub(crate) fn dedupe_roots(roots: Vec<Model3Root>, tol: f64) -> Vec<Model3Root> {
    let mut out: Vec<Model3Root> = Vec::new();
    for r in roots {
        let dup = out.iter().any(|o| {
            o.w.iter()
                .flatten()
                .zip(r.w.iter().flatten())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
                < tol
        });
        if !dup {
            out.push(r);
        }
    }
    out
}

/// Steady states of compartments with internal kinetics that exchange
/// species 0 with the bulk. Returns every distinct root reached from the
/// seeds; fails only if no seed converges.
pub fn solve_model3_2d(
    spec: &ValidatedSpec,
    guesses: &[Vec<Vec<f64>>],
    opts: NewtonOptions,
) -> Result<Vec<Model3Root>> {
    check_2d(spec)?;
    let kin = model3_kinetics(spec)?;
    let green = green_for(spec)?;
    let m = interaction_matrix_with(&green, spec)?;
    let psi: Vec<f64> = spec
        .compartments
        .iter()
        .map(|c| robin_psi(c, spec.d))
        .collect();
    let map = strength_map(spec, &m, &psi)?;
    let scale = 2.0 * PI * spec.d * spec.nu;
    let coupling = map.l.scale(scale);
    let offset = map.offset.scale(scale);
    let mut roots = Vec::new();
    let mut last_err = None;
    for seed in model3_seeds(spec, &kin, guesses) {
        match newton_coupled(&kin, &coupling, &offset, &seed, opts) {
            Ok((w, res, it)) => {
                let c = DVector::from_fn(kin.len(), |j, _| w[j][0]);
                let a = &map.l * &c + &map.offset;
                roots.push(Model3Root {
                    u_inf: map.s.as_ref().map(|s| s.dot(&c)),
                    a: a.iter().copied().collect(),
                    w,
                    residual: res,
                    iterations: it,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    if roots.is_empty() {
        return Err(last_err.unwrap_or(Error::Convergence {
            iterations: 0,
            last_residual: f64::NAN,
            history: Vec::new(),
        }));
    }
    Ok(dedupe_roots(roots, opts.dedupe))
}

/// The model I field generated by a model III root, with `c_{j,0} = w_{j,0}`.
pub fn model3_field_2d(spec: &ValidatedSpec, root: &Model3Root) -> Result<SteadyField2D> {
    let mut s = spec.spec.clone();
    for (c, w) in s.compartments.iter_mut().zip(&root.w) {
        c.model = BoundaryModel::ModelI { c0: w[0] };
    }
    let v = ValidatedSpec {
        spec: s,
        nu: spec.nu,
        warnings: spec.warnings.clone(),
    };
    SteadyField2D::solve(&v)
}

/// Two-state switching release: compartments absorb (`u = 0`) in one state
/// and release a flux `J_j` in the other.
#[derive(Debug, Clone)]
pub struct VolumeTransmission2D {
    /// Boundary values of the mean field in the releasing state.
    pub phi: Vec<f64>,
    /// Far-field constant of the total mean field.
    pub u_inf: f64,
    /// Strengths of the total mean field (Laplace stage).
    pub a_total: Vec<f64>,
    /// Strengths of the homogeneous Helmholtz part of the releasing field.
    pub b_release: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    spec: ValidatedSpec,
    g0: Green,
    gg: Green,
}

impl VolumeTransmission2D {
    /// Total mean field `u0 + u1` away from the compartments.
    pub fn total(&self, x: &[f64]) -> Result<f64> {
        check_outer_point(&self.spec, x)?;
        let s = outer_sum(&self.g0, &self.spec, &self.a_total, x)?;
        Ok(self.u_inf - 2.0 * PI * self.spec.d * self.spec.nu * s)
    }

    /// Mean field in the releasing state away from the compartments.
    pub fn release(&self, x: &[f64]) -> Result<f64> {
        check_outer_point(&self.spec, x)?;
        let (d, nu) = (self.spec.d, self.spec.nu);
        let gamma = self.alpha + self.beta;
        let mut diff = 0.0;
        let mut hom = 0.0;
        for (k, comp) in self.spec.compartments.iter().enumerate() {
            let g0 = self.g0.value(x, &comp.center)?;
            let gg = self.gg.value(x, &comp.center)?;
            diff += self.a_total[k] * (g0 - gg);
            hom += self.b_release[k] * gg;
        }
        Ok(self.beta / gamma * (self.u_inf - 2.0 * PI * d * nu * diff) - 2.0 * PI * d * nu * hom)
    }
}

/// Solve the switching-release problem. `flux[j]` is the release rate per
/// unit boundary length of compartment `j` (positive into the bulk); `alpha`
/// and `beta` are the switching rates into the absorbing and releasing state.
pub fn volume_transmission_2d(
    spec: &ValidatedSpec,
    flux: &[f64],
    alpha: f64,
    beta: f64,
) -> Result<VolumeTransmission2D> {
    check_2d(spec)?;
    let n = spec.n();
    if flux.len() != n {
        return Err(Error::Domain(format!(
            "flux has {} entries for {n} compartments",
            flux.len()
        )));
    }
    if !(alpha >= 0.0 && beta >= 0.0 && alpha + beta > 0.0) {
        return Err(Error::Domain("switching rates must be nonnegative with a positive sum".into()));
    }
    let gamma = alpha + beta;
    let (d, nu, eps) = (spec.d, spec.nu, spec.epsilon);
    let g0 = Green::laplace(&spec.geometry, d)?;
    let gg = Green::helmholtz(&spec.geometry, d, gamma)?;
    let m0 = interaction_matrix_with(&g0, spec)?;
    let mg = interaction_matrix_with(&gg, spec)?;
    let id = DMatrix::<f64>::identity(n, n);
    let scale = 2.0 * PI * d * nu;

    // stage 1: A = P phi, u_inf = s . phi
    let inv0 = Factored::new(&id + m0.entries.scale(scale))?.inverse();
    let w = inv0.transpose() * DVector::from_element(n, 1.0);
    let s = &w / w.sum();
    let ones = DVector::from_element(n, 1.0);
    let p = &inv0 * (&ones * s.transpose() - &id);

    // stage 2: value of the particular solution at each centre, Gamma = G phi
    let k = &m0.entries - &mg.entries;
    let gmat = (&ones * s.transpose() - (&k * &p).scale(scale)).scale(beta / gamma);
    let sys_g = &id + mg.entries.scale(scale);

    // flux closure: B_j = -eps ell_j p1 J_j / (D nu), with B = (I + nu M)^-1 (Gamma - phi)
    // and p1 = beta / gamma the occupancy of the releasing state
    let p1 = beta / gamma;
    let b = DVector::from_fn(n, |j, _| -eps * spec.compartments[j].ell * p1 * flux[j] / (d * nu));
    let composed = Factored::new(&gmat - &id)?;
    let phi = composed.solve(&(&sys_g * &b));
    let a_total = &p * &phi;
    Ok(VolumeTransmission2D {
        u_inf: s.dot(&phi),
        phi: phi.iter().copied().collect(),
        a_total: a_total.iter().copied().collect(),
        b_release: b.iter().copied().collect(),
        alpha,
        beta,
        spec: spec.clone(),
        g0,
        gg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{validate, DomainGeometry, ProblemSpec};
    use proptest::prelude::*;

    fn spec(comps: Vec<CompartmentSpec>, gamma0: f64, eps: f64) -> ValidatedSpec {
        validate(&ProblemSpec {
            geometry: DomainGeometry::unit_disk(),
            compartments: comps,
            d: 1.0,
            gamma0,
            i0: 0.0,
            epsilon: eps,
            sep_min: None,
        })
        .unwrap()
    }

    fn three(gamma0: f64, kappa: Option<f64>) -> ValidatedSpec {
        spec(
            vec![
                CompartmentSpec::model1(vec![0.3, 0.1], 1.0, kappa, 1.0),
                CompartmentSpec::model1(vec![-0.4, 0.3], 0.8, kappa, 2.0),
                CompartmentSpec::model1(vec![0.0, -0.5], 0.9, kappa, 0.5),
            ],
            gamma0,
            0.02,
        )
    }

    #[test]
    fn residual_and_constraint() {
        let c = solve_model1_2d(&three(1.0, Some(2.0))).unwrap();
        assert!(c.residual < 1e-12, "{}", c.residual);
        assert!(c.u_inf.is_none());
        let c = solve_model1_2d(&three(0.0, None)).unwrap();
        assert!(c.residual < 1e-12);
        assert!(c.a.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn single_compartment_zero_degradation() {
        let s = spec(vec![CompartmentSpec::model1(vec![0.2, 0.2], 1.0, None, 3.0)], 0.0, 0.05);
        let c = solve_model1_2d(&s).unwrap();
        assert!(c.a[0].abs() < 1e-14);
        assert!((c.u_inf.unwrap() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn equal_values_give_constant_field() {
        let mut s = three(0.0, Some(1.0));
        for c in &mut s.spec.compartments {
            c.model = BoundaryModel::ModelI { c0: 1.7 };
        }
        let f = SteadyField2D::solve(&s).unwrap();
        for x in [[0.5, 0.5], [-0.7, 0.0], [0.1, 0.9]] {
            assert!((f.outer(&x).unwrap() - 1.7).abs() < 1e-12);
        }
    }

    #[test]
    fn small_nu_limit() {
        let s = spec(
            vec![
                CompartmentSpec::model1(vec![0.3, 0.1], 1.0, None, 1.0),
                CompartmentSpec::model1(vec![-0.4, 0.3], 1.0, None, 2.0),
            ],
            1.0,
            1e-12,
        );
        let c = solve_model1_2d(&s).unwrap();
        // nu ~ 0.036; A = -c + O(nu)
        assert!((c.a[0] + 1.0).abs() < 0.2 && (c.a[1] + 2.0).abs() < 0.3);
        let tiny = ValidatedSpec { nu: 1e-9, ..s };
        let c = solve_model1_2d(&tiny).unwrap();
        assert!((c.a[0] + 1.0).abs() < 1e-7 && (c.a[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn inner_robin_condition() {
        let s = three(1.0, Some(2.5));
        let f = SteadyField2D::solve(&s).unwrap();
        for j in 0..3 {
            let comp = &s.compartments[j];
            let co = &f.coefficients;
            assert_eq!(f.inner(j, comp.ell).unwrap(), co.phi(j));
            let du = co.nu * co.a[j] / comp.ell;
            let res = s.d * du - 2.5 * (f.inner(j, comp.ell).unwrap() - co.c0[j]);
            assert!(res.abs() < 1e-12, "{res}");
        }
        assert!(matches!(f.inner(0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(f.outer(&[0.3, 0.11]), Err(Error::UseInner { index: 0, .. })));
    }

    #[test]
    fn robin_converges_to_dirichlet() {
        let dir = solve_model1_2d(&three(1.0, None)).unwrap();
        let mut prev = f64::INFINITY;
        for k in [10.0, 1e2, 1e3, 1e4] {
            let c = solve_model1_2d(&three(1.0, Some(k))).unwrap();
            let d = c
                .a
                .iter()
                .zip(&dir.a)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(d < prev, "{d} {prev}");
            prev = d;
        }
        assert!(prev < 1e-4);
    }

    #[test]
    fn inert_compartment() {
        let s = spec(
            vec![
                CompartmentSpec::model1(vec![0.3, 0.1], 1.0, Some(0.0), 5.0),
                CompartmentSpec::model1(vec![-0.4, 0.3], 1.0, None, 2.0),
            ],
            0.0,
            0.02,
        );
        let c = solve_model1_2d(&s).unwrap();
        assert_eq!(c.a[0], 0.0);
        assert!((c.u_inf.unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matching_in_overlap() {
        // outer and inner agree at rho = eps^{-1/2} up to O(nu^2)-sized terms
        let mut prev = f64::INFINITY;
        for eps in [0.05, 0.025, 0.0125] {
            let mut s = three(1.0, Some(3.0));
            s.spec.epsilon = eps;
            let s = validate(&s.spec).unwrap();
            let f = SteadyField2D::solve(&s).unwrap();
            let mut worst: f64 = 0.0;
            for j in 0..3 {
                let xj = &s.compartments[j].center;
                let r = eps.sqrt();
                let x = [xj[0] + r, xj[1]];
                let o = f.outer(&x).unwrap();
                let i = f.inner(j, r / eps).unwrap();
                worst = worst.max((o - i).abs());
            }
            assert!(worst < prev);
            assert!(worst < 5.0 * eps.sqrt(), "{worst}");
            prev = worst;
        }
    }

    #[test]
    fn model2_interface_conditions() {
        let comp = CompartmentSpec {
            center: vec![0.1, 0.2],
            ell: 1.0,
            kappa: Some(3.0),
            model: BoundaryModel::ModelII {
                dbar: 0.5,
                gammabar: 2.0,
                ibar: 1.0,
            },
            shape: None,
            dipole: None,
        };
        let (d, nu, a) = (1.3, 0.25, -0.7);
        let m = model2_constants_2d(&comp, d).unwrap();
        assert_eq!(m.c0, 0.5);
        let phi = m.c0 + nu * a * m.psi;
        let u_l = phi;
        let du = nu * a / comp.ell;
        let v_l = m.profile(nu, a, comp.ell).unwrap();
        let h = 1e-5;
        let dv = (m.profile(nu, a, comp.ell).unwrap() - m.profile(nu, a, comp.ell - h).unwrap()) / h;
        let dv_exact = m.phibar(nu, a) * m.f / comp.ell;
        assert!((dv - dv_exact).abs() < 1e-4);
        assert!((d * du - m.dbar * dv_exact).abs() < 1e-10);
        assert!((d * du - 3.0 * (u_l - v_l)).abs() < 1e-10);

        let mut dir = comp.clone();
        dir.kappa = None;
        let m = model2_constants_2d(&dir, d).unwrap();
        assert!((m.psi - d / (0.5 * m.f)).abs() < 1e-15);

        let mut bad = comp.clone();
        bad.model = BoundaryModel::ModelII {
            dbar: 1.0,
            gammabar: 0.0,
            ibar: 1.0,
        };
        assert!(matches!(model2_constants_2d(&bad, d), Err(Error::Unsupported(_))));
    }

    fn model3_comp(center: Vec<f64>, kin: KineticsSpec, w0: Vec<f64>) -> CompartmentSpec {
        CompartmentSpec {
            center,
            ell: 1.0,
            kappa: Some(2.0),
            model: BoundaryModel::ModelIII {
                k: kin.species(),
                kinetics: kin,
                w0,
            },
            shape: None,
            dipole: None,
        }
    }

    #[test]
    fn model3_decoupled_and_linear() {
        let kin = KineticsSpec::Linear {
            lambda: 2.0,
            b: vec![1.0, 0.5],
        };
        let s = spec(
            vec![
                model3_comp(vec![0.3, 0.0], kin.clone(), vec![0.0, 0.0]),
                model3_comp(vec![-0.3, 0.2], kin.clone(), vec![0.0, 0.0]),
            ],
            1.0,
            0.02,
        );
        let roots = solve_model3_2d(&s, &[], NewtonOptions::default()).unwrap();
        assert_eq!(roots.len(), 1);
        // independent elimination: -lambda w + 2 pi D nu A = -b on species 0
        let f = SteadyField2D::solve(&model1_like(&s, &[1.0, 0.0])).unwrap();
        let g = SteadyField2D::solve(&model1_like(&s, &[0.0, 1.0])).unwrap();
        let k = 2.0 * PI * s.nu;
        let m = [
            [-2.0 + k * f.coefficients.a[0], k * g.coefficients.a[0]],
            [k * f.coefficients.a[1], -2.0 + k * g.coefficients.a[1]],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let w0 = (-m[1][1] + m[0][1]) / det;
        let w1 = (m[1][0] - m[0][0]) / det;
        assert!((roots[0].w[0][0] - w0).abs() < 1e-12, "{} {w0}", roots[0].w[0][0]);
        assert!((roots[0].w[1][0] - w1).abs() < 1e-12);
        assert!((roots[0].w[0][1] - 0.25).abs() < 1e-12);

        let dec = ValidatedSpec { nu: 0.0, ..s.clone() };
        let roots = solve_model3_2d(&dec, &[], NewtonOptions::default()).unwrap();
        assert!((roots[0].w[0][0] - 0.5).abs() < 1e-14);
    }

    fn model1_like(s: &ValidatedSpec, c: &[f64]) -> ValidatedSpec {
        let mut t = s.clone();
        for (comp, v) in t.spec.compartments.iter_mut().zip(c) {
            comp.model = BoundaryModel::ModelI { c0: *v };
        }
        t
    }

    #[test]
    fn model3_flux_balance() {
        let kin = KineticsSpec::Selkov {
            a: 0.1,
            b: 0.6,
            rate: 1.0,
        };
        let s = spec(
            vec![
                model3_comp(vec![0.3, 0.0], kin.clone(), vec![0.6, 1.3]),
                model3_comp(vec![-0.3, 0.2], kin.clone(), vec![0.6, 1.3]),
            ],
            0.5,
            0.03,
        );
        let roots = solve_model3_2d(&s, &[], NewtonOptions::default()).unwrap();
        for r in &roots {
            let f = model3_field_2d(&s, r).unwrap();
            for j in 0..2 {
                let rate = kin.rate_vec(&r.w[j]);
                let ell = s.compartments[j].ell;
                let flux = 2.0 * ell * PI * 2.0 * (r.w[j][0] - f.inner(j, ell).unwrap());
                assert!((rate[0] - flux).abs() < 1e-10);
                assert!(rate[1].abs() < 1e-10);
            }
        }
    }

    #[test]
    fn volume_transmission_limits() {
        let s = three(0.0, None);
        let vt = volume_transmission_2d(&s, &[0.0; 3], 1.0, 2.0).unwrap();
        assert!(vt.phi.iter().all(|v| v.abs() < 1e-14));
        let vt = volume_transmission_2d(&s, &[1.0, 1.0, 1.0], 1.0, 0.0).unwrap();
        assert!(vt.phi.iter().all(|v| v.abs() < 1e-14));
        assert_eq!(vt.release(&[0.5, 0.5]).unwrap(), 0.0);
        let vt = volume_transmission_2d(&s, &[1.0, 1.0, 1.0], 1.0, 2.0).unwrap();
        let u1 = vt.release(&[0.5, 0.5]).unwrap();
        assert!(u1 > 0.0);
    }

    #[test]
    fn volume_transmission_leading_order_is_position_free() {
        // u1 ~ (beta/alpha) mean(eps ell p1 J) / (D nu), independent of positions
        for eps in [1e-6, 1e-12] {
            let mut s = three(0.0, None);
            s.spec.epsilon = eps;
            let s = validate(&s.spec).unwrap();
            let mut moved = s.spec.clone();
            moved.compartments[0].center = vec![0.6, 0.5];
            moved.compartments[1].center = vec![-0.1, -0.2];
            let moved = validate(&moved).unwrap();
            let lead = 2.0 * (eps * (1.0 + 0.8 + 0.9) / 3.0) * (2.0 / 3.0) / s.nu;
            for sp in [&s, &moved] {
                let vt = volume_transmission_2d(sp, &[1.0, 1.0, 1.0], 1.0, 2.0).unwrap();
                for x in [[0.5, -0.5], [-0.6, -0.4], [0.0, 0.8]] {
                    let r = vt.release(&x).unwrap() / lead;
                    assert!((r - 1.0).abs() < 2.5 * s.nu, "{r}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn zero_degradation_strengths_sum_to_zero(
            c in proptest::collection::vec(-5.0f64..5.0, 3),
            k in 0.1f64..100.0,
        ) {
            let mut s = three(0.0, Some(k));
            for (comp, v) in s.spec.compartments.iter_mut().zip(&c) {
                comp.model = BoundaryModel::ModelI { c0: *v };
            }
            let co = solve_model1_2d(&s).unwrap();
            prop_assert!(co.a.iter().sum::<f64>().abs() < 1e-10);
            prop_assert!(co.residual < 1e-12);
        }
    }
}
