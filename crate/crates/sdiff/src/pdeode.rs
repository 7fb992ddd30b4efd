//! Reduced ODE dynamics for well-mixed compartments coupled through a bulk
//! with diffusivity `D = D0 / nu`, and the phase-oscillator models built on
//! the same coupling.
//!
//! The state is the mean bulk concentration `ubar` plus the species
//! concentrations `w_{j,a}` of every compartment. Species 0 is exchanged.
//! Each right-hand side evaluation recovers the fluxes `A_j` from the
//! matching condition
//!
//! ```text
//! [1 + D0/(kappa_j ell_j)] A_j + 2 pi D0 nu sum_k G0_jk A_k = ubar - w_{j,0}
//! ```
//!
//! with a cached factorization.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{validate, BoundaryModel, CompartmentSpec, DomainGeometry, ProblemSpec, ValidatedSpec};
use crate::greens::{interaction_matrix_with, Green};
use crate::kinetics::{Kinetics, KineticsSpec};
use crate::linalg::Factored;
use crate::ripening::dopri_step;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedState {
    pub ubar: f64,
    /// `w[j][a]`, compartment `j`, species `a`.
    pub w: Vec<Vec<f64>>,
    pub t: f64,
}

impl ReducedState {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![self.ubar];
        for wj in &self.w {
            y.extend_from_slice(wj);
        }
        y
    }

    pub fn from_vec(y: &[f64], n: usize, k: usize, t: f64) -> Self {
        ReducedState {
            ubar: y[0],
            w: (0..n).map(|j| y[1 + j * k..1 + (j + 1) * k].to_vec()).collect(),
            t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.ubar.is_finite() && self.w.iter().flatten().all(|v| v.is_finite())
    }
}

/// Time derivatives of a [`ReducedState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedDerivative {
    pub dubar: f64,
    pub dw: Vec<Vec<f64>>,
}

impl ReducedDerivative {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut y = vec![self.dubar];
        for d in &self.dw {
            y.extend_from_slice(d);
        }
        y
    }
}

/// `W = (I + nu Q)^{-1}` for identical compartments, with
/// `Q = 2 pi (kappa ell D0 / (kappa ell + D0)) G0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrixW {
    pub w: DMatrix<f64>,
    pub nu: f64,
    pub d0: f64,
    pub kappa: Option<f64>,
    pub ell: f64,
    /// `max |(I + nu Q) W - I|`.
    pub residual: f64,
}

impl CouplingMatrixW {
    /// `kappa ell / (kappa ell + D0)`, or 1 for a perfectly absorbing boundary.
    pub fn theta(&self) -> f64 {
        match self.kappa {
            Some(k) => k * self.ell / (k * self.ell + self.d0),
            None => 1.0,
        }
    }
}

fn check_d0(d0: f64) -> Result<()> {
    if !(d0 > 0.0 && d0.is_finite()) {
        return Err(Error::Domain(format!("D0 must be positive and finite, got {d0}")));
    }
    Ok(())
}

fn check_2d(spec: &ValidatedSpec) -> Result<()> {
    if spec.geometry.dim() != 2 {
        return Err(Error::Unsupported(
            "the reduced ODE system is derived for 2D domains only".into(),
        ));
    }
    if matches!(spec.geometry, DomainGeometry::Rect2D { .. }) && spec.n() == 0 {
        return Err(Error::Domain("no compartments".into()));
    }
    if spec.n() == 0 {
        return Err(Error::Domain("no compartments".into()));
    }
    Ok(())
}

fn laplace_matrix(spec: &ValidatedSpec, d0: f64) -> Result<DMatrix<f64>> {
    let g = Green::laplace(&spec.geometry, d0)?;
    Ok(interaction_matrix_with(&g, spec)?.entries)
}

/// Build `W` for identical compartments. Heterogeneous compartments have no
/// `W` form; use [`QsModel`] directly.
pub fn coupling_matrix(spec: &ValidatedSpec, d0: f64) -> Result<CouplingMatrixW> {
    check_d0(d0)?;
    check_2d(spec)?;
    let c0 = &spec.compartments[0];
    if spec
        .compartments
        .iter()
        .any(|c| c.kappa != c0.kappa || c.ell != c0.ell)
    {
        return Err(Error::Unsupported(
            "W form needs identical kappa and ell; heterogeneous compartments use the general matching system".into(),
        ));
    }
    let n = spec.n();
    let mut cw = CouplingMatrixW {
        w: DMatrix::identity(n, n),
        nu: spec.nu,
        d0,
        kappa: c0.kappa,
        ell: c0.ell,
        residual: 0.0,
    };
    let q = laplace_matrix(spec, d0)? * (2.0 * PI * cw.theta() * d0);
    let m = DMatrix::identity(n, n) + q * spec.nu;
    let f = Factored::new(m.clone())?;
    cw.w = f.inverse();
    cw.residual = (&m * &cw.w - DMatrix::identity(n, n)).amax();
    Ok(cw)
}

/// Reduced system for `N` model III compartments in a 2D domain.
#[derive(Debug, Clone)]
pub struct QsModel {
    pub spec: ValidatedSpec,
    pub d0: f64,
    /// Compartment volumes `|U_j|`; default `pi eps^2 ell_j^2`.
    pub volumes: Vec<f64>,
    kinetics: Vec<KineticsSpec>,
    k: usize,
    /// Row scaling of the matching system: `beta_j = kappa_j ell_j`, or 1.
    beta: Vec<f64>,
    matching: Factored,
}

impl QsModel {
    pub fn new(spec: &ValidatedSpec, d0: f64) -> Result<Self> {
        check_d0(d0)?;
        check_2d(spec)?;
        let mut kinetics = Vec::new();
        for (j, c) in spec.compartments.iter().enumerate() {
            match &c.model {
                BoundaryModel::ModelIII { kinetics: kin, .. } => kinetics.push(kin.clone()),
                _ => {
                    return Err(Error::Unsupported(format!(
                        "compartment {} is not a model III compartment",
                        j + 1
                    )))
                }
            }
        }
        let k = kinetics[0].species();
        if kinetics.iter().any(|kin| kin.species() != k) {
            return Err(Error::Unsupported(
                "all compartments must carry the same number of species".into(),
            ));
        }
        let n = spec.n();
        let g = laplace_matrix(spec, d0)?;
        let mut alpha = vec![1.0; n];
        let mut beta = vec![1.0; n];
        for (j, c) in spec.compartments.iter().enumerate() {
            if let Some(kappa) = c.kappa {
                alpha[j] = kappa * c.ell + d0;
                beta[j] = kappa * c.ell;
            }
        }
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(j, i)] = 2.0 * PI * d0 * spec.nu * beta[j] * g[(j, i)];
            }
            m[(j, j)] += alpha[j];
        }
        let eps = spec.epsilon;
        Ok(QsModel {
            spec: spec.clone(),
            d0,
            volumes: spec
                .compartments
                .iter()
                .map(|c| PI * eps * eps * c.ell * c.ell)
                .collect(),
            kinetics,
            k,
            beta,
            matching: Factored::new(m)?,
        })
    }

    pub fn with_volumes(mut self, volumes: Vec<f64>) -> Result<Self> {
        if volumes.len() != self.n() || volumes.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!(
                "need {} positive compartment volumes, got {volumes:?}",
                self.n()
            )));
        }
        self.volumes = volumes;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }

    pub fn species(&self) -> usize {
        self.k
    }

    /// Length of the flat state vector.
    pub fn dim(&self) -> usize {
        1 + self.n() * self.k
    }

    pub fn kinetics(&self, j: usize) -> &KineticsSpec {
        &self.kinetics[j]
    }

    /// State built from the compartments' `w0` and the given bulk value.
    pub fn initial_state(&self, ubar: f64) -> ReducedState {
        let w = self
            .spec
            .compartments
            .iter()
            .map(|c| match &c.model {
                BoundaryModel::ModelIII { w0, .. } => w0.clone(),
                _ => unreachable!("checked in new"),
            })
            .collect();
        ReducedState { ubar, w, t: 0.0 }
    }

    fn check_state(&self, st: &ReducedState) -> Result<()> {
        if st.w.len() != self.n() || st.w.iter().any(|wj| wj.len() != self.k) {
            return Err(Error::Domain(format!(
                "state must have {} compartments with {} species",
                self.n(),
                self.k
            )));
        }
        Ok(())
    }

    /// Fluxes `A_j` for the given bulk mean and exchanged concentrations.
    pub fn fluxes(&self, ubar: f64, w0: &[f64]) -> DVector<f64> {
        let b = DVector::from_iterator(
            self.n(),
            w0.iter().zip(&self.beta).map(|(w, beta)| beta * (ubar - w)),
        );
        self.matching.solve(&b)
    }

    /// `B = M^{-1} diag(beta)`, so that `A = B (ubar 1 - w0)`.
    fn flux_sensitivity(&self) -> DMatrix<f64> {
        let mut b = self.matching.inverse();
        for (k, beta) in self.beta.iter().enumerate() {
            b.column_mut(k).scale_mut(*beta);
        }
        b
    }

    pub fn rhs(&self, st: &ReducedState) -> Result<ReducedDerivative> {
        self.check_state(st)?;
        let w0: Vec<f64> = st.w.iter().map(|wj| wj[0]).collect();
        let a = self.fluxes(st.ubar, &w0);
        let area = self.spec.geometry.measure();
        let c = 2.0 * PI * self.d0;
        let dubar = -self.spec.gamma0 * st.ubar - c / area * a.sum();
        let dw = st
            .w
            .iter()
            .enumerate()
            .map(|(j, wj)| {
                let mut f = self.kinetics[j].rate_vec(wj);
                f[0] += c * a[j];
                f.iter().map(|v| v / self.volumes[j]).collect()
            })
            .collect();
        Ok(ReducedDerivative { dubar, dw })
    }

    pub fn rhs_vec(&self, y: &[f64]) -> Result<Vec<f64>> {
        let st = ReducedState::from_vec(y, self.n(), self.k, 0.0);
        Ok(self.rhs(&st)?.to_vec())
    }

    /// Analytic Jacobian of the flat right-hand side.
    pub fn jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let (n, k) = (self.n(), self.k);
        let b = self.flux_sensitivity();
        let area = self.spec.geometry.measure();
        let c = 2.0 * PI * self.d0;
        let mut jac = DMatrix::zeros(self.dim(), self.dim());
        let row_sums: Vec<f64> = (0..n).map(|j| b.row(j).sum()).collect();
        let col_sums: Vec<f64> = (0..n).map(|i| b.column(i).sum()).collect();
        jac[(0, 0)] = -self.spec.gamma0 - c / area * row_sums.iter().sum::<f64>();
        for i in 0..n {
            jac[(0, 1 + i * k)] = c / area * col_sums[i];
        }
        for j in 0..n {
            let off = 1 + j * k;
            let vol = self.volumes[j];
            let jf = self.kinetics[j].jacobian(&y[off..off + k]);
            for a in 0..k {
                for bb in 0..k {
                    jac[(off + a, off + bb)] = jf[(a, bb)] / vol;
                }
            }
            jac[(off, 0)] += c * row_sums[j] / vol;
            for i in 0..n {
                jac[(off, 1 + i * k)] -= c * b[(j, i)] / vol;
            }
        }
        jac
    }

    /// `|Omega| ubar + sum_j |U_j| sum_a w_{j,a}`.
    pub fn total_content(&self, st: &ReducedState) -> f64 {
        self.spec.geometry.measure() * st.ubar
            + st
                .w
                .iter()
                .zip(&self.volumes)
                .map(|(wj, v)| v * wj.iter().sum::<f64>())
                .sum::<f64>()
    }

    /// Newton iteration for a steady state of the reduced system.
    pub fn fixed_point(&self, seed: &ReducedState) -> Result<ReducedState> {
        self.check_state(seed)?;
        let mut y = seed.to_vec();
        let mut history = Vec::new();
        for it in 0..60 {
            let f = DVector::from_vec(self.rhs_vec(&y)?);
            let res = f.amax();
            history.push(res);
            let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            if res <= 1e-13 * scale {
                return Ok(ReducedState::from_vec(&y, self.n(), self.k, seed.t));
            }
            let dy = crate::linalg::solve(&self.jacobian(&y), &(-f))?;
            // damp steps that would more than double the state
            let step = dy.amax();
            let lambda = if step > scale { scale / step } else { 1.0 };
            for (yi, d) in y.iter_mut().zip(dy.iter()) {
                *yi += lambda * d;
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::Convergence {
                    iterations: it + 1,
                    last_residual: f64::NAN,
                    history,
                });
            }
        }
        Err(Error::Convergence {
            iterations: 60,
            last_residual: *history.last().unwrap_or(&f64::NAN),
            history,
        })
    }
}

/// Right-hand side through the general matching system.
pub fn reduced_rhs(state: &ReducedState, model: &QsModel) -> Result<ReducedDerivative> {
    model.rhs(state)
}

/// Right-hand side in the `W` form for identical compartments:
///
/// ```text
/// dubar/dt = -gamma0 ubar + (2 pi D0 theta / |Omega|) sum_jk W_jk (w_k0 - ubar)
/// |U| dw_ja/dt = f_a(w_j) - 2 pi D0 theta delta_a0 sum_k W_jk (w_k0 - ubar)
/// ```
pub fn reduced_rhs_w(state: &ReducedState, model: &QsModel, w: &CouplingMatrixW) -> Result<ReducedDerivative> {
    model.check_state(state)?;
    let n = model.n();
    if w.w.nrows() != n {
        return Err(Error::Domain("W does not match the number of compartments".into()));
    }
    let coef = 2.0 * PI * w.d0 * w.theta();
    let diff = DVector::from_iterator(n, state.w.iter().map(|wj| wj[0] - state.ubar));
    let wd = &w.w * &diff;
    let dubar = -model.spec.gamma0 * state.ubar + coef / model.spec.geometry.measure() * wd.sum();
    let dw = (0..n)
        .map(|j| {
            let mut f = model.kinetics[j].rate_vec(&state.w[j]);
            f[0] -= coef * wd[j];
            f.iter().map(|v| v / model.volumes[j]).collect()
        })
        .collect();
    Ok(ReducedDerivative { dubar, dw })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IntegrateOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    /// Spacing of stored samples.
    pub dt_out: f64,
    pub max_steps: usize,
    /// Consecutive rejections that trigger the stiffness advisory.
    pub stiff_rejections: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h0: 1e-3,
            dt_out: 0.1,
            max_steps: 5_000_000,
            stiff_rejections: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTrajectory {
    pub states: Vec<ReducedState>,
    pub steps: usize,
    pub rejections: usize,
    pub advisories: Vec<String>,
}

impl ReducedTrajectory {
    pub fn last(&self) -> &ReducedState {
        self.states.last().expect("trajectory has a start point")
    }

    /// Half the peak-to-peak range of `ubar` over `t >= t_from`.
    pub fn amplitude(&self, t_from: f64) -> f64 {
        let (lo, hi) = self
            .states
            .iter()
            .filter(|s| s.t >= t_from)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.ubar), hi.max(s.ubar)));
        if hi >= lo {
            0.5 * (hi - lo)
        } else {
            0.0
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,ubar");
        if let Some(s) = self.states.first() {
            for (j, wj) in s.w.iter().enumerate() {
                for a in 0..wj.len() {
                    out.push_str(&format!(",w_{}_{}", j + 1, a));
                }
            }
        }
        out.push('\n');
        for s in &self.states {
            out.push_str(&format!("{:.17e},{:.17e}", s.t, s.ubar));
            for v in s.w.iter().flatten() {
                out.push_str(&format!(",{:.17e}", v));
            }
            out.push('\n');
        }
        out
    }
}

/// Adaptive Dormand-Prince integration of any flat system, sampled every
/// `dt_out` (steps are shortened to land on the sample times).
pub(crate) fn integrate_flat<F>(
    mut f: F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    opts: &IntegrateOptions,
    mut sample: impl FnMut(f64, &[f64]),
) -> Result<(usize, usize, Vec<String>)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if !(opts.dt_out > 0.0 && t_end >= t0) {
        return Err(Error::Domain("need dt_out > 0 and t_end >= t0".into()));
    }
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = opts.h0;
    let (mut steps, mut rejections, mut run) = (0, 0, 0);
    let mut advisories = Vec::new();
    let mut k_out = 1usize;
    sample(t, &y);
    while t < t_end {
        let t_next = (t0 + k_out as f64 * opts.dt_out).min(t_end);
        let h_try = h.min(t_next - t);
        steps += 1;
        if steps > opts.max_steps {
            return Err(Error::Convergence {
                iterations: steps,
                last_residual: h,
                history: Vec::new(),
            });
        }
        let accepted = match dopri_step(&mut f, &y, h_try, opts.rtol, opts.atol) {
            Some((y1, err)) if err <= 1.0 => {
                y = y1;
                t = if h_try == t_next - t { t_next } else { t + h_try };
                if h_try == h {
                    h *= (0.9 * err.max(1e-10).powf(-0.2)).min(5.0);
                }
                true
            }
            Some((_, err)) => {
                h = h_try * (0.9 * err.powf(-0.2)).max(0.1);
                false
            }
            None => {
                h = h_try * 0.25;
                false
            }
        };
        if accepted {
            run = 0;
            if t >= t_next {
                sample(t, &y);
                k_out += 1;
            }
        } else {
            rejections += 1;
            run += 1;
            if run == opts.stiff_rejections {
                advisories.push(format!(
                    "{run} consecutive step rejections at t = {t:.6e} (h = {h:.3e}); the system looks stiff, \
                     reduce the coupling or use an implicit integrator"
                ));
            }
            if h < 1e-14 * t.abs().max(1.0) {
                return Err(Error::Convergence {
                    iterations: steps,
                    last_residual: h,
                    history: Vec::new(),
                });
            }
        }
    }
    Ok((steps, rejections, advisories))
}

/// Integrate the reduced system from `initial` to `t_end`.
pub fn integrate_reduced(
    initial: &ReducedState,
    model: &QsModel,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<ReducedTrajectory> {
    model.check_state(initial)?;
    let (n, k) = (model.n(), model.species());
    let mut states = Vec::new();
    let (steps, rejections, mut advisories) = integrate_flat(
        |y| model.rhs_vec(y),
        &initial.to_vec(),
        initial.t,
        t_end,
        opts,
        |t, y| states.push(ReducedState::from_vec(y, n, k, t)),
    )?;
    if let Some(s) = states.iter().find(|s| s.ubar < 0.0) {
        advisories.push(format!("mean bulk concentration went negative at t = {:.6e}", s.t));
    }
    Ok(ReducedTrajectory {
        states,
        steps,
        rejections,
        advisories,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stability {
    pub eigenvalues: Vec<Complex64>,
    pub max_re: f64,
    /// A complex pair sits on the imaginary axis within `tol`.
    pub hopf: bool,
    pub warnings: Vec<String>,
}

/// Eigenvalues of the Jacobian at a fixed point.
pub fn linear_stability(fixed_point: &ReducedState, model: &QsModel, tol: f64) -> Result<Stability> {
    model.check_state(fixed_point)?;
    let y = fixed_point.to_vec();
    let res = model.rhs_vec(&y)?.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if res > 1e-10 {
        return Err(Error::Domain(format!(
            "not a fixed point: residual {res:.3e} exceeds 1e-10"
        )));
    }
    Ok(spectrum(&model.jacobian(&y), tol))
}

pub(crate) fn spectrum(jac: &DMatrix<f64>, tol: f64) -> Stability {
    let mut eigenvalues: Vec<Complex64> = jac.complex_eigenvalues().iter().copied().collect();
    eigenvalues.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let max_re = eigenvalues.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
    let hopf = eigenvalues.iter().any(|l| l.re.abs() <= tol && l.im.abs() > tol);
    let mut warnings = Vec::new();
    for i in 0..eigenvalues.len() {
        for j in (i + 1)..eigenvalues.len() {
            let (a, b) = (eigenvalues[i], eigenvalues[j]);
            if (a - b).norm() <= 1e-8 * (1.0 + a.norm()) {
                warnings.push(format!(
                    "repeated eigenvalue {:.6e}{:+.6e}i; the Jacobian may be defective",
                    a.re, a.im
                ));
            }
        }
    }
    Stability {
        eigenvalues,
        max_re,
        hopf,
        warnings,
    }
}

/// Growth rate of the leading oscillatory mode: the largest real part
/// among eigenvalues with nonzero imaginary part.
fn oscillatory_growth(s: &Stability) -> Option<f64> {
    s.eigenvalues
        .iter()
        .filter(|l| l.im.abs() > 1e-9)
        .map(|l| l.re)
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopfBracket {
    pub d0_lo: f64,
    pub d0_hi: f64,
    /// Stability at the bracket midpoint.
    pub stability: Stability,
    /// Fixed point at the bracket midpoint.
    pub fixed_point: ReducedState,
}

/// Sweep `D0` over `grid`, following the fixed point by continuation, and
/// bisect every sign change of the leading oscillatory growth rate until
/// the bracket is narrower than `tol`.
pub fn hopf_sweep<M>(make: M, seed: &ReducedState, grid: &[f64], tol: f64) -> Result<Vec<HopfBracket>>
where
    M: Fn(f64) -> Result<QsModel>,
{
    let eval = |d0: f64, seed: &ReducedState| -> Result<(Option<f64>, ReducedState, Stability)> {
        let m = make(d0)?;
        let fp = m.fixed_point(seed)?;
        let s = linear_stability(&fp, &m, tol)?;
        Ok((oscillatory_growth(&s), fp, s))
    };
    let mut out = Vec::new();
    let mut prev: Option<(f64, Option<f64>, ReducedState)> = None;
    let mut seed = seed.clone();
    for &d0 in grid {
        let (g, fp, _) = eval(d0, &seed)?;
        if let Some((d_prev, Some(g_prev), fp_prev)) = &prev {
            if let Some(g) = g {
                if (*g_prev > 0.0) != (g > 0.0) {
                    let (mut lo, mut hi) = (*d_prev, d0);
                    let mut fp_lo = fp_prev.clone();
                    while hi - lo > tol {
                        let mid = 0.5 * (lo + hi);
                        let (gm, fpm, _) = eval(mid, &fp_lo)?;
                        match gm {
                            Some(gm) if (gm > 0.0) == (*g_prev > 0.0) => {
                                lo = mid;
                                fp_lo = fpm;
                            }
                            _ => hi = mid,
                        }
                    }
                    let mid = 0.5 * (lo + hi);
                    let (_, fpm, sm) = eval(mid, &fp_lo)?;
                    out.push(HopfBracket {
                        d0_lo: lo,
                        d0_hi: hi,
                        stability: sm,
                        fixed_point: fpm,
                    });
                }
            }
        }
        seed = fp.clone();
        prev = Some((d0, g, fp));
    }
    Ok(out)
}

/// Sel'kov parameter `b` at which an isolated cell, with no exchange,
/// loses stability for the given `a`. Found by bisection on the largest
/// real part of the kinetics Jacobian at its fixed point, on the upper
/// branch `b > sqrt(a)`.
pub fn selkov_isolated_hopf(a: f64) -> Result<f64> {
    if !(a > 0.0 && a < 0.125) {
        return Err(Error::Domain(format!(
            "the isolated Sel'kov cell has a Hopf point for 0 < a < 1/8, got a = {a}"
        )));
    }
    let growth = |b: f64| {
        let k = KineticsSpec::Selkov { a, b, rate: 1.0 };
        spectrum(&k.jacobian(&KineticsSpec::selkov_fixed_point(a, b)), 0.0).max_re
    };
    // the determinant a + b^2 is positive, so stability changes with the
    // trace; take the last unstable-to-stable change on a grid
    let grid: Vec<f64> = (1..=400).map(|i| i as f64 * 0.01).collect();
    let Some(i) = grid
        .windows(2)
        .rposition(|p| growth(p[0]) > 0.0 && growth(p[1]) <= 0.0)
    else {
        return Err(Error::Degenerate("no Hopf point bracketed".into()));
    };
    let (mut lo, mut hi) = (grid[i], grid[i + 1]);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if growth(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Shipped Sel'kov example: two identical cells whose isolated kinetics sit
/// a distance `offset` in `b` beyond the isolated Hopf point, on the stable
/// side. Exchange with a bulk at moderate `D0` can destabilise the common
/// steady state; the well-mixed limit restores stability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelkovExample {
    pub a: f64,
    pub offset: f64,
    pub rate: f64,
    pub gamma0: f64,
    pub kappa: f64,
    pub ell: f64,
    pub volume: f64,
    pub epsilon: f64,
    pub centers: Vec<[f64; 2]>,
}

impl Default for SelkovExample {
    fn default() -> Self {
        SelkovExample {
            a: 0.1,
            offset: 0.05,
            rate: 10.0,
            gamma0: 10.0,
            kappa: 10.0,
            ell: 1.0,
            volume: 1.0,
            epsilon: 0.05,
            centers: vec![[-0.4, 0.1], [0.35, -0.2]],
        }
    }
}

impl SelkovExample {
    pub fn b(&self) -> Result<f64> {
        Ok(selkov_isolated_hopf(self.a)? + self.offset)
    }

    pub fn kinetics(&self) -> Result<KineticsSpec> {
        Ok(KineticsSpec::Selkov {
            a: self.a,
            b: self.b()?,
            rate: self.rate * self.volume,
        })
    }

    pub fn spec(&self) -> Result<ValidatedSpec> {
        let kin = self.kinetics()?;
        let w0 = kin.seeds()[0].clone();
        let compartments = self
            .centers
            .iter()
            .map(|c| CompartmentSpec {
                center: c.to_vec(),
                ell: self.ell,
                kappa: Some(self.kappa),
                model: BoundaryModel::ModelIII {
                    kinetics: kin.clone(),
                    k: 2,
                    w0: w0.clone(),
                },
                shape: None,
                dipole: None,
            })
            .collect();
        validate(&ProblemSpec {
            geometry: DomainGeometry::unit_disk(),
            compartments,
            d: 1.0,
            gamma0: self.gamma0,
            i0: 0.0,
            epsilon: self.epsilon,
            sep_min: None,
        })
    }

    pub fn model(&self, d0: f64) -> Result<QsModel> {
        QsModel::new(&self.spec()?, d0)?.with_volumes(vec![self.volume; self.centers.len()])
    }
}

/// Phases, environment amplitude and natural frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub theta: Vec<f64>,
    pub z: Complex64,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KuramotoParams {
    pub kappa_hat: f64,
    pub alpha: f64,
    pub gamma0: f64,
    pub omega0: f64,
}

/// `d theta_j/dt = omega_j + kappa_hat a sum_k W_jk sin(psi - theta_k)`,
/// `dz/dt = (alpha kappa_hat / N) sum_jk W_jk (e^{i theta_k} - z) - (gamma0 + i omega0) z`,
/// with `z = a e^{i psi}`. `W = None` is the identity.
pub fn kuramoto_rhs(st: &OscState, p: &KuramotoParams, w: Option<&DMatrix<f64>>) -> (Vec<f64>, Complex64) {
    let n = st.theta.len();
    let (a, psi) = (st.z.norm(), st.z.arg());
    let s: Vec<f64> = st.theta.iter().map(|t| (psi - t).sin()).collect();
    let e: Vec<Complex64> = st.theta.iter().map(|t| Complex64::from_polar(1.0, *t) - st.z).collect();
    let mut dtheta = st.omega.clone();
    let mut sum = Complex64::new(0.0, 0.0);
    match w {
        None => {
            for j in 0..n {
                dtheta[j] += p.kappa_hat * a * s[j];
                sum += e[j];
            }
        }
        Some(w) => {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += w[(j, k)] * s[k];
                    sum += w[(j, k)] * e[k];
                }
                dtheta[j] += p.kappa_hat * a * acc;
            }
        }
    }
    let dz = p.alpha * p.kappa_hat / n as f64 * sum - Complex64::new(p.gamma0, p.omega0) * st.z;
    (dtheta, dz)
}

/// `(1/N) sum_j e^{i theta_j}`.
pub fn order_parameter(theta: &[f64]) -> Complex64 {
    let n = theta.len().max(1) as f64;
    theta.iter().map(|t| Complex64::from_polar(1.0, *t)).sum::<Complex64>() / n
}

/// Even frequency densities, sampled at deterministic quantiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyDensity {
    Identical,
    Uniform { half_width: f64 },
    Lorentzian { width: f64 },
}

impl FrequencyDensity {
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            FrequencyDensity::Identical => 0.0,
            FrequencyDensity::Uniform { half_width } => half_width * (2.0 * p - 1.0),
            FrequencyDensity::Lorentzian { width } => width * (PI * (p - 0.5)).tan(),
        }
    }

    /// `N` frequencies at the midpoint quantiles `(j + 1/2)/N`.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        (0..n).map(|j| self.quantile((j as f64 + 0.5) / n as f64)).collect()
    }
}

pub fn wrap_phase(t: f64) -> f64 {
    let w = t.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuramotoSample {
    pub t: f64,
    /// `|zbar|`.
    pub coherence: f64,
    /// `|z|`.
    pub environment: f64,
    /// `arg zbar`.
    pub mean_phase: f64,
    /// Circular spread `sqrt(-2 ln |zbar|)`.
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoRun {
    pub samples: Vec<KuramotoSample>,
    pub last: OscState,
    pub steps: usize,
    pub advisories: Vec<String>,
}

impl KuramotoRun {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,coherence,environment,mean_phase,spread\n");
        for s in &self.samples {
            out.push_str(&format!(
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}\n",
                s.t, s.coherence, s.environment, s.mean_phase, s.spread
            ));
        }
        out
    }
}

pub fn integrate_kuramoto(
    initial: &OscState,
    p: &KuramotoParams,
    w: Option<&DMatrix<f64>>,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<KuramotoRun> {
    let n = initial.theta.len();
    if n == 0 || initial.omega.len() != n {
        return Err(Error::Domain("need N >= 1 phases with matching frequencies".into()));
    }
    if let Some(w) = w {
        if w.nrows() != n || w.ncols() != n {
            return Err(Error::Domain(format!("W must be {n} x {n}")));
        }
    }
    let pack = |s: &OscState| {
        let mut y = s.theta.clone();
        y.push(s.z.re);
        y.push(s.z.im);
        y
    };
    let unpack = |y: &[f64]| OscState {
        theta: y[..n].to_vec(),
        z: Complex64::new(y[n], y[n + 1]),
        omega: initial.omega.clone(),
    };
    let mut samples = Vec::new();
    let mut last = initial.clone();
    let (steps, _, advisories) = integrate_flat(
        |y| {
            let (dt, dz) = kuramoto_rhs(&unpack(y), p, w);
            let mut d = dt;
            d.push(dz.re);
            d.push(dz.im);
            Ok(d)
        },
        &pack(initial),
        0.0,
        t_end,
        opts,
        |t, y| {
            let st = unpack(y);
            let zbar = order_parameter(&st.theta);
            let r = zbar.norm().min(1.0);
            samples.push(KuramotoSample {
                t,
                coherence: r,
                environment: st.z.norm(),
                mean_phase: wrap_phase(zbar.arg()),
                spread: if r > 0.0 { (-2.0 * r.ln()).sqrt() } else { f64::INFINITY },
            });
            last = st;
        },
    )?;
    last.theta.iter_mut().for_each(|t| *t = wrap_phase(*t));
    Ok(KuramotoRun {
        samples,
        last,
        steps,
        advisories,
    })
}
