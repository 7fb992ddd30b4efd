//! Two-term steady states in a 3D ball.
//!
//! Compartment `j` has effective radius `Lambda_j = kappa ell^2 / (kappa ell + D)`.
//! The outer field is `u_inf + 4 pi D eps sum_k q_k G(x, x_k)` with strengths
//! `q_k = Lambda_k (v_k - eps chi_k)`, where `v = c` when `gamma0 > 0` and
//! `v = c - u_inf` otherwise.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asymptotic2d::{
    dedupe_roots, model3_kinetics, model3_seeds, newton_coupled, Model3Root, NewtonOptions,
};
use crate::error::{Error, Result};
use crate::geometry::{dist, BoundaryModel, CompartmentSpec, ShapeSpec, ValidatedSpec};
use crate::greens::{interaction_matrix_with, Green, GreenMode, InteractionMatrix};

/// Capacitance of a conductor with the given shape (units of length).
pub fn capacitance(shape: &ShapeSpec) -> Result<f64> {
    match *shape {
        ShapeSpec::Sphere { a } => {
            positive_len(a)?;
            Ok(a)
        }
        ShapeSpec::Hemisphere { a } => {
            positive_len(a)?;
            Ok(2.0 * a * (1.0 - 1.0 / 3f64.sqrt()))
        }
        ShapeSpec::ProlateSpheroid { a, b } => {
            spheroid_axes(a, b)?;
            if a == b {
                return Ok(a);
            }
            Ok((a * a - b * b).sqrt() / (a / b).acosh())
        }
        ShapeSpec::OblateSpheroid { a, b } => {
            spheroid_axes(a, b)?;
            if a == b {
                return Ok(a);
            }
            // sqrt(a^2 - b^2) / acosh(b / a) needs b / a >= 1, impossible for a > b
            Err(Error::Domain(format!(
                "oblate capacitance sqrt(a^2-b^2)/acosh(b/a) is undefined for a = {a} > b = {b}"
            )))
        }
    }
}

fn positive_len(a: f64) -> Result<()> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::Domain(format!("shape length must be positive, got {a}")));
    }
    Ok(())
}

fn spheroid_axes(a: f64, b: f64) -> Result<()> {
    positive_len(a)?;
    positive_len(b)?;
    if a < b {
        return Err(Error::Domain(format!(
            "spheroid needs semi-major a >= semi-minor b, got a = {a}, b = {b}"
        )));
    }
    Ok(())
}

/// Effective radius `Lambda = kappa ell^2 / (kappa ell + D)`; the capacitance
/// stands in for `ell` on a perfectly absorbing non-spherical compartment.
pub fn lambda(comp: &CompartmentSpec, d: f64) -> Result<f64> {
    let ell = match &comp.shape {
        None => comp.ell,
        Some(s) => {
            if comp.kappa.is_some() {
                return Err(Error::Unsupported(
                    "reactive (Robin) boundaries need spherical compartments".into(),
                ));
            }
            capacitance(s)?
        }
    };
    Ok(match comp.kappa {
        None => ell,
        Some(k) => k * ell * ell / (k * ell + d),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients3D {
    #[serde(rename = "Lambda")]
    pub lambda: Vec<f64>,
    pub chi: Vec<f64>,
    pub u_inf: Option<f64>,
    pub c0: Vec<f64>,
    /// Strengths `Lambda_k (v_k - eps chi_k)`.
    pub q: Vec<f64>,
    pub epsilon: f64,
}

/// Linear map `q = L c + offset` and far-field weights, shared by model I
/// and model III.
struct StrengthMap3 {
    lambda: Vec<f64>,
    /// `T = 4 pi D K diag(Lambda)` so that `chi = T v`.
    t: DMatrix<f64>,
    l: DMatrix<f64>,
    offset: DVector<f64>,
    s: Option<DVector<f64>>,
}

fn strength_map3(spec: &ValidatedSpec, m: &InteractionMatrix) -> Result<StrengthMap3> {
    let n = spec.n();
    let lam = spec
        .compartments
        .iter()
        .map(|c| lambda(c, spec.d))
        .collect::<Result<Vec<_>>>()?;
    let dl = DMatrix::from_diagonal(&DVector::from_column_slice(&lam));
    let t = m.entries.scale(4.0 * PI * spec.d) * &dl;
    let id = DMatrix::<f64>::identity(n, n);
    let base = &dl * (&id - t.scale(spec.epsilon));
    let shift = spec.source_shift();
    if spec.gamma0 > 0.0 {
        let offset = -(&base * DVector::from_element(n, shift));
        Ok(StrengthMap3 {
            lambda: lam,
            t,
            l: base,
            offset,
            s: None,
        })
    } else {
        // sum q = 0 fixes u_inf = s . c
        let ones = DVector::from_element(n, 1.0);
        let row = base.transpose() * &ones;
        let denom = row.dot(&ones);
        if !(denom.abs() > 1e-300) {
            return Err(Error::Degenerate(
                "no absorbing compartment fixes the far-field constant".into(),
            ));
        }
        let s = row / denom;
        let l = &base * (&id - &ones * s.transpose());
        Ok(StrengthMap3 {
            lambda: lam,
            t,
            l,
            offset: DVector::zeros(n),
            s: Some(s),
        })
    }
}

#[derive(Debug, Clone)]
pub struct SteadyField3D {
    pub coefficients: Coefficients3D,
    pub spec: ValidatedSpec,
    pub matrix: InteractionMatrix,
    green: Green,
}

fn check_3d(spec: &ValidatedSpec) -> Result<()> {
    if spec.geometry.dim() != 3 {
        return Err(Error::Unsupported("3D solver needs the ball geometry".into()));
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

fn model1_values(spec: &ValidatedSpec) -> Result<Vec<f64>> {
    spec.compartments
        .iter()
        .map(|c| match c.model {
            BoundaryModel::ModelI { c0 } => Ok(c0),
            BoundaryModel::ModelII { .. } => Err(Error::Unsupported(
                "model II in 3D is leading order only; use model2_coefficient_3d".into(),
            )),
            BoundaryModel::ModelIII { .. } => Err(Error::Unsupported(
                "model III compartments need solve_model3_3d".into(),
            )),
        })
        .collect()
}

pub fn solve_model1_3d(spec: &ValidatedSpec) -> Result<Coefficients3D> {
    Ok(SteadyField3D::solve(spec)?.coefficients)
}

impl SteadyField3D {
    pub fn solve(spec: &ValidatedSpec) -> Result<Self> {
        check_3d(spec)?;
        let c0 = model1_values(spec)?;
        let green = green_for(spec)?;
        let matrix = interaction_matrix_with(&green, spec)?;
        let map = strength_map3(spec, &matrix)?;
        let c = DVector::from_column_slice(&c0);
        let q = &map.l * &c + &map.offset;
        let u_inf = map.s.as_ref().map(|s| s.dot(&c));
        let v = c.add_scalar(-u_inf.unwrap_or(0.0) - spec.source_shift());
        let chi = &map.t * &v;
        Ok(SteadyField3D {
            coefficients: Coefficients3D {
                lambda: map.lambda,
                chi: chi.iter().copied().collect(),
                u_inf,
                c0,
                q: q.iter().copied().collect(),
                epsilon: spec.epsilon,
            },
            spec: spec.clone(),
            matrix,
            green,
        })
    }

    pub fn green(&self) -> &Green {
        &self.green
    }

    pub fn outer(&self, x: &[f64]) -> Result<f64> {
        eval_outer_3d(self, x)
    }

    pub fn inner(&self, j: usize, rho: f64) -> Result<f64> {
        eval_inner_3d(self, j, rho)
    }
}

pub fn eval_outer_3d(field: &SteadyField3D, x: &[f64]) -> Result<f64> {
    let spec = &field.spec;
    for (k, comp) in spec.compartments.iter().enumerate() {
        let r = dist(x, &comp.center);
        if r < 2.0 * spec.epsilon {
            return Err(Error::UseInner {
                index: k,
                distance: r,
            });
        }
    }
    let co = &field.coefficients;
    let mut s = 0.0;
    for (k, comp) in spec.compartments.iter().enumerate() {
        if co.q[k] != 0.0 {
            s += co.q[k] * field.green.value(x, &comp.center)?;
        }
    }
    Ok(co.u_inf.unwrap_or(0.0) + spec.source_shift() + 4.0 * PI * spec.d * spec.epsilon * s)
}

/// Two-term inner field `u_inf + (Lambda/rho)(v - eps chi) + eps chi`.
/// The constant `eps chi` comes from `U_1 = chi (1 - Lambda/rho)` and keeps
/// the Robin condition exact at `rho = ell`.
pub fn eval_inner_3d(field: &SteadyField3D, j: usize, rho: f64) -> Result<f64> {
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
    let base = co.u_inf.unwrap_or(0.0) + field.spec.source_shift();
    Ok(base + co.q[j] / rho + co.epsilon * co.chi[j])
}

/// Leading-order strength of a semipermeable sphere and its interior profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Model2Sphere {
    /// Exterior field is `A / rho`.
    pub a: f64,
    /// Interior field is `c + B sinh(beta rho) / rho`.
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    pub ell: f64,
}

impl Model2Sphere {
    pub fn interior(&self, rho: f64) -> Result<f64> {
        if !(0.0..=self.ell).contains(&rho) {
            return Err(Error::Domain(format!(
                "interior radius {rho} outside [0, {}]",
                self.ell
            )));
        }
        let shape = if rho == 0.0 {
            self.beta
        } else {
            (self.beta * rho).sinh() / rho
        };
        Ok(self.c + self.b * shape)
    }

    pub fn exterior(&self, rho: f64) -> f64 {
        self.a / rho
    }
}

pub fn model2_coefficient_3d(comp: &CompartmentSpec, d: f64) -> Result<Model2Sphere> {
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
    let ell = comp.ell;
    let beta = (gammabar / dbar).sqrt();
    let x = beta * ell;
    if x > 700.0 {
        return Err(Error::Range {
            x,
            threshold: 700.0,
        });
    }
    let (s, ch) = (x.sinh(), x.cosh());
    let big_c = x * ch - s;
    let c = ibar / gammabar;
    let robin = match comp.kappa {
        None => 0.0,
        Some(k) => d / (k * ell),
    };
    let a = dbar * big_c * ell * c / (d * s + dbar * big_c * (1.0 + robin));
    let b = -d * a / (dbar * big_c);
    Ok(Model2Sphere {
        a,
        b,
        c,
        beta,
        ell,
    })
}

/// Steady states of compartments with internal kinetics in 3D. Species 0
/// leaves compartment `j` at rate `4 pi D q_j`, with `q` the two-term strength.
pub fn solve_model3_3d(
    spec: &ValidatedSpec,
    guesses: &[Vec<Vec<f64>>],
    opts: NewtonOptions,
) -> Result<Vec<Model3Root>> {
    check_3d(spec)?;
    let kin = model3_kinetics(spec)?;
    let green = green_for(spec)?;
    let m = interaction_matrix_with(&green, spec)?;
    let map = strength_map3(spec, &m)?;
    let scale = -4.0 * PI * spec.d;
    let coupling = map.l.scale(scale);
    let offset = map.offset.scale(scale);
    let mut roots = Vec::new();
    let mut last_err = None;
    for seed in model3_seeds(spec, &kin, guesses) {
        match newton_coupled(&kin, &coupling, &offset, &seed, opts) {
            Ok((w, res, it)) => {
                let c = DVector::from_fn(kin.len(), |j, _| w[j][0]);
                let q = &map.l * &c + &map.offset;
                roots.push(Model3Root {
                    u_inf: map.s.as_ref().map(|s| s.dot(&c)),
                    a: q.iter().copied().collect(),
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

/// Model I field generated by a model III root, with `c_{j,0} = w_{j,0}`.
pub fn model3_field_3d(spec: &ValidatedSpec, root: &Model3Root) -> Result<SteadyField3D> {
    let mut s = spec.spec.clone();
    for (c, w) in s.compartments.iter_mut().zip(&root.w) {
        c.model = BoundaryModel::ModelI { c0: w[0] };
    }
    SteadyField3D::solve(&ValidatedSpec {
        spec: s,
        nu: spec.nu,
        warnings: spec.warnings.clone(),
    })
}
