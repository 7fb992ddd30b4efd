//! Problem configuration: domain shape, compartments, bulk parameters, and
//! the small parameters `epsilon` and `nu = -1/ln(epsilon)`.
//!
//! All lengths are dimensionless with the inscribing length scale set to 1.
//! Reactivities are the rescaled values `kappa_j` (the physical reactivity
//! is `kappa_j / epsilon`). A missing reactivity means a perfectly absorbing
//! (Dirichlet) boundary.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::KineticsSpec;

/// Largest accepted `epsilon`.
pub const EPS_MAX: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum DomainGeometry {
    Disk2D {
        radius: f64,
    },
    Rect2D {
        #[serde(rename = "L1")]
        l1: f64,
        #[serde(rename = "L2")]
        l2: f64,
    },
    Sphere3D {
        #[serde(rename = "R0")]
        r0: f64,
    },
}

impl DomainGeometry {
    pub fn unit_disk() -> Self {
        DomainGeometry::Disk2D { radius: 1.0 }
    }

    pub fn unit_ball() -> Self {
        DomainGeometry::Sphere3D { r0: 1.0 }
    }

    pub fn dim(&self) -> usize {
        match self {
            DomainGeometry::Sphere3D { .. } => 3,
            _ => 2,
        }
    }

    /// Area or volume `|Omega|`.
    pub fn measure(&self) -> f64 {
        use std::f64::consts::PI;
        match *self {
            DomainGeometry::Disk2D { radius } => PI * radius * radius,
            DomainGeometry::Rect2D { l1, l2 } => l1 * l2,
            DomainGeometry::Sphere3D { r0 } => 4.0 / 3.0 * PI * r0 * r0 * r0,
        }
    }

    /// Inscribing length scale: smallest rectangle side, or the diameter.
    pub fn length_scale(&self) -> f64 {
        match *self {
            DomainGeometry::Disk2D { radius } => 2.0 * radius,
            DomainGeometry::Rect2D { l1, l2 } => l1.min(l2),
            DomainGeometry::Sphere3D { r0 } => 2.0 * r0,
        }
    }

    fn lengths(&self) -> Vec<(&'static str, f64)> {
        match *self {
            DomainGeometry::Disk2D { radius } => vec![("radius", radius)],
            DomainGeometry::Rect2D { l1, l2 } => vec![("L1", l1), ("L2", l2)],
            DomainGeometry::Sphere3D { r0 } => vec![("R0", r0)],
        }
    }

    /// Signed distance to the boundary; positive inside.
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        match *self {
            DomainGeometry::Disk2D { radius } => radius - norm(x),
            DomainGeometry::Sphere3D { r0 } => r0 - norm(x),
            DomainGeometry::Rect2D { l1, l2 } => {
                let dx = x[0].min(l1 - x[0]);
                let dy = x[1].min(l2 - x[1]);
                dx.min(dy)
            }
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && self.boundary_distance(x) > 0.0
    }
}

/// Non-spherical compartment shapes (3D only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape")]
pub enum ShapeSpec {
    Sphere {
        a: f64,
    },
    Hemisphere {
        a: f64,
    },
    ProlateSpheroid {
        a: f64,
        b: f64,
    },
    OblateSpheroid {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum BoundaryModel {
    ModelI {
        c0: f64,
    },
    ModelII {
        #[serde(rename = "Dbar")]
        dbar: f64,
        gammabar: f64,
        #[serde(rename = "Ibar")]
        ibar: f64,
    },
    ModelIII {
        kinetics: KineticsSpec,
        #[serde(rename = "K")]
        k: usize,
        w0: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompartmentSpec {
    pub center: Vec<f64>,
    pub ell: f64,
    /// Rescaled reactivity; `None` is a perfectly absorbing boundary.
    #[serde(default)]
    pub kappa: Option<f64>,
    pub model: BoundaryModel,
    /// Optional non-spherical shape; its capacitance replaces `ell`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeSpec>,
    /// Dipole vector of the shape. Stored but not used by any solver.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipole: Option<Vec<f64>>,
}

impl CompartmentSpec {
    pub fn model1(center: Vec<f64>, ell: f64, kappa: Option<f64>, c0: f64) -> Self {
        CompartmentSpec {
            center,
            ell,
            kappa,
            model: BoundaryModel::ModelI { c0 },
            shape: None,
            dipole: None,
        }
    }

    /// `c_{j,0}` for model I, `Ibar/gammabar` for model II, and the exchanged
    /// species for model III.
    pub fn boundary_value(&self) -> f64 {
        match &self.model {
            BoundaryModel::ModelI { c0 } => *c0,
            BoundaryModel::ModelII { gammabar, ibar, .. } => {
                if *gammabar > 0.0 {
                    ibar / gammabar
                } else {
                    0.0
                }
            }
            BoundaryModel::ModelIII { w0, .. } => w0.first().copied().unwrap_or(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub geometry: DomainGeometry,
    pub compartments: Vec<CompartmentSpec>,
    #[serde(rename = "D")]
    pub d: f64,
    pub gamma0: f64,
    #[serde(rename = "I0", default)]
    pub i0: f64,
    pub epsilon: f64,
    /// Override for the minimum separation; defaults to `4 epsilon max(ell)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sep_min: Option<f64>,
}

impl ProblemSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Domain(format!("invalid problem spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem spec serializes")
    }

    pub fn n(&self) -> usize {
        self.compartments.len()
    }

    pub fn effective_sep_min(&self) -> f64 {
        self.sep_min.unwrap_or_else(|| {
            let lmax = self
                .compartments
                .iter()
                .map(|c| c.ell)
                .fold(0.0_f64, f64::max);
            4.0 * self.epsilon * lmax
        })
    }

    /// Shift applied to boundary values when `I0 > 0`.
    pub fn source_shift(&self) -> f64 {
        if self.i0 > 0.0 && self.gamma0 > 0.0 {
            self.i0 / self.gamma0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ValidationIssue {
    Separation {
        i: usize,
        j: usize,
        distance: f64,
        required: f64,
    },
    Interiority {
        index: usize,
        distance: f64,
        required: f64,
    },
    Positivity {
        field: String,
        index: Option<usize>,
        value: f64,
    },
    Dimension {
        index: usize,
        expected: usize,
        found: usize,
    },
    Parameter {
        index: Option<usize>,
        message: String,
    },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::Separation {
                i,
                j,
                distance,
                required,
            } => write!(
                f,
                "compartments ({}, {}) are {distance:.3e} apart, need {required:.3e}",
                i + 1,
                j + 1
            ),
            ValidationIssue::Interiority {
                index,
                distance,
                required,
            } => write!(
                f,
                "compartment {} is {distance:.3e} from the outer boundary, need {required:.3e}",
                index + 1
            ),
            ValidationIssue::Positivity { field, index, value } => match index {
                Some(i) => write!(f, "compartment {}: {field} = {value} is out of range", i + 1),
                None => write!(f, "{field} = {value} is out of range"),
            },
            ValidationIssue::Dimension {
                index,
                expected,
                found,
            } => write!(
                f,
                "compartment {} has {found} coordinates, geometry needs {expected}",
                index + 1
            ),
            ValidationIssue::Parameter { index, message } => match index {
                Some(i) => write!(f, "compartment {}: {message}", i + 1),
                None => write!(f, "{message}"),
            },
        }
    }
}

/// A problem that passed validation, annotated with `nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidatedSpec {
    pub spec: ProblemSpec,
    pub nu: f64,
    pub warnings: Vec<String>,
}

impl ValidatedSpec {
    /// Re-run validation; returns an identical value.
    pub fn revalidate(&self) -> Result<ValidatedSpec> {
        validate(&self.spec)
    }

    pub fn n(&self) -> usize {
        self.spec.n()
    }
}

impl std::ops::Deref for ValidatedSpec {
    type Target = ProblemSpec;
    fn deref(&self) -> &ProblemSpec {
        &self.spec
    }
}

/// `nu = -1 / ln(epsilon)` for `0 < epsilon < 1`.
pub fn nu_from_epsilon(epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(-1.0 / epsilon.ln())
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

fn positive(issues: &mut Vec<ValidationIssue>, field: &str, index: Option<usize>, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        issues.push(ValidationIssue::Positivity {
            field: field.into(),
            index,
            value: v,
        });
    }
}

fn nonnegative(issues: &mut Vec<ValidationIssue>, field: &str, index: Option<usize>, v: f64) {
    if !(v >= 0.0 && v.is_finite()) {
        issues.push(ValidationIssue::Positivity {
            field: field.into(),
            index,
            value: v,
        });
    }
}

/// Check interiority, separation and positivity; collect every violation.
pub fn validate(spec: &ProblemSpec) -> Result<ValidatedSpec> {
    let mut issues = Vec::new();
    let mut warnings = Vec::new();

    for (name, v) in spec.geometry.lengths() {
        positive(&mut issues, name, None, v);
    }
    positive(&mut issues, "D", None, spec.d);
    nonnegative(&mut issues, "gamma0", None, spec.gamma0);
    nonnegative(&mut issues, "I0", None, spec.i0);
    if !(spec.epsilon > 0.0 && spec.epsilon < EPS_MAX) {
        issues.push(ValidationIssue::Positivity {
            field: "epsilon".into(),
            index: None,
            value: spec.epsilon,
        });
    }
    if spec.gamma0 == 0.0 && spec.i0 > 0.0 {
        issues.push(ValidationIssue::Parameter {
            index: None,
            message: "I0 > 0 with gamma0 = 0 has no steady state".into(),
        });
    }
    if let Some(s) = spec.sep_min {
        nonnegative(&mut issues, "sep_min", None, s);
    }

    let dim = spec.geometry.dim();
    let sep_min = spec.effective_sep_min();
    let scale = spec.geometry.length_scale();

    for (j, c) in spec.compartments.iter().enumerate() {
        if c.center.len() != dim {
            issues.push(ValidationIssue::Dimension {
                index: j,
                expected: dim,
                found: c.center.len(),
            });
            continue;
        }
        if !(c.ell > 0.0 && c.ell <= 1.0) {
            issues.push(ValidationIssue::Positivity {
                field: "ell".into(),
                index: Some(j),
                value: c.ell,
            });
        }
        if let Some(k) = c.kappa {
            nonnegative(&mut issues, "kappa", Some(j), k);
        }
        match &c.model {
            BoundaryModel::ModelI { c0 } => {
                if !c0.is_finite() {
                    issues.push(ValidationIssue::Positivity {
                        field: "c0".into(),
                        index: Some(j),
                        value: *c0,
                    });
                }
            }
            BoundaryModel::ModelII {
                dbar,
                gammabar,
                ibar,
            } => {
                positive(&mut issues, "Dbar", Some(j), *dbar);
                nonnegative(&mut issues, "gammabar", Some(j), *gammabar);
                nonnegative(&mut issues, "Ibar", Some(j), *ibar);
                if *gammabar == 0.0 && *ibar > 0.0 {
                    issues.push(ValidationIssue::Parameter {
                        index: Some(j),
                        message: "Ibar > 0 needs gammabar > 0".into(),
                    });
                }
            }
            BoundaryModel::ModelIII { kinetics, k, w0 } => {
                if *k < 1 {
                    issues.push(ValidationIssue::Parameter {
                        index: Some(j),
                        message: "model III needs K >= 1 species".into(),
                    });
                }
                if w0.len() != *k {
                    issues.push(ValidationIssue::Parameter {
                        index: Some(j),
                        message: format!("w0 has {} entries, K = {k}", w0.len()),
                    });
                }
                if kinetics.species() != *k {
                    issues.push(ValidationIssue::Parameter {
                        index: Some(j),
                        message: format!(
                            "kinetics has {} species, K = {k}",
                            kinetics.species()
                        ),
                    });
                }
            }
        }
        if c.shape.is_some() && dim != 3 {
            issues.push(ValidationIssue::Parameter {
                index: Some(j),
                message: "non-spherical shapes are only defined in 3D".into(),
            });
        }

        let bd = spec.geometry.boundary_distance(&c.center);
        if !(bd > 0.0) || bd < sep_min {
            issues.push(ValidationIssue::Interiority {
                index: j,
                distance: bd,
                required: sep_min,
            });
        } else if bd < 0.2 * scale {
            warnings.push(format!(
                "compartment {} is {bd:.3e} from the outer boundary (< 0.2 L)",
                j + 1
            ));
        }
    }

    for i in 0..spec.compartments.len() {
        for j in (i + 1)..spec.compartments.len() {
            let (a, b) = (&spec.compartments[i].center, &spec.compartments[j].center);
            if a.len() != dim || b.len() != dim {
                continue;
            }
            let d = dist(a, b);
            if d < sep_min || d == 0.0 {
                issues.push(ValidationIssue::Separation {
                    i,
                    j,
                    distance: d,
                    required: sep_min,
                });
            } else if d < 0.2 * scale {
                warnings.push(format!(
                    "compartments ({}, {}) are {d:.3e} apart (< 0.2 L)",
                    i + 1,
                    j + 1
                ));
            }
        }
    }

    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }
    let nu = nu_from_epsilon(spec.epsilon)?;
    Ok(ValidatedSpec {
        spec: spec.clone(),
        nu,
        warnings,
    })
}
