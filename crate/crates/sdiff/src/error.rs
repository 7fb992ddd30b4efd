//! Error type shared by every solver in the crate.

use thiserror::Error;

use crate::geometry::ValidationIssue;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("range error: argument {x} exceeds overflow threshold {threshold}")]
    Range { x: f64, threshold: f64 },

    #[error("singularity: source and field points coincide")]
    Singularity,

    #[error("validation failed: {}", format_issues(.0))]
    Validation(Vec<ValidationIssue>),

    #[error("ill-conditioned linear system (condition estimate {cond:.3e})")]
    Conditioning { cond: f64 },

    #[error("no convergence after {iterations} iterations (last residual {last_residual:.3e})")]
    Convergence {
        iterations: usize,
        last_residual: f64,
        history: Vec<f64>,
    },

    #[error("series did not converge: tail ratio {ratio:.3e} at n = {n}")]
    Accuracy { n: usize, ratio: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("point lies within {distance:.3e} of compartment {index}; use the inner expansion")]
    UseInner { index: usize, distance: f64 },

    #[error("pole at s = 0: the Green's function is singular when gamma0 = 0")]
    Pole,

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("compartment {index} is resolved by only {cells:.1} cells (need 8)")]
    Resolution { index: usize, cells: f64 },

    #[error("event ordering failure at tau = {tau:.6e}: {detail}")]
    EventOrdering { tau: f64, detail: String },
}

impl Error {
    /// True for errors caused by bad input rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_) | Error::Domain(_) | Error::Unsupported(_) | Error::Resolution { .. }
        )
    }
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
