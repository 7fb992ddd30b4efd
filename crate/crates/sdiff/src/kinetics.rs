//! Reaction kinetics for well-mixed compartments.
//!
//! Species 0 is the one exchanged with the bulk. Rates are the
//! volume-integrated `f_hat`, i.e. `|U_j| dw/dt = f_hat(w) + exchange`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Rate function with an analytic Jacobian.
pub trait Kinetics {
    fn species(&self) -> usize;
    fn rate(&self, w: &[f64], out: &mut [f64]);
    fn jacobian(&self, w: &[f64]) -> DMatrix<f64>;
    /// Known roots of the isolated kinetics, used to seed Newton.
    fn seeds(&self) -> Vec<Vec<f64>> {
        vec![vec![0.0; self.species()]]
    }

    fn rate_vec(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.species()];
        self.rate(w, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum KineticsSpec {
    /// `f_a(w) = -lambda w_a + b_a`.
    Linear { lambda: f64, b: Vec<f64> },
    /// Two-species Sel'kov glycolysis model, scaled by `rate`:
    /// `f_0 = rate (-x + a y + x^2 y)`, `f_1 = rate (b - a y - x^2 y)`.
    Selkov { a: f64, b: f64, rate: f64 },
    /// Reversible conversion `X0 <-> X1`: `f_0 = -forward w_0 + backward w_1`,
    /// `f_1 = -f_0`. Conserves `w_0 + w_1`.
    Conversion { forward: f64, backward: f64 },
}

impl KineticsSpec {
    pub fn species(&self) -> usize {
        match self {
            KineticsSpec::Linear { b, .. } => b.len(),
            KineticsSpec::Selkov { .. } | KineticsSpec::Conversion { .. } => 2,
        }
    }

    /// Sel'kov fixed point `(b, b / (a + b^2))`.
    pub fn selkov_fixed_point(a: f64, b: f64) -> [f64; 2] {
        [b, b / (a + b * b)]
    }

    /// Trace of the isolated Sel'kov Jacobian at its fixed point (per unit rate).
    /// The isolated cell oscillates once this turns positive.
    pub fn selkov_trace(a: f64, b: f64) -> f64 {
        let b2 = b * b;
        -1.0 + 2.0 * b2 / (a + b2) - (a + b2)
    }
}

impl Kinetics for KineticsSpec {
    fn species(&self) -> usize {
        KineticsSpec::species(self)
    }

    fn rate(&self, w: &[f64], out: &mut [f64]) {
        match self {
            KineticsSpec::Linear { lambda, b } => {
                for ((o, wi), bi) in out.iter_mut().zip(w).zip(b) {
                    *o = -lambda * wi + bi;
                }
            }
            KineticsSpec::Selkov { a, b, rate } => {
                let (x, y) = (w[0], w[1]);
                let x2y = x * x * y;
                out[0] = rate * (-x + a * y + x2y);
                out[1] = rate * (b - a * y - x2y);
            }
            KineticsSpec::Conversion { forward, backward } => {
                out[0] = -forward * w[0] + backward * w[1];
                out[1] = -out[0];
            }
        }
    }

    fn jacobian(&self, w: &[f64]) -> DMatrix<f64> {
        match self {
            KineticsSpec::Linear { lambda, b } => {
                DMatrix::from_diagonal_element(b.len(), b.len(), -lambda)
            }
            KineticsSpec::Selkov { a, rate, .. } => {
                let (x, y) = (w[0], w[1]);
                DMatrix::from_row_slice(
                    2,
                    2,
                    &[
                        rate * (-1.0 + 2.0 * x * y),
                        rate * (a + x * x),
                        rate * (-2.0 * x * y),
                        rate * (-(a + x * x)),
                    ],
                )
            }
            KineticsSpec::Conversion { forward, backward } => {
                DMatrix::from_row_slice(2, 2, &[-forward, *backward, *forward, -backward])
            }
        }
    }

    fn seeds(&self) -> Vec<Vec<f64>> {
        match self {
            KineticsSpec::Linear { lambda, b } => {
                if *lambda != 0.0 {
                    vec![b.iter().map(|v| v / lambda).collect()]
                } else {
                    vec![vec![0.0; b.len()]]
                }
            }
            KineticsSpec::Selkov { a, b, .. } => {
                vec![KineticsSpec::selkov_fixed_point(*a, *b).to_vec()]
            }
            KineticsSpec::Conversion { .. } => vec![vec![0.0, 0.0]],
        }
    }
}
