//! Dense LU solves with a condition check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Condition estimates above this are reported as ill-conditioned.
pub const COND_MAX: f64 = 1e13;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU factorization of a small dense matrix, kept for repeated solves.
#[derive(Debug, Clone)]
pub struct Factored {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    a: DMatrix<f64>,
    pub cond: f64,
}

impl Factored {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Conditioning { cond: f64::INFINITY });
        }
        let lu = a.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or(Error::Conditioning { cond: f64::INFINITY })?;
        let cond = norm1(&a) * norm1(&inv);
        if !(cond < COND_MAX) {
            return Err(Error::Conditioning { cond });
        }
        Ok(Factored { lu, a, cond })
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.lu.solve(b).expect("factor checked at construction");
        // one step of iterative refinement
        let r = b - &self.a * &x;
        if let Some(dx) = self.lu.solve(&r) {
            x += dx;
        }
        x
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            out.set_column(j, &self.solve(&e));
        }
        out
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

/// Solve `a x = b`, failing on singular or ill-conditioned `a`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(Factored::new(a.clone())?.solve(b))
}

/// Relative residual `|a x - b| / max(|b|, tiny)`.
pub fn rel_residual(a: &DMatrix<f64>, x: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a * x - b).amax() / b.amax().max(1e-300)
}
