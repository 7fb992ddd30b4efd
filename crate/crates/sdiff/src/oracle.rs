//! Brute-force reference solutions for checking the asymptotic solvers.
//!
//! Two kinds are provided: exact radial solutions for a single compartment
//! at the centre of a disk or ball, and a cell-centred finite-difference
//! solver for 2D domains with embedded circular compartments.
//!
//! Both solve the full problem with the physical compartment radius
//! `eps ell` and physical reactivity `kappa / eps`. Model II interiors use
//! the inner scaling of the asymptotic modules: `Dbar` and `gammabar / eps^2`,
//! so that `beta = sqrt(gammabar / Dbar)` acts on `rho = r / eps`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, norm, BoundaryModel, DomainGeometry, ValidatedSpec};
use crate::special::{bessel_i, bessel_k01};

/// Single concentric compartment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialParams {
    /// Disk or ball radius.
    pub radius: f64,
    pub d: f64,
    pub gamma0: f64,
    #[serde(default)]
    pub i0: f64,
    pub epsilon: f64,
    pub ell: f64,
    /// `None` is a perfectly absorbing (Dirichlet) interface.
    pub kappa: Option<f64>,
    pub model: BoundaryModel,
}

impl RadialParams {
    /// Read the parameters of a spec with one compartment at the origin.
    pub fn from_spec(spec: &ValidatedSpec) -> Result<Self> {
        let radius = match spec.geometry {
            DomainGeometry::Disk2D { radius } => radius,
            DomainGeometry::Sphere3D { r0 } => r0,
            DomainGeometry::Rect2D { .. } => {
                return Err(Error::Unsupported("radial oracle needs a disk or a ball".into()))
            }
        };
        if spec.n() != 1 || norm(&spec.compartments[0].center) != 0.0 {
            return Err(Error::Domain(
                "radial oracle needs exactly one compartment centred at the origin".into(),
            ));
        }
        let c = &spec.compartments[0];
        Ok(RadialParams {
            radius,
            d: spec.d,
            gamma0: spec.gamma0,
            i0: spec.i0,
            epsilon: spec.epsilon,
            ell: c.ell,
            kappa: c.kappa,
            model: c.model.clone(),
        })
    }

    fn r_in(&self) -> f64 {
        self.epsilon * self.ell
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
enum Interior {
    None,
    /// `v = cbar + b Y(r)`, `Y` regular at the origin, `Y(r_in) = 1`.
    Model2 { cbar: f64, b: f64, kb: f64, dbar: f64 },
}

/// Exact steady state `u(r)` outside the compartment and, for model II,
/// `v(r)` inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub dim: usize,
    pub params: RadialParams,
    /// Coefficient of the Neumann-compatible homogeneous solution.
    pub q: f64,
    k: f64,
    interior: Interior,
    /// Largest relative residual of the interface conditions.
    pub interface_residual: f64,
    /// `|u'(R)|` relative to the field scale.
    pub boundary_residual: f64,
}

impl RadialSolution {
    fn check(&self, r: f64, lo: f64, hi: f64) -> Result<()> {
        if !(r >= lo * (1.0 - 1e-14) && r <= hi * (1.0 + 1e-14)) {
            return Err(Error::Domain(format!("radius {r} outside [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Particular solution satisfying the outer Neumann condition: value and slope.
    fn particular(&self, r: f64) -> (f64, f64) {
        let p = &self.params;
        if p.gamma0 > 0.0 {
            return (p.i0 / p.gamma0, 0.0);
        }
        let (d, s, big_r) = (p.d, p.i0, p.radius);
        if self.dim == 2 {
            let q = s * big_r * big_r / (2.0 * d);
            (-s * r * r / (4.0 * d) + q * r.ln(), -s * r / (2.0 * d) + q / r)
        } else {
            let q = -s * big_r.powi(3) / (3.0 * d);
            (-s * r * r / (6.0 * d) + q / r, -s * r / (3.0 * d) - q / (r * r))
        }
    }

    /// Homogeneous solution with zero slope at the outer radius: value and slope.
    fn z(&self, r: f64) -> Result<(f64, f64)> {
        let k = self.k;
        if k == 0.0 {
            return Ok((1.0, 0.0));
        }
        let big_r = self.params.radius;
        if self.dim == 2 {
            let (_, k1_big) = bessel_k01(k * big_r);
            let ratio = k1_big / bessel_i(1, k * big_r)?;
            let (k0, k1) = bessel_k01(k * r);
            let (i0, i1) = (bessel_i(0, k * r)?, bessel_i(1, k * r)?);
            Ok((k0 + ratio * i0, k * (-k1 + ratio * i1)))
        } else {
            let x = k * (big_r - r);
            let h = k * big_r * x.cosh() - x.sinh();
            let dh = -k * k * big_r * x.sinh() + k * x.cosh();
            Ok((h / r, dh / r - h / (r * r)))
        }
    }

    /// Interior shape `Y` (with `Y(r_in) = 1`) and its slope.
    fn y(&self, r: f64, kb: f64) -> Result<(f64, f64)> {
        let ri = self.params.r_in();
        if self.dim == 2 {
            let norm = bessel_i(0, kb * ri)?;
            Ok((bessel_i(0, kb * r)? / norm, kb * bessel_i(1, kb * r)? / norm))
        } else {
            let g = |r: f64| if r == 0.0 { kb } else { (kb * r).sinh() / r };
            let dg = |r: f64| {
                if r == 0.0 {
                    0.0
                } else {
                    (kb * r * (kb * r).cosh() - (kb * r).sinh()) / (r * r)
                }
            };
            let norm = g(ri);
            Ok((g(r) / norm, dg(r) / norm))
        }
    }

    /// Exterior field for `eps ell <= r <= R`.
    pub fn u(&self, r: f64) -> Result<f64> {
        self.check(r, self.params.r_in(), self.params.radius)?;
        Ok(self.particular(r).0 + self.q * self.z(r)?.0)
    }

    pub fn du(&self, r: f64) -> Result<f64> {
        self.check(r, self.params.r_in(), self.params.radius)?;
        Ok(self.particular(r).1 + self.q * self.z(r)?.1)
    }

    /// Interior field of a model II compartment for `0 <= r <= eps ell`.
    pub fn v(&self, r: f64) -> Result<f64> {
        let Interior::Model2 { cbar, b, kb, .. } = self.interior else {
            return Err(Error::Unsupported("model I compartments have no interior field".into()));
        };
        self.check(r, 0.0, self.params.r_in())?;
        Ok(cbar + b * self.y(r, kb)?.0)
    }

    /// Field at a point of the domain, interior included for model II.
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!("expected a {}D point", self.dim)));
        }
        let r = norm(x);
        if r < self.params.r_in() {
            self.v(r)
        } else {
            self.u(r)
        }
    }

    /// Total flux into the compartment, `|dU| D u'(r_in)`.
    pub fn surface_flux(&self) -> Result<f64> {
        let ri = self.params.r_in();
        let area = if self.dim == 2 { 2.0 * PI * ri } else { 4.0 * PI * ri * ri };
        Ok(area * self.params.d * self.du(ri)?)
    }
}

fn radial_exact(dim: usize, params: &RadialParams) -> Result<RadialSolution> {
    let p = params;
    for (name, v) in [("radius", p.radius), ("D", p.d), ("epsilon", p.epsilon), ("ell", p.ell)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    if !(p.gamma0 >= 0.0 && p.i0 >= 0.0) {
        return Err(Error::Domain("gamma0 and I0 must be non-negative".into()));
    }
    let ri = p.r_in();
    if ri >= p.radius {
        return Err(Error::Domain("compartment does not fit in the domain".into()));
    }
    let mut sol = RadialSolution {
        dim,
        params: p.clone(),
        q: 0.0,
        k: (p.gamma0 / p.d).sqrt(),
        interior: Interior::None,
        interface_residual: 0.0,
        boundary_residual: 0.0,
    };
    let (part, dpart) = sol.particular(ri);
    let (z, dz) = sol.z(ri)?;
    let robin = p.kappa.map(|k| k / p.epsilon);
    let d = p.d;
    match p.model {
        BoundaryModel::ModelI { c0 } => {
            sol.q = match robin {
                None => (c0 - part) / z,
                Some(k) => {
                    let den = d * dz - k * z;
                    if den == 0.0 {
                        return Err(Error::Degenerate(
                            "reflecting compartment with no degradation has no unique steady state".into(),
                        ));
                    }
                    (k * (part - c0) - d * dpart) / den
                }
            };
            let (u, du) = (part + sol.q * z, dpart + sol.q * dz);
            let scale = c0.abs().max(u.abs()).max(1e-300);
            sol.interface_residual = match robin {
                None => (u - c0).abs() / scale,
                Some(k) => (d * du - k * (u - c0)).abs() / (k * scale).max(d * du.abs()).max(1e-300),
            };
        }
        BoundaryModel::ModelII { dbar, gammabar, ibar } => {
            if !(gammabar > 0.0 && dbar > 0.0) {
                return Err(Error::Unsupported("model II needs Dbar > 0 and gammabar > 0".into()));
            }
            let cbar = ibar / gammabar;
            let kb = (gammabar / dbar).sqrt() / p.epsilon;
            let (y, dy) = sol.y(ri, kb)?;
            // rows: flux continuity, then Robin (or continuity of value)
            let (a11, a12, b1) = (d * dz, -dbar * dy, -d * dpart);
            let (a21, a22, b2) = match robin {
                None => (z, -y, cbar - part),
                Some(k) => (d * dz - k * z, k * y, k * (part - cbar) - d * dpart),
            };
            let det = a11 * a22 - a12 * a21;
            if det == 0.0 || !det.is_finite() {
                return Err(Error::Degenerate("singular interface system".into()));
            }
            sol.q = (b1 * a22 - a12 * b2) / det;
            let b = (a11 * b2 - a21 * b1) / det;
            sol.interior = Interior::Model2 { cbar, b, kb, dbar };
            let (u, du) = (part + sol.q * z, dpart + sol.q * dz);
            let (v, dv) = (cbar + b * y, b * dy);
            let scale = u.abs().max(v.abs()).max(1e-300);
            let flux = (d * du - dbar * dv).abs() / (d * du.abs()).max(dbar * dv.abs()).max(1e-300);
            let jump = match robin {
                None => (u - v).abs() / scale,
                Some(k) => (d * du - k * (u - v)).abs() / (k * scale).max(d * du.abs()).max(1e-300),
            };
            sol.interface_residual = flux.max(jump);
        }
        BoundaryModel::ModelIII { .. } => {
            return Err(Error::Unsupported("radial oracle covers model I and II only".into()))
        }
    }
    let du_outer = sol.du(p.radius)?;
    let scale = sol.u(p.radius)?.abs().max(sol.u(ri)?.abs()).max(1e-300);
    sol.boundary_residual = (du_outer * p.radius).abs() / scale;
    Ok(sol)
}

/// Exact solution for one compartment at the centre of a disk.
pub fn radial_exact_disk(params: &RadialParams) -> Result<RadialSolution> {
    radial_exact(2, params)
}

/// Exact solution for one compartment at the centre of a ball.
pub fn radial_exact_sphere(params: &RadialParams) -> Result<RadialSolution> {
    radial_exact(3, params)
}

/// Cell-centred grid solution. Inactive cells (inside a compartment or
/// outside a disk) hold `NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub h: [f64; 2],
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
    pub iterations: usize,
    /// Final relative residual of the linear solve.
    pub residual: f64,
}

impl GridField {
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.h[0],
            self.origin[1] + (j as f64 + 0.5) * self.h[1],
        ]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Bilinear interpolation between active cell centres. Falls back to
    /// the nearest active cell when some of the four corners are inactive.
    pub fn value(&self, x: &[f64]) -> Result<f64> {
        if x.len() != 2 {
            return Err(Error::Domain("grid fields are 2D".into()));
        }
        let fx = ((x[0] - self.origin[0]) / self.h[0] - 0.5).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((x[1] - self.origin[1]) / self.h[1] - 0.5).clamp(0.0, (self.ny - 1) as f64);
        let (i0, j0) = ((fx.floor() as usize).min(self.nx - 2), (fy.floor() as usize).min(self.ny - 2));
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let c = [
            self.get(i0, j0),
            self.get(i0 + 1, j0),
            self.get(i0, j0 + 1),
            self.get(i0 + 1, j0 + 1),
        ];
        if c.iter().all(|v| v.is_finite()) {
            return Ok((1.0 - ty) * ((1.0 - tx) * c[0] + tx * c[1]) + ty * ((1.0 - tx) * c[2] + tx * c[3]));
        }
        let mut best: Option<(f64, f64)> = None;
        for (k, v) in c.iter().enumerate() {
            if v.is_finite() {
                let p = self.center(i0 + k % 2, j0 + k / 2);
                let d2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
                if best.map_or(true, |(b, _)| d2 < b) {
                    best = Some((d2, *v));
                }
            }
        }
        best.map(|(_, v)| v)
            .ok_or_else(|| Error::Domain(format!("no active cell near {x:?}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,u\n");
        for j in 0..self.ny {
            for i in 0..self.nx {
                let v = self.get(i, j);
                if v.is_finite() {
                    let c = self.center(i, j);
                    out.push_str(&format!("{:.17e},{:.17e},{:.17e}\n", c[0], c[1], v));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FdOptions {
    fn default() -> Self {
        FdOptions {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

struct Stencil {
    diag: Vec<f64>,
    /// Neighbour indices and coefficients (`usize::MAX` for none).
    off: Vec<[(usize, f64); 4]>,
}

impl Stencil {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut s = self.diag[r] * x[r];
            for &(c, a) in &self.off[r] {
                if c != usize::MAX {
                    s += a * x[c];
                }
            }
            *o = s;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned BiCGSTAB. Returns iterations and relative residual.
fn bicgstab(a: &Stencil, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<(usize, f64)> {
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok((0, 0.0));
    }
    let inv: Vec<f64> = a.diag.iter().map(|d| 1.0 / d).collect();
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let rho1 = dot(&r0, &r);
        if rho1 == 0.0 {
            break;
        }
        let beta = rho1 / rho * alpha / omega;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = inv[i] * p[i];
        }
        a.apply(&y, &mut v);
        alpha = rho1 / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if dot(&s, &s).sqrt() <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok((it, dot(&s, &s).sqrt() / bnorm));
        }
        for i in 0..n {
            z[i] = inv[i] * s[i];
        }
        a.apply(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rho = rho1;
        let res = dot(&r, &r).sqrt() / bnorm;
        if it % 50 == 0 {
            history.push(res);
        }
        if res <= tol {
            return Ok((it, res));
        }
        if !res.is_finite() {
            break;
        }
    }
    let mut r = vec![0.0; n];
    a.apply(x, &mut r);
    let res = (0..n).map(|i| (b[i] - r[i]).powi(2)).sum::<f64>().sqrt() / bnorm;
    if res <= tol {
        return Ok((max_iter, res));
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last_residual: res,
        history,
    })
}

/// Finite-difference solve of the steady problem with source `I0`.
pub fn fd_solve_rect(spec: &ValidatedSpec, h: f64) -> Result<GridField> {
    let i0 = spec.i0;
    fd_solve_with_source(spec, h, &|_| i0, &FdOptions::default())
}

/// Finite-difference solve of `D lap u - gamma0 u + f(x) = 0` with a
/// reflecting outer boundary and Robin or Dirichlet compartments.
///
/// Rectangles use the cell-centred grid on `[0, L1] x [0, L2]`. Disks use
/// the bounding box with cells outside the disk masked out; the masked
/// faces are treated as reflecting, which is only first-order accurate.
/// Compartment boundaries are cut along grid lines (Shortley-Weller), with
/// the Robin condition imposed along the grid line at the cut point.
pub fn fd_solve_with_source(
    spec: &ValidatedSpec,
    h: f64,
    source: &dyn Fn(&[f64]) -> f64,
    opts: &FdOptions,
) -> Result<GridField> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Domain(format!("grid spacing must be positive, got {h}")));
    }
    let (origin, lengths, disk) = match spec.geometry {
        DomainGeometry::Rect2D { l1, l2 } => ([0.0, 0.0], [l1, l2], None),
        DomainGeometry::Disk2D { radius } => ([-radius, -radius], [2.0 * radius; 2], Some(radius)),
        DomainGeometry::Sphere3D { .. } => {
            return Err(Error::Unsupported("the finite-difference oracle is 2D only".into()))
        }
    };
    let eps = spec.epsilon;
    struct Comp {
        center: [f64; 2],
        r: f64,
        robin: Option<f64>,
        c: f64,
    }
    let mut comps = Vec::new();
    for (j, c) in spec.compartments.iter().enumerate() {
        let BoundaryModel::ModelI { c0 } = c.model else {
            return Err(Error::Unsupported(format!(
                "compartment {}: the finite-difference oracle covers model I only",
                j + 1
            )));
        };
        let r = eps * c.ell;
        let cells = 2.0 * r / h;
        if cells < 8.0 {
            return Err(Error::Resolution { index: j, cells });
        }
        comps.push(Comp {
            center: [c.center[0], c.center[1]],
            r,
            robin: c.kappa.map(|k| k / eps),
            c: c0,
        });
    }
    let nx = (lengths[0] / h).round().max(2.0) as usize;
    let ny = (lengths[1] / h).round().max(2.0) as usize;
    let hs = [lengths[0] / nx as f64, lengths[1] / ny as f64];
    let center = |i: usize, j: usize| [origin[0] + (i as f64 + 0.5) * hs[0], origin[1] + (j as f64 + 0.5) * hs[1]];
    let inside_comp = |p: &[f64; 2]| comps.iter().position(|c| dist(p, &c.center) < c.r);
    let in_domain = |p: &[f64; 2]| disk.map_or(true, |rad| norm(p) < rad);

    let mut index = vec![usize::MAX; nx * ny];
    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let p = center(i, j);
            if in_domain(&p) && inside_comp(&p).is_none() {
                index[j * nx + i] = cells.len();
                cells.push((i, j));
            }
        }
    }
    let n = cells.len();
    let mut st = Stencil {
        diag: vec![0.0; n],
        off: vec![[(usize::MAX, 0.0); 4]; n],
    };
    let mut rhs = vec![0.0; n];
    let d = spec.d;
    for (row, &(i, j)) in cells.iter().enumerate() {
        let p = center(i, j);
        st.diag[row] = -spec.gamma0;
        rhs[row] = -source(&p);
        for axis in 0..2 {
            let hh = hs[axis];
            // each side: regular neighbour, reflecting face, or cut boundary
            enum Side {
                Cell(usize),
                Wall,
                Cut { theta: f64, alpha: f64, beta: f64 },
            }
            let mut sides = Vec::with_capacity(2);
            for dir in [-1i64, 1] {
                let (ni, nj) = if axis == 0 { (i as i64 + dir, j as i64) } else { (i as i64, j as i64 + dir) };
                if ni < 0 || nj < 0 || ni >= nx as i64 || nj >= ny as i64 {
                    sides.push(Side::Wall);
                    continue;
                }
                let (ni, nj) = (ni as usize, nj as usize);
                let q = center(ni, nj);
                if !in_domain(&q) {
                    sides.push(Side::Wall);
                    continue;
                }
                match inside_comp(&q) {
                    None => sides.push(Side::Cell(index[nj * nx + ni])),
                    Some(k) => {
                        let c = &comps[k];
                        // first crossing of the circle going from p to q
                        let dvec = [q[0] - p[0], q[1] - p[1]];
                        let f = [p[0] - c.center[0], p[1] - c.center[1]];
                        let aa = dot(&dvec, &dvec);
                        let bb = 2.0 * dot(&f, &dvec);
                        let cc = dot(&f, &f) - c.r * c.r;
                        let disc = (bb * bb - 4.0 * aa * cc).max(0.0);
                        let t = ((-bb - disc.sqrt()) / (2.0 * aa)).clamp(1e-6, 1.0);
                        let bpt = [p[0] + t * dvec[0], p[1] + t * dvec[1]];
                        let (alpha, beta) = match c.robin {
                            None => (0.0, c.c),
                            Some(kr) => {
                                let nrm = [(bpt[0] - c.center[0]) / c.r, (bpt[1] - c.center[1]) / c.r];
                                let e = [-dvec[0] / aa.sqrt(), -dvec[1] / aa.sqrt()];
                                let cos = dot(&nrm, &e).max(1e-3);
                                let g = d / (t * hh * cos);
                                (g / (g + kr), kr * c.c / (g + kr))
                            }
                        };
                        sides.push(Side::Cut { theta: t, alpha, beta });
                    }
                }
            }
            let dist_of = |s: &Side| match s {
                Side::Cut { theta, .. } => theta * hh,
                _ => hh,
            };
            let width = 0.5 * (dist_of(&sides[0]) + dist_of(&sides[1]));
            for (slot, s) in sides.iter().enumerate() {
                let a = d / (dist_of(s) * width);
                match *s {
                    Side::Wall => {}
                    Side::Cell(col) => {
                        st.diag[row] -= a;
                        st.off[row][axis * 2 + slot] = (col, a);
                    }
                    Side::Cut { alpha, beta, .. } => {
                        st.diag[row] += a * (alpha - 1.0);
                        rhs[row] -= a * beta;
                    }
                }
            }
        }
    }
    // solve -A u = -rhs so that the diagonal is positive
    st.diag.iter_mut().for_each(|v| *v = -*v);
    for o in st.off.iter_mut() {
        for e in o.iter_mut() {
            e.1 = -e.1;
        }
    }
    let b: Vec<f64> = rhs.iter().map(|v| -v).collect();
    let mut x = vec![0.0; n];
    let (iterations, residual) = bicgstab(&st, &b, &mut x, opts.tol, opts.max_iter)?;
    let mut values = vec![f64::NAN; nx * ny];
    for (row, &(i, j)) in cells.iter().enumerate() {
        values[j * nx + i] = x[row];
    }
    Ok(GridField {
        h: hs,
        origin,
        nx,
        ny,
        values,
        iterations,
        residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeError {
    pub x: Vec<f64>,
    pub asymptotic: f64,
    pub oracle: f64,
    pub abs: f64,
    pub rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub probes: Vec<ProbeError>,
    pub max_abs: f64,
    pub max_rel: f64,
    pub mean_abs: f64,
    pub mean_rel: f64,
    /// Probes that were not compared, with the reason.
    pub skipped: Vec<String>,
    /// Observed convergence order, when a sequence was supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<f64>,
}

/// Compare two fields at `probes`. Probes within `eps ell_j + eps` of a
/// compartment centre of `spec` are skipped with a note.
pub fn compare<A, O>(asymptotic: A, oracle: O, probes: &[Vec<f64>], spec: Option<&ValidatedSpec>) -> Result<ErrorReport>
where
    A: Fn(&[f64]) -> Result<f64>,
    O: Fn(&[f64]) -> Result<f64>,
{
    let mut report = ErrorReport {
        probes: Vec::new(),
        max_abs: 0.0,
        max_rel: 0.0,
        mean_abs: 0.0,
        mean_rel: 0.0,
        skipped: Vec::new(),
        order: None,
    };
    'probe: for x in probes {
        if let Some(spec) = spec {
            for (j, c) in spec.compartments.iter().enumerate() {
                let reach = spec.epsilon * (c.ell + 1.0);
                if c.center.len() == x.len() && dist(x, &c.center) < reach {
                    report
                        .skipped
                        .push(format!("{x:?}: within {reach:.3e} of compartment {}", j + 1));
                    continue 'probe;
                }
            }
        }
        let (a, o) = (asymptotic(x)?, oracle(x)?);
        let abs = (a - o).abs();
        let rel = if o != 0.0 { abs / o.abs() } else if abs == 0.0 { 0.0 } else { f64::INFINITY };
        report.probes.push(ProbeError {
            x: x.clone(),
            asymptotic: a,
            oracle: o,
            abs,
            rel,
        });
    }
    let n = report.probes.len();
    if n > 0 {
        report.max_abs = report.probes.iter().map(|p| p.abs).fold(0.0, f64::max);
        report.max_rel = report.probes.iter().map(|p| p.rel).fold(0.0, f64::max);
        report.mean_abs = report.probes.iter().map(|p| p.abs).sum::<f64>() / n as f64;
        report.mean_rel = report.probes.iter().map(|p| p.rel).sum::<f64>() / n as f64;
    }
    Ok(report)
}

/// Least-squares slope of `ln(error)` against `ln(parameter)`.
pub fn observed_order(params: &[f64], errors: &[f64]) -> Result<f64> {
    if params.len() != errors.len() || params.len() < 2 {
        return Err(Error::Domain("need at least two (parameter, error) pairs".into()));
    }
    if params.iter().chain(errors).any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("parameters and errors must be positive".into()));
    }
    let xs: Vec<f64> = params.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
