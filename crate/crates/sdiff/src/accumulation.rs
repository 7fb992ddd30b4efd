//! Accumulation times after a change of initial condition.
//!
//! In Laplace space the time-dependent problem has the same form as the
//! steady one with `gamma0 -> gamma0 + s`, boundary values `c/s` and the
//! initial condition as a source. The accumulation time at `x` follows from
//! `d[s u~(x, s)]/ds` at `s = 0`, divided by the steady field `u(x)`.
//!
//! Both 2D and 3D share one structure: the outer Laplace field is
//! `u~ = Gamma0(x, s) + k sum a~_k(s) G(x, x_k; s)` with `s a~(s) = P(s) (c - s Gamma0(x_i, s))`.
//! In 2D `k = -2 pi nu D` and `P = -(I + nu M)^{-1}`; in 3D `k = 4 pi eps D`
//! and `P = diag(Lambda) (I - 4 pi eps D G diag(Lambda))`.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::asymptotic2d::robin_psi;
use crate::asymptotic3d::lambda;
use crate::error::{Error, Result};
use crate::geometry::{dist, BoundaryModel, DomainGeometry, ValidatedSpec};
use crate::greens::{default_s_step, interaction_matrix_with, richardson_derivative, Green};
use crate::linalg::Factored;
use crate::quad::{gauss_legendre, integrate_domain_centered};

/// Requested relative accuracy of `Gamma0`.
pub const PROJECTION_RTOL: f64 = 1e-6;

fn gamma0_zero() -> Error {
    Error::Unsupported(
        "accumulation times need gamma0 > 0; at gamma0 = 0 the Green's function has a pole at s = 0 \
         and the expansion needs partial summations that are not implemented"
            .into(),
    )
}

/// `T(x) = (1 + sqrt(gamma0/D) x) / (2 gamma0)` for a source at the end of a
/// half-line.
pub fn accumulation_time_1d(x: f64, gamma0: f64, d: f64) -> Result<f64> {
    if gamma0 == 0.0 {
        return Err(gamma0_zero());
    }
    if !(gamma0 > 0.0 && gamma0.is_finite()) {
        return Err(Error::Domain(format!("gamma0 must be positive, got {gamma0}")));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::Domain(format!("D must be positive, got {d}")));
    }
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be non-negative, got {x}")));
    }
    Ok((1.0 + (gamma0 / d).sqrt() * x) / (2.0 * gamma0))
}

/// Which way the concentration relaxes at the evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// Empty bulk filled from the compartments: `T = int Z dt`.
    Sources,
    /// Bulk material drained by the compartments: `T = -int Z dt`.
    Sinks,
}

impl Convention {
    fn sign(self) -> f64 {
        match self {
            Convention::Sources => -1.0,
            Convention::Sinks => 1.0,
        }
    }
}

/// Accumulation time from a Laplace-space field: `s_u(s) = s u~(x, s)` is
/// differentiated at `s = 0` with step `h`.
pub fn accumulation_from_laplace<F: FnMut(f64) -> Result<f64>>(
    s_u: F,
    steady: f64,
    convention: Convention,
    h: f64,
) -> Result<f64> {
    if !(steady.abs() > 0.0 && steady.is_finite()) {
        return Err(Error::Degenerate(format!("steady value {steady} cannot normalise Z")));
    }
    let (dv, _) = richardson_derivative(s_u, 0.0, h)?;
    Ok(convention.sign() * dv / steady)
}

/// Trapezoid integral of `Z = 1 - u(t)/u_steady` over sampled times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDomainAccumulation {
    pub t: f64,
    /// `Z` changed sign, so the integral is not an accumulation time.
    pub overshoot: bool,
    pub min_z: f64,
    pub max_z: f64,
    /// `|Z|` at the last sample.
    pub tail_z: f64,
}

pub fn accumulation_from_samples(
    times: &[f64],
    values: &[f64],
    steady: f64,
    convention: Convention,
) -> Result<TimeDomainAccumulation> {
    if times.len() != values.len() || times.len() < 2 {
        return Err(Error::Domain("need at least two matching time samples".into()));
    }
    if !(steady.abs() > 0.0 && steady.is_finite()) {
        return Err(Error::Degenerate(format!("steady value {steady} cannot normalise Z")));
    }
    let z: Vec<f64> = values.iter().map(|u| 1.0 - u / steady).collect();
    let mut integral = 0.0;
    for i in 1..times.len() {
        let dt = times[i] - times[i - 1];
        if !(dt > 0.0) {
            return Err(Error::Domain("sample times must increase".into()));
        }
        integral += 0.5 * dt * (z[i] + z[i - 1]);
    }
    let min_z = z.iter().copied().fold(f64::INFINITY, f64::min);
    let max_z = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let expected = -convention.sign();
    let overshoot = z.iter().any(|v| expected * v < -1e-9);
    Ok(TimeDomainAccumulation {
        t: -convention.sign() * integral,
        overshoot,
        min_z,
        max_z,
        tail_z: z.last().map(|v| v.abs()).unwrap_or(0.0),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: Vec<f64>,
    pub amplitude: f64,
    pub width: f64,
    /// Support radius in units of `width`.
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
}

fn default_cutoff() -> f64 {
    6.0
}

/// Nodal values on a regular grid, interpolated multilinearly and zero
/// outside the grid box. The first axis varies fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridData {
    pub shape: Vec<usize>,
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub values: Vec<f64>,
}

const GRID_MAX_NODES: usize = 4_000_000;

impl GridData {
    /// Text format: `shape`, `origin` and `spacing` lines followed by the
    /// values. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::Domain(format!("grid file: {m}"));
        let mut shape = None;
        let mut origin = None;
        let mut spacing = None;
        let mut values = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut tok = line.split_whitespace();
            let head = tok.next().unwrap_or("");
            let nums = |t: std::str::SplitWhitespace| -> Result<Vec<f64>> {
                t.map(|s| {
                    s.parse::<f64>()
                        .map_err(|_| bad(format!("line {}: cannot parse {s:?}", lineno + 1)))
                })
                .collect()
            };
            match head {
                "shape" => {
                    let v = tok
                        .map(|s| s.parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(format!("line {}: shape needs integers", lineno + 1)))?;
                    shape = Some(v);
                }
                "origin" => origin = Some(nums(tok)?),
                "spacing" => spacing = Some(nums(tok)?),
                _ => {
                    if shape.is_none() {
                        return Err(bad(format!("line {}: values before the shape line", lineno + 1)));
                    }
                    values.extend(nums(line.split_whitespace())?);
                    if values.len() > GRID_MAX_NODES {
                        return Err(bad("too many values".into()));
                    }
                }
            }
        }
        let grid = GridData {
            shape: shape.ok_or_else(|| bad("missing shape line".into()))?,
            origin: origin.ok_or_else(|| bad("missing origin line".into()))?,
            spacing: spacing.ok_or_else(|| bad("missing spacing line".into()))?,
            values,
        };
        grid.check()?;
        Ok(grid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Domain(format!("cannot read grid file {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
        let mut out = String::new();
        out += &format!(
            "shape {}\n",
            self.shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
        );
        out += &format!("origin {}\n", join(&self.origin));
        out += &format!("spacing {}\n", join(&self.spacing));
        let row = self.shape[0].max(1);
        for chunk in self.values.chunks(row) {
            out += &join(chunk);
            out.push('\n');
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Domain(format!("grid: {m}")));
        let d = self.shape.len();
        if d != 2 && d != 3 {
            return bad(format!("need 2 or 3 axes, got {d}"));
        }
        if self.origin.len() != d || self.spacing.len() != d {
            return bad("origin and spacing must match the shape".into());
        }
        let mut total: usize = 1;
        for &n in &self.shape {
            if n < 2 {
                return bad("each axis needs at least two nodes".into());
            }
            total = match total.checked_mul(n) {
                Some(t) if t <= GRID_MAX_NODES => t,
                _ => return bad("too many nodes".into()),
            };
        }
        if self.values.len() != total {
            return bad(format!("expected {total} values, got {}", self.values.len()));
        }
        if self.origin.iter().any(|v| !v.is_finite()) {
            return bad("origin must be finite".into());
        }
        if self.spacing.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return bad("spacing must be positive".into());
        }
        if self.values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("values must be finite and non-negative".into());
        }
        Ok(())
    }

    fn index(&self, idx: &[usize]) -> usize {
        let mut k = 0;
        for a in (0..idx.len()).rev() {
            k = k * self.shape[a] + idx[a];
        }
        k
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let d = self.shape.len();
        if x.len() != d {
            return 0.0;
        }
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..d {
            let t = (x[a] - self.origin[a]) / self.spacing[a];
            let top = (self.shape[a] - 1) as f64;
            if !(t >= 0.0 && t <= top) {
                return 0.0;
            }
            let i = (t.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = [0usize; 3];
            for a in 0..d {
                let bit = (corner >> a) & 1;
                idx[a] = base[a] + bit;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
            }
            if w != 0.0 {
                acc += w * self.values[self.index(&idx[..d])];
            }
        }
        acc
    }

    /// Cells with at least one nonzero corner, as `(lo, hi)` boxes.
    fn active_cells(&self) -> Vec<(Vec<f64>, Vec<f64>)> {
        let d = self.shape.len();
        let cells: Vec<usize> = self.shape.iter().map(|n| n - 1).collect();
        let count: usize = cells.iter().product();
        let mut out = Vec::new();
        for lin in 0..count {
            let mut c = [0usize; 3];
            let mut r = lin;
            for a in 0..d {
                c[a] = r % cells[a];
                r /= cells[a];
            }
            let mut any = false;
            for corner in 0..(1usize << d) {
                let mut idx = [0usize; 3];
                for a in 0..d {
                    idx[a] = c[a] + ((corner >> a) & 1);
                }
                if self.values[self.index(&idx[..d])] != 0.0 {
                    any = true;
                    break;
                }
            }
            if any {
                let lo: Vec<f64> = (0..d).map(|a| self.origin[a] + c[a] as f64 * self.spacing[a]).collect();
                let hi: Vec<f64> = (0..d).map(|a| lo[a] + self.spacing[a]).collect();
                out.push((lo, hi));
            }
        }
        out
    }

    fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let cells = self.active_cells();
        let d = self.shape.len();
        let first = cells.first()?;
        let mut lo = first.0.clone();
        let mut hi = first.1.clone();
        for (l, h) in &cells {
            for a in 0..d {
                lo[a] = lo[a].min(l[a]);
                hi[a] = hi[a].max(h[a]);
            }
        }
        Some((lo, hi))
    }
}

/// Initial bulk concentration `u0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// Constant on a ball, or on the whole domain when `support` is absent.
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<Ball>,
    },
    GaussianBump(GaussianBump),
    Grid(GridData),
}

/// How an initial condition is described on disk: grids are referenced by
/// path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialConditionDescriptor {
    Constant {
        value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        support: Option<Ball>,
    },
    GaussianBump(GaussianBump),
    Grid { path: String },
}

impl InitialConditionDescriptor {
    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Domain(format!("invalid initial condition: {e}")))
    }

    /// Load referenced files relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<InitialCondition> {
        let ic = match self {
            InitialConditionDescriptor::Constant { value, support } => InitialCondition::Constant {
                value: *value,
                support: support.clone(),
            },
            InitialConditionDescriptor::GaussianBump(b) => InitialCondition::GaussianBump(b.clone()),
            InitialConditionDescriptor::Grid { path } => {
                InitialCondition::Grid(GridData::load(&base.join(path))?)
            }
        };
        ic.check_values()?;
        Ok(ic)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Support {
    Empty,
    Domain,
    Ball(Vec<f64>, f64),
    Cells(Vec<(Vec<f64>, Vec<f64>)>),
}

impl InitialCondition {
    pub fn zero() -> Self {
        InitialCondition::Constant {
            value: 0.0,
            support: None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            InitialCondition::Constant { value, support } => match support {
                None => *value,
                Some(b) if dist(x, &b.center) <= b.radius => *value,
                Some(_) => 0.0,
            },
            InitialCondition::GaussianBump(b) => {
                let r = dist(x, &b.center);
                if r <= b.cutoff * b.width {
                    b.amplitude * (-0.5 * (r / b.width).powi(2)).exp()
                } else {
                    0.0
                }
            }
            InitialCondition::Grid(g) => g.value(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            InitialCondition::Constant { value, .. } => *value == 0.0,
            InitialCondition::GaussianBump(b) => b.amplitude == 0.0,
            InitialCondition::Grid(g) => g.values.iter().all(|v| *v == 0.0),
        }
    }

    fn support(&self) -> Support {
        if self.is_zero() {
            return Support::Empty;
        }
        match self {
            InitialCondition::Constant { support: None, .. } => Support::Domain,
            InitialCondition::Constant { support: Some(b), .. } => Support::Ball(b.center.clone(), b.radius),
            InitialCondition::GaussianBump(b) => Support::Ball(b.center.clone(), b.cutoff * b.width),
            InitialCondition::Grid(g) => Support::Cells(g.active_cells()),
        }
    }

    /// Sign and finiteness checks that need no geometry.
    pub fn check_values(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("initial condition: {m}")));
        match self {
            InitialCondition::Constant { value, support } => {
                if !(*value >= 0.0 && value.is_finite()) {
                    return bad("value must be finite and non-negative");
                }
                if let Some(b) = support {
                    if !(b.radius > 0.0 && b.radius.is_finite()) || b.center.iter().any(|v| !v.is_finite()) {
                        return bad("support ball needs a finite centre and positive radius");
                    }
                }
            }
            InitialCondition::GaussianBump(b) => {
                if !(b.amplitude >= 0.0 && b.amplitude.is_finite()) {
                    return bad("amplitude must be finite and non-negative");
                }
                if !(b.width > 0.0 && b.width.is_finite()) || !(b.cutoff > 0.0 && b.cutoff.is_finite()) {
                    return bad("width and cutoff must be positive");
                }
                if b.center.iter().any(|v| !v.is_finite()) {
                    return bad("centre must be finite");
                }
            }
            InitialCondition::Grid(g) => g.check()?,
        }
        Ok(())
    }

    /// The support must lie in the domain.
    pub fn check_domain(&self, geom: &DomainGeometry) -> Result<()> {
        self.check_values()?;
        let dim = geom.dim();
        let tol = 1e-12 * geom.length_scale();
        match self.support() {
            Support::Empty | Support::Domain => Ok(()),
            Support::Ball(c, r) => {
                if c.len() != dim {
                    return Err(Error::Domain(format!("initial condition centre needs {dim} coordinates")));
                }
                if geom.boundary_distance(&c) < r - tol {
                    return Err(Error::Domain("initial condition support leaves the domain".into()));
                }
                Ok(())
            }
            Support::Cells(cells) => {
                if cells.first().map(|c| c.0.len()) != Some(dim) {
                    return Err(Error::Domain(format!("grid needs {dim} axes")));
                }
                for (lo, hi) in &cells {
                    for corner in 0..(1usize << dim) {
                        let p: Vec<f64> = (0..dim)
                            .map(|a| if (corner >> a) & 1 == 1 { hi[a] } else { lo[a] })
                            .collect();
                        if geom.boundary_distance(&p) < -tol {
                            return Err(Error::Domain("initial condition support leaves the domain".into()));
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// The support must also stay an `epsilon` distance away from every
    /// compartment centre.
    pub fn check_spec(&self, spec: &ValidatedSpec) -> Result<()> {
        self.check_domain(&spec.geometry)?;
        let eps = spec.epsilon;
        let support = self.support();
        let grid_box = match self {
            InitialCondition::Grid(g) => g.support_box(),
            _ => None,
        };
        for (j, comp) in spec.compartments.iter().enumerate() {
            let gap = match (&support, &grid_box) {
                (Support::Empty, _) => f64::INFINITY,
                (Support::Domain, _) => 0.0,
                (Support::Ball(c, r), _) => dist(&comp.center, c) - r,
                (Support::Cells(_), Some((lo, hi))) => box_distance(&comp.center, lo, hi),
                (Support::Cells(_), None) => f64::INFINITY,
            };
            if gap < eps {
                return Err(Error::Domain(format!(
                    "initial condition support comes within {gap:.3e} of compartment {}; it must stay {eps:.3e} away",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

fn box_distance(x: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let mut s = 0.0;
    for a in 0..x.len() {
        let d = (lo[a] - x[a]).max(x[a] - hi[a]).max(0.0);
        s += d * d;
    }
    s.sqrt()
}

/// `Gamma0(x, s) = int G(x, x'; s) u0(x') dx'` with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub value: f64,
    pub error: f64,
}

/// Project `u0` onto the Green's function `green` (built for `gamma0 + s`).
pub fn gamma0_projection(u0: &InitialCondition, x: &[f64], green: &Green) -> Result<Projection> {
    let geom = *green.geometry();
    if x.len() != geom.dim() || !geom.contains(x) {
        return Err(Error::Domain(format!("point {x:?} is not inside the domain")));
    }
    u0.check_domain(&geom)?;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let integrand = |y: &[f64]| -> f64 {
        let v = u0.value(y);
        if v == 0.0 {
            return 0.0;
        }
        match green.value(y, x) {
            Ok(g) => g * v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let (value, error, n) = match u0.support() {
        Support::Empty => return Ok(Projection { value: 0.0, error: 0.0 }),
        Support::Domain => centred_doubling(&geom, x, &[0.0; 3][..geom.dim()], integrand),
        Support::Ball(c, r) => {
            let local = match geom {
                DomainGeometry::Sphere3D { .. } => DomainGeometry::Sphere3D { r0: r },
                _ => DomainGeometry::Disk2D { radius: r },
            };
            let p: Vec<f64> = if dist(x, &c) < r {
                x.iter().zip(&c).map(|(a, b)| a - b).collect()
            } else {
                vec![0.0; c.len()]
            };
            centred_doubling(&local, &p, &c, integrand)
        }
        Support::Cells(cells) => {
            let mut f = integrand;
            let mut total = 0.0;
            let mut err = 0.0;
            for (lo, hi) in &cells {
                let (v, e) = integrate_box(&mut f, lo, hi, x, 0);
                total += v;
                err += e;
            }
            (total, err, 0)
        }
    };
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    if !(error <= PROJECTION_RTOL * value.abs()) {
        return Err(Error::Accuracy {
            n,
            ratio: error / value.abs(),
        });
    }
    Ok(Projection { value, error })
}

/// `gamma0_projection` with a freshly built Green's function for `gamma0 + s`.
pub fn gamma0_projection_at(
    u0: &InitialCondition,
    x: &[f64],
    s: f64,
    geom: &DomainGeometry,
    d: f64,
    gamma0: f64,
) -> Result<Projection> {
    if gamma0 == 0.0 {
        return Err(gamma0_zero());
    }
    let green = Green::helmholtz(geom, d, gamma0 + s)?;
    gamma0_projection(u0, x, &green)
}

/// Centred rule on `local` (coordinates shifted by `offset`), doubled until
/// two levels agree. Returns (value, difference, last n).
fn centred_doubling<F: FnMut(&[f64]) -> f64>(
    local: &DomainGeometry,
    p: &[f64],
    offset: &[f64],
    mut f: F,
) -> (f64, f64, usize) {
    let mut y = vec![0.0; offset.len()];
    let mut g = |z: &[f64]| {
        for a in 0..y.len() {
            y[a] = z[a] + offset[a];
        }
        f(&y)
    };
    let mut n = 16;
    let mut prev = integrate_domain_centered(local, p, n, &mut g);
    loop {
        n *= 2;
        let cur = integrate_domain_centered(local, p, n, &mut g);
        let diff = (cur - prev).abs();
        if diff <= 1e-3 * PROJECTION_RTOL * cur.abs() || n >= 256 {
            return (cur, diff, n);
        }
        prev = cur;
    }
}

const BOX_ORDER: usize = 6;
const BOX_MAX_DEPTH: usize = 14;

fn box_rule<F: FnMut(&[f64]) -> f64>(f: &mut F, lo: &[f64], hi: &[f64]) -> f64 {
    let (t, w) = gauss_legendre(BOX_ORDER);
    let d = lo.len();
    let mut total = 0.0;
    let mut p = vec![0.0; d];
    let n = t.len();
    let count = n.pow(d as u32);
    for lin in 0..count {
        let mut r = lin;
        let mut wt = 1.0;
        for a in 0..d {
            let i = r % n;
            r /= n;
            let half = 0.5 * (hi[a] - lo[a]);
            p[a] = lo[a] + half * (1.0 + t[i]);
            wt *= w[i] * half;
        }
        total += wt * f(&p);
    }
    total
}

fn children(lo: &[f64], hi: &[f64], cut: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
    let d = lo.len();
    let mut out = Vec::with_capacity(1 << d);
    for corner in 0..(1usize << d) {
        let mut l = lo.to_vec();
        let mut h = hi.to_vec();
        for a in 0..d {
            if (corner >> a) & 1 == 1 {
                l[a] = cut[a];
            } else {
                h[a] = cut[a];
            }
        }
        if (0..d).all(|a| h[a] > l[a]) {
            out.push((l, h));
        }
    }
    out
}

/// Adaptive tensor Gauss rule on a box; boxes that contain the singular
/// point `x` are split there so that `x` only ever sits at a corner.
fn integrate_box<F: FnMut(&[f64]) -> f64>(
    f: &mut F,
    lo: &[f64],
    hi: &[f64],
    x: &[f64],
    depth: usize,
) -> (f64, f64) {
    let d = lo.len();
    let mid: Vec<f64> = (0..d).map(|a| 0.5 * (lo[a] + hi[a])).collect();
    let contains = (0..d).all(|a| x[a] >= lo[a] && x[a] <= hi[a]);
    if contains {
        if depth >= 3 * BOX_MAX_DEPTH {
            return (box_rule(f, lo, hi), 0.0);
        }
        let cut: Vec<f64> = (0..d)
            .map(|a| {
                let w = hi[a] - lo[a];
                if x[a] > lo[a] + 1e-12 * w && x[a] < hi[a] - 1e-12 * w {
                    x[a]
                } else {
                    mid[a]
                }
            })
            .collect();
        let mut v = 0.0;
        let mut e = 0.0;
        for (l, h) in children(lo, hi, &cut) {
            let (cv, ce) = integrate_box(f, &l, &h, x, depth + 1);
            v += cv;
            e += ce;
        }
        return (v, e);
    }
    let whole = box_rule(f, lo, hi);
    let kids = children(lo, hi, &mid);
    let parts: Vec<f64> = kids.iter().map(|(l, h)| box_rule(f, l, h)).collect();
    let split: f64 = parts.iter().sum();
    let diff = (whole - split).abs();
    if diff <= 1e-3 * PROJECTION_RTOL * split.abs() || depth >= BOX_MAX_DEPTH {
        return (split, diff);
    }
    let mut v = 0.0;
    let mut e = 0.0;
    for (l, h) in &kids {
        let (cv, ce) = integrate_box(f, l, h, x, depth + 1);
        v += cv;
        e += ce;
    }
    (v, e)
}

/// Accumulation time at one point with its pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulationTime {
    pub x: Vec<f64>,
    pub t: f64,
    /// Leading-order term `Gamma0 / (2 pi nu D sum G c)` (2D) or
    /// `Gamma0 / (4 pi eps D sum Lambda c G)` (3D); zero for an empty bulk.
    pub leading: f64,
    /// Contributions of `Gamma0(x, 0)`, of the strength derivatives `a'`
    /// and of `H = dG/ds`; they add up to `t`.
    pub gamma0_term: f64,
    pub strength_term: f64,
    pub h_term: f64,
    pub gamma0_x: f64,
    pub steady: f64,
    pub convention: Convention,
}

/// Prepared Laplace-space expansion for one spec and initial condition.
#[derive(Debug, Clone)]
pub struct AccumulationSolver {
    spec: ValidatedSpec,
    u0: InitialCondition,
    green: Green,
    /// Green's functions at `s = h, -h, h/2, -h/2`.
    stencil: Vec<Green>,
    h: f64,
    c: DVector<f64>,
    a: DVector<f64>,
    a_prime: DVector<f64>,
    gamma_c: DVector<f64>,
    prefactor: f64,
    lead_weights: Vec<f64>,
    lead_prefactor: f64,
}

enum Strengths {
    /// 2D: inert rows carry no strength.
    Log { psi: Vec<f64> },
    Point { lambda: Vec<f64> },
}

fn model1_c(spec: &ValidatedSpec) -> Result<Vec<f64>> {
    spec.compartments
        .iter()
        .map(|c| match c.model {
            BoundaryModel::ModelI { c0 } => Ok(c0),
            _ => Err(Error::Unsupported(
                "accumulation times are implemented for model I compartments only".into(),
            )),
        })
        .collect()
}

impl AccumulationSolver {
    pub fn new(spec: &ValidatedSpec, u0: &InitialCondition) -> Result<Self> {
        if spec.gamma0 == 0.0 {
            return Err(gamma0_zero());
        }
        if spec.i0 > 0.0 {
            return Err(Error::Unsupported(
                "accumulation times assume no bulk source (I0 = 0)".into(),
            ));
        }
        if let DomainGeometry::Rect2D { .. } = spec.geometry {
            return Err(Error::Unsupported(
                "accumulation times need a disk or ball domain".into(),
            ));
        }
        u0.check_spec(spec)?;
        let c = DVector::from_vec(model1_c(spec)?);
        if c.iter().all(|v| *v == 0.0) {
            return Err(Error::Degenerate(
                "all compartment values vanish, so the steady field is zero".into(),
            ));
        }
        let d = spec.d;
        let gamma0 = spec.gamma0;
        let green = Green::helmholtz(&spec.geometry, d, gamma0)?;
        let h = default_s_step(gamma0).min(0.5 * gamma0);
        let stencil = [h, -h, 0.5 * h, -0.5 * h]
            .iter()
            .map(|s| Green::helmholtz(&spec.geometry, d, gamma0 + s))
            .collect::<Result<Vec<_>>>()?;
        let dim = spec.geometry.dim();
        let kind = if dim == 2 {
            Strengths::Log {
                psi: spec.compartments.iter().map(|c| robin_psi(c, d)).collect(),
            }
        } else {
            Strengths::Point {
                lambda: spec
                    .compartments
                    .iter()
                    .map(|c| lambda(c, d))
                    .collect::<Result<Vec<_>>>()?,
            }
        };
        let (prefactor, lead_prefactor, lead_weights) = match &kind {
            Strengths::Log { .. } => (
                -2.0 * PI * spec.nu * d,
                2.0 * PI * spec.nu * d,
                c.iter().copied().collect(),
            ),
            Strengths::Point { lambda } => (
                4.0 * PI * spec.epsilon * d,
                4.0 * PI * spec.epsilon * d,
                lambda.iter().zip(c.iter()).map(|(l, c)| l * c).collect(),
            ),
        };
        let p0 = p_matrix(spec, &green, &kind)?;
        let dg = green_matrix_derivative(spec, &stencil, h)?;
        let p_prime = match &kind {
            Strengths::Log { psi } => {
                // P = -S^{-1} mask, so P' = -S^{-1} S' P with S' = 2 pi D nu G'
                let mut sp = dg.scale(2.0 * PI * d * spec.nu);
                for (j, p) in psi.iter().enumerate() {
                    if p.is_infinite() {
                        sp.row_mut(j).fill(0.0);
                    }
                }
                let s = system_2d(spec, &green, psi)?;
                let f = Factored::new(s)?;
                -(f.inverse() * sp * &p0)
            }
            Strengths::Point { lambda } => {
                let dl = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
                -(&dl * dg * &dl).scale(4.0 * PI * spec.epsilon * d)
            }
        };
        let gamma_c = DVector::from_vec(
            spec.compartments
                .iter()
                .map(|comp| Ok(gamma0_projection(u0, &comp.center, &green)?.value))
                .collect::<Result<Vec<_>>>()?,
        );
        let a = &p0 * &c;
        let a_prime = &p_prime * &c - &p0 * &gamma_c;
        Ok(AccumulationSolver {
            spec: spec.clone(),
            u0: u0.clone(),
            green,
            stencil,
            h,
            c,
            a,
            a_prime,
            gamma_c,
            prefactor,
            lead_weights,
            lead_prefactor,
        })
    }

    /// Steady strengths: `A` in 2D, `Lambda (c - eps chi)` in 3D.
    pub fn strengths(&self) -> &[f64] {
        self.a.as_slice()
    }

    /// `d[s a~(s)]/ds` at `s = 0`.
    pub fn strength_derivatives(&self) -> &[f64] {
        self.a_prime.as_slice()
    }

    /// `Gamma0(x_k, 0)` at the compartment centres.
    pub fn gamma0_at_centres(&self) -> &[f64] {
        self.gamma_c.as_slice()
    }

    pub fn convention(&self) -> Convention {
        if self.u0.is_zero() {
            Convention::Sources
        } else {
            Convention::Sinks
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.spec.geometry.dim() || !self.spec.geometry.contains(x) {
            return Err(Error::Domain(format!("point {x:?} is not inside the domain")));
        }
        for (k, comp) in self.spec.compartments.iter().enumerate() {
            let r = dist(x, &comp.center);
            if r < 2.0 * self.spec.epsilon {
                return Err(Error::UseInner { index: k, distance: r });
            }
        }
        Ok(())
    }

    /// Steady outer field `u(x)`.
    pub fn steady(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let mut s = 0.0;
        for (k, comp) in self.spec.compartments.iter().enumerate() {
            s += self.a[k] * self.green.value(x, &comp.center)?;
        }
        Ok(self.prefactor * s)
    }

    pub fn time_at(&self, x: &[f64]) -> Result<AccumulationTime> {
        self.check_point(x)?;
        let mut u = 0.0;
        let mut sa = 0.0;
        let mut sh = 0.0;
        let mut lead = 0.0;
        for (k, comp) in self.spec.compartments.iter().enumerate() {
            let g = self.green.value(x, &comp.center)?;
            let h = self.h_value(x, &comp.center)?;
            u += self.a[k] * g;
            sa += self.a_prime[k] * g;
            sh += self.a[k] * h;
            lead += self.lead_weights[k] * g;
        }
        let u = self.prefactor * u;
        let sa = self.prefactor * sa;
        let sh = self.prefactor * sh;
        if !(u.abs() > 1e-300) {
            return Err(Error::Degenerate(format!("steady field vanishes at {x:?}")));
        }
        let gx = gamma0_projection(&self.u0, x, &self.green)?.value;
        let convention = self.convention();
        let sign = convention.sign();
        let leading = match convention {
            Convention::Sources => 0.0,
            Convention::Sinks => {
                let denom = self.lead_prefactor * lead;
                if !(denom.abs() > f64::EPSILON * self.lead_prefactor * self.c.amax()) {
                    return Err(Error::Degenerate("leading-order denominator vanishes".into()));
                }
                gx / denom
            }
        };
        let gamma0_term = sign * gx / u;
        let strength_term = sign * sa / u;
        let h_term = sign * sh / u;
        Ok(AccumulationTime {
            x: x.to_vec(),
            t: gamma0_term + strength_term + h_term,
            leading,
            gamma0_term,
            strength_term,
            h_term,
            gamma0_x: gx,
            steady: u,
            convention,
        })
    }

    /// `H(x, xk) = dG/ds` at `s = 0`.
    fn h_value(&self, x: &[f64], xk: &[f64]) -> Result<f64> {
        let v = self
            .stencil
            .iter()
            .map(|g| g.value(x, xk))
            .collect::<Result<Vec<_>>>()?;
        Ok(stencil_derivative(&v, self.h))
    }

    /// Laplace coefficients `a~(s)` for `s > 0`.
    pub fn laplace_coefficients(&self, s: f64) -> Result<Vec<f64>> {
        Ok(self.laplace_parts(s)?.1.iter().map(|v| v / s).collect())
    }

    fn laplace_parts(&self, s: f64) -> Result<(Green, DVector<f64>)> {
        if !(s != 0.0 && self.spec.gamma0 + s > 0.0) {
            return Err(Error::Domain(format!("s = {s} must be nonzero with gamma0 + s > 0")));
        }
        let spec = &self.spec;
        let green = Green::helmholtz(&spec.geometry, spec.d, spec.gamma0 + s)?;
        let kind = if spec.geometry.dim() == 2 {
            Strengths::Log {
                psi: spec.compartments.iter().map(|c| robin_psi(c, spec.d)).collect(),
            }
        } else {
            Strengths::Point {
                lambda: spec
                    .compartments
                    .iter()
                    .map(|c| lambda(c, spec.d))
                    .collect::<Result<Vec<_>>>()?,
            }
        };
        let p = p_matrix(spec, &green, &kind)?;
        let gk = DVector::from_vec(
            spec.compartments
                .iter()
                .map(|comp| Ok(gamma0_projection(&self.u0, &comp.center, &green)?.value))
                .collect::<Result<Vec<_>>>()?,
        );
        let sa = p * (&self.c - gk.scale(s));
        Ok((green, sa))
    }

    /// Outer Laplace-space field `u~(x, s)`.
    pub fn laplace_field(&self, x: &[f64], s: f64) -> Result<f64> {
        self.check_point(x)?;
        let (green, sa) = self.laplace_parts(s)?;
        let mut sum = 0.0;
        for (k, comp) in self.spec.compartments.iter().enumerate() {
            sum += sa[k] / s * green.value(x, &comp.center)?;
        }
        Ok(gamma0_projection(&self.u0, x, &green)?.value + self.prefactor * sum)
    }
}

fn stencil_derivative(v: &[f64], h: f64) -> f64 {
    let d1 = (v[0] - v[1]) / (2.0 * h);
    let d2 = (v[2] - v[3]) / h;
    (4.0 * d2 - d1) / 3.0
}

fn green_matrix_derivative(spec: &ValidatedSpec, stencil: &[Green], h: f64) -> Result<DMatrix<f64>> {
    let n = spec.n();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let xj = &spec.compartments[j].center;
        for k in j..n {
            let xk = &spec.compartments[k].center;
            let v = stencil
                .iter()
                .map(|g| if j == k { g.regular_diag(xj) } else { g.value(xj, xk) })
                .collect::<Result<Vec<_>>>()?;
            let dv = stencil_derivative(&v, h);
            m[(j, k)] = dv;
            m[(k, j)] = dv;
        }
    }
    Ok(m)
}

fn system_2d(spec: &ValidatedSpec, green: &Green, psi: &[f64]) -> Result<DMatrix<f64>> {
    let n = spec.n();
    let m = interaction_matrix_with(green, spec)?;
    let mut sys = DMatrix::identity(n, n) + m.entries.scale(2.0 * PI * spec.d * spec.nu);
    for j in 0..n {
        if psi[j].is_infinite() {
            sys.row_mut(j).fill(0.0);
            sys[(j, j)] = 1.0;
        } else {
            sys[(j, j)] += spec.nu * psi[j];
        }
    }
    Ok(sys)
}

/// Map from `c - s Gamma0(x_k, s)` to `s a~(s)`.
fn p_matrix(spec: &ValidatedSpec, green: &Green, kind: &Strengths) -> Result<DMatrix<f64>> {
    let n = spec.n();
    match kind {
        Strengths::Log { psi } => {
            let f = Factored::new(system_2d(spec, green, psi)?)?;
            let mut mask = DMatrix::<f64>::identity(n, n);
            for (j, p) in psi.iter().enumerate() {
                if p.is_infinite() {
                    mask[(j, j)] = 0.0;
                }
            }
            Ok(-(f.inverse() * mask))
        }
        Strengths::Point { lambda } => {
            let m = interaction_matrix_with(green, spec)?;
            let dl = DMatrix::from_diagonal(&DVector::from_column_slice(lambda));
            let t = m.entries.scale(4.0 * PI * spec.d * spec.epsilon) * &dl;
            Ok(&dl * (DMatrix::identity(n, n) - t))
        }
    }
}

fn check_dim(spec: &ValidatedSpec, dim: usize) -> Result<()> {
    if spec.geometry.dim() != dim {
        return Err(Error::Unsupported(format!("this routine needs a {dim}D geometry")));
    }
    Ok(())
}

pub fn accumulation_time_2d(spec: &ValidatedSpec, u0: &InitialCondition, x: &[f64]) -> Result<AccumulationTime> {
    check_dim(spec, 2)?;
    AccumulationSolver::new(spec, u0)?.time_at(x)
}

pub fn accumulation_time_3d(spec: &ValidatedSpec, u0: &InitialCondition, x: &[f64]) -> Result<AccumulationTime> {
    check_dim(spec, 3)?;
    AccumulationSolver::new(spec, u0)?.time_at(x)
}
