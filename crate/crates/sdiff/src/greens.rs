//! Neumann Green's functions of the Laplace and modified Helmholtz
//! equations in the disk, the rectangle and the ball.
//!
//! Every evaluator solves the D-scaled problem
//! `D lap G - gamma G = -delta` (Helmholtz, `int G = 1/gamma`) or
//! `D lap G = 1/|Omega| - delta` with `int G = 0` (Laplace), so closed forms
//! carry an overall factor `1/D`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, norm, DomainGeometry, ValidatedSpec};
use crate::special::{bessel_i_tilde, bessel_k01, bessel_k_tilde_seq, sph_i_tilde, EULER_GAMMA};

/// Default starting truncation for series evaluators.
pub const N_MAX_DEFAULT: usize = 64;
/// Hard cap for series truncation.
pub const N_MAX_CAP: usize = 1024;
/// Target ratio of last retained term to the sum.
const SERIES_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreensEval {
    pub value: f64,
    pub regular_part: f64,
    pub singular_part: f64,
    /// Estimated truncation error (series evaluators only).
    pub tail: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum GreenMode {
    Laplace,
    /// Modified Helmholtz with total rate `gamma = gamma0 + s`.
    Helmholtz { gamma: f64 },
}

/// Free-space singular part.
pub fn singular_part(dim: usize, d: f64, r: f64) -> f64 {
    if dim == 2 {
        -r.ln() / (2.0 * PI * d)
    } else {
        1.0 / (4.0 * PI * d * r)
    }
}

#[derive(Debug, Clone)]
enum Kernel {
    DiskLaplace { a: f64 },
    RectLaplace { l1: f64, l2: f64, terms: usize },
    SphereLaplace { a: f64 },
    /// Unit-disk coefficients at wavenumber `k` (after rescaling by `a`).
    DiskHelmholtz { a: f64, k: f64, coef: Vec<f64>, n_start: usize },
    SphereHelmholtz { r0: f64, k: f64, coef: Vec<f64>, n_start: usize },
}

/// A Green's function bound to a geometry, diffusivity and mode.
#[derive(Debug, Clone)]
pub struct Green {
    geom: DomainGeometry,
    d: f64,
    mode: GreenMode,
    kernel: Kernel,
}

fn tau_terms_for(l1: f64, l2: f64) -> usize {
    let tau = (-2.0 * PI * l2.max(l1) / l2.min(l1)).exp();
    if tau <= 0.0 {
        return 1;
    }
    ((1e-17f64.ln() / tau.ln()).ceil() as usize).clamp(1, 10_000)
}

impl Green {
    pub fn new(geom: &DomainGeometry, d: f64, mode: GreenMode) -> Result<Self> {
        Self::with_truncation(geom, d, mode, N_MAX_DEFAULT)
    }

    pub fn laplace(geom: &DomainGeometry, d: f64) -> Result<Self> {
        Self::new(geom, d, GreenMode::Laplace)
    }

    pub fn helmholtz(geom: &DomainGeometry, d: f64, gamma: f64) -> Result<Self> {
        Self::new(geom, d, GreenMode::Helmholtz { gamma })
    }

    /// `n_max` is the initial series truncation; it doubles up to the cap.
    pub fn with_truncation(geom: &DomainGeometry, d: f64, mode: GreenMode, n_max: usize) -> Result<Self> {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Domain(format!("D must be positive, got {d}")));
        }
        let n_start = n_max.clamp(1, N_MAX_CAP);
        let kernel = match (*geom, mode) {
            (DomainGeometry::Disk2D { radius }, GreenMode::Laplace) => Kernel::DiskLaplace { a: radius },
            (DomainGeometry::Rect2D { l1, l2 }, GreenMode::Laplace) => Kernel::RectLaplace {
                l1,
                l2,
                terms: tau_terms_for(l1, l2),
            },
            (DomainGeometry::Sphere3D { r0 }, GreenMode::Laplace) => Kernel::SphereLaplace { a: r0 },
            (DomainGeometry::Rect2D { .. }, GreenMode::Helmholtz { .. }) => {
                return Err(Error::Unsupported(
                    "the rectangle Green's function is available for Laplace only; use a disk for gamma0 > 0".into(),
                ))
            }
            (_, GreenMode::Helmholtz { gamma }) if !(gamma > 0.0) => {
                return Err(if gamma == 0.0 { Error::Pole } else {
                    Error::Domain(format!("gamma0 + s must be positive, got {gamma}"))
                })
            }
            (DomainGeometry::Disk2D { radius }, GreenMode::Helmholtz { gamma }) => {
                let k = (gamma / d).sqrt() * radius;
                Kernel::DiskHelmholtz {
                    a: radius,
                    k,
                    coef: disk_helmholtz_coefficients(k)?,
                    n_start,
                }
            }
            (DomainGeometry::Sphere3D { r0 }, GreenMode::Helmholtz { gamma }) => {
                let k = (gamma / d).sqrt();
                Kernel::SphereHelmholtz {
                    r0,
                    k,
                    coef: sphere_helmholtz_coefficients(k * r0)?,
                    n_start,
                }
            }
        };
        Ok(Green {
            geom: *geom,
            d,
            mode,
            kernel,
        })
    }

    pub fn geometry(&self) -> &DomainGeometry {
        &self.geom
    }

    pub fn mode(&self) -> GreenMode {
        self.mode
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    fn check_point(&self, x: &[f64], strict: bool) -> Result<()> {
        if x.len() != self.geom.dim() {
            return Err(Error::Domain(format!(
                "point has {} coordinates, expected {}",
                x.len(),
                self.geom.dim()
            )));
        }
        let bd = self.geom.boundary_distance(x);
        let scale = self.geom.length_scale();
        if (strict && bd <= 0.0) || bd < -1e-12 * scale {
            return Err(Error::Domain(format!("point {x:?} is outside the domain")));
        }
        Ok(())
    }

    /// Evaluate `G(x, xi)`. The source `xi` must be strictly interior;
    /// `x` may lie on the outer boundary.
    pub fn eval(&self, x: &[f64], xi: &[f64]) -> Result<GreensEval> {
        self.check_point(x, false)?;
        self.check_point(xi, true)?;
        let r = dist(x, xi);
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        let (reg, tail) = self.regular(x, xi, r)?;
        let sing = singular_part(self.geom.dim(), self.d, r);
        Ok(GreensEval {
            value: sing + reg,
            regular_part: reg,
            singular_part: sing,
            tail,
        })
    }

    pub fn value(&self, x: &[f64], xi: &[f64]) -> Result<f64> {
        Ok(self.eval(x, xi)?.value)
    }

    /// Regular part on the diagonal, `R(x, x)`.
    pub fn regular_diag(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x, true)?;
        Ok(self.regular(x, x, 0.0)?.0)
    }

    fn regular(&self, x: &[f64], xi: &[f64], r: f64) -> Result<(f64, f64)> {
        let d = self.d;
        match &self.kernel {
            Kernel::DiskLaplace { a } => Ok((disk_laplace_regular(x, xi, *a) / d, 0.0)),
            Kernel::RectLaplace { l1, l2, terms } => {
                let (v, tail) = rect_laplace_regular(x, xi, *l1, *l2, *terms);
                Ok((v / d, tail / d))
            }
            Kernel::SphereLaplace { a } => Ok((sphere_laplace_regular(x, xi, r, *a) / d, 0.0)),
            Kernel::DiskHelmholtz { a, k, coef, n_start } => {
                let xs = [x[0] / a, x[1] / a];
                let ys = [xi[0] / a, xi[1] / a];
                let rs = r / a;
                let free = if rs == 0.0 {
                    -(0.5 * k).ln() - EULER_GAMMA
                } else {
                    bessel_k01(k * rs).0 + rs.ln()
                };
                let (series, tail) = disk_helmholtz_series(&xs, &ys, *k, coef, *n_start)?;
                let v = (free - series) / (2.0 * PI) + a.ln() / (2.0 * PI);
                Ok((v / d, tail / (2.0 * PI * d)))
            }
            Kernel::SphereHelmholtz { r0, k, coef, n_start } => {
                let free = if r == 0.0 { -k } else { (-k * r).exp_m1() / r };
                let (gsp, tail) = sphere_helmholtz_series(x, xi, *r0, *k, coef, *n_start)?;
                Ok(((free / (4.0 * PI) - gsp) / d, tail / d))
            }
        }
    }
}

fn disk_laplace_regular(x: &[f64], xi: &[f64], a: f64) -> f64 {
    let (x0, x1) = (x[0] / a, x[1] / a);
    let (y0, y1) = (xi[0] / a, xi[1] / a);
    let xx = x0 * x0 + x1 * x1;
    let yy = y0 * y0 + y1 * y1;
    let xy = x0 * y0 + x1 * y1;
    // | x |xi| - xi/|xi| |^2 in a form that is regular at xi = 0
    let img2 = xx * yy - 2.0 * xy + 1.0;
    (-0.5 * img2.ln() + 0.5 * (xx + yy) - 0.75 + a.ln()) / (2.0 * PI)
}

fn sphere_laplace_regular(x: &[f64], xi: &[f64], r: f64, a: f64) -> f64 {
    let xx: f64 = x.iter().map(|v| v * v).sum();
    let yy: f64 = xi.iter().map(|v| v * v).sum();
    let xy: f64 = x.iter().zip(xi).map(|(p, q)| p * q).sum();
    let a2 = a * a;
    // |x| r' with x' = a^2 x / |x|^2, symmetric in x and xi
    let xr = (a2 * a2 - 2.0 * a2 * xy + xx * yy).max(0.0).sqrt();
    let _ = r;
    a / (4.0 * PI * xr) + (2.0 * a2 / (a2 - xy + xr)).ln() / (4.0 * PI * a)
        + (xx + yy) / (8.0 * PI * a * a2)
        + sphere_laplace_constant(a)
}

/// Normalisation constant making the ball Laplace Green's function mean-zero.
pub fn sphere_laplace_constant(a: f64) -> f64 {
    -7.0 / (10.0 * PI * a)
}

/// `|1 - e^w|` accurate for small `w`.
fn abs_one_minus_exp(re: f64, im: f64) -> f64 {
    let em1 = re.exp_m1();
    let s = (0.5 * im).sin();
    let real = em1 * im.cos() - 2.0 * s * s;
    let imag = re.exp() * im.sin();
    real.hypot(imag)
}

/// Rectangle regular part (unscaled by D) and tail bound.
fn rect_laplace_regular(x: &[f64], xp: &[f64], l1: f64, l2: f64, terms: usize) -> (f64, f64) {
    // the expansion is in tau = exp(-2 pi L2/L1); orient so that tau is small
    if l2 < l1 {
        return rect_laplace_regular(&[x[1], x[0]], &[xp[1], xp[0]], l2, l1, terms);
    }
    let (xa, ya) = (x[0], x[1]);
    let (xb, yb) = (xp[0], xp[1]);
    let h0 = l2 / 3.0 + (ya * ya + yb * yb) / (2.0 * l2) - ya.max(yb);
    let k = PI / l1;
    let log_tau = -2.0 * PI * l2 / l1;
    let zs = [k * (xa + xb), k * (xa - xb)];
    // real exponents of zeta_pm and varsigma_pm
    let ym = (ya - yb).abs();
    let yp = ya + yb;
    let es = [-k * yp, -k * ym, -k * (2.0 * l2 - yp), -k * (2.0 * l2 - ym)];
    let r = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt();
    let mut sum = 0.0;
    for j in 0..terms {
        let jt = j as f64 * log_tau;
        for (iz, &th) in zs.iter().enumerate() {
            for (ie, &e) in es.iter().enumerate() {
                let re = jt + e;
                if j == 0 && iz == 1 && ie == 1 {
                    // singular term: ln(|1 - z_- zeta_-| / |r - r'|)
                    sum += if r == 0.0 {
                        k.ln()
                    } else {
                        (abs_one_minus_exp(re, th) / r).ln()
                    };
                } else {
                    sum += abs_one_minus_exp(re, th).ln();
                }
            }
        }
    }
    let tau = log_tau.exp();
    // |ln|1-w|| <= |w|/(1-|w|) summed over the 16 products per power of tau
    let tail = 16.0 * tau.powi(terms as i32) / ((1.0 - tau) * (1.0 - tau.min(0.5))) / (2.0 * PI);
    (h0 / l1 - sum / (2.0 * PI), tail)
}

/// Coefficients `C_n` of the unit-disk Helmholtz reflection series, such
/// that the `n`-th term is `sigma_n cos(n phi) (r r')^n C_n I~_n(kr) I~_n(kr')`.
fn disk_helmholtz_coefficients(k: f64) -> Result<Vec<f64>> {
    if k > crate::special::OVERFLOW_X {
        return Err(Error::Range {
            x: k,
            threshold: crate::special::OVERFLOW_X,
        });
    }
    let nmax = N_MAX_CAP;
    let kt = bessel_k_tilde_seq(nmax + 1, k);
    let it: Vec<f64> = (0..=nmax + 1).map(|n| bessel_i_tilde(n as u32, k)).collect();
    let (k0, k1) = bessel_k01(k);
    let q = 0.25 * k * k;
    let mut c = Vec::with_capacity(nmax + 1);
    // n = 0: K0'/I0' = -K1/I1, I1 = (k/2) I~_1
    c.push(-k1 / (0.5 * k * it[1]));
    // n = 1
    c.push(-0.5 * (kt[2] + 0.5 * k * k * k0) / (it[0] + q * it[2] / 2.0));
    for n in 2..=nmax {
        let nf = n as f64;
        let kn = kt[n + 1] + k * k * kt[n - 1] / (4.0 * nf * (nf - 1.0));
        let inn = it[n - 1] + q * it[n + 1] / (nf * (nf + 1.0));
        c.push(-kn / (2.0 * nf * inn));
    }
    Ok(c)
}

/// Sum a term sequence with doubling truncation. Each term comes with a
/// bound on its size that ignores the angular factor, so a term that
/// vanishes by symmetry does not stop the sum. `q` bounds the geometric
/// decay of the bounds; returns (sum, tail estimate).
fn sum_series<F: FnMut(usize) -> (f64, f64)>(mut term: F, q: f64, n_start: usize) -> Result<(f64, f64)> {
    let (mut sum, first) = term(0);
    if q == 0.0 {
        return Ok((sum, 0.0));
    }
    let mut scale = first.abs();
    let mut cap = n_start;
    let mut last = first.abs();
    let mut n = 1;
    loop {
        if n > N_MAX_CAP {
            break;
        }
        let (t, b) = term(n);
        sum += t;
        last = b.abs();
        scale = scale.max(sum.abs());
        let tail = if q < 1.0 { last * q / (1.0 - q) } else { f64::INFINITY };
        if tail <= 1e-17 * scale && last <= SERIES_RTOL * scale {
            break;
        }
        if n + 1 == cap {
            if last <= SERIES_RTOL * scale.max(1e-300) && q < 1.0 {
                break;
            }
            if cap >= N_MAX_CAP {
                break;
            }
            cap = (cap * 2).min(N_MAX_CAP + 1);
        }
        n += 1;
    }
    if q >= 1.0 {
        return Err(Error::Accuracy { n, ratio: q });
    }
    Ok((sum, last * q / (1.0 - q)))
}

fn disk_helmholtz_series(x: &[f64; 2], y: &[f64; 2], k: f64, coef: &[f64], n_start: usize) -> Result<(f64, f64)> {
    let r = x[0].hypot(x[1]);
    let rp = y[0].hypot(y[1]);
    let cphi = if r == 0.0 || rp == 0.0 {
        1.0
    } else {
        ((x[0] * y[0] + x[1] * y[1]) / (r * rp)).clamp(-1.0, 1.0)
    };
    let q = r * rp;
    // Chebyshev recurrence for cos(n phi)
    let mut cos_prev = cphi;
    let mut cos_cur = 1.0;
    let mut qn = 1.0;
    sum_series(
        |n| {
            let cn = if n == 0 {
                1.0
            } else {
                let next = 2.0 * cphi * cos_cur - cos_prev;
                cos_prev = cos_cur;
                cos_cur = next;
                next
            };
            if n > 0 {
                qn *= q;
            }
            let sigma = if n == 0 { 1.0 } else { 2.0 };
            // I0 = I~_0 at n = 0
            let b = sigma * qn * coef[n] * bessel_i_tilde(n as u32, k * r) * bessel_i_tilde(n as u32, k * rp);
            (cn * b, b)
        },
        q,
        n_start,
    )
}

/// Ratios `k~'_n(K) / i~'_n(K)` for the sphere reflection series.
fn sphere_helmholtz_coefficients(kk: f64) -> Result<Vec<f64>> {
    if kk > crate::special::OVERFLOW_X {
        return Err(Error::Range {
            x: kk,
            threshold: crate::special::OVERFLOW_X,
        });
    }
    let nmax = N_MAX_CAP;
    let x2 = kk * kk;
    let e = (-kk).exp();
    // k~_n(K) by forward recurrence
    let mut kt = Vec::with_capacity(nmax + 2);
    kt.push(e);
    kt.push(e * (1.0 + kk));
    for n in 1..=nmax {
        let nf = n as f64;
        let next = kt[n] + x2 * kt[n - 1] / ((2.0 * nf + 1.0) * (2.0 * nf - 1.0));
        kt.push(next);
    }
    let it: Vec<f64> = (0..=nmax + 1).map(|n| sph_i_tilde(n as u32, kk)).collect();
    let mut c = Vec::with_capacity(nmax + 1);
    for n in 0..=nmax {
        let nf = n as f64;
        let ip = if n == 0 {
            x2 * it[1] / 3.0
        } else {
            nf * it[n - 1] + (nf + 1.0) * x2 * it[n + 1] / ((2.0 * nf + 1.0) * (2.0 * nf + 3.0))
        };
        let kp = if n == 0 {
            -kt[1]
        } else {
            -(nf * x2 * kt[n - 1] / (2.0 * nf - 1.0) + (nf + 1.0) * (2.0 * nf + 1.0) * kt[n + 1]) / (2.0 * nf + 1.0)
        };
        c.push(kp / ip);
    }
    Ok(c)
}

/// `G_sp` (unscaled by D) and its tail estimate.
fn sphere_helmholtz_series(x: &[f64], y: &[f64], r0: f64, k: f64, coef: &[f64], n_start: usize) -> Result<(f64, f64)> {
    let a = norm(x);
    let b = norm(y);
    let ct = if a == 0.0 || b == 0.0 {
        1.0
    } else {
        (x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / (a * b)).clamp(-1.0, 1.0)
    };
    let q = a * b / (r0 * r0);
    let mut p_prev = 1.0;
    let mut p_cur = 1.0;
    let mut qn = 1.0;
    let (s, tail) = sum_series(
        |n| {
            let pn = match n {
                0 => 1.0,
                1 => {
                    p_prev = 1.0;
                    p_cur = ct;
                    ct
                }
                _ => {
                    let nf = (n - 1) as f64;
                    let next = ((2.0 * nf + 1.0) * ct * p_cur - nf * p_prev) / (nf + 1.0);
                    p_prev = p_cur;
                    p_cur = next;
                    next
                }
            };
            if n > 0 {
                qn *= q;
            }
            let bound = qn * coef[n] * sph_i_tilde(n as u32, k * a) * sph_i_tilde(n as u32, k * b);
            (pn * bound, bound)
        },
        q,
        n_start,
    )?;
    let pre = 1.0 / (4.0 * PI * r0);
    Ok((pre * s, pre * tail))
}

fn as2(p: &[f64]) -> Result<[f64; 2]> {
    if p.len() != 2 {
        return Err(Error::Domain("expected a 2D point".into()));
    }
    Ok([p[0], p[1]])
}

/// Unit-disk Laplace Green's function.
#[allow(non_snake_case)]
pub fn disk_laplace_G0(x: &[f64], xi: &[f64], d: f64) -> Result<GreensEval> {
    as2(x)?;
    Green::laplace(&DomainGeometry::unit_disk(), d)?.eval(x, xi)
}

/// Rectangle Laplace Green's function with `tau_terms` powers of `tau`.
#[allow(non_snake_case)]
pub fn rect_laplace_G0(x: &[f64], xp: &[f64], l1: f64, l2: f64, d: f64, tau_terms: usize) -> Result<GreensEval> {
    let geom = DomainGeometry::Rect2D { l1, l2 };
    let mut g = Green::laplace(&geom, d)?;
    g.kernel = Kernel::RectLaplace {
        l1,
        l2,
        terms: tau_terms.max(1),
    };
    g.eval(x, xp)
}

/// `H_0(y, y')` of the rectangle expansion.
pub fn rect_h0(y: f64, yp: f64, l2: f64) -> f64 {
    l2 / 3.0 + (y * y + yp * yp) / (2.0 * l2) - y.max(yp)
}

/// Ball Laplace Green's function.
#[allow(non_snake_case)]
pub fn sphere_laplace_G0(x: &[f64], xi: &[f64], r0: f64, d: f64) -> Result<GreensEval> {
    Green::laplace(&DomainGeometry::Sphere3D { r0 }, d)?.eval(x, xi)
}

/// Ball modified-Helmholtz Green's function with rate `s_plus_gamma`.
#[allow(non_snake_case)]
pub fn sphere_helmholtz_G(x: &[f64], x0: &[f64], r0: f64, d: f64, s_plus_gamma: f64, n_max: usize) -> Result<GreensEval> {
    Green::with_truncation(
        &DomainGeometry::Sphere3D { r0 },
        d,
        GreenMode::Helmholtz { gamma: s_plus_gamma },
        n_max,
    )?
    .eval(x, x0)
}

/// Unit-disk modified-Helmholtz Green's function with rate `s_plus_gamma`.
#[allow(non_snake_case)]
pub fn disk_helmholtz_G(x: &[f64], xi: &[f64], d: f64, s_plus_gamma: f64, n_max: usize) -> Result<GreensEval> {
    Green::with_truncation(
        &DomainGeometry::unit_disk(),
        d,
        GreenMode::Helmholtz { gamma: s_plus_gamma },
        n_max,
    )?
    .eval(x, xi)
}

/// Central difference with one Richardson step over `h`, `h/2`.
/// Returns (derivative, error estimate).
pub fn richardson_derivative<F: FnMut(f64) -> Result<f64>>(mut f: F, s0: f64, h: f64) -> Result<(f64, f64)> {
    let d1 = (f(s0 + h)? - f(s0 - h)?) / (2.0 * h);
    let h2 = 0.5 * h;
    let d2 = (f(s0 + h2)? - f(s0 - h2)?) / (2.0 * h2);
    let r = (4.0 * d2 - d1) / 3.0;
    Ok((r, (r - d2).abs()))
}

/// Default step for s-derivatives.
pub fn default_s_step(gamma0: f64) -> f64 {
    1e-3 * gamma0.max(1.0)
}

/// `dG/ds (x, xp; s0)` for the Helmholtz Green's function with rate
/// `gamma0 + s`. When `x == xp` the regular part is differentiated.
pub fn helmholtz_s_derivative(
    geom: &DomainGeometry,
    d: f64,
    gamma0: f64,
    x: &[f64],
    xp: &[f64],
    s0: f64,
    h: f64,
) -> Result<(f64, f64)> {
    if gamma0 == 0.0 && s0 <= h {
        return Err(Error::Pole);
    }
    if !(h > 0.0) || gamma0 + s0 - h <= 0.0 {
        return Err(Error::Domain(format!(
            "step h = {h} leaves the region gamma0 + s > 0"
        )));
    }
    let same = x == xp;
    richardson_derivative(
        |s| {
            let g = Green::helmholtz(geom, d, gamma0 + s)?;
            if same {
                g.regular_diag(x)
            } else {
                g.value(x, xp)
            }
        },
        s0,
        h,
    )
}

/// Green's matrix with regularised diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionMatrix {
    pub entries: DMatrix<f64>,
    pub n: usize,
    pub mode: GreenMode,
}

impl InteractionMatrix {
    pub fn asymmetry(&self) -> f64 {
        (&self.entries - self.entries.transpose()).amax()
    }
}

/// Green's matrix for the compartment centres of `spec`. In 2D the diagonal
/// carries the `-ln(ell_j)/(2 pi D)` shift.
pub fn build_interaction_matrix(spec: &ValidatedSpec, mode: GreenMode) -> Result<InteractionMatrix> {
    let g = Green::new(&spec.geometry, spec.d, mode)?;
    interaction_matrix_with(&g, spec)
}

pub fn interaction_matrix_with(g: &Green, spec: &ValidatedSpec) -> Result<InteractionMatrix> {
    let n = spec.n();
    let dim = spec.geometry.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let cj = &spec.compartments[j];
        let mut diag = g.regular_diag(&cj.center)?;
        if dim == 2 {
            diag -= cj.ell.ln() / (2.0 * PI * g.d);
        }
        m[(j, j)] = diag;
        for k in (j + 1)..n {
            let v = g.value(&cj.center, &spec.compartments[k].center)?;
            m[(j, k)] = v;
            m[(k, j)] = v;
        }
    }
    Ok(InteractionMatrix {
        entries: m,
        n,
        mode: g.mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::integrate_domain_centered;
    use proptest::prelude::*;

    fn unit_disk_points() -> Vec<[f64; 2]> {
        vec![[0.3, 0.0], [-0.2, 0.5], [0.0, 0.0], [0.6, -0.6], [0.1, 0.85]]
    }

    #[test]
    fn disk_laplace_symmetry_and_decomposition() {
        let pts = unit_disk_points();
        for a in &pts {
            for b in &pts {
                if a == b {
                    continue;
                }
                let g1 = disk_laplace_G0(a, b, 1.3).unwrap();
                let g2 = disk_laplace_G0(b, a, 1.3).unwrap();
                assert!((g1.value - g2.value).abs() < 1e-12);
                assert!((g1.value - g1.singular_part - g1.regular_part).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn disk_laplace_mean_zero() {
        let g = Green::laplace(&DomainGeometry::unit_disk(), 1.0).unwrap();
        let xi = [0.3, 0.0];
        let v = integrate_domain_centered(&DomainGeometry::unit_disk(), &xi, 48, |x| {
            if dist(x, &xi) == 0.0 {
                0.0
            } else {
                g.value(x, &xi).unwrap()
            }
        });
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn disk_radius_scaling() {
        let geom = DomainGeometry::Disk2D { radius: 2.0 };
        let g = Green::laplace(&geom, 1.0).unwrap();
        let xi = [0.4, -0.6];
        let v = integrate_domain_centered(&geom, &xi, 48, |x| {
            if dist(x, &xi) == 0.0 { 0.0 } else { g.value(x, &xi).unwrap() }
        });
        assert!(v.abs() < 1e-6, "{v}");
        // Neumann at r = 2
        let h = 1e-5;
        for t in [0.3f64, 1.9, 4.0] {
            let e = [t.cos(), t.sin()];
            let gi = g.value(&[2.0 * e[0] * (1.0 - h), 2.0 * e[1] * (1.0 - h)], &xi).unwrap();
            let gb = g.value(&[2.0 * e[0], 2.0 * e[1]], &xi).unwrap();
            assert!(((gb - gi) / (2.0 * h)).abs() < 1e-4);
        }
    }

    #[test]
    fn rect_h0_midline() {
        let l2 = 0.7;
        assert!((rect_h0(l2 / 2.0, l2 / 2.0, l2) - l2 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rect_laplacian_and_mean() {
        let (l1, l2) = (1.0, 0.8);
        let geom = DomainGeometry::Rect2D { l1, l2 };
        let g = Green::laplace(&geom, 1.0).unwrap();
        let xp = [0.3, 0.45];
        let h = 1e-3;
        let x = [0.7, 0.2];
        let f = |p: [f64; 2]| g.value(&p, &xp).unwrap();
        let lap = (f([x[0] + h, x[1]]) + f([x[0] - h, x[1]]) + f([x[0], x[1] + h]) + f([x[0], x[1] - h])
            - 4.0 * f(x))
            / (h * h);
        let target = 1.0 / (l1 * l2);
        assert!(((lap - target) / target).abs() < 1e-4, "{lap}");
        let v = integrate_domain_centered(&geom, &xp, 48, |p| {
            if dist(p, &xp) == 0.0 { 0.0 } else { g.value(p, &xp).unwrap() }
        });
        assert!(v.abs() < 1e-7, "{v}");
    }

    #[test]
    fn rect_neumann_and_regular_limit() {
        let g = Green::laplace(&DomainGeometry::Rect2D { l1: 1.0, l2: 1.0 }, 1.0).unwrap();
        let xp = [0.4, 0.6];
        let h = 1e-6;
        let dn = (g.value(&[1.0, 0.3], &xp).unwrap() - g.value(&[1.0 - h, 0.3], &xp).unwrap()) / h;
        assert!(dn.abs() < 1e-4, "{dn}");
        let dn = (g.value(&[0.5, h], &xp).unwrap() - g.value(&[0.5, 0.0], &xp).unwrap()) / h;
        assert!(dn.abs() < 1e-4, "{dn}");
        let r = g.regular_diag(&xp).unwrap();
        let near = g.eval(&[0.4 + 1e-5, 0.6], &xp).unwrap().regular_part;
        assert!((r - near).abs() < 1e-5);
    }

    #[test]
    fn sphere_laplace_constant_by_radial_quadrature() {
        // with xi = 0 the kernel is radial; integrate it with B = 0
        for a in [1.0, 0.7, 2.5] {
            let (v, _) = crate::quad::integrate(
                |r| 4.0 * PI * r * r * (1.0 / (4.0 * PI * r) + 1.0 / (4.0 * PI * a) + r * r / (8.0 * PI * a * a * a)),
                0.0,
                a,
                1e-15,
                1e-14,
            );
            let b = -v / (4.0 / 3.0 * PI * a * a * a);
            assert!((b - sphere_laplace_constant(a)).abs() < 1e-12);
        }
    }

    #[test]
    fn sphere_laplace_origin_branch_and_diag() {
        let r0 = 1.0;
        let g = Green::laplace(&DomainGeometry::Sphere3D { r0 }, 1.0).unwrap();
        let rd = g.regular_diag(&[0.0, 0.0, 0.0]).unwrap();
        assert!((rd - (1.0 / (4.0 * PI * r0) - 7.0 / (10.0 * PI * r0))).abs() < 1e-14);
        let xj = [0.0, 0.3, -0.4];
        let v = g.value(&xj, &[0.0, 0.0, 0.0]).unwrap();
        let rr: f64 = 0.5;
        let j0 = (1.0 / rr + rr * rr / 2.0) / (4.0 * PI) + 1.0 / (4.0 * PI * r0) - 7.0 / (10.0 * PI * r0);
        assert!((v - j0).abs() < 1e-14);
        let x = [0.2, 0.1, 0.3];
        let xx: f64 = 0.14;
        let expect = (r0 / (r0 * r0 - xx) + (r0 * r0 / (r0 * r0 - xx)).ln() / r0 + xx / r0.powi(3)) / (4.0 * PI)
            - 7.0 / (10.0 * PI * r0);
        assert!((g.regular_diag(&x).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn sphere_laplace_neumann_and_laplacian() {
        let g = Green::laplace(&DomainGeometry::unit_ball(), 2.0).unwrap();
        let xi = [0.2, -0.1, 0.3];
        let h = 1e-6;
        let e = [0.6, 0.0, 0.8];
        let gb = g.value(&e, &xi).unwrap();
        let gi = g.value(&[e[0] * (1.0 - h), e[1] * (1.0 - h), e[2] * (1.0 - h)], &xi).unwrap();
        assert!(((gb - gi) / h).abs() < 1e-4);
        let x = [-0.3, 0.2, 0.1];
        let hh = 1e-3;
        let mut lap = -6.0 * g.value(&x, &xi).unwrap();
        for k in 0..3 {
            for sgn in [-1.0, 1.0] {
                let mut p = x;
                p[k] += sgn * hh;
                lap += g.value(&p, &xi).unwrap();
            }
        }
        lap /= hh * hh;
        let target = 1.0 / (2.0 * 4.0 / 3.0 * PI);
        assert!(((lap - target) / target).abs() < 1e-4, "{lap} {target}");
    }

    #[test]
    fn helmholtz_disk_normalisation_and_neumann() {
        let gamma = 1.0;
        let g = Green::helmholtz(&DomainGeometry::unit_disk(), 1.0, gamma).unwrap();
        let xi = [0.35, 0.2];
        let v = integrate_domain_centered(&DomainGeometry::unit_disk(), &xi, 48, |x| {
            if dist(x, &xi) == 0.0 { 0.0 } else { g.value(x, &xi).unwrap() }
        });
        assert!((v - 1.0 / gamma).abs() < 1e-7, "{v}");
        let h = 1e-6;
        for t in [0.0f64, 1.0, 2.5, 4.0] {
            let e = [t.cos(), t.sin()];
            let gb = g.value(&e, &xi).unwrap();
            let gi = g.value(&[e[0] * (1.0 - h), e[1] * (1.0 - h)], &xi).unwrap();
            assert!(((gb - gi) / h).abs() < 1e-5);
        }
    }

    #[test]
    fn helmholtz_disk_coefficients_match_direct_ratio() {
        let k = 1.7;
        let c = disk_helmholtz_coefficients(k).unwrap();
        for n in 2..8u32 {
            let kp = -0.5 * (crate::special::bessel_k(n - 1, k).unwrap() + crate::special::bessel_k(n + 1, k).unwrap());
            let ip = 0.5 * (crate::special::bessel_i(n - 1, k).unwrap() + crate::special::bessel_i(n + 1, k).unwrap());
            let mut fact = 1.0;
            for j in 1..=n {
                fact *= j as f64;
            }
            let direct = kp / ip * (0.5 * k).powi(2 * n as i32) / (fact * fact);
            assert!(((c[n as usize] - direct) / direct).abs() < 1e-12, "{n}");
        }
    }

    #[test]
    fn helmholtz_sphere_normalisation_neumann_pole() {
        let g = Green::helmholtz(&DomainGeometry::unit_ball(), 1.0, 2.0).unwrap();
        let x0 = [0.1, 0.3, -0.2];
        let v = integrate_domain_centered(&DomainGeometry::unit_ball(), &x0, 32, |x| {
            if dist(x, &x0) == 0.0 { 0.0 } else { g.value(x, &x0).unwrap() }
        });
        assert!((v - 0.5).abs() < 1e-7, "{v}");
        let h = 1e-6;
        let e = [0.0, 0.6, -0.8];
        let gb = g.value(&e, &x0).unwrap();
        let gi = g.value(&[0.0, 0.6 * (1.0 - h), -0.8 * (1.0 - h)], &x0).unwrap();
        assert!(((gb - gi) / h).abs() < 1e-5);
        let s = 1e-6;
        let gp = Green::helmholtz(&DomainGeometry::unit_ball(), 1.0, s).unwrap();
        let sg = s * gp.value(&[0.3, 0.0, 0.0], &x0).unwrap();
        let target = 3.0 / (4.0 * PI);
        assert!(((sg - target) / target).abs() < 1e-4);
    }

    #[test]
    fn helmholtz_sphere_origin_collapses_to_first_term() {
        let (d, gamma) = (1.5, 0.8);
        let g = Green::helmholtz(&DomainGeometry::unit_ball(), d, gamma).unwrap();
        let xj = [0.2, -0.3, 0.4];
        let r: f64 = norm(&xj);
        let k = (gamma / d).sqrt();
        let kk = k;
        // i0' = i1, k0' = -k0 (1 + 1/x)
        let i1 = kk.cosh() / kk - kk.sinh() / (kk * kk);
        let k0p = -(-kk).exp() / kk * (1.0 + 1.0 / kk);
        let i0 = (k * r).sinh() / (k * r);
        let expect = ((-k * r).exp() / (4.0 * PI * r) - k / (4.0 * PI) * k0p / i1 * i0) / d;
        let v = g.value(&xj, &[0.0, 0.0, 0.0]).unwrap();
        assert!((v - expect).abs() < 1e-13 * expect.abs(), "{v} {expect}");
    }

    #[test]
    fn free_space_derivative_by_richardson() {
        let (d, r) = (1.0, 0.7);
        let f = |s: f64| Ok((-(s / d).sqrt() * r).exp() / (4.0 * PI * d * r));
        let (v, _) = richardson_derivative(f, 1.0, 1e-3).unwrap();
        let exact = -(-r).exp() / (8.0 * PI * d);
        assert!((v - exact).abs() < 1e-8);
    }

    #[test]
    fn s_derivative_pole_rejected() {
        let geom = DomainGeometry::unit_ball();
        let r = helmholtz_s_derivative(&geom, 1.0, 0.0, &[0.1, 0.0, 0.0], &[0.0, 0.2, 0.0], 0.0, 1e-3);
        assert!(matches!(r, Err(Error::Pole)));
    }

    #[test]
    fn rectangle_helmholtz_unsupported() {
        let g = Green::helmholtz(&DomainGeometry::Rect2D { l1: 1.0, l2: 1.0 }, 1.0, 1.0);
        assert!(matches!(g, Err(Error::Unsupported(_))));
    }

    #[test]
    fn coincident_points_are_singular() {
        assert!(matches!(disk_laplace_G0(&[0.1, 0.1], &[0.1, 0.1], 1.0), Err(Error::Singularity)));
        assert!(matches!(disk_laplace_G0(&[1.5, 0.0], &[0.1, 0.1], 1.0), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn rect_symmetry(x in 0.05f64..0.95, y in 0.05f64..0.55, u in 0.05f64..0.95, v in 0.05f64..0.55) {
            prop_assume!((x - u).abs() + (y - v).abs() > 1e-3);
            let a = rect_laplace_G0(&[x, y], &[u, v], 1.0, 0.6, 1.0, 6).unwrap();
            let b = rect_laplace_G0(&[u, v], &[x, y], 1.0, 0.6, 1.0, 6).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-10);
            prop_assert!((a.value - a.singular_part - a.regular_part).abs() <= 1e-12);
        }

        #[test]
        fn rect_truncation_within_bound(x in 0.05f64..0.95, y in 0.05f64..0.95, u in 0.05f64..0.95, v in 0.05f64..0.95, j in 1usize..3) {
            prop_assume!((x - u).abs() + (y - v).abs() > 1e-3);
            let full = rect_laplace_G0(&[x, y], &[u, v], 1.0, 1.0, 1.0, 12).unwrap();
            let cut = rect_laplace_G0(&[x, y], &[u, v], 1.0, 1.0, 1.0, j).unwrap();
            prop_assert!((full.value - cut.value).abs() <= cut.tail);
        }

        #[test]
        fn helmholtz_symmetry(t1 in 0.0f64..6.28, r1 in 0.0f64..0.9, t2 in 0.0f64..6.28, r2 in 0.0f64..0.9) {
            let a = [r1 * t1.cos(), r1 * t1.sin()];
            let b = [r2 * t2.cos(), r2 * t2.sin()];
            prop_assume!(dist(&a, &b) > 1e-3);
            let g = Green::helmholtz(&DomainGeometry::unit_disk(), 0.7, 2.0).unwrap();
            let e = g.eval(&a, &b).unwrap();
            prop_assert!((e.value - g.value(&b, &a).unwrap()).abs() <= 1e-12 * e.value.abs().max(1.0));
            prop_assert!((e.value - e.singular_part - e.regular_part).abs() <= 1e-12);
            let s = Green::helmholtz(&DomainGeometry::unit_ball(), 0.7, 2.0).unwrap();
            let a3 = [a[0], 0.1, a[1]];
            let b3 = [b[0], -0.1, b[1]];
            let e3 = s.eval(&a3, &b3).unwrap();
            prop_assert!((e3.value - s.value(&b3, &a3).unwrap()).abs() <= 1e-12 * e3.value.abs().max(1.0));
        }
    }

    #[test]
    fn series_survives_vanishing_terms() {
        // cos(2 phi) = 0 and P_3(0) = 0 zero out single terms of the sums
        let g = Green::helmholtz(&DomainGeometry::unit_disk(), 1.0, 1.0).unwrap();
        let x = [0.05, 0.0];
        let at = |t: f64| g.value(&[-0.3 + t, -0.3], &x).unwrap();
        let mid = 0.5 * (at(-1e-9) + at(1e-9));
        assert!((at(0.0) - mid).abs() < 1e-13);
        let g = Green::helmholtz(&DomainGeometry::unit_ball(), 1.0, 1.0).unwrap();
        let x = [0.4, 0.0, 0.0];
        let at = |t: f64| g.value(&[t, 0.5, 0.0], &x).unwrap();
        let mid = 0.5 * (at(-1e-9) + at(1e-9));
        assert!((at(0.0) - mid).abs() < 1e-13);
    }
}
