//! Quadrature rules: Gauss-Legendre, adaptive Gauss-Kronrod on intervals,
//! and polar/spherical rules centred on a (possibly singular) point inside
//! a disk, rectangle or ball.

use std::f64::consts::PI;

use crate::geometry::DomainGeometry;

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for k in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * k + 1) as f64 * z * p1 - k as f64 * p2) / (k + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Gauss-Legendre rule mapped to [a, b].
pub fn gl_interval(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| h * v).collect(),
    )
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod (7/15) quadrature. Returns (value, error estimate).
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> (f64, f64) {
    let mut stack = vec![(a, b, gk15(&mut f, a, b))];
    let mut total = stack[0].2 .0;
    let mut done_val = 0.0;
    let mut done_err = 0.0;
    let mut evals = 0;
    while let Some((lo, hi, (v, e))) = stack.pop() {
        let tol = abs_tol.max(rel_tol * total.abs());
        if e <= tol * (hi - lo) / (b - a) || evals > 20000 || (hi - lo).abs() < 1e-14 * (b - a).abs() {
            done_val += v;
            done_err += e;
            continue;
        }
        let mid = 0.5 * (lo + hi);
        let l = gk15(&mut f, lo, mid);
        let r = gk15(&mut f, mid, hi);
        evals += 30;
        total += l.0 + r.0 - v;
        stack.push((lo, mid, l));
        stack.push((mid, hi, r));
    }
    (done_val, done_err)
}

/// Distance from `p` (inside) along unit direction `e` to the sphere/circle
/// of radius `r` centred at the origin.
fn ray_to_sphere(p: &[f64], e: &[f64], r: f64) -> f64 {
    let pe: f64 = p.iter().zip(e).map(|(a, b)| a * b).sum();
    let pp: f64 = p.iter().map(|a| a * a).sum();
    -pe + (pe * pe + r * r - pp).max(0.0).sqrt()
}

/// Integrate `f` over the domain with a rule centred at `p`, which absorbs
/// log and 1/r singularities at `p`. `n` sets the resolution per direction.
pub fn integrate_domain_centered<F: FnMut(&[f64]) -> f64>(
    geom: &DomainGeometry,
    p: &[f64],
    n: usize,
    mut f: F,
) -> f64 {
    let (ur, wr) = gl_interval(n, 0.0, 1.0);
    match *geom {
        DomainGeometry::Disk2D { radius } => {
            let nt = 2 * n;
            let mut total = 0.0;
            for it in 0..nt {
                let t = 2.0 * PI * it as f64 / nt as f64;
                let e = [t.cos(), t.sin()];
                let rmax = ray_to_sphere(p, &e, radius);
                total += radial_line(p, &e, rmax, &ur, &wr, &mut f) * (2.0 * PI / nt as f64);
            }
            total
        }
        DomainGeometry::Rect2D { l1, l2 } => {
            // four triangles with apex p, mapped from the unit square
            let corners = [[0.0, 0.0], [l1, 0.0], [l1, l2], [0.0, l2], [0.0, 0.0]];
            let (sg, wg) = gl_interval(n, 0.0, 1.0);
            let mut total = 0.0;
            for side in corners.windows(2) {
                let (q0, q1) = (side[0], side[1]);
                let jac = ((q0[0] - p[0]) * (q1[1] - p[1]) - (q0[1] - p[1]) * (q1[0] - p[0])).abs();
                for (sig, ws) in sg.iter().zip(&wg) {
                    let q = [q0[0] + sig * (q1[0] - q0[0]), q0[1] + sig * (q1[1] - q0[1])];
                    for (u, wu) in ur.iter().zip(&wr) {
                        let rho = u * u;
                        let x = [p[0] + rho * (q[0] - p[0]), p[1] + rho * (q[1] - p[1])];
                        total += ws * wu * jac * rho * 2.0 * u * f(&x);
                    }
                }
            }
            total
        }
        DomainGeometry::Sphere3D { r0 } => {
            let (ct, wct) = gauss_legendre(n);
            let nphi = 2 * n;
            let mut total = 0.0;
            for (c, wc) in ct.iter().zip(&wct) {
                let s = (1.0 - c * c).sqrt();
                for ip in 0..nphi {
                    let ph = 2.0 * PI * ip as f64 / nphi as f64;
                    let e = [s * ph.cos(), s * ph.sin(), *c];
                    let rmax = ray_to_sphere(p, &e, r0);
                    let mut acc = 0.0;
                    let mut x = [0.0; 3];
                    for (u, w) in ur.iter().zip(&wr) {
                        let rho = rmax * u;
                        for k in 0..3 {
                            x[k] = p[k] + rho * e[k];
                        }
                        acc += w * rmax * rho * rho * f(&x);
                    }
                    total += wc * (2.0 * PI / nphi as f64) * acc;
                }
            }
            total
        }
    }
}

/// Integral of `f(p + rho e) rho` over rho in [0, rmax], with rho = rmax u^2.
fn radial_line<F: FnMut(&[f64]) -> f64>(
    p: &[f64],
    e: &[f64; 2],
    rmax: f64,
    ur: &[f64],
    wr: &[f64],
    f: &mut F,
) -> f64 {
    let mut acc = 0.0;
    for (u, w) in ur.iter().zip(wr) {
        let rho = rmax * u * u;
        let x = [p[0] + rho * e[0], p[1] + rho * e[1]];
        acc += w * f(&x) * rho * 2.0 * rmax * u;
    }
    acc
}

/// Centred domain integral refined by doubling until two successive values
/// agree to `rel_tol`. Returns (value, last difference).
pub fn integrate_domain_adaptive<F: FnMut(&[f64]) -> f64>(
    geom: &DomainGeometry,
    p: &[f64],
    rel_tol: f64,
    mut f: F,
) -> (f64, f64) {
    let mut n = 16;
    let mut prev = integrate_domain_centered(geom, p, n, &mut f);
    loop {
        n *= 2;
        let cur = integrate_domain_centered(geom, p, n, &mut f);
        let diff = (cur - prev).abs();
        if diff <= rel_tol * cur.abs().max(1e-300) || n >= 128 {
            return (cur, diff);
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((s - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn gk_handles_smooth_and_log() {
        let (v, _) = integrate(|x| x.sin(), 0.0, PI, 1e-14, 1e-13);
        assert!((v - 2.0).abs() < 1e-12);
        let (v, _) = integrate(|x| x.ln(), 0.0, 1.0, 1e-14, 1e-12);
        assert!((v + 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn domain_areas() {
        let disk = DomainGeometry::unit_disk();
        let a = integrate_domain_centered(&disk, &[0.3, -0.2], 32, |_| 1.0);
        assert!((a - PI).abs() < 1e-10, "{a}");
        let rect = DomainGeometry::Rect2D { l1: 2.0, l2: 0.5 };
        let a = integrate_domain_centered(&rect, &[1.7, 0.1], 24, |_| 1.0);
        assert!((a - 1.0).abs() < 1e-12, "{a}");
        let ball = DomainGeometry::unit_ball();
        let v = integrate_domain_centered(&ball, &[0.2, 0.1, -0.4], 32, |_| 1.0);
        assert!((v - 4.0 * PI / 3.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn log_singularity_in_disk() {
        // integral of ln|x| over the unit disk is -pi/2
        let disk = DomainGeometry::unit_disk();
        let v = integrate_domain_centered(&disk, &[0.0, 0.0], 32, |x| {
            (x[0] * x[0] + x[1] * x[1]).sqrt().ln()
        });
        assert!((v + PI / 2.0).abs() < 1e-10, "{v}");
    }
}
