//! Real-argument special functions: modified Bessel functions of integer
//! order, modified spherical Bessel functions, Legendre polynomials and the
//! interface function `F(x) = x I1(x) / I0(x)`.
//!
//! Cylindrical `I_n` uses its power series up to `x = 50` (all terms are
//! positive, so there is no cancellation) and the large-argument expansion
//! beyond. `K_0`/`K_1` use the logarithmic series for `x <= 2` and Steed's
//! continued fraction above, with forward recurrence for higher orders.
//! Spherical `k_n` is the finite closed form.
//!
//! The `*_tilde` functions strip the small-argument power behaviour so that
//! high-order series in the Green's-function module stay in range.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Arguments above this overflow `I_n` and `i_n`.
pub const OVERFLOW_X: f64 = 700.0;

/// Series/asymptotic crossover for `I_n`.
pub const SERIES_MAX_X: f64 = 50.0;

const TOL: f64 = 1e-17;
const MAX_TERMS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecialKind {
    BesselI(u32),
    BesselK(u32),
    SphericalI(u32),
    SphericalK(u32),
    LegendreP(u32),
}

/// Evaluate one of the supported special functions at `x`.
pub fn eval_special(kind: SpecialKind, x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {x}")));
    }
    match kind {
        SpecialKind::BesselI(n) => bessel_i(n, x),
        SpecialKind::BesselK(n) => bessel_k(n, x),
        SpecialKind::SphericalI(n) => sph_i(n, x),
        SpecialKind::SphericalK(n) => sph_k(n, x),
        SpecialKind::LegendreP(n) => Ok(legendre_p(n, x)),
    }
}

fn check_overflow(x: f64) -> Result<()> {
    if x.abs() > OVERFLOW_X {
        Err(Error::Range {
            x,
            threshold: OVERFLOW_X,
        })
    } else {
        Ok(())
    }
}

fn check_k_arg(x: f64) -> Result<()> {
    if x <= 0.0 || x.is_nan() {
        Err(Error::Domain(format!("K-type functions need x > 0, got {x}")))
    } else {
        Ok(())
    }
}

/// Power series for `I_n(x)`, `x >= 0`.
fn bessel_i_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut t = 1.0;
    for j in 1..=n {
        t *= half / j as f64;
    }
    if t == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = t;
    for k in 1..MAX_TERMS {
        t *= q / (k as f64 * (n as f64 + k as f64));
        sum += t;
        if t < TOL * sum {
            break;
        }
    }
    sum
}

/// Large-argument expansion of `e^{-x} I_n(x)`. Accurate when `n^2 <= x`.
fn bessel_i_asym_scaled(n: u32, x: f64) -> f64 {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut t = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        let odd = (2 * k - 1) as f64;
        let next = -t * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() >= t.abs() {
            break;
        }
        t = next;
        sum += t;
        if t.abs() < TOL * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

fn use_asymptotic(n: u32, x: f64) -> bool {
    x > SERIES_MAX_X && (n as f64) * (n as f64) <= x
}

/// Modified Bessel function of the first kind `I_n(x)`.
pub fn bessel_i(n: u32, x: f64) -> Result<f64> {
    check_overflow(x)?;
    let ax = x.abs();
    let v = if ax == 0.0 {
        if n == 0 {
            1.0
        } else {
            0.0
        }
    } else if use_asymptotic(n, ax) {
        bessel_i_asym_scaled(n, ax) * ax.exp()
    } else {
        bessel_i_series(n, ax)
    };
    Ok(if x < 0.0 && n % 2 == 1 { -v } else { v })
}

/// `I_n(x) n! (2/x)^n`, which tends to 1 as `x -> 0`.
pub fn bessel_i_tilde(n: u32, x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut t = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        t *= q / (k as f64 * (n as f64 + k as f64));
        sum += t;
        if t < TOL * sum {
            break;
        }
    }
    sum
}

/// `K_0(x)` and `K_1(x)` for `x > 0`.
pub fn bessel_k01(x: f64) -> (f64, f64) {
    if x <= 2.0 {
        let q = 0.25 * x * x;
        let lg = (0.5 * x).ln();
        let i0 = bessel_i_series(0, x);
        let i1 = bessel_i_series(1, x);
        // K0 = -(ln(x/2) + gamma) I0 + sum q^k/(k!)^2 H_k
        let mut t = 1.0;
        let mut h = 0.0;
        let mut s0 = 0.0;
        // K1 = 1/x + ln(x/2) I1 - (x/4) sum (psi(k+1)+psi(k+2)) q^k/(k!(k+1)!)
        let mut u = 1.0;
        let mut s1 = -2.0 * EULER_GAMMA + 1.0;
        for k in 1..200 {
            let kf = k as f64;
            t *= q / (kf * kf);
            h += 1.0 / kf;
            s0 += t * h;
            u *= q / (kf * (kf + 1.0));
            let psi_sum = -2.0 * EULER_GAMMA + 2.0 * h + 1.0 / (kf + 1.0);
            s1 += u * psi_sum;
            if t < TOL * s0.abs() && u < TOL * s1.abs() {
                break;
            }
        }
        let k0 = -(lg + EULER_GAMMA) * i0 + s0;
        let k1 = 1.0 / x + lg * i1 - 0.25 * x * s1;
        (k0, k1)
    } else {
        steed_k01(x)
    }
}

/// Steed's continued fraction (CF2) for `K_0`, `K_1`, valid for `x >= 2`.
fn steed_k01(x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut h = d;
    let mut delh = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..10_000 {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh *= b * d - 1.0;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < 1e-17 {
            break;
        }
    }
    h *= a1;
    let k0 = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp() / s;
    let k1 = k0 * (x + 0.5 - h) / x;
    (k0, k1)
}

/// Modified Bessel function of the second kind `K_n(x)`, `x > 0`.
pub fn bessel_k(n: u32, x: f64) -> Result<f64> {
    check_k_arg(x)?;
    let (mut km, mut k) = bessel_k01(x);
    if n == 0 {
        return Ok(km);
    }
    for j in 1..n {
        let kp = km + 2.0 * j as f64 / x * k;
        km = k;
        k = kp;
    }
    Ok(k)
}

/// Scaled `K_n`: entry `n` holds `K_n(x) x^n / (2^{n-1} (n-1)!)` for `n >= 1`
/// and `K_0(x)` at index 0. Length `n_max + 2`.
pub fn bessel_k_tilde_seq(n_max: usize, x: f64) -> Vec<f64> {
    let (k0, k1) = bessel_k01(x);
    let mut out = Vec::with_capacity(n_max + 2);
    out.push(k0);
    out.push(k1 * x);
    if n_max + 2 > 2 {
        // K2 = K0 + (2/x) K1, scaled by x^2/2
        out.push((k0 + 2.0 / x * k1) * x * x / 2.0);
    }
    let x2 = x * x;
    for n in 2..=n_max {
        let nf = n as f64;
        let next = out[n] + x2 / (4.0 * nf * (nf - 1.0)) * out[n - 1];
        out.push(next);
    }
    out.truncate(n_max + 2);
    out
}

/// Modified spherical Bessel function `i_n(x) = sqrt(pi/2x) I_{n+1/2}(x)`.
pub fn sph_i(n: u32, x: f64) -> Result<f64> {
    check_overflow(x)?;
    let ax = x.abs();
    let mut pre = 1.0;
    for j in 0..n {
        pre *= ax / (2 * j + 3) as f64;
    }
    let v = pre * sph_i_tilde(n, ax);
    Ok(if x < 0.0 && n % 2 == 1 { -v } else { v })
}

/// `i_n(x) (2n+1)!! / x^n`, which tends to 1 as `x -> 0`.
pub fn sph_i_tilde(n: u32, x: f64) -> f64 {
    let q = 0.5 * x * x;
    let mut t = 1.0;
    let mut sum = 1.0;
    for k in 1..MAX_TERMS {
        let kf = k as f64;
        t *= q / (kf * (2.0 * n as f64 + 2.0 * kf + 1.0));
        sum += t;
        if t < TOL * sum {
            break;
        }
    }
    sum
}

/// Modified spherical Bessel function `k_n(x)` normalised so that
/// `k_0(x) = e^{-x}/x`.
pub fn sph_k(n: u32, x: f64) -> Result<f64> {
    check_k_arg(x)?;
    let nf = n as f64;
    let mut c = 1.0;
    let mut sum = 1.0;
    for m in 1..=n {
        let mf = m as f64;
        c *= (nf + mf) * (nf - mf + 1.0) / (mf * 2.0 * x);
        sum += c;
    }
    Ok((-x).exp() / x * sum)
}

/// `k_n(x) x^{n+1} / (2n-1)!!`, which tends to 1 as `x -> 0`.
pub fn sph_k_tilde(n: u32, x: f64) -> f64 {
    let nf = n as f64;
    let mut t = 1.0;
    let mut sum = 1.0;
    for m in (1..=n).rev() {
        let mf = m as f64;
        t *= 2.0 * x * mf / ((nf + mf) * (nf - mf + 1.0));
        sum += t;
    }
    (-x).exp() * sum
}

/// Legendre polynomial `P_n(x)` by three-term recurrence.
pub fn legendre_p(n: u32, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut pm = 1.0;
    let mut p = x;
    for k in 1..n {
        let kf = k as f64;
        let pn = ((2.0 * kf + 1.0) * x * p - kf * pm) / (kf + 1.0);
        pm = p;
        p = pn;
    }
    p
}

/// `F(x) = x I1(x) / I0(x)`, the interior-flux factor of a semipermeable disk.
#[allow(non_snake_case)]
pub fn interface_F(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if use_asymptotic(1, x) {
        x * bessel_i_asym_scaled(1, x) / bessel_i_asym_scaled(0, x)
    } else {
        x * bessel_i_series(1, x) / bessel_i_series(0, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values from 40-digit arithmetic.
    const I_REF: &[(u32, f64, f64)] = &[
        (0, 1.0, 1.2660658777520083),
        (1, 1.0, 0.56515910399248503),
        (0, 5.0, 27.239871823604447),
        (3, 7.5, 142.06144236359168),
        (0, 60.0, 5.8940770556098012e24),
        (2, 100.0, 1.0523843193243106e42),
        (10, 2.0, 3.0169638793506844e-7),
    ];

    const K_REF: &[(u32, f64, f64)] = &[
        (0, 1.0, 0.42102443824070833),
        (1, 1.0, 0.60190723019723457),
        (0, 2.0, 0.11389387274953344),
        (1, 2.0, 0.13986588181652243),
        (0, 0.01, 4.7212447301610949),
        (1, 5.0, 0.0040446134454521642),
        (4, 3.0, 0.30585120998610917),
        (0, 30.0, 2.1324774964630564e-14),
    ];

    #[test]
    fn bessel_i_reference_values() {
        for &(n, x, v) in I_REF {
            let got = bessel_i(n, x).unwrap();
            assert!(rel(got, v) < 1e-12, "I_{n}({x}) = {got} vs {v}");
        }
    }

    #[test]
    fn bessel_k_reference_values() {
        for &(n, x, v) in K_REF {
            let got = bessel_k(n, x).unwrap();
            assert!(rel(got, v) < 1e-12, "K_{n}({x}) = {got} vs {v}");
        }
    }

    #[test]
    fn crossover_is_continuous() {
        for n in [0u32, 1, 2, 5, 7] {
            let x = SERIES_MAX_X.max((n * n) as f64) + 1e-9;
            let series = bessel_i_series(n, x);
            let asym = bessel_i_asym_scaled(n, x) * x.exp();
            assert!(rel(asym, series) < 1e-12, "n={n}: {asym} vs {series}");
        }
        let (a0, a1) = bessel_k01(2.0);
        let (b0, b1) = steed_k01(2.0);
        assert!(rel(a0, b0) < 1e-12 && rel(a1, b1) < 1e-12);
    }

    #[test]
    fn spherical_examples() {
        let i0 = eval_special(SpecialKind::SphericalI(0), 1.0).unwrap();
        assert!(rel(i0, 1f64.sinh()) < 1e-14);
        assert!((i0 - 1.1752012).abs() < 1e-7);
        let k0 = eval_special(SpecialKind::SphericalK(0), 1.0).unwrap();
        assert!(rel(k0, (-1f64).exp()) < 1e-14);
        assert!((k0 - 0.3678794).abs() < 1e-7);
        let p1 = eval_special(SpecialKind::LegendreP(1), 0.5).unwrap();
        assert_eq!(p1, 0.5);
    }

    #[test]
    fn spherical_closed_forms() {
        for &x in &[0.1, 0.7, 3.0, 12.0, 40.0] {
            let i1 = (x * f64::cosh(x) - f64::sinh(x)) / (x * x);
            assert!(rel(sph_i(1, x).unwrap(), i1) < 1e-12, "i1({x})");
            let k1 = (-x as f64).exp() / x * (1.0 + 1.0 / x);
            assert!(rel(sph_k(1, x).unwrap(), k1) < 1e-14);
            // i_n relates to I_{n+1/2}; check n = 2 against the recurrence.
            let i2 = sph_i(0, x).unwrap() - 3.0 / x * sph_i(1, x).unwrap();
            if x > 1.0 {
                assert!(rel(sph_i(2, x).unwrap(), i2) < 1e-10, "i2({x})");
            }
        }
    }

    #[test]
    fn scaled_forms_agree() {
        for n in 0..6u32 {
            for &x in &[0.3, 1.5, 6.0] {
                let mut df = 1.0;
                let mut dfm = 1.0;
                for j in 0..n {
                    df *= (2 * j + 3) as f64;
                    if j > 0 {
                        dfm *= (2 * j + 1) as f64;
                    }
                }
                let it = sph_i(n, x).unwrap() * df / x.powi(n as i32);
                assert!(rel(it, sph_i_tilde(n, x)) < 1e-13);
                let kt = sph_k(n, x).unwrap() * x.powi(n as i32 + 1) / dfm;
                assert!(rel(kt, sph_k_tilde(n, x)) < 1e-13, "n={n} x={x}");
                let mut fact = 1.0;
                for j in 1..=n {
                    fact *= j as f64;
                }
                let bt = bessel_i(n, x).unwrap() * fact * (2.0 / x).powi(n as i32);
                assert!(rel(bt, bessel_i_tilde(n, x)) < 1e-13);
            }
        }
        let seq = bessel_k_tilde_seq(8, 0.9);
        let mut fact = 1.0;
        for n in 1..=8u32 {
            if n > 1 {
                fact *= (n - 1) as f64;
            }
            let direct =
                bessel_k(n, 0.9).unwrap() * 0.9f64.powi(n as i32) / (2f64.powi(n as i32 - 1) * fact);
            assert!(rel(seq[n as usize], direct) < 1e-13, "n={n}");
        }
    }

    #[test]
    fn legendre_values() {
        assert_eq!(legendre_p(0, 0.3), 1.0);
        assert!((legendre_p(2, 0.3) - 0.5 * (3.0 * 0.09 - 1.0)).abs() < 1e-15);
        assert!((legendre_p(3, -0.4) - 0.5 * (5.0 * -0.064 - 3.0 * -0.4)).abs() < 1e-15);
        for n in 0..50 {
            assert!((legendre_p(n, 1.0) - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn interface_f_values() {
        assert_eq!(interface_F(0.0), 0.0);
        let x = 1e-4;
        assert!(rel(interface_F(x), x * x / 2.0) < 1e-8);
        // 50-term power series with all-positive terms, truncation far below 1e-20.
        let (mut i0, mut i1, mut t0, mut t1) = (0.0, 0.0, 1.0, 1.0);
        for k in 0..50 {
            let kf = k as f64;
            if k > 0 {
                t0 *= 1.0 / (kf * kf);
                t1 *= 1.0 / (kf * (kf + 1.0));
            }
            i0 += t0;
            i1 += t1;
        }
        assert!(rel(interface_F(2.0), 2.0 * i1 / i0) < 1e-14);
        assert!(interface_F(800.0).is_finite());
        assert!(rel(interface_F(60.0), 60.0 * bessel_i(1, 60.0).unwrap() / bessel_i(0, 60.0).unwrap()) < 1e-13);
    }

    #[test]
    fn errors() {
        assert!(matches!(bessel_k(0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(sph_k(1, -1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i(0, 800.0), Err(Error::Range { .. })));
        assert!(matches!(sph_i(0, 701.0), Err(Error::Range { threshold, .. }) if threshold == OVERFLOW_X));
    }
}
