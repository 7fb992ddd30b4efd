//! Ostwald ripening of droplets and the self-consistent radii of absorbing
//! protein clusters.
//!
//! Droplets exchange material through the dilute phase; under the
//! quasi-static approximation the radii obey a closed ODE that conserves
//! total droplet area (2D) or volume (3D).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::asymptotic2d::solve_model1_2d;
use crate::error::{Error, Result};
use crate::geometry::{validate, BoundaryModel, ValidatedSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RipeningParams {
    /// Spatial dimension, 2 or 3.
    pub dim: usize,
    #[serde(rename = "D")]
    pub d: f64,
    /// `-1/ln(eps)`; used only in 2D.
    #[serde(default)]
    pub nu: f64,
    pub phi_a: f64,
    pub phi_b: f64,
    pub ell_c: f64,
}

impl RipeningParams {
    pub fn check(&self) -> Result<()> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::Domain(format!("dim must be 2 or 3, got {}", self.dim)));
        }
        if !(self.d > 0.0) {
            return Err(Error::Domain("D must be positive".into()));
        }
        if !(0.0 < self.phi_a && self.phi_a < self.phi_b) {
            return Err(Error::Domain("need 0 < phi_a < phi_b".into()));
        }
        if !(self.ell_c > 0.0) {
            return Err(Error::Domain("ell_c must be positive".into()));
        }
        if self.dim == 2 && !(self.nu > 0.0) {
            return Err(Error::Domain("2D ripening needs nu > 0".into()));
        }
        Ok(())
    }
}

fn check_radii(ell: &[f64]) -> Result<()> {
    if let Some((j, v)) = ell.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::Domain(format!(
            "droplet {} has non-positive radius {v}",
            j + 1
        )));
    }
    Ok(())
}

/// `dl_j/dtau = (D nu phi_a ell_c / (phi_b l_j)) (1/l_harm - 1/l_j)`.
pub fn rhs_2d(ell: &[f64], p: &RipeningParams) -> Result<Vec<f64>> {
    check_radii(ell)?;
    let inv_mean = ell.iter().map(|l| 1.0 / l).sum::<f64>() / ell.len() as f64;
    let k = p.d * p.nu * p.phi_a * p.ell_c / p.phi_b;
    Ok(ell.iter().map(|l| k / l * (inv_mean - 1.0 / l)).collect())
}

/// `dl_j/dt = (D phi_a ell_c / (phi_b l_j)) (1/l_av - 1/l_j)`.
pub fn rhs_3d(ell: &[f64], p: &RipeningParams) -> Result<Vec<f64>> {
    check_radii(ell)?;
    let mean = ell.iter().sum::<f64>() / ell.len() as f64;
    let k = p.d * p.phi_a * p.ell_c / p.phi_b;
    Ok(ell.iter().map(|l| k / l * (1.0 / mean - 1.0 / l)).collect())
}

pub fn rhs(ell: &[f64], p: &RipeningParams) -> Result<Vec<f64>> {
    if p.dim == 2 {
        rhs_2d(ell, p)
    } else {
        rhs_3d(ell, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropletState {
    pub ell: Vec<f64>,
    pub tau: f64,
    /// Indices of extinct droplets; their radii stay frozen at retirement.
    pub retired: Vec<usize>,
}

impl DropletState {
    pub fn new(ell: Vec<f64>) -> Self {
        DropletState {
            ell,
            tau: 0.0,
            retired: Vec::new(),
        }
    }

    pub fn active(&self) -> Vec<usize> {
        (0..self.ell.len())
            .filter(|j| !self.retired.contains(j))
            .collect()
    }

    /// `sum ell^dim`, counting retired droplets at their final radius.
    pub fn conserved(&self, dim: usize) -> f64 {
        self.ell.iter().map(|l| l.powi(dim as i32)).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    /// Radius below which a droplet is retired.
    pub eps_ext: f64,
    /// Width of the bracket around an extinction time.
    pub event_tol: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            rtol: 1e-12,
            atol: 1e-14,
            h0: 1e-4,
            eps_ext: 1e-4,
            event_tol: 1e-8,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub tau: f64,
    /// Radii with retired droplets reported as 0.
    pub ell: Vec<f64>,
    pub active: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_state: DropletState,
    /// Times at which droplets were retired, in order.
    pub extinctions: Vec<(usize, f64)>,
    /// Largest relative change of the conserved quantity.
    pub max_drift: f64,
}

impl Trajectory {
    pub fn to_csv(&self) -> String {
        let n = self.final_state.ell.len();
        let mut out = String::from("tau");
        for j in 0..n {
            out.push_str(&format!(",ell_{}", j + 1));
        }
        out.push_str(",active_count\n");
        for p in &self.points {
            out.push_str(&format!("{:.17e}", p.tau));
            for l in &p.ell {
                out.push_str(&format!(",{:.17e}", l));
            }
            out.push_str(&format!(",{}\n", p.active));
        }
        out
    }
}

// Dormand-Prince 5(4) tableau
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One Dormand-Prince step. Returns the new state and the scaled error, or
/// `None` if a stage left the domain of the right-hand side.
pub(crate) fn dopri_step<F>(f: &mut F, y: &[f64], h: f64, rtol: f64, atol: f64) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
    for s in 0..7 {
        let ys: Vec<f64> = (0..n)
            .map(|i| y[i] + h * (0..s).map(|r| A[s][r] * k[r][i]).sum::<f64>())
            .collect();
        let ks = f(&ys).ok()?;
        if ks.iter().any(|v| !v.is_finite()) {
            return None;
        }
        k.push(ks);
    }
    let y5: Vec<f64> = (0..n)
        .map(|i| y[i] + h * (0..6).map(|r| A[6][r] * k[r][i]).sum::<f64>())
        .collect();
    let mut err: f64 = 0.0;
    for i in 0..n {
        let e = h * (0..7).map(|r| E[r] * k[r][i]).sum::<f64>();
        let sc = atol + rtol * y[i].abs().max(y5[i].abs());
        err = err.max((e / sc).abs());
    }
    Some((y5, err))
}

/// Integrate the mean-field coarsening law until `t_end` or until a single
/// droplet is left.
pub fn evolve(state: &DropletState, p: &RipeningParams, t_end: f64, ctrl: StepControl) -> Result<Trajectory> {
    p.check()?;
    let p = *p;
    evolve_with(state, p.dim, t_end, ctrl, move |ell| rhs(ell, &p))
}

/// As [`evolve`], with a caller-supplied rate law over the active radii.
/// This is the hook for rates that re-solve the full steady state each step.
pub fn evolve_with<F>(
    state: &DropletState,
    dim: usize,
    t_end: f64,
    ctrl: StepControl,
    mut rate: F,
) -> Result<Trajectory>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut st = state.clone();
    for j in st.active() {
        if !(st.ell[j] > ctrl.eps_ext) {
            return Err(Error::Domain(format!(
                "droplet {} starts at radius {} below the extinction threshold",
                j + 1,
                st.ell[j]
            )));
        }
    }
    let q0 = st.conserved(dim);
    let mut traj = Trajectory {
        points: vec![point(&st)],
        final_state: st.clone(),
        extinctions: Vec::new(),
        max_drift: 0.0,
    };
    let mut h = ctrl.h0;
    let mut steps = 0;
    while st.tau < t_end {
        let active = st.active();
        if active.len() <= 1 {
            st.tau = t_end;
            traj.points.push(point(&st));
            break;
        }
        steps += 1;
        if steps > ctrl.max_steps {
            return Err(Error::Convergence {
                iterations: steps,
                last_residual: h,
                history: Vec::new(),
            });
        }
        let y: Vec<f64> = active.iter().map(|&j| st.ell[j]).collect();
        h = h.min(t_end - st.tau);
        let Some((y1, err)) = dopri_step(&mut rate, &y, h, ctrl.rtol, ctrl.atol) else {
            h *= 0.25;
            check_underflow(&st, h)?;
            continue;
        };
        if err > 1.0 {
            h *= (0.9 * err.powf(-0.2)).max(0.1);
            check_underflow(&st, h)?;
            continue;
        }
        let crossed = y1.iter().any(|v| *v < ctrl.eps_ext);
        if crossed {
            // bracket the first extinction time
            let (mut lo, mut hi) = (0.0, h);
            let mut y_lo = y.clone();
            while hi - lo > ctrl.event_tol {
                let mid = 0.5 * (lo + hi);
                match dopri_step(&mut rate, &y_lo, mid - lo, ctrl.rtol, ctrl.atol) {
                    Some((ym, _)) if ym.iter().all(|v| *v >= ctrl.eps_ext) => {
                        lo = mid;
                        y_lo = ym;
                    }
                    _ => hi = mid,
                }
                if hi - lo <= f64::EPSILON * st.tau.abs().max(1.0) * 4.0 {
                    break;
                }
            }
            let (y_hi, _) = dopri_step(&mut rate, &y_lo, hi - lo, ctrl.rtol, ctrl.atol).ok_or_else(|| {
                Error::EventOrdering {
                    tau: st.tau + hi,
                    detail: format!("rate undefined across extinction bracket; radii {:?}", y_lo),
                }
            })?;
            let dying: Vec<usize> = (0..active.len())
                .filter(|&i| y_hi[i] < ctrl.eps_ext)
                .collect();
            let survivors = active.len() - dying.len();
            if survivors == 0 {
                return Err(Error::EventOrdering {
                    tau: st.tau + hi,
                    detail: format!("all droplets vanish together; radii {:?}", y_lo),
                });
            }
            // retire at the bracket end, keeping the pre-crossing radius
            for (i, &j) in active.iter().enumerate() {
                st.ell[j] = if dying.contains(&i) { y_lo[i] } else { y_hi[i] };
            }
            st.tau += hi;
            for &i in &dying {
                st.retired.push(active[i]);
                traj.extinctions.push((active[i], st.tau));
            }
            h = ctrl.h0.min(h);
        } else {
            for (i, &j) in active.iter().enumerate() {
                st.ell[j] = y1[i];
            }
            st.tau += h;
            h *= (0.9 * err.max(1e-10).powf(-0.2)).min(5.0);
        }
        let drift = ((st.conserved(dim) - q0) / q0).abs();
        traj.max_drift = traj.max_drift.max(drift);
        traj.points.push(point(&st));
    }
    traj.final_state = st;
    Ok(traj)
}

fn check_underflow(st: &DropletState, h: f64) -> Result<()> {
    if h < 1e-15 * st.tau.abs().max(1e-300) || h < 1e-300 {
        return Err(Error::EventOrdering {
            tau: st.tau,
            detail: format!("step size underflow; radii {:?}", st.ell),
        });
    }
    Ok(())
}

fn point(st: &DropletState) -> TrajectoryPoint {
    TrajectoryPoint {
        tau: st.tau,
        ell: (0..st.ell.len())
            .map(|j| if st.retired.contains(&j) { 0.0 } else { st.ell[j] })
            .collect(),
        active: st.active().len(),
    }
}

/// Result of the cluster-radius iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRadii {
    pub ell: Vec<f64>,
    /// Relative flux-balance residual per cluster.
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Flux-balance residual `(2 pi D nu A_j - gamma0 u0 pi eps^2 ell_j^2) / (2 pi D nu A_j)`
/// for the absorbing clusters of `spec`.
pub fn cluster_balance(spec: &ValidatedSpec, u0: f64) -> Result<Vec<f64>> {
    let co = solve_model1_2d(spec)?;
    let eps = spec.epsilon;
    Ok(spec
        .compartments
        .iter()
        .zip(&co.a)
        .map(|(c, a)| {
            let absorbed = 2.0 * PI * spec.d * spec.nu * a;
            let lost = spec.gamma0 * u0 * PI * eps * eps * c.ell * c.ell;
            (absorbed - lost) / absorbed.abs().max(1e-300)
        })
        .collect())
}

/// Radii at which each absorbing cluster takes in, by diffusion, exactly
/// what it loses by internal degradation at concentration `u0`.
pub fn cluster_fixed_point(spec: &ValidatedSpec, u0: f64) -> Result<ClusterRadii> {
    if spec.geometry.dim() != 2 {
        return Err(Error::Unsupported("cluster radii are computed in 2D".into()));
    }
    if !(spec.gamma0 > 0.0 && spec.i0 > 0.0 && u0 > 0.0) {
        return Err(Error::Domain("need gamma0 > 0, I0 > 0 and u0 > 0".into()));
    }
    for (j, c) in spec.compartments.iter().enumerate() {
        if c.kappa.is_some() || c.model != (BoundaryModel::ModelI { c0: 0.0 }) {
            return Err(Error::Domain(format!(
                "cluster {} must be perfectly absorbing with c0 = 0",
                j + 1
            )));
        }
    }
    let eps = spec.epsilon;
    let mut cur = spec.clone();
    let omega = 0.8;
    let mut history = Vec::new();
    for it in 0..500 {
        let co = solve_model1_2d(&cur)?;
        let mut change: f64 = 0.0;
        for (c, a) in cur.spec.compartments.iter_mut().zip(&co.a) {
            if !(*a > 0.0) {
                return Err(Error::Degenerate("cluster absorbs no flux".into()));
            }
            let target = (2.0 * spec.d * spec.nu * a / (spec.gamma0 * u0 * eps * eps)).sqrt();
            let next = (1.0 - omega) * c.ell + omega * target;
            change = change.max(((next - c.ell) / c.ell).abs());
            c.ell = next;
        }
        history.push(change);
        if !change.is_finite() || change > 1e6 {
            break;
        }
        if change < 1e-13 {
            let residual = cluster_balance(&cur, u0)?;
            if residual.iter().all(|r| r.abs() <= 1e-8) {
                validate(&cur.spec)?;
                return Ok(ClusterRadii {
                    ell: cur.compartments.iter().map(|c| c.ell).collect(),
                    residual,
                    iterations: it + 1,
                    history,
                });
            }
        }
    }
    Err(Error::Convergence {
        iterations: history.len(),
        last_residual: history.last().copied().unwrap_or(f64::NAN),
        history,
    })
}
