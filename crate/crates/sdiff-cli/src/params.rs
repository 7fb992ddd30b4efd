//! Parameter files for subcommands whose inputs are not a problem spec,
//! and the `--sweep` grammar.

use serde::{Deserialize, Serialize};

use sdiff::accumulation::InitialConditionDescriptor;
use sdiff::asymptotic2d::NewtonOptions;
use sdiff::geometry::nu_from_epsilon;
use sdiff::oracle::FdOptions;
use sdiff::pdeode::{FrequencyDensity, IntegrateOptions, SelkovExample};
use sdiff::ripening::{DropletState, RipeningParams, StepControl};

/// Largest oscillator population accepted from a file.
pub const MAX_OSCILLATORS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RipenParams {
    pub dim: usize,
    #[serde(rename = "D", default = "one")]
    pub d: f64,
    /// Either `nu` or `epsilon` is needed in 2D.
    #[serde(default)]
    pub nu: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    pub phi_a: f64,
    pub phi_b: f64,
    pub ell_c: f64,
    pub radii: Vec<f64>,
    pub t_end: f64,
    #[serde(default)]
    pub control: StepControl,
}

fn one() -> f64 {
    1.0
}

impl RipenParams {
    pub fn resolve(&self) -> Result<(RipeningParams, DropletState), String> {
        let nu = match (self.nu, self.epsilon) {
            (Some(nu), _) => nu,
            (None, Some(eps)) => nu_from_epsilon(eps).map_err(|e| e.to_string())?,
            (None, None) => 0.0,
        };
        let p = RipeningParams {
            dim: self.dim,
            d: self.d,
            nu,
            phi_a: self.phi_a,
            phi_b: self.phi_b,
            ell_c: self.ell_c,
        };
        p.check().map_err(|e| e.to_string())?;
        if self.radii.is_empty() {
            return Err("no droplet radii given".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        Ok((p, DropletState::new(self.radii.clone())))
    }
}

/// Log-spaced `D0` grid for a Hopf sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default = "bisection_tol")]
    pub tol: f64,
}

fn bisection_tol() -> f64 {
    1e-4
}

impl LogGrid {
    pub fn points(&self) -> Result<Vec<f64>, String> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite() && self.n >= 2 && self.n <= 100_000) {
            return Err("hopf grid needs 0 < lo < hi and 2 <= n <= 100000".into());
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        Ok((0..self.n)
            .map(|i| (a + (b - a) * i as f64 / (self.n - 1) as f64).exp())
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QsParams {
    pub d0: f64,
    #[serde(default = "qs_t_end")]
    pub t_end: f64,
    /// Starting guess for the mean bulk concentration of the fixed point.
    #[serde(default = "half")]
    pub ubar0: f64,
    /// Relative kick applied to the fixed point before integrating.
    #[serde(default = "kick")]
    pub perturbation: f64,
    #[serde(default)]
    pub volumes: Option<Vec<f64>>,
    /// Used when no spec is given.
    #[serde(default)]
    pub selkov: SelkovExample,
    #[serde(default)]
    pub integrator: IntegrateOptions,
    #[serde(default)]
    pub hopf_grid: Option<LogGrid>,
}

fn qs_t_end() -> f64 {
    40.0
}

fn half() -> f64 {
    0.5
}

fn kick() -> f64 {
    0.05
}

impl QsParams {
    pub fn check(&self) -> Result<(), String> {
        if !(self.d0 > 0.0 && self.d0.is_finite()) {
            return Err(format!("d0 must be positive, got {}", self.d0));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if !(self.integrator.dt_out > 0.0) || self.t_end / self.integrator.dt_out > 1e7 {
            return Err("dt_out must be positive and give at most 1e7 samples".into());
        }
        if let Some(g) = &self.hopf_grid {
            g.points()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPhases {
    /// Evenly spaced around the circle.
    Uniform,
    /// Golden-angle sequence: spread out but not regular.
    Scattered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KuramotoFile {
    /// Population size; taken from the spec when one is given.
    #[serde(default)]
    pub n: Option<usize>,
    pub density: FrequencyDensity,
    pub kappa_hat: f64,
    #[serde(default = "one")]
    pub alpha: f64,
    pub gamma0: f64,
    #[serde(default)]
    pub omega0: f64,
    pub t_end: f64,
    #[serde(default = "kuramoto_initial")]
    pub initial: InitialPhases,
    #[serde(default = "z0")]
    pub z0: [f64; 2],
    /// Bulk diffusivity for the spatial coupling matrix (spec runs only).
    #[serde(default)]
    pub d0: Option<f64>,
    #[serde(default = "kuramoto_integrator")]
    pub integrator: IntegrateOptions,
}

fn kuramoto_initial() -> InitialPhases {
    InitialPhases::Scattered
}

fn z0() -> [f64; 2] {
    [0.1, 0.0]
}

fn kuramoto_integrator() -> IntegrateOptions {
    IntegrateOptions {
        rtol: 1e-8,
        atol: 1e-10,
        dt_out: 0.1,
        ..Default::default()
    }
}

impl KuramotoFile {
    pub fn check(&self, n: usize) -> Result<(), String> {
        if n == 0 || n > MAX_OSCILLATORS {
            return Err(format!("need 1 <= N <= {MAX_OSCILLATORS}, got {n}"));
        }
        let finite = [self.kappa_hat, self.alpha, self.gamma0, self.omega0, self.z0[0], self.z0[1]];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err("parameters must be finite".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if !(self.integrator.dt_out > 0.0) || self.t_end / self.integrator.dt_out > 1e7 {
            return Err("dt_out must be positive and give at most 1e7 samples".into());
        }
        match self.density {
            FrequencyDensity::Identical => {}
            FrequencyDensity::Uniform { half_width: w } | FrequencyDensity::Lorentzian { width: w } => {
                if !(w >= 0.0 && w.is_finite()) {
                    return Err(format!("frequency width must be finite and non-negative, got {w}"));
                }
            }
        }
        Ok(())
    }

    pub fn phases(&self, n: usize) -> Vec<f64> {
        let tau = 2.0 * std::f64::consts::PI;
        match self.initial {
            InitialPhases::Uniform => (0..n).map(|j| tau * j as f64 / n as f64).collect(),
            InitialPhases::Scattered => {
                let golden = 0.5 * (5f64.sqrt() - 1.0);
                (0..n).map(|j| tau * (j as f64 * golden).fract()).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccumParams {
    pub initial: InitialConditionDescriptor,
    pub points: Vec<Vec<f64>>,
}

/// Optional settings for `steady2d` and `steady3d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyParams {
    pub newton_max_iter: usize,
    pub newton_tol: f64,
    /// Roots closer than this are reported once.
    pub dedupe: f64,
    /// Extra Newton starting points for model III, `seeds[k][j][a]`.
    pub seeds: Vec<Vec<Vec<f64>>>,
}

impl Default for SteadyParams {
    fn default() -> Self {
        let n = NewtonOptions::default();
        SteadyParams {
            newton_max_iter: n.max_iter,
            newton_tol: n.tol,
            dedupe: n.dedupe,
            seeds: Vec::new(),
        }
    }
}

impl SteadyParams {
    pub fn newton(&self) -> Result<NewtonOptions, String> {
        if self.newton_max_iter > 100_000 || !(self.newton_tol > 0.0) || !(self.dedupe >= 0.0) {
            return Err("need newton_max_iter <= 100000, newton_tol > 0 and dedupe >= 0".into());
        }
        Ok(NewtonOptions {
            max_iter: self.newton_max_iter,
            tol: self.newton_tol,
            dedupe: self.dedupe,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GreensParams {
    /// Source point; defaults to the first compartment centre.
    pub source: Option<Vec<f64>>,
}

/// Optional settings for `oracle` and `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleParams {
    /// Comparison points; defaults to the sampling lattice.
    pub probes: Option<Vec<Vec<f64>>>,
    /// Default mesh width is the smallest compartment radius over this.
    pub cells_per_radius: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for OracleParams {
    fn default() -> Self {
        let fd = FdOptions::default();
        OracleParams {
            probes: None,
            cells_per_radius: 5.0,
            tol: fd.tol,
            max_iter: fd.max_iter,
        }
    }
}

impl OracleParams {
    pub fn fd(&self) -> Result<FdOptions, String> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.cells_per_radius >= 1.0 && self.cells_per_radius <= 1e3) {
            return Err("need tol > 0, max_iter > 0 and 1 <= cells_per_radius <= 1000".into());
        }
        Ok(FdOptions {
            tol: self.tol,
            max_iter: self.max_iter,
        })
    }
}

/// `--sweep key=a:b:n`: `n` evenly spaced values from `a` to `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<f64>,
}

pub const MAX_SWEEP_POINTS: usize = 10_000;

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (key, range) = s
            .split_once('=')
            .ok_or_else(|| format!("sweep '{s}' is not of the form key=a:b:n"))?;
        let key = key.trim();
        if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(format!("bad sweep key '{key}'"));
        }
        let parts: Vec<&str> = range.split(':').collect();
        if parts.len() != 3 {
            return Err(format!("sweep range '{range}' is not of the form a:b:n"));
        }
        let a: f64 = parts[0].trim().parse().map_err(|_| format!("bad sweep start '{}'", parts[0]))?;
        let b: f64 = parts[1].trim().parse().map_err(|_| format!("bad sweep end '{}'", parts[1]))?;
        let n: usize = parts[2].trim().parse().map_err(|_| format!("bad sweep count '{}'", parts[2]))?;
        if !(a.is_finite() && b.is_finite()) {
            return Err("sweep bounds must be finite".into());
        }
        if n == 0 || n > MAX_SWEEP_POINTS {
            return Err(format!("sweep count must be between 1 and {MAX_SWEEP_POINTS}"));
        }
        let values = if n == 1 {
            vec![a]
        } else {
            (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
        };
        Ok(Sweep {
            key: key.to_string(),
            values,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_grammar() {
        let s: Sweep = "epsilon=0.02:0.08:4".parse().unwrap();
        assert_eq!(s.key, "epsilon");
        assert_eq!(s.values.len(), 4);
        assert!((s.values[1] - 0.04).abs() < 1e-15);
        assert_eq!("d0=3:9:1".parse::<Sweep>().unwrap().values, vec![3.0]);
        for bad in ["epsilon", "=1:2:3", "e=1:2", "e=1:x:3", "e=1:2:0", "e=inf:2:2", "a b=1:2:2"] {
            assert!(bad.parse::<Sweep>().is_err(), "{bad}");
        }
    }

    #[test]
    fn ripen_params_need_nu_in_2d() {
        let text = r#"{"dim": 2, "phi_a": 0.1, "phi_b": 0.9, "ell_c": 0.5, "radii": [1.0, 0.8], "t_end": 10}"#;
        let p: RipenParams = serde_json::from_str(text).unwrap();
        assert!(p.resolve().is_err());
        let p = RipenParams { epsilon: Some(0.05), ..p };
        let (rp, _) = p.resolve().unwrap();
        assert!((rp.nu - nu_from_epsilon(0.05).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn defaults_fill_in() {
        let q: QsParams = serde_json::from_str(r#"{"d0": 1.0}"#).unwrap();
        assert_eq!(q.selkov, SelkovExample::default());
        assert_eq!(q.t_end, 40.0);
        q.check().unwrap();
        let k: KuramotoFile = serde_json::from_str(
            r#"{"n": 10, "density": {"kind": "uniform", "half_width": 0.5}, "kappa_hat": 1, "gamma0": 0.1, "t_end": 5}"#,
        )
        .unwrap();
        k.check(10).unwrap();
        let ph = k.phases(10);
        assert!(ph.iter().all(|t| (0.0..2.0 * std::f64::consts::PI).contains(t)));
        assert!(serde_json::from_str::<QsParams>(r#"{"d0": 1.0, "bogus": 2}"#).is_err());
    }
}
