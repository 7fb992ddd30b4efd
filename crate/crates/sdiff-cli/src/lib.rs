//! The `sdiff` command line: every solver and oracle behind one binary with
//! file-based input and output.
//!
//! Exit codes: 0 on success, 1 for usage errors, 2 for invalid input and
//! 3 for numerical failures.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use sdiff::geometry::ProblemSpec;

mod commands;
mod output;
pub mod params;

use params::Sweep;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "sdiff", version, about = "Diffusion with small interior compartments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Problem spec (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub spec: Option<PathBuf>,
    /// Subcommand parameters (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub params: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    pub out: PathBuf,
    /// Override the compartment radius scale.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    /// Run once per value: `key=a:b:n`.
    #[arg(long, global = true, value_name = "KEY=A:B:N")]
    pub sweep: Option<Sweep>,
    /// Worker threads for sweep points.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Also write plot_data.csv in long format (series, x, y, value).
    #[arg(long, global = true)]
    pub emit_plot_data: bool,
    /// Lattice points per side for sampled fields.
    #[arg(long, global = true, default_value_t = 41)]
    pub grid: usize,
    /// Mesh width for finite-difference oracles.
    #[arg(long, global = true)]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Green's function samples and the interaction matrix.
    Greens,
    /// Steady state in 2D.
    Steady2d,
    /// Steady state in 3D.
    Steady3d,
    /// Ostwald ripening of droplets.
    Ripen,
    /// Accumulation times at given points.
    Accum,
    /// Reduced bulk-compartment ODE system.
    Qs,
    /// Phase-reduced oscillators with a diffusing environment.
    Kuramoto,
    /// Brute-force solution and its distance from the asymptotic one.
    Oracle,
    /// Asymptotic error over a sequence of epsilon values.
    Compare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Greens => "greens",
            Command::Steady2d => "steady2d",
            Command::Steady3d => "steady3d",
            Command::Ripen => "ripen",
            Command::Accum => "accum",
            Command::Qs => "qs",
            Command::Kuramoto => "kuramoto",
            Command::Oracle => "oracle",
            Command::Compare => "compare",
        }
    }

    fn needs_spec(self) -> bool {
        !matches!(self, Command::Ripen | Command::Qs | Command::Kuramoto)
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Solver(sdiff::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Input(_) => 2,
            CliError::Solver(e) => solver_exit_code(e),
        }
    }
}

fn solver_exit_code(e: &sdiff::Error) -> i32 {
    use sdiff::Error::*;
    match e {
        Validation(_) | Domain(_) | Unsupported(_) | Resolution { .. } | UseInner { .. } | Pole | Singularity
        | Degenerate(_) => 2,
        Range { .. } | Conditioning { .. } | Convergence { .. } | Accuracy { .. } | EventOrdering { .. } => 3,
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) => f.write_str(m),
            CliError::Solver(e) => write!(f, "{e}"),
        }
    }
}

impl From<sdiff::Error> for CliError {
    fn from(e: sdiff::Error) -> Self {
        CliError::Solver(e)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Everything one run of a subcommand reads.
#[derive(Debug, Clone)]
pub struct Job {
    pub command: Command,
    pub spec_path: Option<PathBuf>,
    pub spec: Option<Value>,
    pub params: Value,
    /// Directory that relative paths inside the params file refer to.
    pub base: PathBuf,
    pub out: PathBuf,
    pub grid: usize,
    pub h: Option<f64>,
    pub emit_plot_data: bool,
    /// Epsilon sequence for `compare`, when swept.
    pub epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: Command,
    pub spec_path: Option<String>,
    pub spec: Option<ProblemSpec>,
    pub params: Value,
    pub grid: usize,
    pub h: Option<f64>,
    pub outputs: Vec<String>,
    pub tool_version: String,
    pub wall_time_s: f64,
}

/// What a subcommand hands back for the manifest.
pub struct Finished {
    pub spec: Option<ProblemSpec>,
    /// Parameters after defaults were filled in.
    pub params: Value,
    pub outputs: Vec<String>,
}

fn read_json(path: &Path, what: &str) -> CliResult<Value> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("invalid {what} {}: {e}", path.display())))
}

const SPEC_KEYS: [&str; 6] = ["D", "gamma0", "I0", "epsilon", "kappa", "sep_min"];

/// Set `key` on the spec when it is a spec key, otherwise on the params.
fn apply_override(command: Command, spec: &mut Option<Value>, params: &mut Value, key: &str, value: f64) -> CliResult<()> {
    let v = Value::from(value);
    if let Some(spec) = spec.as_mut().filter(|_| SPEC_KEYS.contains(&key)) {
        let obj = spec
            .as_object_mut()
            .ok_or_else(|| CliError::Input("spec is not a JSON object".into()))?;
        if key == "kappa" {
            if let Some(Value::Array(cs)) = obj.get_mut("compartments") {
                for c in cs.iter_mut().filter_map(|c| c.as_object_mut()) {
                    c.insert("kappa".into(), v.clone());
                }
            }
        } else {
            obj.insert(key.into(), v);
        }
        return Ok(());
    }
    let obj = params
        .as_object_mut()
        .ok_or_else(|| CliError::Input("params is not a JSON object".into()))?;
    match (command, key) {
        (Command::Qs, "epsilon") => {
            let selkov = obj.entry("selkov").or_insert_with(|| Value::Object(Default::default()));
            selkov
                .as_object_mut()
                .ok_or_else(|| CliError::Input("params.selkov is not a JSON object".into()))?
                .insert("epsilon".into(), v);
        }
        (Command::Ripen, "epsilon") => {
            obj.remove("nu");
            obj.insert("epsilon".into(), v);
        }
        _ => {
            obj.insert(key.into(), v);
        }
    }
    Ok(())
}

fn execute(job: &Job) -> CliResult<()> {
    let start = Instant::now();
    std::fs::create_dir_all(&job.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", job.out.display())))?;
    let done = commands::dispatch(job)?;
    let manifest = RunManifest {
        subcommand: job.command,
        spec_path: job.spec_path.as_ref().map(|p| p.display().to_string()),
        spec: done.spec,
        params: done.params,
        grid: job.grid,
        h: job.h,
        outputs: done.outputs,
        tool_version: VERSION.to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    output::write_json(&job.out.join("manifest.json"), &manifest)
}

fn run_sweep(base: &Job, sweep: &Sweep, jobs: usize) -> CliResult<()> {
    let mut points = Vec::with_capacity(sweep.values.len());
    for (i, &v) in sweep.values.iter().enumerate() {
        let mut job = base.clone();
        apply_override(job.command, &mut job.spec, &mut job.params, &sweep.key, v)?;
        job.out = base.out.join(format!("point_{i:03}"));
        points.push(job);
    }
    let workers = jobs.clamp(1, points.len().max(1));
    let mut results: Vec<Option<CliResult<()>>> = (0..points.len()).map(|_| None).collect();
    std::thread::scope(|s| {
        let chunks: Vec<_> = points
            .chunks(points.len().div_ceil(workers))
            .zip(results.chunks_mut(points.len().div_ceil(workers)))
            .collect();
        for (jobs, slots) in chunks {
            s.spawn(move || {
                for (job, slot) in jobs.iter().zip(slots.iter_mut()) {
                    *slot = Some(execute(job));
                }
            });
        }
    });
    #[derive(Serialize)]
    struct SweepIndex<'a> {
        key: &'a str,
        values: &'a [f64],
        dirs: Vec<String>,
    }
    output::write_json(
        &base.out.join("sweep.json"),
        &SweepIndex {
            key: &sweep.key,
            values: &sweep.values,
            dirs: (0..points.len()).map(|i| format!("point_{i:03}")).collect(),
        },
    )?;
    for (i, r) in results.into_iter().enumerate() {
        if let Some(Err(e)) = r {
            return Err(match e {
                CliError::Usage(m) => CliError::Usage(format!("sweep point {i}: {m}")),
                CliError::Input(m) => CliError::Input(format!("sweep point {i}: {m}")),
                other => {
                    eprintln!("sweep point {i} ({} = {}) failed", sweep.key, sweep.values[i]);
                    other
                }
            });
        }
    }
    Ok(())
}

fn run_cli(cli: Cli) -> CliResult<()> {
    if cli.command.needs_spec() && cli.spec.is_none() {
        return Err(CliError::Usage(format!("{} needs --spec", cli.command.name())));
    }
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    if cli.grid < 2 || cli.grid > 2000 {
        return Err(CliError::Usage("--grid must be between 2 and 2000".into()));
    }
    if let Some(h) = cli.h {
        if !(h > 0.0 && h.is_finite()) {
            return Err(CliError::Usage(format!("--h must be positive, got {h}")));
        }
    }
    let spec = cli.spec.as_deref().map(|p| read_json(p, "spec")).transpose()?;
    let mut params = match &cli.params {
        Some(p) => read_json(p, "params")?,
        None => Value::Object(Default::default()),
    };
    if !params.is_object() {
        return Err(CliError::Input("params must be a JSON object".into()));
    }
    let base = cli
        .params
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut job = Job {
        command: cli.command,
        spec_path: cli.spec.clone(),
        spec,
        params: Value::Null,
        base,
        out: cli.out.clone(),
        grid: cli.grid,
        h: cli.h,
        emit_plot_data: cli.emit_plot_data,
        epsilons: None,
    };
    if let Some(eps) = cli.epsilon {
        apply_override(cli.command, &mut job.spec, &mut params, "epsilon", eps)?;
    }
    job.params = params;
    match &cli.sweep {
        Some(s) if cli.command == Command::Compare && s.key == "epsilon" => {
            job.epsilons = Some(s.values.clone());
            execute(&job)
        }
        Some(s) => {
            std::fs::create_dir_all(&job.out)
                .map_err(|e| CliError::Input(format!("cannot create {}: {e}", job.out.display())))?;
            run_sweep(&job, s, cli.jobs)
        }
        None => execute(&job),
    }
}

/// Parse `argv` (program name first), run, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run_cli(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Solver(sdiff::Error::Convergence { history, .. }) = &e {
                eprintln!("residual history:");
                for (i, r) in history.iter().enumerate() {
                    eprintln!("  {i:4} {r:.6e}");
                }
            }
            e.exit_code()
        }
    }
}
