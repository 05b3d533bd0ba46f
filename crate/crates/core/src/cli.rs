//! Command-line front end.
//!
//! Every subcommand resolves a [`RunConfig`] (defaults, then `--config`,
//! then flags), writes its artifacts next to the `out` prefix and prints a
//! short summary on stdout. Exit codes: 0 ok, 2 configuration error, 3
//! numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{LoadedModel, ModelSpec, RunConfig};
use crate::continuum::{compare_with_discrete, ContinuumGrid};
use crate::dynamics::{run_coupled, CoupledConfig, RunOptions, StateVector};
use crate::error::{Error, Result};
use crate::potential::{check_lyapunov_conditions, LyapunovOptions, MatrixField, PotentialProfile};
use crate::spectral::{instability_test, jacobian_at, verify_rho_lemma};
use crate::threshold::{self, ThresholdResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Tolerance on `|ρ(D) − 1|` for the coupling-matrix check.
pub const RHO_LEMMA_TOL: f64 = 1e-10;

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "scthresh", version, about = "Convergence thresholds of single and coupled scalar recursions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Threshold by the chosen method (minratio, de, potential, coupled-de, stationary-scan).
    Threshold(Flags),
    /// Coupled trajectory from a uniform start.
    Evolve(Flags),
    /// Potential profile, optionally with the Lyapunov condition check.
    Potential {
        #[command(flatten)]
        flags: Flags,
        /// Check positivity and decrease of the path-integral potential.
        #[arg(long)]
        check_lyapunov: bool,
    },
    /// Linearization at the reached fixed point, or the coupling-matrix check.
    Spectral {
        #[command(flatten)]
        flags: Flags,
        /// Check that the coupling matrix has spectral radius 1 for each `--w`.
        #[arg(long)]
        check_rho_lemma: bool,
    },
    /// Continuum fixed point compared with the discrete chain.
    Continuum(Flags),
    /// Coupled thresholds over every `--L` × `--w` pair.
    Sweep(Flags),
}

/// Overrides for [`RunConfig`] keys; every value is parsed by the config
/// layer so errors name the key.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Base `key = value` file or an artifact written by this tool.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `ldpc:l,r`, `table:F,G` or `cancel:G,sigma2`.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    /// Chain length; a list or range for `sweep`.
    #[arg(long = "L")]
    pub length: Option<String>,
    /// Coupling width; a list or range such as `1..6`.
    #[arg(long)]
    pub w: Option<String>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub boundary: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon: Option<String>,
    /// `lo..hi`, sampled at `--epsilon-steps` points.
    #[arg(long)]
    pub epsilon_range: Option<String>,
    #[arg(long)]
    pub epsilon_steps: Option<String>,
    /// Width of the final threshold bracket.
    #[arg(long, allow_hyphen_values = true)]
    pub epsilon_tol: Option<String>,
    /// Convergence tolerance of the iterations.
    #[arg(long, allow_hyphen_values = true)]
    pub tol: Option<String>,
    #[arg(long)]
    pub max_iter: Option<String>,
    /// Keep every n-th state of a trajectory (0: first and last only).
    #[arg(long)]
    pub record_every: Option<String>,
    /// Value of the uniform start state.
    #[arg(long)]
    pub start: Option<String>,
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub quad_points: Option<String>,
    #[arg(long)]
    pub path_points: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub mesh: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    /// Falls back to the ANALYZER_SEED environment variable.
    #[arg(long)]
    pub seed: Option<String>,
    /// Output prefix; `.json` and `.csv` are appended.
    #[arg(long)]
    pub out: Option<String>,
    /// Worker threads for sweeps (0: one per core).
    #[arg(long)]
    pub jobs: Option<String>,
}

impl Flags {
    /// Defaults, then the `--config` file, then the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_path(p)?,
            None => RunConfig::default(),
        };
        let pairs = [
            ("model", &self.model),
            ("method", &self.method),
            ("L", &self.length),
            ("w", &self.w),
            ("variant", &self.variant),
            ("boundary", &self.boundary),
            ("epsilon", &self.epsilon),
            ("epsilon_range", &self.epsilon_range),
            ("epsilon_steps", &self.epsilon_steps),
            ("epsilon_tol", &self.epsilon_tol),
            ("tol", &self.tol),
            ("max_iter", &self.max_iter),
            ("record_every", &self.record_every),
            ("start", &self.start),
            ("grid", &self.grid),
            ("quad_points", &self.quad_points),
            ("path_points", &self.path_points),
            ("samples", &self.samples),
            ("mesh", &self.mesh),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("out", &self.out),
            ("jobs", &self.jobs),
        ];
        for (key, value) in pairs {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.seed = Some(cfg.resolved_seed()?);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config_error() {
                EXIT_CONFIG
            } else {
                EXIT_NUMERIC
            }
        }
    }
}

fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Threshold(f) => cmd_threshold(&with_out(f.resolve()?, "threshold")),
        Command::Evolve(f) => cmd_evolve(&with_out(f.resolve()?, "evolve")),
        Command::Potential { flags, check_lyapunov } => {
            cmd_potential(&with_out(flags.resolve()?, "potential"), *check_lyapunov)
        }
        Command::Spectral { flags, check_rho_lemma } => {
            cmd_spectral(&with_out(flags.resolve()?, "spectral"), *check_rho_lemma)
        }
        Command::Continuum(f) => cmd_continuum(&with_out(f.resolve()?, "continuum")),
        Command::Sweep(f) => cmd_sweep(&with_out(f.resolve()?, "sweep")),
    }
}

fn with_out(mut cfg: RunConfig, name: &str) -> RunConfig {
    if cfg.out.as_os_str().is_empty() {
        cfg.out = PathBuf::from(name);
    }
    cfg
}

fn output_path(cfg: &RunConfig, ext: &str) -> PathBuf {
    let mut s = cfg.out.clone().into_os_string();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Config entries embedded in artifacts; the output prefix is left out so
/// an artifact does not depend on where it was written.
fn embedded_entries(cfg: &RunConfig) -> Vec<(&'static str, String)> {
    cfg.entries().into_iter().filter(|(k, _)| *k != "out").collect()
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::param("out", format!("`{}` has no file name", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::Io(e)
    })
}

/// CSV artifact: version line, `#!` config lines, then the table.
pub fn write_csv_artifact(
    cfg: &RunConfig,
    path: &Path,
    body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "# scthresh {VERSION}")?;
    for (k, v) in embedded_entries(cfg) {
        writeln!(buf, "#! {k} = {v}")?;
    }
    body(&mut buf)?;
    write_atomic(path, &buf)
}

#[derive(Serialize)]
struct JsonArtifact<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: std::collections::BTreeMap<&'static str, String>,
    result: &'a T,
}

/// JSON artifact: `{tool, version, config, result}`.
pub fn write_json_artifact<T: Serialize>(cfg: &RunConfig, path: &Path, result: &T) -> Result<()> {
    let doc = JsonArtifact {
        tool: "scthresh",
        version: VERSION,
        config: embedded_entries(cfg).into_iter().collect(),
        result,
    };
    let mut bytes = serde_json::to_vec_pretty(&doc)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn load(cfg: &RunConfig) -> Result<LoadedModel> {
    ModelSpec::parse(&cfg.model)?.load()
}

fn coupled_config(cfg: &RunConfig, length: usize, width: usize) -> Result<CoupledConfig> {
    Ok(CoupledConfig::new(length, width)?
        .with_variant(cfg.variant)
        .with_boundary(cfg.boundary))
}

fn run_options(cfg: &RunConfig) -> RunOptions {
    RunOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        record_every: cfg.record_every,
    }
}

fn warn_regime(c: &CoupledConfig) {
    if let Some(w) = c.regime_warning() {
        eprintln!("warning: {w}");
    }
}

pub fn cmd_threshold(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let model = loaded.system();
    let result: ThresholdResult = match cfg.method.as_str() {
        "minratio" => threshold::single_threshold_minratio(model)?,
        "de" => threshold::single_threshold_de_with(model, cfg.epsilon_tol, &run_options(cfg))?,
        "potential" => threshold::potential_threshold(model, cfg.grid, cfg.epsilon_tol)?,
        "coupled-de" => {
            let c = coupled_config(cfg, cfg.length(), cfg.width())?;
            warn_regime(&c);
            threshold::coupled_threshold_de_with(model, &c, cfg.epsilon_tol, &run_options(cfg))?
        }
        "stationary-scan" => match &loaded {
            LoadedModel::Cancelation(m) => threshold::cancelation_threshold(m)?,
            LoadedModel::System(_) => {
                return Err(Error::param("method", "stationary-scan needs a `cancel:` model"))
            }
        },
        other => {
            return Err(Error::Parse {
                what: "method".into(),
                reason: format!("unknown method `{other}`"),
            })
        }
    };
    write_json_artifact(cfg, &output_path(cfg, "json"), &result)?;
    println!("{}", result.summary_line());
    Ok(())
}

pub fn cmd_evolve(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let model = loaded.system();
    let eps = cfg.require_epsilon()?;
    let c = coupled_config(cfg, cfg.length(), cfg.width())?;
    warn_regime(&c);
    let x0 = StateVector::filled(c.length, cfg.start);
    let traj = run_coupled(model, &c, &x0, eps, &run_options(cfg))?;
    write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| traj.write_csv(b))?;
    let summary = traj.summary(&c);
    write_json_artifact(cfg, &output_path(cfg, "json"), &summary)?;
    println!(
        "converged_to_zero={} iterations={} final_max={:e}",
        traj.converged_to_zero,
        traj.iterations,
        traj.final_state().max_norm()
    );
    Ok(())
}

#[derive(Serialize)]
struct PotentialSummary {
    epsilon: f64,
    min_value: f64,
    argmin: f64,
}

pub fn cmd_potential(cfg: &RunConfig, check_lyapunov: bool) -> Result<()> {
    let loaded = load(cfg)?;
    let model = loaded.system();
    if check_lyapunov {
        let eps = cfg.require_epsilon()?;
        let c = coupled_config(cfg, cfg.length(), cfg.width())?;
        let per_axis = ((cfg.samples as f64).powf(1.0 / c.length as f64).floor() as usize).max(2);
        let opts = LyapunovOptions {
            random_samples: cfg.samples,
            seed: cfg.resolved_seed()?,
            path_points: cfg.path_points,
            ..Default::default()
        };
        let report = check_lyapunov_conditions(model, &c, &MatrixField::DiagonalGPrime, eps, per_axis, &opts)?;
        write_json_artifact(cfg, &output_path(cfg, "json"), &report)?;
        println!(
            "positivity={} decrease={} samples={}",
            pass_word(report.positivity_ok),
            pass_word(report.decrease_ok),
            report.samples
        );
        return Ok(());
    }
    if cfg.epsilon_range.is_some() {
        let rows: Vec<PotentialSummary> = cfg
            .epsilons()?
            .into_iter()
            .map(|eps| {
                let p = PotentialProfile::sample(model, eps, cfg.grid, cfg.quad_points)?;
                Ok(PotentialSummary { epsilon: eps, min_value: p.min_value, argmin: p.argmin })
            })
            .collect::<Result<_>>()?;
        write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| {
            writeln!(b, "epsilon,min_value,argmin")?;
            for r in &rows {
                writeln!(b, "{},{:e},{}", r.epsilon, r.min_value, r.argmin)?;
            }
            Ok(())
        })?;
        for r in &rows {
            println!("epsilon={} min_value={:e} argmin={}", r.epsilon, r.min_value, r.argmin);
        }
        return Ok(());
    }
    let eps = cfg.require_epsilon()?;
    let profile = PotentialProfile::sample(model, eps, cfg.grid, cfg.quad_points)?;
    write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| profile.write_csv(b))?;
    let summary = PotentialSummary { epsilon: eps, min_value: profile.min_value, argmin: profile.argmin };
    write_json_artifact(cfg, &output_path(cfg, "json"), &summary)?;
    println!("min_value={:e} argmin={}", profile.min_value, profile.argmin);
    Ok(())
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn cmd_spectral(cfg: &RunConfig, check_rho_lemma: bool) -> Result<()> {
    if check_rho_lemma {
        let report = verify_rho_lemma(&cfg.widths, RHO_LEMMA_TOL, cfg.boundary)?;
        write_json_artifact(cfg, &output_path(cfg, "json"), &report)?;
        for &w in &cfg.widths {
            let rows: Vec<_> = report.rows.iter().filter(|r| r.w == w).collect();
            let lens: Vec<String> = rows.iter().map(|r| r.length.to_string()).collect();
            let rhos: Vec<String> = rows.iter().map(|r| format!("{:.12}", r.rho)).collect();
            println!(
                "w={w} L={} rho={} {}",
                lens.join(","),
                rhos.join(","),
                pass_word(rows.iter().all(|r| r.pass))
            );
        }
        return Ok(());
    }
    let loaded = load(cfg)?;
    let model = loaded.system();
    let eps = cfg.require_epsilon()?;
    let c = coupled_config(cfg, cfg.length(), cfg.width())?;
    warn_regime(&c);
    let report = instability_test(model, &c, eps)?;
    let (a, _, _) = jacobian_at(model, &c, &StateVector(report.fixed_point.clone()), eps)?;
    write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| a.write_dump(b))?;
    write_json_artifact(cfg, &output_path(cfg, "json"), &report)?;
    println!(
        "rho_a={:.12} unstable={} at_origin={}",
        report.rho_a, report.has_unstable_eigenvalue, report.stable_at_origin
    );
    Ok(())
}

pub fn cmd_continuum(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let model = loaded.system();
    let eps = cfg.require_epsilon()?;
    let profile = ContinuumGrid::new(cfg.alpha, cfg.mesh, true)?.solve(model, eps, cfg.tol, cfg.max_iter)?;
    let report = compare_with_discrete(model, cfg.alpha, cfg.width(), eps, cfg.mesh, cfg.tol)?;
    write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| profile.write_csv(b))?;
    write_json_artifact(cfg, &output_path(cfg, "json"), &report)?;
    println!(
        "sup_gap={:e} interior_gap={:e} bound={} {}",
        report.sup_gap,
        report.interior_gap,
        report.bound,
        pass_word(report.within_bound)
    );
    Ok(())
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<()> {
    let loaded = load(cfg)?;
    let model = loaded.system();
    let mut configs = Vec::new();
    for &len in &cfg.lengths {
        for &w in &cfg.widths {
            let c = coupled_config(cfg, len, w)?;
            warn_regime(&c);
            configs.push(c);
        }
    }
    let rows = threshold::sweep_coupled(model, &configs, cfg.epsilon_tol, cfg.jobs)?;
    write_csv_artifact(cfg, &output_path(cfg, "csv"), |b| threshold::write_sweep_csv(&rows, b))?;
    for r in &rows {
        println!(
            "L={} w={} variant={} threshold={:.10}..{:.10}",
            r.length, r.width, r.variant, r.threshold_lo, r.threshold_hi
        );
    }
    Ok(())
}
