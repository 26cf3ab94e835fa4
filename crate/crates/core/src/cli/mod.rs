//! Command-line front end. Every run writes its outputs plus a
//! `manifest.json` that is sufficient to rerun it bit-identically.

pub mod config;
mod commands;
pub mod manifest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
pub use config::Config;
pub use manifest::{OutputFile, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "optonoise", version, about = "Laser phase-noise limits for optomechanical cooling and state transfer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// S_A(ω) and S_N(ω) curves.
    Spectrum(Common),
    /// Cooling limits and, with --oracle, a simulated relaxation curve.
    Cooling(Common),
    /// Fidelity of a full photon-phonon oscillation.
    Fidelity(Common),
    /// Parameter sweeps of scalar outputs.
    Sweep(SweepArgs),
    /// Measured intensity-noise PSD to a tabulated phase-noise model.
    Ingest(Common),
    /// Monte Carlo validation against the closed forms.
    Oracle(Common),
    /// Repeat a run from its manifest and compare outputs.
    Rerun(RerunArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long, default_value = ".")]
    pub out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "OPTONOISE_JOBS", default_value_t = 0)]
    pub jobs: usize,
    /// Evaluate outside the regime of validity.
    #[arg(long)]
    pub force: bool,
    /// Add Monte Carlo results.
    #[arg(long)]
    pub oracle: bool,
    /// Also write a gnuplot script for the CSV outputs.
    #[arg(long)]
    pub gnuplot_script: bool,
    #[command(flatten)]
    pub keys: KeyFlags,
}

/// One flag per config key; flags override the file.
#[derive(Args, Debug, Clone, Default)]
pub struct KeyFlags {
    #[arg(long)]
    pub omega_m: Option<String>,
    #[arg(long)]
    pub kappa: Option<String>,
    #[arg(long)]
    pub g0: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub delta: Option<String>,
    #[arg(long)]
    pub photon_number: Option<String>,
    #[arg(long)]
    pub drive_amplitude: Option<String>,
    #[arg(long)]
    pub gamma_m: Option<String>,
    #[arg(long)]
    pub n_th: Option<String>,
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub gamma_l: Option<String>,
    #[arg(long)]
    pub gamma_c: Option<String>,
    #[arg(long)]
    pub noise_table: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub realizations: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub omega_min: Option<String>,
    #[arg(long)]
    pub omega_max: Option<String>,
    #[arg(long)]
    pub omega_points: Option<String>,
    #[arg(long)]
    pub t_max: Option<String>,
    #[arg(long)]
    pub t_points: Option<String>,
    #[arg(long)]
    pub initial_occupancy: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    #[arg(long)]
    pub psd: Option<String>,
    #[arg(long)]
    pub psd_format: Option<String>,
}

impl KeyFlags {
    fn pairs(&self) -> [(&'static str, &Option<String>); 23] {
        [
            ("omega_m", &self.omega_m),
            ("kappa", &self.kappa),
            ("g0", &self.g0),
            ("delta", &self.delta),
            ("photon_number", &self.photon_number),
            ("drive_amplitude", &self.drive_amplitude),
            ("gamma_m", &self.gamma_m),
            ("n_th", &self.n_th),
            ("noise", &self.noise),
            ("gamma_l", &self.gamma_l),
            ("gamma_c", &self.gamma_c),
            ("noise_table", &self.noise_table),
            ("seed", &self.seed),
            ("realizations", &self.realizations),
            ("omega_min", &self.omega_min),
            ("omega_max", &self.omega_max),
            ("omega_points", &self.omega_points),
            ("t_max", &self.t_max),
            ("t_points", &self.t_points),
            ("initial_occupancy", &self.initial_occupancy),
            ("t_end", &self.t_end),
            ("psd", &self.psd),
            ("psd_format", &self.psd_format),
        ]
    }
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// `key:start:stop:count[:log]`; give one or two.
    #[arg(long, required = true)]
    pub axis: Vec<String>,
    /// Scalar outputs to record, e.g. n0, epsilon_total.
    #[arg(long, required = true)]
    pub metric: Vec<String>,
}

#[derive(Args, Debug, Clone)]
pub struct RerunArgs {
    pub manifest: PathBuf,
    /// Output directory (default: `rerun` next to the manifest).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "OPTONOISE_JOBS", default_value_t = 0)]
    pub jobs: usize,
}

/// A fully resolved run.
#[derive(Clone, Debug)]
pub struct Invocation {
    pub subcommand: String,
    pub config: Config,
    pub force: bool,
    pub oracle: bool,
    pub gnuplot_script: bool,
    pub jobs: usize,
    pub axes: Vec<String>,
    pub metrics: Vec<String>,
}

fn absolute(p: &str, base: &Path) -> String {
    let path = Path::new(p);
    let full = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    full.canonicalize().unwrap_or(full).to_string_lossy().into_owned()
}

impl Invocation {
    fn from_common(subcommand: &str, c: &Common, axes: Vec<String>, metrics: Vec<String>) -> Result<Self> {
        let (mut config, base) = match &c.config {
            Some(p) => (Config::load(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
            None => (Config::default(), PathBuf::new()),
        };
        let cwd = std::env::current_dir()?;
        for key in ["noise_table", "psd"] {
            if let Some(v) = config.get(key).map(str::to_string) {
                config.set(key, &absolute(&v, &cwd.join(&base)))?;
            }
        }
        for (key, v) in c.keys.pairs() {
            if let Some(v) = v {
                let v = if key == "noise_table" || key == "psd" { absolute(v, &cwd) } else { v.clone() };
                config.set(key, &v)?;
            }
        }
        Ok(Invocation {
            subcommand: subcommand.to_string(),
            config,
            force: c.force,
            oracle: c.oracle,
            gnuplot_script: c.gnuplot_script,
            jobs: c.jobs,
            axes,
            metrics,
        })
    }

    fn from_manifest(m: &RunManifest, jobs: usize) -> Self {
        Invocation {
            subcommand: m.subcommand.clone(),
            config: m.config.clone(),
            force: m.force,
            oracle: m.oracle,
            gnuplot_script: m.gnuplot_script,
            jobs,
            axes: m.axes.clone(),
            metrics: m.metrics.clone(),
        }
    }
}

/// Run and write `manifest.json` into `out`.
pub fn execute(inv: &Invocation, out: &Path) -> Result<RunManifest> {
    fs::create_dir_all(out)?;
    let start = Instant::now();
    let files = commands::run(inv, out)?;
    let outputs = files
        .iter()
        .map(|f| {
            Ok(OutputFile {
                path: f.clone(),
                sha256: manifest::sha256_file(&out.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let noise_digest = inv.config.noise(Path::new("")).map(|n| n.digest()).unwrap_or_default();
    let m = RunManifest {
        subcommand: inv.subcommand.clone(),
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: manifest::config_hash(&inv.config),
        config: inv.config.clone(),
        force: inv.force,
        oracle: inv.oracle,
        gnuplot_script: inv.gnuplot_script,
        axes: inv.axes.clone(),
        metrics: inv.metrics.clone(),
        seed: inv.config.seed()?,
        noise_digest,
        jobs: inv.jobs,
        outputs,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&m)?)?;
    Ok(m)
}

/// Rerun from a manifest; fails if any output differs.
pub fn rerun(manifest_path: &Path, out: &Path, jobs: usize) -> Result<RunManifest> {
    let m: RunManifest = serde_json::from_str(&fs::read_to_string(manifest_path)?)?;
    let again = execute(&Invocation::from_manifest(&m, jobs), out)?;
    let differing: Vec<&str> = m
        .outputs
        .iter()
        .filter(|o| !again.outputs.iter().any(|n| n.path == o.path && n.sha256 == o.sha256))
        .map(|o| o.path.as_str())
        .collect();
    if !differing.is_empty() {
        return Err(Error::Numerical(format!("rerun outputs differ: {}", differing.join(", "))));
    }
    Ok(again)
}

pub fn dispatch(cli: Cli) -> Result<()> {
    let (inv, out) = match &cli.command {
        Command::Spectrum(c) => (Invocation::from_common("spectrum", c, vec![], vec![])?, c.out.clone()),
        Command::Cooling(c) => (Invocation::from_common("cooling", c, vec![], vec![])?, c.out.clone()),
        Command::Fidelity(c) => (Invocation::from_common("fidelity", c, vec![], vec![])?, c.out.clone()),
        Command::Ingest(c) => (Invocation::from_common("ingest", c, vec![], vec![])?, c.out.clone()),
        Command::Oracle(c) => (Invocation::from_common("oracle", c, vec![], vec![])?, c.out.clone()),
        Command::Sweep(s) => (
            Invocation::from_common("sweep", &s.common, s.axis.clone(), s.metric.clone())?,
            s.common.out.clone(),
        ),
        Command::Rerun(r) => {
            let out = r.out.clone().unwrap_or_else(|| {
                r.manifest.parent().map(Path::to_path_buf).unwrap_or_default().join("rerun")
            });
            let m = rerun(&r.manifest, &out, r.jobs)?;
            println!("rerun identical: {} outputs in {}", m.outputs.len(), out.display());
            return Ok(());
        }
    };
    let m = execute(&inv, &out)?;
    for o in &m.outputs {
        println!("{}", out.join(&o.path).display());
    }
    Ok(())
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
