//! Monte Carlo ground truth: the linearized quantum moment equations and the
//! two-mode normal-mode equations integrated along sampled field
//! trajectories, and spectra estimated from ensemble correlations.
//!
//! Every ensemble reduction runs through [`crate::ensemble::map_fold`], so
//! results depend on the master seed only, not on the number of workers.

mod fit;
mod modes;
mod moments;
mod spectrum;

pub use fit::{effective_cooling_fit, CoolingFit, POOR_FIT_FRACTION};
pub use modes::{evolve_normal_modes, fidelity_mc, FidelityResult, ModeCoefficients, NormalModeInputs};
pub use moments::{evolve_moments, MomentOptions, MomentState, MAX_PHASE_PER_STEP, PHYSICALITY_TOL};
pub use spectrum::{amplitude_spectrum, mc_spectrum, Channel, McSpectrum};

use num_complex::Complex64;
use serde::Serialize;

use crate::cavityfield::{field_realization_strided, EnsembleConfig};
use crate::ensemble::{self, VecStats};
use crate::error::{Error, Result};
use crate::noise::{self, Trajectory};
use crate::params::{NoiseModel, SystemParams};

/// Integration grid and seeding for oracle ensembles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Spacing of the stored field samples; the moment step is twice this.
    pub dt: f64,
    /// Field substeps per stored sample, so the noise is resolved.
    pub substeps: usize,
    pub n_realizations: usize,
    pub seed: u64,
    pub jobs: usize,
}

impl OracleConfig {
    /// A grid with 2·dt·max(ω_m, |Δ|, κ) = 0.05 and noise-resolving substeps.
    pub fn new(params: &SystemParams, noise: &NoiseModel, n_realizations: usize, seed: u64) -> Self {
        let fastest = params.omega_m.max(params.delta.abs()).max(params.kappa);
        let dt = 0.025 / fastest;
        let fine = 0.5 * noise::max_step(&noise::sampling_model(noise, params));
        let substeps = if fine.is_finite() && fine < dt { (dt / fine).ceil() as usize } else { 1 };
        OracleConfig {
            dt,
            substeps,
            n_realizations,
            seed,
            jobs: 0,
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs;
        self
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    fn ensemble(&self, n_samples: usize) -> EnsembleConfig {
        EnsembleConfig {
            dt: self.dt / self.substeps as f64,
            n_samples,
            n_realizations: self.n_realizations,
            seed: self.seed,
            jobs: self.jobs,
        }
    }

    /// Post-burn-in field of realization k with `n_samples` samples spaced dt.
    pub fn field(&self, params: &SystemParams, noise: &NoiseModel, k: usize, n_samples: usize) -> Result<Trajectory<Complex64>> {
        field_realization_strided(params, noise, &self.ensemble(n_samples), k, self.substeps)
    }

    fn check(&self) -> Result<()> {
        if self.n_realizations == 0 || !(self.dt > 0.0) {
            return Err(Error::InvalidParameter("oracle needs dt > 0 and at least one realization".into()));
        }
        Ok(())
    }
}

/// Stationary {|α|²}: the grand mean over realizations and sample times.
/// Exactly |α₀|² without noise.
pub fn grand_mean_intensity(params: &SystemParams, noise: &NoiseModel, cfg: &OracleConfig, n_samples: usize) -> Result<f64> {
    cfg.check()?;
    if noise.is_zero() {
        return Ok(params.photon_number());
    }
    let sum = ensemble::map_fold(
        cfg.n_realizations,
        cfg.jobs,
        |k| {
            let f = cfg.field(params, noise, k, n_samples)?;
            Ok(f.samples.iter().map(|a| a.norm_sqr()).sum::<f64>() / f.len() as f64)
        },
        0.0,
        |acc, _, m| *acc += m,
    )?;
    Ok(sum / cfg.n_realizations as f64)
}

/// Field and intensity fluctuation N = |α|² − `mean` for realization k.
fn field_and_n(
    params: &SystemParams,
    noise: &NoiseModel,
    cfg: &OracleConfig,
    k: usize,
    n_samples: usize,
    mean: f64,
) -> Result<(Vec<Complex64>, Vec<f64>)> {
    let f = cfg.field(params, noise, k, n_samples)?;
    let n = if noise.is_zero() {
        vec![0.0; f.len()]
    } else {
        f.samples.iter().map(|a| a.norm_sqr() - mean).collect()
    };
    Ok((f.samples, n))
}

/// Ensemble-averaged occupations on the recorded time grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupancyCurve {
    pub times: Vec<f64>,
    pub n_a: Vec<f64>,
    pub n_a_err: Vec<f64>,
    pub n_b: Vec<f64>,
    pub n_b_err: Vec<f64>,
    pub n_realizations: usize,
}

impl OccupancyCurve {
    /// ⟨a†a⟩ + ⟨b†b⟩ at every recorded time.
    pub fn n_tot(&self) -> Vec<f64> {
        self.n_a.iter().zip(&self.n_b).map(|(a, b)| a + b).collect()
    }

    pub fn write_csv(&self, mut w: impl std::io::Write) -> Result<()> {
        writeln!(w, "t,n_a,n_a_err,n_b,n_b_err")?;
        for i in 0..self.times.len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                self.times[i], self.n_a[i], self.n_a_err[i], self.n_b[i], self.n_b_err[i]
            )?;
        }
        Ok(())
    }
}

fn moment_samples(t_end: f64, dt: f64) -> usize {
    2 * (t_end / (2.0 * dt)).round() as usize + 1
}

/// Evolve the moments of every realization from `initial` to `t_end` and
/// average the occupations. Thermal bath occupation `n_th` at rate Γ_m.
pub fn occupancy_ensemble(
    params: &SystemParams,
    noise: &NoiseModel,
    cfg: &OracleConfig,
    initial: &MomentState,
    t_end: f64,
    opts: MomentOptions,
) -> Result<OccupancyCurve> {
    cfg.check()?;
    let n_samples = moment_samples(t_end, cfg.dt);
    let mean = grand_mean_intensity(params, noise, cfg, n_samples)?;
    let run = |k: usize| -> Result<Vec<MomentState>> {
        let (alpha, n) = field_and_n(params, noise, cfg, k, n_samples, mean)?;
        evolve_moments(params, &alpha, Some(&n), cfg.dt, initial, t_end, opts)
    };
    let first = run(0)?;
    let times: Vec<f64> = first.iter().map(|s| s.t).collect();
    let len = times.len();
    let push = |(a, b): &mut (VecStats, VecStats), series: Vec<MomentState>| {
        a.push(&series.iter().map(MomentState::n_a).collect::<Vec<_>>());
        b.push(&series.iter().map(MomentState::n_b).collect::<Vec<_>>());
    };
    let mut acc = (VecStats::new(len), VecStats::new(len));
    push(&mut acc, first);
    let (a, b) = ensemble::map_fold(
        cfg.n_realizations - 1,
        cfg.jobs,
        |k| run(k + 1),
        acc,
        |acc, _, s| push(acc, s),
    )?;
    Ok(OccupancyCurve {
        times,
        n_a: a.mean(),
        n_a_err: a.std_err(),
        n_b: b.mean(),
        n_b_err: b.std_err(),
        n_realizations: cfg.n_realizations,
    })
}

/// Steady-state occupations: each realization is time-averaged over
/// [t_burn, t_burn + t_window] and the errors are the scatter of these
/// averages over realizations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SteadyOccupancy {
    pub n_a: f64,
    pub n_b: f64,
    pub n_tot: f64,
    pub n_b_err: f64,
    pub n_tot_err: f64,
    pub n_realizations: usize,
    pub t_burn: f64,
    pub t_window: f64,
}

pub fn steady_occupancy(
    params: &SystemParams,
    noise: &NoiseModel,
    cfg: &OracleConfig,
    initial: &MomentState,
    t_burn: f64,
    t_window: f64,
    opts: MomentOptions,
) -> Result<SteadyOccupancy> {
    cfg.check()?;
    let t_end = t_burn + t_window;
    let n_samples = moment_samples(t_end, cfg.dt);
    let mean = grand_mean_intensity(params, noise, cfg, n_samples)?;
    let stats = ensemble::map_fold(
        cfg.n_realizations,
        cfg.jobs,
        |k| {
            let (alpha, n) = field_and_n(params, noise, cfg, k, n_samples, mean)?;
            let series = evolve_moments(params, &alpha, Some(&n), cfg.dt, initial, t_end, opts)?;
            let tail: Vec<&MomentState> = series.iter().filter(|s| s.t >= t_burn).collect();
            if tail.is_empty() {
                return Err(Error::InsufficientData("no recorded samples after burn-in".into()));
            }
            let m = tail.len() as f64;
            let na = tail.iter().map(|s| s.n_a()).sum::<f64>() / m;
            let nb = tail.iter().map(|s| s.n_b()).sum::<f64>() / m;
            Ok([na, nb, na + nb])
        },
        VecStats::new(3),
        |acc, _, v| acc.push(&v),
    )?;
    let (m, e) = (stats.mean(), stats.std_err());
    Ok(SteadyOccupancy {
        n_a: m[0],
        n_b: m[1],
        n_tot: m[2],
        n_b_err: e[1],
        n_tot_err: e[2],
        n_realizations: cfg.n_realizations,
        t_burn,
        t_window,
    })
}
