//! Classical intracavity field α(t) driven by a phase-noisy laser, the
//! intensity-fluctuation process N(t) = |α|² − {|α|²}, and ensemble
//! correlation estimators.
//!
//! The field obeys dα/dt = (iΔ − κ)α + E₀e^{iφ(t)} in the frame of the laser.

use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::ensemble::{self, VecStats};
use crate::error::{Error, Result};
use crate::noise::{self, stream_rng, Trajectory};
use crate::params::{NoiseModel, SystemParams};

/// Burn-in before sampling, in units of 1/κ.
pub const BURN_IN_DECAY_TIMES: f64 = 10.0;
pub const DEFAULT_REALIZATIONS: usize = 1000;

/// Exponential-integrator step constants for a fixed dt.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FieldStepper {
    prop: Complex64,
    gain: Complex64,
}

impl FieldStepper {
    pub(crate) fn new(params: &SystemParams, dt: f64) -> Result<Self> {
        let scale = dt * (params.kappa + params.delta.abs());
        if scale >= 0.1 {
            return Err(Error::Resolution(format!(
                "dt*(kappa+|delta|) = {scale:.3} must be below 0.1"
            )));
        }
        let lambda = Complex64::new(-params.kappa, params.delta);
        let prop = (lambda * dt).exp();
        let gain = params.drive_amplitude() * (prop - 1.0) / lambda;
        Ok(FieldStepper { prop, gain })
    }

    /// Advance α by one step with the drive phase held at `phi_mid`.
    #[inline]
    pub(crate) fn step(&self, alpha: Complex64, phi_mid: f64) -> Complex64 {
        self.prop * alpha + self.gain * Complex64::from_polar(1.0, phi_mid)
    }
}

/// Field samples on the grid of `phi`, starting from the noiseless steady
/// state rotated to the initial laser phase.
pub(crate) fn field_from_phase(params: &SystemParams, phi: &[f64], dt: f64) -> Result<Vec<Complex64>> {
    let stepper = FieldStepper::new(params, dt)?;
    let mut alpha = params.alpha0() * Complex64::from_polar(1.0, phi[0]);
    let mut out = Vec::with_capacity(phi.len());
    out.push(alpha);
    for w in phi.windows(2) {
        alpha = stepper.step(alpha, 0.5 * (w[0] + w[1]));
        out.push(alpha);
    }
    Ok(out)
}

/// Integrate the field equation along a sampled phase trajectory.
pub fn evolve_alpha(params: &SystemParams, phi: &Trajectory<f64>) -> Result<Trajectory<Complex64>> {
    let samples = field_from_phase(params, &phi.samples, phi.dt)?;
    Trajectory::new(phi.dt, phi.t0, phi.seed_id, samples)
}

/// Sampling grid and seeding for an ensemble of field realizations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub dt: f64,
    pub n_samples: usize,
    pub n_realizations: usize,
    pub seed: u64,
    /// Worker threads; 0 means all cores.
    pub jobs: usize,
}

impl EnsembleConfig {
    /// A grid that resolves the cavity and the sampled noise, covering
    /// `duration` after burn-in.
    pub fn for_duration(params: &SystemParams, noise: &NoiseModel, duration: f64, n_realizations: usize, seed: u64) -> Self {
        let model = noise::sampling_model(noise, params);
        let dt = (0.05 / (params.kappa + params.delta.abs())).min(0.5 * noise::max_step(&model));
        EnsembleConfig {
            dt,
            n_samples: (duration / dt).ceil() as usize + 1,
            n_realizations,
            seed,
            jobs: 0,
        }
    }

    pub fn burn_in_steps(&self, params: &SystemParams) -> usize {
        (BURN_IN_DECAY_TIMES / (params.kappa * self.dt)).ceil() as usize
    }
}

/// Post-burn-in field of realization `k`: the noise of stream k is sampled
/// over burn-in plus the requested span and the burn-in part is dropped.
pub fn field_realization(params: &SystemParams, noise: &NoiseModel, cfg: &EnsembleConfig, k: usize) -> Result<Trajectory<Complex64>> {
    field_realization_strided(params, noise, cfg, k, 1)
}

/// As [`field_realization`], but integrated on the grid `cfg.dt` and kept
/// every `stride` steps: `cfg.n_samples` output samples spaced stride·dt.
pub fn field_realization_strided(
    params: &SystemParams,
    noise: &NoiseModel,
    cfg: &EnsembleConfig,
    k: usize,
    stride: usize,
) -> Result<Trajectory<Complex64>> {
    let stride = stride.max(1);
    let model = noise::sampling_model(noise, params);
    let burn = cfg.burn_in_steps(params);
    let total = burn + (cfg.n_samples.max(1) - 1) * stride + 1;
    let mut rng = stream_rng(cfg.seed, k as u64);
    let phidot = noise::sample_phidot(&model, cfg.dt, total, &mut rng)?;
    let stepper = FieldStepper::new(params, cfg.dt)?;
    // phase by the trapezoid rule, as in integrate_phase, starting at zero
    let mut phi = 0.0;
    let mut alpha = params.alpha0();
    let mut out = Vec::with_capacity(cfg.n_samples);
    for i in 0..total {
        if i >= burn && (i - burn) % stride == 0 {
            out.push(alpha);
        }
        if i + 1 < total {
            let next = phi + 0.5 * cfg.dt * (phidot[i] + phidot[i + 1]);
            alpha = stepper.step(alpha, 0.5 * (phi + next));
            phi = next;
        }
    }
    Trajectory::new(cfg.dt * stride as f64, 0.0, k as u64, out)
}

#[derive(Clone, Debug)]
pub struct FieldEnsemble {
    pub trajectories: Vec<Trajectory<Complex64>>,
    pub params: SystemParams,
    pub noise: NoiseModel,
    pub n_realizations: usize,
}

impl FieldEnsemble {
    pub fn simulate(params: &SystemParams, noise: &NoiseModel, cfg: &EnsembleConfig) -> Result<Self> {
        if cfg.n_realizations == 0 {
            return Err(Error::InvalidParameter("ensemble needs at least one realization".into()));
        }
        let trajectories = ensemble::par_map(cfg.n_realizations, cfg.jobs, |k| field_realization(params, noise, cfg, k))?;
        Ok(FieldEnsemble {
            trajectories,
            params: params.clone(),
            noise: noise.clone(),
            n_realizations: cfg.n_realizations,
        })
    }

    pub fn dt(&self) -> f64 {
        self.trajectories[0].dt
    }

    pub fn len(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// {|α(t)|²} with its standard error at every sample time.
    pub fn mean_intensity(&self) -> (Vec<f64>, Vec<f64>) {
        let mut stats = VecStats::new(self.len());
        for tr in &self.trajectories {
            let i: Vec<f64> = tr.samples.iter().map(|a| a.norm_sqr()).collect();
            stats.push(&i);
        }
        (stats.mean(), stats.std_err())
    }
}

/// N_k(t) = |α_k(t)|² − {|α(t)|²}, the mean taken over the ensemble at each t.
pub fn intensity_fluctuation(ens: &FieldEnsemble) -> Result<Vec<Trajectory<f64>>> {
    if ens.n_realizations < 100 {
        return Err(Error::InsufficientData(format!(
            "intensity fluctuations need at least 100 realizations, got {}",
            ens.n_realizations
        )));
    }
    let (mean, _) = ens.mean_intensity();
    ens.trajectories
        .iter()
        .map(|tr| {
            let n = tr.samples.iter().zip(&mean).map(|(a, m)| a.norm_sqr() - m).collect();
            Trajectory::new(tr.dt, tr.t0, tr.seed_id, n)
        })
        .collect()
}

/// Stationary correlation C(τ_k) on lags τ_k = k·dt.
#[derive(Clone, Debug, PartialEq)]
pub struct Correlation {
    pub dt: f64,
    pub values: Vec<Complex64>,
    /// Standard error over realizations (modulus of the re/im errors).
    pub errors: Vec<f64>,
}

impl Correlation {
    pub fn lag(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "tau,re,im,err")?;
        for (k, (v, e)) in self.values.iter().zip(&self.errors).enumerate() {
            writeln!(w, "{:.17e},{:.17e},{:.17e},{:.17e}", self.lag(k), v.re, v.im, e)?;
        }
        Ok(())
    }
}

/// Unbiased lagged products r(τ) = 1/(n−τ)·Σ_t x*(t+τ)·y(t), τ = 0..=max_lag,
/// via zero-padded FFTs.
pub(crate) fn lagged_products(x: &[Complex64], y: &[Complex64], max_lag: usize, planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let n = x.len();
    let m = (n + max_lag + 1).next_power_of_two();
    let mut u: Vec<Complex64> = x.iter().map(|z| z.conj()).chain(std::iter::repeat(Complex64::new(0.0, 0.0))).take(m).collect();
    let mut v: Vec<Complex64> = y.iter().map(|z| z.conj()).chain(std::iter::repeat(Complex64::new(0.0, 0.0))).take(m).collect();
    let fwd = planner.plan_fft_forward(m);
    fwd.process(&mut u);
    fwd.process(&mut v);
    for (a, b) in u.iter_mut().zip(&v) {
        *a *= b.conj();
    }
    planner.plan_fft_inverse(m).process(&mut u);
    (0..=max_lag).map(|k| u[k] / (m as f64 * (n - k) as f64)).collect()
}

/// {x*(t+τ)·y(t)} averaged over time origins and realizations. Both channel
/// lists must hold the same realizations on the same grid.
pub fn correlation(x: &[Trajectory<Complex64>], y: &[Trajectory<Complex64>], max_lag: usize) -> Result<Correlation> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::InvalidParameter("channels must hold the same non-empty set of realizations".into()));
    }
    let n = x[0].len();
    if x.iter().chain(y).any(|t| t.len() != n) {
        return Err(Error::InvalidParameter("all trajectories must have the same length".into()));
    }
    if max_lag > n / 4 {
        return Err(Error::InvalidParameter(format!(
            "max_lag {max_lag} exceeds a quarter of the span ({n} samples)"
        )));
    }
    let mut planner = FftPlanner::new();
    let mut re = VecStats::new(max_lag + 1);
    let mut im = VecStats::new(max_lag + 1);
    for (a, b) in x.iter().zip(y) {
        let r = lagged_products(&a.samples, &b.samples, max_lag, &mut planner);
        re.push(&r.iter().map(|z| z.re).collect::<Vec<_>>());
        im.push(&r.iter().map(|z| z.im).collect::<Vec<_>>());
    }
    let values = re.mean().into_iter().zip(im.mean()).map(|(r, i)| Complex64::new(r, i)).collect();
    let errors = re
        .std_err()
        .into_iter()
        .zip(im.std_err())
        .map(|(r, i)| r.hypot(i))
        .collect();
    Ok(Correlation {
        dt: x[0].dt,
        values,
        errors,
    })
}

/// Real-channel convenience wrapper, e.g. for {N(τ)N(0)}.
pub fn real_correlation(x: &[Trajectory<f64>], y: &[Trajectory<f64>], max_lag: usize) -> Result<Correlation> {
    let lift = |v: &[Trajectory<f64>]| -> Vec<Trajectory<Complex64>> {
        v.iter()
            .map(|t| Trajectory {
                dt: t.dt,
                t0: t.t0,
                seed_id: t.seed_id,
                samples: t.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect(),
            })
            .collect()
    };
    correlation(&lift(x), &lift(y), max_lag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Drive;

    fn params() -> SystemParams {
        SystemParams::at_optimal_detuning(1.0, 0.1, 1e-4, 1e4).unwrap()
    }

    #[test]
    fn steady_state_is_fixed_point() {
        let p = params();
        let phi = Trajectory::new(0.01, 0.0, 0, vec![0.0; 5000]).unwrap();
        let a = evolve_alpha(&p, &phi).unwrap();
        let a0 = p.alpha0();
        assert!(a.samples.iter().all(|z| (z - a0).norm() < 1e-10 * a0.norm()));
        assert!((a0.norm_sqr() - 1e4).abs() < 1e-6);
    }

    #[test]
    fn converges_from_rest() {
        let p = params();
        let stepper = FieldStepper::new(&p, 0.01).unwrap();
        let mut a = Complex64::new(0.0, 0.0);
        for _ in 0..(20.0 / p.kappa / 0.01) as usize {
            a = stepper.step(a, 0.0);
        }
        let a0 = p.drive_amplitude() / Complex64::new(p.kappa, -p.delta);
        assert!((a - a0).norm() < 1e-6 * a0.norm());
    }

    #[test]
    fn constant_phase_rotates() {
        let p = params();
        let c = 0.7;
        let phi = Trajectory::new(0.01, 0.0, 0, vec![c; 100]).unwrap();
        let a = evolve_alpha(&p, &phi).unwrap();
        let expect = p.alpha0() * Complex64::from_polar(1.0, c);
        assert!(a.samples.iter().all(|z| (z - expect).norm() < 1e-9 * expect.norm()));
    }

    #[test]
    fn step_size_is_checked() {
        let p = params();
        let phi = Trajectory::new(0.2, 0.0, 0, vec![0.0; 10]).unwrap();
        assert!(matches!(evolve_alpha(&p, &phi), Err(Error::Resolution(_))));
    }

    #[test]
    fn linear_in_drive_and_phase_covariant() {
        let p = params();
        let noise = NoiseModel::parametric(0.005, 0.5).unwrap();
        let cfg = EnsembleConfig::for_duration(&p, &noise, 50.0, 3, 9);
        let base = field_realization(&p, &noise, &cfg, 1).unwrap();
        let e = p.drive_amplitude();
        let doubled = SystemParams { drive: Drive::Amplitude(2.0 * e), ..p.clone() };
        let d = field_realization(&doubled, &noise, &cfg, 1).unwrap();
        for (a, b) in base.samples.iter().zip(&d.samples) {
            assert!((2.0 * a - b).norm() <= 1e-12 * b.norm());
        }
        // a global drive phase is a constant offset of φ
        let rot = Complex64::from_polar(1.0, 1.1);
        let phidot = noise::generate_phidot(&noise, cfg.dt, 4000, 3).unwrap();
        let phi = crate::noise::integrate_phase(&phidot);
        let shifted = Trajectory { samples: phi.samples.iter().map(|x| x + 1.1).collect(), ..phi.clone() };
        let a = evolve_alpha(&p, &phi).unwrap();
        let b = evolve_alpha(&p, &shifted).unwrap();
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert!((x * rot - y).norm() <= 1e-12 * x.norm());
            assert!((x.norm_sqr() - y.norm_sqr()).abs() <= 1e-10 * x.norm_sqr());
        }
    }

    #[test]
    fn noiseless_ensemble_has_zero_fluctuation() {
        let p = params();
        let cfg = EnsembleConfig { dt: 0.01, n_samples: 400, n_realizations: 100, seed: 1, jobs: 1 };
        let ens = FieldEnsemble::simulate(&p, &NoiseModel::none(), &cfg).unwrap();
        let n = intensity_fluctuation(&ens).unwrap();
        assert!(n.iter().all(|t| t.samples.iter().all(|&v| v.abs() < 1e-6)));
        let c = correlation(&ens.trajectories, &ens.trajectories, 100).unwrap();
        // laser frame: the noiseless field is constant
        for v in &c.values {
            assert!((v - Complex64::new(1e4, 0.0)).norm() < 1e-6);
        }
    }

    #[test]
    fn too_few_realizations_for_fluctuations() {
        let p = params();
        let cfg = EnsembleConfig { dt: 0.01, n_samples: 100, n_realizations: 10, seed: 1, jobs: 1 };
        let ens = FieldEnsemble::simulate(&p, &NoiseModel::none(), &cfg).unwrap();
        assert!(intensity_fluctuation(&ens).is_err());
        assert!(correlation(&ens.trajectories, &ens.trajectories, 26).is_err());
    }

    #[test]
    fn fft_products_match_direct_sum() {
        let x: Vec<Complex64> = (0..200).map(|k| Complex64::new((k as f64 * 0.3).sin(), (k as f64 * 0.11).cos())).collect();
        let y: Vec<Complex64> = (0..200).map(|k| Complex64::new((k as f64 * 0.07).cos(), -(k as f64 * 0.5).sin())).collect();
        let r = lagged_products(&x, &y, 40, &mut FftPlanner::new());
        for (tau, v) in r.iter().enumerate() {
            let direct: Complex64 = (0..200 - tau).map(|t| x[t + tau].conj() * y[t]).sum::<Complex64>() / (200 - tau) as f64;
            assert!((v - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn ensemble_is_worker_independent() {
        let p = params();
        let noise = NoiseModel::parametric(0.002, 1.0).unwrap();
        let mut cfg = EnsembleConfig::for_duration(&p, &noise, 20.0, 8, 5);
        cfg.jobs = 1;
        let a = FieldEnsemble::simulate(&p, &noise, &cfg).unwrap();
        cfg.jobs = 3;
        let b = FieldEnsemble::simulate(&p, &noise, &cfg).unwrap();
        assert_eq!(a.trajectories, b.trajectories);
    }
}
