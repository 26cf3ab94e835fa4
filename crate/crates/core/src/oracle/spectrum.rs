//! Spectra from ensemble correlation functions of the sampled field,
//! S(ω) = 2g₀² Re ∫₀^∞ dτ C(τ)K(τ)e^{iωτ}, with K(τ) = e^{iΔτ − κτ} for the
//! amplitude channel and K = 1 for intensity fluctuations.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{grand_mean_intensity, OracleConfig};
use crate::cavityfield::lagged_products;
use crate::ensemble::{self, VecStats};
use crate::error::{Error, Result};
use crate::params::{NoiseModel, SystemParams};
use crate::spectrum::{Method, SpectrumResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    /// S_A from {α*(τ)α(0)}.
    Amplitude,
    /// S_N from {N(τ)N(0)}.
    Intensity,
}

/// Lags beyond this fraction of the maximum are tapered to zero.
const TAPER_START: f64 = 0.75;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McSpectrum {
    pub result: SpectrumResult,
    /// Bound on the tapered tail, 2g₀²∫|C(τ)K(τ)|dτ over the taper.
    pub truncation: Vec<f64>,
    pub max_lag_time: f64,
    pub n_realizations: usize,
}

/// Default correlation span: twelve decay times of the slowest of κ and the
/// noise correlation rate.
pub fn default_max_lag_time(params: &SystemParams, noise: &NoiseModel, channel: Channel) -> f64 {
    match channel {
        Channel::Amplitude => 12.0 / params.kappa,
        Channel::Intensity => match noise {
            NoiseModel::Parametric { gamma_c, .. } if *gamma_c > 0.0 => 12.0 / params.kappa.min(*gamma_c),
            _ => 12.0 / params.kappa,
        },
    }
}

fn window(tau: f64, max: f64) -> f64 {
    let start = TAPER_START * max;
    if tau <= start {
        1.0
    } else {
        let x = (tau - start) / (max - start);
        (0.5 * PI * x).cos().powi(2)
    }
}

/// Monte Carlo S_A or S_N at `omegas`. Each realization spans four
/// correlation lengths; errors are the scatter of per-realization estimates.
pub fn mc_spectrum(
    params: &SystemParams,
    noise: &NoiseModel,
    channel: Channel,
    omegas: &[f64],
    cfg: &OracleConfig,
    max_lag_time: Option<f64>,
) -> Result<McSpectrum> {
    cfg.check()?;
    if cfg.n_realizations < 2 {
        return Err(Error::InsufficientData("spectrum error bars need at least two realizations".into()));
    }
    let tau_max = max_lag_time.unwrap_or_else(|| default_max_lag_time(params, noise, channel));
    let dt = cfg.dt;
    let max_lag = (tau_max / dt).ceil() as usize;
    if max_lag < 8 {
        return Err(Error::Resolution(format!("max lag time {tau_max:.3e} spans fewer than 8 samples")));
    }
    let fastest = omegas.iter().fold(0.0f64, |m, w| m.max(w.abs())) + params.delta.abs();
    if dt * fastest > 0.2 {
        return Err(Error::Resolution(format!("sample step {dt:.3e} does not resolve frequency {fastest:.3e}")));
    }
    let n_samples = 4 * max_lag + 1;
    let mean = match channel {
        Channel::Intensity => grand_mean_intensity(params, noise, cfg, n_samples)?,
        Channel::Amplitude => 0.0,
    };
    let g2 = 2.0 * params.g0 * params.g0;
    let (k, d) = (params.kappa, params.delta);
    // weights: trapezoid × taper × channel kernel
    let kernel: Vec<Complex64> = (0..=max_lag)
        .map(|j| {
            let tau = j as f64 * dt;
            let trap = if j == 0 { 0.5 } else { 1.0 };
            let kk = match channel {
                Channel::Amplitude => Complex64::from_polar((-k * tau).exp(), d * tau),
                Channel::Intensity => Complex64::new(1.0, 0.0),
            };
            kk * (trap * window(tau, tau_max) * dt)
        })
        .collect();
    let phases: Vec<Vec<Complex64>> = omegas
        .iter()
        .map(|w| (0..=max_lag).map(|j| Complex64::from_polar(1.0, w * j as f64 * dt)).collect())
        .collect();
    let taper_from = (TAPER_START * max_lag as f64).floor() as usize;
    let nw = omegas.len();
    let (values, corr) = ensemble::map_fold(
        cfg.n_realizations,
        cfg.jobs,
        |r| {
            let f = cfg.field(params, noise, r, n_samples)?;
            let x: Vec<Complex64> = match channel {
                Channel::Amplitude => f.samples,
                Channel::Intensity if noise.is_zero() => vec![Complex64::new(0.0, 0.0); n_samples],
                Channel::Intensity => f.samples.iter().map(|a| Complex64::new(a.norm_sqr() - mean, 0.0)).collect(),
            };
            let mut planner = FftPlanner::new();
            let c = lagged_products(&x, &x, max_lag, &mut planner);
            let s: Vec<f64> = phases
                .iter()
                .map(|ph| g2 * c.iter().zip(&kernel).zip(ph).map(|((c, k), p)| c * k * p).sum::<Complex64>().re)
                .collect();
            let tail: Vec<f64> = c[taper_from..].iter().zip(&kernel[taper_from..]).map(|(c, k)| (c * k).norm()).collect();
            Ok((s, tail))
        },
        (VecStats::new(nw), VecStats::new(max_lag + 1 - taper_from)),
        |acc, _, (s, tail)| {
            acc.0.push(&s);
            acc.1.push(&tail);
        },
    )?;
    let tail_bound = g2 * corr.mean().iter().sum::<f64>();
    Ok(McSpectrum {
        result: SpectrumResult {
            omegas: omegas.to_vec(),
            values: values.mean(),
            errors: values.std_err(),
            method: Method::MonteCarlo,
        },
        truncation: vec![tail_bound; nw],
        max_lag_time: tau_max,
        n_realizations: cfg.n_realizations,
    })
}

/// Power |Σ_t x(t)e^{iωt}dt|² on the FFT grid, ω ascending in [−π/dt, π/dt).
/// A signal e^{−iω₀t} peaks at ω = ω₀.
pub fn amplitude_spectrum(x: &[Complex64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    if n == 0 {
        return (Vec::new(), Vec::new());
    }
    let mut buf = x.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let dw = 2.0 * PI / (n as f64 * dt);
    let mut pairs: Vec<(f64, f64)> = buf
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let kk = if 2 * k >= n { k as f64 - n as f64 } else { k as f64 };
            (kk * dw, z.norm_sqr() * dt * dt)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.into_iter().unzip()
}
