//! Normal modes A_± of the strongly coupled system along a noisy field:
//!
//!   i dA/dt = [[ω_+(t) − iκ/2, −θ̇], [−θ̇, ω_−(t) − iκ/2]]·A + g₀N(t)e^{−iθ(t)}(1, 1)ᵀ
//!
//! with e^{2iθ} = α/|α|, |G| = g₀|α| and ω_±(t) = ω_m(1 ± 2|G(t)|/ω_m)^{1/2}.
//! The cavity amplitude is a = e^{−iθ}(A_+ − A_−)/√2. Integration runs in the
//! frame rotating at the mean noiseless mode frequency (ω_+ + ω_−)/2.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::Serialize;

use super::moments::check_step;
use super::{field_and_n, grand_mean_intensity, moment_samples, OracleConfig};
use crate::analytic::Analytic;
use crate::ensemble::{self, VecStats};
use crate::error::{Error, Result};
use crate::params::{NoiseModel, SystemParams};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Slowly varying coefficients of the mode equations on the field grid.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalModeInputs {
    pub dt: f64,
    pub theta: Vec<f64>,
    pub coupling: Vec<f64>,
    pub theta_dot: Vec<f64>,
    /// g₀N(t)e^{−iθ(t)}.
    pub drive: Vec<Complex64>,
}

impl NormalModeInputs {
    pub fn from_field(params: &SystemParams, alpha: &[Complex64], n: &[f64], dt: f64) -> Result<Self> {
        if alpha.len() < 3 || n.len() != alpha.len() {
            return Err(Error::InvalidParameter("need matching field and N samples, at least three".into()));
        }
        let mut theta = Vec::with_capacity(alpha.len());
        let mut prev = alpha[0].arg();
        let mut acc = prev;
        for a in alpha {
            let x = a.arg();
            let mut d = x - prev;
            d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
            acc += d;
            prev = x;
            theta.push(0.5 * acc);
        }
        let last = theta.len() - 1;
        let theta_dot = (0..theta.len())
            .map(|i| match i {
                0 => (theta[1] - theta[0]) / dt,
                i if i == last => (theta[last] - theta[last - 1]) / dt,
                i => (theta[i + 1] - theta[i - 1]) / (2.0 * dt),
            })
            .collect();
        let coupling: Vec<f64> = alpha.iter().map(|a| params.g0 * a.norm()).collect();
        if let Some(g) = coupling.iter().find(|g| 2.0 * **g >= params.omega_m) {
            return Err(Error::Stability(format!("|G(t)| = {g:.4e} reaches omega_m/2")));
        }
        let drive = n
            .iter()
            .zip(&theta)
            .map(|(nv, th)| params.g0 * nv * Complex64::from_polar(1.0, -th))
            .collect();
        Ok(NormalModeInputs {
            dt,
            theta,
            coupling,
            theta_dot,
            drive,
        })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Mean noiseless normal-mode frequency used as the rotating frame.
fn frame_frequency(params: &SystemParams) -> f64 {
    let (wp, wm) = params.normal_mode_frequencies();
    0.5 * (wp + wm)
}

/// Integrate (A_+, A_−) in the rotating frame with RK4 steps of 2·dt from
/// `initial`, optionally with the N drive. Returns the state at t = 0 and
/// then after every `record_every` steps.
pub fn evolve_normal_modes(
    params: &SystemParams,
    inputs: &NormalModeInputs,
    initial: [Complex64; 2],
    with_drive: bool,
    record_every: usize,
) -> Result<Vec<(f64, [Complex64; 2])>> {
    let h = 2.0 * inputs.dt;
    check_step(params, h)?;
    let wbar = frame_frequency(params);
    let half_k = 0.5 * params.kappa;
    let w = params.omega_m;
    let rate = |i: usize, t: f64, a: [Complex64; 2]| -> [Complex64; 2] {
        let x = 2.0 * inputs.coupling[i] / w;
        let dp = w * (1.0 + x).sqrt() - wbar;
        let dm = w * (1.0 - x).sqrt() - wbar;
        let off = -inputs.theta_dot[i];
        let f = if with_drive { inputs.drive[i] * Complex64::from_polar(1.0, wbar * t) } else { Complex64::new(0.0, 0.0) };
        [
            -I * (Complex64::new(dp, -half_k) * a[0] + off * a[1] + f),
            -I * (off * a[0] + Complex64::new(dm, -half_k) * a[1] + f),
        ]
    };
    let every = record_every.max(1);
    let steps = (inputs.len() - 1) / 2;
    let mut a = initial;
    let mut out = Vec::with_capacity(steps / every + 1);
    out.push((0.0, a));
    let axpy = |a: [Complex64; 2], k: [Complex64; 2], s: f64| [a[0] + k[0] * s, a[1] + k[1] * s];
    for j in 0..steps {
        let i = 2 * j;
        let t = j as f64 * h;
        let k1 = rate(i, t, a);
        let k2 = rate(i + 1, t + 0.5 * h, axpy(a, k1, 0.5 * h));
        let k3 = rate(i + 1, t + 0.5 * h, axpy(a, k2, 0.5 * h));
        let k4 = rate(i + 2, t + h, axpy(a, k3, h));
        for m in 0..2 {
            a[m] += (k1[m] + 2.0 * k2[m] + 2.0 * k3[m] + k4[m]) * (h / 6.0);
        }
        if (j + 1) % every == 0 {
            if !(a[0].norm() < 1e12 && a[1].norm() < 1e12) {
                return Err(Error::Stability(format!("normal modes diverged at t = {:.4e}", t + h)));
            }
            out.push(((j + 1) as f64 * h, a));
        }
    }
    Ok(out)
}

/// Transfer coefficients of one realization on a time grid: c_aa from the
/// homogeneous problem with a(0) = 1 and c_a from the driven problem with
/// a(0) = 0.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeCoefficients {
    pub times: Vec<f64>,
    pub c_aa: Vec<Complex64>,
    pub c_a: Vec<Complex64>,
}

impl ModeCoefficients {
    pub fn compute(params: &SystemParams, inputs: &NormalModeInputs, record_every: usize) -> Result<Self> {
        let th0 = inputs.theta[0];
        let unit = Complex64::from_polar(FRAC_1_SQRT_2, th0);
        let hom = evolve_normal_modes(params, inputs, [unit, -unit], false, record_every)?;
        let inh = evolve_normal_modes(params, inputs, [Complex64::new(0.0, 0.0); 2], true, record_every)?;
        let every = record_every.max(1);
        let cavity = |k: usize, a: &[Complex64; 2]| {
            let th = inputs.theta[2 * k * every];
            Complex64::from_polar(FRAC_1_SQRT_2, -th) * (a[0] - a[1])
        };
        Ok(ModeCoefficients {
            times: hom.iter().map(|(t, _)| *t).collect(),
            c_aa: hom.iter().enumerate().map(|(k, (_, a))| cavity(k, a)).collect(),
            c_a: inh.iter().enumerate().map(|(k, (_, a))| cavity(k, a)).collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FidelityResult {
    pub times: Vec<f64>,
    /// exp(−{|c_aa + 1|²})·exp(−{|c_a|²}).
    pub fidelity: Vec<f64>,
    pub fidelity_err: Vec<f64>,
    /// {|c_aa + 1|²} and {|c_a|²} with standard errors.
    pub loss: Vec<f64>,
    pub loss_err: Vec<f64>,
    pub displacement: Vec<f64>,
    pub displacement_err: Vec<f64>,
    /// {c_aa} and {c_a}.
    pub c_aa_mean: Vec<Complex64>,
    pub c_a_mean: Vec<Complex64>,
    /// exp(−|1 + {c_aa}|²), the amplitude-averaged form, and its error.
    pub fidelity_amplitude: Vec<f64>,
    pub fidelity_amplitude_err: Vec<f64>,
    /// F₀(t) = exp(−|1 + cos(|G|t)e^{−κt/2}|²).
    pub f0: Vec<f64>,
    /// Noiseless solution of the mode equations, exp(−|1 + cos(δt)e^{−κt/2}|²)
    /// with δ = (ω_+ − ω_−)/2.
    pub f0_modes: Vec<f64>,
    /// Analytic D(t), W(t), R(t); NaN where the evaluation fails.
    pub d_t: Vec<f64>,
    pub w_t: Vec<f64>,
    pub r_t: Vec<f64>,
    /// exp(−|1 + c̄_aa|²) with c̄_aa from the second-order cumulant expansion.
    pub f_cumulant: Vec<f64>,
    pub n_realizations: usize,
}

/// Ensemble fidelity at the requested times (rounded to the integrator grid).
pub fn fidelity_mc(params: &SystemParams, noise: &NoiseModel, times: &[f64], cfg: &OracleConfig) -> Result<FidelityResult> {
    cfg.check()?;
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::InvalidParameter("fidelity times must be non-negative".into()));
    }
    if cfg.n_realizations < 2 && !noise.is_zero() {
        return Err(Error::InsufficientData("error bars need at least two realizations".into()));
    }
    let h = 2.0 * cfg.dt;
    let idx: Vec<usize> = times.iter().map(|t| (t / h).round() as usize).collect();
    let t_end = idx.iter().max().copied().unwrap_or(0) as f64 * h;
    let n_samples = moment_samples(t_end, cfg.dt);
    let mean = grand_mean_intensity(params, noise, cfg, n_samples)?;
    let m = idx.len();
    let stats = ensemble::map_fold(
        cfg.n_realizations,
        cfg.jobs,
        |k| {
            let (alpha, n) = field_and_n(params, noise, cfg, k, n_samples, mean)?;
            let inputs = NormalModeInputs::from_field(params, &alpha, &n, cfg.dt)?;
            let c = ModeCoefficients::compute(params, &inputs, 1)?;
            let mut row = Vec::with_capacity(6 * m);
            for &i in &idx {
                row.push((c.c_aa[i] + 1.0).norm_sqr());
            }
            for &i in &idx {
                row.push(c.c_a[i].norm_sqr());
            }
            for &i in &idx {
                row.extend([c.c_aa[i].re, c.c_aa[i].im, c.c_a[i].re, c.c_a[i].im]);
            }
            Ok(row)
        },
        VecStats::new(6 * m),
        |acc, _, row| acc.push(&row),
    )?;
    let (mean_v, err_v) = (stats.mean(), stats.std_err());
    let err = |v: f64| if v.is_nan() { 0.0 } else { v };
    let times_grid: Vec<f64> = idx.iter().map(|&i| i as f64 * h).collect();
    let loss = mean_v[..m].to_vec();
    let displacement = mean_v[m..2 * m].to_vec();
    let loss_err: Vec<f64> = err_v[..m].iter().map(|e| err(*e)).collect();
    let displacement_err: Vec<f64> = err_v[m..2 * m].iter().map(|e| err(*e)).collect();
    let fidelity: Vec<f64> = (0..m).map(|i| (-loss[i] - displacement[i]).exp()).collect();
    let fidelity_err = (0..m).map(|i| fidelity[i] * loss_err[i].hypot(displacement_err[i])).collect();
    let c_aa_mean: Vec<Complex64> = (0..m)
        .map(|i| Complex64::new(mean_v[2 * m + 4 * i], mean_v[2 * m + 4 * i + 1]))
        .collect();
    let c_a_mean = (0..m)
        .map(|i| Complex64::new(mean_v[2 * m + 4 * i + 2], mean_v[2 * m + 4 * i + 3]))
        .collect();
    let fidelity_amplitude: Vec<f64> = c_aa_mean.iter().map(|c| (-(c + 1.0).norm_sqr()).exp()).collect();
    // dF = −2F·Re[(1 + c̄)* dc]
    let fidelity_amplitude_err = (0..m)
        .map(|i| {
            let z = c_aa_mean[i] + 1.0;
            let (er, ei) = (err(err_v[2 * m + 4 * i]), err(err_v[2 * m + 4 * i + 1]));
            2.0 * fidelity_amplitude[i] * (z.re * er).hypot(z.im * ei)
        })
        .collect();

    let (g, k) = (params.coupling(), params.kappa);
    let (wp, wm) = params.normal_mode_frequencies();
    let delta = 0.5 * (wp - wm);
    let f_of = |c: f64| (-(1.0 + c) * (1.0 + c)).exp();
    let f0 = times_grid.iter().map(|t| f_of((g * t).cos() * (-0.5 * k * t).exp())).collect();
    let f0_modes = times_grid.iter().map(|t| f_of((delta * t).cos() * (-0.5 * k * t).exp())).collect();
    let analytic = Analytic::new(params, noise).map(Analytic::forced);
    let eval = |f: &dyn Fn(&Analytic, f64) -> Result<f64>| -> Vec<f64> {
        times_grid
            .iter()
            .map(|&t| analytic.as_ref().ok().and_then(|a| f(a, t).ok()).unwrap_or(f64::NAN))
            .collect()
    };
    let d_t = eval(&|a, t| a.displacement_variance(t));
    let w_t = eval(&|a, t| a.low_frequency_dephasing(t).map(|l| l.w_t));
    let r_t = eval(&|a, t| a.low_frequency_dephasing(t).map(|l| l.r_t));
    let f_cumulant = eval(&|a, t| a.cumulant_caa(t, false).map(|c| (-(c + 1.0).norm_sqr()).exp()));
    Ok(FidelityResult {
        times: times_grid,
        fidelity,
        fidelity_err,
        loss,
        loss_err,
        displacement,
        displacement_err,
        c_aa_mean,
        c_a_mean,
        fidelity_amplitude,
        fidelity_amplitude_err,
        f0,
        f0_modes,
        d_t,
        w_t,
        r_t,
        f_cumulant,
        n_realizations: cfg.n_realizations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Drive;

    fn strong() -> SystemParams {
        SystemParams::new(1.0, 0.0025, 0.005, -1.0, Drive::PhotonNumber(100.0)).unwrap()
    }

    #[test]
    fn noiseless_modes_are_free_exponentials() {
        let p = strong();
        let cfg = OracleConfig::new(&p, &NoiseModel::none(), 1, 0);
        let len = 4001;
        let alpha = vec![p.alpha0(); len];
        let inputs = NormalModeInputs::from_field(&p, &alpha, &vec![0.0; len], cfg.dt).unwrap();
        let a0 = [Complex64::new(0.3, 0.1), Complex64::new(-0.2, 0.5)];
        let out = evolve_normal_modes(&p, &inputs, a0, true, 100).unwrap();
        let (wp, wm) = p.normal_mode_frequencies();
        let wbar = 0.5 * (wp + wm);
        for (t, a) in out {
            let ep = Complex64::new(-0.5 * p.kappa, -(wp - wbar)) * t;
            let em = Complex64::new(-0.5 * p.kappa, -(wm - wbar)) * t;
            assert!((a[0] - a0[0] * ep.exp()).norm() < 1e-10);
            assert!((a[1] - a0[1] * em.exp()).norm() < 1e-10);
        }
    }

    #[test]
    fn noiseless_fidelity_is_exact() {
        let p = strong();
        let tr = std::f64::consts::PI / p.coupling();
        let cfg = OracleConfig::new(&p, &NoiseModel::none(), 1, 0);
        let r = fidelity_mc(&p, &NoiseModel::none(), &[0.0, 0.5 * tr, tr], &cfg).unwrap();
        for i in 0..3 {
            assert!((r.fidelity[i] - r.f0_modes[i]).abs() < 1e-9, "{} vs {}", r.fidelity[i], r.f0_modes[i]);
            assert_eq!(r.displacement[i], 0.0);
        }
        assert!((r.fidelity[0] - (-4.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn phase_unwrapping_follows_rotation() {
        let p = strong();
        let len = 1001;
        let alpha: Vec<Complex64> = (0..len).map(|i| Complex64::from_polar(10.0, 0.05 * i as f64)).collect();
        let inputs = NormalModeInputs::from_field(&p, &alpha, &vec![0.0; len], 0.1).unwrap();
        assert!((inputs.theta[len - 1] - 0.5 * 0.05 * (len - 1) as f64).abs() < 1e-9);
        assert!(inputs.theta_dot.iter().all(|d| (d - 0.25).abs() < 1e-9));
    }
}
