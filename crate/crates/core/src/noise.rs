//! Sampled realisations of the laser frequency noise φ̇(t) and spectral
//! estimation from samples.
//!
//! Parametric (Ornstein–Uhlenbeck) noise is generated by the exact one-step
//! update, so the sampled autocovariance is Γ_Lγ_c·e^{−γ_c k dt} for any dt.
//! Tabulated spectra use circulant Fourier synthesis.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::params::{NoiseModel, SpectrumTable, SystemParams};
use crate::spectrum::{Method, SpectrumResult};

/// Uniformly sampled signal.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<T> {
    pub dt: f64,
    pub t0: f64,
    pub seed_id: u64,
    pub samples: Vec<T>,
}

impl<T> Trajectory<T> {
    pub fn new(dt: f64, t0: f64, seed_id: u64, samples: Vec<T>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if samples.len() < 2 {
            return Err(Error::InsufficientData("trajectory needs at least two samples".into()));
        }
        Ok(Trajectory {
            dt,
            t0,
            seed_id,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }
}

/// Independent random stream `index` derived from a master seed. Streams are
/// addressed by index, so ensembles do not depend on generation order.
pub fn stream_rng(master_seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// Cutoff used to sample the white-noise sentinel: 10³·max(κ, ω_m).
pub fn white_sampling_cutoff(params: &SystemParams) -> f64 {
    1e3 * params.kappa.max(params.omega_m)
}

/// The model actually sampled for trajectories: white noise becomes an
/// Ornstein–Uhlenbeck process with a cutoff far above every system scale.
pub fn sampling_model(noise: &NoiseModel, params: &SystemParams) -> NoiseModel {
    match noise {
        NoiseModel::White { gamma_l } => NoiseModel::Parametric {
            gamma_l: *gamma_l,
            gamma_c: white_sampling_cutoff(params),
        },
        other => other.clone(),
    }
}

/// Largest time step a generator accepts for this model (0.1/γ_c for OU).
pub fn max_step(noise: &NoiseModel) -> f64 {
    match noise {
        NoiseModel::Parametric { gamma_l, gamma_c } if *gamma_l > 0.0 => 0.1 / gamma_c,
        _ => f64::INFINITY,
    }
}

/// Sample φ̇ on `n_steps` grid points from stream 0 of `seed`.
pub fn generate_phidot(noise: &NoiseModel, dt: f64, n_steps: usize, seed: u64) -> Result<Trajectory<f64>> {
    let samples = sample_phidot(noise, dt, n_steps, &mut stream_rng(seed, 0))?;
    Trajectory::new(dt, 0.0, seed, samples)
}

/// Sample φ̇ from an explicit generator; ensembles call this with
/// `stream_rng(master, k)` for realization k.
pub fn sample_phidot(noise: &NoiseModel, dt: f64, n_steps: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if n_steps < 2 {
        return Err(Error::InsufficientData("need at least two samples".into()));
    }
    if noise.is_zero() {
        return Ok(vec![0.0; n_steps]);
    }
    match noise {
        NoiseModel::Parametric { gamma_l, gamma_c } => {
            if dt * gamma_c >= 0.1 {
                return Err(Error::Resolution(format!(
                    "dt*gamma_c = {:.3} must be below 0.1",
                    dt * gamma_c
                )));
            }
            Ok(ou_samples(*gamma_l, *gamma_c, dt, n_steps, rng))
        }
        NoiseModel::White { .. } => Err(Error::InvalidParameter(
            "white noise has no finite correlation time; sample sampling_model(noise, params) instead".into(),
        )),
        NoiseModel::Tabulated { table } => synthesize(table, dt, n_steps, rng),
    }
}

pub(crate) fn ou_samples(gamma_l: f64, gamma_c: f64, dt: f64, n: usize, rng: &mut impl Rng) -> Vec<f64> {
    let var = gamma_l * gamma_c;
    if var == 0.0 {
        return vec![0.0; n];
    }
    let rho = (-gamma_c * dt).exp();
    let kick = (var * (1.0 - rho * rho)).sqrt();
    let mut x: f64 = var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        out.push(x);
        x = x * rho + kick * rng.sample::<f64, _>(StandardNormal);
    }
    out
}

/// Circulant spectral synthesis of a stationary Gaussian sequence whose
/// periodogram expectation is S_φ̇ on the Fourier grid.
pub fn generate_phidot_tabulated(noise: &NoiseModel, dt: f64, n_steps: usize, seed: u64) -> Result<Trajectory<f64>> {
    match noise {
        NoiseModel::Tabulated { table } => {
            let samples = synthesize(table, dt, n_steps, &mut stream_rng(seed, 0))?;
            Trajectory::new(dt, 0.0, seed, samples)
        }
        _ => Err(Error::InvalidParameter(
            "generate_phidot_tabulated needs a tabulated model".into(),
        )),
    }
}

fn synthesize(table: &SpectrumTable, dt: f64, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let nyquist = PI / dt;
    if table.min_omega() > 0.0 || table.max_omega() < nyquist * (1.0 - 1e-9) {
        return Err(Error::Coverage(format!(
            "table spans [{:.4e}, {:.4e}] but synthesis needs [0, {:.4e}]",
            table.min_omega(),
            table.max_omega(),
            nyquist
        )));
    }
    let df = 1.0 / (m as f64 * dt);
    let mut buf: Vec<Complex64> = (0..m)
        .map(|k| {
            let kk = if k <= m / 2 { k as f64 } else { k as f64 - m as f64 };
            let amp = (table.eval(2.0 * PI * kk * df) * df * 0.5).sqrt();
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * amp
        })
        .collect();
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    Ok(buf.iter().map(|z| z.re * std::f64::consts::SQRT_2).collect())
}

/// φ(t) = ∫φ̇ by the cumulative trapezoid rule, with φ(t₀) = 0.
pub fn integrate_phase(phidot: &Trajectory<f64>) -> Trajectory<f64> {
    let dt = phidot.dt;
    let mut acc = 0.0;
    let mut out = Vec::with_capacity(phidot.len());
    out.push(0.0);
    for w in phidot.samples.windows(2) {
        acc += 0.5 * dt * (w[0] + w[1]);
        out.push(acc);
    }
    Trajectory {
        dt,
        t0: phidot.t0,
        seed_id: phidot.seed_id,
        samples: out,
    }
}

/// Averaged periodogram over non-overlapping segments (rectangular window).
///
/// Normalised so that each non-negative bin estimates the two-sided density
/// S(Ω) of the sampled process; errors are segment scatter / √segments.
pub fn estimate_psd(traj: &Trajectory<f64>, n_segments: usize) -> Result<SpectrumResult> {
    if n_segments == 0 {
        return Err(Error::InvalidParameter("n_segments must be at least 1".into()));
    }
    let seg = traj.len() / n_segments;
    if seg < 64 {
        return Err(Error::InsufficientData(format!(
            "{} samples give segments of {seg} < 64 for {n_segments} segments",
            traj.len()
        )));
    }
    let fft = FftPlanner::new().plan_fft_forward(seg);
    let bins = seg / 2 + 1;
    let mut sum = vec![0.0; bins];
    let mut sum_sq = vec![0.0; bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); seg];
    for s in 0..n_segments {
        for (b, x) in buf.iter_mut().zip(&traj.samples[s * seg..(s + 1) * seg]) {
            *b = Complex64::new(*x, 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            let p = buf[k].norm_sqr() * traj.dt / seg as f64;
            sum[k] += p;
            sum_sq[k] += p * p;
        }
    }
    let n = n_segments as f64;
    let values: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let errors = if n_segments > 1 {
        sum_sq
            .iter()
            .zip(&values)
            .map(|(sq, m)| ((sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
            .collect()
    } else {
        vec![f64::NAN; bins]
    };
    let omegas = (0..bins).map(|k| 2.0 * PI * k as f64 / (seg as f64 * traj.dt)).collect();
    Ok(SpectrumResult {
        omegas,
        values,
        errors,
        method: Method::MonteCarlo,
    })
}

/// Two- or three-column CSV: `t,value` or `t,re,im`.
pub trait Sample: Copy {
    const CHANNELS: usize;
    fn write_fields(&self, out: &mut String);
    fn to_f64s(&self) -> [f64; 2];
    fn from_f64s(v: [f64; 2]) -> Self;
}

impl Sample for f64 {
    const CHANNELS: usize = 1;
    fn write_fields(&self, out: &mut String) {
        out.push_str(&format!("{self:.17e}"));
    }
    fn to_f64s(&self) -> [f64; 2] {
        [*self, 0.0]
    }
    fn from_f64s(v: [f64; 2]) -> Self {
        v[0]
    }
}

impl Sample for Complex64 {
    const CHANNELS: usize = 2;
    fn write_fields(&self, out: &mut String) {
        out.push_str(&format!("{:.17e},{:.17e}", self.re, self.im));
    }
    fn to_f64s(&self) -> [f64; 2] {
        [self.re, self.im]
    }
    fn from_f64s(v: [f64; 2]) -> Self {
        Complex64::new(v[0], v[1])
    }
}

pub fn write_csv<T: Sample>(traj: &Trajectory<T>, mut w: impl Write) -> Result<()> {
    let header = if T::CHANNELS == 1 { "t,value" } else { "t,re,im" };
    writeln!(w, "{header}")?;
    let mut line = String::new();
    for (k, s) in traj.samples.iter().enumerate() {
        line.clear();
        line.push_str(&format!("{:.17e},", traj.time(k)));
        s.write_fields(&mut line);
        writeln!(w, "{line}")?;
    }
    Ok(())
}

const MAGIC: &[u8; 4] = b"ONTR";
const VERSION: u32 = 1;

/// Binary dump, all little-endian:
///
/// ```text
/// offset  size  field
///      0     4  magic "ONTR"
///      4     4  u32 format version (1)
///      8     4  u32 channels (1 real, 2 complex)
///     12     4  u32 reserved (0)
///     16     8  f64 dt
///     24     8  f64 t0
///     32     8  u64 sample count n
///     40     8  u64 seed id
///     48  8·c·n f64 samples (re, im interleaved for complex)
/// ```
pub fn write_binary<T: Sample>(traj: &Trajectory<T>, mut w: impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(48 + 8 * T::CHANNELS * traj.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(T::CHANNELS as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    buf.extend_from_slice(&traj.dt.to_le_bytes());
    buf.extend_from_slice(&traj.t0.to_le_bytes());
    buf.extend_from_slice(&(traj.len() as u64).to_le_bytes());
    buf.extend_from_slice(&traj.seed_id.to_le_bytes());
    for s in &traj.samples {
        let v = s.to_f64s();
        for x in v.iter().take(T::CHANNELS) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_binary<T: Sample>(mut r: impl Read) -> Result<Trajectory<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 48 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("not a trajectory dump".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    if u32_at(4) != VERSION {
        return Err(Error::Format(format!("unsupported version {}", u32_at(4))));
    }
    if u32_at(8) as usize != T::CHANNELS {
        return Err(Error::Format("channel count does not match requested sample type".into()));
    }
    let (dt, t0, n, seed) = (f64_at(16), f64_at(24), u64_at(32) as usize, u64_at(40));
    if bytes.len() != 48 + 8 * T::CHANNELS * n {
        return Err(Error::Format("payload length does not match header".into()));
    }
    let samples = (0..n)
        .map(|k| {
            let o = 48 + 8 * T::CHANNELS * k;
            let re = f64_at(o);
            let im = if T::CHANNELS == 2 { f64_at(o + 8) } else { 0.0 };
            T::from_f64s([re, im])
        })
        .collect();
    Trajectory::new(dt, t0, seed, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(x: &[f64]) -> (f64, f64) {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        (m, x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn zero_linewidth_gives_zero_trajectory() {
        let n = NoiseModel::parametric(0.0, 1.0).unwrap();
        let t = generate_phidot(&n, 0.01, 1000, 3).unwrap();
        assert!(t.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn coarse_step_is_rejected() {
        let n = NoiseModel::parametric(1.0, 20.0).unwrap();
        assert!(matches!(generate_phidot(&n, 0.01, 100, 0), Err(Error::Resolution(_))));
    }

    #[test]
    fn same_seed_same_bits() {
        let n = NoiseModel::parametric(1.0, 2.0).unwrap();
        let a = generate_phidot(&n, 0.01, 5000, 42).unwrap();
        let b = generate_phidot(&n, 0.01, 5000, 42).unwrap();
        let c = generate_phidot(&n, 0.01, 5000, 43).unwrap();
        assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a.samples, c.samples);
    }

    // OU oracle: for an AR(1) chain with coefficient ρ the sample variance
    // estimator has variance ≈ 2σ⁴(1+ρ²)/(n(1−ρ²)), and the lag-1 estimator
    // r̂ has variance ≈ (1−ρ²)/n.
    #[test]
    fn ou_variance_and_lag_one_within_three_sigma() {
        let (gl, gc, dt, n) = (0.5, 4.0, 0.01, 1_000_000);
        let noise = NoiseModel::parametric(gl, gc).unwrap();
        let t = generate_phidot(&noise, dt, n, 7).unwrap();
        let (m, v) = mean_var(&t.samples);
        let var = gl * gc;
        let rho = (-gc * dt).exp();
        let sd_v = (2.0 * var * var * (1.0 + rho * rho) / (n as f64 * (1.0 - rho * rho))).sqrt();
        assert!((v - var).abs() < 3.0 * sd_v, "var {v} vs {var} ± {sd_v}");
        let sd_m = (var * (1.0 + rho) / ((1.0 - rho) * n as f64)).sqrt();
        assert!(m.abs() < 5.0 * sd_m);
        let c1: f64 = t.samples.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum::<f64>() / (n - 1) as f64;
        let r = c1 / v;
        let sd_r = ((1.0 - rho * rho) / n as f64).sqrt();
        assert!((r - rho).abs() < 3.0 * sd_r, "lag1 {r} vs {rho} ± {sd_r}");
    }

    #[test]
    fn ou_samples_are_gaussian() {
        let noise = NoiseModel::parametric(1.0, 1.0).unwrap();
        // decorrelated sampling: dt·γ_c close to the limit
        let t = generate_phidot(&noise, 0.099, 1_000_000, 11).unwrap();
        let (m, v) = mean_var(&t.samples);
        let n = t.len() as f64;
        let k4 = t.samples.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n / (v * v) - 3.0;
        // excess kurtosis of correlated Gaussian samples: sd ≈ √(24/n_eff)
        let rho = (-0.099f64).exp();
        let n_eff = n * (1.0 - rho.powi(4)) / (1.0 + rho.powi(4));
        assert!(k4.abs() < 5.0 * (24.0 / n_eff).sqrt(), "kurtosis {k4}");
    }

    #[test]
    fn dt_refinement_preserves_autocovariance() {
        // halving dt then decimating gives the same lag covariances as the
        // coarse generator (different seeds, compared within 3σ)
        let noise = NoiseModel::parametric(1.0, 2.0).unwrap();
        let (dt, n) = (0.02, 400_000);
        let coarse = generate_phidot(&noise, dt, n, 1).unwrap();
        let fine = generate_phidot(&noise, dt / 2.0, 2 * n, 2).unwrap();
        let dec: Vec<f64> = fine.samples.iter().step_by(2).cloned().collect();
        for lag in [0usize, 5, 25, 50] {
            let cov = |x: &[f64]| x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / (x.len() - lag) as f64;
            let (a, b) = (cov(&coarse.samples), cov(&dec));
            let exact = 2.0 * (-2.0 * lag as f64 * dt).exp();
            // estimator sd of a lag covariance for AR(1) ~ var·√(2τ_c/T)
            let sd = 2.0 * (2.0 * (1.0 / 2.0) / (n as f64 * dt)).sqrt() * 1.5;
            assert!((a - b).abs() < 3.0 * sd * 2f64.sqrt(), "lag {lag}: {a} vs {b}");
            assert!((a - exact).abs() < 3.0 * sd);
        }
    }

    #[test]
    fn phase_integration() {
        let z = Trajectory::new(0.1, 0.0, 0, vec![0.0; 10]).unwrap();
        assert!(integrate_phase(&z).samples.iter().all(|&x| x == 0.0));
        let c = Trajectory::new(0.1, 0.0, 0, vec![2.5; 11]).unwrap();
        let p = integrate_phase(&c);
        for (k, v) in p.samples.iter().enumerate() {
            assert!((v - 2.5 * 0.1 * k as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_table_gives_zero_trajectory() {
        let dt = 0.1;
        let t = SpectrumTable::new(vec![0.0, PI / dt], vec![0.0, 0.0]).unwrap();
        let x = generate_phidot_tabulated(&NoiseModel::tabulated(t), dt, 256, 0).unwrap();
        assert!(x.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn table_must_cover_nyquist() {
        let dt = 0.1;
        let t = SpectrumTable::new(vec![0.0, 1.0], vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            generate_phidot_tabulated(&NoiseModel::tabulated(t), dt, 256, 0),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn flat_table_variance_matches_band_power() {
        // Parseval: variance = ∫_{-π/dt}^{π/dt} 2Γ_L dΩ/2π = 2Γ_L/dt·... /2π·2π/dt
        let (gl, dt, n) = (0.3, 0.05, 1 << 16);
        let t = SpectrumTable::new(vec![0.0, PI / dt], vec![2.0 * gl, 2.0 * gl]).unwrap();
        let noise = NoiseModel::tabulated(t);
        let expected = 2.0 * gl * (2.0 * PI / dt) / (2.0 * PI);
        let mut vars = Vec::new();
        for seed in 0..20 {
            let x = generate_phidot_tabulated(&noise, dt, n, seed).unwrap();
            vars.push(mean_var(&x.samples).1 + x.samples.iter().sum::<f64>().powi(2) / (n as f64).powi(2));
        }
        let (m, v) = mean_var(&vars);
        let se = (v / vars.len() as f64).sqrt();
        assert!((m - expected).abs() < 3.0 * se.max(1e-3 * expected), "{m} vs {expected} ± {se}");
    }

    #[test]
    fn psd_of_zero_trajectory_is_zero() {
        let z = Trajectory::new(0.1, 0.0, 0, vec![0.0; 1024]).unwrap();
        let s = estimate_psd(&z, 4).unwrap();
        assert!(s.values.iter().all(|&v| v == 0.0));
        assert!(estimate_psd(&z, 32).is_err());
    }

    #[test]
    fn ou_psd_at_zero_frequency() {
        let (gl, gc, dt) = (0.2, 1.0, 0.05);
        let noise = NoiseModel::parametric(gl, gc).unwrap();
        let t = generate_phidot(&noise, dt, 200 * 2048, 5).unwrap();
        let s = estimate_psd(&t, 200).unwrap();
        assert!((s.values[0] - 2.0 * gl).abs() < 3.0 * s.errors[0], "{} ± {}", s.values[0], s.errors[0]);
    }

    #[test]
    fn white_sentinel_psd_is_flat() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.1, 1e-3, 1.0).unwrap();
        let gl = 0.05;
        let model = sampling_model(&NoiseModel::white(gl).unwrap(), &p);
        let dt = 0.5 * max_step(&model);
        let t = generate_phidot(&model, dt, 64 << 16, 9).unwrap();
        let s = estimate_psd(&t, 64).unwrap();
        let cutoff = white_sampling_cutoff(&p);
        let mut bad = 0;
        let checked: Vec<usize> = (1..s.len()).take_while(|&k| s.omegas[k] < 0.1 * cutoff).collect();
        assert!(checked.len() > 20);
        for &k in &checked {
            if (s.values[k] - 2.0 * gl).abs() > 3.0 * s.errors[k] {
                bad += 1;
            }
        }
        assert!(bad <= 2, "{bad} bins off");
    }

    #[test]
    fn binary_roundtrip() {
        let t = Trajectory::new(0.25, 1.5, 77, vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 3.0)]).unwrap();
        let mut buf = Vec::new();
        write_binary(&t, &mut buf).unwrap();
        assert_eq!(buf.len(), 48 + 32);
        let back: Trajectory<Complex64> = read_binary(&buf[..]).unwrap();
        assert_eq!(back, t);
        assert!(read_binary::<f64>(&buf[..]).is_err());
    }
}
