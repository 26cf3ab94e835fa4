//! Physical parameters, the frequency-noise model and regime validation.
//!
//! Every frequency, rate and detuning in this crate is an angular quantity
//! in rad/s. Conversion from Hz happens only at the configuration boundary
//! (see [`crate::config`]).

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How the cavity drive strength is specified. Exactly one of the two is given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Drive {
    /// Drive amplitude E₀ (rad/s, real, non-negative).
    Amplitude(f64),
    /// Mean intracavity photon number |α₀|².
    PhotonNumber(f64),
}

/// Cavity + mechanics parameters shared by every module.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub omega_m: f64,
    pub kappa: f64,
    pub g0: f64,
    pub delta: f64,
    pub drive: Drive,
    #[serde(default)]
    pub gamma_m: f64,
}

/// Δ_op = −√(κ² + ω_m²), the detuning that minimises the noiseless occupancy.
pub fn optimal_detuning(omega_m: f64, kappa: f64) -> f64 {
    -(kappa * kappa + omega_m * omega_m).sqrt()
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be non-negative and finite, got {v}")))
    }
}

impl SystemParams {
    pub fn new(omega_m: f64, kappa: f64, g0: f64, delta: f64, drive: Drive) -> Result<Self> {
        let p = SystemParams {
            omega_m,
            kappa,
            g0,
            delta,
            drive,
            gamma_m: 0.0,
        };
        p.check()?;
        Ok(p)
    }

    /// Build from optional drive fields, as read from a config file.
    pub fn from_parts(
        omega_m: f64,
        kappa: f64,
        g0: f64,
        delta: f64,
        drive_amplitude: Option<f64>,
        photon_number: Option<f64>,
        gamma_m: Option<f64>,
    ) -> Result<Self> {
        let drive = match (drive_amplitude, photon_number) {
            (Some(_), Some(_)) => {
                return Err(Error::Ambiguous(
                    "both drive_amplitude and photon_number given; provide exactly one".into(),
                ))
            }
            (Some(e0), None) => Drive::Amplitude(e0),
            (None, Some(n)) => Drive::PhotonNumber(n),
            (None, None) => {
                return Err(Error::InvalidParameter(
                    "one of drive_amplitude or photon_number is required".into(),
                ))
            }
        };
        let mut p = SystemParams::new(omega_m, kappa, g0, delta, drive)?;
        if let Some(g) = gamma_m {
            p = p.with_gamma_m(g)?;
        }
        Ok(p)
    }

    /// Parameters driven at the optimal detuning with a given photon number.
    pub fn at_optimal_detuning(omega_m: f64, kappa: f64, g0: f64, photon_number: f64) -> Result<Self> {
        Self::new(
            omega_m,
            kappa,
            g0,
            optimal_detuning(omega_m, kappa),
            Drive::PhotonNumber(photon_number),
        )
    }

    pub fn with_gamma_m(mut self, gamma_m: f64) -> Result<Self> {
        non_negative("gamma_m", gamma_m)?;
        self.gamma_m = gamma_m;
        Ok(self)
    }

    pub fn with_photon_number(mut self, n: f64) -> Result<Self> {
        self.drive = Drive::PhotonNumber(n);
        self.check()?;
        Ok(self)
    }

    pub fn with_delta(mut self, delta: f64) -> Result<Self> {
        self.delta = delta;
        self.check()?;
        Ok(self)
    }

    pub fn with_g0(mut self, g0: f64) -> Result<Self> {
        self.g0 = g0;
        self.check()?;
        Ok(self)
    }

    fn check(&self) -> Result<()> {
        positive("omega_m", self.omega_m)?;
        positive("kappa", self.kappa)?;
        positive("g0", self.g0)?;
        non_negative("gamma_m", self.gamma_m)?;
        if !self.delta.is_finite() {
            return Err(Error::InvalidParameter("delta must be finite".into()));
        }
        match self.drive {
            Drive::Amplitude(e) => non_negative("drive_amplitude", e),
            Drive::PhotonNumber(n) => non_negative("photon_number", n),
        }
    }

    /// |α₀|² = E₀²/(κ² + Δ²).
    pub fn photon_number(&self) -> f64 {
        match self.drive {
            Drive::PhotonNumber(n) => n,
            Drive::Amplitude(e) => e * e / (self.kappa * self.kappa + self.delta * self.delta),
        }
    }

    /// E₀ (real) reproducing the photon number at the configured detuning.
    pub fn drive_amplitude(&self) -> f64 {
        match self.drive {
            Drive::Amplitude(e) => e,
            Drive::PhotonNumber(n) => (n * (self.kappa * self.kappa + self.delta * self.delta)).sqrt(),
        }
    }

    /// Noiseless steady-state field α₀ = E₀/(κ − iΔ).
    pub fn alpha0(&self) -> Complex64 {
        Complex64::new(self.drive_amplitude(), 0.0) / Complex64::new(self.kappa, -self.delta)
    }

    /// Linearised coupling |G| = g₀|α₀|.
    pub fn coupling(&self) -> f64 {
        self.g0 * self.photon_number().sqrt()
    }

    pub fn optimal_detuning(&self) -> f64 {
        optimal_detuning(self.omega_m, self.kappa)
    }

    /// Noiseless cooling rate at optimal detuning, W₀ = (2g₀²|α₀|²/κ)(ω_m/|Δ_op|).
    pub fn w0(&self) -> f64 {
        2.0 * self.g0 * self.g0 * self.photon_number() / self.kappa * self.omega_m
            / self.optimal_detuning().abs()
    }

    /// Noiseless occupancy at optimal detuning, ½(|Δ_op|/ω_m − 1).
    pub fn n0_noiseless(&self) -> f64 {
        0.5 * (self.optimal_detuning().abs() / self.omega_m - 1.0)
    }

    /// Normal-mode frequencies ω_± = ω_m(1 ± 2|G|/ω_m)^{1/2}.
    pub fn normal_mode_frequencies(&self) -> (f64, f64) {
        normal_mode_frequencies(self.omega_m, self.coupling())
    }
}

pub fn normal_mode_frequencies(omega_m: f64, coupling: f64) -> (f64, f64) {
    let r = 2.0 * coupling / omega_m;
    (omega_m * (1.0 + r).sqrt(), omega_m * (1.0 - r).max(0.0).sqrt())
}

/// Frequency-noise spectrum S_φ̇ on a non-negative grid, linearly interpolated
/// and zero outside the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    omegas: Vec<f64>,
    values: Vec<f64>,
}

impl SpectrumTable {
    pub fn new(omegas: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::Format("table columns differ in length".into()));
        }
        if omegas.len() < 2 {
            return Err(Error::Format("table needs at least two rows".into()));
        }
        if omegas[0] < 0.0 {
            return Err(Error::Format("table is stored for non-negative frequencies only".into()));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) || omegas.iter().any(|w| !w.is_finite()) {
            return Err(Error::Format("table frequencies must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Format("table spectrum must be finite and non-negative".into()));
        }
        Ok(SpectrumTable { omegas, values })
    }

    /// Tabulate `f` on the given grid.
    pub fn from_fn(omegas: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = omegas.iter().map(|&w| f(w)).collect();
        Self::new(omegas, values)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min_omega(&self) -> f64 {
        self.omegas[0]
    }

    pub fn max_omega(&self) -> f64 {
        *self.omegas.last().unwrap()
    }

    pub fn eval(&self, omega: f64) -> f64 {
        let w = omega.abs();
        if w < self.min_omega() || w > self.max_omega() {
            return 0.0;
        }
        let i = self.omegas.partition_point(|&x| x <= w).min(self.omegas.len() - 1).max(1);
        let (x0, x1) = (self.omegas[i - 1], self.omegas[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        y0 + (y1 - y0) * (w - x0) / (x1 - x0)
    }
}

/// Frequency-noise model S_φ̇(Ω) of the driving laser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Lorentzian cutoff: S(Ω) = 2Γ_Lγ_c²/(γ_c² + Ω²).
    Parametric { gamma_l: f64, gamma_c: f64 },
    /// γ_c → ∞: S(Ω) = 2Γ_L.
    White { gamma_l: f64 },
    Tabulated { table: SpectrumTable },
}

impl NoiseModel {
    pub fn parametric(gamma_l: f64, gamma_c: f64) -> Result<Self> {
        non_negative("gamma_l", gamma_l)?;
        positive("gamma_c", gamma_c)?;
        Ok(NoiseModel::Parametric { gamma_l, gamma_c })
    }

    pub fn white(gamma_l: f64) -> Result<Self> {
        non_negative("gamma_l", gamma_l)?;
        Ok(NoiseModel::White { gamma_l })
    }

    pub fn tabulated(table: SpectrumTable) -> Self {
        NoiseModel::Tabulated { table }
    }

    /// A noiseless laser.
    pub fn none() -> Self {
        NoiseModel::White { gamma_l: 0.0 }
    }

    pub fn spectrum_at(&self, omega: f64) -> f64 {
        match self {
            NoiseModel::Parametric { gamma_l, gamma_c } => {
                2.0 * gamma_l * gamma_c * gamma_c / (gamma_c * gamma_c + omega * omega)
            }
            NoiseModel::White { gamma_l } => 2.0 * gamma_l,
            NoiseModel::Tabulated { table } => table.eval(omega),
        }
    }

    /// Γ_L, taken as S(0)/2 for tabulated spectra.
    pub fn linewidth(&self) -> f64 {
        match self {
            NoiseModel::Parametric { gamma_l, .. } | NoiseModel::White { gamma_l } => *gamma_l,
            NoiseModel::Tabulated { table } => 0.5 * table.eval(0.0),
        }
    }

    /// Largest spectral value, used for the small-phase regime check.
    pub fn peak_level(&self) -> f64 {
        match self {
            NoiseModel::Tabulated { table } => table.values().iter().cloned().fold(0.0, f64::max),
            _ => self.spectrum_at(0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            NoiseModel::Parametric { gamma_l, .. } | NoiseModel::White { gamma_l } => *gamma_l == 0.0,
            NoiseModel::Tabulated { table } => table.values().iter().all(|&v| v == 0.0),
        }
    }

    pub fn is_white(&self) -> bool {
        matches!(self, NoiseModel::White { .. })
    }

    /// Equal-time variance {φ̇²} = ∫S dΩ/2π; infinite for white noise.
    pub fn variance(&self) -> f64 {
        match self {
            NoiseModel::Parametric { gamma_l, gamma_c } => gamma_l * gamma_c,
            NoiseModel::White { gamma_l } => {
                if *gamma_l == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            NoiseModel::Tabulated { table } => {
                let w = table.omegas();
                let v = table.values();
                let half: f64 = w
                    .windows(2)
                    .zip(v.windows(2))
                    .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
                    .sum();
                2.0 * half / (2.0 * std::f64::consts::PI)
            }
        }
    }

    /// Characteristic frequencies where the spectrum changes shape.
    pub fn features(&self) -> Vec<f64> {
        match self {
            NoiseModel::Parametric { gamma_c, .. } => vec![*gamma_c],
            NoiseModel::White { .. } => vec![],
            NoiseModel::Tabulated { table } => {
                let mut f = vec![table.min_omega(), table.max_omega()];
                // kinks where the slope changes by a lot
                let w = table.omegas();
                let v = table.values();
                for i in 1..w.len() - 1 {
                    let s0 = (v[i] - v[i - 1]) / (w[i] - w[i - 1]);
                    let s1 = (v[i + 1] - v[i]) / (w[i + 1] - w[i]);
                    let scale = v[i].abs().max(1e-300) / (w[i + 1] - w[i - 1]);
                    if (s1 - s0).abs() > scale {
                        f.push(w[i]);
                    }
                }
                f.retain(|&x| x > 0.0);
                f
            }
        }
    }

    /// Short stable content hash of the model.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("noise model serialises");
        let hash = Sha256::digest(json.as_bytes());
        hex::encode(&hash[..8])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    WeakCoupling,
    SidebandResolved,
    SmallPhase,
    StrongCoupling,
    Stable,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Regime::WeakCoupling => "weak coupling g0|alpha0| < kappa/10",
            Regime::SidebandResolved => "sideband resolved kappa < omega_m/10",
            Regime::SmallPhase => "small phase Gamma_L < kappa/10",
            Regime::StrongCoupling => "strong coupling g0|alpha0| > 10 kappa",
            Regime::Stable => "stability |G| < omega_m/2",
        };
        f.write_str(s)
    }
}

/// Which parameter regimes hold for a (params, noise) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub weak_coupling: bool,
    pub sideband_resolved: bool,
    pub small_phase: bool,
    pub strong_coupling: bool,
    pub stable: bool,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn holds(&self, regime: Regime) -> bool {
        match regime {
            Regime::WeakCoupling => self.weak_coupling,
            Regime::SidebandResolved => self.sideband_resolved,
            Regime::SmallPhase => self.small_phase,
            Regime::StrongCoupling => self.strong_coupling,
            Regime::Stable => self.stable,
        }
    }

    /// Fails with a regime error naming the first violated regime.
    pub fn require(&self, op: &'static str, regimes: &[Regime]) -> Result<()> {
        match regimes.iter().find(|r| !self.holds(**r)) {
            Some(r) => Err(Error::regime(op, r.to_string())),
            None => Ok(()),
        }
    }
}

/// Classify the regime of a parameter set. An unstable coupling
/// (|G| ≥ ω_m/2) is an error rather than a flag.
pub fn validate(params: &SystemParams, noise: &NoiseModel) -> Result<ValidationReport> {
    params.check()?;
    let g = params.coupling();
    let gamma_l = noise.linewidth().max(0.5 * noise.peak_level());
    let mut warnings = Vec::new();
    if let NoiseModel::Tabulated { table } = noise {
        warnings.push(format!(
            "tabulated spectrum is taken as zero outside [{:.6e}, {:.6e}] rad/s",
            table.min_omega(),
            table.max_omega()
        ));
    }
    if g >= params.omega_m / 2.0 {
        return Err(Error::Stability(format!(
            "|G| = {g:.6e} must be below omega_m/2 = {:.6e}",
            params.omega_m / 2.0
        )));
    }
    Ok(ValidationReport {
        weak_coupling: g < params.kappa / 10.0,
        sideband_resolved: params.kappa < params.omega_m / 10.0,
        small_phase: gamma_l < params.kappa / 10.0,
        strong_coupling: g > 10.0 * params.kappa,
        stable: true,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn typical_experiment_is_resolved_and_small_phase() {
        let p = SystemParams::at_optimal_detuning(2.0 * PI * 1e7, 2.0 * PI * 1e6, 2.0 * PI * 1.0, 1e4).unwrap();
        let n = NoiseModel::white(2.0 * PI * 1e3).unwrap();
        let r = validate(&p, &n).unwrap();
        assert!(r.sideband_resolved);
        assert!(r.small_phase);
    }

    #[test]
    fn zero_linewidth_is_small_phase() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.1, 1e-3, 1.0).unwrap();
        let r = validate(&p, &NoiseModel::none()).unwrap();
        assert!(r.small_phase);
    }

    #[test]
    fn stability_boundary_is_an_error() {
        // |G| = ω_m/2 exactly
        let p = SystemParams::new(1.0, 0.01, 0.5, -1.0, Drive::PhotonNumber(1.0)).unwrap();
        assert!(matches!(validate(&p, &NoiseModel::none()), Err(Error::Stability(_))));
    }

    #[test]
    fn bad_rates_and_ambiguous_drive() {
        assert!(matches!(
            SystemParams::new(1.0, -0.1, 1e-3, -1.0, Drive::PhotonNumber(1.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            SystemParams::new(0.0, 0.1, 1e-3, -1.0, Drive::PhotonNumber(1.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            SystemParams::from_parts(1.0, 0.1, 1e-3, -1.0, Some(1.0), Some(1.0), None),
            Err(Error::Ambiguous(_))
        ));
    }

    #[test]
    fn photon_number_from_drive_amplitude() {
        let p = SystemParams::new(1.0, 0.3, 1e-3, -0.4, Drive::Amplitude(2.0)).unwrap();
        assert!((p.photon_number() - 4.0 / (0.09 + 0.16)).abs() < 1e-12);
        assert!((p.alpha0().norm_sqr() - p.photon_number()).abs() < 1e-12);
    }

    #[test]
    fn parametric_spectrum_values() {
        let n = NoiseModel::parametric(3.0, 7.0).unwrap();
        assert_eq!(n.spectrum_at(0.0), 6.0);
        assert!((n.spectrum_at(7.0) - 3.0).abs() < 1e-12);
        let w = NoiseModel::white(3.0).unwrap();
        assert_eq!(w.spectrum_at(1e12), 6.0);
    }

    #[test]
    fn table_interpolates_and_vanishes_outside() {
        let t = SpectrumTable::new(vec![1.0, 2.0, 4.0], vec![1.0, 3.0, 3.0]).unwrap();
        assert_eq!(t.eval(1.5), 2.0);
        assert_eq!(t.eval(-1.5), 2.0);
        assert_eq!(t.eval(0.5), 0.0);
        assert_eq!(t.eval(4.5), 0.0);
        assert_eq!(t.eval(4.0), 3.0);
        assert!(SpectrumTable::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(SpectrumTable::new(vec![1.0, 2.0], vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn noise_digest_is_stable() {
        let a = NoiseModel::parametric(1.0, 2.0).unwrap();
        assert_eq!(a.digest(), a.clone().digest());
        assert_ne!(a.digest(), NoiseModel::parametric(1.0, 2.5).unwrap().digest());
    }
}
