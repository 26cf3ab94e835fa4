use serde::Serialize;

use super::Analytic;
use crate::error::Result;
use crate::params::Regime;

/// Occupancy contributions; they sum to `CoolingResult::n0`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoolingBreakdown {
    /// Mechanical-bath term 2κΓ_m/(g₀²|α₀|²).
    pub thermal: f64,
    /// S_A(−ω_m)/W: Stokes scattering, including its phase-noise correction.
    pub stokes: f64,
    /// S_N(−ω_m)/W: heating by intensity fluctuations.
    pub phase_noise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoolingResult {
    /// W = S(ω_m) − S(−ω_m).
    pub w: f64,
    pub n0: f64,
    pub breakdown: CoolingBreakdown,
    /// Sideband-resolved three-term estimate
    /// 2κΓ_m/(g₀²|α₀|²) + κ²/4ω_m² + |α₀|²S_φ̇(ω_m)/2κ.
    pub n0_three_term: f64,
    /// Photon number minimising the three-term estimate, 2κ√(Γ_m/(g₀²S_φ̇(ω_m))).
    /// `None` when Γ_m or S_φ̇(ω_m) vanishes.
    pub optimal_photon_number: Option<f64>,
    /// (2κ)²Γ_m/(g₀²S_φ̇(ω_m)) as usually quoted; this is the square of the
    /// minimising photon number in units where it is dimensionless.
    pub quoted_optimal_photon_number: Option<f64>,
    /// 2√(Γ_mS_φ̇(ω_m)/g₀²) + κ²/4ω_m².
    pub n0_min: Option<f64>,
    /// S_φ̇(ω_m) < g₀²/Γ_m.
    pub ground_state_possible: bool,
}

impl Analytic {
    pub fn cooling_limits(&self) -> Result<CoolingResult> {
        self.require("cooling_limits", &[Regime::WeakCoupling, Regime::SmallPhase])?;
        let p = &self.params;
        let (k, w, g0) = (p.kappa, p.omega_m, p.g0);
        let n = p.photon_number();
        let sa_red = self.s_a(w)?;
        let sa_blue = self.s_a(-w)?;
        let sn_red = self.s_n(w)?;
        let sn_blue = self.s_n(-w)?;
        let rate = (sa_red + sn_red) - (sa_blue + sn_blue);
        let thermal = if p.gamma_m == 0.0 { 0.0 } else { 2.0 * k * p.gamma_m / (g0 * g0 * n) };
        let breakdown = CoolingBreakdown {
            thermal,
            stokes: sa_blue / rate,
            phase_noise: sn_blue / rate,
        };
        let sw = self.s(w);
        let quantum = k * k / (4.0 * w * w);
        let n0_three_term = thermal + quantum + n * sw / (2.0 * k);
        let has_optimum = p.gamma_m > 0.0 && sw > 0.0;
        let (optimal, quoted, n0_min) = if has_optimum {
            (
                Some(2.0 * k * (p.gamma_m / (g0 * g0 * sw)).sqrt()),
                Some(4.0 * k * k * p.gamma_m / (g0 * g0 * sw)),
                Some(2.0 * (p.gamma_m * sw / (g0 * g0)).sqrt() + quantum),
            )
        } else {
            (None, None, None)
        };
        Ok(CoolingResult {
            w: rate,
            n0: breakdown.thermal + breakdown.stokes + breakdown.phase_noise,
            breakdown,
            n0_three_term,
            optimal_photon_number: optimal,
            quoted_optimal_photon_number: quoted,
            n0_min,
            ground_state_possible: p.gamma_m == 0.0 || sw < g0 * g0 / p.gamma_m,
        })
    }

    /// Sideband-resolved phase-noise floor |α₀|²S_φ̇(ω_m)/2κ·(|Δ_op|/ω_m).
    pub fn phase_noise_floor(&self) -> f64 {
        let p = &self.params;
        p.photon_number() * self.s(p.omega_m) / (2.0 * p.kappa) * p.optimal_detuning().abs() / p.omega_m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{NoiseModel, SystemParams};

    #[test]
    fn noiseless_limit_is_exact() {
        for k in [0.01, 0.1, 0.5] {
            let p = SystemParams::at_optimal_detuning(1.0, k, 1e-5, 100.0).unwrap();
            let c = Analytic::new(&p, &NoiseModel::none()).unwrap().cooling_limits().unwrap();
            assert!((c.n0 - p.n0_noiseless()).abs() < 1e-13 * p.n0_noiseless().max(1e-3));
            assert!((c.w - p.w0()).abs() < 1e-12 * p.w0());
            assert!(c.optimal_photon_number.is_none());
            assert!(c.ground_state_possible);
        }
    }

    #[test]
    fn components_recombine() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.05, 1e-5, 1e4).unwrap().with_gamma_m(1e-9).unwrap();
        let a = Analytic::new(&p, &NoiseModel::parametric(5e-4, 0.3).unwrap()).unwrap();
        let c = a.cooling_limits().unwrap();
        let sb = a.s_total(-1.0).unwrap();
        assert!(((c.breakdown.stokes + c.breakdown.phase_noise) - sb / c.w).abs() < 1e-12 * c.n0);
        assert!(c.w > 0.0);
        // the intensity-noise term is the one the sideband-resolved floor predicts
        let floor = a.phase_noise_floor();
        assert!((c.breakdown.phase_noise - floor).abs() < 0.02 * floor);
    }

    #[test]
    fn toy_model_floor() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.01, 1e-7, 1e6).unwrap();
        let (gl, gc) = (1e-4, 0.5);
        let a = Analytic::new(&p, &NoiseModel::parametric(gl, gc).unwrap()).unwrap();
        let expect = 1e6 * gl / 0.01 * gc * gc / (gc * gc + 1.0);
        let c = a.cooling_limits().unwrap();
        let three = c.n0_three_term - 0.01f64.powi(2) / 4.0;
        assert!((three - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn optimum_minimises_three_term_estimate() {
        let base = SystemParams::at_optimal_detuning(1.0, 0.01, 1e-5, 1.0).unwrap().with_gamma_m(1e-8).unwrap();
        let noise = NoiseModel::parametric(1e-6, 0.3).unwrap();
        let at = |n: f64| {
            let p = base.clone().with_photon_number(n).unwrap();
            Analytic::new(&p, &noise).unwrap().forced().cooling_limits().unwrap()
        };
        let c = at(1.0);
        let nopt = c.optimal_photon_number.unwrap();
        let best = at(nopt).n0_three_term;
        assert!((best - c.n0_min.unwrap()).abs() < 1e-12 * best);
        assert!(at(1.1 * nopt).n0_three_term > best);
        assert!(at(0.9 * nopt).n0_three_term > best);
        assert!(!at(nopt).ground_state_possible || noise.spectrum_at(1.0) < 1e-10 / 1e-8);
    }

    #[test]
    fn scaling_with_photon_number() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.01, 1e-6, 1e4).unwrap();
        let noise = NoiseModel::parametric(1e-4, 0.2).unwrap();
        let a = Analytic::new(&p, &noise).unwrap();
        let b = Analytic::new(&p.clone().with_photon_number(4e4).unwrap(), &noise).unwrap();
        let r = b.phase_noise_floor() / a.phase_noise_floor();
        assert!((r - 4.0).abs() < 1e-12);
        let r = b.s_n(1.0).unwrap() / a.s_n(1.0).unwrap();
        assert!((r - 16.0).abs() < 1e-12);
    }
}
