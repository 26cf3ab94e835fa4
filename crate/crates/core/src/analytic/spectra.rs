use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{around, conversion_denominator, finite, Analytic};
use crate::error::Result;
use crate::params::Regime;
use crate::quad::integrate_to_infinity;
use crate::spectrum::SpectrumResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sideband {
    /// ω = +ω_m, the cooling transition.
    Red,
    /// ω = −ω_m, the heating (Stokes) transition.
    Blue,
}

impl Analytic {
    /// S_A(ω) to first order in S_φ̇, by quadrature of the expanded field
    /// correlation:
    ///
    /// S_A = 2g₀²E₀² Re{ |Ĥ₀|²/p − ∫dΩ/2π S(Ω)/Ω² [|Ĥ₀|²/p − |Ĥ(Ω)|²/(p − iΩ)] }
    ///
    /// with Ĥ(Ω) = 1/(κ − iΔ − iΩ) and p = κ − i(Δ + ω).
    pub fn s_a(&self, omega: f64) -> Result<f64> {
        self.require("s_a", &[Regime::SmallPhase])?;
        let p = &self.params;
        let (k, d) = (p.kappa, p.delta);
        let pp = Complex64::new(k, -(d + omega));
        let h0 = 1.0 / (k * k + d * d);
        let correction = if self.noise.is_zero() {
            0.0
        } else {
            let branch = |w: f64| -> f64 {
                let hw = 1.0 / (k * k + (d + w) * (d + w));
                let bracket = h0 / pp - hw / (pp - Complex64::new(0.0, w));
                (bracket / (w * w)).re
            };
            let floor = 1e-7 * k.min(p.omega_m);
            let f = |w: f64| {
                let w = w.max(floor);
                self.s(w) * (branch(w) + branch(-w))
            };
            let mut breaks = around(&[d, d + omega, d - omega, omega], k, &[1.0, 3.0, 10.0]);
            breaks.push(k);
            breaks.extend(self.noise_breaks());
            integrate_to_infinity(f, 0.0, &breaks, self.tol) / (2.0 * PI)
        };
        let e2 = p.photon_number() * (k * k + d * d);
        let v = 2.0 * p.g0 * p.g0 * e2 * ((h0 / pp).re - correction);
        finite("s_a", v)
    }

    /// Sideband-resolved closed forms, in the form quoted for the red and blue
    /// sidebands:
    /// red  W₀·[1 − ∫dΩ/2π S(Ω)/(κ² + Ω²)],
    /// blue W₀·[κ²/4ω_m² + (κ/18ω_m²)(S(ω_m) + S(2ω_m)/4)].
    pub fn s_a_sideband(&self, side: Sideband) -> Result<f64> {
        self.require("s_a_sideband", &[Regime::SmallPhase, Regime::SidebandResolved])?;
        let p = &self.params;
        let (k, w) = (p.kappa, p.omega_m);
        let w0 = p.w0();
        let v = match side {
            Sideband::Red => {
                let integral = if self.noise.is_zero() {
                    0.0
                } else {
                    let mut breaks = vec![k, 3.0 * k, 10.0 * k];
                    breaks.extend(self.noise_breaks());
                    2.0 * integrate_to_infinity(|x| self.s(x) / (k * k + x * x), 0.0, &breaks, self.tol) / (2.0 * PI)
                };
                w0 * (1.0 - integral)
            }
            Sideband::Blue => w0 * (k * k / (4.0 * w * w) + k / (18.0 * w * w) * (self.s(w) + self.s(2.0 * w) / 4.0)),
        };
        finite("s_a_sideband", v)
    }

    /// S_N(ω) = g₀²|α₀|⁴·4Δ²S(ω)/(Δ⁴ + 2Δ²(κ² − ω²) + (κ² + ω²)²).
    pub fn s_n(&self, omega: f64) -> Result<f64> {
        self.require("s_n", &[Regime::SmallPhase])?;
        Ok(self.s_n_unchecked(omega))
    }

    pub(crate) fn s_n_unchecked(&self, omega: f64) -> f64 {
        let p = &self.params;
        let n = p.photon_number();
        p.g0 * p.g0 * n * n * 4.0 * p.delta * p.delta * self.s(omega)
            / conversion_denominator(p.delta, p.kappa, omega)
    }

    /// Total first-order spectrum S_A + S_N.
    pub fn s_total(&self, omega: f64) -> Result<f64> {
        Ok(self.s_a(omega)? + self.s_n(omega)?)
    }

    pub fn s_a_curve(&self, omegas: &[f64]) -> Result<SpectrumResult> {
        let v = omegas.iter().map(|&w| self.s_a(w)).collect::<Result<Vec<_>>>()?;
        Ok(SpectrumResult::analytic(omegas.to_vec(), v))
    }

    pub fn s_n_curve(&self, omegas: &[f64]) -> Result<SpectrumResult> {
        let v = omegas.iter().map(|&w| self.s_n(w)).collect::<Result<Vec<_>>>()?;
        Ok(SpectrumResult::analytic(omegas.to_vec(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{NoiseModel, SystemParams};

    fn resolved(n: f64) -> SystemParams {
        SystemParams::at_optimal_detuning(1.0, 0.05, 1e-4, n).unwrap()
    }

    #[test]
    fn noiseless_s_a_is_cavity_lorentzian() {
        let p = resolved(1e4);
        let a = Analytic::new(&p, &NoiseModel::none()).unwrap();
        for w in [-1.0, -0.3, 0.0, 0.9, 1.0, 1.2] {
            let expect = 2.0 * 1e-8 * 1e4 * p.kappa / (p.kappa.powi(2) + (p.delta + w).powi(2));
            assert!((a.s_a(w).unwrap() - expect).abs() < 1e-12 * expect);
        }
        // red sideband equals W₀ and the noiseless occupancy is exact
        let (r, b) = (a.s_a(1.0).unwrap(), a.s_a(-1.0).unwrap());
        assert!(((r - b) - p.w0()).abs() < 1e-12 * p.w0());
        assert!((b / (r - b) - p.n0_noiseless()).abs() < 1e-12);
    }

    #[test]
    fn red_sideband_quadrature_matches_closed_form() {
        let p = resolved(1e4);
        for noise in [NoiseModel::white(5e-4).unwrap(), NoiseModel::parametric(5e-4, 0.02).unwrap()] {
            let a = Analytic::new(&p, &noise).unwrap();
            let q = a.s_a(p.omega_m).unwrap() / p.w0();
            let c = a.s_a_sideband(Sideband::Red).unwrap() / p.w0();
            // both are first order; they differ at O(κ²/ω_m²) and O((Γ_L/κ)κ/ω_m)
            assert!((q - c).abs() < 5e-3, "{q} vs {c}");
        }
    }

    #[test]
    fn white_noise_red_sideband_is_one_minus_ratio() {
        let p = resolved(1e4);
        let a = Analytic::new(&p, &NoiseModel::white(2e-3).unwrap()).unwrap();
        let c = a.s_a_sideband(Sideband::Red).unwrap() / p.w0();
        assert!((c - (1.0 - 2e-3 / 0.05)).abs() < 1e-7);
    }

    #[test]
    fn s_n_optimal_detuning_shortcut() {
        let p = resolved(1e4);
        let noise = NoiseModel::parametric(1e-3, 0.3).unwrap();
        let a = Analytic::new(&p, &noise).unwrap();
        let expect = p.g0.powi(2) * 1e8 * noise.spectrum_at(1.0) / p.kappa.powi(2);
        assert!((a.s_n(1.0).unwrap() - expect).abs() < 1e-12 * expect);
        assert_eq!(a.s_n(0.7).unwrap(), a.s_n(-0.7).unwrap());
        let on_resonance = Analytic::new(&p.clone().with_delta(0.0).unwrap(), &noise).unwrap();
        assert_eq!(on_resonance.s_n(1.0).unwrap(), 0.0);
    }

    #[test]
    fn regime_is_enforced_unless_forced() {
        let p = resolved(1e4);
        let noisy = NoiseModel::white(0.02).unwrap();
        let a = Analytic::new(&p, &noisy).unwrap();
        assert!(a.s_a(1.0).is_err());
        assert!(a.clone().forced().s_a(1.0).is_ok());
    }
}
