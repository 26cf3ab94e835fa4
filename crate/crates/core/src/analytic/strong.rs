use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::{around, conversion_denominator, finite, Analytic};
use crate::error::Result;
use crate::params::Regime;
use crate::quad::integrate_to_infinity;

/// S_N at the complex frequency ω_± + iκ/2, by the κ → 0 closed form and by
/// the finite-κ quadrature.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TwoTermSpectrum {
    pub omega_mode: f64,
    /// g₀²|α₀|⁴·4ω_m²S(ω_±)/(ω_±² − ω_m²)², noise at the mode frequency.
    pub mode_term: f64,
    /// g₀²|α₀|⁴·S(ω_m)/(2(ω_± − ω_m)²), cavity-enhanced noise at ω_m.
    pub cavity_term: f64,
    pub closed_form: f64,
    pub quadrature: f64,
    /// S_φ̇ varies by less than 10% over [ω − κ, ω + κ] at ω_m and ω_±.
    pub flat: bool,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StrongCoolingLimit {
    pub upper: TwoTermSpectrum,
    pub lower: TwoTermSpectrum,
    /// S_N(ω_± + iκ/2)/κ from the closed form.
    pub n_plus: f64,
    pub n_minus: f64,
    pub n_tot: f64,
    /// Same, from the finite-κ quadrature.
    pub n_tot_quadrature: f64,
    /// |α₀|²[S(ω_m) + S(ω_+) + S(ω_−)]/κ.
    pub n_tot_bound: f64,
    /// Relaxation rate of the total excitation number.
    pub decay_rate: f64,
}

impl Analytic {
    fn flat_near(&self, omega: f64) -> bool {
        let k = self.params.kappa;
        let c = self.s(omega);
        let (lo, hi) = (self.s(omega - k), self.s(omega + k));
        let spread = c.max(lo).max(hi) - c.min(lo).min(hi);
        spread <= 0.1 * c.abs() || (c == 0.0 && spread == 0.0)
    }

    /// Heating spectrum of normal mode `upper` (ω_+) or lower (ω_−).
    pub fn s_n_complex(&self, upper: bool) -> Result<TwoTermSpectrum> {
        self.require("s_n_complex", &[Regime::StrongCoupling, Regime::SmallPhase])?;
        let p = &self.params;
        let (w, k) = (p.omega_m, p.kappa);
        let (wp, wm) = p.normal_mode_frequencies();
        let wx = if upper { wp } else { wm };
        let pref = p.g0 * p.g0 * p.photon_number().powi(2);
        let mode_term = pref * 4.0 * w * w * self.s(wx) / (wx * wx - w * w).powi(2);
        let cavity_term = pref * self.s(w) / (2.0 * (wx - w).powi(2));
        let quadrature = if self.noise.is_zero() {
            0.0
        } else {
            let d = p.delta;
            let lor = |x: f64| 4.0 * k / (k * k + 4.0 * (x - wx) * (x - wx));
            let conv = |x: f64| 4.0 * d * d / conversion_denominator(d, k, x);
            let f = |x: f64| self.s(x) * conv(x) * (lor(x) + lor(-x));
            let mut breaks = around(&[w, wx, d.abs()], k, &[0.5, 2.0, 10.0, 50.0]);
            breaks.extend(self.noise_breaks());
            pref * integrate_to_infinity(f, 0.0, &breaks, self.tol) / (2.0 * PI)
        };
        let flat = self.flat_near(w) && self.flat_near(wx);
        let mut warnings = Vec::new();
        if !flat {
            warnings.push(format!(
                "noise spectrum is not flat on the scale kappa near omega_m or {:.6e}; closed form {:.6e} vs quadrature {:.6e}",
                wx,
                mode_term + cavity_term,
                quadrature
            ));
        }
        Ok(TwoTermSpectrum {
            omega_mode: wx,
            mode_term,
            cavity_term,
            closed_form: finite("s_n_complex", mode_term + cavity_term)?,
            quadrature: finite("s_n_complex", quadrature)?,
            flat,
            warnings,
        })
    }

    pub fn strong_cooling_limit(&self) -> Result<StrongCoolingLimit> {
        self.require("strong_cooling_limit", &[Regime::StrongCoupling, Regime::SmallPhase])?;
        let p = &self.params;
        let k = p.kappa;
        let upper = self.s_n_complex(true)?;
        let lower = self.s_n_complex(false)?;
        let (n_plus, n_minus) = (upper.closed_form / k, lower.closed_form / k);
        let n_tot_bound = p.photon_number()
            * (self.s(p.omega_m) + self.s(upper.omega_mode) + self.s(lower.omega_mode))
            / k;
        Ok(StrongCoolingLimit {
            n_tot_quadrature: (upper.quadrature + lower.quadrature) / k,
            upper,
            lower,
            n_plus,
            n_minus,
            n_tot: n_plus + n_minus,
            n_tot_bound,
            decay_rate: k,
        })
    }

    /// D(t) = {|c_a(t)|²}: the cavity displacement accumulated from intensity
    /// fluctuations by the normal modes,
    /// 2∫dΩ/2π S_N(Ω)|∫₀ᵗ e^{i(ω_m−Ω)u}e^{−κu/2}sin(|G|u)du|².
    pub fn displacement_variance(&self, t: f64) -> Result<f64> {
        self.require("displacement_variance", &[Regime::StrongCoupling, Regime::SmallPhase])?;
        if self.noise.is_zero() || t <= 0.0 {
            return Ok(0.0);
        }
        let p = &self.params;
        let (w, k, g) = (p.omega_m, p.kappa, p.coupling());
        let kernel = |x: f64| -> f64 {
            let term = |s: f64| {
                let z = Complex64::new(-0.5 * k, w - x + s * g);
                ((z * t).exp() - 1.0) / z
            };
            ((term(1.0) - term(-1.0)) / Complex64::new(0.0, 2.0)).norm_sqr()
        };
        let f = |x: f64| self.s_n_unchecked(x) * (kernel(x) + kernel(-x));
        let mut breaks = around(&[w, w + g, w - g], k, &[0.5, 2.0, 10.0]);
        breaks.extend(around(&[w], 2.0 * PI / t, &[1.0, 2.0, 4.0, 8.0]));
        breaks.extend(self.noise_breaks());
        finite("displacement_variance", 2.0 * integrate_to_infinity(f, 0.0, &breaks, self.tol) / (2.0 * PI))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{NoiseModel, SystemParams};

    fn strong(n: f64) -> SystemParams {
        // G = 0.1, κ = G/20 at n = 100
        SystemParams::new(1.0, 0.005, 0.01, -1.0, crate::params::Drive::PhotonNumber(n)).unwrap()
    }

    #[test]
    fn noiseless_strong_limit_is_zero() {
        let a = Analytic::new(&strong(100.0), &NoiseModel::none()).unwrap();
        let s = a.strong_cooling_limit().unwrap();
        assert_eq!(s.n_tot, 0.0);
        assert_eq!(s.n_tot_quadrature, 0.0);
        assert_eq!(s.decay_rate, 0.005);
    }

    #[test]
    fn flat_noise_gives_three_equal_terms() {
        let p = strong(100.0);
        let a = Analytic::new(&p, &NoiseModel::white(5e-5).unwrap()).unwrap();
        let s = a.strong_cooling_limit().unwrap();
        let bound = 100.0 * 3.0 * 1e-4 / 0.005;
        assert!((s.n_tot_bound - bound).abs() < 1e-12 * bound);
        // ω_± differs from ω_m ± G at O(G/ω_m)
        assert!((s.n_tot - bound).abs() < 0.1 * bound, "{} vs {bound}", s.n_tot);
        assert!((s.n_tot_quadrature - s.n_tot).abs() < 0.1 * s.n_tot, "{} vs {}", s.n_tot_quadrature, s.n_tot);
    }

    #[test]
    fn term_ratio_in_small_coupling_limit() {
        let p = SystemParams::new(1.0, 1e-4, 1e-3, -1.0, crate::params::Drive::PhotonNumber(100.0)).unwrap();
        let noise = NoiseModel::parametric(1e-6, 0.5).unwrap();
        let a = Analytic::new(&p, &noise).unwrap();
        for upper in [true, false] {
            let t = a.s_n_complex(upper).unwrap();
            let ratio = t.mode_term / t.cavity_term;
            let expect = 2.0 * noise.spectrum_at(t.omega_mode) / noise.spectrum_at(1.0);
            assert!((ratio - expect).abs() < 0.03 * expect, "{ratio} vs {expect}");
        }
    }

    #[test]
    fn n_tot_scales_with_photon_number() {
        let noise = NoiseModel::white(1e-6).unwrap();
        let a = Analytic::new(&strong(100.0), &noise).unwrap().strong_cooling_limit().unwrap();
        let b = Analytic::new(&strong(400.0), &noise).unwrap().forced().strong_cooling_limit().unwrap();
        assert!((b.n_tot_bound / a.n_tot_bound - 4.0).abs() < 1e-12);
    }
}
