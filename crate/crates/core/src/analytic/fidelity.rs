use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use super::{finite, Analytic};
use crate::error::Result;
use crate::params::Regime;
use crate::quad::integrate_points;

/// Two-term error estimate for a full photon–phonon oscillation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorBudget {
    /// πκ/(g₀|α₀|).
    pub epsilon_loss: f64,
    /// 8|α₀|²S_φ̇(ω_m)/κ.
    pub epsilon_noise: f64,
    pub epsilon_total: f64,
    /// |α₀| minimising the sum: |α₀|³ = πκ²/(16g₀S_φ̇(ω_m)). `None` without noise.
    pub alpha_opt: Option<f64>,
    pub epsilon_opt: Option<f64>,
    /// ∛(κS_φ̇(ω_m)/g₀²), the scaling of the optimum without its prefactor.
    pub epsilon_scaling: f64,
    /// S_φ̇(ω_m) < g₀²/κ.
    pub coherent_dynamics_possible: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowFrequencyDephasing {
    pub t: f64,
    /// Dephasing from the fluctuating normal-mode splitting.
    pub w_t: f64,
    /// Non-adiabatic transitions between the normal modes.
    pub r_t: f64,
    pub fidelity: f64,
    /// (|G|²/ω_m²)S_φ̇(0)·t.
    pub w_bound: f64,
    /// ¼S_φ̇(|G|)·t.
    pub r_bound: f64,
    pub warnings: Vec<String>,
}

/// Second-order cumulant exponent M̄(t) = ½[[W+R+iI, −X*], [X, W+R−iI]].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CumulantTerms {
    pub w_t: f64,
    pub r_t: f64,
    /// Frequency-shift term, the imaginary part of the R integral.
    pub i_t: f64,
    /// Cross term using {δω(t)θ̇(t')} ≈ (|G|/ω_m){φ̇(t)φ̇(t')}.
    pub x_t: Complex64,
}

/// 4sin²(xt/2)/x², evaluated stably near x = 0.
fn sinc_kernel(x: f64, t: f64) -> f64 {
    let h = 0.5 * x * t;
    if h.abs() < 1e-4 {
        t * t * (1.0 - h * h / 3.0)
    } else {
        let s = h.sin();
        4.0 * s * s / (x * x)
    }
}

/// 2(xt − sin xt)/x².
fn shift_kernel(x: f64, t: f64) -> f64 {
    let y = x * t;
    if y.abs() < 1e-3 {
        t * t * y / 3.0 * (1.0 - y * y / 20.0)
    } else {
        2.0 * (y - y.sin()) / (x * x)
    }
}

/// Breakpoints on [lo, hi]: every kernel period 2π/t within 200 periods of
/// each centre, plus the extra points.
fn oscillation_points(lo: f64, hi: f64, centres: &[f64], t: f64, extra: &[f64]) -> Vec<f64> {
    let period = 2.0 * PI / t;
    let mut pts = vec![lo, hi];
    for &c in centres {
        for k in -200i32..=200 {
            pts.push(c + k as f64 * period);
        }
    }
    pts.extend_from_slice(extra);
    pts.retain(|x| *x >= lo && *x <= hi);
    pts
}

impl Analytic {
    /// F₀(t) = exp(−|1 + cos(|G|t)e^{−κt/2}|²).
    pub fn fidelity_noiseless(&self, t: f64) -> Result<f64> {
        self.require("fidelity_noiseless", &[Regime::StrongCoupling])?;
        let p = &self.params;
        let c = 1.0 + (p.coupling() * t).cos() * (-0.5 * p.kappa * t).exp();
        Ok((-c * c).exp())
    }

    /// The quoted full-oscillation estimate F₀(t_r) ≈ exp(−π²κ²/|G|²).
    pub fn fidelity_noiseless_quoted(&self) -> f64 {
        let r = self.params.kappa / self.params.coupling();
        (-PI * PI * r * r).exp()
    }

    /// Return time t_r = π/|G|.
    pub fn return_time(&self) -> f64 {
        PI / self.params.coupling()
    }

    pub fn fidelity_error_budget(&self) -> Result<ErrorBudget> {
        self.require("fidelity_error_budget", &[Regime::StrongCoupling])?;
        let p = &self.params;
        let (k, g0) = (p.kappa, p.g0);
        let sw = self.s(p.omega_m);
        let eps = |a: f64| (PI * k / (g0 * a), 8.0 * a * a * sw / k);
        let amp = p.photon_number().sqrt();
        let (loss, noise) = eps(amp);
        let alpha_opt = (sw > 0.0).then(|| (PI * k * k / (16.0 * g0 * sw)).cbrt());
        let epsilon_opt = alpha_opt.map(|a| {
            let (l, n) = eps(a);
            l + n
        });
        Ok(ErrorBudget {
            epsilon_loss: loss,
            epsilon_noise: noise,
            epsilon_total: loss + noise,
            alpha_opt,
            epsilon_opt,
            epsilon_scaling: (k * sw / (g0 * g0)).cbrt(),
            coherent_dynamics_possible: sw < g0 * g0 / k,
        })
    }

    /// Noise fraction above ω_m/2; `None` if the total power diverges.
    fn high_frequency_fraction(&self) -> Option<f64> {
        let w = self.params.omega_m;
        let total = self.noise.variance();
        if !total.is_finite() {
            return None;
        }
        if total == 0.0 {
            return Some(0.0);
        }
        let mut pts = vec![0.0, 0.5 * w];
        pts.extend(self.noise_breaks().into_iter().filter(|&x| x < 0.5 * w));
        let low = 2.0 * integrate_points(|x| self.s(x), &pts, self.tol) / (2.0 * PI);
        Some(((total - low) / total).max(0.0))
    }

    /// W(t) ≈ (g₀²|α₀|²/ω_m²)∫_{|Ω|<ω_m} dΩ/2π · 4sin²(Ωt/2)/Ω² · S_φ̇(Ω).
    fn w_integral(&self, t: f64) -> f64 {
        let p = &self.params;
        let w = p.omega_m;
        let pts = oscillation_points(0.0, w, &[0.0], t, &self.noise_breaks());
        let half = integrate_points(|x| sinc_kernel(x, t) * self.s(x), &pts, self.tol);
        p.coupling().powi(2) / (w * w) * 2.0 * half / (2.0 * PI)
    }

    /// ∫_{|Ω|<ω_m} dΩ/2π · ¼S_φ̇(Ω) · kernel(Ω − |G|), θ̇ taken as φ̇/2.
    fn transition_integral(&self, t: f64, kernel: impl Fn(f64, f64) -> f64) -> f64 {
        let p = &self.params;
        let (w, g) = (p.omega_m, p.coupling());
        let mut extra: Vec<f64> = self.noise_breaks();
        extra.extend(extra.clone().iter().map(|x| -x));
        extra.push(0.0);
        let pts = oscillation_points(-w, w, &[g], t, &extra);
        integrate_points(|x| 0.25 * self.s(x) * kernel(x - g, t), &pts, self.tol) / (2.0 * PI)
    }

    pub fn low_frequency_dephasing(&self, t: f64) -> Result<LowFrequencyDephasing> {
        self.require("low_frequency_dephasing", &[Regime::StrongCoupling])?;
        let p = &self.params;
        let mut warnings = Vec::new();
        match self.high_frequency_fraction() {
            Some(f) if f >= 0.1 => warnings.push(format!(
                "{:.1}% of the noise power lies above omega_m/2; low-frequency treatment is approximate",
                100.0 * f
            )),
            None => warnings.push("noise power diverges (white spectrum); low-frequency treatment is approximate".into()),
            _ => {}
        }
        let (w_t, r_t) = if self.noise.is_zero() || t <= 0.0 {
            (0.0, 0.0)
        } else {
            (self.w_integral(t), self.transition_integral(t, sinc_kernel))
        };
        let g = p.coupling();
        let c = 1.0 + (g * t).cos() * (-0.5 * p.kappa * t).exp() * (-0.5 * (w_t + r_t)).exp();
        Ok(LowFrequencyDephasing {
            t,
            w_t: finite("low_frequency_dephasing", w_t)?,
            r_t: finite("low_frequency_dephasing", r_t)?,
            fidelity: (-c * c).exp(),
            w_bound: g * g / (p.omega_m * p.omega_m) * self.s(0.0) * t,
            r_bound: 0.25 * self.s(g) * t,
            warnings,
        })
    }

    /// All cumulant terms, including the shift I(t) and cross term X(t) that
    /// the default fidelity omits.
    pub fn cumulant_terms(&self, t: f64) -> Result<CumulantTerms> {
        self.require("cumulant_terms", &[Regime::StrongCoupling])?;
        if self.noise.is_zero() || t <= 0.0 {
            return Ok(CumulantTerms { w_t: 0.0, r_t: 0.0, i_t: 0.0, x_t: Complex64::new(0.0, 0.0) });
        }
        let p = &self.params;
        let (w, g) = (p.omega_m, p.coupling());
        let i_t = self.transition_integral(t, shift_kernel);
        // K(Ω) = [E(G) − E(Ω)]/(i(Ω−G)) − [E(G) − E(G+Ω)]/(iΩ), E(y) = ∫₀ᵗe^{−iys}ds
        let e = |y: f64| {
            if (y * t).abs() < 1e-6 {
                Complex64::new(t, -0.5 * y * t * t)
            } else {
                (Complex64::new(1.0, 0.0) - Complex64::new(0.0, -y * t).exp()) / Complex64::new(0.0, y)
            }
        };
        let eps = 1e-6 / t;
        let k_of = |x: f64| {
            let x = if (x - g).abs() < eps { g + eps } else { x };
            let x = if x.abs() < eps { eps } else { x };
            let i = Complex64::new(0.0, 1.0);
            (e(g) - e(x)) / (i * (x - g)) - (e(g) - e(g + x)) / (i * x)
        };
        let mut extra: Vec<f64> = self.noise_breaks();
        extra.extend(extra.clone().iter().map(|x| -x));
        let pts = oscillation_points(-w, w, &[0.0, g, -g], t, &extra);
        let re = integrate_points(|x| self.s(x) * k_of(x).re, &pts, self.tol);
        let im = integrate_points(|x| self.s(x) * k_of(x).im, &pts, self.tol);
        let x_t = 2.0 * g / w * Complex64::new(re, im) / (2.0 * PI);
        Ok(CumulantTerms {
            w_t: self.w_integral(t),
            r_t: self.transition_integral(t, sinc_kernel),
            i_t,
            x_t,
        })
    }

    /// Noise-averaged cavity amplitude {c_aa(t)} from the cumulant expansion,
    /// in the frame rotating at the mean normal-mode frequency.
    pub fn cumulant_caa(&self, t: f64, with_shift_and_cross: bool) -> Result<Complex64> {
        let terms = self.cumulant_terms(t)?;
        let p = &self.params;
        let (wp, wm) = p.normal_mode_frequencies();
        let half_split = 0.5 * (wp - wm);
        let damp = (-0.5 * p.kappa * t).exp();
        let d = Complex64::new(terms.w_t + terms.r_t, 0.0);
        let (i_t, x_t) = if with_shift_and_cross {
            (terms.i_t, terms.x_t)
        } else {
            (0.0, Complex64::new(0.0, 0.0))
        };
        // M̄ = ½(d·1 + B) with B = [[iI, −X*], [X, −iI]] traceless, so
        // B² = μ²·1 with μ² = −(I² + |X|²)
        let b11 = Complex64::new(0.0, i_t);
        let b12 = -x_t.conj();
        let b21 = x_t;
        let mu = (b11 * b11 + b12 * b21).sqrt();
        let (ch, sh_over) = if mu.norm() < 1e-12 {
            (Complex64::new(1.0, 0.0), Complex64::new(-0.5, 0.0))
        } else {
            let z = 0.5 * mu;
            (z.cosh(), -z.sinh() / mu)
        };
        // exp(−½B) = cosh(μ/2)·1 − sinh(μ/2)/μ·B
        let m11 = ch + sh_over * b11;
        let m12 = sh_over * b12;
        let m21 = sh_over * b21;
        let m22 = ch - sh_over * b11;
        let pre = (-0.5 * d).exp() * damp;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a_p, a_m) = (s, -s);
        let up = pre * (m11 * a_p + m12 * a_m) * Complex64::from_polar(1.0, -half_split * t);
        let lo = pre * (m21 * a_p + m22 * a_m) * Complex64::from_polar(1.0, half_split * t);
        Ok((up - lo) * s)
    }
}
