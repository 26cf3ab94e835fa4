//! Closed-form and quadrature evaluation of the phase-noise spectra, cooling
//! limits and fidelity estimates, as functions of (SystemParams, NoiseModel).
//!
//! All results are first order in Γ_L/κ. Operations check their regime of
//! validity and fail with [`Error::Regime`] unless the evaluator is forced.

mod cooling;
mod fidelity;
mod spectra;
mod strong;

pub use cooling::{CoolingBreakdown, CoolingResult};
pub use fidelity::{CumulantTerms, ErrorBudget, LowFrequencyDephasing};
pub use spectra::Sideband;
pub use strong::{StrongCoolingLimit, TwoTermSpectrum};

use crate::error::{Error, Result};
use crate::params::{validate, NoiseModel, Regime, SystemParams, ValidationReport};
use crate::quad::Tolerance;

/// Evaluator bound to one parameter set and noise model.
#[derive(Clone, Debug)]
pub struct Analytic {
    pub params: SystemParams,
    pub noise: NoiseModel,
    pub report: ValidationReport,
    force: bool,
    tol: Tolerance,
}

impl Analytic {
    pub fn new(params: &SystemParams, noise: &NoiseModel) -> Result<Self> {
        let report = validate(params, noise)?;
        Ok(Analytic {
            params: params.clone(),
            noise: noise.clone(),
            report,
            force: false,
            tol: Tolerance {
                max_intervals: 20_000,
                ..Tolerance::default()
            },
        })
    }

    /// Evaluate even outside the regime of validity.
    pub fn forced(mut self) -> Self {
        self.force = true;
        self
    }

    pub fn is_forced(&self) -> bool {
        self.force
    }

    pub(crate) fn require(&self, op: &'static str, regimes: &[Regime]) -> Result<()> {
        if self.force {
            Ok(())
        } else {
            self.report.require(op, regimes)
        }
    }

    fn s(&self, omega: f64) -> f64 {
        self.noise.spectrum_at(omega)
    }

    /// Positive frequencies where the noise spectrum changes shape.
    fn noise_breaks(&self) -> Vec<f64> {
        self.noise.features()
    }
}

/// Δ⁴ + 2Δ²(κ² − ω²) + (κ² + ω²)², the cavity's phase-to-intensity
/// conversion denominator.
pub fn conversion_denominator(delta: f64, kappa: f64, omega: f64) -> f64 {
    let d2 = delta * delta;
    let k2 = kappa * kappa;
    let w2 = omega * omega;
    d2 * d2 + 2.0 * d2 * (k2 - w2) + (k2 + w2) * (k2 + w2)
}

/// Breakpoints a ± k·width for k in `multiples`, keeping the positive ones.
pub(crate) fn around(centres: &[f64], width: f64, multiples: &[f64]) -> Vec<f64> {
    let mut v = Vec::new();
    for &c in centres {
        v.push(c.abs());
        for &m in multiples {
            v.push(c.abs() + m * width);
            v.push(c.abs() - m * width);
        }
    }
    v.retain(|x| *x > 0.0 && x.is_finite());
    v
}

pub(crate) fn finite(op: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{op}: non-finite result")))
    }
}
