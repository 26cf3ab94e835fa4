use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

/// Sampled spectral density with per-point standard errors (zero for
/// closed-form curves).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub method: Method,
}

impl SpectrumResult {
    pub fn analytic(omegas: Vec<f64>, values: Vec<f64>) -> Self {
        let errors = vec![0.0; values.len()];
        SpectrumResult {
            omegas,
            values,
            errors,
            method: Method::Analytic,
        }
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    /// Index of the grid point closest to `omega`.
    pub fn nearest(&self, omega: f64) -> usize {
        self.omegas
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - omega).abs().total_cmp(&(b.1 - omega).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }

    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "omega_rad_s,value,error")?;
        for ((o, v), e) in self.omegas.iter().zip(&self.values).zip(&self.errors) {
            writeln!(w, "{o:.17e},{v:.17e},{e:.17e}")?;
        }
        Ok(())
    }
}
