//! Measured photocurrent noise to intensity-noise and frequency-noise spectra,
//! via S_N(ω)/W₀ = ½[S_I(ω)/S_sn − 1] and the inverse of the phase-to-intensity
//! conversion S_N = g₀²|α₀|⁴·4Δ²S_φ̇/(Δ⁴ + 2Δ²(κ² − ω²) + (κ² + ω²)²).

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{conversion_denominator, Analytic};
use crate::error::{Error, Result};
use crate::params::{NoiseModel, SpectrumTable, SystemParams};
use crate::spectrum::{Method, SpectrumResult};

/// Sub-shot-noise fraction of the band above which a warning is raised.
pub const SUB_SHOT_NOISE_FRACTION: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsdFormat {
    /// freq_hz, S_I/S_sn
    Csv2Col,
    /// freq_hz, S_I, S_sn
    Csv3Col,
}

impl FromStr for PsdFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv2col" => Ok(PsdFormat::Csv2Col),
            "csv3col" => Ok(PsdFormat::Csv3Col),
            _ => Err(Error::InvalidParameter(format!("unknown PSD format {s:?}; use csv2col or csv3col"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PsdMetadata {
    pub instrument: Option<String>,
    pub resolution_bandwidth_hz: Option<f64>,
}

/// Photocurrent noise spectrum on an angular-frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityPSD {
    /// rad/s, strictly increasing.
    pub omegas: Vec<f64>,
    pub s_i: Vec<f64>,
    pub s_sn: Vec<f64>,
    pub metadata: PsdMetadata,
}

impl IntensityPSD {
    pub fn new(omegas: Vec<f64>, s_i: Vec<f64>, s_sn: Vec<f64>, metadata: PsdMetadata) -> Result<Self> {
        if omegas.len() != s_i.len() || omegas.len() != s_sn.len() {
            return Err(Error::Format("PSD columns differ in length".into()));
        }
        if omegas.is_empty() {
            return Err(Error::Format("PSD has no rows".into()));
        }
        if omegas.windows(2).any(|w| w[1] <= w[0]) || omegas.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Format("PSD frequencies must be non-negative and strictly increasing".into()));
        }
        if s_i.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Format("S_I must be finite and non-negative".into()));
        }
        if s_sn.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Format("shot-noise level must be positive".into()));
        }
        Ok(IntensityPSD { omegas, s_i, s_sn, metadata })
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn ratio(&self, i: usize) -> f64 {
        self.s_i[i] / self.s_sn[i]
    }

    /// Write in `csv3col` form with a header.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        if let Some(i) = &self.metadata.instrument {
            writeln!(w, "# instrument: {i}")?;
        }
        if let Some(r) = self.metadata.resolution_bandwidth_hz {
            writeln!(w, "# rbw_hz: {r:e}")?;
        }
        writeln!(w, "freq_hz,s_i,s_sn")?;
        for i in 0..self.len() {
            writeln!(w, "{:.17e},{:.17e},{:.17e}", self.omegas[i] / TAU, self.s_i[i], self.s_sn[i])?;
        }
        Ok(())
    }
}

fn parse_meta(line: &str, meta: &mut PsdMetadata) {
    let body = line.trim_start_matches('#').trim();
    if let Some((k, v)) = body.split_once(':') {
        let v = v.trim();
        match k.trim() {
            "instrument" => meta.instrument = Some(v.to_string()),
            "rbw_hz" | "resolution_bandwidth_hz" => meta.resolution_bandwidth_hz = v.parse().ok(),
            _ => {}
        }
    }
}

/// Parse PSD text. Lines starting with `#` are comments (`# instrument: …`
/// and `# rbw_hz: …` are kept as metadata); a first non-numeric row is
/// taken as a header.
pub fn parse_psd(text: &str, format: PsdFormat) -> Result<IntensityPSD> {
    let cols = match format {
        PsdFormat::Csv2Col => 2,
        PsdFormat::Csv3Col => 3,
    };
    let mut meta = PsdMetadata::default();
    let (mut w, mut si, mut sn) = (Vec::new(), Vec::new(), Vec::new());
    let mut seen_data = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_meta(line, &mut meta);
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        let nums = match nums {
            Ok(v) => v,
            Err(_) if !seen_data && fields.iter().all(|f| f.parse::<f64>().is_err()) => {
                seen_data = true;
                continue;
            }
            Err(e) => return Err(Error::Parse { line: line_no, msg: format!("{e} in {line:?}") }),
        };
        seen_data = true;
        if nums.len() != cols {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {cols} columns, found {}", nums.len()),
            });
        }
        if nums.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse { line: line_no, msg: "non-finite value".into() });
        }
        w.push(TAU * nums[0]);
        si.push(nums[1]);
        sn.push(if cols == 3 { nums[2] } else { 1.0 });
    }
    IntensityPSD::new(w, si, sn, meta)
}

pub fn load_psd(path: &Path, format: PsdFormat) -> Result<IntensityPSD> {
    parse_psd(&fs::read_to_string(path)?, format)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SnExtraction {
    pub spectrum: SpectrumResult,
    /// Points where S_I < S_sn, clipped to S_N = 0.
    pub clipped: Vec<f64>,
    pub clipped_fraction: f64,
    pub warnings: Vec<String>,
}

/// S_N(ω) = W₀·½(S_I/S_sn − 1), clipped at zero.
pub fn extract_sn(psd: &IntensityPSD, params: &SystemParams) -> Result<SnExtraction> {
    let w0 = params.w0();
    if !(w0 > 0.0 && w0.is_finite()) {
        return Err(Error::InvalidParameter("cooling rate W0 is not positive".into()));
    }
    let mut clipped = Vec::new();
    let values: Vec<f64> = (0..psd.len())
        .map(|i| {
            let v = 0.5 * w0 * (psd.ratio(i) - 1.0);
            if v < 0.0 {
                clipped.push(psd.omegas[i]);
                0.0
            } else {
                v
            }
        })
        .collect();
    let clipped_fraction = clipped.len() as f64 / psd.len() as f64;
    let mut warnings = vec![
        "the photocurrent relation assumes a strongly driven cavity and a calibrated shot-noise level; its validity band is not checked".to_string(),
    ];
    if clipped_fraction > SUB_SHOT_NOISE_FRACTION {
        warnings.push(format!(
            "S_I below shot noise on {:.1}% of the band: squeezed light or miscalibrated shot-noise level",
            100.0 * clipped_fraction
        ));
    }
    Ok(SnExtraction {
        spectrum: SpectrumResult {
            omegas: psd.omegas.clone(),
            values,
            errors: vec![0.0; psd.len()],
            method: Method::Analytic,
        },
        clipped,
        clipped_fraction,
        warnings,
    })
}

/// Conversion factor S_φ̇/S_N at ω.
fn inverse_gain(params: &SystemParams, omega: f64) -> f64 {
    let (d, n) = (params.delta, params.photon_number());
    conversion_denominator(d, params.kappa, omega) / (4.0 * params.g0 * params.g0 * n * n * d * d)
}

/// Invert the intensity-noise spectrum to S_φ̇ and return it with
/// propagated errors.
pub fn infer_phase_curve(sn: &SpectrumResult, params: &SystemParams) -> Result<SpectrumResult> {
    if params.delta == 0.0 {
        return Err(Error::InvalidParameter(
            "on resonance (delta = 0) intensity noise carries no phase-noise information".into(),
        ));
    }
    if params.photon_number() == 0.0 {
        return Err(Error::InvalidParameter("inversion needs a non-zero photon number".into()));
    }
    let gain: Vec<f64> = sn.omegas.iter().map(|&w| inverse_gain(params, w)).collect();
    Ok(SpectrumResult {
        omegas: sn.omegas.clone(),
        values: sn.values.iter().zip(&gain).map(|(v, g)| v * g).collect(),
        errors: sn.errors.iter().zip(&gain).map(|(e, g)| e * g).collect(),
        method: sn.method,
    })
}

/// Tabulated noise model from an intensity-noise spectrum.
pub fn infer_phase_spectrum(sn: &SpectrumResult, params: &SystemParams) -> Result<NoiseModel> {
    let c = infer_phase_curve(sn, params)?;
    let values = c.values.iter().map(|v| v.max(0.0)).collect();
    Ok(NoiseModel::tabulated(SpectrumTable::new(c.omegas, values)?))
}

/// Write a tabulated noise model as `omega_rad_s,s_phidot`.
pub fn write_noise_table(noise: &NoiseModel, mut w: impl Write) -> Result<()> {
    let NoiseModel::Tabulated { table } = noise else {
        return Err(Error::InvalidParameter("only tabulated models are written as tables".into()));
    };
    writeln!(w, "omega_rad_s,s_phidot")?;
    for (o, v) in table.omegas().iter().zip(table.values()) {
        writeln!(w, "{o:.17e},{v:.17e}")?;
    }
    Ok(())
}

/// Photocurrent spectrum a detector would record for the given laser noise,
/// S_I/S_sn = 1 + 2S_N(ω)/W₀ with S_N from the closed form; `freqs_hz` in Hz.
pub fn forward_psd(params: &SystemParams, noise: &NoiseModel, freqs_hz: &[f64]) -> Result<IntensityPSD> {
    let a = Analytic::new(params, noise)?.forced();
    let w0 = params.w0();
    let omegas: Vec<f64> = freqs_hz.iter().map(|f| TAU * f).collect();
    let s_i = omegas.iter().map(|&w| a.s_n(w).map(|s| 1.0 + 2.0 * s / w0)).collect::<Result<Vec<_>>>()?;
    let n = omegas.len();
    IntensityPSD::new(omegas, s_i, vec![1.0; n], PsdMetadata::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> SystemParams {
        SystemParams::at_optimal_detuning(1.0, 0.05, 1e-4, 1e4).unwrap()
    }

    #[test]
    fn minimal_file_and_metadata() {
        let text = "# instrument: ESA-1\n# rbw_hz: 10\nfreq,ratio\n1.0,2.0\n2.0,3.0\n";
        let psd = parse_psd(text, PsdFormat::Csv2Col).unwrap();
        assert_eq!(psd.len(), 2);
        assert!((psd.omegas[1] - 2.0 * TAU).abs() < 1e-15);
        assert_eq!(psd.metadata.instrument.as_deref(), Some("ESA-1"));
        assert_eq!(psd.metadata.resolution_bandwidth_hz, Some(10.0));
    }

    #[test]
    fn malformed_rows_report_line() {
        let e = parse_psd("1.0,2.0\n2.0,abc\n", PsdFormat::Csv2Col).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        let e = parse_psd("1.0,2.0,1.0\n2.0,3.0\n", PsdFormat::Csv3Col).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = parse_psd("2.0,2.0\n1.0,3.0\n", PsdFormat::Csv2Col).unwrap_err();
        assert!(matches!(e, Error::Format(_)));
        let e = parse_psd("1.0,2.0,0.0\n", PsdFormat::Csv3Col).unwrap_err();
        assert!(matches!(e, Error::Format(_)));
    }

    #[test]
    fn shot_noise_limited_and_uniform_ratio() {
        let p = params();
        let ones = IntensityPSD::new(vec![0.5, 1.0, 1.5], vec![1.0; 3], vec![1.0; 3], PsdMetadata::default()).unwrap();
        let x = extract_sn(&ones, &p).unwrap();
        assert!(x.spectrum.values.iter().all(|v| *v == 0.0));
        assert!(x.clipped.is_empty());
        let threes = IntensityPSD::new(vec![0.5, 1.0], vec![6.0; 2], vec![2.0; 2], PsdMetadata::default()).unwrap();
        let x = extract_sn(&threes, &p).unwrap();
        assert!(x.spectrum.values.iter().all(|v| (v - p.w0()).abs() < 1e-15 * p.w0()));
    }

    #[test]
    fn sub_shot_noise_is_clipped_and_flagged() {
        let p = params();
        let psd = IntensityPSD::new(vec![1.0, 2.0, 3.0, 4.0], vec![0.9, 1.5, 0.8, 1.2], vec![1.0; 4], PsdMetadata::default()).unwrap();
        let x = extract_sn(&psd, &p).unwrap();
        assert_eq!(x.clipped, vec![1.0, 3.0]);
        assert_eq!(x.spectrum.values[0], 0.0);
        assert!(x.warnings.iter().any(|w| w.contains("below shot noise")));
    }

    #[test]
    fn forward_then_invert_is_identity() {
        let p = params();
        let noise = NoiseModel::parametric(5e-4, 0.3).unwrap();
        let freqs: Vec<f64> = (1..200).map(|i| i as f64 * 0.01 / TAU * 10.0).collect();
        let psd = forward_psd(&p, &noise, &freqs).unwrap();
        let sn = extract_sn(&psd, &p).unwrap();
        let inferred = infer_phase_spectrum(&sn.spectrum, &p).unwrap();
        for &f in &freqs {
            let w = TAU * f;
            let (got, want) = (inferred.spectrum_at(w), noise.spectrum_at(w));
            // limited by cancellation in S_I/S_sn − 1
            assert!((got - want).abs() < 1e-6 * want, "{w}: {got} vs {want}");
        }
    }

    #[test]
    fn resonant_inversion_is_refused() {
        let p = params().with_delta(0.0).unwrap();
        let sn = SpectrumResult::analytic(vec![0.0, 1.0], vec![0.0, 0.0]);
        assert!(infer_phase_spectrum(&sn, &p).is_err());
        let zero = infer_phase_spectrum(&sn, &params()).unwrap();
        assert_eq!(zero.spectrum_at(0.5), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let p = params();
        let psd = forward_psd(&p, &NoiseModel::parametric(5e-4, 0.3).unwrap(), &[0.1, 0.2, 0.3]).unwrap();
        let mut buf = Vec::new();
        psd.write_csv(&mut buf).unwrap();
        let back = parse_psd(std::str::from_utf8(&buf).unwrap(), PsdFormat::Csv3Col).unwrap();
        for i in 0..3 {
            assert!((back.omegas[i] - psd.omegas[i]).abs() < 1e-14);
            assert_eq!(back.s_i[i], psd.s_i[i]);
        }
    }
}
