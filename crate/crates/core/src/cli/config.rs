//! `key = value` run configuration with `#` comments and unit suffixes.
//!
//! Rates accept `hz`, `khz`, `mhz`, `ghz` (multiplied by 2π) or `rad_s`;
//! a bare number is taken as an angular rate in the caller's units.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::{Drive, NoiseModel, SpectrumTable, SystemParams};

/// Every key a config file or flag may set.
pub const KEYS: &[&str] = &[
    "omega_m",
    "kappa",
    "g0",
    "delta",
    "photon_number",
    "drive_amplitude",
    "gamma_m",
    "n_th",
    "noise",
    "gamma_l",
    "gamma_c",
    "noise_table",
    "seed",
    "realizations",
    "omega_min",
    "omega_max",
    "omega_points",
    "t_max",
    "t_points",
    "initial_occupancy",
    "t_end",
    "psd",
    "psd_format",
];

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Config {
    pub entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Parse { line: i + 1, msg: format!("expected key = value, got {line:?}") });
            };
            cfg.set(k.trim(), v.trim()).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(Error::InvalidParameter(format!("unknown config key {key:?}")));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    /// A rate with optional unit suffix, in rad/s.
    pub fn rate(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_rate(key, v)).transpose()
    }

    pub fn require_rate(&self, key: &str) -> Result<f64> {
        self.rate(key)?.ok_or_else(|| Error::InvalidParameter(format!("missing {key}")))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key)
            .map(|v| v.parse::<f64>().map_err(|_| Error::InvalidParameter(format!("{key}: {v:?} is not a number"))))
            .transpose()
    }

    pub fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let x: f64 = v.parse().map_err(|_| Error::InvalidParameter(format!("{key}: {v:?} is not a count")))?;
                if x < 0.0 || x.fract() != 0.0 || !x.is_finite() {
                    return Err(Error::InvalidParameter(format!("{key}: {v:?} is not a count")));
                }
                Ok(x as usize)
            }
        }
    }

    pub fn seed(&self) -> Result<u64> {
        match self.get("seed") {
            None => Ok(0),
            Some(v) => v.parse().map_err(|_| Error::InvalidParameter(format!("seed: {v:?} is not an integer"))),
        }
    }

    /// System parameters; `delta = optimal` selects Δ_op.
    pub fn params(&self) -> Result<SystemParams> {
        let omega_m = self.require_rate("omega_m")?;
        let kappa = self.require_rate("kappa")?;
        let g0 = self.require_rate("g0")?;
        let delta = match self.get("delta") {
            None | Some("optimal") => crate::params::optimal_detuning(omega_m, kappa),
            Some(v) => parse_rate("delta", v)?,
        };
        let n = self.number("photon_number")?;
        let e = self.rate("drive_amplitude")?;
        let drive = match (n, e) {
            (Some(n), None) => Drive::PhotonNumber(n),
            (None, Some(e)) => Drive::Amplitude(e),
            (Some(_), Some(_)) => {
                return Err(Error::Ambiguous("give photon_number or drive_amplitude, not both".into()))
            }
            (None, None) => return Err(Error::InvalidParameter("missing photon_number or drive_amplitude".into())),
        };
        let p = SystemParams::new(omega_m, kappa, g0, delta, drive)?;
        match self.rate("gamma_m")? {
            Some(g) => p.with_gamma_m(g),
            None => Ok(p),
        }
    }

    /// Noise model from `noise = none | white | parametric | table`.
    pub fn noise(&self, base: &Path) -> Result<NoiseModel> {
        let kind = self.get("noise").unwrap_or("none");
        match kind {
            "none" => Ok(NoiseModel::none()),
            "white" => NoiseModel::white(self.require_rate("gamma_l")?),
            "parametric" => NoiseModel::parametric(self.require_rate("gamma_l")?, self.require_rate("gamma_c")?),
            "table" => {
                let rel = self
                    .get("noise_table")
                    .ok_or_else(|| Error::InvalidParameter("noise = table needs noise_table".into()))?;
                load_noise_table(&base.join(rel))
            }
            other => Err(Error::InvalidParameter(format!("unknown noise kind {other:?}"))),
        }
    }
}

pub fn parse_rate(key: &str, v: &str) -> Result<f64> {
    let s = v.trim().to_ascii_lowercase();
    let split = s.find(|c: char| c.is_ascii_alphabetic() && c != 'e').unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let x: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{key}: cannot read {v:?}")))?;
    let scale = match unit.trim() {
        "" | "rad_s" | "rad/s" => 1.0,
        "hz" => TAU,
        "khz" => TAU * 1e3,
        "mhz" => TAU * 1e6,
        "ghz" => TAU * 1e9,
        u => return Err(Error::InvalidParameter(format!("{key}: unknown unit {u:?}"))),
    };
    Ok(x * scale)
}

/// Read `omega_rad_s,s_phidot` rows (header and `#` comments allowed).
pub fn load_noise_table(path: &Path) -> Result<NoiseModel> {
    let text = fs::read_to_string(path)?;
    let (mut w, mut s) = (Vec::new(), Vec::new());
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("omega") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: std::result::Result<Vec<f64>, _> = parts.iter().map(|p| p.parse::<f64>()).collect();
        match nums {
            Ok(v) if v.len() == 2 => {
                w.push(v[0]);
                s.push(v[1]);
            }
            _ => return Err(Error::Parse { line: i + 1, msg: format!("expected omega,s_phidot in {line:?}") }),
        }
    }
    Ok(NoiseModel::tabulated(SpectrumTable::new(w, s)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn units_and_comments() {
        let c = Config::parse("omega_m = 10 MHz # mechanical\nkappa=1e6\n\ng0 = 2 khz\nphoton_number = 1e4\n").unwrap();
        assert!((c.require_rate("omega_m").unwrap() - TAU * 1e7).abs() < 1e-3);
        assert_eq!(c.require_rate("kappa").unwrap(), 1e6);
        assert!((c.require_rate("g0").unwrap() - TAU * 2e3).abs() < 1e-9);
        assert_eq!(parse_rate("x", "3 rad_s").unwrap(), 3.0);
        assert_eq!(parse_rate("x", "1.5e-3").unwrap(), 1.5e-3);
        assert!(parse_rate("x", "2 furlongs").is_err());
        let p = c.params().unwrap();
        assert!(p.delta < 0.0);
    }

    #[test]
    fn errors_carry_lines() {
        let e = Config::parse("kappa = 1\nbogus\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = Config::parse("kapa = 1\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn ambiguous_drive() {
        let c = Config::parse("omega_m=1\nkappa=0.1\ng0=1e-3\nphoton_number=1\ndrive_amplitude=1\n").unwrap();
        assert!(matches!(c.params().unwrap_err(), Error::Ambiguous(_)));
    }
}
