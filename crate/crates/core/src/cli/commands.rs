use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use super::config::Config;
use super::Invocation;
use crate::analytic::Analytic;
use crate::error::{Error, Result};
use crate::ingest::{self, PsdFormat};
use crate::oracle::{
    self, effective_cooling_fit, fidelity_mc, mc_spectrum, Channel, MomentOptions, MomentState, OracleConfig,
};
use crate::params::{NoiseModel, SystemParams};

const DEFAULT_REALIZATIONS: usize = 16;

/// Run the subcommand; returns the output file names relative to `out`.
pub(super) fn run(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let mut files = match inv.subcommand.as_str() {
        "spectrum" => spectrum(inv, out)?,
        "cooling" => cooling(inv, out)?,
        "fidelity" => fidelity(inv, out)?,
        "sweep" => sweep(inv, out)?,
        "ingest" => ingest_cmd(inv, out)?,
        "oracle" => oracle_cmd(inv, out)?,
        other => return Err(Error::InvalidParameter(format!("unknown subcommand {other:?}"))),
    };
    if inv.gnuplot_script {
        write_gnuplot(out, &files)?;
        files.push("plot.gp".into());
    }
    Ok(files)
}

struct Setup {
    params: SystemParams,
    noise: NoiseModel,
    analytic: Analytic,
}

fn setup(inv: &Invocation) -> Result<Setup> {
    let params = inv.config.params()?;
    let noise = inv.config.noise(Path::new(""))?;
    let mut analytic = Analytic::new(&params, &noise)?;
    if inv.force {
        analytic = analytic.forced();
    }
    Ok(Setup { params, noise, analytic })
}

fn oracle_config(inv: &Invocation, s: &Setup) -> Result<OracleConfig> {
    let n = inv.config.count("realizations", DEFAULT_REALIZATIONS)?;
    Ok(OracleConfig::new(&s.params, &s.noise, n, inv.config.seed()?).with_jobs(inv.jobs))
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out.join(name))?))
}

fn write_json(out: &Path, name: &str, v: &impl Serialize) -> Result<()> {
    fs::write(out.join(name), serde_json::to_string_pretty(v)?)?;
    Ok(())
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn omega_grid(c: &Config, p: &SystemParams) -> Result<Vec<f64>> {
    let lo = c.rate("omega_min")?.unwrap_or(-2.0 * p.omega_m);
    let hi = c.rate("omega_max")?.unwrap_or(2.0 * p.omega_m);
    let n = c.count("omega_points", 401)?;
    if !(hi > lo) || n < 2 {
        return Err(Error::InvalidParameter("omega grid needs omega_max > omega_min and at least two points".into()));
    }
    Ok(linspace(lo, hi, n))
}

fn spectrum(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let s = setup(inv)?;
    let omegas = omega_grid(&inv.config, &s.params)?;
    let sa = s.analytic.s_a_curve(&omegas)?;
    let sn = s.analytic.s_n_curve(&omegas)?;
    let mc = if inv.oracle {
        let cfg = oracle_config(inv, &s)?;
        Some((
            mc_spectrum(&s.params, &s.noise, Channel::Amplitude, &omegas, &cfg, None)?,
            mc_spectrum(&s.params, &s.noise, Channel::Intensity, &omegas, &cfg, None)?,
        ))
    } else {
        None
    };
    let mut w = create(out, "spectrum.csv")?;
    write!(w, "omega_rad_s,s_a,s_n")?;
    if mc.is_some() {
        write!(w, ",s_a_mc,s_a_mc_err,s_n_mc,s_n_mc_err")?;
    }
    writeln!(w)?;
    for i in 0..omegas.len() {
        write!(w, "{:.17e},{:.17e},{:.17e}", omegas[i], sa.values[i], sn.values[i])?;
        if let Some((a, n)) = &mc {
            write!(
                w,
                ",{:.17e},{:.17e},{:.17e},{:.17e}",
                a.result.values[i], a.result.errors[i], n.result.values[i], n.result.errors[i]
            )?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(vec!["spectrum.csv".into()])
}

fn cooling_opts() -> MomentOptions {
    MomentOptions { record_every: 20, n_th: 0.0 }
}

fn cooling(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let s = setup(inv)?;
    let result = s.analytic.cooling_limits()?;
    let mut files = vec!["cooling.json".to_string()];
    let mut report = json!({
        "w0": s.params.w0(),
        "n0_noiseless": s.params.n0_noiseless(),
        "limits": result,
        "regime": s.analytic.report,
    });
    if inv.oracle {
        let cfg = oracle_config(inv, &s)?;
        let n_init = inv.config.number("initial_occupancy")?.unwrap_or(100.0);
        let t_end = inv.config.number("t_end")?.unwrap_or(12.0 / s.params.w0());
        let start = MomentState::cooling_start(n_init)?;
        let curve = oracle::occupancy_ensemble(&s.params, &s.noise, &cfg, &start, t_end, cooling_opts())?;
        // skip the cavity transient before fitting
        let from = curve.times.iter().position(|t| *t > 20.0 / s.params.kappa).unwrap_or(0);
        let fit = effective_cooling_fit(&curve.times[from..], &curve.n_b[from..])?;
        curve.write_csv(create(out, "relaxation.csv")?)?;
        files.push("relaxation.csv".into());
        report["oracle"] = json!({ "fit": fit, "oracle_config": cfg });
    }
    write_json(out, "cooling.json", &report)?;
    Ok(files)
}

fn time_grid(c: &Config, t_default: f64) -> Result<Vec<f64>> {
    let t_max = c.number("t_max")?.unwrap_or(t_default);
    let n = c.count("t_points", 101)?;
    if !(t_max > 0.0) || n < 2 {
        return Err(Error::InvalidParameter("time grid needs t_max > 0 and at least two points".into()));
    }
    Ok(linspace(0.0, t_max, n))
}

fn fidelity(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let s = setup(inv)?;
    let a = &s.analytic;
    let budget = a.fidelity_error_budget()?;
    let t_r = a.return_time();
    let times = time_grid(&inv.config, t_r)?;
    let mut rows = Vec::with_capacity(times.len());
    for &t in &times {
        let f0 = a.fidelity_noiseless(t)?;
        let d = a.displacement_variance(t)?;
        let lf = a.low_frequency_dephasing(t)?;
        rows.push([t, f0, d, lf.w_t, lf.r_t, lf.fidelity * (-d).exp()]);
    }
    let mc = if inv.oracle { Some(fidelity_mc(&s.params, &s.noise, &times, &oracle_config(inv, &s)?)?) } else { None };
    let mut w = create(out, "fidelity.csv")?;
    write!(w, "t,f0,d_t,w_t,r_t,f_estimate")?;
    if mc.is_some() {
        write!(w, ",f_mc,f_mc_err,f_amplitude_mc,f_cumulant,f0_modes")?;
    }
    writeln!(w)?;
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r.iter().map(|x| format!("{x:.17e}")).collect();
        write!(w, "{}", line.join(","))?;
        if let Some(m) = &mc {
            write!(
                w,
                ",{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                m.fidelity[i], m.fidelity_err[i], m.fidelity_amplitude[i], m.f_cumulant[i], m.f0_modes[i]
            )?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    let warnings = a.low_frequency_dephasing(t_r)?.warnings;
    write_json(
        out,
        "budget.json",
        &json!({
            "return_time": t_r,
            "f0_return": a.fidelity_noiseless(t_r)?,
            "f0_return_quoted": a.fidelity_noiseless_quoted(),
            "budget": budget,
            "coherent_dynamics_possible": budget.coherent_dynamics_possible,
            "warnings": warnings,
        }),
    )?;
    Ok(vec!["fidelity.csv".into(), "budget.json".into()])
}

/// Scalar outputs available to `sweep`.
pub const METRICS: &[&str] = &[
    "w",
    "n0",
    "n0_three_term",
    "n0_min",
    "optimal_photon_number",
    "quoted_optimal_photon_number",
    "s_a_red",
    "s_a_blue",
    "s_n_red",
    "s_n_blue",
    "epsilon_loss",
    "epsilon_noise",
    "epsilon_total",
    "epsilon_opt",
    "alpha_opt",
    "n_tot_strong",
    "n_tot_bound",
    "f0_return",
];

fn metric(a: &Analytic, name: &str) -> Result<f64> {
    let w = a.params.omega_m;
    let opt = |x: Option<f64>| x.unwrap_or(f64::NAN);
    Ok(match name {
        "w" => a.cooling_limits()?.w,
        "n0" => a.cooling_limits()?.n0,
        "n0_three_term" => a.cooling_limits()?.n0_three_term,
        "n0_min" => opt(a.cooling_limits()?.n0_min),
        "optimal_photon_number" => opt(a.cooling_limits()?.optimal_photon_number),
        "quoted_optimal_photon_number" => opt(a.cooling_limits()?.quoted_optimal_photon_number),
        "s_a_red" => a.s_a(w)?,
        "s_a_blue" => a.s_a(-w)?,
        "s_n_red" => a.s_n(w)?,
        "s_n_blue" => a.s_n(-w)?,
        "epsilon_loss" => a.fidelity_error_budget()?.epsilon_loss,
        "epsilon_noise" => a.fidelity_error_budget()?.epsilon_noise,
        "epsilon_total" => a.fidelity_error_budget()?.epsilon_total,
        "epsilon_opt" => opt(a.fidelity_error_budget()?.epsilon_opt),
        "alpha_opt" => opt(a.fidelity_error_budget()?.alpha_opt),
        "n_tot_strong" => a.strong_cooling_limit()?.n_tot,
        "n_tot_bound" => a.strong_cooling_limit()?.n_tot_bound,
        "f0_return" => a.fidelity_noiseless(a.return_time())?,
        other => return Err(Error::InvalidParameter(format!("unknown metric {other:?}; known: {}", METRICS.join(", ")))),
    })
}

/// Parsed `key:start:stop:count[:log]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn parse(spec: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("axis {spec:?}: expected key:start:stop:count[:log]"));
        let parts: Vec<&str> = spec.split(':').collect();
        if !(4..=5).contains(&parts.len()) {
            return Err(bad());
        }
        let key = parts[0].to_string();
        if !super::config::KEYS.contains(&key.as_str()) {
            return Err(Error::InvalidParameter(format!("axis {spec:?}: unknown key {key:?}")));
        }
        let start = super::config::parse_rate(&key, parts[1])?;
        let stop = super::config::parse_rate(&key, parts[2])?;
        let count: usize = parts[3].parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        let values = match parts.get(4) {
            None => linspace(start, stop, count),
            Some(&"log") => {
                if !(start > 0.0 && stop > 0.0) {
                    return Err(Error::InvalidParameter(format!("axis {spec:?}: log axis needs positive bounds")));
                }
                linspace(start.ln(), stop.ln(), count).into_iter().map(f64::exp).collect()
            }
            Some(_) => return Err(bad()),
        };
        Ok(Axis { key, values })
    }
}

fn sweep(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let axes = inv.axes.iter().map(|a| Axis::parse(a)).collect::<Result<Vec<_>>>()?;
    if axes.is_empty() || axes.len() > 2 {
        return Err(Error::InvalidParameter("sweep takes one or two axes".into()));
    }
    if inv.metrics.is_empty() {
        return Err(Error::InvalidParameter("sweep needs at least one metric".into()));
    }
    let second = axes.get(1).map(|a| a.values.clone()).unwrap_or_else(|| vec![f64::NAN]);
    let mut w = create(out, "sweep.csv")?;
    let header: Vec<&str> = axes.iter().map(|a| a.key.as_str()).collect();
    writeln!(w, "{},metric,method,value", header.join(","))?;
    for &x in &axes[0].values {
        for &y in &second {
            let mut cfg = inv.config.clone();
            cfg.set(&axes[0].key, &format!("{x:e}"))?;
            if let Some(ax) = axes.get(1) {
                cfg.set(&ax.key, &format!("{y:e}"))?;
            }
            let point = Invocation { config: cfg, ..inv.clone() };
            let s = setup(&point)?;
            for m in &inv.metrics {
                let v = metric(&s.analytic, m)?;
                let coords = if axes.len() == 2 { format!("{x:.17e},{y:.17e}") } else { format!("{x:.17e}") };
                writeln!(w, "{coords},{m},analytic,{v:.17e}")?;
            }
        }
    }
    w.flush()?;
    Ok(vec!["sweep.csv".into()])
}

fn ingest_cmd(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let params = inv.config.params()?;
    let path = inv
        .config
        .get("psd")
        .ok_or_else(|| Error::InvalidParameter("ingest needs psd".into()))?;
    let format: PsdFormat = inv.config.get("psd_format").unwrap_or("csv3col").parse()?;
    let psd = ingest::load_psd(Path::new(path), format)?;
    let sn = ingest::extract_sn(&psd, &params)?;
    let phase = ingest::infer_phase_curve(&sn.spectrum, &params)?;
    let noise = ingest::infer_phase_spectrum(&sn.spectrum, &params)?;
    ingest::write_noise_table(&noise, create(out, "noise_table.csv")?)?;
    sn.spectrum.write_csv(create(out, "sn.csv")?)?;
    phase.write_csv(create(out, "phase.csv")?)?;
    let mut analytic = Analytic::new(&params, &noise)?;
    if inv.force {
        analytic = analytic.forced();
    }
    let as_value = |r: Result<Value>| r.unwrap_or_else(|e| json!({ "error": e.to_string() }));
    let cooling = as_value(analytic.cooling_limits().and_then(|c| Ok(serde_json::to_value(c)?)));
    let strong = as_value(analytic.strong_cooling_limit().and_then(|c| Ok(serde_json::to_value(c)?)));
    let budget = as_value(analytic.fidelity_error_budget().and_then(|c| Ok(serde_json::to_value(c)?)));
    write_json(
        out,
        "ingest.json",
        &json!({
            "metadata": psd.metadata,
            "points": psd.len(),
            "clipped_fraction": sn.clipped_fraction,
            "clipped_omegas": sn.clipped,
            "warnings": sn.warnings,
            "noise_digest": noise.digest(),
            "s_phidot_at_omega_m": noise.spectrum_at(params.omega_m),
            "cooling": cooling,
            "strong_cooling": strong,
            "fidelity_budget": budget,
        }),
    )?;
    Ok(vec!["noise_table.csv".into(), "sn.csv".into(), "phase.csv".into(), "ingest.json".into()])
}

/// Formula identifiers in the comparison table, in output order.
pub const FORMULA_IDS: &[&str] = &[
    "w0",
    "n0",
    "s_a_red",
    "s_a_blue",
    "s_n_red",
    "n0_floor",
    "total_decay_rate",
    "strong_floor",
    "fidelity_return",
];

#[derive(Clone, Debug, Serialize)]
struct Comparison {
    id: &'static str,
    analytic: f64,
    mc: f64,
    mc_err: f64,
    deviation: f64,
    status: &'static str,
}

impl Comparison {
    fn new(id: &'static str, analytic: f64, mc: f64, mc_err: f64) -> Self {
        let scale = if analytic != 0.0 { analytic.abs() } else { 1.0 };
        Comparison { id, analytic, mc, mc_err, deviation: (mc - analytic) / scale, status: "compared" }
    }

    fn skipped(id: &'static str) -> Self {
        Comparison { id, analytic: f64::NAN, mc: f64::NAN, mc_err: f64::NAN, deviation: f64::NAN, status: "not_applicable" }
    }
}

fn weak_comparisons(inv: &Invocation, s: &Setup, cfg: &OracleConfig) -> Result<Vec<Comparison>> {
    let p = &s.params;
    let a = &s.analytic;
    let lim = a.cooling_limits()?;
    let (w_m, w0) = (p.omega_m, p.w0());
    let n_init = inv.config.number("initial_occupancy")?.unwrap_or(100.0);
    let t_end = inv.config.number("t_end")?.unwrap_or(12.0 / w0);
    let curve = oracle::occupancy_ensemble(p, &s.noise, cfg, &MomentState::cooling_start(n_init)?, t_end, cooling_opts())?;
    let from = curve.times.iter().position(|t| *t > 20.0 / p.kappa).unwrap_or(0);
    let fit = effective_cooling_fit(&curve.times[from..], &curve.n_b[from..])?;
    let grid = [w_m, -w_m];
    let sa = mc_spectrum(p, &s.noise, Channel::Amplitude, &grid, cfg, None)?;
    let sn = mc_spectrum(p, &s.noise, Channel::Intensity, &grid[..1], cfg, None)?;
    let steady = oracle::steady_occupancy(
        p,
        &s.noise,
        cfg,
        &MomentState::cooling_start(lim.n0)?,
        5.0 / w0,
        20.0 / w0,
        cooling_opts(),
    )?;
    Ok(vec![
        Comparison::new("w0", lim.w, fit.w, fit.w_err),
        Comparison::new("n0", lim.n0, fit.n0, fit.n0_err),
        Comparison::new("s_a_red", a.s_a(w_m)?, sa.result.values[0], sa.result.errors[0]),
        Comparison::new("s_a_blue", a.s_a(-w_m)?, sa.result.values[1], sa.result.errors[1]),
        Comparison::new("s_n_red", a.s_n(w_m)?, sn.result.values[0], sn.result.errors[0]),
        Comparison::new("n0_floor", lim.n0, steady.n_b, steady.n_b_err),
    ])
}

fn strong_comparisons(inv: &Invocation, s: &Setup, cfg: &OracleConfig) -> Result<Vec<Comparison>> {
    let p = &s.params;
    let a = &s.analytic;
    let k = p.kappa;
    let mut rows = Vec::new();
    let b0 = inv.config.number("initial_occupancy")?.unwrap_or(100.0).sqrt();
    let start = MomentState::thermal(0.0.into(), 0.0, b0.into(), 0.0)?;
    let t_end = inv.config.number("t_end")?.unwrap_or(5.0 / k);
    let opts = MomentOptions { record_every: 10, n_th: 0.0 };
    let curve = oracle::occupancy_ensemble(p, &s.noise, cfg, &start, t_end, opts)?;
    let fit = effective_cooling_fit(&curve.times, &curve.n_tot())?;
    rows.push(Comparison::new("total_decay_rate", k, fit.w, fit.w_err));
    if s.noise.is_zero() {
        rows.push(Comparison::new("strong_floor", 0.0, fit.n0, fit.n0_err));
    } else {
        let lim = a.strong_cooling_limit()?;
        let steady = oracle::steady_occupancy(p, &s.noise, cfg, &MomentState::cooling_start(0.0)?, 5.0 / k, 20.0 / k, opts)?;
        rows.push(Comparison::new("strong_floor", lim.n_tot, steady.n_tot, steady.n_tot_err));
    }
    let t_r = a.return_time();
    let f = fidelity_mc(p, &s.noise, &[t_r], cfg)?;
    let d = if f.d_t[0].is_finite() { f.d_t[0] } else { 0.0 };
    let expected = if s.noise.is_zero() { f.f0_modes[0] } else { f.f_cumulant[0] * (-d).exp() };
    rows.push(Comparison::new("fidelity_return", expected, f.fidelity[0], f.fidelity_err[0]));
    Ok(rows)
}

fn oracle_cmd(inv: &Invocation, out: &Path) -> Result<Vec<String>> {
    let s = setup(inv)?;
    let cfg = oracle_config(inv, &s)?;
    let computed = if s.analytic.report.weak_coupling {
        weak_comparisons(inv, &s, &cfg)?
    } else if s.analytic.report.strong_coupling || inv.force {
        strong_comparisons(inv, &s, &cfg)?
    } else {
        return Err(Error::regime("oracle", "neither weak nor strong coupling"));
    };
    let table: Vec<Comparison> = FORMULA_IDS
        .iter()
        .map(|id| computed.iter().find(|c| c.id == *id).cloned().unwrap_or_else(|| Comparison::skipped(id)))
        .collect();
    let mut w = create(out, "comparison.csv")?;
    writeln!(w, "formula_id,analytic,mc,mc_err,deviation,status")?;
    for c in &table {
        writeln!(
            w,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            c.id, c.analytic, c.mc, c.mc_err, c.deviation, c.status
        )?;
    }
    w.flush()?;
    write_json(
        out,
        "oracle.json",
        &json!({ "oracle_config": cfg, "regime": s.analytic.report, "comparisons": table }),
    )?;
    Ok(vec!["comparison.csv".into(), "oracle.json".into()])
}

fn write_gnuplot(out: &Path, files: &[String]) -> Result<()> {
    let mut w = create(out, "plot.gp")?;
    writeln!(w, "set datafile separator ','\nset key autotitle columnhead\nset terminal pngcairo size 900,600")?;
    for f in files.iter().filter(|f| f.ends_with(".csv")) {
        let header = fs::read_to_string(out.join(f))?.lines().next().unwrap_or_default().to_string();
        let cols: Vec<&str> = header.split(',').collect();
        let stem = f.trim_end_matches(".csv");
        writeln!(w, "\nset output '{stem}.png'\nset xlabel '{}'", cols[0])?;
        let series: Vec<String> = if f == "sweep.csv" {
            let v = cols.len();
            vec![format!("'{f}' using 1:{v} with points title 'value'")]
        } else {
            (2..=cols.len())
                .filter(|i| !cols[i - 1].ends_with("_err"))
                .map(|i| format!("'{f}' using 1:{i} with lines"))
                .collect()
        };
        writeln!(w, "plot {}", series.join(", \\\n     "))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = Axis::parse("photon_number:1:100:3:log").unwrap();
        assert_eq!(a.key, "photon_number");
        assert!((a.values[1] - 10.0).abs() < 1e-12);
        let b = Axis::parse("kappa:0.1:0.3:3").unwrap();
        assert!((b.values[2] - 0.3).abs() < 1e-15);
        assert!(Axis::parse("bogus:1:2:3").is_err());
        assert!(Axis::parse("kappa:1:2").is_err());
        assert!(Axis::parse("kappa:-1:2:3:log").is_err());
    }

    #[test]
    fn every_metric_is_known() {
        let p = SystemParams::at_optimal_detuning(1.0, 0.1, 1e-4, 1e4).unwrap();
        let a = Analytic::new(&p, &NoiseModel::white(1e-3).unwrap()).unwrap().forced();
        for m in METRICS {
            metric(&a, m).unwrap();
        }
        assert!(metric(&a, "nope").is_err());
    }
}
