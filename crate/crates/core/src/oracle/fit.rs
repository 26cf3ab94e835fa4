//! Single-exponential relaxation fit n(t) = n₀ + A·e^{−W(t−t₀)}.

use serde::Serialize;

use crate::error::{Error, Result};

/// RMS residual above this fraction of the fitted transient flags a poor fit.
pub const POOR_FIT_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoolingFit {
    pub w: f64,
    pub n0: f64,
    pub amplitude: f64,
    /// One-standard-error half widths from the linearized covariance.
    pub w_err: f64,
    pub n0_err: f64,
    /// RMS residual over RMS of the fitted exponential part.
    pub residual_fraction: f64,
    pub poor_fit: bool,
}

/// Least-squares (A, n₀) at fixed W; returns (A, n₀, sum of squares).
fn linear_part(t: &[f64], y: &[f64], w: f64) -> (f64, f64, f64) {
    let t0 = t[0];
    let (mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0);
    let n = t.len() as f64;
    for (ti, yi) in t.iter().zip(y) {
        let e = (-w * (ti - t0)).exp();
        se += e;
        see += e * e;
        sy += yi;
        sey += e * yi;
    }
    let det = n * see - se * se;
    let a = (n * sey - se * sy) / det;
    let c = (see * sy - se * sey) / det;
    let ss = t
        .iter()
        .zip(y)
        .map(|(ti, yi)| {
            let r = yi - c - a * (-w * (ti - t0)).exp();
            r * r
        })
        .sum();
    (a, c, ss)
}

fn inverse3(m: [[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let (r1, r2) = ((j + 1) % 3, (j + 2) % 3);
            let (c1, c2) = ((i + 1) % 3, (i + 2) % 3);
            inv[i][j] = (m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]) / det;
        }
    }
    Some(inv)
}

/// Fit n₀ + A·e^{−W(t − t[0])} by variable projection: (A, n₀) are linear,
/// W is found by golden-section search on log W.
pub fn effective_cooling_fit(t: &[f64], y: &[f64]) -> Result<CoolingFit> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::InsufficientData("need at least four matching (t, n) points".into()));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("times must increase and values be finite".into()));
    }
    let span = t[t.len() - 1] - t[0];
    let min_dt = t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (mut lo, mut hi) = ((0.01 / span).ln(), (1.0 / min_dt).ln());
    // coarse scan, then golden-section refinement around the best point
    let cost = |lw: f64| linear_part(t, y, lw.exp()).2;
    let grid = 200;
    let best = (0..=grid)
        .map(|k| lo + (hi - lo) * k as f64 / grid as f64)
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .unwrap_or(lo);
    let step = (hi - lo) / grid as f64;
    lo = best - step;
    hi = best + step;
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..200 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    let w = (0.5 * (lo + hi)).exp();
    let (a, n0, ss) = linear_part(t, y, w);
    // linearized covariance of (W, A, n₀)
    let mut jtj = [[0.0; 3]; 3];
    let mut transient = 0.0;
    for ti in t {
        let e = (-w * (ti - t[0])).exp();
        let row = [-a * (ti - t[0]) * e, e, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                jtj[i][j] += row[i] * row[j];
            }
        }
        transient += (a * e) * (a * e);
    }
    let dof = (t.len() - 3) as f64;
    let sigma2 = ss / dof;
    let (w_err, n0_err) = match inverse3(jtj) {
        Some(c) => ((sigma2 * c[0][0]).max(0.0).sqrt(), (sigma2 * c[2][2]).max(0.0).sqrt()),
        None => (f64::NAN, f64::NAN),
    };
    let residual_fraction = if transient > 0.0 { (ss / transient).sqrt() } else { f64::INFINITY };
    Ok(CoolingFit {
        w,
        n0,
        amplitude: a,
        w_err,
        n0_err,
        residual_fraction,
        poor_fit: !(residual_fraction <= POOR_FIT_FRACTION),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_exponential_is_recovered() {
        let t: Vec<f64> = (0..500).map(|k| 3.0 + 0.1 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|ti| 0.25 + 80.0 * (-0.037 * (ti - 3.0)).exp()).collect();
        let f = effective_cooling_fit(&t, &y).unwrap();
        assert!((f.w - 0.037).abs() < 1e-9 * 0.037, "{}", f.w);
        assert!((f.n0 - 0.25).abs() < 1e-8);
        assert!((f.amplitude - 80.0).abs() < 1e-7);
        assert!(!f.poor_fit);
        assert!(f.w_err < 1e-9);
    }

    #[test]
    fn non_exponential_is_flagged() {
        let t: Vec<f64> = (0..400).map(|k| 0.05 * k as f64).collect();
        let y: Vec<f64> = t.iter().map(|ti| 1.0 + (-0.3 * ti).exp() * (2.0 * ti).cos()).collect();
        assert!(effective_cooling_fit(&t, &y).unwrap().poor_fit);
    }

    #[test]
    fn noisy_fit_has_error_bars() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t: Vec<f64> = (0..300).map(|k| k as f64).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|ti| 2.0 + 50.0 * (-0.01 * ti).exp() + 0.2 * (rng.random::<f64>() - 0.5))
            .collect();
        let f = effective_cooling_fit(&t, &y).unwrap();
        assert!((f.w - 0.01).abs() < 5.0 * f.w_err.max(1e-6), "{} ± {}", f.w, f.w_err);
        assert!((f.n0 - 2.0).abs() < 5.0 * f.n0_err.max(1e-6));
        assert!(f.w_err > 0.0 && f.w_err < 1e-3);
    }

    #[test]
    fn rejects_short_or_unsorted() {
        assert!(effective_cooling_fit(&[0.0, 1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(effective_cooling_fit(&[0.0, 2.0, 1.0, 3.0], &[1.0; 4]).is_err());
    }
}
