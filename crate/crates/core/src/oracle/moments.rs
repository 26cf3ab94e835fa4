//! First and second moments of the linearized cavity and mechanical modes.
//!
//! Quadratures x = (X_a, P_a, X_b, P_b) with a = (X_a + iP_a)/√2. The drift
//! for a field sample α and intensity fluctuation N is
//!
//!   dX_a = −κX_a − ΔP_a + 2g₀α_i X_b
//!   dP_a =  ΔX_a − κP_a − 2g₀α_r X_b
//!   dX_b =  ω_m P_b − (Γ_m/2)X_b
//!   dP_b = −ω_m X_b − (Γ_m/2)P_b − 2g₀(α_r X_a + α_i P_a) − √2 g₀N
//!
//! and the symmetrized covariance obeys dV/dt = AV + VAᵀ + D with
//! D = diag(κ, κ, Γ_m(n_th + ½), Γ_m(n_th + ½)).

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::SystemParams;

type Mat = [[f64; 4]; 4];

const SQRT2: f64 = std::f64::consts::SQRT_2;
/// Moments above this magnitude count as a blow-up.
const BLOW_UP: f64 = 1e12;
pub const PHYSICALITY_TOL: f64 = 1e-6;

/// Gaussian state of the two modes at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentState {
    pub t: f64,
    pub mean: [f64; 4],
    pub cov: Mat,
}

impl MomentState {
    /// Displaced thermal state; occupations count excitations above the
    /// displacement.
    pub fn thermal(a: Complex64, n_a: f64, b: Complex64, n_b: f64) -> Result<Self> {
        if !(n_a >= 0.0 && n_b >= 0.0) {
            return Err(Error::InvalidParameter("thermal occupations must be >= 0".into()));
        }
        let mut cov = [[0.0; 4]; 4];
        cov[0][0] = n_a + 0.5;
        cov[1][1] = n_a + 0.5;
        cov[2][2] = n_b + 0.5;
        cov[3][3] = n_b + 0.5;
        Ok(MomentState {
            t: 0.0,
            mean: [SQRT2 * a.re, SQRT2 * a.im, SQRT2 * b.re, SQRT2 * b.im],
            cov,
        })
    }

    /// Cavity in vacuum, mechanics thermal with mean occupation `n_b`.
    pub fn cooling_start(n_b: f64) -> Result<Self> {
        Self::thermal(Complex64::new(0.0, 0.0), 0.0, Complex64::new(0.0, 0.0), n_b)
    }

    fn second(&self, i: usize, j: usize) -> f64 {
        self.cov[i][j] + self.mean[i] * self.mean[j]
    }

    fn amp(&self, i: usize) -> Complex64 {
        Complex64::new(self.mean[i], self.mean[i + 1]) / SQRT2
    }

    /// ⟨u†v⟩ for modes starting at quadrature indices i and j.
    fn dagger_product(&self, i: usize, j: usize) -> Complex64 {
        let s = |p, q| self.second(p, q);
        let mut re = s(i, j) + s(i + 1, j + 1);
        if i == j {
            re -= 1.0;
        }
        Complex64::new(0.5 * re, 0.5 * (s(i, j + 1) - s(i + 1, j)))
    }

    /// ⟨uv⟩ for modes starting at quadrature indices i and j.
    fn product(&self, i: usize, j: usize) -> Complex64 {
        let s = |p, q| self.second(p, q);
        Complex64::new(0.5 * (s(i, j) - s(i + 1, j + 1)), 0.5 * (s(i, j + 1) + s(i + 1, j)))
    }

    pub fn a(&self) -> Complex64 {
        self.amp(0)
    }

    pub fn b(&self) -> Complex64 {
        self.amp(2)
    }

    pub fn n_a(&self) -> f64 {
        self.dagger_product(0, 0).re
    }

    pub fn n_b(&self) -> f64 {
        self.dagger_product(2, 2).re
    }

    pub fn a_dag_b(&self) -> Complex64 {
        self.dagger_product(0, 2)
    }

    pub fn ab(&self) -> Complex64 {
        self.product(0, 2)
    }

    pub fn a2(&self) -> Complex64 {
        self.product(0, 0)
    }

    pub fn b2(&self) -> Complex64 {
        self.product(2, 2)
    }

    /// Smaller symplectic eigenvalue of 2V; at least 1 for a physical state.
    pub fn min_symplectic_eigenvalue(&self) -> f64 {
        let s = |i: usize, j: usize| 2.0 * self.cov[i][j];
        let det2 = |i: usize, j: usize| s(i, j) * s(i + 1, j + 1) - s(i, j + 1) * s(i + 1, j);
        let delta = det2(0, 0) + det2(2, 2) + 2.0 * det2(0, 2);
        let m: Mat = std::array::from_fn(|i| std::array::from_fn(|j| s(i, j)));
        let det = det4(&m);
        let disc = (delta * delta - 4.0 * det).max(0.0);
        (0.5 * (delta - disc.sqrt())).max(0.0).sqrt()
    }

    pub fn is_physical(&self) -> bool {
        self.n_a() >= -1e-9 && self.n_b() >= -1e-9 && self.min_symplectic_eigenvalue() >= 1.0 - PHYSICALITY_TOL
    }
}

fn det4(m: &Mat) -> f64 {
    let mut a = *m;
    let mut det = 1.0;
    for c in 0..4 {
        let p = (c..4).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap_or(c);
        if a[p][c] == 0.0 {
            return 0.0;
        }
        if p != c {
            a.swap(p, c);
            det = -det;
        }
        det *= a[c][c];
        for r in c + 1..4 {
            let f = a[r][c] / a[c][c];
            for k in c..4 {
                a[r][k] -= f * a[c][k];
            }
        }
    }
    det
}

/// Coefficients of the linear moment equations at one parameter set.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MomentSystem {
    kappa: f64,
    delta: f64,
    omega: f64,
    g0: f64,
    half_gamma: f64,
    diffusion: [f64; 4],
}

impl MomentSystem {
    pub(crate) fn new(params: &SystemParams, n_th: f64) -> Self {
        let gm = params.gamma_m;
        let dm = gm * (n_th + 0.5);
        MomentSystem {
            kappa: params.kappa,
            delta: params.delta,
            omega: params.omega_m,
            g0: params.g0,
            half_gamma: 0.5 * gm,
            diffusion: [params.kappa, params.kappa, dm, dm],
        }
    }

    fn drift(&self, alpha: Complex64) -> Mat {
        let (k, d, w, h) = (self.kappa, self.delta, self.omega, self.half_gamma);
        let (gr, gi) = (2.0 * self.g0 * alpha.re, 2.0 * self.g0 * alpha.im);
        [
            [-k, -d, gi, 0.0],
            [d, -k, -gr, 0.0],
            [0.0, 0.0, -h, w],
            [-gr, -gi, -w, -h],
        ]
    }

    fn rate(&self, alpha: Complex64, n: f64, mean: &[f64; 4], cov: &Mat) -> ([f64; 4], Mat) {
        let a = self.drift(alpha);
        let mut dm = [0.0; 4];
        for i in 0..4 {
            dm[i] = (0..4).map(|j| a[i][j] * mean[j]).sum();
        }
        dm[3] -= SQRT2 * self.g0 * n;
        let mut av = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                av[i][j] = (0..4).map(|k| a[i][k] * cov[k][j]).sum();
            }
        }
        let mut dv = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                dv[i][j] = av[i][j] + av[j][i];
            }
            dv[i][i] += self.diffusion[i];
        }
        (dm, dv)
    }

    /// One RK4 step of length h with (α, N) given at t, t + h/2 and t + h.
    pub(crate) fn step(&self, s: &mut MomentState, h: f64, alpha: [Complex64; 3], n: [f64; 3]) {
        let add = |m: &[f64; 4], v: &Mat, dm: &[f64; 4], dv: &Mat, f: f64| -> ([f64; 4], Mat) {
            let m2 = std::array::from_fn(|i| m[i] + f * dm[i]);
            let v2 = std::array::from_fn(|i| std::array::from_fn(|j| v[i][j] + f * dv[i][j]));
            (m2, v2)
        };
        let (m0, v0) = (s.mean, s.cov);
        let (k1m, k1v) = self.rate(alpha[0], n[0], &m0, &v0);
        let (m, v) = add(&m0, &v0, &k1m, &k1v, 0.5 * h);
        let (k2m, k2v) = self.rate(alpha[1], n[1], &m, &v);
        let (m, v) = add(&m0, &v0, &k2m, &k2v, 0.5 * h);
        let (k3m, k3v) = self.rate(alpha[1], n[1], &m, &v);
        let (m, v) = add(&m0, &v0, &k3m, &k3v, h);
        let (k4m, k4v) = self.rate(alpha[2], n[2], &m, &v);
        let c = h / 6.0;
        for i in 0..4 {
            s.mean[i] += c * (k1m[i] + 2.0 * k2m[i] + 2.0 * k3m[i] + k4m[i]);
            for j in 0..4 {
                s.cov[i][j] += c * (k1v[i][j] + 2.0 * k2v[i][j] + 2.0 * k3v[i][j] + k4v[i][j]);
            }
        }
        s.t += h;
    }
}

/// Options for [`evolve_moments`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentOptions {
    /// Record every this many integrator steps.
    pub record_every: usize,
    /// Thermal occupation of the mechanical bath (rate Γ_m from the params).
    pub n_th: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions { record_every: 1, n_th: 0.0 }
    }
}

/// Largest allowed h·max(ω_m, |Δ|, κ) for the moment integrator.
pub const MAX_PHASE_PER_STEP: f64 = 0.1;

pub(crate) fn check_step(params: &SystemParams, h: f64) -> Result<()> {
    let fastest = params.omega_m.max(params.delta.abs()).max(params.kappa);
    if h * fastest > MAX_PHASE_PER_STEP {
        return Err(Error::Resolution(format!(
            "moment step {h:.3e} times fastest rate {fastest:.3e} exceeds {MAX_PHASE_PER_STEP}"
        )));
    }
    Ok(())
}

pub(crate) fn blow_up(params: &SystemParams, s: &MomentState) -> Option<Error> {
    let bad = s.mean.iter().chain(s.cov.iter().flatten()).any(|x| !x.is_finite() || x.abs() > BLOW_UP);
    bad.then(|| {
        Error::Stability(format!(
            "moments diverged at t = {:.4e}; |G| = {:.4e} against omega_m/2 = {:.4e}",
            s.t,
            params.coupling(),
            0.5 * params.omega_m
        ))
    })
}

/// Integrate the moment equations along a field trajectory sampled with
/// step dt. The integrator step is 2·dt so that α and N are available at the
/// RK4 midpoints. `n` defaults to zero; it must match `alpha` in length.
/// Records `initial` and then every `record_every` steps up to `t_end`.
pub fn evolve_moments(
    params: &SystemParams,
    alpha: &[Complex64],
    n: Option<&[f64]>,
    dt: f64,
    initial: &MomentState,
    t_end: f64,
    opts: MomentOptions,
) -> Result<Vec<MomentState>> {
    let h = 2.0 * dt;
    check_step(params, h)?;
    if let Some(n) = n {
        if n.len() != alpha.len() {
            return Err(Error::InvalidParameter("N and alpha differ in length".into()));
        }
    }
    let steps = ((t_end - initial.t) / h).round().max(0.0) as usize;
    if 2 * steps + 1 > alpha.len() {
        return Err(Error::InsufficientData(format!(
            "{} field samples cover fewer than {steps} moment steps",
            alpha.len()
        )));
    }
    let every = opts.record_every.max(1);
    let sys = MomentSystem::new(params, opts.n_th);
    let nv = |i: usize| n.map_or(0.0, |n| n[i]);
    let mut s = *initial;
    let mut out = Vec::with_capacity(steps / every + 1);
    out.push(s);
    for j in 0..steps {
        let i = 2 * j;
        sys.step(&mut s, h, [alpha[i], alpha[i + 1], alpha[i + 2]], [nv(i), nv(i + 1), nv(i + 2)]);
        if (j + 1) % every == 0 {
            if let Some(e) = blow_up(params, &s) {
                return Err(e);
            }
            if !s.is_physical() {
                if s.cov.iter().flatten().any(|v| v.abs() > 1e6) {
                    // the eigenvalue test has lost precision on a growing state
                    return Err(Error::Stability(format!(
                        "moments growing without bound at t = {:.4e}; |G| = {:.4e} against omega_m/2 = {:.4e}",
                        s.t,
                        params.coupling(),
                        0.5 * params.omega_m
                    )));
                }
                return Err(Error::Numerical(format!(
                    "unphysical state at t = {:.4e}: symplectic eigenvalue {:.9}",
                    s.t,
                    s.min_symplectic_eigenvalue()
                )));
            }
            out.push(s);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Drive;

    fn constant(params: &SystemParams, len: usize) -> Vec<Complex64> {
        vec![params.alpha0(); len]
    }

    #[test]
    fn moment_conversions() {
        let s = MomentState::thermal(Complex64::new(1.0, -2.0), 0.3, Complex64::new(0.5, 0.25), 4.0).unwrap();
        assert!((s.a() - Complex64::new(1.0, -2.0)).norm() < 1e-15);
        assert!((s.n_a() - (0.3 + 5.0)).abs() < 1e-12);
        assert!((s.n_b() - (4.0 + 0.3125)).abs() < 1e-12);
        assert!((s.a2() - Complex64::new(1.0, -2.0).powi(2)).norm() < 1e-12);
        assert!((s.a_dag_b() - Complex64::new(1.0, 2.0) * Complex64::new(0.5, 0.25)).norm() < 1e-12);
        assert!((s.min_symplectic_eigenvalue() - 1.6).abs() < 1e-12);
        let vac = MomentState::cooling_start(0.0).unwrap();
        assert!((vac.min_symplectic_eigenvalue() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uncoupled_mechanics_keeps_occupation() {
        // a vanishing field decouples the modes
        let p = SystemParams::new(1.0, 0.1, 1e-3, -1.0, Drive::PhotonNumber(100.0)).unwrap();
        let dt = 0.02;
        let alpha = vec![Complex64::new(0.0, 0.0); 20001];
        let s0 = MomentState::thermal(Complex64::new(0.0, 0.0), 0.0, Complex64::new(2.0, 0.0), 7.0).unwrap();
        let out = evolve_moments(&p, &alpha, None, dt, &s0, 400.0, MomentOptions { record_every: 100, n_th: 0.0 }).unwrap();
        for s in &out {
            // RK4 damps a free oscillation by (hω)⁶/144 per step
            assert!((s.n_b() - 11.0).abs() < 1e-5, "{}", s.n_b());
            assert!(s.n_a().abs() < 1e-12);
        }
        // the free oscillation of ⟨b⟩ is e^{−iω_m t}
        let last = out.last().unwrap();
        let expect = Complex64::new(2.0, 0.0) * Complex64::from_polar(1.0, -last.t);
        assert!((last.b() - expect).norm() < 1e-4, "{}", (last.b() - expect).norm());
    }

    #[test]
    fn thermal_bath_equilibrates() {
        let p = SystemParams::new(1.0, 0.1, 1e-3, -1.0, Drive::PhotonNumber(1.0))
            .unwrap()
            .with_gamma_m(0.05)
            .unwrap();
        let alpha = vec![Complex64::new(0.0, 0.0); 40001];
        let s0 = MomentState::cooling_start(0.0).unwrap();
        let out = evolve_moments(&p, &alpha, None, 0.02, &s0, 800.0, MomentOptions { record_every: 1000, n_th: 3.0 }).unwrap();
        let last = out.last().unwrap();
        assert!((last.n_b() - 3.0).abs() < 1e-6, "{}", last.n_b());
        // ṅ = −Γ_m(n − n_th)
        let s = out[1];
        let expect = 3.0 * (1.0 - (-0.05 * s.t).exp());
        assert!((s.n_b() - expect).abs() < 1e-9);
    }

    #[test]
    fn step_resolution_enforced() {
        let p = SystemParams::new(1.0, 0.1, 1e-3, -1.0, Drive::PhotonNumber(1.0)).unwrap();
        let alpha = constant(&p, 101);
        let s0 = MomentState::cooling_start(0.0).unwrap();
        let e = evolve_moments(&p, &alpha, None, 0.1, &s0, 10.0, MomentOptions::default()).unwrap_err();
        assert!(matches!(e, Error::Resolution(_)));
    }

    #[test]
    fn unstable_coupling_blows_up() {
        // |G| above ω_m/2 on the blue side drives parametric amplification
        let p = SystemParams::new(1.0, 0.1, 0.07, 1.0, Drive::PhotonNumber(100.0)).unwrap();
        let alpha = constant(&p, 400_001);
        let s0 = MomentState::cooling_start(0.0).unwrap();
        let e = evolve_moments(&p, &alpha, None, 0.005, &s0, 2000.0, MomentOptions { record_every: 100, n_th: 0.0 }).unwrap_err();
        assert!(matches!(e, Error::Stability(_)), "{e}");
    }

    #[test]
    fn constant_force_displaces_mechanics() {
        // a constant N shifts ⟨X_b⟩ towards −√2g₀N/ω_m·(ω_m²/(ω_m²+Γ²/4))
        let p = SystemParams::new(1.0, 0.1, 1e-3, -1.0, Drive::PhotonNumber(1.0))
            .unwrap()
            .with_gamma_m(0.2)
            .unwrap();
        let len = 40001;
        let alpha = vec![Complex64::new(0.0, 0.0); len];
        let n = vec![2.0; len];
        let s0 = MomentState::cooling_start(0.0).unwrap();
        let out = evolve_moments(&p, &alpha, Some(&n), 0.01, &s0, 400.0, MomentOptions { record_every: 1000, n_th: 0.0 }).unwrap();
        let last = out.last().unwrap();
        let xb = -SQRT2 * 1e-3 * 2.0 / (1.0 + 0.01);
        assert!((last.mean[2] - xb).abs() < 1e-9, "{} vs {xb}", last.mean[2]);
    }
}
