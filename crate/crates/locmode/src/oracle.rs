//! Independent ground-truth engines for cross-validating the analytic
//! propagator: a direct time-domain solver of the memory-kernel equation of
//! motion, and a discretized-bath closed-system diagonalization.
//!
//! Both engines share nothing with the Laplace-domain machinery beyond the
//! model definition, so agreement between all three routes is a genuine
//! consistency check rather than a tautology.
//!
//! The discretized bath replaces each reservoir band by oscillators at bin
//! midpoints. A bin centered at w with integrated density increment S
//! contributes one oscillator per positive eigenvalue lambda of 2 w S, with
//! coupling row sqrt(lambda) u, so the discrete sum over modes reproduces
//! the continuum density band by band. `modes_per_band` counts oscillators;
//! the bin count is that budget divided by the detected rank of the band's
//! weight matrix.

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;

use crate::analysis;
use crate::error::OracleError;
use crate::kernels::{coth_thermal, KernelEvaluator};
use crate::linalg;
use crate::model::{GaussianState, SystemModel};
use crate::quad::{adaptive_gk, integrate_left_edge, integrate_right_edge};

/// Uniform-grid samples of the propagator from direct time stepping.
pub struct VolterraSolution {
    pub dt: f64,
    pub t: Vec<f64>,
    pub green: Vec<Array2<f64>>,
    pub green_dot: Vec<Array2<f64>>,
}

/// Second-order (Heun) time stepping of
/// `Gdotdot = -V G + 2 (eta * G)`, `G(0) = 0`, `Gdot(0) = I`,
/// with trapezoidal convolution quadrature on the step grid. Both endpoint
/// weights of the trapezoid vanish identically (G(0) = 0, eta(0) = 0), so
/// the memory sum is explicit; it is evaluated as one matrix product per
/// step against the stacked history.
pub fn volterra_solve(
    ev: &KernelEvaluator,
    dt: f64,
    t_max: f64,
) -> Result<VolterraSolution, OracleError> {
    assert!(dt > 0.0 && t_max > 0.0);
    let model = ev.model();
    let n = model.n();
    let steps = (t_max / dt).ceil() as usize;
    let stable = analysis::stability_scan(ev, false)
        .map_err(|e| OracleError::from(crate::error::QuadratureError::from_analysis(e)))?;
    // Kernel samples on the grid; eta(0) = 0 exactly.
    let eta: Vec<Array2<f64>> = (0..=steps)
        .into_par_iter()
        .map(|k| ev.dissipation_kernel(k as f64 * dt))
        .collect::<Result<_, _>>()?;
    // Stacked history: hist rows [(j-1) n .. j n) hold G_j; eta_stack is
    // filled upward from the bottom so that the slice covering the last i
    // blocks reads [eta_i; ...; eta_1] top to bottom.
    let cap = steps + 1;
    let mut hist = Array2::<f64>::zeros((cap * n, n));
    let mut eta_stack = Array2::<f64>::zeros((cap * n, n));
    let mut g = Array2::<f64>::zeros((n, n));
    let mut gd = Array2::<f64>::eye(n);
    let mut t_out = Vec::with_capacity(steps + 1);
    let mut g_out = Vec::with_capacity(steps + 1);
    let mut gd_out = Vec::with_capacity(steps + 1);
    t_out.push(0.0);
    g_out.push(g.clone());
    gd_out.push(gd.clone());
    let v = model.v();
    let bound = 1e9;
    for i in 0..steps {
        // Acceleration at t_i: A_i = -V G_i + 2 dt Sum_j eta_{i-j} G_j.
        let acc_i = if i == 0 {
            Array2::zeros((n, n))
        } else {
            let a = eta_stack.slice(s![(cap - i) * n.., ..]);
            let b = hist.slice(s![0..i * n, ..]);
            let mut conv = a.t().dot(&b);
            conv *= 2.0 * dt;
            conv - v.dot(&g)
        };
        // Predictor (Euler) for the state; the memory sum at t_{i+1} is
        // already explicit, so only the local -V G term needs the predictor.
        let g_pred = &g + &(dt * &gd);
        // Convolution at t_{i+1} over history G_1..G_i.
        eta_stack
            .slice_mut(s![(cap - (i + 1)) * n..(cap - i) * n, ..])
            .assign(&eta[i + 1]);
        let conv_next = {
            let a = eta_stack.slice(s![(cap - (i + 1)) * n.., ..]);
            let b = hist.slice(s![0..(i + 1) * n, ..]);
            // History block j = i + 1 (G_{i+1}) carries weight eta(0) = 0,
            // so rows beyond i n are zero and harmless; restrict anyway.
            let a = a.slice(s![0..(i + 1) * n, ..]);
            let _ = b;
            let b = hist.slice(s![0..(i + 1) * n, ..]);
            let mut c = a.t().dot(&b);
            c *= 2.0 * dt;
            c
        };
        let acc_next = &conv_next - &v.dot(&g_pred);
        // Heun update.
        let gd_next = &gd + &(0.5 * dt * (&acc_i + &acc_next));
        let g_next = &g + &(0.5 * dt * (&gd + &gd_next));
        g = g_next;
        gd = gd_next;
        hist.slice_mut(s![i * n..(i + 1) * n, ..]).assign(&g);
        let norm = g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if stable.stable && norm > bound {
            return Err(OracleError::StepTooLarge { dt, bound });
        }
        t_out.push((i + 1) as f64 * dt);
        g_out.push(g.clone());
        gd_out.push(gd.clone());
    }
    Ok(VolterraSolution { dt, t: t_out, green: g_out, green_dot: gd_out })
}

/// One bosonic reservoir band discretized into oscillators.
#[derive(Clone, Debug)]
pub struct DiscretizedBath {
    pub n: usize,
    /// Oscillator frequencies (bin midpoints, possibly repeated across the
    /// rank of a bin).
    pub frequencies: Vec<f64>,
    /// Coupling rows: oscillator k couples as x_k (couplings[k] . x_sys).
    pub couplings: Array2<f64>,
    /// Initial temperature of each oscillator (from its reservoir).
    pub temperatures: Vec<f64>,
    /// Recurrence-time estimate 2 pi / (minimum bin width); comparisons are
    /// only meaningful for t well below this.
    pub t_rec: f64,
}

/// Deterministic midpoint discretization of every reservoir band, with bin
/// weights equal to the local integral of the physical spectral density.
pub fn discretize_bath(
    model: &SystemModel,
    modes_per_band: usize,
) -> Result<DiscretizedBath, OracleError> {
    if modes_per_band < 2 {
        return Err(OracleError::TooFewModes { requested: modes_per_band, minimum: 2 });
    }
    let n = model.n();
    let g2 = model.coupling() * model.coupling();
    let mut frequencies = Vec::new();
    let mut rows: Vec<Array1<f64>> = Vec::new();
    let mut temperatures = Vec::new();
    let mut min_width = f64::INFINITY;
    for reservoir in model.reservoirs() {
        let temp = reservoir.temperature;
        for &(lo, hi) in &reservoir.density.bands() {
            // Band-integrated weight fixes the per-bin oscillator count.
            let band_total = band_increment(reservoir, lo, hi, lo, hi, n)?;
            let (band_eigs, _) = linalg::eigh(&band_total, false)?;
            let max_eig = band_eigs[band_eigs.len() - 1].max(1e-300);
            let rank = band_eigs.iter().filter(|&&e| e > 1e-10 * max_eig).count().max(1);
            let bins = modes_per_band / rank;
            if bins < 2 {
                return Err(OracleError::TooFewModes {
                    requested: modes_per_band,
                    minimum: 2 * rank,
                });
            }
            let width = (hi - lo) / bins as f64;
            min_width = min_width.min(width);
            for j in 0..bins {
                let a = lo + j as f64 * width;
                let b = a + width;
                let omega = 0.5 * (a + b);
                let s_bin = band_increment(reservoir, a, b, lo, hi, n)?;
                // Oscillators from the PSD square root of 2 w g^2 S.
                let mut m = s_bin;
                m *= 2.0 * omega * g2;
                let (eigs, vecs) = linalg::eigh(&m, true)?;
                let vecs = vecs.unwrap();
                let scale = eigs[eigs.len() - 1].abs().max(1e-300);
                for (r, &lam) in eigs.iter().enumerate() {
                    if lam < -1e-10 * scale {
                        return Err(OracleError::NonPsdBin { omega, eig: lam });
                    }
                    if lam <= 1e-14 * scale {
                        continue;
                    }
                    let mut row = vecs.column(r).to_owned();
                    row *= lam.sqrt();
                    frequencies.push(omega);
                    rows.push(row);
                    temperatures.push(temp);
                }
            }
        }
    }
    let k_total = rows.len();
    let mut couplings = Array2::zeros((k_total, n));
    for (k, row) in rows.iter().enumerate() {
        couplings.row_mut(k).assign(row);
    }
    let t_rec = if min_width.is_finite() {
        2.0 * std::f64::consts::PI / min_width
    } else {
        f64::INFINITY
    };
    Ok(DiscretizedBath { n, frequencies, couplings, temperatures, t_rec })
}

/// Integral of one reservoir's unit density over [a, b], using edge-aware
/// substitutions when a or b touches the band boundary.
fn band_increment(
    reservoir: &crate::model::ReservoirSpec,
    a: f64,
    b: f64,
    band_lo: f64,
    band_hi: f64,
    n: usize,
) -> Result<Array2<f64>, OracleError> {
    let mut f = |w: f64, out: &mut [f64]| {
        let d = reservoir.density.eval(w);
        out.copy_from_slice(d.as_slice().unwrap());
    };
    let tol = 1e-12;
    let dim = n * n;
    let (vals, _) = if a == band_lo && b == band_hi {
        // Whole band: substitute both edges by splitting at the midpoint.
        let mid = 0.5 * (a + b);
        let (left, _) = integrate_left_edge(&mut f, a, mid, dim, tol, 1e-11)?;
        let (right, _) = integrate_right_edge(&mut f, mid, b, dim, tol, 1e-11)?;
        let sum: Vec<f64> = left.iter().zip(right.iter()).map(|(x, y)| x + y).collect();
        (sum, 0.0)
    } else if a == band_lo {
        integrate_left_edge(&mut f, a, b, dim, tol, 1e-11)?
    } else if b == band_hi {
        integrate_right_edge(&mut f, a, b, dim, tol, 1e-11)?
    } else {
        adaptive_gk(&mut f, a, b, dim, tol, 1e-11)?
    };
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = vals[i * n + j];
        }
    }
    Ok(out)
}

/// Discrete-sum dissipation kernel of a bath:
/// `Sum_k c_k c_k' sin(w_k t) / (2 w_k)`. Converges to the continuum kernel
/// for t well below the recurrence time.
pub fn discrete_dissipation_kernel(bath: &DiscretizedBath, t: f64) -> Array2<f64> {
    let n = bath.n;
    let mut out = Array2::zeros((n, n));
    for (k, &w) in bath.frequencies.iter().enumerate() {
        let c = bath.couplings.row(k);
        let f = (w * t).sin() / (2.0 * w);
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] += f * c[i] * c[j];
            }
        }
    }
    out
}

/// Exact Gaussian evolution of system plus discretized bath, via one dense
/// diagonalization of the total quadratic form
/// `W = [[V, C'], [C, diag(w_k^2)]]`.
pub struct ClosedSystem {
    n: usize,
    m: usize,
    /// Normal-mode frequencies, ascending.
    nu: Vec<f64>,
    /// Eigenvectors of W as columns.
    u: Array2<f64>,
    /// Initial bath covariance diagonals (positions, momenta).
    bath_qq: Vec<f64>,
    bath_pp: Vec<f64>,
}

impl ClosedSystem {
    pub fn new(model: &SystemModel, bath: &DiscretizedBath) -> Result<Self, OracleError> {
        let n = model.n();
        let k = bath.frequencies.len();
        let m = n + k;
        let mut w = Array2::zeros((m, m));
        for i in 0..n {
            for j in 0..n {
                w[[i, j]] = model.v()[[i, j]];
            }
        }
        for (kk, &omega) in bath.frequencies.iter().enumerate() {
            w[[n + kk, n + kk]] = omega * omega;
            for i in 0..n {
                w[[i, n + kk]] = bath.couplings[[kk, i]];
                w[[n + kk, i]] = bath.couplings[[kk, i]];
            }
        }
        let (mu, vecs) = linalg::eigh(&w, true)?;
        if mu[0] <= 0.0 {
            return Err(OracleError::IndefiniteTotalForm);
        }
        let nu: Vec<f64> = mu.iter().map(|&v| v.sqrt()).collect();
        let bath_qq: Vec<f64> = bath
            .frequencies
            .iter()
            .zip(&bath.temperatures)
            .map(|(&w, &t)| coth_thermal(w, t) / (2.0 * w))
            .collect();
        let bath_pp: Vec<f64> = bath
            .frequencies
            .iter()
            .zip(&bath.temperatures)
            .map(|(&w, &t)| 0.5 * w * coth_thermal(w, t))
            .collect();
        Ok(ClosedSystem { n, m, nu, u: vecs.unwrap(), bath_qq, bath_pp })
    }

    /// Normal-mode frequencies of the total form, ascending.
    pub fn normal_frequencies(&self) -> &[f64] {
        &self.nu
    }

    /// System-block means at time t for a system-supported initial state
    /// (bath means zero): x(t), p(t).
    pub fn mean_at(&self, state: &GaussianState, t: f64) -> (Array1<f64>, Array1<f64>) {
        let n = self.n;
        let u_s = self.u.slice(s![0..n, ..]);
        let x0 = state.mean.slice(s![0..n]).to_owned();
        let p0 = state.mean.slice(s![n..2 * n]).to_owned();
        let q0 = u_s.t().dot(&x0);
        let pn0 = u_s.t().dot(&p0);
        let mut qx = Array1::zeros(self.m);
        let mut qp = Array1::zeros(self.m);
        for l in 0..self.m {
            let (sn, cs) = (self.nu[l] * t).sin_cos();
            qx[l] = cs * q0[l] + sn / self.nu[l] * pn0[l];
            qp[l] = -self.nu[l] * sn * q0[l] + cs * pn0[l];
        }
        (u_s.dot(&qx), u_s.dot(&qp))
    }

    /// Total energy of the mean trajectory started from a system-supported
    /// state; conserved exactly by the normal-mode rotation.
    pub fn mean_energy(&self, state: &GaussianState, t: f64) -> f64 {
        let n = self.n;
        let u_s = self.u.slice(s![0..n, ..]);
        let x0 = state.mean.slice(s![0..n]).to_owned();
        let p0 = state.mean.slice(s![n..2 * n]).to_owned();
        let q0 = u_s.t().dot(&x0);
        let pn0 = u_s.t().dot(&p0);
        let mut e = 0.0;
        for l in 0..self.m {
            let (sn, cs) = (self.nu[l] * t).sin_cos();
            let q = cs * q0[l] + sn / self.nu[l] * pn0[l];
            let p = -self.nu[l] * sn * q0[l] + cs * pn0[l];
            e += 0.5 * (p * p + self.nu[l] * self.nu[l] * q * q);
        }
        e
    }

    /// Evolved system marginals at the requested times. The initial state is
    /// the given system Gaussian in product with the thermal bath.
    pub fn evolve_many(
        &self,
        state: &GaussianState,
        ts: &[f64],
    ) -> Result<Vec<GaussianState>, OracleError> {
        let n = self.n;
        let m = self.m;
        assert_eq!(state.n(), n, "state dimension must match the system");
        let u_s = self.u.slice(s![0..n, ..]);
        let u_b = self.u.slice(s![n.., ..]);
        // Congruence of the initial covariance into the normal basis:
        // W_ab = U' sigma0_ab U for each phase-space block.
        let sxx = state.cov.slice(s![0..n, 0..n]);
        let sxp = state.cov.slice(s![0..n, n..2 * n]);
        let spp = state.cov.slice(s![n..2 * n, n..2 * n]);
        let mut w_xx = u_s.t().dot(&sxx.dot(&u_s));
        let mut w_pp = u_s.t().dot(&spp.dot(&u_s));
        let w_xp = u_s.t().dot(&sxp.dot(&u_s));
        {
            // Bath contributions: diagonal congruences U_b' diag U_b.
            let mut scaled = u_b.to_owned();
            for (k, mut row) in scaled.rows_mut().into_iter().enumerate() {
                row *= self.bath_qq[k];
            }
            w_xx = w_xx + u_b.t().dot(&scaled);
            let mut scaled = u_b.to_owned();
            for (k, mut row) in scaled.rows_mut().into_iter().enumerate() {
                row *= self.bath_pp[k];
            }
            w_pp = w_pp + u_b.t().dot(&scaled);
        }
        let mut out = Vec::with_capacity(ts.len());
        for &t in ts {
            let mut cw = Array1::zeros(m);
            let mut sw = Array1::zeros(m);
            let mut nw = Array1::zeros(m);
            for l in 0..m {
                let (sn, cs) = (self.nu[l] * t).sin_cos();
                cw[l] = cs;
                sw[l] = sn / self.nu[l];
                nw[l] = -self.nu[l] * sn;
            }
            // x rows weight (cos, sin/nu); p rows weight (-nu sin, cos).
            let sandwich = |aw: &Array1<f64>, wmat: &Array2<f64>, bw: &Array1<f64>| {
                let mut left = u_s.to_owned();
                for (l, mut col) in left.columns_mut().into_iter().enumerate() {
                    col *= aw[l];
                }
                let mut mid = left.dot(wmat);
                for (l, mut col) in mid.columns_mut().into_iter().enumerate() {
                    col *= bw[l];
                }
                mid.dot(&u_s.t())
            };
            let w_px = w_xp.t().to_owned();
            let sxx_t = sandwich(&cw, &w_xx, &cw)
                + sandwich(&cw, &w_xp, &sw)
                + sandwich(&sw, &w_px, &cw)
                + sandwich(&sw, &w_pp, &sw);
            let sxp_t = sandwich(&cw, &w_xx, &nw)
                + sandwich(&cw, &w_xp, &cw)
                + sandwich(&sw, &w_px, &nw)
                + sandwich(&sw, &w_pp, &cw);
            let spp_t = sandwich(&nw, &w_xx, &nw)
                + sandwich(&nw, &w_xp, &cw)
                + sandwich(&cw, &w_px, &nw)
                + sandwich(&cw, &w_pp, &cw);
            let (mx, mp) = self.mean_at(state, t);
            let mut mean = Array1::zeros(2 * n);
            let mut cov = Array2::zeros((2 * n, 2 * n));
            for i in 0..n {
                mean[i] = mx[i];
                mean[n + i] = mp[i];
                for j in 0..n {
                    cov[[i, j]] = sxx_t[[i, j]];
                    cov[[i, n + j]] = sxp_t[[i, j]];
                    cov[[n + j, i]] = sxp_t[[i, j]];
                    cov[[n + i, n + j]] = spp_t[[i, j]];
                }
            }
            // Exact symmetrization against rounding before validation.
            let cov_t = cov.t().to_owned();
            let mut sym = cov + cov_t;
            sym *= 0.5;
            out.push(GaussianState::new(mean, sym)?);
        }
        Ok(out)
    }
}
