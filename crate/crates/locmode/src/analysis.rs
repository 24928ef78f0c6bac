//! Laplace-domain spectral analysis: eigenvalue curves of the inverse
//! propagator, localized (dissipationless) modes in spectral gaps, critical
//! couplings, and dynamical stability.
//!
//! The central object is the real symmetric matrix
//!
//! ```text
//! L(iy, g) = -y^2 I + V - 2 g^2 eta'(iy)        (y in a spectral gap)
//! ```
//!
//! whose eigenvalue curves lambda_k(iy, g) are tracked continuously in y and
//! in g. A localized mode of curve k is a root lambda_k(i w, g) = 0 with w
//! in a gap; its residue amplitude and rank-one projector follow from the
//! zero eigenvector and the curve slope at the root. Curve identity is fixed
//! by continuity to the g = 0 limit, where curve k is the k-th normal mode
//! of V in ascending frequency order.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::AnalysisError;
use crate::kernels::KernelEvaluator;
use crate::linalg;
use crate::model::SystemModel;

/// Grid resolution for eigencurve tracking.
#[derive(Clone, Copy, Debug)]
pub struct GridSpec {
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { points: 200 }
    }
}

/// Eigenvalue curves of L(iy, g) across one spectral gap, continuity-tracked.
#[derive(Clone, Debug)]
pub struct EigencurveSet {
    pub gap: usize,
    /// Grid points, ascending, strictly inside the gap.
    pub y: Vec<f64>,
    /// lambda[(j, k)]: value of curve k at y[j].
    pub lambda: Array2<f64>,
    /// Per grid point, eigenvectors as columns aligned with curve order.
    pub vectors: Vec<Array2<f64>>,
    /// Whether curve k decreases monotonically across the grid.
    pub monotone_decreasing: Vec<bool>,
}

/// An undamped mode bound in a spectral gap.
#[derive(Clone, Debug)]
pub struct LocalizedMode {
    /// Curve index (continuity-connected to the k-th normal mode at g = 0).
    pub curve: usize,
    /// Index of the gap containing the mode.
    pub gap: usize,
    /// Mode frequency, strictly inside the gap.
    pub frequency: f64,
    /// Residue amplitude; tends to 1 as g -> 0 for an in-gap bare mode.
    pub residue: f64,
    /// Rank-one symmetric projector onto the mode direction.
    pub projector: Array2<f64>,
}

/// Result of solving for the coupling at which a curve's gap-edge value
/// crosses zero.
#[derive(Clone, Copy, Debug)]
pub struct CriticalCoupling {
    pub g: f64,
    /// The transform diverges at the relevant band edge, so a localized mode
    /// exists at any coupling: g is exactly zero by that mechanism.
    pub edge_divergent: bool,
}

/// Dynamical stability summary at fixed coupling.
#[derive(Clone, Copy, Debug)]
pub struct StabilityReport {
    pub stable: bool,
    /// min_k lambda_k(0, g); positive iff stable.
    pub min_lambda_zero: f64,
    /// Coupling at which stability is lost (bisection), if requested and
    /// reachable.
    pub g_unstable: Option<f64>,
}

/// One evaluated point of a phase diagram.
#[derive(Clone, Debug)]
pub struct PhasePoint {
    pub param: f64,
    pub coupling: f64,
    pub stable: bool,
    /// Localized-mode count per gap (same order as `SystemModel::gaps`).
    pub modes_per_gap: Vec<usize>,
    /// All localized-mode frequencies, ascending.
    pub frequencies: Vec<f64>,
}

/// Real symmetric inverse-propagator matrix L(iy, g) for y in a gap.
pub fn lambda_matrix(
    ev: &KernelEvaluator,
    y: f64,
    g: f64,
) -> Result<Array2<f64>, AnalysisError> {
    let lap = ev.laplace_unit(Complex64::new(0.0, y))?;
    Ok(assemble_lambda(ev.model(), &lap, -y * y, g))
}

/// Real symmetric L(x, g) for real Laplace argument x >= 0.
pub fn lambda_matrix_real(
    ev: &KernelEvaluator,
    x: f64,
    g: f64,
) -> Result<Array2<f64>, AnalysisError> {
    let lap = ev.laplace_unit(Complex64::new(x, 0.0))?;
    Ok(assemble_lambda(ev.model(), &lap, x * x, g))
}

fn assemble_lambda(
    model: &SystemModel,
    lap_unit: &Array2<Complex64>,
    s_squared: f64,
    g: f64,
) -> Array2<f64> {
    let n = model.n();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            out[[i, j]] = model.v()[[i, j]] - 2.0 * g * g * lap_unit[[i, j]].re;
        }
        out[[i, i]] += s_squared;
    }
    out
}

/// Deterministic eigenvector sign: first component that is clearly nonzero
/// is made positive.
fn fix_sign(u: &mut Array1<f64>) {
    let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for &v in u.iter() {
        if v.abs() > 1e-8 * scale {
            if v < 0.0 {
                u.mapv_inplace(|x| -x);
            }
            break;
        }
    }
}

/// Eigen-decompose a real symmetric matrix and order columns by maximal
/// overlap with a reference basis. Returns (values, vectors, worst overlap).
fn eigh_matched(
    m: &Array2<f64>,
    reference: &Array2<f64>,
) -> Result<(Array1<f64>, Array2<f64>, f64), AnalysisError> {
    let n = m.nrows();
    let (vals, vecs) = linalg::eigh(m, true)?;
    let vecs = vecs.unwrap();
    // Greedy assignment on the absolute overlap matrix.
    let mut overlap = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let o: f64 = reference.column(i).dot(&vecs.column(j));
            overlap[[i, j]] = o.abs();
        }
    }
    let mut perm = vec![usize::MAX; n];
    let mut used_ref = vec![false; n];
    let mut used_new = vec![false; n];
    let mut worst: f64 = 1.0;
    for _ in 0..n {
        let mut best = (0usize, 0usize, -1.0_f64);
        for i in 0..n {
            if used_ref[i] {
                continue;
            }
            for j in 0..n {
                if used_new[j] {
                    continue;
                }
                if overlap[[i, j]] > best.2 {
                    best = (i, j, overlap[[i, j]]);
                }
            }
        }
        perm[best.0] = best.1;
        used_ref[best.0] = true;
        used_new[best.1] = true;
        worst = worst.min(best.2);
    }
    let mut out_vals = Array1::zeros(n);
    let mut out_vecs = Array2::zeros((n, n));
    for i in 0..n {
        let j = perm[i];
        out_vals[i] = vals[j];
        let mut col = vecs.column(j).to_owned();
        fix_sign(&mut col);
        out_vecs.column_mut(i).assign(&col);
    }
    Ok((out_vals, out_vecs, worst))
}

/// March a tracked eigenbasis from `from` to `to` along a parameterized
/// symmetric matrix family, bisecting steps whose overlap falls below 0.9
/// (hard failure below 0.5 after 12 refinements).
fn track_parameter<F>(
    matrix_at: &mut F,
    from: f64,
    to: f64,
    start: (Array1<f64>, Array2<f64>),
    mut observe: Option<&mut dyn FnMut(f64, &Array1<f64>, &Array2<f64>)>,
) -> Result<(Array1<f64>, Array2<f64>), AnalysisError>
where
    F: FnMut(f64) -> Result<Array2<f64>, AnalysisError>,
{
    let (mut vals, mut vecs) = start;
    let mut t = from;
    let mut step = (to - from) / 16.0;
    if step == 0.0 {
        return Ok((vals, vecs));
    }
    while (to - t) * step.signum() > 1e-15 * (to - from).abs() {
        let mut depth = 0;
        loop {
            let target = if (to - t).abs() <= step.abs() { to } else { t + step };
            let m = matrix_at(target)?;
            let (v, u, worst) = eigh_matched(&m, &vecs)?;
            if worst >= 0.9 || depth >= 12 {
                if worst < 0.5 {
                    return Err(AnalysisError::TrackingAmbiguity { y: target, overlap: worst });
                }
                t = target;
                vals = v;
                vecs = u;
                if let Some(ref mut obs) = observe {
                    obs(t, &vals, &vecs);
                }
                if depth == 0 {
                    step *= 1.9; // cheap acceleration on easy stretches
                }
                break;
            }
            step *= 0.5;
            depth += 1;
        }
    }
    Ok((vals, vecs))
}

/// Reference basis at a gap point: continuity-connected to the normal modes
/// of V by marching the coupling up from zero at fixed y.
fn reference_basis_at(
    ev: &KernelEvaluator,
    y: f64,
    g: f64,
) -> Result<(Array1<f64>, Array2<f64>), AnalysisError> {
    let model = ev.model();
    let base = lambda_matrix(ev, y, 0.0)?;
    let (vals0, vecs0) = linalg::eigh(&base, true)?;
    let mut vecs0 = vecs0.unwrap();
    for mut col in vecs0.columns_mut() {
        let mut c = col.to_owned();
        fix_sign(&mut c);
        col.assign(&c);
    }
    if g == 0.0 {
        return Ok((vals0, vecs0));
    }
    let _ = model;
    let mut mat = |gg: f64| lambda_matrix(ev, y, gg);
    track_parameter(&mut mat, 0.0, g, (vals0, vecs0), None)
}

/// Effective upper limit for tracking across a gap: finite gaps use their
/// upper edge; the final half-infinite gap is scanned far enough that every
/// curve has gone negative (lambda ~ -y^2 eventually dominates).
fn gap_scan_range(
    ev: &KernelEvaluator,
    gap: usize,
) -> Result<(f64, f64), AnalysisError> {
    let model = ev.model();
    let gaps = model.gaps();
    if gap >= gaps.len() {
        return Err(AnalysisError::NoSuchGap { gap, available: gaps.len() });
    }
    let (lo, hi) = gaps[gap];
    let scale = model.bands().last().map(|&(_, h)| h).unwrap_or(1.0);
    let margin = 1e-7 * scale.max(1.0);
    let lo_eff = if lo == 0.0 { 0.0 } else { lo + margin };
    if hi.is_finite() {
        return Ok((lo_eff, hi - margin));
    }
    // Expand until every curve is negative at the cap.
    let omega_max = model
        .effective_frequencies()
        .iter()
        .fold(0.0_f64, |m, &v| m.max(v));
    let mut cap = (2.0 * omega_max).max(2.0 * lo.max(1.0));
    for _ in 0..60 {
        let m = lambda_matrix(ev, cap, model.coupling())?;
        let (vals, _) = linalg::eigh(&m, false)?;
        if vals[vals.len() - 1] < 0.0 {
            return Ok((lo_eff, cap));
        }
        cap *= 2.0;
    }
    Err(AnalysisError::RootBracketFailure {
        what: "no negative cap found for the half-infinite gap".into(),
    })
}

/// Track all eigenvalue curves of L(iy, g) across one gap.
pub fn eigencurves(
    ev: &KernelEvaluator,
    gap: usize,
    spec: &GridSpec,
) -> Result<EigencurveSet, AnalysisError> {
    let model = ev.model();
    let g = model.coupling();
    let n = model.n();
    let (lo, hi) = gap_scan_range(ev, gap)?;
    let points = spec.points.max(8);
    let mut y_grid = Vec::with_capacity(points);
    for j in 0..points {
        y_grid.push(lo + (hi - lo) * j as f64 / (points - 1) as f64);
    }
    let start = reference_basis_at(ev, y_grid[0], g)?;
    let mut lambda = Array2::zeros((points, n));
    let mut vectors = Vec::with_capacity(points);
    for k in 0..n {
        lambda[[0, k]] = start.0[k];
    }
    vectors.push(start.1.clone());
    let mut cur = start;
    for j in 1..points {
        let mut mat = |yy: f64| lambda_matrix(ev, yy, g);
        cur = track_parameter(&mut mat, y_grid[j - 1], y_grid[j], cur, None)?;
        for k in 0..n {
            lambda[[j, k]] = cur.0[k];
        }
        vectors.push(cur.1.clone());
    }
    let mut monotone = Vec::with_capacity(n);
    for k in 0..n {
        let mut dec = true;
        for j in 1..points {
            if lambda[[j, k]] >= lambda[[j - 1, k]] {
                dec = false;
                break;
            }
        }
        monotone.push(dec);
    }
    Ok(EigencurveSet { gap, y: y_grid, lambda, vectors, monotone_decreasing: monotone })
}

/// Stability at the model's coupling; optionally bisect for the coupling at
/// which stability is lost (lambda_k(0, g) decreases in g).
pub fn stability_scan(
    ev: &KernelEvaluator,
    find_threshold: bool,
) -> Result<StabilityReport, AnalysisError> {
    let model = ev.model();
    let min_at = |g: f64| -> Result<f64, AnalysisError> {
        let m = lambda_matrix(ev, 0.0, g)?;
        let (vals, _) = linalg::eigh(&m, false)?;
        Ok(vals[0])
    };
    let min_lambda_zero = min_at(model.coupling())?;
    let stable = min_lambda_zero > 0.0;
    let mut g_unstable = None;
    if find_threshold {
        // lambda_min(0, g) is monotone decreasing in g (the subtracted term
        // is PSD and grows as g^2), so bracket by doubling then bisect.
        let mut g_hi = model.coupling().max(1e-3);
        let mut found = false;
        for _ in 0..60 {
            if min_at(g_hi)? <= 0.0 {
                found = true;
                break;
            }
            g_hi *= 2.0;
        }
        if found {
            let mut a = 0.0;
            let mut b = g_hi;
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if min_at(mid)? > 0.0 {
                    a = mid;
                } else {
                    b = mid;
                }
                if b - a <= 1e-12 * b {
                    break;
                }
            }
            g_unstable = Some(0.5 * (a + b));
        }
    }
    Ok(StabilityReport { stable, min_lambda_zero, g_unstable })
}

/// Find every localized mode of the model at its coupling: one per
/// eigencurve sign change per gap.
pub fn find_localized_modes(ev: &KernelEvaluator) -> Result<Vec<LocalizedMode>, AnalysisError> {
    let model = ev.model();
    let g = model.coupling();
    let report = stability_scan(ev, false)?;
    if !report.stable {
        return Err(AnalysisError::UnstableModel { g });
    }
    let n = model.n();
    let n_gaps = model.gaps().len();
    let scale = model.bands().last().map(|&(_, h)| h).unwrap_or(1.0).max(1.0);
    let mut modes = Vec::new();
    for gap in 0..n_gaps {
        let set = eigencurves(ev, gap, &GridSpec { points: 160 })?;
        let pts = set.y.len();
        for k in 0..n {
            // Locate a sign change along the tracked curve.
            let mut bracket = None;
            for j in 1..pts {
                if set.lambda[[j - 1, k]] > 0.0 && set.lambda[[j, k]] <= 0.0 {
                    bracket = Some(j);
                    break;
                }
            }
            let Some(j) = bracket else { continue };
            let (mut ya, mut yb) = (set.y[j - 1], set.y[j]);
            let mut basis = set.vectors[j - 1].clone();
            let mut vals = Array1::zeros(n);
            for kk in 0..n {
                vals[kk] = set.lambda[[j - 1, kk]];
            }
            // Bisect, keeping curve identity through overlap matching with
            // the bracketing basis.
            for _ in 0..80 {
                let mid = 0.5 * (ya + yb);
                let m = lambda_matrix(ev, mid, g)?;
                let (v, u, worst) = eigh_matched(&m, &basis)?;
                if worst < 0.5 {
                    return Err(AnalysisError::TrackingAmbiguity { y: mid, overlap: worst });
                }
                if v[k] > 0.0 {
                    ya = mid;
                } else {
                    yb = mid;
                }
                basis = u;
                vals = v;
                // Run the bracket down to rounding resolution: scaling
                // studies in g need roots far tighter than grid spacing.
                if yb - ya <= (8.0 * f64::EPSILON * yb.abs()).max(1e-280) {
                    break;
                }
            }
            let w = 0.5 * (ya + yb);
            let u = basis.column(k).to_owned();
            let mut projector = Array2::zeros((n, n));
            for a in 0..n {
                for b in 0..n {
                    projector[[a, b]] = u[a] * u[b];
                }
            }
            let residue = residue_amplitude(ev, w, g, &u, scale)?;
            let _ = vals;
            modes.push(LocalizedMode { curve: k, gap, frequency: w, residue, projector });
        }
    }
    modes.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).unwrap());
    Ok(modes)
}

/// Residue amplitude gamma = 2 w / |d lambda / d y| at the root, the slope
/// taken along the curve via the eigenvector sandwich (central differences
/// of L with one Richardson level).
fn residue_amplitude(
    ev: &KernelEvaluator,
    w: f64,
    g: f64,
    u: &Array1<f64>,
    scale: f64,
) -> Result<f64, AnalysisError> {
    let slope = |h: f64| -> Result<f64, AnalysisError> {
        let lp = lambda_matrix(ev, w + h, g)?;
        let lm = lambda_matrix(ev, w - h, g)?;
        let diff = &lp - &lm;
        Ok(u.dot(&diff.dot(u)) / (2.0 * h))
    };
    let h = 1e-6 * scale;
    let d1 = slope(h)?;
    let d2 = slope(0.5 * h)?;
    let d = (4.0 * d2 - d1) / 3.0;
    Ok(2.0 * w / d.abs())
}

/// Edge exponent relevant at a given band edge: the minimum declared
/// exponent among components whose support touches it.
pub(crate) fn edge_exponent_at(model: &SystemModel, edge: f64) -> f64 {
    let mut alpha = f64::INFINITY;
    for r in model.reservoirs() {
        for (profile, _) in r.density.components() {
            let (lo, hi) = profile.support();
            let (alo, ahi) = profile.edge_exponents();
            let tol = 1e-12 * edge.abs().max(1.0);
            if (lo - edge).abs() < tol {
                alpha = alpha.min(alo);
            }
            if (hi - edge).abs() < tol {
                alpha = alpha.min(ahi);
            }
        }
    }
    alpha
}

/// Critical coupling for curve `k` and gap `gap`: the g at which the curve's
/// value at the relevant gap edge crosses zero. Returns 0 when the bare
/// frequency already sits inside the gap, and a flagged 0 when the edge
/// transform diverges (edge exponent <= 0, mode at any coupling).
pub fn critical_coupling(
    ev: &KernelEvaluator,
    k: usize,
    gap: usize,
) -> Result<CriticalCoupling, AnalysisError> {
    let model = ev.model();
    let n = model.n();
    if k >= n {
        return Err(AnalysisError::NoSuchCurve { index: k, n });
    }
    let gaps = model.gaps();
    if gap >= gaps.len() {
        return Err(AnalysisError::NoSuchGap { gap, available: gaps.len() });
    }
    let (lo, hi) = gaps[gap];
    let w0 = model.effective_frequencies()[k];
    if w0 > lo && w0 < hi {
        return Ok(CriticalCoupling { g: 0.0, edge_divergent: false });
    }
    // Relevant edge: the one separating the bare frequency from the gap.
    let edge = if w0 >= hi { hi } else { lo };
    if !edge.is_finite() || edge == 0.0 {
        return Err(AnalysisError::RootBracketFailure {
            what: format!("gap {gap} has no finite relevant edge for curve {k}"),
        });
    }
    if edge_exponent_at(model, edge) <= 0.0 {
        return Ok(CriticalCoupling { g: 0.0, edge_divergent: true });
    }
    let lap_edge = ev.laplace_unit_gap_limit(edge)?;
    let mut edge_real = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            edge_real[[i, j]] = lap_edge[[i, j]].re;
        }
    }
    let mut mat = |g: f64| -> Result<Array2<f64>, AnalysisError> {
        let mut m = model.v().clone();
        m.scaled_add(-2.0 * g * g, &edge_real);
        for i in 0..n {
            m[[i, i]] -= edge * edge;
        }
        Ok(m)
    };
    // Perturbative scale for the bracket hunt.
    let modes = model.normal_modes();
    let vk = modes.column(k).to_owned();
    let denom = vk.dot(&edge_real.dot(&vk));
    let num = w0 * w0 - edge * edge;
    let g_est = if num / denom > 0.0 { (0.5 * num / denom).sqrt() } else { f64::NAN };
    let g_start = if g_est.is_finite() { g_est / 8.0 } else { 0.1 };

    // March g upward with identity tracking until the curve's edge value
    // changes sign, watching stability along the way.
    let m0 = mat(0.0)?;
    let (vals0, vecs0) = linalg::eigh(&m0, true)?;
    let mut cur = (vals0, vecs0.unwrap());
    let sign0 = cur.0[k].signum();
    if sign0 == 0.0 {
        return Ok(CriticalCoupling { g: 0.0, edge_divergent: false });
    }
    let mut g_prev = 0.0;
    let mut g_next = g_start;
    for _ in 0..80 {
        let stab = lambda_matrix(ev, 0.0, g_next)?;
        let (svals, _) = linalg::eigh(&stab, false)?;
        let crossed;
        {
            let prev = cur.clone();
            let stepped = track_parameter(&mut mat, g_prev, g_next, prev, None)?;
            crossed = stepped.0[k].signum() != sign0;
            if !crossed {
                cur = stepped;
            }
        }
        if crossed {
            // Bisect in g with identity tracking from the stable side.
            let mut a = g_prev;
            let mut b = g_next;
            let mut basis = cur.clone();
            for _ in 0..100 {
                let mid = 0.5 * (a + b);
                let stepped = track_parameter(&mut mat, a, mid, basis.clone(), None)?;
                if stepped.0[k].signum() == sign0 {
                    a = mid;
                    basis = stepped;
                } else {
                    b = mid;
                }
                if b - a <= 1e-9 * b.max(1e-12) {
                    break;
                }
            }
            let g_c = 0.5 * (a + b);
            // Instability strictly before the crossing is a different regime.
            let stab_c = lambda_matrix(ev, 0.0, g_c)?;
            let (sv, _) = linalg::eigh(&stab_c, false)?;
            if sv[0] <= 0.0 {
                let thr = stability_scan(ev, true)?;
                return Err(AnalysisError::UnstableBeforeCritical {
                    index: k,
                    g_unstable: thr.g_unstable.unwrap_or(g_c),
                });
            }
            return Ok(CriticalCoupling { g: g_c, edge_divergent: false });
        }
        if svals[0] <= 0.0 {
            // Unstable and still no crossing for this curve.
            let thr = stability_scan(ev, true)?;
            return Err(AnalysisError::UnstableBeforeCritical {
                index: k,
                g_unstable: thr.g_unstable.unwrap_or(g_next),
            });
        }
        g_prev = g_next;
        g_next *= 1.7;
    }
    Err(AnalysisError::RootBracketFailure {
        what: format!("no zero crossing of curve {k} at the edge {edge} within the coupling range"),
    })
}

/// Evaluate stability and localized-mode counts over a parameterized family
/// of models times a list of couplings. Points are independent; evaluation
/// is parallel and the output order is deterministic (family-major).
pub fn phase_diagram(
    family: &[(f64, SystemModel)],
    couplings: &[f64],
    tol: f64,
) -> Result<Vec<PhasePoint>, AnalysisError> {
    let jobs: Vec<(f64, &SystemModel, f64)> = family
        .iter()
        .flat_map(|(p, m)| couplings.iter().map(move |&g| (*p, m, g)))
        .collect();
    jobs.into_par_iter()
        .map(|(param, m, g)| -> Result<PhasePoint, AnalysisError> {
            let model = m.with_coupling(g)?;
            let ev = KernelEvaluator::new(&model, tol);
            let stab = stability_scan(&ev, false)?;
            let n_gaps = model.gaps().len();
            if !stab.stable {
                return Ok(PhasePoint {
                    param,
                    coupling: g,
                    stable: false,
                    modes_per_gap: vec![0; n_gaps],
                    frequencies: Vec::new(),
                });
            }
            let modes = find_localized_modes(&ev)?;
            let mut per_gap = vec![0usize; n_gaps];
            for mode in &modes {
                per_gap[mode.gap] += 1;
            }
            Ok(PhasePoint {
                param,
                coupling: g,
                stable: true,
                modes_per_gap: per_gap,
                frequencies: modes.iter().map(|m| m.frequency).collect(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Profile, ReservoirSpec, SpectralDensity};
    use ndarray::array;

    fn semicircle_model(v: Array2<f64>, g: f64) -> SystemModel {
        let n = v.nrows();
        let d = SpectralDensity::new(vec![(
            Profile::Semicircle { center: 1.0, radius: 0.4, amplitude: 0.05 },
            Array2::eye(n),
        )])
        .unwrap();
        SystemModel::new(v, vec![ReservoirSpec::new(d, 0.0).unwrap()], g).unwrap()
    }

    #[test]
    fn free_eigencurves_are_exact_parabolas() {
        let m = semicircle_model(array![[0.25]], 0.0);
        let ev = KernelEvaluator::new(&m, 1e-11);
        let set = eigencurves(&ev, 0, &GridSpec { points: 40 }).unwrap();
        for (j, &y) in set.y.iter().enumerate() {
            assert!((set.lambda[[j, 0]] - (0.25 - y * y)).abs() < 1e-13);
        }
        assert!(set.monotone_decreasing.iter().all(|&b| b));
    }

    #[test]
    fn free_oscillator_mode_is_recovered_exactly() {
        let m = semicircle_model(array![[0.25]], 0.0);
        let ev = KernelEvaluator::new(&m, 1e-11);
        let modes = find_localized_modes(&ev).unwrap();
        // Lower gap: mode at the bare frequency. Upper gap: none (0.5 < 1.4).
        assert_eq!(modes.len(), 1);
        let mode = &modes[0];
        assert_eq!(mode.gap, 0);
        assert!((mode.frequency - 0.5).abs() < 1e-9);
        assert!((mode.residue - 1.0).abs() < 1e-7);
        assert!((mode.projector[[0, 0]] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn coupled_modes_shift_down_and_projectors_are_rank_one() {
        // Two bare modes in the lower gap; weak coupling shifts frequencies
        // down (PSD in-gap transform) and keeps projectors near the normal
        // modes of V.
        let v = array![[0.2, 0.03], [0.03, 0.3]];
        let m = semicircle_model(v, 0.08);
        let ev = KernelEvaluator::new(&m, 1e-11);
        let modes = find_localized_modes(&ev).unwrap();
        let lower: Vec<_> = modes.iter().filter(|mo| mo.gap == 0).collect();
        assert_eq!(lower.len(), 2);
        let w0 = m.effective_frequencies();
        for (mode, &bare) in lower.iter().zip(w0.iter()) {
            assert!(mode.frequency < bare, "bath coupling lowers the mode");
            assert!(bare - mode.frequency < 0.05, "weak coupling: small shift");
            // Projector: symmetric, idempotent, trace one.
            let p = &mode.projector;
            let p2 = p.dot(p);
            let mut trace = 0.0;
            for i in 0..2 {
                trace += p[[i, i]];
                for j in 0..2 {
                    assert!((p2[[i, j]] - p[[i, j]]).abs() < 1e-8);
                }
            }
            assert!((trace - 1.0).abs() < 1e-8);
            assert!(mode.residue > 0.9 && mode.residue < 1.0);
        }
    }

    #[test]
    fn coupling_lowers_curves_pointwise_in_gap() {
        let m1 = semicircle_model(array![[0.25]], 0.1);
        let m2 = semicircle_model(array![[0.25]], 0.2);
        let e1 = KernelEvaluator::new(&m1, 1e-11);
        for &y in &[0.1, 0.3, 0.5] {
            let a = lambda_matrix(&e1, y, 0.1).unwrap()[[0, 0]];
            let b = lambda_matrix(&e1, y, 0.2).unwrap()[[0, 0]];
            assert!(b < a, "doubling g lowers lambda in the lower gap");
        }
        let _ = m2;
        // And lambda increases along the real axis.
        let mut prev = f64::NEG_INFINITY;
        for &x in &[0.0, 0.3, 0.8, 1.5] {
            let v = lambda_matrix_real(&e1, x, 0.1).unwrap()[[0, 0]];
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn residue_matches_contour_integral_of_resolvent() {
        // Numerically integrate the resolvent around the mode pole on the
        // imaginary axis; the residue must equal gamma Omega / (2 i w).
        let m = semicircle_model(array![[0.25]], 0.1);
        let ev = KernelEvaluator::new(&m, 1e-12);
        let mode = &find_localized_modes(&ev).unwrap()[0];
        let w = mode.frequency;
        let r = 1e-3;
        let npts = 64;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..npts {
            let th = 2.0 * std::f64::consts::PI * j as f64 / npts as f64;
            let s = Complex64::new(0.0, w) + r * Complex64::new(th.cos(), th.sin());
            let lap = ev.laplace_unit(s).unwrap();
            let g = m.coupling();
            let mut inv_arg = Array2::<Complex64>::zeros((1, 1));
            inv_arg[[0, 0]] = s * s + m.v()[[0, 0]] - 2.0 * g * g * lap[[0, 0]];
            let gt = crate::linalg::inv_complex(&inv_arg).unwrap();
            // Trapezoid on the circle: dz = i r e^{i th} d th.
            let dz = Complex64::new(0.0, 1.0) * r * Complex64::new(th.cos(), th.sin());
            acc += gt[[0, 0]] * dz * (2.0 * std::f64::consts::PI / npts as f64);
        }
        let residue = acc / Complex64::new(0.0, 2.0 * std::f64::consts::PI);
        let expected = mode.residue * mode.projector[[0, 0]]
            / (Complex64::new(0.0, 2.0 * w));
        assert!(
            (residue - expected).norm() < 1e-6 * expected.norm(),
            "{residue} vs {expected}"
        );
    }

    #[test]
    fn stability_threshold_matches_narrow_line_formula() {
        // Narrow line at w1: eta'(0) ~ c / w1, so instability at
        // g^2 = w0^2 w1 / (2 c).
        let (c, w1, w0sq) = (0.01, 1.0, 0.09);
        let amplitude = 2.0 * c / (std::f64::consts::PI * 1e-8);
        let d = SpectralDensity::scalar(Profile::Semicircle {
            center: w1,
            radius: 1e-4,
            amplitude,
        })
        .unwrap();
        let m = SystemModel::new(
            array![[w0sq]],
            vec![ReservoirSpec::new(d, 0.0).unwrap()],
            0.1,
        )
        .unwrap();
        let ev = KernelEvaluator::new(&m, 1e-11);
        let rep = stability_scan(&ev, true).unwrap();
        assert!(rep.stable);
        let exact = (w0sq * w1 / (2.0 * c)).sqrt();
        let got = rep.g_unstable.unwrap();
        assert!((got - exact).abs() < 1e-4 * exact, "{got} vs {exact}");
        // And an unstable model reports as such.
        let m_bad = m.with_coupling(3.0 * exact).unwrap();
        let ev_bad = KernelEvaluator::new(&m_bad, 1e-11);
        assert!(!stability_scan(&ev_bad, false).unwrap().stable);
        assert!(matches!(
            find_localized_modes(&ev_bad),
            Err(AnalysisError::UnstableModel { .. })
        ));
    }

    #[test]
    fn critical_coupling_zero_inside_gap_and_positive_above_edge() {
        // Bare frequency inside the lower gap: critical coupling is zero.
        let m_in = semicircle_model(array![[0.25]], 0.0);
        let ev_in = KernelEvaluator::new(&m_in, 1e-11);
        let c = critical_coupling(&ev_in, 0, 0).unwrap();
        assert_eq!(c.g, 0.0);
        assert!(!c.edge_divergent);
        // Bare frequency above the gap edge (inside the band): positive
        // critical coupling, and the curve value at the edge vanishes there.
        let m_above = semicircle_model(array![[0.49]], 0.0);
        let ev = KernelEvaluator::new(&m_above, 1e-11);
        let cc = critical_coupling(&ev, 0, 0).unwrap();
        assert!(cc.g > 0.0);
        let lap_edge = ev.laplace_unit_gap_limit(0.6).unwrap()[[0, 0]].re;
        let val = 0.49 - 0.36 - 2.0 * cc.g * cc.g * lap_edge;
        assert!(val.abs() < 1e-6, "edge eigenvalue at critical coupling: {val}");
        // Critical coupling grows with bare detuning above the edge.
        let m_higher = semicircle_model(array![[0.55]], 0.0);
        let ev2 = KernelEvaluator::new(&m_higher, 1e-11);
        let cc2 = critical_coupling(&ev2, 0, 0).unwrap();
        assert!(cc2.g > cc.g);
    }

    #[test]
    fn divergent_edge_is_flagged_as_free_mode() {
        // Edge exponent <= 0 at the lower band edge: localized mode at any
        // coupling, reported as a flagged zero.
        let d = SpectralDensity::scalar(Profile::PowerBump {
            lo: 0.6,
            hi: 1.4,
            amplitude: 0.05,
            alpha_lo: -0.3,
            alpha_hi: 0.5,
        })
        .unwrap();
        let m = SystemModel::new(
            array![[0.49]],
            vec![ReservoirSpec::new(d, 0.0).unwrap()],
            0.0,
        )
        .unwrap();
        let ev = KernelEvaluator::new(&m, 1e-11);
        let cc = critical_coupling(&ev, 0, 0).unwrap();
        assert_eq!(cc.g, 0.0);
        assert!(cc.edge_divergent);
    }

    #[test]
    fn phase_diagram_counts_modes_and_stability() {
        let family: Vec<(f64, SystemModel)> = [0.25_f64, 0.49]
            .iter()
            .map(|&w0sq| (w0sq.sqrt(), semicircle_model(array![[w0sq]], 0.0)))
            .collect();
        let pts = phase_diagram(&family, &[0.0, 0.12], 1e-10).unwrap();
        assert_eq!(pts.len(), 4);
        // (w0 = 0.5, g = 0): in-gap bare mode -> one lower-gap mode.
        assert!(pts[0].stable);
        assert_eq!(pts[0].modes_per_gap[0], 1);
        // (w0 = 0.7, g = 0): bare mode inside the band -> no localized mode.
        assert!(pts[2].stable);
        assert_eq!(pts[2].modes_per_gap[0], 0);
        // Deterministic ordering: family-major, coupling-minor.
        assert_eq!(pts[1].param, 0.5);
        assert_eq!(pts[1].coupling, 0.12);
    }
}
