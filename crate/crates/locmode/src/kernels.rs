//! Memory kernels of the reduced dynamics: the dissipation kernel eta(t),
//! the noise kernel nu(t), the Laplace transform of eta, and its boundary
//! values on the imaginary axis.
//!
//! All spectral integrals run over the reservoir bands with substitutions
//! that absorb edge singularities. Time-domain kernels are evaluated from
//! cached panelwise Legendre expansions of the band densities, so a single
//! build serves every t with uniform accuracy (the oscillatory factor is
//! integrated analytically per panel).
//!
//! Scaling convention: methods suffixed `_unit` evaluate at unit global
//! coupling; physical kernels carry the factor g^2.

use ndarray::Array2;
use num_complex::Complex64;
use once_cell::sync::OnceCell;

use crate::error::QuadratureError;
use crate::model::{Profile, SystemModel};
use crate::quad::{
    integrate_band, principal_value, PanelOpts, PanelSeries, Trig,
};

/// Relative distance to a band edge below which on-axis evaluations are
/// refused (the caller must use a dedicated edge limit).
const EDGE_EPS_REL: f64 = 1e-9;

/// Evaluator for the memory kernels of one model. Read-only after
/// construction; caches are built lazily and synchronized.
pub struct KernelEvaluator {
    model: SystemModel,
    tol: f64,
    /// Scale used to convert the relative tolerance into an absolute one.
    mass: f64,
    /// Maximal smooth segments of the band structure (split at every
    /// component support endpoint).
    segments: Vec<(f64, f64)>,
    eta_series: OnceCell<Vec<PanelSeries>>,
    nu_series: OnceCell<Vec<PanelSeries>>,
}

impl KernelEvaluator {
    pub fn new(model: &SystemModel, tol: f64) -> Self {
        let segments = smooth_segments(model);
        let mut mass = 0.0;
        for r in model.reservoirs() {
            for (profile, weight) in r.density.components() {
                let w_max = weight.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                mass += profile_mass(profile) * w_max;
            }
        }
        KernelEvaluator {
            model: model.clone(),
            tol,
            mass: mass.max(1e-300),
            segments,
            eta_series: OnceCell::new(),
            nu_series: OnceCell::new(),
        }
    }

    pub fn model(&self) -> &SystemModel {
        &self.model
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// Maximal smooth band segments (edges at every component endpoint).
    pub fn segments(&self) -> &[(f64, f64)] {
        &self.segments
    }

    fn n(&self) -> usize {
        self.model.n()
    }

    fn g2(&self) -> f64 {
        let g = self.model.coupling();
        g * g
    }

    fn eta_series(&self) -> Result<&Vec<PanelSeries>, QuadratureError> {
        if let Some(s) = self.eta_series.get() {
            return Ok(s);
        }
        let n = self.n();
        let mut built = Vec::new();
        for &(lo, hi) in &self.segments {
            let mut f = |w: f64, out: &mut [f64]| {
                let d = self.model.unit_density(w);
                out.copy_from_slice(d.as_slice().unwrap());
            };
            let opts = PanelOpts {
                grade_lo: true,
                grade_hi: true,
                tol_rel: (self.tol * 1e-2).clamp(1e-14, 1e-10),
                ..Default::default()
            };
            built.push(PanelSeries::build(&mut f, lo, hi, n * n, &opts)?);
        }
        Ok(self.eta_series.get_or_init(|| built))
    }

    fn nu_series(&self) -> Result<&Vec<PanelSeries>, QuadratureError> {
        if let Some(s) = self.nu_series.get() {
            return Ok(s);
        }
        let n = self.n();
        let mut built = Vec::new();
        for &(lo, hi) in &self.segments {
            let mut f = |w: f64, out: &mut [f64]| {
                out.fill(0.0);
                for r in self.model.reservoirs() {
                    let c = coth_thermal(w, r.temperature);
                    let d = r.density.eval(w);
                    for (o, v) in out.iter_mut().zip(d.iter()) {
                        *o += c * v;
                    }
                }
            };
            let opts = PanelOpts {
                grade_lo: true,
                grade_hi: true,
                tol_rel: (self.tol * 1e-2).clamp(1e-14, 1e-10),
                ..Default::default()
            };
            built.push(PanelSeries::build(&mut f, lo, hi, n * n, &opts)?);
        }
        Ok(self.nu_series.get_or_init(|| built))
    }

    /// Dissipation kernel eta(t) = int I(w) sin(wt) dw, t >= 0.
    pub fn dissipation_kernel(&self, t: f64) -> Result<Array2<f64>, QuadratureError> {
        assert!(t >= 0.0, "dissipation kernel defined for t >= 0");
        let n = self.n();
        let mut acc = vec![0.0; n * n];
        let mut buf = vec![0.0; n * n];
        for s in self.eta_series()? {
            s.osc_transform(t, Trig::Sin, 0, &mut buf);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b;
            }
        }
        let mut out = Array2::from_shape_vec((n, n), acc).unwrap();
        out *= self.g2();
        Ok(out)
    }

    /// Time derivative of the dissipation kernel,
    /// eta'(t) = int I(w) w cos(wt) dw.
    pub fn dissipation_kernel_dot(&self, t: f64) -> Result<Array2<f64>, QuadratureError> {
        assert!(t >= 0.0);
        let n = self.n();
        let mut acc = vec![0.0; n * n];
        let mut buf = vec![0.0; n * n];
        for s in self.eta_series()? {
            s.osc_transform(t, Trig::Cos, 1, &mut buf);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b;
            }
        }
        let mut out = Array2::from_shape_vec((n, n), acc).unwrap();
        out *= self.g2();
        Ok(out)
    }

    /// Noise kernel nu(t) = sum_alpha int I^(alpha)(w) coth(w / 2 T_alpha)
    /// cos(wt) dw; even in t, T = 0 as the exact coth -> 1 limit.
    pub fn noise_kernel(&self, t: f64) -> Result<Array2<f64>, QuadratureError> {
        let n = self.n();
        let mut acc = vec![0.0; n * n];
        let mut buf = vec![0.0; n * n];
        for s in self.nu_series()? {
            s.osc_transform(t.abs(), Trig::Cos, 0, &mut buf);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b;
            }
        }
        let mut out = Array2::from_shape_vec((n, n), acc).unwrap();
        out *= self.g2();
        Ok(out)
    }

    /// Classify a point on the positive imaginary axis against the band
    /// structure: Ok(()) in a gap, errors inside a band or too close to an
    /// edge.
    fn check_gap_point(&self, y: f64) -> Result<(), QuadratureError> {
        let scale = self
            .segments
            .last()
            .map(|&(_, hi)| hi)
            .unwrap_or(1.0)
            .max(1.0);
        for &(lo, hi) in &self.segments {
            for edge in [lo, hi] {
                if (y - edge).abs() < EDGE_EPS_REL * scale {
                    return Err(QuadratureError::EdgeEvaluation {
                        edge,
                        distance: (y - edge).abs(),
                    });
                }
            }
            if y > lo && y < hi {
                return Err(QuadratureError::OnBandEvaluation { y });
            }
        }
        Ok(())
    }

    /// Unit-coupling Laplace transform of the dissipation kernel,
    /// eta'(s) = int I'(w) w / (s^2 + w^2) dw, for Re s >= 0 with s = iy
    /// allowed only in spectral gaps.
    pub fn laplace_unit(&self, s: Complex64) -> Result<Array2<Complex64>, QuadratureError> {
        if s.re.abs() <= 1e-14 * s.norm().max(1e-300) {
            self.check_gap_point(s.im.abs())?;
        }
        if let Some(parts) = self.semicircle_parts() {
            let n = self.n();
            let mut out = Array2::<Complex64>::zeros((n, n));
            for (center, radius, weight) in parts {
                let h = semicircle_hilbert(Complex64::i() * s, center, radius)
                    + semicircle_hilbert(-Complex64::i() * s, center, radius);
                let factor = -0.5 * h;
                for i in 0..n {
                    for j in 0..n {
                        out[[i, j]] += factor * weight[[i, j]];
                    }
                }
            }
            return Ok(out);
        }
        self.laplace_unit_generic(s)
    }

    fn laplace_unit_generic(&self, s: Complex64) -> Result<Array2<Complex64>, QuadratureError> {
        let n = self.n();
        let s2 = s * s;
        let mut total = vec![0.0; 2 * n * n];
        for &(lo, hi) in &self.segments {
            let mut f = |w: f64, out: &mut [f64]| {
                let d = self.model.unit_density(w);
                let k = Complex64::new(w, 0.0) / (s2 + w * w);
                for (idx, v) in d.iter().enumerate() {
                    out[2 * idx] = v * k.re;
                    out[2 * idx + 1] = v * k.im;
                }
            };
            let (piece, _) = integrate_band(
                &mut f,
                lo,
                hi,
                2 * n * n,
                self.tol * self.mass * 1e-3,
                self.tol,
            )?;
            for (t, p) in total.iter_mut().zip(piece.iter()) {
                *t += p;
            }
        }
        let mut out = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let idx = i * n + j;
                out[[i, j]] = Complex64::new(total[2 * idx], total[2 * idx + 1]);
            }
        }
        Ok(out)
    }

    /// Physical Laplace transform g^2 eta'(s).
    pub fn laplace(&self, s: Complex64) -> Result<Array2<Complex64>, QuadratureError> {
        let mut out = self.laplace_unit(s)?;
        let g2 = Complex64::new(self.g2(), 0.0);
        out.mapv_inplace(|v| v * g2);
        Ok(out)
    }

    /// Unit-coupling boundary value on a band:
    /// lim_{e -> 0+} eta'(e + iy) = PV int I'(w) w/(w^2-y^2) dw - i (pi/2) I'(y),
    /// with the jump part assembled analytically from the density.
    pub fn boundary_unit(&self, y: f64) -> Result<Array2<Complex64>, QuadratureError> {
        let n = self.n();
        let scale = self.segments.last().map(|&(_, hi)| hi).unwrap_or(1.0).max(1.0);
        let mut containing = None;
        for &(lo, hi) in &self.segments {
            for edge in [lo, hi] {
                if (y - edge).abs() < EDGE_EPS_REL * scale {
                    return Err(QuadratureError::EdgeEvaluation {
                        edge,
                        distance: (y - edge).abs(),
                    });
                }
            }
            if y > lo && y < hi {
                containing = Some((lo, hi));
            }
        }
        let Some((clo, chi)) = containing else {
            return Err(QuadratureError::OnBandEvaluation { y });
        };
        if let Some(parts) = self.semicircle_parts() {
            // Closed form: each component contributes -A/2 [H(-y) + H(y)],
            // the second factor taken as the below-cut boundary value when y
            // lies inside that component's band.
            let mut out = Array2::<Complex64>::zeros((n, n));
            for (center, radius, weight) in parts {
                let h_neg = semicircle_hilbert(Complex64::new(-y, 0.0), center, radius);
                let h_pos = if y > center - radius && y < center + radius {
                    semicircle_hilbert_below(y, center, radius)
                } else {
                    semicircle_hilbert(Complex64::new(y, 0.0), center, radius)
                };
                let factor = -0.5 * (h_neg + h_pos);
                for i in 0..n {
                    for j in 0..n {
                        out[[i, j]] += factor * weight[[i, j]];
                    }
                }
            }
            return Ok(out);
        }
        self.boundary_unit_generic(y, (clo, chi))
    }

    fn boundary_unit_generic(
        &self,
        y: f64,
        containing: (f64, f64),
    ) -> Result<Array2<Complex64>, QuadratureError> {
        let n = self.n();
        let (clo, chi) = containing;
        // Real part: 1/2 int I'/(w+y) + 1/2 PV int I'/(w-y), segment by
        // segment; only the containing segment carries the pole.
        let mut real = vec![0.0; n * n];
        for &(lo, hi) in &self.segments {
            let piece = if lo == clo && hi == chi {
                let mut f = |w: f64, out: &mut [f64]| {
                    let d = self.model.unit_density(w);
                    let reg = 0.5 / (w + y);
                    for (idx, v) in d.iter().enumerate() {
                        out[idx] = v * reg;
                    }
                };
                let (mut reg_part, _) = integrate_band(
                    &mut f,
                    lo,
                    hi,
                    n * n,
                    self.tol * self.mass * 1e-3,
                    self.tol,
                )?;
                let mut h = |w: f64, out: &mut [f64]| {
                    let d = self.model.unit_density(w);
                    for (idx, v) in d.iter().enumerate() {
                        out[idx] = 0.5 * v;
                    }
                };
                let (pv_part, _) = principal_value(
                    &mut h,
                    lo,
                    hi,
                    y,
                    n * n,
                    self.tol * self.mass * 1e-3,
                    self.tol,
                    true,
                    true,
                )?;
                for (r, p) in reg_part.iter_mut().zip(pv_part.iter()) {
                    *r += p;
                }
                reg_part
            } else {
                let mut f = |w: f64, out: &mut [f64]| {
                    let d = self.model.unit_density(w);
                    let k = w / (w * w - y * y);
                    for (idx, v) in d.iter().enumerate() {
                        out[idx] = v * k;
                    }
                };
                let (piece, _) = integrate_band(
                    &mut f,
                    lo,
                    hi,
                    n * n,
                    self.tol * self.mass * 1e-3,
                    self.tol,
                )?;
                piece
            };
            for (t, p) in real.iter_mut().zip(piece.iter()) {
                *t += p;
            }
        }
        let jump = self.model.unit_density(y);
        let mut out = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] = Complex64::new(
                    real[i * n + j],
                    -std::f64::consts::FRAC_PI_2 * jump[[i, j]],
                );
            }
        }
        Ok(out)
    }

    /// Physical boundary value g^2 times [`Self::boundary_unit`].
    pub fn boundary(&self, y: f64) -> Result<Array2<Complex64>, QuadratureError> {
        let mut out = self.boundary_unit(y)?;
        let g2 = Complex64::new(self.g2(), 0.0);
        out.mapv_inplace(|v| v * g2);
        Ok(out)
    }

    /// Unit-coupling gap-side limit of eta' at a band edge, convergent when
    /// the edge exponent is positive.
    pub fn laplace_unit_gap_limit(&self, edge: f64) -> Result<Array2<Complex64>, QuadratureError> {
        if let Some(parts) = self.semicircle_parts() {
            let n = self.n();
            let mut out = Array2::<Complex64>::zeros((n, n));
            let y = Complex64::new(0.0, edge);
            for (center, radius, weight) in parts {
                let h = semicircle_hilbert(Complex64::i() * y, center, radius)
                    + semicircle_hilbert(-Complex64::i() * y, center, radius);
                let factor = -0.5 * h;
                for i in 0..n {
                    for j in 0..n {
                        out[[i, j]] += factor * weight[[i, j]];
                    }
                }
            }
            return Ok(out);
        }
        // Generic path: the integrand I'(w) w / (w^2 - edge^2) has an
        // integrable singularity at the edge when the exponent is positive;
        // the band substitutions resolve it.
        let n = self.n();
        let mut total = vec![0.0; n * n];
        for &(lo, hi) in &self.segments {
            let mut f = |w: f64, out: &mut [f64]| {
                let d = self.model.unit_density(w);
                let k = w / (w * w - edge * edge);
                for (idx, v) in d.iter().enumerate() {
                    out[idx] = v * k;
                }
            };
            let (piece, _) = integrate_band(
                &mut f,
                lo,
                hi,
                n * n,
                self.tol * self.mass * 1e-2,
                self.tol * 10.0,
            )?;
            for (t, p) in total.iter_mut().zip(piece.iter()) {
                *t += p;
            }
        }
        let mut out = Array2::<Complex64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                out[[i, j]] = Complex64::new(total[i * n + j], 0.0);
            }
        }
        Ok(out)
    }

    /// If every component of every reservoir is a semicircle, return the
    /// (center, radius, amplitude * weight) list enabling closed forms.
    fn semicircle_parts(&self) -> Option<Vec<(f64, f64, Array2<f64>)>> {
        let mut parts = Vec::new();
        for r in self.model.reservoirs() {
            for (profile, weight) in r.density.components() {
                match *profile {
                    Profile::Semicircle { center, radius, amplitude } => {
                        let mut w = weight.clone();
                        w *= amplitude;
                        parts.push((center, radius, w));
                    }
                    _ => return None,
                }
            }
        }
        Some(parts)
    }
}

/// coth(w / 2T) with the exact T = 0 limit.
pub fn coth_thermal(w: f64, temperature: f64) -> f64 {
    if temperature == 0.0 {
        1.0
    } else {
        1.0 / (0.5 * w / temperature).tanh()
    }
}

/// Hilbert-type transform of a unit semicircle profile,
/// H(z) = int sqrt(R^2 - (w - c)^2) / (z - w) dw
///      = pi (zc - sqrt(zc - R) sqrt(zc + R)),   zc = z - c,
/// with principal square roots (analytic off the band cut [c-R, c+R]).
pub fn semicircle_hilbert(z: Complex64, center: f64, radius: f64) -> Complex64 {
    let zc = z - center;
    std::f64::consts::PI * (zc - (zc - radius).sqrt() * (zc + radius).sqrt())
}

/// Boundary value of [`semicircle_hilbert`] approached from below the cut
/// (Im z -> 0-), for y strictly inside the band:
/// H(y - i0) = pi (yc + i sqrt(R^2 - yc^2)).
pub fn semicircle_hilbert_below(y: f64, center: f64, radius: f64) -> Complex64 {
    let yc = y - center;
    std::f64::consts::PI
        * Complex64::new(yc, (radius * radius - yc * yc).max(0.0).sqrt())
}

fn smooth_segments(model: &SystemModel) -> Vec<(f64, f64)> {
    let mut edges: Vec<f64> = model
        .reservoirs()
        .iter()
        .flat_map(|r| {
            r.density
                .components()
                .iter()
                .flat_map(|(p, _)| {
                    let (lo, hi) = p.support();
                    [lo, hi]
                })
        })
        .collect();
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14 * b.abs().max(1.0));
    let mut segments = Vec::new();
    for win in edges.windows(2) {
        let mid = 0.5 * (win[0] + win[1]);
        if model.on_band(mid) {
            segments.push((win[0], win[1]));
        }
    }
    segments
}

fn profile_mass(profile: &Profile) -> f64 {
    match *profile {
        Profile::Semicircle { radius, amplitude, .. } => {
            0.5 * std::f64::consts::PI * amplitude * radius * radius
        }
        Profile::PowerBump { lo, hi, amplitude, alpha_lo, alpha_hi } => {
            // Rough scale only (tolerance conversion): peak value times width.
            let peak = amplitude
                * (0.5 * (hi - lo)).powf(alpha_lo)
                * (0.5 * (hi - lo)).powf(alpha_hi);
            peak * (hi - lo)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReservoirSpec, SpectralDensity};
    use ndarray::array;

    /// Narrow-band stand-in for a single discrete line c delta(w - w1):
    /// a semicircle of tiny radius with matching total mass.
    fn line_model(c: f64, w1: f64, radius: f64, temperature: f64) -> SystemModel {
        let amplitude = 2.0 * c / (std::f64::consts::PI * radius * radius);
        let d = SpectralDensity::scalar(Profile::Semicircle {
            center: w1,
            radius,
            amplitude,
        })
        .unwrap();
        SystemModel::new(
            array![[1.0]],
            vec![ReservoirSpec::new(d, temperature).unwrap()],
            1.0,
        )
        .unwrap()
    }

    fn semicircle_pair_model() -> SystemModel {
        // Two oscillators, one semicircular band on [0.6, 1.4], nontrivial
        // PSD weight.
        let weight = array![[1.0, 0.4], [0.4, 0.5]];
        let d = SpectralDensity::new(vec![(
            Profile::Semicircle { center: 1.0, radius: 0.4, amplitude: 0.03 },
            weight,
        )])
        .unwrap();
        SystemModel::new(
            array![[1.0, 0.0], [0.0, 1.2]],
            vec![ReservoirSpec::new(d, 0.0).unwrap()],
            0.7,
        )
        .unwrap()
    }

    /// Same band as a power bump with exponents 1/2: identical density,
    /// different evaluation path (generic quadrature instead of closed form).
    fn semicircle_as_powerbump_model() -> SystemModel {
        let weight = array![[1.0, 0.4], [0.4, 0.5]];
        let d = SpectralDensity::new(vec![(
            Profile::PowerBump {
                lo: 0.6,
                hi: 1.4,
                amplitude: 0.03,
                alpha_lo: 0.5,
                alpha_hi: 0.5,
            },
            weight,
        )])
        .unwrap();
        SystemModel::new(
            array![[1.0, 0.0], [0.0, 1.2]],
            vec![ReservoirSpec::new(d, 0.0).unwrap()],
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn narrow_line_kernels_match_discrete_formulas() {
        let (c, w1) = (0.01, 1.0);
        let m = line_model(c, w1, 1e-4, 0.0);
        let k = KernelEvaluator::new(&m, 1e-11);
        // eta(t) ~= c sin(w1 t).
        for &t in &[0.0, 0.7, 2.0, 10.0] {
            let eta = k.dissipation_kernel(t).unwrap();
            assert!(
                (eta[[0, 0]] - c * (w1 * t).sin()).abs() < 1e-8,
                "t={t}: {} vs {}",
                eta[[0, 0]],
                c * (w1 * t).sin()
            );
        }
        // nu(t) ~= c cos(w1 t) at T = 0.
        let nu = k.noise_kernel(5.0).unwrap();
        assert!((nu[[0, 0]] - c * 5.0_f64.cos()).abs() < 1e-8);
        // Laplace transform ~= c w1 / (s^2 + w1^2).
        let s = Complex64::new(0.3, 0.2);
        let lt = k.laplace(s).unwrap();
        let exact = c * w1 / (s * s + w1 * w1);
        assert!((lt[[0, 0]] - exact).norm() < 1e-8);
    }

    #[test]
    fn kernel_symmetries_hold() {
        let m = semicircle_pair_model();
        let k = KernelEvaluator::new(&m, 1e-11);
        let eta0 = k.dissipation_kernel(0.0).unwrap();
        assert!(eta0.iter().all(|v| v.abs() < 1e-14), "eta(0) = 0");
        let nu_p = k.noise_kernel(3.1).unwrap();
        let nu_m = k.noise_kernel(-3.1).unwrap();
        for (a, b) in nu_p.iter().zip(nu_m.iter()) {
            assert!((a - b).abs() < 1e-14, "nu even in t");
        }
        let eta = k.dissipation_kernel(2.4).unwrap();
        assert!((eta[[0, 1]] - eta[[1, 0]]).abs() < 1e-14, "eta symmetric");
    }

    #[test]
    fn dissipation_kernel_derivative_matches_finite_differences() {
        let m = semicircle_pair_model();
        let k = KernelEvaluator::new(&m, 1e-11);
        let (t, h) = (4.3, 1e-4);
        let up = k.dissipation_kernel(t + h).unwrap();
        let dn = k.dissipation_kernel(t - h).unwrap();
        let dot = k.dissipation_kernel_dot(t).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let fd = (up[[i, j]] - dn[[i, j]]) / (2.0 * h);
                assert!(
                    (fd - dot[[i, j]]).abs() < 1e-5 * dot[[i, j]].abs().max(1e-3),
                    "entry ({i},{j}): fd {fd} vs analytic {}",
                    dot[[i, j]]
                );
            }
        }
    }

    #[test]
    fn kernels_match_dense_riemann_summation() {
        // Brute-force Riemann oracle with 10^6 points across the band.
        let m = semicircle_pair_model();
        let k = KernelEvaluator::new(&m, 1e-11);
        let t = 10.0;
        let (lo, hi) = (0.6, 1.4);
        let steps = 1_000_000;
        let dw = (hi - lo) / steps as f64;
        let mut eta_sum = Array2::<f64>::zeros((2, 2));
        let mut nu_sum = Array2::<f64>::zeros((2, 2));
        for i in 0..steps {
            let w = lo + (i as f64 + 0.5) * dw;
            let d = m.spectral_density(w);
            eta_sum.scaled_add((w * t).sin() * dw, &d);
            nu_sum.scaled_add((w * 5.0).cos() * dw, &d);
        }
        let eta = k.dissipation_kernel(t).unwrap();
        let nu = k.noise_kernel(5.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((eta[[i, j]] - eta_sum[[i, j]]).abs() < 1e-9);
                assert!((nu[[i, j]] - nu_sum[[i, j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn laplace_closed_form_agrees_with_generic_quadrature() {
        let closed = KernelEvaluator::new(&semicircle_pair_model(), 1e-12);
        let generic = KernelEvaluator::new(&semicircle_as_powerbump_model(), 1e-12);
        let pts = [
            Complex64::new(0.0, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.2, 1.0),
            Complex64::new(0.0, 0.3),  // lower gap
            Complex64::new(0.0, 2.0),  // upper gap
        ];
        for &s in &pts {
            let a = closed.laplace_unit(s).unwrap();
            let b = generic.laplace_unit(s).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                assert!((x - y).norm() < 1e-9, "s={s}: {x} vs {y}");
            }
        }
        // Gap evaluations are real symmetric.
        let gap = closed.laplace_unit(Complex64::new(0.0, 0.3)).unwrap();
        for v in gap.iter() {
            assert!(v.im.abs() < 1e-12);
        }
        assert!((gap[[0, 1]] - gap[[1, 0]]).norm() < 1e-12);
        // Edge limit agrees across paths too.
        let ea = closed.laplace_unit_gap_limit(0.6).unwrap();
        let eb = generic.laplace_unit_gap_limit(0.6).unwrap();
        for (x, y) in ea.iter().zip(eb.iter()) {
            assert!((x - y).norm() < 1e-7, "{x} vs {y}");
        }
    }

    #[test]
    fn on_axis_guards_fire() {
        let k = KernelEvaluator::new(&semicircle_pair_model(), 1e-11);
        assert!(matches!(
            k.laplace_unit(Complex64::new(0.0, 1.0)),
            Err(QuadratureError::OnBandEvaluation { .. })
        ));
        assert!(matches!(
            k.laplace_unit(Complex64::new(0.0, 1.4 + 1e-12)),
            Err(QuadratureError::EdgeEvaluation { .. })
        ));
        assert!(matches!(
            k.boundary_unit(0.3),
            Err(QuadratureError::OnBandEvaluation { .. })
        ));
    }

    #[test]
    fn boundary_values_match_closed_form() {
        // For the semicircle the boundary value is available analytically:
        // eta'(0+ + iy) = -A/2 [H(-y) + H(y - i0)].
        let m = semicircle_pair_model();
        let k = KernelEvaluator::new(&m, 1e-12);
        let (c, r, a) = (1.0, 0.4, 0.03);
        let weight = array![[1.0, 0.4], [0.4, 0.5]];
        for &y in &[0.75, 1.0, 1.32] {
            let b = k.boundary_unit(y).unwrap();
            let bq = k.boundary_unit_generic(y, (0.6, 1.4)).unwrap();
            let h = semicircle_hilbert(Complex64::new(-y, 0.0), c, r)
                + semicircle_hilbert_below(y, c, r);
            let scalar = -0.5 * a * h;
            for i in 0..2 {
                for j in 0..2 {
                    let exact = scalar * weight[[i, j]];
                    assert!(
                        (b[[i, j]] - exact).norm() < 1e-9,
                        "y={y} ({i},{j}): {} vs {exact}",
                        b[[i, j]]
                    );
                    // The principal-value quadrature path must agree with
                    // the closed form it replaced.
                    assert!(
                        (bq[[i, j]] - exact).norm() < 1e-9,
                        "generic path y={y} ({i},{j}): {} vs {exact}",
                        bq[[i, j]]
                    );
                }
            }
            // Anti-Hermitian part equals the jump -(pi/2) I'(y).
            let jump = m.unit_density(y);
            assert!((b[[0, 0]].im + std::f64::consts::FRAC_PI_2 * jump[[0, 0]]).abs() < 1e-12);
        }
    }

    #[test]
    fn laplace_is_real_symmetric_decreasing_on_real_axis() {
        let m = line_model(0.01, 1.0, 0.3, 0.0);
        let k = KernelEvaluator::new(&m, 1e-11);
        let mut prev = f64::INFINITY;
        for &x in &[0.0, 0.4, 0.9, 1.7, 3.0] {
            let v = k.laplace_unit(Complex64::new(x, 0.0)).unwrap()[[0, 0]];
            assert!(v.im.abs() < 1e-13);
            assert!(v.re > 0.0 && v.re < prev, "monotone decrease: {} then {}", prev, v.re);
            prev = v.re;
        }
    }

    #[test]
    fn thermal_noise_kernel_uses_coth_weight() {
        // Narrow line at temperature T: nu(t) ~= c coth(w1 / 2T) cos(w1 t).
        let (c, w1, temp) = (0.01, 1.0, 0.8);
        let m = line_model(c, w1, 1e-4, temp);
        let k = KernelEvaluator::new(&m, 1e-11);
        let t = 2.0;
        let nu = k.noise_kernel(t).unwrap();
        let exact = c * coth_thermal(w1, temp) * (w1 * t).cos();
        assert!((nu[[0, 0]] - exact).abs() < 1e-7, "{} vs {exact}", nu[[0, 0]]);
        assert!(coth_thermal(1.0, 0.0) == 1.0);
    }
}
