//! Domain types: the oscillator network + reservoir model and Gaussian
//! states in phase space.
//!
//! Conventions, fixed once here and relied on everywhere else:
//! * natural units (hbar = k_B = 1) and unit masses;
//! * phase-space ordering (x_1..x_N, p_1..p_N);
//! * spectral densities are stored at unit coupling; the physical matrix
//!   density is g^2 times the stored sum (the global coupling g multiplies
//!   every system-reservoir coupling constant).

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::linalg;

/// Scalar band profile with known support and edge exponents.
///
/// Profiles are declarative so models serialize losslessly; each admits
/// pointwise evaluation, and the semicircle also has closed-form transforms
/// (used by the kernel module when every component supports it).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub enum Profile {
    /// amplitude * sqrt(radius^2 - (w - center)^2) on [center-r, center+r].
    Semicircle { center: f64, radius: f64, amplitude: f64 },
    /// amplitude * (w - lo)^alpha_lo * (hi - w)^alpha_hi on [lo, hi].
    PowerBump { lo: f64, hi: f64, amplitude: f64, alpha_lo: f64, alpha_hi: f64 },
}

impl Profile {
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Profile::Semicircle { center, radius, .. } => (center - radius, center + radius),
            Profile::PowerBump { lo, hi, .. } => (lo, hi),
        }
    }

    /// Edge exponents (alpha_lo, alpha_hi): the profile behaves as
    /// c |w - edge|^alpha near each endpoint of its support.
    pub fn edge_exponents(&self) -> (f64, f64) {
        match *self {
            Profile::Semicircle { .. } => (0.5, 0.5),
            Profile::PowerBump { alpha_lo, alpha_hi, .. } => (alpha_lo, alpha_hi),
        }
    }

    pub fn eval(&self, w: f64) -> f64 {
        let (lo, hi) = self.support();
        if w <= lo || w >= hi {
            return 0.0;
        }
        match *self {
            Profile::Semicircle { center, radius, amplitude } => {
                amplitude * (radius * radius - (w - center) * (w - center)).max(0.0).sqrt()
            }
            Profile::PowerBump { lo, hi, amplitude, alpha_lo, alpha_hi } => {
                amplitude * (w - lo).powf(alpha_lo) * (hi - w).powf(alpha_hi)
            }
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(ModelError::InvalidBands { what: format!("empty or infinite support [{lo}, {hi}]") });
        }
        if lo <= 0.0 {
            return Err(ModelError::InvalidBands {
                what: format!("band must lie at positive frequency, got lower edge {lo}"),
            });
        }
        let amplitude = match *self {
            Profile::Semicircle { amplitude, .. } => amplitude,
            Profile::PowerBump { amplitude, .. } => amplitude,
        };
        if amplitude < 0.0 {
            return Err(ModelError::InvalidBands { what: format!("negative amplitude {amplitude}") });
        }
        if let Profile::PowerBump { alpha_lo, alpha_hi, .. } = *self {
            if alpha_lo <= -1.0 || alpha_hi <= -1.0 {
                return Err(ModelError::InvalidBands {
                    what: format!("edge exponents must exceed -1, got ({alpha_lo}, {alpha_hi})"),
                });
            }
        }
        Ok(())
    }
}

/// Matrix-valued spectral density at unit coupling: a sum of scalar band
/// profiles, each multiplied by a constant positive-semidefinite weight
/// matrix. The physical density of the model is g^2 times this.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralDensity {
    components: Vec<(Profile, Array2<f64>)>,
}

impl SpectralDensity {
    pub fn new(components: Vec<(Profile, Array2<f64>)>) -> Result<Self, ModelError> {
        if components.is_empty() {
            return Err(ModelError::InvalidBands { what: "spectral density has no components".into() });
        }
        let n = components[0].1.nrows();
        for (profile, weight) in &components {
            profile.validate()?;
            if weight.nrows() != n || weight.ncols() != n {
                return Err(ModelError::DimensionMismatch {
                    what: format!("weight matrix {}x{}, expected {n}x{n}", weight.nrows(), weight.ncols()),
                });
            }
            check_symmetric(weight)?;
            let (eigs, _) = linalg::eigh(weight, false)?;
            let scale = eigs.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
            if eigs[0] < -1e-12 * scale {
                return Err(ModelError::NotPositiveSemidefinite { min_eig: eigs[0] });
            }
        }
        Ok(SpectralDensity { components })
    }

    /// Scalar density (N = 1 weight of [[1.0]] x amplitude).
    pub fn scalar(profile: Profile) -> Result<Self, ModelError> {
        SpectralDensity::new(vec![(profile, Array2::eye(1))])
    }

    pub fn n(&self) -> usize {
        self.components[0].1.nrows()
    }

    pub fn components(&self) -> &[(Profile, Array2<f64>)] {
        &self.components
    }

    /// Evaluate the unit-coupling matrix density at frequency w.
    pub fn eval(&self, w: f64) -> Array2<f64> {
        let n = self.n();
        let mut out = Array2::zeros((n, n));
        for (profile, weight) in &self.components {
            let p = profile.eval(w);
            if p != 0.0 {
                out.scaled_add(p, weight);
            }
        }
        out
    }

    /// Union of component supports, merged into maximal disjoint bands.
    pub fn bands(&self) -> Vec<(f64, f64)> {
        merge_bands(self.components.iter().map(|(p, _)| p.support()))
    }
}

/// One reservoir: a unit-coupling matrix spectral density plus a temperature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReservoirSpec {
    pub density: SpectralDensity,
    pub temperature: f64,
}

impl ReservoirSpec {
    pub fn new(density: SpectralDensity, temperature: f64) -> Result<Self, ModelError> {
        if !(temperature >= 0.0) {
            return Err(ModelError::NegativeTemperature { t: temperature });
        }
        Ok(ReservoirSpec { density, temperature })
    }
}

/// Validated network + reservoir model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemModel {
    v: Array2<f64>,
    reservoirs: Vec<ReservoirSpec>,
    coupling: f64,
    // Cached at construction: eigendecomposition of V and the merged bands.
    #[serde(skip)]
    cache: once_cell::sync::OnceCell<ModelCache>,
}

#[derive(Clone, Debug)]
struct ModelCache {
    omega0: Array1<f64>,
    modes: Array2<f64>,
    bands: Vec<(f64, f64)>,
}

impl SystemModel {
    pub fn new(
        v: Array2<f64>,
        reservoirs: Vec<ReservoirSpec>,
        coupling: f64,
    ) -> Result<Self, ModelError> {
        if v.nrows() != v.ncols() {
            return Err(ModelError::DimensionMismatch {
                what: format!("V is {}x{}", v.nrows(), v.ncols()),
            });
        }
        let n = v.nrows();
        if n == 0 {
            return Err(ModelError::DimensionMismatch { what: "V is empty".into() });
        }
        check_symmetric(&v)?;
        let (eigs, _) = linalg::eigh(&v, false)?;
        if eigs[0] <= 0.0 {
            return Err(ModelError::NotPositiveDefinite { min_eig: eigs[0] });
        }
        if !(coupling >= 0.0) {
            return Err(ModelError::NegativeCoupling { g: coupling });
        }
        for r in &reservoirs {
            if r.density.n() != n {
                return Err(ModelError::DimensionMismatch {
                    what: format!("reservoir density is {0}x{0}, system has {n} oscillators", r.density.n()),
                });
            }
            if !(r.temperature >= 0.0) {
                return Err(ModelError::NegativeTemperature { t: r.temperature });
            }
        }
        let model = SystemModel { v, reservoirs, coupling, cache: once_cell::sync::OnceCell::new() };
        model.cache(); // materialize (also validates band merging)
        Ok(model)
    }

    fn cache(&self) -> &ModelCache {
        self.cache.get_or_init(|| {
            let (eigs, vecs) = linalg::eigh(&self.v, true).expect("validated at construction");
            let omega0 = eigs.mapv(f64::sqrt);
            let bands = merge_bands(
                self.reservoirs
                    .iter()
                    .flat_map(|r| r.density.components().iter().map(|(p, _)| p.support())),
            );
            ModelCache { omega0, modes: vecs.unwrap(), bands }
        })
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn reservoirs(&self) -> &[ReservoirSpec] {
        &self.reservoirs
    }

    /// Same model at a different global coupling (cheap; used by sweeps).
    pub fn with_coupling(&self, g: f64) -> Result<SystemModel, ModelError> {
        if !(g >= 0.0) {
            return Err(ModelError::NegativeCoupling { g });
        }
        let mut m = self.clone();
        m.coupling = g;
        m.cache = once_cell::sync::OnceCell::new();
        Ok(m)
    }

    /// Effective frequencies omega_{0k} = sqrt(eig_k(V)), ascending.
    pub fn effective_frequencies(&self) -> Array1<f64> {
        self.cache().omega0.clone()
    }

    /// Orthonormal eigenvectors of V as columns, aligned with
    /// [`Self::effective_frequencies`].
    pub fn normal_modes(&self) -> Array2<f64> {
        self.cache().modes.clone()
    }

    /// Merged reservoir bands, ascending and disjoint.
    pub fn bands(&self) -> &[(f64, f64)] {
        &self.cache().bands
    }

    /// Gaps between bands: (0, first edge), interior gaps, and the final
    /// half-infinite gap (hi = +infinity).
    pub fn gaps(&self) -> Vec<(f64, f64)> {
        let bands = self.bands();
        let mut gaps = Vec::with_capacity(bands.len() + 1);
        let mut lo = 0.0;
        for &(a, b) in bands {
            if a > lo {
                gaps.push((lo, a));
            }
            lo = b;
        }
        gaps.push((lo, f64::INFINITY));
        gaps
    }

    /// Whether y lies strictly inside some reservoir band.
    pub fn on_band(&self, y: f64) -> bool {
        self.bands().iter().any(|&(a, b)| y > a && y < b)
    }

    /// Unit-coupling total density sum_alpha I'^{(alpha)}(w).
    pub fn unit_density(&self, w: f64) -> Array2<f64> {
        let mut out = Array2::zeros((self.n(), self.n()));
        for r in &self.reservoirs {
            out += &r.density.eval(w);
        }
        out
    }

    /// Physical matrix spectral density I(w) = g^2 sum_alpha I'^{(alpha)}(w).
    pub fn spectral_density(&self, w: f64) -> Array2<f64> {
        let mut out = self.unit_density(w);
        out *= self.coupling * self.coupling;
        out
    }
}

/// Standard symplectic form J = [[0, I], [-I, 0]] for (x.., p..) ordering.
pub fn symplectic_form(n: usize) -> Array2<f64> {
    let mut j = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        j[[i, n + i]] = 1.0;
        j[[n + i, i]] = -1.0;
    }
    j
}

/// Gaussian state of the network: phase-space mean and covariance in the
/// (x_1..x_N, p_1..p_N) ordering.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaussianState {
    pub mean: Array1<f64>,
    pub cov: Array2<f64>,
}

impl GaussianState {
    pub fn new(mean: Array1<f64>, cov: Array2<f64>) -> Result<Self, ModelError> {
        let d = mean.len();
        if d == 0 || d % 2 != 0 {
            return Err(ModelError::InvalidState { what: format!("phase-space dimension {d} must be even and positive") });
        }
        if cov.nrows() != d || cov.ncols() != d {
            return Err(ModelError::DimensionMismatch {
                what: format!("covariance is {}x{}, mean has length {d}", cov.nrows(), cov.ncols()),
            });
        }
        check_symmetric(&cov)?;
        let state = GaussianState { mean, cov };
        let margin = state.physicality_margin()?;
        let scale = state.cov.diag().iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if margin < -1e-10 * scale {
            return Err(ModelError::InvalidState {
                what: format!("uncertainty relation violated (margin {margin:.3e})"),
            });
        }
        Ok(state)
    }

    /// Smallest eigenvalue of cov + (i/2) J; nonnegative (up to roundoff)
    /// exactly when the state satisfies the uncertainty relation.
    pub fn physicality_margin(&self) -> Result<f64, ModelError> {
        let d = self.cov.nrows();
        let j = symplectic_form(d / 2);
        let mut h = Array2::<Complex64>::zeros((d, d));
        for i in 0..d {
            for k in 0..d {
                h[[i, k]] = Complex64::new(self.cov[[i, k]], 0.5 * j[[i, k]]);
            }
        }
        let eigs = linalg::eigvals_hermitian(&h)?;
        Ok(eigs.iter().copied().fold(f64::INFINITY, f64::min))
    }

    /// Ground state of the uncoupled sites: each site gets the frequency
    /// sqrt(V_ii) and the vacuum covariance diag(1/(2w), w/2).
    pub fn vacuum(model: &SystemModel) -> GaussianState {
        let n = model.n();
        let mut cov = Array2::zeros((2 * n, 2 * n));
        for i in 0..n {
            let w = model.v()[[i, i]].sqrt();
            cov[[i, i]] = 0.5 / w;
            cov[[n + i, n + i]] = 0.5 * w;
        }
        GaussianState { mean: Array1::zeros(2 * n), cov }
    }

    /// Coherent state: vacuum covariance with displaced means,
    /// <x_i> = sqrt(2/w_i) Re a_i and <p_i> = sqrt(2 w_i) Im a_i.
    pub fn coherent(model: &SystemModel, amplitudes: &[Complex64]) -> Result<GaussianState, ModelError> {
        let n = model.n();
        if amplitudes.len() != n {
            return Err(ModelError::DimensionMismatch {
                what: format!("{} amplitudes for {n} oscillators", amplitudes.len()),
            });
        }
        let mut state = GaussianState::vacuum(model);
        for i in 0..n {
            let w = model.v()[[i, i]].sqrt();
            state.mean[i] = (2.0 / w).sqrt() * amplitudes[i].re;
            state.mean[n + i] = (2.0 * w).sqrt() * amplitudes[i].im;
        }
        Ok(state)
    }

    pub fn n(&self) -> usize {
        self.mean.len() / 2
    }

    /// Purity 1 / (2^N sqrt(det cov)); equals 1 for pure Gaussian states.
    pub fn purity(&self) -> Result<f64, ModelError> {
        let (eigs, _) = linalg::eigh(&self.cov, false)?;
        let mut log_det = 0.0;
        for &e in eigs.iter() {
            if e <= 0.0 {
                return Err(ModelError::InvalidState {
                    what: format!("covariance not positive definite (eigenvalue {e:.3e})"),
                });
            }
            log_det += e.ln();
        }
        Ok((-(self.n() as f64) * (2.0_f64).ln() - 0.5 * log_det).exp())
    }
}

fn check_symmetric(a: &Array2<f64>) -> Result<(), ModelError> {
    let scale = a.iter().fold(1e-300_f64, |m, v| m.max(v.abs()));
    let mut max_asym = 0.0_f64;
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > 1e-12 * scale {
        return Err(ModelError::NotSymmetric { max_asym });
    }
    Ok(())
}

fn merge_bands(supports: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut list: Vec<(f64, f64)> = supports.collect();
    list.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in list {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}
