//! Thin wrappers over the handful of LAPACK routines the crate needs, plus a
//! few small dense helpers (complex inverse, Hermitian spectra) that are
//! easier to keep in Rust than to route through FFI.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::LinalgError;

extern "C" {
    fn dsyevd_(
        jobz: *const u8,
        uplo: *const u8,
        n: *const i32,
        a: *mut f64,
        lda: *const i32,
        w: *mut f64,
        work: *mut f64,
        lwork: *const i32,
        iwork: *mut i32,
        liwork: *const i32,
        info: *mut i32,
    );
    fn dpotrf_(uplo: *const u8, n: *const i32, a: *mut f64, lda: *const i32, info: *mut i32);
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Returns eigenvalues in ascending order and, when requested, the matrix
/// whose *columns* are the corresponding orthonormal eigenvectors.
pub fn eigh(a: &Array2<f64>, vectors: bool) -> Result<(Array1<f64>, Option<Array2<f64>>), LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare { rows: n, cols: a.ncols() });
    }
    if n == 0 {
        return Ok((Array1::zeros(0), vectors.then(|| Array2::zeros((0, 0)))));
    }
    // LAPACK is column-major; a symmetric input makes the layout moot.
    let mut buf: Vec<f64> = a.iter().copied().collect();
    let mut w = vec![0.0_f64; n];
    let jobz = if vectors { b'V' } else { b'N' };
    let uplo = b'L';
    let ni = n as i32;
    let mut info: i32 = 0;

    // Workspace query.
    let mut work_query = [0.0_f64];
    let mut iwork_query = [0_i32];
    let lwork_query: i32 = -1;
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &lwork_query,
            iwork_query.as_mut_ptr(),
            &lwork_query,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "dsyevd", info });
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0_f64; lwork.max(1) as usize];
    let mut iwork = vec![0_i32; liwork.max(1) as usize];
    unsafe {
        dsyevd_(
            &jobz,
            &uplo,
            &ni,
            buf.as_mut_ptr(),
            &ni,
            w.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(LinalgError::Lapack { routine: "dsyevd", info });
    }
    let vecs = if vectors {
        // Column-major output: LAPACK column j is the j-th eigenvector. Read it
        // back so that our (row-major) matrix also has eigenvectors in columns.
        let mut v = Array2::zeros((n, n));
        for j in 0..n {
            for i in 0..n {
                v[[i, j]] = buf[j * n + i];
            }
        }
        Some(v)
    } else {
        None
    };
    Ok((Array1::from(w), vecs))
}

/// Whether a symmetric matrix is positive definite (attempted Cholesky).
pub fn is_positive_definite(a: &Array2<f64>) -> Result<bool, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare { rows: n, cols: a.ncols() });
    }
    if n == 0 {
        return Ok(true);
    }
    let mut buf: Vec<f64> = a.iter().copied().collect();
    let uplo = b'L';
    let ni = n as i32;
    let mut info: i32 = 0;
    unsafe {
        dpotrf_(&uplo, &ni, buf.as_mut_ptr(), &ni, &mut info);
    }
    if info < 0 {
        return Err(LinalgError::Lapack { routine: "dpotrf", info });
    }
    Ok(info == 0)
}

/// Eigenvalues of a complex Hermitian matrix via its real symmetric embedding
/// [[Re, -Im], [Im, Re]]; each eigenvalue of the input appears twice in the
/// embedding, so the deduplicated ascending list is returned.
pub fn eigvals_hermitian(h: &Array2<Complex64>) -> Result<Array1<f64>, LinalgError> {
    let n = h.nrows();
    if n != h.ncols() {
        return Err(LinalgError::NotSquare { rows: n, cols: h.ncols() });
    }
    let mut emb = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            let z = h[[i, j]];
            emb[[i, j]] = z.re;
            emb[[i + n, j + n]] = z.re;
            emb[[i, j + n]] = -z.im;
            emb[[i + n, j]] = z.im;
        }
    }
    let (vals, _) = eigh(&emb, false)?;
    // Pairs are adjacent after sorting; take every other value.
    Ok(Array1::from_iter(vals.iter().step_by(2).copied()))
}

/// Inverse of a small complex matrix by Gauss-Jordan elimination with partial
/// pivoting. Intended for the N x N resolvent blocks (N <= 8 or so).
pub fn inv_complex(a: &Array2<Complex64>) -> Result<Array2<Complex64>, LinalgError> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(LinalgError::NotSquare { rows: n, cols: a.ncols() });
    }
    let mut m = a.clone();
    let mut inv = Array2::from_diag_elem(n, Complex64::new(1.0, 0.0));
    for col in 0..n {
        let (mut pivot_row, mut pivot_mag) = (col, m[[col, col]].norm_sqr());
        for r in col + 1..n {
            let mag = m[[r, col]].norm_sqr();
            if mag > pivot_mag {
                pivot_row = r;
                pivot_mag = mag;
            }
        }
        if pivot_mag == 0.0 {
            return Err(LinalgError::Singular);
        }
        if pivot_row != col {
            for c in 0..n {
                m.swap([col, c], [pivot_row, c]);
                inv.swap([col, c], [pivot_row, c]);
            }
        }
        let piv = m[[col, col]];
        for c in 0..n {
            m[[col, c]] /= piv;
            inv[[col, c]] /= piv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let factor = m[[r, col]];
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for c in 0..n {
                let mcc = m[[col, c]];
                let icc = inv[[col, c]];
                m[[r, c]] -= factor * mcc;
                inv[[r, c]] -= factor * icc;
            }
        }
    }
    Ok(inv)
}

/// Solve the least-squares problem min ||A x - b|| for a tall real matrix via
/// the normal equations with a symmetric eigensolve (small column counts).
pub fn lstsq(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, LinalgError> {
    let ata = a.t().dot(a);
    let atb = a.t().dot(b);
    let (vals, vecs) = eigh(&ata, true)?;
    let vecs = vecs.expect("eigenvectors requested");
    let vmax = vals.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = vmax * 1e-13;
    let mut x = Array1::zeros(ata.nrows());
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let vk = vecs.column(k);
        let coef = vk.dot(&atb) / lam;
        x.scaled_add(coef, &vk);
    }
    Ok(x)
}
