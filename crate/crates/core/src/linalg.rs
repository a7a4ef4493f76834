//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Asymmetry tolerance used when validating covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

pub fn symmetrize<T: Scalar>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

pub fn max_asymmetry<T: Scalar>(a: &DMatrix<T>) -> T {
    let mut worst = T::zero();
    for i in 0..a.nrows() {
        for j in (i + 1)..a.ncols() {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Checks squareness, symmetry within [`SYMMETRY_TOL`] (relative to the
/// largest entry when that exceeds one) and nonnegative spectrum.
pub fn check_psd<T: Scalar>(a: &DMatrix<T>, name: &str) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            what: "covariance must be square",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix `{name}`")));
    }
    let scale = a.amax().max(T::one());
    if max_asymmetry(a) > lit::<T>(SYMMETRY_TOL) * scale {
        return Err(Error::NotPsd(name.to_string()));
    }
    if a.nrows() == 0 {
        return Ok(());
    }
    let eig = symmetrize(a).symmetric_eigenvalues();
    let min = eig.iter().copied().fold(T::max_value().unwrap(), |m, v| m.min(v));
    if min < -lit::<T>(SYMMETRY_TOL) * scale {
        return Err(Error::NotPsd(name.to_string()));
    }
    Ok(())
}

/// `log det` of a symmetric positive-definite matrix via Cholesky of the
/// symmetrized input.
pub fn log_det_spd<T: Scalar>(a: &DMatrix<T>, name: &str) -> Result<T> {
    if a.nrows() == 0 {
        return Ok(T::zero());
    }
    let chol = symmetrize(a)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))?;
    let l = chol.l_dirty();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        let d = l[(i, i)];
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::NotPositiveDefinite(name.to_string()));
        }
        acc += d.ln();
    }
    Ok(lit::<T>(2.0) * acc)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (columns of the returned matrix follow the same order).
pub fn sym_eigen_desc<T: Scalar>(a: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = a.nrows();
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Inverse symmetric square root `A^{-1/2}` of a positive-definite matrix.
pub fn inv_sqrt_spd<T: Scalar>(a: &DMatrix<T>, name: &str) -> Result<DMatrix<T>> {
    let (vals, vecs) = sym_eigen_desc(a);
    let scale = vals.iter().copied().fold(T::zero(), |m, v| m.max(v.abs()));
    let mut inv = DVector::zeros(vals.len());
    for (i, &v) in vals.iter().enumerate() {
        if v <= lit::<T>(1e-14) * scale || v <= T::zero() {
            return Err(Error::NotPositiveDefinite(name.to_string()));
        }
        inv[i] = T::one() / v.sqrt();
    }
    Ok(&vecs * DMatrix::from_diagonal(&inv) * vecs.transpose())
}

pub fn matrix_power<T: Scalar>(k: &DMatrix<T>, n: usize) -> DMatrix<T> {
    let mut result = DMatrix::identity(k.nrows(), k.ncols());
    let mut base = k.clone();
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Largest eigenvalue modulus of a real square matrix.
pub fn spectral_radius<T: Scalar>(k: &DMatrix<T>) -> T {
    if k.nrows() == 0 {
        return T::zero();
    }
    k.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re * c.re + c.im * c.im).sqrt())
        .fold(T::zero(), |m, v| m.max(v))
}

/// Solves `M = Σ + K M Kᵀ` by the doubling iteration. Requires spectral
/// radius of `K` below one.
pub fn solve_discrete_lyapunov<T: Scalar>(k: &DMatrix<T>, sigma: &DMatrix<T>) -> Result<DMatrix<T>> {
    if spectral_radius(k) >= T::one() {
        return Err(Error::InvalidInput(
            "discrete Lyapunov equation needs spectral radius < 1".into(),
        ));
    }
    let mut m = sigma.clone();
    let mut a = k.clone();
    for _ in 0..128 {
        let incr = &a * &m * a.transpose();
        let next = &m + &incr;
        let delta = incr.amax();
        m = next;
        a = &a * &a;
        if delta <= T::default_epsilon() * m.amax().max(T::one()) {
            return Ok(symmetrize(&m));
        }
    }
    Err(Error::NonFinite("Lyapunov doubling did not converge".into()))
}

/// Extracts the principal submatrix on `rows x cols` index sets.
pub fn block<T: Scalar>(j: &DMatrix<T>, rows: &[usize], cols: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |r, c| j[(rows[r], cols[c])])
}

/// Conditional covariance `Σ_{a|c} = Σ_aa − Σ_ac Σ_cc⁻¹ Σ_ca`.
pub fn conditional_cov<T: Scalar>(j: &DMatrix<T>, a: &[usize], c: &[usize]) -> Result<DMatrix<T>> {
    let saa = block(j, a, a);
    if c.is_empty() {
        return Ok(saa);
    }
    let sac = block(j, a, c);
    let scc = block(j, c, c);
    let chol = symmetrize(&scc)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("conditioning block".into()))?;
    let x = chol.solve(&sac.transpose());
    Ok(symmetrize(&(saa - sac * x)))
}

/// Gaussian (conditional) mutual information `I(a; b | c)` in nats from a
/// joint covariance, via `½ log det Σ_{a|c} det Σ_{b|c} / det Σ_{ab|c}`.
pub fn gaussian_mi<T: Scalar>(j: &DMatrix<T>, a: &[usize], b: &[usize], c: &[usize]) -> Result<T> {
    let ab: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    let ac = conditional_cov(j, a, c)?;
    let bc = conditional_cov(j, b, c)?;
    let abc = conditional_cov(j, &ab, c)?;
    let v = log_det_spd(&ac, "Σ_{a|c}")? + log_det_spd(&bc, "Σ_{b|c}")?
        - log_det_spd(&abc, "Σ_{ab|c}")?;
    Ok(lit::<T>(0.5) * v)
}

pub fn is_finite_matrix<T: Scalar>(a: &DMatrix<T>) -> bool {
    a.iter().all(|v| v.is_finite())
}
