use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::{check_psd, symmetrize};
use crate::scalar::{lit, Scalar};

/// Tolerances on trace and spectrum of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-12;

/// Symmetric PSD matrix with unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Scalar> {
    rho: DMatrix<T>,
}

impl<T: Scalar> DensityMatrix<T> {
    pub fn new(rho: DMatrix<T>) -> Result<Self> {
        if rho.nrows() == 0 {
            return invalid("density matrix must be at least 1x1");
        }
        check_psd(&rho, "rho")?;
        let tr = rho.trace();
        if (tr - T::one()).abs() > lit(TRACE_TOL) {
            return invalid(format!("density matrix trace {tr} differs from 1"));
        }
        Ok(Self { rho: symmetrize(&rho) })
    }

    /// `C / tr(C)` for a PSD matrix with positive trace.
    pub fn from_covariance(c: &DMatrix<T>) -> Result<Self> {
        check_psd(c, "C")?;
        let tr = c.trace();
        if !(tr > T::zero()) {
            return invalid("covariance has zero trace");
        }
        Self::new(c / tr)
    }

    /// Diagonal density matrix from nonnegative weights (normalized here).
    pub fn from_weights(p: &[T]) -> Result<Self> {
        let total = p.iter().copied().fold(T::zero(), |a, b| a + b);
        if p.iter().any(|v| *v < T::zero()) || !(total > T::zero()) {
            return invalid("weights must be nonnegative with positive sum");
        }
        let diag = nalgebra::DVector::from_iterator(p.len(), p.iter().map(|v| *v / total));
        Self::new(DMatrix::from_diagonal(&diag))
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<T> {
        self.rho.symmetric_eigenvalues().iter().copied().collect()
    }
}

/// Shannon entropy of a spectrum, `-Σ λ log λ` with `0·log 0 = 0`.
/// Eigenvalues within [`EIGEN_TOL`] of zero (either sign) count as zero.
pub fn spectral_entropy<T: Scalar>(eigs: &[T]) -> T {
    let floor = lit::<T>(EIGEN_TOL);
    eigs.iter()
        .filter(|&&l| l > floor)
        .fold(T::zero(), |acc, &l| acc - l * l.ln())
}

/// `S(ρ) = −tr(ρ log ρ)` in nats.
pub fn von_neumann_entropy<T: Scalar>(rho: &DensityMatrix<T>) -> T {
    let s = spectral_entropy(&rho.eigenvalues());
    let upper = T::from_count(rho.dim()).ln();
    s.max(T::zero()).min(upper)
}

/// `exp(S(ρ))`, between 1 and the dimension.
pub fn effective_dimension<T: Scalar>(rho: &DensityMatrix<T>) -> T {
    von_neumann_entropy(rho).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use proptest::prelude::*;

    #[test]
    fn maximally_mixed_state() {
        for d in 1..6 {
            let rho = DensityMatrix::new(DMatrix::<f64>::identity(d, d) / d as f64).unwrap();
            assert_relative_eq!(von_neumann_entropy(&rho), (d as f64).ln(), epsilon = 1e-12);
            assert_relative_eq!(effective_dimension(&rho), d as f64, epsilon = 1e-10);
        }
    }

    #[test]
    fn pure_state_has_zero_entropy() {
        let v = DVector::<f64>::from_vec(vec![0.6, 0.0, 0.8]);
        let rho = DensityMatrix::new(&v * v.transpose()).unwrap();
        assert!(von_neumann_entropy(&rho).abs() < 1e-10);
        assert_relative_eq!(effective_dimension(&rho), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn two_level_example() {
        let rho = DensityMatrix::from_weights(&[0.7, 0.3]).unwrap();
        // -0.7 ln 0.7 - 0.3 ln 0.3
        let expect = -(0.7f64 * 0.7f64.ln() + 0.3 * 0.3f64.ln());
        assert_relative_eq!(von_neumann_entropy(&rho), expect, epsilon = 1e-12);
        assert_relative_eq!(von_neumann_entropy(&rho), 0.6108643, epsilon = 1e-7);
        assert_relative_eq!(effective_dimension(&rho), 1.8420, epsilon = 1e-4);
    }

    #[test]
    fn rejects_bad_trace() {
        assert!(DensityMatrix::new(DMatrix::<f64>::identity(2, 2)).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let rho = DensityMatrix::from_weights(&[0.5f32, 0.5]).unwrap();
        assert!((von_neumann_entropy(&rho) - 2f32.ln()).abs() < 1e-6);
    }

    fn random_rho(seed: u64, d: usize) -> DMatrix<f64> {
        let mut rng = crate::rng::seeded(seed);
        let a: DMatrix<f64> = crate::rng::standard_normal_matrix(&mut rng, d, d);
        let c = &a * a.transpose();
        &c / c.trace()
    }

    fn random_rotation(seed: u64, d: usize) -> DMatrix<f64> {
        let mut rng = crate::rng::seeded(seed);
        let a: DMatrix<f64> = crate::rng::standard_normal_matrix(&mut rng, d, d);
        a.qr().q()
    }

    proptest! {
        #[test]
        fn entropy_bounds_and_rotation_invariance(seed in 0u64..10_000, d in 1usize..7) {
            let rho = random_rho(seed, d);
            let q = random_rotation(seed ^ 0xabcdef, d);
            let s = von_neumann_entropy(&DensityMatrix::new(rho.clone()).unwrap());
            prop_assert!(s >= 0.0 && s <= (d as f64).ln() + 1e-10);
            let rotated = &q * &rho * q.transpose();
            let s2 = von_neumann_entropy(&DensityMatrix::new(symmetrize(&rotated)).unwrap());
            prop_assert!((s - s2).abs() < 1e-10);
        }
    }
}
