//! Data-processing chain `I(x;x') ≥ I(z;x') ≥ I(z;z')` on encoded Gaussian systems.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{block, check_psd, gaussian_mi, symmetrize};
use crate::scalar::{lit, Scalar};

/// Slack allowed before an inequality counts as violated.
pub const CHAIN_SLACK: f64 = 1e-9;
const STRUCTURE_TOL: f64 = 1e-8;

/// Joint covariance over `(x_{n-1}, z_{n-1}, z_n, x_n)` in that block order.
#[derive(Debug, Clone)]
pub struct ChainJoint<T: Scalar> {
    pub cov: DMatrix<T>,
    /// Block sizes `[dim x, dim z, dim z, dim x]`.
    pub dims: [usize; 4],
}

impl<T: Scalar> ChainJoint<T> {
    fn blocks(&self) -> [Vec<usize>; 4] {
        let mut start = 0;
        self.dims.map(|len| {
            let r = (start..start + len).collect();
            start += len;
            r
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainCheck<T: Scalar> {
    /// `I(x_{n-1}; x_n)`.
    pub mi_xx: T,
    /// `I(z_{n-1}; x_n)`.
    pub mi_zx: T,
    /// `I(z_{n-1}; z_n)`.
    pub mi_zz: T,
    pub first_violated: bool,
    pub second_violated: bool,
}

impl<T: Scalar> ChainCheck<T> {
    pub fn violated(&self) -> bool {
        self.first_violated || self.second_violated
    }
}

/// Largest conditional cross-covariance between `a` and `b` given `c`.
fn conditional_coupling<T: Scalar>(j: &DMatrix<T>, a: &[usize], b: &[usize], c: &[usize]) -> Result<T> {
    let scc = symmetrize(&block(j, c, c));
    let chol = scc
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("observation block of the chain joint".into()))?;
    let x = chol.solve(&block(j, c, b));
    let r = block(j, a, b) - block(j, a, c) * x;
    Ok(r.amax())
}

pub fn information_chain_check<T: Scalar>(joint: &ChainJoint<T>) -> Result<ChainCheck<T>> {
    let total: usize = joint.dims.iter().sum();
    if joint.cov.shape() != (total, total) {
        return Err(Error::DimensionMismatch {
            what: "chain joint covariance",
            expected: total,
            got: joint.cov.nrows(),
        });
    }
    if joint.dims.iter().any(|&d| d == 0) || joint.dims[0] != joint.dims[3] || joint.dims[1] != joint.dims[2] {
        return invalid("chain joint blocks must be [n, d, d, n] with n, d >= 1");
    }
    check_psd(&joint.cov, "chain joint")?;
    let j = symmetrize(&joint.cov);
    let [xp, zp, zn, xn] = joint.blocks();
    let scale = j.amax().max(T::one());
    let tol = scale * lit(STRUCTURE_TOL);
    let rest: Vec<usize> = zn.iter().chain(&xn).copied().collect();
    let c1 = conditional_coupling(&j, &zp, &rest, &xp)?;
    if c1 > tol {
        return Err(Error::InvalidInput(format!(
            "z_(n-1) is not conditionally independent of (z_n, x_n) given x_(n-1): coupling {c1}"
        )));
    }
    let past: Vec<usize> = xp.iter().chain(&zp).copied().collect();
    let c2 = conditional_coupling(&j, &zn, &past, &xn)?;
    if c2 > tol {
        return Err(Error::InvalidInput(format!(
            "z_n is not conditionally independent of (x_(n-1), z_(n-1)) given x_n: coupling {c2}"
        )));
    }
    let mi_xx = gaussian_mi(&j, &xp, &xn, &[])?;
    let mi_zx = gaussian_mi(&j, &zp, &xn, &[])?;
    let mi_zz = gaussian_mi(&j, &zp, &zn, &[])?;
    let slack = lit::<T>(CHAIN_SLACK);
    Ok(ChainCheck {
        mi_xx,
        mi_zx,
        mi_zz,
        first_violated: mi_zx > mi_xx + slack,
        second_violated: mi_zz > mi_zx + slack,
    })
}

/// Stationary AR(1) state `x' = A x + v`, `v ~ N(0, Q)`, observed through a
/// linear Gaussian encoder `z = E x + η`, `η ~ N(0, S)`.
#[derive(Debug, Clone)]
pub struct EncodedAr<T: Scalar> {
    pub a: DMatrix<T>,
    pub q: DMatrix<T>,
    pub e: DMatrix<T>,
    pub s: DMatrix<T>,
}

impl<T: Scalar> EncodedAr<T> {
    pub fn state_cov(&self) -> Result<DMatrix<T>> {
        crate::linalg::solve_discrete_lyapunov(&self.a, &self.q)
    }

    pub fn joint(&self) -> Result<ChainJoint<T>> {
        let n = self.a.nrows();
        let d = self.e.nrows();
        if self.a.ncols() != n || self.q.shape() != (n, n) || self.e.ncols() != n || self.s.shape() != (d, d) {
            return invalid("encoded AR system has inconsistent dimensions");
        }
        let p = self.state_cov()?;
        // Sources (x, x', η, η') and the linear map to (x, z, z', x').
        let mut src = DMatrix::zeros(2 * n + 2 * d, 2 * n + 2 * d);
        let ap = &self.a * &p;
        src.view_mut((0, 0), (n, n)).copy_from(&p);
        src.view_mut((n, n), (n, n)).copy_from(&(&ap * self.a.transpose() + &self.q));
        src.view_mut((n, 0), (n, n)).copy_from(&ap);
        src.view_mut((0, n), (n, n)).copy_from(&ap.transpose());
        src.view_mut((2 * n, 2 * n), (d, d)).copy_from(&self.s);
        src.view_mut((2 * n + d, 2 * n + d), (d, d)).copy_from(&self.s);
        let mut map = DMatrix::zeros(2 * n + 2 * d, 2 * n + 2 * d);
        map.view_mut((0, 0), (n, n)).fill_with_identity();
        map.view_mut((n, 0), (d, n)).copy_from(&self.e);
        map.view_mut((n, 2 * n), (d, d)).fill_with_identity();
        map.view_mut((n + d, n), (d, n)).copy_from(&self.e);
        map.view_mut((n + d, 2 * n + d), (d, d)).fill_with_identity();
        map.view_mut((n + 2 * d, n), (n, n)).fill_with_identity();
        Ok(ChainJoint {
            cov: symmetrize(&(&map * src * map.transpose())),
            dims: [n, d, d, n],
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar2() -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::from_row_slice(2, 2, &[0.8, 0.3, -0.2, 0.5]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]),
        )
    }

    #[test]
    fn lossless_encoding_keeps_all_information() {
        let (a, q) = ar2();
        let sys = EncodedAr { a, q, e: DMatrix::identity(2, 2), s: DMatrix::zeros(2, 2) };
        let c = information_chain_check(&sys.joint().unwrap()).unwrap();
        assert!((c.mi_xx - c.mi_zx).abs() < 1e-10 && (c.mi_zx - c.mi_zz).abs() < 1e-10, "{c:?}");
        assert!(!c.violated());
    }

    #[test]
    fn projection_strictly_loses_information() {
        let (a, q) = ar2();
        let e = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let sys = EncodedAr { a, q, e, s: DMatrix::zeros(1, 1) };
        let c = information_chain_check(&sys.joint().unwrap()).unwrap();
        assert!(c.mi_xx > c.mi_zx + 1e-3 && c.mi_zx > c.mi_zz + 1e-3, "{c:?}");
    }

    #[test]
    fn structure_violation_is_rejected() {
        let (a, q) = ar2();
        let sys = EncodedAr { a, q, e: DMatrix::identity(2, 2), s: DMatrix::identity(2, 2) * 0.1 };
        let mut joint = sys.joint().unwrap();
        // Correlate the two encoder noises.
        for i in 0..2 {
            joint.cov[(2 + i, 4 + i)] += 0.05;
            joint.cov[(4 + i, 2 + i)] += 0.05;
        }
        let err = information_chain_check(&joint).unwrap_err();
        assert!(err.to_string().contains("conditionally independent"));
    }

    #[test]
    fn malformed_blocks_are_rejected() {
        let joint = ChainJoint { cov: DMatrix::<f64>::identity(5, 5), dims: [1, 1, 1, 1] };
        assert!(information_chain_check(&joint).is_err());
        let joint = ChainJoint { cov: DMatrix::<f64>::identity(5, 5), dims: [1, 2, 1, 1] };
        assert!(information_chain_check(&joint).is_err());
    }
}
