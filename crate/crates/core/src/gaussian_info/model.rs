use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{check_psd, solve_discrete_lyapunov, symmetrize};
use crate::scalar::Scalar;

/// Linear-Gaussian Koopman model
///
/// ```text
/// z_{t+1} = K z_t + w_t,   w_t ~ N(0, Σ)
/// x_t     = D z_t + ε_t,   ε_t ~ N(0, R)
/// z_{t-n} ~ N(0, C)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianKoopman<T: Scalar> {
    pub k: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub c: DMatrix<T>,
    pub d: DMatrix<T>,
    pub r: DMatrix<T>,
}

impl<T: Scalar> LinearGaussianKoopman<T> {
    pub fn new(
        k: DMatrix<T>,
        sigma: DMatrix<T>,
        c: DMatrix<T>,
        d: DMatrix<T>,
        r: DMatrix<T>,
    ) -> Result<Self> {
        let dim = k.nrows();
        if !k.is_square() {
            return Err(Error::DimensionMismatch {
                what: "K must be square",
                expected: dim,
                got: k.ncols(),
            });
        }
        for (name, m) in [("Sigma", &sigma), ("C", &c)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::DimensionMismatch {
                    what: if name == "C" { "C rows" } else { "Sigma rows" },
                    expected: dim,
                    got: m.nrows(),
                });
            }
        }
        if d.ncols() != dim {
            return Err(Error::DimensionMismatch {
                what: "D columns",
                expected: dim,
                got: d.ncols(),
            });
        }
        if r.nrows() != d.nrows() || r.ncols() != d.nrows() {
            return Err(Error::DimensionMismatch {
                what: "R rows",
                expected: d.nrows(),
                got: r.nrows(),
            });
        }
        if k.iter().chain(d.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("K or D".into()));
        }
        check_psd(&sigma, "Sigma")?;
        check_psd(&c, "C")?;
        check_psd(&r, "R")?;
        Ok(Self {
            k,
            sigma: symmetrize(&sigma),
            c: symmetrize(&c),
            d,
            r: symmetrize(&r),
        })
    }

    /// Model whose latent covariance `C` is the stationary solution of
    /// `C = Σ + K C Kᵀ`.
    pub fn stationary(k: DMatrix<T>, sigma: DMatrix<T>, d: DMatrix<T>, r: DMatrix<T>) -> Result<Self> {
        let c = solve_discrete_lyapunov(&k, &sigma)?;
        Self::new(k, sigma, c, d, r)
    }

    pub fn latent_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.d.nrows()
    }

    /// Copy with `δ·I` added to Σ (regularizes a singular `M_n`).
    pub fn with_ridge(&self, delta: T) -> Self {
        let mut out = self.clone();
        for i in 0..self.latent_dim() {
            out.sigma[(i, i)] += delta;
        }
        out
    }
}

/// JSON layout: row-major nested arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    #[serde(rename = "Sigma")]
    pub sigma: Vec<Vec<f64>>,
    /// Optional; the stationary covariance is used when absent.
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

pub(crate) fn matrix_from_rows<T: Scalar>(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<T>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse(format!("ragged rows in `{name}`")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| T::lit(rows[i][j])))
}

pub(crate) fn matrix_to_rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].to_f64_lossy()).collect())
        .collect()
}

impl ModelFile {
    pub fn into_model<T: Scalar>(self) -> Result<LinearGaussianKoopman<T>> {
        let k = matrix_from_rows(&self.k, "K")?;
        let sigma = matrix_from_rows(&self.sigma, "Sigma")?;
        let d = matrix_from_rows(&self.d, "D")?;
        let r = matrix_from_rows(&self.r, "R")?;
        match self.c {
            Some(c) => LinearGaussianKoopman::new(k, sigma, matrix_from_rows(&c, "C")?, d, r),
            None => LinearGaussianKoopman::stationary(k, sigma, d, r),
        }
    }

    pub fn from_model<T: Scalar>(m: &LinearGaussianKoopman<T>) -> Self {
        Self {
            k: matrix_to_rows(&m.k),
            sigma: matrix_to_rows(&m.sigma),
            c: Some(matrix_to_rows(&m.c)),
            d: matrix_to_rows(&m.d),
            r: matrix_to_rows(&m.r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_dimensions() {
        let i2 = DMatrix::<f64>::identity(2, 2);
        let bad_d = DMatrix::<f64>::identity(3, 3);
        assert!(LinearGaussianKoopman::new(i2.clone(), i2.clone(), i2.clone(), bad_d, i2.clone()).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(LinearGaussianKoopman::new(i2.clone(), asym, i2.clone(), i2.clone(), i2).is_err());
    }

    #[test]
    fn stationary_covariance_solves_lyapunov() {
        let k = DMatrix::<f64>::from_element(1, 1, 0.9);
        let s = DMatrix::from_element(1, 1, 0.19);
        let m = LinearGaussianKoopman::stationary(k, s, DMatrix::identity(1, 1), DMatrix::identity(1, 1))
            .unwrap();
        assert!((m.c[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn model_file_round_trip() {
        let text = r#"{"K":[[0.5]],"Sigma":[[1.0]],"D":[[1.0]],"R":[[0.1]]}"#;
        let f: ModelFile = serde_json::from_str(text).unwrap();
        let m: LinearGaussianKoopman<f64> = f.into_model().unwrap();
        assert!((m.c[(0, 0)] - 1.0 / 0.75).abs() < 1e-12);
        let back = ModelFile::from_model(&m);
        let m2: LinearGaussianKoopman<f64> = back.into_model().unwrap();
        assert_eq!(m, m2);
        assert!(serde_json::from_str::<ModelFile>(r#"{"K":[[1]],"Sigma":[[1]],"D":[[1]],"R":[[1]],"X":1}"#).is_err());
    }
}
