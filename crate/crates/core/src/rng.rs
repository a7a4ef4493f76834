//! Seeded randomness. Every stochastic routine takes an explicit seed and
//! draws from a ChaCha8 stream (counter-based, so per-stream offsets are
//! cheap and reproducible across platforms).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::Result;
use crate::linalg::{check_psd, sym_eigen_desc, symmetrize};
use crate::scalar::{lit, Scalar};

pub type Rng = ChaCha8Rng;

/// Eigenvalue floor applied when a covariance is only numerically
/// semidefinite.
pub const EIGEN_CLIP: f64 = 1e-12;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn seeded_stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn standard_normal<T: Scalar>(rng: &mut Rng) -> T {
    let v: f64 = StandardNormal.sample(rng);
    lit(v)
}

pub fn standard_normal_vec<T: Scalar>(rng: &mut Rng, n: usize) -> DVector<T> {
    DVector::from_fn(n, |_, _| standard_normal(rng))
}

pub fn standard_normal_matrix<T: Scalar>(rng: &mut Rng, rows: usize, cols: usize) -> DMatrix<T> {
    // Row-major fill so the draw order matches how batches are laid out.
    let mut m = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = standard_normal(rng);
        }
    }
    m
}

/// Sampler for `N(0, cov)` through a lower-triangular factor `L Lᵀ = cov`.
#[derive(Debug, Clone)]
pub struct GaussianSampler<T: Scalar> {
    factor: DMatrix<T>,
    /// Set when Cholesky failed and eigenvalue clipping was used instead.
    pub clipped: bool,
}

impl<T: Scalar> GaussianSampler<T> {
    pub fn new(cov: &DMatrix<T>, name: &str) -> Result<Self> {
        check_psd(cov, name)?;
        let n = cov.nrows();
        if cov.iter().all(|v| *v == T::zero()) {
            return Ok(Self {
                factor: DMatrix::zeros(n, n),
                clipped: false,
            });
        }
        let sym = symmetrize(cov);
        if let Some(ch) = sym.clone().cholesky() {
            return Ok(Self {
                factor: ch.l(),
                clipped: false,
            });
        }
        let (vals, vecs) = sym_eigen_desc(&sym);
        let root = DVector::from_iterator(
            n,
            vals.iter().map(|v| v.max(lit::<T>(EIGEN_CLIP)).sqrt()),
        );
        Ok(Self {
            factor: vecs * DMatrix::from_diagonal(&root),
            clipped: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn sample(&self, rng: &mut Rng) -> DVector<T> {
        let e = standard_normal_vec(rng, self.factor.ncols());
        &self.factor * e
    }
}
