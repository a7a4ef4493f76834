//! Spectral allocation under a trace budget: water-filling and its
//! von-Neumann-entropy-regularized variant.

mod entropic;
mod water;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::gaussian_info::{forward_covariance, LinearGaussianKoopman};
use crate::linalg::{inv_sqrt_spd, matrix_power};
use crate::scalar::{lit, Scalar};

pub use entropic::{entropy_regularized_allocation, stationarity_residual};
pub use water::water_fill;

/// Nonnegative per-mode gains `g_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SpectralGains<T: Scalar> {
    g: Vec<T>,
}

impl<T: Scalar> SpectralGains<T> {
    pub fn new(g: Vec<T>) -> Result<Self> {
        if g.is_empty() {
            return invalid("gains must be nonempty");
        }
        if g.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return invalid("gains must be finite and nonnegative");
        }
        Ok(Self { g })
    }

    pub fn values(&self) -> &[T] {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn max(&self) -> T {
        self.g.iter().copied().fold(T::zero(), |a, b| a.max(b))
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        if self.max() > T::zero() {
            Ok(())
        } else {
            invalid("all gains are zero; the objective is constant")
        }
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Allocation<T: Scalar> {
    pub p: Vec<T>,
    pub budget: T,
    /// Budget multiplier. Positive for water-filling; may take either sign
    /// once the entropy term is active.
    pub mu: T,
    pub gamma: T,
    pub kkt_residual: T,
    pub objective: T,
}

impl<T: Scalar> Allocation<T> {
    pub fn total(&self) -> T {
        self.p.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// `exp` of the entropy of `p / Σp`.
    pub fn effective_dimension(&self) -> T {
        weight_entropy(&self.p).exp()
    }
}

/// Entropy of the normalized weights, `0` if they sum to zero.
pub fn weight_entropy<T: Scalar>(p: &[T]) -> T {
    let total = p.iter().copied().fold(T::zero(), |a, b| a + b);
    if !(total > T::zero()) {
        return T::zero();
    }
    p.iter()
        .map(|&v| v / total)
        .filter(|q| *q > T::zero())
        .fold(T::zero(), |acc, q| acc - q * q.ln())
}

/// `½ Σ log(1 + g_i p_i) + γ S(p / Σp)`.
pub fn allocation_objective<T: Scalar>(gains: &SpectralGains<T>, p: &[T], gamma: T) -> T {
    let info = gains
        .values()
        .iter()
        .zip(p)
        .fold(T::zero(), |acc, (&g, &pi)| acc + (g * pi).ln_1p());
    info * lit(0.5) + if gamma > T::zero() { gamma * weight_entropy(p) } else { T::zero() }
}

/// Squared singular values of `M_n^{-1/2} Kⁿ`, descending.
pub fn gains_from_model<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> Result<SpectralGains<T>> {
    let m = forward_covariance(model, n)?;
    let w = inv_sqrt_spd(&m, "M_n")?;
    let a = w * matrix_power(&model.k, n);
    let sv: DVector<T> = a.singular_values();
    let mut g: Vec<T> = sv.iter().map(|s| *s * *s).collect();
    g.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    SpectralGains::new(g)
}

/// Replaces the weights of equal gains by their mean.
pub(crate) fn average_ties<T: Scalar>(g: &[T], p: &mut [T]) {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].partial_cmp(&g[b]).expect("finite gains"));
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && g[order[end]] == g[order[start]] {
            end += 1;
        }
        if end - start > 1 {
            let sum = order[start..end].iter().fold(T::zero(), |a, &i| a + p[i]);
            let mean = sum / T::from_count(end - start);
            for &i in &order[start..end] {
                p[i] = mean;
            }
        }
        start = end;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    #[test]
    fn objective_examples() {
        let g = SpectralGains::new(vec![4.0, 1.0]).unwrap();
        let v = allocation_objective(&g, &[0.875, 0.125], 0.0);
        assert_relative_eq!(v, 0.5 * (4.5f64.ln() + 1.125f64.ln()), epsilon = 1e-15);
        assert_relative_eq!(v, 0.8109302, epsilon = 1e-7);
        let u = SpectralGains::new(vec![1.0, 2.0, 3.0]).unwrap();
        let p = [0.2, 0.2, 0.2];
        let diff = allocation_objective(&u, &p, 0.3) - allocation_objective(&u, &p, 0.0);
        assert_relative_eq!(diff, 0.3 * 3f64.ln(), epsilon = 1e-15);
        assert_eq!(allocation_objective(&g, &[0.0, 0.0], 0.0), 0.0);
    }

    #[test]
    fn gains_examples() {
        let i3 = DMatrix::<f64>::identity(3, 3);
        let m = LinearGaussianKoopman::new(i3.clone(), i3.clone(), i3.clone(), i3.clone(), i3.clone()).unwrap();
        assert!(gains_from_model(&m, 1).unwrap().values().iter().all(|g| (g - 1.0).abs() < 1e-14));
        let z = LinearGaussianKoopman::new(i3.clone() * 0.0, i3.clone(), i3.clone(), i3.clone(), i3.clone()).unwrap();
        assert!(gains_from_model(&z, 2).unwrap().values().iter().all(|g| *g == 0.0));
        let s = |v| DMatrix::from_element(1, 1, v);
        let sc = LinearGaussianKoopman::new(s(0.5), s(1.0), s(1.0), s(1.0), s(1.0)).unwrap();
        assert_relative_eq!(gains_from_model(&sc, 2).unwrap().values()[0], 0.0625 / 1.25, epsilon = 1e-15);
    }

    #[test]
    fn gains_reject_bad_values() {
        assert!(SpectralGains::new(vec![1.0, -0.1]).is_err());
        assert!(SpectralGains::<f64>::new(vec![]).is_err());
        assert!(SpectralGains::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn tie_averaging() {
        let g = [2.0, 1.0, 2.0];
        let mut p = [0.4, 0.2, 0.6];
        average_ties(&g, &mut p);
        assert_eq!(p, [0.5, 0.2, 0.5]);
    }
}
