//! Autoregressive error bound and its synthetic linear-Gaussian check.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_mi, log_det_spd, solve_discrete_lyapunov, symmetrize};
use crate::rng::{seeded_stream, standard_normal, standard_normal_matrix, GaussianSampler};
use crate::scalar::{lit, Scalar};

/// Gaps below `−GAP_SLACK` are rejected as inconsistent inputs.
pub const GAP_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ErrorBound<T: Scalar> {
    /// `Σ_n (I(x_{n-1};x_n) − I(z_{n-1};z_n))`, clamped at 0.
    pub gap_sum: T,
    pub epsilon: T,
    /// `sqrt(½ gap_sum + ε)`.
    pub tv: T,
}

impl<T: Scalar> ErrorBound<T> {
    /// `C̄ · sqrt(2 gap_sum + ε)`.
    pub fn moment(&self, c_bar: T) -> T {
        c_bar * (self.gap_sum * lit(2.0) + self.epsilon).sqrt()
    }
}

fn checked_gap_sum<T: Scalar>(true_mi: &[T], latent_mi: &[T]) -> Result<T> {
    if true_mi.len() != latent_mi.len() {
        return Err(Error::DimensionMismatch {
            what: "per-step information sequences",
            expected: true_mi.len(),
            got: latent_mi.len(),
        });
    }
    if true_mi.is_empty() {
        return invalid("error bound needs at least one step");
    }
    let mut sum = T::zero();
    for (i, (a, b)) in true_mi.iter().zip(latent_mi).enumerate() {
        let gap = *a - *b;
        if !gap.is_finite() {
            return Err(Error::NonFinite(format!("information gap at step {}", i + 1)));
        }
        if gap < -lit::<T>(GAP_SLACK) {
            return invalid(format!("negative information gap {gap} at step {}", i + 1));
        }
        sum += gap;
    }
    Ok(sum.max(T::zero()))
}

pub fn error_bound<T: Scalar>(true_mi_per_step: &[T], latent_mi_per_step: &[T], epsilon: T) -> Result<ErrorBound<T>> {
    if !(epsilon >= T::zero()) {
        return invalid("epsilon must be non-negative");
    }
    let gap_sum = checked_gap_sum(true_mi_per_step, latent_mi_per_step)?;
    Ok(ErrorBound { gap_sum, epsilon, tv: (gap_sum * lit(0.5) + epsilon).sqrt() })
}

/// Distortion lower bound `C_low · exp(−2/(n t) (Σ I_z + ε))` with
/// `C_low = n t / (2πe) · exp(2/(n t) Σ I_x)`, `n` the observation dimension.
pub fn distortion_lower_bound<T: Scalar>(obs_dim: usize, steps: usize, sum_ix: T, sum_iz: T, epsilon: T) -> Result<T> {
    if obs_dim == 0 || steps == 0 {
        return invalid("lower bound needs obs_dim >= 1 and steps >= 1");
    }
    let nt = T::from_count(obs_dim * steps);
    let two_pi_e = lit::<T>(2.0 * std::f64::consts::PI * std::f64::consts::E);
    let rate = lit::<T>(2.0) / nt;
    Ok(nt / two_pi_e * (rate * (sum_ix - sum_iz - epsilon)).exp())
}

/// `KL(N(m0, S0) ‖ N(m1, S1))`.
pub fn gaussian_kl<T: Scalar>(m0: &DVector<T>, s0: &DMatrix<T>, m1: &DVector<T>, s1: &DMatrix<T>) -> Result<T> {
    let d = m0.len();
    let chol = symmetrize(s1)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("KL reference covariance".into()))?;
    let dm = m1 - m0;
    let quad = dm.dot(&chol.solve(&dm));
    let tr = chol.solve(s0).trace();
    let v = tr - T::from_count(d) + quad + log_det_spd(s1, "KL reference covariance")? - log_det_spd(s0, "KL covariance")?;
    Ok((v * lit(0.5)).max(T::zero()))
}

/// Expected `KL(N(A z, S0) ‖ N(B z, S1))` for `z ~ N(m, V)`.
fn expected_linear_kl<T: Scalar>(
    a: &DMatrix<T>,
    s0: &DMatrix<T>,
    b: &DMatrix<T>,
    s1: &DMatrix<T>,
    m: &DVector<T>,
    v: &DMatrix<T>,
) -> Result<T> {
    let zero = DVector::zeros(s0.nrows());
    let base = gaussian_kl(&zero, s0, &zero, s1)?;
    let delta = a - b;
    let chol = symmetrize(s1)
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("KL reference covariance".into()))?;
    let second = v + m * m.transpose();
    let quad = (delta.transpose() * chol.solve(&delta) * second).trace();
    Ok(base + quad * lit(0.5))
}

/// Lossy linear Koopman model `z = E x + η`, `z' = K z + w`, `x = D z + ε`.
#[derive(Debug, Clone)]
pub struct LatentModel<T: Scalar> {
    pub e: DMatrix<T>,
    pub s: DMatrix<T>,
    pub k: DMatrix<T>,
    pub sigma: DMatrix<T>,
    pub d: DMatrix<T>,
    pub r: DMatrix<T>,
}

/// Configuration of the synthetic bound check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundExperiment {
    pub a: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    /// Rows of the projection encoder.
    pub encoder: Vec<Vec<f64>>,
    pub encoder_noise: f64,
    /// Scale of the random perturbation applied to the ideal model.
    pub perturbation: f64,
    pub horizon: usize,
    pub samples: usize,
    pub bins: usize,
}

impl Default for BoundExperiment {
    fn default() -> Self {
        Self {
            a: vec![vec![0.9, 0.2], vec![0.0, 0.5]],
            q: vec![vec![0.19, 0.0], vec![0.0, 0.02]],
            encoder: vec![vec![1.0, 0.0]],
            encoder_noise: 0.01,
            perturbation: 0.02,
            horizon: 5,
            samples: 100_000,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOutcome {
    pub seed: u64,
    pub bound: f64,
    /// Largest binned per-step TV between true and model predictions.
    pub empirical_tv: f64,
    /// `sqrt(½ KL)` of the exact Gaussian per-step marginals, maximised over steps.
    pub pinsker_reference: f64,
    pub gap_sum: f64,
    pub epsilon_enc: f64,
    pub epsilon_tra: f64,
    pub epsilon_rec: f64,
    pub holds: bool,
}

fn rows(v: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
    super::model::matrix_from_rows(v, name)
}

impl BoundExperiment {
    /// Best linear-Gaussian latent model of the stationary encoded process,
    /// together with `(A, Q, P)` of the true system.
    pub fn ideal(&self) -> Result<(LatentModel<f64>, [DMatrix<f64>; 3])> {
        let a = rows(&self.a, "A")?;
        let q = rows(&self.q, "Q")?;
        let e = rows(&self.encoder, "encoder")?;
        if a.nrows() != a.ncols() || q.shape() != a.shape() || e.ncols() != a.nrows() {
            return invalid("bound experiment matrices have inconsistent dimensions");
        }
        let p = solve_discrete_lyapunov(&a, &q)?;
        let s = DMatrix::identity(e.nrows(), e.nrows()) * self.encoder_noise;
        let vz = symmetrize(&(&e * &p * e.transpose() + &s));
        let vz_inv = vz
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::NotPositiveDefinite("latent covariance".into()))?;
        let cross = &e * &a * &p * e.transpose();
        let k = &cross * &vz_inv;
        let sigma = symmetrize(&(&vz - &k * &vz * k.transpose()));
        let d = &p * e.transpose() * &vz_inv;
        let r = symmetrize(&(&p - &d * &vz * d.transpose()));
        Ok((LatentModel { e, s, k, sigma, d, r }, [a, q, p]))
    }

    /// Stationary per-step `(I(x;x'), I(z;z'))` of the true system and its encoding.
    pub fn stationary_information(&self) -> Result<(f64, f64)> {
        let (m, [a, _, p]) = self.ideal()?;
        let n = a.nrows();
        let mut jx = DMatrix::zeros(2 * n, 2 * n);
        jx.view_mut((0, 0), (n, n)).copy_from(&p);
        jx.view_mut((n, n), (n, n)).copy_from(&p);
        jx.view_mut((n, 0), (n, n)).copy_from(&(&a * &p));
        jx.view_mut((0, n), (n, n)).copy_from(&(&p * a.transpose()));
        let xs: Vec<usize> = (0..n).collect();
        let xs2: Vec<usize> = (n..2 * n).collect();
        let ix = gaussian_mi(&jx, &xs, &xs2, &[])?;
        let vz = &m.e * &p * m.e.transpose() + &m.s;
        let latent = super::LinearGaussianKoopman::new(m.k.clone(), m.sigma.clone(), vz, m.d.clone(), m.r.clone())?;
        let iz = super::latent_mutual_information(&latent, 1)?;
        Ok((ix, iz))
    }

    pub fn run(&self, seed: u64) -> Result<BoundOutcome> {
        if self.horizon == 0 || self.samples < 2 || self.bins < 2 {
            return invalid("bound experiment needs horizon >= 1, samples >= 2, bins >= 2");
        }
        let (ideal, [a, q, p]) = self.ideal()?;
        let (ix, iz) = self.stationary_information()?;
        let t = self.horizon;
        let bound = error_bound(&vec![ix; t], &vec![iz; t], 0.0)?;

        let mut rng = seeded_stream(seed, 0);
        let x0 = GaussianSampler::new(&p, "P")?.sample(&mut rng);
        let pert = self.perturbation;
        let mut jitter = |m: &DMatrix<f64>| m + standard_normal_matrix::<f64>(&mut rng, m.nrows(), m.ncols()) * pert;
        let e2 = jitter(&ideal.e);
        let k2 = jitter(&ideal.k);
        let d2 = jitter(&ideal.d);
        let mut scale = |m: &DMatrix<f64>| m * (1.0 + pert * standard_normal::<f64>(&mut rng)).abs();
        let s2 = scale(&ideal.s);
        let sigma2 = scale(&ideal.sigma);
        let r2 = scale(&ideal.r);
        let model = LatentModel { e: e2, s: s2, k: k2, sigma: sigma2, d: d2, r: r2 };

        // Closed-form error terms along the ideal latent path given x0.
        let eps_enc = gaussian_kl(&(&ideal.e * &x0), &ideal.s, &(&model.e * &x0), &model.s)?;
        let (mut eps_tra, mut eps_rec) = (0.0, 0.0);
        let mut m = &ideal.e * &x0;
        let mut v = ideal.s.clone();
        for _ in 0..t {
            eps_tra += expected_linear_kl(&ideal.k, &ideal.sigma, &model.k, &model.sigma, &m, &v)?;
            m = &ideal.k * &m;
            v = symmetrize(&(&ideal.k * &v * ideal.k.transpose() + &ideal.sigma));
            eps_rec += expected_linear_kl(&ideal.d, &ideal.r, &model.d, &model.r, &m, &v)?;
        }
        let epsilon = eps_enc + eps_tra + eps_rec;
        let bound = ErrorBound { epsilon, tv: (bound.gap_sum * 0.5 + epsilon).sqrt(), ..bound };

        // Per-step predictive marginals of truth and model given x0.
        let (mut mp, mut vp) = (x0.clone(), DMatrix::zeros(x0.len(), x0.len()));
        let (mut mq, mut vq) = (&model.e * &x0, model.s.clone());
        let (mut tv_max, mut kl_max) = (0.0f64, 0.0f64);
        for step in 0..t {
            mp = &a * &mp;
            vp = symmetrize(&(&a * &vp * a.transpose() + &q));
            mq = &model.k * &mq;
            vq = symmetrize(&(&model.k * &vq * model.k.transpose() + &model.sigma));
            let mx = &model.d * &mq;
            let vx = symmetrize(&(&model.d * &vq * model.d.transpose() + &model.r));
            kl_max = kl_max.max(gaussian_kl(&mp, &vp, &mx, &vx)?);
            let mut rng_p = seeded_stream(seed, 1 + 2 * step as u64);
            let mut rng_q = seeded_stream(seed, 2 + 2 * step as u64);
            let sp = GaussianSampler::new(&vp, "truth marginal")?;
            let sq = GaussianSampler::new(&vx, "model marginal")?;
            let xs: Vec<DVector<f64>> = (0..self.samples).map(|_| &mp + sp.sample(&mut rng_p)).collect();
            let ys: Vec<DVector<f64>> = (0..self.samples).map(|_| &mx + sq.sample(&mut rng_q)).collect();
            tv_max = tv_max.max(binned_tv(&xs, &ys, self.bins));
        }
        Ok(BoundOutcome {
            seed,
            bound: bound.tv,
            empirical_tv: tv_max,
            pinsker_reference: (0.5 * kl_max).sqrt(),
            gap_sum: bound.gap_sum,
            epsilon_enc: eps_enc,
            epsilon_tra: eps_tra,
            epsilon_rec: eps_rec,
            holds: tv_max <= bound.tv,
        })
    }
}

/// Total variation between two sample sets on a shared multi-dimensional
/// grid of `bins` cells per axis spanning the pooled range.
pub fn binned_tv(xs: &[DVector<f64>], ys: &[DVector<f64>], bins: usize) -> f64 {
    let dim = xs[0].len();
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for s in xs.iter().chain(ys) {
        for c in 0..dim {
            lo[c] = lo[c].min(s[c]);
            hi[c] = hi[c].max(s[c]);
        }
    }
    let cell = |s: &DVector<f64>| {
        let mut idx = 0usize;
        for c in 0..dim {
            let w = hi[c] - lo[c];
            let b = if w > 0.0 { (((s[c] - lo[c]) / w) * bins as f64).floor() as usize } else { 0 };
            idx = idx * bins + b.min(bins - 1);
        }
        idx
    };
    let mut counts = std::collections::HashMap::<usize, (f64, f64)>::new();
    for s in xs {
        counts.entry(cell(s)).or_default().0 += 1.0 / xs.len() as f64;
    }
    for s in ys {
        counts.entry(cell(s)).or_default().1 += 1.0 / ys.len() as f64;
    }
    let mut keys: Vec<_> = counts.keys().copied().collect();
    keys.sort_unstable();
    0.5 * keys.iter().map(|k| (counts[k].0 - counts[k].1).abs()).sum::<f64>()
}
