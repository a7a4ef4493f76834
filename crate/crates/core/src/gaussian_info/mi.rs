//! Closed-form information quantities of a [`LinearGaussianKoopman`].

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::linalg::{gaussian_mi, inv_sqrt_spd, log_det_spd, matrix_power, symmetrize};
use crate::scalar::{lit, Scalar};

use super::LinearGaussianKoopman;

/// Documented ridge for callers whose `M_n` is singular; pass it to
/// [`LinearGaussianKoopman::with_ridge`]. The default is no ridge.
pub const RIDGE_FALLBACK: f64 = 1e-10;

/// `M_n = Σ_{i=0}^{n-1} Kⁱ Σ (Kⁱ)ᵀ`; `M_0` is the zero matrix.
fn forward_cov_raw<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> DMatrix<T> {
    let d = model.latent_dim();
    let mut acc = DMatrix::zeros(d, d);
    let mut pow = DMatrix::identity(d, d);
    for _ in 0..n {
        acc += &pow * &model.sigma * pow.transpose();
        pow = &model.k * pow;
    }
    symmetrize(&acc)
}

/// n-step forward covariance of `z_t | z_{t-n}`.
pub fn forward_covariance<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> Result<DMatrix<T>> {
    if n == 0 {
        return invalid("forward covariance needs n >= 1");
    }
    Ok(forward_cov_raw(model, n))
}

/// Covariance of `z_{t-n+j}` when `z_{t-n} ~ N(0, C)`.
pub fn latent_marginal_cov<T: Scalar>(model: &LinearGaussianKoopman<T>, j: usize) -> DMatrix<T> {
    let kj = matrix_power(&model.k, j);
    symmetrize(&(&kj * &model.c * kj.transpose() + forward_cov_raw(model, j)))
}

fn singular_mn(n: usize) -> Error {
    Error::NotPositiveDefinite(format!(
        "M_{n} (use a positive-definite Sigma or add a ridge, e.g. {RIDGE_FALLBACK:e})"
    ))
}

/// `I(z_{t-n}; z_t) = ½ log det(I + M_n^{-1/2} Kⁿ C (Kⁿ)ᵀ M_n^{-1/2})`.
pub fn latent_mutual_information<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> Result<T> {
    let m = forward_covariance(model, n)?;
    let kn = matrix_power(&model.k, n);
    if kn.iter().all(|v| *v == T::zero()) {
        return Ok(T::zero());
    }
    let w = inv_sqrt_spd(&m, "M_n").map_err(|_| singular_mn(n))?;
    let d = model.latent_dim();
    let inner = DMatrix::identity(d, d) + &w * &kn * &model.c * kn.transpose() * &w;
    Ok(log_det_spd(&inner, "I + whitened signal")?.max(T::zero()) * lit(0.5))
}

/// `I(z_t; x_{t-1} | z_{t-n})` from the conditional joint of
/// `(z_t, x_{t-1})` given `z_{t-n}`. Needs `n ≥ 2`.
pub fn fast_dissipating_information<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> Result<T> {
    if n < 2 {
        return invalid("fast-dissipating information needs n >= 2");
    }
    if model.d.iter().all(|v| *v == T::zero()) {
        return Ok(T::zero());
    }
    let mn = forward_cov_raw(model, n);
    let mn1 = forward_cov_raw(model, n - 1);
    let cross = &model.k * &mn1 * model.d.transpose();
    let xx = symmetrize(&(&model.d * &mn1 * model.d.transpose() + &model.r));
    let (d, m) = (model.latent_dim(), model.obs_dim());
    let mut joint = DMatrix::zeros(d + m, d + m);
    joint.view_mut((0, 0), (d, d)).copy_from(&mn);
    joint.view_mut((0, d), (d, m)).copy_from(&cross);
    joint.view_mut((d, 0), (m, d)).copy_from(&cross.transpose());
    joint.view_mut((d, d), (m, m)).copy_from(&xx);
    let v = log_det_spd(&mn, "M_n").map_err(|_| singular_mn(n))?
        + log_det_spd(&xx, "D M_{n-1} Dᵀ + R")?
        - log_det_spd(&joint, "conditional joint of (z_t, x_{t-1}) given z_{t-n}")?;
    Ok((v * lit(0.5)).max(T::zero()))
}

/// `I(z_t; x_t | x_{t-1}) = H(x_t | x_{t-1}) − H(ε)` where
/// `z_{t-1} ~ N(0, prev_cov)`.
pub fn residual_information_with<T: Scalar>(
    model: &LinearGaussianKoopman<T>,
    prev_cov: &DMatrix<T>,
) -> Result<T> {
    if model.d.iter().all(|v| *v == T::zero()) {
        return Ok(T::zero());
    }
    let log_det_r = log_det_spd(&model.r, "R")?;
    let (d, k) = (&model.d, &model.k);
    let prev = symmetrize(&(d * prev_cov * d.transpose() + &model.r));
    let cur_z = k * prev_cov * k.transpose() + &model.sigma;
    let cur = symmetrize(&(d * cur_z * d.transpose() + &model.r));
    let cross = d * k * prev_cov * d.transpose();
    let chol = prev
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("Cov(x_{t-1})".into()))?;
    let cond = symmetrize(&(cur - &cross * chol.solve(&cross.transpose())));
    let h = log_det_spd(&cond, "Cov(x_t | x_{t-1})")?;
    Ok(((h - log_det_r) * lit(0.5)).max(T::zero()))
}

/// Residual information with `C` taken as the covariance of `z_{t-1}`.
pub fn residual_information<T: Scalar>(model: &LinearGaussianKoopman<T>) -> Result<T> {
    residual_information_with(model, &model.c)
}

/// Index layout of [`disentanglement_joint`].
#[derive(Debug, Clone)]
pub struct JointLayout {
    pub z_past: Vec<usize>,
    pub z_prev: Vec<usize>,
    pub z_now: Vec<usize>,
    pub x_prev: Vec<usize>,
    pub x_now: Vec<usize>,
}

/// Joint covariance of `(z_{t-n}, z_{t-1}, z_t, x_{t-1}, x_t)` with
/// `z_{t-n} ~ N(0, C)`. Needs `n ≥ 2`.
pub fn disentanglement_joint<T: Scalar>(
    model: &LinearGaussianKoopman<T>,
    n: usize,
) -> Result<(DMatrix<T>, JointLayout)> {
    if n < 2 {
        return invalid("joint over (z_{t-n}, z_{t-1}, z_t) needs n >= 2");
    }
    let (d, m) = (model.latent_dim(), model.obs_dim());
    let k = &model.k;
    let kn1 = matrix_power(k, n - 1);
    let v_prev = latent_marginal_cov(model, n - 1);
    let v_now = latent_marginal_cov(model, n);
    // Latent block (z_past, z_prev, z_now).
    let mut lat = DMatrix::zeros(3 * d, 3 * d);
    let c = &model.c;
    let c_prev_past = &kn1 * c;
    let c_now_past = k * &c_prev_past;
    let c_now_prev = k * &v_prev;
    let put = |mat: &mut DMatrix<T>, i: usize, j: usize, b: &DMatrix<T>| {
        mat.view_mut((i * d, j * d), (d, d)).copy_from(b);
        if i != j {
            mat.view_mut((j * d, i * d), (d, d)).copy_from(&b.transpose());
        }
    };
    put(&mut lat, 0, 0, c);
    put(&mut lat, 1, 1, &v_prev);
    put(&mut lat, 2, 2, &v_now);
    put(&mut lat, 1, 0, &c_prev_past);
    put(&mut lat, 2, 0, &c_now_past);
    put(&mut lat, 2, 1, &c_now_prev);
    // Append observations x_prev = D z_prev + ε, x_now = D z_now + ε'.
    let mut map = DMatrix::zeros(3 * d + 2 * m, 3 * d);
    map.view_mut((0, 0), (3 * d, 3 * d)).copy_from(&DMatrix::identity(3 * d, 3 * d));
    map.view_mut((3 * d, d), (m, d)).copy_from(&model.d);
    map.view_mut((3 * d + m, 2 * d), (m, d)).copy_from(&model.d);
    let mut joint = &map * lat * map.transpose();
    for off in [3 * d, 3 * d + m] {
        let mut blk = joint.view_mut((off, off), (m, m));
        blk += &model.r;
    }
    let range = |a: usize, len: usize| (a..a + len).collect::<Vec<_>>();
    Ok((
        symmetrize(&joint),
        JointLayout {
            z_past: range(0, d),
            z_prev: range(d, d),
            z_now: range(2 * d, d),
            x_prev: range(3 * d, m),
            x_now: range(3 * d + m, m),
        },
    ))
}

/// Both sides of `I(z_t;x_t) = I(z_{t-n};z_t) + I(z_t;x_{t-1}|z_{t-n}) +
/// I(z_t;x_t|x_{t-1})`, plus the two exact correction terms that close the
/// identity when the observation model does not make `z_t` conditionally
/// independent of the past given `x_t`:
///
/// `lhs = latent + fast + residual + conditioning_shift − encoder_gap`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disentanglement<T: Scalar> {
    pub mi_total: T,
    pub mi_latent: T,
    pub mi_fast: T,
    pub mi_residual: T,
    /// `|mi_total − (mi_latent + mi_fast + mi_residual)|`.
    pub residual: T,
    /// `I(z_t; (z_{t-n}, x_{t-1}) | x_t)`; zero when `z_t` depends on the
    /// past only through `x_t`.
    pub encoder_gap: T,
    /// `I(z_t; x_t | z_{t-n}, x_{t-1}) − I(z_t; x_t | x_{t-1})`.
    pub conditioning_shift: T,
}

pub fn disentanglement_identity<T: Scalar>(
    model: &LinearGaussianKoopman<T>,
    n: usize,
) -> Result<Disentanglement<T>> {
    let mi_latent = latent_mutual_information(model, n)?;
    let mi_fast = fast_dissipating_information(model, n)?;
    let prev_cov = latent_marginal_cov(model, n - 1);
    let mi_residual = residual_information_with(model, &prev_cov)?;
    let (encoder_gap, conditioning_shift, mi_total);
    if model.d.iter().all(|v| *v == T::zero()) {
        mi_total = T::zero();
        encoder_gap = T::zero();
        conditioning_shift = T::zero();
    } else {
        let (j, l) = disentanglement_joint(model, n)?;
        mi_total = gaussian_mi(&j, &l.z_now, &l.x_now, &[])?.max(T::zero());
        let past: Vec<usize> = l.z_past.iter().chain(&l.x_prev).copied().collect();
        encoder_gap = gaussian_mi(&j, &l.z_now, &past, &l.x_now)?;
        conditioning_shift = gaussian_mi(&j, &l.z_now, &l.x_now, &past)?
            - gaussian_mi(&j, &l.z_now, &l.x_now, &l.x_prev)?;
    }
    let residual = (mi_total - (mi_latent + mi_fast + mi_residual)).abs();
    Ok(Disentanglement {
        mi_total,
        mi_latent,
        mi_fast,
        mi_residual,
        residual,
        encoder_gap,
        conditioning_shift,
    })
}

/// `I(x_{j-1}; x_j)` for observations of the latent path started at
/// `z_{t-n} ~ N(0, C)` (`j ≥ 1` counts steps after `t-n`).
pub fn observation_step_information<T: Scalar>(model: &LinearGaussianKoopman<T>, j: usize) -> Result<T> {
    if j == 0 {
        return invalid("step index must be >= 1");
    }
    let v = latent_marginal_cov(model, j - 1);
    let (d, k) = (&model.d, &model.k);
    let m = model.obs_dim();
    let prev = d * &v * d.transpose() + &model.r;
    let cur = d * (k * &v * k.transpose() + &model.sigma) * d.transpose() + &model.r;
    let cross = d * k * &v * d.transpose();
    let mut joint = DMatrix::zeros(2 * m, 2 * m);
    joint.view_mut((0, 0), (m, m)).copy_from(&prev);
    joint.view_mut((m, m), (m, m)).copy_from(&cur);
    joint.view_mut((m, 0), (m, m)).copy_from(&cross);
    joint.view_mut((0, m), (m, m)).copy_from(&cross.transpose());
    let a: Vec<usize> = (0..m).collect();
    let b: Vec<usize> = (m..2 * m).collect();
    Ok(gaussian_mi(&symmetrize(&joint), &a, &b, &[])?.max(T::zero()))
}

/// `I(z_{j-1}; z_j)` along the same path (the latent information at `n = 1`).
pub fn latent_step_information<T: Scalar>(model: &LinearGaussianKoopman<T>, j: usize) -> Result<T> {
    if j == 0 {
        return invalid("step index must be >= 1");
    }
    let mut shifted = model.clone();
    shifted.c = latent_marginal_cov(model, j - 1);
    latent_mutual_information(&shifted, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(k: f64, s: f64, c: f64, d: f64, r: f64) -> LinearGaussianKoopman<f64> {
        let m = |v| DMatrix::from_element(1, 1, v);
        LinearGaussianKoopman::new(m(k), m(s), m(c), m(d), m(r)).unwrap()
    }

    #[test]
    fn forward_covariance_examples() {
        let id = DMatrix::<f64>::identity(2, 2);
        let m = LinearGaussianKoopman::new(id.clone(), id.clone(), id.clone(), id.clone(), id.clone()).unwrap();
        assert_eq!(forward_covariance(&m, 3).unwrap(), &id * 3.0);
        let half = LinearGaussianKoopman::new(&id * 0.5, id.clone(), id.clone(), id.clone(), id.clone()).unwrap();
        assert_relative_eq!(forward_covariance(&half, 2).unwrap(), &id * 1.25, epsilon = 1e-15);
        assert_eq!(forward_covariance(&half, 1).unwrap(), half.sigma);
        assert!(forward_covariance(&half, 0).is_err());
    }

    #[test]
    fn scalar_latent_mi() {
        let m = scalar(0.5, 1.0, 1.0, 1.0, 1.0);
        let v = latent_mutual_information(&m, 1).unwrap();
        assert_relative_eq!(v, 0.5 * 1.25f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(v, 0.1115718, epsilon = 1e-7);
    }

    #[test]
    fn zero_operator_carries_no_latent_information() {
        let m = scalar(0.0, 1.0, 3.0, 1.0, 1.0);
        assert_eq!(latent_mutual_information(&m, 4).unwrap(), 0.0);
    }

    #[test]
    fn singular_forward_covariance_is_reported() {
        let m = scalar(0.5, 0.0, 1.0, 1.0, 1.0);
        let err = latent_mutual_information(&m, 1).unwrap_err();
        assert!(err.to_string().contains("ridge"));
        assert!(latent_mutual_information(&m.with_ridge(RIDGE_FALLBACK), 1).is_ok());
    }

    #[test]
    fn fast_information_vanishes_without_observation_coupling() {
        let m = scalar(0.7, 1.0, 1.0, 0.0, 0.5);
        assert_eq!(fast_dissipating_information(&m, 3).unwrap(), 0.0);
        assert!(fast_dissipating_information(&m, 1).is_err());
    }

    #[test]
    fn fast_information_noise_dominated_limit() {
        let base = scalar(0.7, 1.0, 1.0, 1.0, 0.5);
        let loud = scalar(0.7, 1.0, 1.0, 1.0, 0.5e6);
        assert!(fast_dissipating_information(&base, 2).unwrap() > 0.01);
        assert!(fast_dissipating_information(&loud, 2).unwrap() < 1e-6);
    }

    #[test]
    fn fast_information_converges_to_unconditional() {
        // Var z = 4/3, Cov(z_t, x_{t-1}) = 2/3, Var x = 7/3, so I = ½ ln(7/6).
        let m = LinearGaussianKoopman::stationary(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let limit = 0.5 * (7.0f64 / 6.0).ln();
        let early = fast_dissipating_information(&m, 2).unwrap();
        assert_relative_eq!(early, 5.268026e-2, max_relative = 1e-6);
        assert!(early < limit);
        assert_relative_eq!(fast_dissipating_information(&m, 60).unwrap(), limit, max_relative = 1e-10);
    }

    #[test]
    fn scalar_residual_matches_hand_algebra() {
        // z_{t-1} ~ N(0,1), z_t = 0.9 z_{t-1} + w, Var w = 0.19, x = z + e, Var e = 0.01.
        let m = scalar(0.9, 0.19, 1.0, 1.0, 0.01);
        let var_prev = 1.0 + 0.01;
        let var_cur = 0.81 + 0.19 + 0.01;
        let cov = 0.9;
        let cond = var_cur - cov * cov / var_prev;
        let expect = 0.5 * (cond / 0.01f64).ln();
        assert_relative_eq!(residual_information(&m).unwrap(), expect, epsilon = 1e-12);
    }

    #[test]
    fn residual_decreases_with_observation_noise() {
        let mut last = f64::INFINITY;
        for r in [0.01, 0.1, 1.0, 10.0, 100.0, 1e4] {
            let v = residual_information(&scalar(0.9, 0.19, 1.0, 1.0, r)).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-4);
        assert_eq!(residual_information(&scalar(0.9, 0.19, 1.0, 0.0, 1.0)).unwrap(), 0.0);
        assert!(residual_information(&scalar(0.9, 0.19, 1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn identity_holds_for_white_latents() {
        let m = scalar(0.0, 1.0, 1.0, 1.0, 0.3);
        let r = disentanglement_identity(&m, 2).unwrap();
        assert_eq!(r.mi_latent, 0.0);
        assert!(r.residual < 1e-12, "{r:?}");
    }

    #[test]
    fn correction_terms_close_the_identity() {
        let m = scalar(0.8, 0.5, 1.2, 1.3, 0.2);
        for n in [2, 3, 5] {
            let r = disentanglement_identity(&m, n).unwrap();
            let closed = r.mi_latent + r.mi_fast + r.mi_residual + r.conditioning_shift - r.encoder_gap;
            assert!((r.mi_total - closed).abs() < 1e-10, "n = {n}: {r:?}");
        }
    }

    #[test]
    fn observation_information_never_exceeds_latent_information() {
        let m = scalar(0.8, 0.5, 1.2, 1.3, 0.2);
        for j in 1..5 {
            let ix = observation_step_information(&m, j).unwrap();
            let iz = latent_step_information(&m, j).unwrap();
            assert!(ix <= iz + 1e-12);
        }
    }

    #[test]
    fn spectral_regimes_with_unit_noise() {
        // With Σ = C = I and K = ρ·R, R orthogonal: M_n = (Σ ρ^{2i}) I, so
        // each of the d directions carries ½ ln(1 + ρ^{2n} / Σ_{i<n} ρ^{2i}).
        let th = 0.7f64;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let id = DMatrix::<f64>::identity(2, 2);
        let closed = |rho: f64, n: i32| {
            let m: f64 = (0..n).map(|i| rho.powi(2 * i)).sum();
            (1.0 + rho.powi(2 * n) / m).ln()
        };
        for rho in [1.1, 1.0, 0.8] {
            let m = LinearGaussianKoopman::new(&rot * rho, id.clone(), id.clone(), id.clone(), id.clone()).unwrap();
            for n in [1, 2, 10, 50] {
                let v = latent_mutual_information(&m, n as usize).unwrap();
                assert_relative_eq!(v, closed(rho, n), max_relative = 1e-10);
            }
        }
        let orth = LinearGaussianKoopman::new(rot.clone(), id.clone(), id.clone(), id.clone(), id.clone()).unwrap();
        assert_relative_eq!(latent_mutual_information(&orth, 50).unwrap(), 51f64.ln() - 50f64.ln(), max_relative = 1e-10);
        let contracting = LinearGaussianKoopman::new(&rot * 0.8, id.clone(), id.clone(), id.clone(), id).unwrap();
        assert!(latent_mutual_information(&contracting, 50).unwrap() < 1e-3);
    }
}
