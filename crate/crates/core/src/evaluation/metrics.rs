use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::dynamics::Trajectory;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Histogram bins per coordinate for the state KLD.
pub const KLD_BINS: usize = 64;
/// Sequence length of the spectral distribution error.
pub const SDE_STEPS: usize = 1000;
/// Adjacent positive-frequency DFT bins summed into one spectral band.
pub const SDE_BAND: usize = 25;

/// Per-coordinate standard deviation (population) over all states.
pub fn truth_scale<T: Scalar>(trajs: &[Trajectory<T>]) -> Result<Vec<f64>> {
    let dim = match trajs.first() {
        Some(t) => t.dim(),
        None => return invalid("no trajectories"),
    };
    if trajs.iter().any(|t| t.dim() != dim) {
        return invalid("trajectories differ in dimension");
    }
    let n = trajs.iter().map(|t| t.len()).sum::<usize>() as f64;
    let mut mean = vec![0.0; dim];
    for s in trajs.iter().flat_map(|t| t.states()) {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += s[c].to_f64_lossy() / n;
        }
    }
    let mut var = vec![0.0; dim];
    for s in trajs.iter().flat_map(|t| t.states()) {
        for (c, v) in var.iter_mut().enumerate() {
            let d = s[c].to_f64_lossy() - mean[c];
            *v += d * d / n;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| v.sqrt()).collect();
    if std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
        return invalid("truth has zero variance in some coordinate");
    }
    Ok(std)
}

/// RMSE over predicted steps `1..=horizon`, each coordinate divided by
/// `scale[c]`.
pub fn nrmse_with_scale<T: Scalar>(pred: &Trajectory<T>, truth: &Trajectory<T>, horizon: usize, scale: &[f64]) -> Result<f64> {
    if horizon == 0 {
        return invalid("horizon must be positive");
    }
    if pred.steps() < horizon || truth.steps() < horizon {
        return invalid(format!("trajectories shorter than horizon {horizon}"));
    }
    if pred.dim() != truth.dim() || scale.len() != truth.dim() {
        return invalid("dimension mismatch");
    }
    if scale.iter().any(|s| !(*s > 0.0)) {
        return invalid("zero truth variance");
    }
    let mut acc = 0.0;
    for i in 1..=horizon {
        for (c, s) in scale.iter().enumerate() {
            let e = (pred.states()[i][c] - truth.states()[i][c]).to_f64_lossy() / s;
            acc += e * e;
        }
    }
    Ok((acc / (horizon * scale.len()) as f64).sqrt())
}

/// NRMSE normalized by the standard deviation of `truth` itself.
pub fn nrmse<T: Scalar>(pred: &Trajectory<T>, truth: &Trajectory<T>, horizon: usize) -> Result<f64> {
    let scale = truth_scale(std::slice::from_ref(truth))?;
    nrmse_with_scale(pred, truth, horizon, &scale)
}

/// Mean over coordinates of the histogram KL `D(p‖q)`. Bins span the pooled
/// range; each cell gets `1/(n·bins)` added before renormalizing.
pub fn state_kld<T: Scalar>(samples_p: &[DVector<T>], samples_q: &[DVector<T>], bins: usize) -> Result<f64> {
    if bins < 2 {
        return invalid("state_kld needs at least 2 bins");
    }
    if samples_p.is_empty() || samples_q.is_empty() {
        return invalid("state_kld needs nonempty sample sets");
    }
    let dim = samples_p[0].len();
    if samples_p.iter().chain(samples_q).any(|s| s.len() != dim) {
        return invalid("sample dimension mismatch");
    }
    let mut total = 0.0;
    for c in 0..dim {
        let col = |set: &[DVector<T>]| set.iter().map(|s| s[c].to_f64_lossy()).collect::<Vec<f64>>();
        let (xp, xq) = (col(samples_p), col(samples_q));
        if xp.iter().chain(&xq).any(|v| !v.is_finite()) {
            return invalid("non-finite samples");
        }
        let lo = xp.iter().chain(&xq).copied().fold(f64::INFINITY, f64::min);
        let hi = xp.iter().chain(&xq).copied().fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let hist = |xs: &[f64]| {
            let mut h = vec![0.0; bins];
            for &x in xs {
                let b = (((x - lo) / width) as usize).min(bins - 1);
                h[b] += 1.0;
            }
            let n = xs.len() as f64;
            let eps = 1.0 / (n * bins as f64);
            h.iter().map(|k| (k / n + eps) / (1.0 + bins as f64 * eps)).collect::<Vec<f64>>()
        };
        let (p, q) = (hist(&xp), hist(&xq));
        total += p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>();
    }
    Ok((total / dim as f64).max(0.0))
}

/// Band-summed, sum-normalized power spectrum of the mean-removed series.
pub fn band_spectrum(x: &[f64], band: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let mut bands: Vec<f64> = power.chunks(band.max(1)).map(|c| c.iter().sum()).collect();
    let total: f64 = bands.iter().sum();
    if total > 0.0 {
        bands.iter_mut().for_each(|b| *b /= total);
    }
    bands
}

/// Coordinate-averaged L1 distance between band spectra of the first
/// `SDE_STEPS` states of each sequence. Lies in `[0, 2]`.
pub fn spectral_distribution_error<T: Scalar>(pred: &Trajectory<T>, truth: &Trajectory<T>) -> Result<f64> {
    if pred.len() < SDE_STEPS || truth.len() < SDE_STEPS {
        return invalid(format!("spectral error needs {SDE_STEPS} steps"));
    }
    if pred.dim() != truth.dim() {
        return invalid("dimension mismatch");
    }
    let dim = truth.dim();
    let mut total = 0.0;
    for c in 0..dim {
        let series = |t: &Trajectory<T>| t.states()[..SDE_STEPS].iter().map(|s| s[c].to_f64_lossy()).collect::<Vec<f64>>();
        let (a, b) = (band_spectrum(&series(pred), SDE_BAND), band_spectrum(&series(truth), SDE_BAND));
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return invalid("non-finite spectrum");
        }
        total += a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    }
    Ok(total / dim as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_stream;
    use approx::assert_relative_eq;
    use rand_distr::{Distribution, StandardNormal};

    fn traj(rows: Vec<Vec<f64>>) -> Trajectory<f64> {
        Trajectory::new(rows.into_iter().map(DVector::from_vec).collect(), 1.0, "t").unwrap()
    }

    fn wave(n: usize) -> Trajectory<f64> {
        traj((0..n).map(|i| vec![(i as f64 * 0.3).sin(), (i as f64 * 0.11).cos() * 2.0]).collect())
    }

    #[test]
    fn nrmse_examples() {
        let t = wave(40);
        assert_eq!(nrmse(&t, &t, 10).unwrap(), 0.0);
        let std = truth_scale(std::slice::from_ref(&t)).unwrap();
        let shifted = traj(t.states().iter().map(|s| vec![s[0] + std[0], s[1] + std[1]]).collect());
        assert_relative_eq!(nrmse(&shifted, &t, 10).unwrap(), 1.0, epsilon = 1e-12);
        let half = traj(t.states().iter().map(|s| vec![s[0] + std[0] / 2.0, s[1] + std[1] / 2.0]).collect());
        assert_relative_eq!(nrmse(&half, &t, 10).unwrap(), 0.5, epsilon = 1e-12);
        assert!(nrmse(&t, &t, 40).is_err());
        let flat = traj(vec![vec![1.0, 1.0]; 5]);
        assert!(nrmse(&flat, &flat, 2).is_err());
    }

    fn gauss(n: usize, mean: f64, seed: u64) -> Vec<DVector<f64>> {
        let mut rng = seeded_stream(seed, 0);
        (0..n).map(|_| DVector::from_element(1, mean + Distribution::<f64>::sample(&StandardNormal, &mut rng))).collect::<Vec<_>>()
    }

    #[test]
    fn kld_examples() {
        let a = gauss(1000, 0.0, 1);
        assert!(state_kld(&a, &a, KLD_BINS).unwrap() < 1e-6);
        let p = gauss(100_000, 0.0, 2);
        let q = gauss(100_000, 1.0, 3);
        let pq = state_kld(&p, &q, KLD_BINS).unwrap();
        let qp = state_kld(&q, &p, KLD_BINS).unwrap();
        assert!((pq - 0.5).abs() < 0.05, "{pq}");
        assert!(pq != qp);
        assert!(state_kld(&p, &q, 1).is_err());
        assert!(state_kld(&p, &[], 8).is_err());
    }

    #[test]
    fn sde_examples() {
        let t = wave(1000);
        assert_eq!(spectral_distribution_error(&t, &t).unwrap(), 0.0);
        let tone = |k: f64| traj((0..1000).map(|i| vec![(2.0 * std::f64::consts::PI * k * i as f64 / 1000.0).sin()]).collect());
        assert_relative_eq!(spectral_distribution_error(&tone(10.0), &tone(200.0)).unwrap(), 2.0, epsilon = 1e-9);
        assert!(spectral_distribution_error(&wave(999), &wave(999)).is_err());
    }

    #[test]
    fn sde_white_noise_calibration() {
        let noise = |seed| {
            let mut rng = seeded_stream(seed, 0);
            traj((0..1000).map(|_| vec![StandardNormal.sample(&mut rng)]).collect())
        };
        let worst = (0..100)
            .map(|r| spectral_distribution_error(&noise(2 * r), &noise(2 * r + 1)).unwrap())
            .fold(0.0, f64::max);
        assert!(worst <= 0.35, "{worst}");
    }

    #[test]
    fn sde_symmetric_and_shift_invariant() {
        let a = wave(1000);
        let b = traj((0..1000).map(|i| vec![(i as f64 * 0.05).sin(), (i as f64 * 0.7).cos()]).collect());
        let ab = spectral_distribution_error(&a, &b).unwrap();
        assert_eq!(ab, spectral_distribution_error(&b, &a).unwrap());
        let shift = |t: &Trajectory<f64>| traj(t.states().iter().map(|s| vec![s[0] + 5.0, s[1] - 3.0]).collect());
        assert_relative_eq!(spectral_distribution_error(&shift(&a), &shift(&b)).unwrap(), ab, epsilon = 1e-9);
    }
}
