use std::fmt::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_float, Trajectory};
use crate::error::{invalid, Result};
use crate::rng::seeded_stream;
use crate::scalar::{lit, Scalar};

use super::loss::{gradients, LossBreakdown};
use super::{KoopmanAutoencoder, TrainConfig};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam optimizer state for a list of tensors.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    lr: T,
    step: i32,
    m: Vec<DMatrix<T>>,
    v: Vec<DMatrix<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64, shapes: &[DMatrix<T>]) -> Self {
        let zeros = |t: &DMatrix<T>| DMatrix::zeros(t.nrows(), t.ncols());
        Self { lr: lit(lr), step: 0, m: shapes.iter().map(zeros).collect(), v: shapes.iter().map(zeros).collect() }
    }

    pub fn update(&mut self, params: &mut [DMatrix<T>], grads: &[DMatrix<T>]) {
        self.step += 1;
        let (b1, b2, eps) = (lit::<T>(ADAM_BETA1), lit::<T>(ADAM_BETA2), lit::<T>(ADAM_EPS));
        let c1 = T::one() - b1.powi(self.step);
        let c2 = T::one() - b2.powi(self.step);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (T::one() - b1) * g[i];
                v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

/// Mean loss terms over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EpochLog<T: Scalar> {
    pub epoch: usize,
    pub losses: LossBreakdown<T>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub model: KoopmanAutoencoder<T>,
    pub log: Vec<EpochLog<T>>,
    /// Set when a step produced a non-finite loss or gradient; `model` is
    /// then the last finite state.
    pub divergence: Option<String>,
}

/// Contiguous `batch`-row windows, starts spaced by `stride`.
pub fn windows<T: Scalar>(data: &[Trajectory<T>], batch: usize, stride: usize) -> Vec<DMatrix<T>> {
    let mut out = Vec::new();
    for traj in data {
        let states = traj.states();
        let mut start = 0;
        while start + batch <= states.len() {
            out.push(DMatrix::from_fn(batch, traj.dim(), |r, c| states[start + r][c]));
            start += stride;
        }
    }
    out
}

fn mean_breakdown<T: Scalar>(items: &[LossBreakdown<T>]) -> LossBreakdown<T> {
    let n = T::from_count(items.len());
    let avg = |f: &dyn Fn(&LossBreakdown<T>) -> T| items.iter().fold(T::zero(), |a, b| a + f(b)) / n;
    let avg_opt = |f: &dyn Fn(&LossBreakdown<T>) -> Option<T>| {
        items[0].elbo.map(|_| items.iter().fold(T::zero(), |a, b| a + f(b).unwrap_or_else(T::zero)) / n)
    };
    LossBreakdown {
        rec: avg(&|b| b.rec),
        infonce: avg(&|b| b.infonce),
        koopman_consistency: avg(&|b| b.koopman_consistency),
        vne: avg(&|b| b.vne),
        elbo: avg_opt(&|b| b.elbo),
        structural: avg_opt(&|b| b.structural),
        encoder_entropy: avg_opt(&|b| b.encoder_entropy),
        total: avg(&|b| b.total),
        vne_degenerate: items.iter().any(|b| b.vne_degenerate),
        variance_clipped: items.iter().any(|b| b.variance_clipped),
    }
}

/// Trains `model` in place of a fresh initialization. Windows are shuffled
/// per epoch; everything is deterministic given `cfg.seed`.
pub fn train_from<T: Scalar>(
    mut model: KoopmanAutoencoder<T>,
    data: &[Trajectory<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    if model.mode != cfg.mode {
        return invalid("model mode differs from config mode");
    }
    if data.iter().any(|t| t.dim() != model.obs_dim()) {
        return invalid("trajectory dimension differs from model input");
    }
    let mut batches = windows(data, cfg.batch, cfg.stride);
    if batches.is_empty() && cfg.epochs > 0 {
        return invalid(format!("no trajectory is long enough for a window of {} states", cfg.batch));
    }
    let mut params = model.tensors();
    let mut adam = Adam::new(cfg.lr, &params);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        let mut rng = seeded_stream(cfg.seed, 1000 + epoch as u64);
        batches.shuffle(&mut rng);
        let mut seen = Vec::with_capacity(batches.len());
        for batch in &batches {
            step += 1;
            let noise_seed = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step);
            let (losses, grads) = match gradients(&model, batch, cfg, noise_seed) {
                Ok(r) if r.0.total.is_finite() => r,
                Ok(r) => return Ok(diverged(model, log, epoch, format!("loss {}", r.0.total))),
                Err(e) => return Ok(diverged(model, log, epoch, e.to_string())),
            };
            adam.update(&mut params, &grads);
            if params.iter().any(|p| p.iter().any(|v| !v.is_finite())) {
                return Ok(diverged(model, log, epoch, "non-finite parameters after update".into()));
            }
            model.set_tensors(params.clone());
            seen.push(losses);
        }
        log.push(EpochLog { epoch, losses: mean_breakdown(&seen) });
    }
    Ok(TrainOutcome { model, log, divergence: None })
}

fn diverged<T: Scalar>(
    model: KoopmanAutoencoder<T>,
    log: Vec<EpochLog<T>>,
    epoch: usize,
    reason: String,
) -> TrainOutcome<T> {
    TrainOutcome { model, log, divergence: Some(format!("epoch {epoch}: {reason}")) }
}

/// Initializes from `cfg` and trains.
pub fn train<T: Scalar>(data: &[Trajectory<T>], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    let Some(first) = data.first() else {
        return invalid("training set is empty");
    };
    let model = KoopmanAutoencoder::init(first.dim(), cfg.latent_dim, &cfg.hidden, cfg.mode, cfg.seed)?;
    train_from(model, data, cfg)
}

/// Training log as CSV `epoch,rec,infonce,koop,vne,total`.
pub fn log_csv<T: Scalar>(log: &[EpochLog<T>]) -> String {
    let mut out = String::from("epoch,rec,infonce,koop,vne,total\n");
    for e in log {
        let l = &e.losses;
        let vals = [l.rec, l.infonce, l.koopman_consistency, l.vne, l.total].map(|v| fmt_float(v.to_f64_lossy()));
        let _ = writeln!(out, "{},{}", e.epoch, vals.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman_ae::Mode;
    use nalgebra::DVector;

    fn circle(n: usize) -> Trajectory<f64> {
        let th = 0.3f64;
        let states = (0..n).map(|i| DVector::from_vec(vec![(th * i as f64).cos(), (th * i as f64).sin()])).collect();
        Trajectory::new(states, 1.0, "rot").unwrap()
    }

    fn small() -> TrainConfig {
        TrainConfig { epochs: 3, batch: 16, stride: 8, latent_dim: 2, hidden: vec![8], ..Default::default() }
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let cfg = TrainConfig { epochs: 0, ..small() };
        let out = train(&[circle(40)], &cfg).unwrap();
        let init = KoopmanAutoencoder::init(2, 2, &[8], Mode::Ae, cfg.seed).unwrap();
        assert_eq!(out.model, init);
        assert!(out.log.is_empty());
    }

    #[test]
    fn training_is_deterministic() {
        let a = train(&[circle(60)], &small()).unwrap();
        let b = train(&[circle(60)], &small()).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(log_csv(&a.log), log_csv(&b.log));
        assert_eq!(a.log.len(), 3);
    }

    #[test]
    fn windows_cover_trajectory() {
        let w = windows(&[circle(40)], 16, 8);
        assert_eq!(w.len(), 4);
        assert_eq!(w[1][(0, 0)], circle(40).states()[8][0]);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![DMatrix::from_element(1, 1, 1.0)];
        let mut adam = Adam::new(0.1, &p);
        adam.update(&mut p, &[DMatrix::from_element(1, 1, 3.0)]);
        assert!((p[0][(0, 0)] - 0.9f64).abs() < 1e-7);
    }

    #[test]
    fn csv_header() {
        assert!(log_csv::<f64>(&[]).starts_with("epoch,rec,infonce,koop,vne,total\n"));
    }
}
