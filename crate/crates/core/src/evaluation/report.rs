use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_float, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::koopman_ae::{rollout, KoopmanAutoencoder};
use crate::scalar::Scalar;

use super::metrics::{nrmse_with_scale, spectral_distribution_error, state_kld, truth_scale, KLD_BINS, SDE_BAND, SDE_STEPS};

/// Anything that can roll a state forward autoregressively.
pub trait Forecaster<T: Scalar>: Sync {
    /// `steps + 1` states starting with `x0`.
    fn forecast(&self, x0: &DVector<T>, steps: usize, dt: T) -> Result<Trajectory<T>>;
}

impl<T: Scalar> Forecaster<T> for KoopmanAutoencoder<T> {
    fn forecast(&self, x0: &DVector<T>, steps: usize, dt: T) -> Result<Trajectory<T>> {
        rollout(self, x0, steps, dt)
    }
}

impl<T: Scalar, F> Forecaster<T> for F
where
    F: Fn(&DVector<T>, usize, T) -> Result<Trajectory<T>> + Sync,
{
    fn forecast(&self, x0: &DVector<T>, steps: usize, dt: T) -> Result<Trajectory<T>> {
        self(x0, steps, dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub horizons: Vec<usize>,
    /// Spacing of initial conditions along each test trajectory.
    pub ic_stride: usize,
    pub kld_bins: usize,
    /// Rollout length used for KLD and SDE.
    pub long_steps: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { horizons: vec![5, 20, 50], ic_stride: 50, kld_bins: KLD_BINS, long_steps: SDE_STEPS }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub horizons: Vec<usize>,
    pub nrmse: BTreeMap<usize, MeanVar>,
    pub kld: f64,
    pub sde: f64,
    pub runtime_seconds: f64,
    pub initial_conditions: usize,
    pub nrmse_normalizer: String,
    pub sde_method: String,
}

impl EvalReport {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        let metrics_ok = self.nrmse.values().all(|m| ok(m.mean) && ok(m.variance));
        let keys_ok = self.horizons.iter().all(|h| self.nrmse.contains_key(h)) && self.nrmse.len() == self.horizons.len();
        if !(metrics_ok && keys_ok && ok(self.kld) && ok(self.sde) && ok(self.runtime_seconds)) {
            return Err(Error::NonFinite("evaluation report has invalid metrics".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }

    /// Rows `metric,value,variance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value,variance\n");
        for h in &self.horizons {
            let m = self.nrmse[h];
            out.push_str(&format!("nrmse_{h},{},{}\n", fmt_float(m.mean), fmt_float(m.variance)));
        }
        out.push_str(&format!("kld,{},\n", fmt_float(self.kld)));
        out.push_str(&format!("sde,{},\n", fmt_float(self.sde)));
        out
    }
}

fn mean_var(xs: &[f64]) -> MeanVar {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let variance = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    MeanVar { mean, variance }
}

/// NRMSE at each horizon over initial conditions spaced `ic_stride` apart,
/// plus KLD and SDE of one long rollout per test trajectory. Initial
/// conditions run in parallel; aggregation order is fixed.
pub fn evaluate<T: Scalar, F: Forecaster<T> + ?Sized>(model: &F, tests: &[Trajectory<T>], cfg: &EvalConfig) -> Result<EvalReport> {
    let start = Instant::now();
    let max_h = match cfg.horizons.iter().max() {
        Some(&h) if h > 0 && cfg.horizons.iter().all(|&h| h > 0) => h,
        _ => return invalid("horizons must be nonempty and positive"),
    };
    if cfg.ic_stride == 0 {
        return invalid("ic_stride must be positive");
    }
    if cfg.long_steps < SDE_STEPS {
        return invalid(format!("long_steps must be at least {SDE_STEPS}"));
    }
    let scale = truth_scale(tests)?;
    let mut ics = Vec::new();
    for (ti, t) in tests.iter().enumerate() {
        if t.steps() < max_h.max(cfg.long_steps) {
            return invalid(format!("test trajectory {ti} is shorter than required"));
        }
        ics.extend((0..=t.steps() - max_h).step_by(cfg.ic_stride).map(|s| (ti, s)));
    }
    let per_ic: Vec<Vec<f64>> = ics
        .par_iter()
        .map(|&(ti, s)| {
            let truth = tests[ti].window(s, s + max_h + 1)?;
            let pred = model.forecast(&truth.states()[0], max_h, truth.dt())?;
            cfg.horizons.iter().map(|&h| nrmse_with_scale(&pred, &truth, h, &scale)).collect()
        })
        .collect::<Result<_>>()?;
    let long: Vec<(f64, Vec<DVector<T>>)> = tests
        .par_iter()
        .map(|t| {
            let truth = t.window(0, cfg.long_steps + 1)?;
            let pred = model.forecast(&truth.states()[0], cfg.long_steps, truth.dt())?;
            let sde = spectral_distribution_error(&pred.skip(1)?, &truth.skip(1)?)?;
            Ok((sde, pred.states()[1..].to_vec()))
        })
        .collect::<Result<_>>()?;
    let pred_states: Vec<DVector<T>> = long.iter().flat_map(|(_, s)| s.iter().cloned()).collect();
    let truth_states: Vec<DVector<T>> = tests.iter().flat_map(|t| t.states()[1..=cfg.long_steps].iter().cloned()).collect();
    let kld = if pred_states.iter().any(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite("rollout produced non-finite states".into()));
    } else {
        state_kld(&truth_states, &pred_states, cfg.kld_bins)?
    };
    let nrmse = cfg
        .horizons
        .iter()
        .enumerate()
        .map(|(k, &h)| (h, mean_var(&per_ic.iter().map(|v| v[k]).collect::<Vec<_>>())))
        .collect();
    let report = EvalReport {
        horizons: cfg.horizons.clone(),
        nrmse,
        kld,
        sde: long.iter().map(|(s, _)| s).sum::<f64>() / long.len() as f64,
        runtime_seconds: start.elapsed().as_secs_f64(),
        initial_conditions: ics.len(),
        nrmse_normalizer: "per-coordinate truth std over the full test set".into(),
        sde_method: format!("dft power, {SDE_BAND}-bin bands, sum-normalized, l1, {SDE_STEPS} steps"),
    };
    report.validate()?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_vanderpol;

    fn generator(x0: &DVector<f64>, steps: usize, dt: f64) -> Result<Trajectory<f64>> {
        simulate_vanderpol([x0[0], x0[1]], 1.0, steps, dt)
    }

    #[test]
    fn perfect_model_scores_zero() {
        let tests = vec![simulate_vanderpol([1.0, 0.5], 1.0, 1100, 0.05).unwrap()];
        let cfg = EvalConfig::default();
        let r = evaluate(&generator, &tests, &cfg).unwrap();
        assert_eq!(r.nrmse.keys().copied().collect::<Vec<_>>(), vec![5, 20, 50]);
        assert!(r.nrmse.values().all(|m| m.mean < 1e-12 && m.variance < 1e-20));
        assert!(r.sde < 1e-12);
        assert!(r.kld < 1e-6);
        let back = EvalReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(r.to_csv().starts_with("metric,value,variance\nnrmse_5,"));
    }

    #[test]
    fn short_tests_rejected() {
        let tests = vec![simulate_vanderpol([1.0, 0.5], 1.0, 500, 0.05).unwrap()];
        assert!(evaluate(&generator, &tests, &EvalConfig::default()).is_err());
    }
}
