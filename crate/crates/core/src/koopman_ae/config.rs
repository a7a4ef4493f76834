use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

use super::Mode;

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Length of each contiguous training window.
    pub batch: usize,
    /// Offset between consecutive window starts.
    pub stride: usize,
    pub window_k: usize,
    pub temperature_tau: f64,
    pub seed: u64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Ae,
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.0,
            lr: 1e-3,
            epochs: 100,
            batch: 64,
            stride: 64,
            window_k: 3,
            temperature_tau: 0.1,
            seed: 0,
            latent_dim: 16,
            hidden: vec![64, 64],
        }
    }
}

impl TrainConfig {
    /// Physical-simulation preset: `α = 2`, `γ = 0.1`, `k = 3`, `d = 16`;
    /// `τ = 0.1` and `β = 1` keep the defaults.
    pub fn physical() -> Self {
        Self { alpha: 2.0, gamma: 0.1, window_k: 3, latent_dim: 16, ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "physical" => Ok(Self::physical()),
            "default" => Ok(Self::default()),
            other => invalid(format!("unknown preset `{other}`")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be finite and >= 0"));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return invalid("lr must be positive");
        }
        if !(self.temperature_tau > 0.0) || !self.temperature_tau.is_finite() {
            return invalid("temperature_tau must be positive");
        }
        if self.window_k == 0 {
            return invalid("window_k must be >= 1");
        }
        if self.batch < 2 * self.window_k + 2 {
            return invalid(format!("batch must be >= 2*window_k + 2 = {}", 2 * self.window_k + 2));
        }
        if self.stride == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return invalid("stride, latent_dim and hidden widths must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn physical_preset_values() {
        let c = TrainConfig::physical();
        assert_eq!((c.alpha, c.gamma, c.window_k, c.latent_dim), (2.0, 0.1, 3, 16));
        assert_eq!((c.temperature_tau, c.beta), (0.1, 1.0));
        c.validate().unwrap();
    }

    #[test]
    fn validation() {
        assert!(TrainConfig { batch: 7, window_k: 3, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { temperature_tau: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { window_k: 0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig::preset("nope").is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut v = serde_json::to_value(TrainConfig::default()).unwrap();
        v["extra"] = serde_json::json!(1);
        assert!(serde_json::from_value::<TrainConfig>(v).is_err());
    }
}
