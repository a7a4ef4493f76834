use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{
    disentanglement_identity, distortion_lower_bound, effective_dimension, latent_step_information,
    observation_step_information, von_neumann_entropy, DensityMatrix, LinearGaussianKoopman,
};

/// Closed-form information summary of one model at horizon `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InfoReport {
    pub n: usize,
    pub mi_latent: f64,
    pub mi_fast: f64,
    pub mi_residual: f64,
    pub mi_total: f64,
    /// Entropy of `C / tr C`.
    pub vn_entropy: f64,
    pub effective_dim: f64,
    /// `Σ_{j=1..n} max(0, I(x_{j-1};x_j) − I(z_{j-1};z_j))`.
    pub gap_sum: f64,
    /// `sqrt(½ gap_sum + ε)` with `ε` the sum of the available error terms.
    pub bound_value: f64,
    pub epsilon_enc: Option<f64>,
    pub epsilon_tra: Option<f64>,
    pub epsilon_rec: Option<f64>,
    /// `|mi_total − (mi_latent + mi_fast + mi_residual)|`.
    pub disentanglement_residual: f64,
    pub encoder_gap: f64,
    pub conditioning_shift: f64,
    pub lower_bound: f64,
}

impl InfoReport {
    pub fn compute<T: Scalar>(model: &LinearGaussianKoopman<T>, n: usize) -> Result<Self> {
        let dis = disentanglement_identity(model, n)?;
        let rho = DensityMatrix::from_covariance(&model.c)?;
        let (mut gap_sum, mut sum_ix, mut sum_iz) = (0.0, 0.0, 0.0);
        for j in 1..=n {
            let ix = observation_step_information(model, j)?.to_f64_lossy();
            let iz = latent_step_information(model, j)?.to_f64_lossy();
            gap_sum += (ix - iz).max(0.0);
            sum_ix += ix;
            sum_iz += iz;
        }
        let f = |v: T| v.to_f64_lossy();
        let report = Self {
            n,
            mi_latent: f(dis.mi_latent),
            mi_fast: f(dis.mi_fast),
            mi_residual: f(dis.mi_residual),
            mi_total: f(dis.mi_total),
            vn_entropy: f(von_neumann_entropy(&rho)),
            effective_dim: f(effective_dimension(&rho)),
            gap_sum,
            bound_value: (0.5 * gap_sum).sqrt(),
            epsilon_enc: None,
            epsilon_tra: None,
            epsilon_rec: None,
            disentanglement_residual: f(dis.residual),
            encoder_gap: f(dis.encoder_gap),
            conditioning_shift: f(dis.conditioning_shift),
            lower_bound: distortion_lower_bound(model.obs_dim(), n, sum_ix, sum_iz, 0.0)?,
        };
        report.validate()?;
        Ok(report)
    }

    /// Attaches error terms and recomputes the bound.
    pub fn with_epsilon(mut self, enc: f64, tra: f64, rec: f64) -> Self {
        self.epsilon_enc = Some(enc);
        self.epsilon_tra = Some(tra);
        self.epsilon_rec = Some(rec);
        self.bound_value = (0.5 * self.gap_sum + enc + tra + rec).sqrt();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.mi_latent,
            self.mi_fast,
            self.mi_residual,
            self.mi_total,
            self.vn_entropy,
            self.effective_dim,
            self.gap_sum,
            self.bound_value,
            self.disentanglement_residual,
            self.encoder_gap,
            self.conditioning_shift,
            self.lower_bound,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("information report".into()));
        }
        let mis = [self.mi_latent, self.mi_fast, self.mi_residual, self.mi_total];
        if mis.iter().any(|v| *v < -1e-9) {
            return Err(Error::InvalidInput("negative mutual information in report".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn report_round_trips_through_json() {
        let m = LinearGaussianKoopman::stationary(
            DMatrix::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.5]),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2) * 0.1,
        )
        .unwrap();
        let r = InfoReport::compute(&m, 3).unwrap();
        assert_eq!(r.n, 3);
        assert!(r.vn_entropy <= 2f64.ln() + 1e-12);
        let back = InfoReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        let text = r.to_json().unwrap();
        for key in ["mi_latent", "mi_fast", "mi_residual", "mi_total", "gap_sum", "bound_value", "disentanglement_residual"] {
            assert!(text.contains(key));
        }
    }
}
