use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scalar::{lit, Scalar};

use super::loss::{evaluate, Term};
use super::{KoopmanAutoencoder, TrainConfig};

use nalgebra::DMatrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Relative error is `|a − f| / max(|a|, |f|, REL_FLOOR · max(1, |L|))`
/// with `L` the checked term's value. Differencing a loss of size `|L|`
/// carries roundoff near `ε|L|/h`, which swamps entries whose exact
/// gradient is zero (dead ReLU units).
pub const REL_FLOOR: f64 = 1e-6;
/// Pass threshold on the maximum relative error.
pub const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCheck {
    pub term: String,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
    pub floor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub floor: f64,
    pub tolerance: f64,
    pub terms: Vec<TermCheck>,
    pub passed: bool,
}

fn term_value<T: Scalar>(model: &KoopmanAutoencoder<T>, batch: &DMatrix<T>, cfg: &TrainConfig, seed: u64, term: Term) -> Result<T> {
    let b = evaluate(model, batch, cfg, seed, None)?.breakdown;
    Ok(match term {
        Term::Total => b.total,
        Term::Rec => b.rec,
        Term::InfoNce => b.infonce,
        Term::Koopman => b.koopman_consistency,
        Term::Vne => b.vne,
        Term::Elbo => b.elbo.unwrap_or_else(T::zero),
        Term::Structural => b.structural.unwrap_or_else(T::zero),
        Term::EncoderEntropy => b.encoder_entropy.unwrap_or_else(T::zero),
    })
}

/// Compares reverse-mode gradients with central differences for every
/// parameter entry and every listed term.
pub fn gradient_check<T: Scalar>(
    model: &KoopmanAutoencoder<T>,
    batch: &DMatrix<T>,
    cfg: &TrainConfig,
    seed: u64,
    terms: &[Term],
) -> Result<GradCheckReport> {
    let names = model.tensor_names();
    let base = model.tensors();
    let h = lit::<T>(FD_STEP);
    let mut out = Vec::new();
    for &term in terms {
        let analytic = evaluate(model, batch, cfg, seed, Some(term))?.grads.expect("requested gradients");
        let mut worst = (0.0f64, String::new(), 0usize);
        let floor = REL_FLOOR * term_value(model, batch, cfg, seed, term)?.to_f64_lossy().abs().max(1.0);
        let mut checked = 0;
        for (ti, tensor) in base.iter().enumerate() {
            for idx in 0..tensor.len() {
                let shifted = |delta: T| -> Result<T> {
                    let mut ts = base.clone();
                    ts[ti][idx] += delta;
                    let mut m = model.clone();
                    m.set_tensors(ts);
                    term_value(&m, batch, cfg, seed, term)
                };
                let fd = ((shifted(h)? - shifted(-h)?) / (h + h)).to_f64_lossy();
                let a = analytic[ti][idx].to_f64_lossy();
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(floor);
                if rel > worst.0 || !rel.is_finite() {
                    worst = (if rel.is_finite() { rel } else { f64::INFINITY }, names[ti].clone(), idx);
                }
                checked += 1;
            }
        }
        out.push(TermCheck { term: term.name().into(), max_rel_error: worst.0, worst_tensor: worst.1, worst_index: worst.2, checked, floor });
    }
    let passed = out.iter().all(|t| t.max_rel_error <= GRADCHECK_TOL);
    Ok(GradCheckReport { step: FD_STEP, floor: REL_FLOOR, tolerance: GRADCHECK_TOL, terms: out, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman_ae::Mode;
    use crate::rng::seeded_stream;
    use rand::Rng;

    #[test]
    fn perturbed_models_pass() {
        for mode in [Mode::Ae, Mode::Vae] {
            let cfg = TrainConfig { mode, latent_dim: 3, hidden: vec![6], batch: 8, window_k: 2, gamma: 0.1, ..Default::default() };
            let mut m = KoopmanAutoencoder::<f64>::init(2, 3, &cfg.hidden, mode, 9).unwrap();
            let mut rng = seeded_stream(4, 0);
            let ts = m.tensors().into_iter().map(|t| t.map(|v| v + rng.random_range(-0.2..0.2))).collect();
            m.set_tensors(ts);
            let batch = DMatrix::from_fn(8, 2, |i, j| ((i * 2 + j) as f64 * 0.61).cos());
            let terms: &[Term] = if mode == Mode::Ae { &Term::AE } else { &Term::VAE };
            let r = gradient_check(&m, &batch, &cfg, 1, terms).unwrap();
            assert!(r.passed, "{r:?}");
            assert_eq!(r.terms.len(), terms.len());
        }
    }
}
