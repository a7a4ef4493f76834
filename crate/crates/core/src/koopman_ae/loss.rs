use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gaussian_info::spectral_entropy;
use crate::linalg::{sym_eigen_desc, symmetrize};
use crate::rng::{seeded_stream, standard_normal_matrix};
use crate::scalar::{lit, Scalar};

use super::tape::{Tape, Var};
use super::{KoopmanAutoencoder, Mlp, Mode, TrainConfig};

/// Covariance traces at or below this count as a collapsed batch.
pub const DEGENERATE_TRACE: f64 = 1e-12;
/// Eigenvalue clamp before the logarithm in the entropy gradient.
pub const EIGEN_CLAMP: f64 = 1e-12;
/// Variance floor of the VAE encoder.
pub const VARIANCE_FLOOR: f64 = 1e-8;

const LN_2PI: f64 = 1.8378770664093453;

/// Per-term values of one loss evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LossBreakdown<T: Scalar> {
    /// AE: mean squared reconstruction error. VAE: `−E log p(x_n | z_n)`.
    pub rec: T,
    pub infonce: T,
    /// Mean `‖z_{n+1} − K z_n‖²` (on encoder means in VAE mode, where it is
    /// reported but not part of the total).
    pub koopman_consistency: T,
    pub vne: T,
    pub elbo: Option<T>,
    pub structural: Option<T>,
    pub encoder_entropy: Option<T>,
    pub total: T,
    pub vne_degenerate: bool,
    pub variance_clipped: bool,
}

impl<T: Scalar> LossBreakdown<T> {
    /// Total recomputed from the fields.
    pub fn combined(&self, cfg: &TrainConfig) -> T {
        let (a, b, g) = (lit::<T>(cfg.alpha), lit::<T>(cfg.beta), lit::<T>(cfg.gamma));
        match (self.elbo, self.structural, self.encoder_entropy) {
            (Some(elbo), Some(st), Some(h)) => self.rec - a * self.infonce - b * st - b * h - g * self.vne - elbo,
            _ => self.rec - a * self.infonce + b * self.koopman_consistency - g * self.vne,
        }
    }
}

/// Loss term selected for differentiation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    Total,
    Rec,
    InfoNce,
    Koopman,
    Vne,
    Elbo,
    Structural,
    EncoderEntropy,
}

impl Term {
    pub const AE: [Term; 5] = [Term::Total, Term::Rec, Term::InfoNce, Term::Koopman, Term::Vne];
    pub const VAE: [Term; 7] =
        [Term::Total, Term::Rec, Term::InfoNce, Term::Vne, Term::Elbo, Term::Structural, Term::EncoderEntropy];

    pub fn name(self) -> &'static str {
        match self {
            Term::Total => "total",
            Term::Rec => "rec",
            Term::InfoNce => "infonce",
            Term::Koopman => "koopman",
            Term::Vne => "vne",
            Term::Elbo => "elbo",
            Term::Structural => "structural",
            Term::EncoderEntropy => "encoder_entropy",
        }
    }
}

/// Weights `1/(B |P_n|)` on the temporal positives `P_n = {n ± i : 1 ≤ i ≤ k}`
/// truncated to the batch.
fn infonce_weights<T: Scalar>(b: usize, k: usize) -> DMatrix<T> {
    let mut w = DMatrix::zeros(b, b);
    for n in 0..b {
        let pos: Vec<usize> = (1..=k)
            .flat_map(|i| [n.checked_sub(i), (n + i < b).then_some(n + i)])
            .flatten()
            .collect();
        let share = T::one() / T::from_count(b * pos.len());
        for p in pos {
            w[(n, p)] = share;
        }
    }
    w
}

fn check_infonce(b: usize, k: usize, tau: f64) -> Result<()> {
    if k == 0 {
        return invalid("window_k must be >= 1");
    }
    if b < 2 * k + 2 {
        return invalid(format!("InfoNCE needs at least {} latents, got {b}", 2 * k + 2));
    }
    if !(tau > 0.0) {
        return invalid("temperature must be positive");
    }
    Ok(())
}

fn infonce_node<T: Scalar>(tape: &mut Tape<T>, z: Var, k: usize, tau: f64) -> Var {
    let b = tape.value(z).nrows();
    let zt = tape.transpose(z);
    let s = tape.matmul(z, zt);
    let s = tape.scale(s, lit(1.0 / tau));
    let ls = tape.log_softmax_rows(s);
    tape.weighted_sum(ls, infonce_weights(b, k))
}

/// Temporal InfoNCE estimate for latents in time order (rows).
pub fn infonce_temporal<T: Scalar>(latents: &DMatrix<T>, window_k: usize, tau: f64) -> Result<T> {
    check_infonce(latents.nrows(), window_k, tau)?;
    let mut tape = Tape::new();
    let z = tape.leaf(latents.clone());
    let out = infonce_node(&mut tape, z, window_k, tau);
    Ok(tape.scalar(out))
}

fn koopman_node<T: Scalar>(tape: &mut Tape<T>, z: Var, k: Var) -> Var {
    let b = tape.value(z).nrows();
    let next = tape.slice_rows(z, 1, b - 1);
    let prev = tape.slice_rows(z, 0, b - 1);
    let kt = tape.transpose(k);
    let pred = tape.matmul(prev, kt);
    let r = tape.sub(next, pred);
    let ss = tape.sum_squares(r);
    tape.scale(ss, T::one() / T::from_count(b - 1))
}

/// Mean squared one-step residual `‖z_{n+1} − K z_n‖²`.
pub fn koopman_consistency<T: Scalar>(latents: &DMatrix<T>, k: &DMatrix<T>) -> Result<T> {
    if latents.nrows() < 2 {
        return invalid("consistency needs at least two latents");
    }
    if !k.is_square() || k.nrows() != latents.ncols() {
        return Err(Error::DimensionMismatch { what: "K against latent dim", expected: latents.ncols(), got: k.nrows() });
    }
    let mut tape = Tape::new();
    let z = tape.leaf(latents.clone());
    let kv = tape.leaf(k.clone());
    let out = koopman_node(&mut tape, z, kv);
    Ok(tape.scalar(out))
}

/// Entropy of the normalized batch covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchEntropy<T: Scalar> {
    pub entropy: T,
    /// `C / tr C`; zero when degenerate.
    pub density: DMatrix<T>,
    pub degenerate: bool,
    /// `∂S/∂Z` for the row-batched latents.
    pub gradient: DMatrix<T>,
}

/// `S(C / tr C)` with `C = (1/B) Σ (z_i − z̄)(z_i − z̄)ᵀ`.
pub fn batch_vne<T: Scalar>(latents: &DMatrix<T>) -> Result<BatchEntropy<T>> {
    let (b, d) = latents.shape();
    if b < 2 || d == 0 {
        return invalid("batch entropy needs at least two latents");
    }
    let bt = T::from_count(b);
    let mean = latents.row_mean();
    let mut zc = latents.clone();
    for mut row in zc.row_iter_mut() {
        row -= &mean;
    }
    let c = symmetrize(&(zc.transpose() * &zc / bt));
    let tr = c.trace();
    if !tr.is_finite() {
        return Err(Error::NonFinite("batch covariance".into()));
    }
    if tr <= lit(DEGENERATE_TRACE) {
        return Ok(BatchEntropy {
            entropy: T::zero(),
            density: DMatrix::zeros(d, d),
            degenerate: true,
            gradient: DMatrix::zeros(b, d),
        });
    }
    let p = &c / tr;
    let (vals, vecs) = sym_eigen_desc(&p);
    let eigs: Vec<T> = vals.iter().copied().collect();
    let entropy = spectral_entropy(&eigs).max(T::zero());
    // dS/dP = −U diag(log λ + 1) Uᵀ, a matrix function that stays smooth
    // across repeated eigenvalues.
    let f = vals.map(|l| -(l.max(lit(EIGEN_CLAMP)).ln() + T::one()));
    let gp = &vecs * DMatrix::from_diagonal(&f) * vecs.transpose();
    let gc = (&gp - DMatrix::identity(d, d) * (&gp * &p).trace()) / tr;
    let gradient = &zc * gc * (lit::<T>(2.0) / bt);
    Ok(BatchEntropy { entropy, density: p, degenerate: false, gradient })
}

/// Nodes of one loss evaluation.
struct Graph {
    params: Vec<Var>,
    total: Var,
    rec: Var,
    infonce: Var,
    koop: Var,
    vne: Var,
    elbo: Option<Var>,
    structural: Option<Var>,
    entropy: Option<Var>,
}

fn build<T: Scalar>(
    tape: &mut Tape<T>,
    model: &KoopmanAutoencoder<T>,
    batch: &DMatrix<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(Graph, bool, bool)> {
    let (b, n) = batch.shape();
    if n != model.obs_dim() {
        return Err(Error::DimensionMismatch { what: "batch width", expected: model.obs_dim(), got: n });
    }
    check_infonce(b, cfg.window_k, cfg.temperature_tau)?;
    let lay = model.layout();
    let params: Vec<Var> = model.tensors().into_iter().map(|t| tape.leaf(t)).collect();
    let x = tape.leaf(batch.clone());
    let mean = Mlp::forward_tape(tape, x, &params[lay.encoder.clone()]);
    let d = model.latent_dim();
    let bt = T::from_count(b);
    let pairs = T::one() / T::from_count(b - 1);
    let half = lit::<T>(0.5);
    let mut clipped = false;

    let (z, logvar) = match model.mode {
        Mode::Ae => (mean, None),
        Mode::Vae => {
            let raw = Mlp::forward_tape(tape, x, &params[lay.head.clone()]);
            let floor = lit::<T>(VARIANCE_FLOOR.ln());
            clipped = tape.value(raw).iter().any(|v| *v < floor);
            let lv = tape.clamp_min(raw, floor);
            let half_lv = tape.scale(lv, half);
            let std = tape.exp(half_lv);
            let mut rng = seeded_stream(seed, 7);
            let eps = tape.leaf(standard_normal_matrix::<T>(&mut rng, b, d));
            let noise = tape.hadamard(std, eps);
            (tape.add(mean, noise), Some(lv))
        }
    };
    let recon = Mlp::forward_tape(tape, z, &params[lay.decoder.clone()]);
    let err = tape.sub(x, recon);
    let infonce = infonce_node(tape, z, cfg.window_k, cfg.temperature_tau);
    let koop = koopman_node(tape, if logvar.is_some() { mean } else { z }, params[lay.k]);
    let ent = batch_vne(tape.value(z))?;
    let vne = tape.custom(z, ent.entropy, ent.gradient);
    let (a, be, g) = (lit::<T>(cfg.alpha), lit::<T>(cfg.beta), lit::<T>(cfg.gamma));

    let graph = match logvar {
        None => {
            let ss = tape.sum_squares(err);
            let rec = tape.scale(ss, T::one() / bt);
            let t1 = tape.scale(infonce, -a);
            let t2 = tape.scale(koop, be);
            let t3 = tape.scale(vne, -g);
            let s = tape.add(rec, t1);
            let s = tape.add(s, t2);
            let total = tape.add(s, t3);
            Graph { params, total, rec, infonce, koop, vne, elbo: None, structural: None, entropy: None }
        }
        Some(lv) => {
            let nll_const = lit::<T>(0.5 * n as f64 * LN_2PI);
            // −log p(x_n | z_n) averaged over n = 1..B−1.
            let err_now = tape.slice_rows(err, 1, b - 1);
            let ss_now = tape.sum_squares(err_now);
            let rec = tape.scale(ss_now, half * pairs);
            let rec = tape.add_scalar(rec, nll_const);
            // ELBO on n−1 = 0..B−2.
            let err_prev = tape.slice_rows(err, 0, b - 1);
            let ss_prev = tape.sum_squares(err_prev);
            let var = tape.exp(lv);
            let mu_prev = tape.slice_rows(mean, 0, b - 1);
            let lv_prev = tape.slice_rows(lv, 0, b - 1);
            let var_prev = tape.slice_rows(var, 0, b - 1);
            let mu2 = tape.sum_squares(mu_prev);
            let sv = tape.sum(var_prev);
            let slv = tape.sum(lv_prev);
            let kl = tape.add(mu2, sv);
            let kl = tape.sub(kl, slv);
            let kl = tape.scale(kl, half * pairs);
            let kl = tape.add_scalar(kl, lit(-0.5 * d as f64));
            let ll = tape.scale(ss_prev, -half * pairs);
            let ll = tape.add_scalar(ll, -nll_const);
            let elbo = tape.sub(ll, kl);
            // E log q(z_n | z_{n-1}) over both encoder distributions.
            let tlv = params[lay.transition.expect("VAE transition")];
            let mu_now = tape.slice_rows(mean, 1, b - 1);
            let var_now = tape.slice_rows(var, 1, b - 1);
            let kt = tape.transpose(params[lay.k]);
            let pred = tape.matmul(mu_prev, kt);
            let resid = tape.sub(mu_now, pred);
            let sq = tape.hadamard(resid, resid);
            let kk = tape.hadamard(params[lay.k], params[lay.k]);
            let kkt = tape.transpose(kk);
            let spread = tape.matmul(var_prev, kkt);
            let num = tape.add(sq, var_now);
            let num = tape.add(num, spread);
            let neg_tlv = tape.scale(tlv, -T::one());
            let inv_s2 = tape.exp(neg_tlv);
            let weighted = tape.mul_row(num, inv_s2);
            let sw = tape.sum(weighted);
            let stlv = tape.sum(tlv);
            let a1 = tape.scale(sw, -half * pairs);
            let a2 = tape.scale(stlv, -half);
            let structural = tape.add(a1, a2);
            let structural = tape.add_scalar(structural, lit(-0.5 * d as f64 * LN_2PI));
            // H(z_n | x_n) averaged over n = 1..B−1.
            let lv_now = tape.slice_rows(lv, 1, b - 1);
            let slv_now = tape.sum(lv_now);
            let h = tape.scale(slv_now, half * pairs);
            let h = tape.add_scalar(h, lit(0.5 * d as f64 * (1.0 + LN_2PI)));

            let t1 = tape.scale(infonce, -a);
            let t2 = tape.scale(structural, -be);
            let t3 = tape.scale(h, -be);
            let t4 = tape.scale(vne, -g);
            let s = tape.add(rec, t1);
            let s = tape.add(s, t2);
            let s = tape.add(s, t3);
            let s = tape.add(s, t4);
            let total = tape.sub(s, elbo);
            Graph { params, total, rec, infonce, koop, vne, elbo: Some(elbo), structural: Some(structural), entropy: Some(h) }
        }
    };
    Ok((graph, ent.degenerate, clipped))
}

/// Loss values and, when requested, gradients of one selected term with
/// respect to every parameter tensor (ordered as [`KoopmanAutoencoder::tensors`]).
#[derive(Debug, Clone)]
pub struct LossEval<T: Scalar> {
    pub breakdown: LossBreakdown<T>,
    pub grads: Option<Vec<DMatrix<T>>>,
}

pub fn evaluate<T: Scalar>(
    model: &KoopmanAutoencoder<T>,
    batch: &DMatrix<T>,
    cfg: &TrainConfig,
    seed: u64,
    term: Option<Term>,
) -> Result<LossEval<T>> {
    let mut tape = Tape::new();
    let (g, degenerate, clipped) = build(&mut tape, model, batch, cfg, seed)?;
    let val = |v: Var| tape.scalar(v);
    let breakdown = LossBreakdown {
        rec: val(g.rec),
        infonce: val(g.infonce),
        koopman_consistency: val(g.koop),
        vne: val(g.vne),
        elbo: g.elbo.map(val),
        structural: g.structural.map(val),
        encoder_entropy: g.entropy.map(val),
        total: val(g.total),
        vne_degenerate: degenerate,
        variance_clipped: clipped,
    };
    let grads = match term {
        None => None,
        Some(t) => {
            let node = match t {
                Term::Total => g.total,
                Term::Rec => g.rec,
                Term::InfoNce => g.infonce,
                Term::Koopman => g.koop,
                Term::Vne => g.vne,
                Term::Elbo => g.elbo.ok_or_else(|| Error::InvalidInput("elbo term needs VAE mode".into()))?,
                Term::Structural => {
                    g.structural.ok_or_else(|| Error::InvalidInput("structural term needs VAE mode".into()))?
                }
                Term::EncoderEntropy => {
                    g.entropy.ok_or_else(|| Error::InvalidInput("encoder entropy needs VAE mode".into()))?
                }
            };
            let all = tape.backward(node);
            let tensors = model.tensors();
            Some(
                g.params
                    .iter()
                    .zip(tensors)
                    .map(|(p, t)| all[p_index(*p)].clone().unwrap_or_else(|| DMatrix::zeros(t.nrows(), t.ncols())))
                    .collect(),
            )
        }
    };
    Ok(LossEval { breakdown, grads })
}

fn p_index(v: Var) -> usize {
    v.index()
}

pub fn total_loss_ae<T: Scalar>(model: &KoopmanAutoencoder<T>, batch: &DMatrix<T>, cfg: &TrainConfig) -> Result<LossBreakdown<T>> {
    if model.mode != Mode::Ae {
        return invalid("total_loss_ae needs an AE-mode model");
    }
    Ok(evaluate(model, batch, cfg, 0, None)?.breakdown)
}

pub fn total_loss_vae<T: Scalar>(
    model: &KoopmanAutoencoder<T>,
    batch: &DMatrix<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LossBreakdown<T>> {
    if model.mode != Mode::Vae {
        return invalid("total_loss_vae needs a VAE-mode model");
    }
    Ok(evaluate(model, batch, cfg, seed, None)?.breakdown)
}

/// Gradients of the total loss; non-finite entries are reported as errors.
pub fn gradients<T: Scalar>(
    model: &KoopmanAutoencoder<T>,
    batch: &DMatrix<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(LossBreakdown<T>, Vec<DMatrix<T>>)> {
    let eval = evaluate(model, batch, cfg, seed, Some(Term::Total))?;
    let grads = eval.grads.expect("requested gradients");
    let names = model.tensor_names();
    for (g, name) in grads.iter().zip(&names) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    Ok((eval.breakdown, grads))
}
