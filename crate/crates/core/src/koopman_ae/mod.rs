//! Koopman autoencoders: MLP encoder/decoder, linear latent operator, the
//! AE and VAE objectives with reverse-mode gradients, training and rollout.

mod checkpoint;
mod config;
mod gradcheck;
mod loss;
mod model;
mod rollout;
pub mod tape;
mod train;

pub use checkpoint::{Checkpoint, LayerFile};
pub use config::TrainConfig;
pub use gradcheck::{gradient_check, GradCheckReport, TermCheck, FD_STEP, GRADCHECK_TOL, REL_FLOOR};
pub use loss::{
    batch_vne, evaluate as evaluate_loss, gradients, infonce_temporal, koopman_consistency, total_loss_ae, total_loss_vae,
    BatchEntropy, LossBreakdown, LossEval, Term, DEGENERATE_TRACE, EIGEN_CLAMP, VARIANCE_FLOOR,
};
pub use model::{Encoding, KoopmanAutoencoder, Layer, Mlp, Mode};
pub use rollout::{batch_effective_dimension, encode_trajectory, koopman_spectrum, rollout, spectrum_csv, Eigenvalue};
pub use train::{log_csv, train, train_from, windows, Adam, EpochLog, TrainOutcome};
