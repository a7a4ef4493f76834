//! Exact information quantities of linear-Gaussian Koopman models.

mod bound;
mod chain;
mod density;
mod mi;
pub(crate) mod model;
mod report;

pub use bound::{
    binned_tv, distortion_lower_bound, error_bound, gaussian_kl, BoundExperiment, BoundOutcome, ErrorBound, LatentModel,
    GAP_SLACK,
};
pub use chain::{information_chain_check, ChainCheck, ChainJoint, EncodedAr, CHAIN_SLACK};
pub use density::{effective_dimension, spectral_entropy, von_neumann_entropy, DensityMatrix, EIGEN_TOL, TRACE_TOL};
pub use mi::{
    disentanglement_identity, disentanglement_joint, fast_dissipating_information, forward_covariance,
    latent_marginal_cov, latent_mutual_information, latent_step_information, observation_step_information,
    residual_information, residual_information_with, Disentanglement, JointLayout, RIDGE_FALLBACK,
};
pub use model::{LinearGaussianKoopman, ModelFile};
pub use report::InfoReport;
