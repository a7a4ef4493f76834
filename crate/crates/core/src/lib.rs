//! Information-theoretic Koopman representations.
//!
//! Closed-form Gaussian information calculus, spectral allocation solvers,
//! Koopman autoencoders with a built-in reverse-mode gradient engine, and
//! forecast metrics. Numeric code is generic over [`Scalar`] (`f32`/`f64`).

pub mod allocation;
pub mod dynamics;
pub mod error;
pub mod evaluation;
pub mod gaussian_info;
pub mod koopman_ae;
pub mod linalg;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type TrajectoryF64 = dynamics::Trajectory<f64>;
pub type TrajectoryF32 = dynamics::Trajectory<f32>;
pub type LinearGaussianKoopmanF64 = gaussian_info::LinearGaussianKoopman<f64>;
pub type LinearGaussianKoopmanF32 = gaussian_info::LinearGaussianKoopman<f32>;
pub type KoopmanAutoencoderF64 = koopman_ae::KoopmanAutoencoder<f64>;
pub type KoopmanAutoencoderF32 = koopman_ae::KoopmanAutoencoder<f32>;
pub type AllocationF64 = allocation::Allocation<f64>;
pub type SpectralGainsF64 = allocation::SpectralGains<f64>;
pub type EvalReport = evaluation::EvalReport;
