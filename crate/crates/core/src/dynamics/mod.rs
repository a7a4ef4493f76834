//! Ground-truth trajectory generation and preprocessing.

mod preprocess;
mod systems;
mod trajectory;

pub use preprocess::{add_observation_noise, denormalize, normalize, Normalization};
pub use systems::{
    lorenz63_field, rk4_step, simulate_linear_gaussian, simulate_lorenz63, simulate_vanderpol,
    vanderpol_field, LORENZ_BETA, LORENZ_BURN_IN, LORENZ_RHO, LORENZ_SIGMA,
};
pub use trajectory::{fmt_float, PairedLatentTrajectory, Trajectory};

use crate::error::Result;
use crate::rng::{seeded, standard_normal};
use crate::scalar::{lit, Scalar};

/// Lorenz runs from seeded random starts; the first [`LORENZ_BURN_IN`]
/// steps of each run are discarded.
pub fn lorenz63_ensemble<T: Scalar>(
    count: usize,
    steps: usize,
    dt: T,
    seed: u64,
) -> Result<Vec<Trajectory<T>>> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let x0 = [
                standard_normal::<T>(&mut rng) * lit(5.0),
                standard_normal::<T>(&mut rng) * lit(5.0),
                standard_normal::<T>(&mut rng) * lit(5.0) + lit(25.0),
            ];
            simulate_lorenz63(x0, steps + LORENZ_BURN_IN, dt)?.skip(LORENZ_BURN_IN)
        })
        .collect()
}

/// Van der Pol runs from seeded random starts in `[-3, 3]²`, with the first
/// `burn_in` steps dropped.
pub fn vanderpol_ensemble<T: Scalar>(
    count: usize,
    steps: usize,
    dt: T,
    mu: T,
    burn_in: usize,
    seed: u64,
) -> Result<Vec<Trajectory<T>>> {
    let mut rng = seeded(seed);
    (0..count)
        .map(|_| {
            let x0 = [
                standard_normal::<T>(&mut rng) * lit(1.5),
                standard_normal::<T>(&mut rng) * lit(1.5),
            ];
            simulate_vanderpol(x0, mu, steps + burn_in, dt)?.skip(burn_in)
        })
        .collect()
}
