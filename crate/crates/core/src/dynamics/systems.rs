use nalgebra::DVector;

use crate::error::{invalid, Error, Result};
use crate::gaussian_info::LinearGaussianKoopman;
use crate::rng::{seeded_stream, GaussianSampler};
use crate::scalar::{lit, Scalar};

use super::trajectory::{PairedLatentTrajectory, Trajectory};

pub const LORENZ_SIGMA: f64 = 10.0;
pub const LORENZ_RHO: f64 = 28.0;
pub const LORENZ_BETA: f64 = 8.0 / 3.0;

/// Steps dropped from the start of Lorenz training runs so samples sit on
/// the attractor.
pub const LORENZ_BURN_IN: usize = 1000;

pub fn lorenz63_field<T: Scalar>(x: &DVector<T>) -> DVector<T> {
    let (s, r, b) = (lit::<T>(LORENZ_SIGMA), lit::<T>(LORENZ_RHO), lit::<T>(LORENZ_BETA));
    DVector::from_vec(vec![
        s * (x[1] - x[0]),
        x[0] * (r - x[2]) - x[1],
        x[0] * x[1] - b * x[2],
    ])
}

pub fn vanderpol_field<T: Scalar>(x: &DVector<T>, mu: T) -> DVector<T> {
    DVector::from_vec(vec![x[1], mu * (T::one() - x[0] * x[0]) * x[1] - x[0]])
}

/// One classical fourth-order Runge–Kutta step.
pub fn rk4_step<T: Scalar, F>(f: &F, x: &DVector<T>, dt: T) -> DVector<T>
where
    F: Fn(&DVector<T>) -> DVector<T>,
{
    let half = lit::<T>(0.5) * dt;
    let k1 = f(x);
    let k2 = f(&(x + &k1 * half));
    let k3 = f(&(x + &k2 * half));
    let k4 = f(&(x + &k3 * dt));
    x + (k1 + (k2 + k3) * lit::<T>(2.0) + k4) * (dt / lit::<T>(6.0))
}

fn integrate<T: Scalar, F>(
    f: F,
    x0: DVector<T>,
    steps: usize,
    dt: T,
    id: &str,
) -> Result<Trajectory<T>>
where
    F: Fn(&DVector<T>) -> DVector<T>,
{
    if steps == 0 {
        return invalid("steps must be at least 1");
    }
    if !(dt > T::zero()) || !dt.is_finite() {
        return invalid("dt must be positive and finite");
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return invalid("initial state has non-finite entries");
    }
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0);
    for i in 0..steps {
        let next = rk4_step(&f, &states[i], dt);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{id} integration blew up at step {}", i + 1)));
        }
        states.push(next);
    }
    Trajectory::new(states, dt, id)
}

/// Lorenz-63 (σ = 10, ρ = 28, β = 8/3) integrated with fixed-step RK4.
pub fn simulate_lorenz63<T: Scalar>(x0: [T; 3], steps: usize, dt: T) -> Result<Trajectory<T>> {
    integrate(lorenz63_field, DVector::from_row_slice(&x0), steps, dt, "lorenz63")
}

/// Van der Pol oscillator `ẍ = μ(1 − x²)ẋ − x` as a first-order system.
pub fn simulate_vanderpol<T: Scalar>(x0: [T; 2], mu: T, steps: usize, dt: T) -> Result<Trajectory<T>> {
    if !(mu > T::zero()) {
        return invalid("mu must be positive");
    }
    integrate(
        move |x: &DVector<T>| vanderpol_field(x, mu),
        DVector::from_row_slice(&x0),
        steps,
        dt,
        "vanderpol",
    )
}

/// Samples `z_{t+1} = K z_t + w_t`, `x_t = D z_t + ε_t` for `t = 0..=steps`.
///
/// Process and observation noise use separate streams of the seeded
/// generator, so changing `R` leaves the latent path untouched.
pub fn simulate_linear_gaussian<T: Scalar>(
    model: &LinearGaussianKoopman<T>,
    z0: &DVector<T>,
    steps: usize,
    seed: u64,
) -> Result<PairedLatentTrajectory<T>> {
    if steps == 0 {
        return invalid("steps must be at least 1");
    }
    let d = model.latent_dim();
    if z0.len() != d {
        return Err(Error::DimensionMismatch {
            what: "z0 length",
            expected: d,
            got: z0.len(),
        });
    }
    let process = GaussianSampler::new(&model.sigma, "Sigma")?;
    let obs = GaussianSampler::new(&model.r, "R")?;
    let mut zr = seeded_stream(seed, 0);
    let mut xr = seeded_stream(seed, 1);
    let mut latents = Vec::with_capacity(steps + 1);
    let mut observations = Vec::with_capacity(steps + 1);
    let mut z = z0.clone();
    for t in 0..=steps {
        observations.push(&model.d * &z + obs.sample(&mut xr));
        latents.push(z.clone());
        if t < steps {
            z = &model.k * &z + process.sample(&mut zr);
        }
    }
    Ok(PairedLatentTrajectory {
        latents,
        observations,
        dt: T::one(),
    })
}
