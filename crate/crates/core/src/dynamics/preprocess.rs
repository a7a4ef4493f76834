use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{seeded, standard_normal};
use crate::scalar::Scalar;

use super::trajectory::Trajectory;

/// Per-coordinate mean and population standard deviation.
fn moments<T: Scalar>(states: &[DVector<T>]) -> (DVector<T>, DVector<T>) {
    let n = states[0].len();
    let count = T::from_count(states.len());
    let mut mean = DVector::zeros(n);
    for s in states {
        mean += s;
    }
    mean /= count;
    let mut var = DVector::zeros(n);
    for s in states {
        let dv = s - &mean;
        var += dv.component_mul(&dv);
    }
    var /= count;
    (mean, var.map(|v| v.sqrt()))
}

/// Adds `N(0, (fraction · std_c)²)` noise to every coordinate `c`, where
/// `std_c` is that coordinate's standard deviation over the input.
pub fn add_observation_noise<T: Scalar>(
    traj: &Trajectory<T>,
    fraction: T,
    seed: u64,
) -> Result<Trajectory<T>> {
    if !(fraction >= T::zero()) || !fraction.is_finite() {
        return invalid("noise fraction must be finite and nonnegative");
    }
    let (_, std) = moments(traj.states());
    let scale = std * fraction;
    let mut rng = seeded(seed);
    let noisy = traj
        .states()
        .iter()
        .map(|s| {
            let mut out = s.clone();
            for (c, v) in out.iter_mut().enumerate() {
                let e: T = standard_normal(&mut rng);
                if scale[c] > T::zero() {
                    *v += e * scale[c];
                }
            }
            out
        })
        .collect();
    Trajectory::new(noisy, traj.dt(), traj.system_id())
}

/// Affine map taking each coordinate to mean 0 and standard deviation 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Normalization<T: Scalar> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
    /// Coordinates with zero variance; those are only shifted.
    pub zero_variance: Vec<bool>,
}

impl<T: Scalar> Normalization<T> {
    /// Fits the map on the pooled states of `trajs`.
    pub fn fit(trajs: &[Trajectory<T>]) -> Result<Self> {
        let first = trajs.first().ok_or_else(|| Error::InvalidInput("no trajectories".into()))?;
        let n = first.dim();
        let mut pooled = Vec::new();
        for t in trajs {
            if t.dim() != n {
                return Err(Error::DimensionMismatch {
                    what: "trajectory dimension",
                    expected: n,
                    got: t.dim(),
                });
            }
            pooled.extend_from_slice(t.states());
        }
        let (mean, std) = moments(&pooled);
        let zero_variance: Vec<bool> = std.iter().map(|s| *s <= T::zero()).collect();
        let std = std
            .iter()
            .zip(&zero_variance)
            .map(|(s, z)| if *z { T::one() } else { *s })
            .collect();
        Ok(Self {
            mean: mean.iter().copied().collect(),
            std,
            zero_variance,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_state(&self, s: &DVector<T>) -> DVector<T> {
        DVector::from_fn(s.len(), |i, _| (s[i] - self.mean[i]) / self.std[i])
    }

    pub fn invert_state(&self, s: &DVector<T>) -> DVector<T> {
        DVector::from_fn(s.len(), |i, _| s[i] * self.std[i] + self.mean[i])
    }

    pub fn apply(&self, traj: &Trajectory<T>) -> Result<Trajectory<T>> {
        self.check_dim(traj)?;
        let states = traj.states().iter().map(|s| self.apply_state(s)).collect();
        Trajectory::new(states, traj.dt(), traj.system_id())
    }

    pub fn invert(&self, traj: &Trajectory<T>) -> Result<Trajectory<T>> {
        self.check_dim(traj)?;
        let states = traj.states().iter().map(|s| self.invert_state(s)).collect();
        Trajectory::new(states, traj.dt(), traj.system_id())
    }

    fn check_dim(&self, traj: &Trajectory<T>) -> Result<()> {
        if traj.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "normalization dimension",
                expected: self.dim(),
                got: traj.dim(),
            });
        }
        Ok(())
    }
}

/// Normalizes a single trajectory by its own statistics.
pub fn normalize<T: Scalar>(traj: &Trajectory<T>) -> Result<(Trajectory<T>, Normalization<T>)> {
    let record = Normalization::fit(std::slice::from_ref(traj))?;
    Ok((record.apply(traj)?, record))
}

pub fn denormalize<T: Scalar>(traj: &Trajectory<T>, record: &Normalization<T>) -> Result<Trajectory<T>> {
    record.invert(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::simulate_lorenz63;

    fn traj(rows: &[&[f64]]) -> Trajectory<f64> {
        Trajectory::new(rows.iter().map(|r| DVector::from_row_slice(r)).collect(), 1.0, "t").unwrap()
    }

    #[test]
    fn zero_fraction_is_identity() {
        let t = traj(&[&[1.0, 2.0], &[3.0, 5.0], &[0.0, 1.0]]);
        assert_eq!(add_observation_noise(&t, 0.0, 1).unwrap(), t);
    }

    #[test]
    fn constant_input_receives_no_noise() {
        let t = traj(&[&[1.5], &[1.5], &[1.5]]);
        assert_eq!(add_observation_noise(&t, 0.1, 1).unwrap(), t);
    }

    #[test]
    fn lorenz_noise_ratio_tracks_fraction() {
        let t = simulate_lorenz63([1.0, 1.0, 1.0], 60_000, 0.01).unwrap().skip(1000).unwrap();
        let noisy = add_observation_noise(&t, 0.1, 42).unwrap();
        let (_, data_std) = moments(t.states());
        let diffs: Vec<DVector<f64>> = noisy
            .states()
            .iter()
            .zip(t.states())
            .map(|(a, b)| a - b)
            .collect();
        let (_, noise_std) = moments(&diffs);
        for c in 0..3 {
            let ratio = noise_std[c] / data_std[c];
            assert!((ratio - 0.1).abs() <= 0.01, "coordinate {c}: {ratio}");
        }
    }

    #[test]
    fn hand_computed_normalization() {
        let t = traj(&[&[0.0], &[2.0]]);
        let (n, rec) = normalize(&t).unwrap();
        assert_eq!(rec.mean, vec![1.0]);
        assert_eq!(rec.std, vec![1.0]);
        assert_eq!(n.coordinate(0), vec![-1.0, 1.0]);
    }

    #[test]
    fn normalized_data_is_a_fixed_point() {
        let t = traj(&[&[-1.0, 1.0], &[1.0, -1.0]]);
        let (n, _) = normalize(&t).unwrap();
        for (a, b) in n.states().iter().zip(t.states()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn round_trip_recovers_input() {
        let t = simulate_lorenz63([1.0, 2.0, 3.0], 300, 0.02).unwrap();
        let (n, rec) = normalize(&t).unwrap();
        let back = denormalize(&n, &rec).unwrap();
        for (a, b) in back.states().iter().zip(t.states()) {
            assert!((a - b).amax() < 1e-12);
        }
    }

    #[test]
    fn zero_variance_coordinate_is_flagged() {
        let t = traj(&[&[1.0, 4.0], &[3.0, 4.0]]);
        let (n, rec) = normalize(&t).unwrap();
        assert_eq!(rec.zero_variance, vec![false, true]);
        assert_eq!(n.coordinate(1), vec![0.0, 0.0]);
    }
}
