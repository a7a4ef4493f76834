use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{fmt_float, Trajectory};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

use super::{batch_vne, KoopmanAutoencoder};

/// Encodes `x0` once (mean in VAE mode), applies `K` `steps` times and
/// decodes every latent. State 0 of the result is `x0` itself.
pub fn rollout<T: Scalar>(model: &KoopmanAutoencoder<T>, x0: &DVector<T>, steps: usize, dt: T) -> Result<Trajectory<T>> {
    if steps == 0 {
        return invalid("rollout needs at least one step");
    }
    let mut z = model.encode(x0)?.mean().clone();
    let mut states = Vec::with_capacity(steps + 1);
    states.push(x0.clone());
    for _ in 0..steps {
        z = &model.k * z;
        states.push(model.decode(&z)?);
    }
    Trajectory::new(states, dt, "rollout")
}

/// Latent codes (encoder means) of every state, one row per state.
pub fn encode_trajectory<T: Scalar>(model: &KoopmanAutoencoder<T>, traj: &Trajectory<T>) -> Result<DMatrix<T>> {
    let d = model.latent_dim();
    let mut out = DMatrix::zeros(traj.len(), d);
    for (i, s) in traj.states().iter().enumerate() {
        out.row_mut(i).copy_from(&model.encode(s)?.mean().transpose());
    }
    Ok(out)
}

/// Mean of `exp S` over the batch densities of every `batch`-row window
/// (starts `batch` apart) of the encoded trajectories.
pub fn batch_effective_dimension<T: Scalar>(model: &KoopmanAutoencoder<T>, data: &[Trajectory<T>], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for traj in data {
        let z = encode_trajectory(model, traj)?;
        let mut start = 0;
        while start + batch <= z.nrows() {
            let e = batch_vne(&z.rows(start, batch).into_owned())?;
            total += e.entropy.to_f64_lossy().exp();
            count += 1;
            start += batch;
        }
    }
    if count == 0 {
        return invalid(format!("no trajectory holds a window of {batch} states"));
    }
    Ok(total / count as f64)
}

/// One eigenvalue of `K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
}

/// Eigenvalues of a real square matrix, sorted by modulus (descending),
/// then real part, then imaginary part.
pub fn koopman_spectrum<T: Scalar>(k: &DMatrix<T>) -> Result<Vec<Eigenvalue>> {
    if !k.is_square() || k.nrows() == 0 {
        return invalid("spectrum needs a nonempty square matrix");
    }
    let mut eig: Vec<Eigenvalue> = k
        .clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| {
            let (re, im) = (c.re.to_f64_lossy(), c.im.to_f64_lossy());
            Eigenvalue { re, im, modulus: re.hypot(im) }
        })
        .collect();
    eig.sort_by(|a, b| {
        b.modulus
            .total_cmp(&a.modulus)
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
    Ok(eig)
}

/// CSV `re,im,modulus`.
pub fn spectrum_csv(eig: &[Eigenvalue]) -> String {
    let mut out = String::from("re,im,modulus\n");
    for e in eig {
        out.push_str(&format!("{},{},{}\n", fmt_float(e.re), fmt_float(e.im), fmt_float(e.modulus)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::koopman_ae::{Mlp, Mode};
    use approx::assert_relative_eq;

    fn identity_model(k: DMatrix<f64>) -> KoopmanAutoencoder<f64> {
        let id = Mlp::linear(DMatrix::identity(2, 2), DVector::zeros(2)).unwrap();
        KoopmanAutoencoder { encoder: id.clone(), decoder: id, k, mode: Mode::Ae, logvar_head: None, transition_logvar: None }
    }

    #[test]
    fn identity_operator_holds_still() {
        let x0 = DVector::from_vec(vec![0.3, -0.7]);
        let t = rollout(&identity_model(DMatrix::identity(2, 2)), &x0, 5, 0.1).unwrap();
        assert!(t.states().iter().all(|s| *s == x0));
    }

    #[test]
    fn rotation_rotates() {
        let th = 0.4f64;
        let k = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let t = rollout(&identity_model(k), &DVector::from_vec(vec![1.0, 0.0]), 6, 1.0).unwrap();
        for (i, s) in t.states().iter().enumerate() {
            assert_relative_eq!(s[0], (th * i as f64).cos(), epsilon = 1e-12);
            assert_relative_eq!(s[1], (th * i as f64).sin(), epsilon = 1e-12);
        }
        let eig = koopman_spectrum(&identity_model(DMatrix::identity(2, 2)).k).unwrap();
        assert!(eig.iter().all(|e| (e.modulus - 1.0).abs() < 1e-12));
    }

    #[test]
    fn spectrum_examples() {
        let th = 0.9f64;
        let rot = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]);
        let e = koopman_spectrum(&rot).unwrap();
        assert_relative_eq!(e[0].im.abs(), th.sin(), epsilon = 1e-12);
        assert_relative_eq!(e[0].re, th.cos(), epsilon = 1e-12);
        assert_relative_eq!(e[0].im, -e[1].im, epsilon = 1e-12);
        let half = DMatrix::<f64>::identity(3, 3) * 0.5;
        assert!(koopman_spectrum(&half).unwrap().iter().all(|e| e.re == 0.5 && e.im == 0.0));
        // Companion matrix of (λ − 0.5)(λ + 0.25)(λ − 0.9).
        let (r1, r2, r3) = (0.5, -0.25, 0.9);
        let c2 = r1 + r2 + r3;
        let c1 = -(r1 * r2 + r1 * r3 + r2 * r3);
        let c0 = r1 * r2 * r3;
        let comp = DMatrix::from_row_slice(3, 3, &[c2, c1, c0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let roots: Vec<f64> = koopman_spectrum(&comp).unwrap().iter().map(|e| e.re).collect();
        for (got, want) in roots.iter().zip([0.9, 0.5, -0.25]) {
            assert_relative_eq!(*got, want, epsilon = 1e-10);
        }
        assert!(spectrum_csv(&e).starts_with("re,im,modulus\n"));
    }
}
