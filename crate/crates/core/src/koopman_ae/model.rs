use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{seeded_stream, standard_normal_vec, Rng};
use crate::scalar::{lit, Scalar};

use super::tape::{Tape, Var};

/// Initial log-variance of the VAE encoder head and transition.
const INITIAL_LOGVAR: f64 = -4.605170185988091;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Ae,
    Vae,
}

/// Dense layer `y = W x + b`, `W` stored as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T: Scalar> {
    pub weight: DMatrix<T>,
    pub bias: DVector<T>,
}

/// Multilayer perceptron with ReLU between layers and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T: Scalar> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Mlp<T> {
    /// Widths `[in, hidden.., out]`; He-uniform hidden layers, Glorot-uniform output.
    pub fn init(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return invalid("MLP needs at least input and output widths, all positive");
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = if i < last {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| lit::<T>(rng.random_range(-bound..bound)));
                Layer { weight, bias: DVector::zeros(fan_out) }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Single linear layer `x ↦ W x + b`.
    pub fn linear(weight: DMatrix<T>, bias: DVector<T>) -> Result<Self> {
        let mlp = Self { layers: vec![Layer { weight, bias }] };
        mlp.validate()?;
        Ok(mlp)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return invalid("MLP has no layers");
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return invalid(format!("layer {i}: bias length differs from weight rows"));
            }
            if i > 0 && self.layers[i - 1].weight.nrows() != l.weight.ncols() {
                return invalid(format!("layer {i}: input width does not chain"));
            }
            if l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("layer {i} parameters")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &DVector<T>) -> DVector<T> {
        let mut h = x.clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = &l.weight * h + &l.bias;
            if i + 1 < self.layers.len() {
                h.apply(|v| *v = v.max(T::zero()));
            }
        }
        h
    }

    /// Row-batched forward pass on a tape; `params` holds `(W, b)` per layer.
    pub(crate) fn forward_tape(tape: &mut Tape<T>, x: Var, params: &[Var]) -> Var {
        let n = params.len() / 2;
        let mut h = x;
        for i in 0..n {
            let wt = tape.transpose(params[2 * i]);
            h = tape.matmul(h, wt);
            h = tape.add_row(h, params[2 * i + 1]);
            if i + 1 < n {
                h = tape.relu(h);
            }
        }
        h
    }

    fn tensors(&self) -> Vec<DMatrix<T>> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), DMatrix::from_row_slice(1, l.bias.len(), l.bias.as_slice())])
            .collect()
    }

    fn load(&mut self, it: &mut impl Iterator<Item = DMatrix<T>>) {
        for l in self.layers.iter_mut() {
            l.weight = it.next().expect("weight tensor");
            let b = it.next().expect("bias tensor");
            l.bias = DVector::from_column_slice(b.as_slice());
        }
    }

    fn tensor_count(&self) -> usize {
        2 * self.layers.len()
    }
}

/// Encoder, decoder and Koopman matrix; the VAE mode adds a log-variance
/// head for the encoder and a diagonal transition log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct KoopmanAutoencoder<T: Scalar> {
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub k: DMatrix<T>,
    pub mode: Mode,
    pub logvar_head: Option<Mlp<T>>,
    pub transition_logvar: Option<DVector<T>>,
}

/// Output of [`KoopmanAutoencoder::encode`].
#[derive(Debug, Clone, PartialEq)]
pub enum Encoding<T: Scalar> {
    Point(DVector<T>),
    Gaussian { mean: DVector<T>, logvar: DVector<T> },
}

impl<T: Scalar> Encoding<T> {
    pub fn mean(&self) -> &DVector<T> {
        match self {
            Encoding::Point(z) => z,
            Encoding::Gaussian { mean, .. } => mean,
        }
    }
}

impl<T: Scalar> KoopmanAutoencoder<T> {
    /// Random initialization with `K = I`.
    pub fn init(obs_dim: usize, latent_dim: usize, hidden: &[usize], mode: Mode, seed: u64) -> Result<Self> {
        if obs_dim == 0 || latent_dim == 0 {
            return invalid("observation and latent dimensions must be positive");
        }
        let mut rng = seeded_stream(seed, 100);
        let enc_w: Vec<usize> = std::iter::once(obs_dim).chain(hidden.iter().copied()).chain([latent_dim]).collect();
        let dec_w: Vec<usize> = std::iter::once(latent_dim).chain(hidden.iter().rev().copied()).chain([obs_dim]).collect();
        let encoder = Mlp::init(&enc_w, &mut rng)?;
        let decoder = Mlp::init(&dec_w, &mut rng)?;
        let (logvar_head, transition_logvar) = match mode {
            Mode::Ae => (None, None),
            Mode::Vae => {
                let mut head = Mlp::init(&enc_w, &mut rng)?;
                let last = head.layers.last_mut().expect("layer");
                last.weight.fill(T::zero());
                last.bias.fill(lit(INITIAL_LOGVAR));
                (Some(head), Some(DVector::from_element(latent_dim, lit(INITIAL_LOGVAR))))
            }
        };
        let model = Self {
            encoder,
            decoder,
            k: DMatrix::identity(latent_dim, latent_dim),
            mode,
            logvar_head,
            transition_logvar,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn latent_dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.decoder.validate()?;
        let d = self.k.nrows();
        if !self.k.is_square() || self.encoder.output_dim() != d || self.decoder.input_dim() != d {
            return invalid("encoder output, K and decoder input dimensions disagree");
        }
        if self.decoder.output_dim() != self.encoder.input_dim() {
            return invalid("decoder output must match encoder input");
        }
        if self.k.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("K".into()));
        }
        match (self.mode, &self.logvar_head, &self.transition_logvar) {
            (Mode::Ae, None, None) => Ok(()),
            (Mode::Vae, Some(h), Some(t)) => {
                h.validate()?;
                if h.input_dim() != self.obs_dim() || h.output_dim() != d || t.len() != d {
                    return invalid("VAE variance parameters have wrong dimensions");
                }
                Ok(())
            }
            _ => invalid("variance parameters must be present exactly in VAE mode"),
        }
    }

    pub fn encode(&self, x: &DVector<T>) -> Result<Encoding<T>> {
        if x.len() != self.obs_dim() {
            return Err(Error::DimensionMismatch { what: "encoder input", expected: self.obs_dim(), got: x.len() });
        }
        let mean = self.encoder.forward(x);
        Ok(match &self.logvar_head {
            None => Encoding::Point(mean),
            Some(h) => Encoding::Gaussian { mean, logvar: h.forward(x) },
        })
    }

    /// Reparameterized draw `μ + exp(½ logvar) ε` with `ε` from `seed`.
    pub fn sample_latent(&self, x: &DVector<T>, seed: u64) -> Result<DVector<T>> {
        match self.encode(x)? {
            Encoding::Point(z) => Ok(z),
            Encoding::Gaussian { mean, logvar } => {
                let mut rng = seeded_stream(seed, 0);
                let eps = standard_normal_vec::<T>(&mut rng, mean.len());
                Ok(mean + logvar.map(|v| (v * lit(0.5)).exp()).component_mul(&eps))
            }
        }
    }

    pub fn decode(&self, z: &DVector<T>) -> Result<DVector<T>> {
        if z.len() != self.latent_dim() {
            return Err(Error::DimensionMismatch { what: "decoder input", expected: self.latent_dim(), got: z.len() });
        }
        Ok(self.decoder.forward(z))
    }

    /// Parameter tensors in a fixed order: encoder `(W, b)` pairs, decoder
    /// pairs, `K`, then (VAE) head pairs and the transition log-variance row.
    pub fn tensors(&self) -> Vec<DMatrix<T>> {
        let mut out = self.encoder.tensors();
        out.extend(self.decoder.tensors());
        out.push(self.k.clone());
        if let (Some(h), Some(t)) = (&self.logvar_head, &self.transition_logvar) {
            out.extend(h.tensors());
            out.push(DMatrix::from_row_slice(1, t.len(), t.as_slice()));
        }
        out
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        let mut mlp = |prefix: &str, m: &Mlp<T>| {
            for i in 0..m.layers.len() {
                names.push(format!("{prefix}.{i}.weight"));
                names.push(format!("{prefix}.{i}.bias"));
            }
        };
        mlp("encoder", &self.encoder);
        mlp("decoder", &self.decoder);
        names.push("K".into());
        if let Some(h) = &self.logvar_head {
            for i in 0..h.layers.len() {
                names.push(format!("logvar_head.{i}.weight"));
                names.push(format!("logvar_head.{i}.bias"));
            }
            names.push("transition_logvar".into());
        }
        names
    }

    pub fn set_tensors(&mut self, tensors: Vec<DMatrix<T>>) {
        let mut it = tensors.into_iter();
        self.encoder.load(&mut it);
        self.decoder.load(&mut it);
        self.k = it.next().expect("K tensor");
        if let Some(h) = self.logvar_head.as_mut() {
            h.load(&mut it);
            let t = it.next().expect("transition log-variance");
            self.transition_logvar = Some(DVector::from_column_slice(t.as_slice()));
        }
    }

    /// Index ranges of the encoder, decoder, `K` and head tensors.
    pub(crate) fn layout(&self) -> TensorLayout {
        let e = self.encoder.tensor_count();
        let d = self.decoder.tensor_count();
        let h = self.logvar_head.as_ref().map_or(0, |m| m.tensor_count());
        TensorLayout { encoder: 0..e, decoder: e..e + d, k: e + d, head: e + d + 1..e + d + 1 + h, transition: (h > 0).then_some(e + d + 1 + h) }
    }
}

pub(crate) struct TensorLayout {
    pub encoder: std::ops::Range<usize>,
    pub decoder: std::ops::Range<usize>,
    pub k: usize,
    pub head: std::ops::Range<usize>,
    pub transition: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_final_layer_encodes_to_zero() {
        let mut m = KoopmanAutoencoder::<f64>::init(3, 2, &[8], Mode::Ae, 1).unwrap();
        let last = m.encoder.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        let z = m.encode(&DVector::from_vec(vec![1.0, -2.0, 3.0])).unwrap();
        assert_eq!(z.mean(), &DVector::zeros(2));
    }

    #[test]
    fn identity_layer_is_identity() {
        let id = Mlp::linear(DMatrix::<f64>::identity(3, 3), DVector::zeros(3)).unwrap();
        let x = DVector::from_vec(vec![0.5, -1.5, 2.0]);
        assert_eq!(id.forward(&x), x);
    }

    #[test]
    fn initialization_is_reproducible() {
        let a = KoopmanAutoencoder::<f64>::init(3, 4, &[16, 16], Mode::Vae, 9).unwrap();
        let b = KoopmanAutoencoder::<f64>::init(3, 4, &[16, 16], Mode::Vae, 9).unwrap();
        assert_eq!(a, b);
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        assert_eq!(a.encode(&x).unwrap(), b.encode(&x).unwrap());
        assert_eq!(a.sample_latent(&x, 4).unwrap(), b.sample_latent(&x, 4).unwrap());
        assert_ne!(a.sample_latent(&x, 4).unwrap(), a.sample_latent(&x, 5).unwrap());
    }

    #[test]
    fn tensor_round_trip() {
        let a = KoopmanAutoencoder::<f64>::init(2, 3, &[5], Mode::Vae, 2).unwrap();
        let mut b = KoopmanAutoencoder::<f64>::init(2, 3, &[5], Mode::Vae, 3).unwrap();
        b.set_tensors(a.tensors());
        assert_eq!(a, b);
        assert_eq!(a.tensors().len(), a.tensor_names().len());
    }

    #[test]
    fn dimension_errors() {
        let m = KoopmanAutoencoder::<f64>::init(2, 3, &[5], Mode::Ae, 2).unwrap();
        assert!(m.encode(&DVector::zeros(3)).is_err());
        assert!(m.decode(&DVector::zeros(2)).is_err());
    }
}
