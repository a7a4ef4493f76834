use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::Normalization;
use crate::error::{invalid, Result};
use crate::scalar::{lit, Scalar};

use super::{KoopmanAutoencoder, Layer, Mlp, Mode, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerFile {
    pub weight: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// JSON checkpoint: every parameter tensor as nested arrays, the training
/// config and seed, and the data normalization when one was applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub seed: u64,
    pub mode: Mode,
    pub encoder: Vec<LayerFile>,
    pub decoder: Vec<LayerFile>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<f64>>,
    pub logvar_head: Option<Vec<LayerFile>>,
    pub transition_logvar: Option<Vec<f64>>,
    pub normalization: Option<Normalization<f64>>,
}

fn rows<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|v| v.to_f64_lossy()).collect()).collect()
}

fn matrix<T: Scalar>(r: &[Vec<f64>], what: &str) -> Result<DMatrix<T>> {
    let n = r.len();
    let m = r.first().map_or(0, |v| v.len());
    if n == 0 || m == 0 || r.iter().any(|v| v.len() != m) {
        return invalid(format!("{what}: ragged or empty matrix"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| lit(r[i][j])))
}

fn mlp_out<T: Scalar>(m: &Mlp<T>) -> Vec<LayerFile> {
    m.layers
        .iter()
        .map(|l| LayerFile { weight: rows(&l.weight), bias: l.bias.iter().map(|v| v.to_f64_lossy()).collect() })
        .collect()
}

fn mlp_in<T: Scalar>(layers: &[LayerFile], what: &str) -> Result<Mlp<T>> {
    let layers = layers
        .iter()
        .map(|l| {
            Ok(Layer {
                weight: matrix(&l.weight, what)?,
                bias: DVector::from_iterator(l.bias.len(), l.bias.iter().map(|v| lit(*v))),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mlp = Mlp { layers };
    mlp.validate()?;
    Ok(mlp)
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &KoopmanAutoencoder<T>, config: &TrainConfig, normalization: Option<Normalization<f64>>) -> Self {
        Self {
            config: config.clone(),
            seed: config.seed,
            mode: model.mode,
            encoder: mlp_out(&model.encoder),
            decoder: mlp_out(&model.decoder),
            k: rows(&model.k),
            logvar_head: model.logvar_head.as_ref().map(mlp_out),
            transition_logvar: model.transition_logvar.as_ref().map(|t| t.iter().map(|v| v.to_f64_lossy()).collect()),
            normalization,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<KoopmanAutoencoder<T>> {
        let model = KoopmanAutoencoder {
            encoder: mlp_in(&self.encoder, "encoder")?,
            decoder: mlp_in(&self.decoder, "decoder")?,
            k: matrix(&self.k, "K")?,
            mode: self.mode,
            logvar_head: self.logvar_head.as_ref().map(|h| mlp_in(h, "logvar_head")).transpose()?,
            transition_logvar: self
                .transition_logvar
                .as_ref()
                .map(|t| DVector::from_iterator(t.len(), t.iter().map(|v| lit(*v)))),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_reload_is_bit_exact() {
        for mode in [Mode::Ae, Mode::Vae] {
            let cfg = TrainConfig { mode, latent_dim: 3, hidden: vec![7], ..Default::default() };
            let m = KoopmanAutoencoder::<f64>::init(2, 3, &[7], mode, 11).unwrap();
            let ck = Checkpoint::from_model(&m, &cfg, None);
            let text = ck.to_json().unwrap();
            let back = Checkpoint::from_json(&text).unwrap();
            assert_eq!(back.to_model::<f64>().unwrap(), m);
            assert_eq!(back.to_json().unwrap(), text);
        }
    }

    #[test]
    fn unknown_fields_rejected() {
        let m = KoopmanAutoencoder::<f64>::init(2, 3, &[4], Mode::Ae, 1).unwrap();
        let mut v = serde_json::to_value(Checkpoint::from_model(&m, &TrainConfig::default(), None)).unwrap();
        v["bogus"] = serde_json::json!(0);
        assert!(serde_json::from_value::<Checkpoint>(v).is_err());
    }
}
