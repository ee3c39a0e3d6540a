//! Self-describing JSON checkpoints: architecture, config echo and every
//! named parameter tensor. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::evaluation::Predictor;
use crate::model::{ErmDims, ErmModel, LssaeModel, ModelDims};
use crate::params::NamedTensor;
use crate::rng::SeedTree;

pub const FORMAT: &str = "evodg-checkpoint";
pub const VERSION: u32 = 1;

/// Parameter initialization recorded in every checkpoint.
pub const INIT_SCHEME: &str =
    "affine and recurrent weights uniform in ±1/sqrt(fan_in) (recurrent fan_in = hidden size); biases zero";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum Architecture {
    Lssae(ModelDims),
    Erm(ErmDims),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub architecture: Architecture,
    pub config: TrainConfig,
    pub init: String,
    /// Epoch after which the parameters were captured.
    pub epoch: usize,
    pub tensors: Vec<NamedTensor>,
}

/// A model of either kind.
#[derive(Debug, Clone)]
pub enum TrainedModel {
    Lssae(LssaeModel),
    Erm(ErmModel),
}

impl TrainedModel {
    pub fn predictor(&self) -> Predictor<'_> {
        match self {
            TrainedModel::Lssae(m) => Predictor::Lssae(m),
            TrainedModel::Erm(m) => Predictor::Erm(m),
        }
    }

    pub fn algorithm(&self) -> &'static str {
        match self {
            TrainedModel::Lssae(_) => "lssae",
            TrainedModel::Erm(_) => "erm",
        }
    }

    /// `(feature dimension, class count)`.
    pub fn io_dims(&self) -> (usize, usize) {
        match self {
            TrainedModel::Lssae(m) => (m.dims().data_dim, m.dims().classes),
            TrainedModel::Erm(m) => (m.dims().data_dim, m.dims().classes),
        }
    }

    pub fn to_checkpoint(&self, config: &TrainConfig, epoch: usize) -> Checkpoint {
        let (architecture, tensors) = match self {
            TrainedModel::Lssae(m) => (Architecture::Lssae(m.dims().clone()), m.params().export()),
            TrainedModel::Erm(m) => (Architecture::Erm(m.dims().clone()), m.params().export()),
        };
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            architecture,
            config: config.clone(),
            init: INIT_SCHEME.to_string(),
            epoch,
            tensors,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != FORMAT || ck.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format {:?} version {}",
                ck.format, ck.version
            )));
        }
        // The seed only shapes the throwaway initialization; every value is
        // overwritten by the import.
        let seed = SeedTree::new(0);
        Ok(match &ck.architecture {
            Architecture::Lssae(dims) => {
                let mut m = LssaeModel::new(dims.clone(), seed)?;
                m.params_mut().import(&ck.tensors)?;
                TrainedModel::Lssae(m)
            }
            Architecture::Erm(dims) => {
                let mut m = ErmModel::new(dims.clone(), seed)?;
                m.params_mut().import(&ck.tensors)?;
                TrainedModel::Erm(m)
            }
        })
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let text = serde_json::to_string(ck).map_err(|e| Error::Checkpoint(e.to_string()))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}
