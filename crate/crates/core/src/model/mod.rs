//! The LSSAE network family, its objective, and the ERM baseline.

mod erm;
mod lssae;
mod objective;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::distributions::{
    categorical_kl, categorical_sym_kl, gaussian_kl, gaussian_sample, gaussian_sym_kl,
    gumbel_softmax_sample, CategoricalDist, CategoricalVars, DiagGaussian, GaussianVars,
};
use crate::error::{Error, Result};
use crate::rng::Rng;

pub use erm::{ErmDims, ErmModel};
pub use lssae::{AlignedBatch, GraphLatents, LatentBundle, LssaeModel, ModelDims, Rollout};
pub use objective::{
    loss_category, loss_domain, total_loss, ts_penalty, CategoryLoss, DomainLoss, LossTerms,
    Objective,
};

/// Learning-rate group of the static encoder, decoder and classifier.
pub const GROUP_MAIN: usize = 0;
/// Learning-rate group of the dynamic encoders and prior networks.
pub const GROUP_DYNAMIC: usize = 1;

/// Family of the category-related latent `z^v` and its prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorType {
    /// Learnable categorical prior (the default).
    Categorical,
    /// Diagonal Gaussian posterior and learnable Gaussian prior.
    Gaussian,
    /// Categorical posterior against a fixed uniform prior.
    Uniform,
    /// No `z^v` track: the classifier sees `z^c` only.
    None,
}

impl PriorType {
    pub const ALL: [PriorType; 4] = [
        PriorType::Categorical,
        PriorType::Gaussian,
        PriorType::Uniform,
        PriorType::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorType::Categorical => "categorical",
            PriorType::Gaussian => "gaussian",
            PriorType::Uniform => "uniform",
            PriorType::None => "none",
        }
    }

    pub fn has_v(self) -> bool {
        self != PriorType::None
    }

    /// Whether `z^v` lives on the simplex.
    pub fn is_categorical(self) -> bool {
        matches!(self, PriorType::Categorical | PriorType::Uniform)
    }

    /// Whether a prior network `F^v` exists.
    pub fn has_prior_net(self) -> bool {
        matches!(self, PriorType::Categorical | PriorType::Gaussian)
    }
}

impl fmt::Display for PriorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PriorType::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| {
                Error::Invalid(format!(
                    "unknown prior type {s:?} (expected categorical, gaussian, uniform or none)"
                ))
            })
    }
}

/// How latents are drawn when rolling a prior forward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RolloutMode {
    /// Reparameterized draws (Gaussian noise or Gumbel-Softmax).
    Sample,
    /// The distribution's mean: the Gaussian mean or the probability vector.
    #[default]
    Mean,
}

impl RolloutMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RolloutMode::Sample => "sample",
            RolloutMode::Mean => "mean",
        }
    }
}

impl fmt::Display for RolloutMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RolloutMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sample" => Ok(RolloutMode::Sample),
            "mean" => Ok(RolloutMode::Mean),
            _ => Err(Error::Invalid(format!(
                "unknown inference mode {s:?} (expected sample or mean)"
            ))),
        }
    }
}

/// A latent distribution by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LatentDist {
    Gaussian(DiagGaussian),
    Categorical(CategoricalDist),
}

impl LatentDist {
    pub fn kl(&self, p: &LatentDist) -> Result<Vec<f64>> {
        match (self, p) {
            (LatentDist::Gaussian(q), LatentDist::Gaussian(p)) => q.kl(p),
            (LatentDist::Categorical(q), LatentDist::Categorical(p)) => q.kl(p),
            _ => Err(Error::Invalid("KL between different distribution families".into())),
        }
    }

    pub fn as_gaussian(&self) -> Option<&DiagGaussian> {
        match self {
            LatentDist::Gaussian(d) => Some(d),
            LatentDist::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&CategoricalDist> {
        match self {
            LatentDist::Categorical(d) => Some(d),
            LatentDist::Gaussian(_) => None,
        }
    }
}

/// A latent distribution on the graph.
#[derive(Debug, Clone, Copy)]
pub enum LatentVars {
    Gaussian(GaussianVars),
    Categorical(CategoricalVars),
}

impl LatentVars {
    pub fn value(&self, g: &Graph) -> LatentDist {
        match self {
            LatentVars::Gaussian(d) => LatentDist::Gaussian(d.value(g)),
            LatentVars::Categorical(d) => LatentDist::Categorical(d.value(g)),
        }
    }

    /// Per-row `KL(self ‖ p)`.
    pub fn kl(&self, g: &mut Graph, p: &LatentVars) -> Result<Var> {
        match (self, p) {
            (LatentVars::Gaussian(q), LatentVars::Gaussian(p)) => gaussian_kl(g, q, p),
            (LatentVars::Categorical(q), LatentVars::Categorical(p)) => categorical_kl(g, q, p),
            _ => Err(Error::Invalid("KL between different distribution families".into())),
        }
    }

    pub fn sym_kl(&self, g: &mut Graph, other: &LatentVars) -> Result<Var> {
        match (self, other) {
            (LatentVars::Gaussian(a), LatentVars::Gaussian(b)) => gaussian_sym_kl(g, a, b),
            (LatentVars::Categorical(a), LatentVars::Categorical(b)) => {
                categorical_sym_kl(g, a, b)
            }
            _ => Err(Error::Invalid("KL between different distribution families".into())),
        }
    }

    pub fn draw(
        &self,
        g: &mut Graph,
        mode: RolloutMode,
        temperature: f64,
        rng: &mut Rng,
    ) -> Result<Var> {
        match (self, mode) {
            (LatentVars::Gaussian(d), RolloutMode::Sample) => gaussian_sample(g, d, rng),
            (LatentVars::Gaussian(d), RolloutMode::Mean) => Ok(d.mean),
            (LatentVars::Categorical(d), RolloutMode::Sample) => {
                gumbel_softmax_sample(g, d, temperature, rng)
            }
            (LatentVars::Categorical(d), RolloutMode::Mean) => Ok(d.probs(g)),
        }
    }
}
