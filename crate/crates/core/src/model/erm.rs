//! Empirical risk minimization baseline: the `E^c` feature extractor, a
//! linear bottleneck of width `d_c`, and a linear classifier.

use serde::{Deserialize, Serialize};

use super::lssae::extractor_widths;
use super::GROUP_MAIN;
use crate::autodiff::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Linear, Mlp};
use crate::params::ParamSet;
use crate::rng::SeedTree;
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErmDims {
    pub data_dim: usize,
    pub classes: usize,
    pub d_c: usize,
    pub feature_width: usize,
}

#[derive(Debug, Clone)]
pub struct ErmModel {
    dims: ErmDims,
    params: ParamSet,
    extractor: Mlp,
    bottleneck: Linear,
    classifier: Linear,
}

impl ErmModel {
    pub fn new(dims: ErmDims, seed: SeedTree) -> Result<Self> {
        if dims.data_dim == 0 || dims.classes == 0 || dims.d_c == 0 || dims.feature_width == 0 {
            return Err(Error::Invalid(format!("ERM sizes must be positive: {dims:?}")));
        }
        let mut rng = seed.child("init").rng();
        let rng = &mut rng;
        let mut p = ParamSet::new();
        let widths = extractor_widths(dims.data_dim, dims.feature_width);
        let extractor = Mlp::new(&mut p, "enc_c", &widths, Activation::Relu, Activation::Identity, GROUP_MAIN, rng);
        let bottleneck = Linear::new(&mut p, "bottleneck", dims.feature_width, dims.d_c, GROUP_MAIN, rng);
        let classifier = Linear::new(&mut p, "classifier", dims.d_c, dims.classes, GROUP_MAIN, rng);
        Ok(Self {
            dims,
            params: p,
            extractor,
            bottleneck,
            classifier,
        })
    }

    pub fn dims(&self) -> &ErmDims {
        &self.dims
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn logits_in(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = self.extractor.forward(g, &self.params, x)?;
        let z = self.bottleneck.forward(g, &self.params, h)?;
        self.classifier.forward(g, &self.params, z)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols() != self.dims.data_dim {
            return Err(Error::Shape(format!(
                "input has width {}, model expects {}",
                x.cols(),
                self.dims.data_dim
            )));
        }
        let mut parts = Vec::new();
        let mut start = 0;
        loop {
            let end = (start + EVAL_CHUNK).min(x.rows());
            let mut g = Graph::new();
            let xv = g.constant(x.slice_rows(start, end));
            let l = self.logits_in(&mut g, xv)?;
            parts.push(g.value(l).clone());
            start = end;
            if start >= x.rows() {
                break;
            }
        }
        Tensor::concat_rows(&parts.iter().collect::<Vec<_>>())
    }

    pub fn predict(&self, x: &Tensor) -> Result<Vec<usize>> {
        Ok(self.logits(x)?.argmax_rows())
    }
}
