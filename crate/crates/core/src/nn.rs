//! Dense layers, stacks of them, and an LSTM cell.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Graph, Var};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamSet};
use crate::rng::Rng;
use crate::tensor::Tensor;

fn uniform(rng: &mut Rng, rows: usize, cols: usize, bound: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

/// `y = x W + b`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    /// Weights uniform in `±1/sqrt(in_dim)`, zero bias.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        group: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = params.add(format!("{name}.weight"), uniform(rng, in_dim, out_dim, bound), group);
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(1, out_dim), group);
        Self {
            weight,
            bias,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamSet, x: Var) -> Result<Var> {
        affine_forward(g, params, x, self)
    }
}

pub fn affine_forward(g: &mut Graph, params: &ParamSet, x: Var, layer: &Linear) -> Result<Var> {
    let w = g.value(x).cols();
    if w != layer.in_dim {
        return Err(Error::Shape(format!(
            "layer expects width {}, input has {w}",
            layer.in_dim
        )));
    }
    let wv = g.param(params, layer.weight);
    let bv = g.param(params, layer.bias);
    let xw = g.matmul(x, wv)?;
    g.add_bias(xw, bv)
}

/// Affine layers with a shared hidden activation and a separate one after
/// the last layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
    pub output: Activation,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`.
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        group: usize,
        rng: &mut Rng,
    ) -> Self {
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(params, &format!("{name}.{i}"), w[0], w[1], group, rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, params: &ParamSet, x: Var) -> Result<Var> {
        let mut h = x;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, params, h)?;
            let act = if i + 1 == n { self.output } else { self.hidden };
            h = g.activation(h, act);
        }
        Ok(h)
    }
}

/// Hidden and cell vectors of an LSTM, one row per sequence in the batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentState {
    pub hidden: Tensor,
    pub cell: Tensor,
}

impl RecurrentState {
    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            hidden: Tensor::zeros(batch, hidden),
            cell: Tensor::zeros(batch, hidden),
        }
    }
}

/// A recurrent state living on a [`Graph`].
#[derive(Debug, Clone, Copy)]
pub struct StateVars {
    pub hidden: Var,
    pub cell: Var,
}

impl StateVars {
    pub fn from_state(g: &mut Graph, s: &RecurrentState) -> Self {
        Self {
            hidden: g.constant(s.hidden.clone()),
            cell: g.constant(s.cell.clone()),
        }
    }

    pub fn zeros(g: &mut Graph, batch: usize, hidden: usize) -> Self {
        Self::from_state(g, &RecurrentState::zeros(batch, hidden))
    }

    pub fn value(&self, g: &Graph) -> RecurrentState {
        RecurrentState {
            hidden: g.value(self.hidden).clone(),
            cell: g.value(self.cell).clone(),
        }
    }
}

/// Single-layer LSTM cell with gates packed as `[input, forget, candidate, output]`.
#[derive(Debug, Clone, Copy)]
pub struct LstmCell {
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        params: &mut ParamSet,
        name: &str,
        in_dim: usize,
        hidden: usize,
        group: usize,
        rng: &mut Rng,
    ) -> Self {
        let bound = 1.0 / (hidden.max(1) as f64).sqrt();
        let w_input = params.add(format!("{name}.w_input"), uniform(rng, in_dim, 4 * hidden, bound), group);
        let w_hidden = params.add(format!("{name}.w_hidden"), uniform(rng, hidden, 4 * hidden, bound), group);
        let bias = params.add(format!("{name}.bias"), Tensor::zeros(1, 4 * hidden), group);
        Self {
            w_input,
            w_hidden,
            bias,
            in_dim,
            hidden,
        }
    }

    /// One step; returns the new hidden vector (also the cell's output).
    pub fn step(
        &self,
        g: &mut Graph,
        params: &ParamSet,
        x: Var,
        state: StateVars,
    ) -> Result<StateVars> {
        recurrent_step(g, params, x, state, self)
    }
}

pub fn recurrent_step(
    g: &mut Graph,
    params: &ParamSet,
    x: Var,
    state: StateVars,
    cell: &LstmCell,
) -> Result<StateVars> {
    let h = cell.hidden;
    let (xs, hs, cs) = (
        g.value(x).shape(),
        g.value(state.hidden).shape(),
        g.value(state.cell).shape(),
    );
    if xs[1] != cell.in_dim || hs != [xs[0], h] || cs != hs {
        return Err(Error::Shape(format!(
            "lstm({}→{h}) given input {xs:?}, hidden {hs:?}, cell {cs:?}",
            cell.in_dim
        )));
    }
    let wi = g.param(params, cell.w_input);
    let wh = g.param(params, cell.w_hidden);
    let b = g.param(params, cell.bias);
    let a = g.matmul(x, wi)?;
    let r = g.matmul(state.hidden, wh)?;
    let pre = g.add(a, r)?;
    let pre = g.add_bias(pre, b)?;
    let i = g.slice_cols(pre, 0, h)?;
    let f = g.slice_cols(pre, h, 2 * h)?;
    let c = g.slice_cols(pre, 2 * h, 3 * h)?;
    let o = g.slice_cols(pre, 3 * h, 4 * h)?;
    let i = g.activation(i, Activation::Sigmoid);
    let f = g.activation(f, Activation::Sigmoid);
    let c = g.activation(c, Activation::Tanh);
    let o = g.activation(o, Activation::Sigmoid);
    let keep = g.mul(f, state.cell)?;
    let write = g.mul(i, c)?;
    let cell_new = g.add(keep, write)?;
    let squashed = g.activation(cell_new, Activation::Tanh);
    let hidden_new = g.mul(o, squashed)?;
    Ok(StateVars {
        hidden: hidden_new,
        cell: cell_new,
    })
}
