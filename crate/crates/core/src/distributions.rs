//! Diagonal Gaussians and categoricals: closed-form KL divergences,
//! reparameterized sampling, and the two likelihood terms of the objective.
//!
//! Distributions are batched: row `i` of every parameter tensor describes the
//! distribution for sample `i`. A single-row distribution broadcasts against a
//! batched one in the KL functions, which is how one prior is compared with a
//! batch of posteriors.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::rng::{gumbel, standard_normal, Rng};
use crate::tensor::Tensor;

/// Log-variances are clamped to this range before exponentiation.
pub const LOG_VAR_RANGE: (f64, f64) = (-10.0, 10.0);

/// A diagonal Gaussian on the graph.
#[derive(Debug, Clone, Copy)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussianVars {
    /// Wraps raw head outputs, clamping the log-variance.
    pub fn new(g: &mut Graph, mean: Var, raw_log_var: Var) -> Result<Self> {
        if g.value(mean).shape() != g.value(raw_log_var).shape() {
            return Err(Error::Shape(format!(
                "gaussian mean {:?} vs log_var {:?}",
                g.value(mean).shape(),
                g.value(raw_log_var).shape()
            )));
        }
        let log_var = g.clamp(raw_log_var, LOG_VAR_RANGE.0, LOG_VAR_RANGE.1);
        Ok(Self { mean, log_var })
    }

    pub fn standard(g: &mut Graph, rows: usize, dim: usize) -> Self {
        Self {
            mean: g.constant(Tensor::zeros(rows, dim)),
            log_var: g.constant(Tensor::zeros(rows, dim)),
        }
    }

    pub fn from_value(g: &mut Graph, d: &DiagGaussian) -> Self {
        Self {
            mean: g.constant(d.mean.clone()),
            log_var: g.constant(d.log_var.clone()),
        }
    }

    pub fn value(&self, g: &Graph) -> DiagGaussian {
        DiagGaussian {
            mean: g.value(self.mean).clone(),
            log_var: g.value(self.log_var).clone(),
        }
    }

    pub fn rows(&self, g: &Graph) -> usize {
        g.value(self.mean).rows()
    }

    pub fn dim(&self, g: &Graph) -> usize {
        g.value(self.mean).cols()
    }
}

/// A categorical on the graph, parameterized by unnormalized logits.
#[derive(Debug, Clone, Copy)]
pub struct CategoricalVars {
    pub logits: Var,
}

impl CategoricalVars {
    pub fn uniform(g: &mut Graph, rows: usize, k: usize) -> Self {
        Self {
            logits: g.constant(Tensor::zeros(rows, k)),
        }
    }

    pub fn from_value(g: &mut Graph, d: &CategoricalDist) -> Self {
        Self {
            logits: g.constant(d.logits.clone()),
        }
    }

    pub fn value(&self, g: &Graph) -> CategoricalDist {
        CategoricalDist {
            logits: g.value(self.logits).clone(),
        }
    }

    pub fn probs(&self, g: &mut Graph) -> Var {
        g.softmax(self.logits)
    }

    pub fn rows(&self, g: &Graph) -> usize {
        g.value(self.logits).rows()
    }

    pub fn dim(&self, g: &Graph) -> usize {
        g.value(self.logits).cols()
    }
}

/// Brings `p` to `rows` rows when it is a single broadcastable row.
fn match_rows(g: &mut Graph, p: Var, rows: usize) -> Result<Var> {
    let pr = g.value(p).rows();
    if pr == rows {
        Ok(p)
    } else if pr == 1 {
        g.broadcast_rows(p, rows)
    } else {
        Err(Error::Shape(format!("cannot pair {pr} rows with {rows}")))
    }
}

/// Per-row `KL(q ‖ p)` as a `rows × 1` tensor.
pub fn gaussian_kl(g: &mut Graph, q: &GaussianVars, p: &GaussianVars) -> Result<Var> {
    let (qs, ps) = (g.value(q.mean).shape(), g.value(p.mean).shape());
    if qs[1] != ps[1] {
        return Err(Error::Shape(format!(
            "gaussian_kl dims {} vs {}",
            qs[1], ps[1]
        )));
    }
    let rows = qs[0].max(ps[0]);
    let qm = match_rows(g, q.mean, rows)?;
    let qlv = match_rows(g, q.log_var, rows)?;
    let pm = match_rows(g, p.mean, rows)?;
    let plv = match_rows(g, p.log_var, rows)?;
    // 0.5 * [ plv - qlv + (exp(qlv) + (qm - pm)^2) / exp(plv) - 1 ]
    let diff = g.sub(qm, pm)?;
    let diff2 = g.square(diff);
    let qvar = g.exp(qlv);
    let num = g.add(qvar, diff2)?;
    let neg_plv = g.scale(plv, -1.0);
    let inv_pvar = g.exp(neg_plv);
    let ratio = g.mul(num, inv_pvar)?;
    let lv_gap = g.sub(plv, qlv)?;
    let inner = g.add(lv_gap, ratio)?;
    let inner = g.add_scalar(inner, -1.0);
    let per_row = g.row_sum(inner);
    Ok(g.scale(per_row, 0.5))
}

/// Per-row `KL(q ‖ p) = Σ_k q_k (log q_k − log p_k)` as a `rows × 1` tensor.
pub fn categorical_kl(g: &mut Graph, q: &CategoricalVars, p: &CategoricalVars) -> Result<Var> {
    let (qs, ps) = (g.value(q.logits).shape(), g.value(p.logits).shape());
    if qs[1] != ps[1] {
        return Err(Error::Shape(format!(
            "categorical_kl sizes {} vs {}",
            qs[1], ps[1]
        )));
    }
    let rows = qs[0].max(ps[0]);
    let ql = match_rows(g, q.logits, rows)?;
    let pl = match_rows(g, p.logits, rows)?;
    let log_q = g.log_softmax(ql);
    let log_p = g.log_softmax(pl);
    let q_prob = g.exp(log_q);
    let gap = g.sub(log_q, log_p)?;
    let terms = g.mul(q_prob, gap)?;
    Ok(g.row_sum(terms))
}

/// Per-row symmetric KL, `KL(a‖b) + KL(b‖a)`.
pub fn gaussian_sym_kl(g: &mut Graph, a: &GaussianVars, b: &GaussianVars) -> Result<Var> {
    let ab = gaussian_kl(g, a, b)?;
    let ba = gaussian_kl(g, b, a)?;
    g.add(ab, ba)
}

pub fn categorical_sym_kl(g: &mut Graph, a: &CategoricalVars, b: &CategoricalVars) -> Result<Var> {
    let ab = categorical_kl(g, a, b)?;
    let ba = categorical_kl(g, b, a)?;
    g.add(ab, ba)
}

/// `mean + exp(log_var / 2) ⊙ noise` for externally supplied standard-normal noise.
pub fn gaussian_sample_with(g: &mut Graph, d: &GaussianVars, noise: Tensor) -> Result<Var> {
    let shape = g.value(d.mean).shape();
    if noise.shape() != shape {
        return Err(Error::Shape(format!(
            "noise {:?} for gaussian {:?}",
            noise.shape(),
            shape
        )));
    }
    let half = g.scale(d.log_var, 0.5);
    let std = g.exp(half);
    let eps = g.constant(noise);
    let spread = g.mul(std, eps)?;
    g.add(d.mean, spread)
}

pub fn gaussian_sample(g: &mut Graph, d: &GaussianVars, rng: &mut Rng) -> Result<Var> {
    let [r, c] = g.value(d.mean).shape();
    gaussian_sample_with(g, d, standard_normal(rng, r, c))
}

/// `softmax((logits + noise) / temperature)` for externally supplied Gumbel noise.
pub fn gumbel_softmax_sample_with(
    g: &mut Graph,
    d: &CategoricalVars,
    temperature: f64,
    noise: Tensor,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::Invalid(format!(
            "gumbel-softmax temperature must be positive, got {temperature}"
        )));
    }
    let shape = g.value(d.logits).shape();
    if noise.shape() != shape {
        return Err(Error::Shape(format!(
            "noise {:?} for logits {:?}",
            noise.shape(),
            shape
        )));
    }
    let n = g.constant(noise);
    let perturbed = g.add(d.logits, n)?;
    let scaled = g.scale(perturbed, 1.0 / temperature);
    Ok(g.softmax(scaled))
}

pub fn gumbel_softmax_sample(
    g: &mut Graph,
    d: &CategoricalVars,
    temperature: f64,
    rng: &mut Rng,
) -> Result<Var> {
    let [r, c] = g.value(d.logits).shape();
    gumbel_softmax_sample_with(g, d, temperature, gumbel(rng, r, c))
}

/// Unit-variance Gaussian log-likelihood without its constant:
/// `−½‖x − x̂‖²` summed over features and averaged over the batch.
pub fn gaussian_recon_loglik(g: &mut Graph, x: Var, x_hat: Var) -> Result<Var> {
    let diff = g.sub(x, x_hat)?;
    let sq = g.square(diff);
    let total = g.sum_all(sq);
    let rows = g.value(x).rows().max(1) as f64;
    Ok(g.scale(total, -0.5 / rows))
}

/// Mean negative log-softmax probability of the true labels.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[usize]) -> Result<Var> {
    let [rows, classes] = g.value(logits).shape();
    if labels.len() != rows {
        return Err(Error::Shape(format!(
            "{} labels for {rows} rows of logits",
            labels.len()
        )));
    }
    let onehot = g.constant(Tensor::one_hot(labels, classes)?);
    let logp = g.log_softmax(logits);
    let picked = g.mul(logp, onehot)?;
    let total = g.sum_all(picked);
    Ok(g.scale(total, -1.0 / rows.max(1) as f64))
}

/// A batch of diagonal Gaussians, by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagGaussian {
    pub mean: Tensor,
    pub log_var: Tensor,
}

impl DiagGaussian {
    pub fn new(mean: Tensor, log_var: Tensor) -> Result<Self> {
        if mean.shape() != log_var.shape() {
            return Err(Error::Shape(format!(
                "gaussian mean {:?} vs log_var {:?}",
                mean.shape(),
                log_var.shape()
            )));
        }
        if !log_var.is_finite() {
            return Err(Error::NonFinite("gaussian log-variance".into()));
        }
        Ok(Self { mean, log_var })
    }

    pub fn standard(rows: usize, dim: usize) -> Self {
        Self {
            mean: Tensor::zeros(rows, dim),
            log_var: Tensor::zeros(rows, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.cols()
    }

    pub fn kl(&self, p: &DiagGaussian) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let a = GaussianVars::from_value(&mut g, self);
        let b = GaussianVars::from_value(&mut g, p);
        let k = gaussian_kl(&mut g, &a, &b)?;
        Ok(g.value(k).data().to_vec())
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor {
        let mut g = Graph::new();
        let d = GaussianVars::from_value(&mut g, self);
        let z = gaussian_sample(&mut g, &d, rng).expect("matching shapes");
        g.value(z).clone()
    }
}

/// A batch of categoricals, by value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalDist {
    pub logits: Tensor,
}

impl CategoricalDist {
    pub fn new(logits: Tensor) -> Result<Self> {
        if !logits.is_finite() {
            return Err(Error::NonFinite("categorical logits".into()));
        }
        Ok(Self { logits })
    }

    /// Logits are log-probabilities up to a per-row constant.
    pub fn from_probs(probs: &Tensor) -> Result<Self> {
        Self::new(probs.map(f64::ln))
    }

    pub fn uniform(rows: usize, k: usize) -> Self {
        Self {
            logits: Tensor::zeros(rows, k),
        }
    }

    pub fn dim(&self) -> usize {
        self.logits.cols()
    }

    pub fn probs(&self) -> Tensor {
        let mut g = Graph::new();
        let l = g.constant(self.logits.clone());
        let p = g.softmax(l);
        g.value(p).clone()
    }

    pub fn kl(&self, p: &CategoricalDist) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let a = CategoricalVars::from_value(&mut g, self);
        let b = CategoricalVars::from_value(&mut g, p);
        let k = categorical_kl(&mut g, &a, &b)?;
        Ok(g.value(k).data().to_vec())
    }

    pub fn gumbel_softmax_sample(&self, temperature: f64, rng: &mut Rng) -> Result<Tensor> {
        let mut g = Graph::new();
        let d = CategoricalVars::from_value(&mut g, self);
        let z = gumbel_softmax_sample(&mut g, &d, temperature, rng)?;
        Ok(g.value(z).clone())
    }
}
