//! The training objective: domain loss, category loss and the temporal
//! smoothness penalty, all in minimization form.

use serde::{Deserialize, Serialize};

use super::lssae::GraphLatents;
use super::LatentVars;
use crate::autodiff::{Activation, Graph, Var};
use crate::distributions::{cross_entropy, gaussian_kl, gaussian_recon_loglik, GaussianVars};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Loss weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    /// Weight of `KL(q(z^c|x) ‖ N(0, I))`.
    pub lambda1: f64,
    /// Weight of the `z^w` KL terms.
    pub lambda2: f64,
    /// Weight of the `z^v` KL terms.
    pub lambda3: f64,
    /// Allowed symmetric KL between consecutive posteriors before the
    /// smoothness penalty engages.
    pub alpha: f64,
    /// Weight of the smoothness penalty.
    pub lambda_ts: f64,
}

impl Default for Objective {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            alpha: 0.05,
            lambda_ts: 1.0,
        }
    }
}

/// Unweighted loss components of one step. `total` applies the weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    /// Negative reconstruction log-likelihood summed over time stamps.
    pub recon: f64,
    pub kl_c: f64,
    pub kl_w: f64,
    pub kl_v: f64,
    pub ce: f64,
    pub ts: f64,
    pub total: f64,
}

impl LossTerms {
    /// The weighted sum of the components.
    pub fn weighted(&self, obj: &Objective) -> f64 {
        self.recon
            + obj.lambda1 * self.kl_c
            + obj.lambda2 * self.kl_w
            + self.ce
            + obj.lambda3 * self.kl_v
            + obj.lambda_ts * self.ts
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DomainLoss {
    pub total: Var,
    pub recon: Var,
    pub kl_c: Var,
    pub kl_w: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct CategoryLoss {
    pub total: Var,
    pub ce: Var,
    pub kl_v: Var,
}

fn zero(g: &mut Graph) -> Var {
    g.constant(Tensor::scalar(0.0))
}

/// `Σ_t mean_i KL(q_t,i ‖ p_t)`.
fn sequence_kl(g: &mut Graph, q: &[LatentVars], p: &[LatentVars]) -> Result<Var> {
    let mut acc = zero(g);
    for (q, p) in q.iter().zip(p) {
        let kl = q.kl(g, p)?;
        let m = g.mean_all(kl);
        acc = g.add(acc, m)?;
    }
    Ok(acc)
}

fn gaussians(d: &[GaussianVars]) -> Vec<LatentVars> {
    d.iter().copied().map(LatentVars::Gaussian).collect()
}

/// Negated domain evidence bound: reconstruction error summed over time,
/// plus the weighted `z^c` KL (averaged over every sample of every time
/// stamp) and the weighted `z^w` KL summed over time.
pub fn loss_domain(g: &mut Graph, lat: &GraphLatents, lambda1: f64, lambda2: f64) -> Result<DomainLoss> {
    if lat.q_w.len() != lat.steps || lat.p_w.len() != lat.steps {
        return Err(Error::Shape(format!(
            "{} time stamps but {} posteriors and {} priors for z^w",
            lat.steps,
            lat.q_w.len(),
            lat.p_w.len()
        )));
    }
    let loglik = gaussian_recon_loglik(g, lat.x, lat.x_hat)?;
    // The stacked mean is over steps·batch rows; rescale to a sum over time.
    let recon = g.scale(loglik, -(lat.steps as f64));
    let std = GaussianVars::standard(g, 1, g.value(lat.q_c.mean).cols());
    let kl_c_rows = gaussian_kl(g, &lat.q_c, &std)?;
    let kl_c = g.mean_all(kl_c_rows);
    let kl_w = sequence_kl(g, &gaussians(&lat.q_w), &gaussians(&lat.p_w))?;
    let a = g.scale(kl_c, lambda1);
    let b = g.scale(kl_w, lambda2);
    let total = g.add(recon, a)?;
    let total = g.add(total, b)?;
    Ok(DomainLoss {
        total,
        recon,
        kl_c,
        kl_w,
    })
}

/// Negated category evidence bound: cross-entropy summed over time plus the
/// weighted `z^v` KL summed over time.
pub fn loss_category(g: &mut Graph, lat: &GraphLatents, lambda3: f64) -> Result<CategoryLoss> {
    if lat.q_v.len() != lat.p_v.len() || (!lat.q_v.is_empty() && lat.q_v.len() != lat.steps) {
        return Err(Error::Shape(format!(
            "{} time stamps but {} posteriors and {} priors for z^v",
            lat.steps,
            lat.q_v.len(),
            lat.p_v.len()
        )));
    }
    let ce_mean = cross_entropy(g, lat.logits, &lat.labels)?;
    let ce = g.scale(ce_mean, lat.steps as f64);
    let kl_v = sequence_kl(g, &lat.q_v, &lat.p_v)?;
    let weighted = g.scale(kl_v, lambda3);
    let total = g.add(ce, weighted)?;
    Ok(CategoryLoss { total, ce, kl_v })
}

/// `Σ_t max(0, d(q_t, q_{t−1}) − α)` over both latent tracks, where `d` is
/// the batch-mean symmetric KL. Zero with fewer than two time stamps.
pub fn ts_penalty(g: &mut Graph, q_w: &[GaussianVars], q_v: &[LatentVars], alpha: f64) -> Result<Var> {
    let mut acc = zero(g);
    for track in [gaussians(q_w), q_v.to_vec()] {
        for pair in track.windows(2) {
            let d = pair[1].sym_kl(g, &pair[0])?;
            let d = g.mean_all(d);
            let excess = g.add_scalar(d, -alpha);
            let hinge = g.activation(excess, Activation::Relu);
            acc = g.add(acc, hinge)?;
        }
    }
    Ok(acc)
}

/// `loss_domain + loss_category + λ_ts · ts_penalty`, with its components.
pub fn total_loss(g: &mut Graph, lat: &GraphLatents, obj: &Objective) -> Result<(Var, LossTerms)> {
    let d = loss_domain(g, lat, obj.lambda1, obj.lambda2)?;
    let c = loss_category(g, lat, obj.lambda3)?;
    let ts = ts_penalty(g, &lat.q_w, &lat.q_v, obj.alpha)?;
    let weighted_ts = g.scale(ts, obj.lambda_ts);
    let total = g.add(d.total, c.total)?;
    let total = g.add(total, weighted_ts)?;
    let v = |x: Var| g.value(x).item();
    let terms = LossTerms {
        recon: v(d.recon),
        kl_c: v(d.kl_c),
        kl_w: v(d.kl_w),
        kl_v: v(c.kl_v),
        ce: v(c.ce),
        ts: v(ts),
        total: v(total),
    };
    Ok((total, terms))
}
