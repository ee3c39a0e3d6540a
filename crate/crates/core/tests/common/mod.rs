//! Oracles shared by the integration tests and the acceptance suite:
//! central finite differences, Monte-Carlo and direct-summation KL, and an
//! independent evaluation of the evidence lower bound.

#![allow(dead_code)]

use evodg::autodiff::{Graph, Var};
use evodg::model::{LatentBundle, LatentDist};
use evodg::params::{ParamId, ParamSet};
use evodg::rng::{standard_normal, Rng, SeedTree};
use evodg::Tensor;
use rand::Rng as _;

pub mod gradient_suite;
pub mod kl_suite;

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error so exact zeros compare cleanly.
pub const FD_FLOOR: f64 = 1e-8;

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR)
}

pub fn random_tensor(rng: &mut Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| scale * (2.0 * rng.random::<f64>() - 1.0))
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// `Σ out ⊙ W` for fixed weights `W`, turning any output into a scalar
/// whose gradient exercises every output entry.
pub fn project(g: &mut Graph, out: Var, weights_seed: u64) -> Var {
    let [r, c] = g.value(out).shape();
    let w = random_tensor(&mut SeedTree::new(weights_seed).rng(), r, c, 1.0);
    let wv = g.constant(w);
    let prod = g.mul(out, wv).unwrap();
    g.sum_all(prod)
}

/// Maximum relative error between backward-pass and central-difference
/// gradients of `f` with respect to every entry of every input. `params`
/// are held fixed.
pub fn check_inputs(
    params: &ParamSet,
    inputs: &[Tensor],
    f: &dyn Fn(&mut Graph, &ParamSet, &[Var]) -> Var,
) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = f(&mut g, params, &vars);
    let grads = g.backward(loss, &mut params.clone()).unwrap();
    let eval = |ins: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = ins.iter().map(|t| g.constant(t.clone())).collect();
        let l = f(&mut g, params, &vars);
        g.value(l).item()
    };
    let mut worst: f64 = 0.0;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.get(*var).cloned().unwrap_or_else(|| {
            Tensor::zeros(inputs[k].rows(), inputs[k].cols())
        });
        for e in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[e] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[e] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic.data()[e], numeric));
        }
    }
    worst
}

/// Maximum relative error over `coords` parameter entries. `f` must be a
/// pure function of the parameter values (replay any noise from a fixed
/// seed inside it).
pub fn check_params(
    params: &mut ParamSet,
    coords: &[(ParamId, usize)],
    f: &dyn Fn(&mut Graph, &ParamSet) -> Var,
) -> f64 {
    param_gradients(params, coords, f)
        .into_iter()
        .map(|(a, n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// `(backward, central difference)` pairs for each coordinate.
pub fn param_gradients(
    params: &mut ParamSet,
    coords: &[(ParamId, usize)],
    f: &dyn Fn(&mut Graph, &ParamSet) -> Var,
) -> Vec<(f64, f64)> {
    params.zero_grad();
    let mut g = Graph::new();
    let loss = f(&mut g, params);
    g.backward(loss, params).unwrap();
    let analytic: Vec<f64> = coords
        .iter()
        .map(|&(id, e)| params.grad(id).data()[e])
        .collect();
    params.zero_grad();
    coords
        .iter()
        .zip(analytic)
        .map(|(&(id, e), a)| (a, central_difference(params, id, e, FD_STEP, f)))
        .collect()
}

pub fn central_difference(
    params: &mut ParamSet,
    id: ParamId,
    e: usize,
    h: f64,
    f: &dyn Fn(&mut Graph, &ParamSet) -> Var,
) -> f64 {
    let orig = params.value(id).data()[e];
    params.value_mut(id).data_mut()[e] = orig + h;
    let mut g = Graph::new();
    let l = f(&mut g, params);
    let up = g.value(l).item();
    params.value_mut(id).data_mut()[e] = orig - h;
    let mut g = Graph::new();
    let l = f(&mut g, params);
    let down = g.value(l).item();
    params.value_mut(id).data_mut()[e] = orig;
    (up - down) / (2.0 * h)
}

/// One random entry of every parameter tensor.
pub fn one_coord_per_tensor(params: &ParamSet, rng: &mut Rng) -> Vec<(ParamId, usize)> {
    params
        .ids()
        .map(|id| (id, rng.random_range(0..params.value(id).len())))
        .collect()
}

// ---- Monte-Carlo and direct-summation KL oracles ----

/// Mean and standard error of `log q(z) − log p(z)` for `z ~ q`, diagonal
/// Gaussians given as (mean, variance) vectors.
pub fn mc_gaussian_kl(qm: &[f64], qv: &[f64], pm: &[f64], pv: &[f64], samples: usize, rng: &mut Rng) -> (f64, f64) {
    let d = qm.len();
    let eps = standard_normal(rng, samples, d);
    let log_density = |z: f64, m: f64, v: f64| -0.5 * ((z - m).powi(2) / v + v.ln() + (2.0 * std::f64::consts::PI).ln());
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for s in 0..samples {
        let mut lr = 0.0;
        for k in 0..d {
            let z = qm[k] + qv[k].sqrt() * eps.get(s, k);
            lr += log_density(z, qm[k], qv[k]) - log_density(z, pm[k], pv[k]);
        }
        sum += lr;
        sum_sq += lr * lr;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// `Σ_k q_k (ln q_k − ln p_k)` by direct summation over probability vectors.
pub fn direct_categorical_kl(q: &[f64], p: &[f64]) -> f64 {
    q.iter()
        .zip(p)
        .filter(|(qk, _)| **qk > 0.0)
        .map(|(qk, pk)| qk * (qk.ln() - pk.ln()))
        .sum()
}

/// Mean and standard error of `ln q_k − ln p_k` for categories `k ~ q`.
pub fn mc_categorical_kl(q: &[f64], p: &[f64], samples: usize, rng: &mut Rng) -> (f64, f64) {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = q.len() - 1;
        for (i, qi) in q.iter().enumerate() {
            acc += qi;
            if u < acc {
                k = i;
                break;
            }
        }
        let lr = q[k].ln() - p[k].ln();
        sum += lr;
        sum_sq += lr * lr;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0) * n / (n - 1.0);
    (mean, (var / n).sqrt())
}

// ---- independent evidence lower bound ----

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits[k] - lse
}

/// Closed-form Gaussian KL written out per coordinate, independently of
/// the library.
fn gauss_kl_row(qm: &[f64], qlv: &[f64], pm: &[f64], plv: &[f64]) -> f64 {
    (0..qm.len())
        .map(|k| 0.5 * (plv[k] - qlv[k] + (qlv[k].exp() + (qm[k] - pm[k]).powi(2)) / plv[k].exp() - 1.0))
        .sum()
}

fn dist_kl_row(q: &LatentDist, p: &LatentDist, i: usize) -> f64 {
    let prow = |t: &Tensor| t.row(if t.rows() == 1 { 0 } else { i }).to_vec();
    match (q, p) {
        (LatentDist::Gaussian(q), LatentDist::Gaussian(p)) => gauss_kl_row(
            q.mean.row(i),
            q.log_var.row(i),
            &prow(&p.mean),
            &prow(&p.log_var),
        ),
        (LatentDist::Categorical(q), LatentDist::Categorical(p)) => {
            direct_categorical_kl(&softmax(q.logits.row(i)), &softmax(&prow(&p.logits)))
        }
        _ => panic!("mixed families"),
    }
}

/// The evidence lower bound rebuilt term by term from raw records:
/// `Σ_t E[log p(x_t|z^c, z^w_t)] + Σ_t E[log p(y_t|z^c, z^v_t)] − KL(z^c)
/// − Σ_t KL(z^w_t) − Σ_t KL(z^v_t)`, expectations as batch means and the
/// `z^c` KL averaged over every sample of every time stamp.
pub fn elbo_oracle(b: &LatentBundle) -> f64 {
    let steps = b.x.len();
    let mut elbo = 0.0;
    let mut kl_c_sum = 0.0;
    let mut kl_c_count = 0usize;
    for t in 0..steps {
        let n = b.x[t].rows();
        let mut recon = 0.0;
        let mut class = 0.0;
        let mut kl_w = 0.0;
        let mut kl_v = 0.0;
        for i in 0..n {
            let sq: f64 = b.x[t]
                .row(i)
                .iter()
                .zip(b.x_hat[t].row(i))
                .map(|(a, c)| (a - c).powi(2))
                .sum();
            recon += -0.5 * sq;
            class += log_softmax_at(b.logits[t].row(i), b.labels[t][i]);
            let q = &b.q_c[t];
            let zeros = vec![0.0; q.mean.cols()];
            kl_c_sum += gauss_kl_row(q.mean.row(i), q.log_var.row(i), &zeros, &zeros);
            kl_c_count += 1;
            kl_w += dist_kl_row(
                &LatentDist::Gaussian(b.q_w[t].clone()),
                &LatentDist::Gaussian(b.p_w[t].clone()),
                i,
            );
            if !b.q_v.is_empty() {
                kl_v += dist_kl_row(&b.q_v[t], &b.p_v[t], i);
            }
        }
        let nf = n as f64;
        elbo += recon / nf + class / nf - kl_w / nf - kl_v / nf;
    }
    elbo - kl_c_sum / kl_c_count as f64
}

/// `|−total_loss − elbo_oracle|` on 20 fixed random batches, cycling through
/// the prior variants, with unit KL weights and the smoothness penalty off.
pub fn elbo_identity_gaps() -> Vec<f64> {
    use evodg::model::{total_loss, AlignedBatch, LssaeModel, ModelDims, Objective, PriorType};
    let obj = Objective {
        lambda1: 1.0,
        lambda2: 1.0,
        lambda3: 1.0,
        alpha: 0.05,
        lambda_ts: 0.0,
    };
    (0..20)
        .map(|i| {
            let tree = SeedTree::new(909).index(i);
            let mut rng = tree.child("batch").rng();
            let (steps, batch, d, classes) = (2 + i as usize % 4, 3 + i as usize % 5, 2 + i as usize % 3, 2 + i as usize % 3);
            let dims = ModelDims {
                d_c: 4,
                d_w: 3,
                k_v: 3,
                feature_width: 16,
                lstm_hidden: 8,
                decoder_widths: vec![8, 12],
                prior_type: PriorType::ALL[i as usize % 4],
                ..ModelDims::new(d, classes)
            };
            let model = LssaeModel::new(dims, tree.child("model")).unwrap();
            let xs = (0..steps).map(|_| random_tensor(&mut rng, batch, d, 1.5)).collect();
            let ys = (0..steps)
                .map(|_| (0..batch).map(|_| rng.random_range(0..classes)).collect())
                .collect();
            let batch = AlignedBatch::new(xs, ys).unwrap();
            let mut g = Graph::new();
            let lat = model.forward(&mut g, &batch, 1.0, &mut tree.child("noise").rng()).unwrap();
            let (loss, _) = total_loss(&mut g, &lat, &obj).unwrap();
            let bound = elbo_oracle(&lat.bundle(&g));
            (-g.value(loss).item() - bound).abs()
        })
        .collect()
}

/// Poisons every `E^v` parameter with NaN and checks that target-domain
/// predictions are unchanged and finite: the target path runs only `E^c`,
/// the `z^v` prior and the classifier, and its input type carries no labels.
pub fn target_path_ignores_label_encoder() -> bool {
    use evodg::evaluation::{predict_target, InferenceOptions, TargetFeatures};
    use evodg::model::{LssaeModel, ModelDims, RolloutMode};
    let dims = ModelDims { feature_width: 16, lstm_hidden: 8, ..ModelDims::new(2, 2) };
    let model = LssaeModel::new(dims, SeedTree::new(41)).unwrap();
    let mut poisoned = model.clone();
    let ids: Vec<_> = poisoned.params().ids().collect();
    let mut touched = 0;
    for id in ids {
        if poisoned.params().param(id).name.starts_with("enc_v") {
            poisoned.params_mut().value_mut(id).fill(f64::NAN);
            touched += 1;
        }
    }
    let mut rng = SeedTree::new(42).rng();
    let target = TargetFeatures {
        start: 5,
        xs: (0..3).map(|_| random_tensor(&mut rng, 20, 2, 1.0)).collect(),
    };
    let opts = InferenceOptions { source_len: 5, mode: RolloutMode::Mean, temperature: 1.0 };
    let clean = predict_target(&model, &target, opts, &mut SeedTree::new(1).rng()).unwrap();
    let dirty = predict_target(&poisoned, &target, opts, &mut SeedTree::new(1).rng()).unwrap();
    let sampled = |m: &LssaeModel| {
        let o = InferenceOptions { mode: RolloutMode::Sample, ..opts };
        predict_target(m, &target, o, &mut SeedTree::new(2).rng()).unwrap()
    };
    touched > 0 && clean == dirty && sampled(&model) == sampled(&poisoned)
}
