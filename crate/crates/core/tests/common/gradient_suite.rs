//! Finite-difference checks for every differentiable operation, each over
//! many random draws. Every check returns the worst relative error seen.

use evodg::autodiff::{Activation, Graph, Var};
use evodg::distributions::{
    categorical_kl, cross_entropy, gaussian_kl, gaussian_recon_loglik, gaussian_sample_with,
    gumbel_softmax_sample_with, CategoricalVars, GaussianVars,
};
use evodg::model::{total_loss, AlignedBatch, LssaeModel, ModelDims, Objective, PriorType};
use evodg::nn::{affine_forward, recurrent_step, Linear, LstmCell, StateVars};
use evodg::params::ParamSet;
use evodg::rng::{gumbel, standard_normal, SeedTree};
use rand::Rng as _;

use super::{
    central_difference, check_inputs, check_params, one_coord_per_tensor, param_gradients, project,
    random_tensor, FD_STEP, FD_TOLERANCE,
};

pub const DRAWS: usize = 100;

fn draw_rng(op: &str, i: usize) -> evodg::rng::Rng {
    SeedTree::new(2024).child(op).index(i as u64).rng()
}

pub fn affine() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("affine", i);
        let mut ps = ParamSet::new();
        let layer = Linear::new(&mut ps, "l", 4, 3, 0, &mut rng);
        // give the bias non-zero values too
        *ps.value_mut(layer.bias) = random_tensor(&mut rng, 1, 3, 1.0);
        let x = random_tensor(&mut rng, 5, 4, 2.0);
        let f = |g: &mut Graph, p: &ParamSet, v: &[Var]| {
            let y = affine_forward(g, p, v[0], &layer).unwrap();
            project(g, y, i as u64)
        };
        worst = worst.max(check_inputs(&ps, &[x.clone()], &f));
        let coords: Vec<_> = ps
            .ids()
            .flat_map(|id| (0..ps.value(id).len()).map(move |e| (id, e)))
            .collect();
        let fp = |g: &mut Graph, p: &ParamSet| {
            let xv = g.constant(x.clone());
            let y = affine_forward(g, p, xv, &layer).unwrap();
            project(g, y, i as u64)
        };
        worst = worst.max(check_params(&mut ps, &coords, &fp));
    }
    worst
}

pub fn activation(kind: Activation) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng(&format!("{kind:?}"), i);
        let x = random_tensor(&mut rng, 4, 5, 3.0);
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| {
            let y = g.activation(v[0], kind);
            project(g, y, i as u64)
        };
        worst = worst.max(check_inputs(&ParamSet::new(), &[x], &f));
    }
    worst
}

pub fn recurrent() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("lstm", i);
        let mut ps = ParamSet::new();
        let cell = LstmCell::new(&mut ps, "cell", 3, 2, 0, &mut rng);
        *ps.value_mut(cell.bias) = random_tensor(&mut rng, 1, 8, 0.5);
        let x = random_tensor(&mut rng, 2, 3, 1.5);
        let h = random_tensor(&mut rng, 2, 2, 1.0);
        let c = random_tensor(&mut rng, 2, 2, 1.0);
        let run = |g: &mut Graph, p: &ParamSet, x: Var, h: Var, c: Var| {
            let s = recurrent_step(g, p, x, StateVars { hidden: h, cell: c }, &cell).unwrap();
            let a = project(g, s.hidden, i as u64);
            let b = project(g, s.cell, i as u64 + 7);
            g.add(a, b).unwrap()
        };
        let f = |g: &mut Graph, p: &ParamSet, v: &[Var]| run(g, p, v[0], v[1], v[2]);
        worst = worst.max(check_inputs(&ps, &[x.clone(), h.clone(), c.clone()], &f));
        let coords: Vec<_> = ps
            .ids()
            .flat_map(|id| (0..ps.value(id).len()).map(move |e| (id, e)))
            .collect();
        let fp = |g: &mut Graph, p: &ParamSet| {
            let (xv, hv, cv) = (g.constant(x.clone()), g.constant(h.clone()), g.constant(c.clone()));
            run(g, p, xv, hv, cv)
        };
        worst = worst.max(check_params(&mut ps, &coords, &fp));
    }
    worst
}

pub fn gaussian_kl_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("gaussian_kl", i);
        let ins = vec![
            random_tensor(&mut rng, 3, 4, 2.0),
            random_tensor(&mut rng, 3, 4, 2.0),
            random_tensor(&mut rng, 3, 4, 2.0),
            random_tensor(&mut rng, 3, 4, 2.0),
        ];
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| {
            let q = GaussianVars::new(g, v[0], v[1]).unwrap();
            let p = GaussianVars::new(g, v[2], v[3]).unwrap();
            let kl = gaussian_kl(g, &q, &p).unwrap();
            project(g, kl, i as u64)
        };
        worst = worst.max(check_inputs(&ParamSet::new(), &ins, &f));
    }
    worst
}

pub fn categorical_kl_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("categorical_kl", i);
        let ins = vec![random_tensor(&mut rng, 3, 4, 3.0), random_tensor(&mut rng, 3, 4, 3.0)];
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| {
            let kl = categorical_kl(g, &CategoricalVars { logits: v[0] }, &CategoricalVars { logits: v[1] }).unwrap();
            project(g, kl, i as u64)
        };
        worst = worst.max(check_inputs(&ParamSet::new(), &ins, &f));
    }
    worst
}

pub fn gaussian_sample_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("gaussian_sample", i);
        let ins = vec![random_tensor(&mut rng, 3, 4, 2.0), random_tensor(&mut rng, 3, 4, 2.0)];
        let noise = standard_normal(&mut rng, 3, 4);
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| {
            let d = GaussianVars::new(g, v[0], v[1]).unwrap();
            let z = gaussian_sample_with(g, &d, noise.clone()).unwrap();
            project(g, z, i as u64)
        };
        worst = worst.max(check_inputs(&ParamSet::new(), &ins, &f));
    }
    worst
}

pub fn gumbel_softmax_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("gumbel_softmax", i);
        let logits = random_tensor(&mut rng, 3, 4, 2.0);
        let noise = gumbel(&mut rng, 3, 4);
        let temperature = 0.5 + 1.5 * rng.random::<f64>();
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| {
            let z = gumbel_softmax_sample_with(g, &CategoricalVars { logits: v[0] }, temperature, noise.clone()).unwrap();
            project(g, z, i as u64)
        };
        worst = worst.max(check_inputs(&ParamSet::new(), &[logits], &f));
    }
    worst
}

pub fn recon_loglik_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("recon", i);
        let ins = vec![random_tensor(&mut rng, 4, 3, 2.0), random_tensor(&mut rng, 4, 3, 2.0)];
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| gaussian_recon_loglik(g, v[0], v[1]).unwrap();
        worst = worst.max(check_inputs(&ParamSet::new(), &ins, &f));
    }
    worst
}

pub fn cross_entropy_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let mut rng = draw_rng("cross_entropy", i);
        let logits = random_tensor(&mut rng, 5, 3, 3.0);
        let labels: Vec<usize> = (0..5).map(|_| rng.random_range(0..3)).collect();
        let f = |g: &mut Graph, _: &ParamSet, v: &[Var]| cross_entropy(g, v[0], &labels).unwrap();
        worst = worst.max(check_inputs(&ParamSet::new(), &[logits], &f));
    }
    worst
}

/// `d_c = d_w = 3`, `K_v = 2`, `T = 3`, batch 4, small hidden widths.
pub fn miniature_dims(prior_type: PriorType) -> ModelDims {
    ModelDims {
        data_dim: 2,
        classes: 2,
        d_c: 3,
        d_w: 3,
        k_v: 2,
        feature_width: 5,
        lstm_hidden: 4,
        decoder_widths: vec![4, 6],
        prior_type,
    }
}

pub fn miniature_batch(rng: &mut evodg::rng::Rng) -> AlignedBatch {
    let xs = (0..3).map(|_| random_tensor(rng, 4, 2, 1.0)).collect();
    let ys = (0..3).map(|_| (0..4).map(|_| rng.random_range(0..2)).collect()).collect();
    AlignedBatch::new(xs, ys).unwrap()
}

/// End-to-end gradient of the total loss with respect to one random entry
/// of every parameter tensor, cycling through the four prior variants. The
/// smoothness hinge is made active with a small `alpha`.
pub fn total_loss_grad() -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..DRAWS {
        let prior = PriorType::ALL[i % 4];
        let seed = SeedTree::new(77).index(i as u64);
        let mut model = LssaeModel::new(miniature_dims(prior), seed).unwrap();
        let mut rng = seed.child("draw").rng();
        // non-zero biases so every path is exercised
        let ids: Vec<_> = model.params().ids().collect();
        for id in ids {
            if model.params().param(id).name.ends_with(".bias") {
                let [r, c] = model.params().value(id).shape();
                *model.params_mut().value_mut(id) = random_tensor(&mut rng, r, c, 0.3);
            }
        }
        let batch = miniature_batch(&mut rng);
        let coords = one_coord_per_tensor(model.params(), &mut rng);
        let obj = Objective {
            lambda1: 1.0,
            lambda2: 1.3,
            lambda3: 0.7,
            alpha: 1e-3,
            lambda_ts: 1.0,
        };
        let layout = model.clone();
        let noise_seed = seed.child("noise");
        let f = |g: &mut Graph, p: &ParamSet| {
            let mut m = layout.clone();
            *m.params_mut() = p.clone();
            let lat = m.forward(g, &batch, 1.0, &mut noise_seed.rng()).unwrap();
            total_loss(g, &lat, &obj).unwrap().0
        };
        let pairs = param_gradients(model.params_mut(), &coords, &f);
        for (&(id, e), (a, n)) in coords.iter().zip(pairs) {
            let mut err = loss_rel_err(a, n);
            if err >= FD_TOLERANCE {
                // A ReLU kink within one step of the point biases the
                // central difference; a correct gradient still matches a
                // smaller step.
                let fine = central_difference(model.params_mut(), id, e, FD_STEP / 10.0, &f);
                err = err.min(loss_rel_err(a, fine));
            }
            worst = worst.max(err);
        }
    }
    worst
}

/// Relative error with a floor suited to a loss of magnitude ~10, where
/// round-off in the central difference is ~1e-10.
fn loss_rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

/// Every check by name.
pub fn all() -> Vec<(&'static str, f64)> {
    vec![
        ("affine", affine()),
        ("relu", activation(Activation::Relu)),
        ("leaky_relu(0.2)", activation(Activation::LeakyRelu(0.2))),
        ("sigmoid", activation(Activation::Sigmoid)),
        ("tanh", activation(Activation::Tanh)),
        ("recurrent_step", recurrent()),
        ("gaussian_kl", gaussian_kl_grad()),
        ("categorical_kl", categorical_kl_grad()),
        ("gaussian_sample", gaussian_sample_grad()),
        ("gumbel_softmax_sample", gumbel_softmax_grad()),
        ("gaussian_recon_loglik", recon_loglik_grad()),
        ("cross_entropy", cross_entropy_grad()),
        ("total_loss", total_loss_grad()),
    ]
}
