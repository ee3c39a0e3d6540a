//! Inference on unseen domains, accuracy tables, decision-boundary rasters,
//! and sequence reconstruction/generation.
//!
//! Target-domain inference only ever sees [`TargetFeatures`], which carries
//! no labels, and only runs `E^c`, the `z^v` prior and the classifier.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datasets::DomainSequence;
use crate::error::{Error, Result};
use crate::model::{ErmModel, LssaeModel, RolloutMode};
use crate::rng::{standard_normal, Rng};
use crate::tensor::Tensor;

/// Unlabeled features of consecutive domains starting at time stamp `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetFeatures {
    pub start: usize,
    pub xs: Vec<Tensor>,
}

impl TargetFeatures {
    /// Drops the labels of a sequence. Stamps are counted from `origin`, the
    /// stamp of the first source domain.
    pub fn from_sequence(seq: &DomainSequence, origin: usize) -> Result<Self> {
        let start = seq.start().checked_sub(origin).ok_or_else(|| {
            Error::Invalid(format!(
                "domains start at stamp {} before the sequence origin {origin}",
                seq.start()
            ))
        })?;
        Ok(Self {
            start,
            xs: seq.domains().iter().map(|d| d.x.clone()).collect(),
        })
    }

    pub fn single(t: usize, x: Tensor) -> Self {
        Self { start: t, xs: vec![x] }
    }
}

/// A trained classifier of either kind.
#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Lssae(&'a LssaeModel),
    Erm(&'a ErmModel),
}

/// Inference settings for LSSAE targets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    /// Number of source domains; targets must not start before it.
    pub source_len: usize,
    pub mode: RolloutMode,
    pub temperature: f64,
}

/// The `z^v` latent for every stamp `0..steps`, from one prior rollout
/// starting at `z_0^v = 0`. Width 0 for models without a `z^v` track.
pub fn z_v_sequence(model: &LssaeModel, steps: usize, mode: RolloutMode, temperature: f64, rng: &mut Rng) -> Result<Vec<Tensor>> {
    if !model.dims().prior_type.has_v() {
        return Ok(vec![Tensor::zeros(1, 0); steps]);
    }
    Ok(model.prior_rollout_v(steps, mode, temperature, rng)?.samples)
}

/// Predicted classes for every sample of every target domain.
///
/// The `z^v` prior is rolled forward from the start of the sequence through
/// the last target stamp; domain `t` uses the latent at stamp `t`. `z^c` is
/// the posterior mean of `E^c`.
pub fn predict_target(
    model: &LssaeModel,
    target: &TargetFeatures,
    opts: InferenceOptions,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    if target.start < opts.source_len {
        return Err(Error::Invalid(format!(
            "target stamp {} lies inside the {} source domains",
            target.start, opts.source_len
        )));
    }
    let steps = target.start + target.xs.len();
    let z_v = z_v_sequence(model, steps, opts.mode, opts.temperature, rng)?;
    target
        .xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let z_c = model.static_means(x)?;
            let logits = model.classify(&z_c, &z_v[target.start + i])?;
            Ok(logits.argmax_rows())
        })
        .collect()
}

/// ERM predictions; the baseline has no temporal input.
pub fn predict_erm(model: &ErmModel, target: &TargetFeatures) -> Result<Vec<Vec<usize>>> {
    target.xs.iter().map(|x| model.predict(x)).collect()
}

impl Predictor<'_> {
    pub fn predict(&self, target: &TargetFeatures, opts: InferenceOptions, rng: &mut Rng) -> Result<Vec<Vec<usize>>> {
        match self {
            Predictor::Lssae(m) => predict_target(m, target, opts, rng),
            Predictor::Erm(m) => predict_erm(m, target),
        }
    }
}

/// Percentage of matching entries.
pub fn accuracy(pred: &[usize], labels: &[usize]) -> Result<f64> {
    if pred.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::Invalid("accuracy of an empty domain".into()));
    }
    let hits = pred.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// Per-domain accuracies of one prediction set.
pub fn domain_accuracies(pred: &[Vec<usize>], seq: &DomainSequence) -> Result<Vec<f64>> {
    if pred.len() != seq.len() {
        return Err(Error::Shape(format!(
            "predictions for {} domains, sequence has {}",
            pred.len(),
            seq.len()
        )));
    }
    pred.iter()
        .zip(seq.domains())
        .map(|(p, d)| accuracy(p, &d.y))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub seed: u64,
    pub domain_t: usize,
    pub accuracy: f64,
}

/// Per-domain accuracy over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub algorithm: String,
    pub rows: Vec<AccuracyRow>,
    pub stamps: Vec<usize>,
    /// Mean over seeds, per domain.
    pub domain_mean: Vec<f64>,
    /// Standard error over seeds, per domain.
    pub domain_se: Vec<f64>,
    /// Arithmetic mean of `domain_mean`.
    pub mean: f64,
    /// Standard error over seeds of the per-seed mean accuracy.
    pub se: f64,
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Builds the table from `(seed, per-domain predictions)` pairs.
pub fn accuracy_table(algorithm: &str, runs: &[(u64, Vec<Vec<usize>>)], target: &DomainSequence) -> Result<AccuracyTable> {
    if runs.is_empty() {
        return Err(Error::Invalid("accuracy table needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    let mut per_seed: Vec<Vec<f64>> = Vec::new();
    for (seed, pred) in runs {
        let acc = domain_accuracies(pred, target)?;
        for (d, &a) in target.domains().iter().zip(&acc) {
            rows.push(AccuracyRow {
                seed: *seed,
                domain_t: d.t,
                accuracy: a,
            });
        }
        per_seed.push(acc);
    }
    let n_dom = target.len();
    let (mut domain_mean, mut domain_se) = (Vec::new(), Vec::new());
    for k in 0..n_dom {
        let col: Vec<f64> = per_seed.iter().map(|s| s[k]).collect();
        let (m, se) = mean_se(&col);
        domain_mean.push(m);
        domain_se.push(se);
    }
    let mean = domain_mean.iter().sum::<f64>() / n_dom as f64;
    let seed_means: Vec<f64> = per_seed
        .iter()
        .map(|s| s.iter().sum::<f64>() / n_dom as f64)
        .collect();
    let se = mean_se(&seed_means).1;
    Ok(AccuracyTable {
        algorithm: algorithm.to_string(),
        rows,
        stamps: target.domains().iter().map(|d| d.t).collect(),
        domain_mean,
        domain_se,
        mean,
        se,
    })
}

impl AccuracyTable {
    /// `algorithm,seed,domain_t,accuracy`, one row per (seed, domain).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("algorithm,seed,domain_t,accuracy\n");
        for r in &self.rows {
            writeln!(s, "{},{},{},{}", self.algorithm, r.seed, r.domain_t, r.accuracy).expect("string write");
        }
        s
    }

    /// `algorithm,domain_t,mean,std_err`, with a final `all` row.
    pub fn summary_csv(&self) -> String {
        let mut s = String::from("algorithm,domain_t,mean,std_err\n");
        for ((t, m), se) in self.stamps.iter().zip(&self.domain_mean).zip(&self.domain_se) {
            writeln!(s, "{},{t},{m},{se}", self.algorithm).expect("string write");
        }
        writeln!(s, "{},all,{},{}", self.algorithm, self.mean, self.se).expect("string write");
        s
    }
}

/// Axis-aligned rectangle of the 2-D feature plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            x_max: 1.0,
            y_min: 0.0,
            y_max: 1.0,
        }
    }
}

/// Predicted class at every cell center of a grid, for one time stamp.
/// Cell `(i, j)` (column `i`, row `j`) is stored at `j·nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryRaster {
    pub bounds: Bounds,
    pub nx: usize,
    pub ny: usize,
    pub t: usize,
    pub classes: usize,
    pub cells: Vec<usize>,
}

/// Centers of an `nx × ny` grid, row by row from `y_min`.
pub fn grid_points(bounds: Bounds, nx: usize, ny: usize) -> Tensor {
    let mut pts = Tensor::zeros(nx * ny, 2);
    let dx = (bounds.x_max - bounds.x_min) / nx as f64;
    let dy = (bounds.y_max - bounds.y_min) / ny as f64;
    for j in 0..ny {
        for i in 0..nx {
            pts.set(j * nx + i, 0, bounds.x_min + (i as f64 + 0.5) * dx);
            pts.set(j * nx + i, 1, bounds.y_min + (j as f64 + 0.5) * dy);
        }
    }
    pts
}

/// Evaluates the predictor in `mean` mode on every cell center.
pub fn boundary_raster(
    predictor: Predictor<'_>,
    t: usize,
    source_len: usize,
    bounds: Bounds,
    nx: usize,
    ny: usize,
) -> Result<BoundaryRaster> {
    let (dim, classes) = match predictor {
        Predictor::Lssae(m) => (m.dims().data_dim, m.dims().classes),
        Predictor::Erm(m) => (m.dims().data_dim, m.dims().classes),
    };
    if dim != 2 {
        return Err(Error::Invalid(format!(
            "decision-boundary rasters need 2-D features, the model has {dim}"
        )));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::Invalid("raster resolution must be positive".into()));
    }
    let opts = InferenceOptions {
        source_len,
        mode: RolloutMode::Mean,
        temperature: 1.0,
    };
    let pts = grid_points(bounds, nx, ny);
    // Mean mode draws nothing, so the rng is never consulted.
    let mut rng = crate::rng::SeedTree::new(0).rng();
    let cells = predictor
        .predict(&TargetFeatures::single(t, pts), opts, &mut rng)?
        .remove(0);
    Ok(BoundaryRaster {
        bounds,
        nx,
        ny,
        t,
        classes,
        cells,
    })
}

impl BoundaryRaster {
    pub fn get(&self, i: usize, j: usize) -> usize {
        self.cells[j * self.nx + i]
    }

    /// `x,y,class` for every cell center.
    pub fn to_csv(&self) -> String {
        let pts = grid_points(self.bounds, self.nx, self.ny);
        let mut s = String::from("x,y,class\n");
        for (k, c) in self.cells.iter().enumerate() {
            writeln!(s, "{},{},{c}", pts.get(k, 0), pts.get(k, 1)).expect("string write");
        }
        s
    }

    /// Binary 8-bit PGM with `y` increasing upward; class `k` maps to gray
    /// `255·k/(C−1)`.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        let denom = (self.classes.max(2) - 1) as f64;
        for j in (0..self.ny).rev() {
            for i in 0..self.nx {
                out.push((255.0 * self.get(i, j) as f64 / denom).round() as u8);
            }
        }
        out
    }
}

/// Reconstructs every domain through posterior means. Domains are aligned row
/// by row, cycling through the samples of smaller domains.
pub fn reconstruct_sequence(model: &LssaeModel, seq: &DomainSequence) -> Result<Vec<Tensor>> {
    let b = seq.domains().iter().map(|d| d.len()).max().unwrap_or(0);
    let xs: Vec<Tensor> = seq
        .domains()
        .iter()
        .map(|d| {
            let idx: Vec<usize> = (0..b).map(|i| i % d.len()).collect();
            d.x.select_rows(&idx)
        })
        .collect();
    let out = model.reconstruct_aligned(&xs)?;
    Ok(out
        .into_iter()
        .zip(seq.domains())
        .map(|(x, d)| x.slice_rows(0, d.len()))
        .collect())
}

/// Mean squared error per feature between a sequence and its reconstruction.
pub fn reconstruction_mse(seq: &DomainSequence, recon: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for (d, r) in seq.domains().iter().zip(recon) {
        if r.shape() != d.x.shape() {
            return Err(Error::Shape(format!(
                "reconstruction {:?} for domain {:?}",
                r.shape(),
                d.x.shape()
            )));
        }
        total += d.x.data().iter().zip(r.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += d.x.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Which latent is held fixed during generation.
#[derive(Debug, Clone, PartialEq)]
pub enum Generation {
    /// Hold these `z^c` rows and roll `z^w` forward through time.
    FixedStatic(Tensor),
    /// Draw `n` values of `z^c` from `N(0, I)` once and hold them while
    /// rolling `z^w` forward.
    PriorStatic(usize),
    /// Hold `z^w` at its first-stamp value and draw fresh `z^c ~ N(0, I)`
    /// (`n` rows) at every stamp.
    FixedDynamic(usize),
}

/// Decoded samples for stamps `0..t_total`.
pub fn generate_sequence(
    model: &LssaeModel,
    how: &Generation,
    t_total: usize,
    mode: RolloutMode,
    rng: &mut Rng,
) -> Result<Vec<Tensor>> {
    let d_c = model.dims().d_c;
    let rollout = model.prior_rollout_w(t_total, mode, rng)?;
    let broadcast = |z: &Tensor, n: usize| -> Tensor {
        let idx = vec![0; n];
        z.select_rows(&idx)
    };
    match how {
        Generation::FixedStatic(z_c) => rollout
            .samples
            .iter()
            .map(|z_w| model.decode(z_c, &broadcast(z_w, z_c.rows())))
            .collect(),
        Generation::PriorStatic(n) => {
            let z_c = standard_normal(rng, *n, d_c);
            rollout
                .samples
                .iter()
                .map(|z_w| model.decode(&z_c, &broadcast(z_w, *n)))
                .collect()
        }
        Generation::FixedDynamic(n) => {
            let first = rollout
                .samples
                .first()
                .ok_or_else(|| Error::Invalid("generation needs at least one stamp".into()))?;
            let z_w = broadcast(first, *n);
            (0..t_total)
                .map(|_| {
                    let z_c = standard_normal(rng, *n, d_c);
                    model.decode(&z_c, &z_w)
                })
                .collect()
        }
    }
}
