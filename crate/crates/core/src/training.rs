//! Optimization loops for LSSAE and the ERM baseline, and the aligned
//! per-domain minibatch sampler.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Graph;
use crate::config::TrainConfig;
use crate::datasets::DomainSequence;
use crate::distributions::cross_entropy;
use crate::error::{Error, Result};
use crate::evaluation::{domain_accuracies, predict_erm, predict_target, InferenceOptions, TargetFeatures};
use crate::model::{total_loss, AlignedBatch, ErmDims, ErmModel, LossTerms, LssaeModel, RolloutMode};
use crate::optim::Adam;
use crate::rng::{Rng, SeedTree};
use crate::tensor::Tensor;

/// Losses and validation accuracy of one epoch. Losses are step averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub terms: LossTerms,
    /// Mean accuracy (%) over the validation domains, if any were given.
    pub val_acc: Option<f64>,
}

/// Training history of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub algorithm: String,
    pub seed: u64,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock_secs: f64,
    /// Epoch of the best validation accuracy (first one on ties).
    pub best_epoch: Option<usize>,
    pub best_val_acc: Option<f64>,
}

impl RunRecord {
    fn new(algorithm: &str, cfg: &TrainConfig) -> Self {
        Self {
            algorithm: algorithm.to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            epochs: Vec::new(),
            wall_clock_secs: 0.0,
            best_epoch: None,
            best_val_acc: None,
        }
    }

    /// `epoch,recon,kl_c,kl_w,kl_v,ce,ts,total,val_acc`; `val_acc` is empty
    /// without validation domains.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,recon,kl_c,kl_w,kl_v,ce,ts,total,val_acc\n");
        for e in &self.epochs {
            let t = &e.terms;
            let val = e.val_acc.map_or(String::new(), |v| v.to_string());
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{val}",
                e.epoch, t.recon, t.kl_c, t.kl_w, t.kl_v, t.ce, t.ts, t.total
            )
            .expect("string write");
        }
        s
    }

    /// Population variance of the validation accuracy over the last `n`
    /// epochs.
    pub fn tail_val_variance(&self, n: usize) -> Option<f64> {
        let vals: Vec<f64> = self.epochs.iter().filter_map(|e| e.val_acc).collect();
        if vals.len() < n || n == 0 {
            return None;
        }
        let tail = &vals[vals.len() - n..];
        let mean = tail.iter().sum::<f64>() / n as f64;
        Some(tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64)
    }
}

/// Outcome of a training run: the final model, the best-validation model
/// (when validation domains were given and at least one epoch ran), and the
/// history.
#[derive(Debug, Clone)]
pub struct Run<M> {
    pub model: M,
    pub best: Option<M>,
    pub record: RunRecord,
}

impl<M> Run<M> {
    /// The best-validation model, or the final one without validation.
    pub fn selected(&self) -> &M {
        self.best.as_ref().unwrap_or(&self.model)
    }

    pub fn map<N>(self, f: impl Fn(M) -> N) -> Run<N> {
        Run {
            model: f(self.model),
            best: self.best.map(&f),
            record: self.record,
        }
    }
}

/// Index plan for one epoch: `plan[step][t]` lists the rows drawn from
/// domain `t`. Each domain contributes exactly `batch_size` rows per step,
/// for `ceil(max_t n_t / batch_size)` steps. Rows come from reshuffled
/// passes over the domain, so small domains are revisited.
pub fn aligned_batch_sampler(source: &DomainSequence, batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<Vec<usize>>>> {
    if batch_size == 0 {
        return Err(Error::Invalid("batch_size must be at least 1".into()));
    }
    if let Some(d) = source.domains().iter().find(|d| d.is_empty()) {
        return Err(Error::Invalid(format!("domain {} is empty", d.t)));
    }
    let largest = source.domains().iter().map(|d| d.len()).max().unwrap_or(0);
    let steps = largest.div_ceil(batch_size);
    let need = steps * batch_size;
    let streams: Vec<Vec<usize>> = source
        .domains()
        .iter()
        .map(|d| {
            let mut stream = Vec::with_capacity(need + d.len());
            while stream.len() < need {
                let mut perm: Vec<usize> = (0..d.len()).collect();
                perm.shuffle(rng);
                stream.extend(perm);
            }
            stream
        })
        .collect();
    Ok((0..steps)
        .map(|s| {
            streams
                .iter()
                .map(|st| st[s * batch_size..(s + 1) * batch_size].to_vec())
                .collect()
        })
        .collect())
}

/// Materializes one step of a sampler plan.
pub fn gather_batch(source: &DomainSequence, idx: &[Vec<usize>]) -> Result<AlignedBatch> {
    let xs = source
        .domains()
        .iter()
        .zip(idx)
        .map(|(d, i)| d.x.select_rows(i))
        .collect();
    let ys = source
        .domains()
        .iter()
        .zip(idx)
        .map(|(d, i)| i.iter().map(|&k| d.y[k]).collect())
        .collect();
    AlignedBatch::new(xs, ys)
}

fn check_terms(terms: &LossTerms, epoch: usize) -> Result<()> {
    let named = [
        ("reconstruction", terms.recon),
        ("KL(z^c)", terms.kl_c),
        ("KL(z^w)", terms.kl_w),
        ("KL(z^v)", terms.kl_v),
        ("cross-entropy", terms.ce),
        ("temporal smoothness", terms.ts),
        ("total", terms.total),
    ];
    for (name, v) in named {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss at epoch {epoch}")));
        }
    }
    for (name, v) in &named[1..4] {
        assert!(*v >= -1e-9, "{name} is negative ({v}) at epoch {epoch}");
    }
    Ok(())
}

fn mean_terms(sum: &LossTerms, n: usize) -> LossTerms {
    let k = 1.0 / n.max(1) as f64;
    LossTerms {
        recon: sum.recon * k,
        kl_c: sum.kl_c * k,
        kl_w: sum.kl_w * k,
        kl_v: sum.kl_v * k,
        ce: sum.ce * k,
        ts: sum.ts * k,
        total: sum.total * k,
    }
}

fn add_terms(acc: &mut LossTerms, t: &LossTerms) {
    acc.recon += t.recon;
    acc.kl_c += t.kl_c;
    acc.kl_w += t.kl_w;
    acc.kl_v += t.kl_v;
    acc.ce += t.ce;
    acc.ts += t.ts;
    acc.total += t.total;
}

fn mean_accuracy(pred: &[Vec<usize>], seq: &DomainSequence) -> Result<f64> {
    let acc = domain_accuracies(pred, seq)?;
    Ok(acc.iter().sum::<f64>() / acc.len() as f64)
}

/// Validation accuracy of an LSSAE model on domains following the source.
pub fn lssae_validation_accuracy(model: &LssaeModel, source: &DomainSequence, val: &DomainSequence, cfg: &TrainConfig) -> Result<f64> {
    let target = TargetFeatures::from_sequence(val, source.start())?;
    let opts = InferenceOptions {
        source_len: source.len(),
        mode: RolloutMode::Mean,
        temperature: cfg.gumbel_temperature,
    };
    let mut rng = SeedTree::new(cfg.seed).child("validation").rng();
    let pred = predict_target(model, &target, opts, &mut rng)?;
    mean_accuracy(&pred, val)
}

pub fn train_lssae(source: &DomainSequence, validation: Option<&DomainSequence>, cfg: &TrainConfig) -> Result<Run<LssaeModel>> {
    train_lssae_with(source, validation, cfg, &mut |_| {})
}

/// Trains LSSAE, calling `observer` after every epoch.
pub fn train_lssae_with(
    source: &DomainSequence,
    validation: Option<&DomainSequence>,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<Run<LssaeModel>> {
    cfg.validate()?;
    if source.len() < 2 {
        return Err(Error::Invalid(format!(
            "LSSAE needs at least 2 source domains, got {}",
            source.len()
        )));
    }
    let seeds = SeedTree::new(cfg.seed);
    let mut model = LssaeModel::new(cfg.model_dims(source.dim(), source.classes()), seeds)?;
    let obj = cfg.objective();
    let adam = Adam::new(vec![cfg.lr_main, cfg.lr_dyn]);
    let mut record = RunRecord::new("lssae", cfg);
    let mut best: Option<LssaeModel> = None;
    let started = Instant::now();
    let mut step: u64 = 0;
    for epoch in 1..=cfg.epochs {
        let mut batch_rng = seeds.child("batches").index(epoch as u64).rng();
        let plan = aligned_batch_sampler(source, cfg.batch_size, &mut batch_rng)?;
        let mut sum = LossTerms::default();
        for idx in &plan {
            let batch = gather_batch(source, idx)?;
            let mut noise = seeds.child("noise").index(step).rng();
            step += 1;
            let mut g = Graph::new();
            let lat = model.forward(&mut g, &batch, cfg.gumbel_temperature, &mut noise)?;
            let (loss, terms) = total_loss(&mut g, &lat, &obj)?;
            check_terms(&terms, epoch)?;
            g.backward(loss, model.params_mut())?;
            if cfg.grad_clip > 0.0 {
                model.params_mut().clip_grad_norm(cfg.grad_clip);
            }
            adam.step(model.params_mut())?;
            add_terms(&mut sum, &terms);
        }
        let val_acc = match validation {
            Some(val) => Some(lssae_validation_accuracy(&model, source, val, cfg)?),
            None => None,
        };
        if let Some(acc) = val_acc {
            if record.best_val_acc.is_none_or(|b| acc > b) {
                record.best_val_acc = Some(acc);
                record.best_epoch = Some(epoch);
                best = Some(model.clone());
            }
        }
        let rec = EpochRecord {
            epoch,
            terms: mean_terms(&sum, plan.len()),
            val_acc,
        };
        observer(&rec);
        record.epochs.push(rec);
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(Run { model, best, record })
}

pub fn train_erm(source: &DomainSequence, validation: Option<&DomainSequence>, cfg: &TrainConfig) -> Result<Run<ErmModel>> {
    train_erm_with(source, validation, cfg, &mut |_| {})
}

/// Trains the baseline on all source samples pooled together, in shuffled
/// batches of `batch_size × (number of source domains)` so that each step
/// sees as many samples as an LSSAE step.
pub fn train_erm_with(
    source: &DomainSequence,
    validation: Option<&DomainSequence>,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<Run<ErmModel>> {
    let (x, y) = source.pooled();
    let batch = cfg.batch_size * source.len();
    train_erm_pooled(&x, &y, source.classes(), batch, validation, cfg, observer)
}

/// ERM on an already pooled sample set. Domain membership plays no role.
pub fn train_erm_pooled(
    x: &Tensor,
    y: &[usize],
    classes: usize,
    batch: usize,
    validation: Option<&DomainSequence>,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<Run<ErmModel>> {
    cfg.validate()?;
    if x.rows() == 0 || x.rows() != y.len() {
        return Err(Error::Invalid(format!(
            "ERM needs matching non-empty samples and labels, got {} and {}",
            x.rows(),
            y.len()
        )));
    }
    let seeds = SeedTree::new(cfg.seed);
    let dims = ErmDims {
        data_dim: x.cols(),
        classes,
        d_c: cfg.d_c,
        feature_width: cfg.feature_width,
    };
    let mut model = ErmModel::new(dims, seeds)?;
    let adam = Adam::new(vec![cfg.lr_main]);
    let mut record = RunRecord::new("erm", cfg);
    let mut best = None;
    let started = Instant::now();
    let batch = batch.max(1);
    for epoch in 1..=cfg.epochs {
        let mut perm: Vec<usize> = (0..x.rows()).collect();
        perm.shuffle(&mut seeds.child("erm-batches").index(epoch as u64).rng());
        let mut sum = LossTerms::default();
        let chunks: Vec<&[usize]> = perm.chunks(batch).collect();
        for idx in &chunks {
            let labels: Vec<usize> = idx.iter().map(|&i| y[i]).collect();
            let mut g = Graph::new();
            let xv = g.constant(x.select_rows(idx));
            let logits = model.logits_in(&mut g, xv)?;
            let loss = cross_entropy(&mut g, logits, &labels)?;
            let ce = g.value(loss).item();
            if !ce.is_finite() {
                return Err(Error::NonFinite(format!("cross-entropy loss at epoch {epoch}")));
            }
            g.backward(loss, model.params_mut())?;
            if cfg.grad_clip > 0.0 {
                model.params_mut().clip_grad_norm(cfg.grad_clip);
            }
            adam.step(model.params_mut())?;
            sum.ce += ce;
            sum.total += ce;
        }
        let val_acc = match validation {
            Some(val) => {
                let pred = predict_erm(&model, &TargetFeatures::from_sequence(val, val.start())?)?;
                Some(mean_accuracy(&pred, val)?)
            }
            None => None,
        };
        if let Some(acc) = val_acc {
            if record.best_val_acc.is_none_or(|b| acc > b) {
                record.best_val_acc = Some(acc);
                record.best_epoch = Some(epoch);
                best = Some(model.clone());
            }
        }
        let rec = EpochRecord {
            epoch,
            terms: mean_terms(&sum, chunks.len()),
            val_acc,
        };
        observer(&rec);
        record.epochs.push(rec);
    }
    record.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(Run { model, best, record })
}
