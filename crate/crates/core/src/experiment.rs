//! The end-to-end benchmark protocol: split a sequence into source,
//! intermediate and target domains, train on the source, keep the model with
//! the best intermediate-domain accuracy, and score it on the targets. Also
//! the prior-type and temporal-smoothness ablations built on that protocol.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::TrainedModel;
use crate::config::TrainConfig;
use crate::datasets::{split_domains, DomainSequence, SplitSpec};
use crate::error::{Error, Result};
use crate::evaluation::{domain_accuracies, InferenceOptions, TargetFeatures};
use crate::model::{PriorType, RolloutMode};
use crate::rng::SeedTree;
use crate::training::{train_erm_with, train_lssae_with, EpochRecord, Run};

/// Epochs whose validation accuracy enters the stability measure.
pub const STABILITY_TAIL: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Lssae,
    Erm,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Lssae => "lssae",
            Algorithm::Erm => "erm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lssae" => Ok(Algorithm::Lssae),
            "erm" => Ok(Algorithm::Erm),
            _ => Err(Error::Invalid(format!("unknown algorithm {s:?} (expected lssae or erm)"))),
        }
    }
}

/// Source, intermediate (validation) and target domains of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub source: DomainSequence,
    pub validation: DomainSequence,
    pub target: DomainSequence,
}

impl Splits {
    pub fn new(seq: &DomainSequence, spec: SplitSpec) -> Result<Self> {
        let (source, validation, target) = split_domains(seq, spec)?;
        Ok(Self {
            source,
            validation,
            target,
        })
    }

    /// Target features without labels, stamped relative to the first source
    /// domain.
    pub fn target_features(&self) -> Result<TargetFeatures> {
        TargetFeatures::from_sequence(&self.target, self.source.start())
    }

    pub fn inference_options(&self, mode: RolloutMode, temperature: f64) -> InferenceOptions {
        InferenceOptions {
            source_len: self.source.len(),
            mode,
            temperature,
        }
    }
}

/// Trains either algorithm on the source domains, validating on the
/// intermediate ones after every epoch.
pub fn train_algorithm(
    algorithm: Algorithm,
    splits: &Splits,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<Run<TrainedModel>> {
    let validation = Some(&splits.validation);
    Ok(match algorithm {
        Algorithm::Lssae => {
            train_lssae_with(&splits.source, validation, cfg, observer)?.map(TrainedModel::Lssae)
        }
        Algorithm::Erm => {
            train_erm_with(&splits.source, validation, cfg, observer)?.map(TrainedModel::Erm)
        }
    })
}

/// Per-domain target accuracy (%) of a model. `seed` drives the latent
/// draws in `sample` mode and is irrelevant in `mean` mode.
pub fn target_accuracies(
    model: &TrainedModel,
    splits: &Splits,
    mode: RolloutMode,
    temperature: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = SeedTree::new(seed).child("inference").rng();
    let pred = model.predictor().predict(
        &splits.target_features()?,
        splits.inference_options(mode, temperature),
        &mut rng,
    )?;
    domain_accuracies(&pred, &splits.target)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Sample standard error of the mean; 0 for fewer than two values.
pub fn std_err(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (var / v.len() as f64).sqrt()
}

/// Summary of one training run under the benchmark protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Mean target accuracy of the best-validation model.
    pub target_acc: f64,
    /// Mean target accuracy of the model after the last epoch.
    pub final_acc: f64,
    /// Variance of the validation accuracy over the last epochs.
    pub tail_var: Option<f64>,
    pub best_epoch: Option<usize>,
    pub wall_clock_secs: f64,
}

/// Scores a finished run in `mean` inference mode.
pub fn outcome(run: &Run<TrainedModel>, splits: &Splits, cfg: &TrainConfig) -> Result<SeedOutcome> {
    let score = |m: &TrainedModel| {
        target_accuracies(m, splits, RolloutMode::Mean, cfg.gumbel_temperature, cfg.seed).map(|a| mean(&a))
    };
    Ok(SeedOutcome {
        seed: cfg.seed,
        target_acc: score(run.selected())?,
        final_acc: score(&run.model)?,
        tail_var: run.record.tail_val_variance(STABILITY_TAIL),
        best_epoch: run.record.best_epoch,
        wall_clock_secs: run.record.wall_clock_secs,
    })
}

/// Trains and scores one seed.
pub fn run_seed(
    algorithm: Algorithm,
    splits: &Splits,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(Run<TrainedModel>, SeedOutcome)> {
    let cfg = TrainConfig { seed, ..cfg.clone() };
    let run = train_algorithm(algorithm, splits, &cfg, observer)?;
    let out = outcome(&run, splits, &cfg)?;
    Ok((run, out))
}

/// Outcomes of one configuration over several seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub label: String,
    pub outcomes: Vec<SeedOutcome>,
}

impl VariantResult {
    pub fn target_accs(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.target_acc).collect()
    }

    pub fn final_accs(&self) -> Vec<f64> {
        self.outcomes.iter().map(|o| o.final_acc).collect()
    }

    pub fn tail_vars(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.tail_var).collect()
    }
}

/// Progress callback: variant label, seed, and the epoch just finished.
pub type Progress<'a> = dyn FnMut(&str, u64, &EpochRecord) + 'a;

fn run_variant(
    label: &str,
    algorithm: Algorithm,
    splits: &Splits,
    cfg: &TrainConfig,
    seeds: &[u64],
    progress: &mut Progress<'_>,
) -> Result<VariantResult> {
    let mut outcomes = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (_, out) = run_seed(algorithm, splits, cfg, seed, &mut |e| progress(label, seed, e))?;
        outcomes.push(out);
    }
    Ok(VariantResult {
        label: label.to_string(),
        outcomes,
    })
}

/// Trains LSSAE with every prior type, in [`PriorType::ALL`] order.
pub fn ablate_prior(
    splits: &Splits,
    cfg: &TrainConfig,
    seeds: &[u64],
    progress: &mut Progress<'_>,
) -> Result<Vec<VariantResult>> {
    if seeds.is_empty() {
        return Err(Error::Invalid("an ablation needs at least one seed".into()));
    }
    PriorType::ALL
        .into_iter()
        .map(|prior_type| {
            let cfg = TrainConfig {
                prior_type,
                ..cfg.clone()
            };
            run_variant(prior_type.as_str(), Algorithm::Lssae, splits, &cfg, seeds, progress)
        })
        .collect()
}

/// Trains LSSAE with the temporal smoothness penalty as configured
/// (`with`) and with it switched off (`without`).
pub fn ablate_ts(
    splits: &Splits,
    cfg: &TrainConfig,
    seeds: &[u64],
    progress: &mut Progress<'_>,
) -> Result<Vec<VariantResult>> {
    if seeds.is_empty() {
        return Err(Error::Invalid("an ablation needs at least one seed".into()));
    }
    if cfg.lambda_ts == 0.0 {
        return Err(Error::Invalid(
            "lambda_ts is 0, so the with/without comparison would be identical".into(),
        ));
    }
    let without = TrainConfig {
        lambda_ts: 0.0,
        ..cfg.clone()
    };
    Ok(vec![
        run_variant("with", Algorithm::Lssae, splits, cfg, seeds, progress)?,
        run_variant("without", Algorithm::Lssae, splits, &without, seeds, progress)?,
    ])
}

/// `prior_type,acc,std_err,seeds`: mean target accuracy of the
/// best-validation models, one row per variant.
pub fn prior_table_csv(rows: &[VariantResult]) -> String {
    let mut s = String::from("prior_type,acc,std_err,seeds\n");
    for r in rows {
        let accs = r.target_accs();
        writeln!(s, "{},{},{},{}", r.label, mean(&accs), std_err(&accs), accs.len()).expect("string write");
    }
    s
}

/// `ts,var,acc,seeds`: mean over seeds of the last-epochs validation
/// variance and of the final-epoch target accuracy.
pub fn ts_table_csv(rows: &[VariantResult]) -> String {
    let mut s = String::from("ts,var,acc,seeds\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{}",
            r.label,
            mean(&r.tail_vars()),
            mean(&r.final_accs()),
            r.outcomes.len()
        )
        .expect("string write");
    }
    s
}

/// `variant,seed,target_acc,final_acc,tail_var,best_epoch`: every run.
pub fn outcomes_csv(rows: &[VariantResult]) -> String {
    let mut s = String::from("variant,seed,target_acc,final_acc,tail_var,best_epoch\n");
    for r in rows {
        for o in &r.outcomes {
            let var = o.tail_var.map_or(String::new(), |v| v.to_string());
            let best = o.best_epoch.map_or(String::new(), |e| e.to_string());
            writeln!(s, "{},{},{},{},{var},{best}", r.label, o.seed, o.target_acc, o.final_acc)
                .expect("string write");
        }
    }
    s
}
