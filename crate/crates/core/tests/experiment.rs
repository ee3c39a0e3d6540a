//! The benchmark protocol and the ablation drivers on tiny runs.

use evodg::checkpoint::TrainedModel;
use evodg::config::TrainConfig;
use evodg::datasets::{gen_circle, SplitSpec};
use evodg::evaluation::{domain_accuracies, predict_target, InferenceOptions, TargetFeatures};
use evodg::experiment::{
    ablate_prior, ablate_ts, mean, prior_table_csv, run_seed, std_err, SeedOutcome, target_accuracies, ts_table_csv, Algorithm,
    Splits, STABILITY_TAIL,
};
use evodg::model::{PriorType, RolloutMode};
use evodg::rng::SeedTree;

fn tiny() -> (Splits, TrainConfig) {
    let seq = gen_circle(9, 20, 0).unwrap().sequence;
    let splits = Splits::new(&seq, SplitSpec::new(5, 2, 2).unwrap()).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        batch_size: 8,
        d_c: 4,
        d_w: 3,
        feature_width: 16,
        lstm_hidden: 8,
        lr_main: 1e-3,
        lr_dyn: 1e-4,
        ..TrainConfig::default()
    };
    (splits, cfg)
}

#[test]
fn summary_statistics_match_hand_values() {
    assert_eq!(mean(&[60.0, 70.0, 80.0]), 70.0);
    // sample sd 10, so the standard error is 10/√3
    assert!((std_err(&[60.0, 70.0, 80.0]) - 10.0 / 3f64.sqrt()).abs() < 1e-12);
    assert_eq!(std_err(&[5.0]), 0.0);
}

#[test]
fn algorithm_names_round_trip() {
    for a in [Algorithm::Lssae, Algorithm::Erm] {
        assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), a);
    }
    assert!("svm".parse::<Algorithm>().is_err());
}

#[test]
fn outcome_scores_the_best_validation_model() {
    let (splits, cfg) = tiny();
    let (run, out) = run_seed(Algorithm::Lssae, &splits, &cfg, 4, &mut |_| {}).unwrap();
    assert_eq!(out.seed, 4);
    assert_eq!(run.record.seed, 4);
    let best_epoch = out.best_epoch.unwrap();
    let best_val = run.record.best_val_acc.unwrap();
    assert!(run.record.epochs.iter().all(|e| e.val_acc.unwrap() <= best_val));
    assert_eq!(run.record.epochs[best_epoch - 1].val_acc, Some(best_val));

    // independent scoring of the selected model
    let TrainedModel::Lssae(m) = run.best.as_ref().unwrap() else { panic!("lssae run") };
    let target = TargetFeatures::from_sequence(&splits.target, splits.source.start()).unwrap();
    let opts = InferenceOptions { source_len: 5, mode: RolloutMode::Mean, temperature: 1.0 };
    let pred = predict_target(m, &target, opts, &mut SeedTree::new(99).rng()).unwrap();
    let accs = domain_accuracies(&pred, &splits.target).unwrap();
    assert_eq!(out.target_acc, accs.iter().sum::<f64>() / accs.len() as f64);

    let final_accs = target_accuracies(&run.model, &splits, RolloutMode::Mean, 1.0, 0).unwrap();
    assert_eq!(out.final_acc, mean(&final_accs));
    assert_eq!(out.tail_var, run.record.tail_val_variance(STABILITY_TAIL));
}

#[test]
fn erm_runs_through_the_same_protocol() {
    let (splits, cfg) = tiny();
    let (run, out) = run_seed(Algorithm::Erm, &splits, &cfg, 0, &mut |_| {}).unwrap();
    assert_eq!(run.model.algorithm(), "erm");
    assert!((0.0..=100.0).contains(&out.target_acc));
}

#[test]
fn prior_ablation_covers_every_variant() {
    let (splits, cfg) = tiny();
    let cfg = TrainConfig { epochs: 2, ..cfg };
    let mut seen = Vec::new();
    let rows = ablate_prior(&splits, &cfg, &[0, 1], &mut |label, seed, e| {
        if e.epoch == 2 {
            seen.push((label.to_string(), seed));
        }
    })
    .unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r.label.as_str()).collect();
    let expected: Vec<&str> = PriorType::ALL.iter().map(|p| p.as_str()).collect();
    assert_eq!(labels, expected);
    assert!(rows.iter().all(|r| r.outcomes.len() == 2));
    assert_eq!(seen.len(), 8);
    let table = prior_table_csv(&rows);
    assert_eq!(table.lines().count(), 5);
    assert!(ablate_prior(&splits, &cfg, &[], &mut |_, _, _| {}).is_err());
}

#[test]
fn ts_ablation_switches_only_the_penalty() {
    let (splits, cfg) = tiny();
    let rows = ablate_ts(&splits, &cfg, &[0], &mut |_, _, _| {}).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].label.as_str(), rows[1].label.as_str()), ("with", "without"));
    assert!(rows.iter().all(|r| r.outcomes[0].tail_var.is_some()));

    let same = |a: &SeedOutcome, b: &SeedOutcome| {
        a.target_acc == b.target_acc && a.final_acc == b.final_acc && a.tail_var == b.tail_var && a.best_epoch == b.best_epoch
    };
    let (_, with) = run_seed(Algorithm::Lssae, &splits, &cfg, 0, &mut |_| {}).unwrap();
    assert!(same(&rows[0].outcomes[0], &with));
    let off = TrainConfig { lambda_ts: 0.0, ..cfg.clone() };
    let (_, without) = run_seed(Algorithm::Lssae, &splits, &off, 0, &mut |_| {}).unwrap();
    assert!(same(&rows[1].outcomes[0], &without));

    let table = ts_table_csv(&rows);
    assert_eq!(table.lines().next(), Some("ts,var,acc,seeds"));
    assert!(ablate_ts(&splits, &off, &[0], &mut |_, _, _| {}).is_err());
}
