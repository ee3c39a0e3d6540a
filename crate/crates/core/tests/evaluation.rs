//! Target inference, accuracy tables, rasters and sequence generation.

mod common;

use evodg::datasets::{Domain, DomainSequence};
use evodg::evaluation::{
    accuracy, accuracy_table, boundary_raster, domain_accuracies, generate_sequence, grid_points, predict_erm,
    predict_target, reconstruct_sequence, reconstruction_mse, Bounds, Generation, InferenceOptions, Predictor,
    TargetFeatures,
};
use evodg::model::{ErmDims, ErmModel, LssaeModel, ModelDims, PriorType, RolloutMode};
use evodg::rng::SeedTree;
use evodg::Tensor;

fn dims(prior_type: PriorType, k_v: usize) -> ModelDims {
    ModelDims { feature_width: 16, lstm_hidden: 8, k_v, prior_type, ..ModelDims::new(2, 2) }
}

fn lssae(seed: u64) -> LssaeModel {
    LssaeModel::new(dims(PriorType::Categorical, 2), SeedTree::new(seed)).unwrap()
}

fn targets(start: usize, n: usize, seed: u64) -> TargetFeatures {
    let mut rng = SeedTree::new(seed).rng();
    TargetFeatures { start, xs: (0..n).map(|_| common::random_tensor(&mut rng, 30, 2, 1.0)).collect() }
}

fn opts(mode: RolloutMode) -> InferenceOptions {
    InferenceOptions { source_len: 4, mode, temperature: 1.0 }
}

#[test]
fn mean_mode_ignores_the_rng() {
    let m = lssae(1);
    let t = targets(4, 3, 1);
    let a = predict_target(&m, &t, opts(RolloutMode::Mean), &mut SeedTree::new(1).rng()).unwrap();
    let b = predict_target(&m, &t, opts(RolloutMode::Mean), &mut SeedTree::new(99).rng()).unwrap();
    assert_eq!(a, b);
    let c = predict_target(&m, &t, opts(RolloutMode::Sample), &mut SeedTree::new(5).rng()).unwrap();
    let d = predict_target(&m, &t, opts(RolloutMode::Sample), &mut SeedTree::new(5).rng()).unwrap();
    assert_eq!(c, d);
}

#[test]
fn targets_must_follow_the_source() {
    let m = lssae(2);
    assert!(predict_target(&m, &targets(3, 2, 2), opts(RolloutMode::Mean), &mut SeedTree::new(1).rng()).is_err());
}

#[test]
fn zero_classifier_predicts_the_lowest_class() {
    let mut m = lssae(3);
    for name in ["classifier.weight", "classifier.bias"] {
        let id = m.params().find(name).unwrap();
        m.params_mut().value_mut(id).fill(0.0);
    }
    let pred = predict_target(&m, &targets(4, 2, 3), opts(RolloutMode::Mean), &mut SeedTree::new(1).rng()).unwrap();
    assert!(pred.iter().flatten().all(|&c| c == 0));
}

#[test]
fn a_single_category_is_equivalent_to_no_z_v_track() {
    let one = LssaeModel::new(dims(PriorType::Categorical, 1), SeedTree::new(4)).unwrap();
    let mut none = LssaeModel::new(dims(PriorType::None, 1), SeedTree::new(5)).unwrap();
    // share E^c; fold the constant z^v = [1] column into the bias
    let names: Vec<String> = none.params().iter().map(|p| p.name.clone()).collect();
    for name in names.iter().filter(|n| n.starts_with("enc_c")) {
        let v = one.params().value(one.params().find(name).unwrap()).clone();
        let id = none.params().find(name).unwrap();
        *none.params_mut().value_mut(id) = v;
    }
    let w = one.params().value(one.params().find("classifier.weight").unwrap()).clone();
    let b = one.params().value(one.params().find("classifier.bias").unwrap()).clone();
    let d_c = none.dims().d_c;
    let id = none.params().find("classifier.weight").unwrap();
    *none.params_mut().value_mut(id) = w.slice_rows(0, d_c);
    let id = none.params().find("classifier.bias").unwrap();
    *none.params_mut().value_mut(id) = b.zip_map(&w.slice_rows(d_c, d_c + 1), |x, y| x + y);
    let t = targets(4, 3, 4);
    for mode in [RolloutMode::Mean, RolloutMode::Sample] {
        let a = predict_target(&one, &t, opts(mode), &mut SeedTree::new(1).rng()).unwrap();
        let b = predict_target(&none, &t, opts(mode), &mut SeedTree::new(1).rng()).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn target_path_never_uses_labels_or_the_label_encoder() {
    assert!(common::target_path_ignores_label_encoder());
}

fn labeled(start: usize, labels: &[Vec<usize>]) -> DomainSequence {
    let domains = labels
        .iter()
        .enumerate()
        .map(|(i, y)| Domain { t: start + i, x: Tensor::zeros(y.len(), 2), y: y.clone() })
        .collect();
    DomainSequence::new(domains, 2).unwrap()
}

#[test]
fn accuracy_examples() {
    let seq = labeled(10, &[vec![0, 1, 1, 1], vec![0, 0, 0, 1, 1]]);
    let perfect: Vec<Vec<usize>> = seq.domains().iter().map(|d| d.y.clone()).collect();
    assert_eq!(domain_accuracies(&perfect, &seq).unwrap(), vec![100.0, 100.0]);
    // a constant predictor scores the rate of its class
    let ones: Vec<Vec<usize>> = seq.domains().iter().map(|d| vec![1; d.len()]).collect();
    assert_eq!(domain_accuracies(&ones, &seq).unwrap(), vec![75.0, 40.0]);
    assert!(accuracy(&[0, 1], &[0]).is_err());
    assert!(domain_accuracies(&ones[..1], &seq).is_err());
}

#[test]
fn accuracy_table_statistics() {
    let seq = labeled(20, &[vec![1; 10], vec![1; 10], vec![1; 10]]);
    let pred = |hits: [usize; 3]| -> Vec<Vec<usize>> {
        hits.iter().map(|&h| (0..10).map(|i| usize::from(i < h)).collect()).collect()
    };
    let table = accuracy_table("lssae", &[(0, pred([5, 7, 9])), (1, pred([5, 7, 9]))], &seq).unwrap();
    assert_eq!(table.domain_mean, vec![50.0, 70.0, 90.0]);
    assert!((table.mean - 70.0).abs() < 1e-12);
    assert_eq!(table.se, 0.0);
    assert_eq!(table.stamps, vec![20, 21, 22]);
    let table = accuracy_table("erm", &[(0, pred([5, 5, 5])), (1, pred([7, 7, 7])), (2, pred([9, 9, 9]))], &seq).unwrap();
    assert!((table.mean - 70.0).abs() < 1e-12);
    // seed means 50, 70, 90: sample sd 20, standard error 20/√3
    assert!((table.se - 20.0 / 3f64.sqrt()).abs() < 1e-12);
    let recomputed = table.domain_mean.iter().sum::<f64>() / 3.0;
    assert!((recomputed - table.mean).abs() < 1e-12);
    let csv = table.to_csv();
    assert!(csv.starts_with("algorithm,seed,domain_t,accuracy\n"));
    assert_eq!(csv.lines().count(), 1 + 9);
    assert!(table.summary_csv().lines().last().unwrap().starts_with("erm,all,"));
    assert!(accuracy_table("erm", &[], &seq).is_err());
}

#[test]
fn raster_cells_match_pointwise_predictions() {
    let m = lssae(6);
    let bounds = Bounds { x_min: -0.5, x_max: 1.5, y_min: -1.0, y_max: 2.0 };
    let raster = boundary_raster(Predictor::Lssae(&m), 6, 4, bounds, 9, 7).unwrap();
    assert_eq!(raster.cells.len(), 63);
    let pts = grid_points(bounds, 9, 7);
    for j in 0..7 {
        for i in 0..9 {
            let p = pts.slice_rows(j * 9 + i, j * 9 + i + 1);
            let single = predict_target(&m, &TargetFeatures::single(6, p), opts(RolloutMode::Mean), &mut SeedTree::new(0).rng())
                .unwrap();
            assert_eq!(single[0][0], raster.get(i, j));
        }
    }
    let pgm = raster.to_pgm();
    assert!(pgm.starts_with(b"P5\n9 7\n255\n"));
    assert_eq!(pgm.len(), b"P5\n9 7\n255\n".len() + 63);
    assert_eq!(raster.to_csv().lines().count(), 64);
}

#[test]
fn default_raster_resolution() {
    let m = lssae(7);
    let raster = boundary_raster(Predictor::Lssae(&m), 4, 4, Bounds::default(), 200, 200).unwrap();
    assert_eq!(raster.cells.len(), 40_000);
    assert!(raster.cells.iter().all(|&c| c < 2));
}

#[test]
fn erm_rasters_do_not_depend_on_the_stamp() {
    let erm = ErmModel::new(ErmDims { data_dim: 2, classes: 2, d_c: 4, feature_width: 16 }, SeedTree::new(8)).unwrap();
    let a = boundary_raster(Predictor::Erm(&erm), 5, 4, Bounds::default(), 20, 20).unwrap();
    let b = boundary_raster(Predictor::Erm(&erm), 12, 4, Bounds::default(), 20, 20).unwrap();
    assert_eq!(a.cells, b.cells);
    let t = targets(4, 2, 8);
    let direct = predict_erm(&erm, &t).unwrap();
    assert_eq!(direct.len(), 2);
}

#[test]
fn rasters_need_two_dimensional_features() {
    let m = LssaeModel::new(ModelDims { data_dim: 3, ..dims(PriorType::Categorical, 2) }, SeedTree::new(9)).unwrap();
    assert!(boundary_raster(Predictor::Lssae(&m), 4, 4, Bounds::default(), 10, 10).is_err());
}

#[test]
fn reconstruction_keeps_domain_shapes() {
    let m = lssae(10);
    let mut rng = SeedTree::new(10).rng();
    let domains = [5usize, 8, 3]
        .iter()
        .enumerate()
        .map(|(t, &n)| Domain { t, x: common::random_tensor(&mut rng, n, 2, 1.0), y: vec![0; n] })
        .collect();
    let seq = DomainSequence::new(domains, 2).unwrap();
    let recon = reconstruct_sequence(&m, &seq).unwrap();
    let shapes: Vec<_> = recon.iter().map(Tensor::shape).collect();
    assert_eq!(shapes, vec![[5, 2], [8, 2], [3, 2]]);
    assert!(reconstruction_mse(&seq, &recon).unwrap() >= 0.0);
    assert!(reconstruction_mse(&seq, &recon[..2]).is_ok());
    assert!(reconstruction_mse(&seq, &[Tensor::zeros(1, 2)]).is_err());
}

#[test]
fn generation_with_fixed_static_code() {
    // zero biases make the zero state a fixed point of the mean rollout
    let mut m = lssae(11);
    let mut rng = SeedTree::new(12).rng();
    let ids: Vec<_> = m.params().ids().filter(|&id| m.params().param(id).name.ends_with("bias")).collect();
    for id in ids {
        let [r, c] = m.params().value(id).shape();
        *m.params_mut().value_mut(id) = common::random_tensor(&mut rng, r, c, 0.5);
    }
    let z_c = common::random_tensor(&mut SeedTree::new(11).rng(), 4, m.dims().d_c, 1.0);
    let how = Generation::FixedStatic(z_c);
    let run = |seed| generate_sequence(&m, &how, 6, RolloutMode::Mean, &mut SeedTree::new(seed).rng()).unwrap();
    let a = run(1);
    assert_eq!(a, run(2)); // mean mode draws nothing
    assert_eq!(a.len(), 6);
    assert!(a.windows(2).any(|w| w[0] != w[1]));
    let sampled = generate_sequence(&m, &how, 6, RolloutMode::Sample, &mut SeedTree::new(3).rng()).unwrap();
    assert_ne!(sampled, a);
    for how in [Generation::PriorStatic(3), Generation::FixedDynamic(3)] {
        let out = generate_sequence(&m, &how, 5, RolloutMode::Mean, &mut SeedTree::new(4).rng()).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|x| x.shape() == [3, 2]));
    }
}
