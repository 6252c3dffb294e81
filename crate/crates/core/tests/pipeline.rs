use gface_core::data::{generate_synthetic, SyntheticSpec};
use gface_core::eval::{cluster_acc, kmeans};
use gface_core::numcore::Tensor;
use gface_core::theory::{bound_check, BoundCheckConfig};
use gface_core::train::{evaluate_unlabeled, train, train_fully_supervised, TrainConfig};

fn small() -> (gface_core::data::SplitDataset, TrainConfig) {
    let spec = SyntheticSpec {
        k: 5,
        num_old: 3,
        dim: 8,
        per_class_counts: vec![60; 5],
        class_separation: 6.0,
        overlap_pairs: vec![(2, 3, 0.5)],
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, 21).unwrap();
    let mut cfg = TrainConfig {
        epochs: 12,
        warmup: 3,
        batch_size: 64,
        ..TrainConfig::default()
    };
    cfg.model.d = 8;
    cfg.model.k = 5;
    (ds, cfg)
}

#[test]
fn generate_train_evaluate() {
    let (ds, cfg) = small();
    let out = train(&ds, &cfg).unwrap();
    assert_eq!(out.history.rows.len(), 12);
    let last = out.history.last().unwrap();
    let acc = evaluate_unlabeled(&out.params, &ds).unwrap();
    assert_eq!(Some(acc.acc_all), last.acc_all);
    assert!(acc.acc_all > 1.0 / 5.0, "{acc:?}");
    assert_eq!(acc.total(), ds.unlabeled().count());
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let (ds, cfg) = small();
    let a = train(&ds, &cfg).unwrap();
    let b = train(&ds, &cfg).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.history, b.history);
    let c = train(&ds, &TrainConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn ablated_run_records_zero_debiasing_losses() {
    let (ds, cfg) = small();
    let h = train(&ds, &cfg.without_debiasing()).unwrap().history;
    assert!(h.rows.iter().all(|r| r.loss_ad == 0.0 && r.loss_bal == 0.0 && r.loss_cluster == 0.0));
    let full = train(&ds, &cfg).unwrap().history;
    assert!(full.rows.iter().skip(cfg.warmup).all(|r| r.loss_cluster > 0.0));
}

#[test]
fn kmeans_recovers_well_separated_blobs() {
    let spec = SyntheticSpec {
        class_separation: 30.0,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec, 3).unwrap();
    let rows: Vec<Vec<f64>> = ds.unlabeled().map(|s| s.features.clone()).collect();
    let km = kmeans(&Tensor::from_rows(&rows).unwrap(), ds.k(), 0, 300).unwrap();
    let acc = cluster_acc(&km.labels, &ds.unlabeled_ground_truth().unwrap(), ds.k(), ds.old_classes()).unwrap();
    assert!(acc.acc_all > 0.99, "{acc:?}");
}

#[test]
fn bound_check_on_a_trained_pair() {
    let (ds, cfg) = small();
    let h = train(&ds, &cfg).unwrap().params;
    let star = train_fully_supervised(&ds, &cfg).unwrap().params;
    let rep = bound_check(&ds, &h, &star, &BoundCheckConfig::default()).unwrap();
    assert_eq!(rep.family_size, 10);
    assert!((rep.theta - ds.theta()).abs() < 1e-12);
    if rep.applicable() {
        assert_eq!(rep.holds(), Some(true), "{rep:?}");
    }
}
