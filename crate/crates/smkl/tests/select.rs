use std::path::Path;

use proptest::prelude::*;
use smkl::data::{parse_csv, split_standardize, Schema, TrainingSet};
use smkl::select::{cross_validate, decision_function, evaluate, fold_assignment, nnz, CvGrid};
use smkl_core::fit::{fit, SmklConfig};
use smkl_core::kernel::{GramOptions, KernelBank, KernelSpec};
use smkl_core::linalg::Matrix;
use smkl_core::rng::SeededRng;

fn specs() -> Vec<KernelSpec> {
    vec![KernelSpec::Linear, KernelSpec::Rbf { gamma: 0.5 }, KernelSpec::Laplacian { gamma: 0.3 }]
}

fn blobs(n: usize, gap: f64, seed: u64) -> TrainingSet {
    let mut rng = SeededRng::new(seed);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..n {
        let s = if i % 2 == 0 { 1.0 } else { -1.0 };
        rows.push(vec![s * gap + 0.3 * rng.normal(), 0.3 * rng.normal()]);
        y.push(s);
    }
    TrainingSet { x: Matrix::from_rows(&rows), y }
}

#[test]
fn one_point_grid_returns_that_point() {
    let train = blobs(30, 1.0, 1);
    let grid = CvGrid::single(5.0, 0.1, 2, 3);
    let out = cross_validate(&train, &specs(), &grid, &SmklConfig::new(1.0, 1.0, 1), 4, Some(2)).unwrap();
    assert_eq!(out.points.len(), 1);
    let p = out.selected();
    assert_eq!((p.c, p.lambda, p.k0), (5.0, 0.1, 2));
    assert_eq!(p.fold_accuracy.len(), 3);
}

#[test]
fn same_seed_same_selection_for_any_thread_count() {
    let train = blobs(40, 0.4, 2);
    let grid = CvGrid {
        c_values: vec![0.1, 1.0, 10.0],
        lambda_values: vec![0.1, 10.0],
        k0_values: vec![1, 2],
        folds: 4,
    };
    let base = SmklConfig::new(1.0, 1.0, 1);
    let a = cross_validate(&train, &specs(), &grid, &base, 9, Some(1)).unwrap();
    let b = cross_validate(&train, &specs(), &grid, &base, 9, Some(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.points.len(), 12);
}

#[test]
fn single_class_fold_is_scored_with_a_warning() {
    // A lone positive: its fold trains on negatives only.
    let mut train = blobs(12, 1.0, 3);
    for (i, y) in train.y.iter_mut().enumerate() {
        *y = if i == 0 { 1.0 } else { -1.0 };
    }
    let grid = CvGrid::single(1.0, 1.0, 1, 6);
    let out = cross_validate(&train, &specs(), &grid, &SmklConfig::new(1.0, 1.0, 1), 0, None).unwrap();
    assert!(!out.warnings.is_empty());
    assert!(out.selected().fold_accuracy.iter().all(|a| (0.0..=100.0).contains(a)));
}

#[test]
fn rejects_impossible_grids() {
    let train = blobs(6, 1.0, 4);
    let base = SmklConfig::new(1.0, 1.0, 1);
    assert!(cross_validate(&train, &specs(), &CvGrid::single(1.0, 1.0, 1, 10), &base, 0, None).is_err());
    assert!(cross_validate(&train, &specs(), &CvGrid::single(1.0, 1.0, 4, 3), &base, 0, None).is_err());
}

#[test]
fn separable_data_is_classified_perfectly() {
    let mut text = String::from("u,v,label\n");
    let mut rng = SeededRng::new(5);
    for i in 0..40 {
        let s = if i % 2 == 0 { 3.0 } else { -3.0 };
        text += &format!("{},{},{}\n", s + 0.2 * rng.normal(), rng.normal(), if s > 0.0 { "p" } else { "q" });
    }
    let raw = parse_csv(&text, &Schema::with_label("label"), Path::new("toy.csv")).unwrap();
    let split = split_standardize(&raw, 1, 0.8).unwrap();
    let bank = KernelBank::compute(&specs(), &split.train.x, &GramOptions::default()).unwrap();
    let cfg = SmklConfig::new(10.0, 0.1, 1);
    let model = fit(&bank, &split.train.y, &cfg).unwrap();
    let eval = evaluate(&model, &specs(), &split, &cfg, 0.0).unwrap();
    assert_eq!(eval.accuracy, 100.0);
    assert_eq!(eval.nnz_beta, 1);
    assert_eq!((split.train.y.len(), split.test.y.len()), (32, 8));
}

#[test]
fn decision_function_checks_dimensions() {
    let train = blobs(10, 1.0, 6);
    let bank = KernelBank::compute(&specs(), &train.x, &GramOptions::default()).unwrap();
    let model = fit(&bank, &train.y, &SmklConfig::new(1.0, 1.0, 1)).unwrap();
    assert!(decision_function(&model, &specs(), &train, &Matrix::zeros(3, 5)).is_err());
    assert!(decision_function(&model, &specs()[..2], &train, &Matrix::zeros(3, 2)).is_err());
    let on_train = decision_function(&model, &specs(), &train, &train.x).unwrap();
    assert_eq!(on_train.len(), 10);
}

proptest! {
    #[test]
    fn folds_form_a_partition(n in 2usize..200, folds in 2usize..12, seed in any::<u64>()) {
        prop_assume!(folds <= n);
        let f = fold_assignment(n, folds, seed);
        prop_assert_eq!(f.len(), n);
        let sizes: Vec<usize> = (0..folds).map(|k| f.iter().filter(|&&v| v == k).count()).collect();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn selected_kernels_never_exceed_k0(seed in 0u64..1000, k0 in 1usize..=3, lambda in 0.01f64..10.0) {
        let train = blobs(16, 0.5, seed);
        let bank = KernelBank::compute(&specs(), &train.x, &GramOptions::default()).unwrap();
        let model = fit(&bank, &train.y, &SmklConfig::new(1.0, lambda, k0)).unwrap();
        prop_assert!(nnz(&model.beta) <= k0);
    }
}
