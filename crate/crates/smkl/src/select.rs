//! Cross-validated grid search and test-set evaluation.

use std::path::Path;

use rayon::prelude::*;
use serde::Deserialize;
use smkl_core::fit::{fit, Init, SmklConfig, SmklResult};
use smkl_core::kernel::{compute_cross, GramOptions, KernelBank, KernelSpec};
use smkl_core::linalg::Matrix;
use smkl_core::rng::SeededRng;
use smkl_core::svm::{decision_values, predict};

use crate::data::{SplitDataset, TrainingSet};
use crate::error::{Error, Result};

/// Weights at or below this magnitude do not count as selected.
pub const NNZ_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CvGrid {
    #[serde(rename = "C")]
    pub c_values: Vec<f64>,
    #[serde(rename = "lambda")]
    pub lambda_values: Vec<f64>,
    #[serde(rename = "k0")]
    pub k0_values: Vec<usize>,
    #[serde(default = "default_folds")]
    pub folds: usize,
}

fn default_folds() -> usize {
    10
}

impl CvGrid {
    /// `C ∈ {5, 10, 50, 100}`, `λ ∈ {0.01, 0.1, 1, 10, 100}`, `k0 ∈ {1..5}`,
    /// ten folds.
    pub fn standard() -> Self {
        CvGrid {
            c_values: vec![5.0, 10.0, 50.0, 100.0],
            lambda_values: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            k0_values: vec![1, 2, 3, 4, 5],
            folds: 10,
        }
    }

    pub fn single(c: f64, lambda: f64, k0: usize, folds: usize) -> Self {
        CvGrid { c_values: vec![c], lambda_values: vec![lambda], k0_values: vec![k0], folds }
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let g: CvGrid = toml::from_str(text).map_err(|e| Error::format(origin, e.to_string()))?;
        g.validate().map_err(|e| Error::format(origin, e.to_string()))?;
        Ok(g)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() || self.lambda_values.is_empty() || self.k0_values.is_empty() {
            return Err(Error::Usage("grid lists must be nonempty".into()));
        }
        if self.folds < 2 {
            return Err(Error::Usage("at least 2 folds are needed".into()));
        }
        Ok(())
    }

    /// Grid points in `C`-major, then `λ`, then `k0` order.
    pub fn points(&self) -> Vec<(f64, f64, usize)> {
        let mut out = Vec::new();
        for &c in &self.c_values {
            for &l in &self.lambda_values {
                for &k in &self.k0_values {
                    out.push((c, l, k));
                }
            }
        }
        out
    }
}

/// Seeded fold index for each of `n` rows, balanced to within one row.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub c: f64,
    pub lambda: f64,
    pub k0: usize,
    /// Validation accuracy per fold, in percent.
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub points: Vec<GridPoint>,
    /// Index into `points` of the selected configuration.
    pub best: usize,
    pub warnings: Vec<String>,
}

impl CvOutcome {
    pub fn selected(&self) -> &GridPoint {
        &self.points[self.best]
    }
}

/// Best mean accuracy; ties go to smaller `k0`, then smaller `C`, then
/// larger `λ`, then grid order.
fn select_best(points: &[GridPoint]) -> usize {
    let mut best = 0;
    for (i, p) in points.iter().enumerate().skip(1) {
        let b = &points[best];
        let better = if p.mean_accuracy != b.mean_accuracy {
            p.mean_accuracy > b.mean_accuracy
        } else if p.k0 != b.k0 {
            p.k0 < b.k0
        } else if p.c != b.c {
            p.c < b.c
        } else {
            p.lambda > b.lambda
        };
        if better {
            best = i;
        }
    }
    best
}

fn accuracy(pred: &[f64], y: &[f64]) -> f64 {
    let hits = pred.iter().zip(y).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / y.len().max(1) as f64
}

/// `Σⱼ βⱼ Kⱼ[rows, cols]` taken from precomputed Gram matrices.
fn combined_block(bank: &KernelBank, beta: &[f64], rows: &[usize], cols: &[usize]) -> Matrix {
    let mut out = Matrix::zeros(rows.len(), cols.len());
    for (j, b) in beta.iter().enumerate() {
        if *b != 0.0 {
            let k = bank.get(j);
            out.add_scaled(*b, &Matrix::from_fn(rows.len(), cols.len(), |r, c| k[(rows[r], cols[c])]));
        }
    }
    out
}

fn run_fold(
    bank: &KernelBank,
    y: &[f64],
    folds: &[usize],
    fold: usize,
    cfg: &SmklConfig,
) -> smkl_core::Result<(f64, Option<String>)> {
    let tr: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != fold).collect();
    let va: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == fold).collect();
    let ytr: Vec<f64> = tr.iter().map(|&i| y[i]).collect();
    let yva: Vec<f64> = va.iter().map(|&i| y[i]).collect();
    if !ytr.contains(&1.0) || !ytr.contains(&-1.0) {
        let pred = vec![ytr[0]; va.len()];
        let msg = format!("fold {} has a single training class; constant predictor used", fold + 1);
        return Ok((accuracy(&pred, &yva), Some(msg)));
    }
    let sub = bank.restrict_points(&tr);
    let model = fit(&sub, &ytr, cfg)?;
    let cross = combined_block(bank, &model.beta, &va, &tr);
    let dec = decision_values(&model.alpha.alpha, &ytr, model.alpha.bias, &cross)?;
    Ok((accuracy(&predict(&dec), &yva), None))
}

/// Grid search over `grid` on the training set. Folds are drawn once from
/// `seed` and shared by every grid point; `base` supplies the remaining
/// solver settings.
pub fn cross_validate(
    train: &TrainingSet,
    specs: &[KernelSpec],
    grid: &CvGrid,
    base: &SmklConfig,
    seed: u64,
    threads: Option<usize>,
) -> Result<CvOutcome> {
    grid.validate()?;
    let n = train.y.len();
    if n < grid.folds {
        return Err(Error::Usage(format!("{n} training rows cannot fill {} folds", grid.folds)));
    }
    if let Some(&k) = grid.k0_values.iter().find(|&&k| k == 0 || k > specs.len()) {
        return Err(Error::Usage(format!("grid k0 = {k} is outside 1..={}", specs.len())));
    }
    let bank = KernelBank::compute(specs, &train.x, &GramOptions::default())?;
    let folds = fold_assignment(n, grid.folds, seed);
    let points = grid.points();
    let tasks: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..grid.folds).map(move |f| (p, f))).collect();
    let work = || -> smkl_core::Result<Vec<(f64, Option<String>)>> {
        tasks
            .par_iter()
            .map(|&(p, f)| {
                let (c, lambda, k0) = points[p];
                let mut cfg = base.clone();
                cfg.c = c;
                cfg.lambda = lambda;
                cfg.k0 = k0;
                cfg.init = Init::KSparseRandom { seed };
                run_fold(&bank, &train.y, &folds, f, &cfg)
            })
            .collect()
    };
    let results = match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| Error::Usage(e.to_string()))?
            .install(work)?,
        None => work()?,
    };

    let mut warnings = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for (p, &(c, lambda, k0)) in points.iter().enumerate() {
        let chunk = &results[p * grid.folds..(p + 1) * grid.folds];
        let fold_accuracy: Vec<f64> = chunk.iter().map(|r| r.0).collect();
        for msg in chunk.iter().filter_map(|r| r.1.as_ref()) {
            if !warnings.contains(msg) {
                warnings.push(msg.clone());
            }
        }
        let mean_accuracy = fold_accuracy.iter().sum::<f64>() / grid.folds as f64;
        out.push(GridPoint { c, lambda, k0, fold_accuracy, mean_accuracy });
    }
    let best = select_best(&out);
    Ok(CvOutcome { points: out, best, warnings })
}

/// One row per grid point: configuration, fold accuracies, mean.
pub fn write_cv_log(path: &Path, outcome: &CvOutcome) -> Result<()> {
    let io = |e: csv::Error| Error::format(path, e.to_string());
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    let folds = outcome.points.first().map_or(0, |p| p.fold_accuracy.len());
    let mut header = vec!["C".to_string(), "lambda".into(), "k0".into()];
    header.extend((1..=folds).map(|f| format!("fold{f}")));
    header.push("mean".into());
    header.push("selected".into());
    w.write_record(&header).map_err(io)?;
    for (i, p) in outcome.points.iter().enumerate() {
        let mut rec = vec![p.c.to_string(), p.lambda.to_string(), p.k0.to_string()];
        rec.extend(p.fold_accuracy.iter().map(|a| a.to_string()));
        rec.push(p.mean_accuracy.to_string());
        rec.push((i == outcome.best).to_string());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Test accuracy in percent.
    pub accuracy: f64,
    pub nnz_beta: usize,
    pub train_time: f64,
    pub c: f64,
    pub lambda: f64,
    pub k0: usize,
}

pub fn nnz(beta: &[f64]) -> usize {
    beta.iter().filter(|b| b.abs() > NNZ_THRESHOLD).count()
}

/// Decision values of a fitted model at `query` rows.
pub fn decision_function(
    model: &SmklResult,
    specs: &[KernelSpec],
    train: &TrainingSet,
    query: &Matrix,
) -> Result<Vec<f64>> {
    if specs.len() != model.beta.len() {
        return Err(Error::Usage(format!("model has {} weights, bank has {} kernels", model.beta.len(), specs.len())));
    }
    if query.cols() != train.x.cols() {
        return Err(Error::Usage(format!("query has {} features, training data has {}", query.cols(), train.x.cols())));
    }
    let mut cross = Matrix::zeros(query.rows(), train.x.rows());
    for (spec, &b) in specs.iter().zip(&model.beta) {
        if b != 0.0 {
            cross.add_scaled(b, &compute_cross(spec, query, &train.x)?);
        }
    }
    Ok(decision_values(&model.alpha.alpha, &train.y, model.alpha.bias, &cross)?)
}

/// Test accuracy and sparsity of a model fitted on `split.train`.
pub fn evaluate(
    model: &SmklResult,
    specs: &[KernelSpec],
    split: &SplitDataset,
    cfg: &SmklConfig,
    train_time: f64,
) -> Result<EvalReport> {
    let dec = decision_function(model, specs, &split.train, &split.test.x)?;
    Ok(EvalReport {
        accuracy: accuracy(&predict(&dec), &split.test.y),
        nnz_beta: nnz(&model.beta),
        train_time,
        c: cfg.c,
        lambda: cfg.lambda,
        k0: cfg.k0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(acc: f64, c: f64, lambda: f64, k0: usize) -> GridPoint {
        GridPoint { c, lambda, k0, fold_accuracy: vec![acc], mean_accuracy: acc }
    }

    #[test]
    fn tie_breaking_prefers_parsimony() {
        let pts = vec![point(90.0, 10.0, 1.0, 2), point(90.0, 10.0, 1.0, 1), point(90.0, 5.0, 1.0, 1)];
        assert_eq!(select_best(&pts), 2);
        let pts = vec![point(90.0, 5.0, 1.0, 1), point(90.0, 5.0, 10.0, 1), point(91.0, 100.0, 0.01, 5)];
        assert_eq!(select_best(&pts), 2);
        let pts = vec![point(90.0, 5.0, 1.0, 1), point(90.0, 5.0, 10.0, 1)];
        assert_eq!(select_best(&pts), 1);
        let pts = vec![point(90.0, 5.0, 1.0, 1), point(90.0, 5.0, 1.0, 1)];
        assert_eq!(select_best(&pts), 0);
    }

    #[test]
    fn folds_partition_rows() {
        let f = fold_assignment(23, 5, 9);
        for k in 0..5 {
            let size = f.iter().filter(|&&v| v == k).count();
            assert!(size == 4 || size == 5);
        }
        assert_eq!(f, fold_assignment(23, 5, 9));
    }

    #[test]
    fn standard_grid_has_one_hundred_points() {
        let g = CvGrid::standard();
        assert_eq!(g.points().len(), 100);
        let parsed = CvGrid::parse("C = [1.0, 2.0]\nlambda = [0.1]\nk0 = [1, 2]\nfolds = 3", Path::new("g")).unwrap();
        assert_eq!(parsed.points().len(), 4);
        assert!(CvGrid::parse("C = []\nlambda = [1.0]\nk0 = [1]", Path::new("g")).is_err());
    }

    #[test]
    fn nnz_threshold() {
        assert_eq!(nnz(&[0.5, 0.4995, 0.0005, 0.0]), 2);
        assert_eq!(nnz(&[1.0, 0.0]), 1);
    }
}
