//! Causal information splitting: approximate isolation of the stable part of
//! an ambiguous proxy through per-label-stratum auxiliary prediction tasks.
//!
//! For every value `y` of the label, a predictor of the target proxy from the
//! ambiguous source columns is fitted on that stratum only. Evaluating each
//! stratum model on every row yields counterfactual columns ("what would the
//! target look like if this row had label y") that carry the source's
//! information about the target while shedding the part that only co-varies
//! with the label's unstable descendants.

use crate::dataset::{Column, ColumnData, Dataset, DatasetError};
use crate::learn::{fit_logistic_l1, LearnError, LinearModel};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CisError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error("stratum {y}={value} has {rows} rows, fewer than the minimum {min}")]
    StratumTooSmall {
        y: String,
        value: u32,
        rows: usize,
        min: usize,
    },
    #[error("column `{0}` must be discrete to stratify on")]
    BadStratification(String),
    #[error("need at least two label strata, found {0}")]
    SingleStratum(usize),
    #[error("not enough rows per stratum for {folds}-fold cross-validation")]
    TooFewForFolds { folds: usize },
    #[error("mixing matrix is not invertible")]
    NonInvertibleMixing,
    #[error("mixing matrix must be square with one row per mixed column")]
    BadMixingShape,
    #[error("engineered column `{0}` already exists")]
    ColumnCollision(String),
}

/// Auxiliary model family for the per-stratum fits.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerSpec {
    /// Ridge-regularized least squares; the default.
    Linear { ridge: f64 },
    /// L1 logistic regression for binary targets.
    Logistic { lambda: f64 },
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Linear { ridge: 1e-6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CisConfig {
    pub min_stratum: usize,
    pub seed: u64,
}

impl Default for CisConfig {
    fn default() -> Self {
        CisConfig {
            min_stratum: 50,
            seed: 0,
        }
    }
}

/// One per-stratum predictor. Linear models store raw-scale coefficients;
/// logistic models delegate to [`LinearModel`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum StratumModel {
    Linear {
        weights: Vec<f64>,
        intercept: f64,
        /// Target was constant inside the stratum.
        constant: bool,
    },
    Logistic(LinearModel),
}

/// The trained per-stratum predictors for one isolation task and the names of
/// the columns they emit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IsolationFeatureSet {
    pub target: String,
    pub source: Vec<String>,
    pub y: String,
    /// (label value, fitted model), ascending label order.
    pub models: Vec<(u32, StratumModel)>,
    pub emitted_columns: Vec<String>,
}

fn ridge_fit(xs: &[Vec<f64>], t: &[f64], ridge: f64) -> (Vec<f64>, f64) {
    let n = t.len();
    let d = xs.len();
    // Center everything so the intercept separates out.
    let t_mean = t.iter().sum::<f64>() / n as f64;
    let means: Vec<f64> = xs.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut moment = DVector::<f64>::zeros(d);
    for i in 0..d {
        for j in i..d {
            let mut dot = 0.0;
            for r in 0..n {
                dot += (xs[i][r] - means[i]) * (xs[j][r] - means[j]);
            }
            gram[(i, j)] = dot;
            gram[(j, i)] = dot;
        }
        gram[(i, i)] += ridge.max(1e-12) * n as f64;
        let mut dot = 0.0;
        for r in 0..n {
            dot += (xs[i][r] - means[i]) * (t[r] - t_mean);
        }
        moment[i] = dot;
    }
    let weights = gram
        .lu()
        .solve(&moment)
        .map(|w| w.iter().copied().collect::<Vec<f64>>())
        .unwrap_or_else(|| vec![0.0; d]);
    let intercept = t_mean
        - weights
            .iter()
            .zip(&means)
            .map(|(w, m)| w * m)
            .sum::<f64>();
    (weights, intercept)
}

fn fit_stratum(
    ds: &Dataset,
    rows: &[usize],
    target: &str,
    source: &[&str],
    learner: LearnerSpec,
) -> Result<StratumModel, CisError> {
    let sub = ds.select_rows(rows);
    match learner {
        LearnerSpec::Linear { ridge } => {
            let t = sub.numeric(target)?;
            let t_mean = t.iter().sum::<f64>() / t.len() as f64;
            let var = t.iter().map(|x| (x - t_mean) * (x - t_mean)).sum::<f64>() / t.len() as f64;
            if var < 1e-18 {
                return Ok(StratumModel::Linear {
                    weights: vec![0.0; source.len()],
                    intercept: t_mean,
                    constant: true,
                });
            }
            let xs: Vec<Vec<f64>> = source
                .iter()
                .map(|s| sub.numeric(s))
                .collect::<Result<_, _>>()?;
            let (weights, intercept) = ridge_fit(&xs, &t, ridge);
            Ok(StratumModel::Linear {
                weights,
                intercept,
                constant: false,
            })
        }
        LearnerSpec::Logistic { lambda } => {
            let model = fit_logistic_l1(&sub, source, target, lambda, 0)?;
            Ok(StratumModel::Logistic(model))
        }
    }
}

impl StratumModel {
    /// Deterministic prediction on every row of the dataset.
    pub fn predict(&self, ds: &Dataset, source: &[String]) -> Result<Vec<f64>, CisError> {
        match self {
            StratumModel::Linear {
                weights, intercept, ..
            } => {
                let cols: Vec<Vec<f64>> = source
                    .iter()
                    .map(|s| ds.numeric(s))
                    .collect::<Result<_, _>>()?;
                let mut out = vec![*intercept; ds.n_rows()];
                for (w, col) in weights.iter().zip(&cols) {
                    for (o, &x) in out.iter_mut().zip(col) {
                        *o += w * x;
                    }
                }
                Ok(out)
            }
            StratumModel::Logistic(model) => Ok(model.predict_proba(ds)?),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, StratumModel::Linear { constant: true, .. })
    }
}

/// Fits one predictor of `target` from `source` per label stratum. Each model
/// sees only its stratum's rows; refitting on the same data reproduces the
/// same parameters.
pub fn train_isolation(
    ds: &Dataset,
    target: &str,
    source: &[&str],
    y: &str,
    learner: LearnerSpec,
    cfg: &CisConfig,
) -> Result<IsolationFeatureSet, CisError> {
    let strata = ds
        .stratify(y)
        .map_err(|_| CisError::BadStratification(y.to_string()))?;
    if strata.len() < 2 {
        return Err(CisError::SingleStratum(strata.len()));
    }
    for (&value, rows) in &strata {
        if rows.len() < cfg.min_stratum {
            return Err(CisError::StratumTooSmall {
                y: y.to_string(),
                value,
                rows: rows.len(),
                min: cfg.min_stratum,
            });
        }
    }
    let mut models = Vec::new();
    let mut emitted_columns = Vec::new();
    for (&value, rows) in &strata {
        let model = fit_stratum(ds, rows, target, source, learner)?;
        emitted_columns.push(format!("{target}_if_{y}_{value}"));
        models.push((value, model));
    }
    Ok(IsolationFeatureSet {
        target: target.to_string(),
        source: source.iter().map(|s| s.to_string()).collect(),
        y: y.to_string(),
        models,
        emitted_columns,
    })
}

/// Appends one column per stratum model, each evaluated on every row with the
/// parameters fitted at training time. Row count is unchanged.
pub fn emit_features(fs: &IsolationFeatureSet, ds: &Dataset) -> Result<Dataset, CisError> {
    let mut out = ds.clone();
    for ((_, model), name) in fs.models.iter().zip(&fs.emitted_columns) {
        if out.has_column(name) {
            return Err(CisError::ColumnCollision(name.clone()));
        }
        let preds = model.predict(ds, &fs.source)?;
        out = out.with_column(Column {
            name: name.clone(),
            data: ColumnData::Real(preds),
        })?;
    }
    Ok(out)
}

/// Cross-validated comparison between one pooled auxiliary model and the
/// per-stratum models: splitting helps only when the pooled error is strictly
/// larger than the label-weighted stratified error.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImprovementReport {
    pub pooled_error: f64,
    pub stratified_error: f64,
    pub condition_met: bool,
    pub margin: f64,
    pub folds: usize,
    /// (label value, stratum probability, cross-validated stratum error).
    pub per_stratum: Vec<(u32, f64, f64)>,
}

fn prediction_error(model: &StratumModel, ds: &Dataset, source: &[String], target: &str) -> Result<f64, CisError> {
    let preds = model.predict(ds, source)?;
    let t = ds.numeric(target)?;
    match model {
        StratumModel::Linear { .. } => Ok(preds
            .iter()
            .zip(&t)
            .map(|(p, x)| (p - x) * (p - x))
            .sum::<f64>()
            / t.len() as f64),
        StratumModel::Logistic(_) => {
            // Mean logistic loss.
            let eps = 1e-12;
            Ok(-preds
                .iter()
                .zip(&t)
                .map(|(p, x)| {
                    let p = p.clamp(eps, 1.0 - eps);
                    x * p.ln() + (1.0 - x) * (1.0 - p).ln()
                })
                .sum::<f64>()
                / t.len() as f64
                / std::f64::consts::LN_2)
        }
    }
}

fn fold_assignments(rows: &[usize], folds: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut shuffled = rows.to_vec();
    shuffled.shuffle(rng);
    let mut out = vec![Vec::new(); folds];
    for (i, r) in shuffled.into_iter().enumerate() {
        out[i % folds].push(r);
    }
    out
}

/// Estimates both sides of the improvement condition with k-fold
/// cross-validation (folds stratified on the label so every training split
/// retains all strata).
pub fn check_improvement(
    ds: &Dataset,
    target: &str,
    source: &[&str],
    y: &str,
    learner: LearnerSpec,
    folds: usize,
    margin: f64,
    cfg: &CisConfig,
) -> Result<ImprovementReport, CisError> {
    let strata = ds
        .stratify(y)
        .map_err(|_| CisError::BadStratification(y.to_string()))?;
    if strata.len() < 2 {
        return Err(CisError::SingleStratum(strata.len()));
    }
    for rows in strata.values() {
        if rows.len() < folds || rows.len() < cfg.min_stratum {
            return Err(CisError::TooFewForFolds { folds });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let per_stratum_folds: BTreeMap<u32, Vec<Vec<usize>>> = strata
        .iter()
        .map(|(&v, rows)| (v, fold_assignments(rows, folds, &mut rng)))
        .collect();
    let source_owned: Vec<String> = source.iter().map(|s| s.to_string()).collect();
    let n_total = ds.n_rows() as f64;

    // Pooled: one model per fold over all strata, errors weighted by fold size.
    let mut pooled_error = 0.0;
    for k in 0..folds {
        let mut train_rows = Vec::new();
        let mut test_rows = Vec::new();
        for fold_sets in per_stratum_folds.values() {
            for (i, rows) in fold_sets.iter().enumerate() {
                if i == k {
                    test_rows.extend_from_slice(rows);
                } else {
                    train_rows.extend_from_slice(rows);
                }
            }
        }
        let model = fit_stratum(ds, &train_rows, target, source, learner)?;
        let err = prediction_error(&model, &ds.select_rows(&test_rows), &source_owned, target)?;
        pooled_error += err * test_rows.len() as f64 / n_total;
    }

    // Stratified: per-stratum models, stratum errors weighted by Pr(y).
    let mut stratified_error = 0.0;
    let mut per_stratum = Vec::new();
    for (&value, fold_sets) in &per_stratum_folds {
        let stratum_n: usize = fold_sets.iter().map(Vec::len).sum();
        let prob = stratum_n as f64 / n_total;
        let mut stratum_error = 0.0;
        for k in 0..folds {
            let mut train_rows = Vec::new();
            for (i, rows) in fold_sets.iter().enumerate() {
                if i != k {
                    train_rows.extend_from_slice(rows);
                }
            }
            let model = fit_stratum(ds, &train_rows, target, source, learner)?;
            let err =
                prediction_error(&model, &ds.select_rows(&fold_sets[k]), &source_owned, target)?;
            stratum_error += err * fold_sets[k].len() as f64 / stratum_n as f64;
        }
        stratified_error += prob * stratum_error;
        per_stratum.push((value, prob, stratum_error));
    }

    Ok(ImprovementReport {
        pooled_error,
        stratified_error,
        condition_met: pooled_error > stratified_error + margin,
        margin,
        folds,
        per_stratum,
    })
}

/// Test-harness reference: inverts a known linear mixing of component columns
/// and appends the designated stable component.
pub fn oracle_isolation_linear(
    ds: &Dataset,
    mixed: &[&str],
    mixing: &[Vec<f64>],
    good_index: usize,
    out_name: &str,
) -> Result<Dataset, CisError> {
    let d = mixed.len();
    if mixing.len() != d || mixing.iter().any(|row| row.len() != d) || good_index >= d {
        return Err(CisError::BadMixingShape);
    }
    let m = DMatrix::<f64>::from_fn(d, d, |i, j| mixing[i][j]);
    let inv = m.try_inverse().ok_or(CisError::NonInvertibleMixing)?;
    let cols: Vec<Vec<f64>> = mixed
        .iter()
        .map(|c| ds.numeric(c))
        .collect::<Result<_, _>>()?;
    let mut component = vec![0.0f64; ds.n_rows()];
    for r in 0..ds.n_rows() {
        let mut acc = 0.0;
        for j in 0..d {
            acc += inv[(good_index, j)] * cols[j][r];
        }
        component[r] = acc;
    }
    Ok(ds.with_real_column(out_name, component)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Columns t (target), s1, s2 (sources), y; t depends on s1 within
    /// stratum and on y across strata.
    fn toy(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut t = Vec::new();
        let mut s1 = Vec::new();
        let mut s2 = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let yi = (i % 2) as u32;
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            s1.push(a);
            s2.push(b);
            t.push(2.0 * a + 3.0 * yi as f64 + noise.sample(&mut rng));
            y.push(yi);
        }
        Dataset::new()
            .with_real_column("t", t)
            .unwrap()
            .with_real_column("s1", s1)
            .unwrap()
            .with_real_column("s2", s2)
            .unwrap()
            .with_discrete_column("y", y)
            .unwrap()
    }

    #[test]
    fn one_model_per_stratum_and_two_emitted_columns() {
        let ds = toy(400, 1);
        let fs = train_isolation(
            &ds,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        assert_eq!(fs.models.len(), 2);
        assert_eq!(fs.emitted_columns, vec!["t_if_y_0", "t_if_y_1"]);
        let emitted = emit_features(&fs, &ds).unwrap();
        assert_eq!(emitted.n_rows(), ds.n_rows());
        assert_eq!(emitted.n_columns(), ds.n_columns() + 2);
    }

    #[test]
    fn stratum_models_recover_within_stratum_slope() {
        let ds = toy(2000, 2);
        let fs = train_isolation(
            &ds,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        for (_, model) in &fs.models {
            let StratumModel::Linear { weights, .. } = model else {
                panic!("expected linear models")
            };
            assert_abs_diff_eq!(weights[0], 2.0, epsilon = 0.05);
            assert_abs_diff_eq!(weights[1], 0.0, epsilon = 0.05);
        }
    }

    #[test]
    fn stratum_purity_other_rows_do_not_matter() {
        let ds = toy(600, 3);
        let fs = train_isolation(
            &ds,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        // Scramble stratum 1 rows; stratum 0's model must be bit-identical.
        let strata = ds.stratify("y").unwrap();
        let mut rows: Vec<usize> = (0..ds.n_rows()).collect();
        let ones = &strata[&1];
        for (k, &r) in ones.iter().enumerate() {
            rows[r] = ones[(k + 1) % ones.len()];
        }
        let permuted = ds.select_rows(&rows);
        let fs2 = train_isolation(
            &permuted,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        let (StratumModel::Linear { weights: w1, intercept: b1, .. }, StratumModel::Linear { weights: w2, intercept: b2, .. }) =
            (&fs.models[0].1, &fs2.models[0].1)
        else {
            panic!("expected linear models")
        };
        assert_eq!(w1, w2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn constant_target_is_flagged() {
        let n = 200;
        let ds = Dataset::new()
            .with_real_column("t", vec![5.0; n])
            .unwrap()
            .with_real_column("s", (0..n).map(|i| i as f64).collect())
            .unwrap()
            .with_discrete_column("y", (0..n as u32).map(|i| i % 2).collect())
            .unwrap();
        let fs = train_isolation(
            &ds,
            "t",
            &["s"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        assert!(fs.models.iter().all(|(_, m)| m.is_constant()));
        let emitted = emit_features(&fs, &ds).unwrap();
        assert!(emitted.real("t_if_y_0").unwrap().iter().all(|&v| v == 5.0));
    }

    #[test]
    fn small_stratum_is_rejected() {
        let ds = toy(60, 4);
        let err = train_isolation(
            &ds,
            "t",
            &["s1"],
            "y",
            LearnerSpec::default(),
            &CisConfig {
                min_stratum: 50,
                seed: 0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, CisError::StratumTooSmall { .. }));
    }

    #[test]
    fn emission_uses_training_parameters_on_new_data() {
        let train = toy(400, 5);
        let test = toy(100, 99);
        let fs = train_isolation(
            &train,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            &CisConfig::default(),
        )
        .unwrap();
        let on_train = emit_features(&fs, &train).unwrap();
        let on_test = emit_features(&fs, &test).unwrap();
        // Same inputs produce the same outputs regardless of the carrier set.
        let row = |ds: &Dataset, i: usize| {
            let s1 = ds.real("s1").unwrap()[i];
            let s2 = ds.real("s2").unwrap()[i];
            (s1, s2)
        };
        let (s1, s2) = row(&test, 0);
        let expected = {
            let StratumModel::Linear {
                weights, intercept, ..
            } = &fs.models[0].1
            else {
                panic!()
            };
            intercept + weights[0] * s1 + weights[1] * s2
        };
        assert_abs_diff_eq!(
            on_test.real("t_if_y_0").unwrap()[0],
            expected,
            epsilon = 1e-12
        );
        assert_eq!(on_train.n_rows(), train.n_rows());
    }

    #[test]
    fn improvement_condition_fires_only_with_stratum_shift() {
        // t depends on y: pooling across strata must hurt.
        let ds = toy(1000, 6);
        let report = check_improvement(
            &ds,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            5,
            0.0,
            &CisConfig::default(),
        )
        .unwrap();
        assert!(report.condition_met, "expected improvement: {report:?}");

        // Remove the stratum shift: pooled and stratified errors agree.
        let t_flat: Vec<f64> = {
            let s1 = ds.real("s1").unwrap();
            s1.iter().map(|&a| 2.0 * a).collect()
        };
        let flat = Dataset::new()
            .with_real_column("t", t_flat)
            .unwrap()
            .with_real_column("s1", ds.real("s1").unwrap().to_vec())
            .unwrap()
            .with_real_column("s2", ds.real("s2").unwrap().to_vec())
            .unwrap()
            .with_discrete_column("y", ds.discrete("y").unwrap().to_vec())
            .unwrap();
        let report = check_improvement(
            &flat,
            "t",
            &["s1", "s2"],
            "y",
            LearnerSpec::default(),
            5,
            1e-6,
            &CisConfig::default(),
        )
        .unwrap();
        assert!(!report.condition_met, "no shift: {report:?}");
    }

    #[test]
    fn single_stratum_and_tiny_folds_are_rejected() {
        let ds = Dataset::new()
            .with_real_column("t", vec![0.0; 100])
            .unwrap()
            .with_real_column("s", vec![0.0; 100])
            .unwrap()
            .with_discrete_column("y", vec![1; 100])
            .unwrap();
        assert!(matches!(
            check_improvement(
                &ds,
                "t",
                &["s"],
                "y",
                LearnerSpec::default(),
                5,
                0.0,
                &CisConfig::default()
            ),
            Err(CisError::SingleStratum(1))
        ));
    }

    #[test]
    fn oracle_unmixing_recovers_components() {
        let n = 50;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = std::f64::consts::FRAC_PI_4;
        let (c, s) = (theta.cos(), theta.sin());
        let m1: Vec<f64> = g.iter().zip(&b).map(|(x, y)| c * x - s * y).collect();
        let m2: Vec<f64> = g.iter().zip(&b).map(|(x, y)| s * x + c * y).collect();
        let ds = Dataset::new()
            .with_real_column("m1", m1)
            .unwrap()
            .with_real_column("m2", m2)
            .unwrap();
        let mixing = vec![vec![c, -s], vec![s, c]];
        let out = oracle_isolation_linear(&ds, &["m1", "m2"], &mixing, 0, "g_rec").unwrap();
        for (rec, orig) in out.real("g_rec").unwrap().iter().zip(&g) {
            assert_abs_diff_eq!(rec, orig, epsilon = 1e-12);
        }

        // Identity mixing returns the source unchanged.
        let identity = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let out = oracle_isolation_linear(&ds, &["m1", "m2"], &identity, 0, "m1_rec").unwrap();
        assert_eq!(out.real("m1_rec").unwrap(), ds.real("m1").unwrap());

        // Singular mixing is rejected.
        let singular = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert!(matches!(
            oracle_isolation_linear(&ds, &["m1", "m2"], &singular, 0, "x"),
            Err(CisError::NonInvertibleMixing)
        ));
    }
}
