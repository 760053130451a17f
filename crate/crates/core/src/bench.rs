//! The two benchmark pipelines: a synthetic Gaussian sweep over shift
//! magnitudes, and a tabular income-prediction task with a train era and a
//! shifted evaluation era.
//!
//! Both emit a [`BenchReport`]: per-method, per-condition means and standard
//! deviations over seeded repetitions. Reports serialize deterministically
//! (runtime is kept out of the JSON) so identical config and seed produce
//! byte-identical output.

use crate::cis::{emit_features, train_isolation, CisConfig, CisError, LearnerSpec};
use crate::dataset::{Dataset, DatasetError};
use crate::learn::{evaluate, fit_logistic_l1, LearnError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Cis(#[from] CisError),
    #[error("csv file `{path}`: {message}")]
    Csv { path: String, message: String },
    #[error("column `{0}` missing from `{1}`")]
    MissingCsvColumn(String, String),
    #[error("invalid config: {0}")]
    BadConfig(String),
}

/// Standard deviations of the two shift mechanisms in one environment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvPoint {
    pub sigma_mg: f64,
    pub sigma_mb: f64,
}

impl EnvPoint {
    pub fn label(&self) -> String {
        format!("sigma_mg={},sigma_mb={}", self.sigma_mg, self.sigma_mb)
    }
}

/// Generator and experiment parameters for the synthetic task. The sigma
/// fields are the training environment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub sigma_mg: f64,
    pub sigma_mb: f64,
    /// Per-vertex additive Gaussian noise.
    pub noise_sd: f64,
    /// Mixing angle, in degrees, applied to the two shared-proxy components.
    pub rotation_deg: f64,
    /// Label flip probability.
    pub flip_prob: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            sigma_mg: 1.0,
            sigma_mb: 1.0,
            noise_sd: 0.2,
            rotation_deg: 45.0,
            flip_prob: 0.05,
            n_train: 20_000,
            n_test: 20_000,
            repetitions: 20,
            seed: 0,
            lambda: 1e-3,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), BenchError> {
        if self.sigma_mg <= 0.0 || self.sigma_mb <= 0.0 || self.noise_sd <= 0.0 {
            return Err(BenchError::BadConfig(
                "standard deviations must be positive".to_string(),
            ));
        }
        if !(0.0..0.5).contains(&self.flip_prob) {
            return Err(BenchError::BadConfig(
                "flip probability must lie in [0, 0.5)".to_string(),
            ));
        }
        if self.repetitions == 0 || self.n_train == 0 || self.n_test == 0 {
            return Err(BenchError::BadConfig(
                "row counts and repetitions must be positive".to_string(),
            ));
        }
        Ok(())
    }

    pub fn train_env(&self) -> EnvPoint {
        EnvPoint {
            sigma_mg: self.sigma_mg,
            sigma_mb: self.sigma_mb,
        }
    }
}

fn derive_seed(base: u64, a: u64, b: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(a.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(b.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7))
}

/// Draws one dataset from the shared-proxy Gaussian model: a stable cause
/// chain feeding the label and an unstable effect chain, two pure proxies,
/// and a two-dimensional mixed proxy whose components are also retained as
/// hidden ground-truth columns.
///
/// Every non-root vertex is the average of its parents plus `noise_sd`
/// Gaussian noise; the label is the indicator that its parent sum is
/// positive, flipped with probability `flip_prob`.
pub fn generate_synthetic(cfg: &SyntheticConfig, env: EnvPoint, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mg_dist = Normal::new(0.0, env.sigma_mg).expect("positive sd");
    let mb_dist = Normal::new(0.0, env.sigma_mb).expect("positive sd");
    let noise = Normal::new(0.0, cfg.noise_sd).expect("positive sd");
    let theta = cfg.rotation_deg.to_radians();
    let (cos_t, sin_t) = (theta.cos(), theta.sin());

    let mut cols: BTreeMap<&str, Vec<f64>> = [
        "M_G", "M_B", "U_G", "U_B", "V_G", "V_B", "V_A_G", "V_A_B", "V_A_1", "V_A_2",
    ]
    .into_iter()
    .map(|name| (name, Vec::with_capacity(n)))
    .collect();
    let mut y_col = Vec::with_capacity(n);

    for _ in 0..n {
        let m_g = mg_dist.sample(&mut rng);
        let m_b = mb_dist.sample(&mut rng);
        let u_g = m_g + noise.sample(&mut rng);
        let mut y = u8::from(u_g > 0.0);
        if rng.random_bool(cfg.flip_prob) {
            y = 1 - y;
        }
        let u_b = (f64::from(y) + m_b) / 2.0 + noise.sample(&mut rng);
        let v_g = u_g + noise.sample(&mut rng);
        let v_b = u_b + noise.sample(&mut rng);
        let v_a_g = u_g + noise.sample(&mut rng);
        let v_a_b = u_b + noise.sample(&mut rng);
        let v_a_1 = cos_t * v_a_g - sin_t * v_a_b;
        let v_a_2 = sin_t * v_a_g + cos_t * v_a_b;

        cols.get_mut("M_G").unwrap().push(m_g);
        cols.get_mut("M_B").unwrap().push(m_b);
        cols.get_mut("U_G").unwrap().push(u_g);
        cols.get_mut("U_B").unwrap().push(u_b);
        cols.get_mut("V_G").unwrap().push(v_g);
        cols.get_mut("V_B").unwrap().push(v_b);
        cols.get_mut("V_A_G").unwrap().push(v_a_g);
        cols.get_mut("V_A_B").unwrap().push(v_a_b);
        cols.get_mut("V_A_1").unwrap().push(v_a_1);
        cols.get_mut("V_A_2").unwrap().push(v_a_2);
        y_col.push(u32::from(y));
    }

    let mut ds = Dataset::new();
    for name in [
        "M_G", "M_B", "U_G", "U_B", "V_G", "V_B", "V_A_G", "V_A_B", "V_A_1", "V_A_2",
    ] {
        ds = ds
            .with_real_column(name, cols.remove(name).unwrap())
            .expect("unique names");
    }
    ds.with_discrete_column("Y", y_col).expect("unique names")
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub sd: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary {
        mean,
        sd: var.sqrt(),
    }
}

/// Per-method, per-condition metric tables over seeded repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchReport {
    pub kind: String,
    pub methods: Vec<String>,
    pub conditions: Vec<String>,
    pub repetitions: usize,
    pub accuracy: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    pub f1: BTreeMap<String, BTreeMap<String, MetricSummary>>,
    /// Deviations from the documented default preprocessing, when any.
    #[serde(default)]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl BenchReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn accuracy_of(&self, method: &str, condition: &str) -> Option<MetricSummary> {
        self.accuracy.get(method)?.get(condition).copied()
    }

    /// Plot-ready CSV: one row per (condition, method).
    pub fn to_curves_csv(&self) -> String {
        let mut out = String::from("condition,method,accuracy_mean,accuracy_sd,f1_mean,f1_sd\n");
        for condition in &self.conditions {
            for method in &self.methods {
                let acc = self.accuracy[method][condition];
                let f1 = self.f1[method][condition];
                out.push_str(&format!(
                    "{condition},{method},{},{},{},{}\n",
                    acc.mean, acc.sd, f1.mean, f1.sd
                ));
            }
        }
        out
    }
}

pub const METHOD_ALL: &str = "all_features";
pub const METHOD_ENGINEERED: &str = "engineered_features";
pub const METHOD_LIMITED: &str = "limited_features";
pub const METHOD_ORACLE: &str = "oracle_component";

/// Runs the four-model comparison: fit on the training environment, evaluate
/// on every sweep point, `repetitions` times with derived seeds.
///
/// Methods: all observed features, the pure stable proxy only, the stable
/// proxy plus the per-stratum engineered columns, and the hidden-component
/// reference that replaces the engineered columns with the true stable
/// component of the mixed proxy.
pub fn run_synthetic_sweep(
    cfg: &SyntheticConfig,
    sweep: &[EnvPoint],
) -> Result<BenchReport, BenchError> {
    cfg.validate()?;
    let start = std::time::Instant::now();

    struct RepOutcome {
        // accuracy[point][method], f1[point][method]
        accuracy: Vec<Vec<f64>>,
        f1: Vec<Vec<f64>>,
    }

    let rep_results: Vec<Result<RepOutcome, BenchError>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let train_seed = derive_seed(cfg.seed, rep as u64, 0);
            let train = generate_synthetic(cfg, cfg.train_env(), cfg.n_train, train_seed);
            let isolation = train_isolation(
                &train,
                "V_G",
                &["V_A_1", "V_A_2"],
                "Y",
                LearnerSpec::default(),
                &CisConfig::default(),
            )?;
            let train_aug = emit_features(&isolation, &train)?;
            let engineered: Vec<&str> = {
                let mut f = vec!["V_G"];
                f.extend(isolation.emitted_columns.iter().map(String::as_str));
                f
            };
            let feature_sets: Vec<(&str, Vec<&str>)> = vec![
                (METHOD_ALL, vec!["V_G", "V_A_1", "V_A_2"]),
                (METHOD_ENGINEERED, engineered),
                (METHOD_LIMITED, vec!["V_G"]),
                (METHOD_ORACLE, vec!["V_G", "V_A_G"]),
            ];
            let models = feature_sets
                .iter()
                .map(|(_, features)| {
                    fit_logistic_l1(&train_aug, features, "Y", cfg.lambda, train_seed)
                })
                .collect::<Result<Vec<_>, _>>()?;

            let mut accuracy = Vec::with_capacity(sweep.len());
            let mut f1 = Vec::with_capacity(sweep.len());
            for (pi, &env) in sweep.iter().enumerate() {
                let test_seed = derive_seed(cfg.seed, rep as u64, 1 + pi as u64);
                let test = generate_synthetic(cfg, env, cfg.n_test, test_seed);
                let test_aug = emit_features(&isolation, &test)?;
                let mut point_acc = Vec::with_capacity(models.len());
                let mut point_f1 = Vec::with_capacity(models.len());
                for model in &models {
                    let metrics = evaluate(model, &test_aug, "Y")?;
                    point_acc.push(metrics.accuracy);
                    point_f1.push(metrics.f1);
                }
                accuracy.push(point_acc);
                f1.push(point_f1);
            }
            Ok(RepOutcome { accuracy, f1 })
        })
        .collect();

    let mut outcomes = Vec::with_capacity(cfg.repetitions);
    for r in rep_results {
        outcomes.push(r?);
    }

    let method_names = [METHOD_ALL, METHOD_ENGINEERED, METHOD_LIMITED, METHOD_ORACLE];
    let conditions: Vec<String> = sweep.iter().map(EnvPoint::label).collect();
    let mut accuracy: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    let mut f1: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for (mi, method) in method_names.iter().enumerate() {
        let mut acc_row = BTreeMap::new();
        let mut f1_row = BTreeMap::new();
        for (pi, condition) in conditions.iter().enumerate() {
            let acc_values: Vec<f64> = outcomes.iter().map(|o| o.accuracy[pi][mi]).collect();
            let f1_values: Vec<f64> = outcomes.iter().map(|o| o.f1[pi][mi]).collect();
            acc_row.insert(condition.clone(), summarize(&acc_values));
            f1_row.insert(condition.clone(), summarize(&f1_values));
        }
        accuracy.insert(method.to_string(), acc_row);
        f1.insert(method.to_string(), f1_row);
    }

    Ok(BenchReport {
        kind: "synthetic".to_string(),
        methods: method_names.iter().map(|s| s.to_string()).collect(),
        conditions,
        repetitions: cfg.repetitions,
        accuracy,
        f1,
        notes: Vec::new(),
        runtime: start.elapsed(),
    })
}

/// Configuration of the tabular income task. The CSVs are person-level rows
/// with at least the feature columns and the income column.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularConfig {
    pub train_csv: PathBuf,
    pub test_csv: PathBuf,
    /// Display label for the run (e.g. a state code).
    #[serde(default)]
    pub state: String,
    pub label_col: String,
    /// Strictly-greater-than threshold for binarizing the income column.
    pub threshold: f64,
    /// The stable feature used alone and as the isolation target.
    pub stable_col: String,
    /// The features used directly in the full model and as isolation sources.
    pub unstable_cols: Vec<String>,
    /// Column coded {1, 2} that is mapped to {1, 0}.
    pub flag_col: Option<String>,
    pub repetitions: usize,
    pub holdout_frac: f64,
    pub seed: u64,
    pub lambda: f64,
    pub min_stratum: usize,
}

impl Default for TabularConfig {
    fn default() -> Self {
        TabularConfig {
            train_csv: PathBuf::new(),
            test_csv: PathBuf::new(),
            state: String::new(),
            label_col: "PINCP".to_string(),
            threshold: 50_000.0,
            stable_col: "SCHL".to_string(),
            unstable_cols: vec!["HINS4".to_string(), "JWMNP".to_string()],
            flag_col: Some("HINS4".to_string()),
            repetitions: 10,
            holdout_frac: 0.2,
            seed: 0,
            lambda: 1e-3,
            min_stratum: 50,
        }
    }
}

/// Ingestion outcome: the two eras plus the preprocessing bookkeeping.
#[derive(Debug)]
pub struct TabularData {
    pub train: Dataset,
    pub test: Dataset,
    pub dropped_train: usize,
    pub dropped_test: usize,
    pub notes: Vec<String>,
}

fn read_required_csv(
    path: &Path,
    required: &[&str],
    flag_col: Option<&str>,
    label_col: &str,
    threshold: f64,
) -> Result<(Dataset, usize), BenchError> {
    let to_err = |message: String| BenchError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| to_err(e.to_string()))?;
    let headers = reader.headers().map_err(|e| to_err(e.to_string()))?.clone();
    let mut positions = Vec::with_capacity(required.len());
    for col in required {
        let pos = headers.iter().position(|h| h == *col).ok_or_else(|| {
            BenchError::MissingCsvColumn(col.to_string(), path.display().to_string())
        })?;
        positions.push(pos);
    }

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); required.len()];
    let mut dropped = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| to_err(e.to_string()))?;
        let mut row = Vec::with_capacity(required.len());
        let mut ok = true;
        for &pos in &positions {
            match record.get(pos).map(str::trim) {
                Some(field) if !field.is_empty() => match field.parse::<f64>() {
                    Ok(v) => row.push(v),
                    Err(_) => {
                        ok = false;
                        break;
                    }
                },
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            dropped += 1;
            continue;
        }
        for (col, v) in values.iter_mut().zip(row) {
            col.push(v);
        }
    }

    let mut ds = Dataset::new();
    for (i, col) in required.iter().enumerate() {
        if *col == label_col {
            let bin: Vec<u32> = values[i].iter().map(|&v| u32::from(v > threshold)).collect();
            ds = ds.with_discrete_column("label", bin)?;
        } else if Some(*col) == flag_col {
            // {1, 2} coded flag becomes {1, 0}; other numeric codes map to 0.
            let bin: Vec<u32> = values[i].iter().map(|&v| u32::from(v == 1.0)).collect();
            ds = ds.with_discrete_column(col, bin)?;
        } else {
            ds = ds.with_real_column(col, values[i].clone())?;
        }
    }
    Ok((ds, dropped))
}

/// Reads both eras, dropping rows with missing or unparseable required
/// fields, binarizing the label at the strict threshold, and recoding the
/// {1,2} flag column to {1,0}.
pub fn ingest_tabular(cfg: &TabularConfig) -> Result<TabularData, BenchError> {
    let mut required: Vec<&str> = vec![cfg.stable_col.as_str()];
    required.extend(cfg.unstable_cols.iter().map(String::as_str));
    required.push(cfg.label_col.as_str());
    let (train, dropped_train) = read_required_csv(
        &cfg.train_csv,
        &required,
        cfg.flag_col.as_deref(),
        &cfg.label_col,
        cfg.threshold,
    )?;
    let (test, dropped_test) = read_required_csv(
        &cfg.test_csv,
        &required,
        cfg.flag_col.as_deref(),
        &cfg.label_col,
        cfg.threshold,
    )?;
    let mut notes = vec![format!(
        "rows with missing or non-numeric required fields dropped: {dropped_train} (train era), {dropped_test} (evaluation era)"
    )];
    if let Some(flag) = &cfg.flag_col {
        notes.push(format!("{flag} recoded from {{1,2}} to {{1,0}}"));
    }
    notes.push(format!(
        "label = ({} > {}), strict inequality",
        cfg.label_col, cfg.threshold
    ));
    Ok(TabularData {
        train,
        test,
        dropped_train,
        dropped_test,
        notes,
    })
}

/// Runs the three-method comparison on the tabular task over seeded holdout
/// splits: all features, the stable feature alone, and the stable feature
/// plus per-stratum engineered columns.
pub fn run_tabular(cfg: &TabularConfig) -> Result<BenchReport, BenchError> {
    if cfg.repetitions == 0 {
        return Err(BenchError::BadConfig("repetitions must be positive".to_string()));
    }
    if !(0.0..1.0).contains(&cfg.holdout_frac) || cfg.holdout_frac == 0.0 {
        return Err(BenchError::BadConfig(
            "holdout fraction must lie in (0, 1)".to_string(),
        ));
    }
    let start = std::time::Instant::now();
    let data = ingest_tabular(cfg)?;
    let conditions = ["in_domain_2019", "out_of_domain_2021"];
    let unstable: Vec<&str> = cfg.unstable_cols.iter().map(String::as_str).collect();

    struct RepOutcome {
        accuracy: Vec<Vec<f64>>, // [condition][method]
        f1: Vec<Vec<f64>>,
    }

    let results: Vec<Result<RepOutcome, BenchError>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| {
            let split_seed = derive_seed(cfg.seed, rep as u64, 0);
            let (holdout, train) = data.train.split(cfg.holdout_frac, split_seed);
            let isolation = train_isolation(
                &train,
                &cfg.stable_col,
                &unstable,
                "label",
                LearnerSpec::default(),
                &CisConfig {
                    min_stratum: cfg.min_stratum,
                    seed: split_seed,
                },
            )?;
            let train_aug = emit_features(&isolation, &train)?;

            let mut all_features: Vec<&str> = vec![cfg.stable_col.as_str()];
            all_features.extend(&unstable);
            let engineered: Vec<&str> = {
                let mut f = vec![cfg.stable_col.as_str()];
                f.extend(isolation.emitted_columns.iter().map(String::as_str));
                f
            };
            let feature_sets: Vec<(&str, Vec<&str>)> = vec![
                (METHOD_ALL, all_features),
                (METHOD_ENGINEERED, engineered),
                (METHOD_LIMITED, vec![cfg.stable_col.as_str()]),
            ];
            let models = feature_sets
                .iter()
                .map(|(_, features)| {
                    fit_logistic_l1(&train_aug, features, "label", cfg.lambda, split_seed)
                })
                .collect::<Result<Vec<_>, _>>()?;

            let mut accuracy = Vec::new();
            let mut f1 = Vec::new();
            for eval_ds in [&holdout, &data.test] {
                let aug = emit_features(&isolation, eval_ds)?;
                let mut acc_row = Vec::new();
                let mut f1_row = Vec::new();
                for model in &models {
                    let metrics = evaluate(model, &aug, "label")?;
                    acc_row.push(metrics.accuracy);
                    f1_row.push(metrics.f1);
                }
                accuracy.push(acc_row);
                f1.push(f1_row);
            }
            Ok(RepOutcome { accuracy, f1 })
        })
        .collect();

    let mut outcomes = Vec::with_capacity(cfg.repetitions);
    for r in results {
        outcomes.push(r?);
    }

    let method_names = [METHOD_ALL, METHOD_ENGINEERED, METHOD_LIMITED];
    let mut accuracy: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    let mut f1: BTreeMap<String, BTreeMap<String, MetricSummary>> = BTreeMap::new();
    for (mi, method) in method_names.iter().enumerate() {
        let mut acc_row = BTreeMap::new();
        let mut f1_row = BTreeMap::new();
        for (ci, condition) in conditions.iter().enumerate() {
            let acc_values: Vec<f64> = outcomes.iter().map(|o| o.accuracy[ci][mi]).collect();
            let f1_values: Vec<f64> = outcomes.iter().map(|o| o.f1[ci][mi]).collect();
            acc_row.insert(condition.to_string(), summarize(&acc_values));
            f1_row.insert(condition.to_string(), summarize(&f1_values));
        }
        accuracy.insert(method.to_string(), acc_row);
        f1.insert(method.to_string(), f1_row);
    }

    let mut notes = data.notes;
    if !cfg.state.is_empty() {
        notes.push(format!("state: {}", cfg.state));
    }
    Ok(BenchReport {
        kind: "tabular".to_string(),
        methods: method_names.iter().map(|s| s.to_string()).collect(),
        conditions: conditions.iter().map(|s| s.to_string()).collect(),
        repetitions: cfg.repetitions,
        accuracy,
        f1,
        notes,
        runtime: start.elapsed(),
    })
}
