//! The end-to-end procedure: build the dependence graph on label strata,
//! propagate seed labels, split the ambiguous proxies through auxiliary
//! tasks, and fit the final model on the stable and engineered features.

use crate::{CliError, CliResult};
use percis_core::bootstrap::{
    bootstrap_labels, dependence_graph_statistical, CiTestConfig, ProxyClass,
};
use percis_core::cis::{emit_features, train_isolation, CisConfig, LearnerSpec};
use percis_core::formats::{read_csv, read_seeds, write_csv, write_json};
use percis_core::info::Binning;
use percis_core::learn::{evaluate, fit_logistic_l1, EvalMetrics, LinearModel};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub data_csv: PathBuf,
    pub label: String,
    /// Proxy columns; defaults to every non-label column.
    #[serde(default)]
    pub proxies: Vec<String>,
    pub seeds: PathBuf,
    pub out_dir: PathBuf,
    #[serde(default = "default_alpha_level")]
    pub alpha_level: f64,
    #[serde(default = "default_min_stratum")]
    pub min_stratum: usize,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_holdout")]
    pub holdout_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_alpha_level() -> f64 {
    0.01
}
fn default_min_stratum() -> usize {
    30
}
fn default_lambda() -> f64 {
    1e-3
}
fn default_holdout() -> f64 {
    0.2
}

#[derive(Serialize)]
struct LabelsArtifact {
    labels: BTreeMap<String, ProxyClass>,
    edges: Vec<(String, String)>,
    undetermined: Vec<(String, String)>,
}

#[derive(Serialize)]
struct MetricsArtifact {
    features: Vec<String>,
    stable_proxies: Vec<String>,
    ambiguous_proxies: Vec<String>,
    excluded_proxies: Vec<String>,
    engineered_columns: Vec<String>,
    holdout: EvalMetrics,
    train_rows: usize,
    holdout_rows: usize,
}

pub fn run(config_path: PathBuf, seed_override: Option<u64>) -> CliResult {
    let body = std::fs::read_to_string(&config_path)
        .map_err(|e| CliError::user(format!("cannot read `{}`: {e}", config_path.display())))?;
    let mut cfg: PipelineConfig = serde_json::from_str(&body)
        .map_err(|e| CliError::user(format!("cannot parse `{}`: {e}", config_path.display())))?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::user(format!("cannot create `{}`: {e}", cfg.out_dir.display())))?;

    let seeds = read_seeds(&cfg.seeds)?;
    let (ds, dropped) = read_csv(&cfg.data_csv, None)?;
    if dropped > 0 {
        eprintln!("pipeline: dropped {dropped} incomplete rows");
    }
    let proxies: Vec<String> = if cfg.proxies.is_empty() {
        ds.column_names()
            .into_iter()
            .filter(|c| *c != cfg.label)
            .map(|c| c.to_string())
            .collect()
    } else {
        cfg.proxies.clone()
    };

    // Stage 1: dependence graph on label strata.
    let proxy_refs: Vec<&str> = proxies.iter().map(String::as_str).collect();
    let ci_cfg = CiTestConfig {
        min_stratum: cfg.min_stratum,
        binning: Binning::default(),
        seed: cfg.seed,
        ..CiTestConfig::default()
    };
    let graph =
        dependence_graph_statistical(&ds, &proxy_refs, &cfg.label, cfg.alpha_level, &ci_cfg)?;

    // Stage 2: seed propagation.
    let state = bootstrap_labels(&graph, &seeds)?;
    let labels_artifact = LabelsArtifact {
        labels: state
            .labels
            .iter()
            .map(|(name, info)| (name.clone(), info.class))
            .collect(),
        edges: graph.named_edges(),
        undetermined: graph
            .undetermined
            .iter()
            .map(|&(a, b)| (graph.nodes[a].clone(), graph.nodes[b].clone()))
            .collect(),
    };
    write_json(&cfg.out_dir.join("labels.json"), &labels_artifact)?;

    let stable = state.by_class(ProxyClass::Good);
    let ambiguous = state.by_class(ProxyClass::Ambiguous);
    let mut excluded = state.by_class(ProxyClass::Bad);
    excluded.extend(state.by_class(ProxyClass::Unlabeled));
    if stable.is_empty() {
        return Err(CliError::user(
            "no proxies were classified stable; seed coverage is insufficient to build a model",
        ));
    }

    // Stage 3: splitting on the ambiguous proxies, one isolation task per
    // stable proxy. Skipped cleanly when nothing is ambiguous.
    let cis_cfg = CisConfig {
        min_stratum: cfg.min_stratum.max(2),
        seed: cfg.seed,
    };
    let mut augmented = ds.clone();
    let mut engineered_columns = Vec::new();
    let mut isolation_models = Vec::new();
    if !ambiguous.is_empty() {
        let sources: Vec<&str> = ambiguous.iter().map(String::as_str).collect();
        for target in &stable {
            let isolation = train_isolation(
                &augmented,
                target,
                &sources,
                &cfg.label,
                LearnerSpec::default(),
                &cis_cfg,
            )?;
            augmented = emit_features(&isolation, &augmented)?;
            engineered_columns.extend(isolation.emitted_columns.clone());
            isolation_models.push(isolation);
        }
    }
    write_csv(&cfg.out_dir.join("engineered.csv"), &augmented)?;
    write_json(&cfg.out_dir.join("isolation.json"), &isolation_models)?;

    // Stage 4: final model on stable plus engineered features, scored on a
    // held-out split.
    let mut features: Vec<String> = stable.clone();
    features.extend(engineered_columns.iter().cloned());
    let feature_refs: Vec<&str> = features.iter().map(String::as_str).collect();
    let (holdout, train) = augmented.split(cfg.holdout_frac, cfg.seed);
    let model: LinearModel =
        fit_logistic_l1(&train, &feature_refs, &cfg.label, cfg.lambda, cfg.seed)?;
    let metrics = evaluate(&model, &holdout, &cfg.label)?;
    write_json(&cfg.out_dir.join("model.json"), &model)?;
    write_json(
        &cfg.out_dir.join("metrics.json"),
        &MetricsArtifact {
            features,
            stable_proxies: stable,
            ambiguous_proxies: ambiguous,
            excluded_proxies: excluded,
            engineered_columns,
            holdout: metrics,
            train_rows: train.n_rows(),
            holdout_rows: holdout.n_rows(),
        },
    )?;
    Ok(())
}
