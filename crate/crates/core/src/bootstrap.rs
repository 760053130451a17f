//! The label-conditioned dependence graph over proxies and seed-based
//! propagation of good/bad labels.
//!
//! Two construction modes share the same downstream machinery: an oracle mode
//! that queries d-separation on a known diagram, and a statistical mode that
//! runs per-stratum conditional independence tests on sampled data.

use crate::dataset::{Dataset, DatasetError};
use crate::graph::{
    classify_hidden, classify_proxies, d_separated, DistributionShiftDiagram, GraphError,
};
use crate::info::{discretize, Binning, InfoError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error("dependence edge {0} -- {1} contradicts the shared-parent characterization")]
    EdgeCharacterization(String, String),
    #[error("seed `{0}` is not a node of the dependence graph")]
    UnknownSeed(String),
    #[error("stratification column `{0}` must be discrete with at least two values")]
    BadStratification(String),
    #[error("alpha level {0} outside (0, 1)")]
    BadAlphaLevel(f64),
}

/// Known or inferred class of a proxy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProxyClass {
    Good,
    Bad,
    Ambiguous,
    Unlabeled,
}

/// Undirected graph over proxies with an edge wherever the pair stays
/// dependent after conditioning on the label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DependenceGraph {
    pub nodes: Vec<String>,
    /// Normalized (low index, high index) pairs.
    pub edges: BTreeSet<(usize, usize)>,
    /// Pairs the statistical mode could not decide; excluded from
    /// propagation and reported separately, never treated as absent.
    pub undetermined: BTreeSet<(usize, usize)>,
}

impl DependenceGraph {
    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n == name)
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn neighbors(&self, v: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| {
                if a == v {
                    Some(b)
                } else if b == v {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Edge list by node name, for reports.
    pub fn named_edges(&self) -> Vec<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.nodes[a].clone(), self.nodes[b].clone()))
            .collect()
    }
}

/// Builds the dependence graph from d-separation queries on a valid diagram.
///
/// Every edge is post-checked against its structural characterization: the
/// pair shares a parent, or both have a parent that causes the label.
pub fn dependence_graph_oracle(
    dsd: &DistributionShiftDiagram,
) -> Result<DependenceGraph, BootstrapError> {
    let violations = dsd.validate();
    if !violations.is_empty() {
        return Err(GraphError::InvalidDiagram(violations.join("; ")).into());
    }
    let dag = dsd.dag();
    let y = dsd.label();
    let proxies = dsd.proxies();
    let nodes: Vec<String> = proxies.iter().map(|&v| dag.name(v).to_string()).collect();
    let mut edges = BTreeSet::new();
    for i in 0..proxies.len() {
        for j in i + 1..proxies.len() {
            let (vi, vj) = (proxies[i], proxies[j]);
            if !d_separated(dag, &[vi], &[vj], &[y])? {
                let shared_parent = dag
                    .parents_of(vi)
                    .iter()
                    .any(|p| dag.parents_of(vj).contains(p));
                let causes = dag.parents_of(y);
                let both_cause_children = dag.parents_of(vi).iter().any(|p| causes.contains(p))
                    && dag.parents_of(vj).iter().any(|p| causes.contains(p));
                if !shared_parent && !both_cause_children {
                    return Err(BootstrapError::EdgeCharacterization(
                        nodes[i].clone(),
                        nodes[j].clone(),
                    ));
                }
                edges.insert((i, j));
            }
        }
    }
    Ok(DependenceGraph {
        nodes,
        edges,
        undetermined: BTreeSet::new(),
    })
}

/// Conditional independence test used by the statistical mode.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiTest {
    /// Likelihood-ratio (G) test with the chi-squared reference distribution.
    GTest,
    /// Permutation null for the G statistic; slower but assumption-free.
    Permutation { rounds: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CiTestConfig {
    pub test: CiTest,
    /// Strata smaller than this make every pair undetermined.
    pub min_stratum: usize,
    pub binning: Binning,
    /// Seed for the permutation null; unused by the G test.
    pub seed: u64,
}

impl Default for CiTestConfig {
    fn default() -> Self {
        CiTestConfig {
            test: CiTest::GTest,
            min_stratum: 30,
            binning: Binning::default(),
            seed: 0,
        }
    }
}

/// G statistic and degrees of freedom of an independence test on a
/// contingency table over (row code, column code) pairs; rows or columns with
/// zero marginal count are dropped.
fn g_statistic(pairs: &[(u32, u32)]) -> (f64, usize) {
    let mut row_tot: BTreeMap<u32, f64> = BTreeMap::new();
    let mut col_tot: BTreeMap<u32, f64> = BTreeMap::new();
    let mut cells: BTreeMap<(u32, u32), f64> = BTreeMap::new();
    for &(a, b) in pairs {
        *row_tot.entry(a).or_default() += 1.0;
        *col_tot.entry(b).or_default() += 1.0;
        *cells.entry((a, b)).or_default() += 1.0;
    }
    let n = pairs.len() as f64;
    let mut g = 0.0;
    for (&(a, b), &obs) in &cells {
        let expected = row_tot[&a] * col_tot[&b] / n;
        if obs > 0.0 {
            g += 2.0 * obs * (obs / expected).ln();
        }
    }
    let df = row_tot.len().saturating_sub(1) * col_tot.len().saturating_sub(1);
    (g.max(0.0), df)
}

fn chi_squared_sf(stat: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    (1.0 - dist.cdf(stat)).clamp(0.0, 1.0)
}

fn stratum_p_value(pairs: &[(u32, u32)], cfg: &CiTestConfig, pair_seed: u64) -> f64 {
    let (g_obs, df) = g_statistic(pairs);
    if df == 0 {
        return 1.0;
    }
    match cfg.test {
        CiTest::GTest => chi_squared_sf(g_obs, df),
        CiTest::Permutation { rounds } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ pair_seed);
            let mut right: Vec<u32> = pairs.iter().map(|&(_, b)| b).collect();
            let mut at_least = 1usize;
            let mut permuted = pairs.to_vec();
            for _ in 0..rounds {
                right.shuffle(&mut rng);
                for (slot, &b) in permuted.iter_mut().zip(&right) {
                    slot.1 = b;
                }
                let (g_perm, _) = g_statistic(&permuted);
                if g_perm >= g_obs {
                    at_least += 1;
                }
            }
            at_least as f64 / (rounds + 1) as f64
        }
    }
}

/// Builds the dependence graph from data: per-stratum independence tests on
/// each proxy pair, combined across label strata with Fisher's method.
///
/// Deterministic given the dataset and configuration. Any stratum below
/// `min_stratum` rows leaves every pair undetermined.
pub fn dependence_graph_statistical(
    ds: &Dataset,
    proxy_cols: &[&str],
    y: &str,
    alpha_level: f64,
    cfg: &CiTestConfig,
) -> Result<DependenceGraph, BootstrapError> {
    if alpha_level <= 0.0 || alpha_level >= 1.0 {
        return Err(BootstrapError::BadAlphaLevel(alpha_level));
    }
    let strata = ds
        .stratify(y)
        .map_err(|_| BootstrapError::BadStratification(y.to_string()))?;
    if strata.len() < 2 {
        return Err(BootstrapError::BadStratification(y.to_string()));
    }
    let nodes: Vec<String> = proxy_cols.iter().map(|s| s.to_string()).collect();
    let codes: Vec<Vec<u32>> = proxy_cols
        .iter()
        .map(|c| discretize(ds, c, cfg.binning))
        .collect::<Result<_, _>>()?;

    let mut edges = BTreeSet::new();
    let mut undetermined = BTreeSet::new();
    let strata_ok = strata.values().all(|rows| rows.len() >= cfg.min_stratum);

    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            if !strata_ok {
                undetermined.insert((i, j));
                continue;
            }
            let mut log_p_sum = 0.0;
            let mut usable = 0usize;
            for (sv, rows) in &strata {
                let pairs: Vec<(u32, u32)> =
                    rows.iter().map(|&r| (codes[i][r], codes[j][r])).collect();
                let pair_seed = ((i as u64) << 40) ^ ((j as u64) << 20) ^ u64::from(*sv);
                let p = stratum_p_value(&pairs, cfg, pair_seed);
                log_p_sum += p.max(1e-300).ln();
                usable += 1;
            }
            let fisher = -2.0 * log_p_sum;
            let combined_p = chi_squared_sf(fisher, 2 * usable);
            if combined_p < alpha_level {
                edges.insert((i, j));
            }
        }
    }
    Ok(DependenceGraph {
        nodes,
        edges,
        undetermined,
    })
}

/// Proxies with classes known up front (from domain knowledge).
pub type SeedSet = BTreeMap<String, ProxyClass>;

/// Outcome of propagation: the labels each proxy accumulated and the class
/// they imply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelState {
    pub labels: BTreeMap<String, LabelInfo>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LabelInfo {
    pub good: bool,
    pub bad: bool,
    pub class: ProxyClass,
    pub is_seed: bool,
}

impl LabelState {
    pub fn class_of(&self, name: &str) -> Option<ProxyClass> {
        self.labels.get(name).map(|l| l.class)
    }

    pub fn by_class(&self, class: ProxyClass) -> Vec<String> {
        self.labels
            .iter()
            .filter(|(_, l)| l.class == class)
            .map(|(n, _)| n.clone())
            .collect()
    }
}

/// Propagates seed classes one hop across the dependence graph: neighbors of
/// good seeds gain a good label, neighbors of bad seeds a bad label, and
/// ambiguous seeds propagate nothing. Vertices with both labels become
/// ambiguous; seeds keep their known class.
pub fn bootstrap_labels(
    g: &DependenceGraph,
    seeds: &SeedSet,
) -> Result<LabelState, BootstrapError> {
    let mut index_of_seed = BTreeMap::new();
    for name in seeds.keys() {
        let idx = g
            .node_index(name)
            .ok_or_else(|| BootstrapError::UnknownSeed(name.clone()))?;
        index_of_seed.insert(name.clone(), idx);
    }
    let mut good = vec![false; g.nodes.len()];
    let mut bad = vec![false; g.nodes.len()];
    for (name, &class) in seeds {
        let idx = index_of_seed[name];
        let marks = match class {
            ProxyClass::Good => &mut good,
            ProxyClass::Bad => &mut bad,
            ProxyClass::Ambiguous | ProxyClass::Unlabeled => continue,
        };
        for nb in g.neighbors(idx) {
            marks[nb] = true;
        }
    }
    let mut labels = BTreeMap::new();
    for (i, name) in g.nodes.iter().enumerate() {
        let (class, is_seed) = if let Some(&known) = seeds.get(name) {
            (known, true)
        } else {
            let class = match (good[i], bad[i]) {
                (true, true) => ProxyClass::Ambiguous,
                (true, false) => ProxyClass::Good,
                (false, true) => ProxyClass::Bad,
                (false, false) => ProxyClass::Unlabeled,
            };
            (class, false)
        };
        labels.insert(
            name.clone(),
            LabelInfo {
                good: good[i],
                bad: bad[i],
                class,
                is_seed,
            },
        );
    }
    Ok(LabelState { labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionOutcome {
    pub id: u8,
    pub status: ConditionStatus,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedConditionReport {
    pub conditions: Vec<ConditionOutcome>,
}

impl SeedConditionReport {
    pub fn all_checkable_pass(&self) -> bool {
        self.conditions
            .iter()
            .all(|c| c.status != ConditionStatus::Fail)
    }
}

/// Checks the coverage conditions under which one-hop propagation labels
/// every singly-labeled vertex correctly.
///
/// Condition 1 (partial faithfulness) is an assumption about the data, not a
/// graph property, and is reported as skipped. Condition 4 is applied in its
/// strict form: a seed among the children of each unstable hidden vertex.
pub fn verify_seed_conditions(
    dsd: &DistributionShiftDiagram,
    seeds: &SeedSet,
) -> Result<SeedConditionReport, BootstrapError> {
    let dag = dsd.dag();
    let y = dsd.label();
    let hp = classify_hidden(dsd)?;
    let seed_ids: BTreeSet<usize> = seeds
        .keys()
        .filter_map(|name| dag.index_of(name))
        .collect();
    let has_seed_child =
        |u: usize| -> bool { dag.children_of(u).iter().any(|c| seed_ids.contains(c)) };

    let mut conditions = Vec::new();
    conditions.push(ConditionOutcome {
        id: 1,
        status: ConditionStatus::Skipped,
        detail: "partial faithfulness is an assumption about the distribution, not checkable from the graph alone".to_string(),
    });

    let good_effects: Vec<usize> = hp
        .good
        .iter()
        .copied()
        .filter(|&u| dag.has_edge(y, u))
        .collect();
    let missing2: Vec<String> = good_effects
        .iter()
        .copied()
        .filter(|&u| !has_seed_child(u))
        .map(|u| dag.name(u).to_string())
        .collect();
    conditions.push(ConditionOutcome {
        id: 2,
        status: if missing2.is_empty() {
            ConditionStatus::Pass
        } else {
            ConditionStatus::Fail
        },
        detail: if missing2.is_empty() {
            format!(
                "seed child present for all {} stable effects",
                good_effects.len()
            )
        } else {
            format!("no seed child for stable effect(s) {}", missing2.join(", "))
        },
    });

    let causes = dag.parents_of(y);
    let cause_child_seed = causes.iter().any(|&u| has_seed_child(u));
    conditions.push(ConditionOutcome {
        id: 3,
        status: if causes.is_empty() || cause_child_seed {
            ConditionStatus::Pass
        } else {
            ConditionStatus::Fail
        },
        detail: if causes.is_empty() {
            "label has no causes; vacuous".to_string()
        } else if cause_child_seed {
            "a seed is a child of some cause of the label".to_string()
        } else {
            "no seed among children of the label's causes".to_string()
        },
    });

    let missing4: Vec<String> = hp
        .bad
        .iter()
        .copied()
        .filter(|&u| !has_seed_child(u))
        .map(|u| dag.name(u).to_string())
        .collect();
    conditions.push(ConditionOutcome {
        id: 4,
        status: if missing4.is_empty() {
            ConditionStatus::Pass
        } else {
            ConditionStatus::Fail
        },
        detail: if missing4.is_empty() {
            format!(
                "seed child present for all {} unstable vertices",
                hp.bad.len()
            )
        } else {
            format!(
                "no seed child for unstable vertex(es) {}",
                missing4.join(", ")
            )
        },
    });

    Ok(SeedConditionReport { conditions })
}

/// Ground-truth classes by proxy name, as implied by the diagram itself.
/// Convenience for seed construction and test assertions.
pub fn true_classes(
    dsd: &DistributionShiftDiagram,
) -> Result<BTreeMap<String, ProxyClass>, BootstrapError> {
    let hp = classify_hidden(dsd)?;
    let pp = classify_proxies(dsd, &hp);
    let dag = dsd.dag();
    let mut out = BTreeMap::new();
    for v in dsd.proxies() {
        let class = if pp.good.contains(&v) {
            ProxyClass::Good
        } else if pp.bad.contains(&v) {
            ProxyClass::Bad
        } else {
            ProxyClass::Ambiguous
        };
        out.insert(dag.name(v).to_string(), class);
    }
    Ok(out)
}
