//! Information-theoretic calculator: exact quantities on enumerated joint
//! tables, plug-in estimators on sampled data, and checkers for the
//! inequality bounds that hold in the dropout setting.
//!
//! All logarithms are base 2 and every quantity is reported in bits, with the
//! convention `0 * log 0 = 0`.

use crate::dataset::{ColumnData, Dataset, DatasetError};
use crate::dropout_scm::{DropoutScm, JointTable, ScmError};
use crate::graph::{d_separated, classify_hidden, GraphError, VertexId, VertexRole};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InfoError {
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("query sets must be disjoint")]
    OverlappingSets,
    #[error("vertex {0} is not a {1}")]
    WrongRole(usize, &'static str),
    #[error("vertex {vertex} is not in the {partition} partition")]
    WrongPartition { vertex: usize, partition: &'static str },
    #[error("closed form requires a root mechanism feeding the hidden vertex, got {0}")]
    UnsupportedShape(String),
    #[error("dataset has no rows")]
    EmptyData,
    #[error("binning requires at least one bin")]
    BadBinning,
}

/// Numerical tolerances used across the exact-identity checks. `exact` guards
/// closed-form equalities, `mass` probability normalization.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tolerances {
    pub exact: f64,
    pub mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            exact: 1e-9,
            mass: 1e-12,
        }
    }
}

fn xlog2x(p: f64) -> f64 {
    if p > 0.0 {
        p * p.log2()
    } else {
        0.0
    }
}

fn check_disjoint(sets: &[&[VertexId]]) -> Result<(), InfoError> {
    let mut seen = std::collections::BTreeSet::new();
    for set in sets {
        for &v in *set {
            if !seen.insert(v) {
                return Err(InfoError::OverlappingSets);
            }
        }
    }
    Ok(())
}

fn union(sets: &[&[VertexId]]) -> Vec<VertexId> {
    let mut out: Vec<VertexId> = sets.iter().flat_map(|s| s.iter().copied()).collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Shannon entropy of the marginal over `a`, in bits.
pub fn entropy(table: &JointTable, a: &[VertexId]) -> Result<f64, InfoError> {
    let marginal = table.marginal(a)?;
    Ok(-marginal.probs().iter().copied().map(xlog2x).sum::<f64>())
}

/// Conditional mutual information `I(a : b | z)` via the entropy expansion
/// `H(a,z) + H(b,z) - H(a,b,z) - H(z)`.
pub fn conditional_mi(
    table: &JointTable,
    a: &[VertexId],
    b: &[VertexId],
    z: &[VertexId],
) -> Result<f64, InfoError> {
    check_disjoint(&[a, b, z])?;
    let az = union(&[a, z]);
    let bz = union(&[b, z]);
    let abz = union(&[a, b, z]);
    Ok(entropy(table, &az)? + entropy(table, &bz)? - entropy(table, &abz)?
        - entropy(table, z)?)
}

/// Mutual information `I(a : b)`.
pub fn mutual_info(table: &JointTable, a: &[VertexId], b: &[VertexId]) -> Result<f64, InfoError> {
    conditional_mi(table, a, b, &[])
}

/// Interaction information `I(a : b : c) = I(a : b) - I(a : b | c)`;
/// symmetric in its three arguments and possibly negative.
pub fn interaction_info(
    table: &JointTable,
    a: &[VertexId],
    b: &[VertexId],
    c: &[VertexId],
) -> Result<f64, InfoError> {
    check_disjoint(&[a, b, c])?;
    Ok(mutual_info(table, a, b)? - conditional_mi(table, a, b, c)?)
}

/// Which quantity an [`InfoQuery`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoQueryKind {
    Entropy,
    MutualInfo,
    ConditionalMi,
    InteractionInfo,
}

/// A single query against an enumerated model, as accepted by the CLI.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InfoQuery {
    pub kind: InfoQueryKind,
    pub a: Vec<VertexId>,
    #[serde(default)]
    pub b: Vec<VertexId>,
    #[serde(default)]
    pub c: Vec<VertexId>,
    #[serde(default)]
    pub z: Vec<VertexId>,
}

impl InfoQuery {
    pub fn evaluate(&self, table: &JointTable) -> Result<f64, InfoError> {
        match self.kind {
            InfoQueryKind::Entropy => entropy(table, &self.a),
            InfoQueryKind::MutualInfo => mutual_info(table, &self.a, &self.b),
            InfoQueryKind::ConditionalMi => conditional_mi(table, &self.a, &self.b, &self.z),
            InfoQueryKind::InteractionInfo => {
                interaction_info(table, &self.a, &self.b, &self.c)
            }
        }
    }
}

/// Context sensitivity of a mechanism: exact `I(Y : m | x)`.
pub fn context_sensitivity(
    scm: &DropoutScm,
    m: VertexId,
    x: &[VertexId],
) -> Result<f64, InfoError> {
    let dsd = scm.dsd();
    if dsd.role(m) != VertexRole::Mechanism {
        return Err(InfoError::WrongRole(m, "mechanism"));
    }
    let y = dsd.label();
    let mut vars = union(&[&[y], &[m], x]);
    vars.sort_unstable();
    let table = scm.enumerate_joint(&vars)?;
    conditional_mi(&table, &[y], &[m], x)
}

/// Redundancy of a feature set with a hidden vertex: exact `I(u : x)`.
pub fn redundancy(scm: &DropoutScm, u: VertexId, x: &[VertexId]) -> Result<f64, InfoError> {
    let dsd = scm.dsd();
    if dsd.role(u) != VertexRole::Hidden {
        return Err(InfoError::WrongRole(u, "hidden vertex"));
    }
    if x.is_empty() {
        return Ok(0.0);
    }
    let vars = union(&[&[u], x]);
    let table = scm.enumerate_joint(&vars)?;
    mutual_info(&table, &[u], x)
}

fn require_root_mechanism(scm: &DropoutScm, u: VertexId) -> Result<VertexId, InfoError> {
    let dsd = scm.dsd();
    let m = dsd.mechanism_of(u)?;
    if !dsd.dag().has_edge(m, u) {
        return Err(InfoError::UnsupportedShape(format!(
            "mechanism {} is a child of {}",
            dsd.dag().name(m),
            dsd.dag().name(u)
        )));
    }
    Ok(m)
}

/// Closed-form context sensitivity for a shift-stable hidden vertex:
/// `alpha(M,U) * (1 - alpha(U, CH_x(U))) * alpha(U,Y) * H(M)`.
pub fn closed_form_sensitivity_good(
    scm: &DropoutScm,
    u: VertexId,
    x: &[VertexId],
) -> Result<f64, InfoError> {
    let hp = classify_hidden(scm.dsd())?;
    if !hp.good.contains(&u) {
        return Err(InfoError::WrongPartition {
            vertex: u,
            partition: "good",
        });
    }
    let m = require_root_mechanism(scm, u)?;
    let y = scm.dsd().label();
    if !scm.dsd().dag().has_edge(u, y) {
        return Err(InfoError::UnsupportedShape(format!(
            "hidden vertex {} is not a cause of the label",
            scm.dsd().dag().name(u)
        )));
    }
    let dist = scm
        .root_dist(m)
        .ok_or_else(|| InfoError::UnsupportedShape("mechanism is not a root".to_string()))?;
    let h_m: f64 = -dist.iter().copied().map(xlog2x).sum::<f64>();
    let alpha_mu = scm.alpha(m, u).expect("edge exists");
    let alpha_uy = scm.alpha(u, y).expect("edge exists");
    Ok(alpha_mu * (1.0 - scm.alpha_to_children(u, x)) * alpha_uy * h_m)
}

/// Closed-form context sensitivity for a shift-unstable hidden vertex:
/// `alpha(U, CH_x(U)) * I(M : Y | U)`.
pub fn closed_form_sensitivity_bad(
    scm: &DropoutScm,
    u: VertexId,
    x: &[VertexId],
) -> Result<f64, InfoError> {
    let hp = classify_hidden(scm.dsd())?;
    if !hp.bad.contains(&u) {
        return Err(InfoError::WrongPartition {
            vertex: u,
            partition: "bad",
        });
    }
    let m = require_root_mechanism(scm, u)?;
    let y = scm.dsd().label();
    let table = scm.enumerate_joint(&union(&[&[m], &[y], &[u]]))?;
    let sens_given_u = conditional_mi(&table, &[m], &[y], &[u])?;
    Ok(scm.alpha_to_children(u, x) * sens_given_u)
}

/// Column discretization for the plug-in estimator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum Binning {
    /// Equal-frequency bins for real columns; discrete columns pass through.
    EqualFrequency(usize),
}

impl Default for Binning {
    fn default() -> Self {
        Binning::EqualFrequency(8)
    }
}

/// Discretizes one column according to the binning rule.
pub fn discretize(ds: &Dataset, name: &str, binning: Binning) -> Result<Vec<u32>, InfoError> {
    let column = ds.column(name)?;
    match &column.data {
        ColumnData::Discrete(v) => Ok(v.clone()),
        ColumnData::Real(v) => {
            let Binning::EqualFrequency(bins) = binning;
            if bins == 0 {
                return Err(InfoError::BadBinning);
            }
            let mut sorted: Vec<f64> = v.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in real columns"));
            let n = sorted.len();
            // Right-open quantile boundaries; ties collapse into one bin.
            let bounds: Vec<f64> = (1..bins)
                .map(|b| sorted[(n * b / bins).min(n - 1)])
                .collect();
            Ok(v.iter()
                .map(|&x| bounds.partition_point(|&t| t <= x) as u32)
                .collect())
        }
    }
}

fn counts_entropy(counts: &HashMap<Vec<u32>, usize>, n: f64) -> f64 {
    -counts
        .values()
        .map(|&c| xlog2x(c as f64 / n))
        .sum::<f64>()
}

/// Plug-in conditional mutual information estimate `I(a : b | z)` in bits,
/// computed on discretized columns.
pub fn estimate_mi(
    ds: &Dataset,
    a: &[&str],
    b: &[&str],
    z: &[&str],
    binning: Binning,
) -> Result<f64, InfoError> {
    if ds.n_rows() == 0 {
        return Err(InfoError::EmptyData);
    }
    let codes = |names: &[&str]| -> Result<Vec<Vec<u32>>, InfoError> {
        names.iter().map(|n| discretize(ds, n, binning)).collect()
    };
    let a_codes = codes(a)?;
    let b_codes = codes(b)?;
    let z_codes = codes(z)?;
    let n = ds.n_rows();

    let mut az: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut bz: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut abz: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut zc: HashMap<Vec<u32>, usize> = HashMap::new();
    for i in 0..n {
        let key = |groups: &[&Vec<Vec<u32>>]| -> Vec<u32> {
            groups
                .iter()
                .flat_map(|g| g.iter().map(|col| col[i]))
                .collect()
        };
        *az.entry(key(&[&a_codes, &z_codes])).or_default() += 1;
        *bz.entry(key(&[&b_codes, &z_codes])).or_default() += 1;
        *abz.entry(key(&[&a_codes, &b_codes, &z_codes])).or_default() += 1;
        *zc.entry(key(&[&z_codes])).or_default() += 1;
    }
    let nf = n as f64;
    Ok(counts_entropy(&az, nf) + counts_entropy(&bz, nf)
        - counts_entropy(&abz, nf)
        - counts_entropy(&zc, nf))
}

/// One verified inequality: `lhs <= rhs` with `slack = rhs - lhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub satisfied: bool,
}

impl BoundReport {
    fn new(name: String, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = rhs - lhs;
        BoundReport {
            name,
            lhs,
            rhs,
            slack,
            satisfied: slack >= -tol,
        }
    }
}

/// A bound whose structural precondition did not hold on this model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedBound {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundsOutcome {
    pub reports: Vec<BoundReport>,
    pub skipped: Vec<SkippedBound>,
}

/// Evaluates the data-processing, positive-interaction-information,
/// conditional-sensitivity upper bounds, and the common-cause lower bound on
/// a dropout model, skipping any bound whose d-separation precondition fails.
///
/// Conditioning mechanism subsets are sampled (seeded) rather than
/// enumerated.
pub fn check_bounds(scm: &DropoutScm, seed: u64) -> Result<BoundsOutcome, InfoError> {
    let tol = Tolerances::default().exact;
    let dsd = scm.dsd();
    let dag = dsd.dag();
    let y = dsd.label();
    let table = scm.enumerate_full()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut outcome = BoundsOutcome::default();

    let proxies = dsd.proxies();
    let mechanisms = dsd.mechanisms();

    let random_subset = |rng: &mut ChaCha8Rng, pool: &[VertexId]| -> Vec<VertexId> {
        pool.iter()
            .copied()
            .filter(|_| rng.random_bool(0.5))
            .collect()
    };

    for u in dsd.hidden() {
        let m = dsd.mechanism_of(u)?;
        let name_u = dag.name(u);

        // DPI along the mechanism / hidden / label triple.
        if d_separated(dag, &[m], &[y], &[u])? {
            let lhs = mutual_info(&table, &[m], &[y])?;
            let via = mutual_info(&table, &[m], &[u])?.min(mutual_info(&table, &[u], &[y])?);
            outcome
                .reports
                .push(BoundReport::new(format!("dpi[{name_u}]"), lhs, via, tol));
            outcome.reports.push(BoundReport::new(
                format!("dpi_entropy[{name_u}]"),
                lhs,
                entropy(&table, &[u])?,
                tol,
            ));
            // Separating set makes the interaction information non-negative.
            outcome.reports.push(BoundReport::new(
                format!("positive_ii[{name_u}]"),
                0.0,
                interaction_info(&table, &[m], &[u], &[y])?,
                tol,
            ));
        } else {
            outcome.skipped.push(SkippedBound {
                name: format!("dpi[{name_u}]"),
                reason: format!("{} and label not separated by {name_u}", dag.name(m)),
            });
        }

        let x = random_subset(&mut rng, &proxies);
        let others: Vec<VertexId> = mechanisms.iter().copied().filter(|&o| o != m).collect();
        let m_prime = random_subset(&mut rng, &others);
        let x_label: String = x.iter().map(|&v| dag.name(v)).collect::<Vec<_>>().join(",");

        let good_pattern =
            !d_separated(dag, &[m], &[y], &[])? && d_separated(dag, &[m], &[y], &[u])?;
        let bad_pattern =
            d_separated(dag, &[m], &[y], &[])? && !d_separated(dag, &[m], &[y], &[u])?;

        if good_pattern {
            // Conditioning on anything cannot beat the residual entropy of
            // the hidden carrier.
            let mut cond = x.clone();
            cond.extend(&m_prime);
            let lhs = conditional_mi(&table, &[m], &[y], &cond)?;
            let rhs = entropy(&table, &union(&[&[u], &x]))? - entropy(&table, &x)?;
            outcome.reports.push(BoundReport::new(
                format!("sensitivity_entropy_bound[{name_u}|{x_label}]"),
                lhs,
                rhs,
                tol,
            ));
        }

        if bad_pattern {
            let x_prime: Vec<VertexId> = x
                .iter()
                .copied()
                .filter(|&v| dag.parents_of(v).contains(&u))
                .collect();
            // Both drops of conditioning variables need separating sets.
            let sep_m_prime = m_prime.is_empty()
                || d_separated(dag, &x_prime, &m_prime, &union(&[&[u], &[y]]))?;
            let sep_y = x_prime.is_empty() || d_separated(dag, &x_prime, &[y], &[u])?;
            if sep_m_prime && sep_y {
                let mut cond = x.clone();
                cond.extend(&m_prime);
                let lhs = conditional_mi(&table, &[m], &[y], &cond)?;
                let mid = if x_prime.is_empty() {
                    0.0
                } else {
                    conditional_mi(&table, &[u], &x_prime, &[y])?
                };
                let rhs = if x_prime.is_empty() {
                    0.0
                } else {
                    mutual_info(&table, &[u], &x_prime)?
                };
                outcome.reports.push(BoundReport::new(
                    format!("collider_bound_conditional[{name_u}|{x_label}]"),
                    lhs,
                    mid,
                    tol,
                ));
                outcome.reports.push(BoundReport::new(
                    format!("collider_bound_marginal[{name_u}|{x_label}]"),
                    mid,
                    rhs,
                    tol,
                ));
            } else {
                outcome.skipped.push(SkippedBound {
                    name: format!("collider_bound[{name_u}|{x_label}]"),
                    reason: "conditioning sets are not separated as required".to_string(),
                });
            }
        }
    }

    // Common-cause lower bound: two proxies switched by a shared hidden
    // parent carry at least their own mutual information about it.
    for (i, &vi) in proxies.iter().enumerate() {
        for &vj in proxies.iter().skip(i + 1) {
            let shared: Vec<VertexId> = dag
                .parents_of(vi)
                .iter()
                .copied()
                .filter(|p| dag.parents_of(vj).contains(p))
                .collect();
            for &u in &shared {
                let name = format!(
                    "common_cause[{},{},{}]",
                    dag.name(vi),
                    dag.name(vj),
                    dag.name(u)
                );
                let connected = !d_separated(dag, &[vi], &[vj], &[])?;
                let blocked = d_separated(dag, &[vi], &[vj], &[u])?;
                if connected && blocked {
                    let lhs = mutual_info(&table, &[vi], &[vj])?;
                    let rhs = mutual_info(&table, &[vi, vj], &[u])?;
                    outcome.reports.push(BoundReport::new(name, lhs, rhs, tol));
                } else {
                    outcome.skipped.push(SkippedBound {
                        name,
                        reason: "pair is not switched by the shared parent alone".to_string(),
                    });
                }
            }
        }
    }

    Ok(outcome)
}
