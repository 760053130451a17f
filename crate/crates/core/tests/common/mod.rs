//! Shared fixtures for the integration suites: the two reference diagrams
//! used throughout the tests, dropout-model builders on top of them, and the
//! path-enumeration oracle for d-separation.

#![allow(dead_code)]

use percis_core::dropout_scm::{Combiner, DropoutScm, EdgeParams, LossySpec};
use percis_core::graph::{Dag, DistributionShiftDiagram, VertexId, VertexRole};

pub const Y: usize = 0;

/// Variants of the twelve-vertex web: one hidden cause (U1), two hidden
/// effects (U2, U3), seven proxies. U3's mechanism hangs off it as a child,
/// which keeps U3 stable despite being an effect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WebVariant {
    /// V2's parents are {U1, U3}.
    SharedWithU3,
    /// V2's parents are {U1, U2}.
    SharedWithU2,
    /// Like `SharedWithU3` but every mechanism points into its hidden vertex.
    AllParentMechanisms,
}

/// Vertex ids of the web diagram: 0 Y, 1..=3 U1..U3, 4..=6 M1..M3,
/// 7..=13 V1..V7.
pub fn web_dsd(variant: WebVariant) -> DistributionShiftDiagram {
    let names: Vec<String> = ["Y", "U1", "U2", "U3", "M1", "M2", "M3", "V1", "V2", "V3", "V4",
        "V5", "V6", "V7"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let (u1, u2, u3) = (1, 2, 3);
    let (m1, m2, m3) = (4, 5, 6);
    let v = |k: usize| 6 + k; // V1 -> 7 ... V7 -> 13
    let mut edges = vec![
        (u1, Y),
        (Y, u2),
        (Y, u3),
        (m1, u1),
        (m2, u2),
        // U1 -> V1, V2, V3, V6
        (u1, v(1)),
        (u1, v(2)),
        (u1, v(3)),
        (u1, v(6)),
        // U2 -> V3, V4, V5, V6
        (u2, v(3)),
        (u2, v(4)),
        (u2, v(5)),
        (u2, v(6)),
        // U3 -> V5, V6, V7
        (u3, v(5)),
        (u3, v(6)),
        (u3, v(7)),
    ];
    match variant {
        WebVariant::SharedWithU3 => {
            edges.push((u3, m3));
            edges.push((u3, v(2)));
        }
        WebVariant::SharedWithU2 => {
            edges.push((u3, m3));
            edges.push((u2, v(2)));
        }
        WebVariant::AllParentMechanisms => {
            edges.push((m3, u3));
            edges.push((u3, v(2)));
        }
    }
    let mut roles = vec![VertexRole::Label];
    roles.extend([VertexRole::Hidden; 3]);
    roles.extend([VertexRole::Mechanism; 3]);
    roles.extend([VertexRole::Proxy; 7]);
    let dag = Dag::new(names, edges).expect("web diagram is acyclic");
    DistributionShiftDiagram::new(dag, roles).expect("single label")
}

/// Ids of the shared-proxy diagram: 0 Y, 1 U_G, 2 U_B, 3 M_G, 4 M_B,
/// 5 V_G, 6 V_B, 7 V_A.
pub const U_G: usize = 1;
pub const U_B: usize = 2;
pub const M_G: usize = 3;
pub const M_B: usize = 4;
pub const V_G: usize = 5;
pub const V_B: usize = 6;
pub const V_A: usize = 7;

/// One stable cause and one unstable effect, each with a mechanism and a pure
/// proxy, plus one proxy shared between them.
pub fn shared_proxy_dsd() -> DistributionShiftDiagram {
    let names: Vec<String> = ["Y", "U_G", "U_B", "M_G", "M_B", "V_G", "V_B", "V_A"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let edges = vec![
        (U_G, Y),
        (Y, U_B),
        (M_G, U_G),
        (M_B, U_B),
        (U_G, V_G),
        (U_B, V_B),
        (U_G, V_A),
        (U_B, V_A),
    ];
    let roles = vec![
        VertexRole::Label,
        VertexRole::Hidden,
        VertexRole::Hidden,
        VertexRole::Mechanism,
        VertexRole::Mechanism,
        VertexRole::Proxy,
        VertexRole::Proxy,
        VertexRole::Proxy,
    ];
    let dag = Dag::new(names, edges).expect("acyclic");
    DistributionShiftDiagram::new(dag, roles).expect("single label")
}

/// Per-edge transmission probabilities of the shared-proxy model.
#[derive(Debug, Clone, Copy)]
pub struct SharedProxyAlphas {
    pub mg_ug: f64,
    pub ug_y: f64,
    pub y_ub: f64,
    pub mb_ub: f64,
    pub ug_vg: f64,
    pub ub_vb: f64,
    pub ug_va: f64,
    pub ub_va: f64,
}

impl Default for SharedProxyAlphas {
    fn default() -> Self {
        SharedProxyAlphas {
            mg_ug: 0.8,
            ug_y: 0.7,
            y_ub: 0.6,
            mb_ub: 0.75,
            ug_vg: 0.65,
            ub_vb: 0.7,
            ug_va: 0.55,
            ub_va: 0.6,
        }
    }
}

/// XOR-style merge over a two-component tuple space: single transmitted
/// symbols pass through (mod groups), pairs add modulo the non-null output
/// count. The all-null tuple maps to the reserved null output.
pub fn xor_lossy(radices: &[usize], non_null_outputs: usize) -> LossySpec {
    let tuple_size: usize = radices.iter().product();
    let output_size = non_null_outputs + 1;
    let mut map = vec![0usize; tuple_size];
    for idx in 1..tuple_size {
        let mut rem = idx;
        let mut acc = 0usize;
        let mut any = false;
        for &r in radices.iter().rev() {
            let comp = rem % r;
            rem /= r;
            if comp > 0 {
                acc += comp - 1;
                any = true;
            }
        }
        map[idx] = if any { 1 + acc % non_null_outputs } else { 0 };
    }
    LossySpec { output_size, map }
}

/// Dropout model over [`shared_proxy_dsd`]. The unstable effect merges its
/// two inputs with an XOR-style lossy combiner when `lossy_bad` is set, which
/// is what makes conditioning on its children genuinely harmful.
pub fn shared_proxy_scm(alphas: SharedProxyAlphas, lossy_bad: bool) -> DropoutScm {
    let dsd = shared_proxy_dsd();
    let edge_params = vec![
        ((U_G, Y), EdgeParams::with_alpha(alphas.ug_y)),
        ((Y, U_B), EdgeParams::with_alpha(alphas.y_ub)),
        ((M_G, U_G), EdgeParams::with_alpha(alphas.mg_ug)),
        ((M_B, U_B), EdgeParams::with_alpha(alphas.mb_ub)),
        ((U_G, V_G), EdgeParams::with_alpha(alphas.ug_vg)),
        ((U_B, V_B), EdgeParams::with_alpha(alphas.ub_vb)),
        ((U_G, V_A), EdgeParams::with_alpha(alphas.ug_va)),
        ((U_B, V_A), EdgeParams::with_alpha(alphas.ub_va)),
    ];
    let root_dist = vec![(M_G, vec![0.5, 0.5]), (M_B, vec![0.5, 0.5])];
    // U_B's parents sorted: [Y, M_B] with radices [3, 3]: Y is a single
    // invertible tuple over U_G's 2 symbols (size 3, non-null 2), M_B a
    // binary root.
    let combiners = if lossy_bad {
        vec![(U_B, Combiner::Lossy(xor_lossy(&[3, 3], 2)))]
    } else {
        vec![]
    };
    DropoutScm::new(dsd, edge_params, root_dist, combiners).expect("valid model")
}

/// Brute-force d-separation by enumerating every simple undirected path and
/// testing it for activeness under the conditioning set.
pub fn d_separated_by_paths(
    dag: &Dag,
    a: &[VertexId],
    b: &[VertexId],
    z: &[VertexId],
) -> bool {
    let descendants_into_z: Vec<bool> = {
        // v counts if v or one of its descendants lies in z.
        let mut mask = vec![false; dag.n()];
        for &zv in z {
            mask[zv] = true;
        }
        // Repeated sweeps are fine at test sizes.
        let mut changed = true;
        while changed {
            changed = false;
            for v in 0..dag.n() {
                if !mask[v] && dag.children_of(v).iter().any(|&c| mask[c]) {
                    mask[v] = true;
                    changed = true;
                }
            }
        }
        mask
    };
    let in_z = |v: VertexId| z.contains(&v);

    fn active_path(dag: &Dag, path: &[VertexId], in_z: &dyn Fn(VertexId) -> bool, desc: &[bool]) -> bool {
        for i in 1..path.len() - 1 {
            let incoming_left = dag.has_edge(path[i - 1], path[i]);
            let incoming_right = dag.has_edge(path[i + 1], path[i]);
            let collider = incoming_left && incoming_right;
            if collider {
                if !desc[path[i]] {
                    return false;
                }
            } else if in_z(path[i]) {
                return false;
            }
        }
        true
    }

    let mut stack_found = false;
    for &start in a {
        let mut path = vec![start];
        let mut visited = vec![false; dag.n()];
        visited[start] = true;
        fn dfs(
            dag: &Dag,
            path: &mut Vec<VertexId>,
            visited: &mut Vec<bool>,
            b: &[VertexId],
            in_z: &dyn Fn(VertexId) -> bool,
            desc: &[bool],
            found: &mut bool,
        ) {
            if *found {
                return;
            }
            let v = *path.last().unwrap();
            if b.contains(&v) && path.len() > 1 {
                if active_path(dag, path, in_z, desc) {
                    *found = true;
                }
                return;
            }
            let neighbors: Vec<VertexId> = dag
                .parents_of(v)
                .iter()
                .chain(dag.children_of(v))
                .copied()
                .collect();
            for nb in neighbors {
                if !visited[nb] {
                    visited[nb] = true;
                    path.push(nb);
                    dfs(dag, path, visited, b, in_z, desc, found);
                    path.pop();
                    visited[nb] = false;
                }
            }
        }
        dfs(
            dag,
            &mut path,
            &mut visited,
            b,
            &in_z,
            &descendants_into_z,
            &mut stack_found,
        );
        if stack_found {
            return false;
        }
    }
    true
}

/// Outcome of the randomized closed-form suite.
#[derive(Debug, Default)]
pub struct ClosedFormStats {
    pub models: usize,
    pub redundancy_checks: usize,
    pub stable_checks: usize,
    pub unstable_checks: usize,
    pub max_error: f64,
}

/// Runs the three closed-form equalities against exact enumeration on
/// `n_models` randomly shaped dropout models.
///
/// Conditioning sets respect the equalities' structural domain: stable-side
/// checks condition on proxies of stable hidden vertices only, unstable-side
/// checks on sole children of the vertex under test, and the redundancy
/// equality is asserted only for hidden vertices that can never be null
/// (mechanism edge transmitting surely), since a null-able vertex tilts its
/// own posterior when its children stay silent.
pub fn run_closed_form_suite(n_models: usize, seed: u64, tol: f64) -> ClosedFormStats {
    use percis_core::dropout_scm::random::{shaped_scm, ShapedScmConfig};
    use percis_core::info;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ShapedScmConfig::default();
    let mut stats = ClosedFormStats::default();

    let track = |stats: &mut ClosedFormStats, exact: f64, formula: f64, what: &str| {
        let err = (exact - formula).abs();
        stats.max_error = stats.max_error.max(err);
        assert!(
            err < tol,
            "{what}: exact {exact} vs closed form {formula} (error {err})"
        );
    };

    while stats.models < n_models {
        let shaped = shaped_scm(&cfg, &mut rng);
        let scm = &shaped.scm;
        let Ok(full) = scm.enumerate_full() else {
            continue;
        };
        stats.models += 1;

        let never_null = |u: usize| -> bool {
            if !scm.has_null(u) {
                return true;
            }
            let marginal = full.marginal(&[u]).unwrap();
            marginal.probs()[0] == 0.0
        };
        let subset = |pool: &[usize], rng: &mut ChaCha8Rng| -> Vec<usize> {
            pool.iter().copied().filter(|_| rng.random_bool(0.5)).collect()
        };

        for &u in &shaped.good_hidden {
            let m = scm.dsd().mechanism_of(u).unwrap();
            let x = subset(&shaped.good_side_proxies, &mut rng);
            let exact = info::context_sensitivity(scm, m, &x).unwrap();
            let formula = info::closed_form_sensitivity_good(scm, u, &x).unwrap();
            track(&mut stats, exact, formula, "stable sensitivity");
            stats.stable_checks += 1;

            if never_null(u) {
                let exact = info::redundancy(scm, u, &x).unwrap();
                let h = info::entropy(&full, &[u]).unwrap();
                track(
                    &mut stats,
                    exact,
                    scm.alpha_to_children(u, &x) * h,
                    "stable redundancy",
                );
                stats.redundancy_checks += 1;
            }
        }

        for &u in &shaped.bad_hidden {
            let m = scm.dsd().mechanism_of(u).unwrap();
            let pure = shaped.pure_bad_children.get(&u).cloned().unwrap_or_default();
            let x = subset(&pure, &mut rng);
            let exact = info::context_sensitivity(scm, m, &x).unwrap();
            let formula = info::closed_form_sensitivity_bad(scm, u, &x).unwrap();
            track(&mut stats, exact, formula, "unstable sensitivity");
            stats.unstable_checks += 1;

            if never_null(u) {
                let exact = info::redundancy(scm, u, &x).unwrap();
                let h = info::entropy(&full, &[u]).unwrap();
                track(
                    &mut stats,
                    exact,
                    scm.alpha_to_children(u, &x) * h,
                    "unstable redundancy",
                );
                stats.redundancy_checks += 1;
            }
        }
    }
    stats
}

/// New dataset with `col` permuted independently inside every stratum of
/// `y`: the exact independence null for conditional-MI estimates, with all
/// conditional marginals preserved.
pub fn permute_within_strata(
    ds: &percis_core::Dataset,
    col: &str,
    y: &str,
    seed: u64,
) -> percis_core::Dataset {
    use percis_core::dataset::{Column, ColumnData};
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let strata = ds.stratify(y).expect("discrete stratification column");
    let source = ds.column(col).expect("column exists");
    let mut data = source.data.clone();
    for rows in strata.values() {
        let mut shuffled = rows.clone();
        shuffled.shuffle(&mut rng);
        match (&mut data, &source.data) {
            (ColumnData::Real(dst), ColumnData::Real(src)) => {
                for (&to, &from) in rows.iter().zip(&shuffled) {
                    dst[to] = src[from];
                }
            }
            (ColumnData::Discrete(dst), ColumnData::Discrete(src)) => {
                for (&to, &from) in rows.iter().zip(&shuffled) {
                    dst[to] = src[from];
                }
            }
            _ => unreachable!("clone preserves the column type"),
        }
    }
    let mut out = percis_core::Dataset::new();
    for name in ds.column_names() {
        if name == col {
            out = out
                .with_column(Column {
                    name: name.to_string(),
                    data: data.clone(),
                })
                .unwrap();
        } else {
            out = out.with_column(ds.column(name).unwrap().clone()).unwrap();
        }
    }
    out
}

/// Measurements for the isolation property on synthetic shared-proxy data:
/// estimated conditional MI of the emitted features with the unstable and
/// stable hidden variables, plus a permutation-calibrated independence band.
#[derive(Debug)]
pub struct IsolationSnapshot {
    pub mi_with_unstable: f64,
    pub mi_with_stable: f64,
    pub independence_band: f64,
}

pub fn isolation_snapshot(n: usize, seed: u64) -> IsolationSnapshot {
    use percis_core::bench::{generate_synthetic, SyntheticConfig};
    use percis_core::cis::{emit_features, train_isolation, CisConfig, LearnerSpec};
    use percis_core::info::{estimate_mi, Binning};

    let cfg = SyntheticConfig::default();
    let ds = generate_synthetic(&cfg, cfg.train_env(), n, seed);
    let isolation = train_isolation(
        &ds,
        "V_G",
        &["V_A_1", "V_A_2"],
        "Y",
        LearnerSpec::default(),
        &CisConfig::default(),
    )
    .expect("strata large enough");
    let emitted = emit_features(&isolation, &ds).expect("emission succeeds");
    let features: Vec<&str> = isolation.emitted_columns.iter().map(String::as_str).collect();
    let binning = Binning::EqualFrequency(6);

    let mi_with_unstable =
        estimate_mi(&emitted, &features, &["U_B"], &["Y"], binning).expect("estimable");
    let mi_with_stable =
        estimate_mi(&emitted, &features, &["U_G"], &["Y"], binning).expect("estimable");

    // Independence calibration at matched sample size, shape, and binning.
    let mut calibration = Vec::new();
    for k in 0..20 {
        let null_ds = permute_within_strata(&emitted, "U_B", "Y", seed ^ (0xABCD + k));
        calibration.push(
            estimate_mi(&null_ds, &features, &["U_B"], &["Y"], binning).expect("estimable"),
        );
    }
    let max = calibration.iter().cloned().fold(f64::MIN, f64::max);
    let mean = calibration.iter().sum::<f64>() / calibration.len() as f64;
    let band = max + 0.5 * (max - mean) + 1e-3;

    IsolationSnapshot {
        mi_with_unstable,
        mi_with_stable,
        independence_band: band,
    }
}

/// Slow reference: full-gradient proximal descent (ISTA) on the same
/// standardized objective. Independent of the production solver's update
/// structure; only the objective definition is shared.
pub struct Reference {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub objective: f64,
}

fn logistic_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn stable_log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

pub fn ista_reference(xs: &[Vec<f64>], y: &[f64], lambda: f64, iters: usize) -> Reference {
    let n = y.len();
    let d = xs.len();
    // Standardize exactly like the production path.
    let cols: Vec<Vec<f64>> = xs
        .iter()
        .map(|col| {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd < 1e-12 {
                vec![0.0; n]
            } else {
                col.iter().map(|x| (x - mean) / sd).collect()
            }
        })
        .collect();
    let mut w = vec![0.0f64; d];
    let mut b = 0.0f64;
    // Safe step: the logistic Hessian is bounded by X^T X / (4n), whose
    // largest eigenvalue is at most d for standardized columns (plus the
    // intercept's unit column).
    let step = 1.0 / (0.25 * (d as f64 + 1.0).max(1.0));
    let mut z = vec![0.0f64; n];
    for _ in 0..iters {
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = b + (0..d).map(|j| w[j] * cols[j][i]).sum::<f64>();
        }
        let residuals: Vec<f64> = z.iter().zip(y).map(|(&zi, &yi)| logistic_sigmoid(zi) - yi).collect();
        let grad_b: f64 = residuals.iter().sum::<f64>() / n as f64;
        b -= step * grad_b;
        for j in 0..d {
            let grad: f64 = residuals
                .iter()
                .zip(&cols[j])
                .map(|(&r, &x)| r * x)
                .sum::<f64>()
                / n as f64;
            let candidate = w[j] - step * grad;
            let threshold = step * lambda;
            w[j] = if candidate > threshold {
                candidate - threshold
            } else if candidate < -threshold {
                candidate + threshold
            } else {
                0.0
            };
        }
    }
    for (i, zi) in z.iter_mut().enumerate() {
        *zi = b + (0..d).map(|j| w[j] * cols[j][i]).sum::<f64>();
    }
    let loss: f64 = z
        .iter()
        .zip(y)
        .map(|(&zi, &yi)| stable_log1p_exp(zi) - yi * zi)
        .sum::<f64>()
        / n as f64;
    let objective = loss + lambda * w.iter().map(|wj| wj.abs()).sum::<f64>();
    Reference {
        weights: w,
        intercept: b,
        objective,
    }
}

/// Marginal probabilities of a set of variables looked up by name, so tables
/// from structurally different models (e.g. before/after a split) compare.
pub fn marginal_by_names(
    scm: &DropoutScm,
    names: &[&str],
) -> (Vec<usize>, Vec<f64>) {
    let dag = scm.dsd().dag();
    let ids: Vec<VertexId> = names
        .iter()
        .map(|n| dag.index_of(n).expect("vertex exists"))
        .collect();
    let table = scm.enumerate_joint(&ids).expect("within cap");
    // Reorder the table's variables to the requested name order.
    let order: Vec<usize> = ids
        .iter()
        .map(|id| table.variables().iter().position(|v| v == id).unwrap())
        .collect();
    let sizes: Vec<usize> = order.iter().map(|&i| table.sizes()[i]).collect();
    let mut strides_src = vec![1usize; table.sizes().len()];
    for i in (0..table.sizes().len().saturating_sub(1)).rev() {
        strides_src[i] = strides_src[i + 1] * table.sizes()[i + 1];
    }
    let mut out = vec![0.0; table.len()];
    let mut strides_dst = vec![1usize; sizes.len()];
    for i in (0..sizes.len().saturating_sub(1)).rev() {
        strides_dst[i] = strides_dst[i + 1] * sizes[i + 1];
    }
    for (idx, &p) in table.probs().iter().enumerate() {
        let mut dst = 0;
        for (k, &src_dim) in order.iter().enumerate() {
            let digit = (idx / strides_src[src_dim]) % table.sizes()[src_dim];
            dst += digit * strides_dst[k];
        }
        out[dst] += p;
    }
    (sizes, out)
}
