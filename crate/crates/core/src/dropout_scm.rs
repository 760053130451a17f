//! Discrete structural equation models with invertible-dropout edges.
//!
//! Every edge `A -> B` contributes a component to `B`: with probability
//! `alpha` it carries an invertible transform of `A`'s value, otherwise the
//! null symbol. A vertex combines the tuple of its parent components with a
//! combiner that is either invertible (the value *is* the tuple, up to
//! relabeling) or an explicit lossy map onto a smaller output alphabet. Roots
//! carry explicit distributions over finite alphabets.
//!
//! Value encoding per vertex:
//! - roots: symbols `0..k`, no null value;
//! - invertible combiners: the mixed-radix index of the component tuple,
//!   where each component is `0` for null or `1 + s` for transformed symbol
//!   `s`; index `0` (the all-null tuple) is the vertex's null value;
//! - lossy combiners: the declared output symbol, with `0` reserved for the
//!   image of the all-null tuple.
//!
//! Because every information quantity is invariant to relabeling, invertible
//! per-edge transforms are stored as permutations of the parent's non-null
//! symbols and invertible combiners simply keep the tuple.

use crate::dataset::Dataset;
use crate::graph::{DistributionShiftDiagram, GraphError, VertexId, VertexRole};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {0} -> {1} has no parameters")]
    MissingEdgeParams(usize, usize),
    #[error("parameters given for nonexistent edge {0} -> {1}")]
    UnknownEdge(usize, usize),
    #[error("alpha {alpha} on edge {parent} -> {child} outside [0, 1]")]
    AlphaOutOfRange {
        parent: usize,
        child: usize,
        alpha: f64,
    },
    #[error("root vertex {0} has no distribution")]
    MissingRootDist(usize),
    #[error("non-root vertex {0} has a root distribution")]
    DistOnNonRoot(usize),
    #[error("distribution for vertex {0} is empty or does not sum to 1")]
    BadRootDist(usize),
    #[error("permutation on edge {0} -> {1} is not a permutation of the parent's symbols")]
    BadPermutation(usize, usize),
    #[error("lossy combiner on vertex {0}: {1}")]
    BadLossyMap(usize, String),
    #[error("combiner given for root vertex {0}")]
    CombinerOnRoot(usize),
    #[error("joint state space of size {size} exceeds the enumeration cap {cap}")]
    EnumerationCap { size: u128, cap: usize },
    #[error("sample count must be at least 1")]
    EmptySample,
    #[error("vertex sequence is not a path: {0}")]
    NotAPath(String),
    #[error("path has a collider at vertex {0}")]
    PathCollider(String),
    #[error("vertex {0} is not separable: {1}")]
    NotSeparable(usize, String),
    #[error("joint table mass {0} is not 1 within tolerance")]
    BadMass(f64),
    #[error("variable id {0} not in table")]
    UnknownVariable(usize),
}

/// Value of a dropout variable: the null symbol or an index into the vertex's
/// non-null alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DropoutValue {
    Null,
    Sym(usize),
}

/// How a non-root vertex merges its parent components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combiner {
    /// Keeps the component tuple intact (separable vertex).
    Invertible,
    /// Surjective map from the component tuple space onto `0..output_size`,
    /// with the all-null tuple mapping to 0.
    Lossy(LossySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossySpec {
    pub output_size: usize,
    /// `map[tuple_index] = output symbol`.
    pub map: Vec<usize>,
}

/// Per-edge transmission probability and optional symbol permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeParams {
    pub alpha: f64,
    /// Permutation of the parent's non-null symbol indices; identity if None.
    pub perm: Option<Vec<usize>>,
}

impl EdgeParams {
    pub fn with_alpha(alpha: f64) -> Self {
        EdgeParams { alpha, perm: None }
    }
}

#[derive(Debug, Clone, Copy)]
struct VertexAlphabet {
    size: usize,
    has_null: bool,
}

impl VertexAlphabet {
    fn non_null(&self) -> usize {
        self.size - usize::from(self.has_null)
    }
}

pub const DEFAULT_ENUMERATION_CAP: usize = 10_000_000;

/// A distribution shift diagram equipped with dropout structural equations.
///
/// Immutable after construction; sampling takes an explicit seed and is pure.
#[derive(Debug, Clone)]
pub struct DropoutScm {
    dsd: DistributionShiftDiagram,
    edge_params: BTreeMap<(VertexId, VertexId), EdgeParams>,
    root_dist: BTreeMap<VertexId, Vec<f64>>,
    combiners: BTreeMap<VertexId, Combiner>,
    alphabets: Vec<VertexAlphabet>,
    enumeration_cap: usize,
}

impl DropoutScm {
    /// Builds and validates a model. Combiners default to `Invertible` for
    /// non-root vertices that are not listed.
    pub fn new(
        dsd: DistributionShiftDiagram,
        edge_params: Vec<((VertexId, VertexId), EdgeParams)>,
        root_dist: Vec<(VertexId, Vec<f64>)>,
        combiners: Vec<(VertexId, Combiner)>,
    ) -> Result<Self, ScmError> {
        let dag = dsd.dag();
        let n = dag.n();

        let mut params = BTreeMap::new();
        for ((p, c), ep) in edge_params {
            if !dag.has_edge(p, c) {
                return Err(ScmError::UnknownEdge(p, c));
            }
            if !(0.0..=1.0).contains(&ep.alpha) {
                return Err(ScmError::AlphaOutOfRange {
                    parent: p,
                    child: c,
                    alpha: ep.alpha,
                });
            }
            params.insert((p, c), ep);
        }
        for &(p, c) in dag.edges() {
            if !params.contains_key(&(p, c)) {
                return Err(ScmError::MissingEdgeParams(p, c));
            }
        }

        let mut dists = BTreeMap::new();
        for (v, d) in root_dist {
            if !dag.parents_of(v).is_empty() {
                return Err(ScmError::DistOnNonRoot(v));
            }
            let sum: f64 = d.iter().sum();
            if d.is_empty() || d.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(ScmError::BadRootDist(v));
            }
            dists.insert(v, d);
        }
        for v in 0..n {
            if dag.parents_of(v).is_empty() && !dists.contains_key(&v) {
                return Err(ScmError::MissingRootDist(v));
            }
        }

        let mut combs = BTreeMap::new();
        for (v, c) in combiners {
            if dag.parents_of(v).is_empty() {
                return Err(ScmError::CombinerOnRoot(v));
            }
            combs.insert(v, c);
        }
        for v in 0..n {
            if !dag.parents_of(v).is_empty() {
                combs.entry(v).or_insert(Combiner::Invertible);
            }
        }

        let mut scm = DropoutScm {
            dsd,
            edge_params: params,
            root_dist: dists,
            combiners: combs,
            alphabets: Vec::new(),
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        };
        scm.alphabets = scm.compute_alphabets()?;
        scm.check_permutations()?;
        Ok(scm)
    }

    pub fn with_enumeration_cap(mut self, cap: usize) -> Self {
        self.enumeration_cap = cap;
        self
    }

    pub fn dsd(&self) -> &DistributionShiftDiagram {
        &self.dsd
    }

    pub fn alpha(&self, p: VertexId, c: VertexId) -> Option<f64> {
        self.edge_params.get(&(p, c)).map(|e| e.alpha)
    }

    pub fn edge_perm(&self, p: VertexId, c: VertexId) -> Option<&[usize]> {
        self.edge_params
            .get(&(p, c))
            .and_then(|e| e.perm.as_deref())
    }

    pub fn combiner(&self, v: VertexId) -> Option<&Combiner> {
        self.combiners.get(&v)
    }

    pub fn root_dist(&self, v: VertexId) -> Option<&[f64]> {
        self.root_dist.get(&v).map(Vec::as_slice)
    }

    pub fn alphabet_size(&self, v: VertexId) -> usize {
        self.alphabets[v].size
    }

    pub fn has_null(&self, v: VertexId) -> bool {
        self.alphabets[v].has_null
    }

    /// Decodes a stored value index into the null-or-symbol view.
    pub fn decode(&self, v: VertexId, value: usize) -> DropoutValue {
        match self.non_null_index(v, value) {
            None => DropoutValue::Null,
            Some(s) => DropoutValue::Sym(s),
        }
    }

    fn compute_alphabets(&self) -> Result<Vec<VertexAlphabet>, ScmError> {
        let dag = self.dsd.dag();
        let mut alphabets = vec![
            VertexAlphabet {
                size: 0,
                has_null: false
            };
            dag.n()
        ];
        for &v in dag.topo_order() {
            let parents = dag.parents_of(v);
            if parents.is_empty() {
                alphabets[v] = VertexAlphabet {
                    size: self.root_dist[&v].len(),
                    has_null: false,
                };
                continue;
            }
            let mut tuple_size: usize = 1;
            for &p in parents {
                let radix = alphabets[p].non_null() + 1;
                tuple_size = tuple_size.checked_mul(radix).ok_or(ScmError::EnumerationCap {
                    size: u128::MAX,
                    cap: self.enumeration_cap,
                })?;
            }
            let alphabet = match &self.combiners[&v] {
                Combiner::Invertible => VertexAlphabet {
                    size: tuple_size,
                    has_null: true,
                },
                Combiner::Lossy(spec) => {
                    if spec.map.len() != tuple_size {
                        return Err(ScmError::BadLossyMap(
                            v,
                            format!("map has {} entries, tuple space has {tuple_size}", spec.map.len()),
                        ));
                    }
                    if spec.map[0] != 0 {
                        return Err(ScmError::BadLossyMap(
                            v,
                            "all-null tuple must map to output 0".to_string(),
                        ));
                    }
                    if spec.map.iter().any(|&o| o >= spec.output_size) {
                        return Err(ScmError::BadLossyMap(
                            v,
                            "output symbol out of range".to_string(),
                        ));
                    }
                    let mut hit = vec![false; spec.output_size];
                    for &o in &spec.map {
                        hit[o] = true;
                    }
                    if hit.iter().any(|&h| !h) {
                        return Err(ScmError::BadLossyMap(v, "map is not surjective".to_string()));
                    }
                    VertexAlphabet {
                        size: spec.output_size,
                        has_null: true,
                    }
                }
            };
            alphabets[v] = alphabet;
        }
        Ok(alphabets)
    }

    fn check_permutations(&self) -> Result<(), ScmError> {
        for (&(p, c), ep) in &self.edge_params {
            if let Some(perm) = &ep.perm {
                let k = self.alphabets[p].non_null();
                let mut seen = vec![false; k];
                if perm.len() != k {
                    return Err(ScmError::BadPermutation(p, c));
                }
                for &s in perm {
                    if s >= k || seen[s] {
                        return Err(ScmError::BadPermutation(p, c));
                    }
                    seen[s] = true;
                }
            }
        }
        Ok(())
    }

    /// Non-null symbol index of value `val` at vertex `v`, or None for null.
    fn non_null_index(&self, v: VertexId, val: usize) -> Option<usize> {
        if self.alphabets[v].has_null {
            if val == 0 {
                None
            } else {
                Some(val - 1)
            }
        } else {
            Some(val)
        }
    }

    /// Component carried along edge (p, c) when the parent holds `parent_val`
    /// and the edge transmits. `0` encodes null, `1 + s` the transformed
    /// symbol.
    fn transmitted_component(&self, p: VertexId, c: VertexId, parent_val: usize) -> usize {
        match self.non_null_index(p, parent_val) {
            None => 0,
            Some(s) => {
                let s = match &self.edge_params[&(p, c)].perm {
                    Some(perm) => perm[s],
                    None => s,
                };
                1 + s
            }
        }
    }

    /// Probability of each component value on edge (p, c) given the parent's
    /// value: null with the complement of alpha (or always, if the parent is
    /// null), the transformed symbol with alpha.
    fn component_dist(&self, p: VertexId, c: VertexId, parent_val: usize) -> (usize, f64) {
        let alpha = self.edge_params[&(p, c)].alpha;
        let comp = self.transmitted_component(p, c, parent_val);
        (comp, alpha)
    }

    fn tuple_radices(&self, v: VertexId) -> Vec<usize> {
        self.dsd
            .dag()
            .parents_of(v)
            .iter()
            .map(|&p| self.alphabets[p].non_null() + 1)
            .collect()
    }

    /// Exact joint distribution over all vertices, built by forward dynamic
    /// programming in topological order.
    pub fn enumerate_full(&self) -> Result<JointTable, ScmError> {
        let dag = self.dsd.dag();
        let order = dag.topo_order().to_vec();

        let mut total: u128 = 1;
        for v in 0..dag.n() {
            total = total.saturating_mul(self.alphabets[v].size as u128);
        }
        if total > self.enumeration_cap as u128 {
            return Err(ScmError::EnumerationCap {
                size: total,
                cap: self.enumeration_cap,
            });
        }

        // probs[i] is the probability of the prefix configuration encoded in
        // mixed radix, most significant digit first.
        let mut probs = vec![1.0f64];
        let mut prefix: Vec<VertexId> = Vec::new();
        for &v in &order {
            let size = self.alphabets[v].size;
            let mut next = vec![0.0f64; probs.len() * size];

            let parents = dag.parents_of(v);
            // Strides of each parent inside the current prefix encoding.
            let parent_pos: Vec<usize> = parents
                .iter()
                .map(|p| prefix.iter().position(|q| q == p).expect("parent precedes child"))
                .collect();
            let mut strides = vec![1usize; prefix.len()];
            for i in (0..prefix.len().saturating_sub(1)).rev() {
                strides[i] = strides[i + 1] * self.alphabets[prefix[i + 1]].size;
            }

            if parents.is_empty() {
                let dist = &self.root_dist[&v];
                for (idx, &p_prefix) in probs.iter().enumerate() {
                    if p_prefix == 0.0 {
                        continue;
                    }
                    for (val, &pv) in dist.iter().enumerate() {
                        next[idx * size + val] = p_prefix * pv;
                    }
                }
            } else {
                let radices = self.tuple_radices(v);
                let mut tuple_strides = vec![1usize; radices.len()];
                for i in (0..radices.len().saturating_sub(1)).rev() {
                    tuple_strides[i] = tuple_strides[i + 1] * radices[i + 1];
                }
                let combiner = &self.combiners[&v];
                let mut scratch: Vec<(usize, f64)> = Vec::with_capacity(parents.len());
                for (idx, &p_prefix) in probs.iter().enumerate() {
                    if p_prefix == 0.0 {
                        continue;
                    }
                    scratch.clear();
                    for (pi, &p) in parents.iter().enumerate() {
                        let pv = (idx / strides[parent_pos[pi]]) % self.alphabets[p].size;
                        scratch.push(self.component_dist(p, v, pv));
                    }
                    // Walk every transmission pattern of the incident edges.
                    let n_edges = parents.len();
                    let mut pattern = 0usize;
                    loop {
                        let mut prob = p_prefix;
                        let mut tuple_idx = 0usize;
                        for (ei, &(comp, alpha)) in scratch.iter().enumerate() {
                            let transmits = (pattern >> ei) & 1 == 1;
                            if transmits {
                                prob *= alpha;
                                tuple_idx += comp * tuple_strides[ei];
                            } else {
                                prob *= 1.0 - alpha;
                            }
                        }
                        if prob > 0.0 {
                            let val = match combiner {
                                Combiner::Invertible => tuple_idx,
                                Combiner::Lossy(spec) => spec.map[tuple_idx],
                            };
                            next[idx * size + val] += prob;
                        }
                        pattern += 1;
                        if pattern == 1 << n_edges {
                            break;
                        }
                    }
                }
            }
            probs = next;
            prefix.push(v);
        }

        JointTable::new(
            prefix,
            order.iter().map(|&v| self.alphabets[v].size).collect(),
            probs,
        )
    }

    /// Exact marginal joint over `vars` (any order; the table keeps the
    /// model's canonical topological order).
    pub fn enumerate_joint(&self, vars: &[VertexId]) -> Result<JointTable, ScmError> {
        self.enumerate_full()?.marginal(vars)
    }

    /// Draws `n` i.i.d. rows. Columns are named after the vertices and carry
    /// the integer value encoding (null is its alphabet index).
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, ScmError> {
        if n == 0 {
            return Err(ScmError::EmptySample);
        }
        let dag = self.dsd.dag();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values: Vec<Vec<u32>> = vec![Vec::with_capacity(n); dag.n()];
        let mut row = vec![0usize; dag.n()];
        for _ in 0..n {
            for &v in dag.topo_order() {
                let parents = dag.parents_of(v);
                let val = if parents.is_empty() {
                    let dist = &self.root_dist[&v];
                    let mut u: f64 = rng.random();
                    let mut picked = dist.len() - 1;
                    for (i, &p) in dist.iter().enumerate() {
                        if u < p {
                            picked = i;
                            break;
                        }
                        u -= p;
                    }
                    picked
                } else {
                    let radices = self.tuple_radices(v);
                    let mut tuple_idx = 0usize;
                    let mut stride = radices.iter().product::<usize>();
                    for (&p, radix) in parents.iter().zip(&radices) {
                        stride /= radix;
                        let alpha = self.edge_params[&(p, v)].alpha;
                        if rng.random_bool(alpha) {
                            tuple_idx += self.transmitted_component(p, v, row[p]) * stride;
                        }
                    }
                    match &self.combiners[&v] {
                        Combiner::Invertible => tuple_idx,
                        Combiner::Lossy(spec) => spec.map[tuple_idx],
                    }
                };
                row[v] = val;
                values[v].push(val as u32);
            }
        }
        let mut ds = Dataset::new();
        for v in 0..dag.n() {
            ds = ds
                .with_discrete_column(dag.name(v), std::mem::take(&mut values[v]))
                .expect("vertex names are unique");
        }
        Ok(ds)
    }

    /// Probability that at least one child of `u` inside `x` transmits:
    /// `1 - prod (1 - alpha)` over children of `u` in `x`, 0 for none.
    pub fn alpha_to_children(&self, u: VertexId, x: &[VertexId]) -> f64 {
        let mut miss = 1.0;
        for &c in self.dsd.dag().children_of(u) {
            if x.contains(&c) {
                miss *= 1.0 - self.edge_params[&(u, c)].alpha;
            }
        }
        1.0 - miss
    }

    /// Product of transmission probabilities along an active directed-or-fork
    /// path. Rejects sequences that are not paths or that contain a collider.
    pub fn path_transmission(&self, path: &[VertexId]) -> Result<f64, ScmError> {
        let dag = self.dsd.dag();
        if path.len() < 2 {
            return Err(ScmError::NotAPath("need at least two vertices".to_string()));
        }
        let mut product = 1.0;
        let mut incoming = vec![false; path.len()];
        for i in 0..path.len() - 1 {
            let (a, b) = (path[i], path[i + 1]);
            let alpha = if dag.has_edge(a, b) {
                incoming[i + 1] = true;
                self.edge_params[&(a, b)].alpha
            } else if dag.has_edge(b, a) {
                self.edge_params[&(b, a)].alpha
            } else {
                return Err(ScmError::NotAPath(format!(
                    "{} and {} are not adjacent",
                    dag.name(a),
                    dag.name(b)
                )));
            };
            product *= alpha;
        }
        for i in 1..path.len() - 1 {
            let from_right = dag.has_edge(path[i + 1], path[i]);
            if incoming[i] && from_right {
                return Err(ScmError::PathCollider(dag.name(path[i]).to_string()));
            }
        }
        Ok(product)
    }

    /// Replaces a separable multi-parent vertex by one single-parent component
    /// per parent, preserving the joint over every other variable.
    pub fn split_separable(&self, v: VertexId) -> Result<DropoutScm, ScmError> {
        let dag = self.dsd.dag();
        if v >= dag.n() {
            return Err(ScmError::Graph(GraphError::UnknownVertex(v)));
        }
        match self.combiners.get(&v) {
            Some(Combiner::Invertible) => {}
            Some(Combiner::Lossy(_)) => {
                return Err(ScmError::NotSeparable(v, "combiner is lossy".to_string()))
            }
            None => return Err(ScmError::NotSeparable(v, "vertex is a root".to_string())),
        }
        let parents = dag.parents_of(v).to_vec();
        if parents.len() < 2 {
            return Err(ScmError::NotSeparable(
                v,
                "fewer than two parents, nothing to split".to_string(),
            ));
        }
        if !dag.children_of(v).is_empty() {
            return Err(ScmError::NotSeparable(
                v,
                "vertex has children".to_string(),
            ));
        }

        // Old id -> new id; v is removed, components appended at the end.
        let remap = |w: VertexId| -> VertexId {
            if w < v {
                w
            } else {
                w - 1
            }
        };
        let mut names: Vec<String> = Vec::with_capacity(dag.n() - 1 + parents.len());
        let mut roles = Vec::with_capacity(names.capacity());
        for w in 0..dag.n() {
            if w != v {
                names.push(dag.name(w).to_string());
                roles.push(self.dsd.role(w));
            }
        }
        let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
        let mut edge_params: Vec<((VertexId, VertexId), EdgeParams)> = Vec::new();
        for &(p, c) in dag.edges() {
            if p == v || c == v {
                continue;
            }
            let e = (remap(p), remap(c));
            edges.push(e);
            edge_params.push((e, self.edge_params[&(p, c)].clone()));
        }
        for &p in &parents {
            let comp = names.len();
            names.push(format!("{}^({})", dag.name(v), dag.name(p)));
            roles.push(self.dsd.role(v));
            let e = (remap(p), comp);
            edges.push(e);
            edge_params.push((e, self.edge_params[&(p, v)].clone()));
        }
        let root_dist = self
            .root_dist
            .iter()
            .map(|(&w, d)| (remap(w), d.clone()))
            .collect();
        let combiners = self
            .combiners
            .iter()
            .filter(|(&w, _)| w != v)
            .map(|(&w, c)| (remap(w), c.clone()))
            .collect();
        let new_dag = crate::graph::Dag::new(names, edges)?;
        let new_dsd = DistributionShiftDiagram::new(new_dag, roles)?;
        DropoutScm::new(new_dsd, edge_params, root_dist, combiners)
            .map(|scm| scm.with_enumeration_cap(self.enumeration_cap))
    }
}

/// Dense probability table over a set of discrete variables, the substrate
/// for every exact information quantity.
#[derive(Debug, Clone)]
pub struct JointTable {
    vars: Vec<VertexId>,
    sizes: Vec<usize>,
    probs: Vec<f64>,
}

impl JointTable {
    /// Validates non-negativity and unit mass (then normalizes away residual
    /// float error).
    pub fn new(vars: Vec<VertexId>, sizes: Vec<usize>, probs: Vec<f64>) -> Result<Self, ScmError> {
        let expected: usize = sizes.iter().product();
        if probs.len() != expected || probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(ScmError::BadMass(f64::NAN));
        }
        let mass: f64 = probs.iter().sum();
        if (mass - 1.0).abs() > 1e-9 {
            return Err(ScmError::BadMass(mass));
        }
        let probs = probs.iter().map(|p| p / mass).collect();
        Ok(JointTable { vars, sizes, probs })
    }

    pub fn variables(&self) -> &[VertexId] {
        &self.vars
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.sizes.len()];
        for i in (0..self.sizes.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.sizes[i + 1];
        }
        strides
    }

    /// Marginal over a subset of variables (kept in this table's order).
    pub fn marginal(&self, vars: &[VertexId]) -> Result<JointTable, ScmError> {
        for &v in vars {
            if !self.vars.contains(&v) {
                return Err(ScmError::UnknownVariable(v));
            }
        }
        let keep: Vec<usize> = (0..self.vars.len())
            .filter(|&i| vars.contains(&self.vars[i]))
            .collect();
        let strides = self.strides();
        let out_sizes: Vec<usize> = keep.iter().map(|&i| self.sizes[i]).collect();
        let mut out_strides = vec![1usize; keep.len()];
        for i in (0..keep.len().saturating_sub(1)).rev() {
            out_strides[i] = out_strides[i + 1] * out_sizes[i + 1];
        }
        let mut out = vec![0.0f64; out_sizes.iter().product::<usize>().max(1)];
        for (idx, &p) in self.probs.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let mut o = 0usize;
            for (k, &i) in keep.iter().enumerate() {
                o += ((idx / strides[i]) % self.sizes[i]) * out_strides[k];
            }
            out[o] += p;
        }
        JointTable::new(
            keep.iter().map(|&i| self.vars[i]).collect(),
            out_sizes,
            out,
        )
    }
}

pub mod random {
    //! Random dropout models shaped like the setting's diagrams, for the
    //! closed-form oracle suites.
    //!
    //! The closed forms for redundancy and context sensitivity are exact only
    //! when the conditioning proxies cannot reach the hidden vertex through a
    //! directed or fork path via the label. The generator therefore records
    //! which proxies sit on the cause side and which are sole children of a
    //! shift-unstable vertex so callers can pick conforming conditioning sets.

    use super::*;
    use crate::graph::Dag;

    /// A generated model plus the bookkeeping the oracle tests need.
    #[derive(Debug, Clone)]
    pub struct ShapedScm {
        pub scm: DropoutScm,
        pub label: VertexId,
        pub good_hidden: Vec<VertexId>,
        pub bad_hidden: Vec<VertexId>,
        /// Proxies whose parents are all stable hidden vertices.
        pub good_side_proxies: Vec<VertexId>,
        /// Sole-parent proxy children, per unstable hidden vertex.
        pub pure_bad_children: BTreeMap<VertexId, Vec<VertexId>>,
    }

    #[derive(Debug, Clone)]
    pub struct ShapedScmConfig {
        pub max_good: usize,
        pub max_bad: usize,
        pub max_root_symbols: usize,
        pub max_children_per_hidden: usize,
        /// Probability that a good-side proxy gains a second good parent.
        pub shared_good_parent_prob: f64,
        /// Probability that an unstable hidden vertex gets a lossy combiner.
        pub lossy_bad_prob: f64,
        /// Probability of adding one truly ambiguous proxy (good + bad parent).
        pub ambiguous_proxy_prob: f64,
    }

    impl Default for ShapedScmConfig {
        fn default() -> Self {
            ShapedScmConfig {
                max_good: 2,
                max_bad: 2,
                max_root_symbols: 3,
                max_children_per_hidden: 2,
                shared_good_parent_prob: 0.3,
                lossy_bad_prob: 0.5,
                ambiguous_proxy_prob: 0.3,
            }
        }
    }

    fn random_alpha<R: Rng>(rng: &mut R) -> f64 {
        // Mix of interior values and the exact endpoints.
        match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random_range(0.05..0.95),
        }
    }

    fn random_dist<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.iter().map(|x| x / sum).collect()
    }

    fn random_perm<R: Rng>(rng: &mut R, k: usize) -> Option<Vec<usize>> {
        if !rng.random_bool(0.3) {
            return None;
        }
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        Some(perm)
    }

    /// Random XOR-style merge: adds the non-null component symbols modulo the
    /// output size, shifted away from the reserved null.
    fn random_lossy<R: Rng>(rng: &mut R, radices: &[usize]) -> LossySpec {
        let tuple_size: usize = radices.iter().product();
        let output_size = rng.random_range(2..=3) + 1; // plus the null slot
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
            map[idx] = if any {
                1 + (acc % (output_size - 1))
            } else {
                0
            };
        }
        // Guarantee surjectivity regardless of the radices by reassigning
        // indices whose current output is not the last of its kind.
        let mut counts = vec![0usize; output_size];
        for &o in &map {
            counts[o] += 1;
        }
        for o in 1..output_size {
            if counts[o] == 0 {
                let idx = (1..tuple_size)
                    .find(|&i| counts[map[i]] > 1)
                    .expect("tuple space is larger than the output alphabet");
                counts[map[idx]] -= 1;
                map[idx] = o;
                counts[o] += 1;
            }
        }
        LossySpec { output_size, map }
    }

    /// Draws a model with `1..=max_good` stable and `0..=max_bad` unstable
    /// hidden vertices, root mechanisms, and per-vertex proxy children.
    pub fn shaped_scm<R: Rng>(cfg: &ShapedScmConfig, rng: &mut R) -> ShapedScm {
        let n_good = rng.random_range(1..=cfg.max_good);
        let n_bad = rng.random_range(0..=cfg.max_bad);

        let mut names: Vec<String> = vec!["Y".to_string()];
        let mut roles = vec![VertexRole::Label];
        let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
        let y = 0;

        let mut good_hidden = Vec::new();
        let mut bad_hidden = Vec::new();
        for i in 0..n_good {
            let u = names.len();
            names.push(format!("Ug{}", i + 1));
            roles.push(VertexRole::Hidden);
            edges.push((u, y));
            good_hidden.push(u);
        }
        for i in 0..n_bad {
            let u = names.len();
            names.push(format!("Ub{}", i + 1));
            roles.push(VertexRole::Hidden);
            edges.push((y, u));
            bad_hidden.push(u);
        }
        for (i, &u) in good_hidden.iter().chain(&bad_hidden).enumerate() {
            let m = names.len();
            names.push(format!("M{}", i + 1));
            roles.push(VertexRole::Mechanism);
            edges.push((m, u));
        }

        let mut good_side_proxies = Vec::new();
        let mut pure_bad_children: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
        let mut proxy_count = 0;
        for &u in &good_hidden {
            let n_children = rng.random_range(1..=cfg.max_children_per_hidden);
            for _ in 0..n_children {
                proxy_count += 1;
                let v = names.len();
                names.push(format!("V{proxy_count}"));
                roles.push(VertexRole::Proxy);
                edges.push((u, v));
                if good_hidden.len() > 1 && rng.random_bool(cfg.shared_good_parent_prob) {
                    let other = good_hidden[rng.random_range(0..good_hidden.len())];
                    if other != u {
                        edges.push((other, v));
                    }
                }
                good_side_proxies.push(v);
            }
        }
        for &u in &bad_hidden {
            let n_children = rng.random_range(1..=cfg.max_children_per_hidden);
            for _ in 0..n_children {
                proxy_count += 1;
                let v = names.len();
                names.push(format!("V{proxy_count}"));
                roles.push(VertexRole::Proxy);
                edges.push((u, v));
                pure_bad_children.entry(u).or_default().push(v);
            }
        }
        if !good_hidden.is_empty() && !bad_hidden.is_empty() && rng.random_bool(cfg.ambiguous_proxy_prob)
        {
            proxy_count += 1;
            let v = names.len();
            names.push(format!("V{proxy_count}"));
            roles.push(VertexRole::Proxy);
            edges.push((good_hidden[rng.random_range(0..good_hidden.len())], v));
            edges.push((bad_hidden[rng.random_range(0..bad_hidden.len())], v));
        }

        let dag = Dag::new(names, edges.clone()).expect("construction is acyclic");
        let dsd = DistributionShiftDiagram::new(dag, roles).expect("one label");

        // Alphabets are known only per topological pass, so assign parameters
        // after building a throwaway model with identity permutations first.
        // Mechanism edges keep alpha = 1 half the time: that pins the hidden
        // vertex away from null, the regime where the redundancy closed form
        // is exact.
        let mechanism_edges: std::collections::BTreeSet<(VertexId, VertexId)> = edges
            .iter()
            .copied()
            .filter(|&(p, _)| dsd.role(p) == VertexRole::Mechanism)
            .collect();
        let mut edge_params: Vec<((VertexId, VertexId), EdgeParams)> = edges
            .iter()
            .map(|&e| {
                let alpha = if mechanism_edges.contains(&e) && rng.random_bool(0.5) {
                    1.0
                } else {
                    random_alpha(rng)
                };
                (e, EdgeParams::with_alpha(alpha))
            })
            .collect();
        let root_dist: Vec<(VertexId, Vec<f64>)> = (0..dsd.dag().n())
            .filter(|&v| dsd.dag().parents_of(v).is_empty())
            .map(|v| {
                let k = rng.random_range(2..=cfg.max_root_symbols);
                (v, random_dist(rng, k))
            })
            .collect();
        // Combiners change downstream alphabet sizes, so pick them on a
        // permutation-free model first, then draw the permutations from the
        // final alphabet layout.
        let plain = DropoutScm::new(dsd.clone(), edge_params.clone(), root_dist.clone(), vec![])
            .expect("shaped model is well-formed");
        let mut combiners: Vec<(VertexId, Combiner)> = Vec::new();
        for &u in &bad_hidden {
            if rng.random_bool(cfg.lossy_bad_prob) {
                let radices = plain.tuple_radices(u);
                combiners.push((u, Combiner::Lossy(random_lossy(rng, &radices))));
            }
        }
        let with_combiners = DropoutScm::new(
            dsd.clone(),
            edge_params.clone(),
            root_dist.clone(),
            combiners.clone(),
        )
        .expect("shaped model is well-formed");
        for ((p, _), ep) in edge_params.iter_mut() {
            ep.perm = random_perm(rng, with_combiners.alphabets[*p].non_null());
        }

        let scm = DropoutScm::new(dsd, edge_params, root_dist, combiners)
            .expect("shaped model is well-formed");
        ShapedScm {
            scm,
            label: y,
            good_hidden,
            bad_hidden,
            good_side_proxies,
            pure_bad_children,
        }
    }
}
