//! Causal DAGs, distribution shift diagrams, d-separation, and the
//! good/bad/ambiguous classification of hidden variables and proxies.
//!
//! Vertices are dense integer ids with a side table of string names; all
//! algorithms operate on the integers. d-separation uses the standard
//! reachable-via-active-trail sweep rather than path enumeration, so it stays
//! linear in the number of edges; the exponential path-enumeration variant
//! exists only as an oracle inside the test-suite.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::collections::VecDeque;
use thiserror::Error;

pub type VertexId = usize;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("vertex id {0} out of range")]
    UnknownVertex(usize),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(usize, usize),
    #[error("self-loop on vertex {0}")]
    SelfLoop(usize),
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("query sets must be pairwise disjoint")]
    NonDisjointSets,
    #[error("diagram must have exactly one label vertex, found {0}")]
    LabelCount(usize),
    #[error("diagram violates structural invariants: {0}")]
    InvalidDiagram(String),
    #[error("hidden vertex `{0}` has no unique mechanism")]
    MechanismLookup(String),
    #[error("hidden vertex `{0}`: d-separation and structural readings of the good/bad split disagree")]
    ClassificationConflict(String),
    #[error("hidden vertex `{0}` matches neither the good nor the bad d-separation pattern")]
    Unclassifiable(String),
}

/// Role of a vertex in a distribution shift diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexRole {
    /// The prediction target `Y`.
    Label,
    /// Unobserved cause or effect of the label.
    Hidden,
    /// Observed descendant of hidden variables; the only usable covariates.
    Proxy,
    /// Shift mechanism attached to one hidden variable.
    Mechanism,
}

/// Directed acyclic graph over dense integer vertex ids.
#[derive(Debug, Clone)]
pub struct Dag {
    names: Vec<String>,
    edges: Vec<(VertexId, VertexId)>,
    parents: Vec<Vec<VertexId>>,
    children: Vec<Vec<VertexId>>,
    topo: Vec<VertexId>,
}

impl Dag {
    /// Builds a DAG, rejecting self-loops, duplicate edges, out-of-range ids,
    /// and cycles.
    pub fn new(names: Vec<String>, edges: Vec<(VertexId, VertexId)>) -> Result<Self, GraphError> {
        let n = names.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(p, c) in &edges {
            if p >= n {
                return Err(GraphError::UnknownVertex(p));
            }
            if c >= n {
                return Err(GraphError::UnknownVertex(c));
            }
            if p == c {
                return Err(GraphError::SelfLoop(p));
            }
            if !seen.insert((p, c)) {
                return Err(GraphError::DuplicateEdge(p, c));
            }
            parents[c].push(p);
            children[p].push(c);
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort_unstable();
        }

        // Kahn's algorithm with a sorted frontier: ties break on vertex id so
        // the order is reproducible.
        let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
        let mut frontier: BTreeSet<VertexId> = (0..n).filter(|&v| indegree[v] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(&v) = frontier.iter().next() {
            frontier.remove(&v);
            topo.push(v);
            for &c in &children[v] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    frontier.insert(c);
                }
            }
        }
        if topo.len() != n {
            return Err(GraphError::Cyclic);
        }
        Ok(Dag {
            names,
            edges,
            parents,
            children,
            topo,
        })
    }

    pub fn n(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, v: VertexId) -> &str {
        &self.names[v]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<VertexId> {
        self.names.iter().position(|n| n == name)
    }

    pub fn edges(&self) -> &[(VertexId, VertexId)] {
        &self.edges
    }

    pub fn parents_of(&self, v: VertexId) -> &[VertexId] {
        &self.parents[v]
    }

    pub fn children_of(&self, v: VertexId) -> &[VertexId] {
        &self.children[v]
    }

    pub fn has_edge(&self, p: VertexId, c: VertexId) -> bool {
        self.children[p].binary_search(&c).is_ok()
    }

    /// Vertices in a reproducible topological order (ties by id).
    pub fn topo_order(&self) -> &[VertexId] {
        &self.topo
    }

    fn check_ids(&self, ids: &[VertexId]) -> Result<(), GraphError> {
        for &v in ids {
            if v >= self.n() {
                return Err(GraphError::UnknownVertex(v));
            }
        }
        Ok(())
    }

    /// Boolean mask of vertices that are `set` members or ancestors thereof.
    fn ancestral_mask(&self, set: &[VertexId]) -> Vec<bool> {
        let mut mask = vec![false; self.n()];
        let mut queue: VecDeque<VertexId> = set.iter().copied().collect();
        for &v in set {
            mask[v] = true;
        }
        while let Some(v) = queue.pop_front() {
            for &p in &self.parents[v] {
                if !mask[p] {
                    mask[p] = true;
                    queue.push_back(p);
                }
            }
        }
        mask
    }
}

/// True iff every path between `a` and `b` is blocked given `z`.
///
/// Reachability sweep over (vertex, travel direction) states: a collider is
/// passable only when it has a descendant in `z`, a non-collider only when it
/// is outside `z`.
pub fn d_separated(
    dag: &Dag,
    a: &[VertexId],
    b: &[VertexId],
    z: &[VertexId],
) -> Result<bool, GraphError> {
    dag.check_ids(a)?;
    dag.check_ids(b)?;
    dag.check_ids(z)?;
    let mut membership = vec![0u8; dag.n()];
    for (tag, set) in [(1u8, a), (2, b), (3, z)] {
        for &v in set {
            if membership[v] != 0 {
                return Err(GraphError::NonDisjointSets);
            }
            membership[v] = tag;
        }
    }

    let in_z: Vec<bool> = membership.iter().map(|&m| m == 3).collect();
    let anc_z = dag.ancestral_mask(z);

    // State: (vertex, arrived moving upward). Starting vertices behave as if
    // entered from a child.
    let mut visited_up = vec![false; dag.n()];
    let mut visited_down = vec![false; dag.n()];
    let mut stack: Vec<(VertexId, bool)> = a.iter().map(|&v| (v, true)).collect();
    while let Some((v, up)) = stack.pop() {
        let seen = if up {
            &mut visited_up
        } else {
            &mut visited_down
        };
        if seen[v] {
            continue;
        }
        seen[v] = true;

        if !in_z[v] && membership[v] == 2 {
            return Ok(false);
        }
        if up && !in_z[v] {
            for &p in dag.parents_of(v) {
                stack.push((p, true));
            }
            for &c in dag.children_of(v) {
                stack.push((c, false));
            }
        } else if !up {
            if !in_z[v] {
                for &c in dag.children_of(v) {
                    stack.push((c, false));
                }
            }
            if anc_z[v] {
                for &p in dag.parents_of(v) {
                    stack.push((p, true));
                }
            }
        }
    }
    Ok(true)
}

/// Causal DAG plus vertex roles; the unit all higher-level operations work on.
#[derive(Debug, Clone)]
pub struct DistributionShiftDiagram {
    dag: Dag,
    roles: Vec<VertexRole>,
    label: VertexId,
}

impl DistributionShiftDiagram {
    /// Requires a well-formed DAG and exactly one label vertex. All remaining
    /// structural rules are soft: [`validate`](Self::validate) reports them as
    /// violations so a CLI can show every problem at once.
    pub fn new(dag: Dag, roles: Vec<VertexRole>) -> Result<Self, GraphError> {
        if roles.len() != dag.n() {
            return Err(GraphError::UnknownVertex(roles.len().min(dag.n())));
        }
        let labels: Vec<VertexId> = (0..dag.n())
            .filter(|&v| roles[v] == VertexRole::Label)
            .collect();
        if labels.len() != 1 {
            return Err(GraphError::LabelCount(labels.len()));
        }
        Ok(DistributionShiftDiagram {
            dag,
            roles,
            label: labels[0],
        })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn role(&self, v: VertexId) -> VertexRole {
        self.roles[v]
    }

    pub fn label(&self) -> VertexId {
        self.label
    }

    pub fn vertices_with_role(&self, role: VertexRole) -> Vec<VertexId> {
        (0..self.dag.n()).filter(|&v| self.roles[v] == role).collect()
    }

    pub fn hidden(&self) -> Vec<VertexId> {
        self.vertices_with_role(VertexRole::Hidden)
    }

    pub fn proxies(&self) -> Vec<VertexId> {
        self.vertices_with_role(VertexRole::Proxy)
    }

    pub fn mechanisms(&self) -> Vec<VertexId> {
        self.vertices_with_role(VertexRole::Mechanism)
    }

    /// The unique mechanism adjacent to a hidden vertex. Mechanisms usually
    /// point into their hidden variable, but the child orientation (the hidden
    /// variable feeding a sensor-like mechanism) is also legal.
    pub fn mechanism_of(&self, u: VertexId) -> Result<VertexId, GraphError> {
        let adjacent: Vec<VertexId> = self
            .dag
            .parents_of(u)
            .iter()
            .chain(self.dag.children_of(u))
            .copied()
            .filter(|&m| self.roles[m] == VertexRole::Mechanism)
            .collect();
        match adjacent.as_slice() {
            [m] => Ok(*m),
            _ => Err(GraphError::MechanismLookup(self.dag.name(u).to_string())),
        }
    }

    /// The hidden vertex a mechanism is attached to.
    pub fn hidden_of_mechanism(&self, m: VertexId) -> Result<VertexId, GraphError> {
        let adjacent: Vec<VertexId> = self
            .dag
            .parents_of(m)
            .iter()
            .chain(self.dag.children_of(m))
            .copied()
            .filter(|&u| self.roles[u] == VertexRole::Hidden)
            .collect();
        match adjacent.as_slice() {
            [u] => Ok(*u),
            _ => Err(GraphError::MechanismLookup(self.dag.name(m).to_string())),
        }
    }

    /// All structural violations, empty iff the diagram is valid.
    ///
    /// Checked rules: systemic sparsity (no hidden-hidden or proxy-proxy
    /// edges), hidden vertices belong to the label's family, proxies are
    /// leaves with at least one hidden parent and only hidden parents, each
    /// hidden vertex has exactly one mechanism attached by a single edge, a
    /// mechanism touches nothing else, and the label has no mechanism parent.
    pub fn validate(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let dag = &self.dag;
        let name = |v: VertexId| dag.name(v).to_string();
        let y = self.label;

        for &(p, c) in dag.edges() {
            match (self.roles[p], self.roles[c]) {
                (VertexRole::Hidden, VertexRole::Hidden) => violations.push(format!(
                    "hidden-hidden edge {} -> {}",
                    name(p),
                    name(c)
                )),
                (VertexRole::Proxy, VertexRole::Proxy) => violations.push(format!(
                    "proxy-proxy edge {} -> {}",
                    name(p),
                    name(c)
                )),
                _ => {}
            }
        }

        for u in self.hidden() {
            if !dag.has_edge(u, y) && !dag.has_edge(y, u) {
                violations.push(format!(
                    "hidden vertex {} is neither a parent nor a child of the label",
                    name(u)
                ));
            }
            let mechs: Vec<VertexId> = dag
                .parents_of(u)
                .iter()
                .chain(dag.children_of(u))
                .copied()
                .filter(|&m| self.roles[m] == VertexRole::Mechanism)
                .collect();
            if mechs.len() != 1 {
                violations.push(format!(
                    "hidden vertex {} has {} mechanisms, expected exactly one",
                    name(u),
                    mechs.len()
                ));
            }
        }

        for v in self.proxies() {
            let hidden_parents = dag
                .parents_of(v)
                .iter()
                .filter(|&&p| self.roles[p] == VertexRole::Hidden)
                .count();
            if hidden_parents == 0 {
                violations.push(format!("proxy {} has no hidden parent", name(v)));
            }
            for &p in dag.parents_of(v) {
                if self.roles[p] != VertexRole::Hidden {
                    violations.push(format!(
                        "proxy {} has non-hidden parent {}",
                        name(v),
                        name(p)
                    ));
                }
            }
            for &c in dag.children_of(v) {
                violations.push(format!("proxy {} has outgoing edge to {}", name(v), name(c)));
            }
        }

        for m in self.mechanisms() {
            let degree = dag.parents_of(m).len() + dag.children_of(m).len();
            if degree != 1 {
                violations.push(format!(
                    "mechanism {} touches {} vertices, expected exactly one hidden vertex",
                    name(m),
                    degree
                ));
            }
            for &o in dag.parents_of(m).iter().chain(dag.children_of(m)) {
                if self.roles[o] != VertexRole::Hidden {
                    violations.push(format!(
                        "mechanism {} attached to non-hidden vertex {}",
                        name(m),
                        name(o)
                    ));
                }
            }
        }

        for &p in dag.parents_of(y) {
            if self.roles[p] == VertexRole::Mechanism {
                violations.push(format!("label has mechanism parent {}", name(p)));
            }
        }

        violations
    }

    fn require_valid(&self) -> Result<(), GraphError> {
        let violations = self.validate();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(GraphError::InvalidDiagram(violations.join("; ")))
        }
    }
}

/// Split of the hidden variables into shift-stable and shift-unstable sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HiddenPartition {
    pub good: BTreeSet<VertexId>,
    pub bad: BTreeSet<VertexId>,
}

/// Proxy classes induced by a hidden partition: children of good hidden
/// variables only, of bad ones only, or of both.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyPartition {
    pub good: BTreeSet<VertexId>,
    pub bad: BTreeSet<VertexId>,
    pub ambiguous: BTreeSet<VertexId>,
}

/// Classifies each hidden vertex by whether its mechanism and the label form
/// a collider at it.
///
/// Two readings are computed and must agree: the d-separation test (`M` and
/// `Y` d-connected unconditionally -> good; d-separated but d-connected given
/// `U` -> bad) and the structural test (collider iff both the mechanism edge
/// and the label edge point into `U`). A diagram where they disagree is
/// rejected rather than guessed at.
pub fn classify_hidden(dsd: &DistributionShiftDiagram) -> Result<HiddenPartition, GraphError> {
    dsd.require_valid()?;
    let dag = dsd.dag();
    let y = dsd.label();
    let mut good = BTreeSet::new();
    let mut bad = BTreeSet::new();
    for u in dsd.hidden() {
        let m = dsd.mechanism_of(u)?;
        let connected_plain = !d_separated(dag, &[m], &[y], &[])?;
        let classified_good = if connected_plain {
            true
        } else if !d_separated(dag, &[m], &[y], &[u])? {
            false
        } else {
            return Err(GraphError::Unclassifiable(dag.name(u).to_string()));
        };
        let structural_collider = dag.has_edge(m, u) && dag.has_edge(y, u);
        if classified_good != !structural_collider {
            return Err(GraphError::ClassificationConflict(dag.name(u).to_string()));
        }
        if classified_good {
            good.insert(u);
        } else {
            bad.insert(u);
        }
    }
    Ok(HiddenPartition { good, bad })
}

/// Set algebra on proxy children of the hidden partition: proxies with only
/// good parents, only bad parents, or a mix.
pub fn classify_proxies(dsd: &DistributionShiftDiagram, hp: &HiddenPartition) -> ProxyPartition {
    let dag = dsd.dag();
    let child_proxies = |set: &BTreeSet<VertexId>| -> BTreeSet<VertexId> {
        set.iter()
            .flat_map(|&u| dag.children_of(u).iter().copied())
            .filter(|&c| dsd.role(c) == VertexRole::Proxy)
            .collect()
    };
    let of_good = child_proxies(&hp.good);
    let of_bad = child_proxies(&hp.bad);
    ProxyPartition {
        good: of_good.difference(&of_bad).copied().collect(),
        bad: of_bad.difference(&of_good).copied().collect(),
        ambiguous: of_good.intersection(&of_bad).copied().collect(),
    }
}

pub mod random {
    //! Structured random diagrams for fuzzing and the soundness suites.

    use super::*;
    use rand::Rng;

    /// Shape parameters for [`random_dsd`]. Always emits one mechanism per
    /// hidden vertex; effect-side mechanisms flip to the child orientation
    /// with probability `child_mechanism_prob` (which makes that hidden
    /// vertex stable).
    #[derive(Debug, Clone)]
    pub struct RandomDsdConfig {
        pub n_causes: usize,
        pub n_effects: usize,
        pub n_proxies: usize,
        /// Probability of each additional hidden parent on a proxy.
        pub extra_parent_prob: f64,
        pub child_mechanism_prob: f64,
        /// Append a single-parent proxy for every hidden vertex that lacks
        /// one, so seed sets with unambiguous classes always exist.
        pub ensure_pure_children: bool,
    }

    impl Default for RandomDsdConfig {
        fn default() -> Self {
            RandomDsdConfig {
                n_causes: 1,
                n_effects: 2,
                n_proxies: 5,
                extra_parent_prob: 0.3,
                child_mechanism_prob: 0.0,
                ensure_pure_children: false,
            }
        }
    }

    pub fn random_dsd<R: Rng>(cfg: &RandomDsdConfig, rng: &mut R) -> DistributionShiftDiagram {
        let n_hidden = cfg.n_causes + cfg.n_effects;
        assert!(n_hidden > 0, "need at least one hidden vertex");

        let mut names = vec!["Y".to_string()];
        let mut roles = vec![VertexRole::Label];
        let mut edges: Vec<(VertexId, VertexId)> = Vec::new();
        let y = 0;

        let mut hidden_ids = Vec::new();
        for i in 0..n_hidden {
            let u = names.len();
            names.push(format!("U{}", i + 1));
            roles.push(VertexRole::Hidden);
            hidden_ids.push(u);
            if i < cfg.n_causes {
                edges.push((u, y));
            } else {
                edges.push((y, u));
            }
        }
        for (i, &u) in hidden_ids.iter().enumerate() {
            let m = names.len();
            names.push(format!("M{}", i + 1));
            roles.push(VertexRole::Mechanism);
            let is_effect = i >= cfg.n_causes;
            if is_effect && rng.random_bool(cfg.child_mechanism_prob) {
                edges.push((u, m));
            } else {
                edges.push((m, u));
            }
        }

        let mut proxy_count = 0;
        let mut push_proxy = |names: &mut Vec<String>,
                              roles: &mut Vec<VertexRole>,
                              edges: &mut Vec<(VertexId, VertexId)>,
                              parents: &[VertexId]| {
            proxy_count += 1;
            let v = names.len();
            names.push(format!("V{proxy_count}"));
            roles.push(VertexRole::Proxy);
            for &p in parents {
                edges.push((p, v));
            }
        };

        for _ in 0..cfg.n_proxies {
            let first = hidden_ids[rng.random_range(0..n_hidden)];
            let mut parents = vec![first];
            for &u in &hidden_ids {
                if u != first && rng.random_bool(cfg.extra_parent_prob) {
                    parents.push(u);
                }
            }
            push_proxy(&mut names, &mut roles, &mut edges, &parents);
        }

        if cfg.ensure_pure_children {
            let mut covered = vec![false; n_hidden];
            for (i, &u) in hidden_ids.iter().enumerate() {
                // A pure child is one whose sole parent is u.
                covered[i] = edges
                    .iter()
                    .any(|&(p, c)| p == u && roles[c] == VertexRole::Proxy && {
                        edges.iter().filter(|&&(_, c2)| c2 == c).count() == 1
                    });
            }
            for (i, &u) in hidden_ids.iter().enumerate() {
                if !covered[i] {
                    push_proxy(&mut names, &mut roles, &mut edges, &[u]);
                }
            }
        }

        let dag = Dag::new(names, edges).expect("generated diagram is acyclic by construction");
        DistributionShiftDiagram::new(dag, roles).expect("single label by construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dag(names: &[&str], edges: &[(usize, usize)]) -> Dag {
        Dag::new(
            names.iter().map(|s| s.to_string()).collect(),
            edges.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_malformed_graphs() {
        assert_eq!(
            Dag::new(vec!["a".into()], vec![(0, 0)]).unwrap_err(),
            GraphError::SelfLoop(0)
        );
        assert_eq!(
            Dag::new(vec!["a".into(), "b".into()], vec![(0, 1), (0, 1)]).unwrap_err(),
            GraphError::DuplicateEdge(0, 1)
        );
        assert_eq!(
            Dag::new(vec!["a".into(), "b".into()], vec![(0, 1), (1, 0)]).unwrap_err(),
            GraphError::Cyclic
        );
        assert_eq!(
            Dag::new(vec!["a".into()], vec![(0, 1)]).unwrap_err(),
            GraphError::UnknownVertex(1)
        );
    }

    #[test]
    fn chain_blocking() {
        let g = dag(&["A", "B", "C"], &[(0, 1), (1, 2)]);
        assert!(!d_separated(&g, &[0], &[2], &[]).unwrap());
        assert!(d_separated(&g, &[0], &[2], &[1]).unwrap());
    }

    #[test]
    fn collider_rule() {
        let g = dag(&["A", "B", "C"], &[(0, 1), (2, 1)]);
        assert!(d_separated(&g, &[0], &[2], &[]).unwrap());
        assert!(!d_separated(&g, &[0], &[2], &[1]).unwrap());
    }

    #[test]
    fn collider_descendant_unblocks() {
        let g = dag(&["A", "B", "C", "D"], &[(0, 1), (2, 1), (1, 3)]);
        assert!(d_separated(&g, &[0], &[2], &[]).unwrap());
        assert!(!d_separated(&g, &[0], &[2], &[3]).unwrap());
    }

    #[test]
    fn fork_blocking() {
        let g = dag(&["A", "B", "C"], &[(1, 0), (1, 2)]);
        assert!(!d_separated(&g, &[0], &[2], &[]).unwrap());
        assert!(d_separated(&g, &[0], &[2], &[1]).unwrap());
    }

    #[test]
    fn overlapping_sets_rejected() {
        let g = dag(&["A", "B", "C"], &[(0, 1), (1, 2)]);
        assert_eq!(
            d_separated(&g, &[0], &[0], &[]).unwrap_err(),
            GraphError::NonDisjointSets
        );
    }

    /// One cause, one effect, a mechanism each, one pure proxy per hidden
    /// vertex plus one shared proxy.
    fn small_dsd() -> DistributionShiftDiagram {
        // 0 Y, 1 U_G, 2 U_B, 3 M_G, 4 M_B, 5 V_G, 6 V_B, 7 V_A
        let g = dag(
            &["Y", "U_G", "U_B", "M_G", "M_B", "V_G", "V_B", "V_A"],
            &[
                (1, 0),
                (0, 2),
                (3, 1),
                (4, 2),
                (1, 5),
                (2, 6),
                (1, 7),
                (2, 7),
            ],
        );
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
        DistributionShiftDiagram::new(g, roles).unwrap()
    }

    #[test]
    fn valid_diagram_has_no_violations() {
        assert!(small_dsd().validate().is_empty());
    }

    #[test]
    fn hidden_hidden_edge_reported() {
        let mut names: Vec<String> = small_dsd().dag().names().to_vec();
        let mut edges = small_dsd().dag().edges().to_vec();
        edges.push((1, 2));
        let roles: Vec<VertexRole> = (0..names.len()).map(|v| small_dsd().role(v)).collect();
        let g = Dag::new(std::mem::take(&mut names), edges).unwrap();
        let dsd = DistributionShiftDiagram::new(g, roles).unwrap();
        let violations = dsd.validate();
        assert_eq!(violations.len(), 1);
        assert!(violations[0].contains("hidden-hidden edge"));
    }

    #[test]
    fn proxy_proxy_edge_reported() {
        let base = small_dsd();
        let mut edges = base.dag().edges().to_vec();
        edges.push((5, 6));
        let roles: Vec<VertexRole> = (0..base.dag().n()).map(|v| base.role(v)).collect();
        let g = Dag::new(base.dag().names().to_vec(), edges).unwrap();
        let dsd = DistributionShiftDiagram::new(g, roles).unwrap();
        let violations = dsd.validate();
        // The added edge also makes V_G a non-leaf.
        assert!(violations.iter().any(|v| v.contains("proxy-proxy edge")));
    }

    #[test]
    fn classification_on_small_dsd() {
        let dsd = small_dsd();
        let hp = classify_hidden(&dsd).unwrap();
        assert_eq!(hp.good, BTreeSet::from([1]));
        assert_eq!(hp.bad, BTreeSet::from([2]));
        let pp = classify_proxies(&dsd, &hp);
        assert_eq!(pp.good, BTreeSet::from([5]));
        assert_eq!(pp.bad, BTreeSet::from([6]));
        assert_eq!(pp.ambiguous, BTreeSet::from([7]));
    }

    #[test]
    fn single_cause_is_good() {
        // U -> Y with its mechanism; one proxy.
        let g = dag(&["Y", "U", "M", "V"], &[(1, 0), (2, 1), (1, 3)]);
        let roles = vec![
            VertexRole::Label,
            VertexRole::Hidden,
            VertexRole::Mechanism,
            VertexRole::Proxy,
        ];
        let dsd = DistributionShiftDiagram::new(g, roles).unwrap();
        let hp = classify_hidden(&dsd).unwrap();
        assert_eq!(hp.good, BTreeSet::from([1]));
        assert!(hp.bad.is_empty());
        let pp = classify_proxies(&dsd, &hp);
        assert_eq!(pp.good, BTreeSet::from([3]));
    }

    #[test]
    fn child_mechanism_makes_effect_good() {
        // Y -> U -> M: the mechanism hangs off the effect, so no collider.
        let g = dag(&["Y", "U", "M", "V"], &[(0, 1), (1, 2), (1, 3)]);
        let roles = vec![
            VertexRole::Label,
            VertexRole::Hidden,
            VertexRole::Mechanism,
            VertexRole::Proxy,
        ];
        let dsd = DistributionShiftDiagram::new(g, roles).unwrap();
        let hp = classify_hidden(&dsd).unwrap();
        assert_eq!(hp.good, BTreeSet::from([1]));
        assert!(hp.bad.is_empty());
    }
}
