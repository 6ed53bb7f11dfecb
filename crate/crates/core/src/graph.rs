//! Directed acyclic causal graph with path queries and the
//! effective-intervention screening rule.
//!
//! A graph holds `node_count` nodes indexed `0..node_count`, one of which is
//! the target (outcome) node. The target must be a sink. Graphs are immutable
//! after construction, so they can be shared freely across worker threads.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default absolute tolerance for the "unchanged coordinate" test (S1).
pub const SCREEN_TOL: f64 = 1e-12;

/// Node-count guard for exact path enumeration.
pub const MAX_NODES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct CausalGraph {
    node_count: usize,
    target: usize,
    /// Sorted lexicographically; the canonical edge order.
    edges: Vec<(usize, usize)>,
    children: Vec<Vec<usize>>,
    parents: Vec<Vec<usize>>,
    topo: Vec<usize>,
    /// position[v] = index of v in `topo`.
    position: Vec<usize>,
}

/// Canonical JSON shape: `{"nodes": n, "target": t, "edges": [[i,j],...]}`.
#[derive(Serialize, Deserialize)]
struct GraphJson {
    nodes: usize,
    target: usize,
    edges: Vec<(usize, usize)>,
}

impl From<CausalGraph> for GraphJson {
    fn from(g: CausalGraph) -> Self {
        GraphJson { nodes: g.node_count, target: g.target, edges: g.edges }
    }
}

impl TryFrom<GraphJson> for CausalGraph {
    type Error = Error;
    fn try_from(j: GraphJson) -> Result<Self> {
        CausalGraph::new(j.nodes, &j.edges, j.target)
    }
}

/// Validated construction: rejects cycles, out-edges from the target,
/// out-of-range endpoints, self-loops, and graphs too large to path-enumerate.
pub fn build_graph(node_count: usize, edges: &[(usize, usize)], target: usize) -> Result<CausalGraph> {
    CausalGraph::new(node_count, edges, target)
}

impl CausalGraph {
    pub fn new(node_count: usize, edges: &[(usize, usize)], target: usize) -> Result<Self> {
        if node_count == 0 || target >= node_count {
            return Err(Error::InvalidEdge { from: target, to: target, nodes: node_count });
        }
        if node_count > MAX_NODES {
            return Err(Error::GraphTooLarge { nodes: node_count, limit: MAX_NODES });
        }
        let mut sorted: Vec<(usize, usize)> = edges.to_vec();
        sorted.sort_unstable();
        sorted.dedup();

        let mut children = vec![Vec::new(); node_count];
        let mut parents = vec![Vec::new(); node_count];
        for &(i, j) in &sorted {
            if i >= node_count || j >= node_count || i == j {
                return Err(Error::InvalidEdge { from: i, to: j, nodes: node_count });
            }
            children[i].push(j);
            parents[j].push(i);
        }

        // acyclicity is checked before the sink constraint
        let topo = kahn_order(node_count, &children, &parents)?;
        if !children[target].is_empty() {
            return Err(Error::TargetNotSink { target });
        }
        let mut position = vec![0; node_count];
        for (idx, &v) in topo.iter().enumerate() {
            position[v] = idx;
        }
        Ok(CausalGraph { node_count, target, edges: sorted, children, parents, topo, position })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Number of intervenable variables (every node except the target).
    pub fn var_count(&self) -> usize {
        self.node_count - 1
    }

    pub fn target(&self) -> usize {
        self.target
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn parents(&self, node: usize) -> &[usize] {
        &self.parents[node]
    }

    pub fn children(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    /// Node indices of the intervenable variables, ascending.
    pub fn variables(&self) -> Vec<usize> {
        (0..self.node_count).filter(|&v| v != self.target).collect()
    }

    /// Node index of the variable at position `pos` in a length-d vector.
    pub fn var_node(&self, pos: usize) -> usize {
        if pos < self.target {
            pos
        } else {
            pos + 1
        }
    }

    /// Inverse of [`var_node`]; `None` for the target.
    pub fn var_pos(&self, node: usize) -> Option<usize> {
        use std::cmp::Ordering::*;
        match node.cmp(&self.target) {
            Less => Some(node),
            Equal => None,
            Greater => Some(node - 1),
        }
    }

    /// Topological order, ties broken by ascending node index.
    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// All nodes reachable from `roots` by directed paths, excluding the
    /// roots themselves.
    pub fn descendants(&self, roots: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut seen = vec![false; self.node_count];
        let mut stack: Vec<usize> = roots.iter().copied().collect();
        let mut out = BTreeSet::new();
        while let Some(v) = stack.pop() {
            for &c in &self.children[v] {
                if !seen[c] {
                    seen[c] = true;
                    if !roots.contains(&c) {
                        out.insert(c);
                    }
                    stack.push(c);
                }
            }
        }
        out
    }

    /// All simple directed paths from `src` to `dst`, each including both
    /// endpoints, in lexicographic order. Empty when `dst` is unreachable.
    pub fn directed_paths(&self, src: usize, dst: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut prefix = vec![src];
        self.path_dfs(src, dst, &mut prefix, &mut out);
        out
    }

    fn path_dfs(&self, v: usize, dst: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if v == dst {
            out.push(prefix.clone());
            return;
        }
        // children are stored in ascending order via sorted edges
        for &c in &self.children[v] {
            prefix.push(c);
            self.path_dfs(c, dst, prefix, out);
            prefix.pop();
        }
    }

    /// Effective-intervention screening with the default S1 tolerance.
    ///
    /// See [`screen_effective_with_tol`] for the rule.
    pub fn screen_effective(&self, x: &[f64], x_star: &[f64]) -> Result<BTreeSet<usize>> {
        self.screen_effective_with_tol(x, x_star, SCREEN_TOL)
    }

    /// Two-stage screening of a candidate intervention vector.
    ///
    /// Inputs are length-d vectors over the intervenable variables (target
    /// excluded); the returned set holds variable *node* indices.
    ///
    /// * S1 drops every coordinate left unchanged (`|x*_i - x_i| <= tol`).
    /// * S2, iterated to a fixpoint in ascending topological order, drops a
    ///   variable when its influence on the target cannot survive the other
    ///   surviving clamps: every directed path to the target is either absent
    ///   entirely, or has at least one intermediate node and all of its
    ///   intermediates inside the current remaining set. A direct edge to the
    ///   target can never be clamped away, so it always keeps its variable.
    pub fn screen_effective_with_tol(
        &self,
        x: &[f64],
        x_star: &[f64],
        tol: f64,
    ) -> Result<BTreeSet<usize>> {
        let d = self.var_count();
        if x.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: x.len() });
        }
        if x_star.len() != d {
            return Err(Error::LengthMismatch { expected: d, got: x_star.len() });
        }

        // S1: changed coordinates only.
        let mut remaining: BTreeSet<usize> = (0..d)
            .filter(|&p| (x_star[p] - x[p]).abs() > tol)
            .map(|p| self.var_node(p))
            .collect();

        // S2: sweep in causal order, deleting immediately, until stable.
        loop {
            let mut deleted = false;
            let order: Vec<usize> = self
                .topo
                .iter()
                .copied()
                .filter(|v| remaining.contains(v))
                .collect();
            for v in order {
                if self.mediated_by(v, &remaining) {
                    remaining.remove(&v);
                    deleted = true;
                }
            }
            if !deleted {
                break;
            }
        }
        Ok(remaining)
    }

    /// True when every path from `v` to the target is fully mediated by
    /// `remaining` (vacuously true when no path exists).
    fn mediated_by(&self, v: usize, remaining: &BTreeSet<usize>) -> bool {
        let paths = self.directed_paths(v, self.target);
        paths.iter().all(|path| {
            let intermediates = &path[1..path.len() - 1];
            !intermediates.is_empty() && intermediates.iter().all(|m| remaining.contains(m))
        })
    }
}

fn kahn_order(n: usize, children: &[Vec<usize>], parents: &[Vec<usize>]) -> Result<Vec<usize>> {
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    // min-heap on node index for the deterministic tie-break
    let mut ready: BTreeSet<usize> = (0..n).filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&v) = ready.iter().next() {
        ready.remove(&v);
        order.push(v);
        for &c in &children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.insert(c);
            }
        }
    }
    if order.len() != n {
        return Err(Error::Cycle);
    }
    Ok(order)
}
