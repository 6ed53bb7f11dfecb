//! Test support: independent numerical oracles and exactly-solvable models.
//!
//! Everything here exists so tests can check the real implementations
//! against something derived by other means (finite differences, closed
//! forms, exhaustive enumeration). Nothing in the library's hot paths may
//! depend on this module.

use std::collections::BTreeMap;

use crate::decision::CounterfactualModel;
use crate::graph::{build_graph, CausalGraph};
use crate::scm::{Mechanism, NoiseSpec, Nonlinearity, Scm};

/// Central finite-difference gradient of `f` at `at`.
pub fn fd_gradient(
    dim: usize,
    h: f64,
    mut f: impl FnMut(&[f64]) -> f64,
    at: &[f64],
) -> Vec<f64> {
    let mut point = at.to_vec();
    (0..dim)
        .map(|i| {
            let saved = point[i];
            point[i] = saved + h;
            let up = f(&point);
            point[i] = saved - h;
            let down = f(&point);
            point[i] = saved;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Smoothed relative error used by every gradient check: the absolute gap
/// over `|a| + |b| + 1e-4`, so near-zero gradients are judged on an absolute
/// scale and large ones relatively.
pub fn gradcheck_rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs() + 1e-4)
}

/// Standard normal CDF via the Abramowitz-Stegun 7.1.26 rational erf
/// approximation (|error| < 1.5e-7, plenty for Monte-Carlo comparisons).
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Every DAG over `nodes` labeled nodes whose last node is a sink, as edge
/// lists. Feasible only for tiny `nodes`; the screening soundness tests use
/// `nodes <= 4`.
pub fn all_sink_dags(nodes: usize) -> Vec<Vec<(usize, usize)>> {
    let target = nodes - 1;
    let mut candidates = Vec::new();
    for i in 0..nodes {
        for j in 0..nodes {
            if i != j && i != target {
                candidates.push((i, j));
            }
        }
    }
    let mut out = Vec::new();
    for mask in 0u32..(1 << candidates.len()) {
        let edges: Vec<(usize, usize)> = candidates
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &e)| e)
            .collect();
        if build_graph(nodes, &edges, target).is_ok() {
            out.push(edges);
        }
    }
    out
}

/// Linear-Gaussian model with exactly known structure: abduction inverts the
/// structural equations in closed form and counterfactuals replay them.
///
/// Serves as the analytically tractable stand-in for a trained surrogate in
/// decision tests: posterior means are the exact noises and each node's
/// posterior spread is configurable (zero spread makes everything
/// deterministic).
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    scm: Scm,
    posterior_std: Vec<f64>,
}

impl LinearGaussianModel {
    pub fn new(scm: Scm) -> Self {
        let n = scm.graph().node_count();
        LinearGaussianModel { scm, posterior_std: vec![0.0; n] }
    }

    /// Chain `X1 -> ... -> Xd -> Y` with the given weights (length d).
    pub fn chain(weights: &[f64]) -> Self {
        let d = weights.len();
        let edges: Vec<(usize, usize)> = (0..d).map(|i| (i, i + 1)).collect();
        let graph = build_graph(d + 1, &edges, d).unwrap();
        let mechanisms = (0..=d)
            .map(|node| Mechanism {
                node,
                weights: if node == 0 { vec![] } else { vec![weights[node - 1]] },
                nonlinearity: Nonlinearity::Identity,
            })
            .collect();
        Self::new(Scm::new(graph, mechanisms, NoiseSpec::standard(d + 1)))
    }

    pub fn with_posterior_std(mut self, node: usize, std: f64) -> Self {
        self.posterior_std[node] = std;
        self
    }

    pub fn scm(&self) -> &Scm {
        &self.scm
    }

    fn abduct_exact(&self, x_full: &[f64]) -> Vec<f64> {
        let g = self.scm.graph();
        (0..g.node_count())
            .map(|node| {
                let pa: Vec<f64> = g.parents(node).iter().map(|&p| x_full[p]).collect();
                x_full[node] - self.scm.mechanisms()[node].eval(&pa)
            })
            .collect()
    }
}

impl CounterfactualModel for LinearGaussianModel {
    fn graph(&self) -> &CausalGraph {
        self.scm.graph()
    }

    fn posterior(&self, x_full: &[f64], _u: &[f64]) -> Vec<(f64, f64)> {
        self.abduct_exact(x_full)
            .into_iter()
            .zip(&self.posterior_std)
            .map(|(mean, &std)| (mean, std))
            .collect()
    }

    fn counterfactual_from_noise(
        &self,
        x_full: &[f64],
        _u: &[f64],
        interventions: &BTreeMap<usize, f64>,
        z: &[f64],
    ) -> Vec<f64> {
        let g = self.scm.graph();
        let roots: std::collections::BTreeSet<usize> = interventions.keys().copied().collect();
        let affected = g.descendants(&roots);
        let mut values = x_full.to_vec();
        for &node in g.topological_order() {
            if let Some(&v) = interventions.get(&node) {
                values[node] = v;
            } else if affected.contains(&node) {
                let pa: Vec<f64> = g.parents(node).iter().map(|&p| values[p]).collect();
                values[node] = self.scm.mechanisms()[node].eval(&pa) + z[node];
            }
        }
        values
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-7);
        assert!((normal_cdf(1.96) - 0.975).abs() < 1e-3);
        assert!((normal_cdf(-1.6448536) - 0.05).abs() < 1e-6);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let g = fd_gradient(2, 1e-5, |p| p[0] * p[0] + 3.0 * p[1], &[2.0, 5.0]);
        assert!((g[0] - 4.0).abs() < 1e-8);
        assert!((g[1] - 3.0).abs() < 1e-8);
    }

    #[test]
    fn sink_dag_counts_are_sane() {
        // 2 nodes, 1 candidate edge: empty graph and the single edge
        assert_eq!(all_sink_dags(2).len(), 2);
        // 3 nodes: 4 candidate edges among {0,1} plus 2 into the sink
        let dags = all_sink_dags(3);
        assert!(dags.iter().all(|e| build_graph(3, e, 2).is_ok()));
        // acyclic count on 2 free nodes: 3 of 4 masks, times 4 sink masks
        assert_eq!(dags.len(), 3 * 4);
    }

    #[test]
    fn exact_chain_abducts_its_own_noise() {
        let model = LinearGaussianModel::chain(&[0.7, -1.1]);
        let z = vec![0.5, -0.2, 1.3];
        let x = model.scm().ancestral(&z);
        let post = model.posterior(&x, &[]);
        for (node, &(mean, std)) in post.iter().enumerate() {
            assert!((mean - z[node]).abs() < 1e-12);
            assert_eq!(std, 0.0);
        }
    }
}
