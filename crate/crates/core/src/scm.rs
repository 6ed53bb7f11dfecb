//! Ground-truth structural causal models: random construction, anomaly
//! injection, ancestral sampling, and the exact counterfactual oracle that
//! evaluation compares against.
//!
//! Every variable follows an additive-noise mechanism
//! `X_j = f_j(PA_j) + Z_j` with `f_j` a (possibly squashed) weighted sum of
//! the parents. Anomalies are noise-distribution shifts: a pattern replaces
//! one variable's `N(mu, sigma^2)` noise with `N(mu', sigma'^2)` and lets the
//! shift propagate to descendants.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_graph, CausalGraph};
use crate::rng::{self, stream};

/// Graph topology family used by the synthetic experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Structure {
    Chain,
    Random,
}

/// Edge-weight magnitude band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Medium,
    Strong,
}

impl Strength {
    /// Absolute-weight sampling range.
    pub fn range(self) -> (f64, f64) {
        match self {
            Strength::Weak => (0.1, 0.5),
            Strength::Medium => (0.5, 1.0),
            Strength::Strong => (1.0, 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Nonlinearity {
    Identity,
    Tanh,
}

impl Nonlinearity {
    fn apply(self, v: f64) -> f64 {
        match self {
            Nonlinearity::Identity => v,
            Nonlinearity::Tanh => v.tanh(),
        }
    }
}

/// Structural equation for one node: `x = nonlin(w . x_parents) + z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mechanism {
    pub node: usize,
    /// One weight per parent, aligned with the graph's parent order.
    pub weights: Vec<f64>,
    pub nonlinearity: Nonlinearity,
}

impl Mechanism {
    pub fn eval(&self, parent_values: &[f64]) -> f64 {
        debug_assert_eq!(parent_values.len(), self.weights.len());
        let s: f64 = self
            .weights
            .iter()
            .zip(parent_values)
            .map(|(w, v)| w * v)
            .sum();
        self.nonlinearity.apply(s)
    }
}

/// Per-node noise distributions for both regimes, indexed by node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub anom_mean: Vec<f64>,
    pub anom_std: Vec<f64>,
}

impl NoiseSpec {
    /// Standard-normal noise everywhere with the default anomalous regime
    /// `mu' = mu + 3 sigma`, `sigma' = 2 sigma`.
    pub fn standard(node_count: usize) -> Self {
        let mut spec = NoiseSpec {
            mean: vec![0.0; node_count],
            std: vec![1.0; node_count],
            anom_mean: vec![0.0; node_count],
            anom_std: vec![0.0; node_count],
        };
        spec.set_anomaly_shifts(3.0, 2.0);
        spec
    }

    /// Rewrite the anomalous regime as `mu' = mu + shift_sigmas * sigma`,
    /// `sigma' = std_scale * sigma`.
    pub fn set_anomaly_shifts(&mut self, shift_sigmas: f64, std_scale: f64) {
        for i in 0..self.mean.len() {
            self.anom_mean[i] = self.mean[i] + shift_sigmas * self.std[i];
            self.anom_std[i] = std_scale * self.std[i];
        }
    }
}

/// One anomaly pattern: a noise shift on a single non-target variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyPattern {
    pub id: usize,
    pub variable: usize,
    pub mean: f64,
    pub std: f64,
}

/// Ground-truth SCM: graph, mechanisms, noise regimes, anomaly threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scm {
    graph: CausalGraph,
    mechanisms: Vec<Mechanism>,
    noise: NoiseSpec,
    threshold: Option<f64>,
}

impl Scm {
    pub fn new(graph: CausalGraph, mechanisms: Vec<Mechanism>, noise: NoiseSpec) -> Self {
        assert_eq!(mechanisms.len(), graph.node_count(), "one mechanism per node");
        assert_eq!(noise.mean.len(), graph.node_count());
        Scm { graph, mechanisms, noise, threshold: None }
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn noise_mut(&mut self) -> &mut NoiseSpec {
        &mut self.noise
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }

    pub fn set_threshold(&mut self, t: f64) {
        self.threshold = Some(t);
    }

    /// Evaluate all node values for a given noise vector (no interventions).
    pub fn ancestral(&self, z: &[f64]) -> Vec<f64> {
        self.propagate(z, &BTreeMap::new())
    }

    fn propagate(&self, z: &[f64], clamp: &BTreeMap<usize, f64>) -> Vec<f64> {
        let mut values = vec![0.0; self.graph.node_count()];
        for &node in self.graph.topological_order() {
            if let Some(&v) = clamp.get(&node) {
                values[node] = v;
                continue;
            }
            let parents = self.graph.parents(node);
            let pa: Vec<f64> = parents.iter().map(|&p| values[p]).collect();
            values[node] = self.mechanisms[node].eval(&pa) + z[node];
        }
        values
    }

    fn draw_noise(&self, rng: &mut rng::Rng, pattern: Option<&AnomalyPattern>) -> Vec<f64> {
        let n = self.graph.node_count();
        let mut z = Vec::with_capacity(n);
        for node in 0..n {
            let (mean, std) = match pattern {
                Some(p) if p.variable == node => (p.mean, p.std),
                _ => (self.noise.mean[node], self.noise.std[node]),
            };
            let draw: f64 = rng.sample::<f64, _>(rand_distr::StandardNormal);
            z.push(mean + std * draw);
        }
        z
    }
}

/// Samples with stored generative noises and anomaly bookkeeping.
///
/// `x` holds the intervenable variables in ascending node order (target
/// excluded); `z_true` holds the noise for every node including the target.
/// `pattern_id` and `root_cause` are -1 for normal-regime rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub z_true: Vec<Vec<f64>>,
    pub pattern_id: Vec<i64>,
    pub root_cause: Vec<i64>,
    pub y_abnormal: Vec<bool>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Row as the concatenated `[x, y]` vector the clustering runs on.
    pub fn row_xy(&self, i: usize) -> Vec<f64> {
        let mut r = self.x[i].clone();
        r.push(self.y[i]);
        r
    }

    pub fn abnormal_rows(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.y_abnormal[i]).collect()
    }
}

/// Random causal graph over `n` variables plus a target sink.
///
/// `chain` builds `X1 -> X2 -> ... -> Xn -> Y`. `random` samples a
/// topological permutation of the variables (target last) and includes each
/// forward pair independently with probability `sparsity`, redrawing until
/// the target has a parent and is reachable from some root (at most 100
/// attempts).
pub fn generate_random_graph(
    n: usize,
    structure: Structure,
    sparsity: f64,
    seed: u64,
) -> Result<CausalGraph> {
    assert!(n >= 1, "need at least one variable");
    let target = n;
    match structure {
        Structure::Chain => {
            let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, i + 1)).collect();
            build_graph(n + 1, &edges, target)
        }
        Structure::Random => {
            assert!(
                sparsity > 0.0 && sparsity < 1.0,
                "sparsity must lie in (0, 1)"
            );
            let mut rng = rng::derive(seed, &[stream::GRAPH]);
            const ATTEMPTS: usize = 100;
            for _ in 0..ATTEMPTS {
                let mut order: Vec<usize> = (0..n).collect();
                order.shuffle(&mut rng);
                order.push(target);
                let mut edges = Vec::new();
                for i in 0..order.len() {
                    for j in (i + 1)..order.len() {
                        if rng.gen::<f64>() < sparsity {
                            edges.push((order[i], order[j]));
                        }
                    }
                }
                let graph = build_graph(n + 1, &edges, target)?;
                if graph.parents(target).is_empty() {
                    continue;
                }
                let roots: std::collections::BTreeSet<usize> = (0..n)
                    .filter(|&v| graph.parents(v).is_empty())
                    .collect();
                if graph.descendants(&roots).contains(&target) {
                    return Ok(graph);
                }
            }
            Err(Error::GenerationFailed { attempts: ATTEMPTS })
        }
    }
}

/// Draw mechanism weights for every node: `|w|` uniform in the strength band
/// with random sign, standard-normal noise, threshold left unset.
pub fn sample_mechanisms(
    graph: &CausalGraph,
    strength: Strength,
    nonlinearity: Nonlinearity,
    seed: u64,
) -> Scm {
    let mut rng = rng::derive(seed, &[stream::MECHANISMS]);
    let (lo, hi) = strength.range();
    let magnitude = Uniform::new_inclusive(lo, hi);
    let mechanisms = (0..graph.node_count())
        .map(|node| {
            let weights = graph
                .parents(node)
                .iter()
                .map(|_| {
                    let m = magnitude.sample(&mut rng);
                    if rng.gen::<bool>() {
                        m
                    } else {
                        -m
                    }
                })
                .collect();
            Mechanism { node, weights, nonlinearity }
        })
        .collect();
    Scm::new(graph.clone(), mechanisms, NoiseSpec::standard(graph.node_count()))
}

/// Empirical `q`-quantile of the target over `n` normal-regime samples,
/// stored into the SCM as its anomaly threshold.
pub fn compute_threshold(scm: &mut Scm, q: f64, n: usize, seed: u64) -> f64 {
    assert!(q > 0.0 && q < 1.0, "quantile must lie in (0, 1)");
    assert!(n > 0);
    let target = scm.graph.target();
    let mut ys: Vec<f64> = (0..n)
        .map(|i| {
            let mut rng = rng::derive(seed, &[stream::THRESHOLD, i as u64]);
            let z = scm.draw_noise(&mut rng, None);
            scm.ancestral(&z)[target]
        })
        .collect();
    ys.sort_by(|a, b| a.total_cmp(b));
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    let t = ys[rank - 1];
    scm.set_threshold(t);
    t
}

/// Choose `count` distinct non-target variables and attach the SCM's
/// anomalous noise regime to each, forming the dataset's pattern list.
pub fn generate_patterns(scm: &Scm, count: usize, seed: u64) -> Result<Vec<AnomalyPattern>> {
    let mut vars = scm.graph.variables();
    if count > vars.len() {
        return Err(Error::GenerationFailed { attempts: 0 });
    }
    let mut rng = rng::derive(seed, &[stream::PATTERNS]);
    vars.shuffle(&mut rng);
    Ok(vars[..count]
        .iter()
        .enumerate()
        .map(|(id, &variable)| AnomalyPattern {
            id,
            variable,
            mean: scm.noise.anom_mean[variable],
            std: scm.noise.anom_std[variable],
        })
        .collect())
}

/// Ancestral sampling of a labeled dataset: `n_normal` normal-regime rows
/// followed by `n_per_pattern` rows per anomaly pattern, in pattern order.
///
/// Each row derives its own noise stream from `seed`, so disjoint row blocks
/// could be sampled concurrently without changing the result.
pub fn simulate_dataset(
    scm: &Scm,
    patterns: &[AnomalyPattern],
    n_per_pattern: usize,
    n_normal: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let t = scm.threshold.ok_or(Error::ThresholdUnset)?;
    for p in patterns {
        if p.variable == scm.graph.target() {
            return Err(Error::PatternOnTarget { pattern: p.id });
        }
    }

    let total = n_normal + patterns.len() * n_per_pattern;
    let mut data = LabeledDataset {
        x: Vec::with_capacity(total),
        y: Vec::with_capacity(total),
        z_true: Vec::with_capacity(total),
        pattern_id: Vec::with_capacity(total),
        root_cause: Vec::with_capacity(total),
        y_abnormal: Vec::with_capacity(total),
    };

    let variables = scm.graph.variables();
    let push_row = |row: usize, pattern: Option<&AnomalyPattern>, data: &mut LabeledDataset| {
        let mut rng = rng::derive(seed, &[stream::DATASET, row as u64]);
        let z = scm.draw_noise(&mut rng, pattern);
        let values = scm.ancestral(&z);
        data.x.push(variables.iter().map(|&v| values[v]).collect());
        let y = values[scm.graph.target()];
        data.y.push(y);
        data.z_true.push(z);
        data.pattern_id.push(pattern.map_or(-1, |p| p.id as i64));
        data.root_cause.push(pattern.map_or(-1, |p| p.variable as i64));
        data.y_abnormal.push(y > t);
    };

    let mut row = 0;
    for _ in 0..n_normal {
        push_row(row, None, &mut data);
        row += 1;
    }
    for p in patterns {
        for _ in 0..n_per_pattern {
            push_row(row, Some(p), &mut data);
            row += 1;
        }
    }
    Ok(data)
}

/// Exact counterfactual: replay the stored noises with the intervened nodes
/// clamped (parents severed) and every other node recomputed in causal order.
///
/// Returns the full node-value vector; the target's entry is `y*`.
pub fn oracle_counterfactual(
    scm: &Scm,
    z_true: &[f64],
    interventions: &BTreeMap<usize, f64>,
) -> Result<Vec<f64>> {
    if z_true.len() != scm.graph.node_count() {
        return Err(Error::LengthMismatch {
            expected: scm.graph.node_count(),
            got: z_true.len(),
        });
    }
    if interventions.contains_key(&scm.graph.target()) {
        return Err(Error::InterventionOnTarget);
    }
    Ok(scm.propagate(z_true, interventions))
}
