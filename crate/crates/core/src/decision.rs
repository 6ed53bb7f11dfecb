//! Counterfactual decision engine: abduction-intervention-prediction,
//! Probability-of-Necessity estimation, and the constrained minimum-cost
//! intervention solver.
//!
//! The engine works against any [`CounterfactualModel`]: the trained
//! surrogate in production, an exactly-solvable linear model in tests. All
//! Monte-Carlo evaluations inside one solve share a single matrix of common
//! random numbers, which makes the objective landscape deterministic and
//! lets restarts be compared on equal footing.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CausalGraph, SCREEN_TOL};
use crate::rng::{self, stream};

/// Intervention map: variable node index to clamped value.
pub type InterventionMap = BTreeMap<usize, f64>;

/// A model the decision engine can run counterfactuals through.
///
/// `x_full` is the full node-indexed observation (the target's observed
/// value included); `z` is a full node-indexed noise vector in the model's
/// own latent space. Implementations may assume shapes were validated by the
/// caller.
pub trait CounterfactualModel {
    fn graph(&self) -> &CausalGraph;

    /// Per-node posterior `(mean, std)` of the latent noise given the
    /// factual observation.
    fn posterior(&self, x_full: &[f64], u: &[f64]) -> Vec<(f64, f64)>;

    /// Replay the model with `z` fixed, the intervened nodes clamped, and
    /// exactly the descendants of the intervened set recomputed; every other
    /// node keeps its observed value.
    fn counterfactual_from_noise(
        &self,
        x_full: &[f64],
        u: &[f64],
        interventions: &InterventionMap,
        z: &[f64],
    ) -> Vec<f64>;
}

/// Intervention cost `C(x*, x) = sum_i c_i |x*_i - x_i|^p + penalty * #changed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    /// Per-variable unit costs in variable-position order; `None` means 1.
    pub unit_costs: Option<Vec<f64>>,
    /// Distance exponent, 1 or 2.
    pub exponent: u32,
    /// Flat penalty per changed coordinate.
    pub sparsity_penalty: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { unit_costs: None, exponent: 2, sparsity_penalty: 0.0 }
    }
}

impl CostModel {
    fn unit(&self, i: usize) -> f64 {
        self.unit_costs.as_ref().map_or(1.0, |c| c[i])
    }
}

/// `C(x*, x)`; both vectors live in variable-position space.
pub fn cost(cm: &CostModel, x_star: &[f64], x: &[f64]) -> Result<f64> {
    if x_star.len() != x.len() {
        return Err(Error::LengthMismatch { expected: x.len(), got: x_star.len() });
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        let d = (x_star[i] - x[i]).abs();
        total += cm.unit(i) * d.powi(cm.exponent as i32);
        if d > SCREEN_TOL {
            total += cm.sparsity_penalty;
        }
    }
    Ok(total)
}

fn cost_gradient(cm: &CostModel, x_star: &[f64], x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let d = x_star[i] - x[i];
            match cm.exponent {
                1 => cm.unit(i) * d.signum(),
                _ => 2.0 * cm.unit(i) * d,
            }
        })
        .collect()
}

/// Solver and PN-estimation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionOpts {
    /// PN feasibility threshold (iota).
    pub pn_threshold: f64,
    /// Anomaly threshold t on the target.
    pub threshold: f64,
    /// Monte-Carlo draws per PN estimate.
    pub mc_samples: usize,
    /// Logistic temperature for the smooth PN used by gradients.
    pub temperature: f64,
    /// Multi-start budget (factual start plus per-variable warm starts).
    pub restarts: usize,
    /// Total inner-iteration budget per restart.
    pub max_iters: usize,
    pub step_tol: f64,
    pub constraint_tol: f64,
    /// Tolerance declaring a coordinate "changed" (also S1 screening).
    pub screen_tol: f64,
    /// Warm-start targets per variable (normal-regime marginal means).
    pub warm_start_means: Option<Vec<f64>>,
    pub seed: u64,
}

impl DecisionOpts {
    /// Defaults given the anomaly threshold and the target's marginal spread
    /// (the smoothing temperature is `0.05 * std_y`).
    pub fn new(threshold: f64, y_std: f64, seed: u64) -> Self {
        DecisionOpts {
            pn_threshold: 0.9,
            threshold,
            mc_samples: 64,
            temperature: (0.05 * y_std).max(1e-9),
            restarts: 8,
            max_iters: 200,
            step_tol: 1e-6,
            constraint_tol: 1e-4,
            screen_tol: SCREEN_TOL,
            warm_start_means: None,
            seed,
        }
    }
}

/// Optimized intervention with its certification data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionPlan {
    pub x_star: Vec<f64>,
    pub delta: Vec<f64>,
    /// Surviving variable node indices after screening.
    pub effective: BTreeSet<usize>,
    pub cost: f64,
    /// Re-verified hard PN (fresh draws, not the solver's).
    pub pn: f64,
    pub pn_stderr: f64,
    pub feasible: bool,
    pub ranking: Vec<usize>,
    pub iterations: usize,
    pub restart: usize,
    pub target: usize,
}

/// PN estimate: hard Monte-Carlo fraction plus its smooth relaxation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnEstimate {
    pub pn: f64,
    pub smooth_pn: f64,
    pub stderr: f64,
}

fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Deterministic counterfactual: abduct posterior-mean noises from the
/// factual sample, clamp the intervened nodes, recompute their descendants.
pub fn counterfactual<M: CounterfactualModel>(
    model: &M,
    x_full: &[f64],
    u: &[f64],
    interventions: &InterventionMap,
) -> Result<Vec<f64>> {
    let g = model.graph();
    if x_full.len() != g.node_count() {
        return Err(Error::shape(format!(
            "observation {} != node count {}",
            x_full.len(),
            g.node_count()
        )));
    }
    for &node in interventions.keys() {
        if node == g.target() {
            return Err(Error::InterventionOnTarget);
        }
        if node >= g.node_count() {
            return Err(Error::shape(format!("intervention on node {node}")));
        }
    }
    let z: Vec<f64> = model.posterior(x_full, u).iter().map(|&(m, _)| m).collect();
    Ok(model.counterfactual_from_noise(x_full, u, interventions, &z))
}

/// Shared state for all PN evaluations within one solve: the factual
/// posterior and a fixed matrix of standard-normal draws.
struct PnEvaluator<'a, M: CounterfactualModel> {
    model: &'a M,
    x_full: &'a [f64],
    u: &'a [f64],
    posterior: Vec<(f64, f64)>,
    eps: Vec<Vec<f64>>,
    threshold: f64,
    temperature: f64,
    screen_tol: f64,
    evals: std::cell::Cell<usize>,
}

impl<'a, M: CounterfactualModel> PnEvaluator<'a, M> {
    fn new(model: &'a M, x_full: &'a [f64], u: &'a [f64], opts: &DecisionOpts, seed_tags: &[u64]) -> Self {
        use rand::Rng as _;
        let posterior = model.posterior(x_full, u);
        let nodes = model.graph().node_count();
        let mut rng = rng::derive(opts.seed, seed_tags);
        let eps = (0..opts.mc_samples)
            .map(|_| {
                (0..nodes)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        PnEvaluator {
            model,
            x_full,
            u,
            posterior,
            eps,
            threshold: opts.threshold,
            temperature: opts.temperature,
            screen_tol: opts.screen_tol,
            evals: std::cell::Cell::new(0),
        }
    }

    /// Interventions implied by a candidate: every coordinate moved off its
    /// factual value.
    fn implied_map(&self, x_star: &[f64]) -> InterventionMap {
        let g = self.model.graph();
        let mut map = InterventionMap::new();
        for (p, &v) in x_star.iter().enumerate() {
            let node = g.var_node(p);
            if (v - self.x_full[node]).abs() > self.screen_tol {
                map.insert(node, v);
            }
        }
        map
    }

    fn eval_map(&self, map: &InterventionMap) -> PnEstimate {
        self.evals.set(self.evals.get() + 1);
        let target = self.model.graph().target();
        let s = self.eps.len();
        let mut hits = 0usize;
        let mut smooth = 0.0;
        let mut z = vec![0.0; self.posterior.len()];
        for eps_row in &self.eps {
            for (j, &(mean, std)) in self.posterior.iter().enumerate() {
                z[j] = mean + std * eps_row[j];
            }
            let y_star = self
                .model
                .counterfactual_from_noise(self.x_full, self.u, map, &z)[target];
            if y_star <= self.threshold {
                hits += 1;
            }
            smooth += logistic((self.threshold - y_star) / self.temperature);
        }
        let pn = hits as f64 / s as f64;
        PnEstimate {
            pn,
            smooth_pn: smooth / s as f64,
            stderr: (pn * (1.0 - pn) / s as f64).sqrt(),
        }
    }

    fn eval(&self, x_star: &[f64]) -> PnEstimate {
        self.eval_map(&self.implied_map(x_star))
    }
}

/// Hard and smooth PN of a candidate intervention vector (length d, in
/// variable-position space). Coordinates equal to the factual value are not
/// intervened on.
pub fn estimate_pn<M: CounterfactualModel>(
    model: &M,
    x_full: &[f64],
    u: &[f64],
    x_star: &[f64],
    opts: &DecisionOpts,
) -> Result<PnEstimate> {
    let g = model.graph();
    let y = x_full[g.target()];
    if y <= opts.threshold {
        return Err(Error::FactualNotAbnormal { y, threshold: opts.threshold });
    }
    if x_star.len() != g.var_count() {
        return Err(Error::LengthMismatch { expected: g.var_count(), got: x_star.len() });
    }
    let evaluator = PnEvaluator::new(model, x_full, u, opts, &[stream::PN]);
    Ok(evaluator.eval(x_star))
}

/// Effective-set variables first by descending `c_i |delta_i|`, then the
/// rest by the same key; ties break on ascending node index.
pub fn rank_variables(plan: &InterventionPlan, cm: &CostModel) -> Vec<usize> {
    let d = plan.delta.len();
    let node_of = |p: usize| if p < plan.target { p } else { p + 1 };
    let mut keyed: Vec<(bool, f64, usize)> = (0..d)
        .map(|p| {
            let node = node_of(p);
            let score = cm.unit(p) * plan.delta[p].abs();
            (plan.effective.contains(&node), score, node)
        })
        .collect();
    keyed.sort_by(|a, b| {
        b.0.cmp(&a.0)
            .then(b.1.total_cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });
    keyed.into_iter().map(|(_, _, node)| node).collect()
}

/// Minimum-cost intervention under the PN constraint.
///
/// Multi-start augmented-Lagrangian descent on the smooth PN surrogate
/// (finite-difference constraint gradients), followed by a scale-back
/// refinement onto the hard-PN boundary, post-hoc screening with the
/// screened-out coordinates reset to factual values, and an independent PN
/// re-verification with fresh draws. Returns the cheapest feasible plan
/// across restarts, or the best-PN plan flagged infeasible.
pub fn solve_min_cost<M: CounterfactualModel>(
    model: &M,
    x_full: &[f64],
    u: &[f64],
    cm: &CostModel,
    opts: &DecisionOpts,
) -> Result<InterventionPlan> {
    let g = model.graph();
    let y = x_full[g.target()];
    if y <= opts.threshold {
        return Err(Error::FactualNotAbnormal { y, threshold: opts.threshold });
    }
    let d = g.var_count();
    let x_vars: Vec<f64> = g.variables().iter().map(|&n| x_full[n]).collect();

    // Common random numbers shared by every restart of this solve.
    let evaluator = PnEvaluator::new(model, x_full, u, opts, &[stream::PN]);

    let mut starts: Vec<Vec<f64>> = vec![x_vars.clone()];
    let warm_means = opts
        .warm_start_means
        .clone()
        .unwrap_or_else(|| vec![0.0; d]);
    for p in 0..d {
        let mut s = x_vars.clone();
        s[p] = warm_means[p];
        starts.push(s);
    }
    starts.truncate(opts.restarts.max(1));

    let mut best: Option<InterventionPlan> = None;
    for (restart, start) in starts.iter().enumerate() {
        let mut candidates: Vec<(Vec<f64>, usize)> = Vec::new();
        // the raw warm start is itself a candidate
        candidates.push((start.clone(), 0));
        let (optimized, iters) = augmented_lagrangian(&evaluator, cm, &x_vars, start, opts);
        let polished = scale_back(&evaluator, &x_vars, &optimized, opts);
        candidates.push((polished, iters));

        for (cand, iters) in candidates {
            let plan = certify(model, &evaluator, x_full, u, &x_vars, &cand, cm, opts, restart, iters)?;
            let better = match &best {
                None => true,
                Some(b) => match (plan.feasible, b.feasible) {
                    (true, true) => plan.cost < b.cost,
                    (true, false) => true,
                    (false, true) => false,
                    (false, false) => plan.pn > b.pn,
                },
            };
            if better {
                best = Some(plan);
            }
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Screen, reset, re-verify with fresh draws, and package a candidate.
#[allow(clippy::too_many_arguments)]
fn certify<M: CounterfactualModel>(
    model: &M,
    solver_eval: &PnEvaluator<M>,
    x_full: &[f64],
    u: &[f64],
    x_vars: &[f64],
    candidate: &[f64],
    cm: &CostModel,
    opts: &DecisionOpts,
    restart: usize,
    iterations: usize,
) -> Result<InterventionPlan> {
    let g = model.graph();
    let effective = g.screen_effective_with_tol(x_vars, candidate, opts.screen_tol)?;
    let mut x_star = x_vars.to_vec();
    for &node in &effective {
        let p = g.var_pos(node).expect("effective sets exclude the target");
        x_star[p] = candidate[p];
    }
    let plan_cost = cost(cm, &x_star, x_vars)?;

    // Fresh draws, independent of the solver's common random numbers.
    let fresh = PnEvaluator::new(model, x_full, u, opts, &[stream::VERIFY, restart as u64]);
    let verified = fresh.eval(&x_star);
    let _ = solver_eval; // solver CRN retained only for optimization

    let delta: Vec<f64> = x_star.iter().zip(x_vars).map(|(s, x)| s - x).collect();
    let mut plan = InterventionPlan {
        x_star,
        delta,
        effective,
        cost: plan_cost,
        pn: verified.pn,
        pn_stderr: verified.stderr,
        feasible: verified.pn >= opts.pn_threshold,
        ranking: Vec::new(),
        iterations,
        restart,
        target: g.target(),
    };
    plan.ranking = rank_variables(&plan, cm);
    Ok(plan)
}

/// Augmented Lagrangian for `min cost(x) s.t. iota - smooth_pn(x) <= 0`,
/// BFGS with Armijo backtracking inside, finite-difference gradients of the
/// smooth PN. Returns the iterate and the inner iterations consumed.
fn augmented_lagrangian<M: CounterfactualModel>(
    evaluator: &PnEvaluator<M>,
    cm: &CostModel,
    x_vars: &[f64],
    start: &[f64],
    opts: &DecisionOpts,
) -> (Vec<f64>, usize) {
    let d = x_vars.len();
    let iota = opts.pn_threshold;
    let g_of = |x: &[f64]| iota - evaluator.eval(x).smooth_pn;
    let mut lambda = 0.0f64;
    let mut mu = 10.0f64;
    let mut x = start.to_vec();
    let mut total_iters = 0usize;
    let mut prev_violation = f64::INFINITY;

    for _outer in 0..12 {
        if total_iters >= opts.max_iters {
            break;
        }
        let value = |x: &[f64]| -> f64 {
            let c = cost(cm, x, x_vars).expect("lengths fixed");
            let gv = g_of(x);
            let t = (lambda + mu * gv).max(0.0);
            c + (t * t - lambda * lambda) / (2.0 * mu)
        };
        let grad = |x: &[f64]| -> Vec<f64> {
            let gv = g_of(x);
            let rho = (lambda + mu * gv).max(0.0);
            let mut grad = cost_gradient(cm, x, x_vars);
            if rho > 0.0 {
                let h = 1e-4;
                let mut probe = x.to_vec();
                for i in 0..d {
                    let saved = probe[i];
                    probe[i] = saved + h;
                    let up = g_of(&probe);
                    probe[i] = saved - h;
                    let down = g_of(&probe);
                    probe[i] = saved;
                    grad[i] += rho * (up - down) / (2.0 * h);
                }
            }
            grad
        };

        let budget = (opts.max_iters - total_iters).min(40);
        let (next, used, step_norm) = bfgs(&value, &grad, &x, budget, opts.step_tol);
        total_iters += used;
        x = next;

        let violation = g_of(&x).max(0.0);
        lambda = (lambda + mu * g_of(&x)).max(0.0);
        if violation < opts.constraint_tol && step_norm < opts.step_tol {
            break;
        }
        if violation > 0.25 * prev_violation {
            mu *= 5.0;
        }
        prev_violation = violation;
    }
    (x, total_iters)
}

/// Dense BFGS with Armijo backtracking. Returns (x, iterations, last step norm).
fn bfgs(
    value: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    max_iters: usize,
    step_tol: f64,
) -> (Vec<f64>, usize, f64) {
    let d = start.len();
    let mut x = start.to_vec();
    let mut f = value(&x);
    let mut g = grad(&x);
    // inverse Hessian approximation
    let mut h_inv = vec![vec![0.0; d]; d];
    for i in 0..d {
        h_inv[i][i] = 1.0;
    }
    let mut last_step = f64::INFINITY;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let mut dir = vec![0.0; d];
        for i in 0..d {
            for j in 0..d {
                dir[i] -= h_inv[i][j] * g[j];
            }
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            // not a descent direction; reset to steepest descent
            for i in 0..d {
                for j in 0..d {
                    h_inv[i][j] = if i == j { 1.0 } else { 0.0 };
                }
                dir[i] = -g[i];
            }
        }
        let slope: f64 = dir.iter().zip(&g).map(|(d, g)| d * g).sum();

        // Armijo backtracking
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..25 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let ft = value(&trial);
            if ft <= f + 1e-4 * alpha * slope {
                let gt = grad(&trial);
                let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                let yv: Vec<f64> = gt.iter().zip(&g).map(|(a, b)| a - b).collect();
                let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
                if sy > 1e-12 {
                    bfgs_update(&mut h_inv, &s, &yv, sy);
                }
                last_step = s.iter().map(|v| v * v).sum::<f64>().sqrt();
                x = trial;
                f = ft;
                g = gt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted || last_step < step_tol {
            break;
        }
    }
    (x, iters, last_step)
}

fn bfgs_update(h_inv: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let d = s.len();
    let rho = 1.0 / sy;
    // H <- (I - rho s y^T) H (I - rho y s^T) + rho s s^T
    let mut hy = vec![0.0; d];
    for i in 0..d {
        for j in 0..d {
            hy[i] += h_inv[i][j] * y[j];
        }
    }
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..d {
        for j in 0..d {
            h_inv[i][j] += rho * rho * yhy * s[i] * s[j] + rho * s[i] * s[j]
                - rho * (s[i] * hy[j] + hy[i] * s[j]);
        }
    }
}

/// Walk the solution back toward the factual point (or extend beyond it)
/// until it sits just on the hard-PN boundary: grid scan for the cheapest
/// feasible scale, then local bisection.
fn scale_back<M: CounterfactualModel>(
    evaluator: &PnEvaluator<M>,
    x_vars: &[f64],
    solution: &[f64],
    opts: &DecisionOpts,
) -> Vec<f64> {
    let iota = opts.pn_threshold;
    let delta: Vec<f64> = solution.iter().zip(x_vars).map(|(s, x)| s - x).collect();
    if delta.iter().all(|d| d.abs() <= opts.screen_tol) {
        return solution.to_vec();
    }
    let at = |gamma: f64| -> Vec<f64> {
        x_vars
            .iter()
            .zip(&delta)
            .map(|(x, d)| x + gamma * d)
            .collect()
    };
    let feasible = |gamma: f64| evaluator.eval(&at(gamma)).pn >= iota;

    // cheapest feasible point on a gamma grid in [0, 2]
    const GRID: usize = 32;
    let mut lo = None; // last infeasible below the first feasible
    let mut hi = None; // first feasible
    for step in 0..=2 * GRID {
        let gamma = step as f64 / GRID as f64;
        if feasible(gamma) {
            hi = Some(gamma);
            break;
        }
        lo = Some(gamma);
    }
    let Some(mut hi) = hi else {
        return solution.to_vec(); // nowhere feasible along this ray
    };
    let mut lo = lo.unwrap_or(0.0);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{normal_cdf, LinearGaussianModel};

    fn full(model: &LinearGaussianModel, z: &[f64]) -> Vec<f64> {
        model.scm().ancestral(z)
    }

    #[test]
    fn counterfactual_empty_map_is_identity() {
        let model = LinearGaussianModel::chain(&[0.8, 1.2]);
        let x = full(&model, &[1.0, -0.5, 0.3]);
        let out = counterfactual(&model, &x, &[], &InterventionMap::new()).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn counterfactual_non_ancestor_leaves_target() {
        // fork: X1 -> X2, X1 -> Y; X2 has no path to Y
        let graph = crate::graph::build_graph(3, &[(0, 1), (0, 2)], 2).unwrap();
        let mechanisms = vec![
            crate::scm::Mechanism { node: 0, weights: vec![], nonlinearity: crate::scm::Nonlinearity::Identity },
            crate::scm::Mechanism { node: 1, weights: vec![1.0], nonlinearity: crate::scm::Nonlinearity::Identity },
            crate::scm::Mechanism { node: 2, weights: vec![1.0], nonlinearity: crate::scm::Nonlinearity::Identity },
        ];
        let scm = crate::scm::Scm::new(graph, mechanisms, crate::scm::NoiseSpec::standard(3));
        let model = LinearGaussianModel::new(scm);
        let x = full(&model, &[1.0, 0.2, -0.1]);
        let out = counterfactual(&model, &x, &[], &InterventionMap::from([(1, 9.0)])).unwrap();
        assert_eq!(out[2], x[2]);
        assert_eq!(out[0], x[0]);
        assert_eq!(out[1], 9.0);
    }

    #[test]
    fn counterfactual_rejects_target() {
        let model = LinearGaussianModel::chain(&[1.0]);
        let x = full(&model, &[1.0, 0.0]);
        assert!(matches!(
            counterfactual(&model, &x, &[], &InterventionMap::from([(1, 0.0)])),
            Err(Error::InterventionOnTarget)
        ));
    }

    #[test]
    fn pn_deterministic_success_and_failure() {
        // Y = X1 with z_y = 0: do(X1=0) resolves, do(X1=1) is a no-op
        let model = LinearGaussianModel::chain(&[1.0]);
        let x = full(&model, &[1.0, 0.0]);
        let opts = DecisionOpts::new(0.5, 1.0, 0);
        let est = estimate_pn(&model, &x, &[], &[0.0], &opts).unwrap();
        assert_eq!(est.pn, 1.0);
        let est = estimate_pn(&model, &x, &[], &[1.0], &opts).unwrap();
        assert_eq!(est.pn, 0.0);
    }

    #[test]
    fn pn_requires_abnormal_factual() {
        let model = LinearGaussianModel::chain(&[1.0]);
        let x = full(&model, &[0.1, 0.0]);
        let opts = DecisionOpts::new(0.5, 1.0, 0);
        assert!(matches!(
            estimate_pn(&model, &x, &[], &[0.0], &opts),
            Err(Error::FactualNotAbnormal { .. })
        ));
    }

    #[test]
    fn pn_converges_to_normal_cdf() {
        // y* = a + z_y with posterior z_y ~ N(0, 1): pn -> Phi(t - a)
        let model = LinearGaussianModel::chain(&[1.0]).with_posterior_std(1, 1.0);
        let x = full(&model, &[1.0, 0.0]); // y = 1 > t = 0.5
        let mut opts = DecisionOpts::new(0.5, 1.0, 7);
        opts.mc_samples = 10_000;
        for a in [-0.5, 0.0, 0.4] {
            let est = estimate_pn(&model, &x, &[], &[a], &opts).unwrap();
            let expected = normal_cdf(0.5 - a);
            assert!(
                (est.pn - expected).abs() < 0.02,
                "a={a}: {} vs {expected}",
                est.pn
            );
        }
    }

    #[test]
    fn cost_examples() {
        let cm = CostModel::default();
        assert_eq!(cost(&cm, &[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(cost(&cm, &[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        let cm = CostModel {
            unit_costs: Some(vec![2.0, 1.0]),
            exponent: 1,
            sparsity_penalty: 0.5,
        };
        assert_eq!(cost(&cm, &[1.0, 2.0], &[0.0, 0.0]).unwrap(), 5.0);
    }

    #[test]
    fn cost_length_mismatch() {
        let cm = CostModel::default();
        assert!(matches!(
            cost(&cm, &[1.0], &[1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn solver_matches_grid_oracle_in_one_dimension() {
        // Y = X1 exactly, z_y = 0, t = 0.5, iota = 0.9, factual x1 = 2.
        // Feasible set: x1* <= 0.5; optimal cost (2 - 0.5)^2 = 2.25.
        let model = LinearGaussianModel::chain(&[1.0]);
        let x = full(&model, &[2.0, 0.0]);
        let opts = DecisionOpts::new(0.5, 1.0, 3);
        let cm = CostModel::default();
        let plan = solve_min_cost(&model, &x, &[], &cm, &opts).unwrap();
        assert!(plan.feasible);

        // 1e-3-resolution grid oracle
        let mut oracle_best = f64::INFINITY;
        let mut a = -3.0;
        while a <= 2.0 {
            let est = estimate_pn(&model, &x, &[], &[a], &opts).unwrap();
            if est.pn >= 0.9 {
                oracle_best = oracle_best.min(cost(&cm, &[a], &[2.0]).unwrap());
            }
            a += 1e-3;
        }
        assert!(
            plan.cost <= oracle_best * 1.05,
            "solver {} vs grid {}",
            plan.cost,
            oracle_best
        );
        assert!((plan.x_star[0] - 0.5).abs() < 0.01, "x* = {}", plan.x_star[0]);
    }

    #[test]
    fn screened_out_variables_never_rank_effective() {
        // fork again: X2 can never be effective
        let graph = crate::graph::build_graph(3, &[(0, 1), (0, 2)], 2).unwrap();
        let mechanisms = vec![
            crate::scm::Mechanism { node: 0, weights: vec![], nonlinearity: crate::scm::Nonlinearity::Identity },
            crate::scm::Mechanism { node: 1, weights: vec![1.0], nonlinearity: crate::scm::Nonlinearity::Identity },
            crate::scm::Mechanism { node: 2, weights: vec![2.0], nonlinearity: crate::scm::Nonlinearity::Identity },
        ];
        let scm = crate::scm::Scm::new(graph, mechanisms, crate::scm::NoiseSpec::standard(3));
        let model = LinearGaussianModel::new(scm);
        let x = full(&model, &[1.0, 0.0, 0.0]); // y = 2 > t
        let opts = DecisionOpts::new(0.5, 1.0, 1);
        let plan = solve_min_cost(&model, &x, &[], &CostModel::default(), &opts).unwrap();
        assert!(!plan.effective.contains(&1), "effective: {:?}", plan.effective);
    }

    #[test]
    fn monotone_chain_pn_is_non_increasing() {
        // all-positive chain: raising the intervened root raises y*,
        // so pn can only fall
        let model = LinearGaussianModel::chain(&[0.9, 0.8]).with_posterior_std(2, 0.5);
        let x = full(&model, &[2.0, 0.5, 0.5]);
        let opts = DecisionOpts::new(1.0, 1.0, 5);
        let mut prev = f64::INFINITY;
        for i in 0..20 {
            let a = -3.0 + 0.3 * i as f64;
            let est = estimate_pn(&model, &x, &[], &[a, x[1]], &opts).unwrap();
            assert!(est.pn <= prev + 1e-12, "pn rose at a={a}");
            prev = est.pn;
        }
    }

    #[test]
    fn ranking_rules() {
        let cm = CostModel::default();
        let plan = InterventionPlan {
            x_star: vec![0.1, 2.0, 0.0],
            delta: vec![0.1, 2.0, 0.0],
            effective: BTreeSet::from([0, 1]),
            cost: 0.0,
            pn: 1.0,
            pn_stderr: 0.0,
            feasible: true,
            ranking: vec![],
            iterations: 0,
            restart: 0,
            target: 3,
        };
        assert_eq!(rank_variables(&plan, &cm), vec![1, 0, 2]);

        let single = InterventionPlan {
            delta: vec![0.0, 1.5, 0.0],
            effective: BTreeSet::from([1]),
            ..plan.clone()
        };
        assert_eq!(rank_variables(&single, &cm)[0], 1);

        let tied = InterventionPlan {
            delta: vec![1.0, 1.0, 1.0],
            effective: BTreeSet::from([0, 1, 2]),
            ..plan
        };
        assert_eq!(rank_variables(&tied, &cm), vec![0, 1, 2]);
    }
}
