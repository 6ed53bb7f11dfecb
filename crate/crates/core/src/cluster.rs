//! Gaussian-mixture clustering of abnormal samples.
//!
//! The cluster assignments become the auxiliary pattern labels that
//! supervise noise recovery in the surrogate. Clustering runs on the
//! concatenated `[x, y]` vectors of the abnormal rows only; normal rows
//! receive the reserved label `K` downstream so the encoders can tell the
//! regimes apart.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::scm::LabeledDataset;

/// Variance floor preventing singular components.
pub const VARIANCE_FLOOR: f64 = 1e-6;

const RESTARTS: usize = 5;
const MAX_RESEEDS: usize = 3;

/// Diagonal-covariance Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    #[serde(rename = "K")]
    pub k: usize,
    pub means: Vec<Vec<f64>>,
    pub variances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Hard labels plus the full responsibility matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternLabels {
    pub hard: Vec<usize>,
    pub responsibilities: Vec<Vec<f64>>,
}

/// Log-likelihood trace of a single EM run.
#[derive(Debug, Clone)]
pub struct FitTrace {
    pub log_likelihood: Vec<f64>,
    pub reseeds: usize,
    pub selected: bool,
}

/// Fit a diagonal GMM by EM with k-means++ seeding, keeping the best of
/// five restarts by final log-likelihood.
pub fn fit_gmm(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<GmmModel> {
    fit_gmm_detailed(data, k, seed, tol, max_iter).map(|(m, _)| m)
}

/// As [`fit_gmm`], returning the per-restart log-likelihood traces.
pub fn fit_gmm_detailed(
    data: &[Vec<f64>],
    k: usize,
    seed: u64,
    tol: f64,
    max_iter: usize,
) -> Result<(GmmModel, Vec<FitTrace>)> {
    let n = data.len();
    assert!(k >= 1);
    if n < k {
        return Err(Error::TooFewSamples { k, n });
    }
    let mut best: Option<(GmmModel, f64, usize)> = None;
    let mut traces = Vec::with_capacity(RESTARTS);
    for restart in 0..RESTARTS {
        let mut rng = rng::derive(seed, &[stream::GMM, restart as u64]);
        let (model, trace, reseeds) = em_run(data, k, &mut rng, tol, max_iter)?;
        let ll = *trace.last().expect("at least one iteration");
        let replace = best.as_ref().map_or(true, |(_, best_ll, _)| ll > *best_ll);
        if replace {
            best = Some((model, ll, restart));
        }
        traces.push(FitTrace { log_likelihood: trace, reseeds, selected: false });
    }
    let (model, _, winner) = best.expect("restarts > 0");
    traces[winner].selected = true;
    Ok((model, traces))
}

fn em_run(
    data: &[Vec<f64>],
    k: usize,
    rng: &mut rng::Rng,
    tol: f64,
    max_iter: usize,
) -> Result<(GmmModel, Vec<f64>, usize)> {
    let n = data.len();
    let m = data[0].len();
    let global_var = column_variances(data);

    let mut model = GmmModel {
        k,
        means: kmeans_pp_seeds(data, k, rng),
        variances: vec![global_var.clone(); k],
        weights: vec![1.0 / k as f64; k],
    };

    let mut trace: Vec<f64> = Vec::new();
    let mut reseeds = 0;
    let mut resp = vec![vec![0.0; k]; n];
    for _ in 0..max_iter {
        // E-step and the log-likelihood at the current parameters.
        let mut ll = 0.0;
        for (i, row) in data.iter().enumerate() {
            let logp: Vec<f64> = (0..k)
                .map(|c| model.weights[c].ln() + log_density_diag(row, &model.means[c], &model.variances[c]))
                .collect();
            let lse = log_sum_exp(&logp);
            ll += lse;
            for c in 0..k {
                resp[i][c] = (logp[c] - lse).exp();
            }
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(
                ll >= prev - 1e-9 * (1.0 + prev.abs()),
                "EM log-likelihood decreased: {prev} -> {ll}"
            );
            trace.push(ll);
            if ll - prev < tol {
                break;
            }
        } else {
            trace.push(ll);
        }

        // Degenerate components are re-seeded at a random data point.
        let mut degenerate = None;
        for c in 0..k {
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            if mass < 1.0 {
                degenerate = Some(c);
                break;
            }
        }
        if let Some(c) = degenerate {
            reseeds += 1;
            if reseeds > MAX_RESEEDS {
                return Err(Error::DegenerateComponent { component: c, attempts: MAX_RESEEDS });
            }
            let pick = rng.gen_range(0..n);
            model.means[c] = data[pick].clone();
            model.variances[c] = global_var.clone();
            model.weights[c] = 1.0 / n as f64;
            let total: f64 = model.weights.iter().sum();
            model.weights.iter_mut().for_each(|w| *w /= total);
            trace.clear(); // monotonicity restarts after a re-seed
            continue;
        }

        // M-step.
        for c in 0..k {
            let mass: f64 = resp.iter().map(|r| r[c]).sum();
            model.weights[c] = mass / n as f64;
            for j in 0..m {
                let mean: f64 = data
                    .iter()
                    .enumerate()
                    .map(|(i, row)| resp[i][c] * row[j])
                    .sum::<f64>()
                    / mass;
                let var: f64 = data
                    .iter()
                    .enumerate()
                    .map(|(i, row)| resp[i][c] * (row[j] - mean).powi(2))
                    .sum::<f64>()
                    / mass;
                model.means[c][j] = mean;
                model.variances[c][j] = var.max(VARIANCE_FLOOR);
            }
        }
    }
    Ok((model, trace, reseeds))
}

fn kmeans_pp_seeds(data: &[Vec<f64>], k: usize, rng: &mut rng::Rng) -> Vec<Vec<f64>> {
    let n = data.len();
    let mut means = vec![data[rng.gen_range(0..n)].clone()];
    let mut d2: Vec<f64> = data.iter().map(|row| sq_dist(row, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.gen_range(0..n)
        } else {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        };
        means.push(data[pick].clone());
        for (i, row) in data.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(row, means.last().unwrap()));
        }
    }
    means
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn column_variances(data: &[Vec<f64>]) -> Vec<f64> {
    let n = data.len() as f64;
    let m = data[0].len();
    (0..m)
        .map(|j| {
            let mean: f64 = data.iter().map(|r| r[j]).sum::<f64>() / n;
            let var: f64 = data.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
            var.max(VARIANCE_FLOOR)
        })
        .collect()
}

fn log_density_diag(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    const LN_2PI: f64 = 1.8378770664093453;
    x.iter()
        .zip(mean.iter().zip(var))
        .map(|(&xi, (&mu, &v))| -0.5 * (LN_2PI + v.ln() + (xi - mu).powi(2) / v))
        .sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    /// Total log-likelihood of `data` under the mixture.
    pub fn log_likelihood(&self, data: &[Vec<f64>]) -> f64 {
        data.iter()
            .map(|row| {
                let logp: Vec<f64> = (0..self.k)
                    .map(|c| {
                        self.weights[c].ln()
                            + log_density_diag(row, &self.means[c], &self.variances[c])
                    })
                    .collect();
                log_sum_exp(&logp)
            })
            .sum()
    }
}

/// Bayes-rule responsibilities and argmax hard labels (ties to the lowest
/// component index).
pub fn assign_labels(gmm: &GmmModel, data: &[Vec<f64>]) -> PatternLabels {
    let mut hard = Vec::with_capacity(data.len());
    let mut responsibilities = Vec::with_capacity(data.len());
    for row in data {
        assert_eq!(row.len(), gmm.dim(), "column count mismatch");
        let logp: Vec<f64> = (0..gmm.k)
            .map(|c| gmm.weights[c].ln() + log_density_diag(row, &gmm.means[c], &gmm.variances[c]))
            .collect();
        let lse = log_sum_exp(&logp);
        let resp: Vec<f64> = logp.iter().map(|&lp| (lp - lse).exp()).collect();
        let mut best = 0;
        for c in 1..gmm.k {
            if resp[c] > resp[best] {
                best = c;
            }
        }
        hard.push(best);
        responsibilities.push(resp);
    }
    PatternLabels { hard, responsibilities }
}

/// Pick the component count in `[k_min, k_max]` minimizing
/// `BIC = -2 logL + p ln n` with `p = K(2m+1) - 1` free parameters.
pub fn select_k(data: &[Vec<f64>], k_min: usize, k_max: usize, seed: u64) -> Result<usize> {
    assert!(k_min >= 1 && k_min <= k_max);
    let n = data.len() as f64;
    let m = data[0].len() as f64;
    let mut best = (k_min, f64::INFINITY);
    for k in k_min..=k_max {
        if data.len() < k {
            break;
        }
        let model = fit_gmm(data, k, seed, 1e-6, 200)?;
        let ll = model.log_likelihood(data);
        let p = k as f64 * (2.0 * m + 1.0) - 1.0;
        let bic = -2.0 * ll + p * n.ln();
        if bic < best.1 {
            best = (k, bic);
        }
    }
    Ok(best.0)
}

/// The `[x, y]` rows the clustering runs on: abnormal samples only.
pub fn abnormal_xy(data: &LabeledDataset) -> Vec<Vec<f64>> {
    data.abnormal_rows().iter().map(|&i| data.row_xy(i)).collect()
}

/// Label every dataset row for the surrogate: abnormal rows get their GMM
/// component, normal rows the reserved index `K`.
pub fn dataset_labels(data: &LabeledDataset, gmm: &GmmModel) -> Vec<usize> {
    let abnormal = data.abnormal_rows();
    let assigned = assign_labels(gmm, &abnormal.iter().map(|&i| data.row_xy(i)).collect::<Vec<_>>());
    let mut labels = vec![gmm.k; data.len()];
    for (pos, &i) in abnormal.iter().enumerate() {
        labels[i] = assigned.hard[pos];
    }
    labels
}

/// Clustering accuracy after the best one-to-one cluster/class matching
/// (exhaustive over permutations; class counts here are tiny).
pub fn aligned_accuracy(predicted: &[usize], truth: &[usize], k: usize) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    assert!(!predicted.is_empty());
    let mut counts = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        counts[p][t] += 1;
    }
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = 0usize;
    permute(&mut perm, 0, &mut |p| {
        let hit: usize = (0..k).map(|c| counts[c][p[c]]).sum();
        if hit > best {
            best = hit;
        }
    });
    best as f64 / predicted.len() as f64
}

fn permute(v: &mut Vec<usize>, start: usize, f: &mut impl FnMut(&[usize])) {
    if start == v.len() {
        f(v);
        return;
    }
    for i in start..v.len() {
        v.swap(start, i);
        permute(v, start + 1, f);
        v.swap(start, i);
    }
}
