//! Evaluation harness: metrics (F1, normalized cost, nDCG@k, relative MSE),
//! the z-score NaiveRCA baseline, and the synthetic-study orchestration
//! (dataset cells, surrogate variants, per-seed metric collection).

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cluster::{self, GmmModel};
use crate::decision::{self, CostModel, DecisionOpts, InterventionMap};
use crate::error::{Error, Result};
use crate::scm::{self, AnomalyPattern, LabeledDataset, Nonlinearity, Scm, Strength, Structure};
use crate::surrogate::{self, full_rows, FlatSurrogate, SurrogateModel, TrainConfig};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum F1Mode {
    Binary,
    Macro,
}

/// F1 of predicted against true labels. `Binary` expects 0/1 labels with 1
/// the positive class; `Macro` is the unweighted mean of one-vs-rest F1 over
/// every class present in either vector.
pub fn f1_score(predicted: &[i64], truth: &[i64], mode: F1Mode) -> Result<f64> {
    if predicted.is_empty() || truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: predicted.len() });
    }
    let class_f1 = |class: i64| -> f64 {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fne = 0usize;
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p == class, t == class) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fne += 1,
                _ => {}
            }
        }
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fne as f64)
        }
    };
    match mode {
        F1Mode::Binary => Ok(class_f1(1)),
        F1Mode::Macro => {
            let classes: BTreeSet<i64> = predicted.iter().chain(truth).copied().collect();
            let sum: f64 = classes.iter().map(|&c| class_f1(c)).sum();
            Ok(sum / classes.len() as f64)
        }
    }
}

/// Plan cost over the canonical-reference cost.
pub fn normalized_cost(plan_cost: f64, reference_cost: f64) -> Result<f64> {
    if reference_cost <= 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(plan_cost / reference_cost)
}

/// Binary-gain nDCG at `k`: `DCG = sum rel(rank_i) / log2(i + 1)` over the
/// top k (ranks 1-based), normalized by the ideal DCG.
pub fn ndcg_at_k(ranking: &[usize], relevant: &BTreeSet<usize>, k: usize) -> Result<f64> {
    assert!(k >= 1);
    if relevant.is_empty() {
        return Err(Error::NoRelevantItems);
    }
    let dcg: f64 = ranking
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, item)| relevant.contains(item))
        .map(|(i, _)| 1.0 / ((i + 2) as f64).log2())
        .sum();
    let ideal: f64 = (0..k.min(relevant.len()))
        .map(|i| 1.0 / ((i + 2) as f64).log2())
        .sum();
    Ok(dcg / ideal)
}

/// Mean squared error over the population variance of the truth.
pub fn r_mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch { expected: truth.len(), got: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let var = truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    Ok(mse / var)
}

/// Per-variable mean/std of the normal-regime training data, the statistics
/// NaiveRCA scores against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl VariableStats {
    /// Fit from the normal-regime rows (`pattern_id == -1`); stds floored.
    pub fn from_normal_rows(data: &LabeledDataset) -> Self {
        let rows: Vec<&Vec<f64>> = (0..data.len())
            .filter(|&i| data.pattern_id[i] == -1)
            .map(|i| &data.x[i])
            .collect();
        let d = data.dim();
        let n = rows.len().max(1) as f64;
        let mean: Vec<f64> = (0..d)
            .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let std: Vec<f64> = (0..d)
            .map(|j| {
                let v = rows.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n;
                v.sqrt().max(1e-8)
            })
            .collect();
        VariableStats { mean, std }
    }
}

/// Variable positions sorted by descending |z-score|, ties by ascending
/// index.
pub fn naive_rca_rank(sample: &[f64], stats: &VariableStats) -> Vec<usize> {
    let mut keyed: Vec<(f64, usize)> = sample
        .iter()
        .enumerate()
        .map(|(i, &v)| (((v - stats.mean[i]) / stats.std[i]).abs(), i))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, i)| i).collect()
}

/// Cost of the canonical root-fix: every ground-truth anomalous variable set
/// to its normal-regime conditional mean given its counterfactually
/// corrected parents, computed through the oracle.
pub fn canonical_reference_cost(
    scm: &Scm,
    z_true: &[f64],
    root_causes: &[usize],
    x_factual: &[f64],
    cm: &CostModel,
) -> Result<f64> {
    let mut z_fixed = z_true.to_vec();
    for &v in root_causes {
        z_fixed[v] = scm.noise().mean[v];
    }
    let corrected = scm.ancestral(&z_fixed);
    let g = scm.graph();
    let mut x_canon = x_factual.to_vec();
    for &v in root_causes {
        let p = g.var_pos(v).ok_or(Error::InterventionOnTarget)?;
        x_canon[p] = corrected[v];
    }
    decision::cost(cm, &x_canon, x_factual)
}

// ---------------------------------------------------------------------------
// Dataset cells and surrogate variants
// ---------------------------------------------------------------------------

/// One synthetic experiment cell: graph family, anomaly setup, sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellSpec {
    pub structure: Structure,
    pub nodes: usize,
    pub sparsity: f64,
    pub strength: Strength,
    pub nonlinearity: Nonlinearity,
    pub patterns: usize,
    pub mean_shift_sigmas: f64,
    pub std_scale: f64,
    pub train_per_pattern: usize,
    pub train_normal: usize,
    pub test_per_pattern: usize,
    pub test_normal: usize,
    pub threshold_quantile: f64,
    pub threshold_samples: usize,
}

impl Default for CellSpec {
    fn default() -> Self {
        CellSpec {
            structure: Structure::Chain,
            nodes: 5,
            sparsity: 0.2,
            strength: Strength::Medium,
            nonlinearity: Nonlinearity::Identity,
            patterns: 2,
            mean_shift_sigmas: 3.0,
            std_scale: 2.0,
            train_per_pattern: 400,
            train_normal: 800,
            test_per_pattern: 200,
            test_normal: 400,
            threshold_quantile: 0.95,
            threshold_samples: 10_000,
        }
    }
}

impl CellSpec {
    pub fn label(&self) -> String {
        match self.structure {
            Structure::Chain => format!("chain/{}", self.nodes),
            Structure::Random => format!("sparsity{}/{}", self.sparsity, self.nodes),
        }
    }
}

/// Everything one seed of one cell needs: the ground-truth system, labeled
/// train/test data, and the fitted pattern clustering.
pub struct PreparedCell {
    pub spec: CellSpec,
    pub seed: u64,
    pub scm: Scm,
    pub patterns: Vec<AnomalyPattern>,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub gmm: GmmModel,
    pub train_labels: Vec<usize>,
    pub test_labels: Vec<usize>,
    pub label_width: usize,
}

/// Generate, threshold, simulate, and cluster one cell for one seed.
pub fn prepare_cell(spec: &CellSpec, seed: u64) -> Result<PreparedCell> {
    let graph = scm::generate_random_graph(spec.nodes, spec.structure, spec.sparsity, seed)?;
    let mut system = scm::sample_mechanisms(&graph, spec.strength, spec.nonlinearity, seed);
    system
        .noise_mut()
        .set_anomaly_shifts(spec.mean_shift_sigmas, spec.std_scale);
    scm::compute_threshold(&mut system, spec.threshold_quantile, spec.threshold_samples, seed);
    let patterns = scm::generate_patterns(&system, spec.patterns, seed)?;
    let train =
        scm::simulate_dataset(&system, &patterns, spec.train_per_pattern, spec.train_normal, seed)?;
    let test = scm::simulate_dataset(
        &system,
        &patterns,
        spec.test_per_pattern,
        spec.test_normal,
        seed.wrapping_add(0x9e3779b9),
    )?;
    let abnormal = cluster::abnormal_xy(&train);
    let gmm = cluster::fit_gmm(&abnormal, spec.patterns.max(1), seed, 1e-6, 200)?;
    let train_labels = cluster::dataset_labels(&train, &gmm);
    let test_labels = cluster::dataset_labels(&test, &gmm);
    let label_width = gmm.k + 1;
    Ok(PreparedCell {
        spec: spec.clone(),
        seed,
        scm: system,
        patterns,
        train,
        test,
        gmm,
        train_labels,
        test_labels,
        label_width,
    })
}

/// Surrogate ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Pattern labels replaced by a constant.
    NoU,
    /// Flat encoder/decoder over the whole vector.
    NoGraph,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoU => "no_u",
            Variant::NoGraph => "no_graph",
        }
    }
}

/// A trained variant, dispatching the model interface to whichever
/// architecture the variant uses.
pub enum TrainedVariant {
    Graph { model: SurrogateModel, constant_label: bool },
    Flat(FlatSurrogate),
}

impl TrainedVariant {
    pub fn label_width(&self) -> usize {
        match self {
            TrainedVariant::Graph { model, .. } => model.label_width,
            TrainedVariant::Flat(m) => m.label_width,
        }
    }

    /// One-hot for a dataset row's cluster label under this variant's
    /// labeling convention.
    pub fn one_hot_for(&self, dataset_label: usize) -> Vec<f64> {
        let label = match self {
            TrainedVariant::Graph { constant_label: true, .. } => 0,
            _ => dataset_label,
        };
        let width = self.label_width();
        let mut u = vec![0.0; width];
        u[label.min(width - 1)] = 1.0;
        u
    }

    pub fn reconstruct(&self, x_full: &[f64], dataset_label: usize) -> Result<Vec<f64>> {
        let u = self.one_hot_for(dataset_label);
        match self {
            TrainedVariant::Graph { model, .. } => model.reconstruct(x_full, &u),
            TrainedVariant::Flat(m) => m.reconstruct(x_full, &u),
        }
    }

    pub fn counterfactual(
        &self,
        x_full: &[f64],
        dataset_label: usize,
        interventions: &InterventionMap,
    ) -> Result<Vec<f64>> {
        let u = self.one_hot_for(dataset_label);
        match self {
            TrainedVariant::Graph { model, .. } => {
                decision::counterfactual(model, x_full, &u, interventions)
            }
            TrainedVariant::Flat(m) => decision::counterfactual(m, x_full, &u, interventions),
        }
    }
}

/// Train one ablation variant on a prepared cell.
pub fn train_variant(cell: &PreparedCell, variant: Variant, cfg: &TrainConfig) -> Result<TrainedVariant> {
    match variant {
        Variant::Full => {
            let model = surrogate::train_surrogate(
                &cell.train,
                &cell.train_labels,
                cell.label_width,
                cell.scm.graph(),
                cfg,
            )?;
            Ok(TrainedVariant::Graph { model, constant_label: false })
        }
        Variant::NoU => {
            let constant = vec![0usize; cell.train.len()];
            let model = surrogate::train_surrogate(
                &cell.train,
                &constant,
                1,
                cell.scm.graph(),
                cfg,
            )?;
            Ok(TrainedVariant::Graph { model, constant_label: true })
        }
        Variant::NoGraph => {
            let model = surrogate::train_flat(
                &cell.train,
                &cell.train_labels,
                cell.label_width,
                cell.scm.graph(),
                cfg,
            )?;
            Ok(TrainedVariant::Flat(model))
        }
    }
}

// ---------------------------------------------------------------------------
// Per-cell metric computations
// ---------------------------------------------------------------------------

/// Held-out reconstruction quality: relative MSE per node, averaged.
pub fn reconstruction_rmse(model: &TrainedVariant, cell: &PreparedCell) -> Result<f64> {
    let graph = cell.scm.graph();
    let rows = full_rows(&cell.test, graph);
    let mut per_node_pred: Vec<Vec<f64>> = vec![Vec::new(); graph.node_count()];
    let mut per_node_truth: Vec<Vec<f64>> = vec![Vec::new(); graph.node_count()];
    for (i, row) in rows.iter().enumerate() {
        let rec = model.reconstruct(row, cell.test_labels[i])?;
        for node in 0..graph.node_count() {
            per_node_pred[node].push(rec[node]);
            per_node_truth[node].push(row[node]);
        }
    }
    let mut total = 0.0;
    for node in 0..graph.node_count() {
        total += r_mse(&per_node_pred[node], &per_node_truth[node])?;
    }
    Ok(total / graph.node_count() as f64)
}

/// Counterfactual fidelity against the oracle: single-node interventions on
/// a standardized grid, evaluated on abnormal test rows.
pub fn counterfactual_rmse(
    model: &TrainedVariant,
    cell: &PreparedCell,
    grid: &[f64],
    max_rows: usize,
) -> Result<f64> {
    let graph = cell.scm.graph();
    let rows = full_rows(&cell.test, graph);
    let train_rows = full_rows(&cell.train, graph);
    let n_train = train_rows.len() as f64;
    let stats: Vec<(f64, f64)> = (0..graph.node_count())
        .map(|node| {
            let mean = train_rows.iter().map(|r| r[node]).sum::<f64>() / n_train;
            let var = train_rows.iter().map(|r| (r[node] - mean).powi(2)).sum::<f64>() / n_train;
            (mean, var.sqrt().max(1e-8))
        })
        .collect();

    let abnormal: Vec<usize> = cell.test.abnormal_rows().into_iter().take(max_rows).collect();
    let target = graph.target();
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for &i in &abnormal {
        for &node in &graph.variables() {
            for &g in grid {
                let value = stats[node].0 + g * stats[node].1;
                let map = InterventionMap::from([(node, value)]);
                let oracle = scm::oracle_counterfactual(&cell.scm, &cell.test.z_true[i], &map)?;
                let estimate = model.counterfactual(&rows[i], cell.test_labels[i], &map)?;
                truth.push(oracle[target]);
                pred.push(estimate[target]);
            }
        }
    }
    r_mse(&pred, &truth)
}

/// Default intervention grid in standardized units.
pub const CF_GRID: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];

// ---------------------------------------------------------------------------
// Decision-quality suite
// ---------------------------------------------------------------------------

/// Settings for the decision-quality evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionSettings {
    pub pn_threshold: f64,
    pub mc_samples: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub temperature_factor: f64,
    pub max_eval_rows: usize,
    pub ndcg_k: Vec<usize>,
    pub cost: CostModel,
}

impl Default for DecisionSettings {
    fn default() -> Self {
        DecisionSettings {
            pn_threshold: 0.9,
            mc_samples: 64,
            restarts: 8,
            max_iters: 200,
            temperature_factor: 0.05,
            max_eval_rows: 40,
            ndcg_k: vec![1, 2, 3],
            cost: CostModel::default(),
        }
    }
}

/// Decision-quality metrics for one cell and one trained full model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionMetrics {
    pub f1_full: f64,
    pub f1_naive: f64,
    pub ndcg_full: Vec<(usize, f64)>,
    pub ndcg_naive: Vec<(usize, f64)>,
    pub mean_n_cost: f64,
    pub n_cost_std: f64,
    pub feasible_rate: f64,
    pub rows_evaluated: usize,
}

/// Build the decision options a cell implies: threshold from the SCM,
/// temperature from the training spread of y, warm starts at the
/// normal-regime variable means.
pub fn decision_opts_for(cell: &PreparedCell, settings: &DecisionSettings, seed: u64) -> DecisionOpts {
    let t = cell.scm.threshold().expect("prepared cells have thresholds");
    let n = cell.train.len() as f64;
    let y_mean = cell.train.y.iter().sum::<f64>() / n;
    let y_std = (cell.train.y.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / n).sqrt();
    let stats = VariableStats::from_normal_rows(&cell.train);
    let mut opts = DecisionOpts::new(t, y_std, seed);
    opts.pn_threshold = settings.pn_threshold;
    opts.mc_samples = settings.mc_samples;
    opts.restarts = settings.restarts;
    opts.max_iters = settings.max_iters;
    opts.temperature = (settings.temperature_factor * y_std).max(1e-9);
    opts.warm_start_means = Some(stats.mean.clone());
    opts
}

/// Solve plans for the abnormal test rows and score both the surrogate
/// decisions and the NaiveRCA baseline against the true root causes.
pub fn run_decision_cell(
    cell: &PreparedCell,
    model: &SurrogateModel,
    settings: &DecisionSettings,
    seed: u64,
) -> Result<DecisionMetrics> {
    let graph = cell.scm.graph();
    let rows = full_rows(&cell.test, graph);
    let stats = VariableStats::from_normal_rows(&cell.train);
    let opts = decision_opts_for(cell, settings, seed);

    // abnormal rows with a known root cause
    let eval_rows: Vec<usize> = cell
        .test
        .abnormal_rows()
        .into_iter()
        .filter(|&i| cell.test.root_cause[i] >= 0)
        .take(settings.max_eval_rows)
        .collect();

    let mut pred_full = Vec::new();
    let mut pred_naive = Vec::new();
    let mut truth = Vec::new();
    let mut ndcg_full: Vec<Vec<f64>> = vec![Vec::new(); settings.ndcg_k.len()];
    let mut ndcg_naive: Vec<Vec<f64>> = vec![Vec::new(); settings.ndcg_k.len()];
    let mut n_costs = Vec::new();
    let mut feasible = 0usize;

    for &i in &eval_rows {
        let u = model.one_hot(cell.test_labels[i]);
        let plan = decision::solve_min_cost(model, &rows[i], &u, &settings.cost, &opts)?;
        let root = cell.test.root_cause[i] as usize;
        let relevant = BTreeSet::from([root]);

        pred_full.push(plan.ranking[0] as i64);
        truth.push(root as i64);
        let naive_rank: Vec<usize> = naive_rca_rank(&cell.test.x[i], &stats)
            .into_iter()
            .map(|p| graph.var_node(p))
            .collect();
        pred_naive.push(naive_rank[0] as i64);

        for (ki, &k) in settings.ndcg_k.iter().enumerate() {
            ndcg_full[ki].push(ndcg_at_k(&plan.ranking, &relevant, k)?);
            ndcg_naive[ki].push(ndcg_at_k(&naive_rank, &relevant, k)?);
        }
        if plan.feasible {
            feasible += 1;
            let reference = canonical_reference_cost(
                &cell.scm,
                &cell.test.z_true[i],
                &[root],
                &cell.test.x[i],
                &settings.cost,
            )?;
            n_costs.push(normalized_cost(plan.cost, reference)?);
        }
    }

    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let mean_n_cost = mean(&n_costs);
    let n_cost_std = (n_costs
        .iter()
        .map(|c| (c - mean_n_cost).powi(2))
        .sum::<f64>()
        / n_costs.len().max(1) as f64)
        .sqrt();

    Ok(DecisionMetrics {
        f1_full: f1_score(&pred_full, &truth, F1Mode::Macro)?,
        f1_naive: f1_score(&pred_naive, &truth, F1Mode::Macro)?,
        ndcg_full: settings
            .ndcg_k
            .iter()
            .zip(&ndcg_full)
            .map(|(&k, v)| (k, mean(v)))
            .collect(),
        ndcg_naive: settings
            .ndcg_k
            .iter()
            .zip(&ndcg_naive)
            .map(|(&k, v)| (k, mean(v)))
            .collect(),
        mean_n_cost,
        n_cost_std,
        feasible_rate: feasible as f64 / eval_rows.len().max(1) as f64,
        rows_evaluated: eval_rows.len(),
    })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One metric value in the flat report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub dataset: String,
    pub nodes: usize,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

/// Flat evaluation report: one row per (method, dataset, seed, metric).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub config_hash: String,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn push(&mut self, method: &str, dataset: &str, nodes: usize, seed: u64, metric: &str, value: f64) {
        self.rows.push(ReportRow {
            method: method.to_string(),
            dataset: dataset.to_string(),
            nodes,
            seed,
            metric: metric.to_string(),
            value,
        });
    }

    /// Values of one (method, metric) pair across seeds for one dataset.
    pub fn values(&self, method: &str, dataset: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.dataset == dataset && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    /// Flat CSV, one metric per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,dataset,nodes,seed,metric,value\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.method,
                r.dataset,
                r.nodes,
                r.seed,
                r.metric,
                crate::io::format_float(r.value)
            ));
        }
        out
    }
}

/// Median of a sample (empty input yields NaN).
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Train the requested variants over cells and seeds, collecting
/// reconstruction and counterfactual relative MSE per run.
pub fn run_ablation_suite(
    cells: &[CellSpec],
    variants: &[Variant],
    seeds: &[u64],
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let mut report = EvalReport {
        seeds: seeds.to_vec(),
        config_hash: config_hash(&(cells, variants, seeds, cfg))?,
        rows: Vec::new(),
    };
    for cell_spec in cells {
        for &seed in seeds {
            let cell = prepare_cell(cell_spec, seed)?;
            for &variant in variants {
                let train_cfg = TrainConfig { seed, ..cfg.clone() };
                let model = train_variant(&cell, variant, &train_cfg)?;
                let recon = reconstruction_rmse(&model, &cell)?;
                let cf = counterfactual_rmse(&model, &cell, &CF_GRID, 50)?;
                let name = variant.name();
                let label = cell_spec.label();
                report.push(name, &label, cell_spec.nodes, seed, "r_mse_recon", recon);
                report.push(name, &label, cell_spec.nodes, seed, "r_mse_cf", cf);
            }
        }
    }
    Ok(report)
}

/// Hex SHA-256 of a serializable configuration, recorded in reports.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = serde_json::to_vec(config)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_perfect_and_zero() {
        assert_eq!(f1_score(&[1, 0, 1], &[1, 0, 1], F1Mode::Binary).unwrap(), 1.0);
        assert_eq!(f1_score(&[0, 0], &[1, 1], F1Mode::Binary).unwrap(), 0.0);
        assert_eq!(f1_score(&[2, 1, 0], &[2, 1, 0], F1Mode::Macro).unwrap(), 1.0);
    }

    #[test]
    fn f1_harmonic_mean_case() {
        // precision 0.5, recall 1.0 -> 2/3
        let predicted = [1, 1, 1, 1];
        let truth = [1, 1, 0, 0];
        let f1 = f1_score(&predicted, &truth, F1Mode::Binary).unwrap();
        assert!((f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn f1_empty_is_an_error() {
        assert!(matches!(
            f1_score(&[], &[], F1Mode::Binary),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn macro_f1_equals_binary_for_symmetric_classes() {
        let predicted = [1, 0, 1, 0];
        let truth = [1, 0, 0, 1];
        let binary = f1_score(&predicted, &truth, F1Mode::Binary).unwrap();
        let swapped: Vec<i64> = predicted.iter().map(|&p| 1 - p).collect();
        let swapped_truth: Vec<i64> = truth.iter().map(|&t| 1 - t).collect();
        let binary_swapped = f1_score(&swapped, &swapped_truth, F1Mode::Binary).unwrap();
        let macro_f1 = f1_score(&predicted, &truth, F1Mode::Macro).unwrap();
        assert!((macro_f1 - 0.5 * (binary + binary_swapped)).abs() < 1e-12);
    }

    #[test]
    fn normalized_cost_cases() {
        assert_eq!(normalized_cost(8.0, 8.0).unwrap(), 1.0);
        assert_eq!(normalized_cost(0.0, 5.0).unwrap(), 0.0);
        assert_eq!(normalized_cost(2.0, 8.0).unwrap(), 0.25);
        assert!(matches!(normalized_cost(1.0, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn ndcg_examples() {
        let relevant = BTreeSet::from([3]);
        assert_eq!(ndcg_at_k(&[3, 1, 2], &relevant, 1).unwrap(), 1.0);
        let v = ndcg_at_k(&[1, 3], &relevant, 2).unwrap();
        assert!((v - 1.0 / 3.0_f64.log2()).abs() < 1e-12);
        // every ranked item relevant: ideal for any k
        let all = BTreeSet::from([0, 1, 2]);
        for k in 1..=3 {
            assert!((ndcg_at_k(&[2, 0, 1], &all, k).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(matches!(
            ndcg_at_k(&[0, 1], &BTreeSet::new(), 1),
            Err(Error::NoRelevantItems)
        ));
    }

    #[test]
    fn ndcg_ignores_order_below_relevant() {
        let relevant = BTreeSet::from([5]);
        let a = ndcg_at_k(&[1, 5, 2, 3, 4], &relevant, 3).unwrap();
        let b = ndcg_at_k(&[2, 5, 4, 1, 3], &relevant, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn r_mse_cases() {
        assert_eq!(r_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        // predicting the mean gives exactly 1
        let truth = [0.0, 2.0, 4.0];
        let pred = [2.0, 2.0, 2.0];
        assert!((r_mse(&pred, &truth).unwrap() - 1.0).abs() < 1e-12);
        // hand case: mse 0.5 over population variance 1
        assert!((r_mse(&[0.0, 1.0], &[0.0, 2.0]).unwrap() - 0.5).abs() < 1e-12);
        assert!(matches!(
            r_mse(&[1.0, 1.0], &[3.0, 3.0]),
            Err(Error::ZeroVariance)
        ));
    }

    #[test]
    fn r_mse_shift_and_scale_invariance() {
        let truth = [1.0, 2.0, 5.0, -1.0];
        let pred = [1.5, 1.0, 4.0, 0.0];
        let base = r_mse(&pred, &truth).unwrap();
        let shifted: Vec<f64> = pred.iter().map(|v| v + 10.0).collect();
        let shifted_truth: Vec<f64> = truth.iter().map(|v| v + 10.0).collect();
        assert!((r_mse(&shifted, &shifted_truth).unwrap() - base).abs() < 1e-12);
        let scaled: Vec<f64> = pred.iter().map(|v| v * 3.0).collect();
        let scaled_truth: Vec<f64> = truth.iter().map(|v| v * 3.0).collect();
        assert!((r_mse(&scaled, &scaled_truth).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn naive_rca_ordering() {
        let stats = VariableStats { mean: vec![0.0; 3], std: vec![1.0; 3] };
        assert_eq!(naive_rca_rank(&[0.0, 10.0, 0.0], &stats), vec![1, 0, 2]);
        assert_eq!(naive_rca_rank(&[0.0, 0.0, 0.0], &stats), vec![0, 1, 2]);
        assert_eq!(naive_rca_rank(&[1.5, -2.0, 0.3], &stats), vec![1, 0, 2]);
    }

    #[test]
    fn canonical_reference_fixes_the_root() {
        // chain X1 -> X2 -> Y, weights 1; anomaly on X1's noise
        let model = crate::testing::LinearGaussianModel::chain(&[1.0, 1.0]);
        let scm = model.scm();
        let z = vec![3.0, 0.0, 0.0]; // anomalous z1 = 3
        let x = vec![3.0, 3.0]; // factual variables
        let cost = canonical_reference_cost(scm, &z, &[0], &x, &CostModel::default()).unwrap();
        // corrected x1 = 0, delta = 3, squared cost 9
        assert!((cost - 9.0).abs() < 1e-12);
    }
}
