//! End-to-end surrogate training checks on a chain-5 system: objective
//! improvement, noise-recovery correlation, reconstruction quality, and the
//! round-trip invariants.

use miccd_core::cluster;
use miccd_core::graph::CausalGraph;
use miccd_core::scm::{self, LabeledDataset, Scm, Structure};
use miccd_core::surrogate::{self, full_rows, SurrogateModel, TrainConfig};

struct Setup {
    scm: Scm,
    train: LabeledDataset,
    test: LabeledDataset,
    train_labels: Vec<usize>,
    test_labels: Vec<usize>,
    label_width: usize,
}

fn chain5_setup(seed: u64) -> Setup {
    let graph = scm::generate_random_graph(5, Structure::Chain, 0.0, seed).unwrap();
    let mut system = scm::sample_mechanisms(
        &graph,
        scm::Strength::Medium,
        scm::Nonlinearity::Identity,
        seed,
    );
    scm::compute_threshold(&mut system, 0.95, 10_000, seed);
    let patterns = scm::generate_patterns(&system, 2, seed).unwrap();
    let train = scm::simulate_dataset(&system, &patterns, 400, 800, seed).unwrap();
    let test = scm::simulate_dataset(&system, &patterns, 200, 400, seed + 1).unwrap();

    let gmm = cluster::fit_gmm(&cluster::abnormal_xy(&train), patterns.len(), seed, 1e-6, 200).unwrap();
    let train_labels = cluster::dataset_labels(&train, &gmm);
    let test_labels = cluster::dataset_labels(&test, &gmm);
    Setup {
        scm: system,
        train,
        test,
        train_labels,
        test_labels,
        label_width: gmm.k + 1,
    }
}

fn train_model(setup: &Setup, seed: u64) -> SurrogateModel {
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    surrogate::train_surrogate(
        &setup.train,
        &setup.train_labels,
        setup.label_width,
        setup.scm.graph(),
        &cfg,
    )
    .unwrap()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Per-variable relative MSE averaged over nodes.
fn reconstruction_rmse(model: &SurrogateModel, data: &LabeledDataset, labels: &[usize], graph: &CausalGraph) -> f64 {
    let rows = full_rows(data, graph);
    let recs: Vec<Vec<f64>> = rows
        .iter()
        .zip(labels)
        .map(|(row, &l)| model.reconstruct(row, &model.one_hot(l)).unwrap())
        .collect();
    let nodes = graph.node_count();
    let n = rows.len() as f64;
    let mut total = 0.0;
    for j in 0..nodes {
        let mean: f64 = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var: f64 = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let mse: f64 = rows
            .iter()
            .zip(&recs)
            .map(|(r, rec)| (r[j] - rec[j]).powi(2))
            .sum::<f64>()
            / n;
        total += mse / var;
    }
    total / nodes as f64
}

#[test]
fn training_improves_the_objective() {
    let setup = chain5_setup(0);
    let rows = full_rows(&setup.train, setup.scm.graph());
    let cfg = TrainConfig { epochs: 0, seed: 0, ..TrainConfig::default() };
    let untrained = surrogate::train_surrogate(
        &setup.train,
        &setup.train_labels,
        setup.label_width,
        setup.scm.graph(),
        &cfg,
    )
    .unwrap();
    let before = untrained.objective(&rows, &setup.train_labels).unwrap();

    let model = train_model(&setup, 0);
    let after = model.objective(&rows, &setup.train_labels).unwrap();
    println!("objective before {before:.4} after {after:.4}");
    assert!(after > before, "objective did not improve: {before} -> {after}");
}

#[test]
fn abducted_noise_tracks_the_generative_noise() {
    let setup = chain5_setup(1);
    let model = train_model(&setup, 1);
    let rows = full_rows(&setup.test, setup.scm.graph());
    let nodes = setup.scm.graph().node_count();
    for node in 0..nodes {
        let mut abducted = Vec::new();
        let mut truth = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let u = model.one_hot(setup.test_labels[i]);
            let post = model.abduct(row, &u).unwrap();
            abducted.push(post.mean[node]);
            truth.push(setup.test.z_true[i][node]);
        }
        let r = pearson(&abducted, &truth);
        println!("node {node}: corr(abducted, true) = {r:.4}");
        assert!(r >= 0.9, "node {node} correlation {r}");
    }
}

#[test]
fn reconstruction_rmse_on_held_out_data() {
    let setup = chain5_setup(2);
    let model = train_model(&setup, 2);
    let rmse = reconstruction_rmse(&model, &setup.test, &setup.test_labels, setup.scm.graph());
    println!("held-out reconstruction r-MSE = {rmse:.4}");
    assert!(rmse <= 0.1, "reconstruction r-MSE {rmse}");
}

#[test]
fn abduction_is_deterministic() {
    let setup = chain5_setup(3);
    let model = train_model(&setup, 3);
    let rows = full_rows(&setup.test, setup.scm.graph());
    let u = model.one_hot(setup.test_labels[0]);
    let a = model.abduct(&rows[0], &u).unwrap();
    let b = model.abduct(&rows[0], &u).unwrap();
    assert_eq!(a, b);
}

#[test]
fn objective_equals_sum_of_node_elbo_components() {
    let setup = chain5_setup(4);
    let cfg = TrainConfig { epochs: 2, seed: 4, ..TrainConfig::default() };
    let model = surrogate::train_surrogate(
        &setup.train,
        &setup.train_labels,
        setup.label_width,
        setup.scm.graph(),
        &cfg,
    )
    .unwrap();
    let rows = full_rows(&setup.train, setup.scm.graph());
    let total = model.objective(&rows, &setup.train_labels).unwrap();
    let mut summed = 0.0;
    for node in 0..setup.scm.graph().node_count() {
        let (recon, kl) = model.node_elbo(node, &rows, &setup.train_labels).unwrap();
        summed += recon - model.config.kl_weight * kl;
    }
    assert!((total - summed).abs() < 1e-9, "{total} vs {summed}");
}

#[test]
fn identity_stats_on_prestandardized_data_match() {
    let setup = chain5_setup(5);
    let graph = setup.scm.graph();
    let cfg = TrainConfig { epochs: 2, seed: 5, ..TrainConfig::default() };

    let model_a = surrogate::train_surrogate(
        &setup.train,
        &setup.train_labels,
        setup.label_width,
        graph,
        &cfg,
    )
    .unwrap();

    // standardize the data by hand, then train with identity stats
    let stats = model_a.stats().to_vec();
    let vars = graph.variables();
    let mut pre = setup.train.clone();
    for i in 0..pre.len() {
        for (p, &node) in vars.iter().enumerate() {
            pre.x[i][p] = (pre.x[i][p] - stats[node].0) / stats[node].1;
        }
        pre.y[i] = (pre.y[i] - stats[graph.target()].0) / stats[graph.target()].1;
    }
    let identity = vec![(0.0, 1.0); graph.node_count()];
    let model_b = surrogate::train_surrogate_with_stats(
        &pre,
        &setup.train_labels,
        setup.label_width,
        graph,
        &cfg,
        Some(identity),
    )
    .unwrap();

    // identical parameters: the standardized inputs seen by training match
    for (a, b) in model_a.node_models().iter().zip(model_b.node_models()) {
        assert_eq!(a.encoder.params(), b.encoder.params());
        assert_eq!(a.prior.params(), b.prior.params());
        assert_eq!(a.decoder.params(), b.decoder.params());
    }
}

#[test]
fn constant_variable_reconstructs_its_constant() {
    // X1 constant (tiny noise), X2 = X1 + z2, target Y = X2 + z_y
    let graph = scm::generate_random_graph(2, Structure::Chain, 0.0, 0).unwrap();
    let mut system = scm::sample_mechanisms(&graph, scm::Strength::Medium, scm::Nonlinearity::Identity, 3);
    system.noise_mut().mean[0] = 4.0;
    system.noise_mut().std[0] = 1e-12;
    scm::compute_threshold(&mut system, 0.95, 2000, 0);
    let data = scm::simulate_dataset(&system, &[], 0, 600, 0).unwrap();
    let labels = vec![0usize; data.len()];
    let cfg = TrainConfig { seed: 0, ..TrainConfig::default() };
    let model = surrogate::train_surrogate(&data, &labels, 1, &graph, &cfg).unwrap();
    let rows = full_rows(&data, &graph);
    for row in rows.iter().take(50) {
        let rec = model.reconstruct(row, &model.one_hot(0)).unwrap();
        assert!((rec[0] - 4.0).abs() < 1e-3, "constant recon {}", rec[0]);
    }
}
