//! Scratch: localize counterfactual error per intervened node and settings.

use miccd_core::decision::InterventionMap;
use miccd_core::eval::{self, r_mse, CellSpec, Variant};
use miccd_core::scm;
use miccd_core::surrogate::{full_rows, TrainConfig};

#[test]
#[ignore]
fn per_node_cf_error() {
    for (kl, positive) in [(0.3, true), (1.0, true), (3.0, true), (1.0, false)] {
        let mut worst_total = 0.0f64;
        for seed in [0u64, 1, 2] {
            let spec = CellSpec::default();
            let mut cell = eval::prepare_cell(&spec, seed).unwrap();
            if positive {
                // monotone chain: flip every weight positive and rebuild
                let graph = cell.scm.graph().clone();
                let mechs: Vec<scm::Mechanism> = cell
                    .scm
                    .mechanisms()
                    .iter()
                    .map(|m| scm::Mechanism {
                        node: m.node,
                        weights: m.weights.iter().map(|w| w.abs()).collect(),
                        nonlinearity: m.nonlinearity,
                    })
                    .collect();
                let mut sys = scm::Scm::new(graph, mechs, cell.scm.noise().clone());
                scm::compute_threshold(&mut sys, 0.95, 10_000, seed);
                let patterns = scm::generate_patterns(&sys, 2, seed).unwrap();
                let train = scm::simulate_dataset(&sys, &patterns, 400, 800, seed).unwrap();
                let test = scm::simulate_dataset(&sys, &patterns, 200, 400, seed + 999).unwrap();
                let gmm = miccd_core::cluster::fit_gmm(
                    &miccd_core::cluster::abnormal_xy(&train),
                    2,
                    seed,
                    1e-6,
                    200,
                )
                .unwrap();
                let train_labels = miccd_core::cluster::dataset_labels(&train, &gmm);
                let test_labels = miccd_core::cluster::dataset_labels(&test, &gmm);
                cell = eval::PreparedCell {
                    spec: spec.clone(),
                    seed,
                    scm: sys,
                    patterns,
                    train,
                    test,
                    gmm,
                    train_labels,
                    test_labels,
                    label_width: 3,
                };
            }
            let cfg = TrainConfig { seed, kl_weight: kl, ..TrainConfig::default() };
            let model = eval::train_variant(&cell, Variant::Full, &cfg).unwrap();

            let graph = cell.scm.graph();
            let rows = full_rows(&cell.test, graph);
            // normal-regime stats: interventions aim back at the normal manifold
            let normal_rows: Vec<Vec<f64>> = {
                let all = full_rows(&cell.train, graph);
                (0..cell.train.len())
                    .filter(|&i| cell.train.pattern_id[i] == -1)
                    .map(|i| all[i].clone())
                    .collect()
            };
            let n_train = normal_rows.len() as f64;
            let stats: Vec<(f64, f64)> = (0..graph.node_count())
                .map(|node| {
                    let mean = normal_rows.iter().map(|r| r[node]).sum::<f64>() / n_train;
                    let var =
                        normal_rows.iter().map(|r| (r[node] - mean).powi(2)).sum::<f64>() / n_train;
                    (mean, var.sqrt())
                })
                .collect();
            let abnormal: Vec<usize> = cell.test.abnormal_rows().into_iter().take(50).collect();
            let mut per_node = Vec::new();
            let mut all_pred = Vec::new();
            let mut all_truth = Vec::new();
            for &node in &graph.variables() {
                let mut pred = Vec::new();
                let mut truth = Vec::new();
                for &i in &abnormal {
                    for g in [-2.0, -1.0, 0.0, 1.0, 2.0] {
                        let value = stats[node].0 + g * stats[node].1;
                        let map = InterventionMap::from([(node, value)]);
                        let oracle =
                            scm::oracle_counterfactual(&cell.scm, &cell.test.z_true[i], &map)
                                .unwrap();
                        let est = model.counterfactual(&rows[i], cell.test_labels[i], &map).unwrap();
                        truth.push(oracle[graph.target()]);
                        pred.push(est[graph.target()]);
                    }
                }
                all_pred.extend_from_slice(&pred);
                all_truth.extend_from_slice(&truth);
                per_node.push((r_mse(&pred, &truth).unwrap() * 1000.0).round() / 1000.0);
            }
            let total = r_mse(&all_pred, &all_truth).unwrap();
            worst_total = worst_total.max(total);
            println!(
                "kl {kl} positive {positive} seed {seed}: total {total:.4} per-node {per_node:?} rows {}",
                abnormal.len()
            );
        }
        println!("kl {kl} positive {positive}: worst {worst_total:.4}\n");
    }
}
