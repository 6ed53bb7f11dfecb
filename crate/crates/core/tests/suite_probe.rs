//! Scratch probe of the full-pipeline metrics (run with --ignored --nocapture).

use miccd_core::eval::{self, CellSpec, DecisionSettings, Variant};
use miccd_core::surrogate::TrainConfig;

#[test]
#[ignore]
fn probe_counterfactual_and_decisions() {
    for seed in [0u64, 1, 2] {
        let spec = CellSpec::default();
        let cell = eval::prepare_cell(&spec, seed).unwrap();
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let model = eval::train_variant(&cell, Variant::Full, &cfg).unwrap();
        let recon = eval::reconstruction_rmse(&model, &cell).unwrap();
        let cf = eval::counterfactual_rmse(&model, &cell, &eval::CF_GRID, 50).unwrap();
        println!("seed {seed}: recon r-MSE {recon:.4}, cf r-MSE {cf:.4}");

        let eval::TrainedVariant::Graph { model: full, .. } = model else { panic!() };
        let settings = DecisionSettings { max_eval_rows: 20, ..DecisionSettings::default() };
        let t0 = std::time::Instant::now();
        let metrics = eval::run_decision_cell(&cell, &full, &settings, seed).unwrap();
        println!(
            "seed {seed}: f1_full {:.3} f1_naive {:.3} n_cost {:.3}±{:.3} feasible {:.2} ndcg {:?} rows {} ({:?})",
            metrics.f1_full,
            metrics.f1_naive,
            metrics.mean_n_cost,
            metrics.n_cost_std,
            metrics.feasible_rate,
            metrics.ndcg_full,
            metrics.rows_evaluated,
            t0.elapsed(),
        );
        println!(
            "  patterns at variables {:?}",
            cell.patterns.iter().map(|p| p.variable).collect::<Vec<_>>()
        );
    }
}

#[test]
#[ignore]
fn probe_ablations() {
    let chain = CellSpec::default();
    let sparse = CellSpec {
        structure: miccd_core::scm::Structure::Random,
        sparsity: 0.3,
        ..CellSpec::default()
    };
    let report = eval::run_ablation_suite(
        &[chain, sparse],
        &[Variant::Full, Variant::NoU, Variant::NoGraph],
        &[0, 1, 2],
        &TrainConfig::default(),
    )
    .unwrap();
    for dataset in ["chain/5", "sparsity0.3/5"] {
        for metric in ["r_mse_cf", "r_mse_recon"] {
            for variant in ["full", "no_u", "no_graph"] {
                let vals = report.values(variant, dataset, metric);
                println!(
                    "{dataset} {metric} {variant}: median {:.4} {:?}",
                    eval::median(&vals),
                    vals.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
                );
            }
        }
    }
}
