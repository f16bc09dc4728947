//! Scratch probe: map glossy reliability against eps_byte with large
//! samples and show by-run failure clustering.

use cidp_bench::config::{ExperimentConfig, TopologyConfig};
use cidp_bench::experiment::{execute_point, plan_point};
use cidp_core::simnet::{compute_metrics, RadioParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let trials: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let pool = rayon::ThreadPoolBuilder::new().build().unwrap();
    for eps in [0.002, 0.003, 0.004, 0.0046875, 0.005, 0.0055, 0.006, 0.008] {
        let config = ExperimentConfig {
            topology: TopologyConfig::Rgg { nodes: 94, radius: 1.0, side: 4.5 },
            radio: RadioParams { eps_byte: eps, ..RadioParams::default() },
            patch_bytes: 128,
            runs: 1,
            min_node_trials: Some(trials),
            seed,
            nmax_floor: true,
            glossy_mode: true,
            ..ExperimentConfig::default()
        };
        let plan = plan_point(&config, None, 0.0, true).unwrap();
        let results = pool.install(|| execute_point(&plan)).unwrap();
        let metrics = compute_metrics(&results).unwrap();

        // Distribution of per-run failure counts.
        let mut hist = std::collections::BTreeMap::new();
        for run in &results {
            let fails = run.nodes.iter().skip(1).filter(|n| !n.delivered).count();
            *hist.entry(fails).or_insert(0usize) += 1;
        }
        let worst = hist.keys().max().copied().unwrap_or(0);
        let runs_with_fail: usize = hist.iter().filter(|(k, _)| **k > 0).map(|(_, v)| v).sum();
        println!(
            "eps={eps:.4} rel={:.6} (trials {}, runs {}) runs_with_fail={} worst_run_failures={}",
            metrics.reliability, metrics.node_trials, results.len(), runs_with_fail, worst
        );
    }
}
