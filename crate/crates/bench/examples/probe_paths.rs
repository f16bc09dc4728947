//! Scratch probe: the same glossy point planned via `variable=None` and
//! via an L sweep must agree.

use cidp_bench::config::{ExperimentConfig, SweepVariable, TopologyConfig};
use cidp_bench::experiment::{execute_point, plan_point};
use cidp_core::simnet::{compute_metrics, RadioParams};

fn main() {
    let eps = 0.0046875;
    let pool = rayon::ThreadPoolBuilder::new().build().unwrap();
    let config = ExperimentConfig {
        topology: TopologyConfig::Rgg { nodes: 94, radius: 1.0, side: 4.5 },
        radio: RadioParams { eps_byte: eps, ..RadioParams::default() },
        patch_bytes: 128,
        runs: 1,
        min_node_trials: Some(20_000),
        seed: 1,
        nmax_floor: true,
        glossy_mode: true,
        ..ExperimentConfig::default()
    };
    for (label, variable, value) in [
        ("variable=None ", None, 0.0),
        ("variable=L=128", Some(SweepVariable::L), 128.0),
    ] {
        let plan = plan_point(&config, variable, value, true).unwrap();
        println!(
            "{label}: l_pkt={} frame={} m={} n_max={} runs={} label={}",
            plan.framing.l_pkt,
            plan.framing.frame_bytes(),
            plan.packets.len(),
            plan.n_max,
            plan.runs,
            plan.label
        );
        let results = pool.install(|| execute_point(&plan)).unwrap();
        let metrics = compute_metrics(&results).unwrap();
        println!("  -> reliability {:.6}", metrics.reliability);
    }
}
