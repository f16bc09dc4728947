//! Sweep execution: plan points, fan runs across workers, aggregate, and
//! write the artifact files (raw CSV, aggregate CSV, CDFs, SVG plot).
//!
//! Outputs are pure functions of (config, seed base). Runs within a point
//! execute in parallel but are collected in run-index order, so every file
//! is byte-identical regardless of worker count.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cidp_core::framing::{fragment, FramingParams, Packet};
use cidp_core::protocol::{compute_nmax, compute_nmax_floor, ProtocolParams};
use cidp_core::simnet::{
    self, build_topology, compute_metrics, metrics, run_dissemination, Metrics, RadioParams,
    RunResult, Topology,
};

use crate::config::{ExperimentConfig, PlotMetric, SweepVariable, TopologyConfig};
use crate::svg;
use crate::BenchError;

/// Distinct stream for per-run topology generation so channel draws and
/// node placement never share a seed.
const TOPOLOGY_SEED_SALT: u64 = 0x7090_10C4_5EED_0001;
/// Stream for synthetic patch content.
const SYNTH_SEED_SALT: u64 = 0x5eed_0bae_c1d9_0002;

#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub series: String,
    pub variable: String,
    pub value: f64,
    pub label: String,
    pub m: u8,
    pub n_max: u8,
    pub node_trials: usize,
    pub metrics: Metrics,
}

#[derive(Debug, Clone)]
pub struct SeriesOutcome {
    pub name: String,
    pub points: Vec<PointOutcome>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub series: Vec<SeriesOutcome>,
}

/// One resolved sweep point, ready to execute.
pub struct PointPlan {
    pub series: String,
    pub variable: String,
    pub value: f64,
    pub label: String,
    pub topology: TopologyConfig,
    pub radio: RadioParams,
    pub framing: FramingParams,
    pub n_max: u8,
    pub t_round_slots: Option<u64>,
    pub packets: Vec<Packet>,
    pub runs: usize,
    pub seed: u64,
}

fn format_value(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Synthetic object bytes: fixed pseudorandom content per (seed, length).
pub fn synthetic_object(seed: u64, len: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SYNTH_SEED_SALT ^ len as u64);
    (0..len).map(|_| rng.random()).collect()
}

pub fn plan_point(
    config: &ExperimentConfig,
    variable: Option<SweepVariable>,
    value: f64,
    glossy: bool,
) -> Result<PointPlan, BenchError> {
    let mut topology = config.topology;
    let mut radio = config.radio;
    let mut object_len = config.patch_bytes;
    let mut n_max_override = config.n_max_override;

    if let Some(var) = variable {
        match var {
            SweepVariable::N => topology = topology.with_nodes(value as usize),
            SweepVariable::L => object_len = value as usize,
            SweepVariable::NMax => n_max_override = Some(value as u8),
            SweepVariable::EpsByte => radio.eps_byte = value,
            SweepVariable::SigmaJitter => radio.sigma_jitter_ns = value * 1000.0,
        }
    }
    let object = match &config.patch_file {
        Some(path) => fs::read(path)?,
        None => synthetic_object(config.seed, object_len),
    };
    let framing = if glossy {
        FramingParams {
            l_pkt: object.len(),
            phy_overhead: config.phy_overhead,
        }
    } else {
        FramingParams {
            l_pkt: config.l_pkt,
            phy_overhead: config.phy_overhead,
        }
    };
    let packets = fragment(&object, &framing, 1)?;

    let n = topology.nodes();
    if n < 2 {
        return Err(BenchError::Invalid(
            "experiments need at least two nodes".into(),
        ));
    }
    let n_max = match n_max_override {
        Some(n_max) => n_max,
        None if config.nmax_floor => compute_nmax_floor(n as u64)?,
        None => compute_nmax(n as u64)?,
    };
    let runs = match config.min_node_trials {
        Some(trials) => config.runs.max(trials.div_ceil(n - 1)),
        None => config.runs,
    };
    let variable_name = variable
        .map(|v| v.as_str().to_string())
        .unwrap_or_else(|| "N".to_string());
    let value = if variable.is_none() { n as f64 } else { value };
    let series = if glossy { "glossy" } else { "cidp" };
    Ok(PointPlan {
        series: series.into(),
        variable: variable_name.clone(),
        value,
        label: format!("{}{}", variable_name, format_value(value)),
        topology,
        radio,
        framing,
        n_max,
        t_round_slots: config.t_round_slots,
        packets,
        runs,
        seed: config.seed,
    })
}

fn protocol_for(plan: &PointPlan, topology: &Topology) -> ProtocolParams {
    let t_slot = plan.radio.airtime(plan.framing.frame_bytes()) + plan.radio.t_proc;
    let t_round = match plan.t_round_slots {
        Some(slots) => slots.max(1) * t_slot,
        None => (2 * topology.max_hops() as u64 + plan.n_max as u64 + 2) * t_slot,
    };
    ProtocolParams {
        n_max: plan.n_max,
        t_slot,
        t_round,
        t_proc: plan.radio.t_proc,
        initiator_timeout_retx: true,
    }
}

/// Execute every run of one point. Must be called inside the worker pool;
/// results come back in run-index (ascending seed) order.
pub fn execute_point(plan: &PointPlan) -> Result<Vec<RunResult>, BenchError> {
    // Fixed topologies are built once; RGG redraws per run so sweeps
    // average over deployments rather than one placement.
    let fixed = match plan.topology {
        TopologyConfig::Rgg { .. } => None,
        _ => Some(build_topology(&plan.topology.to_spec(), 0)?),
    };
    let results: Result<Vec<RunResult>, simnet::Error> = (0..plan.runs)
        .into_par_iter()
        .map(|i| {
            let run_seed = plan.seed.wrapping_add(i as u64);
            let topology = match &fixed {
                Some(t) => t.clone(),
                None => build_topology(
                    &plan.topology.to_spec(),
                    run_seed ^ TOPOLOGY_SEED_SALT,
                )?,
            };
            let proto = protocol_for(plan, &topology);
            run_dissemination(
                &topology,
                &plan.radio,
                &plan.framing,
                &proto,
                &plan.packets,
                run_seed,
            )
        })
        .collect();
    Ok(results?)
}

/// The series this experiment produces: an L sweep compares fragmented
/// dissemination against the unfragmented baseline; anything else runs a
/// single series chosen by `glossy_mode`.
fn series_modes(config: &ExperimentConfig) -> Vec<bool> {
    match &config.sweep {
        Some(sweep) if sweep.variable == SweepVariable::L => vec![false, true],
        _ => vec![config.glossy_mode],
    }
}

pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> Result<ExperimentOutcome, BenchError> {
    config.validate()?;
    if config.patch_file.is_some()
        && matches!(&config.sweep, Some(s) if s.variable == SweepVariable::L)
    {
        return Err(BenchError::Invalid(
            "patch_file cannot be combined with an L sweep".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config_echo.txt"), config.echo())?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| BenchError::Invalid(format!("worker pool: {e}")))?;

    let sweep_values: Vec<(Option<SweepVariable>, f64)> = match &config.sweep {
        Some(sweep) => sweep
            .values
            .iter()
            .map(|&v| (Some(sweep.variable), v))
            .collect(),
        None => vec![(None, 0.0)],
    };

    let mut outcome = ExperimentOutcome { series: Vec::new() };
    for glossy in series_modes(config) {
        let mut series_points = Vec::new();
        let series_name = if glossy { "glossy" } else { "cidp" };
        for &(variable, value) in &sweep_values {
            let plan = plan_point(config, variable, value, glossy)?;
            let results = pool.install(|| execute_point(&plan))?;
            let metrics = compute_metrics(&results)?;

            write_point_files(out_dir, &plan, &results)?;
            series_points.push(PointOutcome {
                series: plan.series.clone(),
                variable: plan.variable.clone(),
                value: plan.value,
                label: plan.label.clone(),
                m: plan.packets.len() as u8,
                n_max: plan.n_max,
                node_trials: metrics.node_trials,
                metrics,
            });
        }
        write_aggregate(out_dir, series_name, &series_points)?;
        outcome.series.push(SeriesOutcome {
            name: series_name.into(),
            points: series_points,
        });
    }
    write_plot(out_dir, config, &outcome)?;
    Ok(outcome)
}

fn write_point_files(
    out_dir: &Path,
    plan: &PointPlan,
    results: &[RunResult],
) -> Result<(), BenchError> {
    let m = results[0].m;
    let mut raw = metrics::raw_csv_header(m);
    for run in results {
        raw.push_str(&metrics::raw_csv_rows(run));
    }
    let stem = format!("{}_{}", plan.series, plan.label);
    fs::write(out_dir.join(format!("raw_{stem}.csv")), raw)?;

    let mut pooled = String::from("completion_us,cum_frac\n");
    for (t, frac) in metrics::latency_cdf(results) {
        pooled.push_str(&format!("{},{:.6}\n", metrics::format_us(t), frac));
    }
    fs::write(out_dir.join(format!("cdf_pooled_{stem}.csv")), pooled)?;

    let mut per_run = String::from("run_seed,completion_us,cum_frac\n");
    for run in results {
        let one = std::slice::from_ref(run);
        for (t, frac) in metrics::latency_cdf(one) {
            per_run.push_str(&format!(
                "{},{},{:.6}\n",
                run.seed,
                metrics::format_us(t),
                frac
            ));
        }
    }
    fs::write(out_dir.join(format!("cdf_runs_{stem}.csv")), per_run)?;
    Ok(())
}

fn write_aggregate(
    out_dir: &Path,
    series: &str,
    points: &[PointOutcome],
) -> Result<(), BenchError> {
    let mut out =
        String::from("variable,value,reliability,rel_stderr,mean_latency_us,p50,p90,p99\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.3},{:.3},{:.3},{:.3}\n",
            p.variable,
            format_value(p.value),
            p.metrics.reliability,
            p.metrics.rel_stderr,
            p.metrics.latency.mean_us,
            p.metrics.latency.p50_us,
            p.metrics.latency.p90_us,
            p.metrics.latency.p99_us,
        ));
    }
    fs::write(out_dir.join(format!("aggregate_{series}.csv")), out)?;
    Ok(())
}

fn write_plot(
    out_dir: &Path,
    config: &ExperimentConfig,
    outcome: &ExperimentOutcome,
) -> Result<(), BenchError> {
    let (y_label, pick): (&str, fn(&PointOutcome) -> f64) = match config.plot {
        PlotMetric::Reliability => ("reliability", |p| p.metrics.reliability),
        PlotMetric::Latency => ("mean completion (us)", |p| p.metrics.latency.mean_us),
    };
    let x_label = outcome
        .series
        .first()
        .and_then(|s| s.points.first())
        .map(|p| p.variable.clone())
        .unwrap_or_else(|| "value".into());
    let series: Vec<svg::Series> = outcome
        .series
        .iter()
        .map(|s| svg::Series {
            name: s.name.clone(),
            points: s.points.iter().map(|p| (p.value, pick(p))).collect(),
        })
        .collect();
    let chart = svg::line_chart(&config.name, &x_label, y_label, &series);
    fs::write(out_dir.join("plot.svg"), chart)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SweepSpec;

    fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            name: "tiny".into(),
            topology: TopologyConfig::Line { nodes: 3 },
            radio: RadioParams::lossless(),
            patch_bytes: 72,
            runs: 3,
            seed: 5,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn single_point_run_produces_files() {
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment(&tiny_config(), dir.path(), 2).unwrap();
        assert_eq!(outcome.series.len(), 1);
        assert_eq!(outcome.series[0].points.len(), 1);
        assert_eq!(outcome.series[0].points[0].metrics.reliability, 1.0);
        for file in [
            "config_echo.txt",
            "raw_cidp_N3.csv",
            "cdf_pooled_cidp_N3.csv",
            "cdf_runs_cidp_N3.csv",
            "aggregate_cidp.csv",
            "plot.svg",
        ] {
            assert!(dir.path().join(file).exists(), "missing {file}");
        }
    }

    #[test]
    fn l_sweep_runs_both_series() {
        let mut config = tiny_config();
        config.sweep = Some(SweepSpec {
            variable: SweepVariable::L,
            values: vec![8.0, 72.0],
        });
        let dir = tempfile::tempdir().unwrap();
        let outcome = run_experiment(&config, dir.path(), 2).unwrap();
        assert_eq!(outcome.series.len(), 2);
        assert_eq!(outcome.series[0].name, "cidp");
        assert_eq!(outcome.series[1].name, "glossy");
        // Fragmented mode splits 72 bytes into two packets; the
        // unfragmented baseline always ships one.
        assert_eq!(outcome.series[0].points[1].m, 2);
        assert_eq!(outcome.series[1].points[1].m, 1);
        assert!(dir.path().join("aggregate_glossy.csv").exists());
    }

    #[test]
    fn reruns_are_byte_identical_across_worker_counts() {
        let mut config = tiny_config();
        config.topology = TopologyConfig::Rgg {
            nodes: 12,
            radius: 1.0,
            side: 2.0,
        };
        config.radio = RadioParams::default();
        config.runs = 10;
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        run_experiment(&config, dir1.path(), 1).unwrap();
        run_experiment(&config, dir2.path(), 4).unwrap();
        for entry in std::fs::read_dir(dir1.path()).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir1.path().join(&name)).unwrap();
            let b = std::fs::read(dir2.path().join(&name)).unwrap();
            assert_eq!(a, b, "file {name:?} differs across worker counts");
        }
    }

    #[test]
    fn min_node_trials_raises_runs() {
        let mut config = tiny_config();
        config.min_node_trials = Some(100);
        let plan = plan_point(&config, None, 0.0, false).unwrap();
        assert_eq!(plan.runs, 50); // 100 trials / 2 relays
    }

    #[test]
    fn synthetic_object_is_stable() {
        assert_eq!(synthetic_object(1, 128), synthetic_object(1, 128));
        assert_ne!(synthetic_object(1, 128), synthetic_object(2, 128));
    }
}
