//! Reliability and latency aggregation over run results.
//!
//! Reliability counts non-initiator (node, run) pairs that completed the
//! whole object; the all-nodes-per-run reading is reported alongside.
//! Latency samples are completion times of delivered nodes. The raw CSV
//! schema is one row per (run, node):
//!
//! ```text
//! seed,node,hops,delivered,completion_us,pk1_us,...,pkM_us
//! ```
//!
//! with absent times left empty. Times are emitted in microseconds with
//! exact decimal rendering of the underlying nanosecond values.

use super::engine::RunResult;
use super::Error;
use crate::protocol::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub samples: usize,
    pub mean_us: f64,
    pub stderr_us: f64,
    pub p50_us: f64,
    pub p90_us: f64,
    pub p99_us: f64,
    pub min_us: f64,
    pub max_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    /// Non-initiator (node, run) pairs observed.
    pub node_trials: usize,
    pub delivered_trials: usize,
    /// delivered_trials / node_trials.
    pub reliability: f64,
    /// Binomial standard error of `reliability`.
    pub rel_stderr: f64,
    /// Fraction of runs in which every non-initiator node completed.
    pub runs_all_complete: f64,
    /// Per sequence number: fraction of node trials that received it.
    pub per_packet_reliability: Vec<f64>,
    pub latency: LatencyStats,
}

pub fn compute_metrics(results: &[RunResult]) -> Result<Metrics, Error> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = results[0].m as usize;
    let mut node_trials = 0usize;
    let mut delivered_trials = 0usize;
    let mut complete_runs = 0usize;
    let mut packet_hits = vec![0usize; m];
    let mut latencies_ns: Vec<SimTime> = Vec::new();

    for run in results {
        let mut run_complete = true;
        for node in run.nodes.iter().skip(1) {
            node_trials += 1;
            if node.delivered {
                delivered_trials += 1;
                if let Some(t) = node.completion_ns {
                    latencies_ns.push(t);
                }
            } else {
                run_complete = false;
            }
            for (k, rx) in node.first_rx_ns.iter().enumerate() {
                if k < m && rx.is_some() {
                    packet_hits[k] += 1;
                }
            }
        }
        if run_complete {
            complete_runs += 1;
        }
    }
    if node_trials == 0 {
        return Err(Error::EmptyInput);
    }
    let reliability = delivered_trials as f64 / node_trials as f64;
    let rel_stderr = (reliability * (1.0 - reliability) / node_trials as f64).sqrt();
    let per_packet_reliability = packet_hits
        .iter()
        .map(|&h| h as f64 / node_trials as f64)
        .collect();

    latencies_ns.sort_unstable();
    let latency = latency_stats(&latencies_ns);
    Ok(Metrics {
        node_trials,
        delivered_trials,
        reliability,
        rel_stderr,
        runs_all_complete: complete_runs as f64 / results.len() as f64,
        per_packet_reliability,
        latency,
    })
}

fn latency_stats(sorted_ns: &[SimTime]) -> LatencyStats {
    if sorted_ns.is_empty() {
        return LatencyStats {
            samples: 0,
            mean_us: 0.0,
            stderr_us: 0.0,
            p50_us: 0.0,
            p90_us: 0.0,
            p99_us: 0.0,
            min_us: 0.0,
            max_us: 0.0,
        };
    }
    let n = sorted_ns.len();
    let to_us = |ns: SimTime| ns as f64 / 1000.0;
    let mean_ns = sorted_ns.iter().map(|&t| t as f64).sum::<f64>() / n as f64;
    let var_ns = if n > 1 {
        sorted_ns
            .iter()
            .map(|&t| (t as f64 - mean_ns).powi(2))
            .sum::<f64>()
            / (n - 1) as f64
    } else {
        0.0
    };
    LatencyStats {
        samples: n,
        mean_us: mean_ns / 1000.0,
        stderr_us: (var_ns / n as f64).sqrt() / 1000.0,
        p50_us: to_us(quantile(sorted_ns, 0.50)),
        p90_us: to_us(quantile(sorted_ns, 0.90)),
        p99_us: to_us(quantile(sorted_ns, 0.99)),
        min_us: to_us(sorted_ns[0]),
        max_us: to_us(sorted_ns[n - 1]),
    }
}

/// Nearest-rank quantile on a sorted slice.
fn quantile(sorted: &[SimTime], q: f64) -> SimTime {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Pooled empirical CDF of completion times: (time_ns, cumulative share of
/// delivered samples).
pub fn latency_cdf(results: &[RunResult]) -> Vec<(SimTime, f64)> {
    let mut samples: Vec<SimTime> = results
        .iter()
        .flat_map(|r| r.nodes.iter().skip(1))
        .filter_map(|n| n.completion_ns)
        .collect();
    samples.sort_unstable();
    let total = samples.len() as f64;
    let mut out: Vec<(SimTime, f64)> = Vec::new();
    for (i, t) in samples.iter().enumerate() {
        let frac = (i + 1) as f64 / total;
        match out.last_mut() {
            Some(last) if last.0 == *t => last.1 = frac,
            _ => out.push((*t, frac)),
        }
    }
    out
}

/// Exact microsecond rendering of a nanosecond time: integer when whole,
/// otherwise up to three decimals with trailing zeros trimmed.
pub fn format_us(ns: SimTime) -> String {
    let whole = ns / 1000;
    let frac = ns % 1000;
    if frac == 0 {
        format!("{whole}")
    } else {
        let s = format!("{whole}.{frac:03}");
        s.trim_end_matches('0').to_string()
    }
}

pub fn raw_csv_header(m: u8) -> String {
    let mut header = String::from("seed,node,hops,delivered,completion_us");
    for k in 1..=m {
        header.push_str(&format!(",pk{k}_us"));
    }
    header.push('\n');
    header
}

/// One CSV row per node of one run, in node order.
pub fn raw_csv_rows(result: &RunResult) -> String {
    let mut out = String::new();
    for node in &result.nodes {
        out.push_str(&format!(
            "{},{},{},{}",
            result.seed,
            node.node,
            node.hops,
            u8::from(node.delivered)
        ));
        match node.completion_ns {
            Some(t) => out.push_str(&format!(",{}", format_us(t))),
            None => out.push(','),
        }
        for rx in &node.first_rx_ns {
            match rx {
                Some(t) => out.push_str(&format!(",{}", format_us(*t))),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::framing::{fragment, FramingParams};
    use crate::protocol::ProtocolParams;
    use crate::simnet::radio::RadioParams;
    use crate::simnet::topology::{build_topology, TopologySpec};

    fn make_results(runs: u64, nodes: usize, radio: &RadioParams) -> Vec<RunResult> {
        let topo = build_topology(&TopologySpec::Line { nodes }, 0).unwrap();
        let framing = FramingParams::default();
        let packets = fragment(&[1u8; 72], &framing, 1).unwrap();
        let proto = ProtocolParams::for_network(
            2,
            radio.airtime(framing.frame_bytes()) + radio.t_proc,
            radio.t_proc,
            topo.max_hops(),
        );
        (0..runs)
            .map(|seed| {
                crate::simnet::run_dissemination(&topo, radio, &framing, &proto, &packets, seed)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn all_delivered_is_reliability_one() {
        let results = make_results(10, 4, &RadioParams::lossless());
        let metrics = compute_metrics(&results).unwrap();
        assert_eq!(metrics.node_trials, 30);
        assert_eq!(metrics.reliability, 1.0);
        assert_eq!(metrics.runs_all_complete, 1.0);
        assert!(metrics.per_packet_reliability.iter().all(|&p| p == 1.0));
        assert_eq!(metrics.latency.samples, 30);
    }

    #[test]
    fn partial_delivery_counts_node_trials() {
        let mut results = make_results(25, 5, &RadioParams::lossless());
        // Forge one incomplete node-trial out of 100.
        results[0].nodes[4].delivered = false;
        results[0].nodes[4].completion_ns = None;
        let metrics = compute_metrics(&results).unwrap();
        assert_eq!(metrics.node_trials, 100);
        assert_eq!(metrics.delivered_trials, 99);
        assert!((metrics.reliability - 0.99).abs() < 1e-12);
        assert!((metrics.runs_all_complete - 24.0 / 25.0).abs() < 1e-12);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(compute_metrics(&[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn cdf_is_monotone_and_ends_at_one() {
        let results = make_results(8, 5, &RadioParams::lossless());
        let cdf = latency_cdf(&results);
        assert!(!cdf.is_empty());
        for pair in cdf.windows(2) {
            assert!(pair[1].0 > pair[0].0);
            assert!(pair[1].1 > pair[0].1);
        }
        assert!((cdf.last().unwrap().1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantiles_nearest_rank() {
        let sorted = [10, 20, 30, 40];
        assert_eq!(quantile(&sorted, 0.5), 20);
        assert_eq!(quantile(&sorted, 0.9), 40);
        assert_eq!(quantile(&sorted, 0.01), 10);
    }

    #[test]
    fn microsecond_formatting_is_exact() {
        assert_eq!(format_us(1_696_000), "1696");
        assert_eq!(format_us(1_696_500), "1696.5");
        assert_eq!(format_us(1_696_123), "1696.123");
        assert_eq!(format_us(0), "0");
    }

    #[test]
    fn csv_shape_matches_header() {
        let results = make_results(2, 3, &RadioParams::lossless());
        let header = raw_csv_header(results[0].m);
        let cols = header.trim().split(',').count();
        for row in raw_csv_rows(&results[0]).lines() {
            assert_eq!(row.split(',').count(), cols, "row: {row}");
        }
    }
}
