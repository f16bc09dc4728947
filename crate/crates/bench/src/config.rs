//! Experiment configuration: flat key=value files, topology spec strings,
//! and sweep definitions. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cidp_core::framing::{DEFAULT_L_PKT, DEFAULT_PHY_OVERHEAD};
use cidp_core::simnet::{RadioParams, TopologySpec};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("bad value for '{key}': {reason}")]
    BadValue { key: String, reason: String },
    #[error("bad topology spec '{0}'")]
    BadTopology(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(PathBuf),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("config line {line}: expected key = value")]
    BadLine { line: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TopologyConfig {
    Line { nodes: usize },
    Grid { rows: usize, cols: usize, radius: f64 },
    Rgg { nodes: usize, radius: f64, side: f64 },
}

impl TopologyConfig {
    pub fn nodes(&self) -> usize {
        match *self {
            TopologyConfig::Line { nodes } => nodes,
            TopologyConfig::Grid { rows, cols, .. } => rows * cols,
            TopologyConfig::Rgg { nodes, .. } => nodes,
        }
    }

    pub fn to_spec(&self) -> TopologySpec {
        match *self {
            TopologyConfig::Line { nodes } => TopologySpec::Line { nodes },
            TopologyConfig::Grid { rows, cols, radius } => TopologySpec::Grid { rows, cols, radius },
            TopologyConfig::Rgg { nodes, radius, side } => TopologySpec::Rgg { nodes, radius, side },
        }
    }

    /// Same topology class resized to `n` nodes. RGG keeps node density
    /// constant by scaling the region side with sqrt(n).
    pub fn with_nodes(&self, n: usize) -> TopologyConfig {
        match *self {
            TopologyConfig::Line { .. } => TopologyConfig::Line { nodes: n },
            TopologyConfig::Grid { cols, radius, .. } => TopologyConfig::Grid {
                rows: n.div_ceil(cols),
                cols,
                radius,
            },
            TopologyConfig::Rgg { nodes, radius, side } => TopologyConfig::Rgg {
                nodes: n,
                radius,
                side: side * (n as f64 / nodes as f64).sqrt(),
            },
        }
    }

    /// Grammar: `line:K`, `grid:RxC[:r=F]`, `rgg:n=N,r=F,side=F`.
    pub fn parse(s: &str) -> Result<TopologyConfig, ConfigError> {
        let bad = || ConfigError::BadTopology(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "line" => {
                let nodes: usize = rest.parse().map_err(|_| bad())?;
                if nodes == 0 {
                    return Err(bad());
                }
                Ok(TopologyConfig::Line { nodes })
            }
            "grid" => {
                let (dims, radius) = match rest.split_once(':') {
                    Some((d, r)) => {
                        let r = r.strip_prefix("r=").ok_or_else(bad)?;
                        (d, r.parse().map_err(|_| bad())?)
                    }
                    None => (rest, 1.0),
                };
                let (rows, cols) = dims.split_once('x').ok_or_else(bad)?;
                let rows: usize = rows.parse().map_err(|_| bad())?;
                let cols: usize = cols.parse().map_err(|_| bad())?;
                if rows == 0 || cols == 0 || radius <= 0.0 {
                    return Err(bad());
                }
                Ok(TopologyConfig::Grid { rows, cols, radius })
            }
            "rgg" => {
                let mut nodes = None;
                let mut radius = None;
                let mut side = None;
                for field in rest.split(',') {
                    let (k, v) = field.split_once('=').ok_or_else(bad)?;
                    match k {
                        "n" => nodes = Some(v.parse().map_err(|_| bad())?),
                        "r" => radius = Some(v.parse().map_err(|_| bad())?),
                        "side" => side = Some(v.parse().map_err(|_| bad())?),
                        _ => return Err(bad()),
                    }
                }
                let (nodes, radius, side) = (
                    nodes.ok_or_else(bad)?,
                    radius.ok_or_else(bad)?,
                    side.ok_or_else(bad)?,
                );
                if nodes == 0 || radius <= 0.0 || side <= 0.0 {
                    return Err(bad());
                }
                Ok(TopologyConfig::Rgg { nodes, radius, side })
            }
            _ => Err(bad()),
        }
    }

    pub fn display(&self) -> String {
        match *self {
            TopologyConfig::Line { nodes } => format!("line:{nodes}"),
            TopologyConfig::Grid { rows, cols, radius } => format!("grid:{rows}x{cols}:r={radius}"),
            TopologyConfig::Rgg { nodes, radius, side } => {
                format!("rgg:n={nodes},r={radius},side={side}")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepVariable {
    N,
    L,
    NMax,
    EpsByte,
    SigmaJitter,
}

impl SweepVariable {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepVariable::N => "N",
            SweepVariable::L => "L",
            SweepVariable::NMax => "n_max",
            SweepVariable::EpsByte => "eps_byte",
            SweepVariable::SigmaJitter => "sigma_jitter",
        }
    }

    fn parse(s: &str) -> Option<SweepVariable> {
        match s {
            "N" => Some(SweepVariable::N),
            "L" => Some(SweepVariable::L),
            "n_max" => Some(SweepVariable::NMax),
            "eps_byte" => Some(SweepVariable::EpsByte),
            "sigma_jitter" => Some(SweepVariable::SigmaJitter),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |reason: &str| ConfigError::BadValue {
            key: "sweep_values".into(),
            reason: reason.into(),
        };
        if self.values.is_empty() {
            return Err(bad("empty value list"));
        }
        for &v in &self.values {
            let ok = match self.variable {
                SweepVariable::N => v >= 2.0 && v.fract() == 0.0,
                SweepVariable::L => v >= 1.0 && v <= u16::MAX as f64 && v.fract() == 0.0,
                SweepVariable::NMax => (1.0..=255.0).contains(&v) && v.fract() == 0.0,
                SweepVariable::EpsByte => (0.0..=1.0).contains(&v),
                SweepVariable::SigmaJitter => v >= 0.0,
            };
            if !ok {
                return Err(bad(&format!(
                    "{v} invalid for {}",
                    self.variable.as_str()
                )));
            }
        }
        Ok(())
    }
}

/// Which aggregate the plot shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotMetric {
    Reliability,
    Latency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub topology: TopologyConfig,
    pub radio: RadioParams,
    pub l_pkt: usize,
    pub phy_overhead: usize,
    pub patch_bytes: usize,
    pub patch_file: Option<PathBuf>,
    pub runs: usize,
    /// When set, runs per point are raised until non-initiator node trials
    /// reach this count.
    pub min_node_trials: Option<usize>,
    pub seed: u64,
    pub n_max_override: Option<u8>,
    pub nmax_floor: bool,
    pub t_round_slots: Option<u64>,
    pub glossy_mode: bool,
    pub sweep: Option<SweepSpec>,
    pub plot: PlotMetric,
    /// Free-form provenance note copied into the config echo.
    pub note: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: "custom".into(),
            topology: TopologyConfig::Rgg {
                nodes: 94,
                radius: 1.0,
                side: 4.5,
            },
            radio: RadioParams::default(),
            l_pkt: DEFAULT_L_PKT,
            phy_overhead: DEFAULT_PHY_OVERHEAD,
            patch_bytes: 128,
            patch_file: None,
            runs: 50,
            min_node_trials: None,
            seed: 1,
            n_max_override: None,
            nmax_floor: false,
            t_round_slots: None,
            glossy_mode: false,
            sweep: None,
            plot: PlotMetric::Reliability,
            note: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.runs == 0 && self.min_node_trials.is_none() {
            return Err(ConfigError::BadValue {
                key: "runs".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.l_pkt == 0 {
            return Err(ConfigError::BadValue {
                key: "l_pkt".into(),
                reason: "must be at least 1".into(),
            });
        }
        if self.patch_file.is_none() && self.patch_bytes == 0 {
            return Err(ConfigError::BadValue {
                key: "patch_bytes".into(),
                reason: "must be at least 1".into(),
            });
        }
        if let Some(path) = &self.patch_file {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.clone()));
            }
        }
        if let Some(sweep) = &self.sweep {
            sweep.validate()?;
        }
        self.radio
            .validate()
            .map_err(|e| ConfigError::BadValue {
                key: "radio".into(),
                reason: e.to_string(),
            })?;
        Ok(())
    }

    /// Parse the flat key=value format. Lines starting with `#` and blank
    /// lines are skipped; any unknown key is an error.
    pub fn from_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut map: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::BadLine { line: i + 1 })?;
            map.insert(
                key.trim().to_string(),
                (i + 1, value.trim().to_string()),
            );
        }
        let mut config = ExperimentConfig::default();
        let mut sweep_variable: Option<SweepVariable> = None;
        let mut sweep_values: Option<Vec<f64>> = None;

        for (key, (_, value)) in &map {
            let bad = |reason: String| ConfigError::BadValue {
                key: key.clone(),
                reason,
            };
            match key.as_str() {
                "name" => config.name = value.clone(),
                "topology" => config.topology = TopologyConfig::parse(value)?,
                "runs" => config.runs = value.parse().map_err(|e| bad(format!("{e}")))?,
                "min_node_trials" => {
                    config.min_node_trials =
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "seed" => config.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
                "patch_bytes" => {
                    config.patch_bytes = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "patch_file" => config.patch_file = Some(PathBuf::from(value)),
                "l_pkt" => config.l_pkt = value.parse().map_err(|e| bad(format!("{e}")))?,
                "phy_overhead" => {
                    config.phy_overhead = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "t_byte_us" => {
                    config.radio.t_byte = parse_us_ns(value).map_err(bad)?;
                }
                "t_proc_us" => {
                    config.radio.t_proc = parse_us_ns(value).map_err(bad)?;
                }
                "sigma_jitter_us" => {
                    let us: f64 = value.parse().map_err(|e| bad(format!("{e}")))?;
                    config.radio.sigma_jitter_ns = us * 1000.0;
                }
                "eps_byte" => {
                    config.radio.eps_byte = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "n_max" => {
                    config.n_max_override =
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "nmax_floor" => {
                    config.nmax_floor = parse_bool(value).map_err(bad)?;
                }
                "t_round_slots" => {
                    config.t_round_slots =
                        Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                }
                "glossy_mode" => {
                    config.glossy_mode = parse_bool(value).map_err(bad)?;
                }
                "sweep" => {
                    sweep_variable = Some(
                        SweepVariable::parse(value)
                            .ok_or_else(|| bad(format!("unknown sweep variable '{value}'")))?,
                    )
                }
                "sweep_values" => {
                    let values: Result<Vec<f64>, _> =
                        value.split(',').map(|v| v.trim().parse()).collect();
                    sweep_values = Some(values.map_err(|e| bad(format!("{e}")))?);
                }
                "plot" => {
                    config.plot = match value.as_str() {
                        "reliability" => PlotMetric::Reliability,
                        "latency" => PlotMetric::Latency,
                        other => return Err(bad(format!("unknown plot metric '{other}'"))),
                    }
                }
                "note" => config.note = Some(value.clone()),
                other => return Err(ConfigError::UnknownKey(other.to_string())),
            }
        }
        config.sweep = match (sweep_variable, sweep_values) {
            (Some(variable), Some(values)) => Some(SweepSpec { variable, values }),
            (None, None) => None,
            _ => {
                return Err(ConfigError::BadValue {
                    key: "sweep".into(),
                    reason: "sweep and sweep_values must appear together".into(),
                })
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_str(&text)
    }

    /// Human-readable echo of every resolved setting, written alongside
    /// the experiment outputs so a run can be reproduced exactly.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("name = {}\n", self.name));
        if let Some(note) = &self.note {
            out.push_str(&format!("note = {note}\n"));
        }
        out.push_str(&format!("topology = {}\n", self.topology.display()));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("runs = {}\n", self.runs));
        if let Some(t) = self.min_node_trials {
            out.push_str(&format!("min_node_trials = {t}\n"));
        }
        match &self.patch_file {
            Some(p) => out.push_str(&format!("patch_file = {}\n", p.display())),
            None => out.push_str(&format!("patch_bytes = {}\n", self.patch_bytes)),
        }
        out.push_str(&format!("l_pkt = {}\n", self.l_pkt));
        out.push_str(&format!("phy_overhead = {}\n", self.phy_overhead));
        out.push_str(&format!(
            "t_byte_us = {}\n",
            self.radio.t_byte as f64 / 1000.0
        ));
        out.push_str(&format!(
            "t_proc_us = {}\n",
            self.radio.t_proc as f64 / 1000.0
        ));
        out.push_str(&format!(
            "sigma_jitter_us = {}\n",
            self.radio.sigma_jitter_ns / 1000.0
        ));
        out.push_str(&format!("eps_byte = {:.9}\n", self.radio.eps_byte));
        if let Some(n) = self.n_max_override {
            out.push_str(&format!("n_max = {n}\n"));
        }
        out.push_str(&format!("nmax_floor = {}\n", self.nmax_floor));
        if let Some(s) = self.t_round_slots {
            out.push_str(&format!("t_round_slots = {s}\n"));
        }
        out.push_str(&format!("glossy_mode = {}\n", self.glossy_mode));
        if let Some(sweep) = &self.sweep {
            out.push_str(&format!("sweep = {}\n", sweep.variable.as_str()));
            let values: Vec<String> = sweep.values.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("sweep_values = {}\n", values.join(",")));
        }
        out.push_str(&format!(
            "plot = {}\n",
            match self.plot {
                PlotMetric::Reliability => "reliability",
                PlotMetric::Latency => "latency",
            }
        ));
        out
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected boolean, got '{other}'")),
    }
}

/// Microseconds (possibly fractional) to integer nanoseconds.
fn parse_us_ns(s: &str) -> Result<u64, String> {
    let us: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if !(us > 0.0) {
        return Err("duration must be positive".into());
    }
    Ok((us * 1000.0).round() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_topology_specs() {
        assert_eq!(
            TopologyConfig::parse("line:3").unwrap(),
            TopologyConfig::Line { nodes: 3 }
        );
        assert_eq!(
            TopologyConfig::parse("grid:4x5:r=1.5").unwrap(),
            TopologyConfig::Grid { rows: 4, cols: 5, radius: 1.5 }
        );
        assert_eq!(
            TopologyConfig::parse("rgg:n=94,r=1.0,side=4.5").unwrap(),
            TopologyConfig::Rgg { nodes: 94, radius: 1.0, side: 4.5 }
        );
        assert!(TopologyConfig::parse("ring:9").is_err());
        assert!(TopologyConfig::parse("line:0").is_err());
    }

    #[test]
    fn rgg_resize_keeps_density() {
        let base = TopologyConfig::Rgg { nodes: 94, radius: 1.0, side: 4.5 };
        if let TopologyConfig::Rgg { nodes, side, .. } = base.with_nodes(47) {
            assert_eq!(nodes, 47);
            let density_base = 94.0 / (4.5f64 * 4.5);
            let density_new = 47.0 / (side * side);
            assert!((density_base - density_new).abs() < 1e-9);
        } else {
            panic!("expected rgg");
        }
    }

    #[test]
    fn parses_full_config() {
        let text = "\
# example
topology = rgg:n=40,r=1.0,side=3.0
runs = 10
seed = 7
patch_bytes = 128
eps_byte = 0.002
sweep = N
sweep_values = 20, 40
plot = reliability
";
        let config = ExperimentConfig::from_str(text).unwrap();
        assert_eq!(config.runs, 10);
        assert_eq!(config.seed, 7);
        assert_eq!(config.radio.eps_byte, 0.002);
        let sweep = config.sweep.unwrap();
        assert_eq!(sweep.variable, SweepVariable::N);
        assert_eq!(sweep.values, vec![20.0, 40.0]);
    }

    #[test]
    fn rejects_unknown_key() {
        let err = ExperimentConfig::from_str("bogus_key = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::UnknownKey(k) if k == "bogus_key"));
    }

    #[test]
    fn rejects_sweep_without_values() {
        let err = ExperimentConfig::from_str("sweep = N\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }

    #[test]
    fn rejects_missing_patch_file() {
        let err =
            ExperimentConfig::from_str("patch_file = /does/not/exist.bin\n").unwrap_err();
        assert!(matches!(err, ConfigError::MissingFile(_)));
    }

    #[test]
    fn rejects_bad_sweep_values() {
        let err = ExperimentConfig::from_str("sweep = N\nsweep_values = 1\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
        let err =
            ExperimentConfig::from_str("sweep = eps_byte\nsweep_values = 1.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::BadValue { .. }));
    }

    #[test]
    fn echo_round_trips() {
        let text = "\
topology = grid:3x4:r=1
runs = 5
seed = 3
patch_bytes = 72
nmax_floor = true
";
        let config = ExperimentConfig::from_str(text).unwrap();
        let echoed = ExperimentConfig::from_str(&config.echo()).unwrap();
        assert_eq!(config, echoed);
    }
}
