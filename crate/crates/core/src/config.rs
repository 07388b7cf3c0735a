//! Experiment configuration: a TOML document describing one scenario plus
//! run bookkeeping, and the built-in presets.
//!
//! Grammar (see `docs/config.md` for the full reference):
//!
//! ```toml
//! name = "setting-I"          # optional
//! nodes = 3                   # N
//! dim = 3                     # n
//! seed = 42
//! runs = 10                   # >= 1
//! horizon = 100000            # >= 0
//! record_every = 100          # CSV row stride, default 1
//! x0 = [5.0, 4.0, 3.0]
//! initial = [[12.0, 11.0, 6.0], [10.0, 16.0, 8.0], [14.0, 16.0, 13.0]]
//!
//! [graph]                     # kind = fixed | alternating-uniform | iid-uniform | markov-switching
//! [regression]                # frozen = bool, [regression.model] kind = ...
//! [noise]                     # measurement_std, channel_std, sigma_f, b_f
//! [gains]                     # form = power-law | tabulated
//! [audit]                     # h, windows, theta1, theta2, rho0, tau, mc_samples
//! [output]                    # dir
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::Scenario;
use crate::gains::{GainSchedule, PowerLaw};
use crate::graph::GraphProcess;
use crate::matrix::Matrix;
use crate::noise::{ChannelNoise, MeasurementNoise, NoiseIntensity};
use crate::regression::{RegressionModel, RegressionProcess};

/// Noise parameters. A zero standard deviation switches the component off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub measurement_std: f64,
    pub channel_std: f64,
    pub sigma_f: f64,
    pub b_f: f64,
}

fn default_h() -> usize {
    2
}

fn default_windows() -> usize {
    50
}

fn default_tau() -> f64 {
    0.6
}

fn default_stride() -> usize {
    1
}

fn is_one(v: &usize) -> bool {
    *v == 1
}

/// Settings for the excitation audit and the regret normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_h")]
    pub h: usize,
    /// Number of windows `k = 0..windows` examined.
    #[serde(default = "default_windows")]
    pub windows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho0: Option<f64>,
    #[serde(default = "default_tau")]
    pub tau: f64,
    /// Use Monte Carlo conditional expectations with this many samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_samples: Option<usize>,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            h: default_h(),
            windows: default_windows(),
            theta1: None,
            theta2: None,
            rho0: None,
            tau: default_tau(),
            mc_samples: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Falls back to `$DORL_OUT_DIR`, then `out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

/// A complete experiment. Field order matters for rendering: plain values
/// precede tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub nodes: usize,
    pub dim: usize,
    pub seed: u64,
    pub runs: usize,
    pub horizon: usize,
    #[serde(default = "default_stride", skip_serializing_if = "is_one")]
    pub record_every: usize,
    pub x0: Vec<f64>,
    pub initial: Vec<Vec<f64>>,
    pub graph: GraphProcess,
    pub regression: RegressionProcess,
    pub noise: NoiseConfig,
    pub gains: GainSchedule,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default, skip_serializing_if = "is_default_output")]
    pub output: OutputConfig,
}

fn is_default_output(o: &OutputConfig) -> bool {
    o.dir.is_none()
}

fn config_err(text: Option<&str>, key: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line: text.and_then(|t| locate(t, key)),
        message: message.into(),
    }
}

/// Line (1-based) where `key` is assigned or opened as a table.
fn locate(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (Some(t), l),
        None => (None, key),
    };
    let mut current: Option<String> = None;
    let mut table_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_start();
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest.trim_start_matches('[').split(']').next().unwrap_or("").trim().to_string();
            if Some(name.as_str()) == Some(key) {
                return Some(i + 1);
            }
            if Some(name.as_str()) == table && table_line.is_none() {
                table_line = Some(i + 1);
            }
            current = Some(name);
            continue;
        }
        let in_scope = current.as_deref() == table;
        if in_scope {
            if let Some(rest) = line.strip_prefix(leaf) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    table_line
}

impl ExperimentConfig {
    /// Builds the simulation scenario described by this config.
    pub fn scenario(&self) -> Result<Scenario> {
        let law = |std: f64| {
            if std == 0.0 {
                crate::noise::NoiseLaw::Zero
            } else {
                crate::noise::NoiseLaw::Gaussian { std }
            }
        };
        Ok(Scenario {
            x0: self.x0.clone(),
            initial: self.initial.clone(),
            graph: self.graph.clone(),
            regression: self.regression.clone(),
            measurement_noise: MeasurementNoise(law(self.noise.measurement_std)),
            channel_noise: ChannelNoise(law(self.noise.channel_std)),
            intensity: NoiseIntensity::new(self.noise.sigma_f, self.noise.b_f)?,
            gains: self.gains.clone(),
        })
    }

    /// Checks value ranges and dimensions. `text` is used only to attach
    /// line numbers.
    pub fn validate_with_source(&self, text: Option<&str>) -> Result<()> {
        if self.runs < 1 {
            return Err(config_err(text, "runs", "runs must be at least 1"));
        }
        if self.record_every < 1 {
            return Err(config_err(text, "record_every", "record_every must be at least 1"));
        }
        if self.nodes == 0 {
            return Err(config_err(text, "nodes", "nodes must be at least 1"));
        }
        if self.dim == 0 {
            return Err(config_err(text, "dim", "dim must be at least 1"));
        }
        if self.x0.len() != self.dim {
            return Err(config_err(
                text,
                "x0",
                format!("x0 has {} entries, dim is {}", self.x0.len(), self.dim),
            ));
        }
        if self.initial.len() != self.nodes {
            return Err(config_err(
                text,
                "initial",
                format!("initial has {} rows, nodes is {}", self.initial.len(), self.nodes),
            ));
        }
        if let Some(i) = self.initial.iter().position(|x| x.len() != self.dim) {
            return Err(config_err(
                text,
                "initial",
                format!("initial row {i} has {} entries, dim is {}", self.initial[i].len(), self.dim),
            ));
        }
        if let Err(e) = self.graph.validate() {
            return Err(config_err(text, "graph", format!("graph: {e}")));
        }
        if self.graph.nodes() != self.nodes {
            return Err(config_err(
                text,
                "graph",
                format!("graph has {} nodes, nodes is {}", self.graph.nodes(), self.nodes),
            ));
        }
        if let Err(e) = self.regression.validate() {
            return Err(config_err(text, "regression", format!("regression: {e}")));
        }
        if self.regression.nodes() != self.nodes || self.regression.dim() != self.dim {
            return Err(config_err(
                text,
                "regression",
                format!(
                    "regression is {} nodes x dim {}, expected {} x {}",
                    self.regression.nodes(),
                    self.regression.dim(),
                    self.nodes,
                    self.dim
                ),
            ));
        }
        let n = &self.noise;
        for (key, v) in [
            ("noise.measurement_std", n.measurement_std),
            ("noise.channel_std", n.channel_std),
            ("noise.sigma_f", n.sigma_f),
            ("noise.b_f", n.b_f),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(config_err(text, key, format!("{key} must be finite and >= 0, got {v}")));
            }
        }
        if let Err(e) = self.gains.validate() {
            return Err(config_err(text, "gains", format!("gains: {e}")));
        }
        let a = &self.audit;
        if a.h < 1 {
            return Err(config_err(text, "audit.h", "audit.h must be at least 1"));
        }
        if !(a.tau > 0.0 && a.tau < 1.0) {
            return Err(config_err(text, "audit.tau", format!("audit.tau must lie in (0, 1), got {}", a.tau)));
        }
        for (key, v) in [("audit.theta1", a.theta1), ("audit.theta2", a.theta2), ("audit.rho0", a.rho0)] {
            if let Some(v) = v {
                if !v.is_finite() || v <= 0.0 {
                    return Err(config_err(text, key, format!("{key} must be positive, got {v}")));
                }
            }
        }
        if a.mc_samples == Some(0) {
            return Err(config_err(text, "audit.mc_samples", "audit.mc_samples must be positive"));
        }
        if let Err(e) = self.scenario().and_then(|s| s.validate()) {
            return Err(config_err(text, "x0", e.to_string()));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with_source(None)
    }

    /// Serializes to the config grammar. `parse_config(render())` returns an
    /// equal config.
    pub fn render(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            line: None,
            message: format!("cannot render config: {e}"),
        })
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output
            .dir
            .clone()
            .or_else(|| std::env::var_os("DORL_OUT_DIR").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1),
        message: e.message().trim().to_string(),
    })?;
    cfg.validate_with_source(Some(text))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

/// Resolves a preset name first, then a file path.
pub fn resolve_config(name_or_path: &str) -> Result<ExperimentConfig> {
    match preset(name_or_path) {
        Some(cfg) => Ok(cfg),
        None => load_config(Path::new(name_or_path)),
    }
}

/// A built-in configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const PRESETS: [PresetInfo; 7] = [
    PresetInfo {
        name: "setting-I",
        description: "a = b = (k+1)^-0.6, lambda = (k+1)^-2",
    },
    PresetInfo {
        name: "setting-II",
        description: "a = b = (k+1)^-0.6, lambda = (k+1)^-3",
    },
    PresetInfo {
        name: "setting-III",
        description: "a = b = (k+1)^-0.8, lambda = (k+1)^-2",
    },
    PresetInfo {
        name: "setting-IV",
        description: "a = b = (k+1)^-0.8, lambda = (k+1)^-3",
    },
    PresetInfo {
        name: "setting-V",
        description: "a = b = (k+1)^-0.6, no regularization",
    },
    PresetInfo {
        name: "setting-VI",
        description: "a = b = (k+1)^-0.8, no regularization",
    },
    PresetInfo {
        name: "regret",
        description: "a = b = 0.1(k+1)^-0.6, lambda = 0.2(k+1)^-1.2, MAR with tau = 0.6",
    },
];

/// The three-node network with alternating random links and uniformly
/// perturbed sparse regressors.
pub fn three_node_graph() -> GraphProcess {
    GraphProcess::AlternatingUniform {
        nodes: 3,
        even: [0.0, 1.0],
        odd: [-0.5, 0.5],
    }
}

pub fn three_node_regression() -> RegressionProcess {
    let z23 = Matrix::zeros(2, 3);
    let z33 = Matrix::zeros(3, 3);
    let (mut o1, mut s1) = (z23.clone(), z23);
    o1[(1, 0)] = 0.5;
    s1[(1, 0)] = 1.0;
    let (mut o2, mut s2) = (z33.clone(), z33.clone());
    o2[(0, 1)] = -0.5;
    s2[(0, 1)] = -1.0;
    o2[(2, 0)] = 0.5;
    s2[(2, 0)] = 1.0;
    let (mut o3, mut s3) = (z33.clone(), z33);
    o3[(0, 2)] = 0.5;
    s3[(0, 2)] = 1.0;
    RegressionProcess::new(RegressionModel::EntrywiseUniform {
        offset: vec![o1, o2, o3],
        scale: vec![s1, s2, s3],
    })
}

fn three_node_config(name: &str, gains: GainSchedule, runs: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(name.to_string()),
        nodes: 3,
        dim: 3,
        seed: 42,
        runs,
        horizon: 100_000,
        record_every: 100,
        x0: vec![5.0, 4.0, 3.0],
        initial: vec![vec![12.0, 11.0, 6.0], vec![10.0, 16.0, 8.0], vec![14.0, 16.0, 13.0]],
        graph: three_node_graph(),
        regression: three_node_regression(),
        noise: NoiseConfig {
            measurement_std: 1.0,
            channel_std: 1.0,
            sigma_f: 0.1,
            b_f: 0.1,
        },
        gains,
        audit: AuditConfig {
            theta1: Some(0.5),
            theta2: Some(0.2),
            rho0: Some(5.0),
            ..AuditConfig::default()
        },
        output: OutputConfig::default(),
    }
}

fn equal_gains(tau: f64, lambda: PowerLaw) -> GainSchedule {
    GainSchedule::power_law(PowerLaw::new(1.0, tau), PowerLaw::new(1.0, tau), lambda)
}

/// Looks up a built-in config by name.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let reg = |t| PowerLaw::new(1.0, t);
    let cfg = match name {
        "setting-I" => three_node_config(name, equal_gains(0.6, reg(2.0)), 10),
        "setting-II" => three_node_config(name, equal_gains(0.6, reg(3.0)), 10),
        "setting-III" => three_node_config(name, equal_gains(0.8, reg(2.0)), 10),
        "setting-IV" => three_node_config(name, equal_gains(0.8, reg(3.0)), 10),
        "setting-V" => three_node_config(name, equal_gains(0.6, PowerLaw::ZERO), 10),
        "setting-VI" => three_node_config(name, equal_gains(0.8, PowerLaw::ZERO), 10),
        "regret" => three_node_config(
            name,
            GainSchedule::power_law(PowerLaw::new(0.1, 0.6), PowerLaw::new(0.1, 0.6), PowerLaw::new(0.2, 1.2)),
            50,
        ),
        _ => return None,
    };
    Some(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for p in PRESETS {
            let cfg = preset(p.name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.render().unwrap();
            let back = parse_config(&text).unwrap();
            assert_eq!(back, cfg, "{}", p.name);
        }
    }

    #[test]
    fn setting_one_matches_table_row() {
        let cfg = preset("setting-I").unwrap();
        assert_eq!(
            cfg.gains,
            GainSchedule::power_law(PowerLaw::new(1.0, 0.6), PowerLaw::new(1.0, 0.6), PowerLaw::new(1.0, 2.0))
        );
        assert!(preset("setting-VII").is_none());
    }

    fn without_line(text: &str, key: &str) -> String {
        text.lines()
            .filter(|l| !l.starts_with(&format!("{key} =")))
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn missing_x0_names_the_field() {
        let text = without_line(&preset("setting-I").unwrap().render().unwrap(), "x0");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("x0"), "{err}");
    }

    #[test]
    fn negative_and_zero_runs_rejected() {
        let text = preset("setting-I").unwrap().render().unwrap();
        let neg = text.replace("runs = 10", "runs = -1");
        let err = parse_config(&neg).unwrap_err();
        assert!(matches!(err, Error::Config { line: Some(_), .. }), "{err}");
        let zero = text.replace("runs = 10", "runs = 0");
        let err = parse_config(&zero).unwrap_err();
        let line = zero.lines().position(|l| l.starts_with("runs")).unwrap() + 1;
        assert!(matches!(err, Error::Config { line: Some(l), .. } if l == line), "{err}");
    }

    #[test]
    fn unknown_key_reports_line() {
        let text = preset("setting-I").unwrap().render().unwrap();
        let bad = text.replace("[noise]\n", "[noise]\nstd = 3.0\n");
        let line = bad.lines().position(|l| l.starts_with("std = 3.0")).unwrap() + 1;
        match parse_config(&bad).unwrap_err() {
            Error::Config { line: Some(l), message } => {
                assert_eq!(l, line);
                assert!(message.contains("std"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut cfg = preset("setting-II").unwrap();
        cfg.x0.push(1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = preset("setting-II").unwrap();
        cfg.dim = 4;
        let text = cfg.render().unwrap();
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("x0"), "{err}");
    }

    #[test]
    fn bad_distribution_bounds_rejected() {
        let mut cfg = preset("setting-I").unwrap();
        cfg.graph = GraphProcess::IidUniform { lo: Matrix::from_rows(&[[1.0; 3]; 3]).unwrap(), hi: Matrix::zeros(3, 3) };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("graph"), "{err}");
    }

    #[test]
    fn scenario_uses_gaussian_noise() {
        let s = preset("regret").unwrap().scenario().unwrap();
        assert_eq!(s.measurement_noise, MeasurementNoise::gaussian(1.0));
        assert_eq!(s.intensity, NoiseIntensity::new(0.1, 0.1).unwrap());
    }

    #[test]
    fn helper_regression_matches_module_fixture() {
        assert_eq!(three_node_regression(), crate::regression::tests::three_node_uniform());
    }

    #[test]
    fn locate_finds_nested_keys() {
        let text = "a = 1\n[noise]\nb_f = 2\n[audit]\nh = 0\n";
        assert_eq!(locate(text, "a"), Some(1));
        assert_eq!(locate(text, "noise.b_f"), Some(3));
        assert_eq!(locate(text, "audit.h"), Some(5));
        assert_eq!(locate(text, "audit"), Some(4));
        assert_eq!(locate(text, "audit.tau"), Some(4));
    }
}
