//! Seeded experiment orchestration and artifact persistence.
//!
//! A run writes, under the output directory:
//!
//! | file | content |
//! |---|---|
//! | `config.toml` | the effective config, rendered |
//! | `runs/run-NNNNN.csv` | `step,v,err_1..err_N,norm_1..norm_N` |
//! | `aggregate.csv` | `step,mean_v,se_v,mean_cum_v,mean_norm,se_norm,regret_1..regret_N,mar` |
//! | `excitation.json` | excitation audit and gain conditions |
//! | `manifest.json` | seed, config hash, versions, schema, file hashes |
//!
//! Floats are written as `{:.16e}` (17 significant digits). `mar` is empty
//! for `T < 2`. No timestamps are written, so reruns are byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::estimator::{RunOptions, TrajectoryRecord};
use crate::excitation::{pe_diagnostic, AuditTargets, ExcitationReport, Expectations, MonteCarloSpec};
use crate::gains::{validate_gains, GainCondition, GainReport};
use crate::metrics::{run_batch, RunAggregate};
use crate::noise::NormBoundReport;
use crate::rng::aux_stream;

/// Version of the CSV and JSON layouts above.
pub const SCHEMA_VERSION: u32 = 1;

const AUDIT_STREAM: u64 = 0;
const FROZEN_AUDIT_STREAM: u64 = 1;

/// 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn node_header(prefix: &str, nodes: usize) -> String {
    (1..=nodes).map(|i| format!(",{prefix}_{i}")).collect()
}

fn push_fields(line: &mut String, values: &[f64]) {
    for v in values {
        line.push(',');
        line.push_str(&fmt_f64(*v));
    }
}

/// Per-run trajectory table.
pub fn write_run_csv(rec: &TrajectoryRecord, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "step,v{}{}",
        node_header("err", rec.nodes),
        node_header("norm", rec.nodes)
    )?;
    for row in 0..rec.len() {
        let mut line = format!("{},{}", rec.steps[row], fmt_f64(rec.v[row]));
        push_fields(&mut line, rec.node_errors_at(row));
        push_fields(&mut line, rec.estimate_norms_at(row));
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Across-run summary table.
pub fn write_aggregate_csv(agg: &RunAggregate, tau: f64, out: &mut impl Write) -> Result<(), std::io::Error> {
    writeln!(
        out,
        "step,mean_v,se_v,mean_cum_v,mean_norm,se_norm{},mar",
        node_header("regret", agg.nodes)
    )?;
    for row in 0..agg.rows() {
        let mut line = agg.steps[row].to_string();
        push_fields(
            &mut line,
            &[
                agg.mean_v(row),
                agg.se_v(row),
                agg.mean_cum_v(row),
                agg.mean_global_norm(row),
                agg.se_global_norm(row),
            ],
        );
        let regret: Vec<f64> = (0..agg.nodes).map(|i| agg.mean_regret(row, i)).collect();
        push_fields(&mut line, &regret);
        line.push(',');
        if let Ok(m) = agg.mar(row, tau) {
            line.push_str(&fmt_f64(m));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Outcome of a gain-condition check, or why it could not be decided.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum GainVerdict {
    Decided(GainReport),
    Undecided { condition: GainCondition, reason: String },
}

fn gain_verdicts(cfg: &ExperimentConfig) -> Vec<GainVerdict> {
    [GainCondition::C1, GainCondition::C2]
        .into_iter()
        .map(|c| match validate_gains(&cfg.gains, c) {
            Ok(r) => GainVerdict::Decided(r),
            Err(e) => GainVerdict::Undecided {
                condition: c,
                reason: e.to_string(),
            },
        })
        .collect()
}

/// Content of `excitation.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditDocument {
    pub schema_version: u32,
    pub name: Option<String>,
    pub seed: u64,
    pub rho0: Option<f64>,
    pub theta1: Option<f64>,
    pub theta2: Option<f64>,
    pub gain_conditions: Vec<GainVerdict>,
    pub excitation: ExcitationReport,
}

impl AuditDocument {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("cannot serialize audit: {e}")))
    }
}

/// Excitation audit of a config without simulating trajectories.
///
/// A frozen regression is audited on one draw from an auxiliary stream; the
/// Markov chain and autoregressive history are followed along one sample path.
pub fn audit(cfg: &ExperimentConfig) -> Result<AuditDocument> {
    cfg.validate()?;
    let regression = cfg.regression.realize(&mut aux_stream(cfg.seed, FROZEN_AUDIT_STREAM))?;
    let mut exp = Expectations::analytic(&cfg.graph, &regression);
    if let Some(samples) = cfg.audit.mc_samples {
        exp = exp.with_monte_carlo(MonteCarloSpec {
            x0: cfg.x0.clone(),
            noise: cfg.scenario()?.measurement_noise,
            samples,
            seed: cfg.seed,
        });
    }
    let a = &cfg.audit;
    let targets = AuditTargets {
        theta1: a.theta1,
        theta2: a.theta2,
        rho0: a.rho0,
    };
    let mut rng = aux_stream(cfg.seed, AUDIT_STREAM);
    let mut excitation = pe_diagnostic(&exp, &cfg.gains, a.h, a.windows, targets, &mut rng)?;
    if cfg.regression.frozen {
        excitation
            .notes
            .push("frozen regression audited on a single auxiliary draw".into());
    }
    Ok(AuditDocument {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        seed: cfg.seed,
        rho0: a.rho0,
        theta1: a.theta1,
        theta2: a.theta2,
        gain_conditions: gain_verdicts(cfg),
        excitation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

/// Content of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool: String,
    pub version: String,
    pub name: Option<String>,
    pub seed: u64,
    pub runs: usize,
    pub horizon: usize,
    pub record_every: usize,
    pub seeding: String,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
}

/// What `run_experiment` produced.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub final_mean_v: f64,
    pub final_mar: Option<f64>,
    pub norm_bounds: NormBoundReport,
    pub aggregate: RunAggregate,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

/// Simulates `cfg.runs` runs and writes all artifacts into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let scenario = cfg.scenario()?;
    let runs_dir = dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(io_err(&runs_dir))?;

    // The output location is not part of the experiment identity.
    let mut recorded = cfg.clone();
    recorded.output = Default::default();
    let rendered = recorded.render()?;
    let mut files = Vec::new();
    let mut rel = Vec::new();
    write_file(&dir.join("config.toml"), rendered.as_bytes())?;
    rel.push("config.toml".to_string());

    let opts = RunOptions::new(cfg.horizon).stride(cfg.record_every);
    let mut agg = RunAggregate::new();
    let mut norm_bounds = NormBoundReport::default();
    let width = cfg.runs.saturating_sub(1).to_string().len().max(5);
    run_batch(&scenario, cfg.seed, cfg.runs, opts, |run, rec| {
        let name = format!("runs/run-{run:0width$}.csv");
        let path = dir.join(&name);
        let mut out = create(&path)?;
        write_run_csv(&rec, &mut out)
            .and_then(|_| out.flush())
            .map_err(io_err(&path))?;
        rel.push(name);
        norm_bounds.merge(&rec.norm_bounds);
        agg.add(&rec)
    })?;

    let agg_path = dir.join("aggregate.csv");
    let mut out = create(&agg_path)?;
    write_aggregate_csv(&agg, cfg.audit.tau, &mut out)
        .and_then(|_| out.flush())
        .map_err(io_err(&agg_path))?;
    rel.push("aggregate.csv".into());

    let audit_doc = audit(cfg)?;
    write_file(&dir.join("excitation.json"), audit_doc.to_json()?.as_bytes())?;
    rel.push("excitation.json".into());

    for name in rel {
        let path = dir.join(&name);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        files.push(FileEntry {
            path: name,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "dorl".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        name: cfg.name.clone(),
        seed: cfg.seed,
        runs: cfg.runs,
        horizon: cfg.horizon,
        record_every: cfg.record_every,
        seeding: "ChaCha8 keyed by seed_from_u64(seed), stream id = run index".into(),
        config_sha256: sha256_hex(rendered.as_bytes()),
        files,
    };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize manifest: {e}")))?;
    write_file(&dir.join("manifest.json"), manifest_json.as_bytes())?;

    let last = agg.rows() - 1;
    Ok(ExperimentSummary {
        dir: dir.to_path_buf(),
        final_mean_v: agg.mean_v(last),
        final_mar: agg.mar(last, cfg.audit.tau).ok(),
        norm_bounds,
        manifest,
        aggregate: agg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::preset;

    fn small(name: &str) -> ExperimentConfig {
        let mut cfg = preset(name).unwrap();
        cfg.runs = 3;
        cfg.horizon = 200;
        cfg.record_every = 10;
        cfg.audit.windows = 5;
        cfg
    }

    #[test]
    fn reruns_are_byte_identical() {
        let cfg = small("setting-I");
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let s1 = run_experiment(&cfg, d1.path()).unwrap();
        let s2 = run_experiment(&cfg, d2.path()).unwrap();
        assert_eq!(s1.manifest.files, s2.manifest.files);
        for f in &s1.manifest.files {
            assert_eq!(fs::read(d1.path().join(&f.path)).unwrap(), fs::read(d2.path().join(&f.path)).unwrap());
        }
        assert_eq!(
            fs::read(d1.path().join("manifest.json")).unwrap(),
            fs::read(d2.path().join("manifest.json")).unwrap()
        );
        assert!(s1.norm_bounds.holds());
    }

    #[test]
    fn horizon_zero_writes_header_and_initial_row() {
        let mut cfg = small("regret");
        cfg.horizon = 0;
        let d = tempfile::tempdir().unwrap();
        run_experiment(&cfg, d.path()).unwrap();
        let text = fs::read_to_string(d.path().join("runs/run-00000.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "step,v,err_1,err_2,err_3,norm_1,norm_2,norm_3");
        assert!(lines[1].starts_with("0,6.2600000000000000e2,"), "{}", lines[1]);
        let agg = fs::read_to_string(d.path().join("aggregate.csv")).unwrap();
        assert_eq!(agg.lines().count(), 2);
        assert!(agg.lines().nth(1).unwrap().ends_with(','));
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn io_errors_name_the_path() {
        let d = tempfile::tempdir().unwrap();
        let blocker = d.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = run_experiment(&small("setting-I"), &blocker.join("sub")).unwrap_err();
        assert!(err.to_string().contains("file"), "{err}");
    }

    #[test]
    fn audit_reports_targets() {
        let doc = audit(&small("setting-I")).unwrap();
        assert_eq!(doc.excitation.h, 2);
        assert_eq!(doc.rho0, Some(5.0));
        let lb = doc.excitation.lower_bound.as_ref().unwrap();
        assert!(lb.holds());
        assert!(doc.excitation.jointly_connected.as_ref().unwrap().holds);
        assert!(doc.excitation.jointly_observable.as_ref().unwrap().holds);
        assert!(matches!(&doc.gain_conditions[0], GainVerdict::Decided(r) if r.passed));
        let json = doc.to_json().unwrap();
        assert!(json.contains("\"rho0\": 5.0"));
    }

    #[test]
    fn run_count_growth_keeps_earlier_runs() {
        let mut cfg = small("setting-III");
        let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        run_experiment(&cfg, d1.path()).unwrap();
        cfg.runs = 20;
        run_experiment(&cfg, d2.path()).unwrap();
        for r in 0..3 {
            let f = format!("runs/run-{r:05}.csv");
            assert_eq!(fs::read(d1.path().join(&f)).unwrap(), fs::read(d2.path().join(&f)).unwrap());
        }
    }
}
