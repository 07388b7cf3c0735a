use std::path::PathBuf;
use std::io::Write;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use dorl_core::config::{resolve_config, ExperimentConfig, PRESETS};
use dorl_core::experiment::{audit, fmt_f64, run_experiment, GainVerdict};
use dorl_core::gains::{validate_gains, GainCondition};

/// Appends a line to the stdout buffer.
macro_rules! outln {
    ($out:expr, $($arg:tt)*) => {{
        use std::fmt::Write as _;
        let _ = writeln!($out, $($arg)*);
    }};
}

/// Decentralized online regularized regression experiments.
#[derive(Parser)]
#[command(name = "dorl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a config and write trajectory, aggregate, audit and manifest files.
    Run(RunArgs),
    /// Write the excitation report only.
    Audit(AuditArgs),
    /// Check a gain schedule against a convergence condition.
    ValidateGains(GainArgs),
    /// List the built-in configs.
    Presets(FormatArg),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct FormatArg {
    /// Format of what is printed to stdout.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Args)]
struct Overrides {
    /// Config file, or the name of a preset.
    #[arg(long)]
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory; defaults to the config's, then $DORL_OUT_DIR, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Overrides {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = resolve_config(&self.config).with_context(|| format!("loading config {}", self.config))?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: Overrides,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    cfg: Overrides,
    #[command(flatten)]
    format: FormatArg,
}

#[derive(Args)]
struct GainArgs {
    /// Config file, or the name of a preset, holding the gain schedule.
    #[arg(long)]
    config: String,
    /// C1 (almost sure) or C2 (mean square).
    #[arg(long, default_value = "C1")]
    mode: GainCondition,
    #[command(flatten)]
    format: FormatArg,
}

fn run(args: RunArgs, out: &mut String) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let dir = cfg.output_dir();
    let s = run_experiment(&cfg, &dir)?;
    let mar = s.final_mar.map(fmt_f64).unwrap_or_default();
    match args.format.format {
        Format::Csv => {
            outln!(out, "key,value");
            outln!(out, "dir,{}", s.dir.display());
            outln!(out, "runs,{}", s.manifest.runs);
            outln!(out, "horizon,{}", s.manifest.horizon);
            outln!(out, "final_mean_v,{}", fmt_f64(s.final_mean_v));
            outln!(out, "final_mar,{mar}");
            outln!(out, "norm_bound_checks,{}", s.norm_bounds.checked);
            outln!(out, "norm_bounds_hold,{}", s.norm_bounds.holds());
            outln!(out, "config_sha256,{}", s.manifest.config_sha256);
        }
        Format::Json => {
            let v = json!({
                "dir": s.dir,
                "manifest": s.manifest,
                "final_mean_v": s.final_mean_v,
                "final_mar": s.final_mar,
                "norm_bounds": s.norm_bounds,
            });
            outln!(out, "{}", serde_json::to_string_pretty(&v)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_audit(args: AuditArgs, out: &mut String) -> Result<ExitCode> {
    let cfg = args.cfg.load()?;
    let doc = audit(&cfg)?;
    let text = doc.to_json()?;
    if args.cfg.out.is_some() || cfg.output.dir.is_some() {
        let dir = cfg.output_dir();
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join("excitation.json");
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    }
    match args.format.format {
        Format::Json => outln!(out, "{text}"),
        Format::Csv => {
            outln!(out, "k,lambda,lambda_tilde,connectivity,observability,cumulative,r");
            for w in &doc.excitation.windows {
                outln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    w.k,
                    fmt_f64(w.lambda),
                    fmt_f64(w.lambda_tilde),
                    fmt_f64(w.connectivity),
                    fmt_f64(w.observability),
                    fmt_f64(w.cumulative),
                    w.r.map(fmt_f64).unwrap_or_default()
                );
            }
            let e = &doc.excitation;
            eprintln!("h = {}, gamma1 = {}", e.h, e.gamma1);
            if let Some(c) = &e.jointly_connected {
                eprintln!("jointly connected (theta1 = {}): {}", c.threshold, c.holds);
            }
            if let Some(c) = &e.jointly_observable {
                eprintln!("jointly observable (theta2 = {}): {}", c.threshold, c.holds);
            }
            if let Some(lb) = &e.lower_bound {
                eprintln!("lower bound (rho0 = {}): {}", lb.rho0, lb.holds());
            }
            for v in &doc.gain_conditions {
                if let GainVerdict::Decided(r) = v {
                    eprintln!("gain condition {:?}: {}", r.condition, r.passed);
                }
            }
            for n in &e.notes {
                eprintln!("note: {n}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn run_gains(args: GainArgs, out: &mut String) -> Result<ExitCode> {
    let cfg = resolve_config(&args.config).with_context(|| format!("loading config {}", args.config))?;
    let report = validate_gains(&cfg.gains, args.mode)?;
    match args.format.format {
        Format::Json => outln!(out, "{}", serde_json::to_string_pretty(&report)?),
        Format::Csv => {
            outln!(out, "clause,holds");
            for c in &report.clauses {
                outln!(out, "\"{}\",{}", c.clause.replace('"', "\"\""), c.holds);
            }
            outln!(out, "\"{:?}\",{}", report.condition, report.passed);
        }
    }
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn presets(args: FormatArg, out: &mut String) -> Result<ExitCode> {
    match args.format {
        Format::Csv => {
            outln!(out, "name,description");
            for p in PRESETS {
                outln!(out, "{},\"{}\"", p.name, p.description);
            }
        }
        Format::Json => {
            let list: Vec<_> = PRESETS
                .iter()
                .map(|p| json!({"name": p.name, "description": p.description}))
                .collect();
            outln!(out, "{}", serde_json::to_string_pretty(&list)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut out = String::new();
    let result = match cli.command {
        Command::Run(a) => run(a, &mut out),
        Command::Audit(a) => run_audit(a, &mut out),
        Command::ValidateGains(a) => run_gains(a, &mut out),
        Command::Presets(a) => presets(a, &mut out),
    };
    // A closed pipe on stdout is not an error worth reporting.
    let _ = std::io::stdout().lock().write_all(out.as_bytes());
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
