use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dwc_core::experiment::{CurveMode, MeasureSpec};
use dwc_core::{emit, run, ClassTag, Error, ExperimentConfig, ExperimentKind, Format, ReachRule, SourceSpec};

#[derive(Parser)]
#[command(name = "dwc-lab", version, about = "Data-driven weak compressibility experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the lemma checkers.
    Bounds {
        /// Only `all` is available.
        #[arg(long, default_value = "all")]
        suite: String,
        #[command(flatten)]
        common: Common,
    },
    /// Per-trial indicator runs.
    PhiRun(Common),
    /// Aggregate premature-entry probability.
    Premature(Common),
    /// Redundancy of a coding measure against a source.
    Redundancy {
        /// Measure spec as JSON, e.g. '{"kind":"pattern"}'. Defaults to the source's own law.
        #[arg(long)]
        measure: Option<String>,
        /// Comma-separated block lengths.
        #[arg(long, value_delimiter = ',')]
        lengths: Vec<u64>,
        /// exact | monte-carlo
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Percentile-premium runs.
    Insure(Common),
    /// Relationship demonstrations.
    Demo(Common),
}

#[derive(Args)]
struct Common {
    /// uniform | b | fh | i
    #[arg(long)]
    class: Option<String>,
    /// Source spec as JSON, e.g. '{"variant":"Uniform","m":3,"M":10}'.
    #[arg(long)]
    source: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest symbol of the uniform quantization.
    #[arg(long)]
    uniform_cap: Option<u64>,
    /// Fixed window for the uniform reach rule (default: tuned).
    #[arg(long)]
    window: Option<u64>,
    /// Level cap of the B quantization.
    #[arg(long)]
    b_level: Option<u64>,
    /// JSON config file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long, default_value = "csv")]
    format: String,
}

fn cfg_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

fn load_base(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig, Error> {
    match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)?;
            if cfg.kind != kind {
                return Err(cfg_err(format!("config is for {:?}, not {kind:?}", cfg.kind)));
            }
            Ok(cfg)
        }
        None => Ok(ExperimentConfig::new(kind, c.seed.ok_or_else(|| cfg_err("--seed is required"))?)),
    }
}

fn apply(cfg: &mut ExperimentConfig, c: &Common) -> Result<(), Error> {
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = &c.class {
        cfg.class = Some(t.parse()?);
    }
    if let Some(s) = &c.source {
        cfg.source = Some(SourceSpec::from_json(s).map_err(cfg_err)?);
    }
    if let Some(v) = c.delta {
        cfg.delta = v;
    }
    if let Some(v) = c.eta {
        cfg.eta = v;
        if let ReachRule::Tuned { .. } = cfg.caps.reach {
            cfg.caps.reach = ReachRule::Tuned { eta: v };
        }
    }
    if let Some(v) = c.trials {
        cfg.trials = v;
    }
    if let Some(v) = c.horizon {
        cfg.horizon = v;
    }
    if let Some(v) = c.uniform_cap {
        cfg.caps.uniform_cap = v;
    }
    if let Some(w) = c.window {
        cfg.caps.reach = ReachRule::Window { window: w };
    }
    if let Some(v) = c.b_level {
        cfg.caps.b_level = v;
    }
    if let Some(p) = &c.out {
        cfg.output = Some(p.display().to_string());
    }
    Ok(())
}

fn parse_command(cmd: Command) -> Result<(ExperimentConfig, Format), Error> {
    let (kind, common) = match &cmd {
        Command::Bounds { suite, common } => {
            if suite != "all" {
                return Err(cfg_err(format!("unknown suite {suite:?}; only `all` exists")));
            }
            (ExperimentKind::BoundsSuite, common)
        }
        Command::PhiRun(c) => (ExperimentKind::PhiRun, c),
        Command::Premature(c) => (ExperimentKind::Premature, c),
        Command::Redundancy { common, .. } => (ExperimentKind::RedundancyCurve, common),
        Command::Insure(c) => (ExperimentKind::Insure, c),
        Command::Demo(c) => (ExperimentKind::Demo, c),
    };
    let format: Format = common.format.parse()?;
    let mut cfg = load_base(kind, common)?;
    apply(&mut cfg, common)?;
    if let Command::Redundancy { measure, lengths, mode, .. } = &cmd {
        if let Some(m) = measure {
            cfg.measure = Some(serde_json::from_str::<MeasureSpec>(m)?);
        }
        if !lengths.is_empty() {
            cfg.lengths = lengths.clone();
        }
        if let Some(m) = mode {
            cfg.mode = Some(match m.as_str() {
                "exact" => CurveMode::Exact,
                "monte-carlo" | "mc" => CurveMode::MonteCarlo,
                _ => return Err(cfg_err(format!("unknown mode {m:?}"))),
            });
        }
    }
    if kind == ExperimentKind::Insure && cfg.class.is_none() {
        cfg.class = Some(ClassTag::Uniform);
    }
    cfg.validate()?;
    Ok((cfg, format))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cfg, format) = match parse_command(cli.command) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("dwc-lab: {e}");
            return ExitCode::from(2);
        }
    };
    let report = match run(&cfg) {
        Ok(r) => r,
        Err(e @ (Error::Config(_) | Error::InvalidArgument(_) | Error::InvalidPmf(_) | Error::InvalidSource(_))) => {
            eprintln!("dwc-lab: {e}");
            return ExitCode::from(2);
        }
        Err(e) => {
            eprintln!("dwc-lab: {e}");
            return ExitCode::from(1);
        }
    };
    let bytes = emit(&report, format);
    let written = match &cfg.output {
        Some(p) => fs::write(p, &bytes),
        None => std::io::stdout().write_all(&bytes),
    };
    if let Err(e) = written {
        eprintln!("dwc-lab: {e}");
        return ExitCode::from(1);
    }
    if report.any_violation() {
        return ExitCode::from(3);
    }
    ExitCode::SUCCESS
}
