//! Experiment configuration, dispatch and CSV/JSON reporting.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bounds::{run_suite, BoundReport};
use crate::codes::{
    iid_measure, redundancy, KtCode, PatternCode, RedundancyMode, SequentialMeasure,
};
use crate::dwc::{
    b_quantization, fh_quantization, premature_probability, uniform_quantization,
    FhQuantizationConfig, PhiScheme, PrematureReport, PrematureRow, Quantization, ReachRule,
};
use crate::error::{Error, Result};
use crate::insure::{
    i_class_scheme, insure_run, percentile_scheme, relationship_demos, DemoLine, InsureReport,
    InsureRow, RelationshipReport,
};
use crate::numeric::fmt17;
use crate::pmf::Symbol;
use crate::sources::{PmfSpec, SourceSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    BoundsSuite,
    PhiRun,
    Premature,
    RedundancyCurve,
    Insure,
    Demo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    Uniform,
    B,
    Fh,
    /// Only meaningful for `insure`: the analytic tail of `I`.
    I,
}

impl std::str::FromStr for ClassTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<ClassTag> {
        match s {
            "uniform" | "U" => Ok(ClassTag::Uniform),
            "b" | "B" => Ok(ClassTag::B),
            "fh" | "F_h" => Ok(ClassTag::Fh),
            "i" | "I" => Ok(ClassTag::I),
            _ => Err(Error::Config(format!("unknown class tag {s:?}"))),
        }
    }
}

/// Finite prefixes of the quantizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Caps {
    pub uniform_cap: Symbol,
    pub reach: ReachRule,
    pub b_level: u64,
    pub fh: FhQuantizationConfig,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            uniform_cap: 64,
            reach: ReachRule::Tuned { eta: 0.05 },
            b_level: 10,
            fh: FhQuantizationConfig::default(),
        }
    }
}

/// The coding measure of a redundancy curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureSpec {
    /// The source's own i.i.d. law.
    OwnIid,
    Iid { pmf: PmfSpec },
    Kt { support: Vec<Symbol> },
    Pattern,
    /// `q*` of the configured quantization.
    Qstar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub class: Option<ClassTag>,
    #[serde(default)]
    pub source: Option<SourceSpec>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub trials: u64,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default)]
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub lengths: Vec<u64>,
    #[serde(default)]
    pub mode: Option<CurveMode>,
    #[serde(default)]
    pub output: Option<String>,
}

fn default_delta() -> f64 {
    0.1
}
fn default_eta() -> f64 {
    0.05
}
fn default_horizon() -> u64 {
    100_000
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, seed: u64) -> Self {
        ExperimentConfig {
            kind,
            class: None,
            source: None,
            delta: default_delta(),
            eta: default_eta(),
            trials: 0,
            horizon: default_horizon(),
            seed,
            caps: Caps::default(),
            measure: None,
            lengths: Vec::new(),
            mode: None,
            output: None,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(s)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Rejects bad ranges and class/source combinations before sampling.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} must be a positive real", self.delta));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta = {} outside (0,1)", self.eta));
        }
        if self.horizon == 0 {
            return bad("horizon must be >= 1".into());
        }
        let needs_source = matches!(
            self.kind,
            ExperimentKind::PhiRun
                | ExperimentKind::Premature
                | ExperimentKind::RedundancyCurve
                | ExperimentKind::Insure
        );
        if needs_source {
            match &self.source {
                None => return bad(format!("{:?} needs a source", self.kind)),
                Some(s) => s.validate().map_err(|e| Error::Config(e.to_string()))?,
            }
        }
        if matches!(self.kind, ExperimentKind::PhiRun | ExperimentKind::Premature | ExperimentKind::Insure)
            && self.class.is_none()
        {
            return bad(format!("{:?} needs a class tag", self.kind));
        }
        match (self.kind, self.class) {
            (ExperimentKind::PhiRun | ExperimentKind::Premature, Some(ClassTag::I)) => {
                return bad("class I has no indicator scheme".into())
            }
            (ExperimentKind::Insure, Some(ClassTag::B | ClassTag::Fh)) => {
                return bad("insure supports classes uniform and I".into())
            }
            _ => {}
        }
        if let (Some(ClassTag::Uniform), Some(SourceSpec::Uniform { max, .. })) = (self.class, &self.source) {
            if *max > self.caps.uniform_cap {
                return bad(format!(
                    "source support reaches {max}, past the quantization cap {}",
                    self.caps.uniform_cap
                ));
            }
        }
        if self.kind == ExperimentKind::RedundancyCurve {
            if self.lengths.is_empty() || self.lengths.contains(&0) {
                return bad("redundancy-curve needs lengths >= 1".into());
            }
            if self.measure == Some(MeasureSpec::Qstar) && self.class.is_none() {
                return bad("measure qstar needs a class tag".into());
            }
        }
        Ok(())
    }
}

fn build_quantization(class: ClassTag, caps: &Caps) -> Result<Quantization> {
    match class {
        ClassTag::Uniform => uniform_quantization(caps.uniform_cap, caps.reach),
        ClassTag::B => b_quantization(caps.b_level),
        ClassTag::Fh => fh_quantization(&caps.fh),
        ClassTag::I => Err(Error::Config("class I has no quantization".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub n: u64,
    pub redundancy: f64,
    pub ci95: Option<f64>,
    pub rbound: Option<f64>,
}

impl CurveRow {
    pub const CSV_HEADER: &'static str = "n,redundancy,ci95,rbound";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
        format!("{},{},{},{}", self.n, fmt17(self.redundancy), opt(self.ci95), opt(self.rbound))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "body", rename_all = "snake_case")]
pub enum ReportBody {
    Bounds { rows: Vec<BoundReport> },
    Phi { rows: Vec<PrematureRow>, summary: Option<PrematureReport> },
    Curve { rows: Vec<CurveRow> },
    Insure { rows: Vec<InsureRow>, summary: Option<InsureReport> },
    Demo { rows: Vec<DemoLine> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub library_version: String,
    pub wall_clock_ms: u64,
    /// `None` marks an aggregate that is undefined (for instance with no trials).
    pub aggregates: BTreeMap<String, Option<f64>>,
    pub body: ReportBody,
}

impl ExperimentReport {
    pub fn entry_fraction(&self) -> Option<f64> {
        self.aggregates.get("entry_fraction").copied().flatten()
    }

    /// Any violated bound in a bounds suite.
    pub fn any_violation(&self) -> bool {
        match &self.body {
            ReportBody::Bounds { rows } => rows.iter().any(|r| r.violated),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown format {s:?}"))),
        }
    }
}

fn agg(pairs: &[(&str, Option<f64>)]) -> BTreeMap<String, Option<f64>> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Runs one experiment.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let start = Instant::now();
    let (aggregates, body) = match config.kind {
        ExperimentKind::BoundsSuite => {
            let rows = run_suite(config.seed);
            let violated = rows.iter().filter(|r| r.violated).count() as f64;
            (agg(&[("violations", Some(violated))]), ReportBody::Bounds { rows })
        }
        ExperimentKind::PhiRun | ExperimentKind::Premature => run_phi(config)?,
        ExperimentKind::RedundancyCurve => run_curve(config)?,
        ExperimentKind::Insure => run_insure(config)?,
        ExperimentKind::Demo => {
            let RelationshipReport { lines } = relationship_demos(config.seed)?;
            let failed = lines.iter().filter(|l| !l.holds).count() as f64;
            (agg(&[("failed_checks", Some(failed))]), ReportBody::Demo { rows: lines })
        }
    };
    Ok(ExperimentReport {
        config: config.clone(),
        library_version: env!("CARGO_PKG_VERSION").into(),
        wall_clock_ms: start.elapsed().as_millis() as u64,
        aggregates,
        body,
    })
}

type Ran = (BTreeMap<String, Option<f64>>, ReportBody);

fn run_phi(config: &ExperimentConfig) -> Result<Ran> {
    let class = config.class.unwrap();
    let quant = Arc::new(build_quantization(class, &config.caps)?);
    let source = config.source.as_ref().unwrap();
    if config.trials == 0 {
        let undefined = agg(&[
            ("entry_fraction", None),
            ("premature_fraction", None),
            ("premature_ci95", None),
            ("indeterminate_fraction", None),
        ]);
        return Ok((undefined, ReportBody::Phi { rows: vec![], summary: None }));
    }
    let phi = PhiScheme::new(quant, config.delta, config.eta);
    let r = premature_probability(source, &phi, config.trials, config.horizon, config.seed)?;
    let a = agg(&[
        ("entry_fraction", Some(r.entry_fraction)),
        ("premature_fraction", Some(r.premature_fraction)),
        ("premature_ci95", Some(r.premature_ci95)),
        ("indeterminate_fraction", Some(r.indeterminate_fraction)),
        ("min_trap_from", Some(phi.min_trap_from() as f64)),
    ]);
    let rows = r.rows.clone();
    Ok((a, ReportBody::Phi { rows, summary: Some(r) }))
}

fn run_curve(config: &ExperimentConfig) -> Result<Ran> {
    let source = config.source.as_ref().unwrap();
    let p = source.make_pmf()?;
    let measure: Arc<dyn SequentialMeasure> = match config.measure.clone().unwrap_or(MeasureSpec::OwnIid) {
        MeasureSpec::OwnIid => Arc::new(iid_measure(p.clone())),
        MeasureSpec::Iid { pmf } => Arc::new(iid_measure(pmf.build()?)),
        MeasureSpec::Kt { support } => Arc::new(KtCode::new(support)?),
        MeasureSpec::Pattern => Arc::new(PatternCode::harmonic()),
        MeasureSpec::Qstar => build_quantization(config.class.unwrap(), &config.caps)?.qstar().clone(),
    };
    let mode = config.mode.unwrap_or(if config.trials > 0 { CurveMode::MonteCarlo } else { CurveMode::Exact });
    if mode == CurveMode::MonteCarlo && config.trials == 0 {
        let rows = vec![];
        return Ok((agg(&[("points", Some(0.0))]), ReportBody::Curve { rows }));
    }
    let rows = config
        .lengths
        .iter()
        .map(|&n| {
            let m = match mode {
                CurveMode::Exact => RedundancyMode::Exact,
                CurveMode::MonteCarlo => RedundancyMode::MonteCarlo {
                    trials: config.trials as usize,
                    seed: config.seed,
                },
            };
            let e = redundancy(&p, measure.as_ref(), n, m)?;
            Ok(CurveRow {
                n,
                redundancy: e.value,
                ci95: e.ci95,
                rbound: measure.rbound(n),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let points = rows.len() as f64;
    Ok((agg(&[("points", Some(points))]), ReportBody::Curve { rows }))
}

fn run_insure(config: &ExperimentConfig) -> Result<Ran> {
    let class = config.class.unwrap();
    let scheme = match class {
        ClassTag::I => i_class_scheme(),
        _ => percentile_scheme(Arc::new(build_quantization(class, &config.caps)?), config.eta)?,
    };
    if config.trials == 0 {
        let undefined = agg(&[("entry_fraction", None), ("violations", None), ("ruin_fraction", None)]);
        return Ok((undefined, ReportBody::Insure { rows: vec![], summary: None }));
    }
    let r = insure_run(config.source.as_ref().unwrap(), &scheme, config.trials, config.horizon, config.seed)?;
    let a = agg(&[
        ("entry_fraction", Some(r.entry_fraction)),
        ("violations", Some(r.violation_count as f64)),
        ("ruin_fraction", Some(r.ruin_fraction)),
        ("ruin_se", Some(r.ruin_se)),
        ("ruin_allowance", Some(r.ruin_allowance)),
    ]);
    let rows = r.rows.clone();
    Ok((a, ReportBody::Insure { rows, summary: Some(r) }))
}

/// Serializes a report. CSV carries the per-row data with the documented
/// header for the experiment kind (`premature` emits its aggregates);
/// JSON mirrors the whole report.
pub fn emit(report: &ExperimentReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s.into_bytes()
        }
        Format::Csv => emit_csv(report).into_bytes(),
    }
}

fn table<T>(header: &str, rows: &[T], f: impl Fn(&T) -> String) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&f(r));
        s.push('\n');
    }
    s
}

fn emit_csv(report: &ExperimentReport) -> String {
    match (&report.body, report.config.kind) {
        (ReportBody::Phi { .. }, ExperimentKind::Premature) => {
            let rows: Vec<(&String, &Option<f64>)> = report.aggregates.iter().collect();
            table("quantity,value", &rows, |(k, v)| {
                format!("{k},{}", v.map(fmt17).unwrap_or_else(|| "undefined".into()))
            })
        }
        (ReportBody::Bounds { rows }, _) => table(BoundReport::CSV_HEADER, rows, |r| r.csv_row()),
        (ReportBody::Phi { rows, .. }, _) => table(PrematureRow::CSV_HEADER, rows, |r| r.csv_row()),
        (ReportBody::Curve { rows }, _) => table(CurveRow::CSV_HEADER, rows, |r| r.csv_row()),
        (ReportBody::Insure { rows, .. }, _) => table(InsureRow::CSV_HEADER, rows, |r| r.csv_row()),
        (ReportBody::Demo { rows }, _) => table(DemoLine::CSV_HEADER, rows, |r| r.csv_row()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi_config(trials: u64) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(ExperimentKind::PhiRun, 11);
        c.class = Some(ClassTag::B);
        c.caps.b_level = 4;
        c.source = Some(SourceSpec::BMember { epsilon: 0.3, j: 2 });
        c.trials = trials;
        c.horizon = 500;
        c
    }

    #[test]
    fn zero_trials_gives_header_only() {
        let r = run(&phi_config(0)).unwrap();
        let csv = String::from_utf8(emit(&r, Format::Csv)).unwrap();
        assert_eq!(csv, format!("{}\n", PrematureRow::CSV_HEADER));
        assert_eq!(r.entry_fraction(), None);
        assert_eq!(r.aggregates["premature_fraction"], None);
    }

    #[test]
    fn phi_csv_is_deterministic() {
        let a = emit(&run(&phi_config(6)).unwrap(), Format::Csv);
        let b = emit(&run(&phi_config(6)).unwrap(), Format::Csv);
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("trial,entered,entry_time,trap_index,premature,indeterminate\n"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn own_code_curve_is_zero() {
        let mut c = ExperimentConfig::new(ExperimentKind::RedundancyCurve, 1);
        c.source = Some(SourceSpec::uniform(1, 2));
        c.lengths = vec![1, 10, 100];
        let r = run(&c).unwrap();
        match &r.body {
            ReportBody::Curve { rows } => assert!(rows.iter().all(|r| r.redundancy == 0.0)),
            _ => panic!(),
        }
    }

    #[test]
    fn config_round_trip_and_rejections() {
        let c = phi_config(3);
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_json(), c.to_json());
        let mut bad = c.clone();
        bad.class = Some(ClassTag::I);
        assert!(matches!(run(&bad), Err(Error::Config(_))));
        let mut bad = c.clone();
        bad.source = None;
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let mut bad = c;
        bad.kind = ExperimentKind::Insure;
        assert!(bad.validate().is_err());
        assert!(ExperimentConfig::from_json(r#"{"kind":"demo"}"#).is_err());
    }

    #[test]
    fn json_round_trip_is_identity() {
        let r = run(&phi_config(2)).unwrap();
        let j = String::from_utf8(emit(&r, Format::Json)).unwrap();
        let back: ExperimentReport = serde_json::from_str(&j).unwrap();
        assert_eq!(String::from_utf8(emit(&back, Format::Json)).unwrap(), j);
    }
}
