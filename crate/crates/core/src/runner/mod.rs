//! Experiment orchestration: configuration, dispatch and machine-readable output.

pub mod config;
mod experiments;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{
    gauge_descriptor, parse_config, parse_gauge, ExperimentConfig, ExperimentKind, GridConfig,
    OutputFormat, ProfileSource, ToleranceConfig,
};

use crate::error::Result;

pub const SCHEMA_VERSION: u32 = 1;
/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "STABLE_TREES_OUT";
pub const RECORD_CSV_HEADER: &str =
    "experiment,params,statistic,value,se,target,criterion,bound,tolerance,pass,module,formula";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Criterion {
    /// |value − target| ≤ tol.
    Within {
        tol: f64,
    },
    AtLeast {
        bound: f64,
    },
    AtMost {
        bound: f64,
    },
    /// Recorded without a pass condition.
    Report,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub module: String,
    pub formula: String,
}

mod nan_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment: String,
    /// `key=value` pairs joined by `;`.
    pub params: String,
    pub statistic: String,
    #[serde(with = "nan_null")]
    pub value: f64,
    pub se: Option<f64>,
    pub target: Option<f64>,
    pub criterion: Criterion,
    pub pass: bool,
    pub provenance: Provenance,
}

impl PartialEq for ExperimentRecord {
    fn eq(&self, o: &Self) -> bool {
        self.experiment == o.experiment
            && self.params == o.params
            && self.statistic == o.statistic
            && self.value.to_bits() == o.value.to_bits()
            && self.se == o.se
            && self.target == o.target
            && self.criterion == o.criterion
            && self.pass == o.pass
            && self.provenance == o.provenance
    }
}

impl ExperimentRecord {
    /// A record whose pass flag follows from `criterion`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        experiment: &str,
        params: &str,
        statistic: &str,
        value: f64,
        se: Option<f64>,
        target: Option<f64>,
        criterion: Criterion,
        module: &str,
        formula: &str,
    ) -> Self {
        let pass = match criterion {
            Criterion::Within { tol } => target.is_some_and(|t| (value - t).abs() <= tol),
            Criterion::AtLeast { bound } => value >= bound,
            Criterion::AtMost { bound } => value <= bound,
            Criterion::Report => true,
        };
        Self {
            experiment: experiment.into(),
            params: params.into(),
            statistic: statistic.into(),
            value,
            se,
            target,
            criterion,
            pass,
            provenance: Provenance {
                module: module.into(),
                formula: formula.into(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordSet {
    pub schema_version: u32,
    pub records: Vec<ExperimentRecord>,
}

/// Data file produced by an experiment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub step: String,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub experiment: ExperimentKind,
    pub records: Vec<ExperimentRecord>,
    pub artifacts: Vec<Artifact>,
    /// Wall-clock times, kept out of the deterministic outputs.
    pub timings: Vec<Timing>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_pass() {
            0
        } else {
            1
        }
    }
}

/// Executes the configured experiment.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let t0 = Instant::now();
    let mut out = experiments::dispatch(cfg)?;
    out.timings.push(Timing {
        step: "total".into(),
        seconds: t0.elapsed().as_secs_f64(),
    });
    Ok(out)
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Fixed-header CSV of the records.
pub fn records_csv(records: &[ExperimentRecord]) -> String {
    let mut s = String::from(RECORD_CSV_HEADER);
    s.push('\n');
    for r in records {
        let (kind, bound, tol) = match r.criterion {
            Criterion::Within { tol } => ("within", None, Some(tol)),
            Criterion::AtLeast { bound } => ("at_least", Some(bound), None),
            Criterion::AtMost { bound } => ("at_most", Some(bound), None),
            Criterion::Report => ("report", None, None),
        };
        let fields = [
            csv_field(&r.experiment),
            csv_field(&r.params),
            csv_field(&r.statistic),
            format!("{:?}", r.value),
            opt(r.se),
            opt(r.target),
            kind.to_string(),
            opt(bound),
            opt(tol),
            r.pass.to_string(),
            csv_field(&r.provenance.module),
            csv_field(&r.provenance.formula),
        ];
        s.push_str(&fields.join(","));
        s.push('\n');
    }
    s
}

pub fn records_json(records: &[ExperimentRecord]) -> Result<String> {
    let set = RecordSet {
        schema_version: SCHEMA_VERSION,
        records: records.to_vec(),
    };
    Ok(serde_json::to_string_pretty(&set)? + "\n")
}

pub fn parse_records_json(text: &str) -> Result<RecordSet> {
    Ok(serde_json::from_str(text)?)
}

/// Writes `<stem>.records.<ext>` into `dir`.
pub fn emit(
    records: &[ExperimentRecord],
    format: OutputFormat,
    dir: &Path,
    stem: &str,
) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (path, body) = match format {
        OutputFormat::Csv => (
            dir.join(format!("{stem}.records.csv")),
            records_csv(records),
        ),
        OutputFormat::Json => (
            dir.join(format!("{stem}.records.json")),
            records_json(records)?,
        ),
    };
    fs::File::create(&path)?.write_all(body.as_bytes())?;
    Ok(path)
}

/// Output directory: explicit override, then the environment variable, then the config.
pub fn resolve_out_dir(cfg: &ExperimentConfig, cli: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out_dir.clone(),
    }
}

/// Writes records, artifacts and the separate timings file; returns the paths written.
pub fn write_outputs(
    out: &RunOutput,
    formats: &[OutputFormat],
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let stem = out.experiment.name();
    let mut paths = Vec::new();
    for &f in formats {
        paths.push(emit(&out.records, f, dir, stem)?);
    }
    for a in &out.artifacts {
        let p = dir.join(format!("{stem}.{}", a.name));
        fs::File::create(&p)?.write_all(&a.bytes)?;
        paths.push(p);
    }
    let p = dir.join(format!("{stem}.timings.json"));
    fs::write(&p, serde_json::to_string_pretty(&out.timings)? + "\n")?;
    paths.push(p);
    Ok(paths)
}
