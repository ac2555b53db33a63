//! Strict INI-style experiment configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauges::{Gauge, GaugeKind, SeriesKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AnalyticCheck,
    SimulateTree,
    SpinalSample,
    DensityExp,
    SeriesTest,
    Calibrate,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        ExperimentKind::AnalyticCheck,
        ExperimentKind::SimulateTree,
        ExperimentKind::SpinalSample,
        ExperimentKind::DensityExp,
        ExperimentKind::SeriesTest,
        ExperimentKind::Calibrate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::AnalyticCheck => "analytic-check",
            ExperimentKind::SimulateTree => "simulate-tree",
            ExperimentKind::SpinalSample => "spinal-sample",
            ExperimentKind::DensityExp => "density-exp",
            ExperimentKind::SeriesTest => "series-test",
            ExperimentKind::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| format!("unknown experiment '{s}'"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    Spinal,
    Tree,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// Grid sizes and experiment geometry; `None` means the experiment default.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub n: Option<usize>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub radii: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub times: Option<Vec<f64>>,
    pub n_min: Option<u32>,
    pub n_max: Option<u32>,
    pub points: Option<usize>,
    pub groups: Option<usize>,
    pub eps_level: Option<f64>,
    pub step: Option<f64>,
    pub mass: Option<bool>,
    pub source: Option<ProfileSource>,
    pub window: Option<usize>,
    pub consistency: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    pub abs: Option<f64>,
    pub sigma: Option<f64>,
    pub ks_p: Option<f64>,
    pub agreement: Option<f64>,
    pub rel: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub gamma: f64,
    pub seed: u64,
    pub replicates: Option<usize>,
    pub workers: usize,
    pub grid: GridConfig,
    pub gauges: Vec<(String, Gauge)>,
    pub series_kind: Option<SeriesKind>,
    pub out_dir: PathBuf,
    pub formats: Vec<OutputFormat>,
    pub tolerance: ToleranceConfig,
}

impl ExperimentConfig {
    /// Defaults for everything but the experiment and γ.
    pub fn new(experiment: ExperimentKind, gamma: f64) -> Self {
        Self {
            experiment,
            gamma,
            seed: 0,
            replicates: None,
            workers: 1,
            grid: GridConfig::default(),
            gauges: Vec::new(),
            series_kind: None,
            out_dir: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
            tolerance: ToleranceConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: String| {
            Err(Error::Config {
                key: key.into(),
                reason,
            })
        };
        if !(self.gamma > 1.0 && self.gamma <= 2.0) {
            return bad("run.gamma", format!("gamma={} outside (1, 2]", self.gamma));
        }
        if self.replicates == Some(0) {
            return bad("run.replicates", "must be ≥ 1".into());
        }
        if self.workers == 0 {
            return bad("run.workers", "must be ≥ 1".into());
        }
        let g = &self.grid;
        for (key, v) in [
            ("grid.a", g.a),
            ("grid.b", g.b),
            ("grid.eps_level", g.eps_level),
            ("grid.step", g.step),
        ] {
            if let Some(x) = v {
                if !(x > 0.0 && x.is_finite()) {
                    return bad(key, format!("{x} must be finite and > 0"));
                }
            }
        }
        for (key, v) in [
            ("grid.radii", &g.radii),
            ("grid.lambdas", &g.lambdas),
            ("grid.times", &g.times),
        ] {
            if let Some(xs) = v {
                if xs.is_empty() {
                    return bad(key, "empty list".into());
                }
                if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                    return bad(key, format!("entry {x} must be finite and > 0"));
                }
            }
        }
        if let (Some(a), Some(b)) = (g.a, g.b) {
            if self.experiment == ExperimentKind::Calibrate && b <= a {
                return bad("grid.b", format!("b={b} must exceed a={a}"));
            }
        }
        if let (Some(lo), Some(hi)) = (g.n_min, g.n_max) {
            if lo > hi {
                return bad("grid.n_min", format!("n_min={lo} exceeds n_max={hi}"));
            }
        }
        if g.n_max.is_some_and(|n| n > 60) {
            return bad("grid.n_max", "must be ≤ 60".into());
        }
        for (key, v) in [
            ("grid.n", g.n),
            ("grid.points", g.points),
            ("grid.groups", g.groups),
            ("grid.window", g.window),
        ] {
            if v == Some(0) {
                return bad(key, "must be ≥ 1".into());
            }
        }
        for (name, gauge) in &self.gauges {
            gauge.validate().map_err(|e| Error::Config {
                key: format!("gauges.{name}"),
                reason: e.to_string(),
            })?;
        }
        let t = &self.tolerance;
        for (key, v) in [
            ("tolerance.abs", t.abs),
            ("tolerance.sigma", t.sigma),
            ("tolerance.rel", t.rel),
        ] {
            if let Some(x) = v {
                if !(x > 0.0) {
                    return bad(key, format!("{x} must be > 0"));
                }
            }
        }
        for (key, v) in [
            ("tolerance.ks_p", t.ks_p),
            ("tolerance.agreement", t.agreement),
        ] {
            if let Some(x) = v {
                if !(0.0..=1.0).contains(&x) {
                    return bad(key, format!("{x} outside [0, 1]"));
                }
            }
        }
        if self.formats.is_empty() {
            return bad("output.formats", "no output format".into());
        }
        Ok(())
    }
}

fn cfg_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.parse::<T>()
        .map_err(|e| cfg_err(key, format!("'{v}': {e}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|s| num::<f64>(key, s.trim())).collect()
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(cfg_err(key, format!("'{v}' is not a boolean"))),
    }
}

/// `family key=value ... [scale=K]`, e.g. `level_critical p=1 theta=0.25`.
pub fn parse_gauge(key: &str, v: &str) -> Result<Gauge> {
    let mut tokens = v.split_whitespace();
    let family = tokens
        .next()
        .ok_or_else(|| cfg_err(key, "empty gauge descriptor"))?;
    let mut args: BTreeMap<&str, &str> = BTreeMap::new();
    for t in tokens {
        let (k, x) = t
            .split_once('=')
            .ok_or_else(|| cfg_err(key, format!("'{t}' is not key=value")))?;
        if args.insert(k, x).is_some() {
            return Err(cfg_err(key, format!("duplicate gauge argument '{k}'")));
        }
    }
    let mut take = |name: &str| {
        args.remove(name)
            .ok_or_else(|| cfg_err(key, format!("{family} needs '{name}'")))
    };
    let kind = match family {
        "pure" => GaugeKind::PureExponent {
            q: num(key, take("q")?)?,
        },
        "level_critical" => GaugeKind::LevelCritical {
            p: num(key, take("p")?)?,
            theta: num(key, take("theta")?)?,
        },
        "mass_packing" => GaugeKind::MassPacking,
        "mass_critical" => GaugeKind::MassCritical {
            u: num(key, take("u")?)?,
        },
        "level_critical2" => GaugeKind::LevelCritical2 {
            u: num(key, take("u")?)?,
        },
        "custom" => {
            let pts = take("points")?
                .split(';')
                .map(|p| {
                    let (r, g) = p
                        .split_once(':')
                        .ok_or_else(|| cfg_err(key, format!("'{p}' is not r:g")))?;
                    Ok((num(key, r)?, num(key, g)?))
                })
                .collect::<Result<Vec<(f64, f64)>>>()?;
            GaugeKind::CustomTable { points: pts }
        }
        _ => return Err(cfg_err(key, format!("unknown gauge family '{family}'"))),
    };
    let scale = match args.remove("scale") {
        Some(s) => num(key, s)?,
        None => 1.0,
    };
    if let Some(k) = args.keys().next() {
        return Err(cfg_err(
            key,
            format!("unknown gauge argument '{k}' for {family}"),
        ));
    }
    Ok(Gauge { kind, scale })
}

/// Descriptor string accepted by [`parse_gauge`].
pub fn gauge_descriptor(g: &Gauge) -> String {
    let mut s = match &g.kind {
        GaugeKind::PureExponent { q } => format!("pure q={q}"),
        GaugeKind::LevelCritical { p, theta } => format!("level_critical p={p} theta={theta}"),
        GaugeKind::MassPacking => "mass_packing".into(),
        GaugeKind::MassCritical { u } => format!("mass_critical u={u}"),
        GaugeKind::LevelCritical2 { u } => format!("level_critical2 u={u}"),
        GaugeKind::CustomTable { points } => format!(
            "custom points={}",
            points
                .iter()
                .map(|(r, g)| format!("{r}:{g}"))
                .collect::<Vec<_>>()
                .join(";")
        ),
    };
    if g.scale != 1.0 {
        s.push_str(&format!(" scale={}", g.scale));
    }
    s
}

fn series_kind(key: &str, v: &str) -> Result<SeriesKind> {
    match v {
        "pack_level" => Ok(SeriesKind::PackLevel),
        "haus_level" => Ok(SeriesKind::HausLevel),
        "haus_mass" => Ok(SeriesKind::HausMass),
        _ => Err(cfg_err(key, format!("unknown series kind '{v}'"))),
    }
}

/// Parses the INI text (`#` starts a comment). Unknown sections or keys and duplicate
/// keys are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut section = String::new();
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    let mut values: Vec<(String, String, String, usize)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| cfg_err(&format!("line {lineno}"), "unterminated section header"))?;
            section = name.trim().to_string();
            if !["run", "grid", "gauges", "output", "tolerance"].contains(&section.as_str()) {
                return Err(cfg_err(
                    &section,
                    format!("unknown section (line {lineno})"),
                ));
            }
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            cfg_err(
                &format!("line {lineno}"),
                format!("expected key = value, got '{line}'"),
            )
        })?;
        if section.is_empty() {
            return Err(cfg_err(
                k.trim(),
                format!("key outside any section (line {lineno})"),
            ));
        }
        let full = format!("{section}.{}", k.trim());
        if let Some(prev) = seen.insert(full.clone(), lineno) {
            return Err(cfg_err(
                &full,
                format!("duplicate key (lines {prev} and {lineno})"),
            ));
        }
        values.push((
            section.clone(),
            k.trim().to_string(),
            v.trim().to_string(),
            lineno,
        ));
    }
    let mut experiment = None;
    let mut gamma = None;
    let mut cfg = ExperimentConfig::new(ExperimentKind::AnalyticCheck, 2.0);
    for (sec, k, v, _) in &values {
        let key = format!("{sec}.{k}");
        let key = key.as_str();
        let g = &mut cfg.grid;
        let t = &mut cfg.tolerance;
        match (sec.as_str(), k.as_str()) {
            ("run", "experiment") => {
                experiment = Some(v.parse::<ExperimentKind>().map_err(|e| cfg_err(key, e))?)
            }
            ("run", "gamma") => gamma = Some(num::<f64>(key, v)?),
            ("run", "seed") => cfg.seed = num(key, v)?,
            ("run", "replicates") => cfg.replicates = Some(num(key, v)?),
            ("run", "workers") => cfg.workers = num(key, v)?,
            ("grid", "n") => g.n = Some(num(key, v)?),
            ("grid", "a") => g.a = Some(num(key, v)?),
            ("grid", "b") => g.b = Some(num(key, v)?),
            ("grid", "radii") => g.radii = Some(list(key, v)?),
            ("grid", "lambdas") => g.lambdas = Some(list(key, v)?),
            ("grid", "times") => g.times = Some(list(key, v)?),
            ("grid", "n_min") => g.n_min = Some(num(key, v)?),
            ("grid", "n_max") => g.n_max = Some(num(key, v)?),
            ("grid", "points") => g.points = Some(num(key, v)?),
            ("grid", "groups") => g.groups = Some(num(key, v)?),
            ("grid", "eps_level") => g.eps_level = Some(num(key, v)?),
            ("grid", "step") => g.step = Some(num(key, v)?),
            ("grid", "mass") => g.mass = Some(boolean(key, v)?),
            ("grid", "window") => g.window = Some(num(key, v)?),
            ("grid", "consistency") => g.consistency = Some(boolean(key, v)?),
            ("grid", "source") => {
                g.source = Some(match v.as_str() {
                    "spinal" => ProfileSource::Spinal,
                    "tree" => ProfileSource::Tree,
                    _ => return Err(cfg_err(key, format!("unknown source '{v}'"))),
                })
            }
            ("gauges", "kind") => cfg.series_kind = Some(series_kind(key, v)?),
            ("gauges", name) => cfg.gauges.push((name.to_string(), parse_gauge(key, v)?)),
            ("output", "dir") => cfg.out_dir = PathBuf::from(v),
            ("output", "formats") => {
                cfg.formats = v
                    .split(',')
                    .map(|f| match f.trim() {
                        "csv" => Ok(OutputFormat::Csv),
                        "json" => Ok(OutputFormat::Json),
                        other => Err(cfg_err(key, format!("unknown format '{other}'"))),
                    })
                    .collect::<Result<_>>()?
            }
            ("tolerance", "abs") => t.abs = Some(num(key, v)?),
            ("tolerance", "sigma") => t.sigma = Some(num(key, v)?),
            ("tolerance", "ks_p") => t.ks_p = Some(num(key, v)?),
            ("tolerance", "agreement") => t.agreement = Some(num(key, v)?),
            ("tolerance", "rel") => t.rel = Some(num(key, v)?),
            _ => return Err(cfg_err(key, "unknown key")),
        }
    }
    cfg.experiment = experiment.ok_or_else(|| cfg_err("run.experiment", "missing"))?;
    cfg.gamma = gamma.ok_or_else(|| cfg_err("run.gamma", "missing"))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
# dichotomy run
[run]
experiment = density-exp
gamma = 1.5
seed = 7
replicates = 3
workers = 2

[grid]
radii = 0.25, 0.5 # trailing comment
n_min = 2
n_max = 12
source = spinal

[gauges]
kind = pack_level
g1 = level_critical p=1 theta=1
g2 = pure q=2 scale=3

[output]
dir = results
formats = json

[tolerance]
agreement = 0.9
";

    #[test]
    fn parses_all_sections() {
        let c = parse_config(SAMPLE).unwrap();
        assert_eq!(c.experiment, ExperimentKind::DensityExp);
        assert_eq!(c.gamma, 1.5);
        assert_eq!(c.seed, 7);
        assert_eq!(c.workers, 2);
        assert_eq!(c.grid.radii, Some(vec![0.25, 0.5]));
        assert_eq!(c.grid.source, Some(ProfileSource::Spinal));
        assert_eq!(c.series_kind, Some(SeriesKind::PackLevel));
        assert_eq!(c.gauges.len(), 2);
        assert_eq!(c.gauges[1].1, Gauge::pure(2.0).scaled(3.0));
        assert_eq!(c.formats, vec![OutputFormat::Json]);
        assert_eq!(c.out_dir, PathBuf::from("results"));
        assert_eq!(c.tolerance.agreement, Some(0.9));
    }

    #[test]
    fn gamma_bound_is_named() {
        let e = parse_config("[run]\nexperiment = analytic-check\ngamma = 2.5\n").unwrap_err();
        match e {
            Error::Config { key, reason } => {
                assert_eq!(key, "run.gamma");
                assert!(reason.contains("(1, 2]"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn strictness() {
        let base = "[run]\nexperiment = analytic-check\ngamma = 2\n";
        for (extra, key) in [
            ("bogus = 1\n", "run.bogus"),
            ("[grid]\nradius = 1\n", "grid.radius"),
            ("[nope]\n", "nope"),
            ("seed = 1\nseed = 2\n", "run.seed"),
            ("[grid]\nn_min = 5\nn_max = 2\n", "grid.n_min"),
            ("[gauges]\ng = weird x=1\n", "gauges.g"),
            ("[gauges]\ng = pure q=1 extra=2\n", "gauges.g"),
            ("[grid]\nradii = 0.5, -1\n", "grid.radii"),
        ] {
            match parse_config(&format!("{base}{extra}")) {
                Err(Error::Config { key: k, .. }) => assert_eq!(k, key, "{extra}"),
                other => panic!("{extra}: {other:?}"),
            }
        }
        assert!(matches!(
            parse_config("[run]\ngamma = 2\n"),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn gauge_descriptors_round_trip() {
        for s in [
            "pure q=1.5",
            "level_critical p=2 theta=0.25",
            "mass_packing",
            "mass_critical u=-0.5 scale=2",
            "level_critical2 u=1",
            "custom points=0.001:0.1;0.1:0.5",
        ] {
            let g = parse_gauge("k", s).unwrap();
            assert_eq!(gauge_descriptor(&g), s);
            assert_eq!(parse_gauge("k", &gauge_descriptor(&g)).unwrap(), g);
        }
    }
}
