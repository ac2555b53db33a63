//! Gauge families, the doubling condition and the dyadic series tests.

use std::f64::consts::{E, LN_2};

use serde::{Deserialize, Serialize};

use crate::error::{check_gamma, domain, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum GaugeKind {
    PureExponent { q: f64 },
    LevelCritical { p: u32, theta: f64 },
    MassPacking,
    MassCritical { u: f64 },
    LevelCritical2 { u: f64 },
    CustomTable { points: Vec<(f64, f64)> },
}

/// A gauge `scale · g(r)` with `g` from one of the families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub kind: GaugeKind,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

/// e, e^e, e^{e^e}, ...
fn tower(p: u32) -> f64 {
    let mut x = E;
    for _ in 1..p {
        x = x.exp();
    }
    x
}

impl Gauge {
    pub fn new(kind: GaugeKind) -> Self {
        Self { kind, scale: 1.0 }
    }

    pub fn pure(q: f64) -> Self {
        Self::new(GaugeKind::PureExponent { q })
    }

    pub fn level_critical(p: u32, theta: f64) -> Self {
        Self::new(GaugeKind::LevelCritical { p, theta })
    }

    pub fn scaled(mut self, k: f64) -> Self {
        self.scale *= k;
        self
    }

    /// Upper end r₀ of the domain (0, r₀); custom tables use their closed range.
    pub fn r0(&self) -> f64 {
        match &self.kind {
            GaugeKind::PureExponent { .. } => 1.0,
            GaugeKind::LevelCritical { p, .. } => 1.0 / tower(*p),
            GaugeKind::MassPacking => 1.0 / E,
            GaugeKind::MassCritical { .. } | GaugeKind::LevelCritical2 { .. } => (-E).exp(),
            GaugeKind::CustomTable { points } => points.last().map(|p| p.0).unwrap_or(0.0),
        }
    }

    /// Lower end of the domain (0 except for custom tables).
    pub fn r_low(&self) -> f64 {
        match &self.kind {
            GaugeKind::CustomTable { points } => points.first().map(|p| p.0).unwrap_or(0.0),
            _ => 0.0,
        }
    }

    pub fn in_domain(&self, r: f64) -> bool {
        match &self.kind {
            GaugeKind::CustomTable { .. } => r >= self.r_low() && r <= self.r0(),
            _ => r > 0.0 && r < self.r0(),
        }
    }

    /// First dyadic index n ≥ 1 with 2^{−n} in the domain.
    pub fn first_dyadic(&self) -> u32 {
        let mut n = 1;
        while !self.in_domain((-(n as f64) * LN_2).exp()) && n < 4096 {
            n += 1;
        }
        n
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(domain("Gauge", format!("scale={} must be > 0", self.scale)));
        }
        match &self.kind {
            GaugeKind::LevelCritical { p, .. } if *p == 0 => {
                Err(domain("Gauge", "LevelCritical needs p ≥ 1"))
            }
            GaugeKind::CustomTable { points } => {
                if points.len() < 2 {
                    return Err(domain("Gauge", "custom table needs ≥ 2 points"));
                }
                for w in points.windows(2) {
                    if !(w[1].0 > w[0].0) || w[1].1 < w[0].1 {
                        return Err(domain(
                            "Gauge",
                            "custom table must be increasing in r and non-decreasing in g",
                        ));
                    }
                }
                if points.iter().any(|p| !(p.0 > 0.0) || !(p.1 > 0.0)) {
                    return Err(domain("Gauge", "custom table entries must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// ln g at ln r, for radii far below the f64 range of g itself.
    pub fn ln_eval(&self, gamma: f64, ln_r: f64) -> Result<f64> {
        check_gamma("gauge_eval", gamma)?;
        let al = gamma - 1.0;
        let r_check = || {
            if ln_r < self.r0().ln() {
                Ok(())
            } else {
                Err(domain(
                    "gauge_eval",
                    format!("r=e^{ln_r} outside domain (0, {})", self.r0()),
                ))
            }
        };
        let lng = match &self.kind {
            GaugeKind::PureExponent { q } => {
                r_check()?;
                q * ln_r
            }
            GaugeKind::LevelCritical { p, theta } => {
                r_check()?;
                let mut l = -ln_r;
                let mut prod = 0.0;
                for _ in 0..*p {
                    if !(l > 0.0) {
                        return Err(domain("gauge_eval", "iterated logarithm non-positive"));
                    }
                    prod += l.ln();
                    l = l.ln();
                }
                if !(l > 0.0) {
                    return Err(domain("gauge_eval", "iterated logarithm non-positive"));
                }
                ln_r / al - prod / gamma - theta * l.ln()
            }
            GaugeKind::MassPacking => {
                r_check()?;
                let l2 = (-ln_r).ln();
                if !(l2 > 0.0) {
                    return Err(domain("gauge_eval", "log log 1/r non-positive"));
                }
                gamma / al * ln_r - l2.ln() / al
            }
            GaugeKind::MassCritical { u } => {
                r_check()?;
                let l1 = -ln_r;
                let l2 = l1.ln();
                if !(l2 > 0.0) {
                    return Err(domain("gauge_eval", "log log 1/r non-positive"));
                }
                gamma / al * ln_r + l1.ln() / al + u * l2.ln()
            }
            GaugeKind::LevelCritical2 { u } => {
                r_check()?;
                let l1 = -ln_r;
                let l2 = l1.ln();
                if !(l2 > 0.0) {
                    return Err(domain("gauge_eval", "log log 1/r non-positive"));
                }
                ln_r / al + l1.ln() / al + u * l2.ln()
            }
            GaugeKind::CustomTable { points } => custom_ln_eval(points, ln_r)?,
        };
        Ok(lng + self.scale.ln())
    }
}

fn custom_ln_eval(points: &[(f64, f64)], ln_r: f64) -> Result<f64> {
    let r = ln_r.exp();
    let (lo, hi) = (points[0].0, points[points.len() - 1].0);
    if r < lo * (1.0 - 1e-12) || r > hi * (1.0 + 1e-12) {
        return Err(domain(
            "gauge_eval",
            format!("r={r} outside table range [{lo}, {hi}]"),
        ));
    }
    let i = points
        .partition_point(|p| p.0 <= r)
        .clamp(1, points.len() - 1);
    let (r0, g0) = points[i - 1];
    let (r1, g1) = points[i];
    let t = (ln_r - r0.ln()) / (r1.ln() - r0.ln());
    Ok(g0.ln() + t.clamp(0.0, 1.0) * (g1.ln() - g0.ln()))
}

pub fn gauge_eval(g: &Gauge, gamma: f64, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(domain("gauge_eval", format!("r={r} must be > 0")));
    }
    Ok(g.ln_eval(gamma, r.ln())?.exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Doubling {
    Finite(f64),
    NotDoubling { max_ratio: f64 },
}

pub const DOUBLING_CAP: f64 = 1e6;
pub const DOUBLING_GRID: usize = 2000;

/// max of g(2r)/g(r) over a geometric grid of [r_min, r_max].
pub fn doubling_constant(g: &Gauge, gamma: f64, r_min: f64, r_max: f64) -> Result<Doubling> {
    doubling_constant_capped(g, gamma, r_min, r_max, DOUBLING_CAP)
}

pub fn doubling_constant_capped(
    g: &Gauge,
    gamma: f64,
    r_min: f64,
    r_max: f64,
    cap: f64,
) -> Result<Doubling> {
    if !(r_min > 0.0 && r_min < r_max) {
        return Err(domain(
            "doubling_constant",
            format!("need 0 < r_min={r_min} < r_max={r_max}"),
        ));
    }
    let (a, b) = (r_min.ln(), r_max.ln());
    let mut worst: f64 = 0.0;
    for i in 0..DOUBLING_GRID {
        let lr = a + (b - a) * i as f64 / (DOUBLING_GRID - 1) as f64;
        let ratio = (g.ln_eval(gamma, lr + LN_2)? - g.ln_eval(gamma, lr)?).exp();
        worst = worst.max(ratio);
    }
    if worst > cap || !worst.is_finite() {
        Ok(Doubling::NotDoubling { max_ratio: worst })
    } else {
        Ok(Doubling::Finite(worst))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeriesKind {
    PackLevel,
    HausLevel,
    HausMass,
}

impl SeriesKind {
    pub fn name(&self) -> &'static str {
        match self {
            SeriesKind::PackLevel => "pack_level",
            SeriesKind::HausLevel => "haus_level",
            SeriesKind::HausMass => "haus_mass",
        }
    }
}

/// ln of the n-th series term.
pub fn ln_series_term(g: &Gauge, gamma: f64, kind: SeriesKind, n: u64) -> Result<f64> {
    let al = gamma - 1.0;
    let ln_r = -(n as f64) * LN_2;
    let lg = g.ln_eval(gamma, ln_r)?;
    Ok(match kind {
        SeriesKind::PackLevel => gamma * (-ln_r / al + lg),
        SeriesKind::HausLevel => ln_r - al * lg,
        SeriesKind::HausMass => gamma * ln_r - al * lg,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPartial {
    /// First n whose radius 2^{−n} lies in the gauge domain; earlier terms are omitted.
    pub first_n: u64,
    /// partial[k] = Σ_{n = first_n}^{first_n + k} term(n).
    pub partial: Vec<f64>,
}

pub fn series_partial(
    g: &Gauge,
    gamma: f64,
    kind: SeriesKind,
    n_terms: usize,
) -> Result<SeriesPartial> {
    check_gamma("series_partial", gamma)?;
    if n_terms == 0 {
        return Err(domain("series_partial", "N must be ≥ 1"));
    }
    let first_n = g.first_dyadic() as u64;
    let mut acc = 0.0;
    let mut partial = Vec::with_capacity(n_terms);
    for k in 0..n_terms as u64 {
        acc += ln_series_term(g, gamma, kind, first_n + k)?.exp();
        partial.push(acc);
    }
    Ok(SeriesPartial { first_n, partial })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Converges,
    Diverges,
    Unknown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    ClosedForm,
    Numeric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub method: Method,
}

fn bertrand(exponent: f64) -> Verdict {
    if exponent > 1.0 {
        Verdict::Converges
    } else {
        Verdict::Diverges
    }
}

fn closed_form(g: &Gauge, gamma: f64, kind: SeriesKind) -> Option<Verdict> {
    use SeriesKind::*;
    use Verdict::*;
    let al = gamma - 1.0;
    Some(match (&g.kind, kind) {
        (GaugeKind::PureExponent { q }, PackLevel) => {
            if *q > 1.0 / al {
                Converges
            } else {
                Diverges
            }
        }
        (GaugeKind::PureExponent { q }, HausLevel) => {
            if *q < 1.0 / al {
                Converges
            } else {
                Diverges
            }
        }
        (GaugeKind::PureExponent { q }, HausMass) => {
            if *q < gamma / al {
                Converges
            } else {
                Diverges
            }
        }
        (GaugeKind::LevelCritical { theta, .. }, PackLevel) => bertrand(gamma * theta),
        (GaugeKind::LevelCritical2 { u }, HausLevel) => bertrand(u * al),
        (GaugeKind::MassCritical { u }, HausMass) => bertrand(u * al),
        _ => return None,
    })
}

/// Dyadic block sums D_k = Σ_{2^k ≤ n < 2^{k+1}} term(n), in log space.
fn ln_block_sums(g: &Gauge, gamma: f64, kind: SeriesKind, k_max: u32) -> Result<Vec<f64>> {
    let first = g.first_dyadic() as u64;
    let mut out = Vec::new();
    for k in 0..=k_max {
        let (lo, hi) = ((1u64 << k).max(first), 1u64 << (k + 1));
        if lo >= hi {
            continue;
        }
        let terms: Vec<f64> = (lo..hi)
            .map(|n| ln_series_term(g, gamma, kind, n))
            .collect::<Result<_>>()?;
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = terms.iter().map(|t| (t - m).exp()).sum();
        out.push(m + s.ln());
    }
    Ok(out)
}

pub const NUMERIC_K_MAX: u32 = 19;

/// Ratio test on the last three dyadic blocks; Unknown when neither rule fires.
pub fn series_classify_numeric(g: &Gauge, gamma: f64, kind: SeriesKind) -> Verdict {
    let Ok(d) = ln_block_sums(g, gamma, kind, NUMERIC_K_MAX) else {
        return Verdict::Unknown;
    };
    if d.len() < 3 {
        return Verdict::Unknown;
    }
    let k = d.len();
    let r1 = (d[k - 1] - d[k - 2]).exp();
    let r2 = (d[k - 2] - d[k - 3]).exp();
    if r1.is_nan() || r2.is_nan() {
        Verdict::Unknown
    } else if r1 < 0.5 && r2 < 0.5 {
        Verdict::Converges
    } else if r1 >= 1.0 && r2 >= 1.0 {
        Verdict::Diverges
    } else {
        Verdict::Unknown
    }
}

pub fn series_classify(g: &Gauge, gamma: f64, kind: SeriesKind) -> Classification {
    if let GaugeKind::CustomTable { .. } = g.kind {
        return Classification {
            verdict: Verdict::Unknown,
            method: Method::Numeric,
        };
    }
    if gamma <= 1.0 || gamma > 2.0 || g.validate().is_err() {
        return Classification {
            verdict: Verdict::Unknown,
            method: Method::Numeric,
        };
    }
    match closed_form(g, gamma, kind) {
        Some(verdict) => Classification {
            verdict,
            method: Method::ClosedForm,
        },
        None => Classification {
            verdict: series_classify_numeric(g, gamma, kind),
            method: Method::Numeric,
        },
    }
}
