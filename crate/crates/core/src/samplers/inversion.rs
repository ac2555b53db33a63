//! Numerical Laplace-transform inversion (Euler summation) and inverse-CDF tables.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma};

use super::stable::spectrally_positive_stable;
use crate::analytic::{gamma_fn, zolotarev_lt_complex};
use crate::error::{check_gamma, domain, Error, Result};

const EULER_A: f64 = 18.4;
const EULER_N: usize = 30;
const EULER_M: usize = 11;
/// Tail probabilities below this are left to the analytic extrapolation.
const TRIM: f64 = 1e-7;
const MAX_VIOLATION: f64 = 1e-6;

/// Euler-summation inverse of the transform `f_hat` at `t > 0`.
pub fn euler_invert(f_hat: &dyn Fn(Complex64) -> Complex64, t: f64) -> f64 {
    let a = EULER_A;
    let h = PI / t;
    let u = (a / 2.0).exp() / t;
    let x = a / (2.0 * t);
    let mut sums = Vec::with_capacity(EULER_N + EULER_M + 1);
    let mut s = f_hat(Complex64::new(x, 0.0)).re / 2.0;
    sums.push(s);
    for k in 1..=EULER_N + EULER_M {
        let term = f_hat(Complex64::new(x, k as f64 * h)).re;
        s += if k % 2 == 1 { -term } else { term };
        sums.push(s);
    }
    let mut binom = 1.0;
    let mut acc = 0.0;
    for k in 0..=EULER_M {
        acc += binom * sums[EULER_N + k];
        binom *= (EULER_M - k) as f64 / (k + 1) as f64;
    }
    u * acc / 2f64.powi(EULER_M as i32)
}

/// CDF and survival of the law with Laplace transform `lt` at `x`.
pub fn invert_cdf(lt: &dyn Fn(Complex64) -> Complex64, x: f64) -> (f64, f64) {
    let one = Complex64::new(1.0, 0.0);
    let f = euler_invert(&|s| lt(s) / s, x);
    let sf = euler_invert(&|s| (one - lt(s)) / s, x);
    (f, sf)
}

/// Power-law or exponential tail shape used beyond the tabulated range.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Tail {
    /// P(X ≤ x) ∝ x^p below the grid, or P(X > x) ∝ x^{-p} above it.
    Power(f64),
    /// Linear CDF from 0 below the grid, or exponential decay above it.
    Default,
}

#[derive(Clone, Debug)]
pub struct CdfTable {
    pub xs: Vec<f64>,
    pub cdf: Vec<f64>,
    pub sf: Vec<f64>,
    pub lower: Tail,
    pub upper: Tail,
    pub max_violation: f64,
    pub point_mass_at_zero: bool,
}

impl CdfTable {
    /// Inverts `lt` on a log grid over `[x_lo, x_hi]` with `per_decade` points.
    pub fn from_lt(
        lt: &dyn Fn(Complex64) -> Complex64,
        x_lo: f64,
        x_hi: f64,
        per_decade: usize,
        lower: Tail,
        upper: Tail,
    ) -> Result<Self> {
        if !(x_lo > 0.0 && x_hi > x_lo) || per_decade == 0 {
            return Err(domain(
                "lt_inversion_sampler",
                "need 0 < x_lo < x_hi and per_decade ≥ 1",
            ));
        }
        let m = ((x_hi / x_lo).log10() * per_decade as f64).ceil() as usize;
        let xs: Vec<f64> = (0..=m)
            .map(|i| x_lo * 10f64.powf(i as f64 / per_decade as f64))
            .collect();
        Self::on_grid(lt, &xs, lower, upper)
    }

    pub fn on_grid(
        lt: &dyn Fn(Complex64) -> Complex64,
        xs: &[f64],
        lower: Tail,
        upper: Tail,
    ) -> Result<Self> {
        let mut cdf = Vec::with_capacity(xs.len());
        let mut sf = Vec::with_capacity(xs.len());
        for &x in xs {
            let (f, s) = invert_cdf(lt, x);
            let (f, s) = if f < 0.5 { (f, 1.0 - f) } else { (1.0 - s, s) };
            cdf.push(f.clamp(0.0, 1.0));
            sf.push(s.clamp(0.0, 1.0));
        }
        let mut violation: f64 = 0.0;
        for i in 1..cdf.len() {
            violation = violation.max(cdf[i - 1] - cdf[i]).max(sf[i] - sf[i - 1]);
            cdf[i] = cdf[i].max(cdf[i - 1]);
            sf[i] = sf[i].min(sf[i - 1]);
        }
        if violation > MAX_VIOLATION {
            return Err(Error::Inversion {
                max_violation: violation,
            });
        }
        if cdf[0] >= 1.0 - TRIM {
            return Ok(Self {
                xs: vec![xs[0]],
                cdf: vec![1.0],
                sf: vec![0.0],
                lower,
                upper,
                max_violation: violation,
                point_mass_at_zero: true,
            });
        }
        let keep: Vec<usize> = (0..xs.len())
            .filter(|&i| cdf[i] >= TRIM && sf[i] >= TRIM)
            .collect();
        if keep.len() < 2 {
            return Err(domain(
                "lt_inversion_sampler",
                "grid does not resolve the distribution",
            ));
        }
        Ok(Self {
            xs: keep.iter().map(|&i| xs[i]).collect(),
            cdf: keep.iter().map(|&i| cdf[i]).collect(),
            sf: keep.iter().map(|&i| sf[i]).collect(),
            lower,
            upper,
            max_violation: violation,
            point_mass_at_zero: false,
        })
    }

    fn last(&self) -> usize {
        self.xs.len() - 1
    }

    /// Tabulated CDF with the tail models outside the grid.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if self.point_mass_at_zero {
            return if x >= 0.0 { 1.0 } else { 0.0 };
        }
        if x <= 0.0 {
            return 0.0;
        }
        let (x0, n) = (self.xs[0], self.last());
        if x < x0 {
            return match self.lower {
                Tail::Power(p) => self.cdf[0] * (x / x0).powf(p),
                Tail::Default => self.cdf[0] * x / x0,
            };
        }
        if x >= self.xs[n] {
            return 1.0 - self.sf_tail(x);
        }
        let i = self.xs.partition_point(|v| *v <= x) - 1;
        let w = (x / self.xs[i]).ln() / (self.xs[i + 1] / self.xs[i]).ln();
        if self.cdf[i] < 0.5 {
            self.cdf[i] + w * (self.cdf[i + 1] - self.cdf[i])
        } else {
            1.0 - (self.sf[i] + w * (self.sf[i + 1] - self.sf[i]))
        }
    }

    fn sf_tail(&self, x: f64) -> f64 {
        let n = self.last();
        let (xn, sn) = (self.xs[n], self.sf[n]);
        match self.upper {
            Tail::Power(q) => sn * (x / xn).powf(-q),
            Tail::Default => {
                let rate = (self.sf[n - 1] / sn).ln() / (xn - self.xs[n - 1]);
                sn * (-(x - xn) * rate).exp()
            }
        }
    }

    /// Quantile at `u ∈ (0,1)`, log-linear between grid points.
    pub fn quantile(&self, u: f64) -> f64 {
        if self.point_mass_at_zero {
            return 0.0;
        }
        let n = self.last();
        if u < self.cdf[0] {
            let x0 = self.xs[0];
            return match self.lower {
                Tail::Power(p) => x0 * (u / self.cdf[0]).powf(1.0 / p),
                Tail::Default => x0 * u / self.cdf[0],
            };
        }
        let s = 1.0 - u;
        if s < self.sf[n] {
            let (xn, sn) = (self.xs[n], self.sf[n]);
            return match self.upper {
                Tail::Power(q) => xn * (sn / s).powf(1.0 / q),
                Tail::Default => {
                    let rate = (self.sf[n - 1] / sn).ln() / (xn - self.xs[n - 1]);
                    xn + (sn / s).ln() / rate
                }
            };
        }
        let (i, w) = if u <= 0.5 {
            let i = (self.cdf.partition_point(|v| *v <= u)).clamp(1, n) - 1;
            let d = self.cdf[i + 1] - self.cdf[i];
            (i, if d > 0.0 { (u - self.cdf[i]) / d } else { 0.0 })
        } else {
            let i = (self.sf.partition_point(|v| *v > s)).clamp(1, n) - 1;
            let d = self.sf[i] - self.sf[i + 1];
            (i, if d > 0.0 { (self.sf[i] - s) / d } else { 0.0 })
        };
        let w = w.clamp(0.0, 1.0);
        (self.xs[i].ln() + w * (self.xs[i + 1] / self.xs[i]).ln()).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.quantile(u.max(f64::MIN_POSITIVE))
    }
}

/// Sampler tables for ⟨ℓ^b⟩ under N^{(b)}, built once per γ from the b = 1 law.
#[derive(Clone, Debug)]
pub struct LevelAtomSampler {
    pub gamma: f64,
    table: Option<CdfTable>,
}

/// Sums of more atoms than this use the stable central-limit approximation.
pub const GCLT_THRESHOLD: f64 = 1000.0;

impl LevelAtomSampler {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma("sample_level_mass_atom", gamma)?;
        if gamma == 2.0 {
            return Ok(Self { gamma, table: None });
        }
        let lt = move |s: Complex64| zolotarev_lt_complex(gamma, 1.0, s);
        let table = CdfTable::from_lt(
            &lt,
            1e-14,
            1e8,
            100,
            Tail::Power(gamma - 1.0),
            Tail::Power(gamma),
        )?;
        Ok(Self {
            gamma,
            table: Some(table),
        })
    }

    pub fn table(&self) -> Option<&CdfTable> {
        self.table.as_ref()
    }

    fn alpha(&self) -> f64 {
        self.gamma - 1.0
    }

    /// One draw of ⟨ℓ^b⟩ under N^{(b)}.
    pub fn sample<R: Rng + ?Sized>(&self, b: f64, rng: &mut R) -> f64 {
        match &self.table {
            None => Exp::new(1.0 / b).expect("positive mean").sample(rng),
            Some(t) => b.powf(1.0 / self.alpha()) * t.sample(rng),
        }
    }

    /// Sum of `k` independent draws at height `b`.
    pub fn sample_sum<R: Rng + ?Sized>(&self, b: f64, k: f64, rng: &mut R) -> f64 {
        if k <= 0.0 {
            return 0.0;
        }
        if self.table.is_none() {
            return Gamma::new(k, b).expect("valid gamma law").sample(rng);
        }
        if k <= GCLT_THRESHOLD {
            return (0..k as u64).map(|_| self.sample(b, rng)).sum();
        }
        let (g, al) = (self.gamma, self.alpha());
        let mean = (al * b).powf(1.0 / al);
        let t = k * al.powf(1.0 / al) * b.powf(g / al);
        (k * mean + t.powf(1.0 / g) * spectrally_positive_stable(g, rng)).max(0.0)
    }
}

/// Draw of ⟨ℓ^b⟩ under N^{(b)} from a prepared sampler.
pub fn sample_level_mass_atom<R: Rng + ?Sized>(
    sampler: &LevelAtomSampler,
    b: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(domain(
            "sample_level_mass_atom",
            format!("b={b} must be positive"),
        ));
    }
    Ok(sampler.sample(b, rng))
}

/// Small-x constant of N^{(1)}(⟨ℓ¹⟩ ≤ x) ~ c x^{γ−1}.
pub fn atom_small_constant(gamma: f64) -> f64 {
    let al = gamma - 1.0;
    1.0 / (al * al * gamma_fn(gamma))
}
