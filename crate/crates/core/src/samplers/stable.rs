//! Stable variates, the Sibuya law and the spinal subordinator.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::analytic::ln_gamma;
use crate::error::{check_gamma, domain, Result};

/// Positive α-stable variate with E[e^{-λS}] = e^{-λ^α}, 0 < α < 1 (Kanter).
pub fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    let u = PI * rng.random::<f64>();
    let e: f64 = Exp1.sample(rng);
    let a = (alpha * u).sin() / u.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * u).sin() / e).powf((1.0 - alpha) / alpha);
    a * b
}

/// Spectrally positive γ-stable variate X with E[e^{-λX}] = e^{λ^γ}, 1 < γ < 2
/// (Chambers–Mallows–Stuck, β = 1).
pub fn spectrally_positive_stable<R: Rng + ?Sized>(gamma: f64, rng: &mut R) -> f64 {
    let v = PI * (rng.random::<f64>() - 0.5);
    let w: f64 = Exp1.sample(rng);
    let t = (PI * gamma / 2.0).tan();
    let b = t.atan() / gamma;
    let s = (1.0 + t * t).powf(1.0 / (2.0 * gamma));
    let x = s * (gamma * (v + b)).sin() / v.cos().powf(1.0 / gamma)
        * ((v - gamma * (v + b)).cos() / w).powf((1.0 - gamma) / gamma);
    (PI * gamma / 2.0).cos().abs().powf(1.0 / gamma) * x
}

/// Smallest integer k ≥ k0 with `sf(k) ≤ u`, for a decreasing survival function.
/// Values beyond 2^53 are returned as the real root of the bracket.
pub(crate) fn invert_survival(sf: impl Fn(f64) -> f64, k0: f64, u: f64) -> f64 {
    if sf(k0) <= u {
        return k0;
    }
    let (mut lo, mut hi) = (k0, (2.0 * k0).max(k0 + 1.0));
    while sf(hi) > u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    while hi - lo > 1.0 {
        let mid = if hi < 9e15 {
            ((lo + hi) / 2.0).floor()
        } else {
            (lo * hi).sqrt()
        };
        if mid <= lo || mid >= hi {
            break;
        }
        if sf(mid) > u {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Sibuya(α): P(K > k) = ∏_{j ≤ k} (1 − α/j), k ≥ 1; returned as a real-valued integer.
pub fn sibuya<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u: f64 = 1.0 - rng.random::<f64>();
    let mut s = 1.0;
    for k in 1..=1000u32 {
        s *= 1.0 - alpha / k as f64;
        if s <= u {
            return k as f64;
        }
    }
    let lg = ln_gamma(1.0 - alpha);
    let sf = |k: f64| (ln_gamma(k + 1.0 - alpha) - lg - ln_gamma(k + 1.0)).exp();
    invert_survival(sf, 1000.0, u)
}

/// Path of the subordinator with Laplace exponent γλ^{γ−1} on `steps` equal cells of
/// `[0, horizon]`; returns U at the `steps + 1` grid points. Exact in law at the grid.
pub fn stable_subordinator<R: Rng + ?Sized>(
    gamma: f64,
    horizon: f64,
    steps: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    check_gamma("stable_subordinator", gamma)?;
    if !(horizon > 0.0 && horizon.is_finite()) || steps == 0 {
        return Err(domain(
            "stable_subordinator",
            "need horizon > 0 and steps ≥ 1",
        ));
    }
    let h = horizon / steps as f64;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(0.0);
    let mut u = 0.0;
    if gamma == 2.0 {
        for i in 1..=steps {
            path.push(2.0 * horizon * i as f64 / steps as f64);
        }
        return Ok(path);
    }
    let alpha = gamma - 1.0;
    let scale = (gamma * h).powf(1.0 / alpha);
    for _ in 0..steps {
        u += scale * positive_stable(alpha, rng);
        path.push(u);
    }
    Ok(path)
}
