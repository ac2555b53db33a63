//! Brownian (γ = 2) excursions of the height process H = X − I with ψ(λ) = λ².

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{domain, Error, Result};
use crate::tree::CodingFunction;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExcursionOptions {
    /// Cap on walk length per attempt.
    pub max_steps: usize,
    /// Attempts before giving up.
    pub max_attempts: usize,
    /// Reflect the walk at this height: excursions above it are dropped and
    /// visits strictly below it are unaffected.
    pub clip: Option<f64>,
}

impl Default for ExcursionOptions {
    fn default() -> Self {
        Self {
            max_steps: 1 << 24,
            max_attempts: 1000,
            clip: None,
        }
    }
}

/// Excursion of H. With `min_height = 0`, a normalized excursion of lifetime 1 on
/// `n` steps (Vervaat transform of a Gaussian bridge). With `min_height = b > 0`, an
/// excursion under N(· | sup H ≥ b) on the height lattice of spacing b/n.
pub fn brownian_excursion<R: Rng + ?Sized>(
    n: usize,
    min_height: f64,
    opts: &ExcursionOptions,
    rng: &mut R,
) -> Result<CodingFunction> {
    if n < 2 {
        return Err(domain("brownian_excursion", format!("n={n} must be ≥ 2")));
    }
    if min_height == 0.0 {
        return Ok(vervaat(n, rng));
    }
    if !(min_height > 0.0 && min_height.is_finite()) {
        return Err(domain(
            "brownian_excursion",
            format!("min_height={min_height} must be ≥ 0"),
        ));
    }
    lattice_excursion(n, min_height, opts, rng)
}

fn vervaat<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CodingFunction {
    let sd = (1.0 / n as f64).sqrt();
    let mut w = vec![0.0; n + 1];
    for k in 1..=n {
        let z: f64 = StandardNormal.sample(rng);
        w[k] = w[k - 1] + sd * z;
    }
    let end = w[n];
    let bridge: Vec<f64> = (0..=n).map(|k| w[k] - end * k as f64 / n as f64).collect();
    let m = (0..n)
        .min_by(|&i, &j| bridge[i].total_cmp(&bridge[j]))
        .unwrap_or(0);
    let mut values: Vec<f64> = (0..=n)
        .map(|k| 2f64.sqrt() * (bridge[(m + k) % n] - bridge[m]))
        .collect();
    values[n] = 0.0;
    CodingFunction::new(1.0 / n as f64, values, 2.0, 0)
}

fn lattice_excursion<R: Rng + ?Sized>(
    n: usize,
    b: f64,
    opts: &ExcursionOptions,
    rng: &mut R,
) -> Result<CodingFunction> {
    let s = b / n as f64;
    let top = n as u64;
    let clip = match opts.clip {
        Some(c) => {
            let l = (c / s).floor() as u64;
            if l < top {
                return Err(domain(
                    "brownian_excursion",
                    format!("clip {c} below min_height {b}"),
                ));
            }
            Some(l)
        }
        None => None,
    };
    for _ in 0..opts.max_attempts {
        if let Some(levels) = walk(top, clip, opts.max_steps, rng) {
            let values = levels.iter().map(|&j| j as f64 * s).collect();
            return Ok(CodingFunction::new(s * s / 2.0, values, 2.0, 0));
        }
    }
    Err(Error::Budget(format!(
        "no excursion from height {b} returned to 0 within {} steps in {} attempts",
        opts.max_steps, opts.max_attempts
    )))
}

/// Lattice walk: h-transformed climb 0 → top, then a free walk back to 0.
fn walk<R: Rng + ?Sized>(
    top: u64,
    clip: Option<u64>,
    max_steps: usize,
    rng: &mut R,
) -> Option<Vec<u32>> {
    let mut path: Vec<u32> = Vec::with_capacity((4 * top * top) as usize + 16);
    let mut j: u64 = 0;
    path.push(0);
    while j < top {
        j = if j == 0 {
            1
        } else {
            let up = rng.random::<f64>() * ((2 * j) as f64) < ((j + 1) as f64);
            if up {
                j + 1
            } else {
                j - 1
            }
        };
        path.push(j as u32);
    }
    while j > 0 {
        if path.len() > max_steps {
            return None;
        }
        j = if clip == Some(j) || !rng.random::<bool>() {
            j - 1
        } else {
            j + 1
        };
        path.push(j as u32);
    }
    Some(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vervaat_is_an_excursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let c = brownian_excursion(1000, 0.0, &ExcursionOptions::default(), &mut rng).unwrap();
        c.validate().unwrap();
        assert_eq!(c.values.len(), 1001);
        assert!((c.lifetime() - 1.0).abs() < 1e-12);
        assert!(c.values[1..1000].iter().all(|v| *v > 0.0));
    }

    #[test]
    fn conditioned_excursion_reaches_b() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let opts = ExcursionOptions {
            clip: Some(2.0),
            ..Default::default()
        };
        for _ in 0..50 {
            let c = brownian_excursion(16, 0.5, &opts, &mut rng).unwrap();
            c.validate().unwrap();
            let h = c.values.iter().cloned().fold(0.0, f64::max);
            assert!(h >= 0.5 && h <= 2.0);
            assert_eq!(c.delta, (0.5f64 / 16.0).powi(2) / 2.0);
        }
    }

    #[test]
    fn survival_ratio_is_b_over_a() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let opts = ExcursionOptions {
            clip: Some(2.0),
            ..Default::default()
        };
        let reps = 4000;
        let hits = (0..reps)
            .filter(|_| {
                let c = brownian_excursion(8, 1.0, &opts, &mut rng).unwrap();
                c.values.iter().any(|v| *v >= 2.0)
            })
            .count() as f64;
        let p = hits / reps as f64;
        let se = (0.5 * 0.5 / reps as f64).sqrt();
        assert!((p - 0.5).abs() < 4.0 * se, "p={p}");
    }

    #[test]
    fn budget_error_when_walks_never_return() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let opts = ExcursionOptions {
            max_steps: 10,
            max_attempts: 3,
            clip: None,
        };
        assert!(matches!(
            brownian_excursion(8, 1.0, &opts, &mut rng),
            Err(Error::Budget(_))
        ));
        assert!(brownian_excursion(1, 0.0, &opts, &mut rng).is_err());
    }
}
