//! Spinal decomposition samplers for level-ball, level-shell, mass-ball and mass-shell masses.
//!
//! Level masses: grafts on the spine at distance b below the level arrive with intensity
//! (γ/(γ−1)) db/b; each carries a Sibuya(γ−1) number of independent ⟨ℓ^b⟩ atoms.
//! Mass masses: the profile Y_s of the local time at distance s from the sampled point is a
//! branching process with immigration, Y' = (Poisson(Y v(Δ)) atoms of ⟨ℓ^Δ⟩) + L*_{2Δ}; the
//! ball mass ∫_0^r Y_s ds is integrated by the trapezoid rule on a step-Δ grid.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use serde::{Deserialize, Serialize};

use super::inversion::{LevelAtomSampler, GCLT_THRESHOLD};
use super::stable::{sibuya, spectrally_positive_stable};
use crate::analytic::{ball_lt_mass, csbp_u};
use crate::error::{check_gamma, domain, Error, Result};
use crate::rng::RngStream;

/// Dyadic shells below the innermost radius per unit of 1/(γ−1) in the exponent.
const INNER_SHELLS_PER_ALPHA: f64 = 46.5;

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean)
            .expect("finite positive mean")
            .sample(rng)
    }
}

#[derive(Clone, Debug)]
pub struct SpinalSampler {
    pub gamma: f64,
    atoms: LevelAtomSampler,
}

impl SpinalSampler {
    pub fn new(gamma: f64) -> Result<Self> {
        check_gamma("spinal_sampler", gamma)?;
        Ok(Self {
            gamma,
            atoms: LevelAtomSampler::new(gamma)?,
        })
    }

    pub fn atoms(&self) -> &LevelAtomSampler {
        &self.atoms
    }

    fn alpha(&self) -> f64 {
        self.gamma - 1.0
    }

    /// Level mass contributed by grafts at distance b ∈ (lo, hi] below the level.
    pub fn graft_sum<R: Rng + ?Sized>(&self, lo: f64, hi: f64, rng: &mut R) -> f64 {
        let al = self.alpha();
        let n = poisson(self.gamma / al * (hi / lo).ln(), rng) as u64;
        let mut total = 0.0;
        for _ in 0..n {
            let b = hi * (lo / hi).powf(rng.random::<f64>());
            let k = sibuya(al, rng);
            total += self.atoms.sample_sum(b, k, rng);
        }
        total
    }

    fn inner_floor(&self, hi: f64) -> f64 {
        let j = (INNER_SHELLS_PER_ALPHA * self.alpha()).ceil() + 1.0;
        hi * 2f64.powf(-j)
    }

    /// One draw of L*_r: grafts at b ∈ (0, r/2], truncated far below numerical resolution.
    pub fn level_ball_single<R: Rng + ?Sized>(&self, r: f64, rng: &mut R) -> f64 {
        if self.gamma == 2.0 {
            return Gamma::new(2.0, r / 2.0)
                .expect("valid gamma law")
                .sample(rng);
        }
        let hi = r / 2.0;
        self.graft_sum(self.inner_floor(hi), hi, rng)
    }

    /// CSBP transition of the local-time profile over a height step d.
    fn csbp_step<R: Rng + ?Sized>(&self, y: f64, d: f64, rng: &mut R) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        let al = self.alpha();
        let m = y * (al * d).powf(-1.0 / al);
        if self.gamma < 2.0 && m > GCLT_THRESHOLD {
            let g = self.gamma;
            let t = m * al.powf(1.0 / al) * d.powf(g / al);
            let mean = m * (al * d).powf(1.0 / al);
            return (mean + t.powf(1.0 / g) * spectrally_positive_stable(g, rng)).max(0.0);
        }
        let n = poisson(m, rng);
        self.atoms.sample_sum(d, n, rng)
    }
}

/// Sorted, deduplicated positive radii.
fn normalize_radii(op: &'static str, radii: &[f64]) -> Result<Vec<f64>> {
    if radii.is_empty() {
        return Err(domain(op, "empty radius grid"));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(domain(op, format!("radius {r} must be positive")));
    }
    let mut v = radii.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinalDraw {
    pub gamma: f64,
    pub a: f64,
    /// Increasing radii.
    pub radii: Vec<f64>,
    /// L*_r(a) per radius.
    pub level_masses: Vec<f64>,
    /// Λ_{r_{i−1}, r_i}(a) for i ≥ 1.
    pub shell_masses: Vec<f64>,
    /// M*_r(a) per radius, when requested.
    pub mass_balls: Option<Vec<f64>>,
    /// Mass integration collapsed to a single step.
    pub mass_degenerate: bool,
    /// Laplace-transform bias of the mass-ball scheme.
    pub bias_bound: Option<f64>,
}

/// L*_r(a) at every radius, built shell by shell from independent graft strata.
pub fn spinal_level_ball<R: Rng + ?Sized>(
    sampler: &SpinalSampler,
    a: f64,
    radii: &[f64],
    rng: &mut R,
) -> Result<SpinalDraw> {
    let radii = normalize_radii("spinal_level_ball", radii)?;
    if !(a > 0.0) || radii[radii.len() - 1] > 2.0 * a {
        return Err(domain(
            "spinal_level_ball",
            format!("radii must lie in (0, 2a] with a={a}"),
        ));
    }
    let inner = if sampler.gamma == 2.0 {
        sampler.level_ball_single(radii[0], rng)
    } else {
        let hi = radii[0] / 2.0;
        sampler.graft_sum(sampler.inner_floor(hi), hi, rng)
    };
    let mut level = Vec::with_capacity(radii.len());
    let mut shells = Vec::with_capacity(radii.len() - 1);
    level.push(inner);
    for w in radii.windows(2) {
        let s = sampler.graft_sum(w[0] / 2.0, w[1] / 2.0, rng);
        shells.push(s);
        level.push(level[level.len() - 1] + s);
    }
    Ok(SpinalDraw {
        gamma: sampler.gamma,
        a,
        radii,
        level_masses: level,
        shell_masses: shells,
        mass_balls: None,
        mass_degenerate: false,
        bias_bound: None,
    })
}

/// Discretization of ∫_0^r Y_s ds on a grid of step Δ merged with the requested radii.
#[derive(Clone, Debug)]
pub struct MassScheme {
    pub gamma: f64,
    pub radii: Vec<f64>,
    pub step: f64,
    grid: Vec<f64>,
    marks: Vec<usize>,
    /// sup over radii and the λ grid of |E e^{−λ T̂} − E e^{−λ M*}|.
    pub bias_bound: f64,
    pub degenerate: bool,
}

/// λ multipliers (in units of r^{−γ/(γ−1)}) at which the scheme's Laplace transform is checked.
pub const BIAS_LAMBDAS: [f64; 7] = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

impl MassScheme {
    pub fn new(gamma: f64, radii: &[f64], step: f64) -> Result<Self> {
        check_gamma("spinal_mass_ball", gamma)?;
        let radii = normalize_radii("spinal_mass_ball", radii)?;
        if !(step > 0.0) {
            return Err(domain(
                "spinal_mass_ball",
                format!("eps_trunc={step} must be positive"),
            ));
        }
        let r_max = radii[radii.len() - 1];
        let mut grid = vec![0.0];
        let mut marks = Vec::with_capacity(radii.len());
        let mut i = 1u64;
        for &r in &radii {
            loop {
                let t = i as f64 * step;
                if t < r * (1.0 - 1e-12) {
                    grid.push(t);
                    i += 1;
                } else {
                    break;
                }
            }
            grid.push(r);
            marks.push(grid.len() - 1);
            if (i as f64 * step - r).abs() <= r * 1e-12 {
                i += 1;
            }
        }
        let mut s = Self {
            gamma,
            radii,
            step,
            grid,
            marks,
            bias_bound: 0.0,
            degenerate: step >= r_max,
        };
        s.bias_bound = s.compute_bias()?;
        Ok(s)
    }

    /// Halves `eps_trunc` from r_max/20 until the bias is at most `rel_tol` of the transform
    /// at every checked λ.
    pub fn auto(gamma: f64, radii: &[f64], rel_tol: f64, max_halvings: u32) -> Result<Self> {
        let r_max = radii.iter().cloned().fold(0.0, f64::max);
        let mut step = r_max / 20.0;
        let mut last = 0.0;
        for _ in 0..=max_halvings {
            let s = Self::new(gamma, radii, step)?;
            if s.relative_bias()? <= rel_tol {
                return Ok(s);
            }
            last = s.relative_bias()?;
            step /= 2.0;
        }
        Err(Error::BiasBound {
            bound: last,
            tol: rel_tol,
        })
    }

    fn lambdas(&self, r: f64) -> impl Iterator<Item = f64> + '_ {
        let scale = r.powf(-self.gamma / (self.gamma - 1.0));
        BIAS_LAMBDAS.iter().map(move |m| m * scale)
    }

    /// Exact Laplace transform of the trapezoid functional up to mark `j`.
    pub fn scheme_lt(&self, j: usize, lambda: f64) -> Result<f64> {
        let g = self.gamma;
        let al = g - 1.0;
        let end = self.marks[j];
        let d = |i: usize| self.grid[i + 1] - self.grid[i];
        let mut theta = lambda * d(end - 1) / 2.0;
        let mut log_lt = 0.0;
        for i in (0..end).rev() {
            let di = d(i);
            log_lt -= g / al * (1.0 + al * di * theta.powf(al)).ln();
            let c = if i == 0 { 0.0 } else { (d(i - 1) + di) / 2.0 };
            theta = c * lambda + csbp_u(g, di, theta)?;
        }
        Ok(log_lt.exp())
    }

    fn bias_pairs(&self) -> Result<Vec<(f64, f64)>> {
        let mut out = Vec::new();
        for (j, &r) in self.radii.iter().enumerate() {
            for lambda in self.lambdas(r).collect::<Vec<_>>() {
                let exact = ball_lt_mass(self.gamma, r, lambda)?;
                out.push((self.scheme_lt(j, lambda)? - exact, exact));
            }
        }
        Ok(out)
    }

    fn compute_bias(&self) -> Result<f64> {
        Ok(self
            .bias_pairs()?
            .iter()
            .map(|(b, _)| b.abs())
            .fold(0.0, f64::max))
    }

    pub fn relative_bias(&self) -> Result<f64> {
        Ok(self
            .bias_pairs()?
            .iter()
            .map(|(b, e)| b.abs() / e)
            .fold(0.0, f64::max))
    }

    /// One draw of (M*_{r_1}, …, M*_{r_k}) along a single profile path.
    pub fn sample<R: Rng + ?Sized>(&self, sampler: &SpinalSampler, rng: &mut R) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.marks.len());
        let mut y = 0.0;
        let mut integral = 0.0;
        let mut next_mark = 0;
        for i in 0..self.grid.len() - 1 {
            let d = self.grid[i + 1] - self.grid[i];
            let y_next = sampler.csbp_step(y, d, rng) + sampler.level_ball_single(2.0 * d, rng);
            integral += d * (y + y_next) / 2.0;
            y = y_next;
            if self.marks[next_mark] == i + 1 {
                out.push(integral);
                next_mark += 1;
            }
        }
        out
    }
}

/// M*_r(a) draws at each radius with the scheme's bias figure.
pub fn spinal_mass_ball<R: Rng + ?Sized>(
    sampler: &SpinalSampler,
    scheme: &MassScheme,
    a: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let r_max = scheme.radii[scheme.radii.len() - 1];
    if !(a > 0.0) || r_max > a {
        return Err(domain(
            "spinal_mass_ball",
            format!("radii must lie in (0, a] with a={a}"),
        ));
    }
    if scheme.gamma != sampler.gamma {
        return Err(domain(
            "spinal_mass_ball",
            "scheme and sampler gamma differ",
        ));
    }
    Ok(scheme.sample(sampler, rng))
}

/// Schemes for the shells (r_{i−1}, r_i], r_0 = 0.
pub fn mass_shell_schemes(gamma: f64, radii: &[f64], step: f64) -> Result<Vec<MassScheme>> {
    let radii = normalize_radii("mass_shell_schemes", radii)?;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(radii.len());
    for &r in &radii {
        out.push(MassScheme::new(gamma, &[r - prev], step)?);
        prev = r;
    }
    Ok(out)
}

/// Independent masses Q of disjoint shells, one per scheme from [`mass_shell_schemes`].
pub fn spinal_mass_shells<R: Rng + ?Sized>(
    sampler: &SpinalSampler,
    schemes: &[MassScheme],
    rng: &mut R,
) -> Vec<f64> {
    schemes
        .iter()
        .map(|sc| sc.sample(sampler, rng)[0])
        .collect()
}

/// Level parts plus mass balls when a scheme is given.
pub fn spinal_draw<R: Rng + ?Sized>(
    sampler: &SpinalSampler,
    a: f64,
    radii: &[f64],
    mass: Option<&MassScheme>,
    rng: &mut R,
) -> Result<SpinalDraw> {
    let mut d = spinal_level_ball(sampler, a, radii, rng)?;
    if let Some(s) = mass {
        if s.radii != d.radii {
            return Err(domain(
                "spinal_draw",
                "mass scheme radii differ from the level grid",
            ));
        }
        d.mass_balls = Some(spinal_mass_ball(sampler, s, a, rng)?);
        d.mass_degenerate = s.degenerate;
        d.bias_bound = Some(s.bias_bound);
    }
    Ok(d)
}

pub const SPINAL_CSV_HEADER: &str = "seed,stream_id,gamma,a,r,L_star,Lambda,M_star,bias_bound";

/// One row per radius; Λ is empty for the innermost radius, M* and the bias when absent.
pub fn write_spinal_csv<W: Write>(rows: &[(RngStream, SpinalDraw)], mut w: W) -> Result<()> {
    writeln!(w, "{SPINAL_CSV_HEADER}")?;
    for (stream, d) in rows {
        for (i, r) in d.radii.iter().enumerate() {
            let lambda = if i == 0 {
                String::new()
            } else {
                format!("{:?}", d.shell_masses[i - 1])
            };
            let m = d
                .mass_balls
                .as_ref()
                .map(|m| format!("{:?}", m[i]))
                .unwrap_or_default();
            let b = d.bias_bound.map(|b| format!("{b:?}")).unwrap_or_default();
            writeln!(
                w,
                "{},{},{:?},{:?},{:?},{:?},{},{},{}",
                stream.seed, stream.stream_id, d.gamma, d.a, r, d.level_masses[i], lambda, m, b
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::ball_lt_level;
    use crate::stats::{empirical_lt, pearson};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn level_ball_laplace_transform_gamma_two() {
        let s = SpinalSampler::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let draws: Vec<SpinalDraw> = (0..20_000)
            .map(|_| spinal_level_ball(&s, 1.0, &[1.0, 0.5, 0.25], &mut rng).unwrap())
            .collect();
        for (j, r) in [0.25, 0.5, 1.0].iter().enumerate() {
            let x: Vec<f64> = draws.iter().map(|d| d.level_masses[j]).collect();
            for lambda in [0.5, 1.0, 2.0] {
                let (m, se) = empirical_lt(&x, lambda);
                let target = ball_lt_level(2.0, *r, lambda).unwrap();
                assert!(
                    (m - target).abs() < 4.0 * se,
                    "r={r} λ={lambda}: {m} vs {target}"
                );
            }
        }
    }

    #[test]
    fn level_ball_laplace_transform_heavy_tail() {
        let s = SpinalSampler::new(1.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..20_000)
            .map(|_| {
                spinal_level_ball(&s, 1.0, &[0.5, 1.0], &mut rng)
                    .unwrap()
                    .level_masses[1]
            })
            .collect();
        for lambda in [0.5, 1.0, 2.0] {
            let (m, se) = empirical_lt(&x, lambda);
            let target = ball_lt_level(1.5, 1.0, lambda).unwrap();
            assert!((m - target).abs() < 4.0 * se, "λ={lambda}: {m} vs {target}");
        }
    }

    #[test]
    fn shells_add_up_and_are_uncorrelated() {
        let s = SpinalSampler::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let draws: Vec<SpinalDraw> = (0..10_000)
            .map(|_| spinal_level_ball(&s, 1.0, &[0.25, 0.5, 1.0], &mut rng).unwrap())
            .collect();
        for d in &draws {
            assert_eq!(d.level_masses[2], d.level_masses[1] + d.shell_masses[1]);
            assert!(d.level_masses.windows(2).all(|w| w[0] <= w[1]));
        }
        let a: Vec<f64> = draws.iter().map(|d| d.shell_masses[0]).collect();
        let b: Vec<f64> = draws.iter().map(|d| d.shell_masses[1]).collect();
        assert!(pearson(&a, &b).abs() < 3.0 / 100.0);
    }

    #[test]
    fn radius_preconditions() {
        let s = SpinalSampler::new(2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        assert!(spinal_level_ball(&s, 0.25, &[1.0], &mut rng).is_err());
        assert!(spinal_level_ball(&s, 1.0, &[], &mut rng).is_err());
        assert!(spinal_level_ball(&s, 1.0, &[-1.0], &mut rng).is_err());
        let scheme = MassScheme::new(2.0, &[1.0], 0.05).unwrap();
        assert!(spinal_mass_ball(&s, &scheme, 0.5, &mut rng).is_err());
    }

    #[test]
    fn mass_scheme_bias_shrinks_with_step() {
        let coarse = MassScheme::new(2.0, &[1.0], 0.1).unwrap();
        let fine = MassScheme::new(2.0, &[1.0], 0.025).unwrap();
        assert!(fine.bias_bound < coarse.bias_bound / 4.0);
        let degenerate = MassScheme::new(2.0, &[0.5], 1.0).unwrap();
        assert!(degenerate.degenerate);
        let auto = MassScheme::auto(2.0, &[0.5, 1.0], 0.01, 12).unwrap();
        assert!(auto.relative_bias().unwrap() <= 0.01);
    }

    #[test]
    fn scheme_grid_contains_radii() {
        let s = MassScheme::new(2.0, &[0.3, 1.0], 0.1).unwrap();
        for (m, r) in s.marks.iter().zip(&s.radii) {
            assert_eq!(s.grid[*m], *r);
        }
        assert!(s
            .grid
            .windows(2)
            .all(|w| w[1] > w[0] && w[1] - w[0] <= 0.1 + 1e-12));
    }

    #[test]
    fn mass_ball_laplace_transform_gamma_two() {
        let s = SpinalSampler::new(2.0).unwrap();
        let scheme = MassScheme::auto(2.0, &[0.5, 1.0], 0.01, 12).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let draws: Vec<Vec<f64>> = (0..10_000)
            .map(|_| spinal_mass_ball(&s, &scheme, 1.0, &mut rng).unwrap())
            .collect();
        for (j, r) in [0.5f64, 1.0].iter().enumerate() {
            let x: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            for lambda in [0.5f64, 1.0, 2.0] {
                let (m, se) = empirical_lt(&x, lambda);
                let target = 1.0 / (r * lambda.sqrt()).cosh().powi(2);
                assert!(
                    (m - target).abs() < 4.0 * se + scheme.bias_bound,
                    "r={r} λ={lambda}"
                );
            }
        }
    }

    #[test]
    fn csv_layout() {
        let s = SpinalSampler::new(2.0).unwrap();
        let mut rng = RngStream::new(1, 2).rng();
        let d = spinal_level_ball(&s, 1.0, &[0.5, 1.0], &mut rng).unwrap();
        let mut buf = Vec::new();
        write_spinal_csv(&[(RngStream::new(1, 2), d)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SPINAL_CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("1,2,2.0,1.0,0.5,"));
        assert!(lines[1].ends_with(",,,"));
    }
}
