//! Galton–Watson trees with offspring generating function f(s) = s + (1−s)^γ/γ.

use rand::Rng;
use rand_distr::{weighted::WeightedAliasIndex, Distribution};

use super::stable::invert_survival;
use crate::analytic::ln_gamma;
use crate::error::{check_gamma, domain, Error, Result};
use crate::tree::CodingFunction;

/// Alias table support 0..=ALIAS_MAX; larger values come from exact tail inversion.
pub const ALIAS_MAX: usize = 1 << 16;

#[derive(Clone, Debug)]
pub struct Offspring {
    pub gamma: f64,
    probs: Vec<f64>,
    tail_mass: f64,
    alias: WeightedAliasIndex<f64>,
}

impl Offspring {
    /// ξ(k) for k ≥ 0.
    pub fn prob(&self, k: usize) -> f64 {
        if k < self.probs.len() {
            self.probs[k]
        } else {
            self.sf(k as f64 - 1.0) - self.sf(k as f64)
        }
    }

    /// P(ξ > k) = Γ(k−α)/(γ |Γ(−α)| Γ(k+1)) for k ≥ 1, α = γ − 1.
    pub fn sf(&self, k: f64) -> f64 {
        if k < 0.0 {
            return 1.0;
        }
        if k < 1.0 {
            return 1.0 - 1.0 / self.gamma;
        }
        if self.gamma == 2.0 {
            return if k < 2.0 { 0.5 } else { 0.0 };
        }
        let al = self.gamma - 1.0;
        // Γ(−α) < 0 for 0 < α < 1
        let ln_abs_gamma_neg = ln_gamma(1.0 - al) - al.ln();
        (ln_gamma(k - al) - ln_abs_gamma_neg - ln_gamma(k + 1.0) - self.gamma.ln()).exp()
    }

    pub fn mean(&self) -> f64 {
        let head: f64 = (0..self.probs.len()).map(|k| self.sf(k as f64)).sum();
        if self.gamma == 2.0 {
            return head;
        }
        let al = self.gamma - 1.0;
        let k = self.probs.len() as f64;
        // tail Σ_{j ≥ k} P(ξ > j) with P(ξ > j) ≈ c j^{−γ}
        let c = self.sf(k) * k.powf(self.gamma);
        head + c * (k - 0.5).powf(-al) / al
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        if u < self.tail_mass {
            let k0 = (self.probs.len() - 1) as f64;
            return invert_survival(|k| self.sf(k), k0, u);
        }
        self.alias.sample(rng) as f64
    }
}

pub fn gw_offspring(gamma: f64) -> Result<Offspring> {
    check_gamma("gw_offspring", gamma)?;
    let kmax = if gamma == 2.0 { 2 } else { ALIAS_MAX };
    let mut probs = vec![0.0; kmax + 1];
    probs[0] = 1.0 / gamma;
    probs[2] = (gamma - 1.0) / 2.0;
    for k in 3..=kmax {
        probs[k] = probs[k - 1] * (k as f64 - 1.0 - gamma) / k as f64;
    }
    let mut o = Offspring {
        gamma,
        probs,
        tail_mass: 0.0,
        alias: WeightedAliasIndex::new(vec![1.0]).expect("trivial table"),
    };
    o.tail_mass = if gamma == 2.0 { 0.0 } else { o.sf(kmax as f64) };
    o.alias = WeightedAliasIndex::new(o.probs.clone())
        .map_err(|e| domain("gw_offspring", e.to_string()))?;
    Ok(o)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GwOptions {
    pub max_nodes: usize,
    pub max_attempts: usize,
    /// Generation depth (in edges) whose vertices are not expanded.
    pub clip_depth: Option<usize>,
}

impl Default for GwOptions {
    fn default() -> Self {
        Self {
            max_nodes: 1 << 24,
            max_attempts: 100_000,
            clip_depth: None,
        }
    }
}

/// Contour time step for scale p: γ^{1/(γ−1)} / (2 p^{γ/(γ−1)}).
pub fn gw_time_step(gamma: f64, p: u64) -> f64 {
    let al = gamma - 1.0;
    gamma.powf(1.0 / al) / (2.0 * (p as f64).powf(gamma / al))
}

/// Contour function of a GW tree conditioned on height > p·a, heights scaled by 1/p.
pub fn gw_tree_coding<R: Rng + ?Sized>(
    offspring: &Offspring,
    p: u64,
    min_height: f64,
    opts: &GwOptions,
    rng: &mut R,
) -> Result<CodingFunction> {
    if p == 0 || !(min_height > 0.0) {
        return Err(domain("gw_tree_coding", "need p ≥ 1 and min_height > 0"));
    }
    let need = (p as f64 * min_height).floor() as usize + 1;
    if let Some(c) = opts.clip_depth {
        if c < need {
            return Err(domain(
                "gw_tree_coding",
                format!("clip depth {c} below required height {need}"),
            ));
        }
    }
    let mut oversize = 0;
    for _ in 0..opts.max_attempts {
        match contour(offspring, opts, need, rng) {
            Contour::Tree(depths) => {
                let values = depths.iter().map(|&d| d as f64 / p as f64).collect();
                return Ok(CodingFunction::new(
                    gw_time_step(offspring.gamma, p),
                    values,
                    offspring.gamma,
                    0,
                ));
            }
            Contour::TooLarge => oversize += 1,
            Contour::TooLow => {}
        }
    }
    Err(Error::Budget(format!(
        "no GW tree of height ≥ {need} within {} attempts ({oversize} exceeded {} nodes)",
        opts.max_attempts, opts.max_nodes
    )))
}

enum Contour {
    Tree(Vec<u32>),
    TooLow,
    TooLarge,
}

fn contour<R: Rng + ?Sized>(o: &Offspring, opts: &GwOptions, need: usize, rng: &mut R) -> Contour {
    let clip = opts.clip_depth.unwrap_or(usize::MAX);
    let mut stack: Vec<f64> = vec![o.sample(rng)];
    let mut depths: Vec<u32> = vec![0];
    let mut depth = 0usize;
    let mut max_depth = 0usize;
    let mut nodes = 1usize;
    loop {
        let top = stack.last_mut().expect("nonempty stack");
        if *top > 0.0 {
            *top -= 1.0;
            depth += 1;
            max_depth = max_depth.max(depth);
            nodes += 1;
            if nodes > opts.max_nodes {
                return Contour::TooLarge;
            }
            depths.push(depth as u32);
            let k = if depth >= clip { 0.0 } else { o.sample(rng) };
            stack.push(k);
        } else {
            stack.pop();
            if stack.is_empty() {
                break;
            }
            depth -= 1;
            depths.push(depth as u32);
        }
    }
    if max_depth < need {
        Contour::TooLow
    } else {
        Contour::Tree(depths)
    }
}
