//! Real trees coded by discretized height functions.

pub mod io;
mod rmq;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
pub use rmq::BlockSparseTable;

/// Default cap on the number of grid points accepted by [`build_tree`].
pub const MAX_GRID_POINTS: usize = 1 << 26;

/// Relative slack used to resolve lattice heights that coincide with a strip boundary.
const BOUNDARY_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CodingFunction {
    pub delta: f64,
    pub values: Vec<f64>,
    pub gamma: f64,
    pub seed: u64,
}

impl CodingFunction {
    pub fn new(delta: f64, values: Vec<f64>, gamma: f64, seed: u64) -> Self {
        Self {
            delta,
            values,
            gamma,
            seed,
        }
    }

    /// Number of grid steps n (there are n + 1 values).
    pub fn n(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    pub fn lifetime(&self) -> f64 {
        self.n() as f64 * self.delta
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "coding_function";
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(domain(OP, format!("delta={} must be positive", self.delta)));
        }
        let v = &self.values;
        if v.len() < 2 {
            return Err(domain(OP, "need at least two values"));
        }
        if v[0] != 0.0 || v[v.len() - 1] != 0.0 {
            return Err(domain(OP, "h[0] and h[n] must be 0"));
        }
        if let Some(i) = v.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(domain(
                OP,
                format!("h[{i}]={} is not a nonnegative real", v[i]),
            ));
        }
        if v.iter().all(|x| *x == 0.0) {
            return Err(domain(OP, "coding function is identically zero"));
        }
        Ok(())
    }

    /// Values scaled by `c^{(γ-1)/γ}` and grid step by `c`.
    pub fn rescaled(&self, c: f64) -> Self {
        let k = c.powf((self.gamma - 1.0) / self.gamma);
        Self {
            delta: self.delta * c,
            values: self.values.iter().map(|x| x * k).collect(),
            gamma: self.gamma,
            seed: self.seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RealTree {
    pub coding: CodingFunction,
    pub rmq: BlockSparseTable,
}

pub fn build_tree(coding: CodingFunction) -> Result<RealTree> {
    build_tree_capped(coding, MAX_GRID_POINTS)
}

pub fn build_tree_capped(coding: CodingFunction, max_points: usize) -> Result<RealTree> {
    coding.validate()?;
    if coding.values.len() > max_points {
        return Err(Error::Budget(format!(
            "{} grid points exceed cap {max_points}",
            coding.values.len()
        )));
    }
    let rmq = BlockSparseTable::new(&coding.values);
    Ok(RealTree { coding, rmq })
}

#[inline]
fn dist(hs: f64, ht: f64, b: f64) -> f64 {
    hs + ht - 2.0 * b
}

/// Half-open height strip `(a, a + eps]` with lattice slack.
#[derive(Clone, Copy, Debug)]
struct Strip {
    lo: f64,
    hi: f64,
}

impl Strip {
    fn new(a: f64, eps: f64) -> Self {
        let tol = BOUNDARY_SLACK * a.abs().max(eps).max(1.0);
        Self {
            lo: a + tol,
            hi: a + eps + tol,
        }
    }
    #[inline]
    fn contains(&self, h: f64) -> bool {
        h > self.lo && h <= self.hi
    }
}

impl RealTree {
    pub fn n(&self) -> usize {
        self.coding.n()
    }

    pub fn delta(&self) -> f64 {
        self.coding.delta
    }

    pub fn gamma(&self) -> f64 {
        self.coding.gamma
    }

    pub fn values(&self) -> &[f64] {
        &self.coding.values
    }

    pub fn lifetime(&self) -> f64 {
        self.coding.lifetime()
    }

    fn check_index(&self, op: &'static str, s: usize) -> Result<()> {
        if s > self.n() {
            Err(domain(op, format!("index {s} outside 0..={}", self.n())))
        } else {
            Ok(())
        }
    }

    pub fn branch_min(&self, s: usize, t: usize) -> Result<f64> {
        self.check_index("branch_min", s)?;
        self.check_index("branch_min", t)?;
        Ok(self.rmq.query(self.values(), s, t))
    }

    pub fn distance(&self, s: usize, t: usize) -> Result<f64> {
        let b = self.branch_min(s, t)?;
        let h = self.values();
        Ok(dist(h[s], h[t], b))
    }

    pub fn four_point_residual(&self, s1: usize, s2: usize, s3: usize, s4: usize) -> Result<f64> {
        let d = |a, b| self.distance(a, b);
        let lhs = d(s1, s2)? + d(s3, s4)?;
        let m = (d(s1, s3)? + d(s2, s4)?).max(d(s1, s4)? + d(s2, s3)?);
        Ok(lhs - m)
    }

    pub fn height(&self) -> f64 {
        self.values().iter().cloned().fold(0.0, f64::max)
    }

    /// Distances from `center` to every grid point, by a running-minimum sweep.
    pub fn distances_from(&self, center: usize) -> Result<Vec<f64>> {
        self.check_index("distances_from", center)?;
        let h = self.values();
        let hc = h[center];
        let mut out = vec![0.0; h.len()];
        let mut b = hc;
        for s in center..h.len() {
            b = b.min(h[s]);
            out[s] = dist(hc, h[s], b);
        }
        b = hc;
        for s in (0..center).rev() {
            b = b.min(h[s]);
            out[s] = dist(hc, h[s], b);
        }
        Ok(out)
    }

    /// δ × #{s in 0..n : d(center, s) ≤ r}.
    pub fn mass_ball(&self, center: usize, r: f64) -> Result<f64> {
        Ok(self.mass_ball_profile(center, &[r])?[0])
    }

    /// [`RealTree::mass_ball`] for several radii from a single sweep.
    pub fn mass_ball_profile(&self, center: usize, radii: &[f64]) -> Result<Vec<f64>> {
        if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
            return Err(domain(
                "mass_ball",
                format!("radius {r} must be nonnegative"),
            ));
        }
        let mut d = self.distances_from(center)?;
        d.truncate(self.n());
        d.sort_by(f64::total_cmp);
        let delta = self.delta();
        Ok(radii
            .iter()
            .map(|r| d.partition_point(|x| *x <= *r) as f64 * delta)
            .collect())
    }

    /// Number of excursions of h above `a` whose maximum reaches `a + eps`, and
    /// the local-time estimate `((γ-1)eps)^{1/(γ-1)} × count`.
    pub fn level_count(&self, a: f64, eps: f64) -> Result<(usize, f64)> {
        if !(a > 0.0 && eps > 0.0) {
            return Err(domain(
                "level_count",
                format!("need a>0, eps>0 (a={a}, eps={eps})"),
            ));
        }
        let tol = BOUNDARY_SLACK * a.max(eps).max(1.0);
        let (above, reach) = (a + tol, a + eps - tol);
        let mut count = 0;
        let mut max: Option<f64> = None;
        for &x in self.values() {
            if x > above {
                max = Some(max.map_or(x, |m| m.max(x)));
            } else if let Some(m) = max.take() {
                if m >= reach {
                    count += 1;
                }
            }
        }
        let g = self.gamma();
        let est = ((g - 1.0) * eps).powf(1.0 / (g - 1.0)) * count as f64;
        Ok((count, est))
    }

    /// Grid indices in 0..n with a < h ≤ a + eps.
    pub fn level_strip(&self, a: f64, eps: f64) -> Vec<usize> {
        let strip = Strip::new(a, eps);
        self.values()[..self.n()]
            .iter()
            .enumerate()
            .filter(|(_, h)| strip.contains(**h))
            .map(|(i, _)| i)
            .collect()
    }

    /// (δ/eps) × #{i : a < h[i] ≤ a + eps}.
    pub fn occupation_local_time(&self, a: f64, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(domain(
                "occupation_local_time",
                format!("eps={eps} must be positive"),
            ));
        }
        Ok(self.level_strip(a, eps).len() as f64 * self.delta() / eps)
    }

    /// Occupation estimate of ℓ^a restricted to the closed ball of radius r around `center`.
    pub fn level_ball_local_time(&self, a: f64, center: usize, r: f64, eps: f64) -> Result<f64> {
        let strip = self.level_strip(a, eps);
        Ok(self.level_ball_profile(a, center, &strip, &[r], eps)?[0])
    }

    /// [`RealTree::level_ball_local_time`] for several radii over a precomputed strip.
    pub fn level_ball_profile(
        &self,
        a: f64,
        center: usize,
        strip: &[usize],
        radii: &[f64],
        eps: f64,
    ) -> Result<Vec<f64>> {
        const OP: &str = "level_ball_local_time";
        self.check_index(OP, center)?;
        if !(a > 0.0 && eps > 0.0) {
            return Err(domain(OP, format!("need a>0, eps>0 (a={a}, eps={eps})")));
        }
        let hc = self.values()[center];
        if (hc - a).abs() > eps * (1.0 + BOUNDARY_SLACK) + BOUNDARY_SLACK {
            return Err(domain(
                OP,
                format!("center height {hc} not within eps of level {a}"),
            ));
        }
        if let Some(r) = radii.iter().find(|r| !(**r >= 0.0)) {
            return Err(domain(OP, format!("radius {r} must be nonnegative")));
        }
        let h = self.values();
        let mut b: Vec<f64> = strip
            .iter()
            .map(|&s| self.rmq.query(h, s, center))
            .collect();
        b.sort_by(f64::total_cmp);
        let w = self.delta() / eps;
        Ok(radii
            .iter()
            .map(|r| {
                let cut = a - r / 2.0;
                let below = b.partition_point(|x| *x < cut);
                (b.len() - below) as f64 * w
            })
            .collect())
    }

    pub fn sample_from_mass<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.n())
    }

    pub fn sample_from_level<R: Rng + ?Sized>(
        &self,
        a: f64,
        eps: f64,
        rng: &mut R,
    ) -> Result<usize> {
        let strip = self.level_strip(a, eps);
        if strip.is_empty() {
            return Err(Error::EmptyLevel { a, eps });
        }
        Ok(strip[rng.random_range(0..strip.len())])
    }

    /// Leaf test after merging equal-value plateaus.
    pub fn is_leaf(&self, t: usize) -> Result<bool> {
        let n = self.n();
        if t == 0 || t >= n {
            return Err(domain(
                "is_leaf",
                format!("index {t} must lie strictly inside 0..{n}"),
            ));
        }
        let h = self.values();
        let x = h[t];
        let mut l = t;
        while l > 0 && h[l - 1] == x {
            l -= 1;
        }
        let mut r = t;
        while r < n && h[r + 1] == x {
            r += 1;
        }
        Ok(l > 0 && r < n && h[l - 1] < x && h[r + 1] < x)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum MeasureKind {
    MassMeasure,
    LevelMeasure { a: f64, eps: f64 },
}

#[derive(Clone, Debug)]
pub struct MeasureSample {
    pub kind: MeasureKind,
    pub points: Vec<usize>,
    pub weight_per_point: f64,
}

impl MeasureSample {
    pub fn mass(tree: &RealTree) -> Self {
        Self {
            kind: MeasureKind::MassMeasure,
            points: (0..tree.n()).collect(),
            weight_per_point: tree.delta(),
        }
    }

    pub fn level(tree: &RealTree, a: f64, eps: f64) -> Self {
        Self {
            kind: MeasureKind::LevelMeasure { a, eps },
            points: tree.level_strip(a, eps),
            weight_per_point: tree.delta() / eps,
        }
    }

    pub fn total_weight(&self) -> f64 {
        self.weight_per_point * self.points.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.points.is_empty() {
            None
        } else {
            Some(self.points[rng.random_range(0..self.points.len())])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(v: &[f64]) -> RealTree {
        build_tree(CodingFunction::new(1.0, v.to_vec(), 2.0, 0)).unwrap()
    }

    fn brute_min(v: &[f64], s: usize, t: usize) -> f64 {
        v[s.min(t)..=s.max(t)]
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn tent_is_a_segment() {
        let v = [0.0, 1.0, 2.0, 1.0, 0.0];
        let t = tree(&v);
        for s in 0..5 {
            for u in 0..5 {
                let d = v[s] + v[u] - 2.0 * brute_min(&v, s, u);
                assert_eq!(t.distance(s, u).unwrap(), d);
            }
        }
        assert_eq!(t.distance(0, 2).unwrap(), 2.0);
        assert_eq!(t.distance(1, 3).unwrap(), 0.0);
        assert_eq!(t.branch_min(1, 3).unwrap(), 1.0);
        assert_eq!(t.branch_min(2, 2).unwrap(), 2.0);
        assert_eq!(t.branch_min(0, 4).unwrap(), 0.0);
        assert_eq!(t.height(), 2.0);
    }

    #[test]
    fn two_segments_and_rejections() {
        let t = tree(&[0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(t.distance(1, 3).unwrap(), 2.0);
        assert!(build_tree(CodingFunction::new(1.0, vec![0.0, 0.0], 2.0, 0)).is_err());
        assert!(build_tree(CodingFunction::new(1.0, vec![0.0, -1.0, 0.0], 2.0, 0)).is_err());
        assert!(build_tree(CodingFunction::new(1.0, vec![0.0, 1.0, 1.0], 2.0, 0)).is_err());
        assert!(t.distance(0, 5).is_err());
        let big = CodingFunction::new(1.0, vec![0.0, 1.0, 0.0], 2.0, 0);
        assert!(matches!(build_tree_capped(big, 2), Err(Error::Budget(_))));
    }

    #[test]
    fn distance_examples() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 3.0, 0.0]);
        assert_eq!(t.distance(1, 4).unwrap(), 2.0);
        assert_eq!(t.distance(3, 3).unwrap(), 0.0);
        assert_eq!(t.distance(0, 5).unwrap(), 0.0);
        assert_eq!(t.distance(0, 4).unwrap(), 3.0);
        assert_eq!(tree(&[0.0, 1.0, 0.0, 3.0, 0.0]).height(), 3.0);
    }

    #[test]
    fn four_point_on_toy_trees() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        for q in 0..625usize {
            let (a, b, c, d) = (q % 5, q / 5 % 5, q / 25 % 5, q / 125);
            assert!(t.four_point_residual(a, b, c, d).unwrap() <= 1e-12);
        }
        let r = t.four_point_residual(1, 1, 4, 4).unwrap();
        assert_eq!(r, -2.0 * t.distance(1, 4).unwrap());
    }

    #[test]
    fn mass_ball_examples() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        let brute =
            |c: usize, r: f64| (0..4).filter(|&s| t.distance(c, s).unwrap() <= r).count() as f64;
        assert_eq!(t.mass_ball(2, 1.0).unwrap(), brute(2, 1.0));
        assert_eq!(t.mass_ball(2, 1.0).unwrap(), 3.0);
        assert_eq!(t.mass_ball(2, 10.0).unwrap(), t.lifetime());
        assert_eq!(t.mass_ball(1, 0.0).unwrap(), 2.0);
        let p = t.mass_ball_profile(0, &[0.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(p, vec![1.0, 1.0, 3.0, 4.0]);
        assert!(t.mass_ball(0, -1.0).is_err());
    }

    #[test]
    fn level_count_examples() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        assert_eq!(t.level_count(1.0, 0.5).unwrap().0, 1);
        assert_eq!(t.level_count(3.0, 0.5).unwrap(), (0, 0.0));
        let t2 = tree(&[0.0, 1.0, 0.0, 1.0, 0.0]);
        let (c, est) = t2.level_count(0.5, 0.4).unwrap();
        assert_eq!(c, 2);
        assert!((est - 0.8).abs() < 1e-15);
    }

    #[test]
    fn occupation_examples() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        assert_eq!(t.occupation_local_time(0.5, 1.0).unwrap(), 2.0);
        assert_eq!(t.occupation_local_time(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(t.level_ball_local_time(0.5, 1, 1.0, 1.0).unwrap(), 2.0);
        let t2 = tree(&[0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(t2.level_ball_local_time(0.5, 1, 0.5, 1.0).unwrap(), 1.0);
        assert_eq!(t2.level_ball_local_time(0.5, 1, 1.0, 1.0).unwrap(), 2.0);
        assert_eq!(t2.level_ball_local_time(0.5, 1, 0.0, 1.0).unwrap(), 1.0);
        assert!(t2.level_ball_local_time(0.5, 2, 0.5, 0.1).is_err());
    }

    #[test]
    fn samplers_on_grid() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut hits = [0usize; 5];
        for _ in 0..4000 {
            hits[t.sample_from_level(0.5, 1.0, &mut rng).unwrap()] += 1;
        }
        assert_eq!(hits[0] + hits[2] + hits[4], 0);
        assert!((hits[1] as f64 - 2000.0).abs() < 200.0);
        assert!(matches!(
            t.sample_from_level(3.0, 1.0, &mut rng),
            Err(Error::EmptyLevel { .. })
        ));
        let small = tree(&[0.0, 1.0, 0.0]);
        assert!(small.sample_from_mass(&mut rng) < 2);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(t.sample_from_mass(&mut a), t.sample_from_mass(&mut b));
    }

    #[test]
    fn leaves_and_plateaus() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        assert!(t.is_leaf(2).unwrap());
        assert!(!t.is_leaf(1).unwrap());
        assert!(t.is_leaf(0).is_err());
        assert!(t.is_leaf(4).is_err());
        let p = tree(&[0.0, 1.0, 2.0, 2.0, 2.0, 1.0, 2.0, 2.0, 3.0, 0.0]);
        assert!(t.is_leaf(2).unwrap());
        for i in 2..=4 {
            assert!(p.is_leaf(i).unwrap());
        }
        assert!(!p.is_leaf(6).unwrap());
        assert!(!p.is_leaf(7).unwrap());
        assert!(p.is_leaf(8).unwrap());
    }

    #[test]
    fn measure_totals() {
        let t = tree(&[0.0, 1.0, 2.0, 1.0, 0.0]);
        assert_eq!(MeasureSample::mass(&t).total_weight(), t.lifetime());
        let l = MeasureSample::level(&t, 0.5, 1.0);
        assert_eq!(l.total_weight(), t.occupation_local_time(0.5, 1.0).unwrap());
    }
}
