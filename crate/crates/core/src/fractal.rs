//! Packing and Hausdorff pre-measure estimators, ball-density profiles and the
//! dichotomy experiments built on them.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::LN_2;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::gauges::{series_classify, Gauge, Method, SeriesKind, Verdict};
use crate::rng::{par_map, RngStream};
use crate::samplers::{spinal_draw, MassScheme, SpinalSampler};
use crate::tree::RealTree;

/// Largest absolute increment of the coding function.
pub fn grid_resolution(tree: &RealTree) -> f64 {
    tree.values()
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max)
}

fn check_points(op: &'static str, tree: &RealTree, points: &[usize]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Err(domain(op, "empty sample"));
    }
    if let Some(p) = points.iter().find(|p| **p > tree.n()) {
        return Err(domain(op, format!("index {p} outside 0..={}", tree.n())));
    }
    let mut v = points.to_vec();
    v.sort_unstable();
    v.dedup();
    Ok(v)
}

fn check_eps(op: &'static str, tree: &RealTree, gauge: &Gauge, eps: f64) -> Result<()> {
    let res = grid_resolution(tree);
    if !(eps > res) {
        return Err(domain(
            op,
            format!("eps={eps} must exceed grid resolution {res}"),
        ));
    }
    if !gauge.in_domain(eps) {
        return Err(domain(op, format!("eps={eps} outside the gauge domain")));
    }
    Ok(())
}

/// Greedy ρ-net: each point joins the first center within ρ, otherwise becomes one.
fn greedy_net(tree: &RealTree, points: &[usize], seeds: &[usize], rho: f64) -> Result<Vec<usize>> {
    let mut centers = seeds.to_vec();
    for &p in points {
        let mut covered = false;
        for &c in &centers {
            if tree.distance(p, c)? <= rho {
                covered = true;
                break;
            }
        }
        if !covered {
            centers.push(p);
        }
    }
    Ok(centers)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackingEstimate {
    pub eps: f64,
    /// Σ g(r_i) over the greedy packing.
    pub lower: f64,
    /// Bound on Σ g(r_i) over every ε-packing centered in the sample.
    pub upper: f64,
    pub centers: Vec<usize>,
    pub radii: Vec<f64>,
}

#[derive(PartialEq)]
struct Avail {
    r: f64,
    idx: usize,
}

impl Eq for Avail {}

impl Ord for Avail {
    fn cmp(&self, other: &Self) -> Ordering {
        self.r
            .total_cmp(&other.r)
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Avail {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Greedy ε-packing of the sampled points: claim the point with the largest admissible
/// radius (ties by index) and shrink the others so closed balls stay disjoint.
pub fn packing_premeasure_estimate(
    tree: &RealTree,
    points: &[usize],
    gauge: &Gauge,
    gamma: f64,
    eps: f64,
) -> Result<PackingEstimate> {
    const OP: &str = "packing_premeasure_estimate";
    let pts = check_points(OP, tree, points)?;
    check_eps(OP, tree, gauge, eps)?;
    let shrink = 1.0 - 1e-9;
    let mut avail = vec![eps; pts.len()];
    let mut alive = vec![true; pts.len()];
    let (mut centers, mut radii) = (Vec::new(), Vec::new());
    loop {
        let best = (0..pts.len())
            .filter(|&i| alive[i] && avail[i] > 0.0)
            .map(|i| Avail {
                r: avail[i],
                idx: i,
            })
            .max();
        let Some(Avail { r, idx }) = best else { break };
        alive[idx] = false;
        centers.push(pts[idx]);
        radii.push(r);
        for j in 0..pts.len() {
            if alive[j] {
                let gap = tree.distance(pts[idx], pts[j])? - r;
                avail[j] = avail[j].min(gap * shrink);
                if !(avail[j] > 0.0) {
                    alive[j] = false;
                }
            }
        }
    }
    let lower = radii
        .iter()
        .map(|&r| gauge.ln_eval(gamma, r.ln()).map(f64::exp))
        .sum::<Result<f64>>()?;
    let upper = packing_upper_bracket(tree, &pts, gauge, gamma, eps)?;
    Ok(PackingEstimate {
        eps,
        lower,
        upper: upper.max(lower),
        centers,
        radii,
    })
}

/// Dyadic radius classes: disjoint balls of radius > ρ have centers in distinct cells of
/// any ρ-cover, so class (2^{−m−1}, 2^{−m}] holds at most N_cov(2^{−m−1}) balls.
fn packing_upper_bracket(
    tree: &RealTree,
    pts: &[usize],
    gauge: &Gauge,
    gamma: f64,
    eps: f64,
) -> Result<f64> {
    let g = |r: f64| gauge.ln_eval(gamma, r.ln()).map(f64::exp);
    let distinct = greedy_net(tree, pts, &[], 0.0)?.len();
    let trivial = distinct as f64 * g(eps)?;
    let m0 = (-eps.log2()).floor().max(0.0) as i32;
    let mut total = 0.0;
    for m in m0..m0 + 64 {
        let top = eps.min((-(m as f64) * LN_2).exp());
        let rho = (-((m + 1) as f64) * LN_2).exp();
        let n = greedy_net(tree, pts, &[], rho)?.len();
        if n >= distinct {
            total += distinct as f64 * g(top)?;
            return Ok(total.min(trivial));
        }
        total += n as f64 * g(top)?;
    }
    Ok(trivial)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffEstimate {
    pub eps: f64,
    /// Σ g(2r) over the cover, r = eps/2.
    pub upper: f64,
    pub centers: Vec<usize>,
    pub ball_radius: f64,
}

/// Cover of the sample by balls of radius eps/2 around a greedy net, pruned by greedy
/// set cover; diameters are taken as 2r.
pub fn hausdorff_premeasure_estimate(
    tree: &RealTree,
    points: &[usize],
    gauge: &Gauge,
    gamma: f64,
    eps: f64,
) -> Result<HausdorffEstimate> {
    const OP: &str = "hausdorff_premeasure_estimate";
    let pts = check_points(OP, tree, points)?;
    check_eps(OP, tree, gauge, eps)?;
    let rho = eps / 2.0;
    let net = greedy_net(tree, &pts, &[], rho)?;
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(net.len());
    for &c in &net {
        let mut m = Vec::new();
        for (i, &p) in pts.iter().enumerate() {
            if tree.distance(c, p)? <= rho {
                m.push(i);
            }
        }
        members.push(m);
    }
    let mut covered = vec![false; pts.len()];
    let mut left = pts.len();
    let mut heap: BinaryHeap<(usize, std::cmp::Reverse<usize>)> = members
        .iter()
        .enumerate()
        .map(|(j, m)| (m.len(), std::cmp::Reverse(j)))
        .collect();
    let mut chosen = Vec::new();
    while left > 0 {
        let Some((gain, std::cmp::Reverse(j))) = heap.pop() else {
            return Err(domain(OP, "net balls fail to cover the sample"));
        };
        let fresh = members[j].iter().filter(|&&i| !covered[i]).count();
        if fresh < gain {
            if fresh > 0 {
                heap.push((fresh, std::cmp::Reverse(j)));
            }
            continue;
        }
        for &i in &members[j] {
            if !covered[i] {
                covered[i] = true;
                left -= 1;
            }
        }
        chosen.push(net[j]);
    }
    chosen.sort_unstable();
    let upper = chosen.len() as f64 * gauge.ln_eval(gamma, eps.ln())?.exp();
    Ok(HausdorffEstimate {
        eps,
        upper,
        centers: chosen,
        ball_radius: rho,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HausdorffSequence {
    /// eps_k = eps0 · 2^{−k}, stopped above the grid resolution.
    pub eps: Vec<f64>,
    /// Best mixed cover using balls from levels 0..=k; non-increasing in k.
    pub values: Vec<f64>,
    /// Net sizes per level.
    pub net_sizes: Vec<usize>,
}

/// Nested nets at radius eps_k/4 with parent links; node costs are
/// min(g(eps_k), Σ children), so every value bounds the eps0 cover infimum.
pub fn hausdorff_sequence(
    tree: &RealTree,
    points: &[usize],
    gauge: &Gauge,
    gamma: f64,
    eps0: f64,
    levels: usize,
) -> Result<HausdorffSequence> {
    const OP: &str = "hausdorff_sequence";
    let pts = check_points(OP, tree, points)?;
    check_eps(OP, tree, gauge, eps0)?;
    let res = grid_resolution(tree);
    let mut eps = vec![eps0];
    while eps.len() < levels.max(1) && eps[eps.len() - 1] / 2.0 > res {
        eps.push(eps[eps.len() - 1] / 2.0);
    }
    let mut nets: Vec<Vec<usize>> = vec![greedy_net(tree, &pts, &[], eps0 / 4.0)?];
    // parents[k][j]: index in nets[k] of the parent of nets[k+1][j]
    let mut parents: Vec<Vec<usize>> = Vec::new();
    for k in 1..eps.len() {
        let prev = &nets[k - 1];
        let next = greedy_net(tree, &pts, prev, eps[k] / 4.0)?;
        let mut par = Vec::with_capacity(next.len());
        for (j, &c) in next.iter().enumerate() {
            if j < prev.len() {
                par.push(j);
                continue;
            }
            let mut found = None;
            for (i, &q) in prev.iter().enumerate() {
                if tree.distance(c, q)? <= eps[k - 1] / 4.0 {
                    found = Some(i);
                    break;
                }
            }
            par.push(found.ok_or_else(|| domain(OP, "nested net lost coverage"))?);
        }
        parents.push(par);
        nets.push(next);
    }
    let g: Vec<f64> = eps
        .iter()
        .map(|&e| gauge.ln_eval(gamma, e.ln()).map(f64::exp))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(eps.len());
    for last in 0..eps.len() {
        let mut cost = vec![g[last]; nets[last].len()];
        for k in (0..last).rev() {
            let mut up = vec![0.0; nets[k].len()];
            for (j, &p) in parents[k].iter().enumerate() {
                up[p] += cost[j];
            }
            cost = up.into_iter().map(|s| s.min(g[k])).collect();
        }
        let v: f64 = cost.iter().sum();
        values.push(match values.last() {
            Some(&prev) if v > prev => prev,
            _ => v,
        });
    }
    Ok(HausdorffSequence {
        net_sizes: nets.iter().map(Vec::len).collect(),
        eps,
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProfileMeasure {
    Level { a: f64 },
    Mass,
}

/// μ(B̄(σ, 2^{−n}))/g(2^{−n}) per sample point σ (rows) and level n (columns).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub gamma: f64,
    pub measure_kind: ProfileMeasure,
    pub gauge: Gauge,
    pub n_min: u32,
    pub n_max: u32,
    /// Grid index (tree profiles) or draw index (spinal profiles) per row.
    pub points: Vec<usize>,
    /// Tree or draw group per row.
    pub groups: Vec<usize>,
    /// NaN where 2^{−n} is at or below the resolution or outside the gauge domain.
    pub ratios: Vec<Vec<f64>>,
    pub resolution: f64,
    /// Number of leading columns above the resolution.
    pub resolved: usize,
    /// Prefix running minimum over n (liminf proxy).
    pub running_min: Vec<Vec<f64>>,
    /// Prefix running maximum over n (limsup proxy).
    pub running_max: Vec<Vec<f64>>,
}

fn dyadic_radii(op: &'static str, n_min: u32, n_max: u32) -> Result<Vec<f64>> {
    if n_min > n_max {
        return Err(domain(op, format!("n_min={n_min} exceeds n_max={n_max}")));
    }
    Ok((n_min..=n_max)
        .map(|n| (-(n as f64) * LN_2).exp())
        .collect())
}

fn running(row: &[f64], pick: fn(f64, f64) -> f64) -> Vec<f64> {
    let mut acc = f64::NAN;
    row.iter()
        .map(|&x| {
            if x.is_finite() {
                acc = if acc.is_nan() { x } else { pick(acc, x) };
            }
            acc
        })
        .collect()
}

impl DensityProfile {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        gamma: f64,
        measure_kind: ProfileMeasure,
        gauge: &Gauge,
        n_min: u32,
        n_max: u32,
        points: Vec<usize>,
        groups: Vec<usize>,
        masses: Vec<Vec<f64>>,
        resolution: f64,
    ) -> Result<Self> {
        let radii = dyadic_radii("density_profile", n_min, n_max)?;
        let ln_g: Vec<Option<f64>> = radii
            .iter()
            .map(|&r| {
                if r > resolution && gauge.in_domain(r) {
                    gauge.ln_eval(gamma, r.ln()).ok()
                } else {
                    None
                }
            })
            .collect();
        let resolved = radii.iter().take_while(|&&r| r > resolution).count();
        let ratios: Vec<Vec<f64>> = masses
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&ln_g)
                    .map(|(&m, lg)| match lg {
                        Some(lg) => (m.ln() - lg).exp(),
                        None => f64::NAN,
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            gamma,
            measure_kind,
            gauge: gauge.clone(),
            n_min,
            n_max,
            points,
            groups,
            running_min: ratios.iter().map(|r| running(r, f64::min)).collect(),
            running_max: ratios.iter().map(|r| running(r, f64::max)).collect(),
            ratios,
            resolution,
            resolved,
        })
    }

    pub fn levels(&self) -> Vec<u32> {
        (self.n_min..=self.n_max).collect()
    }

    /// Long-format CSV: point_id, n, ratio (undefined entries omitted).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "point_id,n,ratio")?;
        for (i, row) in self.ratios.iter().enumerate() {
            for (j, x) in row.iter().enumerate() {
                if x.is_finite() {
                    writeln!(w, "{},{},{:?}", i, self.n_min + j as u32, x)?;
                }
            }
        }
        Ok(())
    }
}

/// Concatenates profiles over the same gauge and window; groups are renumbered per input.
pub fn merge_profiles(parts: &[DensityProfile]) -> Result<DensityProfile> {
    let first = parts
        .first()
        .ok_or_else(|| domain("merge_profiles", "no profiles"))?;
    let mut out = first.clone();
    out.points.clear();
    out.groups.clear();
    out.ratios.clear();
    out.running_min.clear();
    out.running_max.clear();
    let mut offset = 0;
    for p in parts {
        if p.gauge != first.gauge
            || p.n_min != first.n_min
            || p.n_max != first.n_max
            || p.gamma != first.gamma
        {
            return Err(domain(
                "merge_profiles",
                "profiles differ in gauge, window or gamma",
            ));
        }
        out.points.extend(&p.points);
        out.groups.extend(p.groups.iter().map(|g| g + offset));
        offset += p.groups.iter().max().map_or(0, |g| g + 1);
        out.ratios.extend(p.ratios.iter().cloned());
        out.running_min.extend(p.running_min.iter().cloned());
        out.running_max.extend(p.running_max.iter().cloned());
        out.resolution = out.resolution.max(p.resolution);
        out.resolved = out.resolved.min(p.resolved);
    }
    Ok(out)
}

/// Ratio profile on one tree; sample points come from ℓ^a (strip of width `eps_level`)
/// or from the mass measure.
#[allow(clippy::too_many_arguments)]
pub fn density_profile<R: Rng + ?Sized>(
    tree: &RealTree,
    measure_kind: ProfileMeasure,
    gauge: &Gauge,
    gamma: f64,
    n_points: usize,
    n_min: u32,
    n_max: u32,
    eps_level: f64,
    workers: usize,
    rng: &mut R,
) -> Result<DensityProfile> {
    const OP: &str = "density_profile";
    gauge.validate()?;
    let radii = dyadic_radii(OP, n_min, n_max)?;
    let res = grid_resolution(tree);
    let (points, resolution, strip) = match measure_kind {
        ProfileMeasure::Level { a } => {
            if !(eps_level > 0.0) {
                return Err(domain(
                    OP,
                    format!("eps_level={eps_level} must be positive"),
                ));
            }
            let strip = tree.level_strip(a, eps_level);
            if strip.is_empty() {
                return Err(Error::EmptyLevel { a, eps: eps_level });
            }
            let pts: Vec<usize> = (0..n_points)
                .map(|_| strip[rng.random_range(0..strip.len())])
                .collect();
            (pts, res.max(eps_level), strip)
        }
        ProfileMeasure::Mass => {
            let pts: Vec<usize> = (0..n_points).map(|_| tree.sample_from_mass(rng)).collect();
            (pts, res, Vec::new())
        }
    };
    let rows = par_map(points.len(), workers, |i| match measure_kind {
        ProfileMeasure::Level { a } => {
            tree.level_ball_profile(a, points[i], &strip, &radii, eps_level)
        }
        ProfileMeasure::Mass => tree.mass_ball_profile(points[i], &radii),
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let groups = vec![0; points.len()];
    DensityProfile::assemble(
        gamma,
        measure_kind,
        gauge,
        n_min,
        n_max,
        points,
        groups,
        rows,
        resolution,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinalProfileOptions {
    pub n_points: usize,
    pub n_min: u32,
    pub n_max: u32,
    /// Consecutive draws sharing a group label.
    pub group_size: usize,
    pub seed: u64,
    /// Stream id of the first draw; draw i uses `first_stream + i`.
    pub first_stream: u64,
    pub workers: usize,
}

/// Ratio profile from spinal draws at height `a`: L*_r(a) for the level measure and
/// M*_r(a) (from `scheme`) for the mass measure.
pub fn spinal_density_profile(
    sampler: &SpinalSampler,
    measure_kind: ProfileMeasure,
    a: f64,
    gauge: &Gauge,
    scheme: Option<&MassScheme>,
    opts: &SpinalProfileOptions,
) -> Result<DensityProfile> {
    const OP: &str = "spinal_density_profile";
    gauge.validate()?;
    let radii = dyadic_radii(OP, opts.n_min, opts.n_max)?;
    let scheme = match measure_kind {
        ProfileMeasure::Mass => {
            Some(scheme.ok_or_else(|| domain(OP, "mass profiles need a mass scheme"))?)
        }
        ProfileMeasure::Level { .. } => None,
    };
    let mut asc = radii.clone();
    asc.reverse();
    let rows = par_map(opts.n_points, opts.workers, |i| {
        let mut rng = RngStream::new(opts.seed, opts.first_stream + i as u64).rng();
        let d = spinal_draw(sampler, a, &asc, scheme, &mut rng)?;
        let mut m = match measure_kind {
            ProfileMeasure::Level { .. } => d.level_masses,
            ProfileMeasure::Mass => d.mass_balls.unwrap_or_default(),
        };
        m.reverse();
        Ok(m)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let g = opts.group_size.max(1);
    DensityProfile::assemble(
        sampler.gamma,
        measure_kind,
        gauge,
        opts.n_min,
        opts.n_max,
        (0..opts.n_points).collect(),
        (0..opts.n_points).map(|i| i / g).collect(),
        rows,
        0.0,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Up,
    Down,
    Flat,
    Undetermined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureConsequence {
    /// Packing measure 0 or Hausdorff measure ∞ (proved).
    Proved,
    /// Hausdorff measure 0 for a divergent series: conjectured only.
    Conjectured,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    /// Width of the trailing window for the running extremum.
    pub window: usize,
    pub low_threshold: f64,
    pub high_threshold: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            window: 4,
            low_threshold: 0.5,
            high_threshold: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeTrend {
    pub gauge: Gauge,
    pub gamma: f64,
    pub series: Verdict,
    pub series_method: Method,
    /// Trend that the series verdict predicts for the proxy.
    pub expected: Trend,
    /// Majority trend of the sampled points.
    pub observed: Trend,
    /// Series side implied by the observed majority.
    pub observed_side: Verdict,
    pub slopes: Vec<f64>,
    pub frac_up: f64,
    pub frac_down: f64,
    pub frac_crossed_below: f64,
    pub frac_crossed_above: f64,
    /// Fraction of points whose trend sign matches `expected`.
    pub agreement: f64,
    pub measure: MeasureConsequence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub kind: SeriesKind,
    pub options: ReportOptions,
    pub gauges: Vec<GaugeTrend>,
}

fn expected_trend(kind: SeriesKind, v: Verdict) -> Trend {
    match (kind, v) {
        (_, Verdict::Unknown) => Trend::Undetermined,
        (SeriesKind::PackLevel, Verdict::Converges) => Trend::Up,
        (SeriesKind::PackLevel, Verdict::Diverges) => Trend::Down,
        (_, Verdict::Converges) => Trend::Down,
        (_, Verdict::Diverges) => Trend::Up,
    }
}

fn side_of(kind: SeriesKind, t: Trend) -> Verdict {
    match (kind, t) {
        (SeriesKind::PackLevel, Trend::Up) => Verdict::Converges,
        (SeriesKind::PackLevel, Trend::Down) => Verdict::Diverges,
        (_, Trend::Down) => Verdict::Converges,
        (_, Trend::Up) => Verdict::Diverges,
        _ => Verdict::Unknown,
    }
}

/// Least-squares slope of y on x.
fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Trailing-window min (PackLevel) or max (Hausdorff kinds) of a row, then the slope
/// of its logarithm against n.
pub fn window_trend(row: &[f64], n_min: u32, kind: SeriesKind, window: usize) -> (f64, Trend) {
    let w = window.max(1);
    let finite: Vec<(f64, f64)> = row
        .iter()
        .enumerate()
        .filter(|(_, x)| x.is_finite())
        .map(|(j, &x)| ((n_min as usize + j) as f64, x))
        .collect();
    if finite.len() < w + 1 {
        return (f64::NAN, Trend::Undetermined);
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for end in w - 1..finite.len() {
        let win = &finite[end + 1 - w..=end];
        let e = match kind {
            SeriesKind::PackLevel => win.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
            _ => win.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
        };
        if !(e > 0.0) {
            return (f64::NAN, Trend::Undetermined);
        }
        xs.push(finite[end].0);
        ys.push(e.ln());
    }
    let s = slope(&xs, &ys);
    let t = if s > 0.0 {
        Trend::Up
    } else if s < 0.0 {
        Trend::Down
    } else {
        Trend::Flat
    };
    (s, t)
}

/// Trend record per gauge, graded against the series classifier.
pub fn dichotomy_report(
    profiles: &[DensityProfile],
    kind: SeriesKind,
    opts: &ReportOptions,
) -> Result<DichotomyReport> {
    const OP: &str = "dichotomy_report";
    if profiles.is_empty() {
        return Err(domain(OP, "no profiles"));
    }
    let mut gauges = Vec::with_capacity(profiles.len());
    for p in profiles {
        let levels = p
            .ratios
            .first()
            .map_or(0, |r| r.iter().filter(|x| x.is_finite()).count());
        if levels < opts.window.max(1) + 2 {
            return Err(domain(
                OP,
                format!(
                    "{levels} resolved levels; need at least {}",
                    opts.window.max(1) + 2
                ),
            ));
        }
        let class = series_classify(&p.gauge, p.gamma, kind);
        let expected = expected_trend(kind, class.verdict);
        let (slopes, trends): (Vec<f64>, Vec<Trend>) = p
            .ratios
            .iter()
            .map(|r| window_trend(r, p.n_min, kind, opts.window))
            .unzip();
        let k = trends.len().max(1) as f64;
        let frac = |t: Trend| trends.iter().filter(|&&x| x == t).count() as f64 / k;
        let (frac_up, frac_down) = (frac(Trend::Up), frac(Trend::Down));
        let observed = if frac_up > frac_down {
            Trend::Up
        } else if frac_down > frac_up {
            Trend::Down
        } else {
            Trend::Flat
        };
        let last = |rows: &Vec<Vec<f64>>, i: usize| rows[i].last().copied().unwrap_or(f64::NAN);
        let n_rows = p.ratios.len().max(1) as f64;
        let below = (0..p.ratios.len())
            .filter(|&i| last(&p.running_min, i) < opts.low_threshold)
            .count() as f64;
        let above = (0..p.ratios.len())
            .filter(|&i| last(&p.running_max, i) > opts.high_threshold)
            .count() as f64;
        let agreement = if expected == Trend::Undetermined {
            f64::NAN
        } else {
            frac(expected)
        };
        let measure = match (kind, class.verdict) {
            (_, Verdict::Unknown) => MeasureConsequence::None,
            (SeriesKind::PackLevel, _) => MeasureConsequence::Proved,
            (_, Verdict::Converges) => MeasureConsequence::Proved,
            (_, Verdict::Diverges) => MeasureConsequence::Conjectured,
        };
        gauges.push(GaugeTrend {
            gauge: p.gauge.clone(),
            gamma: p.gamma,
            series: class.verdict,
            series_method: class.method,
            expected,
            observed,
            observed_side: side_of(kind, observed),
            slopes,
            frac_up,
            frac_down,
            frac_crossed_below: below / n_rows,
            frac_crossed_above: above / n_rows,
            agreement,
            measure,
        });
    }
    Ok(DichotomyReport {
        kind,
        options: *opts,
        gauges,
    })
}

impl DichotomyReport {
    /// JSON summary without the per-point slopes.
    pub fn summary_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(gs) = v.get_mut("gauges").and_then(|g| g.as_array_mut()) {
            for g in gs {
                if let Some(o) = g.as_object_mut() {
                    o.remove("slopes");
                }
            }
        }
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    /// Density hypothesis holds on every sampled proxy.
    pub applicable: bool,
    pub estimate: f64,
    pub bound: f64,
    pub tolerance: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub doubling: f64,
    pub sampled_mass: f64,
    pub n_points: usize,
    pub sampling_tolerance: f64,
    pub discretization_tolerance: f64,
    pub packing: InequalityCheck,
    pub hausdorff: InequalityCheck,
    /// Fewer than ten sampled points.
    pub inconclusive: bool,
}

/// Checks P ≥ C^{−2}μ and H ≥ C^{−1}μ at estimator level where the density proxies
/// are at most 1. Tolerance: μ/√k for sampling plus the gauge change over one grid
/// resolution per ball.
pub fn density_comparison_check(
    packing: &PackingEstimate,
    hausdorff: &HausdorffEstimate,
    profile: &DensityProfile,
    sampled_mass: f64,
    doubling: f64,
) -> ComparisonRecord {
    let k = profile.ratios.len();
    let sampling = if k == 0 {
        sampled_mass
    } else {
        sampled_mass / (k as f64).sqrt()
    };
    let g = |r: f64| {
        if profile.gauge.in_domain(r) {
            profile
                .gauge
                .ln_eval(profile.gamma, r.ln())
                .map(f64::exp)
                .unwrap_or(0.0)
        } else {
            0.0
        }
    };
    let res = profile.resolution;
    let wiggle =
        |eps: f64, balls: usize| balls as f64 * (g(eps) - g((eps - res).max(eps * 1e-12))).abs();
    let disc_p = wiggle(packing.eps, packing.centers.len());
    let disc_h = wiggle(hausdorff.eps, hausdorff.centers.len());
    let all_last = |rows: &[Vec<f64>], test: fn(f64) -> bool| {
        !rows.is_empty() && rows.iter().all(|r| r.last().is_some_and(|&x| test(x)))
    };
    let pack_bound = sampled_mass / (doubling * doubling);
    let haus_bound = sampled_mass / doubling;
    let tol_p = sampling + disc_p;
    let tol_h = sampling + disc_h;
    ComparisonRecord {
        doubling,
        sampled_mass,
        n_points: k,
        sampling_tolerance: sampling,
        discretization_tolerance: disc_p.max(disc_h),
        packing: InequalityCheck {
            applicable: all_last(&profile.running_min, |x| x <= 1.0),
            estimate: packing.lower,
            bound: pack_bound,
            tolerance: tol_p,
            holds: packing.lower >= pack_bound - tol_p,
        },
        hausdorff: InequalityCheck {
            applicable: all_last(&profile.running_max, |x| x <= 1.0),
            estimate: hausdorff.upper,
            bound: haus_bound,
            tolerance: tol_h,
            holds: hausdorff.upper >= haus_bound - tol_h,
        },
        inconclusive: k < 10,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauges::GaugeKind;
    use crate::samplers::{brownian_excursion, ExcursionOptions};
    use crate::tree::{build_tree, CodingFunction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Segment of length 1 traversed up and down in 2m steps.
    fn segment(m: usize) -> RealTree {
        let s = 1.0 / m as f64;
        let values: Vec<f64> = (0..=2 * m).map(|i| i.min(2 * m - i) as f64 * s).collect();
        build_tree(CodingFunction::new(s, values, 2.0, 0)).unwrap()
    }

    fn brownian(n: usize, seed: u64) -> RealTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        build_tree(brownian_excursion(n, 0.0, &ExcursionOptions::default(), &mut rng).unwrap())
            .unwrap()
    }

    #[test]
    fn segment_packing_and_cover() {
        let t = segment(1024);
        let pts: Vec<usize> = (0..=1024).collect();
        let g = Gauge::pure(1.0);
        for k in 3..7 {
            let eps = 2f64.powi(-k);
            let p = packing_premeasure_estimate(&t, &pts, &g, 2.0, eps).unwrap();
            assert!(p.lower > 0.5 - 2.0 * eps && p.lower <= 1.0, "{}", p.lower);
            assert!(p.upper >= p.lower && p.upper <= 2.0 * 1024.0 * eps);
            let h = hausdorff_premeasure_estimate(&t, &pts, &g, 2.0, eps).unwrap();
            assert!(h.upper >= 0.5 && h.upper <= 2.0 + 2.0 * eps, "{}", h.upper);
        }
    }

    #[test]
    fn packing_balls_are_disjoint() {
        let t = brownian(4000, 1);
        let pts: Vec<usize> = (0..4000).step_by(7).collect();
        let p = packing_premeasure_estimate(&t, &pts, &Gauge::pure(2.0), 2.0, 0.1).unwrap();
        for i in 0..p.centers.len() {
            assert!(p.radii[i] > 0.0 && p.radii[i] <= 0.1);
            for j in i + 1..p.centers.len() {
                let d = t.distance(p.centers[i], p.centers[j]).unwrap();
                assert!(d > p.radii[i] + p.radii[j]);
            }
        }
        // radii come out in non-increasing order
        assert!(p.radii.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn cover_is_complete() {
        let t = brownian(40000, 2);
        let pts: Vec<usize> = (0..40000).step_by(37).collect();
        let h = hausdorff_premeasure_estimate(&t, &pts, &Gauge::pure(2.0), 2.0, 0.05).unwrap();
        for &p in &pts {
            assert!(h
                .centers
                .iter()
                .any(|&c| t.distance(p, c).unwrap() <= h.ball_radius));
        }
    }

    #[test]
    fn gauge_scaling_is_exact() {
        let t = brownian(20000, 3);
        let pts: Vec<usize> = (0..20000).step_by(23).collect();
        let g = Gauge::pure(2.0);
        let gk = g.clone().scaled(4.0);
        let a = packing_premeasure_estimate(&t, &pts, &g, 2.0, 0.1).unwrap();
        let b = packing_premeasure_estimate(&t, &pts, &gk, 2.0, 0.1).unwrap();
        assert_eq!(a.centers, b.centers);
        assert!((b.lower - 4.0 * a.lower).abs() <= 1e-12 * b.lower);
        let a = hausdorff_premeasure_estimate(&t, &pts, &g, 2.0, 0.1).unwrap();
        let b = hausdorff_premeasure_estimate(&t, &pts, &gk, 2.0, 0.1).unwrap();
        assert!((b.upper - 4.0 * a.upper).abs() <= 1e-12 * b.upper);
    }

    #[test]
    fn singleton_sample() {
        let t = segment(64);
        let g = Gauge::pure(1.0);
        let p = packing_premeasure_estimate(&t, &[10], &g, 2.0, 0.25).unwrap();
        assert_eq!(p.radii, vec![0.25]);
        assert!((p.lower - 0.25).abs() < 1e-15);
        let h = hausdorff_premeasure_estimate(&t, &[10], &g, 2.0, 0.25).unwrap();
        assert!((h.upper - 0.25).abs() < 1e-15);
        assert!(packing_premeasure_estimate(&t, &[], &g, 2.0, 0.25).is_err());
        assert!(hausdorff_premeasure_estimate(&t, &[3], &g, 2.0, 1e-3).is_err());
    }

    #[test]
    fn hausdorff_sequence_is_non_increasing() {
        let t = brownian(20000, 4);
        let pts: Vec<usize> = (0..20000).step_by(11).collect();
        for q in [1.0, 2.0, 3.0] {
            let s = hausdorff_sequence(&t, &pts, &Gauge::pure(q), 2.0, 0.2, 8).unwrap();
            assert!(s.values.windows(2).all(|w| w[1] <= w[0]));
            assert!(s.net_sizes.windows(2).all(|w| w[1] >= w[0]));
            assert_eq!(s.values.len(), s.eps.len());
        }
    }

    #[test]
    fn constant_gauge_profile_increases_in_radius() {
        let t = brownian(20000, 5);
        let g = Gauge::new(GaugeKind::CustomTable {
            points: vec![(1e-6, 1.0), (1.0, 1.0)],
        });
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = density_profile(
            &t,
            ProfileMeasure::Mass,
            &g,
            2.0,
            20,
            1,
            6,
            0.0,
            1,
            &mut rng,
        )
        .unwrap();
        for row in &p.ratios {
            // columns run from large to small radius
            let f: Vec<f64> = row.iter().cloned().filter(|x| x.is_finite()).collect();
            assert!(f.len() >= 2);
            assert!(f.windows(2).all(|w| w[0] >= w[1]));
        }
        assert!(p
            .running_min
            .iter()
            .all(|r| r.windows(2).all(|w| w[1] <= w[0])));
    }

    #[test]
    fn duplicate_points_give_identical_rows() {
        let t = brownian(20000, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = density_profile(
            &t,
            ProfileMeasure::Level { a: 0.3 },
            &Gauge::pure(1.0),
            2.0,
            400,
            1,
            5,
            0.02,
            2,
            &mut rng,
        )
        .unwrap();
        let mut seen = std::collections::HashMap::new();
        let mut dup = 0;
        for (i, &pt) in p.points.iter().enumerate() {
            if let Some(&j) = seen.get(&pt) {
                let (a, b): (&Vec<f64>, &Vec<f64>) = (&p.ratios[i], &p.ratios[j]);
                assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
                dup += 1;
            }
            seen.insert(pt, i);
        }
        assert!(dup > 0);
        assert!(p.resolution >= 0.02);
        assert!(p.ratios.iter().flatten().all(|x| x.is_nan() || *x >= 0.0));
    }

    #[test]
    fn level_profile_needs_a_nonempty_level() {
        let t = brownian(1000, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r = density_profile(
            &t,
            ProfileMeasure::Level { a: 50.0 },
            &Gauge::pure(1.0),
            2.0,
            5,
            1,
            4,
            0.01,
            1,
            &mut rng,
        );
        assert!(matches!(r, Err(Error::EmptyLevel { .. })));
    }

    #[test]
    fn identical_gauges_give_identical_verdicts() {
        let s = SpinalSampler::new(2.0).unwrap();
        let opts = SpinalProfileOptions {
            n_points: 40,
            n_min: 2,
            n_max: 12,
            group_size: 10,
            seed: 3,
            first_stream: 0,
            workers: 1,
        };
        let g = Gauge::level_critical(1, 1.0);
        let p = spinal_density_profile(&s, ProfileMeasure::Level { a: 1.0 }, 1.0, &g, None, &opts)
            .unwrap();
        let rep = dichotomy_report(
            &[p.clone(), p],
            SeriesKind::PackLevel,
            &ReportOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.gauges[0], rep.gauges[1]);
        assert_eq!(rep.gauges[0].series, Verdict::Converges);
        assert_eq!(rep.gauges[0].expected, Trend::Up);
        assert!(rep.summary_json().unwrap().contains("\"frac_up\""));
    }

    #[test]
    fn spinal_profile_is_worker_invariant() {
        let s = SpinalSampler::new(1.5).unwrap();
        let mut opts = SpinalProfileOptions {
            n_points: 12,
            n_min: 2,
            n_max: 10,
            group_size: 4,
            seed: 5,
            first_stream: 100,
            workers: 1,
        };
        let g = Gauge::level_critical(1, 0.25);
        let a = spinal_density_profile(&s, ProfileMeasure::Level { a: 1.0 }, 1.0, &g, None, &opts)
            .unwrap();
        opts.workers = 3;
        let b = spinal_density_profile(&s, ProfileMeasure::Level { a: 1.0 }, 1.0, &g, None, &opts)
            .unwrap();
        let bits = |p: &DensityProfile| {
            p.ratios
                .iter()
                .flatten()
                .map(|x| x.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.groups, vec![0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2]);
    }

    #[test]
    fn report_needs_enough_levels() {
        let s = SpinalSampler::new(2.0).unwrap();
        let opts = SpinalProfileOptions {
            n_points: 5,
            n_min: 2,
            n_max: 5,
            group_size: 1,
            seed: 1,
            first_stream: 0,
            workers: 1,
        };
        let p = spinal_density_profile(
            &s,
            ProfileMeasure::Level { a: 1.0 },
            1.0,
            &Gauge::level_critical(1, 1.0),
            None,
            &opts,
        )
        .unwrap();
        assert!(dichotomy_report(&[p], SeriesKind::PackLevel, &ReportOptions::default()).is_err());
    }

    #[test]
    fn window_trend_signs() {
        let up: Vec<f64> = (0..10).map(|i| (i as f64).exp()).collect();
        assert_eq!(window_trend(&up, 1, SeriesKind::PackLevel, 3).1, Trend::Up);
        let down: Vec<f64> = up.iter().rev().cloned().collect();
        assert_eq!(
            window_trend(&down, 1, SeriesKind::HausLevel, 3).1,
            Trend::Down
        );
        assert_eq!(
            window_trend(&up[..3], 1, SeriesKind::PackLevel, 3).1,
            Trend::Undetermined
        );
    }

    #[test]
    fn comparison_on_segment() {
        let t = segment(1024);
        let pts: Vec<usize> = (0..=1024).collect();
        let g = Gauge::pure(1.0);
        let eps = 1.0 / 32.0;
        let p = packing_premeasure_estimate(&t, &pts, &g, 2.0, eps).unwrap();
        let h = hausdorff_premeasure_estimate(&t, &pts, &g, 2.0, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let prof = density_profile(
            &t,
            ProfileMeasure::Mass,
            &g,
            2.0,
            50,
            2,
            6,
            0.0,
            1,
            &mut rng,
        )
        .unwrap();
        let c = density_comparison_check(&p, &h, &prof, 1.0, 2.0);
        assert!(c.packing.holds && p.lower > c.packing.bound);
        assert!(c.hausdorff.holds && h.upper > c.hausdorff.bound);
        assert!(!c.inconclusive);
        let null = density_comparison_check(&p, &h, &prof, 0.0, 2.0);
        assert!(null.packing.holds && null.hausdorff.holds);
        let one =
            density_profile(&t, ProfileMeasure::Mass, &g, 2.0, 1, 2, 6, 0.0, 1, &mut rng).unwrap();
        let c1 = density_comparison_check(&p, &h, &one, 1.0, 2.0);
        assert!(c1.inconclusive && c1.sampling_tolerance == 1.0);
    }

    #[test]
    fn profile_csv_layout() {
        let s = SpinalSampler::new(2.0).unwrap();
        let opts = SpinalProfileOptions {
            n_points: 2,
            n_min: 2,
            n_max: 4,
            group_size: 1,
            seed: 1,
            first_stream: 0,
            workers: 1,
        };
        let p = spinal_density_profile(
            &s,
            ProfileMeasure::Level { a: 1.0 },
            1.0,
            &Gauge::pure(1.0),
            None,
            &opts,
        )
        .unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "point_id,n,ratio");
        assert_eq!(lines.len(), 7);
        assert!(lines[1].starts_with("0,2,"));
    }
}
