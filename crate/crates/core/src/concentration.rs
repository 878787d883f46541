//! Concentration functions `Q(F, tau) = sup_x P(Y in x + tau B)` where `B` is
//! the closed Euclidean ball of radius 1/2. In one dimension `tau B` is a
//! closed window of length `tau`.
//!
//! Three routes are provided: exact enumeration of the law of a weighted sum
//! (`exact_q_1d`, `exact_q_multid`), Monte Carlo (`mc_q`) and the Esséen-type
//! characteristic-function integral (`esseen_upper_q`), which is a bound
//! *shape* rather than a bound unless its constant dominates the true one.

use std::collections::HashMap;

use rand::distributions::Distribution;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    cp_sample_with, merge_atoms, CompoundPoisson, DiscreteDistribution, PointCloud,
};
use crate::error::{domain, invalid, Error, Result};
use crate::quadrature::{adaptive_simpson, ball_integral, BallQuadrature};
use crate::rng::RngSeed;
use crate::weights::WeightVector;

/// Default cap on the number of outcome atoms materialized by exact enumeration.
pub const DEFAULT_ENUMERATION_BUDGET: usize = 20_000_000;

/// Atoms of a partial sum closer than this are merged after each convolution step.
pub const CONVOLUTION_MERGE_TOL: f64 = 1e-9;

/// Slack added to closed windows (full length in 1-d, diameter in d >= 2).
pub const WINDOW_TOL: f64 = 1e-9;

/// Smallest sample size accepted by [`mc_q`].
pub const MIN_MC_SAMPLES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
    EsseenUpper,
}

/// A value of `Q(F, tau)` together with how it was obtained.
///
/// Exact and Monte Carlo values lie in `[0, 1]`; an `esseen_upper` value is a
/// bound shape and may exceed 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    pub value: f64,
    pub method: Method,
    pub stderr: f64,
    pub tau: f64,
}

impl ConcentrationEstimate {
    pub fn exact(value: f64, tau: f64) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            method: Method::Exact,
            stderr: 0.0,
            tau,
        }
    }
}

/// Exact law of `S_a = sum_k X_k a_k` by sequential convolution.
pub fn weighted_sum_distribution(
    x: &DiscreteDistribution,
    a: &WeightVector,
    budget: usize,
) -> Result<DiscreteDistribution> {
    if x.dim() != 1 {
        return Err(invalid("weighted sum: X must be real-valued"));
    }
    if !x.is_normalized() {
        return Err(domain(
            "weighted sum: L(X) must be a probability distribution",
        ));
    }
    let dim = a.dim();
    let mut atoms = vec![0.0; dim];
    let mut weights = vec![1.0];
    for row in a.rows() {
        let needed = weights.len() as u128 * x.len() as u128;
        if needed > budget as u128 {
            return Err(Error::Capacity {
                what: "exact convolution",
                needed,
                budget: budget as u128,
            });
        }
        let mut next_atoms = Vec::with_capacity(needed as usize * dim);
        let mut next_weights = Vec::with_capacity(needed as usize);
        for (xv, xw) in x.iter() {
            let xv = xv[0];
            for (pt, w) in atoms.chunks_exact(dim).zip(&weights) {
                next_atoms.extend(pt.iter().zip(row).map(|(p, r)| p + xv * r));
                next_weights.push(w * xw);
            }
        }
        (atoms, weights) = if dim == 1 {
            merge_sorted_1d(next_atoms, next_weights, CONVOLUTION_MERGE_TOL)
        } else {
            merge_atoms(dim, &next_atoms, &next_weights, CONVOLUTION_MERGE_TOL)
        };
    }
    DiscreteDistribution::with_tolerance(dim, atoms, weights, false, 0.0)
}

fn merge_sorted_1d(atoms: Vec<f64>, weights: Vec<f64>, tol: f64) -> (Vec<f64>, Vec<f64>) {
    let mut pairs: Vec<(f64, f64)> = atoms.into_iter().zip(weights).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out_a: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut out_w: Vec<f64> = Vec::with_capacity(pairs.len());
    let mut last = f64::NEG_INFINITY;
    for (x, w) in pairs {
        if x - last <= tol {
            *out_w.last_mut().expect("nonempty") += w;
        } else {
            out_a.push(x);
            out_w.push(w);
        }
        last = x;
    }
    (out_a, out_w)
}

/// Max mass of a closed window of length `tau` over sorted atoms.
fn max_window_mass(sorted: &[f64], weights: &[f64], tau: f64) -> f64 {
    let mut best = 0.0f64;
    let mut mass = 0.0;
    let mut right = 0;
    for left in 0..sorted.len() {
        while right < sorted.len() && sorted[right] - sorted[left] <= tau + WINDOW_TOL {
            mass += weights[right];
            right += 1;
        }
        best = best.max(mass);
        mass -= weights[left];
    }
    best
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Spatial hash with cells of side `cell`.
struct Grid {
    cell: f64,
    dim: usize,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl Grid {
    fn new(points: &[f64], dim: usize, cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.chunks_exact(dim).enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { cell, dim, cells }
    }

    fn key(p: &[f64], cell: f64) -> Vec<i64> {
        p.iter().map(|x| (x / cell).floor() as i64).collect()
    }

    /// Indices of points in the 3^d block of cells around `p`.
    fn around(&self, p: &[f64]) -> Vec<usize> {
        let base = Self::key(p, self.cell);
        let mut out = Vec::new();
        let mut offset = vec![-1i64; self.dim];
        loop {
            let key: Vec<i64> = base.iter().zip(&offset).map(|(b, o)| b + o).collect();
            if let Some(v) = self.cells.get(&key) {
                out.extend_from_slice(v);
            }
            let mut k = 0;
            loop {
                offset[k] += 1;
                if offset[k] <= 1 {
                    break;
                }
                offset[k] = -1;
                k += 1;
                if k == self.dim {
                    out.sort_unstable();
                    return out;
                }
            }
        }
    }
}

/// Max mass of a closed Euclidean ball of diameter `diameter` over weighted points.
///
/// The optimal ball can be shrunk to the smallest ball enclosing the points
/// it covers, whose center is the circumcenter of at most `d + 1` of them. In
/// `d = 2` this is realized by an angular sweep around each point; in higher
/// dimensions circumcenters of all small subsets are enumerated.
pub fn max_ball_mass(points: &[f64], weights: &[f64], dim: usize, diameter: f64) -> f64 {
    let max_weight = weights.iter().cloned().fold(0.0, f64::max);
    if diameter <= 0.0 || weights.len() <= 1 {
        return max_weight;
    }
    if dim == 1 {
        let mut pairs: Vec<(f64, f64)> = points
            .iter()
            .copied()
            .zip(weights.iter().copied())
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (xs, ws): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        return max_window_mass(&xs, &ws, diameter);
    }
    let radius = 0.5 * diameter;
    let reach = radius + 0.5 * WINDOW_TOL;
    let grid = Grid::new(points, dim, diameter);
    let at = |i: usize| &points[i * dim..(i + 1) * dim];
    let mass_at = |center: &[f64], cand: &[usize]| -> f64 {
        cand.iter()
            .filter(|&&j| dist2(at(j), center) <= reach * reach)
            .map(|&j| weights[j])
            .sum()
    };
    let mut best = max_weight;
    for i in 0..weights.len() {
        let p = at(i);
        let near: Vec<usize> = grid
            .around(p)
            .into_iter()
            .filter(|&j| dist2(at(j), p) <= (diameter + WINDOW_TOL).powi(2))
            .collect();
        let near_mass: f64 = near.iter().map(|&j| weights[j]).sum();
        if near_mass <= best {
            continue;
        }
        if dim == 2 {
            best = best.max(angular_sweep(i, &near, points, weights, radius, &mass_at));
        } else {
            best = best.max(circumcenter_search(i, &near, points, dim, radius, &mass_at));
        }
    }
    best
}

fn angular_sweep(
    i: usize,
    near: &[usize],
    points: &[f64],
    weights: &[f64],
    radius: f64,
    mass_at: &dyn Fn(&[f64], &[usize]) -> f64,
) -> f64 {
    use std::f64::consts::PI;
    let (px, py) = (points[2 * i], points[2 * i + 1]);
    // events: (angle, enter?, weight)
    let mut events: Vec<(f64, bool, f64)> = Vec::with_capacity(2 * near.len());
    let mut base = weights[i];
    for &j in near {
        if j == i {
            continue;
        }
        let (dx, dy) = (points[2 * j] - px, points[2 * j + 1] - py);
        let dist = (dx * dx + dy * dy).sqrt();
        let half = (dist / (2.0 * radius)).min(1.0).acos() + 1e-12;
        if half >= PI {
            base += weights[j];
            continue;
        }
        let mid = dy.atan2(dx);
        let mut lo = mid - half;
        let mut hi = mid + half;
        // normalize start into [0, 2pi)
        while lo < 0.0 {
            lo += 2.0 * PI;
            hi += 2.0 * PI;
        }
        while lo >= 2.0 * PI {
            lo -= 2.0 * PI;
            hi -= 2.0 * PI;
        }
        if hi >= 2.0 * PI {
            // wraps: inside at angle 0 already
            base += weights[j];
            events.push((hi - 2.0 * PI, false, weights[j]));
            events.push((lo, true, weights[j]));
        } else {
            events.push((lo, true, weights[j]));
            events.push((hi, false, weights[j]));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut current = base;
    let mut best = base;
    let mut best_angle = 0.0;
    for (angle, enter, w) in events {
        if enter {
            current += w;
            if current > best {
                best = current;
                best_angle = angle;
            }
        } else {
            current -= w;
        }
    }
    let center = [
        px + radius * best_angle.cos(),
        py + radius * best_angle.sin(),
    ];
    mass_at(&center, near)
}

/// Circumcenter of `pts` within their affine hull, if nondegenerate.
fn circumcenter(pts: &[&[f64]]) -> Option<Vec<f64>> {
    let k = pts.len() - 1;
    let p0 = pts[0];
    if k == 0 {
        return Some(p0.to_vec());
    }
    let diffs: Vec<Vec<f64>> = pts[1..]
        .iter()
        .map(|p| p.iter().zip(p0).map(|(a, b)| a - b).collect())
        .collect();
    let dotv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram = nalgebra::DMatrix::from_fn(k, k, |r, c| dotv(&diffs[r], &diffs[c]));
    let rhs = nalgebra::DVector::from_fn(k, |r, _| 0.5 * dotv(&diffs[r], &diffs[r]));
    let coef = gram.lu().solve(&rhs)?;
    let mut c = p0.to_vec();
    for (r, d) in diffs.iter().enumerate() {
        for (cj, dj) in c.iter_mut().zip(d) {
            *cj += coef[r] * dj;
        }
    }
    c.iter().all(|x| x.is_finite()).then_some(c)
}

fn circumcenter_search(
    i: usize,
    near: &[usize],
    points: &[f64],
    dim: usize,
    radius: f64,
    mass_at: &dyn Fn(&[f64], &[usize]) -> f64,
) -> f64 {
    let at = |j: usize| &points[j * dim..(j + 1) * dim];
    let later: Vec<usize> = near.iter().copied().filter(|&j| j > i).collect();
    let reach = radius + 0.5 * WINDOW_TOL;
    let diam2 = (2.0 * radius + WINDOW_TOL).powi(2);
    let mut best = mass_at(at(i), near);
    let mut subset = vec![i];
    fn recurse(
        start: usize,
        subset: &mut Vec<usize>,
        later: &[usize],
        max_size: usize,
        visit: &mut dyn FnMut(&[usize]),
        ok: &dyn Fn(usize, &[usize]) -> bool,
    ) {
        for pos in start..later.len() {
            let j = later[pos];
            if !ok(j, subset) {
                continue;
            }
            subset.push(j);
            visit(subset);
            if subset.len() < max_size {
                recurse(pos + 1, subset, later, max_size, visit, ok);
            }
            subset.pop();
        }
    }
    let ok = |j: usize, s: &[usize]| s.iter().all(|&q| dist2(at(q), at(j)) <= diam2);
    let mut visit = |s: &[usize]| {
        let pts: Vec<&[f64]> = s.iter().map(|&q| at(q)).collect();
        if let Some(c) = circumcenter(&pts) {
            if dist2(&c, pts[0]) <= reach * reach {
                best = best.max(mass_at(&c, near));
            }
        }
    };
    recurse(0, &mut subset, &later, dim + 1, &mut visit, &ok);
    best
}

/// `Q(F, tau)` for a discrete distribution in any dimension.
pub fn exact_q(f: &DiscreteDistribution, tau: f64) -> Result<ConcentrationEstimate> {
    if !(tau >= 0.0) {
        return Err(domain(format!("Q(F, tau): tau = {tau} must be >= 0")));
    }
    let value = max_ball_mass(f.flat_atoms(), f.weights(), f.dim(), tau);
    Ok(ConcentrationEstimate::exact(value, tau))
}

/// Exact `Q(F_a, tau)` for `d = 1`.
pub fn exact_q_1d(
    x: &DiscreteDistribution,
    a: &WeightVector,
    tau: f64,
    budget: usize,
) -> Result<ConcentrationEstimate> {
    if a.dim() != 1 {
        return Err(invalid(format!(
            "exact_q_1d: weights have dimension {}",
            a.dim()
        )));
    }
    let s = weighted_sum_distribution(x, a, budget)?;
    exact_q(&s, tau)
}

/// Exact `Q(F_a, tau)` for `d >= 2`.
pub fn exact_q_multid(
    x: &DiscreteDistribution,
    a: &WeightVector,
    tau: f64,
    budget: usize,
) -> Result<ConcentrationEstimate> {
    if a.dim() < 2 {
        return Err(invalid("exact_q_multid: weights must have dimension >= 2"));
    }
    let s = weighted_sum_distribution(x, a, budget)?;
    exact_q(&s, tau)
}

/// Exact `Q(F_a, tau)` dispatched on the dimension of `a`.
pub fn exact_q_weighted(
    x: &DiscreteDistribution,
    a: &WeightVector,
    tau: f64,
    budget: usize,
) -> Result<ConcentrationEstimate> {
    if a.dim() == 1 {
        exact_q_1d(x, a, tau, budget)
    } else {
        exact_q_multid(x, a, tau, budget)
    }
}

/// Something that can be sampled for a Monte Carlo concentration estimate.
#[derive(Clone, Debug)]
pub enum Sampler {
    WeightedSum {
        x: DiscreteDistribution,
        a: WeightVector,
    },
    CompoundPoisson(CompoundPoisson),
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::WeightedSum { a, .. } => a.dim(),
            Sampler::CompoundPoisson(cp) => cp.dim(),
        }
    }

    pub fn sample(&self, n: usize, seed: RngSeed) -> Result<PointCloud> {
        let mut rng = seed.rng();
        match self {
            Sampler::WeightedSum { x, a } => {
                if x.dim() != 1 {
                    return Err(invalid("weighted sum: X must be real-valued"));
                }
                let picker = x.sampler()?;
                let dim = a.dim();
                let mut coords = vec![0.0; n * dim];
                for out in coords.chunks_exact_mut(dim) {
                    for row in a.rows() {
                        let xv = x.atom(picker.sample(&mut rng))[0];
                        for (o, r) in out.iter_mut().zip(row) {
                            *o += xv * r;
                        }
                    }
                }
                Ok(PointCloud { dim, coords })
            }
            Sampler::CompoundPoisson(cp) => cp_sample_with(cp, n, &mut rng),
        }
    }
}

/// Monte Carlo estimate of `Q(F, tau)`: the largest fraction of samples
/// covered by a closed window/ball of size `tau`.
///
/// This is a consistent estimator, not a bound. In `d = 1` and `d = 2` the
/// sample-optimal window is found exactly. For `d >= 3` only balls centered at
/// sample points and at midpoints of close pairs are tried, which can only
/// under-estimate the sample optimum.
pub fn mc_q(
    sampler: &Sampler,
    tau: f64,
    n_samples: usize,
    seed: RngSeed,
) -> Result<ConcentrationEstimate> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(domain(format!(
            "mc_q: at least {MIN_MC_SAMPLES} samples are required, got {n_samples}"
        )));
    }
    if !(tau >= 0.0) {
        return Err(domain(format!("mc_q: tau = {tau} must be >= 0")));
    }
    let cloud = sampler.sample(n_samples, seed)?;
    let value = empirical_q(&cloud, tau);
    let stderr = (value * (1.0 - value) / n_samples as f64).max(0.0).sqrt();
    Ok(ConcentrationEstimate {
        value,
        method: Method::MonteCarlo,
        stderr,
        tau,
    })
}

/// Largest fraction of the cloud inside a closed window/ball of size `tau`.
pub fn empirical_q(cloud: &PointCloud, tau: f64) -> f64 {
    let n = cloud.len();
    let dim = cloud.dim;
    let unit = 1.0 / n as f64;
    if dim == 1 {
        let mut xs = cloud.coords.clone();
        xs.sort_by(f64::total_cmp);
        // counts avoid accumulating 1/n in floating point
        let ones = vec![1.0; n];
        return max_window_mass(&xs, &ones, tau) * unit;
    }
    let (atoms, counts) = merge_atoms(dim, &cloud.coords, &vec![1.0; n], CONVOLUTION_MERGE_TOL);
    if dim == 2 {
        return max_ball_mass(&atoms, &counts, dim, tau) * unit;
    }
    heuristic_ball_count(&atoms, &counts, dim, tau) * unit
}

fn heuristic_ball_count(points: &[f64], counts: &[f64], dim: usize, tau: f64) -> f64 {
    let best0 = counts.iter().cloned().fold(0.0, f64::max);
    if tau <= 0.0 {
        return best0;
    }
    let reach = 0.5 * tau + 0.5 * WINDOW_TOL;
    let grid = Grid::new(points, dim, tau);
    let at = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut best = best0;
    for i in 0..counts.len() {
        let near: Vec<usize> = grid
            .around(at(i))
            .into_iter()
            .filter(|&j| dist2(at(i), at(j)) <= (tau + WINDOW_TOL).powi(2))
            .collect();
        let count_at = |c: &[f64]| -> f64 {
            near.iter()
                .filter(|&&j| dist2(at(j), c) <= reach * reach)
                .map(|&j| counts[j])
                .sum()
        };
        best = best.max(count_at(at(i)));
        for &j in near.iter().filter(|&&j| j > i) {
            let mid: Vec<f64> = at(i)
                .iter()
                .zip(at(j))
                .map(|(x, y)| 0.5 * (x + y))
                .collect();
            best = best.max(count_at(&mid));
        }
    }
    best
}

/// Options for [`esseen_upper_q`].
#[derive(Clone, Copy, Debug)]
pub struct EsseenOptions {
    /// Relative tolerance in `d = 1` (adaptive Simpson).
    pub rel_tol_1d: f64,
    /// Relative tolerance in `d >= 2` (tensor Gauss-Legendre).
    pub rel_tol_multid: f64,
    /// Initial Simpson panels; raise it for rapidly oscillating `|F^|`.
    pub panels: usize,
    pub max_depth: u32,
}

impl Default for EsseenOptions {
    fn default() -> Self {
        Self {
            rel_tol_1d: 1e-8,
            rel_tol_multid: 1e-5,
            panels: 256,
            max_depth: 40,
        }
    }
}

/// `c_esseen * tau^d * int_{||t|| <= 1/tau} |F^(t)| dt`.
///
/// `abs_char_fn` must return `|F^(t)|`.
pub fn esseen_upper_q<F: Fn(&[f64]) -> f64>(
    abs_char_fn: F,
    tau: f64,
    d: usize,
    c_esseen: f64,
    opts: EsseenOptions,
) -> Result<ConcentrationEstimate> {
    if !(tau > 0.0) {
        return Err(domain(format!("esseen: tau = {tau} must be positive")));
    }
    if !(c_esseen > 0.0) {
        return Err(domain("esseen: constant must be positive"));
    }
    let radius = 1.0 / tau;
    let integral = if d == 1 {
        adaptive_simpson(
            |t| abs_char_fn(&[t]),
            -radius,
            radius,
            opts.rel_tol_1d,
            opts.panels,
            opts.max_depth,
        )?
    } else {
        let q = BallQuadrature {
            rel_tol: opts.rel_tol_multid,
            ..BallQuadrature::default()
        };
        ball_integral(&abs_char_fn, d, radius, q)?
    };
    Ok(ConcentrationEstimate {
        value: c_esseen * tau.powi(d as i32) * integral,
        method: Method::EsseenUpper,
        stderr: 0.0,
        tau,
    })
}

/// `|F_a^(t)| = prod_k |X^(<t, a_k>)|`.
pub fn weighted_sum_abs_char_fn(x: &DiscreteDistribution, a: &WeightVector, t: &[f64]) -> f64 {
    a.rows()
        .map(|row| {
            let s: f64 = row.iter().zip(t).map(|(r, t)| r * t).sum();
            crate::distributions::char_fn(x, &[s]).norm()
        })
        .product()
}

/// Both sides of `Q(F, mu) <= (1 + floor(mu / lam))^d Q(F, lam)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityWitness {
    pub mu: f64,
    pub lam: f64,
    pub lhs: f64,
    pub factor: f64,
    pub q_lam: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the regularity inequality on an exactly represented distribution,
/// with `d` taken from the distribution.
pub fn regularity_check(f: &DiscreteDistribution, mu: f64, lam: f64) -> Result<RegularityWitness> {
    if !(mu > 0.0 && lam > 0.0) {
        return Err(domain("regularity: mu and lambda must be positive"));
    }
    let lhs = exact_q(f, mu)?.value;
    let q_lam = exact_q(f, lam)?.value;
    let factor = (1.0 + (mu / lam).floor()).powi(f.dim() as i32);
    let rhs = factor * q_lam;
    Ok(RegularityWitness {
        mu,
        lam,
        lhs,
        factor,
        q_lam,
        rhs,
        holds: lhs <= rhs + 1e-12,
    })
}
