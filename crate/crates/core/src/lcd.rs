//! Distance of `t . a` to the integer lattice and the essential least common
//! denominator `D_{gamma,alpha}(a)`, the smallest `||t||` at which
//! `dist(t . a, Z^n) < min{gamma ||t . a||, alpha}`.
//!
//! For `d <= 3` the denominator is bracketed by a branch and bound over boxes
//! in `t`-space: a box is discarded once a lower bound of the lattice distance
//! over the box is at least an upper bound of the threshold. Boxes are
//! processed in order of their distance to the origin, so when the nearest
//! open box lies beyond `D_upper - tol` every smaller radius has been cleared.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Result};
use crate::rng::RngSeed;
use crate::weights::WeightVector;

/// `t . a = (<t, a_1>, ..., <t, a_n>)`.
pub fn dot_product_vector(t: &[f64], a: &WeightVector) -> Vec<f64> {
    a.rows()
        .map(|row| row.iter().zip(t).map(|(x, y)| x * y).sum())
        .collect()
}

/// Distance from `v` to the nearest integer.
pub fn roundoff(v: f64) -> f64 {
    (v - v.round()).abs()
}

/// Euclidean distance from `v` to `Z^n`.
pub fn dist_to_lattice(v: &[f64]) -> f64 {
    v.iter().map(|&x| roundoff(x).powi(2)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `A = sum_k a_k a_k^T` and `det A`.
pub fn matrix_a(a: &WeightVector) -> (DMatrix<f64>, f64) {
    (a.matrix_a(), a.det_a())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcdParams {
    pub gamma: f64,
    pub alpha: f64,
    /// Search ceiling; `None` selects `10 (1 + 1 / min nonzero |a_kj|)`.
    pub theta_max: Option<f64>,
    pub tol: f64,
}

impl LcdParams {
    pub fn new(gamma: f64, alpha: f64) -> Result<Self> {
        let p = Self {
            gamma,
            alpha,
            theta_max: None,
            tol: 1e-6,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_theta_max(mut self, theta_max: f64) -> Result<Self> {
        self.theta_max = Some(theta_max);
        self.validate()?;
        Ok(self)
    }

    pub fn with_tol(mut self, tol: f64) -> Result<Self> {
        self.tol = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(domain(format!(
                "LCD: gamma = {} must lie in (0, 1)",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(domain(format!(
                "LCD: alpha = {} must be positive",
                self.alpha
            )));
        }
        if !(self.tol > 0.0) {
            return Err(domain("LCD: tol must be positive"));
        }
        if let Some(t) = self.theta_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(domain("LCD: theta_max must be positive"));
            }
        }
        Ok(())
    }

    pub fn theta_max_for(&self, a: &WeightVector) -> f64 {
        self.theta_max
            .unwrap_or_else(|| 10.0 * (1.0 + 1.0 / a.min_nonzero_entry()))
    }
}

/// `dist(t . a, Z^n) < min{gamma ||t . a||, alpha}`.
pub fn violation_condition(t: &[f64], a: &WeightVector, params: &LcdParams) -> bool {
    let v = dot_product_vector(t, a);
    dist_to_lattice(&v) < (params.gamma * norm(&v)).min(params.alpha)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcdResult {
    /// No `t` with `||t|| < d_lower` violates the condition.
    pub d_lower: f64,
    /// Norm of the best violating `t` found; `None` when none was found below the ceiling.
    pub d_upper: Option<f64>,
    pub witness_t: Option<Vec<f64>>,
    /// `false` in heuristic mode (`d > 3`), where only `d_lower` is certified.
    pub certified: bool,
    pub ceiling_reached: bool,
    pub theta_max: f64,
    pub boxes: usize,
}

impl LcdResult {
    pub fn gap(&self) -> f64 {
        self.d_upper.map_or(f64::INFINITY, |u| u - self.d_lower)
    }
}

/// Cap on processed boxes before the search stops with its current bracket.
pub const MAX_BOXES: usize = 20_000_000;

#[derive(Clone, Debug)]
struct Cell {
    min_norm: f64,
    center: Vec<f64>,
    half: Vec<f64>,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Cell {}

impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cell {
    // reversed so BinaryHeap pops the nearest box; centers break ties
    fn cmp(&self, other: &Self) -> Ordering {
        other.min_norm.total_cmp(&self.min_norm).then_with(|| {
            other
                .center
                .iter()
                .zip(&self.center)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
        })
    }
}

fn box_min_norm(center: &[f64], half: &[f64]) -> f64 {
    center
        .iter()
        .zip(half)
        .map(|(c, h)| (c.abs() - h).max(0.0).powi(2))
        .sum::<f64>()
        .sqrt()
}

struct Certifier<'a> {
    a: &'a WeightVector,
    params: LcdParams,
    op_norm: f64,
}

impl Certifier<'_> {
    /// `true` if no point of the box satisfies the strict violation inequality.
    fn box_is_safe(&self, center: &[f64], half: &[f64]) -> bool {
        let v = dot_product_vector(center, self.a);
        let spread: Vec<f64> = self
            .a
            .rows()
            .map(|row| row.iter().zip(half).map(|(x, h)| x.abs() * h).sum())
            .collect();
        // near the origin dist(t . a) = ||t . a|| >= gamma ||t . a||
        if v.iter().zip(&spread).all(|(x, s)| x.abs() + s <= 0.5) {
            return true;
        }
        // each roundoff is 1-Lipschitz in <t, a_k>, which moves by at most spread_k
        let dist_lo = v
            .iter()
            .zip(&spread)
            .map(|(x, s)| (roundoff(*x) - s).max(0.0).powi(2))
            .sum::<f64>()
            .sqrt();
        let componentwise = v
            .iter()
            .zip(&spread)
            .map(|(x, s)| (x.abs() + s).powi(2))
            .sum::<f64>()
            .sqrt();
        let ta_hi = (norm(&v) + self.op_norm * norm(half)).min(componentwise);
        let threshold_hi = (self.params.gamma * ta_hi).min(self.params.alpha);
        let slack = 1e-12 * (1.0 + threshold_hi);
        dist_lo >= threshold_hi + slack
    }

    fn violates(&self, t: &[f64]) -> bool {
        violation_condition(t, self.a, &self.params)
    }

    /// Given `lo` not violating and `hi` violating on one ray, returns a
    /// violating point within `eps` of a non-violating one.
    fn bisect_ray(&self, dir: &[f64], mut lo: f64, mut hi: f64, eps: f64) -> f64 {
        let at = |s: f64| -> Vec<f64> { dir.iter().map(|x| x * s).collect() };
        while hi - lo > eps {
            let mid = 0.5 * (lo + hi);
            if self.violates(&at(mid)) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }
}

/// Brackets `D_{gamma,alpha}(a)`. Certified for `d <= 3`; heuristic above.
pub fn compute_lcd(a: &WeightVector, params: &LcdParams) -> Result<LcdResult> {
    params.validate()?;
    let d = a.dim();
    if d > 3 {
        return heuristic_lcd(a, params, RngSeed(0));
    }
    let theta = params.theta_max_for(a);
    let cert = Certifier {
        a,
        params: *params,
        op_norm: a.operator_norm(),
    };
    // the condition is even in t, so the half-space t_1 >= 0 suffices
    let mut center = vec![0.0; d];
    let mut half = vec![theta; d];
    center[0] = 0.5 * theta;
    half[0] = 0.5 * theta;
    let mut heap = BinaryHeap::new();
    heap.push(Cell {
        min_norm: box_min_norm(&center, &half),
        center,
        half,
    });
    let min_width = params.tol * 1e-3;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut boxes = 0usize;
    let mut d_lower = theta;
    let mut stalled = false;
    while let Some(cell) = heap.pop() {
        boxes += 1;
        let upper = best.as_ref().map_or(f64::INFINITY, |b| b.0);
        if cell.min_norm >= upper - params.tol || cell.min_norm > theta {
            d_lower = cell.min_norm.min(upper).min(theta);
            break;
        }
        if boxes > MAX_BOXES || cell.half.iter().all(|&h| h < min_width) {
            d_lower = cell.min_norm;
            stalled = true;
            break;
        }
        if cert.box_is_safe(&cell.center, &cell.half) {
            continue;
        }
        let r = norm(&cell.center);
        if r > 0.0 && r <= theta && r < upper && cert.violates(&cell.center) {
            let dir: Vec<f64> = cell.center.iter().map(|x| x / r).collect();
            let lo = cell.min_norm;
            let lo_point: Vec<f64> = dir.iter().map(|x| x * lo).collect();
            let hit = if lo > 0.0 && cert.violates(&lo_point) {
                lo
            } else {
                cert.bisect_ray(&dir, lo, r, 0.1 * params.tol)
            };
            if hit < upper {
                best = Some((hit, dir.iter().map(|x| x * hit).collect()));
            }
        }
        // split the longest side
        let j = (0..d)
            .max_by(|&x, &y| cell.half[x].total_cmp(&cell.half[y]).then(y.cmp(&x)))
            .expect("d >= 1");
        for sign in [-1.0, 1.0] {
            let mut c = cell.center.clone();
            let mut h = cell.half.clone();
            h[j] *= 0.5;
            c[j] += sign * h[j];
            let mn = box_min_norm(&c, &h);
            if mn <= theta {
                heap.push(Cell {
                    min_norm: mn,
                    center: c,
                    half: h,
                });
            }
        }
        if heap.is_empty() {
            d_lower = best.as_ref().map_or(theta, |b| b.0.min(theta));
        }
    }
    let ceiling_reached = best.is_none();
    if ceiling_reached && !stalled {
        d_lower = theta;
    }
    let (d_upper, witness_t) = match best {
        Some((u, t)) => (Some(u), Some(t)),
        None => (None, None),
    };
    Ok(LcdResult {
        d_lower: d_lower.min(d_upper.unwrap_or(f64::INFINITY)),
        d_upper,
        witness_t,
        certified: true,
        ceiling_reached,
        theta_max: theta,
        boxes,
    })
}

/// Number of random directions tried by the heuristic search.
pub const HEURISTIC_DIRECTIONS: usize = 512;
/// Radial grid points per direction in the heuristic search.
pub const HEURISTIC_STEPS: usize = 4096;

/// Multi-start radial scan for any `d`. Only `d_lower = 1 / (2 max ||a_k||)`
/// is certified: below it every `|<t, a_k>| < 1/2`, where the condition fails.
pub fn heuristic_lcd(a: &WeightVector, params: &LcdParams, seed: RngSeed) -> Result<LcdResult> {
    params.validate()?;
    let d = a.dim();
    if d == 0 {
        return Err(invalid("LCD: empty dimension"));
    }
    let theta = params.theta_max_for(a);
    let safe = (0.5 / a.max_row_norm()).min(theta);
    let cert = Certifier {
        a,
        params: *params,
        op_norm: a.operator_norm(),
    };
    let mut dirs: Vec<Vec<f64>> = a
        .rows()
        .filter(|r| norm(r) > 0.0)
        .map(|r| {
            let n = norm(r);
            r.iter().map(|x| x / n).collect()
        })
        .collect();
    let mut rng = seed.rng();
    for _ in 0..HEURISTIC_DIRECTIONS {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            dirs.push(v.iter().map(|x| x / n).collect());
        }
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    let step = (theta - safe) / HEURISTIC_STEPS as f64;
    for dir in &dirs {
        let limit = best.as_ref().map_or(theta, |b| b.0);
        let mut prev = safe;
        for i in 1..=HEURISTIC_STEPS {
            let s = safe + step * i as f64;
            if s >= limit {
                break;
            }
            let t: Vec<f64> = dir.iter().map(|x| x * s).collect();
            if cert.violates(&t) {
                let hit = cert.bisect_ray(dir, prev, s, 0.1 * params.tol);
                best = Some((hit, dir.iter().map(|x| x * hit).collect()));
                break;
            }
            prev = s;
        }
    }
    let ceiling_reached = best.is_none();
    let (d_upper, witness_t) = match best {
        Some((u, t)) => (Some(u), Some(t)),
        None => (None, None),
    };
    Ok(LcdResult {
        d_lower: safe.min(d_upper.unwrap_or(f64::INFINITY)),
        d_upper,
        witness_t,
        certified: false,
        ceiling_reached,
        theta_max: theta,
        boxes: 0,
    })
}

/// Smallest `||t||` on the grid `t = i step u`, `0 < i step <= upto`, that
/// violates the condition, over the given directions `u` (normalized here).
/// This is the independent oracle for [`compute_lcd`]: it cannot certify
/// anything but finds every violation interval wider than `step` on each ray.
pub fn grid_scan(
    a: &WeightVector,
    params: &LcdParams,
    step: f64,
    upto: f64,
    directions: &[Vec<f64>],
) -> Result<Option<f64>> {
    if !(step > 0.0 && upto > 0.0) {
        return Err(domain("grid scan: step and range must be positive"));
    }
    let steps = (upto / step).ceil() as usize;
    let mut best: Option<f64> = None;
    for dir in directions {
        if dir.len() != a.dim() {
            return Err(invalid("grid scan: direction dimension mismatch"));
        }
        let len = norm(dir);
        if len == 0.0 {
            continue;
        }
        let u: Vec<f64> = dir.iter().map(|x| x / len).collect();
        let limit = best.map_or(steps, |b| ((b / step).ceil() as usize).min(steps));
        let mut t = vec![0.0; u.len()];
        for i in 1..=limit {
            let r = i as f64 * step;
            for (tj, uj) in t.iter_mut().zip(&u) {
                *tj = r * uj;
            }
            if violation_condition(&t, a, params) {
                if best.is_none_or(|b| r < b) {
                    best = Some(r);
                }
                break;
            }
        }
    }
    Ok(best)
}

/// Coordinate axes, the directions of the rows of `a`, and `extra` random
/// unit directions.
pub fn scan_directions(a: &WeightVector, extra: usize, seed: RngSeed) -> Vec<Vec<f64>> {
    let d = a.dim();
    let mut dirs: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..d).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    if d > 1 {
        dirs.extend(a.rows().map(<[f64]>::to_vec));
    }
    let mut rng = seed.rng();
    for _ in 0..extra {
        dirs.push((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect());
    }
    dirs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ones(n: usize) -> WeightVector {
        WeightVector::from_scalars(&vec![1.0; n]).unwrap()
    }

    fn grid_first_violation(a: &WeightVector, p: &LcdParams, step: f64, upto: f64) -> Option<f64> {
        grid_scan(a, p, step, upto, &[vec![1.0]]).unwrap()
    }

    #[test]
    fn dot_product_examples() {
        let a = WeightVector::from_scalars(&[1.0, 3.0, -1.0]).unwrap();
        assert_eq!(dot_product_vector(&[2.0], &a), vec![2.0, 6.0, -2.0]);
        assert_eq!(dot_product_vector(&[0.0], &a), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn lattice_distance_examples() {
        assert_eq!(dist_to_lattice(&[3.0, -2.0]), 0.0);
        assert_eq!(dist_to_lattice(&[0.5, 0.5]), 0.5f64.sqrt());
        assert!((dist_to_lattice(&[0.3, 1.9, -2.2]) - 0.14f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn violation_examples() {
        let p = LcdParams::new(0.5, 10.0).unwrap();
        let a = ones(9);
        assert!(!violation_condition(&[0.0], &a, &p));
        assert!(violation_condition(&[1.0], &a, &p));
        let p9 = LcdParams::new(0.9, 10.0).unwrap();
        assert!(!violation_condition(&[0.3], &a, &p9));
    }

    #[test]
    fn matrix_examples() {
        let (m, det) = matrix_a(&WeightVector::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        assert_eq!(m, DMatrix::identity(2, 2));
        assert_eq!(det, 1.0);
        let (m, _) = matrix_a(&WeightVector::from_scalars(&[1.0, 2.0, 3.0]).unwrap());
        assert_eq!(m[(0, 0)], 14.0);
    }

    #[test]
    fn all_ones_gamma_branch() {
        let a = ones(4);
        let p = LcdParams::new(0.5, 10.0).unwrap();
        let r = compute_lcd(&a, &p).unwrap();
        let d = 2.0 / 3.0;
        assert!(
            r.d_lower <= d + 1e-12 && d <= r.d_upper.unwrap() + 1e-12,
            "{r:?}"
        );
        assert!(r.gap() <= p.tol);
        let w = r.witness_t.unwrap();
        assert!(violation_condition(&w, &a, &p));
        let g = grid_first_violation(&a, &p, 1e-5, 2.0).unwrap();
        assert!((g - d).abs() <= 1e-5 + 1e-12);
    }

    #[test]
    fn all_ones_alpha_branch() {
        let a = ones(4);
        let p = LcdParams::new(0.5, 0.02).unwrap();
        let r = compute_lcd(&a, &p).unwrap();
        assert!(
            r.d_lower <= 0.99 + 1e-12 && 0.99 <= r.d_upper.unwrap() + 1e-12,
            "{r:?}"
        );
        assert!(r.gap() <= p.tol);
    }

    #[test]
    fn ceiling_without_violation() {
        // |t a_1| < 1/2 for every |t| <= 3, so nothing violates below the ceiling
        let a = WeightVector::from_scalars(&[1.0 / (2.0 * std::f64::consts::PI)]).unwrap();
        let p = LcdParams::new(0.5, 10.0)
            .unwrap()
            .with_theta_max(3.0)
            .unwrap();
        let r = compute_lcd(&a, &p).unwrap();
        assert!(r.ceiling_reached);
        assert_eq!(r.d_upper, None);
        assert_eq!(r.d_lower, 3.0);
    }

    #[test]
    fn two_dim_identity_rows() {
        // t . a = t, so the first violation is along an axis at 1/(1 + gamma)
        let a = WeightVector::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let p = LcdParams::new(0.5, 10.0).unwrap();
        let r = compute_lcd(&a, &p).unwrap();
        assert!(
            r.d_lower <= 2.0 / 3.0 + 1e-12 && 2.0 / 3.0 <= r.d_upper.unwrap() + 1e-12,
            "{r:?}"
        );
        assert!(r.gap() <= p.tol);
    }

    #[test]
    fn heuristic_mode_is_flagged() {
        let a = WeightVector::new(vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
        ])
        .unwrap();
        let p = LcdParams::new(0.5, 10.0).unwrap();
        let r = compute_lcd(&a, &p).unwrap();
        assert!(!r.certified);
        assert!(r.d_lower <= r.d_upper.unwrap());
        assert!(violation_condition(r.witness_t.as_ref().unwrap(), &a, &p));
    }

    #[test]
    fn rejects_bad_params() {
        assert!(LcdParams::new(1.0, 1.0).is_err());
        assert!(LcdParams::new(0.5, 0.0).is_err());
        assert!(LcdParams::new(0.5, 1.0).unwrap().with_tol(0.0).is_err());
    }
}
