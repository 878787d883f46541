//! Finitely supported distributions and measures, symmetrization, the scalar
//! functionals `p`, `M` and `lambda_d`, characteristic functions, and compound
//! Poisson laws `e(alpha W)`.
//!
//! Every atom set is deduplicated on construction: atoms closer than
//! [`ATOM_TOL`] in the max norm are merged and their weights added. Merging
//! is sign-symmetric, so the symmetrization of any distribution is exactly
//! invariant under `z -> -z`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::Complex;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::rng::RngSeed;
use crate::weights::WeightVector;

/// Max-norm distance under which two atoms are considered equal.
pub const ATOM_TOL: f64 = 1e-12;

/// Allowed deviation of a probability distribution's total mass from 1.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Poisson intensities up to this value are sampled by inversion.
pub const POISSON_INVERSION_MAX: f64 = 30.0;

/// A finitely supported measure on `R^d`.
///
/// `normalized` marks a probability distribution; otherwise the value is a
/// finite (sub-)measure whose total mass is used as is.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionJson", into = "DistributionJson")]
pub struct DiscreteDistribution {
    dim: usize,
    atoms: Vec<f64>,
    weights: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct DistributionJson {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
    #[serde(default = "default_true")]
    normalized: bool,
}

fn default_true() -> bool {
    true
}

impl TryFrom<DistributionJson> for DiscreteDistribution {
    type Error = Error;

    fn try_from(j: DistributionJson) -> Result<Self> {
        DiscreteDistribution::new(j.atoms, j.weights, j.normalized)
    }
}

impl From<DiscreteDistribution> for DistributionJson {
    fn from(d: DiscreteDistribution) -> Self {
        DistributionJson {
            atoms: d.atoms().map(<[f64]>::to_vec).collect(),
            weights: d.weights,
            normalized: d.normalized,
        }
    }
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Vec<f64>>, weights: Vec<f64>, normalized: bool) -> Result<Self> {
        let dim = atoms
            .first()
            .map(Vec::len)
            .ok_or_else(|| invalid("distribution: at least one atom is required"))?;
        if atoms.iter().any(|a| a.len() != dim) {
            return Err(invalid("distribution: atoms have inconsistent dimensions"));
        }
        let flat = atoms.into_iter().flatten().collect();
        Self::from_flat(dim, flat, weights, normalized)
    }

    pub fn from_flat(
        dim: usize,
        atoms: Vec<f64>,
        weights: Vec<f64>,
        normalized: bool,
    ) -> Result<Self> {
        Self::with_tolerance(dim, atoms, weights, normalized, ATOM_TOL)
    }

    /// Builds a measure, merging atoms within `tol` of each other.
    pub fn with_tolerance(
        dim: usize,
        atoms: Vec<f64>,
        weights: Vec<f64>,
        normalized: bool,
        tol: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("distribution: dimension must be >= 1"));
        }
        if atoms.len() != weights.len() * dim || weights.is_empty() {
            return Err(invalid(format!(
                "distribution: {} weights do not match {} atom coordinates in dimension {dim}",
                weights.len(),
                atoms.len()
            )));
        }
        if atoms.iter().any(|x| !x.is_finite()) {
            return Err(invalid("distribution: atoms must be finite"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(invalid(
                "distribution: weights must be finite and nonnegative",
            ));
        }
        let total: f64 = weights.iter().sum();
        if normalized && (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(invalid(format!(
                "distribution: weights sum to {total}, expected 1 for a probability distribution"
            )));
        }
        let (atoms, weights) = merge_atoms(dim, &atoms, &weights, tol);
        Ok(Self {
            dim,
            atoms,
            weights,
            normalized,
        })
    }

    /// The point mass `E_y`.
    pub fn point_mass(y: &[f64]) -> Self {
        Self {
            dim: y.len().max(1),
            atoms: if y.is_empty() { vec![0.0] } else { y.to_vec() },
            weights: vec![1.0],
            normalized: true,
        }
    }

    pub fn rademacher() -> Self {
        Self::uniform(&[-1.0, 1.0]).expect("two distinct atoms")
    }

    /// Uniform law on the given (distinct) scalar values.
    pub fn uniform(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("uniform: empty support"));
        }
        let w = 1.0 / values.len() as f64;
        let weights = vec![w; values.len()];
        // 1/k summed k times can drift from 1 by a few ulps; renormalize exactly.
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|x| x / total).collect();
        Self::from_flat(1, values.to_vec(), weights, true)
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(domain(format!("bernoulli: p = {p} is not in [0, 1]")));
        }
        Self::from_flat(1, vec![0.0, 1.0], vec![1.0 - p, p], true)
    }

    /// Parses the shorthands `rademacher`, `uniform{v1,v2,...}` and `bernoulli(p)`.
    pub fn from_shorthand(name: &str) -> Result<Self> {
        let s = name.trim();
        if s.eq_ignore_ascii_case("rademacher") {
            return Ok(Self::rademacher());
        }
        if let Some(body) = s.strip_prefix("uniform{").and_then(|r| r.strip_suffix('}')) {
            let values = body
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| invalid(format!("distribution: bad value {v:?} in {s:?}")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Self::uniform(&values);
        }
        if let Some(body) = s
            .strip_prefix("bernoulli(")
            .and_then(|r| r.strip_suffix(')'))
        {
            let p = body
                .trim()
                .parse::<f64>()
                .map_err(|_| invalid(format!("distribution: bad probability in {s:?}")))?;
            return Self::bernoulli(p);
        }
        Err(invalid(format!("distribution: unknown shorthand {s:?}")))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn atom(&self, i: usize) -> &[f64] {
        &self.atoms[i * self.dim..(i + 1) * self.dim]
    }

    pub fn atoms(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.atoms.chunks_exact(self.dim)
    }

    pub fn flat_atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.atoms().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// True when the atom set and weights are fixed by `z -> -z`.
    pub fn is_symmetric(&self) -> bool {
        let neg = self.negated();
        neg.atoms == self.atoms && neg.weights == self.weights
    }

    pub fn negated(&self) -> Self {
        let atoms: Vec<f64> = self.atoms.iter().map(|x| -x).collect();
        let (atoms, weights) = merge_atoms(self.dim, &atoms, &self.weights, 0.0);
        Self {
            dim: self.dim,
            atoms,
            weights,
            normalized: self.normalized,
        }
    }

    /// Scalar diameter of the support (max-norm, per coordinate maximum spread).
    pub fn support_spread(&self) -> f64 {
        (0..self.dim)
            .map(|j| {
                let (lo, hi) = self
                    .atoms()
                    .map(|a| a[j])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| {
                        (l.min(x), h.max(x))
                    });
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// Largest max-norm of an atom.
    pub fn max_abs_atom(&self) -> f64 {
        self.atoms.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub(crate) fn sampler(&self) -> Result<WeightedIndex<f64>> {
        WeightedIndex::new(&self.weights)
            .map_err(|e| domain(format!("distribution cannot be sampled: {e}")))
    }
}

fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Key used to pick a cluster representative: smallest absolute values first,
/// positive sign on ties, so a cluster and its mirror image pick mirrored
/// representatives.
fn representative_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.abs().total_cmp(&y.abs()) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    lex_cmp(b, a)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Merges atoms within `tol` (max norm, transitively) and returns atoms sorted
/// lexicographically with summed weights. Weights inside a cluster are summed
/// in sorted order so mirrored clusters get bit-identical masses.
pub(crate) fn merge_atoms(
    dim: usize,
    atoms: &[f64],
    weights: &[f64],
    tol: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = weights.len();
    let at = |i: usize| &atoms[i * dim..(i + 1) * dim];
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| lex_cmp(at(i), at(j)));

    // runs of identical atoms collapse first, which keeps large samples on a
    // few lattice points linear
    let mut runs: Vec<Vec<usize>> = Vec::new();
    for &i in &order {
        match runs.last_mut() {
            Some(run) if lex_cmp(at(run[0]), at(i)).is_eq() => run.push(i),
            _ => runs.push(vec![i]),
        }
    }
    let head = |u: usize| at(runs[u][0]);

    let mut parent: Vec<usize> = (0..runs.len()).collect();
    for u in 0..runs.len() {
        for v in u + 1..runs.len() {
            if head(v)[0] - head(u)[0] > tol {
                break;
            }
            if max_norm_dist(head(u), head(v)) <= tol {
                let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
                if ru != rv {
                    parent[ru.max(rv)] = ru.min(rv);
                }
            }
        }
    }

    let mut clusters: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (u, run) in runs.iter().enumerate() {
        let r = find(&mut parent, u);
        clusters.entry(r).or_default().extend_from_slice(run);
    }

    let mut merged: Vec<(usize, f64)> = clusters
        .into_values()
        .map(|members| {
            let rep = *members
                .iter()
                .min_by(|&&i, &&j| representative_cmp(at(i), at(j)))
                .expect("nonempty cluster");
            let mut ws: Vec<f64> = members.iter().map(|&i| weights[i]).collect();
            ws.sort_by(f64::total_cmp);
            (rep, ws.iter().sum())
        })
        .collect();
    merged.sort_by(|a, b| lex_cmp(at(a.0), at(b.0)));

    let mut out_atoms = Vec::with_capacity(merged.len() * dim);
    let mut out_weights = Vec::with_capacity(merged.len());
    for (rep, w) in merged {
        out_atoms.extend_from_slice(at(rep));
        out_weights.push(w);
    }
    (out_atoms, out_weights)
}

/// Law of `X_1 - X_2` for independent copies `X_1, X_2 ~ F`.
pub fn symmetrize(f: &DiscreteDistribution) -> DiscreteDistribution {
    let d = f.dim;
    let k = f.len();
    let mut atoms = Vec::with_capacity(k * k * d);
    let mut weights = Vec::with_capacity(k * k);
    for (x, wx) in f.iter() {
        for (y, wy) in f.iter() {
            atoms.extend(x.iter().zip(y).map(|(a, b)| a - b));
            weights.push(wx * wy);
        }
    }
    let (atoms, weights) = merge_atoms(d, &atoms, &weights, ATOM_TOL);
    DiscreteDistribution {
        dim: d,
        atoms,
        weights,
        normalized: f.normalized,
    }
}

fn max_norm(z: &[f64]) -> f64 {
    z.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `p(delta) = G{ z : |z| > delta }` with `|.|` the max norm.
pub fn tail_mass_p(g: &DiscreteDistribution, delta: f64) -> f64 {
    g.iter()
        .filter(|(z, _)| max_norm(z) > delta)
        .map(|(_, w)| w)
        .sum()
}

/// `M(tau) = E min{ |X~|^2 / tau^2, 1 }`.
pub fn truncated_second_moment(g: &DiscreteDistribution, tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(domain(format!("M(tau): tau must be positive, got {tau}")));
    }
    Ok(g.iter()
        .map(|(z, w)| {
            let r = max_norm(z) / tau;
            w * (r * r).min(1.0)
        })
        .sum())
}

/// `lambda_d(ratio) = sum_z G{z} (1 + floor(ratio / |z|))^{-d}`; the atom at
/// zero contributes nothing.
pub fn lambda_d(g: &DiscreteDistribution, ratio: f64, d: u32) -> Result<f64> {
    if !(ratio > 0.0) {
        return Err(domain(format!(
            "lambda_d: ratio must be positive, got {ratio}"
        )));
    }
    if d == 0 {
        return Err(domain("lambda_d: d must be >= 1"));
    }
    Ok(g.iter()
        .map(|(z, w)| {
            let r = max_norm(z);
            if r == 0.0 {
                0.0
            } else if r > ratio {
                w
            } else {
                let k = 1.0 + (ratio / r).floor();
                w * k.powi(-(d as i32))
            }
        })
        .sum())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `F^(t) = sum_j w_j exp(i <t, x_j>)`.
pub fn char_fn(f: &DiscreteDistribution, t: &[f64]) -> Complex<f64> {
    let (re, im) = f.iter().fold((0.0, 0.0), |(re, im), (x, w)| {
        let (s, c) = dot(t, x).sin_cos();
        (re + w * c, im + w * s)
    });
    Complex::new(re, im)
}

/// Compound Poisson law `e(alpha W) = e^{-alpha} sum_k alpha^k W^k / k!`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundPoisson {
    intensity: f64,
    base: DiscreteDistribution,
}

impl CompoundPoisson {
    pub fn new(intensity: f64, base: DiscreteDistribution) -> Result<Self> {
        if !(intensity >= 0.0) || !intensity.is_finite() {
            return Err(domain(format!(
                "compound Poisson: intensity {intensity} must be >= 0"
            )));
        }
        if !base.is_normalized() {
            return Err(domain(
                "compound Poisson: base must be a probability distribution",
            ));
        }
        Ok(Self { intensity, base })
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    pub fn base(&self) -> &DiscreteDistribution {
        &self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// `D^lambda = e(alpha lambda W)`.
    pub fn power(&self, lambda: f64) -> Result<Self> {
        Self::new(self.intensity * lambda, self.base.clone())
    }

    pub fn char_fn(&self, t: &[f64]) -> Complex<f64> {
        cp_char_fn(self, t)
    }
}

/// `exp(alpha (W^(t) - 1))`.
pub fn cp_char_fn(d: &CompoundPoisson, t: &[f64]) -> Complex<f64> {
    let w = char_fn(&d.base, t);
    let modulus = (d.intensity * (w.re - 1.0)).exp();
    let (s, c) = (d.intensity * w.im).sin_cos();
    Complex::new(modulus * c, modulus * s)
}

/// A batch of points in `R^d`, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    pub dim: usize,
    pub coords: Vec<f64>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }
}

/// Draws `n_samples` independent copies of `sum_{j <= N} Y_j` with
/// `N ~ Poisson(alpha)` and `Y_j ~ W`.
pub fn cp_sample(d: &CompoundPoisson, n_samples: usize, seed: RngSeed) -> Result<PointCloud> {
    let mut rng = seed.rng();
    cp_sample_with(d, n_samples, &mut rng)
}

pub(crate) fn cp_sample_with(
    d: &CompoundPoisson,
    n_samples: usize,
    rng: &mut ChaCha8Rng,
) -> Result<PointCloud> {
    let dim = d.dim();
    let picker = d.base.sampler()?;
    let mut coords = vec![0.0; n_samples * dim];
    for out in coords.chunks_exact_mut(dim) {
        let count = poisson(rng, d.intensity);
        for _ in 0..count {
            let atom = d.base.atom(picker.sample(rng));
            for (o, x) in out.iter_mut().zip(atom) {
                *o += x;
            }
        }
    }
    Ok(PointCloud { dim, coords })
}

/// `ln(k!)`.
fn ln_factorial(k: u64) -> f64 {
    if k < 16 {
        return (2..=k).map(|i| (i as f64).ln()).sum();
    }
    let x = k as f64;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    x * x.ln() - x
        + 0.5 * (2.0 * PI * x).ln()
        + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
}

/// Poisson variate: sequential inversion for small means, Hörmann's
/// transformed rejection (PTRS) above [`POISSON_INVERSION_MAX`].
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    if lambda <= POISSON_INVERSION_MAX {
        let u: f64 = rng.gen();
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut k = 0u64;
        while u > cdf {
            k += 1;
            p *= lambda / k as f64;
            cdf += p;
            // the remaining tail is below double precision
            if p == 0.0 && cdf < u {
                break;
            }
        }
        return k;
    }
    let slam = lambda.sqrt();
    let loglam = lambda.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let v: f64 = rng.gen();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -lambda + k * loglam - ln_factorial(k as u64);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// `M* = (1/2n) sum_k (E_{a_k} + E_{-a_k})`.
pub fn spectral_measure(a: &WeightVector) -> DiscreteDistribution {
    spectral_measure_from_rows(a.dim(), a.as_flat()).expect("weight vectors are nonempty")
}

/// [`spectral_measure`] for raw row-major coefficients, which may all vanish.
pub fn spectral_measure_from_rows(dim: usize, rows: &[f64]) -> Result<DiscreteDistribution> {
    if dim == 0 || rows.is_empty() || !rows.len().is_multiple_of(dim) {
        return Err(domain("M*: the coefficient list is empty"));
    }
    let n = rows.len() / dim;
    let w = 1.0 / (2 * n) as f64;
    let mut atoms = Vec::with_capacity(2 * rows.len());
    for row in rows.chunks_exact(dim) {
        atoms.extend_from_slice(row);
        atoms.extend(row.iter().map(|x| -x));
    }
    let (atoms, weights) = merge_atoms(dim, &atoms, &vec![w; 2 * n], ATOM_TOL);
    // 2n copies of 1/(2n) may not sum to exactly one; the flag is what counts.
    Ok(DiscreteDistribution {
        dim,
        atoms,
        weights,
        normalized: true,
    })
}

/// The sub-probability measure `M = (1/2n) sum_k E_{a_k}` (mass 1/2).
pub fn half_spectral_measure(a: &WeightVector) -> DiscreteDistribution {
    let n = a.n();
    let w = 1.0 / (2 * n) as f64;
    let (atoms, weights) = merge_atoms(a.dim(), a.as_flat(), &vec![w; n], ATOM_TOL);
    DiscreteDistribution {
        dim: a.dim(),
        atoms,
        weights,
        normalized: false,
    }
}

/// `H^b = e((n b / 2) M*)`.
pub fn h_power(a: &WeightVector, b: f64) -> Result<CompoundPoisson> {
    if !(b >= 0.0) {
        return Err(domain(format!("H^b: exponent b = {b} must be >= 0")));
    }
    CompoundPoisson::new(a.n() as f64 * b / 2.0, spectral_measure(a))
}

/// `H^(t) = exp(-(1/2) sum_k (1 - cos <t, a_k>))`, evaluated directly.
pub fn h_char_fn(a: &WeightVector, t: &[f64]) -> f64 {
    let s: f64 = a.rows().map(|row| 1.0 - dot(t, row).cos()).sum();
    (-0.5 * s).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist1(atoms: &[f64], weights: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::from_flat(1, atoms.to_vec(), weights.to_vec(), true).unwrap()
    }

    #[test]
    fn construction_merges_close_atoms() {
        let d = DiscreteDistribution::from_flat(
            1,
            vec![1.0, 1.0 + 1e-14, 2.0],
            vec![0.25, 0.25, 0.5],
            true,
        )
        .unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.weights(), &[0.5, 0.5]);
    }

    #[test]
    fn construction_rejects_bad_mass() {
        assert!(DiscreteDistribution::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.4], true).is_err());
        assert!(DiscreteDistribution::from_flat(1, vec![0.0, 1.0], vec![0.5, 0.4], false).is_ok());
        assert!(DiscreteDistribution::from_flat(1, vec![0.0], vec![-1.0], false).is_err());
        assert!(DiscreteDistribution::from_flat(1, vec![0.0, 1.0], vec![1.0], true).is_err());
    }

    #[test]
    fn shorthands() {
        assert_eq!(
            DiscreteDistribution::from_shorthand("rademacher")
                .unwrap()
                .len(),
            2
        );
        let u = DiscreteDistribution::from_shorthand("uniform{-1,0,1}").unwrap();
        assert_eq!(u.flat_atoms(), &[-1.0, 0.0, 1.0]);
        let b = DiscreteDistribution::from_shorthand("bernoulli(0.25)").unwrap();
        assert_eq!(b.weights(), &[0.75, 0.25]);
        assert!(DiscreteDistribution::from_shorthand("gauss").is_err());
        assert!(DiscreteDistribution::from_shorthand("bernoulli(2)").is_err());
    }

    #[test]
    fn json_form_round_trips() {
        let text = r#"{"atoms": [[0.0],[1.0]], "weights": [0.5, 0.5], "normalized": true}"#;
        let d: DiscreteDistribution = serde_json::from_str(text).unwrap();
        let back: DiscreteDistribution =
            serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn symmetrize_rademacher() {
        let g = symmetrize(&DiscreteDistribution::rademacher());
        assert_eq!(g.flat_atoms(), &[-2.0, 0.0, 2.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn symmetrize_point_mass() {
        let g = symmetrize(&DiscreteDistribution::point_mass(&[3.5]));
        assert_eq!(g.flat_atoms(), &[0.0]);
        assert_eq!(g.weights(), &[1.0]);
    }

    #[test]
    fn symmetrize_three_atoms_matches_pair_enumeration() {
        let f = dist1(&[0.0, 1.0, 3.0], &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
        // Oracle: all 9 ordered pairs with weight 1/9 each.
        let mut oracle: BTreeMap<i64, f64> = BTreeMap::new();
        for x in [0i64, 1, 3] {
            for y in [0i64, 1, 3] {
                *oracle.entry(x - y).or_default() += 1.0 / 9.0;
            }
        }
        let g = symmetrize(&f);
        assert_eq!(g.len(), oracle.len());
        for ((z, w), (oz, ow)) in g.iter().zip(oracle) {
            assert_eq!(z[0], oz as f64);
            assert!((w - ow).abs() < 1e-15);
        }
        assert!(g.is_symmetric());
    }

    #[test]
    fn tail_mass_examples() {
        let g = symmetrize(&DiscreteDistribution::rademacher());
        assert_eq!(tail_mass_p(&g, 1.0), 0.5);
        assert_eq!(tail_mass_p(&g, 3.0), 0.0);
        let g3 = symmetrize(&dist1(&[0.0, 1.0, 3.0], &[1.0 / 3.0; 3]));
        // |z| in {2, 3}: pairs (3,1),(1,3),(3,0),(0,3) -> 4/9
        assert!((tail_mass_p(&g3, 1.5) - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn truncated_moment_examples() {
        let g = symmetrize(&DiscreteDistribution::rademacher());
        assert_eq!(truncated_second_moment(&g, 2.0).unwrap(), 0.5);
        assert_eq!(truncated_second_moment(&g, 4.0).unwrap(), 0.125);
        let e0 = DiscreteDistribution::point_mass(&[0.0]);
        assert_eq!(truncated_second_moment(&e0, 0.3).unwrap(), 0.0);
        assert!(truncated_second_moment(&g, 0.0).is_err());
    }

    #[test]
    fn lambda_examples() {
        let g = symmetrize(&DiscreteDistribution::rademacher());
        assert_eq!(lambda_d(&g, 1.0, 1).unwrap(), 0.5);
        assert!((lambda_d(&g, 4.0, 1).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let e0 = DiscreteDistribution::point_mass(&[0.0]);
        assert_eq!(lambda_d(&e0, 2.0, 3).unwrap(), 0.0);
        assert!(lambda_d(&g, 0.0, 1).is_err());
    }

    #[test]
    fn char_fn_examples() {
        let e0 = DiscreteDistribution::point_mass(&[0.0]);
        assert_eq!(char_fn(&e0, &[1.7]), Complex::new(1.0, 0.0));
        let r = char_fn(&DiscreteDistribution::rademacher(), &[PI]);
        assert!((r.re + 1.0).abs() < 1e-15 && r.im.abs() < 1e-15);
        let g = dist1(&[-2.0, 0.0, 2.0], &[0.25, 0.5, 0.25]);
        let direct = 0.25 * (-1.4f64).cos() + 0.5 + 0.25 * 1.4f64.cos();
        let v = char_fn(&g, &[0.7]);
        assert!((v.re - 0.7f64.cos().powi(2)).abs() < 1e-15);
        assert!((v.re - direct).abs() < 1e-15);
    }

    #[test]
    fn cp_char_fn_matches_h_formula() {
        let a = WeightVector::from_scalars(&[1.3]).unwrap();
        let h = h_power(&a, 1.0).unwrap();
        for t in [0.0, 0.4, 1.1, 2.9, -5.0] {
            let v = cp_char_fn(&h, &[t]);
            let direct = (-(1.0 - (t * 1.3).cos()) / 2.0).exp();
            assert!((v.re - direct).abs() < 1e-14);
            assert!((v.re - h_char_fn(&a, &[t])).abs() < 1e-14);
            assert!(v.im.abs() < 1e-15);
        }
        let zero = CompoundPoisson::new(0.0, DiscreteDistribution::rademacher()).unwrap();
        assert_eq!(cp_char_fn(&zero, &[3.0]), Complex::new(1.0, 0.0));
        let v = cp_char_fn(&h, &[0.0]);
        assert_eq!(v, Complex::new(1.0, 0.0));
    }

    #[test]
    fn cp_sample_zero_intensity() {
        let d = CompoundPoisson::new(0.0, DiscreteDistribution::rademacher()).unwrap();
        let s = cp_sample(&d, 100, RngSeed(1)).unwrap();
        assert!(s.coords.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cp_sample_poisson_mean() {
        let d = CompoundPoisson::new(5.0, DiscreteDistribution::point_mass(&[1.0])).unwrap();
        let n = 100_000;
        let s = cp_sample(&d, n, RngSeed(11)).unwrap();
        let mean = s.coords.iter().sum::<f64>() / n as f64;
        let se = (5.0 / n as f64).sqrt();
        assert!((mean - 5.0).abs() < 4.0 * se, "mean {mean}");
    }

    #[test]
    fn cp_sample_is_deterministic() {
        let d = CompoundPoisson::new(3.0, DiscreteDistribution::rademacher()).unwrap();
        let a = cp_sample(&d, 500, RngSeed(42)).unwrap();
        let b = cp_sample(&d, 500, RngSeed(42)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejection_branch_moments() {
        let mut rng = RngSeed(5).rng();
        let lambda = 80.0;
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| poisson(&mut rng, lambda) as f64).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - lambda).abs() < 4.0 * (lambda / n as f64).sqrt());
        assert!((var / lambda - 1.0).abs() < 0.03);
    }

    #[test]
    fn ln_factorial_matches_direct_sum() {
        for k in [16u64, 20, 50, 200] {
            let direct: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
            assert!((ln_factorial(k) - direct).abs() < 1e-10 * direct);
        }
    }

    #[test]
    fn spectral_measure_examples() {
        let m = spectral_measure(&WeightVector::from_scalars(&[1.0, 1.0]).unwrap());
        assert_eq!(m.flat_atoms(), &[-1.0, 1.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        let m = spectral_measure(&WeightVector::from_scalars(&[1.0, 2.0]).unwrap());
        assert_eq!(m.flat_atoms(), &[-2.0, -1.0, 1.0, 2.0]);
        assert_eq!(m.weights(), &[0.25; 4]);
        let half = half_spectral_measure(&WeightVector::from_scalars(&[1.0, 2.0]).unwrap());
        assert_eq!(half.total_mass(), 0.5);
        assert!(!half.is_normalized());
    }

    #[test]
    fn zero_coefficients_give_point_mass_at_origin() {
        let m = spectral_measure_from_rows(1, &[0.0]).unwrap();
        assert_eq!(m.flat_atoms(), &[0.0]);
        assert_eq!(m.weights(), &[1.0]);
        assert!(spectral_measure_from_rows(1, &[]).is_err());
    }
}
