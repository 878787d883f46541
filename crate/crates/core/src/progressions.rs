//! Symmetric generalized arithmetic progressions (GAPs), their convex-body
//! counterparts (CGAPs), neighborhood coverage, and search upper bounds for
//! the approximation functionals `beta_{r,m}` and `gamma_{r,s}`.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::distributions::{merge_atoms, DiscreteDistribution};
use crate::error::{domain, invalid, Error, Result};

/// Default cap on the number of box points enumerated for one image.
pub const DEFAULT_GAP_BUDGET: usize = 10_000_000;

/// Image points closer than this (max norm) are identified.
pub const IMAGE_DEDUP_TOL: f64 = 1e-9;

/// Absolute slack for "distance <= delta" in neighborhoods and body membership.
pub const COVER_TOL: f64 = 1e-9;

/// Continued-fraction depth used when generating candidate generators.
pub const CF_DEPTH: usize = 12;

/// Default number of candidate images evaluated by [`beta_rm`] / [`gamma_rs`].
pub const DEFAULT_SEARCH_BUDGET: usize = 200_000;

/// A finite point set in `R^d`, sorted lexicographically with near-duplicates merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
}

impl PointSet {
    pub fn new(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(invalid("point set: buffer does not match the dimension"));
        }
        let ones = vec![1.0; coords.len() / dim];
        let (coords, _) = merge_atoms(dim, &coords, &ones, IMAGE_DEDUP_TOL);
        Ok(Self { dim, coords })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            coords: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

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

    pub fn as_flat(&self) -> &[f64] {
        &self.coords
    }

    /// Max-norm distance from `x` to the set.
    pub fn distance(&self, x: &[f64]) -> f64 {
        if self.dim == 1 {
            let v = x[0];
            let i = self.coords.partition_point(|&c| c < v);
            let mut best = f64::INFINITY;
            if i < self.coords.len() {
                best = best.min((self.coords[i] - v).abs());
            }
            if i > 0 {
                best = best.min((v - self.coords[i - 1]).abs());
            }
            return best;
        }
        self.points()
            .map(|p| {
                p.iter()
                    .zip(x)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance(x) <= COVER_TOL
    }

    pub fn is_symmetric(&self) -> bool {
        self.points().all(|p| {
            let neg: Vec<f64> = p.iter().map(|x| -x).collect();
            self.contains(&neg)
        })
    }
}

fn box_count(dims: &[f64]) -> u128 {
    dims.iter()
        .map(|l| 2 * l.floor().max(0.0) as u128 + 1)
        .fold(1u128, |acc, c| acc.saturating_mul(c))
}

/// Calls `visit` on every integer vector `m` with `|m_j| <= bounds[j]`.
fn for_each_box_point(bounds: &[i64], mut visit: impl FnMut(&[i64])) {
    let r = bounds.len();
    let mut m: Vec<i64> = bounds.iter().map(|b| -b).collect();
    loop {
        visit(&m);
        let mut k = 0;
        loop {
            if k == r {
                return;
            }
            m[k] += 1;
            if m[k] <= bounds[k] {
                break;
            }
            m[k] = -bounds[k];
            k += 1;
        }
    }
}

/// A symmetric GAP `(L, g, r)` with generators in `R^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GapJson", into = "GapJson")]
pub struct Gap {
    dims: Vec<f64>,
    dim: usize,
    gens: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GapJson {
    #[serde(rename = "L")]
    dims: Vec<f64>,
    g: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
}

impl TryFrom<GapJson> for Gap {
    type Error = Error;

    fn try_from(j: GapJson) -> Result<Self> {
        let dim = j.dim.or_else(|| j.g.first().map(Vec::len)).unwrap_or(1);
        Gap::new(j.dims, j.g, dim)
    }
}

impl From<Gap> for GapJson {
    fn from(p: Gap) -> Self {
        GapJson {
            g: p.gens().map(<[f64]>::to_vec).collect(),
            dim: p.dims.is_empty().then_some(p.dim),
            dims: p.dims,
        }
    }
}

impl Gap {
    pub fn new(dims: Vec<f64>, gens: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if dims.len() != gens.len() {
            return Err(invalid(format!(
                "GAP: {} dimensions but {} generators",
                dims.len(),
                gens.len()
            )));
        }
        if dim == 0 {
            return Err(invalid("GAP: ambient dimension must be >= 1"));
        }
        if dims.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(domain("GAP: dimensions L_j must be finite and >= 0"));
        }
        let mut flat = Vec::with_capacity(gens.len() * dim);
        for g in &gens {
            if g.len() != dim {
                return Err(invalid("GAP: generators must share one dimension"));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(invalid("GAP: generators must be finite"));
            }
            flat.extend_from_slice(g);
        }
        Ok(Self {
            dims,
            dim,
            gens: flat,
        })
    }

    /// Rank-`r` GAP in `R^1`.
    pub fn scalar(dims: Vec<f64>, gens: &[f64]) -> Result<Self> {
        Self::new(dims, gens.iter().map(|&g| vec![g]).collect(), 1)
    }

    /// The rank-0 GAP whose image is `{0}`.
    pub fn trivial(dim: usize) -> Self {
        Self {
            dims: Vec::new(),
            dim,
            gens: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> &[f64] {
        &self.dims
    }

    pub fn gen(&self, j: usize) -> &[f64] {
        &self.gens[j * self.dim..(j + 1) * self.dim]
    }

    pub fn gens(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.gens.chunks_exact(self.dim)
    }

    /// `prod_j (2 floor(L_j) + 1)`, the size of a proper GAP with these dimensions.
    pub fn box_size(&self) -> u128 {
        box_count(&self.dims)
    }
}

/// `Image(P)`, deduplicated.
pub fn gap_image(p: &Gap, budget: usize) -> Result<PointSet> {
    let needed = p.box_size();
    if needed > budget as u128 {
        return Err(Error::Capacity {
            what: "GAP image",
            needed,
            budget: budget as u128,
        });
    }
    let bounds: Vec<i64> = p.dims.iter().map(|l| l.floor() as i64).collect();
    let dim = p.dim;
    let mut coords = Vec::with_capacity(needed as usize * dim);
    for_each_box_point(&bounds, |m| {
        let start = coords.len();
        coords.resize(start + dim, 0.0);
        for (j, &mj) in m.iter().enumerate() {
            for (c, g) in coords[start..].iter_mut().zip(p.gen(j)) {
                *c += mj as f64 * g;
            }
        }
    });
    PointSet::new(dim, coords)
}

/// `|Image(P)| = prod_j (2 floor(L_j) + 1)`.
pub fn gap_is_proper(p: &Gap, budget: usize) -> Result<bool> {
    Ok(gap_image(p, budget)?.len() as u128 == p.box_size())
}

/// The dilate `P^t = (tL, g, r)`.
pub fn gap_dilate(p: &Gap, t: f64) -> Result<Gap> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(domain(format!("dilate: t = {t} must be positive")));
    }
    Ok(Gap {
        dims: p.dims.iter().map(|l| l * t).collect(),
        dim: p.dim,
        gens: p.gens.clone(),
    })
}

/// One symmetric slab `|<u, nu>| <= b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub u: Vec<f64>,
    pub b: f64,
}

/// A symmetric convex body in `R^r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Body {
    /// `|nu_j| <= b_j`.
    Box(Vec<f64>),
    /// Intersection of slabs `|<u_i, nu>| <= b_i`.
    Halfspaces(Vec<Halfspace>),
}

impl Body {
    pub fn rank(&self) -> usize {
        match self {
            Body::Box(b) => b.len(),
            Body::Halfspaces(hs) => hs.first().map_or(0, |h| h.u.len()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Body::Box(b) => {
                if b.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(domain("box body: half-widths must be finite and >= 0"));
                }
            }
            Body::Halfspaces(hs) => {
                let r = self.rank();
                if hs.iter().any(|h| h.u.len() != r) {
                    return Err(invalid("halfspace body: normals must share one dimension"));
                }
                if hs
                    .iter()
                    .any(|h| !(h.b.is_finite() && h.b >= 0.0) || h.u.iter().any(|x| !x.is_finite()))
                {
                    return Err(domain("halfspace body: entries must be finite with b >= 0"));
                }
                if r > 0 {
                    let m = DMatrix::from_fn(hs.len(), r, |i, j| hs[i].u[j]);
                    if m.rank(1e-12) < r {
                        return Err(domain(
                            "halfspace body: normals must span R^r (body unbounded)",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Body::Box(b) => x.iter().zip(b).all(|(v, b)| v.abs() <= b + COVER_TOL),
            Body::Halfspaces(hs) => hs.iter().all(|h| {
                let s: f64 = h.u.iter().zip(x).map(|(u, v)| u * v).sum();
                s.abs() <= h.b + COVER_TOL
            }),
        }
    }

    /// Half-widths of a coordinate box containing the body.
    pub fn bounding_box(&self) -> Result<Vec<f64>> {
        self.validate()?;
        match self {
            Body::Box(b) => Ok(b.clone()),
            Body::Halfspaces(hs) => {
                // The body is a bounded symmetric polytope; its extremes are
                // attained at vertices, each cut out by r of the 2k hyperplanes.
                let r = self.rank();
                let planes: Vec<(&[f64], f64)> = hs
                    .iter()
                    .flat_map(|h| [(h.u.as_slice(), h.b), (h.u.as_slice(), -h.b)])
                    .collect();
                let mut extent = vec![0.0f64; r];
                let mut chosen = Vec::with_capacity(r);
                fn recurse(
                    start: usize,
                    planes: &[(&[f64], f64)],
                    chosen: &mut Vec<usize>,
                    r: usize,
                    visit: &mut dyn FnMut(&[usize]),
                ) {
                    if chosen.len() == r {
                        visit(chosen);
                        return;
                    }
                    for i in start..planes.len() {
                        chosen.push(i);
                        recurse(i + 1, planes, chosen, r, visit);
                        chosen.pop();
                    }
                }
                let body = self.clone();
                let mut visit = |idx: &[usize]| {
                    let a = DMatrix::from_fn(r, r, |i, j| planes[idx[i]].0[j]);
                    let rhs = DVector::from_fn(r, |i, _| planes[idx[i]].1);
                    if let Some(v) = a.lu().solve(&rhs) {
                        let v: Vec<f64> = v.iter().copied().collect();
                        if v.iter().all(|x| x.is_finite()) && body.contains(&v) {
                            for (e, x) in extent.iter_mut().zip(&v) {
                                *e = e.max(x.abs());
                            }
                        }
                    }
                };
                recurse(0, &planes, &mut chosen, r, &mut visit);
                Ok(extent)
            }
        }
    }
}

/// Integer points of `body`, in lexicographic order of the box enumeration.
pub fn lattice_points(body: &Body, budget: usize) -> Result<Vec<Vec<i64>>> {
    let extent = body.bounding_box()?;
    let bounds: Vec<i64> = extent
        .iter()
        .map(|e| (e + COVER_TOL).floor() as i64)
        .collect();
    let needed = bounds
        .iter()
        .map(|b| 2 * *b as u128 + 1)
        .fold(1u128, |a, c| a.saturating_mul(c));
    if needed > budget as u128 {
        return Err(Error::Capacity {
            what: "lattice points of a body",
            needed,
            budget: budget as u128,
        });
    }
    let mut out = Vec::new();
    for_each_box_point(&bounds, |m| {
        let x: Vec<f64> = m.iter().map(|&v| v as f64).collect();
        if body.contains(&x) {
            out.push(m.to_vec());
        }
    });
    Ok(out)
}

/// A CGAP `K = { <nu, h> : nu in Z^r cap V }` in the class `K_{r,m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cgap {
    pub h: Vec<f64>,
    #[serde(rename = "V")]
    pub body: Body,
    pub m: usize,
}

impl Cgap {
    pub fn rank(&self) -> usize {
        self.h.len()
    }
}

/// `K` itself. Errors if `|Z^r cap V|` exceeds the cap `m`.
pub fn cgap_image(k: &Cgap, budget: usize) -> Result<PointSet> {
    if k.m == 0 {
        return Err(domain("CGAP: cap m must be positive"));
    }
    if k.rank() == 0 {
        return Ok(PointSet::zero(1));
    }
    if k.body.rank() != k.rank() {
        return Err(invalid(format!(
            "CGAP: h has rank {} but V lives in R^{}",
            k.rank(),
            k.body.rank()
        )));
    }
    let pts = lattice_points(&k.body, budget)?;
    if pts.len() > k.m {
        return Err(Error::ClassCap {
            count: pts.len(),
            cap: k.m,
        });
    }
    let coords: Vec<f64> = pts
        .iter()
        .map(|nu| nu.iter().zip(&k.h).fold(0.0, |s, (&n, h)| s + n as f64 * h))
        .collect();
    PointSet::new(1, coords)
}

/// Result of a coverage query.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coverage {
    pub covered: usize,
    pub uncovered: Vec<usize>,
}

/// Which points lie in the closed max-norm `delta`-neighborhood of `k`.
pub fn neighborhood_coverage(
    points: &[f64],
    dim: usize,
    k: &PointSet,
    delta: f64,
) -> Result<Coverage> {
    if dim != k.dim() || !points.len().is_multiple_of(dim) {
        return Err(invalid("coverage: dimension mismatch"));
    }
    if !(delta >= 0.0) {
        return Err(domain("coverage: delta must be >= 0"));
    }
    let mut uncovered = Vec::new();
    let mut covered = 0;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        if k.distance(p) <= delta + COVER_TOL {
            covered += 1;
        } else {
            uncovered.push(i);
        }
    }
    Ok(Coverage { covered, uncovered })
}

/// Coverage of points in `R^d` by the product `x_j [K_j]_{delta_j}` of
/// one-dimensional neighborhoods.
pub fn product_coverage(
    points: &[f64],
    dim: usize,
    sets: &[PointSet],
    deltas: &[f64],
) -> Result<Coverage> {
    if sets.len() != dim || deltas.len() != dim || sets.iter().any(|s| s.dim() != 1) {
        return Err(invalid(
            "product coverage: need one 1-d set and one delta per coordinate",
        ));
    }
    let mut uncovered = Vec::new();
    let mut covered = 0;
    for (i, p) in points.chunks_exact(dim).enumerate() {
        let inside = p
            .iter()
            .zip(sets.iter().zip(deltas))
            .all(|(x, (s, d))| s.distance(&[*x]) <= d + COVER_TOL);
        if inside {
            covered += 1;
        } else {
            uncovered.push(i);
        }
    }
    Ok(Coverage { covered, uncovered })
}

/// `W{ R \ [K]_tau }`, summed in atom order.
pub fn mass_outside(w: &DiscreteDistribution, k: &PointSet, tau: f64) -> f64 {
    w.iter()
        .filter(|(z, _)| k.distance(z) > tau + COVER_TOL)
        .map(|(_, wt)| wt)
        .sum()
}

/// Search outcome for `beta_{r,m}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    /// Upper bound on the infimum (exact when `r = 0`).
    pub value: f64,
    pub witness: Cgap,
    pub exact: bool,
    pub evaluated: usize,
    pub budget_exhausted: bool,
}

/// Search outcome for `gamma_{r,s}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaResult {
    pub value: f64,
    /// The witness `K = Image(P)` with `h` absorbed into the generators.
    pub witness: Gap,
    pub exact: bool,
    pub evaluated: usize,
    pub budget_exhausted: bool,
}

/// Convergents `p/q` of the continued fraction of `x`, up to `depth` terms.
fn convergents(x: f64, depth: usize) -> Vec<(i64, i64)> {
    let mut out = Vec::new();
    let (mut h0, mut h1) = (0i64, 1i64);
    let (mut k0, mut k1) = (1i64, 0i64);
    let mut v = x;
    for _ in 0..depth {
        let a = v.floor();
        if a.abs() > 1e9 {
            break;
        }
        let a = a as i64;
        let (Some(h2), Some(k2)) = (
            a.checked_mul(h1).and_then(|t| t.checked_add(h0)),
            a.checked_mul(k1).and_then(|t| t.checked_add(k0)),
        ) else {
            break;
        };
        out.push((h2, k2));
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = v - a as f64;
        if frac.abs() < 1e-12 {
            break;
        }
        v = 1.0 / frac;
    }
    out
}

/// Candidate generators: atom magnitudes, their integer fractions, and
/// `|z_j| / q` for convergents `p/q` of pairwise ratios. At most
/// `max_candidates` are kept, ranked by the mass of atoms that are multiples
/// `k h` with `|k| <= reach` (larger `h` first on ties).
pub fn candidate_generators(
    w: &DiscreteDistribution,
    max_candidates: usize,
    reach: usize,
) -> Vec<f64> {
    let mut mags: Vec<f64> = w
        .atoms()
        .map(|z| z[0].abs())
        .filter(|&x| x > COVER_TOL)
        .collect();
    mags.sort_by(f64::total_cmp);
    mags.dedup_by(|a, b| (*a - *b).abs() <= IMAGE_DEDUP_TOL);
    let mut cands = mags.clone();
    for &x in &mags {
        for k in 2..=4 {
            cands.push(x / k as f64);
        }
    }
    for (i, &zi) in mags.iter().enumerate() {
        for &zj in &mags[..i] {
            for (_, q) in convergents(zi / zj, CF_DEPTH) {
                if q > 0 && q <= 1_000_000 {
                    cands.push(zj / q as f64);
                }
            }
        }
    }
    cands.retain(|&c| c > COVER_TOL && c.is_finite());
    cands.sort_by(|a, b| b.total_cmp(a));
    cands.dedup_by(|a, b| (*a - *b).abs() <= IMAGE_DEDUP_TOL * a.abs().max(1.0));
    let reach = reach as f64;
    let score = |h: f64| -> f64 {
        w.iter()
            .filter(|(z, _)| {
                let k = (z[0] / h).round();
                k.abs() <= reach && (z[0] - k * h).abs() <= COVER_TOL
            })
            .map(|(_, wt)| wt)
            .sum()
    };
    let mut scored: Vec<(f64, f64)> = cands.into_iter().map(|h| (score(h), h)).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    scored.truncate(max_candidates);
    let mut out: Vec<f64> = scored.into_iter().map(|(_, h)| h).collect();
    out.sort_by(f64::total_cmp);
    out
}

/// Maximal integer shapes `(b_1, ..., b_r)`, `b_j >= 1`, with `prod (2 b_j + 1) <= cap`.
fn maximal_shapes(r: usize, cap: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    fn rec(r: usize, cap: usize, cur: &mut Vec<i64>, prod: usize, out: &mut Vec<Vec<i64>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        let mut b = 1i64;
        while prod * (2 * b as usize + 1) <= cap {
            cur.push(b);
            rec(r, cap, cur, prod * (2 * b as usize + 1), out);
            cur.pop();
            b += 1;
        }
    }
    rec(r, cap, &mut Vec::new(), 1, &mut out);
    let size = |s: &[i64]| s.iter().map(|b| 2 * *b as usize + 1).product::<usize>();
    out.into_iter()
        .filter(|s| {
            (0..r).all(|j| {
                let mut t = s.clone();
                t[j] += 1;
                size(&t) > cap
            })
        })
        .collect()
}

/// One candidate: rank, generators and integer half-widths.
#[derive(Clone, Debug, PartialEq)]
struct Candidate {
    value: f64,
    size: usize,
    h: Vec<f64>,
    bounds: Vec<i64>,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    let key = |c: &Candidate| -> Vec<f64> {
        c.h.iter()
            .copied()
            .chain(c.bounds.iter().map(|&x| x as f64))
            .collect()
    };
    let lex = || {
        key(a)
            .iter()
            .zip(&key(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    };
    a.value
        .total_cmp(&b.value)
        .then(a.size.cmp(&b.size))
        .then(a.h.len().cmp(&b.h.len()))
        .then_with(lex)
        == Ordering::Less
}

/// Advances `idx` to the next `r`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let r = idx.len();
    for k in (0..r).rev() {
        if idx[k] < n - r + k {
            idx[k] += 1;
            for j in k + 1..r {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Shared search behind [`beta_rm`] and [`gamma_rs`]. `evaluate` maps a
/// candidate `(h, bounds)` to its exact image, so the reported value is the
/// witness's own mass.
/// Maps a candidate `(h, bounds)` to its image.
type ImageOf<'a> = dyn Fn(&[f64], &[i64]) -> Result<PointSet> + 'a;

struct Search<'a> {
    w: &'a DiscreteDistribution,
    tau: f64,
    evaluate: &'a ImageOf<'a>,
    evaluated: usize,
    budget: usize,
    exhausted: bool,
    best: Candidate,
}

impl Search<'_> {
    fn try_candidate(&mut self, h: &[f64], bounds: &[i64]) -> Result<Option<f64>> {
        if self.evaluated >= self.budget {
            self.exhausted = true;
            return Ok(None);
        }
        self.evaluated += 1;
        let image = (self.evaluate)(h, bounds)?;
        let value = mass_outside(self.w, &image, self.tau);
        let cand = Candidate {
            value,
            size: image.len(),
            h: h.to_vec(),
            bounds: bounds.to_vec(),
        };
        if better(&cand, &self.best) {
            self.best = cand;
        }
        Ok(Some(value))
    }

    fn run(&mut self, r: usize, cap: usize, max_candidates: usize) -> Result<()> {
        let cands = candidate_generators(self.w, max_candidates, CANDIDATE_REACH);
        for rank in 1..=r {
            let shapes = maximal_shapes(rank, cap);
            if shapes.is_empty() || cands.len() < rank {
                continue;
            }
            let mut idx: Vec<usize> = (0..rank).collect();
            loop {
                let h: Vec<f64> = idx.iter().map(|&i| cands[i]).collect();
                for s in &shapes {
                    if self.try_candidate(&h, s)?.is_none() {
                        return Ok(());
                    }
                }
                if !next_combination(&mut idx, cands.len()) {
                    break;
                }
            }
        }
        self.shrink()
    }

    /// Reduce each half-width of the best witness while its value is kept.
    fn shrink(&mut self) -> Result<()> {
        if self.best.h.is_empty() {
            return Ok(());
        }
        let target = self.best.value;
        let h = self.best.h.clone();
        let mut bounds = self.best.bounds.clone();
        for j in 0..bounds.len() {
            while bounds[j] > 1 {
                bounds[j] -= 1;
                let image = (self.evaluate)(&h, &bounds)?;
                if mass_outside(self.w, &image, self.tau) != target {
                    bounds[j] += 1;
                    break;
                }
            }
        }
        let image = (self.evaluate)(&h, &bounds)?;
        self.best = Candidate {
            value: mass_outside(self.w, &image, self.tau),
            size: image.len(),
            h,
            bounds,
        };
        Ok(())
    }
}

fn check_measure(w: &DiscreteDistribution, tau: f64) -> Result<()> {
    if w.dim() != 1 {
        return Err(invalid(
            "approximation functionals are defined for measures on R",
        ));
    }
    if !(tau >= 0.0) {
        return Err(domain("approximation functionals: tau must be >= 0"));
    }
    Ok(())
}

/// Slack added to integer box half-widths when a witness body is reported.
pub const BOX_SLACK: f64 = 0.4;

const MAX_CANDIDATES: usize = 48;

/// Multiplier range used to rank candidate generators. It does not depend on
/// `r`, `m` or `tau`, so the candidate family is the same for every query on
/// one measure.
const CANDIDATE_REACH: usize = 64;

/// Upper bound on `beta_{r,m}(W, tau) = inf_{K in K_{r,m}} W{R \ [K]_tau}`
/// with a witness CGAP. Exact for `r = 0`.
pub fn beta_rm(
    w: &DiscreteDistribution,
    tau: f64,
    r: usize,
    m: usize,
    search_budget: usize,
) -> Result<BetaResult> {
    check_measure(w, tau)?;
    if m == 0 {
        return Err(domain("beta: m must be positive"));
    }
    let evaluate = |h: &[f64], bounds: &[i64]| -> Result<PointSet> {
        let body = Body::Box(bounds.iter().map(|&b| b as f64 + BOX_SLACK).collect());
        cgap_image(
            &Cgap {
                h: h.to_vec(),
                body,
                m,
            },
            DEFAULT_GAP_BUDGET,
        )
    };
    let zero = PointSet::zero(1);
    let mut search = Search {
        w,
        tau,
        evaluate: &evaluate,
        evaluated: 1,
        budget: search_budget.max(1),
        exhausted: false,
        best: Candidate {
            value: mass_outside(w, &zero, tau),
            size: 1,
            h: Vec::new(),
            bounds: Vec::new(),
        },
    };
    if r > 0 {
        search.run(r, m, MAX_CANDIDATES)?;
    }
    let best = search.best;
    let witness = Cgap {
        body: Body::Box(best.bounds.iter().map(|&b| b as f64 + BOX_SLACK).collect()),
        h: best.h,
        m,
    };
    Ok(BetaResult {
        value: best.value,
        witness,
        exact: r == 0,
        evaluated: search.evaluated,
        budget_exhausted: search.exhausted,
    })
}

/// Upper bound on `gamma_{r,s}(W, tau)` over GAP images of at most `s` points,
/// with a witness GAP. Exact for `r = 0`.
pub fn gamma_rs(
    w: &DiscreteDistribution,
    tau: f64,
    r: usize,
    s: usize,
    search_budget: usize,
) -> Result<GammaResult> {
    check_measure(w, tau)?;
    if s == 0 {
        return Err(domain("gamma: s must be positive"));
    }
    let evaluate = |h: &[f64], bounds: &[i64]| -> Result<PointSet> {
        let p = Gap::scalar(bounds.iter().map(|&b| b as f64).collect(), h)?;
        gap_image(&p, DEFAULT_GAP_BUDGET)
    };
    let zero = PointSet::zero(1);
    let mut search = Search {
        w,
        tau,
        evaluate: &evaluate,
        evaluated: 1,
        budget: search_budget.max(1),
        exhausted: false,
        best: Candidate {
            value: mass_outside(w, &zero, tau),
            size: 1,
            h: Vec::new(),
            bounds: Vec::new(),
        },
    };
    if r > 0 {
        search.run(r, s, MAX_CANDIDATES)?;
    }
    let best = search.best;
    let witness = if best.h.is_empty() {
        Gap::trivial(1)
    } else {
        Gap::scalar(best.bounds.iter().map(|&b| b as f64).collect(), &best.h)?
    };
    Ok(GammaResult {
        value: best.value,
        witness,
        exact: r == 0,
        evaluated: search.evaluated,
        budget_exhausted: search.exhausted,
    })
}

/// `W{R \ [K]_tau}` recomputed from a CGAP witness.
pub fn beta_witness_mass(w: &DiscreteDistribution, k: &Cgap, tau: f64) -> Result<f64> {
    Ok(mass_outside(w, &cgap_image(k, DEFAULT_GAP_BUDGET)?, tau))
}

/// `W{R \ [K]_tau}` recomputed from a GAP witness.
pub fn gamma_witness_mass(w: &DiscreteDistribution, p: &Gap, tau: f64) -> Result<f64> {
    Ok(mass_outside(w, &gap_image(p, DEFAULT_GAP_BUDGET)?, tau))
}

/// A lattice `Lambda = B Z^r` given by basis columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    /// Basis vectors (the columns of `B`).
    pub basis: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn integer(r: usize) -> Self {
        Self {
            basis: (0..r)
                .map(|i| (0..r).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    fn matrix(&self) -> Result<DMatrix<f64>> {
        let r = self.basis.len();
        if self.basis.iter().any(|b| b.len() != r) {
            return Err(invalid("lattice: basis must be r vectors in R^r"));
        }
        Ok(DMatrix::from_fn(r, r, |i, j| self.basis[j][i]))
    }
}

/// Outcome of [`tv_cover_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverCheck {
    /// `Image(P) subset V cap Lambda`.
    pub image_in_body: bool,
    /// `V cap Lambda subset Image(P^t)` with `t = (c1 r)^{3r/2}`.
    pub body_in_dilate: bool,
    /// `size(P^t) <= (2t + 1)^r |V cap Lambda|`.
    pub size_bound_holds: bool,
    pub dilation: f64,
    pub dilate_size: usize,
    pub body_lattice_count: usize,
    pub size_rhs: f64,
}

/// Checks both inclusions `Image(P) subset V cap Lambda subset Image(P^t)`
/// and the size inequality for a given GAP, body and lattice.
pub fn tv_cover_check(
    p: &Gap,
    body: &Body,
    lattice: &Lattice,
    c1: f64,
    budget: usize,
) -> Result<CoverCheck> {
    if !(c1 >= 1.0) {
        return Err(domain("cover check: c1 must be >= 1"));
    }
    let r = body.rank();
    if p.dim() != r || lattice.basis.len() != r {
        return Err(invalid(
            "cover check: GAP, body and lattice must live in the same R^r",
        ));
    }
    let b = lattice.matrix()?;
    let b_inv = b
        .clone()
        .try_inverse()
        .ok_or_else(|| domain("cover check: lattice basis is singular"))?;
    // lattice points B nu inside V
    let extent = body.bounding_box()?;
    let nu_bounds: Vec<i64> = (0..r)
        .map(|i| {
            (0..r)
                .map(|j| b_inv[(i, j)].abs() * extent[j])
                .sum::<f64>()
                .floor() as i64
                + 1
        })
        .collect();
    let needed = nu_bounds
        .iter()
        .map(|b| 2 * *b as u128 + 1)
        .fold(1u128, |a, c| a.saturating_mul(c));
    if needed > budget as u128 {
        return Err(Error::Capacity {
            what: "lattice points of a body",
            needed,
            budget: budget as u128,
        });
    }
    let mut body_pts = Vec::new();
    for_each_box_point(&nu_bounds, |nu| {
        let nu = DVector::from_iterator(r, nu.iter().map(|&v| v as f64));
        let x = &b * nu;
        if body.contains(x.as_slice()) {
            body_pts.extend_from_slice(x.as_slice());
        }
    });
    let body_set = PointSet::new(r.max(1), if r == 0 { vec![0.0] } else { body_pts })?;

    let in_lattice = |x: &[f64]| -> bool {
        let c = &b_inv * DVector::from_column_slice(x);
        c.iter().all(|v| (v - v.round()).abs() <= COVER_TOL)
    };
    let image = gap_image(p, budget)?;
    let image_in_body = r == 0 || image.points().all(|x| body.contains(x) && in_lattice(x));

    let t = (c1 * r as f64).powf(1.5 * r as f64);
    let dilate = if r == 0 { p.clone() } else { gap_dilate(p, t)? };
    let dilate_image = gap_image(&dilate, budget)?;
    let body_in_dilate = body_set.points().all(|x| dilate_image.contains(x));
    let size_rhs = (2.0 * t + 1.0).powi(r as i32) * body_set.len() as f64;
    Ok(CoverCheck {
        image_in_body,
        body_in_dilate,
        size_bound_holds: dilate_image.len() as f64 <= size_rhs,
        dilation: t,
        dilate_size: dilate_image.len(),
        body_lattice_count: body_set.len(),
        size_rhs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::spectral_measure;
    use crate::weights::WeightVector;

    const B: usize = DEFAULT_GAP_BUDGET;

    fn flat(s: &PointSet) -> Vec<f64> {
        s.as_flat().to_vec()
    }

    #[test]
    fn gap_image_examples() {
        let p = Gap::scalar(vec![2.0], &[3.0]).unwrap();
        assert_eq!(
            flat(&gap_image(&p, B).unwrap()),
            vec![-6.0, -3.0, 0.0, 3.0, 6.0]
        );
        assert!(gap_is_proper(&p, B).unwrap());
        assert_eq!(flat(&gap_image(&Gap::trivial(1), B).unwrap()), vec![0.0]);
        let q = Gap::scalar(vec![1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(gap_image(&q, B).unwrap().len(), 7);
        assert_eq!(q.box_size(), 9);
        assert!(!gap_is_proper(&q, B).unwrap());
        let wide = Gap::scalar(vec![2.0, 2.0], &[1.0, 10.0]).unwrap();
        assert_eq!(gap_image(&wide, B).unwrap().len(), 25);
        assert!(gap_is_proper(&wide, B).unwrap());
    }

    #[test]
    fn dilates() {
        let p = Gap::scalar(vec![2.0], &[3.0]).unwrap();
        assert_eq!(gap_dilate(&p, 1.0).unwrap(), p);
        let img = gap_image(&gap_dilate(&p, 2.0).unwrap(), B).unwrap();
        let expect: Vec<f64> = (-4..=4).map(|k| 3.0 * k as f64).collect();
        assert_eq!(flat(&img), expect);
        assert!(gap_dilate(&p, 0.0).is_err());
    }

    #[test]
    fn gap_budget() {
        let p = Gap::scalar(vec![100.0, 100.0], &[1.0, 0.5]).unwrap();
        assert!(matches!(gap_image(&p, 1000), Err(Error::Capacity { .. })));
    }

    #[test]
    fn cgap_examples() {
        let k0 = Cgap {
            h: vec![],
            body: Body::Box(vec![]),
            m: 1,
        };
        assert_eq!(flat(&cgap_image(&k0, B).unwrap()), vec![0.0]);
        let k1 = Cgap {
            h: vec![3.0],
            body: Body::Box(vec![2.5]),
            m: 5,
        };
        assert_eq!(
            flat(&cgap_image(&k1, B).unwrap()),
            vec![-6.0, -3.0, 0.0, 3.0, 6.0]
        );
        let cross = Body::Halfspaces(vec![
            Halfspace {
                u: vec![1.0, 1.0],
                b: 1.0,
            },
            Halfspace {
                u: vec![1.0, -1.0],
                b: 1.0,
            },
        ]);
        let k2 = Cgap {
            h: vec![1.0, 10.0],
            body: cross.clone(),
            m: 5,
        };
        assert_eq!(
            flat(&cgap_image(&k2, B).unwrap()),
            vec![-10.0, -1.0, 0.0, 1.0, 10.0]
        );
        let capped = Cgap {
            h: vec![1.0, 10.0],
            body: cross,
            m: 4,
        };
        assert_eq!(
            cgap_image(&capped, B),
            Err(Error::ClassCap { count: 5, cap: 4 })
        );
    }

    #[test]
    fn unbounded_body_is_rejected() {
        let slab = Body::Halfspaces(vec![Halfspace {
            u: vec![1.0, 0.0],
            b: 1.0,
        }]);
        assert!(slab.bounding_box().is_err());
    }

    #[test]
    fn coverage_examples() {
        let zero = PointSet::zero(1);
        let c = neighborhood_coverage(&[0.0, 1.0, 0.0, -0.5], 1, &zero, 0.0).unwrap();
        assert_eq!(c.covered, 2);
        assert_eq!(c.uncovered, vec![1, 3]);
        let k = PointSet::new(1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let c = neighborhood_coverage(&[0.9, 2.1, 7.0], 1, &k, 0.15).unwrap();
        assert_eq!(
            c,
            Coverage {
                covered: 2,
                uncovered: vec![2]
            }
        );
        let c = neighborhood_coverage(&[0.9, 2.1, 7.0], 1, &k, 4.0).unwrap();
        assert!(c.uncovered.is_empty());
    }

    #[test]
    fn product_coverage_is_coordinatewise() {
        let ints = PointSet::new(1, vec![-1.0, 0.0, 1.0]).unwrap();
        let halves = PointSet::new(1, vec![-0.5, 0.5]).unwrap();
        let pts = [1.0, 0.5, 0.0, 0.0, 1.05, -0.45];
        let c = product_coverage(&pts, 2, &[ints, halves], &[0.1, 0.1]).unwrap();
        assert_eq!(c.uncovered, vec![1]);
    }

    #[test]
    fn beta_examples() {
        let w = spectral_measure(&WeightVector::from_scalars(&[1.0, 1.0, 5.0]).unwrap());
        let b = beta_rm(&w, 0.5, 0, 3, DEFAULT_SEARCH_BUDGET).unwrap();
        assert!((b.value - 1.0).abs() < 1e-15);
        assert_eq!(b.value, crate::distributions::tail_mass_p(&w, 0.5));
        assert!(b.exact);
        let w = spectral_measure(&WeightVector::from_scalars(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap());
        let b = beta_rm(&w, 0.0, 1, 11, DEFAULT_SEARCH_BUDGET).unwrap();
        assert_eq!(b.value, 0.0);
        assert_eq!(b.witness.h, vec![1.0]);
        assert_eq!(b.witness.body, Body::Box(vec![5.4]));
        assert_eq!(beta_witness_mass(&w, &b.witness, 0.0).unwrap(), b.value);
        let e0 = DiscreteDistribution::from_flat(1, vec![0.0], vec![0.5], false).unwrap();
        for r in 0..3 {
            assert_eq!(beta_rm(&e0, 0.0, r, 3, 1000).unwrap().value, 0.0);
        }
    }

    #[test]
    fn gamma_examples() {
        let w = spectral_measure(&WeightVector::from_scalars(&[1.0, 1.0, 5.0]).unwrap());
        assert_eq!(
            gamma_rs(&w, 0.5, 0, 3, 10).unwrap().value,
            beta_rm(&w, 0.5, 0, 3, 10).unwrap().value
        );
        let w = spectral_measure(&WeightVector::from_scalars(&[3.0, 6.0, 9.0]).unwrap());
        let g = gamma_rs(&w, 0.0, 1, 11, DEFAULT_SEARCH_BUDGET).unwrap();
        assert_eq!(g.value, 0.0);
        assert_eq!(g.witness.dims(), &[3.0]);
        assert_eq!(g.witness.gen(0), &[3.0]);
        assert_eq!(gamma_witness_mass(&w, &g.witness, 0.0).unwrap(), g.value);
    }

    #[test]
    fn gamma_isolates_an_irrational_outlier() {
        let out = 2f64.sqrt() * 3.7;
        let (wa, wo) = (0.45, 0.05);
        let w = DiscreteDistribution::new(
            vec![
                vec![-2.0],
                vec![-1.0],
                vec![-out],
                vec![1.0],
                vec![2.0],
                vec![out],
            ],
            vec![wa / 2.0, wa / 2.0, wo, wa / 2.0, wa / 2.0, wo],
            true,
        )
        .unwrap();
        let s = 5;
        let g = gamma_rs(&w, 0.0, 1, s, DEFAULT_SEARCH_BUDGET).unwrap();
        // oracle: every rank-1 GAP of size <= 5 built from atom ratios
        let mut oracle = f64::INFINITY;
        for h in candidate_generators(&w, usize::MAX, s) {
            for l in 1..=2 {
                let p = Gap::scalar(vec![l as f64], &[h]).unwrap();
                oracle = oracle.min(gamma_witness_mass(&w, &p, 0.0).unwrap());
            }
        }
        assert!((g.value - 2.0 * wo).abs() < 1e-15, "{}", g.value);
        assert_eq!(g.value, oracle);
    }

    #[test]
    fn convergents_of_simple_ratios() {
        assert_eq!(convergents(1.5, 12), vec![(1, 1), (3, 2)]);
        let c = convergents(std::f64::consts::PI, 4);
        assert_eq!(c, vec![(3, 1), (22, 7), (333, 106), (355, 113)]);
    }

    #[test]
    fn maximal_shapes_for_small_caps() {
        assert_eq!(maximal_shapes(1, 11), vec![vec![5]]);
        assert_eq!(maximal_shapes(2, 9), vec![vec![1, 1]]);
        assert!(maximal_shapes(2, 8).is_empty());
        let s = maximal_shapes(2, 15);
        assert!(s.contains(&vec![1, 2]) && s.contains(&vec![2, 1]));
    }

    #[test]
    fn cover_check_examples() {
        let p = Gap::scalar(vec![3.0], &[1.0]).unwrap();
        let v = Body::Box(vec![3.0]);
        let c = tv_cover_check(&p, &v, &Lattice::integer(1), 1.0, B).unwrap();
        assert!(c.image_in_body && c.body_in_dilate && c.size_bound_holds);
        assert_eq!((c.dilate_size, c.body_lattice_count), (7, 7));
        assert_eq!(c.size_rhs, 21.0);
        let big = Gap::scalar(vec![5.0], &[1.0]).unwrap();
        let c = tv_cover_check(&big, &v, &Lattice::integer(1), 1.0, B).unwrap();
        assert!(!c.image_in_body);
    }
}
