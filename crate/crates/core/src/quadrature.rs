//! Numerical integration over intervals and Euclidean balls.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Adaptive Simpson integration of `f` over `[a, b]`.
///
/// The interval is first cut into `panels` equal pieces (oscillatory
/// integrands need a starting mesh finer than their period); each piece is
/// refined until the local Richardson estimate meets its share of
/// `rel_tol * |I|`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    panels: usize,
    max_depth: u32,
) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    let mut pieces = Vec::with_capacity(panels);
    let mut coarse = 0.0;
    for i in 0..panels {
        let lo = a + h * i as f64;
        let hi = if i + 1 == panels { b } else { lo + h };
        let mid = 0.5 * (lo + hi);
        let (flo, fmid, fhi) = (f(lo), f(mid), f(hi));
        let s = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
        coarse += s;
        pieces.push((lo, hi, flo, fmid, fhi, s));
    }
    let scale = coarse.abs().max(f64::MIN_POSITIVE);
    let eps_per_unit = rel_tol * scale / (b - a).abs();
    let mut total = 0.0;
    for (lo, hi, flo, fmid, fhi, s) in pieces {
        let eps = eps_per_unit * (hi - lo).abs();
        total += simpson_step(&f, lo, hi, flo, fmid, fhi, s, eps, max_depth)?;
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    eps: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * eps {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "adaptive Simpson did not converge on [{a}, {b}] (local error {:.3e})",
            delta.abs() / 15.0
        )));
    }
    Ok(
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1)?
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1)?,
    )
}

/// Gauss-Legendre nodes and weights of order `n` on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = (p1, p0);
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn composite_rule(lo: f64, hi: f64, panels: usize, base: &(Vec<f64>, Vec<f64>)) -> Vec<(f64, f64)> {
    let h = (hi - lo) / panels as f64;
    let mut out = Vec::with_capacity(panels * base.0.len());
    for p in 0..panels {
        let a = lo + h * p as f64;
        let mid = a + 0.5 * h;
        for (x, w) in base.0.iter().zip(&base.1) {
            out.push((mid + 0.5 * h * x, 0.5 * h * w));
        }
    }
    out
}

/// Options for [`ball_integral`].
#[derive(Clone, Copy, Debug)]
pub struct BallQuadrature {
    pub order: usize,
    pub initial_panels: usize,
    pub rel_tol: f64,
    pub max_evaluations: u64,
}

impl Default for BallQuadrature {
    fn default() -> Self {
        Self {
            order: 8,
            initial_panels: 4,
            rel_tol: 1e-5,
            max_evaluations: 60_000_000,
        }
    }
}

/// Integral of `f` over the Euclidean ball `||t|| <= radius` in `R^d`, using a
/// tensor-product composite Gauss-Legendre rule in hyperspherical
/// coordinates. The panel count doubles until two successive estimates agree
/// to `rel_tol`.
pub fn ball_integral<F: Fn(&[f64]) -> f64>(
    f: F,
    d: usize,
    radius: f64,
    opts: BallQuadrature,
) -> Result<f64> {
    if d == 0 {
        return Err(Error::Domain(
            "ball integral: dimension must be >= 1".into(),
        ));
    }
    if radius == 0.0 {
        return Ok(0.0);
    }
    let base = gauss_legendre(opts.order);
    let mut panels = opts.initial_panels.max(1);
    let mut previous: Option<f64> = None;
    loop {
        let per_dim = (panels * opts.order) as u64;
        if per_dim.saturating_pow(d as u32) > opts.max_evaluations {
            return Err(Error::Numeric(format!(
                "ball integral in d = {d} did not reach relative tolerance {} within the evaluation cap",
                opts.rel_tol
            )));
        }
        let value = tensor_ball(&f, d, radius, panels, &base);
        if let Some(prev) = previous {
            if (value - prev).abs() <= opts.rel_tol * value.abs().max(f64::MIN_POSITIVE) {
                return Ok(value);
            }
        }
        previous = Some(value);
        panels *= 2;
    }
}

fn tensor_ball<F: Fn(&[f64]) -> f64>(
    f: &F,
    d: usize,
    radius: f64,
    panels: usize,
    base: &(Vec<f64>, Vec<f64>),
) -> f64 {
    if d == 1 {
        return composite_rule(-radius, radius, 2 * panels, base)
            .iter()
            .map(|&(x, w)| w * f(&[x]))
            .sum();
    }
    // axes: r, phi_1..phi_{d-2} in [0, pi], phi_{d-1} in [0, 2 pi)
    let mut axes = vec![composite_rule(0.0, radius, panels, base)];
    for _ in 0..d.saturating_sub(2) {
        axes.push(composite_rule(0.0, PI, panels, base));
    }
    axes.push(composite_rule(0.0, 2.0 * PI, 2 * panels, base));

    let mut idx = vec![0usize; d];
    let mut t = vec![0.0; d];
    let mut total = 0.0;
    loop {
        let r = axes[0][idx[0]].0;
        let mut weight = axes[0][idx[0]].1 * r.powi(d as i32 - 1);
        let mut sin_prod = 1.0;
        for k in 1..d {
            let (phi, w) = axes[k][idx[k]];
            let (s, c) = phi.sin_cos();
            t[k - 1] = r * sin_prod * c;
            weight *= w;
            if k < d - 1 {
                weight *= s.powi((d - 1 - k) as i32);
            }
            sin_prod *= s;
        }
        t[d - 1] = r * sin_prod;
        total += weight * f(&t);

        let mut k = 0;
        loop {
            idx[k] += 1;
            if idx[k] < axes[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
            if k == d {
                return total;
            }
        }
    }
}

/// Volume of the unit ball in `R^d`.
pub fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * PI / d as f64 * unit_ball_volume(d - 2),
    }
}
