//! Right-hand sides of the concentration bounds, evaluated with a
//! configurable table of absolute constants, the constant-free pointwise
//! chain behind the least-common-denominator bound, and the size/rank
//! budgets of the inverse principles.
//!
//! Every evaluator returns `f64::INFINITY` when a mass functional in a
//! denominator vanishes. Values above 1 are vacuous and reported as such.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::concentration::{
    exact_q_weighted, mc_q, ConcentrationEstimate, Sampler, DEFAULT_ENUMERATION_BUDGET,
};
use crate::distributions::{
    h_char_fn, h_power, lambda_d, spectral_measure, symmetrize, tail_mass_p,
    truncated_second_moment, DiscreteDistribution,
};
use crate::error::{domain, Error, Result};
use crate::lcd::{compute_lcd, dist_to_lattice, dot_product_vector, LcdParams};
use crate::progressions::{
    beta_rm, gamma_rs, gap_image, neighborhood_coverage, Gap, DEFAULT_GAP_BUDGET,
    DEFAULT_SEARCH_BUDGET,
};
use crate::rng::RngSeed;
use crate::weights::WeightVector;

/// Absolute constants of the bounds. Only `c_exp` and `lambda_guard` have
/// defaults other than 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    /// Constant of the `O(.)` / `<<` budgets.
    pub c: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
    pub c10: f64,
    pub c11: f64,
    pub c12: f64,
    pub c_esseen: f64,
    /// Dimension-dependent factor of `<<_d`.
    pub c_d: f64,
    /// Exponent constant in `exp(-c M(tau D) alpha^2)`. The default 4 matches
    /// the exponent of the `p`-form, so the `M`-form never exceeds it.
    pub c_exp: f64,
    /// `lambda_1(tau / kappa) >= lambda_guard` is the operational form of
    /// the assumption `lambda_1 >> 1`.
    pub lambda_guard: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 1.0,
            c5: 1.0,
            c6: 1.0,
            c7: 1.0,
            c8: 1.0,
            c9: 1.0,
            c10: 1.0,
            c11: 1.0,
            c12: 1.0,
            c_esseen: 1.0,
            c_d: 1.0,
            c_exp: 4.0,
            lambda_guard: 1.0,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("c", self.c),
            ("c1", self.c1),
            ("c2", self.c2),
            ("c3", self.c3),
            ("c4", self.c4),
            ("c5", self.c5),
            ("c6", self.c6),
            ("c7", self.c7),
            ("c8", self.c8),
            ("c9", self.c9),
            ("c10", self.c10),
            ("c11", self.c11),
            ("c12", self.c12),
            ("c_esseen", self.c_esseen),
            ("c_d", self.c_d),
            ("c_exp", self.c_exp),
            ("lambda_guard", self.lambda_guard),
        ];
        for (name, v) in named {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!(
                    "constants: {name} = {v} must be positive and finite"
                )));
            }
        }
        if self.c1 < 1.0 {
            return Err(domain("constants: c1 must be >= 1"));
        }
        Ok(())
    }
}

/// `x^{-1/2}` style terms blow up at `x = 0`; such bounds are vacuous.
fn positive_or_inf(x: f64) -> Option<f64> {
    (x > 0.0 && x.is_finite()).then_some(x)
}

/// `c^{r+1} (lead / (size sqrt x) + (r+1)^{5r/2} / x^{(r+1)/2})`.
fn arak_shape(c: f64, r: u32, lead: f64, size: f64, x: f64) -> f64 {
    let Some(x) = positive_or_inf(x) else {
        return f64::INFINITY;
    };
    let rf = r as f64;
    c.powi(r as i32 + 1)
        * (lead / (size * x.sqrt()) + (rf + 1.0).powf(2.5 * rf) / x.powf(0.5 * (rf + 1.0)))
}

fn floor_factor(kappa: f64, delta: f64) -> f64 {
    1.0 + (kappa / delta).floor()
}

/// Arak-type bound for `Q(e(alpha W), tau)` through `beta_{r,m}(W, tau)`.
pub fn arak_beta_bound(alpha: f64, beta: f64, r: u32, m: usize, c2: f64) -> f64 {
    arak_shape(c2, r, 1.0, m as f64, alpha * beta)
}

/// `Q(F_a, tau)` through `n p(tau/kappa) beta_{r,m}(M*, delta)`.
#[allow(clippy::too_many_arguments)]
pub fn sum_beta_p_bound(
    kappa: f64,
    delta: f64,
    r: u32,
    m: usize,
    n: usize,
    p_val: f64,
    beta_star: f64,
    c3: f64,
) -> f64 {
    floor_factor(kappa, delta) * arak_shape(c3, r, 1.0, m as f64, n as f64 * p_val * beta_star)
}

/// `Q(F_a, tau)` through `n beta_{r,m}(M*, delta)`, under `lambda_1(tau/kappa) >> 1`.
pub fn sum_beta_lambda_bound(
    kappa: f64,
    delta: f64,
    r: u32,
    m: usize,
    n: usize,
    beta_star: f64,
    c4: f64,
) -> f64 {
    floor_factor(kappa, delta) * arak_shape(c4, r, 1.0, m as f64, n as f64 * beta_star)
}

/// Arak-type bound for `Q(e(alpha W), tau)` through `gamma_{r,s}(W, tau)`.
pub fn arak_gamma_bound(alpha: f64, gamma: f64, r: u32, s: usize, c5: f64, c6: f64) -> f64 {
    let rf = r as f64;
    let lead = (c6 * rf + 1.0).powf(1.5 * rf * rf);
    arak_shape(c5, r, lead, s as f64, alpha * gamma)
}

/// `Q(F_a, tau)` through `n gamma_{r,s}(M*, delta)`, under `lambda_1(tau/kappa) >> 1`.
#[allow(clippy::too_many_arguments)]
pub fn sum_gamma_lambda_bound(
    kappa: f64,
    delta: f64,
    r: u32,
    s: usize,
    n: usize,
    gamma_star: f64,
    c7: f64,
    c8: f64,
) -> f64 {
    let rf = r as f64;
    let lead = (c8 * rf + 1.0).powf(1.5 * rf * rf);
    floor_factor(kappa, delta) * arak_shape(c7, r, lead, s as f64, n as f64 * gamma_star)
}

/// `c_d Q(H^{p(tau/kappa)}, kappa)`.
pub fn poisson_p_bound(q_h_p: f64, c_d: f64) -> f64 {
    c_d * q_h_p
}

/// `c_d (1 + floor(kappa/delta))^d Q(H^{p(tau/kappa)}, delta)`.
pub fn poisson_p_rescaled_bound(
    q_h_p_delta: f64,
    kappa: f64,
    delta: f64,
    d: usize,
    c_d: f64,
) -> f64 {
    c_d * floor_factor(kappa, delta).powi(d as i32) * q_h_p_delta
}

/// `c_d lambda^{-1} Q(H^lambda, kappa)`.
pub fn poisson_lambda_bound(q_h_lambda: f64, lambda: f64, c_d: f64) -> f64 {
    match positive_or_inf(lambda) {
        Some(l) => c_d * q_h_lambda / l,
        None => f64::INFINITY,
    }
}

/// `c_d ((1 / (gamma D sqrt b))^d / sqrt(det A) + exp(-c_exp b alpha^2))`.
#[allow(clippy::too_many_arguments)]
fn lcd_shape(
    b: f64,
    gamma: f64,
    big_d: f64,
    alpha: f64,
    det_a: f64,
    d: usize,
    c_d: f64,
    c_exp: f64,
) -> f64 {
    let (Some(b), Some(det)) = (positive_or_inf(b), positive_or_inf(det_a)) else {
        return f64::INFINITY;
    };
    c_d * ((1.0 / (gamma * big_d * b.sqrt())).powi(d as i32) / det.sqrt()
        + (-c_exp * b * alpha * alpha).exp())
}

/// Bound for `Q(H^b, 1/D)` under the least-common-denominator condition.
#[allow(clippy::too_many_arguments)]
pub fn lcd_bound(
    b: f64,
    gamma: f64,
    big_d: f64,
    alpha: f64,
    det_a: f64,
    d: usize,
    c_d: f64,
) -> f64 {
    lcd_shape(b, gamma, big_d, alpha, det_a, d, c_d, 4.0)
}

/// `lcd_bound(b = lambda_d(tau D)) / lambda_d(tau D)`.
pub fn lcd_lambda_bound(
    lambda: f64,
    gamma: f64,
    big_d: f64,
    alpha: f64,
    det_a: f64,
    d: usize,
    c_d: f64,
) -> f64 {
    match positive_or_inf(lambda) {
        Some(l) => lcd_bound(l, gamma, big_d, alpha, det_a, d, c_d) / l,
        None => f64::INFINITY,
    }
}

/// `lcd_bound(b = p(tau D))`.
pub fn lcd_p_bound(
    p: f64,
    gamma: f64,
    big_d: f64,
    alpha: f64,
    det_a: f64,
    d: usize,
    c_d: f64,
) -> f64 {
    lcd_bound(p, gamma, big_d, alpha, det_a, d, c_d)
}

/// The bare bound with `b = M(tau D)` and exponent constant `c_exp`.
#[allow(clippy::too_many_arguments)]
pub fn lcd_moment_bound(
    m: f64,
    gamma: f64,
    big_d: f64,
    alpha: f64,
    det_a: f64,
    d: usize,
    c_d: f64,
    c_exp: f64,
) -> f64 {
    lcd_shape(m, gamma, big_d, alpha, det_a, d, c_d, c_exp)
}

/// One evaluated bound in a report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    /// `None` stands for `+infinity`.
    pub value: Option<f64>,
    pub vacuous: bool,
    /// `q / value`, the empirical constant this instance would need.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl BoundEntry {
    pub fn new(value: f64, q: Option<f64>) -> Self {
        let finite = value.is_finite().then_some(value);
        Self {
            value: finite,
            vacuous: !(value <= 1.0),
            ratio: match (q, finite) {
                (Some(q), Some(v)) if v > 0.0 => Some(q / v),
                _ => None,
            },
        }
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_some()
    }
}

/// Which inequality of the pointwise chain failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStep {
    /// `1 - cos x >= 2 x^2 / pi^2` on `[-pi, pi]`.
    Cosine,
    /// `H^(t) <= exp(-4 dist(t/2pi . a, Z^n)^2)`.
    Lattice,
    /// `H^(t) <= exp(-4 min{gamma ||t/2pi . a||, alpha}^2)` where the condition holds.
    Denominator,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainViolation {
    pub step: ChainStep,
    pub t: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub points: usize,
    pub cosine_checks: usize,
    pub lattice_checks: usize,
    pub denominator_checks: usize,
    pub violations: Vec<ChainViolation>,
}

impl ChainReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Slack of every pointwise comparison.
pub const CHAIN_SLACK: f64 = 1e-12;

/// `x` reduced to `[-pi, pi]`.
pub fn reduce_angle(x: f64) -> f64 {
    x - 2.0 * PI * (x / (2.0 * PI)).round()
}

/// `1 - cos x >= 2 x^2 / pi^2` for `|x| <= pi`.
pub fn cosine_inequality_holds(x: f64) -> bool {
    1.0 - x.cos() >= 2.0 * x * x / (PI * PI) - CHAIN_SLACK
}

/// Parameters of the denominator step of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLcd {
    pub gamma: f64,
    pub alpha: f64,
    pub big_d: f64,
}

/// Checks the three constant-free inequalities at every `t` of `grid`
/// (row-major, `a.dim()` coordinates per point).
pub fn verify_pointwise_chain(
    a: &WeightVector,
    grid: &[f64],
    lcd: Option<ChainLcd>,
) -> ChainReport {
    let d = a.dim();
    let mut report = ChainReport {
        points: grid.len() / d,
        cosine_checks: 0,
        lattice_checks: 0,
        denominator_checks: 0,
        violations: Vec::new(),
    };
    for t in grid.chunks_exact(d) {
        for x in dot_product_vector(t, a) {
            let y = reduce_angle(x);
            report.cosine_checks += 1;
            if !cosine_inequality_holds(y) {
                report.violations.push(ChainViolation {
                    step: ChainStep::Cosine,
                    t: t.to_vec(),
                    lhs: 1.0 - y.cos(),
                    rhs: 2.0 * y * y / (PI * PI),
                });
            }
        }
        let h = h_char_fn(a, t);
        let scaled: Vec<f64> = t.iter().map(|x| x / (2.0 * PI)).collect();
        let v = dot_product_vector(&scaled, a);
        let dist = dist_to_lattice(&v);
        let rhs = (-4.0 * dist * dist).exp();
        report.lattice_checks += 1;
        if h > rhs + CHAIN_SLACK {
            report.violations.push(ChainViolation {
                step: ChainStep::Lattice,
                t: t.to_vec(),
                lhs: h,
                rhs,
            });
        }
        if let Some(p) = lcd {
            let norm_t = t.iter().map(|x| x * x).sum::<f64>().sqrt();
            let va = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let threshold = (p.gamma * va).min(p.alpha);
            if norm_t <= 2.0 * PI * p.big_d && dist >= threshold {
                let rhs = (-4.0 * threshold * threshold).exp();
                report.denominator_checks += 1;
                if h > rhs + CHAIN_SLACK {
                    report.violations.push(ChainViolation {
                        step: ChainStep::Denominator,
                        t: t.to_vec(),
                        lhs: h,
                        rhs,
                    });
                }
            }
        }
    }
    report
}

/// `count` points drawn uniformly from the ball `||t|| <= radius` in `R^d`.
pub fn ball_grid(d: usize, radius: f64, count: usize, seed: RngSeed) -> Vec<f64> {
    use rand::Rng;
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(count * d);
    while out.len() < count * d {
        let v: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() <= 1.0 {
            out.extend(v.iter().map(|x| x * radius));
        }
    }
    out
}

/// Parameters of the inverse-principle budgets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseInputs {
    pub tau: f64,
    pub kappa: f64,
    pub delta: f64,
    pub r: u32,
    /// Number of weights allowed to stay unapproximated; the smallest
    /// admissible value is used when absent.
    pub n_prime: Option<usize>,
    /// Size cap of the witness search; `2n + 1` when absent.
    pub witness_size: Option<usize>,
    /// `(A, B, b_n)` of the multidimensional rank budgets.
    pub growth: Option<(f64, f64, f64)>,
    /// `rho_n` of the product size budget.
    pub rho: Option<f64>,
    pub mc_samples: usize,
    pub seed: RngSeed,
}

/// Budgets computed from one mass functional (`p` or `lambda_1`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    pub functional: f64,
    /// Lower end of the admissible `n'` range.
    pub n_prime_lower: Option<f64>,
    pub n_prime: Option<usize>,
    pub n_prime_admissible: bool,
    pub size_m: Option<f64>,
    pub rank: f64,
    pub n_prime_upper: Option<f64>,
    pub product_size: Option<f64>,
    pub total_rank: Option<f64>,
    pub total_n_prime: Option<f64>,
    pub guard_ok: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessSummary {
    pub gap: Gap,
    pub rank: usize,
    pub size: usize,
    pub uncovered: usize,
    pub uncovered_indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseReport {
    pub q: ConcentrationEstimate,
    pub n: usize,
    pub p: f64,
    pub lambda1: f64,
    pub size_tv: f64,
    pub p_budgets: Budgets,
    pub lambda_budgets: Budgets,
    pub witness: WitnessSummary,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn budgets(
    functional: f64,
    q: f64,
    n: usize,
    inputs: &InverseInputs,
    c: &ConstantsConfig,
    guard: Option<bool>,
) -> Budgets {
    let r = inputs.r as f64;
    let c9r = c.c9.powi(inputs.r as i32 + 1);
    let ratio = inputs.kappa / inputs.delta;
    let lower =
        (2.0 * c9r * (r + 1.0).powf(2.5 * r) * ratio / q).powf(2.0 / (r + 1.0)) / functional;
    let chosen = match inputs.n_prime {
        Some(np) => Some(np),
        None if lower.is_finite() => Some(((lower.floor() as usize) + 1).min(n.max(1))),
        None => None,
    };
    let admissible = chosen.is_some_and(|np| (np as f64) > lower && np <= n);
    let size_m = chosen.map(|np| 2.0 * c9r * ratio / (q * (functional * np as f64).sqrt()) + 1.0);
    let log_term = q.ln().abs() + ratio.ln() + 1.0;
    let product_size = inputs.rho.and_then(|rho| {
        chosen.map(|np| (c.c / (q * rho * (np as f64 * functional).sqrt())).max(1.0))
    });
    let (total_rank, total_n_prime) = match inputs.growth {
        Some((big_a, big_b, b_n)) => {
            let g = (big_a + big_b) * b_n.ln() + 1.0;
            (Some(c.c * g), finite(c.c * g.powi(3) / functional))
        }
        None => (None, None),
    };
    Budgets {
        functional,
        n_prime_lower: finite(lower),
        n_prime: chosen,
        n_prime_admissible: admissible,
        size_m: size_m.and_then(finite),
        rank: c.c * log_term,
        n_prime_upper: finite(c.c * log_term.powi(3) / functional),
        product_size: product_size.and_then(finite),
        total_rank,
        total_n_prime,
        guard_ok: guard,
    }
}

/// Fits a GAP to the scalar weights `a` with a `gamma_{r,s}` search on their
/// empirical measure and reports rank, size and uncovered count.
pub fn fit_gap(a: &WeightVector, delta: f64, r: u32, s: usize) -> Result<WitnessSummary> {
    if a.dim() != 1 {
        return Err(domain("GAP fit: weights must be scalars"));
    }
    let n = a.n();
    let w = DiscreteDistribution::with_tolerance(
        1,
        a.as_flat().to_vec(),
        vec![1.0 / n as f64; n],
        false,
        0.0,
    )?;
    let found = gamma_rs(&w, delta, r as usize, s, DEFAULT_SEARCH_BUDGET)?;
    let image = gap_image(&found.witness, DEFAULT_GAP_BUDGET)?;
    let cover = neighborhood_coverage(a.as_flat(), 1, &image, delta)?;
    Ok(WitnessSummary {
        rank: found.witness.rank(),
        size: image.len(),
        uncovered: cover.uncovered.len(),
        uncovered_indices: cover.uncovered,
        gap: found.witness,
    })
}

/// `Q(F_a, tau)`: exact when the enumeration fits, Monte Carlo otherwise.
pub fn concentration_of_sum(
    x: &DiscreteDistribution,
    a: &WeightVector,
    tau: f64,
    budget: usize,
    mc_samples: usize,
    seed: RngSeed,
) -> Result<ConcentrationEstimate> {
    match exact_q_weighted(x, a, tau, budget) {
        Err(Error::Capacity { .. }) => mc_q(
            &Sampler::WeightedSum {
                x: x.clone(),
                a: a.clone(),
            },
            tau,
            mc_samples,
            seed,
        ),
        other => other,
    }
}

/// Budgets of the inverse principles next to a heuristic witness GAP.
pub fn inverse_principle_report(
    x: &DiscreteDistribution,
    a: &WeightVector,
    inputs: &InverseInputs,
    constants: &ConstantsConfig,
) -> Result<InverseReport> {
    constants.validate()?;
    if !(inputs.tau > 0.0 && inputs.kappa > 0.0 && inputs.delta > 0.0) {
        return Err(domain(
            "inverse report: tau, kappa and delta must be positive",
        ));
    }
    let q = concentration_of_sum(
        x,
        a,
        inputs.tau,
        DEFAULT_ENUMERATION_BUDGET,
        inputs.mc_samples,
        inputs.seed,
    )?;
    let g = symmetrize(x);
    let ratio = inputs.tau / inputs.kappa;
    let p = tail_mass_p(&g, ratio);
    let lambda1 = lambda_d(&g, ratio, 1)?;
    let n = a.n();
    let guard = lambda1 >= constants.lambda_guard;
    let p_budgets = budgets(p, q.value, n, inputs, constants, None);
    let lambda_budgets = budgets(lambda1, q.value, n, inputs, constants, Some(guard));
    let n_prime = p_budgets
        .n_prime
        .or(lambda_budgets.n_prime)
        .unwrap_or(n)
        .max(1);
    let size_tv = (constants.c / (q.value * (n_prime as f64).sqrt())).max(1.0);
    let s = inputs.witness_size.unwrap_or(2 * n + 1);
    let witness = fit_gap(a, inputs.delta, inputs.r.max(1), s)?;
    Ok(InverseReport {
        q,
        n,
        p,
        lambda1,
        size_tv,
        p_budgets,
        lambda_budgets,
        witness,
    })
}

/// Maxima of `ratios` over the two halves of the list and whether they agree
/// within `factor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioAudit {
    pub max_first: f64,
    pub max_second: f64,
    pub stable: bool,
}

pub fn audit_ratios(ratios: &[f64], factor: f64) -> RatioAudit {
    let mid = ratios.len() / 2;
    let max_of = |s: &[f64]| s.iter().cloned().fold(0.0f64, f64::max);
    let (a, b) = (max_of(&ratios[..mid]), max_of(&ratios[mid..]));
    let (lo, hi) = (a.min(b), a.max(b));
    RatioAudit {
        max_first: a,
        max_second: b,
        stable: lo > 0.0 && hi.is_finite() && hi / lo <= factor,
    }
}

/// Stores evaluated bounds keyed by tag.
pub type BoundMap = BTreeMap<String, BoundEntry>;

/// Everything needed to evaluate the bounds on one instance.
#[derive(Clone, Debug)]
pub struct BoundInputs {
    pub id: String,
    pub x: DiscreteDistribution,
    pub a: WeightVector,
    pub tau: f64,
    pub kappa: f64,
    pub delta: f64,
    pub r: u32,
    pub m: usize,
    pub s: usize,
    /// Exponent of `H^b` in the bare least-common-denominator bound.
    pub b: f64,
    pub lcd: Option<LcdParams>,
    pub mc_samples: usize,
    pub budget: usize,
    pub seed: RngSeed,
}

/// Parameters and derived functionals recorded next to the bounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub tau: f64,
    pub kappa: f64,
    pub delta: f64,
    pub r: u32,
    pub m: usize,
    pub s: usize,
    pub b: f64,
    pub n: usize,
    pub d: usize,
    pub det_a: f64,
    /// `p(tau / kappa)`.
    pub p: f64,
    /// `lambda_1(tau / kappa)`.
    pub lambda1: f64,
    /// `beta_{r,m}(M*, delta)`; absent for `d > 1`.
    pub beta_star: Option<f64>,
    /// `gamma_{r,s}(M*, delta)`; absent for `d > 1`.
    pub gamma_star: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    /// Certified lower end of the least common denominator, used as `D`.
    pub big_d: Option<f64>,
    pub p_tau_d: Option<f64>,
    pub lambda_tau_d: Option<f64>,
    pub m_tau_d: Option<f64>,
    /// `Q(H^{p}, kappa)`, `Q(H^{lambda_1}, kappa)`, `Q(H^{p}, delta)` by
    /// shared-seed Monte Carlo.
    pub q_h_p_kappa: ConcentrationEstimate,
    pub q_h_lambda_kappa: ConcentrationEstimate,
    pub q_h_p_delta: ConcentrationEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub instance: String,
    pub q: ConcentrationEstimate,
    pub bounds: BoundMap,
    pub params: BoundParams,
    pub constants: ConstantsConfig,
    /// `lambda_1(tau / kappa) >= lambda_guard`, the regime of the
    /// `lambda`-forms.
    pub lambda_guard_ok: bool,
}

/// Evaluates every bound that the instance has parameters for.
pub fn bound_report(inputs: &BoundInputs, constants: &ConstantsConfig) -> Result<BoundReport> {
    constants.validate()?;
    let BoundInputs {
        x,
        a,
        tau,
        kappa,
        delta,
        ..
    } = inputs;
    let (tau, kappa, delta) = (*tau, *kappa, *delta);
    if !(tau > 0.0 && kappa > 0.0 && delta > 0.0) {
        return Err(domain("bounds: tau, kappa and delta must be positive"));
    }
    let (n, d) = (a.n(), a.dim());
    let q = concentration_of_sum(x, a, tau, inputs.budget, inputs.mc_samples, inputs.seed)?;
    let g = symmetrize(x);
    let p = tail_mass_p(&g, tau / kappa);
    let lambda1 = lambda_d(&g, tau / kappa, 1)?;
    let det_a = a.det_a();
    let c_d = constants.c_d;

    let mc = |b: f64, radius: f64| -> Result<ConcentrationEstimate> {
        mc_q(
            &Sampler::CompoundPoisson(h_power(a, b)?),
            radius,
            inputs.mc_samples,
            inputs.seed,
        )
    };
    let q_h_p_kappa = mc(p, kappa)?;
    let q_h_lambda_kappa = mc(lambda1, kappa)?;
    let q_h_p_delta = mc(p, delta)?;

    let (beta_star, gamma_star) = if d == 1 {
        let w = spectral_measure(a);
        let beta = beta_rm(
            &w,
            delta,
            inputs.r as usize,
            inputs.m,
            DEFAULT_SEARCH_BUDGET,
        )?;
        let gamma = gamma_rs(
            &w,
            delta,
            inputs.r as usize,
            inputs.s,
            DEFAULT_SEARCH_BUDGET,
        )?;
        (Some(beta.value), Some(gamma.value))
    } else {
        (None, None)
    };

    let qv = Some(q.value);
    let mut bounds = BoundMap::new();
    let mut put = |tag: &str, v: f64| {
        bounds.insert(tag.to_string(), BoundEntry::new(v, qv));
    };
    put("poisson_p", poisson_p_bound(q_h_p_kappa.value, c_d));
    put(
        "poisson_p_rescaled",
        poisson_p_rescaled_bound(q_h_p_delta.value, kappa, delta, d, c_d),
    );
    put(
        "poisson_lambda",
        poisson_lambda_bound(q_h_lambda_kappa.value, lambda1, c_d),
    );
    if let (Some(beta), Some(gamma)) = (beta_star, gamma_star) {
        let alpha_h = n as f64 * p / 2.0;
        let (r, m, s) = (inputs.r, inputs.m, inputs.s);
        put(
            "arak_beta",
            arak_beta_bound(alpha_h, beta, r, m, constants.c2),
        );
        put(
            "sum_beta_p",
            sum_beta_p_bound(kappa, delta, r, m, n, p, beta, constants.c3),
        );
        put(
            "sum_beta_lambda",
            sum_beta_lambda_bound(kappa, delta, r, m, n, beta, constants.c4),
        );
        put(
            "arak_gamma",
            arak_gamma_bound(alpha_h, gamma, r, s, constants.c5, constants.c6),
        );
        put(
            "sum_gamma_lambda",
            sum_gamma_lambda_bound(kappa, delta, r, s, n, gamma, constants.c7, constants.c8),
        );
    }

    let (mut big_d, mut p_tau_d, mut lambda_tau_d, mut m_tau_d) = (None, None, None, None);
    if let Some(params) = &inputs.lcd {
        let lcd = compute_lcd(a, params)?;
        let dd = lcd.d_lower;
        if dd > 0.0 {
            let rho = tau * dd;
            let (pd, ld, md) = (
                tail_mass_p(&g, rho),
                lambda_d(&g, rho, d as u32)?,
                truncated_second_moment(&g, rho)?,
            );
            let (gm, al) = (params.gamma, params.alpha);
            put("lcd", lcd_bound(inputs.b, gm, dd, al, det_a, d, c_d));
            put(
                "lcd_lambda",
                lcd_lambda_bound(ld, gm, dd, al, det_a, d, c_d),
            );
            put("lcd_p", lcd_p_bound(pd, gm, dd, al, det_a, d, c_d));
            put(
                "lcd_moment",
                lcd_moment_bound(md, gm, dd, al, det_a, d, c_d, constants.c_exp),
            );
            (big_d, p_tau_d, lambda_tau_d, m_tau_d) = (Some(dd), Some(pd), Some(ld), Some(md));
        }
    }

    Ok(BoundReport {
        instance: inputs.id.clone(),
        q,
        bounds,
        params: BoundParams {
            tau,
            kappa,
            delta,
            r: inputs.r,
            m: inputs.m,
            s: inputs.s,
            b: inputs.b,
            n,
            d,
            det_a,
            p,
            lambda1,
            beta_star,
            gamma_star,
            gamma: inputs.lcd.map(|l| l.gamma),
            alpha: inputs.lcd.map(|l| l.alpha),
            big_d,
            p_tau_d,
            lambda_tau_d,
            m_tau_d,
            q_h_p_kappa,
            q_h_lambda_kappa,
            q_h_p_delta,
        },
        constants: constants.clone(),
        lambda_guard_ok: lambda1 >= constants.lambda_guard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12 * (1.0 + b.abs())
    }

    #[test]
    fn arak_beta_examples() {
        assert!(close(arak_beta_bound(4.0, 1.0, 0, 1, 1.0), 1.0));
        assert!(close(
            arak_beta_bound(1.0, 1.0, 1, 2, 1.0),
            0.5 + 2f64.powf(2.5)
        ));
        assert!(arak_beta_bound(1e12, 1.0, 2, 3, 1.0) < 1e-5);
        assert_eq!(arak_beta_bound(1.0, 0.0, 1, 2, 1.0), f64::INFINITY);
    }

    #[test]
    fn sum_beta_p_examples() {
        // n p beta = 4, r = 0, m = 1, kappa = delta
        assert!(close(
            sum_beta_p_bound(1.0, 1.0, 0, 1, 4, 1.0, 1.0, 1.0),
            2.0
        ));
        let small = sum_beta_p_bound(1.0, 1.0, 0, 1, 4_000_000, 0.5, 0.5, 1.0);
        assert!(close(small, 0.004));
        assert_eq!(
            sum_beta_p_bound(1.0, 1.0, 0, 1, 4, 0.0, 1.0, 1.0),
            f64::INFINITY
        );
    }

    #[test]
    fn arak_gamma_examples() {
        let (s, ag) = (3usize, 2.0f64);
        let expect = 1.0 / (s as f64 * ag.sqrt()) + 1.0 / ag.sqrt();
        assert!(close(arak_gamma_bound(2.0, 1.0, 0, s, 1.0, 7.0), expect));
        assert_eq!(arak_gamma_bound(2.0, 0.0, 0, s, 1.0, 1.0), f64::INFINITY);
        let big_s = arak_gamma_bound(2.0, 1.0, 0, 1_000_000, 1.0, 1.0);
        assert!(close(big_s, 1.0 / 1e6 / ag.sqrt() + 1.0 / ag.sqrt()));
    }

    #[test]
    fn lambda_forms_match_p_forms() {
        assert!(close(
            sum_beta_lambda_bound(2.0, 1.0, 1, 3, 10, 0.5, 1.0),
            sum_beta_p_bound(2.0, 1.0, 1, 3, 10, 1.0, 0.5, 1.0)
        ));
        assert!(close(
            sum_gamma_lambda_bound(1.0, 1.0, 1, 5, 10, 0.5, 1.0, 1.0),
            2.0 * arak_gamma_bound(10.0, 0.5, 1, 5, 1.0, 1.0)
        ));
    }

    #[test]
    fn poisson_forms() {
        assert_eq!(
            poisson_lambda_bound(0.3, 1.0, 1.0),
            poisson_p_bound(0.3, 1.0)
        );
        assert_eq!(poisson_lambda_bound(0.3, 0.0, 1.0), f64::INFINITY);
        assert!(close(poisson_p_rescaled_bound(0.1, 2.0, 1.0, 2, 1.0), 0.9));
    }

    #[test]
    fn lcd_examples() {
        let v = lcd_bound(1.0, 0.5, 2.0, 1.0, 4.0, 1, 1.0);
        assert!(close(v, 0.5 + (-4f64).exp()));
        assert!(lcd_bound(1e10, 0.5, 2.0, 1.0, 1.0, 2, 1.0) < 1e-9);
        assert_eq!(lcd_bound(1.0, 0.5, 2.0, 1.0, 0.0, 1, 1.0), f64::INFINITY);
    }

    #[test]
    fn moment_form_never_exceeds_p_form() {
        for (p, m) in [(0.1, 0.3), (0.5, 0.5), (0.01, 0.02)] {
            for alpha in [0.1, 1.0, 3.0] {
                let lcd_p = lcd_p_bound(p, 0.5, 2.0, alpha, 2.0, 1, 1.0);
                let lcd_m = lcd_moment_bound(m, 0.5, 2.0, alpha, 2.0, 1, 1.0, 4.0);
                assert!(lcd_m <= lcd_p * (1.0 + 1e-15));
            }
        }
        // equal functionals give equal bounds
        assert_eq!(
            lcd_p_bound(0.4, 0.5, 2.0, 1.0, 2.0, 1, 1.0),
            lcd_moment_bound(0.4, 0.5, 2.0, 1.0, 2.0, 1, 1.0, 4.0)
        );
    }

    #[test]
    fn lambda_form_divides_by_lambda() {
        let l = 0.25;
        assert!(close(
            lcd_lambda_bound(l, 0.5, 2.0, 1.0, 2.0, 1, 1.0),
            lcd_bound(l, 0.5, 2.0, 1.0, 2.0, 1, 1.0) / l
        ));
    }

    #[test]
    fn chain_examples() {
        let a = WeightVector::from_scalars(&[1.0]).unwrap();
        let r = verify_pointwise_chain(
            &a,
            &[0.0, PI],
            Some(ChainLcd {
                gamma: 0.5,
                alpha: 1.0,
                big_d: 1.0,
            }),
        );
        assert!(r.holds(), "{r:?}");
        assert!(close(h_char_fn(&a, &[PI]), (-1f64).exp()));
        let scaled = dist_to_lattice(&[0.5]);
        assert!(close((-4.0 * scaled * scaled).exp(), (-1f64).exp()));
    }

    #[test]
    fn chain_flags_a_false_inequality() {
        // 1 - cos x >= x^2 / 2 fails, so a tighter claim must be caught
        assert!(!(1.0 - 1.0f64.cos() >= 0.5 - CHAIN_SLACK));
        assert!(cosine_inequality_holds(1.0));
        assert!(cosine_inequality_holds(PI));
    }

    #[test]
    fn constants_validation() {
        assert!(ConstantsConfig::default().validate().is_ok());
        let bad = ConstantsConfig {
            c2: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let parsed: std::result::Result<ConstantsConfig, _> = serde_json::from_str(r#"{"c99": 1}"#);
        assert!(parsed.is_err());
        let partial: ConstantsConfig = serde_json::from_str(r#"{"c3": 2.5}"#).unwrap();
        assert_eq!(partial.c3, 2.5);
        assert_eq!(partial.c_exp, 4.0);
    }

    #[test]
    fn inverse_report_for_integer_weights() {
        let a = WeightVector::from_scalars(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let inputs = InverseInputs {
            tau: 1.0,
            kappa: 1.0,
            delta: 1.0,
            r: 1,
            n_prime: None,
            witness_size: None,
            growth: Some((1.0, 0.0, 10.0)),
            rho: Some(1.0),
            mc_samples: 1000,
            seed: RngSeed(1),
        };
        let rep = inverse_principle_report(
            &DiscreteDistribution::rademacher(),
            &a,
            &inputs,
            &ConstantsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.q.method, crate::concentration::Method::Exact);
        assert_eq!(rep.witness.uncovered, 0);
        assert_eq!(rep.witness.rank, 1);
        assert!(rep.lambda1 >= rep.p);
    }

    #[test]
    fn zero_tail_mass_makes_p_budgets_vacuous() {
        let a = WeightVector::from_scalars(&[1.0, 1.0, 1.0]).unwrap();
        let inputs = InverseInputs {
            tau: 5.0,
            kappa: 1.0,
            delta: 1.0,
            r: 0,
            n_prime: None,
            witness_size: None,
            growth: None,
            rho: None,
            mc_samples: 1000,
            seed: RngSeed(1),
        };
        let rep = inverse_principle_report(
            &DiscreteDistribution::rademacher(),
            &a,
            &inputs,
            &ConstantsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.p, 0.0);
        assert!(rep.p_budgets.n_prime_upper.is_none());
        assert!(rep.lambda_budgets.n_prime_upper.is_some());
    }

    #[test]
    fn degenerate_weights_give_q_one() {
        let a = WeightVector::from_scalars(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let inputs = InverseInputs {
            tau: 1.0,
            kappa: 1.0,
            delta: 0.5,
            r: 0,
            n_prime: Some(4),
            witness_size: None,
            growth: None,
            rho: None,
            mc_samples: 1000,
            seed: RngSeed(1),
        };
        let rep = inverse_principle_report(
            &DiscreteDistribution::rademacher(),
            &a,
            &inputs,
            &ConstantsConfig::default(),
        )
        .unwrap();
        // the window of length 1 holds one of the two outcomes +-1 only
        assert_eq!(rep.q.value, 0.5);
        assert_eq!(rep.witness.rank, 1);
        assert_eq!(rep.witness.uncovered, 0);
        let rep = inverse_principle_report(
            &DiscreteDistribution::rademacher(),
            &a,
            &InverseInputs { tau: 2.0, ..inputs },
            &ConstantsConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.q.value, 1.0);
        assert!(rep.size_tv <= 1.0);
    }

    #[test]
    fn moment_form_finite_where_p_form_is_vacuous() {
        let g = symmetrize(&DiscreteDistribution::rademacher());
        let p = tail_mass_p(&g, 4.0);
        let m = truncated_second_moment(&g, 4.0).unwrap();
        assert_eq!(p, 0.0);
        assert!(close(m, 0.125));
        assert_eq!(lcd_p_bound(p, 0.5, 1.0, 1.0, 1.0, 1, 1.0), f64::INFINITY);
        assert!(lcd_moment_bound(m, 0.5, 1.0, 1.0, 1.0, 1, 1.0, 4.0).is_finite());
    }

    #[test]
    fn report_on_all_ones() {
        let inputs = BoundInputs {
            id: "ones4".into(),
            x: DiscreteDistribution::rademacher(),
            a: WeightVector::from_scalars(&[1.0; 4]).unwrap(),
            tau: 1.0,
            kappa: 1.0,
            delta: 1.0,
            r: 1,
            m: 5,
            s: 5,
            b: 1.0,
            lcd: Some(LcdParams::new(0.5, 10.0).unwrap()),
            mc_samples: 20_000,
            budget: DEFAULT_ENUMERATION_BUDGET,
            seed: RngSeed(3),
        };
        let rep = bound_report(&inputs, &ConstantsConfig::default()).unwrap();
        assert_eq!(rep.q.value, 6.0 / 16.0);
        assert!(rep.bounds.contains_key("sum_beta_p"));
        let lcd_p = &rep.bounds["lcd_p"];
        let lcd_m = &rep.bounds["lcd_moment"];
        if let (Some(a), Some(b)) = (lcd_p.value, lcd_m.value) {
            assert!(b <= a);
        }
        assert!((rep.params.big_d.unwrap() - 2.0 / 3.0).abs() < 1e-5);
        let again = bound_report(&inputs, &ConstantsConfig::default()).unwrap();
        assert_eq!(
            serde_json::to_string(&rep).unwrap(),
            serde_json::to_string(&again).unwrap()
        );
    }

    #[test]
    fn ratio_audit() {
        let a = audit_ratios(&[0.1, 0.5, 0.2, 0.4], 10.0);
        assert!(a.stable);
        assert_eq!((a.max_first, a.max_second), (0.5, 0.4));
        assert!(!audit_ratios(&[0.01, 0.5], 10.0).stable);
    }
}
