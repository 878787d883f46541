use anticonc::bounds::{
    bound_report, concentration_of_sum, fit_gap, BoundReport, ConstantsConfig, WitnessSummary,
};
use anticonc::concentration::{
    esseen_upper_q, exact_q_weighted, mc_q, weighted_sum_abs_char_fn, ConcentrationEstimate,
    EsseenOptions, Sampler, DEFAULT_ENUMERATION_BUDGET,
};
use anticonc::lcd::{compute_lcd, LcdResult};
use anticonc::RngSeed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::instance::InstanceSpec;

/// Schema version stamped on every report.
pub const SPEC_VERSION: &str = "1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum QMethod {
    Exact,
    Mc,
    Esseen,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by all subcommands.
#[derive(Clone, Debug)]
pub struct Common {
    pub seed: RngSeed,
    pub constants: ConstantsConfig,
    pub budget: Option<usize>,
}

impl Default for Common {
    fn default() -> Self {
        Self {
            seed: RngSeed(0),
            constants: ConstantsConfig::default(),
            budget: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct QOutput {
    pub spec_version: String,
    pub id: String,
    #[serde(flatten)]
    pub estimate: ConcentrationEstimate,
}

pub fn cmd_q(inst: &InstanceSpec, method: QMethod, common: &Common) -> Result<QOutput, CliError> {
    let x = inst.distribution()?;
    let a = inst.weight_vector()?;
    let tau = inst.tau()?;
    let budget = common.budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET);
    let seed = inst.seed(common.seed, 0);
    let estimate = match method {
        QMethod::Exact => exact_q_weighted(&x, &a, tau, budget)?,
        QMethod::Mc => mc_q(&Sampler::WeightedSum { x, a }, tau, inst.mc_samples(), seed)?,
        QMethod::Esseen => {
            let c = inst.constants(&common.constants)?;
            esseen_upper_q(
                |t| weighted_sum_abs_char_fn(&x, &a, t),
                tau,
                a.dim(),
                c.c_esseen,
                EsseenOptions::default(),
            )?
        }
    };
    Ok(QOutput {
        spec_version: SPEC_VERSION.into(),
        id: inst.id.clone(),
        estimate,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LcdOutput {
    pub spec_version: String,
    pub id: String,
    pub gamma: f64,
    pub alpha: f64,
    #[serde(flatten)]
    pub result: LcdResult,
}

pub fn cmd_lcd(inst: &InstanceSpec) -> Result<LcdOutput, CliError> {
    let params = inst.require_lcd_params()?;
    let result = compute_lcd(&inst.weight_vector()?, &params)?;
    Ok(LcdOutput {
        spec_version: SPEC_VERSION.into(),
        id: inst.id.clone(),
        gamma: params.gamma,
        alpha: params.alpha,
        result,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundsOutput {
    pub spec_version: String,
    pub reports: Vec<BoundReport>,
}

/// Bound reports for `instances` (already sorted by id), computed in
/// parallel with per-instance seeds derived from the master seed.
pub fn cmd_bounds(instances: &[InstanceSpec], common: &Common) -> Result<BoundsOutput, CliError> {
    let reports = instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| {
            let inputs = inst.bound_inputs(inst.seed(common.seed, i), common.budget)?;
            let constants = inst.constants(&common.constants)?;
            bound_report(&inputs, &constants).map_err(|e| {
                let e = CliError::from(e);
                match e {
                    CliError::Input(m) => CliError::Input(format!("instance `{}`: {m}", inst.id)),
                    other => other,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(BoundsOutput {
        spec_version: SPEC_VERSION.into(),
        reports,
    })
}

#[derive(Debug, Serialize)]
struct BoundRow<'a> {
    spec_version: &'a str,
    instance: &'a str,
    tag: &'a str,
    value: Option<f64>,
    vacuous: bool,
    ratio: Option<f64>,
    q: f64,
    q_method: &'a str,
    q_stderr: f64,
}

/// One CSV row per bound per instance.
pub fn bounds_csv(out: &BoundsOutput) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for rep in &out.reports {
        let method = match rep.q.method {
            anticonc::concentration::Method::Exact => "exact",
            anticonc::concentration::Method::MonteCarlo => "monte_carlo",
            anticonc::concentration::Method::EsseenUpper => "esseen_upper",
        };
        for (tag, entry) in &rep.bounds {
            w.serialize(BoundRow {
                spec_version: &out.spec_version,
                instance: &rep.instance,
                tag,
                value: entry.value,
                vacuous: entry.vacuous,
                ratio: entry.ratio,
                q: rep.q.value,
                q_method: method,
                q_stderr: rep.q.stderr,
            })
            .map_err(|e| CliError::input(e.to_string()))?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::input(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::input(e.to_string()))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapFitOutput {
    pub spec_version: String,
    pub id: String,
    pub delta: f64,
    pub r: u32,
    pub s: usize,
    pub q: ConcentrationEstimate,
    #[serde(flatten)]
    pub witness: WitnessSummary,
}

pub fn cmd_gapfit(inst: &InstanceSpec, common: &Common) -> Result<GapFitOutput, CliError> {
    let a = inst.weight_vector()?;
    let delta = inst.delta()?;
    let r = inst.r.unwrap_or(1);
    let s = inst.s.unwrap_or(2 * a.n() + 1);
    let witness = fit_gap(&a, delta, r, s)?;
    let q = concentration_of_sum(
        &inst.distribution()?,
        &a,
        inst.tau()?,
        common.budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET),
        inst.mc_samples(),
        inst.seed(common.seed, 0),
    )?;
    Ok(GapFitOutput {
        spec_version: SPEC_VERSION.into(),
        id: inst.id.clone(),
        delta,
        r,
        s,
        q,
        witness,
    })
}
