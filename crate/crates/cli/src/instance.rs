use std::fs;
use std::path::{Path, PathBuf};

use anticonc::bounds::{BoundInputs, ConstantsConfig};
use anticonc::concentration::DEFAULT_ENUMERATION_BUDGET;
use anticonc::distributions::DiscreteDistribution;
use anticonc::lcd::LcdParams;
use anticonc::{RngSeed, WeightVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Monte Carlo sample count for `Q(H^b, .)` when the instance gives none.
pub const DEFAULT_MC_SAMPLES: usize = 500_000;

/// A distribution given either by shorthand (`"rademacher"`,
/// `"bernoulli(0.3)"`, `"uniform{-1,0,1}"`) or by atoms and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistributionSpec {
    Shorthand(String),
    Explicit { atoms: Vec<f64>, weights: Vec<f64> },
}

impl DistributionSpec {
    pub fn build(&self) -> Result<DiscreteDistribution, CliError> {
        let d = match self {
            DistributionSpec::Shorthand(s) => DiscreteDistribution::from_shorthand(s),
            DistributionSpec::Explicit { atoms, weights } => {
                DiscreteDistribution::from_flat(1, atoms.clone(), weights.clone(), true)
            }
        };
        d.map_err(|e| CliError::input(format!("distribution: {e}")))
    }
}

/// Values a corpus instance is expected to reproduce.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    /// Exact `Q(F_a, tau)`.
    pub q: Option<f64>,
    /// A value inside the least-common-denominator bracket.
    pub lcd: Option<f64>,
    /// Absolute tolerance of both comparisons.
    #[serde(default = "default_expected_tol")]
    pub tol: f64,
}

fn default_expected_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub id: String,
    pub distribution: DistributionSpec,
    pub weights: Vec<Vec<f64>>,
    pub tau: f64,
    pub kappa: Option<f64>,
    pub delta: Option<f64>,
    pub r: Option<u32>,
    pub m: Option<usize>,
    pub s: Option<usize>,
    pub b: Option<f64>,
    pub gamma: Option<f64>,
    pub alpha: Option<f64>,
    pub theta_max: Option<f64>,
    /// Bracket width of the least-common-denominator search.
    pub lcd_tol: Option<f64>,
    pub seed: Option<u64>,
    pub mc_samples: Option<usize>,
    pub constants: Option<ConstantsConfig>,
    pub expected: Option<Expected>,
}

/// Parses one instance, naming the offending field on failure.
pub fn parse_instance(text: &str, origin: &str) -> Result<InstanceSpec, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::input(format!("{origin}: field `{path}`: {}", e.inner()))
    })
}

/// Parses a file holding either one instance or an array of them.
pub fn load_instances(path: &Path) -> Result<Vec<InstanceSpec>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let origin = path.display().to_string();
    if text.trim_start().starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| CliError::input(format!("{origin}: {e}")))?;
        values
            .iter()
            .enumerate()
            .map(|(i, v)| parse_instance(&v.to_string(), &format!("{origin}[{i}]")))
            .collect()
    } else {
        Ok(vec![parse_instance(&text, &origin)?])
    }
}

/// Instances of every `*.json` file in `dir`, sorted by id.
pub fn load_corpus(dir: &Path) -> Result<Vec<InstanceSpec>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in &files {
        all.extend(load_instances(f)?);
    }
    sort_and_check_ids(&mut all)?;
    Ok(all)
}

pub fn sort_and_check_ids(instances: &mut [InstanceSpec]) -> Result<(), CliError> {
    instances.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = instances.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(CliError::input(format!(
            "duplicate instance id `{}`",
            w[0].id
        )));
    }
    Ok(())
}

fn require<T: Copy>(v: Option<T>, field: &str, id: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::input(format!("instance `{id}`: field `{field}` is required")))
}

fn positive(v: f64, field: &str, id: &str) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::input(format!(
            "instance `{id}`: field `{field}` must be positive, got {v}"
        )))
    }
}

impl InstanceSpec {
    pub fn distribution(&self) -> Result<DiscreteDistribution, CliError> {
        self.distribution.build()
    }

    pub fn weight_vector(&self) -> Result<WeightVector, CliError> {
        WeightVector::new(self.weights.clone())
            .map_err(|e| CliError::input(format!("instance `{}`: field `weights`: {e}", self.id)))
    }

    pub fn tau(&self) -> Result<f64, CliError> {
        if self.tau >= 0.0 && self.tau.is_finite() {
            Ok(self.tau)
        } else {
            Err(CliError::input(format!(
                "instance `{}`: field `tau` must be >= 0",
                self.id
            )))
        }
    }

    pub fn kappa(&self) -> Result<f64, CliError> {
        positive(self.kappa.unwrap_or(self.tau), "kappa", &self.id)
    }

    pub fn delta(&self) -> Result<f64, CliError> {
        positive(self.delta.unwrap_or(self.tau), "delta", &self.id)
    }

    /// Instance seed if present, else one derived from the master seed.
    pub fn seed(&self, master: RngSeed, index: usize) -> RngSeed {
        self.seed
            .map_or_else(|| master.derive(index as u64), RngSeed)
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples.unwrap_or(DEFAULT_MC_SAMPLES)
    }

    pub fn lcd_params(&self) -> Result<Option<LcdParams>, CliError> {
        let (Some(gamma), Some(alpha)) = (self.gamma, self.alpha) else {
            return Ok(None);
        };
        let mut p = LcdParams::new(gamma, alpha)
            .map_err(|e| CliError::input(format!("instance `{}`: {e}", self.id)))?;
        if let Some(t) = self.theta_max {
            p = p
                .with_theta_max(t)
                .map_err(|e| CliError::input(format!("instance `{}`: {e}", self.id)))?;
        }
        if let Some(t) = self.lcd_tol {
            p = p
                .with_tol(t)
                .map_err(|e| CliError::input(format!("instance `{}`: {e}", self.id)))?;
        }
        Ok(Some(p))
    }

    pub fn require_lcd_params(&self) -> Result<LcdParams, CliError> {
        require(self.gamma, "gamma", &self.id)?;
        require(self.alpha, "alpha", &self.id)?;
        Ok(self.lcd_params()?.expect("gamma and alpha are present"))
    }

    /// A table given on the instance replaces the global one.
    pub fn constants(&self, global: &ConstantsConfig) -> Result<ConstantsConfig, CliError> {
        let c = self.constants.clone().unwrap_or_else(|| global.clone());
        c.validate()
            .map_err(|e| CliError::input(format!("instance `{}`: {e}", self.id)))?;
        Ok(c)
    }

    pub fn bound_inputs(
        &self,
        seed: RngSeed,
        budget: Option<usize>,
    ) -> Result<BoundInputs, CliError> {
        let a = self.weight_vector()?;
        let n = a.n();
        Ok(BoundInputs {
            id: self.id.clone(),
            x: self.distribution()?,
            a,
            tau: positive(self.tau, "tau", &self.id)?,
            kappa: self.kappa()?,
            delta: self.delta()?,
            r: self.r.unwrap_or(1),
            m: self.m.unwrap_or(2 * n + 1),
            s: self.s.unwrap_or(2 * n + 1),
            b: self.b.unwrap_or(1.0),
            lcd: self.lcd_params()?,
            mc_samples: self.mc_samples(),
            budget: budget.unwrap_or(DEFAULT_ENUMERATION_BUDGET),
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shorthand_and_explicit() {
        let i = parse_instance(
            r#"{"id":"a","distribution":"rademacher","weights":[[1],[2]],"tau":1}"#,
            "t",
        )
        .unwrap();
        assert_eq!(
            i.distribution().unwrap(),
            DiscreteDistribution::rademacher()
        );
        let j = parse_instance(
            r#"{"id":"b","distribution":{"atoms":[0,1],"weights":[0.5,0.5]},"weights":[[1]],"tau":0}"#,
            "t",
        )
        .unwrap();
        assert_eq!(j.distribution().unwrap().len(), 2);
    }

    #[test]
    fn errors_name_the_field() {
        let e = parse_instance(
            r#"{"id":"a","distribution":"rademacher","weights":[[1]],"tau":"x"}"#,
            "t",
        )
        .unwrap_err();
        assert!(e.to_string().contains("`tau`"), "{e}");
        let e = parse_instance(
            r#"{"id":"a","distribution":"rademacher","weights":[[1]]}"#,
            "t",
        )
        .unwrap_err();
        assert!(e.to_string().contains("tau"), "{e}");
        let e = parse_instance(
            r#"{"id":"a","distribution":"rademacher","weights":[[1]],"tau":1,"tua":2}"#,
            "t",
        )
        .unwrap_err();
        assert!(e.to_string().contains("tua"), "{e}");
    }
}
