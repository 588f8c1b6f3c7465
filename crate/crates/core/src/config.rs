//! TOML run configuration with one section per command, plus flat
//! `section.key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundParams, CtnStrategy};
use crate::error::{Error, Result};
use crate::instance::{FeatureLaw, ThetaStarMode};
use crate::montecarlo::{ExperimentPlan, Quantity, TrajectorySettings};
use crate::spectrum::{spec_from_parts, Dim, SpectrumSpec};
use crate::stats;
use crate::verify::VerifyConfig;

/// A spectrum family with its shape parameters, as written in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyEntry {
    pub family: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub r: Option<f64>,
    pub q: Option<f64>,
    pub values: Option<Vec<f64>>,
}

impl FamilyEntry {
    pub fn named(family: &str) -> Self {
        FamilyEntry {
            family: family.into(),
            alpha: None,
            beta: None,
            epsilon: None,
            r: None,
            q: None,
            values: None,
        }
    }

    pub fn spec(&self) -> Result<SpectrumSpec> {
        let param = |name: &str| match name {
            "alpha" => self.alpha,
            "beta" => self.beta,
            "epsilon" => self.epsilon,
            "r" => self.r,
            "q" => self.q,
            _ => None,
        };
        spec_from_parts(&self.family, param, self.values.clone())
    }
}

fn poly(alpha: f64) -> FamilyEntry {
    FamilyEntry {
        alpha: Some(alpha),
        ..FamilyEntry::named("inv_poly")
    }
}

fn log_poly(beta: f64) -> FamilyEntry {
    FamilyEntry {
        beta: Some(beta),
        ..FamilyEntry::named("inv_log_poly")
    }
}

/// `p` as an integer or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DimSetting {
    Finite(usize),
    Named(String),
}

impl DimSetting {
    pub fn dim(&self) -> Result<Dim> {
        match self {
            DimSetting::Finite(p) => Ok(Dim::Finite(*p)),
            DimSetting::Named(s) if s == "inf" || s == "infinite" => Ok(Dim::Infinite),
            DimSetting::Named(s) => Err(Error::Config(format!(
                "p must be an integer or \"inf\", got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub family: String,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub epsilon: Option<f64>,
    pub r: Option<f64>,
    pub q: Option<f64>,
    pub values: Option<Vec<f64>>,
    pub n_grid: Vec<usize>,
    /// Dimension for the rate table; summable families default to infinite.
    pub p: Option<DimSetting>,
    pub c0: f64,
    pub c1: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            family: "inv_poly".into(),
            alpha: Some(2.0),
            beta: None,
            epsilon: None,
            r: None,
            q: None,
            values: None,
            n_grid: stats::half_decade_grid(2.0, 4.0),
            p: None,
            c0: 1.0,
            c1: 1.0,
        }
    }
}

impl SpectrumSection {
    pub fn entry(&self) -> FamilyEntry {
        FamilyEntry {
            family: self.family.clone(),
            alpha: self.alpha,
            beta: self.beta,
            epsilon: self.epsilon,
            r: self.r,
            q: self.q,
            values: self.values.clone(),
        }
    }

    pub fn spec(&self) -> Result<SpectrumSpec> {
        self.entry().spec()
    }

    pub fn rate_dim(&self, spec: &SpectrumSpec) -> Result<Dim> {
        if let Some(p) = &self.p {
            return p.dim();
        }
        let summable = match spec {
            SpectrumSpec::InvPoly { alpha } => *alpha > 1.0,
            SpectrumSpec::InvLogPoly { beta } => *beta > 1.0,
            _ => false,
        };
        let n_max = self.n_grid.iter().copied().max().unwrap_or(1);
        Ok(if summable {
            Dim::Infinite
        } else {
            Dim::Finite(10 * n_max)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InstanceSection {
    pub n: usize,
    pub p: usize,
    pub noise_sigma: f64,
    pub theta_star_mode: ThetaStarMode,
    pub feature_law: FeatureLaw,
    pub master_seed: u64,
    pub trials: usize,
}

impl Default for InstanceSection {
    fn default() -> Self {
        InstanceSection {
            n: 100,
            p: 1000,
            noise_sigma: 1.0,
            theta_star_mode: ThetaStarMode::default(),
            feature_law: FeatureLaw::default(),
            master_seed: 0,
            trials: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub delta: f64,
    /// Defaults to the instance's noise level.
    pub sigma_y: Option<f64>,
    /// Defaults to `‖θ*‖`.
    pub theta_norm: Option<f64>,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub bias_multiplier: f64,
    pub variance_multiplier: f64,
    pub ctn: CtnStrategy,
    /// Defaults to 50 points per decade up to `10⁴·n/lr`.
    pub t_grid: Option<Vec<u64>>,
    pub learning_rate: Option<f64>,
    /// Families for the rate table; defaults to the `[spectrum]` family.
    pub families: Vec<FamilyEntry>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let d = BoundParams::default();
        BoundsSection {
            delta: d.delta,
            sigma_y: None,
            theta_norm: None,
            c0: d.c0,
            c1: d.c1,
            c2: d.c2,
            bias_multiplier: d.bias_multiplier,
            variance_multiplier: d.variance_multiplier,
            ctn: CtnStrategy::Constant(1.0),
            t_grid: None,
            learning_rate: None,
            families: Vec::new(),
        }
    }
}

impl BoundsSection {
    pub fn params(&self, sigma_y: f64, theta_norm: f64) -> BoundParams {
        BoundParams {
            delta: self.delta,
            sigma_y: self.sigma_y.unwrap_or(sigma_y),
            theta_norm: self.theta_norm.unwrap_or(theta_norm),
            c0: self.c0,
            c1: self.c1,
            c2: self.c2,
            bias_multiplier: self.bias_multiplier,
            variance_multiplier: self.variance_multiplier,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSection {
    pub name: String,
    pub families: Vec<FamilyEntry>,
    /// Defaults to the instance's trial count.
    pub trials: Option<usize>,
}

impl Default for TableSection {
    fn default() -> Self {
        TableSection {
            name: "table".into(),
            families: vec![
                poly(1.0),
                poly(2.0),
                poly(3.0),
                log_poly(1.0),
                log_poly(2.0),
                log_poly(3.0),
            ],
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub n_grid: Vec<usize>,
    /// `p = p_factor · n` at every grid point.
    pub p_factor: usize,
    pub threshold: f64,
    pub trials: Option<usize>,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            n_grid: vec![50, 100, 200],
            p_factor: 10,
            threshold: 0.1,
            trials: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub spectrum: SpectrumSection,
    pub instance: InstanceSection,
    pub trajectory: TrajectorySettings,
    pub bounds: BoundsSection,
    pub table: TableSection,
    pub scan: ScanSection,
    pub verify: VerifyConfig,
}

/// Parses the right-hand side of an override as a TOML value, falling back to
/// a bare string.
fn parse_override_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

/// Applies `section.key=value` (any depth of dotted keys) to a raw table.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!(
            "override `{assignment}` is not of the form section.key=value"
        ))
    })?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.len() < 2 || keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!(
            "override key `{path}` must look like section.key"
        )));
    }
    let mut table = root;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::Config(format!(
                "override path `{path}` crosses non-table key `{key}`"
            ))
        })?;
    }
    table.insert(
        keys[keys.len() - 1].to_string(),
        parse_override_value(raw.trim()),
    );
    Ok(())
}

impl Config {
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut root: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut root, o)?;
        }
        toml::Value::Table(root)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    /// Reads `path` when given, otherwise starts from the defaults.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// Experiment plan for one spectrum at the instance's size.
    pub fn plan(
        &self,
        name: &str,
        spec: SpectrumSpec,
        n: usize,
        p: usize,
        trials: usize,
    ) -> ExperimentPlan {
        let mut plan = ExperimentPlan::new(name, spec, n, p);
        plan.noise_sigma = self.instance.noise_sigma;
        plan.theta_star_mode = self.instance.theta_star_mode;
        plan.feature_law = self.instance.feature_law;
        plan.master_seed = self.instance.master_seed;
        plan.trials = trials;
        plan.trajectory = self.trajectory.clone();
        plan.quantities = [Quantity::OptimalRisk, Quantity::MinNormRisk]
            .into_iter()
            .collect();
        plan
    }

    pub fn table_plans(&self) -> Result<Vec<ExperimentPlan>> {
        let trials = self.table.trials.unwrap_or(self.instance.trials);
        self.table
            .families
            .iter()
            .map(|f| {
                Ok(self.plan(
                    &self.table.name,
                    f.spec()?,
                    self.instance.n,
                    self.instance.p,
                    trials,
                ))
            })
            .collect()
    }
}
