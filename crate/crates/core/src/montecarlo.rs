//! Repeated-trial experiments with normal-approximation confidence intervals,
//! and the spectrum comparison table built from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::instance::{sample_trial, FeatureLaw, ProblemInstance, ThetaStarMode};
use crate::spectrum::{self, Dim, SpectrumSpec};
use crate::stats;
use crate::trajectory::{self, RiskEvaluator, TrajectoryConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    OptimalRisk,
    MinNormRisk,
    ArgminT,
    FullCurve,
}

/// Step size and epoch grid shared by every trial of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectorySettings {
    /// Defaults to `1/(2Σλ)`.
    pub learning_rate: Option<f64>,
    pub points_per_decade: usize,
    /// Defaults to `100·n/lr`.
    pub t_max: Option<u64>,
    /// Replaces the geometric grid when set.
    pub t_grid: Option<Vec<u64>>,
    pub stability_c: f64,
    /// Also average the bias and variance quadratic forms into the curve.
    pub decomposition: bool,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        TrajectorySettings {
            learning_rate: None,
            points_per_decade: 20,
            t_max: None,
            t_grid: None,
            stability_c: trajectory::DEFAULT_STABILITY_C,
            decomposition: false,
        }
    }
}

impl TrajectorySettings {
    pub fn resolve(&self, spectrum: &spectrum::Spectrum, n: usize) -> Result<TrajectoryConfig> {
        let lr = self
            .learning_rate
            .unwrap_or_else(|| trajectory::default_learning_rate(spectrum));
        let cfg = match &self.t_grid {
            Some(grid) => TrajectoryConfig::explicit(lr, grid.clone())?,
            None => {
                let t_max = match self.t_max {
                    Some(t) => t,
                    None if lr > 0.0 => (100.0 * n as f64 / lr).ceil() as u64,
                    None => 0,
                };
                TrajectoryConfig::geometric(lr, self.points_per_decade, t_max)?
            }
        };
        cfg.check_stability(spectrum, self.stability_c)?;
        Ok(cfg.with_decomposition(self.decomposition))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub name: String,
    pub spectrum: SpectrumSpec,
    pub n: usize,
    pub p: usize,
    pub noise_sigma: f64,
    pub theta_star_mode: ThetaStarMode,
    pub feature_law: FeatureLaw,
    pub trials: usize,
    pub trajectory: TrajectorySettings,
    pub master_seed: u64,
    pub quantities: BTreeSet<Quantity>,
}

impl ExperimentPlan {
    /// Unit noise, harmonic `θ*`, Gaussian features, 1000 trials, and the
    /// optimal and min-norm risks.
    pub fn new(name: impl Into<String>, spectrum: SpectrumSpec, n: usize, p: usize) -> Self {
        ExperimentPlan {
            name: name.into(),
            spectrum,
            n,
            p,
            noise_sigma: 1.0,
            theta_star_mode: ThetaStarMode::default(),
            feature_law: FeatureLaw::default(),
            trials: 1000,
            trajectory: TrajectorySettings::default(),
            master_seed: 0,
            quantities: [Quantity::OptimalRisk, Quantity::MinNormRisk]
                .into_iter()
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.quantities.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one quantity must be requested".into(),
            ));
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<ProblemInstance> {
        let spectrum = self.spectrum.resolve(self.n, Dim::Finite(self.p))?;
        let p = spectrum.dim().finite().unwrap_or(self.p);
        let theta_star = self.theta_star_mode.build(p, self.master_seed);
        ProblemInstance::new(
            spectrum,
            self.n,
            theta_star,
            self.noise_sigma,
            self.feature_law,
        )
    }

    /// `{experiment_name}/{spectrum_id}_n{n}_p{p}`, without extension.
    pub fn file_stem(&self) -> PathBuf {
        Path::new(&self.name).join(format!("{}_n{}_p{}", self.spectrum.id(), self.n, self.p))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    /// Half-width of the normal-approximation 95% interval; 0 for one trial.
    pub half_width: f64,
    pub trials: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        Summary {
            mean: stats::mean(values),
            half_width: stats::ci95_half_width(values),
            trials: values.len(),
        }
    }

    pub fn overlaps(&self, other: &Summary) -> bool {
        self.mean - self.half_width <= other.mean + other.half_width
            && other.mean - other.half_width <= self.mean + self.half_width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSummary {
    pub t_grid: Vec<u64>,
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub bias_part: Option<Vec<f64>>,
    pub variance_part: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub name: String,
    pub spectrum_id: String,
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub learning_rate: f64,
    pub optimal_risk: Option<Summary>,
    pub min_norm_risk: Option<Summary>,
    pub argmin_t: Option<Summary>,
    pub curve: Option<CurveSummary>,
}

struct TrialOutcome {
    optimal: f64,
    min_norm: f64,
    argmin_t: u64,
    curve: Vec<f64>,
    bias: Vec<f64>,
    variance: Vec<f64>,
}

/// Runs every trial in parallel and folds the outcomes in trial order, so the
/// result does not depend on the worker count.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let inst = plan.instance()?;
    let cfg = plan.trajectory.resolve(inst.spectrum(), plan.n)?;
    let keep_curve = plan.quantities.contains(&Quantity::FullCurve);

    let outcomes: Vec<Result<TrialOutcome>> = (0..plan.trials as u64)
        .into_par_iter()
        .map(|trial| {
            let ds = sample_trial(&inst, plan.master_seed, trial)?;
            let eval =
                RiskEvaluator::new(&ds, inst.lambdas(), &inst.theta_star, cfg.learning_rate)?;
            let traj = trajectory::trajectory_from(&eval, &cfg);
            let keep = |v: Option<Vec<f64>>| {
                if keep_curve {
                    v.unwrap_or_default()
                } else {
                    Vec::new()
                }
            };
            Ok(TrialOutcome {
                optimal: traj.min_risk,
                min_norm: traj.min_norm_risk,
                argmin_t: traj.argmin_t,
                bias: keep(traj.bias_part),
                variance: keep(traj.variance_part),
                curve: keep(Some(traj.risk)),
            })
        })
        .collect();
    let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

    let pick = |q: Quantity, f: fn(&TrialOutcome) -> f64| {
        plan.quantities
            .contains(&q)
            .then(|| Summary::of(&outcomes.iter().map(f).collect::<Vec<_>>()))
    };
    let curve = keep_curve.then(|| {
        let mut column = vec![0.0; outcomes.len()];
        let (mut mean, mut half_width) = (Vec::new(), Vec::new());
        for j in 0..cfg.t_grid.len() {
            for (slot, o) in column.iter_mut().zip(&outcomes) {
                *slot = o.curve[j];
            }
            mean.push(stats::mean(&column));
            half_width.push(stats::ci95_half_width(&column));
        }
        let pointwise_mean = |f: fn(&TrialOutcome) -> &Vec<f64>| {
            (0..cfg.t_grid.len())
                .map(|j| stats::mean(&outcomes.iter().map(|o| f(o)[j]).collect::<Vec<_>>()))
                .collect::<Vec<f64>>()
        };
        let (bias_part, variance_part) = if cfg.decomposition {
            (
                Some(pointwise_mean(|o| &o.bias)),
                Some(pointwise_mean(|o| &o.variance)),
            )
        } else {
            (None, None)
        };
        CurveSummary {
            t_grid: cfg.t_grid.clone(),
            mean,
            half_width,
            bias_part,
            variance_part,
        }
    });
    Ok(ExperimentResult {
        name: plan.name.clone(),
        spectrum_id: plan.spectrum.id(),
        n: plan.n,
        p: inst.p,
        trials: plan.trials,
        master_seed: plan.master_seed,
        learning_rate: cfg.learning_rate,
        optimal_risk: pick(Quantity::OptimalRisk, |o| o.optimal),
        min_norm_risk: pick(Quantity::MinNormRisk, |o| o.min_norm),
        argmin_t: pick(Quantity::ArgminT, |o| o.argmin_t as f64),
        curve,
    })
}

/// Writes `<stem>.json` (full result) and, when a curve was requested,
/// `<stem>.csv` with columns `t, mean_risk, ci_half_width` and, with the
/// decomposition, `bias_part, variance_part`.
pub fn write_result(
    out_dir: &Path,
    plan: &ExperimentPlan,
    result: &ExperimentResult,
) -> Result<Vec<PathBuf>> {
    let stem = out_dir.join(plan.file_stem());
    if let Some(parent) = stem.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut written = Vec::new();
    let json = stem.with_extension("json");
    fs::write(&json, serde_json::to_string_pretty(result)?)?;
    written.push(json);
    if let Some(curve) = &result.curve {
        let csv_path = stem.with_extension("csv");
        let mut w = csv::Writer::from_path(&csv_path)?;
        let mut header = vec!["t", "mean_risk", "ci_half_width"];
        if curve.bias_part.is_some() {
            header.extend(["bias_part", "variance_part"]);
        }
        w.write_record(&header)?;
        for j in 0..curve.t_grid.len() {
            let mut rec = vec![
                curve.t_grid[j].to_string(),
                curve.mean[j].to_string(),
                curve.half_width[j].to_string(),
            ];
            if let (Some(b), Some(v)) = (&curve.bias_part, &curve.variance_part) {
                rec.extend([b[j].to_string(), v[j].to_string()]);
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        written.push(csv_path);
    }
    Ok(written)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub formula: String,
    pub spectrum_id: String,
    pub k1: usize,
    pub k1_order: String,
    /// Log-log slope of `k1(n)` over `n ∈ {10², …, 10⁴}`.
    pub k1_slope: Option<f64>,
    pub optimal: Summary,
    pub min_norm: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Table {
    pub n: usize,
    pub p: usize,
    pub rows: Vec<TableRow>,
}

/// Dimension used for the `k1` slope fit: infinite when summable, otherwise
/// ten times the largest grid size.
fn fit_dim(spec: &SpectrumSpec, n_max: usize) -> Dim {
    match spec {
        SpectrumSpec::InvPoly { alpha } if *alpha > 1.0 => Dim::Infinite,
        SpectrumSpec::InvLogPoly { beta } if *beta > 1.0 => Dim::Infinite,
        _ => Dim::Finite(10 * n_max),
    }
}

/// One row per plan, in plan order. All plans must share `n` and `p`.
pub fn table_report(plans: &[ExperimentPlan]) -> Result<Table> {
    let Some(first) = plans.first() else {
        return Ok(Table::default());
    };
    if let Some(bad) = plans.iter().find(|pl| pl.n != first.n || pl.p != first.p) {
        return Err(Error::InvalidArgument(format!(
            "table rows must share n and p: ({}, {}) vs ({}, {})",
            first.n, first.p, bad.n, bad.p
        )));
    }
    let n_grid = stats::half_decade_grid(2.0, 4.0);
    let mut rows = Vec::with_capacity(plans.len());
    for plan in plans {
        let mut plan = plan.clone();
        plan.quantities.insert(Quantity::OptimalRisk);
        plan.quantities.insert(Quantity::MinNormRisk);
        let result = run_experiment(&plan)?;
        let inst_spectrum = plan.spectrum.resolve(plan.n, Dim::Finite(plan.p))?;
        let k1 = spectrum::k1_dim(&inst_spectrum, plan.n, 1.0)?;
        let dim = fit_dim(&plan.spectrum, *n_grid.last().unwrap());
        let rate = spectrum::rate_table(&plan.spectrum, dim, &n_grid, 1.0, 1.0)?;
        rows.push(TableRow {
            formula: plan.spectrum.formula(),
            spectrum_id: plan.spectrum.id(),
            k1,
            k1_order: plan.spectrum.k1_order(),
            k1_slope: spectrum::rate_slopes(&rate).1,
            optimal: result.optimal_risk.expect("requested"),
            min_norm: result.min_norm_risk.expect("requested"),
        });
    }
    Ok(Table {
        n: first.n,
        p: first.p,
        rows,
    })
}

const TABLE_HEADER: [&str; 9] = [
    "formula",
    "k1",
    "k1_order",
    "k1_slope",
    "optimal_risk",
    "optimal_ci",
    "min_norm_risk",
    "min_norm_ci",
    "trials",
];

fn slope_cell(s: Option<f64>) -> String {
    s.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.formula.clone(),
                r.k1.to_string(),
                r.k1_order.clone(),
                r.k1_slope.map_or_else(String::new, |v| v.to_string()),
                r.optimal.mean.to_string(),
                r.optimal.half_width.to_string(),
                r.min_norm.mean.to_string(),
                r.min_norm.half_width.to_string(),
                r.optimal.trials.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Column-aligned plain text.
    pub fn to_text(&self) -> String {
        let header = ["spectrum", "k1", "order", "slope", "optimal", "min-norm"];
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.formula.clone(),
                    r.k1.to_string(),
                    r.k1_order.clone(),
                    slope_cell(r.k1_slope),
                    format!("{:.4} ± {:.4}", r.optimal.mean, r.optimal.half_width),
                    format!("{:.3} ± {:.3}", r.min_norm.mean, r.min_norm.half_width),
                ]
            })
            .collect();
        let mut widths = header.map(|h| h.chars().count());
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let mut line = |items: Vec<&str>| {
            let padded: Vec<String> = items
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            let _ = writeln!(out, "{}", padded.join("  ").trim_end());
        };
        line(header.to_vec());
        for row in &cells {
            line(row.iter().map(String::as_str).collect());
        }
        out
    }
}

/// Rates of the bound minimum and comparison bounds for each family, as JSON-ready rows.
pub fn bound_rate_table(
    specs: &[SpectrumSpec],
    params: bounds::BoundParams,
    ctn: bounds::CtnStrategy,
) -> Result<Vec<bounds::RateFit>> {
    let n_grid = stats::half_decade_grid(2.0, 4.0);
    specs
        .iter()
        .map(|s| bounds::rate_fit(s, &n_grid, params, ctn))
        .collect()
}
