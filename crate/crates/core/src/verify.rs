//! Cross-checks between independent computations: closed form against literal
//! iteration, the pseudo-inverse identities, the bias/variance decomposition,
//! the spectral inequality `σ(1−σ)^t ≤ 1/t`, and exact risk against fresh samples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds;
use crate::error::{Error, Result};
use crate::instance::{
    exact_risk, sample_dataset, FeatureLaw, ProblemInstance, SampledDataset, ThetaStarMode,
};
use crate::linalg::max_abs;
use crate::spectrum::{Dim, Spectrum};
use crate::trajectory::{self, closed_form_theta, gd_iterative};

pub const CHECK_NAMES: [&str; 5] = [
    "closed_form",
    "identities",
    "decomposition",
    "spectral_grid",
    "risk_monte_carlo",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    pub checks: Vec<String>,
    pub seed: u64,
    /// Multiplies every step size; values above one probe the stability guards.
    pub lr_scale: f64,
    pub closed_form_instances: usize,
    pub closed_form_steps: u64,
    pub identity_instances: usize,
    pub identity_epochs: Vec<u64>,
    pub grid_points: usize,
    pub grid_max_t: u64,
    pub mc_samples: usize,
    pub mc_thetas: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            checks: CHECK_NAMES.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            lr_scale: 1.0,
            closed_form_instances: 50,
            closed_form_steps: 500,
            identity_instances: 100,
            identity_epochs: vec![0, 1, 2, 5, 10, 50],
            grid_points: 100_000,
            grid_max_t: 1000,
            mc_samples: 1_000_000,
            mc_thetas: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub tolerance: f64,
    pub observed: f64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_text(&self) -> String {
        if self.checks.is_empty() {
            return "warning: 0 checks requested\n".into();
        }
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{:<5} {:<17} observed {:<12.4e} tolerance {:<10.1e} {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.observed,
                c.tolerance,
                c.detail
            ));
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        out.push_str(&format!(
            "{} checks, {} failed\n",
            self.checks.len(),
            failed
        ));
        out
    }
}

/// Runs the requested checks in order. A check whose computation errors is
/// reported as failed with the error text.
pub fn run_checks(cfg: &VerifyConfig) -> Result<VerifyReport> {
    if !(cfg.lr_scale > 0.0) {
        return Err(Error::InvalidArgument("lr_scale must be positive".into()));
    }
    let mut report = VerifyReport::default();
    for name in &cfg.checks {
        let (tolerance, outcome) = match name.as_str() {
            "closed_form" => (1e-8, closed_form_gap(cfg)),
            "identities" => (1e-9, identity_gap(cfg)),
            "decomposition" => (0.0, decomposition_excess(cfg)),
            "spectral_grid" => (1.0, spectral_grid(cfg.grid_points, cfg.grid_max_t)),
            "risk_monte_carlo" => (0.01, risk_monte_carlo(cfg)),
            other => {
                return Err(Error::Config(format!(
                    "unknown check `{other}`; valid checks are: {}",
                    CHECK_NAMES.join(", ")
                )))
            }
        };
        report.checks.push(match outcome {
            Ok((observed, detail)) => CheckResult {
                name: name.clone(),
                tolerance,
                observed,
                passed: observed <= tolerance,
                detail,
            },
            Err(e) => CheckResult {
                name: name.clone(),
                tolerance,
                observed: f64::NAN,
                passed: false,
                detail: e.to_string(),
            },
        });
    }
    Ok(report)
}

/// Random overparameterized instance with `n ≤ max_n`, `p ≤ max_p`, an
/// inverse-polynomial spectrum and a random `θ*`.
pub fn random_instance(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_p: usize,
) -> Result<(ProblemInstance, SampledDataset)> {
    let n = rng.random_range(2..=max_n);
    let p = rng.random_range(n + 1..=max_p);
    let alpha = rng.random_range(0.5..3.0);
    let spectrum = Spectrum::inverse_polynomial(alpha, Dim::Finite(p))?;
    let theta_star = ThetaStarMode::Isotropic { norm: 1.0 }.build(p, rng.random());
    let inst = ProblemInstance::new(spectrum, n, theta_star, 0.5, FeatureLaw::Gaussian)?;
    let ds = sample_dataset(&inst, rng.random())?;
    Ok((inst, ds))
}

/// `1/(2Σλ)` capped at `n/(2μ_1)`: tiny samples can violate the trace-based
/// ceiling, which only controls `μ_1/n` with high probability for large `n`.
fn scaled_lr(inst: &ProblemInstance, ds: &SampledDataset, cfg: &VerifyConfig) -> f64 {
    let cap = 0.5 * ds.n() as f64 / ds.svd.mu[0];
    trajectory::default_learning_rate(inst.spectrum()).min(cap) * cfg.lr_scale
}

/// Largest entry-wise gap between the closed form and the literal recursion
/// over every epoch.
pub fn closed_form_gap(cfg: &VerifyConfig) -> Result<(f64, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..cfg.closed_form_instances {
        let (inst, ds) = random_instance(&mut rng, 20, 50)?;
        let lr = scaled_lr(&inst, &ds, cfg);
        let path = gd_iterative(&ds, &DVector::zeros(ds.p()), lr, cfg.closed_form_steps)?;
        for (t, theta) in path.iter().enumerate() {
            let closed = closed_form_theta(&ds, lr, t as u64)?;
            worst = worst.max((closed - theta).amax());
        }
    }
    Ok((
        worst,
        format!(
            "{} instances, T = {}",
            cfg.closed_form_instances, cfg.closed_form_steps
        ),
    ))
}

fn matrix_power(m: &DMatrix<f64>, t: u64) -> DMatrix<f64> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..t {
        out = &out * m;
    }
    out
}

/// Both pseudo-inverse identities, with `X†` from an SVD pseudo-inverse and the
/// matrix powers by repeated multiplication.
pub fn identity_gap(cfg: &VerifyConfig) -> Result<(f64, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x1d);
    let mut worst = 0.0f64;
    for _ in 0..cfg.identity_instances {
        let (inst, ds) = random_instance(&mut rng, 10, 20)?;
        let lr = scaled_lr(&inst, &ds, cfg);
        let (n, p) = (ds.n(), ds.p());
        let x = &ds.x;
        let pinv = x
            .clone()
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let proj = &pinv * x;
        let step_p = DMatrix::identity(p, p) - x.transpose() * x * (lr / n as f64);
        let step_n = DMatrix::identity(n, n) - x * x.transpose() * (lr / n as f64);
        for &t in &cfg.identity_epochs {
            let pow_p = matrix_power(&step_p, t);
            let pow_n = matrix_power(&step_n, t);
            let lhs1 = DMatrix::identity(p, p) - &proj + &pow_p * &proj;
            worst = worst.max(max_abs(&(lhs1 - &pow_p)));
            let lhs2 = (DMatrix::identity(p, p) - &pow_p) * &proj * x.transpose();
            let rhs2 = x.transpose() * (DMatrix::identity(n, n) - pow_n);
            worst = worst.max(max_abs(&(lhs2 - rhs2)));
        }
    }
    Ok((
        worst,
        format!(
            "{} instances, t in {:?}",
            cfg.identity_instances, cfg.identity_epochs
        ),
    ))
}

/// Largest `R(θ_t) − (θ*ᵀBθ* + εᵀCε)` with `θ_t` from the literal recursion;
/// non-positive when the decomposition bound holds everywhere.
pub fn decomposition_excess(cfg: &VerifyConfig) -> Result<(f64, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x2e);
    let mut worst = f64::NEG_INFINITY;
    let t_max = cfg.identity_epochs.iter().copied().max().unwrap_or(0);
    for _ in 0..cfg.identity_instances {
        let (inst, ds) = random_instance(&mut rng, 10, 20)?;
        let lr = scaled_lr(&inst, &ds, cfg);
        let path = gd_iterative(&ds, &DVector::zeros(ds.p()), lr, t_max)?;
        for &t in &cfg.identity_epochs {
            let risk = exact_risk(inst.spectrum(), &path[t as usize], &inst.theta_star)?;
            let m = bounds::explicit_bc_matrices(&ds, inst.spectrum(), &inst.theta_star, lr, t)?;
            worst = worst.max(risk - (m.bias_value + m.variance_value));
        }
    }
    Ok((
        worst,
        format!(
            "max of R - (bias + variance) over {} instances",
            cfg.identity_instances
        ),
    ))
}

/// `max_t t · max_σ σ(1−σ)^t` over an evenly spaced grid on `[0, 1]`; the
/// inequality holds when this is at most one.
pub fn spectral_grid(points: usize, max_t: u64) -> Result<(f64, String)> {
    if points < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least two points".into(),
        ));
    }
    let sigmas: Vec<f64> = (0..points)
        .map(|k| k as f64 / (points - 1) as f64)
        .collect();
    let mut powers = vec![1.0f64; points];
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    for t in 1..=max_t {
        let mut peak = 0.0f64;
        for (pw, s) in powers.iter_mut().zip(&sigmas) {
            *pw *= 1.0 - s;
            peak = peak.max(s * *pw);
        }
        if peak > 1.0 / t as f64 {
            violations += 1;
        }
        worst = worst.max(peak * t as f64);
    }
    Ok((
        worst,
        format!("t = 1..{max_t}, {points} grid points, {violations} violations"),
    ))
}

/// Largest relative gap between `exact_risk` and the empirical risk over fresh
/// samples, on the `1/i²` instance with `p = 1000`.
pub fn risk_monte_carlo(cfg: &VerifyConfig) -> Result<(f64, String)> {
    let p = 1000;
    let spectrum = Spectrum::inverse_polynomial(2.0, Dim::Finite(p))?;
    let lambdas = spectrum.values(p);
    let theta_star = ThetaStarMode::Harmonic.build(p, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3f);
    let thetas: Vec<DVector<f64>> = (0..cfg.mc_thetas)
        .map(|_| {
            let scale: f64 = rng.random_range(0.5..2.0);
            DVector::from_fn(p, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                scale * z
            })
        })
        .collect();
    let diffs: Vec<DVector<f64>> = thetas.iter().map(|t| t - &theta_star).collect();

    const CHUNK: usize = 10_000;
    let chunks = cfg.mc_samples.div_ceil(CHUNK);
    let scales: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let partials: Vec<Vec<f64>> = (0..chunks as u64)
        .into_par_iter()
        .map(|c| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(c + 1);
            let count = CHUNK.min(cfg.mc_samples - c as usize * CHUNK);
            let mut x = vec![0.0f64; p];
            let mut sums = vec![0.0f64; diffs.len()];
            for _ in 0..count {
                for (xi, s) in x.iter_mut().zip(&scales) {
                    let z: f64 = StandardNormal.sample(&mut r);
                    *xi = s * z;
                }
                for (acc, d) in sums.iter_mut().zip(&diffs) {
                    let proj: f64 = x.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
                    *acc += proj * proj;
                }
            }
            sums
        })
        .collect();
    let mut worst = 0.0f64;
    for (j, theta) in thetas.iter().enumerate() {
        let total: f64 = partials.iter().map(|s| s[j]).sum();
        let empirical = 0.5 * total / cfg.mc_samples as f64;
        let exact = exact_risk(&spectrum, theta, &theta_star)?;
        worst = worst.max((empirical - exact).abs() / exact);
    }
    Ok((
        worst,
        format!("{} thetas, {} samples", cfg.mc_thetas, cfg.mc_samples),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn light() -> VerifyConfig {
        VerifyConfig {
            closed_form_instances: 5,
            closed_form_steps: 60,
            identity_instances: 5,
            mc_samples: 20_000,
            mc_thetas: 2,
            grid_points: 1000,
            grid_max_t: 50,
            ..VerifyConfig::default()
        }
    }

    #[test]
    fn light_checks_pass() {
        let mut cfg = light();
        cfg.checks.retain(|c| c != "risk_monte_carlo");
        let report = run_checks(&cfg).unwrap();
        assert!(report.passed(), "{}", report.to_text());
        assert_eq!(report.checks.len(), 4);
    }

    #[test]
    fn monte_carlo_is_close_with_few_samples() {
        let (gap, _) = risk_monte_carlo(&light()).unwrap();
        assert!(gap < 0.05, "{gap}");
    }

    #[test]
    fn empty_check_list() {
        let cfg = VerifyConfig {
            checks: vec![],
            ..light()
        };
        let report = run_checks(&cfg).unwrap();
        assert!(report.passed());
        assert!(report.to_text().contains("0 checks"));
    }

    #[test]
    fn oversized_step_fails() {
        let cfg = VerifyConfig {
            checks: vec!["closed_form".into()],
            lr_scale: 200.0,
            ..light()
        };
        let report = run_checks(&cfg).unwrap();
        assert!(!report.passed());
    }

    #[test]
    fn unknown_check_is_config_error() {
        let cfg = VerifyConfig {
            checks: vec!["nope".into()],
            ..light()
        };
        assert!(matches!(run_checks(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn spectral_grid_peak_approaches_inverse_e() {
        // t · max σ(1−σ)^t = (t/(t+1))^{t+1} increases towards 1/e
        let (worst, _) = spectral_grid(100_001, 20).unwrap();
        let at20 = (20.0f64 / 21.0).powi(21);
        assert!((worst - at20).abs() < 1e-6 && worst < (-1.0f64).exp());
    }
}
