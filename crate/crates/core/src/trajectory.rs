//! Gradient-descent trajectories from zero initialization and their exact
//! excess risk.
//!
//! With `X = U diag(√μ) Wᵀ` and `g = UᵀY`, the iterate after `t` full-batch
//! steps of size `lr` is `θ_t = W a_t` where
//!
//! ```text
//! a_t[i] = (1 − (1 − lr·μ_i/n)^t) · g_i / √μ_i
//! ```
//!
//! and the risk `½(θ_t − θ*)ᵀΣ(θ_t − θ*)` reduces to the `n × n` quadratic form
//! `½(a_tᵀ M a_t − 2 a_tᵀ b + c)` with `M = WᵀΣW`, `b = WᵀΣθ*`, `c = θ*ᵀΣθ*`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{self, SampledDataset};
use crate::spectrum::Spectrum;

/// Default `c` in the step-size ceiling `1/(c · Σλ_i)`.
pub const DEFAULT_STABILITY_C: f64 = 2.0;

pub fn stability_threshold(spectrum: &Spectrum, c: f64) -> f64 {
    1.0 / (c * spectrum.trace())
}

/// `1/(2 Σλ_i)`.
pub fn default_learning_rate(spectrum: &Spectrum) -> f64 {
    stability_threshold(spectrum, DEFAULT_STABILITY_C)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    Geometric {
        points_per_decade: usize,
        t_max: u64,
    },
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub learning_rate: f64,
    pub t_grid: Vec<u64>,
    pub grid_mode: GridMode,
    /// Also report the bias and variance quadratic forms per epoch.
    pub decomposition: bool,
}

/// `0` followed by `round(10^{j/ppd})` up to `t_max`, with `t_max` appended.
pub fn geometric_grid(points_per_decade: usize, t_max: u64) -> Vec<u64> {
    let mut grid = vec![0u64];
    if t_max == 0 || points_per_decade == 0 {
        return grid;
    }
    let decades = (t_max as f64).log10();
    let steps = (decades * points_per_decade as f64).floor() as usize;
    for j in 0..=steps {
        let t = 10f64.powf(j as f64 / points_per_decade as f64).round() as u64;
        if t <= t_max && t > *grid.last().unwrap() {
            grid.push(t);
        }
    }
    if *grid.last().unwrap() != t_max {
        grid.push(t_max);
    }
    grid
}

impl TrajectoryConfig {
    pub fn geometric(learning_rate: f64, points_per_decade: usize, t_max: u64) -> Result<Self> {
        if points_per_decade == 0 {
            return Err(Error::InvalidArgument(
                "points_per_decade must be positive".into(),
            ));
        }
        Self::checked(TrajectoryConfig {
            learning_rate,
            t_grid: geometric_grid(points_per_decade, t_max),
            grid_mode: GridMode::Geometric {
                points_per_decade,
                t_max,
            },
            decomposition: false,
        })
    }

    pub fn explicit(learning_rate: f64, t_grid: Vec<u64>) -> Result<Self> {
        Self::checked(TrajectoryConfig {
            learning_rate,
            t_grid,
            grid_mode: GridMode::Explicit,
            decomposition: false,
        })
    }

    /// Step size `1/(2Σλ)`, 20 points per decade up to `t_max = 100·n/lr`.
    pub fn default_for(spectrum: &Spectrum, n: usize) -> Self {
        let lr = default_learning_rate(spectrum);
        let t_max = (100.0 * n as f64 / lr).ceil() as u64;
        Self::geometric(lr, 20, t_max).expect("default grid is valid")
    }

    pub fn with_decomposition(mut self, on: bool) -> Self {
        self.decomposition = on;
        self
    }

    fn checked(self) -> Result<Self> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.t_grid.is_empty() || self.t_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "t_grid must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(self)
    }

    /// Rejects step sizes above `1/(c · Σλ_i)`.
    pub fn check_stability(&self, spectrum: &Spectrum, c: f64) -> Result<()> {
        let limit = stability_threshold(spectrum, c);
        if self.learning_rate > limit {
            return Err(Error::Stability {
                learning_rate: self.learning_rate,
                reason: format!("exceeds 1/({c} * trace) = {limit:.6e}"),
            });
        }
        Ok(())
    }
}

/// Literal iteration of `θ_{t+1} = θ_t − (lr/n) Xᵀ(Xθ_t − Y)`; returns `θ_0 … θ_T`.
pub fn gd_iterative(
    ds: &SampledDataset,
    theta0: &DVector<f64>,
    lr: f64,
    steps: u64,
) -> Result<Vec<DVector<f64>>> {
    if theta0.len() != ds.p() {
        return Err(Error::DimensionMismatch {
            expected: ds.p(),
            got: theta0.len(),
        });
    }
    // ‖θ*‖ is not visible here; the initial point stands in for it.
    let limit = 1e6 * (min_norm(ds).norm() + theta0.norm());
    let scale = lr / ds.n() as f64;
    let mut out = Vec::with_capacity(steps as usize + 1);
    let mut theta = theta0.clone();
    out.push(theta.clone());
    for epoch in 1..=steps {
        let residual = &ds.x * &theta - &ds.y;
        theta -= ds.x.tr_mul(&residual) * scale;
        let norm = theta.norm();
        if !(norm <= limit) {
            return Err(Error::Divergence { epoch, norm, limit });
        }
        out.push(theta.clone());
    }
    Ok(out)
}

/// Per-direction contraction factors `ln(1 − lr·μ_i/n)`.
fn log_contractions(ds: &SampledDataset, lr: f64) -> Result<Vec<f64>> {
    let n = ds.n() as f64;
    let top = lr * ds.svd.mu[0] / n;
    if !(top < 1.0) {
        return Err(Error::Stability {
            learning_rate: lr,
            reason: format!("lr * mu_1 / n = {top:.6} >= 1, contraction factor is non-positive"),
        });
    }
    Ok(ds.svd.mu.iter().map(|m| (-lr * m / n).ln_1p()).collect())
}

/// `1 − (1 − lr·μ_i/n)^t`, via `exp(t · log1p(−lr·μ_i/n))`.
fn filter(log_contraction: f64, t: u64) -> f64 {
    -(t as f64 * log_contraction).exp_m1()
}

/// Coordinates of the iterate in the `W` basis for a response projection `g = UᵀY`.
fn coefficients(g: &DVector<f64>, mu: &DVector<f64>, logs: &[f64], t: Option<u64>) -> DVector<f64> {
    DVector::from_fn(g.len(), |i, _| {
        let f = t.map_or(1.0, |t| filter(logs[i], t));
        f * g[i] / mu[i].sqrt()
    })
}

/// `θ_t` from zero initialization.
pub fn closed_form_theta(ds: &SampledDataset, lr: f64, t: u64) -> Result<DVector<f64>> {
    let logs = log_contractions(ds, lr)?;
    let g = ds.svd.u.tr_mul(&ds.y);
    Ok(&ds.svd.w * coefficients(&g, &ds.svd.mu, &logs, Some(t)))
}

/// `Xᵀ(XXᵀ)^{-1}Y`.
pub fn min_norm(ds: &SampledDataset) -> DVector<f64> {
    let g = ds.svd.u.tr_mul(&ds.y);
    let a = DVector::from_fn(g.len(), |i, _| g[i] / ds.svd.mu[i].sqrt());
    &ds.svd.w * a
}

/// Precomputed `n × n` reduction of the population risk along one trajectory.
#[derive(Debug, Clone)]
pub struct RiskEvaluator {
    m: DMatrix<f64>,
    b: DVector<f64>,
    c: f64,
    mu: DVector<f64>,
    logs: Vec<f64>,
    g: DVector<f64>,
    g_signal: DVector<f64>,
    g_noise: DVector<f64>,
}

impl RiskEvaluator {
    pub fn new(
        ds: &SampledDataset,
        lambdas: &[f64],
        theta_star: &DVector<f64>,
        lr: f64,
    ) -> Result<Self> {
        let p = ds.p();
        for len in [lambdas.len(), theta_star.len()] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: len,
                });
            }
        }
        let logs = log_contractions(ds, lr)?;
        let mut sw = ds.svd.w.clone();
        for (i, mut row) in sw.row_iter_mut().enumerate() {
            row *= lambdas[i].sqrt();
        }
        let m = sw.tr_mul(&sw);
        let weighted = DVector::from_fn(p, |i, _| lambdas[i] * theta_star[i]);
        let b = ds.svd.w.tr_mul(&weighted);
        let c = weighted.dot(theta_star);
        let u = &ds.svd.u;
        Ok(RiskEvaluator {
            m,
            b,
            c,
            mu: ds.svd.mu.clone(),
            logs,
            g: u.tr_mul(&ds.y),
            g_signal: u.tr_mul(&(&ds.x * theta_star)),
            g_noise: u.tr_mul(&ds.epsilon),
        })
    }

    fn quad(&self, a: &DVector<f64>, with_target: bool) -> f64 {
        let ma = &self.m * a;
        let mut v = a.dot(&ma);
        if with_target {
            v += self.c - 2.0 * a.dot(&self.b);
        }
        v.max(0.0)
    }

    /// `R(θ_t)`; `None` gives the min-norm limit.
    pub fn risk(&self, t: Option<u64>) -> f64 {
        0.5 * self.quad(&coefficients(&self.g, &self.mu, &self.logs, t), true)
    }

    /// `(θ*ᵀBθ*, εᵀCε)`, whose sum bounds `R(θ_t)`.
    pub fn decomposition(&self, t: Option<u64>) -> (f64, f64) {
        let a_signal = coefficients(&self.g_signal, &self.mu, &self.logs, t);
        let a_noise = coefficients(&self.g_noise, &self.mu, &self.logs, t);
        (self.quad(&a_signal, true), self.quad(&a_noise, false))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RiskTrajectory {
    pub t_grid: Vec<u64>,
    pub risk: Vec<f64>,
    pub bias_part: Option<Vec<f64>>,
    pub variance_part: Option<Vec<f64>>,
    pub min_norm_risk: f64,
    /// First grid epoch attaining the grid minimum.
    pub argmin_t: u64,
    pub min_risk: f64,
    /// `risk[last] − min_norm_risk`.
    pub final_gap: f64,
}

pub fn risk_trajectory(
    ds: &SampledDataset,
    spectrum: &Spectrum,
    theta_star: &DVector<f64>,
    cfg: &TrajectoryConfig,
) -> Result<RiskTrajectory> {
    let lambdas = spectrum.values(ds.p());
    if lambdas.len() != ds.p() {
        return Err(Error::DimensionMismatch {
            expected: ds.p(),
            got: lambdas.len(),
        });
    }
    let eval = RiskEvaluator::new(ds, &lambdas, theta_star, cfg.learning_rate)?;
    Ok(trajectory_from(&eval, cfg))
}

pub fn trajectory_from(eval: &RiskEvaluator, cfg: &TrajectoryConfig) -> RiskTrajectory {
    let risk: Vec<f64> = cfg.t_grid.iter().map(|&t| eval.risk(Some(t))).collect();
    let (bias_part, variance_part) = if cfg.decomposition {
        let (b, v): (Vec<f64>, Vec<f64>) = cfg
            .t_grid
            .iter()
            .map(|&t| eval.decomposition(Some(t)))
            .unzip();
        (Some(b), Some(v))
    } else {
        (None, None)
    };
    let (idx, min_risk) = argmin_first(&risk);
    let min_norm_risk = eval.risk(None);
    RiskTrajectory {
        t_grid: cfg.t_grid.clone(),
        final_gap: risk[risk.len() - 1] - min_norm_risk,
        risk,
        bias_part,
        variance_part,
        min_norm_risk,
        argmin_t: cfg.t_grid[idx],
        min_risk,
    }
}

/// Index and value of the first minimum.
pub fn argmin_first(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Mean risk curve for one sample size, as fed to [`region_scan`].
#[derive(Debug, Clone)]
pub struct RegionInput {
    pub n: usize,
    pub learning_rate: f64,
    pub t_grid: Vec<u64>,
    pub mean_risk: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionRow {
    pub n: usize,
    pub start_t: Option<u64>,
    pub end_t: Option<u64>,
    /// `start_t · lr`, i.e. in units of `1/lr`.
    pub start_scaled: Option<f64>,
    /// `end_t · lr / n`, i.e. in units of `n/lr`.
    pub end_scaled: Option<f64>,
}

/// Longest contiguous run of grid epochs with mean risk at or below `threshold`
/// (earliest run on ties).
pub fn region_scan(inputs: &[RegionInput], threshold: f64) -> Vec<RegionRow> {
    inputs
        .iter()
        .map(|inp| {
            let mut best: Option<(usize, usize)> = None;
            let mut run_start: Option<usize> = None;
            for (i, &r) in inp.mean_risk.iter().enumerate() {
                if r <= threshold {
                    let s = *run_start.get_or_insert(i);
                    let longer = best.is_none_or(|(a, b)| i - s > b - a);
                    if longer {
                        best = Some((s, i));
                    }
                } else {
                    run_start = None;
                }
            }
            let (start_t, end_t) = match best {
                Some((a, b)) => (Some(inp.t_grid[a]), Some(inp.t_grid[b])),
                None => (None, None),
            };
            RegionRow {
                n: inp.n,
                start_t,
                end_t,
                start_scaled: start_t.map(|t| t as f64 * inp.learning_rate),
                end_scaled: end_t.map(|t| t as f64 * inp.learning_rate / inp.n as f64),
            }
        })
        .collect()
}

/// Direct `p`-dimensional evaluation, for cross-checking [`RiskEvaluator`].
pub fn direct_risk(
    spectrum: &Spectrum,
    theta: &DVector<f64>,
    theta_star: &DVector<f64>,
) -> Result<f64> {
    instance::exact_risk(spectrum, theta, theta_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{
        sample_dataset, sample_trial, FeatureLaw, ProblemInstance, ThetaStarMode,
    };
    use crate::spectrum::Dim;

    fn small(seed: u64) -> (ProblemInstance, SampledDataset) {
        let s = Spectrum::inverse_polynomial(1.5, Dim::Finite(8)).unwrap();
        let inst = ProblemInstance::new(
            s,
            5,
            ThetaStarMode::Harmonic.build(8, 0),
            0.5,
            FeatureLaw::Gaussian,
        )
        .unwrap();
        let ds = sample_dataset(&inst, seed).unwrap();
        (inst, ds)
    }

    fn max_gap(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).amax()
    }

    #[test]
    fn grid_shape() {
        let g = geometric_grid(20, 1000);
        assert_eq!(g[0], 0);
        assert_eq!(g[1], 1);
        assert_eq!(*g.last().unwrap(), 1000);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(geometric_grid(20, 0), vec![0]);
    }

    #[test]
    fn zero_step_is_identity() {
        let (_, ds) = small(1);
        let theta0 = DVector::from_fn(8, |i, _| i as f64);
        let path = gd_iterative(&ds, &theta0, 0.0, 10).unwrap();
        assert!(path.iter().all(|th| *th == theta0));
    }

    #[test]
    fn zero_response_is_fixed_point() {
        let (_, mut ds) = small(2);
        ds.y = DVector::zeros(5);
        let path = gd_iterative(&ds, &DVector::zeros(8), 0.1, 20).unwrap();
        assert!(path.iter().all(|th| th.iter().all(|v| *v == 0.0)));
        assert!(min_norm(&ds).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn closed_form_matches_iteration() {
        let (inst, ds) = small(3);
        let lr = default_learning_rate(inst.spectrum());
        let path = gd_iterative(&ds, &DVector::zeros(8), lr, 50).unwrap();
        for t in [0u64, 1, 7, 50] {
            let cf = closed_form_theta(&ds, lr, t).unwrap();
            assert!(max_gap(&cf, &path[t as usize]) <= 1e-10, "t = {t}");
        }
        assert!(closed_form_theta(&ds, lr, 0)
            .unwrap()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn limit_is_min_norm_interpolator() {
        let (inst, ds) = small(4);
        let lr = default_learning_rate(inst.spectrum());
        let far = closed_form_theta(&ds, lr, u64::MAX).unwrap();
        let mn = min_norm(&ds);
        assert!(max_gap(&far, &mn) <= 1e-12);
        let fit = &ds.x * &mn - &ds.y;
        assert!(fit.norm() <= 1e-8 * ds.y.norm());
    }

    #[test]
    fn limit_consistency_bound() {
        let (inst, ds) = small(5);
        let lr = default_learning_rate(inst.spectrum());
        let mn = min_norm(&ds);
        let rate = 1.0 - lr * ds.svd.mu[ds.n() - 1] / ds.n() as f64;
        for t in [1u64, 10, 100, 1000] {
            let gap = (closed_form_theta(&ds, lr, t).unwrap() - &mn).norm();
            assert!(
                gap <= rate.powf(t as f64) * mn.norm() * (1.0 + 1e-12),
                "t = {t}"
            );
        }
    }

    #[test]
    fn min_norm_beats_null_space_shift() {
        let (_, ds) = small(6);
        let mn = min_norm(&ds);
        // random null-space direction: project a vector off the row space
        let v = DVector::from_fn(8, |i, _| ((i * 7 + 3) % 5) as f64 - 2.0);
        let nu = &v - &ds.svd.w * ds.svd.w.tr_mul(&v);
        assert!(ds.svd.w.tr_mul(&nu).amax() <= 1e-10);
        assert!(mn.norm() <= (&mn + &nu).norm());
    }

    #[test]
    fn square_design_gives_inverse() {
        let x = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let ds = SampledDataset::from_parts(x.clone(), y.clone(), DVector::zeros(3)).unwrap();
        let expect = x.try_inverse().unwrap() * y;
        assert!(max_gap(&min_norm(&ds), &expect) <= 1e-10);
    }

    #[test]
    fn unstable_step_rejected() {
        let (_, ds) = small(7);
        let lr = 1.0 * ds.n() as f64 / ds.svd.mu[0];
        assert!(matches!(
            closed_form_theta(&ds, lr, 3),
            Err(Error::Stability { .. })
        ));
    }

    #[test]
    fn divergence_detected() {
        let (_, ds) = small(8);
        let lr = 3.0 * ds.n() as f64 / ds.svd.mu[0];
        assert!(matches!(
            gd_iterative(&ds, &DVector::zeros(8), lr, 500),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn trajectory_matches_direct_risk() {
        let (inst, ds) = small(9);
        let lr = default_learning_rate(inst.spectrum());
        let cfg = TrajectoryConfig::geometric(lr, 10, 5000)
            .unwrap()
            .with_decomposition(true);
        let traj = risk_trajectory(&ds, inst.spectrum(), &inst.theta_star, &cfg).unwrap();
        let c = 0.5
            * inst
                .lambdas()
                .iter()
                .zip(inst.theta_star.iter())
                .map(|(l, t)| l * t * t)
                .sum::<f64>();
        assert_close!(traj.risk[0], c, 1e-14);
        for (k, &t) in traj.t_grid.iter().enumerate() {
            let th = closed_form_theta(&ds, lr, t).unwrap();
            let direct = direct_risk(inst.spectrum(), &th, &inst.theta_star).unwrap();
            assert!((traj.risk[k] - direct).abs() <= 1e-10, "t = {t}");
            let (b, v) = (
                traj.bias_part.as_ref().unwrap()[k],
                traj.variance_part.as_ref().unwrap()[k],
            );
            assert!(traj.risk[k] <= b + v + 1e-12);
        }
        let mn = direct_risk(inst.spectrum(), &min_norm(&ds), &inst.theta_star).unwrap();
        assert_close!(traj.min_norm_risk, mn, 1e-10);
        assert!(traj.risk.iter().all(|r| *r >= 0.0));
    }

    #[test]
    fn inverse_square_curve_is_u_shaped() {
        let s = Spectrum::inverse_polynomial(2.0, Dim::Finite(1000)).unwrap();
        let inst = ProblemInstance::new(
            s,
            100,
            ThetaStarMode::Harmonic.build(1000, 0),
            1.0,
            FeatureLaw::Gaussian,
        )
        .unwrap();
        let cfg = TrajectoryConfig::default_for(inst.spectrum(), 100);
        let ds = sample_trial(&inst, 11, 0).unwrap();
        let traj = risk_trajectory(&ds, inst.spectrum(), &inst.theta_star, &cfg).unwrap();
        let last = *traj.risk.last().unwrap();
        assert!(traj.argmin_t > 0 && traj.argmin_t < *cfg.t_grid.last().unwrap());
        assert!(last > 10.0 * traj.min_risk, "{last} vs {}", traj.min_risk);
    }

    #[test]
    fn region_scan_edges() {
        let inp = RegionInput {
            n: 10,
            learning_rate: 0.5,
            t_grid: vec![0, 1, 2, 4, 8],
            mean_risk: vec![1.0, 0.5, 0.2, 0.3, 0.9],
        };
        let full = region_scan(std::slice::from_ref(&inp), 2.0);
        assert_eq!((full[0].start_t, full[0].end_t), (Some(0), Some(8)));
        let empty = region_scan(std::slice::from_ref(&inp), 0.0);
        assert_eq!((empty[0].start_t, empty[0].end_t), (None, None));
        let mid = region_scan(&[inp], 0.4);
        assert_eq!((mid[0].start_t, mid[0].end_t), (Some(2), Some(4)));
        assert_eq!(mid[0].start_scaled, Some(1.0));
        assert_eq!(mid[0].end_scaled, Some(0.2));
    }
}
