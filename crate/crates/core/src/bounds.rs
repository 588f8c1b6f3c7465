//! Time-variant bias and variance bounds along the trajectory, the explicit
//! bias/variance matrices on small instances, and the min-norm / one-pass SGD
//! comparison bounds.
//!
//! All implicit constants are one, scaled by the multipliers in [`BoundParams`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::SampledDataset;
use crate::spectrum::{self, Dim, K2Dim, Spectrum, SpectrumSpec};
use crate::stats;
use crate::trajectory;

/// The weighting `c(t, n)` trading the `k2` term against the `t²` growth term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CtnStrategy {
    Constant(f64),
    /// `c(t, n) = n^{-β}`.
    PowerLaw(f64),
}

impl CtnStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CtnStrategy::Constant(v) if !(v > 0.0) || !v.is_finite() => Err(
                Error::InvalidArgument(format!("constant c(t,n) must be positive, got {v}")),
            ),
            CtnStrategy::PowerLaw(b) if !(b >= 0.0) || !b.is_finite() => Err(
                Error::InvalidArgument(format!("power-law exponent must be >= 0, got {b}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, _t: u64, n: usize) -> f64 {
        match *self {
            CtnStrategy::Constant(v) => v,
            CtnStrategy::PowerLaw(beta) => (n as f64).powf(-beta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundParams {
    pub delta: f64,
    pub sigma_y: f64,
    pub theta_norm: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub bias_multiplier: f64,
    pub variance_multiplier: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        BoundParams {
            delta: 0.05,
            sigma_y: 1.0,
            theta_norm: 1.0,
            c0: 1.0,
            c1: 1.0,
            c2: 1.0,
            bias_multiplier: 1.0,
            variance_multiplier: 1.0,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "delta must lie in (0,1), got {}",
                self.delta
            )));
        }
        if !(self.sigma_y >= 0.0) || !(self.theta_norm >= 0.0) {
            return Err(Error::InvalidArgument(
                "sigma_y and theta_norm must be non-negative".into(),
            ));
        }
        for c in [
            self.c0,
            self.c1,
            self.c2,
            self.bias_multiplier,
            self.variance_multiplier,
        ] {
            if !(c > 0.0) || !c.is_finite() {
                return Err(Error::InvalidArgument(
                    "constants and multipliers must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

fn log_inv(delta: f64) -> f64 {
    (1.0 / delta).ln()
}

/// The `t`-independent part of the bias bound: `‖Σ‖ · max{√(r/n), r/n, √(L/n), L/n}`
/// with `L = log(1/δ)`.
pub fn bias_floor(spectrum: &Spectrum, n: usize, delta: f64) -> f64 {
    let nf = n as f64;
    let r = spectrum.effective_rank();
    let l = log_inv(delta);
    let m = (r / nf).sqrt().max(r / nf).max((l / nf).sqrt()).max(l / nf);
    spectrum.top() * m
}

/// `B(θ_t) = ‖θ*‖² (1/(lr·t) + bias_floor)`; infinite at `t = 0`.
pub fn bound_b(t: u64, n: usize, lr: f64, theta_norm: f64, spectrum: &Spectrum, delta: f64) -> f64 {
    if t == 0 {
        return f64::INFINITY;
    }
    theta_norm * theta_norm * (1.0 / (lr * t as f64) + bias_floor(spectrum, n, delta))
}

/// `V(θ_t) = σ² log(1/δ) (k1/n + k2/(c·n) + c (lr·t·Σλ/n)²)` with `c = c(t,n)`.
#[allow(clippy::too_many_arguments)]
pub fn bound_v(
    t: u64,
    n: usize,
    lr: f64,
    spectrum: &Spectrum,
    delta: f64,
    sigma_y: f64,
    ctn: CtnStrategy,
    c1: f64,
    c2: f64,
) -> Result<f64> {
    let k1 = spectrum::k1_dim(spectrum, n, c1)?;
    let c = ctn.eval(t, n);
    let k2 = spectrum::k2_dim(spectrum, n, c2, c)?;
    Ok(variance_expr(
        t,
        n,
        lr,
        spectrum.trace(),
        delta,
        sigma_y,
        c,
        k1,
        k2.value,
    ))
}

#[allow(clippy::too_many_arguments)]
fn variance_expr(
    t: u64,
    n: usize,
    lr: f64,
    trace: f64,
    delta: f64,
    sigma_y: f64,
    c: f64,
    k1: usize,
    k2: usize,
) -> f64 {
    let nf = n as f64;
    let growth = lr * t as f64 * trace / nf;
    sigma_y
        * sigma_y
        * log_inv(delta)
        * (k1 as f64 / nf + k2 as f64 / (c * nf) + c * growth * growth)
}

/// Evaluates `B` and `V` over many epochs for one `(spectrum, n, lr)` with the
/// effective dimensions computed once.
#[derive(Debug, Clone)]
pub struct BoundEvaluator<'a> {
    spectrum: &'a Spectrum,
    n: usize,
    lr: f64,
    params: BoundParams,
    ctn: CtnStrategy,
    trace: f64,
    floor: f64,
    k1: usize,
    k2_const: Option<K2Dim>,
}

impl<'a> BoundEvaluator<'a> {
    pub fn new(
        spectrum: &'a Spectrum,
        n: usize,
        lr: f64,
        params: BoundParams,
        ctn: CtnStrategy,
    ) -> Result<Self> {
        params.validate()?;
        ctn.validate()?;
        let k1 = spectrum::k1_dim(spectrum, n, params.c1)?;
        // Both strategies are epoch independent, so k2 is fixed for this n.
        let k2_const = Some(spectrum::k2_dim(spectrum, n, params.c2, ctn.eval(0, n))?);
        Ok(BoundEvaluator {
            spectrum,
            n,
            lr,
            params,
            ctn,
            trace: spectrum.trace(),
            floor: bias_floor(spectrum, n, params.delta),
            k1,
            k2_const,
        })
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self, t: u64) -> Result<K2Dim> {
        match self.k2_const {
            Some(k) => Ok(k),
            None => spectrum::k2_dim(
                self.spectrum,
                self.n,
                self.params.c2,
                self.ctn.eval(t, self.n),
            ),
        }
    }

    pub fn bias(&self, t: u64) -> f64 {
        if t == 0 {
            return f64::INFINITY;
        }
        let th = self.params.theta_norm;
        self.params.bias_multiplier * th * th * (1.0 / (self.lr * t as f64) + self.floor)
    }

    pub fn variance(&self, t: u64) -> Result<f64> {
        let k2 = self.k2(t)?.value;
        let p = &self.params;
        Ok(p.variance_multiplier
            * variance_expr(
                t,
                self.n,
                self.lr,
                self.trace,
                p.delta,
                p.sigma_y,
                self.ctn.eval(t, self.n),
                self.k1,
                k2,
            ))
    }

    pub fn total(&self, t: u64) -> Result<f64> {
        Ok(self.bias(t) + self.variance(t)?)
    }

    /// `max{√r, 1}/√n + max{k1, 1}/n`.
    pub fn corollary_target(&self) -> f64 {
        let nf = self.n as f64;
        self.spectrum.effective_rank().sqrt().max(1.0) / nf.sqrt() + (self.k1.max(1) as f64) / nf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub n: usize,
    pub learning_rate: f64,
    pub t_grid: Vec<u64>,
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub k2: Vec<usize>,
    pub k0: usize,
    pub k1: usize,
    pub r_sigma: f64,
    pub bartlett_bound: f64,
    pub zou_bound: f64,
    pub delta: f64,
    pub sigma_y: f64,
    pub theta_norm: f64,
}

pub fn bound_report(
    spectrum: &Spectrum,
    n: usize,
    lr: f64,
    params: BoundParams,
    ctn: CtnStrategy,
    t_grid: &[u64],
) -> Result<BoundReport> {
    let eval = BoundEvaluator::new(spectrum, n, lr, params, ctn)?;
    let dims = spectrum::effective_dims(spectrum, n, params.c0, params.c1)?;
    let cmp = comparison_bounds(spectrum, n, params.c0, params.c1)?;
    let mut bias = Vec::with_capacity(t_grid.len());
    let mut variance = Vec::with_capacity(t_grid.len());
    let mut k2 = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        bias.push(eval.bias(t));
        variance.push(eval.variance(t)?);
        k2.push(eval.k2(t)?.value);
    }
    Ok(BoundReport {
        n,
        learning_rate: lr,
        t_grid: t_grid.to_vec(),
        bias,
        variance,
        k2,
        k0: dims.k0,
        k1: dims.k1,
        r_sigma: dims.r_sigma,
        bartlett_bound: cmp.bartlett,
        zou_bound: cmp.zou,
        delta: params.delta,
        sigma_y: params.sigma_y,
        theta_norm: params.theta_norm,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonBounds {
    /// Min-norm variance bound `k0/n + n/R_{k0}`.
    pub bartlett: f64,
    /// One-pass SGD bound `k1/n + n Σ_{i>k1} λ_i² / (Σλ_i)²`.
    pub zou: f64,
}

pub fn comparison_bounds(
    spectrum: &Spectrum,
    n: usize,
    c0: f64,
    c1: f64,
) -> Result<ComparisonBounds> {
    let nf = n as f64;
    let k0 = spectrum::k0_dim(spectrum, n, c0)?;
    let k1 = spectrum::k1_dim(spectrum, n, c1)?;
    let bartlett = k0 as f64 / nf + nf / spectrum.big_r(k0)?;
    let total = spectrum.trace();
    let zou = k1 as f64 / nf + nf * spectrum.tail_sum_squares(k1) / (total * total);
    Ok(ComparisonBounds { bartlett, zou })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinBound {
    pub t_star: u64,
    pub value: f64,
    /// `max{√r, 1}/√n + max{k1, 1}/n`, for comparison.
    pub target: f64,
}

/// Grid minimizer of `B + V` over the positive epochs of `t_grid`. The grid
/// must show the bound decreasing at its start and increasing at its end.
pub fn min_bound_over_t(eval: &BoundEvaluator<'_>, t_grid: &[u64]) -> Result<MinBound> {
    let ts: Vec<u64> = t_grid.iter().copied().filter(|&t| t > 0).collect();
    if ts.len() < 3 {
        return Err(Error::GridTooNarrow(
            "need at least three positive epochs".into(),
        ));
    }
    let values = ts
        .iter()
        .map(|&t| eval.total(t))
        .collect::<Result<Vec<f64>>>()?;
    let last = values.len() - 1;
    if !(values[0] > values[1]) {
        return Err(Error::GridTooNarrow(format!(
            "bound is not decreasing at the grid start (t = {}..{})",
            ts[0], ts[1]
        )));
    }
    if !(values[last] > values[last - 1]) {
        return Err(Error::GridTooNarrow(format!(
            "bound is not increasing at the grid end (t = {}..{})",
            ts[last - 1],
            ts[last]
        )));
    }
    let (idx, value) = trajectory::argmin_first(&values);
    Ok(MinBound {
        t_star: ts[idx],
        value,
        target: eval.corollary_target(),
    })
}

/// Explicit bias and variance matrices of the risk decomposition at epoch `t`.
#[derive(Debug, Clone)]
pub struct BcMatrices {
    /// `(I − (lr/n)XᵀX)^t Σ (I − (lr/n)XᵀX)^t`, `p × p`.
    pub b: DMatrix<f64>,
    /// `(XXᵀ)^{-1}[I − (I − (lr/n)XXᵀ)^t] XΣXᵀ [I − (I − (lr/n)XXᵀ)^t](XXᵀ)^{-1}`, `n × n`.
    pub c: DMatrix<f64>,
    /// `θ*ᵀBθ*`.
    pub bias_value: f64,
    pub variance_trace: f64,
    /// `εᵀCε`.
    pub variance_value: f64,
}

/// Largest `p` accepted by [`explicit_bc_matrices`].
pub const EXPLICIT_P_LIMIT: usize = 200;

pub fn explicit_bc_matrices(
    ds: &SampledDataset,
    spectrum: &Spectrum,
    theta_star: &DVector<f64>,
    lr: f64,
    t: u64,
) -> Result<BcMatrices> {
    let (n, p) = (ds.n(), ds.p());
    if p > EXPLICIT_P_LIMIT {
        return Err(Error::TooLarge {
            p,
            limit: EXPLICIT_P_LIMIT,
        });
    }
    if theta_star.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: theta_star.len(),
        });
    }
    let lambdas = spectrum.values(p);
    if lambdas.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: lambdas.len(),
        });
    }
    let nf = n as f64;
    let mu = &ds.svd.mu;
    if !(lr * mu[0] / nf < 1.0) {
        return Err(Error::Stability {
            learning_rate: lr,
            reason: "lr * mu_1 / n >= 1".into(),
        });
    }
    let filt: Vec<f64> = mu
        .iter()
        .map(|m| -(t as f64 * (-lr * m / nf).ln_1p()).exp_m1())
        .collect();

    // (I − (lr/n)XᵀX)^t = I − W diag(filt) Wᵀ
    let w = &ds.svd.w;
    let mut wf = w.clone();
    for (j, mut col) in wf.column_iter_mut().enumerate() {
        col *= filt[j];
    }
    let power = DMatrix::<f64>::identity(p, p) - &wf * w.transpose();
    let sigma = DMatrix::from_diagonal(&DVector::from_vec(lambdas));
    let b = &power * &sigma * &power;

    // (XXᵀ)^{-1}[I − (I − (lr/n)XXᵀ)^t] = U diag(filt/μ) Uᵀ
    let u = &ds.svd.u;
    let mut uk = u.clone();
    for (j, mut col) in uk.column_iter_mut().enumerate() {
        col *= filt[j] / mu[j];
    }
    let k = &uk * u.transpose();
    let xsx = &ds.x * &sigma * ds.x.transpose();
    let c = &k * xsx * &k;

    let bias_value = theta_star.dot(&(&b * theta_star));
    let variance_value = ds.epsilon.dot(&(&c * &ds.epsilon));
    Ok(BcMatrices {
        variance_trace: c.trace(),
        b,
        c,
        bias_value,
        variance_value,
    })
}

/// `min_β V(t = n^τ)` over a grid of power-law exponents, with the minimizing β.
pub fn min_variance_over_powers(
    spectrum: &Spectrum,
    n: usize,
    lr: f64,
    tau: f64,
    betas: &[f64],
    params: BoundParams,
) -> Result<(f64, f64)> {
    let t = (n as f64).powf(tau).round() as u64;
    let mut best = (f64::INFINITY, f64::NAN);
    for &beta in betas {
        let ctn = CtnStrategy::PowerLaw(beta);
        let v = bound_v(
            t,
            n,
            lr,
            spectrum,
            params.delta,
            params.sigma_y,
            ctn,
            params.c1,
            params.c2,
        )? * params.variance_multiplier;
        if v < best.0 {
            best = (v, beta);
        }
    }
    Ok(best)
}

/// One row of the finite-n comparison of bound rates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub t_star: u64,
    pub ours: f64,
    pub bartlett: f64,
    pub zou: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub family: String,
    pub rows: Vec<RateRow>,
    pub ours_slope: Option<f64>,
    pub t_star_slope: Option<f64>,
    pub bartlett_slope: Option<f64>,
    pub zou_slope: Option<f64>,
}

/// Epoch grid wide enough to bracket the bound minimizer: 50 points per
/// decade from 1 to `10^4 · n / lr`.
pub fn bound_grid(n: usize, lr: f64) -> Vec<u64> {
    let t_max = (1e4 * n as f64 / lr).ceil() as u64;
    trajectory::geometric_grid(50, t_max)
}

/// `min_t (B+V)`, the comparison bounds and their log-log slopes over `n_grid`.
/// Fixed families are taken in infinite dimension when summable. The step size
/// is `1/(2Σλ)` at every `n`.
pub fn rate_fit(
    spec: &SpectrumSpec,
    n_grid: &[usize],
    params: BoundParams,
    ctn: CtnStrategy,
) -> Result<RateFit> {
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let spectrum = resolve_for_rates(spec, n)?;
        let lr = trajectory::default_learning_rate(&spectrum);
        let eval = BoundEvaluator::new(&spectrum, n, lr, params, ctn)?;
        let best = min_bound_over_t(&eval, &bound_grid(n, lr))?;
        let cmp = comparison_bounds(&spectrum, n, params.c0, params.c1)?;
        rows.push(RateRow {
            n,
            t_star: best.t_star,
            ours: best.value,
            bartlett: cmp.bartlett,
            zou: cmp.zou,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let slope =
        |f: fn(&RateRow) -> f64| stats::loglog_slope(&xs, &rows.iter().map(f).collect::<Vec<_>>());
    Ok(RateFit {
        family: spec.id(),
        ours_slope: slope(|r| r.ours),
        t_star_slope: slope(|r| r.t_star as f64),
        bartlett_slope: slope(|r| r.bartlett),
        zou_slope: slope(|r| r.zou),
        rows,
    })
}

/// Infinite dimension for summable fixed families, `p = 10n` otherwise.
pub fn resolve_for_rates(spec: &SpectrumSpec, n: usize) -> Result<Spectrum> {
    match spec {
        SpectrumSpec::InvPoly { alpha } if *alpha > 1.0 => spec.resolve(n, Dim::Infinite),
        SpectrumSpec::InvLogPoly { beta } if *beta > 1.0 => spec.resolve(n, Dim::Infinite),
        _ => spec.resolve(n, Dim::Finite(10 * n)),
    }
}
