//! Concrete regression problems and their sampled training sets.
//!
//! Everything is expressed in the eigenbasis of the covariance, so
//! `Σ = diag(λ_1, …, λ_p)` and a feature row is `x = Λ^{1/2} z` with `z`
//! having independent zero-mean unit-variance entries.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::WideSvd;
use crate::spectrum::{self, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureLaw {
    #[default]
    Gaussian,
    Rademacher,
}

/// How the true parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThetaStarMode {
    /// Unit vector proportional to `(1, 1/2, …, 1/p)`; seed independent.
    #[default]
    Harmonic,
    /// First standard basis vector.
    Basis,
    /// Uniformly random direction scaled to the given norm.
    Isotropic { norm: f64 },
}

impl ThetaStarMode {
    pub fn build(self, p: usize, seed: u64) -> DVector<f64> {
        match self {
            ThetaStarMode::Harmonic => {
                let v = DVector::from_fn(p, |i, _| 1.0 / (i + 1) as f64);
                let norm = v.norm();
                v / norm
            }
            ThetaStarMode::Basis => {
                let mut v = DVector::zeros(p);
                v[0] = 1.0;
                v
            }
            ThetaStarMode::Isotropic { norm } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(u64::MAX);
                let v = DVector::<f64>::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
                let len = v.norm();
                v * (norm / len)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInstance {
    spectrum: Spectrum,
    lambdas: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub theta_star: DVector<f64>,
    pub noise_sigma: f64,
    pub feature_law: FeatureLaw,
}

impl ProblemInstance {
    pub fn new(
        spectrum: Spectrum,
        n: usize,
        theta_star: DVector<f64>,
        noise_sigma: f64,
        feature_law: FeatureLaw,
    ) -> Result<Self> {
        let p = spectrum.dim().finite().ok_or_else(|| {
            Error::Unsupported("sampling needs a finite-dimensional spectrum".into())
        })?;
        if n == 0 || p <= n {
            return Err(Error::InvalidArgument(format!(
                "overparameterized instance needs 1 <= n < p, got n = {n}, p = {p}"
            )));
        }
        if theta_star.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: theta_star.len(),
            });
        }
        if !theta_star.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("theta_star must be finite".into()));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "noise_sigma must be >= 0, got {noise_sigma}"
            )));
        }
        let lambdas = spectrum.values(p);
        Ok(ProblemInstance {
            spectrum,
            lambdas,
            n,
            p,
            theta_star,
            noise_sigma,
            feature_law,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        &self.spectrum
    }

    /// `λ_1, …, λ_p`.
    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }
}

#[derive(Debug, Clone)]
pub struct SampledDataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub epsilon: DVector<f64>,
    pub svd: WideSvd,
}

impl SampledDataset {
    /// Factorizes an explicit design. Requires `n ≤ p` and full row rank.
    pub fn from_parts(x: DMatrix<f64>, y: DVector<f64>, epsilon: DVector<f64>) -> Result<Self> {
        Self::assemble(x, y, epsilon, 0, 0)
    }

    fn assemble(
        x: DMatrix<f64>,
        y: DVector<f64>,
        epsilon: DVector<f64>,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let (n, p) = x.shape();
        if n > p {
            return Err(Error::InvalidArgument(format!(
                "design must be wide, got {n} x {p}"
            )));
        }
        for len in [y.len(), epsilon.len()] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: len,
                });
            }
        }
        let svd = WideSvd::compute(&x).map_err(|ratio| Error::RankDeficient {
            seed,
            stream,
            ratio,
        })?;
        Ok(SampledDataset { x, y, epsilon, svd })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// Draws a training set from a single ChaCha8 stream seeded by `seed`.
pub fn sample_dataset(inst: &ProblemInstance, seed: u64) -> Result<SampledDataset> {
    sample_stream(inst, seed, 0)
}

/// Draws trial `trial` of an experiment: stream `trial` of the generator keyed
/// by `master_seed`, so the result depends only on `(master_seed, trial)`.
pub fn sample_trial(
    inst: &ProblemInstance,
    master_seed: u64,
    trial: u64,
) -> Result<SampledDataset> {
    sample_stream(inst, master_seed, trial)
}

fn sample_stream(inst: &ProblemInstance, seed: u64, stream: u64) -> Result<SampledDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let (n, p) = (inst.n, inst.p);
    let scales: Vec<f64> = inst.lambdas.iter().map(|l| l.sqrt()).collect();

    let mut rows = Vec::with_capacity(n * p);
    for _ in 0..n {
        for s in &scales {
            let z: f64 = match inst.feature_law {
                FeatureLaw::Gaussian => StandardNormal.sample(&mut rng),
                FeatureLaw::Rademacher => {
                    if rng.random_bool(0.5) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            rows.push(s * z);
        }
    }
    let x = DMatrix::from_row_slice(n, p, &rows);

    let epsilon = if inst.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, inst.noise_sigma).expect("validated sigma");
        DVector::from_fn(n, |_, _| normal.sample(&mut rng))
    } else {
        DVector::zeros(n)
    };
    let y = &x * &inst.theta_star + &epsilon;
    SampledDataset::assemble(x, y, epsilon, seed, stream)
}

/// `½ Σ_i λ_i (θ_i − θ*_i)²`.
pub fn exact_risk(
    spectrum: &Spectrum,
    theta: &DVector<f64>,
    theta_star: &DVector<f64>,
) -> Result<f64> {
    let p = spectrum
        .dim()
        .finite()
        .ok_or_else(|| Error::Unsupported("exact risk needs a finite spectrum".into()))?;
    for len in [theta.len(), theta_star.len()] {
        if len != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: len,
            });
        }
    }
    Ok(risk_with_lambdas(&spectrum.values(p), theta, theta_star))
}

pub(crate) fn risk_with_lambdas(
    lambdas: &[f64],
    theta: &DVector<f64>,
    theta_star: &DVector<f64>,
) -> f64 {
    0.5 * lambdas
        .iter()
        .zip(theta.iter().zip(theta_star.iter()))
        .map(|(l, (a, b))| l * (a - b) * (a - b))
        .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpreadRow {
    pub k: usize,
    /// `μ_{k+1} / (Σ_{i>k} λ_i + n λ_{k+1})`.
    pub ratio: f64,
}

/// Ratios of Gram eigenvalues to the scale `Σ_{i>k} λ_i + n λ_{k+1}` at
/// `k ∈ {0, k0, n−1}`.
pub fn eigen_spread_check(
    ds: &SampledDataset,
    spectrum: &Spectrum,
    n: usize,
    c0: f64,
) -> Result<Vec<SpreadRow>> {
    if ds.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: ds.n(),
        });
    }
    let k0 = spectrum::k0_dim(spectrum, n, c0)?.min(n - 1);
    let mut ks = vec![0, k0, n - 1];
    ks.sort_unstable();
    ks.dedup();
    Ok(ks
        .into_iter()
        .map(|k| {
            let lam = spectrum.eigenvalue(k + 1).unwrap_or(0.0);
            let scale = spectrum.tail_sum(k) + lam * n as f64;
            SpreadRow {
                k,
                ratio: ds.svd.mu[k] / scale,
            }
        })
        .collect())
}
