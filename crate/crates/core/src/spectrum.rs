//! Covariance spectra and the effective dimensions built on their tail sums.
//!
//! A spectrum is the non-increasing eigenvalue sequence `λ_1 ≥ λ_2 ≥ …` of the
//! feature covariance in its own eigenbasis. Five parametric families are
//! supported; the two decaying families may also be used with an infinite
//! ambient dimension, in which case tail sums are evaluated analytically
//! (Hurwitz zeta for `1/i^α`, an integral split plus Euler–Maclaurin
//! corrections for `1/(i log^β(i+1))`).
//!
//! Effective dimensions are computed by ascending linear scans:
//!
//! ```text
//! k0 = min { l ≥ 0 : λ_{l+1} ≤ c0 · Σ_{i>l} λ_i / n }
//! k1 = min { l ≥ 0 : λ_{l+1} ≤ c1 · Σ_{i>0} λ_i / n }
//! k2 = min { l ≥ 0 : Σ_{i>l} λ_i + n λ_{l+1} ≤ c2 · c(t,n) · Σ_{i>0} λ_i }
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

/// Identifiers accepted for the `family` key of a spectrum config section.
pub const FAMILY_IDS: [&str; 5] = [
    "inv_poly",
    "inv_log_poly",
    "constant",
    "piecewise_constant",
    "explicit",
];

/// Ambient dimension of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Finite(usize),
    Infinite,
}

impl Dim {
    pub fn finite(self) -> Option<usize> {
        match self {
            Dim::Finite(p) => Some(p),
            Dim::Infinite => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpectrumFamily {
    /// `λ_i = 1/i^α`.
    InversePolynomial {
        alpha: f64,
    },
    /// `λ_i = 1/(i · ln^β(i+1))`.
    InverseLogPolynomial {
        beta: f64,
    },
    /// `count` equal eigenvalues `1/count`, with `count = ⌈n^{1+ε}⌉`.
    Constant {
        epsilon: f64,
        count: usize,
    },
    /// `head` eigenvalues `1/head`, then `total − head` eigenvalues `1/(total − head)`.
    PiecewiseConstant {
        r: f64,
        q: f64,
        head: usize,
        total: usize,
    },
    Explicit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    family: SpectrumFamily,
    dim: Dim,
}

impl Spectrum {
    pub fn inverse_polynomial(alpha: f64, dim: Dim) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidSpectrum(format!(
                "inv_poly needs alpha > 0, got {alpha}"
            )));
        }
        if dim == Dim::Infinite && alpha <= 1.0 {
            return Err(Error::InvalidSpectrum(format!(
                "inv_poly with alpha = {alpha} is not summable in infinite dimension"
            )));
        }
        Self::with_dim(SpectrumFamily::InversePolynomial { alpha }, dim)
    }

    pub fn inverse_log_polynomial(beta: f64, dim: Dim) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidSpectrum(format!(
                "inv_log_poly needs beta > 0, got {beta}"
            )));
        }
        if dim == Dim::Infinite && beta <= 1.0 {
            return Err(Error::InvalidSpectrum(format!(
                "inv_log_poly with beta = {beta} is not summable in infinite dimension"
            )));
        }
        Self::with_dim(SpectrumFamily::InverseLogPolynomial { beta }, dim)
    }

    /// `⌈n^{1+ε}⌉` equal eigenvalues summing to one.
    pub fn constant(epsilon: f64, n: usize) -> Result<Self> {
        if !(epsilon > 0.0) || n == 0 {
            return Err(Error::InvalidSpectrum(format!(
                "constant needs epsilon > 0 and n >= 1, got epsilon = {epsilon}, n = {n}"
            )));
        }
        let count = ceil_pow(n, 1.0 + epsilon);
        Self::with_dim(
            SpectrumFamily::Constant { epsilon, count },
            Dim::Finite(count),
        )
    }

    /// Two plateaus: `s = ⌈n^r⌉` eigenvalues `1/s`, then `d − s` eigenvalues
    /// `1/(d − s)` with `d = ⌈n^q⌉`.
    pub fn piecewise_constant(r: f64, q: f64, n: usize) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) || !(q > 1.0) || n == 0 {
            return Err(Error::InvalidSpectrum(format!(
                "piecewise_constant needs 0 < r <= 1, q > 1, n >= 1; got r = {r}, q = {q}, n = {n}"
            )));
        }
        let head = ceil_pow(n, r);
        let total = ceil_pow(n, q);
        if total <= head {
            return Err(Error::InvalidSpectrum(format!(
                "piecewise_constant: d = {total} must exceed s = {head}"
            )));
        }
        // The second plateau must not exceed the first for a non-increasing sequence.
        if total - head < head {
            return Err(Error::InvalidSpectrum(format!(
                "piecewise_constant: d - s = {} < s = {head} breaks monotonicity",
                total - head
            )));
        }
        Self::with_dim(
            SpectrumFamily::PiecewiseConstant { r, q, head, total },
            Dim::Finite(total),
        )
    }

    pub fn explicit(values: Vec<f64>) -> Result<Self> {
        let len = values.len();
        Self::with_dim(SpectrumFamily::Explicit(values), Dim::Finite(len))
    }

    pub fn with_dim(family: SpectrumFamily, dim: Dim) -> Result<Self> {
        match (&family, dim) {
            (SpectrumFamily::Explicit(values), Dim::Finite(p)) => {
                if values.is_empty() {
                    return Err(Error::InvalidSpectrum("explicit spectrum is empty".into()));
                }
                if p != values.len() {
                    return Err(Error::DimensionMismatch {
                        expected: values.len(),
                        got: p,
                    });
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(Error::InvalidSpectrum(
                        "explicit eigenvalues must be positive and finite".into(),
                    ));
                }
                if values.windows(2).any(|w| w[1] > w[0]) {
                    return Err(Error::InvalidSpectrum(
                        "explicit eigenvalues must be non-increasing".into(),
                    ));
                }
            }
            (SpectrumFamily::Explicit(_), Dim::Infinite)
            | (SpectrumFamily::Constant { .. }, Dim::Infinite)
            | (SpectrumFamily::PiecewiseConstant { .. }, Dim::Infinite) => {
                return Err(Error::Unsupported(
                    "infinite dimension is only available for inv_poly and inv_log_poly".into(),
                ));
            }
            (SpectrumFamily::Constant { count, .. }, Dim::Finite(p)) if *count != p => {
                return Err(Error::DimensionMismatch {
                    expected: *count,
                    got: p,
                });
            }
            (SpectrumFamily::PiecewiseConstant { total, .. }, Dim::Finite(p)) if *total != p => {
                return Err(Error::DimensionMismatch {
                    expected: *total,
                    got: p,
                });
            }
            (_, Dim::Finite(0)) => {
                return Err(Error::InvalidSpectrum("dimension must be positive".into()));
            }
            _ => {}
        }
        Ok(Spectrum { family, dim })
    }

    pub fn family(&self) -> &SpectrumFamily {
        &self.family
    }

    pub fn dim(&self) -> Dim {
        self.dim
    }

    /// Short human-readable name, e.g. `inv_poly(alpha=2)`.
    pub fn label(&self) -> String {
        let base = match &self.family {
            SpectrumFamily::InversePolynomial { alpha } => format!("inv_poly(alpha={alpha})"),
            SpectrumFamily::InverseLogPolynomial { beta } => format!("inv_log_poly(beta={beta})"),
            SpectrumFamily::Constant { epsilon, count } => {
                format!("constant(epsilon={epsilon}, count={count})")
            }
            SpectrumFamily::PiecewiseConstant { r, q, head, total } => {
                format!("piecewise_constant(r={r}, q={q}, s={head}, d={total})")
            }
            SpectrumFamily::Explicit(v) => format!("explicit(len={})", v.len()),
        };
        match self.dim {
            Dim::Finite(p) => format!("{base}[p={p}]"),
            Dim::Infinite => format!("{base}[p=inf]"),
        }
    }

    /// `λ_i` for a 1-based index.
    pub fn eigenvalue(&self, i: usize) -> Result<f64> {
        let len = self.dim.finite().unwrap_or(usize::MAX);
        if i == 0 || i > len {
            return Err(Error::OutOfRange { index: i, len });
        }
        Ok(self.raw_eigenvalue(i))
    }

    /// `λ_i` without range checks; zero past the end of a finite spectrum.
    fn raw_eigenvalue(&self, i: usize) -> f64 {
        if let Dim::Finite(p) = self.dim {
            if i > p {
                return 0.0;
            }
        }
        let x = i as f64;
        match &self.family {
            SpectrumFamily::InversePolynomial { alpha } => x.powf(-alpha),
            SpectrumFamily::InverseLogPolynomial { beta } => 1.0 / (x * x.ln_1p().powf(*beta)),
            SpectrumFamily::Constant { count, .. } => 1.0 / *count as f64,
            SpectrumFamily::PiecewiseConstant { head, total, .. } => {
                if i <= *head {
                    1.0 / *head as f64
                } else {
                    1.0 / (*total - *head) as f64
                }
            }
            SpectrumFamily::Explicit(v) => v[i - 1],
        }
    }

    /// The first `count` eigenvalues (fewer if the spectrum is shorter).
    pub fn values(&self, count: usize) -> Vec<f64> {
        let m = self.dim.finite().map_or(count, |p| p.min(count));
        (1..=m).map(|i| self.raw_eigenvalue(i)).collect()
    }

    /// `‖Σ‖ = λ_1`.
    pub fn top(&self) -> f64 {
        self.raw_eigenvalue(1)
    }

    /// `Σ_{i>0} λ_i`.
    pub fn trace(&self) -> f64 {
        self.tail_sum(0)
    }

    /// `Σ_{i>k} λ_i`. Exact summation for finite dimension; analytic tail
    /// with absolute error below 1e-10 for infinite dimension.
    pub fn tail_sum(&self, k: usize) -> f64 {
        self.tail_power_sum(k, 1)
    }

    /// `Σ_{i>k} λ_i²`.
    pub fn tail_sum_squares(&self, k: usize) -> f64 {
        self.tail_power_sum(k, 2)
    }

    fn tail_power_sum(&self, k: usize, power: i32) -> f64 {
        match (&self.family, self.dim) {
            (SpectrumFamily::Constant { count, .. }, _) => {
                let n = *count as f64;
                count.saturating_sub(k) as f64 / n.powi(power)
            }
            (SpectrumFamily::PiecewiseConstant { head, total, .. }, _) => {
                let tail_len = (*total - *head) as f64;
                let head_part = head.saturating_sub(k) as f64 / (*head as f64).powi(power);
                let tail_part = (*total - k.max(*head)) as f64 / tail_len.powi(power);
                if k >= *total {
                    0.0
                } else {
                    head_part + tail_part
                }
            }
            (_, Dim::Finite(p)) => {
                // Ascending magnitude order keeps round-off small.
                stats::neumaier_sum(
                    ((k + 1)..=p)
                        .rev()
                        .map(|i| self.raw_eigenvalue(i).powi(power)),
                )
            }
            (SpectrumFamily::InversePolynomial { alpha }, Dim::Infinite) => {
                hurwitz_zeta(alpha * power as f64, (k + 1) as f64)
            }
            (SpectrumFamily::InverseLogPolynomial { beta }, Dim::Infinite) => {
                log_poly_tail(*beta, k, power)
            }
            (SpectrumFamily::Explicit(_), Dim::Infinite) => {
                unreachable!("rejected at construction")
            }
        }
    }

    /// Effective rank `r(Σ) = Σ λ_i / λ_1`.
    pub fn effective_rank(&self) -> f64 {
        self.trace() / self.top()
    }

    /// `R_k(Σ) = (Σ_{i>k} λ_i)² / Σ_{i>k} λ_i²`.
    pub fn big_r(&self, k: usize) -> Result<f64> {
        let sq = self.tail_sum_squares(k);
        if !(sq > 0.0) {
            return Err(Error::DivisionGuard(format!(
                "R_{k} undefined: tail of squared eigenvalues is zero for {}",
                self.label()
            )));
        }
        let t = self.tail_sum(k);
        Ok(t * t / sq)
    }
}

fn ceil_pow(n: usize, e: f64) -> usize {
    let v = (n as f64).powf(e);
    // Guard against 100^1.5 landing a hair above an integer.
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// Hurwitz zeta `ζ(s, a) = Σ_{k≥0} (k + a)^{-s}` for `s > 1`, `a > 0`.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const SHIFT: f64 = 32.0;
    // B_{2j} / (2j)!
    const BERNOULLI: [f64; 5] = [
        1.0 / 12.0,
        -1.0 / 720.0,
        1.0 / 30_240.0,
        -1.0 / 1_209_600.0,
        1.0 / 47_900_160.0,
    ];
    let direct = (SHIFT - a).ceil().max(0.0) as usize;
    let head = stats::neumaier_sum((0..direct).rev().map(|k| (k as f64 + a).powf(-s)));
    let x = a + direct as f64;
    let mut tail = x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // rising factorial s (s+1) … (s+2j−2) times x^{-s-2j+1}
    let mut rising = s;
    let mut xpow = x.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        tail += b * rising * xpow;
        let m = 2.0 * j as f64;
        rising *= (s + m + 1.0) * (s + m + 2.0);
        xpow /= x * x;
    }
    head + tail
}

/// `Σ_{i>k} f(i)^power` for `f(i) = 1/(i ln^β(i+1))` in infinite dimension.
fn log_poly_tail(beta: f64, k: usize, power: i32) -> f64 {
    const ANCHOR: usize = 4096;
    let f = |x: f64| 1.0 / (x * x.ln_1p().powf(beta));
    let fprime = |x: f64| {
        let l = x.ln_1p();
        -1.0 / (x * x * l.powf(beta)) - beta / (x * (x + 1.0) * l.powf(beta + 1.0))
    };
    let start = (k + 1).max(ANCHOR);
    let head = stats::neumaier_sum(((k + 1)..start).rev().map(|i| f(i as f64).powi(power)));

    let big_k = start as f64;
    let u0 = big_k.ln_1p();
    // Substituting u = ln(x + 1) turns the integrand into a smooth function of u.
    let (integral, value, deriv) = if power == 1 {
        let smooth = |u: f64| u.powf(-beta) / u.exp_m1();
        let integral = u0.powf(1.0 - beta) / (beta - 1.0) + simpson(smooth, u0, u0 + 60.0, 6000);
        (integral, f(big_k), fprime(big_k))
    } else {
        let smooth = |u: f64| {
            let e = u.exp_m1();
            (u.exp() / (e * e)) * u.powf(-2.0 * beta)
        };
        let integral = simpson(smooth, u0, u0 + 60.0, 6000);
        let fv = f(big_k);
        (integral, fv * fv, 2.0 * fv * fprime(big_k))
    };
    // Σ_{i≥K} g(i) ≈ ∫_K^∞ g + g(K)/2 − g'(K)/12
    head + integral + 0.5 * value - deriv / 12.0
}

fn simpson<F: Fn(f64) -> f64>(g: F, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = g(a) + g(b);
    for j in 1..m {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * g(a + j as f64 * h);
    }
    acc * h / 3.0
}

/// Maximum number of indices an effective-dimension scan may visit.
pub fn scan_cap(n: usize) -> usize {
    10 * n + 1_000_000
}

/// Walks `l = 0, 1, 2, …` keeping `λ_{l+1}` and `Σ_{i>l} λ_i` in step.
struct TailCursor<'a> {
    spectrum: &'a Spectrum,
    l: usize,
    tail: f64,
}

impl<'a> TailCursor<'a> {
    const REANCHOR: usize = 1024;

    fn new(spectrum: &'a Spectrum) -> Self {
        TailCursor {
            spectrum,
            l: 0,
            tail: spectrum.tail_sum(0),
        }
    }

    fn next_eigenvalue(&self) -> f64 {
        self.spectrum.raw_eigenvalue(self.l + 1)
    }

    fn advance(&mut self) {
        let lam = self.next_eigenvalue();
        self.l += 1;
        if self.l.is_multiple_of(Self::REANCHOR) {
            self.tail = self.spectrum.tail_sum(self.l);
        } else {
            self.tail = (self.tail - lam).max(0.0);
        }
    }
}

/// First `l` at which `accept(λ_{l+1}, Σ_{i>l} λ_i)` holds. `Ok(None)` means the
/// cap was hit.
fn scan<F>(spectrum: &Spectrum, n: usize, accept: F) -> Result<Option<usize>>
where
    F: Fn(f64, f64) -> bool,
{
    // Plateau families have closed-form answers at the plateau boundaries.
    let cap = scan_cap(n);
    match spectrum.family() {
        SpectrumFamily::Constant { count, .. } => {
            return Ok(first_match(spectrum, &[0, *count], &accept));
        }
        SpectrumFamily::PiecewiseConstant { head, total, .. } => {
            return Ok(first_match(spectrum, &[0, *head, *total], &accept));
        }
        _ => {}
    }
    let top = spectrum.top();
    let mut cursor = TailCursor::new(spectrum);
    loop {
        let lam = cursor.next_eigenvalue();
        if accept(lam, cursor.tail) {
            return Ok(Some(cursor.l));
        }
        if let Dim::Finite(p) = spectrum.dim() {
            if cursor.l >= p {
                return Ok(None);
            }
        } else if lam < f64::EPSILON * top {
            return Ok(None);
        }
        if cursor.l >= cap {
            return Ok(None);
        }
        cursor.advance();
    }
}

/// On a plateau `λ_{l+1}` is constant and the tail is affine in `l`, so each
/// predicate used here is monotone (in one direction or the other) inside a
/// plateau: check its start, then bisect if only its end accepts.
fn first_match<F>(spectrum: &Spectrum, starts: &[usize], accept: &F) -> Option<usize>
where
    F: Fn(f64, f64) -> bool,
{
    let p = spectrum.dim().finite().expect("plateau spectra are finite");
    let holds = |l: usize| accept(spectrum.raw_eigenvalue(l + 1), spectrum.tail_sum(l));
    for (idx, &lo) in starts.iter().enumerate() {
        let hi = starts.get(idx + 1).copied().unwrap_or(p + 1).min(p + 1);
        if lo >= hi {
            continue;
        }
        if holds(lo) {
            return Some(lo);
        }
        if holds(hi - 1) {
            let (mut a, mut b) = (lo + 1, hi - 1);
            while a < b {
                let mid = a + (b - a) / 2;
                if holds(mid) {
                    b = mid;
                } else {
                    a = mid + 1;
                }
            }
            return Some(a);
        }
    }
    None
}

/// The `(k0, k1, r(Σ))` triple at sample size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffectiveDims {
    pub k0: usize,
    pub k1: usize,
    pub r_sigma: f64,
    pub c0: f64,
    pub c1: f64,
}

/// Result of a `k2` scan; `capped` is set when no index up to the cap qualified
/// and `value` then holds the cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct K2Dim {
    pub value: usize,
    pub capped: bool,
}

fn check_constants(n: usize, constants: &[f64]) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be >= 1".into()));
    }
    if constants.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
        return Err(Error::InvalidArgument(
            "constants must be positive and finite".into(),
        ));
    }
    Ok(())
}

pub fn k0_dim(spectrum: &Spectrum, n: usize, c0: f64) -> Result<usize> {
    check_constants(n, &[c0])?;
    let nf = n as f64;
    scan(spectrum, n, |lam, tail| lam <= c0 * tail / nf)?.ok_or_else(|| Error::Pathological {
        spectrum: spectrum.label(),
        cap: scan_cap(n),
    })
}

pub fn k1_dim(spectrum: &Spectrum, n: usize, c1: f64) -> Result<usize> {
    check_constants(n, &[c1])?;
    let threshold = c1 * spectrum.trace() / n as f64;
    scan(spectrum, n, |lam, _| lam <= threshold)?.ok_or_else(|| Error::Pathological {
        spectrum: spectrum.label(),
        cap: scan_cap(n),
    })
}

pub fn effective_dims(spectrum: &Spectrum, n: usize, c0: f64, c1: f64) -> Result<EffectiveDims> {
    Ok(EffectiveDims {
        k0: k0_dim(spectrum, n, c0)?,
        k1: k1_dim(spectrum, n, c1)?,
        r_sigma: spectrum.effective_rank(),
        c0,
        c1,
    })
}

/// `k2` with the product `c2 · c(t,n)` supplied as two factors.
pub fn k2_dim(spectrum: &Spectrum, n: usize, c2: f64, c_tn: f64) -> Result<K2Dim> {
    check_constants(n, &[c2, c_tn])?;
    let nf = n as f64;
    let threshold = c2 * c_tn * spectrum.trace();
    Ok(
        match scan(spectrum, n, |lam, tail| tail + nf * lam <= threshold)? {
            Some(value) => K2Dim {
                value,
                capped: false,
            },
            None => K2Dim {
                value: spectrum.dim().finite().unwrap_or_else(|| scan_cap(n)),
                capped: true,
            },
        },
    )
}

/// Family descriptor as it appears in config files; resolved against a sample
/// size (and, for the decaying families, an ambient dimension).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    InvPoly { alpha: f64 },
    InvLogPoly { beta: f64 },
    Constant { epsilon: f64 },
    PiecewiseConstant { r: f64, q: f64 },
    Explicit { values: Vec<f64> },
}

impl SpectrumSpec {
    pub fn resolve(&self, n: usize, dim: Dim) -> Result<Spectrum> {
        match self {
            SpectrumSpec::InvPoly { alpha } => Spectrum::inverse_polynomial(*alpha, dim),
            SpectrumSpec::InvLogPoly { beta } => Spectrum::inverse_log_polynomial(*beta, dim),
            SpectrumSpec::Constant { epsilon } => Spectrum::constant(*epsilon, n),
            SpectrumSpec::PiecewiseConstant { r, q } => Spectrum::piecewise_constant(*r, *q, n),
            SpectrumSpec::Explicit { values } => Spectrum::explicit(values.clone()),
        }
    }

    /// Whether the family's eigenvalue sequence is fixed independently of `n`.
    pub fn is_fixed(&self) -> bool {
        matches!(
            self,
            SpectrumSpec::InvPoly { .. }
                | SpectrumSpec::InvLogPoly { .. }
                | SpectrumSpec::Explicit { .. }
        )
    }

    /// File-name friendly identifier, e.g. `inv_poly_a2`.
    pub fn id(&self) -> String {
        match self {
            SpectrumSpec::InvPoly { alpha } => format!("inv_poly_a{alpha}"),
            SpectrumSpec::InvLogPoly { beta } => format!("inv_log_poly_b{beta}"),
            SpectrumSpec::Constant { epsilon } => format!("constant_e{epsilon}"),
            SpectrumSpec::PiecewiseConstant { r, q } => format!("piecewise_constant_r{r}_q{q}"),
            SpectrumSpec::Explicit { values } => format!("explicit_{}", values.len()),
        }
    }

    /// Display formula for the eigenvalues, e.g. `1/i^2`.
    pub fn formula(&self) -> String {
        match self {
            SpectrumSpec::InvPoly { alpha } if *alpha == 1.0 => "1/i".into(),
            SpectrumSpec::InvPoly { alpha } => format!("1/i^{alpha}"),
            SpectrumSpec::InvLogPoly { beta } if *beta == 1.0 => "1/(i log(i+1))".into(),
            SpectrumSpec::InvLogPoly { beta } => format!("1/(i log^{beta}(i+1))"),
            SpectrumSpec::Constant { epsilon } => format!("1/n^(1+{epsilon})"),
            SpectrumSpec::PiecewiseConstant { r, q } => format!("plateaus s=n^{r}, d=n^{q}"),
            SpectrumSpec::Explicit { values } => format!("explicit[{}]", values.len()),
        }
    }

    /// Asymptotic order of `k1(n)` for the family.
    pub fn k1_order(&self) -> String {
        match self {
            SpectrumSpec::InvPoly { alpha } if *alpha <= 1.0 => "Θ(n)".into(),
            SpectrumSpec::InvPoly { alpha } => format!("Θ(n^(1/{alpha}))"),
            SpectrumSpec::InvLogPoly { beta } if *beta == 1.0 => "Θ(n/log n)".into(),
            SpectrumSpec::InvLogPoly { beta } => format!("Θ(n/log^{beta} n)"),
            SpectrumSpec::Constant { .. } => "0".into(),
            SpectrumSpec::PiecewiseConstant { r, .. } => format!("Θ(n^{r})"),
            SpectrumSpec::Explicit { .. } => "-".into(),
        }
    }
}

/// Builds a [`SpectrumSpec`] from a family identifier and named shape parameters.
pub fn spec_from_parts(
    family: &str,
    param: impl Fn(&str) -> Option<f64>,
    values: Option<Vec<f64>>,
) -> Result<SpectrumSpec> {
    let need = |name: &str| {
        param(name)
            .ok_or_else(|| Error::Config(format!("family `{family}` requires parameter `{name}`")))
    };
    Ok(match family {
        "inv_poly" => SpectrumSpec::InvPoly {
            alpha: need("alpha")?,
        },
        "inv_log_poly" => SpectrumSpec::InvLogPoly {
            beta: need("beta")?,
        },
        "constant" => SpectrumSpec::Constant {
            epsilon: need("epsilon")?,
        },
        "piecewise_constant" => SpectrumSpec::PiecewiseConstant {
            r: need("r")?,
            q: need("q")?,
        },
        "explicit" => SpectrumSpec::Explicit {
            values: values
                .ok_or_else(|| Error::Config("family `explicit` requires `values`".into()))?,
        },
        other => {
            return Err(Error::UnknownFamily {
                name: other.to_string(),
            })
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub k0: usize,
    pub k1: usize,
    pub r_sigma: f64,
}

/// Effective dimensions over a strictly increasing grid of sample sizes.
///
/// Fixed families are resolved once at `dim`; the plateau families are rebuilt
/// for every `n`.
pub fn rate_table(
    spec: &SpectrumSpec,
    dim: Dim,
    n_grid: &[usize],
    c0: f64,
    c1: f64,
) -> Result<Vec<RateRow>> {
    if n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "n_grid must be strictly increasing".into(),
        ));
    }
    n_grid
        .iter()
        .map(|&n| {
            let spectrum = spec.resolve(n, dim)?;
            let dims = effective_dims(&spectrum, n, c0, c1)?;
            Ok(RateRow {
                n,
                k0: dims.k0,
                k1: dims.k1,
                r_sigma: dims.r_sigma,
            })
        })
        .collect()
}

/// Log-log slopes of `k0(n)` and `k1(n)`; `None` when fewer than two rows have
/// a positive value.
pub fn rate_slopes(rows: &[RateRow]) -> (Option<f64>, Option<f64>) {
    let slope = |pick: fn(&RateRow) -> usize| {
        let (xs, ys): (Vec<f64>, Vec<f64>) = rows
            .iter()
            .filter(|r| pick(r) > 0)
            .map(|r| (r.n as f64, pick(r) as f64))
            .unzip();
        stats::loglog_slope(&xs, &ys)
    };
    (slope(|r| r.k0), slope(|r| r.k1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv_poly(alpha: f64, p: usize) -> Spectrum {
        Spectrum::inverse_polynomial(alpha, Dim::Finite(p)).unwrap()
    }

    #[test]
    fn eigenvalue_examples() {
        assert_close!(inv_poly(2.0, 1000).eigenvalue(10).unwrap(), 0.01, 1e-15);
        let e = Spectrum::explicit(vec![3.0, 2.0, 1.0]).unwrap();
        assert_eq!(e.eigenvalue(1).unwrap(), 3.0);
        let lp = Spectrum::inverse_log_polynomial(2.0, Dim::Infinite).unwrap();
        // 1 / ln(2)^2
        assert_close!(lp.eigenvalue(1).unwrap(), 2.081_368_981_005_607, 1e-12);
    }

    #[test]
    fn eigenvalue_out_of_range() {
        let e = Spectrum::explicit(vec![3.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            e.eigenvalue(4),
            Err(Error::OutOfRange { index: 4, len: 3 })
        ));
        assert!(matches!(e.eigenvalue(0), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn tail_sum_examples() {
        // Naive loop, summed from the small end.
        let mut naive = 0.0f64;
        for i in (1..=1000).rev() {
            naive += 1.0 / (i as f64 * i as f64);
        }
        assert_close!(inv_poly(2.0, 1000).tail_sum(0), naive, 1e-13);
        assert_close!(naive, 1.643_934_566_681_562, 1e-13);
        let e = Spectrum::explicit(vec![3.0, 2.0, 1.0]).unwrap();
        assert_eq!(e.tail_sum(3), 0.0);
        let c = Spectrum::constant(0.5, 100).unwrap();
        assert_close!(c.tail_sum(0), 1.0, 1e-15);
    }

    #[test]
    fn infinite_tails_match_reference_values() {
        // Reference values from arbitrary-precision summation (mpmath.nsum / zeta).
        let z2 = Spectrum::inverse_polynomial(2.0, Dim::Infinite).unwrap();
        assert_close!(z2.tail_sum(0), std::f64::consts::PI.powi(2) / 6.0, 1e-12);
        assert_close!(z2.tail_sum(1000), 9.995_001_666_666_666e-4, 1e-12);
        assert_close!(
            z2.tail_sum_squares(0),
            std::f64::consts::PI.powi(4) / 90.0,
            1e-12
        );
        let z3 = Spectrum::inverse_polynomial(3.0, Dim::Infinite).unwrap();
        assert_close!(z3.tail_sum(0), 1.202_056_903_159_594_3, 1e-12);

        let lp2 = Spectrum::inverse_log_polynomial(2.0, Dim::Infinite).unwrap();
        assert_close!(lp2.tail_sum(0), LOGPOLY2_TOTAL, 1e-10);
        assert_close!(lp2.tail_sum(10), LOGPOLY2_TAIL10, 1e-10);
        assert_close!(lp2.tail_sum_squares(0), LOGPOLY2_SQ_TOTAL, 1e-10);
        let lp3 = Spectrum::inverse_log_polynomial(3.0, Dim::Infinite).unwrap();
        assert_close!(lp3.tail_sum(0), LOGPOLY3_TOTAL, 1e-10);
    }

    // Direct float sum to 2e5 plus a 30-digit quadrature of the remaining
    // integral (in u = ln(x+1)) and Euler-Maclaurin end corrections; stable
    // when the split point moves to 5e4.
    const LOGPOLY2_TOTAL: f64 = 3.387_735_531_952_002;
    const LOGPOLY2_TAIL10: f64 = 0.418_546_598_000_012_1;
    const LOGPOLY2_SQ_TOTAL: f64 = 4.552_580_647_013_062;
    const LOGPOLY3_TOTAL: f64 = 3.753_237_562_092_349;

    #[test]
    fn tail_additivity_infinite() {
        for spectrum in [
            Spectrum::inverse_polynomial(2.0, Dim::Infinite).unwrap(),
            Spectrum::inverse_log_polynomial(2.5, Dim::Infinite).unwrap(),
        ] {
            for k in [0usize, 1, 7, 100, 4094, 4095, 4096, 10_000] {
                let lhs = spectrum.tail_sum(k);
                let rhs = spectrum.tail_sum(k + 1) + spectrum.eigenvalue(k + 1).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12 * lhs, "k={k}: {lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn rejects_non_summable_infinite() {
        assert!(Spectrum::inverse_polynomial(1.0, Dim::Infinite).is_err());
        assert!(Spectrum::inverse_log_polynomial(1.0, Dim::Infinite).is_err());
        assert!(matches!(
            Spectrum::with_dim(SpectrumFamily::Explicit(vec![1.0]), Dim::Infinite),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn explicit_must_be_non_increasing() {
        assert!(Spectrum::explicit(vec![1.0, 2.0]).is_err());
        assert!(Spectrum::explicit(vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn k1_inverse_square_example() {
        // threshold 1.64393/100; λ_8 = 1/64 is the first eigenvalue below it
        let s = inv_poly(2.0, 1000);
        assert_eq!(k1_dim(&s, 100, 1.0).unwrap(), 7);
    }

    #[test]
    fn constant_family_dims_vanish() {
        for n in [10, 100, 1000] {
            let s = Spectrum::constant(0.3, n).unwrap();
            let d = effective_dims(&s, n, 1.0, 1.0).unwrap();
            assert_eq!((d.k0, d.k1), (0, 0));
        }
        let s = Spectrum::constant(0.5, 100).unwrap();
        assert_eq!(s.dim(), Dim::Finite(1000));
        assert_close!(s.eigenvalue(1).unwrap(), 1e-3, 1e-18);
    }

    #[test]
    fn piecewise_constant_dims_equal_head() {
        for n in [16, 100, 400] {
            let s = Spectrum::piecewise_constant(0.5, 2.0, n).unwrap();
            let head = (n as f64).sqrt().ceil() as usize;
            let d = effective_dims(&s, n, 1.0, 1.0).unwrap();
            assert_eq!((d.k0, d.k1), (head, head), "n = {n}");
        }
    }

    #[test]
    fn piecewise_scan_agrees_with_linear_scan() {
        let s = Spectrum::piecewise_constant(0.5, 1.5, 64).unwrap();
        let values = s.values(usize::MAX);
        let explicit = Spectrum::explicit(values).unwrap();
        for n in [8usize, 64, 500] {
            for c in [0.3, 1.0, 4.0] {
                assert_eq!(k0_dim(&s, n, c).unwrap(), k0_dim(&explicit, n, c).unwrap());
                assert_eq!(k1_dim(&s, n, c).unwrap(), k1_dim(&explicit, n, c).unwrap());
                assert_eq!(
                    k2_dim(&s, n, 1.0, c).unwrap(),
                    k2_dim(&explicit, n, 1.0, c).unwrap()
                );
            }
        }
    }

    #[test]
    fn k2_examples() {
        let e = Spectrum::explicit(vec![1.0]).unwrap();
        assert_eq!(
            k2_dim(&e, 1, 2.0, 1.0).unwrap(),
            K2Dim {
                value: 0,
                capped: false
            }
        );

        let s = inv_poly(2.0, 1000);
        let n = 100;
        let big = (s.trace() + n as f64 * s.top()) / s.trace();
        assert_eq!(k2_dim(&s, n, 1.0, big).unwrap().value, 0);

        // with c2 = c1 + 1 and c(t,n) = 1 the scan lands at or below k1
        let k1 = k1_dim(&s, n, 1.0).unwrap();
        let k2 = k2_dim(&s, n, 2.0, 1.0).unwrap();
        assert!(k2.value <= k1, "k2 = {} > k1 = {k1}", k2.value);
    }

    #[test]
    fn scan_results_satisfy_definitions() {
        let s = inv_poly(1.5, 5000);
        for n in [10usize, 100, 1000] {
            let nf = n as f64;
            let total = s.trace();
            let k0 = k0_dim(&s, n, 1.0).unwrap();
            let lam = |i: usize| s.eigenvalue(i).unwrap_or(0.0);
            assert!(lam(k0 + 1) <= s.tail_sum(k0) / nf);
            assert!(k0 == 0 || lam(k0) > s.tail_sum(k0 - 1) / nf);
            let k1 = k1_dim(&s, n, 1.0).unwrap();
            assert!(lam(k1 + 1) <= total / nf);
            assert!(k1 == 0 || lam(k1) > total / nf);
            let k2 = k2_dim(&s, n, 1.0, 0.5).unwrap().value;
            assert!(s.tail_sum(k2) + nf * lam(k2 + 1) <= 0.5 * total);
            assert!(k2 == 0 || s.tail_sum(k2 - 1) + nf * lam(k2) > 0.5 * total);
        }
    }

    #[test]
    fn rate_table_examples() {
        let grid = [100, 400, 1600, 6400];
        let rows = rate_table(
            &SpectrumSpec::InvPoly { alpha: 2.0 },
            Dim::Infinite,
            &grid,
            1.0,
            1.0,
        )
        .unwrap();
        let ratios: Vec<f64> = rows
            .iter()
            .map(|r| r.k1 as f64 / (r.n as f64).sqrt())
            .collect();
        assert!(ratios.iter().all(|r| (0.5..1.0).contains(r)), "{ratios:?}");

        let rows = rate_table(
            &SpectrumSpec::InvLogPoly { beta: 2.0 },
            Dim::Infinite,
            &grid,
            1.0,
            1.0,
        )
        .unwrap();
        let scaled: Vec<f64> = rows
            .iter()
            .map(|r| r.k1 as f64 * (r.n as f64).ln().powi(2) / r.n as f64)
            .collect();
        let (lo, hi) = scaled
            .iter()
            .fold((f64::MAX, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(hi / lo < 2.0, "{scaled:?}");

        let rows = rate_table(
            &SpectrumSpec::Constant { epsilon: 0.5 },
            Dim::Infinite,
            &grid,
            1.0,
            1.0,
        )
        .unwrap();
        assert!(rows.iter().all(|r| r.k1 == 0));

        assert!(rate_table(
            &SpectrumSpec::InvPoly { alpha: 2.0 },
            Dim::Infinite,
            &[10, 10],
            1.0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn unknown_family_lists_valid_ids() {
        let err = spec_from_parts("foo", |_| None, None).unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("foo") && FAMILY_IDS.iter().all(|id| msg.contains(id)),
            "{msg}"
        );
    }

    #[test]
    fn pathological_scan_reports_error() {
        // Constant c(t,n) this small cannot be met before eigenvalues underflow the scan.
        let s = Spectrum::inverse_polynomial(1.01, Dim::Infinite).unwrap();
        let k2 = k2_dim(&s, 10, 1.0, 1e-12).unwrap();
        assert!(k2.capped);
    }
}
