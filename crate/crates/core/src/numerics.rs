//! Numerical kernels shared by the samplers and the test harnesses: Gaussian
//! tail integrals, exact truncated-normal draws, adaptive quadrature of
//! log-concave densities, and goodness-of-fit statistics.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::oracle::Potential;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`, accurate deep in the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        2.0 - erfc(-x)
    } else {
        (-x * x).exp() * erfcx(x)
    }
}

// Series for erf below, Legendre continued fraction above. Both parts
// converge to full precision within a few dozen terms on their side.
const ERFCX_SWITCH: f64 = 1.25;
const MAX_TERMS: usize = 500;

/// Scaled complementary error function `exp(x²) erfc(x)`, never forming
/// `exp(x²)` for large `x`.
///
/// Uses `erfc(x) = Γ(1/2, x²) / sqrt(π)`: the lower incomplete gamma series
/// for `x < 1.25` and the continued fraction of the upper incomplete gamma
/// function (modified Lentz) beyond, where the `exp(-x²)` factor cancels.
pub fn erfcx(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 * (x * x).exp() - erfcx(-x);
    }
    let z = x * x;
    if x < ERFCX_SWITCH {
        // erf(x) = exp(-x²) x / sqrt(π) · Σ (x²)^n / ((1/2)(3/2)…(n+1/2))
        let mut term = 2.0;
        let mut sum = term;
        let mut ap = 0.5;
        for _ in 0..MAX_TERMS {
            ap += 1.0;
            term *= z / ap;
            sum += term;
            if term < sum * f64::EPSILON {
                break;
            }
        }
        let erf = (-z).exp() * x * sum / PI.sqrt();
        return z.exp() * (1.0 - erf);
    }
    let tiny = f64::MIN_POSITIVE / f64::EPSILON;
    let mut b = z + 0.5;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=MAX_TERMS {
        let an = -(i as f64) * (i as f64 - 0.5);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let step = d * c;
        h *= step;
        if (step - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    x * h / PI.sqrt()
}

/// Inverse of [`erfc`] on `(0, 2)`, polished with Newton steps.
pub fn erfc_inv(p: f64) -> f64 {
    let mut z = statrs::function::erf::erfc_inv(p);
    if !z.is_finite() {
        return z;
    }
    for _ in 0..2 {
        // z - (erfc(z) - p) / erfc'(z), written with erfcx to avoid underflow.
        z += 0.5 * PI.sqrt() * (erfcx(z) - p * (z * z).exp());
    }
    z
}

/// `∫₀^∞ exp(-a t - t²/2) dt = sqrt(2π) exp(a²/2) (1 - Φ(a))`.
///
/// Bounded above by `1/a` for `a > 0` (Mills ratio).
pub fn gaussian_tail_integral(a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::invalid(format!(
            "gaussian tail integral needs a >= 0, got {a}"
        )));
    }
    Ok((PI / 2.0).sqrt() * erfcx(a / SQRT_2))
}

// Above this threshold inverting erfc loses relative precision in the excess.
const TAIL_INVERSION_LIMIT: f64 = 5.0;

/// Draws `Z - a` where `Z ~ N(0, 1)` conditioned on `Z >= a`, for `a >= 0`.
///
/// Equivalently a draw from the density `∝ exp(-a t - t²/2)` on `t >= 0`.
/// Uses inversion of the tail probability for `a <= 5` and an
/// exponential-proposal rejection step (optimal rate `(a + sqrt(a²+4))/2`)
/// beyond.
pub fn sample_normal_tail_excess<R: Rng + ?Sized>(a: f64, rng: &mut R) -> f64 {
    debug_assert!(a >= 0.0);
    if a <= TAIL_INVERSION_LIMIT {
        let u = open_unit(rng);
        let z = SQRT_2 * erfc_inv(2.0 * u * normal_sf(a));
        return (z - a).max(0.0);
    }
    let rate = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let excess = -open_unit(rng).ln() / rate;
        let z = a + excess;
        if open_unit(rng).ln() <= -0.5 * (z - rate) * (z - rate) {
            return excess;
        }
    }
}

/// Uniform draw on `(0, 1]`.
pub fn open_unit<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
    /// False when some panel hit the depth cap before meeting its tolerance.
    pub converged: bool,
}

impl QuadratureResult {
    /// The value, or a [`Error::Quadrature`] carrying the achieved estimate.
    pub fn into_result(self) -> Result<f64> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(Error::Quadrature {
                value: self.value,
                error_estimate: self.error_estimate,
            })
        }
    }

    fn merge(&mut self, other: QuadratureResult) {
        self.value += other.value;
        self.error_estimate += other.error_estimate;
        self.evaluations += other.evaluations;
        self.converged &= other.converged;
    }
}

const MAX_DEPTH: u32 = 60;
const MIN_DEPTH: u32 = 5;

/// Adaptive Simpson quadrature of `f` over `[lo, hi]`.
pub fn adaptive_quadrature<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> QuadratureResult {
    adaptive_quadrature_with_breaks(f, lo, hi, &[], tol)
}

/// Adaptive Simpson quadrature with panels split at every break strictly
/// inside `(lo, hi)`, so a kink of the integrand never lies inside a panel.
/// The tolerance is shared between panels in proportion to their length.
pub fn adaptive_quadrature_with_breaks<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    tol: f64,
) -> QuadratureResult {
    assert!(tol > 0.0, "quadrature tolerance must be positive");
    let mut total = QuadratureResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
        converged: true,
    };
    if !(hi > lo) {
        return total;
    }
    let mut edges: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| b > lo && b < hi)
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    edges.insert(0, lo);
    edges.push(hi);
    let width = hi - lo;
    for w in edges.windows(2) {
        let panel_tol = tol * (w[1] - w[0]) / width;
        total.merge(simpson_panel(&f, w[0], w[1], panel_tol));
    }
    total
}

fn simpson_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> QuadratureResult {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    let mut out = QuadratureResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 3,
        converged: true,
    };
    simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    out: &mut QuadratureResult,
) {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    out.evaluations += 2;
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    // Roundoff floor: once the panel estimate cannot resolve `tol`, stop.
    let floor = 64.0 * f64::EPSILON * (left.abs() + right.abs());
    let done = depth >= MIN_DEPTH && delta.abs() <= 15.0 * tol.max(floor);
    if done || !delta.is_finite() {
        out.value += left + right + delta / 15.0;
        out.error_estimate += delta.abs() / 15.0;
        out.converged &= delta.is_finite();
        return;
    }
    if depth >= MAX_DEPTH || lm <= a || rm >= b {
        out.value += left + right + delta / 15.0;
        out.error_estimate += delta.abs() / 15.0;
        out.converged = false;
        return;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1, out);
    simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1, out);
}

/// Walks away from `start` in `direction` (±1) with doubling steps until the
/// remaining mass of `exp(-V)` beyond the point is provably below `budget`.
/// Uses only convexity: `∫_x^∞ exp(-V) <= exp(-V(x)) / V'(x)` once `V'(x) > 0`.
fn truncation_point<P: Potential + ?Sized>(
    potential: &P,
    start: f64,
    direction: f64,
    budget: f64,
) -> Result<(f64, f64)> {
    let mut step = 1e-6 * start.abs().max(1e-3);
    for _ in 0..2000 {
        let x = start + direction * step;
        let slope = direction * potential.derivative(x);
        if slope > 0.0 {
            let bound = (-potential.value(x)).exp() / slope;
            if bound <= budget {
                return Ok((x, bound));
            }
        }
        step *= 2.0;
        if !step.is_finite() {
            break;
        }
    }
    Err(Error::invalid(
        "density does not decay: potential is not coercive in this direction",
    ))
}

/// `∫_lo^hi exp(-V(x)) dx` for a convex potential, where either bound may be
/// infinite. Infinite ends are truncated where a convexity bound on the tail
/// falls below half the tolerance; the bound is added to `error_estimate`.
pub fn density_mass<P: Potential + ?Sized>(
    potential: &P,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<QuadratureResult> {
    let breaks = potential.breakpoints();
    let (lo, hi, truncation) = truncate_range(potential, &breaks, lo, hi, 0.25 * tol)?;
    let mut r = adaptive_quadrature_with_breaks(
        |x| (-potential.value(x)).exp(),
        lo,
        hi,
        &breaks,
        0.5 * tol,
    );
    r.error_estimate += truncation;
    Ok(r)
}

fn truncate_range<P: Potential + ?Sized>(
    potential: &P,
    breaks: &[f64],
    lo: f64,
    hi: f64,
    budget: f64,
) -> Result<(f64, f64, f64)> {
    let first = breaks.iter().copied().fold(0.0f64, f64::min);
    let last = breaks.iter().copied().fold(0.0f64, f64::max);
    let mut truncation = 0.0;
    let lo = if lo == f64::NEG_INFINITY {
        let start = if hi.is_finite() { first.min(hi) } else { first };
        let (x, bound) = truncation_point(potential, start, -1.0, budget)?;
        truncation += bound;
        x
    } else {
        lo
    };
    let hi = if hi == f64::INFINITY {
        let (x, bound) = truncation_point(potential, last.max(lo), 1.0, budget)?;
        truncation += bound;
        x
    } else {
        hi
    };
    Ok((lo, hi, truncation))
}

/// Normalizing constant `∫ exp(-V)` over the whole line.
pub fn normalizing_constant<P: Potential + ?Sized>(potential: &P, tol: f64) -> Result<f64> {
    density_mass(potential, f64::NEG_INFINITY, f64::INFINITY, tol)?.into_result()
}

/// CDF of `p ∝ exp(-V)` tabulated by quadrature: cumulative masses are stored
/// at panel edges and the remainder inside a panel is integrated on demand.
#[derive(Debug, Clone)]
pub struct DensityCdf<P> {
    potential: P,
    edges: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
    tol: f64,
}

// Panels per unit of total range, in addition to the potential's breakpoints.
const CDF_PANELS: usize = 2048;

impl<P: Potential> DensityCdf<P> {
    pub fn new(potential: P, tol: f64) -> Result<Self> {
        let breaks = potential.breakpoints();
        let (lo, hi, _) = truncate_range(&potential, &breaks, f64::NEG_INFINITY, f64::INFINITY, 1e-3 * tol)?;
        let mut edges: Vec<f64> = (0..=CDF_PANELS)
            .map(|k| lo + (hi - lo) * k as f64 / CDF_PANELS as f64)
            .chain(breaks.iter().copied().filter(|&b| b > lo && b < hi))
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let panel_tol = 1e-3 * tol / edges.len() as f64;
        let mut cumulative = Vec::with_capacity(edges.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in edges.windows(2) {
            acc += adaptive_quadrature(|x| (-potential.value(x)).exp(), w[0], w[1], panel_tol)
                .into_result()?;
            cumulative.push(acc);
        }
        Ok(DensityCdf {
            potential,
            edges,
            cumulative,
            total: acc,
            tol: panel_tol,
        })
    }

    /// Normalizing constant over the tabulated range.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.edges.partition_point(|&e| e <= x);
        if k == 0 {
            return 0.0;
        }
        if k == self.edges.len() {
            return 1.0;
        }
        let start = self.edges[k - 1];
        let partial = adaptive_quadrature(|t| (-self.potential.value(t)).exp(), start, x, self.tol).value;
        ((self.cumulative[k - 1] + partial) / self.total).clamp(0.0, 1.0)
    }
}

/// Total variation distance `½ ∫ |p1 - p2|` between two normalized densities
/// over `[lo, hi]`, splitting panels at `breaks`.
pub fn tv_distance<F1, F2>(p1: F1, p2: F2, lo: f64, hi: f64, breaks: &[f64], tol: f64) -> Result<f64>
where
    F1: Fn(f64) -> f64,
    F2: Fn(f64) -> f64,
{
    let r = adaptive_quadrature_with_breaks(|x| (p1(x) - p2(x)).abs(), lo, hi, breaks, 2.0 * tol);
    Ok((0.5 * r.into_result()?).clamp(0.0, 1.0))
}

/// Kolmogorov–Smirnov statistic `sup |F_n - F|`. Panics on an empty sample.
pub fn ks_statistic<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> f64 {
    assert!(!samples.is_empty(), "KS statistic needs at least one sample");
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value `c(α) / sqrt(n)` at significance 0.01.
pub fn ks_critical_001(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}

/// Pearson statistic `Σ (O - E)² / E`; bins with `E = 0` must have `O = 0`.
pub fn chi_squared_statistic(observed: &[u64], expected: &[f64]) -> f64 {
    assert_eq!(observed.len(), expected.len());
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            if e > 0.0 {
                d * d / e
            } else if o == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

/// Upper `significance` quantile of the chi-squared law with `df` degrees of freedom.
pub fn chi_squared_critical(df: usize, significance: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - significance)
}

/// Chi-squared goodness of fit of trial counts (values `>= 1`) against
/// `Geometric(p)`. Bins `1, 2, …` are used while their expected count is at
/// least 5, the rest is pooled into a tail bin. Returns `(statistic, df)`.
pub fn geometric_chi_squared(trials: &[u64], p: f64) -> (f64, usize) {
    let n = trials.len() as f64;
    let mut expected = Vec::new();
    let mut k = 1u64;
    let mut tail = 1.0;
    loop {
        let pk = tail * p;
        if n * pk < 5.0 || n * (tail - pk) < 5.0 {
            break;
        }
        expected.push(n * pk);
        tail -= pk;
        k += 1;
    }
    expected.push(n * tail);
    let last = k;
    let mut observed = vec![0u64; expected.len()];
    for &t in trials {
        let bin = t.min(last).max(1) - 1;
        observed[bin as usize] += 1;
    }
    let stat = chi_squared_statistic(&observed, &expected);
    (stat, expected.len().saturating_sub(1).max(1))
}
