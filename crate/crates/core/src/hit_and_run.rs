//! Hit-and-Run in `d` dimensions with an exact line step.
//!
//! Each step draws a direction `u` uniformly on the sphere, restricts the
//! potential to the line through the current point, brackets the line
//! minimizer to width `sqrt(2/kappa)`, builds a plateau envelope around the
//! bracket and rejection-samples the step length exactly.
//!
//! The target must be 1-strongly convex and `kappa`-smooth with
//! `V(0) = ∇V(0) = 0`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::envelope::{build_line_envelope, Envelope};
use crate::error::{Error, Result};
use crate::oracle::{check_orders, Oracle, Orders, Potential, Response};
use crate::rejection::sample_exact;

pub trait MultivariatePotential {
    fn dimension(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// `V(x) = precision * |x|² / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicGaussian {
    pub dimension: usize,
    pub precision: f64,
}

impl MultivariatePotential for IsotropicGaussian {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * self.precision * dot(x, x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|v| self.precision * v).collect()
    }
}

/// `V(x) = Σ_k p_k x_k² / 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    pub precisions: Vec<f64>,
}

impl MultivariatePotential for DiagonalGaussian {
    fn dimension(&self) -> usize {
        self.precisions.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().zip(&self.precisions).map(|(v, p)| p * v * v).sum::<f64>()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.precisions).map(|(v, p)| p * v).collect()
    }
}

/// `V(x) = Σ_k U(x_k)` for a univariate potential `U`. Its Hessian is
/// diagonal with entries `U''(x_k)`, so curvature bounds carry over to every
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Separable<P> {
    pub component: P,
    pub dimension: usize,
}

impl<P: Potential> MultivariatePotential for Separable<P> {
    fn dimension(&self) -> usize {
        self.dimension
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|&v| self.component.value(v)).sum()
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.component.derivative(v)).collect()
    }
}

impl<P: MultivariatePotential + ?Sized> MultivariatePotential for Box<P> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn value(&self, x: &[f64]) -> f64 {
        (**self).value(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (**self).gradient(x)
    }
}

/// Counting oracle for a multivariate potential. Order 0 is the value (plus
/// a hidden offset) and order 1 the gradient; one call is one query.
#[derive(Debug, Clone)]
pub struct MultivariateOracle<P> {
    potential: P,
    kappa: f64,
    orders: Orders,
    hidden_offset: f64,
    queries: u64,
}

impl<P: MultivariatePotential> MultivariateOracle<P> {
    pub fn new(potential: P, kappa: f64) -> Result<Self> {
        if !(kappa >= 1.0 && kappa.is_finite()) {
            return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
        }
        if potential.dimension() == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(MultivariateOracle {
            potential,
            kappa,
            orders: Orders::FIRST_ORDER,
            hidden_offset: 0.0,
            queries: 0,
        })
    }

    /// Restricts answers to a subset of `{VALUE, DERIVATIVE}`.
    pub fn with_orders(mut self, orders: Orders) -> Self {
        self.orders = orders & Orders::FIRST_ORDER;
        self
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.hidden_offset = offset;
        self
    }

    pub fn dimension(&self) -> usize {
        self.potential.dimension()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn available(&self) -> Orders {
        self.orders
    }

    pub fn query_count(&self) -> u64 {
        self.queries
    }

    pub fn potential(&self) -> &P {
        &self.potential
    }

    pub fn value(&mut self, x: &[f64]) -> Result<f64> {
        Ok(self.query_along(x, None, Orders::VALUE)?.value.expect("value requested"))
    }

    pub fn gradient(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        check_orders(Orders::DERIVATIVE, self.orders)?;
        self.check_point(x)?;
        self.queries += 1;
        Ok(self.potential.gradient(x))
    }

    /// One query at `x`; the order-1 answer is the directional derivative
    /// `u · ∇V(x)`.
    fn query_along(&mut self, x: &[f64], u: Option<&[f64]>, orders: Orders) -> Result<Response> {
        check_orders(orders, self.orders)?;
        self.check_point(x)?;
        self.queries += 1;
        let mut out = Response::default();
        if orders.contains(Orders::VALUE) {
            out.value = Some(self.potential.value(x) + self.hidden_offset);
        }
        if orders.contains(Orders::DERIVATIVE) {
            let u = u.expect("directional derivative needs a direction");
            out.derivative = Some(dot(u, &self.potential.gradient(x)));
        }
        Ok(out)
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "point has dimension {}, oracle has {}",
                x.len(),
                self.dimension()
            )));
        }
        Ok(())
    }
}

/// The line `{base + λ u}` through the current point.
#[derive(Debug, Clone, PartialEq)]
pub struct LineRestriction {
    /// Foot of the perpendicular from the origin, `x* = x_t - (u · x_t) u`.
    pub base: Vec<f64>,
    pub direction: Vec<f64>,
    /// `u · x_t`: the current point is `base + lambda_of_origin_point * u`.
    pub lambda_of_origin_point: f64,
}

impl LineRestriction {
    pub fn point(&self, lambda: f64) -> Vec<f64> {
        self.base
            .iter()
            .zip(&self.direction)
            .map(|(b, u)| b + lambda * u)
            .collect()
    }

    pub fn x_star_norm(&self) -> f64 {
        norm(&self.base)
    }
}

/// `W(λ) = V(base + λ u)` as a univariate oracle. Every call charges one
/// query to the underlying multivariate oracle.
#[derive(Debug)]
pub struct LineOracle<'a, P> {
    oracle: &'a mut MultivariateOracle<P>,
    line: LineRestriction,
}

impl<P> LineOracle<'_, P> {
    pub fn line(&self) -> &LineRestriction {
        &self.line
    }
}

impl<P: MultivariatePotential> Oracle for LineOracle<'_, P> {
    fn available(&self) -> Orders {
        self.oracle.available()
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn beta(&self) -> f64 {
        self.oracle.kappa()
    }
    fn query_count(&self) -> u64 {
        self.oracle.query_count()
    }
    fn query(&mut self, lambda: f64, orders: Orders) -> Result<Response> {
        let x = self.line.point(lambda);
        self.oracle.query_along(&x, Some(&self.line.direction), orders)
    }
}

// Allowed deviation of |u| from 1.
const UNIT_TOLERANCE: f64 = 1e-12;

pub fn restrict<'a, P: MultivariatePotential>(
    oracle: &'a mut MultivariateOracle<P>,
    x_t: &[f64],
    u: &[f64],
) -> Result<(LineRestriction, LineOracle<'a, P>)> {
    if x_t.len() != oracle.dimension() || u.len() != oracle.dimension() {
        return Err(Error::invalid("point and direction must match the oracle dimension"));
    }
    let n = norm(u);
    if n == 0.0 {
        return Err(Error::invalid("direction must be nonzero"));
    }
    if (n - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::invalid(format!("direction must be a unit vector, |u| = {n}")));
    }
    let t = dot(u, x_t);
    let line = LineRestriction {
        base: x_t.iter().zip(u).map(|(x, v)| x - t * v).collect(),
        direction: u.to_vec(),
        lambda_of_origin_point: t,
    };
    Ok((
        line.clone(),
        LineOracle {
            oracle,
            line,
        },
    ))
}

/// `sqrt(2 / kappa)`, the bracket width at which `kappa (b - a)² / 2 = 1`.
pub fn bracket_width(kappa: f64) -> f64 {
    (2.0 / kappa).sqrt()
}

/// Initial half-width `2 kappa max(|x*|, sqrt(2/kappa))` of the search
/// interval for the line minimizer.
pub fn bracket_radius(kappa: f64, x_star_norm: f64) -> f64 {
    2.0 * kappa * x_star_norm.max(bracket_width(kappa))
}

/// Worst-case queries of the derivative bisection when no doubling is
/// needed: `⌈log₂(2L / w)⌉ + 2`.
pub fn bracket_query_budget(kappa: f64, x_star_norm: f64) -> u64 {
    let l = bracket_radius(kappa, x_star_norm);
    (2.0 * l / bracket_width(kappa)).log2().ceil().max(0.0) as u64 + 2
}

// Doublings of the search interval tried before reporting a class violation.
const MAX_DOUBLINGS: u32 = 64;

/// `[a, b]` of width exactly `sqrt(2/kappa)` containing the minimizer of the
/// line potential.
///
/// With first-order access this bisects on the sign of `W'` inside
/// `[-L, L]`, doubling `L` if the endpoint signs do not bracket a root. With
/// only zeroth-order access it falls back to ternary search.
pub fn bracket_minimizer<O: Oracle + ?Sized>(line: &mut O, kappa: f64, x_star_norm: f64) -> Result<(f64, f64)> {
    let w = bracket_width(kappa);
    let mut l = bracket_radius(kappa, x_star_norm);
    let (lo, hi) = if line.available().contains(Orders::DERIVATIVE) {
        let mut doublings = 0;
        loop {
            if line.derivative(-l)? <= 0.0 && line.derivative(l)? >= 0.0 {
                break;
            }
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::class(
                    l,
                    "restricted derivative has no sign change: line potential is not convex and coercive",
                ));
            }
            l *= 2.0;
        }
        let (mut lo, mut hi) = (-l, l);
        while hi - lo > w {
            let mid = 0.5 * (lo + hi);
            let d = line.derivative(mid)?;
            if d > 0.0 {
                hi = mid;
            } else if d < 0.0 {
                lo = mid;
            } else {
                lo = mid;
                hi = mid;
            }
        }
        (lo, hi)
    } else {
        let (mut lo, mut hi) = (-l, l);
        while hi - lo > w {
            let third = (hi - lo) / 3.0;
            let (m1, m2) = (lo + third, hi - third);
            if line.value(m1)? <= line.value(m2)? {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        (lo, hi)
    };
    let c = 0.5 * (lo + hi);
    Ok((c - 0.5 * w, c + 0.5 * w))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub position: Vec<f64>,
    pub step_index: u64,
    pub cumulative_queries: u64,
}

impl ChainState {
    pub fn new(position: Vec<f64>) -> Self {
        ChainState {
            position,
            step_index: 0,
            cumulative_queries: 0,
        }
    }
}

/// Query breakdown of a single step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepStats {
    pub bracket_queries: u64,
    pub envelope_queries: u64,
    pub trials: u64,
    /// Sampled step length, measured from the foot of the perpendicular.
    pub lambda: f64,
}

impl StepStats {
    pub fn queries(&self) -> u64 {
        self.bracket_queries + self.envelope_queries + self.trials
    }
}

/// Uniform direction on the unit sphere.
pub fn random_direction<R: Rng + ?Sized>(dimension: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dimension).map(|_| rng.sample(StandardNormal)).collect();
        let n = norm(&g);
        if n > 0.0 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// One exact line step along a given direction.
pub fn step_along<P, R>(
    oracle: &mut MultivariateOracle<P>,
    state: &ChainState,
    u: &[f64],
    rng: &mut R,
) -> Result<(ChainState, StepStats, Envelope)>
where
    P: MultivariatePotential,
    R: Rng + ?Sized,
{
    let kappa = oracle.kappa();
    let (line, mut w) = restrict(oracle, &state.position, u)?;
    let start = w.query_count();
    let (a, b) = bracket_minimizer(&mut w, kappa, line.x_star_norm())?;
    let after_bracket = w.query_count();
    let env = build_line_envelope(&mut w, a, b, kappa)?;
    let after_envelope = w.query_count();
    let draw = sample_exact(&mut w, &env, rng)?;
    let lambda = draw.sample.expect("exact sampler always returns a draw");
    let stats = StepStats {
        bracket_queries: after_bracket - start,
        envelope_queries: after_envelope - after_bracket,
        trials: draw.trials,
        lambda,
    };
    debug_assert_eq!(w.query_count() - start, stats.queries());
    let next = ChainState {
        position: line.point(lambda),
        step_index: state.step_index + 1,
        cumulative_queries: state.cumulative_queries + stats.queries(),
    };
    Ok((next, stats, env))
}

/// One Hit-and-Run step with a uniformly random direction.
pub fn step<P, R>(oracle: &mut MultivariateOracle<P>, state: &ChainState, rng: &mut R) -> Result<(ChainState, StepStats)>
where
    P: MultivariatePotential,
    R: Rng + ?Sized,
{
    let u = random_direction(oracle.dimension(), rng);
    let (next, stats, _) = step_along(oracle, state, &u, rng)?;
    Ok((next, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    /// `steps + 1` positions, starting with `x0`.
    pub trajectory: Vec<Vec<f64>>,
    pub step_queries: Vec<u64>,
}

impl ChainRun {
    pub fn total_queries(&self) -> u64 {
        self.step_queries.iter().sum()
    }

    /// Average queries per step, 0 for an empty run.
    pub fn mean_queries(&self) -> f64 {
        if self.step_queries.is_empty() {
            0.0
        } else {
            self.total_queries() as f64 / self.step_queries.len() as f64
        }
    }

    /// `(1/T) Σ max(log(kappa |x_t|), 1)`, the quantity the amortized query
    /// bound is stated in.
    pub fn mean_log_scale(&self, kappa: f64) -> f64 {
        let t = &self.trajectory[..self.trajectory.len() - 1];
        if t.is_empty() {
            return 0.0;
        }
        t.iter().map(|x| (kappa * norm(x)).ln().max(1.0)).sum::<f64>() / t.len() as f64
    }
}

/// Runs `steps` steps, calling `visit` after each one.
pub fn run_chain_with<P, R, F>(
    oracle: &mut MultivariateOracle<P>,
    x0: Vec<f64>,
    steps: u64,
    rng: &mut R,
    mut visit: F,
) -> Result<ChainState>
where
    P: MultivariatePotential,
    R: Rng + ?Sized,
    F: FnMut(&ChainState, &StepStats),
{
    let mut state = ChainState::new(x0);
    for _ in 0..steps {
        let (next, stats) = step(oracle, &state, rng)?;
        visit(&next, &stats);
        state = next;
    }
    Ok(state)
}

pub fn run_chain<P, R>(oracle: &mut MultivariateOracle<P>, x0: Vec<f64>, steps: u64, rng: &mut R) -> Result<ChainRun>
where
    P: MultivariatePotential,
    R: Rng + ?Sized,
{
    let mut trajectory = vec![x0.clone()];
    let mut step_queries = Vec::with_capacity(steps as usize);
    run_chain_with(oracle, x0, steps, rng, |s, st| {
        trajectory.push(s.position.clone());
        step_queries.push(st.queries());
    })?;
    Ok(ChainRun {
        trajectory,
        step_queries,
    })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{ks_critical_001, ks_statistic, normal_cdf};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn iso(d: usize, kappa: f64) -> MultivariateOracle<IsotropicGaussian> {
        MultivariateOracle::new(
            IsotropicGaussian {
                dimension: d,
                precision: 1.0,
            },
            kappa,
        )
        .unwrap()
    }

    #[test]
    fn restriction_example() {
        let mut o = iso(2, 1.0);
        let (line, mut w) = restrict(&mut o, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_eq!(line.base, vec![1.0, 0.0]);
        assert_eq!(line.lambda_of_origin_point, 0.0);
        assert_eq!(w.value(2.0).unwrap(), 2.5);
        assert_eq!(w.derivative(0.0).unwrap(), 0.0);
        assert_eq!(o.query_count(), 2);
    }

    #[test]
    fn restriction_rejects_bad_directions() {
        let mut o = iso(2, 1.0);
        assert!(restrict(&mut o, &[1.0, 0.0], &[0.0, 0.0]).is_err());
        assert!(restrict(&mut o, &[1.0, 0.0], &[0.0, 2.0]).is_err());
        assert!(restrict(&mut o, &[1.0, 0.0, 0.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn restricted_curvature_within_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let kappa = 50.0;
        let precisions: Vec<f64> = (0..6).map(|k| 1.0 + (kappa - 1.0) * k as f64 / 5.0).collect();
        let mut o = MultivariateOracle::new(DiagonalGaussian { precisions }, kappa).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let u = random_direction(6, &mut rng);
            let (_, mut w) = restrict(&mut o, &x, &u).unwrap();
            let lam = rng.random_range(-1.0..1.0);
            let h = 1e-4;
            let fd = (w.value(lam + h).unwrap() - 2.0 * w.value(lam).unwrap() + w.value(lam - h).unwrap()) / (h * h);
            assert!(fd >= 1.0 * (1.0 - 1e-4) && fd <= kappa * (1.0 + 1e-4), "{fd}");
        }
    }

    #[test]
    fn bracket_contains_shifted_minimizer() {
        // W(λ) = (λ - 0.7)² / 2 + c along the second axis
        let mut o = iso(2, 1.0);
        let (line, mut w) = restrict(&mut o, &[0.3, 0.7], &[0.0, 1.0]).unwrap();
        let (a, b) = bracket_minimizer(&mut w, 1.0, line.x_star_norm()).unwrap();
        assert!(a <= 0.0 && 0.0 <= b);
        let mut o = iso(2, 1.0).with_offset(3.0);
        let (_, mut w) = restrict(&mut o, &[0.0, 0.7], &[0.0, -1.0]).unwrap();
        // here the foot is the origin and the minimizer sits at λ = 0 too
        let (a, b) = bracket_minimizer(&mut w, 1.0, 0.0).unwrap();
        assert!(a <= 0.0 && 0.0 <= b);
        assert!(((b - a) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn bracket_for_off_centre_line() {
        // V = Σ p_k x_k²/2 restricted to a generic line has minimizer
        // λ* = -Σ p_k b_k u_k / Σ p_k u_k².
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let kappa = 1e4;
        let precisions = vec![1.0, 30.0, kappa];
        for _ in 0..100 {
            let mut o = MultivariateOracle::new(DiagonalGaussian { precisions: precisions.clone() }, kappa).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let u = random_direction(3, &mut rng);
            let (line, mut w) = restrict(&mut o, &x, &u).unwrap();
            let num: f64 = (0..3).map(|k| precisions[k] * line.base[k] * u[k]).sum();
            let den: f64 = (0..3).map(|k| precisions[k] * u[k] * u[k]).sum();
            let star = -num / den;
            let (a, b) = bracket_minimizer(&mut w, kappa, line.x_star_norm()).unwrap();
            assert!(a <= star && star <= b, "{star} not in [{a}, {b}]");
            assert!(((b - a) - bracket_width(kappa)).abs() <= 1e-12 * bracket_width(kappa).max(b.abs()));
            assert!(o.query_count() <= bracket_query_budget(kappa, norm(&line.base)));
        }
    }

    #[test]
    fn bracket_query_budget_example() {
        assert_eq!(bracket_query_budget(1e6, 1.0), 34);
        let mut o = iso(2, 1e6);
        let (line, mut w) = restrict(&mut o, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        bracket_minimizer(&mut w, 1e6, line.x_star_norm()).unwrap();
        assert!(o.query_count() <= 34);
    }

    #[test]
    fn ternary_fallback_brackets() {
        let mut o = iso(2, 10.0).with_orders(Orders::VALUE);
        let (line, mut w) = restrict(&mut o, &[0.4, 1.3], &[0.0, 1.0]).unwrap();
        let (a, b) = bracket_minimizer(&mut w, 10.0, line.x_star_norm()).unwrap();
        assert!(a <= 0.0 && 0.0 <= b);
        assert!(((b - a) - bracket_width(10.0)).abs() < 1e-15);
    }

    #[test]
    fn line_envelope_dominates_and_bounds_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for kappa in [4.0f64, 1e3, 1e6] {
            let precisions = vec![1.0, f64::sqrt(kappa), kappa];
            for _ in 0..20 {
                let mut o = MultivariateOracle::new(DiagonalGaussian { precisions: precisions.clone() }, kappa).unwrap();
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let u = random_direction(3, &mut rng);
                let (line, mut w) = restrict(&mut o, &x, &u).unwrap();
                let (a, b) = bracket_minimizer(&mut w, kappa, line.x_star_norm()).unwrap();
                let env = build_line_envelope(&mut w, a, b, kappa).unwrap();
                let (xa, xb) = (env.x_minus(), env.x_plus());
                let span = xb - xa;
                let p = o.potential().clone();
                for k in 0..10_000 {
                    let lam = xa - span + 3.0 * span * k as f64 / 9_999.0;
                    let wv = p.value(&line.point(lam)) - env.shift();
                    assert!(env.log_value(lam) >= -wv - 1e-12, "kappa={kappa} lam={lam}");
                }
                // Mills-ratio bound on both tails
                assert!(env.mass_total() <= std::f64::consts::E * span + 2.0 * (-3.0f64).exp() * span / 3.0 + 1e-12);
            }
        }
    }

    #[test]
    fn search_never_needs_index_zero() {
        // W(b + 1/sqrt(kappa)) - (W(a) ∨ W(b)) < 3 on every bracket.
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &kappa in &[1.0, 10.0, 1e3, 1e6] {
            let precisions = vec![1.0, kappa];
            let p = DiagonalGaussian { precisions: precisions.clone() };
            for _ in 0..200 {
                let mut o = MultivariateOracle::new(p.clone(), kappa).unwrap();
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
                let u = random_direction(2, &mut rng);
                let (line, mut w) = restrict(&mut o, &x, &u).unwrap();
                let (a, b) = bracket_minimizer(&mut w, kappa, line.x_star_norm()).unwrap();
                let shift = p.value(&line.point(a)).max(p.value(&line.point(b)));
                let s = 1.0 / kappa.sqrt();
                assert!(p.value(&line.point(b + s)) - shift < 3.0);
                assert!(p.value(&line.point(a - s)) - shift < 3.0);
            }
        }
    }

    #[test]
    fn conditional_step_is_exact() {
        let mut o = iso(2, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let state = ChainState::new(vec![1.0, 0.0]);
        let n = 10_000;
        let mut lambdas = Vec::with_capacity(n);
        for _ in 0..n {
            let (next, stats, _) = step_along(&mut o, &state, &[0.0, 1.0], &mut rng).unwrap();
            assert_eq!(next.position[0], 1.0);
            assert_eq!(next.cumulative_queries, stats.queries());
            lambdas.push(stats.lambda);
        }
        assert!(ks_statistic(&lambdas, normal_cdf) < ks_critical_001(n));
    }

    #[test]
    fn anisotropic_conditional_law() {
        let kappa = 100.0;
        let precisions = vec![1.0, 10.0, kappa];
        let mut o = MultivariateOracle::new(DiagonalGaussian { precisions: precisions.clone() }, kappa).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let state = ChainState::new(vec![0.5, -0.2, 0.1]);
        let u = {
            let v = [1.0, 2.0, -0.5];
            let n = norm(&v);
            v.map(|c| c / n)
        };
        let (line, _) = restrict(&mut o, &state.position, &u).unwrap();
        let prec: f64 = (0..3).map(|k| precisions[k] * u[k] * u[k]).sum();
        let mean = -(0..3).map(|k| precisions[k] * line.base[k] * u[k]).sum::<f64>() / prec;
        let sd = 1.0 / prec.sqrt();
        let n = 10_000;
        let lambdas: Vec<f64> = (0..n)
            .map(|_| step_along(&mut o, &state, &u, &mut rng).unwrap().1.lambda)
            .collect();
        assert!(ks_statistic(&lambdas, |l| normal_cdf((l - mean) / sd)) < ks_critical_001(n));
    }

    #[test]
    fn zero_steps_and_query_ledger() {
        let mut o = iso(3, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let run = run_chain(&mut o, vec![0.1, 0.2, 0.3], 0, &mut rng).unwrap();
        assert_eq!(run.trajectory, vec![vec![0.1, 0.2, 0.3]]);
        assert_eq!(run.total_queries(), 0);
        assert_eq!(o.query_count(), 0);

        let run = run_chain(&mut o, vec![0.0; 3], 50, &mut rng).unwrap();
        assert_eq!(run.trajectory.len(), 51);
        assert_eq!(run.total_queries(), o.query_count());
    }

    #[test]
    fn chain_from_origin() {
        let mut o = iso(4, 1e3);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let end = run_chain_with(&mut o, vec![0.0; 4], 200, &mut rng, |_, _| {}).unwrap();
        assert_eq!(end.step_index, 200);
        assert!(end.position.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn separable_piecewise_target() {
        use crate::piecewise::PiecewiseQuadraticPotential;
        let comp = PiecewiseQuadraticPotential::new(vec![-1.0, 1.0], vec![4.0, 1.0, 4.0]).unwrap();
        let p = Separable {
            component: comp,
            dimension: 3,
        };
        assert_eq!(p.value(&[2.0, 0.0, 0.0]), 3.5);
        assert_eq!(p.gradient(&[2.0, -2.0, 0.5]), vec![5.0, -5.0, 0.5]);
        let mut o = MultivariateOracle::new(p, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        run_chain(&mut o, vec![0.0; 3], 100, &mut rng).unwrap();
    }

    #[test]
    fn offset_opacity() {
        let run = |offset: f64| {
            let mut o = iso(3, 100.0).with_offset(offset);
            let mut rng = ChaCha8Rng::seed_from_u64(15);
            run_chain(&mut o, vec![0.3; 3], 30, &mut rng).unwrap()
        };
        assert_eq!(run(0.0), run(-17.25));
    }
}
