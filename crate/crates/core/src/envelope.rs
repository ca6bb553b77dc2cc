//! Closed-form upper envelopes built from `O(log log kappa)` zeroth-order
//! queries.
//!
//! On each side of the mode a binary search over dyadic radii `2^i / sqrt(kappa)`
//! finds the first point where the normalized potential reaches `1/2`. The
//! envelope is flat between the two points and continues as a drifted
//! Gaussian beyond them. Its mass and its sampler are exact and consume no
//! further queries.

use std::f64::consts::E;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gaussian_tail_integral, sample_normal_tail_excess};
use crate::oracle::{normalize_at_zero, Oracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Minus,
    Plus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Minus => -1.0,
            Side::Plus => 1.0,
        }
    }
}

/// Dominating function `q̃`:
///
/// ```text
/// q̃(x) = plateau_height                                   on [x_minus, x_plus]
///       = exp(-tail_offset - drift_plus  * t - t²/2),  t = x - x_plus   (right)
///       = exp(-tail_offset - drift_minus * t - t²/2),  t = x_minus - x  (left)
/// ```
///
/// It dominates `exp(-(W(x) - shift))` where `W` is the raw zeroth-order
/// oracle answer; `shift` is whatever reference value the builder subtracted
/// (the answer at the mode, or the bracket maximum on a line).
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    x_minus: f64,
    x_plus: f64,
    drift_minus: f64,
    drift_plus: f64,
    plateau_height: f64,
    tail_offset: f64,
    shift: f64,
    masses: [f64; 3],
    mass_total: f64,
}

/// JSON view used by `envelope-inspect`.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub x_minus: f64,
    pub x_plus: f64,
    pub plateau_height: f64,
    pub tail_offset: f64,
    pub drifts: [f64; 2],
    pub masses: [f64; 3],
}

impl Envelope {
    pub fn new(
        x_minus: f64,
        x_plus: f64,
        drift_minus: f64,
        drift_plus: f64,
        plateau_height: f64,
        tail_offset: f64,
    ) -> Result<Self> {
        if !(x_minus < x_plus) || !x_minus.is_finite() || !x_plus.is_finite() {
            return Err(Error::invalid(format!(
                "envelope edges must satisfy x_minus < x_plus, got [{x_minus}, {x_plus}]"
            )));
        }
        if !(drift_minus > 0.0 && drift_plus > 0.0 && drift_minus.is_finite() && drift_plus.is_finite()) {
            return Err(Error::invalid("envelope drifts must be positive and finite"));
        }
        if !(plateau_height > 0.0) || !(tail_offset >= 0.0) {
            return Err(Error::invalid("need plateau_height > 0 and tail_offset >= 0"));
        }
        let tail_scale = (-tail_offset).exp();
        let masses = [
            tail_scale * gaussian_tail_integral(drift_minus)?,
            plateau_height * (x_plus - x_minus),
            tail_scale * gaussian_tail_integral(drift_plus)?,
        ];
        Ok(Envelope {
            x_minus,
            x_plus,
            drift_minus,
            drift_plus,
            plateau_height,
            tail_offset,
            shift: 0.0,
            masses,
            mass_total: masses.iter().sum(),
        })
    }

    /// Sets the reference value subtracted from raw oracle answers.
    pub fn with_shift(mut self, shift: f64) -> Self {
        self.shift = shift;
        self
    }

    pub fn x_minus(&self) -> f64 {
        self.x_minus
    }
    pub fn x_plus(&self) -> f64 {
        self.x_plus
    }
    pub fn drifts(&self) -> (f64, f64) {
        (self.drift_minus, self.drift_plus)
    }
    pub fn plateau_height(&self) -> f64 {
        self.plateau_height
    }
    pub fn tail_offset(&self) -> f64 {
        self.tail_offset
    }
    pub fn shift(&self) -> f64 {
        self.shift
    }
    /// `(left tail, plateau, right tail)`.
    pub fn piece_masses(&self) -> [f64; 3] {
        self.masses
    }
    /// `Z_q = ∫ q̃`.
    pub fn mass_total(&self) -> f64 {
        self.mass_total
    }

    pub fn report(&self) -> EnvelopeReport {
        EnvelopeReport {
            x_minus: self.x_minus,
            x_plus: self.x_plus,
            plateau_height: self.plateau_height,
            tail_offset: self.tail_offset,
            drifts: [self.drift_minus, self.drift_plus],
            masses: self.masses,
        }
    }

    pub fn log_value(&self, x: f64) -> f64 {
        if x > self.x_plus {
            let t = x - self.x_plus;
            -self.tail_offset - self.drift_plus * t - 0.5 * t * t
        } else if x < self.x_minus {
            let t = self.x_minus - x;
            -self.tail_offset - self.drift_minus * t - 0.5 * t * t
        } else {
            self.plateau_height.ln()
        }
    }

    /// `q̃(x)`.
    pub fn value(&self, x: f64) -> f64 {
        if (self.x_minus..=self.x_plus).contains(&x) {
            self.plateau_height
        } else {
            self.log_value(x).exp()
        }
    }

    /// CDF of the normalized proposal `q = q̃ / Z_q`.
    pub fn cdf(&self, x: f64) -> f64 {
        let tail_scale = (-self.tail_offset).exp();
        // Mass of a tail beyond distance t from its edge.
        let beyond = |drift: f64, t: f64| {
            tail_scale
                * (-drift * t - 0.5 * t * t).exp()
                * gaussian_tail_integral(drift + t).expect("nonnegative drift")
        };
        let [left, plateau, _] = self.masses;
        let f = if x < self.x_minus {
            beyond(self.drift_minus, self.x_minus - x) / self.mass_total
        } else if x <= self.x_plus {
            (left + self.plateau_height * (x - self.x_minus)) / self.mass_total
        } else {
            1.0 - beyond(self.drift_plus, x - self.x_plus) / self.mass_total
        };
        debug_assert!(plateau > 0.0);
        f.clamp(0.0, 1.0)
    }

    /// Exact draw from `q`. Consumes no oracle queries.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let [left, plateau, _] = self.masses;
        let u = rng.random::<f64>() * self.mass_total;
        if u < left {
            self.x_minus - sample_normal_tail_excess(self.drift_minus, rng)
        } else if u < left + plateau {
            self.x_minus + (self.x_plus - self.x_minus) * rng.random::<f64>()
        } else {
            self.x_plus + sample_normal_tail_excess(self.drift_plus, rng)
        }
    }
}

/// `⌈½ log₂ kappa⌉`, the largest candidate index of the threshold search.
pub fn max_threshold_index(kappa: f64) -> u32 {
    (0.5 * kappa.log2()).ceil().max(0.0) as u32
}

/// Worst-case query count of [`build_envelope`]:
/// `2 (⌈log₂(⌈½ log₂ kappa⌉ + 1)⌉ + 1) + 1`.
pub fn envelope_query_budget(kappa: f64) -> u64 {
    let n = max_threshold_index(kappa) as f64 + 1.0;
    2 * (n.log2().ceil() as u64 + 1) + 1
}

/// First index in `lo..=hi` where a monotone predicate holds, or `None`.
/// Every call of `pred` is one query; a returned index has always been
/// tested, so at most `⌈log₂(hi - lo + 2)⌉` calls are made.
pub(crate) fn first_true<F>(lo: u32, hi: u32, mut pred: F) -> Result<Option<u32>>
where
    F: FnMut(u32) -> Result<bool>,
{
    let (mut l, mut h) = (lo, hi + 1);
    while l < h {
        let mid = l + (h - l) / 2;
        if pred(mid)? {
            h = mid;
        } else {
            l = mid + 1;
        }
    }
    Ok((l <= hi).then_some(l))
}

/// Smallest `i` in `{0, …, ⌈½ log₂ kappa⌉}` with `V(±2^i / sqrt(kappa)) >= 1/2`,
/// by binary search. The oracle must already be normalized (`V(0) = 0`) and
/// in unit form (`1 <= V'' <= kappa`).
pub fn find_threshold_index<O: Oracle + ?Sized>(oracle: &mut O, side: Side, kappa: f64) -> Result<u32> {
    let root = kappa.sqrt();
    let top = max_threshold_index(kappa);
    let point = |i: u32| side.sign() * 2f64.powi(i as i32) / root;
    first_true(0, top, |i| Ok(oracle.value(point(i))? >= 0.5))?.ok_or_else(|| {
        Error::class(
            point(top),
            format!("V stays below 1/2 on the whole search range (kappa = {kappa})"),
        )
    })
}

/// Builds the two-sided envelope. Spends one query at the origin to
/// normalize and two binary searches, and nothing else.
///
/// The oracle must be in unit form (`alpha = 1`); see
/// [`crate::oracle::rescale_to_unit`].
pub fn build_envelope<O: Oracle + ?Sized>(oracle: &mut O, kappa: f64) -> Result<Envelope> {
    if (oracle.alpha() - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!(
            "envelope needs a unit-form oracle (alpha = 1), got alpha = {}",
            oracle.alpha()
        )));
    }
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    let mut normalized = normalize_at_zero(&mut *oracle)?;
    let i_plus = find_threshold_index(&mut normalized, Side::Plus, kappa)?;
    let i_minus = find_threshold_index(&mut normalized, Side::Minus, kappa)?;
    let root = kappa.sqrt();
    let x_plus = 2f64.powi(i_plus as i32) / root;
    let x_minus = -(2f64.powi(i_minus as i32) / root);
    Ok(
        Envelope::new(x_minus, x_plus, 0.5 / -x_minus, 0.5 / x_plus, 1.0, 0.0)?
            .with_shift(normalized.reference()),
    )
}

/// Envelope for a line restriction whose minimizer is only known to lie in
/// `[a, b]`, with `b - a = sqrt(2 / kappa)`.
///
/// Spends two queries to relabel the potential by `W(a) ∨ W(b)`, then
/// searches `i ∈ {1, …, ⌈(log₂ kappa + 3) / 2⌉}` on each side for the first
/// point where the relabeled potential reaches 3. The plateau has height `e`
/// on `[x_a, x_b]` and the tails start at `exp(-3)`.
pub fn build_line_envelope<O: Oracle + ?Sized>(oracle: &mut O, a: f64, b: f64, kappa: f64) -> Result<Envelope> {
    if !(b > a) {
        return Err(Error::invalid(format!("bracket must satisfy a < b, got [{a}, {b}]")));
    }
    let shift = oracle.value(a)?.max(oracle.value(b)?);
    let root = kappa.sqrt();
    let top = ((kappa.log2() + 3.0) / 2.0).ceil().max(1.0) as u32;
    let mut search = |edge: f64, sign: f64| -> Result<f64> {
        let point = |i: u32| edge + sign * 2f64.powi(i as i32) / root;
        let i = first_true(1, top, |i| Ok(oracle.value(point(i))? - shift >= 3.0))?.ok_or_else(|| {
            Error::class(
                point(top),
                format!("relabeled line potential stays below 3 (kappa = {kappa})"),
            )
        })?;
        Ok(point(i))
    };
    let x_b = search(b, 1.0)?;
    let x_a = search(a, -1.0)?;
    Ok(Envelope::new(x_a, x_b, 3.0 / (b - x_a), 3.0 / (x_b - a), E, 3.0)?.with_shift(shift))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{adaptive_quadrature_with_breaks, ks_critical_001, ks_statistic};
    use crate::oracle::{Gaussian, PotentialOracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian_oracle(kappa: f64) -> PotentialOracle<Gaussian> {
        PotentialOracle::new(Gaussian::standard(), 1.0, kappa).unwrap()
    }

    fn unit_envelope() -> Envelope {
        Envelope::new(-1.0, 1.0, 0.5, 0.5, 1.0, 0.0).unwrap()
    }

    #[test]
    fn threshold_index_examples() {
        let mut o = gaussian_oracle(1.0);
        assert_eq!(find_threshold_index(&mut o, Side::Plus, 1.0).unwrap(), 0);
        assert_eq!(o.query_count(), 1);
        let mut o = gaussian_oracle(4.0);
        assert_eq!(find_threshold_index(&mut o, Side::Plus, 4.0).unwrap(), 1);
    }

    #[test]
    fn threshold_search_reports_class_violation() {
        // Too flat for the declared kappa: V = x²/8 never reaches 1/2 at x <= 1.
        let mut o = PotentialOracle::new(Gaussian { precision: 0.25 }, 1.0, 16.0).unwrap();
        let err = find_threshold_index(&mut o, Side::Plus, 16.0).unwrap_err();
        assert!(matches!(err, Error::ClassViolation { at, .. } if at == 1.0));
    }

    #[test]
    fn first_true_matches_linear_scan() {
        for top in 0..40u32 {
            for answer in 0..=top + 1 {
                let mut calls = 0;
                let got = first_true(0, top, |i| {
                    calls += 1;
                    Ok(i >= answer)
                })
                .unwrap();
                assert_eq!(got, (answer <= top).then_some(answer));
                let bound = ((top + 2) as f64).log2().ceil() as u32;
                assert!(calls <= bound, "top={top} answer={answer} calls={calls}");
            }
        }
    }

    #[test]
    fn gaussian_unit_envelope() {
        let mut o = gaussian_oracle(1.0);
        let env = build_envelope(&mut o, 1.0).unwrap();
        assert_eq!((env.x_minus(), env.x_plus()), (-1.0, 1.0));
        assert_eq!(env.drifts(), (0.5, 0.5));
        assert_eq!(env.plateau_height(), 1.0);
        assert_eq!(o.query_count(), 3);
        let expected = 2.0 + 2.0 * gaussian_tail_integral(0.5).unwrap();
        assert!((env.mass_total() - expected).abs() < 1e-14);
        // independent route: adaptive quadrature of q̃ on (-40, 40)
        let quad = adaptive_quadrature_with_breaks(|x| env.value(x), -40.0, 40.0, &[-1.0, 1.0], 1e-10);
        assert!((quad.value - env.mass_total()).abs() < 1e-9);
        assert!((env.mass_total() - 3.7527).abs() < 1e-4);
    }

    #[test]
    fn envelope_values() {
        let env = unit_envelope();
        assert_eq!(env.value(0.0), 1.0);
        assert!((env.value(2.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((env.value(-2.0) - (-1.0f64).exp()).abs() < 1e-15);
        // continuous at the edges when tail_offset = 0
        assert!((env.value(1.0 + 1e-12) - 1.0).abs() < 1e-11);

        let line = Envelope::new(-1.0, 1.0, 0.5, 0.5, E, 3.0).unwrap();
        assert_eq!(line.value(1.0), E);
        let above = line.value(1.0 + 1e-15);
        assert!((above - (-3.0f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn masses_follow_tail_integrals() {
        let env = Envelope::new(-0.3, 2.0, 4.0, 0.7, E, 3.0).unwrap();
        let [l, p, r] = env.piece_masses();
        assert_eq!(p, E * 2.3);
        assert!((l - (-3.0f64).exp() * gaussian_tail_integral(4.0).unwrap()).abs() < 1e-16);
        assert!(l <= (-3.0f64).exp() / 4.0 && r <= (-3.0f64).exp() / 0.7);
        assert!((env.mass_total() - (l + p + r)).abs() <= 1e-12 * env.mass_total());
    }

    #[test]
    fn plateau_probability_and_uniformity() {
        let env = unit_envelope();
        let p_plateau = env.piece_masses()[1] / env.mass_total();
        assert!((p_plateau - 0.5330).abs() < 1e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| env.sample(&mut rng)).collect();
        let inside: Vec<f64> = draws.iter().copied().filter(|x| x.abs() <= 1.0).collect();
        let freq = inside.len() as f64 / n as f64;
        let se = (p_plateau * (1.0 - p_plateau) / n as f64).sqrt();
        assert!((freq - p_plateau).abs() < 4.0 * se);
        let mean = inside.iter().sum::<f64>() / inside.len() as f64;
        assert!(mean.abs() < 0.006);
    }

    #[test]
    fn sampler_matches_analytic_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for env in [
            unit_envelope(),
            Envelope::new(-0.01, 3.0, 50.0, 1.0 / 6.0, 1.0, 0.0).unwrap(),
            Envelope::new(-2.0, 0.5, 1.2, 7.5, E, 3.0).unwrap(),
        ] {
            let n = 100_000;
            let xs: Vec<f64> = (0..n).map(|_| env.sample(&mut rng)).collect();
            let ks = ks_statistic(&xs, |x| env.cdf(x));
            assert!(ks < ks_critical_001(n), "{env:?}: ks = {ks}");
        }
    }

    #[test]
    fn cdf_is_consistent_with_quadrature() {
        let env = Envelope::new(-2.0, 0.5, 1.2, 7.5, E, 3.0).unwrap();
        for &x in &[-4.0, -2.0, -0.3, 0.5, 0.7] {
            let q = adaptive_quadrature_with_breaks(|t| env.value(t), -40.0, x, &[-2.0, 0.5], 1e-12);
            assert!((q.value / env.mass_total() - env.cdf(x)).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn query_budget_and_loglog_growth() {
        let mut counts = Vec::new();
        for &kappa in &[1e3, 1e6, 1e9, 1e12] {
            let mut o = gaussian_oracle(kappa);
            build_envelope(&mut o, kappa).unwrap();
            assert!(o.query_count() <= envelope_query_budget(kappa));
            counts.push(o.query_count());
        }
        assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
        assert!(counts[3] - counts[0] <= 3, "{counts:?}");
        assert_eq!(envelope_query_budget(1.0), 3);
    }

    #[test]
    fn offset_does_not_change_envelope() {
        let mut a = gaussian_oracle(100.0);
        let mut b = gaussian_oracle(100.0).with_offset(-42.5);
        let ea = build_envelope(&mut a, 100.0).unwrap();
        let eb = build_envelope(&mut b, 100.0).unwrap();
        assert_eq!(ea.report().masses, eb.report().masses);
        assert_eq!(ea.x_plus(), eb.x_plus());
        assert_eq!(eb.shift(), -42.5);
    }

    #[test]
    fn rejects_non_unit_oracle() {
        let mut o = PotentialOracle::new(Gaussian { precision: 4.0 }, 4.0, 4.0).unwrap();
        assert!(matches!(build_envelope(&mut o, 1.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn report_serializes_expected_fields() {
        let json = serde_json::to_value(unit_envelope().report()).unwrap();
        let mut keys: Vec<_> = json.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(keys, ["drifts", "masses", "plateau_height", "tail_offset", "x_minus", "x_plus"]);
    }
}
