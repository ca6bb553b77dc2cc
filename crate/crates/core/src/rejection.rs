//! Rejection sampling against an [`Envelope`], exact or with a trial cap.

use std::fmt;

use rand::Rng;
use serde::Serialize;

use crate::envelope::{build_envelope, Envelope};
use crate::error::{Error, Result};
use crate::numerics::{density_mass, open_unit};
use crate::oracle::{rescale_to_unit, Oracle, Potential, Rescaled};

/// Result of one sampling call. `sample == None` is the failure token of the
/// capped sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SampleOutcome {
    pub sample: Option<f64>,
    pub trials: u64,
    pub queries: u64,
}

impl SampleOutcome {
    pub fn is_failure(&self) -> bool {
        self.sample.is_none()
    }
}

impl fmt::Display for SampleOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sample {
            Some(x) => write!(f, "{x}"),
            None => f.write_str("FAILURE"),
        }
    }
}

// Log-space slack before a ratio above one is reported as a class violation.
const DOMINATION_SLACK: f64 = 1e-9;

/// One proposal and its accept/reject decision. Costs one query.
fn trial<O, R>(oracle: &mut O, env: &Envelope, rng: &mut R) -> Result<Option<f64>>
where
    O: Oracle + ?Sized,
    R: Rng + ?Sized,
{
    let x = env.sample(rng);
    let w = oracle.value(x)? - env.shift();
    let log_ratio = -w - env.log_value(x);
    if log_ratio > DOMINATION_SLACK * (1.0 + w.abs()) {
        return Err(Error::class(
            x,
            format!("envelope fails to dominate the target (log ratio {log_ratio:.3e})"),
        ));
    }
    Ok((open_unit(rng).ln() <= log_ratio).then_some(x))
}

/// Repeats trials until acceptance. The returned draw is exactly distributed
/// as `exp(-W)` normalized, where `W` is the oracle's zeroth-order answer.
pub fn sample_exact<O, R>(oracle: &mut O, env: &Envelope, rng: &mut R) -> Result<SampleOutcome>
where
    O: Oracle + ?Sized,
    R: Rng + ?Sized,
{
    let start = oracle.query_count();
    let mut trials = 0;
    loop {
        trials += 1;
        if let Some(x) = trial(oracle, env, rng)? {
            return Ok(SampleOutcome {
                sample: Some(x),
                trials,
                queries: oracle.query_count() - start,
            });
        }
    }
}

/// At most `cap` trials; returns the failure token if all are rejected.
/// Conditioned on success the draw is exact.
pub fn sample_capped<O, R>(oracle: &mut O, env: &Envelope, cap: u64, rng: &mut R) -> Result<SampleOutcome>
where
    O: Oracle + ?Sized,
    R: Rng + ?Sized,
{
    let start = oracle.query_count();
    for trials in 1..=cap {
        if let Some(x) = trial(oracle, env, rng)? {
            return Ok(SampleOutcome {
                sample: Some(x),
                trials,
                queries: oracle.query_count() - start,
            });
        }
    }
    Ok(SampleOutcome {
        sample: None,
        trials: cap,
        queries: oracle.query_count() - start,
    })
}

/// Default lower bound on the acceptance probability used to size the cap.
pub const DEFAULT_RHO_FLOOR: f64 = 0.1;

/// `⌈ln(1/epsilon) / ln(1/(1 - rho_floor))⌉`, at least 1: trials needed so
/// that failure has probability at most `epsilon` when every trial accepts
/// with probability at least `rho_floor`.
pub fn trial_cap(epsilon: f64, rho_floor: f64) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(rho_floor > 0.0 && rho_floor < 1.0) {
        return Err(Error::invalid(format!("rho_floor must lie in (0, 1), got {rho_floor}")));
    }
    let ratio = epsilon.ln() / (1.0 - rho_floor).ln();
    // ratios that are integers up to rounding must not round up
    Ok(((ratio - 1e-9).ceil() as u64).max(1))
}

/// `Z_p / Z_q` for a unit-form potential, by quadrature. The envelope's shift
/// must be expressed in the potential's own values.
pub fn acceptance_probability<P: Potential + ?Sized>(potential: &P, env: &Envelope, tol: f64) -> Result<f64> {
    let z_p = density_mass(potential, f64::NEG_INFINITY, f64::INFINITY, tol)?.into_result()?;
    Ok(z_p * env.shift().exp() / env.mass_total())
}

/// Rescale, build the envelope once, then draw repeatedly.
#[derive(Debug)]
pub struct UnivariateSampler<O> {
    oracle: Rescaled<O>,
    envelope: Envelope,
    envelope_queries: u64,
}

impl<O: Oracle> UnivariateSampler<O> {
    pub fn new(oracle: O) -> Result<Self> {
        let mut oracle = rescale_to_unit(oracle);
        let start = oracle.query_count();
        let kappa = oracle.kappa();
        let envelope = build_envelope(&mut oracle, kappa)?;
        let envelope_queries = oracle.query_count() - start;
        Ok(UnivariateSampler {
            oracle,
            envelope,
            envelope_queries,
        })
    }

    /// Envelope of the rescaled target `V(x / sqrt(alpha))`.
    pub fn envelope(&self) -> &Envelope {
        &self.envelope
    }

    pub fn envelope_queries(&self) -> u64 {
        self.envelope_queries
    }

    pub fn query_count(&self) -> u64 {
        self.oracle.query_count()
    }

    pub fn oracle(&self) -> &O {
        self.oracle.inner()
    }

    pub fn into_oracle(self) -> O {
        self.oracle.into_inner()
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<SampleOutcome> {
        let out = sample_exact(&mut self.oracle, &self.envelope, rng)?;
        Ok(self.map_back(out))
    }

    pub fn sample_capped<R: Rng + ?Sized>(&mut self, cap: u64, rng: &mut R) -> Result<SampleOutcome> {
        let out = sample_capped(&mut self.oracle, &self.envelope, cap, rng)?;
        Ok(self.map_back(out))
    }

    fn map_back(&self, mut out: SampleOutcome) -> SampleOutcome {
        out.sample = out.sample.map(|x| self.oracle.map_back(x));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_tail_integral, ks_critical_001, ks_statistic, normal_cdf};
    use crate::oracle::{Gaussian, PotentialOracle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standard() -> PotentialOracle<Gaussian> {
        PotentialOracle::new(Gaussian::standard(), 1.0, 1.0).unwrap()
    }

    #[test]
    fn cap_examples() {
        assert_eq!(trial_cap(0.01, 0.1).unwrap(), 44);
        assert_eq!(trial_cap(0.5, 0.5).unwrap(), 1);
        assert_eq!(trial_cap(0.25, 0.5).unwrap(), 2);
        assert_eq!(trial_cap(0.9, 0.1).unwrap(), 1);
        assert!(trial_cap(0.0, 0.1).is_err());
        assert!(trial_cap(0.1, 1.0).is_err());
    }

    #[test]
    fn gaussian_acceptance_probability() {
        let mut o = standard();
        let env = build_envelope(&mut o, 1.0).unwrap();
        let rho = acceptance_probability(&Gaussian::standard(), &env, 1e-10).unwrap();
        let closed = (2.0 * std::f64::consts::PI).sqrt() / (2.0 + 2.0 * gaussian_tail_integral(0.5).unwrap());
        assert!((rho - closed).abs() < 1e-9);
        assert!((rho - 0.6680).abs() < 1e-4);
        assert!((1.0 / rho - 1.497).abs() < 1e-3);
    }

    #[test]
    fn exact_sampler_is_standard_normal() {
        let mut sampler = UnivariateSampler::new(standard()).unwrap();
        assert_eq!(sampler.envelope_queries(), 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50_000;
        let mut trials = 0;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                let out = sampler.sample(&mut rng).unwrap();
                assert_eq!(out.trials, out.queries);
                trials += out.trials;
                out.sample.unwrap()
            })
            .collect();
        assert!(ks_statistic(&xs, normal_cdf) < ks_critical_001(n));
        let mean_trials = trials as f64 / n as f64;
        assert!((mean_trials - 1.497).abs() < 0.03, "{mean_trials}");
    }

    #[test]
    fn rescaling_maps_draws_back() {
        // V = 4x²/2 has standard deviation 1/2
        let o = PotentialOracle::new(Gaussian { precision: 4.0 }, 4.0, 4.0).unwrap();
        let mut sampler = UnivariateSampler::new(o).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = 20_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).unwrap().sample.unwrap()).collect();
        assert!(ks_statistic(&xs, |x| normal_cdf(2.0 * x)) < ks_critical_001(n));
    }

    #[test]
    fn capped_sampler_failure_rate() {
        let mut o = standard();
        let env = build_envelope(&mut o, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 20_000;
        let failures = (0..n)
            .filter(|_| sample_capped(&mut o, &env, 1, &mut rng).unwrap().is_failure())
            .count();
        let expected = 1.0 - 0.6680;
        let freq = failures as f64 / n as f64;
        assert!((freq - expected).abs() < 4.0 * (expected * (1.0 - expected) / n as f64).sqrt());
    }

    #[test]
    fn failure_token_displays() {
        let out = SampleOutcome {
            sample: None,
            trials: 3,
            queries: 3,
        };
        assert_eq!(out.to_string(), "FAILURE");
    }

    #[test]
    fn non_dominated_target_is_a_class_violation() {
        // A much flatter target than declared escapes the envelope's tails.
        let mut declared = standard();
        let env = build_envelope(&mut declared, 1.0).unwrap();
        let mut flat = PotentialOracle::new(Gaussian { precision: 1e-4 }, 1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut saw_violation = false;
        for _ in 0..200 {
            if let Err(Error::ClassViolation { .. }) = sample_exact(&mut flat, &env, &mut rng) {
                saw_violation = true;
                break;
            }
        }
        assert!(saw_violation);
    }
}
