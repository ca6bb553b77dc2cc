//! The family of piecewise-quadratic potentials `V_1, …, V_m` that no
//! algorithm can tell apart with `o(log log kappa)` queries.
//!
//! Each `V_i` is even, anchored at `V_i(0) = V_i'(0) = 0`, and has
//! `V_i'' ∈ {1, kappa}` on blocks whose edges are dyadic multiples of
//! `s = 1/sqrt(kappa)`. Consecutive members differ only on
//! `2^{i-1} s <= |x| <= 5 * 2^{i-1} s`, while `p_i` keeps at least `1/32` of
//! its mass on `(2^{i-2} s, 2^{i-1} s]`.
//!
//! All members are stored on one common knot grid (the union of every
//! member's block edges, in units of `s`). Reference values at those knots
//! are exact in floating point for moderate `kappa`, so members that agree
//! mathematically on a segment return bit-identical answers there.

use std::collections::HashSet;
use std::f64::consts::LN_2;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::density_mass;
use crate::oracle::{Potential, PotentialOracle, Response};
use crate::piecewise::PiecewiseQuadraticPotential;
use crate::rejection::UnivariateSampler;

/// Largest `m` with `exp(-2^{2m-2} / (2 kappa)) >= 1/2`, i.e.
/// `4^{m-1} <= 2 kappa ln 2`.
pub fn largest_m(kappa: f64) -> Result<u32> {
    if !(kappa >= 2.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("the hard family needs kappa >= 2, got {kappa}")));
    }
    let budget = 2.0 * kappa * LN_2;
    let mut m = 1;
    while 4f64.powi(m as i32) <= budget {
        m += 1;
    }
    Ok(m)
}

pub fn phi(t: f64, kappa: f64) -> f64 {
    if (0.5..1.0).contains(&t) {
        kappa
    } else if (1.0..2.0).contains(&t) {
        1.0
    } else if (2.0..2.5).contains(&t) {
        kappa
    } else {
        0.0
    }
}

pub fn psi(t: f64, kappa: f64) -> f64 {
    if (2.5..4.0).contains(&t) {
        1.0
    } else if (4.0..5.0).contains(&t) {
        kappa
    } else {
        0.0
    }
}

/// `V_i''(y s)` for `y >= 0`, summed term by term from the indicator, `φ`,
/// the `ψ` blocks and the final indicator. At `y = 2^{i-1}` both the leading
/// indicator and `φ` are active; the `φ` value is returned.
pub fn unit_curvature_by_terms(kappa: f64, m: u32, i: u32, y: f64) -> f64 {
    let p = |k: i32| 2f64.powi(k);
    let i = i as i32;
    let lead = if y < p(i - 1) { 1.0 } else { 0.0 };
    let tail = if y >= 5.0 * p(m as i32 - 1) { 1.0 } else { 0.0 };
    let blocks: f64 = (i..m as i32).map(|j| psi(y / p(j), kappa)).sum();
    lead + phi(y / p(i), kappa) + blocks + tail
}

/// Support blocks `[lo, hi)` of `V_i''` on the positive axis in units of `s`,
/// in order. The last block is unbounded.
fn unit_blocks(kappa: f64, m: u32, i: u32) -> Result<Vec<(f64, f64, f64)>> {
    let p = |k: i32| 2f64.powi(k);
    let i = i as i32;
    let mut blocks = vec![
        (0.0, p(i - 1), 1.0),
        (p(i - 1), p(i), kappa),
        (p(i), p(i + 1), 1.0),
        (p(i + 1), 2.5 * p(i), kappa),
    ];
    for j in i..m as i32 {
        blocks.push((2.5 * p(j), 4.0 * p(j), 1.0));
        blocks.push((4.0 * p(j), 5.0 * p(j), kappa));
    }
    blocks.push((5.0 * p(m as i32 - 1), f64::INFINITY, 1.0));
    for w in blocks.windows(2) {
        if w[0].1 != w[1].0 {
            return Err(Error::invalid(format!(
                "member {i} blocks do not tile the half-line: [{}, {}) then [{}, {})",
                w[0].0, w[0].1, w[1].0, w[1].1
            )));
        }
    }
    Ok(blocks)
}

#[derive(Debug, Clone)]
pub struct HardFamily {
    kappa: f64,
    m: u32,
    scale: f64,
    members: Vec<PiecewiseQuadraticPotential>,
}

impl HardFamily {
    pub fn new(kappa: f64) -> Result<Self> {
        let m = largest_m(kappa)?;
        let scale = 1.0 / kappa.sqrt();
        let blocks: Vec<_> = (1..=m).map(|i| unit_blocks(kappa, m, i)).collect::<Result<_>>()?;

        let mut knots: Vec<f64> = blocks.iter().flatten().map(|b| b.0).filter(|&y| y > 0.0).collect();
        knots.sort_by(f64::total_cmp);
        knots.dedup();

        let members = blocks
            .iter()
            .map(|bs| {
                let curvature = |y: f64| {
                    bs.iter()
                        .find(|b| b.0 <= y && y < b.1)
                        .map(|b| b.2)
                        .expect("blocks tile the half-line")
                };
                let positive: Vec<f64> = std::iter::once(0.0)
                    .chain(knots.iter().copied())
                    .map(curvature)
                    .collect();
                let full_knots: Vec<f64> = knots.iter().rev().map(|k| -k).chain(knots.iter().copied()).collect();
                let full_curv: Vec<f64> = positive[1..]
                    .iter()
                    .rev()
                    .chain(positive.iter())
                    .copied()
                    .collect();
                PiecewiseQuadraticPotential::with_scale(full_knots, full_curv, scale)
            })
            .collect::<Result<_>>()?;
        Ok(HardFamily {
            kappa,
            m,
            scale,
            members,
        })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    /// `s = 1/sqrt(kappa)`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `V_i`, for `1 <= i <= m`.
    pub fn member(&self, i: u32) -> Result<&PiecewiseQuadraticPotential> {
        self.check_index(i)?;
        Ok(&self.members[i as usize - 1])
    }

    pub fn members(&self) -> &[PiecewiseQuadraticPotential] {
        &self.members
    }

    /// Counting oracle for `V_i` with `alpha = 1`, `beta = kappa`.
    pub fn oracle(&self, i: u32) -> Result<PotentialOracle<PiecewiseQuadraticPotential>> {
        PotentialOracle::new(self.member(i)?.clone(), 1.0, self.kappa)
    }

    fn check_index(&self, i: u32) -> Result<()> {
        if i == 0 || i > self.m {
            return Err(Error::invalid(format!("member index {i} outside 1..={}", self.m)));
        }
        Ok(())
    }

    /// `[2^{i-1} s, 5 * 2^{i-1} s]`: the only `|x|` where `V_i` and `V_{i+1}`
    /// may differ.
    pub fn band(&self, i: u32) -> (f64, f64) {
        let lo = 2f64.powi(i as i32 - 1) * self.scale;
        (lo, 5.0 * lo)
    }

    /// `(2^{i-2} s, 2^{i-1} s]`, left-open.
    pub fn window(&self, i: u32) -> (f64, f64) {
        let hi = 2f64.powi(i as i32 - 1) * self.scale;
        (0.5 * hi, hi)
    }

    /// Beyond this radius every member has `V'' = 1`.
    pub fn outer_radius(&self) -> f64 {
        5.0 * 2f64.powi(self.m as i32 - 1) * self.scale
    }

    /// Index `k >= 1` with `y ∈ (2^{k-2} s, 2^{k-1} s]`, or `None`.
    pub fn identify(&self, y: f64) -> Option<u32> {
        identify(y, self.kappa)
    }

    /// Number of distinct `(V, V', V'')` triples across all members at `x`.
    pub fn distinct_response_count(&self, x: f64) -> usize {
        self.members
            .iter()
            .map(|v| {
                let (a, b, c) = v.evaluate(x);
                (a.to_bits(), b.to_bits(), c.to_bits())
            })
            .collect::<HashSet<_>>()
            .len()
    }

    /// `p_i` of the identification window, by quadrature.
    pub fn member_mass_in_window(&self, i: u32, tol: f64) -> Result<f64> {
        let v = self.member(i)?;
        let (lo, hi) = self.window(i);
        let inside = density_mass(v, lo, hi, tol)?.into_result()?;
        let total = density_mass(v, f64::NEG_INFINITY, f64::INFINITY, tol)?.into_result()?;
        Ok(inside / total)
    }

    /// `(1/m) Σ_i p_i(window_i)`: success probability of the identification
    /// rule against an exact sampler.
    pub fn population_identification_rate(&self, tol: f64) -> Result<f64> {
        let mut acc = 0.0;
        for i in 1..=self.m {
            acc += self.member_mass_in_window(i, tol)?;
        }
        Ok(acc / self.m as f64)
    }

    /// `(∫ (V_{i+1}'' - V_i''), ∫_lo^hi (hi - t)(V_{i+1}'' - V_i'')(t) dt)`
    /// over the band of `i`, integrated segment by segment in units of `s`
    /// and scaled back. Both vanish exactly.
    pub fn curvature_telescoping(&self, i: u32) -> Result<(f64, f64)> {
        self.check_index(i)?;
        self.check_index(i + 1)?;
        let (a, b) = (&self.members[i as usize - 1], &self.members[i as usize]);
        let lo = 2f64.powi(i as i32 - 1);
        let hi = 5.0 * lo;
        let (mut first, mut second) = (0.0, 0.0);
        let segs_a: Vec<_> = unit_segments(a).collect();
        let segs_b: Vec<_> = unit_segments(b).collect();
        for (sa, sb) in segs_a.iter().zip(&segs_b) {
            debug_assert_eq!((sa.0, sa.1), (sb.0, sb.1));
            let (l, h) = (sa.0.max(lo), sa.1.min(hi));
            if l >= h {
                continue;
            }
            let diff = sb.2 - sa.2;
            first += diff * (h - l);
            second += diff * 0.5 * ((hi - l) * (hi - l) - (hi - h) * (hi - h));
        }
        Ok((first * self.scale, second * self.scale * self.scale))
    }

    /// Largest `|V_i - V_{i+1}|`, `|V_i' - V_{i+1}'|` or `|V_i'' - V_{i+1}''|`
    /// over an `n`-point grid on `[-R, R]` that skips the band of `i`.
    /// `R` is twice the outer radius.
    pub fn off_band_max_deviation(&self, i: u32, n: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(i + 1)?;
        let (a, b) = (&self.members[i as usize - 1], &self.members[i as usize]);
        let (lo, hi) = self.band(i);
        let r = 2.0 * self.outer_radius();
        let mut worst = 0.0f64;
        for k in 0..n {
            let x = -r + 2.0 * r * k as f64 / (n - 1) as f64;
            if (lo..=hi).contains(&x.abs()) {
                continue;
            }
            let (va, da, ca) = a.evaluate(x);
            let (vb, db, cb) = b.evaluate(x);
            worst = worst.max((va - vb).abs()).max((da - db).abs()).max((ca - cb).abs());
        }
        Ok(worst)
    }

    /// Answers of member `i` at each point, as an exact transcript.
    pub fn transcript(&self, i: u32, points: &[f64]) -> Result<OracleTranscript> {
        let v = self.member(i)?;
        Ok(OracleTranscript {
            entries: points
                .iter()
                .map(|&x| {
                    let (a, b, c) = v.evaluate(x);
                    (x, (a, b, c))
                })
                .collect(),
        })
    }

    /// Members whose exact answers reproduce every entry of `transcript`.
    pub fn consistent_members(&self, transcript: &OracleTranscript) -> Vec<u32> {
        (1..=self.m)
            .filter(|&i| {
                let v = &self.members[i as usize - 1];
                transcript.entries.iter().all(|&(x, r)| v.evaluate(x) == r)
            })
            .collect()
    }
}

fn unit_segments(v: &PiecewiseQuadraticPotential) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
    let s = v.scale();
    v.segments().map(move |(lo, hi, c)| (lo / s, hi / s, c))
}

/// Index `k >= 1` with `y ∈ (2^{k-2}/sqrt(kappa), 2^{k-1}/sqrt(kappa)]`, or
/// `None` when `y` lies in no window (every `y <= 2^{-1}/sqrt(kappa)`).
pub fn identify(y: f64, kappa: f64) -> Option<u32> {
    let s = 1.0 / kappa.sqrt();
    if !(y > 0.5 * s) || !y.is_finite() {
        return None;
    }
    let edge = |k: i32| 2f64.powi(k - 1) * s;
    let mut k = (y / s).log2().ceil() as i32 + 1;
    while k > 1 && y <= edge(k - 1) {
        k -= 1;
    }
    while y > edge(k) {
        k += 1;
    }
    Some(k as u32)
}

/// Query points and the exact `(V, V', V'')` answers returned there.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleTranscript {
    pub entries: Vec<(f64, (f64, f64, f64))>,
}

impl OracleTranscript {
    pub fn record(&mut self, x: f64, r: Response) {
        let triple = (
            r.value.unwrap_or(f64::NAN),
            r.derivative.unwrap_or(f64::NAN),
            r.second_derivative.unwrap_or(f64::NAN),
        );
        self.entries.push((x, triple));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentificationResult {
    pub trials: u64,
    pub successes: u64,
    pub rate: f64,
}

impl IdentificationResult {
    pub fn standard_error(&self, p: f64) -> f64 {
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Draws `Z` uniform on `1..=m`, `Y` from `sampler(Z)`, and scores
/// `identify(Y) == Z`.
pub fn run_identification_experiment<R, F>(
    family: &HardFamily,
    trials: u64,
    rng: &mut R,
    mut sampler: F,
) -> Result<IdentificationResult>
where
    R: Rng + ?Sized,
    F: FnMut(u32, &mut R) -> Result<f64>,
{
    let mut successes = 0;
    for _ in 0..trials {
        let z = rng.random_range(1..=family.m());
        let y = sampler(z, rng)?;
        if family.identify(y) == Some(z) {
            successes += 1;
        }
    }
    Ok(IdentificationResult {
        trials,
        successes,
        rate: successes as f64 / trials as f64,
    })
}

/// One exact rejection sampler per member, envelopes built once.
pub struct MemberSamplers {
    samplers: Vec<UnivariateSampler<PotentialOracle<PiecewiseQuadraticPotential>>>,
}

impl MemberSamplers {
    pub fn new(family: &HardFamily) -> Result<Self> {
        let samplers = (1..=family.m())
            .map(|i| UnivariateSampler::new(family.oracle(i)?))
            .collect::<Result<_>>()?;
        Ok(MemberSamplers { samplers })
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, i: u32, rng: &mut R) -> Result<f64> {
        let out = self.samplers[i as usize - 1].sample(rng)?;
        Ok(out.sample.expect("exact sampler always returns a draw"))
    }

    pub fn total_queries(&self) -> u64 {
        self.samplers.iter().map(|s| s.query_count()).sum()
    }
}

/// Summary written by `hardfamily-verify`.
#[derive(Debug, Clone, Serialize)]
pub struct HardFamilyReport {
    pub kappa: f64,
    pub m: u32,
    pub lemma1_max_dev: f64,
    pub lemma2_min_mass: f64,
    pub degeneracy_max: usize,
    pub identification_rate: f64,
    pub identification_trials: u64,
}

pub const OFF_BAND_TOLERANCE: f64 = 1e-9;
pub const WINDOW_MASS_BOUND: f64 = 1.0 / 32.0;
pub const DEGENERACY_BOUND: usize = 5;

impl HardFamilyReport {
    /// `Ok(())` when every bound holds; otherwise the list of failures.
    pub fn check(&self) -> std::result::Result<(), Vec<String>> {
        let mut failures = Vec::new();
        if !(self.lemma1_max_dev <= OFF_BAND_TOLERANCE) {
            failures.push(format!("lemma1_max_dev = {:e} > {OFF_BAND_TOLERANCE:e}", self.lemma1_max_dev));
        }
        if !(self.lemma2_min_mass >= WINDOW_MASS_BOUND) {
            failures.push(format!("lemma2_min_mass = {} < 1/32", self.lemma2_min_mass));
        }
        if self.degeneracy_max > DEGENERACY_BOUND {
            failures.push(format!("degeneracy_max = {} > {DEGENERACY_BOUND}", self.degeneracy_max));
        }
        if self.identification_trials > 0 {
            let se = (WINDOW_MASS_BOUND * (1.0 - WINDOW_MASS_BOUND) / self.identification_trials as f64).sqrt();
            if self.identification_rate < WINDOW_MASS_BOUND - 3.0 * se {
                failures.push(format!(
                    "identification_rate = {} < 1/32 - 3 s.e.",
                    self.identification_rate
                ));
            }
        }
        if failures.is_empty() {
            Ok(())
        } else {
            Err(failures)
        }
    }
}

/// Random query points for the degeneracy sweep: half uniform on
/// `[-R, R]`, half log-uniform in magnitude on `[s/4, R]` with random sign,
/// `R` twice the outer radius.
pub fn degeneracy_probe_points<R: Rng + ?Sized>(family: &HardFamily, n: usize, rng: &mut R) -> Vec<f64> {
    let r = 2.0 * family.outer_radius();
    let (log_lo, log_hi) = ((0.25 * family.scale()).ln(), r.ln());
    (0..n)
        .map(|k| {
            if k % 2 == 0 {
                rng.random_range(-r..r)
            } else {
                let mag = rng.random_range(log_lo..log_hi).exp();
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
        })
        .collect()
}

/// Runs every structural check plus the identification experiment.
pub fn verify_family<R: Rng + ?Sized>(kappa: f64, trials: u64, rng: &mut R) -> Result<HardFamilyReport> {
    let family = HardFamily::new(kappa)?;
    let mut lemma1_max_dev = 0.0f64;
    for i in 1..family.m() {
        lemma1_max_dev = lemma1_max_dev.max(family.off_band_max_deviation(i, 10_000)?);
    }
    let mut lemma2_min_mass = f64::INFINITY;
    for i in 1..=family.m() {
        lemma2_min_mass = lemma2_min_mass.min(family.member_mass_in_window(i, 1e-10)?);
    }
    let degeneracy_max = degeneracy_probe_points(&family, 10_000, rng)
        .into_iter()
        .map(|x| family.distinct_response_count(x))
        .max()
        .unwrap_or(0);
    let identification_rate = if trials > 0 {
        let mut samplers = MemberSamplers::new(&family)?;
        run_identification_experiment(&family, trials, rng, |i, r| samplers.sample(i, r))?.rate
    } else {
        f64::NAN
    };
    Ok(HardFamilyReport {
        kappa,
        m: family.m(),
        lemma1_max_dev,
        lemma2_min_mass,
        degeneracy_max,
        identification_rate,
        identification_trials: trials,
    })
}
