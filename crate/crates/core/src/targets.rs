//! Named targets shared by the command line and the test suites.
//!
//! * `gaussian`: `V = x²/2` declared with `beta = kappa`.
//! * `skewed`: `V''` alternates between 1 and `kappa` on knots `2^k s` to the
//!   right and `-3^k s` to the left, `s = 1/sqrt(kappa)`.
//! * `hard:i`: member `i` of the hard family at `kappa`.
//! * anything else is read as a path to a potential JSON document.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hard_family::HardFamily;
use crate::oracle::{AnyPotential, Gaussian, PotentialOracle, PotentialSpec};
use crate::piecewise::PiecewiseQuadraticPotential;

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Gaussian,
    Skewed,
    Hard(u32),
    File(PathBuf),
}

impl FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Target::Gaussian),
            "skewed" => Ok(Target::Skewed),
            _ => {
                if let Some(i) = s.strip_prefix("hard:") {
                    let i: u32 = i
                        .parse()
                        .map_err(|_| Error::invalid(format!("bad hard-family index in {s:?}")))?;
                    if i == 0 {
                        return Err(Error::invalid("hard-family members are numbered from 1"));
                    }
                    Ok(Target::Hard(i))
                } else if s.ends_with(".json") || s.contains('/') {
                    Ok(Target::File(PathBuf::from(s)))
                } else {
                    Err(Error::invalid(format!(
                        "unknown target {s:?}: expected gaussian, skewed, hard:<i> or a JSON path"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Gaussian => f.write_str("gaussian"),
            Target::Skewed => f.write_str("skewed"),
            Target::Hard(i) => write!(f, "hard:{i}"),
            Target::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl Target {
    /// Builds the metered oracle. File targets carry their own constants and
    /// ignore `kappa`.
    pub fn oracle(&self, kappa: f64) -> Result<PotentialOracle<AnyPotential>> {
        match self {
            Target::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::invalid(format!("cannot read {}: {e}", path.display())))?;
                PotentialSpec::from_json(&text)?.oracle()
            }
            _ => PotentialOracle::new(self.potential(kappa)?, 1.0, kappa),
        }
    }

    /// The unit-form potential of a builtin target.
    pub fn potential(&self, kappa: f64) -> Result<AnyPotential> {
        match self {
            Target::Gaussian => Ok(AnyPotential::Gaussian(Gaussian::standard())),
            Target::Skewed => Ok(AnyPotential::Piecewise(skewed(kappa)?)),
            Target::Hard(i) => Ok(AnyPotential::Piecewise(HardFamily::new(kappa)?.member(*i)?.clone())),
            Target::File(path) => Err(Error::invalid(format!(
                "{} is not a builtin target",
                path.display()
            ))),
        }
    }

    /// `gaussian`, `skewed` and every `hard:i` that exists at `kappa`.
    pub fn builtins(kappa: f64) -> Vec<Target> {
        let mut out = vec![Target::Gaussian, Target::Skewed];
        if let Ok(family) = HardFamily::new(kappa) {
            out.extend((1..=family.m()).map(Target::Hard));
        }
        out
    }
}

// Knots stop once they pass this many units of x.
const SKEWED_EXTENT: f64 = 4.0;

/// Curvature 1 on `[-s, s)`, then alternating `kappa`, 1, … across knots
/// `2^k s` on the right and `-3^k s` on the left.
pub fn skewed(kappa: f64) -> Result<PiecewiseQuadraticPotential> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(Error::invalid(format!("kappa must be >= 1, got {kappa}")));
    }
    let s = 1.0 / kappa.sqrt();
    let side = |base: f64| -> Vec<f64> {
        std::iter::successors(Some(1.0), |k| Some(k * base))
            .take_while(|k| k * s <= SKEWED_EXTENT)
            .collect()
    };
    let right = side(2.0);
    let left = side(3.0);
    let alternate = |j: usize| if j % 2 == 0 { 1.0 } else { kappa };

    let knots: Vec<f64> = left.iter().rev().map(|k| -k).chain(right.iter().copied()).collect();
    let curvatures: Vec<f64> = (1..=left.len())
        .rev()
        .map(alternate)
        .chain(std::iter::once(1.0))
        .chain((1..=right.len()).map(alternate))
        .collect();
    PiecewiseQuadraticPotential::with_scale(knots, curvatures, s)
}

/// A random member of the class `1 <= V'' <= kappa` with `V(0) = V'(0) = 0`:
/// up to 12 knots per side at log-uniform distances in `[s/8, 8]` and
/// curvatures drawn from `{1, kappa}` or uniformly in between.
pub fn random_class_member<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> Result<PiecewiseQuadraticPotential> {
    let s = 1.0 / kappa.sqrt();
    let (lo, hi) = ((s / 8.0).ln(), 8f64.ln());
    let mut knots: Vec<f64> = Vec::new();
    for sign in [-1.0, 1.0] {
        let n = rng.random_range(0..=12);
        knots.extend((0..n).map(|_| sign * rng.random_range(lo..hi).exp()));
    }
    knots.sort_by(f64::total_cmp);
    knots.dedup();
    let curvatures = (0..=knots.len())
        .map(|_| match rng.random_range(0..3) {
            0 => 1.0,
            1 => kappa,
            _ => rng.random_range(1.0..=kappa),
        })
        .collect();
    PiecewiseQuadraticPotential::new(knots, curvatures)
}
