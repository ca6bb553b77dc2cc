//! Exact piecewise-quadratic potentials.
//!
//! `V''` is piecewise constant between strictly increasing breakpoints, and
//! `V`, `V'` are obtained by integrating it outward from the anchor at the
//! origin. The integration is done once at construction and every segment
//! keeps its own reference point, so evaluation is a binary search plus one
//! quadratic.
//!
//! Breakpoints may be given in units of a length `scale`: with
//! `x = scale * y` the potential is `V(x) = scale^2 * U(y)` where `U'' = V''`.
//! When the unit breakpoints are dyadic (as in the hard family) the reference
//! values of `U` are exact in floating point, so potentials that agree
//! mathematically on a segment also agree bit for bit.

use crate::error::{Error, Result};
use crate::oracle::Potential;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    /// Reference point in unit coordinates.
    origin: f64,
    /// `U` and `U'` at `origin`.
    value: f64,
    slope: f64,
    curvature: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseQuadraticPotential {
    scale: f64,
    knots: Vec<f64>,
    segments: Vec<Segment>,
}

impl PiecewiseQuadraticPotential {
    /// `curvatures[j]` applies on `[breakpoints[j-1], breakpoints[j])`, with
    /// the two unbounded end segments included. Anchored at `V(0) = V'(0) = 0`.
    pub fn new(breakpoints: Vec<f64>, curvatures: Vec<f64>) -> Result<Self> {
        Self::with_scale(breakpoints, curvatures, 1.0)
    }

    /// Like [`PiecewiseQuadraticPotential::new`] with breakpoints measured in
    /// units of `scale`.
    pub fn with_scale(unit_breakpoints: Vec<f64>, curvatures: Vec<f64>, scale: f64) -> Result<Self> {
        Self::anchored(unit_breakpoints, curvatures, scale, 0.0, 0.0)
    }

    /// Full constructor with an arbitrary anchor `(V(0), V'(0))`.
    pub fn anchored(
        unit_breakpoints: Vec<f64>,
        curvatures: Vec<f64>,
        scale: f64,
        anchor_value: f64,
        anchor_slope: f64,
    ) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!("scale must be positive, got {scale}")));
        }
        if curvatures.len() != unit_breakpoints.len() + 1 {
            return Err(Error::invalid(format!(
                "{} breakpoints need {} curvatures, got {}",
                unit_breakpoints.len(),
                unit_breakpoints.len() + 1,
                curvatures.len()
            )));
        }
        if unit_breakpoints.iter().any(|b| !b.is_finite())
            || unit_breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::invalid("breakpoints must be finite and strictly increasing"));
        }
        if curvatures.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::invalid("curvatures must be finite and nonnegative"));
        }

        let knots = unit_breakpoints;
        let n = curvatures.len();
        let zero = knots.partition_point(|&k| k <= 0.0);
        let placeholder = Segment {
            origin: 0.0,
            value: 0.0,
            slope: 0.0,
            curvature: 0.0,
        };
        let mut segments = vec![placeholder; n];
        segments[zero] = Segment {
            origin: 0.0,
            value: anchor_value / (scale * scale),
            slope: anchor_slope / scale,
            curvature: curvatures[zero],
        };
        for j in zero + 1..n {
            let prev = segments[j - 1];
            let y = knots[j - 1];
            let (value, slope) = prev.at(y);
            segments[j] = Segment {
                origin: y,
                value,
                slope,
                curvature: curvatures[j],
            };
        }
        for j in (0..zero).rev() {
            let next = segments[j + 1];
            let y = knots[j];
            let (value, slope) = next.at(y);
            segments[j] = Segment {
                origin: y,
                value,
                slope,
                curvature: curvatures[j],
            };
        }
        Ok(PiecewiseQuadraticPotential {
            scale,
            knots,
            segments,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Breakpoints in unit coordinates.
    pub fn unit_breakpoints(&self) -> &[f64] {
        &self.knots
    }

    pub fn curvatures(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments.iter().map(|s| s.curvature)
    }

    /// Segments as `(lo, hi, curvature)` in `x` coordinates; end segments are
    /// unbounded.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n = self.segments.len();
        (0..n).map(move |j| {
            let lo = if j == 0 {
                f64::NEG_INFINITY
            } else {
                self.knots[j - 1] * self.scale
            };
            let hi = if j + 1 == n {
                f64::INFINITY
            } else {
                self.knots[j] * self.scale
            };
            (lo, hi, self.segments[j].curvature)
        })
    }

    fn segment(&self, y: f64) -> &Segment {
        // A point on a breakpoint belongs to the segment on its right.
        &self.segments[self.knots.partition_point(|&k| k <= y)]
    }

    /// Checks `alpha <= V'' <= beta` on every segment and that the mode is at
    /// the origin.
    pub fn check_class(&self, alpha: f64, beta: f64) -> Result<()> {
        for (lo, hi, c) in self.segments() {
            if c < alpha || c > beta {
                let at = if lo.is_finite() { lo } else { hi.min(0.0) };
                return Err(Error::class(
                    at,
                    format!("segment curvature {c} outside [{alpha}, {beta}]"),
                ));
            }
        }
        let slope = self.derivative(0.0);
        if slope != 0.0 {
            return Err(Error::class(0.0, format!("V'(0) = {slope}, mode is not at the origin")));
        }
        Ok(())
    }
}

impl Segment {
    fn at(&self, y: f64) -> (f64, f64) {
        let d = y - self.origin;
        (
            self.value + d * (self.slope + 0.5 * self.curvature * d),
            self.slope + self.curvature * d,
        )
    }
}

impl Potential for PiecewiseQuadraticPotential {
    fn value(&self, x: f64) -> f64 {
        self.evaluate(x).0
    }

    fn derivative(&self, x: f64) -> f64 {
        self.evaluate(x).1
    }

    fn second_derivative(&self, x: f64) -> f64 {
        self.segment(x / self.scale).curvature
    }

    fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        let y = x / self.scale;
        let seg = self.segment(y);
        let (u, du) = seg.at(y);
        (self.scale * self.scale * u, self.scale * du, seg.curvature)
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.knots.iter().map(|k| k * self.scale).collect()
    }
}
