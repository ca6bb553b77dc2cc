//! The query model.
//!
//! A sampler only learns the potential `V` (with `p ∝ exp(-V)`) through an
//! [`Oracle`]: at a point `x` it may ask for `V(x) + C`, `V'(x)` and/or
//! `V''(x)`, where `C` is a hidden constant. Every call is one query, no
//! matter how many orders it asks for, and every oracle keeps a monotone
//! counter of the calls made against it.
//!
//! [`normalize_at_zero`] and [`rescale_to_unit`] are the two preprocessing
//! reductions that bring a target with `alpha <= V'' <= beta` and mode at the
//! origin into the normal form `V(0) = 0`, `1 <= V'' <= kappa`.

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::piecewise::PiecewiseQuadraticPotential;

bitflags! {
    /// Derivative orders an oracle call can return.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
    pub struct Orders: u8 {
        const VALUE = 0b001;
        const DERIVATIVE = 0b010;
        const SECOND = 0b100;
    }
}

impl Orders {
    pub const FIRST_ORDER: Orders = Orders::VALUE.union(Orders::DERIVATIVE);
}

/// A univariate potential with closed-form derivatives.
pub trait Potential {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
    fn second_derivative(&self, x: f64) -> f64;

    fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        (self.value(x), self.derivative(x), self.second_derivative(x))
    }

    /// Points where `V''` may jump. Quadrature splits panels here.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
}

impl<P: Potential + ?Sized> Potential for &P {
    fn value(&self, x: f64) -> f64 {
        (**self).value(x)
    }
    fn derivative(&self, x: f64) -> f64 {
        (**self).derivative(x)
    }
    fn second_derivative(&self, x: f64) -> f64 {
        (**self).second_derivative(x)
    }
    fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        (**self).evaluate(x)
    }
    fn breakpoints(&self) -> Vec<f64> {
        (**self).breakpoints()
    }
}

/// `V(x) = precision * x^2 / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub precision: f64,
}

impl Gaussian {
    pub fn standard() -> Self {
        Gaussian { precision: 1.0 }
    }
}

impl Potential for Gaussian {
    fn value(&self, x: f64) -> f64 {
        0.5 * self.precision * x * x
    }
    fn derivative(&self, x: f64) -> f64 {
        self.precision * x
    }
    fn second_derivative(&self, _x: f64) -> f64 {
        self.precision
    }
}

/// Answer to one oracle call; only the requested orders are filled in.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Response {
    pub value: Option<f64>,
    pub derivative: Option<f64>,
    pub second_derivative: Option<f64>,
}

/// A metered source of potential information.
pub trait Oracle {
    /// Orders this oracle is able to answer.
    fn available(&self) -> Orders;

    /// Declared strong-convexity constant.
    fn alpha(&self) -> f64;

    /// Declared smoothness constant.
    fn beta(&self) -> f64;

    fn kappa(&self) -> f64 {
        self.beta() / self.alpha()
    }

    /// Number of calls answered so far.
    fn query_count(&self) -> u64;

    /// One metered call. Fails without charging if `orders` is not a subset of
    /// [`Oracle::available`].
    fn query(&mut self, x: f64, orders: Orders) -> Result<Response>;

    /// Zeroth-order query.
    fn value(&mut self, x: f64) -> Result<f64> {
        Ok(self
            .query(x, Orders::VALUE)?
            .value
            .expect("oracle omitted a requested value"))
    }

    /// First-order query.
    fn derivative(&mut self, x: f64) -> Result<f64> {
        Ok(self
            .query(x, Orders::DERIVATIVE)?
            .derivative
            .expect("oracle omitted a requested derivative"))
    }
}

impl<O: Oracle + ?Sized> Oracle for &mut O {
    fn available(&self) -> Orders {
        (**self).available()
    }
    fn alpha(&self) -> f64 {
        (**self).alpha()
    }
    fn beta(&self) -> f64 {
        (**self).beta()
    }
    fn query_count(&self) -> u64 {
        (**self).query_count()
    }
    fn query(&mut self, x: f64, orders: Orders) -> Result<Response> {
        (**self).query(x, orders)
    }
}

pub(crate) fn check_orders(requested: Orders, available: Orders) -> Result<()> {
    if available.contains(requested) {
        Ok(())
    } else {
        Err(Error::UnavailableOrder {
            requested,
            available,
        })
    }
}

// Relative slack when checking returned curvatures against [alpha, beta].
const CURVATURE_SLACK: f64 = 1e-12;

/// Wraps a [`Potential`] into a counting oracle with a hidden additive offset.
#[derive(Debug, Clone)]
pub struct PotentialOracle<P> {
    potential: P,
    orders: Orders,
    hidden_offset: f64,
    alpha: f64,
    beta: f64,
    queries: u64,
}

impl<P: Potential> PotentialOracle<P> {
    pub fn new(potential: P, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(beta.is_finite() && beta >= alpha) {
            return Err(Error::invalid(format!(
                "need 0 < alpha <= beta < inf, got alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(PotentialOracle {
            potential,
            orders: Orders::all(),
            hidden_offset: 0.0,
            alpha,
            beta,
            queries: 0,
        })
    }

    pub fn with_offset(mut self, offset: f64) -> Self {
        self.hidden_offset = offset;
        self
    }

    pub fn with_orders(mut self, orders: Orders) -> Self {
        self.orders = orders;
        self
    }

    /// Unmetered access for test harnesses (quadrature, plotting).
    pub fn potential(&self) -> &P {
        &self.potential
    }
}

impl<P: Potential> Oracle for PotentialOracle<P> {
    fn available(&self) -> Orders {
        self.orders
    }
    fn alpha(&self) -> f64 {
        self.alpha
    }
    fn beta(&self) -> f64 {
        self.beta
    }
    fn query_count(&self) -> u64 {
        self.queries
    }

    fn query(&mut self, x: f64, orders: Orders) -> Result<Response> {
        check_orders(orders, self.orders)?;
        self.queries += 1;
        let mut out = Response::default();
        if orders.contains(Orders::VALUE) {
            out.value = Some(self.potential.value(x) + self.hidden_offset);
        }
        if orders.contains(Orders::DERIVATIVE) {
            out.derivative = Some(self.potential.derivative(x));
        }
        if orders.contains(Orders::SECOND) {
            let h = self.potential.second_derivative(x);
            let slack = CURVATURE_SLACK * self.beta;
            if !(h >= self.alpha - slack && h <= self.beta + slack) {
                return Err(Error::class(
                    x,
                    format!("V'' = {h} outside [{}, {}]", self.alpha, self.beta),
                ));
            }
            out.second_derivative = Some(h);
        }
        Ok(out)
    }
}

/// Oracle answering `V(x) - V(0)`; see [`normalize_at_zero`].
#[derive(Debug, Clone)]
pub struct Normalized<O> {
    inner: O,
    reference: f64,
}

impl<O> Normalized<O> {
    /// The raw zeroth-order answer at the origin that gets subtracted.
    pub fn reference(&self) -> f64 {
        self.reference
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

/// Spends one query at the origin and returns an oracle whose zeroth-order
/// answers are `V(x) - V(0)`, cancelling the hidden offset.
pub fn normalize_at_zero<O: Oracle>(mut oracle: O) -> Result<Normalized<O>> {
    let reference = oracle.value(0.0)?;
    Ok(Normalized {
        inner: oracle,
        reference,
    })
}

impl<O: Oracle> Oracle for Normalized<O> {
    fn available(&self) -> Orders {
        self.inner.available()
    }
    fn alpha(&self) -> f64 {
        self.inner.alpha()
    }
    fn beta(&self) -> f64 {
        self.inner.beta()
    }
    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }
    fn query(&mut self, x: f64, orders: Orders) -> Result<Response> {
        let mut r = self.inner.query(x, orders)?;
        if let Some(v) = r.value.as_mut() {
            *v -= self.reference;
        }
        Ok(r)
    }
}

/// Oracle for `V̄(x) = V(x / sqrt(alpha))`; see [`rescale_to_unit`].
#[derive(Debug, Clone)]
pub struct Rescaled<O> {
    inner: O,
    sqrt_alpha: f64,
}

/// Reparametrises the oracle so that `1 <= V̄'' <= kappa`. No queries are spent.
pub fn rescale_to_unit<O: Oracle>(oracle: O) -> Rescaled<O> {
    let sqrt_alpha = oracle.alpha().sqrt();
    Rescaled {
        inner: oracle,
        sqrt_alpha,
    }
}

impl<O> Rescaled<O> {
    /// Maps a draw from the rescaled target back to the original one.
    pub fn map_back(&self, x_bar: f64) -> f64 {
        x_bar / self.sqrt_alpha
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }

    pub fn into_inner(self) -> O {
        self.inner
    }
}

impl<O: Oracle> Oracle for Rescaled<O> {
    fn available(&self) -> Orders {
        self.inner.available()
    }
    fn alpha(&self) -> f64 {
        1.0
    }
    fn beta(&self) -> f64 {
        self.inner.kappa()
    }
    fn query_count(&self) -> u64 {
        self.inner.query_count()
    }
    fn query(&mut self, x: f64, orders: Orders) -> Result<Response> {
        let alpha = self.sqrt_alpha * self.sqrt_alpha;
        let mut r = self.inner.query(x / self.sqrt_alpha, orders)?;
        if let Some(d) = r.derivative.as_mut() {
            *d /= self.sqrt_alpha;
        }
        if let Some(h) = r.second_derivative.as_mut() {
            *h /= alpha;
        }
        Ok(r)
    }
}

/// Kinds of potential loadable from a JSON document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PotentialKind {
    Gaussian,
    Piecewise,
}

/// JSON description of a target:
/// `{"type": "gaussian"|"piecewise", "alpha", "beta", "breakpoints", "curvatures", "offset"}`.
///
/// A `gaussian` target is `V(x) = alpha * x^2 / 2`. A `piecewise` target has
/// `curvatures.len() == breakpoints.len() + 1` and is anchored at
/// `V(0) = V'(0) = 0`. `dimension` is only read by the Hit-and-Run command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(rename = "type")]
    pub kind: PotentialKind,
    pub alpha: f64,
    pub beta: f64,
    #[serde(default)]
    pub breakpoints: Vec<f64>,
    #[serde(default)]
    pub curvatures: Vec<f64>,
    #[serde(default)]
    pub offset: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

impl PotentialSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("potential JSON: {e}")))
    }

    /// Builds the potential and checks class membership with the declared
    /// constants.
    pub fn build(&self) -> Result<AnyPotential> {
        match self.kind {
            PotentialKind::Gaussian => {
                if !(self.alpha > 0.0) || self.beta < self.alpha {
                    return Err(Error::invalid("gaussian needs 0 < alpha <= beta"));
                }
                Ok(AnyPotential::Gaussian(Gaussian {
                    precision: self.alpha,
                }))
            }
            PotentialKind::Piecewise => {
                let p = PiecewiseQuadraticPotential::new(
                    self.breakpoints.clone(),
                    self.curvatures.clone(),
                )?;
                p.check_class(self.alpha, self.beta)?;
                Ok(AnyPotential::Piecewise(p))
            }
        }
    }

    /// Convenience: potential wrapped in an oracle carrying the declared offset.
    pub fn oracle(&self) -> Result<PotentialOracle<AnyPotential>> {
        Ok(PotentialOracle::new(self.build()?, self.alpha, self.beta)?.with_offset(self.offset))
    }
}

/// Closed set of potentials the CLI can construct.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyPotential {
    Gaussian(Gaussian),
    Piecewise(PiecewiseQuadraticPotential),
}

impl Potential for AnyPotential {
    fn value(&self, x: f64) -> f64 {
        match self {
            AnyPotential::Gaussian(g) => g.value(x),
            AnyPotential::Piecewise(p) => p.value(x),
        }
    }
    fn derivative(&self, x: f64) -> f64 {
        match self {
            AnyPotential::Gaussian(g) => g.derivative(x),
            AnyPotential::Piecewise(p) => p.derivative(x),
        }
    }
    fn second_derivative(&self, x: f64) -> f64 {
        match self {
            AnyPotential::Gaussian(g) => g.second_derivative(x),
            AnyPotential::Piecewise(p) => p.second_derivative(x),
        }
    }
    fn evaluate(&self, x: f64) -> (f64, f64, f64) {
        match self {
            AnyPotential::Gaussian(g) => g.evaluate(x),
            AnyPotential::Piecewise(p) => p.evaluate(x),
        }
    }
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            AnyPotential::Gaussian(_) => Vec::new(),
            AnyPotential::Piecewise(p) => p.breakpoints(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_gauss(offset: f64) -> PotentialOracle<Gaussian> {
        PotentialOracle::new(Gaussian::standard(), 1.0, 1.0)
            .unwrap()
            .with_offset(offset)
    }

    #[test]
    fn query_returns_requested_orders() {
        let mut o = std_gauss(0.0);
        let r = o.query(1.0, Orders::all()).unwrap();
        assert_eq!(
            (r.value, r.derivative, r.second_derivative),
            (Some(0.5), Some(1.0), Some(1.0))
        );
        let r = o.query(0.0, Orders::DERIVATIVE).unwrap();
        assert_eq!(r.derivative, Some(0.0));
        assert_eq!(r.value, None);
        assert_eq!(o.query_count(), 2);
    }

    #[test]
    fn hidden_offset_only_touches_values() {
        let mut o = std_gauss(7.3);
        assert!((o.value(2.0).unwrap() - 9.3).abs() < 1e-12);
        assert_eq!(o.derivative(2.0).unwrap(), 2.0);
    }

    #[test]
    fn unavailable_order_is_rejected_without_charge() {
        let mut o = std_gauss(0.0).with_orders(Orders::VALUE);
        let err = o.query(1.0, Orders::FIRST_ORDER).unwrap_err();
        assert!(matches!(err, Error::UnavailableOrder { .. }));
        assert_eq!(o.query_count(), 0);
    }

    #[test]
    fn curvature_outside_declared_range_is_a_class_violation() {
        let mut o = PotentialOracle::new(Gaussian { precision: 5.0 }, 1.0, 4.0).unwrap();
        let err = o.query(0.3, Orders::SECOND).unwrap_err();
        assert!(matches!(err, Error::ClassViolation { at, .. } if at == 0.3));
    }

    #[test]
    fn normalization_cancels_offset_and_charges_one_query() {
        let mut n = normalize_at_zero(std_gauss(5.0)).unwrap();
        assert_eq!(n.value(1.0).unwrap(), 0.5);
        assert_eq!(n.query_count(), 2);

        struct Shifted;
        impl Potential for Shifted {
            fn value(&self, x: f64) -> f64 {
                0.5 * x * x + 3.0
            }
            fn derivative(&self, x: f64) -> f64 {
                x
            }
            fn second_derivative(&self, _: f64) -> f64 {
                1.0
            }
        }
        let mut n = normalize_at_zero(PotentialOracle::new(Shifted, 1.0, 1.0).unwrap()).unwrap();
        assert_eq!(n.value(2.0).unwrap(), 2.0);
    }

    #[test]
    fn rescaling_maps_to_unit_curvature() {
        let o = PotentialOracle::new(Gaussian { precision: 4.0 }, 4.0, 4.0).unwrap();
        let mut r = rescale_to_unit(o);
        let resp = r.query(1.0, Orders::all()).unwrap();
        assert_eq!(resp.value, Some(0.5));
        assert_eq!(resp.derivative, Some(1.0));
        assert_eq!(resp.second_derivative, Some(1.0));
        assert_eq!((r.alpha(), r.beta()), (1.0, 1.0));
        assert_eq!(r.map_back(1.5), 0.75);
        assert_eq!(r.query_count(), 1);
    }

    #[test]
    fn unit_alpha_rescale_is_identity() {
        let mut plain = PotentialOracle::new(Gaussian { precision: 3.0 }, 1.0, 9.0).unwrap();
        let mut r = rescale_to_unit(plain.clone());
        for &x in &[-2.0, 0.1, 3.7] {
            assert_eq!(
                plain.query(x, Orders::all()).unwrap(),
                r.query(x, Orders::all()).unwrap()
            );
        }
        assert_eq!(r.beta(), 9.0);
        assert_eq!(r.map_back(1.25), 1.25);
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"type":"piecewise","alpha":1,"beta":4,"breakpoints":[1.0],"curvatures":[1,4],"offset":2.5}"#;
        let spec = PotentialSpec::from_json(text).unwrap();
        assert_eq!(spec.kind, PotentialKind::Piecewise);
        let mut o = spec.oracle().unwrap();
        assert!((o.value(2.0).unwrap() - 6.0).abs() < 1e-12);
        let back = PotentialSpec::from_json(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn spec_rejects_out_of_range_curvature() {
        let text = r#"{"type":"piecewise","alpha":1,"beta":4,"breakpoints":[1.0],"curvatures":[1,5]}"#;
        let err = PotentialSpec::from_json(text).unwrap().build().unwrap_err();
        assert!(matches!(err, Error::ClassViolation { .. }));
    }
}
