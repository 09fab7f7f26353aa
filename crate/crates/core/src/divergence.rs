//! Phi-divergences between paired probability vectors.
//!
//! A [`PhiSpec`] is a convex function `φ` on `(0, ∞)` with `φ(1) = 0`,
//! together with its first two derivatives and the two limits needed for
//! empty cells: `φ(0)` and `lim φ(u)/u` as `u → ∞`. The Cressie–Read power
//! family is built in; anything else can be supplied as a custom triple.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied convex function with its derivatives.
#[derive(Clone)]
pub struct CustomPhi {
    value: ScalarFn,
    first: ScalarFn,
    second: ScalarFn,
    slope_at_infinity: f64,
    /// Coefficient `c` of the affine correction `φ(x) - c (x - 1)`.
    tilt: f64,
}

#[derive(Clone)]
enum Kind {
    CressieRead(f64),
    Custom(CustomPhi),
}

/// One member of the phi-divergence function class.
#[derive(Clone)]
pub struct PhiSpec {
    kind: Kind,
}

impl fmt::Debug for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            Kind::CressieRead(lambda) => write!(f, "PhiSpec::CressieRead({lambda})"),
            Kind::Custom(c) => write!(f, "PhiSpec::Custom(tilt = {})", c.tilt),
        }
    }
}

impl PhiSpec {
    /// The Cressie–Read member with power `lambda`.
    pub fn cressie_read(lambda: f64) -> Self {
        PhiSpec {
            kind: Kind::CressieRead(lambda),
        }
    }

    /// Kullback–Leibler, i.e. Cressie–Read with `λ = 0`.
    pub fn kullback_leibler() -> Self {
        Self::cressie_read(0.0)
    }

    /// A custom `φ` given by its value and first two derivatives.
    ///
    /// `value` is also evaluated at `0.0` when a data cell is empty, so it
    /// must return the right-limit `φ(0+)` there (possibly `+∞`). The slope
    /// at infinity defaults to `+∞`; see [`PhiSpec::with_slope_at_infinity`].
    pub fn custom<F, G, H>(value: F, first: G, second: H) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        PhiSpec {
            kind: Kind::Custom(CustomPhi {
                value: Arc::new(value),
                first: Arc::new(first),
                second: Arc::new(second),
                slope_at_infinity: f64::INFINITY,
                tilt: 0.0,
            }),
        }
    }

    /// Sets `lim_{u→∞} φ(u)/u` for a custom function. No effect on
    /// Cressie–Read members, whose limit is known in closed form.
    pub fn with_slope_at_infinity(mut self, slope: f64) -> Self {
        if let Kind::Custom(c) = &mut self.kind {
            c.slope_at_infinity = slope;
        }
        self
    }

    /// The Cressie–Read power, if this is a Cressie–Read member.
    pub fn lambda(&self) -> Option<f64> {
        match self.kind {
            Kind::CressieRead(lambda) => Some(lambda),
            Kind::Custom(_) => None,
        }
    }

    /// `φ(x)` for `x > 0`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        check_positive(x)?;
        Ok(self.value(x))
    }

    /// `φ'(x)` (`order = 1`) or `φ''(x)` (`order = 2`) for `x > 0`.
    pub fn deriv(&self, x: f64, order: u8) -> Result<f64> {
        check_order(order)?;
        check_positive(x)?;
        Ok(match order {
            1 => self.first(x),
            _ => self.second(x),
        })
    }

    pub(crate) fn value(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => cr_value(*lambda, x),
            Kind::Custom(c) => (c.value)(x) - c.tilt * (x - 1.0),
        }
    }

    pub(crate) fn first(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => cr_first(*lambda, x),
            Kind::Custom(c) => (c.first)(x) - c.tilt,
        }
    }

    pub(crate) fn second(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => cr_second(*lambda, x),
            Kind::Custom(c) => (c.second)(x),
        }
    }

    /// Right-limit `φ(0+)`.
    pub fn at_zero(&self) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => {
                if *lambda > -1.0 {
                    1.0 / (1.0 + lambda)
                } else {
                    f64::INFINITY
                }
            }
            Kind::Custom(c) => (c.value)(0.0) + c.tilt,
        }
    }

    /// `lim_{u→∞} φ(u)/u`, the cost per unit of data mass in a cell the
    /// model gives probability zero.
    pub fn slope_at_infinity(&self) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => {
                if *lambda >= 0.0 {
                    f64::INFINITY
                } else {
                    -1.0 / lambda
                }
            }
            Kind::Custom(c) => c.slope_at_infinity - c.tilt,
        }
    }

    /// `φ(u) - u φ'(u)`, the intercept of the tangent to `φ` at `u`.
    ///
    /// This is the derivative of `q ↦ q φ(a/q)` with respect to the model
    /// mass `q`, evaluated at `u = a/q`. At `u = 0` it is `φ(0+)`.
    pub(crate) fn tangent_intercept(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::CressieRead(lambda) => {
                let lambda = *lambda;
                if u == 0.0 {
                    return self.at_zero();
                }
                if lambda == -1.0 {
                    -u.ln()
                } else {
                    // (1 - u^{λ+1}) / (1 + λ)
                    -((lambda + 1.0) * u.ln()).exp_m1() / (1.0 + lambda)
                }
            }
            Kind::Custom(_) => {
                if u == 0.0 {
                    self.at_zero()
                } else {
                    self.value(u) - u * self.first(u)
                }
            }
        }
    }
}

/// `Ψ(x) = φ(x) - φ'(1)(x - 1)`: the member of the class with `Ψ'(1) = 0`
/// inducing the same divergence on paired vectors.
pub fn normalize_phi(phi: &PhiSpec) -> PhiSpec {
    match &phi.kind {
        Kind::CressieRead(_) => phi.clone(),
        Kind::Custom(c) => {
            let slope = (c.first)(1.0);
            PhiSpec {
                kind: Kind::Custom(CustomPhi {
                    tilt: slope,
                    ..c.clone()
                }),
            }
        }
    }
}

fn check_positive(x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("phi is defined on (0, inf); got {x}")))
    }
}

fn check_order(order: u8) -> Result<()> {
    if order == 1 || order == 2 {
        Ok(())
    } else {
        Err(Error::Usage(format!(
            "derivative order must be 1 or 2; got {order}"
        )))
    }
}

fn cr_value(lambda: f64, x: f64) -> f64 {
    if lambda == 0.0 {
        x * x.ln() - x + 1.0
    } else if lambda == -1.0 {
        -x.ln() + x - 1.0
    } else {
        // x^{λ+1} - x = x (x^λ - 1), kept accurate for λ near 0.
        (x * (lambda * x.ln()).exp_m1() - lambda * (x - 1.0)) / (lambda * (1.0 + lambda))
    }
}

fn cr_first(lambda: f64, x: f64) -> f64 {
    if lambda == 0.0 {
        x.ln()
    } else {
        (lambda * x.ln()).exp_m1() / lambda
    }
}

fn cr_second(lambda: f64, x: f64) -> f64 {
    x.powf(lambda - 1.0)
}

/// `φ_λ(x)` of the Cressie–Read family.
pub fn cressie_read_eval(lambda: f64, x: f64) -> Result<f64> {
    check_positive(x)?;
    Ok(cr_value(lambda, x))
}

/// `φ'_λ(x)` or `φ''_λ(x)`.
pub fn cressie_read_deriv(lambda: f64, x: f64, order: u8) -> Result<f64> {
    check_order(order)?;
    check_positive(x)?;
    Ok(match order {
        1 => cr_first(lambda, x),
        _ => cr_second(lambda, x),
    })
}

/// A `2I`-cell probability vector laid out as
/// `(success_1, failure_1, …, success_I, failure_I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector2I(Vec<f64>);

impl ProbVector2I {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() % 2 != 0 {
            return Err(Error::Usage(format!(
                "paired probability vector needs an even length; got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain(format!(
                "probability entries must be finite and non-negative; got {bad}"
            )));
        }
        Ok(ProbVector2I(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn domains(&self) -> usize {
        self.0.len() / 2
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Contribution `q φ(p/q)` of a single cell, with the empty-cell limits.
pub(crate) fn cell_term(data: f64, model: f64, phi: &PhiSpec) -> f64 {
    if model > 0.0 {
        if data == 0.0 {
            model * phi.at_zero()
        } else {
            model * phi.value(data / model)
        }
    } else if data == 0.0 {
        0.0
    } else {
        data * phi.slope_at_infinity()
    }
}

/// `d_φ(data, model) = Σ_c model_c φ(data_c / model_c)`.
///
/// Returns `+∞` when the model empties a cell holding data mass and `φ`
/// grows superlinearly.
pub fn phi_divergence(data: &ProbVector2I, model: &ProbVector2I, phi: &PhiSpec) -> Result<f64> {
    if data.len() != model.len() {
        return Err(Error::Usage(format!(
            "length mismatch: data has {} cells, model has {}",
            data.len(),
            model.len()
        )));
    }
    Ok(data
        .values()
        .iter()
        .zip(model.values())
        .map(|(&p, &q)| cell_term(p, q, phi))
        .sum())
}
