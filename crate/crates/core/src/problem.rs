use std::sync::Arc;

use crate::error::{Error, Result};
use crate::funcspace::{
    cumulative_primitive, even_primitive_of_b, ScalarFn, Primitive, DEFAULT_TOL,
};

/// `x'(t) + a(t) x(-t) + b(t) x(t) = h(t)` on `[-T, T]` with `x(-T) = x(T)`.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    half_width: f64,
    pub a: ScalarFn,
    pub b: ScalarFn,
    pub h: ScalarFn,
    prims: Arc<Primitives>,
}

#[derive(Debug)]
struct Primitives {
    a: Primitive,
    b: Primitive,
    b_even: Primitive,
}

impl ProblemSpec {
    pub fn new(half_width: f64, a: ScalarFn, b: ScalarFn, h: ScalarFn) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "half-width T must be positive and finite, got {half_width}"
            )));
        }
        let a = a.with_half_width(half_width);
        let b = b.with_half_width(half_width);
        let h = h.with_half_width(half_width);
        let prims = Primitives {
            a: cumulative_primitive(&a, DEFAULT_TOL)?,
            b: cumulative_primitive(&b, DEFAULT_TOL)?,
            b_even: even_primitive_of_b(&b, DEFAULT_TOL)?,
        };
        Ok(ProblemSpec {
            half_width,
            a,
            b,
            h,
            prims: Arc::new(prims),
        })
    }

    /// Builds a problem from expression strings.
    pub fn parse(half_width: f64, a: &str, b: &str, h: &str) -> Result<Self> {
        ProblemSpec::new(
            half_width,
            ScalarFn::parse(a, half_width, "a")?,
            ScalarFn::parse(b, half_width, "b")?,
            ScalarFn::parse(h, half_width, "h")?,
        )
    }

    /// Same coefficients with a different forcing; primitives are shared.
    pub fn with_forcing(&self, h: ScalarFn) -> ProblemSpec {
        ProblemSpec {
            h: h.with_half_width(self.half_width),
            ..self.clone()
        }
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `A(t) = ∫₀ᵗ a`.
    pub fn a_primitive(&self) -> &Primitive {
        &self.prims.a
    }

    /// `B(t) = ∫₀ᵗ b`.
    pub fn b_primitive(&self) -> &Primitive {
        &self.prims.b
    }

    /// Even part of `B`, i.e. `∫₀ᵗ b_o`.
    pub fn b_even_primitive(&self) -> &Primitive {
        &self.prims.b_even
    }

    /// `A(T)`.
    pub fn a_total(&self) -> f64 {
        self.prims.a.eval(self.half_width)
    }

    /// `a + b`, the coefficient of the ordinary periodic problem.
    pub fn upsilon(&self) -> ScalarFn {
        self.a.add(&self.b)
    }

    /// Left-hand side `u'(t) + a(t)u(-t) + b(t)u(t)` given `u` and `u'(t)`.
    pub fn operator(&self, t: f64, u_t: f64, u_minus_t: f64, du_t: f64) -> f64 {
        du_t + self.a.eval(t) * u_minus_t + self.b.eval(t) * u_t
    }
}
