//! Coefficient functions on a symmetric interval, their even/odd parts and
//! cached cumulative primitives.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{self, BinOp, Expr};
use crate::quad::{self, Neumaier};

/// Default absolute tolerance for primitives.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Number of panels in a primitive's cached table.
pub const PRIMITIVE_PANELS: usize = 2048;

type Eval = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function on `[-T, T]`, optionally backed by a parsed expression.
#[derive(Clone)]
pub struct ScalarFn {
    eval: Eval,
    half_width: f64,
    expr: Option<Expr>,
}

impl fmt::Debug for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = f.debug_struct("ScalarFn");
        d.field("half_width", &self.half_width);
        match &self.expr {
            Some(e) => d.field("expr", &e.to_string()),
            None => d.field("expr", &"<closure>"),
        };
        d.finish()
    }
}

impl ScalarFn {
    pub fn new(half_width: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        ScalarFn {
            eval: Arc::new(f),
            half_width,
            expr: None,
        }
    }

    pub fn constant(half_width: f64, c: f64) -> Self {
        let mut f = ScalarFn::new(half_width, move |_| c);
        f.expr = Some(Expr::Num(c));
        f
    }

    pub fn zero(half_width: f64) -> Self {
        ScalarFn::constant(half_width, 0.0)
    }

    /// Wraps an expression, checking that it evaluates to a finite number
    /// on a 257-point grid over `[-half_width, half_width]`.
    pub fn from_expr(expr: Expr, half_width: f64, field: &str) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "half-width must be positive, got {half_width}"
            )));
        }
        validate(&expr, symmetric_grid(257, half_width), field)?;
        Ok(ScalarFn::wrap(expr, half_width))
    }

    /// Like [`ScalarFn::from_expr`] for a function given on `[lo, hi]`; the
    /// nominal half-width is `max(|lo|, |hi|)`.
    pub fn from_expr_on(expr: Expr, lo: f64, hi: f64, field: &str) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!("bad interval [{lo}, {hi}]")));
        }
        let nodes = (0..257).map(|i| lo + (hi - lo) * i as f64 / 256.0);
        validate(&expr, nodes, field)?;
        Ok(ScalarFn::wrap(expr, lo.abs().max(hi.abs())))
    }

    fn wrap(expr: Expr, half_width: f64) -> Self {
        let tree = expr.clone();
        let mut f = ScalarFn::new(half_width, move |t| tree.eval(t).unwrap_or(f64::NAN));
        f.expr = Some(expr);
        f
    }

    /// Parses `text` as a function on `[lo, hi]`.
    pub fn parse_on(text: &str, lo: f64, hi: f64, field: &str) -> Result<Self> {
        let expr = expr::parse(text).map_err(|source| Error::Parse {
            field: field.to_string(),
            source,
        })?;
        ScalarFn::from_expr_on(expr, lo, hi, field)
    }

    /// Attaches (or drops) the expression describing this function. The
    /// caller is responsible for it matching the closure.
    pub fn with_expr(mut self, expr: Option<Expr>) -> Self {
        self.expr = expr;
        self
    }

    pub fn parse(text: &str, half_width: f64, field: &str) -> Result<Self> {
        let expr = expr::parse(text).map_err(|source| Error::Parse {
            field: field.to_string(),
            source,
        })?;
        ScalarFn::from_expr(expr, half_width, field)
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn expr(&self) -> Option<&Expr> {
        self.expr.as_ref()
    }

    /// Same function on a different nominal domain.
    pub fn with_half_width(&self, half_width: f64) -> Self {
        ScalarFn {
            half_width,
            ..self.clone()
        }
    }

    /// Pointwise combination of two functions on the same domain.
    pub fn combine(
        &self,
        other: &ScalarFn,
        op: BinOp,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> ScalarFn {
        let (l, r) = (self.eval.clone(), other.eval.clone());
        let mut out = ScalarFn::new(self.half_width, move |t| f(l(t), r(t)));
        if let (Some(le), Some(re)) = (&self.expr, &other.expr) {
            out.expr = Some(Expr::binary(op, le.clone(), re.clone()));
        }
        out
    }

    pub fn add(&self, other: &ScalarFn) -> ScalarFn {
        self.combine(other, BinOp::Add, |x, y| x + y)
    }

    pub fn sub(&self, other: &ScalarFn) -> ScalarFn {
        self.combine(other, BinOp::Sub, |x, y| x - y)
    }

    pub fn mul(&self, other: &ScalarFn) -> ScalarFn {
        self.combine(other, BinOp::Mul, |x, y| x * y)
    }

    pub fn scale(&self, c: f64) -> ScalarFn {
        self.mul(&ScalarFn::constant(self.half_width, c))
    }

    /// `t ↦ f(-t)`.
    pub fn reflect(&self) -> ScalarFn {
        let e = self.eval.clone();
        let mut out = ScalarFn::new(self.half_width, move |t| e(-t));
        out.expr = self.expr.as_ref().map(|x| x.substitute(&Expr::neg(Expr::Var)));
        out
    }

    /// Values on `n` symmetric uniform nodes.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        symmetric_grid(n, self.half_width)
            .into_iter()
            .map(|t| (t, self.eval(t)))
            .collect()
    }

    /// Maximum of |f| over a 4097-point grid.
    pub fn sup_norm(&self) -> f64 {
        self.sample(4097)
            .into_iter()
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }

    /// ∫|f|^p over the domain, to the power 1/p.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if p.is_infinite() {
            return Ok(self.sup_norm());
        }
        let f = |t: f64| self.eval(t).abs().powf(p);
        let t = self.half_width;
        let v = quad::integrate_split(&f, -t, t, &[0.0], 1e-13 * (1.0 + t))?;
        Ok(v.powf(1.0 / p))
    }

    pub fn l1_norm(&self) -> Result<f64> {
        self.lp_norm(1.0)
    }

    /// (∫ f⁺, ∫ f⁻) over the domain.
    pub fn positive_negative_parts(&self) -> Result<(f64, f64)> {
        let t = self.half_width;
        let tol = 1e-13 * (1.0 + t);
        let pos = quad::integrate_split(&|x: f64| self.eval(x).max(0.0), -t, t, &[0.0], tol)?;
        let neg = quad::integrate_split(&|x: f64| (-self.eval(x)).max(0.0), -t, t, &[0.0], tol)?;
        Ok((pos, neg))
    }

    /// ∫_{-T}^{T} f.
    pub fn integral(&self) -> Result<f64> {
        let t = self.half_width;
        Ok(quad::integrate_split(
            &|x: f64| self.eval(x),
            -t,
            t,
            &[0.0],
            1e-13 * (1.0 + t),
        )?)
    }
}

fn validate(expr: &Expr, nodes: impl IntoIterator<Item = f64>, field: &str) -> Result<()> {
    for t in nodes {
        match expr.eval(t) {
            Ok(v) if v.is_finite() => {}
            Ok(v) => {
                return Err(Error::InvalidInput(format!(
                    "`{field}` = {expr} is {v} at t = {t}"
                )))
            }
            Err(source) => {
                return Err(Error::Eval {
                    field: field.to_string(),
                    source,
                })
            }
        }
    }
    Ok(())
}

/// Even and odd parts of a function.
#[derive(Debug, Clone)]
pub struct ParityPair {
    pub even: ScalarFn,
    pub odd: ScalarFn,
}

pub fn parity_decompose(f: &ScalarFn) -> ParityPair {
    let (fe, fo) = (f.eval.clone(), f.eval.clone());
    let mut even = ScalarFn::new(f.half_width, move |t| 0.5 * (fe(t) + fe(-t)));
    let mut odd = ScalarFn::new(f.half_width, move |t| 0.5 * (fo(t) - fo(-t)));
    if let Some(e) = &f.expr {
        let r = e.substitute(&Expr::neg(Expr::Var));
        let half = |op| {
            Expr::binary(
                BinOp::Mul,
                Expr::Num(0.5),
                Expr::binary(op, e.clone(), r.clone()),
            )
        };
        even.expr = Some(half(BinOp::Add));
        odd.expr = Some(half(BinOp::Sub));
    }
    ParityPair { even, odd }
}

/// Symmetric uniform nodes on `[-half_width, half_width]` with `-t_i = t_{n-1-i}`
/// holding bit-for-bit.
pub fn symmetric_grid(n: usize, half_width: f64) -> Vec<f64> {
    assert!(n >= 2, "grid needs at least two nodes");
    let m = (n - 1) as f64;
    let mut grid = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let t = half_width * (2.0 * i as f64 - m) / m;
        grid[i] = t;
        grid[n - 1 - i] = -t;
    }
    grid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Even,
}

struct Table {
    f: ScalarFn,
    lo: f64,
    step: f64,
    cum: Vec<f64>,
    symmetry: Symmetry,
}

/// Cumulative integral `t ↦ ∫₀ᵗ f`.
///
/// Panel integrals on a uniform table are computed adaptively once; an
/// evaluation adds an 8-point Gauss–Legendre integral from the nearest table
/// node, so the result is smooth in `t` and exact (0.0) at `t = 0`.
#[derive(Clone)]
pub struct Primitive {
    table: Arc<Table>,
}

impl fmt::Debug for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Primitive")
            .field("integrand", &self.table.f)
            .field("panels", &(self.table.cum.len() - 1))
            .finish()
    }
}

impl Primitive {
    fn build(f: &ScalarFn, tol: f64, symmetry: Symmetry) -> Result<Primitive> {
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
        }
        let half = f.half_width;
        let n = PRIMITIVE_PANELS;
        let step = 2.0 * half / n as f64;
        let lo = -half;
        let node = |j: usize| lo + j as f64 * step;
        let zero = n / 2;
        let panel_tol = tol / n as f64;
        let g = |t: f64| f.eval(t);
        let mut cum = vec![0.0; n + 1];
        let mut acc = Neumaier::default();
        for j in zero..n {
            acc.add(quad::integrate(&g, node(j), node(j + 1), panel_tol)?);
            cum[j + 1] = acc.total();
        }
        let mut acc = Neumaier::default();
        for j in (0..zero).rev() {
            acc.add(-quad::integrate(&g, node(j), node(j + 1), panel_tol)?);
            cum[j] = acc.total();
        }
        if cum.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "integrand is not finite on its domain".to_string(),
            ));
        }
        Ok(Primitive {
            table: Arc::new(Table {
                f: f.clone(),
                lo,
                step,
                cum,
                symmetry,
            }),
        })
    }

    fn raw(&self, t: f64) -> f64 {
        let tab = &*self.table;
        let n = tab.cum.len() - 1;
        let j = ((t - tab.lo) / tab.step).round().clamp(0.0, n as f64) as usize;
        let x = tab.lo + j as f64 * tab.step;
        if x == t {
            return tab.cum[j];
        }
        tab.cum[j] + quad::gl_fixed(&|s: f64| tab.f.eval(s), x, t, quad::gl8())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self.table.symmetry {
            Symmetry::General => self.raw(t),
            Symmetry::Even => 0.5 * (self.raw(t) + self.raw(-t)),
        }
    }

    pub fn integrand(&self) -> &ScalarFn {
        &self.table.f
    }

    pub fn half_width(&self) -> f64 {
        self.table.f.half_width
    }

    /// The primitive as a plain function on the same domain.
    pub fn to_fn(&self) -> ScalarFn {
        let p = self.clone();
        ScalarFn::new(self.half_width(), move |t| p.eval(t))
    }
}

/// Primitive `t ↦ ∫₀ᵗ f` with absolute accuracy `tol` on the whole domain.
pub fn cumulative_primitive(f: &ScalarFn, tol: f64) -> Result<Primitive> {
    Primitive::build(f, tol, Symmetry::General)
}

/// `t ↦ ∫₀ᵗ b_o`, the even part of the primitive of `b`. Evenness is exact.
pub fn even_primitive_of_b(b: &ScalarFn, tol: f64) -> Result<Primitive> {
    Primitive::build(&parity_decompose(b).odd, tol, Symmetry::Even)
}
