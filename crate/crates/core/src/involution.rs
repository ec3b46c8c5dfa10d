//! Change of involution and the even/odd reduction of the general equation
//!
//! ```text
//! d(t) x'(t) + c(t) x'(φ(t)) + b(t) x(t) + a(t) x(φ(t)) = h(t),   x(φ(T)) = x(T).
//! ```
//!
//! An involution `φ` on `[φ(T), T]` with fixed point `t₀` is conjugated to the
//! reflection `s ↦ -s` on `[-S, S]` by an increasing map `f` with
//! `f(-s) = φ(f(s))`, built from any increasing `g: [-S, 0] → [φ(T), t₀]`.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::{BinOp, Expr, Func};
use crate::funcspace::{symmetric_grid, ScalarFn};
use crate::problem::ProblemSpec;
use crate::solver::{fd_derivative, ResidualReport, Solution};

const CHECK_GRID: usize = 257;
const IDENTITY_TOL: f64 = 1e-10;

/// A differentiable function with its derivative, symbolic when possible.
#[derive(Debug, Clone)]
struct Smooth {
    f: ScalarFn,
    df: ScalarFn,
}

impl Smooth {
    fn new(f: &ScalarFn, step: f64) -> Smooth {
        let df = match f.expr() {
            Some(e) => {
                let d = differentiate(e);
                let tree = d.clone();
                ScalarFn::new(f.half_width(), move |t| tree.eval(t).unwrap_or(f64::NAN))
                    .with_expr(Some(d))
            }
            None => {
                let g = f.clone();
                ScalarFn::new(f.half_width(), move |t| {
                    fd_derivative(&|x| g.eval(x), t, step, f64::NEG_INFINITY, f64::INFINITY)
                })
            }
        };
        Smooth { f: f.clone(), df }
    }
}

/// Conjugacy between an involution `φ` on `[φ(T), T]` and the reflection on `[-S, S]`.
#[derive(Debug, Clone)]
pub struct InvolutionSpec {
    phi: Smooth,
    g: Smooth,
    lo: f64,
    hi: f64,
    fixed_point: f64,
    half_width: f64,
    f: ScalarFn,
    f_prime: ScalarFn,
}

/// The affine bridge `g(s) = t₀ + s (t₀ - φ(T)) / S`.
pub fn affine_bridge(lo: f64, fixed_point: f64, half_width: f64) -> ScalarFn {
    let slope = (fixed_point - lo) / half_width;
    let expr = Expr::binary(
        BinOp::Add,
        Expr::num(fixed_point),
        Expr::binary(BinOp::Mul, Expr::num(slope), Expr::Var),
    );
    ScalarFn::new(half_width, move |s| fixed_point + slope * s).with_expr(Some(expr))
}

/// Builds the conjugating map `f` for the involution `phi` on `[φ(T), T]`
/// with fixed point `t0`. `g` defaults to [`affine_bridge`].
pub fn build_f(
    phi: &ScalarFn,
    t0: f64,
    upper: f64,
    g: Option<&ScalarFn>,
    half_width: f64,
) -> Result<InvolutionSpec> {
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "target half-width S must be positive, got {half_width}"
        )));
    }
    let lo = phi.eval(upper);
    if !(lo.is_finite() && lo < t0 && t0 < upper) {
        return Err(Error::InvalidInput(format!(
            "need φ(T) < t₀ < T, got φ(T) = {lo}, t₀ = {t0}, T = {upper}"
        )));
    }
    let scale = 1.0 + lo.abs().max(upper.abs());
    if (phi.eval(t0) - t0).abs() > IDENTITY_TOL * scale {
        return Err(Error::InvalidInput(format!(
            "t₀ = {t0} is not fixed: φ(t₀) = {}",
            phi.eval(t0)
        )));
    }
    for i in 0..CHECK_GRID {
        let t = lo + (upper - lo) * i as f64 / (CHECK_GRID - 1) as f64;
        let back = phi.eval(phi.eval(t));
        if !((back - t).abs() <= IDENTITY_TOL * scale) {
            return Err(Error::InvalidInput(format!(
                "φ is not an involution: φ(φ({t})) = {back}"
            )));
        }
    }
    let g = match g {
        Some(g) => g.clone(),
        None => affine_bridge(lo, t0, half_width),
    };
    if (g.eval(-half_width) - lo).abs() > IDENTITY_TOL * scale
        || (g.eval(0.0) - t0).abs() > IDENTITY_TOL * scale
    {
        return Err(Error::InvalidInput(format!(
            "g must map -S to φ(T) = {lo} and 0 to t₀ = {t0}; got g(-S) = {}, g(0) = {}",
            g.eval(-half_width),
            g.eval(0.0)
        )));
    }
    let step = 1e-3 * scale;
    let phi = Smooth::new(phi, step);
    let g = Smooth::new(&g.with_half_width(half_width), 1e-3 * half_width.max(1.0));
    let slope = -phi.df.eval(t0);
    if (slope - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "φ'(t₀) = {} but an involution has slope -1 at its fixed point",
            -slope
        )));
    }
    let (f, f_prime) = compose(&phi, &g, t0, half_width);
    let spec = InvolutionSpec {
        phi,
        g,
        lo,
        hi: upper,
        fixed_point: t0,
        half_width,
        f,
        f_prime,
    };
    spec.verify()?;
    Ok(spec)
}

/// `f(s) = g(s)` for `s ≤ 0`, `φ(g(-s))` for `s > 0`, and its derivative.
/// Expressions use `m = (s - |s|)/2` and `p = (s + |s|)/2` to glue the halves.
fn compose(phi: &Smooth, g: &Smooth, t0: f64, half_width: f64) -> (ScalarFn, ScalarFn) {
    let (p1, g1) = (phi.f.clone(), g.f.clone());
    let f = ScalarFn::new(half_width, move |s| {
        if s <= 0.0 {
            g1.eval(s)
        } else {
            p1.eval(g1.eval(-s))
        }
    });
    let (dp, g2, dg) = (phi.df.clone(), g.f.clone(), g.df.clone());
    let f_prime = ScalarFn::new(half_width, move |s| {
        if s <= 0.0 {
            dg.eval(s)
        } else {
            -dp.eval(g2.eval(-s)) * dg.eval(-s)
        }
    });
    let exprs = (phi.f.expr(), phi.df.expr(), g.f.expr(), g.df.expr());
    let (Some(pe), Some(dpe), Some(ge), Some(dge)) = exprs else {
        return (f, f_prime);
    };
    let abs_s = Expr::call(Func::Abs, Expr::Var);
    let m = mul(num(0.5), sub(Expr::Var, abs_s.clone()));
    let p = mul(num(0.5), add(Expr::Var, abs_s));
    let neg_p = neg(p);
    let g_neg_p = ge.substitute(&neg_p);
    let f_expr = sub(add(ge.substitute(&m), pe.substitute(&g_neg_p)), num(t0));
    let fp_expr = sub(
        sub(
            dge.substitute(&m),
            mul(dpe.substitute(&g_neg_p), dge.substitute(&neg_p)),
        ),
        num(g.df.eval(0.0)),
    );
    (f.with_expr(Some(fold(&f_expr))), f_prime.with_expr(Some(fold(&fp_expr))))
}

impl InvolutionSpec {
    /// `[φ(T), T]`.
    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn fixed_point(&self) -> f64 {
        self.fixed_point
    }

    /// `S`.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn phi(&self, t: f64) -> f64 {
        self.phi.f.eval(t)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        self.phi.df.eval(t)
    }

    pub fn f(&self, s: f64) -> f64 {
        self.f.eval(s)
    }

    pub fn f_prime(&self, s: f64) -> f64 {
        self.f_prime.eval(s)
    }

    pub fn f_fn(&self) -> &ScalarFn {
        &self.f
    }

    pub fn f_prime_fn(&self) -> &ScalarFn {
        &self.f_prime
    }

    /// `f⁻¹(t)`: `g⁻¹(t)` for `t ≤ t₀`, `-g⁻¹(φ(t))` beyond.
    pub fn f_inv(&self, t: f64) -> f64 {
        if t <= self.fixed_point {
            self.g_inv(t)
        } else {
            -self.g_inv(self.phi(t))
        }
    }

    fn g_inv(&self, t: f64) -> f64 {
        let (mut lo, mut hi) = (-self.half_width, 0.0);
        if t <= self.g.f.eval(lo) {
            return lo;
        }
        if t >= self.g.f.eval(hi) {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.g.f.eval(mid) < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn verify(&self) -> Result<()> {
        let scale = 1.0 + self.lo.abs().max(self.hi.abs());
        let grid = symmetric_grid(CHECK_GRID, self.half_width);
        let mut prev = f64::NEG_INFINITY;
        for &s in &grid {
            let fs = self.f(s);
            if !(fs > prev) {
                return Err(Error::InvalidInput(format!(
                    "f is not increasing near s = {s}: is g increasing?"
                )));
            }
            prev = fs;
            let gap = (self.f(-s) - self.phi(fs)).abs();
            if !(gap <= IDENTITY_TOL * scale) {
                return Err(Error::InvalidInput(format!(
                    "f(-s) = φ(f(s)) fails at s = {s} by {gap:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Data of the general problem on `[φ(T), T]`.
#[derive(Debug, Clone)]
pub struct InvolutionProblem {
    pub d: ScalarFn,
    pub c: ScalarFn,
    pub b: ScalarFn,
    pub a: ScalarFn,
    pub h: ScalarFn,
}

impl InvolutionProblem {
    /// Problem with `d ≡ 1`, `c ≡ 0`.
    pub fn normalized(a: ScalarFn, b: ScalarFn, h: ScalarFn) -> InvolutionProblem {
        let w = a.half_width();
        InvolutionProblem {
            d: ScalarFn::constant(w, 1.0),
            c: ScalarFn::zero(w),
            b,
            a,
            h,
        }
    }
}

/// A reflection problem obtained by a change of involution.
#[derive(Debug, Clone)]
pub struct Transformed {
    pub problem: ProblemSpec,
    pub inv: InvolutionSpec,
}

impl Transformed {
    /// `x(t) = y(f⁻¹(t))` for a solution `y` of the reflection problem.
    pub fn pull_back(&self, y: &Solution) -> impl Fn(f64) -> f64 + Send + Sync + Clone {
        let (inv, y) = (self.inv.clone(), y.clone());
        move |t| y.eval(inv.f_inv(t))
    }
}

/// Rewrites the problem with `c ≡ 0` under `t = f(s)` and divides by the
/// leading coefficient `d(f(s)) / f'(s)`, giving a reflection problem on `[-S, S]`.
pub fn transform_problem(prob: &InvolutionProblem, inv: &InvolutionSpec) -> Result<Transformed> {
    let (lo, hi) = inv.domain();
    let c_sup = (0..CHECK_GRID)
        .map(|i| prob.c.eval(lo + (hi - lo) * i as f64 / (CHECK_GRID - 1) as f64).abs())
        .fold(0.0, f64::max);
    if c_sup != 0.0 {
        return Err(Error::NotApplicable(format!(
            "the change of involution keeps x'(φ(t)) terms; c must vanish (sup |c| = {c_sup:e})"
        )));
    }
    let w = inv.half_width();
    for s in symmetric_grid(513, w) {
        let fp = inv.f_prime(s);
        let lead = prob.d.eval(inv.f(s)) / fp;
        if !(fp.abs() > 1e-12 && lead.is_finite() && lead.abs() > 1e-12) {
            return Err(Error::InvalidInput(format!(
                "leading coefficient d(f(s))/f'(s) degenerates at s = {s} (f' = {fp:e})"
            )));
        }
    }
    let build = |x: &ScalarFn, field: &str| -> Result<ScalarFn> {
        let exprs = (x.expr(), prob.d.expr(), inv.f.expr(), inv.f_prime.expr());
        if let (Some(xe), Some(de), Some(fe), Some(fpe)) = exprs {
            let mut e = mul(xe.substitute(fe), fpe.clone());
            if *de != Expr::Num(1.0) {
                e = div(e, de.substitute(fe));
            }
            return ScalarFn::from_expr(fold(&e), w, field);
        }
        let (x, d, f, fp) = (x.clone(), prob.d.clone(), inv.f.clone(), inv.f_prime.clone());
        Ok(ScalarFn::new(w, move |s| {
            let t = f.eval(s);
            x.eval(t) * fp.eval(s) / d.eval(t)
        }))
    };
    let problem = ProblemSpec::new(
        w,
        build(&prob.a, "a")?,
        build(&prob.b, "b")?,
        build(&prob.h, "h")?,
    )?;
    Ok(Transformed {
        problem,
        inv: inv.clone(),
    })
}

/// Residual of `d x' + c x'(φ) + b x + a x(φ) - h` on `n` uniform nodes of
/// `[φ(T), T]`, plus the boundary gap `|x(φ(T)) - x(T)|`.
pub fn original_residual(
    prob: &InvolutionProblem,
    inv: &InvolutionSpec,
    x: &(dyn Fn(f64) -> f64 + Sync),
    n: usize,
) -> ResidualReport {
    let (lo, hi) = inv.domain();
    let step = 1e-5 * (hi - lo) / 2.0;
    let n = n.max(2);
    let residual_sup = (0..n)
        .into_par_iter()
        .map(|i| {
            let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let pt = inv.phi(t).clamp(lo, hi);
            let dx = fd_derivative(x, t, step, lo, hi);
            let dx_phi = fd_derivative(x, pt, step, lo, hi);
            let r = prob.d.eval(t) * dx + prob.c.eval(t) * dx_phi + prob.b.eval(t) * x(t)
                + prob.a.eval(t) * x(pt)
                - prob.h.eval(t);
            if r.is_nan() {
                f64::INFINITY
            } else {
                r.abs()
            }
        })
        .reduce(|| 0.0, f64::max);
    ResidualReport {
        residual_sup,
        bc_gap: (x(lo) - x(hi)).abs(),
        points: n,
    }
}

/// Coefficients of the general reflection equation on `[-T, T]`.
#[derive(Debug, Clone)]
pub struct GeneralCoeffs {
    pub a: ScalarFn,
    pub b: ScalarFn,
    pub c: ScalarFn,
    pub d: ScalarFn,
}

/// First-order system for `(x_o, x_e)` of the general equation:
/// `Λ (x_o, x_e)' = M (x_o, x_e) + (h_e, h_o)`.
#[derive(Debug, Clone)]
pub struct ReducedSystem {
    coeffs: GeneralCoeffs,
}

fn parts(f: &ScalarFn, t: f64) -> (f64, f64) {
    let (x, y) = (f.eval(t), f.eval(-t));
    (0.5 * (x + y), 0.5 * (x - y))
}

/// `M(t) = ((a_o - b_o, -a_e - b_e), (a_e - b_e, -a_o - b_o))`.
pub fn parity_matrix(a: &ScalarFn, b: &ScalarFn, t: f64) -> Matrix2<f64> {
    let (ae, ao) = parts(a, t);
    let (be, bo) = parts(b, t);
    Matrix2::new(ao - bo, -ae - be, ae - be, -ao - bo)
}

impl ReducedSystem {
    /// `Λ(t) = ((c_e + d_e, d_o - c_o), (c_o + d_o, d_e - c_e))`.
    pub fn lambda(&self, t: f64) -> Matrix2<f64> {
        let (ce, co) = parts(&self.coeffs.c, t);
        let (de, d_o) = parts(&self.coeffs.d, t);
        Matrix2::new(ce + de, d_o - co, co + d_o, de - ce)
    }

    fn lambda_inv(&self, t: f64) -> Matrix2<f64> {
        let l = self.lambda(t);
        let det = l.determinant();
        Matrix2::new(l[(1, 1)], -l[(0, 1)], -l[(1, 0)], l[(0, 0)]) / det
    }

    /// `Λ⁻¹(t) M(t)`.
    pub fn matrix(&self, t: f64) -> Matrix2<f64> {
        self.lambda_inv(t) * parity_matrix(&self.coeffs.a, &self.coeffs.b, t)
    }

    /// `Λ⁻¹(t) (h_e, h_o)`.
    pub fn forcing(&self, h: &ScalarFn, t: f64) -> Vector2<f64> {
        let (he, ho) = parts(h, t);
        self.lambda_inv(t) * Vector2::new(he, ho)
    }
}

/// Checks `|d(t)d(-t) - c(t)c(-t)| > 1e-10` on a grid and returns the system.
pub fn reduce_general(gc: &GeneralCoeffs) -> Result<ReducedSystem> {
    let half = gc.a.half_width();
    for t in symmetric_grid(513, half) {
        let det = gc.d.eval(t) * gc.d.eval(-t) - gc.c.eval(t) * gc.c.eval(-t);
        if !(det.abs() > 1e-10) {
            return Err(Error::InvalidInput(format!(
                "Λ(t) is singular at t = {t}: c(t)c(-t) - d(t)d(-t) = {:e}",
                -det
            )));
        }
    }
    Ok(ReducedSystem { coeffs: gc.clone() })
}

fn num(x: f64) -> Expr {
    Expr::Num(x)
}

fn as_num(e: &Expr) -> Option<f64> {
    match e {
        Expr::Num(x) => Some(*x),
        _ => None,
    }
}

/// Re-applies the constant folding below to every node of `e`.
fn fold(e: &Expr) -> Expr {
    match e {
        Expr::Binary(op, l, r) => {
            let (l, r) = (fold(l), fold(r));
            match op {
                BinOp::Add => add(l, r),
                BinOp::Sub => sub(l, r),
                BinOp::Mul => mul(l, r),
                BinOp::Div => div(l, r),
                BinOp::Pow => pow(l, r),
            }
        }
        Expr::Neg(x) => neg(fold(x)),
        Expr::Call(f, x) => Expr::call(*f, fold(x)),
        other => other.clone(),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::binary(BinOp::Add, a, b),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::binary(BinOp::Sub, a, b),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(x), Some(y)) => num(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::binary(BinOp::Mul, a, b),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (as_num(&a), as_num(&b)) {
        (Some(0.0), _) => num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::binary(BinOp::Div, a, b),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        other => Expr::neg(other),
    }
}

fn pow(a: Expr, b: Expr) -> Expr {
    match as_num(&b) {
        Some(1.0) => a,
        Some(0.0) => num(1.0),
        _ => Expr::binary(BinOp::Pow, a, b),
    }
}

/// Symbolic derivative with respect to the variable.
fn differentiate(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) | Expr::Const(_) => num(0.0),
        Expr::Var => num(1.0),
        Expr::Neg(u) => neg(differentiate(u)),
        Expr::Binary(op, u, v) => {
            let (du, dv) = (differentiate(u), differentiate(v));
            let (u, v) = ((**u).clone(), (**v).clone());
            match op {
                BinOp::Add => add(du, dv),
                BinOp::Sub => sub(du, dv),
                BinOp::Mul => add(mul(du, v.clone()), mul(u, dv)),
                BinOp::Div => div(
                    sub(mul(du, v.clone()), mul(u, dv)),
                    pow(v, num(2.0)),
                ),
                BinOp::Pow if v.is_constant() => {
                    let lowered = match as_num(&v) {
                        Some(y) => num(y - 1.0),
                        None => sub(v.clone(), num(1.0)),
                    };
                    mul(mul(v, pow(u, lowered)), du)
                }
                BinOp::Pow => mul(
                    pow(u.clone(), v.clone()),
                    add(
                        mul(dv, Expr::call(Func::Ln, u.clone())),
                        div(mul(v, du), u),
                    ),
                ),
            }
        }
        Expr::Call(func, u) => {
            let du = differentiate(u);
            let u = (**u).clone();
            let outer = match func {
                Func::Sin => Expr::call(Func::Cos, u),
                Func::Cos => neg(Expr::call(Func::Sin, u)),
                Func::Tan => div(num(1.0), pow(Expr::call(Func::Cos, u), num(2.0))),
                Func::Sinh => Expr::call(Func::Cosh, u),
                Func::Cosh => Expr::call(Func::Sinh, u),
                Func::Tanh => sub(num(1.0), pow(Expr::call(Func::Tanh, u), num(2.0))),
                Func::Exp => Expr::call(Func::Exp, u),
                Func::Ln => div(num(1.0), u),
                Func::Sqrt => div(num(0.5), Expr::call(Func::Sqrt, u)),
                Func::Abs => div(u.clone(), Expr::call(Func::Abs, u)),
            };
            mul(outer, du)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{detect_case, Case, DEFAULT_TOL};
    use crate::expr::parse;
    use crate::solver::{residual, solve, SolveOptions};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reciprocal() -> InvolutionSpec {
        let phi = ScalarFn::parse_on("1/t", 0.5, 2.0, "phi").unwrap();
        let g = ScalarFn::parse("1 + t/2", 1.0, "g").unwrap();
        build_f(&phi, 1.0, 2.0, Some(&g), 1.0).unwrap()
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let cases = [
            "sin(t)*exp(-t^2)",
            "1/t + ln(t)",
            "t^t",
            "sqrt(1+t^2)/(2+cos(t))",
            "tanh(3*t) - cosh(t)*sinh(t)",
            "tan(t/3) + abs(t - 5) + 2^t",
            "-pi*t^3",
        ];
        for text in cases {
            let e = parse(text).unwrap();
            let d = differentiate(&e);
            for t in [0.3, 0.9, 1.7] {
                let fd = fd_derivative(&|x| e.eval(x).unwrap(), t, 1e-4, 0.0, 3.0);
                let sym = d.eval(t).unwrap();
                assert!((fd - sym).abs() < 1e-8 * (1.0 + sym.abs()), "{text} at {t}: {fd} vs {sym} ({d})");
            }
            // the printed derivative parses back to the same function
            let back = parse(&d.to_string()).unwrap();
            assert_abs_diff_eq!(back.eval(0.7).unwrap(), d.eval(0.7).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn reflection_gives_identity_map() {
        let phi = ScalarFn::parse("-t", 1.0, "phi").unwrap();
        let g = ScalarFn::parse("t", 1.0, "g").unwrap();
        let inv = build_f(&phi, 0.0, 1.0, Some(&g), 1.0).unwrap();
        for s in symmetric_grid(41, 1.0) {
            assert_abs_diff_eq!(inv.f(s), s, epsilon = 1e-15);
            assert_abs_diff_eq!(inv.f_prime(s), 1.0, epsilon = 1e-15);
        }
        let prob = InvolutionProblem::normalized(
            ScalarFn::parse("cos(pi*t)", 1.0, "a").unwrap(),
            ScalarFn::parse("sinh(t)", 1.0, "b").unwrap(),
            ScalarFn::parse("1 + t", 1.0, "h").unwrap(),
        );
        let tr = transform_problem(&prob, &inv).unwrap();
        for s in symmetric_grid(41, 1.0) {
            assert_abs_diff_eq!(tr.problem.a.eval(s), (std::f64::consts::PI * s).cos(), epsilon = 1e-14);
            assert_abs_diff_eq!(tr.problem.b.eval(s), s.sinh(), epsilon = 1e-14);
            assert_abs_diff_eq!(tr.problem.h.eval(s), 1.0 + s, epsilon = 1e-14);
        }
    }

    #[test]
    fn affine_involution_is_a_shift() {
        // φ(t) = 3 - t on [1, 2], t₀ = 3/2, S = 1/2
        let phi = ScalarFn::parse_on("3 - t", 1.0, 2.0, "phi").unwrap();
        let g = ScalarFn::parse("t + 1.5", 0.5, "g").unwrap();
        let inv = build_f(&phi, 1.5, 2.0, Some(&g), 0.5).unwrap();
        for s in symmetric_grid(41, 0.5) {
            assert_abs_diff_eq!(inv.f(s), s + 1.5, epsilon = 1e-14);
        }
        // the default bridge is the same map here
        let inv = build_f(&phi, 1.5, 2.0, None, 0.5).unwrap();
        assert_abs_diff_eq!(inv.f(0.3), 1.8, epsilon = 1e-14);
    }

    #[test]
    fn reciprocal_map() {
        let inv = reciprocal();
        assert_abs_diff_eq!(inv.f(1.0), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.f(-1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(inv.f(0.0), 1.0, epsilon = 1e-15);
        for s in symmetric_grid(201, 1.0) {
            assert!((inv.f(-s) - inv.phi(inv.f(s))).abs() <= 1e-10);
            assert!((inv.f_inv(inv.f(s)) - s).abs() <= 1e-9);
            // symbolic glue agrees with the piecewise closure
            let fe = inv.f_fn().expr().unwrap();
            let fpe = inv.f_prime_fn().expr().unwrap();
            assert_abs_diff_eq!(fe.eval(s).unwrap(), inv.f(s), epsilon = 1e-14);
            assert_abs_diff_eq!(fpe.eval(s).unwrap(), inv.f_prime(s), epsilon = 1e-13);
        }
        // one-sided derivatives meet at the fixed point
        assert_abs_diff_eq!(inv.f_prime(-1e-9), inv.f_prime(1e-9), epsilon = 1e-8);
    }

    #[test]
    fn build_f_rejects_bad_input() {
        let phi = ScalarFn::parse_on("1/t", 0.5, 2.0, "phi").unwrap();
        let bad_g = ScalarFn::parse("1 + t/3", 1.0, "g").unwrap();
        assert!(build_f(&phi, 1.0, 2.0, Some(&bad_g), 1.0).is_err());
        let not_inv = ScalarFn::parse_on("2/t^2", 0.5, 2.0, "phi").unwrap();
        assert!(build_f(&not_inv, 2f64.cbrt(), 2.0, None, 1.0).is_err());
        assert!(build_f(&phi, 1.2, 2.0, None, 1.0).is_err());
    }

    #[test]
    fn reciprocal_problem_round_trip() {
        let inv = reciprocal();
        let on = |s: &str, f: &str| ScalarFn::parse_on(s, 0.5, 2.0, f).unwrap();
        let prob = InvolutionProblem::normalized(on("1/t", "a"), on("0.3/t", "b"), on("1 + t", "h"));
        let tr = transform_problem(&prob, &inv).unwrap();
        // a(t) = 1/t becomes the even 1/(2 - |s|); b follows with k = 0.3
        for s in symmetric_grid(21, 1.0) {
            assert_abs_diff_eq!(tr.problem.a.eval(s), 1.0 / (2.0 - s.abs()), epsilon = 1e-13);
        }
        let tag = detect_case(&tr.problem, DEFAULT_TOL).unwrap();
        assert_eq!(tag.case, Case::C1);
        assert_abs_diff_eq!(tag.k.unwrap(), 0.3, epsilon = 1e-9);
        let out = solve(&tr.problem, &SolveOptions::default()).unwrap();
        let y = match &out.outcome {
            crate::solver::Outcome::Unique(y) => y.clone(),
            other => panic!("unexpected {}", other.name()),
        };
        assert!(residual(&tr.problem, &y, 201).residual_sup < 1e-6);
        let x = tr.pull_back(&y);
        let r = original_residual(&prob, &inv, &x, 301);
        assert!(r.residual_sup <= 1e-6, "{r:?}");
        assert!(r.bc_gap <= 1e-8, "{r:?}");
    }

    #[test]
    fn transform_requires_c_zero() {
        let inv = reciprocal();
        let on = |s: &str| ScalarFn::parse_on(s, 0.5, 2.0, "x").unwrap();
        let prob = InvolutionProblem {
            d: on("1"),
            c: on("0.1"),
            b: on("0"),
            a: on("1/t"),
            h: on("1"),
        };
        assert!(matches!(transform_problem(&prob, &inv), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn reduction_of_the_plain_equation_is_the_parity_system() {
        let w = 1.0;
        let gc = GeneralCoeffs {
            a: ScalarFn::parse("1 + t", w, "a").unwrap(),
            b: ScalarFn::parse("cos(t)", w, "b").unwrap(),
            c: ScalarFn::zero(w),
            d: ScalarFn::constant(w, 1.0),
        };
        let sys = reduce_general(&gc).unwrap();
        for t in symmetric_grid(11, w) {
            assert_eq!(sys.lambda(t), Matrix2::identity());
            assert_eq!(sys.matrix(t), parity_matrix(&gc.a, &gc.b, t));
        }
    }

    #[test]
    fn singular_lambda_is_rejected() {
        let w = 1.0;
        let gc = GeneralCoeffs {
            a: ScalarFn::constant(w, 1.0),
            b: ScalarFn::zero(w),
            c: ScalarFn::constant(w, 1.0),
            d: ScalarFn::constant(w, 1.0),
        };
        assert!(reduce_general(&gc).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]

        #[test]
        fn lambda_determinant(t in -1.0f64..1.0) {
            let w = 1.0;
            let gc = GeneralCoeffs {
                a: ScalarFn::constant(w, 1.0),
                b: ScalarFn::zero(w),
                c: ScalarFn::parse("0.3*sin(2*t) + 0.1", w, "c").unwrap(),
                d: ScalarFn::parse("2 + t^3", w, "d").unwrap(),
            };
            let sys = reduce_general(&gc).unwrap();
            let (c, d) = (&gc.c, &gc.d);
            let expected = c.eval(t) * c.eval(-t) - d.eval(t) * d.eval(-t);
            // Λ acts on (x_o', x_e'); its determinant is d(t)d(-t) - c(t)c(-t)
            prop_assert!((sys.lambda(t).determinant() + expected).abs() < 1e-12);
        }

        #[test]
        fn reduced_system_holds_for_manufactured_solutions(t in -0.95f64..0.95) {
            // x(t) = e^{t/2} + sin(2t); coefficients chosen arbitrarily
            let w = 1.0;
            let x = |t: f64| (0.5 * t).exp() + (2.0 * t).sin();
            let dx = |t: f64| 0.5 * (0.5 * t).exp() + 2.0 * (2.0 * t).cos();
            let gc = GeneralCoeffs {
                a: ScalarFn::parse("0.4 + t", w, "a").unwrap(),
                b: ScalarFn::parse("cos(3*t)", w, "b").unwrap(),
                c: ScalarFn::parse("0.2*t + 0.1", w, "c").unwrap(),
                d: ScalarFn::parse("1.5 + 0.3*sin(t)", w, "d").unwrap(),
            };
            let (a, b, c, d) = (gc.a.clone(), gc.b.clone(), gc.c.clone(), gc.d.clone());
            let h = ScalarFn::new(w, move |t| {
                d.eval(t) * dx(t) + c.eval(t) * dx(-t) + b.eval(t) * x(t) + a.eval(t) * x(-t)
            });
            let sys = reduce_general(&gc).unwrap();
            let state = Vector2::new(0.5 * (x(t) - x(-t)), 0.5 * (x(t) + x(-t)));
            let deriv = Vector2::new(0.5 * (dx(t) + dx(-t)), 0.5 * (dx(t) - dx(-t)));
            let rhs = sys.matrix(t) * state + sys.forcing(&h, t);
            prop_assert!((deriv - rhs).norm() < 1e-12);
        }
    }
}
