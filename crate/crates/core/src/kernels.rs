//! Green's kernels.
//!
//! A reflection kernel is piecewise analytic on four triangular regions of
//! `[-T, T]²`:
//!
//! | region | set          |
//! |--------|--------------|
//! | `R1`   | `t > |s|`    |
//! | `R2`   | `s > |t|`    |
//! | `R3`   | `-t > |s|`   |
//! | `R4`   | `-s > |t|`   |
//!
//! On a seam the first region (in the order above) whose closure contains the
//! point is used.

use std::f64::consts::PI;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::classify::{Case, CaseTag};
use crate::error::{Error, Result};
use crate::funcspace::{cumulative_primitive, symmetric_grid, Primitive, ScalarFn, DEFAULT_TOL};
use crate::problem::ProblemSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    R1,
    R2,
    R3,
    R4,
}

pub const REGIONS: [Region; 4] = [Region::R1, Region::R2, Region::R3, Region::R4];

impl Region {
    pub fn of(t: f64, s: f64) -> Region {
        if t >= s.abs() {
            Region::R1
        } else if s >= t.abs() {
            Region::R2
        } else if -t >= s.abs() {
            Region::R3
        } else {
            Region::R4
        }
    }

    /// Whether the closed region contains `(t, s)`.
    pub fn closure_contains(self, t: f64, s: f64) -> bool {
        match self {
            Region::R1 => t >= s.abs(),
            Region::R2 => s >= t.abs(),
            Region::R3 => -t >= s.abs(),
            Region::R4 => -s >= t.abs(),
        }
    }
}

/// Relative distance below which `sin(ωT)` counts as zero.
const RESONANCE_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// `a² > b²`, `ω = √(a² - b²)`.
    Trig { omega: f64 },
    /// `b² > a²`, `θ = √(b² - a²)`.
    Hyperbolic { theta: f64 },
}

/// Kernel of `x' + a x(-t) + b x = h` with constant `a`, `b` on `[-T, T]`.
#[derive(Debug, Clone, Copy)]
pub struct ConstKernel {
    a: f64,
    b: f64,
    width: f64,
    shape: Shape,
    denom: f64,
}

impl ConstKernel {
    /// `width` may be negative; the formulas are analytic in it. This is used
    /// by the composed kernel, whose inner width is the signed `A(T)`.
    fn with_signed_width(a: f64, b: f64, width: f64) -> Result<ConstKernel> {
        if !(a.is_finite() && b.is_finite() && width.is_finite()) || width == 0.0 {
            return Err(Error::InvalidInput(format!(
                "constant kernel needs finite a, b and non-zero width (a={a}, b={b}, T={width})"
            )));
        }
        let lambda = a * a - b * b;
        if lambda.abs() <= 1e-14 * (a * a + b * b) {
            return Err(Error::NotApplicable(format!(
                "|a| = |b| (a={a}, b={b}): use the C3 kernel for b = a; b = -a is resonant"
            )));
        }
        let (shape, denom) = if lambda > 0.0 {
            let omega = lambda.sqrt();
            let x = omega * width;
            let n = (x / PI).round();
            if n != 0.0 && (x - n * PI).abs() <= RESONANCE_MARGIN * x.abs().max(1.0) {
                return Err(Error::Resonance(format!(
                    "a² - b² = {lambda} equals (nπ/T)² with n = {}",
                    n.abs()
                )));
            }
            (Shape::Trig { omega }, 2.0 * omega * x.sin())
        } else {
            let theta = (-lambda).sqrt();
            (Shape::Hyperbolic { theta }, -2.0 * theta * (theta * width).sinh())
        };
        Ok(ConstKernel {
            a,
            b,
            width,
            shape,
            denom,
        })
    }

    fn c(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Trig { omega } => (omega * x).cos(),
            Shape::Hyperbolic { theta } => (theta * x).cosh(),
        }
    }

    // derivative companion: ω sin(ωx) or its continuation -θ sinh(θx)
    fn sn(&self, x: f64) -> f64 {
        match self.shape {
            Shape::Trig { omega } => omega * (omega * x).sin(),
            Shape::Hyperbolic { theta } => -theta * (theta * x).sinh(),
        }
    }

    pub fn piece(&self, region: Region, t: f64, s: f64) -> f64 {
        let (a, b, w) = (self.a, self.b, self.width);
        let num = match region {
            Region::R1 => a * self.c(s + t - w) - b * self.c(s - t + w) + self.sn(s - t + w),
            Region::R2 => a * self.c(s + t - w) - b * self.c(-s + t + w) - self.sn(-s + t + w),
            Region::R3 => a * self.c(s + t + w) - b * self.c(-s + t + w) - self.sn(-s + t + w),
            Region::R4 => a * self.c(s + t + w) - b * self.c(s - t + w) + self.sn(s - t + w),
        };
        num / self.denom
    }

    pub fn is_hyperbolic(&self) -> bool {
        matches!(self.shape, Shape::Hyperbolic { .. })
    }

    /// `ω` for the trigonometric shape, `θ` for the hyperbolic one.
    pub fn frequency(&self) -> f64 {
        match self.shape {
            Shape::Trig { omega } => omega,
            Shape::Hyperbolic { theta } => theta,
        }
    }
}

/// Kernel of `x' + α(x(-t) + x(t)) = h` on `[-T, T]`.
#[derive(Debug, Clone, Copy)]
pub struct C3Kernel {
    alpha: f64,
    width: f64,
}

impl C3Kernel {
    fn with_signed_width(alpha: f64, width: f64) -> Result<C3Kernel> {
        if alpha == 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidInput(format!("C3 kernel needs a ≠ 0, got {alpha}")));
        }
        if width == 0.0 || !width.is_finite() {
            return Err(Error::Resonance("C3 kernel with zero width (A(T) = 0)".into()));
        }
        Ok(C3Kernel { alpha, width })
    }

    pub fn piece(&self, region: Region, t: f64, s: f64) -> f64 {
        let (al, w) = (self.alpha, self.width);
        let common = (s - t) / (2.0 * w) - al * s * t / w + 1.0 / (4.0 * al * w);
        common
            + match region {
                Region::R1 => 0.5 + al * s,
                Region::R2 => -0.5 + al * t,
                Region::R3 => -0.5 - al * s,
                Region::R4 => 0.5 - al * t,
            }
    }
}

#[derive(Debug, Clone, Copy)]
enum Inner {
    Const(ConstKernel),
    C3(C3Kernel),
}

impl Inner {
    fn piece(&self, region: Region, t: f64, s: f64) -> f64 {
        match self {
            Inner::Const(k) => k.piece(region, t, s),
            Inner::C3(k) => k.piece(region, t, s),
        }
    }
}

/// `G₁(t, s) = e^{B_e(s) - B_e(t)} H_j(A(t), A(s))` with `j` the region of `(t, s)`.
#[derive(Debug, Clone)]
pub struct ComposedKernel {
    inner: Inner,
    a_prim: Primitive,
    b_even: Primitive,
    half_width: f64,
}

impl ComposedKernel {
    pub fn piece(&self, region: Region, t: f64, s: f64) -> f64 {
        let pre = (self.b_even.eval(s) - self.b_even.eval(t)).exp();
        pre * self.inner.piece(region, self.a_prim.eval(t), self.a_prim.eval(s))
    }
}

/// Kernel of the ordinary periodic problem `x' + υ x = h`:
/// `τ e^{V(s) - V(t)}` for `s ≤ t`, `(τ - 1) e^{V(s) - V(t)}` for `s > t`,
/// with `V = ∫₀ᵗ υ` and `τ = 1 / (1 - e^{-∫υ})`.
#[derive(Debug, Clone)]
pub struct PeriodicKernel {
    v: Primitive,
    tau: f64,
    half_width: f64,
}

impl PeriodicKernel {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// `V(t) = ∫₀ᵗ υ`.
    pub fn potential(&self) -> &Primitive {
        &self.v
    }

    fn lower(&self, t: f64, s: f64) -> f64 {
        self.tau * (self.v.eval(s) - self.v.eval(t)).exp()
    }

    fn upper(&self, t: f64, s: f64) -> f64 {
        (self.tau - 1.0) * (self.v.eval(s) - self.v.eval(t)).exp()
    }
}

#[derive(Debug, Clone)]
pub enum Kernel {
    Constant(ConstKernel),
    C3(C3Kernel),
    Composed(ComposedKernel),
    Periodic(PeriodicKernel),
}

/// Constant-coefficient kernel; trigonometric for `a² > b²`, hyperbolic for
/// `b² > a²`.
pub fn const_kernel(a: f64, b: f64, half_width: f64) -> Result<Kernel> {
    check_width(half_width)?;
    Ok(Kernel::Constant(ConstKernel::with_signed_width(a, b, half_width)?))
}

/// Kernel for constant `a = b = alpha`.
pub fn c3_kernel(alpha: f64, half_width: f64) -> Result<Kernel> {
    check_width(half_width)?;
    Ok(Kernel::C3(C3Kernel::with_signed_width(alpha, half_width)?))
}

/// Variable-coefficient kernel for cases C1–C3.
pub fn composed_kernel(p: &ProblemSpec, tag: &CaseTag) -> Result<Kernel> {
    if !tag.case.has_kernel() {
        return Err(Error::NotApplicable(format!(
            "no Green's kernel for case {:?}",
            tag.case
        )));
    }
    if tag.uniqueness_ok != Some(true) {
        return Err(Error::Resonance(format!(
            "uniqueness condition fails for {:?} with k = {:?}, A(T) = {}",
            tag.case, tag.k, tag.a_total
        )));
    }
    let width = p.a_total();
    let inner = match tag.case {
        Case::C3 => Inner::C3(C3Kernel::with_signed_width(1.0, width)?),
        _ => {
            let k = tag
                .k
                .ok_or_else(|| Error::InvalidInput("case tag without k".into()))?;
            Inner::Const(ConstKernel::with_signed_width(1.0, k, width)?)
        }
    };
    Ok(Kernel::Composed(ComposedKernel {
        inner,
        a_prim: p.a_primitive().clone(),
        b_even: p.b_even_primitive().clone(),
        half_width: p.half_width(),
    }))
}

/// Kernel of `x' + υ x = h`, `x(-T) = x(T)`.
pub fn ode_kernel(upsilon: &ScalarFn, half_width: f64) -> Result<Kernel> {
    check_width(half_width)?;
    let upsilon = upsilon.with_half_width(half_width);
    let v = cumulative_primitive(&upsilon, DEFAULT_TOL)?;
    let total = v.eval(half_width) - v.eval(-half_width);
    if total.abs() <= 1e-10 {
        return Err(Error::Resonance(format!(
            "∫υ = {total:e}: the periodic problem x' + υx = h is resonant"
        )));
    }
    let tau = 1.0 / (1.0 - (-total).exp());
    Ok(Kernel::Periodic(PeriodicKernel {
        v,
        tau,
        half_width,
    }))
}

/// `e^{min(P, N)} / (1 - e^{-|P - N|})` with `P = ‖υ⁺‖₁`, `N = ‖υ⁻‖₁`;
/// an upper bound for `|G₃|`.
pub fn periodic_kernel_bound(upsilon: &ScalarFn) -> Result<f64> {
    let (pos, neg) = upsilon.positive_negative_parts()?;
    let gap = (pos - neg).abs();
    if gap <= 1e-10 {
        return Err(Error::Resonance("∫υ vanishes".into()));
    }
    Ok(pos.min(neg).exp() / -(-gap).exp_m1())
}

/// Periodic kernel of `x'' + ω² x = h`: `cos(ω(|t-s| - T)) / (2ω sin ωT)`.
pub fn oscillator_kernel(omega: f64, half_width: f64, t: f64, s: f64) -> f64 {
    (omega * ((t - s).abs() - half_width)).cos() / (2.0 * omega * (omega * half_width).sin())
}

/// Periodic kernel of `x'' - θ² x = h`: `-cosh(θ(|t-s| - T)) / (2θ sinh θT)`.
pub fn hyperbolic_oscillator_kernel(theta: f64, half_width: f64, t: f64, s: f64) -> f64 {
    -(theta * ((t - s).abs() - half_width)).cosh() / (2.0 * theta * (theta * half_width).sinh())
}

fn check_width(half_width: f64) -> Result<()> {
    if half_width.is_finite() && half_width > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "half-width must be positive, got {half_width}"
        )))
    }
}

impl Kernel {
    pub fn half_width(&self) -> f64 {
        match self {
            Kernel::Constant(k) => k.width,
            Kernel::C3(k) => k.width,
            Kernel::Composed(k) => k.half_width,
            Kernel::Periodic(k) => k.half_width,
        }
    }

    /// The analytic formula of `region` evaluated at `(t, s)`, wherever the
    /// point is. For the periodic kernel `R1` and `R4` give the `s ≤ t` branch.
    pub fn piece(&self, region: Region, t: f64, s: f64) -> f64 {
        match self {
            Kernel::Constant(k) => k.piece(region, t, s),
            Kernel::C3(k) => k.piece(region, t, s),
            Kernel::Composed(k) => k.piece(region, t, s),
            Kernel::Periodic(k) => match region {
                Region::R1 | Region::R4 => k.lower(t, s),
                Region::R2 | Region::R3 => k.upper(t, s),
            },
        }
    }

    pub fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            Kernel::Periodic(k) => {
                if s <= t {
                    k.lower(t, s)
                } else {
                    k.upper(t, s)
                }
            }
            _ => self.piece(Region::of(t, s), t, s),
        }
    }

    /// Values of every piece whose closed region contains `(t, s)`; more than
    /// one entry exactly on a seam.
    pub fn one_sided_values(&self, t: f64, s: f64) -> Vec<f64> {
        match self {
            Kernel::Periodic(k) => {
                let mut out = Vec::new();
                if s <= t {
                    out.push(k.lower(t, s));
                }
                if s >= t {
                    out.push(k.upper(t, s));
                }
                out
            }
            _ => REGIONS
                .iter()
                .filter(|r| r.closure_contains(t, s))
                .map(|&r| self.piece(r, t, s))
                .collect(),
        }
    }

    /// Points in `s` where the kernel switches formula for fixed `t`.
    pub fn seams(&self, t: f64) -> Vec<f64> {
        match self {
            Kernel::Periodic(_) => vec![t],
            _ => {
                let m = t.abs();
                if m == 0.0 {
                    vec![0.0]
                } else {
                    vec![-m, m]
                }
            }
        }
    }

    /// `K(t, t⁻) - K(t, t⁺)` from the one-sided pieces.
    pub fn diagonal_jump(&self, t: f64) -> f64 {
        match self {
            Kernel::Periodic(k) => k.lower(t, t) - k.upper(t, t),
            _ => {
                if t >= 0.0 {
                    self.piece(Region::R1, t, t) - self.piece(Region::R2, t, t)
                } else {
                    self.piece(Region::R4, t, t) - self.piece(Region::R3, t, t)
                }
            }
        }
    }

    /// Writes `t,s,G` rows over an `n × n` uniform grid, skipping the diagonal.
    pub fn write_csv<W: Write>(&self, n: usize, out: &mut W) -> io::Result<()> {
        let grid = symmetric_grid(n.max(2), self.half_width());
        let rows: Vec<String> = grid
            .par_iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut row = String::new();
                for (j, &s) in grid.iter().enumerate() {
                    if i != j {
                        // `+ 0.0` prints the grid centre as 0 rather than -0
                        row.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", t + 0.0, s + 0.0, self.eval(t, s)));
                    }
                }
                row
            })
            .collect();
        writeln!(out, "t,s,G")?;
        for row in rows {
            out.write_all(row.as_bytes())?;
        }
        Ok(())
    }

    /// Minimum and maximum over an `n × n` grid excluding the diagonal.
    pub fn grid_extrema(&self, n: usize) -> (f64, f64) {
        let grid = symmetric_grid(n.max(2), self.half_width());
        grid.par_iter()
            .enumerate()
            .map(|(i, &t)| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (j, &s) in grid.iter().enumerate() {
                    if i != j {
                        let v = self.eval(t, s);
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                (lo, hi)
            })
            .reduce(
                || (f64::INFINITY, f64::NEG_INFINITY),
                |x, y| (x.0.min(y.0), x.1.max(y.1)),
            )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{detect_case, DEFAULT_TOL as CLASSIFY_TOL};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// `∂ₜK(t,s) + a K(-t,s) + b K(t,s)` by central differences.
    fn ode_residual(k: &Kernel, a: f64, b: f64, t: f64, s: f64) -> f64 {
        let h = 1e-5;
        let dk = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
        dk + a * k.eval(-t, s) + b * k.eval(t, s)
    }

    fn off_seam_points(half: f64) -> Vec<(f64, f64)> {
        let g = symmetric_grid(23, half * 0.999);
        let mut pts = Vec::new();
        for &t in &g {
            for &s in &g {
                if (t.abs() - s.abs()).abs() > 0.05 * half {
                    pts.push((t + 1e-3, s));
                }
            }
        }
        pts
    }

    fn check_properties(k: &Kernel, a: f64, b: f64) {
        let half = k.half_width();
        for t in symmetric_grid(17, 0.95 * half) {
            if t.abs() > 1e-9 {
                assert_abs_diff_eq!(k.diagonal_jump(t), 1.0, epsilon = 1e-9);
            }
        }
        for s in symmetric_grid(101, half) {
            assert_abs_diff_eq!(k.eval(half, s), k.eval(-half, s), epsilon = 1e-9);
        }
        for (t, s) in off_seam_points(half) {
            assert!(ode_residual(k, a, b, t, s).abs() < 1e-6, "({t}, {s})");
        }
    }

    #[test]
    fn trig_kernel_properties() {
        for (a, b, t) in [(1.0, 0.0, 1.0), (1.3, 0.4, 1.0), (2.0, -1.5, 0.7), (-1.0, 0.3, 2.0)] {
            check_properties(&const_kernel(a, b, t).unwrap(), a, b);
        }
    }

    #[test]
    fn hyperbolic_kernel_properties() {
        for (a, b, t) in [(0.5, 1.0, 1.0), (1.0, -3.0, 0.5), (-0.2, 0.9, 2.0)] {
            let k = const_kernel(a, b, t).unwrap();
            if let Kernel::Constant(c) = &k {
                assert!(c.is_hyperbolic());
            }
            check_properties(&k, a, b);
        }
    }

    #[test]
    fn c3_kernel_properties() {
        for (a, t) in [(1.0, 1.0), (0.4, 2.0), (-0.7, 0.5)] {
            check_properties(&c3_kernel(a, t).unwrap(), a, a);
        }
    }

    #[test]
    fn jump_example() {
        let k = const_kernel(1.0, 0.0, 1.0).unwrap();
        let eps = 1e-9;
        assert_abs_diff_eq!(k.eval(0.3, 0.3 - eps) - k.eval(0.3, 0.3 + eps), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn c3_reference_value() {
        // the four-piece kernel at a = T = 1, (t, s) = (0.5, 0):
        // (0 - 0.5)/2 - 0 + 1/4 + 1/2 = 0.5
        let k = c3_kernel(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(k.eval(0.5, 0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(k.eval(-1.0, 0.3), k.eval(1.0, 0.3), epsilon = 1e-15);
        assert_abs_diff_eq!(k.diagonal_jump(0.2), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn c3_scales_with_half_width() {
        let (a, t) = (0.6, 2.5);
        let k = c3_kernel(a, t).unwrap();
        let unit = c3_kernel(a * t, 1.0).unwrap();
        for (x, y) in [(0.3, -1.1), (-2.0, 0.4), (1.7, 2.2), (-0.1, -2.4)] {
            assert_abs_diff_eq!(k.eval(x, y), unit.eval(x / t, y / t), epsilon = 1e-14);
        }
    }

    #[test]
    fn printed_c3_formula_fails_its_own_equation() {
        // (t - s)/2 - a s t + {-1/2 + a s, 1/2 + a t, 1/2 - a s, -1/2 - a t}; a = T = 1
        let printed = |t: f64, s: f64| {
            let base = (t - s) / 2.0 - s * t;
            base + match Region::of(t, s) {
                Region::R1 => -0.5 + s,
                Region::R2 => 0.5 + t,
                Region::R3 => 0.5 - s,
                Region::R4 => -0.5 - t,
            }
        };
        let (t, s) = (0.5, 0.0);
        assert_abs_diff_eq!(printed(t, s), -0.25, epsilon = 1e-15);
        let h = 1e-6;
        let res = (printed(t + h, s) - printed(t - h, s)) / (2.0 * h) + printed(t, s) + printed(-t, s);
        assert!(res.abs() > 0.1);
    }

    #[test]
    fn limit_towards_c3() {
        let c3 = c3_kernel(1.0, 1.0).unwrap();
        for j in 3..=6 {
            let k = 1.0 - 10f64.powi(-j);
            let ck = const_kernel(1.0, k, 1.0).unwrap();
            for (t, s) in [(0.5, 0.0), (-0.3, 0.8), (0.9, -0.2), (-0.6, -0.7)] {
                assert!((ck.eval(t, s) - c3.eval(t, s)).abs() < 10.0 * 10f64.powi(-j));
            }
        }
    }

    #[test]
    fn b_zero_matches_oscillator_form() {
        for (omega, half) in [(1.0, 1.0), (0.5, 1.0), (2.0, 0.6)] {
            let k = const_kernel(omega, 0.0, half).unwrap();
            let g = |t: f64, s: f64| oscillator_kernel(omega, half, t, s);
            let h = 1e-6;
            for (t, s) in off_seam_points(half) {
                let ds = (g(t, s + h) - g(t, s - h)) / (2.0 * h);
                let dt = (g(t + h, s) - g(t - h, s)) / (2.0 * h);
                assert_abs_diff_eq!(k.eval(t, s), omega * g(t, -s) - ds, epsilon = 1e-6);
                assert_abs_diff_eq!(dt, -ds, epsilon = 1e-6);
                assert_abs_diff_eq!(g(t, s), g(-t, -s), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn general_constants_match_second_order_construction() {
        // K = a G(t,-s) - b G(t,s) + ∂ₜG with G the periodic kernel of x'' + (a² - b²) x
        for (a, b, half) in [(1.3, 0.4, 1.0), (0.5, 1.0, 1.0), (1.0, -3.0, 0.5)] {
            let k = const_kernel(a, b, half).unwrap();
            let lambda: f64 = a * a - b * b;
            let g = |t: f64, s: f64| {
                if lambda > 0.0 {
                    oscillator_kernel(lambda.sqrt(), half, t, s)
                } else {
                    hyperbolic_oscillator_kernel((-lambda).sqrt(), half, t, s)
                }
            };
            let h = 1e-6;
            for (t, s) in off_seam_points(half) {
                let dt = (g(t + h, s) - g(t - h, s)) / (2.0 * h);
                assert_abs_diff_eq!(k.eval(t, s), a * g(t, -s) - b * g(t, s) + dt, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn constructor_errors() {
        assert!(matches!(const_kernel(1.0, 0.0, PI), Err(Error::Resonance(_))));
        assert!(matches!(const_kernel(1.0, 1.0, 1.0), Err(Error::NotApplicable(_))));
        assert!(matches!(const_kernel(1.0, -1.0, 1.0), Err(Error::NotApplicable(_))));
        assert!(const_kernel(1.0, 0.0, 0.0).is_err());
        assert!(c3_kernel(0.0, 1.0).is_err());
        assert!(ode_kernel(&ScalarFn::new(1.0, |t| t), 1.0).is_err());
    }

    #[test]
    fn composed_reduces_to_constant_kernel() {
        let p = ProblemSpec::parse(1.0, "0.8", "0", "0").unwrap();
        let tag = detect_case(&p, CLASSIFY_TOL).unwrap();
        let g1 = composed_kernel(&p, &tag).unwrap();
        let k = const_kernel(0.8, 0.0, 1.0).unwrap();
        for t in symmetric_grid(21, 1.0) {
            for s in symmetric_grid(19, 1.0) {
                assert_abs_diff_eq!(g1.eval(t, s), k.eval(t, s), epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(g1.diagonal_jump(0.4), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn composed_kernel_properties_on_variable_problems() {
        let problems = [
            (1.5, "cos(pi*t)", "sinh(t)"),
            (1.0, "1 + 0.5*cos(t)", "0.3*(1 + 0.5*cos(t)) + t"),
            (1.0, "1 + t^2", "2*(1 + t^2) + 0.5*sin(t)"),
            (0.8, "2 + cos(t)", "2 + cos(t) + t^3"),
        ];
        for (half, a, b) in problems {
            let p = ProblemSpec::parse(half, a, b, "0").unwrap();
            let tag = detect_case(&p, CLASSIFY_TOL).unwrap();
            let k = composed_kernel(&p, &tag).unwrap();
            for t in symmetric_grid(15, 0.9 * half) {
                if t.abs() > 1e-9 {
                    assert_abs_diff_eq!(k.diagonal_jump(t), 1.0, epsilon = 1e-9);
                }
            }
            for s in symmetric_grid(101, half) {
                assert_abs_diff_eq!(k.eval(half, s), k.eval(-half, s), epsilon = 1e-8);
            }
            let h = 1e-5;
            for (t, s) in off_seam_points(half) {
                let dk = (k.eval(t + h, s) - k.eval(t - h, s)) / (2.0 * h);
                let r = dk + p.a.eval(t) * k.eval(-t, s) + p.b.eval(t) * k.eval(t, s);
                assert!(r.abs() < 1e-5, "{a}, {b}: ({t}, {s}) residual {r}");
            }
        }
    }

    #[test]
    fn composed_rejects_resonance_and_other_cases() {
        let p = ProblemSpec::parse(PI, "1", "0", "0").unwrap();
        let tag = detect_case(&p, CLASSIFY_TOL).unwrap();
        assert!(matches!(composed_kernel(&p, &tag), Err(Error::Resonance(_))));
        let p = ProblemSpec::parse(1.0, "t", "t^3", "0").unwrap();
        let tag = detect_case(&p, CLASSIFY_TOL).unwrap();
        assert!(matches!(composed_kernel(&p, &tag), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn periodic_kernel_values() {
        let k = ode_kernel(&ScalarFn::constant(1.0, 1.0), 1.0).unwrap();
        let Kernel::Periodic(pk) = &k else { unreachable!() };
        let tau = 1.0 / (1.0 - (-2.0f64).exp());
        assert_abs_diff_eq!(pk.tau(), tau, epsilon = 1e-12);
        assert_abs_diff_eq!(tau, 1.156_517_642_749_665, epsilon = 1e-12);
        assert_abs_diff_eq!(k.diagonal_jump(0.3), 1.0, epsilon = 1e-12);
        let bound = periodic_kernel_bound(&ScalarFn::constant(1.0, 1.0)).unwrap();
        assert_abs_diff_eq!(bound, tau, epsilon = 1e-12);
        let (lo, hi) = k.grid_extrema(61);
        assert!(lo.abs().max(hi.abs()) <= bound + 1e-12);
        for s in symmetric_grid(41, 0.99) {
            assert_abs_diff_eq!(k.eval(1.0, s), k.eval(-1.0, s), epsilon = 1e-10);
        }
    }

    #[test]
    fn seams_and_one_sided_values() {
        let k = const_kernel(1.0, 0.0, 1.0).unwrap();
        assert_eq!(k.seams(0.4), vec![-0.4, 0.4]);
        assert_eq!(k.one_sided_values(0.2, 0.1).len(), 1);
        assert_eq!(k.one_sided_values(0.2, 0.2).len(), 2);
        assert_eq!(k.one_sided_values(0.0, 0.0).len(), 4);
        assert_eq!(Region::of(0.3, 0.3), Region::R1);
        assert_eq!(Region::of(-0.3, 0.3), Region::R2);
        assert_eq!(Region::of(-0.3, -0.3), Region::R3);
    }

    #[test]
    fn csv_export_skips_the_diagonal() {
        let k = const_kernel(1.0, 0.0, 1.0).unwrap();
        let mut buf = Vec::new();
        k.write_csv(5, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,s,G");
        assert_eq!(lines.len(), 1 + 20);
        for line in &lines[1..] {
            let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
            assert_ne!(v[0], v[1]);
            assert_eq!(v[2], k.eval(v[0], v[1]));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn boundary_symmetry_for_random_constants(
            a in -2.0f64..2.0, b in -2.0f64..2.0, half in 0.2f64..1.5, s in -1.0f64..1.0,
        ) {
            prop_assume!((a * a - b * b).abs() > 1e-3);
            if let Ok(k) = const_kernel(a, b, half) {
                let s = s * half;
                let (l, r) = (k.eval(half, s), k.eval(-half, s));
                prop_assert!((l - r).abs() <= 1e-9 * (1.0 + l.abs()));
                let t = 0.5 * half;
                prop_assert!((k.diagonal_jump(t) - 1.0).abs() < 1e-9 * (1.0 + k.eval(t, 0.0).abs()));
            }
        }
    }
}
