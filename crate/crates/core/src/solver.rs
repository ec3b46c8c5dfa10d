//! Solution paths: kernel quadrature (C1–C3), solvability-checked families
//! (C4, C5), Picard iteration (mixed case) and residual diagnostics.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{self, detect_case, Case, CaseTag};
use crate::error::{Error, Result};
use crate::funcspace::{
    cumulative_primitive, parity_decompose, symmetric_grid, Primitive, ScalarFn, DEFAULT_TOL,
};
use crate::kernels::{composed_kernel, periodic_kernel_bound, Kernel};
use crate::problem::ProblemSpec;
use crate::quad;

/// Nodes of the mixed-case grid.
pub const MIXED_NODES: usize = 513;

/// An evaluable solution `t ↦ u(t)`.
#[derive(Clone)]
pub struct Solution {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    half_width: f64,
}

impl fmt::Debug for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solution")
            .field("half_width", &self.half_width)
            .finish_non_exhaustive()
    }
}

impl Solution {
    pub fn new(half_width: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Solution {
            f: Arc::new(f),
            half_width,
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// `self + c · other`.
    pub fn plus_scaled(&self, other: &Solution, c: f64) -> Solution {
        let (u, v) = (self.f.clone(), other.f.clone());
        Solution::new(self.half_width, move |t| u(t) + c * v(t))
    }

    /// Values on `n` symmetric uniform nodes.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64)> {
        symmetric_grid(n, self.half_width)
            .into_par_iter()
            .map(|t| (t, self.eval(t)))
            .collect()
    }

    /// Writes `t,u` rows on `n` uniform nodes.
    pub fn write_csv<W: Write>(&self, n: usize, out: &mut W) -> io::Result<()> {
        writeln!(out, "t,u")?;
        for (t, u) in self.sample(n) {
            writeln!(out, "{:.16e},{u:.16e}", t + 0.0)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResidualReport {
    /// `sup |u' + a u(-t) + b u - h|` over the grid.
    pub residual_sup: f64,
    /// `|u(T) - u(-T)|`.
    pub bc_gap: f64,
    pub points: usize,
}

impl ResidualReport {
    fn max(self, other: ResidualReport) -> ResidualReport {
        ResidualReport {
            residual_sup: self.residual_sup.max(other.residual_sup),
            bc_gap: self.bc_gap.max(other.bc_gap),
            points: self.points.max(other.points),
        }
    }
}

/// Fourth-order finite-difference derivative with step `h`, switching to a
/// one-sided stencil within two steps of either end of `[lo, hi]`.
pub(crate) fn fd_derivative(u: &dyn Fn(f64) -> f64, t: f64, h: f64, lo: f64, hi: f64) -> f64 {
    let one_sided = |dir: f64| {
        let f: Vec<f64> = (0..5).map(|i| u(t + dir * i as f64 * h)).collect();
        dir * (-25.0 * f[0] + 48.0 * f[1] - 36.0 * f[2] + 16.0 * f[3] - 3.0 * f[4]) / (12.0 * h)
    };
    if t - 2.0 * h < lo {
        one_sided(1.0)
    } else if t + 2.0 * h > hi {
        one_sided(-1.0)
    } else {
        (u(t - 2.0 * h) - 8.0 * u(t - h) + 8.0 * u(t + h) - u(t + 2.0 * h)) / (12.0 * h)
    }
}

/// ODE residual of `u` on `n_points` uniform nodes, with `u'` from 5-point
/// differences of step `1e-5·T` (one-sided within two steps of `±T`).
pub fn residual(p: &ProblemSpec, u: &Solution, n_points: usize) -> ResidualReport {
    let half = p.half_width();
    let h = 1e-5 * half;
    let derivative = |t: f64| fd_derivative(&|x| u.eval(x), t, h, -half, half);
    let residual_sup = symmetric_grid(n_points.max(2), half)
        .into_par_iter()
        .map(|t| {
            let r = p.operator(t, u.eval(t), u.eval(-t), derivative(t)) - p.h.eval(t);
            if r.is_nan() {
                f64::INFINITY
            } else {
                r.abs()
            }
        })
        .reduce(|| 0.0, f64::max);
    ResidualReport {
        residual_sup,
        bc_gap: (u.eval(half) - u.eval(-half)).abs(),
        points: n_points,
    }
}

#[derive(Debug, Clone)]
pub enum Outcome {
    Unique(Solution),
    /// Solutions `particular + c · direction` for every real `c`.
    Family {
        particular: Solution,
        direction: Solution,
    },
    /// The solvability condition fails; `condition_value` should vanish.
    NoSolution { condition_value: f64, scale: f64 },
    /// The contraction bound is not below one.
    NotContractive { bound: f64 },
}

impl Outcome {
    pub fn name(&self) -> &'static str {
        match self {
            Outcome::Unique(_) => "Unique",
            Outcome::Family { .. } => "Family",
            Outcome::NoSolution { .. } => "NoSolution",
            Outcome::NotContractive { .. } => "NotContractive",
        }
    }

    /// Family member `u₀ + c v`, or the unique solution.
    pub fn member(&self, c: f64) -> Option<Solution> {
        match self {
            Outcome::Unique(u) => Some(u.clone()),
            Outcome::Family {
                particular,
                direction,
            } => Some(particular.plus_scaled(direction, c)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub case: Option<Case>,
    pub k: Option<f64>,
    pub bound: Option<f64>,
    pub residual_sup: Option<f64>,
    pub bc_gap: Option<f64>,
    pub condition_value: Option<f64>,
    pub iterations: Option<usize>,
    /// Successive sup-norm Picard updates.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub updates: Vec<f64>,
    pub within_tolerance: Option<bool>,
}

impl Diagnostics {
    fn from_tag(tag: &CaseTag) -> Diagnostics {
        Diagnostics {
            case: Some(tag.case),
            k: tag.k,
            ..Diagnostics::default()
        }
    }

    fn record(&mut self, r: ResidualReport, tol: f64) {
        self.residual_sup = Some(r.residual_sup);
        self.bc_gap = Some(r.bc_gap);
        self.within_tolerance = Some(r.residual_sup <= tol && r.bc_gap <= tol);
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub outcome: Outcome,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Residual and solvability tolerance.
    pub tol: f64,
    /// Grid size for residual reports.
    pub residual_points: usize,
    /// Stopping threshold on the sup-norm Picard update.
    pub picard_tol: f64,
    pub max_iter: usize,
    pub classify_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            residual_points: 201,
            picard_tol: 1e-11,
            max_iter: 200,
            classify_tol: classify::DEFAULT_TOL,
        }
    }
}

/// `u(t) = ∫ K(t, s) h(s) ds`, integrated piecewise between the kernel's seams.
pub fn green_solution(p: &ProblemSpec, kernel: &Kernel) -> Solution {
    let half = p.half_width();
    let k = kernel.clone();
    let h = p.h.clone();
    Solution::new(half, move |t| {
        let f = |s: f64| k.eval(t, s) * h.eval(s);
        let mut points = vec![-half];
        points.extend(k.seams(t).into_iter().filter(|&x| x > -half && x < half));
        points.push(half);
        let mut sum = quad::Neumaier::default();
        for w in points.windows(2) {
            sum.add(quad::integrate_with_estimate(&f, w[0], w[1], 1e-13).0);
        }
        sum.total()
    })
}

/// Kernel-quadrature solve for a problem whose kernel is `kernel`.
pub fn solve_green(p: &ProblemSpec, kernel: &Kernel, opts: &SolveOptions) -> SolveOutcome {
    let u = green_solution(p, kernel);
    let mut diagnostics = Diagnostics::default();
    diagnostics.record(residual(p, &u, opts.residual_points), opts.tol);
    SolveOutcome {
        outcome: Outcome::Unique(u),
        diagnostics,
    }
}

fn require_case(p: &ProblemSpec, opts: &SolveOptions, case: Case) -> Result<CaseTag> {
    let tag = detect_case(p, opts.classify_tol)?;
    if tag.case != case {
        return Err(Error::NotApplicable(format!(
            "problem is in case {:?}, not {case:?}",
            tag.case
        )));
    }
    Ok(tag)
}

fn primitive_of(half: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Primitive> {
    cumulative_primitive(&ScalarFn::new(half, f), DEFAULT_TOL)
}

fn family_outcome(
    p: &ProblemSpec,
    mut diagnostics: Diagnostics,
    particular: Solution,
    direction: Solution,
    opts: &SolveOptions,
) -> SolveOutcome {
    let n = opts.residual_points;
    let report = [-1.0, 0.0, 1.0]
        .into_iter()
        .map(|c| residual(p, &particular.plus_scaled(&direction, c), n))
        .reduce(ResidualReport::max)
        .expect("non-empty");
    diagnostics.record(report, opts.tol);
    SolveOutcome {
        outcome: Outcome::Family {
            particular,
            direction,
        },
        diagnostics,
    }
}

/// Case C4 (`a` even, `b_e = -a`): solvable iff `∫₀ᵀ e^{B_e} h_e = 0`.
pub fn solve_c4(p: &ProblemSpec, opts: &SolveOptions) -> Result<SolveOutcome> {
    let tag = require_case(p, opts, Case::C4)?;
    let half = p.half_width();
    let be = p.b_even_primitive().clone();
    let he = parity_decompose(&p.h).even;
    let ae = parity_decompose(&p.a).even;
    let q = {
        let (be, he) = (be.clone(), he.clone());
        primitive_of(half, move |s| be.eval(s).exp() * he.eval(s))?
    };
    let condition_value = q.eval(half);
    let scale = 1.0
        + quad::integrate(
            &|s: f64| be.eval(s).exp() * he.eval(s).abs(),
            0.0,
            half,
            1e-13,
        )?;
    let mut diagnostics = Diagnostics::from_tag(&tag);
    diagnostics.condition_value = Some(condition_value);
    if condition_value.abs() > opts.tol * scale {
        return Ok(SolveOutcome {
            outcome: Outcome::NoSolution {
                condition_value,
                scale,
            },
            diagnostics,
        });
    }
    let inner = {
        let (be, h, ae, q) = (be.clone(), p.h.clone(), ae, q);
        primitive_of(half, move |s| {
            be.eval(s).exp() * h.eval(s) + 2.0 * ae.eval(s) * q.eval(s)
        })?
    };
    let particular = {
        let be = be.clone();
        Solution::new(half, move |t| (-be.eval(t)).exp() * inner.eval(t))
    };
    let direction = Solution::new(half, move |t| (-be.eval(t)).exp());
    Ok(family_outcome(p, diagnostics, particular, direction, opts))
}

/// Case C5 (`a`, `b` odd): solvable iff `∫₀ᵀ e^{B-A} h_e = 0`.
pub fn solve_c5(p: &ProblemSpec, opts: &SolveOptions) -> Result<SolveOutcome> {
    let tag = require_case(p, opts, Case::C5)?;
    let half = p.half_width();
    let a_prim = p.a_primitive().clone();
    let b_prim = p.b_primitive().clone();
    let parts = parity_decompose(&p.h);
    let even_part = {
        let (a, b, he) = (a_prim.clone(), b_prim.clone(), parts.even.clone());
        primitive_of(half, move |s| (b.eval(s) - a.eval(s)).exp() * he.eval(s))?
    };
    let condition_value = even_part.eval(half);
    let scale = 1.0
        + quad::integrate(
            &|s: f64| (b_prim.eval(s) - a_prim.eval(s)).exp() * parts.even.eval(s).abs(),
            0.0,
            half,
            1e-13,
        )?;
    let mut diagnostics = Diagnostics::from_tag(&tag);
    diagnostics.condition_value = Some(condition_value);
    if condition_value.abs() > opts.tol * scale {
        return Ok(SolveOutcome {
            outcome: Outcome::NoSolution {
                condition_value,
                scale,
            },
            diagnostics,
        });
    }
    let odd_part = {
        let (a, b, ho) = (a_prim.clone(), b_prim.clone(), parts.odd);
        primitive_of(half, move |s| (a.eval(s) + b.eval(s)).exp() * ho.eval(s))?
    };
    let particular = {
        let (a, b) = (a_prim.clone(), b_prim.clone());
        Solution::new(half, move |t| {
            let (at, bt) = (a.eval(t), b.eval(t));
            (at - bt).exp() * even_part.eval(t) + (-at - bt).exp() * odd_part.eval(t)
        })
    };
    let direction = Solution::new(half, move |t| (-a_prim.eval(t) - b_prim.eval(t)).exp());
    Ok(family_outcome(p, diagnostics, particular, direction, opts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContractionBound {
    /// `F(υ) ‖a‖₁ min W`.
    pub value: f64,
    /// `F(υ)`, the bound on the periodic kernel.
    pub kernel_bound: f64,
    pub a_l1: f64,
    /// `(2T)^{1/p}(‖a‖_{p*} + ‖b‖_{p*})` for `p = 1, 2, ∞`.
    pub w: [f64; 3],
}

/// Sufficient condition for the mixed-case Picard iteration to contract.
pub fn contraction_bound(p: &ProblemSpec) -> Result<ContractionBound> {
    let kernel_bound = periodic_kernel_bound(&p.upsilon())?;
    let two_t = 2.0 * p.half_width();
    let a_l1 = p.a.l1_norm()?;
    let w = [
        two_t * (p.a.sup_norm() + p.b.sup_norm()),
        two_t.sqrt() * (p.a.lp_norm(2.0)? + p.b.lp_norm(2.0)?),
        a_l1 + p.b.l1_norm()?,
    ];
    let w_min = w.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ContractionBound {
        value: kernel_bound * a_l1 * w_min,
        kernel_bound,
        a_l1,
        w,
    })
}

/// Cumulative integral from the left end of node values on a uniform grid,
/// fourth order; the halves `[-T, 0]` and `[0, T]` are integrated separately
/// so kinks at the origin do not spoil the stencils.
fn cumulative(values: &[f64], step: f64) -> Vec<f64> {
    let n = values.len();
    let mid = n / 2;
    let mut out = vec![0.0; n];
    let mut acc = quad::Neumaier::default();
    for (lo, hi) in [(0, mid), (mid, n - 1)] {
        let f = &values[lo..=hi];
        let m = f.len();
        for j in 0..m - 1 {
            let panel = if j == 0 {
                9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3]
            } else if j == m - 2 {
                f[j - 2] - 5.0 * f[j - 1] + 19.0 * f[j] + 9.0 * f[j + 1]
            } else {
                -f[j - 1] + 13.0 * f[j] + 13.0 * f[j + 1] - f[j + 2]
            };
            acc.add(step * panel / 24.0);
            out[lo + j + 1] = acc.total();
        }
    }
    out
}

/// The mixed-case fixed-point map on a symmetric grid.
///
/// With `υ = a + b`, `V = ∫₀ᵗ υ`, a solution satisfies
/// `x' + υ x = F[x]`, `F[x](t) = h(t) + a(t)(∫_{-t}^{t} h + ∫_t^{-t} (a x(-·) + b x))`,
/// and `x` is recovered through the periodic kernel of `x' + υ x`.
struct MixedMap {
    t: Vec<f64>,
    step: f64,
    a: Vec<f64>,
    b: Vec<f64>,
    h: Vec<f64>,
    h_sym: Vec<f64>,
    exp_v: Vec<f64>,
    tau: f64,
}

struct MixedState {
    g_cum: Vec<f64>,
    e_cum: Vec<f64>,
}

impl MixedMap {
    fn new(p: &ProblemSpec, v: &Primitive, h_prim: &Primitive, tau: f64) -> MixedMap {
        let t = symmetric_grid(MIXED_NODES, p.half_width());
        let step = 2.0 * p.half_width() / (MIXED_NODES - 1) as f64;
        MixedMap {
            a: t.iter().map(|&x| p.a.eval(x)).collect(),
            b: t.iter().map(|&x| p.b.eval(x)).collect(),
            h: t.iter().map(|&x| p.h.eval(x)).collect(),
            h_sym: t.iter().map(|&x| h_prim.eval(x) - h_prim.eval(-x)).collect(),
            exp_v: t.iter().map(|&x| v.eval(x).exp()).collect(),
            t,
            step,
            tau,
        }
    }

    fn state(&self, x: &[f64]) -> MixedState {
        let n = x.len();
        let g: Vec<f64> = (0..n)
            .map(|i| self.a[i] * x[n - 1 - i] + self.b[i] * x[i])
            .collect();
        let g_cum = cumulative(&g, self.step);
        let w: Vec<f64> = (0..n)
            .map(|i| {
                let f = self.a[i] * (g_cum[n - 1 - i] - g_cum[i] + self.h_sym[i]) + self.h[i];
                self.exp_v[i] * f
            })
            .collect();
        MixedState {
            g_cum,
            e_cum: cumulative(&w, self.step),
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let st = self.state(x);
        let end = (self.tau - 1.0) * st.e_cum[x.len() - 1];
        (0..x.len())
            .map(|i| (st.e_cum[i] + end) / self.exp_v[i])
            .collect()
    }
}

/// Six-point Lagrange interpolation of node values, using nodes from the
/// same half of the grid as `r`.
fn interpolate(t: &[f64], x: &[f64], step: f64, r: f64) -> f64 {
    let n = t.len();
    let mid = n / 2;
    let (lo, hi) = if r >= 0.0 { (mid, n - 1) } else { (0, mid) };
    let pos = (r - t[0]) / step;
    let start = (pos.floor() as isize - 2).clamp(lo as isize, hi as isize - 5) as usize;
    let mut sum = 0.0;
    for i in start..start + 6 {
        let mut w = 1.0;
        for j in start..start + 6 {
            if i != j {
                w *= (r - t[j]) / (t[i] - t[j]);
            }
        }
        sum += w * x[i];
    }
    sum
}

fn nearest_node(t0: f64, step: f64, n: usize, r: f64) -> usize {
    ((r - t0) / step).round().clamp(0.0, (n - 1) as f64) as usize
}

/// Picard iteration for the mixed case.
pub fn solve_mixed(p: &ProblemSpec, tol: f64, max_iter: usize, opts: &SolveOptions) -> Result<SolveOutcome> {
    let tag = detect_case(p, opts.classify_tol)?;
    let mut diagnostics = Diagnostics::from_tag(&tag);
    let bound = match contraction_bound(p) {
        Ok(b) => b.value,
        Err(Error::Resonance(_)) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    diagnostics.bound = Some(bound);
    if !(bound < 1.0) {
        return Ok(SolveOutcome {
            outcome: Outcome::NotContractive { bound },
            diagnostics,
        });
    }
    let half = p.half_width();
    let v = cumulative_primitive(&p.upsilon(), DEFAULT_TOL)?;
    let h_prim = cumulative_primitive(&p.h, DEFAULT_TOL)?;
    let tau = 1.0 / -(-(v.eval(half) - v.eval(-half))).exp_m1();
    let map = MixedMap::new(p, &v, &h_prim, tau);

    let mut x = map.apply(&vec![0.0; MIXED_NODES]);
    let mut converged = false;
    for _ in 0..max_iter {
        let next = map.apply(&x);
        let update = next
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        x = next;
        diagnostics.updates.push(update);
        if !update.is_finite() {
            break;
        }
        if update < tol {
            converged = true;
            break;
        }
    }
    diagnostics.iterations = Some(diagnostics.updates.len());
    if !converged {
        return Err(Error::NoConvergence {
            iterations: diagnostics.updates.len(),
            last_update: diagnostics.updates.last().copied().unwrap_or(f64::NAN),
        });
    }

    let st = map.state(&x);
    let u = nystrom_solution(p, map, st, x, v, h_prim);
    diagnostics.record(residual(p, &u, opts.residual_points), opts.tol);
    Ok(SolveOutcome {
        outcome: Outcome::Unique(u),
        diagnostics,
    })
}

/// Continuous extension of the converged node values: the fixed-point map is
/// re-evaluated at `t`, integrating from the nearest node with Gauss–Legendre
/// rules over interpolated values. The result is smooth in `t`.
fn nystrom_solution(
    p: &ProblemSpec,
    map: MixedMap,
    st: MixedState,
    x: Vec<f64>,
    v: Primitive,
    h_prim: Primitive,
) -> Solution {
    let half = p.half_width();
    let (a, b, h) = (p.a.clone(), p.b.clone(), p.h.clone());
    let map = Arc::new(map);
    let st = Arc::new(st);
    let x = Arc::new(x);
    Solution::new(half, move |t| {
        let n = x.len();
        let (t0, step) = (map.t[0], map.step);
        let rule = quad::gl8();
        let lx = |r: f64| interpolate(&map.t, &x, step, r);
        let g = |r: f64| a.eval(r) * lx(-r) + b.eval(r) * lx(r);
        let g_cum = |s: f64| {
            let k = nearest_node(t0, step, n, s);
            st.g_cum[k] + quad::gl_fixed(&g, map.t[k], s, rule)
        };
        let forcing = |s: f64| {
            let coupled = g_cum(-s) - g_cum(s) + h_prim.eval(s) - h_prim.eval(-s);
            v.eval(s).exp() * (a.eval(s) * coupled + h.eval(s))
        };
        let j = nearest_node(t0, step, n, t);
        let e = if map.t[j] == t {
            st.e_cum[j]
        } else {
            st.e_cum[j] + quad::gl_fixed(&forcing, map.t[j], t, rule)
        };
        (e + (map.tau - 1.0) * st.e_cum[n - 1]) * (-v.eval(t)).exp()
    })
}

/// Classifies the problem and dispatches to the matching solution path.
pub fn solve(p: &ProblemSpec, opts: &SolveOptions) -> Result<SolveOutcome> {
    let tag = detect_case(p, opts.classify_tol)?;
    match tag.case {
        Case::C1 | Case::C2 | Case::C3 => {
            let kernel = composed_kernel(p, &tag)?;
            let mut out = solve_green(p, &kernel, opts);
            out.diagnostics.case = Some(tag.case);
            out.diagnostics.k = tag.k;
            Ok(out)
        }
        Case::C4 => solve_c4(p, opts),
        Case::C5 => solve_c5(p, opts),
        Case::Mixed => solve_mixed(p, opts.picard_tol, opts.max_iter, opts),
    }
}
