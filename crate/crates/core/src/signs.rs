//! Sign of Green's kernels: the threshold curve `σ(k)`, phasor identities,
//! maximum/anti-maximum verdicts and the positivity check for the mixed case.

use std::f64::consts::{FRAC_PI_4, PI};

use rayon::prelude::*;
use serde::Serialize;

use crate::classify::{Case, CaseTag};
use crate::error::{Error, Result};
use crate::funcspace::{symmetric_grid, ScalarFn};
use crate::kernels::Kernel;
use crate::problem::ProblemSpec;

/// Side of the empirical sign grid.
pub const SIGN_GRID: usize = 101;

const COEFF_GRID: usize = 513;

/// How close `A(T)` must be to `±π/4` to count as the boundary case.
const BOUNDARY_TOL: f64 = 1e-9;

/// Threshold on `|A(T)|` below which the composed kernel keeps one sign.
///
/// Returns `+∞` for `k ≤ -1`, where every width qualifies.
pub fn sigma(k: f64) -> f64 {
    if k.is_nan() {
        return f64::NAN;
    }
    if k <= -1.0 {
        return f64::INFINITY;
    }
    if k == 1.0 {
        return 0.5;
    }
    let e = k - 1.0;
    if e.abs() < 1e-6 {
        return 0.5 - e / 6.0 + e * e / 15.0;
    }
    if k < 1.0 {
        k.acos() / (2.0 * ((1.0 - k) * (1.0 + k)).sqrt())
    } else {
        // -ln(k - √(k²-1)) = acosh(k), without the cancellation
        k.acosh() / (2.0 * ((k - 1.0) * (k + 1.0)).sqrt())
    }
}

/// `α cos γ + β sin γ = amp · sin(γ + θ)` with `θ ∈ [-π, π)`.
pub fn phasor(alpha: f64, beta: f64) -> Result<(f64, f64)> {
    if alpha == 0.0 && beta == 0.0 {
        return Err(Error::InvalidInput("phasor of (0, 0) has no angle".into()));
    }
    let amp = alpha.hypot(beta);
    let mut theta = alpha.atan2(beta);
    if theta >= PI {
        theta = -PI;
    }
    Ok((amp, theta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HyperbolicBranch {
    /// `α > |β|`
    Cosh,
    /// `-α > |β|`
    NegCosh,
    /// `β > |α|`
    Sinh,
    /// `-β > |α|`
    NegSinh,
    /// `α = β`: `α e^γ`
    Growing,
    /// `α = -β`: `α e^{-γ}`
    Decaying,
}

/// `α cosh γ + β sinh γ` written as a single shifted `cosh`/`sinh` (or an
/// exponential when `|α| = |β|`). Returns the branch used and the value.
pub fn hyperbolic_phasor(alpha: f64, beta: f64, gamma: f64) -> (HyperbolicBranch, f64) {
    if alpha == beta {
        return (HyperbolicBranch::Growing, alpha * gamma.exp());
    }
    if alpha == -beta {
        return (HyperbolicBranch::Decaying, alpha * (-gamma).exp());
    }
    let r = ((alpha - beta) * (alpha + beta)).abs().sqrt();
    let shift = 0.5 * ((alpha + beta) / (alpha - beta)).abs().ln() + gamma;
    if alpha > beta.abs() {
        (HyperbolicBranch::Cosh, r * shift.cosh())
    } else if -alpha > beta.abs() {
        (HyperbolicBranch::NegCosh, -r * shift.cosh())
    } else if beta > alpha.abs() {
        (HyperbolicBranch::Sinh, r * shift.sinh())
    } else {
        (HyperbolicBranch::NegSinh, -r * shift.sinh())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SignVerdict {
    StrictlyPositive,
    StrictlyNegative,
    /// Constant sign, vanishing only at the four points of `P` (as one-sided limits).
    VanishesOnP,
    Indefinite,
    ConstantSignByTheorem,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OperatorVerdict {
    InversePositive,
    InverseNegative,
    Neither,
}

/// Kernel value at a point of `P`: the one-sided value closest to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointValue {
    pub t: f64,
    pub s: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    pub case: Case,
    pub verdict: SignVerdict,
    /// `+1` or `-1` when the verdict fixes a sign.
    pub sign: Option<i8>,
    pub sigma: f64,
    pub a_total: f64,
    pub operator: OperatorVerdict,
    /// Which criterion produced the verdict.
    pub criterion: String,
    pub grid_min: f64,
    pub grid_max: f64,
    /// Filled for `VanishesOnP`.
    pub vanishing_points: Vec<PointValue>,
    /// Extrema over the grid with the points of `P` removed (`VanishesOnP` only).
    pub min_away_from_p: Option<f64>,
    pub max_away_from_p: Option<f64>,
}

impl SignReport {
    /// Whether the empirical extrema contradict the verdict.
    pub fn contradicts_grid(&self) -> bool {
        let (lo, hi) = match (self.min_away_from_p, self.max_away_from_p) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => (self.grid_min, self.grid_max),
        };
        match (self.verdict, self.sign) {
            (SignVerdict::Indefinite, _) => !(lo < 0.0 && hi > 0.0),
            (SignVerdict::Unknown, _) => false,
            (_, Some(1)) => lo <= 0.0,
            (_, Some(-1)) => hi >= 0.0,
            (_, _) => lo < 0.0 && hi > 0.0,
        }
    }
}

/// Strict sign of `f` on a symmetric grid: `Some(±1)` when `f` keeps one
/// sign and is not identically zero.
fn grid_sign(f: &ScalarFn) -> Option<i8> {
    let vals: Vec<f64> = f.sample(COEFF_GRID).into_iter().map(|(_, v)| v).collect();
    let nonneg = vals.iter().all(|&v| v >= 0.0);
    let nonpos = vals.iter().all(|&v| v <= 0.0);
    let nonzero = vals.iter().any(|&v| v != 0.0);
    match (nonneg, nonpos, nonzero) {
        (true, _, true) => Some(1),
        (_, true, true) => Some(-1),
        _ => None,
    }
}

fn scan(kernel: &Kernel, n: usize, skip: &[(f64, f64)]) -> (f64, f64) {
    let grid = symmetric_grid(n, kernel.half_width());
    grid.par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for (j, &s) in grid.iter().enumerate() {
                if i == j || skip.iter().any(|&(pt, ps)| pt == t && ps == s) {
                    continue;
                }
                let v = kernel.eval(t, s);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        })
        .reduce(
            || (f64::INFINITY, f64::NEG_INFINITY),
            |x, y| (x.0.min(y.0), x.1.max(y.1)),
        )
}

fn sign_of(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else {
        -1
    }
}

/// Sign verdict for a C1–C3 kernel. Theorem-based criteria are applied where
/// their hypotheses hold; empirical extrema over a 101×101 off-diagonal grid
/// are always attached.
pub fn classify_sign(p: &ProblemSpec, tag: &CaseTag, kernel: &Kernel) -> Result<SignReport> {
    if !tag.case.has_kernel() {
        return Err(Error::NotApplicable(format!(
            "sign classification needs case C1-C3, got {:?}",
            tag.case
        )));
    }
    let half = p.half_width();
    let at = tag.a_total;
    let k = match tag.case {
        Case::C3 => 1.0,
        _ => tag
            .k
            .ok_or_else(|| Error::InvalidInput("case tag without k".into()))?,
    };
    let sig = sigma(k);
    let (grid_min, grid_max) = scan(kernel, SIGN_GRID, &[]);
    let mut report = SignReport {
        case: tag.case,
        verdict: SignVerdict::Unknown,
        sign: None,
        sigma: sig,
        a_total: at,
        operator: OperatorVerdict::Neither,
        criterion: "none".into(),
        grid_min,
        grid_max,
        vanishing_points: Vec::new(),
        min_away_from_p: None,
        max_away_from_p: None,
    };

    let a_sign = grid_sign(&p.a);
    let b_zero = p.b.sample(COEFF_GRID).iter().all(|&(_, v)| v == 0.0);

    if b_zero && a_sign.is_some() {
        report.criterion = "b = 0, a of constant sign: A(T) against ±π/4".into();
        let boundary = (at.abs() - FRAC_PI_4).abs() <= BOUNDARY_TOL;
        if boundary {
            report.verdict = SignVerdict::VanishesOnP;
            report.sign = Some(sign_of(at));
            // with a ≤ 0 the off-diagonal zero sits at the mirrored corner
            let corner = if at > 0.0 { (half, -half) } else { (-half, half) };
            let pts = [(-half, -half), (0.0, 0.0), (half, half), corner];
            report.vanishing_points = pts
                .iter()
                .map(|&(t, s)| {
                    let value = kernel
                        .one_sided_values(t, s)
                        .into_iter()
                        .min_by(|x, y| x.abs().total_cmp(&y.abs()))
                        .unwrap_or(f64::NAN);
                    PointValue { t, s, value }
                })
                .collect();
            let (lo, hi) = scan(kernel, SIGN_GRID, &pts);
            report.min_away_from_p = Some(lo);
            report.max_away_from_p = Some(hi);
        } else if at.abs() < FRAC_PI_4 && at != 0.0 {
            report.verdict = if at > 0.0 {
                SignVerdict::StrictlyPositive
            } else {
                SignVerdict::StrictlyNegative
            };
            report.sign = Some(sign_of(at));
        } else {
            report.verdict = SignVerdict::Indefinite;
        }
        report.operator = if at > 0.0 && (at < FRAC_PI_4 || boundary) {
            OperatorVerdict::InversePositive
        } else if at < 0.0 && (at > -FRAC_PI_4 || boundary) {
            OperatorVerdict::InverseNegative
        } else {
            OperatorVerdict::Neither
        };
        return Ok(report);
    }

    let upsilon_sign = grid_sign(&p.upsilon());
    let holds = match (tag.case, a_sign) {
        (Case::C3, _) if at.abs() < 0.5 => {
            report.criterion = "C3: |A(T)| < 1/2".into();
            report.sign = a_sign.or(upsilon_sign);
            true
        }
        (Case::C1, Some(sa)) if at.abs() < sig => {
            report.criterion = "C1, a of constant sign: |A(T)| < σ(k), sign(a)".into();
            report.sign = Some(sa);
            true
        }
        (Case::C2, Some(sa)) if k < -1.0 || at.abs() < sig => {
            report.criterion = if k < -1.0 {
                "C2, a of constant sign, k < -1: sign(k a)".into()
            } else {
                "C2, a of constant sign: |A(T)| < σ(k), sign(k a)".into()
            };
            report.sign = Some(sa * sign_of(k));
            true
        }
        _ => {
            let max_a = p
                .a_primitive()
                .to_fn()
                .sample(COEFF_GRID)
                .into_iter()
                .fold(f64::NEG_INFINITY, |m, (_, v)| m.max(v));
            if max_a < sig {
                report.criterion = "max A(I) < σ(k); sign of a + b".into();
                report.sign = upsilon_sign;
                true
            } else {
                false
            }
        }
    };
    if holds {
        report.verdict = SignVerdict::ConstantSignByTheorem;
        report.operator = match report.sign {
            Some(1) => OperatorVerdict::InversePositive,
            Some(-1) => OperatorVerdict::InverseNegative,
            _ => OperatorVerdict::Neither,
        };
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Clause {
    pub holds: bool,
    /// Margin by which the clause holds (negative when it fails).
    pub margin: f64,
}

impl Clause {
    fn new(margin: f64) -> Clause {
        Clause {
            holds: margin > 0.0,
            margin,
        }
    }
}

/// Hypotheses of the existence result for a positive solution in the mixed
/// case, checked on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixedPositivityReport {
    pub omega: f64,
    pub w: f64,
    pub d: f64,
    /// `0 < |b| < a < ω` on the grid.
    pub coefficient_bounds: Clause,
    /// `inf h > 0`.
    pub forcing_positive: Clause,
    /// `ω < π / (2T)`.
    pub omega_below_pi_over_2t: Clause,
    /// `ω < πT / 2`.
    pub omega_below_pi_t_over_2: Clause,
    /// `w ∈ (max{0, T - π/(4ω)}, T/2)`.
    pub window: Clause,
    /// Cone constant.
    pub cone_constant: f64,
    /// Interval on which the solution is positive when the hypotheses hold.
    pub positivity_interval: (f64, f64),
    /// All clauses, reading the frequency bound as `π/(2T)`.
    pub holds_reciprocal_reading: bool,
    /// All clauses, reading the frequency bound as `πT/2`.
    pub holds_product_reading: bool,
}

/// `[1 - tan(ωd)][1 - tan(ωw)] / ([1 + tan(ωd)][1 + tan(ωw)])`.
pub fn cone_constant(omega: f64, w: f64, d: f64) -> f64 {
    let (td, tw) = ((omega * d).tan(), (omega * w).tan());
    (1.0 - td) * (1.0 - tw) / ((1.0 + td) * (1.0 + tw))
}

pub fn check_mixed_positivity(
    p: &ProblemSpec,
    omega: f64,
    w: f64,
    d: f64,
) -> Result<MixedPositivityReport> {
    let half = p.half_width();
    if !(omega.is_finite() && omega > 0.0) {
        return Err(Error::InvalidInput(format!("ω must be positive, got {omega}")));
    }
    let scale = half.max(1.0);
    if !(w.is_finite() && d.is_finite())
        || w < 0.0
        || d > half
        || w > d
        || (w + d - half).abs() > 1e-12 * scale
    {
        return Err(Error::InvalidInput(format!(
            "window [{w}, {d}] must satisfy 0 ≤ w ≤ d ≤ T and w = T - d (T = {half})"
        )));
    }
    let mut coeff = f64::INFINITY;
    let mut h_inf = f64::INFINITY;
    for t in symmetric_grid(COEFF_GRID, half) {
        let (a, b) = (p.a.eval(t), p.b.eval(t));
        let m = b.abs().min(a - b.abs()).min(omega - a);
        coeff = coeff.min(m);
        h_inf = h_inf.min(p.h.eval(t));
    }
    let reach = PI / (4.0 * omega);
    let lower = (half - reach).max(0.0);
    let window = Clause::new((w - lower).min(0.5 * half - w));
    let coefficient_bounds = Clause::new(coeff);
    let forcing_positive = Clause::new(h_inf);
    let recip = Clause::new(PI / (2.0 * half) - omega);
    let product = Clause::new(PI * half / 2.0 - omega);
    let common = coefficient_bounds.holds && forcing_positive.holds && window.holds;
    Ok(MixedPositivityReport {
        omega,
        w,
        d,
        coefficient_bounds,
        forcing_positive,
        omega_below_pi_over_2t: recip,
        omega_below_pi_t_over_2: product,
        window,
        cone_constant: cone_constant(omega, w, d),
        positivity_interval: (lower, half.min(reach)),
        holds_reciprocal_reading: common && recip.holds,
        holds_product_reading: common && product.holds,
    })
}
