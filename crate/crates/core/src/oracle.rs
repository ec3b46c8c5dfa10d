//! Independent checks: a dense collocation solver for the reflection problem,
//! an RK4 integrator for the even/odd system, and the exponential of the
//! primitive of the system matrix in the commuting cases.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

use crate::classify::{Case, CaseTag};
use crate::error::{Error, Result};
use crate::funcspace::symmetric_grid;
use crate::involution::parity_matrix;
use crate::problem::ProblemSpec;
use crate::solver::Solution;

/// Collocation systems with a 1-norm condition number above this are
/// reported as singular.
pub const SINGULAR_CONDITION: f64 = 1e8;

/// Values of the collocation solution on `t_i = -T + 2Ti/N`.
#[derive(Debug, Clone)]
pub struct GridSolution {
    pub n: usize,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    /// `‖A‖₁ ‖A⁻¹‖₁` of the linear system.
    pub condition: f64,
    /// Convergence order of the scheme.
    pub order: u32,
}

impl GridSolution {
    /// Piecewise-linear interpolant.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = (self.t[0], self.t[self.n]);
        let pos = ((t - lo) / (hi - lo) * self.n as f64).clamp(0.0, self.n as f64);
        let i = (pos.floor() as usize).min(self.n - 1);
        let w = pos - i as f64;
        (1.0 - w) * self.x[i] + w * self.x[i + 1]
    }

    /// `max_i |x_i - u(t_i)|`.
    pub fn max_error(&self, u: impl Fn(f64) -> f64) -> f64 {
        self.t
            .iter()
            .zip(&self.x)
            .fold(0.0, |m, (&t, &x)| m.max((x - u(t)).abs()))
    }
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Builds the collocation matrix and right-hand side for `N` intervals.
///
/// Row `i ≥ 1` is the trapezoid discretization of
/// `x(t_i) = x(t_0) + ∫_{t_0}^{t_i} (h - a x(-·) - b x)`, using
/// `x(-t_j) = x_{N-j}`; row 0 closes the system with `x_N = x_0`.
pub fn collocation_system(p: &ProblemSpec, n: usize) -> Result<(DMatrix<f64>, DVector<f64>, Vec<f64>)> {
    if n < 8 || !n.is_multiple_of(2) {
        return Err(Error::InvalidInput(format!(
            "collocation needs an even N ≥ 8, got {n}"
        )));
    }
    let grid = symmetric_grid(n + 1, p.half_width());
    let dt = 2.0 * p.half_width() / n as f64;
    let a: Vec<f64> = grid.iter().map(|&t| p.a.eval(t)).collect();
    let b: Vec<f64> = grid.iter().map(|&t| p.b.eval(t)).collect();
    let h: Vec<f64> = grid.iter().map(|&t| p.h.eval(t)).collect();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    let mut rhs = DVector::zeros(n + 1);
    m[(0, 0)] = -1.0;
    m[(0, n)] = 1.0;
    let mut h_acc = 0.0;
    for i in 1..=n {
        h_acc += 0.5 * dt * (h[i - 1] + h[i]);
        rhs[i] = h_acc;
        m[(i, i)] += 1.0;
        m[(i, 0)] -= 1.0;
        for j in 0..=i {
            let w = if j == 0 || j == i { 0.5 * dt } else { dt };
            m[(i, n - j)] += w * a[j];
            m[(i, j)] += w * b[j];
        }
    }
    Ok((m, rhs, grid))
}

/// Second-order collocation solve with an `N`-interval symmetric grid.
pub fn collocation_solve(p: &ProblemSpec, n: usize) -> Result<GridSolution> {
    let (m, rhs, grid) = collocation_system(p, n)?;
    let norm = norm1(&m);
    let lu = m.lu();
    let Some(inv) = lu.try_inverse() else {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    };
    let condition = norm * norm1(&inv);
    if !(condition < SINGULAR_CONDITION) {
        return Err(Error::Singular { condition });
    }
    let x = inv * rhs;
    Ok(GridSolution {
        n,
        t: grid,
        x: x.iter().copied().collect(),
        condition,
        order: 2,
    })
}

/// RK4 trajectory of a planar linear system, stored on the step nodes.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub state: Vec<Vector2<f64>>,
}

impl Trajectory {
    /// State at the node nearest to `t`.
    pub fn at(&self, t: f64) -> Vector2<f64> {
        let i = self
            .t
            .iter()
            .enumerate()
            .min_by(|x, y| (x.1 - t).abs().total_cmp(&(y.1 - t).abs()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.state[i]
    }
}

/// Integrates `y' = M(t) y + f(t)` from `y(0) = y0` over `[-T, T]` with
/// `steps` RK4 steps on each side of 0.
pub fn integrate_system(
    matrix: impl Fn(f64) -> Matrix2<f64>,
    forcing: impl Fn(f64) -> Vector2<f64>,
    y0: Vector2<f64>,
    half_width: f64,
    steps: usize,
) -> Trajectory {
    let rhs = |t: f64, y: Vector2<f64>| matrix(t) * y + forcing(t);
    let sweep = |dir: f64| {
        let h = dir * half_width / steps as f64;
        let mut y = y0;
        let mut out = Vec::with_capacity(steps);
        for i in 0..steps {
            let t = i as f64 * h;
            let k1 = rhs(t, y);
            let k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1);
            let k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2);
            let k4 = rhs(t + h, y + h * k3);
            y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            let t_next = if i + 1 == steps { dir * half_width } else { (i + 1) as f64 * h };
            out.push((t_next, y));
        }
        out
    };
    let back = sweep(-1.0);
    let fwd = sweep(1.0);
    let mut t = Vec::with_capacity(2 * steps + 1);
    let mut state = Vec::with_capacity(2 * steps + 1);
    for &(ti, yi) in back.iter().rev() {
        t.push(ti);
        state.push(yi);
    }
    t.push(0.0);
    state.push(y0);
    for &(ti, yi) in &fwd {
        t.push(ti);
        state.push(yi);
    }
    Trajectory { t, state }
}

/// Homogeneous even/odd system `(x_o, x_e)' = M (x_o, x_e)` seeded at 0.
pub fn integrate_parity_system(p: &ProblemSpec, x0: Vector2<f64>, steps: usize) -> Trajectory {
    integrate_system(
        |t| parity_matrix(&p.a, &p.b, t),
        |_| Vector2::zeros(),
        x0,
        p.half_width(),
        steps,
    )
}

/// The parity-system matrix `M(t)` of a problem.
pub fn system_matrix(p: &ProblemSpec, t: f64) -> Matrix2<f64> {
    parity_matrix(&p.a, &p.b, t)
}

/// `M̄(t) = ∫₀ᵗ M`, from the cached primitives of `a` and `b`.
pub fn system_primitive(p: &ProblemSpec, t: f64) -> Matrix2<f64> {
    let (pa, pb) = (p.a_primitive(), p.b_primitive());
    let (a1, a2) = (pa.eval(t), pa.eval(-t));
    let (b1, b2) = (pb.eval(t), pb.eval(-t));
    // ∫₀ᵗ f_o is the even part of ∫₀ᵗ f and vice versa
    let (ae, ao) = (0.5 * (a1 + a2), 0.5 * (a1 - a2));
    let (be, bo) = (0.5 * (b1 + b2), 0.5 * (b1 - b2));
    Matrix2::new(ae - be, -ao - bo, ao - bo, -ae - be)
}

/// Largest Frobenius norm of `[M(t), M(s)]` over a `samples × samples` grid.
pub fn commutator_sup(p: &ProblemSpec, samples: usize) -> f64 {
    let grid = symmetric_grid(samples.max(2), p.half_width());
    let mats: Vec<Matrix2<f64>> = grid.iter().map(|&t| system_matrix(p, t)).collect();
    let mut worst = 0.0f64;
    for x in &mats {
        for y in &mats {
            worst = worst.max((x * y - y * x).norm());
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpMode {
    Closed,
    Series,
}

/// `exp(m)` by scaling and squaring with a 12-term Taylor polynomial.
pub fn expm_series(m: &Matrix2<f64>) -> Matrix2<f64> {
    let norm = m.abs().row_sum().max();
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings);
    let mut term = Matrix2::identity();
    let mut sum = Matrix2::identity();
    for k in 1..=12 {
        term = term * scaled / k as f64;
        sum += term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

/// `e^{M̄(t)}` for cases C1–C5, either from the closed forms or by series.
pub fn matexp(tag: &CaseTag, p: &ProblemSpec, t: f64, mode: ExpMode) -> Result<Matrix2<f64>> {
    if tag.case == Case::Mixed {
        return Err(Error::NotApplicable(
            "the system matrix does not commute with itself in the mixed case".into(),
        ));
    }
    if mode == ExpMode::Series {
        return Ok(expm_series(&system_primitive(p, t)));
    }
    let a = p.a_primitive().eval(t);
    let damp = (-p.b_even_primitive().eval(t)).exp();
    let k = tag.k.unwrap_or(0.0);
    let m = match tag.case {
        Case::C1 => {
            let nu = ((1.0 - k) * (1.0 + k)).sqrt();
            let (s, c) = (nu * a).sin_cos();
            Matrix2::new(c, -(1.0 + k) / nu * s, nu / (1.0 + k) * s, c) * damp
        }
        Case::C2 => {
            let mu = ((k - 1.0) * (k + 1.0)).sqrt();
            let (s, c) = ((mu * a).sinh(), (mu * a).cosh());
            Matrix2::new(c, -(1.0 + k) / mu * s, (1.0 - k) / mu * s, c) * damp
        }
        Case::C3 => Matrix2::new(1.0, -2.0 * a, 0.0, 1.0) * damp,
        Case::C4 => Matrix2::new(1.0, 0.0, 2.0 * a, 1.0) * damp,
        Case::C5 => {
            let b = p.b_primitive().eval(t);
            Matrix2::new((a - b).exp(), 0.0, 0.0, (-a - b).exp())
        }
        Case::Mixed => unreachable!(),
    };
    Ok(m)
}

/// Member of the homogeneous solution family of each case, with the
/// coefficient constraint that makes it solve the equation (not only the
/// even/odd system): `β = -α` for C1–C3, `β = 0` for C4, `α = 0` for C5.
/// `free` is the remaining coefficient.
pub fn homogeneous_solution(tag: &CaseTag, p: &ProblemSpec, free: f64) -> Result<Solution> {
    general_homogeneous(tag, p, free, constrained_beta(tag.case, free))
}

fn constrained_beta(case: Case, alpha: f64) -> f64 {
    match case {
        Case::C4 => 0.0,
        Case::C5 => alpha,
        _ => -alpha,
    }
}

/// `α u₁ + β u₂` for the two solutions of the even/odd system written in the
/// case's closed form (for C5 `α` multiplies `e^{A-B}` and `β` multiplies `e^{-A-B}`;
/// [`homogeneous_solution`] passes `free` as `β` there and zeroes `α`).
pub fn general_homogeneous(tag: &CaseTag, p: &ProblemSpec, alpha: f64, beta: f64) -> Result<Solution> {
    let pa = p.a_primitive().clone();
    let pb = p.b_primitive().clone();
    let pbe = p.b_even_primitive().clone();
    let k = tag.k.unwrap_or(0.0);
    let half = p.half_width();
    let u: Box<dyn Fn(f64) -> f64 + Send + Sync> = match tag.case {
        Case::C1 => {
            let nu = ((1.0 - k) * (1.0 + k)).sqrt();
            Box::new(move |t| {
                let x = nu * pa.eval(t);
                (-pbe.eval(t)).exp() * (alpha * x.cos() + beta * (1.0 + k) / nu * x.sin())
            })
        }
        Case::C2 => {
            let mu = ((k - 1.0) * (k + 1.0)).sqrt();
            Box::new(move |t| {
                let x = mu * pa.eval(t);
                (-pbe.eval(t)).exp() * (alpha * x.cosh() + beta * (1.0 + k) / mu * x.sinh())
            })
        }
        Case::C3 | Case::C4 => {
            Box::new(move |t| (-pbe.eval(t)).exp() * (alpha + 2.0 * beta * pa.eval(t)))
        }
        Case::C5 => {
            let (al, be) = if beta == alpha { (0.0, alpha) } else { (alpha, beta) };
            Box::new(move |t| {
                let (a, b) = (pa.eval(t), pb.eval(t));
                al * (a - b).exp() + be * (-a - b).exp()
            })
        }
        Case::Mixed => {
            return Err(Error::NotApplicable(
                "no closed-form homogeneous solutions in the mixed case".into(),
            ))
        }
    };
    Ok(Solution::new(half, u))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{detect_case, DEFAULT_TOL};
    use crate::solver::residual;
    use approx::assert_abs_diff_eq;

    fn problem(t: f64, a: &str, b: &str, h: &str) -> ProblemSpec {
        ProblemSpec::parse(t, a, b, h).unwrap()
    }

    #[test]
    fn identity_forcing_gives_constant_one() {
        for (a, b) in [("1", "0"), ("0.5 + cos(pi*t)", "sinh(t)"), ("0.2", "0.1*cos(pi*t)")] {
            let p = problem(1.0, a, b, &format!("({a}) + ({b})"));
            let sol = collocation_solve(&p, 400).unwrap();
            assert!(sol.max_error(|_| 1.0) <= 1e-4, "{a}, {b}");
            assert!((sol.x[0] - sol.x[400]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let sol = collocation_solve(&problem(1.0, "1", "0.3", "0"), 64).unwrap();
        assert!(sol.x.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn second_order_convergence() {
        // u = cos t + sin(πt)/2 with a, b of mixed parity
        let p = problem(
            1.0,
            "1 + 0.3*t",
            "0.5*cos(t)",
            "-sin(t) + pi/2*cos(pi*t) + (1 + 0.3*t)*(cos(t) - sin(pi*t)/2) + 0.5*cos(t)*(cos(t) + sin(pi*t)/2)",
        );
        let exact = |t: f64| t.cos() + 0.5 * (std::f64::consts::PI * t).sin();
        let e1 = collocation_solve(&p, 100).unwrap().max_error(exact);
        let e2 = collocation_solve(&p, 200).unwrap().max_error(exact);
        let ratio = e1 / e2;
        assert!((3.0..=5.0).contains(&ratio), "ratio {ratio} ({e1:e}, {e2:e})");
    }

    #[test]
    fn resonance_is_reported_with_condition() {
        let p = problem(std::f64::consts::PI, "1", "0", "1");
        match collocation_solve(&p, 400) {
            Err(Error::Singular { condition }) => assert!(condition > 1e8),
            other => panic!("expected singular, got {other:?}"),
        }
        let ok = collocation_solve(&problem(1.0, "1", "0", "1"), 400).unwrap();
        assert!(ok.condition < 1e6);
    }

    #[test]
    fn rejects_odd_or_small_n() {
        let p = problem(1.0, "1", "0", "1");
        assert!(collocation_solve(&p, 7).is_err());
        assert!(collocation_solve(&p, 9).is_err());
    }

    #[test]
    fn matexp_examples() {
        let p = problem(1.0, "1", "0", "0");
        let tag = detect_case(&p, DEFAULT_TOL).unwrap();
        assert_eq!(matexp(&tag, &p, 0.0, ExpMode::Closed).unwrap(), Matrix2::identity());
        let m = matexp(&tag, &p, 0.5, ExpMode::Closed).unwrap();
        let (s, c) = 0.5f64.sin_cos();
        let expected = Matrix2::new(c, -s, s, c);
        assert!((m - expected).norm() < 1e-12);
        let series = matexp(&tag, &p, 0.5, ExpMode::Series).unwrap();
        assert!((m - series).norm() < 1e-12);
    }

    #[test]
    fn closed_and_series_agree_in_commuting_cases() {
        let cases = [
            ("cos(t)", "0.4*cos(t) + sin(t)", Case::C1),
            ("1 + 0.2*t^2", "3*(1 + 0.2*t^2) + t", Case::C2),
            ("2 + cos(t)", "2 + cos(t) + t^3", Case::C3),
            ("1", "-1 + t", Case::C4),
            ("t", "t^3", Case::C5),
        ];
        for (a, b, case) in cases {
            let p = problem(1.0, a, b, "0");
            let tag = detect_case(&p, DEFAULT_TOL).unwrap();
            assert_eq!(tag.case, case);
            for t in symmetric_grid(20, 1.0) {
                let c = matexp(&tag, &p, t, ExpMode::Closed).unwrap();
                let s = matexp(&tag, &p, t, ExpMode::Series).unwrap();
                assert!((c - s).norm() < 1e-12, "{case:?} t={t}: {c} vs {s}");
                assert_abs_diff_eq!(c.determinant(), s.determinant(), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn rk4_matches_exponential() {
        let p = problem(1.0, "cos(t)", "0.4*cos(t) + sin(t)", "0");
        let tag = detect_case(&p, DEFAULT_TOL).unwrap();
        let x0 = Vector2::new(0.3, -1.2);
        let traj = integrate_parity_system(&p, x0, 400);
        for (&t, y) in traj.t.iter().zip(&traj.state).step_by(40) {
            let e = matexp(&tag, &p, t, ExpMode::Closed).unwrap() * x0;
            assert!((e - y).norm() < 1e-7, "t={t}");
        }
        let zero = integrate_parity_system(&p, Vector2::zeros(), 50);
        assert!(zero.state.iter().all(|y| y.norm() == 0.0));
    }

    #[test]
    fn c5_system_is_diagonal() {
        let p = problem(1.0, "t", "t^3", "0");
        for t in symmetric_grid(11, 1.0) {
            let m = system_matrix(&p, t);
            assert_eq!(m[(0, 1)], 0.0);
            assert_eq!(m[(1, 0)], 0.0);
        }
        let traj = integrate_parity_system(&p, Vector2::new(1.0, 0.0), 100);
        assert!(traj.state.iter().all(|y| y[1] == 0.0));
    }

    #[test]
    fn commutator_separates_mixed_from_commuting() {
        assert!(commutator_sup(&problem(1.0, "0.3", "0.2*cos(pi*t)", "0"), 21) > 1e-3);
        assert!(commutator_sup(&problem(1.0, "cos(t)", "0.4*cos(t) + sin(t)", "0"), 21) < 1e-12);
        let p = problem(1.0, "cos(t)", "0.4*cos(t) + sin(t)", "0");
        let (x, y) = (system_primitive(&p, 0.3), system_primitive(&p, -0.8));
        assert!((x * y - y * x).norm() < 1e-10);
    }

    #[test]
    fn homogeneous_formulas_solve_the_equation() {
        let cases = [
            ("cos(t)", "0.4*cos(t) + sin(t)"),
            ("1 + 0.2*t^2", "3*(1 + 0.2*t^2) + t"),
            ("2 + cos(t)", "2 + cos(t) + t^3"),
            ("1", "-1 + t"),
            ("t", "t^3"),
        ];
        for (a, b) in cases {
            let p = problem(1.0, a, b, "0");
            let tag = detect_case(&p, DEFAULT_TOL).unwrap();
            let u = homogeneous_solution(&tag, &p, 0.7).unwrap();
            let r = residual(&p, &u, 201).residual_sup;
            assert!(r <= 1e-8, "{:?}: residual {r:e}", tag.case);
            // dropping the constraint leaves a solution of the system only
            let v = general_homogeneous(&tag, &p, 0.7, 0.2).unwrap();
            assert!(residual(&p, &v, 201).residual_sup > 1e-3, "{:?}", tag.case);
        }
    }

    #[test]
    fn mixed_case_has_no_exponential() {
        let p = problem(1.0, "0.3", "0.2*cos(pi*t)", "0");
        let tag = detect_case(&p, DEFAULT_TOL).unwrap();
        assert!(matexp(&tag, &p, 0.3, ExpMode::Closed).is_err());
        assert!(homogeneous_solution(&tag, &p, 1.0).is_err());
    }
}
