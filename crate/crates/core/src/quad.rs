//! Quadrature rules: Gauss–Kronrod (7, 15) adaptive integration and
//! Gauss–Legendre rules of arbitrary order.

#![allow(clippy::excessive_precision)]

use std::sync::OnceLock;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd-indexed Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// One Gauss–Kronrod 15-point panel: (Kronrod estimate, |Kronrod − Gauss|).
pub fn gk15<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("adaptive quadrature on [{a}, {b}] did not reach tolerance {tol:e} (estimate {estimate:e})")]
pub struct QuadError {
    pub a: f64,
    pub b: f64,
    pub tol: f64,
    pub estimate: f64,
}

const MAX_DEPTH: u32 = 40;

/// Adaptive bisection with the GK15 rule. `tol` is an absolute tolerance.
pub fn integrate<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> Result<f64, QuadError> {
    let (value, worst) = integrate_with_estimate(f, a, b, tol);
    if worst > 0.0 {
        return Err(QuadError {
            a,
            b,
            tol,
            estimate: worst,
        });
    }
    Ok(value)
}

/// Like [`integrate`] but always returns the value, together with the
/// largest unresolved panel error (0 when the tolerance was met).
pub fn integrate_with_estimate<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let (value, err) = gk15(f, a, b);
    let mut sum = Neumaier::default();
    let mut worst = 0.0f64;
    recurse(f, a, b, value, err, tol.max(1e-300), 0, &mut sum, &mut worst);
    (sum.total(), worst)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    tol: f64,
    depth: u32,
    sum: &mut Neumaier,
    worst: &mut f64,
) {
    if !value.is_finite() || !err.is_finite() {
        *worst = f64::INFINITY;
        return;
    }
    let m = 0.5 * (a + b);
    let roundoff = 50.0 * f64::EPSILON * value.abs();
    if err <= tol || err <= roundoff || !(a < m && m < b) {
        sum.add(value);
        return;
    }
    if depth >= MAX_DEPTH {
        sum.add(value);
        *worst = worst.max(err);
        return;
    }
    let (lv, le) = gk15(f, a, m);
    let (rv, re) = gk15(f, m, b);
    recurse(f, a, m, lv, le, 0.5 * tol, depth + 1, sum, worst);
    recurse(f, m, b, rv, re, 0.5 * tol, depth + 1, sum, worst);
}

/// Integrates over consecutive sub-intervals separated by `breaks`
/// (which must be sorted and lie inside [a, b]).
pub fn integrate_split<F: Fn(f64) -> f64 + ?Sized>(
    f: &F,
    a: f64,
    b: f64,
    breaks: &[f64],
    tol: f64,
) -> Result<f64, QuadError> {
    let mut points = Vec::with_capacity(breaks.len() + 2);
    points.push(a);
    points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    points.push(b);
    let pieces = (points.len() - 1) as f64;
    let mut sum = Neumaier::default();
    for w in points.windows(2) {
        sum.add(integrate(f, w[0], w[1], tol / pieces)?);
    }
    Ok(sum.total())
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on P_n.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let n = n as f64;
    (p1, n * (x * p1 - p0) / (x * x - 1.0))
}

/// Eight-point Gauss–Legendre rule, computed once.
pub fn gl8() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(8))
}

/// Fixed-order Gauss–Legendre integral over [a, b].
pub fn gl_fixed<F: Fn(f64) -> f64 + ?Sized>(f: &F, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for (x, w) in rule.0.iter().zip(&rule.1) {
        s += w * f(c + h * x);
    }
    s * h
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gk15_is_exact_for_high_degree_polynomials() {
        for deg in 0..=22 {
            let (v, _) = gk15(&|x: f64| x.powi(deg), -1.0, 1.0);
            let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
            assert!((v - exact).abs() < 1e-14, "degree {deg}: {v} vs {exact}");
        }
        // the embedded Gauss rule is exact to degree 13, so the error estimate vanishes there
        let (_, err) = gk15(&|x: f64| x.powi(12), 0.0, 1.0);
        assert!(err < 1e-15);
    }

    #[test]
    fn adaptive_handles_kinks_and_peaks() {
        let v = integrate(&|x: f64| x.abs(), -1.0, 2.0, 1e-13).unwrap();
        assert_relative_eq!(v, 2.5, epsilon = 1e-12);
        let v = integrate(&|x: f64| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-10).unwrap();
        let exact = 2.0 * (1.0f64 / 1e-2).atan() / 1e-2;
        assert_relative_eq!(v, exact, max_relative = 1e-11);
        assert_eq!(integrate(&|x: f64| x, 0.3, 0.3, 1e-10).unwrap(), 0.0);
    }

    #[test]
    fn adaptive_reports_failure_for_nonintegrable_input() {
        let r = integrate(&|x: f64| 1.0 / x.abs().sqrt().powi(3), -1.0, 1.0, 1e-12);
        assert!(r.is_err());
    }

    #[test]
    fn split_matches_single_interval() {
        let f = |x: f64| (3.0 * x).sin() * x.exp();
        let whole = integrate(&f, -1.0, 1.0, 1e-13).unwrap();
        let split = integrate_split(&f, -1.0, 1.0, &[-0.3, 0.2, 5.0], 1e-13).unwrap();
        assert_relative_eq!(whole, split, epsilon = 1e-13);
    }

    #[test]
    fn gauss_legendre_rules() {
        for n in 1..=12 {
            let rule = gauss_legendre(n);
            let wsum: f64 = rule.1.iter().sum();
            assert_relative_eq!(wsum, 2.0, epsilon = 1e-14);
            for deg in 0..(2 * n) {
                let v = gl_fixed(&|x: f64| x.powi(deg as i32), -1.0, 1.0, &rule);
                let exact = if deg % 2 == 0 { 2.0 / (deg as f64 + 1.0) } else { 0.0 };
                assert!((v - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn neumaier_recovers_cancelled_terms() {
        let mut s = Neumaier::default();
        for x in [1.0, 1e100, 1.0, -1e100] {
            s.add(x);
        }
        assert_eq!(s.total(), 2.0);
    }
}
