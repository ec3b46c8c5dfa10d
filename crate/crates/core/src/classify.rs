//! Case detection for the reflection problem.
//!
//! With `f_e`, `f_o` the even and odd parts of a coefficient:
//!
//! * C1: `a` even, `b_e = k a`, `|k| < 1`
//! * C2: `a` even, `b_e = k a`, `|k| > 1`
//! * C3: `a` even, `b_e = a`
//! * C4: `a` even, `b_e = -a`
//! * C5: `a_e = b_e = 0`
//! * Mixed: anything else.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::funcspace::{parity_decompose, symmetric_grid};
use crate::problem::ProblemSpec;

/// Default classification tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Margin used by [`check_uniqueness`].
pub const UNIQUENESS_MARGIN: f64 = 1e-8;

const CLASSIFY_GRID: usize = 513;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Case {
    C1,
    C2,
    C3,
    C4,
    C5,
    Mixed,
}

impl Case {
    /// Cases handled by a composed Green's kernel.
    pub fn has_kernel(self) -> bool {
        matches!(self, Case::C1 | Case::C2 | Case::C3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseTag {
    pub case: Case,
    /// Proportionality constant in `b_e = k a` (C1–C4 only).
    pub k: Option<f64>,
    /// `A(T) = ∫₀ᵀ a`.
    pub a_total: f64,
    /// Outcome of the uniqueness condition for C1–C3; `None` otherwise.
    pub uniqueness_ok: Option<bool>,
    /// `sup |b_e - k a|` on the classification grid.
    pub fit_residual: f64,
    /// `sup |a_o|` on the classification grid.
    pub odd_a: f64,
    pub sup_a: f64,
}

impl CaseTag {
    /// Tag for a problem already known to be in case C1–C4 with the given
    /// `k` and `A(T)`.
    pub fn proportional(k: f64, a_total: f64) -> CaseTag {
        let case = case_from_k(k, DEFAULT_TOL);
        let k = match case {
            Case::C3 => 1.0,
            Case::C4 => -1.0,
            _ => k,
        };
        let mut tag = CaseTag {
            case,
            k: Some(k),
            a_total,
            uniqueness_ok: None,
            fit_residual: 0.0,
            odd_a: 0.0,
            sup_a: 0.0,
        };
        if case.has_kernel() {
            tag.uniqueness_ok = check_uniqueness(&tag).ok();
        }
        tag
    }
}

fn case_from_k(k: f64, tol: f64) -> Case {
    if (k - 1.0).abs() <= tol {
        Case::C3
    } else if (k + 1.0).abs() <= tol {
        Case::C4
    } else if k.abs() < 1.0 {
        Case::C1
    } else {
        Case::C2
    }
}

/// Classifies a problem. The forcing `h` plays no role.
pub fn detect_case(p: &ProblemSpec, tol: f64) -> Result<CaseTag> {
    let grid = symmetric_grid(CLASSIFY_GRID, p.half_width());
    let pa = parity_decompose(&p.a);
    let pb = parity_decompose(&p.b);
    let mut a_vals = Vec::with_capacity(grid.len());
    let mut b_even = Vec::with_capacity(grid.len());
    let (mut sup_a, mut sup_ae, mut sup_ao, mut sup_be) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for &t in &grid {
        let a = p.a.eval(t);
        let be = pb.even.eval(t);
        sup_a = sup_a.max(a.abs());
        sup_ae = sup_ae.max(pa.even.eval(t).abs());
        sup_ao = sup_ao.max(pa.odd.eval(t).abs());
        sup_be = sup_be.max(be.abs());
        a_vals.push(a);
        b_even.push(be);
    }
    if !sup_a.is_finite() || !sup_be.is_finite() {
        return Err(Error::InvalidInput(
            "coefficients are not finite on the grid".to_string(),
        ));
    }
    if sup_a == 0.0 {
        return Err(Error::InvalidInput(
            "a vanishes identically; the problem is a plain ODE".to_string(),
        ));
    }
    let a_total = p.a_total();
    let mut tag = CaseTag {
        case: Case::Mixed,
        k: None,
        a_total,
        uniqueness_ok: None,
        fit_residual: f64::NAN,
        odd_a: sup_ao,
        sup_a,
    };
    if sup_ae <= tol && sup_be <= tol {
        tag.case = Case::C5;
        return Ok(tag);
    }
    // trapezoid-weighted L² projection of b_e onto a
    let n = grid.len();
    let weight = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let (mut ab, mut aa) = (0.0, 0.0);
    for i in 0..n {
        ab += weight(i) * b_even[i] * a_vals[i];
        aa += weight(i) * a_vals[i] * a_vals[i];
    }
    let k = ab / aa;
    let fit = a_vals
        .iter()
        .zip(&b_even)
        .fold(0.0f64, |m, (a, be)| m.max((be - k * a).abs()));
    tag.fit_residual = fit;
    let scale = tol * (1.0 + sup_a);
    if fit <= scale && sup_ao <= scale {
        tag.case = case_from_k(k, tol);
        tag.k = Some(match tag.case {
            Case::C3 => 1.0,
            Case::C4 => -1.0,
            _ => k,
        });
        if tag.case.has_kernel() {
            tag.uniqueness_ok = Some(check_uniqueness(&tag)?);
        }
    }
    Ok(tag)
}

/// Distance from `x` to the nearest point of `offset + πℤ`.
fn distance_to_lattice(x: f64, offset: f64) -> f64 {
    let y = (x - offset) / PI;
    (y - y.round()).abs() * PI
}

/// The uniqueness condition for C1–C3:
///
/// * C1: `√(1-k²)|A(T)|` stays `1e-8` away from `nπ` and `π/2 + nπ`;
/// * C2, C3: `|A(T)| > 1e-8`.
pub fn check_uniqueness(tag: &CaseTag) -> Result<bool> {
    let at = tag.a_total.abs();
    match tag.case {
        Case::C1 => {
            let k = tag.k.ok_or_else(|| Error::InvalidInput("C1 tag without k".into()))?;
            let x = (1.0 - k * k).sqrt() * at;
            Ok(distance_to_lattice(x, 0.0) > UNIQUENESS_MARGIN
                && distance_to_lattice(x, FRAC_PI_2) > UNIQUENESS_MARGIN)
        }
        Case::C2 | Case::C3 => Ok(at > UNIQUENESS_MARGIN),
        other => Err(Error::NotApplicable(format!(
            "uniqueness conditions are defined for C1-C3, not {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn classify(t: f64, a: &str, b: &str) -> CaseTag {
        detect_case(&ProblemSpec::parse(t, a, b, "0").unwrap(), DEFAULT_TOL).unwrap()
    }

    #[test]
    fn worked_example_is_c1_with_zero_k() {
        let tag = classify(1.5, "cos(pi*t)", "sinh(t)");
        assert_eq!(tag.case, Case::C1);
        assert!(tag.k.unwrap().abs() < 1e-12);
        assert_eq!(tag.uniqueness_ok, Some(true));
    }

    #[test]
    fn named_cases() {
        assert_eq!(classify(1.0, "t", "t^3").case, Case::C5);
        let c4 = classify(1.0, "1", "-1+t");
        assert_eq!(c4.case, Case::C4);
        assert_eq!(c4.k, Some(-1.0));
        assert_eq!(c4.uniqueness_ok, None);
        let c3 = classify(1.0, "2+cos(t)", "2+cos(t)+t^3");
        assert_eq!(c3.case, Case::C3);
        assert_eq!(c3.uniqueness_ok, Some(true));
        let c2 = classify(1.0, "1", "3 + sin(t)");
        assert_eq!(c2.case, Case::C2);
        assert!((c2.k.unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(classify(1.0, "0.3", "0.2*cos(pi*t)").case, Case::Mixed);
        // odd part in a breaks the proportional cases
        assert_eq!(classify(1.0, "1+t", "0.5").case, Case::Mixed);
    }

    #[test]
    fn a_identically_zero_is_rejected() {
        let p = ProblemSpec::parse(1.0, "0", "1", "1").unwrap();
        assert!(matches!(detect_case(&p, DEFAULT_TOL), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn uniqueness_examples() {
        assert!(!check_uniqueness(&CaseTag::proportional(0.0, PI)).unwrap());
        assert!(check_uniqueness(&CaseTag::proportional(0.0, 0.5)).unwrap());
        assert!(!check_uniqueness(&CaseTag::proportional(0.0, FRAC_PI_2)).unwrap());
        assert!(!check_uniqueness(&CaseTag::proportional(1.0, 0.0)).unwrap());
        assert!(check_uniqueness(&CaseTag::proportional(1.0, 0.3)).unwrap());
        assert!(check_uniqueness(&CaseTag::proportional(2.0, 100.0)).unwrap());
        assert!(!check_uniqueness(&CaseTag::proportional(2.0, 0.0)).unwrap());
        let c4 = CaseTag::proportional(-1.0, 1.0);
        assert!(matches!(check_uniqueness(&c4), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn resonant_detection_from_problem() {
        let tag = classify(PI, "1", "0");
        assert_eq!(tag.case, Case::C1);
        assert_eq!(tag.uniqueness_ok, Some(false));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn forcing_does_not_change_the_tag(
            c in 0.2f64..2.0, k in -3.0f64..3.0, odd in -1.0f64..1.0, mixed in proptest::bool::ANY,
        ) {
            let a = if mixed { format!("{c} + 0.3*t") } else { format!("{c}*(1 + 0.2*cos(t))") };
            let b = format!("{k}*({a}) + {odd}*sin(t)");
            let p = ProblemSpec::parse(1.0, &a, &b, "1 + t").unwrap();
            let q = p.with_forcing(p.h.scale(2.0));
            let tp = detect_case(&p, DEFAULT_TOL).unwrap();
            let tq = detect_case(&q, DEFAULT_TOL).unwrap();
            prop_assert_eq!(&tp, &tq);
            if let Some(k_fit) = tp.k {
                let pb = parity_decompose(&p.b);
                for t in symmetric_grid(101, 1.0) {
                    let r = (pb.even.eval(t) - k_fit * p.a.eval(t)).abs();
                    prop_assert!(r <= DEFAULT_TOL * (1.0 + tp.sup_a));
                }
            }
        }
    }
}
