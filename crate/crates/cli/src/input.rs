//! Problem files.
//!
//! ```toml
//! T = 1.5                       # half-width (number or constant expression)
//! a = "cos(pi*t)"
//! b = "sinh(t)"
//! h = "cos(pi*t) + sinh(t)"
//! # optional: a general involution on [φ(T), T]
//! involution = "1/t"
//! fixed_point = 1
//! target_half_width = 1        # S, defaults to T - fixed_point
//! bridge = "1 + t/2"           # g on [-S, 0], defaults to the affine bridge
//! ```

use std::path::Path;

use refgreen::expr;
use refgreen::funcspace::ScalarFn;
use refgreen::involution::{build_f, transform_problem, InvolutionProblem, Transformed};
use refgreen::problem::ProblemSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    fn value(&self, key: &str) -> Result<f64, CliError> {
        match self {
            Scalar::Number(v) => Ok(*v),
            Scalar::Text(s) => {
                let e = expr::parse(s).map_err(|e| CliError::input(format!("`{key}`: {e}")))?;
                if !e.is_constant() {
                    return Err(CliError::input(format!("`{key}` must be a constant, got `{s}`")));
                }
                e.eval(0.0).map_err(|e| CliError::input(format!("`{key}`: {e}")))
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "T")]
    pub half_width: Scalar,
    pub a: String,
    pub b: String,
    pub h: String,
    pub involution: Option<String>,
    pub fixed_point: Option<Scalar>,
    pub target_half_width: Option<Scalar>,
    pub bridge: Option<String>,
}

/// A loaded problem: either a reflection problem on `[-T, T]`, or a problem
/// with a general involution together with its reflection form.
pub enum Loaded {
    Reflection(ProblemSpec),
    Involution {
        original: InvolutionProblem,
        transformed: Box<Transformed>,
        involution: String,
    },
}

impl Loaded {
    /// The reflection problem every command works on.
    pub fn reflection(&self) -> &ProblemSpec {
        match self {
            Loaded::Reflection(p) => p,
            Loaded::Involution { transformed, .. } => &transformed.problem,
        }
    }
}

pub fn read(path: &Path) -> Result<ProblemFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let file = read(path)?;
    let upper = file.half_width.value("T")?;
    let Some(phi_text) = file.involution.as_deref() else {
        if file.fixed_point.is_some() || file.target_half_width.is_some() || file.bridge.is_some() {
            return Err(CliError::input(
                "`fixed_point`, `target_half_width` and `bridge` need `involution`",
            ));
        }
        return Ok(Loaded::Reflection(ProblemSpec::parse(upper, &file.a, &file.b, &file.h)?));
    };
    let (transformed, original) = involution_problem(&file, phi_text, upper)?;
    Ok(Loaded::Involution {
        original,
        transformed: Box::new(transformed),
        involution: phi_text.to_string(),
    })
}

fn involution_problem(
    file: &ProblemFile,
    phi_text: &str,
    upper: f64,
) -> Result<(Transformed, InvolutionProblem), CliError> {
    let t0 = file
        .fixed_point
        .as_ref()
        .ok_or_else(|| CliError::input("`involution` needs `fixed_point`"))?
        .value("fixed_point")?;
    let half = match &file.target_half_width {
        Some(s) => s.value("target_half_width")?,
        None => upper - t0,
    };
    // φ must be defined at T before the domain [φ(T), T] is known
    let phi_expr = expr::parse(phi_text).map_err(|e| CliError::input(format!("`involution`: {e}")))?;
    let lo = phi_expr
        .eval(upper)
        .map_err(|e| CliError::input(format!("`involution` at T: {e}")))?;
    if !(lo < upper) {
        return Err(CliError::input(format!("need φ(T) < T, got φ(T) = {lo}")));
    }
    let on = |text: &str, field: &str| ScalarFn::parse_on(text, lo, upper, field);
    let phi = on(phi_text, "involution")?;
    let bridge = match &file.bridge {
        Some(g) => Some(ScalarFn::parse_on(g, -half, 0.0, "bridge")?),
        None => None,
    };
    let inv = build_f(&phi, t0, upper, bridge.as_ref(), half)?;
    let original = InvolutionProblem::normalized(on(&file.a, "a")?, on(&file.b, "b")?, on(&file.h, "h")?);
    let transformed = transform_problem(&original, &inv)?;
    Ok((transformed, original))
}
