use std::fmt::Write as _;
use std::path::Path;

use refgreen::classify::{check_uniqueness, detect_case, Case, CaseTag};
use refgreen::kernels::composed_kernel;
use refgreen::involution::original_residual;
use refgreen::oracle::collocation_solve;
use refgreen::signs::{check_mixed_positivity, classify_sign};
use refgreen::solver::{residual, solve, Diagnostics, Outcome, Solution, SolveOptions};
use refgreen::Error;
use serde::Serialize;

use crate::input::{self, Loaded};
use crate::{CliError, Format, EXIT_NO_SOLUTION, EXIT_NUMERICAL};

/// Text to emit and the exit code to finish with.
pub struct Emit {
    pub text: String,
    pub code: u8,
}

impl Emit {
    fn ok(text: String) -> Emit {
        Emit { text, code: 0 }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    #[serde(flatten)]
    tag: &'a CaseTag,
    half_width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    involution: Option<&'a str>,
}

pub fn classify(path: &Path, tol: f64) -> Result<Emit, CliError> {
    let loaded = input::load(path)?;
    let p = loaded.reflection();
    let tag = detect_case(p, tol)?;
    let involution = match &loaded {
        Loaded::Involution { involution, .. } => Some(involution.as_str()),
        Loaded::Reflection(_) => None,
    };
    Ok(Emit::ok(json(&ClassifyReport {
        tag: &tag,
        half_width: p.half_width(),
        involution,
    })))
}

#[derive(Serialize)]
struct SolveReport {
    outcome: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    original_residual: Option<f64>,
    diagnostics: Diagnostics,
}

fn solve_report(out: &Outcome, diagnostics: &Diagnostics) -> SolveReport {
    let (condition_value, contraction_bound) = match out {
        Outcome::NoSolution { condition_value, .. } => (Some(*condition_value), None),
        Outcome::NotContractive { bound } => (None, Some(*bound)),
        _ => (None, None),
    };
    SolveReport {
        outcome: out.name(),
        condition_value,
        contraction_bound,
        original_residual: None,
        diagnostics: diagnostics.clone(),
    }
}

fn outcome_code(out: &Outcome) -> u8 {
    match out {
        Outcome::Unique(_) | Outcome::Family { .. } => 0,
        Outcome::NoSolution { .. } => EXIT_NO_SOLUTION,
        Outcome::NotContractive { .. } => EXIT_NUMERICAL,
    }
}

fn write_rows(header: &str, rows: impl Iterator<Item = (f64, Vec<f64>)>) -> String {
    let mut s = String::new();
    s.push_str(header);
    s.push('\n');
    for (t, vals) in rows {
        write!(s, "{:.16e}", t + 0.0).unwrap();
        for v in vals {
            write!(s, ",{v:.16e}").unwrap();
        }
        s.push('\n');
    }
    s
}

fn nodes(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let n = n.max(2);
    (0..n).map(move |i| {
        if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    })
}

pub fn solve_cmd(path: &Path, grid: usize, opts: &SolveOptions, format: Format) -> Result<Emit, CliError> {
    let loaded = input::load(path)?;
    let p = loaded.reflection();
    let result = solve(p, opts)?;
    let mut report = solve_report(&result.outcome, &result.diagnostics);
    let code = outcome_code(&result.outcome);

    let (lo, hi, column) = match &loaded {
        Loaded::Reflection(_) => (-p.half_width(), p.half_width(), "u"),
        Loaded::Involution { transformed, .. } => {
            let (lo, hi) = transformed.inv.domain();
            (lo, hi, "x")
        }
    };
    // maps a reflection-problem solution to the file's own variable
    let pulled = |y: &Solution| -> Box<dyn Fn(f64) -> f64 + Send + Sync> {
        match &loaded {
            Loaded::Reflection(_) => {
                let y = y.clone();
                Box::new(move |t| y.eval(t))
            }
            Loaded::Involution { transformed, .. } => Box::new(transformed.pull_back(y)),
        }
    };
    if let Loaded::Involution { original, transformed, .. } = &loaded {
        if let Some(y) = result.outcome.member(0.0) {
            let x = transformed.pull_back(&y);
            report.original_residual = Some(original_residual(original, &transformed.inv, &x, grid).residual_sup);
        }
    }

    let text = match (format, &result.outcome) {
        (Format::Report, _) | (_, Outcome::NoSolution { .. } | Outcome::NotContractive { .. }) => json(&report),
        (Format::Csv, Outcome::Unique(u)) => {
            let x = pulled(u);
            write_rows(&format!("t,{column}"), nodes(lo, hi, grid).map(|t| (t, vec![x(t)])))
        }
        (Format::Csv, Outcome::Family { particular, direction }) => {
            let (x, v) = (pulled(particular), pulled(direction));
            write_rows("t,particular,direction", nodes(lo, hi, grid).map(|t| (t, vec![x(t), v(t)])))
        }
    };
    if format == Format::Csv && code == 0 {
        eprintln!("{}", serde_json::to_string(&report).expect("reports serialize"));
    }
    Ok(Emit { text, code })
}

#[derive(Serialize)]
struct KernelSummary {
    case: Case,
    k: Option<f64>,
    a_total: f64,
    grid: usize,
    min: f64,
    max: f64,
}

pub fn kernel(path: &Path, grid: usize, tol: f64, format: Format) -> Result<Emit, CliError> {
    let loaded = input::load(path)?;
    let p = loaded.reflection();
    let tag = detect_case(p, tol)?;
    let k = composed_kernel(p, &tag)?;
    let text = match format {
        Format::Csv => {
            let mut buf = Vec::new();
            k.write_csv(grid, &mut buf).map_err(|e| CliError::numerical(e.to_string()))?;
            String::from_utf8(buf).expect("CSV is ASCII")
        }
        Format::Report => {
            let (min, max) = k.grid_extrema(grid);
            json(&KernelSummary {
                case: tag.case,
                k: tag.k,
                a_total: tag.a_total,
                grid,
                min,
                max,
            })
        }
    };
    Ok(Emit::ok(text))
}

pub struct MixedArgs {
    pub omega: Option<f64>,
    pub w: Option<f64>,
    pub d: Option<f64>,
}

pub fn sign(path: &Path, tol: f64, mixed: &MixedArgs) -> Result<Emit, CliError> {
    let loaded = input::load(path)?;
    let p = loaded.reflection();
    let tag = detect_case(p, tol)?;
    if tag.case == Case::Mixed {
        let (Some(omega), Some(w), Some(d)) = (mixed.omega, mixed.w, mixed.d) else {
            return Err(CliError::input(
                "the mixed case needs --omega, --w and --d for the positivity check",
            ));
        };
        return Ok(Emit::ok(json(&check_mixed_positivity(p, omega, w, d)?)));
    }
    let k = composed_kernel(p, &tag)?;
    Ok(Emit::ok(json(&classify_sign(p, &tag, &k)?)))
}

#[derive(Serialize)]
struct Check {
    name: &'static str,
    value: f64,
    limit: f64,
    pass: bool,
}

impl Check {
    fn at_most(name: &'static str, value: f64, limit: f64) -> Check {
        Check {
            name,
            value,
            limit,
            pass: value <= limit,
        }
    }
}

#[derive(Serialize)]
struct VerifyReport {
    case: Case,
    k: Option<f64>,
    a_total: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    uniqueness_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle_condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    contraction_bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    checks: Vec<Check>,
    passed: bool,
}

/// Largest gap tolerated between the kernel-path solution and the collocation oracle.
const ORACLE_GAP: f64 = 5e-4;

pub fn verify(path: &Path, grid: usize, oracle_n: usize, opts: &SolveOptions) -> Result<Emit, CliError> {
    let loaded = input::load(path)?;
    let p = loaded.reflection();
    let tag = detect_case(p, opts.classify_tol)?;
    let mut report = VerifyReport {
        case: tag.case,
        k: tag.k,
        a_total: tag.a_total,
        uniqueness_ok: None,
        outcome: None,
        condition_value: None,
        oracle_condition: None,
        contraction_bound: None,
        iterations: None,
        checks: Vec::new(),
        passed: false,
    };
    if tag.case.has_kernel() {
        let ok = check_uniqueness(&tag)?;
        report.uniqueness_ok = Some(ok);
        if !ok {
            return Ok(Emit {
                text: json(&report),
                code: EXIT_NO_SOLUTION,
            });
        }
    }
    let result = match solve(p, opts) {
        Ok(r) => r,
        Err(Error::Resonance(_)) => {
            report.uniqueness_ok = Some(false);
            return Ok(Emit {
                text: json(&report),
                code: EXIT_NO_SOLUTION,
            });
        }
        Err(e) => return Err(e.into()),
    };
    report.outcome = Some(result.outcome.name());
    report.contraction_bound = result.diagnostics.bound;
    report.iterations = result.diagnostics.iterations;
    report.condition_value = result.diagnostics.condition_value;
    let code = outcome_code(&result.outcome);
    if code != 0 {
        return Ok(Emit {
            text: json(&report),
            code,
        });
    }

    let members: Vec<Solution> = match &result.outcome {
        Outcome::Unique(u) => vec![u.clone()],
        out => [-1.0, 0.0, 1.0].iter().filter_map(|&c| out.member(c)).collect(),
    };
    let (mut res, mut gap) = (0.0f64, 0.0f64);
    for u in &members {
        let r = residual(p, u, grid);
        res = res.max(r.residual_sup);
        gap = gap.max(r.bc_gap);
    }
    report.checks.push(Check::at_most("residual", res, opts.tol));
    report.checks.push(Check::at_most("boundary_gap", gap, opts.tol));
    if let Loaded::Involution { original, transformed, .. } = &loaded {
        let x = transformed.pull_back(&members[0]);
        let r = original_residual(original, &transformed.inv, &x, grid);
        report.checks.push(Check::at_most("original_residual", r.residual_sup, opts.tol));
        report.checks.push(Check::at_most("original_boundary_gap", r.bc_gap, opts.tol));
    }
    if let Outcome::Unique(u) = &result.outcome {
        match collocation_solve(p, oracle_n) {
            Ok(g) => {
                report.oracle_condition = Some(g.condition);
                report.checks.push(Check::at_most("oracle_gap", g.max_error(|t| u.eval(t)), ORACLE_GAP));
            }
            Err(Error::Singular { condition }) => {
                report.oracle_condition = Some(condition);
                report.checks.push(Check::at_most("oracle_condition", condition, refgreen::oracle::SINGULAR_CONDITION));
            }
            Err(e) => return Err(e.into()),
        }
    }
    report.passed = report.checks.iter().all(|c| c.pass);
    let code = if report.passed { 0 } else { EXIT_NUMERICAL };
    Ok(Emit {
        text: json(&report),
        code,
    })
}

#[derive(Serialize)]
struct TransformedFile {
    #[serde(rename = "T")]
    half_width: f64,
    a: String,
    b: String,
    h: String,
}

pub fn transform(path: &Path) -> Result<Emit, CliError> {
    let file = input::read(path)?;
    if file.involution.is_none() {
        return Err(CliError::input("`transform` needs an `involution` key"));
    }
    if file.fixed_point.is_none() {
        return Err(CliError::input("`involution` needs `fixed_point`"));
    }
    let loaded = input::load(path)?;
    let Loaded::Involution { transformed, involution, .. } = &loaded else {
        unreachable!("an involution key was present")
    };
    let p = &transformed.problem;
    let text_of = |f: &refgreen::funcspace::ScalarFn, name: &str| {
        f.expr()
            .map(|e| e.to_string())
            .ok_or_else(|| CliError::numerical(format!("no expression for transformed `{name}`")))
    };
    let out = TransformedFile {
        half_width: p.half_width(),
        a: text_of(&p.a, "a")?,
        b: text_of(&p.b, "b")?,
        h: text_of(&p.h, "h")?,
    };
    let (lo, hi) = transformed.inv.domain();
    let mut text = format!(
        "# reflection form of the problem with involution {involution} on [{lo}, {hi}], fixed point {}\n",
        transformed.inv.fixed_point()
    );
    text.push_str(&toml::to_string(&out).map_err(|e| CliError::numerical(e.to_string()))?);
    Ok(Emit::ok(text))
}
