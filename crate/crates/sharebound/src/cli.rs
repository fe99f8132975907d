//! Command-line front end.
//!
//! Problems arrive as TOML documents describing the welfare function,
//! an evaluation grid, tolerances, guarantee constructions, and sharing
//! rules. Subcommands evaluate welfare, export guarantee curves as CSV,
//! run rules on profiles, and execute verification checks.
//!
//! Exit codes: 0 success (and all checks passed), 1 a verification
//! check failed, 2 malformed input or any other error.

use crate::guarantees::{
    lh_guarantee, mix_guarantees, quota_guarantees, sample_curve, simple_guarantee,
    stand_alone_guarantee, tangent_guarantee, transform_guarantee, unanimity_guarantee_default,
    Guarantee, GuaranteeCurve,
};
use crate::rules::{implied_guarantees, SharingRule};
use crate::verify::{self, Grid, Tolerances};
use crate::welfare::{CustomEval, Function1D, Term, TypeInterval, WelfareSpec};
use crate::{Error, Result};
use clap::{Parser, Subcommand};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::sync::Arc;

// ---------------------------------------------------------------------
// Document format
// ---------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRoot {
    problem: DocProblem,
    welfare: Vec<DocTerm>,
    grid: Option<DocGrid>,
    tolerances: Option<DocTolerances>,
    #[serde(default)]
    guarantee: Vec<DocGuarantee>,
    #[serde(default)]
    rule: Vec<DocRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocProblem {
    interval: [f64; 2],
    n: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocTerm {
    kind: String,
    f: Option<DocFunction>,
    w: Option<Vec<DocFunction>>,
    w0: Option<DocFunction>,
    theta: Option<DocFunction>,
    base: Option<DocBaseWelfare>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocBaseWelfare {
    interval: [f64; 2],
    welfare: Vec<DocTerm>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocFunction {
    kind: Option<String>,
    breakpoints: Option<Vec<f64>>,
    coeffs: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocGrid {
    m: Option<usize>,
    anchors: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocTolerances {
    feasibility: Option<f64>,
    tightness: Option<f64>,
    derivative: Option<f64>,
    equality: Option<f64>,
    touch: Option<f64>,
    modularity: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocGuarantee {
    kind: String,
    label: Option<String>,
    c: Option<Vec<f64>>,
    c0: Option<f64>,
    ell: Option<usize>,
    h: Option<usize>,
    /// Scalar for `tangent`, nested guarantee table for `mix`.
    a: Option<toml::Value>,
    b: Option<toml::Value>,
    slope: Option<f64>,
    q: Option<usize>,
    p_minus: Option<f64>,
    p_plus: Option<f64>,
    lambda: Option<f64>,
    theta: Option<DocFunction>,
    base: Option<toml::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DocRule {
    kind: String,
    name: Option<String>,
    c: Option<Vec<f64>>,
    lower: Option<String>,
    upper: Option<String>,
}

/// A fully built problem: welfare, grid, tolerances, labeled guarantee
/// curves, and named rules.
pub struct Problem {
    pub spec: Arc<WelfareSpec>,
    pub grid: Grid,
    pub tol: Tolerances,
    pub guarantees: Vec<Guarantee>,
    pub rules: Vec<(String, SharingRule)>,
}

fn build_function(df: &DocFunction) -> Result<Function1D> {
    if let Some(kind) = &df.kind {
        if df.breakpoints.is_some() || df.coeffs.is_some() {
            return Err(Error::Document(format!(
                "function kind \"{kind}\" takes no breakpoints or coeffs"
            )));
        }
        return match kind.as_str() {
            "exp" => Ok(Function1D::Exp),
            "log" => Ok(Function1D::Log),
            other => Err(Error::Document(format!("unknown function kind \"{other}\""))),
        };
    }
    match (&df.breakpoints, &df.coeffs) {
        (Some(b), Some(c)) => Function1D::piecewise(b.clone(), c.clone()),
        _ => Err(Error::Document(
            "function needs either kind = \"exp\"/\"log\" or breakpoints with coeffs".into(),
        )),
    }
}

fn build_terms(doc_terms: &[DocTerm], n: usize) -> Result<Vec<Term>> {
    let mut terms = Vec::with_capacity(doc_terms.len());
    for dt in doc_terms {
        let reject = |field: &str, present: bool| -> Result<()> {
            if present {
                Err(Error::Document(format!(
                    "welfare kind \"{}\" takes no field \"{field}\"",
                    dt.kind
                )))
            } else {
                Ok(())
            }
        };
        let term = match dt.kind.as_str() {
            "substitute_inputs" => {
                reject("w", dt.w.is_some())?;
                reject("w0", dt.w0.is_some())?;
                reject("theta", dt.theta.is_some())?;
                reject("base", dt.base.is_some())?;
                let f = dt.f.as_ref().ok_or_else(|| {
                    Error::Document("substitute_inputs needs field \"f\"".into())
                })?;
                Term::SubstituteInputs(build_function(f)?)
            }
            "rank_separable" => {
                reject("f", dt.f.is_some())?;
                reject("w0", dt.w0.is_some())?;
                reject("theta", dt.theta.is_some())?;
                reject("base", dt.base.is_some())?;
                let w = dt.w.as_ref().ok_or_else(|| {
                    Error::Document("rank_separable needs field \"w\"".into())
                })?;
                Term::RankSeparable(w.iter().map(build_function).collect::<Result<_>>()?)
            }
            "separable_additive" => {
                reject("f", dt.f.is_some())?;
                reject("w", dt.w.is_some())?;
                reject("theta", dt.theta.is_some())?;
                reject("base", dt.base.is_some())?;
                let w0 = dt.w0.as_ref().ok_or_else(|| {
                    Error::Document("separable_additive needs field \"w0\"".into())
                })?;
                Term::SeparableAdditive(build_function(w0)?)
            }
            "transformed" => {
                reject("f", dt.f.is_some())?;
                reject("w", dt.w.is_some())?;
                reject("w0", dt.w0.is_some())?;
                let theta = dt.theta.as_ref().ok_or_else(|| {
                    Error::Document("transformed needs field \"theta\"".into())
                })?;
                let base = dt.base.as_ref().ok_or_else(|| {
                    Error::Document("transformed needs field \"base\"".into())
                })?;
                let base_iv = TypeInterval::new(base.interval[0], base.interval[1])?;
                let base_terms = build_terms(&base.welfare, n)?;
                Term::Transformed {
                    base: WelfareSpec::new(base_iv, n, base_terms)?,
                    theta: build_function(theta)?,
                }
            }
            "product" => {
                reject("f", dt.f.is_some())?;
                reject("w", dt.w.is_some())?;
                reject("w0", dt.w0.is_some())?;
                reject("theta", dt.theta.is_some())?;
                reject("base", dt.base.is_some())?;
                Term::Custom(CustomEval {
                    name: "product".into(),
                    f: Arc::new(|x: &[f64]| x.iter().product()),
                })
            }
            other => {
                return Err(Error::Document(format!("unknown welfare kind \"{other}\"")))
            }
        };
        terms.push(term);
    }
    Ok(terms)
}

/// The aggregate F of a pure commons welfare F(x_1 + ... + x_n).
fn single_substitute(spec: &WelfareSpec) -> Result<Function1D> {
    match spec.terms() {
        [Term::SubstituteInputs(f)] => Ok(f.clone()),
        _ => Err(Error::UnsupportedWelfare(
            "this construction needs a welfare of the exact form F(x_1 + ... + x_n)".into(),
        )),
    }
}

/// The value function F of a pure quota welfare F(q-th highest), along
/// with a consistency check that rank q is the only active component.
fn single_quota_component(spec: &WelfareSpec, q: usize) -> Result<Function1D> {
    let ws = match spec.terms() {
        [Term::RankSeparable(ws)] => ws,
        _ => {
            return Err(Error::UnsupportedWelfare(
                "quota bounds need a rank-separable welfare with one active rank".into(),
            ))
        }
    };
    let is_zero = |f: &Function1D| match f {
        Function1D::Piecewise(p) => p
            .coefficients()
            .iter()
            .all(|c| c.iter().all(|&v| v == 0.0)),
        _ => false,
    };
    let active: Vec<usize> = ws
        .iter()
        .enumerate()
        .filter(|(_, f)| !is_zero(f))
        .map(|(k, _)| k)
        .collect();
    match active.as_slice() {
        [k] if *k + 1 == q => Ok(ws[*k].clone()),
        [k] => Err(Error::InvalidParameter(format!(
            "active rank is {} but q = {q} was requested",
            k + 1
        ))),
        _ => Err(Error::UnsupportedWelfare(
            "quota bounds need exactly one active rank component".into(),
        )),
    }
}

fn parse_nested_guarantee(v: &toml::Value, what: &str) -> Result<DocGuarantee> {
    v.clone()
        .try_into::<DocGuarantee>()
        .map_err(|e| Error::Document(format!("{what}: {e}")))
}

fn build_guarantee(spec: &Arc<WelfareSpec>, dg: &DocGuarantee) -> Result<Vec<Guarantee>> {
    let iv = spec.interval();
    let n = spec.n();
    let scalar = |v: &Option<toml::Value>, what: &str| -> Result<Option<f64>> {
        match v {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(*x)),
            Some(toml::Value::Integer(x)) => Ok(Some(*x as f64)),
            Some(_) => Err(Error::Document(format!("{what} must be a number"))),
        }
    };
    let mut out: Vec<Guarantee> = match dg.kind.as_str() {
        "una" => vec![unanimity_guarantee_default(spec)?],
        "simple" => {
            let c = dg
                .c
                .as_ref()
                .ok_or_else(|| Error::Document("simple needs field \"c\"".into()))?;
            vec![simple_guarantee(spec, c)?]
        }
        "stand_alone" => {
            let c0 = dg
                .c0
                .ok_or_else(|| Error::Document("stand_alone needs field \"c0\"".into()))?;
            vec![stand_alone_guarantee(spec, c0)?]
        }
        "lh" => {
            let f = single_substitute(spec)?;
            let ell = dg
                .ell
                .ok_or_else(|| Error::Document("lh needs field \"ell\"".into()))?;
            let h = dg
                .h
                .ok_or_else(|| Error::Document("lh needs field \"h\"".into()))?;
            vec![lh_guarantee(&f, n, ell, h, iv)?]
        }
        "tangent" => {
            let f = single_substitute(spec)?;
            let a = scalar(&dg.a, "tangent point \"a\"")?
                .ok_or_else(|| Error::Document("tangent needs field \"a\"".into()))?;
            vec![tangent_guarantee(&f, n, a, iv, dg.slope)?]
        }
        "quota" => {
            let q = dg
                .q
                .ok_or_else(|| Error::Document("quota needs field \"q\"".into()))?;
            let p_minus = dg
                .p_minus
                .ok_or_else(|| Error::Document("quota needs field \"p_minus\"".into()))?;
            let p_plus = dg
                .p_plus
                .ok_or_else(|| Error::Document("quota needs field \"p_plus\"".into()))?;
            let f = single_quota_component(spec, q)?;
            let (lo, hi) = quota_guarantees(&f, n, q, p_minus, p_plus, iv)?;
            vec![lo, hi]
        }
        "transform" => {
            let term = match spec.terms() {
                [t @ Term::Transformed { .. }] => t,
                _ => {
                    return Err(Error::UnsupportedWelfare(
                        "transform guarantees need a welfare that is a single reparametrized term"
                            .into(),
                    ))
                }
            };
            let (base_spec, term_theta) = match term {
                Term::Transformed { base, theta } => (base.clone(), theta.clone()),
                _ => unreachable!(),
            };
            let base_value = dg
                .base
                .as_ref()
                .ok_or_else(|| Error::Document("transform needs field \"base\"".into()))?;
            let base_doc = parse_nested_guarantee(base_value, "transform base")?;
            let base_built = build_guarantee(&base_spec, &base_doc)?;
            let theta = match &dg.theta {
                Some(df) => build_function(df)?,
                None => term_theta,
            };
            base_built
                .iter()
                .map(|g| transform_guarantee(g, &theta, iv))
                .collect::<Result<Vec<_>>>()?
        }
        "mix" => {
            let lambda = dg
                .lambda
                .ok_or_else(|| Error::Document("mix needs field \"lambda\"".into()))?;
            let a_val = dg
                .a
                .as_ref()
                .ok_or_else(|| Error::Document("mix needs guarantee table \"a\"".into()))?;
            let b_val = dg
                .b
                .as_ref()
                .ok_or_else(|| Error::Document("mix needs guarantee table \"b\"".into()))?;
            let ga = build_single(spec, &parse_nested_guarantee(a_val, "mix a")?)?;
            let gb = build_single(spec, &parse_nested_guarantee(b_val, "mix b")?)?;
            vec![mix_guarantees(&ga, &gb, lambda)?]
        }
        other => return Err(Error::Document(format!("unknown guarantee kind \"{other}\""))),
    };
    if let Some(label) = &dg.label {
        match out.len() {
            1 => {
                let g = out.pop().unwrap().with_label(label.clone());
                out.push(g);
            }
            2 => {
                let hi = out.pop().unwrap().with_label(format!("{label}+"));
                let lo = out.pop().unwrap().with_label(format!("{label}-"));
                out = vec![lo, hi];
            }
            _ => {}
        }
    }
    Ok(out)
}

fn build_single(spec: &Arc<WelfareSpec>, dg: &DocGuarantee) -> Result<Guarantee> {
    let mut v = build_guarantee(spec, dg)?;
    if v.len() != 1 {
        return Err(Error::Document(format!(
            "guarantee kind \"{}\" yields {} curves where one is needed",
            dg.kind,
            v.len()
        )));
    }
    Ok(v.remove(0))
}

/// Parse and build a problem document from TOML text.
pub fn parse_problem(text: &str) -> Result<Problem> {
    let doc: DocRoot = toml::from_str(text).map_err(|e| Error::Document(e.to_string()))?;
    build_problem(doc)
}

/// Parse and build a problem document from a file.
pub fn load_problem(path: &Path) -> Result<Problem> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

fn build_problem(doc: DocRoot) -> Result<Problem> {
    let interval = TypeInterval::new(doc.problem.interval[0], doc.problem.interval[1])?;
    let n = doc.problem.n;
    let terms = build_terms(&doc.welfare, n)?;
    let spec = WelfareSpec::new(interval, n, terms)?;

    let mut tol = Tolerances::default();
    if let Some(dt) = &doc.tolerances {
        if let Some(v) = dt.feasibility {
            tol.feasibility = v;
        }
        if let Some(v) = dt.tightness {
            tol.tightness = v;
        }
        if let Some(v) = dt.derivative {
            tol.derivative = v;
        }
        if let Some(v) = dt.equality {
            tol.equality = v;
        }
        if let Some(v) = dt.touch {
            tol.touch = v;
        }
        if let Some(v) = dt.modularity {
            tol.modularity = v;
        }
    }

    let mut guarantees: Vec<Guarantee> = Vec::new();
    for dg in &doc.guarantee {
        guarantees.extend(build_guarantee(&spec, dg)?);
    }
    for i in 0..guarantees.len() {
        for j in (i + 1)..guarantees.len() {
            if guarantees[i].label() == guarantees[j].label() {
                return Err(Error::Document(format!(
                    "duplicate guarantee label \"{}\"; set explicit labels",
                    guarantees[i].label()
                )));
            }
        }
    }

    // Document anchors are validated against the interval; construction
    // anchors (welfare and guarantee kinks) are added on top.
    let (m, user_anchors) = match &doc.grid {
        Some(g) => (g.m.unwrap_or(41), g.anchors.clone().unwrap_or_default()),
        None => (41, Vec::new()),
    };
    let probe = Grid::new(interval, 2, &user_anchors)?;
    drop(probe);
    let mut anchors = user_anchors;
    anchors.extend(spec.anchor_points());
    for g in &guarantees {
        anchors.extend(g.anchors());
    }
    let grid = Grid::new(interval, m, &anchors)?;

    let mut rules: Vec<(String, SharingRule)> = Vec::new();
    for dr in &doc.rule {
        let rule = match dr.kind.as_str() {
            "serial_up" => SharingRule::serial_up(spec.clone()),
            "serial_down" => SharingRule::serial_down(spec.clone()),
            "average_returns" => SharingRule::average_returns(single_substitute(&spec)?),
            "quadratic_transport" => SharingRule::quadratic_transport(),
            "equal_split" => SharingRule::equal_split(spec.clone()),
            "proportional" => SharingRule::proportional(spec.clone()),
            "spread" => {
                let c = dr
                    .c
                    .clone()
                    .ok_or_else(|| Error::Document("spread needs field \"c\"".into()))?;
                SharingRule::spread(c)
            }
            "moving_average" => {
                let lower_label = dr.lower.as_ref().ok_or_else(|| {
                    Error::Document("moving_average needs field \"lower\"".into())
                })?;
                let upper_label = dr.upper.as_ref().ok_or_else(|| {
                    Error::Document("moving_average needs field \"upper\"".into())
                })?;
                let find = |label: &str| -> Result<Guarantee> {
                    guarantees
                        .iter()
                        .find(|g| g.label() == label)
                        .cloned()
                        .ok_or_else(|| Error::UnknownName(label.to_string()))
                };
                SharingRule::moving_average(
                    find(lower_label)?,
                    find(upper_label)?,
                    spec.clone(),
                )
            }
            other => return Err(Error::Document(format!("unknown rule kind \"{other}\""))),
        };
        let name = dr.name.clone().unwrap_or_else(|| dr.kind.clone());
        if rules.iter().any(|(existing, _)| existing == &name) {
            return Err(Error::Document(format!("duplicate rule name \"{name}\"")));
        }
        rules.push((name, rule));
    }

    Ok(Problem {
        spec,
        grid,
        tol,
        guarantees,
        rules,
    })
}

// ---------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn csv_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// Assemble a CSV table from aligned curves: first column x, one column
/// per curve, all values printed with 17 significant digits.
fn curves_to_csv(curves: &[GuaranteeCurve]) -> Result<String> {
    let first = curves
        .first()
        .ok_or_else(|| Error::InvalidParameter("no curves to export".into()))?;
    let rows = first.points.len();
    for c in curves {
        if c.points.len() != rows {
            return Err(Error::Shape {
                expected: rows,
                got: c.points.len(),
            });
        }
    }
    let mut out = String::from("x");
    for c in curves {
        out.push(',');
        out.push_str(&csv_field(&c.label));
    }
    out.push('\n');
    for r in 0..rows {
        out.push_str(&csv_value(first.points[r].0));
        for c in curves {
            out.push(',');
            out.push_str(&csv_value(c.points[r].1));
        }
        out.push('\n');
    }
    Ok(out)
}

fn sanitize_label(label: &str) -> String {
    let mut s: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        s.push_str("curve");
    }
    s
}

// ---------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "sharebound",
    about = "Per-agent bounds on symmetric joint outputs and the rules that honor them",
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Evaluate the welfare of the document at a profile.
    Eval {
        #[arg(long)]
        doc: PathBuf,
        /// Comma-separated profile, e.g. "0.5,1,2".
        #[arg(long)]
        at: String,
    },
    /// Export one guarantee curve as CSV.
    Guarantee {
        #[arg(long)]
        doc: PathBuf,
        /// Label of the guarantee to export.
        #[arg(long)]
        name: String,
        /// Output file; defaults to <label>.csv next to the caller.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a sharing rule on a profile and print the shares.
    Rule {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        name: String,
        #[arg(long)]
        at: String,
    },
    /// Run a verification check; exits 0 on pass, 1 on fail.
    Verify {
        #[arg(long)]
        doc: PathBuf,
        /// One of: feasibility, tightness, bracket, growth, sandwich,
        /// contact, dominance, touch.
        check: String,
        /// Label of the guarantee under test.
        #[arg(long)]
        target: String,
        /// Second label where the check compares two curves.
        #[arg(long)]
        against: Option<String>,
    },
    /// Export every guarantee of the document into one CSV table.
    Curve {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one of the two built-in illustration tables.
    Figure {
        /// 1: bookends of the plateau welfare; 2: the kinked-commons
        /// family with its mixture curve.
        which: u8,
        /// Anchor type for the movable curve of figure 1.
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        /// Mixing weight for figure 2.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        /// Number of uniform grid points.
        #[arg(long, default_value_t = 101)]
        m: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_profile(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad profile entry \"{p}\": {e}")))
        })
        .collect()
}

fn find_guarantee<'a>(problem: &'a Problem, label: &str) -> Result<&'a Guarantee> {
    problem
        .guarantees
        .iter()
        .find(|g| g.label() == label)
        .ok_or_else(|| Error::UnknownName(format!("guarantee \"{label}\"")))
}

fn run_verify(problem: &Problem, check: &str, target: &str, against: Option<&str>) -> Result<bool> {
    let g = find_guarantee(problem, target)?;
    let spec = &problem.spec;
    let grid = &problem.grid;
    let tol = &problem.tol;
    let report = match check {
        "feasibility" => verify::feasibility_gap(g, spec, grid, tol)?,
        "tightness" => verify::tightness_slack(g, spec, grid, tol)?,
        "bracket" => verify::bracket_check(g, spec, tol)?,
        "growth" => verify::growth_order_check(g, spec, grid, tol)?,
        "contact" => verify::contact_derivative_check(g, spec, grid, tol)?,
        "sandwich" => {
            let other = against.ok_or_else(|| {
                Error::InvalidParameter("sandwich needs --against <upper label>".into())
            })?;
            let upper = find_guarantee(problem, other)?;
            verify::sandwich_check(g, upper, spec, grid, tol)?
        }
        "dominance" => {
            let other = against.ok_or_else(|| {
                Error::InvalidParameter("dominance needs --against <label>".into())
            })?;
            let b = find_guarantee(problem, other)?;
            let dom = verify::dominates(g, b, grid, tol)?;
            println!(
                "dominance[{} over {}]: {}",
                g.label(),
                b.label(),
                if dom { "PASS" } else { "FAIL" }
            );
            return Ok(dom);
        }
        "touch" => {
            let clusters = verify::unanimity_touch_count(g, spec, grid, tol)?;
            let pass = clusters <= 1;
            println!(
                "unanimity-touch[{}]: {} ({} cluster{})",
                g.label(),
                if pass { "PASS" } else { "FAIL" },
                clusters,
                if clusters == 1 { "" } else { "s" }
            );
            return Ok(pass);
        }
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown check \"{other}\"; use feasibility, tightness, bracket, growth, \
                 sandwich, contact, dominance, or touch"
            )))
        }
    };
    println!("{report}");
    Ok(report.pass)
}

fn figure_table(which: u8, p: f64, lambda: f64, m: usize) -> Result<Vec<GuaranteeCurve>> {
    match which {
        1 => {
            // Plateau welfare: the best type carries the whole output.
            let iv = TypeInterval::new(0.0, 1.0)?;
            let spec = WelfareSpec::new(
                iv,
                3,
                vec![Term::RankSeparable(vec![
                    Function1D::identity(0.0, 1.0),
                    Function1D::zero(0.0, 1.0),
                    Function1D::zero(0.0, 1.0),
                ])],
            )?;
            let una = unanimity_guarantee_default(&spec)?;
            let g0 = stand_alone_guarantee(&spec, 0.0)?.with_label("g_0+");
            let gh = stand_alone_guarantee(&spec, 1.0)?.with_label("g_H+");
            let gp = stand_alone_guarantee(&spec, p)?.with_label("g_p+");
            let grid = Grid::new(iv, m, &[p])?;
            Ok(vec![
                sample_curve(&una, &grid),
                sample_curve(&g0, &grid),
                sample_curve(&gh, &grid),
                sample_curve(&gp, &grid),
            ])
        }
        2 => {
            // Kinked commons: output starts once the input sum clears a
            // threshold in the middle of the range.
            let iv = TypeInterval::new(0.0, 2.0)?;
            let f = Function1D::piecewise(vec![0.0, 3.0, 6.0], vec![vec![0.0], vec![-3.0, 1.0]])?;
            let spec = WelfareSpec::new(iv, 3, vec![Term::SubstituteInputs(f.clone())])?;
            let una = unanimity_guarantee_default(&spec)?;
            // With every anchor at an endpoint the commons curve is the
            // stand-alone bookend, so it carries the bookend label.
            let g_l = lh_guarantee(&f, 3, 2, 0, iv)?.with_label("g_L");
            let g_h = lh_guarantee(&f, 3, 0, 2, iv)?.with_label("g_H");
            let g_mid = lh_guarantee(&f, 3, 1, 1, iv)?;
            let g_mix = mix_guarantees(&g_l, &g_h, lambda)?.with_label("g_lambda");
            let grid = Grid::new(iv, m, &[1.0])?;
            Ok(vec![
                sample_curve(&una, &grid),
                sample_curve(&g_l, &grid),
                sample_curve(&g_h, &grid),
                sample_curve(&g_mid, &grid),
                sample_curve(&g_mix, &grid),
            ])
        }
        other => Err(Error::InvalidParameter(format!(
            "figure {other} does not exist; use 1 or 2"
        ))),
    }
}

fn run_inner(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Eval { doc, at } => {
            let problem = load_problem(&doc)?;
            let x = parse_profile(&at)?;
            let w = problem.spec.evaluate(&x)?;
            println!("{w}");
            Ok(true)
        }
        Cmd::Guarantee { doc, name, out } => {
            let problem = load_problem(&doc)?;
            let g = find_guarantee(&problem, &name)?;
            let curve = sample_curve(g, &problem.grid);
            let path =
                out.unwrap_or_else(|| PathBuf::from(format!("{}.csv", sanitize_label(&name))));
            std::fs::write(&path, curves_to_csv(std::slice::from_ref(&curve))?)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Cmd::Rule { doc, name, at } => {
            let problem = load_problem(&doc)?;
            let (_, rule) = problem
                .rules
                .iter()
                .find(|(n, _)| n == &name)
                .ok_or_else(|| Error::UnknownName(format!("rule \"{name}\"")))?;
            let x = parse_profile(&at)?;
            let shares = rule.allocate(&x)?;
            let line: Vec<String> = shares.iter().map(|s| format!("{s}")).collect();
            println!("{}", line.join(","));
            Ok(true)
        }
        Cmd::Verify {
            doc,
            check,
            target,
            against,
        } => {
            let problem = load_problem(&doc)?;
            run_verify(&problem, &check, &target, against.as_deref())
        }
        Cmd::Curve { doc, out } => {
            let problem = load_problem(&doc)?;
            if problem.guarantees.is_empty() {
                return Err(Error::Document(
                    "document defines no guarantee curves".into(),
                ));
            }
            let curves: Vec<GuaranteeCurve> = problem
                .guarantees
                .iter()
                .map(|g| sample_curve(g, &problem.grid))
                .collect();
            let path = out.unwrap_or_else(|| PathBuf::from("curves.csv"));
            std::fs::write(&path, curves_to_csv(&curves)?)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
        Cmd::Figure {
            which,
            p,
            lambda,
            m,
            out,
        } => {
            let curves = figure_table(which, p, lambda, m)?;
            let path = out.unwrap_or_else(|| PathBuf::from(format!("figure{which}.csv")));
            std::fs::write(&path, curves_to_csv(&curves)?)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // Help and version requests are not errors.
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run_inner(cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

/// Export the implied bound envelope of a named rule; kept public for
/// downstream tooling built on the library rather than the CLI.
pub fn implied_for_rule(problem: &Problem, rule_name: &str) -> Result<(GuaranteeCurve, GuaranteeCurve)> {
    let (_, rule) = problem
        .rules
        .iter()
        .find(|(n, _)| n == rule_name)
        .ok_or_else(|| Error::UnknownName(format!("rule \"{rule_name}\"")))?;
    implied_guarantees(rule, &problem.spec, &problem.grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_parsing() {
        assert_eq!(parse_profile("0.5, 1,2").unwrap(), vec![0.5, 1.0, 2.0]);
        assert!(parse_profile("0.5,,1").is_err());
        assert!(parse_profile("a,b").is_err());
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(csv_field("una"), "una");
        assert_eq!(csv_field("g_{1,1}"), "\"g_{1,1}\"");
        assert_eq!(csv_field("a\"b"), "\"a\"\"b\"");
        assert_eq!(csv_value(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn label_sanitizing() {
        assert_eq!(sanitize_label("g_{1,1}"), "g__1_1_");
        assert_eq!(sanitize_label("una"), "una");
        assert_eq!(sanitize_label("g_c(0.3,0.7)"), "g_c_0_3_0_7_");
    }

    #[test]
    fn figure_two_matches_closed_forms() {
        let curves = figure_table(2, 0.3, 0.5, 41).unwrap();
        let labels: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(labels, ["una", "g_L", "g_H", "g_{1,1}", "g_lambda"]);
        for (i, &(x, v)) in curves[0].points.iter().enumerate() {
            assert!((v - (x - 1.0).max(0.0)).abs() < 1e-12);
            assert!((curves[1].points[i].1 - 0.0).abs() < 1e-12);
            assert!((curves[2].points[i].1 - (x - 1.0)).abs() < 1e-12);
            assert!((curves[3].points[i].1 - ((x - 1.0).max(0.0) - 1.0 / 3.0)).abs() < 1e-12);
            assert!((curves[4].points[i].1 - 0.5 * (x - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn document_round_trip() {
        let text = r#"
[problem]
interval = [0.0, 2.0]
n = 3

[[welfare]]
kind = "substitute_inputs"
f = { breakpoints = [0.0, 3.0, 6.0], coeffs = [[0.0], [-3.0, 1.0]] }

[grid]
m = 21
anchors = [1.0]

[[guarantee]]
kind = "una"

[[guarantee]]
kind = "lh"
ell = 1
h = 1

[[rule]]
kind = "serial_up"
"#;
        let doc: DocRoot = toml::from_str(text).unwrap();
        let problem = build_problem(doc).unwrap();
        assert_eq!(problem.guarantees.len(), 2);
        assert_eq!(problem.guarantees[1].label(), "g_{1,1}");
        assert_eq!(problem.rules.len(), 1);
        // Unknown fields are rejected.
        let bad = toml::from_str::<DocRoot>(&text.replace("m = 21", "m = 21\nbogus = 1"));
        assert!(bad.is_err());
    }
}
