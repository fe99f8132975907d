//! Declarative symmetric welfare functions on [L,H]^n.
//!
//! A spec is a sum of terms, each symmetric by construction:
//! substitute-inputs F(x_1+...+x_n), rank-separable Σ_k w_k(x^k) over the
//! decreasing order statistics, separable-additive Σ_i w0(x_i), a
//! coordinate-wise change of variables of another spec, or an opaque
//! symmetric evaluator. Evaluation canonically sorts the profile, so
//! permutation invariance is exact in floating point.

use crate::verify::Grid;
use crate::{Error, Result};
use std::fmt;
use std::sync::{Arc, OnceLock};

/// Degree cap for piecewise-polynomial pieces. Everything the library
/// ships needs degree at most 4 (the product diagonal is x^4).
pub const DEGREE_CAP: usize = 4;

/// Closed type interval [lo, hi].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TypeInterval {
    pub lo: f64,
    pub hi: f64,
}

impl TypeInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(TypeInterval { lo, hi })
    }

    pub fn span(&self) -> f64 {
        self.hi - self.lo
    }

    /// Membership with a relative slack absorbing float round trips.
    pub fn contains(&self, t: f64) -> bool {
        let eps = 1e-9 * self.span();
        t >= self.lo - eps && t <= self.hi + eps
    }

    pub fn clamp(&self, t: f64) -> f64 {
        t.clamp(self.lo, self.hi)
    }

    pub fn check(&self, t: f64) -> Result<f64> {
        if self.contains(t) {
            Ok(self.clamp(t))
        } else {
            Err(Error::Domain {
                value: t,
                lo: self.lo,
                hi: self.hi,
            })
        }
    }
}

/// Continuous piecewise polynomial. Breakpoints are strictly increasing,
/// coefficients are in ascending degree order and absolute coordinates
/// (piece i is evaluated as Σ_d c[i][d]·z^d on [bp[i], bp[i+1]]).
#[derive(Clone, Debug)]
pub struct PiecewisePoly {
    bps: Vec<f64>,
    coeffs: Vec<Vec<f64>>,
}

fn poly_eval(c: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for &ci in c.iter().rev() {
        acc = acc * z + ci;
    }
    acc
}

fn poly_deriv_eval(c: &[f64], z: f64) -> f64 {
    let mut acc = 0.0;
    for d in (1..c.len()).rev() {
        acc = acc * z + c[d] * d as f64;
    }
    acc
}

impl PiecewisePoly {
    pub fn new(bps: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if bps.len() < 2 || coeffs.len() + 1 != bps.len() {
            return Err(Error::InvalidFunction(format!(
                "{} breakpoints with {} coefficient rows",
                bps.len(),
                coeffs.len()
            )));
        }
        for w in bps.windows(2) {
            if !(w[0].is_finite() && w[1].is_finite() && w[0] < w[1]) {
                return Err(Error::InvalidFunction(format!(
                    "breakpoints not strictly increasing at {} .. {}",
                    w[0], w[1]
                )));
            }
        }
        for c in &coeffs {
            if c.is_empty() || c.len() > DEGREE_CAP + 1 {
                return Err(Error::InvalidFunction(format!(
                    "piece degree {} exceeds cap {}",
                    c.len().saturating_sub(1),
                    DEGREE_CAP
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidFunction("non-finite coefficient".into()));
            }
        }
        let pp = PiecewisePoly { bps, coeffs };
        // Continuity at interior breakpoints, relative to the local scale.
        for i in 0..pp.coeffs.len() - 1 {
            let b = pp.bps[i + 1];
            let a = poly_eval(&pp.coeffs[i], b);
            let c = poly_eval(&pp.coeffs[i + 1], b);
            let tol = 1e-9 * a.abs().max(c.abs()).max(1.0);
            if (a - c).abs() > tol {
                return Err(Error::InvalidFunction(format!(
                    "discontinuity at breakpoint {b}: {a} vs {c}"
                )));
            }
        }
        Ok(pp)
    }

    pub fn constant(lo: f64, hi: f64, v: f64) -> Self {
        PiecewisePoly::new(vec![lo, hi], vec![vec![v]]).expect("constant piece")
    }

    pub fn affine(lo: f64, hi: f64, c0: f64, c1: f64) -> Self {
        PiecewisePoly::new(vec![lo, hi], vec![vec![c0, c1]]).expect("affine piece")
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.bps[0], *self.bps.last().unwrap())
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.bps
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// Index of the piece evaluated at z; the last breakpoint belongs to
    /// the last piece. Arguments outside the domain use the edge piece.
    fn piece_index(&self, z: f64) -> usize {
        let k = self.bps.partition_point(|&b| b <= z);
        k.saturating_sub(1).min(self.coeffs.len() - 1)
    }

    pub fn eval(&self, z: f64) -> f64 {
        poly_eval(&self.coeffs[self.piece_index(z)], z)
    }

    /// One-sided derivatives (left, right) at z. At the domain edges the
    /// missing side repeats the existing one.
    pub fn deriv_sides(&self, z: f64) -> (f64, f64) {
        let (lo, hi) = self.domain();
        let right_idx = self.piece_index(z);
        let right = poly_deriv_eval(&self.coeffs[right_idx], z);
        // The left derivative comes from the piece ending at z, which
        // differs from right_idx only when z sits exactly on an interior
        // breakpoint.
        let left_idx = {
            let k = self.bps.partition_point(|&b| b < z);
            k.saturating_sub(1).min(self.coeffs.len() - 1)
        };
        let left = poly_deriv_eval(&self.coeffs[left_idx], z);
        if z <= lo {
            (right, right)
        } else if z >= hi {
            (left, left)
        } else {
            (left, right)
        }
    }

    fn interior_breakpoints(&self) -> &[f64] {
        &self.bps[1..self.bps.len() - 1]
    }
}

/// Weak convexity classification of a one-variable function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Convexity {
    Convex,
    Concave,
    /// Both weakly convex and weakly concave.
    Affine,
    Mixed,
}

/// One-variable function: a piecewise polynomial or an exact
/// transcendental (e^z, ln z). The transcendentals keep the change-of-
/// variables constructions exact where a polynomial surrogate would not
/// meet the verification tolerances.
#[derive(Clone, Debug)]
pub enum Function1D {
    Piecewise(PiecewisePoly),
    Exp,
    Log,
}

impl Function1D {
    pub fn piecewise(bps: Vec<f64>, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        Ok(Function1D::Piecewise(PiecewisePoly::new(bps, coeffs)?))
    }

    pub fn identity(lo: f64, hi: f64) -> Self {
        Function1D::Piecewise(PiecewisePoly::affine(lo, hi, 0.0, 1.0))
    }

    pub fn zero(lo: f64, hi: f64) -> Self {
        Function1D::Piecewise(PiecewisePoly::constant(lo, hi, 0.0))
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Function1D::Piecewise(p) => p.eval(z),
            Function1D::Exp => z.exp(),
            Function1D::Log => z.ln(),
        }
    }

    /// One-sided derivatives (left, right) at z within [lo, hi]; at the
    /// interval edges both slots carry the inward one-sided derivative.
    pub fn deriv_sides(&self, z: f64, lo: f64, hi: f64) -> (f64, f64) {
        let (l, r) = match self {
            Function1D::Piecewise(p) => p.deriv_sides(z),
            Function1D::Exp => {
                let d = z.exp();
                (d, d)
            }
            Function1D::Log => {
                let d = 1.0 / z;
                (d, d)
            }
        };
        if z <= lo {
            (r, r)
        } else if z >= hi {
            (l, l)
        } else {
            (l, r)
        }
    }

    /// Breakpoints strictly inside (lo, hi).
    pub fn kinks_in(&self, lo: f64, hi: f64) -> Vec<f64> {
        match self {
            Function1D::Piecewise(p) => p
                .interior_breakpoints()
                .iter()
                .copied()
                .filter(|&b| b > lo && b < hi)
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Weak convexity over [lo, hi], decided analytically piece by piece
    /// (second derivative range of each polynomial, slope jumps at kinks).
    pub fn convexity_on(&self, lo: f64, hi: f64) -> Convexity {
        match self {
            Function1D::Exp => Convexity::Convex,
            Function1D::Log => Convexity::Concave,
            Function1D::Piecewise(p) => {
                let scale = self.scale_on(lo, hi);
                let tol = 1e-9 * scale;
                let mut convex = true;
                let mut concave = true;
                let n = p.coeffs.len();
                for i in 0..n {
                    let a = p.bps[i].max(lo);
                    let b = p.bps[i + 1].min(hi);
                    if a >= b {
                        continue;
                    }
                    let (d2lo, d2hi) = second_deriv_range(&p.coeffs[i], a, b);
                    if d2lo < -tol {
                        convex = false;
                    }
                    if d2hi > tol {
                        concave = false;
                    }
                }
                for &b in p.interior_breakpoints() {
                    if b <= lo || b >= hi {
                        continue;
                    }
                    let (l, r) = p.deriv_sides(b);
                    if r - l < -tol {
                        convex = false;
                    }
                    if r - l > tol {
                        concave = false;
                    }
                }
                match (convex, concave) {
                    (true, true) => Convexity::Affine,
                    (true, false) => Convexity::Convex,
                    (false, true) => Convexity::Concave,
                    (false, false) => Convexity::Mixed,
                }
            }
        }
    }

    /// True when the function strictly increases over [lo, hi]
    /// (derivative positive except possibly at isolated points, checked
    /// analytically for polynomials).
    pub fn strictly_increasing_on(&self, lo: f64, hi: f64) -> bool {
        self.strict_monotone_on(lo, hi, 1.0)
    }

    pub fn strictly_decreasing_on(&self, lo: f64, hi: f64) -> bool {
        self.strict_monotone_on(lo, hi, -1.0)
    }

    fn strict_monotone_on(&self, lo: f64, hi: f64, sign: f64) -> bool {
        match self {
            Function1D::Exp => sign > 0.0,
            Function1D::Log => sign > 0.0 && lo > 0.0,
            Function1D::Piecewise(p) => {
                // Sample each piece densely and require strictly ordered
                // values; degree <= 4 pieces cannot hide a reversal
                // between 33 samples unless they are locally constant,
                // which the value comparison catches.
                let scale = self.scale_on(lo, hi);
                let tol = 1e-12 * scale.max(1.0);
                let n = p.coeffs.len();
                for i in 0..n {
                    let a = p.bps[i].max(lo);
                    let b = p.bps[i + 1].min(hi);
                    if a >= b {
                        continue;
                    }
                    let mut prev = p.eval(a);
                    for k in 1..=32 {
                        let z = a + (b - a) * k as f64 / 32.0;
                        let v = p.eval(z);
                        if sign * (v - prev) <= tol {
                            return false;
                        }
                        prev = v;
                    }
                }
                true
            }
        }
    }

    /// Weak monotonicity check used by constructors that only need a
    /// direction, not strictness.
    pub fn weakly_increasing_on(&self, lo: f64, hi: f64) -> bool {
        self.weak_monotone_on(lo, hi, 1.0)
    }

    pub fn weakly_decreasing_on(&self, lo: f64, hi: f64) -> bool {
        self.weak_monotone_on(lo, hi, -1.0)
    }

    fn weak_monotone_on(&self, lo: f64, hi: f64, sign: f64) -> bool {
        match self {
            Function1D::Exp | Function1D::Log => sign > 0.0,
            Function1D::Piecewise(p) => {
                let scale = self.scale_on(lo, hi);
                let tol = 1e-9 * scale.max(1.0);
                let mut pts: Vec<f64> = vec![lo];
                pts.extend(self.kinks_in(lo, hi));
                pts.push(hi);
                pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut prev = p.eval(lo);
                for w in pts.windows(2) {
                    for k in 1..=32 {
                        let z = w[0] + (w[1] - w[0]) * k as f64 / 32.0;
                        let v = p.eval(z);
                        if sign * (v - prev) < -tol {
                            return false;
                        }
                        prev = v;
                    }
                }
                true
            }
        }
    }

    /// Solve f(z) = y for a monotone function on [lo, hi] by bisection;
    /// exact inverses for the transcendentals.
    pub fn inverse_on(&self, y: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Function1D::Exp => y.ln().clamp(lo, hi),
            Function1D::Log => y.exp().clamp(lo, hi),
            Function1D::Piecewise(_) => {
                let increasing = self.eval(hi) >= self.eval(lo);
                let (mut a, mut b) = (lo, hi);
                for _ in 0..200 {
                    let mid = 0.5 * (a + b);
                    let v = self.eval(mid);
                    let below = if increasing { v < y } else { v > y };
                    if below {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                0.5 * (a + b)
            }
        }
    }

    fn scale_on(&self, lo: f64, hi: f64) -> f64 {
        let mut s: f64 = 1.0;
        for k in 0..=16 {
            let z = lo + (hi - lo) * k as f64 / 16.0;
            s = s.max(self.eval(z).abs());
        }
        s
    }
}

/// Range of p'' over [a, b] for ascending-degree coefficients.
fn second_deriv_range(c: &[f64], a: f64, b: f64) -> (f64, f64) {
    let c2 = c.get(2).copied().unwrap_or(0.0) * 2.0;
    let c3 = c.get(3).copied().unwrap_or(0.0) * 6.0;
    let c4 = c.get(4).copied().unwrap_or(0.0) * 12.0;
    let q = |z: f64| c2 + c3 * z + c4 * z * z;
    let mut lo = q(a).min(q(b));
    let mut hi = q(a).max(q(b));
    if c4 != 0.0 {
        let v = -c3 / (2.0 * c4);
        if v > a && v < b {
            lo = lo.min(q(v));
            hi = hi.max(q(v));
        }
    }
    (lo, hi)
}

/// Opaque symmetric evaluator. The callable receives the profile sorted
/// in decreasing order and must be symmetric; a seeded permutation audit
/// samples that promise.
#[derive(Clone)]
pub struct CustomEval {
    pub name: String,
    pub f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl fmt::Debug for CustomEval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomEval({})", self.name)
    }
}

/// One additive component of a welfare spec.
#[derive(Clone, Debug)]
pub enum Term {
    /// F(x_1 + ... + x_n); F must cover [n·lo, n·hi].
    SubstituteInputs(Function1D),
    /// Σ_k w_k(x^k) over the decreasing order statistics (w[0] applies
    /// to the maximum). Exactly n components.
    RankSeparable(Vec<Function1D>),
    /// Σ_i w0(x_i).
    SeparableAdditive(Function1D),
    /// base(θ(x_1), ..., θ(x_n)) for a strictly monotone θ.
    Transformed {
        base: Arc<WelfareSpec>,
        theta: Function1D,
    },
    /// Opaque symmetric evaluator; derivatives fall back to central
    /// finite differences.
    Custom(CustomEval),
}

/// Semi-modularity classification tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModularityTag {
    Supermodular,
    Submodular,
    Additive,
    Neither,
}

/// A rectangle witness for the sign of the two-coordinate defect
/// W(hi,hi,s) + W(lo,lo,s) - W(hi,lo,s) - W(lo,hi,s).
#[derive(Clone, Debug)]
pub struct ModularityWitness {
    pub x1: f64,
    pub x1s: f64,
    pub x2: f64,
    pub x2s: f64,
    pub rest: Vec<f64>,
    pub defect: f64,
}

#[derive(Clone, Debug)]
pub struct ModularityClass {
    pub tag: ModularityTag,
    /// Every tested rectangle had a defect beyond the tolerance in the
    /// tag's direction (meaningful for Supermodular/Submodular).
    pub strict: bool,
    pub min_defect: f64,
    pub max_defect: f64,
    pub scale: f64,
    pub tolerance: f64,
    /// Most positive defect seen (certifies supermodularity, violates
    /// submodularity).
    pub positive_witness: Option<ModularityWitness>,
    /// Most negative defect seen.
    pub negative_witness: Option<ModularityWitness>,
}

impl ModularityClass {
    pub fn is_semi_modular(&self) -> bool {
        matches!(
            self.tag,
            ModularityTag::Supermodular | ModularityTag::Submodular | ModularityTag::Additive
        )
    }

    pub fn strictly_semi_modular(&self) -> bool {
        self.strict
            && matches!(
                self.tag,
                ModularityTag::Supermodular | ModularityTag::Submodular
            )
    }
}

/// Decreasing order statistics: a weakly decreasing copy of the profile,
/// so the first entry is the maximum.
pub fn order_statistics(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    v
}

/// Symmetric welfare function W on [lo, hi]^n, a sum of terms.
#[derive(Debug)]
pub struct WelfareSpec {
    interval: TypeInterval,
    n: usize,
    terms: Vec<Term>,
    default_cls: OnceLock<ModularityClass>,
}

impl WelfareSpec {
    pub fn new(interval: TypeInterval, n: usize, terms: Vec<Term>) -> Result<Arc<Self>> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("n = {n}, need n >= 2")));
        }
        if terms.is_empty() {
            return Err(Error::InvalidParameter("no welfare terms".into()));
        }
        for t in &terms {
            match t {
                Term::SubstituteInputs(f) => {
                    check_covers(f, n as f64 * interval.lo, n as f64 * interval.hi)?;
                }
                Term::RankSeparable(ws) => {
                    if ws.len() != n {
                        return Err(Error::InvalidParameter(format!(
                            "rank-separable needs {n} components, got {}",
                            ws.len()
                        )));
                    }
                    for w in ws {
                        check_covers(w, interval.lo, interval.hi)?;
                    }
                }
                Term::SeparableAdditive(w0) => {
                    check_covers(w0, interval.lo, interval.hi)?;
                }
                Term::Transformed { base, theta } => {
                    if base.n != n {
                        return Err(Error::Shape {
                            expected: n,
                            got: base.n,
                        });
                    }
                    let inc = theta.strictly_increasing_on(interval.lo, interval.hi);
                    let dec = theta.strictly_decreasing_on(interval.lo, interval.hi);
                    if !inc && !dec {
                        return Err(Error::InvalidFunction(
                            "transform must be strictly monotone on the type interval".into(),
                        ));
                    }
                    let a = theta.eval(interval.lo);
                    let b = theta.eval(interval.hi);
                    if !base.interval.contains(a) || !base.interval.contains(b) {
                        return Err(Error::InvalidFunction(format!(
                            "transform image [{}, {}] escapes the base interval [{}, {}]",
                            a.min(b),
                            a.max(b),
                            base.interval.lo,
                            base.interval.hi
                        )));
                    }
                }
                Term::Custom(_) => {}
            }
        }
        Ok(Arc::new(WelfareSpec {
            interval,
            n,
            terms,
            default_cls: OnceLock::new(),
        }))
    }

    pub fn interval(&self) -> TypeInterval {
        self.interval
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn check_profile(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Shape {
                expected: self.n,
                got: x.len(),
            });
        }
        for &v in x {
            self.interval.check(v)?;
        }
        Ok(())
    }

    /// W(x). Sorts a copy of the profile, so any permutation of x gives
    /// bit-identical output.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_profile(x)?;
        let mut sorted: Vec<f64> = x.iter().map(|&v| self.interval.clamp(v)).collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        Ok(self.eval_sorted(&sorted))
    }

    /// Fast path: the caller passes an already weakly decreasing profile.
    pub fn eval_sorted(&self, x_desc: &[f64]) -> f64 {
        debug_assert!(x_desc.windows(2).all(|w| w[0] >= w[1]));
        let mut total = 0.0;
        for t in &self.terms {
            total += term_eval(t, x_desc);
        }
        total
    }

    /// una(t) = W(t, ..., t)/n.
    pub fn unanimity_value(&self, t: f64) -> Result<f64> {
        let t = self.interval.check(t)?;
        let profile = vec![t; self.n];
        Ok(self.eval_sorted(&profile) / self.n as f64)
    }

    /// One-sided partial derivatives (left, right) of W in coordinate
    /// `index` at x. Analytic per term; opaque evaluators use central
    /// finite differences with step 1e-6 times the interval span.
    pub fn partial_derivative(&self, index: usize, x: &[f64]) -> Result<(f64, f64)> {
        self.check_profile(x)?;
        if index >= self.n {
            return Err(Error::Shape {
                expected: self.n,
                got: index,
            });
        }
        let mut left = 0.0;
        let mut right = 0.0;
        for t in &self.terms {
            let (l, r) = term_partial(t, x, index, self.interval);
            left += l;
            right += r;
        }
        Ok((left, right))
    }

    /// One-sided derivatives (left, right) of una(t) = W(t, ..., t)/n,
    /// analytic per term. Moving t moves every coordinate, so rank ties
    /// never break and the rank components differentiate independently.
    pub fn unanimity_derivative_sides(&self, t: f64) -> Result<(f64, f64)> {
        let t = self.interval.check(t)?;
        let (lo, hi) = (self.interval.lo, self.interval.hi);
        let nf = self.n as f64;
        let mut left = 0.0;
        let mut right = 0.0;
        for term in &self.terms {
            let (l, r) = match term {
                Term::SubstituteInputs(f) => f.deriv_sides(nf * t, nf * lo, nf * hi),
                Term::RankSeparable(ws) => {
                    let mut acc = (0.0, 0.0);
                    for w in ws {
                        let d = w.deriv_sides(t, lo, hi);
                        acc.0 += d.0;
                        acc.1 += d.1;
                    }
                    (acc.0 / nf, acc.1 / nf)
                }
                Term::SeparableAdditive(w0) => w0.deriv_sides(t, lo, hi),
                Term::Transformed { base, theta } => {
                    let (tl, tr) = theta.deriv_sides(t, lo, hi);
                    let (bl, br) = base.unanimity_derivative_sides(theta.eval(t))?;
                    let l = if tl >= 0.0 { bl * tl } else { br * tl };
                    let r = if tr >= 0.0 { br * tr } else { bl * tr };
                    (l, r)
                }
                Term::Custom(c) => {
                    let h = 1e-6 * self.interval.span();
                    let at = |z: f64| {
                        let p = vec![z; self.n];
                        (c.f)(&p) / nf
                    };
                    let up = (t + h).min(hi);
                    let dn = (t - h).max(lo);
                    let l = (at(t) - at(dn)) / (t - dn).max(f64::MIN_POSITIVE);
                    let r = (at(up) - at(t)) / (up - t).max(f64::MIN_POSITIVE);
                    (l, r)
                }
            };
            left += l;
            right += r;
        }
        Ok(clamp_sides(left, right, t, lo, hi))
    }

    /// Type-space anchor points contributed by the spec's one-variable
    /// functions (diagonal and section kink preimages), for grid
    /// augmentation.
    pub fn anchor_points(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let (lo, hi) = (self.interval.lo, self.interval.hi);
        let nf = self.n as f64;
        for t in &self.terms {
            match t {
                Term::SubstituteInputs(f) => {
                    for z in f.kinks_in(nf * lo, nf * hi) {
                        for shift in [
                            z / nf,
                            z - (nf - 1.0) * lo,
                            z - (nf - 1.0) * hi,
                            z - lo - (nf - 2.0) * hi,
                            z - hi - (nf - 2.0) * lo,
                        ] {
                            if shift > lo && shift < hi {
                                out.push(shift);
                            }
                        }
                    }
                }
                Term::RankSeparable(ws) => {
                    for w in ws {
                        out.extend(w.kinks_in(lo, hi));
                    }
                }
                Term::SeparableAdditive(w0) => {
                    out.extend(w0.kinks_in(lo, hi));
                }
                Term::Transformed { base, theta } => {
                    for a in base.anchor_points() {
                        let t = theta.inverse_on(a, lo, hi);
                        if t > lo && t < hi {
                            out.push(t);
                        }
                    }
                    out.extend(theta.kinks_in(lo, hi));
                }
                Term::Custom(_) => {}
            }
        }
        out
    }

    /// Classify semi-modularity by scanning the two-coordinate defect
    /// over all grid rectangles x1 < x1*, x2 < x2* and all sorted
    /// combinations of the remaining n-2 coordinates.
    pub fn classify_modularity(&self, grid: &Grid) -> Result<ModularityClass> {
        let pts = grid.points();
        let m = pts.len();
        if m < 3 {
            return Err(Error::InvalidParameter(
                "modularity grid needs at least 3 points".into(),
            ));
        }
        let pairs = (m * (m - 1) / 2) as u64;
        let rest_count = crate::verify::multiset_count(m, self.n - 2);
        let needed = pairs
            .saturating_mul(pairs)
            .saturating_mul(rest_count)
            .saturating_mul(4);
        if needed > crate::verify::EVAL_CAP {
            return Err(Error::Budget {
                needed,
                cap: crate::verify::EVAL_CAP,
            });
        }

        let mut min_defect = f64::INFINITY;
        let mut max_defect = f64::NEG_INFINITY;
        let mut scale: f64 = 1.0;
        let mut pos: Option<ModularityWitness> = None;
        let mut neg: Option<ModularityWitness> = None;
        let mut profile = vec![0.0; self.n];

        let mut rest_sets: Vec<Vec<f64>> = Vec::new();
        crate::verify::for_each_multiset(m, self.n - 2, |idx| {
            rest_sets.push(idx.iter().map(|&i| pts[i]).collect());
        });

        for rest in &rest_sets {
            for i1 in 0..m {
                for i1s in (i1 + 1)..m {
                    for i2 in 0..m {
                        for i2s in (i2 + 1)..m {
                            let (x1, x1s, x2, x2s) = (pts[i1], pts[i1s], pts[i2], pts[i2s]);
                            let mut w = |a: f64, b: f64| {
                                profile[0] = a;
                                profile[1] = b;
                                profile[2..].copy_from_slice(rest);
                                profile.sort_by(|p, q| q.partial_cmp(p).unwrap());
                                let v = self.eval_sorted(&profile);
                                scale = scale.max(v.abs());
                                v
                            };
                            let defect = w(x1s, x2s) + w(x1, x2) - w(x1s, x2) - w(x1, x2s);
                            if defect > max_defect {
                                max_defect = defect;
                                pos = Some(ModularityWitness {
                                    x1,
                                    x1s,
                                    x2,
                                    x2s,
                                    rest: rest.clone(),
                                    defect,
                                });
                            }
                            if defect < min_defect {
                                min_defect = defect;
                                neg = Some(ModularityWitness {
                                    x1,
                                    x1s,
                                    x2,
                                    x2s,
                                    rest: rest.clone(),
                                    defect,
                                });
                            }
                        }
                    }
                }
            }
        }

        let tolerance = 1e-9 * scale;
        let (tag, strict) = if min_defect >= -tolerance && max_defect <= tolerance {
            (ModularityTag::Additive, false)
        } else if min_defect >= -tolerance {
            (ModularityTag::Supermodular, min_defect > tolerance)
        } else if max_defect <= tolerance {
            (ModularityTag::Submodular, max_defect < -tolerance)
        } else {
            (ModularityTag::Neither, false)
        };
        Ok(ModularityClass {
            tag,
            strict,
            min_defect,
            max_defect,
            scale,
            tolerance,
            positive_witness: pos,
            negative_witness: neg,
        })
    }

    /// Classification on a small default grid (9 uniform points plus the
    /// spec's anchors), cached. Constructors that only need a side use
    /// this; callers with specific grids use classify_modularity.
    pub fn default_modularity(&self) -> &ModularityClass {
        self.default_cls.get_or_init(|| {
            let anchors = self.anchor_points();
            let grid = Grid::new(self.interval, 9, &anchors).expect("default grid");
            self.classify_modularity(&grid)
                .expect("default classification within budget")
        })
    }

    /// Sampled symmetry audit for opaque evaluators: evaluates random
    /// permutations of random grid profiles and compares against the
    /// canonical sorted evaluation.
    pub fn audit_symmetry(&self, seed: u64, profiles: usize, perms: usize) -> Result<()> {
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..profiles {
            let x: Vec<f64> = (0..self.n)
                .map(|_| rng.random_range(self.interval.lo..=self.interval.hi))
                .collect();
            let reference = self.evaluate(&x)?;
            let mut perm = x.clone();
            for _ in 0..perms {
                perm.shuffle(&mut rng);
                let v = self.evaluate(&perm)?;
                if v != reference {
                    return Err(Error::UnsupportedWelfare(format!(
                        "asymmetric evaluation at {perm:?}: {v} vs {reference}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn check_covers(f: &Function1D, lo: f64, hi: f64) -> Result<()> {
    match f {
        Function1D::Piecewise(p) => {
            let (a, b) = p.domain();
            let slack = 1e-9 * (hi - lo).max(1.0);
            if a > lo + slack || b < hi - slack {
                return Err(Error::InvalidFunction(format!(
                    "function domain [{a}, {b}] does not cover [{lo}, {hi}]"
                )));
            }
            Ok(())
        }
        Function1D::Exp => Ok(()),
        Function1D::Log => {
            if lo <= 0.0 {
                Err(Error::InvalidFunction(
                    "log requires a positive domain".into(),
                ))
            } else {
                Ok(())
            }
        }
    }
}

fn term_eval(t: &Term, x_desc: &[f64]) -> f64 {
    match t {
        Term::SubstituteInputs(f) => f.eval(x_desc.iter().sum()),
        Term::RankSeparable(ws) => ws
            .iter()
            .zip(x_desc.iter())
            .map(|(w, &v)| w.eval(v))
            .sum(),
        Term::SeparableAdditive(w0) => x_desc.iter().map(|&v| w0.eval(v)).sum(),
        Term::Transformed { base, theta } => {
            let mut mapped: Vec<f64> = x_desc.iter().map(|&v| theta.eval(v)).collect();
            mapped.sort_by(|a, b| b.partial_cmp(a).unwrap());
            base.eval_sorted(&mapped)
        }
        Term::Custom(c) => (c.f)(x_desc),
    }
}

/// One-sided partials of a single term, (left, right) convention.
fn term_partial(t: &Term, x: &[f64], index: usize, interval: TypeInterval) -> (f64, f64) {
    let (lo, hi) = (interval.lo, interval.hi);
    let xi = x[index];
    match t {
        Term::SubstituteInputs(f) => {
            let n = x.len() as f64;
            let s: f64 = x.iter().sum();
            let (l, r) = f.deriv_sides(s, n * lo, n * hi);
            // Moving x_i left moves the sum left, so sides map directly,
            // except at the coordinate edges where only one side exists.
            clamp_sides(l, r, xi, lo, hi)
        }
        Term::RankSeparable(ws) => {
            // Within a tie group the rank of x_i depends on the move
            // direction: increasing it promotes x_i to the group's best
            // rank, decreasing demotes it to the worst.
            let sorted = order_statistics(x);
            let first = sorted.partition_point(|&v| v > xi); // best rank index
            let last = sorted.partition_point(|&v| v >= xi) - 1; // worst rank index
            let right = ws[first].deriv_sides(xi, lo, hi).1;
            let left = ws[last].deriv_sides(xi, lo, hi).0;
            clamp_sides(left, right, xi, lo, hi)
        }
        Term::SeparableAdditive(w0) => {
            let (l, r) = w0.deriv_sides(xi, lo, hi);
            clamp_sides(l, r, xi, lo, hi)
        }
        Term::Transformed { base, theta } => {
            let mapped: Vec<f64> = x.iter().map(|&v| theta.eval(v)).collect();
            let (bl, br) = base
                .partial_derivative(index, &mapped)
                .unwrap_or((f64::NAN, f64::NAN));
            let (tl, tr) = theta.deriv_sides(xi, lo, hi);
            // Chain rule with direction flip: approaching x_i from the
            // left moves θ(x_i) from below iff θ increases there.
            let left = if tl >= 0.0 { bl * tl } else { br * tl };
            let right = if tr >= 0.0 { br * tr } else { bl * tr };
            clamp_sides(left, right, xi, lo, hi)
        }
        Term::Custom(_) => {
            let h = 1e-6 * (hi - lo);
            let up = (xi + h).min(hi);
            let dn = (xi - h).max(lo);
            let mut plus = x.to_vec();
            plus[index] = up;
            plus.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let mut minus = x.to_vec();
            minus[index] = dn;
            minus.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let d = (term_eval(t, &plus) - term_eval(t, &minus)) / (up - dn);
            (d, d)
        }
    }
}

fn clamp_sides(left: f64, right: f64, xi: f64, lo: f64, hi: f64) -> (f64, f64) {
    if xi <= lo {
        (right, right)
    } else if xi >= hi {
        (left, left)
    } else {
        (left, right)
    }
}
