//! Per-agent bound curves and their constructors.
//!
//! A guarantee assigns each type t a bound g(t) on that agent's share
//! such that the profile sums respect the joint output: Σ g(x_i) <= W(x)
//! for a lower guarantee, >= for an upper one. The constructors here
//! produce the canonical tight families: the unanimity share, the
//! contact-anchored simple curves, the commons bookends and their
//! intermediate and tangent interpolations, and the quota bounds.

use crate::welfare::{Convexity, Function1D, ModularityClass, ModularityTag, TypeInterval, WelfareSpec};
use crate::{Error, Result};
use std::sync::Arc;

/// Which side of the share a curve bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Lower => Side::Upper,
            Side::Upper => Side::Lower,
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Side::Lower => write!(f, "lower"),
            Side::Upper => write!(f, "upper"),
        }
    }
}

/// A one-variable share curve. Implementations provide values; the
/// derivative defaults to one-sided finite differences and is
/// overridden where an analytic form exists.
pub trait ShareCurve: Send + Sync {
    fn eval(&self, t: f64) -> f64;

    /// One-sided derivatives (left, right) at t inside `interval`.
    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        let h = 1e-6 * interval.span();
        let up = (t + h).min(interval.hi);
        let dn = (t - h).max(interval.lo);
        let left = if t > dn {
            (self.eval(t) - self.eval(dn)) / (t - dn)
        } else {
            f64::NAN
        };
        let right = if up > t {
            (self.eval(up) - self.eval(t)) / (up - t)
        } else {
            f64::NAN
        };
        match (left.is_nan(), right.is_nan()) {
            (true, _) => (right, right),
            (_, true) => (left, left),
            _ => (left, right),
        }
    }

    /// Interior points where the curve may kink, as grid anchors.
    fn anchors(&self) -> Vec<f64> {
        Vec::new()
    }
}

/// A labeled, side-tagged share curve on a type interval.
#[derive(Clone)]
pub struct Guarantee {
    side: Side,
    label: String,
    interval: TypeInterval,
    curve: Arc<dyn ShareCurve>,
}

impl std::fmt::Debug for Guarantee {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Guarantee")
            .field("side", &self.side)
            .field("label", &self.label)
            .field("interval", &self.interval)
            .finish()
    }
}

impl Guarantee {
    pub fn from_curve(
        side: Side,
        label: impl Into<String>,
        interval: TypeInterval,
        curve: Arc<dyn ShareCurve>,
    ) -> Self {
        Guarantee {
            side,
            label: label.into(),
            interval,
            curve,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn interval(&self) -> TypeInterval {
        self.interval
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.curve.eval(self.interval.clamp(t))
    }

    /// One-sided derivatives (left, right); at the interval endpoints
    /// both slots carry the inward side.
    pub fn derivative_sides(&self, t: f64) -> (f64, f64) {
        let t = self.interval.clamp(t);
        let (l, r) = self.curve.derivative_sides(t, self.interval);
        let eps = 1e-12 * self.interval.span();
        if t - self.interval.lo <= eps {
            (r, r)
        } else if self.interval.hi - t <= eps {
            (l, l)
        } else {
            (l, r)
        }
    }

    /// Kink anchors strictly inside the interval, deduplicated.
    pub fn anchors(&self) -> Vec<f64> {
        let mut a: Vec<f64> = self
            .curve
            .anchors()
            .into_iter()
            .filter(|&t| t > self.interval.lo && t < self.interval.hi)
            .collect();
        a.sort_by(|x, y| x.partial_cmp(y).unwrap());
        a.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * self.interval.span());
        a
    }
}

/// Sampled curve, the exchange format for CSV output and rule-implied
/// bounds.
#[derive(Clone, Debug)]
pub struct GuaranteeCurve {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Evaluate a guarantee on a grid.
pub fn sample_curve(g: &Guarantee, grid: &crate::verify::Grid) -> GuaranteeCurve {
    GuaranteeCurve {
        label: g.label().to_string(),
        points: grid.points().iter().map(|&t| (t, g.eval(t))).collect(),
    }
}

// ---------------------------------------------------------------------
// Curves
// ---------------------------------------------------------------------

/// The unanimity share una(t) = W(t, ..., t)/n.
struct UnaCurve {
    spec: Arc<WelfareSpec>,
}

impl ShareCurve for UnaCurve {
    fn eval(&self, t: f64) -> f64 {
        self.spec.unanimity_value(t).expect("t inside the interval")
    }

    fn derivative_sides(&self, t: f64, _interval: TypeInterval) -> (f64, f64) {
        self.spec
            .unanimity_derivative_sides(t)
            .expect("t inside the interval")
    }

    fn anchors(&self) -> Vec<f64> {
        self.spec.anchor_points()
    }
}

/// Contact-anchored curve g_c(x) = W(x, c) - (1/n) Σ_l W(c_l, c).
/// The offset makes the anchor profile (x, c) itself the contact:
/// g_c(x) + Σ_l g_c(c_l) = W(x, c) exactly, by construction.
struct SimpleCurve {
    spec: Arc<WelfareSpec>,
    /// Anchor types of the n-1 opponents, sorted decreasingly.
    c_desc: Vec<f64>,
    offset: f64,
}

impl SimpleCurve {
    fn new(spec: Arc<WelfareSpec>, c: &[f64]) -> Result<Self> {
        let n = spec.n();
        if c.len() + 1 != n {
            return Err(Error::Shape {
                expected: n - 1,
                got: c.len(),
            });
        }
        for &v in c {
            spec.interval().check(v)?;
        }
        let mut c_desc = c.to_vec();
        c_desc.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let mut offset = 0.0;
        for &cl in &c_desc {
            offset += section_eval(&spec, cl, &c_desc);
        }
        offset /= n as f64;
        Ok(SimpleCurve {
            spec,
            c_desc,
            offset,
        })
    }
}

/// W(x, c) for sorted opponents c, inserting x in order.
fn section_eval(spec: &WelfareSpec, x: f64, c_desc: &[f64]) -> f64 {
    let mut profile = Vec::with_capacity(c_desc.len() + 1);
    let pos = c_desc.partition_point(|&v| v >= x);
    profile.extend_from_slice(&c_desc[..pos]);
    profile.push(x);
    profile.extend_from_slice(&c_desc[pos..]);
    spec.eval_sorted(&profile)
}

impl ShareCurve for SimpleCurve {
    fn eval(&self, t: f64) -> f64 {
        section_eval(&self.spec, t, &self.c_desc) - self.offset
    }

    fn derivative_sides(&self, t: f64, _interval: TypeInterval) -> (f64, f64) {
        let mut profile = Vec::with_capacity(self.c_desc.len() + 1);
        profile.push(t);
        profile.extend_from_slice(&self.c_desc);
        self.spec
            .partial_derivative(0, &profile)
            .expect("t inside the interval")
    }

    fn anchors(&self) -> Vec<f64> {
        let mut a = self.spec.anchor_points();
        a.extend_from_slice(&self.c_desc);
        // Kinks of z -> F(z) in substitute terms shift by the opponent
        // sum along the section.
        let iv = self.spec.interval();
        let rest: f64 = self.c_desc.iter().sum();
        let nf = self.spec.n() as f64;
        for term in self.spec.terms() {
            if let crate::welfare::Term::SubstituteInputs(f) = term {
                for z in f.kinks_in(nf * iv.lo, nf * iv.hi) {
                    a.push(z - rest);
                }
            }
        }
        a
    }
}

/// Commons intermediate curve: for W = F(x_1 + ... + x_n),
/// g(x) = F(x + lL + hH) - (1/n)[l F((l+1)L + hH) + h F(lL + (h+1)H)]
/// with l + h = n - 1, contact profile (x, L x l, H x h).
struct LhCurve {
    f: Function1D,
    n: usize,
    interval: TypeInterval,
    shift: f64,
    offset: f64,
}

impl LhCurve {
    fn new(f: Function1D, n: usize, ell: usize, h: usize, interval: TypeInterval) -> Self {
        let shift = ell as f64 * interval.lo + h as f64 * interval.hi;
        let at_lo = f.eval((ell as f64 + 1.0) * interval.lo + h as f64 * interval.hi);
        let at_hi = f.eval(ell as f64 * interval.lo + (h as f64 + 1.0) * interval.hi);
        let offset = (ell as f64 * at_lo + h as f64 * at_hi) / n as f64;
        LhCurve {
            f,
            n,
            interval,
            shift,
            offset,
        }
    }
}

impl ShareCurve for LhCurve {
    fn eval(&self, t: f64) -> f64 {
        self.f.eval(t + self.shift) - self.offset
    }

    fn derivative_sides(&self, t: f64, _interval: TypeInterval) -> (f64, f64) {
        let nf = self.n as f64;
        self.f
            .deriv_sides(t + self.shift, nf * self.interval.lo, nf * self.interval.hi)
    }

    fn anchors(&self) -> Vec<f64> {
        let nf = self.n as f64;
        let mut a: Vec<f64> = self
            .f
            .kinks_in(nf * self.interval.lo, nf * self.interval.hi)
            .into_iter()
            .map(|z| z - self.shift)
            .collect();
        // The gap to the unanimity share is smallest where the average
        // opponent type matches this curve's anchor mix.
        a.push(self.shift / (self.n as f64 - 1.0));
        a
    }
}

/// Affine curve c0 + c1 t.
struct AffineCurve {
    c0: f64,
    c1: f64,
}

impl ShareCurve for AffineCurve {
    fn eval(&self, t: f64) -> f64 {
        self.c0 + self.c1 * t
    }

    fn derivative_sides(&self, _t: f64, _interval: TypeInterval) -> (f64, f64) {
        (self.c1, self.c1)
    }
}

/// Base curve plus a constant.
struct ShiftCurve {
    base: Arc<dyn ShareCurve>,
    dy: f64,
}

impl ShareCurve for ShiftCurve {
    fn eval(&self, t: f64) -> f64 {
        self.base.eval(t) + self.dy
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        self.base.derivative_sides(t, interval)
    }

    fn anchors(&self) -> Vec<f64> {
        self.base.anchors()
    }
}

/// Base curve plus a one-variable function (separable shifts of the
/// welfare shift guarantees by the same function).
struct AddFnCurve {
    base: Arc<dyn ShareCurve>,
    w0: Function1D,
}

impl ShareCurve for AddFnCurve {
    fn eval(&self, t: f64) -> f64 {
        self.base.eval(t) + self.w0.eval(t)
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        let (bl, br) = self.base.derivative_sides(t, interval);
        let (wl, wr) = self.w0.deriv_sides(t, interval.lo, interval.hi);
        (bl + wl, br + wr)
    }

    fn anchors(&self) -> Vec<f64> {
        let mut a = self.base.anchors();
        a.extend(self.w0.kinks_in(f64::NEG_INFINITY, f64::INFINITY));
        a
    }
}

/// Piecewise splice at a cut point; the pieces agree at the cut.
struct SwitchCurve {
    cut: f64,
    left: Arc<dyn ShareCurve>,
    right: Arc<dyn ShareCurve>,
}

impl ShareCurve for SwitchCurve {
    fn eval(&self, t: f64) -> f64 {
        if t <= self.cut {
            self.left.eval(t)
        } else {
            self.right.eval(t)
        }
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        let eps = 1e-12 * interval.span();
        if t < self.cut - eps {
            self.left.derivative_sides(t, interval)
        } else if t > self.cut + eps {
            self.right.derivative_sides(t, interval)
        } else {
            (
                self.left.derivative_sides(t, interval).0,
                self.right.derivative_sides(t, interval).1,
            )
        }
    }

    fn anchors(&self) -> Vec<f64> {
        let mut a = vec![self.cut];
        a.extend(self.left.anchors().into_iter().filter(|&t| t < self.cut));
        a.extend(self.right.anchors().into_iter().filter(|&t| t > self.cut));
        a
    }
}

/// Convex combination (1 - lambda) a + lambda b of two curves.
struct MixCurve {
    a: Arc<dyn ShareCurve>,
    b: Arc<dyn ShareCurve>,
    lambda: f64,
}

impl ShareCurve for MixCurve {
    fn eval(&self, t: f64) -> f64 {
        (1.0 - self.lambda) * self.a.eval(t) + self.lambda * self.b.eval(t)
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        let (al, ar) = self.a.derivative_sides(t, interval);
        let (bl, br) = self.b.derivative_sides(t, interval);
        (
            (1.0 - self.lambda) * al + self.lambda * bl,
            (1.0 - self.lambda) * ar + self.lambda * br,
        )
    }

    fn anchors(&self) -> Vec<f64> {
        let mut a = self.a.anchors();
        a.extend(self.b.anchors());
        a
    }
}

/// Reparametrized curve t -> base(theta(t)).
struct ComposeCurve {
    base: Arc<dyn ShareCurve>,
    base_interval: TypeInterval,
    theta: Function1D,
}

impl ShareCurve for ComposeCurve {
    fn eval(&self, t: f64) -> f64 {
        self.base.eval(self.base_interval.clamp(self.theta.eval(t)))
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        let (tl, tr) = self.theta.deriv_sides(t, interval.lo, interval.hi);
        let z = self.base_interval.clamp(self.theta.eval(t));
        let (bl, br) = self.base.derivative_sides(z, self.base_interval);
        // Approaching t from the left approaches theta(t) from below
        // exactly when theta increases there.
        let left = if tl >= 0.0 { bl * tl } else { br * tl };
        let right = if tr >= 0.0 { br * tr } else { bl * tr };
        (left, right)
    }

    // Anchors are attached by the constructor through AnchoredCurve,
    // where the inverse of theta is available.
}

/// Wrapper attaching precomputed anchors to a curve.
struct AnchoredCurve {
    base: Arc<dyn ShareCurve>,
    anchors: Vec<f64>,
}

impl ShareCurve for AnchoredCurve {
    fn eval(&self, t: f64) -> f64 {
        self.base.eval(t)
    }

    fn derivative_sides(&self, t: f64, interval: TypeInterval) -> (f64, f64) {
        self.base.derivative_sides(t, interval)
    }

    fn anchors(&self) -> Vec<f64> {
        self.anchors.clone()
    }
}

/// Quota bound curves around a pivot p for W = F(q-th highest type).
struct QuotaCurve {
    f: Function1D,
    n: usize,
    q: usize,
    p: f64,
    side: Side,
    interval: TypeInterval,
}

impl ShareCurve for QuotaCurve {
    fn eval(&self, t: f64) -> f64 {
        let nf = self.n as f64;
        let fp = self.f.eval(self.p);
        let d = self.f.eval(t) - fp;
        match self.side {
            Side::Upper => fp / nf + d.max(0.0) / self.q as f64,
            Side::Lower => fp / nf + d.min(0.0) / (nf - self.q as f64 + 1.0),
        }
    }

    fn derivative_sides(&self, t: f64, _interval: TypeInterval) -> (f64, f64) {
        let (lo, hi) = (self.interval.lo, self.interval.hi);
        let (fl, fr) = self.f.deriv_sides(t, lo, hi);
        let eps = 1e-12 * self.interval.span();
        let denom = match self.side {
            Side::Upper => self.q as f64,
            Side::Lower => self.n as f64 - self.q as f64 + 1.0,
        };
        let active = |side_is_left: bool| match self.side {
            // Upper: the increasing branch applies strictly above p, and
            // on the right side at p itself.
            Side::Upper => {
                if side_is_left {
                    t > self.p + eps
                } else {
                    t >= self.p - eps
                }
            }
            Side::Lower => {
                if side_is_left {
                    t <= self.p + eps
                } else {
                    t < self.p - eps
                }
            }
        };
        let l = if active(true) { fl / denom } else { 0.0 };
        let r = if active(false) { fr / denom } else { 0.0 };
        (l, r)
    }

    fn anchors(&self) -> Vec<f64> {
        let mut a = vec![self.p];
        a.extend(self.f.kinks_in(self.interval.lo, self.interval.hi));
        a
    }
}

// ---------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------

/// The unanimity share as a guarantee: an upper bound when the welfare
/// is supermodular (or additive), a lower bound when submodular.
pub fn unanimity_guarantee(spec: &Arc<WelfareSpec>, cls: &ModularityClass) -> Result<Guarantee> {
    let side = match cls.tag {
        ModularityTag::Supermodular | ModularityTag::Additive => Side::Upper,
        ModularityTag::Submodular => Side::Lower,
        ModularityTag::Neither => {
            return Err(Error::UnsupportedWelfare(
                "unanimity share is one-sided only for semi-modular welfare; \
                 for quota welfare use the dedicated quota bounds"
                    .into(),
            ))
        }
    };
    Ok(Guarantee::from_curve(
        side,
        "una",
        spec.interval(),
        Arc::new(UnaCurve { spec: spec.clone() }),
    ))
}

/// The unanimity share with the side taken from the spec's cached
/// default classification.
pub fn unanimity_guarantee_default(spec: &Arc<WelfareSpec>) -> Result<Guarantee> {
    let cls = spec.default_modularity().clone();
    unanimity_guarantee(spec, &cls)
}

/// Contact-anchored simple guarantee for opponent profile c; sits on
/// the opposite side of the unanimity share.
pub fn simple_guarantee(spec: &Arc<WelfareSpec>, c: &[f64]) -> Result<Guarantee> {
    let side = match spec.default_modularity().tag {
        ModularityTag::Supermodular | ModularityTag::Additive => Side::Lower,
        ModularityTag::Submodular => Side::Upper,
        ModularityTag::Neither => {
            return Err(Error::UnsupportedWelfare(
                "simple guarantees need semi-modular welfare".into(),
            ))
        }
    };
    let curve = SimpleCurve::new(spec.clone(), c)?;
    let label = format!(
        "g_c({})",
        c.iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(",")
    );
    Ok(Guarantee::from_curve(
        side,
        label,
        spec.interval(),
        Arc::new(curve),
    ))
}

/// Simple guarantee with all opponents at one anchor type c0. The two
/// interval endpoints give the bookend guarantees g_L and g_H.
pub fn stand_alone_guarantee(spec: &Arc<WelfareSpec>, c0: f64) -> Result<Guarantee> {
    let iv = spec.interval();
    let c0 = iv.check(c0)?;
    let c = vec![c0; spec.n() - 1];
    let g = simple_guarantee(spec, &c)?;
    let eps = 1e-12 * iv.span();
    let label = if (c0 - iv.lo).abs() <= eps {
        "g_L".to_string()
    } else if (c0 - iv.hi).abs() <= eps {
        "g_H".to_string()
    } else {
        format!("g_{{{c0}}}")
    };
    Ok(g.with_label(label))
}

/// Commons intermediate guarantee g_{l,h} for W = F(x_1 + ... + x_n):
/// anchored at l opponents on L and h on H, l + h = n - 1. Convex F
/// gives a lower guarantee, concave an upper one.
pub fn lh_guarantee(
    f: &Function1D,
    n: usize,
    ell: usize,
    h: usize,
    interval: TypeInterval,
) -> Result<Guarantee> {
    if n < 2 || ell + h != n - 1 {
        return Err(Error::InvalidParameter(format!(
            "anchor counts l = {ell}, h = {h} must sum to n - 1 = {}",
            n.max(1) - 1
        )));
    }
    let nf = n as f64;
    let side = match f.convexity_on(nf * interval.lo, nf * interval.hi) {
        Convexity::Convex | Convexity::Affine => Side::Lower,
        Convexity::Concave => Side::Upper,
        Convexity::Mixed => {
            return Err(Error::InvalidFunction(
                "commons bounds need a convex or concave aggregate".into(),
            ))
        }
    };
    let curve = LhCurve::new(f.clone(), n, ell, h, interval);
    Ok(Guarantee::from_curve(
        side,
        format!("g_{{{ell},{h}}}"),
        interval,
        Arc::new(curve),
    ))
}

/// Interval of admissible tangent slopes dF at z.
fn slope_interval(f: &Function1D, z: f64, lo: f64, hi: f64) -> (f64, f64) {
    let (l, r) = f.deriv_sides(z, lo, hi);
    (l.min(r), l.max(r))
}

/// Tangent guarantee for W = F(x_1 + ... + x_n), touching the unanimity
/// share at a. Inside the central band the tangent line itself is the
/// guarantee; a touches closer to an endpoint splice the matching
/// bookend beyond the point where the tangent's contact profile leaves
/// the type cube.
pub fn tangent_guarantee(
    f: &Function1D,
    n: usize,
    a: f64,
    interval: TypeInterval,
    slope: Option<f64>,
) -> Result<Guarantee> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("n = {n}, need n >= 2")));
    }
    let a = interval.check(a)?;
    let nf = n as f64;
    let (dom_lo, dom_hi) = (nf * interval.lo, nf * interval.hi);
    let side = match f.convexity_on(dom_lo, dom_hi) {
        Convexity::Convex | Convexity::Affine => Side::Lower,
        Convexity::Concave => Side::Upper,
        Convexity::Mixed => {
            return Err(Error::InvalidFunction(
                "tangent bounds need a convex or concave aggregate".into(),
            ))
        }
    };
    let (s_lo, s_hi) = slope_interval(f, nf * a, dom_lo, dom_hi);
    let s = match slope {
        None => 0.5 * (s_lo + s_hi),
        Some(s) => {
            let slack = 1e-9 * (s_hi - s_lo).abs().max(s_hi.abs()).max(1.0);
            if s < s_lo - slack || s > s_hi + slack {
                return Err(Error::InvalidParameter(format!(
                    "slope {s} outside the tangent cone [{s_lo}, {s_hi}] at {a}"
                )));
            }
            s
        }
    };
    let f_na = f.eval(nf * a);
    // theta_a(x) = F(na)/n + s (x - a).
    let tangent = Arc::new(AffineCurve {
        c0: f_na / nf - s * a,
        c1: s,
    });
    let band_lo = ((nf - 1.0) * interval.lo + interval.hi) / nf;
    let band_hi = (interval.lo + (nf - 1.0) * interval.hi) / nf;
    let label = format!("tangent({a})");
    let curve: Arc<dyn ShareCurve> = if a >= band_lo && a <= band_hi {
        tangent
    } else if a < band_lo {
        // Contact profiles for large x would need opponents below L;
        // splice onto the low bookend, lifted to stay continuous.
        let cut = nf * a - (nf - 1.0) * interval.lo;
        let book = LhCurve::new(f.clone(), n, n - 1, 0, interval);
        let una_lo = f.eval(nf * interval.lo) / nf;
        let dy = (nf - 1.0) * (una_lo - tangent.eval(interval.lo));
        let lifted = Arc::new(ShiftCurve {
            base: Arc::new(book),
            dy,
        });
        Arc::new(SwitchCurve {
            cut,
            left: tangent,
            right: lifted,
        })
    } else {
        let cut = nf * a - (nf - 1.0) * interval.hi;
        let book = LhCurve::new(f.clone(), n, 0, n - 1, interval);
        let una_hi = f.eval(nf * interval.hi) / nf;
        let dy = (nf - 1.0) * (una_hi - tangent.eval(interval.hi));
        let lifted = Arc::new(ShiftCurve {
            base: Arc::new(book),
            dy,
        });
        Arc::new(SwitchCurve {
            cut,
            left: lifted,
            right: tangent,
        })
    };
    Ok(Guarantee::from_curve(side, label, interval, curve))
}

/// Tight bound pair for quota welfare W = F(q-th highest type), which is
/// neither super- nor submodular for 2 <= q <= n - 1. Each bound hinges
/// at its own pivot type.
pub fn quota_guarantees(
    f: &Function1D,
    n: usize,
    q: usize,
    p_minus: f64,
    p_plus: f64,
    interval: TypeInterval,
) -> Result<(Guarantee, Guarantee)> {
    if n < 3 || q < 2 || q > n - 1 {
        return Err(Error::InvalidParameter(format!(
            "quota rank q = {q} must satisfy 2 <= q <= n - 1 = {}",
            n.max(1) - 1
        )));
    }
    if !f.strictly_increasing_on(interval.lo, interval.hi) {
        return Err(Error::InvalidFunction(
            "quota bounds need a strictly increasing value function".into(),
        ));
    }
    let p_minus = interval.check(p_minus)?;
    let p_plus = interval.check(p_plus)?;
    let lower = Guarantee::from_curve(
        Side::Lower,
        format!("quota-({p_minus})"),
        interval,
        Arc::new(QuotaCurve {
            f: f.clone(),
            n,
            q,
            p: p_minus,
            side: Side::Lower,
            interval,
        }),
    );
    let upper = Guarantee::from_curve(
        Side::Upper,
        format!("quota+({p_plus})"),
        interval,
        Arc::new(QuotaCurve {
            f: f.clone(),
            n,
            q,
            p: p_plus,
            side: Side::Upper,
            interval,
        }),
    );
    Ok((lower, upper))
}

/// Reparametrize a guarantee by a strictly monotone type change theta:
/// the result bounds shares of W(theta(x_1), ..., theta(x_n)) on the new
/// interval. A decreasing theta flips the side.
pub fn transform_guarantee(
    g: &Guarantee,
    theta: &Function1D,
    new_interval: TypeInterval,
) -> Result<Guarantee> {
    let (lo, hi) = (new_interval.lo, new_interval.hi);
    let increasing = theta.strictly_increasing_on(lo, hi);
    let decreasing = theta.strictly_decreasing_on(lo, hi);
    if !increasing && !decreasing {
        return Err(Error::InvalidFunction(
            "transform must be strictly monotone on the new interval".into(),
        ));
    }
    let gi = g.interval();
    let (img_lo, img_hi) = if increasing {
        (theta.eval(lo), theta.eval(hi))
    } else {
        (theta.eval(hi), theta.eval(lo))
    };
    let slack = 1e-9 * gi.span().max(1.0);
    if (img_lo - gi.lo).abs() > slack || (img_hi - gi.hi).abs() > slack {
        return Err(Error::InvalidFunction(format!(
            "transform image [{img_lo}, {img_hi}] must match the guarantee interval [{}, {}]",
            gi.lo, gi.hi
        )));
    }
    let side = if increasing { g.side() } else { g.side().flipped() };
    // Pull the base anchors back through theta.
    let mut anchors: Vec<f64> = g
        .anchors()
        .into_iter()
        .map(|z| theta.inverse_on(z, lo, hi))
        .collect();
    anchors.extend(theta.kinks_in(lo, hi));
    let compose = Arc::new(ComposeCurve {
        base: curve_of(g),
        base_interval: gi,
        theta: theta.clone(),
    });
    Ok(Guarantee::from_curve(
        side,
        format!("{}∘θ", g.label()),
        new_interval,
        Arc::new(AnchoredCurve {
            base: compose,
            anchors,
        }),
    ))
}

/// Shift a guarantee by a separable term: if g bounds shares of W, then
/// g + w0 bounds shares of W + Σ_i w0(x_i) on the same side.
pub fn shift_guarantee(g: &Guarantee, w0: &Function1D) -> Guarantee {
    Guarantee::from_curve(
        g.side(),
        format!("{}+w0", g.label()),
        g.interval(),
        Arc::new(AddFnCurve {
            base: curve_of(g),
            w0: w0.clone(),
        }),
    )
}

/// Convex combination (1 - lambda) a + lambda b of two same-side
/// guarantees. Feasibility is preserved; tightness generally is not.
pub fn mix_guarantees(a: &Guarantee, b: &Guarantee, lambda: f64) -> Result<Guarantee> {
    if a.side() != b.side() {
        return Err(Error::InvalidParameter(
            "mixing needs guarantees on the same side".into(),
        ));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!(
            "mixing weight {lambda} outside [0, 1]"
        )));
    }
    Ok(Guarantee::from_curve(
        a.side(),
        format!("mix({lambda}; {}, {})", a.label(), b.label()),
        a.interval(),
        Arc::new(MixCurve {
            a: curve_of(a),
            b: curve_of(b),
            lambda,
        }),
    ))
}

fn curve_of(g: &Guarantee) -> Arc<dyn ShareCurve> {
    g.curve.clone()
}
