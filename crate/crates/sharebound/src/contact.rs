//! Contact correspondences for two agents.
//!
//! For n = 2 and a strictly semi-modular welfare, every tight guarantee
//! g away from the unanimity share pairs each type t with the opponent
//! types gamma(t) whose profiles (t, gamma(t)) meet the bound exactly.
//! That correspondence is symmetric about the diagonal, weakly
//! decreasing, connects (L, H) to (H, L), and crosses the diagonal at a
//! single point a where g touches the unanimity share. Conversely,
//! integrating the welfare's own slope along such a correspondence
//! rebuilds the guarantee:
//!
//!   g(x) = una(a) + integral from a to x of d/dt W(t, gamma(t)) dt
//!
//! using any measurable selection from gamma (vertical jumps carry no
//! measure, so the lower selection is used throughout).

use crate::guarantees::{Guarantee, ShareCurve, Side};
use crate::verify::{Grid, Tolerances};
use crate::welfare::{ModularityTag, TypeInterval, WelfareSpec};
use crate::{Error, Result};
use std::sync::Arc;

/// One monotone piece of the correspondence graph, x increasing and y
/// decreasing along the path.
#[derive(Clone)]
enum Segment {
    /// Straight piece from (x0, y0) to (x1, y1); horizontal, vertical,
    /// and sloped pieces all use this form.
    Line { x0: f64, y0: f64, x1: f64, y1: f64 },
    /// Graph of a decreasing function over [x0, x1].
    Func {
        x0: f64,
        x1: f64,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl std::fmt::Debug for Segment {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Segment::Line { x0, y0, x1, y1 } => {
                write!(fm, "Line(({x0}, {y0}) -> ({x1}, {y1}))")
            }
            Segment::Func { x0, x1, .. } => write!(fm, "Func([{x0}, {x1}])"),
        }
    }
}

/// Symmetric weakly decreasing correspondence on a square type space,
/// stored as a monotone path from (L, H) to (H, L) through its unique
/// diagonal point (a, a).
#[derive(Clone, Debug)]
pub struct ContactCorrespondence {
    interval: TypeInterval,
    a: f64,
    segments: Vec<Segment>,
}

impl ContactCorrespondence {
    /// Build from a staircase description of the half graph above the
    /// diagonal: levels[i] is the opponent type on [cuts[i], cuts[i+1]),
    /// with cuts[0] at the lower endpoint. Levels must be weakly
    /// decreasing; the graph is completed by a vertical jump at L up to
    /// H, the diagonal crossing, and the mirror image below the
    /// diagonal.
    pub fn from_steps(interval: TypeInterval, cuts: &[f64], levels: &[f64]) -> Result<Self> {
        let eps = 1e-9 * interval.span();
        if cuts.is_empty() || cuts.len() != levels.len() {
            return Err(Error::InvalidHalfGraph(format!(
                "{} cuts with {} levels",
                cuts.len(),
                levels.len()
            )));
        }
        if (cuts[0] - interval.lo).abs() > eps {
            return Err(Error::InvalidHalfGraph(format!(
                "first cut {} must sit at the interval start {}",
                cuts[0], interval.lo
            )));
        }
        for w in cuts.windows(2) {
            if w[1] <= w[0] + eps {
                return Err(Error::InvalidHalfGraph(format!(
                    "cuts not strictly increasing at {} .. {}",
                    w[0], w[1]
                )));
            }
        }
        for (i, &y) in levels.iter().enumerate() {
            if !interval.contains(y) {
                return Err(Error::InvalidHalfGraph(format!("level {y} outside the interval")));
            }
            if i > 0 && y > levels[i - 1] + eps {
                return Err(Error::InvalidHalfGraph(format!(
                    "levels not weakly decreasing at {} .. {y}",
                    levels[i - 1]
                )));
            }
            if cuts[i] > interval.hi + eps {
                return Err(Error::InvalidHalfGraph(format!(
                    "cut {} beyond the interval end",
                    cuts[i]
                )));
            }
        }
        let levels: Vec<f64> = levels.iter().map(|&y| interval.clamp(y)).collect();

        // Assemble the descending path piece by piece until it crosses
        // the diagonal, then truncate there.
        let mut half: Vec<Segment> = Vec::new();
        let mut a: Option<f64> = None;
        if levels[0] < interval.hi - eps {
            // Vertical entry jump at L from H down to the first level.
            if interval.lo >= levels[0] - eps {
                // The jump itself crosses the diagonal.
                a = Some(interval.lo);
                half.push(Segment::Line {
                    x0: interval.lo,
                    y0: interval.hi,
                    x1: interval.lo,
                    y1: interval.lo,
                });
            } else {
                half.push(Segment::Line {
                    x0: interval.lo,
                    y0: interval.hi,
                    x1: interval.lo,
                    y1: levels[0],
                });
            }
        }
        if a.is_none() {
            'pieces: for i in 0..levels.len() {
                let y = levels[i];
                let x_start = cuts[i];
                // The final horizontal piece runs until it meets the
                // diagonal at x = y.
                let x_end = if i + 1 < cuts.len() { cuts[i + 1] } else { y };
                if y <= x_end + eps {
                    // Crossing inside this horizontal piece.
                    let hit = y.max(x_start);
                    half.push(Segment::Line {
                        x0: x_start,
                        y0: y,
                        x1: hit,
                        y1: y,
                    });
                    a = Some(hit);
                    break 'pieces;
                }
                half.push(Segment::Line {
                    x0: x_start,
                    y0: y,
                    x1: x_end,
                    y1: y,
                });
                // Vertical connector down to the next level.
                let y_next = levels[i + 1];
                if y_next <= x_end + eps {
                    // Crossing inside the connector.
                    half.push(Segment::Line {
                        x0: x_end,
                        y0: y,
                        x1: x_end,
                        y1: x_end,
                    });
                    a = Some(x_end);
                    break 'pieces;
                }
                half.push(Segment::Line {
                    x0: x_end,
                    y0: y,
                    x1: x_end,
                    y1: y_next,
                });
            }
        }
        let a = a.ok_or_else(|| {
            Error::InvalidHalfGraph("staircase never reaches the diagonal".into())
        })?;

        // Drop degenerate pieces and mirror the rest below the diagonal.
        half.retain(|s| match s {
            Segment::Line { x0, y0, x1, y1 } => (x1 - x0).abs() > eps || (y0 - y1).abs() > eps,
            Segment::Func { .. } => true,
        });
        let mut segments = half.clone();
        for s in half.iter().rev() {
            if let Segment::Line { x0, y0, x1, y1 } = s {
                let m = Segment::Line {
                    x0: *y1,
                    y0: *x1,
                    x1: *y0,
                    y1: *x0,
                };
                if let Segment::Line { x0, y0, x1, y1 } = &m {
                    if (x1 - x0).abs() > eps || (y0 - y1).abs() > eps {
                        segments.push(m.clone());
                    }
                }
            }
        }
        Ok(ContactCorrespondence {
            interval,
            a,
            segments,
        })
    }

    /// Build from a continuous decreasing function covering the whole
    /// interval. The function must map L to H and H to L and be its own
    /// inverse (the graph is symmetric), both checked by sampling.
    pub fn from_function(
        interval: TypeInterval,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        let span = interval.span();
        let eps = 1e-6 * span;
        let ends = ((f)(interval.lo), (f)(interval.hi));
        if (ends.0 - interval.hi).abs() > eps || (ends.1 - interval.lo).abs() > eps {
            return Err(Error::InvalidHalfGraph(format!(
                "function must connect ({}, {}) to ({}, {}), got values {} and {}",
                interval.lo, interval.hi, interval.hi, interval.lo, ends.0, ends.1
            )));
        }
        let samples = 65;
        let mut prev = ends.0;
        for k in 1..=samples {
            let t = interval.lo + span * k as f64 / samples as f64;
            let y = (f)(t);
            if !interval.contains(y) {
                return Err(Error::InvalidHalfGraph(format!(
                    "value {y} at {t} escapes the interval"
                )));
            }
            if y > prev + eps {
                return Err(Error::InvalidHalfGraph(format!(
                    "function increases near {t}"
                )));
            }
            prev = y;
            let back = (f)(interval.clamp(y));
            if (back - t).abs() > 64.0 * eps {
                return Err(Error::InvalidHalfGraph(format!(
                    "graph is not symmetric: f(f({t})) = {back}"
                )));
            }
        }
        // Fixed point by bisection of f(t) - t, which decreases.
        let (mut lo, mut hi) = (interval.lo, interval.hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (f)(mid) >= mid {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        Ok(ContactCorrespondence {
            interval,
            a,
            segments: vec![Segment::Func {
                x0: interval.lo,
                x1: interval.hi,
                f,
            }],
        })
    }

    pub fn interval(&self) -> TypeInterval {
        self.interval
    }

    /// The unique diagonal point a with a in gamma(a).
    pub fn fixed_point(&self) -> f64 {
        self.a
    }

    /// Value set gamma(t) as its lower and upper endpoints.
    pub fn value_set(&self, t: f64) -> (f64, f64) {
        let eps = 1e-12 * self.interval.span();
        let t = self.interval.clamp(t);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &self.segments {
            match s {
                Segment::Line { x0, y0, x1, y1 } => {
                    if t < x0 - eps || t > x1 + eps {
                        continue;
                    }
                    if (x1 - x0).abs() <= eps {
                        lo = lo.min(*y1);
                        hi = hi.max(*y0);
                    } else {
                        let y = y0 + (y1 - y0) * (t - x0) / (x1 - x0);
                        lo = lo.min(y);
                        hi = hi.max(y);
                    }
                }
                Segment::Func { x0, x1, f } => {
                    if t >= x0 - eps && t <= x1 + eps {
                        let y = (f)(t);
                        lo = lo.min(y);
                        hi = hi.max(y);
                    }
                }
            }
        }
        debug_assert!(lo.is_finite(), "correspondence has a gap at {t}");
        (self.interval.clamp(lo), self.interval.clamp(hi))
    }

    /// Lower selection gamma-minus(t), the integrand's opponent type.
    pub fn gamma_lower(&self, t: f64) -> f64 {
        self.value_set(t).0
    }

    /// x-coordinates where the correspondence may change character;
    /// integration panels split here.
    pub fn breaks(&self) -> Vec<f64> {
        let mut b: Vec<f64> = Vec::new();
        for s in &self.segments {
            match s {
                Segment::Line { x0, x1, .. } => {
                    b.push(*x0);
                    b.push(*x1);
                }
                Segment::Func { x0, x1, .. } => {
                    b.push(*x0);
                    b.push(*x1);
                }
            }
        }
        b.push(self.a);
        b.sort_by(|p, q| p.partial_cmp(q).unwrap());
        b.dedup_by(|p, q| (*p - *q).abs() <= 1e-12 * self.interval.span());
        b
    }
}

/// The unique diagonal point of a correspondence.
pub fn fixed_point(gamma: &ContactCorrespondence) -> f64 {
    gamma.fixed_point()
}

/// Staircase constructor matching the half-graph description.
pub fn build_correspondence(
    interval: TypeInterval,
    cuts: &[f64],
    levels: &[f64],
) -> Result<ContactCorrespondence> {
    ContactCorrespondence::from_steps(interval, cuts, levels)
}

/// Eight-node Gauss-Legendre rule, exact through degree 15.
const GL8_NODES: [f64; 4] = [
    0.1834346424956498,
    0.5255324099163290,
    0.7966664774136267,
    0.9602898564975363,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.3626837833783620,
    0.3137066458778873,
    0.2223810344533745,
    0.1012285362903763,
];

fn gl8(mut f: impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for k in 0..4 {
        acc += GL8_WEIGHTS[k] * (f(mid - half * GL8_NODES[k]) + f(mid + half * GL8_NODES[k]));
    }
    acc * half
}

/// Guarantee curve defined by integrating the welfare slope along a
/// contact correspondence from its diagonal point.
struct IntegralCurve {
    spec: Arc<WelfareSpec>,
    gamma: ContactCorrespondence,
    a: f64,
    una_a: f64,
    subdivisions: usize,
}

impl IntegralCurve {
    fn slope_at(&self, t: f64) -> f64 {
        let y = self.gamma.gamma_lower(t);
        let (l, r) = self
            .spec
            .partial_derivative(0, &[self.spec.interval().clamp(t), y])
            .expect("profile inside the square");
        0.5 * (l + r)
    }
}

impl ShareCurve for IntegralCurve {
    fn eval(&self, t: f64) -> f64 {
        let t = self.spec.interval().clamp(t);
        let (lo, hi) = (self.a.min(t), self.a.max(t));
        if hi - lo == 0.0 {
            return self.una_a;
        }
        let span = self.spec.interval().span();
        let mut panels: Vec<f64> = vec![lo];
        for b in self.gamma.breaks() {
            if b > lo && b < hi {
                panels.push(b);
            }
        }
        panels.push(hi);
        let mut total = 0.0;
        for w in panels.windows(2) {
            let width = w[1] - w[0];
            let pieces = ((self.subdivisions as f64 * width / span).ceil() as usize).max(1);
            for k in 0..pieces {
                let p = w[0] + width * k as f64 / pieces as f64;
                let q = w[0] + width * (k + 1) as f64 / pieces as f64;
                total += gl8(|z| self.slope_at(z), p, q);
            }
        }
        if t >= self.a {
            self.una_a + total
        } else {
            self.una_a - total
        }
    }

    fn derivative_sides(&self, t: f64, _interval: TypeInterval) -> (f64, f64) {
        // Approaching from the left rides the upper branch of gamma,
        // from the right the lower branch.
        let (y_lo, y_hi) = self.gamma.value_set(t);
        let iv = self.spec.interval();
        let left = self
            .spec
            .partial_derivative(0, &[iv.clamp(t), y_hi])
            .expect("profile inside the square")
            .0;
        let right = self
            .spec
            .partial_derivative(0, &[iv.clamp(t), y_lo])
            .expect("profile inside the square")
            .1;
        (left, right)
    }

    fn anchors(&self) -> Vec<f64> {
        self.gamma.breaks()
    }
}

/// Integrate a contact correspondence into a guarantee for a two-agent
/// strictly semi-modular welfare. Supermodular welfare yields a lower
/// guarantee (the unanimity share is the only upper one), submodular an
/// upper guarantee.
pub fn integrate_guarantee(
    spec: &Arc<WelfareSpec>,
    gamma: &ContactCorrespondence,
) -> Result<Guarantee> {
    if spec.n() != 2 {
        return Err(Error::InvalidParameter(format!(
            "contact integration needs two agents, spec has {}",
            spec.n()
        )));
    }
    let iv = spec.interval();
    let gi = gamma.interval();
    if (gi.lo - iv.lo).abs() > 1e-9 * iv.span() || (gi.hi - iv.hi).abs() > 1e-9 * iv.span() {
        return Err(Error::InvalidParameter(
            "correspondence interval differs from the welfare interval".into(),
        ));
    }
    let cls = spec.default_modularity();
    let side = match (cls.tag, cls.strict) {
        (ModularityTag::Supermodular, true) => Side::Lower,
        (ModularityTag::Submodular, true) => Side::Upper,
        _ => {
            return Err(Error::NotStrict(format!(
                "contact integration needs strict semi-modularity, classification is {:?}",
                cls.tag
            )))
        }
    };
    let a = gamma.fixed_point();
    let una_a = spec.unanimity_value(a)?;
    let curve = IntegralCurve {
        spec: spec.clone(),
        gamma: gamma.clone(),
        a,
        una_a,
        subdivisions: 64,
    };
    Ok(Guarantee::from_curve(
        side,
        "g_gamma",
        iv,
        Arc::new(curve),
    ))
}

/// All grid pairs x1 <= x2 whose profile meets the guarantee bound
/// within the tightness tolerance, in ascending pair order.
pub fn recover_contact_set(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<Vec<(f64, f64)>> {
    if spec.n() != 2 {
        return Err(Error::InvalidParameter(format!(
            "contact recovery needs two agents, spec has {}",
            spec.n()
        )));
    }
    let pts = grid.points();
    let gvals: Vec<f64> = pts.iter().map(|&t| g.eval(t)).collect();
    let mut scale: f64 = 1.0;
    let mut slacks: Vec<(usize, usize, f64)> = Vec::new();
    for i in 0..pts.len() {
        for j in i..pts.len() {
            let w = spec.evaluate(&[pts[i], pts[j]])?;
            scale = scale.max(w.abs());
            slacks.push((i, j, (w - gvals[i] - gvals[j]).abs()));
        }
    }
    let eps = tol.tightness * scale;
    Ok(slacks
        .into_iter()
        .filter(|&(_, _, s)| s <= eps)
        .map(|(i, j, _)| (pts[i], pts[j]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::welfare::{Function1D, Term};

    #[test]
    fn gl8_integrates_low_moments_exactly() {
        // An 8-point Gauss-Legendre panel is exact through degree 15.
        for p in 0..=15u32 {
            let exact = (3f64.powi(p as i32 + 1) - 1.0) / (p as f64 + 1.0);
            let got = gl8(|t| t.powi(p as i32), 1.0, 3.0);
            assert!(
                (got - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                "moment {p}: {got} vs {exact}"
            );
        }
    }

    /// W(x1, x2) = x1 x2 on [1, 5]^2, written with exact slopes as
    /// F(x1 + x2) - f(x1) - f(x2) with F(z) = z^2/2 and f(z) = z^2/2.
    fn product2() -> Arc<WelfareSpec> {
        let big =
            Function1D::piecewise(vec![2.0, 10.0], vec![vec![0.0, 0.0, 0.5]]).unwrap();
        let small =
            Function1D::piecewise(vec![1.0, 5.0], vec![vec![0.0, 0.0, -0.5]]).unwrap();
        WelfareSpec::new(
            TypeInterval::new(1.0, 5.0).unwrap(),
            2,
            vec![
                Term::SubstituteInputs(big),
                Term::SeparableAdditive(small),
            ],
        )
        .unwrap()
    }

    #[test]
    fn antidiagonal_integrates_to_closed_form() {
        let spec = product2();
        let iv = spec.interval();
        let gamma =
            ContactCorrespondence::from_function(iv, Arc::new(|t: f64| 6.0 - t)).unwrap();
        assert!((gamma.fixed_point() - 3.0).abs() < 1e-9);
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        assert_eq!(g.side(), Side::Lower);
        for k in 0..=40 {
            let x = 1.0 + 4.0 * k as f64 / 40.0;
            let expect = 6.0 * x - 0.5 * x * x - 9.0;
            assert!(
                (g.eval(x) - expect).abs() < 1e-12,
                "x = {x}: {} vs {expect}",
                g.eval(x)
            );
        }
        assert!((g.eval(1.0) + g.eval(5.0) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn staircase_matches_hand_integration() {
        let spec = product2();
        let iv = spec.interval();
        let gamma = build_correspondence(iv, &[1.0, 2.0], &[5.0, 4.0]).unwrap();
        assert!((gamma.fixed_point() - 4.0).abs() < 1e-12);
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        // gamma: 5 on [1,2), 4 on [2,4), then the mirror: 2 on (4,5].
        assert!((g.eval(1.0) + 5.0).abs() < 1e-10, "{}", g.eval(1.0));
        assert!((g.eval(2.0) - 0.0).abs() < 1e-10);
        assert!((g.eval(3.0) - 4.0).abs() < 1e-10);
        assert!((g.eval(5.0) - 10.0).abs() < 1e-10);
        // Contacts close exactly: (1,5) and (2,4) lie on the graph.
        assert!((g.eval(1.0) + g.eval(5.0) - 5.0).abs() < 1e-10);
        assert!((g.eval(2.0) + g.eval(4.0) - 8.0).abs() < 1e-10);
    }

    #[test]
    fn single_level_staircase_is_the_high_bookend() {
        let spec = product2();
        let iv = spec.interval();
        let gamma = build_correspondence(iv, &[1.0], &[5.0]).unwrap();
        assert_eq!(gamma.fixed_point(), 5.0);
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        let book = crate::guarantees::stand_alone_guarantee(&spec, 5.0).unwrap();
        for k in 0..=20 {
            let x = 1.0 + 4.0 * k as f64 / 20.0;
            assert!((g.eval(x) - book.eval(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn asymmetric_function_is_rejected() {
        let iv = TypeInterval::new(1.0, 5.0).unwrap();
        let bad = ContactCorrespondence::from_function(
            iv,
            Arc::new(|t: f64| 5.0 - (t - 1.0) * (t - 1.0) / 4.0),
        );
        assert!(bad.is_err());
        // Increasing functions are rejected too.
        let inc = ContactCorrespondence::from_function(iv, Arc::new(|t: f64| t));
        assert!(inc.is_err());
    }

    #[test]
    fn staircase_validation() {
        let iv = TypeInterval::new(0.0, 1.0).unwrap();
        assert!(build_correspondence(iv, &[0.2], &[1.0]).is_err()); // first cut off L
        assert!(build_correspondence(iv, &[0.0, 0.0], &[1.0, 0.5]).is_err()); // cuts tie
        assert!(build_correspondence(iv, &[0.0, 0.5], &[0.5, 1.0]).is_err()); // levels rise
        let ok = build_correspondence(iv, &[0.0, 0.25], &[1.0, 0.75]).unwrap();
        assert!((ok.fixed_point() - 0.75).abs() < 1e-12);
        let (lo, hi) = ok.value_set(0.25);
        assert!((lo - 0.75).abs() < 1e-12 && (hi - 1.0).abs() < 1e-12);
    }

    #[test]
    fn recover_contacts_of_antidiagonal() {
        let spec = product2();
        let grid = Grid::new(spec.interval(), 21, &[]).unwrap();
        let gamma =
            ContactCorrespondence::from_function(spec.interval(), Arc::new(|t: f64| 6.0 - t))
                .unwrap();
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        let contacts =
            recover_contact_set(&g, &spec, &grid, &Tolerances::default()).unwrap();
        assert!(!contacts.is_empty());
        for (x1, x2) in contacts {
            assert!(
                (x1 + x2 - 6.0).abs() <= grid.max_cell() + 1e-9,
                "({x1}, {x2}) is far from the contact line"
            );
        }
    }

    #[test]
    fn integration_gate_requires_two_agents_and_strictness() {
        let iv = TypeInterval::new(0.0, 1.0).unwrap();
        // Additive two-agent welfare: not strict.
        let additive = WelfareSpec::new(
            iv,
            2,
            vec![Term::SeparableAdditive(Function1D::identity(0.0, 1.0))],
        )
        .unwrap();
        let gamma =
            ContactCorrespondence::from_function(iv, Arc::new(|t: f64| 1.0 - t)).unwrap();
        assert!(matches!(
            integrate_guarantee(&additive, &gamma),
            Err(Error::NotStrict(_))
        ));
    }
}
