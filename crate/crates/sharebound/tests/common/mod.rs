//! Shared fixtures for the integration suites.
//!
//! Every fixture is a welfare with hand-derived closed forms used as
//! oracles, so test expectations never come from the code under test.

#![allow(dead_code)]

use sharebound::welfare::{CustomEval, Function1D, Term, TypeInterval, WelfareSpec};
use std::sync::Arc;

pub fn iv(lo: f64, hi: f64) -> TypeInterval {
    TypeInterval::new(lo, hi).unwrap()
}

/// Quadratic t^2 as a one-piece polynomial on [lo, hi].
pub fn quadratic(lo: f64, hi: f64, scale: f64) -> Function1D {
    Function1D::piecewise(vec![lo, hi], vec![vec![0.0, 0.0, scale]]).unwrap()
}

/// Convex piecewise-linear aggregate on [0, span] with three pieces.
/// Kinks sit at the fractions k1 < k2 of the span; the slope increments
/// s must be positive, so slopes strictly increase.
pub fn convex_commons(span: f64, k1: f64, k2: f64, s: [f64; 3]) -> Function1D {
    let (k1, k2) = (k1 * span, k2 * span);
    let slopes = [s[0], s[0] + s[1], s[0] + s[1] + s[2]];
    let v1 = slopes[0] * k1;
    let v2 = v1 + slopes[1] * (k2 - k1);
    Function1D::piecewise(
        vec![0.0, k1, k2, span],
        vec![
            vec![0.0, slopes[0]],
            vec![v1 - slopes[1] * k1, slopes[1]],
            vec![v2 - slopes[2] * k2, slopes[2]],
        ],
    )
    .unwrap()
}

/// W(x) = max_i x_i on [0, 1]^3. Submodular but not strictly: the
/// defect vanishes whenever a bystander holds the best type.
/// una(t) = t / 3.
pub fn max_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(0.0, 1.0),
        3,
        vec![Term::RankSeparable(vec![
            Function1D::identity(0.0, 1.0),
            Function1D::zero(0.0, 1.0),
            Function1D::zero(0.0, 1.0),
        ])],
    )
    .unwrap()
}

/// Queuing welfare on [0, 1]^3: with types sorted best first, position
/// k (1-based) contributes k times its type, so waiting is costliest
/// for the slowest server. Strictly supermodular; una(t) = 2t.
pub fn queuing_spec() -> Arc<WelfareSpec> {
    let w = |k: f64| Function1D::piecewise(vec![0.0, 1.0], vec![vec![0.0, k]]).unwrap();
    WelfareSpec::new(
        iv(0.0, 1.0),
        3,
        vec![Term::RankSeparable(vec![w(1.0), w(2.0), w(3.0)])],
    )
    .unwrap()
}

/// W(x) = max_i x_i - min_i x_i (the spread) on [0, 1]^3.
/// Submodular; una is identically zero.
pub fn spread_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(0.0, 1.0),
        3,
        vec![Term::RankSeparable(vec![
            Function1D::identity(0.0, 1.0),
            Function1D::zero(0.0, 1.0),
            Function1D::piecewise(vec![0.0, 1.0], vec![vec![0.0, -1.0]]).unwrap(),
        ])],
    )
    .unwrap()
}

/// W(x) = sum_i (x_i - mean)^2 on [0, 1]^3, written as
/// sum_i x_i^2 - (sum_i x_i)^2 / 3. Strictly submodular and not
/// monotone; una is identically zero.
pub fn variance_spec() -> Arc<WelfareSpec> {
    let sq = quadratic(0.0, 1.0, 1.0);
    WelfareSpec::new(
        iv(0.0, 1.0),
        3,
        vec![
            Term::RankSeparable(vec![sq.clone(), sq.clone(), sq]),
            Term::SubstituteInputs(quadratic(0.0, 3.0, -1.0 / 3.0)),
        ],
    )
    .unwrap()
}

/// Kinked commons on [0, 2]^3: F(z) = max(z - 3, 0), so output starts
/// once the input sum clears half its range. Supermodular (weakly).
/// una(t) = max(t - 1, 0); the bookends are 0 and t - 1.
pub fn kinked_commons_f() -> Function1D {
    Function1D::piecewise(vec![0.0, 3.0, 6.0], vec![vec![0.0], vec![-3.0, 1.0]]).unwrap()
}

pub fn kinked_commons_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(0.0, 2.0),
        3,
        vec![Term::SubstituteInputs(kinked_commons_f())],
    )
    .unwrap()
}

/// W(x) = prod_i x_i on [1, 5]^4, encoded exactly as the exponential
/// commons exp(sum log x_i). Strictly supermodular.
/// una(t) = t^4 / 4; the commons curves pull back to affine functions:
/// g with l anchors at 1 and h at 5 maps to 5^h (x - offset).
pub fn product_spec() -> Arc<WelfareSpec> {
    let base = WelfareSpec::new(
        iv(0.0, 5f64.ln()),
        4,
        vec![Term::SubstituteInputs(Function1D::Exp)],
    )
    .unwrap();
    WelfareSpec::new(
        iv(1.0, 5.0),
        4,
        vec![Term::Transformed {
            base,
            theta: Function1D::Log,
        }],
    )
    .unwrap()
}

/// The same product welfare evaluated directly, for cross-checks of
/// the transformed encoding.
pub fn product_custom_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(1.0, 5.0),
        4,
        vec![Term::Custom(CustomEval {
            name: "product".into(),
            f: Arc::new(|x: &[f64]| x.iter().product()),
        })],
    )
    .unwrap()
}

/// W(x1, x2) = x1 x2 on [1, 5]^2 with exact one-sided partials,
/// via the polarization (x1 + x2)^2 / 2 - x1^2 / 2 - x2^2 / 2.
/// Strictly supermodular; una(t) = t^2 / 2.
pub fn pairwise_product_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(1.0, 5.0),
        2,
        vec![
            Term::SubstituteInputs(quadratic(2.0, 10.0, 0.5)),
            Term::SeparableAdditive(quadratic(1.0, 5.0, -0.5)),
        ],
    )
    .unwrap()
}

/// W(x1, x2) = (x1 + x2)^2 on [0, 1]^2. Strictly supermodular with a
/// smooth welfare, so integral constructions can be checked against
/// closed forms: una(t) = 2 t^2.
pub fn sum_square_spec() -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(0.0, 1.0),
        2,
        vec![Term::SubstituteInputs(quadratic(0.0, 2.0, 1.0))],
    )
    .unwrap()
}

/// Additive welfare on [0, 1]^n for gate tests: every agent simply
/// contributes its type.
pub fn additive_spec(n: usize) -> Arc<WelfareSpec> {
    WelfareSpec::new(
        iv(0.0, 1.0),
        n,
        vec![Term::SeparableAdditive(Function1D::identity(0.0, 1.0))],
    )
    .unwrap()
}
