//! Randomized invariants of the guarantee constructions, the
//! verification scans, and the sharing rules.

mod common;

use common::*;
use proptest::prelude::*;
use sharebound::contact::{build_correspondence, integrate_guarantee, recover_contact_set};
use sharebound::guarantees::{
    lh_guarantee, mix_guarantees, quota_guarantees, simple_guarantee, stand_alone_guarantee,
    tangent_guarantee, unanimity_guarantee_default, Side,
};
use sharebound::rules::{implied_guarantees, SharingRule};
use sharebound::verify::{
    bracket_check, feasibility_gap, growth_order_check, guarantees_equal, rank_growth_check,
    sandwich_check, tightness_slack, unanimity_touch_count, Grid, Tolerances, Witness,
};
use sharebound::welfare::{Function1D, Term, WelfareSpec};
use std::sync::Arc;

fn tol() -> Tolerances {
    Tolerances::default()
}

fn perms3() -> impl Strategy<Value = [usize; 3]> {
    prop::sample::select(vec![
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Welfare evaluation canonicalizes by sorting, so permuting a
    /// profile changes nothing, bit for bit.
    #[test]
    fn evaluation_is_exactly_symmetric(
        x in prop::array::uniform3(0.0..=1.0f64),
        p in perms3(),
    ) {
        for spec in [queuing_spec(), variance_spec(), spread_spec(), max_spec()] {
            let xp = [x[p[0]], x[p[1]], x[p[2]]];
            prop_assert_eq!(
                spec.evaluate(&x).unwrap(),
                spec.evaluate(&xp).unwrap()
            );
        }
    }

    /// The exponential-commons encoding of the product agrees with a
    /// direct product evaluation.
    #[test]
    fn transformed_product_matches_direct(x in prop::array::uniform4(1.0..=5.0f64)) {
        let spec = product_spec();
        let direct: f64 = x.iter().product();
        let via = spec.evaluate(&x).unwrap();
        prop_assert!((via - direct).abs() <= 1e-9 * 625.0, "{via} vs {direct}");
    }

    /// Where the welfare is smooth the one-sided derivative pair of a
    /// guarantee collapses to a single value.
    #[test]
    fn derivative_pair_collapses_when_smooth(t in 0.05..=0.95f64) {
        let spec = sum_square_spec();
        let una = unanimity_guarantee_default(&spec).unwrap();
        let (l, r) = una.derivative_sides(t);
        prop_assert!((l - r).abs() <= 1e-9, "una sides {l} vs {r}");
        prop_assert!((l - 4.0 * t).abs() <= 1e-9, "una' = 4t, got {l}");
    }

    /// A simple guarantee touches its bound at the anchor profile by
    /// construction, for every type.
    #[test]
    fn simple_guarantee_contacts_by_construction(
        c in prop::array::uniform2(0.0..=1.0f64),
        x in 0.0..=1.0f64,
    ) {
        let spec = queuing_spec();
        let g = simple_guarantee(&spec, &c).unwrap();
        prop_assert_eq!(g.side(), Side::Lower);
        let lhs = g.eval(x) + g.eval(c[0]) + g.eval(c[1]);
        let w = spec.evaluate(&[x, c[0], c[1]]).unwrap();
        prop_assert!((lhs - w).abs() <= 1e-9 * 6.0, "identity off by {}", lhs - w);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Random convex commons: every anchored curve is a feasible tight
    /// lower guarantee, sits inside the stand-alone bracket, grows
    /// between the bookends, and is sandwiched under the per-agent
    /// unanimity value.
    #[test]
    fn convex_commons_family_passes_all_checks(
        k1 in 0.15..=0.40f64,
        k2 in 0.55..=0.85f64,
        s in prop::array::uniform3(0.05..=1.0f64),
    ) {
        let n = 3usize;
        let f = convex_commons(n as f64, k1, k2, s);
        let interval = iv(0.0, 1.0);
        let spec = WelfareSpec::new(interval, n, vec![Term::SubstituteInputs(f.clone())]).unwrap();
        let mut anchors = spec.anchor_points();
        let curves: Vec<_> = (0..n)
            .map(|ell| lh_guarantee(&f, n, ell, n - 1 - ell, interval).unwrap())
            .collect();
        for g in &curves {
            anchors.extend(g.anchors());
        }
        let grid = Grid::new(interval, 17, &anchors).unwrap();
        let una = unanimity_guarantee_default(&spec).unwrap();
        for g in &curves {
            prop_assert_eq!(g.side(), Side::Lower);
            let fe = feasibility_gap(g, &spec, &grid, &tol()).unwrap();
            prop_assert!(fe.pass, "{fe}");
            let ti = tightness_slack(g, &spec, &grid, &tol()).unwrap();
            prop_assert!(ti.pass, "{ti}");
            let br = bracket_check(g, &spec, &tol()).unwrap();
            prop_assert!(br.pass, "{br}");
            let gr = growth_order_check(g, &spec, &grid, &tol()).unwrap();
            prop_assert!(gr.pass, "{gr}");
            let sw = sandwich_check(g, &una, &spec, &grid, &tol()).unwrap();
            prop_assert!(sw.pass, "{sw}");
        }
    }

    /// The same family stays feasible and tight with four agents.
    #[test]
    fn convex_commons_feasible_with_four_agents(
        k1 in 0.15..=0.40f64,
        k2 in 0.55..=0.85f64,
        s in prop::array::uniform3(0.05..=1.0f64),
        ell in 0usize..4,
    ) {
        let n = 4usize;
        let f = convex_commons(n as f64, k1, k2, s);
        let interval = iv(0.0, 1.0);
        let spec = WelfareSpec::new(interval, n, vec![Term::SubstituteInputs(f.clone())]).unwrap();
        let g = lh_guarantee(&f, n, ell, n - 1 - ell, interval).unwrap();
        let mut anchors = spec.anchor_points();
        anchors.extend(g.anchors());
        let grid = Grid::new(interval, 13, &anchors).unwrap();
        let fe = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(fe.pass, "{fe}");
        let ti = tightness_slack(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(ti.pass, "{ti}");
    }

    /// For a smooth strictly convex commons the distance to the
    /// unanimity curve bottoms out where the anchors average.
    #[test]
    fn lh_gap_argmin_sits_at_anchor_mean(ell in 0usize..3) {
        let n = 3;
        let f = quadratic(0.0, 3.0, 1.0);
        let interval = iv(0.0, 1.0);
        let spec = WelfareSpec::new(interval, n, vec![Term::SubstituteInputs(f.clone())]).unwrap();
        let h = n - 1 - ell;
        let g = lh_guarantee(&f, n, ell, h, interval).unwrap();
        let target = (ell as f64 * 0.0 + h as f64 * 1.0) / (n - 1) as f64;
        let grid = Grid::new(interval, 41, &[target]).unwrap();
        let (mut best_t, mut best_gap) = (f64::NAN, f64::INFINITY);
        for &t in grid.points() {
            let gap = spec.unanimity_value(t).unwrap() - g.eval(t);
            prop_assert!(gap >= -1e-12, "curve exceeds una at {t}");
            if gap < best_gap {
                best_gap = gap;
                best_t = t;
            }
        }
        prop_assert!(
            (best_t - target).abs() <= grid.max_cell() + 1e-12,
            "argmin {best_t} far from {target}"
        );
    }

    /// Random anchor vectors keep simple guarantees feasible and tight
    /// on supermodular welfare.
    #[test]
    fn random_simple_guarantees_hold_on_queuing(
        c in prop::array::uniform2(0.0..=1.0f64),
    ) {
        let spec = queuing_spec();
        let g = simple_guarantee(&spec, &c).unwrap();
        let mut anchors = vec![c[0], c[1]];
        anchors.extend(g.anchors());
        let grid = Grid::new(spec.interval(), 15, &anchors).unwrap();
        let fe = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(fe.pass, "{fe}");
        let ti = tightness_slack(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(ti.pass, "{ti}");
    }

    /// Quota bounds stay feasible for any pivot pair.
    #[test]
    fn quota_bounds_feasible_for_random_pivots(
        q in 2usize..=3,
        p_minus in 0.0..=1.0f64,
        p_plus in 0.0..=1.0f64,
    ) {
        let n = 4usize;
        let f = Function1D::identity(0.0, 1.0);
        let mut w = vec![Function1D::zero(0.0, 1.0); n];
        w[q - 1] = f.clone();
        let interval = iv(0.0, 1.0);
        let spec = WelfareSpec::new(interval, n, vec![Term::RankSeparable(w)]).unwrap();
        let (g_lo, g_hi) = quota_guarantees(&f, n, q, p_minus, p_plus, interval).unwrap();
        for g in [&g_lo, &g_hi] {
            let mut anchors = vec![p_minus, p_plus];
            anchors.extend(g.anchors());
            let grid = Grid::new(interval, 13, &anchors).unwrap();
            let fe = feasibility_gap(g, &spec, &grid, &tol()).unwrap();
            prop_assert!(fe.pass, "{fe}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Two-agent staircase correspondences: the integral construction
    /// is feasible, tight, and splits the extreme profile exactly.
    #[test]
    fn staircase_integrals_round_trip(
        c1 in 1.2..=2.4f64,
        dc in 0.4..=1.2f64,
        l1 in 3.8..=5.0f64,
        dl in 0.4..=1.2f64,
    ) {
        let spec = pairwise_product_spec();
        let interval = spec.interval();
        let cuts = vec![1.0, c1, c1 + dc];
        let levels = vec![l1, l1 - dl * 0.5, l1 - dl];
        let gamma = build_correspondence(interval, &cuts, &levels).unwrap();
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        prop_assert_eq!(g.side(), Side::Lower);

        let w_ends = spec.evaluate(&[1.0, 5.0]).unwrap();
        let split = g.eval(1.0) + g.eval(5.0);
        prop_assert!((split - w_ends).abs() <= 1e-9 * 25.0, "ends split {split} vs {w_ends}");

        let mut anchors = gamma.breaks();
        anchors.extend(g.anchors());
        let grid = Grid::new(interval, 15, &anchors).unwrap();
        let fe = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(fe.pass, "{fe}");
        let ti = tightness_slack(&g, &spec, &grid, &tol()).unwrap();
        prop_assert!(ti.pass, "{ti}");

        // Recovered contact pairs come back ascending.
        for (u, v) in recover_contact_set(&g, &spec, &grid, &tol()).unwrap() {
            prop_assert!(u <= v);
        }
    }

    /// The integral along the antidiagonal of the two-agent product
    /// matches its closed form everywhere.
    #[test]
    fn antidiagonal_integral_matches_closed_form(t in 1.0..=5.0f64) {
        let spec = pairwise_product_spec();
        let gamma = sharebound::contact::ContactCorrespondence::from_function(
            spec.interval(),
            Arc::new(|t: f64| 6.0 - t),
        )
        .unwrap();
        let g = integrate_guarantee(&spec, &gamma).unwrap();
        let expect = 6.0 * t - t * t / 2.0 - 9.0;
        prop_assert!((g.eval(t) - expect).abs() <= 1e-12 * 25.0, "{} vs {expect}", g.eval(t));
    }

    /// Cross-module agreement: for a smooth two-agent commons the
    /// tangent construction at the balanced anchor is the integral
    /// along the antidiagonal through it.
    #[test]
    fn tangent_agrees_with_antidiagonal_integral(t in 0.0..=1.0f64) {
        let spec = sum_square_spec();
        let f = quadratic(0.0, 2.0, 1.0);
        let g_tan = tangent_guarantee(&f, 2, 0.5, spec.interval(), None).unwrap();
        let gamma = sharebound::contact::ContactCorrespondence::from_function(
            spec.interval(),
            Arc::new(|t: f64| 1.0 - t),
        )
        .unwrap();
        let g_int = integrate_guarantee(&spec, &gamma).unwrap();
        prop_assert!(
            (g_tan.eval(t) - g_int.eval(t)).abs() <= 1e-9,
            "tangent {} vs integral {}",
            g_tan.eval(t),
            g_int.eval(t)
        );
        // Both touch the unanimity curve exactly once, at the anchor.
        let grid = Grid::new(spec.interval(), 21, &[0.5]).unwrap();
        let clusters = unanimity_touch_count(&g_int, &spec, &grid, &tol()).unwrap();
        prop_assert_eq!(clusters, 1);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Every rule balances its budget and treats agents symmetrically.
    #[test]
    fn rules_balance_and_commute_with_permutations(
        x in prop::array::uniform3(0.0..=1.0f64),
        p in perms3(),
    ) {
        let queuing = queuing_spec();
        let variance = variance_spec();
        let g_l = stand_alone_guarantee(&queuing, 0.0).unwrap();
        let una = unanimity_guarantee_default(&queuing).unwrap();
        let cases: Vec<(SharingRule, Arc<WelfareSpec>)> = vec![
            (SharingRule::serial_up(queuing.clone()), queuing.clone()),
            (SharingRule::serial_down(queuing.clone()), queuing.clone()),
            (SharingRule::equal_split(queuing.clone()), queuing.clone()),
            (SharingRule::proportional(queuing.clone()), queuing.clone()),
            (
                SharingRule::moving_average(g_l, una, queuing.clone()),
                queuing.clone(),
            ),
            (SharingRule::quadratic_transport(), variance.clone()),
            (SharingRule::spread(vec![0.3, 0.6]), spread_spec()),
        ];
        for (rule, spec) in &cases {
            let shares = rule.allocate(&x).unwrap();
            let w = spec.evaluate(&x).unwrap();
            let total: f64 = shares.iter().sum();
            prop_assert!((total - w).abs() <= 1e-9 * w.abs().max(1.0),
                "{}: budget {total} vs {w}", rule.name);
            let xp = [x[p[0]], x[p[1]], x[p[2]]];
            let sp = rule.allocate(&xp).unwrap();
            for i in 0..3 {
                prop_assert!((sp[i] - shares[p[i]]).abs() <= 1e-12,
                    "{}: not equivariant", rule.name);
            }
        }
    }

    /// Serial shares are decided below: changing the largest type does
    /// not move the shares of strictly smaller agents.
    #[test]
    fn serial_shares_ignore_larger_types(
        lo in 0.0..=0.4f64,
        mid in 0.45..=0.6f64,
        hi1 in 0.65..=1.0f64,
        hi2 in 0.65..=1.0f64,
    ) {
        let spec = queuing_spec();
        let a = sharebound::rules::serial_up(&spec, &[lo, mid, hi1]).unwrap();
        let b = sharebound::rules::serial_up(&spec, &[lo, mid, hi2]).unwrap();
        prop_assert_eq!(a[0], b[0]);
        prop_assert_eq!(a[1], b[1]);
    }

    /// Moving-average shares stay inside the band spanned by the two
    /// guarantees they interpolate.
    #[test]
    fn moving_average_stays_in_band(x in prop::array::uniform3(0.0..=1.0f64)) {
        let spec = queuing_spec();
        let g_l = stand_alone_guarantee(&spec, 0.0).unwrap();
        let una = unanimity_guarantee_default(&spec).unwrap();
        let rule = SharingRule::moving_average(g_l.clone(), una.clone(), spec.clone());
        let shares = rule.allocate(&x).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            let lo = g_l.eval(xi);
            let hi = una.eval(xi);
            prop_assert!(shares[i] >= lo.min(hi) - 1e-9 && shares[i] <= lo.max(hi) + 1e-9,
                "share {} outside [{lo}, {hi}]", shares[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Verification reports are reproducible: two runs of the same
    /// parallel scan agree bit for bit.
    #[test]
    fn reports_are_reproducible(c in prop::array::uniform2(0.0..=1.0f64)) {
        let spec = queuing_spec();
        let g = simple_guarantee(&spec, &c).unwrap();
        let grid = Grid::new(spec.interval(), 19, &[c[0], c[1]]).unwrap();
        let a = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        let b = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        prop_assert_eq!(a.worst_gap.to_bits(), b.worst_gap.to_bits());
        prop_assert_eq!(format!("{a}"), format!("{b}"));

        let (lo1, hi1) = implied_guarantees(
            &SharingRule::serial_up(spec.clone()), &spec, &grid).unwrap();
        let (lo2, hi2) = implied_guarantees(
            &SharingRule::serial_up(spec.clone()), &spec, &grid).unwrap();
        prop_assert_eq!(lo1.points, lo2.points);
        prop_assert_eq!(hi1.points, hi2.points);
    }

    /// A feasibility witness reproduces the reported worst gap when
    /// the profile is evaluated directly.
    #[test]
    fn witness_reproduces_worst_gap(c in prop::array::uniform2(0.0..=1.0f64)) {
        let spec = queuing_spec();
        let g = simple_guarantee(&spec, &c).unwrap();
        let grid = Grid::new(spec.interval(), 19, &[c[0], c[1]]).unwrap();
        let report = feasibility_gap(&g, &spec, &grid, &tol()).unwrap();
        let Some(Witness::Profile(xs)) = &report.witness else {
            return Err(TestCaseError::fail("missing profile witness"));
        };
        let w = spec.evaluate(xs).unwrap();
        let total: f64 = xs.iter().map(|&t| g.eval(t)).sum();
        prop_assert!(((w - total) - report.worst_gap).abs() <= 1e-12 * 6.0,
            "witness slack {} vs reported {}", w - total, report.worst_gap);
    }

    /// Monotone aggregates produce monotone guarantee curves.
    #[test]
    fn commons_curves_inherit_monotonicity(
        k1 in 0.15..=0.40f64,
        k2 in 0.55..=0.85f64,
        s in prop::array::uniform3(0.05..=1.0f64),
        ell in 0usize..3,
    ) {
        let f = convex_commons(3.0, k1, k2, s);
        let interval = iv(0.0, 1.0);
        let g = lh_guarantee(&f, 3, ell, 2 - ell, interval).unwrap();
        let grid = Grid::new(interval, 33, &g.anchors()).unwrap();
        let pts = grid.points();
        for w in pts.windows(2) {
            prop_assert!(g.eval(w[1]) >= g.eval(w[0]) - 1e-12);
        }
    }

    /// With an affine aggregate every anchored commons curve collapses
    /// onto the unanimity curve.
    #[test]
    fn affine_commons_collapse_onto_unanimity(ell in 0usize..3) {
        let f = Function1D::piecewise(vec![0.0, 3.0], vec![vec![0.25, 0.5]]).unwrap();
        let interval = iv(0.0, 1.0);
        let spec = WelfareSpec::new(interval, 3, vec![Term::SubstituteInputs(f.clone())]).unwrap();
        let g = lh_guarantee(&f, 3, ell, 2 - ell, interval).unwrap();
        let una = unanimity_guarantee_default(&spec).unwrap();
        let grid = Grid::new(interval, 21, &[]).unwrap();
        let eq = guarantees_equal(&g, &una, &grid, &tol()).unwrap();
        prop_assert!(eq.pass, "{eq}");
    }
}

#[test]
fn rank_growth_agrees_with_classification() {
    let grid = Grid::new(iv(0.0, 1.0), 9, &[]).unwrap();
    let id = Function1D::identity(0.0, 1.0);
    let zero = Function1D::zero(0.0, 1.0);
    let lin = |k: f64| Function1D::piecewise(vec![0.0, 1.0], vec![vec![0.0, k]]).unwrap();

    for w in [
        vec![id.clone(), zero.clone(), zero.clone()],
        vec![lin(1.0), lin(2.0), lin(3.0)],
        vec![lin(3.0), lin(2.0), lin(1.0)],
        vec![id.clone(), zero.clone(), lin(-1.0)],
    ] {
        let report = rank_growth_check(&w, &grid, &Tolerances::default()).unwrap();
        assert!(report.pass, "{report}");
    }
}

#[test]
fn mixtures_interpolate_between_their_parents() {
    let spec = kinked_commons_spec();
    let f = kinked_commons_f();
    let g_l = lh_guarantee(&f, 3, 2, 0, spec.interval()).unwrap();
    let g_h = lh_guarantee(&f, 3, 0, 2, spec.interval()).unwrap();
    let grid = Grid::new(spec.interval(), 21, &[1.0]).unwrap();
    for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let g = mix_guarantees(&g_l, &g_h, lambda).unwrap();
        for &t in grid.points() {
            let expect = (1.0 - lambda) * g_l.eval(t) + lambda * g_h.eval(t);
            assert!((g.eval(t) - expect).abs() <= 1e-12);
        }
    }
}
