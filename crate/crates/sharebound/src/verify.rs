//! Grid-based verification of guarantees and rules.
//!
//! Every check scans finitely many profiles built from a type grid and
//! reports the worst margin together with an achieving witness, so a
//! failure is always reproducible by direct evaluation.

use crate::guarantees::{Guarantee, Side};
use crate::welfare::{Function1D, ModularityTag, Term, TypeInterval, WelfareSpec};
use crate::{Error, Result};
use rayon::prelude::*;
use std::fmt;
use std::sync::Arc;

/// Hard cap on welfare evaluations per scan. Scans above the cap fail
/// fast with a budget error instead of hanging.
pub const EVAL_CAP: u64 = 5_000_000;

/// Number of size-k multisets over m values: C(m + k - 1, k), saturating.
pub fn multiset_count(m: usize, k: usize) -> u64 {
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((m + j) as u128);
        acc /= (j + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Visit every size-k multiset of indices 0..m as a non-increasing tuple
/// (so the induced profile is already sorted decreasingly).
pub fn for_each_multiset(m: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 {
        f(&[]);
        return;
    }
    if m == 0 {
        return;
    }
    let mut idx = vec![0usize; k];
    loop {
        f(&idx);
        // Advance the rightmost slot that can still grow under the
        // non-increasing constraint, resetting everything after it.
        let mut j = k;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            let cap = if j == 0 { m - 1 } else { idx[j - 1] };
            if idx[j] < cap {
                idx[j] += 1;
                for slot in idx.iter_mut().skip(j + 1) {
                    *slot = 0;
                }
                break;
            }
        }
    }
}

/// Finite evaluation grid on a type interval: m uniform points plus
/// caller anchors, sorted and deduplicated.
#[derive(Clone, Debug)]
pub struct Grid {
    interval: TypeInterval,
    points: Vec<f64>,
}

impl Grid {
    pub fn new(interval: TypeInterval, m: usize, anchors: &[f64]) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 2 points, got {m}"
            )));
        }
        let mut pts: Vec<f64> = (0..m)
            .map(|k| interval.lo + interval.span() * k as f64 / (m - 1) as f64)
            .collect();
        for &a in anchors {
            if !interval.contains(a) {
                return Err(Error::InvalidParameter(format!(
                    "anchor {a} outside [{}, {}]",
                    interval.lo, interval.hi
                )));
            }
            pts.push(interval.clamp(a));
        }
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let eps = 1e-12 * interval.span();
        let mut dedup: Vec<f64> = Vec::with_capacity(pts.len());
        for p in pts {
            if dedup.last().map_or(true, |&q| p - q > eps) {
                dedup.push(p);
            }
        }
        // Keep the exact endpoints regardless of anchor rounding.
        dedup[0] = interval.lo;
        *dedup.last_mut().unwrap() = interval.hi;
        Ok(Grid {
            interval,
            points: dedup,
        })
    }

    pub fn interval(&self) -> TypeInterval {
        self.interval
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest gap between adjacent grid points.
    pub fn max_cell(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// Relative tolerances used across the checks; every comparison
/// multiplies these by a scale of max(1, sup |W|) over the scanned set.
#[derive(Clone, Copy, Debug)]
pub struct Tolerances {
    pub feasibility: f64,
    pub tightness: f64,
    pub derivative: f64,
    pub equality: f64,
    pub touch: f64,
    pub modularity: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-8,
            tightness: 1e-7,
            derivative: 1e-4,
            equality: 1e-9,
            touch: 1e-12,
            modularity: 1e-9,
        }
    }
}

/// Location where a check attains its worst margin.
#[derive(Clone, Debug, PartialEq)]
pub enum Witness {
    /// A full profile, reported in ascending order.
    Profile(Vec<f64>),
    Type(f64),
    Pair(f64, f64),
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Witness::Profile(p) => {
                write!(f, "profile (")?;
                for (i, v) in p.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ")")
            }
            Witness::Type(t) => write!(f, "type {t}"),
            Witness::Pair(s, t) => write!(f, "pair ({s}, {t})"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub check: String,
    pub pass: bool,
    /// Signed margin; its meaning is check-specific but negative is
    /// always on the failing side once the tolerance is exceeded.
    pub worst_gap: f64,
    pub witness: Option<Witness>,
    /// Absolute tolerance the margin was compared against.
    pub tolerance: f64,
}

impl fmt::Display for VerificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: {} (worst gap {:.3e}, tolerance {:.3e}",
            self.check,
            if self.pass { "PASS" } else { "FAIL" },
            self.worst_gap,
            self.tolerance
        )?;
        if let Some(w) = &self.witness {
            write!(f, ", at {w}")?;
        }
        write!(f, ")")
    }
}

/// Running minimum with a deterministic tie-break on the witness, so
/// parallel reduction order cannot change the report.
#[derive(Clone)]
struct ScanBest {
    key: f64,
    profile: Vec<f64>,
}

impl ScanBest {
    fn empty() -> Self {
        ScanBest {
            key: f64::INFINITY,
            profile: Vec::new(),
        }
    }

    fn offer(&mut self, key: f64, profile: &[f64]) {
        let better = key < self.key
            || (key == self.key && self.profile.is_empty() && !profile.is_empty())
            || (key == self.key && !self.profile.is_empty() && profile < self.profile.as_slice());
        if better {
            self.key = key;
            self.profile = profile.to_vec();
        }
    }
}

fn ascending(mut p: Vec<f64>) -> Vec<f64> {
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p
}

/// Result of scanning all grid profiles against one guarantee: the
/// minimum slack, its profile, and the welfare scale encountered.
struct SlackScan {
    min_slack: f64,
    profile: Vec<f64>,
    scale: f64,
}

fn check_guarantee_compat(g: &Guarantee, spec: &WelfareSpec) -> Result<()> {
    let gi = g.interval();
    let si = spec.interval();
    if (gi.lo - si.lo).abs() > 1e-9 * si.span() || (gi.hi - si.hi).abs() > 1e-9 * si.span() {
        return Err(Error::InvalidParameter(format!(
            "guarantee interval [{}, {}] differs from welfare interval [{}, {}]",
            gi.lo, gi.hi, si.lo, si.hi
        )));
    }
    Ok(())
}

/// Signed slack of one profile: W - Σg for a lower guarantee, Σg - W for
/// an upper one. Nonnegative everywhere means feasible.
fn profile_slack(spec: &WelfareSpec, gvals: &[f64], side: Side, idx: &[usize], pts: &[f64]) -> (f64, f64) {
    let profile: Vec<f64> = idx.iter().map(|&i| pts[i]).collect();
    let w = spec.eval_sorted(&profile);
    let sum_g: f64 = idx.iter().map(|&i| gvals[i]).sum();
    let slack = match side {
        Side::Lower => w - sum_g,
        Side::Upper => sum_g - w,
    };
    (slack, w.abs())
}

fn scan_all_profiles(g: &Guarantee, spec: &WelfareSpec, grid: &Grid) -> Result<SlackScan> {
    check_guarantee_compat(g, spec)?;
    let pts = grid.points();
    let m = pts.len();
    let n = spec.n();
    let needed = multiset_count(m, n);
    if needed > EVAL_CAP {
        return Err(Error::Budget {
            needed,
            cap: EVAL_CAP,
        });
    }
    let gvals: Vec<f64> = pts.iter().map(|&t| g.eval(t)).collect();
    let side = g.side();
    let results: Vec<(ScanBest, f64)> = (0..m)
        .into_par_iter()
        .map(|i0| {
            let mut best = ScanBest::empty();
            let mut scale: f64 = 1.0;
            let mut idx = Vec::with_capacity(n);
            for_each_multiset(i0 + 1, n - 1, |tail| {
                idx.clear();
                idx.push(i0);
                idx.extend_from_slice(tail);
                let (slack, wabs) = profile_slack(spec, &gvals, side, &idx, pts);
                scale = scale.max(wabs);
                let profile: Vec<f64> = idx.iter().map(|&i| pts[i]).collect();
                best.offer(slack, &profile);
            });
            (best, scale)
        })
        .collect();
    let mut best = ScanBest::empty();
    let mut scale: f64 = 1.0;
    for (b, s) in results {
        best.offer(b.key, &b.profile);
        scale = scale.max(s);
    }
    Ok(SlackScan {
        min_slack: best.key,
        profile: ascending(best.profile),
        scale,
    })
}

/// Worst feasibility slack of a guarantee over all grid profiles.
/// Passes when min (W - Σg) for lower, respectively min (Σg - W) for
/// upper, stays above -tol.feasibility times the welfare scale.
pub fn feasibility_gap(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let scan = scan_all_profiles(g, spec, grid)?;
    let tolerance = tol.feasibility * scan.scale;
    Ok(VerificationReport {
        check: format!("feasibility[{}]", g.label()),
        pass: scan.min_slack >= -tolerance,
        worst_gap: scan.min_slack,
        witness: Some(Witness::Profile(scan.profile)),
        tolerance,
    })
}

/// Per-type contact scan: for every grid point t, the smallest absolute
/// slack among profiles containing t, with the achieving profile.
fn per_type_scan(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
) -> Result<(Vec<(f64, Vec<f64>)>, f64)> {
    check_guarantee_compat(g, spec)?;
    let pts = grid.points();
    let m = pts.len();
    let n = spec.n();
    let needed = (m as u64).saturating_mul(multiset_count(m, n - 1));
    if needed > EVAL_CAP {
        return Err(Error::Budget {
            needed,
            cap: EVAL_CAP,
        });
    }
    let gvals: Vec<f64> = pts.iter().map(|&t| g.eval(t)).collect();
    let side = g.side();
    let rows: Vec<(ScanBest, f64)> = (0..m)
        .into_par_iter()
        .map(|it| {
            let mut best = ScanBest::empty();
            let mut scale: f64 = 1.0;
            let mut idx = Vec::with_capacity(n);
            for_each_multiset(m, n - 1, |opp| {
                idx.clear();
                idx.push(it);
                idx.extend_from_slice(opp);
                idx.sort_unstable_by(|a, b| b.cmp(a));
                let (slack, wabs) = profile_slack(spec, &gvals, side, &idx, pts);
                scale = scale.max(wabs);
                let profile: Vec<f64> = idx.iter().map(|&i| pts[i]).collect();
                best.offer(slack.abs(), &profile);
            });
            (best, scale)
        })
        .collect();
    let mut scale: f64 = 1.0;
    let mut out = Vec::with_capacity(m);
    for (b, s) in rows {
        scale = scale.max(s);
        out.push((b.key, ascending(b.profile)));
    }
    Ok((out, scale))
}

/// Tightness check: feasibility first, then every grid type must admit a
/// profile whose slack vanishes within tol.tightness times the scale.
/// The reported gap is the worst best-slack over types.
pub fn tightness_slack(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let feas = feasibility_gap(g, spec, grid, tol)?;
    if !feas.pass {
        return Err(Error::Infeasible(format!(
            "{} violates feasibility by {:.3e} at {}",
            g.label(),
            -feas.worst_gap,
            feas.witness.map(|w| w.to_string()).unwrap_or_default()
        )));
    }
    let (rows, scale) = per_type_scan(g, spec, grid)?;
    let pts = grid.points();
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;
    for (i, (slack, profile)) in rows.iter().enumerate() {
        if *slack > worst {
            worst = *slack;
            witness = Some((pts[i], profile.clone()));
        }
    }
    let tolerance = tol.tightness * scale;
    let (wt, wp) = witness.unwrap();
    let pass = worst <= tolerance;
    let check = if pass {
        format!("tightness[{}]", g.label())
    } else {
        format!("tightness[{}] (no contact for type {wt})", g.label())
    };
    Ok(VerificationReport {
        check,
        pass,
        worst_gap: worst,
        witness: Some(Witness::Profile(wp)),
        tolerance,
    })
}

/// Weak pointwise dominance on the grid: a at least as strong as b
/// everywhere (higher for lower guarantees, lower for upper ones).
pub fn dominates(a: &Guarantee, b: &Guarantee, grid: &Grid, tol: &Tolerances) -> Result<bool> {
    if a.side() != b.side() {
        return Err(Error::InvalidParameter(
            "dominance compares guarantees of the same side".into(),
        ));
    }
    let mut scale: f64 = 1.0;
    let mut worst = f64::INFINITY;
    for &t in grid.points() {
        let (va, vb) = (a.eval(t), b.eval(t));
        scale = scale.max(va.abs()).max(vb.abs());
        let margin = match a.side() {
            Side::Lower => va - vb,
            Side::Upper => vb - va,
        };
        worst = worst.min(margin);
    }
    Ok(worst >= -tol.equality * scale)
}

/// Max absolute difference of two curves on the grid, against
/// tol.equality times the larger magnitude.
pub fn guarantees_equal(
    a: &Guarantee,
    b: &Guarantee,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let mut scale: f64 = 1.0;
    let mut worst = 0.0;
    let mut at = grid.interval().lo;
    for &t in grid.points() {
        let (va, vb) = (a.eval(t), b.eval(t));
        scale = scale.max(va.abs()).max(vb.abs());
        let d = (va - vb).abs();
        if d > worst {
            worst = d;
            at = t;
        }
    }
    let tolerance = tol.equality * scale;
    Ok(VerificationReport {
        check: format!("equal[{} vs {}]", a.label(), b.label()),
        pass: worst <= tolerance,
        worst_gap: worst,
        witness: Some(Witness::Type(at)),
        tolerance,
    })
}

/// Endpoint bracket check: at each interval endpoint the guarantee value
/// must lie between the two stand-alone bookends, whose outer envelope at
/// that endpoint is the unanimity curve.
pub fn bracket_check(
    g: &Guarantee,
    spec: &Arc<WelfareSpec>,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    check_guarantee_compat(g, spec)?;
    let iv = spec.interval();
    let g_lo = crate::guarantees::stand_alone_guarantee(spec, iv.lo)?;
    let g_hi = crate::guarantees::stand_alone_guarantee(spec, iv.hi)?;
    let mut worst = f64::INFINITY;
    let mut witness = iv.lo;
    let mut scale: f64 = 1.0;
    for &t in &[iv.lo, iv.hi] {
        let v = g.eval(t);
        let (a, b) = (g_lo.eval(t), g_hi.eval(t));
        let (lo, hi) = (a.min(b), a.max(b));
        scale = scale.max(lo.abs()).max(hi.abs()).max(v.abs());
        let margin = (v - lo).min(hi - v);
        if margin < worst {
            worst = margin;
            witness = t;
        }
    }
    let tolerance = tol.feasibility * scale;
    Ok(VerificationReport {
        check: format!("bracket[{}]", g.label()),
        pass: worst >= -tolerance,
        worst_gap: worst,
        witness: Some(Witness::Type(witness)),
        tolerance,
    })
}

/// Growth-order check: increments of the guarantee over every grid pair
/// must lie between the increments of the two stand-alone bookends
/// (which bookend bounds from below depends on the modularity side).
pub fn growth_order_check(
    g: &Guarantee,
    spec: &Arc<WelfareSpec>,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    check_guarantee_compat(g, spec)?;
    let iv = spec.interval();
    let g_lo = crate::guarantees::stand_alone_guarantee(spec, iv.lo)?;
    let g_hi = crate::guarantees::stand_alone_guarantee(spec, iv.hi)?;
    // Lower guarantees (supermodular side): the bookend pinned at L grows
    // slowest, the one pinned at H fastest. Upper guarantees flip.
    let (slow, fast) = match g.side() {
        Side::Lower => (&g_lo, &g_hi),
        Side::Upper => (&g_hi, &g_lo),
    };
    let pts = grid.points();
    let gv: Vec<f64> = pts.iter().map(|&t| g.eval(t)).collect();
    let sv: Vec<f64> = pts.iter().map(|&t| slow.eval(t)).collect();
    let fv: Vec<f64> = pts.iter().map(|&t| fast.eval(t)).collect();
    let mut scale: f64 = 1.0;
    for i in 0..pts.len() {
        scale = scale.max(gv[i].abs()).max(sv[i].abs()).max(fv[i].abs());
    }
    let mut worst = f64::INFINITY;
    let mut witness = (iv.lo, iv.hi);
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let dg = gv[j] - gv[i];
            let ds = sv[j] - sv[i];
            let df = fv[j] - fv[i];
            let margin = (dg - ds).min(df - dg);
            if margin < worst {
                worst = margin;
                witness = (pts[i], pts[j]);
            }
        }
    }
    let tolerance = tol.feasibility * scale;
    Ok(VerificationReport {
        check: format!("growth-order[{}]", g.label()),
        pass: worst >= -tolerance,
        worst_gap: worst,
        witness: Some(Witness::Pair(witness.0, witness.1)),
        tolerance,
    })
}

/// Sandwich check: lower guarantee <= unanimity share <= upper guarantee
/// pointwise on the grid.
pub fn sandwich_check(
    g_minus: &Guarantee,
    g_plus: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    if g_minus.side() != Side::Lower || g_plus.side() != Side::Upper {
        return Err(Error::InvalidParameter(
            "sandwich check takes a lower and an upper guarantee".into(),
        ));
    }
    check_guarantee_compat(g_minus, spec)?;
    check_guarantee_compat(g_plus, spec)?;
    let mut worst = f64::INFINITY;
    let mut witness = grid.interval().lo;
    let mut scale: f64 = 1.0;
    for &t in grid.points() {
        let una = spec.unanimity_value(t)?;
        let (lo, hi) = (g_minus.eval(t), g_plus.eval(t));
        scale = scale.max(una.abs()).max(lo.abs()).max(hi.abs());
        let margin = (una - lo).min(hi - una);
        if margin < worst {
            worst = margin;
            witness = t;
        }
    }
    let tolerance = tol.feasibility * scale;
    Ok(VerificationReport {
        check: format!("sandwich[{} | {}]", g_minus.label(), g_plus.label()),
        pass: worst >= -tolerance,
        worst_gap: worst,
        witness: Some(Witness::Type(witness)),
        tolerance,
    })
}

/// Derivative compatibility at contacts: where the guarantee touches the
/// welfare bound, its derivative interval must meet the welfare's own
/// partial derivative interval (inequality one-sided at the endpoints).
pub fn contact_derivative_check(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<VerificationReport> {
    let (rows, scale) = per_type_scan(g, spec, grid)?;
    let pts = grid.points();
    let iv = grid.interval();
    let contact_tol = tol.tightness * scale;
    let tolerance = tol.derivative * scale.max(1.0);
    let mut worst = f64::INFINITY;
    let mut witness = None;
    let mut contacts = 0usize;
    for (i, (slack, profile)) in rows.iter().enumerate() {
        if *slack > contact_tol {
            continue;
        }
        contacts += 1;
        let t = pts[i];
        // Place the probed coordinate explicitly; the rest of the
        // contact profile keeps its own order (evaluation sorts anyway).
        let pos = profile
            .iter()
            .position(|&v| (v - t).abs() <= 1e-12 * iv.span().max(1.0))
            .unwrap_or(0);
        let (wl, wr) = spec.partial_derivative(pos, profile)?;
        let (w_lo, w_hi) = (wl.min(wr), wl.max(wr));
        let (gl, gr) = g.derivative_sides(t);
        let (g_lo, g_hi) = (gl.min(gr), gl.max(gr));
        let at_lo = (t - iv.lo).abs() <= 1e-12 * iv.span();
        let at_hi = (t - iv.hi).abs() <= 1e-12 * iv.span();
        let margin = if !at_lo && !at_hi {
            // Interior contact: the intervals must overlap.
            (w_hi - g_lo).min(g_hi - w_lo)
        } else {
            let le_required = (at_lo && g.side() == Side::Lower) || (at_hi && g.side() == Side::Upper);
            if le_required {
                // Guarantee may not grow faster than the welfare section.
                w_hi - g_lo
            } else {
                g_hi - w_lo
            }
        };
        if margin < worst {
            worst = margin;
            witness = Some(Witness::Type(t));
        }
    }
    if contacts == 0 {
        return Err(Error::Infeasible(format!(
            "{} has no contact on the grid; run tightness first",
            g.label()
        )));
    }
    Ok(VerificationReport {
        check: format!("contact-derivative[{}]", g.label()),
        pass: worst >= -tolerance,
        worst_gap: worst,
        witness,
        tolerance,
    })
}

/// Count the maximal runs of grid points where the guarantee touches the
/// unanimity share. Strictly semi-modular specs admit at most one touch
/// cluster for any tight guarantee other than the unanimity curve.
pub fn unanimity_touch_count(
    g: &Guarantee,
    spec: &WelfareSpec,
    grid: &Grid,
    tol: &Tolerances,
) -> Result<usize> {
    let cls = spec.default_modularity();
    if !cls.strictly_semi_modular() {
        return Err(Error::NotStrict(format!(
            "touch counting needs a strictly semi-modular welfare, got {:?}",
            cls.tag
        )));
    }
    let mut scale: f64 = 1.0;
    let mut touches: Vec<bool> = Vec::with_capacity(grid.len());
    let mut gaps: Vec<f64> = Vec::with_capacity(grid.len());
    for &t in grid.points() {
        let una = spec.unanimity_value(t)?;
        let v = g.eval(t);
        scale = scale.max(una.abs()).max(v.abs());
        gaps.push((v - una).abs());
    }
    let eps = tol.touch * scale;
    for d in gaps {
        touches.push(d <= eps);
    }
    let mut clusters = 0;
    let mut inside = false;
    for t in touches {
        if t && !inside {
            clusters += 1;
        }
        inside = t;
    }
    Ok(clusters)
}

/// Growth comparison of rank component functions: component k must grow
/// weakly slower than component k+1 over every grid pair for the
/// assembled welfare to be supermodular, and weakly faster for it to be
/// submodular. Cross-checks the defect classification of the assembled
/// spec for consistency.
pub fn rank_growth_check(w: &[Function1D], grid: &Grid, tol: &Tolerances) -> Result<VerificationReport> {
    if w.len() < 2 {
        return Err(Error::InvalidParameter(
            "rank growth needs at least two components".into(),
        ));
    }
    let pts = grid.points();
    let vals: Vec<Vec<f64>> = w
        .iter()
        .map(|f| pts.iter().map(|&t| f.eval(t)).collect())
        .collect();
    let mut scale: f64 = 1.0;
    for row in &vals {
        for v in row {
            scale = scale.max(v.abs());
        }
    }
    let eps = tol.modularity * scale;
    // slower_margin > -eps everywhere certifies w_k slower than w_{k+1}.
    let mut slower_worst = f64::INFINITY;
    let mut faster_worst = f64::INFINITY;
    let mut witness = (pts[0], pts[0]);
    for k in 0..w.len() - 1 {
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let dk = vals[k][j] - vals[k][i];
                let dk1 = vals[k + 1][j] - vals[k + 1][i];
                let slower = dk1 - dk;
                let faster = dk - dk1;
                if slower < slower_worst {
                    slower_worst = slower;
                    witness = (pts[i], pts[j]);
                }
                faster_worst = faster_worst.min(faster);
            }
        }
    }
    let growth_tag = if slower_worst >= -eps && faster_worst >= -eps {
        ModularityTag::Additive
    } else if slower_worst >= -eps {
        ModularityTag::Supermodular
    } else if faster_worst >= -eps {
        ModularityTag::Submodular
    } else {
        ModularityTag::Neither
    };
    let spec = WelfareSpec::new(grid.interval(), w.len(), vec![Term::RankSeparable(w.to_vec())])?;
    let cls = spec.classify_modularity(grid)?;
    let consistent = match (growth_tag, cls.tag) {
        (a, b) if a == b => true,
        // A grid too coarse to expose a strict defect can refine
        // Additive into either one-sided class.
        (ModularityTag::Supermodular, ModularityTag::Additive) => true,
        (ModularityTag::Submodular, ModularityTag::Additive) => true,
        _ => false,
    };
    Ok(VerificationReport {
        check: format!("rank-growth[{:?} vs defect {:?}]", growth_tag, cls.tag),
        pass: consistent,
        worst_gap: slower_worst.min(faster_worst),
        witness: Some(Witness::Pair(witness.0, witness.1)),
        tolerance: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::welfare::TypeInterval;

    #[test]
    fn multiset_enumeration_matches_count() {
        for (m, k) in [(3, 2), (5, 3), (7, 1), (4, 0), (2, 4)] {
            let mut seen = 0u64;
            let mut last: Option<Vec<usize>> = None;
            for_each_multiset(m, k, |idx| {
                seen += 1;
                assert!(idx.windows(2).all(|w| w[0] >= w[1]), "not non-increasing");
                if let Some(prev) = &last {
                    assert!(prev.as_slice() < idx, "enumeration not strictly ordered");
                }
                last = Some(idx.to_vec());
            });
            assert_eq!(seen, multiset_count(m, k), "m={m} k={k}");
        }
    }

    #[test]
    fn multiset_count_closed_form() {
        assert_eq!(multiset_count(3, 2), 6);
        assert_eq!(multiset_count(10, 4), 715);
        assert_eq!(multiset_count(1, 5), 1);
    }

    #[test]
    fn grid_dedup_and_anchors() {
        let iv = TypeInterval::new(0.0, 1.0).unwrap();
        let g = Grid::new(iv, 5, &[0.25, 0.5, 0.999999999999999]).unwrap();
        // 0.25 and 0.5 coincide with uniform points; the near-1 anchor
        // merges into the endpoint.
        assert_eq!(g.points().len(), 5);
        assert_eq!(*g.points().last().unwrap(), 1.0);
        assert!(Grid::new(iv, 5, &[1.5]).is_err());
        assert!(Grid::new(iv, 1, &[]).is_err());
    }

    #[test]
    fn grid_keeps_exact_endpoints() {
        let iv = TypeInterval::new(1.0, 5.0).unwrap();
        let g = Grid::new(iv, 41, &[2.75]).unwrap();
        assert_eq!(g.points()[0], 1.0);
        assert_eq!(*g.points().last().unwrap(), 5.0);
        assert!(g.points().iter().any(|&p| (p - 2.75).abs() < 1e-15));
    }
}
