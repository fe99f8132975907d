//! Budget-balanced, symmetric sharing rules and the bounds they imply.
//!
//! A rule maps a profile to per-agent shares summing to the joint
//! output. Equal types always receive equal shares, and every rule here
//! evaluates order-independent aggregates from sorted copies so that
//! permuting the input permutes the output bit for bit.

use crate::guarantees::{Guarantee, GuaranteeCurve, Side};
use crate::verify::{multiset_count, for_each_multiset, Grid, EVAL_CAP};
use crate::welfare::{Function1D, WelfareSpec};
use crate::{Error, Result};
use rayon::prelude::*;
use std::sync::Arc;

/// Serial shares with ascending processing order: agents are served
/// from the smallest type up, each step averaging the welfare of the
/// truncated profile over the agents still unserved.
pub fn serial_up(spec: &WelfareSpec, x: &[f64]) -> Result<Vec<f64>> {
    serial(spec, x, true)
}

/// Serial shares processed from the largest type down.
pub fn serial_down(spec: &WelfareSpec, x: &[f64]) -> Result<Vec<f64>> {
    serial(spec, x, false)
}

fn serial(spec: &WelfareSpec, x: &[f64], ascending: bool) -> Result<Vec<f64>> {
    spec.check_profile(x)?;
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    if ascending {
        order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap());
    } else {
        order.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap());
    }
    let z: Vec<f64> = order.iter().map(|&i| x[i]).collect();

    // A[j] = W(z_0, ..., z_{j-1}, z_j, ..., z_j) / (n - j): the average
    // output if everyone not yet served had the j-th type.
    let mut a = vec![0.0; n];
    let mut profile = vec![0.0; n];
    for j in 0..n {
        profile[..j].copy_from_slice(&z[..j]);
        for slot in profile.iter_mut().skip(j) {
            *slot = z[j];
        }
        a[j] = spec.evaluate(&profile)? / (n - j) as f64;
    }

    // s_j = A[j] - sum_{k<j} A[k] / (n - 1 - k); the deductions
    // telescope so that the shares sum to W(x) exactly in real
    // arithmetic.
    let mut shares_sorted = vec![0.0; n];
    let mut acc = 0.0;
    for j in 0..n {
        shares_sorted[j] = a[j] - acc;
        if j + 1 < n {
            acc += a[j] / (n - 1 - j) as f64;
        }
    }

    // Average within tie groups: the formula already gives equal values
    // for equal types in exact arithmetic, averaging removes the last-
    // bit dependence on the stable sort order.
    let mut j = 0;
    while j < n {
        let mut k = j + 1;
        while k < n && z[k] == z[j] {
            k += 1;
        }
        if k - j > 1 {
            let avg = shares_sorted[j..k].iter().sum::<f64>() / (k - j) as f64;
            for s in &mut shares_sorted[j..k] {
                *s = avg;
            }
        }
        j = k;
    }

    let mut shares = vec![0.0; n];
    for (rank, &agent) in order.iter().enumerate() {
        shares[agent] = shares_sorted[rank];
    }
    Ok(shares)
}

/// Average-returns shares for a commons output F(x_1 + ... + x_n):
/// everyone receives their input times the average return per unit.
pub fn average_returns(f: &Function1D, x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("profile must be finite".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = sorted.iter().sum();
    if let Function1D::Piecewise(p) = f {
        let (lo, hi) = p.domain();
        let slack = 1e-9 * (hi - lo).max(1.0);
        if total < lo - slack || total > hi + slack {
            return Err(Error::Domain {
                value: total,
                lo,
                hi,
            });
        }
    }
    let output = f.eval(total);
    if total == 0.0 {
        return Ok(vec![output / x.len() as f64; x.len()]);
    }
    let rate = output / total;
    Ok(x.iter().map(|&v| v * rate).collect())
}

/// Interpolate between a lower and an upper guarantee with the single
/// profile-dependent weight that balances the budget. Feasibility of
/// both guarantees makes the weight land in [0, 1]; a profile escaping
/// the bracket beyond a 1e-9 relative slack is an error.
pub fn moving_average_rule(
    g_minus: &Guarantee,
    g_plus: &Guarantee,
    spec: &WelfareSpec,
    x: &[f64],
) -> Result<Vec<f64>> {
    if g_minus.side() != Side::Lower || g_plus.side() != Side::Upper {
        return Err(Error::InvalidParameter(
            "moving average takes a lower and an upper guarantee".into(),
        ));
    }
    let w = spec.evaluate(x)?;
    let lo: Vec<f64> = x.iter().map(|&t| g_minus.eval(t)).collect();
    let hi: Vec<f64> = x.iter().map(|&t| g_plus.eval(t)).collect();
    let s_lo: f64 = lo.iter().sum();
    let s_hi: f64 = hi.iter().sum();
    let scale = w.abs().max(s_lo.abs()).max(s_hi.abs()).max(1.0);
    let slack = 1e-9 * scale;
    if w < s_lo - slack || w > s_hi + slack {
        return Err(Error::Infeasible(format!(
            "output {w} escapes the guarantee bracket [{s_lo}, {s_hi}]"
        )));
    }
    let denom = s_hi - s_lo;
    let mu = if denom.abs() <= slack {
        0.0
    } else {
        ((w - s_lo) / denom).clamp(0.0, 1.0)
    };
    Ok(lo
        .iter()
        .zip(hi.iter())
        .map(|(&l, &h)| l + mu * (h - l))
        .collect())
}

/// Quadratic transport shares: each agent receives the squared distance
/// of their own type from the profile mean. Balances the budget for the
/// welfare Σ_i (x_i - mean)^2.
pub fn quadratic_transport_rule(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("profile must be finite".into()));
    }
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mean = sorted.iter().sum::<f64>() / x.len() as f64;
    Ok(x.iter().map(|&v| (v - mean) * (v - mean)).collect())
}

/// Spread-sharing for the range welfare W = max - min, anchored at an
/// opponent profile c: the excess of the maximum over the largest
/// anchor is split among the agents strictly above it, the shortfall of
/// the minimum below the smallest anchor among those strictly below it,
/// and the rest of the range equally among everyone.
pub fn spread_rule(c: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if c.is_empty() || c.len() + 1 != x.len() {
        return Err(Error::Shape {
            expected: x.len().max(1) - 1,
            got: c.len(),
        });
    }
    if x.iter().chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("profile must be finite".into()));
    }
    let c_min = c.iter().copied().fold(f64::INFINITY, f64::min);
    let c_max = c.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let x_min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let w = x_max - x_min;
    let above_cost = (x_max - c_max).max(0.0);
    let below_cost = (c_min - x_min).max(0.0);
    let n_above = x.iter().filter(|&&v| v > c_max).count();
    let n_below = x.iter().filter(|&&v| v < c_min).count();
    let rest = (w - above_cost - below_cost) / x.len() as f64;
    Ok(x
        .iter()
        .map(|&v| {
            let mut s = rest;
            if above_cost > 0.0 && v > c_max {
                s += above_cost / n_above as f64;
            }
            if below_cost > 0.0 && v < c_min {
                s += below_cost / n_below as f64;
            }
            s
        })
        .collect())
}

/// Everyone receives W(x)/n.
pub fn equal_split(spec: &WelfareSpec, x: &[f64]) -> Result<Vec<f64>> {
    let w = spec.evaluate(x)?;
    Ok(vec![w / x.len() as f64; x.len()])
}

/// Shares proportional to types; a zero type sum falls back to the
/// equal split.
pub fn proportional(spec: &WelfareSpec, x: &[f64]) -> Result<Vec<f64>> {
    let w = spec.evaluate(x)?;
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return Ok(vec![w / x.len() as f64; x.len()]);
    }
    Ok(x.iter().map(|&v| v / total * w).collect())
}

/// A named allocation rule, wrapping any of the shipped rules (or a
/// caller-supplied closure) behind one callable type.
#[derive(Clone)]
pub struct SharingRule {
    pub name: String,
    alloc: Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>,
}

impl std::fmt::Debug for SharingRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SharingRule({})", self.name)
    }
}

impl SharingRule {
    pub fn new(
        name: impl Into<String>,
        alloc: impl Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        SharingRule {
            name: name.into(),
            alloc: Arc::new(alloc),
        }
    }

    pub fn allocate(&self, x: &[f64]) -> Result<Vec<f64>> {
        let shares = (self.alloc)(x)?;
        if shares.len() != x.len() {
            return Err(Error::Shape {
                expected: x.len(),
                got: shares.len(),
            });
        }
        Ok(shares)
    }

    pub fn serial_up(spec: Arc<WelfareSpec>) -> Self {
        SharingRule::new("serial_up", move |x| serial_up(&spec, x))
    }

    pub fn serial_down(spec: Arc<WelfareSpec>) -> Self {
        SharingRule::new("serial_down", move |x| serial_down(&spec, x))
    }

    pub fn average_returns(f: Function1D) -> Self {
        SharingRule::new("average_returns", move |x| average_returns(&f, x))
    }

    pub fn moving_average(g_minus: Guarantee, g_plus: Guarantee, spec: Arc<WelfareSpec>) -> Self {
        SharingRule::new("moving_average", move |x| {
            moving_average_rule(&g_minus, &g_plus, &spec, x)
        })
    }

    pub fn quadratic_transport() -> Self {
        SharingRule::new("quadratic_transport", |x| quadratic_transport_rule(x))
    }

    pub fn spread(c: Vec<f64>) -> Self {
        SharingRule::new("spread", move |x| spread_rule(&c, x))
    }

    pub fn equal_split(spec: Arc<WelfareSpec>) -> Self {
        SharingRule::new("equal_split", move |x| equal_split(&spec, x))
    }

    pub fn proportional(spec: Arc<WelfareSpec>) -> Self {
        SharingRule::new("proportional", move |x| proportional(&spec, x))
    }
}

/// Envelope of shares a rule can hand an agent of each grid type, over
/// all opponent profiles drawn from the grid: the pointwise minimum is
/// the rule's implied lower bound, the maximum its implied upper bound.
pub fn implied_guarantees(
    rule: &SharingRule,
    spec: &WelfareSpec,
    grid: &Grid,
) -> Result<(GuaranteeCurve, GuaranteeCurve)> {
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
    let rows: Result<Vec<(f64, f64)>> = (0..m)
        .into_par_iter()
        .map(|it| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            let mut profile = vec![0.0; n];
            let mut err = None;
            for_each_multiset(m, n - 1, |opp| {
                if err.is_some() {
                    return;
                }
                profile[0] = pts[it];
                for (slot, &oi) in profile[1..].iter_mut().zip(opp.iter()) {
                    *slot = pts[oi];
                }
                match rule.allocate(&profile) {
                    Ok(shares) => {
                        lo = lo.min(shares[0]);
                        hi = hi.max(shares[0]);
                    }
                    Err(e) => err = Some(e),
                }
            });
            match err {
                Some(e) => Err(e),
                None => Ok((lo, hi)),
            }
        })
        .collect();
    let rows = rows?;
    let lower = GuaranteeCurve {
        label: format!("{}-", rule.name),
        points: pts.iter().zip(rows.iter()).map(|(&t, r)| (t, r.0)).collect(),
    };
    let upper = GuaranteeCurve {
        label: format!("{}+", rule.name),
        points: pts.iter().zip(rows.iter()).map(|(&t, r)| (t, r.1)).collect(),
    };
    Ok((lower, upper))
}
