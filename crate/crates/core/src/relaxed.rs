//! Closed-form solution of the problem with the time-averaged capacity
//! constraint.
//!
//! For a fixed multiplier `lambda` each user's Lagrangian subproblem is
//! solved by a threshold policy: impulse as soon as the rate reaches
//! `x_bar(lambda)`. Under that policy the long-run averages are
//!
//! ```text
//! J* = C_J * x_bar^(1-alpha)      (fairness time-average)
//! G* = C_G * x_bar                (load time-average)
//! ```
//!
//! with constants depending only on `(gamma, b, alpha)`; notably the growth
//! coefficient `a` drops out. The multiplier `lambda*` is the unique value
//! with `sum_k G*_k(lambda*) = c`.
//!
//! Sign convention: [`PerUserValues::j_star`] is `J*` itself (the quantity
//! being maximized) and [`PerUserValues::l_star`] is the scalarized cost
//! `-J* + lambda G*`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_exponent, one_minus_pow_over, validate, Scenario, UserParams};

/// Relative disagreement tolerated between the closed-form multiplier and
/// the bisection cross-check.
pub const LAMBDA_CROSS_CHECK_TOL: f64 = 1e-9;

/// `x_bar^alpha * lambda`, i.e. the numerator of the threshold formula.
fn threshold_constant(user: &UserParams, alpha: f64) -> f64 {
    let g = user.gamma;
    let b = user.b;
    // (2-g)(1-b^(2-a-g)) / ((1-b^(2-g))(2-a-g))
    one_minus_pow_over(b, 2.0 - alpha - g) / one_minus_pow_over(b, 2.0 - g)
}

/// `G* / x_bar`.
pub fn load_ratio(user: &UserParams) -> f64 {
    let b = user.b;
    if user.is_exponential() {
        (b - 1.0) / b.ln()
    } else {
        let g = user.gamma;
        one_minus_pow_over(b, 2.0 - g) / one_minus_pow_over(b, 1.0 - g)
    }
}

/// `J* / x_bar^(1-alpha)`.
pub fn fairness_ratio(user: &UserParams, alpha: f64) -> f64 {
    let b = user.b;
    if user.is_exponential() {
        -(1.0 - b.powf(1.0 - alpha)) / ((1.0 - alpha) * (1.0 - alpha) * b.ln())
    } else {
        let g = user.gamma;
        one_minus_pow_over(b, 2.0 - alpha - g) / ((1.0 - alpha) * one_minus_pow_over(b, 1.0 - g))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("multiplier must be positive and finite, got {lambda}")));
    }
    Ok(())
}

/// Optimal impulse threshold for the scalarized per-user problem
/// `-J + lambda G -> inf`.
pub fn threshold_for_lambda(user: &UserParams, alpha: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    check_exponent(user, alpha, 0)?;
    Ok((threshold_constant(user, alpha) / lambda).powf(1.0 / alpha))
}

/// Index of a user currently at rate `x`: the multiplier for which `x` is
/// the optimal threshold. Strictly decreasing in `x`.
pub fn index_of_rate(user: &UserParams, alpha: f64, x: f64) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::invalid(format!("rate must be positive and finite, got {x}")));
    }
    check_exponent(user, alpha, 0)?;
    Ok(threshold_constant(user, alpha) / x.powf(alpha))
}

/// Long-run per-user values under a threshold policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerUserValues {
    pub j_star: f64,
    pub g_star: f64,
    /// `-j_star + lambda * g_star`.
    pub l_star: f64,
}

/// Values achieved by the threshold policy `x_bar` (for any `x_bar > 0`,
/// optimal or not), scalarized with `lambda`.
pub fn values_at_threshold(user: &UserParams, alpha: f64, x_bar: f64, lambda: f64) -> Result<PerUserValues> {
    if !(x_bar > 0.0 && x_bar.is_finite()) {
        return Err(Error::invalid(format!("threshold must be positive and finite, got {x_bar}")));
    }
    check_exponent(user, alpha, 0)?;
    let j_star = fairness_ratio(user, alpha) * x_bar.powf(1.0 - alpha);
    let g_star = load_ratio(user) * x_bar;
    Ok(PerUserValues { j_star, g_star, l_star: -j_star + lambda * g_star })
}

/// Optimal per-user values at multiplier `lambda`.
pub fn per_user_values(user: &UserParams, alpha: f64, lambda: f64) -> Result<PerUserValues> {
    let x_bar = threshold_for_lambda(user, alpha, lambda)?;
    values_at_threshold(user, alpha, x_bar, lambda)
}

/// Per-user term of the multiplier formula, in factored form.
fn multiplier_term(user: &UserParams, alpha: f64) -> f64 {
    let b = user.b;
    let inv_alpha = 1.0 / alpha;
    if user.is_exponential() {
        // ((1-b^(1-a))/(1-a))^(1/a) * (1-b)^((a-1)/a) / (-ln b)
        ((1.0 - b.powf(1.0 - alpha)) / (1.0 - alpha)).powf(inv_alpha)
            * (1.0 - b).powf((alpha - 1.0) / alpha)
            / (-b.ln())
    } else {
        let g = user.gamma;
        let two_g = 2.0 - g;
        ((1.0 - g) / two_g)
            * (1.0 - b.powf(two_g))
            / (1.0 - b.powf(1.0 - g))
            * (two_g / (1.0 - b.powf(two_g))).powf(inv_alpha)
            * one_minus_pow_over(b, 2.0 - alpha - g).powf(inv_alpha)
    }
}

/// Closed-form multiplier, without the cross-check.
pub fn lambda_star_closed_form(users: &[UserParams], alpha: f64, capacity: f64) -> f64 {
    let sum: f64 = users.iter().map(|u| multiplier_term(u, alpha)).sum();
    (sum / capacity).powf(alpha)
}

/// Total optimal load at multiplier `lambda`.
pub fn total_load(users: &[UserParams], alpha: f64, lambda: f64) -> f64 {
    users
        .iter()
        .map(|u| load_ratio(u) * (threshold_constant(u, alpha) / lambda).powf(1.0 / alpha))
        .sum()
}

/// Solves `total_load(lambda) = capacity` by bisection on `ln lambda`.
///
/// Uses only [`total_load`], so it is independent of the closed form.
pub fn lambda_star_bisection(users: &[UserParams], alpha: f64, capacity: f64) -> Result<f64> {
    let excess = |ln_l: f64| total_load(users, alpha, ln_l.exp()) - capacity;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    let mut expand = 0;
    while excess(lo) <= 0.0 {
        lo *= 2.0;
        expand += 1;
        if expand > 12 {
            return Err(Error::NotConverged { routine: "multiplier bracket", iterations: expand });
        }
    }
    while excess(hi) >= 0.0 {
        hi *= 2.0;
        expand += 1;
        if expand > 24 {
            return Err(Error::NotConverged { routine: "multiplier bracket", iterations: expand });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Optimal multiplier for the relaxed problem, cross-checked against
/// bisection on the monotone map `lambda -> sum_k G*_k(lambda)`.
pub fn lambda_star(users: &[UserParams], alpha: f64, capacity: f64) -> Result<f64> {
    if users.is_empty() {
        return Err(Error::invalid("no users"));
    }
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(Error::invalid(format!("capacity must be positive, got {capacity}")));
    }
    for (k, u) in users.iter().enumerate() {
        u.check(k)?;
        check_exponent(u, alpha, k)?;
    }
    let closed = lambda_star_closed_form(users, alpha, capacity);
    let bisected = lambda_star_bisection(users, alpha, capacity)?;
    if ((closed - bisected) / closed).abs() > LAMBDA_CROSS_CHECK_TOL {
        return Err(Error::CrossCheck { quantity: "lambda*", left: closed, right: bisected });
    }
    Ok(closed)
}

/// Optimal solution of the relaxed problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    pub lambda_star: f64,
    pub thresholds: Vec<f64>,
    pub per_user: Vec<PerUserValues>,
    pub total_j: f64,
    pub total_g: f64,
}

/// Assembles the optimal thresholds and values, and checks complementary
/// slackness (`total_g == capacity`).
pub fn solve_relaxed(scenario: &Scenario) -> Result<RelaxedSolution> {
    validate(scenario)?;
    let alpha = scenario.alpha;
    let lambda = lambda_star(&scenario.users, alpha, scenario.capacity)?;
    let mut thresholds = Vec::with_capacity(scenario.len());
    let mut per_user = Vec::with_capacity(scenario.len());
    for u in &scenario.users {
        let x_bar = threshold_for_lambda(u, alpha, lambda)?;
        thresholds.push(x_bar);
        per_user.push(values_at_threshold(u, alpha, x_bar, lambda)?);
    }
    let total_j = per_user.iter().map(|v| v.j_star).sum();
    let total_g: f64 = per_user.iter().map(|v| v.g_star).sum();
    if ((total_g - scenario.capacity) / scenario.capacity).abs() > LAMBDA_CROSS_CHECK_TOL {
        return Err(Error::CrossCheck { quantity: "total load", left: total_g, right: scenario.capacity });
    }
    Ok(RelaxedSolution { lambda_star: lambda, thresholds, per_user, total_j, total_g })
}

/// One sample of the fairness/load trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub lambda: f64,
    pub x_bar: f64,
    pub neg_j: f64,
    pub g: f64,
}

/// Samples the optimal trade-off `(-J*, G*)` along a strictly increasing
/// multiplier grid.
pub fn pareto_frontier(user: &UserParams, alpha: f64, lambda_grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    if lambda_grid.is_empty() {
        return Err(Error::invalid("multiplier grid is empty"));
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("multiplier grid must be strictly increasing"));
    }
    lambda_grid
        .iter()
        .map(|&lambda| {
            let x_bar = threshold_for_lambda(user, alpha, lambda)?;
            let v = values_at_threshold(user, alpha, x_bar, lambda)?;
            Ok(FrontierPoint { lambda, x_bar, neg_j: -v.j_star, g: v.g_star })
        })
        .collect()
}

/// Slopes `dG / d(-J)` between consecutive frontier points, reordered so
/// that `-J` increases. Convexity of `G*` as a function of `-J*` means these
/// slopes increase.
pub fn frontier_slopes(points: &[FrontierPoint]) -> Vec<f64> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.neg_j, p.g)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
}

/// Whether consecutive slopes strictly increase (positive second differences).
pub fn frontier_is_convex(points: &[FrontierPoint]) -> bool {
    frontier_slopes(points).windows(2).all(|w| w[1] > w[0])
}
