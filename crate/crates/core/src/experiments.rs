//! Scripted experiments: index policy versus relaxed optimum as the
//! population grows, and the fairness/load trade-off curve.

use std::io;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{segment_integrals, time_to_reach, Scenario, UserParams};
use crate::relaxed::{pareto_frontier, solve_relaxed, FrontierPoint};
use crate::steady::{fixed_point_closed_form, FixedPoint};

/// Per-user long-run fairness of the index policy in its periodic regime.
///
/// In steady state every user traverses `[b x1, x1]` once per `N` events, so
/// the average is that of a single sawtooth with peak `x1`.
pub fn per_user_index_value(fp: &FixedPoint, user: &UserParams, alpha: f64) -> Result<f64> {
    let x1 = fp.profile.rates()[0];
    let low = user.b * x1;
    let seg = segment_integrals(low, x1, user, alpha)?;
    Ok(seg.fairness / time_to_reach(low, x1, user)?)
}

/// One population size in an asymptotic sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    #[serde(rename = "j_index")]
    pub per_user_j_index: f64,
    #[serde(rename = "j_relaxed")]
    pub per_user_j_relaxed: f64,
    /// `|j_index - j_relaxed| / |j_relaxed|`.
    pub gap: f64,
    pub x1_fixed: f64,
    pub x_bar: f64,
}

impl SweepRow {
    /// The hard-constrained value cannot beat the relaxed optimum. For
    /// `alpha > 1` values are negative and the same inequality means a
    /// larger magnitude.
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        self.per_user_j_index <= self.per_user_j_relaxed + tol
    }

    /// `x_bar - x1_fixed`.
    pub fn threshold_gap(&self) -> f64 {
        self.x_bar - self.x1_fixed
    }
}

fn check_sweep_inputs(user: &UserParams, n_list: &[usize]) -> Result<()> {
    user.check(0)?;
    if user.is_exponential() {
        return Err(Error::invalid("sweep needs gamma < 1"));
    }
    if n_list.is_empty() || n_list[0] == 0 {
        return Err(Error::invalid("population list must be non-empty and positive"));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("population list must be strictly increasing"));
    }
    Ok(())
}

fn sweep_row(user: &UserParams, alpha: f64, per_user_capacity: f64, n: usize) -> Result<SweepRow> {
    let capacity = per_user_capacity * n as f64;
    let fp = fixed_point_closed_form(n, user, capacity)?;
    let j_index = per_user_index_value(&fp, user, alpha)?;
    let scenario = Scenario::homogeneous(n, *user, alpha, capacity, per_user_capacity / 2.0)?;
    let relaxed = solve_relaxed(&scenario)?;
    let j_relaxed = relaxed.total_j / n as f64;
    Ok(SweepRow {
        n,
        per_user_j_index: j_index,
        per_user_j_relaxed: j_relaxed,
        gap: (j_index - j_relaxed).abs() / j_relaxed.abs(),
        x1_fixed: fp.profile.rates()[0],
        x_bar: relaxed.thresholds[0],
    })
}

/// Compares the index policy with the relaxed optimum for homogeneous
/// populations of each size in `n_list`, at capacity `per_user_capacity * N`.
pub fn asymptotic_sweep(
    user: &UserParams,
    alpha: f64,
    per_user_capacity: f64,
    n_list: &[usize],
) -> Result<Vec<SweepRow>> {
    parallel_sweep(user, alpha, per_user_capacity, n_list, 1)
}

/// [`asymptotic_sweep`] on up to `jobs` threads. Rows come back in the
/// order of `n_list` regardless of scheduling.
pub fn parallel_sweep(
    user: &UserParams,
    alpha: f64,
    per_user_capacity: f64,
    n_list: &[usize],
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    check_sweep_inputs(user, n_list)?;
    if !(per_user_capacity > 0.0 && per_user_capacity.is_finite()) {
        return Err(Error::invalid(format!("per-user capacity must be positive, got {per_user_capacity}")));
    }
    let jobs = jobs.clamp(1, n_list.len());
    if jobs == 1 {
        return n_list.iter().map(|&n| sweep_row(user, alpha, per_user_capacity, n)).collect();
    }
    let chunk = n_list.len().div_ceil(jobs);
    thread::scope(|scope| {
        let handles: Vec<_> = n_list
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&n| sweep_row(user, alpha, per_user_capacity, n))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(n_list.len());
        for h in handles {
            rows.extend(h.join().expect("sweep worker panicked")?);
        }
        Ok(rows)
    })
}

/// Rows `(lambda, x_bar, -J*, G*)` tracing the fairness/load trade-off.
pub fn frontier_report(user: &UserParams, alpha: f64, lambda_grid: &[f64]) -> Result<Vec<FrontierPoint>> {
    pareto_frontier(user, alpha, lambda_grid)
}

/// `count` log-spaced multipliers from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(Error::invalid("log grid needs 0 < lo < hi and at least two points"));
    }
    let step = (hi / lo).ln() / (count - 1) as f64;
    Ok((0..count).map(|i| lo * (step * i as f64).exp()).collect())
}

/// CSV with header `n,j_index,j_relaxed,gap,x1_fixed,x_bar`.
pub fn write_sweep_csv<W: io::Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `lambda,x_bar,neg_j,g`.
pub fn write_frontier_csv<W: io::Write>(points: &[FrontierPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}
