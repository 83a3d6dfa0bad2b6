//! Event-driven simulation of N users under threshold policies and under
//! hard-constraint reduction rules such as the index policy.
//!
//! Between impulses every rate follows its exact growth law, so the
//! simulator jumps from event to event and accumulates the fairness and load
//! integrals in closed form. Nothing is discretized; long-run averages over
//! whole limit cycles are exact up to rounding.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{grow, growth_speed, impulse, segment_integrals, time_to_reach, validate, Scenario, UserParams};
use crate::relaxed::index_of_rate;

/// Default relative tolerance of the hitting-time root finder.
pub const DEFAULT_ROOT_TOL: f64 = 1e-12;
const ROOT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time: f64,
    pub rates: Vec<f64>,
}

/// When to end a run. Time-zero repair impulses do not count as events.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    MaxEvents(usize),
    MaxTime(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub stop: StopRule,
    /// Keep the per-impulse log (repair impulses included).
    pub record_events: bool,
    /// Relative tolerance for the hitting-time solver.
    pub root_tol: f64,
}

impl RunConfig {
    pub fn new(stop: StopRule) -> Self {
        Self { stop, record_events: false, root_tol: DEFAULT_ROOT_TOL }
    }

    pub fn with_events(mut self) -> Self {
        self.record_events = true;
        self
    }

    fn check(&self) -> Result<()> {
        let ok = match self.stop {
            StopRule::MaxEvents(n) => n > 0,
            StopRule::MaxTime(t) => t > 0.0 && t.is_finite(),
        };
        if !ok {
            return Err(Error::invalid("zero-length run: stop bound must be positive"));
        }
        if !(self.root_tol > 0.0 && self.root_tol < 1e-3) {
            return Err(Error::invalid(format!("root tolerance out of range: {}", self.root_tol)));
        }
        Ok(())
    }
}

/// One impulse. Repair impulses are the ones at time zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    /// 1-based sequence number over all impulses, repairs included.
    pub event: usize,
    pub time: f64,
    pub user: usize,
    pub rate_before: f64,
    pub rate_after: f64,
    /// Sum of all rates right after the impulse.
    pub sum_after: f64,
}

impl EventRecord {
    pub fn is_repair(&self) -> bool {
        self.time == 0.0
    }

    /// Sum of all rates just before the impulse.
    pub fn sum_before(&self) -> f64 {
        self.sum_after - self.rate_after + self.rate_before
    }
}

/// Cumulative totals right after a (non-repair) event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub time: f64,
    pub fairness: f64,
    pub load: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub horizon: f64,
    /// `∫ Σ_k x_k^(1-alpha)/(1-alpha) dt` over `[0, horizon]`.
    pub fairness_total: f64,
    /// `∫ Σ_k x_k dt` over `[0, horizon]`.
    pub load_total: f64,
    /// Impulses after time zero.
    pub events: usize,
    pub repair_events: usize,
    pub event_log: Option<Vec<EventRecord>>,
    #[serde(skip)]
    pub checkpoints: Vec<Checkpoint>,
    /// Rates at the horizon.
    pub final_rates: Vec<f64>,
}

/// Averages over a trailing window of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowAverages {
    pub start_time: f64,
    pub duration: f64,
    pub fairness: f64,
    pub load: f64,
}

impl TrajectoryStats {
    pub fn average_fairness(&self) -> f64 {
        self.fairness_total / self.horizon
    }

    pub fn average_load(&self) -> f64 {
        self.load_total / self.horizon
    }

    /// Averages after discarding the first `transient_fraction` of events.
    ///
    /// The window starts at the checkpoint of event
    /// `floor(events * transient_fraction)` and ends at the horizon.
    pub fn window(&self, transient_fraction: f64) -> Result<WindowAverages> {
        if !(0.0..1.0).contains(&transient_fraction) {
            return Err(Error::invalid(format!(
                "transient fraction must lie in [0, 1), got {transient_fraction}"
            )));
        }
        let skip = (self.checkpoints.len() as f64 * transient_fraction).floor() as usize;
        let start = match skip {
            0 => Checkpoint { time: 0.0, fairness: 0.0, load: 0.0 },
            s => self.checkpoints[s - 1],
        };
        let duration = self.horizon - start.time;
        if duration <= 0.0 {
            return Err(Error::invalid("empty averaging window"));
        }
        Ok(WindowAverages {
            start_time: start.time,
            duration,
            fairness: (self.fairness_total - start.fairness) / duration,
            load: (self.load_total - start.load) / duration,
        })
    }
}

/// Time until the total rate first reaches `capacity` with no impulses.
///
/// `Δ -> Σ grow(x_k, Δ)` is strictly increasing and convex, so a Newton
/// iteration started to the right of the root converges monotonically; it is
/// kept inside a bracket with bisection as fallback. When every user grows
/// linearly the closed form `(c - Σx) / Σa` is used.
pub fn hitting_time_by<F>(rates: &[f64], user_at: F, capacity: f64, tol: f64) -> Result<f64>
where
    F: Fn(usize) -> UserParams,
{
    let sum: f64 = rates.iter().sum();
    if !(sum < capacity) {
        return Err(Error::invalid(format!("total rate {sum} already at or above capacity {capacity}")));
    }
    let n = rates.len();
    if (0..n).all(|k| user_at(k).gamma == 0.0) {
        let speed: f64 = (0..n).map(|k| user_at(k).a).sum();
        return Ok((capacity - sum) / speed);
    }

    let eval = |dt: f64| -> (f64, f64) {
        let mut total = 0.0;
        let mut slope = 0.0;
        for (k, &x) in rates.iter().enumerate() {
            let u = user_at(k);
            let y = grow(x, &u, dt);
            total += y;
            slope += growth_speed(y, &u);
        }
        (total - capacity, slope)
    };

    let speed0: f64 = rates.iter().enumerate().map(|(k, &x)| growth_speed(x, &user_at(k))).sum();
    let mut lo = 0.0;
    // Tangent at zero under-estimates a convex function, so this lands at or
    // past the root. So does any single user covering the whole slack alone.
    let slack = capacity - sum;
    let mut hi = rates
        .iter()
        .enumerate()
        .filter_map(|(k, &x)| time_to_reach(x, x + slack, &user_at(k)).ok())
        .fold(slack / speed0, f64::min);
    let mut expand = 0;
    while eval(hi).0 < 0.0 {
        lo = hi;
        hi *= 2.0;
        expand += 1;
        if expand > ROOT_MAX_ITER {
            return Err(Error::NotConverged { routine: "hitting-time bracket", iterations: expand });
        }
    }

    let mut x = hi;
    for _ in 0..ROOT_MAX_ITER {
        let (fx, dfx) = eval(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let mut next = x - fx / dfx;
        if !(next >= lo && next <= hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol * x || hi - lo <= tol * hi {
            return Ok(x);
        }
    }
    Err(Error::NotConverged { routine: "hitting time", iterations: ROOT_MAX_ITER })
}

/// [`hitting_time_by`] for an explicit state and user list.
pub fn hitting_time(state: &SystemState, users: &[UserParams], capacity: f64) -> Result<f64> {
    if state.rates.len() != users.len() {
        return Err(Error::invalid("one rate per user required"));
    }
    if state.rates.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::invalid("rates must be positive"));
    }
    hitting_time_by(&state.rates, |k| users[k], capacity, DEFAULT_ROOT_TOL)
}

struct Log {
    records: Option<Vec<EventRecord>>,
    next_id: usize,
}

impl Log {
    fn new(enabled: bool) -> Self {
        Self { records: enabled.then(Vec::new), next_id: 1 }
    }

    fn enabled(&self) -> bool {
        self.records.is_some()
    }

    fn push(&mut self, time: f64, user: usize, rate_before: f64, rate_after: f64, sum_after: f64) {
        if let Some(r) = self.records.as_mut() {
            r.push(EventRecord { event: self.next_id, time, user, rate_before, rate_after, sum_after });
        }
        self.next_id += 1;
    }
}

/// Every user independently grows to its own threshold and is impulsed
/// there. Initial rates at or above the threshold are impulsed repeatedly at
/// time zero until they fall below it.
pub fn simulate_threshold(scenario: &Scenario, thresholds: &[f64], config: &RunConfig) -> Result<TrajectoryStats> {
    validate(scenario)?;
    config.check()?;
    let n = scenario.len();
    if thresholds.len() != n {
        return Err(Error::invalid(format!("expected {n} thresholds, got {}", thresholds.len())));
    }
    if let Some(bad) = thresholds.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!("thresholds must be positive, got {bad}")));
    }
    let alpha = scenario.alpha;
    let users = &scenario.users;

    let mut anchor_rate = scenario.initial_rates.clone();
    let mut anchor_time = vec![0.0; n];
    let mut log = Log::new(config.record_events);
    let mut repair_events = 0;

    for k in 0..n {
        while anchor_rate[k] >= thresholds[k] {
            let before = anchor_rate[k];
            anchor_rate[k] = impulse(before, &users[k]);
            repair_events += 1;
            let sum = anchor_rate.iter().sum();
            log.push(0.0, k, before, anchor_rate[k], sum);
        }
    }

    let mut next_time = Vec::with_capacity(n);
    for k in 0..n {
        next_time.push(time_to_reach(anchor_rate[k], thresholds[k], &users[k])?);
    }

    // Closed segments only; open ones are added on demand.
    let mut fairness = 0.0;
    let mut load = 0.0;
    let mut events = 0;
    let mut checkpoints = Vec::new();

    let open_segments = |t: f64, anchor_rate: &[f64], anchor_time: &[f64]| -> Result<(f64, f64, Vec<f64>)> {
        let mut f = 0.0;
        let mut l = 0.0;
        let mut rates = Vec::with_capacity(n);
        for k in 0..n {
            let x = grow(anchor_rate[k], &users[k], (t - anchor_time[k]).max(0.0));
            let seg = segment_integrals(anchor_rate[k], x, &users[k], alpha)?;
            f += seg.fairness;
            l += seg.load;
            rates.push(x);
        }
        Ok((f, l, rates))
    };

    let horizon = loop {
        let (k, &t) = next_time
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("at least one user");
        if let StopRule::MaxTime(limit) = config.stop {
            if t > limit {
                break limit;
            }
        }
        let seg = segment_integrals(anchor_rate[k], thresholds[k], &users[k], alpha)?;
        fairness += seg.fairness;
        load += seg.load;
        let after = impulse(thresholds[k], &users[k]);
        anchor_rate[k] = after;
        anchor_time[k] = t;
        next_time[k] = t + time_to_reach(after, thresholds[k], &users[k])?;
        events += 1;

        let (f_open, l_open, rates) = if n == 1 {
            (0.0, 0.0, vec![after])
        } else {
            open_segments(t, &anchor_rate, &anchor_time)?
        };
        checkpoints.push(Checkpoint { time: t, fairness: fairness + f_open, load: load + l_open });
        if log.enabled() {
            log.push(t, k, thresholds[k], after, rates.iter().sum());
        }
        if let StopRule::MaxEvents(limit) = config.stop {
            if events >= limit {
                break t;
            }
        }
    };

    let (f_open, l_open, final_rates) = open_segments(horizon, &anchor_rate, &anchor_time)?;
    Ok(TrajectoryStats {
        horizon,
        fairness_total: fairness + f_open,
        load_total: load + l_open,
        events,
        repair_events,
        event_log: log.records,
        checkpoints,
        final_rates,
    })
}

/// Chooses which user to impulse when the hard capacity constraint binds.
pub trait ReductionRule {
    fn select(&self, rates: &[f64]) -> usize;
}

/// Impulse the user with the smallest index `Λ_k(x_k)`; lowest user index
/// wins ties.
#[derive(Debug, Clone)]
pub struct IndexRule {
    constants: Vec<f64>,
    alpha: f64,
}

impl IndexRule {
    pub fn new(users: &[UserParams], alpha: f64) -> Result<Self> {
        let constants = users
            .iter()
            .map(|u| index_of_rate(u, alpha, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { constants, alpha })
    }

    pub fn index(&self, user: usize, rate: f64) -> f64 {
        self.constants[user] / rate.powf(self.alpha)
    }
}

impl ReductionRule for IndexRule {
    fn select(&self, rates: &[f64]) -> usize {
        let mut best = 0;
        let mut best_index = self.index(0, rates[0]);
        for (k, &x) in rates.iter().enumerate().skip(1) {
            let idx = self.index(k, x);
            if idx < best_index {
                best = k;
                best_index = idx;
            }
        }
        best
    }
}

/// Impulse the user with the largest rate; lowest user index wins ties.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxRateRule;

impl ReductionRule for MaxRateRule {
    fn select(&self, rates: &[f64]) -> usize {
        let mut best = 0;
        for (k, &x) in rates.iter().enumerate().skip(1) {
            if x > rates[best] {
                best = k;
            }
        }
        best
    }
}

/// Hard-constraint dynamics: all users grow until the total rate reaches
/// capacity, then `rule` picks one user to impulse.
///
/// An initial state at or above capacity is repaired first by impulsing the
/// selected user repeatedly at time zero until the total is below capacity.
pub fn simulate_hard_constraint<R: ReductionRule>(
    scenario: &Scenario,
    rule: &R,
    config: &RunConfig,
) -> Result<TrajectoryStats> {
    validate(scenario)?;
    config.check()?;
    let alpha = scenario.alpha;
    let capacity = scenario.capacity;
    let users = &scenario.users;
    let mut rates = scenario.initial_rates.clone();
    let mut log = Log::new(config.record_events);

    let mut repair_events = 0;
    while rates.iter().sum::<f64>() >= capacity {
        let k = rule.select(&rates);
        let before = rates[k];
        rates[k] = impulse(before, &users[k]);
        repair_events += 1;
        log.push(0.0, k, before, rates[k], rates.iter().sum());
    }

    let mut time = 0.0;
    let mut fairness = 0.0;
    let mut load = 0.0;
    let mut events = 0;
    let mut checkpoints = Vec::new();

    let advance = |rates: &mut [f64], dt: f64, fairness: &mut f64, load: &mut f64| -> Result<()> {
        for (k, x) in rates.iter_mut().enumerate() {
            let y = grow(*x, &users[k], dt);
            let seg = segment_integrals(*x, y, &users[k], alpha)?;
            *fairness += seg.fairness;
            *load += seg.load;
            *x = y;
        }
        Ok(())
    };

    loop {
        let dt = hitting_time_by(&rates, |k| users[k], capacity, config.root_tol)?;
        if let StopRule::MaxTime(limit) = config.stop {
            if time + dt > limit {
                advance(&mut rates, limit - time, &mut fairness, &mut load)?;
                time = limit;
                break;
            }
        }
        advance(&mut rates, dt, &mut fairness, &mut load)?;
        time += dt;

        let k = rule.select(&rates);
        let before = rates[k];
        rates[k] = impulse(before, &users[k]);
        events += 1;
        checkpoints.push(Checkpoint { time, fairness, load });
        if log.enabled() {
            log.push(time, k, before, rates[k], rates.iter().sum());
        }
        if let StopRule::MaxEvents(limit) = config.stop {
            if events >= limit {
                break;
            }
        }
    }

    Ok(TrajectoryStats {
        horizon: time,
        fairness_total: fairness,
        load_total: load,
        events,
        repair_events,
        event_log: log.records,
        checkpoints,
        final_rates: rates,
    })
}

/// The index policy under the hard capacity constraint.
pub fn simulate_index(scenario: &Scenario, config: &RunConfig) -> Result<TrajectoryStats> {
    validate(scenario)?;
    let rule = IndexRule::new(&scenario.users, scenario.alpha)?;
    simulate_hard_constraint(scenario, &rule, config)
}

/// Long-run average of `-x^(1-alpha)/(1-alpha) + lambda x` for the threshold
/// policy `x_bar`, from the exact integrals over one cycle `[b x_bar, x_bar]`.
pub fn cycle_objective(user: &UserParams, alpha: f64, lambda: f64, x_bar: f64) -> Result<f64> {
    if !(x_bar > 0.0 && x_bar.is_finite()) {
        return Err(Error::invalid(format!("threshold must be positive, got {x_bar}")));
    }
    let seg = segment_integrals(impulse(x_bar, user), x_bar, user, alpha)?;
    Ok((-seg.fairness + lambda * seg.load) / seg.elapsed)
}

/// Absolute bracket width at which the golden-section oracle stops.
pub const ORACLE_WIDTH: f64 = 1e-6;

/// Golden-section search for the threshold minimizing [`cycle_objective`].
///
/// Independent of the closed-form threshold; used to validate it. Reports
/// [`Error::NoInteriorMinimum`] when the search collapses onto an end of the
/// bracket.
pub fn oracle_best_threshold(user: &UserParams, alpha: f64, lambda: f64, bracket: (f64, f64)) -> Result<f64> {
    let (lo0, hi0) = bracket;
    if !(lo0 > 0.0 && hi0 > lo0 && hi0.is_finite()) {
        return Err(Error::invalid(format!("bracket must satisfy 0 < lo < hi, got ({lo0}, {hi0})")));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("multiplier must be positive, got {lambda}")));
    }
    let f = |x: f64| cycle_objective(user, alpha, lambda, x);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (lo0, hi0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let mut iterations = 0;
    while hi - lo > ORACLE_WIDTH {
        iterations += 1;
        if iterations > 10_000 {
            return Err(Error::NotConverged { routine: "golden-section search", iterations });
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    let best = 0.5 * (lo + hi);
    if best - lo0 <= 2.0 * ORACLE_WIDTH || hi0 - best <= 2.0 * ORACLE_WIDTH {
        return Err(Error::NoInteriorMinimum { lo: lo0, hi: hi0 });
    }
    Ok(best)
}

/// Writes an event log as CSV with header
/// `event,time,user,rate_before,rate_after,sum_after`.
pub fn write_events_csv<W: io::Write>(events: &[EventRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in events {
        w.serialize(e)?;
    }
    if events.is_empty() {
        w.write_record(["event", "time", "user", "rate_before", "rate_after", "sum_after"])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relaxed::{threshold_for_lambda, values_at_threshold};

    fn user(a: f64, gamma: f64, b: f64) -> UserParams {
        UserParams { a, gamma, b }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn threshold_one_cycle_matches_closed_form() {
        let u = user(1.0, 0.0, 0.5);
        let s = Scenario::new(vec![u], 0.5, 1.0, vec![2.0 / 3.0]).unwrap();
        let stats = simulate_threshold(&s, &[4.0 / 3.0], &RunConfig::new(StopRule::MaxEvents(1))).unwrap();
        assert!(rel(stats.horizon, 2.0 / 3.0) < 1e-14);
        assert!(rel(stats.average_load(), 1.0) < 1e-13);
        assert!((stats.average_fairness() - 1.9905394).abs() < 1e-6);
        let v = values_at_threshold(&u, 0.5, 4.0 / 3.0, 1.0).unwrap();
        assert!(rel(stats.average_fairness(), v.j_star) < 1e-12);
    }

    #[test]
    fn threshold_first_event_at_cycle_length() {
        let u = user(1.5, 0.5, 0.4);
        let x_bar = 2.0;
        let s = Scenario::new(vec![u], 0.5, 1.0, vec![0.8]).unwrap();
        let stats =
            simulate_threshold(&s, &[x_bar], &RunConfig::new(StopRule::MaxEvents(1)).with_events()).unwrap();
        let log = stats.event_log.unwrap();
        assert_eq!(log.len(), 1);
        assert!(rel(log[0].time, time_to_reach(0.8, x_bar, &u).unwrap()) < 1e-15);
    }

    #[test]
    fn threshold_repairs_high_start_at_time_zero() {
        let u = user(1.0, 0.0, 0.5);
        let x_bar = 4.0 / 3.0;
        let s = Scenario::new(vec![u], 0.5, 1.0, vec![10.0 * x_bar]).unwrap();
        let stats =
            simulate_threshold(&s, &[x_bar], &RunConfig::new(StopRule::MaxEvents(1)).with_events()).unwrap();
        assert_eq!(stats.repair_events, 4);
        let log = stats.event_log.unwrap();
        assert!(log[..4].iter().all(EventRecord::is_repair));
        assert!(rel(log[3].rate_after, 0.625 * x_bar) < 1e-15);
        assert!(!log[4].is_repair());
    }

    #[test]
    fn zero_length_runs_rejected() {
        let s = Scenario::new(vec![user(1.0, 0.0, 0.5)], 0.5, 1.0, vec![0.5]).unwrap();
        assert!(simulate_threshold(&s, &[1.0], &RunConfig::new(StopRule::MaxEvents(0))).is_err());
        assert!(simulate_threshold(&s, &[1.0], &RunConfig::new(StopRule::MaxTime(0.0))).is_err());
        assert!(simulate_index(&s, &RunConfig::new(StopRule::MaxTime(-1.0))).is_err());
    }

    #[test]
    fn max_time_run_covers_exact_horizon() {
        let u = user(1.0, 0.0, 0.5);
        let s = Scenario::new(vec![u, u], 0.5, 1.0, vec![0.5, 0.1]).unwrap();
        let stats = simulate_threshold(&s, &[1.0, 1.0], &RunConfig::new(StopRule::MaxTime(2.95))).unwrap();
        assert_eq!(stats.horizon, 2.95);
        // User 1: 0.1 -> 1 at t=0.9, then cycles of 0.5; user 0: 0.5 -> 1 at t=0.5.
        assert_eq!(stats.events, 5 + 5);
    }

    #[test]
    fn hitting_time_examples() {
        let u = user(1.0, 0.0, 0.5);
        let state = SystemState { time: 0.0, rates: vec![0.857143, 1.285714] };
        let dt = hitting_time(&state, &[u, u], 3.0).unwrap();
        assert!((dt - (3.0 - 0.857143 - 1.285714) / 2.0).abs() < 1e-15);
        assert!((dt - 0.4285715).abs() < 1e-12);

        let state = SystemState { time: 0.0, rates: vec![1.0, 1.0] };
        let dt = hitting_time(&state, &[user(1.0, 0.0, 0.5), user(3.0, 0.0, 0.5)], 3.0).unwrap();
        assert!((dt - 0.25).abs() < 1e-15);

        assert!(hitting_time(&state, &[u, u], 2.0).is_err());
    }

    #[test]
    fn hitting_time_residual_nonlinear() {
        let cases: [(Vec<UserParams>, Vec<f64>, f64); 3] = [
            (vec![user(1.0, 0.5, 0.5); 2], vec![0.25, 0.1], 1.0),
            (vec![user(1.0, 1.0, 0.5), user(2.0, 0.75, 0.3), user(0.3, 0.0, 0.9)], vec![0.2, 0.05, 0.4], 7.0),
            (vec![user(5.0, 1.0, 0.5); 3], vec![1e-3, 2e-3, 1e-4], 100.0),
        ];
        for (users, rates, c) in cases {
            let state = SystemState { time: 0.0, rates: rates.clone() };
            let dt = hitting_time(&state, &users, c).unwrap();
            let total: f64 = rates.iter().zip(&users).map(|(x, u)| grow(*x, u, dt)).sum();
            assert!((total - c).abs() <= 1e-12 * c, "residual {}", total - c);
        }
    }

    #[test]
    fn hitting_time_linear_closed_form_agrees_with_newton() {
        // gamma = 1e-300 is numerically linear but takes the Newton branch.
        let lin = user(1.0, 0.0, 0.5);
        let near = user(1.0, 1e-300, 0.5);
        let rates = [0.3, 0.9, 0.2];
        let a = hitting_time_by(&rates, |_| lin, 2.5, DEFAULT_ROOT_TOL).unwrap();
        let b = hitting_time_by(&rates, |_| near, 2.5, DEFAULT_ROOT_TOL).unwrap();
        assert!(rel(b, a) < 1e-12);
    }

    #[test]
    fn index_policy_homogeneous_reduces_max_rate() {
        let u = user(1.0, 0.25, 0.6);
        let s = Scenario::new(vec![u; 4], 0.5, 4.0, vec![0.3, 0.9, 0.55, 0.71]).unwrap();
        let cfg = RunConfig::new(StopRule::MaxEvents(300)).with_events();
        let idx = simulate_index(&s, &cfg).unwrap();
        let max = simulate_hard_constraint(&s, &MaxRateRule, &cfg).unwrap();
        assert_eq!(idx.event_log, max.event_log);
    }

    #[test]
    fn index_policy_fixed_point_start_is_periodic() {
        let u = user(1.0, 0.0, 0.5);
        // Right after reducing 12/7 the state is (6/7, 9/7).
        let s = Scenario::new(vec![u, u], 0.5, 3.0, vec![6.0 / 7.0, 9.0 / 7.0]).unwrap();
        let stats = simulate_index(&s, &RunConfig::new(StopRule::MaxEvents(20)).with_events()).unwrap();
        for e in stats.event_log.unwrap() {
            assert!((e.rate_before - 12.0 / 7.0).abs() < 1e-10);
            assert!((e.sum_after - (3.0 - 6.0 / 7.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn index_policy_repairs_infeasible_start() {
        let u = user(1.0, 0.5, 0.5);
        let s = Scenario::new(vec![u, u], 2.0, 1.0, vec![3.0, 1.0]).unwrap();
        let stats = simulate_index(&s, &RunConfig::new(StopRule::MaxEvents(5)).with_events()).unwrap();
        assert!(stats.repair_events >= 1);
        let log = stats.event_log.unwrap();
        let repairs: Vec<_> = log.iter().filter(|e| e.is_repair()).collect();
        assert_eq!(repairs.len(), stats.repair_events);
        assert!(repairs.last().unwrap().sum_after < 1.0);
    }

    #[test]
    fn oracle_examples() {
        let u = user(1.0, 0.0, 0.5);
        let best = oracle_best_threshold(&u, 0.5, 1.0, (0.01, 100.0)).unwrap();
        assert!((best - 1.3207).abs() < 1e-3);
        let x = threshold_for_lambda(&u, 0.5, 1.0).unwrap();
        let f = cycle_objective(&u, 0.5, 1.0, x).unwrap();
        assert!(f <= cycle_objective(&u, 0.5, 1.0, 0.9 * x).unwrap());
        assert!(f <= cycle_objective(&u, 0.5, 1.0, 1.1 * x).unwrap());

        let m = user(1.0, 1.0, 0.5);
        let best = oracle_best_threshold(&m, 0.5, 1.0, (0.01, 100.0)).unwrap();
        let x = threshold_for_lambda(&m, 0.5, 1.0).unwrap();
        assert!(rel(best, x) < 1e-3);

        assert!(matches!(
            oracle_best_threshold(&u, 0.5, 1.0, (10.0, 100.0)),
            Err(Error::NoInteriorMinimum { .. })
        ));
        assert!(oracle_best_threshold(&u, 0.5, 1.0, (1.0, 0.5)).is_err());
    }

    #[test]
    fn events_csv_header_and_rows() {
        let log = vec![EventRecord { event: 1, time: 0.5, user: 0, rate_before: 1.0, rate_after: 0.5, sum_after: 0.5 }];
        let mut buf = Vec::new();
        write_events_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "event,time,user,rate_before,rate_after,sum_after\n1,0.5,0,1.0,0.5,0.5\n");
        let mut buf = Vec::new();
        write_events_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "event,time,user,rate_before,rate_after,sum_after\n");
    }

    #[test]
    fn window_averages() {
        let u = user(1.0, 0.0, 0.5);
        let s = Scenario::new(vec![u], 0.5, 1.0, vec![0.1]).unwrap();
        let stats = simulate_threshold(&s, &[4.0 / 3.0], &RunConfig::new(StopRule::MaxEvents(10))).unwrap();
        let w = stats.window(0.5).unwrap();
        assert!(rel(w.load, 1.0) < 1e-12);
        assert!(rel(w.duration, 5.0 * 2.0 / 3.0) < 1e-12);
        assert!(stats.window(1.0).is_err());
        let full = stats.window(0.0).unwrap();
        assert_eq!(full.start_time, 0.0);
    }
}
