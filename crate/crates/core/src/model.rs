//! Per-user G-AIMD dynamics.
//!
//! Between control impulses a user's rate follows `dx/dt = a * x^gamma`,
//! and an impulse multiplies it by `b`. Both laws have exact solutions, so
//! everything here is closed form: no ODE stepping happens anywhere in the
//! crate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationError};

/// Values of `gamma` in `(1 - GAMMA_ONE_GAP, 1)` are rejected; `gamma = 1`
/// itself is handled by a separate exponential branch.
pub const GAMMA_ONE_GAP: f64 = 1e-9;

/// Growth and decrease parameters of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserParams {
    /// Growth coefficient, `a > 0`.
    pub a: f64,
    /// Growth exponent, `0 <= gamma <= 1` (0 is AIMD, 1 is MIMD).
    pub gamma: f64,
    /// Multiplicative decrease factor, `0 < b < 1`.
    pub b: f64,
}

impl UserParams {
    pub fn new(a: f64, gamma: f64, b: f64) -> Result<Self, ValidationError> {
        let user = Self { a, gamma, b };
        user.check(0)?;
        Ok(user)
    }

    /// Classic AIMD user (`gamma = 0`).
    pub fn aimd(a: f64, b: f64) -> Result<Self, ValidationError> {
        Self::new(a, 0.0, b)
    }

    /// Checks the per-user constraints that do not involve `alpha`.
    /// `index` only labels the error.
    pub fn check(&self, index: usize) -> Result<(), ValidationError> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(ValidationError::GrowthNotPositive { user: index, value: self.a });
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ValidationError::GammaOutOfRange { user: index, value: self.gamma });
        }
        if self.gamma < 1.0 && self.gamma > 1.0 - GAMMA_ONE_GAP {
            return Err(ValidationError::GammaNearOne { user: index, value: self.gamma });
        }
        if !(self.b > 0.0 && self.b < 1.0) {
            return Err(ValidationError::DecreaseOutOfRange { user: index, value: self.b });
        }
        Ok(())
    }

    /// Exponential (MIMD) growth branch.
    #[inline]
    pub fn is_exponential(&self) -> bool {
        self.gamma == 1.0
    }
}

/// N users sharing one capacity under a common fairness exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub users: Vec<UserParams>,
    /// Fairness exponent `alpha > 0`, `alpha != 1`.
    pub alpha: f64,
    pub capacity: f64,
    pub initial_rates: Vec<f64>,
}

impl Scenario {
    /// Builds a scenario and validates it.
    pub fn new(
        users: Vec<UserParams>,
        alpha: f64,
        capacity: f64,
        initial_rates: Vec<f64>,
    ) -> Result<Self, ValidationError> {
        let scenario = Self { users, alpha, capacity, initial_rates };
        validate(&scenario)?;
        Ok(scenario)
    }

    /// `n` copies of `user`, all starting from `initial_rate`.
    pub fn homogeneous(
        n: usize,
        user: UserParams,
        alpha: f64,
        capacity: f64,
        initial_rate: f64,
    ) -> Result<Self, ValidationError> {
        Self::new(vec![user; n], alpha, capacity, vec![initial_rate; n])
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// True when every user shares the same `(a, gamma, b)`.
    pub fn is_homogeneous(&self) -> bool {
        self.users.windows(2).all(|w| w[0] == w[1])
    }
}

/// Checks the admissibility conditions, reporting the first violation.
///
/// Order of checks: `alpha`, `capacity`, the user list, each user in order,
/// then the initial rates.
pub fn validate(scenario: &Scenario) -> Result<(), ValidationError> {
    let alpha = scenario.alpha;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ValidationError::AlphaNotPositive(alpha));
    }
    if alpha == 1.0 {
        return Err(ValidationError::AlphaIsOne);
    }
    if !(scenario.capacity > 0.0 && scenario.capacity.is_finite()) {
        return Err(ValidationError::CapacityNotPositive(scenario.capacity));
    }
    if scenario.users.is_empty() {
        return Err(ValidationError::NoUsers);
    }
    for (k, user) in scenario.users.iter().enumerate() {
        user.check(k)?;
        check_exponent(user, alpha, k)?;
    }
    if scenario.initial_rates.len() != scenario.users.len() {
        return Err(ValidationError::RateCountMismatch {
            expected: scenario.users.len(),
            got: scenario.initial_rates.len(),
        });
    }
    for (k, &x) in scenario.initial_rates.iter().enumerate() {
        if !(x > 0.0 && x.is_finite()) {
            return Err(ValidationError::RateNotPositive { user: k, value: x });
        }
    }
    Ok(())
}

/// The `2 - alpha - gamma != 0` condition for a single user.
pub fn check_exponent(user: &UserParams, alpha: f64, index: usize) -> Result<(), ValidationError> {
    if alpha == 1.0 {
        return Err(ValidationError::AlphaIsOne);
    }
    if 2.0 - alpha - user.gamma == 0.0 {
        return Err(ValidationError::DegenerateExponent { user: index });
    }
    Ok(())
}

/// Time integrals over one growth segment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentIntegrals {
    pub elapsed: f64,
    /// `∫ x^(1-alpha) / (1-alpha) dt`
    pub fairness: f64,
    /// `∫ x dt`
    pub load: f64,
}

impl std::ops::Add for SegmentIntegrals {
    type Output = Self;

    fn add(self, rhs: Self) -> Self {
        Self {
            elapsed: self.elapsed + rhs.elapsed,
            fairness: self.fairness + rhs.fairness,
            load: self.load + rhs.load,
        }
    }
}

impl std::ops::AddAssign for SegmentIntegrals {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

/// `x1^e - x0^e` without cancellation when `x1` is close to `x0`.
#[inline]
pub(crate) fn pow_diff(x0: f64, x1: f64, e: f64) -> f64 {
    x0.powf(e) * (e * (x1 / x0).ln()).exp_m1()
}

/// `(1 - b^e) / e` for `b` in (0,1) and `e != 0`; positive for either sign of `e`.
#[inline]
pub(crate) fn one_minus_pow_over(b: f64, e: f64) -> f64 {
    -(e * b.ln()).exp_m1() / e
}

/// Rate after growing from `x0` for `dt` time units.
pub fn grow(x0: f64, user: &UserParams, dt: f64) -> f64 {
    debug_assert!(x0 > 0.0 && dt >= 0.0);
    if dt == 0.0 {
        x0
    } else if user.is_exponential() {
        x0 * (user.a * dt).exp()
    } else if user.gamma == 0.0 {
        x0 + user.a * dt
    } else {
        let e = 1.0 - user.gamma;
        (x0.powf(e) + e * user.a * dt).powf(1.0 / e)
    }
}

/// Instantaneous growth speed `a * x^gamma`.
#[inline]
pub fn growth_speed(x: f64, user: &UserParams) -> f64 {
    if user.gamma == 0.0 {
        user.a
    } else if user.is_exponential() {
        user.a * x
    } else {
        user.a * x.powf(user.gamma)
    }
}

fn check_segment(x0: f64, x1: f64) -> Result<()> {
    if !(x0 > 0.0 && x0.is_finite() && x1.is_finite()) {
        return Err(Error::invalid(format!("segment start must be positive and finite, got {x0}")));
    }
    if x1 < x0 {
        return Err(Error::invalid(format!(
            "rates never decrease without an impulse: {x1} < {x0}"
        )));
    }
    Ok(())
}

/// Time needed to grow from `x0` to `x1` without impulses.
pub fn time_to_reach(x0: f64, x1: f64, user: &UserParams) -> Result<f64> {
    check_segment(x0, x1)?;
    if x0 == x1 {
        return Ok(0.0);
    }
    let t = if user.is_exponential() {
        (x1 / x0).ln() / user.a
    } else if user.gamma == 0.0 {
        (x1 - x0) / user.a
    } else {
        let e = 1.0 - user.gamma;
        pow_diff(x0, x1, e) / (e * user.a)
    };
    Ok(t)
}

/// Exact integrals of the fairness and load integrands while the rate grows
/// from `x0` to `x1`.
///
/// Obtained by substituting `dt = dx / (a x^gamma)`.
pub fn segment_integrals(x0: f64, x1: f64, user: &UserParams, alpha: f64) -> Result<SegmentIntegrals> {
    check_segment(x0, x1)?;
    check_exponent(user, alpha, 0)?;
    if x0 == x1 {
        return Ok(SegmentIntegrals::default());
    }
    let a = user.a;
    let one_minus_alpha = 1.0 - alpha;
    let out = if user.is_exponential() {
        SegmentIntegrals {
            elapsed: (x1 / x0).ln() / a,
            fairness: pow_diff(x0, x1, one_minus_alpha) / (a * one_minus_alpha * one_minus_alpha),
            load: (x1 - x0) / a,
        }
    } else {
        let g = user.gamma;
        let ef = 2.0 - alpha - g;
        let el = 2.0 - g;
        SegmentIntegrals {
            elapsed: time_to_reach(x0, x1, user)?,
            fairness: pow_diff(x0, x1, ef) / (a * one_minus_alpha * ef),
            load: pow_diff(x0, x1, el) / (a * el),
        }
    };
    Ok(out)
}

/// Multiplicative decrease `x -> b x`.
#[inline]
pub fn impulse(x: f64, user: &UserParams) -> f64 {
    user.b * x
}
