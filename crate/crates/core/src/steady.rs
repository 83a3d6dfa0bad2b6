//! Steady state of the index policy for homogeneous users.
//!
//! Observing the sorted rates each time the capacity constraint binds gives
//! the event map `g`: reduce the largest rate by `b`, grow everything until
//! the total is back at capacity, re-sort. This module computes `g`, its
//! closed-form fixed point, the iteration towards it, and the linearized
//! map `(I - 1 p^T) B` in the scaled coordinates
//! `dz_k = dx_k / (x*_k)^gamma` used to certify local stability.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::eigen::{self, Rows};
use crate::error::{Error, Result};
use crate::model::{grow, UserParams};
use crate::sim::{hitting_time_by, DEFAULT_ROOT_TOL};

/// Relative tolerance on `Σ x = capacity` for a profile.
pub const PROFILE_SUM_TOL: f64 = 1e-12;

/// Rates observed when the capacity constraint binds, largest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedProfile {
    rates: Vec<f64>,
    capacity: f64,
}

impl SortedProfile {
    pub fn new(rates: Vec<f64>, capacity: f64) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::invalid("profile needs at least one rate"));
        }
        if !(capacity > 0.0 && capacity.is_finite()) {
            return Err(Error::invalid(format!("capacity must be positive, got {capacity}")));
        }
        if rates.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::invalid("profile rates must be positive"));
        }
        if rates.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("profile rates must be sorted non-increasing"));
        }
        let sum: f64 = rates.iter().sum();
        if ((sum - capacity) / capacity).abs() > PROFILE_SUM_TOL {
            return Err(Error::invalid(format!("profile sums to {sum}, expected capacity {capacity}")));
        }
        Ok(Self { rates, capacity })
    }

    /// Sorts `rates` and takes their sum as the capacity.
    pub fn from_rates(mut rates: Vec<f64>) -> Result<Self> {
        rates.sort_by(|a, b| b.total_cmp(a));
        let capacity = rates.iter().sum();
        Self::new(rates, capacity)
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Number of rates not below `b x_1`: the position at which the reduced
    /// largest rate is re-inserted.
    pub fn k_index(&self, b: f64) -> usize {
        let reduced = b * self.rates[0];
        self.rates.iter().take_while(|&&x| x >= reduced).count()
    }

    /// Max-norm distance to another profile of the same length.
    pub fn distance(&self, other: &SortedProfile) -> f64 {
        self.rates.iter().zip(&other.rates).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Periodic profile of the index policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub profile: SortedProfile,
    /// Time between consecutive capacity hits.
    pub delta: f64,
    pub k_index: usize,
}

/// One application of `g`, also returning the elapsed time and the
/// insertion index used.
pub fn event_step(profile: &SortedProfile, user: &UserParams, tol: f64) -> Result<(SortedProfile, f64, usize)> {
    let x = profile.rates();
    let reduced = user.b * x[0];
    let k = profile.k_index(user.b);
    let mut y = Vec::with_capacity(x.len());
    y.extend_from_slice(&x[1..k]);
    y.push(reduced);
    y.extend_from_slice(&x[k..]);
    let delta = hitting_time_by(&y, |_| *user, profile.capacity, tol)?;
    for v in y.iter_mut() {
        *v = grow(*v, user, delta);
    }
    Ok((SortedProfile::new(y, profile.capacity)?, delta, k))
}

/// The event map `g` for homogeneous users, including the transient case
/// where the reduced rate is inserted in the middle of the profile.
pub fn apply_map_g(profile: &SortedProfile, user: &UserParams) -> Result<SortedProfile> {
    event_step(profile, user, DEFAULT_ROOT_TOL).map(|(p, _, _)| p)
}

fn check_sub_exponential(user: &UserParams) -> Result<()> {
    if user.is_exponential() {
        return Err(Error::invalid("gamma = 1 has no stable steady state"));
    }
    Ok(())
}

/// Closed-form fixed point of `g` for `n` homogeneous users.
pub fn fixed_point_closed_form(n: usize, user: &UserParams, capacity: f64) -> Result<FixedPoint> {
    if n == 0 {
        return Err(Error::invalid("need at least one user"));
    }
    user.check(0)?;
    check_sub_exponential(user)?;
    let nf = n as f64;
    let b = user.b;
    let rates: Vec<f64> = if user.gamma == 0.0 {
        let x1 = capacity / (nf * b + (nf + 1.0) * (1.0 - b) / 2.0);
        (1..=n).map(|i| (b + (n - i + 1) as f64 * (1.0 - b) / nf) * x1).collect()
    } else {
        let e = 1.0 - user.gamma;
        let beta = b.powf(e);
        let weight = |i: usize| (beta + i as f64 / nf * (1.0 - beta)).powf(1.0 / e);
        let x1 = capacity / (1..=n).map(weight).sum::<f64>();
        (1..=n).map(|i| if i == 1 { x1 } else { x1 * weight(n - i + 1) }).collect()
    };
    let x1 = rates[0];
    let e = 1.0 - user.gamma;
    let delta = x1.powf(e) * (1.0 - b.powf(e)) / (nf * e * user.a);
    Ok(FixedPoint { profile: SortedProfile::new(rates, capacity)?, delta, k_index: n })
}

/// Bookkeeping from [`iterate_to_fixed_point`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iterations: usize,
    /// First iterate (0 = the start) whose insertion index equals `n`.
    pub absorbed_at: Option<usize>,
}

/// Iterates `g` until successive profiles differ by less than `tol` in max
/// norm. Once an iterate has insertion index `n` every later iterate must
/// too; a violation is reported as [`Error::Invariant`].
pub fn iterate_to_fixed_point(
    start: &SortedProfile,
    user: &UserParams,
    tol: f64,
    max_iter: usize,
) -> Result<(FixedPoint, IterationTrace)> {
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let n = start.len();
    let mut current = start.clone();
    let mut absorbed_at = None;
    for it in 0..max_iter {
        let k = current.k_index(user.b);
        if k == n {
            absorbed_at.get_or_insert(it);
        } else if let Some(first) = absorbed_at {
            return Err(Error::Invariant(format!(
                "insertion index left {n} at iterate {it} after reaching it at {first}"
            )));
        }
        let (next, delta, _) = event_step(&current, user, DEFAULT_ROOT_TOL)?;
        let diff = next.distance(&current);
        current = next;
        if diff < tol {
            let k_index = current.k_index(user.b);
            let trace = IterationTrace { iterations: it + 1, absorbed_at };
            return Ok((FixedPoint { profile: current, delta, k_index }, trace));
        }
    }
    Err(Error::NotConverged { routine: "fixed-point iteration", iterations: max_iter })
}

/// Local stability of the linearized event map.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub n: usize,
    pub gamma: f64,
    pub b: f64,
    /// `(I - 1 p^T) B` in scaled coordinates.
    pub matrix: Rows,
    /// Sorted by decreasing modulus.
    pub eigenvalues: Vec<Complex64>,
    /// Modulus of the eigenvalue identified as the structural zero.
    pub structural_zero: f64,
    pub spectral_radius_nonzero: f64,
    pub stable: bool,
    pub p: Vec<f64>,
}

impl StabilityReport {
    /// Eigenvalues other than the structural zero (the smallest in modulus).
    pub fn nonzero_eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues[..self.eigenvalues.len() - 1]
    }

    pub fn export(&self) -> StabilityExport {
        StabilityExport {
            n: self.n,
            gamma: self.gamma,
            b: self.b,
            eigenvalues: self.eigenvalues.iter().map(|z| ComplexValue { re: z.re, im: z.im }).collect(),
            spectral_radius: self.spectral_radius_nonzero,
            stable: self.stable,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexValue {
    pub re: f64,
    pub im: f64,
}

/// JSON shape of a [`StabilityReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityExport {
    pub n: usize,
    pub gamma: f64,
    pub b: f64,
    pub eigenvalues: Vec<ComplexValue>,
    pub spectral_radius: f64,
    pub stable: bool,
}

/// `p_k = x_k^gamma / Σ_j x_j^gamma`.
pub fn weights(profile: &SortedProfile, gamma: f64) -> Vec<f64> {
    let raw: Vec<f64> = profile.rates().iter().map(|x| x.powf(gamma)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// `(I - 1 p^T) B`: `B` shifts up by one and feeds `b^(1-gamma)` from the
/// first coordinate into the last.
pub fn linearized_matrix(p: &[f64], gamma: f64, b: f64) -> Rows {
    let n = p.len();
    let beta = b.powf(1.0 - gamma);
    let mut shift = vec![vec![0.0; n]; n];
    for i in 0..n - 1 {
        shift[i][i + 1] = 1.0;
    }
    shift[n - 1][0] += beta;
    // Row vector p^T B.
    let pb: Vec<f64> = (0..n).map(|j| (0..n).map(|i| p[i] * shift[i][j]).sum()).collect();
    shift
        .iter()
        .map(|row| row.iter().zip(&pb).map(|(bij, q)| bij - q).collect())
        .collect()
}

/// Linearizes `g` at a fixed point and computes its spectrum.
pub fn linearization(fp: &FixedPoint, user: &UserParams) -> Result<StabilityReport> {
    check_sub_exponential(user)?;
    let gamma = user.gamma;
    let p = weights(&fp.profile, gamma);
    let matrix = linearized_matrix(&p, gamma, user.b);
    let mut eigenvalues = eigen::eigenvalues(&matrix)?;
    eigen::sort_by_modulus(&mut eigenvalues);
    let structural_zero = eigenvalues.last().map_or(0.0, |z| z.norm());
    let radius = eigen::spectral_radius(&eigenvalues[..eigenvalues.len() - 1]);
    Ok(StabilityReport {
        n: fp.profile.len(),
        gamma,
        b: user.b,
        matrix,
        eigenvalues,
        structural_zero,
        spectral_radius_nonzero: radius,
        stable: radius < 1.0,
        p,
    })
}

/// Residuals `|q(λ)|` of candidate characteristic polynomials at the
/// nonzero eigenvalues, for
/// `q(λ) = λ^N - β ± (1-β) Σ_n p'_n λ^(n-1)`, `β = b^(1-gamma)`,
/// with `p'` either `p` or `p` reversed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicResiduals {
    pub eigenvalues: Vec<ComplexValue>,
    /// `+` sign, `p` in index order.
    pub printed: Vec<f64>,
    /// `+` sign, `p` reversed.
    pub printed_reversed: Vec<f64>,
    /// `-` sign, `p` in index order.
    pub flipped: Vec<f64>,
    /// `-` sign, `p` reversed.
    pub flipped_reversed: Vec<f64>,
}

pub fn characteristic_residuals(report: &StabilityReport) -> CharacteristicResiduals {
    let beta = report.b.powf(1.0 - report.gamma);
    let nonzero = report.nonzero_eigenvalues();
    let reversed: Vec<f64> = report.p.iter().rev().copied().collect();
    let residuals = |sign: f64, weights: &[f64]| -> Vec<f64> {
        nonzero
            .iter()
            .map(|&lam| {
                let mut poly = Complex64::new(0.0, 0.0);
                let mut power = Complex64::new(1.0, 0.0);
                for &w in weights {
                    poly += power * w;
                    power *= lam;
                }
                // `power` is now λ^N.
                (power - beta + sign * (1.0 - beta) * poly).norm()
            })
            .collect()
    };
    CharacteristicResiduals {
        eigenvalues: nonzero.iter().map(|z| ComplexValue { re: z.re, im: z.im }).collect(),
        printed: residuals(1.0, &report.p),
        printed_reversed: residuals(1.0, &reversed),
        flipped: residuals(-1.0, &report.p),
        flipped_reversed: residuals(-1.0, &reversed),
    }
}

/// Central finite-difference Jacobian of `g` at a fixed point, in the same
/// scaled coordinates as [`linearization`].
///
/// Column `j` is the response to the direction `e_j - p_j 1` in scaled
/// coordinates, which is a sum-zero perturbation of the rates. The result
/// equals `M (I - 1 p^T)` up to truncation error, which has the same
/// spectrum as `M`. `step` is relative to `(x*_1)^(1-gamma)`.
pub fn jacobian_fd(fp: &FixedPoint, user: &UserParams, step: f64) -> Result<Rows> {
    if !(1e-8..=1e-4).contains(&step) {
        return Err(Error::invalid(format!("finite-difference step {step} outside [1e-8, 1e-4]")));
    }
    check_sub_exponential(user)?;
    let gamma = user.gamma;
    let x = fp.profile.rates();
    let n = x.len();
    let c = fp.profile.capacity();
    let p = weights(&fp.profile, gamma);
    let scale: Vec<f64> = x.iter().map(|v| v.powf(gamma)).collect();
    let h = step * x[0].powf(1.0 - gamma);

    let mut jac = vec![vec![0.0; n]; n];
    for j in 0..n {
        let dir: Vec<f64> = (0..n)
            .map(|i| scale[i] * (if i == j { 1.0 } else { 0.0 } - p[j]))
            .collect();
        let shifted = |sign: f64| -> Result<SortedProfile> {
            let rates = x.iter().zip(&dir).map(|(xi, di)| xi + sign * h * di).collect();
            apply_map_g(&SortedProfile::new(rates, c)?, user)
        };
        let plus = shifted(1.0)?;
        let minus = shifted(-1.0)?;
        for i in 0..n {
            jac[i][j] = (plus.rates()[i] - minus.rates()[i]) / (2.0 * h) / scale[i];
        }
    }
    Ok(jac)
}

/// Limit of `x*_1(c1 N)` as `N` grows, equal to the relaxed threshold at
/// per-user capacity `c1`.
pub fn large_population_threshold(user: &UserParams, per_user_capacity: f64) -> f64 {
    let g = user.gamma;
    let b = user.b;
    per_user_capacity * (1.0 - b.powf(1.0 - g)) * (2.0 - g) / ((1.0 - g) * (1.0 - b.powf(2.0 - g)))
}
