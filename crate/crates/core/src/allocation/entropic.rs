use crate::error::{invalid, Error, Result};
use crate::scalar::{lit, Scalar};

use super::{allocation_objective, average_ties, Allocation, SpectralGains};

const OUTER_STEPS: usize = 300;
const INNER_STEPS: usize = 200;

/// `g/(2(1+g p)) − μ − (γ/T)(ln(p/T) + 1)` written in `u = ln(p/T)`.
fn stationarity<T: Scalar>(g: T, u: T, mu: T, gamma: T, budget: T) -> (T, T) {
    let two = lit::<T>(2.0);
    let p = budget * u.exp();
    let denom = T::one() + g * p;
    let f = g / (two * denom) - mu - gamma / budget * (u + T::one());
    let df = -(g * g * p) / (two * denom * denom) - gamma / budget;
    (f, df)
}

/// Root in `u` of the per-coordinate stationarity equation for fixed `μ`.
/// The left side is strictly decreasing in `u`, so the root is unique.
fn coordinate_root<T: Scalar>(g: T, mu: T, gamma: T, budget: T) -> Result<T> {
    let fail = || Error::BracketFailure {
        gain: g.to_f64_lossy(),
        gamma: gamma.to_f64_lossy(),
        budget: budget.to_f64_lossy(),
    };
    let scale = budget / gamma;
    let mut lo = -T::one() - mu * scale - T::one();
    let mut hi = (g / lit(2.0) - mu) * scale;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(fail());
    }
    if lo > hi {
        std::mem::swap(&mut lo, &mut hi);
    }
    let (f_lo, _) = stationarity(g, lo, mu, gamma, budget);
    let (f_hi, _) = stationarity(g, hi, mu, gamma, budget);
    if !(f_lo >= T::zero() && f_hi <= T::zero()) {
        return Err(fail());
    }
    // Newton with bisection safeguard.
    let mut u = (lo + hi) / lit(2.0);
    for _ in 0..INNER_STEPS {
        let (f, df) = stationarity(g, u, mu, gamma, budget);
        if f == T::zero() {
            return Ok(u);
        }
        if f > T::zero() {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - f / df;
        let next = if newton > lo && newton < hi && newton.is_finite() {
            newton
        } else {
            (lo + hi) / lit(2.0)
        };
        if (next - u).abs() <= T::default_epsilon() * (T::one() + u.abs()) {
            return Ok(next);
        }
        u = next;
    }
    if u.is_finite() {
        Ok(u)
    } else {
        Err(fail())
    }
}

fn allocate<T: Scalar>(g: &[T], mu: T, gamma: T, budget: T) -> Result<Vec<T>> {
    g.iter()
        .map(|&gi| coordinate_root(gi, mu, gamma, budget).map(|u| budget * u.exp()))
        .collect()
}

/// Largest absolute per-coordinate stationarity residual at `(p, μ)`.
pub fn stationarity_residual<T: Scalar>(gains: &SpectralGains<T>, p: &[T], mu: T, gamma: T, budget: T) -> T {
    gains
        .values()
        .iter()
        .zip(p)
        .map(|(&g, &pi)| stationarity(g, (pi / budget).ln(), mu, gamma, budget).0.abs())
        .fold(T::zero(), |a, b| a.max(b))
}

/// Maximizes `½ Σ log(1 + g_i p_i) + γ S(p/T)` subject to `Σ p_i = T`,
/// where `T` is the budget. Every weight comes out strictly positive.
pub fn entropy_regularized_allocation<T: Scalar>(
    gains: &SpectralGains<T>,
    budget: T,
    gamma: T,
) -> Result<Allocation<T>> {
    if !(budget > T::zero()) || !budget.is_finite() {
        return invalid("budget must be positive and finite");
    }
    if !(gamma > T::zero()) || !gamma.is_finite() {
        return invalid("gamma must be positive and finite");
    }
    gains.require_positive()?;
    let g = gains.values();
    let two = lit::<T>(2.0);
    let d = T::from_count(g.len());
    // At p_i = T/d the stationarity sign fixes an exact μ bracket.
    let shift = gamma / budget * (d.ln() - T::one());
    let at_even = |gi: T| gi / (two * (T::one() + gi * budget / d)) + shift;
    let mut lo = g.iter().map(|&gi| at_even(gi)).fold(T::max_value().unwrap(), |a, b| a.min(b));
    let mut hi = g.iter().map(|&gi| at_even(gi)).fold(-T::max_value().unwrap(), |a, b| a.max(b));
    let total = |p: &[T]| p.iter().fold(T::zero(), |a, &b| a + b);
    if lo < hi {
        for _ in 0..OUTER_STEPS {
            let mid = (lo + hi) / two;
            if mid <= lo || mid >= hi {
                break;
            }
            if total(&allocate(g, mid, gamma, budget)?) > budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    let mu = (lo + hi) / two;
    let mut p = allocate(g, mu, gamma, budget)?;
    average_ties(g, &mut p);
    let sum = total(&p);
    for v in p.iter_mut() {
        *v = *v * budget / sum;
    }
    let residual = stationarity_residual(gains, &p, mu, gamma, budget).max((total(&p) - budget).abs());
    Ok(Allocation {
        objective: allocation_objective(gains, &p, gamma),
        p,
        budget,
        mu,
        gamma,
        kkt_residual: residual,
    })
}
