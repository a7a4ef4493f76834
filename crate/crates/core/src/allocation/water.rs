use crate::error::Result;
use crate::scalar::{lit, Scalar};

use super::{allocation_objective, average_ties, Allocation, SpectralGains};

const MU_FLOOR: f64 = 1e-12;
const BISECTION_STEPS: usize = 200;

fn filled<T: Scalar>(g: &[T], level: T) -> T {
    g.iter()
        .filter(|&&gi| gi > T::zero())
        .fold(T::zero(), |acc, &gi| acc + (level - T::one() / gi).max(T::zero()))
}

/// Water-filling: `p_i = max(0, 1/(2μ) − 1/g_i)` with `Σ p_i = budget`.
pub fn water_fill<T: Scalar>(gains: &SpectralGains<T>, budget: T) -> Result<Allocation<T>> {
    if !(budget > T::zero()) || !budget.is_finite() {
        return crate::error::invalid("budget must be positive and finite");
    }
    gains.require_positive()?;
    let g = gains.values();
    let two = lit::<T>(2.0);
    // Bisection on μ over [MU_FLOOR, g_max/2]; the filled volume falls with μ.
    let (mut lo, mut hi) = (lit::<T>(MU_FLOOR), gains.max() / two);
    for _ in 0..BISECTION_STEPS {
        let mid = (lo + hi) / two;
        if filled(g, T::one() / (two * mid)) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::default_epsilon() * hi {
            break;
        }
    }
    // Exact level on the active set identified by the bisection, refined
    // until it is self-consistent.
    let bisected_level = T::one() / (lo + hi);
    let mut active: Vec<bool> = g.iter().map(|&gi| gi > T::zero() && bisected_level > T::one() / gi).collect();
    if !active.iter().any(|&a| a) {
        let top = (0..g.len()).max_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap()).unwrap();
        active[top] = true;
    }
    let mut level = bisected_level;
    for _ in 0..=2 * g.len() {
        let (count, inv_sum) = (0..g.len())
            .filter(|&i| active[i])
            .fold((0, T::zero()), |(c, s), i| (c + 1, s + T::one() / g[i]));
        level = (budget + inv_sum) / T::from_count(count);
        let next: Vec<bool> = g.iter().map(|&gi| gi > T::zero() && level > T::one() / gi).collect();
        if next == active || !next.iter().any(|&a| a) {
            break;
        }
        active = next;
    }
    let mut p = vec![T::zero(); g.len()];
    for i in (0..g.len()).filter(|&i| active[i]) {
        p[i] = (level - T::one() / g[i]).max(T::zero());
    }
    average_ties(g, &mut p);
    let mu = T::one() / (two * level);
    let kkt_residual = kkt_residual(g, &p, budget, mu);
    Ok(Allocation {
        objective: allocation_objective(gains, &p, T::zero()),
        p,
        budget,
        mu,
        gamma: T::zero(),
        kkt_residual,
    })
}

/// Max of active stationarity, inactive dual violation and budget error.
pub(crate) fn kkt_residual<T: Scalar>(g: &[T], p: &[T], budget: T, mu: T) -> T {
    let two = lit::<T>(2.0);
    let mut worst = (p.iter().fold(T::zero(), |a, &b| a + b) - budget).abs();
    for (&gi, &pi) in g.iter().zip(p) {
        let r = if pi > T::zero() {
            (gi / (two * (T::one() + gi * pi)) - mu).abs()
        } else {
            (gi / two - mu).max(T::zero())
        };
        worst = worst.max(r);
    }
    worst
}
