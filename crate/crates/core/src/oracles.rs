//! Brute-force and analytic checks for the power allocator.
//!
//! These are deliberately written from the problem statement rather than
//! from the allocator's closed forms, so the test suite can compare the two.

use rayon::prelude::*;

use crate::power::{EffectiveGains, LinearSinrCoeffs, RATE_FLOOR_TOL};

/// Outcome of an exhaustive grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Best sum rate over feasible grid points, `-inf` when none is feasible.
    pub best_value: f64,
    /// Per-user powers at the best point, in [`EffectiveGains::users`] order
    /// flattened group by group. Empty when no point is feasible.
    pub best_point: Vec<f64>,
    pub grid_resolution: usize,
    /// `(users - 1)` times the largest sum-rate change caused by moving one
    /// grid step of power between two users at the best point. Bounds how far
    /// the grid optimum can sit below the continuous one.
    pub max_gap_to_candidate: f64,
    pub feasible_points: usize,
}

impl OracleResult {
    pub fn is_empty(&self) -> bool {
        self.feasible_points == 0
    }
}

/// Per-user rates for flattened powers `p`, straight from the SINR
/// definition with SIC order given by `gains`.
fn naive_rates(gains: &EffectiveGains, p: &[f64], sigma2: f64) -> Vec<f64> {
    let mut offsets = Vec::with_capacity(gains.n_groups());
    let mut at = 0;
    for g in &gains.users {
        offsets.push(at);
        at += g.len();
    }
    let group_power: Vec<f64> = gains
        .users
        .iter()
        .zip(&offsets)
        .map(|(g, &o)| p[o..o + g.len()].iter().sum())
        .collect();
    let mut rates = Vec::with_capacity(p.len());
    for (m, group) in gains.gains.iter().enumerate() {
        for (n, row) in group.iter().enumerate() {
            let own = row[m];
            let mut denom = sigma2;
            for j in 0..n {
                denom += own * p[offsets[m] + j];
            }
            for (i, pi) in group_power.iter().enumerate() {
                if i != m {
                    denom += row[i] * pi;
                }
            }
            rates.push((1.0 + own * p[offsets[m] + n] / denom).log2());
        }
    }
    rates
}

/// Sum rate at `p`, or `None` when some user misses its floor.
fn point_value(gains: &EffectiveGains, floors: &[f64], p: &[f64], sigma2: f64) -> Option<f64> {
    let rates = naive_rates(gains, p, sigma2);
    rates
        .iter()
        .zip(floors)
        .all(|(r, f)| *r >= f - RATE_FLOOR_TOL)
        .then(|| rates.iter().sum())
}

/// Visits every composition of `total` into `parts` non-negative integers,
/// in lexicographic order, with the first part fixed to `first`.
fn for_each_composition(first: usize, total: usize, parts: usize, f: &mut impl FnMut(&[usize])) {
    let mut c = vec![0; parts];
    c[0] = first;
    fn rec(c: &mut Vec<usize>, at: usize, left: usize, f: &mut impl FnMut(&[usize])) {
        if at + 1 == c.len() {
            c[at] = left;
            f(c);
            return;
        }
        for v in 0..=left {
            c[at] = v;
            rec(c, at + 1, left - v, f);
        }
    }
    if parts == 1 {
        if first == total {
            f(&c);
        }
        return;
    }
    rec(&mut c, 1, total - first, f);
}

/// Exhaustive search over all user power splits `p = budget * c / resolution`
/// with integer `c` summing to `resolution`. Rates use the SINR definition
/// directly, including whatever cross-beam gains `gains` carries, and points
/// that miss a floor are skipped.
///
/// `eta` is only used for the floors, as `log2(1 + eta)`.
pub fn grid_power_oracle(
    gains: &EffectiveGains,
    eta: &[Vec<f64>],
    budget: f64,
    sigma2: f64,
    resolution: usize,
) -> OracleResult {
    let users: usize = gains.users.iter().map(Vec::len).sum();
    let floors: Vec<f64> = eta.iter().flatten().map(|e| (1.0 + e).log2()).collect();
    let step = budget / resolution as f64;
    let to_power = |c: &[usize]| -> Vec<f64> { c.iter().map(|&v| v as f64 * step).collect() };

    // (value, point, feasible count) per leading coordinate
    let chunks: Vec<(f64, Vec<usize>, usize)> = (0..=resolution)
        .into_par_iter()
        .map(|first| {
            let mut best = (f64::NEG_INFINITY, Vec::new(), 0);
            for_each_composition(first, resolution, users, &mut |c| {
                if let Some(v) = point_value(gains, &floors, &to_power(c), sigma2) {
                    best.2 += 1;
                    if v > best.0 {
                        best.0 = v;
                        best.1 = c.to_vec();
                    }
                }
            });
            best
        })
        .collect();

    let mut best_value = f64::NEG_INFINITY;
    let mut best_c = Vec::new();
    let mut feasible_points = 0;
    for (v, c, n) in chunks {
        feasible_points += n;
        if v > best_value {
            best_value = v;
            best_c = c;
        }
    }
    if feasible_points == 0 {
        return OracleResult {
            best_value,
            best_point: Vec::new(),
            grid_resolution: resolution,
            max_gap_to_candidate: f64::INFINITY,
            feasible_points,
        };
    }

    let best_point = to_power(&best_c);
    let base: f64 = naive_rates(gains, &best_point, sigma2).iter().sum();
    let mut max_step: f64 = 0.0;
    for from in 0..users {
        if best_c[from] == 0 {
            continue;
        }
        for to in 0..users {
            if to == from {
                continue;
            }
            let mut q = best_point.clone();
            q[from] -= step;
            q[to] += step;
            let v: f64 = naive_rates(gains, &q, sigma2).iter().sum();
            max_step = max_step.max((v - base).abs());
        }
    }
    OracleResult {
        best_value,
        best_point,
        grid_resolution: resolution,
        max_gap_to_candidate: (users.saturating_sub(1)) as f64 * max_step,
        feasible_points,
    }
}

/// `sum_m log2(k_m P_m + b_m + 1)`.
pub fn linear_objective(coeffs: &LinearSinrCoeffs, group_power: &[f64]) -> f64 {
    group_power
        .iter()
        .enumerate()
        .map(|(m, p)| (coeffs.k[m] * p + coeffs.b[m] + 1.0).log2())
        .sum()
}

/// Maximizes [`linear_objective`] subject to `sum P = budget` and
/// `P_m >= lower[m]` by bisection on the Lagrange multiplier.
///
/// Returns `None` when the lower bounds exceed the budget.
pub fn concave_oracle(coeffs: &LinearSinrCoeffs, budget: f64, lower: &[f64]) -> Option<Vec<f64>> {
    let m = coeffs.k.len();
    if lower.iter().sum::<f64>() > budget {
        return None;
    }
    // stationarity: k / (k P + b + 1) = mu  =>  P = 1 / mu - (b + 1) / k
    let at = |mu: f64| -> Vec<f64> {
        (0..m)
            .map(|i| (1.0 / mu - (coeffs.b[i] + 1.0) / coeffs.k[i]).max(lower[i]))
            .collect()
    };
    let used = |mu: f64| -> f64 { at(mu).iter().sum() };
    let mut lo = 1e-300_f64;
    let mut hi = 1.0;
    while used(hi) > budget {
        hi *= 2.0;
    }
    // bisection in log space keeps relative precision over many decades
    for _ in 0..400 {
        let mid = (0.5 * (lo.ln() + hi.ln())).exp();
        if used(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    let mut p = at(hi);
    // put the bisection leftover on the unconstrained entries
    let free: Vec<usize> = (0..m).filter(|&i| p[i] > lower[i]).collect();
    let left = budget - p.iter().sum::<f64>();
    if !free.is_empty() {
        for &i in &free {
            p[i] += left / free.len() as f64;
        }
    }
    Some(p)
}

/// Stationarity and budget residual of a group-power allocation: the largest
/// pairwise relative spread of `k_m / (k_m P_m + b_m + 1)` over unpinned
/// groups, plus `|sum P - budget| / budget`.
pub fn kkt_residual(coeffs: &LinearSinrCoeffs, group_power: &[f64], pinned: &[bool], budget: f64) -> f64 {
    let marginal: Vec<f64> = (0..group_power.len())
        .filter(|&m| !pinned[m])
        .map(|m| coeffs.k[m] / (coeffs.k[m] * group_power[m] + coeffs.b[m] + 1.0))
        .collect();
    let mut spread: f64 = 0.0;
    for (i, a) in marginal.iter().enumerate() {
        for b in &marginal[i + 1..] {
            spread = spread.max((a - b).abs() / a.abs().max(b.abs()));
        }
    }
    spread + (group_power.iter().sum::<f64>() - budget).abs() / budget
}

/// Discrete exchange test: moving `eps` of power from any unpinned group to
/// any pinned group must not raise [`linear_objective`]. `eps` defaults to
/// `1e-6 * budget`.
pub fn lemma2_exchange_check(
    coeffs: &LinearSinrCoeffs,
    group_power: &[f64],
    pinned: &[bool],
    budget: f64,
    eps: Option<f64>,
) -> bool {
    let eps = eps.unwrap_or(1e-6 * budget);
    let base = linear_objective(coeffs, group_power);
    let tol = 1e-12 * base.abs().max(1.0);
    for to in (0..group_power.len()).filter(|&m| pinned[m]) {
        for from in (0..group_power.len()).filter(|&m| !pinned[m]) {
            let mut p = group_power.to_vec();
            p[to] += eps;
            p[from] -= eps;
            if linear_objective(coeffs, &p) > base + tol {
                return false;
            }
        }
    }
    true
}
