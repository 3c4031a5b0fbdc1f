//! Two-level power allocation for a fixed hybrid beamformer.
//!
//! Within a group, every user except the strongest is held exactly at its
//! rate floor by a closed-form backward recursion, which makes the
//! strongest user's SINR affine in the group budget: `gamma = k * P_m + b`.
//! Across groups, the sum of `log2(k_m P_m + b_m + 1)` is maximized by a
//! water-level closed form; groups whose closed-form share falls below
//! their floor are pinned at the floor and the rest of the budget is
//! re-split among the remaining groups. Inter-group interference is frozen
//! during each outer sweep and refreshed `f_max` times.

use crate::channel::ChannelSet;
use crate::config::SystemConfig;
use crate::grouping::Grouping;
use crate::linalg::CMatrix;
use crate::metrics::sinr_matrix;

/// Floor slack, in bits/s/Hz, when checking recomputed rates.
pub const RATE_FLOOR_TOL: f64 = 1e-9;

/// Post-beamforming gains `|h_{m,n}^H w_i|^2` with users in SIC order.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveGains {
    /// Original user ids, per group, in descending own-beam gain.
    pub users: Vec<Vec<usize>>,
    /// `gains[m][n][i]` for user `n` of group `m` and beam `i`.
    pub gains: Vec<Vec<Vec<f64>>>,
}

impl EffectiveGains {
    /// Sorts each group's users by descending own-beam gain, ties by id.
    pub fn sorted(users: Vec<Vec<usize>>, gains: Vec<Vec<Vec<f64>>>) -> Self {
        let mut out_users = Vec::with_capacity(users.len());
        let mut out_gains = Vec::with_capacity(users.len());
        for (m, (u, g)) in users.into_iter().zip(gains).enumerate() {
            let mut rows: Vec<(usize, Vec<f64>)> = u.into_iter().zip(g).collect();
            rows.sort_by(|a, b| b.1[m].total_cmp(&a.1[m]).then(a.0.cmp(&b.0)));
            let (u, g): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
            out_users.push(u);
            out_gains.push(g);
        }
        Self {
            users: out_users,
            gains: out_gains,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.users.len()
    }

    pub fn own(&self, m: usize, n: usize) -> f64 {
        self.gains[m][n][m]
    }

    /// Same gains with every cross-beam term set to zero.
    pub fn without_inter_group(&self) -> Self {
        let mut out = self.clone();
        for (m, group) in out.gains.iter_mut().enumerate() {
            for row in group.iter_mut() {
                for (i, g) in row.iter_mut().enumerate() {
                    if i != m {
                        *g = 0.0;
                    }
                }
            }
        }
        out
    }

    /// `eta[m][n] = 2^{r} - 1` for the user's floor `r`.
    pub fn eta(&self, rate_floors: &[f64]) -> Vec<Vec<f64>> {
        self.users
            .iter()
            .map(|g| g.iter().map(|&k| rate_floors[k].exp2() - 1.0).collect())
            .collect()
    }
}

/// Computes all effective gains for beamformer columns `w` and orders each
/// group for SIC.
pub fn effective_gains(channels: &ChannelSet, grouping: &Grouping, w: &CMatrix) -> EffectiveGains {
    gains_from_projection(grouping, &(stacked_adjoint(channels) * w))
}

/// `K x N` matrix whose row `k` is `h_k^H`.
pub fn stacked_adjoint(channels: &ChannelSet) -> CMatrix {
    let k = channels.n_users();
    let n = channels.n_antennas();
    CMatrix::from_fn(k, n, |r, c| channels.h[r][c].conj())
}

/// Builds SIC-ordered gains from `proj[(k, i)] = h_k^H w_i`.
pub fn gains_from_projection(grouping: &Grouping, proj: &CMatrix) -> EffectiveGains {
    let gains = grouping
        .groups
        .iter()
        .map(|g| {
            g.iter()
                .map(|&k| (0..proj.ncols()).map(|i| proj[(k, i)].norm_sqr()).collect())
                .collect()
        })
        .collect();
    EffectiveGains::sorted(grouping.groups.clone(), gains)
}

/// `I[m][n] = sum_{i != m} g[m][n][i] * P_i`.
pub fn inter_interference(gains: &EffectiveGains, group_power: &[f64]) -> Vec<Vec<f64>> {
    gains
        .gains
        .iter()
        .enumerate()
        .map(|(m, group)| {
            group
                .iter()
                .map(|row| {
                    row.iter()
                        .zip(group_power)
                        .enumerate()
                        .filter(|(i, _)| *i != m)
                        .map(|(_, (g, p))| g * p)
                        .sum()
                })
                .collect()
        })
        .collect()
}

/// Per-user powers of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct IntraAllocation {
    pub powers: Vec<f64>,
    pub feasible: bool,
}

/// Closed-form intra-group split of budget `p_group` for group `m`.
///
/// Users `|G|..2` are solved backwards so each sits exactly on its floor
/// given `interference`; the strongest user takes what is left.
pub fn intra_gpa(
    m: usize,
    p_group: f64,
    gains: &EffectiveGains,
    interference: &[f64],
    eta: &[f64],
    sigma2: f64,
) -> IntraAllocation {
    let size = gains.users[m].len();
    let mut powers = vec![0.0; size];
    let mut tail = 0.0;
    for n in (1..size).rev() {
        let g = gains.own(m, n);
        let c = (interference[n] + sigma2) / g;
        powers[n] = eta[n] / (eta[n] + 1.0) * (p_group - tail + c);
        tail += powers[n];
    }
    powers[0] = p_group - tail;
    let feasible = powers.iter().all(|p| p.is_finite() && *p >= 0.0);
    IntraAllocation { powers, feasible }
}

/// Coefficients of `gamma_{m,1} = k_m P_m + b_m` under frozen interference.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSinrCoeffs {
    pub k: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearSinrCoeffs {
    /// True when every slope is strictly positive.
    pub fn slopes_positive(&self) -> bool {
        self.k.iter().all(|k| k.is_finite() && *k > 0.0)
    }

    /// Group budget at which `gamma_{m,1}` equals `eta1`.
    pub fn floor_power(&self, m: usize, eta1: f64) -> f64 {
        (eta1 - self.b[m]) / self.k[m]
    }

    /// `(b_m + 1) / k_m`.
    fn offset(&self, m: usize) -> f64 {
        (self.b[m] + 1.0) / self.k[m]
    }
}

pub fn linear_coeffs(
    gains: &EffectiveGains,
    interference: &[Vec<f64>],
    eta: &[Vec<f64>],
    sigma2: f64,
) -> LinearSinrCoeffs {
    let m_count = gains.n_groups();
    let mut k = Vec::with_capacity(m_count);
    let mut b = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let base = gains.own(m, 0) / (interference[m][0] + sigma2);
        let mut prod = 1.0;
        let mut sum_k = 0.0;
        let mut sum_b = 0.0;
        for n in 1..gains.users[m].len() {
            prod /= eta[m][n] + 1.0;
            sum_k += eta[m][n] * prod;
            sum_b += eta[m][n] * (interference[m][n] + sigma2) / gains.own(m, n) * prod;
        }
        k.push(base * (1.0 - sum_k));
        b.push(-base * sum_b);
    }
    LinearSinrCoeffs { k, b }
}

/// Unconstrained optimum of `sum log2(k P + b + 1)` over `active` with
/// `sum P = budget`. Entries outside `active` are left at zero.
pub fn lemma1_allocation(coeffs: &LinearSinrCoeffs, budget: f64, active: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; coeffs.k.len()];
    if active.is_empty() {
        return out;
    }
    let level = (budget + active.iter().map(|&i| coeffs.offset(i)).sum::<f64>())
        / active.len() as f64;
    for &m in active {
        out[m] = level - coeffs.offset(m);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Infeasibility {
    /// Some `k_m <= 0`; the floors of that group cannot be met at any budget.
    NonPositiveSlope,
    /// The pinned floor budgets alone exceed the total power.
    FloorsExceedBudget,
    /// A user power came out negative.
    NegativePower,
    /// Recomputed rate of a group's strongest user is below its floor.
    RateBelowFloor,
}

/// Result of the two-level allocation. User vectors follow the order of
/// [`EffectiveGains::users`]. Every failure except `RateBelowFloor` carries
/// zero powers.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub group_power: Vec<f64>,
    pub user_power: Vec<Vec<f64>>,
    pub eta: Vec<Vec<f64>>,
    pub feasible: bool,
    pub failure: Option<Infeasibility>,
    /// Groups held at their floor in the last outer sweep.
    pub pinned: Vec<bool>,
    /// Coefficients of the last outer sweep.
    pub coeffs: LinearSinrCoeffs,
    /// Number of closed-form evaluations in each outer sweep.
    pub inner_passes: Vec<usize>,
}

impl PowerAllocation {
    fn infeasible(
        m: usize,
        eta: Vec<Vec<f64>>,
        coeffs: LinearSinrCoeffs,
        inner_passes: Vec<usize>,
        why: Infeasibility,
    ) -> Self {
        Self {
            group_power: vec![0.0; m],
            user_power: eta.iter().map(|g| vec![0.0; g.len()]).collect(),
            eta,
            feasible: false,
            failure: Some(why),
            pinned: vec![false; m],
            coeffs,
            inner_passes,
        }
    }

    pub fn total_power(&self) -> f64 {
        self.user_power.iter().flatten().sum()
    }
}

/// Inter-group allocation followed by the intra-group split.
pub fn inter_gpa(
    gains: &EffectiveGains,
    eta: &[Vec<f64>],
    total_power: f64,
    sigma2: f64,
    f_max: usize,
) -> PowerAllocation {
    let m_count = gains.n_groups();
    let mut group_power = vec![total_power / m_count as f64; m_count];
    let mut pinned = vec![false; m_count];
    let mut coeffs = LinearSinrCoeffs {
        k: vec![0.0; m_count],
        b: vec![0.0; m_count],
    };
    let mut inner_passes = Vec::with_capacity(f_max);

    for _ in 0..f_max {
        let interference = inter_interference(gains, &group_power);
        coeffs = linear_coeffs(gains, &interference, eta, sigma2);
        if !coeffs.slopes_positive() {
            return PowerAllocation::infeasible(
                m_count,
                eta.to_vec(),
                coeffs,
                inner_passes,
                Infeasibility::NonPositiveSlope,
            );
        }
        let floors: Vec<f64> = (0..m_count)
            .map(|m| coeffs.floor_power(m, eta[m][0]))
            .collect();

        let mut active: Vec<usize> = (0..m_count).collect();
        let mut budget = total_power;
        let mut next = vec![0.0; m_count];
        pinned = vec![false; m_count];
        let mut passes = 0;
        while !active.is_empty() {
            passes += 1;
            let star = lemma1_allocation(&coeffs, budget, &active);
            let violators: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| star[i] < floors[i])
                .collect();
            if violators.is_empty() {
                for &i in &active {
                    next[i] = star[i];
                }
                break;
            }
            for &i in &violators {
                next[i] = floors[i];
                pinned[i] = true;
                budget -= floors[i];
            }
            active.retain(|i| !violators.contains(i));
        }
        inner_passes.push(passes);
        if budget < 0.0 {
            return PowerAllocation::infeasible(
                m_count,
                eta.to_vec(),
                coeffs,
                inner_passes,
                Infeasibility::FloorsExceedBudget,
            );
        }
        group_power = next;
    }

    let interference = inter_interference(gains, &group_power);
    let mut user_power = Vec::with_capacity(m_count);
    for m in 0..m_count {
        let intra = intra_gpa(
            m,
            group_power[m],
            gains,
            &interference[m],
            &eta[m],
            sigma2,
        );
        if !intra.feasible {
            return PowerAllocation::infeasible(
                m_count,
                eta.to_vec(),
                coeffs,
                inner_passes,
                Infeasibility::NegativePower,
            );
        }
        user_power.push(intra.powers);
    }
    let mut alloc = PowerAllocation {
        group_power,
        user_power,
        eta: eta.to_vec(),
        feasible: true,
        failure: None,
        pinned,
        coeffs,
        inner_passes,
    };
    let sinr = sinr_matrix(gains, &alloc, sigma2);
    let short = sinr
        .iter()
        .zip(eta)
        .any(|(s, e)| (1.0 + s[0]).log2() < (1.0 + e[0]).log2() - RATE_FLOOR_TOL);
    if short {
        alloc.feasible = false;
        alloc.failure = Some(Infeasibility::RateBelowFloor);
    }
    alloc
}

/// Effective gains plus two-level allocation for beamformer `w`.
pub fn allocate(
    channels: &ChannelSet,
    grouping: &Grouping,
    w: &CMatrix,
    config: &SystemConfig,
) -> (EffectiveGains, PowerAllocation) {
    let gains = effective_gains(channels, grouping, w);
    let eta = gains.eta(&config.rate_floors);
    let alloc = inter_gpa(
        &gains,
        &eta,
        config.total_power,
        config.noise_power,
        config.f_max,
    );
    (gains, alloc)
}
