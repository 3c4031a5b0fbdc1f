//! Reference schemes: fully digital ZF, TDMA with hybrid ZF, and FDMA
//! inside NOMA-style groups.

use num_complex::Complex64;

use crate::channel::{steering_vector, ChannelSet};
use crate::config::SystemConfig;
use crate::grouping::Grouping;
use crate::linalg::{pinv, CMatrix, CVector};
use crate::metrics::{energy_efficiency, Architecture};
use crate::power::stacked_adjoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineScheme {
    FullyDigitalZf,
    TdmaZf,
    Fdma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineResult {
    pub scheme: BaselineScheme,
    pub asr: f64,
    pub ee: f64,
    /// Indexed by user id.
    pub per_user_rate: Vec<f64>,
    /// Every user meets its rate floor.
    pub feasible: bool,
}

impl BaselineResult {
    fn new(scheme: BaselineScheme, per_user_rate: Vec<f64>, config: &SystemConfig) -> Self {
        let asr = per_user_rate.iter().sum();
        let arch = match scheme {
            BaselineScheme::FullyDigitalZf => Architecture::FullyDigital,
            _ => Architecture::Hybrid,
        };
        let feasible = per_user_rate
            .iter()
            .zip(&config.rate_floors)
            .all(|(r, floor)| *r >= floor - crate::power::RATE_FLOOR_TOL);
        Self {
            scheme,
            asr,
            ee: energy_efficiency(asr, config, arch),
            per_user_rate,
            feasible,
        }
    }
}

/// Water-filling of `budget` over parallel channels with gain-to-noise
/// ratios `gnr`: `p_k = max(0, mu - 1/gnr_k)` with `sum p = budget`.
/// Channels with non-positive ratio get zero power.
pub fn water_filling(gnr: &[f64], budget: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..gnr.len()).filter(|&k| gnr[k] > 0.0).collect();
    idx.sort_by(|&a, &b| gnr[b].total_cmp(&gnr[a]).then(a.cmp(&b)));
    let mut powers = vec![0.0; gnr.len()];
    if idx.is_empty() || budget <= 0.0 {
        return powers;
    }
    // grow the active set while the water level stays above the next floor
    let mut active = 0;
    let mut floor_sum = 0.0;
    let mut level = 0.0;
    for (n, &k) in idx.iter().enumerate() {
        let floor = 1.0 / gnr[k];
        let candidate = (budget + floor_sum + floor) / (n + 1) as f64;
        if candidate <= floor {
            break;
        }
        floor_sum += floor;
        active = n + 1;
        level = candidate;
    }
    for &k in &idx[..active] {
        powers[k] = (level - 1.0 / gnr[k]).max(0.0);
    }
    powers
}

/// Rates `log2(1 + sinr_k)` of single-stream users with beamformer `w`
/// (column `k` serves user `users[k]`) and per-stream powers.
fn stream_rates(h_adj: &CMatrix, users: &[usize], w: &CMatrix, powers: &[f64], sigma2: f64) -> Vec<f64> {
    users
        .iter()
        .enumerate()
        .map(|(s, &k)| {
            let proj: Vec<f64> = (0..w.ncols())
                .map(|i| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..w.nrows() {
                        acc += h_adj[(k, a)] * w[(a, i)];
                    }
                    acc.norm_sqr()
                })
                .collect();
            let interference: f64 = (0..w.ncols())
                .filter(|&i| i != s)
                .map(|i| proj[i] * powers[i])
                .sum();
            (1.0 + proj[s] * powers[s] / (interference + sigma2)).log2()
        })
        .collect()
}

fn normalize_columns(w: &mut CMatrix) {
    for mut c in w.column_iter_mut() {
        let n = c.norm();
        if n > 0.0 {
            c.scale_mut(1.0 / n);
        }
    }
}

fn own_gnr(h_adj: &CMatrix, users: &[usize], w: &CMatrix, sigma2: f64) -> Vec<f64> {
    users
        .iter()
        .enumerate()
        .map(|(s, &k)| (h_adj.row(k) * w.column(s))[(0, 0)].norm_sqr() / sigma2)
        .collect()
}

/// Fully digital precoder `H^+` with unit-norm columns and water-filling
/// over the total budget.
pub fn fully_digital_zf(channels: &ChannelSet, config: &SystemConfig) -> BaselineResult {
    let h_adj = stacked_adjoint(channels);
    let users: Vec<usize> = (0..channels.n_users()).collect();
    let mut w = pinv(&h_adj);
    normalize_columns(&mut w);
    let gnr = own_gnr(&h_adj, &users, &w, config.noise_power);
    let powers = water_filling(&gnr, config.total_power);
    let rates = stream_rates(&h_adj, &users, &w, &powers, config.noise_power);
    BaselineResult::new(BaselineScheme::FullyDigitalZf, rates, config)
}

/// Splits users into slots of at most `M`, taking users round-robin across
/// groups so that each slot mixes groups.
pub fn tdma_slots(grouping: &Grouping, m: usize) -> Vec<Vec<usize>> {
    let mut order = Vec::with_capacity(grouping.n_users());
    let depth = grouping.groups.iter().map(Vec::len).max().unwrap_or(0);
    for n in 0..depth {
        for g in &grouping.groups {
            if let Some(&k) = g.get(n) {
                order.push(k);
            }
        }
    }
    order.chunks(m.max(1)).map(<[usize]>::to_vec).collect()
}

/// Constant-modulus analog beam toward user `k`'s strongest path, or the
/// phase-only matched beam when the channel has no path decomposition.
fn analog_beam(channels: &ChannelSet, k: usize) -> CVector {
    let n = channels.n_antennas();
    let scale = 1.0 / (n as f64).sqrt();
    match channels.strongest_path_aod(k) {
        Some(theta) => steering_vector(n, theta) * Complex64::new(scale, 0.0),
        None => channels.h[k].map(|z| Complex64::from_polar(scale, z.arg())),
    }
}

/// TDMA: each slot serves up to `M` users with steering-vector analog beams,
/// digital ZF and water-filling; rates are scaled by the slot's share of time.
pub fn tdma_zf(channels: &ChannelSet, grouping: &Grouping, config: &SystemConfig) -> BaselineResult {
    let h_adj = stacked_adjoint(channels);
    let slots = tdma_slots(grouping, config.n_rf_chains);
    let share = 1.0 / slots.len() as f64;
    let mut rates = vec![0.0; channels.n_users()];
    for slot in &slots {
        let columns: Vec<CVector> = slot.iter().map(|&k| analog_beam(channels, k)).collect();
        let a = CMatrix::from_columns(&columns);
        let hs_adj = CMatrix::from_fn(slot.len(), channels.n_antennas(), |r, c| h_adj[(slot[r], c)]);
        let mut w = &a * pinv(&(&hs_adj * &a));
        normalize_columns(&mut w);
        let gnr = own_gnr(&h_adj, slot, &w, config.noise_power);
        let powers = water_filling(&gnr, config.total_power);
        for (&k, r) in slot
            .iter()
            .zip(stream_rates(&h_adj, slot, &w, &powers, config.noise_power))
        {
            rates[k] = share * r;
        }
    }
    BaselineResult::new(BaselineScheme::TdmaZf, rates, config)
}

/// FDMA inside each group: the group's band is split evenly among its users,
/// every user gets `P / K`, and beam `w_m` serves all of group `m`.
pub fn fdma(
    channels: &ChannelSet,
    grouping: &Grouping,
    config: &SystemConfig,
    w: &CMatrix,
) -> BaselineResult {
    let k_total = channels.n_users();
    let p = config.total_power / k_total as f64;
    let proj = stacked_adjoint(channels) * w;
    let mut rates = vec![0.0; k_total];
    for (m, group) in grouping.groups.iter().enumerate() {
        let share = group.len() as f64;
        for &k in group {
            let signal = proj[(k, m)].norm_sqr() * p;
            let interference: f64 = grouping
                .groups
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != m)
                .map(|(i, g)| proj[(k, i)].norm_sqr() * p * g.len() as f64)
                .sum();
            rates[k] = (1.0 + signal / (interference + config.noise_power / share)).log2() / share;
        }
    }
    BaselineResult::new(BaselineScheme::Fdma, rates, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::rng::rng_stream;

    /// Water level by bisection, as an independent check.
    fn bisection_level(gnr: &[f64], budget: f64) -> f64 {
        let used = |mu: f64| -> f64 {
            gnr.iter()
                .filter(|g| **g > 0.0)
                .map(|g| (mu - 1.0 / g).max(0.0))
                .sum()
        };
        let (mut lo, mut hi) = (0.0, budget + gnr.iter().map(|g| 1.0 / g).fold(0.0, f64::max));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if used(mid) > budget {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn cfg(n: usize, m: usize, k: usize) -> SystemConfig {
        SystemConfig {
            n_antennas: n,
            n_rf_chains: m,
            n_users: k,
            rate_floors: vec![0.0; k],
            ..SystemConfig::default()
        }
    }

    #[test]
    fn water_filling_matches_bisection() {
        let gnr = [120.0, 3.5, 0.9];
        for budget in [0.1, 1.0, 4.0] {
            let p = water_filling(&gnr, budget);
            let mu = bisection_level(&gnr, budget);
            for (g, pk) in gnr.iter().zip(&p) {
                assert!((pk - (mu - 1.0 / g).max(0.0)).abs() < 1e-8, "{p:?} mu={mu}");
            }
            assert!((p.iter().sum::<f64>() - budget).abs() < 1e-12);
        }
    }

    #[test]
    fn water_filling_shared_level() {
        let gnr = [10.0, 8.0, 0.0, 2.0, 0.01];
        let p = water_filling(&gnr, 1.0);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[4], 0.0);
        let levels: Vec<f64> = (0..5)
            .filter(|&k| p[k] > 0.0)
            .map(|k| p[k] + 1.0 / gnr[k])
            .collect();
        for l in &levels {
            assert!((l - levels[0]).abs() < 1e-8);
        }
    }

    #[test]
    fn orthonormal_channels_split_equally() {
        let n = 8;
        let h: Vec<CVector> = (0..3)
            .map(|k| steering_vector(n, 2.0 * k as f64 / n as f64))
            .collect();
        let set = ChannelSet::from_vectors(h);
        let c = cfg(n, 2, 3);
        let r = fully_digital_zf(&set, &c);
        let want = (1.0 + n as f64 * (c.total_power / 3.0) / c.noise_power).log2();
        for rate in &r.per_user_rate {
            assert!((rate - want).abs() < 1e-9);
        }
        assert!((r.asr - r.per_user_rate.iter().sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn single_user_full_power_matched_filter() {
        let c = cfg(16, 1, 1);
        let set = generate_channels(&c, &mut rng_stream(4, 0));
        let r = fully_digital_zf(&set, &c);
        let want = (1.0 + set.h[0].norm_squared() * c.total_power / c.noise_power).log2();
        assert!((r.per_user_rate[0] - want).abs() < 1e-9);
    }

    #[test]
    fn tdma_single_slot_when_users_equal_chains() {
        let c = cfg(32, 2, 2);
        let set = generate_channels(&c, &mut rng_stream(5, 0));
        let g = Grouping::from_groups(vec![vec![0], vec![1]]);
        assert_eq!(tdma_slots(&g, 2).len(), 1);
        let r = tdma_zf(&set, &g, &c);
        assert!(r.asr > 0.0);
    }

    #[test]
    fn tdma_time_sharing_halves_rates() {
        // users 2, 3 are copies of users 0, 1: two identical slots
        let c1 = cfg(32, 2, 2);
        let base = generate_channels(&c1, &mut rng_stream(6, 0));
        let single = tdma_zf(&base, &Grouping::from_groups(vec![vec![0], vec![1]]), &c1);

        let mut gains = base.path_gains.clone();
        gains.extend(base.path_gains.clone());
        let mut aods = base.path_aod_cos.clone();
        aods.extend(base.path_aod_cos.clone());
        let doubled = ChannelSet::from_paths(32, gains, aods, vec![50.0; 4]);
        let c2 = cfg(32, 2, 4);
        let g = Grouping::from_groups(vec![vec![0, 2], vec![1, 3]]);
        let slots = tdma_slots(&g, 2);
        assert_eq!(slots, vec![vec![0, 1], vec![2, 3]]);
        let r = tdma_zf(&doubled, &g, &c2);
        for k in 0..4 {
            assert!((r.per_user_rate[k] - single.per_user_rate[k % 2] / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tdma_slot_fractions_cover_every_user_once() {
        let g = Grouping::from_groups(vec![vec![0, 2, 3, 5], vec![1, 4]]);
        let slots = tdma_slots(&g, 2);
        assert_eq!(slots, vec![vec![0, 1], vec![2, 4], vec![3, 5]]);
        let mut all: Vec<usize> = slots.concat();
        all.sort_unstable();
        assert_eq!(all, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn fdma_singleton_groups_are_sdma() {
        let c = cfg(16, 2, 2);
        let set = generate_channels(&c, &mut rng_stream(8, 0));
        let g = Grouping::from_groups(vec![vec![0], vec![1]]);
        let w = CMatrix::from_columns(&[steering_vector(16, 0.3) / Complex64::new(4.0, 0.0),
            steering_vector(16, -0.4) / Complex64::new(4.0, 0.0)]);
        let r = fdma(&set, &g, &c, &w);
        let p = c.total_power / 2.0;
        for k in 0..2 {
            let own = set.h[k].dotc(&w.column(k).into_owned()).norm_sqr();
            let other = set.h[k].dotc(&w.column(1 - k).into_owned()).norm_sqr();
            let want = (1.0 + own * p / (other * p + c.noise_power)).log2();
            assert!((r.per_user_rate[k] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn fdma_shared_group_without_interference() {
        let n = 8;
        let h0 = steering_vector(n, 0.0);
        let h1 = steering_vector(n, 0.0) * Complex64::new(0.5, 0.0);
        let h2 = steering_vector(n, 0.5);
        let set = ChannelSet::from_vectors(vec![h0, h1, h2]);
        let g = Grouping::from_groups(vec![vec![0, 1], vec![2]]);
        let scale = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        let w = CMatrix::from_columns(&[steering_vector(n, 0.0) * scale, steering_vector(n, 0.5) * scale]);
        let c = cfg(n, 2, 3);
        let r = fdma(&set, &g, &c, &w);
        let p = c.total_power / 3.0;
        for (k, amp) in [(0usize, 1.0f64), (1, 0.5)] {
            let gain = n as f64 * amp * amp;
            let want = 0.5 * (1.0 + gain * p / (c.noise_power / 2.0)).log2();
            assert!((r.per_user_rate[k] - want).abs() < 1e-9);
        }
    }
}
