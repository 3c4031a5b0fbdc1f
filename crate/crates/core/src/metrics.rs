//! SINR, rates, sum rate and energy efficiency.

use serde::{Deserialize, Serialize};

use crate::config::SystemConfig;
use crate::power::{EffectiveGains, PowerAllocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    /// `M` RF chains driving `M * N` phase shifters.
    Hybrid,
    /// One RF chain per antenna, no phase shifters.
    FullyDigital,
}

/// SIC-ordered SINR of every user:
/// `g p_{m,n} / (g sum_{j<n} p_{m,j} + sum_{i!=m} g_i P_i + sigma2)`.
pub fn sinr_matrix(gains: &EffectiveGains, alloc: &PowerAllocation, sigma2: f64) -> Vec<Vec<f64>> {
    gains
        .gains
        .iter()
        .enumerate()
        .map(|(m, group)| {
            let mut above = 0.0;
            group
                .iter()
                .zip(&alloc.user_power[m])
                .map(|(row, &p)| {
                    let own = row[m];
                    let inter: f64 = row
                        .iter()
                        .zip(&alloc.group_power)
                        .enumerate()
                        .filter(|(i, _)| *i != m)
                        .map(|(_, (g, pi))| g * pi)
                        .sum();
                    let s = own * p / (own * above + inter + sigma2);
                    above += p;
                    s
                })
                .collect()
        })
        .collect()
}

/// Transmit plus circuit power.
pub fn consumed_power(config: &SystemConfig, architecture: Architecture) -> f64 {
    let n = config.n_antennas as f64;
    let m = config.n_rf_chains as f64;
    match architecture {
        Architecture::Hybrid => {
            config.total_power + m * config.rf_chain_power_w + m * n * config.phase_shifter_power_w
        }
        Architecture::FullyDigital => config.total_power + n * config.rf_chain_power_w,
    }
}

/// Sum rate over consumed power, in bits/s/Hz per watt.
pub fn energy_efficiency(asr: f64, config: &SystemConfig, architecture: Architecture) -> f64 {
    asr / consumed_power(config, architecture)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub sinr: Vec<Vec<f64>>,
    pub rate: Vec<Vec<f64>>,
    /// Zero for infeasible allocations.
    pub asr: f64,
    pub ee: f64,
    pub feasible: bool,
    pub total_consumed_power: f64,
}

impl RateReport {
    /// Rates indexed by original user id.
    pub fn per_user_rate(&self, gains: &EffectiveGains, n_users: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_users];
        for (users, rates) in gains.users.iter().zip(&self.rate) {
            for (&k, &r) in users.iter().zip(rates) {
                out[k] = r;
            }
        }
        out
    }
}

pub fn rate_report(
    gains: &EffectiveGains,
    alloc: &PowerAllocation,
    config: &SystemConfig,
    architecture: Architecture,
) -> RateReport {
    let sinr = sinr_matrix(gains, alloc, config.noise_power);
    let rate: Vec<Vec<f64>> = sinr
        .iter()
        .map(|g| g.iter().map(|s| (1.0 + s).log2()).collect())
        .collect();
    let asr = if alloc.feasible {
        rate.iter().flatten().sum()
    } else {
        0.0
    };
    RateReport {
        sinr,
        rate,
        asr,
        ee: energy_efficiency(asr, config, architecture),
        feasible: alloc.feasible,
        total_consumed_power: consumed_power(config, architecture),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::LinearSinrCoeffs;

    fn alloc(group_power: Vec<f64>, user_power: Vec<Vec<f64>>) -> PowerAllocation {
        let m = group_power.len();
        PowerAllocation {
            eta: user_power.iter().map(|g| vec![0.0; g.len()]).collect(),
            group_power,
            user_power,
            feasible: true,
            failure: None,
            pinned: vec![false; m],
            coeffs: LinearSinrCoeffs {
                k: vec![1.0; m],
                b: vec![0.0; m],
            },
            inner_passes: vec![],
        }
    }

    #[test]
    fn single_user_no_interference() {
        let g = EffectiveGains::sorted(vec![vec![0]], vec![vec![vec![3.0]]]);
        let a = alloc(vec![0.5], vec![vec![0.5]]);
        let s = sinr_matrix(&g, &a, 0.1);
        assert!((s[0][0] - 3.0 * 0.5 / 0.1).abs() < 1e-12);
    }

    #[test]
    fn two_groups_two_users_hand_expansion() {
        // group 0: users (0, 1); group 1: users (2, 3)
        let g = EffectiveGains::sorted(
            vec![vec![0, 1], vec![2, 3]],
            vec![
                vec![vec![5.0, 0.2], vec![2.0, 0.1]],
                vec![vec![0.3, 4.0], vec![0.05, 1.5]],
            ],
        );
        let a = alloc(vec![1.0, 2.0], vec![vec![0.3, 0.7], vec![0.5, 1.5]]);
        let s2 = 0.01;
        let s = sinr_matrix(&g, &a, s2);
        let want = [
            [5.0 * 0.3 / (0.2 * 2.0 + s2), 2.0 * 0.7 / (2.0 * 0.3 + 0.1 * 2.0 + s2)],
            [4.0 * 0.5 / (0.3 * 1.0 + s2), 1.5 * 1.5 / (1.5 * 0.5 + 0.05 * 1.0 + s2)],
        ];
        for m in 0..2 {
            for n in 0..2 {
                assert!((s[m][n] - want[m][n]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn power_accounting() {
        let cfg = SystemConfig {
            n_antennas: 64,
            n_rf_chains: 2,
            total_power: 1.0,
            ..SystemConfig::default()
        };
        assert!((consumed_power(&cfg, Architecture::Hybrid) - 1.628).abs() < 1e-12);
        assert!((consumed_power(&cfg, Architecture::FullyDigital) - 17.0).abs() < 1e-12);
        assert_eq!(energy_efficiency(0.0, &cfg, Architecture::Hybrid), 0.0);
    }

    #[test]
    fn ratio_invariance() {
        let g = EffectiveGains::sorted(
            vec![vec![0, 1], vec![2]],
            vec![
                vec![vec![5.0, 0.2], vec![2.0, 0.1]],
                vec![vec![0.3, 4.0]],
            ],
        );
        let a = alloc(vec![1.0, 2.0], vec![vec![0.3, 0.7], vec![2.0]]);
        let c = 37.5;
        let b = alloc(vec![c, 2.0 * c], vec![vec![0.3 * c, 0.7 * c], vec![2.0 * c]]);
        let s1 = sinr_matrix(&g, &a, 0.02);
        let s2 = sinr_matrix(&g, &b, 0.02 * c);
        for (x, y) in s1.iter().flatten().zip(s2.iter().flatten()) {
            assert!((x - y).abs() / x < 1e-12);
        }
    }
}
