//! Scenario configuration and its validation.
//!
//! A [`SystemConfig`] holds every constant of one downlink scenario: array
//! size, RF chains, users, power budget, noise, per-user rate floors, the
//! multipath model, the swarm hyper-parameters and the RNG seed. It is
//! immutable once validated and can be loaded from a flat TOML file with a
//! `[pso]` section.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Boundary-compressed PSO hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    /// Swarm size.
    pub n_particles: usize,
    /// Number of velocity/position updates.
    pub n_iterations: usize,
    /// Cognition ratio.
    pub c1: f64,
    /// Social ratio.
    pub c2: f64,
    pub omega_max: f64,
    pub omega_min: f64,
    /// Draw independent uniforms for the real and imaginary part of each
    /// attraction term instead of one real scalar per entry.
    pub split_component_draws: bool,
}

impl PsoConfig {
    /// Reduced swarm used by the experiment runner by default.
    pub fn desk() -> Self {
        Self {
            n_particles: 100,
            n_iterations: 60,
            ..Self::default()
        }
    }
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            n_particles: 800,
            n_iterations: 200,
            c1: 1.4,
            c2: 1.4,
            omega_max: 0.9,
            omega_min: 0.4,
            split_component_draws: false,
        }
    }
}

/// All scenario constants. Field units are SI (watts, meters) unless the
/// name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_antennas: usize,
    pub n_rf_chains: usize,
    pub n_users: usize,
    pub total_power: f64,
    pub noise_power: f64,
    /// Per-user minimum rate in bits/s/Hz, indexed by user id.
    pub rate_floors: Vec<f64>,
    pub n_paths: usize,
    /// LOS model (one dominant path) when true, pure NLOS otherwise.
    pub los: bool,
    pub nlos_backoff_db: f64,
    pub cell_min_m: f64,
    pub cell_max_m: f64,
    pub ref_dist_m: f64,
    pub path_loss_exp: f64,
    /// Antenna spacing over wavelength. Only half-wavelength arrays are supported.
    pub antenna_spacing_ratio: f64,
    pub pso: PsoConfig,
    /// Outer interference-refresh sweeps of the inter-group allocator.
    pub f_max: usize,
    pub rf_chain_power_w: f64,
    pub phase_shifter_power_w: f64,
    /// Cap on user-grouping iterations.
    pub max_grouping_iterations: usize,
    pub seed: u64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        let n_users = 6;
        Self {
            n_antennas: 64,
            n_rf_chains: 2,
            n_users,
            total_power: 1.0,
            noise_power: 1e-3,
            rate_floors: vec![1.0; n_users],
            n_paths: 4,
            los: false,
            nlos_backoff_db: 15.0,
            cell_min_m: 10.0,
            cell_max_m: 100.0,
            ref_dist_m: 30.0,
            path_loss_exp: 2.0,
            antenna_spacing_ratio: 0.5,
            pso: PsoConfig::default(),
            f_max: 6,
            rf_chain_power_w: 0.25,
            phase_shifter_power_w: 0.001,
            max_grouping_iterations: 100,
            seed: 42,
        }
    }
}

impl SystemConfig {
    /// Parses a TOML document. Missing fields take their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Transmit-power-to-noise ratio in dB.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.total_power / self.noise_power).log10()
    }

    /// Sets the noise power so that `total_power / noise_power` equals `snr_db`.
    pub fn set_snr_db(&mut self, snr_db: f64) {
        self.noise_power = self.total_power / 10f64.powf(snr_db / 10.0);
    }

    /// Sets every user's rate floor to `r`, resizing to `n_users`.
    pub fn set_uniform_rate_floor(&mut self, r: f64) {
        self.rate_floors = vec![r; self.n_users];
    }

    /// Checks every invariant and returns the config unchanged, or names the
    /// first failing field.
    pub fn validate(self) -> Result<Self> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(field, format!("must be finite and > 0, got {v}")))
            }
        }

        if self.n_rf_chains < 1 {
            return Err(invalid("n_rf_chains", "must be >= 1"));
        }
        if self.n_users <= self.n_rf_chains {
            return Err(invalid(
                "n_users",
                format!(
                    "must exceed n_rf_chains ({} <= {})",
                    self.n_users, self.n_rf_chains
                ),
            ));
        }
        if self.n_antennas < self.n_rf_chains {
            return Err(invalid(
                "n_antennas",
                format!(
                    "must be >= n_rf_chains ({} < {})",
                    self.n_antennas, self.n_rf_chains
                ),
            ));
        }
        positive("total_power", self.total_power)?;
        positive("noise_power", self.noise_power)?;
        if self.rate_floors.len() != self.n_users {
            return Err(invalid(
                "rate_floors",
                format!(
                    "length {} does not match n_users {}",
                    self.rate_floors.len(),
                    self.n_users
                ),
            ));
        }
        if let Some(r) = self
            .rate_floors
            .iter()
            .find(|r| !(r.is_finite() && **r >= 0.0))
        {
            return Err(invalid("rate_floors", format!("entries must be >= 0, got {r}")));
        }
        if self.n_paths < 1 {
            return Err(invalid("n_paths", "must be >= 1"));
        }
        if !(self.nlos_backoff_db.is_finite() && self.nlos_backoff_db >= 0.0) {
            return Err(invalid("nlos_backoff_db", "must be finite and >= 0"));
        }
        positive("cell_min_m", self.cell_min_m)?;
        positive("cell_max_m", self.cell_max_m)?;
        if self.cell_max_m < self.cell_min_m {
            return Err(invalid("cell_max_m", "must be >= cell_min_m"));
        }
        positive("ref_dist_m", self.ref_dist_m)?;
        if !(self.path_loss_exp.is_finite() && self.path_loss_exp >= 0.0) {
            return Err(invalid("path_loss_exp", "must be finite and >= 0"));
        }
        if self.antenna_spacing_ratio != 0.5 {
            return Err(invalid(
                "antenna_spacing_ratio",
                format!("only 0.5 is supported, got {}", self.antenna_spacing_ratio),
            ));
        }
        if self.f_max < 1 {
            return Err(invalid("f_max", "must be >= 1"));
        }
        positive("rf_chain_power_w", self.rf_chain_power_w)?;
        positive("phase_shifter_power_w", self.phase_shifter_power_w)?;
        if self.max_grouping_iterations < 1 {
            return Err(invalid("max_grouping_iterations", "must be >= 1"));
        }

        let pso = &self.pso;
        if pso.n_particles < 1 {
            return Err(invalid("pso.n_particles", "must be >= 1"));
        }
        if pso.n_iterations < 1 {
            return Err(invalid("pso.n_iterations", "must be >= 1"));
        }
        if !(pso.c1.is_finite() && pso.c1 >= 0.0) {
            return Err(invalid("pso.c1", "must be finite and >= 0"));
        }
        if !(pso.c2.is_finite() && pso.c2 >= 0.0) {
            return Err(invalid("pso.c2", "must be finite and >= 0"));
        }
        positive("pso.omega_min", pso.omega_min)?;
        if !(pso.omega_max.is_finite() && pso.omega_max >= pso.omega_min) {
            return Err(invalid("pso.omega_max", "must be >= omega_min"));
        }
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn field_of(err: Error) -> &'static str {
        match err {
            Error::InvalidConfig { field, .. } => field,
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn default_scenario_is_accepted() {
        let cfg = SystemConfig {
            n_antennas: 64,
            n_rf_chains: 2,
            n_users: 6,
            ..SystemConfig::default()
        };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn defaults_match_reference_settings() {
        let cfg = SystemConfig::default();
        assert_eq!(cfg.n_paths, 4);
        assert_eq!(cfg.rf_chain_power_w, 0.25);
        assert_eq!(cfg.phase_shifter_power_w, 0.001);
        assert_eq!(cfg.f_max, 6);
        let pso = PsoConfig::default();
        assert_eq!((pso.n_particles, pso.n_iterations), (800, 200));
        assert_eq!((pso.c1, pso.c2), (1.4, 1.4));
        assert_eq!((pso.omega_max, pso.omega_min), (0.9, 0.4));
        assert!((cfg.snr_db() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn users_must_exceed_rf_chains() {
        let cfg = SystemConfig {
            n_users: 2,
            n_rf_chains: 2,
            rate_floors: vec![1.0; 2],
            ..SystemConfig::default()
        };
        assert_eq!(field_of(cfg.validate().unwrap_err()), "n_users");
    }

    #[test]
    fn negative_noise_rejected() {
        let cfg = SystemConfig {
            noise_power: -1.0,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(cfg.validate().unwrap_err()), "noise_power");
    }

    #[test]
    fn spacing_and_floor_checks() {
        let cfg = SystemConfig {
            antenna_spacing_ratio: 0.25,
            ..SystemConfig::default()
        };
        assert_eq!(field_of(cfg.validate().unwrap_err()), "antenna_spacing_ratio");

        let mut cfg = SystemConfig::default();
        cfg.rate_floors[3] = -0.1;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "rate_floors");

        let mut cfg = SystemConfig::default();
        cfg.rate_floors.pop();
        assert_eq!(field_of(cfg.validate().unwrap_err()), "rate_floors");

        let mut cfg = SystemConfig::default();
        cfg.pso.omega_min = 0.95;
        assert_eq!(field_of(cfg.validate().unwrap_err()), "pso.omega_max");
    }

    #[test]
    fn validate_is_idempotent() {
        let once = SystemConfig::default().validate().unwrap();
        let twice = once.clone().validate().unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let cfg = SystemConfig::default();
        let parsed = SystemConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(parsed, cfg);

        let partial = "n_antennas = 16\nlos = true\n[pso]\nn_particles = 10\n";
        let parsed = SystemConfig::from_toml_str(partial).unwrap();
        assert_eq!(parsed.n_antennas, 16);
        assert!(parsed.los);
        assert_eq!(parsed.pso.n_particles, 10);
        assert_eq!(parsed.pso.n_iterations, 200);

        assert!(SystemConfig::from_toml_str("bogus_field = 1").is_err());
    }

    #[test]
    fn snr_helper() {
        let mut cfg = SystemConfig::default();
        cfg.set_snr_db(20.0);
        assert!((cfg.noise_power - 0.01).abs() < 1e-15);
        assert!((cfg.snr_db() - 20.0).abs() < 1e-12);
    }
}
