//! Experiment configuration: TOML ingestion, validation, and defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agent::{StateEncoding, TargetState};
use crate::marl::ObservationAggregation;
use crate::popularity::PopularityAggregation;
use crate::radio::{CoopDelayMode, PathlossMode, RadioParams};
use crate::topology::ConnectivitySpec;
use crate::{Error, Result};

/// Caching schemes the harness can run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Marl,
    Dqn,
    Iql,
    Lru,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scheme::Marl => "marl",
            Scheme::Dqn => "dqn",
            Scheme::Iql => "iql",
            Scheme::Lru => "lru",
        };
        f.write_str(name)
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "marl" => Ok(Scheme::Marl),
            "dqn" => Ok(Scheme::Dqn),
            "iql" => Ok(Scheme::Iql),
            "lru" => Ok(Scheme::Lru),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// When target networks copy the current weights.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    /// Every `nu` learning steps of an agent.
    Steps,
    /// Every `nu` time slots.
    Slots,
}

/// Full experiment parameterization. Every field has a default; unknown keys
/// are rejected at load time.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    // scenario
    pub n_faps: usize,
    pub users_per_fap: usize,
    pub library_size: usize,
    pub cache_capacity: usize,
    pub horizon: usize,
    pub cell_radius: f64,
    pub connectivity: ConnectivitySpec,
    pub consistent_preference: bool,

    // workload
    pub tau: f64,
    pub popularity_aggregation: PopularityAggregation,

    // learning
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Fraction of the horizon over which epsilon anneals linearly.
    pub epsilon_anneal_frac: f64,
    pub nu: usize,
    pub sync_mode: SyncMode,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub state_encoding: StateEncoding,
    /// Per-component gradient clip; 0 disables clipping.
    pub grad_clip: f64,
    pub target_state: TargetState,
    pub observation_aggregation: ObservationAggregation,
    /// Tabular step size for the IQL baseline (its own knob: table updates
    /// need a much larger rate than network SGD).
    pub iql_alpha: f64,
    pub iql_table_cap: usize,

    // radio
    pub bandwidth: f64,
    pub tx_power: f64,
    pub noise_psd: f64,
    pub interference_power: f64,
    pub pathloss_exponent: f64,
    pub pathloss_mode: PathlossMode,
    pub file_size: f64,
    pub backhaul_rate: f64,
    pub inter_fap_rate: f64,
    pub rate_floor: f64,
    pub coop_delay_mode: CoopDelayMode,

    // bookkeeping
    pub seed: u64,
    pub schemes: Vec<Scheme>,
    /// Emit one metrics row every this many slots.
    pub record_interval: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_faps: 5,
            users_per_fap: 10,
            library_size: 500,
            cache_capacity: 10,
            horizon: 5000,
            cell_radius: 100.0,
            connectivity: ConnectivitySpec::default(),
            consistent_preference: true,
            tau: 1.1,
            popularity_aggregation: PopularityAggregation::Mean,
            lambda: 1.0,
            gamma: 0.9,
            alpha: 0.001,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_anneal_frac: 0.5,
            nu: 100,
            sync_mode: SyncMode::Steps,
            replay_capacity: 10_000,
            batch_size: 32,
            hidden_sizes: vec![64, 64],
            state_encoding: StateEncoding::OneHot,
            grad_clip: 1.0,
            target_state: TargetState::Next,
            observation_aggregation: ObservationAggregation::Mean,
            iql_alpha: 0.1,
            iql_table_cap: 1_000_000,
            bandwidth: 1.0e8,
            tx_power: 1.0,
            noise_psd: 4.0e-21,
            interference_power: 1.0e-13,
            pathloss_exponent: 3.0,
            pathloss_mode: PathlossMode::Exponent,
            file_size: 1.0e6,
            backhaul_rate: 1.0e8,
            inter_fap_rate: 1.0e9,
            rate_floor: 1.0e3,
            coop_delay_mode: CoopDelayMode::Literal,
            seed: 1,
            schemes: vec![Scheme::Marl, Scheme::Dqn, Scheme::Iql, Scheme::Lru],
            record_interval: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_faps == 0 {
            return Err(Error::Config("n_faps must be at least 1".into()));
        }
        if self.users_per_fap == 0 {
            return Err(Error::Config(
                "users_per_fap must be at least 1 (requests drive the simulation)".into(),
            ));
        }
        if self.library_size == 0 {
            return Err(Error::Config("library_size must be at least 1".into()));
        }
        if self.cache_capacity == 0 || self.cache_capacity > self.library_size {
            return Err(Error::Config(format!(
                "cache_capacity must lie in 1..=library_size ({} vs {})",
                self.cache_capacity, self.library_size
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!(
                "lambda must lie in (0,1], got {}",
                self.lambda
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0,1), got {}",
                self.gamma
            )));
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        for (name, eps) in [
            ("epsilon_start", self.epsilon_start),
            ("epsilon_end", self.epsilon_end),
        ] {
            if !(0.0..=1.0).contains(&eps) {
                return Err(Error::Config(format!(
                    "{name} must lie in [0,1], got {eps}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_anneal_frac) {
            return Err(Error::Config(format!(
                "epsilon_anneal_frac must lie in [0,1], got {}",
                self.epsilon_anneal_frac
            )));
        }
        if self.nu == 0 {
            return Err(Error::Config("nu must be at least 1".into()));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(Error::Config(format!(
                "need batch_size >= 1 and replay_capacity >= batch_size ({} vs {})",
                self.batch_size, self.replay_capacity
            )));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.iter().any(|&h| h == 0) {
            return Err(Error::Config(
                "hidden_sizes must hold at least one nonzero width".into(),
            ));
        }
        if self.grad_clip < 0.0 {
            return Err(Error::Config(format!(
                "grad_clip must be nonnegative (0 disables), got {}",
                self.grad_clip
            )));
        }
        if !(self.cell_radius > 0.0) {
            return Err(Error::Config(format!(
                "cell_radius must be positive, got {}",
                self.cell_radius
            )));
        }
        if !(self.iql_alpha > 0.0 && self.iql_alpha <= 1.0) {
            return Err(Error::Config(format!(
                "iql_alpha must lie in (0,1], got {}",
                self.iql_alpha
            )));
        }
        if self.iql_table_cap == 0 {
            return Err(Error::Config("iql_table_cap must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("schemes must not be empty".into()));
        }
        if self.record_interval == 0 {
            return Err(Error::Config("record_interval must be at least 1".into()));
        }
        self.radio_params().validate()?;
        // connectivity overrides are validated against N during topology build
        crate::topology::build_topology(self.n_faps, self.cell_radius, &self.connectivity)?;
        Ok(())
    }

    pub fn radio_params(&self) -> RadioParams {
        RadioParams {
            bandwidth: self.bandwidth,
            tx_power: self.tx_power,
            noise_psd: self.noise_psd,
            interference_power: self.interference_power,
            pathloss_exponent: self.pathloss_exponent,
            file_size: self.file_size,
            backhaul_rate: self.backhaul_rate,
            inter_fap_rate: self.inter_fap_rate,
            rate_floor: self.rate_floor,
            pathloss_mode: self.pathloss_mode,
        }
    }

    pub fn grad_clip_option(&self) -> Option<f64> {
        if self.grad_clip > 0.0 {
            Some(self.grad_clip)
        } else {
            None
        }
    }

    /// Linear epsilon schedule: `epsilon_start` at slot 1, annealed to
    /// `epsilon_end` over the first `epsilon_anneal_frac` of the horizon.
    pub fn epsilon_at(&self, t: usize) -> f64 {
        let anneal_slots = self.epsilon_anneal_frac * self.horizon as f64;
        if anneal_slots <= 1.0 {
            return self.epsilon_end;
        }
        let progress = ((t.saturating_sub(1)) as f64 / anneal_slots).min(1.0);
        self.epsilon_start + (self.epsilon_end - self.epsilon_start) * progress
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses a config without validating it (the `validate` subcommand reports
/// invariant violations instead of refusing them).
pub fn parse_config_str(text: &str) -> Result<SimConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("config parse failed: {e}")))
}

/// Loads and validates a config file. An empty file yields the defaults.
pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let config = parse_config_str(&text)?;
    config.validate()?;
    Ok(config)
}
