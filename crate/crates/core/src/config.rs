//! Run configuration: link dimensions, pulse and amplifier settings, and
//! sweep controls. Configs load from a TOML file whose keys mirror the
//! field names below; see `configs/schema.toml` in the repository root.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How channel state information is obtained at the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    /// Transmitter knows the channel exactly.
    Perfect,
    /// Linear minimum-mean-square estimate from uplink pilots.
    Pilot,
}

/// How large-scale path losses are assigned to users.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathlossMode {
    /// All users at unit path loss (cell-edge-normalized, equal distances).
    Equal,
    /// Users dropped uniformly by area on an annulus around the array.
    Annulus,
}

/// Symbol alphabet used for the data streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Constellation {
    /// Proper complex Gaussian symbols (capacity-achieving reference).
    Gaussian,
    /// Quadrature phase-shift keying.
    Qpsk,
    /// 16-point quadrature amplitude modulation.
    Qam16,
}

/// Physical-layer and cell geometry parameters of one simulated link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Number of base-station antennas.
    pub antennas: usize,
    /// Number of single-antenna users served simultaneously.
    pub users: usize,
    /// Number of symbol-spaced channel taps.
    pub taps: usize,
    /// Symbols per transmission block.
    pub block_len: usize,
    /// Oversampling factor of the waveform-level simulation.
    pub oversampling: usize,
    /// Symbol period in seconds (normalized to 1 by default).
    pub symbol_period: f64,
    /// Roll-off of the root-raised-cosine pulse.
    pub rolloff: f64,
    /// One-sided pulse truncation in symbol periods.
    pub pulse_half_span: usize,
    /// Total radiated power target across the array.
    pub radiated_power: f64,
    /// Thermal noise variance per received symbol-rate sample.
    pub noise_variance: f64,
    /// Path-loss exponent for the annulus drop model.
    pub pathloss_exponent: f64,
    /// Inner radius of the user annulus (same length unit as outer).
    pub inner_radius: f64,
    /// Outer radius of the user annulus.
    pub outer_radius: f64,
    /// Uplink pilot sequence length in symbols.
    pub pilot_len: usize,
    /// Pilot transmit power over the receiver noise variance (linear ratio).
    pub pilot_power_ratio: f64,
    /// Channel knowledge available to the precoder.
    pub csi: CsiMode,
    /// Large-scale fading model.
    pub pathloss: PathlossMode,
    /// Data symbol alphabet.
    pub constellation: Constellation,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            antennas: 32,
            users: 4,
            taps: 4,
            block_len: 64,
            oversampling: 7,
            symbol_period: 1.0,
            rolloff: 0.22,
            pulse_half_span: 16,
            radiated_power: 1.0,
            noise_variance: 1e-2,
            pathloss_exponent: 3.8,
            inner_radius: 1.0,
            outer_radius: 100.0,
            pilot_len: 16,
            pilot_power_ratio: 1e2,
            csi: CsiMode::Perfect,
            pathloss: PathlossMode::Equal,
            constellation: Constellation::Gaussian,
        }
    }
}

impl SimulationConfig {
    /// Two-sided occupied bandwidth of the pulse-shaped signal in Hz.
    pub fn bandwidth(&self) -> f64 {
        (1.0 + self.rolloff) / self.symbol_period
    }

    /// Samples per block at the oversampled rate.
    pub fn oversampled_len(&self) -> usize {
        self.block_len * self.oversampling
    }

    /// Sample rate of the oversampled simulation in Hz.
    pub fn sample_rate(&self) -> f64 {
        self.oversampling as f64 / self.symbol_period
    }

    /// Checks mutual consistency of all fields.
    pub fn validate(&self) -> Result<()> {
        if self.antennas == 0 || self.users == 0 {
            return Err(Error::Config("antennas and users must be positive".into()));
        }
        if self.users > self.antennas {
            return Err(Error::Config(format!(
                "users ({}) must not exceed antennas ({})",
                self.users, self.antennas
            )));
        }
        if self.taps == 0 {
            return Err(Error::Config("taps must be positive".into()));
        }
        if self.block_len <= self.taps {
            return Err(Error::Config(format!(
                "block_len ({}) must exceed taps ({})",
                self.block_len, self.taps
            )));
        }
        if self.oversampling == 0 {
            return Err(Error::Config("oversampling must be positive".into()));
        }
        if !(self.symbol_period > 0.0) {
            return Err(Error::Config("symbol_period must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.rolloff) {
            return Err(Error::Config("rolloff must lie in [0, 1]".into()));
        }
        if self.pulse_half_span == 0 {
            return Err(Error::Config("pulse_half_span must be positive".into()));
        }
        if !(self.radiated_power > 0.0) {
            return Err(Error::Config("radiated_power must be positive".into()));
        }
        if !(self.noise_variance > 0.0) {
            return Err(Error::Config("noise_variance must be positive".into()));
        }
        if self.csi == CsiMode::Pilot {
            if self.pilot_len < self.users * self.taps {
                return Err(Error::Config(format!(
                    "pilot_len ({}) must be at least users*taps ({})",
                    self.pilot_len,
                    self.users * self.taps
                )));
            }
            if !(self.pilot_power_ratio > 0.0) {
                return Err(Error::Config("pilot_power_ratio must be positive".into()));
            }
        }
        if self.pathloss == PathlossMode::Annulus {
            if !(self.inner_radius > 0.0) || self.outer_radius <= self.inner_radius {
                return Err(Error::Config(
                    "annulus radii must satisfy 0 < inner < outer".into(),
                ));
            }
            if !(self.pathloss_exponent > 0.0) {
                return Err(Error::Config("pathloss_exponent must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Controls for multi-point experiments: which precoders to run, the
/// amplifier operating points, trial counts, and search grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Precoding schemes included in the sweep.
    pub schemes: Vec<String>,
    /// Block transmission style: "sc" or "ofdm".
    pub transmission: String,
    /// Amplifier backoff grid in dB relative to the 1-dB compression point.
    pub backoff_grid_db: Vec<f64>,
    /// Monte Carlo trials per operating point (minimum 30).
    pub trials: usize,
    /// Realizations used to calibrate precoder and amplifier scale factors.
    pub calibration_trials: usize,
    /// Independent user drops when `pathloss = "annulus"`.
    pub drops: usize,
    /// Adjacent-channel leakage mask in dB (upper bound on ACLR).
    pub aclr_limit_db: f64,
    /// Lowest amplifier efficiency included in the rate-power search.
    pub eta_floor: f64,
    /// Points on the efficiency grid of the rate-power search.
    pub eta_points: usize,
    /// Points on the per-scheme tuning-parameter grid (regularization or
    /// constant-envelope target gain).
    pub theta_points: usize,
    /// Consumed-power grid in dB over the noise variance.
    pub pcons_grid_db: Vec<f64>,
    /// Rapp smoothness parameter of the amplifier model.
    pub amplifier_smoothness: f64,
    /// Thresholds (dB) for peak-to-average-ratio CCDF curves.
    pub par_thresholds_db: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schemes: vec!["mr".into(), "zf".into(), "rzf".into(), "dtce".into()],
            transmission: "sc".into(),
            backoff_grid_db: vec![0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0],
            trials: 200,
            calibration_trials: 200,
            drops: 20,
            aclr_limit_db: -45.0,
            eta_floor: 0.05,
            eta_points: 15,
            theta_points: 25,
            pcons_grid_db: (0..=9).map(|i| 5.0 * i as f64).collect(),
            amplifier_smoothness: 2.0,
            par_thresholds_db: (0..=48).map(|i| 0.25 * i as f64).collect(),
        }
    }
}

impl SweepConfig {
    /// Checks sweep controls for internal consistency.
    pub fn validate(&self) -> Result<()> {
        if self.schemes.is_empty() {
            return Err(Error::Config("at least one scheme required".into()));
        }
        for s in &self.schemes {
            if !matches!(s.as_str(), "mr" | "zf" | "rzf" | "dtce") {
                return Err(Error::Config(format!("unknown scheme '{s}'")));
            }
        }
        if !matches!(self.transmission.as_str(), "sc" | "ofdm") {
            return Err(Error::Config(format!(
                "unknown transmission '{}'",
                self.transmission
            )));
        }
        if self.trials < 30 {
            return Err(Error::Config(
                "trials must be at least 30 so aggregates carry meaningful errors".into(),
            ));
        }
        if self.calibration_trials == 0 {
            return Err(Error::Config("calibration_trials must be positive".into()));
        }
        if self.backoff_grid_db.is_empty() {
            return Err(Error::Config("backoff_grid_db must be non-empty".into()));
        }
        if !(0.0 < self.eta_floor && self.eta_floor < 1.0) {
            return Err(Error::Config("eta_floor must lie in (0, 1)".into()));
        }
        if self.eta_points < 2 || self.theta_points == 0 {
            return Err(Error::Config("grid sizes too small".into()));
        }
        if !(self.amplifier_smoothness > 0.0) {
            return Err(Error::Config("amplifier_smoothness must be positive".into()));
        }
        Ok(())
    }
}

/// Top-level config file: `[sim]` and `[sweep]` tables.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimulationConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// Parses a TOML string.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.sim.validate()?;
        cfg.sweep.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a TOML config file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Content hash of the canonical serialized form, for run manifests.
    pub fn content_hash(&self) -> String {
        let canon = toml::to_string(self).unwrap_or_default();
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        hex_string(&h.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
