//! Memoryless power amplifier models and their efficiency accounting.
//!
//! The nonlinear model is the Rapp AM/AM characteristic with no AM/PM:
//! a sample with amplitude `a` leaves the amplifier with amplitude
//! `sat_out * g(scale * a)` and unchanged phase, where
//! `g(z) = z / (1 + z^(2p))^(1/(2p))` saturates at one. The operating
//! point is set by a backoff in dB below the 1-dB compression point,
//! referenced to the RMS amplitude of the input ensemble, and the output
//! gain is calibrated so the ensemble-average radiated power across the
//! array equals the configured value. A linear reference amplifier with
//! the same radiated power is provided for distortion-free baselines.

use crate::error::{Error, Result};
use crate::stats::undb;
use crate::C64;

/// Normalized Rapp AM/AM curve, saturating at one.
fn soft_limit(z: f64, smoothness: f64) -> f64 {
    debug_assert!(z >= 0.0);
    let tp = 2.0 * smoothness;
    if z > 1.0 {
        // Algebraically identical branch that stays finite for huge z.
        (1.0 + z.powf(-tp)).powf(-1.0 / tp)
    } else {
        z / (1.0 + z.powf(tp)).powf(1.0 / tp)
    }
}

/// Input amplitude of the 1-dB compression point as a fraction of the
/// saturation input amplitude: the `z` at which the curve has dropped
/// 1 dB below linear gain.
pub fn compression_input_ratio(smoothness: f64) -> f64 {
    (10f64.powf(smoothness / 10.0) - 1.0).powf(1.0 / (2.0 * smoothness))
}

/// Rapp amplifier calibrated to an input ensemble and a backoff.
#[derive(Debug, Clone)]
pub struct RappAmplifier {
    smoothness: f64,
    /// Multiplies input amplitude to the normalized drive `z`.
    input_scale: f64,
    /// Output amplitude at saturation.
    sat_out: f64,
}

impl RappAmplifier {
    /// Calibrates an amplifier for one operating point.
    ///
    /// * `smoothness` - Rapp knee sharpness `p`.
    /// * `sat_in` - input amplitude that saturates the device.
    /// * `per_antenna_power` - target average output power per antenna.
    /// * `backoff_db` - drive reduction in dB; at zero the RMS input sits
    ///   exactly at the 1-dB compression point, negative values overdrive.
    /// * `amplitudes` - representative input amplitude ensemble, used both
    ///   to reference the RMS and to calibrate the output gain.
    pub fn calibrated(
        smoothness: f64,
        sat_in: f64,
        per_antenna_power: f64,
        backoff_db: f64,
        amplitudes: &[f64],
    ) -> Result<Self> {
        if smoothness <= 0.0 || sat_in <= 0.0 || per_antenna_power <= 0.0 {
            return Err(Error::Config(
                "amplifier smoothness, saturation input and power must be positive".into(),
            ));
        }
        let n = amplitudes.len();
        if n == 0 {
            return Err(Error::InsufficientSamples(
                "amplifier calibration needs input amplitudes".into(),
            ));
        }
        let ms: f64 = amplitudes.iter().map(|a| a * a).sum::<f64>() / n as f64;
        if ms <= 0.0 {
            return Err(Error::InsufficientSamples(
                "amplifier calibration input has zero power".into(),
            ));
        }
        let rms = ms.sqrt();
        let z_rms = compression_input_ratio(smoothness) * undb(-backoff_db / 2.0);
        let input_scale = z_rms / rms;
        // Output gain follows in closed form: the normalized drive does not
        // depend on it, so matching the radiated power needs no iteration.
        let mean_g2: f64 = amplitudes
            .iter()
            .map(|&a| soft_limit(input_scale * a, smoothness).powi(2))
            .sum::<f64>()
            / n as f64;
        if mean_g2 <= 0.0 {
            return Err(Error::InsufficientSamples(
                "amplifier calibration drive collapsed to zero".into(),
            ));
        }
        let sat_out = (per_antenna_power / mean_g2).sqrt();
        Ok(Self { smoothness, input_scale, sat_out })
    }

    /// Output amplitude for one input amplitude.
    pub fn am_am(&self, amplitude: f64) -> f64 {
        self.sat_out * soft_limit(self.input_scale * amplitude, self.smoothness)
    }

    /// Saturated output amplitude.
    pub fn saturation_output(&self) -> f64 {
        self.sat_out
    }

    /// Amplifies one complex stream sample by sample.
    pub fn amplify(&self, input: &[C64]) -> Vec<C64> {
        input
            .iter()
            .map(|&u| {
                let a = u.norm();
                if a == 0.0 {
                    C64::ZERO
                } else {
                    u * (self.am_am(a) / a)
                }
            })
            .collect()
    }

    /// Class-B drain efficiency over an input amplitude ensemble:
    /// radiated power divided by supplied power, at most pi/4.
    pub fn efficiency(&self, amplitudes: &[f64]) -> Result<f64> {
        if amplitudes.is_empty() {
            return Err(Error::InsufficientSamples(
                "efficiency needs input amplitudes".into(),
            ));
        }
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        for &a in amplitudes {
            let g = soft_limit(self.input_scale * a, self.smoothness);
            g1 += g;
            g2 += g * g;
        }
        if g1 <= 0.0 {
            return Err(Error::InsufficientSamples(
                "efficiency undefined for an all-zero drive".into(),
            ));
        }
        Ok(std::f64::consts::FRAC_PI_4 * g2 / g1)
    }

    /// Supplied (consumed) power per antenna for an input ensemble under
    /// the class-B model: `(4/pi) * sat_out * E|x|`.
    pub fn consumed_power(&self, amplitudes: &[f64]) -> Result<f64> {
        if amplitudes.is_empty() {
            return Err(Error::InsufficientSamples(
                "consumed power needs input amplitudes".into(),
            ));
        }
        let mean_out: f64 =
            amplitudes.iter().map(|&a| self.am_am(a)).sum::<f64>() / amplitudes.len() as f64;
        Ok(4.0 / std::f64::consts::PI * self.sat_out * mean_out)
    }
}

/// Amplifier model applied per antenna.
#[derive(Debug, Clone)]
pub enum Amplifier {
    /// Nonlinear Rapp device.
    Rapp(RappAmplifier),
    /// Distortion-free reference: output is `gain * input`.
    Linear {
        /// Amplitude gain.
        gain: f64,
    },
}

impl Amplifier {
    /// Amplifies one complex stream.
    pub fn amplify(&self, input: &[C64]) -> Vec<C64> {
        match self {
            Amplifier::Rapp(r) => r.amplify(input),
            Amplifier::Linear { gain } => {
                input.iter().map(|&u| u * *gain).collect()
            }
        }
    }
}
