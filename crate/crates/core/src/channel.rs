//! Frequency-selective downlink channel: oversampled Rayleigh taps, the
//! symbol-rate equivalent channel after pulse shaping and matched
//! filtering, uplink-pilot LMMSE estimation, and annulus path loss.
//!
//! Two tap representations coexist. The oversampled taps drive the
//! waveform-level propagation of amplifier distortion; the symbol-rate
//! taps drive precoding and the linear part of the received signal. The
//! symbol-rate taps are obtained by filtering the oversampled taps through
//! the sampled pulse autocorrelation and then applying a fixed linear
//! correction that makes their joint statistics exactly white: each of the
//! `taps` delay bins is CN(0, 1/taps), uncorrelated across delay, so the
//! ensemble tap energy is exactly one.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;

use crate::config::{CsiMode, PathlossMode, SimulationConfig};
use crate::error::{Error, Result};
use crate::stats::draw_cn;
use crate::waveform::{dft, pulse_autocorrelation, rrc_pulse};
use crate::C64;

/// Large-scale fading of one user drop.
#[derive(Debug, Clone)]
pub struct Pathloss {
    /// Distance of each user from the array.
    pub distances: Vec<f64>,
    /// Path-loss gain of each user (1 at the inner radius).
    pub gains: Vec<f64>,
}

/// One small-scale fading realization for all user/antenna pairs.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Taps at the oversampled delay spacing: entry `i` is the K-by-M
    /// gain matrix at delay `i*T/kappa`.
    pub oversampled: Vec<DMatrix<C64>>,
    /// Symbol-rate equivalent taps: entry `l` is the K-by-M gain matrix
    /// at delay `l*T`.
    pub symbol: Vec<DMatrix<C64>>,
}

/// LMMSE channel estimate and its error, both at symbol-rate delays.
#[derive(Debug, Clone)]
pub struct ChannelEstimate {
    /// Estimated symbol-rate taps.
    pub est: Vec<DMatrix<C64>>,
    /// Estimation error taps; `est + err` reproduces the true taps.
    pub err: Vec<DMatrix<C64>>,
    /// Per-user estimate energy: sum of per-tap estimate variances.
    pub quality: Vec<f64>,
    /// Per-user error energy; `quality + err_energy == 1` per user.
    pub err_energy: Vec<f64>,
}

/// Precomputed linear map from oversampled to symbol-rate taps.
///
/// Row `l` of `shape` gives the weights applied to the oversampled tap
/// vector to produce symbol-rate tap `l`.
pub struct ChannelShaper {
    antennas: usize,
    users: usize,
    taps: usize,
    oversampled_taps: usize,
    oversampling: usize,
    shape: DMatrix<f64>,
}

impl ChannelShaper {
    /// Builds the tap-shaping map for one configuration.
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let kappa = cfg.oversampling;
        let l = cfg.taps;
        let lov = kappa * (l - 1) + 1;
        let pulse = rrc_pulse(
            cfg.rolloff,
            kappa,
            cfg.pulse_half_span,
            cfg.symbol_period,
        )?;
        let delta = cfg.symbol_period / kappa as f64;
        let acf = pulse_autocorrelation(&pulse, delta);
        let zero = pulse.len() as i64 - 1;
        // a[j] = T * r(j*T/kappa); unity at lag zero for a root-Nyquist pulse.
        let a_at = |j: i64| -> f64 {
            let idx = zero + j;
            if idx < 0 || idx >= acf.len() as i64 {
                0.0
            } else {
                cfg.symbol_period * acf[idx as usize]
            }
        };
        let mut a = DMatrix::zeros(l, lov);
        for row in 0..l {
            for i in 0..lov {
                a[(row, i)] = a_at((row * kappa) as i64 - i as i64);
            }
        }
        // Raw covariance of the filtered taps, then its inverse square root
        // scaled so each output tap has variance exactly 1/taps.
        let cov = &a * a.transpose() / (kappa * l) as f64;
        let eig = nalgebra::linalg::SymmetricEigen::new(cov.clone());
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        if eig.eigenvalues.iter().any(|&e| e <= 1e-12 * max_ev) {
            return Err(Error::Singular(
                "tap covariance is numerically rank-deficient".into(),
            ));
        }
        let inv_sqrt_ev = DVector::from_iterator(
            l,
            eig.eigenvalues.iter().map(|&e| 1.0 / e.sqrt()),
        );
        let q = eig.eigenvectors;
        let cov_inv_sqrt = &q * DMatrix::from_diagonal(&inv_sqrt_ev) * q.transpose();
        let shape = cov_inv_sqrt * a / (l as f64).sqrt();
        Ok(Self {
            antennas: cfg.antennas,
            users: cfg.users,
            taps: l,
            oversampled_taps: lov,
            oversampling: kappa,
            shape,
        })
    }

    /// Number of oversampled delay bins.
    pub fn oversampled_taps(&self) -> usize {
        self.oversampled_taps
    }

    /// Draws one fading realization: i.i.d. CN(0, 1/(kappa*taps))
    /// oversampled gains, with the symbol-rate taps derived through the
    /// shaping map.
    pub fn draw(&self, rng: &mut ChaCha8Rng) -> ChannelRealization {
        let (k, m) = (self.users, self.antennas);
        let var = 1.0 / (self.oversampling * self.taps) as f64;
        let mut oversampled = Vec::with_capacity(self.oversampled_taps);
        for _ in 0..self.oversampled_taps {
            let mut mat = DMatrix::zeros(k, m);
            for col in 0..m {
                for row in 0..k {
                    mat[(row, col)] = draw_cn(rng, var);
                }
            }
            oversampled.push(mat);
        }
        let mut symbol = Vec::with_capacity(self.taps);
        for l in 0..self.taps {
            let mut mat = DMatrix::zeros(k, m);
            for (i, ov) in oversampled.iter().enumerate() {
                let w = self.shape[(l, i)];
                if w != 0.0 {
                    mat += ov * C64::new(w, 0.0);
                }
            }
            symbol.push(mat);
        }
        ChannelRealization { oversampled, symbol }
    }
}

/// Draws one fading realization for the given configuration. Hot loops
/// should build a [`ChannelShaper`] once and call [`ChannelShaper::draw`].
pub fn draw_channel(cfg: &SimulationConfig, rng: &mut ChaCha8Rng) -> Result<ChannelRealization> {
    Ok(ChannelShaper::new(cfg)?.draw(rng))
}

/// Draws the large-scale fading of one user drop. Distances are uniform
/// by area on the annulus; gains are `(inner_radius / d)^alpha`, so a user
/// at the inner radius has unit gain. In `Equal` mode every user sits at
/// the inner radius.
pub fn draw_pathloss(cfg: &SimulationConfig, rng: &mut ChaCha8Rng) -> Pathloss {
    match cfg.pathloss {
        PathlossMode::Equal => Pathloss {
            distances: vec![cfg.inner_radius; cfg.users],
            gains: vec![1.0; cfg.users],
        },
        PathlossMode::Annulus => {
            let r2 = cfg.inner_radius * cfg.inner_radius;
            let out2 = cfg.outer_radius * cfg.outer_radius;
            let mut distances = Vec::with_capacity(cfg.users);
            let mut gains = Vec::with_capacity(cfg.users);
            for _ in 0..cfg.users {
                let u: f64 = rand::Rng::gen_range(rng, 0.0..1.0);
                let d = (r2 + u * (out2 - r2)).sqrt();
                distances.push(d);
                gains.push((cfg.inner_radius / d).powf(cfg.pathloss_exponent));
            }
            Pathloss { distances, gains }
        }
    }
}

/// Produces the LMMSE channel estimate for the configured CSI mode.
///
/// In pilot mode the estimate of each user's taps is synthesized as
/// `est = c*(h + w)` with `w` i.i.d. CN(0, 1/(pilot_snr*taps)) and
/// `c = pilot_snr/(1 + pilot_snr)`, where `pilot_snr = pilot_len *
/// pilot_power_ratio * gain`. This reproduces the LMMSE per-tap variances
/// and the orthogonality between estimate and error.
pub fn estimate_channel(
    cfg: &SimulationConfig,
    chan: &ChannelRealization,
    pathloss: &Pathloss,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelEstimate> {
    let (k, m) = (cfg.users, cfg.antennas);
    if chan.symbol.len() != cfg.taps || pathloss.gains.len() != k {
        return Err(Error::Dimension(
            "estimate_channel: realization does not match config".into(),
        ));
    }
    match cfg.csi {
        CsiMode::Perfect => Ok(ChannelEstimate {
            est: chan.symbol.clone(),
            err: vec![DMatrix::zeros(k, m); cfg.taps],
            quality: vec![1.0; k],
            err_energy: vec![0.0; k],
        }),
        CsiMode::Pilot => {
            if cfg.pilot_len < cfg.users * cfg.taps {
                return Err(Error::Config(format!(
                    "pilot_len ({}) shorter than users*taps ({})",
                    cfg.pilot_len,
                    cfg.users * cfg.taps
                )));
            }
            let mut est = vec![DMatrix::zeros(k, m); cfg.taps];
            let mut err = vec![DMatrix::zeros(k, m); cfg.taps];
            let mut quality = Vec::with_capacity(k);
            let mut err_energy = Vec::with_capacity(k);
            for user in 0..k {
                let snr = cfg.pilot_len as f64 * cfg.pilot_power_ratio * pathloss.gains[user];
                let c = snr / (1.0 + snr);
                let wvar = 1.0 / (snr * cfg.taps as f64);
                for l in 0..cfg.taps {
                    for col in 0..m {
                        let h = chan.symbol[l][(user, col)];
                        let e = c * (h + draw_cn(rng, wvar));
                        est[l][(user, col)] = e;
                        err[l][(user, col)] = h - e;
                    }
                }
                quality.push(c);
                err_energy.push(1.0 - c);
            }
            Ok(ChannelEstimate { est, err, quality, err_energy })
        }
    }
}

/// Per-tone transfer matrices: `H[v] = sum_l exp(-j 2 pi l v / n) taps[l]`.
pub fn channel_dft(taps: &[DMatrix<C64>], n_tones: usize) -> Result<Vec<DMatrix<C64>>> {
    let first = taps
        .first()
        .ok_or_else(|| Error::Dimension("channel_dft: no taps".into()))?;
    let (rows, cols) = first.shape();
    if taps.len() > n_tones {
        return Err(Error::Dimension(format!(
            "channel_dft: {} taps exceed {} tones",
            taps.len(),
            n_tones
        )));
    }
    let mut out = vec![DMatrix::zeros(rows, cols); n_tones];
    let mut buf = vec![C64::ZERO; n_tones];
    for col in 0..cols {
        for row in 0..rows {
            for (l, b) in buf.iter_mut().enumerate() {
                *b = if l < taps.len() { taps[l][(row, col)] } else { C64::ZERO };
            }
            let spec = dft(&buf);
            for (v, s) in spec.into_iter().enumerate() {
                out[v][(row, col)] = s;
            }
        }
    }
    Ok(out)
}
