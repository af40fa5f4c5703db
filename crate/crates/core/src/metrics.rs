//! Link-quality metrics: the received-signal decomposition into array
//! gain, interference, channel-error leakage, and amplifier distortion;
//! the SINR and achievable-rate bounds built from it; and spectral
//! measures (Welch power spectral density, adjacent-channel leakage).
//!
//! The decomposition works on four per-user streams produced by the
//! simulation chain, all normalized so the received sample is
//! `sqrt(P*beta) * (r + e + d) + noise`:
//!
//! * `s` - transmitted symbols with power `xi` per user,
//! * `r` - the linear signal through the channel estimate,
//! * `e` - the linear signal through the estimation-error channel,
//! * `d` - the received distortion: amplified minus linear branch.
//!
//! From their ensemble moments it estimates the deterministic gain `g`
//! (normalized by the root of the estimate quality so it is insensitive
//! to estimation error), the clipping correlation `c`, the interference
//! variance `I` of `r - g*sqrt(delta)*s`, the error leakage `E`, the
//! correlation `rho` between distortion and interference-plus-error, and
//! the residual distortion variance `D`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats::db;
use crate::waveform::run_fft;
use crate::C64;

/// Raw per-trial, per-user moments, each averaged over the block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMoments {
    /// Mean `|s|^2`.
    pub ss: f64,
    /// Mean `conj(s) * r`.
    pub sr: C64,
    /// Mean `|r|^2`.
    pub rr: f64,
    /// Mean `conj(s) * d`.
    pub sd: C64,
    /// Mean `conj(r) * d`.
    pub rd: C64,
    /// Mean `conj(e) * d`.
    pub ed: C64,
    /// Mean `|e|^2`.
    pub ee: f64,
    /// Mean `|d|^2`.
    pub dd: f64,
}

/// Streaming accumulator of decomposition moments across trials.
///
/// Trials are stored individually, keyed by their index, so shards run in
/// any order or partition merge to identical aggregates: `finish` sums in
/// trial-index order regardless of insertion order.
#[derive(Debug, Clone, Default)]
pub struct DecompAccumulator {
    users: usize,
    rows: Vec<(u64, Vec<TrialMoments>)>,
}

impl DecompAccumulator {
    /// Creates an accumulator for a fixed number of users.
    pub fn new(users: usize) -> Self {
        Self { users, rows: Vec::new() }
    }

    /// Number of recorded trials.
    pub fn trials(&self) -> usize {
        self.rows.len()
    }

    /// Records one trial's per-user moments under a unique trial index.
    pub fn record_trial(&mut self, trial: u64, moments: Vec<TrialMoments>) -> Result<()> {
        if moments.len() != self.users {
            return Err(Error::Dimension(format!(
                "trial carries {} users, accumulator expects {}",
                moments.len(),
                self.users
            )));
        }
        self.rows.push((trial, moments));
        Ok(())
    }

    /// Computes the moments of one trial from its four per-user streams
    /// (users-by-block matrices) and records them.
    pub fn record_signals(
        &mut self,
        trial: u64,
        symbols: &DMatrix<C64>,
        through_est: &DMatrix<C64>,
        through_err: &DMatrix<C64>,
        distortion: &DMatrix<C64>,
    ) -> Result<()> {
        let shape = symbols.shape();
        if through_est.shape() != shape
            || through_err.shape() != shape
            || distortion.shape() != shape
        {
            return Err(Error::Dimension(
                "decomposition streams must share one shape".into(),
            ));
        }
        if shape.0 != self.users {
            return Err(Error::Dimension(format!(
                "streams carry {} users, accumulator expects {}",
                shape.0, self.users
            )));
        }
        let n = shape.1;
        if n == 0 {
            return Err(Error::InsufficientSamples("empty block".into()));
        }
        let inv = 1.0 / n as f64;
        let mut moments = Vec::with_capacity(self.users);
        for k in 0..self.users {
            let mut m = TrialMoments {
                ss: 0.0,
                sr: C64::ZERO,
                rr: 0.0,
                sd: C64::ZERO,
                rd: C64::ZERO,
                ed: C64::ZERO,
                ee: 0.0,
                dd: 0.0,
            };
            for i in 0..n {
                let s = symbols[(k, i)];
                let r = through_est[(k, i)];
                let e = through_err[(k, i)];
                let d = distortion[(k, i)];
                m.ss += s.norm_sqr();
                m.sr += s.conj() * r;
                m.rr += r.norm_sqr();
                m.sd += s.conj() * d;
                m.rd += r.conj() * d;
                m.ed += e.conj() * d;
                m.ee += e.norm_sqr();
                m.dd += d.norm_sqr();
            }
            m.ss *= inv;
            m.sr *= inv;
            m.rr *= inv;
            m.sd *= inv;
            m.rd *= inv;
            m.ed *= inv;
            m.ee *= inv;
            m.dd *= inv;
            moments.push(m);
        }
        self.record_trial(trial, moments)
    }

    /// Absorbs another shard. Aggregation is order-independent: `finish`
    /// sorts by trial index before summing.
    pub fn merge(&mut self, other: DecompAccumulator) -> Result<()> {
        if other.users != self.users {
            return Err(Error::Dimension(format!(
                "cannot merge accumulators for {} and {} users",
                other.users, self.users
            )));
        }
        self.rows.extend(other.rows);
        Ok(())
    }

    /// Produces the per-user decomposition given each user's symbol power
    /// and channel-estimate quality.
    pub fn finish(&self, xi: &[f64], delta: &[f64]) -> Result<Vec<DistortionDecomposition>> {
        if xi.len() != self.users || delta.len() != self.users {
            return Err(Error::Dimension(
                "xi/delta length must match the user count".into(),
            ));
        }
        let n = self.rows.len();
        if n < 2 {
            return Err(Error::InsufficientSamples(format!(
                "decomposition needs at least 2 trials, got {n}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| self.rows[i].0);
        let mut out = Vec::with_capacity(self.users);
        for k in 0..self.users {
            let sd = delta[k].sqrt();
            let scale = sd * xi[k];
            if scale <= 0.0 {
                return Err(Error::Config(format!(
                    "user {k}: xi and delta must be positive to decompose"
                )));
            }
            let mut sum = TrialMoments {
                ss: 0.0,
                sr: C64::ZERO,
                rr: 0.0,
                sd: C64::ZERO,
                rd: C64::ZERO,
                ed: C64::ZERO,
                ee: 0.0,
                dd: 0.0,
            };
            for &i in &order {
                let m = &self.rows[i].1[k];
                sum.ss += m.ss;
                sum.sr += m.sr;
                sum.rr += m.rr;
                sum.sd += m.sd;
                sum.rd += m.rd;
                sum.ed += m.ed;
                sum.ee += m.ee;
                sum.dd += m.dd;
            }
            let inv = 1.0 / n as f64;
            let (ss, sr, rr) = (sum.ss * inv, sum.sr * inv, sum.rr * inv);
            let (msd, mrd, med) = (sum.sd * inv, sum.rd * inv, sum.ed * inv);
            let (mee, mdd) = (sum.ee * inv, sum.dd * inv);
            let gain = sr / scale;
            // Per-trial gain dispersion for the standard error gate.
            let mut disp = 0.0;
            for &i in &order {
                let gi = self.rows[i].1[k].sr / scale;
                disp += (gi - gain).norm_sqr();
            }
            let g_se = (disp / ((n - 1) as f64 * n as f64)).sqrt();
            if gain.norm() == 0.0 || g_se / gain.norm() > 0.01 {
                return Err(Error::InsufficientSamples(format!(
                    "user {k}: relative standard error of the gain is {:.3}%, above 1%",
                    100.0 * g_se / gain.norm().max(f64::MIN_POSITIVE)
                )));
            }
            let clip = msd / scale;
            let interference = (rr - gain.norm_sqr() * delta[k] * xi[k]).max(0.0);
            let denom = interference + mee;
            let rho = if denom > 1e-300 {
                (mrd - gain.conj() * sd * msd + med) / denom
            } else {
                C64::ZERO
            };
            let distortion =
                (mdd - clip.norm_sqr() * delta[k] * xi[k] - rho.norm_sqr() * denom).max(0.0);
            out.push(DistortionDecomposition {
                gain,
                clip,
                rho,
                interference,
                err_leakage: 1.0 - delta[k],
                err_leakage_measured: mee,
                distortion,
                gain_rel_se: g_se / gain.norm(),
                symbol_power: ss,
            });
        }
        Ok(out)
    }
}

/// Ensemble decomposition of one user's received signal.
#[derive(Debug, Clone)]
pub struct DistortionDecomposition {
    /// Array gain `g`, normalized to be insensitive to estimate quality.
    pub gain: C64,
    /// Clipping correlation `c`: distortion coherent with the symbol.
    pub clip: C64,
    /// Correlation of distortion with interference-plus-error.
    pub rho: C64,
    /// Interference variance `I` (through the channel estimate).
    pub interference: f64,
    /// Channel-error leakage `E` from the closed form `1 - delta`.
    pub err_leakage: f64,
    /// Empirically measured error leakage, for cross-checking.
    pub err_leakage_measured: f64,
    /// Residual distortion variance `D` (uncorrelated part).
    pub distortion: f64,
    /// Relative standard error of the gain estimate.
    pub gain_rel_se: f64,
    /// Measured symbol power (diagnostic; should match the configured xi).
    pub symbol_power: f64,
}

impl DistortionDecomposition {
    /// In-band distortion variance relative to the received signal power:
    /// `D / (xi * |g|^2)`.
    pub fn sigma2(&self, xi: f64) -> f64 {
        self.distortion / (xi * self.gain.norm_sqr())
    }

    /// Clipping power ratio `|g + c|^2 / |g|^2` in dB; negative when the
    /// amplifier clips amplitude away.
    pub fn clip_power_db(&self) -> f64 {
        db((self.gain + self.clip).norm_sqr() / self.gain.norm_sqr())
    }
}

/// Signal-to-interference-and-noise ratio of one user:
/// `delta*xi*P*beta*|g+c|^2` over
/// `P*beta*((I+E)*|1+rho|^2 + D) + noise_over_period`.
pub fn sinr(
    dec: &DistortionDecomposition,
    power: f64,
    beta: f64,
    xi: f64,
    delta: f64,
    noise_over_period: f64,
) -> f64 {
    let num = delta * xi * power * beta * (dec.gain + dec.clip).norm_sqr();
    let den = power
        * beta
        * ((dec.interference + dec.err_leakage) * (C64::ONE + dec.rho).norm_sqr()
            + dec.distortion)
        + noise_over_period;
    num / den
}

/// Achievable rate per user in bits per channel use.
pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Per-user rates and their sum.
pub fn rates(sinrs: &[f64]) -> (Vec<f64>, f64) {
    let per: Vec<f64> = sinrs.iter().map(|&s| rate(s)).collect();
    let sum = per.iter().sum();
    (per, sum)
}

/// Full link metrics of one user at one operating point.
#[derive(Debug, Clone)]
pub struct LinkMetrics {
    /// Signal-to-interference-and-noise ratio.
    pub sinr: f64,
    /// Achievable rate, bits per channel use.
    pub rate: f64,
    /// Relative in-band distortion variance `D/(xi*|g|^2)`.
    pub sigma2: f64,
    /// Clipping power ratio in dB.
    pub clip_db: f64,
}

/// Evaluates SINR, rate, relative distortion, and clipping loss.
pub fn link_metrics(
    dec: &DistortionDecomposition,
    power: f64,
    beta: f64,
    xi: f64,
    delta: f64,
    noise_over_period: f64,
) -> LinkMetrics {
    let s = sinr(dec, power, beta, xi, delta, noise_over_period);
    LinkMetrics {
        sinr: s,
        rate: rate(s),
        sigma2: dec.sigma2(xi),
        clip_db: dec.clip_power_db(),
    }
}

/// Power spectral density on a regular frequency grid.
#[derive(Debug, Clone)]
pub struct Psd {
    /// Bin center frequencies, ascending, in cycles per unit time.
    pub freqs: Vec<f64>,
    /// Power density per unit frequency at each bin.
    pub density: Vec<f64>,
    /// Bin spacing.
    pub df: f64,
}

impl Psd {
    /// Total power in a frequency band (bins whose centers fall inside).
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(self.density.iter())
            .filter(|(f, _)| **f >= lo && **f < hi)
            .map(|(_, d)| d * self.df)
            .sum()
    }
}

/// Smallest segment length resolving `bandwidth / 100`, or an error when
/// the stream is too short to support that resolution.
pub fn required_segment_len(
    stream_len: usize,
    sample_rate: f64,
    bandwidth: f64,
) -> Result<usize> {
    let needed = (100.0 * sample_rate / bandwidth).ceil() as usize;
    if stream_len < needed {
        return Err(Error::InsufficientSamples(format!(
            "stream of {stream_len} samples cannot resolve bandwidth/100; need {needed}"
        )));
    }
    Ok(stream_len)
}

/// Welch power spectral density: Hann-windowed segments with 50% overlap,
/// averaged over segments and streams. Streams are treated as one period
/// of a cyclic signal, so segments wrap around the end.
pub fn welch_psd(streams: &[Vec<C64>], sample_rate: f64, seg_len: usize) -> Result<Psd> {
    if streams.is_empty() {
        return Err(Error::InsufficientSamples("no streams for the density".into()));
    }
    if seg_len < 2 {
        return Err(Error::Config("segment length must be at least 2".into()));
    }
    let len = streams[0].len();
    if len < seg_len {
        return Err(Error::InsufficientSamples(format!(
            "stream of {len} samples shorter than segment {seg_len}"
        )));
    }
    let window: Vec<f64> = (0..seg_len)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / seg_len as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let hop = seg_len / 2;
    let mut acc = vec![0.0; seg_len];
    let mut count = 0usize;
    let mut buf = vec![C64::ZERO; seg_len];
    for stream in streams {
        if stream.len() != len {
            return Err(Error::Dimension("streams must share one length".into()));
        }
        let segments = (len + hop - 1) / hop;
        for seg in 0..segments {
            let start = seg * hop;
            for i in 0..seg_len {
                buf[i] = stream[(start + i) % len] * window[i];
            }
            run_fft(&mut buf, false);
            for (a, b) in acc.iter_mut().zip(buf.iter()) {
                *a += b.norm_sqr();
            }
            count += 1;
        }
    }
    // Density normalization: integrating over frequency returns the mean
    // power of the streams.
    let norm = 1.0 / (count as f64 * win_power * sample_rate);
    let df = sample_rate / seg_len as f64;
    let mut freqs = Vec::with_capacity(seg_len);
    let mut density = Vec::with_capacity(seg_len);
    let half = seg_len / 2;
    for i in 0..seg_len {
        let bin = (i + half) % seg_len;
        let f = (bin as f64 - half as f64) * df + if seg_len % 2 == 0 { 0.0 } else { 0.0 };
        freqs.push(f);
        density.push(acc[bin] * norm);
    }
    Ok(Psd { freqs, density, df })
}

/// Adjacent-channel leakage ratio: the larger of the two adjacent-band
/// powers (one bandwidth wide on each side) over the in-band power.
/// Returns a linear ratio.
pub fn aclr(psd: &Psd, bandwidth: f64) -> Result<f64> {
    let half = bandwidth / 2.0;
    let span = psd.freqs.last().copied().unwrap_or(0.0) - psd.freqs.first().copied().unwrap_or(0.0);
    if span < 3.0 * bandwidth {
        return Err(Error::Config(format!(
            "spectrum span {span:.3} too narrow for adjacent bands of bandwidth {bandwidth:.3}"
        )));
    }
    let inband = psd.band_power(-half, half);
    if inband <= 0.0 {
        return Err(Error::InsufficientSamples("in-band power is zero".into()));
    }
    let upper = psd.band_power(half, 3.0 * half);
    let lower = psd.band_power(-3.0 * half, -half);
    Ok(upper.max(lower) / inband)
}

/// Paired comparison of one scalar statistic estimated two ways.
#[derive(Debug, Clone)]
pub struct PairedStat {
    /// First estimate and its standard error.
    pub a: (f64, f64),
    /// Second estimate and its standard error.
    pub b: (f64, f64),
    /// Whether the estimates agree within `k` combined standard errors.
    pub overlap: bool,
}

/// Compares squared moduli of two complex-mean estimates (e.g. squared
/// array gains) within `k_sigma` combined standard errors.
pub fn paired_gain_squared(a: &[C64], b: &[C64], k_sigma: f64) -> Result<PairedStat> {
    let stat = |v: &[C64]| -> Result<(f64, f64)> {
        if v.len() < 2 {
            return Err(Error::InsufficientSamples(
                "paired statistic needs at least 2 samples".into(),
            ));
        }
        let m = crate::stats::mean_c(v);
        let se = crate::stats::std_err_c(v);
        // Delta method for |mean|^2.
        Ok((m.norm_sqr(), 2.0 * m.norm() * se + se * se))
    };
    let a_stat = stat(a)?;
    let b_stat = stat(b)?;
    let combined = (a_stat.1 * a_stat.1 + b_stat.1 * b_stat.1).sqrt();
    Ok(PairedStat {
        a: a_stat,
        b: b_stat,
        overlap: (a_stat.0 - b_stat.0).abs() <= k_sigma * combined,
    })
}

/// Compares two real-sample means within `k_sigma` combined standard
/// errors.
pub fn paired_mean(a: &[f64], b: &[f64], k_sigma: f64) -> Result<PairedStat> {
    let stat = |v: &[f64]| -> Result<(f64, f64)> {
        if v.len() < 2 {
            return Err(Error::InsufficientSamples(
                "paired statistic needs at least 2 samples".into(),
            ));
        }
        Ok((crate::stats::mean(v), crate::stats::std_err(v)))
    };
    let a_stat = stat(a)?;
    let b_stat = stat(b)?;
    let combined = (a_stat.1 * a_stat.1 + b_stat.1 * b_stat.1).sqrt();
    Ok(PairedStat {
        a: a_stat,
        b: b_stat,
        overlap: (a_stat.0 - b_stat.0).abs() <= k_sigma * combined,
    })
}

/// Writes a density to CSV as `freq_over_bandwidth, dbc_per_hz` where the
/// density is referenced to its maximum.
pub fn write_psd_csv(path: &std::path::Path, psd: &Psd, bandwidth: f64) -> Result<()> {
    use std::io::Write;
    let peak = psd.density.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "freq_over_bandwidth,dbc_per_hz")?;
    for (f, d) in psd.freqs.iter().zip(psd.density.iter()) {
        writeln!(out, "{},{}", f / bandwidth, db(d.max(f64::MIN_POSITIVE) / peak))?;
    }
    Ok(())
}

/// Writes decomposition rows to CSV.
pub fn write_decomposition_csv(
    path: &std::path::Path,
    rows: &[(String, f64, usize, DistortionDecomposition)],
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "scheme,backoff_db,user,g2,c_re,c_im,rho_re,rho_im,interference,err_leakage,distortion")?;
    for (scheme, backoff, user, dec) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            scheme,
            backoff,
            user,
            dec.gain.norm_sqr(),
            dec.clip.re,
            dec.clip.im,
            dec.rho.re,
            dec.rho.im,
            dec.interference,
            dec.err_leakage,
            dec.distortion
        )?;
    }
    Ok(())
}
