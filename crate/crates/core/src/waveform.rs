//! Waveform-level signal processing: block DFTs, root-raised-cosine pulse
//! shaping at an integer oversampling factor, matched filtering, cyclic
//! prefix handling, and peak-to-average-ratio statistics.
//!
//! All block operations are cyclic with period `block_len` symbols
//! (`block_len * oversampling` samples at the high rate), which models a
//! cyclic-prefixed transmission after prefix stripping: edge transients
//! never pollute the measured block.

use std::cell::RefCell;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::C64;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn run_fft(buf: &mut [C64], inverse: bool) {
    PLANNER.with(|p| {
        let fft = if inverse {
            p.borrow_mut().plan_fft_inverse(buf.len())
        } else {
            p.borrow_mut().plan_fft_forward(buf.len())
        };
        fft.process(buf);
    });
}

/// Forward DFT: `X[v] = sum_n x[n] exp(-j 2 pi n v / N)`.
pub fn dft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    run_fft(&mut buf, false);
    buf
}

/// Inverse DFT with the `1/N` factor, so `idft(dft(x)) == x`.
pub fn idft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    run_fft(&mut buf, true);
    let scale = 1.0 / x.len() as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Unitary forward DFT (`1/sqrt(N)` scaling), used on the
/// frequency-domain side of multicarrier transmission.
pub fn unitary_dft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    run_fft(&mut buf, false);
    let scale = 1.0 / (x.len() as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Unitary inverse DFT (`1/sqrt(N)` scaling).
pub fn unitary_idft(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    run_fft(&mut buf, true);
    let scale = 1.0 / (x.len() as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// Cyclic convolution via the frequency domain.
pub fn cyclic_convolve(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cyclic_convolve: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let fa = dft(a);
    let fb = dft(b);
    let prod: Vec<C64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    Ok(idft(&prod))
}

/// Cyclic convolution by direct summation; the oracle for the
/// transform-based implementation.
pub fn cyclic_convolve_direct(a: &[C64], b: &[C64]) -> Result<Vec<C64>> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "cyclic_convolve_direct: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let mut out = vec![C64::ZERO; n];
    for (j, o) in out.iter_mut().enumerate() {
        for i in 0..n {
            *o += a[i] * b[(j + n - i) % n];
        }
    }
    Ok(out)
}

/// Root-raised-cosine pulse sampled at `oversampling` points per symbol
/// over `[-half_span*T, +half_span*T]`, with the sampled energy normalized
/// exactly to `1/T` (root-Nyquist convention).
pub fn rrc_pulse(
    rolloff: f64,
    oversampling: usize,
    half_span: usize,
    symbol_period: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&rolloff) {
        return Err(Error::Config(format!("rolloff {rolloff} outside [0, 1]")));
    }
    if oversampling == 0 || half_span == 0 {
        return Err(Error::Config("oversampling and half_span must be positive".into()));
    }
    if !(symbol_period > 0.0) {
        return Err(Error::Config("symbol_period must be positive".into()));
    }
    let kappa = oversampling as i64;
    let span = half_span as i64 * kappa;
    let pi = std::f64::consts::PI;
    let mut taps: Vec<f64> = Vec::with_capacity((2 * span + 1) as usize);
    for i in -span..=span {
        let x = i as f64 / kappa as f64; // time in symbol periods
        let v = if x == 0.0 {
            1.0 - rolloff + 4.0 * rolloff / pi
        } else if rolloff > 0.0 && (4.0 * rolloff * x.abs() - 1.0).abs() < 1e-8 {
            // Removable singularity of the generic branch at |t| = T/(4*rolloff).
            let a = pi / (4.0 * rolloff);
            (rolloff / 2f64.sqrt())
                * ((1.0 + 2.0 / pi) * a.sin() + (1.0 - 2.0 / pi) * a.cos())
        } else {
            let num = (pi * x * (1.0 - rolloff)).sin()
                + 4.0 * rolloff * x * (pi * x * (1.0 + rolloff)).cos();
            let den = pi * x * (1.0 - (4.0 * rolloff * x).powi(2));
            num / den
        };
        taps.push(v);
    }
    // Normalize the sampled energy: sum p^2 * (T/kappa) = 1/T exactly.
    let raw_energy: f64 = taps.iter().map(|p| p * p).sum::<f64>() * symbol_period
        / kappa as f64;
    let scale = (1.0 / (symbol_period * raw_energy)).sqrt();
    for t in &mut taps {
        *t *= scale;
    }
    Ok(taps)
}

/// Sampled autocorrelation of a pulse: `r[j] = (T/kappa) * sum_i p[i] p[i+j]`
/// for `j` in `[-(len-1), len-1]`, returned with the zero lag at index
/// `len-1`. For a root-Nyquist pulse this is the Nyquist (raised-cosine)
/// function with `r[0] = 1/T`.
pub fn pulse_autocorrelation(taps: &[f64], delta: f64) -> Vec<f64> {
    let n = taps.len();
    let mut out = vec![0.0; 2 * n - 1];
    for (j, o) in out.iter_mut().enumerate() {
        let lag = j as i64 - (n as i64 - 1);
        for i in 0..n {
            let k = i as i64 + lag;
            if (0..n as i64).contains(&k) {
                *o += taps[i] * taps[k as usize];
            }
        }
        *o *= delta;
    }
    out
}

/// Cyclic pulse-shaping and matched-filter engine for one block geometry.
///
/// Symbols enter at rate `1/T`, are expanded by the oversampling factor,
/// and convolved cyclically (period `block_len * oversampling`) with the
/// pulse; the matched filter correlates with the same pulse, scales by the
/// sample period, and decimates back to the symbol rate.
pub struct PulseShaper {
    block_len: usize,
    oversampling: usize,
    period: usize,
    delta: f64,
    wrapped: Vec<f64>,
    freq: Vec<C64>,
}

impl PulseShaper {
    /// Builds the engine for the given config geometry with its RRC pulse.
    pub fn new(cfg: &SimulationConfig) -> Result<Self> {
        let taps = rrc_pulse(
            cfg.rolloff,
            cfg.oversampling,
            cfg.pulse_half_span,
            cfg.symbol_period,
        )?;
        Self::with_pulse(cfg.block_len, cfg.oversampling, &taps, cfg.symbol_period)
    }

    /// Builds the engine from explicit centered pulse taps (odd length).
    pub fn with_pulse(
        block_len: usize,
        oversampling: usize,
        taps: &[f64],
        symbol_period: f64,
    ) -> Result<Self> {
        if block_len == 0 || oversampling == 0 {
            return Err(Error::Config("empty block geometry".into()));
        }
        if taps.len() % 2 != 1 {
            return Err(Error::Config("pulse must have odd length (centered)".into()));
        }
        let period = block_len * oversampling;
        let half = (taps.len() / 2) as i64;
        let mut wrapped = vec![0.0; period];
        for (idx, &t) in taps.iter().enumerate() {
            let i = idx as i64 - half;
            let j = i.rem_euclid(period as i64) as usize;
            wrapped[j] += t;
        }
        let buf: Vec<C64> = wrapped.iter().map(|&t| C64::new(t, 0.0)).collect();
        let freq = dft(&buf);
        Ok(Self {
            block_len,
            oversampling,
            period,
            delta: symbol_period / oversampling as f64,
            wrapped,
            freq,
        })
    }

    /// Samples per block at the oversampled rate.
    pub fn period(&self) -> usize {
        self.period
    }

    /// Pulse taps wrapped onto one cyclic period (zero delay at index 0).
    pub fn wrapped_taps(&self) -> &[f64] {
        &self.wrapped
    }

    /// Pulse-shapes one symbol stream onto the oversampled cyclic grid:
    /// `u(jT/kappa) = sum_n u[n] p((j - n*kappa) T/kappa)`.
    pub fn shape(&self, symbols: &[C64]) -> Result<Vec<C64>> {
        if symbols.len() != self.block_len {
            return Err(Error::Dimension(format!(
                "shape: got {} symbols, expected {}",
                symbols.len(),
                self.block_len
            )));
        }
        let mut buf = vec![C64::ZERO; self.period];
        for (n, &s) in symbols.iter().enumerate() {
            buf[n * self.oversampling] = s;
        }
        run_fft(&mut buf, false);
        for (b, f) in buf.iter_mut().zip(&self.freq) {
            *b *= f;
        }
        run_fft(&mut buf, true);
        let scale = 1.0 / self.period as f64;
        for b in &mut buf {
            *b *= scale;
        }
        Ok(buf)
    }

    /// Matched filter against the pulse followed by symbol-rate sampling:
    /// `y[n] = (T/kappa) * sum_j p(jT/kappa) r((n*kappa + j) T/kappa)`.
    pub fn matched_filter_sample(&self, oversampled: &[C64]) -> Result<Vec<C64>> {
        if oversampled.len() != self.period {
            return Err(Error::Dimension(format!(
                "matched_filter_sample: got {} samples, expected {}",
                oversampled.len(),
                self.period
            )));
        }
        let mut buf = oversampled.to_vec();
        run_fft(&mut buf, false);
        for (b, f) in buf.iter_mut().zip(&self.freq) {
            *b *= f.conj();
        }
        run_fft(&mut buf, true);
        let scale = self.delta / self.period as f64;
        let mut out = Vec::with_capacity(self.block_len);
        for n in 0..self.block_len {
            out.push(buf[n * self.oversampling] * scale);
        }
        Ok(out)
    }
}

/// Prepends the last `prefix` symbols of the frame (cyclic prefix).
pub fn add_cyclic_prefix(frame: &[C64], prefix: usize) -> Result<Vec<C64>> {
    if prefix >= frame.len() {
        return Err(Error::Dimension(format!(
            "prefix {} must be shorter than frame {}",
            prefix,
            frame.len()
        )));
    }
    let mut out = Vec::with_capacity(frame.len() + prefix);
    out.extend_from_slice(&frame[frame.len() - prefix..]);
    out.extend_from_slice(frame);
    Ok(out)
}

/// Removes a cyclic prefix added by [`add_cyclic_prefix`].
pub fn strip_cyclic_prefix(extended: &[C64], prefix: usize) -> Result<Vec<C64>> {
    if prefix >= extended.len() {
        return Err(Error::Dimension(format!(
            "prefix {} must be shorter than extended frame {}",
            prefix,
            extended.len()
        )));
    }
    Ok(extended[prefix..].to_vec())
}

/// Complementary CDF of instantaneous-to-average power pooled over all
/// provided streams: entry `t` is the fraction of samples whose power
/// exceeds the pooled mean by more than `thresholds_db[t]`.
pub fn par_ccdf(streams: &[Vec<C64>], thresholds_db: &[f64]) -> Result<Vec<f64>> {
    let total: usize = streams.iter().map(|s| s.len()).sum();
    if total == 0 {
        return Err(Error::InsufficientSamples("par_ccdf: no samples".into()));
    }
    let mean_power: f64 = streams
        .iter()
        .flat_map(|s| s.iter())
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        / total as f64;
    if mean_power <= 0.0 {
        return Err(Error::InsufficientSamples("par_ccdf: zero-power input".into()));
    }
    let mut out = Vec::with_capacity(thresholds_db.len());
    for &t in thresholds_db {
        let lim = mean_power * 10f64.powf(t / 10.0);
        let count = streams
            .iter()
            .flat_map(|s| s.iter())
            .filter(|z| z.norm_sqr() > lim)
            .count();
        out.push(count as f64 / total as f64);
    }
    Ok(out)
}

/// Writes a multi-stream frame as CSV with columns `stream,index,re,im`.
pub fn write_frame_csv(path: &std::path::Path, frame: &[Vec<C64>]) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "stream,index,re,im")?;
    for (s, row) in frame.iter().enumerate() {
        for (n, z) in row.iter().enumerate() {
            writeln!(f, "{s},{n},{},{}", z.re, z.im)?;
        }
    }
    Ok(())
}
