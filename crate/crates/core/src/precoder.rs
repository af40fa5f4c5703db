//! Downlink precoders: per-tone linear schemes (maximum-ratio,
//! zero-forcing, regularized zero-forcing) applied over single-carrier or
//! OFDM blocks, and an iterative constant-envelope precoder that designs
//! the per-antenna time samples directly on the fixed-modulus sphere.
//!
//! Linear weights are computed unscaled; a single ensemble normalization
//! constant, calibrated elsewhere so the average radiated signal power is
//! one, multiplies them at application time. The constant-envelope scheme
//! needs no such constant: every sample has modulus `1/sqrt(antennas)` by
//! construction, so the per-sample transmit power is exactly one.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::waveform::{dft, idft, unitary_idft};
use crate::C64;

/// Linear per-tone precoding rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearScheme {
    /// Conjugate of the channel estimate; maximizes array gain.
    Mr,
    /// Right pseudoinverse of the channel estimate; nulls interference at
    /// the estimate.
    Zf,
    /// Ridge-regularized pseudoinverse trading interference suppression
    /// against array gain.
    Rzf {
        /// Ridge term added to the Gram matrix; zero recovers Zf.
        reg: f64,
    },
}

/// Block transmission style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transmission {
    /// Symbols live in the time domain; precoding acts on their DFT.
    SingleCarrier,
    /// Symbols live on tones; the transmit signal is their scaled inverse
    /// transform.
    Ofdm,
}

impl Transmission {
    /// Parses the config spelling ("sc" or "ofdm").
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "sc" => Ok(Self::SingleCarrier),
            "ofdm" => Ok(Self::Ofdm),
            other => Err(Error::Config(format!(
                "unknown transmission '{other}' (expected 'sc' or 'ofdm')"
            ))),
        }
    }
}

/// Per-tone linear precoding weights plus their ensemble normalization.
#[derive(Debug, Clone)]
pub struct PrecoderWeights {
    /// Unscaled antennas-by-users weight matrix per tone.
    pub freq: Vec<DMatrix<C64>>,
    /// Ensemble normalization applied at precoding time.
    pub norm_const: f64,
}

impl PrecoderWeights {
    /// Time-domain filter taps: inverse transform of the scaled per-tone
    /// weights across the tone index, one lag per block position.
    pub fn time_taps(&self) -> Vec<DMatrix<C64>> {
        let n = self.freq.len();
        let (rows, cols) = self.freq[0].shape();
        let mut taps = vec![DMatrix::zeros(rows, cols); n];
        let mut buf = vec![C64::ZERO; n];
        for c in 0..cols {
            for r in 0..rows {
                for (v, b) in buf.iter_mut().enumerate() {
                    *b = self.freq[v][(r, c)] * self.norm_const;
                }
                let time = idft(&buf);
                for (l, t) in time.into_iter().enumerate() {
                    taps[l][(r, c)] = t;
                }
            }
        }
        taps
    }

    /// Fraction of the filter energy at each lag; sums to one.
    pub fn tap_energy_profile(&self) -> Vec<f64> {
        let taps = self.time_taps();
        let energies: Vec<f64> = taps
            .iter()
            .map(|t| t.iter().map(|z| z.norm_sqr()).sum())
            .collect();
        let total: f64 = energies.iter().sum();
        if total <= 0.0 {
            return vec![0.0; energies.len()];
        }
        energies.into_iter().map(|e| e / total).collect()
    }
}

/// Computes unscaled per-tone weights for one linear scheme from the
/// per-tone channel estimates (users-by-antennas each).
pub fn linear_weights(
    scheme: LinearScheme,
    tones: &[DMatrix<C64>],
) -> Result<PrecoderWeights> {
    let first = tones
        .first()
        .ok_or_else(|| Error::Dimension("linear_weights: no tones".into()))?;
    let (k, m) = first.shape();
    if let LinearScheme::Rzf { reg } = scheme {
        if reg < 0.0 || !reg.is_finite() {
            return Err(Error::Config(format!(
                "rzf regularization must be finite and nonnegative, got {reg}"
            )));
        }
    }
    let mut freq = Vec::with_capacity(tones.len());
    for (v, h) in tones.iter().enumerate() {
        if h.shape() != (k, m) {
            return Err(Error::Dimension(format!(
                "linear_weights: tone {v} has shape {:?}, expected ({k},{m})",
                h.shape()
            )));
        }
        let w = match scheme {
            LinearScheme::Mr => h.adjoint(),
            LinearScheme::Zf => pseudo_inverse_weights(h, 0.0, v)?,
            LinearScheme::Rzf { reg } => pseudo_inverse_weights(h, reg, v)?,
        };
        freq.push(w);
    }
    Ok(PrecoderWeights { freq, norm_const: 1.0 })
}

fn pseudo_inverse_weights(h: &DMatrix<C64>, reg: f64, tone: usize) -> Result<DMatrix<C64>> {
    let k = h.nrows();
    let mut gram = h * h.adjoint();
    for i in 0..k {
        gram[(i, i)] += C64::new(reg, 0.0);
    }
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Singular(format!(
            "tone {tone}: user Gram matrix is not invertible (need more antennas than users or a positive ridge)"
        ))
    })?;
    Ok(h.adjoint() * chol.inverse())
}

/// Applies linear weights to one symbol frame (users-by-block), returning
/// the per-antenna transmit block (antennas-by-block).
///
/// Single-carrier frames hold time-domain symbols; they are precoded
/// through their DFT and returned to the time domain. OFDM frames hold
/// tone symbols; the transmit signal is the power-preserving inverse
/// transform of the per-tone products.
pub fn precode_linear(
    weights: &PrecoderWeights,
    symbols: &DMatrix<C64>,
    transmission: Transmission,
) -> Result<DMatrix<C64>> {
    let n = weights.freq.len();
    let (k, cols) = symbols.shape();
    if cols != n {
        return Err(Error::Dimension(format!(
            "precode_linear: frame has {cols} columns but {n} tones"
        )));
    }
    let (m, kw) = weights.freq[0].shape();
    if kw != k {
        return Err(Error::Dimension(format!(
            "precode_linear: weights serve {kw} users, frame has {k}"
        )));
    }
    // User sequences on tones.
    let mut tone_syms = DMatrix::zeros(k, n);
    match transmission {
        Transmission::SingleCarrier => {
            let mut row = vec![C64::ZERO; n];
            for user in 0..k {
                for (i, r) in row.iter_mut().enumerate() {
                    *r = symbols[(user, i)];
                }
                let spec = dft(&row);
                for (i, s) in spec.into_iter().enumerate() {
                    tone_syms[(user, i)] = s;
                }
            }
        }
        Transmission::Ofdm => tone_syms.copy_from(symbols),
    }
    let scale = C64::new(weights.norm_const, 0.0);
    let mut tone_tx = DMatrix::zeros(m, n);
    for v in 0..n {
        let col = &weights.freq[v] * tone_syms.column(v) * scale;
        tone_tx.set_column(v, &col);
    }
    // Per-antenna return to the time domain.
    let mut out = DMatrix::zeros(m, n);
    let mut row = vec![C64::ZERO; n];
    for ant in 0..m {
        for (i, r) in row.iter_mut().enumerate() {
            *r = tone_tx[(ant, i)];
        }
        let time = match transmission {
            Transmission::SingleCarrier => idft(&row),
            Transmission::Ofdm => unitary_idft(&row),
        };
        for (i, t) in time.into_iter().enumerate() {
            out[(ant, i)] = t;
        }
    }
    Ok(out)
}

/// Projects a signal onto the constant-modulus sphere: every entry keeps
/// its phase and takes modulus `1/sqrt(rows)`; zero entries map to the
/// positive real point.
pub fn constant_modulus_projection(signal: &DMatrix<C64>) -> DMatrix<C64> {
    let modulus = 1.0 / (signal.nrows() as f64).sqrt();
    signal.map(|z| {
        let a = z.norm();
        if a == 0.0 {
            C64::new(modulus, 0.0)
        } else {
            z * (modulus / a)
        }
    })
}

/// Stopping controls of the constant-envelope solver.
#[derive(Debug, Clone)]
pub struct DtceOptions {
    /// Hard cap on full coordinate sweeps.
    pub max_sweeps: usize,
    /// Sweep-over-sweep relative objective decrease below which the solver
    /// declares convergence.
    pub rel_tol: f64,
    /// Record the objective after every coordinate update (testing aid;
    /// costly on large blocks).
    pub trace_updates: bool,
}

impl Default for DtceOptions {
    fn default() -> Self {
        Self { max_sweeps: 50, rel_tol: 1e-5, trace_updates: false }
    }
}

/// Result of the constant-envelope design.
#[derive(Debug, Clone)]
pub struct DtceOutcome {
    /// Antennas-by-block transmit signal; every entry has modulus
    /// `1/sqrt(antennas)`.
    pub signal: DMatrix<C64>,
    /// Objective value before the first sweep and after each sweep.
    pub objective: Vec<f64>,
    /// Objective after every coordinate update, when requested.
    pub update_objective: Option<Vec<f64>>,
    /// Whether the relative-decrease criterion was met within the sweep
    /// budget; otherwise the best (last) iterate is still returned.
    pub converged: bool,
}

/// Designs a constant-envelope transmit block by cyclic coordinate
/// descent on the squared distance between the received noiseless signal
/// and the amplitude-scaled target sequence.
///
/// * `est_taps` - symbol-rate channel estimate, one users-by-antennas
///   matrix per delay; the convolution is cyclic over the block.
/// * `target` - users-by-block desired time-domain sequence. For OFDM
///   frames pass the power-preserving inverse transform of the tone
///   symbols.
/// * `gamma` - squared target amplitude gain; the objective compares the
///   received signal against `sqrt(gamma) * target`.
/// * `init` - any nonzero antennas-by-block signal; only its phases are
///   used, via projection onto the constant-modulus sphere.
///
/// Each coordinate update is the exact minimizer of the objective in that
/// sample's phase, so the objective never increases. Updates sweep the
/// block position index outer and the antenna index inner.
pub fn dtce_precode(
    est_taps: &[DMatrix<C64>],
    target: &DMatrix<C64>,
    gamma: f64,
    init: &DMatrix<C64>,
    opts: &DtceOptions,
) -> Result<DtceOutcome> {
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::Config(format!(
            "constant-envelope target gain must be positive, got {gamma}"
        )));
    }
    let first = est_taps
        .first()
        .ok_or_else(|| Error::Dimension("dtce_precode: no channel taps".into()))?;
    let (k, m) = first.shape();
    let (kt, n) = target.shape();
    if kt != k {
        return Err(Error::Dimension(format!(
            "dtce_precode: target serves {kt} users, channel has {k}"
        )));
    }
    if init.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "dtce_precode: init shape {:?}, expected ({m},{n})",
            init.shape()
        )));
    }
    if est_taps.len() > n {
        return Err(Error::Dimension(format!(
            "dtce_precode: {} delay taps exceed block length {n}",
            est_taps.len()
        )));
    }
    let l = est_taps.len();
    // Per-antenna tap columns and their total energy.
    let mut cols: Vec<Vec<DVector<C64>>> = Vec::with_capacity(m);
    let mut col_energy = vec![0.0; m];
    for ant in 0..m {
        let mut per_lag = Vec::with_capacity(l);
        for tap in est_taps {
            let c: DVector<C64> = tap.column(ant).into_owned();
            col_energy[ant] += c.norm_squared();
            per_lag.push(c);
        }
        cols.push(per_lag);
    }
    let modulus = 1.0 / (m as f64).sqrt();
    let amp = gamma.sqrt();
    let mut u = constant_modulus_projection(init);
    // Residual between the received noiseless block and the scaled target.
    let mut resid = DMatrix::zeros(k, n);
    for pos in 0..n {
        let mut col: DVector<C64> = DVector::zeros(k);
        for (lag, tap) in est_taps.iter().enumerate() {
            let src = (pos + n - lag) % n;
            col.gemv(C64::ONE, tap, &u.column(src), C64::ONE);
        }
        col -= target.column(pos) * C64::new(amp, 0.0);
        resid.set_column(pos, &col);
    }
    let objective_of = |r: &DMatrix<C64>| -> f64 { r.iter().map(|z| z.norm_sqr()).sum() };
    let mut objective = vec![objective_of(&resid)];
    let mut update_objective = if opts.trace_updates { Some(Vec::new()) } else { None };
    let mut converged = false;
    for _sweep in 0..opts.max_sweeps {
        for pos in 0..n {
            for ant in 0..m {
                let old = u[(ant, pos)];
                // Correlation of this sample's channel with the residual
                // that excludes the sample's own contribution.
                let mut c = C64::ZERO;
                for (lag, col) in cols[ant].iter().enumerate() {
                    let idx = (pos + lag) % n;
                    c += col.dotc(&resid.column(idx));
                }
                c -= C64::new(col_energy[ant], 0.0) * old;
                let new = if c.norm() == 0.0 {
                    old
                } else {
                    -c * (modulus / c.norm())
                };
                let delta = new - old;
                if delta != C64::ZERO {
                    for (lag, col) in cols[ant].iter().enumerate() {
                        let idx = (pos + lag) % n;
                        let mut rcol = resid.column_mut(idx);
                        rcol.axpy(delta, col, C64::ONE);
                    }
                    u[(ant, pos)] = new;
                }
                if let Some(tr) = update_objective.as_mut() {
                    tr.push(objective_of(&resid));
                }
            }
        }
        let obj = objective_of(&resid);
        let prev = *objective.last().unwrap();
        objective.push(obj);
        if prev <= 0.0 || (prev - obj) < opts.rel_tol * prev {
            converged = true;
            break;
        }
    }
    Ok(DtceOutcome { signal: u, objective, update_objective, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{channel_dft, draw_pathloss, estimate_channel, ChannelShaper};
    use crate::config::{CsiMode, SimulationConfig};
    use crate::seeded_rng;
    use crate::stats::{draw_cn, mean, mean_c, std_err};
    use rand_chacha::ChaCha8Rng;

    fn flat_rayleigh(k: usize, m: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
        DMatrix::from_fn(k, m, |_, _| draw_cn(rng, 1.0))
    }

    /// Splits a flat channel into an estimate of quality `delta` and the
    /// matching independent error.
    fn flat_estimated(
        k: usize,
        m: usize,
        delta: f64,
        rng: &mut ChaCha8Rng,
    ) -> (DMatrix<C64>, DMatrix<C64>) {
        let est = DMatrix::from_fn(k, m, |_, _| draw_cn(rng, delta));
        let err = DMatrix::from_fn(k, m, |_, _| draw_cn(rng, 1.0 - delta));
        let truth = &est + &err;
        (truth, est)
    }

    #[test]
    fn test_mr_weight_is_conjugate_of_flat_estimate() {
        let mut rng = seeded_rng(50, 0);
        let h = flat_rayleigh(1, 1, &mut rng);
        let w = linear_weights(LinearScheme::Mr, &[h.clone()]).unwrap();
        assert!((w.freq[0][(0, 0)] - h[(0, 0)].conj()).norm() < 1e-15);
    }

    #[test]
    fn test_zf_inverts_channel_per_tone() {
        let mut rng = seeded_rng(51, 0);
        for _ in 0..5 {
            let h = flat_rayleigh(4, 12, &mut rng);
            let w = linear_weights(LinearScheme::Zf, &[h.clone()]).unwrap();
            let prod = &h * &w.freq[0];
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { C64::ONE } else { C64::ZERO };
                    assert!(
                        (prod[(i, j)] - want).norm() < 1e-10,
                        "entry ({i},{j}) = {}",
                        prod[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn test_zf_rejects_more_users_than_antennas() {
        let mut rng = seeded_rng(52, 0);
        let h = flat_rayleigh(5, 3, &mut rng);
        match linear_weights(LinearScheme::Zf, &[h]) {
            Err(Error::Singular(_)) => {}
            other => panic!("expected singular error, got {other:?}"),
        }
    }

    #[test]
    fn test_rzf_limits() {
        let mut rng = seeded_rng(53, 0);
        let h = flat_rayleigh(4, 12, &mut rng);
        let zf = linear_weights(LinearScheme::Zf, &[h.clone()]).unwrap();
        let near_zf = linear_weights(LinearScheme::Rzf { reg: 1e-9 }, &[h.clone()]).unwrap();
        let rel = (&near_zf.freq[0] - &zf.freq[0]).norm() / zf.freq[0].norm();
        assert!(rel < 1e-6, "small-ridge deviation from zero-forcing: {rel}");

        let mr = linear_weights(LinearScheme::Mr, &[h.clone()]).unwrap();
        let big = linear_weights(LinearScheme::Rzf { reg: 1e9 }, &[h]).unwrap();
        let a: Vec<C64> = big.freq[0].iter().cloned().collect();
        let b: Vec<C64> = mr.freq[0].iter().cloned().collect();
        let inner: C64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
        let na: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(
            inner.norm() / (na * nb) > 1.0 - 1e-6,
            "large-ridge direction must align with maximum-ratio"
        );
    }

    #[test]
    fn test_rzf_rejects_negative_ridge() {
        let mut rng = seeded_rng(54, 0);
        let h = flat_rayleigh(2, 4, &mut rng);
        assert!(linear_weights(LinearScheme::Rzf { reg: -1.0 }, &[h]).is_err());
    }

    /// Ensemble normalization for a flat fixture: picks the constant that
    /// makes the average transmit power one under independent symbols of
    /// power 1/users.
    fn calibrate_flat(
        scheme: LinearScheme,
        k: usize,
        m: usize,
        delta: f64,
        draws: usize,
        rng: &mut ChaCha8Rng,
    ) -> f64 {
        let mut acc = 0.0;
        for _ in 0..draws {
            let (_, est) = flat_estimated(k, m, delta, rng);
            let w = linear_weights(scheme, &[est]).unwrap();
            acc += w.freq[0].norm_squared() / k as f64;
        }
        (draws as f64 / acc).sqrt()
    }

    /// Measured array gain and interference of a flat fixture, in the
    /// normalization where maximum-ratio has squared gain `antennas` and
    /// per-interferer leakage through the estimate equals the estimate
    /// quality.
    fn flat_gain_interference(
        scheme: LinearScheme,
        k: usize,
        m: usize,
        delta: f64,
        draws: usize,
        seed: u64,
    ) -> (f64, f64, f64) {
        let mut rng = seeded_rng(seed, 0);
        let alpha = calibrate_flat(scheme, k, m, delta, 400, &mut rng);
        let mut gains = Vec::with_capacity(draws * k);
        let mut leaks = Vec::with_capacity(draws * k);
        for _ in 0..draws {
            let (_, est) = flat_estimated(k, m, delta, &mut rng);
            let w = linear_weights(scheme, &[est.clone()]).unwrap();
            let through_est = &est * &w.freq[0] * C64::new(alpha, 0.0);
            for user in 0..k {
                gains.push(through_est[(user, user)] / delta.sqrt());
                let mut leak = 0.0;
                for j in 0..k {
                    if j != user {
                        leak += through_est[(user, j)].norm_sqr();
                    }
                }
                leaks.push(leak / (k - 1) as f64);
            }
        }
        let g = mean_c(&gains);
        let g2 = g.norm_sqr();
        // Standard error of |mean|^2 via the dispersion of the samples.
        let disp: Vec<f64> = gains.iter().map(|z| (z - g).norm()).collect();
        let se_mean = (mean(&disp.iter().map(|d| d * d).collect::<Vec<_>>())
            / gains.len() as f64)
            .sqrt();
        let g2_se = 2.0 * g.norm() * se_mean + se_mean * se_mean;
        (g2, g2_se, mean(&leaks))
    }

    #[test]
    fn test_mr_array_gain_matches_antenna_count() {
        let (g2, g2_se, _) = flat_gain_interference(LinearScheme::Mr, 4, 32, 1.0, 1000, 55);
        assert!(
            (g2 - 32.0).abs() < 3.0 * g2_se,
            "squared maximum-ratio gain {g2} (se {g2_se}) vs 32"
        );
    }

    #[test]
    fn test_mr_gain_insensitive_to_estimate_quality() {
        let (g2, g2_se, _) = flat_gain_interference(LinearScheme::Mr, 4, 32, 0.5, 1000, 56);
        assert!(
            (g2 - 32.0).abs() < 3.0 * g2_se,
            "squared maximum-ratio gain {g2} (se {g2_se}) vs 32 at half estimate quality"
        );
    }

    #[test]
    fn test_mr_interference_equals_estimate_quality() {
        let (_, _, leak) = flat_gain_interference(LinearScheme::Mr, 4, 32, 0.5, 1000, 57);
        assert!(
            (leak - 0.5).abs() < 0.03,
            "per-interferer maximum-ratio leakage {leak} vs 0.5"
        );
        let (_, _, leak1) = flat_gain_interference(LinearScheme::Mr, 4, 32, 1.0, 1000, 58);
        assert!(
            (leak1 - 1.0).abs() < 0.06,
            "per-interferer maximum-ratio leakage {leak1} vs 1"
        );
    }

    #[test]
    fn test_zf_array_gain_and_interference() {
        let (g2, g2_se, leak) = flat_gain_interference(LinearScheme::Zf, 4, 32, 1.0, 1000, 59);
        assert!(
            (g2 - 28.0).abs() < 3.0 * g2_se.max(0.3),
            "squared zero-forcing gain {g2} (se {g2_se}) vs 28"
        );
        assert!(leak < 1e-18, "zero-forcing leakage through the estimate: {leak}");
    }

    #[test]
    fn test_rzf_grid_search_beats_both_endpoints() {
        // On a loaded system the best ridge from a log grid must achieve
        // an effective SINR no worse than either extreme scheme.
        let (k, m) = (50, 64);
        let p = 1.0;
        let noise = 1e-2;
        let xi = 1.0 / k as f64;
        let draws = 30;
        let sinr_of = |scheme: LinearScheme, seed: u64| -> f64 {
            let mut rng = seeded_rng(seed, 0);
            let alpha = calibrate_flat(scheme, k, m, 1.0, 60, &mut rng);
            let mut sig = Vec::new();
            let mut intf = Vec::new();
            for _ in 0..draws {
                let h = flat_rayleigh(k, m, &mut rng);
                let w = linear_weights(scheme, &[h.clone()]).unwrap();
                let prod = &h * &w.freq[0] * C64::new(alpha, 0.0);
                for user in 0..k {
                    sig.push(prod[(user, user)]);
                    let mut leak = 0.0;
                    for j in 0..k {
                        if j != user {
                            leak += prod[(user, j)].norm_sqr();
                        }
                    }
                    intf.push(leak);
                }
            }
            let g = mean_c(&sig);
            // Self-distortion of the gain (variance about the mean) also
            // interferes; fold it into the denominator.
            let gvar: f64 = sig.iter().map(|z| (z - g).norm_sqr()).sum::<f64>()
                / sig.len() as f64;
            let num = p * xi * g.norm_sqr();
            let den = p * xi * (mean(&intf) + gvar) + noise;
            num / den
        };
        let mr = sinr_of(LinearScheme::Mr, 60);
        let zf = sinr_of(LinearScheme::Zf, 60);
        let mut best = f64::NEG_INFINITY;
        for i in 0..25 {
            let reg = 10f64.powf(-6.0 + 9.0 * i as f64 / 24.0);
            let s = sinr_of(LinearScheme::Rzf { reg }, 60);
            best = best.max(s);
        }
        let floor = mr.max(zf);
        assert!(
            best >= floor * 0.98,
            "grid-search ridge SINR {best} below endpoints (mr {mr}, zf {zf})"
        );
    }

    #[test]
    fn test_precode_single_carrier_matches_time_domain_convolution() {
        // Per-tone multiplication equals cyclic convolution with the
        // inverse-transformed taps.
        let (k, m, n) = (2, 3, 8);
        let mut rng = seeded_rng(61, 0);
        let tones: Vec<DMatrix<C64>> =
            (0..n).map(|_| flat_rayleigh(k, m, &mut rng)).collect();
        let mut w = linear_weights(LinearScheme::Mr, &tones).unwrap();
        w.norm_const = 0.7;
        let symbols = DMatrix::from_fn(k, n, |_, _| draw_cn(&mut rng, 1.0));
        let fast = precode_linear(&w, &symbols, Transmission::SingleCarrier).unwrap();
        let taps = w.time_taps();
        for ant in 0..m {
            for pos in 0..n {
                let mut direct = C64::ZERO;
                for (lag, tap) in taps.iter().enumerate() {
                    for user in 0..k {
                        direct += tap[(ant, user)] * symbols[(user, (pos + n - lag) % n)];
                    }
                }
                assert!(
                    (fast[(ant, pos)] - direct).norm() < 1e-10,
                    "antenna {ant} position {pos}"
                );
            }
        }
    }

    #[test]
    fn test_flat_channel_sc_and_ofdm_transmit_signals_coincide() {
        // With one delay tap the weights are tone-independent, so both
        // transmission styles radiate the same block when fed matched
        // symbol representations.
        let (k, m, n) = (2, 4, 16);
        let mut rng = seeded_rng(62, 0);
        let flat = flat_rayleigh(k, m, &mut rng);
        let tones: Vec<DMatrix<C64>> = (0..n).map(|_| flat.clone()).collect();
        let w = linear_weights(LinearScheme::Zf, &tones).unwrap();
        let time_syms = DMatrix::from_fn(k, n, |_, _| draw_cn(&mut rng, 1.0));
        let sc = precode_linear(&w, &time_syms, Transmission::SingleCarrier).unwrap();
        // Tone symbols whose power-preserving inverse transform is the
        // same time sequence.
        let mut tone_syms = DMatrix::zeros(k, n);
        let mut row = vec![C64::ZERO; n];
        for user in 0..k {
            for (i, r) in row.iter_mut().enumerate() {
                *r = time_syms[(user, i)];
            }
            let spec = crate::waveform::unitary_dft(&row);
            for (i, s) in spec.into_iter().enumerate() {
                tone_syms[(user, i)] = s;
            }
        }
        let ofdm = precode_linear(&w, &tone_syms, Transmission::Ofdm).unwrap();
        assert!((&sc - &ofdm).norm() < 1e-10 * sc.norm());
    }

    #[test]
    fn test_ensemble_transmit_power_is_one_after_normalization() {
        // With the analytic maximum-ratio normalization, the radiated
        // power per sample averages one over many frames.
        let cfg = SimulationConfig {
            antennas: 8,
            users: 2,
            block_len: 32,
            ..SimulationConfig::default()
        };
        let shaper = ChannelShaper::new(&cfg).unwrap();
        let mut rng = seeded_rng(63, 0);
        let alpha = 1.0 / (cfg.antennas as f64).sqrt();
        let mut powers = Vec::new();
        for _ in 0..1000 {
            let chan = shaper.draw(&mut rng);
            let tones = channel_dft(&chan.symbol, cfg.block_len).unwrap();
            let mut w = linear_weights(LinearScheme::Mr, &tones).unwrap();
            w.norm_const = alpha;
            let symbols = DMatrix::from_fn(cfg.users, cfg.block_len, |_, _| {
                draw_cn(&mut rng, 1.0 / cfg.users as f64)
            });
            let u = precode_linear(&w, &symbols, Transmission::SingleCarrier).unwrap();
            powers.push(u.norm_squared() / cfg.block_len as f64);
        }
        let p = mean(&powers);
        assert!((p - 1.0).abs() < 0.02, "ensemble transmit power {p}");
    }

    #[test]
    fn test_zf_time_taps_concentrate_for_wide_arrays() {
        // With many more antennas than users the zero-forcing filter
        // energy concentrates near zero delay; the concentration weakens
        // as the array shrinks toward the user count.
        let frac_inside = |antennas: usize, seed: u64| -> f64 {
            let cfg = SimulationConfig {
                antennas,
                users: 10,
                block_len: 64,
                pilot_len: 40,
                ..SimulationConfig::default()
            };
            let shaper = ChannelShaper::new(&cfg).unwrap();
            let mut rng = seeded_rng(seed, 0);
            let mut inside = 0.0;
            let reps = 3;
            for _ in 0..reps {
                let chan = shaper.draw(&mut rng);
                let tones = channel_dft(&chan.symbol, cfg.block_len).unwrap();
                let w = linear_weights(LinearScheme::Zf, &tones).unwrap();
                let profile = w.tap_energy_profile();
                let l = cfg.taps;
                let n = cfg.block_len;
                let mut f = 0.0;
                for (lag, e) in profile.iter().enumerate() {
                    if lag <= l || lag >= n - l {
                        f += e;
                    }
                }
                inside += f;
            }
            inside / reps as f64
        };
        let wide = frac_inside(100, 64);
        let narrow = frac_inside(12, 65);
        assert!(wide > 0.95, "wide-array concentration {wide}");
        assert!(narrow < wide, "concentration must degrade toward loaded arrays");
    }

    #[test]
    fn test_pilot_estimate_keeps_zero_forcing_exact_on_estimate() {
        // Zero-forcing built on a pilot estimate still inverts that
        // estimate tone by tone.
        let cfg = SimulationConfig {
            antennas: 12,
            users: 3,
            csi: CsiMode::Pilot,
            pilot_len: 12,
            ..SimulationConfig::default()
        };
        let shaper = ChannelShaper::new(&cfg).unwrap();
        let mut rng = seeded_rng(66, 0);
        let pl = draw_pathloss(&cfg, &mut rng);
        let chan = shaper.draw(&mut rng);
        let est = estimate_channel(&cfg, &chan, &pl, &mut rng).unwrap();
        let tones = channel_dft(&est.est, 16).unwrap();
        let w = linear_weights(LinearScheme::Zf, &tones).unwrap();
        for v in 0..16 {
            let prod = &tones[v] * &w.freq[v];
            for i in 0..3 {
                for j in 0..3 {
                    let want = if i == j { C64::ONE } else { C64::ZERO };
                    assert!((prod[(i, j)] - want).norm() < 1e-9);
                }
            }
        }
    }

    fn random_dtce_fixture(
        m: usize,
        k: usize,
        l: usize,
        n: usize,
        seed: u64,
    ) -> (Vec<DMatrix<C64>>, DMatrix<C64>, DMatrix<C64>) {
        let mut rng = seeded_rng(seed, 0);
        let taps: Vec<DMatrix<C64>> = (0..l)
            .map(|_| DMatrix::from_fn(k, m, |_, _| draw_cn(&mut rng, 1.0 / l as f64)))
            .collect();
        let target = DMatrix::from_fn(k, n, |_, _| draw_cn(&mut rng, 1.0));
        let init = DMatrix::from_fn(m, n, |_, _| draw_cn(&mut rng, 1.0));
        (taps, target, init)
    }

    #[test]
    fn test_dtce_single_sample_closed_form() {
        // One antenna, one user, one tap, one sample: the optimum aligns
        // the received phase with the target phase.
        let mut rng = seeded_rng(70, 0);
        for _ in 0..10 {
            let h = draw_cn(&mut rng, 1.0);
            let s = draw_cn(&mut rng, 1.0);
            let taps = vec![DMatrix::from_element(1, 1, h)];
            let target = DMatrix::from_element(1, 1, s);
            let init = DMatrix::from_element(1, 1, draw_cn(&mut rng, 1.0));
            let out = dtce_precode(&taps, &target, 2.5, &init, &DtceOptions::default()).unwrap();
            let expect = C64::from_polar(1.0, s.arg() - h.arg());
            assert!(
                (out.signal[(0, 0)] - expect).norm() < 1e-12,
                "phase alignment: got {}, expected {expect}",
                out.signal[(0, 0)]
            );
        }
    }

    #[test]
    fn test_dtce_matches_refined_phase_grid_search() {
        // Two antennas, one sample: freeze the second antenna and compare
        // the first antenna's update against a three-stage phase grid.
        let mut rng = seeded_rng(71, 0);
        let h = DMatrix::from_fn(1, 2, |_, _| draw_cn(&mut rng, 1.0));
        let target = DMatrix::from_element(1, 1, draw_cn(&mut rng, 1.0));
        let init = DMatrix::from_fn(2, 1, |_, _| draw_cn(&mut rng, 1.0));
        let gamma = 1.7;
        let taps = vec![h.clone()];
        let out = dtce_precode(
            &taps,
            &target,
            gamma,
            &init,
            &DtceOptions { max_sweeps: 200, rel_tol: 1e-14, trace_updates: false },
        )
        .unwrap();
        let solver_obj = *out.objective.last().unwrap();
        // Exhaustive two-phase refinement around the best grid cell.
        let modulus = 1.0 / 2f64.sqrt();
        let obj = |p0: f64, p1: f64| -> f64 {
            let u0 = C64::from_polar(modulus, p0);
            let u1 = C64::from_polar(modulus, p1);
            (h[(0, 0)] * u0 + h[(0, 1)] * u1 - target[(0, 0)] * gamma.sqrt()).norm_sqr()
        };
        let tau = std::f64::consts::TAU;
        let (mut c0, mut c1, mut span) = (0.0, 0.0, tau);
        let mut best = f64::INFINITY;
        for _stage in 0..4 {
            let (s0, s1, sp) = (c0, c1, span);
            for i in 0..60 {
                for j in 0..60 {
                    let p0 = s0 - sp / 2.0 + sp * i as f64 / 59.0;
                    let p1 = s1 - sp / 2.0 + sp * j as f64 / 59.0;
                    let o = obj(p0, p1);
                    if o < best {
                        best = o;
                        c0 = p0;
                        c1 = p1;
                    }
                }
            }
            span = sp / 20.0;
        }
        assert!(
            (solver_obj - best).abs() < 1e-12,
            "solver objective {solver_obj} vs grid {best}"
        );
    }

    #[test]
    fn test_dtce_modulus_constraint_exact() {
        let (taps, target, init) = random_dtce_fixture(8, 2, 3, 16, 72);
        let out = dtce_precode(&taps, &target, 4.0, &init, &DtceOptions::default()).unwrap();
        let modulus = 1.0 / 8f64.sqrt();
        for z in out.signal.iter() {
            assert!(
                (z.norm() - modulus).abs() < 1e-15,
                "modulus {} deviates from {modulus}",
                z.norm()
            );
        }
    }

    #[test]
    fn test_dtce_objective_never_increases_per_update() {
        let (taps, target, init) = random_dtce_fixture(4, 2, 2, 8, 73);
        let out = dtce_precode(
            &taps,
            &target,
            2.0,
            &init,
            &DtceOptions { max_sweeps: 5, rel_tol: 0.0, trace_updates: true },
        )
        .unwrap();
        let tr = out.update_objective.unwrap();
        let mut prev = out.objective[0];
        for (i, &o) in tr.iter().enumerate() {
            assert!(
                o <= prev + 1e-9 * prev.max(1.0),
                "objective rose at update {i}: {prev} -> {o}"
            );
            prev = o;
        }
    }

    #[test]
    fn test_dtce_converges_and_improves_on_init() {
        let (taps, target, init) = random_dtce_fixture(16, 3, 4, 32, 74);
        let out = dtce_precode(&taps, &target, 8.0, &init, &DtceOptions::default()).unwrap();
        assert!(out.converged, "solver should converge on a small fixture");
        let first = out.objective[0];
        let last = *out.objective.last().unwrap();
        assert!(last < first, "objective {first} -> {last} must improve");
        for w in out.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
        }
    }

    #[test]
    fn test_dtce_rejects_bad_inputs() {
        let (taps, target, init) = random_dtce_fixture(4, 2, 2, 8, 75);
        assert!(dtce_precode(&taps, &target, 0.0, &init, &DtceOptions::default()).is_err());
        assert!(dtce_precode(&[], &target, 1.0, &init, &DtceOptions::default()).is_err());
        let bad_init = DMatrix::zeros(3, 8);
        assert!(dtce_precode(&taps, &target, 1.0, &bad_init, &DtceOptions::default()).is_err());
    }

    #[test]
    fn test_constant_modulus_projection_handles_zeros() {
        let m = DMatrix::from_row_slice(2, 2, &[
            C64::new(3.0, 4.0),
            C64::ZERO,
            C64::new(0.0, -2.0),
            C64::new(1.0, 0.0),
        ]);
        let p = constant_modulus_projection(&m);
        let want = 1.0 / 2f64.sqrt();
        for z in p.iter() {
            assert!((z.norm() - want).abs() < 1e-15);
        }
        assert!((p[(0, 1)] - C64::new(want, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn test_transmission_parse() {
        assert_eq!(Transmission::parse("sc").unwrap(), Transmission::SingleCarrier);
        assert_eq!(Transmission::parse("ofdm").unwrap(), Transmission::Ofdm);
        assert!(Transmission::parse("tdma").is_err());
    }
}
