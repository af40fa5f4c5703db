//! Small statistical helpers: sample moments, standard errors, decibel
//! conversions, and circularly-symmetric complex Gaussian draws.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sample mean of a real slice. Empty input yields `NaN`.
pub fn mean(data: &[f64]) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    data.iter().sum::<f64>() / data.len() as f64
}

/// Unbiased sample variance. Fewer than two points yields `NaN`.
pub fn variance(data: &[f64]) -> f64 {
    if data.len() < 2 {
        return f64::NAN;
    }
    let m = mean(data);
    data.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (data.len() - 1) as f64
}

/// Standard error of the sample mean.
pub fn std_err(data: &[f64]) -> f64 {
    (variance(data) / data.len() as f64).sqrt()
}

/// Sample mean of a complex slice.
pub fn mean_c(data: &[Complex64]) -> Complex64 {
    if data.is_empty() {
        return Complex64::new(f64::NAN, f64::NAN);
    }
    data.iter().sum::<Complex64>() / data.len() as f64
}

/// Standard error of the mean of a complex sample, treating the scatter as
/// a single radial dispersion (sqrt of summed component variances).
pub fn std_err_c(data: &[Complex64]) -> f64 {
    if data.len() < 2 {
        return f64::NAN;
    }
    let m = mean_c(data);
    let var = data.iter().map(|z| (z - m).norm_sqr()).sum::<f64>() / (data.len() - 1) as f64;
    (var / data.len() as f64).sqrt()
}

/// Power ratio to decibels.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Decibels to power ratio.
pub fn undb(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// One draw of a circularly-symmetric complex Gaussian with the given
/// variance (total over both quadrature components).
pub fn draw_cn(rng: &mut ChaCha8Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    // Box-Muller keeps us independent of distribution-crate API churn.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    let r = (-2.0 * u1.ln()).sqrt();
    let (im, re) = (2.0 * std::f64::consts::PI * u2).sin_cos();
    Complex64::new(s * r * re, s * r * im)
}

/// A length-`n` vector of i.i.d. circular complex Gaussians.
pub fn draw_cn_vec(rng: &mut ChaCha8Rng, variance: f64, n: usize) -> Vec<Complex64> {
    (0..n).map(|_| draw_cn(rng, variance)).collect()
}
