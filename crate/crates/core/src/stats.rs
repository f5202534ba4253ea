//! Sample statistics, harmonic analysis and kernel density estimates.

use std::f64::consts::PI;

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// Magnitude of harmonic `h` of one period sampled uniformly (endpoint excluded),
/// scaled so a unit sinusoid has magnitude 1.
pub fn harmonic_magnitude(samples: &[f64], h: usize) -> f64 {
    let n = samples.len() as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (i, &x) in samples.iter().enumerate() {
        let ph = 2.0 * PI * (h * i) as f64 / n;
        re += x * ph.cos();
        im -= x * ph.sin();
    }
    2.0 * (re * re + im * im).sqrt() / n
}

pub const THD_HARMONICS: usize = 10;

/// Total harmonic distortion over harmonics 2..=10; `None` when the
/// fundamental is below 1e-12.
pub fn thd(samples: &[f64]) -> Option<f64> {
    let x1 = harmonic_magnitude(samples, 1);
    if x1 < 1e-12 {
        return None;
    }
    let hs: f64 = (2..=THD_HARMONICS)
        .map(|h| harmonic_magnitude(samples, h).powi(2))
        .sum();
    Some(hs.sqrt() / x1)
}

/// Silverman's rule-of-thumb bandwidth `1.06·σ·n^(-1/5)`.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let (_, s) = mean_std(xs);
    1.06 * s * (xs.len() as f64).powf(-0.2)
}

/// Gaussian kernel density estimate on `points` evenly spaced values
/// spanning the samples plus three bandwidths on each side.
pub fn gaussian_kde(xs: &[f64], points: usize) -> Vec<(f64, f64)> {
    if xs.is_empty() || points == 0 {
        return Vec::new();
    }
    let h = silverman_bandwidth(xs);
    let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(h > 0.0) {
        // Degenerate sample: a single spike.
        return vec![(lo, f64::INFINITY)];
    }
    let (a, b) = (lo - 3.0 * h, hi + 3.0 * h);
    let norm = 1.0 / (xs.len() as f64 * h * (2.0 * PI).sqrt());
    (0..points)
        .map(|i| {
            let x = if points == 1 {
                0.5 * (a + b)
            } else {
                a + (b - a) * i as f64 / (points - 1) as f64
            };
            let d: f64 = xs
                .iter()
                .map(|&s| (-0.5 * ((x - s) / h).powi(2)).exp())
                .sum();
            (x, d * norm)
        })
        .collect()
}
