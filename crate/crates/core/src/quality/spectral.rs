//! Band-wise error indices (ERGAS, RASE) and the spectral angle (SAM).

use std::f64::consts::FRAC_PI_2;

use super::QualityConfig;
use crate::tensor::ImagePair;

struct BandStats {
    rmse: f64,
    mean: f64,
}

fn band_stats(pair: &ImagePair) -> Vec<BandStats> {
    let channels = pair.original().channels();
    let o = pair.original().values();
    let a = pair.adversarial().values();
    let per_band = (o.len() / channels) as f64;
    let mut sq = vec![0.0; channels];
    let mut sum = vec![0.0; channels];
    for (i, (x, y)) in o.iter().zip(a).enumerate() {
        let k = i % channels;
        sq[k] += (x - y) * (x - y);
        sum[k] += x;
    }
    sq.into_iter()
        .zip(sum)
        .map(|(s, m)| BandStats {
            rmse: (s / per_band).sqrt(),
            mean: m / per_band,
        })
        .collect()
}

/// Relative dimensionless global error, `(100 / r) * sqrt(mean_k (RMSE_k / mu_k)^2)`.
///
/// Band means below `ergas_mean_epsilon` are replaced by the epsilon.
pub fn ergas(pair: &ImagePair, cfg: &QualityConfig) -> f64 {
    let bands = band_stats(pair);
    let acc: f64 = bands
        .iter()
        .map(|b| {
            let ratio = b.rmse / b.mean.max(cfg.ergas_mean_epsilon);
            ratio * ratio
        })
        .sum();
    100.0 / cfg.ergas_ratio * (acc / bands.len() as f64).sqrt()
}

/// Relative average spectral error against the global mean of the original.
///
/// Returns `f64::INFINITY` when the original is all zeros.
pub fn rase(pair: &ImagePair) -> f64 {
    let bands = band_stats(pair);
    let o = pair.original().values();
    let global_mean = o.iter().sum::<f64>() / o.len() as f64;
    let rms: f64 = bands.iter().map(|b| b.rmse * b.rmse).sum::<f64>() / bands.len() as f64;
    if global_mean == 0.0 {
        return if rms == 0.0 { 0.0 } else { f64::INFINITY };
    }
    100.0 / global_mean * rms.sqrt()
}

/// Angle between two non-zero vectors given their norms.
///
/// Uses `2 atan2(|u - v|, |u + v|)` on the unit vectors, which equals
/// `acos(<x, y> / (|x| |y|))` but stays accurate near 0 and π.
fn unit_angle(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (p, q) in x.iter().zip(y) {
        let (u, v) = (p / nx, q / ny);
        minus += (u - v) * (u - v);
        plus += (u + v) * (u + v);
    }
    2.0 * minus.sqrt().atan2(plus.sqrt())
}

/// Mean per-pixel spectral angle in radians.
///
/// A pixel whose two spectral vectors are both zero contributes 0; exactly one
/// zero vector contributes π/2.
pub fn sam(pair: &ImagePair) -> f64 {
    let channels = pair.original().channels();
    let o = pair.original().values();
    let a = pair.adversarial().values();
    let pixels = o.len() / channels;
    let total: f64 = o
        .chunks_exact(channels)
        .zip(a.chunks_exact(channels))
        .map(|(x, y)| {
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            match (nx == 0.0, ny == 0.0) {
                (true, true) => 0.0,
                (true, false) | (false, true) => FRAC_PI_2,
                (false, false) => unit_angle(x, nx, y, ny),
            }
        })
        .sum();
    total / pixels as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ImageTensor;

    fn pair(h: usize, w: usize, c: usize, o: Vec<f64>, a: Vec<f64>) -> ImagePair {
        ImagePair::new(
            "p",
            ImageTensor::new(h, w, c, o).unwrap(),
            ImageTensor::new(h, w, c, a).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn ergas_single_band_offset() {
        let p = pair(4, 4, 1, vec![100.0; 16], vec![101.0; 16]);
        let v = ergas(&p, &QualityConfig::default());
        assert!((v - 0.25).abs() < 1e-12, "{v}");
    }

    #[test]
    fn ergas_zero_mean_band_uses_epsilon() {
        let p = pair(1, 2, 1, vec![0.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(ergas(&p, &QualityConfig::default()), 0.0);
        let p = pair(1, 2, 1, vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(ergas(&p, &QualityConfig::default()).is_finite());
    }

    #[test]
    fn rase_single_band_offset() {
        let p = pair(3, 3, 1, vec![50.0; 9], vec![52.0; 9]);
        assert!((rase(&p) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rase_zero_reference() {
        let p = pair(1, 1, 3, vec![0.0; 3], vec![1.0, 0.0, 0.0]);
        assert_eq!(rase(&p), f64::INFINITY);
        let p = pair(1, 1, 3, vec![0.0; 3], vec![0.0; 3]);
        assert_eq!(rase(&p), 0.0);
    }

    #[test]
    fn sam_parallel_and_orthogonal() {
        let o: Vec<f64> = (1..=12).map(|v| v as f64 * 5.0).collect();
        let a: Vec<f64> = o.iter().map(|v| v * 2.0).collect();
        assert!(sam(&pair(2, 2, 3, o, a)).abs() < 1e-7);
        let p = pair(1, 1, 3, vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]);
        assert!((sam(&p) - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sam_zero_vectors() {
        let p = pair(1, 2, 3, vec![0.0; 6], vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        // pixel 0: both zero -> 0, pixel 1: one zero -> pi/2
        assert!((sam(&p) - FRAC_PI_2 / 2.0).abs() < 1e-15);
    }

    #[test]
    fn sam_is_symmetric() {
        let o: Vec<f64> = (0..27).map(|i| ((i * 53) % 200) as f64 + 3.0).collect();
        let a: Vec<f64> = (0..27).map(|i| ((i * 31) % 190) as f64 + 1.0).collect();
        let p = pair(3, 3, 3, o, a);
        assert_eq!(sam(&p), sam(&p.swapped()));
    }
}
