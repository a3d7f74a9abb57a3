//! Multi-scale pixel-domain visual information fidelity.

use super::{planes, Plane, QualityConfig};
use crate::error::{Error, Result};
use crate::tensor::ImagePair;

const EPS: f64 = 1e-10;

/// Normalized 1-D Gaussian taps; the 2-D kernel is their outer product.
fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size as f64 - 1.0) / 2.0;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - half;
            (-(x * x) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Valid-region separable filtering; empty when the kernel exceeds the plane.
fn filter_valid(p: &Plane, taps: &[f64]) -> Plane {
    let k = taps.len();
    if p.rows < k || p.cols < k {
        return Plane {
            rows: 0,
            cols: 0,
            data: Vec::new(),
        };
    }
    let cols = p.cols - k + 1;
    let rows = p.rows - k + 1;
    let mut horizontal = Vec::with_capacity(p.rows * cols);
    for r in 0..p.rows {
        let row = &p.data[r * p.cols..(r + 1) * p.cols];
        for c in 0..cols {
            horizontal.push(row[c..c + k].iter().zip(taps).map(|(v, t)| v * t).sum::<f64>());
        }
    }
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, t) in taps.iter().enumerate() {
                acc += horizontal[(r + i) * cols + c] * t;
            }
            data.push(acc);
        }
    }
    Plane { rows, cols, data }
}

fn decimate(p: &Plane) -> Plane {
    let rows = p.rows.div_ceil(2);
    let cols = p.cols.div_ceil(2);
    let mut data = Vec::with_capacity(rows * cols);
    for r in (0..p.rows).step_by(2) {
        for c in (0..p.cols).step_by(2) {
            data.push(p.at(r, c));
        }
    }
    Plane { rows, cols, data }
}

/// Numerator and denominator contributions of one scale.
fn scale_terms(x: &Plane, y: &Plane, taps: &[f64], sigma_nsq: f64) -> Option<(f64, f64)> {
    let mu_x = filter_valid(x, taps);
    if mu_x.is_empty() {
        return None;
    }
    let mu_y = filter_valid(y, taps);
    let xx = filter_valid(&x.map2(x, |a, b| a * b), taps);
    let yy = filter_valid(&y.map2(y, |a, b| a * b), taps);
    let xy = filter_valid(&x.map2(y, |a, b| a * b), taps);

    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..mu_x.data.len() {
        let (mx, my) = (mu_x.data[i], mu_y.data[i]);
        let mut sx = (xx.data[i] - mx * mx).max(0.0);
        let sy = (yy.data[i] - my * my).max(0.0);
        let sxy = xy.data[i] - mx * my;

        let mut g = sxy / (sx + EPS);
        let mut sv = sy - g * sxy;
        if sx < EPS {
            g = 0.0;
            sv = sy;
            sx = 0.0;
        }
        if sy < EPS {
            g = 0.0;
            sv = 0.0;
        }
        if g < 0.0 {
            sv = sy;
            g = 0.0;
        }
        if sv <= EPS {
            sv = EPS;
        }
        num += (1.0 + g * g * sx / (sv + sigma_nsq)).log10();
        den += (1.0 + sx / sigma_nsq).log10();
    }
    Some((num, den))
}

/// Pixel-domain VIF, the per-channel ratio of summed information terms
/// averaged over channels.
///
/// Scale `s` of `S` uses a Gaussian window of side `2^(S-s+1) + 1` and
/// standard deviation `side / 5`. From the second scale on, both images are
/// first smoothed with that window and decimated by two. A channel whose
/// reference carries no information (zero denominator) scores 1 when the two
/// channels are identical and 0 otherwise.
pub fn vifp(pair: &ImagePair, cfg: &QualityConfig) -> Result<f64> {
    let scales = cfg.vifp_scales;
    let mut any_scale = false;
    let mut total = 0.0;
    let channel_planes = planes(pair);
    for (x0, y0) in &channel_planes {
        let (mut x, mut y) = (x0.clone(), y0.clone());
        let (mut num, mut den) = (0.0, 0.0);
        for s in 1..=scales {
            let side = (1usize << (scales - s + 1)) + 1;
            let taps = gaussian_taps(side, side as f64 / 5.0);
            if s > 1 {
                x = decimate(&filter_valid(&x, &taps));
                y = decimate(&filter_valid(&y, &taps));
            }
            if let Some((n, d)) = scale_terms(&x, &y, &taps, cfg.vifp_sigma_nsq) {
                any_scale = true;
                num += n;
                den += d;
            }
        }
        total += if den > 0.0 {
            num / den
        } else if x0 == y0 {
            1.0
        } else {
            0.0
        };
    }
    if !any_scale {
        let (h, w, _) = pair.shape();
        return Err(Error::DegenerateInput(format!(
            "vifp: {h}x{w} image too small for {scales} scales"
        )));
    }
    Ok(total / channel_planes.len() as f64)
}
