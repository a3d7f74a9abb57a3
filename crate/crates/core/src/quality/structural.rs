//! Windowed universal quality index and the high-pass spatial correlation.

use super::{planes, Plane, QualityConfig};
use crate::error::{Error, Result};
use crate::tensor::ImagePair;

/// Population first and second moments of two equally sized samples.
#[derive(Debug, Clone, Copy)]
struct Moments {
    mean_x: f64,
    mean_y: f64,
    var_x: f64,
    var_y: f64,
    cov: f64,
}

fn window_moments(x: &Plane, y: &Plane, r0: usize, c0: usize, size: usize) -> Moments {
    let n = (size * size) as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for r in r0..r0 + size {
        for c in c0..c0 + size {
            sx += x.at(r, c);
            sy += y.at(r, c);
        }
    }
    let mean_x = sx / n;
    let mean_y = sy / n;
    let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
    for r in r0..r0 + size {
        for c in c0..c0 + size {
            let dx = x.at(r, c) - mean_x;
            let dy = y.at(r, c) - mean_y;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    Moments {
        mean_x,
        mean_y,
        var_x: vx / n,
        var_y: vy / n,
        cov: cxy / n,
    }
}

fn windows_identical(x: &Plane, y: &Plane, r0: usize, c0: usize, size: usize) -> bool {
    (r0..r0 + size).all(|r| (c0..c0 + size).all(|c| x.at(r, c) == y.at(r, c)))
}

/// Mean Q index over every stride-1 window of every channel.
///
/// The window side is `min(uqi_window, H, W)`. A window with a zero
/// denominator counts as 1 when both windows are identical and is skipped
/// otherwise.
pub fn uqi(pair: &ImagePair, cfg: &QualityConfig) -> Result<f64> {
    let (h, w, _) = pair.shape();
    let size = cfg.uqi_window.min(h).min(w);
    let mut total = 0.0;
    let mut counted = 0usize;
    for (x, y) in planes(pair) {
        for r0 in 0..=h - size {
            for c0 in 0..=w - size {
                let m = window_moments(&x, &y, r0, c0, size);
                let denom =
                    (m.var_x + m.var_y) * (m.mean_x * m.mean_x + m.mean_y * m.mean_y);
                if denom == 0.0 {
                    if windows_identical(&x, &y, r0, c0, size) {
                        total += 1.0;
                        counted += 1;
                    }
                    continue;
                }
                total += 4.0 * m.cov * m.mean_x * m.mean_y / denom;
                counted += 1;
            }
        }
    }
    if counted == 0 {
        return Err(Error::DegenerateInput(
            "uqi: every window has a zero denominator".into(),
        ));
    }
    Ok(total / counted as f64)
}

const LAPLACIAN: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]];

fn high_pass(p: &Plane) -> Plane {
    let rows = p.rows - 2;
    let cols = p.cols - 2;
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut acc = 0.0;
            for (i, k_row) in LAPLACIAN.iter().enumerate() {
                for (j, k) in k_row.iter().enumerate() {
                    acc += k * p.at(r + i, c + j);
                }
            }
            data.push(acc);
        }
    }
    Plane { rows, cols, data }
}

/// Pearson correlation of Laplacian-filtered channels, averaged over channels.
///
/// A channel with a zero-variance filtered signal contributes 1 when both
/// filtered signals are identical and 0 otherwise.
pub fn scc(pair: &ImagePair) -> Result<f64> {
    let (h, w, c) = pair.shape();
    if h < 3 || w < 3 {
        return Err(Error::DegenerateInput(format!(
            "scc needs at least 3x3 pixels, got {h}x{w}"
        )));
    }
    let total: f64 = planes(pair)
        .iter()
        .map(|(x, y)| {
            let fx = high_pass(x);
            let fy = high_pass(y);
            let n = fx.data.len() as f64;
            let mx = fx.data.iter().sum::<f64>() / n;
            let my = fy.data.iter().sum::<f64>() / n;
            let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
            for (a, b) in fx.data.iter().zip(&fy.data) {
                vx += (a - mx) * (a - mx);
                vy += (b - my) * (b - my);
                cxy += (a - mx) * (b - my);
            }
            if vx == 0.0 || vy == 0.0 {
                if fx.data == fy.data {
                    1.0
                } else {
                    0.0
                }
            } else {
                (cxy / (vx.sqrt() * vy.sqrt())).clamp(-1.0, 1.0)
            }
        })
        .sum();
    Ok(total / c as f64)
}
