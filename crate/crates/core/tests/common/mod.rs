#![allow(dead_code, clippy::needless_range_loop)]

//! Brute-force reference formulas and shared fixtures.
//!
//! The oracles work on raw `(h, w, c)` row-major slices and are written
//! straight from the textbook definitions: single-pass sums instead of
//! two-pass moments, `acos` for angles, full 2-D kernels instead of
//! separable ones.

use std::collections::BTreeMap;

use advmetrics::forest::SampleRecord;
use advmetrics::{ImagePair, ImageTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Img<'a> {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub v: &'a [f64],
}

impl Img<'_> {
    pub fn at(&self, r: usize, col: usize, ch: usize) -> f64 {
        self.v[(r * self.w + col) * self.c + ch]
    }
}

pub fn img(t: &ImageTensor) -> Img<'_> {
    let (h, w, c) = t.shape();
    Img {
        h,
        w,
        c,
        v: t.values(),
    }
}

pub fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize, amp: f64) -> ImagePair {
    let o: Vec<f64> = (0..h * w * c)
        .map(|_| rng.random_range(0..=255) as f64)
        .collect();
    let a: Vec<f64> = o
        .iter()
        .map(|v| (v + rng.random_range(-amp..=amp)).round().clamp(0.0, 255.0))
        .collect();
    ImagePair::new(
        "rand",
        ImageTensor::new(h, w, c, o).unwrap(),
        ImageTensor::new(h, w, c, a).unwrap(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(got: f64, want: f64, tol: f64) -> bool {
    if got == want {
        return true;
    }
    (got - want).abs() <= tol * want.abs()
}

// ------------------------------------------------------------------ norms

pub fn norms(x: &Img, y: &Img) -> [f64; 4] {
    let mut l0 = 0.0;
    let mut l1 = 0.0;
    let mut sq = 0.0;
    let mut linf: f64 = 0.0;
    for i in 0..x.v.len() {
        let d = y.v[i] - x.v[i];
        if d != 0.0 {
            l0 += 1.0;
        }
        l1 += d.abs();
        sq += d * d;
        linf = linf.max(d.abs());
    }
    [l0, l1, sq.sqrt(), linf]
}

pub fn mse(x: &Img, y: &Img) -> f64 {
    let s: f64 = x.v.iter().zip(y.v).map(|(a, b)| (a - b).powi(2)).sum();
    s / x.v.len() as f64
}

// ------------------------------------------------------------------ band indices

fn band_rmse_mean(x: &Img, y: &Img, ch: usize) -> (f64, f64) {
    let n = (x.h * x.w) as f64;
    let mut se = 0.0;
    let mut sum = 0.0;
    for r in 0..x.h {
        for c in 0..x.w {
            se += (x.at(r, c, ch) - y.at(r, c, ch)).powi(2);
            sum += x.at(r, c, ch);
        }
    }
    ((se / n).sqrt(), sum / n)
}

pub fn ergas(x: &Img, y: &Img, ratio: f64) -> f64 {
    let mut acc = 0.0;
    for ch in 0..x.c {
        let (rmse, mean) = band_rmse_mean(x, y, ch);
        acc += (rmse / mean).powi(2);
    }
    100.0 / ratio * (acc / x.c as f64).sqrt()
}

pub fn rase(x: &Img, y: &Img) -> f64 {
    let m = x.v.iter().sum::<f64>() / x.v.len() as f64;
    let mut acc = 0.0;
    for ch in 0..x.c {
        acc += band_rmse_mean(x, y, ch).0.powi(2);
    }
    100.0 / m * (acc / x.c as f64).sqrt()
}

pub fn sam(x: &Img, y: &Img) -> f64 {
    let mut total = 0.0;
    for r in 0..x.h {
        for c in 0..x.w {
            let (mut dot, mut nx, mut ny) = (0.0, 0.0, 0.0);
            for ch in 0..x.c {
                dot += x.at(r, c, ch) * y.at(r, c, ch);
                nx += x.at(r, c, ch).powi(2);
                ny += y.at(r, c, ch).powi(2);
            }
            total += match (nx == 0.0, ny == 0.0) {
                (true, true) => 0.0,
                (true, false) | (false, true) => std::f64::consts::FRAC_PI_2,
                _ => (dot / (nx.sqrt() * ny.sqrt())).clamp(-1.0, 1.0).acos(),
            };
        }
    }
    total / (x.h * x.w) as f64
}

// ------------------------------------------------------------------ uqi, scc

pub fn uqi(x: &Img, y: &Img, window: usize) -> f64 {
    let k = window.min(x.h).min(x.w);
    let n = (k * k) as f64;
    let mut total = 0.0;
    let mut count = 0.0;
    for ch in 0..x.c {
        for r0 in 0..=x.h - k {
            for c0 in 0..=x.w - k {
                let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in r0..r0 + k {
                    for c in c0..c0 + k {
                        let (a, b) = (x.at(r, c, ch), y.at(r, c, ch));
                        sx += a;
                        sy += b;
                        sxx += a * a;
                        syy += b * b;
                        sxy += a * b;
                    }
                }
                let (mx, my) = (sx / n, sy / n);
                let vx = sxx / n - mx * mx;
                let vy = syy / n - my * my;
                let cxy = sxy / n - mx * my;
                total += 4.0 * cxy * mx * my / ((vx + vy) * (mx * mx + my * my));
                count += 1.0;
            }
        }
    }
    total / count
}

fn laplacian(x: &Img, ch: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for r in 1..x.h - 1 {
        for c in 1..x.w - 1 {
            out.push(
                4.0 * x.at(r, c, ch)
                    - x.at(r - 1, c, ch)
                    - x.at(r + 1, c, ch)
                    - x.at(r, c - 1, ch)
                    - x.at(r, c + 1, ch),
            );
        }
    }
    out
}

fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let saa: f64 = a.iter().map(|v| v * v).sum();
    let sbb: f64 = b.iter().map(|v| v * v).sum();
    let sab: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    (n * sab - sa * sb) / ((n * saa - sa * sa).sqrt() * (n * sbb - sb * sb).sqrt())
}

pub fn scc(x: &Img, y: &Img) -> f64 {
    (0..x.c)
        .map(|ch| corr(&laplacian(x, ch), &laplacian(y, ch)))
        .sum::<f64>()
        / x.c as f64
}

// ------------------------------------------------------------------ vifp

type Grid = Vec<Vec<f64>>;

fn grid(x: &Img, ch: usize) -> Grid {
    (0..x.h)
        .map(|r| (0..x.w).map(|c| x.at(r, c, ch)).collect())
        .collect()
}

fn kernel2d(n: usize) -> Grid {
    let sigma = n as f64 / 5.0;
    let half = (n as f64 - 1.0) / 2.0;
    let mut k: Grid = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let (u, v) = (i as f64 - half, j as f64 - half);
                    (-(u * u + v * v) / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        })
        .collect();
    let s: f64 = k.iter().flatten().sum();
    k.iter_mut().flatten().for_each(|v| *v /= s);
    k
}

fn conv_valid(g: &Grid, k: &Grid) -> Grid {
    let n = k.len();
    if g.len() < n || g[0].len() < n {
        return Vec::new();
    }
    (0..=g.len() - n)
        .map(|r| {
            (0..=g[0].len() - n)
                .map(|c| {
                    let mut acc = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            acc += g[r + i][c + j] * k[i][j];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

fn zip(a: &Grid, b: &Grid, f: impl Fn(f64, f64) -> f64) -> Grid {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(p, q)| f(*p, *q)).collect())
        .collect()
}

/// Per-channel VIF ratio with the same small-variance guards as the common
/// reference implementation; `None` when no scale fits.
pub fn vifp(x: &Img, y: &Img, scales: usize, sigma_nsq: f64) -> Option<f64> {
    const EPS: f64 = 1e-10;
    let mut any = false;
    let mut total = 0.0;
    for ch in 0..x.c {
        let (mut gx, mut gy) = (grid(x, ch), grid(y, ch));
        let (mut num, mut den) = (0.0, 0.0);
        for s in 1..=scales {
            let n = (1 << (scales - s + 1)) + 1;
            let k = kernel2d(n);
            if s > 1 {
                let down = |g: &Grid| -> Grid {
                    conv_valid(g, &k)
                        .iter()
                        .step_by(2)
                        .map(|row| row.iter().step_by(2).copied().collect())
                        .collect()
                };
                gx = down(&gx);
                gy = down(&gy);
            }
            let mu1 = conv_valid(&gx, &k);
            if mu1.is_empty() {
                continue;
            }
            any = true;
            let mu2 = conv_valid(&gy, &k);
            let e11 = conv_valid(&zip(&gx, &gx, |a, b| a * b), &k);
            let e22 = conv_valid(&zip(&gy, &gy, |a, b| a * b), &k);
            let e12 = conv_valid(&zip(&gx, &gy, |a, b| a * b), &k);
            for r in 0..mu1.len() {
                for c in 0..mu1[0].len() {
                    let (m1, m2) = (mu1[r][c], mu2[r][c]);
                    let mut s1 = (e11[r][c] - m1 * m1).max(0.0);
                    let s2 = (e22[r][c] - m2 * m2).max(0.0);
                    let s12 = e12[r][c] - m1 * m2;
                    let mut g = s12 / (s1 + EPS);
                    let mut sv = s2 - g * s12;
                    if s1 < EPS {
                        g = 0.0;
                        sv = s2;
                        s1 = 0.0;
                    }
                    if s2 < EPS {
                        g = 0.0;
                        sv = 0.0;
                    }
                    if g < 0.0 {
                        sv = s2;
                        g = 0.0;
                    }
                    sv = sv.max(EPS);
                    num += (1.0 + g * g * s1 / (sv + sigma_nsq)).log10();
                    den += (1.0 + s1 / sigma_nsq).log10();
                }
            }
        }
        total += num / den;
    }
    any.then(|| total / x.c as f64)
}

// ------------------------------------------------------------------ psnrb

fn bef_channel(g: &Grid, block: usize) -> f64 {
    let (h, w) = (g.len(), g[0].len());
    // Pixel pairs (c, c+1) straddle a block edge when c+1 is a multiple of block.
    let edge_cols: Vec<usize> = (1..w).filter(|c| c % block == 0).collect();
    let edge_rows: Vec<usize> = (1..h).filter(|r| r % block == 0).collect();
    let mut all = 0.0;
    let mut edge = 0.0;
    for r in 0..h {
        for c in 1..w {
            all += (g[r][c] - g[r][c - 1]).powi(2);
        }
    }
    for r in 1..h {
        for c in 0..w {
            all += (g[r][c] - g[r - 1][c]).powi(2);
        }
    }
    for r in 0..h {
        for &c in &edge_cols {
            edge += (g[r][c] - g[r][c - 1]).powi(2);
        }
    }
    for &r in &edge_rows {
        for c in 0..w {
            edge += (g[r][c] - g[r - 1][c]).powi(2);
        }
    }
    let n_edge = (edge_cols.len() * h + edge_rows.len() * w) as f64;
    let n_all = (h * (w - 1) + (h - 1) * w) as f64;
    let n_inner = n_all - n_edge;
    let d_b = if n_edge > 0.0 { edge / n_edge } else { 0.0 };
    let d_bc = if n_inner > 0.0 { (all - edge) / n_inner } else { 0.0 };
    if d_b <= d_bc {
        return 0.0;
    }
    let eta = (block as f64).ln() / (h.min(w) as f64).ln();
    eta * (d_b - d_bc)
}

pub fn psnrb(x: &Img, y: &Img, block: usize) -> f64 {
    let mut bef = 0.0;
    for ch in 0..x.c {
        bef += (bef_channel(&grid(y, ch), block) - bef_channel(&grid(x, ch), block)).max(0.0);
    }
    bef /= x.c as f64;
    10.0 * (255.0f64.powi(2) / (mse(x, y) + bef)).log10()
}

// ------------------------------------------------------------------ forest fixtures

pub fn record(id: usize, family: &str, feats: &[(&str, f64)], labels: &[(&str, u8)]) -> SampleRecord {
    SampleRecord {
        sample_id: format!("s{id:05}"),
        attack_family: family.to_string(),
        config_id: String::new(),
        features: feats.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        labels: labels
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect::<BTreeMap<_, _>>(),
    }
}
