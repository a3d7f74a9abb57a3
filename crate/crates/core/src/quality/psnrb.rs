//! PSNR penalized by the blocking artifacts a perturbation introduces.

use super::{mse, planes, Plane, QualityConfig};
use crate::error::{Error, Result};
use crate::tensor::ImagePair;

/// Blocking-effect factor of one channel for block size `block`.
///
/// Adjacent horizontal and vertical pixel pairs that straddle a block edge
/// feed `D_B`; all other adjacent pairs feed `D_Bc`. Both are means of the
/// squared differences (0 when no such pair exists).
fn channel_bef(p: &Plane, block: usize) -> f64 {
    let (mut boundary, mut nb) = (0.0, 0usize);
    let (mut inner, mut ni) = (0.0, 0usize);
    let mut visit = |d: f64, on_edge: bool| {
        if on_edge {
            boundary += d * d;
            nb += 1;
        } else {
            inner += d * d;
            ni += 1;
        }
    };
    for r in 0..p.rows {
        for c in 0..p.cols.saturating_sub(1) {
            visit(p.at(r, c) - p.at(r, c + 1), (c + 1) % block == 0);
        }
    }
    for r in 0..p.rows.saturating_sub(1) {
        for c in 0..p.cols {
            visit(p.at(r, c) - p.at(r + 1, c), (r + 1) % block == 0);
        }
    }
    let d_b = if nb > 0 { boundary / nb as f64 } else { 0.0 };
    let d_bc = if ni > 0 { inner / ni as f64 } else { 0.0 };
    let short_side = p.rows.min(p.cols);
    if d_b <= d_bc || short_side < 2 {
        return 0.0;
    }
    let eta = (block as f64).log2() / (short_side as f64).log2();
    eta * (d_b - d_bc)
}

/// Blocking-effect factor added by the perturbation, averaged over channels.
///
/// Per channel this is `max(BEF(adversarial) - BEF(original), 0)`, so a
/// reference that is itself blocky (or merely textured along the block grid)
/// is not penalized and identical pairs score 0.
pub fn blocking_effect_factor(pair: &ImagePair, block: usize) -> f64 {
    let ps = planes(pair);
    ps.iter()
        .map(|(x, y)| (channel_bef(y, block) - channel_bef(x, block)).max(0.0))
        .sum::<f64>()
        / ps.len() as f64
}

/// `10 log10(L^2 / (MSE + BEF))`, or `f64::INFINITY` when that sum is zero.
pub fn psnrb(pair: &ImagePair, cfg: &QualityConfig) -> Result<f64> {
    let (h, w, _) = pair.shape();
    if h < cfg.psnrb_block || w < cfg.psnrb_block {
        return Err(Error::DegenerateInput(format!(
            "psnrb: {h}x{w} image smaller than one {0}x{0} block",
            cfg.psnrb_block
        )));
    }
    let mse_b = mse(pair) + blocking_effect_factor(pair, cfg.psnrb_block);
    if mse_b == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (cfg.psnrb_peak * cfg.psnrb_peak / mse_b).log10())
}
