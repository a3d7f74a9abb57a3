//! Pixel-space Lp distances between an original and a perturbed image.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{diff, ImagePair};

/// L0, L1, L2 and L∞ of the perturbation `adversarial - original`.
///
/// L0 counts changed coordinates (channel entries), not spatial pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormQuadruple {
    pub l0: f64,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
}

/// A coordinate counts towards L0 when `|v_i| > l0_tolerance`.
pub fn compute_norms(pair: &ImagePair, l0_tolerance: f64) -> Result<NormQuadruple> {
    let v = diff(pair)?;
    Ok(norms_of(&v, l0_tolerance))
}

pub(crate) fn norms_of(v: &[f64], l0_tolerance: f64) -> NormQuadruple {
    let mut out = NormQuadruple {
        l0: 0.0,
        l1: 0.0,
        l2: 0.0,
        linf: 0.0,
    };
    let mut sq = 0.0;
    for &d in v {
        let a = d.abs();
        if a > l0_tolerance {
            out.l0 += 1.0;
        }
        out.l1 += a;
        sq += a * a;
        if a > out.linf {
            out.linf = a;
        }
    }
    out.l2 = sq.sqrt();
    out
}
