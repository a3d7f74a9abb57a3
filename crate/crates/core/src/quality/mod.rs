//! Full-reference image-quality indices.
//!
//! Every function takes the pair as `(original, adversarial)`; the original
//! is the reference. Values that are unbounded on identical inputs (PSNR-B,
//! and RASE on an all-zero reference) are returned as `f64::INFINITY` and only
//! capped at serialization time.

mod psnrb;
mod spectral;
mod structural;
mod vifp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ImagePair, ImageTensor};

pub use psnrb::{blocking_effect_factor, psnrb};
pub use spectral::{ergas, rase, sam};
pub use structural::{scc, uqi};
pub use vifp::vifp;

/// Free parameters of the quality indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub uqi_window: usize,
    pub ergas_ratio: f64,
    pub ergas_mean_epsilon: f64,
    pub vifp_scales: usize,
    pub vifp_sigma_nsq: f64,
    pub psnrb_block: usize,
    pub psnrb_peak: f64,
    pub psnrb_cap_db: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            uqi_window: 8,
            ergas_ratio: 4.0,
            ergas_mean_epsilon: 1e-12,
            vifp_scales: 4,
            vifp_sigma_nsq: 2.0,
            psnrb_block: 8,
            psnrb_peak: 255.0,
            psnrb_cap_db: 100.0,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("uqi_window", self.uqi_window as f64)?;
        positive("ergas_ratio", self.ergas_ratio)?;
        positive("ergas_mean_epsilon", self.ergas_mean_epsilon)?;
        positive("vifp_scales", self.vifp_scales as f64)?;
        positive("vifp_sigma_nsq", self.vifp_sigma_nsq)?;
        positive("psnrb_block", self.psnrb_block as f64)?;
        positive("psnrb_peak", self.psnrb_peak)?;
        positive("psnrb_cap_db", self.psnrb_cap_db)?;
        if self.vifp_scales > 16 {
            return Err(Error::Config("vifp_scales must be at most 16".into()));
        }
        Ok(())
    }
}

/// The eight quality indices of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub mse: f64,
    pub uqi: f64,
    pub ergas: f64,
    pub sam: f64,
    pub scc: f64,
    pub rase: f64,
    pub vifp: f64,
    pub psnrb: f64,
}

/// Mean squared coordinate difference.
pub fn mse(pair: &ImagePair) -> f64 {
    let o = pair.original().values();
    let a = pair.adversarial().values();
    let sum: f64 = o.iter().zip(a).map(|(x, y)| (x - y) * (x - y)).sum();
    sum / o.len() as f64
}

pub fn quality_vector(pair: &ImagePair, cfg: &QualityConfig) -> Result<QualityVector> {
    cfg.validate()?;
    Ok(QualityVector {
        mse: mse(pair),
        uqi: uqi(pair, cfg)?,
        ergas: ergas(pair, cfg),
        sam: sam(pair),
        scc: scc(pair)?,
        rase: rase(pair),
        vifp: vifp(pair, cfg)?,
        psnrb: psnrb(pair, cfg)?,
    })
}

/// A single-channel `rows × cols` raster used by the windowed metrics.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Plane {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn from_channel(image: &ImageTensor, channel: usize) -> Self {
        Self {
            rows: image.height(),
            cols: image.width(),
            data: image.plane(channel),
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn map2(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }
}

pub(crate) fn planes(pair: &ImagePair) -> Vec<(Plane, Plane)> {
    (0..pair.original().channels())
        .map(|c| {
            (
                Plane::from_channel(pair.original(), c),
                Plane::from_channel(pair.adversarial(), c),
            )
        })
        .collect()
}
