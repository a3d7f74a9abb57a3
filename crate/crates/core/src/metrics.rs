//! The twelve named perturbation metrics of a pair.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{compute_norms, NormQuadruple};
use crate::quality::{quality_vector, QualityConfig, QualityVector};
use crate::tensor::ImagePair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    L0,
    L1,
    L2,
    Linf,
    Mse,
    Uqi,
    Ergas,
    Sam,
    Scc,
    Rase,
    Vifp,
    Psnrb,
}

impl MetricName {
    /// Column order used by every file format.
    pub const ALL: [MetricName; 12] = [
        MetricName::L0,
        MetricName::L1,
        MetricName::L2,
        MetricName::Linf,
        MetricName::Mse,
        MetricName::Uqi,
        MetricName::Ergas,
        MetricName::Sam,
        MetricName::Scc,
        MetricName::Rase,
        MetricName::Vifp,
        MetricName::Psnrb,
    ];

    pub const NORMS: [MetricName; 4] = [
        MetricName::L0,
        MetricName::L1,
        MetricName::L2,
        MetricName::Linf,
    ];

    pub const QUALITY: [MetricName; 8] = [
        MetricName::Mse,
        MetricName::Uqi,
        MetricName::Ergas,
        MetricName::Sam,
        MetricName::Scc,
        MetricName::Rase,
        MetricName::Vifp,
        MetricName::Psnrb,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::L0 => "l0",
            MetricName::L1 => "l1",
            MetricName::L2 => "l2",
            MetricName::Linf => "linf",
            MetricName::Mse => "mse",
            MetricName::Uqi => "uqi",
            MetricName::Ergas => "ergas",
            MetricName::Sam => "sam",
            MetricName::Scc => "scc",
            MetricName::Rase => "rase",
            MetricName::Vifp => "vifp",
            MetricName::Psnrb => "psnrb",
        }
    }

    /// True when a larger value means a stronger perturbation.
    pub fn grows_with_perturbation(self) -> bool {
        !matches!(
            self,
            MetricName::Uqi | MetricName::Scc | MetricName::Vifp | MetricName::Psnrb
        )
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let name = match lower.as_str() {
            "l_inf" | "linfinity" => "linf",
            "psnr-b" | "psnr_b" => "psnrb",
            "vif" => "vifp",
            other => other,
        };
        MetricName::ALL
            .into_iter()
            .find(|m| m.as_str() == name)
            .ok_or_else(|| Error::MissingFeature(s.to_string()))
    }
}

/// All twelve metric values of one pair, in [`MetricName::ALL`] order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricVector {
    pub norms: NormQuadruple,
    pub quality: QualityVector,
}

impl MetricVector {
    pub fn compute(pair: &ImagePair, l0_tolerance: f64, cfg: &QualityConfig) -> Result<Self> {
        Ok(Self {
            norms: compute_norms(pair, l0_tolerance)?,
            quality: quality_vector(pair, cfg)?,
        })
    }

    pub fn get(&self, name: MetricName) -> f64 {
        let (n, q) = (&self.norms, &self.quality);
        match name {
            MetricName::L0 => n.l0,
            MetricName::L1 => n.l1,
            MetricName::L2 => n.l2,
            MetricName::Linf => n.linf,
            MetricName::Mse => q.mse,
            MetricName::Uqi => q.uqi,
            MetricName::Ergas => q.ergas,
            MetricName::Sam => q.sam,
            MetricName::Scc => q.scc,
            MetricName::Rase => q.rase,
            MetricName::Vifp => q.vifp,
            MetricName::Psnrb => q.psnrb,
        }
    }

    /// Values as written to files: an infinite PSNR-B becomes `psnrb_cap`.
    ///
    /// Fails if any other value is not finite.
    pub fn to_row(&self, psnrb_cap: f64) -> Result<[f64; 12]> {
        let mut row = [0.0; 12];
        for (slot, name) in row.iter_mut().zip(MetricName::ALL) {
            let mut v = self.get(name);
            if name == MetricName::Psnrb && v == f64::INFINITY {
                v = psnrb_cap;
            }
            if !v.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "metric {name} is not finite ({v})"
                )));
            }
            *slot = v;
        }
        Ok(row)
    }
}

/// Computes a single metric, skipping the others.
pub fn compute_metric(
    pair: &ImagePair,
    name: MetricName,
    l0_tolerance: f64,
    cfg: &QualityConfig,
) -> Result<f64> {
    use crate::quality as q;
    Ok(match name {
        MetricName::L0 => compute_norms(pair, l0_tolerance)?.l0,
        MetricName::L1 => compute_norms(pair, l0_tolerance)?.l1,
        MetricName::L2 => compute_norms(pair, l0_tolerance)?.l2,
        MetricName::Linf => compute_norms(pair, l0_tolerance)?.linf,
        MetricName::Mse => q::mse(pair),
        MetricName::Uqi => q::uqi(pair, cfg)?,
        MetricName::Ergas => q::ergas(pair, cfg),
        MetricName::Sam => q::sam(pair),
        MetricName::Scc => q::scc(pair)?,
        MetricName::Rase => q::rase(pair),
        MetricName::Vifp => q::vifp(pair, cfg)?,
        MetricName::Psnrb => q::psnrb(pair, cfg)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for m in MetricName::ALL {
            assert_eq!(m.as_str().parse::<MetricName>().unwrap(), m);
        }
        assert_eq!("PSNR-B".parse::<MetricName>().unwrap(), MetricName::Psnrb);
        assert!("ssim".parse::<MetricName>().is_err());
    }

    #[test]
    fn groups_partition_all() {
        let mut joined: Vec<_> = MetricName::NORMS
            .iter()
            .chain(MetricName::QUALITY.iter())
            .copied()
            .collect();
        joined.sort();
        assert_eq!(joined, MetricName::ALL.to_vec());
    }
}
