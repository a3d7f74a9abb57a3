//! Synthetic perturbation families and a threshold detector.
//!
//! These stand in for real attacks and real defenses so the metric, forest
//! and leave-one-attack-out stages can be exercised end to end. Everything is
//! a pure function of its seeds.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{compute_metric, MetricName};
use crate::quality::QualityConfig;
use crate::tensor::{ImagePair, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    /// i.i.d. uniform noise in `[-magnitude, magnitude]` on every coordinate.
    UniformLinf,
    /// i.i.d. `N(0, magnitude^2)` on every coordinate.
    Gaussian,
    /// `count` distinct coordinates shifted by `±magnitude`.
    SparsePixels,
    /// `magnitude` added to a `count × count` patch in all channels.
    BlockPatch,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 4] = [
        PerturbationKind::UniformLinf,
        PerturbationKind::Gaussian,
        PerturbationKind::SparsePixels,
        PerturbationKind::BlockPatch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PerturbationKind::UniformLinf => "uniform_linf",
            PerturbationKind::Gaussian => "gaussian",
            PerturbationKind::SparsePixels => "sparse_pixels",
            PerturbationKind::BlockPatch => "block_patch",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PerturbationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PerturbationKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.trim())
            .ok_or_else(|| Error::Spec(format!("unknown perturbation family `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub family: PerturbationKind,
    pub magnitude: f64,
    pub count: usize,
    pub seed: u64,
}

/// Applies `spec` to `base`; the adversarial image is clipped to `[0, 255]`.
pub fn generate_pair(base: &ImageTensor, spec: &PerturbationSpec) -> Result<ImagePair> {
    if !(spec.magnitude.is_finite() && spec.magnitude > 0.0) {
        return Err(Error::Spec(format!(
            "magnitude must be positive, got {}",
            spec.magnitude
        )));
    }
    if spec.count == 0 {
        return Err(Error::Spec("count must be at least 1".into()));
    }
    let (h, w, c) = base.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut values = base.values().to_vec();
    match spec.family {
        PerturbationKind::UniformLinf => {
            for v in &mut values {
                *v += rng.random_range(-spec.magnitude..=spec.magnitude);
            }
        }
        PerturbationKind::Gaussian => {
            let normal = Normal::new(0.0, spec.magnitude).map_err(|e| Error::Spec(e.to_string()))?;
            for v in &mut values {
                *v += normal.sample(&mut rng);
            }
        }
        PerturbationKind::SparsePixels => {
            if spec.count > values.len() {
                return Err(Error::Spec(format!(
                    "cannot alter {} coordinates of a {h}x{w}x{c} image",
                    spec.count
                )));
            }
            for i in index::sample(&mut rng, values.len(), spec.count) {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                values[i] += sign * spec.magnitude;
            }
        }
        PerturbationKind::BlockPatch => {
            let side = spec.count;
            if side > h || side > w {
                return Err(Error::Spec(format!(
                    "{side}x{side} patch does not fit a {h}x{w} image"
                )));
            }
            let top = rng.random_range(0..=h - side);
            let left = rng.random_range(0..=w - side);
            for r in top..top + side {
                for col in left..left + side {
                    for ch in 0..c {
                        values[base.index(r, col, ch)] += spec.magnitude;
                    }
                }
            }
        }
    }
    let adversarial = ImageTensor::from_clipped(h, w, c, values)?;
    ImagePair::new(
        format!("{}-{:016x}", spec.family, spec.seed),
        base.clone(),
        adversarial,
    )
}

/// A detector that fires when one metric crosses a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleDetectorSpec {
    pub metric: MetricName,
    pub threshold: f64,
    /// Probability that a verdict is inverted.
    pub flip_noise: f64,
}

impl OracleDetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::Spec("oracle threshold must be finite".into()));
        }
        if !(0.0..0.5).contains(&self.flip_noise) {
            return Err(Error::Spec(format!(
                "flip_noise must be in [0, 0.5), got {}",
                self.flip_noise
            )));
        }
        Ok(())
    }

    /// Noise-free verdict for a metric value (infinite PSNR-B already capped).
    pub fn verdict(&self, value: f64) -> u8 {
        if self.metric.grows_with_perturbation() {
            u8::from(value > self.threshold)
        } else {
            u8::from(value < self.threshold)
        }
    }

    /// Applies the seeded label noise to a verdict.
    pub fn noisy(&self, verdict: u8, sample_seed: u64) -> u8 {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed);
        if rng.random::<f64>() < self.flip_noise {
            1 - verdict
        } else {
            verdict
        }
    }
}

/// Detector verdict for a pair: 1 when the named metric indicates more
/// perturbation than the threshold, flipped with probability `flip_noise`.
pub fn oracle_label(
    pair: &ImagePair,
    spec: &OracleDetectorSpec,
    cfg: &QualityConfig,
    sample_seed: u64,
) -> Result<u8> {
    spec.validate()?;
    let mut value = compute_metric(pair, spec.metric, 0.0, cfg)?;
    if spec.metric == MetricName::Psnrb && value == f64::INFINITY {
        value = cfg.psnrb_cap_db;
    }
    Ok(spec.noisy(spec.verdict(value), sample_seed))
}

/// SplitMix64 finalizer over a seed and a sequence of stream coordinates.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    let mut z = seed;
    for &c in coords {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(c);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

/// A smooth, seeded natural-looking test image with values well inside
/// `[0, 255]`: a few random sinusoidal gratings plus mild pixel noise.
pub fn textured_base(height: usize, width: usize, channels: usize, seed: u64) -> Result<ImageTensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    struct Grating {
        fy: f64,
        fx: f64,
        phase: f64,
        amp: f64,
    }
    let mut values = vec![0.0; height * width * channels];
    for ch in 0..channels {
        let offset = rng.random_range(90.0..165.0);
        let gratings: Vec<Grating> = (0..3)
            .map(|_| Grating {
                fy: rng.random_range(0.05..0.6),
                fx: rng.random_range(0.05..0.6),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
                amp: rng.random_range(8.0..25.0),
            })
            .collect();
        for r in 0..height {
            for c in 0..width {
                let mut v = offset + rng.random_range(-6.0..6.0);
                for g in &gratings {
                    v += g.amp * (g.fy * r as f64 + g.fx * c as f64 + g.phase).sin();
                }
                values[(r * width + c) * channels + ch] = v.round();
            }
        }
    }
    ImageTensor::from_clipped(height, width, channels, values)
}

/// A named family for batch synthesis: magnitudes are drawn uniformly from
/// `[magnitude_min, magnitude_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub name: String,
    pub kind: PerturbationKind,
    pub magnitude_min: f64,
    pub magnitude_max: f64,
    pub count: usize,
}

impl FamilySpec {
    /// Defaults sized for 32×32×3 images so every family spans roughly the
    /// same L2 range (about 50 to 1100).
    pub fn default_for(kind: PerturbationKind) -> Self {
        let (lo, hi, count) = match kind {
            PerturbationKind::UniformLinf => (2.0, 34.0, 1),
            PerturbationKind::Gaussian => (1.0, 20.0, 1),
            PerturbationKind::SparsePixels => (5.0, 110.0, 100),
            PerturbationKind::BlockPatch => (4.0, 80.0, 8),
        };
        Self {
            name: kind.as_str().to_string(),
            kind,
            magnitude_min: lo,
            magnitude_max: hi,
            count,
        }
    }

    pub fn defaults() -> Vec<Self> {
        PerturbationKind::ALL.into_iter().map(Self::default_for).collect()
    }

    pub fn sample(&self, seed: u64) -> PerturbationSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let magnitude = if self.magnitude_max > self.magnitude_min {
            rng.random_range(self.magnitude_min..=self.magnitude_max)
        } else {
            self.magnitude_min
        };
        PerturbationSpec {
            family: self.kind,
            magnitude,
            count: self.count,
            seed: derive_seed(seed, &[1]),
        }
    }
}

/// Parses `[name=]kind[:min-max[:count]]`, e.g. `twin_a=gaussian:1-20`.
impl FromStr for FamilySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = match s.split_once('=') {
            Some((n, r)) => (Some(n.trim()), r),
            None => (None, s),
        };
        let mut parts = rest.split(':');
        let kind: PerturbationKind = parts.next().unwrap_or("").parse()?;
        let mut spec = FamilySpec::default_for(kind);
        if let Some(range) = parts.next() {
            let (lo, hi) = match range.split_once('-') {
                Some((lo, hi)) => (lo, hi),
                None => (range, range),
            };
            let num = |t: &str| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Spec(format!("bad magnitude `{t}` in `{s}`")))
            };
            spec.magnitude_min = num(lo)?;
            spec.magnitude_max = num(hi)?;
        }
        if let Some(count) = parts.next() {
            spec.count = count
                .trim()
                .parse()
                .map_err(|_| Error::Spec(format!("bad count `{count}` in `{s}`")))?;
        }
        if parts.next().is_some() {
            return Err(Error::Spec(format!("too many fields in `{s}`")));
        }
        if let Some(n) = name {
            if n.is_empty() {
                return Err(Error::Spec(format!("empty family name in `{s}`")));
            }
            spec.name = n.to_string();
        }
        if !(spec.magnitude_min > 0.0 && spec.magnitude_max >= spec.magnitude_min) {
            return Err(Error::Spec(format!("invalid magnitude range in `{s}`")));
        }
        if spec.count == 0 {
            return Err(Error::Spec(format!("count must be positive in `{s}`")));
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::compute_norms;

    fn gray() -> ImageTensor {
        ImageTensor::filled(32, 32, 3, 128.0).unwrap()
    }

    fn spec(family: PerturbationKind, magnitude: f64, count: usize, seed: u64) -> PerturbationSpec {
        PerturbationSpec {
            family,
            magnitude,
            count,
            seed,
        }
    }

    #[test]
    fn uniform_linf_is_bounded() {
        let base = textured_base(32, 32, 3, 7).unwrap();
        let pair = generate_pair(&base, &spec(PerturbationKind::UniformLinf, 4.0, 1, 1)).unwrap();
        let n = compute_norms(&pair, 0.0).unwrap();
        assert!(n.linf <= 4.0);
        assert!(n.l0 >= 0.99 * 3072.0);
    }

    #[test]
    fn sparse_pixels_exact_count() {
        let pair = generate_pair(&gray(), &spec(PerturbationKind::SparsePixels, 30.0, 7, 2)).unwrap();
        let n = compute_norms(&pair, 0.0).unwrap();
        assert_eq!(n.l0, 7.0);
        assert_eq!(n.linf, 30.0);
    }

    #[test]
    fn block_patch_covers_patch_in_all_channels() {
        let pair = generate_pair(&gray(), &spec(PerturbationKind::BlockPatch, 20.0, 5, 3)).unwrap();
        let n = compute_norms(&pair, 0.0).unwrap();
        assert_eq!(n.l0, 75.0);
        assert_eq!(n.l1, 75.0 * 20.0);
    }

    #[test]
    fn gaussian_stays_in_range_and_is_deterministic() {
        let s = spec(PerturbationKind::Gaussian, 60.0, 1, 4);
        let a = generate_pair(&gray(), &s).unwrap();
        let b = generate_pair(&gray(), &s).unwrap();
        assert_eq!(a, b);
        assert!(a
            .adversarial()
            .values()
            .iter()
            .all(|v| (0.0..=255.0).contains(v)));
        let c = generate_pair(&gray(), &PerturbationSpec { seed: 5, ..s }).unwrap();
        assert_ne!(a.adversarial(), c.adversarial());
    }

    #[test]
    fn spec_errors() {
        assert!(matches!(
            generate_pair(&gray(), &spec(PerturbationKind::BlockPatch, 5.0, 33, 0)),
            Err(Error::Spec(_))
        ));
        assert!(generate_pair(&gray(), &spec(PerturbationKind::Gaussian, 0.0, 1, 0)).is_err());
        assert!(generate_pair(&gray(), &spec(PerturbationKind::SparsePixels, 5.0, 5000, 0)).is_err());
    }

    #[test]
    fn oracle_examples() {
        let cfg = QualityConfig::default();
        // l2 = 15 from a single coordinate change
        let mut adv = gray().into_values();
        adv[0] += 15.0;
        let pair = ImagePair::new("p", gray(), ImageTensor::new(32, 32, 3, adv).unwrap()).unwrap();
        let det = OracleDetectorSpec {
            metric: MetricName::L2,
            threshold: 10.0,
            flip_noise: 0.0,
        };
        assert_eq!(oracle_label(&pair, &det, &cfg, 0).unwrap(), 1);

        let base = textured_base(32, 32, 3, 1).unwrap();
        let same = ImagePair::new("p", base.clone(), base).unwrap();
        let det = OracleDetectorSpec {
            metric: MetricName::Psnrb,
            threshold: 35.0,
            flip_noise: 0.0,
        };
        assert_eq!(oracle_label(&same, &det, &cfg, 0).unwrap(), 0);
    }

    #[test]
    fn flip_rate_concentrates() {
        let det = OracleDetectorSpec {
            metric: MetricName::Mse,
            threshold: 1.0,
            flip_noise: 0.1,
        };
        let flipped = (0..10_000u64).filter(|&s| det.noisy(0, s) == 1).count();
        let rate = flipped as f64 / 10_000.0;
        assert!((rate - 0.1).abs() <= 0.01, "{rate}");
    }

    #[test]
    fn oracle_rejects_bad_noise() {
        let det = OracleDetectorSpec {
            metric: MetricName::Mse,
            threshold: 1.0,
            flip_noise: 0.5,
        };
        assert!(det.validate().is_err());
    }

    #[test]
    fn disjoint_gaussian_ranges_do_not_overlap_in_l2() {
        let weak: FamilySpec = "gaussian:2-2".parse().unwrap();
        let strong: FamilySpec = "gaussian:40-40".parse().unwrap();
        let l2 = |fam: &FamilySpec, i: u64| {
            let base = textured_base(32, 32, 3, i).unwrap();
            let pair = generate_pair(&base, &fam.sample(i)).unwrap();
            compute_norms(&pair, 0.0).unwrap().l2
        };
        let max_weak = (0..20).map(|i| l2(&weak, i)).fold(0.0, f64::max);
        let min_strong = (0..20).map(|i| l2(&strong, i)).fold(f64::MAX, f64::min);
        assert!(max_weak < min_strong, "{max_weak} vs {min_strong}");
    }

    #[test]
    fn family_spec_parsing() {
        let f: FamilySpec = "twin=gaussian:1-20".parse().unwrap();
        assert_eq!(f.name, "twin");
        assert_eq!(f.kind, PerturbationKind::Gaussian);
        assert_eq!((f.magnitude_min, f.magnitude_max), (1.0, 20.0));
        let f: FamilySpec = "sparse_pixels:30:7".parse().unwrap();
        assert_eq!((f.magnitude_min, f.magnitude_max, f.count), (30.0, 30.0, 7));
        assert_eq!(f.name, "sparse_pixels");
        assert!("laser:1-2".parse::<FamilySpec>().is_err());
        assert!("gaussian:5-1".parse::<FamilySpec>().is_err());
        assert!("gaussian:1-2:3:4".parse::<FamilySpec>().is_err());
    }

    #[test]
    fn textured_base_is_valid_and_seeded() {
        let a = textured_base(16, 16, 3, 9).unwrap();
        assert_eq!(a, textured_base(16, 16, 3, 9).unwrap());
        assert_ne!(a, textured_base(16, 16, 3, 10).unwrap());
        assert!(a.values().iter().all(|v| v.fract() == 0.0));
    }
}
