use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::files::{
    detector_name, read_manifest, read_matrix, write_atomically, write_manifest, write_matrix,
    ManifestRow, MetricMatrixRow,
};
use crate::datagen::{
    derive_seed, generate_pair, textured_base, FamilySpec, OracleDetectorSpec,
};
use crate::error::{Error, Result};
use crate::forest::{
    evaluate, leave_one_attack_out, pearson, random_split, rank_features, stratified_split, train,
    EvalReport, ForestHyperparams, ForestModel, LooReport, SampleRecord,
};
use crate::metrics::{compute_metric, MetricName, MetricVector};
use crate::quality::QualityConfig;
use crate::tensor::{load_png, save_png, ImagePair, ImageTensor};

/// Runs `f` on a dedicated rayon pool with `jobs` worker threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    Ok(pool.install(f))
}

/// Which metric columns feed the forest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FeatureSelection {
    Norms,
    Quality,
    All,
    Explicit(Vec<MetricName>),
}

impl FeatureSelection {
    pub fn metrics(&self) -> Vec<MetricName> {
        match self {
            FeatureSelection::Norms => MetricName::NORMS.to_vec(),
            FeatureSelection::Quality => MetricName::QUALITY.to_vec(),
            FeatureSelection::All => MetricName::ALL.to_vec(),
            FeatureSelection::Explicit(list) => list.clone(),
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.metrics().iter().map(|m| m.as_str().to_string()).collect()
    }
}

impl FromStr for FeatureSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "norms" => Ok(FeatureSelection::Norms),
            "quality" => Ok(FeatureSelection::Quality),
            "all" => Ok(FeatureSelection::All),
            list => {
                let mut metrics: Vec<MetricName> = list
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<_>>()?;
                let before = metrics.len();
                metrics.sort();
                metrics.dedup();
                if metrics.len() != before {
                    return Err(Error::Config(format!("duplicate feature in `{list}`")));
                }
                Ok(FeatureSelection::Explicit(metrics))
            }
        }
    }
}

impl fmt::Display for FeatureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSelection::Norms => f.write_str("norms"),
            FeatureSelection::Quality => f.write_str("quality"),
            FeatureSelection::All => f.write_str("all"),
            FeatureSelection::Explicit(_) => f.write_str(&self.names().join(",")),
        }
    }
}

pub fn load_records(matrix: impl AsRef<Path>) -> Result<Vec<SampleRecord>> {
    Ok(read_matrix(matrix)?
        .iter()
        .map(MetricMatrixRow::to_record)
        .collect())
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone)]
pub struct MetricsOptions {
    pub manifest: PathBuf,
    pub out: PathBuf,
    pub jobs: usize,
    pub l0_tolerance: f64,
    pub quality: QualityConfig,
}

fn metrics_row(
    row: &ManifestRow,
    base: &Path,
    l0_tolerance: f64,
    cfg: &QualityConfig,
) -> Result<MetricMatrixRow> {
    let original = load_png(base.join(&row.original_path))?;
    let adversarial = load_png(base.join(&row.adversarial_path))?;
    let pair = ImagePair::new(row.pair_id.clone(), original, adversarial)?;
    let metrics = MetricVector::compute(&pair, l0_tolerance, cfg)?.to_row(cfg.psnrb_cap_db)?;
    Ok(MetricMatrixRow {
        pair_id: row.pair_id.clone(),
        attack_family: row.attack_family.clone(),
        config_id: row.config_id.clone(),
        metrics,
        labels: row.labels.clone(),
    })
}

/// Computes the metric matrix of a manifest and writes it sorted by pair id.
///
/// Image paths are resolved relative to the manifest's directory. If any
/// row fails nothing is written and every failure is reported.
pub fn cmd_metrics(opts: &MetricsOptions) -> Result<Vec<MetricMatrixRow>> {
    opts.quality.validate()?;
    if opts.l0_tolerance.is_nan() || opts.l0_tolerance < 0.0 {
        return Err(Error::Config("l0 tolerance must be non-negative".into()));
    }
    let manifest = read_manifest(&opts.manifest)?;
    let base = opts
        .manifest
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let results: Vec<Result<MetricMatrixRow>> = with_jobs(opts.jobs, || {
        manifest
            .par_iter()
            .map(|row| metrics_row(row, &base, opts.l0_tolerance, &opts.quality))
            .collect()
    })?;
    let mut rows = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (row, result) in manifest.iter().zip(results) {
        match result {
            Ok(r) => rows.push(r),
            Err(e) => failures.push(format!("{}: {e}", row.pair_id)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Rows(failures));
    }
    rows.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    write_atomically(&opts.out, |tmp| write_matrix(tmp, &rows))?;
    Ok(rows)
}

// ---------------------------------------------------------------- corr

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrRow {
    pub metric: MetricName,
    /// `None` when either series has zero variance.
    pub r: Option<f64>,
}

pub fn correlations(records: &[SampleRecord], label: &str) -> Result<Vec<CorrRow>> {
    let label = detector_name(label);
    let y: Vec<f64> = records
        .iter()
        .map(|r| r.label(label).map(f64::from))
        .collect::<Result<_>>()?;
    MetricName::ALL
        .iter()
        .map(|&m| {
            let x: Vec<f64> = records
                .iter()
                .map(|r| r.feature(m.as_str()))
                .collect::<Result<_>>()?;
            let r = match pearson(&x, &y) {
                Ok(r) => Some(r),
                Err(Error::DegenerateInput(_)) => None,
                Err(e) => return Err(e),
            };
            Ok(CorrRow { metric: m, r })
        })
        .collect()
}

/// Pearson r of every metric column against one detector's labels.
pub fn cmd_corr(matrix: impl AsRef<Path>, label: &str) -> Result<Vec<CorrRow>> {
    let records = load_records(matrix)?;
    if let Some(first) = records.first() {
        first.label(detector_name(label))?;
    }
    correlations(&records, label)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub matrix: PathBuf,
    pub label: String,
    pub features: FeatureSelection,
    pub train_fraction: f64,
    pub stratified: bool,
    pub hyperparams: ForestHyperparams,
    pub model_out: Option<PathBuf>,
    pub jobs: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: EvalReport,
    pub model: ForestModel,
}

/// Splits (seeded by `hp.seed`), trains on the first part and evaluates on
/// the held-out part.
pub fn train_and_evaluate(
    records: &[SampleRecord],
    features: &[String],
    label: &str,
    train_fraction: f64,
    stratified: bool,
    hp: &ForestHyperparams,
) -> Result<TrainOutcome> {
    let label = detector_name(label);
    let (train_set, test_set) = if stratified {
        stratified_split(records, train_fraction, label, hp.seed)?
    } else {
        random_split(records, train_fraction, hp.seed)?
    };
    let model = train(&train_set, features, label, hp)?;
    let report = evaluate(&model, &test_set, label)?;
    Ok(TrainOutcome { report, model })
}

pub fn cmd_train(opts: &TrainOptions) -> Result<TrainOutcome> {
    let records = load_records(&opts.matrix)?;
    let features = opts.features.names();
    let outcome = with_jobs(opts.jobs, || {
        train_and_evaluate(
            &records,
            &features,
            &opts.label,
            opts.train_fraction,
            opts.stratified,
            &opts.hyperparams,
        )
    })??;
    if let Some(path) = &opts.model_out {
        outcome.model.save(path)?;
    }
    Ok(outcome)
}

// ---------------------------------------------------------------- loo

#[derive(Debug, Clone)]
pub struct LooOptions {
    pub matrix: PathBuf,
    pub labels: Vec<String>,
    pub features: FeatureSelection,
    pub hyperparams: ForestHyperparams,
    pub jobs: usize,
}

/// Leave-one-attack-out reports, one per requested detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooTable {
    pub labels: Vec<String>,
    pub reports: Vec<LooReport>,
}

impl LooTable {
    pub fn families(&self) -> Vec<String> {
        self.reports
            .first()
            .map(|r| r.per_attack.keys().cloned().collect())
            .unwrap_or_default()
    }
}

pub fn cmd_loo(opts: &LooOptions) -> Result<LooTable> {
    if opts.labels.is_empty() {
        return Err(Error::Config("at least one label is required".into()));
    }
    let records = load_records(&opts.matrix)?;
    let features = opts.features.names();
    let labels: Vec<String> = opts
        .labels
        .iter()
        .map(|l| detector_name(l).to_string())
        .collect();
    let reports = with_jobs(opts.jobs, || {
        labels
            .iter()
            .map(|l| leave_one_attack_out(&records, &features, l, &opts.hyperparams))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(LooTable { labels, reports })
}

// ---------------------------------------------------------------- importance

pub fn cmd_importance(model: impl AsRef<Path>) -> Result<Vec<(String, f64)>> {
    Ok(rank_features(&ForestModel::load(model)?))
}

// ---------------------------------------------------------------- synth

/// Where original images come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BaseSource {
    /// Seeded textured images, one per pair.
    Texture,
    /// Flat mid-gray (128) images.
    Gray,
    /// PNG files of a directory, used in file-name order and cycled.
    Dir(PathBuf),
}

impl FromStr for BaseSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "texture" => BaseSource::Texture,
            "gray" | "grey" => BaseSource::Gray,
            dir => BaseSource::Dir(PathBuf::from(dir)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Value(f64),
    /// Median of the metric over the generated set, which balances the classes.
    Median,
}

/// A named oracle detector: `name=metric:threshold[:flip_noise]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub name: String,
    pub metric: MetricName,
    pub threshold: Threshold,
    pub flip_noise: f64,
}

impl FromStr for DetectorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once('=')
            .ok_or_else(|| Error::Spec(format!("detector `{s}` must look like name=metric:threshold")))?;
        let name = name.trim();
        if name.is_empty() || name.contains(',') {
            return Err(Error::Spec(format!("bad detector name in `{s}`")));
        }
        let mut parts = rest.split(':');
        let metric: MetricName = parts
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|_| Error::Spec(format!("unknown metric in `{s}`")))?;
        let threshold = match parts.next().map(str::trim) {
            None | Some("median") => Threshold::Median,
            Some(t) => Threshold::Value(
                t.parse()
                    .map_err(|_| Error::Spec(format!("bad threshold `{t}` in `{s}`")))?,
            ),
        };
        let flip_noise = match parts.next() {
            None => 0.0,
            Some(f) => f
                .trim()
                .parse()
                .map_err(|_| Error::Spec(format!("bad flip noise `{f}` in `{s}`")))?,
        };
        if parts.next().is_some() {
            return Err(Error::Spec(format!("too many fields in `{s}`")));
        }
        let spec = DetectorSpec {
            name: name.to_string(),
            metric,
            threshold,
            flip_noise,
        };
        spec.oracle(0.0).validate()?;
        Ok(spec)
    }
}

impl DetectorSpec {
    fn oracle(&self, threshold: f64) -> OracleDetectorSpec {
        OracleDetectorSpec {
            metric: self.metric,
            threshold,
            flip_noise: self.flip_noise,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub out_dir: PathBuf,
    pub families: Vec<FamilySpec>,
    pub per_family: usize,
    pub base: BaseSource,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub seed: u64,
    pub detectors: Vec<DetectorSpec>,
    pub quality: QualityConfig,
    pub jobs: usize,
}

impl SynthOptions {
    /// Four default families, 32×32×3 textured bases and one detector
    /// thresholding MSE at its median.
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            families: FamilySpec::defaults(),
            per_family: 250,
            base: BaseSource::Texture,
            height: 32,
            width: 32,
            channels: 3,
            seed: 0,
            detectors: vec![DetectorSpec {
                name: "oracle".into(),
                metric: MetricName::Mse,
                threshold: Threshold::Median,
                flip_noise: 0.0,
            }],
            quality: QualityConfig::default(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub manifest: PathBuf,
    pub rows: usize,
    /// Resolved threshold per detector.
    pub thresholds: BTreeMap<String, f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn load_bases(dir: &Path) -> Result<Vec<ImageTensor>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Spec(format!("no PNG files in {}", dir.display())));
    }
    paths.iter().map(load_png).collect()
}

struct SynthSample {
    row: ManifestRow,
    pair: ImagePair,
    seed: u64,
    values: Vec<f64>,
}

/// Generates `per_family` pairs per family, writes them as PNGs under
/// `out_dir/images/` and a `manifest.csv` with oracle labels.
///
/// Adversarial images are rounded to integers before labeling, so labels
/// describe exactly the pixels on disk.
pub fn cmd_synth(opts: &SynthOptions) -> Result<SynthSummary> {
    opts.quality.validate()?;
    if opts.families.is_empty() || opts.per_family == 0 {
        return Err(Error::Spec("need at least one family and one pair per family".into()));
    }
    if opts.detectors.is_empty() {
        return Err(Error::Spec("need at least one detector".into()));
    }
    let mut names: Vec<&str> = opts.families.iter().map(|f| f.name.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    if names.len() != opts.families.len() {
        return Err(Error::Spec("family names must be unique".into()));
    }
    let dir_bases = match &opts.base {
        BaseSource::Dir(dir) => Some(load_bases(dir)?),
        _ => None,
    };
    let images = opts.out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;

    let jobs: Vec<(usize, usize)> = (0..opts.families.len())
        .flat_map(|f| (0..opts.per_family).map(move |i| (f, i)))
        .collect();
    let samples: Vec<Result<SynthSample>> = with_jobs(opts.jobs, || {
        jobs.par_iter()
            .enumerate()
            .map(|(global, &(f, i))| {
                let family = &opts.families[f];
                let seed = derive_seed(opts.seed, &[f as u64, i as u64]);
                let base = match (&opts.base, &dir_bases) {
                    (_, Some(bases)) => bases[global % bases.len()].clone(),
                    (BaseSource::Gray, _) => {
                        ImageTensor::filled(opts.height, opts.width, opts.channels, 128.0)?
                    }
                    _ => textured_base(
                        opts.height,
                        opts.width,
                        opts.channels,
                        derive_seed(seed, &[0]),
                    )?,
                };
                let spec = family.sample(derive_seed(seed, &[2]));
                let generated = generate_pair(&base, &spec)?;
                let pair_id = format!("{}-{i:05}", family.name);
                let pair = ImagePair::new(
                    pair_id.clone(),
                    base,
                    generated.adversarial().quantized(),
                )?;
                let values = opts
                    .detectors
                    .iter()
                    .map(|d| {
                        let v = compute_metric(&pair, d.metric, 0.0, &opts.quality)?;
                        Ok(if d.metric == MetricName::Psnrb && v == f64::INFINITY {
                            opts.quality.psnrb_cap_db
                        } else {
                            v
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let row = ManifestRow {
                    original_path: PathBuf::from("images").join(format!("{pair_id}_orig.png")),
                    adversarial_path: PathBuf::from("images").join(format!("{pair_id}_adv.png")),
                    pair_id,
                    attack_family: family.name.clone(),
                    config_id: format!("{}:m={:.4}:k={}", spec.family, spec.magnitude, spec.count),
                    labels: BTreeMap::new(),
                };
                Ok(SynthSample {
                    row,
                    pair,
                    seed,
                    values,
                })
            })
            .collect()
    })?;
    let mut samples: Vec<SynthSample> = samples.into_iter().collect::<Result<_>>()?;

    let mut thresholds = BTreeMap::new();
    for (d, det) in opts.detectors.iter().enumerate() {
        let threshold = match det.threshold {
            Threshold::Value(t) => t,
            Threshold::Median => {
                median(&samples.iter().map(|s| s.values[d]).collect::<Vec<_>>())
            }
        };
        let oracle = det.oracle(threshold);
        oracle.validate()?;
        for s in &mut samples {
            let label = oracle.noisy(oracle.verdict(s.values[d]), derive_seed(s.seed, &[3, d as u64]));
            s.row.labels.insert(det.name.clone(), label);
        }
        thresholds.insert(det.name.clone(), threshold);
    }

    with_jobs(opts.jobs, || {
        samples.par_iter().try_for_each(|s| {
            save_png(s.pair.original(), opts.out_dir.join(&s.row.original_path))?;
            save_png(s.pair.adversarial(), opts.out_dir.join(&s.row.adversarial_path))
        })
    })??;
    let rows: Vec<ManifestRow> = samples.into_iter().map(|s| s.row).collect();
    let manifest = opts.out_dir.join("manifest.csv");
    write_manifest(&manifest, &rows)?;
    Ok(SynthSummary {
        manifest,
        rows: rows.len(),
        thresholds,
    })
}
