//! Random-forest meta-classifier predicting a detector's verdict from
//! perturbation metrics, plus the evaluation procedures around it.
//!
//! Every tree draws its bootstrap sample and its per-split feature subsets
//! from a ChaCha8 stream keyed by `(seed, tree_index)`, so a model is a pure
//! function of its inputs no matter how many threads build it.

mod eval;
mod tree;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{
    evaluate, leave_one_attack_out, pearson, random_split, rank_features, stratified_split,
    Confusion, EvalReport, LooReport,
};
pub use tree::{Node, Tree};

/// One adversarial image: identity, metric features and detector labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub attack_family: String,
    pub config_id: String,
    pub features: BTreeMap<String, f64>,
    /// Detector name to verdict; 1 means detected.
    pub labels: BTreeMap<String, u8>,
}

impl SampleRecord {
    pub fn feature(&self, name: &str) -> Result<f64> {
        self.features
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingFeature(name.to_string()))
    }

    pub fn label(&self, detector: &str) -> Result<u8> {
        self.labels
            .get(detector)
            .copied()
            .ok_or_else(|| Error::UnknownLabel(detector.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyperparams {
    pub n_trees: usize,
    /// `None` grows trees until the leaves are pure.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// `None` means `floor(sqrt(d))`, at least one.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestHyperparams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: None,
            seed: 0,
        }
    }
}

impl ForestHyperparams {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| ((n_features as f64).sqrt().floor() as usize).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub hyperparams: ForestHyperparams,
    pub feature_names: Vec<String>,
    /// Mean decrease in Gini impurity, normalized to sum to 1.
    pub importances: BTreeMap<String, f64>,
    /// Set when every training label was the same; the model then always
    /// predicts that label.
    pub constant_label: Option<u8>,
    pub trees: Vec<Tree>,
}

/// Gathers the feature matrix (row-major, `feature_set` column order) and labels.
pub(crate) fn design_matrix(
    records: &[SampleRecord],
    feature_set: &[String],
    label: &str,
) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut x = Vec::with_capacity(records.len() * feature_set.len());
    let mut y = Vec::with_capacity(records.len());
    for r in records {
        for f in feature_set {
            let v = r.feature(f)?;
            if !v.is_finite() {
                return Err(Error::DegenerateInput(format!(
                    "feature {f} of {} is not finite",
                    r.sample_id
                )));
            }
            x.push(v);
        }
        let l = r.label(label)?;
        if l > 1 {
            return Err(Error::Parse(format!(
                "label {label} of {} is {l}, expected 0 or 1",
                r.sample_id
            )));
        }
        y.push(l);
    }
    Ok((x, y))
}

/// Fits a forest on `records` using the columns in `feature_set` and the
/// detector verdicts under `label`.
///
/// Trees are built on the current rayon pool; the result does not depend on
/// its size.
pub fn train(
    records: &[SampleRecord],
    feature_set: &[String],
    label: &str,
    hp: &ForestHyperparams,
) -> Result<ForestModel> {
    if records.is_empty() {
        return Err(Error::DegenerateInput("no training records".into()));
    }
    if feature_set.is_empty() {
        return Err(Error::DegenerateInput("empty feature set".into()));
    }
    if hp.n_trees == 0 || hp.min_samples_split == 0 || hp.max_depth == Some(0) {
        return Err(Error::Config(
            "n_trees, min_samples_split and max_depth must be positive".into(),
        ));
    }
    let d = feature_set.len();
    let per_split = hp.resolved_features_per_split(d);
    if per_split == 0 || per_split > d {
        return Err(Error::Config(format!(
            "features_per_split must be in 1..={d}, got {per_split}"
        )));
    }
    let (x, y) = design_matrix(records, feature_set, label)?;
    let data = tree::Dataset {
        x: &x,
        y: &y,
        n_features: d,
    };
    let params = tree::TreeParams {
        max_depth: hp.max_depth,
        min_samples_split: hp.min_samples_split,
        features_per_split: per_split,
    };
    let n = records.len();
    let grown: Vec<(Tree, Vec<f64>)> = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
            rng.set_stream(t as u64);
            let sample = tree::bootstrap(n, &mut rng);
            let mut importance = vec![0.0; d];
            let tree = tree::grow(&data, sample, &params, &mut rng, &mut importance);
            (tree, importance)
        })
        .collect();

    let mut totals = vec![0.0; d];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, importance) in grown {
        for (acc, v) in totals.iter_mut().zip(importance) {
            *acc += v;
        }
        trees.push(tree);
    }
    let sum: f64 = totals.iter().sum();
    let importances = feature_set
        .iter()
        .zip(&totals)
        .map(|(name, &v)| (name.clone(), if sum > 0.0 { v / sum } else { 0.0 }))
        .collect();

    let constant_label = if y.iter().all(|&l| l == y[0]) {
        Some(y[0])
    } else {
        None
    };
    Ok(ForestModel {
        hyperparams: *hp,
        feature_names: feature_set.to_vec(),
        importances,
        constant_label,
        trees,
    })
}

impl ForestModel {
    /// Extracts this model's feature row from a name-to-value map.
    pub fn feature_row(&self, features: &BTreeMap<String, f64>) -> Result<Vec<f64>> {
        self.feature_names
            .iter()
            .map(|f| {
                features
                    .get(f)
                    .copied()
                    .ok_or_else(|| Error::MissingFeature(f.clone()))
            })
            .collect()
    }

    /// Number of trees voting for class 1.
    pub fn votes(&self, row: &[f64]) -> usize {
        self.trees
            .iter()
            .filter(|t| t.predict(row) == 1)
            .count()
    }

    /// Majority vote over trees; an even split resolves to 1.
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(2 * self.votes(row) >= self.trees.len())
    }

    pub fn predict(&self, features: &BTreeMap<String, f64>) -> Result<u8> {
        Ok(self.predict_row(&self.feature_row(features)?))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ForestModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn check(&self) -> Result<()> {
        let d = self.feature_names.len();
        if self.trees.is_empty() {
            return Err(Error::Parse("model has no trees".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            let n = tree.nodes.len();
            if n == 0 {
                return Err(Error::Parse(format!("tree {t} is empty")));
            }
            for node in &tree.nodes {
                match *node {
                    Node::Split {
                        feature_index,
                        threshold,
                        left,
                        right,
                    } => {
                        if feature_index >= d || left >= n || right >= n || !threshold.is_finite()
                        {
                            return Err(Error::Parse(format!("tree {t} has an invalid split")));
                        }
                    }
                    Node::Leaf { counts } => {
                        if counts[0] + counts[1] == 0 {
                            return Err(Error::Parse(format!("tree {t} has an empty leaf")));
                        }
                    }
                }
            }
        }
        if self.importances.len() != d
            || self.feature_names.iter().any(|f| !self.importances.contains_key(f))
        {
            return Err(Error::Parse(
                "importances do not match feature names".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record(id: usize, family: &str, feats: &[(&str, f64)], label: u8) -> SampleRecord {
        SampleRecord {
            sample_id: format!("s{id:05}"),
            attack_family: family.to_string(),
            config_id: "c".into(),
            features: feats.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            labels: [("det".to_string(), label)].into_iter().collect(),
        }
    }

    fn separable(n: usize) -> Vec<SampleRecord> {
        (0..n)
            .map(|i| {
                let pos = i % 2 == 1;
                record(i, "A", &[("x", if pos { 10.0 } else { 5.0 })], u8::from(pos))
            })
            .collect()
    }

    #[test]
    fn separable_forest_splits_at_midpoint() {
        let recs = separable(40);
        let model = train(&recs, &["x".into()], "det", &ForestHyperparams::with_seed(3)).unwrap();
        assert_eq!(model.trees.len(), 100);
        for tree in &model.trees {
            assert_eq!(tree.nodes.len(), 3);
            assert!(matches!(tree.nodes[0], Node::Split { threshold, .. } if threshold == 7.5));
        }
        let at = |v: f64| model.predict(&[("x".to_string(), v)].into_iter().collect()).unwrap();
        assert_eq!(at(4.0), 0);
        assert_eq!(at(11.0), 1);
        assert_eq!(model.importances["x"], 1.0);
        assert!(model.constant_label.is_none());
    }

    #[test]
    fn constant_labels_give_constant_model() {
        let recs: Vec<_> = (0..10).map(|i| record(i, "A", &[("x", i as f64)], 1)).collect();
        let model = train(&recs, &["x".into()], "det", &ForestHyperparams::default()).unwrap();
        assert_eq!(model.constant_label, Some(1));
        for v in [-100.0, 0.0, 3.5, 1e9] {
            assert_eq!(model.predict(&[("x".to_string(), v)].into_iter().collect()).unwrap(), 1);
        }
        assert!(model.importances.values().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_feature_and_label() {
        let recs = separable(4);
        assert!(matches!(
            train(&recs, &["nope".into()], "det", &ForestHyperparams::default()),
            Err(Error::MissingFeature(_))
        ));
        assert!(matches!(
            train(&recs, &["x".into()], "other", &ForestHyperparams::default()),
            Err(Error::UnknownLabel(_))
        ));
        let model = train(&recs, &["x".into()], "det", &ForestHyperparams::default()).unwrap();
        assert!(matches!(
            model.predict(&BTreeMap::new()),
            Err(Error::MissingFeature(_))
        ));
    }

    #[test]
    fn rejects_too_many_features_per_split() {
        let recs = separable(4);
        let hp = ForestHyperparams {
            features_per_split: Some(2),
            ..ForestHyperparams::default()
        };
        assert!(matches!(
            train(&recs, &["x".into()], "det", &hp),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let recs: Vec<_> = (0..60)
            .map(|i| {
                let a = (i as f64 * 0.7311).sin() * 3.3;
                let b = (i as f64 * 1.917).cos() / 7.0;
                record(i, "A", &[("a", a), ("b", b)], u8::from(a + b > 0.1))
            })
            .collect();
        let model = train(
            &recs,
            &["a".into(), "b".into()],
            "det",
            &ForestHyperparams {
                n_trees: 7,
                ..ForestHyperparams::default()
            },
        )
        .unwrap();
        let back = ForestModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_corrupt_model() {
        assert!(matches!(ForestModel::from_json("{"), Err(Error::Parse(_))));
        let recs = separable(10);
        let mut model = train(&recs, &["x".into()], "det", &ForestHyperparams::default()).unwrap();
        model.trees[0].nodes[0] = Node::Split {
            feature_index: 5,
            threshold: 1.0,
            left: 1,
            right: 2,
        };
        let text = model.to_json().unwrap();
        assert!(matches!(ForestModel::from_json(&text), Err(Error::Parse(_))));
    }
}
