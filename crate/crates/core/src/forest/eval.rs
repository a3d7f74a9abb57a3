use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{design_matrix, train, ForestHyperparams, ForestModel, SampleRecord};
use crate::error::{Error, Result};

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "pearson needs two equal-length series of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateInput("zero variance series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn check_fraction(train_fraction: f64) -> Result<()> {
    if train_fraction > 0.0 && train_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )))
    }
}

fn partition(records: &[SampleRecord], in_train: &[bool]) -> (Vec<SampleRecord>, Vec<SampleRecord>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (r, &t) in records.iter().zip(in_train) {
        if t {
            train.push(r.clone());
        } else {
            test.push(r.clone());
        }
    }
    (train, test)
}

/// Seeded split keeping each class's train share at `train_fraction`.
///
/// Each class contributes `round(fraction * n_class)` records to training,
/// clamped so that both sides receive at least one. Records keep their input
/// order within each side.
pub fn stratified_split(
    records: &[SampleRecord],
    train_fraction: f64,
    label: &str,
    seed: u64,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    check_fraction(train_fraction)?;
    if records.is_empty() {
        return Err(Error::DegenerateInput("no records to split".into()));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, r) in records.iter().enumerate() {
        let l = r.label(label)?;
        by_class
            .get_mut(usize::from(l))
            .ok_or_else(|| Error::Parse(format!("label {l} is not binary")))?
            .push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_train = vec![false; records.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        if members.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "class {class} of {label} has {} member(s), need at least 2",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let k = ((train_fraction * members.len() as f64).round() as usize)
            .clamp(1, members.len() - 1);
        for &i in &members[..k] {
            in_train[i] = true;
        }
    }
    Ok(partition(records, &in_train))
}

/// Seeded split ignoring labels: `round(fraction * n)` records go to training.
pub fn random_split(
    records: &[SampleRecord],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<SampleRecord>, Vec<SampleRecord>)> {
    check_fraction(train_fraction)?;
    if records.len() < 2 {
        return Err(Error::DegenerateInput("need at least 2 records to split".into()));
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = ((train_fraction * records.len() as f64).round() as usize).clamp(1, records.len() - 1);
    let mut in_train = vec![false; records.len()];
    for &i in &order[..k] {
        in_train[i] = true;
    }
    Ok(partition(records, &in_train))
}

/// Confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub confusion: Confusion,
    pub n_test: usize,
    pub feature_set: Vec<String>,
}

pub fn evaluate(model: &ForestModel, test: &[SampleRecord], label: &str) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::DegenerateInput("empty test set".into()));
    }
    let (x, y) = design_matrix(test, &model.feature_names, label)?;
    let d = model.feature_names.len();
    let mut confusion = Confusion::default();
    for (row, &truth) in x.chunks_exact(d).zip(&y) {
        match (model.predict_row(row), truth) {
            (1, 1) => confusion.tp += 1,
            (1, _) => confusion.fp += 1,
            (_, 1) => confusion.fn_ += 1,
            _ => confusion.tn += 1,
        }
    }
    Ok(EvalReport {
        accuracy: (confusion.tp + confusion.tn) as f64 / test.len() as f64,
        confusion,
        n_test: test.len(),
        feature_set: model.feature_names.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooReport {
    pub per_attack: BTreeMap<String, EvalReport>,
}

/// Holds out each attack family in turn: trains on all other families and
/// evaluates on the held-out one.
pub fn leave_one_attack_out(
    records: &[SampleRecord],
    feature_set: &[String],
    label: &str,
    hp: &ForestHyperparams,
) -> Result<LooReport> {
    let families: BTreeSet<&str> = records.iter().map(|r| r.attack_family.as_str()).collect();
    if families.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "leave-one-attack-out needs at least 2 attack families, got {}",
            families.len()
        )));
    }
    let mut per_attack = BTreeMap::new();
    for family in families {
        let (test, train_set): (Vec<SampleRecord>, Vec<SampleRecord>) = records
            .iter()
            .cloned()
            .partition(|r| r.attack_family == family);
        let mut classes = BTreeSet::new();
        for r in &train_set {
            classes.insert(r.label(label)?);
        }
        if classes.len() < 2 {
            return Err(Error::DegenerateInput(format!(
                "training set without {family} has a single class"
            )));
        }
        let model = train(&train_set, feature_set, label, hp)?;
        per_attack.insert(family.to_string(), evaluate(&model, &test, label)?);
    }
    Ok(LooReport { per_attack })
}

/// Features by descending importance, ties broken by name.
pub fn rank_features(model: &ForestModel) -> Vec<(String, f64)> {
    let mut ranked: Vec<(String, f64)> = model
        .importances
        .iter()
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}
