use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A node of a flattened binary tree. Children are indices into
/// [`Tree::nodes`]; samples with `x[feature_index] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Training counts of class 0 and class 1.
        counts: [u64; 2],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Majority class of the leaf reached by `row`; ties go to class 1.
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature_index] <= *threshold {
                        *left
                    } else {
                        *right
                    };
                }
                Node::Leaf { counts } => return u8::from(counts[1] >= counts[0]),
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut deepest = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((at, d)) = stack.pop() {
            deepest = deepest.max(d);
            if let Node::Split { left, right, .. } = self.nodes[at] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        deepest
    }
}

/// Training rows in row-major layout plus binary targets.
pub(crate) struct Dataset<'a> {
    pub x: &'a [f64],
    pub y: &'a [u8],
    pub n_features: usize,
}

impl Dataset<'_> {
    #[inline]
    fn value(&self, sample: usize, feature: usize) -> f64 {
        self.x[sample * self.n_features + feature]
    }
}

pub(crate) struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: usize,
}

/// `n * gini(n0, n1)`, the count-weighted impurity of a node.
#[inline]
fn weighted_gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        n - (n0 * n0 + n1 * n1) / n
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

fn best_split(
    data: &Dataset<'_>,
    samples: &[usize],
    features: &[usize],
    counts: [u64; 2],
) -> Option<Split> {
    let parent = weighted_gini(counts[0] as f64, counts[1] as f64);
    let mut best: Option<Split> = None;
    let mut column: Vec<(f64, u8)> = Vec::with_capacity(samples.len());
    for &f in features {
        column.clear();
        column.extend(samples.iter().map(|&s| (data.value(s, f), data.y[s])));
        column.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left = [0.0f64; 2];
        for i in 0..column.len() - 1 {
            left[usize::from(column[i].1)] += 1.0;
            let (lo, hi) = (column[i].0, column[i + 1].0);
            if lo == hi {
                continue;
            }
            let right = [counts[0] as f64 - left[0], counts[1] as f64 - left[1]];
            let decrease = (parent
                - weighted_gini(left[0], left[1])
                - weighted_gini(right[0], right[1]))
            .max(0.0);
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    decrease,
                });
            }
        }
    }
    best
}

/// Grows one tree on `samples` (a bootstrap draw, duplicates allowed) and
/// adds its impurity decreases into `importance`.
pub(crate) fn grow(
    data: &Dataset<'_>,
    samples: Vec<usize>,
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
    importance: &mut [f64],
) -> Tree {
    struct Pending {
        node: usize,
        samples: Vec<usize>,
        depth: usize,
    }

    let mut nodes = vec![Node::Leaf { counts: [0, 0] }];
    let mut stack = vec![Pending {
        node: 0,
        samples,
        depth: 0,
    }];
    while let Some(task) = stack.pop() {
        let mut counts = [0u64; 2];
        for &s in &task.samples {
            counts[usize::from(data.y[s])] += 1;
        }
        let stop = counts[0] == 0
            || counts[1] == 0
            || task.samples.len() < params.min_samples_split
            || params.max_depth.is_some_and(|d| task.depth >= d);
        let split = if stop {
            None
        } else {
            let mut features = index::sample(rng, data.n_features, params.features_per_split)
                .into_vec();
            features.sort_unstable();
            best_split(data, &task.samples, &features, counts)
        };
        let Some(split) = split else {
            nodes[task.node] = Node::Leaf { counts };
            continue;
        };
        importance[split.feature] += split.decrease;
        let (left, right): (Vec<usize>, Vec<usize>) = task
            .samples
            .iter()
            .partition(|&&s| data.value(s, split.feature) <= split.threshold);
        let left_id = nodes.len();
        let right_id = left_id + 1;
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes.push(Node::Leaf { counts: [0, 0] });
        nodes[task.node] = Node::Split {
            feature_index: split.feature,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
        };
        stack.push(Pending {
            node: right_id,
            samples: right,
            depth: task.depth + 1,
        });
        stack.push(Pending {
            node: left_id,
            samples: left,
            depth: task.depth + 1,
        });
    }
    Tree { nodes }
}

pub(crate) fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}
