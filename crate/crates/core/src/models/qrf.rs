//! Quantile regression forest: bootstrap regression trees whose leaves keep
//! every training target; predictions are quantiles of the leaf-weighted
//! empirical distribution.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{HourlySample, Timestamp};
use crate::seed;

use super::{
    daytime, full_features, FeatureSet, Forecaster, ModelDescription, ModelError, ModelKind,
    ModelSnapshot,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QrfConfig {
    pub n_trees: usize,
    /// Minimum number of (bootstrap) samples in each leaf.
    pub min_leaf: usize,
    pub quantile: f64,
    /// Features tried per split; `None` means `ceil(p / 3)`.
    pub features_per_split: Option<usize>,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub features: FeatureSet,
}

impl Default for QrfConfig {
    fn default() -> Self {
        Self {
            n_trees: 300,
            min_leaf: 5,
            quantile: 0.4,
            features_per_split: None,
            max_depth: None,
            bootstrap: true,
            features: full_features(),
        }
    }
}

impl QrfConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(ModelError::InvalidConfig("qrf.quantile must lie in (0, 1)".into()));
        }
        if self.min_leaf == 0 || self.n_trees == 0 {
            return Err(ModelError::InvalidConfig(
                "qrf.min_leaf and qrf.n_trees must be at least 1".into(),
            ));
        }
        if self.features.is_empty() {
            return Err(ModelError::InvalidConfig("qrf.features is empty".into()));
        }
        if self.features_per_split == Some(0) {
            return Err(ModelError::InvalidConfig("qrf.features_per_split must be at least 1".into()));
        }
        Ok(())
    }

    pub fn mtry(&self) -> usize {
        let p = self.features.len();
        self.features_per_split.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    /// Targets stored in the leaf reached by `x`.
    pub fn leaf(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { values } => return values,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

/// Smallest `y` whose cumulative weight reaches `q`; `pairs` need not be
/// sorted and weights need not be normalised.
pub fn weighted_quantile(pairs: &mut [(f64, f64)], q: f64) -> f64 {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    let target = q * total - 1e-12 * total;
    let mut cum = 0.0;
    for &(y, w) in pairs.iter() {
        cum += w;
        if cum >= target {
            return y;
        }
    }
    pairs.last().map_or(f64::NAN, |p| p.0)
}

struct Builder<'a> {
    x: &'a [f64],
    y: &'a [f64],
    dim: usize,
    min_leaf: usize,
    mtry: usize,
    max_depth: usize,
    /// `order[j]` lists sample positions sorted by feature `j`.
    order: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn xv(&self, sample: usize, j: usize) -> f64 {
        self.x[sample * self.dim + j]
    }

    fn build(&mut self, lo: usize, hi: usize, depth: usize, rng: &mut impl Rng) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { values: Vec::new() });
        let n = hi - lo;

        let split = if depth < self.max_depth && n >= 2 * self.min_leaf {
            self.best_split(lo, hi, rng)
        } else {
            None
        };
        let Some((feature, threshold, n_left)) = split else {
            let values = self.order[0][lo..hi].iter().map(|&s| self.y[s]).collect();
            self.nodes[id] = Node::Leaf { values };
            return id;
        };

        let (x, dim) = (self.x, self.dim);
        for &s in &self.order[feature][lo..hi] {
            self.goes_left[s] = x[s * dim + feature] <= threshold;
        }
        for j in 0..self.dim {
            self.scratch.clear();
            let slice = &mut self.order[j][lo..hi];
            let mut w = 0;
            for r in 0..slice.len() {
                let s = slice[r];
                if self.goes_left[s] {
                    slice[w] = s;
                    w += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            slice[w..].copy_from_slice(&self.scratch);
        }
        let mid = lo + n_left;
        let left = self.build(lo, mid, depth + 1, rng);
        let right = self.build(mid, hi, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Maximises `S_L²/n_L + S_R²/n_R`, equivalent to minimising the summed
    /// child squared error.
    fn best_split(&self, lo: usize, hi: usize, rng: &mut impl Rng) -> Option<(usize, f64, usize)> {
        let n = hi - lo;
        let total: f64 = self.order[0][lo..hi].iter().map(|&s| self.y[s]).sum();
        let y0 = self.y[self.order[0][lo]];
        if self.order[0][lo..hi].iter().all(|&s| self.y[s] == y0) {
            return None;
        }
        let parent = total * total / n as f64;

        let mut features: Vec<usize> = (0..self.dim).collect();
        features.shuffle(rng);
        let mut tried = 0;
        let mut best: Option<(f64, usize, f64, usize)> = None;
        for j in features {
            if tried == self.mtry {
                break;
            }
            let ord = &self.order[j][lo..hi];
            if self.xv(ord[0], j) == self.xv(ord[n - 1], j) {
                continue;
            }
            tried += 1;
            let mut sum_left = 0.0;
            for i in 0..n - 1 {
                sum_left += self.y[ord[i]];
                let n_left = i + 1;
                if n_left < self.min_leaf {
                    continue;
                }
                if n - n_left < self.min_leaf {
                    break;
                }
                let a = self.xv(ord[i], j);
                let b = self.xv(ord[i + 1], j);
                if a == b {
                    continue;
                }
                let sum_right = total - sum_left;
                let score = sum_left * sum_left / n_left as f64
                    + sum_right * sum_right / (n - n_left) as f64;
                if best.map_or(true, |bst| score > bst.0) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((score, j, t, n_left));
                }
            }
        }
        let (score, j, t, n_left) = best?;
        (score > parent * (1.0 + 1e-14) || score > parent + 1e-12).then_some((j, t, n_left))
    }
}

/// Sample indices sorted by each feature, ties by index.
fn feature_orders(x: &[f64], dim: usize, n: usize) -> Vec<Vec<usize>> {
    (0..dim)
        .map(|j| {
            let mut o: Vec<usize> = (0..n).collect();
            o.sort_by(|&a, &b| x[a * dim + j].total_cmp(&x[b * dim + j]).then(a.cmp(&b)));
            o
        })
        .collect()
}

/// Grows one tree on row-major `x` (dim columns) and targets `y`.
pub fn grow_tree(x: &[f64], y: &[f64], dim: usize, config: &QrfConfig, rng: &mut impl Rng) -> Tree {
    let orders = feature_orders(x, dim, y.len());
    grow_presorted(x, y, dim, &orders, config, rng)
}

/// As [`grow_tree`], with the full-sample feature orders computed once.
/// The bootstrap's orders follow from them in linear time.
fn grow_presorted(
    x: &[f64],
    y: &[f64],
    dim: usize,
    orders: &[Vec<usize>],
    config: &QrfConfig,
    rng: &mut impl Rng,
) -> Tree {
    let n = y.len();
    let sample: Vec<usize> = if config.bootstrap {
        (0..n).map(|_| rng.gen_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    // positions of each original sample in the bootstrap, as CSR
    let mut start = vec![0usize; n + 1];
    for &i in &sample {
        start[i + 1] += 1;
    }
    for i in 0..n {
        start[i + 1] += start[i];
    }
    let mut fill = start.clone();
    let mut positions = vec![0usize; n];
    for (pos, &i) in sample.iter().enumerate() {
        positions[fill[i]] = pos;
        fill[i] += 1;
    }
    let bx: Vec<f64> = sample
        .iter()
        .flat_map(|&i| x[i * dim..(i + 1) * dim].iter().copied())
        .collect();
    let by: Vec<f64> = sample.iter().map(|&i| y[i]).collect();
    let order = orders
        .iter()
        .map(|o| {
            o.iter()
                .flat_map(|&i| positions[start[i]..start[i + 1]].iter().copied())
                .collect()
        })
        .collect();
    let mut b = Builder {
        x: &bx,
        y: &by,
        dim,
        min_leaf: config.min_leaf,
        mtry: config.mtry(),
        max_depth: config.max_depth.unwrap_or(usize::MAX),
        order,
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        nodes: Vec::new(),
    };
    b.build(0, n, 0, rng);
    Tree { nodes: b.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QrfModel {
    pub config: QrfConfig,
    pub seed: u64,
    trees: Vec<Tree>,
}

impl QrfModel {
    pub fn new(config: QrfConfig, seed: u64) -> Self {
        Self {
            config,
            seed,
            trees: Vec::new(),
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Fits on raw row-major features and targets.
    pub fn fit_matrix(&mut self, x: &[f64], y: &[f64]) -> Result<(), ModelError> {
        let dim = self.config.features.len();
        if y.len() < self.config.min_leaf || y.is_empty() {
            return Err(ModelError::InsufficientData {
                needed: self.config.min_leaf.max(1),
                got: y.len(),
            });
        }
        if x.len() != y.len() * dim {
            return Err(ModelError::DimensionMismatch {
                expected: y.len() * dim,
                got: x.len(),
            });
        }
        let config = &self.config;
        let base = self.seed;
        let orders = feature_orders(x, dim, y.len());
        self.trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = seed::rng(base, &[t as u64]);
                grow_presorted(x, y, dim, &orders, config, &mut rng)
            })
            .collect();
        Ok(())
    }

    /// Quantile `q` of the forest's conditional distribution at `x`.
    pub fn quantile_at(&self, x: &[f64], q: f64) -> Result<f64, ModelError> {
        if self.trees.is_empty() {
            return Err(ModelError::NotFitted);
        }
        let t = self.trees.len() as f64;
        let mut pairs = Vec::new();
        for tree in &self.trees {
            let leaf = tree.leaf(x);
            let w = 1.0 / (t * leaf.len() as f64);
            pairs.extend(leaf.iter().map(|&y| (y, w)));
        }
        Ok(weighted_quantile(&mut pairs, q))
    }
}

impl Forecaster for QrfModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Qrf
    }

    fn fit(&mut self, train: &[HourlySample], _now: Timestamp) -> Result<(), ModelError> {
        let rows = daytime(train);
        let mut x = Vec::with_capacity(rows.len() * self.config.features.len());
        for s in &rows {
            self.config.features.extract_into(&s.features, &mut x)?;
        }
        let y: Vec<f64> = rows.iter().map(|s| s.measured_power).collect();
        self.fit_matrix(&x, &y)
    }

    fn predict(&self, sample: &HourlySample) -> Result<f64, ModelError> {
        let x = self.config.features.extract(&sample.features)?;
        self.quantile_at(&x, self.config.quantile)
    }

    fn describe(&self) -> ModelDescription {
        ModelDescription::new(ModelKind::Qrf, &self.config)
    }

    fn snapshot(&self) -> ModelSnapshot {
        ModelSnapshot {
            version: ModelSnapshot::VERSION,
            model: super::AnyModel::Qrf(self.clone()),
        }
    }
}
