//! CART trees over ordinal attribute values and the bagged random forest.
//!
//! A split sends `row[attribute] <= threshold` left. Both the Gini builder
//! (forest) and the second-order builder (boosting) accept zero-gain splits,
//! so concepts like XOR whose first split gains nothing are still learnable.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::Dataset;
use crate::random::PipelineRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Leaf { value: f64 },
    Split { attribute: usize, threshold: u32, left: usize, right: usize },
}

/// Nodes in a flat arena; the root is node 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[u32]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { attribute, threshold, left, right } => {
                    i = if row[attribute] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// What a builder needs from a node's samples on one attribute.
trait SplitCriterion {
    /// Per-sample statistic accumulated into histograms.
    type Stat: Copy + Default + std::ops::AddAssign + std::ops::Sub<Output = Self::Stat>;
    fn stat(&self, sample: usize) -> Self::Stat;
    /// Score of a child (higher is better); summed over both children.
    fn score(&self, s: Self::Stat) -> f64;
    fn count(&self, s: Self::Stat) -> f64;
    fn leaf(&self, s: Self::Stat) -> f64;
    fn is_pure(&self, s: Self::Stat) -> bool;
}

struct Builder<'a, C: SplitCriterion> {
    rows: &'a [Vec<u32>],
    cardinalities: &'a [usize],
    features: &'a [usize],
    max_depth: Option<usize>,
    /// Non-constant features to evaluate per node (all when `None`).
    max_features: Option<usize>,
    criterion: C,
    nodes: Vec<Node>,
}

impl<C: SplitCriterion> Builder<'_, C> {
    fn total(&self, samples: &[usize]) -> C::Stat {
        let mut s = C::Stat::default();
        for &i in samples {
            s += self.criterion.stat(i);
        }
        s
    }

    fn build<R: Rng + ?Sized>(&mut self, samples: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let id = self.nodes.len();
        let total = self.total(&samples);
        self.nodes.push(Node::Leaf { value: self.criterion.leaf(total) });
        if samples.len() < 2 || self.max_depth.is_some_and(|d| depth >= d) || self.criterion.is_pure(total) {
            return id;
        }

        let mut order: Vec<usize> = self.features.to_vec();
        if self.max_features.is_some() {
            order.shuffle(rng);
        }
        let budget = self.max_features.unwrap_or(order.len());
        let mut evaluated = 0;
        let mut best: Option<(f64, usize, u32)> = None;
        for &a in &order {
            if evaluated == budget {
                break;
            }
            let card = self.cardinalities[a];
            let mut hist = vec![C::Stat::default(); card];
            for &i in &samples {
                hist[self.rows[i][a] as usize] += self.criterion.stat(i);
            }
            let occupied = hist.iter().filter(|&&h| self.criterion.count(h) > 0.0).count();
            if occupied < 2 {
                continue;
            }
            evaluated += 1;
            let mut left = C::Stat::default();
            for (t, &h) in hist.iter().enumerate().take(card - 1) {
                left += h;
                let right = total - left;
                if self.criterion.count(left) == 0.0 || self.criterion.count(right) == 0.0 {
                    continue;
                }
                let score = self.criterion.score(left) + self.criterion.score(right);
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, a, t as u32));
                }
            }
        }
        let Some((_, attribute, threshold)) = best else { return id };
        let (l, r): (Vec<usize>, Vec<usize>) = samples.into_iter().partition(|&i| self.rows[i][attribute] <= threshold);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split { attribute, threshold, left, right };
        id
    }
}

/// Gini impurity on (count, positives); score is `−n·gini`.
struct Gini<'a> {
    labels: &'a [bool],
}

#[derive(Debug, Clone, Copy, Default)]
struct ClassStat {
    n: f64,
    pos: f64,
}

impl std::ops::AddAssign for ClassStat {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.pos += o.pos;
    }
}

impl std::ops::Sub for ClassStat {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        ClassStat { n: self.n - o.n, pos: self.pos - o.pos }
    }
}

impl SplitCriterion for Gini<'_> {
    type Stat = ClassStat;
    fn stat(&self, i: usize) -> ClassStat {
        ClassStat { n: 1.0, pos: if self.labels[i] { 1.0 } else { 0.0 } }
    }
    fn score(&self, s: ClassStat) -> f64 {
        let p = s.pos / s.n;
        -s.n * 2.0 * p * (1.0 - p)
    }
    fn count(&self, s: ClassStat) -> f64 {
        s.n
    }
    fn leaf(&self, s: ClassStat) -> f64 {
        s.pos / s.n
    }
    fn is_pure(&self, s: ClassStat) -> bool {
        s.pos == 0.0 || s.pos == s.n
    }
}

/// Second-order boosting criterion on (count, Σgradient, Σhessian); score
/// is `G²/H` and the leaf is the Newton step `G/H`.
pub(super) struct Newton<'a> {
    pub gradients: &'a [f64],
    pub hessians: &'a [f64],
}

#[derive(Debug, Clone, Copy, Default)]
pub(super) struct NewtonStat {
    n: f64,
    g: f64,
    h: f64,
}

impl std::ops::AddAssign for NewtonStat {
    fn add_assign(&mut self, o: Self) {
        self.n += o.n;
        self.g += o.g;
        self.h += o.h;
    }
}

impl std::ops::Sub for NewtonStat {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        NewtonStat { n: self.n - o.n, g: self.g - o.g, h: self.h - o.h }
    }
}

const MIN_HESSIAN: f64 = 1e-12;

impl SplitCriterion for Newton<'_> {
    type Stat = NewtonStat;
    fn stat(&self, i: usize) -> NewtonStat {
        NewtonStat { n: 1.0, g: self.gradients[i], h: self.hessians[i] }
    }
    fn score(&self, s: NewtonStat) -> f64 {
        s.g * s.g / s.h.max(MIN_HESSIAN)
    }
    fn count(&self, s: NewtonStat) -> f64 {
        s.n
    }
    fn leaf(&self, s: NewtonStat) -> f64 {
        s.g / s.h.max(MIN_HESSIAN)
    }
    fn is_pure(&self, _: NewtonStat) -> bool {
        false
    }
}

/// Depth-limited regression tree fit to gradient/hessian pairs.
pub(super) fn fit_newton_tree(data: &Dataset, features: &[usize], criterion: Newton<'_>, max_depth: usize) -> Tree {
    let cardinalities = data.schema().cardinalities();
    let mut builder = Builder {
        rows: data.rows(),
        cardinalities: &cardinalities,
        features,
        max_depth: Some(max_depth),
        max_features: None,
        criterion,
        nodes: Vec::new(),
    };
    // Without feature subsampling the builder never draws randomness.
    let mut unused = PipelineRng::seed_from_u64(0);
    builder.build((0..data.len()).collect(), 0, &mut unused);
    Tree { nodes: builder.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    /// `None` grows trees until leaves are pure.
    pub max_depth: Option<usize>,
    /// Features considered per split; `None` means `⌊√features⌋`.
    pub max_features: Option<usize>,
    /// Train each tree on a bootstrap resample.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, max_depth: None, max_features: None, bootstrap: true }
    }
}

/// Bagged Gini trees; confidence is the mean leaf positive fraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn fit<R: Rng + ?Sized>(data: &Dataset, cfg: &ForestConfig, rng: &mut R) -> Result<Self, ModelError> {
        if cfg.trees == 0 || cfg.max_features == Some(0) {
            return Err(ModelError::InvalidConfig(format!("bad forest config {cfg:?}")));
        }
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let features = data.schema().feature_indices();
        let max_features = cfg.max_features.unwrap_or(((features.len() as f64).sqrt().floor() as usize).max(1));
        let labels: Vec<bool> = data.labels().collect();
        let cardinalities = data.schema().cardinalities();
        let n = data.len();
        let seeds: Vec<u64> = (0..cfg.trees).map(|_| rng.random()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|seed| {
                let mut tree_rng = PipelineRng::seed_from_u64(seed);
                let samples: Vec<usize> = if cfg.bootstrap {
                    (0..n).map(|_| tree_rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let mut builder = Builder {
                    rows: data.rows(),
                    cardinalities: &cardinalities,
                    features: &features,
                    max_depth: cfg.max_depth,
                    max_features: Some(max_features.min(features.len())),
                    criterion: Gini { labels: &labels },
                    nodes: Vec::new(),
                };
                builder.build(samples, 0, &mut tree_rng);
                Tree { nodes: builder.nodes }
            })
            .collect();
        Ok(Self { trees })
    }

    pub fn confidence(&self, row: &[u32]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}
