use serde::{Deserialize, Serialize};

use super::tree::{fit_newton_tree, Newton, Tree};
use super::{sigmoid, ModelError};
use crate::data::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GbdtConfig {
    pub stages: usize,
    pub learning_rate: f64,
    /// Depth of each stage's tree; 0 gives a single leaf.
    pub max_depth: usize,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self { stages: 100, learning_rate: 0.1, max_depth: 3 }
    }
}

/// Gradient-boosted regression trees on the logistic loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Initial log-odds, the logit of the training base rate.
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl GbdtModel {
    pub fn fit(data: &Dataset, cfg: &GbdtConfig) -> Result<Self, ModelError> {
        if cfg.stages == 0 || !cfg.learning_rate.is_finite() || cfg.learning_rate < 0.0 {
            return Err(ModelError::InvalidConfig(format!("bad gbdt config {cfg:?}")));
        }
        if data.is_empty() {
            return Err(ModelError::EmptyDataset);
        }
        let labels: Vec<f64> = data.labels().map(|y| if y { 1.0 } else { 0.0 }).collect();
        let rate = (data.positives() as f64 / data.len() as f64).clamp(1e-12, 1.0 - 1e-12);
        let base_score = (rate / (1.0 - rate)).ln();
        let features = data.schema().feature_indices();

        let mut scores = vec![base_score; data.len()];
        let mut gradients = vec![0.0; data.len()];
        let mut hessians = vec![0.0; data.len()];
        let mut trees = Vec::with_capacity(cfg.stages);
        for _ in 0..cfg.stages {
            for i in 0..scores.len() {
                let p = sigmoid(scores[i]);
                gradients[i] = labels[i] - p;
                hessians[i] = p * (1.0 - p);
            }
            let tree =
                fit_newton_tree(data, &features, Newton { gradients: &gradients, hessians: &hessians }, cfg.max_depth);
            for (s, row) in scores.iter_mut().zip(data.rows()) {
                *s += cfg.learning_rate * tree.predict(row);
            }
            trees.push(tree);
        }
        Ok(Self { base_score, learning_rate: cfg.learning_rate, trees })
    }

    pub fn score(&self, row: &[u32]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn confidence(&self, row: &[u32]) -> f64 {
        sigmoid(self.score(row))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tests::{accuracy, xor};
    use crate::models::{train, ModelConfig};
    use crate::random::rng_from_seed;

    #[test]
    fn single_leaf_stage_is_the_base_rate() {
        let d = crate::data::ground_truth::generate(1_000, 3);
        let m = GbdtModel::fit(&d, &GbdtConfig { stages: 1, learning_rate: 0.1, max_depth: 0 }).unwrap();
        let rate = d.positives() as f64 / 1_000.0;
        for r in d.rows().iter().take(20) {
            assert!((m.score(r) - (rate / (1.0 - rate)).ln()).abs() < 1e-12);
            assert!((m.confidence(r) - rate).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_learning_rate_keeps_the_base_rate() {
        let d = crate::data::ground_truth::generate(1_000, 3);
        let m = GbdtModel::fit(&d, &GbdtConfig { stages: 20, learning_rate: 0.0, max_depth: 3 }).unwrap();
        let rate = d.positives() as f64 / 1_000.0;
        assert!(d.rows().iter().all(|r| (m.confidence(r) - rate).abs() < 1e-12));
    }

    #[test]
    fn learns_xor() {
        let d = xor(50);
        let cfg = ModelConfig::Gbdt(GbdtConfig { stages: 50, learning_rate: 0.1, max_depth: 2 });
        let c = train(&d, &cfg, &mut rng_from_seed(0)).unwrap();
        assert!(accuracy(&c, &d) >= 0.95);
    }
}
