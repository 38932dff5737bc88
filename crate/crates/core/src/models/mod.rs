//! Downstream classifiers. Every model maps a row to a confidence in
//! `[0, 1]` for the positive label.
//!
//! Linear models (logistic regression, the RFF SVM) see a one-hot encoding
//! of the non-label attributes; tree models split on the raw ordinal
//! category indices.

mod gbdt;
mod logistic;
mod platt;
mod svm;
mod tree;

pub use gbdt::{GbdtConfig, GbdtModel};
pub use logistic::{LogisticConfig, LogisticModel, LogisticObjective};
pub use platt::{platt_objective, platt_targets, PlattCalibrator};
pub use svm::{rff_features, scale_gamma, RffMap, SvmConfig, SvmModel};
pub use tree::{Forest, ForestConfig, Tree};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Schema};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot train on an empty dataset")]
    EmptyDataset,
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
}

/// One-hot layout of the non-label attributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    /// `(attribute, first column)` for each non-label attribute.
    offsets: Vec<(usize, usize)>,
    width: usize,
    label_index: usize,
}

impl FeatureEncoder {
    pub fn new(schema: &Schema) -> Self {
        let mut width = 0;
        let offsets = schema
            .feature_indices()
            .into_iter()
            .map(|a| {
                let start = width;
                width += schema.cardinality(a);
                (a, start)
            })
            .collect();
        Self { offsets, width, label_index: schema.label_index() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn label_index(&self) -> usize {
        self.label_index
    }

    /// Attribute indices of the features, in schema order.
    pub fn features(&self) -> Vec<usize> {
        self.offsets.iter().map(|&(a, _)| a).collect()
    }

    /// Columns holding a 1 for `row`, one per feature attribute.
    pub fn active(&self, row: &[u32]) -> Vec<usize> {
        self.offsets.iter().map(|&(a, start)| start + row[a] as usize).collect()
    }

    pub fn encode(&self, row: &[u32]) -> Vec<f64> {
        let mut x = vec![0.0; self.width];
        for i in self.active(row) {
            x[i] = 1.0;
        }
        x
    }

    /// The non-label values of `row`, used as a key for identical feature
    /// patterns.
    pub(crate) fn pattern(&self, row: &[u32]) -> Vec<u32> {
        self.offsets.iter().map(|&(a, _)| row[a]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    Logistic(#[serde(default)] LogisticConfig),
    RandomForest(#[serde(default)] ForestConfig),
    Gbdt(#[serde(default)] GbdtConfig),
    Svm(#[serde(default)] SvmConfig),
}

impl ModelConfig {
    /// Short name used in result files.
    pub fn name(&self) -> String {
        match self {
            ModelConfig::Logistic(_) => "logistic".into(),
            ModelConfig::RandomForest(c) => match c.max_depth {
                None => "random-forest".into(),
                Some(d) => format!("random-forest-depth{d}"),
            },
            ModelConfig::Gbdt(_) => "gbdt".into(),
            ModelConfig::Svm(_) => "svm-rff-platt".into(),
        }
    }

    /// The four model families with default hyperparameters.
    pub fn defaults() -> Vec<ModelConfig> {
        vec![
            ModelConfig::Logistic(LogisticConfig::default()),
            ModelConfig::RandomForest(ForestConfig::default()),
            ModelConfig::Gbdt(GbdtConfig::default()),
            ModelConfig::Svm(SvmConfig::default()),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    /// Fallback for single-class (or featureless) training data.
    Constant {
        confidence: f64,
    },
    Logistic(LogisticModel),
    RandomForest(Forest),
    Gbdt(GbdtModel),
    Svm(SvmModel),
}

/// A trained model plus the encoding it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub encoder: FeatureEncoder,
    pub model: Model,
}

impl Classifier {
    pub fn confidence(&self, row: &[u32]) -> f64 {
        let c = match &self.model {
            Model::Constant { confidence } => *confidence,
            Model::Logistic(m) => m.confidence(&self.encoder.active(row)),
            Model::RandomForest(m) => m.confidence(row),
            Model::Gbdt(m) => m.confidence(row),
            Model::Svm(m) => m.confidence(&self.encoder.active(row)),
        };
        c.clamp(0.0, 1.0)
    }

    pub fn predict(&self, row: &[u32]) -> bool {
        self.confidence(row) >= 0.5
    }
}

/// Confidence of the constant fallback: the positive rate clamped to
/// `[0.01, 0.99]`.
pub fn constant_confidence(positives: usize, n: usize) -> f64 {
    (positives as f64 / n as f64).clamp(0.01, 0.99)
}

/// Trains the configured model. Single-class data (and schemas with no
/// features) yield the constant classifier instead of an error.
pub fn train<R: Rng + ?Sized>(data: &Dataset, cfg: &ModelConfig, rng: &mut R) -> Result<Classifier, ModelError> {
    if data.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    let encoder = FeatureEncoder::new(data.schema());
    let positives = data.positives();
    if positives == 0 || positives == data.len() || encoder.width() == 0 {
        let confidence = constant_confidence(positives, data.len());
        return Ok(Classifier { encoder, model: Model::Constant { confidence } });
    }
    let model = match cfg {
        ModelConfig::Logistic(c) => Model::Logistic(LogisticModel::fit(data, &encoder, c)?.0),
        ModelConfig::RandomForest(c) => Model::RandomForest(Forest::fit(data, c, rng)?),
        ModelConfig::Gbdt(c) => Model::Gbdt(GbdtModel::fit(data, c)?),
        ModelConfig::Svm(c) => Model::Svm(SvmModel::fit(data, &encoder, c, rng)?),
    };
    Ok(Classifier { encoder, model })
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
