//! Train-on-synthetic / test-on-real evaluation.

mod bench;
mod stats;

pub use bench::{
    run_benchmark, BenchmarkConfig, BenchmarkResults, CellKey, CellSummary, DatasetSpec, PlanGrid, RunRow, Summary,
    Variant, CSV_HEADER,
};
pub use stats::{quantile, BoxStats};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::accounting::PrivacyBudget;
use crate::data::{DataError, Dataset};
use crate::ensemble::{EnsembleError, EnsembleModel, SynthesisPlan};

pub const DEFAULT_ECE_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot evaluate on an empty dataset")]
    EmptyDataset,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("dataset not found: {0}")]
    DatasetNotFound(std::path::PathBuf),
    #[error("io error on {path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Fraction of rows whose aggregated prediction matches the label.
pub fn accuracy(model: &EnsembleModel, test: &Dataset) -> Result<f64, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let li = test.schema().label_index();
    let correct = test.rows().iter().filter(|r| model.predict(r) == (r[li] == 1)).count();
    Ok(correct as f64 / test.len() as f64)
}

/// One equal-width confidence bin. `correct` and `confidence_sum` are the
/// exact totals the scalar ECE is computed from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub correct: usize,
    pub confidence_sum: f64,
    /// `correct / count`, or 0 for an empty bin.
    pub accuracy: f64,
    /// `confidence_sum / count`, or 0 for an empty bin.
    pub confidence: f64,
}

/// Bin holding confidence `c`: the first `b` with `c ≤ (b+1)/bins`, so bins
/// are right-closed and the first one also contains 0.
pub fn bin_index(c: f64, bins: usize) -> usize {
    let b = bins as f64;
    let mut i = ((c * b).ceil() as usize).saturating_sub(1).min(bins - 1);
    while i > 0 && c <= i as f64 / b {
        i -= 1;
    }
    while i + 1 < bins && c > (i + 1) as f64 / b {
        i += 1;
    }
    i
}

/// Bins `(confidence, correct)` pairs. Confidences must lie in `[0, 1]`.
pub fn calibration_bins(pairs: &[(f64, bool)], bins: usize) -> Result<Vec<CalibrationBin>, EvalError> {
    if bins < 2 {
        return Err(EvalError::InvalidConfig(format!("need at least 2 bins, got {bins}")));
    }
    if pairs.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut table: Vec<CalibrationBin> = (0..bins)
        .map(|b| CalibrationBin {
            lower: b as f64 / bins as f64,
            upper: (b + 1) as f64 / bins as f64,
            count: 0,
            correct: 0,
            confidence_sum: 0.0,
            accuracy: 0.0,
            confidence: 0.0,
        })
        .collect();
    for &(c, ok) in pairs {
        let bin = &mut table[bin_index(c, bins)];
        bin.count += 1;
        bin.correct += usize::from(ok);
        bin.confidence_sum += c;
    }
    for bin in &mut table {
        if bin.count > 0 {
            bin.accuracy = bin.correct as f64 / bin.count as f64;
            bin.confidence = bin.confidence_sum / bin.count as f64;
        }
    }
    Ok(table)
}

/// `Σ_b (b_n/N)·|acc(b) − conf(b)|`, evaluated as `Σ_b |correct_b − Σconf_b| / N`.
pub fn ece_from_bins(bins: &[CalibrationBin]) -> f64 {
    let n: usize = bins.iter().map(|b| b.count).sum();
    bins.iter().map(|b| (b.correct as f64 - b.confidence_sum).abs()).sum::<f64>() / n as f64
}

/// Confidence in the predicted class and whether the prediction is right.
pub fn prediction_pairs(model: &EnsembleModel, test: &Dataset) -> Vec<(f64, bool)> {
    let li = test.schema().label_index();
    test.rows()
        .iter()
        .map(|r| {
            let c = model.confidence(r);
            let predicted = c >= 0.5;
            (c.max(1.0 - c), predicted == (r[li] == 1))
        })
        .collect()
}

pub fn ece(model: &EnsembleModel, test: &Dataset, bins: usize) -> Result<(f64, Vec<CalibrationBin>), EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let table = calibration_bins(&prediction_pairs(model, test), bins)?;
    Ok((ece_from_bins(&table), table))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub ece: f64,
    pub bins: Vec<CalibrationBin>,
    pub n_test: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ledger_total: Option<PrivacyBudget>,
}

pub fn evaluate(model: &EnsembleModel, test: &Dataset, bins: usize) -> Result<EvalReport, EvalError> {
    let accuracy = accuracy(model, test)?;
    let (ece, bins) = ece(model, test, bins)?;
    Ok(EvalReport { accuracy, ece, bins, n_test: test.len(), seed: None, plan_digest: None, ledger_total: None })
}

/// Hex SHA-256 of the plan's JSON encoding.
pub fn plan_digest(plan: &SynthesisPlan) -> String {
    let json = serde_json::to_vec(plan).expect("plans serialize");
    hex::encode(Sha256::digest(json))
}

/// Stratified split: the test side gets `round(fraction·n)` rows, with each
/// class represented in proportion (±1 row). Both sides keep input order.
pub fn train_test_split<R: Rng + ?Sized>(
    real: &Dataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset), EvalError> {
    if real.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::InvalidConfig(format!("test fraction {test_fraction} not in (0, 1)")));
    }
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..real.len()).partition(|&i| real.label(i));
    let total = (test_fraction * real.len() as f64).round() as usize;
    let test_pos = ((test_fraction * pos.len() as f64).round() as usize).min(total);
    let test_neg = (total - test_pos).min(neg.len());
    let test_pos = total - test_neg;

    let mut in_test = vec![false; real.len()];
    for (class, m) in [(&pos, test_pos), (&neg, test_neg)] {
        for j in index::sample(rng, class.len(), m) {
            in_test[class[j]] = true;
        }
    }
    let (test, train): (Vec<usize>, Vec<usize>) = (0..real.len()).partition(|&i| in_test[i]);
    Ok((real.select(&train), real.select(&test)))
}

/// Share of the more frequent label.
pub fn majority_baseline(test: &Dataset) -> Result<f64, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let p = test.positives() as f64 / test.len() as f64;
    Ok(p.max(1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ground_truth, Attribute, Schema};
    use crate::models::{Classifier, FeatureEncoder, Model};
    use crate::random::rng_from_seed;

    fn constant(schema: &Schema, c: f64) -> EnsembleModel {
        EnsembleModel::new(vec![Classifier {
            encoder: FeatureEncoder::new(schema),
            model: Model::Constant { confidence: c },
        }])
        .unwrap()
    }

    fn labels_only(labels: &[u32]) -> Dataset {
        let schema = Schema::new(vec![Attribute::categorical("x", 2), Attribute::categorical("y", 2)], 1).unwrap();
        Dataset::new(schema, labels.iter().map(|&y| vec![0, y]).collect()).unwrap()
    }

    #[test]
    fn accuracy_examples() {
        let d = labels_only(&[1, 1, 1, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(accuracy(&constant(d.schema(), 0.9), &d).unwrap(), 0.3);
        let d = labels_only(&[1, 1, 1, 0, 0]);
        assert_eq!(accuracy(&constant(d.schema(), 0.7), &d).unwrap(), 0.6);
        let empty = Dataset::empty(d.schema().clone());
        assert!(matches!(accuracy(&constant(d.schema(), 0.7), &empty), Err(EvalError::EmptyDataset)));
    }

    #[test]
    fn ece_hand_case() {
        let d = labels_only(&[1, 1, 1, 1, 1, 1, 0, 0, 0, 0]);
        let (e, bins) = ece(&constant(d.schema(), 0.75), &d, 10).unwrap();
        assert_eq!(e, 0.15);
        assert_eq!(bins.iter().filter(|b| b.count > 0).count(), 1);
        assert_eq!(bins[7].count, 10);
        assert_eq!(bins[7].accuracy, 0.6);
    }

    #[test]
    fn ece_of_confident_oracle_and_coin() {
        let d = labels_only(&[1, 1, 1, 1, 1]);
        assert_eq!(ece(&constant(d.schema(), 1.0), &d, 10).unwrap().0, 0.0);
        let d = labels_only(&[1, 0, 1, 0, 1, 0]);
        let (e, bins) = ece(&constant(d.schema(), 0.5), &d, 10).unwrap();
        assert_eq!(e, 0.0);
        assert_eq!(bins[4].count, 6);
    }

    #[test]
    fn bin_edges_are_right_closed() {
        assert_eq!(bin_index(0.0, 10), 0);
        assert_eq!(bin_index(0.1, 10), 0);
        assert_eq!(bin_index(0.1000001, 10), 1);
        assert_eq!(bin_index(0.5, 10), 4);
        assert_eq!(bin_index(0.7, 10), 6);
        assert_eq!(bin_index(1.0, 10), 9);
        for b in [2, 3, 7, 10, 15] {
            for i in 0..=1000 {
                let c = i as f64 / 1000.0;
                let k = bin_index(c, b);
                assert!(c <= (k + 1) as f64 / b as f64);
                assert!(k == 0 || c > k as f64 / b as f64);
            }
        }
    }

    #[test]
    fn too_few_bins() {
        assert!(matches!(calibration_bins(&[(0.7, true)], 1), Err(EvalError::InvalidConfig(_))));
    }

    #[test]
    fn split_examples() {
        let balanced = labels_only(&(0..100).map(|i| i % 2).collect::<Vec<_>>());
        let (train, test) = train_test_split(&balanced, 0.5, &mut rng_from_seed(1)).unwrap();
        assert_eq!((train.len(), test.len()), (50, 50));
        assert!((test.positives() as i64 - 25).abs() <= 1);
        assert!((train.positives() as i64 - 25).abs() <= 1);

        let ten = labels_only(&[0, 1, 0, 1, 0, 0, 1, 0, 0, 0]);
        assert_eq!(train_test_split(&ten, 0.2, &mut rng_from_seed(2)).unwrap().1.len(), 2);

        let d = ground_truth::generate(1_000, 4);
        let a = train_test_split(&d, 0.2, &mut rng_from_seed(3)).unwrap();
        let b = train_test_split(&d, 0.2, &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        let expected = (0.2 * d.positives() as f64).round() as i64;
        assert!((a.1.positives() as i64 - expected).abs() <= 1);
    }

    #[test]
    fn report_bins_sum_to_n() {
        let d = ground_truth::generate(400, 5);
        let m = crate::models::train(&d, &crate::models::ModelConfig::defaults()[0], &mut rng_from_seed(0)).unwrap();
        let model = EnsembleModel::new(vec![m]).unwrap();
        let r = evaluate(&model, &d, 10).unwrap();
        assert_eq!(r.bins.iter().map(|b| b.count).sum::<usize>(), 400);
        assert_eq!(ece_from_bins(&r.bins), r.ece);
        assert!((0.0..=0.5).contains(&r.ece));
        for b in &r.bins {
            assert!((0.0..=1.0).contains(&b.accuracy) && (0.0..=1.0).contains(&b.confidence));
        }
    }
}
