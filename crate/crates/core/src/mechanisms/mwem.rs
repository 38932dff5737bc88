//! MWEM: multiplicative weights with exponential-mechanism query selection.
//!
//! The synthetic distribution lives on the full joint domain. Each of the
//! `T` rounds spends `ε/(2T)` selecting the workload cell-query with the
//! largest error (exponential mechanism, sensitivity 1) and `ε/(2T)`
//! measuring it (Laplace, scale `2T/ε`), then reweights
//! `w_x ∝ w_x · exp(q(x)·(measurement − n·A(q)) / (2n))`.
//! The output is the average of the `T` per-round distributions.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_budget, MechanismError};
use crate::accounting::{BudgetLedger, PrivacyBudget};
use crate::data::{marginal_counts, AttributeSubset, Dataset, Schema, DEFAULT_DOMAIN_CAP};
use crate::random::{laplace, Noise};

/// Relative tolerance (times `n`) for ties in noiseless argmax selection:
/// the lowest-indexed query within it of the best score wins.
const NOISELESS_TIE_TOLERANCE: f64 = 1e-9;

/// A probability distribution over the joint domain of all attributes,
/// row-major with the first attribute varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDistribution {
    attrs: AttributeSubset,
    cardinalities: Vec<usize>,
    weights: Vec<f64>,
}

impl DomainDistribution {
    pub fn uniform(schema: &Schema) -> Result<Self, MechanismError> {
        let attrs = AttributeSubset::all(schema);
        let cells = attrs.checked_domain(schema, DEFAULT_DOMAIN_CAP)?;
        Ok(Self { attrs, cardinalities: schema.cardinalities(), weights: vec![1.0 / cells as f64; cells] })
    }

    /// Wraps explicit weights; they must be non-negative and sum to 1 ± 1e-9.
    pub fn from_weights(schema: &Schema, weights: Vec<f64>) -> Result<Self, MechanismError> {
        let attrs = AttributeSubset::all(schema);
        let cells = attrs.checked_domain(schema, DEFAULT_DOMAIN_CAP)?;
        if weights.len() != cells {
            return Err(MechanismError::InvalidConfig(format!("expected {cells} weights, got {}", weights.len())));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(MechanismError::InvalidConfig("weights must be a probability vector".into()));
        }
        Ok(Self { attrs, cardinalities: schema.cardinalities(), weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn attrs(&self) -> &AttributeSubset {
        &self.attrs
    }

    /// Attribute values of cell `x`.
    pub fn decode(&self, mut x: usize) -> Vec<u32> {
        let mut row = vec![0u32; self.cardinalities.len()];
        for (a, &c) in self.cardinalities.iter().enumerate().rev() {
            row[a] = (x % c) as u32;
            x /= c;
        }
        row
    }
}

/// Output of [`mwem_fit`].
#[derive(Debug, Clone, PartialEq)]
pub struct MwemFit {
    /// Average of the per-round distributions.
    pub distribution: DomainDistribution,
    pub ledger: BudgetLedger,
    /// Per-round distributions (only when tracing was requested).
    pub rounds: Vec<Vec<f64>>,
    /// Index of the query selected in each round, into the flattened list of
    /// workload cells (workload order, then row-major cell order).
    pub selected: Vec<usize>,
}

struct Query {
    subset: usize,
    cell: usize,
}

/// Runs MWEM for `rounds` rounds over the cell-queries of `workload`.
/// With `trace` set, every per-round distribution is kept in the result.
pub fn mwem_fit<R: Rng + ?Sized>(
    d: &Dataset,
    budget: PrivacyBudget,
    workload: &[AttributeSubset],
    rounds: usize,
    noise: Noise,
    trace: bool,
    rng: &mut R,
) -> Result<MwemFit, MechanismError> {
    check_budget(budget, noise)?;
    if d.is_empty() {
        return Err(MechanismError::EmptyDataset);
    }
    if rounds == 0 {
        return Err(MechanismError::InvalidConfig("MWEM needs at least one round".into()));
    }
    if workload.is_empty() {
        return Err(MechanismError::InvalidConfig("MWEM needs a non-empty workload".into()));
    }
    let schema = d.schema();
    let mut dist = DomainDistribution::uniform(schema)?;
    let cells = dist.weights.len();
    let n = d.len() as f64;

    // projection[s][x]: cell of subset s that domain cell x falls in.
    let projection: Vec<Vec<usize>> =
        workload.iter().map(|s| (0..cells).map(|x| s.cell_of(schema, &dist.decode(x))).collect()).collect();
    let truth: Vec<Vec<u64>> =
        workload.iter().map(|s| marginal_counts(d, s, DEFAULT_DOMAIN_CAP)).collect::<Result<_, _>>()?;
    let queries: Vec<Query> =
        truth.iter().enumerate().flat_map(|(subset, t)| (0..t.len()).map(move |cell| Query { subset, cell })).collect();

    let share = budget.split(2 * rounds)?;
    let eps = share.epsilon();
    let mut ledger = BudgetLedger::new(budget);
    let mut average = vec![0.0; cells];
    let mut history = Vec::new();
    let mut selected = Vec::with_capacity(rounds);

    for t in 0..rounds {
        let synthetic = synthetic_answers(&dist.weights, &projection, &truth, n);
        let scores: Vec<f64> =
            queries.iter().map(|q| (truth[q.subset][q.cell] as f64 - synthetic[q.subset][q.cell]).abs()).collect();

        let chosen = if noise.is_disabled() {
            let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            scores.iter().position(|&s| s >= best - NOISELESS_TIE_TOLERANCE * n).expect("non-empty workload")
        } else {
            exponential_mechanism(&scores, eps, rng)
        };
        ledger.record(format!("mwem round {t} select"), share)?;

        let q = &queries[chosen];
        let true_answer = truth[q.subset][q.cell] as f64;
        let measurement = if noise.is_disabled() { true_answer } else { true_answer + laplace(rng, 1.0 / eps) };
        ledger.record(format!("mwem round {t} measure"), share)?;

        let factor = ((measurement - synthetic[q.subset][q.cell]) / (2.0 * n)).exp();
        let proj = &projection[q.subset];
        for (w, &cell) in dist.weights.iter_mut().zip(proj) {
            if cell == q.cell {
                *w *= factor;
            }
        }
        let total: f64 = dist.weights.iter().sum();
        dist.weights.iter_mut().for_each(|w| *w /= total);
        let mass: f64 = dist.weights.iter().sum();
        assert!((mass - 1.0).abs() <= 1e-9, "MWEM distribution lost normalization: {mass}");

        for (a, w) in average.iter_mut().zip(&dist.weights) {
            *a += w;
        }
        selected.push(chosen);
        if trace {
            history.push(dist.weights.clone());
        }
    }

    average.iter_mut().for_each(|a| *a /= rounds as f64);
    let total: f64 = average.iter().sum();
    average.iter_mut().for_each(|a| *a /= total);
    let distribution = DomainDistribution { weights: average, ..dist };
    Ok(MwemFit { distribution, ledger, rounds: history, selected })
}

/// `n · A(q)` for every cell of every workload marginal.
fn synthetic_answers(weights: &[f64], projection: &[Vec<usize>], truth: &[Vec<u64>], n: f64) -> Vec<Vec<f64>> {
    projection
        .iter()
        .zip(truth)
        .map(|(proj, t)| {
            let mut out = vec![0.0; t.len()];
            for (&w, &cell) in weights.iter().zip(proj) {
                out[cell] += w;
            }
            out.iter_mut().for_each(|x| *x *= n);
            out
        })
        .collect()
}

/// Samples an index with probability ∝ `exp(ε · score / 2)` (sensitivity 1).
fn exponential_mechanism<R: Rng + ?Sized>(scores: &[f64], epsilon: f64, rng: &mut R) -> usize {
    let logits: Vec<f64> = scores.iter().map(|s| epsilon * s / 2.0).collect();
    let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    WeightedIndex::new(&weights).expect("max logit has weight 1").sample(rng)
}

/// `n_out` i.i.d. rows drawn from `dist`.
pub fn sample_from_distribution<R: Rng + ?Sized>(
    dist: &DomainDistribution,
    schema: &Schema,
    n_out: usize,
    rng: &mut R,
) -> Dataset {
    if n_out == 0 {
        return Dataset::empty(schema.clone());
    }
    let sampler = WeightedIndex::new(&dist.weights).expect("valid distribution");
    let rows = (0..n_out).map(|_| dist.decode(sampler.sample(rng))).collect();
    Dataset::new(schema.clone(), rows).expect("decoded cells are in range")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Attribute;
    use crate::random::rng_from_seed;

    fn schema_4x2x2() -> Schema {
        Schema::new(
            vec![Attribute::categorical("a", 4), Attribute::categorical("b", 2), Attribute::categorical("y", 2)],
            2,
        )
        .unwrap()
    }

    fn dataset_from_counts(schema: &Schema, counts: &[usize]) -> Dataset {
        let dist = DomainDistribution::uniform(schema).unwrap();
        let rows = counts.iter().enumerate().flat_map(|(x, &c)| std::iter::repeat_n(dist.decode(x), c)).collect();
        Dataset::new(schema.clone(), rows).unwrap()
    }

    #[test]
    fn decode_is_row_major() {
        let dist = DomainDistribution::uniform(&schema_4x2x2()).unwrap();
        assert_eq!(dist.decode(0), vec![0, 0, 0]);
        assert_eq!(dist.decode(1), vec![0, 0, 1]);
        assert_eq!(dist.decode(2), vec![0, 1, 0]);
        assert_eq!(dist.decode(15), vec![3, 1, 1]);
    }

    #[test]
    fn one_step_moves_toward_truth() {
        let schema = schema_4x2x2();
        let counts = [30, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5];
        let d = dataset_from_counts(&schema, &counts);
        let workload = vec![AttributeSubset::new(vec![0], &schema).unwrap()];
        let uniform_answer = d.len() as f64 / 4.0;
        let fit =
            mwem_fit(&d, PrivacyBudget::pure(1.0).unwrap(), &workload, 1, Noise::Disabled, true, &mut rng_from_seed(0))
                .unwrap();
        let truth = 30.0 + 15.0;
        let after: f64 = fit.rounds[0][..4].iter().sum::<f64>() * d.len() as f64;
        assert!((after - truth).abs() < (uniform_answer - truth).abs());
        assert!(after > uniform_answer);
    }

    #[test]
    fn uniform_data_is_a_fixed_point() {
        let schema = schema_4x2x2();
        let d = dataset_from_counts(&schema, &[10; 16]);
        let workload = crate::mechanisms::WorkloadSpec::AllPairs.resolve(&schema).unwrap();
        let fit = mwem_fit(
            &d,
            PrivacyBudget::pure(1.0).unwrap(),
            &workload,
            20,
            Noise::Disabled,
            true,
            &mut rng_from_seed(0),
        )
        .unwrap();
        for round in &fit.rounds {
            for w in round {
                assert!((w - 1.0 / 16.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn ledger_has_two_spends_per_round() {
        let schema = schema_4x2x2();
        let d = dataset_from_counts(&schema, &[3, 1, 4, 1, 5, 9, 2, 6, 5, 3, 5, 8, 9, 7, 9, 3]);
        let workload = crate::mechanisms::WorkloadSpec::AllPairs.resolve(&schema).unwrap();
        let budget = PrivacyBudget::new(0.7, 1e-7).unwrap();
        let fit = mwem_fit(&d, budget, &workload, 13, Noise::Laplace, false, &mut rng_from_seed(3)).unwrap();
        assert_eq!(fit.ledger.entries().len(), 26);
        assert!(fit.ledger.certify().unwrap().approx_eq(&budget));
        assert!(fit.rounds.is_empty());
        assert!((fit.distribution.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling_contracts() {
        let schema = schema_4x2x2();
        let mut point = vec![0.0; 16];
        point[9] = 1.0;
        let dist = DomainDistribution::from_weights(&schema, point).unwrap();
        let d = sample_from_distribution(&dist, &schema, 50, &mut rng_from_seed(0));
        assert!(d.rows().iter().all(|r| r == &vec![2, 0, 1]));
        assert!(sample_from_distribution(&dist, &schema, 0, &mut rng_from_seed(0)).is_empty());

        let two = Schema::new(vec![Attribute::categorical("a", 2), Attribute::categorical("y", 2)], 1).unwrap();
        let uniform = DomainDistribution::uniform(&two).unwrap();
        let d = sample_from_distribution(&uniform, &two, 40_000, &mut rng_from_seed(1));
        let counts = marginal_counts(&d, &AttributeSubset::all(&two), DEFAULT_DOMAIN_CAP).unwrap();
        for c in counts {
            let f = c as f64 / 40_000.0;
            assert!((0.24..=0.26).contains(&f), "{f}");
        }
        assert!(DomainDistribution::from_weights(&two, vec![0.5, 0.5, 0.1, -0.1]).is_err());
    }
}
