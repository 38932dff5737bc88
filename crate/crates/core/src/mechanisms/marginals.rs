//! Noisy-marginal synthesis: measure a fixed set of marginals with the
//! Laplace mechanism, clean them up (clamp negatives, renormalize) and
//! sample rows from the resulting model.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_budget, MechanismError};
use crate::accounting::{BudgetLedger, PrivacyBudget};
use crate::data::{marginal_counts, AttributeSubset, Dataset, Schema, DEFAULT_DOMAIN_CAP};
use crate::random::{laplace, Noise};

/// Adds Laplace(`scale`) noise to each count, clamps at zero and
/// normalizes. An all-zero result becomes uniform.
pub fn noisy_distribution<R: Rng + ?Sized>(counts: &[u64], scale: f64, noise: Noise, rng: &mut R) -> Vec<f64> {
    let noisy: Vec<f64> = counts
        .iter()
        .map(|&c| {
            let x = c as f64 + if noise.is_disabled() { 0.0 } else { laplace(rng, scale) };
            x.max(0.0)
        })
        .collect();
    normalize_or_uniform(noisy)
}

fn normalize_or_uniform(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        let u = 1.0 / v.len() as f64;
        v.iter_mut().for_each(|x| *x = u);
    }
    v
}

/// Per-attribute noisy 1-way marginals. With `m` attributes each marginal
/// gets `ε/m` (L1 sensitivity 1, Laplace scale `m/ε`).
pub fn independent_marginals_fit<R: Rng + ?Sized>(
    d: &Dataset,
    budget: PrivacyBudget,
    noise: Noise,
    rng: &mut R,
) -> Result<(Vec<Vec<f64>>, BudgetLedger), MechanismError> {
    check_budget(budget, noise)?;
    let schema = d.schema();
    let m = schema.len();
    let share = budget.split(m)?;
    let scale = 1.0 / share.epsilon();
    let mut ledger = BudgetLedger::new(budget);
    let mut probs = Vec::with_capacity(m);
    for a in 0..m {
        let counts = marginal_counts(d, &AttributeSubset::new(vec![a], schema)?, DEFAULT_DOMAIN_CAP)?;
        probs.push(noisy_distribution(&counts, scale, noise, rng));
        ledger.record(format!("marginal {}", schema.attributes()[a].name), share)?;
    }
    Ok((probs, ledger))
}

pub(super) fn sample_independent<R: Rng + ?Sized>(
    schema: &Schema,
    probs: &[Vec<f64>],
    rows: usize,
    rng: &mut R,
) -> Dataset {
    let samplers: Vec<WeightedIndex<f64>> =
        probs.iter().map(|p| WeightedIndex::new(p).expect("normalized marginal")).collect();
    let data = (0..rows).map(|_| samplers.iter().map(|s| s.sample(rng) as u32).collect()).collect();
    Dataset::new(schema.clone(), data).expect("sampled values are in range")
}

/// Label marginal plus `P(feature | label)` tables estimated from noisy
/// (feature, label) marginals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StarModel {
    pub label: Vec<f64>,
    /// `(attribute, table)` where `table[y][v] = P(attribute = v | label = y)`.
    pub conditionals: Vec<(usize, Vec<Vec<f64>>)>,
}

/// Measures one (feature, label) marginal per feature at `ε/m` each. With no
/// features the label's 1-way marginal takes the whole budget.
pub fn label_star_fit<R: Rng + ?Sized>(
    d: &Dataset,
    budget: PrivacyBudget,
    noise: Noise,
    rng: &mut R,
) -> Result<(StarModel, BudgetLedger), MechanismError> {
    check_budget(budget, noise)?;
    let schema = d.schema();
    let label = schema.label_index();
    let features = schema.feature_indices();
    let mut ledger = BudgetLedger::new(budget);

    if features.is_empty() {
        let counts = marginal_counts(d, &AttributeSubset::new(vec![label], schema)?, DEFAULT_DOMAIN_CAP)?;
        let label_probs = noisy_distribution(&counts, 1.0 / budget.epsilon(), noise, rng);
        ledger.record(format!("marginal {}", schema.attributes()[label].name), budget)?;
        return Ok((StarModel { label: label_probs, conditionals: Vec::new() }, ledger));
    }

    let share = budget.split(features.len())?;
    let scale = 1.0 / share.epsilon();
    let mut label_mass = vec![0.0; 2];
    let mut conditionals = Vec::with_capacity(features.len());
    for &f in &features {
        let subset = AttributeSubset::new(vec![f, label], schema)?;
        let counts = marginal_counts(d, &subset, DEFAULT_DOMAIN_CAP)?;
        let joint = noisy_distribution(&counts, scale, noise, rng);
        ledger.record(
            format!("marginal ({}, {})", schema.attributes()[f].name, schema.attributes()[label].name),
            share,
        )?;
        // `subset` is sorted, so the label is either the slow or the fast axis.
        let card = schema.cardinality(f);
        let cell = |v: usize, y: usize| if f < label { joint[v * 2 + y] } else { joint[y * card + v] };
        let table: Vec<Vec<f64>> =
            (0..2).map(|y| normalize_or_uniform((0..card).map(|v| cell(v, y)).collect())).collect();
        for (y, mass) in label_mass.iter_mut().enumerate() {
            *mass += (0..card).map(|v| cell(v, y)).sum::<f64>();
        }
        conditionals.push((f, table));
    }
    Ok((StarModel { label: normalize_or_uniform(label_mass), conditionals }, ledger))
}

impl StarModel {
    pub fn sample<R: Rng + ?Sized>(&self, schema: &Schema, rows: usize, rng: &mut R) -> Dataset {
        let label_sampler = WeightedIndex::new(&self.label).expect("normalized label marginal");
        let tables: Vec<(usize, [WeightedIndex<f64>; 2])> = self
            .conditionals
            .iter()
            .map(|(a, t)| (*a, [0, 1].map(|y| WeightedIndex::new(&t[y]).expect("normalized conditional"))))
            .collect();
        let li = schema.label_index();
        let data = (0..rows)
            .map(|_| {
                let y = label_sampler.sample(rng);
                let mut row = vec![0u32; schema.len()];
                row[li] = y as u32;
                for (a, samplers) in &tables {
                    row[*a] = samplers[y].sample(rng) as u32;
                }
                row
            })
            .collect();
        Dataset::new(schema.clone(), data).expect("sampled values are in range")
    }
}
