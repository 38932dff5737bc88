//! Private synthesizers over discrete schemas.
//!
//! Both mechanisms are pure ε-DP (Laplace and exponential mechanisms); the
//! δ part of the budget they are handed is charged but unused. Each run
//! returns its own sub-ledger that composes exactly to the budget it was
//! given, which the ensemble layer checks before charging its own ledger.

mod marginals;
mod mwem;

pub use marginals::{independent_marginals_fit, label_star_fit, noisy_distribution, StarModel};
pub use mwem::{mwem_fit, sample_from_distribution, DomainDistribution, MwemFit};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{AccountingError, BudgetLedger, PrivacyBudget};
use crate::data::{AttributeSubset, DataError, Dataset, Schema, DEFAULT_DOMAIN_CAP};
use crate::random::Noise;

pub const DEFAULT_ROUNDS: usize = 30;

#[derive(Debug, Error)]
pub enum MechanismError {
    #[error("joint domain of {cells} cells exceeds cap {cap}")]
    DomainTooLarge { cells: u128, cap: usize },
    #[error("cannot synthesize from an empty dataset")]
    EmptyDataset,
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error("invalid mechanism config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Accounting(#[from] AccountingError),
    #[error(transparent)]
    Data(DataError),
}

impl From<DataError> for MechanismError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::DomainTooLarge { cells, cap } => MechanismError::DomainTooLarge { cells, cap },
            DataError::EmptyDataset => MechanismError::EmptyDataset,
            other => MechanismError::Data(other),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    IndependentMarginals,
    Mwem,
}

impl MechanismKind {
    pub fn name(self) -> &'static str {
        match self {
            MechanismKind::IndependentMarginals => "independent-marginals",
            MechanismKind::Mwem => "mwem",
        }
    }
}

/// Which marginals the noisy-marginals mechanism measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginalSet {
    /// One 1-way marginal per attribute; attributes are sampled independently.
    OneWay,
    /// One (feature, label) marginal per feature; rows are sampled label first,
    /// then each feature given the label.
    #[default]
    PairsWithLabel,
}

/// MWEM workload: sets of attributes whose marginal cells are the queries.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadSpec {
    /// Every 1-way marginal plus every 2-way marginal containing the label.
    #[default]
    PairsWithLabel,
    /// Every 1-way and every 2-way marginal.
    AllPairs,
    /// Explicit attribute-name lists.
    Explicit(Vec<Vec<String>>),
}

impl WorkloadSpec {
    pub fn resolve(&self, schema: &Schema) -> Result<Vec<AttributeSubset>, MechanismError> {
        let one_way = (0..schema.len()).map(|i| AttributeSubset::new(vec![i], schema));
        let subsets: Result<Vec<_>, DataError> = match self {
            WorkloadSpec::PairsWithLabel => {
                let label = schema.label_index();
                one_way
                    .chain(schema.feature_indices().into_iter().map(|f| AttributeSubset::new(vec![f, label], schema)))
                    .collect()
            }
            WorkloadSpec::AllPairs => {
                let n = schema.len();
                one_way
                    .chain(
                        (0..n)
                            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                            .map(|(i, j)| AttributeSubset::new(vec![i, j], schema)),
                    )
                    .collect()
            }
            WorkloadSpec::Explicit(lists) => lists
                .iter()
                .map(|names| {
                    let idx = names
                        .iter()
                        .map(|n| schema.index_of(n).ok_or_else(|| DataError::UnknownColumn(n.clone())))
                        .collect::<Result<Vec<_>, _>>()?;
                    AttributeSubset::new(idx, schema)
                })
                .collect(),
        };
        let subsets = subsets?;
        if subsets.is_empty() {
            return Err(MechanismError::InvalidConfig("MWEM needs a non-empty workload".into()));
        }
        if subsets.iter().any(|s| s.indices().is_empty()) {
            return Err(MechanismError::InvalidConfig("workload contains an empty attribute set".into()));
        }
        for s in &subsets {
            s.checked_domain(schema, DEFAULT_DOMAIN_CAP)?;
        }
        Ok(subsets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismConfig {
    pub kind: MechanismKind,
    /// MWEM round count `T`.
    #[serde(default = "default_rounds")]
    pub rounds: usize,
    /// Synthetic rows to emit; defaults to the size of the input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_rows: Option<usize>,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub marginals: MarginalSet,
    /// Test hook: skip all noise. Output is NOT private and its ledger
    /// refuses certification.
    #[serde(default)]
    pub noise_disabled_test_mode: bool,
}

fn default_rounds() -> usize {
    DEFAULT_ROUNDS
}

impl MechanismConfig {
    pub fn new(kind: MechanismKind) -> Self {
        Self {
            kind,
            rounds: DEFAULT_ROUNDS,
            output_rows: None,
            workload: WorkloadSpec::default(),
            marginals: MarginalSet::default(),
            noise_disabled_test_mode: false,
        }
    }

    pub fn noise(&self) -> Noise {
        Noise::from_disabled_flag(self.noise_disabled_test_mode)
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        if self.output_rows == Some(0) {
            return Err(MechanismError::InvalidConfig("output_rows must be at least 1".into()));
        }
        if self.kind == MechanismKind::Mwem && self.rounds == 0 {
            return Err(MechanismError::InvalidConfig("MWEM needs at least one round".into()));
        }
        if let WorkloadSpec::Explicit(lists) = &self.workload {
            if self.kind == MechanismKind::Mwem && lists.is_empty() {
                return Err(MechanismError::InvalidConfig("MWEM needs a non-empty workload".into()));
            }
        }
        Ok(())
    }
}

/// A synthetic dataset and the spends that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub data: Dataset,
    pub ledger: BudgetLedger,
}

/// Runs the configured mechanism on `d` at exactly `budget`.
pub fn generate<R: Rng + ?Sized>(
    d: &Dataset,
    budget: PrivacyBudget,
    cfg: &MechanismConfig,
    rng: &mut R,
) -> Result<Synthesis, MechanismError> {
    cfg.validate()?;
    if d.is_empty() {
        return Err(MechanismError::EmptyDataset);
    }
    let noise = cfg.noise();
    check_budget(budget, noise)?;
    let rows = cfg.output_rows.unwrap_or(d.len());

    let (data, mut ledger) = match cfg.kind {
        MechanismKind::IndependentMarginals => match cfg.marginals {
            MarginalSet::OneWay => {
                let (probs, ledger) = independent_marginals_fit(d, budget, noise, rng)?;
                (marginals::sample_independent(d.schema(), &probs, rows, rng), ledger)
            }
            MarginalSet::PairsWithLabel => {
                let (model, ledger) = label_star_fit(d, budget, noise, rng)?;
                (model.sample(d.schema(), rows, rng), ledger)
            }
        },
        MechanismKind::Mwem => {
            let workload = cfg.workload.resolve(d.schema())?;
            let fit = mwem_fit(d, budget, &workload, cfg.rounds, noise, false, rng)?;
            (sample_from_distribution(&fit.distribution, d.schema(), rows, rng), fit.ledger)
        }
    };
    if noise.is_disabled() {
        ledger.mark_not_private("mechanism noise disabled (test mode)");
    }
    Ok(Synthesis { data, ledger })
}

pub(crate) fn check_budget(budget: PrivacyBudget, noise: Noise) -> Result<(), MechanismError> {
    if !noise.is_disabled() && budget.epsilon() <= 0.0 {
        return Err(MechanismError::InvalidBudget(format!("epsilon must be positive, got {}", budget.epsilon())));
    }
    Ok(())
}
