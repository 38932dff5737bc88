//! The four strategies for turning one privacy budget into a predictor.
//!
//! | strategy | mechanism runs | budget per run | models |
//! |---|---|---|---|
//! | `without-ensemble` | 1 | total | 1 |
//! | `model-ensemble` | 1 | total | k, each on a resample |
//! | `simple-dp-ensemble` | k | `(ε/k, δ/k)` | k |
//! | `dp-ensemble-subsampling` | k, each on a Poisson sample | inverse-amplified `(ε/k, δ/k)` | k |
//!
//! Every plan's randomness is derived from its seed, per run and per stream,
//! so a plan gives bit-identical output whether members run in parallel or
//! not. Only the coordinator writes the ledger.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{per_run_budget, AccountingError, BudgetLedger, PrivacyBudget, SamplingRate};
use crate::data::{poisson_subsample, resample_fraction, DataError, Dataset};
use crate::mechanisms::{generate, MechanismConfig, MechanismError};
use crate::models::{train, Classifier, ModelConfig, ModelError};
use crate::random::{derive_seed, rng_from_seed};

const STREAM_SUBSAMPLE: u64 = 1;
const STREAM_MECHANISM: u64 = 2;
const STREAM_RESAMPLE: u64 = 3;
const STREAM_MODEL: u64 = 4;

/// Retries for a member whose Poisson sample came out empty.
pub const EMPTY_SUBSAMPLE_RETRIES: u64 = 3;

pub const DEFAULT_RESAMPLE_FRACTION: f64 = 0.8;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("cannot run a plan on an empty dataset")]
    EmptyDataset,
    #[error("run {run}: Poisson subsample empty after {attempts} attempts")]
    EmptySubsample { run: usize, attempts: u64 },
    #[error("run {run}: {source}")]
    Mechanism { run: usize, source: MechanismError },
    #[error("member {member}: {source}")]
    Model { member: usize, source: ModelError },
    #[error("member {member}: {source}")]
    Data { member: usize, source: DataError },
    #[error(transparent)]
    Accounting(#[from] AccountingError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    WithoutEnsemble,
    ModelEnsemble,
    SimpleDpEnsemble,
    DpEnsembleSubsampling,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::WithoutEnsemble,
        Strategy::ModelEnsemble,
        Strategy::SimpleDpEnsemble,
        Strategy::DpEnsembleSubsampling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::WithoutEnsemble => "without-ensemble",
            Strategy::ModelEnsemble => "model-ensemble",
            Strategy::SimpleDpEnsemble => "simple-dp-ensemble",
            Strategy::DpEnsembleSubsampling => "dp-ensemble-subsampling",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn one() -> usize {
    1
}

fn default_resample_fraction() -> f64 {
    DEFAULT_RESAMPLE_FRACTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisPlan {
    pub strategy: Strategy,
    pub total_budget: PrivacyBudget,
    #[serde(default = "one")]
    pub k: usize,
    /// Poisson sampling rate; only read by `dp-ensemble-subsampling`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<SamplingRate>,
    pub mechanism: MechanismConfig,
    pub model: ModelConfig,
    /// Fraction of the synthetic rows each `model-ensemble` member sees.
    #[serde(default = "default_resample_fraction")]
    pub resample_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SynthesisPlan {
    pub fn new(
        strategy: Strategy,
        total_budget: PrivacyBudget,
        k: usize,
        mechanism: MechanismConfig,
        model: ModelConfig,
    ) -> Self {
        Self {
            strategy,
            total_budget,
            k,
            p: None,
            mechanism,
            model,
            resample_fraction: DEFAULT_RESAMPLE_FRACTION,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        if self.k == 0 {
            return Err(EnsembleError::InvalidPlan("k must be at least 1".into()));
        }
        if self.strategy == Strategy::WithoutEnsemble && self.k != 1 {
            return Err(EnsembleError::InvalidPlan("without-ensemble requires k = 1".into()));
        }
        match (self.strategy, self.p) {
            (Strategy::DpEnsembleSubsampling, None) => {
                return Err(EnsembleError::InvalidPlan("dp-ensemble-subsampling requires p".into()))
            }
            (Strategy::DpEnsembleSubsampling, Some(_)) | (_, None) => {}
            (s, Some(_)) => return Err(EnsembleError::InvalidPlan(format!("{s} does not take p"))),
        }
        if !(self.resample_fraction > 0.0 && self.resample_fraction <= 1.0) {
            return Err(EnsembleError::InvalidPlan(format!(
                "resample_fraction {} not in (0, 1]",
                self.resample_fraction
            )));
        }
        self.mechanism.validate().map_err(|source| EnsembleError::Mechanism { run: 0, source })?;
        Ok(())
    }

    /// Number of mechanism runs.
    pub fn runs(&self) -> usize {
        match self.strategy {
            Strategy::WithoutEnsemble | Strategy::ModelEnsemble => 1,
            Strategy::SimpleDpEnsemble | Strategy::DpEnsembleSubsampling => self.k,
        }
    }

    /// Number of trained models.
    pub fn members(&self) -> usize {
        match self.strategy {
            Strategy::WithoutEnsemble => 1,
            _ => self.k,
        }
    }

    /// The sampling rate actually applied; `p = 1` means no subsampling.
    pub fn effective_sampling(&self) -> Option<SamplingRate> {
        match self.strategy {
            Strategy::DpEnsembleSubsampling => self.p.filter(|p| !p.is_full()),
            _ => None,
        }
    }

    /// Budget each mechanism run is executed at.
    pub fn run_budget(&self) -> Result<PrivacyBudget, EnsembleError> {
        Ok(per_run_budget(self.total_budget, self.runs(), self.effective_sampling())?)
    }
}

/// Mean of the member confidences; predicts positive at ≥ 0.5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    members: Vec<Classifier>,
}

impl EnsembleModel {
    pub fn new(members: Vec<Classifier>) -> Result<Self, EnsembleError> {
        if members.is_empty() {
            return Err(EnsembleError::InvalidPlan("an ensemble needs at least one member".into()));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Classifier] {
        &self.members
    }

    pub fn confidence(&self, row: &[u32]) -> f64 {
        aggregate_confidence(self.members.iter().map(|m| m.confidence(row)))
    }

    pub fn predict(&self, row: &[u32]) -> bool {
        self.confidence(row) >= 0.5
    }
}

/// Arithmetic mean. Values are sorted and averaged as offsets from the
/// smallest, so the result ignores member order and identical members give
/// back their common value exactly.
pub fn aggregate_confidence(confidences: impl IntoIterator<Item = f64>) -> f64 {
    let mut c: Vec<f64> = confidences.into_iter().collect();
    assert!(!c.is_empty(), "no confidences to aggregate");
    c.sort_by(f64::total_cmp);
    let base = c[0];
    (base + c.iter().map(|v| v - base).sum::<f64>() / c.len() as f64).clamp(0.0, 1.0)
}

/// Synthetic data produced by a plan, with the ledger of its spends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Synthesized {
    pub plan: SynthesisPlan,
    pub ledger: BudgetLedger,
    /// One dataset per mechanism run.
    pub datasets: Vec<Dataset>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutput {
    pub model: EnsembleModel,
    pub ledger: BudgetLedger,
    pub synthetic: Vec<Dataset>,
}

/// Runs the mechanism stage and the model stage of `plan`.
pub fn run_plan(real: &Dataset, plan: &SynthesisPlan) -> Result<PlanOutput, EnsembleError> {
    let synth = synthesize(real, plan)?;
    let model = train_members(&synth.datasets, plan)?;
    Ok(PlanOutput { model, ledger: synth.ledger, synthetic: synth.datasets })
}

fn subsample_for_run(real: &Dataset, plan: &SynthesisPlan, run: usize) -> Result<Dataset, EnsembleError> {
    let Some(p) = plan.effective_sampling() else { return Ok(real.clone()) };
    for attempt in 0..=EMPTY_SUBSAMPLE_RETRIES {
        let mut rng = rng_from_seed(derive_seed(plan.seed, &[run as u64, STREAM_SUBSAMPLE, attempt]));
        let sample = poisson_subsample(real, p, &mut rng);
        if !sample.is_empty() {
            return Ok(sample);
        }
    }
    Err(EnsembleError::EmptySubsample { run, attempts: EMPTY_SUBSAMPLE_RETRIES + 1 })
}

/// Runs every mechanism invocation of `plan` and certifies the resulting
/// ledger against the plan's total budget.
pub fn synthesize(real: &Dataset, plan: &SynthesisPlan) -> Result<Synthesized, EnsembleError> {
    plan.validate()?;
    if real.is_empty() {
        return Err(EnsembleError::EmptyDataset);
    }
    let budget = plan.run_budget()?;
    let mut mechanism = plan.mechanism.clone();
    // Synthetic sets match the real data's size even when built from a subsample.
    mechanism.output_rows.get_or_insert(real.len());

    let runs: Vec<Result<_, EnsembleError>> = (0..plan.runs())
        .into_par_iter()
        .map(|run| {
            let input = subsample_for_run(real, plan, run)?;
            let mut rng = rng_from_seed(derive_seed(plan.seed, &[run as u64, STREAM_MECHANISM]));
            let out = generate(&input, budget, &mechanism, &mut rng)
                .map_err(|source| EnsembleError::Mechanism { run, source })?;
            Ok(out)
        })
        .collect();

    let mut ledger = BudgetLedger::new(plan.total_budget);
    let mut datasets = Vec::with_capacity(runs.len());
    for (run, out) in runs.into_iter().enumerate() {
        let out = out?;
        let label = format!("run {run}: {}", plan.mechanism.kind.name());
        match out.ledger.not_private_reason() {
            Some(reason) => ledger.mark_not_private(reason),
            None => {
                out.ledger.certify()?;
            }
        }
        match plan.effective_sampling() {
            Some(p) => ledger.record_subsampled(label, budget, p)?,
            None => ledger.record(label, budget)?,
        }
        datasets.push(out.data);
    }
    if ledger.is_private() {
        ledger.certify()?;
    }
    Ok(Synthesized { plan: plan.clone(), ledger, datasets })
}

/// Trains the plan's members on synthetic data. This is post-processing and
/// touches neither the real data nor the ledger.
pub fn train_members(datasets: &[Dataset], plan: &SynthesisPlan) -> Result<EnsembleModel, EnsembleError> {
    plan.validate()?;
    if datasets.len() != plan.runs() {
        return Err(EnsembleError::InvalidPlan(format!(
            "expected {} synthetic datasets, got {}",
            plan.runs(),
            datasets.len()
        )));
    }
    let members: Vec<Result<Classifier, EnsembleError>> = (0..plan.members())
        .into_par_iter()
        .map(|member| {
            let data = match plan.strategy {
                Strategy::ModelEnsemble => {
                    let mut rng = rng_from_seed(derive_seed(plan.seed, &[member as u64, STREAM_RESAMPLE]));
                    resample_fraction(&datasets[0], plan.resample_fraction, &mut rng)
                        .map_err(|source| EnsembleError::Data { member, source })?
                }
                _ => datasets[member].clone(),
            };
            let mut rng = rng_from_seed(derive_seed(plan.seed, &[member as u64, STREAM_MODEL]));
            train(&data, &plan.model, &mut rng).map_err(|source| EnsembleError::Model { member, source })
        })
        .collect();
    EnsembleModel::new(members.into_iter().collect::<Result<_, _>>()?)
}
