//! JSON files passed between subcommands. Every artifact downstream of real
//! data carries the ledger that produced it.

use std::path::Path;

use dpens::accounting::{BudgetLedger, PrivacyBudget};
use dpens::data::Dataset;
use dpens::ensemble::{EnsembleModel, SynthesisPlan};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::files::read_text;

pub const CERTIFIED: &str = "certified";
pub const NOT_PRIVATE: &str = "NOT-PRIVATE";
pub const UNCERTIFIED: &str = "uncertified";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total: Option<PrivacyBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Certification {
    pub fn of(ledger: Option<&BudgetLedger>) -> Self {
        let Some(ledger) = ledger else {
            return Self { status: UNCERTIFIED.into(), total: None, reason: Some("no ledger".into()) };
        };
        match (ledger.not_private_reason(), ledger.certify()) {
            (Some(reason), _) => Self { status: NOT_PRIVATE.into(), total: None, reason: Some(reason.into()) },
            (None, Ok(total)) => Self { status: CERTIFIED.into(), total: Some(total), reason: None },
            (None, Err(e)) => Self { status: UNCERTIFIED.into(), total: None, reason: Some(e.to_string()) },
        }
    }

    pub fn is_certified(&self) -> bool {
        self.status == CERTIFIED
    }
}

/// Output of `discretize`: the ordinal dataset and the discretization spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetArtifact {
    pub certification: Certification,
    pub ledger: BudgetLedger,
    pub dataset: Dataset,
}

/// Reads either a `discretize` artifact or a bare dataset JSON.
pub fn load_dataset(path: &Path) -> CliResult<(Dataset, Option<BudgetLedger>)> {
    let text = read_text(path)?;
    let context = |e: serde_json::Error| CliError::data(format!("{}: {e}", path.display()));
    let mut value: serde_json::Value = serde_json::from_str(&text).map_err(context)?;
    match value.get_mut("dataset").map(serde_json::Value::take) {
        Some(dataset) => {
            let ledger = value.get_mut("ledger").map(serde_json::Value::take);
            Ok((
                serde_json::from_value(dataset).map_err(context)?,
                ledger.map(serde_json::from_value).transpose().map_err(context)?,
            ))
        }
        None => Ok((serde_json::from_value(value).map_err(context)?, None)),
    }
}

/// Output of `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthArtifact {
    pub certification: Certification,
    pub plan: SynthesisPlan,
    pub ledger: Option<BudgetLedger>,
    /// Ledger of the input dataset, when it came from `discretize`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_ledger: Option<BudgetLedger>,
    pub datasets: Vec<Dataset>,
}

/// Output of `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub certification: Certification,
    pub plan: SynthesisPlan,
    pub ledger: Option<BudgetLedger>,
    pub model: EnsembleModel,
}
