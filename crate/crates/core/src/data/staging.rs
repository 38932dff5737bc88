//! CSV ingestion into a staging table whose numeric columns still hold
//! reals, and the private discretization step that turns it into a
//! [`Dataset`].

use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{dp_discretize, Attribute, DataError, Dataset, Origin, Schema};
use crate::accounting::{BudgetLedger, PrivacyBudget};
use crate::random::Noise;

pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Categorical,
    Numeric,
    Label,
    /// Present in the CSV but dropped.
    Ignore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    /// Public clamping range of a numeric column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clamp: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Fixed category order; otherwise categories are indexed by first
    /// appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: Vec<ColumnSpec>,
    #[serde(default = "default_bins")]
    pub default_bins: usize,
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

impl SchemaConfig {
    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StagedColumn {
    Categorical { name: String, levels: Vec<String>, values: Vec<u32>, label: bool },
    Numeric { name: String, clamp: (f64, f64), bins: usize, values: Vec<f64> },
}

impl StagedColumn {
    pub fn name(&self) -> &str {
        match self {
            StagedColumn::Categorical { name, .. } | StagedColumn::Numeric { name, .. } => name,
        }
    }
}

/// Parsed CSV, numeric columns not yet discretized.
#[derive(Debug, Clone, PartialEq)]
pub struct StagedTable {
    pub columns: Vec<StagedColumn>,
    pub rows: usize,
}

enum Builder {
    Categorical { levels: Vec<String>, fixed: bool, values: Vec<u32>, label: bool },
    Numeric { clamp: (f64, f64), bins: usize, values: Vec<f64> },
}

/// Reads a headed, comma-separated file. `row` numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn load_csv<R: Read>(source: R, config: &SchemaConfig) -> Result<StagedTable, DataError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    for spec in &config.columns {
        if !header.contains(&spec.name) {
            return Err(DataError::UnknownColumn(spec.name.clone()));
        }
    }
    let labels = config.columns.iter().filter(|c| c.kind == ColumnKind::Label).count();
    if labels == 0 {
        return Err(DataError::MissingLabel);
    }
    if labels > 1 {
        return Err(DataError::InvalidSchema("more than one label column".into()));
    }

    // Column position in the CSV → builder, in CSV order.
    let mut builders: Vec<(usize, String, Builder)> = Vec::new();
    for (pos, name) in header.iter().enumerate() {
        let spec =
            config.columns.iter().find(|c| &c.name == name).ok_or_else(|| DataError::UnknownColumn(name.clone()))?;
        let builder = match spec.kind {
            ColumnKind::Ignore => continue,
            ColumnKind::Numeric => {
                let clamp = spec
                    .clamp
                    .ok_or_else(|| DataError::InvalidSchema(format!("numeric column `{name}` needs a clamp range")))?;
                let bins = spec.bins.unwrap_or(config.default_bins);
                if bins < 2 {
                    return Err(DataError::InvalidSchema(format!("column `{name}` needs at least 2 bins")));
                }
                Builder::Numeric { clamp, bins, values: Vec::new() }
            }
            ColumnKind::Categorical | ColumnKind::Label => {
                let label = spec.kind == ColumnKind::Label;
                let (levels, fixed) = match &spec.levels {
                    Some(l) => (l.clone(), true),
                    None => (Vec::new(), false),
                };
                if label && levels.len() > 2 {
                    return Err(DataError::InvalidSchema(format!("label `{name}` declares more than 2 levels")));
                }
                Builder::Categorical { levels, fixed, values: Vec::new(), label }
            }
        };
        builders.push((pos, name.clone(), builder));
    }

    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| DataError::Parse { row, column: String::new(), message: e.to_string() })?;
        for (pos, name, builder) in builders.iter_mut() {
            let cell = record.get(*pos).ok_or_else(|| DataError::Parse {
                row,
                column: name.clone(),
                message: "missing field".into(),
            })?;
            let err = |message: String| DataError::Parse { row, column: name.clone(), message };
            match builder {
                Builder::Numeric { values, .. } => {
                    let x: f64 = cell.parse().map_err(|_| err(format!("`{cell}` is not a number")))?;
                    if !x.is_finite() {
                        return Err(err(format!("`{cell}` is not finite")));
                    }
                    values.push(x);
                }
                Builder::Categorical { levels, fixed, values, label } => {
                    let idx = match levels.iter().position(|l| l == cell) {
                        Some(i) => i,
                        None if *fixed => return Err(err(format!("`{cell}` is not a declared level"))),
                        None if *label && levels.len() == 2 => {
                            return Err(err(format!("label has a third value `{cell}`")))
                        }
                        None => {
                            levels.push(cell.to_owned());
                            levels.len() - 1
                        }
                    };
                    values.push(idx as u32);
                }
            }
        }
        rows += 1;
    }

    let columns = builders
        .into_iter()
        .map(|(_, name, b)| match b {
            Builder::Categorical { levels, values, label, .. } => {
                StagedColumn::Categorical { name, levels, values, label }
            }
            Builder::Numeric { clamp, bins, values } => StagedColumn::Numeric { name, clamp, bins, values },
        })
        .collect();
    Ok(StagedTable { columns, rows })
}

impl StagedTable {
    pub fn numeric_columns(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c, StagedColumn::Numeric { .. })).count()
    }

    pub fn categorical_columns(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c, StagedColumn::Categorical { label: false, .. })).count()
    }

    /// Discretizes every numeric column, splitting `budget` evenly across
    /// them. Returns the dataset and a ledger with one spend per numeric
    /// column (empty when there are none).
    pub fn discretize<R: Rng + ?Sized>(
        &self,
        budget: PrivacyBudget,
        noise: Noise,
        rng: &mut R,
    ) -> Result<(Dataset, BudgetLedger), DataError> {
        let numeric = self.numeric_columns();
        let mut ledger = BudgetLedger::new(if numeric == 0 { PrivacyBudget::ZERO } else { budget });
        if noise.is_disabled() {
            ledger.mark_not_private("discretization noise disabled");
        }
        if numeric > 0 && self.rows == 0 {
            return Err(DataError::EmptyDataset);
        }
        let share = if numeric == 0 { PrivacyBudget::ZERO } else { budget.split(numeric)? };

        let mut attributes = Vec::with_capacity(self.columns.len());
        let mut columns: Vec<Vec<u32>> = Vec::with_capacity(self.columns.len());
        let mut label_index = None;
        for column in &self.columns {
            match column {
                StagedColumn::Categorical { name, levels, values, label } => {
                    if *label {
                        label_index = Some(attributes.len());
                    }
                    attributes.push(Attribute {
                        name: name.clone(),
                        cardinality: levels.len().max(2),
                        origin: Origin::Categorical,
                        levels: levels.clone(),
                        edges: Vec::new(),
                    });
                    columns.push(values.clone());
                }
                StagedColumn::Numeric { name, clamp, bins, values } => {
                    let d = dp_discretize(values, *bins, *clamp, share, noise, rng)?;
                    ledger.record(format!("discretize {name}"), share)?;
                    attributes.push(Attribute {
                        name: name.clone(),
                        cardinality: *bins,
                        origin: Origin::DiscretizedNumeric,
                        levels: Vec::new(),
                        edges: d.edges,
                    });
                    columns.push(d.ordinals);
                }
            }
        }
        let schema = Schema::new(attributes, label_index.ok_or(DataError::MissingLabel)?)?;
        let rows = (0..self.rows).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
        Ok((Dataset::new(schema, rows)?, ledger))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::rng_from_seed;

    const CONFIG: &str = r#"{
        "columns": [
            {"name": "age", "kind": "numeric", "clamp": [17, 90], "bins": 4},
            {"name": "job", "kind": "categorical"},
            {"name": "hours", "kind": "numeric", "clamp": [0, 100]},
            {"name": "note", "kind": "ignore"},
            {"name": "income", "kind": "label", "levels": ["<=50K", ">50K"]}
        ]
    }"#;

    fn config() -> SchemaConfig {
        SchemaConfig::from_json(CONFIG).unwrap()
    }

    #[test]
    fn loads_and_maps_categories_by_first_appearance() {
        let csv = "age,job,hours,note,income\n30,clerk,40,x,<=50K\n45,chef,50,y,>50K\n22,clerk,20,z,<=50K\n";
        let t = load_csv(csv.as_bytes(), &config()).unwrap();
        assert_eq!(t.rows, 3);
        assert_eq!(t.numeric_columns(), 2);
        assert_eq!(t.categorical_columns(), 1);
        match &t.columns[1] {
            StagedColumn::Categorical { levels, values, .. } => {
                assert_eq!(levels, &["clerk", "chef"]);
                assert_eq!(values, &[0, 1, 0]);
            }
            _ => panic!("job should be categorical"),
        }
        match &t.columns[3] {
            StagedColumn::Categorical { values, label, .. } => {
                assert!(label);
                assert_eq!(values, &[0, 1, 0]);
            }
            _ => panic!("income should be the label"),
        }
    }

    #[test]
    fn header_only_gives_empty_table() {
        let t = load_csv("age,job,hours,note,income\n".as_bytes(), &config()).unwrap();
        assert_eq!(t.rows, 0);
    }

    #[test]
    fn bad_numeric_token_reports_row() {
        let csv = "age,job,hours,note,income\n30,clerk,40,x,<=50K\nold,chef,50,y,>50K\n";
        match load_csv(csv.as_bytes(), &config()) {
            Err(DataError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "age");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn config_errors() {
        let csv = "age,job,hours,note\n";
        assert!(matches!(load_csv(csv.as_bytes(), &config()), Err(DataError::UnknownColumn(c)) if c == "income"));
        let extra = "age,job,hours,note,income,zip\n";
        assert!(matches!(load_csv(extra.as_bytes(), &config()), Err(DataError::UnknownColumn(c)) if c == "zip"));
        let mut no_label = config();
        no_label.columns[4].kind = ColumnKind::Categorical;
        assert!(matches!(load_csv("age,job,hours,note,income\n".as_bytes(), &no_label), Err(DataError::MissingLabel)));
        let bad_label = "age,job,hours,note,income\n30,clerk,40,x,maybe\n";
        assert!(matches!(load_csv(bad_label.as_bytes(), &config()), Err(DataError::Parse { row: 1, .. })));
    }

    #[test]
    fn discretize_records_one_spend_per_numeric_column() {
        let mut csv = String::from("age,job,hours,note,income\n");
        for i in 0..200 {
            csv.push_str(&format!(
                "{},{},{},n,{}\n",
                17 + i % 70,
                ["a", "b", "c"][i % 3],
                i % 90,
                [">50K", "<=50K"][i % 2]
            ));
        }
        let t = load_csv(csv.as_bytes(), &config()).unwrap();
        let budget = PrivacyBudget::pure(1.0).unwrap();
        let (d, ledger) = t.discretize(budget, Noise::Laplace, &mut rng_from_seed(9)).unwrap();
        assert_eq!(d.len(), 200);
        assert_eq!(d.schema().len(), 4);
        assert_eq!(d.schema().label_index(), 3);
        assert_eq!(d.schema().cardinality(0), 4);
        assert_eq!(d.schema().cardinality(2), DEFAULT_BINS);
        assert_eq!(ledger.entries().len(), 2);
        assert!(ledger.entries().iter().all(|e| e.spend.epsilon() == 0.5));
        assert!(ledger.certify().is_ok());
        // label ">50K" is level 1 because levels were declared
        assert!(d.label(0));

        let (_, fake) = t.discretize(budget, Noise::Disabled, &mut rng_from_seed(9)).unwrap();
        assert!(fake.certify().is_err());
    }
}
