//! Discrete tabular datasets.
//!
//! Every attribute has a finite domain `0..cardinality`; one binary
//! attribute is the classification label. Rows are vectors of category
//! indices, one per attribute.

mod discretize;
pub mod ground_truth;
mod staging;

pub use discretize::{dp_discretize, Discretization};
pub use staging::{load_csv, ColumnKind, ColumnSpec, SchemaConfig, StagedColumn, StagedTable};

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::accounting::{AccountingError, SamplingRate};

/// Largest joint domain (in cells) any marginal or distribution may span.
pub const DEFAULT_DOMAIN_CAP: usize = 1 << 20;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("no label column")]
    MissingLabel,
    #[error("invalid schema: {0}")]
    InvalidSchema(String),
    #[error("row {row}: value {value} out of range for attribute `{attribute}`")]
    OutOfRange { row: usize, attribute: String, value: u32 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("joint domain of {cells} cells exceeds cap {cap}")]
    DomainTooLarge { cells: u128, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Budget(#[from] AccountingError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Categorical,
    DiscretizedNumeric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub cardinality: usize,
    pub origin: Origin,
    /// Category names in index order, when known.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
    /// Bin edges of a discretized numeric attribute (`cardinality + 1` values).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<f64>,
}

impl Attribute {
    pub fn categorical(name: impl Into<String>, cardinality: usize) -> Self {
        Self { name: name.into(), cardinality, origin: Origin::Categorical, levels: Vec::new(), edges: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    attributes: Vec<Attribute>,
    label_index: usize,
}

#[derive(Deserialize)]
struct RawSchema {
    attributes: Vec<Attribute>,
    label_index: usize,
}

impl TryFrom<RawSchema> for Schema {
    type Error = DataError;

    fn try_from(raw: RawSchema) -> Result<Self, DataError> {
        Schema::new(raw.attributes, raw.label_index)
    }
}

impl Schema {
    pub fn new(attributes: Vec<Attribute>, label_index: usize) -> Result<Self, DataError> {
        let label = attributes.get(label_index).ok_or(DataError::MissingLabel)?;
        if label.cardinality != 2 {
            return Err(DataError::InvalidSchema(format!(
                "label `{}` must be binary, has cardinality {}",
                label.name, label.cardinality
            )));
        }
        for (i, a) in attributes.iter().enumerate() {
            if a.cardinality < 2 || a.cardinality > u32::MAX as usize {
                return Err(DataError::InvalidSchema(format!(
                    "attribute `{}` has cardinality {}",
                    a.name, a.cardinality
                )));
            }
            if attributes[..i].iter().any(|b| b.name == a.name) {
                return Err(DataError::InvalidSchema(format!("duplicate attribute `{}`", a.name)));
            }
        }
        Ok(Self { attributes, label_index })
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn label_index(&self) -> usize {
        self.label_index
    }

    pub fn cardinality(&self, attribute: usize) -> usize {
        self.attributes[attribute].cardinality
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.attributes.iter().map(|a| a.cardinality).collect()
    }

    /// Indices of every non-label attribute, in schema order.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| i != self.label_index).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// Number of cells in the joint domain of all attributes.
    pub fn domain_size(&self) -> u128 {
        self.attributes.iter().map(|a| a.cardinality as u128).product()
    }
}

/// Sorted, distinct attribute indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AttributeSubset(Vec<usize>);

impl AttributeSubset {
    pub fn new(mut indices: Vec<usize>, schema: &Schema) -> Result<Self, DataError> {
        indices.sort_unstable();
        let before = indices.len();
        indices.dedup();
        if indices.len() != before {
            return Err(DataError::InvalidArgument("attribute subset repeats an index".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= schema.len()) {
            return Err(DataError::InvalidArgument(format!("attribute index {bad} out of bounds")));
        }
        Ok(Self(indices))
    }

    /// Every attribute of the schema.
    pub fn all(schema: &Schema) -> Self {
        Self((0..schema.len()).collect())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn domain_size(&self, schema: &Schema) -> u128 {
        self.0.iter().map(|&i| schema.cardinality(i) as u128).product()
    }

    /// Checked joint domain size.
    pub fn checked_domain(&self, schema: &Schema, cap: usize) -> Result<usize, DataError> {
        let cells = self.domain_size(schema);
        if cells > cap as u128 {
            Err(DataError::DomainTooLarge { cells, cap })
        } else {
            Ok(cells as usize)
        }
    }

    /// Row-major cell index of `row` restricted to this subset (first
    /// attribute varies slowest).
    pub fn cell_of(&self, schema: &Schema, row: &[u32]) -> usize {
        self.0.iter().fold(0usize, |acc, &a| acc * schema.cardinality(a) + row[a] as usize)
    }
}

/// Rows of category indices under a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataset")]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<u32>>,
}

#[derive(Deserialize)]
struct RawDataset {
    schema: Schema,
    rows: Vec<Vec<u32>>,
}

impl TryFrom<RawDataset> for Dataset {
    type Error = DataError;

    fn try_from(raw: RawDataset) -> Result<Self, DataError> {
        Dataset::new(raw.schema, raw.rows)
    }
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<u32>>) -> Result<Self, DataError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(DataError::InvalidArgument(format!(
                    "row {r} has {} values, schema has {} attributes",
                    row.len(),
                    schema.len()
                )));
            }
            for (a, &v) in row.iter().enumerate() {
                if v as usize >= schema.cardinality(a) {
                    return Err(DataError::OutOfRange {
                        row: r,
                        attribute: schema.attributes[a].name.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(Self { schema, rows })
    }

    pub fn empty(schema: Schema) -> Self {
        Self { schema, rows: Vec::new() }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label(&self, row: usize) -> bool {
        self.rows[row][self.schema.label_index] == 1
    }

    pub fn labels(&self) -> impl Iterator<Item = bool> + '_ {
        let l = self.schema.label_index;
        self.rows.iter().map(move |r| r[l] == 1)
    }

    pub fn positives(&self) -> usize {
        self.labels().filter(|&y| y).count()
    }

    /// Rows at `indices`, in the order given.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset { schema: self.schema.clone(), rows: indices.iter().map(|&i| self.rows[i].clone()).collect() }
    }

    pub fn to_json(&self) -> Result<String, DataError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DataError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Keeps each row independently with probability `p`, preserving order.
pub fn poisson_subsample<R: Rng + ?Sized>(d: &Dataset, p: SamplingRate, rng: &mut R) -> Dataset {
    let p = p.value();
    let rows = d.rows.iter().filter(|_| rng.random::<f64>() < p).cloned().collect();
    Dataset { schema: d.schema.clone(), rows }
}

/// Draws `⌈fraction·n⌉` rows uniformly without replacement. The chosen rows
/// keep their original relative order, so `fraction = 1` returns `d` itself.
pub fn resample_fraction<R: Rng + ?Sized>(d: &Dataset, fraction: f64, rng: &mut R) -> Result<Dataset, DataError> {
    if d.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::InvalidArgument(format!("resample fraction {fraction} not in (0, 1]")));
    }
    let n = d.len();
    let m = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut picked = index::sample(rng, n, m).into_vec();
    picked.sort_unstable();
    Ok(d.select(&picked))
}

/// Counts over the joint domain of `attrs`, row-major with the first
/// attribute varying slowest.
pub fn marginal_counts(d: &Dataset, attrs: &AttributeSubset, cap: usize) -> Result<Vec<u64>, DataError> {
    let cells = attrs.checked_domain(&d.schema, cap)?;
    let mut counts = vec![0u64; cells];
    for row in &d.rows {
        counts[attrs.cell_of(&d.schema, row)] += 1;
    }
    Ok(counts)
}
