use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::BoxStats;
use super::{accuracy, ece, majority_baseline, train_test_split, EvalError, DEFAULT_ECE_BINS};
use crate::accounting::{PrivacyBudget, SamplingRate};
use crate::data::{ground_truth, load_csv, Dataset, SchemaConfig};
use crate::ensemble::{run_plan, EnsembleError, Strategy, SynthesisPlan, DEFAULT_RESAMPLE_FRACTION};
use crate::mechanisms::MechanismConfig;
use crate::models::ModelConfig;
use crate::random::{derive_seed, rng_from_seed, Noise};

pub const CSV_HEADER: &str =
    "strategy,mechanism,model,epsilon,delta,k,p,repeat,seed,accuracy,ece,wall_ms,ledger_eps,ledger_delta,status";

const STREAM_SPLIT: u64 = 0;
const STREAM_DISCRETIZE: u64 = 1;
const STREAM_RUNS: u64 = 2;

/// Where the real data comes from. Relative paths resolve against the
/// config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DatasetSpec {
    /// The bundled churn-like generator with a known dependence structure.
    GroundTruth { rows: usize, seed: u64 },
    /// An already discretized dataset JSON.
    Json { path: PathBuf },
    /// Raw CSV, discretized privately with `discretize_epsilon` before use.
    Csv { path: PathBuf, schema: PathBuf, discretize_epsilon: f64 },
}

/// Cartesian sweep over strategies, budgets, `k`, mechanisms and models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGrid {
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    pub epsilons: Vec<f64>,
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub ks: Vec<usize>,
    /// Sampling rates for `dp-ensemble-subsampling` cells.
    #[serde(default = "default_ps")]
    pub ps: Vec<f64>,
    pub mechanisms: Vec<MechanismConfig>,
    #[serde(default = "ModelConfig::defaults")]
    pub models: Vec<ModelConfig>,
    #[serde(default = "default_resample_fraction")]
    pub resample_fraction: f64,
}

fn all_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}

fn default_delta() -> f64 {
    1e-6
}

fn default_ps() -> Vec<f64> {
    vec![0.2]
}

fn default_resample_fraction() -> f64 {
    DEFAULT_RESAMPLE_FRACTION
}

fn default_repeats() -> usize {
    1
}

fn default_bins() -> usize {
    DEFAULT_ECE_BINS
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub plans: Vec<SynthesisPlan>,
    #[serde(default)]
    pub grid: Option<PlanGrid>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_bins")]
    pub ece_bins: usize,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
    /// Give every repeat of a plan the same seed (determinism audit).
    #[serde(default)]
    pub identical_seeds: bool,
    /// Fill `wall_ms`; off by default so result files are reproducible.
    #[serde(default)]
    pub record_wall_time: bool,
}

/// Identity of a result cell; repeats of one variant share it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub strategy: Strategy,
    pub mechanism: String,
    pub model: String,
    pub epsilon: f64,
    pub delta: f64,
    /// Ensemble size of the sweep point. A `without-ensemble` cell keeps the
    /// sweep's `k` as its label while its plan runs with `k = 1`.
    pub k: usize,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub cell: CellKey,
    pub plan: SynthesisPlan,
}

impl BenchmarkConfig {
    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        if self.ece_bins < 2 {
            return bad(format!("ece_bins must be at least 2, got {}", self.ece_bins));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} not in (0, 1)", self.test_fraction));
        }
        if let DatasetSpec::GroundTruth { rows: 0, .. } = self.dataset {
            return bad("ground-truth dataset needs rows > 0".into());
        }
        if let DatasetSpec::Csv { discretize_epsilon, .. } = self.dataset {
            if !(discretize_epsilon > 0.0 && discretize_epsilon.is_finite()) {
                return bad(format!("discretize_epsilon must be positive, got {discretize_epsilon}"));
            }
        }
        let variants = self.variants()?;
        if variants.is_empty() {
            return bad("no plans to run".into());
        }
        for v in &variants {
            v.plan.validate().map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        }
        Ok(())
    }

    /// Explicit plans first, then the grid in strategy, ε, k, p, mechanism,
    /// model order.
    pub fn variants(&self) -> Result<Vec<Variant>, EvalError> {
        let mut out: Vec<Variant> = self
            .plans
            .iter()
            .map(|plan| Variant {
                cell: CellKey {
                    strategy: plan.strategy,
                    mechanism: plan.mechanism.kind.name().into(),
                    model: plan.model.name(),
                    epsilon: plan.total_budget.epsilon(),
                    delta: plan.total_budget.delta(),
                    k: plan.k,
                    p: plan.p.map(|p| p.value()),
                },
                plan: plan.clone(),
            })
            .collect();
        let Some(grid) = &self.grid else { return Ok(out) };
        let invalid = |e: &dyn std::fmt::Display| EvalError::InvalidConfig(e.to_string());
        for &strategy in &grid.strategies {
            for &epsilon in &grid.epsilons {
                let budget = PrivacyBudget::new(epsilon, grid.delta).map_err(|e| invalid(&e))?;
                for &k in &grid.ks {
                    let ps: Vec<Option<f64>> = match strategy {
                        Strategy::DpEnsembleSubsampling => grid.ps.iter().map(|&p| Some(p)).collect(),
                        _ => vec![None],
                    };
                    for p in ps {
                        for mechanism in &grid.mechanisms {
                            for model in &grid.models {
                                let plan_k = if strategy == Strategy::WithoutEnsemble { 1 } else { k };
                                let mut plan =
                                    SynthesisPlan::new(strategy, budget, plan_k, mechanism.clone(), model.clone());
                                plan.p = p.map(SamplingRate::new).transpose().map_err(|e| invalid(&e))?;
                                plan.resample_fraction = grid.resample_fraction;
                                let cell = CellKey {
                                    strategy,
                                    mechanism: mechanism.kind.name().into(),
                                    model: model.name(),
                                    epsilon,
                                    delta: grid.delta,
                                    k,
                                    p,
                                };
                                out.push(Variant { cell, plan });
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Loads the real dataset. CSV input is discretized here at its own
    /// budget, separate from any plan's.
    pub fn load_dataset(&self, base_dir: &Path) -> Result<Dataset, EvalError> {
        let open = |p: &Path| {
            let path = base_dir.join(p);
            File::open(&path).map_err(|source| match source.kind() {
                std::io::ErrorKind::NotFound => EvalError::DatasetNotFound(path.clone()),
                _ => EvalError::Io { path: path.clone(), source },
            })
        };
        match &self.dataset {
            DatasetSpec::GroundTruth { rows, seed } => Ok(ground_truth::generate(*rows, *seed)),
            DatasetSpec::Json { path } => {
                let text = std::io::read_to_string(open(path)?)
                    .map_err(|source| EvalError::Io { path: base_dir.join(path), source })?;
                Ok(Dataset::from_json(&text)?)
            }
            DatasetSpec::Csv { path, schema, discretize_epsilon } => {
                let schema_text = std::io::read_to_string(open(schema)?)
                    .map_err(|source| EvalError::Io { path: base_dir.join(schema), source })?;
                let config = SchemaConfig::from_json(&schema_text)?;
                let table = load_csv(open(path)?, &config)?;
                let budget =
                    PrivacyBudget::pure(*discretize_epsilon).map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
                let mut rng = rng_from_seed(derive_seed(self.seed, &[STREAM_DISCRETIZE]));
                Ok(table.discretize(budget, Noise::Laplace, &mut rng)?.0)
            }
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub cell: usize,
    pub repeat: usize,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub ece: Option<f64>,
    pub wall_ms: u64,
    pub ledger: Option<PrivacyBudget>,
    /// `ok`, `not-private`, or `error:<kind>`.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    #[serde(flatten)]
    pub key: CellKey,
    pub runs: usize,
    pub failures: usize,
    pub accuracy: Option<BoxStats>,
    pub ece: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub train_rows: usize,
    pub test_rows: usize,
    pub majority_baseline: f64,
    pub ece_bins: usize,
    pub repeats: usize,
    pub cells: Vec<CellSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkResults {
    pub cells: Vec<CellKey>,
    pub rows: Vec<RunRow>,
    pub summary: Summary,
}

fn error_tag(e: &EnsembleError) -> &'static str {
    match e {
        EnsembleError::InvalidPlan(_) => "invalid-plan",
        EnsembleError::EmptyDataset => "empty-dataset",
        EnsembleError::EmptySubsample { .. } => "empty-subsample",
        EnsembleError::Mechanism { .. } => "mechanism",
        EnsembleError::Model { .. } => "model",
        EnsembleError::Data { .. } => "data",
        EnsembleError::Accounting(_) => "accounting",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchmarkResults {
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let c = &self.cells[r.cell];
            w.write_record([
                c.strategy.name().to_string(),
                c.mechanism.clone(),
                c.model.clone(),
                c.epsilon.to_string(),
                c.delta.to_string(),
                c.k.to_string(),
                fmt_opt(c.p),
                r.repeat.to_string(),
                r.seed.to_string(),
                fmt_opt(r.accuracy),
                fmt_opt(r.ece),
                r.wall_ms.to_string(),
                fmt_opt(r.ledger.map(|b| b.epsilon())),
                fmt_opt(r.ledger.map(|b| b.delta())),
                r.status.clone(),
            ])
            .expect("writing to memory");
        }
        out.push_str(std::str::from_utf8(&w.into_inner().expect("in-memory writer")).expect("csv is utf-8"));
        out
    }

    pub fn summary_json(&self) -> String {
        serde_json::to_string_pretty(&self.summary).expect("summary serializes") + "\n"
    }
}

/// Runs every (variant, repeat) pair against one fixed stratified test
/// split. Failed runs become tagged rows; only config and dataset problems
/// abort the benchmark.
pub fn run_benchmark(cfg: &BenchmarkConfig, base_dir: &Path) -> Result<BenchmarkResults, EvalError> {
    cfg.validate()?;
    let variants = cfg.variants()?;
    let real = cfg.load_dataset(base_dir)?;
    let (train, test) =
        train_test_split(&real, cfg.test_fraction, &mut rng_from_seed(derive_seed(cfg.seed, &[STREAM_SPLIT])))?;
    if train.is_empty() || test.is_empty() {
        return Err(EvalError::InvalidConfig(format!("dataset of {} rows too small to split", real.len())));
    }

    let jobs: Vec<(usize, usize)> = (0..variants.len()).flat_map(|v| (0..cfg.repeats).map(move |r| (v, r))).collect();
    let rows: Vec<RunRow> = jobs
        .into_par_iter()
        .map(|(cell, repeat)| {
            let path: Vec<u64> = if cfg.identical_seeds {
                vec![STREAM_RUNS, cell as u64]
            } else {
                vec![STREAM_RUNS, cell as u64, repeat as u64]
            };
            let seed = derive_seed(cfg.seed, &path);
            let mut plan = variants[cell].plan.clone();
            plan.seed = seed;
            let start = Instant::now();
            let outcome = run_plan(&train, &plan).map(|out| {
                let acc = accuracy(&out.model, &test).expect("test split is non-empty");
                let (e, _) = ece(&out.model, &test, cfg.ece_bins).expect("bin count was validated");
                (acc, e, out.ledger)
            });
            let wall_ms = if cfg.record_wall_time { start.elapsed().as_millis() as u64 } else { 0 };
            match outcome {
                Ok((acc, e, ledger)) => RunRow {
                    cell,
                    repeat,
                    seed,
                    accuracy: Some(acc),
                    ece: Some(e),
                    wall_ms,
                    ledger: Some(ledger.composed_total()),
                    status: if ledger.is_private() { "ok".into() } else { "not-private".into() },
                },
                Err(err) => RunRow {
                    cell,
                    repeat,
                    seed,
                    accuracy: None,
                    ece: None,
                    wall_ms,
                    ledger: None,
                    status: format!("error:{}", error_tag(&err)),
                },
            }
        })
        .collect();

    let mut by_cell: BTreeMap<usize, Vec<&RunRow>> = BTreeMap::new();
    for r in &rows {
        by_cell.entry(r.cell).or_default().push(r);
    }
    let cells: Vec<CellSummary> = variants
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let runs = by_cell.remove(&i).unwrap_or_default();
            let acc: Vec<f64> = runs.iter().filter_map(|r| r.accuracy).collect();
            let ece: Vec<f64> = runs.iter().filter_map(|r| r.ece).collect();
            CellSummary {
                key: v.cell.clone(),
                runs: runs.len(),
                failures: runs.iter().filter(|r| r.status.starts_with("error")).count(),
                accuracy: BoxStats::from_values(&acc),
                ece: BoxStats::from_values(&ece),
            }
        })
        .collect();
    let summary = Summary {
        train_rows: train.len(),
        test_rows: test.len(),
        majority_baseline: majority_baseline(&test)?,
        ece_bins: cfg.ece_bins,
        repeats: cfg.repeats,
        cells,
    };
    Ok(BenchmarkResults { cells: variants.into_iter().map(|v| v.cell).collect(), rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke(repeats: usize) -> BenchmarkConfig {
        BenchmarkConfig::from_json(&format!(
            r#"{{
                "dataset": {{"kind": "ground-truth", "rows": 600, "seed": 1}},
                "grid": {{
                    "epsilons": [3.0], "ks": [2],
                    "mechanisms": [{{"kind": "independent-marginals"}}],
                    "models": [{{"kind": "logistic"}}]
                }},
                "repeats": {repeats}
            }}"#
        ))
        .unwrap()
    }

    #[test]
    fn grid_expansion_counts() {
        let mut cfg = smoke(1);
        let grid = cfg.grid.as_mut().unwrap();
        grid.epsilons = vec![3.0, 5.0];
        grid.ks = vec![3, 5];
        assert_eq!(cfg.variants().unwrap().len(), 16);
        assert!(cfg
            .variants()
            .unwrap()
            .iter()
            .filter(|v| v.cell.strategy == Strategy::WithoutEnsemble)
            .all(|v| v.plan.k == 1));
    }

    #[test]
    fn smoke_run_rows_and_summary() {
        let res = run_benchmark(&smoke(2), Path::new(".")).unwrap();
        assert_eq!(res.rows.len(), 8);
        assert_eq!(res.summary.cells.len(), 4);
        assert!(res.rows.iter().all(|r| r.status == "ok"));
        let csv = res.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
        assert_eq!(res.summary.test_rows, 120);
    }

    #[test]
    fn identical_seeds_give_identical_rows() {
        let mut cfg = smoke(3);
        cfg.identical_seeds = true;
        cfg.grid.as_mut().unwrap().strategies = vec![Strategy::SimpleDpEnsemble];
        let res = run_benchmark(&cfg, Path::new(".")).unwrap();
        let first = &res.rows[0];
        assert!(res.rows.iter().all(|r| (r.accuracy, r.ece, r.seed) == (first.accuracy, first.ece, first.seed)));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = smoke(1);
        cfg.ece_bins = 1;
        assert!(matches!(run_benchmark(&cfg, Path::new(".")), Err(EvalError::InvalidConfig(_))));
        let mut cfg = smoke(1);
        cfg.repeats = 0;
        assert!(matches!(cfg.validate(), Err(EvalError::InvalidConfig(_))));
        let mut cfg = smoke(1);
        cfg.dataset = DatasetSpec::Json { path: "does/not/exist.json".into() };
        assert!(matches!(run_benchmark(&cfg, Path::new(".")), Err(EvalError::DatasetNotFound(_))));
        assert!(
            BenchmarkConfig::from_json(r#"{"dataset":{"kind":"ground-truth","rows":5,"seed":0},"bogus":1}"#).is_err()
        );
    }
}
