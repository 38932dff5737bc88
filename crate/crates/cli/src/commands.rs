use std::fs::File;
use std::path::{Path, PathBuf};

use dpens::accounting::{per_run_budget, AccountingError, BudgetLedger, PrivacyBudget, SamplingRate};
use dpens::data::{load_csv, SchemaConfig};
use dpens::ensemble::{synthesize, train_members, SynthesisPlan};
use dpens::eval::{evaluate, plan_digest, run_benchmark, train_test_split, BenchmarkConfig, EvalReport};
use dpens::random::{derive_seed, rng_from_seed, Noise};
use serde::Serialize;

use crate::artifacts::{load_dataset, Certification, DatasetArtifact, ModelArtifact, SynthArtifact};
use crate::error::{CliError, CliResult};
use crate::files::{emit_json, read_json, read_text, to_json, write_atomic};

const STREAM_DISCRETIZE: u64 = 0;
const STREAM_SPLIT: u64 = 1;

pub struct AccountArgs {
    pub eps: Option<f64>,
    pub delta: f64,
    pub k: usize,
    pub p: Option<f64>,
    pub ledger: Option<PathBuf>,
}

#[derive(Serialize)]
struct RunRow {
    run: usize,
    mechanism_budget: PrivacyBudget,
    charged: PrivacyBudget,
}

#[derive(Serialize)]
struct AccountReport {
    total: PrivacyBudget,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    per_run: PrivacyBudget,
    runs: Vec<RunRow>,
    composed: PrivacyBudget,
    verified: bool,
}

pub fn account(args: AccountArgs) -> CliResult<()> {
    if let Some(path) = &args.ledger {
        return certify_file(path);
    }
    let eps = args.eps.ok_or_else(|| CliError::usage("--eps is required unless --ledger is given"))?;
    let usage = |e: AccountingError| CliError::usage(e.to_string());
    let total = PrivacyBudget::new(eps, args.delta).map_err(usage)?;
    let p = args.p.map(SamplingRate::new).transpose().map_err(usage)?;
    if args.k == 0 {
        return Err(usage(AccountingError::ZeroRuns));
    }
    let sampling = p.filter(|p| !p.is_full());
    let per_run = per_run_budget(total, args.k, sampling)?;

    let mut ledger = BudgetLedger::new(total);
    for run in 0..args.k {
        match sampling {
            Some(p) => ledger.record_subsampled(format!("run {run}"), per_run, p)?,
            None => ledger.record(format!("run {run}"), per_run)?,
        }
    }
    let composed = ledger.certify()?;
    let runs = ledger
        .entries()
        .iter()
        .enumerate()
        .map(|(run, e)| RunRow { run, mechanism_budget: per_run, charged: e.spend })
        .collect();
    emit_json(&AccountReport { total, k: args.k, p: args.p, per_run, runs, composed, verified: true }, None)
}

fn certify_file(path: &Path) -> CliResult<()> {
    let value: serde_json::Value = read_json(path)?;
    let ledger = value
        .get("ledger")
        .filter(|l| !l.is_null())
        .map(|l| serde_json::from_value::<BudgetLedger>(l.clone()))
        .transpose()?
        .ok_or_else(|| CliError::privacy(format!("{}: no ledger to certify", path.display())))?;
    ledger.certify()?;
    emit_json(&Certification::of(Some(&ledger)), None)
}

pub struct DiscretizeArgs {
    pub input: PathBuf,
    pub schema: PathBuf,
    pub eps: f64,
    pub output: PathBuf,
    pub test_fraction: Option<f64>,
    pub test_output: Option<PathBuf>,
    pub noise_disabled_test_mode: bool,
    pub seed: u64,
}

pub fn discretize(args: DiscretizeArgs) -> CliResult<()> {
    if args.test_fraction.is_some() != args.test_output.is_some() {
        return Err(CliError::usage("--test-fraction and --test-output go together"));
    }
    let config = SchemaConfig::from_json(&read_text(&args.schema)?)?;
    let file = File::open(&args.input).map_err(|e| CliError::io(&args.input, e))?;
    let table = load_csv(file, &config)?;
    let budget = PrivacyBudget::pure(args.eps).map_err(|e| CliError::usage(e.to_string()))?;
    let noise = Noise::from_disabled_flag(args.noise_disabled_test_mode);
    let mut rng = rng_from_seed(derive_seed(args.seed, &[STREAM_DISCRETIZE]));
    let (dataset, ledger) = table.discretize(budget, noise, &mut rng)?;
    let certification = Certification::of(Some(&ledger));
    warn_if_not_private(&certification);

    let (train, test) = match args.test_fraction {
        Some(f) => {
            let mut rng = rng_from_seed(derive_seed(args.seed, &[STREAM_SPLIT]));
            let (train, test) = train_test_split(&dataset, f, &mut rng)?;
            (train, Some(test))
        }
        None => (dataset, None),
    };
    if let (Some(test), Some(path)) = (test, &args.test_output) {
        let artifact = DatasetArtifact { certification: certification.clone(), ledger: ledger.clone(), dataset: test };
        write_atomic(path, &to_json(&artifact))?;
    }
    write_atomic(&args.output, &to_json(&DatasetArtifact { certification, ledger, dataset: train }))
}

pub struct SynthArgs {
    pub config: PathBuf,
    pub input: PathBuf,
    pub output: PathBuf,
    pub noise_disabled_test_mode: bool,
    pub seed: Option<u64>,
}

pub fn synth(args: SynthArgs) -> CliResult<()> {
    let mut plan: SynthesisPlan = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    if args.noise_disabled_test_mode {
        plan.mechanism.noise_disabled_test_mode = true;
    }
    let (real, input_ledger) = load_dataset(&args.input)?;
    let mut out = synthesize(&real, &plan)?;
    if let Some(reason) = input_ledger.as_ref().and_then(|l| l.not_private_reason()) {
        out.ledger.mark_not_private(format!("input: {reason}"));
    }
    let certification = Certification::of(Some(&out.ledger));
    warn_if_not_private(&certification);
    let artifact =
        SynthArtifact { certification, plan: out.plan, ledger: Some(out.ledger), input_ledger, datasets: out.datasets };
    write_atomic(&args.output, &to_json(&artifact))?;
    emit_json(&artifact.certification, None)
}

pub struct TrainArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub seed: Option<u64>,
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let synth: SynthArtifact = read_json(&args.input)?;
    let mut plan = synth.plan;
    if let Some(seed) = args.seed {
        plan.seed = seed;
    }
    let model = train_members(&synth.datasets, &plan)?;
    let certification = Certification::of(synth.ledger.as_ref());
    warn_if_not_private(&certification);
    write_atomic(&args.output, &to_json(&ModelArtifact { certification, plan, ledger: synth.ledger, model }))
}

pub struct EvalArgs {
    pub model: PathBuf,
    pub test: PathBuf,
    pub bins: usize,
    pub output: Option<PathBuf>,
    pub allow_uncertified: bool,
}

#[derive(Serialize)]
struct EvalOutput {
    #[serde(flatten)]
    report: EvalReport,
    certification: Certification,
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let artifact: ModelArtifact = read_json(&args.model)?;
    let certification = Certification::of(artifact.ledger.as_ref());
    if !certification.is_certified() {
        let reason = certification.reason.as_deref().unwrap_or("");
        if !args.allow_uncertified {
            return Err(CliError::privacy(format!(
                "{}: model is {} ({reason}); pass --allow-uncertified to evaluate anyway",
                args.model.display(),
                certification.status
            )));
        }
        warn_if_not_private(&certification);
    }
    let (test, _) = load_dataset(&args.test)?;
    let mut report = evaluate(&artifact.model, &test, args.bins)?;
    report.seed = Some(artifact.plan.seed);
    report.plan_digest = Some(plan_digest(&artifact.plan));
    report.ledger_total = certification.total;
    emit_json(&EvalOutput { report, certification }, args.output.as_deref())
}

pub struct BenchArgs {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

pub fn bench(args: BenchArgs) -> CliResult<()> {
    let mut cfg = BenchmarkConfig::from_json(&read_text(&args.config)?)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    let results = run_benchmark(&cfg, base)?;
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    write_atomic(&args.out_dir.join("results.csv"), results.to_csv().as_bytes())?;
    write_atomic(&args.out_dir.join("summary.json"), results.summary_json().as_bytes())?;
    let failed = results.rows.iter().filter(|r| r.status.starts_with("error:")).count();
    eprintln!(
        "{} runs over {} cells, {failed} failed; wrote {}",
        results.rows.len(),
        results.cells.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn warn_if_not_private(c: &Certification) {
    if !c.is_certified() {
        eprintln!("warning: output is {}: {}", c.status, c.reason.as_deref().unwrap_or(""));
    }
}
