use dpens::accounting::{PrivacyBudget, SamplingRate, BUDGET_TOLERANCE};
use dpens::data::{ground_truth, Dataset};
use dpens::ensemble::{run_plan, EnsembleModel, PlanOutput, Strategy, SynthesisPlan};
use dpens::mechanisms::{MechanismConfig, MechanismKind};
use dpens::models::{ForestConfig, LogisticConfig, ModelConfig};

fn plan(strategy: Strategy, kind: MechanismKind, model: ModelConfig, k: usize, seed: u64) -> SynthesisPlan {
    let mut p =
        SynthesisPlan::new(strategy, PrivacyBudget::new(3.0, 3e-6).unwrap(), k, MechanismConfig::new(kind), model);
    p.seed = seed;
    p
}

fn bytes(out: &PlanOutput) -> String {
    serde_json::to_string(&(&out.model, &out.ledger, &out.synthetic)).unwrap()
}

fn small_forest() -> ModelConfig {
    ModelConfig::RandomForest(ForestConfig { trees: 10, ..Default::default() })
}

#[test]
fn degenerate_strategies_are_byte_identical() {
    let d = ground_truth::generate(1_500, 2);
    for kind in [MechanismKind::IndependentMarginals, MechanismKind::Mwem] {
        let single = run_plan(&d, &plan(Strategy::WithoutEnsemble, kind, small_forest(), 1, 9)).unwrap();
        let simple1 = run_plan(&d, &plan(Strategy::SimpleDpEnsemble, kind, small_forest(), 1, 9)).unwrap();
        assert_eq!(bytes(&single), bytes(&simple1));

        let simple3 = run_plan(&d, &plan(Strategy::SimpleDpEnsemble, kind, small_forest(), 3, 9)).unwrap();
        let mut sub = plan(Strategy::DpEnsembleSubsampling, kind, small_forest(), 3, 9);
        sub.p = Some(SamplingRate::new(1.0).unwrap());
        assert_eq!(bytes(&simple3), bytes(&run_plan(&d, &sub).unwrap()));

        let mut me = plan(Strategy::ModelEnsemble, kind, small_forest(), 1, 9);
        me.resample_fraction = 1.0;
        let me = run_plan(&d, &me).unwrap();
        assert_eq!(serde_json::to_string(&me.model).unwrap(), serde_json::to_string(&single.model).unwrap());
    }
}

#[test]
fn plans_are_reproducible() {
    let d = ground_truth::generate(1_500, 3);
    let mut p = plan(Strategy::DpEnsembleSubsampling, MechanismKind::Mwem, small_forest(), 3, 4);
    p.p = Some(SamplingRate::new(0.3).unwrap());
    assert_eq!(bytes(&run_plan(&d, &p).unwrap()), bytes(&run_plan(&d, &p).unwrap()));
    let mut other = p.clone();
    other.seed = 5;
    assert_ne!(bytes(&run_plan(&d, &p).unwrap()), bytes(&run_plan(&d, &other).unwrap()));
}

#[test]
fn member_order_does_not_matter() {
    let d = ground_truth::generate(1_500, 4);
    let logistic = ModelConfig::Logistic(LogisticConfig::default());
    let out =
        run_plan(&d, &plan(Strategy::SimpleDpEnsemble, MechanismKind::IndependentMarginals, logistic, 3, 1)).unwrap();
    let mut members = out.model.members().to_vec();
    members.reverse();
    members.swap(0, 1);
    let shuffled = EnsembleModel::new(members).unwrap();
    for r in d.rows().iter().take(300) {
        assert_eq!(out.model.confidence(r), shuffled.confidence(r));
    }
}

/// Every strategy at ε ∈ {3, 5}, k ∈ {3, 5}, p ∈ {0.2, 1} certifies its
/// declared total.
fn ledger_grid(d: &Dataset) -> Vec<(String, f64, f64)> {
    let mut out = Vec::new();
    for strategy in Strategy::ALL {
        for eps in [3.0, 5.0] {
            for k in [3, 5] {
                for p in [0.2, 1.0] {
                    for kind in [MechanismKind::IndependentMarginals, MechanismKind::Mwem] {
                        let k_run = if strategy == Strategy::WithoutEnsemble { 1 } else { k };
                        let mut pl = plan(strategy, kind, ModelConfig::Logistic(LogisticConfig::default()), k_run, 7);
                        pl.total_budget = PrivacyBudget::new(eps, eps * 1e-6).unwrap();
                        if strategy == Strategy::DpEnsembleSubsampling {
                            pl.p = Some(SamplingRate::new(p).unwrap());
                        }
                        let ledger = run_plan(d, &pl).unwrap().ledger;
                        let total = ledger.certify().unwrap();
                        out.push((
                            format!("{strategy} {} eps={eps} k={k} p={p}", kind.name()),
                            (total.epsilon() - eps).abs(),
                            (total.delta() - eps * 1e-6).abs(),
                        ));
                    }
                }
            }
        }
    }
    out
}

#[test]
fn every_strategy_certifies_its_budget() {
    let d = ground_truth::generate(800, 5);
    for (label, de, dd) in ledger_grid(&d) {
        assert!(de <= BUDGET_TOLERANCE && dd <= BUDGET_TOLERANCE, "{label}: {de} {dd}");
    }
}
