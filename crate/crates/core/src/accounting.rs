//! Privacy-budget arithmetic and the per-pipeline spend ledger.
//!
//! Budgets compose by plain summation. Poisson subsampling at rate `p`
//! turns an `(ε, δ)` mechanism into an `(ln(1 + p(e^ε − 1)), pδ)` one, and
//! [`inverse_amplify`] solves that relation for the budget a mechanism may
//! spend on a subsample so that the amplified cost hits a target.
//!
//! Training and evaluating models on synthetic data is post-processing and
//! never appears in a ledger.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Absolute tolerance used for every budget equality or bound check.
pub const BUDGET_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AccountingError {
    #[error("invalid privacy budget (epsilon={epsilon}, delta={delta})")]
    InvalidBudget { epsilon: f64, delta: f64 },
    #[error("invalid sampling rate {0}; must lie in (0, 1]")]
    InvalidSamplingRate(f64),
    #[error("cannot compose an empty list of budgets")]
    EmptyList,
    #[error("delta overflow: composed or rescaled delta {0} is not below 1")]
    DeltaOverflow(f64),
    #[error("ensemble size k must be at least 1")]
    ZeroRuns,
    #[error(
        "budget exceeded recording `{label}`: composed ({epsilon}, {delta}) > declared ({declared_epsilon}, {declared_delta})"
    )]
    BudgetExceeded { label: String, epsilon: f64, delta: f64, declared_epsilon: f64, declared_delta: f64 },
    #[error("ledger composes to ({epsilon}, {delta}) but declares ({declared_epsilon}, {declared_delta})")]
    NotExhausted { epsilon: f64, delta: f64, declared_epsilon: f64, declared_delta: f64 },
    #[error("ledger is marked NOT-PRIVATE ({0}) and cannot be certified")]
    NotPrivate(String),
}

/// An `(ε, δ)` differential-privacy guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBudget")]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

#[derive(Deserialize)]
struct RawBudget {
    epsilon: f64,
    #[serde(default)]
    delta: f64,
}

impl TryFrom<RawBudget> for PrivacyBudget {
    type Error = AccountingError;

    fn try_from(raw: RawBudget) -> Result<Self, Self::Error> {
        PrivacyBudget::new(raw.epsilon, raw.delta)
    }
}

impl PrivacyBudget {
    pub const ZERO: PrivacyBudget = PrivacyBudget { epsilon: 0.0, delta: 0.0 };

    pub fn new(epsilon: f64, delta: f64) -> Result<Self, AccountingError> {
        // NaN fails every comparison below.
        let ok = epsilon >= 0.0 && epsilon.is_finite() && (0.0..1.0).contains(&delta);
        if ok {
            Ok(Self { epsilon, delta })
        } else {
            Err(AccountingError::InvalidBudget { epsilon, delta })
        }
    }

    /// Pure ε-DP budget.
    pub fn pure(epsilon: f64) -> Result<Self, AccountingError> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Component-wise `self ≤ other + BUDGET_TOLERANCE`.
    pub fn within(&self, other: &PrivacyBudget) -> bool {
        self.epsilon <= other.epsilon + BUDGET_TOLERANCE && self.delta <= other.delta + BUDGET_TOLERANCE
    }

    /// Component-wise equality up to [`BUDGET_TOLERANCE`].
    pub fn approx_eq(&self, other: &PrivacyBudget) -> bool {
        (self.epsilon - other.epsilon).abs() <= BUDGET_TOLERANCE && (self.delta - other.delta).abs() <= BUDGET_TOLERANCE
    }

    /// Splits the budget evenly into `parts` pieces.
    pub fn split(&self, parts: usize) -> Result<PrivacyBudget, AccountingError> {
        if parts == 0 {
            return Err(AccountingError::ZeroRuns);
        }
        let n = parts as f64;
        PrivacyBudget::new(self.epsilon / n, self.delta / n)
    }
}

/// A Poisson subsampling rate `p ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SamplingRate(f64);

impl SamplingRate {
    pub fn new(p: f64) -> Result<Self, AccountingError> {
        if p > 0.0 && p <= 1.0 {
            Ok(Self(p))
        } else {
            Err(AccountingError::InvalidSamplingRate(p))
        }
    }

    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_full(&self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for SamplingRate {
    type Error = AccountingError;

    fn try_from(p: f64) -> Result<Self, Self::Error> {
        SamplingRate::new(p)
    }
}

impl From<SamplingRate> for f64 {
    fn from(p: SamplingRate) -> f64 {
        p.0
    }
}

/// Basic composition: `(Σ εᵢ, Σ δᵢ)`.
pub fn compose(budgets: &[PrivacyBudget]) -> Result<PrivacyBudget, AccountingError> {
    if budgets.is_empty() {
        return Err(AccountingError::EmptyList);
    }
    let epsilon: f64 = budgets.iter().map(|b| b.epsilon).sum();
    let delta: f64 = budgets.iter().map(|b| b.delta).sum();
    if delta >= 1.0 {
        return Err(AccountingError::DeltaOverflow(delta));
    }
    PrivacyBudget::new(epsilon, delta)
}

/// Guarantee of `M ∘ PoissonSample_p` for an `(ε, δ)` mechanism `M`.
pub fn amplify_by_subsampling(b: PrivacyBudget, p: SamplingRate) -> PrivacyBudget {
    if p.is_full() {
        return b;
    }
    let epsilon = (p.0 * b.epsilon.exp_m1()).ln_1p();
    PrivacyBudget { epsilon, delta: p.0 * b.delta }
}

/// Budget a mechanism may spend on a rate-`p` Poisson subsample so that the
/// amplified guarantee equals `target`.
pub fn inverse_amplify(target: PrivacyBudget, p: SamplingRate) -> Result<PrivacyBudget, AccountingError> {
    if p.is_full() {
        return Ok(target);
    }
    let delta = target.delta / p.0;
    if delta >= 1.0 {
        return Err(AccountingError::DeltaOverflow(delta));
    }
    let epsilon = (target.epsilon.exp_m1() / p.0).ln_1p();
    PrivacyBudget::new(epsilon, delta)
}

/// Budget handed to each of `k` mechanism runs that together must cost
/// `total`: `(ε/k, δ/k)` without subsampling, its inverse amplification
/// with it.
pub fn per_run_budget(
    total: PrivacyBudget,
    k: usize,
    p: Option<SamplingRate>,
) -> Result<PrivacyBudget, AccountingError> {
    let share = total.split(k)?;
    match p {
        None => Ok(share),
        Some(p) => inverse_amplify(share, p),
    }
}

/// One certified spend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub label: String,
    /// Cost charged against the declared total.
    pub spend: PrivacyBudget,
    /// Budget the mechanism itself ran at, when it differs from `spend`
    /// because of subsampling amplification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism_budget: Option<PrivacyBudget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_rate: Option<SamplingRate>,
}

/// Append-only record of the privacy spends of one pipeline.
///
/// The composed total never exceeds the declared total (plus tolerance);
/// [`BudgetLedger::record`] refuses, without mutating, any spend that would.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetLedger {
    declared_total: PrivacyBudget,
    entries: Vec<LedgerEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    not_private: Option<String>,
}

impl BudgetLedger {
    pub fn new(declared_total: PrivacyBudget) -> Self {
        Self { declared_total, entries: Vec::new(), not_private: None }
    }

    pub fn declared_total(&self) -> PrivacyBudget {
        self.declared_total
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn record(&mut self, label: impl Into<String>, spend: PrivacyBudget) -> Result<(), AccountingError> {
        self.push(LedgerEntry { label: label.into(), spend, mechanism_budget: None, sampling_rate: None })
    }

    /// Records a spend that ran on a Poisson subsample: the mechanism used
    /// `mechanism_budget`, the ledger is charged its amplified cost.
    pub fn record_subsampled(
        &mut self,
        label: impl Into<String>,
        mechanism_budget: PrivacyBudget,
        p: SamplingRate,
    ) -> Result<(), AccountingError> {
        self.push(LedgerEntry {
            label: label.into(),
            spend: amplify_by_subsampling(mechanism_budget, p),
            mechanism_budget: Some(mechanism_budget),
            sampling_rate: Some(p),
        })
    }

    fn push(&mut self, entry: LedgerEntry) -> Result<(), AccountingError> {
        let epsilon = self.entries.iter().map(|e| e.spend.epsilon).sum::<f64>() + entry.spend.epsilon;
        let delta = self.entries.iter().map(|e| e.spend.delta).sum::<f64>() + entry.spend.delta;
        let candidate = PrivacyBudget { epsilon, delta };
        if !candidate.within(&self.declared_total) {
            return Err(AccountingError::BudgetExceeded {
                label: entry.label,
                epsilon,
                delta,
                declared_epsilon: self.declared_total.epsilon,
                declared_delta: self.declared_total.delta,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Composition of every recorded spend; zero for an empty ledger.
    pub fn composed_total(&self) -> PrivacyBudget {
        if self.entries.is_empty() {
            return PrivacyBudget::ZERO;
        }
        let spends: Vec<PrivacyBudget> = self.entries.iter().map(|e| e.spend).collect();
        // Every prefix was checked against a declared total with delta < 1.
        compose(&spends).expect("ledger entries compose within the declared total")
    }

    /// Flags the ledger as describing a run that is not differentially
    /// private (noise disabled for testing). Such a ledger never certifies.
    pub fn mark_not_private(&mut self, reason: impl Into<String>) {
        self.not_private = Some(reason.into());
    }

    pub fn is_private(&self) -> bool {
        self.not_private.is_none()
    }

    pub fn not_private_reason(&self) -> Option<&str> {
        self.not_private.as_deref()
    }

    /// Succeeds when the run was private and its spends compose exactly
    /// (within tolerance) to the declared total.
    pub fn certify(&self) -> Result<PrivacyBudget, AccountingError> {
        if let Some(reason) = &self.not_private {
            return Err(AccountingError::NotPrivate(reason.clone()));
        }
        let total = self.composed_total();
        if !total.approx_eq(&self.declared_total) {
            return Err(AccountingError::NotExhausted {
                epsilon: total.epsilon,
                delta: total.delta,
                declared_epsilon: self.declared_total.epsilon,
                declared_delta: self.declared_total.delta,
            });
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(e: f64, d: f64) -> PrivacyBudget {
        PrivacyBudget::new(e, d).unwrap()
    }

    fn p(x: f64) -> SamplingRate {
        SamplingRate::new(x).unwrap()
    }

    #[test]
    fn rejects_bad_budgets() {
        assert!(PrivacyBudget::new(-0.1, 0.0).is_err());
        assert!(PrivacyBudget::new(f64::NAN, 0.0).is_err());
        assert!(PrivacyBudget::new(1.0, f64::NAN).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
        assert!(PrivacyBudget::new(1.0, -1e-9).is_err());
        assert!(SamplingRate::new(0.0).is_err());
        assert!(SamplingRate::new(1.0 + 1e-12).is_err());
        assert!(serde_json::from_str::<PrivacyBudget>(r#"{"epsilon":-1,"delta":0}"#).is_err());
        assert!(serde_json::from_str::<SamplingRate>("0").is_err());
    }

    #[test]
    fn compose_examples() {
        let c = compose(&[b(1.0, 1e-6), b(1.0, 1e-6), b(1.0, 1e-6)]).unwrap();
        assert_eq!(c.epsilon(), 3.0);
        assert!((c.delta() - 3e-6).abs() < 1e-18);
        assert_eq!(compose(&[b(0.0, 0.0)]).unwrap(), PrivacyBudget::ZERO);
        let c = compose(&[b(0.5, 1e-7), b(2.5, 9e-7)]).unwrap();
        assert_eq!(c.epsilon(), 3.0);
        assert!((c.delta() - 1e-6).abs() < 1e-18);
        assert_eq!(compose(&[]), Err(AccountingError::EmptyList));
        assert!(matches!(compose(&[b(1.0, 0.6), b(1.0, 0.5)]), Err(AccountingError::DeltaOverflow(_))));
    }

    #[test]
    fn amplification_examples() {
        let a = amplify_by_subsampling(b(1.0, 1e-5), p(0.5));
        // ln(1 + 0.5(e − 1)) = 0.620114507...
        assert!((a.epsilon() - 0.620_114_507_3).abs() < 1e-9);
        assert!((a.delta() - 5e-6).abs() < 1e-18);
        assert_eq!(amplify_by_subsampling(b(1.7, 1e-6), p(1.0)), b(1.7, 1e-6));
        assert!((amplify_by_subsampling(b(2.2618, 0.0), p(0.2)).epsilon() - 1.0).abs() < 2e-3);
    }

    #[test]
    fn inverse_examples() {
        let e = inverse_amplify(b(1.0, 1e-6), p(0.2)).unwrap();
        assert!((e.epsilon() - 2.26).abs() < 0.005, "{}", e.epsilon());
        assert!((e.delta() - 5e-6).abs() < 1e-18);
        assert_eq!(inverse_amplify(b(0.3, 1e-3), p(1.0)).unwrap(), b(0.3, 1e-3));
        assert_eq!(inverse_amplify(PrivacyBudget::ZERO, p(0.37)).unwrap(), PrivacyBudget::ZERO);
        assert!(matches!(inverse_amplify(b(1.0, 0.1), p(0.1)), Err(AccountingError::DeltaOverflow(_))));
    }

    #[test]
    fn per_run_examples() {
        let total = b(3.0, 3e-6);
        let plain = per_run_budget(total, 3, None).unwrap();
        assert_eq!(plain.epsilon(), 1.0);
        assert!((plain.delta() - 1e-6).abs() < 1e-18);
        let amplified = per_run_budget(total, 3, Some(p(0.2))).unwrap();
        assert!(amplified.epsilon() > 2.25 && amplified.epsilon() < 2.27);
        assert!((amplified.delta() - 5e-6).abs() < 1e-18);
        assert_eq!(per_run_budget(total, 1, None).unwrap(), total);
        assert_eq!(per_run_budget(total, 3, Some(p(1.0))).unwrap().epsilon(), 1.0);
        assert_eq!(per_run_budget(total, 0, None), Err(AccountingError::ZeroRuns));
    }

    #[test]
    fn ledger_examples() {
        let mut ledger = BudgetLedger::new(b(3.0, 3e-6));
        for i in 0..3 {
            ledger.record(format!("run {i}"), b(1.0, 1e-6)).unwrap();
        }
        let before = ledger.clone();
        assert!(matches!(ledger.record("extra", b(0.1, 0.0)), Err(AccountingError::BudgetExceeded { .. })));
        assert_eq!(ledger, before);
        assert!(ledger.certify().is_ok());

        let mut edge = BudgetLedger::new(b(3.0, 0.0));
        edge.record("all", b(3.0, 0.0)).unwrap();
        assert_eq!(edge.certify().unwrap(), b(3.0, 0.0));

        let mut over = BudgetLedger::new(b(1.0, 0.0));
        assert!(over.record("too much", b(1.5, 0.0)).is_err());
        assert!(over.entries().is_empty());
    }

    #[test]
    fn ledger_certification_guards() {
        let mut partial = BudgetLedger::new(b(2.0, 0.0));
        partial.record("half", b(1.0, 0.0)).unwrap();
        assert!(matches!(partial.certify(), Err(AccountingError::NotExhausted { .. })));

        let mut fake = BudgetLedger::new(b(1.0, 0.0));
        fake.record("run", b(1.0, 0.0)).unwrap();
        fake.mark_not_private("noise disabled");
        assert!(matches!(fake.certify(), Err(AccountingError::NotPrivate(_))));
    }

    #[test]
    fn subsampled_entries_charge_amplified_cost() {
        let total = b(3.0, 3e-6);
        let rate = p(0.2);
        let run = per_run_budget(total, 3, Some(rate)).unwrap();
        let mut ledger = BudgetLedger::new(total);
        for i in 0..3 {
            ledger.record_subsampled(format!("run {i}"), run, rate).unwrap();
        }
        assert!(ledger.entries().iter().all(|e| e.mechanism_budget.unwrap().epsilon() > 2.25));
        assert!(ledger.certify().unwrap().approx_eq(&total));
    }

    #[test]
    fn ledger_serde_roundtrip() {
        let mut ledger = BudgetLedger::new(b(3.0, 3e-6));
        ledger.record_subsampled("run 0", b(2.26, 5e-6), p(0.2)).unwrap();
        let json = serde_json::to_string(&ledger).unwrap();
        let back: BudgetLedger = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ledger);
    }

    fn budget() -> impl Strategy<Value = PrivacyBudget> {
        (0.0f64..10.0, 0.0f64..1e-3).prop_map(|(e, d)| b(e, d))
    }

    proptest! {
        #[test]
        fn inverse_then_amplify_is_identity(t in budget(), rate in 0.01f64..=1.0) {
            let rate = p(rate);
            let back = amplify_by_subsampling(inverse_amplify(t, rate).unwrap(), rate);
            prop_assert!(back.approx_eq(&t));
        }

        #[test]
        fn amplification_is_monotone_and_bounded(e in 0.01f64..10.0, de in 0.01f64..1.0, r in 0.01f64..0.99, dr in 0.001f64..0.01) {
            let lo = amplify_by_subsampling(b(e, 0.0), p(r)).epsilon();
            prop_assert!(lo <= e);
            prop_assert!(amplify_by_subsampling(b(e + de, 0.0), p(r)).epsilon() > lo);
            prop_assert!(amplify_by_subsampling(b(e, 0.0), p(r + dr)).epsilon() > lo);
        }

        #[test]
        fn compose_is_order_free_and_associative(v in prop::collection::vec(budget(), 2..12), split in 1usize..11, seed in any::<u64>()) {
            let whole = compose(&v).unwrap();
            let mut shuffled = v.clone();
            let n = shuffled.len();
            shuffled.rotate_left((seed as usize) % n);
            shuffled.reverse();
            prop_assert!(compose(&shuffled).unwrap().approx_eq(&whole));
            let cut = split.min(n - 1);
            let nested = compose(&[compose(&v[..cut]).unwrap(), compose(&v[cut..]).unwrap()]).unwrap();
            prop_assert!(nested.approx_eq(&whole));
        }

        #[test]
        fn per_run_composes_back(t in budget(), k in 1usize..10, rate in 0.05f64..=1.0) {
            let rate = p(rate);
            let plain = per_run_budget(t, k, None).unwrap();
            prop_assert!(compose(&vec![plain; k]).unwrap().approx_eq(&t));
            let run = per_run_budget(t, k, Some(rate)).unwrap();
            let charged = amplify_by_subsampling(run, rate);
            prop_assert!(compose(&vec![charged; k]).unwrap().approx_eq(&t));
        }
    }
}
