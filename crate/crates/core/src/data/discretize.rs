use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::accounting::PrivacyBudget;
use crate::random::{laplace, Noise};

/// Ordinal codes for one numeric column plus the bin edges used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    pub ordinals: Vec<u32>,
    /// `bins + 1` increasing edges.
    pub edges: Vec<f64>,
    /// Set when the noisy range collapsed and the fallback range was used.
    pub degenerate: bool,
}

/// Equal-width binning over a privately estimated range.
///
/// Values are clamped to the public range `clamp`, whose width `w` bounds the
/// sensitivity of both the minimum and the maximum. Each extreme gets
/// Laplace noise of scale `w / (ε/2)` and is clamped back into `clamp`.
/// When the noisy minimum is not below the noisy maximum the range becomes
/// `[lo, lo + w]` with `lo` the smaller noisy extreme.
pub fn dp_discretize<R: Rng + ?Sized>(
    column: &[f64],
    bins: usize,
    clamp: (f64, f64),
    budget: PrivacyBudget,
    noise: Noise,
    rng: &mut R,
) -> Result<Discretization, DataError> {
    let (lo, hi) = clamp;
    if bins < 2 {
        return Err(DataError::InvalidArgument(format!("need at least 2 bins, got {bins}")));
    }
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(DataError::InvalidArgument(format!("invalid clamp range [{lo}, {hi}]")));
    }
    if column.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    if !noise.is_disabled() && budget.epsilon() <= 0.0 {
        return Err(DataError::InvalidArgument("discretization needs epsilon > 0".into()));
    }

    let clamped = column.iter().map(|x| x.clamp(lo, hi));
    let (mut min, mut max) = clamped.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    let width = hi - lo;
    if !noise.is_disabled() {
        let scale = width / (budget.epsilon() / 2.0);
        min = (min + laplace(rng, scale)).clamp(lo, hi);
        max = (max + laplace(rng, scale)).clamp(lo, hi);
    }

    let degenerate = min.is_nan() || max.is_nan() || min >= max;
    let (lower, upper) = if degenerate {
        let lower = min.min(max);
        (lower, lower + if width > 0.0 { width } else { 1.0 })
    } else {
        (min, max)
    };

    let span = upper - lower;
    let edges = (0..=bins).map(|i| if i == bins { upper } else { lower + span * i as f64 / bins as f64 }).collect();
    let ordinals = column
        .iter()
        .map(|&x| {
            let x = x.clamp(lower, upper);
            let idx = (bins as f64 * (x - lower) / span).floor();
            (idx.max(0.0) as usize).min(bins - 1) as u32
        })
        .collect();
    Ok(Discretization { ordinals, edges, degenerate })
}
