//! A small tabular distribution with known dependencies, for benchmarks and
//! smoke tests that need realistic structure without shipping real data.
//!
//! Five attributes: `region` (4), `tier` (3), `usage` (5), `tenure` (3) and
//! the label `churn` (2). `churn ~ Bernoulli(0.35)`; `region`, `usage` and
//! `tenure` depend on the label, `tier` depends on `region`.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::{Attribute, Dataset, Schema};
use crate::random::rng_from_seed;

const POSITIVE_RATE: f64 = 0.35;
const REGION_GIVEN_LABEL: [[f64; 4]; 2] = [[0.40, 0.30, 0.20, 0.10], [0.10, 0.20, 0.30, 0.40]];
const TIER_GIVEN_REGION: [[f64; 3]; 4] = [[0.6, 0.3, 0.1], [0.4, 0.4, 0.2], [0.2, 0.4, 0.4], [0.1, 0.3, 0.6]];
const USAGE_GIVEN_LABEL: [[f64; 5]; 2] = [[0.30, 0.30, 0.20, 0.15, 0.05], [0.05, 0.15, 0.20, 0.30, 0.30]];
const TENURE_GIVEN_LABEL: [[f64; 3]; 2] = [[0.5, 0.3, 0.2], [0.2, 0.3, 0.5]];

pub fn schema() -> Schema {
    let attr = |name: &str, levels: &[&str]| {
        let mut a = Attribute::categorical(name, levels.len());
        a.levels = levels.iter().map(|s| s.to_string()).collect();
        a
    };
    Schema::new(
        vec![
            attr("region", &["north", "east", "south", "west"]),
            attr("tier", &["basic", "plus", "premium"]),
            attr("usage", &["u0", "u1", "u2", "u3", "u4"]),
            attr("tenure", &["new", "mid", "long"]),
            attr("churn", &["no", "yes"]),
        ],
        4,
    )
    .expect("static schema is valid")
}

fn draw<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> u32 {
    WeightedIndex::new(weights).expect("static weights").sample(rng) as u32
}

/// `rows` i.i.d. draws from the distribution.
pub fn generate(rows: usize, seed: u64) -> Dataset {
    let mut rng = rng_from_seed(seed);
    let data = (0..rows)
        .map(|_| {
            let y = usize::from(rng.random::<f64>() < POSITIVE_RATE);
            let region = draw(&REGION_GIVEN_LABEL[y], &mut rng);
            let tier = draw(&TIER_GIVEN_REGION[region as usize], &mut rng);
            let usage = draw(&USAGE_GIVEN_LABEL[y], &mut rng);
            let tenure = draw(&TENURE_GIVEN_LABEL[y], &mut rng);
            vec![region, tier, usage, tenure, y as u32]
        })
        .collect();
    Dataset::new(schema(), data).expect("generated rows are in range")
}

/// Exact `P(churn = 1 | features)` under the generating distribution.
pub fn posterior(row: &[u32]) -> f64 {
    let joint = |y: usize| {
        let prior = if y == 1 { POSITIVE_RATE } else { 1.0 - POSITIVE_RATE };
        prior
            * REGION_GIVEN_LABEL[y][row[0] as usize]
            * USAGE_GIVEN_LABEL[y][row[2] as usize]
            * TENURE_GIVEN_LABEL[y][row[3] as usize]
    };
    let (p0, p1) = (joint(0), joint(1));
    p1 / (p0 + p1)
}
