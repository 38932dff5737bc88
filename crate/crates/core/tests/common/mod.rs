//! Test-side oracles written independently of the library code paths.
#![allow(dead_code)]

use dpens::data::{Attribute, Dataset, Schema};

/// `a(4) × b(2) × y(2)`: a 16-cell joint domain with a binary label.
pub fn schema_16() -> Schema {
    Schema::new(vec![Attribute::categorical("a", 4), Attribute::categorical("b", 2), Attribute::categorical("y", 2)], 2)
        .unwrap()
}

/// Mixed-radix digits of joint cell `x`, first attribute most significant.
pub fn digits(mut x: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for i in (0..cards.len()).rev() {
        out[i] = x % cards[i];
        x /= cards[i];
    }
    out
}

/// Expands per-cell counts into rows.
pub fn dataset_from_counts(schema: &Schema, counts: &[usize]) -> Dataset {
    let cards = schema.cardinalities();
    let mut rows = Vec::new();
    for (x, &c) in counts.iter().enumerate() {
        let row: Vec<u32> = digits(x, &cards).into_iter().map(|v| v as u32).collect();
        rows.extend(std::iter::repeat_n(row, c));
    }
    Dataset::new(schema.clone(), rows).unwrap()
}

/// Brute-force noiseless multiplicative weights over an explicit joint
/// domain, scanning every (subset, cell) counting query each round.
pub struct MwOracle {
    cards: Vec<usize>,
    workload: Vec<Vec<usize>>,
    counts: Vec<f64>,
    n: f64,
}

impl MwOracle {
    pub fn new(cards: Vec<usize>, workload: Vec<Vec<usize>>, counts: &[usize]) -> Self {
        let n = counts.iter().sum::<usize>() as f64;
        Self { cards, workload, counts: counts.iter().map(|&c| c as f64).collect(), n }
    }

    fn cells(&self) -> usize {
        self.cards.iter().product()
    }

    fn marginal_cell(&self, x: usize, subset: &[usize]) -> usize {
        let d = digits(x, &self.cards);
        subset.iter().fold(0, |acc, &a| acc * self.cards[a] + d[a])
    }

    fn marginal_size(&self, subset: &[usize]) -> usize {
        subset.iter().map(|&a| self.cards[a]).product()
    }

    /// `(subset, cell)` for every query, in workload then cell order.
    pub fn queries(&self) -> Vec<(usize, usize)> {
        let mut q = Vec::new();
        for (s, subset) in self.workload.iter().enumerate() {
            for c in 0..self.marginal_size(subset) {
                q.push((s, c));
            }
        }
        q
    }

    fn answer(&self, weights: &[f64], (s, c): (usize, usize)) -> f64 {
        (0..self.cells()).filter(|&x| self.marginal_cell(x, &self.workload[s]) == c).map(|x| weights[x]).sum()
    }

    /// Largest `|true − n·synthetic|` over all queries.
    pub fn max_error(&self, dist: &[f64]) -> f64 {
        self.queries()
            .into_iter()
            .map(|q| (self.answer(&self.counts, q) - self.n * self.answer(dist, q)).abs())
            .fold(0.0, f64::max)
    }

    /// Distribution after each of `rounds` updates.
    pub fn run(&self, rounds: usize) -> Vec<Vec<f64>> {
        let cells = self.cells();
        let mut w = vec![1.0 / cells as f64; cells];
        let queries = self.queries();
        let mut out = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let errors: Vec<f64> =
                queries.iter().map(|&q| self.answer(&self.counts, q) - self.n * self.answer(&w, q)).collect();
            let top = errors.iter().map(|e| e.abs()).fold(0.0, f64::max);
            let pick = errors.iter().position(|e| e.abs() >= top - 1e-9 * self.n).unwrap();
            let (s, c) = queries[pick];
            for (x, wx) in w.iter_mut().enumerate() {
                if self.marginal_cell(x, &self.workload[s]) == c {
                    *wx *= (errors[pick] / (2.0 * self.n)).exp();
                }
            }
            let z: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= z);
            out.push(w.clone());
        }
        out
    }
}

/// ECE straight from the definition: bin by `⌈c·B⌉`, then
/// `Σ (b_n/N)·|acc(b) − conf(b)|` over non-empty bins.
pub fn ece_oracle(pairs: &[(f64, bool)], bins: usize) -> f64 {
    let n = pairs.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let members: Vec<&(f64, bool)> =
            pairs.iter().filter(|(c, _)| (*c > lo || (b == 0 && *c >= lo)) && *c <= hi).collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let acc = members.iter().filter(|(_, ok)| *ok).count() as f64 / m;
        let conf = members.iter().map(|(c, _)| c).sum::<f64>() / m;
        total += (m / n) * (acc - conf).abs();
    }
    total
}

/// `copies` of each XOR row over two binary features.
pub fn xor(copies: usize) -> Dataset {
    let schema = Schema::new(
        vec![Attribute::categorical("x0", 2), Attribute::categorical("x1", 2), Attribute::categorical("y", 2)],
        2,
    )
    .unwrap();
    let rows = (0..copies).flat_map(|_| [vec![0, 0, 0], vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]]).collect();
    Dataset::new(schema, rows).unwrap()
}
