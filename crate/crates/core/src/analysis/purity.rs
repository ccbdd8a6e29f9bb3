use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::EvalReport;

pub const DEFAULT_PERMUTATIONS: usize = 10_000;

/// Each concept's most frequent symbol when it was the target.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolAssignment {
    /// concept id -> majority symbol
    pub symbols: BTreeMap<usize, usize>,
    /// Concepts whose maximum count was shared by several symbols.
    pub ties: Vec<usize>,
    /// Concepts never seen as a target.
    pub omitted: Vec<usize>,
}

impl SymbolAssignment {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbol_of(&self, concept: usize) -> Option<usize> {
        self.symbols.get(&concept).copied()
    }
}

pub fn majority_symbol_map(report: &EvalReport) -> SymbolAssignment {
    majority_from_counts(&report.per_concept_symbol_counts)
}

/// `counts[concept][symbol]`; ties go to the lowest symbol index.
pub fn majority_from_counts(counts: &[Vec<u64>]) -> SymbolAssignment {
    let mut out = SymbolAssignment::default();
    for (concept, row) in counts.iter().enumerate() {
        let max = row.iter().copied().max().unwrap_or(0);
        if max == 0 {
            out.omitted.push(concept);
            continue;
        }
        let best = row.iter().position(|&c| c == max).expect("max is present");
        if row.iter().filter(|&&c| c == max).count() > 1 {
            out.ties.push(concept);
        }
        out.symbols.insert(concept, best);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurityResult {
    pub purity: f64,
    pub chance_mean: f64,
    pub obs_minus_chance: f64,
    pub p_value: f64,
    pub n_permutations: usize,
}

/// Percentage of concepts whose category is the modal category of their
/// symbol's cluster. `categories` is indexed by concept id.
pub fn purity(assign: &SymbolAssignment, categories: &[usize]) -> Result<f64> {
    let concepts: Vec<usize> = assign.symbols.keys().copied().collect();
    let symbols: Vec<usize> = assign.symbols.values().copied().collect();
    let cats = concepts
        .iter()
        .map(|&c| {
            categories
                .get(c)
                .copied()
                .ok_or_else(|| Error::Lookup(format!("concept {c} has no category")))
        })
        .collect::<Result<Vec<_>>>()?;
    purity_of(&symbols, &cats)
}

/// Purity of parallel `(symbol, category)` labels.
pub fn purity_of(symbols: &[usize], categories: &[usize]) -> Result<f64> {
    if symbols.len() != categories.len() {
        return Err(Error::shape("purity labels", symbols.len(), categories.len()));
    }
    if symbols.is_empty() {
        return Err(Error::Domain("purity of an empty assignment".into()));
    }
    let mut clusters: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&s, &c) in symbols.iter().zip(categories) {
        *clusters.entry(s).or_default().entry(c).or_default() += 1;
    }
    let modal: usize = clusters
        .values()
        .map(|cats| cats.values().copied().max().unwrap_or(0))
        .sum();
    Ok(100.0 * modal as f64 / symbols.len() as f64)
}

/// Purity against random reassignments of the observed symbols to concepts.
/// Each permutation shuffles which concept gets which symbol, so cluster
/// sizes are preserved; the p-value counts the observed labeling as one
/// sample.
pub fn permutation_chance<R: Rng + ?Sized>(
    assign: &SymbolAssignment,
    categories: &[usize],
    n_permutations: usize,
    rng: &mut R,
) -> Result<PurityResult> {
    if n_permutations == 0 {
        return Err(Error::config("n_permutations", "must be at least 1"));
    }
    if assign.len() < 2 {
        return Err(Error::Domain("permutation test needs at least two concepts".into()));
    }
    let observed = purity(assign, categories)?;
    let cats: Vec<usize> = assign.symbols.keys().map(|&c| categories[c]).collect();
    let mut symbols: Vec<usize> = assign.symbols.values().copied().collect();
    let mut total = 0.0;
    let mut at_least = 0usize;
    for _ in 0..n_permutations {
        symbols.shuffle(rng);
        let p = purity_of(&symbols, &cats)?;
        total += p;
        // purities are ratios of small integers; compare on the count scale
        if p >= observed - 1e-9 {
            at_least += 1;
        }
    }
    let chance_mean = total / n_permutations as f64;
    Ok(PurityResult {
        purity: observed,
        chance_mean,
        obs_minus_chance: observed - chance_mean,
        p_value: (1 + at_least) as f64 / (n_permutations + 1) as f64,
        n_permutations,
    })
}
