use std::collections::{HashMap, HashSet};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::BenchError;
use crate::forest::Forest;

/// One query: the entity labels it mentions.
pub type Query = Vec<String>;

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub query_count: usize,
    pub entities_per_query: usize,
    /// Zipf exponent over label popularity rank; 0 is uniform.
    pub skew: f64,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            query_count: 20,
            entities_per_query: 5,
            skew: 0.0,
            seed: 11,
        }
    }
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.entities_per_query == 0 {
            return Err(BenchError::InvalidSpec("entities_per_query must be at least 1".into()));
        }
        if !(self.skew >= 0.0 && self.skew.is_finite()) {
            return Err(BenchError::InvalidSpec("skew must be a finite value >= 0".into()));
        }
        Ok(())
    }
}

/// Labels of `forest` ordered by popularity: occurrence count descending,
/// ties broken by label.
pub fn popularity_ranking(forest: &Forest) -> Vec<&str> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for (_, label) in forest.labelled_addresses() {
        *counts.entry(label).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().map(|(l, _)| l).collect()
}

/// Samples queries of distinct labels, Zipf-weighted by popularity rank.
/// When the forest has fewer distinct labels than `entities_per_query`,
/// every query holds all of them.
pub fn gen_workload(forest: &Forest, spec: &WorkloadSpec) -> Result<Vec<Query>, BenchError> {
    spec.validate()?;
    if forest.is_empty() {
        return Err(BenchError::EmptyForest);
    }
    let ranked = popularity_ranking(forest);
    let per_query = spec.entities_per_query.min(ranked.len());
    let zipf = Zipf::new(ranked.len() as f64, spec.skew)
        .map_err(|e| BenchError::InvalidSpec(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut queries = Vec::with_capacity(spec.query_count);
    for _ in 0..spec.query_count {
        let mut picked = HashSet::with_capacity(per_query);
        let mut query = Vec::with_capacity(per_query);
        while query.len() < per_query {
            let rank = (zipf.sample(&mut rng) as usize).clamp(1, ranked.len()) - 1;
            if picked.insert(rank) {
                query.push(ranked[rank].to_string());
            }
        }
        queries.push(query);
    }
    Ok(queries)
}
