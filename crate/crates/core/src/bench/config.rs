//! `key=value` benchmark configuration.
//!
//! ```text
//! # forest-size sweep
//! tree_count = 50, 300, 600
//! nodes_per_tree = 100
//! entities_per_query = 5
//! skew = 0
//! ```
//!
//! `tree_count` and `entities_per_query` accept comma lists; the benchmark
//! runs their cross product.

use super::harness::Algorithm;
use super::synth::ForestSpec;
use super::workload::WorkloadSpec;
use super::BenchError;

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub tree_counts: Vec<usize>,
    pub nodes_per_tree: usize,
    pub max_branching: usize,
    pub label_vocabulary_size: usize,
    pub cross_tree_overlap: f64,
    pub query_count: usize,
    pub entities_per_query: Vec<usize>,
    pub skew: f64,
    pub seed: u64,
    pub rounds: Option<usize>,
    pub algorithms: Option<Vec<Algorithm>>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let forest = ForestSpec::default();
        let workload = WorkloadSpec::default();
        Self {
            tree_counts: vec![forest.tree_count],
            nodes_per_tree: forest.nodes_per_tree,
            max_branching: forest.max_branching,
            label_vocabulary_size: forest.label_vocabulary_size,
            cross_tree_overlap: forest.cross_tree_overlap,
            query_count: workload.query_count,
            entities_per_query: vec![workload.entities_per_query],
            skew: workload.skew,
            seed: forest.seed,
            rounds: None,
            algorithms: None,
        }
    }
}

impl BenchConfig {
    pub fn forest_spec(&self, tree_count: usize) -> ForestSpec {
        ForestSpec {
            tree_count,
            nodes_per_tree: self.nodes_per_tree,
            max_branching: self.max_branching,
            label_vocabulary_size: self.label_vocabulary_size,
            cross_tree_overlap: self.cross_tree_overlap,
            seed: self.seed,
        }
    }

    pub fn workload_spec(&self, entities_per_query: usize) -> WorkloadSpec {
        WorkloadSpec {
            query_count: self.query_count,
            entities_per_query,
            skew: self.skew,
            seed: self.seed.wrapping_add(1),
        }
    }

    /// Seed for cuckoo relocation in benchmark indices.
    pub fn index_seed(&self) -> u64 {
        self.seed.wrapping_add(2)
    }
}

fn list<T: std::str::FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| format!("`{s}`: {e}")))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn one<T: std::str::FromStr>(value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| format!("`{value}`: {e}"))
}

pub fn parse_config(text: &str) -> Result<BenchConfig, BenchError> {
    let mut cfg = BenchConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| BenchError::Config { line: i + 1, message };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key=value".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let parsed: Result<(), String> = (|| {
            match key {
                "tree_count" => cfg.tree_counts = list(value)?,
                "nodes_per_tree" => cfg.nodes_per_tree = one(value)?,
                "max_branching" => cfg.max_branching = one(value)?,
                "label_vocabulary_size" => cfg.label_vocabulary_size = one(value)?,
                "cross_tree_overlap" => cfg.cross_tree_overlap = one(value)?,
                "query_count" => cfg.query_count = one(value)?,
                "entities_per_query" => cfg.entities_per_query = list(value)?,
                "skew" => cfg.skew = one(value)?,
                "seed" => cfg.seed = one(value)?,
                "rounds" => cfg.rounds = Some(one(value)?),
                "algorithms" => cfg.algorithms = Some(Algorithm::parse_list(value)?),
                other => return Err(format!("unknown key `{other}`")),
            }
            Ok(())
        })();
        parsed.map_err(err)?;
    }
    for &t in &cfg.tree_counts {
        cfg.forest_spec(t).validate()?;
    }
    for &e in &cfg.entities_per_query {
        cfg.workload_spec(e).validate()?;
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_scalars() {
        let cfg = parse_config(
            "# sweep\ntree_count = 50, 300,600\nentities_per_query=5,10,20\nskew=1.1\nalgorithms=naive,cuckoo\nrounds=7\n",
        )
        .unwrap();
        assert_eq!(cfg.tree_counts, [50, 300, 600]);
        assert_eq!(cfg.entities_per_query, [5, 10, 20]);
        assert_eq!(cfg.skew, 1.1);
        assert_eq!(cfg.rounds, Some(7));
        assert_eq!(cfg.algorithms, Some(vec![Algorithm::Naive, Algorithm::Cuckoo]));
        assert_eq!(cfg.nodes_per_tree, 100);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("seed=1\n\nbogus=3\n").unwrap_err();
        assert!(matches!(err, BenchError::Config { line: 3, .. }), "{err}");
        let err = parse_config("tree_count=ten\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1:"));
        assert!(parse_config("no equals sign\n").is_err());
        assert!(parse_config("cross_tree_overlap=2\n").is_err());
    }
}
