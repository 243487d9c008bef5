use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BenchError;
use crate::forest::{Forest, Tree};

/// Shape of a synthetic forest.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestSpec {
    pub tree_count: usize,
    pub nodes_per_tree: usize,
    pub max_branching: usize,
    /// Size of the label pool shared between trees.
    pub label_vocabulary_size: usize,
    /// Probability that a node draws its label from the shared pool rather
    /// than getting a label unique to its tree position.
    pub cross_tree_overlap: f64,
    pub seed: u64,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            tree_count: 600,
            nodes_per_tree: 100,
            max_branching: 4,
            label_vocabulary_size: 2000,
            cross_tree_overlap: 0.3,
            seed: 7,
        }
    }
}

impl ForestSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let positive = [
            ("tree_count", self.tree_count),
            ("nodes_per_tree", self.nodes_per_tree),
            ("max_branching", self.max_branching),
            ("label_vocabulary_size", self.label_vocabulary_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(BenchError::InvalidSpec(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.cross_tree_overlap) {
            return Err(BenchError::InvalidSpec("cross_tree_overlap must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Random recursive trees: node `i` attaches to a uniformly chosen earlier
/// node that still has fewer than `max_branching` children.
pub fn synth_forest(spec: &ForestSpec) -> Result<Forest, BenchError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut trees = Vec::with_capacity(spec.tree_count);
    for t in 0..spec.tree_count {
        let label = |n: usize, rng: &mut ChaCha8Rng| {
            if rng.random_bool(spec.cross_tree_overlap) {
                format!("e{}", rng.random_range(0..spec.label_vocabulary_size))
            } else {
                format!("t{t}n{n}")
            }
        };
        let mut tree = Tree::with_root(label(0, &mut rng));
        let mut open: Vec<u32> = vec![0];
        let mut fanout: Vec<usize> = vec![0];
        for n in 1..spec.nodes_per_tree {
            let pick = rng.random_range(0..open.len());
            let parent = open[pick];
            let child = tree.add_child(parent, label(n, &mut rng));
            fanout[parent as usize] += 1;
            fanout.push(0);
            if fanout[parent as usize] == spec.max_branching {
                open.swap_remove(pick);
            }
            open.push(child);
        }
        trees.push(tree);
    }
    Ok(Forest::from_trees(trees))
}
