//! Reference retrievers that walk the trees directly.
//!
//! * [`naive_locate`] breadth-first searches every tree.
//! * [`bloom_locate`] consults a per-node Bloom filter over the node's subtree
//!   labels and only descends into children whose filter may contain the
//!   query.
//! * [`improved_bloom_locate`] does the same but, at nodes whose children are
//!   all leaves, compares the children's labels directly instead of probing
//!   their filters.
//!
//! All three are exact: Bloom false positives only cost extra descent.

use std::collections::{HashSet, VecDeque};

use crate::forest::{Forest, NodeAddress};
use crate::hash::bloom_hash;

pub const DEFAULT_BITS_PER_ELEMENT: usize = 10;
pub const DEFAULT_HASHES: u32 = 4;
const MIN_FILTER_BITS: u64 = 64;

/// Work counters of one search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub nodes_visited: u64,
    pub filter_probes: u64,
}

impl SearchStats {
    pub fn total(&self) -> u64 {
        self.nodes_visited + self.filter_probes
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SearchResult {
    pub addresses: Vec<NodeAddress>,
    pub stats: SearchStats,
}

/// Precomputed hash of a query, reused across every filter it is tested
/// against.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BloomKey {
    h1: u64,
    h2: u64,
}

impl BloomKey {
    pub fn of(label: &str) -> Self {
        let h = bloom_hash(label);
        Self {
            h1: h & 0xffff_ffff,
            h2: (h >> 32) | 1,
        }
    }
}

/// Classic Bloom filter using double hashing over one 64-bit hash.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<u64>,
    m: u64,
    k: u32,
    inserted: usize,
}

impl BloomFilter {
    pub fn new(bits: usize, k: u32) -> Self {
        let m = (bits as u64).max(MIN_FILTER_BITS);
        Self {
            bits: vec![0; m.div_ceil(64) as usize],
            m,
            k: k.max(1),
            inserted: 0,
        }
    }

    pub fn bit_len(&self) -> u64 {
        self.m
    }

    pub fn hash_count(&self) -> u32 {
        self.k
    }

    pub fn len(&self) -> usize {
        self.inserted
    }

    pub fn is_empty(&self) -> bool {
        self.inserted == 0
    }

    #[inline]
    fn positions(&self, key: BloomKey) -> impl Iterator<Item = u64> + '_ {
        (0..self.k as u64).map(move |i| key.h1.wrapping_add(i.wrapping_mul(key.h2)) % self.m)
    }

    pub fn insert_key(&mut self, key: BloomKey) {
        let positions: Vec<u64> = self.positions(key).collect();
        for p in positions {
            self.bits[(p / 64) as usize] |= 1 << (p % 64);
        }
        self.inserted += 1;
    }

    pub fn insert(&mut self, label: &str) {
        self.insert_key(BloomKey::of(label));
    }

    #[inline]
    pub fn query_key(&self, key: BloomKey) -> bool {
        self.positions(key)
            .all(|p| self.bits[(p / 64) as usize] & (1 << (p % 64)) != 0)
    }

    pub fn query(&self, label: &str) -> bool {
        self.query_key(BloomKey::of(label))
    }
}

/// A forest with one Bloom filter per node over that node's subtree labels.
#[derive(Clone, Debug)]
pub struct BloomAnnotatedForest<'a> {
    forest: &'a Forest,
    filters: Vec<Vec<BloomFilter>>,
    /// Per node: has children, and every child is a leaf.
    leaf_parents: Vec<Vec<bool>>,
}

impl<'a> BloomAnnotatedForest<'a> {
    pub fn forest(&self) -> &'a Forest {
        self.forest
    }

    pub fn filter(&self, addr: NodeAddress) -> Option<&BloomFilter> {
        self.filters.get(addr.tree as usize)?.get(addr.node as usize)
    }
}

/// Builds subtree filters bottom-up. Each filter gets
/// `distinct subtree labels * bits_per_element` bits (at least 64).
pub fn bloom_build(forest: &Forest, bits_per_element: usize, k: u32) -> BloomAnnotatedForest<'_> {
    let bits_per_element = bits_per_element.max(1);
    let mut filters = Vec::with_capacity(forest.tree_count());
    let mut leaf_parents = Vec::with_capacity(forest.tree_count());
    for tree in forest.trees() {
        let nodes = tree.nodes();
        let keys: Vec<BloomKey> = nodes.iter().map(|n| BloomKey::of(&n.label)).collect();

        // Post-order from the root so children are finished before parents.
        let mut order = Vec::with_capacity(nodes.len());
        let mut stack = vec![tree.root()];
        while let Some(v) = stack.pop() {
            order.push(v);
            stack.extend(nodes[v as usize].children.iter().copied());
        }
        let mut subtree: Vec<HashSet<BloomKey>> = vec![HashSet::new(); nodes.len()];
        for &v in order.iter().rev() {
            let mut set = HashSet::new();
            set.insert(keys[v as usize]);
            for &c in &nodes[v as usize].children {
                set.extend(subtree[c as usize].iter().copied());
            }
            subtree[v as usize] = set;
        }

        let tree_filters = subtree
            .iter()
            .map(|set| {
                let mut f = BloomFilter::new(set.len() * bits_per_element, k);
                let mut sorted: Vec<BloomKey> = set.iter().copied().collect();
                sorted.sort_unstable_by_key(|k| (k.h1, k.h2));
                for key in sorted {
                    f.insert_key(key);
                }
                f
            })
            .collect();
        filters.push(tree_filters);
        leaf_parents.push(
            nodes
                .iter()
                .map(|n| {
                    !n.children.is_empty()
                        && n.children.iter().all(|&c| nodes[c as usize].children.is_empty())
                })
                .collect(),
        );
    }
    BloomAnnotatedForest {
        forest,
        filters,
        leaf_parents,
    }
}

/// Breadth-first search of every tree.
pub fn naive_locate(forest: &Forest, label: &str) -> SearchResult {
    let mut result = SearchResult::default();
    let mut queue = VecDeque::new();
    for (t, tree) in forest.trees().iter().enumerate() {
        let nodes = tree.nodes();
        queue.clear();
        queue.push_back(tree.root());
        while let Some(v) = queue.pop_front() {
            result.stats.nodes_visited += 1;
            let node = &nodes[v as usize];
            if node.label == label {
                result.addresses.push(NodeAddress::new(t as u32, v));
            }
            queue.extend(node.children.iter().copied());
        }
    }
    result
}

fn pruned_search(annotated: &BloomAnnotatedForest<'_>, label: &str, skip_above_leaves: bool) -> SearchResult {
    let key = BloomKey::of(label);
    let mut result = SearchResult::default();
    let mut queue = VecDeque::new();
    for (t, tree) in annotated.forest.trees().iter().enumerate() {
        let filters = &annotated.filters[t];
        let leaf_parents = &annotated.leaf_parents[t];
        let nodes = tree.nodes();
        let root = tree.root();
        result.stats.filter_probes += 1;
        if !filters[root as usize].query_key(key) {
            continue;
        }
        queue.clear();
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            result.stats.nodes_visited += 1;
            let node = &nodes[v as usize];
            if node.label == label {
                result.addresses.push(NodeAddress::new(t as u32, v));
            }
            if skip_above_leaves && leaf_parents[v as usize] {
                for &c in &node.children {
                    result.stats.nodes_visited += 1;
                    if nodes[c as usize].label == label {
                        result.addresses.push(NodeAddress::new(t as u32, c));
                    }
                }
                continue;
            }
            for &c in &node.children {
                result.stats.filter_probes += 1;
                if filters[c as usize].query_key(key) {
                    queue.push_back(c);
                }
            }
        }
    }
    result
}

/// Top-down search that skips subtrees whose filter rules the label out.
pub fn bloom_locate(annotated: &BloomAnnotatedForest<'_>, label: &str) -> SearchResult {
    pruned_search(annotated, label, false)
}

/// [`bloom_locate`] without filter probes on leaf children of nodes whose
/// children are all leaves.
pub fn improved_bloom_locate(annotated: &BloomAnnotatedForest<'_>, label: &str) -> SearchResult {
    pruned_search(annotated, label, true)
}
