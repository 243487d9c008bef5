//! Entity-forest retrieval backed by a temperature-ordered cuckoo index.
//!
//! The crate ingests `(tree, parent, child)` relation tuples, builds a forest
//! of entity hierarchy trees, and indexes every entity label in a cuckoo
//! table whose entries point at block lists of node addresses. Lookups return
//! every occurrence of an entity across all trees in a couple of bucket
//! probes; [`retrieval`] turns those occurrences into ancestor/descendant
//! context for a prompt.
//!
//! Three reference retrievers live in [`baselines`] (plain BFS, per-node Bloom
//! filters, and a Bloom variant that skips filters above leaves), and
//! [`bench`] drives all four against synthetic forests.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod forest;
pub mod hash;
pub mod index;
pub mod retrieval;

pub use baselines::{
    bloom_build, bloom_locate, improved_bloom_locate, naive_locate, BloomAnnotatedForest,
    BloomFilter, SearchResult, SearchStats,
};
pub use forest::{
    build_forest, canonical_label, filter_relations, hierarchy_chain, locate_all, Forest,
    ForestError, HierarchyChain, NodeAddress, RelationTuple, Tree, TreeNode,
};
pub use index::{CuckooIndex, Fingerprint, IndexConfig, IndexError, IndexStats, InsertOutcome, Lookup};
pub use retrieval::{generate_context, render_prompt, ContextBundle, EntityContext, RetrievalError};
