//! Entity forests: relation filtering, construction, and traversal.
//!
//! A forest is built from `(tree_id, parent, child)` tuples. Tuples are first
//! cleaned by [`filter_relations`] (self-loops, duplicate edges, cycles and
//! transitive shortcuts are dropped), then [`build_forest`] links them into
//! trees. Each connected component under a `tree_id` becomes its own tree.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("entity `{label}` has more than one parent in tree {tree_id}")]
    MultipleParents { label: String, tree_id: u64 },
    #[error("relations under tree {tree_id} contain a cycle")]
    Cycle { tree_id: u64 },
    #[error("address {0} is outside the forest")]
    InvalidAddress(NodeAddress),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    InFile {
        path: PathBuf,
        #[source]
        source: Box<ForestError>,
    },
}

/// Canonical form of an entity label: surrounding whitespace trimmed, then
/// Unicode NFC. Labels compare by exact equality of this form.
pub fn canonical_label(raw: &str) -> String {
    raw.trim().nfc().collect()
}

/// One occurrence of an entity: a tree and a node inside it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeAddress {
    pub tree: u32,
    pub node: u32,
}

impl NodeAddress {
    pub const fn new(tree: u32, node: u32) -> Self {
        Self { tree, node }
    }
}

impl fmt::Display for NodeAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.tree, self.node)
    }
}

/// An extracted `parent -> child` relation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RelationTuple {
    pub tree_id: u64,
    pub parent: String,
    pub child: String,
    pub seq: u64,
}

impl RelationTuple {
    /// Builds a tuple with canonicalized labels. Empty labels are rejected.
    pub fn new(tree_id: u64, parent: &str, child: &str, seq: u64) -> Result<Self, ForestError> {
        let parent = canonical_label(parent);
        let child = canonical_label(child);
        if parent.is_empty() || child.is_empty() {
            return Err(ForestError::Parse {
                line: seq as usize,
                message: "empty entity label".into(),
            });
        }
        Ok(Self {
            tree_id,
            parent,
            child,
            seq,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub label: String,
    pub parent: Option<u32>,
    pub children: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
    root: u32,
}

impl Tree {
    /// Starts a tree holding only `root_label`.
    pub fn with_root(root_label: impl Into<String>) -> Self {
        Self {
            nodes: vec![TreeNode {
                label: root_label.into(),
                parent: None,
                children: Vec::new(),
            }],
            root: 0,
        }
    }

    /// Appends a child under `parent` and returns its node index.
    ///
    /// Panics if `parent` is not a node of this tree.
    pub fn add_child(&mut self, parent: u32, label: impl Into<String>) -> u32 {
        assert!((parent as usize) < self.nodes.len(), "parent out of range");
        let id = self.nodes.len() as u32;
        self.nodes.push(TreeNode {
            label: label.into(),
            parent: Some(parent),
            children: Vec::new(),
        });
        self.nodes[parent as usize].children.push(id);
        id
    }

    pub fn root(&self) -> u32 {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, index: u32) -> Option<&TreeNode> {
        self.nodes.get(index as usize)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of strict ancestors of `index`.
    pub fn depth(&self, index: u32) -> usize {
        let mut depth = 0;
        let mut cur = self.nodes[index as usize].parent;
        while let Some(p) = cur {
            depth += 1;
            cur = self.nodes[p as usize].parent;
        }
        depth
    }
}

/// An ordered collection of entity trees.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Forest {
    trees: Vec<Tree>,
    /// Source `tree_id` for each tree; components split from one id share it.
    tree_ids: Vec<u64>,
}

impl Forest {
    pub fn new() -> Self {
        Self::default()
    }

    /// Wraps prebuilt trees; each keeps its position as its source id.
    pub fn from_trees(trees: Vec<Tree>) -> Self {
        let tree_ids = (0..trees.len() as u64).collect();
        Self { trees, tree_ids }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn tree(&self, index: u32) -> Option<&Tree> {
        self.trees.get(index as usize)
    }

    pub fn tree_id(&self, index: u32) -> Option<u64> {
        self.tree_ids.get(index as usize).copied()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    pub fn node_count(&self) -> usize {
        self.trees.iter().map(Tree::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn node(&self, addr: NodeAddress) -> Option<&TreeNode> {
        self.tree(addr.tree)?.node(addr.node)
    }

    pub fn contains_address(&self, addr: NodeAddress) -> bool {
        self.node(addr).is_some()
    }

    /// Every node address paired with its label, in `(tree, node)` order.
    pub fn labelled_addresses(&self) -> impl Iterator<Item = (NodeAddress, &str)> + '_ {
        self.trees.iter().enumerate().flat_map(|(t, tree)| {
            tree.nodes
                .iter()
                .enumerate()
                .map(move |(n, node)| (NodeAddress::new(t as u32, n as u32), node.label.as_str()))
        })
    }

    /// Exhaustive label -> addresses map. Used as a correctness oracle.
    pub fn label_index(&self) -> HashMap<&str, Vec<NodeAddress>> {
        let mut index: HashMap<&str, Vec<NodeAddress>> = HashMap::new();
        for (addr, label) in self.labelled_addresses() {
            index.entry(label).or_default().push(addr);
        }
        index
    }

    /// Distinct labels in order of first occurrence, each with all of its
    /// addresses in `(tree, node)` order.
    pub fn grouped_labels(&self) -> Vec<(&str, Vec<NodeAddress>)> {
        let mut slot: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<(&str, Vec<NodeAddress>)> = Vec::new();
        for (addr, label) in self.labelled_addresses() {
            let i = *slot.entry(label).or_insert_with(|| {
                groups.push((label, Vec::new()));
                groups.len() - 1
            });
            groups[i].1.push(addr);
        }
        groups
    }
}

/// Parses the tab-separated relation format: `tree_id<TAB>parent<TAB>child`
/// per line. Blank lines and lines starting with `#` are skipped; the 1-based
/// line number becomes the tuple's `seq`.
pub fn parse_relations(text: &str) -> Result<Vec<RelationTuple>, ForestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 3 {
            return Err(ForestError::Parse {
                line,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let tree_id = fields[0].trim().parse::<u64>().map_err(|e| ForestError::Parse {
            line,
            message: format!("bad tree id `{}`: {e}", fields[0]),
        })?;
        out.push(RelationTuple::new(tree_id, fields[1], fields[2], line as u64)?);
    }
    Ok(out)
}

pub fn read_relations(path: &Path) -> Result<Vec<RelationTuple>, ForestError> {
    let text = fs::read_to_string(path).map_err(|source| ForestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_relations(&text).map_err(|e| ForestError::InFile {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

/// Dense id for `label`, assigned in first-seen order.
fn intern<'a>(ids: &mut HashMap<&'a str, usize>, labels: &mut Vec<&'a str>, label: &'a str) -> usize {
    *ids.entry(label).or_insert_with(|| {
        labels.push(label);
        labels.len() - 1
    })
}

/// Small per-tree directed graph over interned labels.
struct EdgeGraph {
    out: Vec<Vec<usize>>,
}

impl EdgeGraph {
    fn new(n: usize) -> Self {
        Self {
            out: vec![Vec::new(); n],
        }
    }

    /// Whether `to` is reachable from `from`, optionally ignoring one edge.
    fn reaches(&self, from: usize, to: usize, skip: Option<(usize, usize)>) -> bool {
        let mut seen = vec![false; self.out.len()];
        let mut stack = vec![from];
        seen[from] = true;
        while let Some(u) = stack.pop() {
            for &v in &self.out[u] {
                if skip == Some((u, v)) {
                    continue;
                }
                if v == to {
                    return true;
                }
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        false
    }
}

/// Cleans extracted relations tree by tree.
///
/// Self-loops and repeated `parent -> child` edges go first. Edges are then
/// admitted in `seq` order and an edge that would close a cycle is dropped,
/// so every removed edge is the newest edge of the cycle it would form.
/// Finally any edge `u -> w` that is implied by a longer path `u -> .. -> w`
/// is removed. The result is sorted by `seq`.
pub fn filter_relations(tuples: &[RelationTuple]) -> Vec<RelationTuple> {
    let mut by_tree: BTreeMap<u64, Vec<&RelationTuple>> = BTreeMap::new();
    for t in tuples {
        by_tree.entry(t.tree_id).or_default().push(t);
    }

    let mut kept: Vec<RelationTuple> = Vec::new();
    for group in by_tree.into_values() {
        let mut group = group;
        group.sort_by_key(|t| t.seq);

        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut labels: Vec<&str> = Vec::new();
        let mut edges: Vec<(usize, usize, &RelationTuple)> = Vec::new();
        let mut seen_edges: HashSet<(usize, usize)> = HashSet::new();
        for t in &group {
            let p = intern(&mut ids, &mut labels, &t.parent);
            let c = intern(&mut ids, &mut labels, &t.child);
            if p == c || !seen_edges.insert((p, c)) {
                continue;
            }
            edges.push((p, c, t));
        }

        let mut graph = EdgeGraph::new(ids.len());
        let mut acyclic: Vec<(usize, usize, &RelationTuple)> = Vec::new();
        for (p, c, t) in edges {
            if graph.reaches(c, p, None) {
                continue;
            }
            graph.out[p].push(c);
            acyclic.push((p, c, t));
        }

        for (p, c, t) in acyclic {
            if !graph.reaches(p, c, Some((p, c))) {
                kept.push(t.clone());
            }
        }
    }
    kept.sort_by_key(|t| t.seq);
    kept
}

/// Links filtered tuples into a forest.
///
/// Trees are ordered by `tree_id`, then by the first appearance of each
/// connected component. Node arrays follow first-seen order and children
/// follow tuple order.
pub fn build_forest(tuples: &[RelationTuple]) -> Result<Forest, ForestError> {
    let mut by_tree: BTreeMap<u64, Vec<&RelationTuple>> = BTreeMap::new();
    for t in tuples {
        by_tree.entry(t.tree_id).or_default().push(t);
    }

    let mut forest = Forest::new();
    for (tree_id, mut group) in by_tree {
        group.sort_by_key(|t| t.seq);

        let mut labels: Vec<&str> = Vec::new();
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut links: Vec<(usize, usize)> = Vec::new();
        for t in &group {
            let p = intern(&mut ids, &mut labels, &t.parent);
            let c = intern(&mut ids, &mut labels, &t.child);
            links.push((p, c));
        }

        let n = labels.len();
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(p, c) in &links {
            match parent[c] {
                Some(existing) if existing == p => continue,
                Some(_) => {
                    return Err(ForestError::MultipleParents {
                        label: labels[c].to_string(),
                        tree_id,
                    })
                }
                None => {
                    parent[c] = Some(p);
                    children[p].push(c);
                }
            }
        }

        // Components, discovered in first-seen order of their lowest node.
        let mut component = vec![usize::MAX; n];
        let mut components: Vec<Vec<usize>> = Vec::new();
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let cid = components.len();
            let mut members = Vec::new();
            let mut stack = vec![start];
            component[start] = cid;
            while let Some(u) = stack.pop() {
                members.push(u);
                let neighbours = children[u].iter().copied().chain(parent[u]);
                for v in neighbours {
                    if component[v] == usize::MAX {
                        component[v] = cid;
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }

        for members in components {
            let mut local = HashMap::with_capacity(members.len());
            for (i, &g) in members.iter().enumerate() {
                local.insert(g, i as u32);
            }
            let roots: Vec<usize> = members.iter().copied().filter(|&g| parent[g].is_none()).collect();
            if roots.len() != 1 {
                return Err(ForestError::Cycle { tree_id });
            }
            let nodes = members
                .iter()
                .map(|&g| TreeNode {
                    label: labels[g].to_string(),
                    parent: parent[g].map(|p| local[&p]),
                    children: children[g].iter().map(|c| local[c]).collect(),
                })
                .collect();
            forest.trees.push(Tree {
                nodes,
                root: local[&roots[0]],
            });
            forest.tree_ids.push(tree_id);
        }
    }
    Ok(forest)
}

/// Every address whose label equals `label`, in `(tree, node)` order.
/// Exhaustive scan; this is the reference answer for all retrievers.
pub fn locate_all(forest: &Forest, label: &str) -> Vec<NodeAddress> {
    forest
        .labelled_addresses()
        .filter(|(_, l)| *l == label)
        .map(|(addr, _)| addr)
        .collect()
}

/// Ancestors and descendants of one occurrence.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct HierarchyChain {
    /// Nearest ancestor first.
    pub up: Vec<String>,
    /// Breadth-first, nearest level first.
    pub down: Vec<String>,
}

/// Collects at most `n` ancestors and at most `n` descendants of `addr`.
pub fn hierarchy_chain(
    forest: &Forest,
    addr: NodeAddress,
    n: usize,
) -> Result<HierarchyChain, ForestError> {
    let tree = forest.tree(addr.tree).ok_or(ForestError::InvalidAddress(addr))?;
    let node = tree.node(addr.node).ok_or(ForestError::InvalidAddress(addr))?;

    let mut up = Vec::new();
    let mut cur = node.parent;
    while let Some(p) = cur {
        if up.len() == n {
            break;
        }
        let pn = &tree.nodes[p as usize];
        up.push(pn.label.clone());
        cur = pn.parent;
    }

    let mut down = Vec::new();
    let mut queue: VecDeque<u32> = node.children.iter().copied().collect();
    while let Some(c) = queue.pop_front() {
        if down.len() == n {
            break;
        }
        let cn = &tree.nodes[c as usize];
        down.push(cn.label.clone());
        queue.extend(cn.children.iter().copied());
    }
    Ok(HierarchyChain { up, down })
}
