use std::collections::{BTreeMap, BTreeSet, HashMap};

use proptest::prelude::*;

use cftrag::bench::{synth_forest, ForestSpec};
use cftrag::retrieval::generate_context_with;
use cftrag::{
    build_forest, filter_relations, generate_context, hierarchy_chain, locate_all, CuckooIndex, Forest,
    IndexConfig, InsertOutcome, Lookup, NodeAddress, RelationTuple,
};

fn tuples_strategy() -> impl Strategy<Value = Vec<RelationTuple>> {
    prop::collection::vec((0u64..3, 0u8..10, 0u8..10), 0..60).prop_map(|edges| {
        edges
            .into_iter()
            .enumerate()
            .map(|(seq, (t, p, c))| RelationTuple::new(t, &format!("n{p}"), &format!("n{c}"), seq as u64 + 1).unwrap())
            .collect()
    })
}

fn forest_strategy() -> impl Strategy<Value = Forest> {
    (1usize..=12, 1usize..=40, 1usize..=4, 1usize..=30, 0.0f64..=1.0, any::<u64>()).prop_map(
        |(trees, nodes, branching, vocab, overlap, seed)| {
            synth_forest(&ForestSpec {
                tree_count: trees,
                nodes_per_tree: nodes,
                max_branching: branching,
                label_vocabulary_size: vocab,
                cross_tree_overlap: overlap,
                seed,
            })
            .unwrap()
        },
    )
}

fn edges_by_tree(tuples: &[RelationTuple]) -> BTreeMap<u64, Vec<(&str, &str)>> {
    let mut out: BTreeMap<u64, Vec<(&str, &str)>> = BTreeMap::new();
    for t in tuples {
        out.entry(t.tree_id).or_default().push((&t.parent, &t.child));
    }
    out
}

/// Kahn's algorithm: true when every node can be removed.
fn is_acyclic(edges: &[(&str, &str)]) -> bool {
    let mut indegree: HashMap<&str, usize> = HashMap::new();
    let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
    for &(p, c) in edges {
        indegree.entry(p).or_default();
        *indegree.entry(c).or_default() += 1;
        out.entry(p).or_default().push(c);
    }
    let mut ready: Vec<&str> = indegree.iter().filter(|(_, &d)| d == 0).map(|(&n, _)| n).collect();
    let mut removed = 0;
    while let Some(n) = ready.pop() {
        removed += 1;
        for &c in out.get(n).map(Vec::as_slice).unwrap_or(&[]) {
            let d = indegree.get_mut(c).unwrap();
            *d -= 1;
            if *d == 0 {
                ready.push(c);
            }
        }
    }
    removed == indegree.len()
}

fn reachable(edges: &[(&str, &str)], from: &str, to: &str) -> bool {
    let mut stack = vec![from];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            stack.extend(edges.iter().filter(|(p, _)| *p == n).map(|(_, c)| *c));
        }
    }
    false
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 256, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn filtering_is_idempotent(tuples in tuples_strategy()) {
        let once = filter_relations(&tuples);
        prop_assert_eq!(filter_relations(&once), once);
    }

    #[test]
    fn filtered_edges_are_acyclic_and_reduced(tuples in tuples_strategy()) {
        let filtered = filter_relations(&tuples);
        prop_assert!(filtered.windows(2).all(|w| w[0].seq < w[1].seq));
        for (_, edges) in edges_by_tree(&filtered) {
            prop_assert!(is_acyclic(&edges));
            let unique: BTreeSet<_> = edges.iter().collect();
            prop_assert_eq!(unique.len(), edges.len());
            for (i, &(p, c)) in edges.iter().enumerate() {
                prop_assert_ne!(p, c);
                let rest: Vec<_> = edges.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, e)| *e).collect();
                prop_assert!(!reachable(&rest, p, c), "shortcut {} -> {} survived", p, c);
            }
        }
    }

    #[test]
    fn dropped_edges_close_cycles_or_are_redundant(tuples in tuples_strategy()) {
        let filtered = filter_relations(&tuples);
        let kept = edges_by_tree(&filtered);
        for t in &tuples {
            if t.parent == t.child {
                continue;
            }
            let edges = kept.get(&t.tree_id).cloned().unwrap_or_default();
            // Every input edge is either kept, implied by kept edges, or
            // would close a cycle.
            prop_assert!(
                reachable(&edges, &t.parent, &t.child) || reachable(&edges, &t.child, &t.parent),
                "edge {} -> {} lost without reason", t.parent, t.child
            );
        }
    }

    #[test]
    fn filtered_input_always_builds(tuples in tuples_strategy()) {
        let filtered = filter_relations(&tuples);
        if let Ok(forest) = build_forest(&filtered) {
            let links: usize = forest.trees().iter().map(|t| t.len() - 1).sum();
            prop_assert_eq!(links, filtered.len());
        }
    }

    #[test]
    fn hierarchy_chain_walks_toward_root(forest in forest_strategy(), n in 0usize..6) {
        for (addr, label) in forest.labelled_addresses() {
            let tree = forest.tree(addr.tree).unwrap();
            let chain = hierarchy_chain(&forest, addr, n).unwrap();
            prop_assert!(chain.up.len() <= n && chain.up.len() <= tree.depth(addr.node));
            prop_assert!(chain.down.len() <= n);
            let mut cur = tree.node(addr.node).unwrap();
            prop_assert_eq!(&cur.label, label);
            for ancestor in &chain.up {
                cur = tree.node(cur.parent.unwrap()).unwrap();
                prop_assert_eq!(&cur.label, ancestor);
            }
        }
    }

    #[test]
    fn index_has_no_false_negatives(forest in forest_strategy(), buckets in 2u32..7) {
        let index = CuckooIndex::build(&forest, IndexConfig { initial_buckets: 1 << buckets, ..IndexConfig::default() }).unwrap();
        index.audit().unwrap();
        for (label, addrs) in forest.grouped_labels() {
            let head = index.lookup(label).head();
            prop_assert!(head.is_some());
            let mut got: Vec<NodeAddress> = index.addresses(head.unwrap()).collect();
            got.sort_unstable();
            let mut want = addrs.clone();
            want.sort_unstable();
            prop_assert_eq!(got, want);
        }
        prop_assert_eq!(index.lookup("definitely not a label"), Lookup::Absent);
    }

    #[test]
    fn cuckoo_context_matches_scan(forest in forest_strategy(), n in 0usize..5, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..8)) {
        let labels: Vec<&str> = forest.labelled_addresses().map(|(_, l)| l).collect();
        let mut entities: Vec<String> = picks.iter().map(|i| i.get(&labels).to_string()).collect();
        entities.push("missing entity".into());
        let mut index = CuckooIndex::build(&forest, IndexConfig::default()).unwrap();
        let fast = generate_context(&mut index, &forest, "q", &entities, n).unwrap();
        let slow = generate_context_with(&forest, "q", &entities, n, |l| Some(locate_all(&forest, l))).unwrap();
        prop_assert_eq!(fast, slow);
    }

    #[test]
    fn touch_increments_temperature_once(forest in forest_strategy(), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..30), sort in any::<bool>()) {
        let labels: Vec<&str> = forest.grouped_labels().into_iter().map(|(l, _)| l).collect();
        let mut index = CuckooIndex::build(&forest, IndexConfig { sort_on_touch: sort, ..IndexConfig::default() }).unwrap();
        let mut expected: HashMap<&str, u64> = HashMap::new();
        for p in &picks {
            let label = *p.get(&labels);
            let head = index.lookup_and_touch(label).head().unwrap();
            let count = expected.entry(label).or_default();
            *count += 1;
            prop_assert_eq!(index.head(head).temperature(), *count);
        }
        for &label in &labels {
            let head = index.lookup(label).head().unwrap();
            prop_assert_eq!(index.head(head).temperature(), expected.get(label).copied().unwrap_or(0));
        }
        index.audit().unwrap();
        if sort {
            for b in 0..index.bucket_count() {
                prop_assert!(index.bucket_is_ordered(b));
            }
        }
    }

    #[test]
    fn churn_keeps_index_consistent(ops in prop::collection::vec((any::<bool>(), 0u16..400, 0u32..20), 1..800)) {
        let mut index = CuckooIndex::new(IndexConfig { initial_buckets: 32, ..IndexConfig::default() }).unwrap();
        let mut model: BTreeMap<String, BTreeSet<NodeAddress>> = BTreeMap::new();
        for (insert, key, node) in ops {
            let label = format!("k{key}");
            if insert {
                let addr = NodeAddress::new(0, node);
                prop_assert_ne!(index.insert(&label, &[addr]), InsertOutcome::Failed);
                model.entry(label).or_default().insert(addr);
            } else {
                prop_assert_eq!(index.remove(&label), model.remove(&label).is_some());
            }
        }
        index.audit().unwrap();
        prop_assert_eq!(index.entry_count(), model.len());
        for key in 0..400u16 {
            let label = format!("k{key}");
            match model.get(&label) {
                Some(addrs) => {
                    let head = index.lookup(&label).head().unwrap();
                    let got: BTreeSet<NodeAddress> = index.addresses(head).collect();
                    prop_assert_eq!(&got, addrs);
                }
                None => prop_assert!(!index.contains(&label)),
            }
        }
    }
}
