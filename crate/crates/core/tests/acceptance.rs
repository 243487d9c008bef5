//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cftrag::bench::{
    fp_rate_experiment, gen_workload, run_benchmark, synth_forest, Algorithm, BenchOptions, BenchReport,
    ForestSpec, FpRateParams, WorkloadSpec,
};
use cftrag::index::DEFAULT_GROW_THRESHOLD;
use cftrag::{
    bloom_build, bloom_locate, filter_relations, improved_bloom_locate, locate_all, naive_locate, CuckooIndex,
    IndexConfig, InsertOutcome, Lookup, NodeAddress, RelationTuple,
};

type Outcome = Result<String, String>;

fn sorted(mut v: Vec<NodeAddress>) -> Vec<NodeAddress> {
    v.sort_unstable();
    v
}

fn cuckoo_addresses(index: &CuckooIndex, label: &str) -> Vec<NodeAddress> {
    match index.lookup(label) {
        Lookup::Found(h) => sorted(index.addresses(h).collect()),
        Lookup::Absent => Vec::new(),
    }
}

fn exactness() -> Outcome {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config {
        cases: 200,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = (1usize..=50, 1usize..=200, 1usize..=6, 1usize..=400, 0.0f64..=1.0, any::<u64>());
    let checked = std::cell::Cell::new(0u64);
    let result = runner.run(&strategy, |(trees, nodes, branching, vocab, overlap, seed)| {
        let forest = synth_forest(&ForestSpec {
            tree_count: trees,
            nodes_per_tree: nodes,
            max_branching: branching,
            label_vocabulary_size: vocab,
            cross_tree_overlap: overlap,
            seed,
        })
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let index = CuckooIndex::build(&forest, IndexConfig { seed, ..IndexConfig::default() })
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        let annotated = bloom_build(&forest, 10, 4);
        let present: Vec<&str> = forest.labelled_addresses().map(|(_, l)| l).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for i in 0..1000 {
            let label = if rng.random_bool(0.8) {
                present.choose(&mut rng).expect("forest is non-empty").to_string()
            } else {
                format!("absent-{i}-{}", rng.random::<u32>())
            };
            let oracle = sorted(locate_all(&forest, &label));
            prop_assert_eq!(&cuckoo_addresses(&index, &label), &oracle, "cuckoo on {}", label);
            prop_assert_eq!(&sorted(naive_locate(&forest, &label).addresses), &oracle, "naive on {}", label);
            prop_assert_eq!(&sorted(bloom_locate(&annotated, &label).addresses), &oracle, "bloom on {}", label);
            prop_assert_eq!(
                &sorted(improved_bloom_locate(&annotated, &label).addresses),
                &oracle,
                "bloom2 on {}",
                label
            );
        }
        checked.set(checked.get() + 1);
        Ok(())
    });
    let secs = start.elapsed().as_secs_f64();
    let checked = checked.get();
    match result {
        Err(e) => Err(format!("{e}")),
        Ok(()) if secs >= 60.0 => Err(format!("{checked} forests exact but took {secs:.1} s (target < 60 s)")),
        Ok(()) => Ok(format!("{checked} forests x 1000 labels, 4 retrievers match the scan ({secs:.1} s)")),
    }
}

fn churn() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut index = CuckooIndex::new(IndexConfig {
        initial_buckets: 16,
        seed: 2,
        ..IndexConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let pool: Vec<String> = (0..600).map(|i| format!("entity-{i}")).collect();
    let mut model: BTreeMap<&str, BTreeSet<NodeAddress>> = BTreeMap::new();
    let mut removed: BTreeSet<&str> = BTreeSet::new();
    for op in 0..10_000u32 {
        let label = pool.choose(&mut rng).unwrap().as_str();
        if rng.random_bool(0.6) {
            let addr = NodeAddress::new(rng.random_range(0..100), rng.random_range(0..100));
            if index.insert(label, &[addr]) == InsertOutcome::Failed {
                return Err(format!("op {op}: insert of {label} failed"));
            }
            model.entry(label).or_default().insert(addr);
            removed.remove(label);
        } else if model.remove(label).is_some() {
            if !index.remove(label) {
                return Err(format!("op {op}: remove of live {label} reported absent"));
            }
            removed.insert(label);
        }
        for (l, addrs) in &model {
            let got = cuckoo_addresses(&index, l);
            if got != addrs.iter().copied().collect::<Vec<_>>() {
                return Err(format!("op {op}: {l} lost addresses or went missing"));
            }
        }
        for l in &removed {
            if index.contains(l) {
                return Err(format!("op {op}: removed {l} still found"));
            }
        }
    }
    index.audit()?;
    Ok(format!(
        "10000 ops, {} live, {} removed, {} expansions, no false negatives",
        model.len(),
        removed.len(),
        index.stats().expansions
    ))
}

fn load_factor() -> Outcome {
    let mut index = CuckooIndex::new(IndexConfig::fixed(1024)).map_err(|e| e.to_string())?;
    let mut ok = 0;
    for i in 0..3148u32 {
        if index.insert(&format!("entity-{i}"), &[NodeAddress::new(i, 0)]) == InsertOutcome::Inserted {
            ok += 1;
        }
    }
    let stats = index.stats();
    if ok == 3148 {
        if (stats.load_factor - 0.7686).abs() <= 1e-4 {
            Ok(format!("all 3148 placed, load factor {:.4} (full-success branch)", stats.load_factor))
        } else {
            Err(format!("all placed but load factor {:.6}", stats.load_factor))
        }
    } else {
        let exact = ok as f64 / 4096.0;
        if ok >= 3140 && (stats.load_factor - exact).abs() < 1e-12 {
            Ok(format!("{ok} placed, load factor {:.4} (downgraded branch)", stats.load_factor))
        } else {
            Err(format!("{ok} placed, load factor {:.6}", stats.load_factor))
        }
    }
}

fn fp_rate() -> Outcome {
    let probes = 1_000_000;
    let r = fp_rate_experiment(&FpRateParams::default(), probes).map_err(|e| e.to_string())?;
    let target = r.full_bucket_rate;
    let sigma = r.sigma(target);
    let detail = format!(
        "rate {:.6} vs {:.6} +/- {:.6} (3 sigma); occupancy-adjusted expectation {:.6}; load {:.4}; wrong results {}",
        r.rate,
        target,
        3.0 * sigma,
        r.occupancy_rate,
        r.load_factor,
        r.wrong_results
    );
    if r.wrong_results != 0 {
        return Err(detail);
    }
    if (r.rate - target).abs() <= 3.0 * sigma {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn desk_forest() -> cftrag::Forest {
    synth_forest(&ForestSpec::default()).expect("valid spec")
}

fn bench(forest: &cftrag::Forest, entities: usize, skew: f64, options: &BenchOptions) -> Result<BenchReport, String> {
    let workload = gen_workload(
        forest,
        &WorkloadSpec {
            entities_per_query: entities,
            skew,
            ..WorkloadSpec::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let report = run_benchmark(forest, &workload, options).map_err(|e| e.to_string())?;
    if !report.all_correct() {
        return Err("a retriever returned a wrong address set".into());
    }
    Ok(report)
}

fn means(report: &BenchReport) -> BTreeMap<Algorithm, f64> {
    Algorithm::ALL
        .iter()
        .filter_map(|&a| report.mean_time(a).map(|m| (a, m)))
        .collect()
}

fn speed_ordering(five: &BenchReport, secs: f64) -> Outcome {
    let m = means(five);
    let (naive, bloom, bloom2, cuckoo) = (m[&Algorithm::Naive], m[&Algorithm::Bloom], m[&Algorithm::Bloom2], m[&Algorithm::Cuckoo]);
    let detail = format!(
        "mean ns/query naive {naive:.0}, bloom {bloom:.0}, bloom2 {bloom2:.0}, cuckoo {cuckoo:.0}; naive/cuckoo {:.1}x ({secs:.0} s)",
        naive / cuckoo
    );
    if cuckoo < bloom2 && bloom2 < bloom && bloom < naive && naive >= 10.0 * cuckoo && secs < 300.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn query_size(five: &BenchReport, twenty: &BenchReport) -> Outcome {
    let (m5, m20) = (means(five), means(twenty));
    let naive = m20[&Algorithm::Naive] / m5[&Algorithm::Naive];
    let cuckoo = m20[&Algorithm::Cuckoo] / m5[&Algorithm::Cuckoo];
    let detail = format!("20/5 entity time ratio: naive {naive:.2}x (need >= 2), cuckoo {cuckoo:.2}x (need <= 2)");
    if naive >= 2.0 && cuckoo <= 2.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sorting(forest: &cftrag::Forest) -> Outcome {
    let mut options = BenchOptions {
        algorithms: vec![Algorithm::Cuckoo],
        ..BenchOptions::default()
    };
    let sorted = bench(forest, 5, 1.1, &options)?;
    options.sorting_enabled = false;
    let unsorted = bench(forest, 5, 1.1, &options)?;
    let first = sorted.mean_time_rounds(Algorithm::Cuckoo, 1, 1).unwrap();
    let rest = sorted.mean_time_rounds(Algorithm::Cuckoo, 2, 100).unwrap();
    let u_first = unsorted.mean_time_rounds(Algorithm::Cuckoo, 1, 1).unwrap();
    let u_rest = unsorted.mean_time_rounds(Algorithm::Cuckoo, 2, 100).unwrap();
    let detail = format!(
        "sorted: round 1 {first:.0} ns, rounds 2+ {rest:.0} ns; unsorted (informational): {u_first:.0} ns, {u_rest:.0} ns"
    );
    if rest <= first {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn expansion() -> Outcome {
    let mut expansions = 0;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(case);
        let buckets = 1 << rng.random_range(2..8);
        let mut index = CuckooIndex::new(IndexConfig {
            initial_buckets: buckets,
            grow_threshold: Some(DEFAULT_GROW_THRESHOLD),
            seed: case,
            ..IndexConfig::default()
        })
        .map_err(|e| e.to_string())?;
        let mut i = 0u32;
        while index.stats().expansions == 0 {
            let before: BTreeMap<String, Vec<NodeAddress>> = index
                .occupied()
                .map(|(_, h)| {
                    let label = index.head(h).label().to_string();
                    let addrs = cuckoo_addresses(&index, &label);
                    (label, addrs)
                })
                .collect();
            let label = format!("c{case}-e{i}");
            let addrs: Vec<NodeAddress> = (0..rng.random_range(1..20))
                .map(|_| NodeAddress::new(rng.random_range(0..50), rng.random_range(0..200)))
                .collect();
            if index.insert(&label, &addrs) == InsertOutcome::Failed {
                return Err(format!("case {case}: insert failed at load {:.3}", index.load_factor()));
            }
            if index.stats().expansions > 0 {
                for (l, a) in &before {
                    if &cuckoo_addresses(&index, l) != a {
                        return Err(format!("case {case}: {l} changed across expansion"));
                    }
                }
                if index.entry_count() != before.len() + 1 || !index.contains(&label) {
                    return Err(format!("case {case}: entity count changed across expansion"));
                }
                index.audit().map_err(|e| format!("case {case}: {e}"))?;
                expansions += 1;
            }
            i += 1;
        }
    }
    Ok(format!("{expansions} indices grew past the threshold with identical contents"))
}

fn tuple(tree: u64, p: &str, c: &str, seq: u64) -> RelationTuple {
    RelationTuple::new(tree, p, c, seq).unwrap()
}

fn filter_goldens() -> Outcome {
    let cases = [
        (vec![tuple(0, "A", "A", 0)], vec![]),
        (
            vec![tuple(0, "A", "B", 0), tuple(0, "B", "C", 1), tuple(0, "A", "C", 2)],
            vec![tuple(0, "A", "B", 0), tuple(0, "B", "C", 1)],
        ),
        (vec![tuple(0, "A", "B", 0), tuple(0, "B", "A", 1)], vec![tuple(0, "A", "B", 0)]),
    ];
    for (i, (input, expected)) in cases.iter().enumerate() {
        if &filter_relations(input) != expected {
            return Err(format!("golden {} mismatch", i + 1));
        }
    }
    let mut runner = TestRunner::new(Config {
        cases: 1000,
        failure_persistence: None,
        ..Config::default()
    });
    let strategy = prop::collection::vec((0u64..3, 0u8..8, 0u8..8), 0..40);
    runner
        .run(&strategy, |edges| {
            let tuples: Vec<RelationTuple> = edges
                .iter()
                .enumerate()
                .map(|(seq, &(t, p, c))| tuple(t, &format!("n{p}"), &format!("n{c}"), seq as u64))
                .collect();
            let once = filter_relations(&tuples);
            prop_assert_eq!(filter_relations(&once), once);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("3 goldens exact; idempotent on 1000 random tuple sets".into())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, outcome: Outcome| {
        match &outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    };

    report("1 exactness", exactness());
    report("2 churn", churn());
    report("3 load factor", load_factor());
    report("4 fingerprint fp rate", fp_rate());

    let forest = desk_forest();
    let start = Instant::now();
    let timed = bench(&forest, 5, 0.0, &BenchOptions::default());
    let secs = start.elapsed().as_secs_f64();
    match &timed {
        Ok(five) => report("5 speed ordering", speed_ordering(five, secs)),
        Err(e) => report("5 speed ordering", Err(e.clone())),
    }
    let twenty = bench(&forest, 20, 0.0, &BenchOptions::default());
    match (&timed, &twenty) {
        (Ok(five), Ok(twenty)) => report("6 query size", query_size(five, twenty)),
        (Err(e), _) | (_, Err(e)) => report("6 query size", Err(e.clone())),
    }
    report("7 sorting", sorting(&forest));
    report("8 expansion", expansion());
    report("9 filter goldens", filter_goldens());
    println!(
        "SKIP criterion 10 answer accuracy: needs an LLM judge, not reproducible here; criterion 1 covers retrieval exactness"
    );

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
