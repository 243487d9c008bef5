use std::fmt;
use std::fs::File;
use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::workload::Query;
use super::BenchError;
use crate::baselines::{
    bloom_build, bloom_locate, improved_bloom_locate, naive_locate, BloomAnnotatedForest,
    DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES,
};
use crate::forest::{Forest, NodeAddress};
use crate::index::{CuckooIndex, IndexConfig, Lookup};

pub const REPORT_HEADER: &str =
    "algorithm,tree_count,entities_per_query,round,mean_time_ns,p95_time_ns,visits,correct";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Naive,
    Bloom,
    Bloom2,
    Cuckoo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Naive, Algorithm::Bloom, Algorithm::Bloom2, Algorithm::Cuckoo];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Naive => "naive",
            Algorithm::Bloom => "bloom",
            Algorithm::Bloom2 => "bloom2",
            Algorithm::Cuckoo => "cuckoo",
        }
    }

    /// Parses a comma-separated list; `all` expands to every algorithm.
    pub fn parse_list(s: &str) -> Result<Vec<Algorithm>, String> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Self::ALL);
            } else {
                out.push(part.parse()?);
            }
        }
        out.dedup();
        if out.is_empty() {
            return Err("no algorithm given".into());
        }
        Ok(out)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown algorithm `{s}` (expected naive, bloom, bloom2 or cuckoo)"))
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub algorithms: Vec<Algorithm>,
    pub rounds: usize,
    pub sorting_enabled: bool,
    pub bits_per_element: usize,
    pub bloom_hashes: u32,
    pub index: IndexConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            algorithms: Algorithm::ALL.to_vec(),
            rounds: 100,
            sorting_enabled: true,
            bits_per_element: DEFAULT_BITS_PER_ELEMENT,
            bloom_hashes: DEFAULT_HASHES,
            index: IndexConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub algorithm: Algorithm,
    pub tree_count: usize,
    pub entities_per_query: usize,
    pub round: usize,
    /// Mean per-query retrieval time in this round.
    pub mean_time_ns: f64,
    pub p95_time_ns: u64,
    /// Work units in this round: nodes visited plus filter probes for the
    /// tree walkers, slots examined for the cuckoo index.
    pub visits: u64,
    pub correct: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn all_correct(&self) -> bool {
        self.rows.iter().all(|r| r.correct)
    }

    pub fn extend(&mut self, other: BenchReport) {
        self.rows.extend(other.rows);
    }

    fn mean_where(&self, pred: impl Fn(&BenchRow) -> bool) -> Option<f64> {
        let (sum, n) = self
            .rows
            .iter()
            .filter(|r| pred(r))
            .fold((0.0, 0usize), |(s, n), r| (s + r.mean_time_ns, n + 1));
        (n > 0).then(|| sum / n as f64)
    }

    /// Mean of the per-round means of `algorithm`.
    pub fn mean_time(&self, algorithm: Algorithm) -> Option<f64> {
        self.mean_where(|r| r.algorithm == algorithm)
    }

    /// Mean of the per-round means for rounds in `first..=last`.
    pub fn mean_time_rounds(&self, algorithm: Algorithm, first: usize, last: usize) -> Option<f64> {
        self.mean_where(|r| r.algorithm == algorithm && (first..=last).contains(&r.round))
    }

    pub fn total_visits(&self, algorithm: Algorithm) -> u64 {
        self.rows.iter().filter(|r| r.algorithm == algorithm).map(|r| r.visits).sum()
    }
}

#[allow(clippy::large_enum_variant)]
enum Retriever<'f> {
    Naive(&'f Forest),
    Bloom(&'f BloomAnnotatedForest<'f>),
    Bloom2(&'f BloomAnnotatedForest<'f>),
    Cuckoo(CuckooIndex),
}

impl Retriever<'_> {
    #[inline]
    fn locate(&mut self, label: &str) -> (Vec<NodeAddress>, u64) {
        match self {
            Retriever::Naive(f) => {
                let r = naive_locate(f, label);
                (r.addresses, r.stats.total())
            }
            Retriever::Bloom(a) => {
                let r = bloom_locate(a, label);
                (r.addresses, r.stats.total())
            }
            Retriever::Bloom2(a) => {
                let r = improved_bloom_locate(a, label);
                (r.addresses, r.stats.total())
            }
            Retriever::Cuckoo(index) => match index.lookup_and_touch_counted(label) {
                (Lookup::Found(head), probes) => {
                    let mut out = Vec::with_capacity(index.head(head).count());
                    for block in index.blocks(head) {
                        out.extend_from_slice(block.addresses());
                    }
                    (out, probes)
                }
                (Lookup::Absent, probes) => (Vec::new(), probes),
            },
        }
    }
}

fn p95(times: &mut [u64]) -> u64 {
    if times.is_empty() {
        return 0;
    }
    times.sort_unstable();
    let rank = (times.len() as f64 * 0.95).ceil() as usize;
    times[rank.clamp(1, times.len()) - 1]
}

/// Times every algorithm over `rounds` passes of the workload.
///
/// Only the lookup of each query's entities is inside the timed region;
/// index and filter construction happen up front. Rounds are interleaved
/// across algorithms so drift in machine load hits all of them alike. Every
/// result is checked against an exhaustive label scan.
pub fn run_benchmark(forest: &Forest, workload: &[Query], options: &BenchOptions) -> Result<BenchReport, BenchError> {
    if options.rounds == 0 {
        return Err(BenchError::InvalidSpec("rounds must be positive".into()));
    }
    let oracle = forest.label_index();
    let needs_bloom = options
        .algorithms
        .iter()
        .any(|a| matches!(a, Algorithm::Bloom | Algorithm::Bloom2));
    let annotated = needs_bloom.then(|| bloom_build(forest, options.bits_per_element, options.bloom_hashes));

    let mut retrievers: Vec<(Algorithm, Retriever<'_>)> = Vec::new();
    for &algorithm in &options.algorithms {
        let r = match algorithm {
            Algorithm::Naive => Retriever::Naive(forest),
            Algorithm::Bloom => Retriever::Bloom(annotated.as_ref().expect("filters built")),
            Algorithm::Bloom2 => Retriever::Bloom2(annotated.as_ref().expect("filters built")),
            Algorithm::Cuckoo => {
                let config = IndexConfig {
                    sort_on_touch: options.sorting_enabled,
                    ..options.index.clone()
                };
                Retriever::Cuckoo(CuckooIndex::build(forest, config)?)
            }
        };
        retrievers.push((algorithm, r));
    }

    let entities_per_query = workload.iter().map(Vec::len).max().unwrap_or(0);
    let empty = Vec::new();
    let mut rows = Vec::with_capacity(options.rounds * retrievers.len());
    let mut times = Vec::with_capacity(workload.len());
    for round in 1..=options.rounds {
        for (algorithm, retriever) in retrievers.iter_mut() {
            times.clear();
            let mut visits = 0;
            let mut correct = true;
            for query in workload {
                let start = Instant::now();
                let results: Vec<(Vec<NodeAddress>, u64)> = query.iter().map(|l| retriever.locate(l)).collect();
                let elapsed = start.elapsed().as_nanos() as u64;
                let results = black_box(results);
                times.push(elapsed);

                for (label, (mut found, work)) in query.iter().zip(results) {
                    visits += work;
                    found.sort_unstable();
                    correct &= &found == oracle.get(label.as_str()).unwrap_or(&empty);
                }
            }
            let mean = if times.is_empty() {
                0.0
            } else {
                times.iter().sum::<u64>() as f64 / times.len() as f64
            };
            rows.push(BenchRow {
                algorithm: *algorithm,
                tree_count: forest.tree_count(),
                entities_per_query,
                round,
                mean_time_ns: mean,
                p95_time_ns: p95(&mut times),
                visits,
                correct,
            });
        }
    }
    let order = |a: Algorithm| options.algorithms.iter().position(|&x| x == a);
    rows.sort_by_key(|r| (order(r.algorithm), r.round));
    Ok(BenchReport { rows })
}

pub fn write_report_to<W: Write>(report: &BenchReport, out: W) -> csv::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in &report.rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes the report as CSV with a fixed header and the report's row order.
pub fn write_report(report: &BenchReport, path: &Path) -> Result<(), BenchError> {
    if report.is_empty() {
        return Err(BenchError::InvalidSpec("refusing to write an empty report".into()));
    }
    let file = File::create(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_report_to(report, file).map_err(|source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_report(path: &Path) -> Result<BenchReport, BenchError> {
    let csv_err = |source| BenchError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let rows = reader.deserialize().collect::<Result<Vec<BenchRow>, _>>().map_err(csv_err)?;
    Ok(BenchReport { rows })
}
