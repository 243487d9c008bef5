//! Command-line front end.
//!
//! Queries are read pre-tokenized: one query per line, entity labels
//! separated by tabs. No entity recognition is performed.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{bloom_build, bloom_locate, improved_bloom_locate, naive_locate, DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES};
use crate::bench::{
    fp_rate_experiment, gen_workload, parse_config, run_benchmark, synth_forest, write_report, Algorithm, BenchConfig,
    BenchError, BenchOptions, BenchReport, FpRateParams,
};
use crate::forest::{build_forest, canonical_label, filter_relations, read_relations, Forest, ForestError};
use crate::index::{CuckooIndex, IndexConfig, IndexError, IndexSnapshot};
use crate::retrieval::{
    generate_context, generate_context_with, render_with, PromptTemplate, RetrievalError, DEFAULT_DEPTH,
    DEFAULT_SYSTEM_PROMPT,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_DATA: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Data(_) => EXIT_DATA,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Data(m) | CliError::Internal(m) => m,
        }
    }
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl From<ForestError> for CliError {
    fn from(e: ForestError) -> Self {
        match e {
            ForestError::Io { .. } => CliError::Io(e.to_string()),
            ForestError::InFile { ref source, .. } if matches!(**source, ForestError::Io { .. }) => {
                CliError::Io(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::ExpansionFailed { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Io { .. } | BenchError::Csv { .. } => CliError::Io(e.to_string()),
            BenchError::Index(inner) => inner.into(),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RetrievalError> for CliError {
    fn from(e: RetrievalError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "cftrag", version, about = "Entity-forest retrieval with a cuckoo index")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest a relation file, build the forest and index, write a snapshot.
    Build(BuildArgs),
    /// Render prompts for tab-separated entity queries.
    Query(QueryArgs),
    /// Run the retrieval benchmark from a key=value config and write CSV.
    Bench(BenchArgs),
    /// Run the benchmark with bucket sorting on and off.
    Ablate(BenchArgs),
    /// Measure the raw fingerprint match rate for absent keys.
    Fprate(FprateArgs),
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Relation file: `tree_id<TAB>parent<TAB>child` per line.
    #[arg(long)]
    input: PathBuf,
    /// Where to write the index snapshot.
    #[arg(long, alias = "output")]
    snapshot: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable temperature ordering of bucket entries.
    #[arg(long)]
    no_sort: bool,
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Relation file the snapshot was built from.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    snapshot: PathBuf,
    /// Query file; standard input when omitted.
    #[arg(long)]
    queries: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Ancestors and descendants reported per occurrence.
    #[arg(long, default_value_t = DEFAULT_DEPTH)]
    n: usize,
    #[arg(long, default_value = "cuckoo")]
    algo: Algorithm,
    /// Template file with {entity}, {up} and {down} placeholders.
    #[arg(long)]
    template: Option<PathBuf>,
    #[arg(long)]
    system_prompt: Option<String>,
    /// Write updated temperatures back to the snapshot.
    #[arg(long)]
    save_temperatures: bool,
}

#[derive(Clone, Debug)]
struct AlgorithmList(Vec<Algorithm>);

fn parse_algorithms(s: &str) -> Result<AlgorithmList, String> {
    Algorithm::parse_list(s).map(AlgorithmList)
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Benchmark config file (key=value lines).
    #[arg(long)]
    input: PathBuf,
    /// CSV report path. `ablate` writes `<stem>.sorted.csv` and
    /// `<stem>.unsorted.csv` next to it.
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated subset of naive,bloom,bloom2,cuckoo (default: all).
    #[arg(long, value_parser = parse_algorithms)]
    algo: Option<AlgorithmList>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    no_sort: bool,
}

#[derive(Debug, Args)]
struct FprateArgs {
    #[arg(long, default_value_t = 100_000)]
    probes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1024)]
    buckets: usize,
    #[arg(long, default_value_t = 3148)]
    entries: usize,
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run_cli<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if code == EXIT_OK {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Build(args) => build(args, out),
        Command::Query(args) => query(args, out),
        Command::Bench(args) => bench(args, out, false),
        Command::Ablate(args) => bench(args, out, true),
        Command::Fprate(args) => fprate(args, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.message());
            e.exit_code()
        }
    }
}

fn load_forest(path: &Path) -> Result<Forest, CliError> {
    let tuples = read_relations(path)?;
    let filtered = filter_relations(&tuples);
    build_forest(&filtered).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn build(args: BuildArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let forest = load_forest(&args.input)?;
    let config = IndexConfig {
        seed: args.seed,
        sort_on_touch: !args.no_sort,
        ..IndexConfig::default()
    };
    let index = CuckooIndex::build(&forest, config)?;
    index.audit().map_err(CliError::Internal)?;
    let snapshot = IndexSnapshot::capture(&index, Some((forest.tree_count(), forest.node_count())));
    snapshot.write_to(&args.snapshot).map_err(|e| io_error(&args.snapshot, e))?;
    let stats = index.stats();
    writeln!(
        out,
        "trees={} nodes={} entities={} buckets={} load_factor={:.4} addresses={}",
        forest.tree_count(),
        forest.node_count(),
        stats.entry_count,
        stats.bucket_count,
        stats.load_factor,
        stats.total_addresses
    )
    .map_err(|e| CliError::Io(e.to_string()))
}

fn read_queries(path: Option<&Path>) -> Result<Vec<String>, CliError> {
    match path {
        Some(p) => Ok(fs::read_to_string(p)
            .map_err(|e| io_error(p, e))?
            .lines()
            .map(str::to_string)
            .collect()),
        None => io::stdin()
            .lock()
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|e| CliError::Io(format!("<stdin>: {e}"))),
    }
}

fn query(args: QueryArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let forest = load_forest(&args.input)?;
    let snapshot = IndexSnapshot::read_from(&args.snapshot).map_err(|e| io_error(&args.snapshot, e))?;
    let shape = (forest.tree_count(), forest.node_count());
    if snapshot.forest_shape.is_some_and(|s| s != shape) {
        return Err(CliError::Data(format!(
            "{}: snapshot was built over a different forest",
            args.snapshot.display()
        )));
    }
    let mut index = snapshot.restore()?;

    let template = match &args.template {
        Some(p) => PromptTemplate::parse(&fs::read_to_string(p).map_err(|e| io_error(p, e))?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        None => PromptTemplate::default(),
    };
    let system = args.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT);
    let annotated = matches!(args.algo, Algorithm::Bloom | Algorithm::Bloom2)
        .then(|| bloom_build(&forest, DEFAULT_BITS_PER_ELEMENT, DEFAULT_HASHES));

    let mut rendered = String::new();
    for (i, line) in read_queries(args.queries.as_deref())?.iter().enumerate() {
        let entities: Vec<String> = line
            .split('\t')
            .map(canonical_label)
            .filter(|l| !l.is_empty())
            .collect();
        if entities.is_empty() {
            continue;
        }
        let text = entities.join(", ");
        let bundle = match args.algo {
            Algorithm::Cuckoo => generate_context(&mut index, &forest, &text, &entities, args.n),
            Algorithm::Naive => generate_context_with(&forest, &text, &entities, args.n, |l| {
                Some(naive_locate(&forest, l).addresses)
            }),
            Algorithm::Bloom => generate_context_with(&forest, &text, &entities, args.n, |l| {
                Some(bloom_locate(annotated.as_ref().expect("filters built"), l).addresses)
            }),
            Algorithm::Bloom2 => generate_context_with(&forest, &text, &entities, args.n, |l| {
                Some(improved_bloom_locate(annotated.as_ref().expect("filters built"), l).addresses)
            }),
        }
        .map_err(|e| CliError::Data(format!("query line {}: {e}", i + 1)))?;
        if !rendered.is_empty() {
            rendered.push('\n');
        }
        rendered.push_str(&render_with(&bundle, system, &template));
    }

    match &args.output {
        Some(p) => fs::write(p, &rendered).map_err(|e| io_error(p, e))?,
        None => out.write_all(rendered.as_bytes()).map_err(|e| CliError::Io(e.to_string()))?,
    }
    if args.save_temperatures {
        IndexSnapshot::capture(&index, Some(shape))
            .write_to(&args.snapshot)
            .map_err(|e| io_error(&args.snapshot, e))?;
    }
    Ok(())
}

fn run_config(config: &BenchConfig, options: &BenchOptions) -> Result<BenchReport, CliError> {
    let mut report = BenchReport::default();
    for &trees in &config.tree_counts {
        let forest = synth_forest(&config.forest_spec(trees))?;
        for &epq in &config.entities_per_query {
            let workload = gen_workload(&forest, &config.workload_spec(epq))?;
            report.extend(run_benchmark(&forest, &workload, options)?);
        }
    }
    if !report.all_correct() {
        return Err(CliError::Internal("a retriever disagreed with the exhaustive scan".into()));
    }
    Ok(report)
}

fn sibling(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{tag}.csv"))
}

fn bench(args: BenchArgs, out: &mut dyn Write, ablate: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.input).map_err(|e| io_error(&args.input, e))?;
    let mut config = parse_config(&text).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let algorithms = args
        .algo
        .map(|a| a.0)
        .or_else(|| config.algorithms.clone())
        .unwrap_or_else(|| Algorithm::ALL.to_vec());
    let mut options = BenchOptions {
        algorithms,
        rounds: args.rounds.or(config.rounds).unwrap_or(100),
        sorting_enabled: !args.no_sort,
        index: IndexConfig {
            seed: config.index_seed(),
            ..IndexConfig::default()
        },
        ..BenchOptions::default()
    };
    let line = |e: io::Error| CliError::Io(e.to_string());

    if !ablate {
        let report = run_config(&config, &options)?;
        write_report(&report, &args.output)?;
        writeln!(out, "wrote {} rows to {}", report.rows.len(), args.output.display()).map_err(line)?;
        for a in &options.algorithms {
            if let Some(mean) = report.mean_time(*a) {
                writeln!(out, "{a}: mean {mean:.0} ns/query").map_err(line)?;
            }
        }
        return Ok(());
    }

    for (sorting, tag) in [(true, "sorted"), (false, "unsorted")] {
        options.sorting_enabled = sorting;
        let report = run_config(&config, &options)?;
        let path = sibling(&args.output, tag);
        write_report(&report, &path)?;
        writeln!(out, "wrote {} rows to {}", report.rows.len(), path.display()).map_err(line)?;
        for a in &options.algorithms {
            let first = report.mean_time_rounds(*a, 1, 1);
            let rest = report.mean_time_rounds(*a, 2, options.rounds);
            if let (Some(first), Some(rest)) = (first, rest) {
                writeln!(out, "{tag} {a}: round 1 {first:.0} ns/query, rounds 2+ {rest:.0} ns/query").map_err(line)?;
            }
        }
    }
    Ok(())
}

fn fprate(args: FprateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let params = FpRateParams {
        bucket_count: args.buckets,
        entries: args.entries,
        seed: args.seed,
    };
    let r = fp_rate_experiment(&params, args.probes)?;
    let text = format!(
        "probes={}\nentries={}\nfailed_inserts={}\nload_factor={:.4}\nfingerprint_matches={}\nrate={:.6}\n\
         full_bucket_rate={:.6}\noccupancy_rate={:.6}\nsigma={:.6}\nwrong_results={}\n",
        r.probes,
        r.entries_inserted,
        r.failed_inserts,
        r.load_factor,
        r.fingerprint_matches,
        r.rate,
        r.full_bucket_rate,
        r.occupancy_rate,
        r.sigma(r.occupancy_rate),
        r.wrong_results
    );
    match &args.output {
        Some(p) => fs::write(p, text).map_err(|e| io_error(p, e)),
        None => out.write_all(text.as_bytes()).map_err(|e| CliError::Io(e.to_string())),
    }
}
