//! `somtree`: build, query and benchmark SOM-tree indices, and run
//! retrieval translation over a sentence-pair corpus.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use somtree::ingest::{load_idx, load_parallel_corpus};
use somtree::{
    load_index, read_csv, run_bench, save_index, seeded_sample, BenchOptions, BuildConfig, Error, Exec, GridMetric,
    Metric, Neighbor, Prediction, QueryParams, Record, SearchResult, SomParams, SomTopology, SomTreeIndex, Translator,
};

#[derive(Parser)]
#[command(name = "somtree", version, about = "Hierarchical SOM-tree nearest-neighbor search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an index from a CSV file or an IDX image/label pair.
    Build(BuildArgs),
    /// Search an index and print one JSON line per query.
    Query(QueryArgs),
    /// Compare tree search with the exhaustive scan on a labelled test set.
    Bench(BenchArgs),
    /// Answer source sentences with the targets of their nearest stored pairs.
    Translate(TranslateArgs),
}

#[derive(Args, Clone)]
struct TreeArgs {
    /// Map shape at every level: 1d:k, 2d:k or 3d:k.
    #[arg(long, default_value = "1d:10")]
    branching: SomTopology,
    #[arg(long, default_value_t = 5)]
    depth: usize,
    /// Nodes with at most this many records are not split.
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    /// Leaf search metric: l2, l1, cosine or minkowski:p.
    #[arg(long, default_value = "l2")]
    metric: Metric,
    /// Lattice distance on 2d/3d maps: euclid or manhattan.
    #[arg(long, default_value = "euclid")]
    grid_metric: GridMetric,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    alpha0: Option<f64>,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, env = "SOMTREE_SEED", default_value_t = 0)]
    seed: u64,
}

impl TreeArgs {
    fn config(&self) -> BuildConfig {
        let branching = self.branching.with_grid_metric(self.grid_metric);
        let mut som_params = SomParams::for_topology(&branching);
        som_params.seed = self.seed;
        if let Some(e) = self.epochs {
            som_params.epochs = e;
        }
        if let Some(a) = self.alpha0 {
            som_params.alpha0 = a;
        }
        if let Some(s) = self.sigma0 {
            som_params.sigma0 = s;
        }
        BuildConfig {
            branching,
            max_depth: self.depth,
            min_leaf_size: self.min_leaf,
            metric: self.metric,
            som_params,
        }
    }
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["input", "images"]))]
struct BuildArgs {
    /// CSV file with columns id,label,response,features...
    #[arg(long)]
    input: Option<PathBuf>,
    /// IDX image file (requires --labels).
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Args)]
#[command(group = clap::ArgGroup::new("queries").required(true).args(["vector", "input"]))]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    #[arg(long, default_value_t = 0.0)]
    min_similarity: f64,
    /// A single query, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    vector: Option<QueryVector>,
    /// CSV file of queries in the build format.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, requires_all = ["train_labels", "test_images", "test_labels"], conflicts_with_all = ["train_csv", "test_csv"])]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    #[arg(long, requires = "test_csv")]
    train_csv: Option<PathBuf>,
    #[arg(long)]
    test_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Evaluate on a seeded random subset of this many test records.
    #[arg(long)]
    sample: Option<usize>,
    /// Threads for an extra exhaustive pass, reported separately.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Args)]
struct TranslateArgs {
    /// Source-language sentences, one per line.
    #[arg(long, requires = "target", conflicts_with = "index")]
    source: Option<PathBuf>,
    /// Target-language sentences aligned with --source.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Saved translator (its dictionary is read from <index>.dict.csv).
    #[arg(long, required_unless_present = "source")]
    index: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    min_similarity: f64,
    #[arg(long, default_value_t = 3)]
    n_alternatives: usize,
    #[arg(long, default_value_t = 1)]
    beam: usize,
    /// Learn a pair before reading input: "source|||target". Repeatable.
    #[arg(long, value_parser = parse_pair)]
    add_pair: Vec<(String, String)>,
    /// Similarity an added pair needs to join an existing leaf.
    #[arg(long, default_value_t = 0.5)]
    tau_new: f64,
    /// Write the translator (after any added pairs) to this path.
    #[arg(long)]
    save: Option<PathBuf>,
    #[command(flatten)]
    tree: TreeArgs,
}

#[derive(Clone)]
struct QueryVector(Vec<f64>);

impl std::str::FromStr for QueryVector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        s.split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|e| format!("bad value {v:?}: {e}")))
            .collect::<Result<_, _>>()
            .map(QueryVector)
    }
}

fn parse_pair(s: &str) -> Result<(String, String), String> {
    s.split_once("|||")
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| "expected \"source|||target\"".to_string())
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_) => 2,
            Error::InvalidIndex(_) => 4,
            _ => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure {
            code: 3,
            message: e.to_string(),
        }
    }
}

/// Reading user files: anything wrong with them is a data error.
fn data_error(path: &Path) -> impl FnOnce(Error) -> Failure + '_ {
    move |e| Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

fn read_records(path: &Path) -> Result<Vec<Record>, Failure> {
    let file = File::open(path).map_err(|e| data_error(path)(e.into()))?;
    read_csv(BufReader::new(file)).map_err(data_error(path))
}

fn read_idx(images: &Path, labels: &Path) -> Result<Vec<Record>, Failure> {
    load_idx(images, labels).map_err(data_error(images))
}

fn write_json_line<T: Serialize>(out: &mut impl Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Failure {
        code: 4,
        message: e.to_string(),
    })?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct BuildSummary {
    out: String,
    records: usize,
    dim: usize,
    nodes: usize,
    leaves: usize,
    max_depth: usize,
    build_secs: f64,
}

fn cmd_build(args: BuildArgs) -> Result<(), Failure> {
    let records = match (&args.input, &args.images, &args.labels) {
        (Some(csv), _, _) => read_records(csv)?,
        (None, Some(images), Some(labels)) => read_idx(images, labels)?,
        _ => unreachable!("clap enforces an input source"),
    };
    let config = args.tree.config();
    config.validate()?;
    let start = Instant::now();
    let index = SomTreeIndex::build(records, config)?;
    let build_secs = start.elapsed().as_secs_f64();
    save_index(&index, &args.out)?;
    let summary = BuildSummary {
        out: args.out.display().to_string(),
        records: index.len(),
        dim: index.dim(),
        nodes: index.nodes().len(),
        leaves: index.leaf_count(),
        max_depth: index.nodes().iter().map(|n| n.depth).max().unwrap_or(0),
        build_secs,
    };
    write_json_line(&mut io::stdout().lock(), &summary)
}

#[derive(Serialize)]
struct QueryLine {
    query: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    query_id: Option<u64>,
    neighbors: Vec<Neighbor>,
    rejected: bool,
    label: Option<String>,
    response: Option<f64>,
    visited_leaves: usize,
    distance_evaluations: usize,
}

fn predicted_label(index: &SomTreeIndex, result: &SearchResult) -> Result<Option<String>, Failure> {
    match index.classify(result) {
        Ok(Prediction::Value(l)) => Ok(Some(l)),
        Ok(Prediction::Rejected) | Err(Error::UnlabeledData(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn predicted_response(index: &SomTreeIndex, result: &SearchResult) -> Result<Option<f64>, Failure> {
    match index.regress(result) {
        Ok(Prediction::Value(r)) => Ok(Some(r)),
        Ok(Prediction::Rejected) | Err(Error::MissingResponse(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn cmd_query(args: QueryArgs) -> Result<(), Failure> {
    let params = QueryParams::new(args.k, args.beam).with_min_similarity(args.min_similarity);
    params.validate()?;
    let index = load_index(&args.index).map_err(data_error(&args.index))?;
    let (queries, ids): (Vec<Vec<f64>>, Vec<Option<u64>>) = match (args.vector, &args.input) {
        (Some(QueryVector(v)), _) => (vec![v], vec![None]),
        (None, Some(path)) => read_records(path)?
            .into_iter()
            .map(|r| (r.features, Some(r.id)))
            .unzip(),
        _ => unreachable!("clap enforces a query source"),
    };
    let results = index
        .search_batch(Exec::default(), &queries, &params)
        .into_iter()
        .collect::<Result<Vec<_>, Error>>()?;
    let mut out = io::BufWriter::new(io::stdout().lock());
    for (i, (result, query_id)) in results.into_iter().zip(ids).enumerate() {
        let line = QueryLine {
            query: i,
            query_id,
            label: predicted_label(&index, &result)?,
            response: predicted_response(&index, &result)?,
            rejected: result.rejected,
            visited_leaves: result.visited_leaves,
            distance_evaluations: result.distance_evaluations,
            neighbors: result.neighbors,
        };
        write_json_line(&mut out, &line)?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let (dataset, train, test) = match (&args.train_images, &args.train_csv) {
        (Some(images), _) => {
            let train = read_idx(images, args.train_labels.as_deref().expect("required by clap"))?;
            let test = read_idx(
                args.test_images.as_deref().expect("required by clap"),
                args.test_labels.as_deref().expect("required by clap"),
            )?;
            (dataset_name(images), train, test)
        }
        (None, Some(csv)) => {
            let test = read_records(args.test_csv.as_deref().expect("required by clap"))?;
            (dataset_name(csv), read_records(csv)?, test)
        }
        _ => {
            return Err(Failure {
                code: 2,
                message: "give --train-images/--train-labels/--test-images/--test-labels or --train-csv/--test-csv"
                    .into(),
            })
        }
    };
    let test = match args.sample {
        Some(n) => seeded_sample(&test, n, args.tree.seed),
        None => test,
    };
    let config = args.tree.config();
    config.validate()?;
    let start = Instant::now();
    let index = SomTreeIndex::build(train, config)?;
    eprintln!(
        "built {} leaves over {} records in {:.1} s",
        index.leaf_count(),
        index.len(),
        start.elapsed().as_secs_f64()
    );
    let opts = BenchOptions {
        k: args.k,
        beam: args.beam,
        threads: args.threads,
    };
    let report = run_bench(&dataset, &index, &test, opts)?;
    eprintln!("{report}");
    write_json_line(&mut io::stdout().lock(), &report)
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_translate(args: TranslateArgs) -> Result<(), Failure> {
    let mut translator = match (&args.source, &args.target, &args.index) {
        (Some(source), Some(target), _) => {
            let corpus = load_parallel_corpus(source, target).map_err(data_error(source))?;
            let config = args.tree.config();
            config.validate()?;
            Translator::build(&corpus, config)?
        }
        (None, _, Some(path)) => Translator::load(path).map_err(data_error(path))?,
        _ => unreachable!("clap enforces a corpus or an index"),
    };
    for (source, target) in &args.add_pair {
        translator.add_pair(source, target, args.tau_new)?;
    }
    if let Some(path) = &args.save {
        translator.save(path)?;
    }

    let mut out = io::stdout().lock();
    for line in io::stdin().lock().lines() {
        let line = line?;
        let t = translator.translate(&line, args.n_alternatives, args.min_similarity, args.beam)?;
        if t.rejected {
            writeln!(out, "<REJECTED>")?;
        } else {
            for alt in &t.alternatives {
                writeln!(out, "{:.6}\t{}", alt.similarity, alt.target)?;
            }
        }
        writeln!(out)?;
        out.flush()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Build(a) => cmd_build(a),
        Command::Query(a) => cmd_query(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Translate(a) => cmd_translate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
