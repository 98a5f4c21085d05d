//! Accuracy and speed comparison of tree search against the exhaustive scan.

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SomTreeIndex;
use crate::knn::brute_force_knn_with;
use crate::par::Exec;
use crate::query::QueryParams;
use crate::record::{Neighbor, Record};
use crate::som::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BenchOptions {
    pub k: usize,
    pub beam: usize,
    /// Worker threads for an additional, separately reported exhaustive pass.
    /// The headline exhaustive timing is always single-threaded.
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            k: 1,
            beam: 1,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub dataset: String,
    pub train_size: usize,
    pub test_size: usize,
    pub metric: String,
    pub branching: String,
    pub depth: usize,
    pub beam: usize,
    pub k: usize,
    pub leaves: usize,
    pub brute_errors: usize,
    pub tree_errors: usize,
    pub brute_error_rate: f64,
    pub tree_error_rate: f64,
    pub brute_total_secs: f64,
    pub tree_total_secs: f64,
    pub speedup: f64,
    pub recall_at_1: f64,
    pub mean_distance_evaluations: f64,
    pub brute_threads: usize,
    /// Exhaustive pass on `threads` workers, when more than one was requested.
    pub brute_parallel_secs: Option<f64>,
}

impl BenchReport {
    pub fn brute_mean_query_secs(&self) -> f64 {
        self.brute_total_secs / self.test_size as f64
    }

    pub fn tree_mean_query_secs(&self) -> f64 {
        self.tree_total_secs / self.test_size as f64
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "dataset {}  train {}  test {}  metric {}  branching {}  depth {}  beam {}  k {}  leaves {}",
            self.dataset,
            self.train_size,
            self.test_size,
            self.metric,
            self.branching,
            self.depth,
            self.beam,
            self.k,
            self.leaves
        )?;
        writeln!(
            f,
            "{:<12} {:>8} {:>10} {:>12} {:>14}",
            "method", "errors", "error %", "total s", "ms / query"
        )?;
        writeln!(
            f,
            "{:<12} {:>8} {:>10.2} {:>12.3} {:>14.4}",
            "exhaustive",
            self.brute_errors,
            100.0 * self.brute_error_rate,
            self.brute_total_secs,
            1e3 * self.brute_mean_query_secs()
        )?;
        writeln!(
            f,
            "{:<12} {:>8} {:>10.2} {:>12.3} {:>14.4}",
            "tree",
            self.tree_errors,
            100.0 * self.tree_error_rate,
            self.tree_total_secs,
            1e3 * self.tree_mean_query_secs()
        )?;
        write!(
            f,
            "speedup {:.1}x  recall@1 {:.4}  mean distance evaluations {:.1}",
            self.speedup, self.recall_at_1, self.mean_distance_evaluations
        )?;
        if let Some(p) = self.brute_parallel_secs {
            write!(f, "\nexhaustive on {} threads: {:.3} s", self.brute_threads, p)?;
        }
        Ok(())
    }
}

/// `n` items drawn without replacement by a seeded generator, kept in their
/// original order. Returns everything when `n >= items.len()`.
pub fn seeded_sample<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= items.len() {
        return items.to_vec();
    }
    let mut rng = rng_from_seed(seed);
    let mut picked = rand::seq::index::sample(&mut rng, items.len(), n).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn truth(r: &Record) -> Result<&str> {
    r.label.as_deref().ok_or(Error::UnlabeledData(r.id))
}

/// Classifies every test record with the exhaustive scan and with the tree,
/// timing only the query loops.
pub fn run_bench(dataset: &str, index: &SomTreeIndex, test: &[Record], opts: BenchOptions) -> Result<BenchReport> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let params = QueryParams::new(opts.k, opts.beam);
    params.validate()?;
    let metric = index.metric();
    let train = index.records();

    let (brute, brute_time) = timed(|| {
        test.iter()
            .map(|q| brute_force_knn_with(Exec::Sequential, &q.features, train, opts.k, metric))
            .collect::<Result<Vec<Vec<Neighbor>>>>()
    });
    let brute = brute?;

    let (tree, tree_time) = timed(|| {
        test.iter()
            .map(|q| index.search(&q.features, &params))
            .collect::<Result<Vec<_>>>()
    });
    let tree = tree?;

    let brute_parallel_secs = if opts.threads > 1 {
        Some(parallel_brute_secs(index, test, opts)?)
    } else {
        None
    };

    let mut brute_errors = 0;
    let mut tree_errors = 0;
    let mut recall_hits = 0;
    let mut evals = 0usize;
    for ((q, b), t) in test.iter().zip(&brute).zip(&tree) {
        let expected = truth(q)?;
        if index.vote(b)? != expected {
            brute_errors += 1;
        }
        if index.vote(&t.neighbors)? != expected {
            tree_errors += 1;
        }
        if b.first().map(|n| n.record_id) == t.best().map(|n| n.record_id) {
            recall_hits += 1;
        }
        evals += t.distance_evaluations;
    }
    let n = test.len() as f64;
    let brute_total_secs = brute_time.as_secs_f64();
    let tree_total_secs = tree_time.as_secs_f64();
    Ok(BenchReport {
        dataset: dataset.to_string(),
        train_size: train.len(),
        test_size: test.len(),
        metric: metric.to_string(),
        branching: index.config().branching.to_string(),
        depth: index.config().max_depth,
        beam: opts.beam,
        k: opts.k,
        leaves: index.leaf_count(),
        brute_errors,
        tree_errors,
        brute_error_rate: brute_errors as f64 / n,
        tree_error_rate: tree_errors as f64 / n,
        brute_total_secs,
        tree_total_secs,
        speedup: brute_total_secs / tree_total_secs,
        recall_at_1: recall_hits as f64 / n,
        mean_distance_evaluations: evals as f64 / n,
        brute_threads: opts.threads,
        brute_parallel_secs,
    })
}

#[cfg(feature = "parallel")]
fn parallel_brute_secs(index: &SomTreeIndex, test: &[Record], opts: BenchOptions) -> Result<f64> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot start thread pool: {e}")))?;
    let metric = index.metric();
    let (out, t) = timed(|| {
        pool.install(|| {
            test.par_iter()
                .map(|q| brute_force_knn_with(Exec::Sequential, &q.features, index.records(), opts.k, metric))
                .collect::<Result<Vec<_>>>()
        })
    });
    out?;
    Ok(t.as_secs_f64())
}

#[cfg(not(feature = "parallel"))]
fn parallel_brute_secs(_: &SomTreeIndex, _: &[Record], _: BenchOptions) -> Result<f64> {
    Err(Error::InvalidParameter(
        "multi-threaded timing needs the `parallel` feature".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::BuildConfig;
    use crate::som::SomTopology;

    #[test]
    fn exhaustive_beam_matches_brute_force() {
        let train: Vec<Record> = (0..200)
            .map(|i| {
                let x = (i as f64 * 0.37).sin() * 10.0;
                let y = (i as f64 * 1.3).cos() * 10.0;
                Record::new(i, vec![x, y]).with_label(if x > y { "hi" } else { "lo" })
            })
            .collect();
        let test: Vec<Record> = (0..40)
            .map(|i| {
                let x = (i as f64 * 0.91).cos() * 9.0;
                let y = (i as f64 * 0.53).sin() * 9.0;
                Record::new(1000 + i, vec![x, y]).with_label(if x > y { "hi" } else { "lo" })
            })
            .collect();
        let config = BuildConfig::new(SomTopology::line(4));
        let index = SomTreeIndex::build(train, config).unwrap();
        let opts = BenchOptions {
            beam: 4,
            ..BenchOptions::default()
        };
        let r = run_bench("toy", &index, &test, opts).unwrap();
        assert_eq!(r.recall_at_1, 1.0);
        assert_eq!(r.tree_errors, r.brute_errors);
        assert_eq!(r.brute_error_rate * 40.0, r.brute_errors as f64);
        assert!((r.speedup - r.brute_total_secs / r.tree_total_secs).abs() < 1e-12);
        assert!(r.to_string().contains("recall@1 1.0000"));
    }
}
