//! Hierarchical nearest-neighbor search over trees of self-organizing maps.
//!
//! A [`SomTreeIndex`] recursively clusters a dataset with small Kohonen maps.
//! Queries descend the tree by centroid distance and finish with an exact
//! scan of the reached leaves, so results can be checked against
//! [`brute_force_knn`] at any beam width.

pub mod bench;
pub mod error;
pub mod index;
pub mod ingest;
pub mod knn;
pub mod metric;
pub mod par;
pub mod query;
pub mod record;
pub mod som;
pub mod translate;

pub use bench::{run_bench, seeded_sample, BenchOptions, BenchReport};
pub use error::{Error, Result};
pub use index::{load_index, save_index, BuildConfig, InsertOutcome, LeafReport, LeafStats, SomTreeIndex, TreeNode};
pub use knn::{brute_force_knn, brute_force_knn_with};
pub use metric::{similarity, similarity_to_distance, Metric};
pub use par::Exec;
pub use query::{Prediction, QueryParams, SearchResult};
pub use record::{read_csv, validate_records, write_csv, Neighbor, Record};
pub use som::{
    init_som, neighborhood, train_som, GridMetric, Kernel, MapRank, SomMap, SomParams, SomTopology, GENERATOR_ID,
};
pub use translate::{Alternative, Translation, Translator};
