#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somtree::Record;

pub fn random_records(n: usize, dim: usize, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n as u64)
        .map(|i| Record::new(i, (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect()
}

pub fn random_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.gen_range(-1.2..1.2)).collect())
        .collect()
}

/// 20 points around (0, 0) labelled "a" and 20 around (100, 100) labelled "b".
pub fn two_clusters(spread: f64, seed: u64) -> Vec<Record> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..40)
        .map(|i| {
            let c = if i < 20 { 0.0 } else { 100.0 };
            let f = vec![c + rng.gen_range(-spread..spread), c + rng.gen_range(-spread..spread)];
            Record::new(i, f).with_label(if i < 20 { "a" } else { "b" })
        })
        .collect()
}

/// Straight left-to-right quadratic scan, independent of the library's
/// kernels: returns (id, distance) sorted by distance then id.
pub fn oracle_knn(query: &[f64], records: &[Record], k: usize) -> Vec<(u64, f64)> {
    let mut all: Vec<(u64, f64)> = records
        .iter()
        .map(|r| {
            let mut s = 0.0;
            for (a, b) in query.iter().zip(&r.features) {
                s += (a - b).powi(2);
            }
            (r.id, s.sqrt())
        })
        .collect();
    all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}
