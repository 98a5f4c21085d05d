//! Exhaustive k-nearest-neighbor scan. Serves as the baseline the tree is
//! measured against and as the final step of every tree search.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::metric::{similarity_of, Metric};
use crate::par::{self, Exec};
use crate::record::{check_query, Neighbor, Record};

const SCAN_CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Candidate {
    pub key: f64,
    pub id: u64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key).then_with(|| self.id.cmp(&other.id))
    }
}

/// Bounded selection of the `k` smallest candidates under (key, id).
pub(crate) struct TopK {
    k: usize,
    heap: BinaryHeap<Candidate>,
}

impl TopK {
    pub fn new(k: usize) -> Self {
        TopK {
            k,
            heap: BinaryHeap::with_capacity(k + 1),
        }
    }

    #[inline]
    pub fn push(&mut self, c: Candidate) {
        if self.heap.len() < self.k {
            self.heap.push(c);
        } else if let Some(top) = self.heap.peek() {
            if c < *top {
                self.heap.pop();
                self.heap.push(c);
            }
        }
    }

    pub fn merge(mut self, other: TopK) -> TopK {
        for c in other.heap {
            self.push(c);
        }
        self
    }

    pub fn into_neighbors(self, metric: Metric) -> Vec<Neighbor> {
        self.heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| {
                let distance = metric.key_to_distance(c.key);
                Neighbor {
                    record_id: c.id,
                    distance,
                    similarity: similarity_of(distance),
                }
            })
            .collect()
    }
}

/// Scans `candidates` and keeps the `k` nearest. Returns the selection and the
/// number of distance evaluations performed.
pub(crate) fn scan<'a, I>(query: &[f64], candidates: I, k: usize, metric: Metric) -> Result<(TopK, usize)>
where
    I: IntoIterator<Item = &'a Record>,
{
    let mut top = TopK::new(k);
    let mut evals = 0;
    for r in candidates {
        let key = metric.rank_key(query, &r.features)?;
        evals += 1;
        top.push(Candidate { key, id: r.id });
    }
    Ok((top, evals))
}

/// Exact k-NN over `records`, sorted by (distance, id).
pub fn brute_force_knn(query: &[f64], records: &[Record], k: usize, metric: Metric) -> Result<Vec<Neighbor>> {
    brute_force_knn_with(Exec::default(), query, records, k, metric)
}

/// [`brute_force_knn`] with an explicit execution strategy. The output is the
/// same for every strategy.
pub fn brute_force_knn_with(
    exec: Exec,
    query: &[f64],
    records: &[Record],
    k: usize,
    metric: Metric,
) -> Result<Vec<Neighbor>> {
    let first = records.first().ok_or(Error::EmptyDataset)?;
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    metric.validate()?;
    check_query(query, first.dim())?;
    if let Some(bad) = records.iter().find(|r| r.dim() != query.len()) {
        return Err(Error::DimensionMismatch {
            expected: query.len(),
            found: bad.dim(),
        });
    }
    let partials = par::map_chunks(exec, records, SCAN_CHUNK, |chunk| {
        scan(query, chunk, k, metric).map(|(top, _)| top)
    });
    let mut merged = TopK::new(k);
    for part in partials {
        merged = merged.merge(part?);
    }
    Ok(merged.into_neighbors(metric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearer_point_wins() {
        let recs = [Record::new(0, vec![0.0, 0.0]), Record::new(1, vec![10.0, 10.0])];
        let nn = brute_force_knn(&[1.0, 1.0], &recs, 1, Metric::L2).unwrap();
        assert_eq!(nn.len(), 1);
        assert_eq!(nn[0].record_id, 0);
        assert_eq!(nn[0].distance, 2f64.sqrt());
    }

    #[test]
    fn self_match_has_similarity_one() {
        let recs = [Record::new(4, vec![1.5, -2.0]), Record::new(7, vec![3.0, 3.0])];
        let nn = brute_force_knn(&[3.0, 3.0], &recs, 1, Metric::L1).unwrap();
        assert_eq!(nn[0].record_id, 7);
        assert_eq!(nn[0].distance, 0.0);
        assert_eq!(nn[0].similarity, 1.0);
    }

    #[test]
    fn ties_break_by_id_and_k_is_capped() {
        let recs = [
            Record::new(9, vec![1.0]),
            Record::new(2, vec![-1.0]),
            Record::new(5, vec![1.0]),
        ];
        let nn = brute_force_knn(&[0.0], &recs, 10, Metric::L2).unwrap();
        let ids: Vec<u64> = nn.iter().map(|n| n.record_id).collect();
        assert_eq!(ids, vec![2, 5, 9]);
    }

    #[test]
    fn error_paths() {
        assert!(matches!(
            brute_force_knn(&[0.0], &[], 1, Metric::L2),
            Err(Error::EmptyDataset)
        ));
        let recs = [Record::new(0, vec![0.0, 1.0])];
        assert!(matches!(
            brute_force_knn(&[0.0], &recs, 1, Metric::L2),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(brute_force_knn(&[0.0, 1.0], &recs, 0, Metric::L2).is_err());
        assert!(matches!(
            brute_force_knn(&[0.0, 0.0], &recs, 1, Metric::Cosine),
            Err(Error::ZeroVector)
        ));
    }
}
