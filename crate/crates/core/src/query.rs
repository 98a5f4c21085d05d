//! Tree search, k-NN prediction and novelty rejection.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::SomTreeIndex;
use crate::knn::{self, Candidate, TopK};
use crate::metric::squared_l2;
use crate::par::{self, Exec};
use crate::record::{check_query, Neighbor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryParams {
    pub k: usize,
    /// Children kept per expanded node at every level.
    pub beam: usize,
    /// Results whose best similarity falls below this are rejected.
    pub min_similarity: f64,
}

impl Default for QueryParams {
    fn default() -> Self {
        QueryParams {
            k: 1,
            beam: 1,
            min_similarity: 0.0,
        }
    }
}

impl QueryParams {
    pub fn new(k: usize, beam: usize) -> Self {
        QueryParams {
            k,
            beam,
            ..Self::default()
        }
    }

    pub fn with_min_similarity(mut self, min_similarity: f64) -> Self {
        self.min_similarity = min_similarity;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.beam == 0 {
            return Err(Error::InvalidParameter("k and beam must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.min_similarity) {
            return Err(Error::InvalidParameter(format!(
                "min_similarity must lie in [0, 1], got {}",
                self.min_similarity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    /// Ranked by (distance, id). Kept even when the result is rejected.
    pub neighbors: Vec<Neighbor>,
    pub rejected: bool,
    pub visited_leaves: usize,
    /// Centroid and record distance computations combined.
    pub distance_evaluations: usize,
}

impl SearchResult {
    pub fn best(&self) -> Option<&Neighbor> {
        self.neighbors.first()
    }
}

/// A prediction, or a refusal because no stored object was similar enough.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prediction<T> {
    Value(T),
    Rejected,
}

impl<T> Prediction<T> {
    pub fn value(self) -> Option<T> {
        match self {
            Prediction::Value(v) => Some(v),
            Prediction::Rejected => None,
        }
    }
}

impl SomTreeIndex {
    /// Leaves reached by a level-synchronous beam descent.
    ///
    /// Every node on the frontier is expanded into its `beam` children
    /// closest to `q` (L2 to centroids, ties by node id). Leaves on the
    /// frontier are collected in discovery order.
    pub fn descend(&self, q: &[f64], beam: usize) -> Result<Vec<u64>> {
        check_query(q, self.dim())?;
        if beam == 0 {
            return Err(Error::InvalidParameter("beam must be at least 1".into()));
        }
        Ok(self.descend_counted(q, beam).0)
    }

    fn descend_counted(&self, q: &[f64], beam: usize) -> (Vec<u64>, usize) {
        let mut leaves = Vec::new();
        let mut evals = 0;
        let mut frontier = vec![self.root()];
        let mut ranked = Vec::new();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for id in frontier {
                let node = self.node_ref(id);
                if node.is_leaf() {
                    leaves.push(id);
                    continue;
                }
                ranked.clear();
                ranked.extend(node.children.iter().map(|&c| Candidate {
                    key: squared_l2(q, &self.node_ref(c).centroid),
                    id: c,
                }));
                evals += ranked.len();
                if ranked.len() > beam {
                    ranked.select_nth_unstable(beam - 1);
                    ranked.truncate(beam);
                }
                ranked.sort_unstable();
                next.extend(ranked.iter().map(|c| c.id));
            }
            frontier = next;
        }
        (leaves, evals)
    }

    /// k-NN search: beam descent, then an exact scan of the reached leaves
    /// under the index metric.
    pub fn search(&self, q: &[f64], params: &QueryParams) -> Result<SearchResult> {
        params.validate()?;
        if self.is_empty() {
            return Err(Error::EmptyIndex);
        }
        check_query(q, self.dim())?;
        let (leaves, centroid_evals) = self.descend_counted(q, params.beam);
        let metric = self.metric();
        let mut top = TopK::new(params.k);
        let mut evals = centroid_evals;
        for &leaf in &leaves {
            let members = self.node_ref(leaf).members.iter().map(|&m| self.record_ref(m));
            let (part, n) = knn::scan(q, members, params.k, metric)?;
            top = top.merge(part);
            evals += n;
        }
        let neighbors = top.into_neighbors(metric);
        let rejected = neighbors
            .first()
            .is_none_or(|best| best.similarity < params.min_similarity);
        Ok(SearchResult {
            neighbors,
            rejected,
            visited_leaves: leaves.len(),
            distance_evaluations: evals,
        })
    }

    /// Runs [`SomTreeIndex::search`] for every query, preserving input order.
    pub fn search_batch<Q>(&self, exec: Exec, queries: &[Q], params: &QueryParams) -> Vec<Result<SearchResult>>
    where
        Q: AsRef<[f64]> + Sync,
    {
        par::map_slice(exec, queries, |q| self.search(q.as_ref(), params))
    }

    /// Whether `q` is too dissimilar from everything stored.
    pub fn detect_novelty(&self, q: &[f64], params: &QueryParams) -> Result<bool> {
        Ok(self.search(q, params)?.rejected)
    }

    /// Weighted majority label of the result's neighbors. Ties go to the
    /// tied label of the nearest neighbor.
    pub fn classify(&self, result: &SearchResult) -> Result<Prediction<String>> {
        if result.rejected {
            return Ok(Prediction::Rejected);
        }
        self.vote(&result.neighbors).map(Prediction::Value)
    }

    pub(crate) fn vote(&self, neighbors: &[Neighbor]) -> Result<String> {
        let mut votes: HashMap<&str, u64> = HashMap::new();
        let mut labels = Vec::with_capacity(neighbors.len());
        for n in neighbors {
            let record = self
                .record(n.record_id)
                .ok_or_else(|| Error::InvalidIndex(format!("neighbor {} is not stored in this index", n.record_id)))?;
            let label = record.label.as_deref().ok_or(Error::UnlabeledData(n.record_id))?;
            *votes.entry(label).or_default() += record.weight as u64;
            labels.push(label);
        }
        let top = votes.values().copied().max().ok_or(Error::EmptyIndex)?;
        let winner = labels
            .into_iter()
            .find(|l| votes[l] == top)
            .expect("some label has the top vote");
        Ok(winner.to_string())
    }

    /// Similarity- and weight-averaged response of the result's neighbors.
    pub fn regress(&self, result: &SearchResult) -> Result<Prediction<f64>> {
        if result.rejected {
            return Ok(Prediction::Rejected);
        }
        if result.neighbors.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for n in &result.neighbors {
            let record = self
                .record(n.record_id)
                .ok_or_else(|| Error::InvalidIndex(format!("neighbor {} is not stored in this index", n.record_id)))?;
            let r = record.response.ok_or(Error::MissingResponse(n.record_id))?;
            let w = record.weight as f64 * n.similarity;
            num += w * r;
            den += w;
        }
        Ok(Prediction::Value(num / den))
    }
}
