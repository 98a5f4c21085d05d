use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::SomTreeIndex;

/// Per-leaf homogeneity figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub node_id: u64,
    pub size: usize,
    /// Share of members carrying the most common label (unlabeled counts as
    /// one more label value).
    pub label_purity: f64,
    /// Population standard deviation of member responses, if any have one.
    pub response_stddev: Option<f64>,
    /// Mean pairwise distance between members; zero for singletons.
    pub intra_leaf_mean_distance: f64,
}

/// Leaves ordered from least to most pure, larger leaves first among equals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeafReport {
    pub leaves: Vec<LeafStats>,
}

impl LeafReport {
    pub fn mean_purity(&self) -> f64 {
        if self.leaves.is_empty() {
            return 1.0;
        }
        self.leaves.iter().map(|l| l.label_purity).sum::<f64>() / self.leaves.len() as f64
    }

    /// Leaves whose members disagree on the label.
    pub fn mixed(&self) -> impl Iterator<Item = &LeafStats> {
        self.leaves.iter().filter(|l| l.label_purity < 1.0)
    }
}

impl SomTreeIndex {
    pub fn leaf_consistency_report(&self) -> Result<LeafReport> {
        self.validate()?;
        let metric = self.metric();
        let mut leaves = Vec::new();
        for leaf in self.leaves() {
            let members: Vec<_> = leaf.members.iter().map(|&m| self.record_ref(m)).collect();
            let size = members.len();

            let mut counts: HashMap<Option<&str>, usize> = HashMap::new();
            for r in &members {
                *counts.entry(r.label.as_deref()).or_default() += 1;
            }
            let modal = counts.values().copied().max().unwrap_or(size);
            let label_purity = modal as f64 / size as f64;

            let responses: Vec<f64> = members.iter().filter_map(|r| r.response).collect();
            let response_stddev = (!responses.is_empty()).then(|| {
                let n = responses.len() as f64;
                let mean = responses.iter().sum::<f64>() / n;
                (responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt()
            });

            let mut total = 0.0;
            for i in 0..size {
                for j in i + 1..size {
                    total += metric.distance(&members[i].features, &members[j].features)?;
                }
            }
            let pairs = size * (size - 1) / 2;
            let intra_leaf_mean_distance = if pairs == 0 { 0.0 } else { total / pairs as f64 };

            leaves.push(LeafStats {
                node_id: leaf.id,
                size,
                label_purity,
                response_stddev,
                intra_leaf_mean_distance,
            });
        }
        leaves.sort_by(|a, b| {
            a.label_purity
                .total_cmp(&b.label_purity)
                .then(b.size.cmp(&a.size))
                .then(a.node_id.cmp(&b.node_id))
        });
        Ok(LeafReport { leaves })
    }
}

#[cfg(test)]
mod tests {
    use crate::index::{BuildConfig, SomTreeIndex};
    use crate::record::Record;
    use crate::som::SomTopology;

    #[test]
    fn modal_fraction_and_spread() {
        let config = BuildConfig {
            min_leaf_size: 10,
            ..BuildConfig::new(SomTopology::line(2))
        };
        let recs = vec![
            Record::new(0, vec![0.0, 0.0]).with_label("A").with_response(1.0),
            Record::new(1, vec![3.0, 4.0]).with_label("A").with_response(3.0),
            Record::new(2, vec![0.0, 4.0]).with_label("B"),
        ];
        let idx = SomTreeIndex::build(recs, config).unwrap();
        let report = idx.leaf_consistency_report().unwrap();
        assert_eq!(report.leaves.len(), 1);
        let leaf = &report.leaves[0];
        assert!((leaf.label_purity - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(leaf.response_stddev, Some(1.0));
        assert!((leaf.intra_leaf_mean_distance - (5.0 + 4.0 + 3.0) / 3.0).abs() < 1e-12);
        assert_eq!(report.mixed().count(), 1);
    }

    #[test]
    fn singleton_leaves_are_pure() {
        let recs: Vec<Record> = (0..30)
            .map(|i| Record::new(i, vec![i as f64 * 10.0, (i % 7) as f64]).with_label(format!("{}", i % 3)))
            .collect();
        let idx = SomTreeIndex::build(recs, BuildConfig::new(SomTopology::line(4))).unwrap();
        let report = idx.leaf_consistency_report().unwrap();
        for leaf in &report.leaves {
            if leaf.size == 1 {
                assert_eq!(leaf.label_purity, 1.0);
                assert_eq!(leaf.intra_leaf_mean_distance, 0.0);
            }
        }
        for pair in report.leaves.windows(2) {
            assert!(pair[0].label_purity <= pair[1].label_purity);
        }
    }
}
