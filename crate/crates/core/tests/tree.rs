mod common;

use std::collections::{BTreeMap, HashMap, HashSet};

use common::{random_records, random_vectors};
use proptest::prelude::*;
use somtree::{
    brute_force_knn, BuildConfig, Exec, InsertOutcome, MapRank, Metric, QueryParams, Record, SomTopology, SomTreeIndex,
};

fn config(topo: SomTopology, metric: Metric, seed: u64) -> BuildConfig {
    let mut c = BuildConfig::new(topo);
    c.metric = metric;
    c.som_params.seed = seed;
    c.som_params.epochs = 5;
    c
}

fn topologies() -> impl Strategy<Value = SomTopology> {
    prop_oneof![
        (2usize..5).prop_map(SomTopology::line),
        Just(SomTopology::new(MapRank::Two, 2).unwrap()),
    ]
}

fn metrics() -> impl Strategy<Value = Metric> {
    prop_oneof![Just(Metric::L2), Just(Metric::L1), Just(Metric::Minkowski(3.0))]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exhaustive_beam_equals_brute_force(
        seed in 0u64..10_000,
        n in 1usize..120,
        k in 1usize..6,
        topo in topologies(),
        metric in metrics(),
    ) {
        let records = random_records(n, 4, seed);
        let index = SomTreeIndex::build(records.clone(), config(topo, metric, seed)).unwrap();
        let params = QueryParams::new(k, topo.node_count());
        for q in random_vectors(10, 4, seed ^ 0xABCD) {
            let got = index.search(&q, &params).unwrap().neighbors;
            let want = brute_force_knn(&q, &records, k, metric).unwrap();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn wider_beams_reach_a_superset_of_leaves(seed in 0u64..10_000, n in 2usize..150, topo in topologies()) {
        let records = random_records(n, 3, seed);
        let index = SomTreeIndex::build(records, config(topo, Metric::L2, seed)).unwrap();
        for q in random_vectors(5, 3, seed + 1) {
            let mut previous: HashSet<u64> = HashSet::new();
            for beam in 1..=topo.node_count() {
                let leaves: HashSet<u64> = index.descend(&q, beam).unwrap().into_iter().collect();
                prop_assert!(previous.is_subset(&leaves));
                previous = leaves;
            }
            prop_assert_eq!(previous.len(), index.leaf_count());
        }
    }

    #[test]
    fn leaves_partition_the_records(seed in 0u64..10_000, n in 1usize..200, topo in topologies(), min_leaf in 1usize..8) {
        let records = random_records(n, 3, seed);
        let mut c = config(topo, Metric::L2, seed);
        c.min_leaf_size = min_leaf;
        let index = SomTreeIndex::build(records, c).unwrap();
        let mut seen: Vec<u64> = index.leaves().flat_map(|l| l.members.iter().copied()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n as u64).collect::<Vec<_>>());
        for node in index.nodes() {
            prop_assert!(node.children.len() <= topo.node_count());
            if !node.is_leaf() {
                let sum: u64 = node.children.iter().map(|&c| index.node(c).unwrap().member_count).sum();
                prop_assert_eq!(sum, node.member_count);
            }
        }
    }

    #[test]
    fn save_load_is_lossless(seed in 0u64..10_000, n in 1usize..80) {
        let records: Vec<Record> = random_records(n, 3, seed)
            .into_iter()
            .enumerate()
            .map(|(i, r)| match i % 3 {
                0 => r.with_label(format!("c{}", i % 5)),
                1 => r.with_response(i as f64 * 0.5).with_payload(vec![i as u8; i % 7]),
                _ => r,
            })
            .collect();
        let index = SomTreeIndex::build(records, config(SomTopology::line(3), Metric::Cosine, seed)).unwrap();
        let bytes = index.to_bytes().unwrap();
        let back = SomTreeIndex::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        prop_assert_eq!(back.records(), index.records());
        let params = QueryParams::new(3, 2);
        for q in random_vectors(5, 3, seed + 7) {
            prop_assert_eq!(back.search(&q, &params).unwrap(), index.search(&q, &params).unwrap());
        }
    }
}

#[test]
fn builds_are_reproducible_across_execution_strategies() {
    let records = random_records(2000, 6, 1);
    let c = BuildConfig::new(SomTopology::new(MapRank::Two, 3).unwrap());
    let a = SomTreeIndex::build_with(Exec::Sequential, records.clone(), c).unwrap();
    let b = SomTreeIndex::build_with(Exec::Parallel, records.clone(), c).unwrap();
    let c2 = SomTreeIndex::build(records, c).unwrap();
    assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
    assert_eq!(a.to_bytes().unwrap(), c2.to_bytes().unwrap());

    let queries = random_vectors(50, 6, 2);
    let params = QueryParams::new(4, 2);
    let seq: Vec<_> = a.search_batch(Exec::Sequential, &queries, &params);
    let par: Vec<_> = a.search_batch(Exec::Parallel, &queries, &params);
    assert_eq!(seq.len(), 50);
    for ((s, p), q) in seq.into_iter().zip(par).zip(&queries) {
        let s = s.unwrap();
        assert_eq!(s, p.unwrap());
        assert_eq!(s, a.search(q, &params).unwrap());
    }
}

#[test]
fn inserted_records_are_found_immediately() {
    let records = random_records(300, 5, 3);
    let mut index = SomTreeIndex::build(records, BuildConfig::new(SomTopology::line(4))).unwrap();
    let params = QueryParams::new(1, 1);
    let mut new_leaves = 0;
    for (i, f) in random_vectors(60, 5, 4).into_iter().enumerate() {
        let f: Vec<f64> = f.iter().map(|x| x * if i % 3 == 0 { 6.0 } else { 1.0 }).collect();
        let id = 10_000 + i as u64;
        if let InsertOutcome::NewLeaf(_) = index.insert(Record::new(id, f.clone()), 0.6).unwrap() {
            new_leaves += 1;
        }
        index.validate().unwrap();
        let best = index.search(&f, &params).unwrap().neighbors[0];
        assert_eq!((best.record_id, best.distance), (id, 0.0));
    }
    assert!(new_leaves > 0);
    assert_eq!(index.len(), 360);
    assert!(index.insert(Record::new(10_000, vec![0.0; 5]), 0.6).is_err());
}

/// Expected generalization computed with a union-find over each leaf.
fn union_find_groups(index: &SomTreeIndex, epsilon: f64, tol: f64) -> BTreeMap<u64, (u32, usize)> {
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let mut out = BTreeMap::new();
    for leaf in index.leaves() {
        let members: Vec<&Record> = leaf.members.iter().map(|&m| index.record(m).unwrap()).collect();
        let mut parent: Vec<usize> = (0..members.len()).collect();
        for i in 0..members.len() {
            for j in i + 1..members.len() {
                let (a, b) = (members[i], members[j]);
                let responses_close = match (a.response, b.response) {
                    (None, None) => true,
                    (Some(x), Some(y)) => (x - y).abs() <= tol,
                    _ => false,
                };
                let near = index.metric().distance(&a.features, &b.features).unwrap() <= epsilon;
                if a.label == b.label && responses_close && near {
                    let (ra, rb) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ra] = rb;
                }
            }
        }
        let mut groups: HashMap<usize, Vec<&Record>> = HashMap::new();
        for (i, &m) in members.iter().enumerate() {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(m);
        }
        for g in groups.values() {
            let id = g.iter().map(|r| r.id).min().unwrap();
            out.insert(id, (g.iter().map(|r| r.weight).sum(), g.len()));
        }
    }
    out
}

#[test]
fn generalization_merges_exactly_the_linked_groups() {
    // Coarse lattice points so that many members coincide or sit within epsilon.
    let records: Vec<Record> = random_records(400, 2, 5)
        .into_iter()
        .map(|mut r| {
            r.features.iter_mut().for_each(|x| *x = (*x * 4.0).round() / 4.0);
            let label = if r.id % 3 == 0 { "odd" } else { "even" };
            let response = (r.id % 4) as f64 * 0.1;
            r.with_label(label).with_response(response)
        })
        .collect();
    let mut config = BuildConfig::new(SomTopology::line(3));
    config.max_depth = 2;
    for (epsilon, tol) in [(0.0, 0.0), (0.3, 0.15), (0.6, 1.0)] {
        let mut index = SomTreeIndex::build(records.clone(), config).unwrap();
        let expected = union_find_groups(&index, epsilon, tol);
        let removed = index.generalize_leaves(epsilon, tol).unwrap();
        index.validate().unwrap();
        assert_eq!(removed, 400 - expected.len());
        let got: BTreeMap<u64, u32> = index.records().iter().map(|r| (r.id, r.weight)).collect();
        let want: BTreeMap<u64, u32> = expected.iter().map(|(&id, &(w, _))| (id, w)).collect();
        assert_eq!(got, want, "epsilon {epsilon}");
        let total: u32 = index.records().iter().map(|r| r.weight).sum();
        assert_eq!(total, 400);
    }
}

#[test]
fn purity_report_matches_a_direct_count() {
    let records: Vec<Record> = random_records(300, 3, 6)
        .into_iter()
        .map(|r| {
            let label = if r.features[0] + 0.3 * r.features[1] > 0.0 {
                "x"
            } else {
                "y"
            };
            r.with_label(label)
        })
        .collect();
    let mut c = BuildConfig::new(SomTopology::line(3));
    c.min_leaf_size = 12;
    let index = SomTreeIndex::build(records, c).unwrap();
    let report = index.leaf_consistency_report().unwrap();
    assert_eq!(report.leaves.len(), index.leaf_count());
    for stats in &report.leaves {
        let leaf = index.node(stats.node_id).unwrap();
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for &m in &leaf.members {
            *counts
                .entry(index.record(m).unwrap().label.as_deref().unwrap())
                .or_default() += 1;
        }
        let modal = *counts.values().max().unwrap();
        assert_eq!(stats.size, leaf.members.len());
        assert_eq!(stats.label_purity, modal as f64 / leaf.members.len() as f64);
    }
    assert!(report.leaves.windows(2).all(|w| w[0].label_purity <= w[1].label_purity));
    assert!(report.mixed().all(|s| s.label_purity < 1.0));
}

#[test]
fn novelty_flips_once_at_the_best_similarity() {
    let records = random_records(200, 3, 7);
    let index = SomTreeIndex::build(records, BuildConfig::new(SomTopology::line(4))).unwrap();
    for q in random_vectors(20, 3, 8) {
        let q: Vec<f64> = q.iter().map(|x| x * 3.0).collect();
        let best = index.search(&q, &QueryParams::new(1, 1)).unwrap().neighbors[0].similarity;
        let mut flips = 0;
        let mut previous = false;
        for step in 0..=200 {
            let threshold = step as f64 / 200.0;
            let novel = index
                .detect_novelty(&q, &QueryParams::new(1, 1).with_min_similarity(threshold))
                .unwrap();
            assert_eq!(novel, best < threshold);
            if novel != previous {
                flips += 1;
            }
            previous = novel;
        }
        assert!(flips <= 1);
    }
}

#[test]
fn predictions_follow_weighted_votes_and_similarity_weights() {
    let records = vec![
        Record::new(0, vec![0.0]).with_label("a").with_response(1.0),
        Record::new(1, vec![1.0]).with_label("b").with_response(3.0),
        Record::new(2, vec![1.5]).with_label("b").with_response(5.0),
    ];
    let c = BuildConfig {
        min_leaf_size: 10,
        ..BuildConfig::default()
    };
    let index = SomTreeIndex::build(records, c).unwrap();
    let r = index.search(&[0.0], &QueryParams::new(3, 1)).unwrap();
    assert_eq!(index.classify(&r).unwrap().value().as_deref(), Some("b"));
    // Weights 1/(1+d): 1, 1/2, 1/2.5.
    let (w0, w1, w2) = (1.0, 0.5, 0.4);
    let expected = (w0 * 1.0 + w1 * 3.0 + w2 * 5.0) / (w0 + w1 + w2);
    let got = index.regress(&r).unwrap().value().unwrap();
    assert!((got - expected).abs() < 1e-12);
}
