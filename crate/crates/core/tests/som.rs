mod common;

use common::{random_records, two_clusters};
use proptest::prelude::*;
use somtree::{init_som, train_som, Kernel, MapRank, SomMap, SomParams, SomTopology};

fn winner_by_scan(map: &SomMap, s: &[f64]) -> usize {
    let mut best = (f64::INFINITY, 0);
    for j in 0..map.node_count() {
        let d: f64 = map.weight(j).iter().zip(s).map(|(w, x)| (w - x) * (w - x)).sum();
        if d < best.0 {
            best = (d, j);
        }
    }
    best.1
}

fn trained_split(seed: u64, sigma_min: f64) -> (Vec<somtree::Record>, SomMap, Vec<Vec<u64>>) {
    let data = two_clusters(5.0, seed);
    let topo = SomTopology::line(2);
    let params = SomParams {
        seed,
        sigma_min,
        ..SomParams::for_topology(&topo)
    };
    let map = train_som(&data, topo, &params).unwrap();
    let cells = map.assign(&data).unwrap();
    (data, map, cells)
}

#[test]
fn two_clusters_get_one_node_each() {
    for seed in 0..10 {
        let (_, _, cells) = trained_split(seed, 0.5);
        let mut sizes: Vec<usize> = cells.iter().map(Vec::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, [20, 20], "seed {seed}");
        for ids in &cells {
            assert!(ids.iter().all(|&i| i < 20) || ids.iter().all(|&i| i >= 20));
        }
    }
}

// With the default floor of 0.5 the neighbor still gets h(1) = e^-2 of
// every update, which holds both weights about 12 units inside the gap.
// A narrower floor lets each weight settle within its own cluster.
#[test]
fn narrow_kernel_floor_puts_weights_inside_their_clusters() {
    for seed in 0..10 {
        let (data, map, cells) = trained_split(seed, 0.2);
        for (j, cell) in cells.iter().enumerate() {
            assert_eq!(cell.len(), 20);
            for axis in 0..2 {
                let values = cell.iter().map(|&i| data[i as usize].features[axis]);
                let lo = values.clone().fold(f64::INFINITY, f64::min);
                let hi = values.fold(f64::NEG_INFINITY, f64::max);
                let w = map.weight(j)[axis];
                assert!(
                    lo <= w && w <= hi,
                    "seed {seed} node {j} axis {axis}: {w} outside [{lo}, {hi}]"
                );
            }
        }
    }
}

#[test]
fn assignment_matches_an_independent_winner_scan() {
    let data = random_records(300, 5, 1);
    let topo = SomTopology::new(MapRank::Two, 3).unwrap();
    let map = train_som(&data, topo, &SomParams::for_topology(&topo)).unwrap();
    let cells = map.assign(&data).unwrap();
    for (j, cell) in cells.iter().enumerate() {
        for &id in cell {
            assert_eq!(winner_by_scan(&map, &data[id as usize].features), j);
        }
    }
    let mut all: Vec<u64> = cells.concat();
    all.sort_unstable();
    assert_eq!(all, (0..300).collect::<Vec<_>>());
}

#[test]
fn projection_agrees_with_assignment() {
    let data = random_records(200, 4, 2);
    let topo = SomTopology::new(MapRank::Three, 3).unwrap();
    let map = train_som(&data, topo, &SomParams::for_topology(&topo)).unwrap();
    let cells = map.assign(&data).unwrap();
    for (j, cell) in cells.iter().enumerate() {
        let coords = topo.coords(j).unwrap();
        for &id in cell {
            assert_eq!(map.project(&data[id as usize].features).unwrap(), coords);
        }
    }
}

#[test]
fn training_reduces_quantization_error() {
    let data = random_records(400, 6, 3);
    let topo = SomTopology::line(10);
    let init = init_som(&data, topo, 0).unwrap();
    let trained = train_som(&data, topo, &SomParams::for_topology(&topo)).unwrap();
    let before = init.quantization_error(&data).unwrap();
    let after = trained.quantization_error(&data).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn single_record_is_a_fixed_point() {
    let data = random_records(1, 3, 4);
    let topo = SomTopology::line(5);
    let map = train_som(&data, topo, &SomParams::for_topology(&topo)).unwrap();
    let w = map.find_winner(&data[0].features).unwrap();
    assert_eq!(map.weight(w), data[0].features.as_slice());
}

#[test]
fn mexican_hat_training_is_deterministic_and_finite() {
    let data = random_records(150, 3, 5);
    let topo = SomTopology::new(MapRank::Two, 4).unwrap();
    let params = SomParams {
        kernel: Kernel::MexicanHat,
        ..SomParams::for_topology(&topo)
    };
    let a = train_som(&data, topo, &params).unwrap();
    let b = train_som(&data, topo, &params).unwrap();
    assert_eq!(a, b);
    assert!(a.weights().flatten().all(|w| w.is_finite()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_seed_same_map(seed in 0u64..10_000, n in 1usize..40, side in 1usize..5) {
        let data = random_records(n, 3, seed);
        let topo = SomTopology::line(side);
        let params = SomParams { seed, epochs: 3, ..SomParams::for_topology(&topo) };
        let a = train_som(&data, topo, &params).unwrap();
        let b = train_som(&data, topo, &params).unwrap();
        prop_assert!(a.weights().flatten().zip(b.weights().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn init_weights_come_from_the_data(seed in 0u64..10_000, n in 1usize..30, side in 1usize..4) {
        let data = random_records(n, 2, seed);
        let topo = SomTopology::new(MapRank::Two, side).unwrap();
        let map = init_som(&data, topo, seed).unwrap();
        let first = map.node_count().min(n);
        for j in 0..first {
            prop_assert!(data.iter().any(|r| r.features.as_slice() == map.weight(j)));
        }
    }
}
