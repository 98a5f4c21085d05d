//! Kohonen self-organizing maps on 1D, 2D and 3D lattices.
//!
//! Training presents every record once per epoch in a freshly shuffled order.
//! The winner is always chosen by Euclidean distance, and every node is then
//! pulled toward the presented vector by `alpha(t) * h(grid distance)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::squared_l2;
use crate::par::{self, Exec};
use crate::record::{check_query, Record};

/// Name of the pseudo-random generator used for initialization, shuffling
/// and sampling. Stored in index headers.
pub const GENERATOR_ID: &str = "chacha8-rand_chacha-0.3";

const INIT_JITTER: f64 = 1e-6;
const NEGLIGIBLE_KERNEL: f64 = 1e-12;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapRank {
    One,
    Two,
    Three,
}

impl MapRank {
    pub fn as_usize(self) -> usize {
        match self {
            MapRank::One => 1,
            MapRank::Two => 2,
            MapRank::Three => 3,
        }
    }
}

/// Distance between lattice coordinates for maps of rank 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum GridMetric {
    #[default]
    Euclidean,
    Manhattan,
}

impl FromStr for GridMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclid" | "euclidean" => Ok(GridMetric::Euclidean),
            "manhattan" => Ok(GridMetric::Manhattan),
            other => Err(Error::InvalidParameter(format!("unknown grid metric {other:?}"))),
        }
    }
}

/// Shape of a map: `side`, `side²` or `side³` nodes laid out row-major with
/// the last coordinate varying fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SomTopology {
    pub rank: MapRank,
    pub side: usize,
    pub grid_metric: GridMetric,
}

impl SomTopology {
    pub fn new(rank: MapRank, side: usize) -> Result<Self> {
        let topology = SomTopology {
            rank,
            side,
            grid_metric: GridMetric::default(),
        };
        topology.validate()?;
        Ok(topology)
    }

    pub fn line(side: usize) -> Self {
        SomTopology {
            rank: MapRank::One,
            side,
            grid_metric: GridMetric::default(),
        }
    }

    pub fn with_grid_metric(mut self, grid_metric: GridMetric) -> Self {
        self.grid_metric = grid_metric;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.side == 0 {
            return Err(Error::InvalidParameter("map side must be positive".into()));
        }
        self.side
            .checked_pow(self.rank.as_usize() as u32)
            .filter(|n| *n <= u32::MAX as usize)
            .map(|_| ())
            .ok_or_else(|| Error::InvalidParameter("map has too many nodes".into()))
    }

    pub fn node_count(&self) -> usize {
        self.side.pow(self.rank.as_usize() as u32)
    }

    /// Lattice coordinates of a linear node index.
    pub fn coords(&self, node: usize) -> Result<Vec<usize>> {
        self.check_node(node)?;
        let rank = self.rank.as_usize();
        let mut coords = vec![0; rank];
        let mut rest = node;
        for c in coords.iter_mut().rev() {
            *c = rest % self.side;
            rest /= self.side;
        }
        Ok(coords)
    }

    /// Distance between two nodes on the lattice: `|j - j*|` on a line,
    /// Euclidean or Manhattan on grids and cubes.
    pub fn grid_distance(&self, j: usize, j_star: usize) -> Result<f64> {
        if self.rank == MapRank::One {
            self.check_node(j)?;
            self.check_node(j_star)?;
            return Ok(j.abs_diff(j_star) as f64);
        }
        let a = self.coords(j)?;
        let b = self.coords(j_star)?;
        Ok(lattice_distance(self.grid_metric, &a, &b))
    }

    fn check_node(&self, node: usize) -> Result<()> {
        let count = self.node_count();
        if node < count {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { index: node, count })
        }
    }
}

fn lattice_distance(metric: GridMetric, a: &[usize], b: &[usize]) -> f64 {
    match metric {
        GridMetric::Manhattan => a.iter().zip(b).map(|(x, y)| x.abs_diff(*y) as f64).sum(),
        GridMetric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| {
                let d = x.abs_diff(*y) as f64;
                d * d
            })
            .sum::<f64>()
            .sqrt(),
    }
}

impl fmt::Display for SomTopology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}d:{}", self.rank.as_usize(), self.side)
    }
}

impl FromStr for SomTopology {
    type Err = Error;

    /// Parses `1d:k`, `2d:k` or `3d:k`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("bad topology {s:?}, expected 1d:k, 2d:k or 3d:k"));
        let (rank, side) = s.trim().split_once(':').ok_or_else(bad)?;
        let rank = match rank.to_ascii_lowercase().as_str() {
            "1d" => MapRank::One,
            "2d" => MapRank::Two,
            "3d" => MapRank::Three,
            _ => return Err(bad()),
        };
        SomTopology::new(rank, side.parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Kernel {
    #[default]
    Gaussian,
    MexicanHat,
}

/// Neighborhood weight for a node at lattice distance `d` from the winner.
#[inline]
pub fn neighborhood(kernel: Kernel, d: f64, sigma: f64) -> f64 {
    let r = d * d / (sigma * sigma);
    let gauss = (-0.5 * r).exp();
    match kernel {
        Kernel::Gaussian => gauss,
        Kernel::MexicanHat => (1.0 - r) * gauss,
    }
}

/// Training schedule. Learning rate and radius decay linearly over all
/// presentation steps; the radius never drops below `sigma_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SomParams {
    pub epochs: usize,
    pub alpha0: f64,
    pub sigma0: f64,
    pub sigma_min: f64,
    pub kernel: Kernel,
    pub seed: u64,
}

impl SomParams {
    /// Defaults scaled to a topology: `sigma0 = side / 2`.
    pub fn for_topology(topology: &SomTopology) -> Self {
        SomParams {
            epochs: 20,
            alpha0: 0.5,
            sigma0: (topology.side as f64 / 2.0).max(0.5),
            sigma_min: 0.5,
            kernel: Kernel::Gaussian,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidParameter(msg));
        if self.epochs == 0 {
            return invalid("epochs must be positive".into());
        }
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return invalid(format!("alpha0 must lie in (0, 1], got {}", self.alpha0));
        }
        if !(self.sigma_min > 0.0 && self.sigma_min.is_finite()) {
            return invalid(format!("sigma_min must be positive, got {}", self.sigma_min));
        }
        if !(self.sigma0.is_finite() && self.sigma0 >= self.sigma_min) {
            return invalid(format!(
                "sigma0 ({}) must be finite and at least sigma_min ({})",
                self.sigma0, self.sigma_min
            ));
        }
        Ok(())
    }

    fn alpha_at(&self, t: usize, total: usize) -> f64 {
        self.alpha0 * (1.0 - t as f64 / total as f64)
    }

    fn sigma_at(&self, t: usize, total: usize) -> f64 {
        (self.sigma0 * (1.0 - t as f64 / total as f64)).max(self.sigma_min)
    }
}

/// A trained (or initialized) map: one weight vector per lattice node.
#[derive(Debug, Clone, PartialEq)]
pub struct SomMap {
    topology: SomTopology,
    dim: usize,
    weights: Vec<f64>,
}

impl SomMap {
    /// Builds a map from explicit weights, one row per node.
    pub fn from_weights(topology: SomTopology, weights: Vec<Vec<f64>>) -> Result<Self> {
        topology.validate()?;
        if weights.len() != topology.node_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} weight vectors, got {}",
                topology.node_count(),
                weights.len()
            )));
        }
        let dim = weights.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(Error::InvalidParameter("weights must be non-empty".into()));
        }
        let mut flat = Vec::with_capacity(dim * weights.len());
        for w in &weights {
            check_query(w, dim)?;
            flat.extend_from_slice(w);
        }
        Ok(SomMap {
            topology,
            dim,
            weights: flat,
        })
    }

    pub fn topology(&self) -> &SomTopology {
        &self.topology
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn node_count(&self) -> usize {
        self.weights.len() / self.dim
    }

    pub fn weight(&self, node: usize) -> &[f64] {
        &self.weights[node * self.dim..(node + 1) * self.dim]
    }

    pub fn weights(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks_exact(self.dim)
    }

    /// Index of the node whose weight is closest (Euclidean) to `s`; ties go
    /// to the lowest index.
    pub fn find_winner(&self, s: &[f64]) -> Result<usize> {
        check_query(s, self.dim)?;
        Ok(self.winner(s))
    }

    #[inline]
    pub(crate) fn winner(&self, s: &[f64]) -> usize {
        let mut best = 0;
        let mut best_key = f64::INFINITY;
        for (j, w) in self.weights().enumerate() {
            let key = squared_l2(s, w);
            if key < best_key {
                best_key = key;
                best = j;
            }
        }
        best
    }

    /// One learning step: finds the winner for `s` and moves every node
    /// toward `s` by `alpha * h(grid distance)`. Returns the winner.
    pub fn update_step(&mut self, s: &[f64], alpha: f64, sigma: f64, kernel: Kernel) -> Result<usize> {
        check_query(s, self.dim)?;
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must lie in (0, 1], got {alpha}"
            )));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
        }
        let coords = lattice_coords(&self.topology);
        Ok(self.step(s, alpha, sigma, kernel, &coords))
    }

    fn step(&mut self, s: &[f64], alpha: f64, sigma: f64, kernel: Kernel, coords: &[Vec<usize>]) -> usize {
        let win = self.winner(s);
        let dim = self.dim;
        for (j, w) in self.weights.chunks_exact_mut(dim).enumerate() {
            let d = match self.topology.rank {
                MapRank::One => j.abs_diff(win) as f64,
                _ => lattice_distance(self.topology.grid_metric, &coords[j], &coords[win]),
            };
            let h = neighborhood(kernel, d, sigma);
            if h.abs() < NEGLIGIBLE_KERNEL {
                continue;
            }
            let c = alpha * h;
            if c == 1.0 {
                // w + 1 * (s - w) can be off by an ulp; the fixed point is s itself.
                w.copy_from_slice(s);
            } else {
                for (wi, si) in w.iter_mut().zip(s) {
                    *wi += c * (si - *wi);
                }
            }
        }
        win
    }

    /// Partitions `records` by winning node; cell `j` lists record ids in
    /// input order.
    pub fn assign(&self, records: &[Record]) -> Result<Vec<Vec<u64>>> {
        let cells = self.assign_positions(records)?;
        Ok(cells
            .into_iter()
            .map(|cell| cell.into_iter().map(|p| records[p].id).collect())
            .collect())
    }

    /// Like [`SomMap::assign`] but returns positions into `data`.
    pub fn assign_positions<S: AsRef<[f64]> + Sync>(&self, data: &[S]) -> Result<Vec<Vec<usize>>> {
        for s in data {
            check_query(s.as_ref(), self.dim)?;
        }
        Ok(self.assign_unchecked(Exec::Parallel, data))
    }

    pub(crate) fn assign_unchecked<S: AsRef<[f64]> + Sync>(&self, exec: Exec, data: &[S]) -> Vec<Vec<usize>> {
        let winners = par::map_slice(exec, data, |s| self.winner(s.as_ref()));
        let mut cells = vec![Vec::new(); self.node_count()];
        for (pos, w) in winners.into_iter().enumerate() {
            cells[w].push(pos);
        }
        cells
    }

    /// Lattice coordinates of the winning node for `s`.
    pub fn project(&self, s: &[f64]) -> Result<Vec<usize>> {
        let win = self.find_winner(s)?;
        self.topology.coords(win)
    }

    /// Mean Euclidean distance from each vector to its winning weight.
    pub fn quantization_error<S: AsRef<[f64]>>(&self, data: &[S]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut total = 0.0;
        for s in data {
            let s = s.as_ref();
            check_query(s, self.dim)?;
            total += squared_l2(s, self.weight(self.winner(s))).sqrt();
        }
        Ok(total / data.len() as f64)
    }
}

fn lattice_coords(topology: &SomTopology) -> Vec<Vec<usize>> {
    if topology.rank == MapRank::One {
        return Vec::new();
    }
    (0..topology.node_count())
        .map(|j| topology.coords(j).expect("node index in range"))
        .collect()
}

fn check_data<S: AsRef<[f64]>>(data: &[S]) -> Result<usize> {
    let dim = data.first().ok_or(Error::EmptyDataset)?.as_ref().len();
    if dim == 0 {
        return Err(Error::InvalidParameter("vectors must be non-empty".into()));
    }
    for s in data {
        check_query(s.as_ref(), dim)?;
    }
    Ok(dim)
}

/// Seeds node weights with distinct training vectors. When the map has more
/// nodes than there are vectors, the surplus nodes are resampled with
/// replacement and jittered by `1e-6` of each dimension's range.
pub fn init_som<S: AsRef<[f64]>>(data: &[S], topology: SomTopology, seed: u64) -> Result<SomMap> {
    topology.validate()?;
    let dim = check_data(data)?;
    Ok(init_unchecked(data, dim, topology, &mut rng_from_seed(seed)))
}

fn init_unchecked<S: AsRef<[f64]>>(data: &[S], dim: usize, topology: SomTopology, rng: &mut ChaCha8Rng) -> SomMap {
    let nodes = topology.node_count();
    let m = data.len();
    let mut weights = Vec::with_capacity(nodes * dim);
    for i in index::sample(rng, m, nodes.min(m)) {
        weights.extend_from_slice(data[i].as_ref());
    }
    if nodes > m {
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for s in data {
            for (d, v) in s.as_ref().iter().enumerate() {
                lo[d] = lo[d].min(*v);
                hi[d] = hi[d].max(*v);
            }
        }
        for _ in m..nodes {
            let src = data[rng.gen_range(0..m)].as_ref();
            for d in 0..dim {
                let jitter = (2.0 * rng.gen::<f64>() - 1.0) * INIT_JITTER * (hi[d] - lo[d]);
                weights.push(src[d] + jitter);
            }
        }
    }
    SomMap { topology, dim, weights }
}

/// Trains a map for `epochs * |data|` steps. A pure function of its inputs.
pub fn train_som<S: AsRef<[f64]>>(data: &[S], topology: SomTopology, params: &SomParams) -> Result<SomMap> {
    topology.validate()?;
    params.validate()?;
    let dim = check_data(data)?;
    Ok(train_unchecked(data, dim, topology, params))
}

pub(crate) fn train_unchecked<S: AsRef<[f64]>>(
    data: &[S],
    dim: usize,
    topology: SomTopology,
    params: &SomParams,
) -> SomMap {
    let mut rng = rng_from_seed(params.seed);
    let mut map = init_unchecked(data, dim, topology, &mut rng);
    let coords = lattice_coords(&topology);
    let total = params.epochs * data.len();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut t = 0;
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let alpha = params.alpha_at(t, total);
            let sigma = params.sigma_at(t, total);
            map.step(data[i].as_ref(), alpha, sigma, params.kernel, &coords);
            t += 1;
        }
    }
    map
}
