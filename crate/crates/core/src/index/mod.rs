//! The hierarchical search tree.
//!
//! Each internal node is split by training a small SOM on its members and
//! giving every non-empty map cell its own child, whose centroid is the cell's
//! weight vector. Leaves hold record ids. Nodes live in an arena and a node's
//! id is its position in that arena.

mod generalize;
mod persist;
mod report;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{similarity_of, squared_l2, Metric};
use crate::par::{self, Exec};
use crate::record::{check_query, validate_records, Record};
use crate::som::{self, SomParams, SomTopology};

pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};
pub use report::{LeafReport, LeafStats};

/// Parameters for [`SomTreeIndex::build`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    /// Map used at every split; its node count bounds the fan-out.
    pub branching: SomTopology,
    pub max_depth: usize,
    /// Nodes with at most this many members are not split further.
    pub min_leaf_size: usize,
    /// Metric for leaf search. Descent and clustering always use L2.
    pub metric: Metric,
    /// SOM schedule. `seed` is the root seed; children derive their own.
    pub som_params: SomParams,
}

impl BuildConfig {
    pub fn new(branching: SomTopology) -> Self {
        BuildConfig {
            branching,
            max_depth: 5,
            min_leaf_size: 1,
            metric: Metric::L2,
            som_params: SomParams::for_topology(&branching),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.branching.validate()?;
        self.metric.validate()?;
        self.som_params.validate()?;
        if self.max_depth == 0 || self.max_depth > u16::MAX as usize - 1 {
            return Err(Error::InvalidParameter(format!(
                "max_depth must lie in 1..{}, got {}",
                u16::MAX,
                self.max_depth
            )));
        }
        if self.min_leaf_size == 0 {
            return Err(Error::InvalidParameter("min_leaf_size must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig::new(SomTopology::line(10))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub id: u64,
    /// Root is at depth 0.
    pub depth: usize,
    pub centroid: Vec<f64>,
    /// Child ids in ascending order; empty for leaves.
    pub children: Vec<u64>,
    /// Record ids; non-empty only for leaves.
    pub members: Vec<u64>,
    /// Records stored anywhere below this node.
    pub member_count: u64,
    pub parent: Option<u64>,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Where [`SomTreeIndex::insert`] placed a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    /// Added to an existing leaf.
    Appended(u64),
    /// Too dissimilar from the reached leaf; stored in a new sibling leaf.
    NewLeaf(u64),
}

#[derive(Debug, Clone)]
pub struct SomTreeIndex {
    config: BuildConfig,
    dim: usize,
    nodes: Vec<TreeNode>,
    root: u64,
    records: Vec<Record>,
    positions: HashMap<u64, usize>,
    generator_id: String,
}

enum Subtree {
    Leaf { centroid: Vec<f64>, members: Vec<usize> },
    Internal { centroid: Vec<f64>, children: Vec<Subtree> },
}

struct ChildSpec {
    members: Vec<usize>,
    centroid: Vec<f64>,
    seed: u64,
}

struct Builder<'a> {
    records: &'a [Record],
    config: &'a BuildConfig,
    dim: usize,
    exec: Exec,
}

impl Builder<'_> {
    fn build(&self, members: Vec<usize>, centroid: Vec<f64>, depth: usize, seed: u64) -> Subtree {
        if members.len() <= self.config.min_leaf_size || depth >= self.config.max_depth {
            return Subtree::Leaf { centroid, members };
        }
        let data: Vec<&[f64]> = members.iter().map(|&p| self.records[p].features.as_slice()).collect();
        let params = SomParams {
            seed,
            ..self.config.som_params
        };
        let map = som::train_unchecked(&data, self.dim, self.config.branching, &params);
        let cells = map.assign_unchecked(self.exec, &data);
        let specs: Vec<ChildSpec> = cells
            .into_iter()
            .enumerate()
            .filter(|(_, cell)| !cell.is_empty())
            .map(|(j, cell)| ChildSpec {
                members: cell.into_iter().map(|i| members[i]).collect(),
                centroid: map.weight(j).to_vec(),
                seed: child_seed(seed, j as u64),
            })
            .collect();
        if specs.len() <= 1 {
            return Subtree::Leaf { centroid, members };
        }
        drop(data);
        let children = par::map_slice(self.exec, &specs, |spec| {
            self.build(spec.members.clone(), spec.centroid.clone(), depth + 1, spec.seed)
        });
        Subtree::Internal { centroid, children }
    }
}

/// Seed for the SOM of the child spawned by map node `ordinal`.
fn child_seed(parent: u64, ordinal: u64) -> u64 {
    splitmix64(parent ^ splitmix64(ordinal.wrapping_add(1)))
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mean_vector(records: &[Record], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for r in records {
        for (m, v) in mean.iter_mut().zip(&r.features) {
            *m += v;
        }
    }
    let n = records.len() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

impl SomTreeIndex {
    /// Builds the tree over `records`.
    pub fn build(records: Vec<Record>, config: BuildConfig) -> Result<Self> {
        Self::build_with(Exec::default(), records, config)
    }

    /// [`SomTreeIndex::build`] with an explicit execution strategy. Sibling
    /// subtrees use pre-derived seeds, so the tree is the same either way.
    pub fn build_with(exec: Exec, records: Vec<Record>, config: BuildConfig) -> Result<Self> {
        config.validate()?;
        let dim = validate_records(&records)?;
        let root_centroid = mean_vector(&records, dim);
        let builder = Builder {
            records: &records,
            config: &config,
            dim,
            exec,
        };
        let tree = builder.build((0..records.len()).collect(), root_centroid, 0, config.som_params.seed);
        let mut nodes = Vec::new();
        flatten(tree, 0, None, &records, &mut nodes);
        Ok(Self::from_parts(
            config,
            dim,
            nodes,
            0,
            records,
            som::GENERATOR_ID.to_string(),
        ))
    }

    fn from_parts(
        config: BuildConfig,
        dim: usize,
        nodes: Vec<TreeNode>,
        root: u64,
        records: Vec<Record>,
        generator_id: String,
    ) -> Self {
        let positions = records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        SomTreeIndex {
            config,
            dim,
            nodes,
            root,
            records,
            positions,
            generator_id,
        }
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.config.metric
    }

    pub fn generator_id(&self) -> &str {
        &self.generator_id
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: u64) -> Option<&TreeNode> {
        self.nodes.get(id as usize)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves().count()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn record(&self, id: u64) -> Option<&Record> {
        self.positions.get(&id).map(|&p| &self.records[p])
    }

    pub(crate) fn node_ref(&self, id: u64) -> &TreeNode {
        &self.nodes[id as usize]
    }

    pub(crate) fn record_ref(&self, id: u64) -> &Record {
        &self.records[self.positions[&id]]
    }

    /// Largest number of children under any node.
    pub fn max_fanout(&self) -> usize {
        self.nodes.iter().map(|n| n.children.len()).max().unwrap_or(0)
    }

    /// Greedy single-path descent by L2 distance to child centroids.
    pub(crate) fn greedy_leaf(&self, q: &[f64]) -> u64 {
        let mut node = self.node_ref(self.root);
        while !node.is_leaf() {
            let mut best = node.children[0];
            let mut best_key = f64::INFINITY;
            for &c in &node.children {
                let key = squared_l2(q, &self.node_ref(c).centroid);
                if key < best_key {
                    best_key = key;
                    best = c;
                }
            }
            node = self.node_ref(best);
        }
        node.id
    }

    /// Adds a record without retraining any map or moving any centroid.
    ///
    /// The record descends greedily to a leaf. If its similarity to the
    /// nearest member there reaches `tau_new`, it joins that leaf; otherwise
    /// it becomes the only member of a new sibling leaf centred on itself.
    pub fn insert(&mut self, record: Record, tau_new: f64) -> Result<InsertOutcome> {
        if !(tau_new > 0.0 && tau_new <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tau_new must lie in (0, 1], got {tau_new}"
            )));
        }
        check_query(&record.features, self.dim)?;
        if record.response.is_some_and(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if record.weight == 0 {
            return Err(Error::InvalidParameter(format!("record {} has zero weight", record.id)));
        }
        if self.positions.contains_key(&record.id) {
            return Err(Error::DuplicateId(record.id));
        }
        let metric = self.metric();
        let leaf_id = self.greedy_leaf(&record.features);
        let leaf = self.node_ref(leaf_id);
        let mut best = f64::INFINITY;
        for &m in &leaf.members {
            let key = metric.rank_key(&record.features, &self.record_ref(m).features)?;
            best = best.min(key);
        }
        let nearest = similarity_of(metric.key_to_distance(best));
        // A sibling centred on the record would tie with the reached leaf's
        // centroid at distance zero and lose on node id, so it could never be
        // reached; such records join the leaf instead.
        let shadowed = squared_l2(&record.features, &leaf.centroid) == 0.0;

        let id = record.id;
        let outcome = if nearest >= tau_new || shadowed {
            self.nodes[leaf_id as usize].members.push(id);
            self.bump_counts(leaf_id);
            InsertOutcome::Appended(leaf_id)
        } else {
            let parent = match self.node_ref(leaf_id).parent {
                Some(p) => p,
                None => self.split_root_leaf(),
            };
            let new_id = self.nodes.len() as u64;
            self.nodes.push(TreeNode {
                id: new_id,
                depth: self.node_ref(parent).depth + 1,
                centroid: record.features.clone(),
                children: Vec::new(),
                members: vec![id],
                member_count: 0,
                parent: Some(parent),
            });
            self.nodes[parent as usize].children.push(new_id);
            self.bump_counts(new_id);
            InsertOutcome::NewLeaf(new_id)
        };
        self.positions.insert(id, self.records.len());
        self.records.push(record);
        Ok(outcome)
    }

    /// Turns a leaf root into an internal node with the old members moved
    /// into a single child that keeps the root's centroid.
    fn split_root_leaf(&mut self) -> u64 {
        let root = self.root;
        let child = self.nodes.len() as u64;
        let node = &mut self.nodes[root as usize];
        let members = std::mem::take(&mut node.members);
        let centroid = node.centroid.clone();
        let count = node.member_count;
        node.children.push(child);
        self.nodes.push(TreeNode {
            id: child,
            depth: 1,
            centroid,
            children: Vec::new(),
            members,
            member_count: count,
            parent: Some(root),
        });
        root
    }

    fn bump_counts(&mut self, from: u64) {
        let mut cur = Some(from);
        while let Some(id) = cur {
            let node = &mut self.nodes[id as usize];
            node.member_count += 1;
            cur = node.parent;
        }
    }

    fn recount(&mut self) {
        for i in (0..self.nodes.len()).rev() {
            let count = if self.nodes[i].is_leaf() {
                self.nodes[i].members.len() as u64
            } else {
                self.nodes[i]
                    .children
                    .iter()
                    .map(|&c| self.nodes[c as usize].member_count)
                    .sum()
            };
            self.nodes[i].member_count = count;
        }
    }

    /// Checks the structural invariants: every node reachable from the root
    /// exactly once, depths consistent, each record in exactly one leaf, and
    /// member counts equal to the sum over children.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidIndex(msg));
        if self.nodes.is_empty() || self.root as usize >= self.nodes.len() {
            return bad("missing root node".into());
        }
        let mut seen_node = vec![false; self.nodes.len()];
        let mut seen_record: HashMap<u64, bool> = self.records.iter().map(|r| (r.id, false)).collect();
        if seen_record.len() != self.records.len() {
            return bad("duplicate record ids in store".into());
        }
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            let Some(node) = self.nodes.get(id as usize) else {
                return bad(format!("dangling node id {id}"));
            };
            if node.id != id {
                return bad(format!("node at slot {id} carries id {}", node.id));
            }
            if std::mem::replace(&mut seen_node[id as usize], true) {
                return bad(format!("node {id} reachable twice"));
            }
            if node.centroid.len() != self.dim {
                return bad(format!("node {id} centroid has wrong dimension"));
            }
            if node.is_leaf() {
                if node.members.is_empty() {
                    return bad(format!("leaf {id} has no members"));
                }
                if node.member_count != node.members.len() as u64 {
                    return bad(format!("leaf {id} member_count is stale"));
                }
                for m in &node.members {
                    match seen_record.get_mut(m) {
                        None => return bad(format!("leaf {id} references unknown record {m}")),
                        Some(true) => return bad(format!("record {m} appears in two leaves")),
                        Some(flag) => *flag = true,
                    }
                }
            } else {
                if !node.members.is_empty() {
                    return bad(format!("internal node {id} holds members"));
                }
                let mut sum = 0;
                for &c in &node.children {
                    let Some(child) = self.nodes.get(c as usize) else {
                        return bad(format!("dangling child {c}"));
                    };
                    if child.depth != node.depth + 1 || child.parent != Some(id) {
                        return bad(format!("child {c} of {id} has inconsistent depth or parent"));
                    }
                    sum += child.member_count;
                    stack.push(c);
                }
                if sum != node.member_count {
                    return bad(format!("node {id} member_count is stale"));
                }
            }
        }
        if seen_node.iter().any(|s| !s) {
            return bad("unreachable nodes present".into());
        }
        if seen_record.values().any(|s| !s) {
            return bad("record missing from every leaf".into());
        }
        Ok(())
    }
}

fn flatten(tree: Subtree, depth: usize, parent: Option<u64>, records: &[Record], nodes: &mut Vec<TreeNode>) -> u64 {
    let id = nodes.len() as u64;
    match tree {
        Subtree::Leaf { centroid, members } => {
            nodes.push(TreeNode {
                id,
                depth,
                centroid,
                children: Vec::new(),
                member_count: members.len() as u64,
                members: members.into_iter().map(|p| records[p].id).collect(),
                parent,
            });
        }
        Subtree::Internal { centroid, children } => {
            nodes.push(TreeNode {
                id,
                depth,
                centroid,
                children: Vec::new(),
                members: Vec::new(),
                member_count: 0,
                parent,
            });
            let mut ids = Vec::with_capacity(children.len());
            let mut count = 0;
            for child in children {
                let c = flatten(child, depth + 1, Some(id), records, nodes);
                count += nodes[c as usize].member_count;
                ids.push(c);
            }
            let node = &mut nodes[id as usize];
            node.children = ids;
            node.member_count = count;
        }
    }
    id
}
