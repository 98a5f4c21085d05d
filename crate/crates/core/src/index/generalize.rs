use std::collections::{HashSet, VecDeque};

use crate::error::{Error, Result};
use crate::record::Record;

use super::SomTreeIndex;

fn compatible(a: &Record, b: &Record, response_tol: f64) -> bool {
    if a.label != b.label {
        return false;
    }
    match (a.response, b.response) {
        (None, None) => true,
        (Some(x), Some(y)) => (x - y).abs() <= response_tol,
        _ => false,
    }
}

fn prototype(group: &[&Record]) -> Result<Record> {
    let first = group[0];
    let dim = first.features.len();
    let mut weight: u32 = 0;
    let mut features = vec![0.0; dim];
    let mut response = 0.0;
    for r in group {
        weight = weight
            .checked_add(r.weight)
            .ok_or_else(|| Error::InvalidIndex("prototype weight overflows u32".into()))?;
        let w = r.weight as f64;
        for (f, v) in features.iter_mut().zip(&r.features) {
            *f += w * v;
        }
        response += w * r.response.unwrap_or(0.0);
    }
    let total = weight as f64;
    features.iter_mut().for_each(|f| *f /= total);
    Ok(Record {
        id: first.id,
        features,
        label: first.label.clone(),
        response: first.response.map(|_| response / total),
        payload: first.payload.clone(),
        weight,
    })
}

impl SomTreeIndex {
    /// Replaces groups of interchangeable leaf members by weighted prototypes.
    ///
    /// Two members of a leaf are linked when their labels match, their
    /// responses differ by at most `response_tol` (or both are absent) and
    /// their distance under the index metric is at most `epsilon`. Each
    /// connected group becomes one record carrying the lowest member id, the
    /// weighted mean features and response, and the summed weight. Returns
    /// the number of records removed.
    pub fn generalize_leaves(&mut self, epsilon: f64, response_tol: f64) -> Result<usize> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) || !(response_tol >= 0.0 && response_tol.is_finite()) {
            return Err(Error::InvalidParameter(
                "epsilon and response_tol must be finite and non-negative".into(),
            ));
        }
        self.validate()?;
        let metric = self.metric();
        let leaf_ids: Vec<u64> = self.leaves().map(|l| l.id).collect();
        let mut removed: HashSet<u64> = HashSet::new();
        let mut replacements: Vec<Record> = Vec::new();

        for leaf_id in leaf_ids {
            let mut ids = self.node_ref(leaf_id).members.clone();
            ids.sort_unstable();
            let members: Vec<&Record> = ids.iter().map(|&id| self.record_ref(id)).collect();
            let mut grouped = vec![false; members.len()];
            let mut dropped_here = HashSet::new();
            for start in 0..members.len() {
                if grouped[start] {
                    continue;
                }
                grouped[start] = true;
                let mut group = vec![start];
                let mut queue = VecDeque::from([start]);
                while let Some(x) = queue.pop_front() {
                    for y in 0..members.len() {
                        if grouped[y] || !compatible(members[x], members[y], response_tol) {
                            continue;
                        }
                        let d = metric.distance(&members[x].features, &members[y].features)?;
                        if d <= epsilon {
                            grouped[y] = true;
                            group.push(y);
                            queue.push_back(y);
                        }
                    }
                }
                if group.len() > 1 {
                    group.sort_unstable();
                    let recs: Vec<&Record> = group.iter().map(|&g| members[g]).collect();
                    replacements.push(prototype(&recs)?);
                    dropped_here.extend(recs[1..].iter().map(|r| r.id));
                }
            }
            if !dropped_here.is_empty() {
                self.nodes[leaf_id as usize]
                    .members
                    .retain(|m| !dropped_here.contains(m));
                removed.extend(dropped_here);
            }
        }

        if removed.is_empty() {
            return Ok(0);
        }
        for proto in replacements {
            let pos = self.positions[&proto.id];
            self.records[pos] = proto;
        }
        self.records.retain(|r| !removed.contains(&r.id));
        self.positions = self.records.iter().enumerate().map(|(i, r)| (r.id, i)).collect();
        self.recount();
        Ok(removed.len())
    }
}
