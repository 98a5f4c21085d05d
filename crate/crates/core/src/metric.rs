//! Distance metrics and the distance-to-similarity mapping.
//!
//! Every metric is evaluated through a *rank key*: a monotone transform of the
//! distance that is cheaper to compute (squared Euclidean distance, the
//! un-rooted Minkowski sum). Candidate ranking works on keys and converts only
//! the survivors back to distances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LANES: usize = 8;

/// Feature-space distance used for leaf search and brute-force scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum Metric {
    #[default]
    L2,
    L1,
    Cosine,
    Minkowski(f64),
}

impl Metric {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Metric::Minkowski(p) if !(p.is_finite() && p > 0.0) => Err(Error::InvalidParameter(format!(
                "minkowski exponent must be finite and > 0, got {p}"
            ))),
            _ => Ok(()),
        }
    }

    /// Checked distance between two vectors.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        self.validate()?;
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
        ensure_finite(a)?;
        ensure_finite(b)?;
        Ok(self.key_to_distance(self.rank_key(a, b)?))
    }

    /// Monotone surrogate of the distance. Inputs must already be validated
    /// for length and finiteness.
    #[inline]
    pub(crate) fn rank_key(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        debug_assert_eq!(a.len(), b.len());
        Ok(match *self {
            Metric::L2 => squared_l2(a, b),
            Metric::L1 => lane_sum(a, b, |d| d.abs()),
            Metric::Minkowski(p) => lane_sum(a, b, |d| d.abs().powf(p)),
            Metric::Cosine => cosine_distance(a, b)?,
        })
    }

    #[inline]
    pub(crate) fn key_to_distance(&self, key: f64) -> f64 {
        match *self {
            Metric::L2 => key.sqrt(),
            Metric::Minkowski(p) => key.powf(p.recip()),
            Metric::L1 | Metric::Cosine => key,
        }
    }

    /// Numeric tag used by the index file header.
    pub(crate) fn tag(&self) -> (u8, f64) {
        match *self {
            Metric::L2 => (0, 0.0),
            Metric::L1 => (1, 0.0),
            Metric::Cosine => (2, 0.0),
            Metric::Minkowski(p) => (3, p),
        }
    }

    pub(crate) fn from_tag(tag: u8, p: f64) -> Result<Metric> {
        let metric = match tag {
            0 => Metric::L2,
            1 => Metric::L1,
            2 => Metric::Cosine,
            3 => Metric::Minkowski(p),
            t => return Err(Error::InvalidIndex(format!("unknown metric tag {t}"))),
        };
        metric.validate()?;
        Ok(metric)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::L2 => f.write_str("l2"),
            Metric::L1 => f.write_str("l1"),
            Metric::Cosine => f.write_str("cosine"),
            Metric::Minkowski(p) => write!(f, "minkowski:{p}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let metric = match lower.as_str() {
            "l2" | "euclidean" => Metric::L2,
            "l1" | "manhattan" => Metric::L1,
            "cosine" => Metric::Cosine,
            other => match other.strip_prefix("minkowski:") {
                Some(p) => Metric::Minkowski(
                    p.parse()
                        .map_err(|_| Error::InvalidParameter(format!("bad minkowski exponent {p:?}")))?,
                ),
                None => return Err(Error::InvalidParameter(format!("unknown metric {s:?}"))),
            },
        };
        metric.validate()?;
        Ok(metric)
    }
}

/// Maps a distance onto a similarity in (0, 1]: `1 / (1 + d)`.
pub fn similarity(distance: f64) -> Result<f64> {
    if !distance.is_finite() {
        return Err(Error::NonFinite);
    }
    if distance < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "distance must be non-negative, got {distance}"
        )));
    }
    Ok(similarity_of(distance))
}

#[inline]
pub(crate) fn similarity_of(distance: f64) -> f64 {
    1.0 / (1.0 + distance)
}

/// Largest distance whose similarity still reaches `min_similarity`.
/// A threshold of zero admits every distance.
pub fn similarity_to_distance(min_similarity: f64) -> f64 {
    if min_similarity <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / min_similarity - 1.0
    }
}

pub(crate) fn ensure_finite(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Squared Euclidean distance. Accumulates in a fixed set of lanes so the
/// summation order, and therefore the result, never depends on the caller.
#[inline]
pub(crate) fn squared_l2(a: &[f64], b: &[f64]) -> f64 {
    lane_sum(a, b, |d| d * d)
}

#[inline(always)]
fn lane_sum(a: &[f64], b: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    let ca = a.chunks_exact(LANES);
    let cb = b.chunks_exact(LANES);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..LANES {
            acc[i] += f(x[i] - y[i]);
        }
    }
    for (i, (x, y)) in ra.iter().zip(rb).enumerate() {
        acc[i] += f(x - y);
    }
    fold_lanes(&acc)
}

#[inline(always)]
fn fold_lanes(acc: &[f64; LANES]) -> f64 {
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]))
}

fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let mut dot = [0.0f64; LANES];
    let mut na = [0.0f64; LANES];
    let mut nb = [0.0f64; LANES];
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let l = i % LANES;
        dot[l] += x * y;
        na[l] += x * x;
        nb[l] += y * y;
    }
    let (dot, na, nb) = (fold_lanes(&dot), fold_lanes(&na), fold_lanes(&nb));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0))
}
