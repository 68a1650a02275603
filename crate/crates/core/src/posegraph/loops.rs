//! Keyframe insertion and loop closure over pluggable retrieval and matching.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{GraphEdge, Keyframe, Match, PoseGraph};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Pixel `i` indexes the first keyframe passed to the matcher.
    pub matches: Vec<Match>,
    pub inliers: usize,
}

pub trait Matcher {
    fn match_keyframes(&self, a: &Keyframe, b: &Keyframe) -> Result<MatchResult>;
}

pub trait Retriever {
    /// Up to `top_k` keyframe ids ranked best first, skipping `exclude`.
    fn rank(&self, query: &[f64], graph: &PoseGraph, exclude: &[usize], top_k: usize) -> Vec<usize>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DescriptorRetriever {
    /// Highest cosine similarity first.
    Cosine,
    /// Smallest Euclidean descriptor distance first.
    L2,
}

impl Retriever for DescriptorRetriever {
    fn rank(&self, query: &[f64], graph: &PoseGraph, exclude: &[usize], top_k: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize)> = graph
            .keyframes()
            .iter()
            .filter(|k| !exclude.contains(&k.id()) && k.descriptor.len() == query.len())
            .map(|k| {
                let score = match self {
                    Self::Cosine => {
                        let dot: f64 = k.descriptor.iter().zip(query).map(|(a, b)| a * b).sum();
                        let na = k.descriptor.iter().map(|a| a * a).sum::<f64>().sqrt();
                        let nb = query.iter().map(|b| b * b).sum::<f64>().sqrt();
                        -(dot / (na * nb).max(f64::MIN_POSITIVE))
                    }
                    Self::L2 => k.descriptor.iter().zip(query).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
                };
                (score, k.id())
            })
            .collect();
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        scored.into_iter().take(top_k).map(|(_, id)| id).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Insertion {
    Inserted { id: usize, edge: Option<GraphEdge> },
    Skipped,
}

/// Inserts `frame` when the match against its nearest keyframe has fewer
/// than `inlier_threshold` inliers; the first keyframe is always inserted.
/// `result` must come from matching `nearest` (first) against `frame`.
pub fn try_insert_keyframe(
    graph: &mut PoseGraph,
    frame: Keyframe,
    nearest: Option<usize>,
    result: &MatchResult,
    inlier_threshold: usize,
) -> Result<Insertion> {
    if graph.is_empty() {
        let id = graph.add_keyframe(frame);
        return Ok(Insertion::Inserted { id, edge: None });
    }
    if result.inliers >= inlier_threshold {
        return Ok(Insertion::Skipped);
    }
    let id = graph.add_keyframe(frame);
    let edge = match nearest {
        Some(n) if n != id && !result.matches.is_empty() => {
            let e = GraphEdge::new(n, id, result.matches.clone())?;
            graph.add_edge(e.clone())?;
            Some(e)
        }
        _ => None,
    };
    Ok(Insertion::Inserted { id, edge })
}

/// Adds edges from `new_kf` to retrieved keyframes whose match has at least
/// `accept_threshold` inliers. Keyframes already adjacent to `new_kf` are
/// not considered.
pub fn detect_loop_closures(
    graph: &mut PoseGraph,
    new_kf: usize,
    retriever: &dyn Retriever,
    matcher: &dyn Matcher,
    top_k: usize,
    accept_threshold: usize,
) -> Result<Vec<GraphEdge>> {
    if new_kf >= graph.len() {
        return Err(Error::InvalidInput("keyframe id out of range"));
    }
    let mut exclude: Vec<usize> = (0..graph.len()).filter(|&k| graph.connected(k, new_kf)).collect();
    exclude.push(new_kf);
    let candidates = retriever.rank(&graph.keyframe(new_kf).descriptor, graph, &exclude, top_k);
    let mut added = Vec::new();
    for c in candidates {
        let result = match matcher.match_keyframes(graph.keyframe(c), graph.keyframe(new_kf)) {
            Ok(r) => r,
            Err(Error::NoCovisibility) => continue,
            Err(e) => return Err(e),
        };
        if result.inliers >= accept_threshold && !result.matches.is_empty() {
            let e = GraphEdge::new(c, new_kf, result.matches)?;
            graph.add_edge(e.clone())?;
            added.push(e);
        }
    }
    Ok(added)
}
