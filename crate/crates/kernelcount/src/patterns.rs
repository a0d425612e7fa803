//! Pattern skeletons and labeled-pattern enumeration.

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::graph::{Graph, LabelId};

/// The four pattern shapes used for benchmarking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Skeleton {
    #[serde(rename = "3-star")]
    ThreeStar,
    #[serde(rename = "triangle")]
    Triangle,
    #[serde(rename = "tailed-triangle")]
    TailedTriangle,
    #[serde(rename = "chordal-cycle")]
    ChordalCycle,
}

impl Skeleton {
    pub const ALL: [Skeleton; 4] = [
        Skeleton::ThreeStar,
        Skeleton::Triangle,
        Skeleton::TailedTriangle,
        Skeleton::ChordalCycle,
    ];

    pub fn vertex_count(self) -> usize {
        match self {
            Skeleton::Triangle => 3,
            _ => 4,
        }
    }

    /// Undirected edge set; vertex 0 is the star center / a triangle corner.
    pub fn undirected_edges(self) -> &'static [(usize, usize)] {
        match self {
            Skeleton::ThreeStar => &[(0, 1), (0, 2), (0, 3)],
            Skeleton::Triangle => &[(0, 1), (1, 2), (0, 2)],
            Skeleton::TailedTriangle => &[(0, 1), (1, 2), (0, 2), (2, 3)],
            Skeleton::ChordalCycle => &[(0, 1), (1, 2), (0, 2), (2, 3), (0, 3)],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Skeleton::ThreeStar => "3-star",
            Skeleton::Triangle => "triangle",
            Skeleton::TailedTriangle => "tailed-triangle",
            Skeleton::ChordalCycle => "chordal-cycle",
        }
    }
}

impl fmt::Display for Skeleton {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Skeleton {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "3-star" => Ok(Skeleton::ThreeStar),
            "triangle" => Ok(Skeleton::Triangle),
            "tailed-triangle" => Ok(Skeleton::TailedTriangle),
            "chordal-cycle" => Ok(Skeleton::ChordalCycle),
            other => Err(format!(
                "unknown skeleton {other:?} (expected 3-star, triangle, tailed-triangle or chordal-cycle)"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum PatternError {
    #[error("pattern {id}: expected {expected} vertices for {skeleton}, got {got}")]
    VertexCountMismatch {
        id: String,
        skeleton: Skeleton,
        expected: usize,
        got: usize,
    },
    #[error("pattern {id}: undirected structure does not match {skeleton}")]
    StructureMismatch { id: String, skeleton: Skeleton },
    #[error("pattern {id}: edge ({u}, {v}) is not bidirected with a matching label")]
    NotBidirected { id: String, u: usize, v: usize },
}

/// A small bidirected graph tagged with the skeleton it instantiates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    graph: Graph,
    skeleton: Skeleton,
}

impl Pattern {
    pub fn new(graph: Graph, skeleton: Skeleton) -> Result<Self, PatternError> {
        if graph.vertex_count() != skeleton.vertex_count() {
            return Err(PatternError::VertexCountMismatch {
                id: graph.id().to_string(),
                skeleton,
                expected: skeleton.vertex_count(),
                got: graph.vertex_count(),
            });
        }
        let undirected: HashSet<(usize, usize)> = graph
            .edges()
            .iter()
            .map(|&(s, d, _)| (s.min(d), s.max(d)))
            .collect();
        let expected: HashSet<(usize, usize)> = skeleton
            .undirected_edges()
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        if undirected != expected {
            return Err(PatternError::StructureMismatch {
                id: graph.id().to_string(),
                skeleton,
            });
        }
        let labels: std::collections::HashMap<(usize, usize), LabelId> = graph
            .edges()
            .iter()
            .map(|&(s, d, l)| ((s, d), l))
            .collect();
        for &(s, d, l) in graph.edges() {
            if labels.get(&(d, s)) != Some(&l) {
                return Err(PatternError::NotBidirected {
                    id: graph.id().to_string(),
                    u: s,
                    v: d,
                });
            }
        }
        Ok(Pattern { graph, skeleton })
    }

    /// The all-labels-zero bidirected instance of a skeleton.
    pub fn homogeneous(skeleton: Skeleton) -> Pattern {
        let vl = vec![0; skeleton.vertex_count()];
        let el = vec![0; skeleton.undirected_edges().len()];
        labeled_pattern(skeleton, &vl, &el)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn skeleton(&self) -> Skeleton {
        self.skeleton
    }

    pub fn id(&self) -> &str {
        self.graph.id()
    }
}

fn join_labels(labels: &[LabelId]) -> String {
    labels
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

/// Deterministic id of the labeled instance, e.g. `triangle~v0.0.1~e0.0.0`.
pub fn pattern_id(skeleton: Skeleton, vertex_labels: &[LabelId], edge_labels: &[LabelId]) -> String {
    format!(
        "{}~v{}~e{}",
        skeleton.name(),
        join_labels(vertex_labels),
        join_labels(edge_labels)
    )
}

fn labeled_pattern(skeleton: Skeleton, vertex_labels: &[LabelId], edge_labels: &[LabelId]) -> Pattern {
    let mut edges = Vec::with_capacity(skeleton.undirected_edges().len() * 2);
    for (&(a, b), &l) in skeleton.undirected_edges().iter().zip(edge_labels) {
        edges.push((a, b, l));
        edges.push((b, a, l));
    }
    let graph = Graph::new(
        pattern_id(skeleton, vertex_labels, edge_labels),
        skeleton.vertex_count(),
        vertex_labels.to_vec(),
        edges,
    )
    .expect("skeleton edges are valid");
    Pattern { graph, skeleton }
}

/// Advances a base-`radix` odometer (last digit fastest). Returns false
/// once the odometer wraps back to all zeros.
fn advance(digits: &mut [LabelId], radix: u32) -> bool {
    for d in digits.iter_mut().rev() {
        *d += 1;
        if *d < radix {
            return true;
        }
        *d = 0;
    }
    false
}

/// Every vertex/edge label assignment over a skeleton, in lexicographic
/// order of (vertex assignment, edge assignment). Automorphic duplicates
/// are kept. Requires `x_max >= 1` and `y_max >= 1`.
pub fn enumerate_labeled_patterns(skeleton: Skeleton, x_max: u32, y_max: u32) -> Vec<Pattern> {
    assert!(x_max >= 1 && y_max >= 1, "label alphabets must be non-empty");
    let nv = skeleton.vertex_count();
    let ne = skeleton.undirected_edges().len();
    let mut out = Vec::with_capacity((x_max as usize).pow(nv as u32) * (y_max as usize).pow(ne as u32));
    let mut vl = vec![0 as LabelId; nv];
    loop {
        let mut el = vec![0 as LabelId; ne];
        loop {
            out.push(labeled_pattern(skeleton, &vl, &el));
            if !advance(&mut el, y_max) {
                break;
            }
        }
        if !advance(&mut vl, x_max) {
            break;
        }
    }
    out
}
