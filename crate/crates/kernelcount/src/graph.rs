//! Directed labeled graphs, datasets with named splits, and the
//! bidirected lift that brings undirected inputs into the directed model.

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

/// Dense non-negative label identifier shared by vertices and edges.
pub type LabelId = u32;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("graph {graph}: vertex index out of range in edge ({src}, {dst}) with {vertex_count} vertices")]
    VertexOutOfRange {
        graph: String,
        src: usize,
        dst: usize,
        vertex_count: usize,
    },
    #[error("graph {graph}: self-loop on vertex {vertex}")]
    SelfLoop { graph: String, vertex: usize },
    #[error("graph {graph}: duplicate edge ({src}, {dst})")]
    DuplicateEdge { graph: String, src: usize, dst: usize },
    #[error("graph {graph}: expected {expected} vertex labels, got {got}")]
    VertexLabelMismatch {
        graph: String,
        expected: usize,
        got: usize,
    },
    #[error("graph {graph}: conflicting labels on edge pair ({u}, {v}): {forward} forward vs {backward} reverse")]
    ReverseLabelConflict {
        graph: String,
        u: usize,
        v: usize,
        forward: LabelId,
        backward: LabelId,
    },
}

/// A simple directed graph with integer vertex and edge labels.
///
/// Validated at construction: endpoints in range, no self-loops, no
/// duplicate directed edges, one label per vertex. Immutable afterwards.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    id: String,
    vertex_count: usize,
    vertex_labels: Vec<LabelId>,
    edges: Vec<(usize, usize, LabelId)>,
}

impl Graph {
    pub fn new(
        id: impl Into<String>,
        vertex_count: usize,
        vertex_labels: Vec<LabelId>,
        edges: Vec<(usize, usize, LabelId)>,
    ) -> Result<Self, GraphError> {
        let id = id.into();
        if vertex_labels.len() != vertex_count {
            return Err(GraphError::VertexLabelMismatch {
                graph: id,
                expected: vertex_count,
                got: vertex_labels.len(),
            });
        }
        let mut seen = HashSet::with_capacity(edges.len());
        for &(src, dst, _) in &edges {
            if src >= vertex_count || dst >= vertex_count {
                return Err(GraphError::VertexOutOfRange {
                    graph: id,
                    src,
                    dst,
                    vertex_count,
                });
            }
            if src == dst {
                return Err(GraphError::SelfLoop {
                    graph: id,
                    vertex: src,
                });
            }
            if !seen.insert((src, dst)) {
                return Err(GraphError::DuplicateEdge {
                    graph: id,
                    src,
                    dst,
                });
            }
        }
        Ok(Graph {
            id,
            vertex_count,
            vertex_labels,
            edges,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_labels(&self) -> &[LabelId] {
        &self.vertex_labels
    }

    /// Edges as `(src, dst, label)` triples in insertion order.
    pub fn edges(&self) -> &[(usize, usize, LabelId)] {
        &self.edges
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Copy with every vertex and edge label set to 0.
    pub fn stripped(&self) -> Graph {
        Graph {
            id: self.id.clone(),
            vertex_count: self.vertex_count,
            vertex_labels: vec![0; self.vertex_count],
            edges: self.edges.iter().map(|&(s, d, _)| (s, d, 0)).collect(),
        }
    }

    /// Relabels vertices through `perm` (old index -> new index).
    ///
    /// Panics if `perm` is not a permutation of `0..vertex_count`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        assert_eq!(perm.len(), self.vertex_count, "permutation length mismatch");
        let mut labels = vec![0; self.vertex_count];
        for (old, &new) in perm.iter().enumerate() {
            labels[new] = self.vertex_labels[old];
        }
        let edges = self
            .edges
            .iter()
            .map(|&(s, d, l)| (perm[s], perm[d], l))
            .collect();
        Graph {
            id: self.id.clone(),
            vertex_count: self.vertex_count,
            vertex_labels: labels,
            edges,
        }
    }

    /// Number of distinct vertex labels present.
    pub fn distinct_vertex_labels(&self) -> usize {
        self.vertex_labels.iter().collect::<HashSet<_>>().len()
    }

    /// Number of distinct edge labels present.
    pub fn distinct_edge_labels(&self) -> usize {
        self.edges.iter().map(|&(_, _, l)| l).collect::<HashSet<_>>().len()
    }

    pub fn max_vertex_label(&self) -> Option<LabelId> {
        self.vertex_labels.iter().copied().max()
    }

    pub fn max_edge_label(&self) -> Option<LabelId> {
        self.edges.iter().map(|&(_, _, l)| l).max()
    }
}

/// Adds the reverse of every edge, carrying the same label. Idempotent.
///
/// A pre-existing reverse edge with a different label is a conflict.
pub fn to_bidirected(g: &Graph) -> Result<Graph, GraphError> {
    let mut labels: HashMap<(usize, usize), LabelId> = HashMap::with_capacity(g.edges.len());
    for &(s, d, l) in &g.edges {
        labels.insert((s, d), l);
    }
    for &(s, d, l) in &g.edges {
        if let Some(&back) = labels.get(&(d, s)) {
            if back != l {
                return Err(GraphError::ReverseLabelConflict {
                    graph: g.id.clone(),
                    u: s,
                    v: d,
                    forward: l,
                    backward: back,
                });
            }
        }
    }
    let mut edges = g.edges.clone();
    for &(s, d, l) in &g.edges {
        if !labels.contains_key(&(d, s)) {
            edges.push((d, s, l));
        }
    }
    Graph::new(g.id.clone(), g.vertex_count, g.vertex_labels.clone(), edges)
}

/// Directed adjacency lists with O(1) labeled edge lookup.
#[derive(Debug, Clone)]
pub struct Adjacency {
    out: Vec<Vec<(usize, LabelId)>>,
    inn: Vec<Vec<(usize, LabelId)>>,
    labels: HashMap<(usize, usize), LabelId>,
}

impl Adjacency {
    pub fn new(g: &Graph) -> Self {
        let n = g.vertex_count();
        let mut out = vec![Vec::new(); n];
        let mut inn = vec![Vec::new(); n];
        let mut labels = HashMap::with_capacity(g.edge_count());
        for &(s, d, l) in g.edges() {
            out[s].push((d, l));
            inn[d].push((s, l));
            labels.insert((s, d), l);
        }
        Adjacency { out, inn, labels }
    }

    pub fn out_neighbors(&self, v: usize) -> &[(usize, LabelId)] {
        &self.out[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[(usize, LabelId)] {
        &self.inn[v]
    }

    pub fn edge_label(&self, src: usize, dst: usize) -> Option<LabelId> {
        self.labels.get(&(src, dst)).copied()
    }

    /// In-degree plus out-degree.
    pub fn degree(&self, v: usize) -> usize {
        self.out[v].len() + self.inn[v].len()
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate graph id {0:?}")]
    DuplicateGraphId(String),
    #[error("split {split:?} references unknown graph id {id:?}")]
    UnknownSplitMember { split: String, id: String },
    #[error("graph id {id:?} appears in splits {first:?} and {second:?}")]
    OverlappingSplits {
        id: String,
        first: String,
        second: String,
    },
}

/// An ordered collection of graphs plus optional named, disjoint splits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    graphs: Vec<Graph>,
    splits: BTreeMap<String, Vec<String>>,
    index: HashMap<String, usize>,
    vertex_label_count: u32,
    edge_label_count: u32,
}

impl Dataset {
    pub fn new(
        graphs: Vec<Graph>,
        splits: BTreeMap<String, Vec<String>>,
    ) -> Result<Self, DatasetError> {
        let mut index = HashMap::with_capacity(graphs.len());
        for (pos, g) in graphs.iter().enumerate() {
            if index.insert(g.id().to_string(), pos).is_some() {
                return Err(DatasetError::DuplicateGraphId(g.id().to_string()));
            }
        }
        let mut owner: HashMap<&str, &str> = HashMap::new();
        for (name, members) in &splits {
            for id in members {
                if !index.contains_key(id) {
                    return Err(DatasetError::UnknownSplitMember {
                        split: name.clone(),
                        id: id.clone(),
                    });
                }
                if let Some(first) = owner.insert(id, name) {
                    return Err(DatasetError::OverlappingSplits {
                        id: id.clone(),
                        first: first.to_string(),
                        second: name.clone(),
                    });
                }
            }
        }
        let vertex_label_count = graphs
            .iter()
            .filter_map(Graph::max_vertex_label)
            .max()
            .map_or(0, |m| m + 1);
        let edge_label_count = graphs
            .iter()
            .filter_map(Graph::max_edge_label)
            .max()
            .map_or(0, |m| m + 1);
        Ok(Dataset {
            graphs,
            splits,
            index,
            vertex_label_count,
            edge_label_count,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Graph> {
        self.index.get(id).map(|&pos| &self.graphs[pos])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Vec<String>> {
        &self.splits
    }

    pub fn split(&self, name: &str) -> Option<&[String]> {
        self.splits.get(name).map(Vec::as_slice)
    }

    /// Dataset positions of the graphs in a split, in split order.
    pub fn split_positions(&self, name: &str) -> Option<Vec<usize>> {
        self.splits
            .get(name)
            .map(|ids| ids.iter().map(|id| self.index[id]).collect())
    }

    /// Size of the vertex label alphabet (max label id + 1).
    pub fn vertex_label_count(&self) -> u32 {
        self.vertex_label_count
    }

    /// Size of the edge label alphabet (max label id + 1).
    pub fn edge_label_count(&self) -> u32 {
        self.edge_label_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> Graph {
        Graph::new("t", 3, vec![0, 0, 0], vec![(0, 1, 0), (1, 2, 0), (2, 0, 0)]).unwrap()
    }

    #[test]
    fn rejects_out_of_range_edge() {
        let err = Graph::new("g", 3, vec![0; 3], vec![(0, 5, 0)]).unwrap_err();
        assert!(matches!(err, GraphError::VertexOutOfRange { dst: 5, .. }));
    }

    #[test]
    fn rejects_self_loop_and_duplicate() {
        assert!(matches!(
            Graph::new("g", 2, vec![0; 2], vec![(1, 1, 0)]).unwrap_err(),
            GraphError::SelfLoop { vertex: 1, .. }
        ));
        assert!(matches!(
            Graph::new("g", 2, vec![0; 2], vec![(0, 1, 0), (0, 1, 1)]).unwrap_err(),
            GraphError::DuplicateEdge { .. }
        ));
    }

    #[test]
    fn rejects_label_length_mismatch() {
        assert!(matches!(
            Graph::new("g", 3, vec![0; 2], vec![]).unwrap_err(),
            GraphError::VertexLabelMismatch { expected: 3, got: 2, .. }
        ));
    }

    #[test]
    fn bidirected_doubles_a_triangle() {
        let b = to_bidirected(&triangle()).unwrap();
        assert_eq!(b.edge_count(), 6);
    }

    #[test]
    fn bidirected_is_idempotent() {
        let once = to_bidirected(&triangle()).unwrap();
        let twice = to_bidirected(&once).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn bidirected_detects_label_conflict() {
        let g = Graph::new("g", 2, vec![0; 2], vec![(0, 1, 1), (1, 0, 2)]).unwrap();
        assert!(matches!(
            to_bidirected(&g).unwrap_err(),
            GraphError::ReverseLabelConflict { .. }
        ));
    }

    #[test]
    fn dataset_validates_splits() {
        let mut splits = BTreeMap::new();
        splits.insert("train".to_string(), vec!["t".to_string()]);
        splits.insert("test".to_string(), vec!["t".to_string()]);
        let err = Dataset::new(vec![triangle()], splits).unwrap_err();
        assert!(matches!(err, DatasetError::OverlappingSplits { .. }));

        let mut splits = BTreeMap::new();
        splits.insert("train".to_string(), vec!["nope".to_string()]);
        let err = Dataset::new(vec![triangle()], splits).unwrap_err();
        assert!(matches!(err, DatasetError::UnknownSplitMember { .. }));
    }

    #[test]
    fn label_counts_are_derived() {
        let g = Graph::new("g", 2, vec![0, 3], vec![(0, 1, 2)]).unwrap();
        let d = Dataset::new(vec![g], BTreeMap::new()).unwrap();
        assert_eq!(d.vertex_label_count(), 4);
        assert_eq!(d.edge_label_count(), 3);
    }
}
