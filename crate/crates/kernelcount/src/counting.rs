//! Exact edge-induced subgraph isomorphism counting.
//!
//! [`vf2_count`] is a pruned backtracking matcher; [`brute_force_count`]
//! enumerates every injective map without pruning and serves as its
//! oracle. Both count injective maps f from pattern vertices to graph
//! vertices such that vertex labels match under f and every pattern edge
//! (u, v) has a graph edge (f(u), f(v)) with an equal label. Extra graph
//! edges among image vertices are allowed.

use rayon::prelude::*;
use std::collections::BTreeMap;
use thiserror::Error;

use crate::dataset_io::CountRecord;
use crate::graph::{Adjacency, Dataset, Graph};
use crate::patterns::{enumerate_labeled_patterns, Pattern, Skeleton};

#[derive(Debug, Error)]
pub enum CountError {
    #[error("graph has {vertices} vertices; brute force is capped at {max}")]
    GraphTooLarge { vertices: usize, max: usize },
}

/// Exact counts keyed by (pattern id, graph id).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CountTable {
    entries: BTreeMap<(String, String), u64>,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pattern_id: impl Into<String>, graph_id: impl Into<String>, count: u64) {
        self.entries.insert((pattern_id.into(), graph_id.into()), count);
    }

    pub fn get(&self, pattern_id: &str, graph_id: &str) -> Option<u64> {
        self.entries
            .get(&(pattern_id.to_string(), graph_id.to_string()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(String, String), &u64)> {
        self.entries.iter()
    }

    pub fn records(&self) -> Vec<CountRecord> {
        self.entries
            .iter()
            .map(|((pattern, graph), &count)| CountRecord {
                pattern: pattern.clone(),
                graph: graph.clone(),
                count,
            })
            .collect()
    }

    pub fn from_records(records: &[CountRecord]) -> Self {
        let mut table = Self::new();
        for r in records {
            table.insert(r.pattern.clone(), r.graph.clone(), r.count);
        }
        table
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Dir {
    Out,
    In,
}

struct Matcher<'a> {
    pattern: &'a Graph,
    graph: &'a Graph,
    g_adj: Adjacency,
    order: Vec<usize>,
    /// Per depth: edges between order[depth] and earlier positions,
    /// as (earlier position, label, direction from order[depth]).
    constraints: Vec<Vec<(usize, u32, Dir)>>,
    mapping: Vec<usize>,
    used: Vec<bool>,
    count: u64,
}

/// Pattern vertices ordered by descending degree, then connectivity to
/// the already-ordered prefix, with index as the final tie-break.
fn match_order(pattern: &Graph, adj: &Adjacency) -> Vec<usize> {
    let n = pattern.vertex_count();
    let mut chosen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for _ in 0..n {
        let mut best: Option<(usize, usize, usize)> = None; // (degree, connectivity, vertex)
        for v in 0..n {
            if chosen[v] {
                continue;
            }
            let degree = adj.degree(v);
            let connectivity = adj
                .out_neighbors(v)
                .iter()
                .chain(adj.in_neighbors(v))
                .filter(|&&(u, _)| chosen[u])
                .count();
            let better = match best {
                None => true,
                Some((bd, bc, bv)) => {
                    (degree, connectivity) > (bd, bc)
                        || ((degree, connectivity) == (bd, bc) && v < bv)
                }
            };
            if better {
                best = Some((degree, connectivity, v));
            }
        }
        let (_, _, v) = best.expect("an unchosen vertex remains");
        chosen[v] = true;
        order.push(v);
    }
    order
}

impl<'a> Matcher<'a> {
    fn new(pattern: &'a Graph, graph: &'a Graph) -> Self {
        let p_adj = Adjacency::new(pattern);
        let g_adj = Adjacency::new(graph);
        let order = match_order(pattern, &p_adj);
        let position: Vec<usize> = {
            let mut pos = vec![0; order.len()];
            for (i, &v) in order.iter().enumerate() {
                pos[v] = i;
            }
            pos
        };
        let mut constraints = vec![Vec::new(); order.len()];
        for (depth, &v) in order.iter().enumerate() {
            for &(w, l) in p_adj.out_neighbors(v) {
                if position[w] < depth {
                    constraints[depth].push((position[w], l, Dir::Out));
                }
            }
            for &(w, l) in p_adj.in_neighbors(v) {
                if position[w] < depth {
                    constraints[depth].push((position[w], l, Dir::In));
                }
            }
        }
        Matcher {
            pattern,
            graph,
            g_adj,
            order,
            constraints,
            mapping: vec![usize::MAX; pattern.vertex_count()],
            used: vec![false; graph.vertex_count()],
            count: 0,
        }
    }

    fn feasible(&self, depth: usize, candidate: usize) -> bool {
        let u = self.order[depth];
        if self.used[candidate]
            || self.pattern.vertex_labels()[u] != self.graph.vertex_labels()[candidate]
        {
            return false;
        }
        self.constraints[depth].iter().all(|&(pos, label, dir)| {
            let mapped = self.mapping[pos];
            let found = match dir {
                Dir::Out => self.g_adj.edge_label(candidate, mapped),
                Dir::In => self.g_adj.edge_label(mapped, candidate),
            };
            found == Some(label)
        })
    }

    fn search(&mut self, depth: usize) {
        if depth == self.order.len() {
            self.count += 1;
            return;
        }
        // Restrict candidates through the first mapped pattern neighbor;
        // fall back to all graph vertices for a disconnected start.
        if let Some(&(pos, _, dir)) = self.constraints[depth].first() {
            let anchor = self.mapping[pos];
            let candidates: Vec<usize> = match dir {
                Dir::Out => self.g_adj.in_neighbors(anchor).iter().map(|&(v, _)| v).collect(),
                Dir::In => self.g_adj.out_neighbors(anchor).iter().map(|&(v, _)| v).collect(),
            };
            for v in candidates {
                if self.feasible(depth, v) {
                    self.advance(depth, v);
                }
            }
        } else {
            for v in 0..self.graph.vertex_count() {
                if self.feasible(depth, v) {
                    self.advance(depth, v);
                }
            }
        }
    }

    fn advance(&mut self, depth: usize, v: usize) {
        self.mapping[depth] = v;
        self.used[v] = true;
        self.search(depth + 1);
        self.used[v] = false;
        self.mapping[depth] = usize::MAX;
    }

    fn run(mut self) -> u64 {
        self.search(0);
        self.count
    }
}

/// Number of edge-induced subgraph isomorphisms from `pattern` into
/// `graph`. Counts all embeddings; automorphic images count separately.
pub fn vf2_count(pattern: &Graph, graph: &Graph) -> u64 {
    if pattern.vertex_count() > graph.vertex_count() {
        return 0;
    }
    if pattern.vertex_count() == 0 {
        return 1;
    }
    Matcher::new(pattern, graph).run()
}

const BRUTE_FORCE_MAX: usize = 12;

/// Same contract as [`vf2_count`], by unpruned enumeration of every
/// injective map. Only for graphs with at most 12 vertices.
pub fn brute_force_count(pattern: &Graph, graph: &Graph) -> Result<u64, CountError> {
    let n = graph.vertex_count();
    if n > BRUTE_FORCE_MAX {
        return Err(CountError::GraphTooLarge {
            vertices: n,
            max: BRUTE_FORCE_MAX,
        });
    }
    let k = pattern.vertex_count();
    if k > n {
        return Ok(0);
    }
    let g_adj = Adjacency::new(graph);
    let mut assignment = vec![0usize; k];
    let mut used = vec![false; n];
    let mut count = 0u64;
    enumerate_injections(pattern, graph, &g_adj, 0, &mut assignment, &mut used, &mut count);
    Ok(count)
}

fn enumerate_injections(
    pattern: &Graph,
    graph: &Graph,
    g_adj: &Adjacency,
    next: usize,
    assignment: &mut Vec<usize>,
    used: &mut Vec<bool>,
    count: &mut u64,
) {
    if next == pattern.vertex_count() {
        let labels_ok = (0..pattern.vertex_count())
            .all(|v| pattern.vertex_labels()[v] == graph.vertex_labels()[assignment[v]]);
        let edges_ok = pattern
            .edges()
            .iter()
            .all(|&(s, d, l)| g_adj.edge_label(assignment[s], assignment[d]) == Some(l));
        if labels_ok && edges_ok {
            *count += 1;
        }
        return;
    }
    for v in 0..graph.vertex_count() {
        if !used[v] {
            used[v] = true;
            assignment[next] = v;
            enumerate_injections(pattern, graph, g_adj, next + 1, assignment, used, count);
            used[v] = false;
        }
    }
}

/// Output of the benchmarking-data construction: the retained labeled
/// patterns and their exact counts over the dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub patterns: Vec<Pattern>,
    pub table: CountTable,
}

fn ceil_mean(values: impl Iterator<Item = usize>, total: usize) -> u32 {
    if total == 0 {
        return 1;
    }
    let sum: usize = values.sum();
    ((sum as f64 / total as f64).ceil() as u32).max(1)
}

/// Builds ground truth per skeleton: the homogeneous skeleton is counted
/// on label-stripped graphs first, and only if its average count per
/// graph exceeds 1.0 are labeled variants enumerated (over the ceiling
/// of the mean per-graph label alphabet sizes) and retained when their
/// own average count exceeds 1.0.
pub fn build_ground_truth(dataset: &Dataset, skeletons: &[Skeleton]) -> GroundTruth {
    let d = dataset.len();
    let mut patterns = Vec::new();
    let mut table = CountTable::new();
    if d == 0 {
        return GroundTruth { patterns, table };
    }
    let stripped: Vec<Graph> = dataset.graphs().iter().map(Graph::stripped).collect();
    let x_max = ceil_mean(dataset.graphs().iter().map(Graph::distinct_vertex_labels), d);
    let y_max = ceil_mean(dataset.graphs().iter().map(Graph::distinct_edge_labels), d);
    for &skeleton in skeletons {
        let homogeneous = Pattern::homogeneous(skeleton);
        let total: u64 = stripped
            .par_iter()
            .map(|g| vf2_count(homogeneous.graph(), g))
            .sum();
        if total as f64 / d as f64 <= 1.0 {
            continue;
        }
        for pattern in enumerate_labeled_patterns(skeleton, x_max, y_max) {
            let counts: Vec<u64> = dataset
                .graphs()
                .par_iter()
                .map(|g| vf2_count(pattern.graph(), g))
                .collect();
            let total: u64 = counts.iter().sum();
            if total as f64 / d as f64 > 1.0 {
                for (g, &c) in dataset.graphs().iter().zip(&counts) {
                    table.insert(pattern.id(), g.id(), c);
                }
                patterns.push(pattern);
            }
        }
    }
    GroundTruth { patterns, table }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::to_bidirected;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn directed_cycle(n: usize) -> Graph {
        let edges = (0..n).map(|i| (i, (i + 1) % n, 0)).collect();
        Graph::new(format!("c{n}"), n, vec![0; n], edges).unwrap()
    }

    fn bidirected_complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in 0..n {
                if u != v {
                    edges.push((u, v, 0));
                }
            }
        }
        Graph::new(format!("k{n}"), n, vec![0; n], edges).unwrap()
    }

    #[test]
    fn directed_cycle_into_itself_counts_rotations() {
        let c3 = directed_cycle(3);
        assert_eq!(vf2_count(&c3, &c3), 3);
        assert_eq!(brute_force_count(&c3, &c3).unwrap(), 3);
    }

    #[test]
    fn directed_cycle_into_bidirected_triangle_counts_all_bijections() {
        let c3 = directed_cycle(3);
        let k3 = bidirected_complete(3);
        assert_eq!(vf2_count(&c3, &k3), 6);
        assert_eq!(brute_force_count(&c3, &k3).unwrap(), 6);
    }

    #[test]
    fn triangle_absent_from_four_cycle() {
        let triangle = Pattern::homogeneous(Skeleton::Triangle);
        let c4 = to_bidirected(&directed_cycle(4)).unwrap();
        assert_eq!(vf2_count(triangle.graph(), &c4), 0);
    }

    #[test]
    fn edgeless_pattern_counts_label_matched_injections() {
        let isolated = Graph::new("iso", 3, vec![0; 3], vec![]).unwrap();
        let k3 = bidirected_complete(3);
        assert_eq!(brute_force_count(&isolated, &k3).unwrap(), 6);
        assert_eq!(vf2_count(&isolated, &k3), 6);
    }

    #[test]
    fn three_star_into_k4() {
        let star = Pattern::homogeneous(Skeleton::ThreeStar);
        let k4 = bidirected_complete(4);
        assert_eq!(brute_force_count(star.graph(), &k4).unwrap(), 24);
        assert_eq!(vf2_count(star.graph(), &k4), 24);
    }

    #[test]
    fn brute_force_rejects_large_graphs() {
        let big = bidirected_complete(13);
        let triangle = Pattern::homogeneous(Skeleton::Triangle);
        assert!(matches!(
            brute_force_count(triangle.graph(), &big).unwrap_err(),
            CountError::GraphTooLarge { vertices: 13, .. }
        ));
    }

    #[test]
    fn vertex_labels_constrain_matches() {
        let p = Graph::new("p", 2, vec![0, 1], vec![(0, 1, 0)]).unwrap();
        let g = Graph::new("g", 3, vec![0, 1, 1], vec![(0, 1, 0), (0, 2, 0), (1, 2, 0)]).unwrap();
        assert_eq!(vf2_count(&p, &g), 2);
        assert_eq!(brute_force_count(&p, &g).unwrap(), 2);
    }

    #[test]
    fn edge_labels_constrain_matches() {
        let p = Graph::new("p", 2, vec![0, 0], vec![(0, 1, 1)]).unwrap();
        let g = Graph::new("g", 3, vec![0; 3], vec![(0, 1, 1), (1, 2, 0)]).unwrap();
        assert_eq!(vf2_count(&p, &g), 1);
    }

    fn graph_from_bits(n: usize, vlabels: &[u32], ebits: &[(usize, usize, bool, u32)]) -> Graph {
        let labels = vlabels.to_vec();
        let edges = ebits
            .iter()
            .filter(|&&(_, _, on, _)| on)
            .map(|&(u, v, _, l)| (u, v, l))
            .collect();
        Graph::new("g", n, labels, edges).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn vf2_matches_brute_force(
            n in 3usize..8,
            seed_bits in proptest::collection::vec(proptest::bool::ANY, 8 * 8),
            vlabels in proptest::collection::vec(0u32..2, 8),
            elabels in proptest::collection::vec(0u32..2, 8 * 8),
            skeleton_idx in 0usize..4,
            variant in 0usize..4,
        ) {
            let ebits: Vec<_> = (0..n)
                .flat_map(|u| (0..n).map(move |v| (u, v)))
                .filter(|&(u, v)| u != v)
                .map(|(u, v)| (u, v, seed_bits[u * 8 + v], elabels[u * 8 + v]))
                .collect();
            let g = graph_from_bits(n, &vlabels[..n], &ebits);
            let skeleton = Skeleton::ALL[skeleton_idx];
            let variants = enumerate_labeled_patterns(skeleton, 2, 2);
            let pattern = &variants[variant * variants.len() / 4];
            prop_assert_eq!(
                vf2_count(pattern.graph(), &g),
                brute_force_count(pattern.graph(), &g).unwrap()
            );
        }

        #[test]
        fn count_is_permutation_invariant(
            seed_bits in proptest::collection::vec(proptest::bool::ANY, 6 * 6),
            rot in 0usize..6,
        ) {
            let n = 6;
            let ebits: Vec<_> = (0..n)
                .flat_map(|u| (0..n).map(move |v| (u, v)))
                .filter(|&(u, v)| u != v)
                .map(|(u, v)| (u, v, seed_bits[u * 6 + v], 0))
                .collect();
            let g = graph_from_bits(n, &vec![0; n], &ebits);
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let permuted = g.permuted(&perm);
            for skeleton in Skeleton::ALL {
                let p = Pattern::homogeneous(skeleton);
                prop_assert_eq!(vf2_count(p.graph(), &g), vf2_count(p.graph(), &permuted));
            }
        }

        #[test]
        fn adding_an_edge_never_decreases_counts(
            seed_bits in proptest::collection::vec(proptest::bool::ANY, 6 * 6),
        ) {
            let n = 6;
            let all_pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (0..n).map(move |v| (u, v)))
                .filter(|&(u, v)| u != v)
                .collect();
            let present: Vec<(usize, usize)> = all_pairs
                .iter()
                .copied()
                .filter(|&(u, v)| seed_bits[u * 6 + v])
                .collect();
            let absent = all_pairs.iter().copied().find(|&(u, v)| !seed_bits[u * 6 + v]);
            prop_assume!(absent.is_some());
            let (au, av) = absent.unwrap();
            let edges: Vec<_> = present.iter().map(|&(u, v)| (u, v, 0)).collect();
            let mut grown = edges.clone();
            grown.push((au, av, 0));
            let g = Graph::new("g", n, vec![0; n], edges).unwrap();
            let g2 = Graph::new("g2", n, vec![0; n], grown).unwrap();
            for skeleton in Skeleton::ALL {
                let p = Pattern::homogeneous(skeleton);
                prop_assert!(vf2_count(p.graph(), &g2) >= vf2_count(p.graph(), &g));
            }
        }

        #[test]
        fn stripping_labels_never_decreases_counts(
            seed_bits in proptest::collection::vec(proptest::bool::ANY, 5 * 5),
            vlabels in proptest::collection::vec(0u32..2, 5),
        ) {
            let n = 5;
            let ebits: Vec<_> = (0..n)
                .flat_map(|u| (0..n).map(move |v| (u, v)))
                .filter(|&(u, v)| u != v)
                .map(|(u, v)| (u, v, seed_bits[u * 5 + v], 0))
                .collect();
            let g = graph_from_bits(n, &vlabels, &ebits);
            for skeleton in [Skeleton::Triangle, Skeleton::ThreeStar] {
                let labeled = &enumerate_labeled_patterns(skeleton, 2, 1)[1];
                let stripped_pattern = labeled.graph().stripped();
                prop_assert!(
                    vf2_count(&stripped_pattern, &g.stripped())
                        >= vf2_count(labeled.graph(), &g)
                );
            }
        }
    }

    fn dataset_of(graphs: Vec<Graph>) -> Dataset {
        Dataset::new(graphs, BTreeMap::new()).unwrap()
    }

    #[test]
    fn ground_truth_retains_triangles_on_triangle_corpus() {
        let triangles: Vec<Graph> = (0..3)
            .map(|i| to_bidirected(&directed_cycle(3)).unwrap().with_id(format!("t{i}")))
            .collect();
        let gt = build_ground_truth(&dataset_of(triangles), &[Skeleton::Triangle]);
        assert_eq!(gt.patterns.len(), 1);
        for i in 0..3 {
            assert_eq!(gt.table.get(gt.patterns[0].id(), &format!("t{i}")), Some(6));
        }
    }

    #[test]
    fn ground_truth_stops_when_homogeneous_average_is_low() {
        let paths: Vec<Graph> = (0..3)
            .map(|i| {
                Graph::new(
                    format!("p{i}"),
                    3,
                    vec![0; 3],
                    vec![(0, 1, 0), (1, 0, 0), (1, 2, 0), (2, 1, 0)],
                )
                .unwrap()
            })
            .collect();
        let gt = build_ground_truth(&dataset_of(paths), &[Skeleton::Triangle]);
        assert!(gt.patterns.is_empty());
        assert!(gt.table.is_empty());
    }

    #[test]
    fn ground_truth_filters_rare_labeled_variants() {
        // Two bidirected triangles; one carries a single 1-labeled vertex.
        // Mean vertex alphabet = ceil(1.5) = 2, so 8 variants are tried.
        // Variant (0,0,0) averages 3 and is kept; every variant with a
        // 1-label averages at most 1.0 and is filtered.
        let t1 = {
            let g = to_bidirected(&directed_cycle(3)).unwrap().with_id("t1");
            Graph::new("t1", 3, vec![0, 0, 1], g.edges().to_vec()).unwrap()
        };
        let t2 = to_bidirected(&directed_cycle(3)).unwrap().with_id("t2");
        let gt = build_ground_truth(&dataset_of(vec![t1, t2]), &[Skeleton::Triangle]);
        assert_eq!(gt.patterns.len(), 1);
        assert_eq!(gt.patterns[0].id(), "triangle~v0.0.0~e0.0.0");
        assert_eq!(gt.table.get(gt.patterns[0].id(), "t1"), Some(0));
        assert_eq!(gt.table.get(gt.patterns[0].id(), "t2"), Some(6));
    }
}
