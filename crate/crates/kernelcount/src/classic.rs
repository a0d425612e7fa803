//! Shortest-path and size-3 graphlet featurizers.

use std::collections::{BTreeSet, VecDeque};

use crate::graph::{Adjacency, Graph};
use crate::interner::{ColorInterner, ColorKey};
use crate::wl::{FeatureKind, FeatureVector};

/// Shortest-path features: one count per ordered vertex pair (u, v),
/// u != v, at finite directed BFS distance, keyed by endpoint labels and
/// distance. Unreachable pairs contribute nothing.
pub fn shortest_path_features(g: &Graph, interner: &ColorInterner) -> FeatureVector {
    let n = g.vertex_count();
    let adj = Adjacency::new(g);
    let mut vector = FeatureVector::new(FeatureKind::Sp, 0);
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for src in 0..n {
        dist.iter_mut().for_each(|d| *d = u32::MAX);
        dist[src] = 0;
        queue.clear();
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &(v, _) in adj.out_neighbors(u) {
                if dist[v] == u32::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        for (v, &distance) in dist.iter().enumerate() {
            if v != src && distance != u32::MAX {
                let id = interner.intern(
                    0,
                    ColorKey::PathProfile {
                        src: g.vertex_labels()[src],
                        dst: g.vertex_labels()[v],
                        distance,
                    },
                );
                vector.bump(id);
            }
        }
    }
    vector
}

/// Wedge and triangle counts over the underlying undirected simple
/// graph, ignoring labels and orientation. Each connected 3-vertex
/// subset is classified exactly once: a triangle subset is not also
/// counted as wedges.
pub fn graphlet3_counts(g: &Graph) -> (u64, u64) {
    let n = g.vertex_count();
    let mut und: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for &(s, d, _) in g.edges() {
        und[s].insert(d);
        und[d].insert(s);
    }
    let mut triangles = 0u64;
    for u in 0..n {
        for &v in und[u].iter().filter(|&&v| v > u) {
            for &w in und[v].iter().filter(|&&w| w > v) {
                if und[u].contains(&w) {
                    triangles += 1;
                }
            }
        }
    }
    // Every center with two neighbors spans a wedge candidate; each
    // triangle closes three of them.
    let centered_pairs: u64 = und
        .iter()
        .map(|nb| {
            let d = nb.len() as u64;
            d * d.saturating_sub(1) / 2
        })
        .sum();
    let wedges = centered_pairs - 3 * triangles;
    (wedges, triangles)
}

/// The two-bin size-3 graphlet histogram.
pub fn graphlet3_features(g: &Graph, interner: &ColorInterner) -> FeatureVector {
    let (wedges, triangles) = graphlet3_counts(g);
    let mut vector = FeatureVector::new(FeatureKind::Gr3, 0);
    if wedges > 0 {
        let id = interner.intern(0, ColorKey::Graphlet { triangle: false });
        vector.entries.insert(id, wedges);
    }
    if triangles > 0 {
        let id = interner.intern(0, ColorKey::Graphlet { triangle: true });
        vector.entries.insert(id, triangles);
    }
    vector
}
