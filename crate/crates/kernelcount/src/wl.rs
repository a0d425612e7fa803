//! Weisfeiler-Leman featurizers and the histogram dot-product kernel.
//!
//! Three color-refinement featurizers produce iteration-stamped sparse
//! histograms: plain WL over vertices, the neighborhood-aware variant
//! that additionally records one pairwise color per directed edge per
//! iteration, and k-WL over ordered vertex tuples. Stamps keep the
//! per-iteration blocks orthogonal, so the kernel between two graphs is
//! a single sparse dot product over the concatenated histograms.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::graph::{Adjacency, Graph};
use crate::interner::{ColorClass, ColorId, ColorInterner, ColorKey, Direction};

/// Which featurizer produced a vector. Vectors are only comparable
/// within one kind and one interner lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    Wl,
    NieWl,
    Kwl(u8),
    Sp,
    Gr3,
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureKind::Wl => f.write_str("wl"),
            FeatureKind::NieWl => f.write_str("nie-wl"),
            FeatureKind::Kwl(k) => write!(f, "{k}-wl"),
            FeatureKind::Sp => f.write_str("sp"),
            FeatureKind::Gr3 => f.write_str("gr3"),
        }
    }
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "wl" => Ok(FeatureKind::Wl),
            "nie-wl" => Ok(FeatureKind::NieWl),
            "2-wl" => Ok(FeatureKind::Kwl(2)),
            "3-wl" => Ok(FeatureKind::Kwl(3)),
            "sp" => Ok(FeatureKind::Sp),
            "gr3" => Ok(FeatureKind::Gr3),
            other => Err(format!(
                "unknown kernel kind {other:?} (expected wl, nie-wl, 2-wl, 3-wl, sp or gr3)"
            )),
        }
    }
}

impl Serialize for FeatureKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for FeatureKind {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("{vertices} vertices need {required} ordered {k}-tuples, exceeding the budget of {budget}")]
    TupleBudgetExceeded {
        vertices: usize,
        k: u8,
        required: u128,
        budget: u64,
    },
    #[error("unsupported tuple size {0} (only 2-WL and 3-WL are provided)")]
    UnsupportedTupleSize(u8),
    #[error("nie-wl needs at least one refinement iteration")]
    IterationsRequired,
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("cannot dot feature vectors of kinds {left} and {right}")]
    KindMismatch { left: FeatureKind, right: FeatureKind },
}

/// Sparse non-negative integer histogram over interned color ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub kind: FeatureKind,
    pub iterations: u32,
    pub entries: BTreeMap<ColorId, u64>,
}

impl FeatureVector {
    pub fn new(kind: FeatureKind, iterations: u32) -> Self {
        FeatureVector {
            kind,
            iterations,
            entries: BTreeMap::new(),
        }
    }

    pub(crate) fn bump(&mut self, id: ColorId) {
        *self.entries.entry(id).or_insert(0) += 1;
    }

    pub fn total_mass(&self) -> u64 {
        self.entries.values().sum()
    }

    /// Histogram mass carried by colors of one iteration stamp.
    pub fn mass_at_stamp(&self, interner: &ColorInterner, stamp: u32) -> u64 {
        self.entries
            .iter()
            .filter(|(&id, _)| interner.stamp(id) == stamp)
            .map(|(_, &c)| c)
            .sum()
    }

    /// Number of distinct colors at one iteration stamp.
    pub fn colors_at_stamp(&self, interner: &ColorInterner, stamp: u32) -> usize {
        self.entries
            .keys()
            .filter(|&&id| interner.stamp(id) == stamp)
            .count()
    }

    /// Splits a NIE-WL vector into its vertex-color part (kind `Wl`) and
    /// its pairwise-color part (kind `NieWl`).
    pub fn split_nie(&self, interner: &ColorInterner) -> (FeatureVector, FeatureVector) {
        let mut vertex = FeatureVector::new(FeatureKind::Wl, self.iterations);
        let mut pairwise = FeatureVector::new(FeatureKind::NieWl, self.iterations);
        for (&id, &count) in &self.entries {
            match interner.class(id) {
                ColorClass::Pairwise => {
                    pairwise.entries.insert(id, count);
                }
                _ => {
                    vertex.entries.insert(id, count);
                }
            }
        }
        (vertex, pairwise)
    }
}

/// Synchronous WL color refinement; returns the colors of every vertex
/// at every stamp 0..=t.
fn refine_vertex_colors(
    g: &Graph,
    adj: &Adjacency,
    t: u32,
    interner: &ColorInterner,
) -> Vec<Vec<ColorId>> {
    let n = g.vertex_count();
    let mut all: Vec<Vec<ColorId>> = Vec::with_capacity(t as usize + 1);
    let init = (0..n)
        .map(|v| interner.intern(0, ColorKey::VertexLabel(g.vertex_labels()[v])))
        .collect();
    all.push(init);
    for stamp in 1..=t {
        let prev = all.last().expect("at least the initial coloring");
        let next = (0..n)
            .map(|v| {
                let mut neighbors = Vec::with_capacity(adj.degree(v));
                for &(u, l) in adj.in_neighbors(v) {
                    neighbors.push((prev[u], l, Direction::In));
                }
                for &(w, l) in adj.out_neighbors(v) {
                    neighbors.push((prev[w], l, Direction::Out));
                }
                neighbors.sort_unstable();
                interner.intern(stamp, ColorKey::Refine { own: prev[v], neighbors })
            })
            .collect();
        all.push(next);
    }
    all
}

/// WL color histograms concatenated over iterations 0..=t. The initial
/// color of a vertex is its interned label.
pub fn wl_histograms(g: &Graph, t: u32, interner: &ColorInterner) -> FeatureVector {
    let adj = Adjacency::new(g);
    let colors = refine_vertex_colors(g, &adj, t, interner);
    let mut vector = FeatureVector::new(FeatureKind::Wl, t);
    for per_stamp in &colors {
        for &c in per_stamp {
            vector.bump(c);
        }
    }
    vector
}

/// Neighborhood-aware WL: the vertex-color part of [`wl_histograms`]
/// unchanged, plus one pairwise color per directed edge per iteration,
/// computed from the colors feeding that iteration's refinement.
pub fn nie_wl_histograms(g: &Graph, t: u32, interner: &ColorInterner) -> FeatureVector {
    assert!(t >= 1, "nie-wl needs at least one iteration");
    let adj = Adjacency::new(g);
    let colors = refine_vertex_colors(g, &adj, t, interner);
    let mut vector = FeatureVector::new(FeatureKind::NieWl, t);
    for per_stamp in &colors {
        for &c in per_stamp {
            vector.bump(c);
        }
    }
    for stamp in 1..=t {
        let prev = &colors[stamp as usize - 1];
        for &(u, v, l) in g.edges() {
            let message = interner.intern(stamp, ColorKey::EdgeMessage { tail: prev[u], label: l });
            let pairwise = interner.intern(
                stamp,
                ColorKey::PairColor {
                    head: prev[v],
                    message,
                },
            );
            vector.bump(pairwise);
        }
    }
    vector
}

fn tuple_digits(mut index: usize, n: usize, k: usize) -> [usize; 3] {
    let mut digits = [0usize; 3];
    for j in (0..k).rev() {
        digits[j] = index % n;
        index /= n;
    }
    digits
}

/// k-WL color histograms over all |V|^k ordered tuples, stamps 0..=t.
///
/// Initial tuple colors are ordered isomorphism types: vertex labels in
/// tuple order, the k x k matrix of edge labels between positions, and
/// the equality pattern among entries. Each refinement step aggregates,
/// per position j, the colors of tuples differing only at j together
/// with the edge labels probed between the differing vertices.
pub fn kwl_histograms(
    g: &Graph,
    k: u8,
    t: u32,
    tuple_budget: u64,
    interner: &ColorInterner,
) -> Result<FeatureVector, FeaturizeError> {
    if !(k == 2 || k == 3) {
        return Err(FeaturizeError::UnsupportedTupleSize(k));
    }
    let n = g.vertex_count();
    let kk = k as usize;
    let required = (n as u128).pow(k as u32);
    if required > tuple_budget as u128 {
        return Err(FeaturizeError::TupleBudgetExceeded {
            vertices: n,
            k,
            required,
            budget: tuple_budget,
        });
    }
    let mut vector = FeatureVector::new(FeatureKind::Kwl(k), t);
    if n == 0 {
        return Ok(vector);
    }
    let adj = Adjacency::new(g);
    let count = required as usize;
    let mut strides = [0usize; 3];
    for (j, stride) in strides.iter_mut().enumerate().take(kk) {
        *stride = n.pow((kk - 1 - j) as u32);
    }

    let mut colors: Vec<ColorId> = Vec::with_capacity(count);
    for index in 0..count {
        let digits = tuple_digits(index, n, kk);
        let labels = digits[..kk].iter().map(|&v| g.vertex_labels()[v]).collect();
        let mut equal = Vec::with_capacity(kk * kk);
        let mut edges = Vec::with_capacity(kk * kk);
        for i in 0..kk {
            for j in 0..kk {
                equal.push(digits[i] == digits[j]);
                edges.push(if i == j {
                    None
                } else {
                    adj.edge_label(digits[i], digits[j])
                });
            }
        }
        colors.push(interner.intern(0, ColorKey::TupleType { labels, equal, edges }));
    }
    for &c in &colors {
        vector.bump(c);
    }

    for stamp in 1..=t {
        let mut next = Vec::with_capacity(count);
        for index in 0..count {
            let digits = tuple_digits(index, n, kk);
            let mut neighbors = Vec::with_capacity(kk * (n - 1));
            for j in 0..kk {
                let base = index - digits[j] * strides[j];
                for w in 0..n {
                    if w == digits[j] {
                        continue;
                    }
                    let message = interner.intern(
                        stamp,
                        ColorKey::TupleMessage {
                            other: colors[base + w * strides[j]],
                            forward: adj.edge_label(digits[j], w),
                            backward: adj.edge_label(w, digits[j]),
                        },
                    );
                    neighbors.push((j as u8, message));
                }
            }
            neighbors.sort_unstable();
            next.push(interner.intern(
                stamp,
                ColorKey::TupleRefine {
                    own: colors[index],
                    neighbors,
                },
            ));
        }
        for &c in &next {
            vector.bump(c);
        }
        colors = next;
    }
    Ok(vector)
}

/// Exact integer inner product of two histograms of the same kind.
pub fn dot_kernel_exact(a: &FeatureVector, b: &FeatureVector) -> Result<u128, KernelError> {
    if a.kind != b.kind {
        return Err(KernelError::KindMismatch {
            left: a.kind,
            right: b.kind,
        });
    }
    let (small, large) = if a.entries.len() <= b.entries.len() {
        (a, b)
    } else {
        (b, a)
    };
    let mut sum: u128 = 0;
    for (id, &ca) in &small.entries {
        if let Some(&cb) = large.entries.get(id) {
            sum += ca as u128 * cb as u128;
        }
    }
    Ok(sum)
}

/// The histogram dot-product kernel as a 64-bit float.
pub fn dot_kernel(a: &FeatureVector, b: &FeatureVector) -> Result<f64, KernelError> {
    dot_kernel_exact(a, b).map(|v| v as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::to_bidirected;
    use proptest::prelude::*;

    fn bidirected_cycle(n: usize, id: &str) -> Graph {
        let edges = (0..n).map(|i| (i, (i + 1) % n, 0)).collect();
        let g = Graph::new(id, n, vec![0; n], edges).unwrap();
        to_bidirected(&g).unwrap()
    }

    fn two_triangles() -> Graph {
        let mut edges = Vec::new();
        for base in [0, 3] {
            for i in 0..3 {
                edges.push((base + i, base + (i + 1) % 3, 0));
            }
        }
        to_bidirected(&Graph::new("2xk3", 6, vec![0; 6], edges).unwrap()).unwrap()
    }

    #[test]
    fn wl_at_t0_is_the_vertex_label_histogram() {
        let interner = ColorInterner::new();
        let g = Graph::new("g", 4, vec![0, 0, 1, 2], vec![(0, 2, 0)]).unwrap();
        let v = wl_histograms(&g, 0, &interner);
        assert_eq!(v.total_mass(), 4);
        assert_eq!(v.entries.len(), 3);
        assert_eq!(v.entries.values().copied().max(), Some(2));
    }

    #[test]
    fn isomorphic_graphs_share_histograms() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(5, "a");
        let perm = [3, 0, 4, 1, 2];
        let h = g.permuted(&perm).with_id("b");
        for t in 0..=3 {
            assert_eq!(wl_histograms(&g, t, &interner), wl_histograms(&h, t, &interner));
        }
    }

    #[test]
    fn wl_cannot_separate_two_triangles_from_six_cycle() {
        let interner = ColorInterner::new();
        let g1 = two_triangles();
        let g2 = bidirected_cycle(6, "c6");
        for t in [1, 2, 3] {
            assert_eq!(
                wl_histograms(&g1, t, &interner),
                wl_histograms(&g2, t, &interner),
                "t = {t}"
            );
        }
    }

    #[test]
    fn three_wl_separates_two_triangles_from_six_cycle() {
        let interner = ColorInterner::new();
        let g1 = two_triangles();
        let g2 = bidirected_cycle(6, "c6");
        let a = kwl_histograms(&g1, 3, 1, 2_000_000, &interner).unwrap();
        let b = kwl_histograms(&g2, 3, 1, 2_000_000, &interner).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn wl_mass_is_vertex_count_per_stamp() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(7, "c7");
        let v = wl_histograms(&g, 3, &interner);
        for stamp in 0..=3 {
            assert_eq!(v.mass_at_stamp(&interner, stamp), 7);
        }
    }

    #[test]
    fn refinement_never_merges_colors() {
        let interner = ColorInterner::new();
        let g = Graph::new(
            "g",
            6,
            vec![0; 6],
            vec![(0, 1, 0), (1, 0, 0), (1, 2, 0), (2, 1, 0), (2, 3, 0), (3, 2, 0), (3, 4, 0), (4, 3, 0), (4, 5, 0), (5, 4, 0)],
        )
        .unwrap();
        let v = wl_histograms(&g, 4, &interner);
        let mut previous = 0;
        for stamp in 0..=4 {
            let distinct = v.colors_at_stamp(&interner, stamp);
            assert!(distinct >= previous, "stamp {stamp}");
            previous = distinct;
        }
    }

    #[test]
    fn nie_vertex_part_matches_plain_wl() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(5, "c5");
        let wl = wl_histograms(&g, 3, &interner);
        let nie = nie_wl_histograms(&g, 3, &interner);
        let (vertex, pairwise) = nie.split_nie(&interner);
        assert_eq!(vertex, wl);
        for stamp in 1..=3 {
            assert_eq!(pairwise.mass_at_stamp(&interner, stamp), g.edge_count() as u64);
        }
    }

    #[test]
    fn nie_on_edgeless_graph_reduces_to_wl() {
        let interner = ColorInterner::new();
        let g = Graph::new("iso", 4, vec![0, 1, 0, 1], vec![]).unwrap();
        let nie = nie_wl_histograms(&g, 2, &interner);
        let (vertex, pairwise) = nie.split_nie(&interner);
        assert!(pairwise.entries.is_empty());
        assert_eq!(vertex, wl_histograms(&g, 2, &interner));
    }

    #[test]
    fn nie_pairwise_mass_on_triangle_is_six() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(3, "k3");
        let nie = nie_wl_histograms(&g, 1, &interner);
        let (_, pairwise) = nie.split_nie(&interner);
        assert_eq!(pairwise.mass_at_stamp(&interner, 1), 6);
    }

    #[test]
    fn two_wl_on_triangle_has_diagonal_and_off_diagonal_types() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(3, "k3");
        let v = kwl_histograms(&g, 2, 0, 2_000_000, &interner).unwrap();
        assert_eq!(v.total_mass(), 9);
        let mut counts: Vec<u64> = v.entries.values().copied().collect();
        counts.sort_unstable();
        assert_eq!(counts, vec![3, 6]);
    }

    #[test]
    fn kwl_mass_is_tuple_count_per_stamp() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(4, "c4");
        let v = kwl_histograms(&g, 2, 2, 2_000_000, &interner).unwrap();
        for stamp in 0..=2 {
            assert_eq!(v.mass_at_stamp(&interner, stamp), 16);
        }
    }

    #[test]
    fn kwl_enforces_the_tuple_budget() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(50, "c50");
        assert!(kwl_histograms(&g, 3, 1, 1_000_000, &interner).is_ok());
        let err = kwl_histograms(&g, 3, 1, 10_000, &interner).unwrap_err();
        assert!(matches!(
            err,
            FeaturizeError::TupleBudgetExceeded { required: 125_000, .. }
        ));
    }

    #[test]
    fn dot_kernel_on_disjoint_supports_is_zero() {
        let interner = ColorInterner::new();
        let a = wl_histograms(&Graph::new("a", 2, vec![0, 0], vec![]).unwrap(), 0, &interner);
        let b = wl_histograms(&Graph::new("b", 2, vec![1, 1], vec![]).unwrap(), 0, &interner);
        assert_eq!(dot_kernel(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dot_kernel_with_self_is_squared_norm() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(5, "c5");
        let v = wl_histograms(&g, 2, &interner);
        let norm2: u128 = v.entries.values().map(|&c| c as u128 * c as u128).sum();
        assert_eq!(dot_kernel_exact(&v, &v).unwrap(), norm2);
    }

    #[test]
    fn dot_kernel_rejects_mixed_kinds() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(3, "k3");
        let a = wl_histograms(&g, 1, &interner);
        let b = nie_wl_histograms(&g, 1, &interner);
        assert!(matches!(
            dot_kernel(&a, &b).unwrap_err(),
            KernelError::KindMismatch { .. }
        ));
    }

    #[test]
    fn nie_kernel_decomposes_exactly() {
        let interner = ColorInterner::new();
        let g1 = two_triangles();
        let g2 = bidirected_cycle(6, "c6");
        let a = nie_wl_histograms(&g1, 3, &interner);
        let b = nie_wl_histograms(&g2, 3, &interner);
        let (av, ap) = a.split_nie(&interner);
        let (bv, bp) = b.split_nie(&interner);
        let full = dot_kernel_exact(&a, &b).unwrap();
        let vertex = dot_kernel_exact(&av, &bv).unwrap();
        let pairwise = dot_kernel_exact(&ap, &bp).unwrap();
        assert_eq!(full, vertex + pairwise);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn featurizers_are_permutation_invariant(
            n in 3usize..7,
            bits in proptest::collection::vec(proptest::bool::ANY, 7 * 7),
            vlabels in proptest::collection::vec(0u32..2, 7),
            rot in 1usize..6,
        ) {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in 0..n {
                    if u != v && bits[u * 7 + v] {
                        edges.push((u, v, 0));
                    }
                }
            }
            let g = Graph::new("g", n, vlabels[..n].to_vec(), edges).unwrap();
            let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
            let h = g.permuted(&perm);
            let interner = ColorInterner::new();
            prop_assert_eq!(wl_histograms(&g, 3, &interner), wl_histograms(&h, 3, &interner));
            prop_assert_eq!(
                nie_wl_histograms(&g, 2, &interner),
                nie_wl_histograms(&h, 2, &interner)
            );
            prop_assert_eq!(
                kwl_histograms(&g, 2, 1, 1 << 20, &interner).unwrap(),
                kwl_histograms(&h, 2, 1, 1 << 20, &interner).unwrap()
            );
        }
    }

    #[test]
    fn same_graph_same_interner_is_reproducible() {
        let interner = ColorInterner::new();
        let g = bidirected_cycle(6, "c6");
        assert_eq!(
            nie_wl_histograms(&g, 3, &interner),
            nie_wl_histograms(&g, 3, &interner)
        );
        assert_eq!(
            kwl_histograms(&g, 2, 2, 1 << 20, &interner).unwrap(),
            kwl_histograms(&g, 2, 2, 1 << 20, &interner).unwrap()
        );
    }
}
