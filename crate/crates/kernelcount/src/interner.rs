//! Injective interning of structured color keys into dense ids.
//!
//! Every featurizer funnels its color computations through one shared
//! interner so that histogram dimensions align across all graphs and
//! patterns of an experiment. Keys carry an iteration stamp, which keeps
//! per-iteration histogram blocks disjoint.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::graph::LabelId;

/// Dense color identifier assigned in interning order.
pub type ColorId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    In,
    Out,
}

/// Structured key for one color computation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ColorKey {
    /// Initial vertex color: the vertex label.
    VertexLabel(LabelId),
    /// Vertex refinement: own color plus the sorted multiset of
    /// (neighbor color, edge label, direction) contributions.
    Refine {
        own: ColorId,
        neighbors: Vec<(ColorId, LabelId, Direction)>,
    },
    /// Edge message feeding a pairwise color: (tail color, edge label).
    EdgeMessage { tail: ColorId, label: LabelId },
    /// Pairwise color recorded per directed edge: (head color, message).
    PairColor { head: ColorId, message: ColorId },
    /// Initial tuple color: the ordered isomorphism type of a k-tuple.
    TupleType {
        labels: Vec<LabelId>,
        equal: Vec<bool>,
        edges: Vec<Option<LabelId>>,
    },
    /// Tuple message: neighbor tuple color plus the labels probed between
    /// the differing vertices, in both directions.
    TupleMessage {
        other: ColorId,
        forward: Option<LabelId>,
        backward: Option<LabelId>,
    },
    /// Tuple refinement: own color plus position-tagged messages.
    TupleRefine {
        own: ColorId,
        neighbors: Vec<(u8, ColorId)>,
    },
    /// Shortest-path feature: endpoint labels and distance.
    PathProfile {
        src: LabelId,
        dst: LabelId,
        distance: u32,
    },
    /// Size-3 graphlet bin: wedge or triangle.
    Graphlet { triangle: bool },
}

/// Coarse family of a color, recoverable from its id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColorClass {
    Vertex,
    Pairwise,
    Message,
    Tuple,
    Path,
    Graphlet,
}

impl ColorKey {
    fn class(&self) -> ColorClass {
        match self {
            ColorKey::VertexLabel(_) | ColorKey::Refine { .. } => ColorClass::Vertex,
            ColorKey::PairColor { .. } => ColorClass::Pairwise,
            ColorKey::EdgeMessage { .. } | ColorKey::TupleMessage { .. } => ColorClass::Message,
            ColorKey::TupleType { .. } | ColorKey::TupleRefine { .. } => ColorClass::Tuple,
            ColorKey::PathProfile { .. } => ColorClass::Path,
            ColorKey::Graphlet { .. } => ColorClass::Graphlet,
        }
    }
}

#[derive(Default)]
struct InternerState {
    table: HashMap<(u32, ColorKey), ColorId>,
    info: Vec<(u32, ColorClass)>,
}

/// Thread-safe injective map from (iteration stamp, key) to dense ids.
///
/// Identical keys always receive the same id; distinct keys never share
/// one. Under concurrent interning ids stay consistent within a run;
/// featurize items in a fixed order when reproducible id assignment
/// across runs is required.
#[derive(Default)]
pub struct ColorInterner {
    state: Mutex<InternerState>,
}

impl ColorInterner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&self, stamp: u32, key: ColorKey) -> ColorId {
        let mut state = self.state.lock().expect("interner lock");
        if let Some(&id) = state.table.get(&(stamp, key.clone())) {
            return id;
        }
        let id = state.info.len() as ColorId;
        let class = key.class();
        state.table.insert((stamp, key), id);
        state.info.push((stamp, class));
        id
    }

    pub fn len(&self) -> usize {
        self.state.lock().expect("interner lock").info.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Iteration stamp the id was interned under.
    pub fn stamp(&self, id: ColorId) -> u32 {
        self.state.lock().expect("interner lock").info[id as usize].0
    }

    pub fn class(&self, id: ColorId) -> ColorClass {
        self.state.lock().expect("interner lock").info[id as usize].1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_keys_share_an_id() {
        let interner = ColorInterner::new();
        let a = interner.intern(0, ColorKey::VertexLabel(3));
        let b = interner.intern(0, ColorKey::VertexLabel(3));
        assert_eq!(a, b);
        assert_eq!(interner.len(), 1);
    }

    #[test]
    fn distinct_keys_and_stamps_get_fresh_ids() {
        let interner = ColorInterner::new();
        let a = interner.intern(0, ColorKey::VertexLabel(0));
        let b = interner.intern(1, ColorKey::VertexLabel(0));
        let c = interner.intern(0, ColorKey::VertexLabel(1));
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(b, c);
        assert_eq!(interner.stamp(b), 1);
        assert_eq!(interner.class(a), ColorClass::Vertex);
    }

    #[test]
    fn concurrent_interning_is_consistent() {
        let interner = ColorInterner::new();
        std::thread::scope(|scope| {
            for _ in 0..4 {
                scope.spawn(|| {
                    for l in 0..64 {
                        interner.intern(0, ColorKey::VertexLabel(l % 8));
                    }
                });
            }
        });
        assert_eq!(interner.len(), 8);
    }
}
