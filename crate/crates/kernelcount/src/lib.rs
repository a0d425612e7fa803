//! Approximate subgraph isomorphism counting with graph kernels.
//!
//! The toolkit builds exact ground-truth counts with a backtracking
//! matcher, extracts WL-family and classic kernel features as sparse
//! color histograms, assembles joint Gram matrices over patterns and
//! graphs with polynomial/Gaussian kernel tricks, and fits closed-form
//! kernel ridge regressors that predict counts from kernel values.
//!
//! - [`graph`], [`patterns`], [`generate`], [`dataset_io`]: the data
//!   model, synthetic generators, and file formats.
//! - [`counting`]: exact edge-induced subgraph isomorphism counting and
//!   benchmark ground-truth construction.
//! - [`interner`], [`wl`], [`classic`]: color interning and the WL,
//!   NIE-WL, k-WL, shortest-path, and graphlet featurizers.
//! - [`gram`]: joint Gram assembly, slicing, and kernel tricks.
//! - [`regression`]: kernel ridge regression, grid search, metrics, and
//!   baselines.
//! - [`pipeline`]: the end-to-end benchmark runner behind the CLI.

pub mod classic;
pub mod counting;
pub mod dataset_io;
pub mod generate;
pub mod graph;
pub mod gram;
pub mod interner;
pub mod patterns;
pub mod pipeline;
pub mod regression;
pub mod wl;

pub use counting::{brute_force_count, build_ground_truth, vf2_count, CountTable};
pub use graph::{to_bidirected, Dataset, Graph};
pub use interner::ColorInterner;
pub use patterns::{enumerate_labeled_patterns, Pattern, Skeleton};
pub use wl::{dot_kernel, FeatureKind, FeatureVector};
