//! End-to-end benchmark pipeline: dataset generation, ground-truth
//! counting, featurization, Gram assembly, training, and evaluation.
//!
//! Intermediate artifacts are cached in the output directory under
//! content-hashed file names, so reruns with an unchanged upstream
//! configuration reuse them. Per-cell resource and numeric failures are
//! recorded in the report and never abort the run; one `.lock` file
//! serializes pipelines per output directory. Progress goes to stderr,
//! machine-readable results to files.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::rc::Rc;
use thiserror::Error;

use crate::classic::{graphlet3_features, shortest_path_features};
use crate::counting::{build_ground_truth, vf2_count, CountTable};
use crate::dataset_io::{parse_counts, parse_dataset, serialize_counts, serialize_dataset};
use crate::generate::{generate_bidirected_erdos_renyi, generate_random_regular};
use crate::graph::{Dataset, Graph};
use crate::gram::{
    build_joint_gram, cosine_normalize, poly_transform, rbf_transform, read_gram,
    slice_pattern_view, write_gram, GramError, GramMatrix,
};
use crate::interner::ColorInterner;
use crate::patterns::{Pattern, Skeleton};
use crate::regression::{
    baseline_predict, grid_search, metrics, ridge_predict_batch, BaselineKind, BaselineRow,
    BuildFailure, CellStatus, DatasetSummary, EvalReport, GridRanges, GridSearchError, Metrics,
    PatternDesigns, PatternOutcome, ReportCell, RidgeModel, TrickConfig,
};
use crate::wl::{
    kwl_histograms, nie_wl_histograms, wl_histograms, FeatureKind, FeatureVector, FeaturizeError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("output directory {0} is locked by another run (.lock present)")]
    Locked(PathBuf),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Parse(#[from] crate::dataset_io::DatasetParseError),
    #[error(transparent)]
    Dataset(#[from] crate::graph::DatasetError),
    #[error(transparent)]
    Graph(#[from] crate::graph::GraphError),
    #[error(transparent)]
    Generate(#[from] crate::generate::GenerateError),
    #[error(transparent)]
    Pattern(#[from] crate::patterns::PatternError),
    #[error(transparent)]
    Gram(#[from] GramError),
    #[error(transparent)]
    GramIo(#[from] crate::gram::GramIoError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("dataset has no {0:?} split")]
    MissingSplit(String),
    #[error("no count for pattern {pattern:?} on graph {graph:?}")]
    MissingCount { pattern: String, graph: String },
    #[error("gram matrix has no row for {0:?}")]
    MissingGramRow(String),
}

fn log(msg: &str) {
    eprintln!("[kernelcount] {msg}");
}

/// Where the benchmark graphs come from. Synthetic benchmark graphs are
/// undirected and stored as bidirected lifts, so one directed data model
/// serves counting and featurization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Undirected G(n, p) graphs as bidirected lifts, split sizes in
    /// dataset order.
    ErdosRenyi {
        train: usize,
        valid: usize,
        test: usize,
        n: usize,
        p: f64,
    },
    /// Bidirected random regular graphs with n sampled per graph.
    Regular {
        train: usize,
        valid: usize,
        test: usize,
        n_min: usize,
        n_max: usize,
        degree: usize,
    },
    /// A dataset file in the JSON-lines format, with train/valid/test splits.
    File { path: PathBuf },
}

fn default_skeletons() -> Vec<Skeleton> {
    Skeleton::ALL.to_vec()
}

fn default_tricks() -> Vec<String> {
    vec!["linear".to_string()]
}

fn default_flag_axis() -> Vec<bool> {
    vec![false]
}

fn default_iterations() -> u32 {
    3
}

fn default_tuple_budget() -> u64 {
    2_000_000
}

fn default_seed() -> u64 {
    2023
}

/// Declarative description of one benchmark run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_skeletons")]
    pub skeletons: Vec<Skeleton>,
    /// Base kernels: wl, 2-wl, 3-wl, sp, gr3. The nie axis below turns
    /// wl cells into nie-wl cells.
    pub kernels: Vec<FeatureKind>,
    #[serde(default = "default_tricks")]
    pub tricks: Vec<String>,
    #[serde(default = "default_flag_axis")]
    pub normalization: Vec<bool>,
    #[serde(default = "default_flag_axis")]
    pub nie: Vec<bool>,
    #[serde(default = "default_iterations")]
    pub iterations: u32,
    #[serde(default = "default_tuple_budget")]
    pub tuple_budget: u64,
    #[serde(default)]
    pub grids: GridRanges,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub out_dir: PathBuf,
}

fn no_duplicates<T: PartialEq>(values: &[T]) -> bool {
    values
        .iter()
        .enumerate()
        .all(|(i, v)| !values[..i].contains(v))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |msg: String| Err(PipelineError::Config(msg));
        if self.kernels.is_empty() {
            return config("kernel list is empty".to_string());
        }
        if self.kernels.contains(&FeatureKind::NieWl) {
            return config("list wl in kernels and set nie: [true] instead of nie-wl".to_string());
        }
        if !no_duplicates(&self.kernels) {
            return config("kernel list has duplicates".to_string());
        }
        if self.skeletons.is_empty() || !no_duplicates(&self.skeletons) {
            return config("skeleton list must be non-empty and duplicate-free".to_string());
        }
        if self.tricks.is_empty() || !no_duplicates(&self.tricks) {
            return config("trick list must be non-empty and duplicate-free".to_string());
        }
        for trick in &self.tricks {
            if !matches!(trick.as_str(), "linear" | "poly" | "rbf") {
                return config(format!("unknown trick {trick:?} (linear, poly or rbf)"));
            }
        }
        if self.normalization.is_empty() || !no_duplicates(&self.normalization) {
            return config("normalization axis must be non-empty and duplicate-free".to_string());
        }
        if self.nie.is_empty() || !no_duplicates(&self.nie) {
            return config("nie axis must be non-empty and duplicate-free".to_string());
        }
        if self.nie.contains(&true) {
            if !self.kernels.contains(&FeatureKind::Wl) {
                return config("nie: [true] requires the wl kernel".to_string());
            }
            if self.iterations < 1 {
                return config("nie-wl needs iterations >= 1".to_string());
            }
        }
        if self.tuple_budget == 0 {
            return config("tuple budget must be at least 1".to_string());
        }
        if self.grids.alphas.is_empty()
            || self.grids.alphas.iter().any(|a| !a.is_finite() || *a <= 0.0)
        {
            return config("alpha grid must be non-empty and positive".to_string());
        }
        if self.grids.radixes.iter().any(|r| !r.is_finite() || *r <= 0.0) {
            return config("radix grid must be positive".to_string());
        }
        if self.grids.sigmas.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return config("rbf grid must be positive".to_string());
        }
        if self.grids.poly_power < 1 {
            return config("polynomial power must be at least 1".to_string());
        }
        if self.tricks.contains(&"poly".to_string()) && self.grids.radixes.is_empty() {
            return config("poly trick needs a non-empty radix grid".to_string());
        }
        if self.tricks.contains(&"rbf".to_string()) && self.grids.sigmas.is_empty() {
            return config("rbf trick needs a non-empty 2-sigma^2 grid".to_string());
        }
        match &self.dataset {
            DatasetSource::ErdosRenyi { train, valid, test, n, p } => {
                if *train == 0 || *valid == 0 || *test == 0 {
                    return config("every split needs at least one graph".to_string());
                }
                if *n == 0 {
                    return config("graphs need at least one vertex".to_string());
                }
                if !p.is_finite() || !(0.0..=1.0).contains(p) {
                    return config(format!("edge probability {p} outside [0, 1]"));
                }
            }
            DatasetSource::Regular { train, valid, test, n_min, n_max, degree } => {
                if *train == 0 || *valid == 0 || *test == 0 {
                    return config("every split needs at least one graph".to_string());
                }
                if n_min > n_max {
                    return config(format!("n_min {n_min} exceeds n_max {n_max}"));
                }
                let feasible =
                    (*n_min..=*n_max).any(|n| *degree < n && (n * *degree) % 2 == 0);
                if !feasible {
                    return config(format!(
                        "no {degree}-regular graph exists for any n in [{n_min}, {n_max}]"
                    ));
                }
            }
            DatasetSource::File { .. } => {}
        }
        Ok(())
    }

    /// The (kernel, nie, trick, normalized) cells this run evaluates.
    /// The nie axis applies to the wl kernel only.
    pub fn cells(&self) -> Vec<(FeatureKind, bool, String, bool)> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            let nie_axis: Vec<bool> = if kernel == FeatureKind::Wl {
                self.nie.clone()
            } else {
                vec![false]
            };
            for nie in nie_axis {
                for trick in &self.tricks {
                    for &normalized in &self.normalization {
                        out.push((kernel, nie, trick.clone(), normalized));
                    }
                }
            }
        }
        out
    }
}

fn effective_kind(kernel: FeatureKind, nie: bool) -> FeatureKind {
    if nie && kernel == FeatureKind::Wl {
        FeatureKind::NieWl
    } else {
        kernel
    }
}

struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(".lock");
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn short_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.as_bytes());
        hasher.update([0]);
    }
    hasher
        .finalize()
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Builds the configured synthetic dataset, or loads a dataset file.
/// Per-graph seeds are drawn from a stream seeded by `seed`, so the
/// result is a pure function of (source, seed).
pub fn generate_dataset(source: &DatasetSource, seed: u64) -> Result<Dataset, PipelineError> {
    match source {
        DatasetSource::ErdosRenyi { train, valid, test, n, p } => {
            let total = train + valid + test;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut graphs = Vec::with_capacity(total);
            for i in 0..total {
                let sub = rng.gen::<u64>();
                graphs.push(
                    generate_bidirected_erdos_renyi(*n, *p, sub)?.with_id(format!("er-{i:05}")),
                );
            }
            let splits = positional_splits(&graphs, *train, *valid, *test);
            Ok(Dataset::new(graphs, splits)?)
        }
        DatasetSource::Regular { train, valid, test, n_min, n_max, degree } => {
            let total = train + valid + test;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut graphs = Vec::with_capacity(total);
            for i in 0..total {
                let n = loop {
                    let candidate = rng.gen_range(*n_min..=*n_max);
                    if *degree < candidate && (candidate * degree) % 2 == 0 {
                        break candidate;
                    }
                };
                let sub = rng.gen::<u64>();
                graphs.push(
                    generate_random_regular(n, *degree, sub)?.with_id(format!("reg-{i:05}")),
                );
            }
            let splits = positional_splits(&graphs, *train, *valid, *test);
            Ok(Dataset::new(graphs, splits)?)
        }
        DatasetSource::File { path } => Ok(parse_dataset(&fs::read_to_string(path)?)?),
    }
}

fn positional_splits(
    graphs: &[Graph],
    train: usize,
    valid: usize,
    test: usize,
) -> BTreeMap<String, Vec<String>> {
    let ids: Vec<String> = graphs.iter().map(|g| g.id().to_string()).collect();
    let mut splits = BTreeMap::new();
    splits.insert("train".to_string(), ids[..train].to_vec());
    splits.insert("valid".to_string(), ids[train..train + valid].to_vec());
    splits.insert("test".to_string(), ids[train + valid..train + valid + test].to_vec());
    splits
}

#[derive(Serialize, Deserialize)]
struct PatternLine {
    id: String,
    skeleton: Skeleton,
    n: usize,
    vl: Vec<u32>,
    edges: Vec<(usize, usize, u32)>,
}

pub fn serialize_patterns(patterns: &[Pattern]) -> String {
    let mut out = String::new();
    for p in patterns {
        let line = PatternLine {
            id: p.id().to_string(),
            skeleton: p.skeleton(),
            n: p.graph().vertex_count(),
            vl: p.graph().vertex_labels().to_vec(),
            edges: p.graph().edges().to_vec(),
        };
        out.push_str(&serde_json::to_string(&line).expect("pattern line serializes"));
        out.push('\n');
    }
    out
}

pub fn parse_patterns(text: &str) -> Result<Vec<Pattern>, PipelineError> {
    let mut out = Vec::new();
    for raw in text.lines().filter(|l| !l.trim().is_empty()) {
        let line: PatternLine = serde_json::from_str(raw)?;
        let graph = Graph::new(line.id, line.n, line.vl, line.edges)?;
        out.push(Pattern::new(graph, line.skeleton)?);
    }
    Ok(out)
}

/// Featurizes all patterns then all graphs through one fresh interner,
/// in order, so ids and artifacts are reproducible across runs.
pub fn featurize_corpus(
    kind: FeatureKind,
    patterns: &[Pattern],
    graphs: &[Graph],
    iterations: u32,
    tuple_budget: u64,
) -> Result<Vec<(String, FeatureVector)>, FeaturizeError> {
    let interner = ColorInterner::new();
    let mut items = Vec::with_capacity(patterns.len() + graphs.len());
    for p in patterns {
        items.push((
            p.id().to_string(),
            featurize_graph(kind, p.graph(), iterations, tuple_budget, &interner)?,
        ));
    }
    for g in graphs {
        items.push((
            g.id().to_string(),
            featurize_graph(kind, g, iterations, tuple_budget, &interner)?,
        ));
    }
    Ok(items)
}

pub fn featurize_graph(
    kind: FeatureKind,
    g: &Graph,
    iterations: u32,
    tuple_budget: u64,
    interner: &ColorInterner,
) -> Result<FeatureVector, FeaturizeError> {
    match kind {
        FeatureKind::Wl => Ok(wl_histograms(g, iterations, interner)),
        FeatureKind::NieWl => {
            if iterations < 1 {
                return Err(FeaturizeError::IterationsRequired);
            }
            Ok(nie_wl_histograms(g, iterations, interner))
        }
        FeatureKind::Kwl(k) => kwl_histograms(g, k, iterations, tuple_budget, interner),
        FeatureKind::Sp => Ok(shortest_path_features(g, interner)),
        FeatureKind::Gr3 => Ok(graphlet3_features(g, interner)),
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    kind: FeatureKind,
    iterations: u32,
    q: usize,
    tuple_budget: u64,
}

#[derive(Serialize, Deserialize)]
struct FeatureLine {
    id: String,
    entries: BTreeMap<u32, u64>,
}

/// JSON-lines feature sidecar: a header line with (kind, iterations, q),
/// then one `{id, entries}` line per item, patterns first.
pub fn write_features(
    path: &Path,
    kind: FeatureKind,
    iterations: u32,
    q: usize,
    tuple_budget: u64,
    items: &[(String, FeatureVector)],
) -> Result<(), PipelineError> {
    let mut out = String::new();
    let header = FeatureHeader { kind, iterations, q, tuple_budget };
    out.push_str(&serde_json::to_string(&header)?);
    out.push('\n');
    for (id, v) in items {
        let line = FeatureLine {
            id: id.clone(),
            entries: v.entries.clone(),
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub struct FeatureFile {
    pub kind: FeatureKind,
    pub iterations: u32,
    pub q: usize,
    pub items: Vec<(String, FeatureVector)>,
}

pub fn read_features(path: &Path) -> Result<FeatureFile, PipelineError> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: FeatureHeader = serde_json::from_str(lines.next().ok_or_else(|| {
        PipelineError::Config(format!("feature file {} is empty", path.display()))
    })?)?;
    let mut items = Vec::new();
    for raw in lines {
        let line: FeatureLine = serde_json::from_str(raw)?;
        items.push((
            line.id,
            FeatureVector {
                kind: header.kind,
                iterations: header.iterations,
                entries: line.entries,
            },
        ));
    }
    Ok(FeatureFile {
        kind: header.kind,
        iterations: header.iterations,
        q: header.q,
        items,
    })
}

#[derive(Serialize, Deserialize)]
struct FailedStage {
    status: CellStatus,
    detail: String,
}

/// One trained pattern model inside a models file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedPattern {
    pub pattern: String,
    pub trick: TrickConfig,
    pub alpha: f64,
    pub valid_mse: f64,
    pub model: RidgeModel,
}

/// A models file: one grid-searched ridge model per pattern for one
/// (kernel, trick family, normalized) combination.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedCell {
    pub kernel: String,
    pub nie: bool,
    pub trick_family: String,
    pub normalized: bool,
    pub models: Vec<TrainedPattern>,
}

fn apply_trick(base: &GramMatrix, trick: &TrickConfig) -> Result<GramMatrix, GramError> {
    match trick {
        TrickConfig::Linear => Ok(base.clone()),
        TrickConfig::Poly { power, radix } => poly_transform(base, *power, *radix),
        TrickConfig::Rbf { sigma2 } => rbf_transform(base, *sigma2),
    }
}

/// Lazily transforms the working matrix for one grid trick, memoized so
/// every pattern of a cell shares the result.
fn transformed_at(
    cache: &mut [Option<Rc<GramMatrix>>],
    tricks: &[TrickConfig],
    working: &GramMatrix,
    idx: usize,
) -> Result<Rc<GramMatrix>, BuildFailure> {
    if cache[idx].is_none() {
        let m = apply_trick(working, &tricks[idx]).map_err(|e| BuildFailure::Nan(e.to_string()))?;
        cache[idx] = Some(Rc::new(m));
    }
    Ok(cache[idx].clone().expect("just filled"))
}

/// Row indices (within the gram's graph block) of a dataset split.
fn block_positions(
    gram: &GramMatrix,
    dataset: &Dataset,
    split: &str,
) -> Result<Vec<usize>, PipelineError> {
    let ids = dataset
        .split(split)
        .ok_or_else(|| PipelineError::MissingSplit(split.to_string()))?;
    if ids.is_empty() {
        return Err(PipelineError::Config(format!("split {split:?} is empty")));
    }
    let block: HashMap<&str, usize> = gram.row_ids()[gram.q()..]
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    ids.iter()
        .map(|id| {
            block
                .get(id.as_str())
                .copied()
                .ok_or_else(|| PipelineError::MissingGramRow(id.clone()))
        })
        .collect()
}

fn counts_for(
    table: &CountTable,
    pattern_id: &str,
    dataset: &Dataset,
    split: &str,
) -> Result<Vec<f64>, PipelineError> {
    let ids = dataset
        .split(split)
        .ok_or_else(|| PipelineError::MissingSplit(split.to_string()))?;
    ids.iter()
        .map(|id| {
            table
                .get(pattern_id, id)
                .map(|c| c as f64)
                .ok_or_else(|| PipelineError::MissingCount {
                    pattern: pattern_id.to_string(),
                    graph: id.clone(),
                })
        })
        .collect()
}

/// Assembles the (1 + n_train)^2 training kernel (pattern row first) and
/// the cross rows of `eval_pos` from one pattern's slices.
fn designs_for(
    m: &GramMatrix,
    pattern_row: usize,
    train_pos: &[usize],
    eval_pos: &[usize],
    train_row_ids: &[String],
) -> Result<PatternDesigns, BuildFailure> {
    let view = slice_pattern_view(m, pattern_row).map_err(|e| BuildFailure::Nan(e.to_string()))?;
    let d = view.d;
    let nt = train_pos.len() + 1;
    let mut k_train = vec![0.0; nt * nt];
    k_train[0] = view.self_value;
    for (i, &ti) in train_pos.iter().enumerate() {
        let v = view.cross[ti];
        k_train[(i + 1) * nt] = v;
        k_train[i + 1] = v;
        for (j, &tj) in train_pos.iter().enumerate() {
            k_train[(i + 1) * nt + (j + 1)] = view.graph_block[ti * d + tj];
        }
    }
    let valid_rows = eval_pos
        .iter()
        .map(|&vi| {
            let mut row = Vec::with_capacity(nt);
            row.push(view.cross[vi]);
            for &tj in train_pos {
                row.push(view.graph_block[vi * d + tj]);
            }
            row
        })
        .collect();
    Ok(PatternDesigns {
        n_train: nt,
        k_train,
        train_row_ids: train_row_ids.to_vec(),
        valid_rows,
    })
}

/// Result of grid-searching and evaluating every pattern of one cell.
pub struct CellResult {
    pub status: CellStatus,
    pub detail: Option<String>,
    pub outcomes: Vec<PatternOutcome>,
    pub models: Vec<Option<TrainedPattern>>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
}

/// Trains one ridge model per pattern on `base` (normalizing first when
/// asked), tuning (trick, alpha) on the valid split, and evaluates on
/// `eval_split`. The cell is `ok` only if every pattern succeeded; the
/// aggregate error covers the patterns that did.
#[allow(clippy::too_many_arguments)]
pub fn run_cell(
    base: &GramMatrix,
    normalized: bool,
    trick_family: &str,
    grids: &GridRanges,
    patterns: &[Pattern],
    table: &CountTable,
    dataset: &Dataset,
    eval_split: &str,
) -> Result<CellResult, PipelineError> {
    let prepared;
    let working = if normalized {
        match cosine_normalize(base) {
            Ok(m) => {
                prepared = m;
                &prepared
            }
            Err(e) => {
                return Ok(CellResult {
                    status: CellStatus::Nan,
                    detail: Some(e.to_string()),
                    outcomes: Vec::new(),
                    models: Vec::new(),
                    rmse: None,
                    mae: None,
                })
            }
        }
    } else {
        base
    };

    let train_pos = block_positions(working, dataset, "train")?;
    let valid_pos = block_positions(working, dataset, "valid")?;
    let eval_pos = block_positions(working, dataset, eval_split)?;
    let tricks = grids.tricks_for(trick_family);
    let mut cache: Vec<Option<Rc<GramMatrix>>> = vec![None; tricks.len()];

    let pattern_rows: HashMap<&str, usize> = working.row_ids()[..working.q()]
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();

    let mut outcomes = Vec::with_capacity(patterns.len());
    let mut models = Vec::with_capacity(patterns.len());
    let mut eval_pred = Vec::new();
    let mut eval_true = Vec::new();
    for pattern in patterns {
        let &pattern_row = pattern_rows
            .get(pattern.id())
            .ok_or_else(|| PipelineError::MissingGramRow(pattern.id().to_string()))?;
        let self_count = vf2_count(pattern.graph(), pattern.graph()) as f64;
        let mut train_y = vec![self_count];
        train_y.extend(counts_for(table, pattern.id(), dataset, "train")?);
        let valid_y = counts_for(table, pattern.id(), dataset, "valid")?;
        let eval_y = counts_for(table, pattern.id(), dataset, eval_split)?;
        let mut train_row_ids = vec![pattern.id().to_string()];
        train_row_ids.extend(dataset.split("train").expect("checked").iter().cloned());

        let mut builder = |trick: &TrickConfig| -> Result<PatternDesigns, BuildFailure> {
            let idx = tricks
                .iter()
                .position(|t| t == trick)
                .expect("trick comes from this grid");
            let m = transformed_at(&mut cache, &tricks, working, idx)?;
            designs_for(&m, pattern_row, &train_pos, &valid_pos, &train_row_ids)
        };

        let searched = grid_search(&mut builder, &train_y, &valid_y, &tricks, &grids.alphas);
        match searched {
            Err(GridSearchError::Exhausted { outcomes: configs }) => {
                let detail = configs
                    .iter()
                    .find_map(|o| o.detail.clone())
                    .unwrap_or_else(|| "all configurations failed".to_string());
                outcomes.push(PatternOutcome {
                    pattern: pattern.id().to_string(),
                    status: if configs.iter().any(|o| o.status == CellStatus::Oom) {
                        CellStatus::Oom
                    } else {
                        CellStatus::Nan
                    },
                    rmse: None,
                    mae: None,
                    alpha: None,
                    trick_param: None,
                    detail: Some(detail),
                });
                models.push(None);
            }
            Err(other) => {
                return Err(PipelineError::Config(other.to_string()));
            }
            Ok(result) => {
                let idx = tricks
                    .iter()
                    .position(|t| *t == result.trick)
                    .expect("selected trick is in the grid");
                let m = transformed_at(&mut cache, &tricks, working, idx).expect(
                    "the selected trick already transformed successfully during the search",
                );
                let eval_designs =
                    designs_for(&m, pattern_row, &train_pos, &eval_pos, &train_row_ids);
                match eval_designs {
                    Err(failure) => {
                        outcomes.push(PatternOutcome {
                            pattern: pattern.id().to_string(),
                            status: CellStatus::Nan,
                            rmse: None,
                            mae: None,
                            alpha: None,
                            trick_param: None,
                            detail: Some(
                                match failure {
                                    BuildFailure::Oom(d) | BuildFailure::Nan(d) => d,
                                },
                            ),
                        });
                        models.push(None);
                    }
                    Ok(designs) => {
                        let predictions = ridge_predict_batch(&result.model, &designs.valid_rows)
                            .expect("design rows match the model");
                        if predictions.iter().any(|p| !p.is_finite()) {
                            outcomes.push(PatternOutcome {
                                pattern: pattern.id().to_string(),
                                status: CellStatus::Nan,
                                rmse: None,
                                mae: None,
                                alpha: Some(result.alpha),
                                trick_param: result.trick.param(),
                                detail: Some("non-finite test prediction".to_string()),
                            });
                            models.push(None);
                        } else {
                            let m = metrics(&predictions, &eval_y)
                                .expect("split checked non-empty");
                            eval_pred.extend_from_slice(&predictions);
                            eval_true.extend_from_slice(&eval_y);
                            outcomes.push(PatternOutcome {
                                pattern: pattern.id().to_string(),
                                status: CellStatus::Ok,
                                rmse: Some(m.rmse),
                                mae: Some(m.mae),
                                alpha: Some(result.alpha),
                                trick_param: result.trick.param(),
                                detail: None,
                            });
                            models.push(Some(TrainedPattern {
                                pattern: pattern.id().to_string(),
                                trick: result.trick,
                                alpha: result.alpha,
                                valid_mse: result.valid_mse,
                                model: result.model,
                            }));
                        }
                    }
                }
            }
        }
    }

    let all_ok = outcomes.iter().all(|o| o.status == CellStatus::Ok);
    let aggregate = if eval_true.is_empty() {
        None
    } else {
        Some(metrics(&eval_pred, &eval_true).expect("non-empty aggregate"))
    };
    Ok(CellResult {
        status: if all_ok { CellStatus::Ok } else { CellStatus::Nan },
        detail: None,
        outcomes,
        models,
        rmse: aggregate.map(|m| m.rmse),
        mae: aggregate.map(|m| m.mae),
    })
}

/// Evaluates saved models on a split, re-deriving each pattern's trick
/// transform from the base matrix.
pub fn evaluate_trained(
    base: &GramMatrix,
    normalized: bool,
    trained: &[TrainedPattern],
    table: &CountTable,
    dataset: &Dataset,
    eval_split: &str,
) -> Result<(Vec<PatternOutcome>, Option<Metrics>), PipelineError> {
    let prepared;
    let working = if normalized {
        prepared = cosine_normalize(base)?;
        &prepared
    } else {
        base
    };
    let train_pos = block_positions(working, dataset, "train")?;
    let eval_pos = block_positions(working, dataset, eval_split)?;
    let pattern_rows: HashMap<&str, usize> = working.row_ids()[..working.q()]
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let mut outcomes = Vec::new();
    let mut all_pred = Vec::new();
    let mut all_true = Vec::new();
    for t in trained {
        let &pattern_row = pattern_rows
            .get(t.pattern.as_str())
            .ok_or_else(|| PipelineError::MissingGramRow(t.pattern.clone()))?;
        let transformed = apply_trick(working, &t.trick)?;
        let mut train_row_ids = vec![t.pattern.clone()];
        train_row_ids.extend(dataset.split("train").expect("checked").iter().cloned());
        let designs = designs_for(&transformed, pattern_row, &train_pos, &eval_pos, &train_row_ids)
            .map_err(|f| {
                PipelineError::Config(match f {
                    BuildFailure::Oom(d) | BuildFailure::Nan(d) => d,
                })
            })?;
        let eval_y = counts_for(table, &t.pattern, dataset, eval_split)?;
        let predictions = ridge_predict_batch(&t.model, &designs.valid_rows)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let m = metrics(&predictions, &eval_y).expect("split checked non-empty");
        all_pred.extend_from_slice(&predictions);
        all_true.extend_from_slice(&eval_y);
        outcomes.push(PatternOutcome {
            pattern: t.pattern.clone(),
            status: CellStatus::Ok,
            rmse: Some(m.rmse),
            mae: Some(m.mae),
            alpha: Some(t.alpha),
            trick_param: t.trick.param(),
            detail: None,
        });
    }
    let aggregate = if all_true.is_empty() {
        None
    } else {
        Some(metrics(&all_pred, &all_true).expect("non-empty aggregate"))
    };
    Ok((outcomes, aggregate))
}

/// The Zero and Avg constant baselines, aggregated over every
/// (pattern, graph) pair of the evaluation split.
pub fn baseline_rows(
    pattern_ids: &[String],
    table: &CountTable,
    dataset: &Dataset,
    eval_split: &str,
) -> Result<Vec<BaselineRow>, PipelineError> {
    if pattern_ids.is_empty() {
        return Ok(Vec::new());
    }
    let mut zero_pred = Vec::new();
    let mut avg_pred = Vec::new();
    let mut truth = Vec::new();
    for pattern in pattern_ids {
        let train_y = counts_for(table, pattern, dataset, "train")?;
        let eval_y = counts_for(table, pattern, dataset, eval_split)?;
        let avg = baseline_predict(BaselineKind::Avg, &train_y)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        let zero = baseline_predict(BaselineKind::Zero, &train_y)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        zero_pred.extend(std::iter::repeat_n(zero, eval_y.len()));
        avg_pred.extend(std::iter::repeat_n(avg, eval_y.len()));
        truth.extend_from_slice(&eval_y);
    }
    let zero = metrics(&zero_pred, &truth).expect("patterns non-empty");
    let avg = metrics(&avg_pred, &truth).expect("patterns non-empty");
    Ok(vec![
        BaselineRow {
            name: "zero".to_string(),
            rmse: zero.rmse,
            mae: zero.mae,
        },
        BaselineRow {
            name: "avg".to_string(),
            rmse: avg.rmse,
            mae: avg.mae,
        },
    ])
}

/// Plot-ready CSV: one row per cell, with failed cells emitted as zero
/// values plus their status so no failure information is lost.
pub fn emit_plot_data(report: &EvalReport) -> String {
    let mut out = String::from("kernel,trick,nie,normalized,rmse,mae,status\n");
    for cell in &report.cells {
        let (rmse, mae) = if cell.status == CellStatus::Ok {
            (cell.rmse.unwrap_or(0.0), cell.mae.unwrap_or(0.0))
        } else {
            (0.0, 0.0)
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            cell.kernel, cell.trick, cell.nie, cell.normalized, rmse, mae, cell.status
        ));
    }
    out
}

enum StageFeatures {
    Ready(Vec<(String, FeatureVector)>),
    Failed(String),
}

/// Runs the full pipeline for one configuration and writes every
/// artifact (dataset, patterns, counts, features, grams, report.json,
/// report.csv, plot.csv) under the output directory.
pub fn run_pipeline(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    cfg.validate()?;
    let _lock = DirLock::acquire(&cfg.out_dir)?;
    let out = &cfg.out_dir;

    // Stage 1: dataset.
    let dataset_key = format!("{}|{}", serde_json::to_string(&cfg.dataset)?, cfg.seed);
    let dataset_hash = short_hash(&[&dataset_key]);
    let dataset_path = out.join(format!("dataset-{dataset_hash}.jsonl"));
    let dataset = if dataset_path.exists() {
        log(&format!("dataset: reusing {}", dataset_path.display()));
        parse_dataset(&fs::read_to_string(&dataset_path)?)?
    } else {
        log("dataset: generating");
        let d = generate_dataset(&cfg.dataset, cfg.seed)?;
        fs::write(&dataset_path, serialize_dataset(&d))?;
        d
    };

    // Stage 2: ground truth.
    let skeleton_key = serde_json::to_string(&cfg.skeletons)?;
    let truth_hash = short_hash(&[&dataset_hash, &skeleton_key]);
    let patterns_path = out.join(format!("patterns-{truth_hash}.jsonl"));
    let counts_path = out.join(format!("counts-{truth_hash}.jsonl"));
    let (patterns, table) = if patterns_path.exists() && counts_path.exists() {
        log(&format!("counts: reusing {}", counts_path.display()));
        let patterns = parse_patterns(&fs::read_to_string(&patterns_path)?)?;
        let table = CountTable::from_records(&parse_counts(&fs::read_to_string(&counts_path)?)?);
        (patterns, table)
    } else {
        log("counts: building ground truth");
        let truth = build_ground_truth(&dataset, &cfg.skeletons);
        fs::write(&patterns_path, serialize_patterns(&truth.patterns))?;
        fs::write(&counts_path, serialize_counts(&truth.table.records()))?;
        (truth.patterns, truth.table)
    };
    log(&format!(
        "counts: {} patterns retained over {} graphs",
        patterns.len(),
        dataset.len()
    ));

    // Stage 3 + 4: features and base gram per needed kind.
    let cells = cfg.cells();
    let kinds: BTreeSet<FeatureKind> = cells
        .iter()
        .map(|(kernel, nie, _, _)| effective_kind(*kernel, *nie))
        .collect();
    let mut grams: BTreeMap<FeatureKind, Result<GramMatrix, String>> = BTreeMap::new();
    for &kind in &kinds {
        let feature_key = format!("{kind}|{}|{}", cfg.iterations, cfg.tuple_budget);
        let feature_hash = short_hash(&[&truth_hash, &feature_key]);
        let features_path = out.join(format!("features-{kind}-{feature_hash}.jsonl"));
        let failed_path = out.join(format!("features-{kind}-{feature_hash}.failed.json"));
        let staged = if features_path.exists() {
            log(&format!("featurize {kind}: reusing {}", features_path.display()));
            StageFeatures::Ready(read_features(&features_path)?.items)
        } else if failed_path.exists() {
            let failed: FailedStage = serde_json::from_str(&fs::read_to_string(&failed_path)?)?;
            log(&format!("featurize {kind}: reusing failure ({})", failed.detail));
            StageFeatures::Failed(failed.detail)
        } else {
            log(&format!("featurize {kind}: running"));
            match featurize_corpus(kind, &patterns, dataset.graphs(), cfg.iterations, cfg.tuple_budget)
            {
                Ok(items) => {
                    write_features(
                        &features_path,
                        kind,
                        cfg.iterations,
                        patterns.len(),
                        cfg.tuple_budget,
                        &items,
                    )?;
                    StageFeatures::Ready(items)
                }
                Err(e) => {
                    let failed = FailedStage {
                        status: CellStatus::Oom,
                        detail: e.to_string(),
                    };
                    fs::write(&failed_path, serde_json::to_string_pretty(&failed)?)?;
                    log(&format!("featurize {kind}: {e}"));
                    StageFeatures::Failed(failed.detail)
                }
            }
        };
        match staged {
            StageFeatures::Failed(detail) => {
                grams.insert(kind, Err(detail));
            }
            StageFeatures::Ready(items) => {
                let gram_path = out.join(format!("gram-{kind}-{feature_hash}.bin"));
                let gram = if gram_path.exists() {
                    log(&format!("gram {kind}: reusing {}", gram_path.display()));
                    read_gram(&gram_path)?
                } else {
                    log(&format!("gram {kind}: assembling"));
                    let g = build_joint_gram(&items, patterns.len())?;
                    write_gram(&gram_path, &g)?;
                    g
                };
                grams.insert(kind, Ok(gram));
            }
        }
    }

    // Stage 5: train and evaluate every cell on the test split.
    let mut report_cells = Vec::with_capacity(cells.len());
    for (kernel, nie, trick_family, normalized) in &cells {
        let kind = effective_kind(*kernel, *nie);
        log(&format!(
            "evaluate: kernel={kernel} nie={nie} trick={trick_family} normalized={normalized}"
        ));
        let cell = match grams.get(&kind).expect("kind staged above") {
            Err(detail) => ReportCell {
                kernel: kernel.to_string(),
                trick: trick_family.clone(),
                nie: *nie,
                normalized: *normalized,
                status: CellStatus::Oom,
                rmse: None,
                mae: None,
                patterns: Vec::new(),
                detail: Some(detail.clone()),
            },
            Ok(base) => {
                let result = run_cell(
                    base,
                    *normalized,
                    trick_family,
                    &cfg.grids,
                    &patterns,
                    &table,
                    &dataset,
                    "test",
                )?;
                ReportCell {
                    kernel: kernel.to_string(),
                    trick: trick_family.clone(),
                    nie: *nie,
                    normalized: *normalized,
                    status: result.status,
                    rmse: result.rmse,
                    mae: result.mae,
                    patterns: result.outcomes,
                    detail: result.detail,
                }
            }
        };
        report_cells.push(cell);
    }

    let pattern_ids: Vec<String> = patterns.iter().map(|p| p.id().to_string()).collect();
    let baselines = baseline_rows(&pattern_ids, &table, &dataset, "test")?;
    let report = EvalReport {
        seed: cfg.seed,
        split: "test".to_string(),
        dataset: DatasetSummary {
            graphs: dataset.len(),
            train: dataset.split("train").map_or(0, <[String]>::len),
            valid: dataset.split("valid").map_or(0, <[String]>::len),
            test: dataset.split("test").map_or(0, <[String]>::len),
        },
        patterns: pattern_ids,
        cells: report_cells,
        baselines,
    };

    // Stage 6: reports and plot data.
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    fs::write(out.join("report.csv"), report.to_csv())?;
    fs::write(out.join("plot.csv"), emit_plot_data(&report))?;
    log("done");
    Ok(report)
}
