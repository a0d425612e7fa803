//! Joint Gram-matrix assembly, per-pattern slicing, and the kernel
//! tricks applied to it.
//!
//! The matrix is built once over Q patterns followed by D graphs; the
//! D x D graph block is shared by every pattern and the per-pattern rows
//! are recovered by slicing. Polynomial and Gaussian tricks, and cosine
//! normalization, are elementwise transforms of the full joint matrix.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::wl::{dot_kernel, FeatureVector};

#[derive(Debug, Error)]
pub enum GramError {
    #[error("feature vectors mix kinds {expected} and {found} (row {row})")]
    MixedKinds {
        expected: String,
        found: String,
        row: usize,
    },
    #[error("feature vectors mix iteration counts {expected} and {found} (row {row})")]
    MixedIterations {
        expected: u32,
        found: u32,
        row: usize,
    },
    #[error("{q} patterns exceed the {rows} provided feature vectors")]
    PatternCountExceedsRows { q: usize, rows: usize },
    #[error("pattern index {index} out of range for {q} patterns")]
    PatternIndexOutOfRange { index: usize, q: usize },
    #[error("polynomial power must be at least 1")]
    PowerTooSmall,
    #[error("radix factor must be positive and finite, got {0}")]
    BadRadix(f64),
    #[error("rbf width 2*sigma^2 must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("{trick} expects an untransformed matrix, got {found}")]
    AlreadyTransformed { trick: String, found: String },
    #[error("degenerate row {row_id} (index {index}): self-kernel is {value}, cannot normalize")]
    DegenerateRow {
        row_id: String,
        index: usize,
        value: f64,
    },
}

/// Provenance of a Gram matrix: which featurizer produced it and which
/// transforms have been applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramMeta {
    pub kind: String,
    pub iterations: u32,
    pub trick: String,
    pub trick_params: BTreeMap<String, f64>,
    pub normalized: bool,
    /// Cells that overflowed to a non-finite value and were stored as NaN.
    pub nan_cells: u64,
}

/// Dense symmetric matrix of kernel values over Q patterns + D graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    q: usize,
    dim: usize,
    values: Vec<f64>,
    row_ids: Vec<String>,
    meta: GramMeta,
}

impl GramMatrix {
    pub fn q(&self) -> usize {
        self.q
    }

    /// Number of graph rows.
    pub fn d(&self) -> usize {
        self.dim - self.q
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.dim + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn meta(&self) -> &GramMeta {
        &self.meta
    }

    /// Exact elementwise symmetry check.
    pub fn is_symmetric(&self) -> bool {
        for i in 0..self.dim {
            for j in (i + 1)..self.dim {
                let a = self.get(i, j);
                let b = self.get(j, i);
                if a != b && !(a.is_nan() && b.is_nan()) {
                    return false;
                }
            }
        }
        true
    }

    fn map_cells(
        &self,
        meta: GramMeta,
        f: impl Fn(usize, usize, f64) -> f64 + Sync,
    ) -> (GramMatrix, u64) {
        let dim = self.dim;
        let values: Vec<f64> = (0..dim * dim)
            .into_par_iter()
            .map(|idx| {
                let (i, j) = (idx / dim, idx % dim);
                let v = f(i, j, self.values[idx]);
                if v.is_finite() {
                    v
                } else {
                    f64::NAN
                }
            })
            .collect();
        let nan_cells = values.iter().filter(|v| v.is_nan()).count() as u64;
        let mut meta = meta;
        meta.nan_cells = nan_cells;
        (
            GramMatrix {
                q: self.q,
                dim,
                values,
                row_ids: self.row_ids.clone(),
                meta,
            },
            nan_cells,
        )
    }
}

/// Builds the joint (Q+D) x (Q+D) matrix of pairwise histogram dot
/// products; the first `q` vectors are patterns. Each unordered pair is
/// computed once and mirrored.
pub fn build_joint_gram(
    items: &[(String, FeatureVector)],
    q: usize,
) -> Result<GramMatrix, GramError> {
    if q > items.len() {
        return Err(GramError::PatternCountExceedsRows { q, rows: items.len() });
    }
    let dim = items.len();
    let (kind, iterations) = items
        .first()
        .map(|(_, v)| (v.kind, v.iterations))
        .unwrap_or((crate::wl::FeatureKind::Wl, 0));
    for (row, (_, v)) in items.iter().enumerate() {
        if v.kind != kind {
            return Err(GramError::MixedKinds {
                expected: kind.to_string(),
                found: v.kind.to_string(),
                row,
            });
        }
        if v.iterations != iterations {
            return Err(GramError::MixedIterations {
                expected: iterations,
                found: v.iterations,
                row,
            });
        }
    }
    let upper: Vec<Vec<f64>> = (0..dim)
        .into_par_iter()
        .map(|i| {
            (i..dim)
                .map(|j| dot_kernel(&items[i].1, &items[j].1).expect("kinds checked"))
                .collect()
        })
        .collect();
    let mut values = vec![0.0; dim * dim];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            values[i * dim + j] = v;
            values[j * dim + i] = v;
        }
    }
    Ok(GramMatrix {
        q,
        dim,
        values,
        row_ids: items.iter().map(|(id, _)| id.clone()).collect(),
        meta: GramMeta {
            kind: kind.to_string(),
            iterations,
            trick: "linear".to_string(),
            trick_params: BTreeMap::new(),
            normalized: false,
            nan_cells: 0,
        },
    })
}

/// The slices of the joint matrix one pattern's regression needs: the
/// shared D x D graph block, the pattern-to-graph row, and the pattern's
/// self-kernel. Equal to building a (1+D) x (1+D) matrix for the pattern
/// alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternView {
    pub d: usize,
    pub graph_block: Vec<f64>,
    pub cross: Vec<f64>,
    pub self_value: f64,
}

pub fn slice_pattern_view(k: &GramMatrix, index: usize) -> Result<PatternView, GramError> {
    if index >= k.q {
        return Err(GramError::PatternIndexOutOfRange { index, q: k.q });
    }
    let d = k.d();
    let mut graph_block = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            graph_block.push(k.get(k.q + i, k.q + j));
        }
    }
    let cross = (0..d).map(|j| k.get(index, k.q + j)).collect();
    Ok(PatternView {
        d,
        graph_block,
        cross,
        self_value: k.get(index, index),
    })
}

/// Polynomial trick: elementwise (r*K + 1)^p. Cells that overflow to a
/// non-finite value become NaN and are tallied in the metadata.
pub fn poly_transform(k: &GramMatrix, power: u32, radix: f64) -> Result<GramMatrix, GramError> {
    if power < 1 {
        return Err(GramError::PowerTooSmall);
    }
    if !radix.is_finite() || radix <= 0.0 {
        return Err(GramError::BadRadix(radix));
    }
    if k.meta.trick != "linear" {
        return Err(GramError::AlreadyTransformed {
            trick: "poly".to_string(),
            found: k.meta.trick.clone(),
        });
    }
    let mut meta = k.meta.clone();
    meta.trick = "poly".to_string();
    meta.trick_params = BTreeMap::from([("p".to_string(), power as f64), ("r".to_string(), radix)]);
    let (out, _) = k.map_cells(meta, |_, _, v| (radix * v + 1.0).powi(power as i32));
    Ok(out)
}

/// Gaussian trick: elementwise exp(-(K_ii - 2K_ij + K_jj) / sigma2),
/// where `sigma2` is the 2*sigma^2 hyperparameter. Requires the
/// untransformed matrix so the diagonal still holds self-kernels.
pub fn rbf_transform(k: &GramMatrix, sigma2: f64) -> Result<GramMatrix, GramError> {
    if !sigma2.is_finite() || sigma2 <= 0.0 {
        return Err(GramError::BadSigma(sigma2));
    }
    if k.meta.trick != "linear" {
        return Err(GramError::AlreadyTransformed {
            trick: "rbf".to_string(),
            found: k.meta.trick.clone(),
        });
    }
    let diag: Vec<f64> = (0..k.dim).map(|i| k.get(i, i)).collect();
    let mut meta = k.meta.clone();
    meta.trick = "rbf".to_string();
    meta.trick_params = BTreeMap::from([("sigma2".to_string(), sigma2)]);
    // (diag[i] + diag[j]) groups first so the cell value is bit-identical
    // for (i, j) and (j, i).
    let (out, _) = k.map_cells(meta, |i, j, v| (-((diag[i] + diag[j]) - 2.0 * v) / sigma2).exp());
    Ok(out)
}

/// Cosine normalization: K_ij / sqrt(K_ii * K_jj). Fails on a row whose
/// self-kernel is not positive.
pub fn cosine_normalize(k: &GramMatrix) -> Result<GramMatrix, GramError> {
    let diag: Vec<f64> = (0..k.dim).map(|i| k.get(i, i)).collect();
    for (index, &v) in diag.iter().enumerate() {
        if v.is_nan() || v <= 0.0 {
            return Err(GramError::DegenerateRow {
                row_id: k.row_ids[index].clone(),
                index,
                value: v,
            });
        }
    }
    let mut meta = k.meta.clone();
    meta.normalized = true;
    let (out, _) = k.map_cells(meta, |i, j, v| {
        if i == j {
            1.0
        } else {
            v / (diag[i] * diag[j]).sqrt()
        }
    });
    Ok(out)
}

#[derive(Debug, Error)]
pub enum GramIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a gram matrix file (bad magic)")]
    BadMagic,
    #[error("expected {expected} matrix values, file holds {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("metadata sidecar: {0}")]
    Meta(#[from] serde_json::Error),
    #[error("metadata lists {ids} row ids for a {dim}-row matrix")]
    RowIdMismatch { ids: usize, dim: usize },
}

const GRAM_MAGIC: &[u8; 8] = b"GKGRAM01";

#[derive(Serialize, Deserialize)]
struct GramSidecar {
    row_ids: Vec<String>,
    meta: GramMeta,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    std::path::PathBuf::from(s)
}

/// Writes the matrix as `magic | q | d | meta_len | meta JSON (kernel
/// kind + trick params) | row-major f64 LE`, plus a JSON sidecar at
/// `<path>.meta.json` carrying the row ids and a metadata copy.
pub fn write_gram(path: &Path, k: &GramMatrix) -> Result<(), GramIoError> {
    let meta_json = serde_json::to_vec(&k.meta)?;
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    file.write_all(GRAM_MAGIC)?;
    file.write_all(&(k.q as u64).to_le_bytes())?;
    file.write_all(&(k.d() as u64).to_le_bytes())?;
    file.write_all(&(meta_json.len() as u32).to_le_bytes())?;
    file.write_all(&meta_json)?;
    for v in &k.values {
        file.write_all(&v.to_le_bytes())?;
    }
    file.flush()?;
    let sidecar = GramSidecar {
        row_ids: k.row_ids.clone(),
        meta: k.meta.clone(),
    };
    fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}

pub fn read_gram(path: &Path) -> Result<GramMatrix, GramIoError> {
    let mut file = std::io::BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != GRAM_MAGIC {
        return Err(GramIoError::BadMagic);
    }
    let mut word = [0u8; 8];
    file.read_exact(&mut word)?;
    let q = u64::from_le_bytes(word) as usize;
    file.read_exact(&mut word)?;
    let d = u64::from_le_bytes(word) as usize;
    let mut len = [0u8; 4];
    file.read_exact(&mut len)?;
    let mut meta_json = vec![0u8; u32::from_le_bytes(len) as usize];
    file.read_exact(&mut meta_json)?;
    let meta: GramMeta = serde_json::from_slice(&meta_json)?;
    let dim = q + d;
    let mut body = Vec::new();
    file.read_to_end(&mut body)?;
    if body.len() != dim * dim * 8 {
        return Err(GramIoError::SizeMismatch {
            expected: dim * dim * 8,
            got: body.len(),
        });
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let sidecar: GramSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    if sidecar.row_ids.len() != dim {
        return Err(GramIoError::RowIdMismatch {
            ids: sidecar.row_ids.len(),
            dim,
        });
    }
    Ok(GramMatrix {
        q,
        dim,
        values,
        row_ids: sidecar.row_ids,
        meta,
    })
}
