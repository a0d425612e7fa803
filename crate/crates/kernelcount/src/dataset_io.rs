//! JSON-lines file formats for datasets and subgraph-count tables.
//!
//! A dataset file holds one graph per line:
//! `{"id": "g0", "n": 3, "vl": [0,0,0], "edges": [[0,1,0],[1,2,0]]}`
//! optionally followed by a final
//! `{"splits": {"train": ["g0"], ...}}` line. A counts file holds
//! `{"pattern": "...", "graph": "...", "count": 6}` records.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::graph::{Dataset, DatasetError, Graph, GraphError, LabelId};

#[derive(Debug, Error)]
pub enum DatasetParseError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    InvalidGraph {
        line: usize,
        #[source]
        source: GraphError,
    },
    #[error("line {line}: splits line must be the final line")]
    SplitsNotLast { line: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Serialize, Deserialize)]
struct GraphLine {
    id: String,
    n: usize,
    vl: Vec<LabelId>,
    edges: Vec<(usize, usize, LabelId)>,
}

#[derive(Serialize, Deserialize)]
struct SplitsLine {
    splits: BTreeMap<String, Vec<String>>,
}

/// Parses the JSON-lines dataset format. Line order is preserved.
pub fn parse_dataset(text: &str) -> Result<Dataset, DatasetParseError> {
    let mut graphs = Vec::new();
    let mut splits = BTreeMap::new();
    let mut splits_line: Option<usize> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        if let Some(prev) = splits_line {
            return Err(DatasetParseError::SplitsNotLast { line: prev });
        }
        let value: serde_json::Value =
            serde_json::from_str(raw).map_err(|e| DatasetParseError::Malformed {
                line,
                message: e.to_string(),
            })?;
        if value.get("splits").is_some() {
            let parsed: SplitsLine =
                serde_json::from_value(value).map_err(|e| DatasetParseError::Malformed {
                    line,
                    message: e.to_string(),
                })?;
            splits = parsed.splits;
            splits_line = Some(line);
        } else {
            let parsed: GraphLine =
                serde_json::from_value(value).map_err(|e| DatasetParseError::Malformed {
                    line,
                    message: e.to_string(),
                })?;
            let graph = Graph::new(parsed.id, parsed.n, parsed.vl, parsed.edges)
                .map_err(|source| DatasetParseError::InvalidGraph { line, source })?;
            graphs.push(graph);
        }
    }
    Ok(Dataset::new(graphs, splits)?)
}

/// Inverse of [`parse_dataset`]: `parse_dataset(serialize_dataset(d)) == d`.
pub fn serialize_dataset(d: &Dataset) -> String {
    let mut out = String::new();
    for g in d.graphs() {
        let line = GraphLine {
            id: g.id().to_string(),
            n: g.vertex_count(),
            vl: g.vertex_labels().to_vec(),
            edges: g.edges().to_vec(),
        };
        out.push_str(&serde_json::to_string(&line).expect("graph line serializes"));
        out.push('\n');
    }
    if !d.splits().is_empty() {
        let line = SplitsLine {
            splits: d.splits().clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("splits line serializes"));
        out.push('\n');
    }
    out
}

/// One exact count for a (pattern, graph) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRecord {
    pub pattern: String,
    pub graph: String,
    pub count: u64,
}

pub fn parse_counts(text: &str) -> Result<Vec<CountRecord>, DatasetParseError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let record: CountRecord =
            serde_json::from_str(raw).map_err(|e| DatasetParseError::Malformed {
                line: idx + 1,
                message: e.to_string(),
            })?;
        out.push(record);
    }
    Ok(out)
}

pub fn serialize_counts<'a>(records: impl IntoIterator<Item = &'a CountRecord>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("count record serializes"));
        out.push('\n');
    }
    out
}
