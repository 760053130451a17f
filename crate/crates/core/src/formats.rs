//! JSON file formats shared between the library and the CLI.
//!
//! Diagram file:
//! ```json
//! {
//!   "vertices": [{"id": 0, "name": "Y", "role": "label"}, ...],
//!   "edges": [[1, 0], ...]
//! }
//! ```
//!
//! Model file: the diagram plus `"alpha": [[parent, child, a], ...]`,
//! optional `"perm": [[parent, child, [..]], ...]`,
//! `"dist": [[vertex, [p, ...]], ...]` for roots, and
//! `"combiner": [[vertex, "invertible" | {"lossy": {...}}], ...]`.
//! Vertex ids must be dense and in order.

use crate::bootstrap::ProxyClass;
use crate::dataset::{Column, ColumnData, Dataset, DatasetError};
use crate::dropout_scm::{Combiner, DropoutScm, EdgeParams, ScmError};
use crate::graph::{Dag, DistributionShiftDiagram, GraphError, VertexRole};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("file `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("vertex ids must be dense and sorted (0..n)")]
    NonDenseIds,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("csv file `{path}`: {message}")]
    Csv { path: String, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexSpec {
    pub id: usize,
    pub name: String,
    pub role: VertexRole,
}

/// On-disk form of a distribution shift diagram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DsdFile {
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<(usize, usize)>,
}

impl DsdFile {
    pub fn from_dsd(dsd: &DistributionShiftDiagram) -> Self {
        DsdFile {
            vertices: (0..dsd.dag().n())
                .map(|v| VertexSpec {
                    id: v,
                    name: dsd.dag().name(v).to_string(),
                    role: dsd.role(v),
                })
                .collect(),
            edges: dsd.dag().edges().to_vec(),
        }
    }

    pub fn into_dsd(self) -> Result<DistributionShiftDiagram, FormatError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if v.id != i {
                return Err(FormatError::NonDenseIds);
            }
        }
        let names = self.vertices.iter().map(|v| v.name.clone()).collect();
        let roles = self.vertices.iter().map(|v| v.role).collect();
        let dag = Dag::new(names, self.edges)?;
        Ok(DistributionShiftDiagram::new(dag, roles)?)
    }
}

/// On-disk form of a dropout model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScmFile {
    pub vertices: Vec<VertexSpec>,
    pub edges: Vec<(usize, usize)>,
    /// `[parent, child, alpha]` triples, one per edge.
    pub alpha: Vec<(usize, usize, f64)>,
    /// Optional per-edge symbol permutations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub perm: Vec<(usize, usize, Vec<usize>)>,
    /// Root distributions.
    pub dist: Vec<(usize, Vec<f64>)>,
    /// Non-root combiners; omitted vertices default to invertible.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub combiner: Vec<(usize, Combiner)>,
}

impl ScmFile {
    pub fn from_scm(scm: &DropoutScm) -> Self {
        let dsd = scm.dsd();
        let dag = dsd.dag();
        let mut alpha = Vec::new();
        let mut perm = Vec::new();
        for &(p, c) in dag.edges() {
            alpha.push((p, c, scm.alpha(p, c).expect("edge has params")));
            if let Some(sigma) = scm.edge_perm(p, c) {
                perm.push((p, c, sigma.to_vec()));
            }
        }
        let mut dist = Vec::new();
        let mut combiner = Vec::new();
        for v in 0..dag.n() {
            if let Some(d) = scm.root_dist(v) {
                dist.push((v, d.to_vec()));
            }
            if let Some(c) = scm.combiner(v) {
                if !matches!(c, Combiner::Invertible) {
                    combiner.push((v, c.clone()));
                }
            }
        }
        ScmFile {
            vertices: DsdFile::from_dsd(dsd).vertices,
            edges: dag.edges().to_vec(),
            alpha,
            perm,
            dist,
            combiner,
        }
    }

    pub fn into_scm(self) -> Result<DropoutScm, FormatError> {
        let perms: BTreeMap<(usize, usize), Vec<usize>> = self
            .perm
            .iter()
            .map(|(p, c, perm)| ((*p, *c), perm.clone()))
            .collect();
        let dsd = DsdFile {
            vertices: self.vertices,
            edges: self.edges,
        }
        .into_dsd()?;
        let edge_params = self
            .alpha
            .into_iter()
            .map(|(p, c, alpha)| {
                (
                    (p, c),
                    EdgeParams {
                        alpha,
                        perm: perms.get(&(p, c)).cloned(),
                    },
                )
            })
            .collect();
        Ok(DropoutScm::new(dsd, edge_params, self.dist, self.combiner)?)
    }
}

/// Seed file: proxy name to known class.
pub type SeedsFile = BTreeMap<String, ProxyClass>;

fn read_to_string(path: &Path) -> Result<String, FormatError> {
    std::fs::read_to_string(path).map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_dsd(path: &Path) -> Result<DistributionShiftDiagram, FormatError> {
    let file: DsdFile = serde_json::from_str(&read_to_string(path)?)?;
    file.into_dsd()
}

pub fn read_scm(path: &Path) -> Result<DropoutScm, FormatError> {
    let file: ScmFile = serde_json::from_str(&read_to_string(path)?)?;
    file.into_scm()
}

pub fn read_seeds(path: &Path) -> Result<SeedsFile, FormatError> {
    Ok(serde_json::from_str(&read_to_string(path)?)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), FormatError> {
    let body = serde_json::to_string_pretty(value)?;
    std::fs::write(path, body + "\n").map_err(|e| FormatError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Writes a dataset as CSV. Discrete columns serialize as integers, real
/// columns in shortest round-trip form.
pub fn write_csv(path: &Path, ds: &Dataset) -> Result<(), FormatError> {
    let to_err = |message: String| FormatError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut writer = csv::Writer::from_path(path).map_err(|e| to_err(e.to_string()))?;
    let names = ds.column_names();
    writer.write_record(&names).map_err(|e| to_err(e.to_string()))?;
    let columns: Vec<&Column> = names.iter().map(|n| ds.column(n).unwrap()).collect();
    for row in 0..ds.n_rows() {
        let record: Vec<String> = columns
            .iter()
            .map(|c| match &c.data {
                ColumnData::Discrete(v) => v[row].to_string(),
                ColumnData::Real(v) => {
                    let mut field = format!("{}", v[row]);
                    if field.ends_with(".0") {
                        field.truncate(field.len() - 2);
                    }
                    field
                }
            })
            .collect();
        writer.write_record(&record).map_err(|e| to_err(e.to_string()))?;
    }
    writer.flush().map_err(|e| to_err(e.to_string()))?;
    Ok(())
}

/// Reads a CSV into a dataset. Columns where every value parses as a
/// non-negative integer become discrete; otherwise real. Rows with missing or
/// unparseable cells in `required` columns (all columns when None) are
/// dropped, and the drop count returned.
pub fn read_csv(path: &Path, required: Option<&[&str]>) -> Result<(Dataset, usize), FormatError> {
    let to_err = |message: String| FormatError::Csv {
        path: path.display().to_string(),
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| to_err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| to_err(e.to_string()))?
        .iter()
        .map(|h| h.to_string())
        .collect();
    let required_idx: Vec<usize> = match required {
        Some(cols) => cols
            .iter()
            .map(|c| {
                headers
                    .iter()
                    .position(|h| h == c)
                    .ok_or_else(|| to_err(format!("missing column `{c}`")))
            })
            .collect::<Result<_, _>>()?,
        None => (0..headers.len()).collect(),
    };

    let mut raw: Vec<Vec<Option<f64>>> = vec![Vec::new(); headers.len()];
    let mut dropped = 0usize;
    'rows: for record in reader.records() {
        let record = record.map_err(|e| to_err(e.to_string()))?;
        let parsed: Vec<Option<f64>> = record
            .iter()
            .map(|field| {
                let field = field.trim();
                if field.is_empty() {
                    None
                } else {
                    field.parse::<f64>().ok()
                }
            })
            .collect();
        for &idx in &required_idx {
            if parsed.get(idx).copied().flatten().is_none() {
                dropped += 1;
                continue 'rows;
            }
        }
        for (col, v) in raw.iter_mut().zip(parsed) {
            col.push(v);
        }
    }

    let mut ds = Dataset::new();
    for (name, col) in headers.iter().zip(raw) {
        let complete: Vec<f64> = col.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let discrete_ok = col.iter().all(|v| {
            v.is_some_and(|x| x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f64)
        });
        if discrete_ok {
            ds = ds.with_discrete_column(
                name,
                complete.iter().map(|&x| x as u32).collect(),
            )?;
        } else if col.iter().all(Option::is_some) {
            ds = ds.with_real_column(name, complete)?;
        } else {
            // Non-required column with holes: keep only if fully numeric.
            continue;
        }
    }
    Ok((ds, dropped))
}

/// Machine-readable error envelope emitted by the CLI on failure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorEnvelope {
    pub error: ErrorBody,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorBody {
    /// Process exit code: 1 internal, 2 user/config.
    pub code: i32,
    pub kind: String,
    pub message: String,
}

impl ErrorEnvelope {
    pub fn user(message: impl Into<String>) -> Self {
        ErrorEnvelope {
            error: ErrorBody {
                code: 2,
                kind: "user".to_string(),
                message: message.into(),
            },
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ErrorEnvelope {
            error: ErrorBody {
                code: 1,
                kind: "internal".to_string(),
                message: message.into(),
            },
        }
    }
}
