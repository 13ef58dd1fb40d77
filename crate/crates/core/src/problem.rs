//! JSON problem files: `{"B0": [[..]], "B1": [[..]], "P": [[..]]?, "label"?, "metadata"?}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GuasError, Result};
use crate::linalg::Mat;
use crate::matrix_core::MatrixPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "B0")]
    pub b0: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<f64>>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
}

/// Row-major nested vectors to a matrix; ragged input is a parse error.
pub fn rows_to_mat(name: &str, rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    for (i, r) in rows.iter().enumerate() {
        if r.len() != m {
            return Err(GuasError::Parse(format!(
                "{name}: row {i} has {} entries, row 0 has {m}",
                r.len()
            )));
        }
        if let Some(v) = r.iter().find(|v| !v.is_finite()) {
            return Err(GuasError::Parse(format!("{name}: non-finite entry {v} in row {i}")));
        }
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ProblemFile {
    pub fn from_pair(pair: &MatrixPair, label: Option<String>) -> Self {
        ProblemFile {
            b0: mat_to_rows(pair.b0()),
            b1: mat_to_rows(pair.b1()),
            p: pair.lyapunov().map(mat_to_rows),
            label,
            metadata: None,
        }
    }

    /// Validates shapes and `P` exactly as [`MatrixPair::new`] does.
    pub fn to_pair(&self) -> Result<MatrixPair> {
        let b0 = rows_to_mat("B0", &self.b0)?;
        let b1 = rows_to_mat("B1", &self.b1)?;
        let p = self.p.as_deref().map(|p| rows_to_mat("P", p)).transpose()?;
        MatrixPair::new(b0, b1, p)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| GuasError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json_string()? + "\n")
            .map_err(|e| GuasError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}
